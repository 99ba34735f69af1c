use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};

use crate::diffcore::{
    conv, conv1d_forward, dense, dense_forward, dense_frozen, relu, Activation, NumArray, ParamStore, Tape, Var,
    CONV_WIDTH,
};
use crate::flow::FlowMatrix;
use crate::rng::Rng;
use crate::{Error, Result};

pub const NOISE_DIM: usize = 16;
/// Two width-5 convolutions need at least this many intervals.
pub const MIN_BINS: usize = 2 * (CONV_WIDTH - 1) + 1;

/// Per-route convolution stack followed by a dense read-out to one score.
#[derive(Clone, Debug)]
pub struct CriticNet {
    pub params: ParamStore,
    routes: usize,
    bins: usize,
}

impl CriticNet {
    pub fn new(routes: usize, bins: usize, rng: &mut Rng) -> Result<Self> {
        check_layout(routes, bins)?;
        let mut params = ParamStore::new();
        params.init_conv("critic.c1", CONV_WIDTH, rng);
        params.init_conv("critic.c2", CONV_WIDTH, rng);
        params.init_dense("critic.out", routes * embed_width(bins), 1, rng);
        Ok(CriticNet { params, routes, bins })
    }

    pub fn routes(&self) -> usize {
        self.routes
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Scores of a batch of scaled `[routes, bins]` matrices.
    pub fn scores(&self, batch: &[NumArray]) -> Result<Vec<f64>> {
        batch.iter().map(|v| critic_forward(self, v)).collect()
    }

    /// Records scores for a stacked `[n * routes, bins]` input, shape `[n]`.
    pub(crate) fn record(&self, tape: &mut Tape, x: Var, n: usize, frozen: bool) -> Result<Var> {
        let h = conv(tape, &self.params, "critic.c1", x, frozen)?;
        let h = conv(tape, &self.params, "critic.c2", h, frozen)?;
        let e = tape.reshape(h, &[n, self.routes * embed_width(self.bins)])?;
        let o = if frozen {
            dense_frozen(tape, &self.params, "critic.out", e, Activation::Identity)?
        } else {
            dense(tape, &self.params, "critic.out", e, Activation::Identity)?
        };
        tape.reshape(o, &[n])
    }

    pub(crate) fn check_input(&self, v: &NumArray) -> Result<()> {
        if v.shape() != [self.routes, self.bins] {
            return Err(Error::shape(format!(
                "critic expects a [{}, {}] flow, got {:?}",
                self.routes,
                self.bins,
                v.shape()
            )));
        }
        Ok(())
    }
}

/// Score of one scaled `[routes, bins]` flow.
pub fn critic_forward(critic: &CriticNet, v: &NumArray) -> Result<f64> {
    critic.check_input(v)?;
    let h = conv1d_forward(&critic.params, "critic.c1", v)?;
    let h = conv1d_forward(&critic.params, "critic.c2", &h)?;
    let e = NumArray::vector(h.into_data());
    Ok(dense_forward(&critic.params, "critic.out", &e)?.data()[0])
}

/// Route names, interval length and count scale shared by generated flows.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlowLayout {
    pub routes: Vec<Vec<String>>,
    pub bins: usize,
    pub interval: u64,
    /// Vehicles per interval that map to 1.0 in network space.
    pub cap: f64,
}

impl FlowLayout {
    pub fn of(flow: &FlowMatrix, cap: f64) -> Self {
        FlowLayout {
            routes: flow.routes().to_vec(),
            bins: flow.bins(),
            interval: flow.interval(),
            cap,
        }
    }

    /// Counts divided by the cap, as a `[routes, bins]` matrix.
    pub fn scale(&self, flow: &FlowMatrix) -> Result<NumArray> {
        if flow.num_routes() != self.routes.len() || flow.bins() != self.bins {
            return Err(Error::shape("flow does not match the generator layout"));
        }
        let data = flow.as_reals().into_iter().map(|x| x / self.cap).collect();
        NumArray::matrix(self.routes.len(), self.bins, data)
    }

    /// Rescales, clamps negatives to zero and rounds to whole vehicles.
    pub fn to_flow(&self, scaled: &NumArray) -> Result<FlowMatrix> {
        let counts = (0..self.routes.len())
            .map(|r| {
                scaled
                    .row(r)
                    .iter()
                    .map(|&x| (x * self.cap).max(0.0).round() as u64)
                    .collect()
            })
            .collect();
        FlowMatrix::new(counts, self.routes.clone(), self.interval)
    }
}

/// Noise → two ReLU layers → one scaled count per (route, interval).
#[derive(Clone, Debug)]
pub struct GeneratorNet {
    pub params: ParamStore,
    layout: FlowLayout,
}

impl GeneratorNet {
    pub fn new(layout: FlowLayout, hidden: usize, rng: &mut Rng) -> Result<Self> {
        check_layout(layout.routes.len(), layout.bins)?;
        if hidden == 0 {
            return Err(Error::invalid("generator hidden width must be positive"));
        }
        if !(layout.cap > 0.0) {
            return Err(Error::invalid("count cap must be positive"));
        }
        let mut params = ParamStore::new();
        params.init_dense("gen.h1", NOISE_DIM, hidden, rng);
        params.init_dense("gen.h2", hidden, hidden, rng);
        params.init_dense("gen.out", hidden, layout.routes.len() * layout.bins, rng);
        Ok(GeneratorNet { params, layout })
    }

    pub fn from_params(params: ParamStore, layout: FlowLayout) -> Result<Self> {
        check_layout(layout.routes.len(), layout.bins)?;
        let out = params.get("gen.out.w")?;
        if out.shape()[0] != layout.routes.len() * layout.bins || params.get("gen.h1.w")?.shape()[1] != NOISE_DIM {
            return Err(Error::shape("generator parameters do not match the flow layout"));
        }
        Ok(GeneratorNet { params, layout })
    }

    pub fn layout(&self) -> &FlowLayout {
        &self.layout
    }

    /// Writes the parameters to `path` and the layout to `path` + `.layout.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(path)?;
        let side = layout_path(path);
        let text = serde_json::to_string_pretty(&self.layout).expect("layout serializes");
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let params = ParamStore::load(path)?;
        let side = layout_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let layout =
            serde_json::from_str(&text).map_err(|e| Error::parse(side.display().to_string(), e.to_string()))?;
        Self::from_params(params, layout)
    }

    /// `[n, NOISE_DIM]` standard-normal noise.
    pub fn noise(n: usize, rng: &mut Rng) -> NumArray {
        let data = (0..n * NOISE_DIM).map(|_| StandardNormal.sample(rng)).collect();
        NumArray::new(vec![n, NOISE_DIM], data).expect("noise shape")
    }

    /// Scaled `[routes, bins]` outputs, one per noise row.
    pub fn generate(&self, z: &NumArray) -> Result<Vec<NumArray>> {
        let h = dense_forward(&self.params, "gen.h1", z)?.map(relu);
        let h = dense_forward(&self.params, "gen.h2", &h)?.map(relu);
        let out = dense_forward(&self.params, "gen.out", &h)?;
        let (r, t) = (self.layout.routes.len(), self.layout.bins);
        (0..out.rows())
            .map(|i| NumArray::matrix(r, t, out.row(i).to_vec()))
            .collect()
    }

    /// Records generation, returning `[n * routes, bins]`.
    pub(crate) fn record(&self, tape: &mut Tape, z: &NumArray) -> Result<Var> {
        let n = z.rows();
        let x = tape.constant(z.clone());
        let h = dense(tape, &self.params, "gen.h1", x, Activation::Relu)?;
        let h = dense(tape, &self.params, "gen.h2", h, Activation::Relu)?;
        let o = dense(tape, &self.params, "gen.out", h, Activation::Identity)?;
        tape.reshape(o, &[n * self.layout.routes.len(), self.layout.bins])
    }
}

pub(crate) fn embed_width(bins: usize) -> usize {
    bins - 2 * (CONV_WIDTH - 1)
}

fn check_layout(routes: usize, bins: usize) -> Result<()> {
    if routes == 0 {
        return Err(Error::invalid("flows need at least one route"));
    }
    if bins < MIN_BINS {
        return Err(Error::invalid(format!(
            "flows need at least {MIN_BINS} intervals for the critic, got {bins}"
        )));
    }
    Ok(())
}

/// Stacks `[routes, bins]` matrices into `[n * routes, bins]`.
pub(crate) fn stack(batch: &[NumArray]) -> Result<NumArray> {
    let first = batch.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let (r, t) = (first.rows(), first.cols());
    let mut data = Vec::with_capacity(batch.len() * r * t);
    for m in batch {
        if m.shape() != first.shape() {
            return Err(Error::shape("batch members differ in shape"));
        }
        data.extend_from_slice(m.data());
    }
    NumArray::matrix(batch.len() * r, t, data)
}

fn layout_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".layout.json");
    PathBuf::from(name)
}
