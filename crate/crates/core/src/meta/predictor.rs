use super::kmeans::nearest;
use crate::agent::argmax;
use crate::diffcore::{dense, dense_forward, relu, Activation, Grads, NumArray, Optimizer, ParamStore, Tape};
use crate::rng::Rng;
use crate::{Error, Result};

pub const PREDICTOR_HIDDEN: usize = 32;

/// Maps experience features to cluster scores.
#[derive(Clone, Debug)]
pub struct PredictorNet {
    pub params: ParamStore,
    input_dim: usize,
    clusters: usize,
}

impl PredictorNet {
    pub fn new(input_dim: usize, clusters: usize, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || clusters == 0 {
            return Err(Error::invalid("predictor needs inputs and at least one cluster"));
        }
        let mut params = ParamStore::new();
        params.init_dense("pred.h1", input_dim, PREDICTOR_HIDDEN, rng);
        params.init_dense("pred.out", PREDICTOR_HIDDEN, clusters, rng);
        Ok(PredictorNet {
            params,
            input_dim,
            clusters,
        })
    }

    pub fn from_params(params: ParamStore) -> Result<Self> {
        let input_dim = params.get("pred.h1.w")?.shape()[1];
        let clusters = params.get("pred.out.w")?.shape()[0];
        Ok(PredictorNet {
            params,
            input_dim,
            clusters,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "predictor expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let h = dense_forward(&self.params, "pred.h1", &NumArray::vector(x.to_vec()))?.map(relu);
        Ok(dense_forward(&self.params, "pred.out", &h)?.into_data())
    }
}

/// Highest-scoring cluster, lowest index on ties.
pub fn predict_cluster(pred: &PredictorNet, x: &[f64]) -> Result<usize> {
    Ok(argmax(&pred.scores(x)?))
}

/// Mean cross-entropy of `labels` and its gradient.
pub fn predictor_loss_and_grads(pred: &PredictorNet, inputs: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Grads)> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::invalid("inputs and labels must be non-empty and aligned"));
    }
    let d = pred.input_dim;
    if inputs.iter().any(|x| x.len() != d) {
        return Err(Error::shape("predictor input has the wrong size"));
    }
    let mut tape = Tape::new();
    let x = tape.constant(NumArray::matrix(inputs.len(), d, inputs.concat())?);
    let h = dense(&mut tape, &pred.params, "pred.h1", x, Activation::Relu)?;
    let logits = dense(&mut tape, &pred.params, "pred.out", h, Activation::Identity)?;
    let loss = tape.cross_entropy(logits, labels)?;
    let value = tape.value(loss)?.item();
    Ok((value, tape.gradients(loss, &pred.params)?))
}

/// One plain-gradient step of size `eta`; returns the loss before the step.
pub fn predictor_update(pred: &mut PredictorNet, inputs: &[Vec<f64>], labels: &[usize], eta: f64) -> Result<f64> {
    let (loss, grads) = predictor_loss_and_grads(pred, inputs, labels)?;
    if eta > 0.0 {
        Optimizer::plain(eta)?.step(&mut pred.params, &grads)?;
    }
    Ok(loss)
}

/// Cluster whose centroid (restricted to the input's dimensions) is nearest.
pub fn nearest_centroid(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let cut: Vec<Vec<f64>> = centroids.iter().map(|c| c[..x.len().min(c.len())].to_vec()).collect();
    nearest(x, &cut)
}
