use super::nets::{stack, CriticNet, GeneratorNet};
use super::train::WganConfig;
use crate::diffcore::{Grads, NumArray, Tape, Var};
use crate::flow::FlowMatrix;
use crate::{Error, Result};

/// Statistics of the real flows that anchor the constraint penalties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealStats {
    /// Mean total vehicle count per flow.
    pub mean_total: f64,
    /// Largest change between adjacent intervals on any route, at least 1.
    pub delta_max: f64,
}

impl RealStats {
    pub fn from_flows(flows: &[FlowMatrix]) -> Result<Self> {
        if flows.is_empty() {
            return Err(Error::invalid("no real flows"));
        }
        let mean_total = flows.iter().map(|f| f.total() as f64).sum::<f64>() / flows.len() as f64;
        if mean_total <= 0.0 {
            return Err(Error::invalid("real flows carry no vehicles"));
        }
        let mut delta = 0u64;
        for f in flows {
            for row in f.counts() {
                for w in row.windows(2) {
                    delta = delta.max(w[0].abs_diff(w[1]));
                }
            }
        }
        Ok(RealStats {
            mean_total,
            delta_max: (delta as f64).max(1.0),
        })
    }
}

/// Critic's distance estimate: mean real score minus mean fake score.
pub fn wasserstein_estimate(real_scores: &[f64], fake_scores: &[f64]) -> f64 {
    mean(real_scores) - mean(fake_scores)
}

/// Mean fake score minus mean real score; the critic minimizes this.
pub fn critic_loss(critic: &CriticNet, real: &[NumArray], fake: &[NumArray]) -> Result<f64> {
    nonempty(real, fake)?;
    Ok(-wasserstein_estimate(&critic.scores(real)?, &critic.scores(fake)?))
}

/// `(L_sum, L_delta)` for a batch of fake flows given in vehicle counts.
pub fn constraint_losses(fake_counts: &[NumArray], stats: &RealStats) -> Result<(f64, f64)> {
    if fake_counts.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mu = stats.mean_total;
    let d = stats.delta_max;
    let mut l_sum = 0.0;
    let mut l_delta = 0.0;
    let mut pairs = 0usize;
    for v in fake_counts {
        l_sum += ((v.sum() - mu) / mu).powi(2);
        for r in 0..v.rows() {
            for w in v.row(r).windows(2) {
                let excess = ((w[1] - w[0]).abs() - d).max(0.0);
                l_delta += excess * excess / (d * d);
                pairs += 1;
            }
        }
    }
    let n = fake_counts.len() as f64;
    Ok((l_sum / n, if pairs > 0 { l_delta / pairs as f64 } else { 0.0 }))
}

/// `(Ŵ − ε)² + k1·L_sum + k2·L_delta`.
pub fn generator_objective(w_hat: f64, epsilon: f64, l_sum: f64, l_delta: f64, k1: f64, k2: f64) -> f64 {
    (w_hat - epsilon).powi(2) + k1 * l_sum + k2 * l_delta
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorLoss {
    pub total: f64,
    pub w_hat: f64,
    pub l_sum: f64,
    pub l_delta: f64,
}

/// Generator objective for scaled fake and real batches under a fixed critic.
pub fn generator_loss(
    critic: &CriticNet,
    fake: &[NumArray],
    real: &[NumArray],
    stats: &RealStats,
    cfg: &WganConfig,
) -> Result<GeneratorLoss> {
    nonempty(real, fake)?;
    let w_hat = wasserstein_estimate(&critic.scores(real)?, &critic.scores(fake)?);
    let counts: Vec<NumArray> = fake.iter().map(|v| v.map(|x| x * cfg.cap)).collect();
    let (l_sum, l_delta) = constraint_losses(&counts, stats)?;
    Ok(GeneratorLoss {
        total: generator_objective(w_hat, cfg.epsilon, l_sum, l_delta, cfg.k1, cfg.k2),
        w_hat,
        l_sum,
        l_delta,
    })
}

/// Critic loss and its gradient with respect to the critic parameters.
pub fn critic_loss_and_grads(critic: &CriticNet, real: &[NumArray], fake: &[NumArray]) -> Result<(f64, Grads)> {
    nonempty(real, fake)?;
    let mut tape = Tape::new();
    let xr = tape.constant(stack(real)?);
    let xf = tape.constant(stack(fake)?);
    let sr = critic.record(&mut tape, xr, real.len(), false)?;
    let sf = critic.record(&mut tape, xf, fake.len(), false)?;
    let mr = tape.mean(sr)?;
    let mf = tape.mean(sf)?;
    let loss = tape.sub(mf, mr)?;
    let value = tape.value(loss)?.item();
    Ok((value, tape.gradients(loss, &critic.params)?))
}

/// Generator loss for fakes generated from noise `z`, with its gradient
/// with respect to the generator parameters. The critic is held constant.
pub fn generator_loss_and_grads(
    critic: &CriticNet,
    generator: &GeneratorNet,
    z: &NumArray,
    real: &[NumArray],
    stats: &RealStats,
    cfg: &WganConfig,
) -> Result<(GeneratorLoss, Grads)> {
    if real.is_empty() || z.rows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let n = z.rows();
    let real_mean = mean(&critic.scores(real)?);
    let mut tape = Tape::new();
    let fake = generator.record(&mut tape, z)?;
    let scores = critic.record(&mut tape, fake, n, true)?;
    let fake_mean = tape.mean(scores)?;
    // Ŵ − ε = (real_mean − ε) − fake_mean
    let neg = tape.scale(fake_mean, -1.0)?;
    let gap = tape.shift(neg, real_mean - cfg.epsilon)?;
    let w_term = tape.square(gap)?;

    let counts = tape.scale(fake, cfg.cap)?;
    let l_sum = sum_penalty(&mut tape, counts, n, stats)?;
    let l_delta = delta_penalty(&mut tape, counts, stats)?;
    let a = tape.scale(l_sum, cfg.k1)?;
    let b = tape.scale(l_delta, cfg.k2)?;
    let total = tape.add(w_term, a)?;
    let total = tape.add(total, b)?;

    let fm = tape.value(fake_mean)?.item();
    let parts = GeneratorLoss {
        total: tape.value(total)?.item(),
        w_hat: real_mean - fm,
        l_sum: tape.value(l_sum)?.item(),
        l_delta: tape.value(l_delta)?.item(),
    };
    Ok((parts, tape.gradients(total, &generator.params)?))
}

fn sum_penalty(tape: &mut Tape, counts: Var, n: usize, stats: &RealStats) -> Result<Var> {
    let cells = tape.value(counts)?.len() / n;
    let per_flow = tape.reshape(counts, &[n, cells])?;
    let totals = tape.row_sum(per_flow)?;
    let centered = tape.shift(totals, -stats.mean_total)?;
    let rel = tape.scale(centered, 1.0 / stats.mean_total)?;
    let sq = tape.square(rel)?;
    tape.mean(sq)
}

fn delta_penalty(tape: &mut Tape, counts: Var, stats: &RealStats) -> Result<Var> {
    let d = stats.delta_max;
    let jumps = tape.diff(counts)?;
    let size = tape.abs(jumps)?;
    let excess = tape.shift(size, -d)?;
    let excess = tape.relu(excess)?;
    let sq = tape.square(excess)?;
    let m = tape.mean(sq)?;
    tape.scale(m, 1.0 / (d * d))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn nonempty(real: &[NumArray], fake: &[NumArray]) -> Result<()> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::invalid("critic batches must be non-empty"));
    }
    Ok(())
}
