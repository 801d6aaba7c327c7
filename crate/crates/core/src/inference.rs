//! Monte-Carlo predictive distribution: the mean of `T` sampled-network
//! probabilities and their population variance.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{bce, PROB_CLAMP};
use crate::ndcore::{log_sigmoid_scalar, sigmoid_scalar, Matrix};
use crate::network::BnnModel;
use crate::rng::{stream, Stream};

/// Allowed roundoff above the `mean·(1−mean)` ceiling.
const CEILING_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    /// `(1/T) Σ p_t`
    pub mean: f64,
    /// `(1/T) Σ (1 − p_t)`, accumulated from the complementary probabilities
    /// so it keeps full relative precision when `mean` is close to one.
    pub mean_complement: f64,
    /// `(1/T) Σ (mean − p_t)²`
    pub variance: f64,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

fn population_variance(values: &[f64], mean: f64) -> f64 {
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64
}

impl PredictionSummary {
    /// Summary of per-sample logits. The variance is accumulated on whichever
    /// side (`p` or `1 − p`) lies below one half, where the values carry the
    /// most precision; the two are equal in exact arithmetic.
    pub fn from_logits(logits: &[f64], retain: bool) -> Result<Self> {
        if logits.len() < 2 {
            return Err(invalid("predictive variance needs at least two samples"));
        }
        let t = logits.len() as f64;
        let p: Vec<f64> = logits.iter().map(|&z| sigmoid_scalar(z)).collect();
        let q: Vec<f64> = logits.iter().map(|&z| sigmoid_scalar(-z)).collect();
        let mean = p.iter().sum::<f64>() / t;
        let mean_complement = q.iter().sum::<f64>() / t;
        let variance = if mean <= 0.5 {
            population_variance(&p, mean)
        } else {
            population_variance(&q, mean_complement)
        };
        Self::checked(mean, mean_complement, variance, logits.len(), retain.then_some(p))
    }

    /// Summary of per-sample probabilities in `[0, 1]`.
    pub fn from_probabilities(probs: &[f64], retain: bool) -> Result<Self> {
        let variance = predictive_variance(probs)?;
        let t = probs.len() as f64;
        let mean = probs.iter().sum::<f64>() / t;
        let mean_complement = probs.iter().map(|p| 1.0 - p).sum::<f64>() / t;
        Self::checked(
            mean,
            mean_complement,
            variance,
            probs.len(),
            retain.then(|| probs.to_vec()),
        )
    }

    fn checked(
        mean: f64,
        mean_complement: f64,
        variance: f64,
        samples: usize,
        probabilities: Option<Vec<f64>>,
    ) -> Result<Self> {
        if variance > mean.min(mean_complement) * mean.max(mean_complement) + CEILING_SLACK
            || variance > 0.25 + CEILING_SLACK
        {
            return Err(Error::VarianceOutOfRange(variance));
        }
        Ok(Self {
            mean,
            mean_complement,
            variance,
            samples,
            probabilities,
        })
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Binary cross-entropy of the predictive mean, reading `1 − mean` from
    /// the complement accumulator.
    pub fn bce(&self, label: u8) -> Result<f64> {
        match label {
            1 => bce(self.mean, 1),
            0 => Ok(-self.mean_complement.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()),
            other => Err(Error::NonBinaryLabel(other as f64)),
        }
    }
}

/// `(1/T) Σ (p̄ − p_t)²` of probabilities in `[0, 1]`.
pub fn predictive_variance(probs: &[f64]) -> Result<f64> {
    if probs.len() < 2 {
        return Err(invalid("predictive variance needs at least two samples"));
    }
    if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("probability {bad} outside [0, 1]")));
    }
    let mean = probs.iter().sum::<f64>() / probs.len() as f64;
    Ok(population_variance(probs, mean))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    /// Posterior draws `T`.
    pub samples: usize,
    pub seed: u64,
    pub retain_samples: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            seed: 0,
            retain_samples: false,
        }
    }
}

/// `T` posterior draws shared by every row of `x`. Deterministic per seed.
pub fn predict(model: &BnnModel, x: &Matrix, samples: usize, seed: u64) -> Result<Vec<PredictionSummary>> {
    predict_with(
        model,
        x,
        &PredictConfig {
            samples,
            seed,
            retain_samples: false,
        },
    )
}

pub fn predict_with(model: &BnnModel, x: &Matrix, config: &PredictConfig) -> Result<Vec<PredictionSummary>> {
    if config.samples < 2 {
        return Err(invalid(format!(
            "need T >= 2 posterior samples, got {}",
            config.samples
        )));
    }
    let mut rng = stream(config.seed, Stream::Inference);
    let mut per_sample = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let w = model.draw_sample(&mut rng)?;
        per_sample.push(model.forward_logits(&w, x)?);
    }
    let mut row = vec![0.0; config.samples];
    (0..x.rows())
        .map(|i| {
            for (slot, logits) in row.iter_mut().zip(&per_sample) {
                *slot = logits[i];
            }
            PredictionSummary::from_logits(&row, config.retain_samples)
        })
        .collect()
}

/// `ln p̄` computed from logits without forming `p̄` first.
pub fn log_mean_probability(logits: &[f64]) -> f64 {
    let logs: Vec<f64> = logits.iter().map(|&z| log_sigmoid_scalar(z)).collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + (logs.iter().map(|l| (l - m).exp()).sum::<f64>() / logits.len() as f64).ln()
}
