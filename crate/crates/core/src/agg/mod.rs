//! Non-poisoning-rate aggregation in the plain and encrypted domains, plus
//! the classical robust baselines.

mod baselines;
mod layout;
mod secure;

use crate::error::{Error, Result};

pub use baselines::{coordinate_median, fedavg, krum, trimmed_mean};
pub use layout::PackingLayout;
pub use secure::{
    center_norm, common_a, encrypt_update, rates_encrypted, secure_aggregate_round, sq_norm_encrypted,
    CtRole, EncryptedUpdate, SecureOutcome,
};

/// One user's effective gradient for a round.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientUpdate {
    pub user: u32,
    pub grad: Vec<f64>,
    pub eta: f64,
}

pub fn sq_norm_plain(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum()
}

/// `p_u = (1 - d_u / Σd) / (U - 1)`. Equal distances, including all zero,
/// give exactly `1/U` each.
pub fn non_poisoning_rates(d: &[f64]) -> Result<Vec<f64>> {
    let users = d.len();
    if users < 2 {
        return Err(Error::TooFewUsers(users));
    }
    if let Some(bad) = d.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidInput(format!("distance {bad} is not a finite nonnegative value")));
    }
    let uniform = 1.0 / users as f64;
    if d.iter().all(|&x| x == d[0]) {
        return Ok(vec![uniform; users]);
    }
    let total: f64 = d.iter().sum();
    let k = 1.0 / (users - 1) as f64;
    Ok(d.iter().map(|&x| k * (1.0 - x / total)).collect())
}

/// Clamps negative rates to zero and rescales to unit sum.
pub fn clamp_and_renormalize(p: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = p.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total > 0.0 {
        clamped.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / p.len() as f64; p.len()]
    }
}

/// `Σ w_u · v_u`, accumulated in user order.
pub fn weighted_sum(vectors: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    if vectors.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: vectors.len(),
            actual: weights.len(),
        });
    }
    let first = vectors.first().ok_or(Error::TooFewUsers(0))?;
    let dim = first.len();
    let mut out = vec![0.0; dim];
    for (v, &w) in vectors.iter().zip(weights) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// `w_prev - η · Σ p_u ∇L_u`.
pub fn weighted_aggregate_plain(
    w_prev: &[f64],
    grads: &[&[f64]],
    rates: &[f64],
    eta: f64,
) -> Result<Vec<f64>> {
    let direction = weighted_sum(grads, rates)?;
    apply_step(w_prev, &direction, eta)
}

pub(crate) fn apply_step(w_prev: &[f64], direction: &[f64], eta: f64) -> Result<Vec<f64>> {
    if direction.len() != w_prev.len() {
        return Err(Error::DimensionMismatch {
            expected: w_prev.len(),
            actual: direction.len(),
        });
    }
    Ok(w_prev.iter().zip(direction).map(|(w, g)| w - eta * g).collect())
}

/// Aggregation rule selected by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregator {
    /// Non-poisoning rates from squared norms of the first `norm_prefix`
    /// coordinates (all coordinates when `None`).
    FheFl { norm_prefix: Option<usize> },
    FedAvg,
    Median,
    TrimmedMean { beta: f64 },
    Krum { f: usize },
}

/// Aggregated direction and the per-user weights behind it, when the rule
/// is a weighted average.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub direction: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

pub const AGGREGATOR_NAMES: [&str; 5] = ["fhefl", "fedavg", "median", "trimmed_mean", "krum"];

impl Aggregator {
    pub fn from_name(name: &str, beta: f64, f: usize) -> Result<Self> {
        Ok(match name {
            "fhefl" => Aggregator::FheFl { norm_prefix: None },
            "fedavg" => Aggregator::FedAvg,
            "median" => Aggregator::Median,
            "trimmed_mean" => Aggregator::TrimmedMean { beta },
            "krum" => Aggregator::Krum { f },
            other => return Err(Error::Config(format!("unknown aggregator `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Aggregator::FheFl { .. } => "fhefl",
            Aggregator::FedAvg => "fedavg",
            Aggregator::Median => "median",
            Aggregator::TrimmedMean { .. } => "trimmed_mean",
            Aggregator::Krum { .. } => "krum",
        }
    }

    pub fn aggregate(&self, grads: &[&[f64]]) -> Result<Aggregated> {
        match self {
            Aggregator::FheFl { norm_prefix } => {
                let d: Vec<f64> = grads
                    .iter()
                    .map(|g| sq_norm_plain(&g[..norm_prefix.unwrap_or(g.len()).min(g.len())]))
                    .collect();
                let rates = non_poisoning_rates(&d)?;
                Ok(Aggregated {
                    direction: weighted_sum(grads, &rates)?,
                    weights: Some(rates),
                })
            }
            Aggregator::FedAvg => {
                let w = vec![1.0 / grads.len().max(1) as f64; grads.len()];
                Ok(Aggregated {
                    direction: fedavg(grads)?,
                    weights: Some(w),
                })
            }
            Aggregator::Median => Ok(Aggregated {
                direction: coordinate_median(grads)?,
                weights: None,
            }),
            Aggregator::TrimmedMean { beta } => Ok(Aggregated {
                direction: trimmed_mean(grads, *beta)?,
                weights: None,
            }),
            Aggregator::Krum { f } => {
                let (direction, chosen) = krum(grads, *f)?;
                let mut w = vec![0.0; grads.len()];
                w[chosen] = 1.0;
                Ok(Aggregated {
                    direction,
                    weights: Some(w),
                })
            }
        }
    }
}
