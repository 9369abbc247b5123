//! Sufficient condition under which malicious users receive less total
//! weight than benign ones.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Benign,
    Malicious,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub benign: usize,
    pub malicious: usize,
    pub g_sq: f64,
    pub z_sq: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

/// `(B - M)(B + M - 1) G² / (BM - M² + M)`.
pub fn weight_bound_threshold(benign: usize, malicious: usize, g_sq: f64) -> Result<f64> {
    if benign == 0 || malicious == 0 {
        return Err(Error::Degenerate(format!(
            "need both role classes, got {benign} benign and {malicious} malicious"
        )));
    }
    if !(g_sq.is_finite() && g_sq >= 0.0) {
        return Err(Error::InvalidInput(format!("G² = {g_sq}")));
    }
    let (b, m) = (benign as f64, malicious as f64);
    Ok((b - m) * (b + m - 1.0) * g_sq / (b * m - m * m + m))
}

impl BoundReport {
    /// `satisfied` is `Z² < threshold` with a benign majority; for `M > B + 1`
    /// the formula turns positive again but carries no guarantee.
    pub fn new(benign: usize, malicious: usize, g_sq: f64, z_sq: f64) -> Result<Self> {
        if !(z_sq.is_finite() && z_sq >= 0.0) {
            return Err(Error::InvalidInput(format!("Z² = {z_sq}")));
        }
        let threshold = weight_bound_threshold(benign, malicious, g_sq)?;
        Ok(Self {
            benign,
            malicious,
            g_sq,
            z_sq,
            threshold,
            satisfied: benign > malicious && z_sq < threshold,
        })
    }
}

/// `history[u]` holds user `u`'s squared gradient norms over the rounds it
/// took part in. `G²` is the largest benign mean, `Z²` the largest malicious
/// mean minus `G²`, floored at zero.
pub fn weight_bound_check(history: &[Vec<f64>], roles: &[Role]) -> Result<BoundReport> {
    if history.len() != roles.len() {
        return Err(Error::DimensionMismatch {
            expected: roles.len(),
            actual: history.len(),
        });
    }
    let mean_of = |role: Role| -> (usize, f64) {
        let users: Vec<&Vec<f64>> = history
            .iter()
            .zip(roles)
            .filter(|(h, r)| **r == role && !h.is_empty())
            .map(|(h, _)| h)
            .collect();
        let max = users
            .iter()
            .map(|h| h.iter().sum::<f64>() / h.len() as f64)
            .fold(0.0, f64::max);
        (users.len(), max)
    };
    let (b, g_sq) = mean_of(Role::Benign);
    let (m, worst) = mean_of(Role::Malicious);
    BoundReport::new(b, m, g_sq, (worst - g_sq).max(0.0))
}
