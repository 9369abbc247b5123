//! Plain-domain baseline aggregators.

use super::weighted_sum;
use crate::error::{Error, Result};

fn check_shapes(updates: &[&[f64]]) -> Result<usize> {
    let first = updates.first().ok_or(Error::TooFewUsers(0))?;
    for u in updates {
        if u.len() != first.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                actual: u.len(),
            });
        }
    }
    Ok(first.len())
}

pub fn fedavg(updates: &[&[f64]]) -> Result<Vec<f64>> {
    check_shapes(updates)?;
    weighted_sum(updates, &vec![1.0 / updates.len() as f64; updates.len()])
}

fn sorted_column(updates: &[&[f64]], k: usize) -> Vec<f64> {
    let mut col: Vec<f64> = updates.iter().map(|u| u[k]).collect();
    col.sort_by(f64::total_cmp);
    col
}

/// Coordinate-wise median; the mean of the middle pair for even counts.
pub fn coordinate_median(updates: &[&[f64]]) -> Result<Vec<f64>> {
    let dim = check_shapes(updates)?;
    let n = updates.len();
    Ok((0..dim)
        .map(|k| {
            let col = sorted_column(updates, k);
            if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            }
        })
        .collect())
}

/// Coordinate-wise mean after dropping `ceil(βU)` values from each end.
pub fn trimmed_mean(updates: &[&[f64]], beta: f64) -> Result<Vec<f64>> {
    let dim = check_shapes(updates)?;
    let n = updates.len();
    if !(0.0..0.5).contains(&beta) {
        return Err(Error::Infeasible(format!("trim fraction {beta} outside [0, 0.5)")));
    }
    let cut = (beta * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if 2 * cut >= n {
        return Err(Error::Infeasible(format!("trimming {cut} per side leaves nothing of {n}")));
    }
    let kept = (n - 2 * cut) as f64;
    Ok((0..dim)
        .map(|k| sorted_column(updates, k)[cut..n - cut].iter().sum::<f64>() / kept)
        .collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Single Krum: the update minimizing the summed squared distance to its
/// `U - f - 2` nearest neighbours. Returns the update and its index.
pub fn krum(updates: &[&[f64]], f: usize) -> Result<(Vec<f64>, usize)> {
    check_shapes(updates)?;
    let n = updates.len();
    if n < f + 3 {
        return Err(Error::Infeasible(format!("Krum with f = {f} needs at least {} updates, got {n}", f + 3)));
    }
    let neighbours = n - f - 2;
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..n {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| sq_dist(updates[i], updates[j]))
            .collect();
        dists.sort_by(f64::total_cmp);
        let score: f64 = dists[..neighbours].iter().sum();
        if score < best.0 {
            best = (score, i);
        }
    }
    Ok((updates[best.1].to_vec(), best.1))
}
