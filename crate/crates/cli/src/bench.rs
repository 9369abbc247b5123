//! Timing harness for the homomorphic primitives and a full secure round.

use std::sync::Arc;
use std::time::Instant;

use anyhow::Result;
use fhefl_core::agg::{common_a, encrypt_update, secure_aggregate_round, CtRole, PackingLayout};
use fhefl_core::he::{Ciphertext, HeParams, SecretKey};
use fhefl_core::multikey::setup_pairwise;
use fhefl_core::prf;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub op: String,
    pub mean_us: f64,
    pub p95_us: f64,
    pub reps: usize,
}

fn summarize(op: &str, mut samples: Vec<f64>) -> BenchRow {
    samples.sort_by(f64::total_cmp);
    let reps = samples.len();
    let idx = ((reps as f64 * 0.95).ceil() as usize).clamp(1, reps) - 1;
    BenchRow {
        op: op.into(),
        mean_us: samples.iter().sum::<f64>() / reps as f64,
        p95_us: samples[idx],
        reps,
    }
}

fn time<T>(reps: usize, mut f: impl FnMut(usize) -> Result<T>) -> Result<Vec<f64>> {
    (0..reps)
        .map(|i| {
            let t = Instant::now();
            std::hint::black_box(f(i)?);
            Ok(t.elapsed().as_secs_f64() * 1e6)
        })
        .collect()
}

/// Encrypt, add and mult+relin over `reps` repetitions, then `round_reps`
/// secure rounds with `users` users holding one norm pair and one payload
/// ciphertext each.
pub fn run(params: &Arc<HeParams>, reps: usize, round_reps: usize, users: u32) -> Result<Vec<BenchRow>> {
    let mut rng = prf::stream(&prf::seed_from_u64(0xBE4C));
    let sk = SecretKey::generate(params, &mut rng);
    let public = prf::seed_from_u64(1);
    let a = common_a(params, &public, 0, CtRole::Forward, 0);
    let values: Vec<f64> = (0..64.min(params.degree())).map(|i| (i as f64 - 32.0) / 64.0).collect();
    let ct = Ciphertext::encrypt_coeffs(&sk, &a, &values, &mut rng)?;
    let evk = fhefl_core::he::EvalKey::generate(&sk, &mut rng)?;

    let mut rows = vec![
        summarize("encrypt", time(reps, |_| Ciphertext::encrypt_coeffs(&sk, &a, &values, &mut rng).map_err(Into::into))?),
        summarize("add", time(reps, |_| ct.add(&ct).map_err(Into::into))?),
        summarize("mult_relin", time(reps, |_| ct.mult_relin(&ct, &evk).map_err(Into::into))?),
    ];

    if round_reps > 0 {
        let ids: Vec<u32> = (0..users).collect();
        let keyrings = setup_pairwise(params, &ids, &prf::seed_from_u64(2))?;
        let stride = PackingLayout::pipeline(params.degree(), params.degree())?.stride();
        let layout = PackingLayout::pipeline(params.degree(), stride)?;
        let updates = keyrings
            .iter()
            .map(|k| {
                let g: Vec<f64> = (0..stride).map(|i| ((i as f64) * 0.37 + k.user() as f64).sin() * 0.1).collect();
                encrypt_update(k, &g, &layout, &public, &mut rng)
            })
            .collect::<fhefl_core::Result<Vec<_>>>()?;
        let keys: Vec<_> = keyrings.iter().collect();
        let w = vec![0.0; stride];
        let samples = time(round_reps, |i| {
            secure_aggregate_round(i as u64, &updates, &keys, &w, 0.1, &prf::seed_from_u64(i as u64)).map_err(Into::into)
        })?;
        rows.push(summarize(&format!("secure_round_{users}_users"), samples));
    }
    Ok(rows)
}

pub fn render(rows: &[BenchRow]) -> String {
    let mut out = format!("{:<24} {:>14} {:>14} {:>6}\n", "op", "mean_us", "p95_us", "reps");
    for r in rows {
        out.push_str(&format!("{:<24} {:>14.1} {:>14.1} {:>6}\n", r.op, r.mean_us, r.p95_us, r.reps));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_and_mean() {
        let r = summarize("x", (1..=20).map(|v| v as f64).collect());
        assert_eq!(r.mean_us, 10.5);
        assert_eq!(r.p95_us, 19.0);
        assert_eq!(summarize("y", vec![4.0]).p95_us, 4.0);
    }

    #[test]
    fn small_preset_produces_every_row() {
        let params = HeParams::preset("test-1024").unwrap();
        let rows = run(&params, 2, 1, 3).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.op.as_str()).collect();
        assert_eq!(names, ["encrypt", "add", "mult_relin", "secure_round_3_users"]);
        assert!(render(&rows).starts_with("op"));
    }
}
