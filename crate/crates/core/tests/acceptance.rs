//! Acceptance criteria. Each test writes one `criterion N: PASS|FAIL` line to
//! stderr, bypassing the harness capture, then asserts.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fhefl_core::agg::{
    common_a, encrypt_update, non_poisoning_rates, secure_aggregate_round, sq_norm_plain, weighted_aggregate_plain,
    CtRole, PackingLayout,
};
use fhefl_core::he::{Ciphertext, EvalKey, HeParams, Packing, SecretKey};
use fhefl_core::multikey::{reconstruct_group_key, setup_pairwise, UserKeyring};
use fhefl_core::prf;
use fhefl_core::ring::{ntt_primes, Domain, RingElement, RingParams};
use fhefl_core::sim::{
    weight_bound_threshold, run_experiment, Architecture, Dataset, ExperimentConfig, Model, RunSummary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, pass: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let ok = pass && elapsed < limit;
    let line = format!(
        "criterion {id:>2}: {} ({detail}; {:.1}s of {:.0}s)\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
    assert!(elapsed < limit, "criterion {id} exceeded its time budget");
}

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
    got.iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

#[test]
fn criterion_01_he_correctness() {
    let t = Instant::now();
    let params = HeParams::preset("test-1024").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let sk = SecretKey::generate(&params, &mut rng);
    let evk = EvalKey::generate(&sk, &mut rng).unwrap();
    let public = prf::seed_from_u64(102);
    let enc = |v: &[f64], packing: Packing, i: u64, rng: &mut ChaCha8Rng| {
        let a = common_a(&params, &public, i, CtRole::Payload, 0);
        Ciphertext::encrypt(&sk, &a, v, packing, rng).unwrap()
    };

    let mut worst_roundtrip = 0.0f64;
    for i in 0..1000u64 {
        let len = rng.random_range(1..=params.slot_capacity());
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-1000.0..1000.0)).collect();
        let back = enc(&v, Packing::Forward, i, &mut rng).decrypt(&sk, len, Packing::Forward).unwrap();
        worst_roundtrip = back.iter().zip(&v).fold(worst_roundtrip, |m, (a, b)| m.max((a - b).abs()));
    }

    let mut worst_add = 0.0f64;
    let mut worst_mul = 0.0f64;
    for i in 0..100u64 {
        let len = rng.random_range(1..=32);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..len).map(|_| rng.random_range(-10.0..10.0)).collect();
        let cx = enc(&x, Packing::Forward, 2000 + i, &mut rng);
        let cy = enc(&y, Packing::Forward, 3000 + i, &mut rng);
        let sum = cx.add(&cy).unwrap().decrypt(&sk, len, Packing::Forward).unwrap();
        let want_sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        worst_add = worst_add.max(rel_err(&sum, &want_sum));
        // coefficient packing: the product is the polynomial product
        let mut want_prod = vec![0.0; 2 * len - 1];
        for (i, a) in x.iter().enumerate() {
            for (j, b) in y.iter().enumerate() {
                want_prod[i + j] += a * b;
            }
        }
        let prod = cx.mult_relin(&cy, &evk).unwrap().decrypt_coeffs(&sk, 0..2 * len - 1).unwrap();
        worst_mul = worst_mul.max(rel_err(&prod, &want_prod));
    }
    let pass = worst_roundtrip < 1e-3 && worst_add < 1e-2 && worst_mul < 1e-2;
    report(
        1,
        pass,
        t.elapsed(),
        Duration::from_secs(60),
        &format!("roundtrip max abs {worst_roundtrip:.2e}, add rel {worst_add:.2e}, mult+relin rel {worst_mul:.2e}"),
    );
}

#[allow(clippy::needless_range_loop)]
fn negacyclic(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
    let n = a.len();
    let q = q as u128;
    let mut out = vec![0u128; n];
    for i in 0..n {
        for j in 0..n {
            let p = a[i] as u128 * b[j] as u128 % q;
            let k = (i + j) % n;
            out[k] = if i + j < n { (out[k] + p) % q } else { (out[k] + q - p) % q };
        }
    }
    out.into_iter().map(|v| v as u64).collect()
}

#[test]
fn criterion_02_ring_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let mut mismatches = 0;
    let mut cases = 0;
    for n in [16usize, 32] {
        let primes = ntt_primes(60, 2, n, &[]).unwrap();
        let params = RingParams::new(n, &primes, 2, None).unwrap();
        for _ in 0..1000 {
            let draw = |rng: &mut ChaCha8Rng| -> Vec<Vec<u64>> {
                primes.iter().map(|&q| (0..n).map(|_| rng.random_range(0..q)).collect()).collect()
            };
            let (la, lb) = (draw(&mut rng), draw(&mut rng));
            let a = RingElement::from_residues(&params, 0, false, Domain::Coefficient, la.clone()).unwrap();
            let b = RingElement::from_residues(&params, 0, false, Domain::Coefficient, lb.clone()).unwrap();
            let prod = a.mul(&b).unwrap();
            for (l, &q) in primes.iter().enumerate() {
                if prod.limbs()[l] != negacyclic(&la[l], &lb[l], q) {
                    mismatches += 1;
                }
            }
            cases += 1;
        }
    }
    report(
        2,
        mismatches == 0,
        t.elapsed(),
        Duration::from_secs(10),
        &format!("{cases} pairs at N in {{16, 32}}, {mismatches} limb mismatches"),
    );
}

#[test]
fn criterion_03_key_cancellation() {
    fn cancels(params: &Arc<HeParams>, size: u32) -> bool {
        let ids: Vec<u32> = (0..size).map(|i| 1000 + 7 * i).collect();
        let rings = setup_pairwise(params, &ids, &prf::seed_from_u64(300 + size as u64)).unwrap();
        let masked: Vec<_> = rings.iter().map(|r| r.mask_key(&ids).unwrap()).collect();
        let group = reconstruct_group_key(params, &ids, 0, &masked).unwrap();
        let mut plain = rings[0].secret().element().clone();
        for r in &rings[1..] {
            plain = plain.add(r.secret().element()).unwrap();
        }
        let first = rings[0].pairwise_secret(ids[1]).unwrap();
        let mut pairs = first.sub(&first).unwrap();
        for r in &rings {
            for &j in ids.iter().filter(|&&j| j != r.user()) {
                pairs = pairs.add(&r.pairwise_secret(j).unwrap()).unwrap();
            }
        }
        group.element() == &plain && pairs.is_zero()
    }

    let t = Instant::now();
    // the identity is independent of the ring degree; the full sweep uses the
    // smallest ring, the simulation ring is spot-checked
    let small = HeParams::preset("test-16").unwrap();
    let mut failures: Vec<String> = (2..=64u32)
        .filter(|&size| !cancels(&small, size))
        .map(|size| format!("test-16/{size}"))
        .collect();
    let sim_ring = HeParams::preset("test-1024").unwrap();
    for size in [2u32, 10, 32] {
        if !cancels(&sim_ring, size) {
            failures.push(format!("test-1024/{size}"));
        }
    }
    report(
        3,
        failures.is_empty(),
        t.elapsed(),
        Duration::from_secs(10),
        &format!("rosters 2..=64 on test-16 plus 2, 10, 32 on test-1024, failures {failures:?}"),
    );
}

struct Instance {
    keyrings: Vec<UserKeyring>,
    grads: Vec<Vec<f64>>,
    w: Vec<f64>,
    eta: f64,
}

fn random_instance(params: &Arc<HeParams>, rng: &mut ChaCha8Rng, idx: u64) -> Instance {
    let users = rng.random_range(2..=8u32);
    let dim = rng.random_range(1..=128usize);
    let ids: Vec<u32> = (0..users).collect();
    let keyrings = setup_pairwise(params, &ids, &prf::seed_from_u64(4000 + idx)).unwrap();
    let grads = (0..users)
        .map(|_| {
            let scale = rng.random_range(0.05..3.0);
            (0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
        })
        .collect();
    let w = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Instance {
        keyrings,
        grads,
        w,
        eta: rng.random_range(0.01..1.0),
    }
}

#[test]
fn criterion_04_pipeline_oracle() {
    let t = Instant::now();
    let params = HeParams::preset("test-1024").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut worst = 0.0f64;
    for idx in 0..100u64 {
        let inst = random_instance(&params, &mut rng, idx);
        let layout = PackingLayout::pipeline(params.degree(), inst.w.len()).unwrap();
        let public = prf::seed_from_u64(5000 + idx);
        let updates: Vec<_> = inst
            .keyrings
            .iter()
            .zip(&inst.grads)
            .map(|(k, g)| encrypt_update(k, g, &layout, &public, &mut rng).unwrap())
            .collect();
        let keys: Vec<&UserKeyring> = inst.keyrings.iter().collect();
        let out = secure_aggregate_round(idx, &updates, &keys, &inst.w, inst.eta, &prf::seed_from_u64(idx)).unwrap();
        let refs: Vec<&[f64]> = inst.grads.iter().map(|g| g.as_slice()).collect();
        let d: Vec<f64> = refs.iter().map(|g| sq_norm_plain(g)).collect();
        let rates = non_poisoning_rates(&d).unwrap();
        let want = weighted_aggregate_plain(&inst.w, &refs, &rates, inst.eta).unwrap();
        worst = worst.max(rel_err(&out.model, &want));
    }
    report(
        4,
        worst < 1e-2,
        t.elapsed(),
        Duration::from_secs(300),
        &format!("100 instances, worst relative error {worst:.2e}"),
    );
}

#[test]
fn criterion_05_rate_identities() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut plain_worst = 0.0f64;
    let mut monotone = true;
    for _ in 0..1000 {
        let u = rng.random_range(2..50);
        let d: Vec<f64> = (0..u).map(|_| rng.random_range(0.0..1e3)).collect();
        let p = non_poisoning_rates(&d).unwrap();
        plain_worst = plain_worst.max((p.iter().sum::<f64>() - 1.0).abs());
        for i in 0..u {
            for j in 0..u {
                if d[i] < d[j] && p[i] <= p[j] {
                    monotone = false;
                }
            }
        }
    }
    let hand = non_poisoning_rates(&[1.0, 3.0]).unwrap();
    let hand_ok = (hand[0] - 0.75).abs() < 1e-15 && (hand[1] - 0.25).abs() < 1e-15;

    let params = HeParams::preset("test-1024").unwrap();
    let mut enc_worst = 0.0f64;
    for idx in 0..5u64 {
        let inst = random_instance(&params, &mut rng, 9000 + idx);
        let layout = PackingLayout::pipeline(params.degree(), inst.w.len()).unwrap();
        let public = prf::seed_from_u64(idx);
        let updates: Vec<_> = inst
            .keyrings
            .iter()
            .zip(&inst.grads)
            .map(|(k, g)| encrypt_update(k, g, &layout, &public, &mut rng).unwrap())
            .collect();
        let keys: Vec<&UserKeyring> = inst.keyrings.iter().collect();
        let out = secure_aggregate_round(0, &updates, &keys, &inst.w, 0.1, &prf::seed_from_u64(idx)).unwrap();
        enc_worst = enc_worst.max((out.rate_sum - 1.0).abs());
    }
    let pass = plain_worst < 1e-12 && enc_worst < 1e-2 && monotone && hand_ok;
    report(
        5,
        pass,
        t.elapsed(),
        Duration::from_secs(5),
        &format!(
            "plain |Σp-1| {plain_worst:.1e}, encrypted |Σp-1| {enc_worst:.1e}, monotone {monotone}, d=[1,3] -> {hand:?}"
        ),
    );
}

fn desk_config(aggregator: &str, fraction: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        aggregator: aggregator.into(),
        ..ExperimentConfig::default()
    };
    cfg.attack.fraction = fraction;
    cfg
}

fn seeds_mean(cfg: &ExperimentConfig) -> (f64, f64, Vec<RunSummary>) {
    let runs: Vec<RunSummary> = (0..5).map(|s| run_experiment(cfg, s).unwrap().1).collect();
    let acc = runs.iter().map(|r| r.final_accuracy).sum::<f64>() / 5.0;
    let aasr = runs.iter().map(|r| r.mean_aasr).sum::<f64>() / 5.0;
    (acc, aasr, runs)
}

#[test]
fn criterion_06_attack_mitigation() {
    let t = Instant::now();
    let (acc_f, aasr_f, runs) = seeds_mean(&desk_config("fhefl", 0.2));
    let (acc_a, aasr_a, _) = seeds_mean(&desk_config("fedavg", 0.2));
    let mal_rate = runs.iter().filter_map(|r| r.mean_malicious_rate).sum::<f64>() / 5.0;
    let pass = aasr_f < aasr_a && acc_f >= acc_a;
    report(
        6,
        pass,
        t.elapsed(),
        Duration::from_secs(900),
        &format!(
            "AASR fhefl {aasr_f:.4} vs fedavg {aasr_a:.4}; accuracy fhefl {acc_f:.4} vs fedavg {acc_a:.4}; \
             malicious mean rate {mal_rate:.4} vs uniform 0.1"
        ),
    );
}

#[test]
fn criterion_07_zero_attacker_sanity() {
    let t = Instant::now();
    let (acc_f, _, _) = seeds_mean(&desk_config("fhefl", 0.0));
    let (acc_a, _, _) = seeds_mean(&desk_config("fedavg", 0.0));
    report(
        7,
        (acc_f - acc_a).abs() <= 0.01,
        t.elapsed(),
        Duration::from_secs(600),
        &format!("accuracy fhefl {acc_f:.4} vs fedavg {acc_a:.4}"),
    );
}

#[test]
fn criterion_08_bound_checker() {
    let t = Instant::now();
    let th = weight_bound_threshold(8, 2, 1.0).unwrap();
    let boundary = weight_bound_threshold(5, 5, 3.0).unwrap();
    let pass = (th - 54.0 / 14.0).abs() < 1e-12 && boundary == 0.0;
    report(
        8,
        pass,
        t.elapsed(),
        Duration::from_secs(1),
        &format!("(8,2,1) -> {th:.4}, |B|=|M| -> {boundary}"),
    );
}

#[test]
fn criterion_09_benchmark_plausibility() {
    let params = HeParams::preset("fhefl-16384").unwrap();
    let ids: Vec<u32> = (0..10).collect();
    let keyrings = setup_pairwise(&params, &ids, &prf::seed_from_u64(901)).unwrap();
    let stride = PackingLayout::pipeline(params.degree(), params.degree()).unwrap().stride();
    let layout = PackingLayout::pipeline(params.degree(), stride).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(902);
    let public = prf::seed_from_u64(903);
    let grads: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..stride).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let updates: Vec<_> = keyrings
        .iter()
        .zip(&grads)
        .map(|(k, g)| encrypt_update(k, g, &layout, &public, &mut rng).unwrap())
        .collect();
    assert!(updates.iter().all(|u| u.forward.len() == 1 && u.payload.len() == 1));
    let keys: Vec<&UserKeyring> = keyrings.iter().collect();
    let w = vec![0.0; stride];
    let t = Instant::now();
    let out = secure_aggregate_round(0, &updates, &keys, &w, 1.0, &prf::seed_from_u64(904)).unwrap();
    let elapsed = t.elapsed();
    let refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
    let rates = non_poisoning_rates(&refs.iter().map(|g| sq_norm_plain(g)).collect::<Vec<_>>()).unwrap();
    let want = weighted_aggregate_plain(&w, &refs, &rates, 1.0).unwrap();
    let err = rel_err(&out.model, &want);
    report(
        9,
        err < 1e-2,
        elapsed,
        Duration::from_secs(300),
        &format!("10-user round at N=16384, relative error {err:.1e}"),
    );
}

fn gradient_check(model: &Model, w: &[f64], data: &Dataset) -> f64 {
    let idx: Vec<usize> = (0..data.len()).collect();
    let (_, g) = model.loss_grad(w, data, &idx).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut probe = w.to_vec();
    for i in 0..w.len() {
        probe[i] = w[i] + h;
        let up = model.loss(&probe, data, &idx).unwrap();
        probe[i] = w[i] - h;
        let down = model.loss(&probe, data, &idx).unwrap();
        probe[i] = w[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6));
    }
    worst
}

#[test]
fn criterion_10_gradient_check() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = [0.0f64; 2];
    for case in 0..50 {
        let features = rng.random_range(1..=8);
        let classes = rng.random_range(2..=5);
        let n = rng.random_range(1..=6);
        let x: Vec<f64> = (0..n * features).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let data = Dataset::new(features, classes, x, y).unwrap();
        for (k, arch) in [Architecture::Logistic, Architecture::Mlp { hidden: 1 + case % 6 }].into_iter().enumerate() {
            let model = Model::new(arch, features, classes).unwrap();
            let w: Vec<f64> = (0..model.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            worst[k] = worst[k].max(gradient_check(&model, &w, &data));
        }
    }
    report(
        10,
        worst[0] < 1e-4 && worst[1] < 1e-4,
        t.elapsed(),
        Duration::from_secs(30),
        &format!("50 instances, worst relative error logistic {:.1e}, mlp {:.1e}", worst[0], worst[1]),
    );
}

#[test]
fn malicious_users_receive_below_uniform_weight() {
    let runs: Vec<RunSummary> = (0..5).map(|s| run_experiment(&desk_config("fhefl", 0.2), s).unwrap().1).collect();
    let mal_rate = runs.iter().filter_map(|r| r.mean_malicious_rate).sum::<f64>() / 5.0;
    assert!(mal_rate < 0.1, "mean malicious rate {mal_rate}");
}

/// Krum keeps a single benign-looking update and beats the weighted rule on
/// this task; see the project notes.
#[test]
#[ignore = "fails on the desk task: Krum attains lower attack success than fhefl"]
fn fhefl_beats_krum_on_attack_success() {
    let (_, aasr_f, _) = seeds_mean(&desk_config("fhefl", 0.2));
    let (_, aasr_k, _) = seeds_mean(&desk_config("krum", 0.2));
    assert!(aasr_f < aasr_k, "fhefl {aasr_f:.4} vs krum {aasr_k:.4}");
}
