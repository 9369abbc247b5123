//! Round orchestration: roster selection, parallel local training,
//! aggregation in the plain or encrypted domain, and per-round metrics.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::Serialize;

use super::attack::{attack_success_rate, flip_labels};
use super::bound::{weight_bound_check, BoundReport, Role};
use super::config::{DatasetConfig, EncryptScope, ExperimentConfig, Mode, RosterMode};
use super::data::{load_csv, shard_iid, split, synthetic, Dataset};
use super::model::{local_train, Model, ModelState};
use crate::agg::{apply_step, encrypt_update, secure_aggregate_round, sq_norm_plain, Aggregator, PackingLayout};
use crate::error::{Error, Result};
use crate::he::HeParams;
use crate::multikey::{setup_pairwise, UserKeyring};
use crate::prf::{self, Seed};

/// Wall-clock milliseconds per phase; excluded from the metrics CSV.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub train_ms: f64,
    pub aggregate_ms: f64,
    pub eval_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub epoch: u64,
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub aasr: f64,
    pub roster: Vec<u32>,
    pub malicious: Vec<bool>,
    /// Aggregation weights, when the rule is a weighted average.
    pub rates: Option<Vec<f64>>,
    pub sq_norms: Vec<f64>,
    pub step_norm: f64,
    pub timings: StageTimings,
}

fn mean_where(values: &[f64], mask: &[bool], want: bool) -> Option<f64> {
    let picked: Vec<f64> = values.iter().zip(mask).filter(|(_, &m)| m == want).map(|(&v, _)| v).collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}

impl RoundMetrics {
    pub fn mean_rate(&self, malicious: bool) -> Option<f64> {
        self.rates.as_ref().and_then(|r| mean_where(r, &self.malicious, malicious))
    }

    pub fn mean_sq_norm(&self, malicious: bool) -> Option<f64> {
        mean_where(&self.sq_norms, &self.malicious, malicious)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub aggregator: String,
    pub rounds_run: u64,
    pub final_accuracy: f64,
    /// Mean over the final ten rounds.
    pub mean_aasr: f64,
    /// Mean rate of malicious roster members after the first five rounds.
    pub mean_malicious_rate: Option<f64>,
    pub bound: Option<BoundReport>,
}

struct Encrypted {
    params: Arc<HeParams>,
    keyrings: Vec<UserKeyring>,
    layout: PackingLayout,
    public_seed: Seed,
}

pub struct Simulation {
    cfg: ExperimentConfig,
    seed: u64,
    root: Seed,
    test: Dataset,
    shards: Vec<Dataset>,
    roles: Vec<Role>,
    aggregator: Aggregator,
    state: ModelState,
    encrypted: Option<Encrypted>,
    history: Vec<Vec<f64>>,
}

fn load(cfg: &ExperimentConfig, root: &Seed) -> Result<(Dataset, Dataset)> {
    let mut rng = prf::stream(&prf::derive(root, "data", &[]));
    match &cfg.dataset {
        DatasetConfig::Synthetic(spec) => synthetic(spec, &mut rng),
        DatasetConfig::Csv(src) => {
            let train = load_csv(&src.train, src.classes)?;
            match &src.test {
                Some(p) => {
                    let test = load_csv(p, Some(train.classes()))?;
                    if test.features() != train.features() || test.classes() > train.classes() {
                        return Err(Error::Config("test file does not match the training file".into()));
                    }
                    Ok((train, test))
                }
                None => split(&train, src.test_fraction, &mut rng),
            }
        }
    }
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let root = prf::seed_from_u64(seed);
        let (train, test) = load(cfg, &root)?;
        if cfg.attack.fraction > 0.0 {
            cfg.attack.validate(train.classes(), cfg.override_attacker_cap)?;
        }
        let mut rng = prf::stream(&prf::derive(&root, "setup", &[]));
        let mut shards = shard_iid(&train, cfg.users, &mut rng)?;
        let n_malicious = (cfg.attack.fraction * cfg.users as f64).round() as usize;
        let mut ids: Vec<usize> = (0..cfg.users).collect();
        ids.shuffle(&mut rng);
        let mut roles = vec![Role::Benign; cfg.users];
        for &u in &ids[..n_malicious] {
            roles[u] = Role::Malicious;
            flip_labels(&mut shards[u], &cfg.attack);
        }
        let model = Model::new(cfg.architecture, train.features(), train.classes())?;
        let w = model.init(&mut prf::stream(&prf::derive(&root, "init", &[])));
        let mut aggregator = cfg.aggregator()?;
        let norm_prefix = match cfg.encrypt {
            EncryptScope::FirstLayer => model.first_layer_len(),
            EncryptScope::Whole => model.param_count(),
        };
        if let Aggregator::FheFl { norm_prefix: p } = &mut aggregator {
            *p = Some(norm_prefix);
        }
        let encrypted = match cfg.mode {
            Mode::Plain => None,
            Mode::Encrypted => {
                let params = HeParams::preset(&cfg.preset)?;
                let ids: Vec<u32> = (0..cfg.users as u32).collect();
                let keyrings = setup_pairwise(&params, &ids, &prf::derive(&root, "pairwise", &[]))?;
                let layout = PackingLayout::pipeline(params.degree(), norm_prefix)?;
                Some(Encrypted {
                    params,
                    keyrings,
                    layout,
                    public_seed: prf::derive(&root, "public", &[]),
                })
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            root,
            test,
            shards,
            roles,
            aggregator,
            state: ModelState { model, w, epoch: 0 },
            encrypted,
            history: vec![Vec::new(); cfg.users],
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn shards(&self) -> &[Dataset] {
        &self.shards
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    /// Replaces every shard, for controlled experiments.
    pub fn set_shards(&mut self, shards: Vec<Dataset>) -> Result<()> {
        if shards.len() != self.cfg.users || shards.iter().any(|s| s.is_empty()) {
            return Err(Error::InvalidInput("one nonempty shard per user is required".into()));
        }
        self.shards = shards;
        Ok(())
    }

    /// Pinned mode draws `round(fraction · roster)` attackers and fills the
    /// rest with benign users; random mode samples uniformly.
    pub fn select_roster(&self, round: u64) -> Vec<u32> {
        let mut rng = prf::stream(&prf::derive(&self.root, "roster", &[round]));
        let k = self.cfg.roster;
        let mut roster: Vec<u32> = match self.cfg.roster_mode {
            RosterMode::Random => {
                let all: Vec<u32> = (0..self.cfg.users as u32).collect();
                all.choose_multiple(&mut rng, k).copied().collect()
            }
            RosterMode::Pinned => {
                let (bad, good): (Vec<u32>, Vec<u32>) =
                    (0..self.cfg.users as u32).partition(|&u| self.roles[u as usize] == Role::Malicious);
                let want = ((self.cfg.attack.fraction * k as f64).round() as usize).min(bad.len());
                let want = want.max(k.saturating_sub(good.len()));
                let mut r: Vec<u32> = bad.choose_multiple(&mut rng, want).copied().collect();
                r.extend(good.choose_multiple(&mut rng, k - want));
                r
            }
        };
        roster.sort_unstable();
        roster
    }

    pub fn run_round(&mut self, round: u64) -> Result<RoundMetrics> {
        let roster = self.select_roster(round);
        self.run_round_with(round, &roster)
    }

    /// One synchronization round over an explicit roster.
    pub fn run_round_with(&mut self, round: u64, roster: &[u32]) -> Result<RoundMetrics> {
        if roster.is_empty() || roster.iter().any(|&u| u as usize >= self.cfg.users) {
            return Err(Error::InvalidInput(format!("roster {roster:?}")));
        }
        let cfg = &self.cfg;
        let model = self.state.model;
        let w = &self.state.w;
        let t0 = Instant::now();
        let grads = roster
            .par_iter()
            .map(|&u| {
                let epochs = match self.roles[u as usize] {
                    Role::Malicious => cfg.attack.epochs,
                    Role::Benign => cfg.local_epochs,
                };
                let mut rng = prf::stream(&prf::derive(&self.root, "train", &[round, u as u64]));
                local_train(&model, w, &self.shards[u as usize], cfg.eta, epochs, cfg.batch_size, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let train_ms = t0.elapsed().as_secs_f64() * 1e3;

        let t1 = Instant::now();
        let refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
        let sq_norms: Vec<f64> = grads.iter().map(|g| sq_norm_plain(g)).collect();
        let (new_w, rates) = match &mut self.encrypted {
            None => {
                let agg = self.aggregator.aggregate(&refs)?;
                (apply_step(w, &agg.direction, cfg.eta)?, agg.weights)
            }
            Some(enc) => {
                let diagnostic = self.aggregator.aggregate(&refs)?.weights;
                for &u in roster {
                    enc.keyrings[u as usize].advance(round)?;
                }
                let updates = roster
                    .par_iter()
                    .zip(&grads)
                    .map(|(&u, g)| {
                        let mut rng = prf::stream(&prf::derive(&self.root, "encrypt", &[round, u as u64]));
                        encrypt_update(&enc.keyrings[u as usize], g, &enc.layout, &enc.public_seed, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let keys: Vec<&UserKeyring> = roster.iter().map(|&u| &enc.keyrings[u as usize]).collect();
                let noise = prf::derive(&self.root, "flood", &[round]);
                let out = secure_aggregate_round(round, &updates, &keys, w, cfg.eta, &noise)?;
                debug_assert_eq!(enc.params.degree(), enc.layout.degree());
                (out.model, diagnostic)
            }
        };
        let aggregate_ms = t1.elapsed().as_secs_f64() * 1e3;
        if new_w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!("non-finite global model after round {round}")));
        }
        let step_norm = sq_norm_plain(&new_w.iter().zip(w).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
        self.state.w = new_w;
        self.state.epoch = round + 1;
        for (&u, &d) in roster.iter().zip(&sq_norms) {
            self.history[u as usize].push(d);
        }

        let t2 = Instant::now();
        let (accuracy, per_class) = model.evaluate(&self.state.w, &self.test);
        let aasr = attack_success_rate(&model, &self.state.w, &self.test, &cfg.attack)?;
        let eval_ms = t2.elapsed().as_secs_f64() * 1e3;
        Ok(RoundMetrics {
            epoch: round,
            accuracy,
            per_class,
            aasr,
            roster: roster.to_vec(),
            malicious: roster.iter().map(|&u| self.roles[u as usize] == Role::Malicious).collect(),
            rates,
            sq_norms,
            step_norm,
            timings: StageTimings {
                train_ms,
                aggregate_ms,
                eval_ms,
            },
        })
    }

    /// `None` when either role class never took part.
    pub fn bound_report(&self) -> Option<BoundReport> {
        weight_bound_check(&self.history, &self.roles).ok()
    }

    /// Runs up to `cfg.rounds` rounds, stopping early once the step norm
    /// falls to `epsilon` when that is positive.
    pub fn run(&mut self, mut on_round: impl FnMut(&RoundMetrics)) -> Result<(Vec<RoundMetrics>, RunSummary)> {
        let mut metrics = Vec::new();
        for round in self.state.epoch..self.cfg.rounds {
            let m = self.run_round(round)?;
            on_round(&m);
            let stop = self.cfg.epsilon > 0.0 && m.step_norm <= self.cfg.epsilon;
            metrics.push(m);
            if stop {
                break;
            }
        }
        let summary = self.summarize(&metrics);
        Ok((metrics, summary))
    }

    fn summarize(&self, metrics: &[RoundMetrics]) -> RunSummary {
        let tail = &metrics[metrics.len().saturating_sub(10)..];
        let mean_aasr = tail.iter().map(|m| m.aasr).sum::<f64>() / tail.len().max(1) as f64;
        let late: Vec<f64> = metrics.iter().skip(5).filter_map(|m| m.mean_rate(true)).collect();
        RunSummary {
            seed: self.seed,
            aggregator: self.aggregator.name().to_string(),
            rounds_run: metrics.len() as u64,
            final_accuracy: metrics.last().map_or(0.0, |m| m.accuracy),
            mean_aasr,
            mean_malicious_rate: (!late.is_empty()).then(|| late.iter().sum::<f64>() / late.len() as f64),
            bound: self.bound_report(),
        }
    }
}

/// Convenience wrapper: one full run per seed.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<RoundMetrics>, RunSummary)> {
    Simulation::new(cfg, seed)?.run(|_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::data::SyntheticSpec;

    fn small(aggregator: &str) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetConfig::Synthetic(SyntheticSpec {
                train: 400,
                test: 200,
                features: 8,
                ..SyntheticSpec::default()
            }),
            users: 8,
            roster: 4,
            rounds: 3,
            aggregator: aggregator.into(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn plain_runs_are_deterministic() {
        let mut cfg = small("fhefl");
        cfg.attack.fraction = 0.2;
        let (a, sa) = run_experiment(&cfg, 4).unwrap();
        let (b, sb) = run_experiment(&cfg, 4).unwrap();
        let strip = |m: &[RoundMetrics]| {
            m.iter()
                .map(|r| (r.accuracy, r.aasr, r.rates.clone(), r.sq_norms.clone(), r.roster.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(sa, sb);
        assert_eq!(sa.rounds_run, 3);
    }

    #[test]
    fn pinned_roster_holds_the_attacker_count() {
        let mut cfg = small("fedavg");
        cfg.users = 100;
        cfg.roster = 10;
        cfg.dataset = DatasetConfig::Synthetic(SyntheticSpec {
            train: 1000,
            test: 100,
            features: 4,
            ..SyntheticSpec::default()
        });
        cfg.attack.fraction = 0.2;
        let sim = Simulation::new(&cfg, 1).unwrap();
        assert_eq!(sim.roles().iter().filter(|r| **r == Role::Malicious).count(), 20);
        for round in 0..20 {
            let r = sim.select_roster(round);
            assert_eq!(r.len(), 10);
            let bad = r.iter().filter(|&&u| sim.roles()[u as usize] == Role::Malicious).count();
            assert_eq!(bad, 2);
        }
    }

    #[test]
    fn identical_shards_make_fhefl_equal_fedavg() {
        let mut cfg_f = small("fhefl");
        cfg_f.batch_size = 1000;
        let cfg_a = ExperimentConfig {
            aggregator: "fedavg".into(),
            ..cfg_f.clone()
        };
        let mut f = Simulation::new(&cfg_f, 2).unwrap();
        let mut a = Simulation::new(&cfg_a, 2).unwrap();
        let same = vec![f.shards()[0].clone(); cfg_f.users];
        f.set_shards(same.clone()).unwrap();
        a.set_shards(same).unwrap();
        let roster = [0, 1, 2, 3];
        for round in 0..3 {
            let mf = f.run_round_with(round, &roster).unwrap();
            let ma = a.run_round_with(round, &roster).unwrap();
            assert_eq!(mf.accuracy, ma.accuracy);
        }
        assert_eq!(f.state().w, a.state().w);
    }

    #[test]
    fn epsilon_stops_early() {
        let mut cfg = small("fedavg");
        cfg.epsilon = 1e9;
        let (m, s) = run_experiment(&cfg, 0).unwrap();
        assert_eq!((m.len(), s.rounds_run), (1, 1));
    }

    #[test]
    fn encrypted_round_tracks_plain_round() {
        let mut plain = small("fhefl");
        plain.rounds = 2;
        plain.attack.fraction = 0.25;
        plain.override_attacker_cap = true;
        let mut enc = plain.clone();
        enc.mode = Mode::Encrypted;
        let mut p = Simulation::new(&plain, 3).unwrap();
        let mut e = Simulation::new(&enc, 3).unwrap();
        for round in 0..2 {
            p.run_round(round).unwrap();
            e.run_round(round).unwrap();
        }
        let scale = p.state().w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in p.state().w.iter().zip(&e.state().w) {
            assert!((a - b).abs() <= 1e-2 * scale, "{a} vs {b}");
        }
    }
}
