//! Encrypted aggregation round.
//!
//! Per user: encrypted squared norm `[d_u]`, shifted to coefficient 0. The
//! roster-wide `Σ d_u` is opened by masked decryption, each `[d_u]` becomes
//! `[p_u] = (1 - [d_u]/Σd)/(U-1)` by a plaintext affine map, and `[p_u]`
//! multiplies the payload ciphertexts (and any plaintext tail). The sums of
//! the weighted products are opened by masked decryption and applied to the
//! model after dividing by the opened `Σ p_u`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use super::{apply_step, layout::PackingLayout};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result, Stage};
use crate::he::{Ciphertext, EvalKey, HeParams};
use crate::multikey::{combine_partials, MaskTag, UserKeyring};
use crate::prf::{self, Seed};
use crate::ring::{uniform_from_seed, RingElement};

const UPDATE_MAGIC: &[u8; 4] = b"FHEU";
const VERSION: u16 = 1;

const TAG_DISTANCE: u32 = 1;
const TAG_RATES: u32 = 2;
const TAG_PRODUCT: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtRole {
    Forward = 0,
    Reversed = 1,
    Payload = 2,
}

/// Public uniform polynomial shared by every user for one ciphertext slot.
pub fn common_a(params: &HeParams, public_seed: &Seed, epoch: u64, role: CtRole, chunk: usize) -> RingElement {
    let seed = prf::derive(public_seed, "common-a", &[epoch, role as u64, chunk as u64]);
    uniform_from_seed(&seed, params.ring(), params.max_level(), false)
}

/// A user's gradient: forward and reversed norm chunks, dense payload chunks
/// and an optional unencrypted tail.
#[derive(Debug, Clone)]
pub struct EncryptedUpdate {
    pub user: u32,
    pub epoch: u64,
    pub layout: PackingLayout,
    pub forward: Vec<Ciphertext>,
    pub reversed: Vec<Ciphertext>,
    pub payload: Vec<Ciphertext>,
    pub plain_tail: Vec<f64>,
}

impl EncryptedUpdate {
    pub fn dim(&self) -> usize {
        self.layout.dim() + self.plain_tail.len()
    }
}

/// Encrypts the first `layout.dim()` coordinates under the keyring's
/// current secret; the rest travel as a plaintext tail.
pub fn encrypt_update<R: Rng + ?Sized>(
    keyring: &UserKeyring,
    grad: &[f64],
    layout: &PackingLayout,
    public_seed: &Seed,
    rng: &mut R,
) -> Result<EncryptedUpdate> {
    let params = keyring.params();
    if grad.len() < layout.dim() || layout.degree() != params.degree() {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            actual: grad.len(),
        });
    }
    let epoch = keyring.epoch();
    let sk = keyring.secret();
    let mut enc = |role: CtRole, c: usize, coeffs: &[f64]| {
        Ciphertext::encrypt_coeffs(sk, &common_a(params, public_seed, epoch, role, c), coeffs, rng)
    };
    let mut forward = Vec::with_capacity(layout.norm_chunks());
    let mut reversed = Vec::with_capacity(layout.norm_chunks());
    for c in 0..layout.norm_chunks() {
        forward.push(enc(CtRole::Forward, c, &layout.forward_coeffs(grad, c))?);
        reversed.push(enc(CtRole::Reversed, c, &layout.reversed_coeffs(grad, c))?);
    }
    let payload = (0..layout.payload_chunks())
        .map(|c| enc(CtRole::Payload, c, &layout.payload_coeffs(&grad[..layout.dim()], c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EncryptedUpdate {
        user: keyring.user(),
        epoch,
        layout: *layout,
        forward,
        reversed,
        payload,
        plain_tail: grad[layout.dim()..].to_vec(),
    })
}

/// `Σ_c fwd_c × rev_c`, relinearized and rescaled; the squared norm sits at
/// `layout.norm_index()`.
pub fn sq_norm_encrypted(update: &EncryptedUpdate, evk: &EvalKey) -> Result<Ciphertext> {
    let mut acc: Option<Ciphertext> = None;
    for (f, r) in update.forward.iter().zip(&update.reversed) {
        let p = f.mult_relin(r, evk)?;
        acc = Some(match acc {
            None => p,
            Some(a) => a.add(&p)?,
        });
    }
    acc.ok_or_else(|| Error::InvalidInput("update has no norm chunks".into()))
}

/// Moves the squared norm to coefficient 0.
pub fn center_norm(ct: &Ciphertext, layout: &PackingLayout) -> Ciphertext {
    ct.mul_monomial(-(layout.norm_index() as i64))
}

/// `[p_u] = (1 - [d_u]/Σd) / (U - 1)`.
pub fn rates_encrypted(d: &Ciphertext, sum_d: f64, users: usize) -> Result<Ciphertext> {
    if users < 2 {
        return Err(Error::TooFewUsers(users));
    }
    if !(sum_d.is_finite() && sum_d > 0.0) {
        return Err(Error::InvalidInput(format!("distance sum {sum_d} must be positive")));
    }
    let k = 1.0 / (users - 1) as f64;
    d.plain_affine(-k / sum_d, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecureOutcome {
    pub model: Vec<f64>,
    /// `Σ p_u ∇L_u / Σ p_u` as decrypted.
    pub direction: Vec<f64>,
    pub sum_d: f64,
    pub rate_sum: f64,
}

struct Roster<'a> {
    ids: Vec<u32>,
    keys: BTreeMap<u32, &'a UserKeyring>,
    noise_seed: Seed,
}

impl Roster<'_> {
    fn key(&self, u: u32) -> Result<&UserKeyring> {
        self.keys.get(&u).copied().ok_or(Error::MissingUser(u))
    }

    /// Masked decryption of `Σ_u cts[u]` over `range`.
    fn open(&self, cts: &[Ciphertext], tag: MaskTag, range: std::ops::Range<usize>) -> Result<Vec<f64>> {
        let partials = self
            .ids
            .par_iter()
            .zip(cts)
            .map(|(&u, ct)| {
                let coords = [u as u64, tag.stage as u64, tag.chunk as u64];
                let mut rng = prf::stream(&prf::derive(&self.noise_seed, "flood", &coords));
                self.key(u)?.partial_decrypt(ct.c1(), &self.ids, tag, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<(u32, &Ciphertext)> = self.ids.iter().copied().zip(cts).collect();
        combine_partials(&pairs, &partials, &self.ids, range)
    }
}

fn validate(updates: &[EncryptedUpdate], keyrings: &[&UserKeyring], w_prev: &[f64]) -> Result<()> {
    if updates.len() < 2 {
        return Err(Error::TooFewUsers(updates.len()));
    }
    let first = &updates[0];
    if !first.layout.is_pipeline_safe() {
        return Err(Error::InvalidInput("layout cannot carry encrypted rates".into()));
    }
    for u in updates {
        if u.layout != first.layout || u.plain_tail.len() != first.plain_tail.len() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                actual: u.dim(),
            });
        }
        if u.epoch != first.epoch {
            return Err(Error::EpochMismatch {
                expected: first.epoch,
                actual: u.epoch,
            });
        }
        let key = keyrings
            .iter()
            .find(|k| k.user() == u.user)
            .ok_or(Error::MissingUser(u.user))?;
        if key.epoch() != u.epoch {
            return Err(Error::EpochMismatch {
                expected: u.epoch,
                actual: key.epoch(),
            });
        }
    }
    if first.dim() != w_prev.len() {
        return Err(Error::DimensionMismatch {
            expected: w_prev.len(),
            actual: first.dim(),
        });
    }
    Ok(())
}

/// Runs one encrypted aggregation round and returns the updated model.
/// `noise_seed` drives the smudging noise of every partial decryption.
pub fn secure_aggregate_round(
    round: u64,
    updates: &[EncryptedUpdate],
    keyrings: &[&UserKeyring],
    w_prev: &[f64],
    eta: f64,
    noise_seed: &Seed,
) -> Result<SecureOutcome> {
    validate(updates, keyrings, w_prev).map_err(|e| e.at(round, Stage::SquaredNorm))?;
    let roster = Roster {
        ids: updates.iter().map(|u| u.user).collect(),
        keys: keyrings.iter().map(|k| (k.user(), *k)).collect(),
        noise_seed: *noise_seed,
    };
    let users = updates.len();
    let layout = updates[0].layout;

    let d = updates
        .par_iter()
        .map(|u| {
            let evk = roster.key(u.user)?.eval_key()?;
            Ok(center_norm(&sq_norm_encrypted(u, evk)?, &layout))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at(round, Stage::SquaredNorm))?;

    let distance_tag = MaskTag {
        stage: TAG_DISTANCE,
        chunk: 0,
    };
    let sum_d = roster
        .open(&d, distance_tag, 0..1)
        .map_err(|e| e.at(round, Stage::DistanceSum))?[0];

    let flood = keyrings.iter().map(|k| k.flood_sigma()).fold(0.0, f64::max);
    let tolerance = 12.0 * users as f64 * flood / d[0].scale();
    let rates = d
        .par_iter()
        .map(|dc| {
            if sum_d > tolerance {
                rates_encrypted(dc, sum_d, users)
            } else {
                dc.plain_affine(0.0, 1.0 / users as f64)
            }
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at(round, Stage::Rates))?;
    let rate_tag = MaskTag {
        stage: TAG_RATES,
        chunk: 0,
    };
    let rate_sum = roster
        .open(&rates, rate_tag, 0..1)
        .map_err(|e| e.at(round, Stage::Rates))?[0];
    if !(rate_sum.is_finite() && rate_sum > 0.0) {
        return Err(Error::Degenerate(format!("rate sum {rate_sum}")).at(round, Stage::Rates));
    }

    let tail_len = updates[0].plain_tail.len();
    let tail_chunks = tail_len.div_ceil(layout.payload_chunk());
    let products: Vec<Vec<Ciphertext>> = updates
        .par_iter()
        .zip(&rates)
        .map(|(u, p)| {
            let evk = roster.key(u.user)?.eval_key()?;
            let mut out = Vec::with_capacity(u.payload.len() + tail_chunks);
            for ct in &u.payload {
                out.push(p.mult_relin(&ct.mod_drop(p.level())?, evk)?);
            }
            for c in 0..tail_chunks {
                out.push(p.mul_plain_coeffs(&layout.payload_coeffs(&u.plain_tail, c))?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at(round, Stage::WeightedProduct))?;

    let chunk_lens: Vec<usize> = (0..layout.payload_chunks())
        .map(|c| layout.payload_coeffs(&vec![0.0; layout.dim()], c).len())
        .chain((0..tail_chunks).map(|c| layout.payload_coeffs(&updates[0].plain_tail, c).len()))
        .collect();
    let opened = chunk_lens
        .par_iter()
        .enumerate()
        .map(|(c, &len)| {
            let column: Vec<Ciphertext> = products.iter().map(|p| p[c].clone()).collect();
            let tag = MaskTag {
                stage: TAG_PRODUCT,
                chunk: c as u32,
            };
            roster.open(&column, tag, 0..len)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at(round, Stage::FinalDecryption))?;

    let direction: Vec<f64> = opened.into_iter().flatten().map(|x| x / rate_sum).collect();
    let model = apply_step(w_prev, &direction, eta).map_err(|e| e.at(round, Stage::ModelUpdate))?;
    Ok(SecureOutcome {
        model,
        direction,
        sum_d,
        rate_sum,
    })
}

impl EncryptedUpdate {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(UPDATE_MAGIC, VERSION);
        w.u32(self.user);
        w.u64(self.epoch);
        let l = &self.layout;
        for v in [l.degree(), l.dim(), l.stride(), l.norm_chunk(), l.payload_chunk()] {
            w.u64(v as u64);
        }
        for group in [&self.forward, &self.reversed, &self.payload] {
            w.u32(group.len() as u32);
            for ct in group {
                ct.write_into(&mut w);
            }
        }
        w.u64(self.plain_tail.len() as u64);
        for &x in &self.plain_tail {
            w.f64(x);
        }
        w.finish()
    }

    pub fn from_bytes(params: &Arc<HeParams>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, UPDATE_MAGIC, VERSION)?;
        let user = r.u32()?;
        let epoch = r.u64()?;
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = usize::try_from(r.u64()?).map_err(|_| Error::Decode("layout overflow".into()))?;
        }
        let layout = PackingLayout::new(dims[0], dims[1], dims[2], dims[3], dims[4])
            .map_err(|e| Error::Decode(e.to_string()))?;
        let mut groups = Vec::with_capacity(3);
        for _ in 0..3 {
            let n = r.u32()? as usize;
            let g = (0..n)
                .map(|_| Ciphertext::read_from(params, &mut r))
                .collect::<Result<Vec<_>>>()?;
            groups.push(g);
        }
        let tail_len = r.u64()? as usize;
        if tail_len > bytes.len() / 8 {
            return Err(Error::Decode("tail longer than input".into()));
        }
        let plain_tail = (0..tail_len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        let payload = groups.pop().expect("three groups");
        let reversed = groups.pop().expect("three groups");
        let forward = groups.pop().expect("three groups");
        if forward.len() != layout.norm_chunks()
            || reversed.len() != layout.norm_chunks()
            || payload.len() != layout.payload_chunks()
        {
            return Err(Error::Decode("chunk counts disagree with layout".into()));
        }
        Ok(Self {
            user,
            epoch,
            layout,
            forward,
            reversed,
            payload,
            plain_tail,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agg::{non_poisoning_rates, sq_norm_plain, weighted_aggregate_plain};
    use crate::multikey::setup_pairwise;
    use crate::he::HeParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct World {
        params: Arc<HeParams>,
        keys: Vec<UserKeyring>,
        public: Seed,
        rng: ChaCha8Rng,
    }

    fn world(users: u32) -> World {
        let params = HeParams::preset("test-1024").unwrap();
        let ids: Vec<u32> = (0..users).collect();
        let keys = setup_pairwise(&params, &ids, &prf::seed_from_u64(5)).unwrap();
        World {
            params,
            keys,
            public: prf::seed_from_u64(6),
            rng: ChaCha8Rng::seed_from_u64(7),
        }
    }

    impl World {
        fn encrypt(&mut self, grads: &[Vec<f64>], layout: &PackingLayout) -> Vec<EncryptedUpdate> {
            grads
                .iter()
                .zip(&self.keys)
                .map(|(g, k)| encrypt_update(k, g, layout, &self.public, &mut self.rng).unwrap())
                .collect()
        }

        fn key_refs(&self) -> Vec<&UserKeyring> {
            self.keys.iter().collect()
        }
    }

    #[test]
    fn dense_norm_of_hand_vector() {
        let mut w = world(2);
        let layout = PackingLayout::dense(w.params.degree(), 3).unwrap();
        let eu = w.encrypt(&[vec![1.0, 2.0, 3.0]], &layout).remove(0);
        let d = sq_norm_encrypted(&eu, w.keys[0].eval_key().unwrap()).unwrap();
        let c = d.decrypt_coeffs(w.keys[0].secret(), 2..3).unwrap();
        assert!((c[0] - 14.0).abs() < 1e-2);
    }

    #[test]
    fn zero_and_long_gradient_norms() {
        let mut w = world(2);
        let layout = PackingLayout::pipeline(w.params.degree(), 1024).unwrap();
        let g: Vec<f64> = (0..1024).map(|i| ((i * 7919) % 200) as f64 / 100.0 - 1.0).collect();
        let eus = w.encrypt(&[g.clone(), vec![0.0; 1024]], &layout);
        for (eu, want) in eus.iter().zip([sq_norm_plain(&g), 0.0]) {
            let key = &w.keys[eu.user as usize];
            let d = center_norm(&sq_norm_encrypted(eu, key.eval_key().unwrap()).unwrap(), &layout);
            let got = d.decrypt_coeffs(key.secret(), 0..1).unwrap()[0];
            assert!((got - want).abs() <= 1e-3 * want.max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn encrypted_rate_examples() {
        let mut w = world(2);
        let layout = PackingLayout::pipeline(w.params.degree(), 1).unwrap();
        let eu = w.encrypt(&[vec![1.0]], &layout).remove(0);
        let key = &w.keys[0];
        let d = center_norm(&sq_norm_encrypted(&eu, key.eval_key().unwrap()).unwrap(), &layout);
        let p = rates_encrypted(&d, 4.0, 2).unwrap();
        assert!((p.decrypt_coeffs(key.secret(), 0..1).unwrap()[0] - 0.75).abs() < 1e-2);
        let edge = rates_encrypted(&d, 1.0, 2).unwrap();
        assert!(edge.decrypt_coeffs(key.secret(), 0..1).unwrap()[0].abs() < 1e-2);
        let equal = rates_encrypted(&d, 10.0, 10).unwrap();
        assert!((equal.decrypt_coeffs(key.secret(), 0..1).unwrap()[0] - 0.1).abs() < 1e-2);
        assert!(rates_encrypted(&d, 0.0, 2).is_err());
        assert!(rates_encrypted(&d, 1.0, 1).is_err());
    }

    #[test]
    fn pipeline_matches_plain_oracle() {
        let mut w = world(4);
        let dim = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grads: Vec<Vec<f64>> = (0..4)
            .map(|u| (0..dim).map(|_| rng.random_range(-1.0..1.0) * (1.0 + u as f64)).collect())
            .collect();
        let layout = PackingLayout::pipeline(w.params.degree(), dim).unwrap();
        let eus = w.encrypt(&grads, &layout);
        let w_prev: Vec<f64> = (0..dim).map(|i| i as f64 * 0.01).collect();
        let out = secure_aggregate_round(0, &eus, &w.key_refs(), &w_prev, 0.5, &prf::seed_from_u64(1)).unwrap();
        let refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
        let d: Vec<f64> = grads.iter().map(|g| sq_norm_plain(g)).collect();
        let rates = non_poisoning_rates(&d).unwrap();
        let want_dir = crate::agg::weighted_sum(&refs, &rates).unwrap();
        let scale = want_dir.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for (a, b) in out.direction.iter().zip(&want_dir) {
            assert!((a - b).abs() <= 1e-2 * scale);
        }
        let want = weighted_aggregate_plain(&w_prev, &refs, &rates, 0.5).unwrap();
        for (a, b) in out.model.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-2 * scale);
        }
        assert!((out.rate_sum - 1.0).abs() < 1e-2);
        assert!((out.sum_d - d.iter().sum::<f64>()).abs() < 1e-2 * out.sum_d);
    }

    #[test]
    fn identical_gradients_give_fedavg_and_outlier_is_downweighted() {
        let mut w = world(4);
        let dim = 4;
        let layout = PackingLayout::pipeline(w.params.degree(), dim).unwrap();
        let same = vec![vec![0.5, -0.25, 1.0, 0.0]; 4];
        let eus = w.encrypt(&same, &layout);
        let out = secure_aggregate_round(0, &eus, &w.key_refs(), &[0.0; 4], 1.0, &prf::seed_from_u64(2)).unwrap();
        for (a, b) in out.direction.iter().zip(&same[0]) {
            assert!((a - b).abs() < 1e-3);
        }
        // orthogonal gradients expose each user's weight; user 0 has 10x norm
        let mut grads = vec![vec![0.0; dim]; 4];
        for (u, g) in grads.iter_mut().enumerate() {
            g[u] = if u == 0 { 10.0 } else { 1.0 };
        }
        let eus = w.encrypt(&grads, &layout);
        let out = secure_aggregate_round(1, &eus, &w.key_refs(), &[0.0; 4], 1.0, &prf::seed_from_u64(3)).unwrap();
        let p0 = out.direction[0] / 10.0;
        assert!(p0 < 0.25, "weight {p0}");
    }

    #[test]
    fn first_layer_mode_and_zero_gradients() {
        let mut w = world(3);
        let layout = PackingLayout::pipeline(w.params.degree(), 6).unwrap();
        let grads = vec![
            vec![1.0, 0.0, 0.5, 0.0, 0.0, 0.0, 2.0, -1.0, 0.5],
            vec![0.0, 1.0, 0.0, 0.5, 0.0, 0.0, 1.0, 1.0, -0.5],
            vec![0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 4.0, 0.0],
        ];
        let eus = w.encrypt(&grads, &layout);
        assert_eq!(eus[0].plain_tail.len(), 3);
        let out = secure_aggregate_round(0, &eus, &w.key_refs(), &[0.0; 9], 1.0, &prf::seed_from_u64(4)).unwrap();
        let refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
        let d: Vec<f64> = grads.iter().map(|g| sq_norm_plain(&g[..6])).collect();
        let rates = non_poisoning_rates(&d).unwrap();
        let want = weighted_aggregate_plain(&[0.0; 9], &refs, &rates, 1.0).unwrap();
        for (a, b) in out.model.iter().zip(&want) {
            assert!((a - b).abs() < 1e-2);
        }
        let zeros = w.encrypt(&vec![vec![0.0; 9]; 3], &layout);
        let out = secure_aggregate_round(1, &zeros, &w.key_refs(), &[1.0; 9], 1.0, &prf::seed_from_u64(4)).unwrap();
        assert!(out.model.iter().all(|x| (x - 1.0).abs() < 1e-3));
    }

    #[test]
    fn errors_carry_stage() {
        let mut w = world(2);
        let layout = PackingLayout::pipeline(w.params.degree(), 2).unwrap();
        let eus = w.encrypt(&[vec![1.0, 0.0], vec![0.0, 1.0]], &layout);
        let only_one = vec![&w.keys[0]];
        match secure_aggregate_round(3, &eus, &only_one, &[0.0; 2], 1.0, &prf::seed_from_u64(0)) {
            Err(Error::Pipeline { round: 3, stage: Stage::SquaredNorm, source }) => {
                assert!(matches!(*source, Error::MissingUser(1)));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_model = secure_aggregate_round(0, &eus, &w.key_refs(), &[0.0; 5], 1.0, &prf::seed_from_u64(0));
        assert!(matches!(bad_model, Err(Error::Pipeline { .. })));
    }

    #[test]
    fn update_wire_roundtrip() {
        let mut w = world(2);
        let layout = PackingLayout::pipeline(w.params.degree(), 40).unwrap();
        let g: Vec<f64> = (0..45).map(|i| i as f64 / 10.0).collect();
        let eu = w.encrypt(&[g], &layout).remove(0);
        let back = EncryptedUpdate::from_bytes(&w.params, &eu.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), eu.to_bytes());
        assert_eq!(back.plain_tail.len(), 5);
    }
}
