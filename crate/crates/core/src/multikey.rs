//! Multi-key secret sharing and decryption.
//!
//! Every user holds a fresh secret `s_u` per epoch and one PRF seed per peer.
//! Pairwise secrets satisfy `s_{u,j} = -s_{j,u}`, so masked keys
//! `ss_u = s_u + Σ_j s_{u,j}` sum to the group key `Σ s_u` over a complete
//! roster. Fresh ciphertexts sharing `c1 = a` decrypt with the group key;
//! ciphertexts with per-user `c1` use masked partial decryptions whose
//! pairwise masks cancel only in the roster-wide sum.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::sync::{Arc, OnceLock};

use rand::Rng;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::he::{decode_coeffs, Ciphertext, EvalKey, HeParams, Packing, SecretKey};
use crate::prf::{self, Seed};
use crate::ring::{sample_error_coeffs, uniform_from_seed, Domain, RingElement, ERROR_SIGMA};

/// Standard deviation of the smudging noise in partial decryptions.
pub const FLOOD_SIGMA: f64 = ERROR_SIGMA * 1_048_576.0;

const MASKED_KEY_MAGIC: &[u8; 4] = b"FHMK";
const PARTIAL_MAGIC: &[u8; 4] = b"FHPD";
const C1_MAGIC: &[u8; 4] = b"FHC1";
const VERSION: u16 = 1;

/// Identifies one masked decryption so that its pairwise masks are never
/// reused for another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MaskTag {
    pub stage: u32,
    pub chunk: u32,
}

/// Per-user private key material.
#[derive(Debug, Clone)]
pub struct UserKeyring {
    params: Arc<HeParams>,
    user: u32,
    private_seed: Seed,
    pair_seeds: BTreeMap<u32, Seed>,
    epoch: u64,
    secret: SecretKey,
    /// Generated on first use; most epochs of most users never need it.
    evk: OnceLock<EvalKey>,
    flood_sigma: f64,
}

/// Derives one keyring per user from a master seed standing in for pairwise
/// key agreement. Keyrings start at epoch 0.
pub fn setup_pairwise(
    params: &Arc<HeParams>,
    user_ids: &[u32],
    master: &Seed,
) -> Result<Vec<UserKeyring>> {
    if user_ids.len() < 2 {
        return Err(Error::TooFewUsers(user_ids.len()));
    }
    let mut seen = BTreeSet::new();
    for &u in user_ids {
        if !seen.insert(u) {
            return Err(Error::DuplicateUser(u));
        }
    }
    user_ids
        .iter()
        .map(|&u| {
            let pair_seeds = user_ids
                .iter()
                .filter(|&&j| j != u)
                .map(|&j| {
                    let (lo, hi) = (u.min(j) as u64, u.max(j) as u64);
                    (j, prf::derive(master, "pair", &[lo, hi]))
                })
                .collect();
            UserKeyring::new(params, u, prf::derive(master, "user", &[u as u64]), pair_seeds)
        })
        .collect()
}

impl UserKeyring {
    fn new(
        params: &Arc<HeParams>,
        user: u32,
        private_seed: Seed,
        pair_seeds: BTreeMap<u32, Seed>,
    ) -> Result<Self> {
        let secret = Self::epoch_secret(params, &private_seed, 0);
        Ok(Self {
            params: params.clone(),
            user,
            private_seed,
            pair_seeds,
            epoch: 0,
            secret,
            evk: OnceLock::new(),
            flood_sigma: FLOOD_SIGMA,
        })
    }

    fn epoch_secret(params: &Arc<HeParams>, seed: &Seed, epoch: u64) -> SecretKey {
        SecretKey::from_seed(params, &prf::derive(seed, "secret", &[epoch]))
    }

    /// Regenerates the secret, evaluation key and pairwise secrets for a new
    /// epoch.
    pub fn advance(&mut self, epoch: u64) -> Result<()> {
        if epoch != self.epoch {
            self.secret = Self::epoch_secret(&self.params, &self.private_seed, epoch);
            self.evk = OnceLock::new();
            self.epoch = epoch;
        }
        Ok(())
    }

    pub fn set_flood_sigma(&mut self, sigma: f64) {
        self.flood_sigma = sigma;
    }

    pub fn flood_sigma(&self) -> f64 {
        self.flood_sigma
    }

    pub fn params(&self) -> &Arc<HeParams> {
        &self.params
    }

    pub fn user(&self) -> u32 {
        self.user
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn secret(&self) -> &SecretKey {
        &self.secret
    }

    /// Relinearization key for the current epoch.
    pub fn eval_key(&self) -> Result<&EvalKey> {
        if let Some(k) = self.evk.get() {
            return Ok(k);
        }
        let seed = prf::derive(&self.private_seed, "evk", &[self.epoch]);
        let evk = EvalKey::generate(&self.secret, &mut prf::stream(&seed))?;
        Ok(self.evk.get_or_init(|| evk))
    }

    pub fn peers(&self) -> impl Iterator<Item = u32> + '_ {
        self.pair_seeds.keys().copied()
    }

    fn pair_seed(&self, peer: u32) -> Result<&Seed> {
        self.pair_seeds.get(&peer).ok_or(Error::UnknownUser(peer))
    }

    /// `+r` for the smaller id of the pair, `-r` for the larger.
    fn signed(&self, peer: u32, r: RingElement) -> RingElement {
        if self.user < peer {
            r
        } else {
            r.neg()
        }
    }

    /// Uniform pairwise secret `s_{u,peer}` for the current epoch.
    pub fn pairwise_secret(&self, peer: u32) -> Result<RingElement> {
        let ring = self.params.ring();
        let seed = prf::derive(self.pair_seed(peer)?, "pair-secret", &[self.epoch]);
        let r = uniform_from_seed(&seed, ring, ring.max_level(), ring.special().is_some());
        Ok(self.signed(peer, r))
    }

    /// `ss_u = s_u + Σ_{j in roster, j != u} s_{u,j}`.
    pub fn mask_key(&self, roster: &[u32]) -> Result<MaskedKey> {
        let mut ss = self.secret.element().clone();
        for &j in roster.iter().filter(|&&j| j != self.user) {
            ss = ss.add(&self.pairwise_secret(j)?)?;
        }
        Ok(MaskedKey {
            user: self.user,
            epoch: self.epoch,
            ss,
        })
    }

    /// One-time pairwise mask `r_{u,peer}` for a decryption at `level`.
    pub fn pair_mask(&self, peer: u32, level: usize, tag: MaskTag) -> Result<RingElement> {
        let coords = [self.epoch, tag.stage as u64, tag.chunk as u64, level as u64];
        let seed = prf::derive(self.pair_seed(peer)?, "mask", &coords);
        let r = uniform_from_seed(&seed, self.params.ring(), level, false);
        Ok(self.signed(peer, r))
    }

    /// `ps_u = c1·s_u + e_flood + Σ_j r_{u,j}` over the other roster members.
    pub fn partial_decrypt<R: Rng + ?Sized>(
        &self,
        c1: &RingElement,
        roster: &[u32],
        tag: MaskTag,
        rng: &mut R,
    ) -> Result<PartialDecryption> {
        if !roster.contains(&self.user) {
            return Err(Error::UnknownUser(self.user));
        }
        let masks = roster
            .iter()
            .filter(|&&j| j != self.user)
            .map(|&j| self.pair_mask(j, c1.level(), tag))
            .collect::<Result<Vec<_>>>()?;
        let share = partial_share(c1, &self.secret, &masks, self.flood_sigma, rng)?;
        Ok(PartialDecryption {
            user: self.user,
            epoch: self.epoch,
            tag,
            share,
        })
    }
}

/// `c1·s + flood + Σ masks`, the raw share behind a partial decryption.
pub fn partial_share<R: Rng + ?Sized>(
    c1: &RingElement,
    sk: &SecretKey,
    masks: &[RingElement],
    flood_sigma: f64,
    rng: &mut R,
) -> Result<RingElement> {
    let s = sk.at_level(c1.level())?;
    let mut share = c1.to_domain(Domain::Ntt).mul(&s)?;
    let flood = sample_error_coeffs(rng, c1.degree(), flood_sigma);
    share = share.add(&RingElement::from_signed(sk.params().ring(), &flood, c1.level(), false)?)?;
    for m in masks {
        share = share.add(m)?;
    }
    Ok(share)
}

/// A user's masked secret for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedKey {
    pub user: u32,
    pub epoch: u64,
    pub ss: RingElement,
}

/// One user's share in a masked decryption.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialDecryption {
    pub user: u32,
    pub epoch: u64,
    pub tag: MaskTag,
    pub share: RingElement,
}

/// Checks that `ids` cover `roster` exactly once each.
fn check_roster(roster: &[u32], ids: impl IntoIterator<Item = u32>) -> Result<()> {
    let expected: BTreeSet<u32> = roster.iter().copied().collect();
    let mut seen = BTreeSet::new();
    for u in ids {
        if !expected.contains(&u) {
            return Err(Error::UnknownUser(u));
        }
        if !seen.insert(u) {
            return Err(Error::DuplicateUser(u));
        }
    }
    if let Some(&missing) = expected.difference(&seen).next() {
        return Err(Error::MissingUser(missing));
    }
    Ok(())
}

/// `Σ ss_u`, which equals `Σ s_u` over a complete roster.
pub fn reconstruct_group_key(
    params: &Arc<HeParams>,
    roster: &[u32],
    epoch: u64,
    masked: &[MaskedKey],
) -> Result<SecretKey> {
    if let Some(k) = masked.iter().find(|k| k.epoch != epoch) {
        return Err(Error::EpochMismatch {
            expected: epoch,
            actual: k.epoch,
        });
    }
    check_roster(roster, masked.iter().map(|k| k.user))?;
    let mut sum = masked[0].ss.clone();
    for k in &masked[1..] {
        sum = sum.add(&k.ss)?;
    }
    SecretKey::from_element(params, sum)
}

/// Sums fresh ciphertexts that share `c1 = a` into `(Σ c0, a)`, which
/// decrypts under the group key.
pub fn sum_fresh(cts: &[Ciphertext]) -> Result<Ciphertext> {
    let first = cts.first().ok_or(Error::TooFewUsers(0))?;
    let mut c0 = first.c0().clone();
    let mut bound = first.bound();
    for ct in &cts[1..] {
        if ct.c1() != first.c1() || ct.parts().len() != 2 {
            return Err(Error::MismatchedC1);
        }
        if ct.scale() != first.scale() {
            return Err(Error::ScaleMismatch {
                left: first.scale(),
                right: ct.scale(),
            });
        }
        c0 = c0.add(ct.c0())?;
        bound += ct.bound();
    }
    Ciphertext::from_parts(first.params(), vec![c0, first.c1().clone()], first.scale(), bound)
}

/// Decrypts the sum of fresh same-`a` ciphertexts with the group key.
pub fn aggregate_fresh(
    cts: &[Ciphertext],
    group_key: &SecretKey,
    len: usize,
    packing: Packing,
) -> Result<Vec<f64>> {
    sum_fresh(cts)?.decrypt(group_key, len, packing)
}

/// `Σ c0_u - Σ ps_u` decoded over `range`. `cts` pairs each roster member
/// with the two-component ciphertext whose `c1` it partially decrypted.
pub fn combine_partials(
    cts: &[(u32, &Ciphertext)],
    partials: &[PartialDecryption],
    roster: &[u32],
    range: Range<usize>,
) -> Result<Vec<f64>> {
    check_roster(roster, cts.iter().map(|(u, _)| *u))?;
    check_roster(roster, partials.iter().map(|p| p.user))?;
    let first = cts[0].1;
    let (epoch, tag) = (partials[0].epoch, partials[0].tag);
    if let Some(p) = partials.iter().find(|p| p.epoch != epoch) {
        return Err(Error::EpochMismatch {
            expected: epoch,
            actual: p.epoch,
        });
    }
    if partials.iter().any(|p| p.tag != tag) {
        return Err(Error::InvalidInput("partials answer different requests".into()));
    }
    let mut acc = RingElement::zero(first.params().ring(), first.level(), false, Domain::Ntt);
    for (_, ct) in cts {
        if ct.parts().len() != 2 {
            return Err(Error::ComponentCount {
                expected: 2,
                actual: ct.parts().len(),
            });
        }
        if ct.level() != first.level() {
            return Err(Error::LevelMismatch {
                left: first.level(),
                right: ct.level(),
            });
        }
        if ct.scale() != first.scale() {
            return Err(Error::ScaleMismatch {
                left: first.scale(),
                right: ct.scale(),
            });
        }
        acc = acc.add(ct.c0())?;
    }
    for p in partials {
        acc = acc.sub(&p.share)?;
    }
    Ok(decode_coeffs(&acc, first.scale(), range))
}

/// Pairs `(u, j)` whose mask `r_{u,j}` stays uncancelled when only the
/// partials of `subset` are combined.
pub fn uncancelled_masks(roster: &[u32], subset: &[u32]) -> Vec<(u32, u32)> {
    let inside: BTreeSet<u32> = subset.iter().copied().collect();
    let mut out = Vec::new();
    for &u in subset {
        for &j in roster {
            if j != u && !inside.contains(&j) {
                out.push((u, j));
            }
        }
    }
    out
}

impl MaskedKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MASKED_KEY_MAGIC, VERSION);
        w.u32(self.user);
        w.u64(self.epoch);
        self.ss.write_into(&mut w);
        w.finish()
    }

    pub fn from_bytes(params: &Arc<HeParams>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, MASKED_KEY_MAGIC, VERSION)?;
        let user = r.u32()?;
        let epoch = r.u64()?;
        let ss = RingElement::read_from(params.ring(), &mut r)?;
        r.finish()?;
        Ok(Self { user, epoch, ss })
    }
}

impl PartialDecryption {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(PARTIAL_MAGIC, VERSION);
        w.u32(self.user);
        w.u64(self.epoch);
        w.u32(self.tag.stage);
        w.u32(self.tag.chunk);
        self.share.write_into(&mut w);
        w.finish()
    }

    pub fn from_bytes(params: &Arc<HeParams>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, PARTIAL_MAGIC, VERSION)?;
        let user = r.u32()?;
        let epoch = r.u64()?;
        let tag = MaskTag {
            stage: r.u32()?,
            chunk: r.u32()?,
        };
        let share = RingElement::read_from(params.ring(), &mut r)?;
        r.finish()?;
        Ok(Self {
            user,
            epoch,
            tag,
            share,
        })
    }
}

/// Server request asking a user to partially decrypt its `c1`.
#[derive(Debug, Clone, PartialEq)]
pub struct C1Request {
    pub epoch: u64,
    pub user: u32,
    pub tag: MaskTag,
    pub c1: RingElement,
}

impl C1Request {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(C1_MAGIC, VERSION);
        w.u64(self.epoch);
        w.u32(self.user);
        w.u32(self.tag.stage);
        w.u32(self.tag.chunk);
        self.c1.write_into(&mut w);
        w.finish()
    }

    pub fn from_bytes(params: &Arc<HeParams>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, C1_MAGIC, VERSION)?;
        let epoch = r.u64()?;
        let user = r.u32()?;
        let tag = MaskTag {
            stage: r.u32()?,
            chunk: r.u32()?,
        };
        let c1 = RingElement::read_from(params.ring(), &mut r)?;
        r.finish()?;
        Ok(Self {
            epoch,
            user,
            tag,
            c1,
        })
    }
}
