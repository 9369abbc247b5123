//! Scheme parameters and the named preset registry.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ring::{ntt_primes, RingParams};

pub const PRESET_NAMES: [&str; 4] = ["fhefl-8192", "fhefl-16384", "test-16", "test-1024"];

/// Ring parameters plus the fixed-point scale `2^scale_bits`.
#[derive(Debug)]
pub struct HeParams {
    name: String,
    ring: Arc<RingParams>,
    scale_bits: u32,
}

/// Human-readable parameter summary.
#[derive(Debug, Clone, Serialize)]
pub struct ParamReport {
    pub name: String,
    pub degree: usize,
    pub chain_bits: Vec<u32>,
    pub special_bits: Option<u32>,
    pub log_q: u32,
    pub scale_bits: u32,
    pub levels: usize,
    pub slots: usize,
    pub security: String,
}

struct Recipe {
    degree: usize,
    base: (u32, usize),
    rescale: (u32, usize),
    special: u32,
    scale_bits: u32,
}

fn recipe(name: &str) -> Option<Recipe> {
    let r = match name {
        "fhefl-8192" => Recipe {
            degree: 8192,
            base: (59, 1),
            rescale: (25, 4),
            special: 59,
            scale_bits: 25,
        },
        "fhefl-16384" => Recipe {
            degree: 16384,
            base: (46, 3),
            rescale: (60, 4),
            special: 60,
            scale_bits: 60,
        },
        "test-16" => Recipe {
            degree: 16,
            base: (50, 1),
            rescale: (30, 1),
            special: 50,
            scale_bits: 30,
        },
        "test-1024" => Recipe {
            degree: 1024,
            base: (60, 1),
            rescale: (40, 4),
            special: 60,
            scale_bits: 40,
        },
        _ => return None,
    };
    Some(r)
}

impl HeParams {
    /// Builds a named preset. Primes are the largest NTT-friendly primes
    /// below each bit width, so presets are reproducible.
    pub fn preset(name: &str) -> Result<Arc<Self>> {
        let r = recipe(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
        let mut used = Vec::new();
        let base = ntt_primes(r.base.0, r.base.1, r.degree, &used)?;
        used.extend(&base);
        let rescale = ntt_primes(r.rescale.0, r.rescale.1, r.degree, &used)?;
        used.extend(&rescale);
        let special = ntt_primes(r.special, 1, r.degree, &used)?[0];
        let chain: Vec<u64> = base.iter().chain(&rescale).copied().collect();
        let ring = RingParams::new(r.degree, &chain, r.base.1, Some(special))?;
        Self::custom(name, ring, r.scale_bits)
    }

    /// Wraps arbitrary ring parameters. Every multiplication must leave
    /// headroom at level 1: `Δ^2 < Q_1`.
    pub fn custom(name: &str, ring: Arc<RingParams>, scale_bits: u32) -> Result<Arc<Self>> {
        if scale_bits == 0 || scale_bits > 100 {
            return Err(Error::InvalidParams(format!("scale bits {scale_bits}")));
        }
        if ring.max_level() >= 1 && 2.0 * scale_bits as f64 >= ring.log_modulus(1) {
            return Err(Error::InvalidParams(format!(
                "scale 2^{scale_bits} leaves no multiplication headroom"
            )));
        }
        Ok(Arc::new(Self {
            name: name.to_string(),
            ring,
            scale_bits,
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ring(&self) -> &Arc<RingParams> {
        &self.ring
    }

    pub fn degree(&self) -> usize {
        self.ring.degree()
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    pub fn scale(&self) -> f64 {
        (self.scale_bits as f64).exp2()
    }

    pub fn max_level(&self) -> usize {
        self.ring.max_level()
    }

    /// Maximum message length `N/2`, so forward-reversed products never wrap.
    pub fn slot_capacity(&self) -> usize {
        self.degree() / 2
    }

    pub fn log_q(&self) -> u32 {
        self.ring.total_bits()
    }

    /// Largest encodable magnitude: `2^(log q_0 - Δbits - 1)`.
    pub fn value_bound(&self) -> f64 {
        (self.ring.log_modulus(0) - self.scale_bits as f64 - 1.0).exp2()
    }

    pub fn report(&self) -> ParamReport {
        let security = match (self.degree(), self.log_q()) {
            (n, q) if n >= 16384 && q <= 438 => "~128-bit (HE standard table)",
            (n, q) if n >= 8192 && q <= 218 => "~128-bit (HE standard table)",
            _ => "none (test parameters)",
        };
        ParamReport {
            name: self.name.clone(),
            degree: self.degree(),
            chain_bits: self.ring.chain().iter().map(|q| q.bits()).collect(),
            special_bits: self.ring.special().map(|q| q.bits()),
            log_q: self.log_q(),
            scale_bits: self.scale_bits,
            levels: self.max_level(),
            slots: self.slot_capacity(),
            security: security.to_string(),
        }
    }
}
