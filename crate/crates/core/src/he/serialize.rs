//! Binary encodings of ciphertexts and keys.
//!
//! Every layout starts with a magic tag, a format version and the preset
//! name; ring elements follow in the ring layout.

use std::sync::Arc;

use super::{Ciphertext, EvalKey, HeParams, SecretKey};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::ring::RingElement;

const CT_MAGIC: &[u8; 4] = b"FHCT";
const SK_MAGIC: &[u8; 4] = b"FHSK";
const EVK_MAGIC: &[u8; 4] = b"FHEK";
const VERSION: u16 = 1;

fn write_header(w: &mut Writer, params: &HeParams) {
    w.len_prefixed(params.name().as_bytes());
}

fn read_header(r: &mut Reader<'_>, params: &HeParams) -> Result<()> {
    let name = r.len_prefixed()?;
    if name != params.name().as_bytes() {
        return Err(Error::Decode(format!(
            "encoded for preset `{}`, expected `{}`",
            String::from_utf8_lossy(name),
            params.name()
        )));
    }
    Ok(())
}

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(CT_MAGIC, VERSION);
        self.write_into(&mut w);
        w.finish()
    }

    pub(crate) fn write_into(&self, w: &mut Writer) {
        write_header(w, self.params());
        w.u32(self.level() as u32);
        w.f64(self.scale());
        w.f64(self.bound());
        w.u8(self.parts().len() as u8);
        for p in self.parts() {
            p.write_into(w);
        }
    }

    pub fn from_bytes(params: &Arc<HeParams>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, CT_MAGIC, VERSION)?;
        let ct = Self::read_from(params, &mut r)?;
        r.finish()?;
        Ok(ct)
    }

    pub(crate) fn read_from(params: &Arc<HeParams>, r: &mut Reader<'_>) -> Result<Self> {
        read_header(r, params)?;
        let level = r.u32()? as usize;
        let scale = r.f64()?;
        let bound = r.f64()?;
        if !(scale.is_finite() && scale > 0.0 && bound.is_finite() && bound >= 0.0) {
            return Err(Error::Decode("invalid scale or bound".into()));
        }
        let count = r.u8()? as usize;
        if !(2..=3).contains(&count) {
            return Err(Error::Decode(format!("{count} components")));
        }
        let parts = (0..count)
            .map(|_| RingElement::read_from(params.ring(), r))
            .collect::<Result<Vec<_>>>()?;
        if parts.iter().any(|p| p.level() != level) {
            return Err(Error::Decode("component level disagrees with header".into()));
        }
        Ciphertext::from_parts(params, parts, scale, bound).map_err(|e| Error::Decode(e.to_string()))
    }
}

impl SecretKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(SK_MAGIC, VERSION);
        write_header(&mut w, self.params());
        self.element().write_into(&mut w);
        w.finish()
    }

    pub fn from_bytes(params: &Arc<HeParams>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, SK_MAGIC, VERSION)?;
        read_header(&mut r, params)?;
        let s = RingElement::read_from(params.ring(), &mut r)?;
        r.finish()?;
        SecretKey::from_element(params, s).map_err(|e| Error::Decode(e.to_string()))
    }
}

impl EvalKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(EVK_MAGIC, VERSION);
        write_header(&mut w, self.params());
        w.u32(self.pairs().len() as u32);
        for (b, a) in self.pairs() {
            b.write_into(&mut w);
            a.write_into(&mut w);
        }
        w.finish()
    }

    pub fn from_bytes(params: &Arc<HeParams>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, EVK_MAGIC, VERSION)?;
        read_header(&mut r, params)?;
        let n = r.u32()? as usize;
        if n != params.ring().chain().len() {
            return Err(Error::Decode(format!("{n} key pairs")));
        }
        let mut pairs = Vec::with_capacity(n);
        for _ in 0..n {
            let b = RingElement::read_from(params.ring(), &mut r)?;
            let a = RingElement::read_from(params.ring(), &mut r)?;
            if !b.is_extended() || b.level() != params.max_level() || a.level() != b.level() {
                return Err(Error::Decode("key pair outside the extended top level".into()));
            }
            pairs.push((b, a));
        }
        r.finish()?;
        Ok(EvalKey::from_pairs(params, pairs))
    }
}
