//! Binary encoding of [`ActorCritic`] parameters.
//!
//! Layout, all little-endian: magic `b"EMKT"`, `u32` version, then the actor
//! (`u32` layer-size count, `u32` sizes, `f64` params), the two `f64`
//! log-std entries, and the critic in the actor's layout.

use alloc::vec::Vec;

use thiserror::Error;

use super::{ActorCritic, Mlp};
use crate::rl::{ACT_DIM, OBS_DIM};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"EMKT";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("trailing bytes after checkpoint")]
    Trailing,
    #[error("network shape mismatch: {0}")]
    Shape(&'static str),
    #[error("non-finite parameter")]
    NonFinite,
}

pub fn encode_checkpoint(params: &ActorCritic) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_mlp(&mut out, &params.actor);
    for ls in params.log_std {
        out.extend_from_slice(&ls.to_le_bytes());
    }
    put_mlp(&mut out, &params.critic);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ActorCritic, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let actor = r.mlp()?;
    let log_std = [r.f64()?, r.f64()?];
    let critic = r.mlp()?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing);
    }
    if actor.input_dim() != OBS_DIM || actor.output_dim() != ACT_DIM {
        return Err(CheckpointError::Shape("actor"));
    }
    if critic.input_dim() != OBS_DIM || critic.output_dim() != 1 {
        return Err(CheckpointError::Shape("critic"));
    }
    let ac = ActorCritic { actor, critic, log_std };
    if !ac.is_finite() {
        return Err(CheckpointError::NonFinite);
    }
    Ok(ac)
}

fn put_mlp(out: &mut Vec<u8>, net: &Mlp) {
    out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
    for &s in net.sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn mlp(&mut self) -> Result<Mlp, CheckpointError> {
        let n = self.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(CheckpointError::Shape("layer count"));
        }
        let mut sizes = Vec::with_capacity(n);
        let mut count = 0usize;
        for i in 0..n {
            let s = self.u32()? as usize;
            if s == 0 || s > 1 << 16 {
                return Err(CheckpointError::Shape("layer width"));
            }
            if i > 0 {
                count += sizes[i - 1] * s + s;
            }
            sizes.push(s);
        }
        if count * 8 > self.bytes.len() - self.pos {
            return Err(CheckpointError::Truncated);
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(self.f64()?);
        }
        Mlp::from_parts(sizes, params).ok_or(CheckpointError::Shape("parameter count"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::NetConfig;
    use crate::SimRng;
    use rand::SeedableRng;

    fn sample() -> ActorCritic {
        let mut rng = SimRng::seed_from_u64(8);
        ActorCritic::new(&NetConfig { hidden_width: 6, hidden_layers: 2, ..NetConfig::default() }, &mut rng)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ac = sample();
        let back = decode_checkpoint(&encode_checkpoint(&ac)).unwrap();
        assert_eq!(back, ac);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&sample());
        assert_eq!(decode_checkpoint(&bytes[..bytes.len() - 1]), Err(CheckpointError::Truncated));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(decode_checkpoint(&extra), Err(CheckpointError::Trailing));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode_checkpoint(&bad), Err(CheckpointError::BadMagic));
        let mut ver = bytes;
        ver[4] = 9;
        assert_eq!(decode_checkpoint(&ver), Err(CheckpointError::Version(9)));
    }
}
