//! Versioned binary dump of a hierarchy state.
//!
//! Layout: the 8-byte magic `AOHEOMCK`, a little-endian `u32` format
//! version, a `u64` header length, the JSON header, then every auxiliary
//! matrix in index-space order as column-major little-endian `(re, im)`
//! pairs of `f64`.

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::QuantumNumbers;
use crate::bath::{BathSpec, PadeScheme};
use crate::error::{Error, Result};
use crate::hierarchy::{HierarchyIndexSpace, Truncation};
use crate::propagator::HierarchyState;
use crate::C64;

pub const MAGIC: &[u8; 8] = b"AOHEOMCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub states: Vec<QuantumNumbers>,
    pub bath: BathSpec,
    pub schemes: [PadeScheme; 3],
    pub depth: u32,
    pub per_axis_k: [usize; 3],
    pub truncation: Truncation,
    pub time: f64,
    pub dimension: usize,
    pub ado_count: usize,
}

impl CheckpointHeader {
    pub fn for_state(
        state: &HierarchyState,
        states: Vec<QuantumNumbers>,
        bath: BathSpec,
        schemes: [PadeScheme; 3],
    ) -> Self {
        CheckpointHeader {
            states,
            bath,
            schemes,
            depth: state.space.depth(),
            per_axis_k: state.space.per_axis_k(),
            truncation: state.space.truncation(),
            time: state.time,
            dimension: state.dimension(),
            ado_count: state.matrices.len(),
        }
    }
}

pub fn write_checkpoint<W: Write>(mut out: W, header: &CheckpointHeader, state: &HierarchyState) -> Result<()> {
    if header.ado_count != state.matrices.len() || header.dimension != state.dimension() {
        return Err(Error::Checkpoint("header does not describe the state".into()));
    }
    let json = serde_json::to_vec(header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(16 * header.dimension * header.dimension);
    for m in &state.matrices {
        buf.clear();
        for v in m.iter() {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a checkpoint and rebuilds the index space it was written with.
pub fn read_checkpoint<R: Read>(mut input: R, budget: usize) -> Result<(CheckpointHeader, HierarchyState)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::Checkpoint("header too large".into()));
    }
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let space = HierarchyIndexSpace::enumerate(header.per_axis_k, header.depth, header.truncation, budget)?;
    if space.len() != header.ado_count {
        return Err(Error::Checkpoint(format!(
            "header lists {} auxiliary operators, index space has {}",
            header.ado_count,
            space.len()
        )));
    }
    let d = header.dimension;
    let mut bytes = vec![0u8; 16 * d * d];
    let mut matrices = Vec::with_capacity(header.ado_count);
    for _ in 0..header.ado_count {
        input.read_exact(&mut bytes)?;
        let data: Vec<C64> = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        matrices.push(DMatrix::from_vec(d, d, data));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after matrix data".into()));
    }
    let state = HierarchyState { space: Arc::new(space), matrices, time: header.time };
    Ok((header, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSet;
    use crate::bath::pade_decomposition;
    use crate::hierarchy::DEFAULT_INDEX_BUDGET;

    fn sample() -> (CheckpointHeader, HierarchyState) {
        let basis = BasisSet::enumerate(2).unwrap();
        let space = Arc::new(HierarchyIndexSpace::enumerate([1, 1, 1], 2, Truncation::Global, 1000).unwrap());
        let mut state = HierarchyState::zeros(space, basis.dimension());
        for (p, m) in state.matrices.iter_mut().enumerate() {
            for (i, v) in m.iter_mut().enumerate() {
                *v = C64::new((p * 31 + i) as f64 * 0.125, -(i as f64) / 3.0);
            }
        }
        state.time = 12.5;
        let scheme = pade_decomposition(1).unwrap();
        let bath = BathSpec::isotropic(1e-4, 0.05, 1000.0).unwrap();
        let header = CheckpointHeader::for_state(
            &state,
            basis.states().to_vec(),
            bath,
            [scheme.clone(), scheme.clone(), scheme],
        );
        (header, state)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (header, state) = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &header, &state).unwrap();
        let (h2, s2) = read_checkpoint(buf.as_slice(), DEFAULT_INDEX_BUDGET).unwrap();
        assert_eq!(h2, header);
        assert_eq!(s2.time, state.time);
        assert_eq!(s2.matrices, state.matrices);
    }

    #[test]
    fn rejects_corruption() {
        let (header, state) = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &header, &state).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice(), 1000), Err(Error::Checkpoint(_))));
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(read_checkpoint(bad.as_slice(), 1000), Err(Error::Checkpoint(_))));
        let truncated = &buf[..buf.len() - 3];
        assert!(read_checkpoint(truncated, 1000).is_err());
        let mut long = buf;
        long.push(0);
        assert!(matches!(read_checkpoint(long.as_slice(), 1000), Err(Error::Checkpoint(_))));
    }
}
