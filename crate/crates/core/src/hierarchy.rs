//! Multi-index bookkeeping for the auxiliary density operators.
//!
//! Each auxiliary operator is labelled by non-negative counts `n_k^a` for
//! axis `a` and decomposition term `k = 0..=K_a` (term 0 is the Drude pole
//! at `gamma_a`). Counts are stored flat in axis-major order, so axis `x`
//! occupies slots `0..=K_x`, then `y`, then `z`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::basis::Axis;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Keep indices with total tier `sum n_k^a <= depth`.
    Global,
    /// Keep indices with `sum_k n_k^a <= depth` separately for each axis.
    PerBath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AdoIndex {
    counts: Vec<u32>,
    tier: u32,
}

impl AdoIndex {
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn tier(&self) -> u32 {
        self.tier
    }

    pub fn is_zero(&self) -> bool {
        self.tier == 0
    }
}

/// Default cap on the number of auxiliary operators.
pub const DEFAULT_INDEX_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone)]
pub struct HierarchyIndexSpace {
    depth: u32,
    per_axis_k: [usize; 3],
    truncation: Truncation,
    offsets: [usize; 3],
    indices: Vec<AdoIndex>,
    lookup: HashMap<Vec<u32>, usize>,
    // [pos * 2 * modes + 2 * slot + (0 = up, 1 = down)]
    neighbors: Vec<Option<u32>>,
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

impl HierarchyIndexSpace {
    /// All indices within the truncation, ordered by tier and then
    /// lexicographically by counts, with the neighbour table filled in.
    pub fn enumerate(per_axis_k: [usize; 3], depth: u32, truncation: Truncation, budget: usize) -> Result<Self> {
        let modes_per_axis = per_axis_k.map(|k| k + 1);
        let modes: usize = modes_per_axis.iter().sum();
        let count = match truncation {
            Truncation::Global => binomial((modes as u64) + depth as u64, depth as u64),
            Truncation::PerBath => modes_per_axis
                .iter()
                .map(|&m| binomial(m as u64 + depth as u64, depth as u64))
                .product(),
        };
        if count > budget as u128 {
            return Err(Error::Capacity { count, budget });
        }

        let offsets = [0, modes_per_axis[0], modes_per_axis[0] + modes_per_axis[1]];
        let axis_of_slot: Vec<usize> = (0..modes)
            .map(|s| if s < offsets[1] { 0 } else if s < offsets[2] { 1 } else { 2 })
            .collect();

        let mut indices = Vec::with_capacity(count as usize);
        let mut counts = vec![0u32; modes];
        let mut axis_tiers = [0u32; 3];
        fill(&mut counts, 0, 0, depth, truncation, &axis_of_slot, &mut axis_tiers, &mut indices);
        indices.sort_by(|a: &AdoIndex, b| (a.tier, &a.counts).cmp(&(b.tier, &b.counts)));

        let lookup: HashMap<Vec<u32>, usize> =
            indices.iter().enumerate().map(|(i, idx)| (idx.counts.clone(), i)).collect();
        let mut neighbors = vec![None; indices.len() * 2 * modes];
        for (pos, idx) in indices.iter().enumerate() {
            let mut probe = idx.counts.clone();
            for slot in 0..modes {
                probe[slot] += 1;
                neighbors[pos * 2 * modes + 2 * slot] = lookup.get(&probe).map(|&p| p as u32);
                probe[slot] -= 1;
                if probe[slot] > 0 {
                    probe[slot] -= 1;
                    neighbors[pos * 2 * modes + 2 * slot + 1] = lookup.get(&probe).map(|&p| p as u32);
                    probe[slot] += 1;
                }
            }
        }
        Ok(HierarchyIndexSpace { depth, per_axis_k, truncation, offsets, indices, lookup, neighbors })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn per_axis_k(&self) -> [usize; 3] {
        self.per_axis_k
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[AdoIndex] {
        &self.indices
    }

    pub fn index(&self, pos: usize) -> &AdoIndex {
        &self.indices[pos]
    }

    pub fn position_of(&self, counts: &[u32]) -> Option<usize> {
        self.lookup.get(counts).copied()
    }

    /// Total number of `(axis, k)` slots.
    pub fn modes(&self) -> usize {
        self.per_axis_k.iter().map(|k| k + 1).sum()
    }

    pub fn slot(&self, axis: Axis, k: usize) -> usize {
        debug_assert!(k <= self.per_axis_k[axis.index()]);
        self.offsets[axis.index()] + k
    }

    /// Axis and term of a flat slot.
    pub fn slot_mode(&self, slot: usize) -> (Axis, usize) {
        let a = if slot < self.offsets[1] {
            Axis::X
        } else if slot < self.offsets[2] {
            Axis::Y
        } else {
            Axis::Z
        };
        (a, slot - self.offsets[a.index()])
    }

    /// Position of `index ± e_k^axis`, or `None` outside the truncation.
    pub fn neighbor(&self, pos: usize, axis: Axis, k: usize, direction: Direction) -> Option<usize> {
        if k > self.per_axis_k[axis.index()] {
            return None;
        }
        self.neighbor_slot(pos, self.slot(axis, k), direction)
    }

    pub fn neighbor_slot(&self, pos: usize, slot: usize, direction: Direction) -> Option<usize> {
        let d = match direction {
            Direction::Up => 0,
            Direction::Down => 1,
        };
        self.neighbors[pos * 2 * self.modes() + 2 * slot + d].map(|p| p as usize)
    }

    /// Indices that lose at least one upward neighbour to the truncation;
    /// these receive the terminator closure.
    pub fn is_boundary(&self, pos: usize) -> bool {
        (0..self.modes()).any(|s| self.neighbor_slot(pos, s, Direction::Up).is_none())
    }
}

#[allow(clippy::too_many_arguments)]
fn fill(
    counts: &mut Vec<u32>,
    slot: usize,
    tier: u32,
    depth: u32,
    truncation: Truncation,
    axis_of_slot: &[usize],
    axis_tiers: &mut [u32; 3],
    out: &mut Vec<AdoIndex>,
) {
    if slot == counts.len() {
        out.push(AdoIndex { counts: counts.clone(), tier });
        return;
    }
    let axis = axis_of_slot[slot];
    let room = match truncation {
        Truncation::Global => depth - tier,
        Truncation::PerBath => depth - axis_tiers[axis],
    };
    for c in 0..=room {
        counts[slot] = c;
        axis_tiers[axis] += c;
        fill(counts, slot + 1, tier + c, depth, truncation, axis_of_slot, axis_tiers, out);
        axis_tiers[axis] -= c;
    }
    counts[slot] = 0;
}

/// `sum_{a,k} n_k^a nu_k^a`, where `nu[a][0] = gamma_a` and `nu[a][k]` for
/// `k >= 1` are the Padé frequencies.
pub fn damping_rate(space: &HierarchyIndexSpace, index: &AdoIndex, nu: &[Vec<f64>; 3]) -> f64 {
    index
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(slot, &c)| {
            let (a, k) = space.slot_mode(slot);
            c as f64 * nu[a.index()][k]
        })
        .sum()
}
