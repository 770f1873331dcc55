//! Enumeration and indexing of the chain's states `(i, j)`.

use crate::error::{Error, Result};

/// All states `(i, j)` with `0 ≤ i ≤ j ≤ n`, where `i` counts occupants
/// holding the record and `j` counts occupants of the segment.
///
/// The ordering is canonical: ascending `j`, then ascending `i`. The space
/// deliberately includes the `i = j` diagonal and `(0, 0)`: delivery
/// transitions `(i, j) → (i+k, j)` reach `i = j`, so the generator must be
/// closed over them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    max_vehicles: u32,
    states: Vec<(u32, u32)>,
}

impl StateSpace {
    /// Enumerate the full space for a population cap of `max_vehicles`.
    /// Size is `(n+1)(n+2)/2`.
    pub fn enumerate(max_vehicles: u32) -> Result<Self> {
        if max_vehicles == 0 {
            return Err(Error::InvalidInput(
                "state space requires at least one vehicle (n ≥ 1)".into(),
            ));
        }
        let n = max_vehicles as usize;
        let mut states = Vec::with_capacity((n + 1) * (n + 2) / 2);
        for j in 0..=max_vehicles {
            for i in 0..=j {
                states.push((i, j));
            }
        }
        Ok(Self {
            max_vehicles,
            states,
        })
    }

    pub fn max_vehicles(&self) -> u32 {
        self.max_vehicles
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[(u32, u32)] {
        &self.states
    }

    pub fn state_at(&self, index: usize) -> (u32, u32) {
        self.states[index]
    }

    /// Dense index of `(i, j)`; the triangular layout makes this a closed
    /// formula, the exact inverse of positional lookup in [`states`](Self::states).
    pub fn index_of(&self, i: u32, j: u32) -> Option<usize> {
        if i > j || j > self.max_vehicles {
            return None;
        }
        Some(j as usize * (j as usize + 1) / 2 + i as usize)
    }
}

/// State count `(n² + n)/2` of the strict sub-family `0 ≤ i < j ≤ n`. Kept
/// for report cross-reference only; the canonical space is larger because it
/// includes the `i = j` diagonal.
pub fn strict_state_count(n: u32) -> u64 {
    let n = u64::from(n);
    (n * n + n) / 2
}

/// Below-target state count `J = t·n − t(t−1)/2` over the same strict
/// sub-family: the states with fewer than `t` holders. Report use only;
/// consistency probabilities are computed by direct summation over the
/// canonical space.
pub fn strict_below_target_count(n: u32, t: u32) -> Result<u64> {
    if t < 1 || t > n {
        return Err(Error::InvalidInput(format!(
            "target t must satisfy 1 ≤ t ≤ n, got t={t}, n={n}"
        )));
    }
    let (n, t) = (u64::from(n), u64::from(t));
    Ok(t * n - t * (t - 1) / 2)
}
