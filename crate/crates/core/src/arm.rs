//! Intervention sets ("arms"): canonical subsets of `{1..N}`.

use std::fmt;

use crate::error::{Error, Result};

/// Node labels above this bound cannot be packed into the `u64` bitmask.
const MASK_BITS: usize = 64;

/// Exhaustive enumeration of all `2^N` arms is refused beyond this.
pub const ENUMERATION_GUARD: usize = 20;

/// A set of intervened nodes, stored canonically as sorted labels.
///
/// Arms are ordered by cardinality first, then lexicographically on the
/// sorted member list; this is the canonical order used for tie-breaking
/// everywhere in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Arm {
    // Field order matters: the derived Ord compares cardinality first.
    card: usize,
    members: Vec<usize>,
}

impl Arm {
    /// The empty intervention (purely observational play).
    pub fn empty() -> Self {
        Arm {
            card: 0,
            members: Vec::new(),
        }
    }

    /// Intervene on every node of a graph with `node_count` nodes.
    pub fn full(node_count: usize) -> Self {
        Arm::from_members((1..=node_count).collect())
    }

    /// Single-node intervention.
    pub fn single(node: usize) -> Self {
        Arm {
            card: 1,
            members: vec![node],
        }
    }

    /// Canonicalizes an arbitrary member list (sorts, deduplicates).
    pub fn from_members(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Arm {
            card: members.len(),
            members,
        }
    }

    /// Decodes a bitmask where bit `i-1` marks node `i`.
    pub fn from_bitmask(mask: u64) -> Self {
        let members = (0..MASK_BITS as u32)
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| b as usize + 1)
            .collect();
        Arm::from_members(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.card
    }

    pub fn is_empty(&self) -> bool {
        self.card == 0
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }

    /// Bitmask with bit `i-1` set for each member `i`. Panics above 64 nodes.
    pub fn bitmask(&self) -> u64 {
        let mut mask = 0u64;
        for &m in &self.members {
            assert!(m <= MASK_BITS, "node label {m} does not fit a u64 bitmask");
            mask |= 1 << (m - 1);
        }
        mask
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.members.is_empty() {
            return write!(f, "empty");
        }
        let labels: Vec<String> = self.members.iter().map(|m| m.to_string()).collect();
        write!(f, "{{{}}}", labels.join(","))
    }
}

/// All `2^node_count` arms in canonical order.
///
/// Guarded: graphs beyond [`ENUMERATION_GUARD`] nodes must supply an explicit
/// candidate list instead.
pub fn full_universe(node_count: usize) -> Result<Vec<Arm>> {
    if node_count > ENUMERATION_GUARD {
        return Err(Error::TooManyArms {
            node_count,
            guard: ENUMERATION_GUARD,
        });
    }
    let mut arms: Vec<Arm> = (0u64..(1u64 << node_count)).map(Arm::from_bitmask).collect();
    arms.sort();
    Ok(arms)
}

/// All subsets of an arbitrary node pool, in canonical order.
pub fn universe_over(pool: &[usize]) -> Result<Vec<Arm>> {
    if pool.len() > ENUMERATION_GUARD {
        return Err(Error::TooManyArms {
            node_count: pool.len(),
            guard: ENUMERATION_GUARD,
        });
    }
    let mut arms = Vec::with_capacity(1 << pool.len());
    for mask in 0u64..(1u64 << pool.len()) {
        let members = pool
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &m)| m)
            .collect();
        arms.push(Arm::from_members(members));
    }
    arms.sort();
    Ok(arms)
}
