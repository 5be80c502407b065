//! Receptive fields: which players can reach each unit.
//!
//! A block-1 unit's field is the set of players owning its selected input
//! columns; a deeper unit's field is the union of its children's fields.
//! Two guarantees follow from the AND gating and are probed by tests:
//!
//! * players outside the field never change the unit's output, and
//! * masking any player inside the field forces the output to exactly zero.

use crate::game::PlayerSet;
use crate::model::{ChildrenScope, HarsanyiMlp};

/// Per-unit receptive fields over players, in block order.
#[derive(Clone, Debug)]
pub struct ReceptiveFields {
    per_block: Vec<Vec<PlayerSet>>,
}

impl ReceptiveFields {
    pub fn unit(&self, block: usize, unit: usize) -> PlayerSet {
        self.per_block[block][unit]
    }

    pub fn blocks(&self) -> &[Vec<PlayerSet>] {
        &self.per_block
    }

    /// Fields in flat (block-major) order, matching activation vectors.
    pub fn flat(&self) -> impl Iterator<Item = PlayerSet> + '_ {
        self.per_block.iter().flatten().copied()
    }
}

impl HarsanyiMlp {
    pub fn receptive_fields(&self) -> ReceptiveFields {
        let cfg = self.config();
        let n = cfg.players();
        let children = self.children();
        let mut per_block: Vec<Vec<PlayerSet>> = Vec::with_capacity(self.blocks().len());
        let mut all_fields: Vec<PlayerSet> = Vec::new();
        for l in 0..self.blocks().len() {
            let mut fields = Vec::with_capacity(self.blocks()[l].len());
            for ch in &children[l] {
                let mut r = PlayerSet::empty(n);
                for &j in ch {
                    let contribution = if l == 0 {
                        PlayerSet::from_members(n, [cfg.grouping.player_of(j as usize)])
                    } else {
                        match cfg.scope {
                            ChildrenScope::PreviousBlockOnly => per_block[l - 1][j as usize],
                            ChildrenScope::AllPreviousBlocks => all_fields[j as usize],
                        }
                    };
                    r = r.union(contribution);
                }
                fields.push(r);
            }
            if cfg.scope == ChildrenScope::AllPreviousBlocks {
                all_fields.extend_from_slice(&fields);
            }
            per_block.push(fields);
        }
        ReceptiveFields { per_block }
    }
}
