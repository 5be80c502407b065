//! Tabular HarsanyiNet: stacked blocks of gated AND units.
//!
//! Each unit selects a children set from the previous layer via a learned
//! threshold vector, combines the children linearly, and multiplies the
//! result by an AND gate that is zero whenever any child is zero. Because a
//! masked player zeroes its input columns exactly, every unit's output is a
//! single interaction effect on its receptive field, which is what makes
//! closed-form Shapley attributions possible (see [`shapley`]).

mod fields;
mod forward;
mod shapley;

pub use fields::ReceptiveFields;
pub use forward::Activations;
pub(crate) use forward::soft_unit;
pub use shapley::MlpGame;

use crate::error::{Error, Result};
use crate::game::{PlayerSet, MAX_PLAYERS};

/// How the AND gate over a unit's children is evaluated.
///
/// `Hard` is the indicator product used at inference: any zero child kills
/// the unit. `Soft` is the differentiable surrogate used in training: a
/// geometric mean of `tanh(γ·|child|)` factors, which is exactly zero iff
/// some child is exactly zero and approaches the indicator as γ grows.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AndMode {
    Hard,
    Soft,
}

impl AndMode {
    pub fn name(&self) -> &'static str {
        match self {
            AndMode::Hard => "hard",
            AndMode::Soft => "soft",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(AndMode::Hard),
            "soft" => Ok(AndMode::Soft),
            other => Err(Error::Format(format!("unknown AND mode {other:?}"))),
        }
    }
}

/// Where a block's candidate children come from.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ChildrenScope {
    /// Block `l` selects from block `l-1` only (block 1 from the inputs).
    PreviousBlockOnly,
    /// Block `l` selects from the units of all previous blocks
    /// (block 1 still selects from the inputs).
    AllPreviousBlocks,
}

impl ChildrenScope {
    pub fn name(&self) -> &'static str {
        match self {
            ChildrenScope::PreviousBlockOnly => "previous_block_only",
            ChildrenScope::AllPreviousBlocks => "all_previous_blocks",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "previous_block_only" => Ok(ChildrenScope::PreviousBlockOnly),
            "all_previous_blocks" => Ok(ChildrenScope::AllPreviousBlocks),
            other => Err(Error::Format(format!("unknown children scope {other:?}"))),
        }
    }
}

/// Maps input columns to game players. One-hot encodings register all the
/// columns of a categorical feature as a single player; masking a player
/// zeroes every column it owns.
#[derive(Clone, PartialEq, Debug)]
pub struct PlayerGrouping {
    col_player: Vec<usize>,
    players: usize,
}

impl PlayerGrouping {
    /// Each column is its own player.
    pub fn identity(columns: usize) -> Self {
        PlayerGrouping { col_player: (0..columns).collect(), players: columns }
    }

    /// Builds a grouping from a column-to-player map. Player ids must cover
    /// `0..=max` with no gaps, and there must be at most [`MAX_PLAYERS`].
    pub fn new(col_player: Vec<usize>) -> Result<Self> {
        if col_player.is_empty() {
            return Err(Error::Schema("grouping over zero columns".into()));
        }
        let players = col_player.iter().max().unwrap() + 1;
        if players > MAX_PLAYERS {
            return Err(Error::Capacity(players));
        }
        let mut seen = vec![false; players];
        for &p in &col_player {
            seen[p] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Schema(format!("player {missing} owns no columns")));
        }
        Ok(PlayerGrouping { col_player, players })
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn columns(&self) -> usize {
        self.col_player.len()
    }

    pub fn player_of(&self, column: usize) -> usize {
        self.col_player[column]
    }

    pub fn columns_of(&self, player: usize) -> impl Iterator<Item = usize> + '_ {
        self.col_player
            .iter()
            .enumerate()
            .filter(move |(_, &p)| p == player)
            .map(|(c, _)| c)
    }

    pub fn is_identity(&self) -> bool {
        self.players == self.col_player.len()
            && self.col_player.iter().enumerate().all(|(c, &p)| c == p)
    }

    pub fn col_player(&self) -> &[usize] {
        &self.col_player
    }
}

/// Architecture and gate hyperparameters of a tabular HarsanyiNet.
#[derive(Clone, PartialEq, Debug)]
pub struct MlpConfig {
    /// Number of input columns (after any encoding).
    pub inputs: usize,
    /// Units per block.
    pub block_sizes: Vec<usize>,
    /// Output classes.
    pub classes: usize,
    /// Selector-gradient sharpness (training only).
    pub beta: f64,
    /// Soft-gate sharpness.
    pub gamma: f64,
    pub scope: ChildrenScope,
    /// Column-to-player map; identity for plain numeric data.
    pub grouping: PlayerGrouping,
}

impl MlpConfig {
    /// Plain config: identity grouping, previous-block children scope.
    pub fn new(inputs: usize, block_sizes: Vec<usize>, classes: usize, beta: f64, gamma: f64) -> Self {
        MlpConfig {
            inputs,
            block_sizes,
            classes,
            beta,
            gamma,
            scope: ChildrenScope::PreviousBlockOnly,
            grouping: PlayerGrouping::identity(inputs),
        }
    }

    pub fn players(&self) -> usize {
        self.grouping.players()
    }

    pub fn total_units(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.block_sizes.is_empty() || self.classes == 0 {
            return Err(Error::Schema("inputs, blocks, and classes must be nonzero".into()));
        }
        if self.block_sizes.contains(&0) {
            return Err(Error::Schema("every block needs at least one unit".into()));
        }
        if self.grouping.columns() != self.inputs {
            return Err(Error::LengthMismatch {
                expected: self.inputs,
                got: self.grouping.columns(),
            });
        }
        if self.players() > MAX_PLAYERS {
            return Err(Error::Capacity(self.players()));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) || !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Schema("beta and gamma must be positive and finite".into()));
        }
        Ok(())
    }

    /// Candidate-pool size for block `l` (0-based).
    pub fn pool_len(&self, l: usize) -> usize {
        if l == 0 {
            self.inputs
        } else {
            match self.scope {
                ChildrenScope::PreviousBlockOnly => self.block_sizes[l - 1],
                ChildrenScope::AllPreviousBlocks => self.block_sizes[..l].iter().sum(),
            }
        }
    }
}

/// One AND unit: a selector threshold and a linear weight per candidate.
/// Candidate `j` is a child iff `tau[j] > 0` (exactly zero is not selected).
#[derive(Clone, PartialEq, Debug)]
pub struct Unit {
    pub tau: Vec<f64>,
    pub weight: Vec<f64>,
}

/// A tabular HarsanyiNet. The output head is a per-class linear readout over
/// every unit in every block, so the logit of the all-masked input is exactly
/// zero; no layer has a bias term.
#[derive(Clone, PartialEq, Debug)]
pub struct HarsanyiMlp {
    config: MlpConfig,
    blocks: Vec<Vec<Unit>>,
    /// `head[class][flat_unit]`, blocks concatenated in order.
    head: Vec<Vec<f64>>,
}

impl HarsanyiMlp {
    pub fn from_parts(config: MlpConfig, blocks: Vec<Vec<Unit>>, head: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        if blocks.len() != config.block_sizes.len() {
            return Err(Error::LengthMismatch {
                expected: config.block_sizes.len(),
                got: blocks.len(),
            });
        }
        for (l, block) in blocks.iter().enumerate() {
            if block.len() != config.block_sizes[l] {
                return Err(Error::LengthMismatch {
                    expected: config.block_sizes[l],
                    got: block.len(),
                });
            }
            let pool = config.pool_len(l);
            for unit in block {
                if unit.tau.len() != pool || unit.weight.len() != pool {
                    return Err(Error::LengthMismatch { expected: pool, got: unit.tau.len() });
                }
            }
        }
        let total = config.total_units();
        if head.len() != config.classes {
            return Err(Error::LengthMismatch { expected: config.classes, got: head.len() });
        }
        for row in &head {
            if row.len() != total {
                return Err(Error::LengthMismatch { expected: total, got: row.len() });
            }
        }
        Ok(HarsanyiMlp { config, blocks, head })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn players(&self) -> usize {
        self.config.players()
    }

    pub fn blocks(&self) -> &[Vec<Unit>] {
        &self.blocks
    }

    pub fn head(&self) -> &[Vec<f64>] {
        &self.head
    }

    pub(crate) fn blocks_mut(&mut self) -> &mut Vec<Vec<Unit>> {
        &mut self.blocks
    }

    pub(crate) fn head_mut(&mut self) -> &mut Vec<Vec<f64>> {
        &mut self.head
    }

    /// Flat index of unit `u` in block `l` within head rows and activation
    /// vectors.
    pub fn flat_index(&self, l: usize, u: usize) -> usize {
        self.config.block_sizes[..l].iter().sum::<usize>() + u
    }

    /// Selected-children indices of every unit, resolved from the selector
    /// thresholds. Recomputed on demand; heavy sweeps compute it once.
    pub(crate) fn children(&self) -> Vec<Vec<Vec<u32>>> {
        self.blocks
            .iter()
            .map(|block| {
                block
                    .iter()
                    .map(|unit| {
                        unit.tau
                            .iter()
                            .enumerate()
                            .filter(|(_, &t)| t > 0.0)
                            .map(|(j, _)| j as u32)
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

/// One observation: input columns plus a per-column reference point. Masking
/// player `i` replaces its columns with the reference, so the centered input
/// of an absent player is exactly zero.
#[derive(Clone, PartialEq, Debug)]
pub struct Sample {
    pub x: Vec<f64>,
    pub baseline: Vec<f64>,
}

impl Sample {
    pub fn new(x: Vec<f64>, baseline: Vec<f64>) -> Result<Self> {
        if x.len() != baseline.len() {
            return Err(Error::LengthMismatch { expected: x.len(), got: baseline.len() });
        }
        if x.iter().chain(&baseline).any(|v| !v.is_finite()) {
            return Err(Error::Schema("sample contains non-finite values".into()));
        }
        Ok(Sample { x, baseline })
    }

    /// Baseline at the origin; the natural choice for z-scored data, where
    /// zero is the dataset mean.
    pub fn zero_baseline(x: Vec<f64>) -> Result<Self> {
        let baseline = vec![0.0; x.len()];
        Sample::new(x, baseline)
    }

    pub fn columns(&self) -> usize {
        self.x.len()
    }

    /// Centered input with absent players zeroed: `z0[j] = x[j] - b[j]` if
    /// the owning player is in `present`, else exactly `0.0`.
    pub(crate) fn masked_z0(&self, grouping: &PlayerGrouping, present: PlayerSet) -> Vec<f64> {
        (0..self.x.len())
            .map(|j| {
                if present.contains(grouping.player_of(j)) {
                    self.x[j] - self.baseline[j]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Random small net for property tests: every selector drawn so units
    /// keep 1..=max_fanin children, weights uniform in ±1.
    pub fn random_mlp(
        inputs: usize,
        block_sizes: &[usize],
        classes: usize,
        scope: ChildrenScope,
        gamma: f64,
        rng: &mut ChaCha8Rng,
    ) -> HarsanyiMlp {
        let config = MlpConfig {
            inputs,
            block_sizes: block_sizes.to_vec(),
            classes,
            beta: 10.0,
            gamma,
            scope,
            grouping: PlayerGrouping::identity(inputs),
        };
        let blocks = (0..block_sizes.len())
            .map(|l| {
                let pool = config.pool_len(l);
                (0..block_sizes[l])
                    .map(|_| {
                        let fanin = rng.random_range(1..=pool.min(4));
                        let mut chosen: Vec<usize> = (0..pool).collect();
                        chosen.shuffle(rng);
                        chosen.truncate(fanin);
                        let mut tau = vec![-1.0; pool];
                        for &j in &chosen {
                            tau[j] = 1.0;
                        }
                        let weight = (0..pool).map(|_| rng.random_range(-1.0..1.0)).collect();
                        Unit { tau, weight }
                    })
                    .collect()
            })
            .collect();
        let total = config.total_units();
        let head = (0..classes)
            .map(|_| (0..total).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        HarsanyiMlp::from_parts(config, blocks, head).unwrap()
    }

    pub fn random_sample(inputs: usize, rng: &mut ChaCha8Rng) -> Sample {
        // Bounded away from zero so no player is accidentally absent.
        let x = (0..inputs)
            .map(|_| {
                let mag = rng.random_range(0.25..1.75);
                if rng.random_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        Sample::zero_baseline(x).unwrap()
    }
}
