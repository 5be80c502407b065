//! Convolutional HarsanyiNet: players are grid locations of the stem output.
//!
//! A fixed stem (conv, max-pool, ReLU) turns the raw image into a nonnegative
//! feature tensor `z0`; the game is played on `z0`'s `H·W` locations, and
//! masking a location zeroes its whole channel vector. Each block applies an
//! ordinary convolution whose window entries are gated per candidate
//! location: one selector per output location decides which window positions
//! are children, and all channels of a candidate stand or fall together.
//! That channel coherence is what keeps every unit a single interaction
//! effect on a set of grid locations, exactly as in the tabular model.

mod fields;
mod forward;
mod shapley;

pub use fields::{grid_receptive_fields, GridFields};
pub use forward::{channel_coherence_violations, CnnActivations};
pub use shapley::{exact_shapley_grid, restricted_shapley_grid, GridGame, RestrictedGridGame};

use crate::error::{Error, Result};
use crate::rng::{stream, STREAM_INIT};
use crate::train::{draw_tau, draw_weights, InitScheme};

/// Coalition over up to `H·W` grid locations; a plain bitset wide enough for
/// grids that exceed the tabular 24-player cap.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GridSet {
    words: Vec<u64>,
    n: usize,
}

impl GridSet {
    pub fn empty(n: usize) -> Self {
        GridSet { words: vec![0; n.div_ceil(64)], n }
    }

    pub fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    pub fn contains(&self, i: usize) -> bool {
        assert!(i < self.n);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.n);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.n);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn union_with(&mut self, other: &GridSet) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect(&self, other: &GridSet) -> GridSet {
        assert_eq!(self.n, other.n);
        GridSet {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
            n: self.n,
        }
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| self.contains(i))
    }
}

/// Architecture of a convolutional HarsanyiNet. `height` and `width` are the
/// player grid (the stem output); the raw image is `pool` times larger on
/// each side. Kernels use stride 1 with same padding, so candidates falling
/// outside the grid are structurally absent rather than zero-padded.
#[derive(Clone, PartialEq, Debug)]
pub struct CnnConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Stem convolution kernel side (odd).
    pub stem_kernel: usize,
    /// Max-pool factor between the stem convolution and `z0`.
    pub pool: usize,
    /// Number of gated blocks.
    pub blocks: usize,
    /// Block convolution kernel side (odd).
    pub kernel: usize,
    pub classes: usize,
    pub beta: f64,
    pub gamma: f64,
}

impl CnnConfig {
    pub fn players(&self) -> usize {
        self.height * self.width
    }

    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    /// Units per block: one per channel per location.
    pub fn units_per_block(&self) -> usize {
        self.channels * self.locations()
    }

    pub fn total_units(&self) -> usize {
        self.blocks * self.units_per_block()
    }

    pub fn image_height(&self) -> usize {
        self.height * self.pool
    }

    pub fn image_width(&self) -> usize {
        self.width * self.pool
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0
            || self.width == 0
            || self.channels == 0
            || self.blocks == 0
            || self.classes == 0
            || self.pool == 0
        {
            return Err(Error::Schema("every CNN dimension must be nonzero".into()));
        }
        if self.kernel.is_multiple_of(2) || self.stem_kernel.is_multiple_of(2) {
            return Err(Error::Schema("kernels must be odd for same padding".into()));
        }
        if !(self.beta.is_finite() && self.beta > 0.0)
            || !(self.gamma.is_finite() && self.gamma > 0.0)
        {
            return Err(Error::Schema("beta and gamma must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Fixed front end: single-channel convolution (with bias), non-overlapping
/// max-pool, then ReLU. The stem is outside the game; masking happens on its
/// output, never on raw pixels.
#[derive(Clone, PartialEq, Debug)]
pub struct Stem {
    /// `[channel][ky][kx]`, flattened row-major.
    pub weight: Vec<f64>,
    /// One bias per channel.
    pub bias: Vec<f64>,
}

/// One selector per output location: `tau[idx]` gates window offset `idx`
/// (row-major over the `K x K` window) for all channels at once, so a
/// candidate location's channels are selected or rejected together.
#[derive(Clone, PartialEq, Debug)]
pub struct LocationSelector {
    pub tau: Vec<f64>,
}

impl LocationSelector {
    /// Window offsets with positive threshold, as indices into the window.
    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.tau.iter().enumerate().filter(|(_, t)| **t > 0.0).map(|(i, _)| i)
    }
}

/// A gated convolutional block: shared kernel weights plus one selector per
/// location.
#[derive(Clone, PartialEq, Debug)]
pub struct ConvBlock {
    /// One selector per grid location, row-major.
    pub selectors: Vec<LocationSelector>,
    /// Convolution weights `[c_out][c_in][ky][kx]`, flattened row-major.
    pub weight: Vec<f64>,
}

#[derive(Clone, PartialEq, Debug)]
pub struct HarsanyiCnn {
    config: CnnConfig,
    stem: Stem,
    blocks: Vec<ConvBlock>,
    /// `[class][flat unit]`; flat order is block-major, then channel, then
    /// location row-major.
    head: Vec<Vec<f64>>,
}

impl HarsanyiCnn {
    pub fn from_parts(
        config: CnnConfig,
        stem: Stem,
        blocks: Vec<ConvBlock>,
        head: Vec<Vec<f64>>,
    ) -> Result<Self> {
        config.validate()?;
        let sk = config.stem_kernel * config.stem_kernel;
        if stem.weight.len() != config.channels * sk || stem.bias.len() != config.channels {
            return Err(Error::LengthMismatch {
                expected: config.channels * sk,
                got: stem.weight.len(),
            });
        }
        if blocks.len() != config.blocks {
            return Err(Error::LengthMismatch { expected: config.blocks, got: blocks.len() });
        }
        let kk = config.kernel * config.kernel;
        for block in &blocks {
            if block.selectors.len() != config.locations() {
                return Err(Error::LengthMismatch {
                    expected: config.locations(),
                    got: block.selectors.len(),
                });
            }
            for sel in &block.selectors {
                if sel.tau.len() != kk {
                    return Err(Error::LengthMismatch { expected: kk, got: sel.tau.len() });
                }
            }
            let expected = config.channels * config.channels * kk;
            if block.weight.len() != expected {
                return Err(Error::LengthMismatch { expected, got: block.weight.len() });
            }
        }
        if head.len() != config.classes {
            return Err(Error::LengthMismatch { expected: config.classes, got: head.len() });
        }
        for row in &head {
            if row.len() != config.total_units() {
                return Err(Error::LengthMismatch {
                    expected: config.total_units(),
                    got: row.len(),
                });
            }
        }
        Ok(HarsanyiCnn { config, stem, blocks, head })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    pub fn stem(&self) -> &Stem {
        &self.stem
    }

    pub fn blocks(&self) -> &[ConvBlock] {
        &self.blocks
    }

    pub fn head(&self) -> &[Vec<f64>] {
        &self.head
    }

    /// Flat unit index of `(block, channel, location)`.
    pub fn flat_index(&self, block: usize, channel: usize, location: usize) -> usize {
        block * self.config.units_per_block() + channel * self.config.locations() + location
    }
}

/// Gaussian-threshold initialization: every selector entry from
/// `N(0, sd^2)` (about half the candidates selected), convolution and head
/// weights fan-in-scaled uniform, stem likewise with its bias included.
/// Consumes the dedicated initialization stream of `seed` in a fixed order:
/// stem weight, stem bias, then per block all selectors then the kernel,
/// head rows last.
pub fn init_cnn(config: CnnConfig, sd: f64, seed: u64) -> Result<HarsanyiCnn> {
    config.validate()?;
    let scheme = InitScheme::CnnGaussian { sd };
    let mut rng = stream(seed, STREAM_INIT);

    let sk = config.stem_kernel * config.stem_kernel;
    let mut stem_weight = draw_weights(sk, config.channels * sk + config.channels, &mut rng);
    let stem_bias = stem_weight.split_off(config.channels * sk);
    let stem = Stem { weight: stem_weight, bias: stem_bias };

    let kk = config.kernel * config.kernel;
    let conv_fanin = config.channels * kk;
    let mut blocks = Vec::with_capacity(config.blocks);
    for _ in 0..config.blocks {
        let mut selectors = Vec::with_capacity(config.locations());
        for _ in 0..config.locations() {
            selectors.push(LocationSelector { tau: draw_tau(&scheme, kk, &mut rng)? });
        }
        let weight = draw_weights(conv_fanin, config.channels * config.channels * kk, &mut rng);
        blocks.push(ConvBlock { selectors, weight });
    }

    let total = config.total_units();
    let head = (0..config.classes).map(|_| draw_weights(total, total, &mut rng)).collect();
    HarsanyiCnn::from_parts(config, stem, blocks, head)
}

/// Default gate sharpness for convolutional models; the per-location mean
/// keeps child signals order-one, so a gentle gate suffices.
pub const CNN_DEFAULT_BETA: f64 = 1000.0;
pub const CNN_DEFAULT_GAMMA: f64 = 1.0;
