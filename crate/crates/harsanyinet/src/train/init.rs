//! Seeded parameter initialization.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::model::{HarsanyiMlp, MlpConfig, Unit};
use crate::rng::{stream, STREAM_INIT};

/// How selector thresholds start out.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum InitScheme {
    /// Exactly `k` random candidates start selected (`tau = +1`), the rest
    /// start at `-1`. The default for tabular nets.
    MlpFixedFanin { k: usize },
    /// Every threshold drawn from a zero-mean Gaussian, so roughly half the
    /// candidates start selected. The default for convolutional nets.
    CnnGaussian { sd: f64 },
}

impl InitScheme {
    pub fn name(&self) -> String {
        match self {
            InitScheme::MlpFixedFanin { k } => format!("mlp_fixed_fanin(k={k})"),
            InitScheme::CnnGaussian { sd } => format!("cnn_gaussian(sd={sd})"),
        }
    }
}

/// Selector thresholds for one unit with `pool` candidates.
pub(crate) fn draw_tau(scheme: &InitScheme, pool: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match *scheme {
        InitScheme::MlpFixedFanin { k } => {
            if k > pool {
                return Err(Error::FanIn { k, pool });
            }
            let mut tau = vec![-1.0; pool];
            for j in rand::seq::index::sample(rng, pool, k) {
                tau[j] = 1.0;
            }
            Ok(tau)
        }
        InitScheme::CnnGaussian { sd } => {
            let normal = Normal::new(0.0, sd)
                .map_err(|_| Error::Schema(format!("bad gaussian sd {sd}")))?;
            Ok((0..pool).map(|_| normal.sample(rng)).collect())
        }
    }
}

/// Fan-in-scaled uniform weights: `U(-1/√fanin, 1/√fanin)`.
pub(crate) fn draw_weights(fanin: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bound = 1.0 / (fanin.max(1) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Builds a freshly initialized tabular net. Consumes the dedicated
/// initialization stream of `seed`; parameters are drawn in a fixed order
/// (per block, per unit: thresholds then weights; head rows last).
pub fn init_mlp(config: MlpConfig, scheme: &InitScheme, seed: u64) -> Result<HarsanyiMlp> {
    config.validate()?;
    let mut rng = stream(seed, STREAM_INIT);
    let mut blocks = Vec::with_capacity(config.block_sizes.len());
    for l in 0..config.block_sizes.len() {
        let pool = config.pool_len(l);
        let mut block = Vec::with_capacity(config.block_sizes[l]);
        for _ in 0..config.block_sizes[l] {
            let tau = draw_tau(scheme, pool, &mut rng)?;
            let weight = draw_weights(pool, pool, &mut rng);
            block.push(Unit { tau, weight });
        }
        blocks.push(block);
    }
    let total = config.total_units();
    let head =
        (0..config.classes).map(|_| draw_weights(total, total, &mut rng)).collect();
    HarsanyiMlp::from_parts(config, blocks, head)
}
