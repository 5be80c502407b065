//! Forward evaluation of tabular HarsanyiNets.

use crate::error::{Error, Result};
use crate::game::PlayerSet;
use crate::model::{AndMode, HarsanyiMlp, Sample};

/// Gate factors are multiplied in linear space up to this many children, and
/// accumulated as log-sums beyond it to avoid underflow.
const LOG_SPACE_THRESHOLD: usize = 16;

/// All unit outputs for one masked forward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    pub(crate) z0: Vec<f64>,
    blocks: Vec<Vec<f64>>,
    mode: AndMode,
}

impl Activations {
    /// The masked, centered input the game sees.
    pub fn z0(&self) -> &[f64] {
        &self.z0
    }

    pub fn unit(&self, block: usize, unit: usize) -> f64 {
        self.blocks[block][unit]
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn mode(&self) -> AndMode {
        self.mode
    }

    /// Unit outputs in flat (block-major) order, matching head rows.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flatten().copied()
    }
}

/// One unit's output given its resolved children and the candidate pool.
///
/// Both modes share the exact-zero contract: any child that is exactly zero
/// forces an exactly-zero output, and a unit with no children is always zero.
/// The soft gate is the geometric mean of `tanh(γ·|child|)`; magnitudes keep
/// signed inputs (present only in block 1, before any ReLU) inside the gate's
/// domain without changing it for nonnegative children.
pub(crate) fn unit_value(
    children: &[u32],
    weight: &[f64],
    pool: &[f64],
    mode: AndMode,
    gamma: f64,
) -> f64 {
    let k = children.len();
    if k == 0 {
        return 0.0;
    }
    match mode {
        AndMode::Hard => {
            let mut g = 0.0;
            for &j in children {
                let z = pool[j as usize];
                if z == 0.0 {
                    return 0.0;
                }
                g += weight[j as usize] * z;
            }
            if g > 0.0 {
                g
            } else {
                0.0
            }
        }
        AndMode::Soft => soft_unit(children, weight, pool, gamma).0,
    }
}

/// Soft-gated unit evaluation, returning `(z, g, factor)` so the training
/// tape can reuse the forward intermediates. The single source of truth for
/// soft-mode semantics: inference and training see bit-identical values.
pub(crate) fn soft_unit(
    children: &[u32],
    weight: &[f64],
    pool: &[f64],
    gamma: f64,
) -> (f64, f64, f64) {
    let k = children.len();
    if k == 0 {
        return (0.0, 0.0, 0.0);
    }
    let mut g = 0.0;
    let factor = if k <= LOG_SPACE_THRESHOLD {
        let mut prod = 1.0;
        for &j in children {
            let z = pool[j as usize];
            if z == 0.0 {
                return (0.0, 0.0, 0.0);
            }
            g += weight[j as usize] * z;
            prod *= (gamma * z.abs()).tanh();
        }
        prod.powf(1.0 / k as f64)
    } else {
        let mut log_sum = 0.0;
        for &j in children {
            let z = pool[j as usize];
            if z == 0.0 {
                return (0.0, 0.0, 0.0);
            }
            g += weight[j as usize] * z;
            log_sum += (gamma * z.abs()).tanh().ln();
        }
        (log_sum / k as f64).exp()
    };
    let h = g * factor;
    if h > 0.0 {
        (h, g, factor)
    } else {
        (0.0, g, factor)
    }
}

impl HarsanyiMlp {
    /// Runs the network on `sample` with players outside `present` masked to
    /// the baseline. Returns every unit's output.
    pub fn forward_units(
        &self,
        sample: &Sample,
        present: PlayerSet,
        mode: AndMode,
    ) -> Result<Activations> {
        let children = self.children();
        self.forward_with(&children, sample, present, mode)
    }

    /// Forward pass with precomputed children sets; heavy mask sweeps resolve
    /// the selectors once and call this per mask.
    pub(crate) fn forward_with(
        &self,
        children: &[Vec<Vec<u32>>],
        sample: &Sample,
        present: PlayerSet,
        mode: AndMode,
    ) -> Result<Activations> {
        let cfg = self.config();
        if sample.columns() != cfg.inputs {
            return Err(Error::LengthMismatch { expected: cfg.inputs, got: sample.columns() });
        }
        if present.ground_size() != cfg.players() {
            return Err(Error::GroundMismatch {
                expected: cfg.players(),
                got: present.ground_size(),
            });
        }
        let z0 = sample.masked_z0(&cfg.grouping, present);
        self.forward_from_z0(children, z0, mode)
    }

    pub(crate) fn forward_from_z0(
        &self,
        children: &[Vec<Vec<u32>>],
        z0: Vec<f64>,
        mode: AndMode,
    ) -> Result<Activations> {
        let cfg = self.config();
        let mut blocks: Vec<Vec<f64>> = Vec::with_capacity(self.blocks().len());
        // Pool for all-previous scope; grows by one block per layer.
        let mut all_units: Vec<f64> = Vec::new();
        for (l, block) in self.blocks().iter().enumerate() {
            let pool: &[f64] = if l == 0 {
                &z0
            } else {
                match cfg.scope {
                    crate::model::ChildrenScope::PreviousBlockOnly => &blocks[l - 1],
                    crate::model::ChildrenScope::AllPreviousBlocks => &all_units,
                }
            };
            let mut out = Vec::with_capacity(block.len());
            for (u, unit) in block.iter().enumerate() {
                let z = unit_value(&children[l][u], &unit.weight, pool, mode, cfg.gamma);
                if !z.is_finite() {
                    return Err(Error::NonFiniteActivation { block: l, unit: u });
                }
                out.push(z);
            }
            if cfg.scope == crate::model::ChildrenScope::AllPreviousBlocks {
                all_units.extend_from_slice(&out);
            }
            blocks.push(out);
        }
        Ok(Activations { z0, blocks, mode })
    }

    /// Per-class logits: the head's weighted sum over every unit. The
    /// all-masked input yields exactly zero in every class.
    pub fn logits(&self, activations: &Activations) -> Vec<f64> {
        self.head()
            .iter()
            .map(|row| {
                row.iter()
                    .zip(activations.flat())
                    .map(|(w, z)| w * z)
                    .sum()
            })
            .collect()
    }

    pub fn output(&self, sample: &Sample, present: PlayerSet, mode: AndMode) -> Result<Vec<f64>> {
        let acts = self.forward_units(sample, present, mode)?;
        Ok(self.logits(&acts))
    }

    /// Class with the largest full-coalition logit; ties go to the lowest
    /// index.
    pub fn predicted_class(&self, sample: &Sample, mode: AndMode) -> Result<usize> {
        let full = PlayerSet::full(self.config().players());
        let logits = self.output(sample, full, mode)?;
        let mut best = 0;
        for (c, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = c;
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{random_mlp, random_sample};
    use crate::model::{ChildrenScope, MlpConfig, Unit};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// One block, one unit, both inputs selected, A = (1,1).
    fn two_input_unit(gamma: f64) -> HarsanyiMlp {
        let cfg = MlpConfig::new(2, vec![1], 1, 10.0, gamma);
        let unit = Unit { tau: vec![1.0, 1.0], weight: vec![1.0, 1.0] };
        HarsanyiMlp::from_parts(cfg, vec![vec![unit]], vec![vec![1.0]]).unwrap()
    }

    #[test]
    fn hard_unit_passes_linear_part() {
        let model = two_input_unit(100.0);
        let sample = Sample::zero_baseline(vec![2.0, 3.0]).unwrap();
        let acts = model.forward_units(&sample, PlayerSet::full(2), AndMode::Hard).unwrap();
        assert_eq!(acts.unit(0, 0), 5.0);
        assert_eq!(model.logits(&acts), vec![5.0]);
    }

    #[test]
    fn hard_unit_dies_when_any_child_is_masked() {
        let model = two_input_unit(100.0);
        let sample = Sample::zero_baseline(vec![2.0, 3.0]).unwrap();
        for mask in [PlayerSet::from_members(2, [1]), PlayerSet::empty(2)] {
            let acts = model.forward_units(&sample, mask, AndMode::Hard).unwrap();
            assert_eq!(acts.unit(0, 0), 0.0, "mask {mask}");
        }
    }

    #[test]
    fn soft_unit_matches_geometric_mean_form() {
        let model = two_input_unit(1.0);
        let sample = Sample::zero_baseline(vec![2.0, 3.0]).unwrap();
        let acts = model.forward_units(&sample, PlayerSet::full(2), AndMode::Soft).unwrap();
        let expect = 5.0 * (2.0f64.tanh() * 3.0f64.tanh()).sqrt();
        assert!((acts.unit(0, 0) - expect).abs() < 1e-12);
        assert!((expect - 4.89710).abs() < 1e-5);
    }

    #[test]
    fn soft_gate_is_exactly_zero_on_zero_children() {
        let model = two_input_unit(1.0);
        let sample = Sample::zero_baseline(vec![2.0, 3.0]).unwrap();
        let acts = model
            .forward_units(&sample, PlayerSet::from_members(2, [0]), AndMode::Soft)
            .unwrap();
        assert_eq!(acts.unit(0, 0), 0.0);
    }

    #[test]
    fn negative_linear_part_is_clamped() {
        let cfg = MlpConfig::new(2, vec![1], 1, 10.0, 1.0);
        let unit = Unit { tau: vec![1.0, 1.0], weight: vec![-1.0, -1.0] };
        let model = HarsanyiMlp::from_parts(cfg, vec![vec![unit]], vec![vec![1.0]]).unwrap();
        let sample = Sample::zero_baseline(vec![2.0, 3.0]).unwrap();
        for mode in [AndMode::Hard, AndMode::Soft] {
            let acts = model.forward_units(&sample, PlayerSet::full(2), mode).unwrap();
            assert_eq!(acts.unit(0, 0), 0.0);
        }
    }

    #[test]
    fn empty_children_unit_is_always_zero() {
        let cfg = MlpConfig::new(2, vec![1], 1, 10.0, 1.0);
        let unit = Unit { tau: vec![-1.0, 0.0], weight: vec![1.0, 1.0] };
        let model = HarsanyiMlp::from_parts(cfg, vec![vec![unit]], vec![vec![1.0]]).unwrap();
        let sample = Sample::zero_baseline(vec![2.0, 3.0]).unwrap();
        for mode in [AndMode::Hard, AndMode::Soft] {
            let acts = model.forward_units(&sample, PlayerSet::full(2), mode).unwrap();
            assert_eq!(acts.unit(0, 0), 0.0, "tau = 0 must not select");
        }
    }

    #[test]
    fn all_masked_input_gives_zero_logits_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for scope in [ChildrenScope::PreviousBlockOnly, ChildrenScope::AllPreviousBlocks] {
            let model = random_mlp(6, &[8, 8, 4], 3, scope, 1.0, &mut rng);
            let sample = random_sample(6, &mut rng);
            for mode in [AndMode::Hard, AndMode::Soft] {
                let v = model.output(&sample, PlayerSet::empty(6), mode).unwrap();
                assert_eq!(v, vec![0.0; 3]);
            }
        }
    }

    #[test]
    fn soft_converges_to_hard_as_gamma_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut base = random_mlp(6, &[8, 8], 2, ChildrenScope::PreviousBlockOnly, 1.0, &mut rng);
        let sample = random_sample(6, &mut rng);
        let hard = base.output(&sample, PlayerSet::full(6), AndMode::Hard).unwrap();
        let mut config = base.config().clone();
        config.gamma = 1e6;
        base = HarsanyiMlp::from_parts(config, base.blocks().to_vec(), base.head().to_vec()).unwrap();
        let soft = base.output(&sample, PlayerSet::full(6), AndMode::Soft).unwrap();
        for (h, s) in hard.iter().zip(&soft) {
            assert!((h - s).abs() <= 1e-6 * (1.0 + h.abs()), "hard {h} vs soft {s}");
        }
    }

    #[test]
    fn log_space_gate_matches_linear_space() {
        // 20 children crosses the log-space threshold; compare against a
        // direct product evaluation.
        let inputs = 20;
        let cfg = MlpConfig::new(inputs, vec![1], 1, 10.0, 1.0);
        let unit = Unit { tau: vec![1.0; inputs], weight: vec![0.3; inputs] };
        let model = HarsanyiMlp::from_parts(cfg, vec![vec![unit]], vec![vec![1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..inputs).map(|_| rng.random_range(0.2..2.0)).collect();
        let g: f64 = x.iter().map(|v| 0.3 * v).sum();
        let prod: f64 = x.iter().map(|v| v.tanh()).product();
        let expect = g * prod.powf(1.0 / inputs as f64);
        let sample = Sample::zero_baseline(x).unwrap();
        let acts = model.forward_units(&sample, PlayerSet::full(inputs), AndMode::Soft).unwrap();
        assert!(
            (acts.unit(0, 0) - expect).abs() <= 1e-12 * (1.0 + expect.abs()),
            "{} vs {expect}",
            acts.unit(0, 0)
        );
    }

    #[test]
    fn shape_errors_are_typed() {
        let model = two_input_unit(1.0);
        let short = Sample::zero_baseline(vec![1.0]).unwrap();
        assert!(matches!(
            model.forward_units(&short, PlayerSet::full(2), AndMode::Hard),
            Err(Error::LengthMismatch { .. })
        ));
        let sample = Sample::zero_baseline(vec![2.0, 3.0]).unwrap();
        assert!(matches!(
            model.forward_units(&sample, PlayerSet::full(3), AndMode::Hard),
            Err(Error::GroundMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_activation_is_reported_with_location() {
        let cfg = MlpConfig::new(1, vec![1], 1, 10.0, 1.0);
        let unit = Unit { tau: vec![1.0], weight: vec![f64::MAX] };
        let model = HarsanyiMlp::from_parts(cfg, vec![vec![unit]], vec![vec![1.0]]).unwrap();
        let sample = Sample::zero_baseline(vec![f64::MAX]).unwrap();
        match model.forward_units(&sample, PlayerSet::full(1), AndMode::Hard) {
            Err(Error::NonFiniteActivation { block: 0, unit: 0 }) => {}
            other => panic!("expected NonFiniteActivation, got {other:?}"),
        }
    }
}
