//! Exact Shapley attributions from one forward pass.
//!
//! Each active unit carries a single interaction effect of height `z_u` on
//! its receptive field `R_u`, and the Shapley value shares every interaction
//! effect equally among its members. Summing the head-weighted shares
//!
//! `φ(i) = Σ_{units u with i ∈ R_u} w_u · z_u / |R_u|`
//!
//! therefore reproduces the brute-force Shapley value of the network's own
//! masking game exactly, at the cost of one forward pass.

use crate::error::{Error, Result};
use crate::game::{
    AttributionVector, GameKind, GameTable, PlayerSet, Provenance, ValueOracle,
};
use crate::model::{AndMode, HarsanyiMlp, Sample};

/// Largest player count for exhaustive per-unit interaction tables.
pub(crate) const ENUMERATION_MAX: usize = 12;

impl HarsanyiMlp {
    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.config().classes {
            return Err(Error::ClassOutOfRange { class, classes: self.config().classes });
        }
        Ok(())
    }

    /// Exact Shapley attribution of the class logit, from a single forward
    /// pass (`inference_count = 1`).
    pub fn exact_shapley(
        &self,
        sample: &Sample,
        class: usize,
        mode: AndMode,
    ) -> Result<AttributionVector> {
        self.check_class(class)?;
        let acts = self.forward_units(sample, PlayerSet::full(self.players()), mode)?;
        let fields = self.receptive_fields();
        let weights = &self.head()[class];
        let mut phi = vec![0.0; self.players()];
        for ((z, r), w) in acts.flat().zip(fields.flat()).zip(weights) {
            if z == 0.0 || r.is_empty() {
                continue;
            }
            let credit = w * z / r.len() as f64;
            for i in r.members() {
                phi[i] += credit;
            }
        }
        Ok(AttributionVector { phi, provenance: Provenance::HarsanyiExact, inference_count: 1 })
    }

    /// Shapley attribution restricted to the players in `selected`; everyone
    /// else keeps its observed value (they are treated as permanently
    /// present, not masked to the baseline).
    ///
    /// Entries outside `selected` are zero. The attributions sum to
    /// `v(x) - v(x with exactly `selected` masked)`.
    pub fn restricted_shapley(
        &self,
        sample: &Sample,
        selected: PlayerSet,
        class: usize,
        mode: AndMode,
    ) -> Result<AttributionVector> {
        self.check_class(class)?;
        let n = self.players();
        if selected.ground_size() != n {
            return Err(Error::GroundMismatch { expected: n, got: selected.ground_size() });
        }
        let acts = self.forward_units(sample, PlayerSet::full(n), mode)?;
        let fields = self.receptive_fields();
        let weights = &self.head()[class];
        let mut phi = vec![0.0; n];
        for ((z, r), w) in acts.flat().zip(fields.flat()).zip(weights) {
            // Units whose field avoids `selected` are constants of the
            // restricted game and carry no credit.
            let r_sel = r.intersect(selected);
            if z == 0.0 || r_sel.is_empty() {
                continue;
            }
            let credit = w * z / r_sel.len() as f64;
            for i in r_sel.members() {
                phi[i] += credit;
            }
        }
        Ok(AttributionVector { phi, provenance: Provenance::HarsanyiExact, inference_count: 1 })
    }

    /// The masking game this model induces at `sample` for one class:
    /// `V(S) = logit(class | players in S present)`. The empty coalition maps
    /// to exactly zero, so the game is normalized.
    pub fn induced_game<'a>(
        &'a self,
        sample: &'a Sample,
        class: usize,
        mode: AndMode,
    ) -> Result<MlpGame<'a>> {
        self.check_class(class)?;
        Ok(MlpGame { model: self, sample, class, mode })
    }

    /// Interaction table of a single unit's masking behaviour:
    /// the Möbius transform of `S ↦ z_u(x_S)`. Enumerates all `2^n` masks.
    pub fn unit_interaction_table(
        &self,
        sample: &Sample,
        mode: AndMode,
        block: usize,
        unit: usize,
    ) -> Result<GameTable> {
        let n = self.players();
        if n > ENUMERATION_MAX {
            return Err(Error::EnumerationLimit { n, max: ENUMERATION_MAX });
        }
        let children = self.children();
        let mut values = Vec::with_capacity(1 << n);
        for bits in 0..(1u32 << n) {
            let present = PlayerSet::from_bits(bits, n);
            let acts = self.forward_with(&children, sample, present, mode)?;
            values.push(acts.unit(block, unit));
        }
        let reward = GameTable::new(n, GameKind::Reward, values)?;
        crate::game::harsanyi_transform(&reward)
    }

    /// Interaction tables for every unit from one shared mask sweep
    /// (`2^n` forward passes total). Returned in flat unit order.
    pub fn unit_interaction_tables(
        &self,
        sample: &Sample,
        mode: AndMode,
    ) -> Result<Vec<GameTable>> {
        let n = self.players();
        if n > ENUMERATION_MAX {
            return Err(Error::EnumerationLimit { n, max: ENUMERATION_MAX });
        }
        let children = self.children();
        let total = self.config().total_units();
        let size = 1usize << n;
        let mut columns = vec![Vec::with_capacity(size); total];
        for bits in 0..(1u32 << n) {
            let present = PlayerSet::from_bits(bits, n);
            let acts = self.forward_with(&children, sample, present, mode)?;
            for (col, z) in columns.iter_mut().zip(acts.flat()) {
                col.push(z);
            }
        }
        columns
            .into_iter()
            .map(|values| {
                let reward = GameTable::new(n, GameKind::Reward, values)?;
                crate::game::harsanyi_transform(&reward)
            })
            .collect()
    }
}

/// [`ValueOracle`] view of a model at a fixed sample and class. Forward
/// failures surface as NaN, which downstream consumers report as typed
/// errors naming the coalition.
pub struct MlpGame<'a> {
    model: &'a HarsanyiMlp,
    sample: &'a Sample,
    class: usize,
    mode: AndMode,
}

impl ValueOracle for MlpGame<'_> {
    fn players(&self) -> usize {
        self.model.players()
    }

    fn value(&self, coalition: PlayerSet) -> f64 {
        match self.model.output(self.sample, coalition, self.mode) {
            Ok(v) => v[self.class],
            Err(_) => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::brute_force_shapley;
    use crate::model::testutil::{random_mlp, random_sample};
    use crate::model::{ChildrenScope, MlpConfig, PlayerGrouping, Unit};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn exact_matches_brute_force_both_modes_and_scopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for scope in [ChildrenScope::PreviousBlockOnly, ChildrenScope::AllPreviousBlocks] {
            for mode in [AndMode::Hard, AndMode::Soft] {
                for _ in 0..5 {
                    let n = 6;
                    let model = random_mlp(n, &[8, 6, 4], 2, scope, 1.0, &mut rng);
                    let sample = random_sample(n, &mut rng);
                    let class = rng.random_range(0..2);
                    let exact = model.exact_shapley(&sample, class, mode).unwrap();
                    let game = model.induced_game(&sample, class, mode).unwrap();
                    let brute = brute_force_shapley(&game).unwrap();
                    let scale =
                        1.0 + brute.phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    assert!(
                        max_abs_diff(&exact.phi, &brute.phi) <= 1e-9 * scale,
                        "{scope:?} {mode:?}"
                    );
                    assert_eq!(exact.inference_count, 1);
                    assert_eq!(exact.provenance, Provenance::HarsanyiExact);
                }
            }
        }
    }

    #[test]
    fn exact_matches_brute_force_with_grouping() {
        // 6 columns owned by 4 players; the oracle masks whole players.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut model =
            random_mlp(6, &[8, 5], 2, ChildrenScope::PreviousBlockOnly, 1.0, &mut rng);
        let mut config = model.config().clone();
        config.grouping = PlayerGrouping::new(vec![0, 0, 1, 2, 3, 3]).unwrap();
        model =
            HarsanyiMlp::from_parts(config, model.blocks().to_vec(), model.head().to_vec())
                .unwrap();
        let sample = random_sample(6, &mut rng);
        let exact = model.exact_shapley(&sample, 0, AndMode::Soft).unwrap();
        assert_eq!(exact.phi.len(), 4);
        let game = model.induced_game(&sample, 0, AndMode::Soft).unwrap();
        let brute = brute_force_shapley(&game).unwrap();
        assert!(max_abs_diff(&exact.phi, &brute.phi) <= 1e-9);
    }

    #[test]
    fn efficiency_holds_exactly_enough() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let n = 8;
        let model = random_mlp(n, &[12, 8], 3, ChildrenScope::PreviousBlockOnly, 1.0, &mut rng);
        let sample = random_sample(n, &mut rng);
        for class in 0..3 {
            let exact = model.exact_shapley(&sample, class, AndMode::Soft).unwrap();
            let v_full = model.output(&sample, PlayerSet::full(n), AndMode::Soft).unwrap()[class];
            assert!(
                (exact.total() - v_full).abs() <= 1e-9 * (1.0 + v_full.abs()),
                "class {class}: {} vs {v_full}",
                exact.total()
            );
        }
    }

    #[test]
    fn unit_tables_are_single_spikes() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        for mode in [AndMode::Hard, AndMode::Soft] {
            let n = 6;
            let model = random_mlp(n, &[8, 6], 2, ChildrenScope::PreviousBlockOnly, 1.0, &mut rng);
            let sample = random_sample(n, &mut rng);
            let fields = model.receptive_fields();
            let full = model.forward_units(&sample, PlayerSet::full(n), mode).unwrap();
            let tables = model.unit_interaction_tables(&sample, mode).unwrap();
            let mut flat = 0;
            for (l, block) in model.blocks().iter().enumerate() {
                for u in 0..block.len() {
                    let table = &tables[flat];
                    let r = fields.unit(l, u);
                    let z = full.unit(l, u);
                    let tol = 1e-9 * z.abs().max(1.0);
                    for (mask, &v) in table.values().iter().enumerate() {
                        let expect = if mask == r.index() { z } else { 0.0 };
                        assert!(
                            (v - expect).abs() <= tol,
                            "{mode:?} unit ({l},{u}) field {r}: I({mask:b}) = {v}, expected {expect}"
                        );
                    }
                    flat += 1;
                }
            }
        }
    }

    #[test]
    fn single_unit_table_agrees_with_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let model = random_mlp(5, &[6, 4], 1, ChildrenScope::PreviousBlockOnly, 1.0, &mut rng);
        let sample = random_sample(5, &mut rng);
        let tables = model.unit_interaction_tables(&sample, AndMode::Soft).unwrap();
        let single = model.unit_interaction_table(&sample, AndMode::Soft, 1, 2).unwrap();
        assert_eq!(single.values(), tables[model.flat_index(1, 2)].values());
    }

    #[test]
    fn output_interactions_decompose_over_units() {
        // The network game's interaction table equals the head-weighted sum
        // of per-unit tables.
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let n = 6;
        let model = random_mlp(n, &[8, 6], 2, ChildrenScope::PreviousBlockOnly, 1.0, &mut rng);
        let sample = random_sample(n, &mut rng);
        let class = 1;
        let game = GameTable::from_oracle(&model.induced_game(&sample, class, AndMode::Soft).unwrap()).unwrap();
        let net_inter = crate::game::harsanyi_transform(&game).unwrap();
        let unit_tables = model.unit_interaction_tables(&sample, AndMode::Soft).unwrap();
        let weights = &model.head()[class];
        let scale = 1.0 + net_inter.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for mask in 0..(1usize << n) {
            let summed: f64 =
                unit_tables.iter().zip(weights).map(|(t, w)| w * t.values()[mask]).sum();
            assert!(
                (net_inter.values()[mask] - summed).abs() <= 1e-9 * scale,
                "mask {mask:b}"
            );
        }
    }

    /// Restricted brute-force oracle: Shapley over `selected` in the game
    /// where outside players always keep their observed values.
    fn restricted_brute_force(
        model: &HarsanyiMlp,
        sample: &Sample,
        selected: PlayerSet,
        class: usize,
        mode: AndMode,
    ) -> Vec<f64> {
        let n = model.players();
        let sel: Vec<usize> = selected.members().collect();
        let outside = selected.complement();
        let base = model.output(sample, outside, mode).unwrap()[class];
        struct Sub<'a> {
            model: &'a HarsanyiMlp,
            sample: &'a Sample,
            sel: &'a [usize],
            outside: PlayerSet,
            base: f64,
            class: usize,
            mode: AndMode,
        }
        impl ValueOracle for Sub<'_> {
            fn players(&self) -> usize {
                self.sel.len()
            }
            fn value(&self, coalition: PlayerSet) -> f64 {
                let mut present = self.outside;
                for (pos, &player) in self.sel.iter().enumerate() {
                    if coalition.contains(pos) {
                        present = present.insert(player);
                    }
                }
                self.model.output(self.sample, present, self.mode).unwrap()[self.class] - self.base
            }
        }
        let oracle = Sub { model, sample, sel: &sel, outside, base, class, mode };
        let sub_phi = brute_force_shapley(&oracle).unwrap().phi;
        let mut phi = vec![0.0; n];
        for (pos, &player) in sel.iter().enumerate() {
            phi[player] = sub_phi[pos];
        }
        phi
    }

    #[test]
    fn restricted_matches_restricted_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        for mode in [AndMode::Hard, AndMode::Soft] {
            let n = 8;
            let model = random_mlp(n, &[10, 6], 2, ChildrenScope::PreviousBlockOnly, 1.0, &mut rng);
            let sample = random_sample(n, &mut rng);
            let selected = PlayerSet::from_members(n, [0, 2, 3, 6]);
            let fast = model.restricted_shapley(&sample, selected, 0, mode).unwrap();
            let brute = restricted_brute_force(&model, &sample, selected, 0, mode);
            assert!(max_abs_diff(&fast.phi, &brute) <= 1e-9, "{mode:?}");
            for i in selected.complement().members() {
                assert_eq!(fast.phi[i], 0.0, "unselected players carry no credit");
            }
        }
    }

    #[test]
    fn restricted_efficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let n = 7;
        let model = random_mlp(n, &[9, 5], 2, ChildrenScope::PreviousBlockOnly, 1.0, &mut rng);
        let sample = random_sample(n, &mut rng);
        let selected = PlayerSet::from_members(n, [1, 3, 4]);
        let fast = model.restricted_shapley(&sample, selected, 1, AndMode::Soft).unwrap();
        let v_full = model.output(&sample, PlayerSet::full(n), AndMode::Soft).unwrap()[1];
        let v_outside = model.output(&sample, selected.complement(), AndMode::Soft).unwrap()[1];
        assert!(
            (fast.total() - (v_full - v_outside)).abs() <= 1e-9 * (1.0 + v_full.abs()),
            "{} vs {}",
            fast.total(),
            v_full - v_outside
        );
    }

    #[test]
    fn restricted_full_selection_reduces_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(68);
        let n = 6;
        let model = random_mlp(n, &[8, 4], 2, ChildrenScope::PreviousBlockOnly, 1.0, &mut rng);
        let sample = random_sample(n, &mut rng);
        let all = model.restricted_shapley(&sample, PlayerSet::full(n), 0, AndMode::Soft).unwrap();
        let exact = model.exact_shapley(&sample, 0, AndMode::Soft).unwrap();
        assert_eq!(all.phi, exact.phi);
    }

    #[test]
    fn enumeration_limit_is_typed() {
        let cfg = MlpConfig::new(13, vec![1], 1, 10.0, 1.0);
        let unit = Unit { tau: vec![1.0; 13], weight: vec![1.0; 13] };
        let model = HarsanyiMlp::from_parts(cfg, vec![vec![unit]], vec![vec![1.0]]).unwrap();
        let sample = Sample::zero_baseline(vec![1.0; 13]).unwrap();
        assert!(matches!(
            model.unit_interaction_tables(&sample, AndMode::Hard),
            Err(Error::EnumerationLimit { n: 13, max: 12 })
        ));
    }

    #[test]
    fn class_bounds_are_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(69);
        let model = random_mlp(4, &[4], 2, ChildrenScope::PreviousBlockOnly, 1.0, &mut rng);
        let sample = random_sample(4, &mut rng);
        assert!(matches!(
            model.exact_shapley(&sample, 2, AndMode::Soft),
            Err(Error::ClassOutOfRange { class: 2, classes: 2 })
        ));
    }
}
