//! Sampling estimators of the Shapley value, for comparing against the
//! closed-form readout.
//!
//! Every estimator works through [`ValueOracle`] and reports the exact number
//! of evaluations it consumed. Budgets are hard caps: an estimator spends at
//! most `budget` calls, floor-dividing into whole permutations or regression
//! draws. When the budget covers full enumeration each estimator switches to
//! it and becomes exact, so exactness is a property of the estimator rather
//! than a separate code path.
//!
//! * `Sampling`: uniform random permutations, one marginal walk each.
//! * `Antithetical`: permutations in (π, reverse π) pairs; positional noise
//!   in a walk is anticorrelated with its reverse, lowering variance.
//! * `KernelShap`: weighted least squares on random coalitions with the
//!   efficiency identity enforced as a hard constraint.
//! * `KernelShapPaired`: as above, but every coalition is drawn together
//!   with its complement.

use std::collections::HashSet;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{
    AttributionVector, CountingOracle, PlayerSet, Provenance, ValueOracle,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EstimatorKind {
    Sampling,
    Antithetical,
    KernelShap,
    KernelShapPaired,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Sampling,
        EstimatorKind::Antithetical,
        EstimatorKind::KernelShap,
        EstimatorKind::KernelShapPaired,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Sampling => "sampling",
            EstimatorKind::Antithetical => "antithetical",
            EstimatorKind::KernelShap => "kernelshap",
            EstimatorKind::KernelShapPaired => "kernelshap-ps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sampling" => Ok(EstimatorKind::Sampling),
            "antithetical" => Ok(EstimatorKind::Antithetical),
            "kernelshap" => Ok(EstimatorKind::KernelShap),
            "kernelshap-ps" => Ok(EstimatorKind::KernelShapPaired),
            other => Err(Error::Format(format!("unknown estimator {other:?}"))),
        }
    }

    /// Index into [`EstimatorKind::ALL`]; used to derive per-estimator RNG
    /// streams.
    pub fn index(&self) -> u64 {
        Self::ALL.iter().position(|k| k == self).unwrap() as u64
    }
}

/// Root-mean-square difference between two attribution vectors.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sum / a.len() as f64).sqrt()
}

/// Runs `kind` against `oracle` with at most `budget` oracle calls.
pub fn estimate<O: ValueOracle + ?Sized>(
    oracle: &O,
    kind: EstimatorKind,
    budget: u64,
    rng: &mut ChaCha8Rng,
) -> Result<AttributionVector> {
    let n = oracle.players();
    if n == 0 {
        return Err(Error::Schema("estimators need at least one player".into()));
    }
    let counter = CountingOracle::new(oracle);
    let phi = match kind {
        EstimatorKind::Sampling => permutation_sampling(&counter, budget, rng, false)?,
        EstimatorKind::Antithetical => permutation_sampling(&counter, budget, rng, true)?,
        EstimatorKind::KernelShap => kernel_shap(&counter, budget, rng, false)?,
        EstimatorKind::KernelShapPaired => kernel_shap(&counter, budget, rng, true)?,
    };
    Ok(AttributionVector {
        phi,
        provenance: Provenance::Estimator,
        inference_count: counter.calls(),
    })
}

fn checked_value<O: ValueOracle + ?Sized>(oracle: &O, coalition: PlayerSet) -> Result<f64> {
    let v = oracle.value(coalition);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteValue { coalition: coalition.to_string() })
    }
}

fn factorial(n: usize) -> Option<u64> {
    (1..=n as u64).try_fold(1u64, |acc, k| acc.checked_mul(k))
}

/// Adds one permutation's marginals into `phi`: `n + 1` oracle calls.
fn walk_permutation<O: ValueOracle + ?Sized>(
    oracle: &O,
    perm: &[usize],
    phi: &mut [f64],
) -> Result<()> {
    let n = phi.len();
    let mut set = PlayerSet::empty(n);
    let mut prev = checked_value(oracle, set)?;
    for &p in perm {
        set = set.insert(p);
        let cur = checked_value(oracle, set)?;
        phi[p] += cur - prev;
        prev = cur;
    }
    Ok(())
}

fn permutation_sampling<O: ValueOracle + ?Sized>(
    oracle: &O,
    budget: u64,
    rng: &mut ChaCha8Rng,
    antithetical: bool,
) -> Result<Vec<f64>> {
    let n = oracle.players();
    let per_walk = (n + 1) as u64;
    let unit = if antithetical { 2 * per_walk } else { per_walk };
    if budget < unit {
        return Err(Error::InsufficientBudget { budget, minimum: unit });
    }

    let mut phi = vec![0.0; n];
    if let Some(full) = factorial(n).and_then(|f| f.checked_mul(per_walk)) {
        if budget >= full {
            // Full enumeration: the empirical mean over all n! walks is the
            // Shapley value itself.
            for perm in (0..n).permutations(n) {
                walk_permutation(oracle, &perm, &mut phi)?;
            }
            let scale = 1.0 / factorial(n).unwrap() as f64;
            phi.iter_mut().for_each(|p| *p *= scale);
            return Ok(phi);
        }
    }

    let walks = if antithetical { 2 * (budget / unit) } else { budget / unit };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut done = 0u64;
    while done < walks {
        perm.shuffle(rng);
        walk_permutation(oracle, &perm, &mut phi)?;
        done += 1;
        if antithetical {
            perm.reverse();
            walk_permutation(oracle, &perm, &mut phi)?;
            done += 1;
        }
    }
    let scale = 1.0 / walks as f64;
    phi.iter_mut().for_each(|p| *p *= scale);
    Ok(phi)
}

/// Shapley kernel mass for coalition size `s` out of `n`, up to the constant
/// factor shared by all sizes.
fn kernel_size_mass(n: usize, s: usize) -> f64 {
    (n - 1) as f64 / (s * (n - s)) as f64
}

fn kernel_shap<O: ValueOracle + ?Sized>(
    oracle: &O,
    budget: u64,
    rng: &mut ChaCha8Rng,
    paired: bool,
) -> Result<Vec<f64>> {
    let n = oracle.players();
    if n == 1 {
        // One player: efficiency alone determines the attribution.
        if budget < 2 {
            return Err(Error::InsufficientBudget { budget, minimum: 2 });
        }
        let v0 = checked_value(oracle, PlayerSet::empty(1))?;
        let vn = checked_value(oracle, PlayerSet::full(1))?;
        return Ok(vec![vn - v0]);
    }
    let minimum = (n as u64) + 2;
    if budget < minimum {
        return Err(Error::InsufficientBudget { budget, minimum });
    }

    let v0 = checked_value(oracle, PlayerSet::empty(n))?;
    let vn = checked_value(oracle, PlayerSet::full(n))? - v0;

    // Weighted normal equations of the constrained regression. `gram` is the
    // n x n moment matrix, `moment` the weighted response moments.
    let mut gram = vec![0.0; n * n];
    let mut moment = vec![0.0; n];
    let mut distinct: HashSet<u32> = HashSet::new();

    let mut add_row = |set: PlayerSet, y: f64, w: f64, distinct: &mut HashSet<u32>| {
        distinct.insert(set.bits());
        let members: Vec<usize> = set.members().collect();
        for &i in &members {
            moment[i] += w * y;
            for &j in &members {
                gram[i * n + j] += w;
            }
        }
    };

    let full_cost = 1u64 << n;
    if budget >= full_cost {
        // Full enumeration with exact kernel weights is exact.
        for mask in 1u32..(full_cost as u32 - 1) {
            let set = PlayerSet::from_bits(mask, n);
            let y = checked_value(oracle, set)? - v0;
            let s = set.len();
            let w = kernel_size_mass(n, s) / binomial_f64(n, s);
            add_row(set, y, w, &mut distinct);
        }
    } else {
        let sizes: Vec<f64> = (1..n).map(|s| kernel_size_mass(n, s)).collect();
        let size_dist = WeightedIndex::new(&sizes)
            .map_err(|e| Error::Schema(format!("kernel size weights: {e}")))?;
        let draws = if paired { (budget - 2) / 2 } else { budget - 2 };
        let mut done = 0u64;
        while done < draws {
            let s = 1 + size_dist.sample(rng);
            let idx = rand::seq::index::sample(rng, n, s);
            let mut set = PlayerSet::empty(n);
            for i in idx {
                set = set.insert(i);
            }
            let y = checked_value(oracle, set)? - v0;
            add_row(set, y, 1.0, &mut distinct);
            done += 1;
            if paired {
                let comp = set.complement();
                let yc = checked_value(oracle, comp)? - v0;
                add_row(comp, yc, 1.0, &mut distinct);
            }
        }
        if distinct.len() < n {
            return Err(Error::RankDeficient { distinct: distinct.len(), players: n });
        }
    }

    // KKT system of least squares with the efficiency constraint 1'phi = V(N).
    let dim = n + 1;
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        if i < n && j < n {
            gram[i * n + j]
        } else if i == n && j == n {
            0.0
        } else {
            1.0
        }
    });
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        rhs[i] = moment[i];
    }
    rhs[n] = vn;
    let solved = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::RankDeficient { distinct: distinct.len(), players: n })?;
    let phi: Vec<f64> = solved.iter().take(n).copied().collect();
    if phi.iter().any(|p| !p.is_finite()) {
        return Err(Error::RankDeficient { distinct: distinct.len(), players: n });
    }
    Ok(phi)
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    crate::game::binomial(n, k) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{brute_force_shapley, GameKind, GameTable};
    use crate::rng::estimator_stream;

    fn random_game(n: usize, seed: u64) -> GameTable {
        let mut rng = crate::rng::stream(seed, crate::rng::STREAM_DATA);
        let mut values: Vec<f64> = (0..1usize << n).map(|_| rng.random_range(-3.0..3.0)).collect();
        values[0] = 0.0;
        GameTable::new(n, GameKind::Reward, values).unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in EstimatorKind::ALL {
            assert_eq!(EstimatorKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(matches!(EstimatorKind::parse("magic"), Err(Error::Format(_))));
        assert_eq!(EstimatorKind::KernelShapPaired.index(), 3);
    }

    #[test]
    fn rmse_basics() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 6.0]), 1.0);
        assert_eq!(rmse(&[5.0], &[5.0]), 0.0);
    }

    #[test]
    fn all_estimators_are_exact_at_full_enumeration() {
        for n in [2, 4, 5] {
            let game = random_game(n, 60 + n as u64);
            let exact = brute_force_shapley(&game).unwrap();
            let perm_budget = factorial(n).unwrap() * (n as u64 + 1);
            for kind in EstimatorKind::ALL {
                let budget = match kind {
                    EstimatorKind::Sampling | EstimatorKind::Antithetical => perm_budget,
                    _ => 1u64 << n,
                };
                let mut rng = estimator_stream(7, kind.index(), 0);
                let est = estimate(&game, kind, budget, &mut rng).unwrap();
                let err = rmse(&est.phi, &exact.phi);
                assert!(err <= 1e-8, "{} n={n} rmse {err:.3e}", kind.name());
                assert_eq!(est.inference_count, budget);
                assert_eq!(est.provenance, Provenance::Estimator);
            }
        }
    }

    #[test]
    fn permutation_budget_accounting_is_exact() {
        let n = 8;
        let game = random_game(n, 71);
        let counter = CountingOracle::new(&game);
        let mut rng = estimator_stream(3, 0, 0);
        // 10 whole permutations fit in a budget of 95; the leftover 5 calls
        // must not be spent.
        let est = estimate(&counter, EstimatorKind::Sampling, 95, &mut rng).unwrap();
        assert_eq!(counter.calls(), 90);
        assert_eq!(est.inference_count, 90);

        let counter = CountingOracle::new(&game);
        let mut rng = estimator_stream(3, 1, 0);
        let est = estimate(&counter, EstimatorKind::Antithetical, 95, &mut rng).unwrap();
        // Antithetical spends whole pairs: 95 / 18 = 5 pairs = 90 calls.
        assert_eq!(counter.calls(), 90);
        assert_eq!(est.inference_count, 90);
    }

    #[test]
    fn kernel_budget_accounting_is_exact() {
        let n = 8;
        let game = random_game(n, 72);
        let counter = CountingOracle::new(&game);
        let mut rng = estimator_stream(3, 2, 0);
        let est = estimate(&counter, EstimatorKind::KernelShap, 57, &mut rng).unwrap();
        assert_eq!(counter.calls(), 57);
        assert_eq!(est.inference_count, 57);

        let counter = CountingOracle::new(&game);
        let mut rng = estimator_stream(3, 3, 0);
        let est = estimate(&counter, EstimatorKind::KernelShapPaired, 57, &mut rng).unwrap();
        // 2 anchors + 27 pairs.
        assert_eq!(counter.calls(), 56);
        assert_eq!(est.inference_count, 56);
    }

    #[test]
    fn budgets_below_the_minimum_are_typed_errors() {
        let n = 6;
        let game = random_game(n, 73);
        let mut rng = estimator_stream(1, 0, 0);
        match estimate(&game, EstimatorKind::Sampling, 6, &mut rng) {
            Err(Error::InsufficientBudget { budget: 6, minimum: 7 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match estimate(&game, EstimatorKind::Antithetical, 13, &mut rng) {
            Err(Error::InsufficientBudget { budget: 13, minimum: 14 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match estimate(&game, EstimatorKind::KernelShap, 7, &mut rng) {
            Err(Error::InsufficientBudget { budget: 7, minimum: 8 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn efficiency_holds_for_kernel_estimates() {
        let n = 7;
        let game = random_game(n, 74);
        let exact = brute_force_shapley(&game).unwrap();
        for (kind, est_idx) in
            [(EstimatorKind::KernelShap, 2u64), (EstimatorKind::KernelShapPaired, 3u64)]
        {
            for trial in 0..10u64 {
                let mut rng = estimator_stream(21, est_idx, trial);
                let est = estimate(&game, kind, 40, &mut rng).unwrap();
                // The constraint makes the estimate efficient even far from
                // convergence.
                assert!(
                    (est.total() - exact.total()).abs() <= 1e-9,
                    "{} trial {trial}",
                    kind.name()
                );
            }
        }
    }

    #[test]
    fn degenerate_draws_are_rank_deficient_not_garbage() {
        // At the minimum budget the three regression rows for three players
        // often collide or span too little. Across seeds both the typed
        // failure and the success path must appear, and nothing else.
        let game = random_game(3, 75);
        let mut saw_deficient = false;
        let mut saw_ok = false;
        for trial in 0..64 {
            let mut rng = estimator_stream(33, 2, trial);
            match estimate(&game, EstimatorKind::KernelShap, 5, &mut rng) {
                Ok(_) => saw_ok = true,
                Err(Error::RankDeficient { players: 3, .. }) => saw_deficient = true,
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!(saw_deficient && saw_ok);
    }

    #[test]
    fn single_player_kernel_is_exact() {
        let game = GameTable::new(1, GameKind::Reward, vec![0.0, 2.5]).unwrap();
        let mut rng = estimator_stream(1, 2, 0);
        let est = estimate(&game, EstimatorKind::KernelShap, 2, &mut rng).unwrap();
        assert_eq!(est.phi, vec![2.5]);
        assert_eq!(est.inference_count, 2);
    }

    #[test]
    fn mean_error_shrinks_with_budget() {
        // The smallest budget still gives the paired kernel estimator enough
        // pairs to span all players; below roughly 5(n+1) its regression is
        // frequently rank-deficient by construction. The largest budget tips
        // the kernel estimators into full enumeration, which must only help.
        let n = 8;
        let game = random_game(n, 76);
        let exact = brute_force_shapley(&game).unwrap();
        let budgets = [5 * (n as u64 + 1), 20 * (n as u64 + 1), 80 * (n as u64 + 1)];
        let trials = 40u64;
        for kind in EstimatorKind::ALL {
            let mut means = Vec::new();
            for &budget in &budgets {
                let mut total = 0.0;
                for trial in 0..trials {
                    let mut rng = estimator_stream(55, kind.index(), trial);
                    let est = estimate(&game, kind, budget, &mut rng).unwrap();
                    total += rmse(&est.phi, &exact.phi);
                }
                means.push(total / trials as f64);
            }
            assert!(
                means[0] > means[1] && means[1] >= means[2],
                "{}: {:?}",
                kind.name(),
                means
            );
        }
    }

    #[test]
    fn antithetical_pairs_cut_variance_on_a_quadratic_game() {
        // Value is the squared sum of member weights: marginals depend
        // strongly on position, which is what reversal cancels.
        let n = 8;
        let weights: Vec<f64> = (0..n).map(|i| 0.3 + 0.2 * i as f64).collect();
        let mut values = vec![0.0; 1 << n];
        for (mask, slot) in values.iter_mut().enumerate() {
            let total: f64 =
                (0..n).filter(|i| mask >> i & 1 == 1).map(|i| weights[i]).sum();
            *slot = total * total;
        }
        let game = GameTable::new(n, GameKind::Reward, values).unwrap();
        let exact = brute_force_shapley(&game).unwrap();
        let budget = 4 * (n as u64 + 1);
        let trials = 60u64;
        let mean_rmse = |kind: EstimatorKind| {
            let mut total = 0.0;
            for trial in 0..trials {
                let mut rng = estimator_stream(91, kind.index(), trial);
                let est = estimate(&game, kind, budget, &mut rng).unwrap();
                total += rmse(&est.phi, &exact.phi);
            }
            total / trials as f64
        };
        let plain = mean_rmse(EstimatorKind::Sampling);
        let anti = mean_rmse(EstimatorKind::Antithetical);
        assert!(anti < plain, "antithetical {anti:.4e} vs sampling {plain:.4e}");
    }

    #[test]
    fn estimates_are_reproducible_per_stream() {
        let game = random_game(6, 77);
        for kind in EstimatorKind::ALL {
            let mut a = estimator_stream(5, kind.index(), 9);
            let mut b = estimator_stream(5, kind.index(), 9);
            let ea = estimate(&game, kind, 40, &mut a).unwrap();
            let eb = estimate(&game, kind, 40, &mut b).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&ea.phi), bits(&eb.phi));
        }
    }

    #[test]
    fn non_finite_oracle_values_are_reported() {
        struct Poisoned;
        impl ValueOracle for Poisoned {
            fn players(&self) -> usize {
                3
            }
            fn value(&self, coalition: PlayerSet) -> f64 {
                if coalition.len() == 2 {
                    f64::NAN
                } else {
                    coalition.len() as f64
                }
            }
        }
        let mut rng = estimator_stream(2, 0, 0);
        match estimate(&Poisoned, EstimatorKind::Sampling, 8, &mut rng) {
            Err(Error::NonFiniteValue { coalition }) => {
                assert!(coalition.starts_with('{') && coalition.ends_with('}'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
