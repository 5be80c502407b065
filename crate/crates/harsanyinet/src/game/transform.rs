//! Möbius/zeta transforms between coalition values and interaction effects,
//! and the dividend form of the Shapley value.

use crate::error::{Error, Result};
use crate::game::{AttributionVector, GameKind, GameTable, Provenance};

/// In-place subset Möbius transform: `out[S] = Σ_{L⊆S} (-1)^{|S|-|L|} in[L]`.
/// One pass per bit, ascending; O(n 2^n) and fully deterministic.
fn mobius_in_place(values: &mut [f64], n: usize) {
    for i in 0..n {
        let bit = 1usize << i;
        for mask in 0..values.len() {
            if mask & bit != 0 {
                values[mask] -= values[mask ^ bit];
            }
        }
    }
}

/// In-place subset-sum (zeta) transform: `out[S] = Σ_{L⊆S} in[L]`.
fn zeta_in_place(values: &mut [f64], n: usize) {
    for i in 0..n {
        let bit = 1usize << i;
        for mask in 0..values.len() {
            if mask & bit != 0 {
                values[mask] += values[mask ^ bit];
            }
        }
    }
}

/// Interaction effects of a reward game: the unique `I` with
/// `V(S) = Σ_{L⊆S} I(L)`, equivalently `I(S) = V(S) - Σ_{L⊊S} I(L)`.
///
/// Computed by the closed-form Möbius transform; equality with the literal
/// recursion is pinned by tests before anything else relies on it. On games
/// with integer values the transform is exact (no rounding).
pub fn harsanyi_transform(game: &GameTable) -> Result<GameTable> {
    if game.kind() != GameKind::Reward {
        return Err(Error::KindMismatch { expected: "reward", got: game.kind().name() });
    }
    let mut out = game.clone().with_kind(GameKind::Interaction);
    let n = out.n();
    mobius_in_place(out.values_mut(), n);
    Ok(out)
}

/// Reconstructs the reward game from interaction effects:
/// `V(S) = Σ_{L⊆S} I(L)`. Exact inverse of [`harsanyi_transform`] on
/// integer-valued games.
pub fn inverse_harsanyi(game: &GameTable) -> Result<GameTable> {
    if game.kind() != GameKind::Interaction {
        return Err(Error::KindMismatch { expected: "interaction", got: game.kind().name() });
    }
    let mut out = game.clone().with_kind(GameKind::Reward);
    let n = out.n();
    zeta_in_place(out.values_mut(), n);
    Ok(out)
}

/// Shapley values as uniformly shared interaction effects:
/// `φ(i) = Σ_{S∋i} I(S)/|S|`.
///
/// Agrees with [`brute_force_shapley`](crate::game::brute_force_shapley) on
/// the reward game the interactions came from; that identity is an acceptance
/// criterion. Ascending-mask accumulation keeps results reproducible.
pub fn shapley_from_interactions(interactions: &GameTable) -> Result<AttributionVector> {
    if interactions.kind() != GameKind::Interaction {
        return Err(Error::KindMismatch {
            expected: "interaction",
            got: interactions.kind().name(),
        });
    }
    let n = interactions.n();
    let mut phi = vec![0.0; n];
    for mask in 1..interactions.values().len() {
        let size = (mask as u32).count_ones() as usize;
        let share = interactions.values()[mask] / size as f64;
        let mut rest = mask;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            phi[i] += share;
            rest &= rest - 1;
        }
    }
    Ok(AttributionVector { phi, provenance: Provenance::HarsanyiExact, inference_count: 0 })
}
