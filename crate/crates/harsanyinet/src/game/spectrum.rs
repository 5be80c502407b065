//! Ranked interaction spectra: which coalitions carry a game's value.

use crate::error::Result;
use crate::game::{harsanyi_transform, GameKind, GameTable, PlayerSet};

/// One coalition's interaction effect. `interaction` is signed; entries are
/// ranked by magnitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumEntry {
    pub coalition: PlayerSet,
    pub interaction: f64,
}

/// All nonempty coalitions sorted by `|I(S)|` descending (ties broken by
/// ascending bitmask, so the order is total and reproducible).
///
/// Accepts either table kind: reward games are transformed first. The signed
/// entries sum to `V(N)`, since `V(N) = Σ_S I(S)`.
pub fn interaction_spectrum(game: &GameTable) -> Result<Vec<SpectrumEntry>> {
    let interactions = match game.kind() {
        GameKind::Reward => harsanyi_transform(game)?,
        GameKind::Interaction => game.clone(),
    };
    let n = interactions.n();
    let mut entries: Vec<SpectrumEntry> = (1..interactions.values().len())
        .map(|mask| SpectrumEntry {
            coalition: PlayerSet::from_bits(mask as u32, n),
            interaction: interactions.values()[mask],
        })
        .collect();
    entries.sort_by(|a, b| {
        b.interaction
            .abs()
            .partial_cmp(&a.interaction.abs())
            .expect("table values are finite")
            .then(a.coalition.index().cmp(&b.coalition.index()))
    });
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spectrum_ranks_by_magnitude() {
        let mut inter = vec![0.0; 8];
        inter[0b001] = -5.0;
        inter[0b011] = 2.0;
        inter[0b111] = 3.0;
        let table = GameTable::new(3, GameKind::Interaction, inter).unwrap();
        let spectrum = interaction_spectrum(&table).unwrap();
        assert_eq!(spectrum[0].coalition.index(), 0b001);
        assert_eq!(spectrum[0].interaction, -5.0);
        assert_eq!(spectrum[1].coalition.index(), 0b111);
        assert_eq!(spectrum[2].coalition.index(), 0b011);
        // Zero entries follow, tie-broken by mask.
        assert_eq!(spectrum[3].coalition.index(), 0b010);
        assert_eq!(spectrum.len(), 7);
    }

    #[test]
    fn signed_entries_sum_to_grand_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [2, 5, 8] {
            let mut values: Vec<f64> =
                (0..1usize << n).map(|_| rng.random_range(-1.0..1.0)).collect();
            values[0] = 0.0;
            let game = GameTable::new(n, GameKind::Reward, values).unwrap();
            let spectrum = interaction_spectrum(&game).unwrap();
            let total: f64 = spectrum.iter().map(|e| e.interaction).sum();
            let full = game.value(PlayerSet::full(n));
            assert!(
                (total - full).abs() <= 1e-9 * (1.0 + full.abs()),
                "n={n}: {total} vs {full}"
            );
        }
    }
}
