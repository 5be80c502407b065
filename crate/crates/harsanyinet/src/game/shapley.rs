//! Brute-force Shapley values from the weighted-marginal definition.

use crate::error::{Error, Result};
use crate::game::{AttributionVector, PlayerSet, Provenance, ValueOracle, MAX_PLAYERS};

/// Exact binomial coefficient; n <= 24 keeps every value well inside `u64`.
pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Shapley weight for a coalition of size `s` among `n` players:
/// `s!(n-s-1)!/n! = 1/(n * C(n-1, s))`.
fn marginal_weight(n: usize, s: usize) -> f64 {
    1.0 / (n as f64 * binomial(n - 1, s) as f64)
}

/// Computes `φ(i) = Σ_{S ⊆ N\{i}} |S|!(n-|S|-1)!/n! [V(S∪{i}) - V(S)]` for
/// every player by enumerating all `2^n` coalitions.
///
/// Exponential in `n`; intended as ground truth at test scale. The oracle is
/// evaluated exactly once per coalition (`inference_count = 2^n`). Summation
/// order is fixed (ascending bitmask), so results are reproducible bit for
/// bit. A non-finite oracle value is reported with the offending coalition.
pub fn brute_force_shapley<O: ValueOracle + ?Sized>(oracle: &O) -> Result<AttributionVector> {
    let n = oracle.players();
    if n > MAX_PLAYERS {
        return Err(Error::Capacity(n));
    }
    let size = 1usize << n;
    let mut table = Vec::with_capacity(size);
    for mask in 0..size {
        let coalition = PlayerSet::from_bits(mask as u32, n);
        let v = oracle.value(coalition);
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { coalition: coalition.to_string() });
        }
        table.push(v);
    }

    let weights: Vec<f64> = (0..n).map(|s| marginal_weight(n, s)).collect();
    let mut phi = vec![0.0; n];
    for (i, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in 0..size {
            if mask & bit == 0 {
                let s = (mask as u32).count_ones() as usize;
                acc += weights[s] * (table[mask | bit] - table[mask]);
            }
        }
        *slot = acc;
    }

    Ok(AttributionVector {
        phi,
        provenance: Provenance::BruteForce,
        inference_count: size as u64,
    })
}
