//! Cooperative-game foundation: coalitions as bitmasks, tabulated games,
//! value oracles, and attribution vectors.
//!
//! A game over players `N = {0, .., n-1}` is a map `V` from coalitions
//! `S ⊆ N` to reals with `V(∅) = 0`. Interaction tables hold the Möbius
//! transform `I` of such a `V` (see [`transform`]).

mod shapley;
mod spectrum;
mod text;
mod transform;

pub use shapley::brute_force_shapley;
pub(crate) use shapley::binomial;
pub use spectrum::{interaction_spectrum, SpectrumEntry};
pub use transform::{harsanyi_transform, inverse_harsanyi, shapley_from_interactions};

use std::fmt;

use crate::error::{Error, Result};

/// Hard cap on the number of players; coalitions are `u32` bitmasks.
pub const MAX_PLAYERS: usize = 24;

/// A coalition of players, stored as a bitmask over a ground set of `n` players.
///
/// Bit `i` set means player `i` is present. `n` is carried so that sets from
/// different games cannot be mixed silently.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlayerSet {
    bits: u32,
    n: u8,
}

impl PlayerSet {
    /// The empty coalition over `n` players. Panics if `n > MAX_PLAYERS`;
    /// fallible entry points validate `n` before constructing sets.
    pub fn empty(n: usize) -> Self {
        assert!(n <= MAX_PLAYERS, "player count {n} exceeds capacity {MAX_PLAYERS}");
        PlayerSet { bits: 0, n: n as u8 }
    }

    /// The grand coalition over `n` players.
    pub fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        s.bits = if n == 0 { 0 } else { (1u32 << n) - 1 };
        s
    }

    /// Coalition from a raw bitmask. Bits at positions `>= n` must be clear.
    pub fn from_bits(bits: u32, n: usize) -> Self {
        let mut s = Self::empty(n);
        assert_eq!(bits & !Self::full(n).bits, 0, "bitmask has players outside 0..{n}");
        s.bits = bits;
        s
    }

    /// Coalition containing the given players.
    pub fn from_members<I: IntoIterator<Item = usize>>(n: usize, members: I) -> Self {
        let mut s = Self::empty(n);
        for i in members {
            assert!(i < n, "player {i} outside ground set 0..{n}");
            s.bits |= 1 << i;
        }
        s
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Size of the ground set `N`, not of the coalition.
    pub fn ground_size(&self) -> usize {
        self.n as usize
    }

    /// Number of players in the coalition.
    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn is_full(&self) -> bool {
        self.bits == Self::full(self.n as usize).bits
    }

    pub fn contains(&self, player: usize) -> bool {
        player < self.n as usize && self.bits & (1 << player) != 0
    }

    #[must_use]
    pub fn insert(&self, player: usize) -> Self {
        assert!(player < self.n as usize);
        PlayerSet { bits: self.bits | (1 << player), n: self.n }
    }

    #[must_use]
    pub fn remove(&self, player: usize) -> Self {
        assert!(player < self.n as usize);
        PlayerSet { bits: self.bits & !(1 << player), n: self.n }
    }

    #[must_use]
    pub fn union(&self, other: Self) -> Self {
        assert_eq!(self.n, other.n);
        PlayerSet { bits: self.bits | other.bits, n: self.n }
    }

    #[must_use]
    pub fn intersect(&self, other: Self) -> Self {
        assert_eq!(self.n, other.n);
        PlayerSet { bits: self.bits & other.bits, n: self.n }
    }

    #[must_use]
    pub fn minus(&self, other: Self) -> Self {
        assert_eq!(self.n, other.n);
        PlayerSet { bits: self.bits & !other.bits, n: self.n }
    }

    #[must_use]
    pub fn complement(&self) -> Self {
        PlayerSet { bits: !self.bits & Self::full(self.n as usize).bits, n: self.n }
    }

    pub fn is_subset_of(&self, other: Self) -> bool {
        self.n == other.n && self.bits & !other.bits == 0
    }

    /// Members in ascending order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        let bits = self.bits;
        (0..self.n as usize).filter(move |i| bits & (1 << i) != 0)
    }

    /// Index of this coalition in a table of all `2^n` coalitions.
    pub fn index(&self) -> usize {
        self.bits as usize
    }
}

impl fmt::Display for PlayerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for PlayerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PlayerSet({self}, n={})", self.n)
    }
}

/// What a table's `2^n` entries mean.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GameKind {
    /// Entries are coalition values `V(S)`.
    Reward,
    /// Entries are interaction effects `I(S)` (the Möbius transform of some `V`).
    Interaction,
}

impl GameKind {
    pub fn name(&self) -> &'static str {
        match self {
            GameKind::Reward => "reward",
            GameKind::Interaction => "interaction",
        }
    }
}

/// A fully tabulated game: one value per coalition, indexed by bitmask.
#[derive(Clone, PartialEq, Debug)]
pub struct GameTable {
    n: usize,
    kind: GameKind,
    values: Vec<f64>,
}

impl GameTable {
    /// Builds a table from `2^n` values in bitmask order.
    ///
    /// The empty-coalition entry must be exactly 0: reward games are
    /// normalized (`V(∅) = 0`) and the Möbius transform of a normalized game
    /// always has `I(∅) = 0`.
    pub fn new(n: usize, kind: GameKind, values: Vec<f64>) -> Result<Self> {
        if n > MAX_PLAYERS {
            return Err(Error::Capacity(n));
        }
        let expected = 1usize << n;
        if values.len() != expected {
            return Err(Error::LengthMismatch { expected, got: values.len() });
        }
        if values[0] != 0.0 {
            return Err(Error::NotNormalized);
        }
        for (mask, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    coalition: PlayerSet::from_bits(mask as u32, n).to_string(),
                });
            }
        }
        Ok(GameTable { n, kind, values })
    }

    /// Tabulates an oracle by evaluating every coalition once.
    pub fn from_oracle<O: ValueOracle + ?Sized>(oracle: &O) -> Result<Self> {
        let n = oracle.players();
        if n > MAX_PLAYERS {
            return Err(Error::Capacity(n));
        }
        let values = (0..1usize << n)
            .map(|mask| oracle.value(PlayerSet::from_bits(mask as u32, n)))
            .collect();
        GameTable::new(n, GameKind::Reward, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> GameKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, coalition: PlayerSet) -> f64 {
        assert_eq!(coalition.ground_size(), self.n);
        self.values[coalition.index()]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn with_kind(mut self, kind: GameKind) -> Self {
        self.kind = kind;
        self
    }
}

/// Evaluation contract for a normalized game: `value(S)` returns
/// `V(S) = v(x_S) - v(x_∅)`, so `value(∅)` must be 0.
///
/// Returning a non-finite number is how implementations signal evaluation
/// failure; consumers such as [`brute_force_shapley`] turn that into a typed
/// error naming the coalition.
pub trait ValueOracle {
    /// Number of players `n`.
    fn players(&self) -> usize;

    /// `V(S)` for a coalition over exactly `players()` players.
    fn value(&self, coalition: PlayerSet) -> f64;
}

impl ValueOracle for GameTable {
    fn players(&self) -> usize {
        self.n
    }

    fn value(&self, coalition: PlayerSet) -> f64 {
        assert_eq!(self.kind, GameKind::Reward, "interaction tables are not value oracles");
        GameTable::value(self, coalition)
    }
}

/// Wraps an oracle and counts evaluations, so estimators can report the exact
/// number of inferences consumed.
pub struct CountingOracle<'a, O: ValueOracle + ?Sized> {
    inner: &'a O,
    calls: std::cell::Cell<u64>,
}

impl<'a, O: ValueOracle + ?Sized> CountingOracle<'a, O> {
    pub fn new(inner: &'a O) -> Self {
        CountingOracle { inner, calls: std::cell::Cell::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.get()
    }
}

impl<O: ValueOracle + ?Sized> ValueOracle for CountingOracle<'_, O> {
    fn players(&self) -> usize {
        self.inner.players()
    }

    fn value(&self, coalition: PlayerSet) -> f64 {
        self.calls.set(self.calls.get() + 1);
        self.inner.value(coalition)
    }
}

/// How an attribution vector was produced.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Provenance {
    /// Exhaustive enumeration of the weighted-marginal definition.
    BruteForce,
    /// Closed-form readout from Harsanyi units (or interaction tables).
    HarsanyiExact,
    /// A sampling estimator; approximate.
    Estimator,
}

/// Per-player attribution `φ`, tagged with its origin and the number of
/// model/oracle evaluations spent producing it.
#[derive(Clone, Debug)]
pub struct AttributionVector {
    pub phi: Vec<f64>,
    pub provenance: Provenance,
    pub inference_count: u64,
}

impl AttributionVector {
    pub fn players(&self) -> usize {
        self.phi.len()
    }

    /// Sum of all attributions; equals `V(N)` for exact methods.
    pub fn total(&self) -> f64 {
        self.phi.iter().sum()
    }
}
