//! Exact Shapley attribution over grid players from one forward pass.
//!
//! Every unit is an interaction effect on its receptive field: the players in
//! the field are symmetric for that unit and everyone else is null, so the
//! unit's head contribution splits equally over the field. Summing the splits
//! over all units gives the Shapley value of the network's class logit game.

use crate::cnn::fields::grid_receptive_fields;
use crate::cnn::{GridSet, HarsanyiCnn};
use crate::error::{Error, Result};
use crate::game::{AttributionVector, PlayerSet, Provenance, ValueOracle, MAX_PLAYERS};
use crate::model::AndMode;

/// Exact Shapley values of every grid location for one class logit, from a
/// single forward pass (`inference_count = 1`).
pub fn exact_shapley_grid(
    model: &HarsanyiCnn,
    image: &[f64],
    class: usize,
    mode: AndMode,
) -> Result<AttributionVector> {
    let cfg = model.config();
    if class >= cfg.classes {
        return Err(Error::ClassOutOfRange { class, classes: cfg.classes });
    }
    let hw = cfg.locations();
    let acts = model.forward(image, &GridSet::full(hw), mode)?;
    let fields = grid_receptive_fields(model);
    let row = &model.head()[class];
    let mut phi = vec![0.0; hw];
    for l in 0..cfg.blocks {
        for c in 0..cfg.channels {
            for loc in 0..hw {
                let z = acts.unit(l, c, loc, hw);
                if z == 0.0 {
                    continue;
                }
                let field = fields.field(l, loc);
                let size = field.len();
                if size == 0 {
                    continue;
                }
                let share = row[model.flat_index(l, c, loc)] * z / size as f64;
                for member in field.members() {
                    phi[member] += share;
                }
            }
        }
    }
    Ok(AttributionVector { phi, provenance: Provenance::HarsanyiExact, inference_count: 1 })
}

/// Shapley values of the sub-game restricted to `selected` locations, with
/// everyone else held present. Each unit's contribution splits over the part
/// of its field inside `selected`; entries outside `selected` are zero.
/// Still one forward pass.
pub fn restricted_shapley_grid(
    model: &HarsanyiCnn,
    image: &[f64],
    class: usize,
    mode: AndMode,
    selected: &GridSet,
) -> Result<AttributionVector> {
    let cfg = model.config();
    if class >= cfg.classes {
        return Err(Error::ClassOutOfRange { class, classes: cfg.classes });
    }
    let hw = cfg.locations();
    if selected.ground_size() != hw {
        return Err(Error::GroundMismatch { expected: hw, got: selected.ground_size() });
    }
    let acts = model.forward(image, &GridSet::full(hw), mode)?;
    let fields = grid_receptive_fields(model);
    let row = &model.head()[class];
    let mut phi = vec![0.0; hw];
    for l in 0..cfg.blocks {
        for c in 0..cfg.channels {
            for loc in 0..hw {
                let z = acts.unit(l, c, loc, hw);
                if z == 0.0 {
                    continue;
                }
                let inside = fields.field(l, loc).intersect(selected);
                let size = inside.len();
                if size == 0 {
                    continue;
                }
                let share = row[model.flat_index(l, c, loc)] * z / size as f64;
                for member in inside.members() {
                    phi[member] += share;
                }
            }
        }
    }
    Ok(AttributionVector { phi, provenance: Provenance::HarsanyiExact, inference_count: 1 })
}

/// The class-logit game a convolutional net induces on its grid: players are
/// `z0` locations, the value of a coalition is the logit with everyone else
/// masked. The stem runs once at construction. Only grids small enough for
/// coalition enumeration fit the tabular oracle interface.
pub struct GridGame<'a> {
    model: &'a HarsanyiCnn,
    z0: Vec<f64>,
    class: usize,
    mode: AndMode,
}

impl<'a> GridGame<'a> {
    pub fn new(
        model: &'a HarsanyiCnn,
        image: &[f64],
        class: usize,
        mode: AndMode,
    ) -> Result<Self> {
        let cfg = model.config();
        let hw = cfg.locations();
        if hw > MAX_PLAYERS {
            return Err(Error::Capacity(hw));
        }
        if class >= cfg.classes {
            return Err(Error::ClassOutOfRange { class, classes: cfg.classes });
        }
        Ok(GridGame { model, z0: model.stem_forward(image)?, class, mode })
    }
}

impl ValueOracle for GridGame<'_> {
    fn players(&self) -> usize {
        self.model.config().locations()
    }

    fn value(&self, coalition: PlayerSet) -> f64 {
        let hw = self.model.config().locations();
        let mut present = GridSet::empty(hw);
        for i in coalition.members() {
            present.insert(i);
        }
        match self.model.forward_from_z0(self.z0.clone(), &present, self.mode) {
            Ok(acts) => self.model.logits(&acts)[self.class],
            Err(_) => f64::NAN,
        }
    }
}

/// The restricted game over a chosen subset of grid locations: players are
/// the members of `selected` (in ascending location order), all other
/// locations stay present, and values are recentered so the empty coalition
/// is worth exactly zero.
pub struct RestrictedGridGame<'a> {
    model: &'a HarsanyiCnn,
    z0: Vec<f64>,
    locations: Vec<usize>,
    base: f64,
    class: usize,
    mode: AndMode,
}

impl<'a> RestrictedGridGame<'a> {
    pub fn new(
        model: &'a HarsanyiCnn,
        image: &[f64],
        class: usize,
        mode: AndMode,
        selected: &GridSet,
    ) -> Result<Self> {
        let cfg = model.config();
        let hw = cfg.locations();
        if selected.ground_size() != hw {
            return Err(Error::GroundMismatch { expected: hw, got: selected.ground_size() });
        }
        let locations: Vec<usize> = selected.members().collect();
        if locations.len() > MAX_PLAYERS {
            return Err(Error::Capacity(locations.len()));
        }
        if class >= cfg.classes {
            return Err(Error::ClassOutOfRange { class, classes: cfg.classes });
        }
        let z0 = model.stem_forward(image)?;
        let mut game =
            RestrictedGridGame { model, z0, locations, base: 0.0, class, mode };
        let empty = PlayerSet::empty(game.locations.len());
        let base = game.raw_value(empty)?;
        game.base = base;
        Ok(game)
    }

    fn raw_value(&self, coalition: PlayerSet) -> Result<f64> {
        let hw = self.model.config().locations();
        let mut present = GridSet::full(hw);
        for (i, &loc) in self.locations.iter().enumerate() {
            if !coalition.contains(i) {
                present.remove(loc);
            }
        }
        let acts = self.model.forward_from_z0(self.z0.clone(), &present, self.mode)?;
        Ok(self.model.logits(&acts)[self.class])
    }
}

impl ValueOracle for RestrictedGridGame<'_> {
    fn players(&self) -> usize {
        self.locations.len()
    }

    fn value(&self, coalition: PlayerSet) -> f64 {
        match self.raw_value(coalition) {
            Ok(v) => v - self.base,
            Err(_) => f64::NAN,
        }
    }
}
