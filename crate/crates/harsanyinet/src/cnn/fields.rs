//! Receptive fields of convolutional units over the player grid.
//!
//! The selector at a location is shared by all channels, so every channel of
//! a unit has the same receptive field; fields are stored once per location.

use crate::cnn::{GridSet, HarsanyiCnn};

/// Receptive field of every block location: the set of grid players whose
/// masking can change that location's output. Channel-independent by
/// construction.
#[derive(Clone, Debug)]
pub struct GridFields {
    blocks: Vec<Vec<GridSet>>,
}

impl GridFields {
    pub fn field(&self, block: usize, location: usize) -> &GridSet {
        &self.blocks[block][location]
    }

    pub fn blocks(&self) -> &[Vec<GridSet>] {
        &self.blocks
    }
}

/// Resolved children of one location: selected window offsets whose target
/// lies on the grid.
pub(crate) fn location_children(
    model: &HarsanyiCnn,
    block: usize,
    location: usize,
) -> Vec<usize> {
    let cfg = model.config();
    let (height, width, k) = (cfg.height, cfg.width, cfg.kernel);
    let r = (k / 2) as isize;
    let (h, w) = (location / width, location % width);
    let mut out = Vec::new();
    for (idx, &t) in model.blocks()[block].selectors[location].tau.iter().enumerate() {
        if t > 0.0 {
            let ty = h as isize + (idx / k) as isize - r;
            let tx = w as isize + (idx % k) as isize - r;
            if ty >= 0 && ty < height as isize && tx >= 0 && tx < width as isize {
                out.push(ty as usize * width + tx as usize);
            }
        }
    }
    out
}

/// Receptive fields for every block location. Block 1 fields are the selected
/// in-window grid locations; deeper fields are unions over children's fields.
/// An empty-selection location has an empty field (its unit is identically
/// zero).
pub fn grid_receptive_fields(model: &HarsanyiCnn) -> GridFields {
    let cfg = model.config();
    let hw = cfg.locations();
    let mut blocks: Vec<Vec<GridSet>> = Vec::with_capacity(cfg.blocks);
    for l in 0..cfg.blocks {
        let mut fields = Vec::with_capacity(hw);
        for loc in 0..hw {
            let mut field = GridSet::empty(hw);
            for child in location_children(model, l, loc) {
                if l == 0 {
                    field.insert(child);
                } else {
                    field.union_with(&blocks[l - 1][child]);
                }
            }
            fields.push(field);
        }
        blocks.push(fields);
    }
    GridFields { blocks }
}
