//! Forward evaluation of convolutional HarsanyiNets.
//!
//! Every tensor is nonnegative past the stem ReLU, so a location's channel
//! sum is zero exactly when the whole channel vector is zero. The per-location
//! gate leans on that: one decision per location, applied to all channels, is
//! what keeps interaction effects coherent across the channel dimension.

use crate::cnn::{GridSet, HarsanyiCnn};
use crate::error::{Error, Result};
use crate::model::AndMode;

/// Gate factors are multiplied in linear space up to this many children, and
/// accumulated as log-sums beyond it to avoid underflow. Matches the tabular
/// forward pass so the two paths agree bit for bit where they coincide.
const LOG_SPACE_THRESHOLD: usize = 16;

/// All activations of one masked forward pass. Tensors are flattened
/// channel-major: index `c * H·W + location`.
#[derive(Clone, Debug)]
pub struct CnnActivations {
    pub(crate) z0: Vec<f64>,
    blocks: Vec<Vec<f64>>,
    mode: AndMode,
}

impl CnnActivations {
    /// The masked stem output the game is played on.
    pub fn z0(&self) -> &[f64] {
        &self.z0
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn unit(&self, block: usize, channel: usize, location: usize, hw: usize) -> f64 {
        self.blocks[block][channel * hw + location]
    }

    pub fn mode(&self) -> AndMode {
        self.mode
    }

    /// Unit outputs in flat order (block-major, then channel, then location),
    /// matching head rows.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flatten().copied()
    }
}

impl HarsanyiCnn {
    /// Runs the fixed stem: same-padded convolution over the single-channel
    /// image, non-overlapping max-pool, then ReLU. The stem is outside the
    /// game; its output grid is where players live.
    pub fn stem_forward(&self, image: &[f64]) -> Result<Vec<f64>> {
        let cfg = self.config();
        let (ih, iw) = (cfg.image_height(), cfg.image_width());
        if image.len() != ih * iw {
            return Err(Error::LengthMismatch { expected: ih * iw, got: image.len() });
        }
        if image.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("image contains non-finite values".into()));
        }
        let (c, s, p) = (cfg.channels, cfg.stem_kernel, cfg.pool);
        let r = (s / 2) as isize;
        let mut conv = vec![0.0; c * ih * iw];
        for ch in 0..c {
            let wbase = ch * s * s;
            for y in 0..ih {
                for x in 0..iw {
                    let mut acc = self.stem().bias[ch];
                    for ky in 0..s {
                        for kx in 0..s {
                            let iy = y as isize + ky as isize - r;
                            let ix = x as isize + kx as isize - r;
                            if iy >= 0 && iy < ih as isize && ix >= 0 && ix < iw as isize {
                                acc += self.stem().weight[wbase + ky * s + kx]
                                    * image[iy as usize * iw + ix as usize];
                            }
                        }
                    }
                    conv[ch * ih * iw + y * iw + x] = acc;
                }
            }
        }

        let (h, w) = (cfg.height, cfg.width);
        let mut z0 = vec![0.0; c * h * w];
        for ch in 0..c {
            for gy in 0..h {
                for gx in 0..w {
                    let mut best = f64::NEG_INFINITY;
                    for py in 0..p {
                        for px in 0..p {
                            let v = conv[ch * ih * iw + (gy * p + py) * iw + (gx * p + px)];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    z0[ch * h * w + gy * w + gx] = if best > 0.0 { best } else { 0.0 };
                }
            }
        }
        Ok(z0)
    }

    /// Full forward pass: stem, mask the player grid, then the gated blocks.
    pub fn forward(
        &self,
        image: &[f64],
        present: &GridSet,
        mode: AndMode,
    ) -> Result<CnnActivations> {
        let z0 = self.stem_forward(image)?;
        self.forward_from_z0(z0, present, mode)
    }

    /// Forward pass from a precomputed (unmasked) stem output; coalition
    /// sweeps run the stem once and call this per mask.
    pub fn forward_from_z0(
        &self,
        mut z0: Vec<f64>,
        present: &GridSet,
        mode: AndMode,
    ) -> Result<CnnActivations> {
        let cfg = self.config();
        let hw = cfg.locations();
        if present.ground_size() != hw {
            return Err(Error::GroundMismatch { expected: hw, got: present.ground_size() });
        }
        if z0.len() != cfg.channels * hw {
            return Err(Error::LengthMismatch { expected: cfg.channels * hw, got: z0.len() });
        }
        for loc in 0..hw {
            if !present.contains(loc) {
                for ch in 0..cfg.channels {
                    z0[ch * hw + loc] = 0.0;
                }
            }
        }

        let (height, width, c, k) = (cfg.height, cfg.width, cfg.channels, cfg.kernel);
        let kk = k * k;
        let r = (k / 2) as isize;
        let mut blocks: Vec<Vec<f64>> = Vec::with_capacity(self.blocks().len());
        let mut children: Vec<(usize, usize)> = Vec::with_capacity(kk);
        let mut means: Vec<f64> = Vec::with_capacity(kk);
        for (l, block) in self.blocks().iter().enumerate() {
            let prev: &[f64] = if l == 0 { &z0 } else { &blocks[l - 1] };
            let mut out = vec![0.0; c * hw];
            for h in 0..height {
                for w in 0..width {
                    let loc = h * width + w;
                    // Window offsets with positive threshold whose target is
                    // on the grid; out-of-bounds candidates are structurally
                    // absent, not zero-padded.
                    children.clear();
                    for (idx, &t) in block.selectors[loc].tau.iter().enumerate() {
                        if t > 0.0 {
                            let ty = h as isize + (idx / k) as isize - r;
                            let tx = w as isize + (idx % k) as isize - r;
                            if ty >= 0 && ty < height as isize && tx >= 0 && tx < width as isize {
                                children.push((idx, ty as usize * width + tx as usize));
                            }
                        }
                    }
                    let kc = children.len();
                    if kc == 0 {
                        continue;
                    }

                    // One gate per location, shared by all channels. Any
                    // child whose channel vector is fully zero kills the
                    // whole location exactly, in both modes.
                    let factor = match mode {
                        AndMode::Hard => {
                            let dead = children.iter().any(|&(_, t)| {
                                (0..c).all(|ci| prev[ci * hw + t] == 0.0)
                            });
                            if dead {
                                continue;
                            }
                            1.0
                        }
                        AndMode::Soft => {
                            means.clear();
                            let mut dead = false;
                            for &(_, t) in &children {
                                let mut sum = 0.0;
                                for ci in 0..c {
                                    sum += prev[ci * hw + t];
                                }
                                let mean = sum / c as f64;
                                if mean == 0.0 {
                                    dead = true;
                                    break;
                                }
                                means.push(mean);
                            }
                            if dead {
                                continue;
                            }
                            if kc <= LOG_SPACE_THRESHOLD {
                                let mut prod = 1.0;
                                for &m in &means {
                                    prod *= (cfg.gamma * m).tanh();
                                }
                                prod.powf(1.0 / kc as f64)
                            } else {
                                let mut log_sum = 0.0;
                                for &m in &means {
                                    log_sum += (cfg.gamma * m).tanh().ln();
                                }
                                (log_sum / kc as f64).exp()
                            }
                        }
                    };

                    for co in 0..c {
                        let wbase = co * c * kk;
                        let mut g = 0.0;
                        for &(idx, t) in &children {
                            for ci in 0..c {
                                g += block.weight[wbase + ci * kk + idx] * prev[ci * hw + t];
                            }
                        }
                        let z = g * factor;
                        out[co * hw + loc] = if z > 0.0 { z } else { 0.0 };
                    }
                }
            }
            if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { block: l, unit: bad });
            }
            blocks.push(out);
        }
        Ok(CnnActivations { z0, blocks, mode })
    }

    /// Per-class logits: the head's weighted sum over every unit. The
    /// all-masked grid yields exactly zero in every class.
    pub fn logits(&self, activations: &CnnActivations) -> Vec<f64> {
        self.head()
            .iter()
            .map(|row| row.iter().zip(activations.flat()).map(|(w, z)| w * z).sum())
            .collect()
    }

    pub fn output(&self, image: &[f64], present: &GridSet, mode: AndMode) -> Result<Vec<f64>> {
        let acts = self.forward(image, present, mode)?;
        Ok(self.logits(&acts))
    }
}

/// Counts channel-coherence violations: locations where some child of the
/// gate is fully zero (so the gate must have failed) yet some channel of the
/// output is nonzero. Recomputes child liveness from the activations rather
/// than trusting the forward pass internals. Always zero for a correct model.
pub fn channel_coherence_violations(
    model: &HarsanyiCnn,
    image: &[f64],
    present: &GridSet,
    mode: AndMode,
) -> Result<usize> {
    let cfg = model.config();
    let acts = model.forward(image, present, mode)?;
    let (height, width, c, k) = (cfg.height, cfg.width, cfg.channels, cfg.kernel);
    let hw = cfg.locations();
    let r = (k / 2) as isize;
    let mut violations = 0;
    for (l, block) in model.blocks().iter().enumerate() {
        let prev: &[f64] = if l == 0 { acts.z0() } else { &acts.blocks()[l - 1] };
        for h in 0..height {
            for w in 0..width {
                let loc = h * width + w;
                let mut live_children = 0usize;
                let mut dead_child = false;
                for (idx, &t) in block.selectors[loc].tau.iter().enumerate() {
                    if t > 0.0 {
                        let ty = h as isize + (idx / k) as isize - r;
                        let tx = w as isize + (idx % k) as isize - r;
                        if ty >= 0 && ty < height as isize && tx >= 0 && tx < width as isize {
                            live_children += 1;
                            let t = ty as usize * width + tx as usize;
                            if (0..c).all(|ci| prev[ci * hw + t] == 0.0) {
                                dead_child = true;
                            }
                        }
                    }
                }
                let gate_dead = live_children == 0 || dead_child;
                let any_output = (0..c).any(|ci| acts.blocks()[l][ci * hw + loc] != 0.0);
                if gate_dead && any_output {
                    violations += 1;
                }
            }
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::testutil::{random_image, small_config};
    use crate::cnn::{init_cnn, CnnConfig, ConvBlock, HarsanyiCnn, LocationSelector, Stem};

    fn rebuild_with_stem(model: &HarsanyiCnn, stem: Stem) -> HarsanyiCnn {
        HarsanyiCnn::from_parts(
            model.config().clone(),
            stem,
            model.blocks().to_vec(),
            model.head().to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn zero_image_and_zero_bias_give_zero_grid() {
        let cfg = small_config(4, 4, 3, 2);
        let model = init_cnn(cfg.clone(), 0.01, 1).unwrap();
        let zero_bias = Stem { weight: model.stem().weight.clone(), bias: vec![0.0; 3] };
        let model = rebuild_with_stem(&model, zero_bias);
        let z0 = model.stem_forward(&[0.0; 16]).unwrap();
        assert_eq!(z0, vec![0.0; 3 * 16]);
        let acts = model.forward(&[0.0; 16], &GridSet::full(16), AndMode::Hard).unwrap();
        assert_eq!(model.logits(&acts), vec![0.0; 3]);
    }

    #[test]
    fn identity_stem_reproduces_relu_of_the_image() {
        let mut cfg = small_config(3, 4, 1, 1);
        cfg.stem_kernel = 1;
        let model = init_cnn(cfg.clone(), 0.01, 2).unwrap();
        let identity = Stem { weight: vec![1.0], bias: vec![0.0] };
        let model = rebuild_with_stem(&model, identity);
        let image = vec![0.5, -1.0, 2.0, 0.0, -0.25, 3.5, 1.25, -2.0, 0.75, 4.0, -0.5, 0.125];
        let z0 = model.stem_forward(&image).unwrap();
        let expect: Vec<f64> = image.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        assert_eq!(z0, expect);
    }

    #[test]
    fn stem_pools_the_window_maximum() {
        let mut cfg = small_config(1, 1, 1, 1);
        cfg.stem_kernel = 1;
        cfg.pool = 2;
        let model = init_cnn(cfg, 0.01, 3).unwrap();
        let model = rebuild_with_stem(&model, Stem { weight: vec![1.0], bias: vec![0.0] });
        let z0 = model.stem_forward(&[0.5, 2.0, -1.0, 1.5]).unwrap();
        assert_eq!(z0, vec![2.0]);
        // An all-negative window pools to a negative maximum, then clamps.
        let z0 = model.stem_forward(&[-0.5, -2.0, -1.0, -1.5]).unwrap();
        assert_eq!(z0, vec![0.0]);
    }

    #[test]
    fn masked_location_zeroes_every_channel_of_its_parent() {
        // One block; location (1,1) selects only window offset (0,0), i.e.
        // grid location (0,0). Masking player 0 must zero all channels at
        // (1,1) in both modes, and the unmasked run must have had signal.
        let mut cfg = small_config(3, 3, 2, 1);
        cfg.stem_kernel = 1;
        let base = init_cnn(cfg.clone(), 0.01, 4).unwrap();
        let stem = Stem { weight: vec![1.0, 1.0], bias: vec![0.0, 0.0] };
        let mut selectors = vec![LocationSelector { tau: vec![-1.0; 9] }; 9];
        selectors[4].tau[0] = 1.0;
        let blocks = vec![ConvBlock { selectors, weight: vec![0.5; 2 * 2 * 9] }];
        let model =
            HarsanyiCnn::from_parts(cfg.clone(), stem, blocks, base.head().to_vec()).unwrap();
        let image: Vec<f64> = (1..=9).map(|i| i as f64 * 0.25).collect();
        for mode in [AndMode::Hard, AndMode::Soft] {
            let full = model.forward(&image, &GridSet::full(9), mode).unwrap();
            assert!((0..2).all(|ch| full.unit(0, ch, 4, 9) > 0.0), "no signal to lose");
            let mut masked_set = GridSet::full(9);
            masked_set.remove(0);
            let masked = model.forward(&image, &masked_set, mode).unwrap();
            for ch in 0..2 {
                assert_eq!(masked.unit(0, ch, 4, 9), 0.0, "mode {mode:?}");
            }
        }
    }

    #[test]
    fn full_selection_on_positive_input_matches_plain_convolution() {
        // All thresholds positive, all activations positive: the gate passes
        // everywhere and hard mode must equal an independently computed
        // same-padded convolution with ReLU.
        let mut cfg = small_config(5, 4, 2, 1);
        cfg.stem_kernel = 1;
        let base = init_cnn(cfg.clone(), 0.01, 6).unwrap();
        let stem = Stem { weight: vec![1.0, 1.0], bias: vec![0.0, 0.0] };
        let selectors = vec![LocationSelector { tau: vec![1.0; 9] }; 20];
        let weight: Vec<f64> = base.blocks()[0].weight.clone();
        let blocks = vec![ConvBlock { selectors, weight: weight.clone() }];
        let model =
            HarsanyiCnn::from_parts(cfg.clone(), stem, blocks, base.head().to_vec()).unwrap();
        let image: Vec<f64> = (0..20).map(|i| 0.3 + 0.1 * i as f64).collect();
        let acts = model.forward(&image, &GridSet::full(20), AndMode::Hard).unwrap();

        // Independent convolution: both channels of z0 equal the image.
        let (h, w, c, k) = (5usize, 4usize, 2usize, 3usize);
        for co in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = y as isize + ky as isize - 1;
                                let ix = x as isize + kx as isize - 1;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    acc += weight[co * c * 9 + ci * 9 + ky * 3 + kx]
                                        * image[iy as usize * w + ix as usize];
                                }
                            }
                        }
                    }
                    let expect = if acc > 0.0 { acc } else { 0.0 };
                    let got = acts.unit(0, co, y * w + x, 20);
                    assert!(
                        (got - expect).abs() <= 1e-12 * (1.0 + expect.abs()),
                        "channel {co} at ({y},{x}): {got} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn empty_selector_location_is_always_zero() {
        let cfg = small_config(3, 3, 2, 1);
        let base = init_cnn(cfg.clone(), 0.01, 7).unwrap();
        let mut selectors = base.blocks()[0].selectors.clone();
        selectors[0] = LocationSelector { tau: vec![-0.5; 9] };
        let blocks = vec![ConvBlock { selectors, weight: base.blocks()[0].weight.clone() }];
        let model = HarsanyiCnn::from_parts(
            cfg,
            base.stem().clone(),
            blocks,
            base.head().to_vec(),
        )
        .unwrap();
        let image = random_image(3, 3, 8);
        for mode in [AndMode::Hard, AndMode::Soft] {
            let acts = model.forward(&image, &GridSet::full(9), mode).unwrap();
            for ch in 0..2 {
                assert_eq!(acts.unit(0, ch, 0, 9), 0.0);
            }
        }
    }

    #[test]
    fn all_masked_grid_gives_zero_logits_exactly() {
        let cfg = small_config(4, 4, 3, 2);
        let model = init_cnn(cfg, 0.01, 9).unwrap();
        let image = random_image(4, 4, 10);
        for mode in [AndMode::Hard, AndMode::Soft] {
            let v = model.output(&image, &GridSet::empty(16), mode).unwrap();
            assert_eq!(v, vec![0.0; 3]);
        }
    }

    #[test]
    fn soft_and_hard_agree_on_which_locations_are_dead() {
        // The gate's exact-zero contract is mode-independent: a location is
        // zero across channels in soft mode iff it is in hard mode.
        let cfg = small_config(5, 5, 3, 2);
        let model = init_cnn(cfg, 0.01, 11).unwrap();
        let image = random_image(5, 5, 12);
        let mut present = GridSet::full(25);
        present.remove(3);
        present.remove(12);
        present.remove(17);
        let hard = model.forward(&image, &present, AndMode::Hard).unwrap();
        let soft = model.forward(&image, &present, AndMode::Soft).unwrap();
        for l in 0..2 {
            for loc in 0..25 {
                let hard_dead = (0..3).all(|c| hard.unit(l, c, loc, 25) == 0.0);
                let soft_dead = (0..3).all(|c| soft.unit(l, c, loc, 25) == 0.0);
                // A live gate can still clamp every channel if all linear
                // parts are negative, and g*factor can change sign of none;
                // the clamp pattern is identical because factor > 0.
                assert_eq!(hard_dead, soft_dead, "block {l} location {loc}");
            }
        }
    }

    #[test]
    fn coherence_probe_is_clean_on_random_models() {
        use rand::Rng;
        let mut rng = crate::rng::stream(99, crate::rng::STREAM_DATA);
        for seed in 0..5 {
            let cfg = small_config(5, 5, 3, 2);
            let model = init_cnn(cfg, 0.01, 100 + seed).unwrap();
            let image = random_image(5, 5, 200 + seed);
            for mask_trial in 0..10 {
                let mut present = GridSet::full(25);
                for loc in 0..25 {
                    if rng.random_bool(0.5) {
                        present.remove(loc);
                    }
                }
                for mode in [AndMode::Hard, AndMode::Soft] {
                    let v = channel_coherence_violations(&model, &image, &present, mode).unwrap();
                    assert_eq!(v, 0, "seed {seed} mask {mask_trial} mode {mode:?}");
                }
            }
        }
    }

    #[test]
    fn shape_errors_are_typed() {
        let cfg = small_config(4, 4, 2, 1);
        let model = init_cnn(cfg, 0.01, 13).unwrap();
        assert!(matches!(
            model.stem_forward(&[0.0; 7]),
            Err(Error::LengthMismatch { expected: 16, got: 7 })
        ));
        assert!(matches!(
            model.forward(&[0.0; 16], &GridSet::full(9), AndMode::Hard),
            Err(Error::GroundMismatch { expected: 16, got: 9 })
        ));
        assert!(matches!(
            model.stem_forward(&[f64::NAN; 16]),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn pooled_stem_matches_a_direct_recomputation() {
        // 4x4 image, cross-shaped 3x3 stem kernel, pool 2: recompute
        // conv(y,x) = 0.25 + center + (up+down+left+right)/2 directly from
        // the neighbor formula and pool each 2x2 window by hand.
        let cfg = CnnConfig {
            height: 2,
            width: 2,
            channels: 1,
            stem_kernel: 3,
            pool: 2,
            blocks: 1,
            kernel: 3,
            classes: 2,
            beta: 1000.0,
            gamma: 1.0,
        };
        let base = init_cnn(cfg.clone(), 0.01, 14).unwrap();
        let stem = Stem {
            weight: vec![0.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 0.0],
            bias: vec![0.25],
        };
        let model = rebuild_with_stem(&base, stem);
        let image: Vec<f64> = (1..=16).map(|i| i as f64 / 8.0).collect();
        let z0 = model.stem_forward(&image).unwrap();
        let conv = |y: isize, x: isize| {
            let at = |yy: isize, xx: isize| {
                if (0..4).contains(&yy) && (0..4).contains(&xx) {
                    (yy * 4 + xx + 1) as f64 / 8.0
                } else {
                    0.0
                }
            };
            0.25 + at(y, x) + 0.5 * (at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1))
        };
        assert_eq!(z0.len(), 4);
        for gy in 0..2isize {
            for gx in 0..2isize {
                let pooled = conv(2 * gy, 2 * gx)
                    .max(conv(2 * gy, 2 * gx + 1))
                    .max(conv(2 * gy + 1, 2 * gx))
                    .max(conv(2 * gy + 1, 2 * gx + 1));
                let expect = pooled.max(0.0);
                let got = z0[(gy * 2 + gx) as usize];
                assert!((got - expect).abs() < 1e-12, "pool window ({gy},{gx}): {got} vs {expect}");
            }
        }
    }
}
