//! Reverse-mode gradients for soft-gated nets.
//!
//! The forward trace keeps each unit's linear part `g` and gate factor `F`
//! alongside its output, so the backward pass never re-derives them.
//! Gradients w.r.t. linear weights and the head are exact reverse-mode;
//! selector thresholds get the straight-through chain: the derivative of the
//! output w.r.t. a candidate's 0/1 selection state, times the sigmoid
//! surrogate. The children-count exponent inside the gate is held constant
//! within a step.

use crate::error::{Error, Result};
use crate::model::{soft_unit, ChildrenScope, HarsanyiMlp, Sample};
use crate::train::ste::ste_surrogate_grad;

/// Gradient accumulators shaped exactly like the model parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub blocks: Vec<Vec<UnitGrads>>,
    pub head: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct UnitGrads {
    pub tau: Vec<f64>,
    pub weight: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &HarsanyiMlp) -> Self {
        let blocks = model
            .blocks()
            .iter()
            .map(|block| {
                block
                    .iter()
                    .map(|u| UnitGrads {
                        tau: vec![0.0; u.tau.len()],
                        weight: vec![0.0; u.weight.len()],
                    })
                    .collect()
            })
            .collect();
        let head = model.head().iter().map(|row| vec![0.0; row.len()]).collect();
        Gradients { blocks, head }
    }

    fn scale(&mut self, s: f64) {
        for block in &mut self.blocks {
            for u in block {
                u.tau.iter_mut().for_each(|g| *g *= s);
                u.weight.iter_mut().for_each(|g| *g *= s);
            }
        }
        for row in &mut self.head {
            row.iter_mut().for_each(|g| *g *= s);
        }
    }

    /// Largest gradient magnitude; useful in dead-signal checks.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for block in &self.blocks {
            for u in block {
                for g in u.tau.iter().chain(&u.weight) {
                    m = m.max(g.abs());
                }
            }
        }
        for row in &self.head {
            for g in row {
                m = m.max(g.abs());
            }
        }
        m
    }
}

/// Forward intermediates of one training sample (soft mode, all players
/// present).
struct Trace {
    z0: Vec<f64>,
    z: Vec<f64>,
    g: Vec<f64>,
    f: Vec<f64>,
}

fn block_offset(model: &HarsanyiMlp, l: usize) -> usize {
    model.config().block_sizes[..l].iter().sum()
}

fn traced_forward(
    model: &HarsanyiMlp,
    children: &[Vec<Vec<u32>>],
    sample: &Sample,
) -> Result<Trace> {
    let cfg = model.config();
    if sample.columns() != cfg.inputs {
        return Err(Error::LengthMismatch { expected: cfg.inputs, got: sample.columns() });
    }
    let z0: Vec<f64> =
        sample.x.iter().zip(&sample.baseline).map(|(x, b)| x - b).collect();
    let total = cfg.total_units();
    let mut z = Vec::with_capacity(total);
    let mut g = Vec::with_capacity(total);
    let mut f = Vec::with_capacity(total);
    for (l, block) in model.blocks().iter().enumerate() {
        let start = block_offset(model, l);
        for (u, unit) in block.iter().enumerate() {
            let (zu, gu, fu) = {
                let pool: &[f64] = if l == 0 {
                    &z0
                } else {
                    match cfg.scope {
                        ChildrenScope::PreviousBlockOnly => {
                            &z[block_offset(model, l - 1)..start]
                        }
                        ChildrenScope::AllPreviousBlocks => &z[..start],
                    }
                };
                soft_unit(&children[l][u], &unit.weight, pool, cfg.gamma)
            };
            if !zu.is_finite() {
                return Err(Error::NonFiniteActivation { block: l, unit: u });
            }
            z.push(zu);
            g.push(gu);
            f.push(fu);
        }
    }
    Ok(Trace { z0, z, g, f })
}

/// Stable softmax cross-entropy: returns the loss and `∂loss/∂logits`.
fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + m - logits[label];
    let mut dv: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    dv[label] -= 1.0;
    (loss, dv)
}

/// Mean cross-entropy over a batch, forward only. Bit-identical to the loss
/// produced by [`loss_and_gradients`]; the finite-difference oracle perturbs
/// parameters and calls this.
pub fn batch_loss(model: &HarsanyiMlp, samples: &[Sample], labels: &[usize]) -> Result<f64> {
    assert_eq!(samples.len(), labels.len());
    if samples.is_empty() {
        return Err(Error::Schema("empty batch".into()));
    }
    let children = model.children();
    let mut total = 0.0;
    for (sample, &label) in samples.iter().zip(labels) {
        if label >= model.config().classes {
            return Err(Error::ClassOutOfRange { class: label, classes: model.config().classes });
        }
        let trace = traced_forward(model, &children, sample)?;
        let logits = head_logits(model, &trace.z);
        total += softmax_ce(&logits, label).0;
    }
    Ok(total / samples.len() as f64)
}

fn head_logits(model: &HarsanyiMlp, z: &[f64]) -> Vec<f64> {
    model
        .head()
        .iter()
        .map(|row| row.iter().zip(z).map(|(w, zu)| w * zu).sum())
        .collect()
}

/// Mean loss and mean parameter gradients over one minibatch.
///
/// Inactive units (output exactly zero) propagate nothing: an all-zero input
/// batch yields identically zero gradients. Perturbing a threshold without
/// crossing zero leaves the loss bit-identical; only the straight-through
/// surrogate sees such moves.
pub fn loss_and_gradients(
    model: &HarsanyiMlp,
    samples: &[Sample],
    labels: &[usize],
) -> Result<(f64, Gradients)> {
    assert_eq!(samples.len(), labels.len());
    if samples.is_empty() {
        return Err(Error::Schema("empty batch".into()));
    }
    let cfg = model.config();
    let children = model.children();
    let mut grads = Gradients::zeros_like(model);
    let mut total_loss = 0.0;
    let total_units = cfg.total_units();

    for (sample, &label) in samples.iter().zip(labels) {
        if label >= cfg.classes {
            return Err(Error::ClassOutOfRange { class: label, classes: cfg.classes });
        }
        let trace = traced_forward(model, &children, sample)?;
        let logits = head_logits(model, &trace.z);
        let (loss, dv) = softmax_ce(&logits, label);
        total_loss += loss;

        // Head gradients and the unit adjoints it induces.
        let mut dz = vec![0.0; total_units];
        for (c, row) in model.head().iter().enumerate() {
            let dvc = dv[c];
            let grow = &mut grads.head[c];
            for (u, w) in row.iter().enumerate() {
                grow[u] += dvc * trace.z[u];
                dz[u] += dvc * w;
            }
        }

        // Blocks in reverse; adjoints flow into earlier units through the
        // gate and the linear part.
        let mut dz0 = vec![0.0; cfg.inputs];
        for l in (0..model.blocks().len()).rev() {
            let start = block_offset(model, l);
            for (u, unit) in model.blocks()[l].iter().enumerate() {
                let flat = start + u;
                let zu = trace.z[flat];
                if zu == 0.0 {
                    continue;
                }
                let dh = dz[flat];
                if dh == 0.0 {
                    continue;
                }
                let g = trace.g[flat];
                let fac = trace.f[flat];
                let sel = &children[l][u];
                let k = sel.len() as f64;
                let (pool_lo, pool_is_z0) = match (l, cfg.scope) {
                    (0, _) => (0usize, true),
                    (_, ChildrenScope::PreviousBlockOnly) => (block_offset(model, l - 1), false),
                    (_, ChildrenScope::AllPreviousBlocks) => (0usize, false),
                };
                let ugrads = &mut grads.blocks[l][u];
                let mut next_child = 0usize;
                for j in 0..unit.tau.len() {
                    let selected = next_child < sel.len() && sel[next_child] as usize == j;
                    let zj = if pool_is_z0 { trace.z0[j] } else { trace.z[pool_lo + j] };
                    let tj = (cfg.gamma * zj.abs()).tanh();
                    let dsigma = if selected {
                        next_child += 1;
                        // Active unit: every selected child is nonzero.
                        ugrads.weight[j] += dh * fac * zj;
                        let dfac_dzj =
                            fac * (cfg.gamma / k) * (1.0 - tj * tj) / tj * zj.signum();
                        let dchild = dh * (fac * unit.weight[j] + g * dfac_dzj);
                        if pool_is_z0 {
                            dz0[j] += dchild;
                        } else {
                            dz[pool_lo + j] += dchild;
                        }
                        dh * (unit.weight[j] * zj * fac + g * fac * (tj - 1.0) / (k * tj))
                    } else {
                        dh * (unit.weight[j] * zj * fac + g * fac * (tj - 1.0) / k)
                    };
                    ugrads.tau[j] += dsigma * ste_surrogate_grad(unit.tau[j], cfg.beta);
                }
            }
        }
    }

    let inv = 1.0 / samples.len() as f64;
    grads.scale(inv);
    Ok((total_loss * inv, grads))
}

#[derive(Clone, Copy)]
enum Slot {
    Weight { block: usize, unit: usize, j: usize },
    Head { class: usize, unit: usize },
}

fn nudge(model: &mut HarsanyiMlp, slot: Slot, delta: f64) {
    match slot {
        Slot::Weight { block, unit, j } => model.blocks_mut()[block][unit].weight[j] += delta,
        Slot::Head { class, unit } => model.head_mut()[class][unit] += delta,
    }
}

/// Central-difference validation of the tape on every linear weight and head
/// weight (thresholds are excluded: their forward is piecewise constant).
/// Returns the worst relative disagreement, `|fd - analytic| / max(1, |analytic|)`.
pub fn finite_difference_check(
    model: &HarsanyiMlp,
    samples: &[Sample],
    labels: &[usize],
    step: f64,
) -> Result<f64> {
    let (_, grads) = loss_and_gradients(model, samples, labels)?;
    let mut slots = Vec::new();
    for (l, block) in model.blocks().iter().enumerate() {
        for (u, unit) in block.iter().enumerate() {
            for j in 0..unit.weight.len() {
                slots.push((Slot::Weight { block: l, unit: u, j }, grads.blocks[l][u].weight[j]));
            }
        }
    }
    for (c, row) in model.head().iter().enumerate() {
        for u in 0..row.len() {
            slots.push((Slot::Head { class: c, unit: u }, grads.head[c][u]));
        }
    }

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (slot, analytic) in slots {
        nudge(&mut probe, slot, step);
        let plus = batch_loss(&probe, samples, labels)?;
        nudge(&mut probe, slot, -2.0 * step);
        let minus = batch_loss(&probe, samples, labels)?;
        nudge(&mut probe, slot, step);
        let fd = (plus - minus) / (2.0 * step);
        let rel = (fd - analytic).abs() / analytic.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}
