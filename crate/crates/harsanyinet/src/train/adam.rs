//! Adam updates over the full parameter set, thresholds included.

use crate::model::HarsanyiMlp;
use crate::train::grad::Gradients;

/// Adam state: first and second moments shaped like the parameters, plus the
/// step counter driving bias correction. Update order is fixed (blocks in
/// order, thresholds before weights, head last) so runs are reproducible.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(model: &HarsanyiMlp, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    pub fn step(&mut self, model: &mut HarsanyiMlp, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let scale = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= self.lr * mh / (vh.sqrt() + self.eps);
        };

        for (l, block) in model.blocks_mut().iter_mut().enumerate() {
            for (u, unit) in block.iter_mut().enumerate() {
                let gm = &grads.blocks[l][u];
                let mm = &mut self.m.blocks[l][u];
                let vv = &mut self.v.blocks[l][u];
                for j in 0..unit.tau.len() {
                    scale(&mut unit.tau[j], &mut mm.tau[j], &mut vv.tau[j], gm.tau[j]);
                }
                for j in 0..unit.weight.len() {
                    scale(&mut unit.weight[j], &mut mm.weight[j], &mut vv.weight[j], gm.weight[j]);
                }
            }
        }
        for (c, row) in model.head_mut().iter_mut().enumerate() {
            for (u, p) in row.iter_mut().enumerate() {
                scale(p, &mut self.m.head[c][u], &mut self.v.head[c][u], grads.head[c][u]);
            }
        }
    }
}
