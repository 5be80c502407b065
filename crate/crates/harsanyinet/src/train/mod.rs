//! End-to-end training: straight-through selector gradients, Adam, and a
//! metrics log suitable for CSV export.
//!
//! Training always runs the soft gate; the hard gate is piecewise constant
//! and reserved for inference and attribution. Minibatch order comes from a
//! dedicated shuffle stream so runs with the same seed are byte-identical.

mod adam;
mod grad;
mod init;
mod ste;

pub use adam::Adam;
pub use grad::{batch_loss, finite_difference_check, loss_and_gradients, Gradients, UnitGrads};
pub use init::{init_mlp, InitScheme};
pub(crate) use init::{draw_tau, draw_weights};
pub use ste::{ste_mask, ste_surrogate_grad};

use std::io::Write as IoWrite;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::game::PlayerSet;
use crate::model::{AndMode, HarsanyiMlp, Sample};
use crate::rng::{stream, STREAM_SHUFFLE};

/// Optimization settings; the gate and selector sharpness live on the model.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 50, batch_size: 64, lr: 1e-3, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// Per-epoch history plus the run configuration it came from. Serializes to
/// CSV with the configuration echoed as leading `# key=value` lines.
#[derive(Clone, Debug, Default)]
pub struct MetricsLog {
    pub config: Vec<(String, String)>,
    pub rows: Vec<EpochMetrics>,
}

impl MetricsLog {
    pub fn write_csv<W: IoWrite>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.config {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "epoch,loss,train_acc,val_acc")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.6e},{:.4},{:.4}",
                r.epoch, r.loss, r.train_acc, r.val_acc
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

/// Fraction of samples whose argmax logit matches the label.
pub fn accuracy(
    model: &HarsanyiMlp,
    samples: &[Sample],
    labels: &[usize],
    mode: AndMode,
) -> Result<f64> {
    assert_eq!(samples.len(), labels.len());
    if samples.is_empty() {
        return Err(Error::Schema("empty evaluation set".into()));
    }
    let full = PlayerSet::full(model.config().players());
    let mut hits = 0usize;
    for (sample, &label) in samples.iter().zip(labels) {
        let acts = model.forward_units(sample, full, mode)?;
        let logits = model.logits(&acts);
        let pred = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(c, _)| c)
            .unwrap();
        if pred == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// One masked forward on a probe sample: every unit whose receptive field
/// contains the masked player must be exactly zero. A violation means the
/// closed-form attribution would be wrong, so it is a hard failure.
fn assert_masking_invariant(model: &HarsanyiMlp, sample: &Sample) {
    let players = model.config().players();
    let fields = model.receptive_fields();
    let masked = PlayerSet::full(players).remove(0);
    let acts = model
        .forward_units(sample, masked, AndMode::Hard)
        .expect("probe forward failed");
    for (flat, (field, z)) in fields.flat().zip(acts.flat()).enumerate() {
        if field.contains(0) {
            assert_eq!(z, 0.0, "unit {flat} leaked a masked player through its gate");
        }
    }
}

/// Trains in place with Adam on softmax cross-entropy, reporting per-epoch
/// mean loss and accuracies. The per-epoch loss is the running mean of batch
/// losses, each measured before its update step. A non-finite loss aborts
/// with the offending epoch.
pub fn train(
    model: &mut HarsanyiMlp,
    train_samples: &[Sample],
    train_labels: &[usize],
    val_samples: &[Sample],
    val_labels: &[usize],
    cfg: &TrainConfig,
) -> Result<MetricsLog> {
    assert_eq!(train_samples.len(), train_labels.len());
    if train_samples.is_empty() || cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Schema("training needs samples, a batch size, and epochs".into()));
    }
    let mcfg = model.config().clone();
    let mut log = MetricsLog {
        config: vec![
            ("inputs".into(), mcfg.inputs.to_string()),
            ("blocks".into(), format!("{:?}", mcfg.block_sizes).replace(' ', "")),
            ("classes".into(), mcfg.classes.to_string()),
            ("beta".into(), mcfg.beta.to_string()),
            ("gamma".into(), mcfg.gamma.to_string()),
            ("scope".into(), mcfg.scope.name().into()),
            ("epochs".into(), cfg.epochs.to_string()),
            ("batch_size".into(), cfg.batch_size.to_string()),
            ("lr".into(), cfg.lr.to_string()),
            ("seed".into(), cfg.seed.to_string()),
            ("train_samples".into(), train_samples.len().to_string()),
            ("val_samples".into(), val_samples.len().to_string()),
        ],
        rows: Vec::new(),
    };

    let mut shuffle = stream(cfg.seed, STREAM_SHUFFLE);
    let mut opt = Adam::new(model, cfg.lr);
    let n = train_samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_x: Vec<Sample> = Vec::with_capacity(cfg.batch_size);
    let mut batch_y: Vec<usize> = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(train_samples[i].clone());
                batch_y.push(train_labels[i]);
            }
            let (loss, grads) = match loss_and_gradients(model, &batch_x, &batch_y) {
                Ok(pair) => pair,
                Err(Error::NonFiniteActivation { .. }) => {
                    return Err(Error::Divergence { epoch });
                }
                Err(other) => return Err(other),
            };
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            opt.step(model, &grads);
        }
        let loss = loss_sum / n as f64;
        let train_acc = accuracy(model, train_samples, train_labels, AndMode::Soft)?;
        let val_acc = if val_samples.is_empty() {
            f64::NAN
        } else {
            accuracy(model, val_samples, val_labels, AndMode::Soft)?
        };
        assert_masking_invariant(model, &train_samples[0]);
        log.rows.push(EpochMetrics { epoch, loss, train_acc, val_acc });
    }
    Ok(log)
}
