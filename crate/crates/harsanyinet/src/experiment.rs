//! Convergence experiments: estimator error against inference budget.
//!
//! A fully serialized spec drives the run, and every random draw comes from a
//! stream keyed by (estimator, budget, trial), so re-running an identical
//! spec writes byte-identical outputs.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{load_csv_dataset, DatasetConfig};
use crate::error::{Error, Result};
use crate::estimators::{estimate, rmse, EstimatorKind};
use crate::game::brute_force_shapley;
use crate::io::load_mlp;
use crate::model::AndMode;
use crate::rng::estimator_stream;

/// Name of the one-forward-pass exact method in convergence outputs.
pub const EXACT_METHOD: &str = "harsanyinet";

/// Largest player count accepted for experiments: the truth oracle enumerates
/// every coalition.
pub const MAX_ORACLE_PLAYERS: usize = 16;

fn default_label_col() -> String {
    "label".into()
}

fn default_mode() -> String {
    "hard".into()
}

/// A complete description of one convergence run. Serializable as JSON so
/// the run is replayable from the file alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    #[serde(default = "default_label_col")]
    pub label_col: String,
    pub model: PathBuf,
    /// Estimator names as accepted by the CLI; empty list means only the
    /// exact method's row is emitted.
    pub estimators: Vec<String>,
    pub budgets: Vec<u64>,
    pub trials: usize,
    /// Number of test samples, taken from the head of the dataset.
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: String,
    pub convergence_out: PathBuf,
    pub summary_out: PathBuf,
}

impl ExperimentSpec {
    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json_file(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    fn echo_header(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# dataset {}", self.dataset.display()).unwrap();
        writeln!(s, "# model {}", self.model.display()).unwrap();
        writeln!(s, "# mode {}", self.mode).unwrap();
        writeln!(s, "# samples {}", self.samples).unwrap();
        writeln!(s, "# trials {}", self.trials).unwrap();
        writeln!(s, "# seed {}", self.seed).unwrap();
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub estimator: String,
    pub budget: u64,
    pub trial: usize,
    /// Mean over test samples of per-sample attribution error.
    pub rmse: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub rows: Vec<ConvergenceRow>,
    /// Per (estimator, budget) mean over trials, exact method last.
    pub summary: Vec<(String, u64, f64)>,
}

impl ExperimentResult {
    /// Mean rmse over trials for one estimator at one budget.
    pub fn mean_rmse(&self, estimator: &str, budget: u64) -> Option<f64> {
        self.summary
            .iter()
            .find(|(e, b, _)| e == estimator && *b == budget)
            .map(|&(_, _, v)| v)
    }
}

fn render_convergence_csv(spec: &ExperimentSpec, rows: &[ConvergenceRow]) -> String {
    let mut s = spec.echo_header();
    s.push_str("estimator,budget,trial,rmse\n");
    for r in rows {
        writeln!(s, "{},{},{},{:.16e}", r.estimator, r.budget, r.trial, r.rmse).unwrap();
    }
    s
}

fn render_summary(spec: &ExperimentSpec, summary: &[(String, u64, f64)]) -> String {
    let mut s = spec.echo_header();
    s.push_str("estimator,budget,mean_rmse\n");
    for (estimator, budget, mean) in summary {
        writeln!(s, "{estimator},{budget},{mean:.16e}").unwrap();
    }
    s
}

/// Runs the full error-vs-budget comparison described by `spec` and writes
/// the per-trial CSV and the per-budget summary to the spec's output paths.
///
/// For each test sample the coalition-enumeration truth is computed once;
/// each estimator then runs over the budget grid, `trials` repetitions each,
/// and every row reports the mean error across samples. One row for the
/// exact method at budget 1 is appended last.
pub fn run_convergence_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let model = load_mlp(&spec.model)?;
    let n = model.config().players();
    if n > MAX_ORACLE_PLAYERS {
        return Err(Error::Capacity(n));
    }
    let mode = AndMode::parse(&spec.mode)?;
    let kinds: Vec<EstimatorKind> =
        spec.estimators.iter().map(|s| EstimatorKind::parse(s)).collect::<Result<_>>()?;
    let dataset = load_csv_dataset(&spec.dataset, &spec.label_col, &DatasetConfig::default())?;
    if dataset.len() < spec.samples {
        return Err(Error::Schema(format!(
            "dataset holds {} samples, spec wants {}",
            dataset.len(),
            spec.samples
        )));
    }
    if spec.samples == 0 {
        return Err(Error::Schema("sample count must be positive".into()));
    }

    // Truth once per sample; the exact method's error comes for free.
    let mut games = Vec::with_capacity(spec.samples);
    let mut truths = Vec::with_capacity(spec.samples);
    let mut exact_mean = 0.0;
    for sample in &dataset.samples[..spec.samples] {
        let class = model.predicted_class(sample, mode)?;
        let exact = model.exact_shapley(sample, class, mode)?;
        let game = model.induced_game(sample, class, mode)?;
        let truth = brute_force_shapley(&game)?;
        exact_mean += rmse(&exact.phi, &truth.phi);
        games.push(game);
        truths.push(truth);
    }
    exact_mean /= spec.samples as f64;

    let mut rows = Vec::new();
    for kind in &kinds {
        for (bi, &budget) in spec.budgets.iter().enumerate() {
            for trial in 0..spec.trials {
                let mut rng = estimator_stream(
                    spec.seed,
                    kind.index(),
                    (bi * spec.trials + trial) as u64,
                );
                let mut mean = 0.0;
                for (game, truth) in games.iter().zip(&truths) {
                    let est = estimate(game, *kind, budget, &mut rng)?;
                    mean += rmse(&est.phi, &truth.phi);
                }
                rows.push(ConvergenceRow {
                    estimator: kind.name().to_owned(),
                    budget,
                    trial,
                    rmse: mean / spec.samples as f64,
                });
            }
        }
    }
    rows.push(ConvergenceRow {
        estimator: EXACT_METHOD.to_owned(),
        budget: 1,
        trial: 0,
        rmse: exact_mean,
    });

    let mut summary = Vec::new();
    for kind in &kinds {
        for &budget in &spec.budgets {
            let trials: Vec<f64> = rows
                .iter()
                .filter(|r| r.estimator == kind.name() && r.budget == budget)
                .map(|r| r.rmse)
                .collect();
            let mean = trials.iter().sum::<f64>() / trials.len() as f64;
            summary.push((kind.name().to_owned(), budget, mean));
        }
    }
    summary.push((EXACT_METHOD.to_owned(), 1, exact_mean));

    std::fs::write(&spec.convergence_out, render_convergence_csv(spec, &rows))?;
    std::fs::write(&spec.summary_out, render_summary(spec, &summary))?;
    Ok(ExperimentResult { rows, summary })
}
