//! Python bindings: tabulated games, tabular and convolutional models with
//! single-pass attributions, sampling estimators, and the training loop.
//!
//! Invalid arguments and malformed files raise `ValueError`, I/O failures
//! raise `OSError`, and numeric breakdowns (divergence, non-finite values,
//! rank-deficient regressions) raise `RuntimeError`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use harsanyinet::cnn::{
    exact_shapley_grid, grid_receptive_fields, restricted_shapley_grid, GridSet, HarsanyiCnn,
};
use harsanyinet::data::{load_csv_dataset, DatasetConfig};
use harsanyinet::estimators::{self, EstimatorKind};
use harsanyinet::experiment::{run_convergence_experiment, ExperimentSpec};
use harsanyinet::game::{
    brute_force_shapley, harsanyi_transform, interaction_spectrum, shapley_from_interactions,
    GameKind, GameTable, PlayerSet,
};
use harsanyinet::io::{load_cnn, load_mlp, save_cnn, save_mlp};
use harsanyinet::model::{AndMode, HarsanyiMlp, MlpConfig, Sample};
use harsanyinet::rng::estimator_stream;
use harsanyinet::train::{init_mlp, train, InitScheme, TrainConfig};
use harsanyinet::Error;

fn pyerr(e: Error) -> PyErr {
    match e {
        Error::NonFiniteValue { .. }
        | Error::NonFiniteActivation { .. }
        | Error::RankDeficient { .. }
        | Error::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Io(inner) => PyIOError::new_err(inner.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<AndMode> {
    AndMode::parse(mode).map_err(pyerr)
}

fn player_set(members: &[usize], n: usize) -> PyResult<PlayerSet> {
    let mut set = PlayerSet::empty(n);
    for &m in members {
        if m >= n {
            return Err(PyValueError::new_err(format!(
                "player {m} out of range for {n} players"
            )));
        }
        set = set.insert(m);
    }
    Ok(set)
}

fn grid_set(members: Option<&[usize]>, n: usize) -> PyResult<GridSet> {
    match members {
        None => Ok(GridSet::full(n)),
        Some(members) => {
            let mut set = GridSet::empty(n);
            for &m in members {
                if m >= n {
                    return Err(PyValueError::new_err(format!(
                        "location {m} out of range for {n} locations"
                    )));
                }
                set.insert(m);
            }
            Ok(set)
        }
    }
}

fn sample_from(x: Vec<f64>) -> PyResult<Sample> {
    let baseline = vec![0.0; x.len()];
    Sample::new(x, baseline).map_err(pyerr)
}

/// A fully tabulated cooperative game: one value per coalition bitmask.
#[pyclass(name = "Game", module = "harsanyinet_py")]
struct PyGame {
    inner: GameTable,
}

#[pymethods]
impl PyGame {
    /// Builds a table from 2^n values in bitmask order; the empty-coalition
    /// entry must be exactly zero.
    #[new]
    #[pyo3(signature = (n, values, kind = "reward"))]
    fn new(n: usize, values: Vec<f64>, kind: &str) -> PyResult<Self> {
        let kind = match kind {
            "reward" => GameKind::Reward,
            "interaction" => GameKind::Interaction,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown game kind {other:?}, expected \"reward\" or \"interaction\""
                )))
            }
        };
        Ok(PyGame { inner: GameTable::new(n, kind, values).map_err(pyerr)? })
    }

    /// Reads the text game format.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyGame { inner: GameTable::load_text(&path).map_err(pyerr)? })
    }

    /// Writes the text game format.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_text(&path).map_err(pyerr)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Value of one coalition given as a list of player indices.
    fn value(&self, members: Vec<usize>) -> PyResult<f64> {
        let set = player_set(&members, self.inner.n())?;
        Ok(self.inner.value(set))
    }

    /// Exact Shapley values by coalition enumeration (reward games only).
    fn shapley(&self) -> PyResult<Vec<f64>> {
        if self.inner.kind() != GameKind::Reward {
            return Err(PyValueError::new_err("shapley needs a reward table"));
        }
        Ok(brute_force_shapley(&self.inner).map_err(pyerr)?.phi)
    }

    /// The interaction table of a reward game (its Moebius transform).
    fn interactions(&self) -> PyResult<Self> {
        Ok(PyGame { inner: harsanyi_transform(&self.inner).map_err(pyerr)? })
    }

    /// Shapley values of an interaction table: each interaction split
    /// equally among its members.
    fn shapley_from_interactions(&self) -> PyResult<Vec<f64>> {
        Ok(shapley_from_interactions(&self.inner).map_err(pyerr)?.phi)
    }

    /// Interaction strengths as (coalition_bits, order, interaction) sorted
    /// by descending magnitude. Accepts both table kinds.
    fn spectrum(&self) -> PyResult<Vec<(usize, usize, f64)>> {
        let entries = interaction_spectrum(&self.inner).map_err(pyerr)?;
        Ok(entries
            .into_iter()
            .map(|e| (e.coalition.index(), e.coalition.len(), e.interaction))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("Game(n={}, kind={:?})", self.inner.n(), self.inner.kind().name())
    }
}

/// A tabular model whose gated units give exact Shapley values in a single
/// forward pass.
#[pyclass(name = "Mlp", module = "harsanyinet_py")]
struct PyMlp {
    inner: HarsanyiMlp,
}

impl PyMlp {
    fn resolve_class(
        &self,
        x: &Sample,
        class_index: Option<usize>,
        mode: AndMode,
    ) -> PyResult<usize> {
        match class_index {
            Some(c) => Ok(c),
            None => self.inner.predicted_class(x, mode).map_err(pyerr),
        }
    }
}

#[pymethods]
impl PyMlp {
    /// Reads the checksummed model format (tabular topology).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyMlp { inner: load_mlp(&path).map_err(pyerr)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_mlp(&self.inner, &path).map_err(pyerr)
    }

    #[getter]
    fn players(&self) -> usize {
        self.inner.config().players()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.config().classes
    }

    #[getter]
    fn blocks(&self) -> Vec<usize> {
        self.inner.config().block_sizes.clone()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.config().beta
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.config().gamma
    }

    /// Class logits for input `x` with the coalition `members` present
    /// (everyone, when omitted).
    #[pyo3(signature = (x, mode = "hard", members = None))]
    fn output(&self, x: Vec<f64>, mode: &str, members: Option<Vec<usize>>) -> PyResult<Vec<f64>> {
        let mode = parse_mode(mode)?;
        let sample = sample_from(x)?;
        let n = self.inner.config().players();
        let present = match &members {
            None => PlayerSet::full(n),
            Some(m) => player_set(m, n)?,
        };
        self.inner.output(&sample, present, mode).map_err(pyerr)
    }

    /// Class with the largest full-input logit.
    #[pyo3(signature = (x, mode = "hard"))]
    fn predicted_class(&self, x: Vec<f64>, mode: &str) -> PyResult<usize> {
        let mode = parse_mode(mode)?;
        let sample = sample_from(x)?;
        self.inner.predicted_class(&sample, mode).map_err(pyerr)
    }

    /// Exact per-player Shapley values from one forward pass. Explains the
    /// predicted class when `class_index` is omitted.
    #[pyo3(signature = (x, class_index = None, mode = "hard"))]
    fn shapley(&self, x: Vec<f64>, class_index: Option<usize>, mode: &str) -> PyResult<Vec<f64>> {
        let mode = parse_mode(mode)?;
        let sample = sample_from(x)?;
        let class = self.resolve_class(&sample, class_index, mode)?;
        Ok(self.inner.exact_shapley(&sample, class, mode).map_err(pyerr)?.phi)
    }

    /// The class-logit game this model induces on input `x`, tabulated over
    /// all coalitions (player counts small enough to enumerate only).
    #[pyo3(signature = (x, class_index = None, mode = "hard"))]
    fn game(&self, x: Vec<f64>, class_index: Option<usize>, mode: &str) -> PyResult<PyGame> {
        let mode = parse_mode(mode)?;
        let sample = sample_from(x)?;
        let class = self.resolve_class(&sample, class_index, mode)?;
        let oracle = self.inner.induced_game(&sample, class, mode).map_err(pyerr)?;
        Ok(PyGame { inner: GameTable::from_oracle(&oracle).map_err(pyerr)? })
    }

    /// Receptive field of every unit in flat block order, each a sorted
    /// list of player indices.
    fn fields(&self) -> Vec<Vec<usize>> {
        self.inner.receptive_fields().flat().map(|f| f.members().collect()).collect()
    }

    fn __repr__(&self) -> String {
        let cfg = self.inner.config();
        format!(
            "Mlp(players={}, blocks={:?}, classes={})",
            cfg.players(),
            cfg.block_sizes,
            cfg.classes
        )
    }
}

/// A convolutional model over a grid of players with the same single-pass
/// attribution guarantee.
#[pyclass(name = "Cnn", module = "harsanyinet_py")]
struct PyCnn {
    inner: HarsanyiCnn,
}

impl PyCnn {
    fn resolve_class(
        &self,
        image: &[f64],
        class_index: Option<usize>,
        mode: AndMode,
    ) -> PyResult<usize> {
        if let Some(c) = class_index {
            return Ok(c);
        }
        let full = GridSet::full(self.inner.config().locations());
        let logits = self.inner.output(image, &full, mode).map_err(pyerr)?;
        let mut best = 0;
        for (c, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = c;
            }
        }
        Ok(best)
    }
}

#[pymethods]
impl PyCnn {
    /// Reads the checksummed model format (grid topology).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCnn { inner: load_cnn(&path).map_err(pyerr)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_cnn(&self.inner, &path).map_err(pyerr)
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.config().height
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.config().width
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.config().channels
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.config().classes
    }

    #[getter]
    fn locations(&self) -> usize {
        self.inner.config().locations()
    }

    /// Class logits for a row-major image with the listed grid locations
    /// present (all of them, when omitted).
    #[pyo3(signature = (image, mode = "hard", members = None))]
    fn output(
        &self,
        image: Vec<f64>,
        mode: &str,
        members: Option<Vec<usize>>,
    ) -> PyResult<Vec<f64>> {
        let mode = parse_mode(mode)?;
        let present = grid_set(members.as_deref(), self.inner.config().locations())?;
        self.inner.output(&image, &present, mode).map_err(pyerr)
    }

    /// Class with the largest full-grid logit.
    #[pyo3(signature = (image, mode = "hard"))]
    fn predicted_class(&self, image: Vec<f64>, mode: &str) -> PyResult<usize> {
        let mode = parse_mode(mode)?;
        self.resolve_class(&image, None, mode)
    }

    /// Exact per-location Shapley values from one forward pass.
    #[pyo3(signature = (image, class_index = None, mode = "hard"))]
    fn shapley(
        &self,
        image: Vec<f64>,
        class_index: Option<usize>,
        mode: &str,
    ) -> PyResult<Vec<f64>> {
        let mode = parse_mode(mode)?;
        let class = self.resolve_class(&image, class_index, mode)?;
        Ok(exact_shapley_grid(&self.inner, &image, class, mode).map_err(pyerr)?.phi)
    }

    /// Shapley values over a chosen subset of locations, everyone else held
    /// present. Entries outside the subset are zero.
    #[pyo3(signature = (image, members, class_index = None, mode = "hard"))]
    fn restricted_shapley(
        &self,
        image: Vec<f64>,
        members: Vec<usize>,
        class_index: Option<usize>,
        mode: &str,
    ) -> PyResult<Vec<f64>> {
        let mode = parse_mode(mode)?;
        let class = self.resolve_class(&image, class_index, mode)?;
        let selected = grid_set(Some(&members), self.inner.config().locations())?;
        Ok(restricted_shapley_grid(&self.inner, &image, class, mode, &selected)
            .map_err(pyerr)?
            .phi)
    }

    /// Receptive field of every block location as sorted location lists,
    /// indexed [block][location].
    fn fields(&self) -> Vec<Vec<Vec<usize>>> {
        grid_receptive_fields(&self.inner)
            .blocks()
            .iter()
            .map(|per_block| per_block.iter().map(|f| f.members().collect()).collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        let cfg = self.inner.config();
        format!(
            "Cnn(height={}, width={}, channels={}, blocks={}, classes={})",
            cfg.height, cfg.width, cfg.channels, cfg.blocks, cfg.classes
        )
    }
}

/// Runs a sampling estimator against a tabulated reward game and returns
/// `(phi, inference_count)`. Estimators: "sampling", "antithetical",
/// "kernelshap", "kernelshap-ps".
#[pyfunction]
#[pyo3(signature = (game, estimator, budget, seed = 0))]
fn estimate(
    game: PyRef<'_, PyGame>,
    estimator: &str,
    budget: u64,
    seed: u64,
) -> PyResult<(Vec<f64>, u64)> {
    if game.inner.kind() != GameKind::Reward {
        return Err(PyValueError::new_err("estimators need a reward table"));
    }
    let kind = EstimatorKind::parse(estimator).map_err(pyerr)?;
    let mut rng = estimator_stream(seed, kind.index(), 0);
    let att = estimators::estimate(&game.inner, kind, budget, &mut rng).map_err(pyerr)?;
    Ok((att.phi, att.inference_count))
}

/// Per-epoch history rows: `(epoch, loss, train_acc, val_acc)`.
type TrainHistory = Vec<(usize, f64, f64, f64)>;

/// Fits a tabular model on a CSV dataset and returns it with the per-epoch
/// history as `(epoch, loss, train_acc, val_acc)` rows.
#[pyfunction]
#[pyo3(signature = (
    data, blocks, label_col = "label", beta = 10.0, gamma = 100.0, fanin = 2,
    epochs = 50, batch = 64, lr = 1e-3, val_fraction = 0.2, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn train_mlp(
    data: PathBuf,
    blocks: Vec<usize>,
    label_col: &str,
    beta: f64,
    gamma: f64,
    fanin: usize,
    epochs: usize,
    batch: usize,
    lr: f64,
    val_fraction: f64,
    seed: u64,
) -> PyResult<(PyMlp, TrainHistory)> {
    let dataset = load_csv_dataset(&data, label_col, &DatasetConfig::default()).map_err(pyerr)?;
    if dataset.classes() < 2 {
        return Err(PyValueError::new_err("training needs at least two classes"));
    }
    let (train_ds, val_ds) = dataset.shuffled_split(val_fraction, seed);
    let mut config =
        MlpConfig::new(dataset.columns(), blocks, dataset.classes(), beta, gamma);
    config.grouping = dataset.grouping.clone();
    let mut model =
        init_mlp(config, &InitScheme::MlpFixedFanin { k: fanin }, seed).map_err(pyerr)?;
    let cfg = TrainConfig { epochs, batch_size: batch, lr, seed };
    let log = train(
        &mut model,
        &train_ds.samples,
        &train_ds.labels,
        &val_ds.samples,
        &val_ds.labels,
        &cfg,
    )
    .map_err(pyerr)?;
    let history =
        log.rows.iter().map(|r| (r.epoch, r.loss, r.train_acc, r.val_acc)).collect();
    Ok((PyMlp { inner: model }, history))
}

/// Runs the convergence experiment described by a JSON spec file, writes its
/// CSVs, and returns the summary as `(estimator, budget, mean_rmse)` rows.
#[pyfunction]
fn run_experiment(spec: PathBuf) -> PyResult<Vec<(String, u64, f64)>> {
    let spec = ExperimentSpec::from_json_file(&spec).map_err(pyerr)?;
    Ok(run_convergence_experiment(&spec).map_err(pyerr)?.summary)
}

#[pymodule]
fn harsanyinet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGame>()?;
    m.add_class::<PyMlp>()?;
    m.add_class::<PyCnn>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(train_mlp, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
