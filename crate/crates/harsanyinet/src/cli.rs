//! Command-line surface: train, explain, oracle, estimate, evaluate,
//! spectrum, fields.
//!
//! Every command takes `--seed` and echoes its resolved configuration as
//! leading `# key=value` lines on whatever it prints, so any output file is
//! self-describing and replayable. Attributions are CSV
//! `sample_index,player,phi` with 17-significant-digit reals.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::cnn::{exact_shapley_grid, grid_receptive_fields, GridGame, GridSet, HarsanyiCnn};
use crate::data::{load_csv_dataset, read_image_grid, DatasetConfig};
use crate::error::{Error, Result};
use crate::estimators::{estimate, rmse, EstimatorKind};
use crate::experiment::{run_convergence_experiment, ExperimentSpec};
use crate::game::{
    brute_force_shapley, interaction_spectrum, AttributionVector, GameKind, GameTable,
};
use crate::io::{load_model, save_mlp, ModelFile};
use crate::model::{AndMode, HarsanyiMlp, MlpConfig, Sample};
use crate::rng::estimator_stream;
use crate::train::{init_mlp, train, InitScheme, TrainConfig};

#[derive(Parser)]
#[command(
    name = "harsanyinet",
    about = "Gated networks with exact single-forward-pass Shapley attributions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a tabular model on a CSV dataset and save it.
    Train(TrainArgs),
    /// Exact attributions from one forward pass per sample.
    Explain(ExplainArgs),
    /// Ground-truth attributions by full coalition enumeration.
    Oracle(OracleArgs),
    /// Run a sampling estimator at a fixed inference budget.
    Estimate(EstimateArgs),
    /// Mean error of exact vs enumerated attributions over a dataset, or a
    /// full convergence experiment from a JSON spec.
    Evaluate(EvaluateArgs),
    /// Ranked interaction spectrum of a game.
    Spectrum(SpectrumArgs),
    /// Receptive field of every unit in a model.
    Fields(FieldsArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "label")]
    label_col: String,
    /// Where to save the trained model.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    #[arg(long, default_value_t = 100)]
    units: usize,
    /// Children per unit at initialization.
    #[arg(long, default_value_t = 2)]
    fanin: usize,
    #[arg(long, default_value_t = 10.0)]
    beta: f64,
    #[arg(long, default_value_t = 100.0)]
    gamma: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    /// Optional per-epoch metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV (tabular model) or image grid file (conv model).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "label")]
    label_col: String,
    /// How many rows to explain, from the top of the dataset.
    #[arg(long, default_value_t = 1)]
    samples: usize,
    /// Class to attribute: `auto` picks the predicted class.
    #[arg(long, default_value = "auto")]
    class: String,
    #[arg(long, default_value = "hard")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Game selection shared by oracle, estimate, and spectrum: either a saved
/// model plus input data, or a tabulated game file.
#[derive(Args)]
struct GameInput {
    #[arg(long, required_unless_present = "game", conflicts_with = "game")]
    model: Option<PathBuf>,
    /// Dataset CSV (tabular model) or image grid file (conv model).
    #[arg(long, required_unless_present = "game", conflicts_with = "game")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label_col: String,
    /// Tabulated game file, replacing --model/--data.
    #[arg(long)]
    game: Option<PathBuf>,
    /// Dataset row to explain (tabular models).
    #[arg(long, default_value_t = 0)]
    sample_index: usize,
    /// Class to attribute: `auto` picks the predicted class.
    #[arg(long, default_value = "auto")]
    class: String,
    #[arg(long, default_value = "hard")]
    mode: String,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: GameInput,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: GameInput,
    /// One of sampling, antithetical, kernelshap, kernelshap-ps.
    #[arg(long)]
    estimator: String,
    /// Maximum number of oracle evaluations.
    #[arg(long)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// JSON experiment spec; runs the full convergence comparison.
    #[arg(long, conflicts_with_all = ["model", "data"])]
    spec: Option<PathBuf>,
    #[arg(long, required_unless_present = "spec")]
    model: Option<PathBuf>,
    #[arg(long, required_unless_present = "spec")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label_col: String,
    /// How many rows to evaluate, from the top of the dataset.
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value = "hard")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    input: GameInput,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FieldsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses argv and runs one command; returns the process exit code. Flag
/// errors print usage and exit 2 (via clap); runtime failures print a
/// one-line diagnostic and return 1.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Explain(args) => run_explain(args),
        Command::Oracle(args) => run_oracle(args),
        Command::Estimate(args) => run_estimate(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Spectrum(args) => run_spectrum(args),
        Command::Fields(args) => run_fields(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

type Echo = Vec<(String, String)>;

fn echo_lines(echo: &Echo) -> String {
    let mut s = String::new();
    for (k, v) in echo {
        writeln!(s, "# {k}={v}").unwrap();
    }
    s
}

fn write_out(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => Ok(std::fs::write(path, content)?),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// `auto` or an explicit class index.
fn parse_class(s: &str) -> Result<Option<usize>> {
    if s == "auto" {
        return Ok(None);
    }
    s.parse::<usize>()
        .map(Some)
        .map_err(|_| Error::Schema(format!("--class must be `auto` or an index, got {s:?}")))
}

fn cnn_predicted_class(model: &HarsanyiCnn, image: &[f64], mode: AndMode) -> Result<usize> {
    let full = GridSet::full(model.config().locations());
    let logits = model.output(image, &full, mode)?;
    let mut best = 0;
    for (c, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = c;
        }
    }
    Ok(best)
}

/// A game resolved from CLI flags, ready to answer coalition queries.
enum LoadedGame {
    Table(GameTable),
    Mlp { model: HarsanyiMlp, sample: Sample, class: usize },
    Cnn { model: HarsanyiCnn, image: Vec<f64>, class: usize },
}

impl LoadedGame {
    fn class(&self) -> Option<usize> {
        match self {
            LoadedGame::Table(_) => None,
            LoadedGame::Mlp { class, .. } | LoadedGame::Cnn { class, .. } => Some(*class),
        }
    }
}

fn load_game_input(input: &GameInput, echo: &mut Echo) -> Result<(LoadedGame, AndMode)> {
    let mode = AndMode::parse(&input.mode)?;
    echo.push(("mode".into(), input.mode.clone()));
    if let Some(game_path) = &input.game {
        echo.push(("game".into(), game_path.display().to_string()));
        let table = GameTable::load_text(game_path)?;
        return Ok((LoadedGame::Table(table), mode));
    }
    let model_path = input.model.as_ref().expect("clap enforces --model without --game");
    let data_path = input.data.as_ref().expect("clap enforces --data without --game");
    echo.push(("model".into(), model_path.display().to_string()));
    echo.push(("data".into(), data_path.display().to_string()));
    echo.push(("class".into(), input.class.clone()));
    let wanted = parse_class(&input.class)?;
    match load_model(model_path)? {
        ModelFile::Mlp(model) => {
            let dataset = load_csv_dataset(data_path, &input.label_col, &DatasetConfig::default())?;
            if input.sample_index >= dataset.len() {
                return Err(Error::Schema(format!(
                    "sample index {} out of range for {} rows",
                    input.sample_index,
                    dataset.len()
                )));
            }
            echo.push(("sample_index".into(), input.sample_index.to_string()));
            let sample = dataset.samples[input.sample_index].clone();
            let class = match wanted {
                Some(c) => c,
                None => model.predicted_class(&sample, mode)?,
            };
            Ok((LoadedGame::Mlp { model, sample, class }, mode))
        }
        ModelFile::Cnn(model) => {
            let (image, _, _) = read_image_grid(data_path)?;
            let class = match wanted {
                Some(c) => c,
                None => cnn_predicted_class(&model, &image, mode)?,
            };
            Ok((LoadedGame::Cnn { model, image, class }, mode))
        }
    }
}

fn attribution_csv(echo: &Echo, rows: &[(usize, usize, AttributionVector)]) -> String {
    let mut s = echo_lines(echo);
    s.push_str("sample_index,player,phi\n");
    for (index, class, att) in rows {
        writeln!(s, "# sample={index} class={class} total={:.16e}", att.total()).unwrap();
        for (player, phi) in att.phi.iter().enumerate() {
            writeln!(s, "{index},{player},{phi:.16e}").unwrap();
        }
    }
    s
}

fn run_train(args: TrainArgs) -> Result<()> {
    let dataset = load_csv_dataset(&args.data, &args.label_col, &DatasetConfig::default())?;
    for w in &dataset.warnings {
        eprintln!("warning: {w}");
    }
    if dataset.classes() < 2 {
        return Err(Error::Schema("training needs at least two classes".into()));
    }
    let (train_ds, val_ds) = dataset.shuffled_split(args.val_fraction, args.seed);
    let mut config = MlpConfig::new(
        dataset.columns(),
        vec![args.units; args.blocks],
        dataset.classes(),
        args.beta,
        args.gamma,
    );
    config.grouping = dataset.grouping.clone();
    let mut model = init_mlp(config, &InitScheme::MlpFixedFanin { k: args.fanin }, args.seed)?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        lr: args.lr,
        seed: args.seed,
    };
    let log = train(
        &mut model,
        &train_ds.samples,
        &train_ds.labels,
        &val_ds.samples,
        &val_ds.labels,
        &cfg,
    )?;
    save_mlp(&model, &args.out)?;
    if let Some(metrics_path) = &args.metrics {
        log.save_csv(metrics_path)?;
    }
    let mut echo: Echo = log.config.clone();
    echo.push(("data".into(), args.data.display().to_string()));
    echo.push(("label_col".into(), args.label_col.clone()));
    echo.push(("out".into(), args.out.display().to_string()));
    echo.push(("fanin".into(), args.fanin.to_string()));
    echo.push(("val_fraction".into(), args.val_fraction.to_string()));
    print!("{}", echo_lines(&echo));
    let last = log.rows.last().expect("training ran at least one epoch");
    println!(
        "trained epochs={} loss={:.6e} train_acc={:.4} val_acc={:.4}",
        last.epoch, last.loss, last.train_acc, last.val_acc
    );
    Ok(())
}

fn run_explain(args: ExplainArgs) -> Result<()> {
    let mode = AndMode::parse(&args.mode)?;
    let wanted = parse_class(&args.class)?;
    let mut echo: Echo = vec![
        ("model".into(), args.model.display().to_string()),
        ("data".into(), args.data.display().to_string()),
        ("mode".into(), args.mode.clone()),
        ("class".into(), args.class.clone()),
        ("seed".into(), args.seed.to_string()),
    ];
    let mut rows = Vec::new();
    match load_model(&args.model)? {
        ModelFile::Mlp(model) => {
            let dataset =
                load_csv_dataset(&args.data, &args.label_col, &DatasetConfig::default())?;
            if dataset.len() < args.samples {
                return Err(Error::Schema(format!(
                    "dataset holds {} rows, --samples wants {}",
                    dataset.len(),
                    args.samples
                )));
            }
            echo.push(("samples".into(), args.samples.to_string()));
            for (i, sample) in dataset.samples[..args.samples].iter().enumerate() {
                let class = match wanted {
                    Some(c) => c,
                    None => model.predicted_class(sample, mode)?,
                };
                rows.push((i, class, model.exact_shapley(sample, class, mode)?));
            }
        }
        ModelFile::Cnn(model) => {
            if args.samples != 1 {
                return Err(Error::Schema("a grid file holds exactly one image".into()));
            }
            let (image, _, _) = read_image_grid(&args.data)?;
            let class = match wanted {
                Some(c) => c,
                None => cnn_predicted_class(&model, &image, mode)?,
            };
            rows.push((0, class, exact_shapley_grid(&model, &image, class, mode)?));
        }
    }
    write_out(&args.out, &attribution_csv(&echo, &rows))
}

fn run_oracle(args: OracleArgs) -> Result<()> {
    let mut echo: Echo = vec![("seed".into(), args.seed.to_string())];
    let (game, mode) = load_game_input(&args.input, &mut echo)?;
    let att = match &game {
        LoadedGame::Table(table) => {
            if table.kind() != GameKind::Reward {
                return Err(Error::KindMismatch { expected: "reward", got: table.kind().name() });
            }
            brute_force_shapley(table)?
        }
        LoadedGame::Mlp { model, sample, class } => {
            brute_force_shapley(&model.induced_game(sample, *class, mode)?)?
        }
        LoadedGame::Cnn { model, image, class } => {
            brute_force_shapley(&GridGame::new(model, image, *class, mode)?)?
        }
    };
    echo.push(("inference_count".into(), att.inference_count.to_string()));
    let rows = vec![(args.input.sample_index, game.class().unwrap_or(0), att)];
    write_out(&args.out, &attribution_csv(&echo, &rows))
}

fn run_estimate(args: EstimateArgs) -> Result<()> {
    let kind = EstimatorKind::parse(&args.estimator)?;
    let mut echo: Echo = vec![
        ("estimator".into(), kind.name().to_string()),
        ("budget".into(), args.budget.to_string()),
        ("seed".into(), args.seed.to_string()),
    ];
    let (game, mode) = load_game_input(&args.input, &mut echo)?;
    let mut rng = estimator_stream(args.seed, kind.index(), 0);
    let att = match &game {
        LoadedGame::Table(table) => {
            if table.kind() != GameKind::Reward {
                return Err(Error::KindMismatch { expected: "reward", got: table.kind().name() });
            }
            estimate(table, kind, args.budget, &mut rng)?
        }
        LoadedGame::Mlp { model, sample, class } => {
            estimate(&model.induced_game(sample, *class, mode)?, kind, args.budget, &mut rng)?
        }
        LoadedGame::Cnn { model, image, class } => {
            estimate(&GridGame::new(model, image, *class, mode)?, kind, args.budget, &mut rng)?
        }
    };
    echo.push(("inference_count".into(), att.inference_count.to_string()));
    let rows = vec![(args.input.sample_index, game.class().unwrap_or(0), att)];
    write_out(&args.out, &attribution_csv(&echo, &rows))
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    if let Some(spec_path) = &args.spec {
        let spec = ExperimentSpec::from_json_file(spec_path)?;
        let result = run_convergence_experiment(&spec)?;
        println!("# spec={}", spec_path.display());
        println!("# convergence_out={}", spec.convergence_out.display());
        println!("# summary_out={}", spec.summary_out.display());
        println!("estimator,budget,mean_rmse");
        for (estimator, budget, mean) in &result.summary {
            println!("{estimator},{budget},{mean:.16e}");
        }
        return Ok(());
    }
    let model_path = args.model.as_ref().expect("clap enforces --model without --spec");
    let data_path = args.data.as_ref().expect("clap enforces --data without --spec");
    let mode = AndMode::parse(&args.mode)?;
    let model = match load_model(model_path)? {
        ModelFile::Mlp(m) => m,
        ModelFile::Cnn(_) => {
            return Err(Error::TopologyMismatch { expected: "mlp", found: "conv".into() })
        }
    };
    let dataset = load_csv_dataset(data_path, &args.label_col, &DatasetConfig::default())?;
    if dataset.len() < args.samples || args.samples == 0 {
        return Err(Error::Schema(format!(
            "dataset holds {} rows, --samples wants {}",
            dataset.len(),
            args.samples
        )));
    }
    let mut mean = 0.0;
    for sample in &dataset.samples[..args.samples] {
        let class = model.predicted_class(sample, mode)?;
        let exact = model.exact_shapley(sample, class, mode)?;
        let truth = brute_force_shapley(&model.induced_game(sample, class, mode)?)?;
        mean += rmse(&exact.phi, &truth.phi);
    }
    mean /= args.samples as f64;
    let echo: Echo = vec![
        ("model".into(), model_path.display().to_string()),
        ("data".into(), data_path.display().to_string()),
        ("mode".into(), args.mode.clone()),
        ("samples".into(), args.samples.to_string()),
        ("seed".into(), args.seed.to_string()),
    ];
    print!("{}", echo_lines(&echo));
    println!("rmse {mean:.16e}");
    Ok(())
}

fn run_spectrum(args: SpectrumArgs) -> Result<()> {
    let mut echo: Echo = vec![("seed".into(), args.seed.to_string())];
    let (game, mode) = load_game_input(&args.input, &mut echo)?;
    let table = match &game {
        LoadedGame::Table(table) => table.clone(),
        LoadedGame::Mlp { model, sample, class } => {
            GameTable::from_oracle(&model.induced_game(sample, *class, mode)?)?
        }
        LoadedGame::Cnn { model, image, class } => {
            GameTable::from_oracle(&GridGame::new(model, image, *class, mode)?)?
        }
    };
    let entries = interaction_spectrum(&table)?;
    let n = table.n();
    let mut s = echo_lines(&echo);
    s.push_str("coalition,order,interaction\n");
    for e in &entries {
        writeln!(
            s,
            "{:0width$b},{},{:.16e}",
            e.coalition.index(),
            e.coalition.len(),
            e.interaction,
            width = n.max(1)
        )
        .unwrap();
    }
    write_out(&args.out, &s)
}

fn run_fields(args: FieldsArgs) -> Result<()> {
    let echo: Echo = vec![
        ("model".into(), args.model.display().to_string()),
        ("seed".into(), args.seed.to_string()),
    ];
    let mut s = echo_lines(&echo);
    fn joined(members: impl Iterator<Item = usize>) -> String {
        members.map(|p| p.to_string()).collect::<Vec<_>>().join("+")
    }
    match load_model(&args.model)? {
        ModelFile::Mlp(model) => {
            s.push_str("block,unit,players\n");
            let fields = model.receptive_fields();
            for (block, units) in fields.blocks().iter().enumerate() {
                for (unit, field) in units.iter().enumerate() {
                    writeln!(s, "{block},{unit},{}", joined(field.members())).unwrap();
                }
            }
        }
        ModelFile::Cnn(model) => {
            // Fields are channel-shared, so one row per grid location.
            s.push_str("block,location,players\n");
            let fields = grid_receptive_fields(&model);
            for (block, locations) in fields.blocks().iter().enumerate() {
                for (location, field) in locations.iter().enumerate() {
                    writeln!(s, "{block},{location},{}", joined(field.members())).unwrap();
                }
            }
        }
    }
    write_out(&args.out, &s)
}
