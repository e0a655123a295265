//! Command-line front end for the decoding experiments.
//!
//! Exit status: 0 on success, 1 for configuration or input errors, 2 when
//! reading or writing a file fails.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tokensearch::decoders::AlgorithmSpec;
use tokensearch::harness::{
    emit_report, export_tree, load_dataset, render_table, run_experiment, run_oracle, search_tree, AlgorithmRun,
    Instance, ReportFormat, RunConfig,
};
use tokensearch::mcts::{Backup, RootSelection, SearchConfig, ValueSource};
use tokensearch::models::ModelSpec;
use tokensearch::scoring::MetricSpec;
use tokensearch::Error;

#[derive(Parser, Debug)]
#[command(
    name = "tokensearch",
    version,
    about = "Decode synthetic token models with tree and beam search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one algorithm at one budget over a dataset.
    Decode {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Run every selected algorithm over a grid of budgets.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated budgets, e.g. 1,10,25,50.
        #[arg(long, value_delimiter = ',')]
        budgets: Vec<usize>,
    },
    /// Exact likelihood and metric maximisers by enumeration.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Export the MCTS tree built at one decoding step as DOT.
    Tree {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        algo: AlgoArgs,
        /// Instance id; defaults to the first instance.
        #[arg(long)]
        instance: Option<String>,
        #[arg(long, default_value_t = 16)]
        simulations: usize,
        /// Output position whose search is exported.
        #[arg(long, default_value_t = 0)]
        step: usize,
    },
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Line-delimited JSON dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// JSON run configuration. Explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    metric: MetricArgs,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    context_order: Option<usize>,
    #[arg(long)]
    value_noise: Option<f64>,
}

#[derive(Args, Debug)]
struct MetricArgs {
    #[arg(long, value_enum)]
    metric: Option<MetricName>,
    #[arg(long, default_value_t = 4)]
    max_n: usize,
    #[arg(long, default_value_t = 16)]
    embed_dim: usize,
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
    /// Target token of the occupancy metric.
    #[arg(long, default_value_t = 0)]
    target: u32,
    #[arg(long, default_value_t = 3)]
    horizon: usize,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    algo: AlgoArgs,
    /// Algorithms to run; repeat or comma-separate.
    #[arg(long, value_enum, value_delimiter = ',')]
    algorithm: Vec<AlgorithmName>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct AlgoArgs {
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 8)]
    sparse_actions: usize,
    #[arg(long, default_value_t = 1.0)]
    c_puct: f64,
    #[arg(long, value_enum, default_value_t = BackupName::Average)]
    backup: BackupName,
    #[arg(long, value_enum, default_value_t = SelectionName::VisitCount)]
    root_selection: SelectionName,
    #[arg(long, value_enum, default_value_t = ValueName::Model)]
    value_source: ValueName,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricName {
    Bleu,
    BertReference,
    BertSource,
    Occupancy,
    Coverage,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlgorithmName {
    Greedy,
    Beam,
    Vgbs,
    Mcts,
    #[value(name = "s+r")]
    SampleRerank,
    #[value(name = "s+rv")]
    SampleRerankValue,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackupName {
    Average,
    Max,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SelectionName {
    VisitCount,
    MaxValue,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ValueName {
    Model,
    Rollout,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl AlgoArgs {
    fn search(&self, simulations: usize) -> SearchConfig {
        SearchConfig {
            c_puct: self.c_puct,
            tau: self.tau,
            backup: match self.backup {
                BackupName::Average => Backup::Average,
                BackupName::Max => Backup::Max,
            },
            root_selection: match self.root_selection {
                SelectionName::VisitCount => RootSelection::VisitCount,
                SelectionName::MaxValue => RootSelection::MaxValue,
            },
            value_source: match self.value_source {
                ValueName::Model => ValueSource::Model,
                ValueName::Rollout => ValueSource::Rollout,
            },
            ..SearchConfig::new(simulations, self.sparse_actions)
        }
    }

    fn spec(&self, name: AlgorithmName) -> AlgorithmSpec {
        match name {
            AlgorithmName::Greedy => AlgorithmSpec::Greedy,
            AlgorithmName::Beam => AlgorithmSpec::Beam {
                theta: self.theta,
                tau: self.tau,
            },
            AlgorithmName::Vgbs => AlgorithmSpec::Vgbs { alpha: self.alpha },
            AlgorithmName::Mcts => AlgorithmSpec::Mcts(self.search(0)),
            AlgorithmName::SampleRerank => AlgorithmSpec::SampleRerank { tau: self.tau },
            AlgorithmName::SampleRerankValue => AlgorithmSpec::SampleRerankValue { tau: self.tau },
        }
    }
}

fn read_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn model_spec(base: Option<ModelSpec>, args: &ModelArgs) -> Result<ModelSpec, Failure> {
    let mut spec = base.unwrap_or(ModelSpec {
        seed: 0,
        vocab_size: 0,
        max_len: 0,
        context_order: 1,
        value_noise: 0.0,
        fixed_prior: None,
    });
    if let Some(v) = args.model_seed {
        spec.seed = v;
    }
    if let Some(v) = args.vocab_size {
        spec.vocab_size = v;
    }
    if let Some(v) = args.max_len {
        spec.max_len = v;
    }
    if let Some(v) = args.context_order {
        spec.context_order = v;
    }
    if let Some(v) = args.value_noise {
        spec.value_noise = v;
    }
    if spec.vocab_size == 0 || spec.max_len == 0 {
        return Err(Failure::Config(
            "--vocab-size and --max-len are required without --config".into(),
        ));
    }
    Ok(spec)
}

fn metric_spec(base: Option<MetricSpec>, args: &MetricArgs) -> Result<MetricSpec, Failure> {
    let Some(name) = args.metric else {
        return base.ok_or_else(|| Failure::Config("--metric is required without --config".into()));
    };
    Ok(match name {
        MetricName::Bleu => MetricSpec::Bleu { max_n: args.max_n },
        MetricName::BertReference => MetricSpec::BertReference {
            dim: args.embed_dim,
            seed: args.embed_seed,
        },
        MetricName::BertSource => MetricSpec::BertSource {
            dim: args.embed_dim,
            seed: args.embed_seed,
        },
        MetricName::Occupancy => MetricSpec::Occupancy {
            target: args.target,
            horizon: args.horizon,
        },
        MetricName::Coverage => MetricSpec::Coverage,
    })
}

fn run_config(run: &RunArgs, budgets: Vec<usize>) -> Result<(RunConfig, Vec<Instance>), Failure> {
    let base = run.common.config.as_deref().map(read_config).transpose()?;
    let dataset = load_dataset(&run.common.dataset)?;
    let model = model_spec(base.as_ref().map(|c| c.model.clone()), &run.common.model)?;
    let metric = metric_spec(base.as_ref().map(|c| c.metric.clone()), &run.common.metric)?;
    let algorithms = if run.algorithm.is_empty() {
        base.as_ref().map(|c| c.algorithms.clone()).unwrap_or_default()
    } else {
        run.algorithm
            .iter()
            .map(|&a| AlgorithmRun::new(run.algo.spec(a)))
            .collect()
    };
    let budgets = if budgets.is_empty() {
        base.as_ref().map(|c| c.budgets.clone()).unwrap_or_default()
    } else {
        budgets
    };
    let seed = run.seed.or(base.as_ref().map(|c| c.seed)).unwrap_or(0);
    let cfg = RunConfig {
        model,
        metric,
        algorithms,
        budgets,
        seed,
    };
    Ok((cfg, dataset))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
                // a closed downstream pipe (e.g. `| head`) is not a failure
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::Io(format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

fn common_specs(common: &CommonArgs) -> Result<(ModelSpec, MetricSpec, Vec<Instance>), Failure> {
    let base = common.config.as_deref().map(read_config).transpose()?;
    let dataset = load_dataset(&common.dataset)?;
    let model = model_spec(base.as_ref().map(|c| c.model.clone()), &common.model)?;
    let metric = metric_spec(base.map(|c| c.metric), &common.metric)?;
    Ok((model, metric, dataset))
}

fn run_decode(run: &RunArgs, budgets: Vec<usize>) -> Result<(), Failure> {
    let (cfg, dataset) = run_config(run, budgets)?;
    let report = run_experiment(&cfg, &dataset)?;
    let format = match run.format {
        Format::Json => ReportFormat::Json,
        Format::Table => ReportFormat::Table,
    };
    match &run.common.output {
        Some(path) => emit_report(&report, path, format)?,
        None => {
            let text = match format {
                ReportFormat::Json => serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n",
                ReportFormat::Table => render_table(&report),
            };
            write_output(None, &text)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Decode { run, budget } => {
            if run.algorithm.len() > 1 {
                return Err(Failure::Config(
                    "decode takes a single --algorithm; use sweep for several".into(),
                ));
            }
            run_decode(&run, budget.into_iter().collect())
        }
        Command::Sweep { run, budgets } => run_decode(&run, budgets),
        Command::Oracle { common } => {
            let (model, metric, dataset) = common_specs(&common)?;
            let entries = run_oracle(&model, &metric, &dataset)?;
            let text = serde_json::to_string_pretty(&entries).map_err(Error::from)? + "\n";
            write_output(common.output.as_deref(), &text)
        }
        Command::Tree {
            common,
            algo,
            instance,
            simulations,
            step,
        } => {
            let (model, metric, dataset) = common_specs(&common)?;
            let chosen = match &instance {
                Some(id) => dataset.iter().find(|i| &i.id == id),
                None => dataset.first(),
            }
            .ok_or_else(|| Failure::Config("no matching instance in the dataset".into()))?;
            let tree = search_tree(&model, &metric, chosen, &algo.search(simulations), step)?;
            match &common.output {
                Some(path) => Ok(export_tree(&tree, path)?),
                None => write_output(None, &tokensearch::harness::render_dot(&tree)),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
