//! Command-line front end for the `hyperexpand` crate.
//!
//! Every payload echoes the parsed command under `config` together with
//! `tool_version`; feeding that echo back through `replay` reproduces the
//! payload byte for byte (`bench` timings excepted). Output paths are not
//! part of the echo.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hyperexpand::construct::{self, GeneratorConfig};
use hyperexpand::gnn::{self, HyperedgeMode, Optimizer, TrainConfig};
use hyperexpand::graph::{BIPARTITE_FORMAT, GRAPH_FORMAT};
use hyperexpand::json::to_compact;
use hyperexpand::rewire::{self, REWIRED_FORMAT};
use hyperexpand::{oracle, spectral, BipartiteExpander, Graph};
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = concat!("hyperexpand ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] hyperexpand::Error),
}

impl CliError {
    /// 1 usage/input, 2 budget exhausted, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_budget() => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "hyperexpand", version, about = "Bipartite expanders, spectral certification and expander message passing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Sample a k-regular bipartite expander with n + n nodes
    Generate(GenerateArgs),
    /// Spectrum and spectral bounds of a regular graph
    Analyze(AnalyzeArgs),
    /// Check the spectral bounds against brute-force expansion (n <= 24)
    Verify(AnalyzeArgs),
    /// Augment a graph with hyperedge nodes and an expander
    Rewire(RewireArgs),
    /// Train a GIN on Tree-NeighborsMatch
    Train(TrainArgs),
    /// Time generation and eigensolves against graph size
    Bench(BenchArgs),
    /// Re-run the command echoed in an earlier output file
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Edgelist,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// Nodes per side
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rejection-sample until the graph is Ramanujan
    #[arg(long)]
    pub ramanujan: bool,
    #[arg(long, default_value_t = 1000)]
    pub max_retries: usize,
    #[arg(long, default_value_t = 200)]
    pub max_ramanujan_attempts: usize,
    /// Keep disconnected samples (connectivity is required by default for k >= 2)
    #[arg(long)]
    pub allow_disconnected: bool,
    #[arg(long, default_value_t = spectral::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, short)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    /// Graph JSON, bipartite expander JSON or edge list
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, default_value_t = spectral::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, short)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RewireArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub layers: usize,
    #[arg(long)]
    pub ramanujan: bool,
    #[arg(long, default_value_t = 1000)]
    pub max_retries: usize,
    #[arg(long, short)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Defaults to depth + 1
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// 0 trains on the full dataset each step
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub dataset_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated seeds run in parallel; overrides --seed
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub rewire: bool,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Summation)]
    pub mode: ModeArg,
    #[arg(long)]
    pub ramanujan: bool,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    pub optimizer: OptimizerArg,
    /// 0 disables gradient clipping
    #[arg(long, default_value_t = 1.0)]
    pub clip_norm: f64,
    /// With --rewire, also train the plain model on the same seeds
    #[arg(long)]
    pub compare_plain: bool,
    /// Per-epoch metrics CSV
    #[arg(long)]
    #[serde(skip)]
    pub metrics: Option<PathBuf>,
    #[arg(long, short)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Learned,
    Summation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Side sizes n; graphs have 2n vertices
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, short)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Default)]
pub struct ReplayArgs {
    /// Output file of an earlier run
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

/// Payload of one command; `metrics` is the training CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub main: String,
    pub metrics: Option<String>,
}

#[derive(Serialize)]
struct Envelope<'a, P: Serialize> {
    #[serde(flatten)]
    payload: P,
    config: &'a Command,
    tool_version: &'static str,
}

fn envelope<P: Serialize>(payload: P, cmd: &Command) -> String {
    to_compact(&Envelope {
        payload,
        config: cmd,
        tool_version: TOOL_VERSION,
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Graph JSON, bipartite JSON (its 2n-vertex graph) or an edge list.
pub fn load_graph(path: &Path) -> Result<Graph> {
    let text = read(path)?;
    if !text.trim_start().starts_with('{') {
        return Ok(Graph::from_edge_list(&text, None)?);
    }
    #[derive(Deserialize)]
    struct Tag {
        format: String,
    }
    let tag: Tag = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    match tag.format.as_str() {
        GRAPH_FORMAT => Ok(Graph::from_json(&text)?),
        BIPARTITE_FORMAT => Ok(BipartiteExpander::from_json(&text)?.graph().clone()),
        REWIRED_FORMAT => Err(CliError::Input(format!(
            "{}: rewired instances are not accepted here; pass the original graph",
            path.display()
        ))),
        other => Err(CliError::Input(format!("{}: unknown format {other:?}", path.display()))),
    }
}

fn generate(args: &GenerateArgs, cmd: &Command) -> Result<Rendered> {
    let cfg = GeneratorConfig {
        max_matching_retries: args.max_retries,
        max_ramanujan_attempts: args.max_ramanujan_attempts,
        require_connected: args.k >= 2 && !args.allow_disconnected,
        tolerance: args.tolerance,
        ramanujan: args.ramanujan,
        ..GeneratorConfig::new(args.n, args.k, args.seed)
    };
    let b = if args.ramanujan {
        construct::ramanujan_bipartite::<f64>(&cfg)?.expander
    } else {
        construct::k_regular_bipartite(&cfg)?
    };
    let main = match args.format {
        Format::Json => envelope(b.file(), cmd),
        Format::Edgelist => format!(
            "# config: {}\n# tool_version: {TOOL_VERSION}\n{}",
            to_compact(cmd),
            b.graph().to_edge_list()
        ),
    };
    Ok(Rendered { main, metrics: None })
}

fn rewire(args: &RewireArgs, cmd: &Command) -> Result<Rendered> {
    let g = load_graph(&args.input)?;
    let cfg = GeneratorConfig {
        max_matching_retries: args.max_retries,
        ramanujan: args.ramanujan,
        ..GeneratorConfig::new(g.n(), args.k, args.seed)
    };
    let inst = rewire::augment(&g, &cfg, args.layers)?;
    Ok(Rendered {
        main: envelope(inst.file(), cmd),
        metrics: None,
    })
}

impl TrainArgs {
    pub fn train_config(&self, seed: u64, rewire: bool) -> TrainConfig<f64> {
        TrainConfig {
            depth: self.depth,
            num_layers: self.layers.unwrap_or(self.depth + 1),
            hidden_dim: self.hidden,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            dataset_size: self.dataset_size,
            seed,
            rewire,
            expander_k: self.k,
            hyperedge_mode: match self.mode {
                ModeArg::Learned => HyperedgeMode::Learned,
                ModeArg::Summation => HyperedgeMode::Summation,
            },
            ramanujan: self.ramanujan,
            optimizer: match self.optimizer {
                OptimizerArg::Sgd => Optimizer::Sgd,
                OptimizerArg::Adam => Optimizer::Adam,
            },
            clip_norm: self.clip_norm,
        }
    }

    /// `(seed, rewired)` pairs in output order.
    fn runs(&self) -> Vec<(u64, bool)> {
        let seeds = self.seeds.clone().unwrap_or_else(|| vec![self.seed]);
        seeds
            .into_iter()
            .flat_map(|s| {
                let mut v = vec![(s, self.rewire)];
                if self.rewire && self.compare_plain {
                    v.push((s, false));
                }
                v
            })
            .collect()
    }
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    model: &'static str,
    parameter_count: usize,
    final_loss: f64,
    final_accuracy: f64,
    /// First epoch whose training accuracy reached 1.
    first_full_accuracy_epoch: Option<usize>,
}

fn model_name(rewired: bool) -> &'static str {
    if rewired {
        "rewired"
    } else {
        "plain"
    }
}

fn train(args: &TrainArgs, cmd: &Command) -> Result<Rendered> {
    let runs = args.runs();
    let configs: Vec<TrainConfig<f64>> = runs.iter().map(|&(s, r)| args.train_config(s, r)).collect();
    for c in &configs {
        c.validate()?;
    }
    // Independent runs share nothing; each is deterministic on its own.
    let reports: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || gnn::train(c))).collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    let reports = reports.into_iter().collect::<std::result::Result<Vec<_>, _>>()?;

    let mut summaries = Vec::with_capacity(runs.len());
    let mut csv = format!("# config: {}\n# tool_version: {TOOL_VERSION}\n", to_compact(cmd));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "model", "epoch", "loss", "accuracy"]).unwrap();
    for (&(seed, rewired), r) in runs.iter().zip(&reports) {
        for m in &r.history {
            w.write_record([
                seed.to_string(),
                model_name(rewired).to_string(),
                m.epoch.to_string(),
                format!("{:.16e}", m.loss),
                format!("{:.16e}", m.accuracy),
            ])
            .unwrap();
        }
        summaries.push(RunSummary {
            seed,
            model: model_name(rewired),
            parameter_count: r.model.param_count(),
            final_loss: r.final_loss,
            final_accuracy: r.final_accuracy,
            first_full_accuracy_epoch: r.history.iter().position(|m| m.accuracy == 1.0),
        });
    }
    csv.push_str(std::str::from_utf8(&w.into_inner().expect("in-memory writer")).unwrap());

    #[derive(Serialize)]
    struct Summary {
        runs: Vec<RunSummary>,
    }
    Ok(Rendered {
        main: envelope(Summary { runs: summaries }, cmd),
        metrics: Some(csv),
    })
}

#[derive(Serialize)]
struct BenchRow {
    n: usize,
    vertices: usize,
    generate_seconds: f64,
    eigensolve_seconds: f64,
    /// Eigensolve time divided by vertices³, in nanoseconds.
    eigensolve_ns_per_cubed_vertex: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn bench(args: &BenchArgs, cmd: &Command) -> Result<Rendered> {
    if args.repeats == 0 {
        return Err(CliError::Input("--repeats must be positive".into()));
    }
    let mut rows = Vec::new();
    for &n in &args.sizes {
        let mut gen_t = Vec::new();
        let mut eig_t = Vec::new();
        for r in 0..args.repeats {
            let cfg = GeneratorConfig::new(n, args.k, construct::mix_seed(args.seed, r as u64));
            let t = Instant::now();
            let b = construct::k_regular_bipartite(&cfg)?;
            gen_t.push(t.elapsed().as_secs_f64());
            let t = Instant::now();
            spectral::adjacency_eigenvalues::<f64>(b.graph(), spectral::DEFAULT_TOLERANCE)?;
            eig_t.push(t.elapsed().as_secs_f64());
        }
        let eig = median(eig_t);
        rows.push(BenchRow {
            n,
            vertices: 2 * n,
            generate_seconds: median(gen_t),
            eigensolve_seconds: eig,
            eigensolve_ns_per_cubed_vertex: eig * 1e9 / (2.0 * n as f64).powi(3),
        });
    }
    #[derive(Serialize)]
    struct Table {
        rows: Vec<BenchRow>,
    }
    Ok(Rendered {
        main: envelope(Table { rows }, cmd),
        metrics: None,
    })
}

/// Runs one command in-process and returns its payload.
pub fn execute(cmd: &Command) -> Result<Rendered> {
    let plain = |main| Ok(Rendered { main, metrics: None });
    match cmd {
        Command::Generate(a) => generate(a, cmd),
        Command::Analyze(a) => {
            let g = load_graph(&a.input)?;
            plain(envelope(spectral::analyze::<f64>(&g, a.tolerance)?, cmd))
        }
        Command::Verify(a) => {
            let g = load_graph(&a.input)?;
            plain(envelope(oracle::verify_bounds::<f64>(&g, a.tolerance)?, cmd))
        }
        Command::Rewire(a) => rewire(a, cmd),
        Command::Train(a) => train(a, cmd),
        Command::Bench(a) => bench(a, cmd),
        Command::Replay(a) => execute(&echoed_command(&read(&a.config)?)?),
    }
}

/// Extracts the echoed command from a JSON payload or from a
/// `# config: …` comment line (edge lists, metrics CSV).
pub fn echoed_command(text: &str) -> Result<Command> {
    let json = if text.trim_start().starts_with('{') {
        #[derive(Deserialize)]
        struct WithConfig {
            config: serde_json::Value,
        }
        let w: WithConfig =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("no echoed config: {e}")))?;
        w.config
    } else {
        let line = text
            .lines()
            .find_map(|l| l.strip_prefix("# config: "))
            .ok_or_else(|| CliError::Input("no `# config:` line".into()))?;
        serde_json::from_str(line).map_err(|e| CliError::Input(format!("bad config line: {e}")))?
    };
    serde_json::from_value(json).map_err(|e| CliError::Input(format!("bad echoed config: {e}")))
}

fn output_paths(cmd: &Command) -> (Option<&Path>, Option<&Path>) {
    match cmd {
        Command::Generate(a) => (a.output.as_deref(), None),
        Command::Analyze(a) | Command::Verify(a) => (a.output.as_deref(), None),
        Command::Rewire(a) => (a.output.as_deref(), None),
        Command::Train(a) => (a.output.as_deref(), a.metrics.as_deref()),
        Command::Bench(a) => (a.output.as_deref(), None),
        Command::Replay(a) => (a.output.as_deref(), a.metrics.as_deref()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// Parses `args`, runs the command and writes its outputs. Returns the
/// process exit code.
pub fn run<I, A>(args: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    let result = execute(&cli.command).and_then(|r| {
        let (out, metrics) = output_paths(&cli.command);
        let mut main = r.main;
        if !main.ends_with('\n') {
            main.push('\n');
        }
        match out {
            Some(p) => write(p, &main)?,
            None => {
                let _ = stdout.write_all(main.as_bytes());
            }
        }
        if let (Some(p), Some(csv)) = (metrics, r.metrics) {
            write(p, &csv)?;
        }
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let mut msg = String::new();
            let _ = writeln!(msg, "error: {e}");
            let _ = stderr.write_all(msg.as_bytes());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("hyperexpand").chain(args.iter().copied()))
            .unwrap()
            .command
    }

    #[test]
    fn echo_round_trips_through_json() {
        for args in [
            &["generate", "--n", "8", "--k", "3", "--tolerance", "0.1", "-o", "x.json"][..],
            &["train", "--seeds", "1,2,3", "--lr", "0.3", "--mode", "learned", "--metrics", "m.csv"],
            &["bench", "--sizes", "4,5"],
        ] {
            let cmd = parse(args);
            let echoed = echoed_command(&format!("{{\"config\":{}}}", to_compact(&cmd))).unwrap();
            // Output paths are not echoed.
            let (out, metrics) = output_paths(&echoed);
            assert!(out.is_none() && metrics.is_none());
            assert_eq!(to_compact(&echoed), to_compact(&cmd));
        }
    }

    #[test]
    fn echo_from_comment_line() {
        let cmd = parse(&["generate", "--n", "4", "--k", "2", "--format", "edgelist"]);
        let text = format!("# config: {}\n# n=8\n0 4\n", to_compact(&cmd));
        assert_eq!(echoed_command(&text).unwrap(), cmd);
        assert!(echoed_command("0 1\n").is_err());
    }

    #[test]
    fn exit_codes() {
        let budget = CliError::Core(hyperexpand::Error::ConnectivityBudget { resamples: 3 });
        let numeric = CliError::Core(hyperexpand::Error::Diverged { epoch: 1, loss: f64::NAN });
        assert_eq!(budget.exit_code(), 2);
        assert_eq!(numeric.exit_code(), 3);
        assert_eq!(CliError::Input("x".into()).exit_code(), 1);
        assert_eq!(CliError::Core(hyperexpand::Error::NotRegular).exit_code(), 1);
    }

    #[test]
    fn compare_plain_pairs_runs() {
        let Command::Train(a) = parse(&["train", "--rewire", "--compare-plain", "--seeds", "3,1"]) else {
            unreachable!()
        };
        assert_eq!(a.runs(), vec![(3, true), (3, false), (1, true), (1, false)]);
        assert_eq!(a.train_config(1, true).num_layers, 2);
    }
}
