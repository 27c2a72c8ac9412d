//! `glassflow`: serve a pipeline over HTTP, run instances through it offline,
//! explain model decisions, export the graph and generate demo data.
//!
//! Exit codes: 0 success (domain rejections included), 2 usage or
//! configuration error, 3 runtime or environment failure. Logs go to stderr,
//! data to stdout or files.

mod commands;
mod error;
mod settings;
mod source;

use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use glassflow_core::demo::DEMO_SEED;
use glassflow_core::xai::{ExplainParams, Method};
use serde::Deserialize;
use tracing_subscriber::EnvFilter;

use crate::commands::{ExplainCmd, ServeCmd};
use crate::error::CliError;
use crate::settings::{pick, FileConfig};
use crate::source::DataSource;

const DEFAULT_TOKEN_ENV: &str = "GLASSFLOW_TOKEN";

#[derive(Debug, Parser)]
#[command(name = "glassflow", version, about = "Inspectable, controllable ML decision pipelines")]
struct Cli {
    /// TOML or JSON file of flag defaults (same keys as the flags, dashes as
    /// underscores). Explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the models and serve the REST API (and the UI directory, if given).
    Serve(ServeArgs),
    /// Execute every row of a CSV file through the pipeline.
    Run(RunArgs),
    /// Print the feature attribution of a model block or the whole pipeline.
    Explain(ExplainArgs),
    /// Print the pipeline graph as Graphviz DOT or as a graph document.
    ExportGraph(ExportArgs),
    /// Write a synthetic heart-disease dataset as CSV.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Graph document (JSON); the built-in demo graph when omitted.
    #[arg(long, value_name = "PATH")]
    graph: Option<PathBuf>,
    /// Training data CSV, label in the last column.
    #[arg(long, value_name = "PATH", conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Train on generated data instead (default: 1000 rows, seed 42).
    #[arg(long, num_args = 2, value_names = ["ROWS", "SEED"])]
    synthetic: Option<Vec<u64>>,
}

impl SourceArgs {
    fn resolve(self, file: &FileConfig) -> Result<(Option<PathBuf>, DataSource), CliError> {
        let graph = self.graph.or_else(|| file.graph.clone());
        let data = DataSource::resolve(self.data, self.synthetic, file.data.clone(), file.synthetic)?;
        Ok((graph, data))
    }
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Interface to bind [default: 127.0.0.1].
    #[arg(long)]
    host: Option<IpAddr>,
    /// Port to bind; 0 picks a free one [default: 8080].
    #[arg(long)]
    port: Option<u16>,
    /// Directory of static UI assets served at `/`.
    #[arg(long, value_name = "PATH")]
    ui_dir: Option<PathBuf>,
    /// Environment variable holding the API bearer token; no token, no
    /// authentication [default: GLASSFLOW_TOKEN].
    #[arg(long, value_name = "VAR")]
    token_env: Option<String>,
    /// JSON array of scripted assistant replies; serves the chat endpoint
    /// from this script instead of a live model.
    #[arg(long, value_name = "PATH")]
    agent_script: Option<PathBuf>,
    /// Tool-call rounds per chat message [default: 8].
    #[arg(long)]
    max_tool_rounds: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// CSV of instances (a `label` column is ignored).
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Output file; `-` for stdout [default: -].
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Lime,
    #[value(alias = "kernel_shap")]
    #[serde(alias = "kernel_shap")]
    Shap,
    #[value(alias = "exact_shapley")]
    #[serde(alias = "exact_shapley")]
    Exact,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Lime => Method::Lime,
            MethodArg::Shap => Method::KernelShap,
            MethodArg::Exact => Method::ExactShapley,
        }
    }
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Model block id, or `pipeline` for the released decision.
    #[arg(long)]
    block: Option<String>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// `name=value,...`, a JSON object, or a CSV file (see --row).
    #[arg(long)]
    instance: Option<String>,
    /// Record of the instance CSV to explain [default: 0].
    #[arg(long)]
    row: Option<usize>,
    /// Seeds background sampling and the solver [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// LIME perturbations or KernelSHAP coalitions.
    #[arg(long)]
    samples: Option<usize>,
    /// Background rows [default: 100].
    #[arg(long)]
    background: Option<usize>,
    /// KernelSHAP: enumerate every coalition.
    #[arg(long)]
    exhaustive: bool,
    /// Class to explain; the predicted class when omitted.
    #[arg(long)]
    target_class: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Dot,
    Json,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// [default: dot]
    #[arg(long, value_enum)]
    format: Option<ExportFormat>,
    /// Output file; `-` for stdout [default: -].
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// [default: 1000]
    #[arg(long)]
    rows: Option<usize>,
    /// [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; `-` for stdout [default: -].
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, CliError> {
    flag.or(file)
        .ok_or_else(|| CliError::Usage(format!("--{name} is required (flag or config file)")))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Serve(a) => {
            let (graph, data) = a.source.resolve(&file)?;
            commands::serve_cmd(ServeCmd {
                host: pick(a.host, file.host.as_deref().map(parse_host).transpose()?, IpAddr::from([127, 0, 0, 1])),
                port: pick(a.port, file.port, 8080),
                graph,
                data,
                ui_dir: a.ui_dir.or(file.ui_dir),
                token_env: pick(a.token_env, file.token_env, DEFAULT_TOKEN_ENV.to_string()),
                agent_script: a.agent_script.or(file.agent_script),
                max_tool_rounds: a.max_tool_rounds.or(file.max_tool_rounds),
            })
        }
        Command::Run(a) => {
            let (graph, data) = a.source.resolve(&file)?;
            let input = required(a.input, file.input, "input")?;
            commands::run_cmd(graph.as_deref(), &data, &input, &pick(a.out, file.out, "-".into()))
        }
        Command::Explain(a) => {
            let (graph, data) = a.source.resolve(&file)?;
            commands::explain_cmd(ExplainCmd {
                graph,
                data,
                block: required(a.block, file.block, "block")?,
                method: required(a.method, file.method, "method")?.into(),
                instance: required(a.instance, file.instance, "instance")?,
                row: pick(a.row, file.row, 0),
                params: ExplainParams {
                    seed: pick(a.seed, file.seed, 0),
                    n_samples: a.samples.or(file.samples),
                    exhaustive: a.exhaustive || file.exhaustive.unwrap_or(false),
                    background_size: a.background.or(file.background),
                    target_class: a.target_class.or(file.target_class),
                    ..ExplainParams::default()
                },
            })
        }
        Command::ExportGraph(a) => {
            let (graph, data) = a.source.resolve(&file)?;
            let format = pick(a.format, file.format, ExportFormat::Dot);
            commands::export_graph_cmd(graph.as_deref(), &data, format, &pick(a.out, file.out, "-".into()))
        }
        Command::GenData(a) => commands::gen_data_cmd(
            pick(a.rows, file.rows, 1000),
            pick(a.seed, file.seed, DEMO_SEED),
            &pick(a.out, file.out, "-".into()),
        ),
    }
}

fn parse_host(s: &str) -> Result<IpAddr, CliError> {
    s.parse().map_err(|_| CliError::Usage(format!("host `{s}` is not an IP address")))
}

/// Parses the command line; errors print the usage of the subcommand
/// involved and exit with 2.
fn parse_args() -> Result<Cli, ExitCode> {
    let err = match Cli::try_parse() {
        Ok(cli) => return Ok(cli),
        Err(e) => e,
    };
    if !err.use_stderr() {
        // --help and --version
        let _ = err.print();
        return Err(ExitCode::SUCCESS);
    }
    let _ = err.print();
    let mut cmd = Cli::command();
    let sub = std::env::args().skip(1).find(|a| cmd.find_subcommand(a).is_some());
    let usage = match sub.and_then(|s| cmd.find_subcommand_mut(&s).map(|c| c.render_usage())) {
        Some(u) => u,
        None => cmd.render_usage(),
    };
    eprintln!("\n{usage}");
    Err(ExitCode::from(2))
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("see `glassflow --help` for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
