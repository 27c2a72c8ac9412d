use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use glassflow_core::graph::{export_dot, export_topology, BlockKind};
use glassflow_core::models::{gen_synthetic, write_csv};
use glassflow_core::xai::{explain_block, explain_pipeline, ExplainParams, Method};
use glassflow_server::agent::config::DEFAULT_MAX_TOOL_ROUNDS;
use glassflow_server::agent::{AgentConfig, ChatCompletionsEndpoint, ChatEndpoint, MockEndpoint};
use glassflow_server::service::{serve, AgentRuntime, ServeError, ServeOptions};
use glassflow_server::SecretString;
use serde_json::json;

use crate::error::CliError;
use crate::source::{self, DataSource};
use crate::ExportFormat;

/// Writes `bytes` to the file at `out`, or to stdout for `-`.
fn write_out(out: &str, bytes: &[u8]) -> Result<(), CliError> {
    if out == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(CliError::runtime)
    } else {
        std::fs::write(out, bytes).map_err(|e| CliError::Runtime(format!("cannot write {out}: {e}")))
    }
}

fn with_newline(mut s: String) -> Vec<u8> {
    s.push('\n');
    s.into_bytes()
}

pub struct ServeCmd {
    pub host: IpAddr,
    pub port: u16,
    pub graph: Option<PathBuf>,
    pub data: DataSource,
    pub ui_dir: Option<PathBuf>,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub agent_script: Option<PathBuf>,
    pub max_tool_rounds: Option<usize>,
}

fn agent_runtime(cmd: &ServeCmd) -> Result<Option<AgentRuntime>, CliError> {
    if let Some(path) = &cmd.agent_script {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read agent script {}: {e}", path.display())))?;
        let mock = MockEndpoint::from_json(&text)
            .map_err(|e| CliError::Usage(format!("agent script {}: {e}", path.display())))?;
        tracing::info!(script = %path.display(), replies = mock.remaining(), "agent: scripted mock endpoint");
        return Ok(Some(AgentRuntime {
            endpoint: Arc::new(mock),
            max_tool_rounds: cmd.max_tool_rounds.unwrap_or(DEFAULT_MAX_TOOL_ROUNDS),
        }));
    }
    let Some(mut cfg) = AgentConfig::from_env().map_err(CliError::usage)? else {
        tracing::info!("agent: not configured; /chat answers 503");
        return Ok(None);
    };
    if let Some(rounds) = cmd.max_tool_rounds {
        cfg.max_tool_rounds = rounds;
    }
    let max_tool_rounds = cfg.max_tool_rounds;
    tracing::info!(model = %cfg.model_name, "agent: chat-completion endpoint configured");
    let endpoint: Arc<dyn ChatEndpoint> = Arc::new(ChatCompletionsEndpoint::new(cfg).map_err(CliError::usage)?);
    Ok(Some(AgentRuntime {
        endpoint,
        max_tool_rounds,
    }))
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
            .expect("install SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

pub fn serve_cmd(cmd: ServeCmd) -> Result<(), CliError> {
    if cmd.max_tool_rounds == Some(0) {
        return Err(CliError::Usage("max_tool_rounds must be at least 1".into()));
    }
    if let Some(dir) = &cmd.ui_dir {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("ui directory {} does not exist", dir.display())));
        }
    }
    let demo = source::build(cmd.graph.as_deref(), &cmd.data)?;
    tracing::info!(blocks = demo.graph().len(), train_rows = demo.train.len(), "pipeline ready");
    let token = std::env::var(&cmd.token_env)
        .ok()
        .filter(|t| !t.is_empty())
        .map(SecretString::new);
    if token.is_some() {
        tracing::info!(variable = %cmd.token_env, "bearer token required");
    }
    let opts = ServeOptions {
        ui_dir: cmd.ui_dir.clone(),
        token,
        agent: agent_runtime(&cmd)?,
    };
    let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    rt.block_on(async {
        let addr = SocketAddr::new(cmd.host, cmd.port);
        let handle = serve(addr, Arc::new(demo.pipeline), opts).await.map_err(|e| match e {
            e @ ServeError::BindFailure { .. } => CliError::runtime(e),
        })?;
        write_out("-", &with_newline(format!("listening on {}", handle.base_url())))?;
        shutdown_signal().await;
        tracing::info!("shutting down");
        handle.close().await.map_err(CliError::runtime)
    })
}

pub fn run_cmd(graph: Option<&Path>, data: &DataSource, input: &Path, out: &str) -> Result<(), CliError> {
    let demo = source::build(graph, data)?;
    let rows = source::read_rows(input, source::input_schema(demo.graph())?)?;
    let mut records = Vec::with_capacity(rows.len());
    for (i, x) in rows.iter().enumerate() {
        let report = demo
            .pipeline
            .execute(x)
            .map_err(|e| CliError::Runtime(format!("row {i}: {e}")))?;
        records.push(json!({"row": i, "outcome": report.outcome, "trace": report.events}));
    }
    tracing::info!(rows = records.len(), "executed");
    write_out(out, &with_newline(serde_json::to_string_pretty(&records).map_err(CliError::runtime)?))
}

pub struct ExplainCmd {
    pub graph: Option<PathBuf>,
    pub data: DataSource,
    pub block: String,
    pub method: Method,
    pub instance: String,
    pub row: usize,
    pub params: ExplainParams,
}

/// Prints the explanation exactly as the API would serialize it.
pub fn explain_cmd(cmd: ExplainCmd) -> Result<(), CliError> {
    let demo = source::build(cmd.graph.as_deref(), &cmd.data)?;
    let graph = demo.graph();
    let features = source::parse_instance(&cmd.instance, cmd.row, graph)?;
    let explanation = if cmd.block == "pipeline" {
        let x = source::input_vector(graph, &features)?;
        explain_pipeline(graph, cmd.method, &x, &cmd.params).map_err(CliError::usage)?
    } else {
        let spec = graph.spec(&cmd.block).map_err(CliError::usage)?;
        if spec.kind != BlockKind::Model {
            return Err(CliError::Usage(format!(
                "block `{}` is a {}; explain needs a Model block or `pipeline`",
                cmd.block, spec.kind
            )));
        }
        let x = source::model_vector(graph, &cmd.block, &features)?;
        explain_block(graph, &cmd.block, cmd.method, &x, &cmd.params).map_err(CliError::usage)?
    };
    if let Some(r) = explanation.fidelity.efficiency_residual {
        tracing::info!("efficiency residual {r:.3e}");
    }
    if let Some(r2) = explanation.fidelity.r_squared {
        tracing::info!("surrogate r2 {r2:.4}");
    }
    write_out("-", &with_newline(serde_json::to_string(&explanation).map_err(CliError::runtime)?))
}

pub fn export_graph_cmd(graph: Option<&Path>, data: &DataSource, format: ExportFormat, out: &str) -> Result<(), CliError> {
    let demo = source::build(graph, data)?;
    let text = match format {
        ExportFormat::Dot => export_dot(demo.graph()),
        ExportFormat::Json => {
            with_newline_str(serde_json::to_string_pretty(&export_topology(demo.graph())).map_err(CliError::runtime)?)
        }
    };
    write_out(out, text.as_bytes())
}

fn with_newline_str(mut s: String) -> String {
    s.push('\n');
    s
}

pub fn gen_data_cmd(rows: usize, seed: u64, out: &str) -> Result<(), CliError> {
    if rows == 0 {
        return Err(CliError::Usage("--rows must be at least 1".into()));
    }
    let data = gen_synthetic(rows, seed).map_err(CliError::usage)?;
    let mut buf = Vec::new();
    write_csv(&data, &mut buf).map_err(CliError::runtime)?;
    write_out(out, &buf)
}
