use std::collections::BTreeMap;
use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use tplrag_core::catalog::CatalogError;
use tplrag_core::clock::ManualClock;
use tplrag_core::dialogue::{AgentAction, DialogueError, SlotSchema};
use tplrag_core::embedding::build_index;
use tplrag_core::eval::{
    load_personas, render_table, run_experiment, write_report, ExperimentConfig, RunOptions,
    UNCERTAIN_ANSWER,
};
use tplrag_core::{ingest_catalog, Engine, Exec, VectorIndex};
use tplrag_core::cost::REFERENCE_MEDIANS;
use tplrag_service::{AppState, ServiceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmbedderArg {
    Reference,
    Remote,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AdapterArg {
    Scripted,
    Remote,
}

/// Template recommender: ingest a catalog, chat, serve the HTTP API or run
/// the persona experiment.
#[derive(Debug, Parser)]
#[command(name = "tplrag", version)]
struct Cli {
    /// `key = value` settings file (TPLRAG_* environment variables override it).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Template catalog directory.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    embedder: Option<EmbedderArg>,
    #[arg(long, global = true, value_enum)]
    adapter: Option<AdapterArg>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest a catalog directory and write an index snapshot.
    Ingest {
        /// Catalog directory (defaults to --catalog).
        dir: Option<PathBuf>,
        #[arg(long)]
        index: PathBuf,
    },
    /// Line-oriented chat on stdin/stdout; prints metrics and the recommendation last.
    Chat {
        /// Index snapshot; without it the index is built from --catalog.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Slot schema JSON (defaults to the built-in schema).
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// Run the persona experiment described by a JSON config.
    Eval {
        experiment: PathBuf,
        /// Also write the JSON report here (the table goes next to it as .txt).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Run personas in parallel.
        #[arg(long)]
        parallel: bool,
    },
}

/// Failure with a specific process exit code.
#[derive(Debug)]
struct Exit(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Exit {
    fn from(e: E) -> Self {
        Exit(1, e.into())
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("TPLRAG_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn settings(cli: &Cli, extra: &[(&str, Option<String>)]) -> Result<ServiceConfig> {
    let mut overrides = BTreeMap::new();
    if let Some(c) = &cli.catalog {
        overrides.insert("catalog_dir".to_string(), c.display().to_string());
    }
    if let Some(e) = cli.embedder {
        let v = match e {
            EmbedderArg::Reference => "reference",
            EmbedderArg::Remote => "remote",
        };
        overrides.insert("embedder".to_string(), v.to_string());
    }
    if let Some(a) = cli.adapter {
        let v = match a {
            AdapterArg::Scripted => "scripted",
            AdapterArg::Remote => "remote",
        };
        overrides.insert("adapter".to_string(), v.to_string());
    }
    for (k, v) in extra {
        if let Some(v) = v {
            overrides.insert(k.to_string(), v.clone());
        }
    }
    Ok(ServiceConfig::load_with(
        cli.config.as_deref(),
        |k| std::env::var(k).ok(),
        &overrides,
    )?)
}

fn run(cli: Cli) -> Result<(), Exit> {
    match &cli.command {
        Command::Ingest { dir, index } => cmd_ingest(&cli, dir.clone(), index),
        Command::Chat { index, schema } => cmd_chat(&cli, index.as_deref(), schema.as_deref()),
        Command::Serve { listen, event_log } => cmd_serve(&cli, listen.clone(), event_log.clone()),
        Command::Eval {
            experiment,
            report,
            parallel,
        } => cmd_eval(&cli, experiment, report.as_deref(), *parallel),
    }
}

fn cmd_ingest(cli: &Cli, dir: Option<PathBuf>, out: &Path) -> Result<(), Exit> {
    let cfg = settings(cli, &[])?;
    let dir = dir
        .or(cfg.catalog_dir.clone())
        .ok_or_else(|| anyhow!("no catalog directory given"))?;
    let embedder = cfg.build_embedder()?;
    let (catalog, report) = match ingest_catalog(&dir) {
        Ok(x) => x,
        Err(e @ CatalogError::EmptyCatalog(_)) => {
            if cli.format == Format::Json {
                println!("{}", json!({ "indexed": 0, "error": e.to_string() }));
            }
            return Err(Exit(1, e.into()));
        }
        Err(e) => return Err(e.into()),
    };
    let index = build_index(&catalog, embedder.as_ref())?;
    index
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    match cli.format {
        Format::Json => println!(
            "{}",
            json!({
                "indexed": index.len(),
                "index": out,
                "embedder": index.embedder_id(),
                "accepted": report.accepted,
                "rejected": report.rejected,
            })
        ),
        Format::Text => {
            for r in &report.rejected {
                println!("rejected {}: {}", r.path, r.reason);
            }
            println!("{} templates indexed", index.len());
        }
    }
    Ok(())
}

fn cmd_chat(cli: &Cli, index_path: Option<&Path>, schema_path: Option<&Path>) -> Result<(), Exit> {
    let cfg = settings(cli, &[])?;
    let embedder = cfg.build_embedder()?;
    let adapter = cfg.build_adapter()?;
    let index = match (index_path, &cfg.catalog_dir) {
        (Some(p), _) => VectorIndex::load(p, embedder.as_ref())
            .with_context(|| format!("loading {}", p.display()))?,
        (None, Some(dir)) => build_index(&ingest_catalog(dir)?.0, embedder.as_ref())?,
        (None, None) => return Err(anyhow!("either --index or --catalog is required").into()),
    };
    let schema = match schema_path {
        Some(p) => Some(
            SlotSchema::from_json(&std::fs::read_to_string(p).with_context(|| p.display().to_string())?)
                .with_context(|| p.display().to_string())?,
        ),
        None => None,
    };
    let mut engine = Engine::new(Arc::new(index), embedder, adapter);
    engine.turn_cap = cfg.turn_cap;
    engine.rates = cfg.rates;

    let echo = !std::io::stdin().is_terminal();
    let json_out = cli.format == Format::Json;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut say = |speaker: &str, text: &str| -> std::io::Result<()> {
        if json_out {
            writeln!(out, "{}", json!({ "speaker": speaker, "text": text }))?;
        } else {
            writeln!(out, "{speaker}: {text}")?;
        }
        out.flush()
    };
    let adapter_exit = |e: DialogueError| match e {
        DialogueError::Adapter(_) => Exit(2, e.into()),
        other => Exit(1, other.into()),
    };

    // Manual clock: chat output is byte-stable for identical input.
    let clock = ManualClock::new(0);
    let mut lines = std::io::stdin().lock().lines();
    let mut next_line = || -> Result<Option<String>> {
        for line in lines.by_ref() {
            let line = line?;
            if !line.trim().is_empty() {
                return Ok(Some(line));
            }
        }
        Ok(None)
    };

    let first = next_line()?.ok_or_else(|| anyhow!("no input on stdin"))?;
    if echo {
        say("user", &first)?;
    }
    let (mut conv, mut reply) = engine.start(schema, &first, &clock).map_err(adapter_exit)?;
    let mut eof = false;
    while let AgentAction::AskQuestion { text, .. } = &reply.action {
        say("agent", text)?;
        let answer = if eof { None } else { next_line()? };
        // End of input: every remaining question is answered as unknown.
        let answer = answer.unwrap_or_else(|| {
            eof = true;
            UNCERTAIN_ANSWER.to_string()
        });
        if echo || eof {
            say("user", &answer)?;
        }
        reply = engine.respond(&mut conv, &answer, &clock).map_err(adapter_exit)?;
    }
    say("agent", &reply.agent_text)?;
    let metrics = conv.metrics("cli", engine.rates);
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", serde_json::to_string(&metrics).map_err(anyhow::Error::from)?)?;
    match (&reply.recommendation, &reply.retrieval_error) {
        (Some(rec), _) => {
            writeln!(stdout, "{}", serde_json::to_string(rec).map_err(anyhow::Error::from)?)?;
            Ok(())
        }
        (None, err) => {
            let msg = err.clone().unwrap_or_else(|| "no recommendation".into());
            writeln!(stdout, "{}", json!({ "error": msg }))?;
            Err(Exit(1, anyhow!(msg)))
        }
    }
}

fn cmd_serve(cli: &Cli, listen: Option<String>, event_log: Option<PathBuf>) -> Result<(), Exit> {
    let cfg = settings(
        cli,
        &[
            ("listen", listen),
            ("event_log", event_log.map(|p| p.display().to_string())),
        ],
    )?;
    let embedder = cfg.build_embedder()?;
    let adapter = cfg.build_adapter()?;
    let listen = cfg.listen.clone();
    // Built before the runtime exists: remote backends use blocking HTTP.
    let state = AppState::new(cfg, embedder, adapter, Arc::new(tplrag_core::clock::SystemClock))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&listen)
            .await
            .with_context(|| format!("binding {listen}"))?;
        eprintln!("listening on {}", listener.local_addr()?);
        tplrag_service::serve(state, listener).await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}

fn cmd_eval(cli: &Cli, path: &Path, report: Option<&Path>, parallel: bool) -> Result<(), Exit> {
    let cfg = settings(cli, &[])?;
    let experiment = ExperimentConfig::load(path)?;
    let personas = load_personas(&experiment.personas_path)?;
    let opts = RunOptions {
        n_runs: experiment.n_runs,
        exec: if parallel { Exec::Parallel } else { Exec::Sequential },
        rates: cfg.rates,
        ..RunOptions::default()
    };
    let started = Instant::now();
    let outcome = run_experiment(
        &experiment.catalog_dir,
        &personas,
        cfg.build_embedder()?,
        cfg.build_adapter()?,
        &opts,
    )?;
    let elapsed = started.elapsed();
    let s = &outcome.summary;
    if let Some(p) = report {
        write_report(s, &outcome.records, p)?;
    }
    match cli.format {
        Format::Json => println!(
            "{}",
            serde_json::to_string(&json!({
                "summary": s,
                "records": outcome.records,
                "reference": REFERENCE_MEDIANS,
                "success_floor": experiment.success_floor,
            }))
            .map_err(anyhow::Error::from)?
        ),
        Format::Text => {
            for r in &outcome.records {
                println!(
                    "run {:>2}  {:<12} {:<5} turns={} in={} out={} chosen={}{}",
                    r.run_index,
                    r.persona,
                    if r.success { "ok" } else { "FAIL" },
                    r.turns,
                    r.input_tokens,
                    r.output_tokens,
                    r.chosen.as_deref().unwrap_or("-"),
                    r.error.as_deref().map(|e| format!(" error={e}")).unwrap_or_default(),
                );
            }
            print!("{}", render_table(s, &REFERENCE_MEDIANS));
            println!("success {}/{}", s.successes, s.n_runs);
            println!("median turns {}", s.median_turns);
            eprintln!("wall time {:.3}s", elapsed.as_secs_f64());
        }
    }
    if s.success_rate < experiment.success_floor {
        return Err(Exit(
            1,
            anyhow!(
                "success rate {:.2} is below the floor {:.2}",
                s.success_rate,
                experiment.success_floor
            ),
        ));
    }
    Ok(())
}
