//! Simulated-user experiment: personas drive the clarification loop against a
//! catalog and every run is scored on rank-1 equality with the ground truth.

mod distractors;

pub use distractors::{
    blueprint, blueprint_id, experiment_catalog, generate_distractors, ssr_ground_truth_facets,
    DistractorError, SKELETON_SPEC,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ingest_catalog, CatalogError};
use crate::clock::ManualClock;
use crate::cost::{Rates, ReferenceFigures, REFERENCE_MEDIANS};
use crate::dialogue::{AgentAction, LlmAdapter, SlotSchema};
use crate::embedding::{build_index_with, Embedder, EmbeddingError, VectorIndex};
use crate::exec::Exec;
use crate::pipeline::Engine;

/// Reply used for any slot a persona has no answer for.
pub const UNCERTAIN_ANSWER: &str = "not sure";

/// Simulated time between two messages of a run.
const THINK_TIME_MS: u64 = 1_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("no personas given")]
    NoPersonas,
    #[error("n_runs must be at least 1")]
    NoRuns,
    #[error("no run records to report")]
    EmptyRecords,
    #[error("{path}: {reason}")]
    Config { path: String, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub opening_paraphrase: String,
    /// Answer per slot; a missing slot is answered with [`UNCERTAIN_ANSWER`].
    #[serde(default)]
    pub slot_answers: BTreeMap<String, String>,
    pub ground_truth: String,
}

impl Persona {
    pub fn answer(&self, slot: &str) -> &str {
        self.slot_answers
            .get(slot)
            .map(String::as_str)
            .unwrap_or(UNCERTAIN_ANSWER)
    }
}

pub fn load_personas(path: &Path) -> Result<Vec<Persona>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Config {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| EvalError::Config {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub persona: String,
    pub success: bool,
    pub turns: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
    pub chosen: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub n_runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median_turns: u32,
    pub median_input_tokens: u64,
    pub median_output_tokens: u64,
    pub median_cost_usd: f64,
}

/// Lower median: `sorted[(n - 1) / 2]`.
pub fn lower_median<T: Clone>(values: &[T], cmp: impl Fn(&T, &T) -> std::cmp::Ordering) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(cmp);
    Some(v[(v.len() - 1) / 2].clone())
}

impl ExperimentSummary {
    pub fn from_records(records: &[RunRecord]) -> Result<Self, EvalError> {
        if records.is_empty() {
            return Err(EvalError::EmptyRecords);
        }
        let successes = records.iter().filter(|r| r.success).count();
        let turns: Vec<u32> = records.iter().map(|r| r.turns).collect();
        let input: Vec<u64> = records.iter().map(|r| r.input_tokens).collect();
        let output: Vec<u64> = records.iter().map(|r| r.output_tokens).collect();
        let cost: Vec<f64> = records.iter().map(|r| r.cost_usd).collect();
        Ok(ExperimentSummary {
            n_runs: records.len(),
            successes,
            success_rate: successes as f64 / records.len() as f64,
            median_turns: lower_median(&turns, Ord::cmp).unwrap_or(0),
            median_input_tokens: lower_median(&input, Ord::cmp).unwrap_or(0),
            median_output_tokens: lower_median(&output, Ord::cmp).unwrap_or(0),
            median_cost_usd: lower_median(&cost, f64::total_cmp).unwrap_or(0.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub catalog_dir: PathBuf,
    pub personas_path: PathBuf,
    pub n_runs: usize,
    pub success_floor: f64,
}

impl ExperimentConfig {
    /// Read a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let err = |reason: String| EvalError::Config {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if !(0.0..=1.0).contains(&cfg.success_floor) {
            return Err(err(format!("success_floor {} outside [0, 1]", cfg.success_floor)));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.catalog_dir.is_relative() {
            cfg.catalog_dir = base.join(&cfg.catalog_dir);
        }
        if cfg.personas_path.is_relative() {
            cfg.personas_path = base.join(&cfg.personas_path);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub n_runs: usize,
    pub exec: Exec,
    pub schema: SlotSchema,
    pub rates: Rates,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            n_runs: 10,
            exec: Exec::Sequential,
            schema: SlotSchema::default(),
            rates: Rates::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    pub records: Vec<RunRecord>,
}

/// Ingest `catalog_dir`, build the index and run every persona.
pub fn run_experiment(
    catalog_dir: &Path,
    personas: &[Persona],
    embedder: Arc<dyn Embedder>,
    adapter: Arc<dyn LlmAdapter>,
    opts: &RunOptions,
) -> Result<ExperimentOutcome, EvalError> {
    let (catalog, report) = ingest_catalog(catalog_dir)?;
    if !report.rejected.is_empty() {
        tracing::warn!(rejected = report.rejected.len(), "catalog ingested with rejections");
    }
    let index = build_index_with(&catalog, embedder.as_ref(), opts.exec)?;
    run_on_index(Arc::new(index), personas, embedder, adapter, opts)
}

/// Run `opts.n_runs` sessions, cycling through `personas`, on a prebuilt index.
pub fn run_on_index(
    index: Arc<VectorIndex>,
    personas: &[Persona],
    embedder: Arc<dyn Embedder>,
    adapter: Arc<dyn LlmAdapter>,
    opts: &RunOptions,
) -> Result<ExperimentOutcome, EvalError> {
    if personas.is_empty() {
        return Err(EvalError::NoPersonas);
    }
    if opts.n_runs == 0 {
        return Err(EvalError::NoRuns);
    }
    let mut engine = Engine::new(index, embedder, adapter);
    engine.schema = opts.schema.clone();
    engine.rates = opts.rates;
    let runs: Vec<usize> = (0..opts.n_runs).collect();
    let records = opts
        .exec
        .map(&runs, |&i| run_one(&engine, i, &personas[i % personas.len()]));
    let summary = ExperimentSummary::from_records(&records)?;
    Ok(ExperimentOutcome { summary, records })
}

fn run_one(engine: &Engine, run_index: usize, persona: &Persona) -> RunRecord {
    let clock = ManualClock::new(0);
    let mut record = RunRecord {
        run_index,
        persona: persona.name.clone(),
        success: false,
        turns: 0,
        input_tokens: 0,
        output_tokens: 0,
        cost_usd: 0.0,
        chosen: None,
        error: None,
    };
    let (mut conv, mut reply) = match engine.start(None, &persona.opening_paraphrase, &clock) {
        Ok(x) => x,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    while let AgentAction::AskQuestion { slot, .. } = &reply.action {
        clock.advance(THINK_TIME_MS);
        match engine.respond(&mut conv, persona.answer(slot), &clock) {
            Ok(r) => reply = r,
            Err(e) => {
                record.error = Some(e.to_string());
                break;
            }
        }
    }
    let m = conv.metrics(&format!("run-{run_index}"), engine.rates);
    record.turns = m.turns;
    record.input_tokens = m.input_tokens;
    record.output_tokens = m.output_tokens;
    record.cost_usd = m.cost_usd;
    record.chosen = conv.recommendation.as_ref().map(|r| r.chosen.clone());
    if record.error.is_none() {
        record.error = conv.retrieval_error.clone();
    }
    record.success = record.chosen.as_deref() == Some(persona.ground_truth.as_str());
    record
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub summary: ExperimentSummary,
    pub records: Vec<RunRecord>,
    pub reference: ReferenceFigures,
}

fn kilo(tokens: f64) -> String {
    format!("{:.2}k", tokens / 1000.0)
}

/// Table with one row for our medians and one for the reference figures.
pub fn render_table(summary: &ExperimentSummary, reference: &ReferenceFigures) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16}{:>8}{:>12}{:>12}{:>12}{:>10}",
        "", "Prompts", "Input tok", "Output tok", "Cost USD", "Success"
    );
    let _ = writeln!(
        out,
        "{:<16}{:>8}{:>12}{:>12}{:>12.4}{:>10}",
        "RAG (measured)",
        summary.median_turns,
        kilo(summary.median_input_tokens as f64),
        kilo(summary.median_output_tokens as f64),
        summary.median_cost_usd,
        format!("{}/{}", summary.successes, summary.n_runs),
    );
    let _ = writeln!(
        out,
        "{:<16}{:>8}{:>12}{:>12}{:>12.3}{:>10}",
        "RAG (reference)",
        reference.prompts,
        format!("{:.2}k", reference.input_tokens_k),
        format!("{:.2}k", reference.output_tokens_k),
        reference.cost_usd,
        format!("{:.0}%", reference.success_rate * 100.0),
    );
    out.push_str(
        "Token counts come from the scripted adapter's approximate tokenizer and are not \
expected to match the hosted-model reference row. Human-study results are not reproduced.\n",
    );
    out
}

/// Write the JSON report to `path` and the table next to it with a `.txt`
/// extension. Returns the table path.
pub fn write_report(
    summary: &ExperimentSummary,
    records: &[RunRecord],
    path: &Path,
) -> Result<PathBuf, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let report = Report {
        summary: summary.clone(),
        records: records.to_vec(),
        reference: REFERENCE_MEDIANS,
    };
    std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    let table_path = path.with_extension("txt");
    std::fs::write(&table_path, render_table(summary, &REFERENCE_MEDIANS))?;
    Ok(table_path)
}

pub fn read_report(path: &Path) -> Result<Report, EvalError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, turns: u32, input: u64, success: bool) -> RunRecord {
        RunRecord {
            run_index: i,
            persona: format!("p{i}"),
            success,
            turns,
            input_tokens: input,
            output_tokens: input / 10,
            cost_usd: input as f64 * 1e-6,
            chosen: None,
            error: None,
        }
    }

    #[test]
    fn lower_median_even_and_odd() {
        assert_eq!(lower_median(&[4, 1, 3, 2], Ord::cmp), Some(2));
        assert_eq!(lower_median(&[5, 1, 3], Ord::cmp), Some(3));
        assert_eq!(lower_median::<u32>(&[], Ord::cmp), None);
    }

    #[test]
    fn summary_from_records() {
        let s = ExperimentSummary::from_records(&[
            rec(0, 3, 100, true),
            rec(1, 4, 300, false),
            rec(2, 2, 200, true),
            rec(3, 3, 400, true),
        ])
        .unwrap();
        assert_eq!(s.successes, 3);
        assert_eq!(s.success_rate, 0.75);
        assert_eq!(s.median_turns, 3);
        assert_eq!(s.median_input_tokens, 200);
        assert!(matches!(
            ExperimentSummary::from_records(&[]),
            Err(EvalError::EmptyRecords)
        ));
    }

    #[test]
    fn report_round_trip_and_empty_error() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![rec(0, 3, 3200, true)];
        let summary = ExperimentSummary::from_records(&records).unwrap();
        let path = dir.path().join("report.json");
        let table = write_report(&summary, &records, &path).unwrap();
        let back = read_report(&path).unwrap();
        assert_eq!(back.summary, summary);
        assert_eq!(back.records, records);
        let text = std::fs::read_to_string(table).unwrap();
        assert!(text.contains("RAG (measured)"));
        assert!(text.contains("3.20k"));
        assert!(matches!(
            write_report(&summary, &[], &path),
            Err(EvalError::EmptyRecords)
        ));
    }

    #[test]
    fn missing_answer_is_uncertain() {
        let p = Persona {
            name: "p".into(),
            opening_paraphrase: "x".into(),
            slot_answers: BTreeMap::from([("stack".into(), "Node".into())]),
            ground_truth: "t".into(),
        };
        assert_eq!(p.answer("stack"), "Node");
        assert_eq!(p.answer("cicd"), "not sure");
    }
}
