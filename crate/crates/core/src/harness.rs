//! Checkpointed evaluation runs.
//!
//! A run writes one JSON row per completed example to `rows.jsonl` in the
//! output directory, flushing each row before moving on. Restarting with
//! `resume` skips ids already present. Each invocation also writes the rows
//! it produced to `segments/NNN.jsonl` so that cost accounting can be
//! reconstructed per segment.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::backend::{cot_answer, BackendConfig, BackendKind, RandomSelector, Selector};
use crate::controller::{answer_question, SearchConfig};
use crate::dataset::{load_dataset, ExampleRecord};
use crate::metrics::{
    cardinality_split, depth_diagnostics, hits_at_1, set_f1, CardinalitySplit, DepthDiagnostics,
    ExampleScore,
};
use crate::stats::{
    align_by_id, bootstrap_ci, paired_comparison, PairedComparison, BOOTSTRAP_RNG, DEFAULT_LEVEL,
    DEFAULT_RESAMPLES,
};
use crate::Error;

pub const ROWS_FILE: &str = "rows.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PARTIAL_SUMMARY_FILE: &str = "summary.partial.json";
pub const SEGMENTS_DIR: &str = "segments";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Bounded path context search.
    Bpc,
    /// Uniform-random relation and tail choices, model extraction.
    Random,
    /// Question-only answering without graph access.
    Cot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub example_id: String,
    pub predicted_answers: Vec<String>,
    pub hits_at_1: u8,
    pub f1: f64,
    pub gold_count: usize,
    pub retained_paths: Vec<String>,
    pub final_depth: usize,
    pub llm_calls: usize,
    pub input_tokens: usize,
    pub output_tokens: usize,
    pub duration_secs: f64,
    pub error: Option<String>,
    pub failure_flag: bool,
}

impl RunRow {
    pub fn score(&self) -> ExampleScore {
        ExampleScore {
            example_id: self.example_id.clone(),
            hits_at_1: self.hits_at_1,
            f1: self.f1,
            gold_count: self.gold_count,
            predicted_count: self.predicted_answers.len(),
            failure_flag: self.failure_flag,
            depth: self.final_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub method: Method,
    pub search: SearchConfig,
    pub backend: BackendConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub limit: Option<usize>,
    pub resume: bool,
    pub workers: usize,
    pub summary_interval: usize,
}

impl RunConfig {
    pub fn new(dataset_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset_path: dataset_path.into(),
            method: Method::Bpc,
            search: SearchConfig::default(),
            backend: BackendConfig::default(),
            seed: 42,
            output_dir: output_dir.into(),
            limit: None,
            resume: false,
            workers: 1,
            summary_interval: 50,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.method != Method::Cot {
            self.search.validate()?;
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.backend.kind == BackendKind::Random {
            return Err(Error::Config(
                "the random backend cannot extract answers; use --method random with an \
                 answering backend"
                    .into(),
            ));
        }
        self.backend.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTotals {
    pub llm_calls: usize,
    pub input_tokens: usize,
    pub output_tokens: usize,
    pub duration_secs: f64,
    pub rows: usize,
}

impl CostTotals {
    fn add(&mut self, row: &RunRow) {
        self.llm_calls += row.llm_calls;
        self.input_tokens += row.input_tokens;
        self.output_tokens += row.output_tokens;
        self.duration_secs += row.duration_secs;
        self.rows += 1;
    }

    pub fn of(rows: &[RunRow]) -> Self {
        let mut c = Self::default();
        rows.iter().for_each(|r| c.add(r));
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub examples: usize,
    pub hits_at_1: f64,
    pub f1: f64,
    pub f1_ci_low: f64,
    pub f1_ci_high: f64,
    pub f1_ci_half_width: f64,
    pub cost: CostTotals,
    pub error_count: usize,
    pub failure_count: usize,
    pub empty_gold_count: usize,
    pub seed: u64,
    pub bootstrap_rng: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<CostTotals>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Means, sums and the bootstrap F1 interval over `rows`.
pub fn aggregate_summary(rows: &[RunRow], seed: u64) -> RunSummary {
    let n = rows.len();
    let mean = |f: &dyn Fn(&RunRow) -> f64| {
        if n == 0 {
            0.0
        } else {
            rows.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let f1s: Vec<f64> = rows.iter().map(|r| r.f1).collect();
    let (low, high, half) = if f1s.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let ci = bootstrap_ci(&f1s, DEFAULT_RESAMPLES, DEFAULT_LEVEL, seed);
        (ci.low, ci.high, ci.half_width())
    };
    RunSummary {
        examples: n,
        hits_at_1: mean(&|r| f64::from(r.hits_at_1)),
        f1: mean(&|r| r.f1),
        f1_ci_low: low,
        f1_ci_high: high,
        f1_ci_half_width: half,
        cost: CostTotals::of(rows),
        error_count: rows.iter().filter(|r| r.error.is_some()).count(),
        failure_count: rows.iter().filter(|r| r.failure_flag).count(),
        empty_gold_count: rows.iter().filter(|r| r.gold_count == 0).count(),
        seed,
        bootstrap_rng: BOOTSTRAP_RNG.to_owned(),
        complete: true,
        config: None,
        segments: Vec::new(),
        notes: Vec::new(),
    }
}

/// Reads a row file. A final line without a trailing newline that fails to
/// parse is treated as an interrupted write and ignored.
pub fn read_rows(path: &Path) -> Result<Vec<RunRow>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (body, torn) = split_torn_tail(&text);
    if let Some(tail) = torn {
        if serde_json::from_str::<RunRow>(tail).is_err() {
            warn!("{}: ignoring incomplete last row", path.display());
        } else {
            return parse_rows(path, &text);
        }
    }
    parse_rows(path, body)
}

fn split_torn_tail(text: &str) -> (&str, Option<&str>) {
    if text.is_empty() || text.ends_with('\n') {
        return (text, None);
    }
    match text.rfind('\n') {
        Some(i) => (&text[..=i], Some(&text[i + 1..])),
        None => ("", Some(text)),
    }
}

fn parse_rows(path: &Path, text: &str) -> Result<Vec<RunRow>, Error> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Dataset {
                path: path.to_owned(),
                line: i + 1,
                message: format!("invalid row: {e}"),
            })
        })
        .collect()
}

/// Scores one example against its gold answers.
#[allow(clippy::too_many_arguments)]
fn build_row(
    example: &ExampleRecord,
    answers: Vec<String>,
    failure: bool,
    retained: Vec<String>,
    depth: usize,
    cost: (usize, usize, usize),
    error: Option<String>,
    duration_secs: f64,
) -> RunRow {
    RunRow {
        example_id: example.id.clone(),
        hits_at_1: hits_at_1(&answers, &example.gold_answers),
        f1: set_f1(&answers, &example.gold_answers),
        gold_count: example.gold_answers.len(),
        failure_flag: failure || answers.is_empty(),
        predicted_answers: answers,
        retained_paths: retained,
        final_depth: depth,
        llm_calls: cost.0,
        input_tokens: cost.1,
        output_tokens: cost.2,
        duration_secs,
        error,
    }
}

/// Routing and extraction backends for one run.
pub struct Backends {
    pub method: Method,
    pub router: Box<dyn Selector>,
    pub extractor: Box<dyn Selector>,
}

impl Backends {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, Error> {
        let mut backend_cfg = cfg.backend.clone();
        backend_cfg.seed = cfg.seed;
        let extractor = backend_cfg.build()?;
        let router: Box<dyn Selector> = match cfg.method {
            Method::Random => Box::new(RandomSelector::new(cfg.seed)),
            Method::Bpc | Method::Cot => backend_cfg.build()?,
        };
        Ok(Self {
            method: cfg.method,
            router,
            extractor,
        })
    }
}

/// Processes one example. Panics inside the controller are caught and
/// recorded as row errors.
pub fn process_example(
    example: &ExampleRecord,
    search: &SearchConfig,
    backends: &Backends,
) -> RunRow {
    let started = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(|| match backends.method {
        Method::Cot => {
            let (parsed, resp) =
                cot_answer(&example.id, &example.question, backends.extractor.as_ref());
            (
                parsed.answers,
                parsed.failure || resp.error.is_some(),
                Vec::new(),
                0,
                (1, resp.input_token_estimate, resp.output_token_estimate),
                resp.error,
            )
        }
        Method::Bpc | Method::Random => {
            let out = answer_question(
                example,
                search,
                backends.router.as_ref(),
                backends.extractor.as_ref(),
            );
            let t = out.trace;
            let error = (!t.errors.is_empty()).then(|| t.errors.join("; "));
            (
                out.answers,
                out.failure,
                t.retained_paths.iter().map(|p| p.render_chain()).collect(),
                t.final_depth,
                (t.llm_calls, t.input_tokens, t.output_tokens),
                error,
            )
        }
    }));
    let secs = started.elapsed().as_secs_f64();
    match result {
        Ok((answers, failure, retained, depth, cost, error)) => build_row(
            example, answers, failure, retained, depth, cost, error, secs,
        ),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "example processing panicked".to_owned());
            build_row(
                example,
                Vec::new(),
                true,
                Vec::new(),
                0,
                (0, 0, 0),
                Some(msg),
                secs,
            )
        }
    }
}

struct Checkpoint {
    rows: File,
    segment: File,
    rows_path: PathBuf,
}

impl Checkpoint {
    fn append(&mut self, row: &RunRow) -> Result<(), Error> {
        let mut line = serde_json::to_string(row).map_err(|e| Error::Format(e.to_string()))?;
        line.push('\n');
        self.rows
            .write_all(line.as_bytes())
            .and_then(|_| self.rows.sync_data())
            .map_err(|e| Error::io(&self.rows_path, e))?;
        // The segment file is an accounting copy; the row file is authoritative.
        if let Err(e) = self.segment.write_all(line.as_bytes()) {
            warn!("segment write failed: {e}");
        }
        Ok(())
    }
}

/// Drops a torn final line left by an interrupted write.
fn repair_row_file(path: &Path) -> Result<(), Error> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let (body, torn) = split_torn_tail(&text);
    if torn.is_some() {
        warn!("{}: truncating incomplete last row", path.display());
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn next_segment_path(dir: &Path) -> Result<PathBuf, Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut n = 1;
    loop {
        let p = dir.join(format!("{n:03}.jsonl"));
        if !p.exists() {
            return Ok(p);
        }
        n += 1;
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs (or resumes) an evaluation and writes the final summary.
pub fn run_eval(cfg: &RunConfig) -> Result<RunSummary, Error> {
    cfg.validate()?;
    let backends = Backends::from_config(cfg)?;
    run_eval_with(cfg, &backends)
}

/// Like [`run_eval`] with caller-supplied backends.
pub fn run_eval_with(cfg: &RunConfig, backends: &Backends) -> Result<RunSummary, Error> {
    let mut examples = load_dataset(&cfg.dataset_path)?;
    if let Some(limit) = cfg.limit {
        examples.truncate(limit);
    }
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let rows_path = out.join(ROWS_FILE);

    let mut done: HashSet<String> = HashSet::new();
    if rows_path.exists() {
        if !cfg.resume {
            return Err(Error::Config(format!(
                "{} already exists; pass resume to continue it",
                rows_path.display()
            )));
        }
        repair_row_file(&rows_path)?;
        for row in read_rows(&rows_path)? {
            if !done.insert(row.example_id.clone()) {
                return Err(Error::DuplicateId {
                    path: rows_path.clone(),
                    id: row.example_id,
                });
            }
        }
    }
    let pending: Vec<&ExampleRecord> = examples.iter().filter(|e| !done.contains(&e.id)).collect();
    info!(
        "{} examples, {} already complete, {} to run",
        examples.len(),
        examples.len() - pending.len(),
        pending.len()
    );

    if !pending.is_empty() {
        let open = |p: &Path| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| Error::io(p, e))
        };
        let segment_path = next_segment_path(&out.join(SEGMENTS_DIR))?;
        let mut checkpoint = Checkpoint {
            rows: open(&rows_path)?,
            segment: open(&segment_path)?,
            rows_path: rows_path.clone(),
        };
        let mut written = 0usize;
        let mut on_row = |row: RunRow| -> Result<(), Error> {
            checkpoint.append(&row)?;
            written += 1;
            if cfg.summary_interval > 0 && written.is_multiple_of(cfg.summary_interval) {
                let rows = read_rows(&rows_path)?;
                let mut partial = aggregate_summary(&rows, cfg.seed);
                partial.complete = false;
                write_json(&out.join(PARTIAL_SUMMARY_FILE), &partial)?;
                info!("{} rows, running F1 {:.3}", rows.len(), partial.f1);
            }
            Ok(())
        };
        process_in_order(&pending, cfg.workers, &cfg.search, backends, &mut on_row)?;
    }

    let rows = read_rows(&rows_path)?;
    let mut summary = aggregate_summary(&rows, cfg.seed);
    summary.complete = examples
        .iter()
        .all(|e| rows.iter().any(|r| r.example_id == e.id));
    summary.config = serde_json::to_value(cfg).ok();
    let segments_dir = out.join(SEGMENTS_DIR);
    if let Ok(entries) = fs::read_dir(&segments_dir) {
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths {
            summary.segments.push(CostTotals::of(&read_rows(&p)?));
        }
    }
    if summary.segments.len() > 1 {
        summary.notes.push(format!(
            "run assembled from {} checkpoint segments",
            summary.segments.len()
        ));
    }
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Runs examples on a worker pool and hands rows to `sink` in input order.
fn process_in_order(
    pending: &[&ExampleRecord],
    workers: usize,
    search: &SearchConfig,
    backends: &Backends,
    sink: &mut dyn FnMut(RunRow) -> Result<(), Error>,
) -> Result<(), Error> {
    if workers <= 1 {
        for ex in pending {
            sink(process_example(ex, search, backends))?;
        }
        return Ok(());
    }
    let next = AtomicUsize::new(0);
    let abort = std::sync::atomic::AtomicBool::new(false);
    thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<(usize, RunRow)>();
        for _ in 0..workers.min(pending.len()) {
            let tx = tx.clone();
            let next = &next;
            let abort = &abort;
            s.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(ex) = pending.get(i) else { break };
                if tx.send((i, process_example(ex, search, backends))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut buffer: BTreeMap<usize, RunRow> = BTreeMap::new();
        let mut expected = 0;
        for (i, row) in rx {
            buffer.insert(i, row);
            while let Some(row) = buffer.remove(&expected) {
                if let Err(e) = sink(row) {
                    abort.store(true, Ordering::Relaxed);
                    return Err(e);
                }
                expected += 1;
            }
        }
        Ok(())
    })
}

/// Summary of a final row file, optionally with costs reconstructed from
/// checkpoint segments.
///
/// Accuracy always comes from `rows_path`. When `cost_segments` is non-empty,
/// cost totals are the sums over those segment files instead, and a note
/// records the reconstruction.
pub fn summarize(
    rows_path: &Path,
    cost_segments: &[PathBuf],
    seed: u64,
) -> Result<RunSummary, Error> {
    let rows = read_rows(rows_path)?;
    let mut seen = HashSet::new();
    for r in &rows {
        if !seen.insert(r.example_id.as_str()) {
            return Err(Error::DuplicateId {
                path: rows_path.to_owned(),
                id: r.example_id.clone(),
            });
        }
    }
    let mut summary = aggregate_summary(&rows, seed);
    if !cost_segments.is_empty() {
        let mut total = CostTotals::default();
        let mut covered = HashSet::new();
        for p in cost_segments {
            let seg = read_rows(p)?;
            covered.extend(seg.iter().map(|r| r.example_id.clone()));
            let c = CostTotals::of(&seg);
            total.llm_calls += c.llm_calls;
            total.input_tokens += c.input_tokens;
            total.output_tokens += c.output_tokens;
            total.duration_secs += c.duration_secs;
            total.rows += c.rows;
            summary.segments.push(c);
        }
        let missing = rows
            .iter()
            .filter(|r| !covered.contains(&r.example_id))
            .count();
        summary.notes.push(format!(
            "cost reconstructed from {} segments ({} segment rows); accuracy from {}",
            cost_segments.len(),
            total.rows,
            rows_path.display()
        ));
        if missing > 0 {
            summary.notes.push(format!(
                "{missing} final rows are not covered by any segment"
            ));
        }
        summary.cost = total;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub paired: PairedComparison,
    pub cardinality: CardinalitySplit,
    pub depth_a: DepthDiagnostics,
    pub depth_b: DepthDiagnostics,
}

/// Paired diagnostics of run `a` against run `b` (deltas are a - b).
pub fn compare_runs(
    a: &Path,
    b: &Path,
    depth_limit: usize,
    seed: u64,
) -> Result<Comparison, Error> {
    let sa: Vec<ExampleScore> = read_rows(a)?.iter().map(RunRow::score).collect();
    let sb: Vec<ExampleScore> = read_rows(b)?.iter().map(RunRow::score).collect();
    compare_scores(&sa, &sb, depth_limit, seed)
}

pub fn compare_scores(
    a: &[ExampleScore],
    b: &[ExampleScore],
    depth_limit: usize,
    seed: u64,
) -> Result<Comparison, Error> {
    let paired = paired_comparison(a, b, DEFAULT_RESAMPLES, seed)?;
    let cardinality = cardinality_split(
        align_by_id(a, b)?
            .into_iter()
            .map(|(x, y)| (x.gold_count, x.f1 - y.f1)),
    );
    Ok(Comparison {
        paired,
        cardinality,
        depth_a: depth_diagnostics(a, depth_limit),
        depth_b: depth_diagnostics(b, depth_limit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, f1: f64, calls: usize) -> RunRow {
        RunRow {
            example_id: id.into(),
            predicted_answers: vec!["x".into()],
            hits_at_1: u8::from(f1 > 0.0),
            f1,
            gold_count: 1,
            retained_paths: vec![],
            final_depth: 1,
            llm_calls: calls,
            input_tokens: calls * 10,
            output_tokens: calls,
            duration_secs: 0.5,
            error: None,
            failure_flag: false,
        }
    }

    #[test]
    fn aggregate_means_and_sums() {
        let rows = vec![row("a", 0.4, 2), row("b", 0.6, 3)];
        let s = aggregate_summary(&rows, 42);
        assert!((s.f1 - 0.5).abs() < 1e-12);
        assert_eq!(s.cost.llm_calls, 5);
        assert_eq!(s.cost.input_tokens, 50);
        assert_eq!(s.cost.output_tokens, 5);
        assert!((s.cost.duration_secs - 1.0).abs() < 1e-12);
        assert!(s.f1_ci_low <= s.f1 && s.f1 <= s.f1_ci_high);
    }

    #[test]
    fn torn_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rows.jsonl");
        let good = serde_json::to_string(&row("a", 1.0, 1)).unwrap();
        fs::write(&p, format!("{good}\n{{\"example_id\":\"b\",\"pre")).unwrap();
        assert_eq!(read_rows(&p).unwrap().len(), 1);
        repair_row_file(&p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), format!("{good}\n"));
    }

    #[test]
    fn summarize_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rows.jsonl");
        let line = serde_json::to_string(&row("a", 1.0, 1)).unwrap();
        fs::write(&p, format!("{line}\n{line}\n")).unwrap();
        assert!(matches!(
            summarize(&p, &[], 1),
            Err(Error::DuplicateId { .. })
        ));
    }
}
