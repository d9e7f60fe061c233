//! Run records and their on-disk form: a directory per run holding the
//! config snapshot, summary, per-operation and monitor CSVs, plus a SQL
//! script that loads the same rows into any relational database.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::Config;
use crate::controller::{OpKind, TestResult};
use crate::error::{Error, Result};
use crate::monitor::{self, MonitorSample};
use crate::rng;

pub const CONFIG_FILE: &str = "config.properties";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const OPERATIONS_FILE: &str = "operations.csv";
pub const MONITOR_FILE: &str = "monitor.csv";
pub const EXPORT_FILE: &str = "export.sql";
pub const WORKLOAD_FILE: &str = "workload.csv";

pub const SUMMARY_HEADER: [&str; 19] = [
    "test",
    "op_kind",
    "ops",
    "successes",
    "failures",
    "points",
    "min_ms",
    "max_ms",
    "mean_ms",
    "middle_avg_ms",
    "p1_ms",
    "p5_ms",
    "p50_ms",
    "p90_ms",
    "p95_ms",
    "p99_ms",
    "throughput_points_per_s",
    "wall_ms",
    "space_bytes",
];

pub const OPERATIONS_HEADER: [&str; 10] = [
    "test",
    "client_id",
    "seq",
    "op_kind",
    "start_unix_ms",
    "cost_time_ms",
    "points",
    "success",
    "error",
    "detail",
];

/// Columns of operations.csv that depend on the clock rather than the seed.
pub const TIMING_COLUMNS: [&str; 2] = ["start_unix_ms", "cost_time_ms"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Ingest,
    Query,
    Both,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ingest" => Ok(Mode::Ingest),
            "query" => Ok(Mode::Query),
            "both" => Ok(Mode::Both),
            _ => Err(Error::Query(format!(
                "unknown mode {s:?}, expected ingest, query or both"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ingest => "ingest",
            Mode::Query => "query",
            Mode::Both => "both",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    pub config: Config,
    pub mode: Mode,
    pub ingest: Option<TestResult>,
    pub query: Option<TestResult>,
    /// Set once the record has been written.
    pub dir: Option<PathBuf>,
}

impl RunRecord {
    pub fn results(&self) -> impl Iterator<Item = &TestResult> {
        self.ingest.iter().chain(self.query.iter())
    }

    pub fn failures(&self) -> u64 {
        self.results().map(|r| r.failures).sum()
    }

    pub fn monitor_samples(&self) -> impl Iterator<Item = &MonitorSample> {
        self.results().flat_map(|r| r.monitor.iter())
    }
}

/// 32-bit digest of the full config snapshot.
pub fn config_hash(cfg: &Config) -> u32 {
    let text = cfg.to_properties();
    let h = text
        .bytes()
        .fold(rng::mix(cfg.seed, text.len() as u64), |h, b| {
            rng::mix(h, b as u64)
        });
    (h >> 32) as u32
}

/// `<UTC timestamp>-<config hash>`; [`persist`] appends `-N` on collision.
pub fn new_run_id(cfg: &Config) -> String {
    format!(
        "{}-{:08x}",
        chrono::Utc::now().format("%Y%m%dT%H%M%S%3fZ"),
        config_hash(cfg)
    )
}

fn f3(v: f64) -> String {
    format!("{v:.3}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// summary.csv rows, one per operation kind exercised by each test.
pub fn summary_rows(run: &RunRecord) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in run.results() {
        let mut kinds: Vec<OpKind> = r.operations.iter().map(|o| o.kind).collect();
        kinds.sort();
        kinds.dedup();
        for k in kinds {
            let ops: Vec<_> = r.operations.iter().filter(|o| o.kind == k).collect();
            let ok = ops.iter().filter(|o| o.success).count();
            let points: u64 = ops.iter().filter(|o| o.success).map(|o| o.points).sum();
            let mut row = vec![
                r.kind.to_string(),
                k.to_string(),
                ops.len().to_string(),
                ok.to_string(),
                (ops.len() - ok).to_string(),
                points.to_string(),
            ];
            match r.stats.get(&k) {
                Some(s) => row.extend(
                    [
                        s.min,
                        s.max,
                        s.mean,
                        s.middle_average,
                        s.p1,
                        s.p5,
                        s.p50,
                        s.p90,
                        s.p95,
                        s.p99,
                    ]
                    .map(f3),
                ),
                None => row.extend(std::iter::repeat_n(String::new(), 10)),
            }
            row.push(r.throughput.map(f3).unwrap_or_default());
            row.push(f3(r.wall_ms));
            row.push(opt(r.space_bytes));
            rows.push(row);
        }
    }
    rows
}

pub fn operation_rows(run: &RunRecord) -> Vec<Vec<String>> {
    run.results()
        .flat_map(|r| {
            r.operations.iter().map(move |o| {
                vec![
                    r.kind.to_string(),
                    o.client_id.to_string(),
                    o.seq.to_string(),
                    o.kind.to_string(),
                    o.start_unix_ms.to_string(),
                    f3(o.cost_ms),
                    o.points.to_string(),
                    o.success.to_string(),
                    o.error.clone().unwrap_or_default(),
                    o.detail.clone(),
                ]
            })
        })
        .collect()
}

pub fn monitor_rows(run: &RunRecord) -> Vec<Vec<String>> {
    run.monitor_samples()
        .map(MonitorSample::csv_fields)
        .collect()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn sql_literal(v: &str, text: bool) -> String {
    if v.is_empty() && !text {
        "NULL".into()
    } else if text {
        format!("'{}'", v.replace('\'', "''"))
    } else {
        v.to_string()
    }
}

fn sql_table(
    out: &mut String,
    table: &str,
    cols: &[(&str, &str)],
    run_id: &str,
    rows: &[Vec<String>],
) {
    use std::fmt::Write as _;
    let decl: Vec<String> = cols.iter().map(|(c, t)| format!("{c} {t}")).collect();
    writeln!(
        out,
        "CREATE TABLE IF NOT EXISTS {table} (run_id TEXT, {});",
        decl.join(", ")
    )
    .unwrap();
    let names: Vec<&str> = cols.iter().map(|(c, _)| *c).collect();
    for r in rows {
        let vals: Vec<String> = r
            .iter()
            .zip(cols)
            .map(|(v, (_, t))| sql_literal(v, *t == "TEXT"))
            .collect();
        writeln!(
            out,
            "INSERT INTO {table} (run_id, {}) VALUES ({}, {});",
            names.join(", "),
            sql_literal(run_id, true),
            vals.join(", ")
        )
        .unwrap();
    }
}

fn typed<'a>(header: &[&'a str], text_cols: &[&str]) -> Vec<(&'a str, &'static str)> {
    header
        .iter()
        .map(|c| {
            (
                *c,
                if text_cols.contains(c) {
                    "TEXT"
                } else {
                    "DOUBLE PRECISION"
                },
            )
        })
        .collect()
}

/// SQL script recreating the run's tables: `bench_config`, `bench_summary`,
/// `bench_operations` and `bench_monitor`, each keyed by `run_id`.
pub fn export_sql(run: &RunRecord) -> String {
    let mut out = String::new();
    let config_rows: Vec<Vec<String>> = run
        .config
        .entries()
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), v])
        .chain(std::iter::once(vec!["MODE".into(), run.mode.to_string()]))
        .collect();
    sql_table(
        &mut out,
        "bench_config",
        &[("key", "TEXT"), ("value", "TEXT")],
        &run.run_id,
        &config_rows,
    );
    sql_table(
        &mut out,
        "bench_summary",
        &typed(&SUMMARY_HEADER, &["test", "op_kind"]),
        &run.run_id,
        &summary_rows(run),
    );
    sql_table(
        &mut out,
        "bench_operations",
        &typed(
            &OPERATIONS_HEADER,
            &["test", "op_kind", "success", "error", "detail"],
        ),
        &run.run_id,
        &operation_rows(run),
    );
    let mon_header: Vec<&str> = monitor::CSV_HEADER.split(',').collect();
    sql_table(
        &mut out,
        "bench_monitor",
        &typed(&mon_header, &["valid"]),
        &run.run_id,
        &monitor_rows(run),
    );
    out
}

/// Create `<dir>/<run_id>/` and write every run file into it. If the
/// directory already exists the id gets a `-N` suffix, so ids stay unique.
pub fn persist(run: &mut RunRecord, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let base = run.run_id.clone();
    let mut n = 1;
    let run_dir = loop {
        let p = dir.join(&run.run_id);
        match fs::create_dir(&p) {
            Ok(()) => break p,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                run.run_id = format!("{base}-{n}");
                n += 1;
            }
            Err(e) => return Err(Error::io(p, e)),
        }
    };
    let write = |name: &str, body: &str| {
        let p = run_dir.join(name);
        fs::File::create(&p)
            .and_then(|mut f| f.write_all(body.as_bytes()))
            .map_err(|e| Error::io(p, e))
    };
    write(CONFIG_FILE, &run.config.to_properties())?;
    write_csv(
        &run_dir.join(SUMMARY_FILE),
        &SUMMARY_HEADER,
        &summary_rows(run),
    )?;
    write_csv(
        &run_dir.join(OPERATIONS_FILE),
        &OPERATIONS_HEADER,
        &operation_rows(run),
    )?;
    let mon_header: Vec<&str> = monitor::CSV_HEADER.split(',').collect();
    write_csv(&run_dir.join(MONITOR_FILE), &mon_header, &monitor_rows(run))?;
    write(EXPORT_FILE, &export_sql(run))?;
    run.dir = Some(run_dir.clone());
    Ok(run_dir)
}

/// operations.csv text with the timing columns blanked, for comparing runs.
pub fn strip_timing(operations_csv: &str) -> Result<String> {
    let mut r = csv::Reader::from_reader(operations_csv.as_bytes());
    let bad = |e: csv::Error| Error::MonitorRecord(e.to_string());
    let header = r.headers().map_err(bad)?.clone();
    let drop: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| TIMING_COLUMNS.contains(h))
        .map(|(i, _)| i)
        .collect();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&header).map_err(bad)?;
    for rec in r.records() {
        let rec = rec.map_err(bad)?;
        let fields: Vec<&str> = rec
            .iter()
            .enumerate()
            .map(|(i, f)| if drop.contains(&i) { "" } else { f })
            .collect();
        w.write_record(fields).map_err(bad)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::MonitorRecord(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
