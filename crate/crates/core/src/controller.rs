//! Concurrent test execution: one worker thread and one adapter connection
//! per client, a start barrier, an optional monitor thread, and a
//! coordinator that samples database space and joins everything before
//! computing statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Barrier, Mutex};
use std::time::{Duration, Instant};

use crate::adapter::{AdapterFactory, TsdbAdapter};
use crate::config::{AdapterKind, Config};
use crate::error::{Error, Result};
use crate::ingestion::{Batch, ClientWorkload};
use crate::metrics::{self, LatencyStats};
use crate::monitor::{self, LocalProbe, MonitorSample, Probe};
use crate::query::{QueryGenerator, QueryType};
use crate::schema::{derive_schema, partition_devices, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestKind {
    Ingest,
    Query,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Ingest => "ingest",
            TestKind::Query => "query",
        })
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ingest" => Ok(TestKind::Ingest),
            "query" => Ok(TestKind::Query),
            _ => Err(Error::Query(format!("unknown test kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Ingest,
    Query(QueryType),
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpKind::Ingest => f.write_str("ingest"),
            OpKind::Query(q) => q.fmt(f),
        }
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ingest" {
            return Ok(OpKind::Ingest);
        }
        s.strip_prefix('Q')
            .and_then(|c| c.parse().ok())
            .and_then(QueryType::from_code)
            .map(OpKind::Query)
            .ok_or_else(|| Error::Query(format!("unknown op kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationRecord {
    pub client_id: usize,
    /// Position in the client's operation sequence, from 0.
    pub seq: u64,
    pub kind: OpKind,
    pub start_unix_ms: i64,
    /// Time to last byte in ms, rounded to microseconds.
    pub cost_ms: f64,
    /// Points written for ingestion, rows returned for queries.
    pub points: u64,
    pub success: bool,
    pub error: Option<String>,
    /// What was sent: `epoch=E devices=...` or the query descriptor text.
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct TestResult {
    pub kind: TestKind,
    pub config: Config,
    /// Sorted by `(client_id, seq)`.
    pub operations: Vec<OperationRecord>,
    /// Latency over successful operations, per operation kind.
    pub stats: BTreeMap<OpKind, LatencyStats>,
    /// Points per second; ingestion only, `None` when nothing succeeded.
    pub throughput: Option<f64>,
    /// Points written (ingestion) or rows returned (query) by successful ops.
    pub total_points: u64,
    /// Accumulated successful cost-time per client, in ms.
    pub per_client_ms: Vec<f64>,
    pub wall_ms: f64,
    pub failures: u64,
    /// `(unix_ms, used_bytes)`, first entry taken before workers start.
    pub space_samples: Vec<(i64, u64)>,
    pub space_bytes: Option<u64>,
    pub monitor: Vec<MonitorSample>,
}

impl TestResult {
    pub fn successes(&self) -> u64 {
        self.operations.len() as u64 - self.failures
    }
}

/// Round to whole microseconds and express in ms.
pub fn duration_ms(d: Duration) -> f64 {
    (d.as_nanos() as f64 / 1e3).round() / 1e3
}

fn now_ms() -> i64 {
    chrono::Utc::now().timestamp_millis()
}

/// The probe the controller uses when none is supplied: local `/proc`,
/// tracking this process when the database runs in-process.
pub fn default_probe(cfg: &Config) -> Box<dyn Probe> {
    let pid = (cfg.adapter == AdapterKind::Reference).then(std::process::id);
    Box::new(
        LocalProbe::new("/proc")
            .with_pid(pid)
            .with_data_dir(cfg.data_dir.as_ref().map(PathBuf::from)),
    )
}

pub fn run_ingestion_test(cfg: &Config, factory: &dyn AdapterFactory) -> Result<TestResult> {
    let probe = (cfg.monitor_interval > 0).then(|| default_probe(cfg));
    run_test(cfg, TestKind::Ingest, factory, probe)
}

pub fn run_query_test(cfg: &Config, factory: &dyn AdapterFactory) -> Result<TestResult> {
    let probe = (cfg.monitor_interval > 0).then(|| default_probe(cfg));
    run_test(cfg, TestKind::Query, factory, probe)
}

struct Progress {
    every: u64,
    done: AtomicU64,
    total: u64,
    kind: TestKind,
}

impl Progress {
    fn tick(&self) {
        let n = self.done.fetch_add(1, Ordering::Relaxed) + 1;
        if self.every > 0 && (n.is_multiple_of(self.every) || n == self.total) {
            log::info!("{} test: {n}/{} operations", self.kind, self.total);
        }
    }
}

/// Run one test. Adapter connections are all opened before any worker
/// starts, so a connection failure aborts cleanly; individual operation
/// failures are recorded and the test carries on.
pub fn run_test(
    cfg: &Config,
    kind: TestKind,
    factory: &dyn AdapterFactory,
    probe: Option<Box<dyn Probe>>,
) -> Result<TestResult> {
    cfg.validate()?;
    let cfg = Arc::new(cfg.clone());
    let schema = Arc::new(derive_schema(&cfg));
    let clients = cfg.client_number as usize;

    let mut coordinator = factory.connect(schema.clone())?;
    if kind == TestKind::Ingest && cfg.enable_cleanup {
        coordinator.cleanup()?;
    }
    coordinator.init_schema(&schema)?;
    let mut workers: Vec<Box<dyn TsdbAdapter>> = (0..clients)
        .map(|_| factory.connect(schema.clone()))
        .collect::<Result<_>>()?;

    let total_ops = match kind {
        TestKind::Ingest => expected_ingest_ops(&cfg),
        TestKind::Query => cfg.client_number * cfg.epoch,
    };
    let progress = Progress {
        every: cfg.progress_every,
        done: AtomicU64::new(0),
        total: total_ops,
        kind,
    };
    let data_dir = cfg.data_dir.as_ref().map(PathBuf::from);
    let used_space = |a: &mut Box<dyn TsdbAdapter>| {
        a.used_space()
            .or_else(|| data_dir.as_deref().and_then(monitor::dir_size))
    };
    let mut space_samples = Vec::new();
    if let Some(b) = used_space(&mut coordinator) {
        space_samples.push((now_ms(), b));
    }

    let monitor_samples = Mutex::new(Vec::new());
    let barrier = Barrier::new(clients + 1);
    let (stop_tx, stop_rx) = mpsc::channel::<()>();
    let poll = Duration::from_millis(cfg.monitor_interval.clamp(monitor::MIN_INTERVAL_MS, 1000));

    let (per_worker, wall) = std::thread::scope(|s| -> Result<_> {
        let monitor = probe.map(|mut p| {
            let samples = &monitor_samples;
            let interval = cfg.monitor_interval.max(monitor::MIN_INTERVAL_MS);
            s.spawn(move || {
                let mut sink = |x: MonitorSample| {
                    samples
                        .lock()
                        .map_err(|_| Error::MonitorRecord("sink poisoned".into()))?
                        .push(x);
                    Ok(())
                };
                monitor::run_monitor(interval, p.as_mut(), &mut sink, &stop_rx)
            })
        });
        let handles: Vec<_> = workers
            .drain(..)
            .enumerate()
            .map(|(client, mut adapter)| {
                let (cfg, schema, barrier, progress) =
                    (cfg.clone(), schema.clone(), &barrier, &progress);
                s.spawn(move || {
                    barrier.wait();
                    let begun = Instant::now();
                    let ops = match kind {
                        TestKind::Ingest => {
                            ingest_worker(&cfg, &schema, client, adapter.as_mut(), progress)
                        }
                        TestKind::Query => query_worker(&cfg, client, adapter.as_mut(), progress),
                    };
                    let finished = Instant::now();
                    if let Err(e) = adapter.close() {
                        log::warn!("client {client}: close failed: {e}");
                    }
                    (ops, begun, finished)
                })
            })
            .collect();
        barrier.wait();
        while !handles.iter().all(|h| h.is_finished()) {
            std::thread::sleep(poll.min(Duration::from_millis(20)));
            if space_samples
                .last()
                .is_some_and(|(t, _)| now_ms() - t < poll.as_millis() as i64)
            {
                continue;
            }
            if let Some(b) = used_space(&mut coordinator) {
                space_samples.push((now_ms(), b));
            }
        }
        // the coordinator is scheduled independently of the workers, so wall
        // time runs from the first worker start to the last worker finish
        let mut span: Option<(Instant, Instant)> = None;
        let results: Vec<Result<Vec<OperationRecord>>> = handles
            .into_iter()
            .map(|h| {
                let (ops, begun, finished) = h.join().expect("worker panicked");
                span = Some(match span {
                    Some((b, f)) => (b.min(begun), f.max(finished)),
                    None => (begun, finished),
                });
                ops
            })
            .collect();
        let wall = span.map_or(Duration::ZERO, |(b, f)| f - b);
        drop(stop_tx);
        if let Some(m) = monitor {
            m.join().expect("monitor panicked")?;
        }
        Ok((results, wall))
    })?;
    if let Some(b) = used_space(&mut coordinator) {
        space_samples.push((now_ms(), b));
    }
    coordinator.close()?;

    let mut operations = Vec::with_capacity(total_ops as usize);
    for w in per_worker {
        operations.extend(w?);
    }
    operations.sort_by_key(|o| (o.client_id, o.seq));

    let mut samples: BTreeMap<OpKind, Vec<f64>> = BTreeMap::new();
    let mut per_client_ms = vec![0.0; clients];
    let (mut total_points, mut failures) = (0u64, 0u64);
    for o in &operations {
        if o.success {
            samples.entry(o.kind).or_default().push(o.cost_ms);
            per_client_ms[o.client_id] += o.cost_ms;
            total_points += o.points;
        } else {
            failures += 1;
        }
    }
    let stats = samples
        .into_iter()
        .map(|(k, v)| Ok((k, metrics::summarize(&v)?)))
        .collect::<Result<_>>()?;
    let throughput = match kind {
        TestKind::Ingest => metrics::throughput(&per_client_ms, total_points).ok(),
        TestKind::Query => None,
    };
    let space_bytes = match kind {
        TestKind::Ingest => metrics::space_consumption(&space_samples),
        TestKind::Query => None,
    };
    let monitor = monitor_samples.into_inner().expect("monitor lock");
    Ok(TestResult {
        kind,
        config: (*cfg).clone(),
        operations,
        stats,
        throughput,
        total_points,
        per_client_ms,
        wall_ms: duration_ms(wall),
        failures,
        space_samples,
        space_bytes,
        monitor,
    })
}

/// Ingestion operations a run issues: one batch per device per epoch, or
/// the same records re-cut into `BATCH_SIZE` chunks per client.
pub fn expected_ingest_ops(cfg: &Config) -> u64 {
    if cfg.is_mul_dev_batch {
        // each client's epoch holds devices * BATCH_SIZE records, i.e. one
        // chunk per device
        partition_devices(cfg)
            .iter()
            .map(|r| r.len() as u64)
            .sum::<u64>()
            * cfg.epoch
    } else {
        cfg.device_number * cfg.epoch
    }
}

fn batch_detail(schema: &Schema, b: &Batch) -> String {
    let mut names: Vec<&str> = Vec::new();
    for r in &b.records {
        let n = schema.devices[r.device].name.as_str();
        if !names.contains(&n) {
            names.push(n);
        }
    }
    format!("epoch={} devices={}", b.epoch, names.join(";"))
}

fn ingest_worker(
    cfg: &Arc<Config>,
    schema: &Arc<Schema>,
    client: usize,
    adapter: &mut dyn TsdbAdapter,
    progress: &Progress,
) -> Result<Vec<OperationRecord>> {
    let devices = partition_devices(cfg)[client].clone();
    let mut workload = ClientWorkload::new(cfg.clone(), schema.clone(), devices);
    let mut ops = Vec::new();
    for epoch in 0..cfg.epoch {
        for batch in workload.epoch_batches(epoch)? {
            let start_unix_ms = now_ms();
            let t = Instant::now();
            let outcome = adapter.insert_batch(&batch);
            let measured = t.elapsed();
            let (cost, error) = match outcome {
                Ok(d) => (d, None),
                Err(e) => (measured, Some(e.to_string())),
            };
            ops.push(OperationRecord {
                client_id: client,
                seq: ops.len() as u64,
                kind: OpKind::Ingest,
                start_unix_ms,
                cost_ms: duration_ms(cost),
                points: batch.points(),
                success: error.is_none(),
                error,
                detail: batch_detail(schema, &batch),
            });
            progress.tick();
        }
    }
    Ok(ops)
}

fn query_worker(
    cfg: &Config,
    client: usize,
    adapter: &mut dyn TsdbAdapter,
    progress: &Progress,
) -> Result<Vec<OperationRecord>> {
    if cfg.epoch == 0 {
        return Ok(Vec::new());
    }
    let mut gen = QueryGenerator::new(cfg, client as u64)?;
    let mut ops = Vec::with_capacity(cfg.epoch as usize);
    for seq in 0..cfg.epoch {
        let q = gen.next_query()?;
        let start_unix_ms = now_ms();
        let t = Instant::now();
        let outcome = adapter.execute_query(&q);
        let measured = t.elapsed();
        let (cost, points, error) = match outcome {
            Ok((rows, d)) => (d, rows.len() as u64, None),
            Err(e) => (measured, 0, Some(e.to_string())),
        };
        ops.push(OperationRecord {
            client_id: client,
            seq,
            kind: OpKind::Query(q.qtype),
            start_unix_ms,
            cost_ms: duration_ms(cost),
            points,
            success: error.is_none(),
            error,
            detail: q.to_string(),
        });
        progress.tick();
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{factory_for, ReferenceStore};
    use crate::query::QueryDescriptor;

    fn quiet(cfg: Config) -> Config {
        Config {
            monitor_interval: 0,
            ..cfg
        }
    }

    fn reference() -> (Arc<Mutex<ReferenceStore>>, Box<dyn AdapterFactory>) {
        let store = Arc::new(Mutex::new(ReferenceStore::new()));
        let f = factory_for(&Config::default(), store.clone()).unwrap();
        (store, f)
    }

    #[test]
    fn default_ingestion_volume() {
        let (store, f) = reference();
        let r = run_ingestion_test(&quiet(Config::default()), f.as_ref()).unwrap();
        assert_eq!(r.operations.len(), 60);
        assert_eq!(r.failures, 0);
        assert_eq!(r.total_points, 18_000);
        assert_eq!(store.lock().unwrap().point_count(), 18_000);
        assert!(r.operations.iter().all(|o| o.points == 300));
        assert!(r.throughput.unwrap() > 0.0);
        assert_eq!(r.stats[&OpKind::Ingest].n, 60);
        assert_eq!(r.space_bytes, Some(18_000 * 16));
    }

    #[test]
    fn wall_time_covers_every_client() {
        let (_, f) = reference();
        for kind in [TestKind::Ingest, TestKind::Query] {
            let r = run_test(&quiet(Config::default()), kind, f.as_ref(), None).unwrap();
            let busiest = r.per_client_ms.iter().cloned().fold(0.0, f64::max);
            // both sides are rounded to the microsecond per op
            assert!(r.wall_ms + 0.01 * r.operations.len() as f64 >= busiest);
            assert!(r.wall_ms > 0.0);
        }
    }

    #[test]
    fn client_count_does_not_change_stored_data() {
        let (s1, f1) = reference();
        let (s5, f5) = reference();
        run_ingestion_test(
            &quiet(Config {
                client_number: 1,
                ..Config::default()
            }),
            f1.as_ref(),
        )
        .unwrap();
        run_ingestion_test(&quiet(Config::default()), f5.as_ref()).unwrap();
        let (a, b) = (s1.lock().unwrap(), s5.lock().unwrap());
        assert_eq!(a.point_count(), b.point_count());
        assert_eq!(a.series("d_7", "s_2"), b.series("d_7", "s_2"));
    }

    #[test]
    fn rerun_without_cleanup_overwrites() {
        let (store, f) = reference();
        let cfg = quiet(Config {
            enable_cleanup: false,
            ..Config::default()
        });
        run_ingestion_test(&cfg, f.as_ref()).unwrap();
        run_ingestion_test(&cfg, f.as_ref()).unwrap();
        assert_eq!(store.lock().unwrap().point_count(), 18_000);
    }

    #[test]
    fn query_test_counts() {
        let (_, f) = reference();
        run_ingestion_test(&quiet(Config::default()), f.as_ref()).unwrap();
        let cfg = quiet(Config {
            client_number: 2,
            epoch: 100,
            data_epoch: Some(6),
            ..Config::default()
        });
        let r = run_query_test(&cfg, f.as_ref()).unwrap();
        assert_eq!(r.operations.len(), 200);
        assert!(r.operations.iter().all(|o| o.success && o.points == 40));
        assert!(r.throughput.is_none());
        let d: QueryDescriptor = r.operations[0].detail.parse().unwrap();
        assert_eq!(d.qtype, QueryType::GroupByTime);

        let empty = run_query_test(&Config { epoch: 0, ..cfg }, f.as_ref()).unwrap();
        assert!(empty.operations.is_empty() && empty.stats.is_empty());
    }

    struct Flaky(u64);

    impl TsdbAdapter for Flaky {
        fn init_schema(&mut self, _: &Schema) -> Result<()> {
            Ok(())
        }
        fn cleanup(&mut self) -> Result<()> {
            Ok(())
        }
        fn insert_batch(&mut self, _: &Batch) -> Result<Duration> {
            self.0 += 1;
            if self.0.is_multiple_of(3) {
                Err(Error::Adapter("boom".into()))
            } else {
                Ok(Duration::from_micros(1500))
            }
        }
        fn execute_query(
            &mut self,
            _: &QueryDescriptor,
        ) -> Result<(Vec<crate::adapter::Row>, Duration)> {
            Err(Error::Adapter("no queries".into()))
        }
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let f = |_: Arc<Schema>| Ok(Box::new(Flaky(0)) as Box<dyn TsdbAdapter>);
        let cfg = quiet(Config {
            client_number: 2,
            ..Config::default()
        });
        let r = run_ingestion_test(&cfg, &f).unwrap();
        assert_eq!(r.operations.len(), 60);
        assert_eq!(r.failures, 20);
        assert_eq!(r.successes() + r.failures, 60);
        assert_eq!(r.stats[&OpKind::Ingest].n, 40);
        assert_eq!(r.stats[&OpKind::Ingest].max, 1.5);
        assert_eq!(
            r.operations[2].error.as_deref(),
            Some("adapter error: boom")
        );
        assert_eq!(r.space_bytes, None);
    }

    #[test]
    fn connect_failure_aborts() {
        let f = |_: Arc<Schema>| -> Result<Box<dyn TsdbAdapter>> {
            Err(Error::Adapter("refused".into()))
        };
        assert!(matches!(
            run_ingestion_test(&quiet(Config::default()), &f),
            Err(Error::Adapter(_))
        ));
    }

    #[test]
    fn multi_device_batches() {
        let (store, f) = reference();
        let cfg = quiet(Config {
            is_mul_dev_batch: true,
            ..Config::default()
        });
        let r = run_ingestion_test(&cfg, f.as_ref()).unwrap();
        assert_eq!(r.operations.len() as u64, expected_ingest_ops(&cfg));
        assert_eq!(r.operations.len(), 60);
        assert_eq!(store.lock().unwrap().point_count(), 18_000);
        assert!(r.operations[0]
            .detail
            .starts_with("epoch=0 devices=d_0;d_1"));
    }

    #[test]
    fn monitor_runs_alongside() {
        let (_, f) = reference();
        let cfg = Config {
            monitor_interval: 100,
            epoch: 2,
            ..Config::default()
        };
        let r = run_ingestion_test(&cfg, f.as_ref()).unwrap();
        assert_eq!(r.operations.len(), 20);
        assert!(r.monitor.windows(2).all(|w| w[0].unix_ms < w[1].unix_ms));
    }

    #[test]
    fn op_kind_text() {
        for k in [
            OpKind::Ingest,
            OpKind::Query(QueryType::GroupByTime),
            OpKind::Query(QueryType::ExactPoint),
        ] {
            assert_eq!(k.to_string().parse::<OpKind>().unwrap(), k);
        }
        assert_eq!(OpKind::Query(QueryType::Latest).to_string(), "Q9");
        assert!("Q11".parse::<OpKind>().is_err());
        assert_eq!(duration_ms(Duration::from_nanos(1_234_567)), 1.235);
    }
}
