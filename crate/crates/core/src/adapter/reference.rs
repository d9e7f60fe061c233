//! In-memory store with brute-force query evaluation; the correctness oracle
//! the other adapters are compared against.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::config::AggFun;
use crate::error::Result;
use crate::ingestion::Batch;
use crate::query::{QueryDescriptor, QueryType, TimeFilter};
use crate::schema::Schema;
use crate::series::Value;

use super::{adapter_err, Row, TsdbAdapter};

/// Per-series ordered maps keyed by `(device, sensor)`. A second write to
/// the same timestamp replaces the first.
#[derive(Debug, Default, Clone)]
pub struct ReferenceStore {
    series: HashMap<(String, String), BTreeMap<i64, Value>>,
}

/// One wide row: the selected sensors of a device at one timestamp.
struct WideRow<'a> {
    device: &'a str,
    time: i64,
    values: Vec<Option<&'a Value>>,
}

impl ReferenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.series.clear();
    }

    pub fn insert(&mut self, device: &str, sensor: &str, t: i64, v: Value) {
        self.series
            .entry((device.to_string(), sensor.to_string()))
            .or_default()
            .insert(t, v);
    }

    pub fn insert_batch(&mut self, batch: &Batch, schema: &Schema) {
        for r in &batch.records {
            let device = &schema.devices[r.device].name;
            for (sensor, v) in schema.sensors.iter().zip(&r.values) {
                self.insert(device, sensor, r.timestamp, v.clone());
            }
        }
    }

    pub fn point_count(&self) -> usize {
        self.series.values().map(BTreeMap::len).sum()
    }

    pub fn series_count(&self) -> usize {
        self.series.len()
    }

    pub fn series(&self, device: &str, sensor: &str) -> Option<&BTreeMap<i64, Value>> {
        self.series.get(&(device.to_string(), sensor.to_string()))
    }

    /// Rough in-memory footprint: 8-byte timestamp plus 8-byte value per point.
    pub fn approx_bytes(&self) -> u64 {
        self.point_count() as u64 * 16
    }

    fn wide_rows<'a>(
        &'a self,
        device: &'a str,
        sensors: &[String],
        time: TimeFilter,
    ) -> Vec<WideRow<'a>> {
        let cols: Vec<Option<&BTreeMap<i64, Value>>> =
            sensors.iter().map(|s| self.series(device, s)).collect();
        let mut times = BTreeSet::new();
        for c in cols.iter().flatten() {
            match time {
                TimeFilter::None => times.extend(c.keys().copied()),
                TimeFilter::Point(t) => times.extend(c.get(&t).map(|_| t)),
                TimeFilter::Range { start, end } => {
                    times.extend(c.range(start..end).map(|(t, _)| *t))
                }
            }
        }
        times
            .into_iter()
            .map(|t| WideRow {
                device,
                time: t,
                values: cols.iter().map(|c| c.and_then(|m| m.get(&t))).collect(),
            })
            .collect()
    }
}

fn passes(row: &WideRow, q: &QueryDescriptor) -> bool {
    match &q.value_filter {
        None => true,
        Some(f) => row
            .values
            .iter()
            .all(|v| v.is_some_and(|v| f.matches(v.as_f64()))),
    }
}

fn raw_rows(rows: &[WideRow], sensors: &[String]) -> Vec<Row> {
    rows.iter()
        .flat_map(|r| {
            sensors.iter().zip(&r.values).filter_map(|(s, v)| {
                v.map(|v| Row {
                    device: r.device.to_string(),
                    label: s.clone(),
                    time: Some(r.time),
                    value: v.as_f64(),
                })
            })
        })
        .collect()
}

pub(crate) fn aggregate(f: AggFun, values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(match f {
        AggFun::Count => values.len() as f64,
        AggFun::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggFun::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        AggFun::Sum => values.iter().sum(),
        AggFun::Avg => values.iter().sum::<f64>() / values.len() as f64,
    })
}

pub fn agg_label(f: AggFun, sensor: &str) -> String {
    format!("{f}({sensor})")
}

/// Evaluate any of the ten query types by scanning the store. Unknown devices
/// or sensors simply contribute nothing.
pub fn ref_execute_query(store: &ReferenceStore, q: &QueryDescriptor) -> Vec<Row> {
    let sensors = &q.sensors;
    let per_device: Vec<Vec<WideRow>> = q
        .devices
        .iter()
        .map(|d| {
            store
                .wide_rows(d, sensors, q.time)
                .into_iter()
                .filter(|r| passes(r, q))
                .collect()
        })
        .collect();

    match q.qtype {
        QueryType::ExactPoint | QueryType::TimeRange | QueryType::RangeValueFilter => per_device
            .iter()
            .flat_map(|rows| raw_rows(rows, sensors))
            .collect(),
        QueryType::Limit | QueryType::RangeValueFilterLimit => {
            let mut all: Vec<WideRow> = per_device.into_iter().flatten().collect();
            all.sort_by(|a, b| (a.time, a.device).cmp(&(b.time, b.device)));
            all.truncate(q.limit.unwrap_or(0) as usize);
            raw_rows(&all, sensors)
        }
        QueryType::Latest => per_device
            .iter()
            .filter_map(|rows| rows.last())
            .flat_map(|r| raw_rows(std::slice::from_ref(r), sensors))
            .collect(),
        QueryType::AggTime | QueryType::AggValue | QueryType::AggTimeValue => {
            let f = q.agg.expect("aggregate query carries a function");
            let mut out = Vec::new();
            for (device, rows) in q.devices.iter().zip(&per_device) {
                for (i, s) in sensors.iter().enumerate() {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter_map(|r| r.values[i])
                        .map(Value::as_f64)
                        .collect();
                    if let Some(v) = aggregate(f, &vals) {
                        out.push(Row {
                            device: device.clone(),
                            label: agg_label(f, s),
                            time: None,
                            value: v,
                        });
                    }
                }
            }
            out
        }
        QueryType::GroupByTime => {
            let f = q.agg.expect("group-by query carries a function");
            let interval = q.interval.expect("group-by query carries an interval") as i64;
            let mut out = Vec::new();
            for (device, rows) in q.devices.iter().zip(&per_device) {
                for (i, s) in sensors.iter().enumerate() {
                    let mut buckets: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
                    for r in rows {
                        if let Some(v) = r.values[i] {
                            buckets
                                .entry(r.time.div_euclid(interval) * interval)
                                .or_default()
                                .push(v.as_f64());
                        }
                    }
                    for (b, vals) in buckets {
                        out.push(Row {
                            device: device.clone(),
                            label: agg_label(f, s),
                            time: Some(b),
                            value: aggregate(f, &vals).expect("bucket is non-empty"),
                        });
                    }
                }
            }
            out
        }
    }
}

/// Adapter over a shared [`ReferenceStore`].
pub struct ReferenceAdapter {
    store: Arc<Mutex<ReferenceStore>>,
    schema: Arc<Schema>,
}

impl ReferenceAdapter {
    pub fn new(store: Arc<Mutex<ReferenceStore>>, schema: Arc<Schema>) -> Self {
        ReferenceAdapter { store, schema }
    }

    fn lock(&self) -> Result<std::sync::MutexGuard<'_, ReferenceStore>> {
        self.store
            .lock()
            .map_err(|_| adapter_err("reference store lock poisoned"))
    }
}

impl TsdbAdapter for ReferenceAdapter {
    fn init_schema(&mut self, schema: &Schema) -> Result<()> {
        self.schema = Arc::new(schema.clone());
        Ok(())
    }

    fn cleanup(&mut self) -> Result<()> {
        self.lock()?.clear();
        Ok(())
    }

    fn insert_batch(&mut self, batch: &Batch) -> Result<Duration> {
        let start = Instant::now();
        self.lock()?.insert_batch(batch, &self.schema);
        Ok(start.elapsed())
    }

    fn execute_query(&mut self, q: &QueryDescriptor) -> Result<(Vec<Row>, Duration)> {
        let start = Instant::now();
        let rows = ref_execute_query(&*self.lock()?, q);
        Ok((rows, start.elapsed()))
    }

    fn used_space(&mut self) -> Option<u64> {
        self.lock().ok().map(|s| s.approx_bytes())
    }
}
