//! Wide-table SQL adapter.
//!
//! Data lives in one table `data(device, time, s_0, ..., s_{m-1})` keyed by
//! `(device, time)`. Statement text sticks to syntax shared by PostgreSQL
//! and SQLite: upserts use `ON CONFLICT ... DO UPDATE`, group-by-time uses
//! integer bucket arithmetic `(time / interval) * interval`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::Connection;

use crate::error::{Error, Result};
use crate::ingestion::{Batch, Record};
use crate::query::{QueryDescriptor, QueryType, TimeFilter};
use crate::schema::Schema;
use crate::series::{DataType, Value};

use super::reference::agg_label;
use super::{adapter_err, Row, TsdbAdapter};

pub const TABLE: &str = "data";

fn column_type(t: DataType) -> &'static str {
    match t {
        DataType::Float => "REAL",
        DataType::Double => "DOUBLE PRECISION",
        DataType::Int32 => "INTEGER",
        DataType::Int64 => "BIGINT",
        DataType::Text => "TEXT",
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn sql_value(v: &Value) -> Result<String> {
    Ok(match v {
        Value::Float(x) if x.is_finite() => format!("{x:?}"),
        Value::Double(x) if x.is_finite() => format!("{x:?}"),
        Value::Float(_) | Value::Double(_) => {
            return Err(Error::Encode(format!("non-finite float {v:?}")));
        }
        Value::Int32(x) => x.to_string(),
        Value::Int64(x) => x.to_string(),
        Value::Text(s) => quote(s),
    })
}

pub fn render_create_table(schema: &Schema, data_type: DataType) -> String {
    let mut s =
        format!("CREATE TABLE IF NOT EXISTS {TABLE} (device TEXT NOT NULL, time BIGINT NOT NULL");
    for sensor in &schema.sensors {
        write!(s, ", {sensor} {}", column_type(data_type)).unwrap();
    }
    s.push_str(", PRIMARY KEY (device, time))");
    s
}

/// Multi-row upsert for a batch. Rows repeating a `(device, time)` key within
/// the batch are collapsed to the last one, matching last-write-wins.
pub fn render_insert(batch: &Batch, schema: &Schema) -> Result<String> {
    let mut last: BTreeMap<(usize, i64), usize> = BTreeMap::new();
    for (i, r) in batch.records.iter().enumerate() {
        last.insert((r.device, r.timestamp), i);
    }
    let keep: Vec<&Record> = batch
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| last[&(r.device, r.timestamp)] == *i)
        .map(|(_, r)| r)
        .collect();
    let mut s = format!("INSERT INTO {TABLE} (device, time");
    for sensor in &schema.sensors {
        write!(s, ", {sensor}").unwrap();
    }
    s.push_str(") VALUES ");
    for (i, r) in keep.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        write!(
            s,
            "({}, {}",
            quote(&schema.devices[r.device].name),
            r.timestamp
        )
        .unwrap();
        for v in &r.values {
            write!(s, ", {}", sql_value(v)?).unwrap();
        }
        s.push(')');
    }
    s.push_str(" ON CONFLICT (device, time) DO UPDATE SET ");
    let sets: Vec<String> = schema
        .sensors
        .iter()
        .map(|c| format!("{c} = excluded.{c}"))
        .collect();
    s.push_str(&sets.join(", "));
    Ok(s)
}

fn where_clause(q: &QueryDescriptor) -> String {
    let devices: Vec<String> = q.devices.iter().map(|d| quote(d)).collect();
    let mut w = format!("device IN ({})", devices.join(","));
    match q.time {
        TimeFilter::None => {}
        TimeFilter::Point(t) => write!(w, " AND time = {t}").unwrap(),
        TimeFilter::Range { start, end } => {
            write!(w, " AND time >= {start} AND time < {end}").unwrap()
        }
    }
    if let Some(f) = &q.value_filter {
        for s in &q.sensors {
            write!(w, " AND {s} {} {}", f.op.symbol(), f.threshold).unwrap();
        }
    }
    w
}

/// SELECT text for a descriptor against the wide table.
pub fn render_query(q: &QueryDescriptor) -> String {
    let cols = q.sensors.join(", ");
    let w = where_clause(q);
    match q.qtype {
        QueryType::ExactPoint | QueryType::TimeRange | QueryType::RangeValueFilter => {
            format!("SELECT time, device, {cols} FROM {TABLE} WHERE {w} ORDER BY time, device")
        }
        QueryType::Limit | QueryType::RangeValueFilterLimit => format!(
            "SELECT time, device, {cols} FROM {TABLE} WHERE {w} ORDER BY time, device LIMIT {}",
            q.limit.unwrap_or(0)
        ),
        QueryType::Latest => format!(
            "SELECT time, device, {cols} FROM {TABLE} AS d WHERE {w} AND time = \
             (SELECT max(time) FROM {TABLE} AS m WHERE m.device = d.device) ORDER BY device"
        ),
        QueryType::AggTime | QueryType::AggValue | QueryType::AggTimeValue => {
            let f = q.agg.expect("aggregate query carries a function");
            let aggs: Vec<String> = q.sensors.iter().map(|s| format!("{f}({s})")).collect();
            format!(
                "SELECT device, {} FROM {TABLE} WHERE {w} GROUP BY device ORDER BY device",
                aggs.join(", ")
            )
        }
        QueryType::GroupByTime => {
            let f = q.agg.expect("group-by query carries a function");
            let i = q.interval.expect("group-by query carries an interval");
            let aggs: Vec<String> = q.sensors.iter().map(|s| format!("{f}({s})")).collect();
            format!(
                "SELECT device, (time / {i}) * {i} AS bucket, {} FROM {TABLE} WHERE {w} \
                 GROUP BY device, bucket ORDER BY device, bucket",
                aggs.join(", ")
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SqlValue {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
}

impl SqlValue {
    fn as_f64(&self) -> Option<f64> {
        match self {
            SqlValue::Null => None,
            SqlValue::Int(i) => Some(*i as f64),
            SqlValue::Real(r) => Some(*r),
            SqlValue::Text(s) => s.parse().ok(),
        }
    }
}

/// A SQL connection able to run the canonical statement text.
pub trait SqlExecutor: Send {
    fn execute(&mut self, sql: &str) -> Result<()>;
    fn query(&mut self, sql: &str) -> Result<Vec<Vec<SqlValue>>>;
    fn used_space(&mut self) -> Option<u64> {
        None
    }
}

/// SQLite file database; the connection string is `sqlite:<path>`.
pub struct SqliteExecutor {
    conn: Connection,
    path: PathBuf,
}

impl SqliteExecutor {
    pub fn open(url: &str) -> Result<Self> {
        let path = url
            .strip_prefix("sqlite:")
            .filter(|p| !p.is_empty())
            .ok_or_else(|| adapter_err(format!("expected sqlite:<path>, got {url:?}")))?;
        let conn = Connection::open(path).map_err(adapter_err)?;
        conn.busy_timeout(Duration::from_secs(60))
            .map_err(adapter_err)?;
        conn.pragma_update(None, "journal_mode", "WAL")
            .map_err(adapter_err)?;
        Ok(SqliteExecutor {
            conn,
            path: PathBuf::from(path),
        })
    }
}

impl SqlExecutor for SqliteExecutor {
    fn execute(&mut self, sql: &str) -> Result<()> {
        self.conn.execute_batch(sql).map_err(adapter_err)
    }

    fn query(&mut self, sql: &str) -> Result<Vec<Vec<SqlValue>>> {
        let mut stmt = self.conn.prepare(sql).map_err(adapter_err)?;
        let n = stmt.column_count();
        let rows = stmt
            .query_map([], |row| {
                (0..n)
                    .map(|i| {
                        Ok(match row.get_ref(i)? {
                            ValueRef::Null => SqlValue::Null,
                            ValueRef::Integer(v) => SqlValue::Int(v),
                            ValueRef::Real(v) => SqlValue::Real(v),
                            ValueRef::Text(t) => {
                                SqlValue::Text(String::from_utf8_lossy(t).into_owned())
                            }
                            ValueRef::Blob(_) => SqlValue::Null,
                        })
                    })
                    .collect::<rusqlite::Result<Vec<_>>>()
            })
            .map_err(adapter_err)?;
        rows.collect::<rusqlite::Result<_>>().map_err(adapter_err)
    }

    fn used_space(&mut self) -> Option<u64> {
        let mut total = std::fs::metadata(&self.path).ok()?.len();
        for suffix in ["-wal", "-shm"] {
            let mut p = self.path.clone().into_os_string();
            p.push(suffix);
            total += std::fs::metadata(p).map(|m| m.len()).unwrap_or(0);
        }
        Some(total)
    }
}

pub struct SqlAdapter<E> {
    exec: E,
    schema: Arc<Schema>,
    data_type: DataType,
}

impl<E: SqlExecutor> SqlAdapter<E> {
    pub fn new(exec: E, schema: Arc<Schema>) -> Self {
        SqlAdapter {
            exec,
            schema,
            data_type: DataType::Double,
        }
    }

    pub fn with_data_type(mut self, t: DataType) -> Self {
        self.data_type = t;
        self
    }

    fn normalise(&self, q: &QueryDescriptor, rows: Vec<Vec<SqlValue>>) -> Result<Vec<Row>> {
        let text = |v: &SqlValue| match v {
            SqlValue::Text(s) => Ok(s.clone()),
            other => Err(adapter_err(format!("expected device name, got {other:?}"))),
        };
        let int = |v: &SqlValue| match v {
            SqlValue::Int(i) => Ok(*i),
            other => Err(adapter_err(format!("expected integer time, got {other:?}"))),
        };
        let mut out = Vec::new();
        for r in rows {
            let (device, time, values) = match q.qtype {
                QueryType::AggTime | QueryType::AggValue | QueryType::AggTimeValue => {
                    (text(&r[0])?, None, &r[1..])
                }
                QueryType::GroupByTime => (text(&r[0])?, Some(int(&r[1])?), &r[2..]),
                _ => (text(&r[1])?, Some(int(&r[0])?), &r[2..]),
            };
            for (s, v) in q.sensors.iter().zip(values) {
                let Some(value) = v.as_f64() else { continue };
                let label = match q.agg {
                    Some(f) => agg_label(f, s),
                    None => s.clone(),
                };
                out.push(Row {
                    device: device.clone(),
                    label,
                    time,
                    value,
                });
            }
        }
        Ok(out)
    }
}

impl<E: SqlExecutor> TsdbAdapter for SqlAdapter<E> {
    fn init_schema(&mut self, schema: &Schema) -> Result<()> {
        self.schema = Arc::new(schema.clone());
        self.exec
            .execute(&render_create_table(schema, self.data_type))
    }

    fn cleanup(&mut self) -> Result<()> {
        self.exec.execute(&format!("DROP TABLE IF EXISTS {TABLE}"))
    }

    fn insert_batch(&mut self, batch: &Batch) -> Result<Duration> {
        if batch.records.is_empty() {
            return Ok(Duration::ZERO);
        }
        let sql = render_insert(batch, &self.schema)?;
        let start = Instant::now();
        self.exec.execute(&sql)?;
        Ok(start.elapsed())
    }

    fn execute_query(&mut self, q: &QueryDescriptor) -> Result<(Vec<Row>, Duration)> {
        let sql = render_query(q);
        let start = Instant::now();
        let rows = self.exec.query(&sql)?;
        let elapsed = start.elapsed();
        Ok((self.normalise(q, rows)?, elapsed))
    }

    fn used_space(&mut self) -> Option<u64> {
        self.exec.used_space()
    }
}
