//! Database-independent ingestion and query interface, plus implementations:
//! an in-memory reference store, an InfluxDB 1.x HTTP adapter and a
//! wide-table SQL adapter.

pub mod influx;
pub mod reference;
pub mod sql;

use std::cmp::Ordering;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::config::{AdapterKind, Config};
use crate::error::{Error, Result};
use crate::ingestion::Batch;
use crate::query::QueryDescriptor;
use crate::schema::Schema;

pub use influx::{encode_line_protocol, render_influxql, InfluxAdapter};
pub use reference::{ref_execute_query, ReferenceAdapter, ReferenceStore};
pub use sql::{render_create_table, render_insert, render_query, SqlAdapter, SqliteExecutor};

/// One normalised result point.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub device: String,
    /// Sensor name for raw rows, `func(sensor)` for aggregates.
    pub label: String,
    /// Row timestamp, bucket start for group-by-time, `None` for plain aggregates.
    pub time: Option<i64>,
    pub value: f64,
}

impl Row {
    fn key_cmp(&self, other: &Row) -> Ordering {
        (&self.device, &self.label, self.time).cmp(&(&other.device, &other.label, other.time))
    }
}

pub fn sort_rows(rows: &mut [Row]) {
    rows.sort_by(|a, b| a.key_cmp(b).then(a.value.total_cmp(&b.value)));
}

/// Order-insensitive row-set equality; values compare within `tol`, relative
/// to magnitude above 1.
pub fn rows_equivalent(a: &[Row], b: &[Row], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    sort_rows(&mut a);
    sort_rows(&mut b);
    a.iter().zip(&b).all(|(x, y)| {
        x.key_cmp(y) == Ordering::Equal
            && (x.value == y.value
                || (x.value - y.value).abs() <= tol * x.value.abs().max(y.value.abs()).max(1.0))
    })
}

/// One connection to a database under test. Implementations are used by a
/// single worker and need not be thread-safe.
pub trait TsdbAdapter: Send {
    fn init_schema(&mut self, schema: &Schema) -> Result<()>;

    /// Remove all benchmark data.
    fn cleanup(&mut self) -> Result<()>;

    /// Write one batch; returns the request's time to last byte.
    fn insert_batch(&mut self, batch: &Batch) -> Result<Duration>;

    fn execute_query(&mut self, q: &QueryDescriptor) -> Result<(Vec<Row>, Duration)>;

    /// Bytes used by the database, when the adapter can tell.
    fn used_space(&mut self) -> Option<u64> {
        None
    }

    fn close(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Opens one adapter instance per worker.
pub trait AdapterFactory: Send + Sync {
    fn connect(&self, schema: Arc<Schema>) -> Result<Box<dyn TsdbAdapter>>;
}

impl<F> AdapterFactory for F
where
    F: Fn(Arc<Schema>) -> Result<Box<dyn TsdbAdapter>> + Send + Sync,
{
    fn connect(&self, schema: Arc<Schema>) -> Result<Box<dyn TsdbAdapter>> {
        self(schema)
    }
}

/// Factory for the adapter named by `cfg`. The reference adapter writes to
/// `store`, so data survives between an ingestion and a later query test.
pub fn factory_for(
    cfg: &Config,
    store: Arc<Mutex<ReferenceStore>>,
) -> Result<Box<dyn AdapterFactory>> {
    match cfg.adapter {
        AdapterKind::Reference => Ok(Box::new(move |schema: Arc<Schema>| {
            Ok(Box::new(ReferenceAdapter::new(store.clone(), schema)) as Box<dyn TsdbAdapter>)
        })),
        AdapterKind::InfluxDb => {
            let (url, db) = (cfg.db_url.clone(), cfg.db_name.clone());
            // fail fast on a malformed endpoint
            InfluxAdapter::new(&url, &db, Arc::new(crate::schema::derive_schema(cfg)))?;
            Ok(Box::new(move |schema: Arc<Schema>| {
                Ok(Box::new(InfluxAdapter::new(&url, &db, schema)?) as Box<dyn TsdbAdapter>)
            }))
        }
        AdapterKind::Sql => {
            let (url, data_type) = (cfg.db_url.clone(), cfg.data_type);
            Ok(Box::new(move |schema: Arc<Schema>| {
                let exec = SqliteExecutor::open(&url)?;
                Ok(
                    Box::new(SqlAdapter::new(exec, schema).with_data_type(data_type))
                        as Box<dyn TsdbAdapter>,
                )
            }))
        }
    }
}

pub(crate) fn adapter_err(e: impl std::fmt::Display) -> Error {
    Error::Adapter(e.to_string())
}
