//! Benchmark harness for time-series databases: synthetic workload
//! generation, randomised queries over ten query types, pluggable database
//! adapters, latency statistics and system monitoring.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapter;
pub mod config;
pub mod controller;
pub mod error;
pub mod ingestion;
pub mod metrics;
pub mod monitor;
pub mod persist;
pub mod query;
pub mod rng;
pub mod routine;
pub mod schema;
pub mod series;
pub mod timestamp;

pub use config::{AdapterKind, AggFun, CmpOp, Config, ParseMode, TimestampMode, ValueFilter};
pub use controller::{
    run_ingestion_test, run_query_test, OpKind, OperationRecord, TestKind, TestResult,
};
pub use error::{ConfigError, Error, Result};
pub use ingestion::{Batch, ClientWorkload, Record};
pub use metrics::LatencyStats;
pub use monitor::MonitorSample;
pub use persist::{Mode, RunRecord};
pub use query::{QueryDescriptor, QueryGenerator, QueryType, TimeFilter};
pub use routine::Runner;
pub use schema::{derive_schema, Device, Schema};
pub use series::{DataType, SensorKind, Value};
