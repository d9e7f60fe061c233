//! Benchmark parameters and the `KEY=VALUE` parameter-file format.
//!
//! Keys are the upper-case names used throughout the README. Absent keys take
//! the documented defaults; `SEED` and `ADAPTER` are mandatory unless parsing
//! with [`ParseMode::WithDefaults`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;
use crate::series::DataType;

/// How timestamps are generated for each device stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimestampMode {
    InOrder = 0,
    BatchLocal = 1,
    Global = 2,
    Poisson = 3,
}

impl TimestampMode {
    fn from_code(code: u64) -> Option<Self> {
        Some(match code {
            0 => TimestampMode::InOrder,
            1 => TimestampMode::BatchLocal,
            2 => TimestampMode::Global,
            3 => TimestampMode::Poisson,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFun {
    Count,
    Max,
    Min,
    Avg,
    Sum,
}

impl AggFun {
    pub fn as_str(self) -> &'static str {
        match self {
            AggFun::Count => "count",
            AggFun::Max => "max",
            AggFun::Min => "min",
            AggFun::Avg => "avg",
            AggFun::Sum => "sum",
        }
    }
}

impl FromStr for AggFun {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "count" => AggFun::Count,
            "max" => AggFun::Max,
            "min" => AggFun::Min,
            "avg" => AggFun::Avg,
            "sum" => AggFun::Sum,
            other => return Err(format!("unknown aggregation function {other:?}")),
        })
    }
}

impl fmt::Display for AggFun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Gt,
    Lt,
    Eq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Eq => "=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Gt => lhs > rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }
}

/// `op threshold`, e.g. `> 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueFilter {
    pub op: CmpOp,
    pub threshold: f64,
}

impl ValueFilter {
    pub fn matches(&self, v: f64) -> bool {
        self.op.holds(v, self.threshold)
    }
}

impl FromStr for ValueFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let op = match s.chars().next() {
            Some('>') => CmpOp::Gt,
            Some('<') => CmpOp::Lt,
            Some('=') => CmpOp::Eq,
            _ => {
                return Err(format!(
                    "expected one of > < = followed by a number, got {s:?}"
                ))
            }
        };
        let threshold: f64 = s[1..]
            .trim()
            .parse()
            .map_err(|_| format!("bad threshold in {s:?}"))?;
        if !threshold.is_finite() {
            return Err(format!("threshold must be finite in {s:?}"));
        }
        Ok(ValueFilter { op, threshold })
    }
}

impl fmt::Display for ValueFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.op.symbol(), self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdapterKind {
    /// In-process store used as the correctness oracle.
    Reference,
    /// InfluxDB 1.x HTTP API.
    InfluxDb,
    /// Wide-table SQL; `DB_URL` is `sqlite:<path>`.
    Sql,
}

impl AdapterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdapterKind::Reference => "reference",
            AdapterKind::InfluxDb => "influxdb",
            AdapterKind::Sql => "sql",
        }
    }
}

impl FromStr for AdapterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "reference" => AdapterKind::Reference,
            "influxdb" | "influx" => AdapterKind::InfluxDb,
            "sql" => AdapterKind::Sql,
            other => return Err(format!("unknown adapter {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub group_number: u64,
    pub device_number: u64,
    pub sensor_number: u64,
    pub client_number: u64,
    pub batch_size: u64,
    /// Batches per device (ingestion) or queries per client (query test).
    pub epoch: u64,
    pub data_type: DataType,
    pub point_step: u64,
    pub timestamp_mode: TimestampMode,
    pub is_mul_dev_batch: bool,
    pub is_random_interval: bool,
    pub distribution_ratio: [u64; 5],
    pub out_of_order_ratio: f64,
    pub lambda: f64,
    pub add_noise: bool,
    pub seed: u64,
    pub adapter: AdapterKind,
    pub db_url: String,
    pub db_name: String,
    pub enable_cleanup: bool,
    pub query_type: u8,
    pub query_sensor_num: u64,
    pub query_device_num: u64,
    pub query_agg_fun: AggFun,
    pub query_span: u64,
    pub query_val_filter: ValueFilter,
    pub time_interval: u64,
    pub query_limit: u64,
    /// Ingestion epochs present in the database when running a query test.
    /// Defaults to `epoch`.
    pub data_epoch: Option<u64>,
    pub monitor_interval: u64,
    pub data_dir: Option<String>,
    pub progress_every: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// `SEED` and `ADAPTER` must be present.
    Strict,
    /// Every key, including `SEED` and `ADAPTER`, may be omitted.
    WithDefaults,
}

/// Every recognised key, in canonical output order.
pub const KEYS: &[&str] = &[
    "GROUP_NUMBER",
    "DEVICE_NUMBER",
    "SENSOR_NUMBER",
    "CLIENT_NUMBER",
    "BATCH_SIZE",
    "EPOCH",
    "DATA_TYPE",
    "POINT_STEP",
    "TIMESTAMP_GEN_MODE",
    "IS_MUL_DEV_BATCH",
    "IS_RANDOM_INTERVAL",
    "DISTRIBUTION_RATIO",
    "OUT_OF_ORDER_RATIO",
    "LAMBDA",
    "ADD_NOISE",
    "SEED",
    "ADAPTER",
    "DB_URL",
    "DB_NAME",
    "ENABLE_CLEANUP",
    "QUERY_TYPE",
    "QUERY_SENSOR_NUM",
    "QUERY_DEVICE_NUM",
    "QUERY_AGG_FUN",
    "QUERY_SPAN",
    "QUERY_VAL_FILTER",
    "TIME_INTERVAL",
    "QUERY_LIMIT",
    "DATA_EPOCH",
    "MONITOR_INTERVAL",
    "DATA_DIR",
    "PROGRESS_EVERY",
];

impl Default for Config {
    /// The worked example: 2 groups, 10 devices, 3 sensors, 5 clients,
    /// 100 records per batch, 6 epochs, DOUBLE, 5 s step, in-order, Q10 over
    /// 2 devices x 2 sensors with a 10 minute span and 1 minute buckets.
    fn default() -> Self {
        Config {
            group_number: 2,
            device_number: 10,
            sensor_number: 3,
            client_number: 5,
            batch_size: 100,
            epoch: 6,
            data_type: DataType::Double,
            point_step: 5000,
            timestamp_mode: TimestampMode::InOrder,
            is_mul_dev_batch: false,
            is_random_interval: false,
            distribution_ratio: [1, 1, 1, 1, 1],
            out_of_order_ratio: 0.2,
            lambda: 2.0,
            add_noise: true,
            seed: 0,
            adapter: AdapterKind::Reference,
            db_url: String::new(),
            db_name: "tsbench".to_string(),
            enable_cleanup: true,
            query_type: 10,
            query_sensor_num: 2,
            query_device_num: 2,
            query_agg_fun: AggFun::Max,
            query_span: 600_000,
            query_val_filter: ValueFilter {
                op: CmpOp::Gt,
                threshold: 0.0,
            },
            time_interval: 60_000,
            query_limit: 5,
            data_epoch: None,
            monitor_interval: 1000,
            data_dir: None,
            progress_every: 0,
        }
    }
}

fn parse_u64(key: &str, v: &str) -> Result<u64, ConfigError> {
    v.parse().map_err(|_| {
        ConfigError::malformed(key, format!("expected a non-negative integer, got {v:?}"))
    })
}

fn parse_positive(key: &str, v: &str) -> Result<u64, ConfigError> {
    match parse_u64(key, v)? {
        0 => Err(ConfigError::Invalid(format!("{key} must be positive"))),
        n => Ok(n),
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ConfigError::malformed(key, format!("expected a finite number, got {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::malformed(
            key,
            format!("expected true or false, got {v:?}"),
        )),
    }
}

fn parse_with<T: FromStr<Err = String>>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|e: String| ConfigError::malformed(key, e))
}

/// Split parameter text into an ordered key/value map. Later duplicates win.
pub fn parse_properties(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            reason: format!("expected KEY=VALUE, got {line:?}"),
        })?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(ConfigError::UnknownKey(k.to_string()));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl Config {
    pub fn parse(text: &str, mode: ParseMode) -> Result<Self, ConfigError> {
        Self::from_map(&parse_properties(text)?, mode)
    }

    pub fn from_map(map: &BTreeMap<String, String>, mode: ParseMode) -> Result<Self, ConfigError> {
        if mode == ParseMode::Strict {
            for key in ["SEED", "ADAPTER"] {
                if !map.contains_key(key) {
                    return Err(ConfigError::MissingKey(key));
                }
            }
        }
        let mut c = Config::default();
        for (k, v) in map {
            let v = v.as_str();
            match k.as_str() {
                "GROUP_NUMBER" => c.group_number = parse_positive(k, v)?,
                "DEVICE_NUMBER" => c.device_number = parse_positive(k, v)?,
                "SENSOR_NUMBER" => c.sensor_number = parse_positive(k, v)?,
                "CLIENT_NUMBER" => c.client_number = parse_positive(k, v)?,
                "BATCH_SIZE" => c.batch_size = parse_positive(k, v)?,
                "EPOCH" => c.epoch = parse_u64(k, v)?,
                "DATA_TYPE" => c.data_type = parse_with(k, v)?,
                "POINT_STEP" => c.point_step = parse_positive(k, v)?,
                "TIMESTAMP_GEN_MODE" => {
                    c.timestamp_mode = TimestampMode::from_code(parse_u64(k, v)?)
                        .ok_or_else(|| ConfigError::malformed(k, "expected 0, 1, 2 or 3"))?
                }
                "IS_MUL_DEV_BATCH" => c.is_mul_dev_batch = parse_bool(k, v)?,
                "IS_RANDOM_INTERVAL" => c.is_random_interval = parse_bool(k, v)?,
                "DISTRIBUTION_RATIO" => {
                    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
                    if parts.len() != 5 {
                        return Err(ConfigError::malformed(k, "expected five ratios a:b:c:d:e"));
                    }
                    for (slot, p) in c.distribution_ratio.iter_mut().zip(parts) {
                        *slot = parse_u64(k, p)?;
                    }
                }
                "OUT_OF_ORDER_RATIO" => c.out_of_order_ratio = parse_f64(k, v)?,
                "LAMBDA" => c.lambda = parse_f64(k, v)?,
                "ADD_NOISE" => c.add_noise = parse_bool(k, v)?,
                "SEED" => c.seed = parse_u64(k, v)?,
                "ADAPTER" => c.adapter = parse_with(k, v)?,
                "DB_URL" => c.db_url = v.to_string(),
                "DB_NAME" => c.db_name = v.to_string(),
                "ENABLE_CLEANUP" => c.enable_cleanup = parse_bool(k, v)?,
                "QUERY_TYPE" => {
                    c.query_type = match parse_u64(k, v)? {
                        q @ 1..=10 => q as u8,
                        _ => return Err(ConfigError::malformed(k, "expected 1..10")),
                    }
                }
                "QUERY_SENSOR_NUM" => c.query_sensor_num = parse_positive(k, v)?,
                "QUERY_DEVICE_NUM" => c.query_device_num = parse_positive(k, v)?,
                "QUERY_AGG_FUN" => c.query_agg_fun = parse_with(k, v)?,
                "QUERY_SPAN" => c.query_span = parse_positive(k, v)?,
                "QUERY_VAL_FILTER" => c.query_val_filter = parse_with(k, v)?,
                "TIME_INTERVAL" => c.time_interval = parse_positive(k, v)?,
                "QUERY_LIMIT" => c.query_limit = parse_positive(k, v)?,
                "DATA_EPOCH" => c.data_epoch = Some(parse_u64(k, v)?),
                "MONITOR_INTERVAL" => c.monitor_interval = parse_u64(k, v)?,
                "DATA_DIR" => c.data_dir = Some(v.to_string()).filter(|s| !s.is_empty()),
                "PROGRESS_EVERY" => c.progress_every = parse_u64(k, v)?,
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        for (key, v) in [
            ("GROUP_NUMBER", self.group_number),
            ("DEVICE_NUMBER", self.device_number),
            ("SENSOR_NUMBER", self.sensor_number),
            ("CLIENT_NUMBER", self.client_number),
            ("BATCH_SIZE", self.batch_size),
            ("POINT_STEP", self.point_step),
            ("QUERY_SENSOR_NUM", self.query_sensor_num),
            ("QUERY_DEVICE_NUM", self.query_device_num),
            ("QUERY_SPAN", self.query_span),
            ("TIME_INTERVAL", self.time_interval),
            ("QUERY_LIMIT", self.query_limit),
        ] {
            if v == 0 {
                return fail(format!("{key} must be positive"));
            }
        }
        if self.device_number < self.group_number {
            return fail("DEVICE_NUMBER must be at least GROUP_NUMBER".into());
        }
        if self.client_number > self.device_number {
            return fail("CLIENT_NUMBER must not exceed DEVICE_NUMBER".into());
        }
        if self.query_sensor_num > self.sensor_number {
            return fail("QUERY_SENSOR_NUM must not exceed SENSOR_NUMBER".into());
        }
        if self.query_device_num > self.device_number {
            return fail("QUERY_DEVICE_NUM must not exceed DEVICE_NUMBER".into());
        }
        if self.time_interval > self.query_span {
            return fail("TIME_INTERVAL must not exceed QUERY_SPAN".into());
        }
        if self.query_type == 10 && !self.query_span.is_multiple_of(self.time_interval) {
            return fail("QUERY_SPAN must be divisible by TIME_INTERVAL for QUERY_TYPE=10".into());
        }
        if self.distribution_ratio.iter().all(|&r| r == 0) {
            return fail("DISTRIBUTION_RATIO must not be all zero".into());
        }
        if !(0.0..=1.0).contains(&self.out_of_order_ratio) {
            return fail("OUT_OF_ORDER_RATIO must lie in [0, 1]".into());
        }
        if !(self.lambda > 0.0) {
            return fail("LAMBDA must be positive".into());
        }
        let extent = self
            .batch_size
            .checked_mul(self.data_epoch())
            .and_then(|n| n.checked_mul(self.point_step))
            .ok_or_else(|| ConfigError::Invalid("data time range overflows".into()))?;
        if extent > i64::MAX as u64 / 2 {
            return fail("data time range overflows".into());
        }
        if extent > 0 && self.query_span > extent {
            return fail(format!(
                "QUERY_SPAN {} exceeds the ingested data range of {} ms",
                self.query_span, extent
            ));
        }
        if self.adapter != AdapterKind::Reference && self.db_url.is_empty() {
            return fail(format!(
                "DB_URL is required for adapter {}",
                self.adapter.as_str()
            ));
        }
        Ok(())
    }

    pub fn data_epoch(&self) -> u64 {
        self.data_epoch.unwrap_or(self.epoch)
    }

    /// `[0, end)` covers every grid timestamp of the ingested dataset.
    pub fn data_time_end(&self) -> i64 {
        (self.batch_size * self.data_epoch() * self.point_step) as i64
    }

    /// Canonical `KEY=VALUE` text; parsing it in strict mode gives back `self`.
    pub fn to_properties(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let r = &self.distribution_ratio;
        let mut e = vec![
            ("GROUP_NUMBER", self.group_number.to_string()),
            ("DEVICE_NUMBER", self.device_number.to_string()),
            ("SENSOR_NUMBER", self.sensor_number.to_string()),
            ("CLIENT_NUMBER", self.client_number.to_string()),
            ("BATCH_SIZE", self.batch_size.to_string()),
            ("EPOCH", self.epoch.to_string()),
            ("DATA_TYPE", self.data_type.to_string()),
            ("POINT_STEP", self.point_step.to_string()),
            (
                "TIMESTAMP_GEN_MODE",
                (self.timestamp_mode as u8).to_string(),
            ),
            ("IS_MUL_DEV_BATCH", self.is_mul_dev_batch.to_string()),
            ("IS_RANDOM_INTERVAL", self.is_random_interval.to_string()),
            (
                "DISTRIBUTION_RATIO",
                format!("{}:{}:{}:{}:{}", r[0], r[1], r[2], r[3], r[4]),
            ),
            ("OUT_OF_ORDER_RATIO", self.out_of_order_ratio.to_string()),
            ("LAMBDA", self.lambda.to_string()),
            ("ADD_NOISE", self.add_noise.to_string()),
            ("SEED", self.seed.to_string()),
            ("ADAPTER", self.adapter.as_str().to_string()),
            ("DB_URL", self.db_url.clone()),
            ("DB_NAME", self.db_name.clone()),
            ("ENABLE_CLEANUP", self.enable_cleanup.to_string()),
            ("QUERY_TYPE", self.query_type.to_string()),
            ("QUERY_SENSOR_NUM", self.query_sensor_num.to_string()),
            ("QUERY_DEVICE_NUM", self.query_device_num.to_string()),
            ("QUERY_AGG_FUN", self.query_agg_fun.to_string()),
            ("QUERY_SPAN", self.query_span.to_string()),
            ("QUERY_VAL_FILTER", self.query_val_filter.to_string()),
            ("TIME_INTERVAL", self.time_interval.to_string()),
            ("QUERY_LIMIT", self.query_limit.to_string()),
        ];
        if let Some(d) = self.data_epoch {
            e.push(("DATA_EPOCH", d.to_string()));
        }
        e.push(("MONITOR_INTERVAL", self.monitor_interval.to_string()));
        if let Some(d) = &self.data_dir {
            e.push(("DATA_DIR", d.clone()));
        }
        e.push(("PROGRESS_EVERY", self.progress_every.to_string()));
        e
    }
}
