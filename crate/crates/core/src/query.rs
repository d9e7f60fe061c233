//! Randomised, database-agnostic query instances for the ten query types.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{AggFun, Config, ValueFilter};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::schema::{device_name, sensor_name};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryType {
    /// Q1: rows at one exact timestamp.
    ExactPoint = 1,
    /// Q2: rows in `[start, end)`.
    TimeRange = 2,
    /// Q3: first N rows by `(time, device)`.
    Limit = 3,
    /// Q4: time range plus value filter.
    RangeValueFilter = 4,
    /// Q5: Q4 with a limit.
    RangeValueFilterLimit = 5,
    /// Q6: aggregate over a time range.
    AggTime = 6,
    /// Q7: aggregate over rows passing the value filter.
    AggValue = 7,
    /// Q8: Q6 and Q7 filters together.
    AggTimeValue = 8,
    /// Q9: latest row per device.
    Latest = 9,
    /// Q10: per-interval aggregate over a time range.
    GroupByTime = 10,
}

impl QueryType {
    pub const ALL: [QueryType; 10] = [
        QueryType::ExactPoint,
        QueryType::TimeRange,
        QueryType::Limit,
        QueryType::RangeValueFilter,
        QueryType::RangeValueFilterLimit,
        QueryType::AggTime,
        QueryType::AggValue,
        QueryType::AggTimeValue,
        QueryType::Latest,
        QueryType::GroupByTime,
    ];

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get((code as usize).checked_sub(1)?).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn has_range(self) -> bool {
        use QueryType::*;
        matches!(
            self,
            TimeRange
                | RangeValueFilter
                | RangeValueFilterLimit
                | AggTime
                | AggTimeValue
                | GroupByTime
        )
    }

    pub fn has_value_filter(self) -> bool {
        use QueryType::*;
        matches!(
            self,
            RangeValueFilter | RangeValueFilterLimit | AggValue | AggTimeValue
        )
    }

    pub fn has_agg(self) -> bool {
        use QueryType::*;
        matches!(self, AggTime | AggValue | AggTimeValue | GroupByTime)
    }

    pub fn has_limit(self) -> bool {
        matches!(self, QueryType::Limit | QueryType::RangeValueFilterLimit)
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeFilter {
    None,
    /// `time = t`
    Point(i64),
    /// `start <= time < end`
    Range {
        start: i64,
        end: i64,
    },
}

impl TimeFilter {
    pub fn contains(&self, t: i64) -> bool {
        match *self {
            TimeFilter::None => true,
            TimeFilter::Point(p) => t == p,
            TimeFilter::Range { start, end } => start <= t && t < end,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryDescriptor {
    pub qtype: QueryType,
    pub devices: Vec<String>,
    pub sensors: Vec<String>,
    pub time: TimeFilter,
    /// Applied to every selected sensor, conjunctively.
    pub value_filter: Option<ValueFilter>,
    pub agg: Option<AggFun>,
    pub limit: Option<u64>,
    pub interval: Option<u64>,
}

impl QueryDescriptor {
    /// Check that exactly the fields required by the query type are present.
    pub fn validate(&self) -> Result<()> {
        let q = self.qtype;
        let bad = |m: &str| Err(Error::Descriptor(format!("{q}: {m}")));
        if self.devices.is_empty() || self.sensors.is_empty() {
            return bad("needs at least one device and one sensor");
        }
        match (q, self.time) {
            (QueryType::ExactPoint, TimeFilter::Point(_)) => {}
            (QueryType::ExactPoint, _) => return bad("needs an exact timestamp"),
            (_, TimeFilter::Range { start, end }) if q.has_range() => {
                if start >= end {
                    return bad("empty time range");
                }
            }
            (_, TimeFilter::None) if !q.has_range() => {}
            _ => return bad("time filter does not match query type"),
        }
        if q.has_value_filter() != self.value_filter.is_some() {
            return bad("value filter presence does not match query type");
        }
        if q.has_agg() != self.agg.is_some() {
            return bad("aggregation presence does not match query type");
        }
        if q.has_limit() != self.limit.is_some() {
            return bad("limit presence does not match query type");
        }
        if (q == QueryType::GroupByTime) != self.interval.is_some() {
            return bad("group interval presence does not match query type");
        }
        Ok(())
    }
}

/// One-line canonical text, e.g.
/// `Q10 devices=d_3,d_8 sensors=s_0,s_1 time=[0,600000) agg=max interval=60000`.
impl fmt::Display for QueryDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} devices={} sensors={}",
            self.qtype,
            self.devices.join(","),
            self.sensors.join(",")
        )?;
        match self.time {
            TimeFilter::None => {}
            TimeFilter::Point(t) => write!(f, " time=@{t}")?,
            TimeFilter::Range { start, end } => write!(f, " time=[{start},{end})")?,
        }
        if let Some(v) = &self.value_filter {
            write!(f, " filter={v}")?;
        }
        if let Some(a) = self.agg {
            write!(f, " agg={a}")?;
        }
        if let Some(n) = self.limit {
            write!(f, " limit={n}")?;
        }
        if let Some(i) = self.interval {
            write!(f, " interval={i}")?;
        }
        Ok(())
    }
}

impl FromStr for QueryDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |m: String| Error::Descriptor(m);
        let mut tokens = s.split_whitespace();
        let qtype = tokens
            .next()
            .and_then(|t| t.strip_prefix('Q'))
            .and_then(|n| n.parse().ok())
            .and_then(QueryType::from_code)
            .ok_or_else(|| err(format!("bad query type in {s:?}")))?;
        let mut d = QueryDescriptor {
            qtype,
            devices: Vec::new(),
            sensors: Vec::new(),
            time: TimeFilter::None,
            value_filter: None,
            agg: None,
            limit: None,
            interval: None,
        };
        let list = |v: &str| {
            v.split(',')
                .filter(|x| !x.is_empty())
                .map(String::from)
                .collect()
        };
        let int = |k: &str, v: &str| -> Result<i64> {
            v.parse()
                .map_err(|_| err(format!("bad integer for {k}: {v:?}")))
        };
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {tok:?}")))?;
            match k {
                "devices" => d.devices = list(v),
                "sensors" => d.sensors = list(v),
                "time" => {
                    d.time = if let Some(p) = v.strip_prefix('@') {
                        TimeFilter::Point(int(k, p)?)
                    } else {
                        let inner = v
                            .strip_prefix('[')
                            .and_then(|x| x.strip_suffix(')'))
                            .ok_or_else(|| err(format!("bad time range {v:?}")))?;
                        let (a, b) = inner
                            .split_once(',')
                            .ok_or_else(|| err(format!("bad time range {v:?}")))?;
                        TimeFilter::Range {
                            start: int(k, a)?,
                            end: int(k, b)?,
                        }
                    }
                }
                "filter" => d.value_filter = Some(v.parse().map_err(err)?),
                "agg" => d.agg = Some(v.parse().map_err(err)?),
                "limit" => d.limit = Some(int(k, v)? as u64),
                "interval" => d.interval = Some(int(k, v)? as u64),
                other => return Err(err(format!("unknown field {other:?}"))),
            }
        }
        d.validate()?;
        Ok(d)
    }
}

/// `devices * sensors * (span / interval)` result points of a Q10 query over
/// fully populated data.
pub fn expected_group_by_points(d: &QueryDescriptor) -> Result<u64> {
    let (TimeFilter::Range { start, end }, Some(interval)) = (d.time, d.interval) else {
        return Err(Error::Descriptor(
            "expected points are defined for Q10 only".into(),
        ));
    };
    let span = (end - start) as u64;
    if !span.is_multiple_of(interval) {
        return Err(Error::IndivisibleSpan { span, interval });
    }
    Ok(d.devices.len() as u64 * d.sensors.len() as u64 * (span / interval))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Seeded query stream for one client.
#[derive(Debug, Clone)]
pub struct QueryGenerator {
    qtype: QueryType,
    device_number: usize,
    sensor_number: usize,
    query_device_num: usize,
    query_sensor_num: usize,
    span: u64,
    step: u64,
    interval: u64,
    data_end: i64,
    filter: ValueFilter,
    agg: AggFun,
    limit: u64,
    rng: ChaCha8Rng,
}

pub fn query_seed(global: u64, client: u64) -> u64 {
    rng::mix(rng::mix(global, tag::QUERY), client)
}

impl QueryGenerator {
    pub fn new(cfg: &Config, client: u64) -> Result<Self> {
        let qtype = QueryType::from_code(cfg.query_type)
            .ok_or_else(|| Error::Query(format!("bad query type {}", cfg.query_type)))?;
        Ok(Self::with_type(cfg, client, qtype))
    }

    /// Same stream as [`QueryGenerator::new`] but with an explicit type.
    pub fn with_type(cfg: &Config, client: u64, qtype: QueryType) -> Self {
        QueryGenerator {
            qtype,
            device_number: cfg.device_number as usize,
            sensor_number: cfg.sensor_number as usize,
            query_device_num: cfg.query_device_num as usize,
            query_sensor_num: cfg.query_sensor_num as usize,
            span: cfg.query_span,
            step: cfg.point_step,
            interval: cfg.time_interval,
            data_end: cfg.data_time_end(),
            filter: cfg.query_val_filter,
            agg: cfg.query_agg_fun,
            limit: cfg.query_limit,
            rng: rng::stream(query_seed(cfg.seed, client)),
        }
    }

    /// Draws are made in a fixed order (devices, sensors, range start, exact
    /// point) regardless of type, so equally seeded generators of different
    /// types select the same series and windows.
    pub fn next_query(&mut self) -> Result<QueryDescriptor> {
        if self.data_end <= 0 {
            return Err(Error::Query("no ingested data to query".into()));
        }
        if self.span as i64 > self.data_end {
            return Err(Error::Query(format!(
                "query span {} exceeds data range {}",
                self.span, self.data_end
            )));
        }
        let mut devices =
            index::sample(&mut self.rng, self.device_number, self.query_device_num).into_vec();
        devices.sort_unstable();
        let mut sensors =
            index::sample(&mut self.rng, self.sensor_number, self.query_sensor_num).into_vec();
        sensors.sort_unstable();

        // Q10 windows start on an interval boundary so buckets tile the span
        let align = if self.qtype == QueryType::GroupByTime {
            self.step / gcd(self.step, self.interval) * self.interval
        } else {
            self.step
        };
        let slots = (self.data_end as u64 - self.span) / align + 1;
        let start = (align * self.rng.gen_range(0..slots)) as i64;
        let point = (self.step
            * self
                .rng
                .gen_range(0..(self.data_end as u64).div_ceil(self.step)))
            as i64;

        let q = self.qtype;
        let d = QueryDescriptor {
            qtype: q,
            devices: devices.into_iter().map(device_name).collect(),
            sensors: sensors.into_iter().map(sensor_name).collect(),
            time: if q == QueryType::ExactPoint {
                TimeFilter::Point(point)
            } else if q.has_range() {
                TimeFilter::Range {
                    start,
                    end: start + self.span as i64,
                }
            } else {
                TimeFilter::None
            },
            value_filter: q.has_value_filter().then_some(self.filter),
            agg: q.has_agg().then_some(self.agg),
            limit: q.has_limit().then_some(self.limit),
            interval: (q == QueryType::GroupByTime).then_some(self.interval),
        };
        debug_assert!(d.validate().is_ok());
        Ok(d)
    }
}
