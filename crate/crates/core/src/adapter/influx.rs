//! InfluxDB 1.x adapter. Device groups map to measurements, devices to the
//! `device` tag, and sensors to fields.
//!
//! Writes go to `POST /write?db=<name>&precision=ns` with a line-protocol
//! body; queries to `GET /query?db=<name>&epoch=ms&q=<InfluxQL>`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use reqwest::blocking::{Client, RequestBuilder};
use serde_json::Value as Json;
use url::Url;

use crate::config::ValueFilter;
use crate::error::{Error, Result};
use crate::ingestion::Batch;
use crate::query::{QueryDescriptor, QueryType, TimeFilter};
use crate::schema::Schema;
use crate::series::Value;

use super::reference::agg_label;
use super::{adapter_err, Row, TsdbAdapter};

fn escape_key(s: &str, out: &mut String) {
    for c in s.chars() {
        if matches!(c, ',' | '=' | ' ') {
            out.push('\\');
        }
        out.push(c);
    }
}

fn escape_measurement(s: &str, out: &mut String) {
    for c in s.chars() {
        if matches!(c, ',' | ' ') {
            out.push('\\');
        }
        out.push(c);
    }
}

fn field_value(v: &Value, out: &mut String) -> Result<()> {
    match v {
        Value::Float(x) if x.is_finite() => write!(out, "{x:?}").unwrap(),
        Value::Double(x) if x.is_finite() => write!(out, "{x:?}").unwrap(),
        Value::Float(_) | Value::Double(_) => {
            return Err(Error::Encode(format!("non-finite float {v:?}")));
        }
        Value::Int32(x) => write!(out, "{x}i").unwrap(),
        Value::Int64(x) => write!(out, "{x}i").unwrap(),
        Value::Text(s) => {
            out.push('"');
            for c in s.chars() {
                if matches!(c, '"' | '\\') {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
        }
    }
    Ok(())
}

/// One line per record:
/// `<group>,device=<d> s_0=<v>,...,s_m=<v> <timestamp in ns>`.
pub fn encode_line_protocol(batch: &Batch, schema: &Schema) -> Result<String> {
    let mut out = String::new();
    for r in &batch.records {
        let device = &schema.devices[r.device];
        escape_measurement(&schema.groups[device.group], &mut out);
        out.push_str(",device=");
        escape_key(&device.name, &mut out);
        for (i, (sensor, v)) in schema.sensors.iter().zip(&r.values).enumerate() {
            out.push(if i == 0 { ' ' } else { ',' });
            escape_key(sensor, &mut out);
            out.push('=');
            field_value(v, &mut out)?;
        }
        let ns = r
            .timestamp
            .checked_mul(1_000_000)
            .ok_or(Error::Overflow("nanosecond timestamp"))?;
        writeln!(out, " {ns}").unwrap();
    }
    Ok(out)
}

fn ident(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn literal(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

fn value_predicate(sensors: &[String], f: &ValueFilter) -> String {
    sensors
        .iter()
        .map(|s| format!("{} {} {}", ident(s), f.op.symbol(), f.threshold))
        .collect::<Vec<_>>()
        .join(" AND ")
}

/// InfluxQL for a descriptor. Results are grouped by the `device` tag so they
/// can be normalised per device. Limits apply per device here and are cut to
/// the global first N rows by [`InfluxAdapter`].
pub fn render_influxql(q: &QueryDescriptor, schema: &Schema) -> String {
    let fields: Vec<String> = match q.agg {
        Some(f) => q
            .sensors
            .iter()
            .map(|s| format!("{f}({}) AS {}", ident(s), ident(&agg_label(f, s))))
            .collect(),
        None => q.sensors.iter().map(|s| ident(s)).collect(),
    };
    let groups: BTreeSet<&str> = q
        .devices
        .iter()
        .filter_map(|d| schema.group_of(d))
        .collect();
    let from: Vec<String> = if groups.is_empty() {
        schema.groups.iter().map(|g| ident(g)).collect()
    } else {
        groups.iter().map(|g| ident(g)).collect()
    };
    let devices: Vec<String> = q
        .devices
        .iter()
        .map(|d| format!("\"device\" = {}", literal(d)))
        .collect();
    let mut clauses = vec![format!("({})", devices.join(" OR "))];
    match q.time {
        TimeFilter::None => {}
        TimeFilter::Point(t) => clauses.push(format!("time = {t}ms")),
        TimeFilter::Range { start, end } => {
            clauses.push(format!("time >= {start}ms AND time < {end}ms"));
        }
    }
    if let Some(f) = &q.value_filter {
        clauses.push(value_predicate(&q.sensors, f));
    }
    let mut s = format!(
        "SELECT {} FROM {} WHERE {}",
        fields.join(", "),
        from.join(", "),
        clauses.join(" AND ")
    );
    match q.qtype {
        QueryType::GroupByTime => write!(
            s,
            " GROUP BY time({}ms), \"device\" fill(none)",
            q.interval.unwrap_or(1)
        )
        .unwrap(),
        _ => s.push_str(" GROUP BY \"device\""),
    }
    match q.qtype {
        QueryType::Limit | QueryType::RangeValueFilterLimit => {
            write!(s, " ORDER BY time ASC LIMIT {}", q.limit.unwrap_or(0)).unwrap()
        }
        QueryType::Latest => s.push_str(" ORDER BY time DESC LIMIT 1"),
        _ => {}
    }
    s
}

fn json_number(v: &Json) -> Option<f64> {
    match v {
        Json::Number(n) => n.as_f64(),
        Json::String(s) => s.parse().ok(),
        Json::Bool(b) => Some(f64::from(u8::from(*b))),
        _ => None,
    }
}

/// A wide result row before normalisation.
struct WideRow {
    device: String,
    time: i64,
    cells: Vec<(String, f64)>,
}

/// Normalise an `/query` response body for descriptor `q`.
pub fn parse_query_response(body: &str, q: &QueryDescriptor) -> Result<Vec<Row>> {
    let doc: Json = serde_json::from_str(body).map_err(adapter_err)?;
    if let Some(e) = doc.get("error").and_then(Json::as_str) {
        return Err(Error::Adapter(e.to_string()));
    }
    let mut wide = Vec::new();
    for result in doc
        .get("results")
        .and_then(Json::as_array)
        .into_iter()
        .flatten()
    {
        if let Some(e) = result.get("error").and_then(Json::as_str) {
            return Err(Error::Adapter(e.to_string()));
        }
        for series in result
            .get("series")
            .and_then(Json::as_array)
            .into_iter()
            .flatten()
        {
            let device = series
                .pointer("/tags/device")
                .and_then(Json::as_str)
                .ok_or_else(|| adapter_err("series without device tag"))?
                .to_string();
            let columns: Vec<&str> = series
                .get("columns")
                .and_then(Json::as_array)
                .map(|c| c.iter().filter_map(Json::as_str).collect())
                .unwrap_or_default();
            let time_col = columns.iter().position(|&c| c == "time");
            for values in series
                .get("values")
                .and_then(Json::as_array)
                .into_iter()
                .flatten()
            {
                let Some(values) = values.as_array() else {
                    continue;
                };
                let time = time_col
                    .and_then(|i| values.get(i))
                    .and_then(Json::as_i64)
                    .unwrap_or(0);
                let cells = columns
                    .iter()
                    .zip(values)
                    .filter(|(c, _)| **c != "time")
                    .filter_map(|(c, v)| json_number(v).map(|v| (c.to_string(), v)))
                    .collect();
                wide.push(WideRow {
                    device: device.clone(),
                    time,
                    cells,
                });
            }
        }
    }
    if q.qtype.has_limit() {
        wide.sort_by(|a, b| (a.time, &a.device).cmp(&(b.time, &b.device)));
        wide.truncate(q.limit.unwrap_or(0) as usize);
    }
    let keep_time = !matches!(
        q.qtype,
        QueryType::AggTime | QueryType::AggValue | QueryType::AggTimeValue
    );
    Ok(wide
        .into_iter()
        .flat_map(|w| {
            let (device, time) = (w.device, w.time);
            w.cells.into_iter().map(move |(label, value)| Row {
                device: device.clone(),
                label,
                time: keep_time.then_some(time),
                value,
            })
        })
        .collect())
}

pub struct InfluxAdapter {
    client: Client,
    base: Url,
    db: String,
    auth: Option<(String, Option<String>)>,
    schema: Arc<Schema>,
}

impl InfluxAdapter {
    /// `url` is the server root, e.g. `http://localhost:8086`. Credentials in
    /// the URL are sent as basic auth.
    pub fn new(url: &str, db: &str, schema: Arc<Schema>) -> Result<Self> {
        let mut base =
            Url::parse(url).map_err(|e| adapter_err(format!("bad DB_URL {url:?}: {e}")))?;
        let auth = (!base.username().is_empty()).then(|| {
            (
                base.username().to_string(),
                base.password().map(str::to_string),
            )
        });
        let _ = base.set_username("");
        let _ = base.set_password(None);
        let client = Client::builder()
            .no_proxy()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(adapter_err)?;
        Ok(InfluxAdapter {
            client,
            base,
            db: db.to_string(),
            auth,
            schema,
        })
    }

    fn endpoint(&self, path: &str) -> Result<Url> {
        self.base.join(path).map_err(adapter_err)
    }

    fn with_auth(&self, rb: RequestBuilder) -> RequestBuilder {
        match &self.auth {
            Some((u, p)) => rb.basic_auth(u, p.as_ref()),
            None => rb,
        }
    }

    /// Send and read the whole body; the elapsed time is the TTLB.
    fn send(&self, rb: RequestBuilder) -> Result<(String, Duration)> {
        let req = self.with_auth(rb);
        let start = Instant::now();
        let resp = req.send().map_err(adapter_err)?;
        let status = resp.status();
        let body = resp.text().map_err(adapter_err)?;
        let elapsed = start.elapsed();
        if !status.is_success() {
            return Err(Error::Adapter(format!("HTTP {status}: {}", body.trim())));
        }
        Ok((body, elapsed))
    }

    fn admin(&self, statement: &str) -> Result<()> {
        let url = self.endpoint("query")?;
        let (body, _) = self.send(self.client.post(url).form(&[("q", statement)]))?;
        let doc: Json = serde_json::from_str(&body).map_err(adapter_err)?;
        if let Some(e) = doc.pointer("/results/0/error").and_then(Json::as_str) {
            return Err(Error::Adapter(e.to_string()));
        }
        Ok(())
    }
}

impl TsdbAdapter for InfluxAdapter {
    fn init_schema(&mut self, schema: &Schema) -> Result<()> {
        self.schema = Arc::new(schema.clone());
        self.admin(&format!("CREATE DATABASE {}", ident(&self.db)))
    }

    fn cleanup(&mut self) -> Result<()> {
        self.admin(&format!("DROP DATABASE {}", ident(&self.db)))
    }

    fn insert_batch(&mut self, batch: &Batch) -> Result<Duration> {
        let body = encode_line_protocol(batch, &self.schema)?;
        let mut url = self.endpoint("write")?;
        url.query_pairs_mut()
            .append_pair("db", &self.db)
            .append_pair("precision", "ns");
        let (_, elapsed) = self.send(self.client.post(url).body(body))?;
        Ok(elapsed)
    }

    fn execute_query(&mut self, q: &QueryDescriptor) -> Result<(Vec<Row>, Duration)> {
        let mut url = self.endpoint("query")?;
        url.query_pairs_mut()
            .append_pair("db", &self.db)
            .append_pair("epoch", "ms")
            .append_pair("q", &render_influxql(q, &self.schema));
        let (body, elapsed) = self.send(self.client.get(url))?;
        Ok((parse_query_response(&body, q)?, elapsed))
    }
}
