//! Periodic system resource sampling.
//!
//! The local probe reads Linux `/proc` counters below a configurable root so
//! it can be pointed at fixture trees. Rates are counter deltas divided by
//! monotonic elapsed time. A counter that cannot be read yields `None` for
//! the fields derived from it, never a zero.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// Smallest accepted sampling interval.
pub const MIN_INTERVAL_MS: u64 = 100;

pub const CSV_HEADER: &str =
    "unix_ms,valid,cpu_usage,mem_used_bytes,process_mem_bytes,disk_io_tps,\
disk_read_bps,disk_write_bps,net_recv_bps,net_send_bps,data_dir_used_bytes";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonitorSample {
    pub unix_ms: i64,
    pub valid: bool,
    /// Busy fraction of all cores together, 0..1.
    pub cpu_usage: Option<f64>,
    pub mem_used: Option<u64>,
    pub process_mem: Option<u64>,
    pub disk_io_tps: Option<f64>,
    pub disk_read_bps: Option<f64>,
    pub disk_write_bps: Option<f64>,
    pub net_recv_bps: Option<f64>,
    pub net_send_bps: Option<f64>,
    pub data_dir_used: Option<u64>,
}

impl MonitorSample {
    pub fn invalid(unix_ms: i64) -> Self {
        MonitorSample {
            unix_ms,
            ..Default::default()
        }
    }

    /// CSV fields in header order; unavailable values are empty.
    pub fn csv_fields(&self) -> Vec<String> {
        fn o<T: fmt::Display>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        let f4 = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        let f1 = |v: Option<f64>| v.map(|v| format!("{v:.1}")).unwrap_or_default();
        vec![
            self.unix_ms.to_string(),
            self.valid.to_string(),
            f4(self.cpu_usage),
            o(self.mem_used),
            o(self.process_mem),
            f1(self.disk_io_tps),
            f1(self.disk_read_bps),
            f1(self.disk_write_bps),
            f1(self.net_recv_bps),
            f1(self.net_send_bps),
            o(self.data_dir_used),
        ]
    }

    pub fn to_csv_line(&self) -> String {
        self.csv_fields().join(",")
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
        if f.len() != 11 {
            return Err(Error::MonitorRecord(format!(
                "expected 11 fields, got {}",
                f.len()
            )));
        }
        fn opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::MonitorRecord(format!("bad field {s:?}")))
        }
        let bad = |s: &str| Error::MonitorRecord(format!("bad field {s:?}"));
        Ok(MonitorSample {
            unix_ms: f[0].parse().map_err(|_| bad(f[0]))?,
            valid: f[1].parse().map_err(|_| bad(f[1]))?,
            cpu_usage: opt(f[2])?,
            mem_used: opt(f[3])?,
            process_mem: opt(f[4])?,
            disk_io_tps: opt(f[5])?,
            disk_read_bps: opt(f[6])?,
            disk_write_bps: opt(f[7])?,
            net_recv_bps: opt(f[8])?,
            net_send_bps: opt(f[9])?,
            data_dir_used: opt(f[10])?,
        })
    }
}

/// Raw cumulative counters at one instant.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub at: Instant,
    /// `(busy, total)` jiffies summed over all cores.
    pub cpu: Option<(u64, u64)>,
    pub mem_used: Option<u64>,
    pub process_mem: Option<u64>,
    /// `(completed transfers, bytes read, bytes written)`.
    pub disk: Option<(u64, u64, u64)>,
    /// `(bytes received, bytes sent)` excluding loopback.
    pub net: Option<(u64, u64)>,
    pub data_dir_used: Option<u64>,
}

/// Turn a snapshot and its predecessor into a sample. Without a predecessor
/// every rate field is unavailable.
pub fn derive_sample(unix_ms: i64, prev: Option<&Snapshot>, cur: &Snapshot) -> MonitorSample {
    let mut s = MonitorSample {
        unix_ms,
        valid: cur.cpu.is_some() || cur.mem_used.is_some(),
        mem_used: cur.mem_used,
        process_mem: cur.process_mem,
        data_dir_used: cur.data_dir_used,
        ..Default::default()
    };
    let Some(prev) = prev else { return s };
    let secs = cur.at.saturating_duration_since(prev.at).as_secs_f64();
    if secs <= 0.0 {
        return s;
    }
    let rate = |a: u64, b: u64| b.checked_sub(a).map(|d| d as f64 / secs);
    if let (Some((b0, t0)), Some((b1, t1))) = (prev.cpu, cur.cpu) {
        if t1 > t0 && b1 >= b0 {
            s.cpu_usage = Some(((b1 - b0) as f64 / (t1 - t0) as f64).min(1.0));
        }
    }
    if let (Some(a), Some(b)) = (prev.disk, cur.disk) {
        s.disk_io_tps = rate(a.0, b.0);
        s.disk_read_bps = rate(a.1, b.1);
        s.disk_write_bps = rate(a.2, b.2);
    }
    if let (Some(a), Some(b)) = (prev.net, cur.net) {
        s.net_recv_bps = rate(a.0, b.0);
        s.net_send_bps = rate(a.1, b.1);
    }
    s
}

/// A source of monitor samples.
pub trait Probe: Send {
    /// Take an initial reading so the first sample can report rates.
    fn prime(&mut self) {}
    fn sample(&mut self, unix_ms: i64) -> MonitorSample;
}

/// Reads `/proc` style counters under `root`.
#[derive(Debug, Clone)]
pub struct LocalProbe {
    root: PathBuf,
    pid: Option<u32>,
    data_dir: Option<PathBuf>,
    prev: Option<Snapshot>,
}

impl LocalProbe {
    /// `root` is the directory holding `stat`, `meminfo`, `diskstats`,
    /// `net/dev` and `<pid>/status`; normally `/proc`.
    pub fn new(root: impl Into<PathBuf>) -> Self {
        LocalProbe {
            root: root.into(),
            pid: None,
            data_dir: None,
            prev: None,
        }
    }

    pub fn with_pid(mut self, pid: Option<u32>) -> Self {
        self.pid = pid;
        self
    }

    pub fn with_data_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.data_dir = dir;
        self
    }

    fn read(&self, rel: &str) -> Option<String> {
        std::fs::read_to_string(self.root.join(rel)).ok()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            at: Instant::now(),
            cpu: self.read("stat").as_deref().and_then(parse_cpu),
            mem_used: self.read("meminfo").as_deref().and_then(parse_meminfo),
            process_mem: self
                .pid
                .and_then(|p| self.read(&format!("{p}/status")))
                .as_deref()
                .and_then(parse_vmrss),
            disk: self.read("diskstats").as_deref().and_then(parse_diskstats),
            net: self.read("net/dev").as_deref().and_then(parse_net_dev),
            data_dir_used: self.data_dir.as_deref().and_then(dir_size),
        }
    }
}

impl Probe for LocalProbe {
    fn prime(&mut self) {
        self.prev = Some(self.snapshot());
    }

    fn sample(&mut self, unix_ms: i64) -> MonitorSample {
        let cur = self.snapshot();
        let s = derive_sample(unix_ms, self.prev.as_ref(), &cur);
        self.prev = Some(cur);
        s
    }
}

fn parse_cpu(text: &str) -> Option<(u64, u64)> {
    let line = text.lines().find(|l| l.starts_with("cpu "))?;
    let v: Vec<u64> = line
        .split_whitespace()
        .skip(1)
        .take(8)
        .map(|x| x.parse().ok())
        .collect::<Option<_>>()?;
    if v.len() < 4 {
        return None;
    }
    let total: u64 = v.iter().sum();
    let idle = v[3] + v.get(4).copied().unwrap_or(0);
    Some((total - idle, total))
}

fn kb_field(text: &str, key: &str) -> Option<u64> {
    let line = text.lines().find(|l| l.starts_with(key))?;
    let kb: u64 = line[key.len()..].split_whitespace().next()?.parse().ok()?;
    Some(kb * 1024)
}

fn parse_meminfo(text: &str) -> Option<u64> {
    let total = kb_field(text, "MemTotal:")?;
    let avail = kb_field(text, "MemAvailable:")?;
    Some(total.saturating_sub(avail))
}

fn parse_vmrss(text: &str) -> Option<u64> {
    kb_field(text, "VmRSS:")
}

/// Sums whole-disk counters. Partitions (names extending another listed
/// name) and loop, ram and device-mapper nodes are skipped so nothing is
/// counted twice.
fn parse_diskstats(text: &str) -> Option<(u64, u64, u64)> {
    let rows: Vec<Vec<&str>> = text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>())
        .filter(|f| f.len() >= 10)
        .collect();
    if rows.is_empty() {
        return None;
    }
    let names: Vec<&str> = rows.iter().map(|f| f[2]).collect();
    let mut acc = (0u64, 0u64, 0u64);
    for f in &rows {
        let name = f[2];
        if ["loop", "ram", "dm-", "zram"]
            .iter()
            .any(|p| name.starts_with(p))
            || names.iter().any(|n| *n != name && name.starts_with(n))
        {
            continue;
        }
        let n = |i: usize| f[i].parse::<u64>().ok();
        acc.0 += n(3)? + n(7)?;
        acc.1 += n(5)? * 512;
        acc.2 += n(9)? * 512;
    }
    Some(acc)
}

fn parse_net_dev(text: &str) -> Option<(u64, u64)> {
    let mut acc = (0u64, 0u64);
    let mut seen = false;
    for line in text.lines().skip(2) {
        let (iface, rest) = line.split_once(':')?;
        if iface.trim() == "lo" {
            continue;
        }
        let f: Vec<u64> = rest
            .split_whitespace()
            .map(|x| x.parse().ok())
            .collect::<Option<_>>()?;
        if f.len() < 9 {
            return None;
        }
        acc.0 += f[0];
        acc.1 += f[8];
        seen = true;
    }
    seen.then_some(acc)
}

/// Total size of regular files below `dir`.
pub fn dir_size(dir: &Path) -> Option<u64> {
    if !dir.is_dir() {
        return None;
    }
    Some(
        walkdir::WalkDir::new(dir)
            .into_iter()
            .filter_map(|e| e.ok())
            .filter_map(|e| e.metadata().ok())
            .filter(|m| m.is_file())
            .map(|m| m.len())
            .sum(),
    )
}

/// Pulls samples from a stats endpoint that answers `GET` with one CSV
/// sample line (see [`serve_stats`]).
pub struct RemoteProbe {
    client: reqwest::blocking::Client,
    url: String,
}

impl RemoteProbe {
    pub fn new(url: &str) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .no_proxy()
            .timeout(Duration::from_secs(5))
            .build()
            .map_err(|e| Error::Adapter(e.to_string()))?;
        Ok(RemoteProbe {
            client,
            url: url.to_string(),
        })
    }

    fn fetch(&self) -> Result<MonitorSample> {
        let body = self
            .client
            .get(&self.url)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text())
            .map_err(|e| Error::MonitorRecord(e.to_string()))?;
        let line = body.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        MonitorSample::from_csv_line(line)
    }
}

impl Probe for RemoteProbe {
    fn sample(&mut self, unix_ms: i64) -> MonitorSample {
        match self.fetch() {
            // timestamps come from the local clock so the series stays monotone
            Ok(s) => MonitorSample { unix_ms, ..s },
            Err(e) => {
                log::warn!("remote probe {}: {e}", self.url);
                MonitorSample::invalid(unix_ms)
            }
        }
    }
}

/// Handle of a running stats endpoint; dropping it stops the server.
pub struct StatsServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StatsServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for StatsServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Serve one CSV sample per HTTP request on `addr`, for monitoring a
/// database host from the benchmark machine.
pub fn serve_stats(addr: &str, mut probe: Box<dyn Probe>) -> Result<StatsServer> {
    let listener = TcpListener::bind(addr).map_err(|e| Error::io(addr, e))?;
    let addr = listener
        .local_addr()
        .map_err(|e| Error::io("stats listener", e))?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    probe.prime();
    let handle = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(mut conn) = conn else { continue };
            let _ = conn.set_read_timeout(Some(Duration::from_secs(2)));
            let mut reader = BufReader::new(&mut conn);
            let mut line = String::new();
            // drain the request head
            while reader.read_line(&mut line).map(|n| n > 2).unwrap_or(false) {
                line.clear();
            }
            let body = probe
                .sample(chrono::Utc::now().timestamp_millis())
                .to_csv_line()
                + "\n";
            let _ = write!(
                conn,
                "HTTP/1.1 200 OK\r\nContent-Type: text/csv\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = conn.flush();
            let mut sink = [0u8; 64];
            let _ = conn.set_read_timeout(Some(Duration::from_millis(10)));
            let _ = conn.read(&mut sink);
        }
    });
    Ok(StatsServer {
        addr,
        stop,
        handle: Some(handle),
    })
}

/// Sample `probe` every `interval_ms` until `stop` fires or disconnects,
/// handing each sample to `sink`. Sample times are the start wall-clock plus
/// monotonic offsets, so they are strictly increasing. Sink errors are
/// logged and sampling continues. Returns the number of samples taken.
pub fn run_monitor(
    interval_ms: u64,
    probe: &mut dyn Probe,
    sink: &mut dyn FnMut(MonitorSample) -> Result<()>,
    stop: &Receiver<()>,
) -> Result<u64> {
    if interval_ms < MIN_INTERVAL_MS {
        return Err(Error::MonitorInterval(interval_ms));
    }
    let interval = Duration::from_millis(interval_ms);
    probe.prime();
    let start = Instant::now();
    let start_unix = chrono::Utc::now().timestamp_millis();
    let mut last_ms = i64::MIN;
    let mut n = 0u64;
    loop {
        // deadline-based so per-sample work does not accumulate as drift
        let deadline = start + interval * (n as u32 + 1);
        let wait = deadline.saturating_duration_since(Instant::now());
        match stop.recv_timeout(wait) {
            Err(RecvTimeoutError::Timeout) => {}
            Ok(()) | Err(RecvTimeoutError::Disconnected) => break,
        }
        let mut ms = start_unix + start.elapsed().as_millis() as i64;
        if ms <= last_ms {
            ms = last_ms + 1;
        }
        last_ms = ms;
        if let Err(e) = sink(probe.sample(ms)) {
            log::warn!("monitor sink: {e}");
        }
        n += 1;
    }
    Ok(n)
}
