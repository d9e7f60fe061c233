//! Batch assembly: each record carries one timestamp and one value per sensor.

use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::schema::{partition_devices, Schema};
use crate::series::Value;
use crate::timestamp::DeviceTimeline;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Device index; the name is `schema.devices[device].name`.
    pub device: usize,
    pub timestamp: i64,
    /// One value per sensor, `s_0..s_{m-1}`.
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub epoch: u64,
    pub records: Vec<Record>,
}

impl Batch {
    pub fn points(&self) -> u64 {
        self.records.iter().map(|r| r.values.len() as u64).sum()
    }
}

/// `BATCH_SIZE * EPOCH * SENSOR_NUMBER * DEVICE_NUMBER`
pub fn total_points(cfg: &Config) -> Result<u64> {
    cfg.batch_size
        .checked_mul(cfg.epoch)
        .and_then(|n| n.checked_mul(cfg.sensor_number))
        .and_then(|n| n.checked_mul(cfg.device_number))
        .ok_or(Error::Overflow("total points"))
}

/// Points written to each individual series over a full run.
pub fn points_per_series(cfg: &Config) -> Result<u64> {
    cfg.batch_size
        .checked_mul(cfg.epoch)
        .ok_or(Error::Overflow("points per series"))
}

/// Generates the batches of one client's device partition.
#[derive(Debug)]
pub struct ClientWorkload {
    cfg: Arc<Config>,
    schema: Arc<Schema>,
    devices: Range<usize>,
    timelines: Vec<DeviceTimeline>,
}

impl ClientWorkload {
    pub fn new(cfg: Arc<Config>, schema: Arc<Schema>, devices: Range<usize>) -> Self {
        let timelines = devices
            .clone()
            .map(|d| DeviceTimeline::new(&cfg, d as u64))
            .collect();
        ClientWorkload {
            cfg,
            schema,
            devices,
            timelines,
        }
    }

    /// One workload per client, in client order.
    pub fn for_all_clients(cfg: Arc<Config>, schema: Arc<Schema>) -> Vec<Self> {
        partition_devices(&cfg)
            .into_iter()
            .map(|r| ClientWorkload::new(cfg.clone(), schema.clone(), r))
            .collect()
    }

    pub fn devices(&self) -> Range<usize> {
        self.devices.clone()
    }

    /// Batch for `device` in `epoch`. Each device's epochs must be requested
    /// in order.
    pub fn next_batch(&mut self, device: usize, epoch: u64) -> Result<Batch> {
        let slot = device
            .checked_sub(self.devices.start)
            .filter(|&s| s < self.timelines.len())
            .ok_or(Error::DeviceNotOwned(device))?;
        let timestamps = self.timelines[slot].batch(epoch)?;
        let records = timestamps
            .into_iter()
            .map(|t| self.record(device, t))
            .collect::<Result<_>>()?;
        Ok(Batch { epoch, records })
    }

    /// All batches of one epoch for this client. Single-device batches go in
    /// device order; with `IS_MUL_DEV_BATCH` records are dealt round-robin
    /// across the client's devices and cut into `BATCH_SIZE` chunks.
    pub fn epoch_batches(&mut self, epoch: u64) -> Result<Vec<Batch>> {
        if !self.cfg.is_mul_dev_batch {
            return self
                .devices
                .clone()
                .map(|d| self.next_batch(d, epoch))
                .collect();
        }
        let per_device: Vec<Batch> = self
            .devices
            .clone()
            .map(|d| self.next_batch(d, epoch))
            .collect::<Result<_>>()?;
        let n = per_device.len();
        let bs = self.cfg.batch_size as usize;
        let mut columns: Vec<_> = per_device
            .into_iter()
            .map(|b| b.records.into_iter())
            .collect();
        let mut interleaved = Vec::with_capacity(n * bs);
        for r in 0..n * bs {
            interleaved.push(
                columns[r % n]
                    .next()
                    .expect("each device holds BATCH_SIZE records"),
            );
        }
        Ok(interleaved
            .chunks(bs)
            .map(|c| Batch {
                epoch,
                records: c.to_vec(),
            })
            .collect())
    }

    /// Every batch of the run in emission order.
    pub fn all_batches(&mut self) -> Result<Vec<Batch>> {
        let mut out = Vec::new();
        for e in 0..self.cfg.epoch {
            out.extend(self.epoch_batches(e)?);
        }
        Ok(out)
    }

    fn record(&self, device: usize, t: i64) -> Result<Record> {
        let values = self.schema.functions[device]
            .iter()
            .map(|f| f.value_at(t).map(|v| self.cfg.data_type.convert(v)))
            .collect::<Result<_>>()?;
        Ok(Record {
            device,
            timestamp: t,
            values,
        })
    }
}

/// `device,timestamp,v0,...,vm` for one record.
pub fn dump_line(schema: &Schema, r: &Record) -> String {
    let mut line = format!("{},{}", schema.devices[r.device].name, r.timestamp);
    for v in &r.values {
        line.push(',');
        line.push_str(&v.to_string());
    }
    line
}

/// Write the full workload in client, epoch, batch order.
pub fn write_workload_dump<W: Write>(
    cfg: &Arc<Config>,
    schema: &Arc<Schema>,
    mut out: W,
) -> Result<()> {
    let io = |e| Error::io("workload dump", e);
    for mut client in ClientWorkload::for_all_clients(cfg.clone(), schema.clone()) {
        for e in 0..cfg.epoch {
            for b in client.epoch_batches(e)? {
                for r in &b.records {
                    writeln!(out, "{}", dump_line(schema, r)).map_err(io)?;
                }
            }
        }
    }
    out.flush().map_err(io)
}
