//! Record timestamps for each device stream.
//!
//! Four modes are supported: in-order, out-of-order within a batch, globally
//! shuffled, and the Poisson model in which each point either advances the
//! current maximum timestamp (CMT) by one step or, with probability `P`,
//! lands `POINT_STEP * (X + 1)` behind it where `X ~ Poisson(lambda)`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, TimestampMode};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Grid timestamp of record `k` in epoch `epoch`.
pub fn grid_timestamp(epoch: u64, k: u64, batch_size: u64, point_step: u64) -> i64 {
    ((epoch * batch_size + k) * point_step) as i64
}

/// Seed of the timestamp stream for one device.
pub fn timestamp_seed(global: u64, device: u64) -> u64 {
    rng::mix(rng::mix(global, tag::TIMESTAMP), device)
}

/// Sequential timestamp state of one device stream.
#[derive(Debug, Clone)]
pub struct TimestampState {
    mode: TimestampMode,
    point_step: u64,
    random_interval: bool,
    ooo_ratio: f64,
    lambda: f64,
    jitter_seed: u64,
    rng: ChaCha8Rng,
    /// Current max timestamp; `None` before the first point.
    cmt: Option<i64>,
    /// Points emitted so far.
    emitted: u64,
    /// Last grid-with-jitter timestamp, for the in-order generator.
    last_in_order: i64,
}

impl TimestampState {
    pub fn new(cfg: &Config, device: u64) -> Self {
        let seed = timestamp_seed(cfg.seed, device);
        TimestampState {
            mode: cfg.timestamp_mode,
            point_step: cfg.point_step,
            random_interval: cfg.is_random_interval,
            ooo_ratio: cfg.out_of_order_ratio,
            lambda: cfg.lambda,
            jitter_seed: rng::mix(seed, tag::JITTER),
            rng: rng::stream(seed),
            cmt: None,
            emitted: 0,
            last_in_order: 0,
        }
    }

    pub fn mode(&self) -> TimestampMode {
        self.mode
    }

    pub fn cmt(&self) -> Option<i64> {
        self.cmt
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Next point on the step grid. With a random interval each gap is
    /// `POINT_STEP + j`, `j` uniform on `[0, POINT_STEP / 2)`.
    pub fn next_in_order(&mut self) -> i64 {
        let n = self.emitted;
        let t = if n == 0 {
            0
        } else if self.random_interval {
            let half = self.point_step / 2;
            let jitter = if half == 0 {
                0
            } else {
                (rng::unit_at(self.jitter_seed, n) * half as f64) as u64
            };
            self.last_in_order + (self.point_step + jitter) as i64
        } else {
            (n * self.point_step) as i64
        };
        self.last_in_order = t;
        self.record(t)
    }

    /// Next point under the Poisson out-of-order model. Out-of-order points
    /// are clamped at zero and never move the CMT.
    pub fn next_poisson_ooo(&mut self) -> i64 {
        let Some(cmt) = self.cmt else {
            return self.record(0);
        };
        let step = self.point_step as i64;
        let u: f64 = self.rng.gen();
        let t = if u < self.ooo_ratio {
            let x = sample_poisson(self.lambda, &mut self.rng) as i64;
            (cmt - step.saturating_mul(x + 1)).max(0)
        } else {
            cmt + step
        };
        self.record(t)
    }

    fn record(&mut self, t: i64) -> i64 {
        self.cmt = Some(self.cmt.map_or(t, |c| c.max(t)));
        self.emitted += 1;
        t
    }
}

/// Produces the timestamps of consecutive batches for one device.
#[derive(Debug, Clone)]
pub struct DeviceTimeline {
    state: TimestampState,
    batch_size: u64,
    epochs: u64,
    next_epoch: u64,
    /// Whole shuffled timeline, built on first use in global mode.
    global: Option<Vec<i64>>,
}

impl DeviceTimeline {
    pub fn new(cfg: &Config, device: u64) -> Self {
        DeviceTimeline {
            state: TimestampState::new(cfg, device),
            batch_size: cfg.batch_size,
            epochs: cfg.epoch,
            next_epoch: 0,
            global: None,
        }
    }

    /// Timestamps of the batch for `epoch`; epochs must be requested in order.
    pub fn batch(&mut self, epoch: u64) -> Result<Vec<i64>> {
        if epoch >= self.epochs {
            return Err(Error::EpochOutOfRange {
                epoch,
                limit: self.epochs,
            });
        }
        if epoch != self.next_epoch {
            return Err(Error::EpochOutOfSequence {
                expected: self.next_epoch,
                got: epoch,
            });
        }
        self.next_epoch += 1;
        let n = self.batch_size as usize;
        Ok(match self.state.mode() {
            TimestampMode::InOrder => (0..n).map(|_| self.state.next_in_order()).collect(),
            TimestampMode::Poisson => (0..n).map(|_| self.state.next_poisson_ooo()).collect(),
            TimestampMode::BatchLocal => {
                let mut ts: Vec<i64> = (0..n).map(|_| self.state.next_in_order()).collect();
                permute_batch_local(&mut ts, self.state.rng_mut());
                ts
            }
            TimestampMode::Global => {
                if self.global.is_none() {
                    let total = (self.batch_size * self.epochs) as usize;
                    let mut ts: Vec<i64> = (0..total).map(|_| self.state.next_in_order()).collect();
                    permute_global(&mut ts, self.state.rng_mut());
                    self.global = Some(ts);
                }
                let all = self.global.as_ref().expect("built above");
                let start = epoch as usize * n;
                all[start..start + n].to_vec()
            }
        })
    }
}

/// Seeded uniform shuffle of one batch.
pub fn permute_batch_local(timestamps: &mut [i64], rng: &mut ChaCha8Rng) {
    timestamps.shuffle(rng);
}

/// Seeded uniform shuffle of a device's whole timeline.
pub fn permute_global(timeline: &mut [i64], rng: &mut ChaCha8Rng) {
    timeline.shuffle(rng);
}

/// `flags[i]` is true when `ts[i]` is below the maximum of the timestamps
/// that arrived before it.
pub fn out_of_order_flags(ts: &[i64]) -> Vec<bool> {
    let mut max = i64::MIN;
    ts.iter()
        .map(|&t| {
            let late = t < max;
            max = max.max(t);
            late
        })
        .collect()
}

pub fn out_of_order_fraction(ts: &[i64]) -> f64 {
    if ts.is_empty() {
        return 0.0;
    }
    out_of_order_flags(ts).iter().filter(|&&f| f).count() as f64 / ts.len() as f64
}

/// Draw from Poisson(lambda). Sequential-search inversion up to lambda = 30,
/// Hormann's PTRS transformed rejection above.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    assert!(lambda > 0.0, "lambda must be positive");
    if lambda <= 30.0 {
        poisson_inversion(lambda, rng)
    } else {
        poisson_ptrs(lambda, rng)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.gen();
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut k = 0u64;
    // tail cap guards against cdf saturating just below u in floating point
    let cap = (lambda + 40.0 * lambda.sqrt() + 40.0) as u64;
    while u >= cdf && k < cap {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// `ln(k!)`, exact summation for small `k` and a Stirling series above.
pub(crate) fn ln_factorial(k: u64) -> f64 {
    if k < 128 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x
        + 0.5 * (std::f64::consts::TAU * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}
