//! Per-sensor value functions: square, sine, sawtooth, random-range and
//! constant series, with optional Gaussian noise on the periodic kinds.
//!
//! Evaluation is stateless. Noise and random-range values are drawn from
//! counter-based randomness keyed on the timestamp, so any evaluation order
//! (including concurrent or out-of-order generation) yields the same values.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    Float,
    Double,
    Int32,
    Int64,
    Text,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Float => "FLOAT",
            DataType::Double => "DOUBLE",
            DataType::Int32 => "INT32",
            DataType::Int64 => "INT64",
            DataType::Text => "TEXT",
        }
    }

    /// Convert a real sensor reading to this storage type. Integers round
    /// half-to-even and saturate; text uses two decimals.
    pub fn convert(self, v: f64) -> Value {
        match self {
            DataType::Float => Value::Float(v as f32),
            DataType::Double => Value::Double(v),
            DataType::Int32 => Value::Int32(v.round_ties_even() as i32),
            DataType::Int64 => Value::Int64(v.round_ties_even() as i64),
            DataType::Text => Value::Text(format!("{v:.2}")),
        }
    }
}

impl FromStr for DataType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FLOAT" => Ok(DataType::Float),
            "DOUBLE" => Ok(DataType::Double),
            "INT32" => Ok(DataType::Int32),
            "INT64" => Ok(DataType::Int64),
            "TEXT" => Ok(DataType::Text),
            other => Err(format!("unknown data type {other:?}")),
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One stored data point value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f32),
    Double(f64),
    Int32(i32),
    Int64(i64),
    Text(String),
}

impl Value {
    /// Numeric view used by filters and aggregates. Text parses back to the
    /// number it was rendered from.
    pub fn as_f64(&self) -> f64 {
        match self {
            Value::Float(v) => *v as f64,
            Value::Double(v) => *v,
            Value::Int32(v) => *v as f64,
            Value::Int64(v) => *v as f64,
            Value::Text(s) => s.parse().unwrap_or(f64::NAN),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Double(v) => write!(f, "{v:?}"),
            Value::Int32(v) => write!(f, "{v}"),
            Value::Int64(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorKind {
    Square,
    Sine,
    Sawtooth,
    RandomRange,
    Constant,
}

impl SensorKind {
    /// Order used by `DISTRIBUTION_RATIO`.
    pub const ALL: [SensorKind; 5] = [
        SensorKind::Square,
        SensorKind::Sine,
        SensorKind::Sawtooth,
        SensorKind::RandomRange,
        SensorKind::Constant,
    ];

    pub fn is_periodic(self) -> bool {
        matches!(
            self,
            SensorKind::Square | SensorKind::Sine | SensorKind::Sawtooth
        )
    }
}

/// Waveform shape and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    /// High for the first half of each period, low for the second.
    Square {
        period: u64,
        low: f64,
        high: f64,
    },
    Sine {
        period: u64,
        amplitude: f64,
        offset: f64,
        phase: f64,
    },
    /// Linear ramp from `min` at the start of each period towards `max`.
    Sawtooth {
        period: u64,
        min: f64,
        max: f64,
    },
    RandomRange {
        min: f64,
        max: f64,
    },
    Constant {
        value: f64,
    },
}

impl Waveform {
    pub fn kind(&self) -> SensorKind {
        match self {
            Waveform::Square { .. } => SensorKind::Square,
            Waveform::Sine { .. } => SensorKind::Sine,
            Waveform::Sawtooth { .. } => SensorKind::Sawtooth,
            Waveform::RandomRange { .. } => SensorKind::RandomRange,
            Waveform::Constant { .. } => SensorKind::Constant,
        }
    }

    pub fn period(&self) -> Option<u64> {
        match *self {
            Waveform::Square { period, .. }
            | Waveform::Sine { period, .. }
            | Waveform::Sawtooth { period, .. } => Some(period),
            _ => None,
        }
    }
}

/// Deterministic value function of one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFunction {
    pub waveform: Waveform,
    /// Standard deviation of additive noise; always zero for non-periodic kinds.
    pub noise_sigma: f64,
    pub stream_seed: u64,
}

impl SensorFunction {
    /// Build a function, enforcing the parameter invariants.
    pub fn new(waveform: Waveform, noise_sigma: f64, stream_seed: u64) -> Result<Self> {
        let bad = |m: &str| Err(Error::Encode(format!("invalid sensor function: {m}")));
        match waveform {
            Waveform::Square { period, low, high } => {
                if period == 0 || !(low < high) {
                    return bad("square needs period > 0 and low < high");
                }
            }
            Waveform::Sine {
                period, amplitude, ..
            } => {
                if period == 0 || !(amplitude > 0.0) {
                    return bad("sine needs period > 0 and amplitude > 0");
                }
            }
            Waveform::Sawtooth { period, min, max } => {
                if period == 0 || !(min < max) {
                    return bad("sawtooth needs period > 0 and min < max");
                }
            }
            Waveform::RandomRange { min, max } => {
                if !(min < max) {
                    return bad("random range needs min < max");
                }
            }
            Waveform::Constant { .. } => {}
        }
        if !(noise_sigma >= 0.0) {
            return bad("noise sigma must be non-negative");
        }
        let noise_sigma = if waveform.kind().is_periodic() {
            noise_sigma
        } else {
            0.0
        };
        Ok(SensorFunction {
            waveform,
            noise_sigma,
            stream_seed,
        })
    }

    pub fn kind(&self) -> SensorKind {
        self.waveform.kind()
    }

    /// Noiseless value at `t`.
    pub fn base_at(&self, t: i64) -> Result<f64> {
        if t < 0 {
            return Err(Error::NegativeTimestamp(t));
        }
        let t = t as u64;
        Ok(match self.waveform {
            Waveform::Square { period, low, high } => {
                if t % period < period.div_ceil(2) {
                    high
                } else {
                    low
                }
            }
            Waveform::Sine {
                period,
                amplitude,
                offset,
                phase,
            } => {
                // reduce modulo the period first so base(t + kT) == base(t) exactly
                let frac = (t % period) as f64 / period as f64;
                offset + amplitude * (std::f64::consts::TAU * frac + phase).sin()
            }
            Waveform::Sawtooth { period, min, max } => {
                min + (max - min) * ((t % period) as f64 / period as f64)
            }
            Waveform::RandomRange { min, max } => {
                let u = rng::unit_at(rng::mix(self.stream_seed, tag::SENSOR_RANDOM), t);
                let v = min + (max - min) * u;
                if v < max {
                    v
                } else {
                    max.next_down()
                }
            }
            Waveform::Constant { value } => value,
        })
    }

    /// Value at `t` including noise.
    pub fn value_at(&self, t: i64) -> Result<f64> {
        let base = self.base_at(t)?;
        Ok(base
            + gaussian_noise(
                rng::mix(self.stream_seed, tag::SENSOR_NOISE),
                t,
                self.noise_sigma,
            ))
    }
}

/// Zero-mean Gaussian sample with standard deviation `sigma`, a pure function
/// of `(stream_seed, t, sigma)`.
pub fn gaussian_noise(stream_seed: u64, t: i64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    sigma * rng::std_normal_at(stream_seed, t as u64)
}
