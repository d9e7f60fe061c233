//! Cost-time statistics, ingestion throughput and space consumption.

use crate::error::{Error, Result};

/// Percentile levels reported for every operation kind.
pub const PERCENTILES: [u32; 6] = [1, 5, 50, 90, 95, 99];

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Mean after dropping `floor(0.05 n)` samples from each end.
    pub middle_average: f64,
    pub p1: f64,
    pub p5: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
}

/// 1-based nearest rank `ceil(p/100 * n)`, at least 1.
pub fn nearest_rank(p: u32, n: usize) -> usize {
    ((p as usize * n).div_ceil(100)).max(1)
}

pub fn summarize(samples: &[f64]) -> Result<LatencyStats> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let pct = |p| s[nearest_rank(p, n) - 1];
    let trim = n / 20;
    let kept = &s[trim..n - trim];
    Ok(LatencyStats {
        n,
        min: s[0],
        max: s[n - 1],
        mean: s.iter().sum::<f64>() / n as f64,
        middle_average: kept.iter().sum::<f64>() / kept.len() as f64,
        p1: pct(1),
        p5: pct(5),
        p50: pct(50),
        p90: pct(90),
        p95: pct(95),
        p99: pct(99),
    })
}

/// Points per second, using the largest per-client accumulated cost-time
/// (milliseconds) as the elapsed time.
pub fn throughput(per_client_accumulated_ms: &[f64], total_points: u64) -> Result<f64> {
    let max = per_client_accumulated_ms
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    if !(max > 0.0) {
        return Err(Error::ZeroCostTime);
    }
    Ok(total_points as f64 / (max / 1000.0))
}

/// Largest growth over the first (baseline) sample, floored at zero.
/// `None` when there are no samples to measure from.
pub fn space_consumption(samples: &[(i64, u64)]) -> Option<u64> {
    let (_, baseline) = *samples.first()?;
    Some(
        samples
            .iter()
            .map(|&(_, used)| used.saturating_sub(baseline))
            .max()
            .unwrap_or(0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_to(n: usize) -> Vec<f64> {
        (1..=n).map(|x| x as f64).collect()
    }

    #[test]
    fn one_to_hundred() {
        let s = summarize(&one_to(100)).unwrap();
        assert_eq!((s.p50, s.p90, s.p1, s.p99), (50.0, 90.0, 1.0, 99.0));
        assert_eq!(s.middle_average, 50.5);
        assert_eq!(s.mean, 50.5);
        assert_eq!((s.min, s.max, s.n), (1.0, 100.0, 100));
    }

    #[test]
    fn trimming_drops_five_percent_each_side() {
        // 1..=40: trim 2 per side -> mean(3..=38) = 20.5
        let mut v = one_to(40);
        v[39] = 1e9;
        let s = summarize(&v).unwrap();
        assert_eq!(s.middle_average, 20.5);
        // below 20 samples nothing is trimmed
        let s = summarize(&[1.0, 2.0, 30.0]).unwrap();
        assert_eq!(s.middle_average, 11.0);
    }

    #[test]
    fn constant_samples() {
        let s = summarize(&[7.0, 7.0, 7.0]).unwrap();
        for v in [
            s.min,
            s.max,
            s.mean,
            s.middle_average,
            s.p1,
            s.p5,
            s.p50,
            s.p90,
            s.p95,
            s.p99,
        ] {
            assert_eq!(v, 7.0);
        }
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(summarize(&[]), Err(Error::EmptySamples)));
    }

    #[test]
    fn throughput_rule() {
        assert_eq!(
            throughput(&[10_000.0, 12_000.0], 1_200_000).unwrap(),
            100_000.0
        );
        assert_eq!(throughput(&[1000.0], 500).unwrap(), 500.0);
        assert_eq!(throughput(&[5000.0, 5000.0], 10_000).unwrap(), 2000.0);
        assert!(matches!(
            throughput(&[0.0, 0.0], 10),
            Err(Error::ZeroCostTime)
        ));
        assert!(matches!(throughput(&[], 10), Err(Error::ZeroCostTime)));
    }

    #[test]
    fn space() {
        assert_eq!(space_consumption(&[(0, 100), (1, 160), (2, 140)]), Some(60));
        assert_eq!(space_consumption(&[(0, 100), (1, 100)]), Some(0));
        assert_eq!(space_consumption(&[(0, 100), (1, 40)]), Some(0));
        assert_eq!(space_consumption(&[]), None);
    }
}
