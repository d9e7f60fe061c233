//! Device/group/sensor naming, client partitioning and distribution assignment.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::Config;
use crate::rng::{self, tag};
use crate::series::{SensorFunction, SensorKind, Waveform};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Device {
    pub index: usize,
    pub name: String,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub groups: Vec<String>,
    pub devices: Vec<Device>,
    pub sensors: Vec<String>,
    /// `functions[device][sensor]`
    pub functions: Vec<Vec<SensorFunction>>,
}

impl Schema {
    pub fn device(&self, name: &str) -> Option<&Device> {
        device_index(name)
            .and_then(|i| self.devices.get(i))
            .filter(|d| d.name == name)
    }

    pub fn group_of(&self, device: &str) -> Option<&str> {
        self.device(device).map(|d| self.groups[d.group].as_str())
    }

    pub fn series_count(&self) -> usize {
        self.devices.len() * self.sensors.len()
    }
}

pub fn device_name(i: usize) -> String {
    format!("d_{i}")
}

pub fn sensor_name(i: usize) -> String {
    format!("s_{i}")
}

pub fn group_name(i: usize) -> String {
    format!("group_{i}")
}

/// Parse `d_<n>` back into `n`.
pub fn device_index(name: &str) -> Option<usize> {
    name.strip_prefix("d_")?.parse().ok()
}

pub fn sensor_index(name: &str) -> Option<usize> {
    name.strip_prefix("s_")?.parse().ok()
}

/// Group of device `j`: contiguous blocks of `ceil(devices / groups)`.
pub fn group_of_device(j: u64, device_number: u64, group_number: u64) -> u64 {
    j / device_number.div_ceil(group_number)
}

pub fn derive_schema(cfg: &Config) -> Schema {
    let groups = (0..cfg.group_number as usize).map(group_name).collect();
    let devices = (0..cfg.device_number)
        .map(|j| Device {
            index: j as usize,
            name: device_name(j as usize),
            group: group_of_device(j, cfg.device_number, cfg.group_number) as usize,
        })
        .collect();
    let sensors = (0..cfg.sensor_number as usize).map(sensor_name).collect();
    Schema {
        groups,
        devices,
        sensors,
        functions: assign_distributions(cfg),
    }
}

/// Balanced contiguous device ranges per client; earlier clients take the
/// remainder.
pub fn partition_devices(cfg: &Config) -> Vec<Range<usize>> {
    balanced_ranges(cfg.device_number as usize, cfg.client_number as usize)
}

pub(crate) fn balanced_ranges(items: usize, parts: usize) -> Vec<Range<usize>> {
    let (base, extra) = (items / parts, items % parts);
    let mut start = 0;
    (0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Largest-remainder apportionment of `total` items across `ratio`.
/// Ties on the remainder go to the earlier kind.
pub fn apportion(ratio: &[u64; 5], total: u64) -> [u64; 5] {
    let sum: u64 = ratio.iter().sum();
    let mut counts = [0u64; 5];
    let mut rems = [(0u128, 0usize); 5];
    for (k, &r) in ratio.iter().enumerate() {
        let exact = r as u128 * total as u128;
        counts[k] = (exact / sum as u128) as u64;
        rems[k] = (exact % sum as u128, k);
    }
    let left = total - counts.iter().sum::<u64>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in rems.iter().take(left as usize) {
        counts[k] += 1;
    }
    counts
}

/// Seed of the parameter/noise stream for one sensor of one device.
pub fn sensor_seed(global: u64, device: u64, sensor: u64) -> u64 {
    rng::mix(
        rng::mix(rng::mix(global, tag::SENSOR_PARAMS), device),
        sensor,
    )
}

/// One function per sensor of every device, indexed `[device][sensor]`.
///
/// Kinds are apportioned over all device x sensor series and then shuffled
/// with a seeded stream; waveform parameters come from each sensor's own
/// stream, so they differ from device to device.
pub fn assign_distributions(cfg: &Config) -> Vec<Vec<SensorFunction>> {
    let total = cfg.device_number * cfg.sensor_number;
    let counts = apportion(&cfg.distribution_ratio, total);
    let mut kinds: Vec<SensorKind> = SensorKind::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&k, n)| std::iter::repeat_n(k, n as usize))
        .collect();
    kinds.shuffle(&mut rng::stream(rng::mix(
        cfg.seed,
        tag::DISTRIBUTION_SHUFFLE,
    )));

    let per_device = cfg.sensor_number as usize;
    kinds
        .chunks(per_device)
        .enumerate()
        .map(|(d, row)| {
            row.iter()
                .enumerate()
                .map(|(s, &kind)| {
                    build_function(kind, sensor_seed(cfg.seed, d as u64, s as u64), cfg)
                })
                .collect()
        })
        .collect()
}

fn build_function(kind: SensorKind, seed: u64, cfg: &Config) -> SensorFunction {
    let mut r = rng::stream(seed);
    let period = cfg.point_step * r.gen_range(10..=100u64);
    let base = r.gen_range(0.0..50.0f64);
    let width = r.gen_range(10.0..50.0f64);
    let waveform = match kind {
        SensorKind::Square => Waveform::Square {
            period,
            low: base,
            high: base + width,
        },
        SensorKind::Sine => Waveform::Sine {
            period,
            amplitude: width / 2.0,
            offset: base + width / 2.0,
            phase: r.gen_range(0.0..std::f64::consts::TAU),
        },
        SensorKind::Sawtooth => Waveform::Sawtooth {
            period,
            min: base,
            max: base + width,
        },
        SensorKind::RandomRange => Waveform::RandomRange {
            min: base,
            max: base + width,
        },
        SensorKind::Constant => Waveform::Constant {
            value: base + width / 2.0,
        },
    };
    let sigma = if cfg.add_noise && kind.is_periodic() {
        width * r.gen_range(0.01..0.05)
    } else {
        0.0
    };
    SensorFunction::new(waveform, sigma, seed).expect("generated parameters satisfy invariants")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(groups: u64, devices: u64, clients: u64) -> Config {
        Config {
            group_number: groups,
            device_number: devices,
            client_number: clients,
            ..Config::default()
        }
    }

    #[test]
    fn example_grouping() {
        let s = derive_schema(&cfg(2, 10, 5));
        assert_eq!(s.group_of("d_3"), Some("group_0"));
        assert_eq!(s.group_of("d_8"), Some("group_1"));
        assert_eq!(s.group_of("d_4"), Some("group_0"));
        assert_eq!(s.group_of("d_5"), Some("group_1"));
        assert_eq!(s.sensors, ["s_0", "s_1", "s_2"]);
        assert_eq!(s.groups, ["group_0", "group_1"]);
    }

    #[test]
    fn single_group() {
        let s = derive_schema(&cfg(1, 10, 5));
        assert!(s.devices.iter().all(|d| d.group == 0));
    }

    #[test]
    fn three_groups_block_sizes() {
        let s = derive_schema(&cfg(3, 10, 5));
        let sizes: Vec<usize> = (0..3)
            .map(|g| s.devices.iter().filter(|d| d.group == g).count())
            .collect();
        assert_eq!(sizes, [4, 4, 2]);
    }

    #[test]
    fn partitions() {
        assert_eq!(partition_devices(&cfg(2, 10, 5))[..2], [0..2, 2..4]);
        assert_eq!(partition_devices(&cfg(2, 10, 1)), vec![0..10]);
        let sizes: Vec<usize> = partition_devices(&cfg(2, 10, 3))
            .iter()
            .map(|r| r.len())
            .collect();
        assert_eq!(sizes, [4, 3, 3]);
    }

    fn kind_counts(c: &Config) -> [usize; 5] {
        let mut counts = [0; 5];
        for f in assign_distributions(c).iter().flatten() {
            counts[f.kind() as usize] += 1;
        }
        counts
    }

    #[test]
    fn degenerate_ratio() {
        let c = Config {
            distribution_ratio: [1, 0, 0, 0, 0],
            ..Config::default()
        };
        assert_eq!(kind_counts(&c), [30, 0, 0, 0, 0]);
    }

    #[test]
    fn uniform_ratio() {
        assert_eq!(kind_counts(&Config::default()), [6; 5]);
    }

    #[test]
    fn largest_remainder() {
        let c = Config {
            distribution_ratio: [2, 1, 0, 0, 0],
            device_number: 10,
            sensor_number: 1,
            group_number: 1,
            client_number: 1,
            query_sensor_num: 1,
            ..Config::default()
        };
        assert_eq!(kind_counts(&c), [7, 3, 0, 0, 0]);
        // hand-worked: 3 items over 1:1:1:1:1 -> first three kinds
        assert_eq!(apportion(&[1; 5], 3), [1, 1, 1, 0, 0]);
        assert_eq!(apportion(&[0, 0, 3, 0, 1], 10), [0, 0, 8, 0, 2]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = derive_schema(&Config::default());
        let b = derive_schema(&Config::default());
        assert_eq!(a, b);
        let c = derive_schema(&Config {
            seed: 1,
            ..Config::default()
        });
        assert_ne!(a.functions, c.functions);
        // parameters vary between devices
        assert_ne!(a.functions[0][0].stream_seed, a.functions[1][0].stream_seed);
    }

    #[test]
    fn name_lookup() {
        let s = derive_schema(&Config::default());
        assert_eq!(s.device("d_9").unwrap().index, 9);
        assert!(s.device("d_10").is_none());
        assert!(s.device("d_01").is_none());
        assert_eq!(sensor_index("s_2"), Some(2));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn partition_is_complete_and_balanced(items in 1usize..500, parts in 1usize..50) {
            prop_assume!(parts <= items);
            let rs = balanced_ranges(items, parts);
            prop_assert_eq!(rs.len(), parts);
            prop_assert_eq!(rs[0].start, 0);
            prop_assert_eq!(rs.last().unwrap().end, items);
            for w in rs.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
                prop_assert!(w[0].len() >= w[1].len());
            }
            let max = rs.iter().map(|r| r.len()).max().unwrap();
            let min = rs.iter().map(|r| r.len()).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn apportion_within_one(ratio in prop::array::uniform5(0u64..20), total in 0u64..10_000) {
            prop_assume!(ratio.iter().any(|&r| r > 0));
            let counts = apportion(&ratio, total);
            prop_assert_eq!(counts.iter().sum::<u64>(), total);
            let sum: u64 = ratio.iter().sum();
            for k in 0..5 {
                let exact = ratio[k] as f64 * total as f64 / sum as f64;
                prop_assert!((counts[k] as f64 - exact).abs() < 1.0);
            }
        }
    }
}
