use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::delivery::PairLayout;
use super::selection::{sps_boundary, VehicleState};
use super::topology::{build_topology, Topology, TopologyKind};
use super::{Policy, Result, SimConfig, SpsAlignment};

const NO_RECEPTION: i64 = i64::MIN;

#[derive(Debug, Clone, PartialEq)]
pub struct LocationPer {
    pub center_m: f64,
    /// NaN when no reception was attributed to the bin.
    pub per: f64,
    pub receptions: u64,
}

/// Measurements of one replication, warm-up excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    /// Fraction of transmissions missed by at least one in-range receiver.
    pub tx_collision_ratio: f64,
    /// Missed receptions over expected receptions, all in-range pairs.
    pub per: f64,
    /// PER restricted to receivers at least `2R` from both road ends (NaN if
    /// there are none). Equal to `per` when fully connected.
    pub per_interior: f64,
    /// Receiver-binned PER along the road; empty when fully connected.
    pub per_by_location: Vec<LocationPer>,
    /// Mean over all delay samples; 0 when there are none.
    pub mean_delay_ms: f64,
    pub delay_samples_count: u64,
    pub transmissions_total: u64,
    pub collisions_total: u64,
    pub receptions_total: u64,
    pub receptions_missed: u64,
}

/// Seed of replication `index`: the `(index + 1)`-th output of a SplitMix64
/// generator started at `master_seed`. Each replication then runs its own
/// ChaCha8 stream seeded with this value.
pub fn replication_seed(master_seed: u64, index: usize) -> u64 {
    let mut z = master_seed.wrapping_add((index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_replication(config: &SimConfig, replication_index: usize) -> Result<SimMetrics> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(config.master_seed, replication_index));
    let topology = build_topology(&config.topology, &mut rng)?;
    simulate(config, &topology, &mut rng, None)
}

/// As [`run_replication`], also writing one `period vehicle block outcome`
/// line per transmission (warm-up included) to `trace`.
pub fn run_replication_traced(
    config: &SimConfig,
    replication_index: usize,
    trace: &mut dyn Write,
) -> Result<SimMetrics> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(config.master_seed, replication_index));
    let topology = build_topology(&config.topology, &mut rng)?;
    simulate(config, &topology, &mut rng, Some(trace))
}

/// Runs on a caller-supplied placement; `config.topology` only serves
/// validation.
pub fn run_with_topology(
    config: &SimConfig,
    topology: &Topology,
    replication_index: usize,
    trace: Option<&mut dyn Write>,
) -> Result<SimMetrics> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(config.master_seed, replication_index));
    simulate(config, topology, &mut rng, trace)
}

enum Links {
    /// Everyone hears everyone: a transmission reaches all receivers or none,
    /// so one ledger per transmitter stands for all of its receivers.
    Mesh,
    Pairs(PairLayout),
}

#[derive(Default)]
struct Tally {
    transmissions: u64,
    collisions: u64,
    receptions: u64,
    missed: u64,
    interior_receptions: u64,
    interior_missed: u64,
    bin_receptions: Vec<u64>,
    bin_missed: Vec<u64>,
    delay_sum_ms: f64,
    delay_samples: u64,
}

/// Per-pair memory of the last BSM index received, turning each successful
/// reception into a delay sample measured from the oldest BSM missed since.
fn receive(last: &mut i64, bsm: i64, lag_ms: f64, period: i64, period_ms: f64) -> Option<f64> {
    let oldest = if *last == NO_RECEPTION {
        bsm
    } else if bsm <= *last {
        return None;
    } else {
        *last + 1
    };
    *last = bsm;
    Some((period - oldest) as f64 * period_ms + lag_ms)
}

fn simulate(
    config: &SimConfig,
    topology: &Topology,
    rng: &mut ChaCha8Rng,
    mut trace: Option<&mut dyn Write>,
) -> Result<SimMetrics> {
    let grid = config.grid;
    let n = topology.n_vehicles;
    let n_blocks = grid.n_blocks;
    let period_ms = grid.period_ms;
    let ts = config.sps_periods;

    let mut vehicles: Vec<VehicleState> = (0..n)
        .map(|i| {
            let mut v = VehicleState::new(i, n_blocks);
            v.current_block = Some(rng.random_range(0..n_blocks));
            if config.alignment == SpsAlignment::Staggered {
                v.sps_phase = rng.random_range(0..ts);
            }
            if config.policy == Policy::ClosestIdle {
                v.gen_phase_ms = rng.random_range(0.0..period_ms);
            }
            v
        })
        .collect();

    let links = match topology.kind {
        TopologyKind::FullyConnected => Links::Mesh,
        TopologyKind::LinearRoad => Links::Pairs(PairLayout::new(topology)),
    };
    let mut ledger = match &links {
        Links::Mesh => vec![NO_RECEPTION; n],
        Links::Pairs(layout) => vec![NO_RECEPTION; layout.n_pairs()],
    };
    let mut rx_ok = vec![false; ledger.len()];

    let n_bins = match topology.kind {
        TopologyKind::FullyConnected => 0,
        TopologyKind::LinearRoad => config.location_bins,
    };
    let bin_width = topology.road_length_m / n_bins.max(1) as f64;
    let bin_of: Vec<usize> = topology
        .positions_m
        .iter()
        .map(|&x| ((x / bin_width) as usize).min(n_bins.saturating_sub(1)))
        .collect();
    let interior: Vec<bool> = (0..n).map(|v| topology.is_interior(v)).collect();

    let mut tally = Tally {
        bin_receptions: vec![0; n_bins],
        bin_missed: vec![0; n_bins],
        ..Tally::default()
    };

    let mut blocks = vec![0usize; n];
    let mut counts = vec![0u32; n_blocks];
    let mut tx_collided = vec![false; n];
    let mut tx_bsm = vec![0i64; n];
    let mut tx_lag = vec![0f64; n];
    let mut is_due = vec![false; n];
    let mut due = Vec::with_capacity(n);

    let total = config.total_periods();
    let warmup = config.warmup_periods();
    for m in 0..total {
        let period = m as i64;
        let next_phase = ((m + 1) % u64::from(ts)) as u32;
        due.clear();
        for (i, v) in vehicles.iter().enumerate() {
            let b = v.current_block.expect("block assigned at initialization");
            blocks[i] = b;
            // A transmission at offset o carries the latest BSM generated at
            // or before it, i.e. this period's if o >= phase.
            let offset = grid.offset_ms(b);
            let phase = v.gen_phase_ms;
            if offset >= phase {
                tx_bsm[i] = period;
                tx_lag[i] = offset - phase;
            } else {
                tx_bsm[i] = period - 1;
                tx_lag[i] = offset + period_ms - phase;
            }
            is_due[i] = v.sps_phase == next_phase;
            if is_due[i] {
                due.push(i);
            }
        }
        let measuring = m >= warmup;

        match &links {
            Links::Mesh => {
                counts.fill(0);
                for &b in &blocks {
                    counts[b] += 1;
                }
                for i in 0..n {
                    tx_collided[i] = counts[blocks[i]] >= 2;
                }
                for &i in &due {
                    let own = blocks[i];
                    for (b, busy) in vehicles[i].sensed_busy.iter_mut().enumerate() {
                        *busy = counts[b] > u32::from(b == own);
                    }
                }
                let receivers = (n - 1) as u64;
                for u in 0..n {
                    if tx_collided[u] || receivers == 0 {
                        continue;
                    }
                    let sample = receive(&mut ledger[u], tx_bsm[u], tx_lag[u], period, period_ms);
                    if let (Some(d), true) = (sample, measuring) {
                        tally.delay_sum_ms += d * receivers as f64;
                        tally.delay_samples += receivers;
                    }
                }
                if measuring {
                    let collided = tx_collided.iter().filter(|&&c| c).count() as u64;
                    tally.receptions += n as u64 * receivers;
                    tally.missed += collided * receivers;
                }
            }
            Links::Pairs(layout) => {
                layout.resolve(&blocks, &mut counts, &mut rx_ok, &mut tx_collided, |v, counts| {
                    if is_due[v] {
                        let own = blocks[v];
                        for (b, busy) in vehicles[v].sensed_busy.iter_mut().enumerate() {
                            *busy = counts[b] > u32::from(b == own);
                        }
                    }
                });
                for v in 0..n {
                    let start = layout.pair_start(v);
                    let mut missed = 0u64;
                    let mut heard = 0u64;
                    for (k, u) in layout.transmitters(v).enumerate() {
                        let slot = start + k;
                        heard += 1;
                        if !rx_ok[slot] {
                            missed += 1;
                            continue;
                        }
                        let sample =
                            receive(&mut ledger[slot], tx_bsm[u], tx_lag[u], period, period_ms);
                        if let (Some(d), true) = (sample, measuring) {
                            tally.delay_sum_ms += d;
                            tally.delay_samples += 1;
                        }
                    }
                    if measuring {
                        tally.receptions += heard;
                        tally.missed += missed;
                        if interior[v] {
                            tally.interior_receptions += heard;
                            tally.interior_missed += missed;
                        }
                        tally.bin_receptions[bin_of[v]] += heard;
                        tally.bin_missed[bin_of[v]] += missed;
                    }
                }
            }
        }

        if measuring {
            tally.transmissions += n as u64;
            tally.collisions += tx_collided.iter().filter(|&&c| c).count() as u64;
        }
        if let Some(out) = trace.as_deref_mut() {
            for i in 0..n {
                let outcome = if tx_collided[i] { "collided" } else { "ok" };
                writeln!(out, "{m} {i} {} {outcome}", blocks[i])?;
            }
        }

        sps_boundary(&mut vehicles, &due, config.resel_prob, config.policy, &grid, rng);
    }

    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per = ratio(tally.missed, tally.receptions);
    let per_interior = match topology.kind {
        TopologyKind::FullyConnected => per,
        TopologyKind::LinearRoad if tally.interior_receptions == 0 => f64::NAN,
        TopologyKind::LinearRoad => ratio(tally.interior_missed, tally.interior_receptions),
    };
    let per_by_location = (0..n_bins)
        .map(|i| LocationPer {
            center_m: (i as f64 + 0.5) * bin_width,
            per: if tally.bin_receptions[i] == 0 {
                f64::NAN
            } else {
                tally.bin_missed[i] as f64 / tally.bin_receptions[i] as f64
            },
            receptions: tally.bin_receptions[i],
        })
        .collect();
    Ok(SimMetrics {
        tx_collision_ratio: ratio(tally.collisions, tally.transmissions),
        per,
        per_interior,
        per_by_location,
        mean_delay_ms: if tally.delay_samples == 0 {
            0.0
        } else {
            tally.delay_sum_ms / tally.delay_samples as f64
        },
        delay_samples_count: tally.delay_samples,
        transmissions_total: tally.transmissions,
        collisions_total: tally.collisions,
        receptions_total: tally.receptions,
        receptions_missed: tally.missed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::{TopologySpec, VehicleCount};

    fn short(topology: TopologySpec) -> SimConfig {
        let mut cfg = SimConfig::new(topology);
        cfg.duration_s = 60.0;
        cfg.warmup_s = 10.0;
        cfg
    }

    #[test]
    fn seeds_differ_per_replication() {
        let seeds: Vec<u64> = (0..100).map(|i| replication_seed(42, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_eq!(replication_seed(42, 3), replication_seed(42, 3));
        assert_ne!(replication_seed(42, 3), replication_seed(43, 3));
    }

    #[test]
    fn receive_ledger() {
        let mut last = NO_RECEPTION;
        assert_eq!(receive(&mut last, 10, 30.0, 10, 100.0), Some(30.0));
        assert_eq!(receive(&mut last, 11, 30.0, 11, 100.0), Some(30.0));
        // ten BSMs lost, the next one gets through
        assert_eq!(receive(&mut last, 22, 30.0, 22, 100.0), Some(1030.0));
        // the same BSM twice only counts once
        assert_eq!(receive(&mut last, 22, 80.0, 23, 100.0), None);
        assert_eq!(last, 22);
    }

    #[test]
    fn deterministic() {
        let cfg = short(TopologySpec::LinearRoad {
            vehicles: VehicleCount::Density(50.0),
            road_length_m: 3000.0,
            range_m: 500.0,
        });
        assert_eq!(run_replication(&cfg, 2).unwrap(), run_replication(&cfg, 2).unwrap());
        assert_ne!(run_replication(&cfg, 2).unwrap(), run_replication(&cfg, 3).unwrap());
    }

    #[test]
    fn single_vehicle_never_collides() {
        for spec in [
            TopologySpec::FullyConnected { n_vehicles: 1 },
            TopologySpec::LinearRoad {
                vehicles: VehicleCount::Fixed(1),
                road_length_m: 3000.0,
                range_m: 500.0,
            },
        ] {
            let m = run_replication(&short(spec), 0).unwrap();
            assert_eq!(m.tx_collision_ratio, 0.0);
            assert_eq!(m.per, 0.0);
            assert_eq!(m.delay_samples_count, 0);
            assert_eq!(m.transmissions_total, 500);
        }
    }

    #[test]
    fn fully_connected_per_equals_collision_ratio() {
        let cfg = short(TopologySpec::FullyConnected { n_vehicles: 120 });
        let m = run_replication(&cfg, 0).unwrap();
        assert_eq!(m.per, m.tx_collision_ratio);
        assert_eq!(m.per_interior, m.per);
        assert!(m.per_by_location.is_empty());
        assert_eq!(m.receptions_total, m.transmissions_total * 119);
    }

    #[test]
    fn mesh_matches_pairwise_path() {
        // A road short enough that every vehicle hears every other one takes
        // the general pairwise path; it must agree with the mesh shortcut.
        for policy in [Policy::UniformNextPeriod, Policy::ClosestIdle] {
            let mut cfg = short(TopologySpec::FullyConnected { n_vehicles: 40 });
            cfg.policy = policy;
            cfg.grid = crate::simcore::GridShape::new(60, 2, 100.0).unwrap();
            let mesh = run_with_topology(&cfg, &Topology::fully_connected(40).unwrap(), 0, None)
                .unwrap();
            let road = Topology::linear_road(vec![5.0; 40], 10.0, 100.0).unwrap();
            let pairs = run_with_topology(&cfg, &road, 0, None).unwrap();
            assert_eq!(mesh.transmissions_total, pairs.transmissions_total);
            assert_eq!(mesh.collisions_total, pairs.collisions_total);
            assert_eq!(mesh.receptions_total, pairs.receptions_total);
            assert_eq!(mesh.receptions_missed, pairs.receptions_missed);
            assert_eq!(mesh.delay_samples_count, pairs.delay_samples_count);
            assert!((mesh.mean_delay_ms - pairs.mean_delay_ms).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_lines() {
        let mut cfg = short(TopologySpec::FullyConnected { n_vehicles: 3 });
        cfg.duration_s = 0.5;
        cfg.warmup_s = 0.0;
        let mut buf = Vec::new();
        let m = run_replication_traced(&cfg, 0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 15);
        assert!(lines[0].starts_with("0 0 "));
        assert!(lines[14].starts_with("4 2 "));
        assert_eq!(m, run_replication(&cfg, 0).unwrap());
    }

    #[test]
    fn conservation_of_pairs() {
        let cfg = short(TopologySpec::LinearRoad {
            vehicles: VehicleCount::Fixed(90),
            road_length_m: 3000.0,
            range_m: 500.0,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(cfg.master_seed, 0));
        let topo = build_topology(&cfg.topology, &mut rng).unwrap();
        let m = run_replication(&cfg, 0).unwrap();
        let measured = cfg.total_periods() - cfg.warmup_periods();
        assert_eq!(m.receptions_total, topo.n_pairs() as u64 * measured);
        let binned: u64 = m.per_by_location.iter().map(|b| b.receptions).sum();
        assert_eq!(binned, m.receptions_total);
    }
}
