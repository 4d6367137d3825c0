use std::collections::HashMap;

use proptest::prelude::*;

use sps_sim::simcore::*;

struct TraceRow {
    period: u64,
    vehicle: usize,
    block: usize,
    collided: bool,
}

fn traced(cfg: &SimConfig) -> (SimMetrics, Vec<TraceRow>) {
    let mut buf = Vec::new();
    let m = run_replication_traced(cfg, 0, &mut buf).unwrap();
    let rows = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(' ').collect();
            TraceRow {
                period: f[0].parse().unwrap(),
                vehicle: f[1].parse().unwrap(),
                block: f[2].parse().unwrap(),
                collided: f[3] == "collided",
            }
        })
        .collect();
    (m, rows)
}

fn fully_connected(n: usize, t_s: u32, p: f64, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::new(TopologySpec::FullyConnected { n_vehicles: n });
    cfg.sps_periods = t_s;
    cfg.resel_prob = p;
    cfg.warmup_s = 1.0;
    cfg.duration_s = 30.0;
    cfg.master_seed = seed;
    cfg.replications = 1;
    cfg
}

/// Periods at which each vehicle's block differs from the period before.
fn block_changes(rows: &[TraceRow]) -> HashMap<usize, Vec<u64>> {
    let mut last: HashMap<usize, usize> = HashMap::new();
    let mut changes: HashMap<usize, Vec<u64>> = HashMap::new();
    for r in rows {
        if let Some(prev) = last.insert(r.vehicle, r.block) {
            if prev != r.block {
                changes.entry(r.vehicle).or_default().push(r.period);
            }
        }
    }
    changes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synchronized_blocks_change_only_at_common_boundaries(
        n in 2usize..60, t_s in 1u32..=12, p in 0.1f64..=1.0, seed in any::<u64>(),
    ) {
        let mut cfg = fully_connected(n, t_s, p, seed);
        cfg.alignment = SpsAlignment::Synchronized;
        let (_, rows) = traced(&cfg);
        for periods in block_changes(&rows).values() {
            for &m in periods {
                prop_assert_eq!(m % u64::from(t_s), 0);
            }
        }
    }

    #[test]
    fn staggered_blocks_change_on_one_residue_per_vehicle(
        n in 2usize..60, t_s in 1u32..=12, p in 0.1f64..=1.0, seed in any::<u64>(),
    ) {
        let (_, rows) = traced(&fully_connected(n, t_s, p, seed));
        for periods in block_changes(&rows).values() {
            let r0 = periods[0] % u64::from(t_s);
            prop_assert!(periods.iter().all(|m| m % u64::from(t_s) == r0));
        }
    }

    #[test]
    fn collision_flag_constant_within_semi_persistent_period(
        n in 2usize..80, t_s in 1u32..=12, p in 0.0f64..=1.0, seed in any::<u64>(),
    ) {
        let mut cfg = fully_connected(n, t_s, p, seed);
        cfg.alignment = SpsAlignment::Synchronized;
        let (_, rows) = traced(&cfg);
        let mut flag: HashMap<(usize, u64), bool> = HashMap::new();
        for r in &rows {
            let window = r.period / u64::from(t_s);
            let seen = *flag.entry((r.vehicle, window)).or_insert(r.collided);
            prop_assert_eq!(seen, r.collided);
        }
    }

    #[test]
    fn fully_connected_per_equals_collision_ratio(
        n in 1usize..80, t_s in 1u32..=12, p in 0.0f64..=1.0, seed in any::<u64>(),
    ) {
        let m = run_replication(&fully_connected(n, t_s, p, seed), 0).unwrap();
        prop_assert_eq!(m.per, m.tx_collision_ratio);
        prop_assert_eq!(m.receptions_total, m.transmissions_total * (n as u64 - 1));
    }

    #[test]
    fn deliveries_cover_every_in_range_pair(
        positions in prop::collection::vec(0.0f64..3000.0, 1..60),
        range in 50.0f64..1500.0,
        blocks_seed in any::<u64>(),
    ) {
        let topo = Topology::linear_road(positions, 3000.0, range).unwrap();
        let n_blocks = 8;
        let blocks: Vec<usize> = (0..topo.n_vehicles)
            .map(|i| (blocks_seed.rotate_left(i as u32 * 7) as usize ^ i) % n_blocks)
            .collect();
        let d = deliver(&blocks, &topo, n_blocks);
        prop_assert_eq!(d.receptions.len(), topo.n_pairs());
        let brute = (0..topo.n_vehicles)
            .flat_map(|v| (0..topo.n_vehicles).map(move |u| (u, v)))
            .filter(|&(u, v)| u != v && topo.hears(u, v))
            .count();
        prop_assert_eq!(brute, topo.n_pairs());
    }

    #[test]
    fn sensing_blind_to_vehicles_out_of_range(
        positions in prop::collection::vec(0.0f64..5000.0, 2..50),
        range in 50.0f64..1000.0,
        seed in any::<u64>(),
        new_block in 0usize..10,
    ) {
        let topo = Topology::linear_road(positions, 5000.0, range).unwrap();
        let n = topo.n_vehicles;
        let blocks: Vec<usize> = (0..n).map(|i| (seed as usize).wrapping_add(i * 3) % 10).collect();
        for v in 0..n {
            let before = sense_period(&blocks, &topo, v, 10);
            for w in (0..n).filter(|&w| w != v && !topo.hears(w, v)) {
                let mut altered = blocks.clone();
                altered[w] = new_block;
                prop_assert_eq!(&sense_period(&altered, &topo, v, 10), &before);
            }
        }
    }
}

#[test]
fn same_seed_same_metrics() {
    let cfg = fully_connected(50, 10, 0.5, 4);
    assert_eq!(run_replication(&cfg, 3).unwrap(), run_replication(&cfg, 3).unwrap());
    assert_ne!(run_replication(&cfg, 3).unwrap(), run_replication(&cfg, 4).unwrap());
}

#[test]
fn closest_idle_without_losses_stays_within_one_subframe() {
    // With no missed packet every sample is the initial component alone.
    let mut lossless = 0;
    for seed in 0..20 {
        let mut cfg = fully_connected(2, 1, 1.0, seed);
        cfg.policy = Policy::ClosestIdle;
        cfg.duration_s = 5.0;
        let m = run_replication(&cfg, 0).unwrap();
        if m.receptions_missed == 0 {
            lossless += 1;
            let spacing = cfg.grid.subframe_ms();
            assert!(m.mean_delay_ms <= spacing, "seed {seed}: {} > {spacing}", m.mean_delay_ms);
        }
    }
    assert!(lossless >= 10, "only {lossless} lossless runs");
}

#[test]
fn closest_idle_beats_uniform_at_equal_seed() {
    for n in [10, 50] {
        let uniform = fully_connected(n, 10, 0.2, 21);
        let mut closest = uniform.clone();
        closest.policy = Policy::ClosestIdle;
        let du = run_replication(&uniform, 0).unwrap().mean_delay_ms;
        let dc = run_replication(&closest, 0).unwrap().mean_delay_ms;
        assert!(dc < du, "n={n}: closest {dc} vs uniform {du}");
    }
}

#[test]
fn two_vehicle_chain_within_three_sigma() {
    // Stationary collision probability of the four-block, per-period
    // reselection chain is 3/7; the collided indicator has lag-one
    // correlation -1/6, so its asymptotic variance is
    // pi(1-pi)(1+l)/(1-l) with l = -1/6.
    let pi = 3.0 / 7.0;
    let l = -1.0 / 6.0;
    let var = pi * (1.0 - pi) * (1.0 + l) / (1.0 - l);
    let mut cfg = fully_connected(2, 1, 1.0, 5);
    cfg.grid = GridShape::new(4, 1, 100.0).unwrap();
    cfg.duration_s = 20_001.0;
    let m = run_replication(&cfg, 0).unwrap();
    let periods = (m.transmissions_total / 2) as f64;
    let se = (var / periods).sqrt();
    assert!((m.tx_collision_ratio - pi).abs() <= 3.0 * se, "{} vs {pi}", m.tx_collision_ratio);
}
