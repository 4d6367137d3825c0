use rand::Rng;

use super::{config_error, Result, SimError, TopologySpec, VehicleCount};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    FullyConnected,
    LinearRoad,
}

/// Static placement of the vehicles of one replication.
///
/// On a linear road vehicle ids follow position order, so the set of
/// vehicles within range of any vehicle is a contiguous id range.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub kind: TopologyKind,
    pub n_vehicles: usize,
    /// Sorted ascending; empty when fully connected.
    pub positions_m: Vec<f64>,
    pub range_m: f64,
    pub road_length_m: f64,
}

impl Topology {
    pub fn fully_connected(n_vehicles: usize) -> Result<Self> {
        if n_vehicles == 0 {
            return Err(SimError::NoVehicles);
        }
        Ok(Self {
            kind: TopologyKind::FullyConnected,
            n_vehicles,
            positions_m: Vec::new(),
            range_m: f64::INFINITY,
            road_length_m: 0.0,
        })
    }

    pub fn linear_road(mut positions_m: Vec<f64>, road_length_m: f64, range_m: f64) -> Result<Self> {
        if positions_m.is_empty() {
            return Err(SimError::NoVehicles);
        }
        if range_m.is_nan() || range_m <= 0.0 {
            return Err(config_error("topology.range_m", "must be positive"));
        }
        if positions_m
            .iter()
            .any(|&x| !(0.0..=road_length_m).contains(&x))
        {
            return Err(config_error(
                "topology.positions",
                format!("every position must lie in [0, {road_length_m}]"),
            ));
        }
        positions_m.sort_by(f64::total_cmp);
        Ok(Self {
            kind: TopologyKind::LinearRoad,
            n_vehicles: positions_m.len(),
            positions_m,
            range_m,
            road_length_m,
        })
    }

    /// Whether `v` can hear a transmission from `u`. Reflexive and symmetric.
    pub fn hears(&self, u: usize, v: usize) -> bool {
        match self.kind {
            TopologyKind::FullyConnected => true,
            TopologyKind::LinearRoad => {
                (self.positions_m[u] - self.positions_m[v]).abs() <= self.range_m
            }
        }
    }

    /// For each vehicle, the inclusive id range of vehicles it hears
    /// (itself included). Both ends are nondecreasing in the vehicle id.
    pub fn hearing_windows(&self) -> Vec<(usize, usize)> {
        match self.kind {
            TopologyKind::FullyConnected => vec![(0, self.n_vehicles - 1); self.n_vehicles],
            TopologyKind::LinearRoad => {
                let pos = &self.positions_m;
                let r = self.range_m;
                pos.iter()
                    .map(|&x| {
                        let lo = pos.partition_point(|&y| x - y > r);
                        let hi = pos.partition_point(|&y| y - x <= r) - 1;
                        (lo, hi)
                    })
                    .collect()
            }
        }
    }

    /// Number of ordered (transmitter, receiver) pairs within range.
    pub fn n_pairs(&self) -> usize {
        self.hearing_windows()
            .iter()
            .map(|&(lo, hi)| hi - lo)
            .sum()
    }

    /// Receivers at least `2R` from both road ends, where the road looks
    /// locally infinite. Every vehicle of a fully connected topology counts.
    pub fn is_interior(&self, v: usize) -> bool {
        match self.kind {
            TopologyKind::FullyConnected => true,
            TopologyKind::LinearRoad => {
                let x = self.positions_m[v];
                let margin = 2.0 * self.range_m;
                x >= margin && x <= self.road_length_m - margin
            }
        }
    }
}

/// Places the vehicles of one replication. Road positions are i.i.d. uniform
/// on `[0, L]` and stay fixed for the whole run.
pub fn build_topology<R: Rng + ?Sized>(spec: &TopologySpec, rng: &mut R) -> Result<Topology> {
    match *spec {
        TopologySpec::FullyConnected { n_vehicles } => Topology::fully_connected(n_vehicles),
        TopologySpec::LinearRoad {
            vehicles,
            road_length_m,
            range_m,
        } => {
            let n = match vehicles {
                VehicleCount::Fixed(n) => n,
                VehicleCount::Density(_) => spec.n_vehicles(),
            };
            if n == 0 {
                return Err(SimError::NoVehicles);
            }
            let positions = (0..n)
                .map(|_| rng.random_range(0.0..=road_length_m))
                .collect();
            Topology::linear_road(positions, road_length_m, range_m)
        }
    }
}
