//! Seeded, period-stepped Monte Carlo simulation of semi-persistent block
//! scheduling on a virtual resource-block grid.
//!
//! Time advances one transmission period at a time. Every vehicle broadcasts
//! once per period on its current block; at its semi-persistent boundaries a
//! vehicle reselects with probability `p`, choosing among the blocks it sensed
//! idle during the period that just ended.

mod delivery;
mod engine;
mod selection;
mod topology;

pub use delivery::{deliver, sense_period, PeriodDelivery, Reception};
pub use engine::{
    replication_seed, run_replication, run_replication_traced, run_with_topology, LocationPer,
    SimMetrics,
};
pub use selection::{select_closest, select_uniform, sense_idle, sps_boundary, VehicleState};
pub use topology::{build_topology, Topology, TopologyKind};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("topology has no vehicles")]
    NoVehicles,
    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

pub(crate) fn config_error(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

/// Layout of the virtual blocks of one transmission period.
///
/// Blocks are numbered subframe by subframe, so block `i` lives in subframe
/// `i / blocks_per_subframe` and starts at that subframe's offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridShape {
    pub n_blocks: usize,
    pub blocks_per_subframe: usize,
    pub period_ms: f64,
}

impl Default for GridShape {
    fn default() -> Self {
        Self {
            n_blocks: 200,
            blocks_per_subframe: 2,
            period_ms: 100.0,
        }
    }
}

impl GridShape {
    pub fn new(n_blocks: usize, blocks_per_subframe: usize, period_ms: f64) -> Result<Self> {
        let grid = Self {
            n_blocks,
            blocks_per_subframe,
            period_ms,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(config_error("grid.n_blocks", "must be at least 1"));
        }
        if self.blocks_per_subframe == 0 || !self.n_blocks.is_multiple_of(self.blocks_per_subframe) {
            return Err(config_error(
                "grid.blocks_per_subframe",
                format!("must be a positive divisor of n_blocks = {}", self.n_blocks),
            ));
        }
        if !(self.period_ms > 0.0 && self.period_ms.is_finite()) {
            return Err(config_error("grid.period_ms", "must be positive and finite"));
        }
        Ok(())
    }

    pub fn n_subframes(&self) -> usize {
        self.n_blocks / self.blocks_per_subframe
    }

    pub fn subframe_ms(&self) -> f64 {
        self.period_ms / self.n_subframes() as f64
    }

    pub fn subframe_of(&self, block: usize) -> usize {
        block / self.blocks_per_subframe
    }

    /// Start time of `block` relative to the start of its period.
    pub fn offset_ms(&self, block: usize) -> f64 {
        self.subframe_of(block) as f64 * self.subframe_ms()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Uniform draw over the idle blocks of the next period.
    UniformNextPeriod,
    /// Earliest idle block at or after the vehicle's packet generation time.
    ClosestIdle,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::UniformNextPeriod => "uniform_next_period",
            Policy::ClosestIdle => "closest_idle",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform_next_period" | "uniform" => Ok(Policy::UniformNextPeriod),
            "closest_idle" | "closest" => Ok(Policy::ClosestIdle),
            other => Err(format!(
                "unknown policy {other:?} (expected uniform_next_period or closest_idle)"
            )),
        }
    }
}

/// How the semi-persistent boundaries of different vehicles line up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpsAlignment {
    /// Each vehicle keeps the common period length `T_s`, but its boundaries
    /// are shifted by a per-vehicle phase drawn uniformly from `0..T_s` at
    /// initialization. In any given period a fraction `1/T_s` of vehicles is
    /// at a boundary.
    Staggered,
    /// Every vehicle hits a boundary at the same periods.
    Synchronized,
}

impl SpsAlignment {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpsAlignment::Staggered => "staggered",
            SpsAlignment::Synchronized => "synchronized",
        }
    }
}

impl fmt::Display for SpsAlignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpsAlignment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "staggered" => Ok(SpsAlignment::Staggered),
            "synchronized" => Ok(SpsAlignment::Synchronized),
            other => Err(format!(
                "unknown alignment {other:?} (expected staggered or synchronized)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VehicleCount {
    Fixed(usize),
    /// Vehicles per kilometre; the count is `round(density * L)`.
    Density(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologySpec {
    FullyConnected {
        n_vehicles: usize,
    },
    LinearRoad {
        vehicles: VehicleCount,
        road_length_m: f64,
        range_m: f64,
    },
}

impl TopologySpec {
    pub fn n_vehicles(&self) -> usize {
        match *self {
            TopologySpec::FullyConnected { n_vehicles } => n_vehicles,
            TopologySpec::LinearRoad {
                vehicles: VehicleCount::Fixed(n),
                ..
            } => n,
            TopologySpec::LinearRoad {
                vehicles: VehicleCount::Density(d),
                road_length_m,
                ..
            } => (d * road_length_m / 1000.0).round() as usize,
        }
    }

    /// Vehicles per kilometre, realized or requested.
    pub fn density_per_km(&self) -> Option<f64> {
        match *self {
            TopologySpec::FullyConnected { .. } => None,
            TopologySpec::LinearRoad {
                vehicles: VehicleCount::Density(d),
                ..
            } => Some(d),
            TopologySpec::LinearRoad {
                vehicles: VehicleCount::Fixed(n),
                road_length_m,
                ..
            } => Some(n as f64 / road_length_m * 1000.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: GridShape,
    pub topology: TopologySpec,
    pub sps_periods: u32,
    pub resel_prob: f64,
    pub policy: Policy,
    pub alignment: SpsAlignment,
    /// Total simulated time, warm-up included.
    pub duration_s: f64,
    /// Leading part of the run excluded from every metric.
    pub warmup_s: f64,
    pub master_seed: u64,
    pub replications: usize,
    pub location_bins: usize,
}

impl SimConfig {
    /// A configuration with the reference defaults: 200 blocks in 2-block
    /// subframes over 100 ms, `T_s = 10`, `p = 0.2`, 2000 s, 10 replications.
    pub fn new(topology: TopologySpec) -> Self {
        let grid = GridShape::default();
        let sps_periods = 10;
        Self {
            grid,
            topology,
            sps_periods,
            resel_prob: 0.2,
            policy: Policy::UniformNextPeriod,
            alignment: SpsAlignment::Staggered,
            duration_s: 2000.0,
            warmup_s: default_warmup_s(sps_periods, grid.period_ms),
            master_seed: 1,
            replications: 10,
            location_bins: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        match self.topology {
            TopologySpec::FullyConnected { .. } => {}
            TopologySpec::LinearRoad {
                vehicles,
                road_length_m,
                range_m,
            } => {
                if !(road_length_m > 0.0 && road_length_m.is_finite()) {
                    return Err(config_error("topology.road_length_m", "must be positive"));
                }
                if !(range_m > 0.0 && range_m.is_finite()) {
                    return Err(config_error("topology.range_m", "must be positive"));
                }
                if let VehicleCount::Density(d) = vehicles {
                    if !(d >= 0.0 && d.is_finite()) {
                        return Err(config_error(
                            "topology.density_per_km",
                            "must be nonnegative",
                        ));
                    }
                }
            }
        }
        if self.topology.n_vehicles() == 0 {
            return Err(SimError::NoVehicles);
        }
        if self.sps_periods == 0 {
            return Err(config_error("protocol.sps_periods", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.resel_prob) {
            return Err(config_error("protocol.resel_prob", "must lie in [0, 1]"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(config_error("run.duration_s", "must be positive"));
        }
        if !(self.warmup_s >= 0.0 && self.warmup_s < self.duration_s) {
            return Err(config_error(
                "run.warmup_s",
                format!("must lie in [0, duration_s = {})", self.duration_s),
            ));
        }
        if self.replications == 0 {
            return Err(config_error("run.replications", "must be at least 1"));
        }
        if self.location_bins == 0 {
            return Err(config_error("run.location_bins", "must be at least 1"));
        }
        Ok(())
    }

    pub fn total_periods(&self) -> u64 {
        (self.duration_s * 1000.0 / self.grid.period_ms).round() as u64
    }

    pub fn warmup_periods(&self) -> u64 {
        (self.warmup_s * 1000.0 / self.grid.period_ms).round() as u64
    }
}

/// Three semi-persistent periods, but never less than 10 s.
pub fn default_warmup_s(sps_periods: u32, period_ms: f64) -> f64 {
    (3.0 * f64::from(sps_periods) * period_ms / 1000.0).max(10.0)
}
