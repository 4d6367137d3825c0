use rand::Rng;

use super::{GridShape, Policy};

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: usize,
    pub current_block: Option<usize>,
    /// Outcome of the reselection coin at the vehicle's latest boundary.
    pub pending_reselect: bool,
    /// Blocks heard busy during the last period. Refreshed in the period
    /// preceding each of the vehicle's boundaries; own transmissions are not
    /// included.
    pub sensed_busy: Vec<bool>,
    /// Semi-persistent phase in `0..T_s`: the vehicle's boundaries fall at the
    /// starts of periods `m` with `m % T_s == sps_phase`, `m > 0`.
    pub sps_phase: u32,
    /// Packet generation time within each period.
    pub gen_phase_ms: f64,
}

impl VehicleState {
    pub fn new(id: usize, n_blocks: usize) -> Self {
        Self {
            id,
            current_block: None,
            pending_reselect: false,
            sensed_busy: vec![false; n_blocks],
            sps_phase: 0,
            gen_phase_ms: 0.0,
        }
    }
}

/// Blocks the vehicle may pick: not sensed busy and not its own.
pub fn sense_idle(v: &VehicleState, grid: &GridShape) -> Vec<usize> {
    (0..grid.n_blocks)
        .filter(|&b| Some(b) != v.current_block && !v.sensed_busy.get(b).copied().unwrap_or(false))
        .collect()
}

/// Uniform draw over `idle`, or over all `n_blocks` blocks when nothing is idle.
pub fn select_uniform<R: Rng + ?Sized>(idle: &[usize], n_blocks: usize, rng: &mut R) -> usize {
    if idle.is_empty() {
        rng.random_range(0..n_blocks)
    } else {
        idle[rng.random_range(0..idle.len())]
    }
}

/// Earliest idle subframe starting at or after `arrival_offset_ms`, wrapping
/// to the earliest idle subframe of the next period if none is left; ties
/// within the subframe are broken uniformly. With nothing idle every block
/// is a candidate.
pub fn select_closest<R: Rng + ?Sized>(
    idle: &[usize],
    arrival_offset_ms: f64,
    grid: &GridShape,
    rng: &mut R,
) -> usize {
    let all: Vec<usize>;
    let candidates = if idle.is_empty() {
        all = (0..grid.n_blocks).collect();
        &all[..]
    } else {
        idle
    };
    let subframe = candidates
        .iter()
        .filter(|&&b| grid.offset_ms(b) >= arrival_offset_ms)
        .map(|&b| grid.subframe_of(b))
        .min()
        .or_else(|| candidates.iter().map(|&b| grid.subframe_of(b)).min())
        .expect("candidate set is nonempty");
    let tied: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&b| grid.subframe_of(b) == subframe)
        .collect();
    tied[rng.random_range(0..tied.len())]
}

/// Boundary step for the vehicles listed in `due`: each flips a coin with
/// probability `resel_prob` and, on success, picks a new block from its own
/// sensing snapshot. Every reselector reads the same pre-boundary snapshot,
/// so two of them may land on the same block.
pub fn sps_boundary<R: Rng + ?Sized>(
    vehicles: &mut [VehicleState],
    due: &[usize],
    resel_prob: f64,
    policy: Policy,
    grid: &GridShape,
    rng: &mut R,
) {
    for &i in due {
        vehicles[i].pending_reselect = rng.random_bool(resel_prob);
    }
    for &i in due {
        let v = &vehicles[i];
        if !v.pending_reselect {
            continue;
        }
        let idle = sense_idle(v, grid);
        let block = match policy {
            Policy::UniformNextPeriod => select_uniform(&idle, grid.n_blocks, rng),
            Policy::ClosestIdle => select_closest(&idle, v.gen_phase_ms, grid, rng),
        };
        vehicles[i].current_block = Some(block);
    }
}
