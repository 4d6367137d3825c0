//! Closed-form model of semi-persistent scheduling in a broadcast vehicular
//! network: the fixed-point collision probability, the delay decomposition
//! and the hidden-terminal extension for a linear road.
//!
//! Every function here is pure. Probabilities are plain `f64`s, delays are in
//! milliseconds, vehicle densities are given per kilometre and ranges in
//! metres.

use thiserror::Error;

/// Convergence tolerance on `|P_c - RHS(P_c)|`.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-10;
/// Picard iterations before falling back to bisection.
pub const FIXED_POINT_MAX_ITER: usize = 10_000;
/// Damping factor of the Picard update.
pub const FIXED_POINT_DAMPING: f64 = 0.5;
/// Below this value of `beta * R` the PER uses its analytic limit.
pub const PER_LIMIT_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("model requires n_vehicles < n_blocks (got {n_vehicles} vehicles, {n_blocks} blocks)")]
    TooManyVehicles { n_vehicles: usize, n_blocks: usize },
    #[error("{quantity} = {value} is outside the domain of the model: {reason}")]
    Domain {
        quantity: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("hidden-range vehicles have no free blocks: N_r - beta*R = {free} <= 1")]
    NoFreeBlocks { free: f64 },
    #[error("combined collision probability is 1, delay is unbounded")]
    InfiniteDelay,
    #[error("fixed point did not converge: last iterate {last}, residual {residual:e}")]
    NoConvergence { last: f64, residual: f64 },
}

pub type Result<T> = std::result::Result<T, AnalyticError>;

/// Inputs of the fully connected model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n_vehicles: usize,
    pub n_blocks: usize,
    pub sps_periods: u32,
    pub resel_prob: f64,
    pub period_ms: f64,
}

impl ModelParams {
    pub fn new(
        n_vehicles: usize,
        n_blocks: usize,
        sps_periods: u32,
        resel_prob: f64,
        period_ms: f64,
    ) -> Result<Self> {
        let params = Self {
            n_vehicles,
            n_blocks,
            sps_periods,
            resel_prob,
            period_ms,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks the field invariants, including the `N_v < N_r` validity
    /// boundary of the model.
    pub fn validate(&self) -> Result<()> {
        if self.n_vehicles == 0 {
            return Err(invalid("n_vehicles", "must be at least 1"));
        }
        if self.n_blocks == 0 {
            return Err(invalid("n_blocks", "must be at least 1"));
        }
        if self.sps_periods == 0 {
            return Err(invalid("sps_periods", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.resel_prob) {
            return Err(invalid("resel_prob", "must lie in [0, 1]"));
        }
        if !(self.period_ms > 0.0 && self.period_ms.is_finite()) {
            return Err(invalid("period_ms", "must be positive and finite"));
        }
        if self.n_vehicles >= self.n_blocks {
            return Err(AnalyticError::TooManyVehicles {
                n_vehicles: self.n_vehicles,
                n_blocks: self.n_blocks,
            });
        }
        Ok(())
    }

    /// Per-period reselection probability `p / T_s`.
    pub fn resel_rate(&self) -> f64 {
        self.resel_prob / f64::from(self.sps_periods)
    }
}

fn invalid(name: &'static str, reason: &str) -> AnalyticError {
    AnalyticError::InvalidParameter {
        name,
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointSolution {
    pub p_c: f64,
    pub n_idle: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayStats {
    pub e_d_ini_ms: f64,
    pub e_d_col_ms: f64,
    pub e_d_total_ms: f64,
    pub p_c_com: f64,
}

/// Linear-road geometry for the hidden-terminal extension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenTerminalParams {
    pub density_per_km: f64,
    pub range_m: f64,
    /// `None` stands for an unbounded road.
    pub road_length_m: Option<f64>,
}

impl HiddenTerminalParams {
    pub fn new(density_per_km: f64, range_m: f64, road_length_m: Option<f64>) -> Result<Self> {
        let ht = Self {
            density_per_km,
            range_m,
            road_length_m,
        };
        ht.validate()?;
        Ok(ht)
    }

    pub fn infinite_road(density_per_km: f64, range_m: f64) -> Result<Self> {
        Self::new(density_per_km, range_m, None)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density_per_km >= 0.0 && self.density_per_km.is_finite()) {
            return Err(invalid("density_per_km", "must be nonnegative and finite"));
        }
        if !(self.range_m > 0.0 && self.range_m.is_finite()) {
            return Err(invalid("range_m", "must be positive and finite"));
        }
        if let Some(len) = self.road_length_m {
            if len.is_nan() || len <= 0.0 {
                return Err(invalid("road_length_m", "must be positive"));
            }
        }
        Ok(())
    }

    /// Expected number of vehicles within range on one side, `beta * R`.
    pub fn beta_r(&self) -> f64 {
        self.density_per_km / 1000.0 * self.range_m
    }

    /// Expected number of vehicles within range of a tagged vehicle.
    pub fn n_in_range(&self) -> f64 {
        2.0 * self.beta_r()
    }

    /// Expected number of potential hidden terminals, in `[R, 2R]` on both
    /// sides.
    pub fn n_hidden(&self) -> f64 {
        2.0 * self.beta_r()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenTerminalSolution {
    pub p_single: f64,
    pub p_c_ht: f64,
    pub per: f64,
    pub p_del: f64,
    pub e_d_total_ms: f64,
}

/// Probability that exactly `n` of the other `N_v - 1` vehicles reselect in a
/// given transmission period.
pub fn reselect_prob_mass(n: usize, params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let peers = params.n_vehicles - 1;
    if n > peers {
        return Err(AnalyticError::Domain {
            quantity: "n",
            value: n as f64,
            reason: "must not exceed n_vehicles - 1",
        });
    }
    Ok(binomial_pmf(peers, n, params.resel_rate()))
}

fn binomial_pmf(trials: usize, k: usize, q: f64) -> f64 {
    if q == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 1.0 {
        return if k == trials { 1.0 } else { 0.0 };
    }
    let ln = ln_choose(trials, k) + k as f64 * q.ln() + (trials - k) as f64 * (-q).ln_1p();
    ln.exp()
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// Expected number of idle blocks seen by a vehicle when the overall
/// collision probability is `p_c`.
pub fn expected_idle(params: &ModelParams, p_c: f64) -> f64 {
    params.n_blocks as f64 - params.n_vehicles as f64
        + p_c * (params.n_vehicles as f64 - 1.0) / 2.0
}

/// Collision probability when the tagged vehicle and some peers reselect in
/// the same period, in binomial closed form.
pub fn collision_case1(params: &ModelParams, n_idle: f64) -> Result<f64> {
    check_idle(n_idle)?;
    let peers = (params.n_vehicles - 1) as i32;
    let q = params.resel_rate() / n_idle;
    Ok(1.0 - (1.0 - q).powi(peers))
}

/// The same quantity as [`collision_case1`], summed term by term over the
/// number of simultaneous reselectors.
pub fn collision_case1_sum(params: &ModelParams, n_idle: f64) -> Result<f64> {
    check_idle(n_idle)?;
    let keep = (n_idle - 1.0) / n_idle;
    let peers = params.n_vehicles - 1;
    let mut total = 0.0;
    for n in 1..=peers {
        let hit = 1.0 - keep.powi(n as i32);
        total += reselect_prob_mass(n, params)? * hit;
    }
    Ok(total)
}

fn check_idle(n_idle: f64) -> Result<()> {
    if n_idle >= 1.0 {
        Ok(())
    } else {
        Err(AnalyticError::Domain {
            quantity: "n_idle",
            value: n_idle,
            reason: "no idle block is sensed",
        })
    }
}

/// Right-hand side of the fixed-point equation for `P_c`.
pub fn fixed_point_rhs(params: &ModelParams, p_c: f64) -> Result<f64> {
    let n_idle = expected_idle(params, p_c);
    Ok(collision_case1(params, n_idle)? / (2.0 - params.resel_prob))
}

/// Solves `P_c = RHS(P_c)` by damped Picard iteration started at zero,
/// falling back to bisection on `[0, 1]` if the iteration cap is reached.
pub fn solve_fixed_point(params: &ModelParams) -> Result<FixedPointSolution> {
    params.validate()?;
    let residual_at = |x: f64| -> Result<f64> { Ok((x - fixed_point_rhs(params, x)?).abs()) };

    let mut x = 0.0_f64;
    for iter in 0..FIXED_POINT_MAX_ITER {
        let rhs = fixed_point_rhs(params, x)?;
        let residual = (x - rhs).abs();
        if residual <= FIXED_POINT_TOLERANCE {
            return Ok(solution(params, x, iter, residual));
        }
        x = (1.0 - FIXED_POINT_DAMPING) * x + FIXED_POINT_DAMPING * rhs;
    }

    // g(x) = x - RHS(x) is >= 0 at x = 1 and <= 0 at x = 0.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut iterations = FIXED_POINT_MAX_ITER;
    for _ in 0..200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let g = mid - fixed_point_rhs(params, mid)?;
        if g.abs() <= FIXED_POINT_TOLERANCE {
            return Ok(solution(params, mid, iterations, g.abs()));
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let last = 0.5 * (lo + hi);
    let residual = residual_at(last)?;
    if residual <= FIXED_POINT_TOLERANCE {
        Ok(solution(params, last, iterations, residual))
    } else {
        Err(AnalyticError::NoConvergence { last, residual })
    }
}

fn solution(params: &ModelParams, p_c: f64, iterations: usize, residual: f64) -> FixedPointSolution {
    FixedPointSolution {
        p_c,
        n_idle: expected_idle(params, p_c),
        iterations,
        residual,
    }
}

/// Probability that a whole semi-persistent period, viewed as one combined
/// slot, is a collision.
pub fn combined_collision_prob(p_c: f64, sps_periods: u32) -> f64 {
    let ts = f64::from(sps_periods);
    p_c / (ts - (ts - 1.0) * p_c)
}

/// Mean delay: half a period of initial delay plus a geometric number of
/// combined collisions, each lasting `T_s * T_tr`.
pub fn expected_delay(params: &ModelParams, p_c: f64) -> Result<DelayStats> {
    if !(0.0..=1.0).contains(&p_c) {
        return Err(AnalyticError::Domain {
            quantity: "p_c",
            value: p_c,
            reason: "must lie in [0, 1)",
        });
    }
    let p_com = combined_collision_prob(p_c, params.sps_periods);
    if p_com >= 1.0 {
        return Err(AnalyticError::InfiniteDelay);
    }
    let e_d_ini_ms = params.period_ms / 2.0;
    let e_d_col_ms = f64::from(params.sps_periods) * params.period_ms * p_com / (1.0 - p_com);
    Ok(DelayStats {
        e_d_ini_ms,
        e_d_col_ms,
        e_d_total_ms: e_d_ini_ms + e_d_col_ms,
        p_c_com: p_com,
    })
}

/// Probability that one vehicle in the hidden range avoids the tagged
/// vehicle's block.
pub fn p_single(n_blocks: usize, ht: &HiddenTerminalParams) -> Result<f64> {
    ht.validate()?;
    let free = n_blocks as f64 - ht.beta_r();
    if free <= 1.0 {
        return Err(AnalyticError::NoFreeBlocks { free });
    }
    Ok((free - 1.0) / free)
}

/// Transmitter-side collision probability including hidden terminals.
pub fn collision_with_hidden(p_c: f64, n_blocks: usize, ht: &HiddenTerminalParams) -> Result<f64> {
    let single = p_single(n_blocks, ht)?;
    if ht.n_hidden() == 0.0 {
        return Ok(p_c);
    }
    Ok(1.0 - (1.0 - p_c) * single.powf(ht.n_hidden()))
}

/// Receiver-side packet error ratio, averaged over receivers uniformly
/// spread within range of the transmitter.
pub fn packet_error_ratio(p_c: f64, n_blocks: usize, ht: &HiddenTerminalParams) -> Result<f64> {
    let single = p_single(n_blocks, ht)?;
    let br = ht.beta_r();
    if br < PER_LIMIT_THRESHOLD {
        return Ok(p_c);
    }
    let ln_s = single.ln();
    // P^(βR) - 1 via expm1 keeps precision when βR·ln P is tiny.
    let mean_success = (br * ln_s).exp_m1() / (br * ln_s);
    Ok(1.0 - (1.0 - p_c) * mean_success)
}

/// Same as [`expected_delay`] with the packet error ratio in place of the
/// collision probability.
pub fn delay_partial(params: &ModelParams, per: f64) -> Result<DelayStats> {
    expected_delay(params, per)
}

/// Solves the fully connected model and applies the hidden-terminal
/// correction for the given geometry.
pub fn solve_hidden_terminal(
    params: &ModelParams,
    ht: &HiddenTerminalParams,
) -> Result<(FixedPointSolution, HiddenTerminalSolution)> {
    let fp = solve_fixed_point(params)?;
    let single = p_single(params.n_blocks, ht)?;
    let p_c_ht = collision_with_hidden(fp.p_c, params.n_blocks, ht)?;
    let per = packet_error_ratio(fp.p_c, params.n_blocks, ht)?;
    let delay = delay_partial(params, per)?;
    Ok((
        fp,
        HiddenTerminalSolution {
            p_single: single,
            p_c_ht,
            per,
            p_del: 1.0 - fp.p_c,
            e_d_total_ms: delay.e_d_total_ms,
        },
    ))
}

/// Vehicle count of the fully connected sub-problem around a tagged vehicle
/// on a road: the tagged vehicle plus its expected in-range neighbours.
pub fn road_equivalent_vehicles(ht: &HiddenTerminalParams) -> usize {
    ht.n_in_range().round() as usize + 1
}
