use rayon::prelude::*;

use super::aggregate::{aggregate, SimSummary};
use super::config::{ConfigValue, SweepSpec};
use super::HarnessError;
use crate::analytic::{self, HiddenTerminalParams, ModelParams};
use crate::simcore::{run_replication, Policy, SimConfig, SimMetrics, TopologySpec};

/// Model predictions for one point, in the units of the simulator columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticPoint {
    /// Transmitter-side collision probability.
    pub p_c: f64,
    pub per: f64,
    pub delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Valid(AnalyticPoint),
    Invalid(String),
}

impl Prediction {
    pub fn valid(&self) -> Option<&AnalyticPoint> {
        match self {
            Prediction::Valid(p) => Some(p),
            Prediction::Invalid(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub point: Vec<(String, ConfigValue)>,
    pub config: SimConfig,
    pub sim: SimSummary,
    pub analytic: Prediction,
}

/// Analytic counterpart of a scenario. Only the static protocol parameters
/// enter; run length and seeds never do.
///
/// Fully connected points use the fixed point directly. Road points solve the
/// fixed point for the tagged vehicle plus its expected `2 beta R`
/// neighbours, then apply the hidden-terminal correction.
pub fn analytic_prediction(config: &SimConfig) -> Prediction {
    if config.policy != Policy::UniformNextPeriod {
        return Prediction::Invalid(format!(
            "the model covers uniform_next_period selection only, not {}",
            config.policy
        ));
    }
    let grid = config.grid;
    let model = |n_vehicles| {
        ModelParams::new(
            n_vehicles,
            grid.n_blocks,
            config.sps_periods,
            config.resel_prob,
            grid.period_ms,
        )
    };
    let outcome = match config.topology {
        TopologySpec::FullyConnected { n_vehicles } => model(n_vehicles).and_then(|params| {
            let fp = analytic::solve_fixed_point(&params)?;
            let delay = analytic::expected_delay(&params, fp.p_c)?;
            Ok(AnalyticPoint {
                p_c: fp.p_c,
                per: fp.p_c,
                delay_ms: delay.e_d_total_ms,
            })
        }),
        TopologySpec::LinearRoad {
            road_length_m,
            range_m,
            ..
        } => {
            let density = config.topology.density_per_km().unwrap_or(0.0);
            HiddenTerminalParams::new(density, range_m, Some(road_length_m)).and_then(|ht| {
                let params = model(analytic::road_equivalent_vehicles(&ht))?;
                let (_, sol) = analytic::solve_hidden_terminal(&params, &ht)?;
                Ok(AnalyticPoint {
                    p_c: sol.p_c_ht,
                    per: sol.per,
                    delay_ms: sol.e_d_total_ms,
                })
            })
        }
    };
    match outcome {
        Ok(p) => Prediction::Valid(p),
        Err(e) => Prediction::Invalid(e.to_string()),
    }
}

/// Runs every replication of every sweep point and aggregates them in
/// cartesian order. `jobs` bounds the worker threads (all cores when `None`);
/// results do not depend on it.
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<Vec<AggregateResult>, HarnessError> {
    let points = spec.points()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;

    let tasks: Vec<(usize, usize)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.config.replications).map(move |r| (i, r)))
        .collect();
    let runs: Vec<SimMetrics> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, r)| run_replication(&points[i].config, r))
            .collect::<Result<_, _>>()
    })?;

    let mut runs = runs.into_iter();
    Ok(points
        .into_iter()
        .map(|p| {
            let metrics: Vec<SimMetrics> = runs.by_ref().take(p.config.replications).collect();
            AggregateResult {
                analytic: analytic_prediction(&p.config),
                sim: aggregate(&metrics),
                point: p.assignments,
                config: p.config,
            }
        })
        .collect())
}
