use std::fmt;
use std::io::Write;

use super::sweep::AggregateResult;
use super::HarnessError;
use crate::simcore::TopologySpec;

/// Two-sided band: a gap passes when `|sim - analytic| <= max(abs, rel * |analytic|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub fn allowed(&self, analytic: f64) -> f64 {
        self.abs.max(self.rel * analytic.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceProfile {
    pub collision: Tolerance,
    pub per: Tolerance,
    pub delay_ms: Tolerance,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self {
            collision: Tolerance { abs: 0.005, rel: 0.15 },
            per: Tolerance { abs: 0.01, rel: 0.20 },
            delay_ms: Tolerance { abs: 3.0, rel: 0.10 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Collision,
    Per,
    DelayMs,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Collision => "collision",
            Metric::Per => "per",
            Metric::DelayMs => "delay_ms",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gap {
    pub point_id: usize,
    pub metric: Metric,
    pub sim: f64,
    pub analytic: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub allowed: f64,
    /// Whether the gap decides pass/fail. Fully connected points gate on
    /// collision and delay; road points gate on the interior PER.
    pub gated: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub gaps: Vec<Gap>,
    /// Points without a valid analytic prediction, with the reason.
    pub skipped: Vec<(usize, String)>,
}

impl Comparison {
    pub fn all_pass(&self) -> bool {
        self.gaps.iter().all(|g| g.pass || !g.gated)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Gap> {
        self.gaps.iter().filter(|g| g.gated && !g.pass)
    }

    /// Largest gated gap relative to its allowance, per metric.
    pub fn worst(&self, metric: Metric) -> Option<&Gap> {
        self.gaps
            .iter()
            .filter(|g| g.metric == metric && g.gated)
            .max_by(|a, b| (a.abs_gap / a.allowed).total_cmp(&(b.abs_gap / b.allowed)))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "point_id", "metric", "sim", "analytic", "abs_gap", "rel_gap", "allowed", "gated",
            "pass",
        ])?;
        for g in &self.gaps {
            w.write_record([
                g.point_id.to_string(),
                g.metric.to_string(),
                g.sim.to_string(),
                g.analytic.to_string(),
                g.abs_gap.to_string(),
                g.rel_gap.to_string(),
                g.allowed.to_string(),
                g.gated.to_string(),
                g.pass.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for metric in [Metric::Collision, Metric::Per, Metric::DelayMs] {
            if let Some(g) = self.worst(metric) {
                s += &format!(
                    "worst {metric}: point {} sim {} analytic {} gap {:.3e} (allowed {:.3e})\n",
                    g.point_id, g.sim, g.analytic, g.abs_gap, g.allowed
                );
            }
        }
        for (id, why) in &self.skipped {
            s += &format!("point {id} skipped: {why}\n");
        }
        let failed = self.failures().count();
        if failed == 0 {
            s += "PASS\n";
        } else {
            s += &format!("FAIL: {failed} gated gap(s) above tolerance\n");
        }
        s
    }
}

fn relative_gap(abs_gap: f64, analytic: f64) -> f64 {
    match (abs_gap == 0.0, analytic == 0.0) {
        (true, _) => 0.0,
        (false, true) => f64::INFINITY,
        (false, false) => abs_gap / analytic.abs(),
    }
}

pub fn compare(results: &[AggregateResult], tolerance: &ToleranceProfile) -> Comparison {
    let mut gaps = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in results.iter().enumerate() {
        let Some(a) = r.analytic.valid() else {
            if let super::sweep::Prediction::Invalid(why) = &r.analytic {
                skipped.push((id, why.clone()));
            }
            continue;
        };
        let road = matches!(r.config.topology, TopologySpec::LinearRoad { .. });
        let per_sim = if road && r.sim.per_interior.mean.is_finite() {
            r.sim.per_interior.mean
        } else {
            r.sim.per.mean
        };
        let rows = [
            (Metric::Collision, r.sim.collision.mean, a.p_c, tolerance.collision, !road),
            (Metric::Per, per_sim, a.per, tolerance.per, road),
            (Metric::DelayMs, r.sim.delay_ms.mean, a.delay_ms, tolerance.delay_ms, !road),
        ];
        for (metric, sim, analytic, tol, gated) in rows {
            let abs_gap = (sim - analytic).abs();
            let allowed = tol.allowed(analytic);
            gaps.push(Gap {
                point_id: id,
                metric,
                sim,
                analytic,
                abs_gap,
                rel_gap: relative_gap(abs_gap, analytic),
                allowed,
                gated,
                pass: abs_gap <= allowed,
            });
        }
    }
    Comparison { gaps, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::aggregate::{mean_ci, SimSummary};
    use crate::harness::sweep::{AnalyticPoint, Prediction};
    use crate::simcore::SimConfig;

    fn result(sim_pc: f64, sim_delay: f64, ana_pc: f64, ana_delay: f64) -> AggregateResult {
        AggregateResult {
            point: vec![],
            config: SimConfig::new(TopologySpec::FullyConnected { n_vehicles: 50 }),
            sim: SimSummary {
                replications: 1,
                collision: mean_ci([sim_pc]),
                per: mean_ci([sim_pc]),
                per_interior: mean_ci([sim_pc]),
                delay_ms: mean_ci([sim_delay]),
                per_by_location: vec![],
            },
            analytic: Prediction::Valid(AnalyticPoint {
                p_c: ana_pc,
                per: ana_pc,
                delay_ms: ana_delay,
            }),
        }
    }

    #[test]
    fn exact_match_passes() {
        let c = compare(&[result(0.02, 51.0, 0.02, 51.0)], &ToleranceProfile::default());
        assert!(c.all_pass());
        assert!(c.gaps.iter().all(|g| g.abs_gap == 0.0 && g.rel_gap == 0.0));
    }

    #[test]
    fn large_gap_flagged() {
        let c = compare(
            &[result(0.02, 51.0, 0.02, 51.0), result(0.2, 51.0, 0.02, 51.0)],
            &ToleranceProfile::default(),
        );
        assert!(!c.all_pass());
        let failed: Vec<_> = c.failures().collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].point_id, 1);
        assert_eq!(failed[0].metric, Metric::Collision);
        assert!(c.summary().contains("FAIL"));
    }

    #[test]
    fn absolute_floor_applies_near_zero() {
        let c = compare(&[result(0.004, 50.0, 0.0, 50.0)], &ToleranceProfile::default());
        assert!(c.all_pass());
        let c = compare(&[result(0.0051, 50.0, 0.0, 50.0)], &ToleranceProfile::default());
        assert!(!c.all_pass());
    }

    #[test]
    fn invalid_points_skipped() {
        let mut r = result(0.5, 80.0, 0.0, 0.0);
        r.analytic = Prediction::Invalid("too many vehicles".into());
        let c = compare(&[r], &ToleranceProfile::default());
        assert!(c.gaps.is_empty());
        assert_eq!(c.skipped.len(), 1);
        assert!(c.all_pass());
    }
}
