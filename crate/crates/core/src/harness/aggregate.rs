use crate::simcore::SimMetrics;

/// Normal-approximation 95% confidence multiplier.
const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    /// Half-width `1.96 * s / sqrt(n)`, with `s` the sample standard deviation.
    pub ci: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn lower(&self) -> f64 {
        self.mean - self.ci
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci
    }

    /// True when the two intervals are disjoint and `self` lies above.
    pub fn clearly_above(&self, other: &MeanCi) -> bool {
        self.lower() > other.upper()
    }
}

/// Mean and CI half-width over the finite values of `values`; NaN mean when
/// none is finite.
pub fn mean_ci(values: impl IntoIterator<Item = f64>) -> MeanCi {
    let xs: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    let n = xs.len();
    if n == 0 {
        return MeanCi {
            mean: f64::NAN,
            ci: f64::NAN,
            n,
        };
    }
    // Shifting by the first value keeps constant samples exact.
    let shift = xs[0];
    let mean = shift + xs.iter().map(|x| x - shift).sum::<f64>() / n as f64;
    let ci = if n < 2 {
        0.0
    } else {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Z95 * var.sqrt() / (n as f64).sqrt()
    };
    MeanCi { mean, ci, n }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationSummary {
    pub center_m: f64,
    pub per: MeanCi,
}

/// Replication statistics of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub replications: usize,
    pub collision: MeanCi,
    pub per: MeanCi,
    pub per_interior: MeanCi,
    pub delay_ms: MeanCi,
    pub per_by_location: Vec<LocationSummary>,
}

pub fn aggregate(metrics: &[SimMetrics]) -> SimSummary {
    let n_bins = metrics.first().map_or(0, |m| m.per_by_location.len());
    let per_by_location = (0..n_bins)
        .map(|i| LocationSummary {
            center_m: metrics[0].per_by_location[i].center_m,
            per: mean_ci(metrics.iter().map(|m| m.per_by_location[i].per)),
        })
        .collect();
    SimSummary {
        replications: metrics.len(),
        collision: mean_ci(metrics.iter().map(|m| m.tx_collision_ratio)),
        per: mean_ci(metrics.iter().map(|m| m.per)),
        per_interior: mean_ci(metrics.iter().map(|m| m.per_interior)),
        delay_ms: mean_ci(metrics.iter().map(|m| m.mean_delay_ms)),
        per_by_location,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::LocationPer;

    fn metrics(collision: f64) -> SimMetrics {
        SimMetrics {
            tx_collision_ratio: collision,
            per: collision,
            per_interior: collision,
            per_by_location: vec![LocationPer {
                center_m: 50.0,
                per: collision,
                receptions: 10,
            }],
            mean_delay_ms: 50.0,
            delay_samples_count: 1,
            transmissions_total: 1,
            collisions_total: 0,
            receptions_total: 1,
            receptions_missed: 0,
        }
    }

    #[test]
    fn identical_replications_zero_width() {
        let s = aggregate(&[metrics(0.1), metrics(0.1), metrics(0.1)]);
        assert_eq!(s.collision.ci, 0.0);
        assert_eq!(s.collision.mean, 0.1);
        assert_eq!(s.replications, 3);
    }

    #[test]
    fn two_value_mean() {
        let s = aggregate(&[metrics(0.1), metrics(0.2)]);
        assert!((s.collision.mean - 0.15).abs() < 1e-15);
        assert!((s.per_by_location[0].per.mean - 0.15).abs() < 1e-15);
    }

    #[test]
    fn half_width_formula() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        // sample variance of 1..=10 is 55/6
        let expected = 1.96 * (55.0f64 / 6.0).sqrt() / 10f64.sqrt();
        let m = mean_ci(xs);
        assert_eq!(m.mean, 5.5);
        assert!((m.ci - expected).abs() < 1e-12);
    }

    #[test]
    fn nan_values_are_skipped() {
        let m = mean_ci([0.2, f64::NAN, 0.4]);
        assert_eq!(m.n, 2);
        assert!((m.mean - 0.3).abs() < 1e-15);
        assert!(mean_ci([f64::NAN]).mean.is_nan());
    }

    #[test]
    fn single_replication_zero_width() {
        assert_eq!(mean_ci([0.3]).ci, 0.0);
    }
}
