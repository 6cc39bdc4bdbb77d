//! Laws of the agent parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::quadrature;

/// Default Gaussian truncation, in standard deviations, used for quadrature.
pub const GAUSSIAN_TRUNCATION_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    Gaussian { mean: f64, variance: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Finite-support law. Points are sorted ascending and distinct.
    Discrete { points: Vec<f64>, weights: Vec<f64> },
    /// Empirical law of a sample; values are kept sorted.
    Empirical { values: Vec<f64> },
}

/// Analytic or empirical law of the parameters `alpha`.
///
/// The optional truncation restricts the interval used for quadrature; it
/// does not affect the CDF or the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDistribution {
    pub kind: DistributionKind,
    pub truncation: Option<(f64, f64)>,
}

impl ParameterDistribution {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() || variance <= 0.0 {
            return Err(MfgError::Domain(format!(
                "gaussian needs finite mean and positive variance, got mean={mean} variance={variance}"
            )));
        }
        Ok(Self {
            kind: DistributionKind::Gaussian { mean, variance },
            truncation: None,
        })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(MfgError::Domain(format!(
                "uniform needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            kind: DistributionKind::Uniform { lo, hi },
            truncation: None,
        })
    }

    /// Finite-support law. Duplicate points are merged and the result is sorted.
    pub fn discrete(points: &[f64], weights: &[f64]) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(MfgError::Size(format!(
                "discrete law needs matching non-empty points/weights, got {} and {}",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().chain(weights).any(|v| !v.is_finite()) {
            return Err(MfgError::Domain("discrete law has non-finite entries".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(MfgError::Domain("discrete weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MfgError::Domain(format!(
                "discrete weights must sum to 1, got {total}"
            )));
        }
        let mut pairs: Vec<(f64, f64)> = points.iter().copied().zip(weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (p, w) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += w,
                _ => merged.push((p, w)),
            }
        }
        let (points, weights) = merged.into_iter().unzip();
        Ok(Self {
            kind: DistributionKind::Discrete { points, weights },
            truncation: None,
        })
    }

    pub fn point_mass(at: f64) -> Result<Self> {
        Self::discrete(&[at], &[1.0])
    }

    pub fn empirical(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(MfgError::Size("empirical law needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MfgError::Domain("empirical law has non-finite values".into()));
        }
        let mut values = values.to_vec();
        values.sort_by(f64::total_cmp);
        Ok(Self {
            kind: DistributionKind::Empirical { values },
            truncation: None,
        })
    }

    pub fn with_truncation(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(MfgError::Domain(format!(
                "truncation needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        self.truncation = Some((lo, hi));
        Ok(self)
    }

    pub fn is_continuous(&self) -> bool {
        matches!(
            self.kind,
            DistributionKind::Gaussian { .. } | DistributionKind::Uniform { .. }
        )
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            DistributionKind::Gaussian { mean, .. } => *mean,
            DistributionKind::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistributionKind::Discrete { points, weights } => {
                points.iter().zip(weights).map(|(p, w)| p * w).sum()
            }
            DistributionKind::Empirical { values } => {
                values.iter().sum::<f64>() / values.len() as f64
            }
        }
    }

    /// `P(alpha <= x)`; right-continuous.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            DistributionKind::Gaussian { mean, variance } => {
                0.5 * libm::erfc(-(x - mean) / (2.0 * variance).sqrt())
            }
            DistributionKind::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            DistributionKind::Discrete { points, weights } => {
                let k = points.partition_point(|&p| p <= x);
                weights[..k].iter().sum::<f64>().min(1.0)
            }
            DistributionKind::Empirical { values } => {
                values.partition_point(|&v| v <= x) as f64 / values.len() as f64
            }
        }
    }

    /// Density of a continuous law; `None` for laws with atoms.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        match &self.kind {
            DistributionKind::Gaussian { mean, variance } => {
                let d = x - mean;
                Some((-d * d / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt())
            }
            DistributionKind::Uniform { lo, hi } => {
                Some(if x >= *lo && x <= *hi { 1.0 / (hi - lo) } else { 0.0 })
            }
            _ => None,
        }
    }

    /// Interval over which expectations are integrated: the truncation when
    /// set, otherwise mean +/- 8 sigma for a Gaussian and the support hull for
    /// the other laws.
    pub fn support(&self) -> (f64, f64) {
        if let Some(t) = self.truncation {
            return t;
        }
        match &self.kind {
            DistributionKind::Gaussian { mean, variance } => {
                let w = GAUSSIAN_TRUNCATION_SIGMAS * variance.sqrt();
                (mean - w, mean + w)
            }
            DistributionKind::Uniform { lo, hi } => (*lo, *hi),
            DistributionKind::Discrete { points, .. } => (points[0], points[points.len() - 1]),
            DistributionKind::Empirical { values } => (values[0], values[values.len() - 1]),
        }
    }

    /// Atoms and their probabilities for laws without a density. Repeated
    /// empirical values are merged, so `n` copies of one value yield a single
    /// atom of weight exactly 1.
    pub fn atoms(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            DistributionKind::Discrete { points, weights } => Some((points.clone(), weights.clone())),
            DistributionKind::Empirical { values } => Some(group_counts(values)),
            _ => None,
        }
    }

    /// `E[f(alpha)]`. Continuous laws are integrated piecewise over the
    /// support, split at `breakpoints`, with `nodes` Gauss-Legendre points per
    /// piece and normalized by the mass of the support. Laws with atoms are
    /// summed exactly.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, breakpoints: &[f64], nodes: usize) -> f64 {
        if let Some((points, weights)) = self.atoms() {
            return points.iter().zip(&weights).map(|(&p, &w)| w * f(p)).sum();
        }
        let (lo, hi) = self.support();
        let mut cuts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|&c| c > lo && c < hi)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(lo);
        edges.extend(cuts);
        edges.push(hi);
        let density = |x: f64| self.pdf(x).unwrap_or(0.0);
        let mut mass = 0.0;
        let mut total = 0.0;
        for w in edges.windows(2) {
            mass += quadrature::integrate(density, w[0], w[1], nodes);
            total += quadrature::integrate(|x| density(x) * f(x), w[0], w[1], nodes);
        }
        total / mass
    }

    /// Draws `n` values from a ChaCha8 stream seeded with `seed`. Draws are
    /// sequential, so a shorter request is always a prefix of a longer one.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &self.kind {
            DistributionKind::Gaussian { mean, variance } => {
                let normal = Normal::new(*mean, variance.sqrt()).expect("validated gaussian");
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            }
            DistributionKind::Uniform { lo, hi } => {
                let u = Uniform::new_inclusive(*lo, *hi).expect("validated uniform");
                (0..n).map(|_| u.sample(&mut rng)).collect()
            }
            DistributionKind::Discrete { points, weights } => {
                let idx = WeightedIndex::new(weights).expect("validated weights");
                (0..n).map(|_| points[idx.sample(&mut rng)]).collect()
            }
            DistributionKind::Empirical { values } => {
                (0..n).map(|_| values[rng.random_range(0..values.len())]).collect()
            }
        }
    }
}

/// Distinct sorted values with their relative frequencies.
pub(crate) fn group_counts(sorted: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = sorted.len() as f64;
    let mut points = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for &v in sorted {
        match points.last() {
            Some(&last) if last == v => *counts.last_mut().unwrap() += 1,
            _ => {
                points.push(v);
                counts.push(1);
            }
        }
    }
    let weights = counts.into_iter().map(|c| c as f64 / n).collect();
    (points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_cdf_matches_standard_values() {
        let d = ParameterDistribution::gaussian(0.0, 4.0).unwrap();
        assert_eq!(d.cdf(0.0), 0.5);
        // Phi(1) = 0.8413447460685429
        assert!((d.cdf(2.0) - 0.841_344_746_068_542_9).abs() < 2e-16);
        assert!(d.cdf(-40.0) < 1e-80);
        assert_eq!(d.cdf(40.0), 1.0);
    }

    #[test]
    fn discrete_cdf_is_right_continuous() {
        let d = ParameterDistribution::discrete(&[1.0, 2.0], &[0.25, 0.75]).unwrap();
        assert_eq!(d.cdf(0.999), 0.0);
        assert_eq!(d.cdf(1.0), 0.25);
        assert_eq!(d.cdf(2.0), 1.0);
    }

    #[test]
    fn invalid_laws_are_rejected() {
        assert!(ParameterDistribution::gaussian(0.0, 0.0).is_err());
        assert!(ParameterDistribution::uniform(1.0, 1.0).is_err());
        assert!(ParameterDistribution::discrete(&[1.0], &[0.5]).is_err());
        assert!(ParameterDistribution::empirical(&[]).is_err());
    }

    #[test]
    fn empirical_atoms_merge_duplicates() {
        let d = ParameterDistribution::empirical(&[3.0, 1.0, 3.0, 3.0]).unwrap();
        let (p, w) = d.atoms().unwrap();
        assert_eq!(p, vec![1.0, 3.0]);
        assert_eq!(w, vec![0.25, 0.75]);
        let d = ParameterDistribution::empirical(&[0.7; 9]).unwrap();
        assert_eq!(d.atoms().unwrap().1, vec![1.0]);
    }

    #[test]
    fn expectation_of_abs_for_uniform() {
        // E|U - 0.5| for U ~ Uniform(0,1) is 1/4
        let d = ParameterDistribution::uniform(0.0, 1.0).unwrap();
        let e = d.expectation(|x| (x - 0.5).abs(), &[0.5], 16);
        assert!((e - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic_and_prefix_nested() {
        let d = ParameterDistribution::gaussian(0.0, 4.0).unwrap();
        let a = d.sample(100, 9);
        let b = d.sample(1000, 9);
        assert_eq!(a, d.sample(100, 9));
        assert_eq!(&b[..100], &a[..]);
        assert_ne!(a, d.sample(100, 10));
    }
}
