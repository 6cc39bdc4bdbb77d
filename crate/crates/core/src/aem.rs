//! Asymptotic equilibrium mean: the fixed point of `z = E[Br(z, nu)]`.
//!
//! Every approximation method differs only in the measure the expectation is
//! taken under. Discrete measures are summed exactly; continuous laws are
//! integrated piecewise for each `z`, split where the best response becomes
//! clamped, since a single Gauss-Legendre rule across such a kink loses
//! several digits.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::distribution::{group_counts, ParameterDistribution};
use crate::error::{ensure_finite, MfgError, Result};
use crate::game::GameSpec;
use crate::quadrature;
use crate::quantize::{cell_probabilities, QuantizedHistogram, Quantizer};

pub const DEFAULT_NODES: usize = 256;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// The measure under which `E[Br(z, .)]` is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpectationEvaluator {
    /// Gauss-Legendre quadrature of a continuous law over its (truncated)
    /// support, `nodes` points per smooth piece; laws with atoms are summed
    /// exactly.
    Quadrature {
        dist: ParameterDistribution,
        nodes: usize,
    },
    /// Cell representatives weighted by the cell probabilities of `dist`.
    QuantizedDistribution {
        quantizer: Quantizer,
        dist: ParameterDistribution,
    },
    /// Empirical law of the given parameters.
    Empirical(Vec<f64>),
    /// Representatives weighted by histogram counts.
    QuantizedParams(QuantizedHistogram),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AemMethod {
    Quadrature,
    QuantizedDist,
    Empirical,
    QuantizedAlpha,
}

impl ExpectationEvaluator {
    pub fn quadrature(dist: ParameterDistribution) -> Self {
        Self::Quadrature {
            dist,
            nodes: DEFAULT_NODES,
        }
    }

    pub fn method(&self) -> AemMethod {
        match self {
            Self::Quadrature { .. } => AemMethod::Quadrature,
            Self::QuantizedDistribution { .. } => AemMethod::QuantizedDist,
            Self::Empirical(_) => AemMethod::Empirical,
            Self::QuantizedParams(_) => AemMethod::QuantizedAlpha,
        }
    }

    fn prepare(&self) -> Result<Prepared> {
        match self {
            Self::Quadrature { dist, nodes } if dist.atoms().is_none() => {
                if *nodes == 0 {
                    return Err(MfgError::Size("quadrature needs at least one node".into()));
                }
                Ok(Prepared::Continuous {
                    dist: dist.clone(),
                    nodes: *nodes,
                })
            }
            _ => Ok(Prepared::Fixed(self.measure()?)),
        }
    }

    /// Resolves the evaluator to a weighted point set. For a continuous law
    /// this is a single Gauss-Legendre rule over the support, which ignores
    /// kinks of the best response; the solvers integrate piecewise instead.
    pub fn measure(&self) -> Result<DiscreteMeasure> {
        match self {
            Self::Quadrature { dist, nodes } => quadrature_measure(dist, *nodes),
            Self::QuantizedDistribution { quantizer, dist } => DiscreteMeasure::new(
                quantizer.representatives().to_vec(),
                cell_probabilities(quantizer, dist),
            ),
            Self::Empirical(params) => {
                if params.is_empty() {
                    return Err(MfgError::Size("empirical evaluator needs parameters".into()));
                }
                let mut sorted = params.clone();
                sorted.sort_by(f64::total_cmp);
                let (points, weights) = group_counts(&sorted);
                DiscreteMeasure::new(points, weights)
            }
            Self::QuantizedParams(hist) => {
                if hist.n == 0 {
                    return Err(MfgError::Size("histogram is empty".into()));
                }
                let n = hist.n as f64;
                let reps = hist.quantizer.representatives();
                let (points, weights) = hist
                    .counts
                    .iter()
                    .zip(reps)
                    .filter(|(&c, _)| c > 0)
                    .map(|(&c, &r)| (r, c as f64 / n))
                    .unzip();
                DiscreteMeasure::new(points, weights)
            }
        }
    }
}

fn quadrature_measure(dist: &ParameterDistribution, nodes: usize) -> Result<DiscreteMeasure> {
    if let Some((points, weights)) = dist.atoms() {
        return DiscreteMeasure::new(points, weights);
    }
    if nodes == 0 {
        return Err(MfgError::Size("quadrature needs at least one node".into()));
    }
    let (lo, hi) = dist.support();
    let (points, base) = quadrature::gauss_legendre_on(nodes, lo, hi);
    let raw: Vec<f64> = points
        .iter()
        .zip(&base)
        .map(|(&x, &w)| w * dist.pdf(x).unwrap_or(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(MfgError::Numeric(format!(
            "quadrature weights degenerate on [{lo}, {hi}] (total mass {total})"
        )));
    }
    DiscreteMeasure::new(points, raw.into_iter().map(|w| w / total).collect())
}

/// Finite probability measure: nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(MfgError::Size(format!(
                "measure needs matching non-empty points/weights, got {} and {}",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(MfgError::Numeric("measure has negative or non-finite weights".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(MfgError::Numeric(format!("measure weights sum to {total}, not 1")));
        }
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_m w_m Br(z, p_m)`.
    pub fn expect_best_response(&self, z: f64, game: &GameSpec) -> Result<f64> {
        let mut acc = 0.0;
        for (&p, &w) in self.points.iter().zip(&self.weights) {
            acc += w * game.best_response(z, p)?;
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AemResult {
    pub z_star: f64,
    pub method: AemMethod,
    pub iterations: usize,
    /// `|z_star - F(z_star)|`.
    pub residual: f64,
    pub converged: bool,
    pub error_bound: Option<f64>,
}

enum Prepared {
    Fixed(DiscreteMeasure),
    Continuous { dist: ParameterDistribution, nodes: usize },
}

impl Prepared {
    fn expect_best_response(&self, z: f64, game: &GameSpec) -> Result<f64> {
        match self {
            Self::Fixed(m) => m.expect_best_response(z, game),
            Self::Continuous { dist, nodes } => {
                let failure = RefCell::new(None);
                let value = dist.expectation(
                    |a| match game.best_response(z, a) {
                        Ok(x) => x,
                        Err(e) => {
                            failure.borrow_mut().get_or_insert(e);
                            f64::NAN
                        }
                    },
                    &game.best_response_kinks(z),
                    *nodes,
                );
                match failure.into_inner() {
                    Some(e) => Err(e),
                    None if value.is_finite() => Ok(value),
                    None => {
                        let (lo, hi) = dist.support();
                        Err(MfgError::Numeric(format!(
                            "quadrature degenerate on [{lo}, {hi}] (expectation {value})"
                        )))
                    }
                }
            }
        }
    }
}

/// `F(z) = E[Br(z, nu)]` under the evaluator's measure.
pub fn evaluate_f(z: f64, ev: &ExpectationEvaluator, game: &GameSpec) -> Result<f64> {
    ensure_finite("z", z)?;
    ev.prepare()?.expect_best_response(z, game)
}

/// Fixed-point iteration `z <- F(z)` from the interval midpoint.
pub fn solve_aem(ev: &ExpectationEvaluator, game: &GameSpec, tol: f64, max_iter: usize) -> Result<AemResult> {
    solve_aem_from(ev, game, game.midpoint(), tol, max_iter)
}

pub fn solve_aem_from(
    ev: &ExpectationEvaluator,
    game: &GameSpec,
    z0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<AemResult> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(MfgError::Domain(format!("tol must be positive, got {tol}")));
    }
    ensure_finite("z0", z0)?;
    let measure = ev.prepare()?;
    let mut z = z0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let next = measure.expect_best_response(z, game)?;
        iterations += 1;
        let step = (next - z).abs();
        z = next;
        if step <= tol {
            converged = true;
            break;
        }
    }
    let residual = (z - measure.expect_best_response(z, game)?).abs();
    Ok(AemResult {
        z_star: z,
        method: ev.method(),
        iterations,
        residual,
        converged,
        error_bound: None,
    })
}

/// Asymptotic Nash equilibrium strategy `Br(z_aem, alpha)`.
pub fn ane_strategy(z_aem: f64, alpha: f64, game: &GameSpec) -> Result<f64> {
    if !(game.action_lo..=game.action_hi).contains(&z_aem) {
        return Err(MfgError::Domain(format!(
            "equilibrium mean {z_aem} outside [{}, {}]",
            game.action_lo, game.action_hi
        )));
    }
    game.best_response(z_aem, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Population, UtilityFamily};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn linear() -> GameSpec {
        GameSpec::new(
            UtilityFamily::linear(0.4, 0.1, 0.0).unwrap(),
            -10.0,
            10.0,
            Population::Params(vec![0.0]),
        )
        .unwrap()
    }

    fn gaussian() -> ParameterDistribution {
        ParameterDistribution::gaussian(0.0, 4.0).unwrap()
    }

    #[test]
    fn constant_best_response_under_every_evaluator() {
        let g = GameSpec::new(UtilityFamily::constant(2.5).unwrap(), 0.0, 5.0, Population::Params(vec![0.0]))
            .unwrap();
        let q = Quantizer::uniform(-4.0, 4.0, 4).unwrap();
        let evs = [
            ExpectationEvaluator::quadrature(gaussian()),
            ExpectationEvaluator::QuantizedDistribution { quantizer: q.clone(), dist: gaussian() },
            ExpectationEvaluator::Empirical(vec![1.0, 2.0]),
            ExpectationEvaluator::QuantizedParams(QuantizedHistogram::build(&q, &[0.1, 3.3])),
        ];
        for ev in &evs {
            assert!((evaluate_f(1.0, ev, &g).unwrap() - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn hypot_quadrature_resolves_clamp_kinks() {
        // Reference fixed point from adaptive quadrature split at the kinks,
        // with the law truncated to +-16 and renormalized.
        let g = GameSpec::hypot_example().with_distribution(gaussian());
        let r = solve_aem(&ExpectationEvaluator::quadrature(gaussian()), &g, 1e-13, 10_000).unwrap();
        assert!((r.z_star - 1.186724282064194).abs() < 1e-9, "{}", r.z_star);
    }

    #[test]
    fn linear_empirical_expectation() {
        let ev = ExpectationEvaluator::Empirical(vec![1.0, 2.0, 3.0]);
        assert!((evaluate_f(1.0, &ev, &linear()).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn linear_fixed_points() {
        let point = ExpectationEvaluator::quadrature(ParameterDistribution::point_mass(3.0).unwrap());
        let r = solve_aem(&point, &linear(), 1e-12, 10_000).unwrap();
        assert!(r.converged && (r.z_star - 0.5).abs() < 1e-11);
        assert_eq!(ane_strategy(0.5, 3.0, &linear()).unwrap(), 0.5);

        let params = vec![1.0, 4.0, -2.0, 7.5];
        let m = params.iter().sum::<f64>() / 4.0;
        let r = solve_aem(&ExpectationEvaluator::Empirical(params), &linear(), 1e-12, 10_000).unwrap();
        assert!((r.z_star - m / 6.0).abs() < 1e-11);
    }

    #[test]
    fn hypot_expectation_matches_monte_carlo() {
        let g = GameSpec::hypot_example();
        let ev = ExpectationEvaluator::quadrature(gaussian());
        let normal: Normal<f64> = Normal::new(0.0, 2.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let samples = 1_000_000;
        for z in [0.5, 1.2, 6.0] {
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..samples {
                let v = g.best_response(z, normal.sample(&mut rng)).unwrap();
                s += v;
                s2 += v * v;
            }
            let mean = s / samples as f64;
            let se = ((s2 / samples as f64 - mean * mean) / samples as f64).sqrt();
            let f = evaluate_f(z, &ev, &g).unwrap();
            assert!((f - mean).abs() <= 3.0 * se, "z={z}: {f} vs {mean} +- {se}");
        }
    }

    #[test]
    fn residual_and_uniqueness() {
        let g = GameSpec::hypot_example();
        let ev = ExpectationEvaluator::quadrature(gaussian());
        let tol = 1e-10;
        let mid = solve_aem(&ev, &g, tol, 10_000).unwrap();
        let lo = solve_aem_from(&ev, &g, 0.5, tol, 10_000).unwrap();
        let hi = solve_aem_from(&ev, &g, 20.0, tol, 10_000).unwrap();
        assert!(mid.converged && mid.residual <= tol);
        assert!((lo.z_star - hi.z_star).abs() <= 10.0 * tol);
        assert!((0.5..=20.0).contains(&mid.z_star));
    }

    #[test]
    fn unconverged_is_flagged() {
        let g = GameSpec::hypot_example();
        let r = solve_aem(&ExpectationEvaluator::quadrature(gaussian()), &g, 1e-14, 2).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn empirical_copies_equal_point_mass_exactly() {
        let g = GameSpec::hypot_example();
        let copies = ExpectationEvaluator::Empirical(vec![1.7; 37]);
        let point = ExpectationEvaluator::quadrature(ParameterDistribution::point_mass(1.7).unwrap());
        let a = solve_aem(&copies, &g, 1e-10, 10_000).unwrap();
        let b = solve_aem(&point, &g, 1e-10, 10_000).unwrap();
        assert_eq!(a.z_star, b.z_star);
    }

    #[test]
    fn degenerate_quadrature_is_an_error() {
        let far = gaussian().with_truncation(200.0, 201.0).unwrap();
        let err = evaluate_f(1.0, &ExpectationEvaluator::quadrature(far), &GameSpec::hypot_example());
        assert!(matches!(err, Err(MfgError::Numeric(_))));
    }

    #[test]
    fn ane_rejects_out_of_range_mean() {
        assert!(ane_strategy(25.0, 1.0, &GameSpec::hypot_example()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn f_is_a_contraction(z1 in 0.5f64..20.0, z2 in 0.5f64..20.0) {
            let g = GameSpec::hypot_example();
            // L_z of Br over alpha in the truncated support: z / hypot(z, alpha) <= 1
            let evs = [
                ExpectationEvaluator::quadrature(gaussian()),
                ExpectationEvaluator::Empirical(gaussian().sample(64, 1)),
            ];
            for ev in &evs {
                let d = (evaluate_f(z1, ev, &g).unwrap() - evaluate_f(z2, ev, &g).unwrap()).abs();
                prop_assert!(d <= (1.0 + 1e-9) * (z1 - z2).abs());
            }
            let l = linear();
            let ev = ExpectationEvaluator::Empirical(vec![1.0, -3.0, 2.0]);
            let d = (evaluate_f(z1, &ev, &l).unwrap() - evaluate_f(z2, &ev, &l).unwrap()).abs();
            prop_assert!(d <= (0.4 + 1e-9) * (z1 - z2).abs());
        }
    }
}
