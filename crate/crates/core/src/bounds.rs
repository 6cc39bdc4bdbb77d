//! Error bounds for the AEM approximations and the cost of the quantized
//! scheme. Every bound carries the factor `L / (1 - L_z)`; when `L_z >= 1`
//! the report is inapplicable instead of carrying a meaningless value.

use serde::{Deserialize, Serialize};

use crate::distribution::ParameterDistribution;
use crate::error::{MfgError, Result};
use crate::quantize::Quantizer;

const PIECE_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    /// Quantized law vs. limiting law.
    #[serde(rename = "quantized-dist")]
    QuantizedDistribution,
    /// Empirical law vs. limiting law.
    #[serde(rename = "empirical")]
    Empirical,
    /// Equilibrium means vs. empirical AEM, uniformly over agents.
    #[serde(rename = "uniform-finite-n")]
    UniformFiniteN,
    /// Quantized parameters vs. empirical law.
    #[serde(rename = "quantized-alpha")]
    QuantizedParams,
}

impl BoundKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::QuantizedDistribution => "quantized-dist",
            Self::Empirical => "empirical",
            Self::UniformFiniteN => "uniform-finite-n",
            Self::QuantizedParams => "quantized-alpha",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub l: f64,
    pub l_z: f64,
    /// Kind-specific term the factor multiplies (an expected distance, or
    /// the `n`-dependent bracket for the uniform bound).
    pub expectation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// `None` when `L_z >= 1`.
    pub value: Option<f64>,
    pub inputs: BoundInputs,
    pub satisfied: Option<bool>,
}

impl BoundReport {
    fn new(kind: BoundKind, factor_numerator: f64, l_z: f64, l: f64, expectation: f64) -> Self {
        let value = (l_z < 1.0).then(|| factor_numerator / (1.0 - l_z) * expectation);
        Self {
            kind,
            value,
            inputs: BoundInputs { l, l_z, expectation },
            satisfied: None,
        }
    }

    pub fn is_applicable(&self) -> bool {
        self.value.is_some()
    }

    /// Records whether `actual_error` respects the bound. `slack` absorbs
    /// the tolerance of the solvers that produced `actual_error`.
    pub fn check(mut self, actual_error: f64, slack: f64) -> Self {
        self.satisfied = self.value.map(|v| actual_error <= v + slack);
        self
    }
}

fn check_constants(l: f64, l_z: f64) -> Result<()> {
    if !(l >= 0.0) || !l.is_finite() || !(l_z >= 0.0) || !l_z.is_finite() {
        return Err(MfgError::Domain(format!(
            "Lipschitz constants must be finite and nonnegative, got L={l}, L_z={l_z}"
        )));
    }
    Ok(())
}

/// `L/(1-L_z) E|nu - Q(nu)|`, the expectation integrated cell by cell.
pub fn prop1_bound(l: f64, l_z: f64, q: &Quantizer, dist: &ParameterDistribution) -> Result<BoundReport> {
    check_constants(l, l_z)?;
    let mut kinks = q.boundaries().to_vec();
    kinks.extend_from_slice(q.representatives());
    let reps = q.representatives();
    let e = dist.expectation(|v| (v - reps[q.cell_of(v)]).abs(), &kinks, PIECE_NODES);
    Ok(BoundReport::new(BoundKind::QuantizedDistribution, l, l_z, l, e))
}

/// `L/(1-L_z) E|nu - nu_n|` with `nu ~ P` independent of `nu_n`, which is
/// uniform over `params`: the average over `i` of `E|nu - alpha_i|`.
pub fn prop2_bound(
    l: f64,
    l_z: f64,
    dist: &ParameterDistribution,
    params: &[f64],
) -> Result<BoundReport> {
    check_constants(l, l_z)?;
    if params.is_empty() {
        return Err(MfgError::Size("empirical bound needs parameters".into()));
    }
    let e = params
        .iter()
        .map(|&a| dist.expectation(|v| (v - a).abs(), &[a], 2 * PIECE_NODES))
        .sum::<f64>()
        / params.len() as f64;
    Ok(BoundReport::new(BoundKind::Empirical, l, l_z, l, e))
}

/// `2 max(|a|,|b|)/(1-L_z) (L_z/(n-1) + 1/n)`; depends on neither `L` nor
/// the parameters.
pub fn prop3_explicit_bound(a: f64, b: f64, l_z: f64, n: usize) -> Result<BoundReport> {
    check_constants(0.0, l_z)?;
    if n < 2 {
        return Err(MfgError::Size(format!("uniform bound needs n >= 2, got {n}")));
    }
    let bracket = l_z / (n - 1) as f64 + 1.0 / n as f64;
    let scale = 2.0 * a.abs().max(b.abs());
    Ok(BoundReport::new(BoundKind::UniformFiniteN, scale, l_z, 0.0, bracket))
}

/// `L/(1-L_z) (1/n) sum_i |alpha_i - Q(alpha_i)|`.
pub fn prop4_bound(l: f64, l_z: f64, q: &Quantizer, params: &[f64]) -> Result<BoundReport> {
    check_constants(l, l_z)?;
    if params.is_empty() {
        return Err(MfgError::Size("quantized bound needs parameters".into()));
    }
    let reps = q.representatives();
    let e = params.iter().map(|&a| (a - reps[q.cell_of(a)]).abs()).sum::<f64>() / params.len() as f64;
    Ok(BoundReport::new(BoundKind::QuantizedParams, l, l_z, l, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommunicationCost {
    /// Bits each agent sends: `log2 k`.
    pub per_agent_bits: f64,
    /// Bits the processing center stores: `k log2 k + k log2 n`.
    pub center_storage_bits: f64,
    /// Reals stored by the unquantized empirical method.
    pub baseline_reals: usize,
}

pub fn communication_cost(k: usize, n: usize) -> Result<CommunicationCost> {
    if k == 0 || n == 0 {
        return Err(MfgError::Size(format!("need k >= 1 and n >= 1, got k={k}, n={n}")));
    }
    let (kf, nf) = (k as f64, n as f64);
    Ok(CommunicationCost {
        per_agent_bits: kf.log2(),
        center_storage_bits: kf * kf.log2() + kf * nf.log2(),
        baseline_reals: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn prop1_uniform_midpoint_quantizer() {
        // E|U - Q(U)| = width/4 for a midpoint quantizer of Uniform(0,1); checked by
        // direct numerical integration of |u - Q(u)| on a fine trapezoid grid
        let u = ParameterDistribution::uniform(0.0, 1.0).unwrap();
        let q = Quantizer::uniform(0.0, 1.0, 2).unwrap();
        let m = 200_000;
        let trap: f64 = (0..m)
            .map(|i| {
                let x = (i as f64 + 0.5) / m as f64;
                (x - if x <= 0.5 { 0.25 } else { 0.75 }).abs()
            })
            .sum::<f64>()
            / m as f64;
        assert!((trap - 0.125).abs() < 1e-9);
        let r = prop1_bound(1.0, 0.5, &q, &u).unwrap();
        assert!((r.value.unwrap() - 0.25).abs() < 1e-14);
        for k in [1, 3, 8, 50] {
            let r = prop1_bound(1.0, 0.5, &Quantizer::uniform(0.0, 1.0, k).unwrap(), &u).unwrap();
            assert!((r.value.unwrap() - 2.0 / (4.0 * k as f64)).abs() < 1e-14);
        }
    }

    #[test]
    fn prop1_decreases_under_refinement() {
        let g = ParameterDistribution::gaussian(0.0, 4.0).unwrap();
        let mut last = f64::INFINITY;
        for m in 1..=10 {
            let q = Quantizer::uniform(-16.0, 16.0, 1 << m).unwrap();
            let v = prop1_bound(1.0, 0.5, &q, &g).unwrap().value.unwrap();
            assert!(v <= last, "k={} value={v} last={last}", 1 << m);
            last = v;
        }
        assert!(last < 0.02);
    }

    #[test]
    fn prop1_point_mass_at_representative_is_zero() {
        let q = Quantizer::uniform(-4.0, 4.0, 4).unwrap();
        let d = ParameterDistribution::point_mass(1.0).unwrap();
        assert_eq!(prop1_bound(3.0, 0.2, &q, &d).unwrap().value, Some(0.0));
    }

    #[test]
    fn prop2_examples() {
        let d = ParameterDistribution::point_mass(0.7).unwrap();
        assert_eq!(prop2_bound(1.0, 0.5, &d, &[0.7, 0.7]).unwrap().value, Some(0.0));
        let u = ParameterDistribution::uniform(0.0, 1.0).unwrap();
        // integral of |u - 0.5| on [0,1]
        let oracle = quadrature::integrate(|x| (x - 0.5).abs(), 0.0, 0.5, 8)
            + quadrature::integrate(|x| (x - 0.5).abs(), 0.5, 1.0, 8);
        let r = prop2_bound(1.0, 0.0, &u, &[0.5]).unwrap();
        assert!((r.value.unwrap() - oracle).abs() < 1e-15 && (oracle - 0.25).abs() < 1e-15);
    }

    #[test]
    fn prop2_gaussian_population_matches_mean_absolute_difference() {
        let d = ParameterDistribution::gaussian(0.0, 4.0).unwrap();
        let params = d.sample(20_000, 17);
        let r = prop2_bound(1.0, 0.5, &d, &params).unwrap();
        // Monte Carlo E|nu - nu'| for independent nu, nu' ~ N(0, 4)
        let normal: Normal<f64> = Normal::new(0.0, 2.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let m = 1_000_000;
        let mc: f64 = (0..m)
            .map(|_| (normal.sample(&mut rng) - normal.sample(&mut rng)).abs())
            .sum::<f64>()
            / m as f64;
        let analytic = 2.0 * 2.0 / std::f64::consts::PI.sqrt();
        assert!((mc - analytic).abs() < 5e-3);
        assert!((r.inputs.expectation - mc).abs() < 0.03, "{} vs {mc}", r.inputs.expectation);
        assert!((r.value.unwrap() - 2.0 * r.inputs.expectation).abs() < 1e-15);
    }

    #[test]
    fn prop3_examples() {
        let r = prop3_explicit_bound(0.5, 20.0, 0.9, 100).unwrap();
        let want = 400.0 * (0.9 / 99.0 + 0.01);
        assert!((r.value.unwrap() - want).abs() <= 1e-12 * want);
        let r = prop3_explicit_bound(-3.0, 1.0, 0.0, 10).unwrap();
        assert!((r.value.unwrap() - 0.6).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for n in [2, 4, 8, 16, 1024, 1 << 20] {
            let v = prop3_explicit_bound(0.5, 20.0, 0.3, n).unwrap().value.unwrap();
            assert!(v <= last);
            last = v;
        }
        assert!(last < 1e-4);
        assert!(prop3_explicit_bound(0.5, 20.0, 0.3, 1).is_err());
    }

    #[test]
    fn prop4_examples() {
        let q = Quantizer::uniform(-4.0, 4.0, 4).unwrap();
        assert_eq!(prop4_bound(1.0, 0.5, &q, &[-3.0, -1.0, 1.0, 3.0]).unwrap().value, Some(0.0));
        let r = prop4_bound(1.0, 0.5, &q, &[-2.5, 0.5]).unwrap();
        assert_eq!(r.value, Some(1.0));
        assert!(prop4_bound(1.0, 0.5, &q, &[]).is_err());
    }

    #[test]
    fn inapplicable_when_not_contractive() {
        let q = Quantizer::uniform(-4.0, 4.0, 4).unwrap();
        let r = prop4_bound(1.0, 1.0, &q, &[0.5]).unwrap();
        assert!(!r.is_applicable());
        assert_eq!(r.clone().check(0.0, 0.0).satisfied, None);
        assert!(!prop3_explicit_bound(0.5, 20.0, 1.2, 10).unwrap().is_applicable());
        assert!(prop4_bound(-1.0, 0.5, &q, &[0.5]).is_err());
    }

    #[test]
    fn bounds_scale_linearly() {
        let q = Quantizer::uniform(-4.0, 4.0, 8).unwrap();
        let d = ParameterDistribution::gaussian(0.0, 4.0).unwrap();
        let params = d.sample(100, 4);
        let p1 = |l, lz| prop1_bound(l, lz, &q, &d).unwrap().value.unwrap();
        let p2 = |l, lz| prop2_bound(l, lz, &d, &params).unwrap().value.unwrap();
        let p4 = |l, lz| prop4_bound(l, lz, &q, &params).unwrap().value.unwrap();
        for f in [&p1 as &dyn Fn(f64, f64) -> f64, &p2, &p4] {
            let base = f(1.0, 0.5);
            assert!((f(3.0, 0.5) - 3.0 * base).abs() <= 1e-12 * base);
            // 1/(1 - 0.75) = 2 / (1 - 0.5)
            assert!((f(1.0, 0.75) - 2.0 * base).abs() <= 1e-12 * base);
        }
    }

    #[test]
    fn communication_cost_examples() {
        let c = communication_cost(16, 1024).unwrap();
        assert_eq!((c.per_agent_bits, c.center_storage_bits, c.baseline_reals), (4.0, 224.0, 1024));
        assert_eq!(communication_cost(1, 50).unwrap().per_agent_bits, 0.0);
        let c = communication_cost(2, 2).unwrap();
        assert_eq!((c.per_agent_bits, c.center_storage_bits), (1.0, 4.0));
        assert!(communication_cost(0, 2).is_err());
    }
}
