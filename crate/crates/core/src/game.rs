//! Game model: utilities, best responses and the leave-one-out mean.

use std::fmt;
use std::sync::Arc;

use crate::distribution::ParameterDistribution;
use crate::error::{ensure_finite, MfgError, Result};
use crate::maximize;

/// Closed-form (unclamped) best response `(z, alpha) -> x`.
pub type BestResponseFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Utility `(x, z, alpha) -> u`.
pub type UtilityFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Parametrized utility family `u(x, z, alpha)`.
#[derive(Clone)]
pub enum UtilityFamily {
    /// `u = -(x - sqrt(z^2 + alpha^2))^2 - 2x`, best response
    /// `clamp(sqrt(z^2 + alpha^2) - 1, a, b)`.
    HypotTracking,
    /// Best response `clamp(slope_z z + slope_alpha alpha + offset, a, b)`,
    /// realized by the utility `-(x - slope_z z - slope_alpha alpha - offset)^2`.
    LinearBr {
        slope_z: f64,
        slope_alpha: f64,
        offset: f64,
    },
    /// User-supplied closed-form best response, clamped to the action
    /// interval. Its utility is taken as `-(x - br(z, alpha))^2`.
    CustomAnalyticBr { name: String, br: BestResponseFn },
    /// User-supplied utility maximized numerically.
    CustomNumericUtility { name: String, utility: UtilityFn },
}

impl fmt::Debug for UtilityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::HypotTracking => f.write_str("HypotTracking"),
            Self::LinearBr {
                slope_z,
                slope_alpha,
                offset,
            } => f
                .debug_struct("LinearBr")
                .field("slope_z", slope_z)
                .field("slope_alpha", slope_alpha)
                .field("offset", offset)
                .finish(),
            Self::CustomAnalyticBr { name, .. } => write!(f, "CustomAnalyticBr({name})"),
            Self::CustomNumericUtility { name, .. } => write!(f, "CustomNumericUtility({name})"),
        }
    }
}

impl UtilityFamily {
    pub fn linear(slope_z: f64, slope_alpha: f64, offset: f64) -> Result<Self> {
        for (name, v) in [("slope_z", slope_z), ("slope_alpha", slope_alpha), ("offset", offset)] {
            ensure_finite(name, v)?;
        }
        if slope_z.abs() >= 1.0 {
            return Err(MfgError::Domain(format!(
                "linear best response needs |slope_z| < 1, got {slope_z}"
            )));
        }
        Ok(Self::LinearBr {
            slope_z,
            slope_alpha,
            offset,
        })
    }

    /// Constant best response `c` (a linear family with zero slopes).
    pub fn constant(c: f64) -> Result<Self> {
        Self::linear(0.0, 0.0, c)
    }

    pub fn analytic<F>(name: impl Into<String>, br: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::CustomAnalyticBr {
            name: name.into(),
            br: Arc::new(br),
        }
    }

    pub fn numeric<F>(name: impl Into<String>, utility: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::CustomNumericUtility {
            name: name.into(),
            utility: Arc::new(utility),
        }
    }

    /// Numerically maximized `-(x - slope_z z - slope_alpha alpha - offset)^2`.
    /// Unlike [`UtilityFamily::linear`] any finite slope is accepted, which
    /// allows games whose best response is not a contraction in `z`.
    pub fn quadratic_tracking(slope_z: f64, slope_alpha: f64, offset: f64) -> Self {
        Self::numeric(
            format!("quadratic_tracking({slope_z}, {slope_alpha}, {offset})"),
            move |x, z, alpha| -(x - slope_z * z - slope_alpha * alpha - offset).powi(2),
        )
    }

    /// `u(x, z, alpha)`.
    pub fn utility(&self, x: f64, z: f64, alpha: f64) -> Result<f64> {
        ensure_finite("x", x)?;
        ensure_finite("z", z)?;
        ensure_finite("alpha", alpha)?;
        let u = match self {
            Self::HypotTracking => -(x - z.hypot(alpha)).powi(2) - 2.0 * x,
            Self::LinearBr {
                slope_z,
                slope_alpha,
                offset,
            } => -(x - slope_z * z - slope_alpha * alpha - offset).powi(2),
            Self::CustomAnalyticBr { br, .. } => -(x - br(z, alpha)).powi(2),
            Self::CustomNumericUtility { utility, .. } => utility(x, z, alpha),
        };
        Ok(u)
    }
}

/// Where the agent parameters come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Population {
    Params(Vec<f64>),
    Distribution(ParameterDistribution),
}

/// A static mean-field game: a utility family, a common action interval
/// `[action_lo, action_hi]` and the agent parameters.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub utility: UtilityFamily,
    pub action_lo: f64,
    pub action_hi: f64,
    pub population: Population,
}

impl GameSpec {
    pub fn new(
        utility: UtilityFamily,
        action_lo: f64,
        action_hi: f64,
        population: Population,
    ) -> Result<Self> {
        ensure_finite("action_lo", action_lo)?;
        ensure_finite("action_hi", action_hi)?;
        if action_lo >= action_hi {
            return Err(MfgError::Domain(format!(
                "action interval must satisfy lo < hi, got [{action_lo}, {action_hi}]"
            )));
        }
        if let Population::Params(params) = &population {
            validate_params(params)?;
        }
        Ok(Self {
            utility,
            action_lo,
            action_hi,
            population,
        })
    }

    /// The reference game: `HypotTracking` on `[0.5, 20]` with
    /// `alpha ~ N(0, 4)`.
    pub fn hypot_example() -> Self {
        Self::new(
            UtilityFamily::HypotTracking,
            0.5,
            20.0,
            Population::Distribution(
                ParameterDistribution::gaussian(0.0, 4.0).expect("valid gaussian"),
            ),
        )
        .expect("valid reference game")
    }

    /// Same utility and action interval with an explicit parameter list.
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        validate_params(&params)?;
        Ok(Self {
            population: Population::Params(params),
            ..self.clone()
        })
    }

    pub fn with_distribution(&self, dist: ParameterDistribution) -> Self {
        Self {
            population: Population::Distribution(dist),
            ..self.clone()
        }
    }

    pub fn params(&self) -> Option<&[f64]> {
        match &self.population {
            Population::Params(p) => Some(p),
            Population::Distribution(_) => None,
        }
    }

    pub fn distribution(&self) -> Option<&ParameterDistribution> {
        match &self.population {
            Population::Distribution(d) => Some(d),
            Population::Params(_) => None,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.action_lo + self.action_hi)
    }

    /// `u(x, z, alpha)` for an action inside the interval.
    pub fn evaluate_utility(&self, x: f64, z: f64, alpha: f64) -> Result<f64> {
        if !(self.action_lo..=self.action_hi).contains(&x) {
            return Err(MfgError::Domain(format!(
                "action {x} outside [{}, {}]",
                self.action_lo, self.action_hi
            )));
        }
        self.utility.utility(x, z, alpha)
    }

    /// Parameter values where `Br(z, .)` may fail to be smooth because it
    /// starts or stops being clamped. Empty for custom families, whose kinks
    /// are unknown.
    pub fn best_response_kinks(&self, z: f64) -> Vec<f64> {
        let bounds = [self.action_lo, self.action_hi];
        match &self.utility {
            UtilityFamily::HypotTracking => bounds
                .iter()
                .map(|c| (c + 1.0).powi(2) - z * z)
                .filter(|&r2| r2 > 0.0)
                .flat_map(|r2| [-r2.sqrt(), r2.sqrt()])
                .collect(),
            UtilityFamily::LinearBr {
                slope_z,
                slope_alpha,
                offset,
            } if *slope_alpha != 0.0 => bounds
                .iter()
                .map(|c| (c - slope_z * z - offset) / slope_alpha)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Maximizer of `u(., z, alpha)` over the action interval. `z` may be any
    /// finite real.
    pub fn best_response(&self, z: f64, alpha: f64) -> Result<f64> {
        ensure_finite("z", z)?;
        ensure_finite("alpha", alpha)?;
        let (lo, hi) = (self.action_lo, self.action_hi);
        match &self.utility {
            UtilityFamily::HypotTracking => Ok((z.hypot(alpha) - 1.0).clamp(lo, hi)),
            UtilityFamily::LinearBr {
                slope_z,
                slope_alpha,
                offset,
            } => Ok((slope_z * z + slope_alpha * alpha + offset).clamp(lo, hi)),
            UtilityFamily::CustomAnalyticBr { name, br } => {
                let x = br(z, alpha);
                if x.is_finite() {
                    Ok(x.clamp(lo, hi))
                } else {
                    Err(MfgError::Numeric(format!(
                        "best response `{name}` returned {x} at z={z}, alpha={alpha}"
                    )))
                }
            }
            UtilityFamily::CustomNumericUtility { utility, .. } => {
                maximize::grid_golden_argmax(|x| utility(x, z, alpha), lo, hi, z, alpha)
            }
        }
    }
}

fn validate_params(params: &[f64]) -> Result<()> {
    if params.is_empty() {
        return Err(MfgError::Size("parameter list is empty".into()));
    }
    if let Some(bad) = params.iter().position(|v| !v.is_finite()) {
        return Err(MfgError::Domain(format!(
            "parameter {bad} is not finite ({})",
            params[bad]
        )));
    }
    Ok(())
}

/// Average of all actions except `actions[i]` (`i` is zero-based).
pub fn mean_excluding(actions: &[f64], i: usize) -> Result<f64> {
    let n = actions.len();
    if n < 2 {
        return Err(MfgError::Size(format!("need at least 2 agents, got {n}")));
    }
    if i >= n {
        return Err(MfgError::Size(format!("agent index {i} out of range for {n} agents")));
    }
    let total: f64 = actions.iter().sum();
    Ok((total - actions[i]) / (n - 1) as f64)
}

/// All leave-one-out means at once, sharing one summation.
pub(crate) fn means_excluding(actions: &[f64]) -> Vec<f64> {
    let total: f64 = actions.iter().sum();
    let denom = (actions.len() - 1) as f64;
    actions.iter().map(|x| (total - x) / denom).collect()
}
