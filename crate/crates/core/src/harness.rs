//! Seeded n-sweeps comparing the finite-population equilibrium with the AEM
//! and its approximations.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aem::{ane_strategy, solve_aem, AemResult, ExpectationEvaluator};
use crate::bounds::{prop1_bound, prop3_explicit_bound, prop4_bound, BoundReport};
use crate::distribution::ParameterDistribution;
use crate::error::{MfgError, Result};
use crate::game::GameSpec;
use crate::lipschitz::{estimate_lipschitz, estimate_lipschitz_on_params, DEFAULT_GRID, LipschitzEstimates};
use crate::ne::{solve_ne, SolverConfig};
use crate::quantize::{QuantizedHistogram, Quantizer};

pub const CSV_HEADER: &str =
    "n,z_star_1,x_star_1,x_ane_1,z_aem,z_hat_n,z_tilde_n,err_uniform,prop3_bound,wall_time_ms";

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Utility and action interval; its population is ignored.
    pub game: GameSpec,
    pub dist: ParameterDistribution,
    /// Ascending, each at least 2.
    pub n_values: Vec<usize>,
    pub seed: u64,
    /// Cells of the uniform quantizer (over the support of `dist`) used for
    /// the quantized-law AEM; skipped when `None`.
    pub quantized_dist_k: Option<usize>,
    /// Cells of the uniform quantizer used for the quantized-parameter AEM.
    pub quantized_params_k: Option<usize>,
    pub solver: SolverConfig,
    pub aem_tol: f64,
    pub aem_max_iter: usize,
    pub quadrature_nodes: usize,
    /// Points on the z axis for the per-row Lipschitz estimate.
    pub lipschitz_points: usize,
    /// Known constants `L` and `L_z`; each replaces its grid estimate when set.
    pub l: Option<f64>,
    pub l_z: Option<f64>,
}

impl ExperimentSpec {
    pub fn new(game: GameSpec, dist: ParameterDistribution, n_values: Vec<usize>, seed: u64) -> Self {
        Self {
            game,
            dist,
            n_values,
            seed,
            quantized_dist_k: None,
            quantized_params_k: None,
            solver: SolverConfig::default(),
            aem_tol: crate::aem::DEFAULT_TOL,
            aem_max_iter: crate::aem::DEFAULT_MAX_ITER,
            quadrature_nodes: crate::aem::DEFAULT_NODES,
            lipschitz_points: DEFAULT_GRID,
            l: None,
            l_z: None,
        }
    }

    fn with_overrides(&self, mut est: LipschitzEstimates) -> LipschitzEstimates {
        est.l_alpha = self.l.unwrap_or(est.l_alpha);
        est.l_z = self.l_z.unwrap_or(est.l_z);
        est
    }

    fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(MfgError::Size("sweep needs at least one n".into()));
        }
        if self.n_values.iter().any(|&n| n < 2) {
            return Err(MfgError::Size("every n in a sweep must be at least 2".into()));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MfgError::Domain("sweep n values must be strictly ascending".into()));
        }
        Ok(())
    }

    /// Allowance for solver error when comparing a computed gap with a
    /// bound: each side of the gap is a fixed point accurate to about its
    /// stopping tolerance.
    pub fn check_slack(&self) -> f64 {
        2.0 * (self.aem_tol + self.solver.tol) + 1e-12
    }

    fn quantizer(&self, k: usize) -> Result<Quantizer> {
        let (lo, hi) = self.dist.support();
        Quantizer::uniform(lo, hi, k)
    }
}

/// One line of sweep output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub z_star_1: f64,
    pub x_star_1: f64,
    pub x_ane_1: f64,
    pub z_aem: f64,
    pub z_hat_n: f64,
    pub z_tilde_n: Option<f64>,
    /// `max_i |z*_{i,n} - z_hat_n|`.
    pub err_uniform: f64,
    /// `None` when the estimated `L_z` is not below one.
    pub prop3_bound: Option<f64>,
    pub wall_time_ms: f64,
}

/// Diagnostics kept alongside each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowStatus {
    pub n: usize,
    pub ne_converged: bool,
    pub ne_iterations: usize,
    pub empirical_converged: bool,
    pub quantized_converged: Option<bool>,
    pub l_z: f64,
    pub l_alpha: f64,
    pub lipschitz_ok: bool,
    /// `None` when the bound is inapplicable.
    pub prop3_holds: Option<bool>,
    pub prop4: Option<BoundReport>,
}

impl RowStatus {
    pub fn converged(&self) -> bool {
        self.ne_converged && self.empirical_converged && self.quantized_converged.unwrap_or(true)
    }

    pub fn bounds_hold(&self) -> bool {
        self.prop3_holds != Some(false)
            && self.prop4.as_ref().and_then(|b| b.satisfied) != Some(false)
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub status: Vec<RowStatus>,
    pub aem: AemResult,
    /// Quantized-law AEM and its bound against `aem`.
    pub quantized_dist: Option<(AemResult, BoundReport)>,
}

impl SweepReport {
    pub fn all_converged(&self) -> bool {
        self.aem.converged
            && self.quantized_dist.as_ref().is_none_or(|(r, _)| r.converged)
            && self.status.iter().all(RowStatus::converged)
    }

    pub fn all_bounds_hold(&self) -> bool {
        self.quantized_dist.as_ref().is_none_or(|(_, b)| b.satisfied != Some(false))
            && self.status.iter().all(RowStatus::bounds_hold)
    }
}

/// `n` parameters drawn from `dist` with `seed`. Longer requests extend
/// shorter ones, so one seed defines a single growing population.
pub fn sample_population(dist: &ParameterDistribution, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(MfgError::Size("population size must be at least 1".into()));
    }
    Ok(dist.sample(n, seed))
}

pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepReport> {
    spec.validate()?;
    let game = spec.game.with_distribution(spec.dist.clone());
    let n_max = *spec.n_values.last().expect("validated non-empty");
    let population = sample_population(&spec.dist, n_max, spec.seed)?;

    let quad = ExpectationEvaluator::Quadrature {
        dist: spec.dist.clone(),
        nodes: spec.quadrature_nodes,
    };
    let aem = solve_aem(&quad, &game, spec.aem_tol, spec.aem_max_iter)?;

    let quantized_dist = match spec.quantized_dist_k {
        Some(k) => {
            let q = spec.quantizer(k)?;
            let ev = ExpectationEvaluator::QuantizedDistribution {
                quantizer: q.clone(),
                dist: spec.dist.clone(),
            };
            let mut r = solve_aem(&ev, &game, spec.aem_tol, spec.aem_max_iter)?;
            let support = spec.dist.support();
            let est = spec.with_overrides(estimate_lipschitz(
                &game,
                (game.action_lo, game.action_hi),
                support,
                (spec.lipschitz_points, spec.lipschitz_points),
            )?);
            let bound = prop1_bound(est.l_alpha, est.l_z, &q, &spec.dist)?.check((r.z_star - aem.z_star).abs(), spec.check_slack());
            r.error_bound = bound.value;
            Some((r, bound))
        }
        None => None,
    };
    let params_quantizer = spec.quantized_params_k.map(|k| spec.quantizer(k)).transpose()?;

    let results: Vec<(SweepRow, RowStatus)> = spec
        .n_values
        .par_iter()
        .map(|&n| sweep_row(spec, &game, &population[..n], aem.z_star, params_quantizer.as_ref()))
        .collect::<Result<_>>()?;
    let (rows, status) = results.into_iter().unzip();
    Ok(SweepReport {
        rows,
        status,
        aem,
        quantized_dist,
    })
}

fn sweep_row(
    spec: &ExperimentSpec,
    template: &GameSpec,
    params: &[f64],
    z_aem: f64,
    quantizer: Option<&Quantizer>,
) -> Result<(SweepRow, RowStatus)> {
    let start = Instant::now();
    let n = params.len();
    let game = template.with_params(params.to_vec())?;

    let ne = solve_ne(&game, &spec.solver)?;
    let empirical = solve_aem(
        &ExpectationEvaluator::Empirical(params.to_vec()),
        &game,
        spec.aem_tol,
        spec.aem_max_iter,
    )?;
    let z_hat = empirical.z_star;
    let err_uniform = ne.means.iter().map(|z| (z - z_hat).abs()).fold(0.0, f64::max);

    let est = spec.with_overrides(estimate_lipschitz_on_params(
        &game,
        (game.action_lo, game.action_hi),
        params,
        spec.lipschitz_points,
    )?);
    let prop3 = prop3_explicit_bound(game.action_lo, game.action_hi, est.l_z, n)?.check(err_uniform, spec.check_slack());

    let (z_tilde, quantized_converged, prop4) = match quantizer {
        Some(q) => {
            let hist = QuantizedHistogram::build(q, params);
            let r = solve_aem(
                &ExpectationEvaluator::QuantizedParams(hist),
                &game,
                spec.aem_tol,
                spec.aem_max_iter,
            )?;
            let bound = prop4_bound(est.l_alpha, est.l_z, q, params)?.check((r.z_star - z_hat).abs(), spec.check_slack());
            (Some(r.z_star), Some(r.converged), Some(bound))
        }
        None => (None, None, None),
    };

    let row = SweepRow {
        n,
        z_star_1: ne.means[0],
        x_star_1: ne.actions[0],
        x_ane_1: ane_strategy(z_aem, params[0], &game)?,
        z_aem,
        z_hat_n: z_hat,
        z_tilde_n: z_tilde,
        err_uniform,
        prop3_bound: prop3.value,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    let status = RowStatus {
        n,
        ne_converged: ne.converged,
        ne_iterations: ne.iterations,
        empirical_converged: empirical.converged,
        quantized_converged,
        l_z: est.l_z,
        l_alpha: est.l_alpha,
        lipschitz_ok: est.lipschitz_ok,
        prop3_holds: prop3.satisfied,
        prop4,
    };
    Ok((row, status))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn json_float(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format_float(x),
        _ => "null".to_string(),
    }
}

fn csv_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn fields(row: &SweepRow) -> [(&'static str, Option<f64>); 9] {
    [
        ("z_star_1", Some(row.z_star_1)),
        ("x_star_1", Some(row.x_star_1)),
        ("x_ane_1", Some(row.x_ane_1)),
        ("z_aem", Some(row.z_aem)),
        ("z_hat_n", Some(row.z_hat_n)),
        ("z_tilde_n", row.z_tilde_n),
        ("err_uniform", Some(row.err_uniform)),
        ("prop3_bound", row.prop3_bound),
        ("wall_time_ms", Some(row.wall_time_ms)),
    ]
}

/// Renders rows as CSV (with [`CSV_HEADER`]) or as a JSON array of objects
/// with the same keys. Missing optional values are empty cells / `null`.
pub fn render_results(rows: &[SweepRow], format: OutputFormat) -> String {
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for row in rows {
                let _ = write!(out, "{}", row.n);
                for (_, v) in fields(row) {
                    out.push(',');
                    out.push_str(&csv_float(v));
                }
                out.push('\n');
            }
        }
        OutputFormat::Json => {
            out.push_str("[\n");
            for (i, row) in rows.iter().enumerate() {
                let _ = write!(out, "  {{\"n\": {}", row.n);
                for (k, v) in fields(row) {
                    let _ = write!(out, ", \"{k}\": {}", json_float(v));
                }
                out.push('}');
                if i + 1 < rows.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str("]\n");
        }
    }
    out
}

/// Writes rows to `path`. Refuses to create a file for an empty sweep.
pub fn emit_results(rows: &[SweepRow], format: OutputFormat, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(MfgError::Size("no sweep rows to write".into()));
    }
    fs::write(path, render_results(rows, format)).map_err(|source| MfgError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses the JSON written by [`emit_results`].
pub fn parse_results_json(text: &str) -> Result<Vec<SweepRow>> {
    serde_json::from_str(text).map_err(|e| MfgError::Numeric(format!("invalid sweep JSON: {e}")))
}
