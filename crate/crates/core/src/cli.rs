//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or runtime error, 2 a solver did
//! not converge, 3 a sweep violated an applicable error bound.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::aem::{solve_aem, AemResult, ExpectationEvaluator};
use crate::bounds::{
    communication_cost, prop1_bound, prop2_bound, prop3_explicit_bound, prop4_bound, BoundReport,
};
use crate::config::Config;
use crate::error::{MfgError, Result};
use crate::harness::{emit_results, format_float, run_sweep, ExperimentSpec, OutputFormat};
use crate::lipschitz::{estimate_lipschitz, estimate_lipschitz_on_params, DEFAULT_GRID};
use crate::ne::{solve_ne, EquilibriumResult};
use crate::quantize::QuantizedHistogram;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;
pub const EXIT_BOUND_VIOLATION: i32 = 3;

/// Populations larger than this estimate Lipschitz constants on an
/// evenly spaced parameter grid instead of the individual values.
const PER_PARAM_LIPSCHITZ_LIMIT: usize = 4096;

#[derive(Debug, Parser)]
#[command(name = "meanfield", version, about = "Equilibria of large static mean-field games")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Finite-population Nash equilibrium.
    Ne(CommonArgs),
    /// Asymptotic equilibrium mean by one of four methods.
    Aem {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        method: Method,
    },
    /// n-sweep comparing equilibria with the AEM approximations.
    Sweep(CommonArgs),
    /// Error bounds and communication cost.
    Bounds(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.path`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Quadrature,
    QuantizedDist,
    Empirical,
    QuantizedAlpha,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let (common, result) = match &cli.command {
        Command::Ne(c) => (c, load(c).and_then(|cfg| cmd_ne(&cfg, c, out))),
        Command::Aem { common, method } => (common, load(common).and_then(|cfg| cmd_aem(&cfg, common, *method, out))),
        Command::Sweep(c) => (c, load(c).and_then(|cfg| cmd_sweep(&cfg, c, out, err))),
        Command::Bounds(c) => (c, load(c).and_then(|cfg| cmd_bounds(&cfg, c, out))),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", common.config.display());
            EXIT_ERROR
        }
    }
}

fn load(args: &CommonArgs) -> Result<Config> {
    Config::from_path(&args.config)
}

fn output_path(cfg: &Config, args: &CommonArgs) -> Option<PathBuf> {
    args.out.clone().or_else(|| cfg.output_path.clone())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> MfgError + '_ {
    move |source| MfgError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn missing(path: &str, message: &str) -> MfgError {
    MfgError::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn require_params(cfg: &Config) -> Result<&[f64]> {
    cfg.params
        .as_deref()
        .ok_or_else(|| missing("params", "this command needs agent parameters"))
}

/// `(L, L_z)`: configured overrides, else finite-difference estimates over
/// `z` in the action interval and the parameters (or the distribution
/// support when there are no parameters).
fn lipschitz_constants(cfg: &Config, params: Option<&[f64]>) -> Result<(f64, f64)> {
    if let (Some(l), Some(l_z)) = (cfg.bounds.l, cfg.bounds.l_z) {
        return Ok((l, l_z));
    }
    let z_range = (cfg.game.action_lo, cfg.game.action_hi);
    let est = match (params, &cfg.distribution) {
        (Some(p), _) if p.len() <= PER_PARAM_LIPSCHITZ_LIMIT => {
            estimate_lipschitz_on_params(&cfg.game, z_range, p, DEFAULT_GRID)?
        }
        (Some(p), _) => {
            let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo < hi {
                estimate_lipschitz(&cfg.game, z_range, (lo, hi), (DEFAULT_GRID, DEFAULT_GRID))?
            } else {
                estimate_lipschitz_on_params(&cfg.game, z_range, &p[..1], DEFAULT_GRID)?
            }
        }
        (None, Some(d)) => estimate_lipschitz(&cfg.game, z_range, d.support(), (DEFAULT_GRID, DEFAULT_GRID))?,
        (None, None) => return Err(missing("bounds", "set `l` and `l_z` or provide parameters")),
    };
    Ok((cfg.bounds.l.unwrap_or(est.l_alpha), cfg.bounds.l_z.unwrap_or(est.l_z)))
}

#[derive(Serialize)]
struct NeOutput<'a> {
    n: usize,
    params: &'a [f64],
    #[serde(flatten)]
    result: &'a EquilibriumResult,
}

fn cmd_ne(cfg: &Config, args: &CommonArgs, out: &mut dyn Write) -> Result<i32> {
    let params = require_params(cfg)?;
    if params.len() < 2 {
        return Err(missing("params", "a Nash equilibrium needs at least 2 agents"));
    }
    let result = solve_ne(&cfg.game, &cfg.solver)?;
    let est = estimate_lipschitz_on_params(
        &cfg.game,
        (cfg.game.action_lo, cfg.game.action_hi),
        &params[..params.len().min(PER_PARAM_LIPSCHITZ_LIMIT)],
        64,
    )?;
    if !est.lipschitz_ok {
        let _ = writeln!(out, "warning: estimated L_z = {} >= 1; the best-response map may not contract", est.l_z);
    }
    let _ = writeln!(out, "n = {}", params.len());
    let _ = writeln!(out, "iterations = {}", result.iterations);
    let _ = writeln!(out, "residual = {}", format_float(result.residual_inf));
    let _ = writeln!(out, "converged = {}", result.converged);

    if let Some(path) = output_path(cfg, args) {
        let text = match cfg.output_format.unwrap_or(OutputFormat::Json) {
            OutputFormat::Json => {
                let payload = NeOutput {
                    n: params.len(),
                    params,
                    result: &result,
                };
                serde_json::to_string_pretty(&payload).expect("serializable result") + "\n"
            }
            OutputFormat::Csv => {
                let mut s = String::from("agent,alpha,action,mean\n");
                for (i, ((a, x), z)) in params.iter().zip(&result.actions).zip(&result.means).enumerate() {
                    s.push_str(&format!("{i},{},{},{}\n", format_float(*a), format_float(*x), format_float(*z)));
                }
                s
            }
        };
        fs::write(&path, text).map_err(io_err(&path))?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(if result.converged { EXIT_OK } else { EXIT_UNCONVERGED })
}

#[derive(Serialize)]
struct AemOutput<'a> {
    #[serde(flatten)]
    result: &'a AemResult,
    bound: Option<&'a BoundReport>,
}

fn cmd_aem(cfg: &Config, args: &CommonArgs, method: Method, out: &mut dyn Write) -> Result<i32> {
    let need_dist = || {
        cfg.distribution
            .clone()
            .ok_or_else(|| missing("distribution", "this method needs a parameter distribution"))
    };
    let need_quantizer = || {
        cfg.quantizer
            .clone()
            .ok_or_else(|| missing("quantizer", "quantized methods need a [quantizer] section"))
    };
    let (ev, bound) = match method {
        Method::Quadrature => {
            let dist = need_dist()?;
            (
                ExpectationEvaluator::Quadrature {
                    dist,
                    nodes: cfg.quadrature_nodes,
                },
                None,
            )
        }
        Method::QuantizedDist => {
            let q = need_quantizer()?;
            let dist = need_dist()?;
            let (l, l_z) = lipschitz_constants(cfg, None)?;
            let bound = prop1_bound(l, l_z, &q, &dist)?;
            (ExpectationEvaluator::QuantizedDistribution { quantizer: q, dist }, Some(bound))
        }
        Method::Empirical => {
            let params = require_params(cfg)?;
            let bound = match &cfg.distribution {
                Some(d) => {
                    let (l, l_z) = lipschitz_constants(cfg, Some(params))?;
                    Some(prop2_bound(l, l_z, d, params)?)
                }
                None => None,
            };
            (ExpectationEvaluator::Empirical(params.to_vec()), bound)
        }
        Method::QuantizedAlpha => {
            let q = need_quantizer()?;
            let params = require_params(cfg)?;
            let (l, l_z) = lipschitz_constants(cfg, Some(params))?;
            let bound = prop4_bound(l, l_z, &q, params)?;
            (ExpectationEvaluator::QuantizedParams(QuantizedHistogram::build(&q, params)), Some(bound))
        }
    };
    let mut result = solve_aem(&ev, &cfg.game, cfg.solver.tol, cfg.solver.max_iter)?;
    result.error_bound = bound.as_ref().and_then(|b| b.value);

    let _ = writeln!(out, "method = {:?}", result.method);
    let _ = writeln!(out, "z = {}", format_float(result.z_star));
    let _ = writeln!(out, "residual = {}", format_float(result.residual));
    let _ = writeln!(out, "iterations = {}", result.iterations);
    if let Some(b) = &bound {
        let _ = match b.value {
            Some(v) => writeln!(out, "bound ({}) = {}", b.kind.label(), format_float(v)),
            None => writeln!(out, "bound ({}) inapplicable: L_z = {} >= 1", b.kind.label(), b.inputs.l_z),
        };
    }

    if let Some(path) = output_path(cfg, args) {
        let line = serde_json::to_string(&AemOutput {
            result: &result,
            bound: bound.as_ref(),
        })
        .expect("serializable result");
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        writeln!(file, "{line}").map_err(io_err(&path))?;
    }
    Ok(if result.converged { EXIT_OK } else { EXIT_UNCONVERGED })
}

fn cmd_sweep(cfg: &Config, args: &CommonArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| missing("sweep", "missing required section"))?;
    let dist = cfg
        .distribution
        .clone()
        .ok_or_else(|| missing("distribution", "a sweep samples its populations from a distribution"))?;
    let path = output_path(cfg, args).ok_or_else(|| missing("output.path", "a sweep needs an output file"))?;

    let mut spec = ExperimentSpec::new(cfg.game.clone(), dist, sweep.n_values.clone(), sweep.seed);
    spec.quantized_params_k = sweep.quantized_params_k;
    spec.quantized_dist_k = sweep.quantized_dist_k;
    spec.solver = cfg.solver.clone();
    spec.aem_tol = cfg.solver.tol;
    spec.aem_max_iter = cfg.solver.max_iter;
    spec.quadrature_nodes = cfg.quadrature_nodes;
    spec.l = cfg.bounds.l;
    spec.l_z = cfg.bounds.l_z;
    let report = run_sweep(&spec)?;

    let _ = writeln!(out, "z_aem = {}", format_float(report.aem.z_star));
    let mut inapplicable = false;
    for (row, status) in report.rows.iter().zip(&report.status) {
        let bound = match row.prop3_bound {
            Some(b) => format_float(b),
            None => {
                inapplicable = true;
                "inapplicable".to_string()
            }
        };
        let flag = match (status.converged(), status.bounds_hold()) {
            (false, _) => " UNCONVERGED",
            (true, false) => " BOUND VIOLATED",
            _ => "",
        };
        let _ = writeln!(
            out,
            "n = {:>7}  |z*_1 - z_aem| = {}  err_uniform = {}  bound = {}  L_z = {:.6}{flag}",
            row.n,
            format_float((row.z_star_1 - row.z_aem).abs()),
            format_float(row.err_uniform),
            bound,
            status.l_z,
        );
    }
    if let Some((r, b)) = &report.quantized_dist {
        let _ = writeln!(
            out,
            "quantized-dist: z = {}  |z - z_aem| = {}  bound = {}",
            format_float(r.z_star),
            format_float((r.z_star - report.aem.z_star).abs()),
            b.value.map(format_float).unwrap_or_else(|| "inapplicable".into()),
        );
    }
    if inapplicable {
        let _ = writeln!(err, "warning: estimated L_z >= 1 on some rows; those bounds are inapplicable");
    }
    let trend = report.rows.first().zip(report.rows.last()).map(|(a, b)| {
        ((a.z_star_1 - a.z_aem).abs(), (b.z_star_1 - b.z_aem).abs())
    });
    if let Some((first, last)) = trend {
        let _ = writeln!(
            out,
            "trend: |z*_1 - z_aem| {} at n={} -> {} at n={}",
            format_float(first),
            report.rows[0].n,
            format_float(last),
            report.rows[report.rows.len() - 1].n
        );
    }

    emit_results(&report.rows, cfg.output_format.unwrap_or(OutputFormat::Csv), &path)?;
    let _ = writeln!(out, "wrote {}", path.display());

    if !report.all_bounds_hold() {
        for (row, status) in report.rows.iter().zip(&report.status) {
            if !status.bounds_hold() {
                let _ = writeln!(err, "bound violated: {row:?}");
            }
        }
        return Ok(EXIT_BOUND_VIOLATION);
    }
    Ok(if report.all_converged() { EXIT_OK } else { EXIT_UNCONVERGED })
}

fn cmd_bounds(cfg: &Config, args: &CommonArgs, out: &mut dyn Write) -> Result<i32> {
    let params = cfg.params.as_deref();
    let (l, l_z) = lipschitz_constants(cfg, params)?;
    let n = cfg.bounds.n.or(params.map(<[f64]>::len));

    let mut reports: Vec<BoundReport> = Vec::new();
    if let (Some(q), Some(d)) = (&cfg.quantizer, &cfg.distribution) {
        reports.push(prop1_bound(l, l_z, q, d)?);
    }
    if let (Some(d), Some(p)) = (&cfg.distribution, params) {
        reports.push(prop2_bound(l, l_z, d, p)?);
    }
    if let Some(n) = n.filter(|&n| n >= 2) {
        reports.push(prop3_explicit_bound(cfg.game.action_lo, cfg.game.action_hi, l_z, n)?);
    }
    if let (Some(q), Some(p)) = (&cfg.quantizer, params) {
        reports.push(prop4_bound(l, l_z, q, p)?);
    }

    let _ = writeln!(out, "{:<18} {:>24} {:>12} {:>12} {:>24}", "bound", "value", "L", "L_z", "expectation");
    for r in &reports {
        let value = r.value.map(format_float).unwrap_or_else(|| "inapplicable".into());
        let _ = writeln!(
            out,
            "{:<18} {:>24} {:>12.6} {:>12.6} {:>24}",
            r.kind.label(),
            value,
            r.inputs.l,
            r.inputs.l_z,
            format_float(r.inputs.expectation)
        );
    }
    let cost = match (&cfg.quantizer, n) {
        (Some(q), Some(n)) => Some(communication_cost(q.k(), n)?),
        _ => None,
    };
    if let Some(c) = &cost {
        let _ = writeln!(out, "per-agent bits = {}", c.per_agent_bits);
        let _ = writeln!(out, "center storage bits = {}", c.center_storage_bits);
        let _ = writeln!(out, "baseline reals = {}", c.baseline_reals);
    }
    if let Some(path) = output_path(cfg, args) {
        #[derive(Serialize)]
        struct BoundsOutput<'a> {
            bounds: &'a [BoundReport],
            communication: Option<&'a crate::bounds::CommunicationCost>,
        }
        let text = serde_json::to_string_pretty(&BoundsOutput {
            bounds: &reports,
            communication: cost.as_ref(),
        })
        .expect("serializable report");
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
    }
    Ok(EXIT_OK)
}
