//! TOML run configuration.
//!
//! ```toml
//! [game]
//! utility = "hypot_tracking"      # or "linear", "quadratic_tracking"
//! action_lo = 0.5
//! action_hi = 20.0
//!
//! [distribution]
//! kind = "gaussian"               # or "uniform", "discrete", "empirical"
//! mean = 0.0
//! variance = 4.0
//!
//! [params]
//! sampled = { n = 100, seed = 7 } # or inline = [...], or file = "alphas.txt"
//!
//! [solver]
//! tol = 1e-10
//! max_iter = 10000
//!
//! [quantizer]
//! k = 64                          # lo / hi default to the distribution support
//!
//! [output]
//! format = "json"
//! path = "result.json"
//!
//! [sweep]
//! n_values = [10, 30, 100]
//! seed = 7
//!
//! [bounds]
//! l = 1.0                         # override the estimated constants
//! l_z = 0.5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::distribution::ParameterDistribution;
use crate::error::{MfgError, Result};
use crate::game::{GameSpec, Population, UtilityFamily};
use crate::harness::OutputFormat;
use crate::ne::SolverConfig;
use crate::quantize::Quantizer;

pub const MAX_INLINE_PARAMS: usize = 1_000_000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    game: Option<RawGame>,
    distribution: Option<RawDistribution>,
    params: Option<RawParams>,
    solver: Option<RawSolver>,
    quantizer: Option<RawQuantizer>,
    output: Option<RawOutput>,
    sweep: Option<RawSweep>,
    bounds: Option<RawBounds>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGame {
    utility: String,
    action_lo: Option<f64>,
    action_hi: Option<f64>,
    slope_z: Option<f64>,
    slope_alpha: Option<f64>,
    offset: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    kind: String,
    mean: Option<f64>,
    variance: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
    points: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
    values: Option<Vec<f64>>,
    truncation: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    inline: Option<Vec<f64>>,
    file: Option<PathBuf>,
    sampled: Option<RawSampled>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampled {
    n: usize,
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol: Option<f64>,
    max_iter: Option<usize>,
    nodes: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuantizer {
    lo: Option<f64>,
    hi: Option<f64>,
    k: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    format: Option<OutputFormat>,
    path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    n_values: Vec<usize>,
    seed: Option<u64>,
    quantized_params_k: Option<usize>,
    quantized_dist_k: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    l: Option<f64>,
    l_z: Option<f64>,
    n: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub n_values: Vec<usize>,
    pub seed: u64,
    pub quantized_params_k: Option<usize>,
    pub quantized_dist_k: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct BoundSettings {
    pub l: Option<f64>,
    pub l_z: Option<f64>,
    pub n: Option<usize>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    /// Utility and action interval; the population is the explicit
    /// parameters when present, otherwise the distribution.
    pub game: GameSpec,
    pub distribution: Option<ParameterDistribution>,
    pub params: Option<Vec<f64>>,
    pub solver: SolverConfig,
    pub quadrature_nodes: usize,
    pub quantizer: Option<Quantizer>,
    pub output_format: Option<OutputFormat>,
    pub output_path: Option<PathBuf>,
    pub sweep: Option<SweepSettings>,
    pub bounds: BoundSettings,
}

fn config_err(path: &str, message: impl Into<String>) -> MfgError {
    MfgError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn rethrow(path: &str) -> impl Fn(MfgError) -> MfgError + '_ {
    move |e| config_err(path, e.to_string())
}

fn require(value: Option<f64>, path: &str) -> Result<f64> {
    value.ok_or_else(|| config_err(path, "missing required key"))
}

fn reject_extra(section: &str, kind: &str, present: &[(&str, bool)]) -> Result<()> {
    match present.iter().find(|(_, set)| *set) {
        Some((key, _)) => Err(config_err(
            &format!("{section}.{key}"),
            format!("not used by `{kind}`"),
        )),
        None => Ok(()),
    }
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| MfgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Parses `text`; relative parameter files resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "<root>".to_string() } else { path };
            config_err(&path, e.into_inner().message().trim().to_string())
        })?;
        Self::resolve(raw, base_dir)
    }

    fn resolve(raw: RawConfig, base_dir: &Path) -> Result<Self> {
        let game = raw.game.ok_or_else(|| config_err("game", "missing required section"))?;
        let distribution = raw.distribution.map(resolve_distribution).transpose()?;

        let params = match raw.params {
            None => None,
            Some(p) => Some(resolve_params(p, distribution.as_ref(), base_dir)?),
        };

        let utility = resolve_utility(&game)?;
        let lo = game.action_lo.ok_or_else(|| config_err("game.action_lo", "missing required key"))?;
        let hi = game.action_hi.ok_or_else(|| config_err("game.action_hi", "missing required key"))?;
        let population = match (&params, &distribution) {
            (Some(p), _) => Population::Params(p.clone()),
            (None, Some(d)) => Population::Distribution(d.clone()),
            (None, None) => Population::Params(vec![0.0]),
        };
        let game = GameSpec::new(utility, lo, hi, population).map_err(rethrow("game"))?;

        let mut solver = SolverConfig::default();
        let mut quadrature_nodes = crate::aem::DEFAULT_NODES;
        if let Some(s) = raw.solver {
            if let Some(tol) = s.tol {
                if !(tol > 0.0) || !tol.is_finite() {
                    return Err(config_err("solver.tol", format!("must be positive, got {tol}")));
                }
                solver.tol = tol;
            }
            if let Some(m) = s.max_iter {
                if m == 0 {
                    return Err(config_err("solver.max_iter", "must be at least 1"));
                }
                solver.max_iter = m;
            }
            if let Some(nodes) = s.nodes {
                if nodes == 0 {
                    return Err(config_err("solver.nodes", "must be at least 1"));
                }
                quadrature_nodes = nodes;
            }
        }

        let quantizer = match raw.quantizer {
            None => None,
            Some(q) => {
                let default_range = distribution
                    .as_ref()
                    .map(|d| d.support())
                    .or_else(|| params.as_ref().map(|p| range_of(p)));
                let lo = q.lo.or(default_range.map(|r| r.0));
                let hi = q.hi.or(default_range.map(|r| r.1));
                let lo = lo.ok_or_else(|| config_err("quantizer.lo", "missing and no distribution or params to infer it"))?;
                let hi = hi.ok_or_else(|| config_err("quantizer.hi", "missing and no distribution or params to infer it"))?;
                Some(Quantizer::uniform(lo, hi, q.k).map_err(rethrow("quantizer"))?)
            }
        };

        let (output_format, output_path) = match raw.output {
            Some(o) => (o.format, o.path),
            None => (None, None),
        };

        let sweep = match raw.sweep {
            None => None,
            Some(s) => {
                if s.n_values.is_empty() {
                    return Err(config_err("sweep.n_values", "must not be empty"));
                }
                if s.n_values.iter().any(|&n| n < 2) || s.n_values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(config_err("sweep.n_values", "must be strictly ascending and each at least 2"));
                }
                for (key, k) in [("quantized_params_k", s.quantized_params_k), ("quantized_dist_k", s.quantized_dist_k)] {
                    if k == Some(0) {
                        return Err(config_err(&format!("sweep.{key}"), "must be at least 1"));
                    }
                }
                Some(SweepSettings {
                    n_values: s.n_values,
                    seed: s.seed.unwrap_or(0),
                    quantized_params_k: s.quantized_params_k,
                    quantized_dist_k: s.quantized_dist_k,
                })
            }
        };

        let bounds = match raw.bounds {
            None => BoundSettings::default(),
            Some(b) => {
                for (key, v) in [("l", b.l), ("l_z", b.l_z)] {
                    if let Some(v) = v {
                        if !(v >= 0.0) || !v.is_finite() {
                            return Err(config_err(&format!("bounds.{key}"), format!("must be finite and nonnegative, got {v}")));
                        }
                    }
                }
                BoundSettings { l: b.l, l_z: b.l_z, n: b.n }
            }
        };

        Ok(Self {
            game,
            distribution,
            params,
            solver,
            quadrature_nodes,
            quantizer,
            output_format,
            output_path,
            sweep,
            bounds,
        })
    }
}

fn range_of(params: &[f64]) -> (f64, f64) {
    let lo = params.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = params.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo < hi {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn resolve_utility(game: &RawGame) -> Result<UtilityFamily> {
    let coeffs = [
        ("slope_z", game.slope_z.is_some()),
        ("slope_alpha", game.slope_alpha.is_some()),
        ("offset", game.offset.is_some()),
    ];
    match game.utility.as_str() {
        "hypot_tracking" => {
            reject_extra("game", "hypot_tracking", &coeffs)?;
            Ok(UtilityFamily::HypotTracking)
        }
        "linear" => UtilityFamily::linear(
            game.slope_z.unwrap_or(0.0),
            game.slope_alpha.unwrap_or(0.0),
            game.offset.unwrap_or(0.0),
        )
        .map_err(rethrow("game.slope_z")),
        "quadratic_tracking" => Ok(UtilityFamily::quadratic_tracking(
            game.slope_z.unwrap_or(0.0),
            game.slope_alpha.unwrap_or(0.0),
            game.offset.unwrap_or(0.0),
        )),
        other => Err(config_err(
            "game.utility",
            format!("unknown utility `{other}` (expected hypot_tracking, linear or quadratic_tracking)"),
        )),
    }
}

fn resolve_distribution(d: RawDistribution) -> Result<ParameterDistribution> {
    let has = |name: &'static str, set: bool| (name, set);
    let all = [
        has("mean", d.mean.is_some()),
        has("variance", d.variance.is_some()),
        has("lo", d.lo.is_some()),
        has("hi", d.hi.is_some()),
        has("points", d.points.is_some()),
        has("weights", d.weights.is_some()),
        has("values", d.values.is_some()),
    ];
    let others = |used: &[&str]| -> Vec<(&str, bool)> {
        all.iter().filter(|(k, _)| !used.contains(k)).copied().collect()
    };
    let dist = match d.kind.as_str() {
        "gaussian" => {
            reject_extra("distribution", "gaussian", &others(&["mean", "variance"]))?;
            ParameterDistribution::gaussian(
                require(d.mean, "distribution.mean")?,
                require(d.variance, "distribution.variance")?,
            )
            .map_err(rethrow("distribution.variance"))?
        }
        "uniform" => {
            reject_extra("distribution", "uniform", &others(&["lo", "hi"]))?;
            ParameterDistribution::uniform(require(d.lo, "distribution.lo")?, require(d.hi, "distribution.hi")?)
                .map_err(rethrow("distribution.lo"))?
        }
        "discrete" => {
            reject_extra("distribution", "discrete", &others(&["points", "weights"]))?;
            let points = d.points.ok_or_else(|| config_err("distribution.points", "missing required key"))?;
            let weights = d.weights.ok_or_else(|| config_err("distribution.weights", "missing required key"))?;
            ParameterDistribution::discrete(&points, &weights).map_err(rethrow("distribution.weights"))?
        }
        "empirical" => {
            reject_extra("distribution", "empirical", &others(&["values"]))?;
            let values = d.values.ok_or_else(|| config_err("distribution.values", "missing required key"))?;
            ParameterDistribution::empirical(&values).map_err(rethrow("distribution.values"))?
        }
        other => {
            return Err(config_err(
                "distribution.kind",
                format!("unknown kind `{other}` (expected gaussian, uniform, discrete or empirical)"),
            ))
        }
    };
    match d.truncation {
        Some([lo, hi]) => dist.with_truncation(lo, hi).map_err(rethrow("distribution.truncation")),
        None => Ok(dist),
    }
}

fn resolve_params(p: RawParams, dist: Option<&ParameterDistribution>, base_dir: &Path) -> Result<Vec<f64>> {
    let given = [p.inline.is_some(), p.file.is_some(), p.sampled.is_some()];
    if given.iter().filter(|&&g| g).count() != 1 {
        return Err(config_err("params", "set exactly one of `inline`, `file` or `sampled`"));
    }
    let values = if let Some(values) = p.inline {
        if values.len() > MAX_INLINE_PARAMS {
            return Err(config_err(
                "params.inline",
                format!("{} entries exceed the inline limit of {MAX_INLINE_PARAMS}; use `sampled`", values.len()),
            ));
        }
        values
    } else if let Some(file) = p.file {
        let full = if file.is_absolute() { file } else { base_dir.join(file) };
        let text = fs::read_to_string(&full)
            .map_err(|e| config_err("params.file", format!("{}: {e}", full.display())))?;
        text.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| config_err("params.file", format!("{}: `{t}` is not a number", full.display())))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let s = p.sampled.expect("one source is set");
        let dist = dist.ok_or_else(|| config_err("params.sampled", "needs a [distribution] section"))?;
        if s.n == 0 {
            return Err(config_err("params.sampled.n", "must be at least 1"));
        }
        dist.sample(s.n, s.seed)
    };
    if values.is_empty() {
        return Err(config_err("params", "parameter list is empty"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(config_err("params", "parameters must be finite"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        Config::from_toml(text, Path::new("."))
    }

    fn key_path(err: MfgError) -> String {
        match err {
            MfgError::Config { path, .. } => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    const BASE: &str = r#"
[game]
utility = "hypot_tracking"
action_lo = 0.5
action_hi = 20.0

[distribution]
kind = "gaussian"
mean = 0.0
variance = 4.0
"#;

    #[test]
    fn full_config() {
        let text = format!(
            "{BASE}\n[params]\nsampled = {{ n = 100, seed = 7 }}\n[solver]\ntol = 1e-9\nmax_iter = 50\n[quantizer]\nk = 16\n[output]\nformat = \"csv\"\npath = \"x.csv\"\n[sweep]\nn_values = [10, 20]\nseed = 3\n[bounds]\nl_z = 0.9\n"
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.params.as_ref().unwrap().len(), 100);
        assert_eq!(c.solver.max_iter, 50);
        let q = c.quantizer.unwrap();
        assert_eq!(q.k(), 16);
        assert_eq!(q.boundaries()[0], -16.0);
        assert_eq!(c.output_format, Some(OutputFormat::Csv));
        assert_eq!(c.sweep.unwrap().n_values, vec![10, 20]);
        assert_eq!(c.bounds.l_z, Some(0.9));
        assert!(c.game.params().is_some());
    }

    #[test]
    fn missing_game_section() {
        let err = parse("[distribution]\nkind = \"uniform\"\nlo = 0.0\nhi = 1.0\n").unwrap_err();
        assert_eq!(key_path(err), "game");
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let err = parse(&format!("{BASE}\n[solver]\ntolerance = 1.0\n")).unwrap_err();
        assert_eq!(key_path(err), "solver.tolerance");
        let err = parse(&format!("{BASE}\n[bogus]\nx = 1\n")).unwrap_err();
        assert_eq!(key_path(err), "bogus");
        let err = parse(&format!("{BASE}\n[params]\nsampled = {{ n = 3, seed = 1, extra = 2 }}\n")).unwrap_err();
        assert_eq!(key_path(err), "params.sampled.extra");
        let err = parse(&BASE.replace("variance = 4.0", "variance = 4.0\nlo = 1.0")).unwrap_err();
        assert_eq!(key_path(err), "distribution.lo");
    }

    #[test]
    fn type_errors_name_their_path() {
        let err = parse(&BASE.replace("action_lo = 0.5", "action_lo = \"low\"")).unwrap_err();
        assert_eq!(key_path(err), "game.action_lo");
    }

    #[test]
    fn params_sources() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "1.0\n2.5, -3\n").unwrap();
        let c = Config::from_toml(&format!("{BASE}\n[params]\nfile = \"a.txt\"\n"), dir.path()).unwrap();
        assert_eq!(c.params.unwrap(), vec![1.0, 2.5, -3.0]);
        let err = Config::from_toml(&format!("{BASE}\n[params]\nfile = \"nope.txt\"\n"), dir.path()).unwrap_err();
        assert_eq!(key_path(err), "params.file");
        let err = parse(&format!("{BASE}\n[params]\ninline = [1.0]\nsampled = {{ n = 3, seed = 1 }}\n")).unwrap_err();
        assert_eq!(key_path(err), "params");
        let c = parse(&format!("{BASE}\n[params]\ninline = [1.0, 2.0]\n")).unwrap();
        assert_eq!(c.params.unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn sampled_params_need_a_distribution() {
        let text = "[game]\nutility = \"hypot_tracking\"\naction_lo = 0.5\naction_hi = 20.0\n[params]\nsampled = { n = 3, seed = 1 }\n";
        assert_eq!(key_path(parse(text).unwrap_err()), "params.sampled");
    }

    #[test]
    fn utility_kinds() {
        let lin = BASE.replace("\"hypot_tracking\"", "\"linear\"\nslope_z = 0.4\nslope_alpha = 0.1");
        assert!(matches!(parse(&lin).unwrap().game.utility, UtilityFamily::LinearBr { .. }));
        let steep = BASE.replace("\"hypot_tracking\"", "\"linear\"\nslope_z = 1.5");
        assert_eq!(key_path(parse(&steep).unwrap_err()), "game.slope_z");
        let q = BASE.replace("\"hypot_tracking\"", "\"quadratic_tracking\"\nslope_z = 1.5");
        assert!(matches!(parse(&q).unwrap().game.utility, UtilityFamily::CustomNumericUtility { .. }));
        let bad = BASE.replace("\"hypot_tracking\"", "\"cubic\"");
        assert_eq!(key_path(parse(&bad).unwrap_err()), "game.utility");
        let extra = BASE.replace("action_lo = 0.5", "action_lo = 0.5\noffset = 1.0");
        assert_eq!(key_path(parse(&extra).unwrap_err()), "game.offset");
    }

    #[test]
    fn sweep_validation() {
        let err = parse(&format!("{BASE}\n[sweep]\nn_values = [10, 5]\n")).unwrap_err();
        assert_eq!(key_path(err), "sweep.n_values");
    }
}
