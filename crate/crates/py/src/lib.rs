//! Python bindings for `meanfield`.
//!
//! Build with `cargo build --release -p meanfield-py` and copy
//! `target/release/libpymeanfield.so` to `pymeanfield.so` somewhere on
//! `sys.path`.

use meanfield::aem::{DEFAULT_MAX_ITER, DEFAULT_NODES, DEFAULT_TOL};
use meanfield::harness::OutputFormat;
use meanfield::lipschitz::DEFAULT_GRID;
use meanfield::{
    BoundReport, ExpectationEvaluator, ExperimentSpec, GameSpec, MfgError, ParameterDistribution, Population,
    QuantizedHistogram, Quantizer as CoreQuantizer, SolverConfig, SweepRow, UtilityFamily,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: MfgError) -> PyErr {
    match e {
        MfgError::Domain(_) | MfgError::Size(_) | MfgError::Config { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Evaluator kinds accepted by `solve_aem`, keyed by the CLI method names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Quadrature,
    QuantizedDist,
    Empirical,
    QuantizedAlpha,
}

fn parse_method(name: &str) -> Result<Method, String> {
    match name {
        "quadrature" => Ok(Method::Quadrature),
        "quantized-dist" => Ok(Method::QuantizedDist),
        "empirical" => Ok(Method::Empirical),
        "quantized-alpha" => Ok(Method::QuantizedAlpha),
        other => Err(format!(
            "unknown method {other:?}; expected quadrature, quantized-dist, empirical or quantized-alpha"
        )),
    }
}

/// A utility family on an action interval `[lo, hi]`.
#[pyclass(name = "Game", module = "pymeanfield", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Game {
    inner: GameSpec,
}

#[pymethods]
impl Game {
    /// `u = -(x - sqrt(z^2 + alpha^2))^2 - 2x` on `[0.5, 20]`.
    #[staticmethod]
    fn hypot() -> Self {
        Self {
            inner: GameSpec::hypot_example(),
        }
    }

    /// Best response `clamp(slope_z z + slope_alpha alpha + offset, lo, hi)`.
    #[staticmethod]
    #[pyo3(signature = (slope_z, slope_alpha, offset, lo, hi))]
    fn linear(slope_z: f64, slope_alpha: f64, offset: f64, lo: f64, hi: f64) -> PyResult<Self> {
        let family = UtilityFamily::linear(slope_z, slope_alpha, offset).map_err(to_py)?;
        Self::build(family, lo, hi)
    }

    /// `u = -(x - slope_z z - slope_alpha alpha - offset)^2`, maximized
    /// numerically; any slope is allowed.
    #[staticmethod]
    #[pyo3(signature = (slope_z, slope_alpha, offset, lo, hi))]
    fn quadratic_tracking(slope_z: f64, slope_alpha: f64, offset: f64, lo: f64, hi: f64) -> PyResult<Self> {
        Self::build(UtilityFamily::quadratic_tracking(slope_z, slope_alpha, offset), lo, hi)
    }

    #[getter]
    fn action_lo(&self) -> f64 {
        self.inner.action_lo
    }

    #[getter]
    fn action_hi(&self) -> f64 {
        self.inner.action_hi
    }

    fn utility(&self, x: f64, z: f64, alpha: f64) -> PyResult<f64> {
        self.inner.evaluate_utility(x, z, alpha).map_err(to_py)
    }

    fn best_response(&self, z: f64, alpha: f64) -> PyResult<f64> {
        self.inner.best_response(z, alpha).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Game({:?}, [{}, {}])",
            self.inner.utility, self.inner.action_lo, self.inner.action_hi
        )
    }
}

impl Game {
    fn build(family: UtilityFamily, lo: f64, hi: f64) -> PyResult<Self> {
        let inner = GameSpec::new(family, lo, hi, Population::Params(vec![0.0])).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn with_params(&self, params: Vec<f64>) -> PyResult<GameSpec> {
        self.inner.with_params(params).map_err(to_py)
    }
}

/// Law of the private parameter.
#[pyclass(name = "Distribution", module = "pymeanfield", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Distribution {
    inner: ParameterDistribution,
}

#[pymethods]
impl Distribution {
    #[staticmethod]
    fn gaussian(mean: f64, variance: f64) -> PyResult<Self> {
        ParameterDistribution::gaussian(mean, variance).map(Self::from).map_err(to_py)
    }

    #[staticmethod]
    fn uniform(lo: f64, hi: f64) -> PyResult<Self> {
        ParameterDistribution::uniform(lo, hi).map(Self::from).map_err(to_py)
    }

    #[staticmethod]
    fn discrete(points: Vec<f64>, weights: Vec<f64>) -> PyResult<Self> {
        ParameterDistribution::discrete(&points, &weights).map(Self::from).map_err(to_py)
    }

    #[staticmethod]
    fn empirical(values: Vec<f64>) -> PyResult<Self> {
        ParameterDistribution::empirical(&values).map(Self::from).map_err(to_py)
    }

    fn with_truncation(&self, lo: f64, hi: f64) -> PyResult<Self> {
        self.inner.clone().with_truncation(lo, hi).map(Self::from).map_err(to_py)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x)
    }

    fn support(&self) -> (f64, f64) {
        self.inner.support()
    }

    /// `n` draws from a stream seeded with `seed`; shorter requests are
    /// prefixes of longer ones.
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        self.inner.sample(n, seed)
    }

    fn __repr__(&self) -> String {
        format!("Distribution({:?})", self.inner.kind)
    }
}

impl From<ParameterDistribution> for Distribution {
    fn from(inner: ParameterDistribution) -> Self {
        Self { inner }
    }
}

/// Scalar quantizer: cell boundaries and one representative per cell.
#[pyclass(name = "Quantizer", module = "pymeanfield", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Quantizer {
    inner: CoreQuantizer,
}

#[pymethods]
impl Quantizer {
    #[new]
    fn new(boundaries: Vec<f64>, representatives: Vec<f64>) -> PyResult<Self> {
        CoreQuantizer::new(boundaries, representatives)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// `k` equal cells on `[lo, hi]` with midpoint representatives.
    #[staticmethod]
    fn uniform(lo: f64, hi: f64, k: usize) -> PyResult<Self> {
        CoreQuantizer::uniform(lo, hi, k).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn boundaries(&self) -> Vec<f64> {
        self.inner.boundaries().to_vec()
    }

    #[getter]
    fn representatives(&self) -> Vec<f64> {
        self.inner.representatives().to_vec()
    }

    /// `(cell index, representative)` for `alpha`.
    fn quantize(&self, alpha: f64) -> PyResult<(usize, f64)> {
        self.inner.quantize_value(alpha).map_err(to_py)
    }

    fn cell_probabilities(&self, dist: &Distribution) -> Vec<f64> {
        meanfield::cell_probabilities(&self.inner, &dist.inner)
    }

    /// Per-cell counts of `params` and their canonical byte encoding.
    fn histogram<'py>(&self, py: Python<'py>, params: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let hist = QuantizedHistogram::build(&self.inner, &params);
        let d = PyDict::new(py);
        d.set_item("counts", hist.counts.clone())?;
        d.set_item("n", hist.n)?;
        d.set_item("payload_bits", hist.count_payload_bits())?;
        d.set_item("encoded", hist.encode().map_err(to_py)?)?;
        Ok(d)
    }
}

fn bound_dict<'py>(py: Python<'py>, b: &BoundReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kind", b.kind.label())?;
    d.set_item("value", b.value)?;
    d.set_item("l", b.inputs.l)?;
    d.set_item("l_z", b.inputs.l_z)?;
    d.set_item("expectation", b.inputs.expectation)?;
    d.set_item("satisfied", b.satisfied)?;
    Ok(d)
}

fn row_dict<'py>(py: Python<'py>, r: &SweepRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("n", r.n)?;
    d.set_item("z_star_1", r.z_star_1)?;
    d.set_item("x_star_1", r.x_star_1)?;
    d.set_item("x_ane_1", r.x_ane_1)?;
    d.set_item("z_aem", r.z_aem)?;
    d.set_item("z_hat_n", r.z_hat_n)?;
    d.set_item("z_tilde_n", r.z_tilde_n)?;
    d.set_item("err_uniform", r.err_uniform)?;
    d.set_item("prop3_bound", r.prop3_bound)?;
    d.set_item("wall_time_ms", r.wall_time_ms)?;
    Ok(d)
}

/// Finite-population Nash equilibrium by synchronous best responses.
/// Returns a dict with `actions`, `means`, `iterations`, `residual`,
/// `converged` and `update_norms`.
#[pyfunction]
#[pyo3(signature = (game, params, tol = 1e-10, max_iter = 10_000))]
fn solve_ne<'py>(
    py: Python<'py>,
    game: &Game,
    params: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let g = game.with_params(params)?;
    let cfg = SolverConfig {
        tol,
        max_iter,
        initial_actions: None,
    };
    let r = py.detach(|| meanfield::solve_ne(&g, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("actions", r.actions)?;
    d.set_item("means", r.means)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("residual", r.residual_inf)?;
    d.set_item("converged", r.converged)?;
    d.set_item("update_norms", r.update_norms)?;
    Ok(d)
}

/// Grid oracle for at most four agents; returns the equilibrium actions.
#[pyfunction]
#[pyo3(signature = (game, params, grid_points = 20_001))]
fn brute_force_ne(py: Python<'_>, game: &Game, params: Vec<f64>, grid_points: usize) -> PyResult<Vec<f64>> {
    let g = game.with_params(params)?;
    py.detach(|| meanfield::brute_force_ne(&g, grid_points))
        .map(|r| r.actions)
        .map_err(to_py)
}

/// Asymptotic equilibrium mean. `method` is one of `quadrature`,
/// `quantized-dist` (needs `dist` and `quantizer`), `empirical` (needs
/// `params`) and `quantized-alpha` (needs `params` and `quantizer`).
#[pyfunction]
#[pyo3(signature = (game, method = "quadrature", dist = None, params = None, quantizer = None,
                    nodes = DEFAULT_NODES, tol = DEFAULT_TOL, max_iter = DEFAULT_MAX_ITER))]
#[allow(clippy::too_many_arguments)]
fn solve_aem<'py>(
    py: Python<'py>,
    game: &Game,
    method: &str,
    dist: Option<&Distribution>,
    params: Option<Vec<f64>>,
    quantizer: Option<&Quantizer>,
    nodes: usize,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let method = parse_method(method).map_err(PyValueError::new_err)?;
    let need = |what: &str| PyValueError::new_err(format!("method needs `{what}`"));
    let ev = match method {
        Method::Quadrature => ExpectationEvaluator::Quadrature {
            dist: dist.ok_or_else(|| need("dist"))?.inner.clone(),
            nodes,
        },
        Method::QuantizedDist => ExpectationEvaluator::QuantizedDistribution {
            quantizer: quantizer.ok_or_else(|| need("quantizer"))?.inner.clone(),
            dist: dist.ok_or_else(|| need("dist"))?.inner.clone(),
        },
        Method::Empirical => ExpectationEvaluator::Empirical(params.ok_or_else(|| need("params"))?),
        Method::QuantizedAlpha => {
            let q = &quantizer.ok_or_else(|| need("quantizer"))?.inner;
            ExpectationEvaluator::QuantizedParams(QuantizedHistogram::build(q, &params.ok_or_else(|| need("params"))?))
        }
    };
    let r = py
        .detach(|| meanfield::solve_aem(&ev, &game.inner, tol, max_iter))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("z_star", r.z_star)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("residual", r.residual)?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

/// Asymptotic Nash equilibrium action `Br(z_aem, alpha)`.
#[pyfunction]
fn ane_strategy(game: &Game, z_aem: f64, alpha: f64) -> PyResult<f64> {
    meanfield::ane_strategy(z_aem, alpha, &game.inner).map_err(to_py)
}

/// Estimated `(L, L_z)` over `z` in the action interval and either the
/// given parameter values or a grid over `alpha_range`.
#[pyfunction]
#[pyo3(signature = (game, params = None, alpha_range = None, points = DEFAULT_GRID))]
fn estimate_lipschitz(
    game: &Game,
    params: Option<Vec<f64>>,
    alpha_range: Option<(f64, f64)>,
    points: usize,
) -> PyResult<(f64, f64)> {
    let g = &game.inner;
    let z = (g.action_lo, g.action_hi);
    let est = match (params, alpha_range) {
        (Some(p), _) => meanfield::estimate_lipschitz_on_params(g, z, &p, points),
        (None, Some(range)) => meanfield::estimate_lipschitz(g, z, range, (points, points)),
        (None, None) => return Err(PyValueError::new_err("give `params` or `alpha_range`")),
    }
    .map_err(to_py)?;
    Ok((est.l_alpha, est.l_z))
}

#[pyfunction]
fn prop1_bound<'py>(
    py: Python<'py>,
    l: f64,
    l_z: f64,
    quantizer: &Quantizer,
    dist: &Distribution,
) -> PyResult<Bound<'py, PyDict>> {
    bound_dict(py, &meanfield::prop1_bound(l, l_z, &quantizer.inner, &dist.inner).map_err(to_py)?)
}

#[pyfunction]
fn prop2_bound<'py>(
    py: Python<'py>,
    l: f64,
    l_z: f64,
    dist: &Distribution,
    params: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    bound_dict(py, &meanfield::prop2_bound(l, l_z, &dist.inner, &params).map_err(to_py)?)
}

#[pyfunction]
fn prop3_explicit_bound<'py>(py: Python<'py>, a: f64, b: f64, l_z: f64, n: usize) -> PyResult<Bound<'py, PyDict>> {
    bound_dict(py, &meanfield::prop3_explicit_bound(a, b, l_z, n).map_err(to_py)?)
}

#[pyfunction]
fn prop4_bound<'py>(
    py: Python<'py>,
    l: f64,
    l_z: f64,
    quantizer: &Quantizer,
    params: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    bound_dict(py, &meanfield::prop4_bound(l, l_z, &quantizer.inner, &params).map_err(to_py)?)
}

/// `(per-agent bits, center storage bits, baseline reals)`.
#[pyfunction]
fn communication_cost(k: usize, n: usize) -> PyResult<(f64, f64, usize)> {
    let c = meanfield::communication_cost(k, n).map_err(to_py)?;
    Ok((c.per_agent_bits, c.center_storage_bits, c.baseline_reals))
}

/// Runs an n-sweep and returns one dict per row.
#[pyfunction]
#[pyo3(signature = (game, dist, n_values, seed, quantized_params_k = None))]
fn run_sweep<'py>(
    py: Python<'py>,
    game: &Game,
    dist: &Distribution,
    n_values: Vec<usize>,
    seed: u64,
    quantized_params_k: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut spec = ExperimentSpec::new(game.inner.clone(), dist.inner.clone(), n_values, seed);
    spec.quantized_params_k = quantized_params_k;
    let report = py.detach(|| meanfield::run_sweep(&spec)).map_err(to_py)?;
    report.rows.iter().map(|r| row_dict(py, r)).collect()
}

/// Sweep results rendered as CSV text, as the command-line tool writes them.
#[pyfunction]
#[pyo3(signature = (game, dist, n_values, seed))]
fn sweep_csv(py: Python<'_>, game: &Game, dist: &Distribution, n_values: Vec<usize>, seed: u64) -> PyResult<String> {
    let spec = ExperimentSpec::new(game.inner.clone(), dist.inner.clone(), n_values, seed);
    let report = py.detach(|| meanfield::run_sweep(&spec)).map_err(to_py)?;
    Ok(meanfield::harness::render_results(&report.rows, OutputFormat::Csv))
}

#[pymodule]
fn pymeanfield(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Game>()?;
    m.add_class::<Distribution>()?;
    m.add_class::<Quantizer>()?;
    m.add_function(wrap_pyfunction!(solve_ne, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_ne, m)?)?;
    m.add_function(wrap_pyfunction!(solve_aem, m)?)?;
    m.add_function(wrap_pyfunction!(ane_strategy, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_lipschitz, m)?)?;
    m.add_function(wrap_pyfunction!(prop1_bound, m)?)?;
    m.add_function(wrap_pyfunction!(prop2_bound, m)?)?;
    m.add_function(wrap_pyfunction!(prop3_explicit_bound, m)?)?;
    m.add_function(wrap_pyfunction!(prop4_bound, m)?)?;
    m.add_function(wrap_pyfunction!(communication_cost, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_match_the_command_line() {
        assert_eq!(parse_method("quadrature"), Ok(Method::Quadrature));
        assert_eq!(parse_method("quantized-dist"), Ok(Method::QuantizedDist));
        assert_eq!(parse_method("empirical"), Ok(Method::Empirical));
        assert_eq!(parse_method("quantized-alpha"), Ok(Method::QuantizedAlpha));
        assert!(parse_method("quantized_alpha").unwrap_err().contains("unknown method"));
    }
}
