//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists built from the same JSON shapes the CLI writes.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString, PyTuple};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use quadsig::cheap_talk_scalar::{self, CheapTalkSpec, QuantizerPolicy};
use quadsig::montecarlo::{self, SimConfig};
use quadsig::scenario;
use quadsig::signaling_multi::{self, from_rows, to_rows, MatrixGameSpec};
use quadsig::signaling_scalar::{self, AffinePairScalar, ScalarGameSpec};
use quadsig::SourceModel;

create_exception!(quadsig_py, QuadsigError, PyValueError);

fn err(e: quadsig::Error) -> PyErr {
    QuadsigError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => PyInt::new(py, i).into_any(),
            None => PyFloat::new(py, n.as_f64().unwrap_or(f64::NAN)).into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if obj.is_none() {
        return Ok(Value::Null);
    }
    if let Ok(b) = obj.cast::<PyBool>() {
        return Ok(Value::Bool(b.is_true()));
    }
    if obj.cast::<PyInt>().is_ok() {
        return Ok(Value::from(obj.extract::<i64>()?));
    }
    if obj.cast::<PyFloat>().is_ok() {
        return Ok(serde_json::json!(obj.extract::<f64>()?));
    }
    if let Ok(s) = obj.cast::<PyString>() {
        return Ok(Value::String(s.to_str()?.to_string()));
    }
    if let Ok(d) = obj.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (k, v) in d.iter() {
            map.insert(k.extract::<String>()?, from_py(&v)?);
        }
        return Ok(Value::Object(map));
    }
    if obj.cast::<PyList>().is_ok() || obj.cast::<PyTuple>().is_ok() {
        return obj.try_iter()?.map(|x| from_py(&x?)).collect::<PyResult<Vec<_>>>().map(Value::Array);
    }
    // Anything numeric, e.g. numpy scalars.
    Ok(serde_json::json!(obj.extract::<f64>()?))
}

fn export<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| QuadsigError::new_err(e.to_string()))?;
    to_py(py, &value)
}

fn import<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    serde_json::from_value(from_py(obj)?).map_err(|e| QuadsigError::new_err(e.to_string()))
}

/// Scalar Gaussian signaling game with power weight `lambda_` and bias.
#[pyclass(name = "ScalarGame", frozen)]
struct PyScalarGame {
    spec: ScalarGameSpec,
}

#[pymethods]
impl PyScalarGame {
    #[new]
    fn new(source_power: f64, noise_power: f64, lambda_: f64, bias: f64) -> PyResult<Self> {
        ScalarGameSpec::new(source_power, noise_power, lambda_, bias)
            .map(|spec| Self { spec })
            .map_err(err)
    }

    #[getter]
    fn source_power(&self) -> f64 {
        self.spec.source_power
    }

    #[getter]
    fn noise_power(&self) -> f64 {
        self.spec.noise_power
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.spec.lambda
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.spec.bias
    }

    fn admits_informative(&self) -> bool {
        self.spec.admits_informative()
    }

    fn t_map(&self, a: f64) -> PyResult<f64> {
        signaling_scalar::t_map(a, &self.spec).map_err(err)
    }

    fn nash<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        export(py, &signaling_scalar::solve_affine_nash(&self.spec).map_err(err)?)
    }

    fn team<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        export(py, &signaling_scalar::team_report(&self.spec).map_err(err)?)
    }

    fn stackelberg<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        export(py, &signaling_scalar::solve_stackelberg(&self.spec).map_err(err)?)
    }

    fn price_of_anarchy<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        export(py, &signaling_scalar::price_of_anarchy(&self.spec).map_err(err)?)
    }

    fn it_bound<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        export(py, &signaling_scalar::it_bound_optimal(&self.spec).map_err(err)?)
    }

    /// Costs of (A, C, K, L) estimated from `n_samples` draws.
    #[pyo3(signature = (pair, n_samples = 1_000_000, seed = 0, antithetic = false))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        pair: (f64, f64, f64, f64),
        n_samples: usize,
        seed: u64,
        antithetic: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = SimConfig {
            n_samples,
            seed,
            antithetic,
        };
        let est = py
            .detach(|| montecarlo::estimate_affine(&pair_of(pair), &self.spec, cfg))
            .map_err(err)?;
        export(py, &est)
    }

    #[pyo3(signature = (pair, n_samples = 100_000, seed = 0, steps = vec![-1e-2, -1e-3, 1e-3, 1e-2]))]
    fn certify<'py>(
        &self,
        py: Python<'py>,
        pair: (f64, f64, f64, f64),
        n_samples: usize,
        seed: u64,
        steps: Vec<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg = SimConfig::new(n_samples, seed);
        let cert = py
            .detach(|| montecarlo::deviation_certify(&pair_of(pair), &self.spec, cfg, &steps))
            .map_err(err)?;
        export(py, &cert)
    }

    fn __repr__(&self) -> String {
        format!(
            "ScalarGame(source_power={}, noise_power={}, lambda_={}, bias={})",
            self.spec.source_power, self.spec.noise_power, self.spec.lambda, self.spec.bias
        )
    }
}

fn pair_of((a, c, k, l): (f64, f64, f64, f64)) -> AffinePairScalar {
    AffinePairScalar { a, c, k, l }
}

/// Scalar cheap talk over a source such as `{"kind": "uniform", "lo": 0, "hi": 1}`.
#[pyclass(name = "CheapTalk", frozen)]
struct PyCheapTalk {
    spec: CheapTalkSpec,
}

#[pymethods]
impl PyCheapTalk {
    #[new]
    fn new(source: &Bound<'_, PyAny>, bias: f64) -> PyResult<Self> {
        let source: SourceModel = import(source)?;
        CheapTalkSpec::new(source, bias).map(|spec| Self { spec }).map_err(err)
    }

    #[pyo3(signature = (cap = 64))]
    fn max_bins(&self, cap: usize) -> PyResult<usize> {
        cheap_talk_scalar::max_bins(&self.spec, cap).map_err(err)
    }

    /// Every N-bin equilibrium as `{"boundaries": [...], "actions": [...]}`.
    fn solve<'py>(&self, py: Python<'py>, n_bins: usize) -> PyResult<Bound<'py, PyAny>> {
        let all = py
            .detach(|| cheap_talk_scalar::solve_quantizer_equilibria(&self.spec, n_bins))
            .map_err(err)?;
        export(py, &all)
    }

    #[pyo3(signature = (policy, grid = 10_000))]
    fn verify<'py>(&self, py: Python<'py>, policy: &Bound<'py, PyAny>, grid: usize) -> PyResult<Bound<'py, PyAny>> {
        let policy: QuantizerPolicy = import(policy)?;
        export(
            py,
            &cheap_talk_scalar::verify_equilibrium(&self.spec, &policy, grid).map_err(err)?,
        )
    }

    fn costs(&self, policy: &Bound<'_, PyAny>) -> PyResult<(f64, f64)> {
        let policy: QuantizerPolicy = import(policy)?;
        cheap_talk_scalar::costs(&self.spec, &policy).map_err(err)
    }
}

/// Gaussian vector signaling game; matrices are lists of rows.
#[pyclass(name = "MatrixGame", frozen)]
struct PyMatrixGame {
    spec: MatrixGameSpec,
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<nalgebra::DMatrix<f64>> {
    from_rows(&rows).map_err(QuadsigError::new_err)
}

#[pymethods]
impl PyMatrixGame {
    #[new]
    #[pyo3(signature = (source_cov, noise_cov, lambda_, bias = None))]
    fn new(source_cov: Vec<Vec<f64>>, noise_cov: Vec<Vec<f64>>, lambda_: f64, bias: Option<Vec<f64>>) -> PyResult<Self> {
        let sm = matrix(source_cov)?;
        let bias = bias.unwrap_or_else(|| vec![0.0; sm.nrows()]);
        MatrixGameSpec::new(sm, matrix(noise_cov)?, lambda_, nalgebra::DVector::from_vec(bias))
            .map(|spec| Self { spec })
            .map_err(err)
    }

    #[staticmethod]
    fn reference() -> Self {
        Self {
            spec: signaling_multi::reference::spec(),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn t_map(&self, a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let t = signaling_multi::t_map_matrix(&matrix(a)?, &self.spec).map_err(err)?;
        Ok(to_rows(&t))
    }

    fn residual(&self, a: Vec<Vec<f64>>) -> PyResult<f64> {
        signaling_multi::fixed_point_residual(&matrix(a)?, &self.spec).map_err(err)
    }

    #[pyo3(signature = (a0, damping = 0.5, tol = 1e-10, cap = 200_000))]
    fn solve_fixed_point<'py>(
        &self,
        py: Python<'py>,
        a0: Vec<Vec<f64>>,
        damping: f64,
        tol: f64,
        cap: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let a0 = matrix(a0)?;
        export(
            py,
            &signaling_multi::solve_fixed_point(&self.spec, &a0, damping, tol, cap).map_err(err)?,
        )
    }

    #[pyo3(signature = (n_starts = 200, seed = 0))]
    fn multi_start<'py>(&self, py: Python<'py>, n_starts: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let found = py
            .detach(|| signaling_multi::multi_start_fixed_points(&self.spec, n_starts, seed))
            .map_err(err)?;
        export(py, &found)
    }

    fn existence_diagnostics<'py>(&self, py: Python<'py>, a: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
        let a = matrix(a)?;
        export(
            py,
            &signaling_multi::existence_diagnostics(&self.spec, &a).map_err(err)?,
        )
    }

    fn it_bound<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        export(py, &signaling_multi::it_bound_multi_optimal(&self.spec).map_err(err)?)
    }
}

#[pyfunction]
fn water_fill<'py>(py: Python<'py>, total_power: f64, noise_eigenvalues: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    export(py, &signaling_multi::water_fill(total_power, &noise_eigenvalues).map_err(err)?)
}

/// Runs a scenario document (same schema as the CLI config) and returns the
/// full report.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, doc: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let text = from_py(doc)?.to_string();
    let report = py
        .detach(|| {
            let sc = scenario::load_scenario(&text, "<python>", &[])?;
            scenario::execute(&sc)
        })
        .map_err(err)?;
    export(py, &report)
}

#[pyfunction]
#[pyo3(signature = (n_starts = 200, seed = 0))]
fn reproduce_reference_example<'py>(py: Python<'py>, n_starts: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| scenario::reproduce_reference_example(n_starts, seed))
        .map_err(err)?;
    export(py, &r)
}

#[pymodule]
pub fn quadsig_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", quadsig::VERSION)?;
    m.add("QuadsigError", m.py().get_type::<QuadsigError>())?;
    m.add_class::<PyScalarGame>()?;
    m.add_class::<PyCheapTalk>()?;
    m.add_class::<PyMatrixGame>()?;
    m.add_function(wrap_pyfunction!(water_fill, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce_reference_example, m)?)?;
    Ok(())
}
