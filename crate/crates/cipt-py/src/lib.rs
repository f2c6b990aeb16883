//! Python bindings for the core simulator: state-vector operations, seed
//! tree, trajectory running, fluctuation decomposition, and scaling fits.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cipt::bernoulli::{default_t_max, generate_circuit, run_trajectory, Mode, RecordSpec};
use cipt::bits::DiagonalObservable;
use cipt::rng::SeedTree;
use cipt::scaling::{fss_collapse, CollapseOptions, ScalingPoint};
use cipt::state::{PureState, ShiftDirection};
use cipt::stats::{decompose_variance, NestedSample};

fn err(e: cipt::Error) -> PyErr {
    match e {
        cipt::Error::Io(_) | cipt::Error::Csv(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyfunction]
fn fdw(n: u64, l: u32) -> PyResult<u32> {
    cipt::bits::fdw_of_index(n, l).map_err(err)
}

#[pyfunction]
fn magnetization(n: u64, l: u32) -> PyResult<f64> {
    cipt::bits::magnetization_of_index(n, l).map_err(err)
}

#[pyfunction]
fn defect_density(n: u64, l: u32) -> PyResult<f64> {
    cipt::bits::defect_density_of_index(n, l).map_err(err)
}

/// Dense pure state on `l` qubits.
#[pyclass(name = "PureState")]
struct PyPureState {
    inner: PureState,
}

#[pymethods]
impl PyPureState {
    #[new]
    fn new(n: u64, l: u32) -> PyResult<Self> {
        Ok(PyPureState { inner: PureState::new_product_state(n, l).map_err(err)? })
    }

    #[staticmethod]
    fn from_amplitudes(amps: Vec<Complex64>, l: u32) -> PyResult<Self> {
        Ok(PyPureState { inner: PureState::from_amplitudes(amps, l).map_err(err)? })
    }

    #[getter]
    fn sites(&self) -> u32 {
        self.inner.sites()
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.inner.amplitudes().to_vec()
    }

    fn norm_sqr(&self) -> f64 {
        self.inner.norm_sqr()
    }

    fn l1_coherence(&self) -> f64 {
        self.inner.l1_coherence()
    }

    fn prob_one(&self, site: u32) -> PyResult<f64> {
        self.inner.prob_one(site).map_err(err)
    }

    fn apply_x(&mut self, site: u32) -> PyResult<()> {
        self.inner.apply_x(site).map_err(err)
    }

    fn shift_left(&mut self) {
        self.inner.apply_cyclic_shift(ShiftDirection::Left);
    }

    fn shift_right(&mut self) {
        self.inner.apply_cyclic_shift(ShiftDirection::Right);
    }

    /// Expectation (mean, second moment) of "k" (first domain wall),
    /// "mz" (magnetization), or "nd" (defect density).
    fn expect(&self, observable: &str) -> PyResult<(f64, f64)> {
        Ok(self.inner.expect_diagonal(parse_obs(observable)?))
    }
}

fn parse_obs(name: &str) -> PyResult<DiagonalObservable> {
    match name {
        "k" => Ok(DiagonalObservable::Fdw),
        "mz" => Ok(DiagonalObservable::Magnetization),
        "nd" => Ok(DiagonalObservable::DefectDensity),
        _ => Err(PyValueError::new_err(format!("unknown observable: {name}"))),
    }
}

/// Deterministic seed tree rooted at a 64-bit master seed.
#[pyclass(name = "SeedTree")]
#[derive(Clone)]
struct PySeedTree {
    inner: SeedTree,
}

#[pymethods]
impl PySeedTree {
    #[new]
    fn new(master: u64) -> Self {
        PySeedTree { inner: SeedTree::new(master) }
    }

    fn subtree(&self, index: u64) -> PySeedTree {
        PySeedTree { inner: self.inner.subtree(index) }
    }

    #[getter]
    fn master(&self) -> u64 {
        self.inner.master()
    }
}

/// Runs one Bernoulli-model trajectory and returns a dict with the final
/// observable moments, the measurement record, and the l1-coherence.
#[pyfunction]
#[pyo3(signature = (l, p_ctrl, mode, circuit, trajectory, seed, t_max=None))]
fn run_bernoulli_trajectory(
    py: Python<'_>,
    l: u32,
    p_ctrl: f64,
    mode: &str,
    circuit: u64,
    trajectory: u64,
    seed: u64,
    t_max: Option<u32>,
) -> PyResult<Py<PyDict>> {
    let mode = match mode {
        "classical" => Mode::Classical,
        "quantum" => Mode::Quantum,
        _ => return Err(PyValueError::new_err(format!("unknown mode: {mode}"))),
    };
    let t_max = t_max.unwrap_or_else(|| default_t_max(l));
    let tree = SeedTree::new(seed);
    let circ = generate_circuit(l, p_ctrl, t_max, mode, &mut tree.circuit_stream(circuit))
        .map_err(err)?;
    let record = RecordSpec {
        times: vec![t_max],
        coherence: mode == Mode::Quantum,
        ..Default::default()
    };
    let mut rng = tree.trajectory_stream(circuit, trajectory);
    let stream = (mode == Mode::Quantum).then_some(&mut rng);
    let (rec, _) = run_trajectory(&circ, (1 << l) - 1, stream, &record).map_err(err)?;
    let s = &rec.series[0];
    let out = PyDict::new_bound(py);
    out.set_item("k_mean", s.k_mean)?;
    out.set_item("k_second", s.k_second)?;
    out.set_item("mz_mean", s.mz_mean)?;
    out.set_item("mz_second", s.mz_second)?;
    out.set_item("coherence", s.coherence)?;
    out.set_item("outcomes", rec.outcomes)?;
    Ok(out.into())
}

/// Splits total fluctuations into circuit / trajectory / shot contributions.
/// `samples` is a list of (circuit, trajectory, mean, second_moment).
#[pyfunction]
#[pyo3(signature = (samples, eps=1e-5))]
fn decompose(py: Python<'_>, samples: Vec<(u32, u32, f64, f64)>, eps: f64) -> PyResult<Py<PyDict>> {
    let nested: Vec<NestedSample> = samples
        .into_iter()
        .map(|(circuit, trajectory, mean, second)| NestedSample { circuit, trajectory, mean, second })
        .collect();
    let d = decompose_variance(&nested, eps).map_err(err)?;
    let out = PyDict::new_bound(py);
    out.set_item("mean", d.mean)?;
    out.set_item("var_total", d.var_total)?;
    out.set_item("var_circuit", d.var_circuit)?;
    out.set_item("var_quantum", d.mean_var_quantum)?;
    out.set_item("var_traj", d.mean_var_traj)?;
    out.set_item("var_shot", d.mean_var_shot)?;
    out.set_item("order_traj", d.order_traj)?;
    out.set_item("order_shot", d.order_shot)?;
    out.set_item("order_quantum", d.order_quantum)?;
    Ok(out.into())
}

/// Finite-size-scaling collapse of (l, p, value, stderr) points.
#[pyfunction]
#[pyo3(signature = (points, fit_beta=true, u_max=2.0, n_bootstrap=100, seed=7, p_c_fixed=None, size_correction=false))]
#[allow(clippy::too_many_arguments)]
fn collapse(
    py: Python<'_>,
    points: Vec<(u32, f64, f64, f64)>,
    fit_beta: bool,
    u_max: f64,
    n_bootstrap: usize,
    seed: u64,
    p_c_fixed: Option<f64>,
    size_correction: bool,
) -> PyResult<Py<PyDict>> {
    let data: Vec<ScalingPoint> = points
        .into_iter()
        .map(|(l, p, value, stderr)| ScalingPoint { l, p, value, stderr })
        .collect();
    let opts = CollapseOptions { fit_beta, u_max, n_bootstrap, seed, p_c_fixed, size_correction };
    let fit = fss_collapse(&data, &opts).map_err(err)?;
    let out = PyDict::new_bound(py);
    out.set_item("nu", fit.nu)?;
    out.set_item("nu_err", fit.nu_err)?;
    out.set_item("p_c", fit.p_c)?;
    out.set_item("p_c_err", fit.p_c_err)?;
    out.set_item("beta", fit.beta)?;
    out.set_item("beta_err", fit.beta_err)?;
    out.set_item("correction", fit.correction)?;
    out.set_item("objective", fit.objective)?;
    out.set_item("n_points_used", fit.n_points_used)?;
    Ok(out.into())
}

#[pymodule]
fn cipt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPureState>()?;
    m.add_class::<PySeedTree>()?;
    m.add_function(wrap_pyfunction!(fdw, m)?)?;
    m.add_function(wrap_pyfunction!(magnetization, m)?)?;
    m.add_function(wrap_pyfunction!(defect_density, m)?)?;
    m.add_function(wrap_pyfunction!(run_bernoulli_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(collapse, m)?)?;
    Ok(())
}
