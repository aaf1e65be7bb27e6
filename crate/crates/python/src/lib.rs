//! Python bindings: key rates, trusted-noise optimisation, the LO-gain
//! attack and the pulse-level Monte Carlo.

use cvqkd_lab::attack::{constant_total_noise_scenario, rate_gap};
use cvqkd_lab::montecarlo::{
    estimate_parameters, normalize_batch, LoProfile, Normalization, PulseBatch, Simulation, StabilizerConfig,
};
use cvqkd_lab::optimizer::{self, FrontierOptions};
use cvqkd_lab::{keyrate, model, Error, Protocol};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(cvqkd_lab, SolverError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::LengthMismatch { .. } => PyValueError::new_err(e.to_string()),
        other => SolverError::new_err(other.to_string()),
    }
}

#[pyclass(name = "ProtocolParams", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyProtocolParams(model::ProtocolParams);

#[pymethods]
impl PyProtocolParams {
    #[new]
    #[pyo3(signature = (v, beta = 1.0))]
    fn new(v: f64, beta: f64) -> PyResult<Self> {
        model::ProtocolParams::new(v, beta).map(Self).map_err(to_py)
    }

    #[getter]
    fn v(&self) -> f64 {
        self.0.v()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta()
    }

    #[getter]
    fn modulation_variance(&self) -> f64 {
        self.0.modulation_variance()
    }

    fn __repr__(&self) -> String {
        format!("ProtocolParams(v={}, beta={})", self.0.v(), self.0.beta())
    }
}

#[pyclass(name = "ChannelModel", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyChannelModel(model::ChannelModel);

#[pymethods]
impl PyChannelModel {
    #[staticmethod]
    #[pyo3(signature = (loss_db, excess_noise = 0.0))]
    fn from_loss_db(loss_db: f64, excess_noise: f64) -> PyResult<Self> {
        model::ChannelModel::from_loss_db(loss_db, excess_noise).map(Self).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (transmission, excess_noise = 0.0))]
    fn from_transmission(transmission: f64, excess_noise: f64) -> PyResult<Self> {
        model::ChannelModel::from_transmission(transmission, excess_noise)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn loss_db(&self) -> f64 {
        self.0.loss_db()
    }

    #[getter]
    fn transmission(&self) -> f64 {
        self.0.transmission()
    }

    #[getter]
    fn excess_noise(&self) -> f64 {
        self.0.excess_noise()
    }

    /// `(1 - T)/T + eps`
    #[getter]
    fn added_noise(&self) -> f64 {
        self.0.added_noise()
    }

    fn __repr__(&self) -> String {
        format!(
            "ChannelModel(transmission={}, excess_noise={})",
            self.0.transmission(),
            self.0.excess_noise()
        )
    }
}

#[pyclass(name = "DetectorModel", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyDetectorModel(model::DetectorModel);

#[pymethods]
impl PyDetectorModel {
    #[new]
    #[pyo3(signature = (eta, n_el, lo_gain = 1.0))]
    fn new(eta: f64, n_el: f64, lo_gain: f64) -> PyResult<Self> {
        model::DetectorModel::new(eta, n_el)
            .and_then(|d| d.with_lo_gain(lo_gain))
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.0.eta()
    }

    #[getter]
    fn n_el_cal(&self) -> f64 {
        self.0.n_el_cal()
    }

    #[getter]
    fn lo_gain(&self) -> f64 {
        self.0.lo_gain()
    }

    #[getter]
    fn effective_n_el(&self) -> f64 {
        self.0.effective_n_el()
    }

    /// `(1 - eta)/eta + N_el/eta`
    #[getter]
    fn added_noise(&self) -> f64 {
        self.0.added_noise()
    }

    fn __repr__(&self) -> String {
        format!(
            "DetectorModel(eta={}, n_el={}, lo_gain={})",
            self.0.eta(),
            self.0.n_el_cal(),
            self.0.lo_gain()
        )
    }
}

#[pyclass(name = "KeyRateBreakdown", frozen, get_all)]
struct PyKeyRateBreakdown {
    i_ab: f64,
    s_e: f64,
    s_e_given_b: f64,
    chi_be: f64,
    beta: f64,
    k_raw: f64,
    lambdas: Vec<f64>,
    chi_be_clamped: bool,
}

#[pymethods]
impl PyKeyRateBreakdown {
    fn k_clamped(&self) -> f64 {
        self.k_raw.max(0.0)
    }

    fn __repr__(&self) -> String {
        format!("KeyRateBreakdown(k_raw={}, i_ab={}, chi_be={})", self.k_raw, self.i_ab, self.chi_be)
    }
}

impl From<keyrate::KeyRateBreakdown> for PyKeyRateBreakdown {
    fn from(k: keyrate::KeyRateBreakdown) -> Self {
        Self {
            i_ab: k.i_ab,
            s_e: k.s_e,
            s_e_given_b: k.s_e_given_b,
            chi_be: k.chi_be,
            beta: k.beta,
            k_raw: k.k_raw,
            lambdas: k.lambdas,
            chi_be_clamped: k.chi_be_clamped,
        }
    }
}

fn protocol(name: &str, detector: Option<PyRef<'_, PyDetectorModel>>) -> PyResult<Protocol> {
    match (name, detector) {
        ("perfect_homodyne", _) => Ok(Protocol::PerfectHomodyne),
        ("heterodyne", _) => Ok(Protocol::Heterodyne),
        ("noisy_homodyne", Some(d)) => Ok(Protocol::NoisyHomodyne(d.0)),
        ("noisy_homodyne", None) => Err(PyValueError::new_err("noisy_homodyne needs a detector")),
        _ => Err(PyValueError::new_err(format!(
            "unknown protocol {name:?}; use perfect_homodyne, heterodyne or noisy_homodyne"
        ))),
    }
}

/// Reverse-reconciliation key rate in bits per pulse.
#[pyfunction]
#[pyo3(signature = (protocol_name, params, channel, detector = None))]
fn key_rate(
    protocol_name: &str,
    params: PyRef<'_, PyProtocolParams>,
    channel: PyRef<'_, PyChannelModel>,
    detector: Option<PyRef<'_, PyDetectorModel>>,
) -> PyResult<PyKeyRateBreakdown> {
    let p = protocol(protocol_name, detector)?;
    keyrate::key_rate(&p, &params.0, &channel.0).map(Into::into).map_err(to_py)
}

/// Noisy-homodyne key rate with trusted added noise `chi_d`.
#[pyfunction]
fn key_rate_with_added_noise(
    params: PyRef<'_, PyProtocolParams>,
    channel: PyRef<'_, PyChannelModel>,
    chi_d: f64,
) -> PyResult<PyKeyRateBreakdown> {
    keyrate::key_rate_with_added_noise(&params.0, &channel.0, chi_d)
        .map(Into::into)
        .map_err(to_py)
}

#[pyfunction]
fn g_entropy(x: f64) -> PyResult<f64> {
    model::g_entropy(x).map_err(to_py)
}

#[pyfunction]
fn db_to_transmission(loss_db: f64) -> PyResult<f64> {
    model::db_to_transmission(loss_db).map_err(to_py)
}

#[pyfunction]
fn transmission_to_db(transmission: f64) -> PyResult<f64> {
    model::transmission_to_db(transmission).map_err(to_py)
}

/// Returns `(chi_d, key_rate, key_rate_at_zero)`.
#[pyfunction]
#[pyo3(signature = (params, channel, chi_d_max = optimizer::DEFAULT_CHI_D_MAX))]
fn optimal_added_noise(
    params: PyRef<'_, PyProtocolParams>,
    channel: PyRef<'_, PyChannelModel>,
    chi_d_max: f64,
) -> PyResult<(f64, f64, f64)> {
    let o = optimizer::optimal_added_noise(&params.0, &channel.0, chi_d_max).map_err(to_py)?;
    Ok((o.chi_d, o.key_rate, o.key_rate_at_zero))
}

#[pyclass(name = "FrontierPoint", frozen, get_all)]
struct PyFrontierPoint {
    loss_db: f64,
    eps_max: f64,
    chi_d_star: f64,
    rate_at_root: f64,
    converged: bool,
    iterations: usize,
    no_key: bool,
    bracket_verified: bool,
}

#[pymethods]
impl PyFrontierPoint {
    fn __repr__(&self) -> String {
        format!(
            "FrontierPoint(loss_db={}, eps_max={}, chi_d_star={}, converged={})",
            self.loss_db, self.eps_max, self.chi_d_star, self.converged
        )
    }
}

/// Largest excess noise with a non-negative key rate.
#[pyfunction]
#[pyo3(signature = (protocol_name, params, loss_db, detector = None, optimize_chi_d = false, chi_d_max = optimizer::DEFAULT_CHI_D_MAX))]
fn tolerable_excess_noise(
    protocol_name: &str,
    params: PyRef<'_, PyProtocolParams>,
    loss_db: f64,
    detector: Option<PyRef<'_, PyDetectorModel>>,
    optimize_chi_d: bool,
    chi_d_max: f64,
) -> PyResult<PyFrontierPoint> {
    // The optimised frontier does not depend on the detector.
    let detector = match (protocol_name, detector) {
        ("noisy_homodyne", None) if optimize_chi_d => Some(model::DetectorModel::ideal()),
        (_, d) => d.map(|d| d.0),
    };
    let p = match (protocol_name, detector) {
        ("noisy_homodyne", Some(d)) => Protocol::NoisyHomodyne(d),
        (name, _) => protocol(name, None)?,
    };
    let opts = FrontierOptions {
        chi_d_max,
        ..FrontierOptions::default()
    };
    let f = optimizer::tolerable_excess_noise(&p, &params.0, loss_db, optimize_chi_d, &opts).map_err(to_py)?;
    Ok(PyFrontierPoint {
        loss_db: f.loss_db,
        eps_max: f.eps_max,
        chi_d_star: f.chi_d_star,
        rate_at_root: f.rate_at_root,
        converged: f.converged,
        iterations: f.iterations,
        no_key: f.no_key,
        bracket_verified: f.bracket_verified(),
    })
}

fn gain_dict<'py>(py: Python<'py>, plan: optimizer::GainPlan) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("chi_d_star", plan.chi_d_star)?;
    d.set_item("n_el_target", plan.n_el_target)?;
    d.set_item("gain", plan.gain)?;
    d.set_item("within_hardware_range", plan.within_hardware_range)?;
    Ok(d)
}

/// LO gain that brings the normalized electronic noise to `n_el_target`.
#[pyfunction]
fn gain_for_electronic_noise<'py>(
    py: Python<'py>,
    detector: PyRef<'_, PyDetectorModel>,
    n_el_target: f64,
) -> PyResult<Bound<'py, PyDict>> {
    gain_dict(py, optimizer::gain_for_electronic_noise(&detector.0, n_el_target).map_err(to_py)?)
}

/// LO gain that realises the trusted added noise `chi_d_star`.
#[pyfunction]
fn gain_for_target_noise<'py>(
    py: Python<'py>,
    detector: PyRef<'_, PyDetectorModel>,
    chi_d_star: f64,
) -> PyResult<Bound<'py, PyDict>> {
    gain_dict(py, optimizer::gain_for_target_noise(&detector.0, chi_d_star).map_err(to_py)?)
}

/// Believed and true key rates when an LO gain hides electronic noise as
/// excess noise. Returns `(k_believed, k_true, gap)`.
#[pyfunction]
fn attack_rate_gap(
    params: PyRef<'_, PyProtocolParams>,
    channel: PyRef<'_, PyChannelModel>,
    n_el_cal: f64,
    eta: f64,
    gain: f64,
) -> PyResult<(f64, f64, f64)> {
    let s = constant_total_noise_scenario(channel.0.excess_noise(), n_el_cal, eta, &channel.0, gain)
        .map_err(to_py)?;
    let g = rate_gap(&s, &params.0).map_err(to_py)?;
    Ok((g.k_believed, g.k_true, g.gap))
}

#[pyclass(name = "PulseBatch", frozen, skip_from_py_object)]
struct PyPulseBatch(PulseBatch);

#[pymethods]
impl PyPulseBatch {
    fn __len__(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn x_a(&self) -> Vec<f64> {
        self.0.x_a.clone()
    }

    #[getter]
    fn p_a(&self) -> Vec<f64> {
        self.0.p_a.clone()
    }

    /// Alice's quadrature matching Bob's choice on each pulse.
    fn matched_alice(&self) -> Vec<f64> {
        self.0.matched_alice()
    }

    #[getter]
    fn lo_intensity(&self) -> Vec<f64> {
        self.0.lo_intensity.clone()
    }

    #[getter]
    fn raw_output(&self) -> Vec<f64> {
        self.0.raw_output.clone()
    }

    #[getter]
    fn saturated_count(&self) -> usize {
        self.0.saturated_count()
    }

    /// Normalized outcomes in SNU, `"instantaneous"` or `"calibrated"`.
    #[pyo3(signature = (detector, scheme = "instantaneous"))]
    fn normalize(&self, detector: PyRef<'_, PyDetectorModel>, scheme: &str) -> PyResult<Vec<f64>> {
        normalize_batch(&self.0, &detector.0, normalization(scheme)?).map_err(to_py)
    }
}

fn normalization(scheme: &str) -> PyResult<Normalization> {
    match scheme {
        "instantaneous" => Ok(Normalization::Instantaneous),
        "calibrated" => Ok(Normalization::Calibrated),
        _ => Err(PyValueError::new_err(format!("unknown normalization {scheme:?}"))),
    }
}

/// Pulse-level simulation with a constant LO gain, optionally stabilised.
#[pyfunction]
#[pyo3(signature = (params, channel, detector, n, seed, gain = 1.0, stabilize = false))]
fn simulate_batch(
    py: Python<'_>,
    params: PyRef<'_, PyProtocolParams>,
    channel: PyRef<'_, PyChannelModel>,
    detector: PyRef<'_, PyDetectorModel>,
    n: usize,
    seed: u64,
    gain: f64,
    stabilize: bool,
) -> PyResult<PyPulseBatch> {
    let mut sim = Simulation::new(params.0, channel.0, detector.0, LoProfile::Constant(gain));
    if stabilize {
        sim = sim.with_stabilizer(StabilizerConfig::for_detector(&detector.0));
    }
    py.detach(|| sim.run(n, seed)).map(PyPulseBatch).map_err(to_py)
}

/// Estimates `eta T` and the excess noise from matched Alice values and
/// Bob's normalized outcomes, trusting `detector`.
#[pyfunction]
#[pyo3(signature = (alice, bob, detector, true_transmission = None))]
fn estimate<'py>(
    py: Python<'py>,
    alice: Vec<f64>,
    bob: Vec<f64>,
    detector: PyRef<'_, PyDetectorModel>,
    true_transmission: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = estimate_parameters(&alice, &bob, &detector.0, true_transmission).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("eta_t_hat", r.eta_t_hat)?;
    d.set_item("t_hat", r.t_hat)?;
    d.set_item("eps_hat", r.eps_hat)?;
    d.set_item("var_a", r.var_a)?;
    d.set_item("var_y", r.var_y)?;
    d.set_item("cov_ay", r.cov_ay)?;
    d.set_item("n_used", r.n_used)?;
    d.set_item("blocks", r.blocks)?;
    d.set_item("eps_hat_known_t", r.eps_hat_known_t)?;
    let se = PyDict::new(py);
    se.set_item("eta_t_hat", r.standard_errors.eta_t_hat)?;
    se.set_item("t_hat", r.standard_errors.t_hat)?;
    se.set_item("eps_hat", r.standard_errors.eps_hat)?;
    se.set_item("var_y", r.standard_errors.var_y)?;
    se.set_item("cov_ay", r.standard_errors.cov_ay)?;
    se.set_item("eps_hat_known_t", r.eps_hat_known_t_se)?;
    d.set_item("standard_errors", se)?;
    Ok(d)
}

#[pymodule(name = "cvqkd_lab")]
fn cvqkd_lab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_class::<PyProtocolParams>()?;
    m.add_class::<PyChannelModel>()?;
    m.add_class::<PyDetectorModel>()?;
    m.add_class::<PyKeyRateBreakdown>()?;
    m.add_class::<PyFrontierPoint>()?;
    m.add_class::<PyPulseBatch>()?;
    m.add_function(wrap_pyfunction!(key_rate, m)?)?;
    m.add_function(wrap_pyfunction!(key_rate_with_added_noise, m)?)?;
    m.add_function(wrap_pyfunction!(g_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(db_to_transmission, m)?)?;
    m.add_function(wrap_pyfunction!(transmission_to_db, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_added_noise, m)?)?;
    m.add_function(wrap_pyfunction!(tolerable_excess_noise, m)?)?;
    m.add_function(wrap_pyfunction!(gain_for_electronic_noise, m)?)?;
    m.add_function(wrap_pyfunction!(gain_for_target_noise, m)?)?;
    m.add_function(wrap_pyfunction!(attack_rate_gap, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_batch, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    Ok(())
}
