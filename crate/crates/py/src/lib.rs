//! Python bindings for the leakage-prediction core.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rdz_core::config::parse_config;
use rdz_core::estimation::{estimate_parameters, EstimationOptions, VariogramSource};
use rdz_core::experiments::{run_nmse_sweep, run_power_cdf_sweep, run_rmse_sweep};
use rdz_core::geometry::adjacent_sensor_distance;
use rdz_core::kriging::{baseline_power, KrigingOptions, Predictor};
use rdz_core::propagation::synthesize_measurements;
use rdz_core::{CorrelationParams, FieldPoint, PolarLocation, PropagationParams};

fn py_err(e: rdz_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "ZoneConfig", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyZoneConfig {
    inner: rdz_core::ZoneConfig,
}

#[pymethods]
impl PyZoneConfig {
    #[new]
    #[pyo3(signature = (r0_m=500.0, rg_m=50.0, phi_delta_deg=10.0, n_tx=3))]
    fn new(r0_m: f64, rg_m: f64, phi_delta_deg: f64, n_tx: usize) -> PyResult<Self> {
        let inner = rdz_core::ZoneConfig::from_degrees(r0_m, rg_m, phi_delta_deg, n_tx).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.inner.r0()
    }

    #[getter]
    fn rg(&self) -> f64 {
        self.inner.rg()
    }

    #[getter]
    fn phi_delta_deg(&self) -> f64 {
        self.inner.phi_delta_deg()
    }

    #[getter]
    fn n_tx(&self) -> usize {
        self.inner.n_tx()
    }

    #[getter]
    fn n_sensors(&self) -> usize {
        self.inner.n_sensors()
    }

    /// Distance between neighbouring sensors in metres.
    fn sensor_spacing(&self) -> f64 {
        adjacent_sensor_distance(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "ZoneConfig(r0_m={}, rg_m={}, phi_delta_deg={}, n_tx={})",
            self.inner.r0(),
            self.inner.rg(),
            self.inner.phi_delta_deg(),
            self.inner.n_tx()
        )
    }
}

#[pyclass(name = "Layout", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLayout {
    inner: rdz_core::ZoneLayout,
}

#[pymethods]
impl PyLayout {
    /// Transmitters given as `(r_m, phi_rad)` pairs.
    #[new]
    fn new(config: &PyZoneConfig, transmitters: Vec<(f64, f64)>) -> PyResult<Self> {
        let txs = transmitters
            .into_iter()
            .map(|(r, p)| PolarLocation::new(r, p))
            .collect();
        let inner = rdz_core::ZoneLayout::new(config.inner, txs).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn random(config: &PyZoneConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            inner: rdz_core::ZoneLayout::random(config.inner, &mut rng),
        }
    }

    #[getter]
    fn config(&self) -> PyZoneConfig {
        PyZoneConfig {
            inner: *self.inner.config(),
        }
    }

    #[getter]
    fn transmitters(&self) -> Vec<(f64, f64)> {
        self.inner.transmitters().iter().map(|t| (t.r(), t.phi())).collect()
    }

    #[getter]
    fn sensors(&self) -> Vec<(f64, f64)> {
        self.inner.sensors().iter().map(|s| (s.r(), s.phi())).collect()
    }

    /// `[tx][sensor]` distances in metres.
    fn distances(&self) -> Vec<Vec<f64>> {
        self.inner.tx_sensor_distances()
    }
}

#[pyclass(name = "Correlation", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCorrelation {
    inner: CorrelationParams,
}

#[pymethods]
impl PyCorrelation {
    #[new]
    #[pyo3(signature = (sigma_w_db=8.0, d_cor_m=100.0, a=0.7, b=0.3))]
    fn new(sigma_w_db: f64, d_cor_m: f64, a: f64, b: f64) -> PyResult<Self> {
        let inner = CorrelationParams::new(sigma_w_db, d_cor_m, a, b).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn sigma_w(&self) -> f64 {
        self.inner.sigma_w
    }

    #[getter]
    fn d_cor(&self) -> f64 {
        self.inner.d_cor
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }
}

#[pyclass(name = "Measurements", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMeasurements {
    inner: rdz_core::MeasurementSet,
}

#[pymethods]
impl PyMeasurements {
    /// Wraps measured powers `[tx][sensor]` in dBm.
    #[new]
    fn new(layout: &PyLayout, powers: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = rdz_core::MeasurementSet::new(layout.inner.clone(), powers, None).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn powers(&self) -> Vec<Vec<f64>> {
        self.inner.powers().to_vec()
    }

    #[getter]
    fn shadowing(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.shadowing().map(<[Vec<f64>]>::to_vec)
    }

    #[getter]
    fn layout(&self) -> PyLayout {
        PyLayout {
            inner: self.inner.layout().clone(),
        }
    }

    #[getter]
    fn n_tx(&self) -> usize {
        self.inner.n_tx()
    }

    #[getter]
    fn n_sensors(&self) -> usize {
        self.inner.n_sensors()
    }
}

#[pyclass(name = "FittedParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFittedParams {
    inner: rdz_core::FittedParams,
}

#[pymethods]
impl PyFittedParams {
    #[staticmethod]
    #[pyo3(signature = (eta=3.5, correlation=None))]
    fn from_truth(eta: f64, correlation: Option<&PyCorrelation>) -> Self {
        let corr = correlation.map_or_else(CorrelationParams::nominal, |c| c.inner);
        Self {
            inner: rdz_core::FittedParams::from_truth(eta, &corr),
        }
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn sigma_w(&self) -> f64 {
        self.inner.sigma_w
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn d_cor(&self) -> f64 {
        self.inner.d_cor
    }

    #[getter]
    fn sill(&self) -> f64 {
        self.inner.sill
    }

    #[getter]
    fn range(&self) -> f64 {
        self.inner.range
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "FittedParams(eta={}, sigma_w={}, a={}, b={}, d_cor={})",
            p.eta, p.sigma_w, p.a, p.b, p.d_cor
        )
    }
}

/// Draws one measurement realisation.
#[pyfunction]
#[pyo3(signature = (layout, seed, p_tx_dbm=30.0, eta=3.5, correlation=None))]
fn simulate(
    layout: &PyLayout,
    seed: u64,
    p_tx_dbm: f64,
    eta: f64,
    correlation: Option<&PyCorrelation>,
) -> PyResult<PyMeasurements> {
    let prop = PropagationParams::new(p_tx_dbm, eta).map_err(py_err)?;
    let corr = correlation.map_or_else(CorrelationParams::nominal, |c| c.inner);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = synthesize_measurements(&layout.inner, &prop, &corr, &mut rng).map_err(py_err)?;
    Ok(PyMeasurements { inner })
}

/// Fits η, σ_w, (A, B) and d_cor.
#[pyfunction]
#[pyo3(signature = (measurements, p_tx_dbm=30.0, variogram_source="residuals"))]
fn estimate(measurements: &PyMeasurements, p_tx_dbm: f64, variogram_source: &str) -> PyResult<PyFittedParams> {
    let source: VariogramSource = variogram_source.parse().map_err(PyValueError::new_err)?;
    let options = EstimationOptions {
        variogram_source: source,
        ..Default::default()
    };
    let inner = estimate_parameters(&measurements.inner, p_tx_dbm, &options).map_err(py_err)?;
    Ok(PyFittedParams { inner })
}

/// Kriging and path-loss predictions for every transmitter at one target.
/// `regularization = 0` gives an exact interpolator.
#[pyfunction]
#[pyo3(signature = (measurements, fitted, target_phi_deg, target_r_m=None, p_tx_dbm=30.0, k_s=6, regularization=1e-9))]
#[allow(clippy::too_many_arguments)]
fn predict<'py>(
    py: Python<'py>,
    measurements: &PyMeasurements,
    fitted: &PyFittedParams,
    target_phi_deg: f64,
    target_r_m: Option<f64>,
    p_tx_dbm: f64,
    k_s: usize,
    regularization: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let layout = measurements.inner.layout();
    let target = PolarLocation::from_degrees(target_r_m.unwrap_or(layout.config().r0()), target_phi_deg);
    let options = KrigingOptions {
        local_sensors: k_s,
        regularization,
    };
    let predictor = Predictor::new(&measurements.inner, fitted.inner, p_tx_dbm, options).map_err(py_err)?;
    (0..layout.n_tx())
        .map(|tx| {
            let point = FieldPoint::new(tx, target);
            let sol = predictor.predict(&point).map_err(py_err)?;
            let base = baseline_power(&point, layout, &fitted.inner, p_tx_dbm).map_err(py_err)?;
            let d = PyDict::new(py);
            d.set_item("tx_id", tx + 1)?;
            d.set_item("y_krige_dbm", sol.predicted_power)?;
            d.set_item("y_baseline_dbm", base)?;
            d.set_item("weights", sol.weights)?;
            d.set_item("fallback", sol.fallback)?;
            Ok(d)
        })
        .collect()
}

/// Runs `rmse`, `nmse` or `cdf` from configuration text and returns one
/// dict per sweep point.
#[pyfunction]
#[pyo3(signature = (kind, config_text="", workers=1))]
fn run_experiment<'py>(
    py: Python<'py>,
    kind: &str,
    config_text: &str,
    workers: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = parse_config(config_text).map_err(py_err)?;
    cfg.workers = workers.max(1);
    let mut rows = Vec::new();
    match kind {
        "rmse" => {
            for r in run_rmse_sweep(&cfg).map_err(py_err)?.rows {
                let d = PyDict::new(py);
                d.set_item("r0_m", r.r0)?;
                d.set_item("phi_delta_deg", r.phi_delta_deg)?;
                d.set_item("rmse_krige_db", r.rmse_krige)?;
                d.set_item("rmse_baseline_db", r.rmse_baseline)?;
                d.set_item("n_failed", r.failed)?;
                rows.push(d);
            }
        }
        "nmse" => {
            for r in run_nmse_sweep(&cfg).map_err(py_err)?.rows {
                let d = PyDict::new(py);
                d.set_item("r0_m", r.r0)?;
                d.set_item("phi_delta_deg", r.phi_delta_deg)?;
                d.set_item("nmse_eta", r.nmse.eta)?;
                d.set_item("nmse_a", r.nmse.a)?;
                d.set_item("nmse_b", r.nmse.b)?;
                d.set_item("nmse_d_cor", r.nmse.d_cor)?;
                d.set_item("mean_d_cor_m", r.mean.d_cor)?;
                rows.push(d);
            }
        }
        "cdf" => {
            for r in run_power_cdf_sweep(&cfg).map_err(py_err)?.rows {
                let d = PyDict::new(py);
                d.set_item("rg_m", r.rg)?;
                d.set_item("n_samples", r.cdf.len())?;
                d.set_item("p90_dbm", r.p90())?;
                rows.push(d);
            }
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown experiment `{other}` (rmse|nmse|cdf)"
            )))
        }
    }
    Ok(rows)
}

#[pymodule]
fn rdz_leakage(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyZoneConfig>()?;
    m.add_class::<PyLayout>()?;
    m.add_class::<PyCorrelation>()?;
    m.add_class::<PyMeasurements>()?;
    m.add_class::<PyFittedParams>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
