//! Monte Carlo sweeps: power CDF versus guard width, sensor spacing table,
//! Kriging/baseline RMSE and estimator NMSE.
//!
//! Iteration `i` of every sweep point draws from the ChaCha stream `i` of a
//! key derived from the master seed and the experiment kind. Sweep points
//! therefore share random numbers (same transmitter draws, same target
//! azimuths), and results do not depend on the worker count.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{estimate_parameters, EstimationOptions, FittedParams, VariogramSource};
use crate::geometry::{adjacent_sensor_distance, chord_length, PolarLocation, ZoneConfig, ZoneLayout};
use crate::kriging::{baseline_power, KrigingOptions, Predictor, DEFAULT_LOCAL_SENSORS};
use crate::propagation::{synthesize_measurements, synthesize_with_targets, PropagationParams};
use crate::shadowing::{CorrelationParams, FieldPoint};
use crate::stats::{CompensatedSum, EmpiricalCdf};

/// Where the Kriging model parameters come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParamMode {
    /// Fitted from each iteration's measurements.
    #[default]
    Estimated,
    /// The true simulation parameters.
    Oracle,
}

impl std::str::FromStr for ParamMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "estimated" => Ok(Self::Estimated),
            "oracle" => Ok(Self::Oracle),
            other => Err(format!("unknown mode `{other}` (estimated|oracle)")),
        }
    }
}

impl std::fmt::Display for ParamMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Estimated => "estimated",
            Self::Oracle => "oracle",
        })
    }
}

/// Parameters shared by every experiment. Each sweep reads the lists it
/// needs: RMSE and NMSE iterate over `r0_values × phi_delta_deg_values`, the
/// CDF over `rg_values`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub propagation: PropagationParams,
    pub correlation: CorrelationParams,
    pub n_tx: usize,
    pub r0_values: Vec<f64>,
    /// Guard width for the RMSE/NMSE sweeps; `None` uses `R0 / 10`.
    pub rg: Option<f64>,
    pub phi_delta_deg_values: Vec<f64>,
    pub rg_values: Vec<f64>,
    pub cdf_r0: f64,
    pub cdf_phi_delta_deg: f64,
    pub cdf_samples: usize,
    pub spacing_r0_values: Vec<f64>,
    pub n_iterations: usize,
    pub master_seed: u64,
    pub local_sensors: usize,
    pub mode: ParamMode,
    pub variogram_source: VariogramSource,
    pub max_lag: usize,
    /// Targets sit at `R0 + offset` from the centre.
    pub target_radial_offset: f64,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            propagation: PropagationParams::nominal(),
            correlation: CorrelationParams::nominal(),
            n_tx: 3,
            r0_values: vec![500.0, 1000.0],
            rg: None,
            phi_delta_deg_values: vec![5.0, 10.0, 15.0, 20.0, 30.0],
            rg_values: vec![50.0, 150.0, 300.0],
            cdf_r0: 500.0,
            cdf_phi_delta_deg: 10.0,
            cdf_samples: 20_000,
            spacing_r0_values: (1..=20).map(|i| 100.0 * i as f64).collect(),
            n_iterations: 2000,
            master_seed: 2024,
            local_sensors: DEFAULT_LOCAL_SENSORS,
            mode: ParamMode::Estimated,
            variogram_source: VariogramSource::Residuals,
            max_lag: 3,
            target_radial_offset: 0.0,
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn rg_for(&self, r0: f64) -> f64 {
        self.rg.unwrap_or(r0 / 10.0)
    }

    pub fn zone(&self, r0: f64, phi_delta_deg: f64) -> Result<ZoneConfig> {
        ZoneConfig::from_degrees(r0, self.rg_for(r0), phi_delta_deg, self.n_tx)
    }

    pub fn estimation_options(&self) -> EstimationOptions {
        EstimationOptions {
            variogram_source: self.variogram_source,
            max_lag: self.max_lag,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.correlation.validate()?;
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.r0_values.is_empty() || self.phi_delta_deg_values.is_empty() || self.rg_values.is_empty() {
            return bad("sweep value lists must be non-empty");
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be at least 1");
        }
        if self.cdf_samples == 0 {
            return bad("cdf_samples must be at least 1");
        }
        if self.local_sensors == 0 {
            return bad("k_s must be at least 1");
        }
        if self.max_lag < 2 {
            return bad("max_lag must be at least 2");
        }
        if !(self.target_radial_offset.is_finite() && self.target_radial_offset >= 0.0) {
            return bad("target_radial_offset_m must be >= 0");
        }
        for &r0 in &self.r0_values {
            for &deg in &self.phi_delta_deg_values {
                let z = self.zone(r0, deg)?;
                if self.local_sensors > z.n_sensors() {
                    return Err(Error::InvalidParams(format!(
                        "k_s = {} exceeds the {} sensors at {deg}°",
                        self.local_sensors,
                        z.n_sensors()
                    )));
                }
                if self.max_lag >= z.n_sensors() {
                    return Err(Error::InvalidParams(format!(
                        "max_lag must be below K = {}",
                        z.n_sensors()
                    )));
                }
            }
        }
        for &rg in &self.rg_values {
            ZoneConfig::from_degrees(self.cdf_r0, rg, self.cdf_phi_delta_deg, self.n_tx)?;
        }
        if self.spacing_r0_values.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("spacing radii must be > 0");
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Experiment kinds get separate key spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Rmse = 1,
    Nmse = 2,
    Cdf = 3,
}

/// Generator for one Monte Carlo iteration.
pub fn iteration_rng(master_seed: u64, experiment: Experiment, iteration: u64) -> ChaCha8Rng {
    let key = splitmix64(master_seed ^ splitmix64(experiment as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(iteration);
    rng
}

fn run_parallel<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// One transmitter's prediction at one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub r0: f64,
    pub phi_delta_deg: f64,
    pub iteration: usize,
    pub target_phi: f64,
    pub tx: usize,
    pub y_true: f64,
    pub y_krige: f64,
    pub y_baseline: f64,
    pub n_local: usize,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub r0: f64,
    pub rg: f64,
    pub phi_delta_deg: f64,
    pub n_sensors: usize,
    pub iterations: usize,
    /// Iterations whose parameter fit failed; they contribute no errors.
    pub failed: usize,
    pub fallbacks: usize,
    pub rmse_krige: f64,
    pub rmse_baseline: f64,
    pub rmse_krige_by_tx: Vec<f64>,
    pub rmse_baseline_by_tx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub rows: Vec<RmseRow>,
    pub predictions: Vec<PredictionRecord>,
}

fn rmse_of<I: IntoIterator<Item = f64>>(errors: I) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut n = 0usize;
    for e in errors {
        acc.add(e * e);
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (acc.value() / n as f64).sqrt()
    }
}

fn fitted_params(cfg: &ExperimentConfig, set: &crate::propagation::MeasurementSet) -> Option<FittedParams> {
    match cfg.mode {
        ParamMode::Oracle => Some(FittedParams::from_truth(cfg.propagation.eta, &cfg.correlation)),
        ParamMode::Estimated => match estimate_parameters(set, cfg.propagation.p_tx, &cfg.estimation_options()) {
            Ok(f) => Some(f),
            Err(e) => {
                log::warn!("parameter fit failed: {e}");
                None
            }
        },
    }
}

fn rmse_iteration(cfg: &ExperimentConfig, zone: ZoneConfig, iteration: usize) -> Result<Option<Vec<PredictionRecord>>> {
    let mut rng = iteration_rng(cfg.master_seed, Experiment::Rmse, iteration as u64);
    let layout = ZoneLayout::random(zone, &mut rng);
    let target_phi = TAU * rng.random::<f64>();
    let target = PolarLocation::new(zone.r0() + cfg.target_radial_offset, target_phi);
    let (set, truth) = synthesize_with_targets(&layout, &cfg.propagation, &cfg.correlation, &[target], &mut rng)?;
    let Some(fitted) = fitted_params(cfg, &set) else {
        return Ok(None);
    };
    let options = KrigingOptions {
        local_sensors: cfg.local_sensors,
        ..Default::default()
    };
    let predictor = Predictor::new(&set, fitted, cfg.propagation.p_tx, options)?;
    (0..layout.n_tx())
        .map(|tx| {
            let point = FieldPoint::new(tx, target);
            let sol = predictor.predict(&point)?;
            Ok(PredictionRecord {
                r0: zone.r0(),
                phi_delta_deg: zone.phi_delta_deg(),
                iteration,
                target_phi: target.phi(),
                tx,
                y_true: truth.powers[tx][0],
                y_krige: sol.predicted_power,
                y_baseline: baseline_power(&point, &layout, &fitted, cfg.propagation.p_tx)?,
                n_local: sol.n_local(),
                fallback: sol.fallback,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Kriging and baseline RMSE for every `(R0, φΔ)` pair, pooling the errors
/// of all transmitters.
pub fn run_rmse_sweep(cfg: &ExperimentConfig) -> Result<RmseReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    for &r0 in &cfg.r0_values {
        for &deg in &cfg.phi_delta_deg_values {
            let zone = cfg.zone(r0, deg)?;
            let results = run_parallel(cfg.workers, cfg.n_iterations, |i| rmse_iteration(cfg, zone, i))?;
            let failed = results.iter().filter(|r| r.is_none()).count();
            let records: Vec<PredictionRecord> = results.into_iter().flatten().flatten().collect();
            let by_tx = |tx: usize, pick: fn(&PredictionRecord) -> f64| {
                rmse_of(records.iter().filter(|p| p.tx == tx).map(|p| p.y_true - pick(p)))
            };
            rows.push(RmseRow {
                r0,
                rg: zone.rg(),
                phi_delta_deg: deg,
                n_sensors: zone.n_sensors(),
                iterations: cfg.n_iterations,
                failed,
                fallbacks: records.iter().filter(|p| p.fallback).count(),
                rmse_krige: rmse_of(records.iter().map(|p| p.y_true - p.y_krige)),
                rmse_baseline: rmse_of(records.iter().map(|p| p.y_true - p.y_baseline)),
                rmse_krige_by_tx: (0..cfg.n_tx).map(|t| by_tx(t, |p| p.y_krige)).collect(),
                rmse_baseline_by_tx: (0..cfg.n_tx).map(|t| by_tx(t, |p| p.y_baseline)).collect(),
            });
            predictions.extend(records);
        }
    }
    Ok(RmseReport { rows, predictions })
}

/// Checks that each reported RMSE squares to the mean of its recorded
/// squared errors. Returns the worst relative mismatch.
pub fn audit_rmse(report: &RmseReport) -> f64 {
    let mut worst = 0.0f64;
    for row in &report.rows {
        let recs: Vec<&PredictionRecord> = report
            .predictions
            .iter()
            .filter(|p| p.r0 == row.r0 && p.phi_delta_deg == row.phi_delta_deg)
            .collect();
        if recs.is_empty() {
            continue;
        }
        for (rmse, pick) in [
            (
                row.rmse_krige,
                (|p: &PredictionRecord| p.y_krige) as fn(&PredictionRecord) -> f64,
            ),
            (row.rmse_baseline, |p: &PredictionRecord| p.y_baseline),
        ] {
            let mse = recs.iter().map(|p| (p.y_true - pick(p)).powi(2)).sum::<f64>() / recs.len() as f64;
            let scale = mse.max(1e-300);
            worst = worst.max((rmse * rmse - mse).abs() / scale);
        }
    }
    worst
}

/// Estimates from one iteration of the NMSE sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRecord {
    pub eta: f64,
    pub a: f64,
    pub b: f64,
    pub d_cor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients<T> {
    pub eta: T,
    pub a: T,
    pub b: T,
    pub d_cor: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmseRow {
    pub r0: f64,
    pub phi_delta_deg: f64,
    pub n_sensors: usize,
    pub iterations: usize,
    pub failed: usize,
    pub nmse: Coefficients<f64>,
    pub mean: Coefficients<f64>,
    pub median_d_cor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmseReport {
    pub rows: Vec<NmseRow>,
    pub estimates: Vec<(f64, f64, usize, EstimateRecord)>,
}

/// `sqrt(mean(((truth − est) / truth)²))`; a zero truth falls back to the
/// absolute error.
pub fn normalized_rmse(truth: f64, estimates: &[f64]) -> f64 {
    let scale = if truth == 0.0 { 1.0 } else { truth.abs() };
    rmse_of(estimates.iter().map(|e| (truth - e) / scale))
}

/// Per-coefficient NMSE of the full estimation chain for every `(R0, φΔ)`.
pub fn run_nmse_sweep(cfg: &ExperimentConfig) -> Result<NmseReport> {
    cfg.validate()?;
    if cfg.n_tx < 2 {
        return Err(Error::InsufficientSources(cfg.n_tx));
    }
    let truth = &cfg.correlation;
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &r0 in &cfg.r0_values {
        for &deg in &cfg.phi_delta_deg_values {
            let zone = cfg.zone(r0, deg)?;
            let results = run_parallel(cfg.workers, cfg.n_iterations, |i| {
                let mut rng = iteration_rng(cfg.master_seed, Experiment::Nmse, i as u64);
                let layout = ZoneLayout::random(zone, &mut rng);
                let set = synthesize_measurements(&layout, &cfg.propagation, truth, &mut rng)?;
                Ok(
                    estimate_parameters(&set, cfg.propagation.p_tx, &cfg.estimation_options())
                        .map_err(|e| log::warn!("parameter fit failed: {e}"))
                        .ok()
                        .map(|f| EstimateRecord {
                            eta: f.eta,
                            a: f.a,
                            b: f.b,
                            d_cor: f.d_cor,
                        }),
                )
            })?;
            let failed = results.iter().filter(|r| r.is_none()).count();
            let est: Vec<(usize, EstimateRecord)> = results
                .into_iter()
                .enumerate()
                .filter_map(|(i, r)| r.map(|e| (i, e)))
                .collect();
            let column = |f: fn(&EstimateRecord) -> f64| est.iter().map(|(_, e)| f(e)).collect::<Vec<_>>();
            let (eta, a, b, d) = (column(|e| e.eta), column(|e| e.a), column(|e| e.b), column(|e| e.d_cor));
            rows.push(NmseRow {
                r0,
                phi_delta_deg: deg,
                n_sensors: zone.n_sensors(),
                iterations: cfg.n_iterations,
                failed,
                nmse: Coefficients {
                    eta: normalized_rmse(cfg.propagation.eta, &eta),
                    a: normalized_rmse(truth.a, &a),
                    b: normalized_rmse(truth.b, &b),
                    d_cor: normalized_rmse(truth.d_cor, &d),
                },
                mean: Coefficients {
                    eta: crate::stats::mean(&eta),
                    a: crate::stats::mean(&a),
                    b: crate::stats::mean(&b),
                    d_cor: crate::stats::mean(&d),
                },
                median_d_cor: EmpiricalCdf::new(d).quantile(0.5),
            });
            all.extend(est.into_iter().map(|(i, e)| (r0, deg, i, e)));
        }
    }
    Ok(NmseReport { rows, estimates: all })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfRow {
    pub r0: f64,
    pub rg: f64,
    pub realizations: usize,
    pub cdf: EmpiricalCdf,
}

impl CdfRow {
    pub fn p90(&self) -> f64 {
        self.cdf.quantile(0.9)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfReport {
    pub rows: Vec<CdfRow>,
}

/// Pooled boundary powers for each guard width, about `cdf_samples` per
/// width (whole realizations of `N × K` samples).
pub fn run_power_cdf_sweep(cfg: &ExperimentConfig) -> Result<CdfReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &rg in &cfg.rg_values {
        let zone = ZoneConfig::from_degrees(cfg.cdf_r0, rg, cfg.cdf_phi_delta_deg, cfg.n_tx)?;
        let per = zone.n_tx() * zone.n_sensors();
        let realizations = cfg.cdf_samples.div_ceil(per);
        let sets = run_parallel(cfg.workers, realizations, |i| {
            let mut rng = iteration_rng(cfg.master_seed, Experiment::Cdf, i as u64);
            let layout = ZoneLayout::random(zone, &mut rng);
            synthesize_measurements(&layout, &cfg.propagation, &cfg.correlation, &mut rng)
        })?;
        rows.push(CdfRow {
            r0: cfg.cdf_r0,
            rg,
            realizations,
            cdf: crate::propagation::boundary_power_cdf(&sets),
        });
    }
    Ok(CdfReport { rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingRow {
    pub r0: f64,
    pub phi_delta_deg: f64,
    pub d_delta: f64,
}

/// Adjacent-sensor spacing over a grid of radii and angle spacings.
pub fn spacing_curve(r0_values: &[f64], phi_delta_deg_values: &[f64]) -> Vec<SpacingRow> {
    phi_delta_deg_values
        .iter()
        .flat_map(|&deg| {
            r0_values.iter().map(move |&r0| SpacingRow {
                r0,
                phi_delta_deg: deg,
                d_delta: chord_length(r0, deg.to_radians()),
            })
        })
        .collect()
}

/// Radius at which the adjacent spacing equals `distance`.
pub fn radius_for_spacing(distance: f64, phi_delta_deg: f64) -> f64 {
    distance / chord_length(1.0, phi_delta_deg.to_radians())
}

/// Spacing for a zone, as used by the sweeps.
pub fn zone_spacing(zone: &ZoneConfig) -> f64 {
    adjacent_sensor_distance(zone)
}
