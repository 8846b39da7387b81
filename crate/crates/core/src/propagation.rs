//! Log-distance path loss plus correlated shadowing, observed per
//! transmitter at each boundary sensor.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{PolarLocation, ZoneLayout};
use crate::shadowing::{build_covariance, field_points, CorrelationParams, MatrixForm};
use crate::stats::EmpiricalCdf;

/// Transmit power (dBm) and path-loss exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    pub p_tx: f64,
    pub eta: f64,
}

impl PropagationParams {
    pub fn new(p_tx: f64, eta: f64) -> Result<Self> {
        if !p_tx.is_finite() {
            return Err(Error::InvalidParams(format!(
                "transmit power must be finite, got {p_tx}"
            )));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidParams(format!(
                "path-loss exponent must be > 0, got {eta}"
            )));
        }
        Ok(Self { p_tx, eta })
    }

    /// 30 dBm, η = 3.5.
    pub fn nominal() -> Self {
        Self { p_tx: 30.0, eta: 3.5 }
    }
}

/// `p_tx − 10·η·log10(d)` in dBm.
pub fn mean_power(params: &PropagationParams, distance: f64) -> Result<f64> {
    path_loss_power(params.p_tx, params.eta, distance)
}

pub(crate) fn path_loss_power(p_tx: f64, eta: f64, distance: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::InvalidDistance(distance));
    }
    Ok(p_tx - 10.0 * eta * distance.log10())
}

/// Received powers `y_n(k)` for every transmitter/sensor pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    layout: ZoneLayout,
    powers: Vec<Vec<f64>>,
    shadowing: Option<Vec<Vec<f64>>>,
}

impl MeasurementSet {
    /// `powers[n][k]` in dBm; `shadowing`, when known, has the same shape.
    pub fn new(layout: ZoneLayout, powers: Vec<Vec<f64>>, shadowing: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let (n, k) = (layout.n_tx(), layout.n_sensors());
        let shape_ok = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|row| row.len() == k);
        if !shape_ok(&powers) {
            return Err(Error::InvalidParams(format!("power matrix must be {n}×{k}")));
        }
        if let Some(w) = &shadowing {
            if !shape_ok(w) {
                return Err(Error::InvalidParams(format!("shadowing matrix must be {n}×{k}")));
            }
        }
        Ok(Self {
            layout,
            powers,
            shadowing,
        })
    }

    pub fn layout(&self) -> &ZoneLayout {
        &self.layout
    }

    pub fn powers(&self) -> &[Vec<f64>] {
        &self.powers
    }

    pub fn power(&self, tx: usize, sensor: usize) -> f64 {
        self.powers[tx][sensor]
    }

    /// Ground-truth shadowing, present only for simulated sets.
    pub fn shadowing(&self) -> Option<&[Vec<f64>]> {
        self.shadowing.as_deref()
    }

    pub fn n_tx(&self) -> usize {
        self.powers.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.layout.n_sensors()
    }
}

/// True power and shadowing at locations outside the sensor set, drawn in
/// the same realisation as a [`MeasurementSet`]. Indexed `[n][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTruth {
    pub locations: Vec<PolarLocation>,
    pub powers: Vec<Vec<f64>>,
    pub shadowing: Vec<Vec<f64>>,
}

pub fn synthesize_measurements<R: Rng + ?Sized>(
    layout: &ZoneLayout,
    prop: &PropagationParams,
    corr: &CorrelationParams,
    rng: &mut R,
) -> Result<MeasurementSet> {
    synthesize_with_targets(layout, prop, corr, &[], rng).map(|(set, _)| set)
}

/// Draws one joint shadowing realisation over every (transmitter, sensor)
/// pair and every (transmitter, target) pair, and adds the path-loss means.
///
/// Tx–receiver distances under 1 m are rejected: valid zones keep
/// transmitters at least `RG` from the boundary, so such a distance means a
/// misconfigured layout.
pub fn synthesize_with_targets<R: Rng + ?Sized>(
    layout: &ZoneLayout,
    prop: &PropagationParams,
    corr: &CorrelationParams,
    targets: &[PolarLocation],
    rng: &mut R,
) -> Result<(MeasurementSet, TargetTruth)> {
    let n = layout.n_tx();
    let k = layout.n_sensors();
    let mut locations = layout.sensors().to_vec();
    locations.extend_from_slice(targets);

    let mut means = vec![vec![0.0; locations.len()]; n];
    for (tx, row) in means.iter_mut().enumerate() {
        for (j, loc) in locations.iter().enumerate() {
            let d = layout.tx_distance(tx, loc);
            if d < 1.0 {
                return Err(Error::InvalidDistance(d));
            }
            row[j] = mean_power(prop, d)?;
        }
    }

    let points = field_points(n, &locations);
    let cov = build_covariance(&points, corr, layout, MatrixForm::Covariance)?;
    let w = cov.sample(rng);
    // field_points is location-major: index = location * n + tx.
    let shadow = |tx: usize, j: usize| w[j * n + tx];

    let powers = (0..n)
        .map(|tx| (0..k).map(|j| means[tx][j] + shadow(tx, j)).collect())
        .collect();
    let shadowing = (0..n).map(|tx| (0..k).map(|j| shadow(tx, j)).collect()).collect();
    let set = MeasurementSet::new(layout.clone(), powers, Some(shadowing))?;

    let target_shadow: Vec<Vec<f64>> = (0..n)
        .map(|tx| (k..locations.len()).map(|j| shadow(tx, j)).collect())
        .collect();
    let target_powers = (0..n)
        .map(|tx| (k..locations.len()).map(|j| means[tx][j] + shadow(tx, j)).collect())
        .collect();
    let truth = TargetTruth {
        locations: targets.to_vec(),
        powers: target_powers,
        shadowing: target_shadow,
    };
    Ok((set, truth))
}

/// Pools every measured power of every set into one empirical CDF.
pub fn boundary_power_cdf(samples: &[MeasurementSet]) -> EmpiricalCdf {
    let pooled = samples
        .iter()
        .flat_map(|s| s.powers.iter().flatten().copied())
        .collect();
    EmpiricalCdf::new(pooled)
}
