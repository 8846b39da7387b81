//! Zone geometry: transmitter and sensor placement, distances and the
//! receiver-side angle between two sources.
//!
//! Angles are radians everywhere inside the crate. Sensor indices are
//! 0-based here; files written by [`crate::io`] use 1-based ids.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};

/// A point given by its distance from the zone centre and its azimuth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarLocation {
    r: f64,
    phi: f64,
}

impl PolarLocation {
    /// Builds a location, wrapping `phi` into `[0, 2π)`. Negative radii are
    /// clamped to zero.
    pub fn new(r: f64, phi: f64) -> Self {
        let mut phi = phi.rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Self { r: r.max(0.0), phi }
    }

    pub fn from_degrees(r: f64, phi_deg: f64) -> Self {
        Self::new(r, phi_deg.to_radians())
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn to_cartesian(&self) -> (f64, f64) {
        (self.r * self.phi.cos(), self.r * self.phi.sin())
    }

    /// Euclidean distance to `other`.
    ///
    /// Same value as the law of cosines
    /// `sqrt(r1² + r2² − 2 r1 r2 cos|φ1 − φ2|)`, written in the half-angle
    /// form `sqrt((r1 − r2)² + 4 r1 r2 sin²(Δφ/2))` which does not cancel
    /// catastrophically for nearby points.
    pub fn distance_to(&self, other: &PolarLocation) -> f64 {
        let dr = self.r - other.r;
        let half = 0.5 * (self.phi - other.phi).abs();
        let s = half.sin();
        (dr * dr + 4.0 * self.r * other.r * s * s).sqrt()
    }
}

/// Zone dimensions and sensor density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneConfig {
    r0: f64,
    rg: f64,
    phi_delta: f64,
    n_tx: usize,
    n_sensors: usize,
}

impl ZoneConfig {
    /// `phi_delta` must split the circle into a whole number of sectors.
    pub fn new(r0: f64, rg: f64, phi_delta: f64, n_tx: usize) -> Result<Self> {
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::InvalidZone(format!("R0 must be > 0, got {r0}")));
        }
        if !(rg.is_finite() && rg >= 0.0 && rg < r0) {
            return Err(Error::InvalidZone(format!(
                "guard width must satisfy 0 <= RG < R0 (RG = {rg}, R0 = {r0})"
            )));
        }
        if n_tx == 0 {
            return Err(Error::InvalidZone("at least one transmitter is required".into()));
        }
        if !(phi_delta.is_finite() && phi_delta > 0.0 && phi_delta <= TAU) {
            return Err(Error::InvalidZone(format!(
                "sensor spacing must lie in (0, 2π], got {phi_delta} rad"
            )));
        }
        let sectors = TAU / phi_delta;
        let k = sectors.round();
        if (sectors - k).abs() > 1e-9 * sectors {
            return Err(Error::InvalidZone(format!(
                "sensor spacing {:.6}° does not divide 360° evenly",
                phi_delta.to_degrees()
            )));
        }
        let n_sensors = k as usize;
        Ok(Self {
            r0,
            rg,
            phi_delta: TAU / n_sensors as f64,
            n_tx,
            n_sensors,
        })
    }

    pub fn from_degrees(r0: f64, rg: f64, phi_delta_deg: f64, n_tx: usize) -> Result<Self> {
        if !(phi_delta_deg > 0.0) {
            return Err(Error::InvalidZone(format!(
                "sensor spacing must be positive, got {phi_delta_deg}°"
            )));
        }
        let sectors = 360.0 / phi_delta_deg;
        if (sectors - sectors.round()).abs() > 1e-9 * sectors {
            return Err(Error::InvalidZone(format!("360° / {phi_delta_deg}° is not an integer")));
        }
        Self::new(r0, rg, TAU / sectors.round(), n_tx)
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn rg(&self) -> f64 {
        self.rg
    }

    /// Radius of the disk transmitters may occupy, `R0 − RG`.
    pub fn core_radius(&self) -> f64 {
        self.r0 - self.rg
    }

    pub fn phi_delta(&self) -> f64 {
        self.phi_delta
    }

    pub fn phi_delta_deg(&self) -> f64 {
        self.phi_delta.to_degrees()
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }
}

/// Chord between two points on a circle of `radius` separated by `angle`:
/// `radius · sqrt(2(1 − cos angle))`.
pub fn chord_length(radius: f64, angle: f64) -> f64 {
    radius * (2.0 * (1.0 - angle.cos())).max(0.0).sqrt()
}

/// Distance between two neighbouring boundary sensors.
pub fn adjacent_sensor_distance(config: &ZoneConfig) -> f64 {
    chord_length(config.r0, config.phi_delta)
}

pub fn distance_tx_sensor(tx: &PolarLocation, sensor: &PolarLocation) -> f64 {
    tx.distance_to(sensor)
}

/// Draws `n` positions with radius uniform on `[0, core_radius]` and azimuth
/// uniform on `[0, 2π)`.
///
/// The radius itself is uniform, so draws concentrate towards the centre
/// compared to an area-uniform placement.
pub fn sample_core_positions<R: Rng + ?Sized>(core_radius: f64, n: usize, rng: &mut R) -> Vec<PolarLocation> {
    (0..n)
        .map(|_| {
            let r = core_radius * rng.random::<f64>();
            let phi = TAU * rng.random::<f64>();
            PolarLocation::new(r, phi)
        })
        .collect()
}

pub fn place_transmitters<R: Rng + ?Sized>(config: &ZoneConfig, rng: &mut R) -> Vec<PolarLocation> {
    sample_core_positions(config.core_radius(), config.n_tx, rng)
}

/// Sensor `k` (0-based) sits at `(R0, k·φΔ)`.
pub fn place_sensors(config: &ZoneConfig) -> Vec<PolarLocation> {
    (0..config.n_sensors)
        .map(|k| PolarLocation::new(config.r0, k as f64 * config.phi_delta))
        .collect()
}

/// Cosine of the angle subtended at `rx` by two transmitters, from the law of
/// cosines and clamped to `[-1, 1]`.
pub fn cos_angle_at_receiver(tx_i: &PolarLocation, tx_j: &PolarLocation, rx: &PolarLocation) -> Result<f64> {
    let d_i = tx_i.distance_to(rx);
    let d_j = tx_j.distance_to(rx);
    if d_i == 0.0 || d_j == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "receiver at ({:.3} m, {:.6} rad) coincides with a transmitter",
            rx.r, rx.phi
        )));
    }
    let sep = tx_i.distance_to(tx_j);
    let cos = (d_i * d_i + d_j * d_j - sep * sep) / (2.0 * d_i * d_j);
    Ok(cos.clamp(-1.0, 1.0))
}

/// Angle in `[0, π]` between the directions from `rx` to each transmitter.
pub fn angle_at_receiver(tx_i: &PolarLocation, tx_j: &PolarLocation, rx: &PolarLocation) -> Result<f64> {
    cos_angle_at_receiver(tx_i, tx_j, rx).map(f64::acos)
}

/// Transmitters and sensors of one zone realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneLayout {
    config: ZoneConfig,
    transmitters: Vec<PolarLocation>,
    sensors: Vec<PolarLocation>,
}

impl ZoneLayout {
    /// Checks transmitter count and the guard area; sensors are derived from
    /// the config.
    pub fn new(config: ZoneConfig, transmitters: Vec<PolarLocation>) -> Result<Self> {
        if transmitters.len() != config.n_tx {
            return Err(Error::InvalidZone(format!(
                "expected {} transmitters, got {}",
                config.n_tx,
                transmitters.len()
            )));
        }
        let limit = config.core_radius() * (1.0 + 1e-12);
        if let Some((i, tx)) = transmitters.iter().enumerate().find(|(_, t)| t.r > limit) {
            return Err(Error::InvalidZone(format!(
                "transmitter {} at r = {} m lies in the guard area (limit {} m)",
                i + 1,
                tx.r,
                config.core_radius()
            )));
        }
        let sensors = place_sensors(&config);
        Ok(Self {
            config,
            transmitters,
            sensors,
        })
    }

    pub fn random<R: Rng + ?Sized>(config: ZoneConfig, rng: &mut R) -> Self {
        let transmitters = place_transmitters(&config, rng);
        let sensors = place_sensors(&config);
        Self {
            config,
            transmitters,
            sensors,
        }
    }

    pub fn config(&self) -> &ZoneConfig {
        &self.config
    }

    pub fn transmitters(&self) -> &[PolarLocation] {
        &self.transmitters
    }

    pub fn sensors(&self) -> &[PolarLocation] {
        &self.sensors
    }

    pub fn n_tx(&self) -> usize {
        self.transmitters.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    /// Distance from transmitter `tx` (0-based) to an arbitrary location.
    pub fn tx_distance(&self, tx: usize, location: &PolarLocation) -> f64 {
        self.transmitters[tx].distance_to(location)
    }

    /// `distances[n][k]` from transmitter `n` to sensor `k`.
    pub fn tx_sensor_distances(&self) -> Vec<Vec<f64>> {
        self.transmitters
            .iter()
            .map(|tx| self.sensors.iter().map(|s| distance_tx_sensor(tx, s)).collect())
            .collect()
    }
}
