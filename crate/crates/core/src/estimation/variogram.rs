//! Method-of-moments semivariogram along the sensor ring and its
//! exponential fit `γ(h) = D (1 − exp(−h / E))`.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::geometry::adjacent_sensor_distance;
use crate::propagation::MeasurementSet;
use crate::stats::CompensatedSum;

const GRID_POINTS: usize = 100;
const GOLDEN_ITERATIONS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemivariogramLag {
    /// Lag in sensor spacings.
    pub m: usize,
    /// `m · d_Δ` in metres.
    pub lag_m: f64,
    pub gamma: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Semivariogram {
    pub lags: Vec<SemivariogramLag>,
}

/// `γ̂(M d_Δ) = Σ_n Σ_{k ≤ K−M} (f_n(k+M) − f_n(k))² / (2 N (K − M))` for
/// `M = 1..=max_lag`. Pairs do not wrap around the ring.
pub fn semivariogram_of(field: &[Vec<f64>], lag_unit: f64, max_lag: usize) -> Result<Semivariogram> {
    let n = field.len();
    let k = field.first().map_or(0, Vec::len);
    if n == 0 || field.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidParams(
            "semivariogram needs a non-empty rectangular field".into(),
        ));
    }
    if max_lag == 0 || max_lag >= k {
        return Err(Error::InvalidParams(format!(
            "maximum lag must lie in 1..{k}, got {max_lag}"
        )));
    }
    let lags = (1..=max_lag)
        .map(|m| {
            let mut acc = CompensatedSum::new();
            for row in field {
                for j in 0..(k - m) {
                    let d = row[j + m] - row[j];
                    acc.add(d * d);
                }
            }
            let pairs = n * (k - m);
            SemivariogramLag {
                m,
                lag_m: m as f64 * lag_unit,
                gamma: acc.value() / (2.0 * pairs as f64),
                pairs,
            }
        })
        .collect();
    Ok(Semivariogram { lags })
}

/// Semivariogram of the raw received powers.
pub fn empirical_semivariogram(measurements: &MeasurementSet, max_lag: usize) -> Result<Semivariogram> {
    let spacing = adjacent_sensor_distance(measurements.layout().config());
    semivariogram_of(measurements.powers(), spacing, max_lag)
}

/// Upper limits of the search box; the lower limits are fixed fractions of
/// these (sill) and of the shortest lag (range).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramBounds {
    pub max_sill: f64,
    pub max_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramFit {
    pub sill: f64,
    pub range: f64,
    pub sse: f64,
    /// The optimum sits on the edge of the search box, e.g. a flat
    /// variogram driving the range to zero.
    pub at_boundary: bool,
}

fn model(sill: f64, range: f64, h: f64) -> f64 {
    sill * (1.0 - (-h / range).exp())
}

fn sse(vg: &Semivariogram, sill: f64, range: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for lag in &vg.lags {
        let r = lag.gamma - model(sill, range, lag.lag_m);
        acc.add(r * r);
    }
    acc.value()
}

fn log_grid(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..GRID_POINTS)
        .map(|i| (a + (b - a) * i as f64 / (GRID_POINTS - 1) as f64).exp())
        .collect()
}

/// Least-squares sill for a fixed range, clamped to `[lo, hi]`.
fn best_sill(vg: &Semivariogram, range: f64, lo: f64, hi: f64) -> f64 {
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for lag in &vg.lags {
        let g = 1.0 - (-lag.lag_m / range).exp();
        num.add(lag.gamma * g);
        den.add(g * g);
    }
    if den.value() == 0.0 {
        return hi;
    }
    (num.value() / den.value()).clamp(lo, hi)
}

/// Least-squares exponential fit: a log-spaced grid over `(D, E)` followed
/// by golden-section search on `ln E` (with `D` solved exactly) inside the
/// winning grid cell's neighbourhood.
pub fn fit_variogram(vg: &Semivariogram, bounds: &VariogramBounds) -> Result<VariogramFit> {
    if vg.lags.len() < 2 {
        return Err(Error::InvalidParams("variogram fit needs at least two lags".into()));
    }
    if vg.lags.iter().all(|l| l.gamma == 0.0) {
        return Err(Error::DegenerateVariogram);
    }
    if !(bounds.max_sill > 0.0 && bounds.max_range > 0.0) {
        return Err(Error::InvalidParams(format!("invalid variogram bounds {bounds:?}")));
    }
    let h_min = vg.lags.iter().map(|l| l.lag_m).fold(f64::INFINITY, f64::min);
    if !(h_min > 0.0) {
        return Err(Error::InvalidParams("lag distances must be positive".into()));
    }
    let sill_grid = log_grid(bounds.max_sill * 1e-4, bounds.max_sill);
    let range_lo = (h_min * 1e-3).min(bounds.max_range * 1e-3);
    let range_grid = log_grid(range_lo, bounds.max_range);

    let mut best = f64::INFINITY;
    let (mut sill, mut range) = (sill_grid[0], range_grid[0]);
    for &d in &sill_grid {
        for &e in &range_grid {
            let s = sse(vg, d, e);
            if s < best {
                (best, sill, range) = (s, d, e);
            }
        }
    }

    // Refinement works on the profile over E, where D has a closed form.
    let (sill_lo, sill_hi) = (sill_grid[0], bounds.max_sill);
    let profile = |t: f64| {
        let e = t.exp();
        let d = best_sill(vg, e, sill_lo, sill_hi);
        (sse(vg, d, e), d)
    };
    let mut bj = 0;
    let mut best_profile = f64::INFINITY;
    for (j, &e) in range_grid.iter().enumerate() {
        let (s, _) = profile(e.ln());
        if s < best_profile {
            (bj, best_profile) = (j, s);
        }
    }
    let mut lo = range_grid[bj.saturating_sub(1)].ln();
    let mut hi = range_grid[(bj + 1).min(GRID_POINTS - 1)].ln();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (profile(x1).0, profile(x2).0);
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 <= f2 {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - inv_phi * (hi - lo);
            f1 = profile(x1).0;
        } else {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + inv_phi * (hi - lo);
            f2 = profile(x2).0;
        }
    }
    let t = 0.5 * (lo + hi);
    let (refined, d) = profile(t);
    if refined <= best {
        best = refined;
        sill = d;
        range = t.exp();
    }

    let at_boundary = range <= range_grid[1]
        || range >= range_grid[GRID_POINTS - 2]
        || sill >= bounds.max_sill * (1.0 - 1e-12)
        || sill <= sill_grid[1];
    if at_boundary {
        log::warn!("variogram fit hit the search boundary (D = {sill:.4}, E = {range:.4})");
    }
    Ok(VariogramFit {
        sill,
        range,
        sse: best,
        at_boundary,
    })
}

/// `d_cor = E ln 2`, matching `exp(−d / E)` to `exp(−d ln2 / d_cor)`.
pub fn dcor_from_range(range: f64) -> Result<f64> {
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::InvalidParams(format!(
            "variogram range must be > 0, got {range}"
        )));
    }
    Ok(range * LN_2)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{ZoneConfig, ZoneLayout};
    use crate::propagation::{synthesize_measurements, PropagationParams};
    use crate::shadowing::CorrelationParams;

    fn exact(sill: f64, range: f64, unit: f64, lags: usize) -> Semivariogram {
        Semivariogram {
            lags: (1..=lags)
                .map(|m| SemivariogramLag {
                    m,
                    lag_m: m as f64 * unit,
                    gamma: model(sill, range, m as f64 * unit),
                    pairs: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_field_is_flat_zero() {
        let vg = semivariogram_of(&vec![vec![-42.0; 36]; 3], 87.0, 3).unwrap();
        assert!(vg.lags.iter().all(|l| l.gamma == 0.0));
        assert_eq!(vg.lags.iter().map(|l| l.pairs).collect::<Vec<_>>(), vec![105, 102, 99]);
        assert!(matches!(
            fit_variogram(
                &vg,
                &VariogramBounds {
                    max_sill: 256.0,
                    max_range: 5000.0
                }
            ),
            Err(Error::DegenerateVariogram)
        ));
    }

    #[test]
    fn lag_must_be_below_sensor_count() {
        assert!(semivariogram_of(&[vec![0.0; 4]], 1.0, 4).is_err());
        assert!(semivariogram_of(&[vec![0.0; 4]], 1.0, 0).is_err());
    }

    #[test]
    fn powers_variogram_matches_direct_summation() {
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, 10.0, 3).unwrap();
        let l = ZoneLayout::random(cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let corr = CorrelationParams::new(0.0, 100.0, 0.7, 0.3).unwrap();
        let set = synthesize_measurements(
            &l,
            &PropagationParams::nominal(),
            &corr,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let vg = empirical_semivariogram(&set, 3).unwrap();
        let d = l.tx_sensor_distances();
        for lag in &vg.lags {
            let mut total = 0.0;
            let mut count = 0;
            for row in &d {
                for k in 0..(36 - lag.m) {
                    let diff = -35.0 * (row[k + lag.m].log10() - row[k].log10());
                    total += diff * diff;
                    count += 1;
                }
            }
            assert_relative_eq!(lag.gamma, total / (2.0 * count as f64), max_relative = 1e-10);
            assert_relative_eq!(lag.lag_m, lag.m as f64 * adjacent_sensor_distance(&cfg));
        }
    }

    #[test]
    fn noiseless_inversion() {
        let vg = exact(64.0, 144.27, 43.6, 3);
        let fit = fit_variogram(
            &vg,
            &VariogramBounds {
                max_sill: 256.0,
                max_range: 5000.0,
            },
        )
        .unwrap();
        assert!((fit.sill - 64.0).abs() < 0.64, "{fit:?}");
        assert!((fit.range - 144.27).abs() < 0.01 * 144.27, "{fit:?}");
        assert!(!fit.at_boundary);
    }

    #[test]
    fn flat_variogram_is_nugget_limit() {
        let vg = Semivariogram {
            lags: (1..=3)
                .map(|m| SemivariogramLag {
                    m,
                    lag_m: 87.0 * m as f64,
                    gamma: 30.0,
                    pairs: 1,
                })
                .collect(),
        };
        let fit = fit_variogram(
            &vg,
            &VariogramBounds {
                max_sill: 256.0,
                max_range: 5000.0,
            },
        )
        .unwrap();
        assert!((fit.sill - 30.0).abs() < 1e-6);
        assert!(fit.range < 1.0);
        assert!(fit.at_boundary);
    }

    #[test]
    fn range_conversion() {
        assert_relative_eq!(dcor_from_range(1.0 / LN_2).unwrap(), 1.0);
        assert!((dcor_from_range(144.27).unwrap() - 100.0).abs() < 0.01);
        assert!(dcor_from_range(0.0).is_err());
        assert!(dcor_from_range(-3.0).is_err());
    }
}
