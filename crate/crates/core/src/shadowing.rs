//! Spatially correlated shadow fading across transmitters and locations.
//!
//! The correlation between `w_i(k)` and `w_j(m)` is
//!
//! ```text
//! ρ = (A · u_i(k)·u_j(m) + B) · exp(−‖l_k − l_m‖ ln2 / d_cor)
//! ```
//!
//! where `u_i(k)` is the unit vector from location `k` towards transmitter
//! `i`. At a single location `u_i(k)·u_j(k) = cos θ_ij(k)`, which is the
//! cosine cross-correlation model; across locations the dot product pairs the
//! direction seen at each endpoint, so the kernel is an inner product times an
//! exponential and every matrix it produces is symmetric positive
//! semi-definite. A variable is always fully correlated with itself: when
//! `A + B < 1` the gap to 1 on the diagonal acts as a nugget.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{cos_angle_at_receiver, PolarLocation, ZoneLayout};

/// Relative diagonal loading applied before factorisation.
pub const REGULARIZATION: f64 = 1e-9;

/// Most negative eigenvalue (relative to the scale) still treated as
/// round-off rather than a genuinely indefinite matrix.
pub const PSD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationParams {
    /// Shadowing standard deviation in dB.
    pub sigma_w: f64,
    /// Distance in metres at which the auto-correlation falls to 0.5.
    pub d_cor: f64,
    pub a: f64,
    pub b: f64,
}

impl CorrelationParams {
    pub fn new(sigma_w: f64, d_cor: f64, a: f64, b: f64) -> Result<Self> {
        let p = Self { sigma_w, d_cor, a, b };
        p.validate()?;
        Ok(p)
    }

    /// σ_w = 8 dB, d_cor = 100 m, (A, B) = (0.7, 0.3).
    pub fn nominal() -> Self {
        Self {
            sigma_w: 8.0,
            d_cor: 100.0,
            a: 0.7,
            b: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_w.is_finite() && self.sigma_w >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma_w must be >= 0, got {}",
                self.sigma_w
            )));
        }
        if !(self.d_cor.is_finite() && self.d_cor > 0.0) {
            return Err(Error::InvalidParams(format!("d_cor must be > 0, got {}", self.d_cor)));
        }
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidParams("A and B must be finite".into()));
        }
        if self.a < 0.0 {
            return Err(Error::InvalidParams(format!("A must be >= 0, got {}", self.a)));
        }
        if self.a + self.b > 1.0 + 1e-12 {
            return Err(Error::InvalidParams(format!(
                "A + B must be <= 1, got {}",
                self.a + self.b
            )));
        }
        if self.b - self.a < -1.0 - 1e-12 {
            return Err(Error::InvalidParams(format!(
                "B - A must be >= -1, got {}",
                self.b - self.a
            )));
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.sigma_w * self.sigma_w
    }
}

/// One shadowing variable `w_i(k)`: transmitter `tx` (0-based) observed at
/// `location`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub tx: usize,
    pub location: PolarLocation,
}

impl FieldPoint {
    pub fn new(tx: usize, location: PolarLocation) -> Self {
        Self { tx, location }
    }
}

/// Field points for every transmitter at every location, location-major.
pub fn field_points(n_tx: usize, locations: &[PolarLocation]) -> Vec<FieldPoint> {
    locations
        .iter()
        .flat_map(|loc| (0..n_tx).map(move |tx| FieldPoint::new(tx, *loc)))
        .collect()
}

/// Auto-correlation `exp(−‖a − b‖ ln2 / d_cor)`.
pub fn acf(loc_a: &PolarLocation, loc_b: &PolarLocation, params: &CorrelationParams) -> f64 {
    acf_at_distance(loc_a.distance_to(loc_b), params.d_cor)
}

pub fn acf_at_distance(distance: f64, d_cor: f64) -> f64 {
    (-distance / d_cor * LN_2).exp()
}

/// Cross-correlation `A·cos θ + B` of two sources seen from the same receiver.
pub fn ccf_colocated(
    tx_i: &PolarLocation,
    tx_j: &PolarLocation,
    rx: &PolarLocation,
    params: &CorrelationParams,
) -> Result<f64> {
    let cos = cos_angle_at_receiver(tx_i, tx_j, rx)?;
    Ok(params.a * cos + params.b)
}

/// Unit vector from `from` towards `to`.
fn direction(from: &PolarLocation, to: &PolarLocation) -> Option<(f64, f64)> {
    let (fx, fy) = from.to_cartesian();
    let (tx, ty) = to.to_cartesian();
    let (dx, dy) = (tx - fx, ty - fy);
    let norm = dx.hypot(dy);
    (norm > 0.0).then(|| (dx / norm, dy / norm))
}

fn directions_to_transmitters(loc: &PolarLocation, layout: &ZoneLayout) -> Result<Vec<(f64, f64)>> {
    layout
        .transmitters()
        .iter()
        .map(|t| {
            direction(loc, t).ok_or_else(|| {
                Error::DegenerateGeometry(format!(
                    "location ({:.3} m, {:.6} rad) coincides with a transmitter",
                    loc.r(),
                    loc.phi()
                ))
            })
        })
        .collect()
}

fn pair_value(same_variable: bool, u_a: (f64, f64), u_b: (f64, f64), auto: f64, params: &CorrelationParams) -> f64 {
    if same_variable {
        return 1.0;
    }
    (params.a * (u_a.0 * u_b.0 + u_a.1 * u_b.1) + params.b) * auto
}

/// Correlation between two field points.
///
/// Reduces to [`acf`] for one transmitter seen along a common bearing, and to
/// [`ccf_colocated`] for two transmitters seen from the same location.
pub fn cross_correlation(
    point_a: &FieldPoint,
    point_b: &FieldPoint,
    params: &CorrelationParams,
    layout: &ZoneLayout,
) -> Result<f64> {
    let n = layout.n_tx();
    if point_a.tx >= n || point_b.tx >= n {
        return Err(Error::InvalidParams(format!(
            "field point references a transmitter outside 1..={n}"
        )));
    }
    let txs = layout.transmitters();
    let err = |loc: &PolarLocation| {
        Error::DegenerateGeometry(format!(
            "location ({:.3} m, {:.6} rad) coincides with a transmitter",
            loc.r(),
            loc.phi()
        ))
    };
    let u_a = direction(&point_a.location, &txs[point_a.tx]).ok_or_else(|| err(&point_a.location))?;
    let u_b = direction(&point_b.location, &txs[point_b.tx]).ok_or_else(|| err(&point_b.location))?;
    let same = point_a == point_b;
    let auto = acf(&point_a.location, &point_b.location, params);
    Ok(pair_value(same, u_a, u_b, auto, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixForm {
    /// Unitless correlations.
    Correlation,
    /// Correlations scaled by σ_w², in dB².
    Covariance,
}

/// Correlation or covariance over an ordered list of field points, together
/// with a square-root factor `L` (`L Lᵀ` = entries + εI) used for sampling.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    points: Vec<FieldPoint>,
    entries: DMatrix<f64>,
    form: MatrixForm,
    regularization: f64,
    factor: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn points(&self) -> &[FieldPoint] {
        &self.points
    }

    /// Model entries, without the diagonal loading.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn form(&self) -> MatrixForm {
        self.form
    }

    /// The ε added to the diagonal before factorisation.
    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        sample_field(self, rng)
    }
}

/// Pairwise correlations over `points`. Directions are computed once per
/// distinct location.
pub fn correlation_entries(
    points: &[FieldPoint],
    params: &CorrelationParams,
    layout: &ZoneLayout,
) -> Result<DMatrix<f64>> {
    let n_tx = layout.n_tx();
    if let Some(p) = points.iter().find(|p| p.tx >= n_tx) {
        return Err(Error::InvalidParams(format!(
            "field point references transmitter {} but the layout has {n_tx}",
            p.tx + 1
        )));
    }
    let mut cache: Vec<(PolarLocation, Vec<(f64, f64)>)> = Vec::new();
    let mut dirs = Vec::with_capacity(points.len());
    for p in points {
        let slot = match cache.iter().rposition(|(loc, _)| *loc == p.location) {
            Some(i) => i,
            None => {
                cache.push((p.location, directions_to_transmitters(&p.location, layout)?));
                cache.len() - 1
            }
        };
        dirs.push(cache[slot].1[p.tx]);
    }

    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for r in 0..n {
        for c in r..n {
            let (pa, pb) = (&points[r], &points[c]);
            let auto = acf(&pa.location, &pb.location, params);
            let value = pair_value(pa == pb, dirs[r], dirs[c], auto, params);
            m[(r, c)] = value;
            m[(c, r)] = value;
        }
    }
    Ok(m)
}

/// Builds and factorises the correlation (or covariance) matrix of `points`.
pub fn build_covariance(
    points: &[FieldPoint],
    params: &CorrelationParams,
    layout: &ZoneLayout,
    form: MatrixForm,
) -> Result<CovarianceMatrix> {
    if points.is_empty() {
        return Err(Error::InvalidParams("covariance needs at least one point".into()));
    }
    let mut entries = correlation_entries(points, params, layout)?;
    let scale = match form {
        MatrixForm::Correlation => 1.0,
        MatrixForm::Covariance => params.variance(),
    };
    if form == MatrixForm::Covariance {
        entries *= scale;
    }
    let regularization = REGULARIZATION * scale;
    let factor = square_root_factor(&entries, regularization, scale)?;
    Ok(CovarianceMatrix {
        points: points.to_vec(),
        entries,
        form,
        regularization,
        factor,
    })
}

/// Marginal covariance of the subset `keep` (indices into `all_points`).
pub fn local_subset_covariance(
    all_points: &[FieldPoint],
    keep: &[usize],
    params: &CorrelationParams,
    layout: &ZoneLayout,
    form: MatrixForm,
) -> Result<CovarianceMatrix> {
    if keep.is_empty() {
        return Err(Error::InvalidParams("subset must keep at least one point".into()));
    }
    let subset =
        keep.iter()
            .map(|&i| {
                all_points.get(i).copied().ok_or_else(|| {
                    Error::InvalidParams(format!("subset index {i} out of range ({})", all_points.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
    build_covariance(&subset, params, layout, form)
}

/// Cholesky factor of `entries + εI`, falling back to `V·sqrt(max(Λ, 0))`
/// from a symmetric eigendecomposition when Cholesky fails.
fn square_root_factor(entries: &DMatrix<f64>, eps: f64, scale: f64) -> Result<DMatrix<f64>> {
    let n = entries.nrows();
    if scale == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let mut loaded = entries.clone();
    for i in 0..n {
        loaded[(i, i)] += eps;
    }
    if let Some(chol) = loaded.clone().cholesky() {
        return Ok(chol.unpack());
    }
    let eig = loaded.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
    }
    log::debug!("cholesky failed, using clipped eigendecomposition (min eigenvalue {min:e})");
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let mut factor = eig.eigenvectors;
    for (j, root) in roots.iter().enumerate() {
        factor.column_mut(j).scale_mut(*root);
    }
    Ok(factor)
}

/// Draws one realisation `w = L z` with `z ~ N(0, I)`.
pub fn sample_field<R: Rng + ?Sized>(cov: &CovarianceMatrix, rng: &mut R) -> Vec<f64> {
    let n = cov.dim();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    (&cov.factor * z).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{angle_at_receiver, ZoneConfig};

    fn layout_with(txs: Vec<PolarLocation>) -> ZoneLayout {
        let cfg = ZoneConfig::from_degrees(500.0, 0.0, 10.0, txs.len()).unwrap();
        ZoneLayout::new(cfg, txs).unwrap()
    }

    fn table_layout(seed: u64, deg: f64) -> ZoneLayout {
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, deg, 3).unwrap();
        ZoneLayout::random(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn params_validation() {
        assert!(CorrelationParams::new(8.0, 100.0, 0.7, 0.3).is_ok());
        assert!(CorrelationParams::new(8.0, 100.0, 0.8, 0.3).is_err());
        assert!(CorrelationParams::new(8.0, 100.0, -0.1, 0.3).is_err());
        assert!(CorrelationParams::new(8.0, 100.0, 0.5, -0.6).is_err());
        assert!(CorrelationParams::new(8.0, 0.0, 0.7, 0.3).is_err());
        assert!(CorrelationParams::new(0.0, 100.0, 0.7, 0.3).is_ok());
    }

    #[test]
    fn acf_values() {
        let p = CorrelationParams::nominal();
        let a = PolarLocation::new(500.0, 0.0);
        assert_eq!(acf(&a, &a, &p), 1.0);
        assert_relative_eq!(acf_at_distance(100.0, 100.0), 0.5);
        assert_relative_eq!(acf_at_distance(200.0, 100.0), 0.25, epsilon = 1e-15);
        let mut last = 1.0;
        for d in 1..2000 {
            let v = acf_at_distance(d as f64, 100.0);
            assert!(v > 0.0 && v < last);
            last = v;
        }
    }

    #[test]
    fn ccf_values() {
        let p = CorrelationParams::nominal();
        let rx = PolarLocation::new(500.0, 0.0);
        // Both sources on the same ray from rx: θ = 0.
        let t1 = PolarLocation::new(100.0, 0.0);
        let t2 = PolarLocation::new(300.0, 0.0);
        assert_relative_eq!(ccf_colocated(&t1, &t2, &rx, &p).unwrap(), 1.0, epsilon = 1e-12);
        // Thales: rx on the circle whose diameter joins the sources, θ = π/2.
        let left = PolarLocation::new(100.0, PI);
        let right = PolarLocation::new(100.0, 0.0);
        let top = PolarLocation::new(100.0, FRAC_PI_2);
        assert_relative_eq!(ccf_colocated(&left, &right, &top, &p).unwrap(), 0.3, epsilon = 1e-12);
        // rx between the sources: θ = π.
        let centre = PolarLocation::new(0.0, 0.0);
        assert_relative_eq!(ccf_colocated(&left, &right, &centre, &p).unwrap(), -0.4, epsilon = 1e-7);
    }

    #[test]
    fn cross_correlation_cases() {
        let p = CorrelationParams::nominal();
        // tx 1 due north of the origin, tx 2 due east.
        let north = PolarLocation::new(50.0, FRAC_PI_2);
        let east = PolarLocation::new(300.0, 0.0);
        let layout = layout_with(vec![north, east]);
        let k = PolarLocation::new(0.0, 0.0);
        let m = PolarLocation::new(100.0, 0.0);
        assert_relative_eq!(angle_at_receiver(&north, &east, &k).unwrap(), FRAC_PI_2);

        let same = cross_correlation(&FieldPoint::new(0, k), &FieldPoint::new(0, k), &p, &layout).unwrap();
        assert_eq!(same, p.a + p.b);
        // k and m lie on a common bearing to tx 2, d_cor apart.
        let auto = cross_correlation(&FieldPoint::new(1, k), &FieldPoint::new(1, m), &p, &layout).unwrap();
        assert_relative_eq!(auto, 0.5, epsilon = 1e-12);
        // Perpendicular bearings, d_cor apart: 0.3 × 0.5.
        let mixed = cross_correlation(&FieldPoint::new(0, k), &FieldPoint::new(1, m), &p, &layout).unwrap();
        assert_relative_eq!(mixed, 0.15, epsilon = 1e-12);
        let flipped = cross_correlation(&FieldPoint::new(1, m), &FieldPoint::new(0, k), &p, &layout).unwrap();
        assert_eq!(mixed, flipped);
    }

    #[test]
    fn colocated_entries_follow_the_cosine_model() {
        let p = CorrelationParams::nominal();
        let layout = table_layout(21, 10.0);
        let txs = layout.transmitters();
        for s in layout.sensors() {
            for i in 0..3 {
                for j in 0..3 {
                    if i == j {
                        continue;
                    }
                    let got = cross_correlation(&FieldPoint::new(i, *s), &FieldPoint::new(j, *s), &p, &layout).unwrap();
                    let want = ccf_colocated(&txs[i], &txs[j], s, &p).unwrap();
                    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
                }
            }
        }
    }

    // A·u_i·u_j + B is an inner product of 3-vectors (√A·u, √B), so with
    // A + B = 1 a co-located block never has rank above 3.
    #[test]
    fn colocated_block_rank_is_at_most_three() {
        let p = CorrelationParams::nominal();
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, 10.0, 5).unwrap();
        let layout = ZoneLayout::random(cfg, &mut ChaCha8Rng::seed_from_u64(8));
        let s = layout.sensors()[4];
        let pts: Vec<FieldPoint> = (0..5).map(|tx| FieldPoint::new(tx, s)).collect();
        let m = correlation_entries(&pts, &p, &layout).unwrap();
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12, "{ev:?}");
        assert!(ev[2] > 1e-6, "{ev:?}");
    }

    #[test]
    fn nugget_when_a_plus_b_below_one() {
        let p = CorrelationParams::new(1.0, 100.0, 0.5, 0.2).unwrap();
        let layout = table_layout(3, 10.0);
        let s = layout.sensors()[0];
        let diag = cross_correlation(&FieldPoint::new(1, s), &FieldPoint::new(1, s), &p, &layout).unwrap();
        let off = cross_correlation(&FieldPoint::new(0, s), &FieldPoint::new(1, s), &p, &layout).unwrap();
        assert_eq!(diag, 1.0);
        assert!(off <= 0.7 + 1e-12);
    }

    #[test]
    fn single_point_matrix() {
        let p = CorrelationParams::nominal();
        let layout = table_layout(1, 10.0);
        let pt = [FieldPoint::new(0, layout.sensors()[3])];
        let cov = build_covariance(&pt, &p, &layout, MatrixForm::Covariance).unwrap();
        assert_relative_eq!(cov.entries()[(0, 0)], 64.0 * (p.a + p.b), epsilon = 1e-12);
        assert_relative_eq!(cov.regularization(), 64e-9);
    }

    #[test]
    fn far_points_decorrelate() {
        let p = CorrelationParams::nominal();
        let layout = table_layout(1, 10.0);
        let pts = [
            FieldPoint::new(0, PolarLocation::new(1e6, 0.0)),
            FieldPoint::new(0, PolarLocation::new(1e6, PI)),
        ];
        let cov = build_covariance(&pts, &p, &layout, MatrixForm::Correlation).unwrap();
        assert!(cov.entries()[(0, 1)].abs() < 1e-300);
    }

    #[test]
    fn matrix_matches_elementwise_oracle() {
        let p = CorrelationParams::nominal();
        let layout = table_layout(11, 10.0);
        let locs = &layout.sensors()[..2];
        let pts = field_points(2, locs);
        let cov = build_covariance(&pts, &p, &layout, MatrixForm::Correlation).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let want = cross_correlation(&pts[r], &pts[c], &p, &layout).unwrap();
                assert_relative_eq!(cov.entries()[(r, c)], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn boundary_matrices_are_symmetric_and_factorisable() {
        let p = CorrelationParams::nominal();
        for (seed, deg) in [(1, 5.0), (2, 10.0), (3, 15.0), (4, 20.0), (5, 30.0)] {
            let layout = table_layout(seed, deg);
            let pts = field_points(3, layout.sensors());
            let cov = build_covariance(&pts, &p, &layout, MatrixForm::Covariance).unwrap();
            assert_eq!(cov.entries(), &cov.entries().transpose());
            let e = cov.entries();
            let f = cov.factor();
            let recon = f * f.transpose();
            let err = (recon - e).abs().max();
            assert!(err < 1e-6, "reconstruction error {err}");
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            square_root_factor(&m, 1e-9, 1.0),
            Err(Error::NotPositiveSemiDefinite { .. })
        ));
    }

    #[test]
    fn semidefinite_falls_back_to_eigen() {
        // Rank one, loaded by a negligible ε: Cholesky may fail, eigen must not.
        let m = DMatrix::from_element(3, 3, 1.0);
        let f = square_root_factor(&m, 0.0, 1.0).unwrap();
        let err = (&f * f.transpose() - &m).abs().max();
        assert!(err < 1e-12);
    }

    #[test]
    fn subset_is_block_of_full_matrix() {
        let p = CorrelationParams::nominal();
        let layout = table_layout(9, 5.0);
        let target = PolarLocation::new(500.0, 7.3f64.to_radians());
        let mut locs = layout.sensors().to_vec();
        locs.push(target);
        let all = field_points(3, &locs);
        let full = build_covariance(&all, &p, &layout, MatrixForm::Covariance).unwrap();

        let same = local_subset_covariance(
            &all,
            &(0..all.len()).collect::<Vec<_>>(),
            &p,
            &layout,
            MatrixForm::Covariance,
        )
        .unwrap();
        assert_eq!(same.entries(), full.entries());

        let one = local_subset_covariance(&all, &[5], &p, &layout, MatrixForm::Covariance).unwrap();
        assert_eq!(one.entries()[(0, 0)], full.entries()[(5, 5)]);

        // Target plus the six nearest sensors, all transmitters.
        let mut keep: Vec<usize> = (all.len() - 3..all.len()).collect();
        for s in [0usize, 1, 2, 3, 70, 71] {
            keep.extend((0..3).map(|t| s * 3 + t));
        }
        let sub = local_subset_covariance(&all, &keep, &p, &layout, MatrixForm::Covariance).unwrap();
        for (r, &i) in keep.iter().enumerate() {
            for (c, &j) in keep.iter().enumerate() {
                assert_eq!(sub.entries()[(r, c)], full.entries()[(i, j)]);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = CorrelationParams::nominal();
        let layout = table_layout(4, 10.0);
        let pts = field_points(3, layout.sensors());
        let cov = build_covariance(&pts, &p, &layout, MatrixForm::Covariance).unwrap();
        let a = sample_field(&cov, &mut ChaCha8Rng::seed_from_u64(42));
        let b = sample_field(&cov, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        assert_eq!(a.len(), 108);
    }

    #[test]
    fn zero_sigma_samples_zero() {
        let p = CorrelationParams::new(0.0, 100.0, 0.7, 0.3).unwrap();
        let layout = table_layout(4, 30.0);
        let pts = field_points(3, layout.sensors());
        let cov = build_covariance(&pts, &p, &layout, MatrixForm::Covariance).unwrap();
        let w = sample_field(&cov, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_and_identity_sampling_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let p = CorrelationParams::nominal();
        let layout = table_layout(4, 10.0);
        let one = build_covariance(
            &[FieldPoint::new(0, layout.sensors()[0])],
            &p,
            &layout,
            MatrixForm::Covariance,
        )
        .unwrap();
        let draws = 100_000;
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in 0..draws {
            let v = sample_field(&one, &mut rng)[0];
            s += v;
            ss += v * v;
        }
        let mean = s / draws as f64;
        let std = (ss / draws as f64 - mean * mean).sqrt();
        assert!((std - 8.0).abs() < 0.1, "std {std}");

        // Points far apart on distinct transmitters behave as σ²·I.
        let far = [
            FieldPoint::new(0, PolarLocation::new(1e5, 0.0)),
            FieldPoint::new(0, PolarLocation::new(1e5, PI)),
        ];
        let ident = build_covariance(&far, &p, &layout, MatrixForm::Covariance).unwrap();
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..draws {
            let w = sample_field(&ident, &mut rng);
            sx += w[0];
            sy += w[1];
            sxy += w[0] * w[1];
            sxx += w[0] * w[0];
            syy += w[1] * w[1];
        }
        let n = draws as f64;
        let cov = sxy / n - sx * sy / n / n;
        let rho = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
        assert!(rho.abs() < 0.02, "rho {rho}");
    }
}
