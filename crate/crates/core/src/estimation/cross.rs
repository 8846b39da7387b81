//! Maximum-likelihood fit of the cosine cross-correlation coefficients.
//!
//! At each sensor the `N` residuals are modelled as zero-mean Gaussian with
//! covariance `σ̂² R_k(A, B)`, `R_k` having unit diagonal and `A cos θ_ij(k) + B`
//! off the diagonal. The summed log-likelihood is maximised over the
//! triangle `A ≥ 0, B ≥ 0, A + B ≤ 1 − margin` by a coarse grid followed by a
//! finer grid around the best coarse cell.

use crate::error::{Error, Result};
use crate::geometry::{cos_angle_at_receiver, ZoneLayout};
use crate::shadowing::REGULARIZATION;
use crate::stats::CompensatedSum;

pub const CROSS_COARSE_STEP: f64 = 0.01;
pub const CROSS_FINE_STEP: f64 = 0.001;
/// Keeps `R_k` away from singularity as `A + B → 1`.
pub const CROSS_MARGIN: f64 = 1e-3;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCoeffEstimate {
    pub a: f64,
    pub b: f64,
    pub log_likelihood: f64,
}

/// Precomputed per-sensor cosines and residual stacks.
struct Problem {
    n: usize,
    /// `cos[k][i * n + j]`.
    cos: Vec<Vec<f64>>,
    /// `w[k][i]`: residual of transmitter `i` at sensor `k`.
    w: Vec<Vec<f64>>,
    variance: f64,
}

impl Problem {
    fn new(residuals: &[Vec<f64>], layout: &ZoneLayout, sigma_w: f64) -> Result<Self> {
        let n = layout.n_tx();
        if n < 2 {
            return Err(Error::InsufficientSources(n));
        }
        if residuals.len() != n || residuals.iter().any(|r| r.len() != layout.n_sensors()) {
            return Err(Error::InvalidParams(format!(
                "residual matrix must be {n}×{}",
                layout.n_sensors()
            )));
        }
        if !(sigma_w.is_finite() && sigma_w > 0.0) {
            return Err(Error::EstimationFailed(format!(
                "shadowing deviation must be positive, got {sigma_w}"
            )));
        }
        let txs = layout.transmitters();
        let mut cos = Vec::with_capacity(layout.n_sensors());
        for s in layout.sensors() {
            let mut m = vec![1.0; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let c = cos_angle_at_receiver(&txs[i], &txs[j], s)?;
                    m[i * n + j] = c;
                    m[j * n + i] = c;
                }
            }
            cos.push(m);
        }
        let w = (0..layout.n_sensors())
            .map(|k| (0..n).map(|i| residuals[i][k]).collect())
            .collect();
        Ok(Self {
            n,
            cos,
            w,
            variance: sigma_w * sigma_w,
        })
    }

    /// Summed Gaussian log-likelihood, or `None` if any `R_k` fails to
    /// factorise.
    fn log_likelihood(&self, a: f64, b: f64, scratch: &mut Scratch) -> Option<f64> {
        let n = self.n;
        let mut total = CompensatedSum::new();
        for (cos, w) in self.cos.iter().zip(&self.w) {
            let m = &mut scratch.matrix;
            for i in 0..n {
                for j in 0..=i {
                    m[i * n + j] = if i == j {
                        1.0 + REGULARIZATION
                    } else {
                        a * cos[i * n + j] + b
                    };
                }
            }
            let (log_det, quad) = cholesky_log_det_quad(m, n, w, &mut scratch.y)?;
            let term = n as f64 * (LN_2PI + self.variance.ln()) + log_det + quad / self.variance;
            total.add(-0.5 * term);
        }
        Some(total.value())
    }
}

struct Scratch {
    matrix: Vec<f64>,
    y: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            matrix: vec![0.0; n * n],
            y: vec![0.0; n],
        }
    }
}

/// In-place Cholesky on the lower triangle of `m` (row-major `n × n`),
/// returning `log det M` and `wᵀ M⁻¹ w`.
fn cholesky_log_det_quad(m: &mut [f64], n: usize, w: &[f64], y: &mut [f64]) -> Option<(f64, f64)> {
    let mut log_det = 0.0;
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= m[j * n + k] * m[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let l_jj = d.sqrt();
        m[j * n + j] = l_jj;
        log_det += 2.0 * l_jj.ln();
        for i in (j + 1)..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = s / l_jj;
        }
    }
    // Forward solve L y = w; then wᵀ M⁻¹ w = ‖y‖².
    let mut quad = 0.0;
    for i in 0..n {
        let mut s = w[i];
        for k in 0..i {
            s -= m[i * n + k] * y[k];
        }
        y[i] = s / m[i * n + i];
        quad += y[i] * y[i];
    }
    Some((log_det, quad))
}

/// Log-likelihood of residuals under cross-correlation `(a, b)`; `None` when
/// some per-sensor matrix is not positive definite.
pub fn cross_log_likelihood(
    residuals: &[Vec<f64>],
    layout: &ZoneLayout,
    sigma_w: f64,
    a: f64,
    b: f64,
) -> Result<Option<f64>> {
    let problem = Problem::new(residuals, layout, sigma_w)?;
    Ok(problem.log_likelihood(a, b, &mut Scratch::new(problem.n)))
}

/// Integer lattice points `(i, j)` with `i·step + j·step ≤ 1 − margin`.
fn best_on_lattice(
    problem: &Problem,
    step: f64,
    i_range: (i64, i64),
    j_range: (i64, i64),
    scratch: &mut Scratch,
) -> Option<CrossCoeffEstimate> {
    let limit = ((1.0 - CROSS_MARGIN) / step + 1e-9).floor() as i64;
    let mut best: Option<CrossCoeffEstimate> = None;
    for i in i_range.0.max(0)..=i_range.1 {
        for j in j_range.0.max(0)..=j_range.1 {
            if i + j > limit {
                break;
            }
            let (a, b) = (i as f64 * step, j as f64 * step);
            if let Some(ll) = problem.log_likelihood(a, b, scratch) {
                if best.is_none_or(|cur| ll > cur.log_likelihood) {
                    best = Some(CrossCoeffEstimate {
                        a,
                        b,
                        log_likelihood: ll,
                    });
                }
            }
        }
    }
    best
}

/// Best point of the coarse `0.01` lattice alone.
pub fn coarse_grid_search(residuals: &[Vec<f64>], layout: &ZoneLayout, sigma_w: f64) -> Result<CrossCoeffEstimate> {
    let problem = Problem::new(residuals, layout, sigma_w)?;
    coarse(&problem)
}

fn coarse(problem: &Problem) -> Result<CrossCoeffEstimate> {
    let steps = (1.0 / CROSS_COARSE_STEP).round() as i64;
    best_on_lattice(
        problem,
        CROSS_COARSE_STEP,
        (0, steps),
        (0, steps),
        &mut Scratch::new(problem.n),
    )
    .ok_or_else(|| Error::EstimationFailed("every (A, B) candidate gave a singular covariance".into()))
}

/// ML estimate of `(A, B)` from residuals `[n][k]`.
pub fn estimate_cross_coeffs(residuals: &[Vec<f64>], layout: &ZoneLayout, sigma_w: f64) -> Result<CrossCoeffEstimate> {
    let problem = Problem::new(residuals, layout, sigma_w)?;
    let start = coarse(&problem)?;
    let ratio = (CROSS_COARSE_STEP / CROSS_FINE_STEP).round() as i64;
    let ci = (start.a / CROSS_FINE_STEP).round() as i64;
    let cj = (start.b / CROSS_FINE_STEP).round() as i64;
    let refined = best_on_lattice(
        &problem,
        CROSS_FINE_STEP,
        (ci - ratio, ci + ratio),
        (cj - ratio, cj + ratio),
        &mut Scratch::new(problem.n),
    );
    Ok(match refined {
        Some(r) if r.log_likelihood >= start.log_likelihood => r,
        _ => start,
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::geometry::{PolarLocation, ZoneConfig};

    fn random_residuals(n: usize, k: usize, sigma: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..k)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sigma * z
                    })
                    .collect::<Vec<f64>>()
            })
            .collect()
    }

    /// Oracle: dense determinant and inverse, no shared code path.
    fn brute_ll(res: &[Vec<f64>], layout: &ZoneLayout, sigma: f64, a: f64, b: f64) -> f64 {
        let n = layout.n_tx();
        let txs = layout.transmitters();
        let mut total = 0.0;
        for (k, s) in layout.sensors().iter().enumerate() {
            let mut c = DMatrix::<f64>::identity(n, n) * (1.0 + REGULARIZATION);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let (ti, tj) = (txs[i].to_cartesian(), txs[j].to_cartesian());
                        let (sx, sy) = s.to_cartesian();
                        let (ux, uy) = (ti.0 - sx, ti.1 - sy);
                        let (vx, vy) = (tj.0 - sx, tj.1 - sy);
                        let cos = (ux * vx + uy * vy) / (ux.hypot(uy) * vx.hypot(vy));
                        c[(i, j)] = a * cos + b;
                    }
                }
            }
            let cov = c * (sigma * sigma);
            let w = DVector::from_iterator(n, (0..n).map(|i| res[i][k]));
            let inv = cov.clone().try_inverse().unwrap();
            let quad = (w.transpose() * inv * &w)[(0, 0)];
            total += -0.5 * (n as f64 * LN_2PI + cov.determinant().ln() + quad);
        }
        total
    }

    #[test]
    fn needs_two_sources() {
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, 90.0, 1).unwrap();
        let l = ZoneLayout::random(cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(
            estimate_cross_coeffs(&[vec![0.0; 4]], &l, 1.0),
            Err(Error::InsufficientSources(1))
        ));
    }

    #[test]
    fn likelihood_matches_dense_oracle() {
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, 30.0, 3).unwrap();
        let l = ZoneLayout::random(cfg, &mut ChaCha8Rng::seed_from_u64(4));
        let res = random_residuals(3, 12, 8.0, 9);
        for (a, b) in [(0.0, 0.0), (0.7, 0.29), (0.2, 0.5), (0.5, 0.1)] {
            let got = cross_log_likelihood(&res, &l, 8.0, a, b).unwrap().unwrap();
            let want = brute_ll(&res, &l, 8.0, a, b);
            assert!((got - want).abs() < 1e-8 * want.abs(), "{got} vs {want}");
        }
    }

    #[test]
    fn coarse_grid_matches_exhaustive_search() {
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, 360.0, 2).unwrap();
        let l = ZoneLayout::new(
            cfg,
            vec![PolarLocation::new(120.0, 0.4), PolarLocation::new(300.0, 2.0)],
        )
        .unwrap();
        for seed in 0..5 {
            let res = random_residuals(2, 1, 8.0, seed);
            let got = coarse_grid_search(&res, &l, 8.0).unwrap();
            let mut best = f64::NEG_INFINITY;
            for i in 0..=100 {
                for j in 0..=100 {
                    if i + j > 99 {
                        continue;
                    }
                    let ll = brute_ll(&res, &l, 8.0, i as f64 / 100.0, j as f64 / 100.0);
                    if ll.is_finite() {
                        best = best.max(ll);
                    }
                }
            }
            assert!((got.log_likelihood - best).abs() < 1e-9 * best.abs());
            let at = brute_ll(&res, &l, 8.0, got.a, got.b);
            assert!((at - best).abs() < 1e-9 * best.abs());
        }
    }

    #[test]
    fn refinement_never_worsens() {
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, 20.0, 3).unwrap();
        for seed in 0..5 {
            let l = ZoneLayout::random(cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            let res = random_residuals(3, 18, 8.0, 100 + seed);
            let coarse = coarse_grid_search(&res, &l, 8.0).unwrap();
            let fine = estimate_cross_coeffs(&res, &l, 8.0).unwrap();
            assert!(fine.log_likelihood >= coarse.log_likelihood);
            assert!(fine.a >= 0.0 && fine.b >= 0.0 && fine.a + fine.b <= 1.0 - CROSS_MARGIN + 1e-12);
        }
    }

    #[test]
    fn independent_sources_give_small_a() {
        // iid residuals: true cross-correlation is zero for every pair.
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, 5.0, 3).unwrap();
        let mut a_sum = 0.0;
        let runs = 20;
        for seed in 0..runs {
            let l = ZoneLayout::random(cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            let res = random_residuals(3, 72, 8.0, 500 + seed);
            a_sum += estimate_cross_coeffs(&res, &l, 8.0).unwrap().a;
        }
        let mean_a = a_sum / runs as f64;
        assert!(mean_a < 0.1, "mean A {mean_a}");
    }
}
