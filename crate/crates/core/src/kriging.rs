//! Multi-source ordinary Kriging of shadowing at unmonitored locations, and
//! the path-loss-only baseline it is compared against.
//!
//! Data points are ordered sensor-major, transmitter-minor: local sensor `s`
//! and transmitter `i` sit at index `s * N + i`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimation::{extract_residuals, FittedParams};
use crate::geometry::{PolarLocation, ZoneLayout};
use crate::propagation::{path_loss_power, MeasurementSet};
use crate::shadowing::{cross_correlation, CorrelationParams, FieldPoint, REGULARIZATION};

/// Default number of nearest sensors used per prediction.
pub const DEFAULT_LOCAL_SENSORS: usize = 6;

/// Largest accepted `‖Ax − b‖∞` after the solve.
pub const SOLVER_RESIDUAL_LIMIT: f64 = 1e-8;

/// Indices of the `count` sensors nearest to `target`, nearest first. Equal
/// distances keep the lower index first.
pub fn select_local_sensors(target: &PolarLocation, layout: &ZoneLayout, count: usize) -> Result<Vec<usize>> {
    let k = layout.n_sensors();
    if count == 0 || count > k {
        return Err(Error::InvalidParams(format!(
            "local sensor count must lie in 1..={k}, got {count}"
        )));
    }
    let mut by_distance: Vec<(f64, usize)> = layout
        .sensors()
        .iter()
        .enumerate()
        .map(|(i, s)| (target.distance_to(s), i))
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(by_distance.into_iter().take(count).map(|(_, i)| i).collect())
}

/// Data points for every transmitter at each of `sensors`, sensor-major.
pub fn local_points(layout: &ZoneLayout, sensors: &[usize]) -> Vec<FieldPoint> {
    let locs = layout.sensors();
    sensors
        .iter()
        .flat_map(|&s| (0..layout.n_tx()).map(move |tx| FieldPoint::new(tx, locs[s])))
        .collect()
}

/// The bordered system
/// `[[C, 1], [1ᵀ, 0]] · [λ; μ′] = [c; 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingSystem {
    matrix: DMatrix<f64>,
    rhs: Vec<f64>,
    points: Vec<FieldPoint>,
}

impl KrigingSystem {
    /// Borders a data correlation block `c` (symmetric, `n × n`) and the
    /// target–data correlations. `points` may be empty for synthetic systems.
    pub fn from_correlations(c: &DMatrix<f64>, target: &[f64], points: Vec<FieldPoint>) -> Result<Self> {
        let n = target.len();
        if n == 0 || c.nrows() != n || c.ncols() != n {
            return Err(Error::InvalidParams(format!(
                "correlation block must be {n}×{n} with n ≥ 1"
            )));
        }
        if !points.is_empty() && points.len() != n {
            return Err(Error::InvalidParams("point list does not match the system size".into()));
        }
        let mut matrix = DMatrix::zeros(n + 1, n + 1);
        matrix.view_mut((0, 0), (n, n)).copy_from(c);
        for i in 0..n {
            matrix[(i, n)] = 1.0;
            matrix[(n, i)] = 1.0;
        }
        let mut rhs = target.to_vec();
        rhs.push(1.0);
        Ok(Self { matrix, rhs, points })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn points(&self) -> &[FieldPoint] {
        &self.points
    }

    /// Number of data points.
    pub fn n_data(&self) -> usize {
        self.rhs.len() - 1
    }
}

/// Builds the system for predicting `target` from `data`. `regularization`
/// is added to the data block diagonal; pass 0 for exact interpolation.
pub fn assemble_system(
    target: &FieldPoint,
    data: &[FieldPoint],
    params: &CorrelationParams,
    layout: &ZoneLayout,
    regularization: f64,
) -> Result<KrigingSystem> {
    if data.is_empty() {
        return Err(Error::InvalidParams("Kriging needs at least one data point".into()));
    }
    let n = data.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = cross_correlation(&data[i], &data[i], params, layout)? + regularization;
        for j in (i + 1)..n {
            let v = cross_correlation(&data[i], &data[j], params, layout)?;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let rhs = data
        .iter()
        .map(|p| cross_correlation(target, p, params, layout))
        .collect::<Result<Vec<_>>>()?;
    KrigingSystem::from_correlations(&c, &rhs, data.to_vec())
}

/// Weights `λ` and multiplier `μ′` of a solved system.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingWeights {
    pub weights: Vec<f64>,
    pub multiplier: f64,
    /// `‖Ax − b‖∞` of the returned solution.
    pub residual: f64,
}

/// Dense LU with partial pivoting, in place on a row-major copy.
fn lu_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<f64> = Vec::with_capacity(n * n);
    for i in 0..n {
        m.extend((0..n).map(|j| a[(i, j)]));
    }
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::SingularSystem);
    }
    let tiny = scale * 1e-14;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| m[p * n + col].abs().total_cmp(&m[q * n + col].abs()))
            .unwrap_or(col);
        if m[pivot * n + col].abs() <= tiny {
            return Err(Error::SingularSystem);
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            x.swap(col, pivot);
        }
        let d = m[col * n + col];
        for row in (col + 1)..n {
            let f = m[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            m[row * n + col] = 0.0;
            for j in (col + 1)..n {
                m[row * n + j] -= f * m[col * n + j];
            }
            x[row] -= f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = x[row];
        for j in (row + 1)..n {
            s -= m[row * n + j] * x[j];
        }
        x[row] = s / m[row * n + row];
    }
    Ok(x)
}

fn residual_inf(a: &DMatrix<f64>, x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|i| b[i] - (0..x.len()).map(|j| a[(i, j)] * x[j]).sum::<f64>())
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, r| m.max(r.abs()))
}

/// Solves the bordered system, with one step of iterative refinement when
/// the first pass misses the residual limit.
pub fn solve_weights(system: &KrigingSystem) -> Result<KrigingWeights> {
    let a = &system.matrix;
    let b = &system.rhs;
    let mut x = lu_solve(a, b)?;
    let mut r = residual_inf(a, &x, b);
    if inf_norm(&r) >= SOLVER_RESIDUAL_LIMIT {
        let dx = lu_solve(a, &r)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        r = residual_inf(a, &x, b);
    }
    let residual = inf_norm(&r);
    if !(residual < SOLVER_RESIDUAL_LIMIT) {
        return Err(Error::SingularSystem);
    }
    let multiplier = x.pop().unwrap_or(0.0);
    Ok(KrigingWeights {
        weights: x,
        multiplier,
        residual,
    })
}

/// Prediction for one target; `weights` is empty when the solver failed and
/// the baseline was used instead.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingSolution {
    pub points: Vec<FieldPoint>,
    pub weights: Vec<f64>,
    pub multiplier: f64,
    pub predicted_shadowing: f64,
    pub predicted_power: f64,
    pub fallback: bool,
}

impl KrigingSolution {
    pub fn n_local(&self) -> usize {
        self.points.len()
    }
}

/// `p_tx − 10 η̂ log10 d` from the target's transmitter.
pub fn baseline_power(target: &FieldPoint, layout: &ZoneLayout, fitted: &FittedParams, p_tx: f64) -> Result<f64> {
    if target.tx >= layout.n_tx() {
        return Err(Error::InvalidParams(format!(
            "transmitter index {} out of range",
            target.tx
        )));
    }
    path_loss_power(p_tx, fitted.eta, layout.tx_distance(target.tx, &target.location))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrigingOptions {
    pub local_sensors: usize,
    /// Diagonal loading of the data block; 0 gives an exact interpolator.
    pub regularization: f64,
}

impl Default for KrigingOptions {
    fn default() -> Self {
        Self {
            local_sensors: DEFAULT_LOCAL_SENSORS,
            regularization: REGULARIZATION,
        }
    }
}

/// Residuals and fitted model of one measurement set, ready to predict any
/// number of targets.
#[derive(Debug, Clone)]
pub struct Predictor<'a> {
    measurements: &'a MeasurementSet,
    fitted: FittedParams,
    corr: CorrelationParams,
    p_tx: f64,
    residuals: Vec<Vec<f64>>,
    options: KrigingOptions,
}

impl<'a> Predictor<'a> {
    pub fn new(
        measurements: &'a MeasurementSet,
        fitted: FittedParams,
        p_tx: f64,
        options: KrigingOptions,
    ) -> Result<Self> {
        let corr = fitted.correlation_params()?;
        if options.local_sensors == 0 || options.local_sensors > measurements.n_sensors() {
            return Err(Error::InvalidParams(format!(
                "local sensor count must lie in 1..={}, got {}",
                measurements.n_sensors(),
                options.local_sensors
            )));
        }
        let residuals = extract_residuals(measurements, fitted.eta, p_tx);
        Ok(Self {
            measurements,
            fitted,
            corr,
            p_tx,
            residuals,
            options,
        })
    }

    pub fn residuals(&self) -> &[Vec<f64>] {
        &self.residuals
    }

    pub fn predict(&self, target: &FieldPoint) -> Result<KrigingSolution> {
        let layout = self.measurements.layout();
        let baseline = baseline_power(target, layout, &self.fitted, self.p_tx)?;
        let sensors = select_local_sensors(&target.location, layout, self.options.local_sensors)?;
        let points = local_points(layout, &sensors);
        let system = assemble_system(target, &points, &self.corr, layout, self.options.regularization)?;
        let solved = match solve_weights(&system) {
            Ok(s) => s,
            Err(Error::SingularSystem) => {
                log::warn!("singular Kriging system; using the path-loss baseline");
                return Ok(KrigingSolution {
                    points,
                    weights: Vec::new(),
                    multiplier: 0.0,
                    predicted_shadowing: 0.0,
                    predicted_power: baseline,
                    fallback: true,
                });
            }
            Err(e) => return Err(e),
        };
        let n = layout.n_tx();
        let mut shadow = 0.0;
        for (idx, w) in solved.weights.iter().enumerate() {
            shadow += w * self.residuals[idx % n][sensors[idx / n]];
        }
        Ok(KrigingSolution {
            points,
            weights: solved.weights,
            multiplier: solved.multiplier,
            predicted_shadowing: shadow,
            predicted_power: baseline + shadow,
            fallback: false,
        })
    }
}

/// One-shot form of [`Predictor::predict`] with `local_sensors` nearest
/// sensors and the default regularization.
pub fn predict_power(
    target: &FieldPoint,
    measurements: &MeasurementSet,
    fitted: &FittedParams,
    p_tx: f64,
    local_sensors: usize,
) -> Result<KrigingSolution> {
    let options = KrigingOptions {
        local_sensors,
        ..Default::default()
    };
    Predictor::new(measurements, *fitted, p_tx, options)?.predict(target)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::ZoneConfig;
    use crate::propagation::{mean_power, synthesize_measurements, PropagationParams};

    fn layout(seed: u64, deg: f64) -> ZoneLayout {
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, deg, 3).unwrap();
        ZoneLayout::random(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn local_sensor_selection() {
        let l = layout(1, 5.0);
        let t = PolarLocation::from_degrees(500.0, 7.3);
        assert_eq!(select_local_sensors(&t, &l, 3).unwrap(), vec![1, 2, 0]);
        let on_first = PolarLocation::from_degrees(520.0, 0.0);
        let two = select_local_sensors(&on_first, &l, 2).unwrap();
        assert_eq!(two[0], 0);
        assert!(two[1] == 1 || two[1] == 71);
        let all = select_local_sensors(&t, &l, 72).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, (0..72).collect::<Vec<_>>());
        assert!(select_local_sensors(&t, &l, 0).is_err());
        assert!(select_local_sensors(&t, &l, 73).is_err());
    }

    #[test]
    fn exact_ties_keep_lower_index() {
        let l = layout(1, 90.0);
        // Centre of the disk: every sensor at distance R0.
        let centre = PolarLocation::new(0.0, 0.0);
        assert_eq!(select_local_sensors(&centre, &l, 4).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_point_system() {
        let l = layout(2, 10.0);
        let corr = CorrelationParams::nominal();
        let data = [FieldPoint::new(0, l.sensors()[0])];
        let target = FieldPoint::new(1, PolarLocation::from_degrees(500.0, 3.0));
        let sys = assemble_system(&target, &data, &corr, &l, REGULARIZATION).unwrap();
        assert_eq!(sys.matrix().shape(), (2, 2));
        let w = solve_weights(&sys).unwrap();
        assert_relative_eq!(w.weights[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn coincident_data_points_split_evenly() {
        let l = layout(2, 10.0);
        let corr = CorrelationParams::nominal();
        let p = FieldPoint::new(0, l.sensors()[3]);
        let target = FieldPoint::new(0, PolarLocation::from_degrees(500.0, 33.0));
        let sys = assemble_system(&target, &[p, p], &corr, &l, REGULARIZATION).unwrap();
        let w = solve_weights(&sys).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-6, "{:?}", w.weights);
        assert!((w.weights[1] - 0.5).abs() < 1e-6);
        assert!(solve_weights(&assemble_system(&target, &[p, p], &corr, &l, 0.0).unwrap()).is_err());
    }

    #[test]
    fn matrix_matches_elementwise_correlations() {
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, 10.0, 2).unwrap();
        let l = ZoneLayout::new(
            cfg,
            vec![PolarLocation::new(200.0, 0.3), PolarLocation::new(120.0, 2.5)],
        )
        .unwrap();
        let corr = CorrelationParams::nominal();
        let data = local_points(&l, &[0, 1]);
        let target = FieldPoint::new(1, PolarLocation::from_degrees(500.0, 4.0));
        let sys = assemble_system(&target, &data, &corr, &l, 0.0).unwrap();
        // Independent Cartesian evaluation of the model.
        let unit = |p: &FieldPoint| {
            let (sx, sy) = p.location.to_cartesian();
            let (tx, ty) = l.transmitters()[p.tx].to_cartesian();
            let n = (tx - sx).hypot(ty - sy);
            ((tx - sx) / n, (ty - sy) / n)
        };
        let rho = |p: &FieldPoint, q: &FieldPoint| {
            if p == q {
                return 1.0;
            }
            let (a, b) = (unit(p), unit(q));
            let (px, py) = p.location.to_cartesian();
            let (qx, qy) = q.location.to_cartesian();
            let d = (px - qx).hypot(py - qy);
            (0.7 * (a.0 * b.0 + a.1 * b.1) + 0.3) * 0.5f64.powf(d / 100.0)
        };
        assert_eq!(data.iter().map(|p| p.tx).collect::<Vec<_>>(), vec![0, 1, 0, 1]);
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(sys.matrix()[(i, j)], rho(&data[i], &data[j]), epsilon = 1e-12);
            }
            assert_relative_eq!(sys.rhs()[i], rho(&target, &data[i]), epsilon = 1e-12);
            assert_eq!(sys.matrix()[(i, 4)], 1.0);
            assert_eq!(sys.matrix()[(4, i)], 1.0);
        }
        assert_eq!(sys.matrix()[(4, 4)], 0.0);
        assert_eq!(sys.rhs()[4], 1.0);
    }

    #[test]
    fn uncorrelated_data_get_equal_weights() {
        let n = 6;
        let sys = KrigingSystem::from_correlations(&DMatrix::identity(n, n), &[0.2; 6], Vec::new()).unwrap();
        let w = solve_weights(&sys).unwrap();
        for v in &w.weights {
            assert_relative_eq!(*v, 1.0 / 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_interpolation_at_a_data_point() {
        let l = layout(4, 10.0);
        let corr = CorrelationParams::nominal();
        let data = local_points(&l, &[0, 1, 2]);
        let sys = assemble_system(&data[4], &data, &corr, &l, 0.0).unwrap();
        let w = solve_weights(&sys).unwrap();
        for (i, v) in w.weights.iter().enumerate() {
            let expect = if i == 4 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-9, "{i}: {v}");
        }
        assert!(w.multiplier.abs() < 1e-9);
    }

    fn random_psd_system(rng: &mut ChaCha8Rng, n: usize) -> KrigingSystem {
        let g = DMatrix::from_fn(n, n + 2, |_, _| rng.random_range(-1.0..1.0));
        let mut c = &g * g.transpose() / (n + 2) as f64;
        for i in 0..n {
            c[(i, i)] += 0.05;
        }
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..1.0)).collect();
        KrigingSystem::from_correlations(&c, &rhs, Vec::new()).unwrap()
    }

    #[test]
    fn matches_generic_dense_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let n = 2 + trial % 20;
            let sys = random_psd_system(&mut rng, n);
            let w = solve_weights(&sys).unwrap();
            let oracle = sys
                .matrix()
                .clone()
                .lu()
                .solve(&DVector::from_column_slice(sys.rhs()))
                .unwrap();
            for i in 0..n {
                assert!((w.weights[i] - oracle[i]).abs() < 1e-9);
            }
            assert!((w.multiplier - oracle[n]).abs() < 1e-9);
            assert!(w.residual < SOLVER_RESIDUAL_LIMIT);
        }
    }

    #[test]
    fn zero_shadowing_prediction_is_exact() {
        let l = layout(5, 10.0);
        let prop = PropagationParams::nominal();
        let zero = CorrelationParams::new(0.0, 100.0, 0.7, 0.3).unwrap();
        let set = synthesize_measurements(&l, &prop, &zero, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let fitted = FittedParams::from_truth(3.5, &CorrelationParams::nominal());
        let t = PolarLocation::from_degrees(500.0, 123.4);
        for tx in 0..3 {
            let sol = predict_power(&FieldPoint::new(tx, t), &set, &fitted, 30.0, 6).unwrap();
            let truth = mean_power(&prop, l.tx_distance(tx, &t)).unwrap();
            assert!((sol.predicted_power - truth).abs() < 1e-9);
            assert_eq!(sol.n_local(), 18);
        }
    }

    #[test]
    fn target_on_sensor_reproduces_measurement() {
        let l = layout(6, 10.0);
        let corr = CorrelationParams::nominal();
        let set = synthesize_measurements(
            &l,
            &PropagationParams::nominal(),
            &corr,
            &mut ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        let fitted = FittedParams::from_truth(3.5, &corr);
        let exact = KrigingOptions {
            local_sensors: 6,
            regularization: 0.0,
        };
        let pred = Predictor::new(&set, fitted, 30.0, exact).unwrap();
        for tx in 0..3 {
            let sol = pred.predict(&FieldPoint::new(tx, l.sensors()[7])).unwrap();
            assert!((sol.predicted_power - set.power(tx, 7)).abs() < 1e-8);
        }
    }

    #[test]
    fn baseline_values() {
        let cfg = ZoneConfig::from_degrees(500.0, 50.0, 10.0, 1).unwrap();
        let l = ZoneLayout::new(cfg, vec![PolarLocation::new(0.0, 0.0)]).unwrap();
        let fitted = FittedParams::from_truth(3.5, &CorrelationParams::nominal());
        let t = FieldPoint::new(0, PolarLocation::from_degrees(500.0, 17.0));
        let v = baseline_power(&t, &l, &fitted, 30.0).unwrap();
        assert!((v - -64.47).abs() < 0.01);
        assert_eq!(v, mean_power(&PropagationParams::nominal(), 500.0).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn weights_sum_to_one(seed in 0u64..10_000, deg in prop::sample::select(vec![5.0, 10.0, 15.0, 20.0, 30.0]),
                              phi in 0.0f64..360.0, k_s in 1usize..10) {
            let l = layout(seed, deg);
            let corr = CorrelationParams::nominal();
            let t = PolarLocation::from_degrees(500.0, phi);
            let sensors = select_local_sensors(&t, &l, k_s.min(l.n_sensors())).unwrap();
            let data = local_points(&l, &sensors);
            let sys = assemble_system(&FieldPoint::new((seed % 3) as usize, t), &data, &corr, &l, REGULARIZATION).unwrap();
            let w = solve_weights(&sys).unwrap();
            let s: f64 = w.weights.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn constant_shift_moves_prediction(seed in 0u64..1000, c in -20.0f64..20.0, phi in 0.0f64..360.0) {
            let l = layout(seed, 10.0);
            let corr = CorrelationParams::nominal();
            let set = synthesize_measurements(&l, &PropagationParams::nominal(), &corr, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let shifted: Vec<Vec<f64>> = set.powers().iter().map(|r| r.iter().map(|v| v + c).collect()).collect();
            let moved = MeasurementSet::new(l.clone(), shifted, None).unwrap();
            let fitted = FittedParams::from_truth(3.5, &corr);
            let t = FieldPoint::new(1, PolarLocation::from_degrees(500.0, phi));
            let a = predict_power(&t, &set, &fitted, 30.0, 6).unwrap();
            let b = predict_power(&t, &moved, &fitted, 30.0, 6).unwrap();
            prop_assert!((b.predicted_shadowing - a.predicted_shadowing - c).abs() < 1e-8);
        }
    }
}
