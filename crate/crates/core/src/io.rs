//! CSV and key=value import/export. Transmitter and sensor ids in files are
//! 1-based; floats use Rust's shortest round-trip formatting.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Writer};

use crate::error::{Error, Result};
use crate::estimation::{FittedParams, Semivariogram};
use crate::experiments::{CdfReport, NmseReport, RmseReport, SpacingRow};
use crate::geometry::{PolarLocation, ZoneConfig, ZoneLayout};
use crate::propagation::MeasurementSet;
use crate::shadowing::CovarianceMatrix;

/// Quantile levels written for each CDF.
pub const CDF_LEVELS: usize = 101;

fn fmt(v: f64) -> String {
    v.to_string()
}

fn writer(path: &Path) -> Result<Writer<File>> {
    Ok(Writer::from_path(path)?)
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn write_layout_csv(path: &Path, layout: &ZoneLayout) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["kind", "id", "r_m", "phi_rad"])?;
    for (i, t) in layout.transmitters().iter().enumerate() {
        w.write_record(["tx", &(i + 1).to_string(), &fmt(t.r()), &fmt(t.phi())])?;
    }
    for (i, s) in layout.sensors().iter().enumerate() {
        w.write_record(["sn", &(i + 1).to_string(), &fmt(s.r()), &fmt(s.phi())])?;
    }
    w.flush()?;
    Ok(())
}

/// Column positions by case-insensitive header name.
struct Columns {
    header: StringRecord,
}

impl Columns {
    fn find(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
    }

    fn require(&self, path: &Path, name: &str) -> Result<usize> {
        self.find(name)
            .ok_or_else(|| format_err(path, format!("missing column `{name}`")))
    }
}

fn open(path: &Path) -> Result<(csv::Reader<File>, Columns)> {
    let mut r = ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = r.headers()?.clone();
    Ok((r, Columns { header }))
}

fn field<'a>(path: &Path, row: usize, rec: &'a StringRecord, col: usize) -> Result<&'a str> {
    rec.get(col)
        .ok_or_else(|| format_err(path, format!("row {row}: missing field {}", col + 1)))
}

fn number(path: &Path, row: usize, rec: &StringRecord, col: usize) -> Result<f64> {
    let s = field(path, row, rec, col)?;
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format_err(path, format!("row {row}: `{s}` is not a finite number")))
}

fn index(path: &Path, row: usize, rec: &StringRecord, col: usize, max: usize) -> Result<usize> {
    let s = field(path, row, rec, col)?;
    match s.parse::<usize>() {
        Ok(id) if (1..=max).contains(&id) => Ok(id - 1),
        _ => Err(format_err(path, format!("row {row}: id `{s}` outside 1..={max}"))),
    }
}

/// Reads a layout CSV for `config`. Transmitter rows are required; sensor
/// rows are optional but must match the configured ring when present.
pub fn read_layout_csv(path: &Path, config: ZoneConfig) -> Result<ZoneLayout> {
    let (mut r, cols) = open(path)?;
    let (ck, ci, cr, cp) = (
        cols.require(path, "kind")?,
        cols.require(path, "id")?,
        cols.require(path, "r_m")?,
        cols.require(path, "phi_rad")?,
    );
    let mut txs: Vec<Option<PolarLocation>> = vec![None; config.n_tx()];
    let expected = crate::geometry::place_sensors(&config);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let kind = field(path, row, &rec, ck)?.to_ascii_lowercase();
        let loc = PolarLocation::new(number(path, row, &rec, cr)?, number(path, row, &rec, cp)?);
        match kind.as_str() {
            "tx" => {
                let id = index(path, row, &rec, ci, config.n_tx())?;
                if txs[id].replace(loc).is_some() {
                    return Err(format_err(path, format!("row {row}: duplicate transmitter {}", id + 1)));
                }
            }
            "sn" => {
                let id = index(path, row, &rec, ci, config.n_sensors())?;
                if loc.distance_to(&expected[id]) > 1e-6 * config.r0().max(1.0) {
                    return Err(format_err(
                        path,
                        format!("row {row}: sensor {} is not on the configured ring position", id + 1),
                    ));
                }
            }
            other => return Err(format_err(path, format!("row {row}: unknown kind `{other}`"))),
        }
    }
    let txs = txs
        .into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| format_err(path, format!("transmitter {} missing", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    ZoneLayout::new(config, txs)
}

pub fn write_measurements_csv(path: &Path, set: &MeasurementSet) -> Result<()> {
    let mut w = writer(path)?;
    let truth = set.shadowing();
    if truth.is_some() {
        w.write_record(["tx_id", "sn_id", "power_dbm", "shadowing_db"])?;
    } else {
        w.write_record(["tx_id", "sn_id", "power_dbm"])?;
    }
    for n in 0..set.n_tx() {
        for k in 0..set.n_sensors() {
            let mut rec = vec![(n + 1).to_string(), (k + 1).to_string(), fmt(set.power(n, k))];
            if let Some(t) = truth {
                rec.push(fmt(t[n][k]));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads measurements; every (tx, sensor) pair must appear exactly once.
pub fn read_measurements_csv(path: &Path, layout: &ZoneLayout) -> Result<MeasurementSet> {
    let (mut r, cols) = open(path)?;
    let (ct, cs, cp) = (
        cols.require(path, "tx_id")?,
        cols.require(path, "sn_id")?,
        cols.require(path, "power_dbm")?,
    );
    let cw = cols.find("shadowing_db");
    let (n, k) = (layout.n_tx(), layout.n_sensors());
    let mut powers = vec![vec![f64::NAN; k]; n];
    let mut shadow = vec![vec![f64::NAN; k]; n];
    let mut seen = vec![vec![false; k]; n];
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let tx = index(path, row, &rec, ct, n)?;
        let sn = index(path, row, &rec, cs, k)?;
        if std::mem::replace(&mut seen[tx][sn], true) {
            return Err(format_err(
                path,
                format!("row {row}: duplicate pair ({}, {})", tx + 1, sn + 1),
            ));
        }
        powers[tx][sn] = number(path, row, &rec, cp)?;
        if let Some(c) = cw {
            shadow[tx][sn] = number(path, row, &rec, c)?;
        }
    }
    if let Some((tx, sn)) = (0..n)
        .flat_map(|t| (0..k).map(move |s| (t, s)))
        .find(|&(t, s)| !seen[t][s])
    {
        return Err(format_err(path, format!("missing pair ({}, {})", tx + 1, sn + 1)));
    }
    MeasurementSet::new(layout.clone(), powers, cw.map(|_| shadow))
}

pub fn write_covariance_csv(path: &Path, cov: &CovarianceMatrix) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["row", "col", "value"])?;
    let m = cov.entries();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_record([(i + 1).to_string(), (j + 1).to_string(), fmt(m[(i, j)])])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_semivariogram_csv(path: &Path, vg: &Semivariogram) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["lag_m", "gamma", "pairs"])?;
    for l in &vg.lags {
        w.write_record([fmt(l.lag_m), fmt(l.gamma), l.pairs.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

const FITTED_FIELDS: [&str; 7] = ["eta", "sigma_w_db", "a", "b", "d_cor_m", "sill_db2", "range_m"];

fn fitted_values(p: &FittedParams) -> [f64; 7] {
    [p.eta, p.sigma_w, p.a, p.b, p.d_cor, p.sill, p.range]
}

/// `key = value` lines.
pub fn fitted_params_text(p: &FittedParams) -> String {
    let mut s = String::new();
    for (k, v) in FITTED_FIELDS.iter().zip(fitted_values(p)) {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

pub fn write_fitted_params_csv(path: &Path, p: &FittedParams) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(FITTED_FIELDS)?;
    w.write_record(fitted_values(p).map(fmt))?;
    w.flush()?;
    Ok(())
}

pub fn write_rmse_csv(path: &Path, report: &RmseReport, k_s: usize, mode: &str) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "r0_m",
        "rg_m",
        "phi_delta_rad",
        "phi_delta_deg",
        "n_sensors",
        "k_s",
        "mode",
        "n_iterations",
        "n_failed",
        "n_fallback",
        "rmse_krige_db",
        "rmse_baseline_db",
    ])?;
    for r in &report.rows {
        w.write_record([
            fmt(r.r0),
            fmt(r.rg),
            fmt(r.phi_delta_deg.to_radians()),
            fmt(r.phi_delta_deg),
            r.n_sensors.to_string(),
            k_s.to_string(),
            mode.to_string(),
            r.iterations.to_string(),
            r.failed.to_string(),
            r.fallbacks.to_string(),
            fmt(r.rmse_krige),
            fmt(r.rmse_baseline),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rmse_by_tx_csv(path: &Path, report: &RmseReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["r0_m", "phi_delta_deg", "tx_id", "rmse_krige_db", "rmse_baseline_db"])?;
    for r in &report.rows {
        for (t, (k, b)) in r.rmse_krige_by_tx.iter().zip(&r.rmse_baseline_by_tx).enumerate() {
            w.write_record([fmt(r.r0), fmt(r.phi_delta_deg), (t + 1).to_string(), fmt(*k), fmt(*b)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions_csv(path: &Path, report: &RmseReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "r0_m",
        "phi_delta_deg",
        "iter",
        "target_phi_rad",
        "target_phi_deg",
        "tx_id",
        "y_true_dbm",
        "y_krige_dbm",
        "y_baseline_dbm",
        "n_local",
        "fallback_flag",
    ])?;
    for p in &report.predictions {
        w.write_record([
            fmt(p.r0),
            fmt(p.phi_delta_deg),
            (p.iteration + 1).to_string(),
            fmt(p.target_phi),
            fmt(p.target_phi.to_degrees()),
            (p.tx + 1).to_string(),
            fmt(p.y_true),
            fmt(p.y_krige),
            fmt(p.y_baseline),
            p.n_local.to_string(),
            u8::from(p.fallback).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_nmse_csv(path: &Path, report: &NmseReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "r0_m",
        "phi_delta_rad",
        "phi_delta_deg",
        "n_sensors",
        "n_iterations",
        "n_failed",
        "nmse_eta",
        "nmse_a",
        "nmse_b",
        "nmse_d_cor",
        "mean_eta",
        "mean_a",
        "mean_b",
        "mean_d_cor_m",
        "median_d_cor_m",
    ])?;
    for r in &report.rows {
        w.write_record([
            fmt(r.r0),
            fmt(r.phi_delta_deg.to_radians()),
            fmt(r.phi_delta_deg),
            r.n_sensors.to_string(),
            r.iterations.to_string(),
            r.failed.to_string(),
            fmt(r.nmse.eta),
            fmt(r.nmse.a),
            fmt(r.nmse.b),
            fmt(r.nmse.d_cor),
            fmt(r.mean.eta),
            fmt(r.mean.a),
            fmt(r.mean.b),
            fmt(r.mean.d_cor),
            fmt(r.median_d_cor),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_estimates_csv(path: &Path, report: &NmseReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "r0_m",
        "phi_delta_deg",
        "iter",
        "eta_hat",
        "a_hat",
        "b_hat",
        "d_cor_hat_m",
    ])?;
    for (r0, deg, i, e) in &report.estimates {
        w.write_record([
            fmt(*r0),
            fmt(*deg),
            (i + 1).to_string(),
            fmt(e.eta),
            fmt(e.a),
            fmt(e.b),
            fmt(e.d_cor),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Quantile table: `CDF_LEVELS` evenly spaced probabilities per guard width.
pub fn write_cdf_csv(path: &Path, report: &CdfReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["rg_m", "probability", "power_dbm"])?;
    for r in &report.rows {
        for i in 0..CDF_LEVELS {
            let p = i as f64 / (CDF_LEVELS - 1) as f64;
            w.write_record([fmt(r.rg), fmt(p), fmt(r.cdf.quantile(p))])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf_summary_csv(path: &Path, report: &CdfReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "r0_m",
        "rg_m",
        "realizations",
        "n_samples",
        "p10_dbm",
        "p50_dbm",
        "p90_dbm",
    ])?;
    for r in &report.rows {
        w.write_record([
            fmt(r.r0),
            fmt(r.rg),
            r.realizations.to_string(),
            r.cdf.len().to_string(),
            fmt(r.cdf.quantile(0.1)),
            fmt(r.cdf.quantile(0.5)),
            fmt(r.cdf.quantile(0.9)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spacing_csv(path: &Path, rows: &[SpacingRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["r0_m", "phi_delta_rad", "phi_delta_deg", "d_delta_m"])?;
    for r in rows {
        w.write_record([
            fmt(r.r0),
            fmt(r.phi_delta_deg.to_radians()),
            fmt(r.phi_delta_deg),
            fmt(r.d_delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}
