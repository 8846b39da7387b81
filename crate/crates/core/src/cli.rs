//! Command-line front end: argument definitions and subcommand dispatch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::config::{parse_config_file, render_config};
use crate::error::{Error, Result};
use crate::estimation::{estimate_parameters, extract_residuals, semivariogram_of, FittedParams, VariogramSource};
use crate::experiments::{
    audit_rmse, run_nmse_sweep, run_power_cdf_sweep, run_rmse_sweep, spacing_curve, ExperimentConfig, ParamMode,
};
use crate::geometry::{adjacent_sensor_distance, PolarLocation};
use crate::io;
use crate::kriging::{baseline_power, KrigingOptions, Predictor};
use crate::plot::{Chart, Series};
use crate::shadowing::{FieldPoint, REGULARIZATION};

#[derive(Debug, Parser)]
#[command(name = "rdz", version, about = "Leakage prediction around a radio dynamic zone")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// key = value configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `master_seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for Monte Carlo iterations.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, global = true, value_enum, default_value_t = Toggle::On)]
    pub plots: Toggle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kriging and baseline RMSE over R0 × φΔ.
    Rmse,
    /// Estimator NMSE over R0 × φΔ.
    Nmse,
    /// Boundary power CDF for each guard width.
    Cdf,
    /// Adjacent sensor spacing table.
    Spacing,
    /// Predict power at one target from measured data.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Layout CSV (kind, id, r_m, phi_rad).
    #[arg(long)]
    pub layout: PathBuf,
    /// Measurement CSV (tx_id, sn_id, power_dbm[, shadowing_db]).
    #[arg(long)]
    pub measurements: PathBuf,
    /// Target azimuth in degrees.
    #[arg(long, allow_negative_numbers = true)]
    pub target_phi_deg: f64,
    /// Target radius in metres; defaults to R0.
    #[arg(long)]
    pub target_r_m: Option<f64>,
    /// Diagonal loading of the Kriging system; 0 interpolates exactly.
    #[arg(long, default_value_t = REGULARIZATION)]
    pub regularization: f64,
}

/// Record of one CLI run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub config_echo: String,
    pub config_hash: String,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<PathBuf>,
}

impl RunManifest {
    /// Output files that do not exist.
    pub fn missing_files(&self) -> Vec<&Path> {
        self.files
            .iter()
            .filter(|f| !f.exists())
            .map(PathBuf::as_path)
            .collect()
    }
}

/// Git-style content hash: SHA-256 over `blob <len>\0<content>`.
pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
    plots: bool,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn chart(&mut self, name: &str, chart: Chart) -> Result<()> {
        if self.plots {
            let p = self.path(name);
            chart.write(&p)?;
        }
        Ok(())
    }
}

/// Loads the config and applies command-line overrides.
pub fn resolve_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => parse_config_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.workers = common.workers.max(1);
    Ok(cfg)
}

/// Runs one subcommand and writes its outputs, the run metadata and the
/// manifest into the output directory.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    let started = now();
    let cfg = resolve_config(&cli.common)?;
    std::fs::create_dir_all(&cli.common.out)?;
    let mut out = Outputs {
        dir: cli.common.out.clone(),
        files: Vec::new(),
        plots: cli.common.plots == Toggle::On,
    };
    let name = match &cli.command {
        Command::Rmse => {
            run_rmse(&cfg, &mut out)?;
            "rmse"
        }
        Command::Nmse => {
            run_nmse(&cfg, &mut out)?;
            "nmse"
        }
        Command::Cdf => {
            run_cdf(&cfg, &mut out)?;
            "cdf"
        }
        Command::Spacing => {
            run_spacing(&cfg, &mut out)?;
            "spacing"
        }
        Command::Predict(args) => {
            run_predict(&cfg, args, &mut out)?;
            "predict"
        }
    };

    let echo = render_config(&cfg);
    let mut manifest = RunManifest {
        command: name.to_string(),
        config_path: cli.common.config.clone(),
        config_hash: content_hash(&echo),
        config_echo: echo,
        out_dir: cli.common.out.clone(),
        seed: cfg.master_seed,
        workers: cfg.workers,
        started_unix: started,
        finished_unix: 0.0,
        files: out.files.clone(),
    };
    let meta = out.path("run_metadata.txt");
    let listing = out.path("manifest.txt");
    manifest.files = out.files.clone();
    manifest.finished_unix = now();
    std::fs::write(&meta, metadata_text(&manifest, &cfg))?;
    let mut list = String::new();
    for f in &manifest.files {
        let _ = writeln!(list, "{}", f.display());
    }
    std::fs::write(&listing, list)?;
    let missing = manifest.missing_files();
    if !missing.is_empty() {
        return Err(Error::Format {
            path: missing[0].to_path_buf(),
            message: "listed output was not written".into(),
        });
    }
    Ok(manifest)
}

fn metadata_text(m: &RunManifest, cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "command = {}", m.command);
    let _ = writeln!(
        s,
        "config_path = {}",
        m.config_path
            .as_ref()
            .map_or("(defaults)".to_string(), |p| p.display().to_string())
    );
    let _ = writeln!(s, "config_hash = {}", m.config_hash);
    let _ = writeln!(s, "seed = {}", m.seed);
    let _ = writeln!(s, "workers = {}", m.workers);
    let _ = writeln!(s, "k_s = {}", cfg.local_sensors);
    let _ = writeln!(s, "started_unix = {:.3}", m.started_unix);
    let _ = writeln!(s, "finished_unix = {:.3}", m.finished_unix);
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    s.push_str("\n[config]\n");
    s.push_str(&m.config_echo);
    s
}

fn run_rmse(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let report = run_rmse_sweep(cfg)?;
    let worst = audit_rmse(&report);
    if !(worst < 1e-9) {
        return Err(Error::EstimationFailed(format!(
            "RMSE audit failed: relative mismatch {worst:e}"
        )));
    }
    io::write_rmse_csv(&out.path("rmse.csv"), &report, cfg.local_sensors, &cfg.mode.to_string())?;
    io::write_rmse_by_tx_csv(&out.path("rmse_by_tx.csv"), &report)?;
    io::write_predictions_csv(&out.path("predictions.csv"), &report)?;
    let mut series = Vec::new();
    for &r0 in &cfg.r0_values {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.r0 == r0).collect();
        series.push(Series::new(
            format!("Kriging R0={r0}"),
            rows.iter().map(|r| (r.phi_delta_deg, r.rmse_krige)).collect(),
        ));
        series.push(
            Series::new(
                format!("Path loss R0={r0}"),
                rows.iter().map(|r| (r.phi_delta_deg, r.rmse_baseline)).collect(),
            )
            .dashed(),
        );
    }
    out.chart(
        "rmse.svg",
        Chart {
            title: "Prediction RMSE".into(),
            x_label: "angle spacing (deg)".into(),
            y_label: "RMSE (dB)".into(),
            series,
            markers: true,
        },
    )
}

fn run_nmse(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let report = run_nmse_sweep(cfg)?;
    io::write_nmse_csv(&out.path("nmse.csv"), &report)?;
    io::write_estimates_csv(&out.path("estimates.csv"), &report)?;
    let mut series = Vec::new();
    for &r0 in &cfg.r0_values {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.r0 == r0).collect();
        let pick = |f: fn(&crate::experiments::NmseRow) -> f64| rows.iter().map(|r| (r.phi_delta_deg, f(r))).collect();
        series.push(Series::new(format!("eta R0={r0}"), pick(|r| r.nmse.eta)));
        series.push(Series::new(format!("A R0={r0}"), pick(|r| r.nmse.a)));
        series.push(Series::new(format!("B R0={r0}"), pick(|r| r.nmse.b)));
        series.push(Series::new(format!("d_cor R0={r0}"), pick(|r| r.nmse.d_cor)));
    }
    out.chart(
        "nmse.svg",
        Chart {
            title: "Coefficient NMSE".into(),
            x_label: "angle spacing (deg)".into(),
            y_label: "NMSE".into(),
            series,
            markers: true,
        },
    )
}

fn run_cdf(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let report = run_power_cdf_sweep(cfg)?;
    io::write_cdf_csv(&out.path("cdf.csv"), &report)?;
    io::write_cdf_summary_csv(&out.path("cdf_summary.csv"), &report)?;
    let series = report
        .rows
        .iter()
        .map(|r| {
            let n = r.cdf.len().max(1);
            let step = (n / 400).max(1);
            let pts = r
                .cdf
                .values()
                .iter()
                .enumerate()
                .step_by(step)
                .map(|(i, v)| (*v, (i + 1) as f64 / n as f64))
                .collect();
            Series::new(format!("RG={} m", r.rg), pts)
        })
        .collect();
    out.chart(
        "cdf.svg",
        Chart {
            title: "Boundary power CDF".into(),
            x_label: "received power (dBm)".into(),
            y_label: "CDF".into(),
            series,
            markers: false,
        },
    )
}

fn run_spacing(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let rows = spacing_curve(&cfg.spacing_r0_values, &cfg.phi_delta_deg_values);
    io::write_spacing_csv(&out.path("spacing.csv"), &rows)?;
    let series = cfg
        .phi_delta_deg_values
        .iter()
        .map(|&deg| {
            Series::new(
                format!("{deg} deg"),
                rows.iter()
                    .filter(|r| r.phi_delta_deg == deg)
                    .map(|r| (r.r0, r.d_delta))
                    .collect(),
            )
        })
        .collect();
    out.chart(
        "spacing.svg",
        Chart {
            title: "Adjacent sensor spacing".into(),
            x_label: "R0 (m)".into(),
            y_label: "spacing (m)".into(),
            series,
            markers: false,
        },
    )
}

/// Uses the first `R0` and `φΔ` of the config as the zone.
fn run_predict(cfg: &ExperimentConfig, args: &PredictArgs, out: &mut Outputs) -> Result<()> {
    let zone = cfg.zone(cfg.r0_values[0], cfg.phi_delta_deg_values[0])?;
    let layout = io::read_layout_csv(&args.layout, zone)?;
    let set = io::read_measurements_csv(&args.measurements, &layout)?;
    let p_tx = cfg.propagation.p_tx;
    let fitted = match cfg.mode {
        ParamMode::Oracle => FittedParams::from_truth(cfg.propagation.eta, &cfg.correlation),
        ParamMode::Estimated => estimate_parameters(&set, p_tx, &cfg.estimation_options())?,
    };
    std::fs::write(out.path("fitted_params.txt"), io::fitted_params_text(&fitted))?;
    io::write_fitted_params_csv(&out.path("fitted_params.csv"), &fitted)?;
    let residuals = extract_residuals(&set, fitted.eta, p_tx);
    let field = match cfg.variogram_source {
        VariogramSource::Powers => set.powers().to_vec(),
        VariogramSource::Residuals => residuals,
    };
    let vg = semivariogram_of(&field, adjacent_sensor_distance(&zone), cfg.max_lag)?;
    io::write_semivariogram_csv(&out.path("semivariogram.csv"), &vg)?;

    let target = PolarLocation::from_degrees(args.target_r_m.unwrap_or(zone.r0()), args.target_phi_deg);
    let options = KrigingOptions {
        local_sensors: cfg.local_sensors,
        regularization: args.regularization,
    };
    let predictor = Predictor::new(&set, fitted, p_tx, options)?;
    let path = out.path("predict.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "tx_id",
        "target_r_m",
        "target_phi_rad",
        "target_phi_deg",
        "y_krige_dbm",
        "y_baseline_dbm",
        "n_local",
        "fallback_flag",
    ])?;
    println!("tx_id,y_krige_dbm,y_baseline_dbm");
    for tx in 0..layout.n_tx() {
        let point = FieldPoint::new(tx, target);
        let sol = predictor.predict(&point)?;
        let base = baseline_power(&point, &layout, &fitted, p_tx)?;
        println!("{},{},{}", tx + 1, sol.predicted_power, base);
        w.write_record([
            (tx + 1).to_string(),
            target.r().to_string(),
            target.phi().to_string(),
            target.phi().to_degrees().to_string(),
            sol.predicted_power.to_string(),
            base.to_string(),
            sol.n_local().to_string(),
            u8::from(sol.fallback).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Process exit status for an error class.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        Error::Io(_) | Error::Csv(_) | Error::Format { .. } => 3,
        Error::InvalidZone(_) | Error::InvalidParams(_) | Error::InvalidDistance(_) => 4,
        _ => 5,
    }
}
