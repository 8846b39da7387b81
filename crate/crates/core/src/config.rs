//! Plain-text `key = value` experiment configuration.
//!
//! Keys are case-insensitive, `#` starts a comment, lists are
//! comma-separated. Angles are given in degrees. Missing keys keep the
//! defaults of [`ExperimentConfig::default`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiments::ExperimentConfig;
use crate::shadowing::CorrelationParams;

const KEYS: &[&str] = &[
    "p_tx_dbm",
    "eta",
    "sigma_w_db",
    "d_cor_m",
    "a",
    "b",
    "n_tx",
    "r0_m",
    "r0_m_values",
    "rg_m",
    "phi_delta_deg",
    "phi_delta_deg_values",
    "rg_m_values",
    "cdf_r0_m",
    "cdf_phi_delta_deg",
    "cdf_samples",
    "spacing_r0_m_values",
    "n_iterations",
    "master_seed",
    "k_s",
    "mode",
    "variogram_source",
    "max_lag",
    "target_radial_offset_m",
];

fn config_err(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn scalar<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| config_err(line, key, format!("cannot parse `{}`", value.trim())))
}

fn finite(line: usize, key: &str, value: &str) -> Result<f64> {
    let v: f64 = scalar(line, key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(line, key, "value must be finite"))
    }
}

fn list(line: usize, key: &str, value: &str) -> Result<Vec<f64>> {
    let items = value
        .split(',')
        .map(|s| finite(line, key, s))
        .collect::<Result<Vec<_>>>()?;
    if items.is_empty() {
        return Err(config_err(line, key, "list must not be empty"));
    }
    Ok(items)
}

fn check_angle(line: usize, key: &str, deg: f64) -> Result<()> {
    let k = 360.0 / deg;
    if !(deg > 0.0) || (k - k.round()).abs() > 1e-9 {
        return Err(config_err(
            line,
            key,
            format!("360 / {deg} is not a whole number of sensors"),
        ));
    }
    Ok(())
}

/// Parses configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut corr = CorrelationParams::nominal();
    let mut eta = cfg.propagation.eta;
    let mut p_tx = cfg.propagation.p_tx;
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(config_err(line, content, "expected `key = value`"));
        };
        let key = k.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(config_err(line, &key, "unknown key"));
        }
        if let Some(first) = seen.insert(key.clone(), line) {
            return Err(config_err(
                line,
                &key,
                format!("duplicate key, first set on line {first}"),
            ));
        }
        let v = v.trim();
        match key.as_str() {
            "p_tx_dbm" => p_tx = finite(line, &key, v)?,
            "eta" => eta = finite(line, &key, v)?,
            "sigma_w_db" => corr.sigma_w = finite(line, &key, v)?,
            "d_cor_m" => corr.d_cor = finite(line, &key, v)?,
            "a" => corr.a = finite(line, &key, v)?,
            "b" => corr.b = finite(line, &key, v)?,
            "n_tx" => cfg.n_tx = scalar(line, &key, v)?,
            "r0_m" => cfg.r0_values = vec![finite(line, &key, v)?],
            "r0_m_values" => cfg.r0_values = list(line, &key, v)?,
            "rg_m" => cfg.rg = Some(finite(line, &key, v)?),
            "phi_delta_deg" => cfg.phi_delta_deg_values = vec![finite(line, &key, v)?],
            "phi_delta_deg_values" => cfg.phi_delta_deg_values = list(line, &key, v)?,
            "rg_m_values" => cfg.rg_values = list(line, &key, v)?,
            "cdf_r0_m" => cfg.cdf_r0 = finite(line, &key, v)?,
            "cdf_phi_delta_deg" => cfg.cdf_phi_delta_deg = finite(line, &key, v)?,
            "cdf_samples" => cfg.cdf_samples = scalar(line, &key, v)?,
            "spacing_r0_m_values" => cfg.spacing_r0_values = list(line, &key, v)?,
            "n_iterations" => cfg.n_iterations = scalar(line, &key, v)?,
            "master_seed" => cfg.master_seed = scalar(line, &key, v)?,
            "k_s" => cfg.local_sensors = scalar(line, &key, v)?,
            "mode" => cfg.mode = v.parse().map_err(|m: String| config_err(line, &key, m))?,
            "variogram_source" => cfg.variogram_source = v.parse().map_err(|m: String| config_err(line, &key, m))?,
            "max_lag" => cfg.max_lag = scalar(line, &key, v)?,
            "target_radial_offset_m" => cfg.target_radial_offset = finite(line, &key, v)?,
            _ => unreachable!("key list and match arms disagree"),
        }
    }

    let line_of = |key: &str| seen.get(key).copied().unwrap_or(0);
    let first_of = |keys: &[&str]| {
        keys.iter()
            .find(|k| seen.contains_key(**k))
            .map_or(keys[0], |k| *k)
            .to_string()
    };

    for &deg in &cfg.phi_delta_deg_values {
        let key = first_of(&["phi_delta_deg", "phi_delta_deg_values"]);
        check_angle(line_of(&key), &key, deg)?;
    }
    check_angle(line_of("cdf_phi_delta_deg"), "cdf_phi_delta_deg", cfg.cdf_phi_delta_deg)?;
    for &r0 in &cfg.r0_values {
        let rg = cfg.rg_for(r0);
        if !(rg >= 0.0 && rg < r0) {
            let key = if seen.contains_key("rg_m") {
                "rg_m".to_string()
            } else {
                first_of(&["r0_m", "r0_m_values"])
            };
            return Err(config_err(
                line_of(&key),
                &key,
                format!("guard width {rg} m must lie in [0, R0 = {r0} m)"),
            ));
        }
    }
    for &rg in &cfg.rg_values {
        if !(rg >= 0.0 && rg < cfg.cdf_r0) {
            return Err(config_err(
                line_of("rg_m_values"),
                "rg_m_values",
                format!("guard width {rg} m must lie in [0, {} m)", cfg.cdf_r0),
            ));
        }
    }

    let prop = crate::propagation::PropagationParams::new(p_tx, eta).map_err(|e| {
        let key = first_of(&["eta", "p_tx_dbm"]);
        config_err(line_of(&key), &key, e.to_string())
    })?;
    corr.validate().map_err(|e| {
        let key = first_of(&["sigma_w_db", "d_cor_m", "a", "b"]);
        config_err(line_of(&key), &key, e.to_string())
    })?;
    cfg.propagation = prop;
    cfg.correlation = corr;
    cfg.validate().map_err(|e| config_err(0, "(combined)", e.to_string()))?;
    Ok(cfg)
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Canonical `key = value` rendering; parsing it yields the same config.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let c = &cfg.correlation;
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("p_tx_dbm", cfg.propagation.p_tx.to_string());
    put("eta", cfg.propagation.eta.to_string());
    put("sigma_w_db", c.sigma_w.to_string());
    put("d_cor_m", c.d_cor.to_string());
    put("a", c.a.to_string());
    put("b", c.b.to_string());
    put("n_tx", cfg.n_tx.to_string());
    put("r0_m_values", join(&cfg.r0_values));
    if let Some(rg) = cfg.rg {
        put("rg_m", rg.to_string());
    }
    put("phi_delta_deg_values", join(&cfg.phi_delta_deg_values));
    put("rg_m_values", join(&cfg.rg_values));
    put("cdf_r0_m", cfg.cdf_r0.to_string());
    put("cdf_phi_delta_deg", cfg.cdf_phi_delta_deg.to_string());
    put("cdf_samples", cfg.cdf_samples.to_string());
    put("spacing_r0_m_values", join(&cfg.spacing_r0_values));
    put("n_iterations", cfg.n_iterations.to_string());
    put("master_seed", cfg.master_seed.to_string());
    put("k_s", cfg.local_sensors.to_string());
    put("mode", cfg.mode.to_string());
    put("variogram_source", cfg.variogram_source.to_string());
    put("max_lag", cfg.max_lag.to_string());
    put("target_radial_offset_m", cfg.target_radial_offset.to_string());
    s
}
