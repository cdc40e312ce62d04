//! Result serialization: CSV and JSON time series, metric documents and
//! atomic file writes.
//!
//! CSV columns are `time_us`, `P_site_1..K`, then `P_x, P_y, P_z` for
//! octahedra, `M_site_1..K` when readout was modelled, and
//! `Re_site_k, Im_site_k` pairs when amplitudes are requested. Numbers
//! use nine significant digits in the style of C's `%.9g`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scenarios::ResultBundle;

pub const METRICS_FORMAT: &str = "fockcage.metrics/v1";
pub const SERIES_FORMAT: &str = "fockcage.series/v1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid("format", format!("`{other}` is not csv or json"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub format: OutputFormat,
    pub path: PathBuf,
    pub include_amplitudes: bool,
}

/// `%.9g`: shortest of fixed or exponent form, trailing zeros removed.
pub fn format_g9(x: f64) -> String {
    const SIG: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..SIG).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (SIG - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_header(bundle: &ResultBundle, include_amplitudes: bool) -> Vec<String> {
    let k = bundle.trajectory.dim();
    let mut cols = vec!["time_us".to_string()];
    cols.extend((1..=k).map(|s| format!("P_site_{s}")));
    if bundle.projected.is_some() {
        cols.extend(["P_x", "P_y", "P_z"].map(String::from));
    }
    if bundle.measured.is_some() {
        cols.extend((1..=k).map(|s| format!("M_site_{s}")));
    }
    if include_amplitudes {
        for s in 1..=k {
            cols.push(format!("Re_site_{s}"));
            cols.push(format!("Im_site_{s}"));
        }
    }
    cols
}

pub fn to_csv(bundle: &ResultBundle, include_amplitudes: bool) -> String {
    let mut out = csv_header(bundle, include_amplitudes).join(",");
    out.push('\n');
    let traj = &bundle.trajectory;
    for (t, &time) in traj.times().iter().enumerate() {
        let mut row = vec![format_g9(time)];
        row.extend(traj.populations()[t].iter().map(|&p| format_g9(p)));
        if let Some(p) = &bundle.projected {
            row.extend([p.p_x[t], p.p_y[t], p.p_z[t]].map(format_g9));
        }
        if let Some(m) = &bundle.measured {
            row.extend(m.populations[t].iter().map(|&p| format_g9(p)));
        }
        if include_amplitudes {
            for z in &traj.amplitudes()[t] {
                row.push(format_g9(z.re));
                row.push(format_g9(z.im));
            }
        }
        writeln!(out, "{}", row.join(",")).expect("string write");
    }
    out
}

pub fn to_json(bundle: &ResultBundle, include_amplitudes: bool) -> String {
    let traj = &bundle.trajectory;
    let mut doc = json!({
        "format": SERIES_FORMAT,
        "scenario": bundle.provenance.scenario,
        "time_us": traj.times(),
        "populations": traj.populations(),
    });
    if let Some(p) = &bundle.projected {
        doc["projected"] = json!({ "P_x": p.p_x, "P_y": p.p_y, "P_z": p.p_z });
    }
    if let Some(m) = &bundle.measured {
        doc["measured"] = json!(m.populations);
    }
    if include_amplitudes {
        let amps: Vec<Vec<[f64; 2]>> = traj
            .amplitudes()
            .iter()
            .map(|psi| psi.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        doc["amplitudes"] = json!(amps);
    }
    serde_json::to_string(&doc).expect("series serializes")
}

pub fn metrics_json(bundle: &ResultBundle) -> String {
    let metrics: serde_json::Map<String, Value> = bundle
        .metrics
        .iter()
        .map(|(k, &v)| (k.clone(), json!(v)))
        .collect();
    let doc = json!({
        "format": METRICS_FORMAT,
        "provenance": bundle.provenance,
        "metrics": metrics,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("metrics serialize");
    s.push('\n');
    s
}

/// Write through a temporary file in the destination directory and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| Error::io(path.display().to_string(), e);
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Sibling path for the metrics document: `run.csv` → `run.metrics.json`.
pub fn metrics_path(series: &Path) -> PathBuf {
    let stem = series.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    series.with_file_name(format!("{stem}.metrics.json"))
}

/// Series and metrics files; returns both paths.
pub fn write_bundle(spec: &OutputSpec, bundle: &ResultBundle) -> Result<(PathBuf, PathBuf)> {
    let body = match spec.format {
        OutputFormat::Csv => to_csv(bundle, spec.include_amplitudes),
        OutputFormat::Json => to_json(bundle, spec.include_amplitudes),
    };
    write_atomic(&spec.path, body.as_bytes())?;
    let metrics = metrics_path(&spec.path);
    write_atomic(&metrics, metrics_json(bundle).as_bytes())?;
    Ok((spec.path.clone(), metrics))
}
