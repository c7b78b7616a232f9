use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Aggregate, ExperimentError, Metrics, MetricsRecord, SweepSpec};
use crate::capacity::{FEASIBILITY_TOLERANCE, SCALE_TOLERANCE};
use crate::engine::SlotTotals;

pub const CSV_HEADER: [&str; 11] = [
    "policy",
    "lambda",
    "V",
    "delta_r",
    "eta_r",
    "seed",
    "mean_total_queue",
    "mean_cost",
    "reconfig_fraction",
    "delivered_rate",
    "instability_slope",
];

const METRIC_NAMES: [&str; 5] = [
    "mean_total_queue",
    "mean_cost",
    "reconfig_fraction",
    "delivered_rate",
    "instability_slope",
];

/// `printf("%.9g")` formatting.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    const P: i32 = 9;
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-4..P).contains(&exp) {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn parse_float(s: &str) -> Result<f64, String> {
    match s {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| format!("not a number: `{s}`")),
    }
}

fn create(path: &Path) -> Result<File, ExperimentError> {
    File::create(path).map_err(|source| ExperimentError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> ExperimentError {
    ExperimentError::Write {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

/// One row per record with the fixed column set of [`CSV_HEADER`].
pub fn write_csv(records: &[MetricsRecord], path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
    for r in records {
        let mut row = vec![
            r.policy.clone(),
            format_float(r.lambda),
            format_float(r.v),
            format_float(r.delta_r),
            format_float(r.eta_r),
            r.seed.to_string(),
        ];
        row.extend(r.metrics.values().iter().map(|&x| format_float(x)));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| ExperimentError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a file written by [`write_csv`]. Window, runtime and error fields
/// are not part of the CSV and come back as defaults.
pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>, ExperimentError> {
    let invalid = |m: String| ExperimentError::Invalid(format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| invalid(e.to_string()))?;
    let header = reader.headers().map_err(|e| invalid(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(invalid("unexpected header".into()));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| invalid(e.to_string()))?;
        let f = |i: usize| parse_float(&row[i]).map_err(invalid);
        let metrics = [f(6)?, f(7)?, f(8)?, f(9)?, f(10)?];
        out.push(MetricsRecord {
            policy: row[0].to_string(),
            lambda: f(1)?,
            v: f(2)?,
            delta_r: f(3)?,
            eta_r: f(4)?,
            seed: row[5].parse().map_err(|_| invalid(format!("bad seed `{}`", &row[5])))?,
            metrics: Metrics::from_values(metrics),
            window: (0, 0),
            runtime_secs: 0.0,
            lemma: None,
            error: None,
        });
    }
    Ok(out)
}

/// Per-cell means and standard errors.
pub fn write_summary_csv(rows: &[Aggregate], path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = ["policy", "lambda", "V", "delta_r", "eta_r", "seeds", "failures"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in METRIC_NAMES {
        header.push(m.to_string());
        header.push(format!("{m}_stderr"));
    }
    header.push("unstable".into());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for a in rows {
        let mut row = vec![
            a.key.policy.clone(),
            format_float(a.key.lambda),
            format_float(a.key.v),
            format_float(a.key.delta_r),
            format_float(a.key.eta_r),
            a.seeds.to_string(),
            a.failures.to_string(),
        ];
        for (m, s) in a.mean.values().iter().zip(a.stderr.values()) {
            row.push(format_float(*m));
            row.push(format_float(s));
        }
        row.push(a.mean.is_unstable().to_string());
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| ExperimentError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Per-slot series of one run.
pub fn write_trace_csv(series: &[SlotTotals], path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "t",
        "total_queue",
        "flow_cost",
        "allocation_cost",
        "reconfiguration_cost",
        "reconfiguring",
        "reconfig_events",
        "delivered",
        "arrived",
    ])
    .map_err(|e| csv_error(path, e))?;
    for s in series {
        w.write_record([
            s.t.to_string(),
            format_float(s.total_queue),
            format_float(s.cost.flow),
            format_float(s.cost.allocation),
            format_float(s.cost.reconfiguration),
            s.reconfiguring.to_string(),
            s.reconfig_events.to_string(),
            format_float(s.delivered),
            format_float(s.arrived),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| ExperimentError::Write {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCell {
    pub policy: String,
    pub lambda: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub delta_r: f64,
    pub eta_r: f64,
    pub seed: u64,
    pub window: (u64, u64),
    pub runtime_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma: Option<super::LemmaSummary>,
}

/// Provenance of a sweep output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spec_sha256: String,
    pub code_version: String,
    pub spec: SweepSpec,
    pub feasibility_tolerance: f64,
    pub scale_tolerance: f64,
    pub instability_slope: f64,
    pub total_runtime_secs: f64,
    pub failures: usize,
    pub cells: Vec<ManifestCell>,
}

impl Manifest {
    pub fn new(spec: &SweepSpec, spec_text: &str, records: &[MetricsRecord]) -> Self {
        let digest = Sha256::digest(spec_text.as_bytes());
        let spec_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            spec_sha256,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            spec: spec.clone(),
            feasibility_tolerance: FEASIBILITY_TOLERANCE,
            scale_tolerance: SCALE_TOLERANCE,
            instability_slope: super::INSTABILITY_SLOPE,
            total_runtime_secs: records.iter().map(|r| r.runtime_secs).sum(),
            failures: records.iter().filter(|r| r.error.is_some()).count(),
            cells: records
                .iter()
                .map(|r| ManifestCell {
                    policy: r.policy.clone(),
                    lambda: r.lambda,
                    v: r.v,
                    delta_r: r.delta_r,
                    eta_r: r.eta_r,
                    seed: r.seed,
                    window: r.window,
                    runtime_secs: r.runtime_secs,
                    error: r.error.clone(),
                    lemma: r.lemma,
                })
                .collect(),
        }
    }
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|source| ExperimentError::Write {
            path: path.display().to_string(),
            source,
        })
}
