//! File formats: configuration and sweep-spec JSON, trace and sweep CSV,
//! synthesis-result and trend-report outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::SimTrace;
use crate::error::IoError;
use crate::grid::{validate_config, GridConfig, ValidatedGridConfig};
use crate::sweep::{AttackType, RecordStatus, SweepParam, SweepRecord, SweepSpec, TrendReport};
use crate::synth::solver::relay_kind_label;
use crate::synth::FeasibilityOutcome;

pub const TRACE_HEADER: &str = "n,t_s,f_hz,rocof_hz_per_s,dp_gov_pu,dp_sh_cum_pu,dp_tg_cum_pu,events";
pub const SWEEP_HEADER: &str = "combo_id,h_s,r_pu,t_s,toi_pct,ad_pct,success,attack_type,min_dp_a_pu,trip_step";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Reads a configuration file without validating it, so callers can adjust
/// it first.
pub fn load_raw_config(path: &Path) -> Result<GridConfig, IoError> {
    read_json(path)
}

pub fn load_config(path: &Path) -> Result<ValidatedGridConfig, IoError> {
    let raw = load_raw_config(path)?;
    validate_config(raw).map_err(|source| IoError::Config {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_sweep_spec(path: &Path) -> Result<SweepSpec, IoError> {
    let spec: SweepSpec = read_json(path)?;
    spec.check().map_err(|reason| IoError::Malformed {
        path: path.to_path_buf(),
        reason,
    })?;
    validate_config(spec.base_config.clone()).map_err(|source| IoError::Config {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(spec)
}

/// Fixed-point rendering with at least nine significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).clamp(0, 40) as usize;
    format!("{x:.decimals$}")
}

pub fn write_trace_csv<W: Write>(out: W, trace: &SimTrace) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{TRACE_HEADER}")?;
    let mut events = trace.events.iter().peekable();
    for row in &trace.rows {
        let mut labels = Vec::new();
        while let Some(e) = events.next_if(|e| e.step == row.n) {
            labels.push(format!("{}:{}", e.kind, e.relay_id));
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.n,
            fmt_sig(row.t),
            fmt_sig(row.f_hz),
            row.rocof.map(fmt_sig).unwrap_or_default(),
            fmt_sig(row.dp_gov),
            fmt_sig(row.dp_sh_cum),
            fmt_sig(row.dp_tg_cum),
            labels.join(";"),
        )?;
    }
    out.flush()
}

pub fn save_trace(path: &Path, trace: &SimTrace) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_trace_csv(file, trace).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisStatus {
    Success,
    NoAttack,
}

/// Synthesis result file. Fields other than `status` are absent on
/// `no_attack`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub status: SynthesisStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp_a_pu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relay_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relay_kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trip_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_file: Option<String>,
}

impl SynthesisResult {
    pub fn from_outcome(outcome: &FeasibilityOutcome, trace_file: Option<&Path>) -> Self {
        match outcome.vector() {
            Some(v) => SynthesisResult {
                status: SynthesisStatus::Success,
                dp_a_pu: Some(v.dp_a),
                attack_step: Some(v.attack_step),
                relay_id: Some(v.outcome.relay_id.clone()),
                relay_kind: Some(relay_kind_label(v.outcome.kind).to_string()),
                trip_step: Some(v.outcome.trip_step),
                trace_file: trace_file.map(|p| p.display().to_string()),
            },
            None => SynthesisResult {
                status: SynthesisStatus::NoAttack,
                dp_a_pu: None,
                attack_step: None,
                relay_id: None,
                relay_kind: None,
                trip_step: None,
                trace_file: None,
            },
        }
    }
}

/// Pretty-printed JSON for a synthesis result.
pub fn synthesis_result_json(result: &SynthesisResult) -> String {
    // only strings, numbers and unit variants: serialisation cannot fail
    serde_json::to_string_pretty(result).expect("plain data serialises")
}

pub fn save_synthesis_result(path: &Path, result: &SynthesisResult) -> Result<(), IoError> {
    write_json(path, result)
}

pub fn write_sweep_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.combo_id.to_string(),
            r.h_s.to_string(),
            r.r_pu.to_string(),
            r.t_s.to_string(),
            r.toi_pct.to_string(),
            r.ad_pct.to_string(),
            r.success.to_string(),
            r.attack_type.as_str().to_string(),
            r.min_dp_a.map(fmt_sig).unwrap_or_default(),
            r.trip_step.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_sweep(path: &Path, records: &[SweepRecord]) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_sweep_csv(file, records).map_err(|source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a sweep CSV back into records. Rejects empty files and rows that
/// break the record invariants.
pub fn load_sweep(path: &Path) -> Result<Vec<SweepRecord>, IoError> {
    let malformed = |reason: String| IoError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|source| match source.kind() {
        csv::ErrorKind::Io(_) => IoError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(source.to_string()),
        },
        _ => IoError::Csv {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let header = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != SWEEP_HEADER {
        return Err(malformed(format!("unexpected header `{header}`")));
    }
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| malformed(e.to_string()))?;
        let at = |what: &str| format!("row {}: bad {what}", line + 1);
        let num = |i: usize, what: &str| -> Result<f64, IoError> {
            row.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| malformed(at(what)))
        };
        let opt = |i: usize| row.get(i).filter(|s| !s.is_empty());
        let record = SweepRecord {
            combo_id: row.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| malformed(at("combo_id")))?,
            h_s: num(1, "h_s")?,
            r_pu: num(2, "r_pu")?,
            t_s: num(3, "t_s")?,
            toi_pct: num(4, "toi_pct")?,
            ad_pct: num(5, "ad_pct")?,
            success: row.get(6).and_then(|s| s.parse().ok()).ok_or_else(|| malformed(at("success")))?,
            attack_type: row
                .get(7)
                .and_then(AttackType::parse)
                .ok_or_else(|| malformed(at("attack_type")))?,
            min_dp_a: opt(8)
                .map(|s| s.parse().map_err(|_| malformed(at("min_dp_a_pu"))))
                .transpose()?,
            trip_step: opt(9)
                .map(|s| s.parse().map_err(|_| malformed(at("trip_step"))))
                .transpose()?,
            status: RecordStatus::Ok,
        };
        if (record.attack_type == AttackType::None) == record.success
            || record.min_dp_a.is_some() != record.success
        {
            return Err(malformed(format!("row {}: inconsistent success fields", line + 1)));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(malformed("no records".into()));
    }
    Ok(records)
}

/// Writes `trend.json` and one `<param>.csv` per parameter into `dir`.
/// Returns the paths written.
pub fn save_trend_report(dir: &Path, report: &TrendReport) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let json = dir.join("trend.json");
    write_json(&json, report)?;
    written.push(json);
    for p in SweepParam::ALL {
        let trend = report.param(p);
        let path = dir.join(format!("{}.csv", p.column()));
        let mut text = format!("{},success_count\n", p.column());
        for b in &trend.buckets {
            text.push_str(&format!("{},{}\n", b.value, b.successes));
        }
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
