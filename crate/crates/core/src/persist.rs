//! On-disk formats: posterior samples (JSON lines), trajectory CSV and the
//! per-player summary JSON.
//!
//! Tabular and summary outputs print numbers to six significant digits.
//! Sample files keep full precision so fits can be reloaded exactly.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::data::CareerRecord;
use crate::error::{Error, Result};
use crate::inference::{AbilityDraw, TrajectorySummary};
use crate::nested::{NsConfig, NsResult, NsSample};
use crate::stats::Interval;

/// Formats a number with six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn round6(x: f64) -> Value {
    if x.is_finite() {
        let r: f64 = sig6(x).parse().unwrap();
        json!(r)
    } else {
        Value::Null
    }
}

/// Writes `contents` via a temporary file and rename.
pub fn write_atomic(path: &Path, contents: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        contents(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Which model a sample file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gp,
    Constant,
}

/// First record of a samples file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesHeader {
    pub record: String,
    pub player: String,
    pub innings: usize,
    pub model: ModelKind,
    pub config: NsConfig,
    pub log_z: f64,
    pub log_z_err: f64,
    pub information: f64,
    pub iterations: usize,
    pub truncated: bool,
    pub acceptance: f64,
    pub parameter_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleRecord {
    record: String,
    params: Vec<f64>,
    log_likelihood: f64,
    log_weight: f64,
}

pub fn parameter_names(model: ModelKind, innings: usize) -> Vec<String> {
    match model {
        ModelKind::Gp => crate::inference::SCALAR_NAMES
            .iter()
            .map(|s| s.to_string())
            .chain((1..=innings).map(|t| format!("z{t}")))
            .collect(),
        ModelKind::Constant => crate::inference::CONSTANT_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn write_samples(
    w: &mut dyn Write,
    career: &CareerRecord,
    model: ModelKind,
    cfg: &NsConfig,
    result: &NsResult,
) -> Result<()> {
    let header = SamplesHeader {
        record: "header".into(),
        player: career.player_id.clone(),
        innings: career.len(),
        model,
        config: *cfg,
        log_z: result.log_z,
        log_z_err: result.log_z_err,
        information: result.information,
        iterations: result.iterations,
        truncated: result.truncated,
        acceptance: result.acceptance,
        parameter_names: parameter_names(model, career.len()),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for s in &result.samples {
        let rec = SampleRecord {
            record: "sample".into(),
            params: s.params.clone(),
            log_likelihood: s.log_likelihood,
            log_weight: s.log_weight,
        };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_samples_file(
    path: &Path,
    career: &CareerRecord,
    model: ModelKind,
    cfg: &NsConfig,
    result: &NsResult,
) -> Result<()> {
    write_atomic(path, |w| write_samples(w, career, model, cfg, result))
}

/// Reads a samples file back into its header and an [`NsResult`].
pub fn read_samples_file(path: &Path) -> Result<(SamplesHeader, NsResult)> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::file(path, e))?);
    let mut lines = reader.lines();
    let bad = |line: usize, message: &str| Error::Parse { path: path.to_path_buf(), line, message: message.to_owned() };
    let first = lines.next().ok_or_else(|| bad(1, "missing header record"))??;
    let header: SamplesHeader = serde_json::from_str(&first)?;
    if header.record != "header" {
        return Err(bad(1, "first record is not a header"));
    }
    let mut samples = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| bad(k + 2, &e.to_string()))?;
        samples.push(NsSample { params: rec.params, log_likelihood: rec.log_likelihood, log_weight: rec.log_weight });
    }
    let result = NsResult {
        log_z: header.log_z,
        log_z_err: header.log_z_err,
        information: header.information,
        samples,
        iterations: header.iterations,
        n_live: header.config.n_live,
        log_volume: -(header.iterations as f64) / header.config.n_live as f64,
        truncated: header.truncated,
        acceptance: header.acceptance,
    };
    Ok((header, result))
}

/// One row per innings (and per forecast innings).
pub fn write_trajectory_csv(w: &mut dyn Write, career: &CareerRecord, s: &TrajectorySummary) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "t",
        "median",
        "ci68_lo",
        "ci68_hi",
        "ci95_lo",
        "ci95_hi",
        "known_context_median",
        "venue",
        "team_innings",
    ])?;
    for (t, iv) in s.nu.iter().enumerate() {
        let (known, venue, ti) = match career.innings().get(t) {
            Some(rec) => (
                sig6(s.nu_known_context[t].median),
                rec.venue.as_str().to_owned(),
                rec.team_innings.token().to_owned(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        out.write_record([
            (t + 1).to_string(),
            sig6(iv.median),
            sig6(iv.lo68),
            sig6(iv.hi68),
            sig6(iv.lo95),
            sig6(iv.hi95),
            known,
            venue,
            ti,
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn interval_json(iv: &Interval) -> Value {
    json!({
        "median": round6(iv.median),
        "ci68": [round6(iv.lo68), round6(iv.hi68)],
        "ci95": [round6(iv.lo95), round6(iv.hi95)],
    })
}

/// Summary record for one fitted player, as written to `<player>.summary.json`.
pub fn summary_json(s: &TrajectorySummary) -> Value {
    let mut params = Map::new();
    let mut flat = Map::new();
    for p in &s.params {
        params.insert(
            p.name.clone(),
            json!({
                "mean": round6(p.mean),
                "ci68": [round6(p.interval.lo68), round6(p.interval.hi68)],
                "ci95": [round6(p.interval.lo95), round6(p.interval.hi95)],
            }),
        );
        flat.insert(format!("{}_mean", p.name), round6(p.mean));
    }
    let draws: Vec<Value> = s
        .next_draws
        .iter()
        .map(|d| json!([round6(d.mu2), round6(d.c), round6(d.d), round6(d.psi), round6(d.phi)]))
        .collect();
    let mut root = Map::new();
    root.insert("player".into(), json!(s.player_id));
    root.insert("innings".into(), json!(s.innings));
    root.insert("career_average".into(), s.career_average.map(round6).unwrap_or(Value::Null));
    root.insert("log_z".into(), round6(s.log_z));
    root.insert("log_z_err".into(), round6(s.log_z_err));
    root.insert("ess".into(), round6(s.ess));
    root.insert("parameters".into(), Value::Object(params));
    root.extend(flat);
    root.insert("career_low".into(), interval_json(&s.career_low_interval()));
    root.insert("career_high".into(), interval_json(&s.career_high_interval()));
    root.insert("next_innings".into(), interval_json(&s.next_innings));
    root.insert("next_innings_draws".into(), Value::Array(draws));
    root.insert("warnings".into(), json!(s.warnings));
    Value::Object(root)
}

/// The parts of a summary file that ranking and comparison need.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub player: String,
    pub innings: usize,
    pub career_average: Option<f64>,
    pub next_innings: Interval,
    pub next_draws: Vec<AbilityDraw>,
}

fn interval_from_json(v: &Value) -> Option<Interval> {
    let f = |x: &Value| x.as_f64();
    Some(Interval {
        median: f(&v["median"])?,
        lo68: f(&v["ci68"][0])?,
        hi68: f(&v["ci68"][1])?,
        lo95: f(&v["ci95"][0])?,
        hi95: f(&v["ci95"][1])?,
    })
}

pub fn read_summary_file(path: &Path) -> Result<SummaryRecord> {
    let v: Value = serde_json::from_reader(BufReader::new(File::open(path).map_err(|e| Error::file(path, e))?))?;
    let bad = |m: &str| Error::Parse { path: path.to_path_buf(), line: 1, message: m.to_owned() };
    let next_draws = v["next_innings_draws"]
        .as_array()
        .map(|a| {
            a.iter()
                .filter_map(|d| {
                    let g = |k: usize| d[k].as_f64();
                    Some(AbilityDraw { mu2: g(0)?, c: g(1)?, d: g(2)?, psi: g(3)?, phi: g(4)? })
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(SummaryRecord {
        player: v["player"].as_str().ok_or_else(|| bad("missing player"))?.to_owned(),
        innings: v["innings"].as_u64().ok_or_else(|| bad("missing innings"))? as usize,
        career_average: v["career_average"].as_f64(),
        next_innings: interval_from_json(&v["next_innings"]).ok_or_else(|| bad("missing next_innings"))?,
        next_draws,
    })
}

/// Minimal trajectory summary rebuilt from a summary file, sufficient for ranking.
pub fn summary_for_ranking(r: &SummaryRecord) -> TrajectorySummary {
    TrajectorySummary {
        player_id: r.player.clone(),
        innings: r.innings,
        horizon: 0,
        career_average: r.career_average,
        nu: Vec::new(),
        nu_known_context: Vec::new(),
        career_low: Vec::new(),
        career_high: Vec::new(),
        argmin: Vec::new(),
        argmax: Vec::new(),
        next_innings: r.next_innings,
        next_innings_known: None,
        next_draws: r.next_draws.clone(),
        params: Vec::new(),
        log_z: f64::NAN,
        log_z_err: f64::NAN,
        ess: f64::NAN,
        warnings: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(47.123456), "47.1235");
        assert_eq!(sig6(-623.91234), "-623.912");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(30.0), "30");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1234567.0), "1234570");
    }
}
