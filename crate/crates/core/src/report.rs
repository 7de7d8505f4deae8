//! Report emission: `metrics.json`, `sumrate.csv` and `losscurve.csv`.
//!
//! Runs are aggregated per `(model, gamma, horizon)` over seeds. Entries are
//! sorted, so the files are a pure function of the run set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{mean_stderr, EvalReport};
use crate::forecast::{Arch, EpochRecord};

pub const METRICS_FILE: &str = "metrics.json";
pub const SUMRATE_FILE: &str = "sumrate.csv";
pub const LOSSCURVE_FILE: &str = "losscurve.csv";
pub const SUMRATE_HEADER: &str = "snr_db,model,gamma,horizon,sum_rate_bps_hz";
pub const LOSSCURVE_HEADER: &str = "epoch,model,train_loss";
pub const TRACE_HEADER: &str = "epoch,train_loss,val_rmse";
/// Label of the perfect-CSI reference rows in `sumrate.csv`.
pub const PERFECT_CSI: &str = "perfect-csi";

/// One evaluated `(model, seed)` run, as stored between CLI stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub arch: Arch,
    pub seed: u64,
    pub report: EvalReport,
    #[serde(default)]
    pub trace: Vec<EpochRecord>,
}

impl RunRecord {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsEntry {
    pub model: String,
    pub gamma: f64,
    pub horizon: usize,
    pub rmse: f64,
    pub rmse_stderr: f64,
    pub rmse_channel: f64,
    pub nmse_db: f64,
    pub nmse_db_stderr: f64,
    pub codec_nmse_db: f64,
    pub skipped_frames: usize,
    pub seeds: Vec<u64>,
    pub rmse_per_seed: Vec<f64>,
    pub nmse_db_per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub entries: Vec<MetricsEntry>,
}

type GroupKey = (String, u64, usize);

fn group(runs: &[RunRecord]) -> BTreeMap<GroupKey, Vec<&RunRecord>> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        let key = (r.arch.name().to_string(), r.report.gamma.to_bits(), r.report.horizon);
        groups.entry(key).or_default().push(r);
    }
    for v in groups.values_mut() {
        v.sort_by_key(|r| r.seed);
    }
    groups
}

fn check_hash(runs: &[RunRecord]) -> Result<String> {
    let hash = runs
        .first()
        .map(|r| r.config_hash.clone())
        .ok_or_else(|| Error::State("no evaluated runs to report".into()))?;
    if let Some(bad) = runs.iter().find(|r| r.config_hash != hash) {
        return Err(Error::ArtifactMismatch(format!(
            "runs from configs {hash} and {} cannot share a report",
            bad.config_hash
        )));
    }
    Ok(hash)
}

pub fn summarize(runs: &[RunRecord]) -> Result<Metrics> {
    let config_hash = check_hash(runs)?;
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let entries = group(runs)
        .into_iter()
        .map(|((model, _, horizon), rs)| {
            let rmse: Vec<f64> = rs.iter().map(|r| r.report.rmse).collect();
            let nmse: Vec<f64> = rs.iter().map(|r| r.report.nmse_db).collect();
            let chan: Vec<f64> = rs.iter().map(|r| r.report.rmse_channel).collect();
            let codec: Vec<f64> = rs.iter().map(|r| r.report.codec_nmse_db).collect();
            let (rmse_mean, rmse_se) = mean_stderr(&rmse);
            let (nmse_mean, nmse_se) = mean_stderr(&nmse);
            MetricsEntry {
                model,
                gamma: rs[0].report.gamma,
                horizon,
                rmse: rmse_mean,
                rmse_stderr: rmse_se,
                rmse_channel: mean_stderr(&chan).0,
                nmse_db: nmse_mean,
                nmse_db_stderr: nmse_se,
                codec_nmse_db: mean_stderr(&codec).0,
                skipped_frames: rs.iter().map(|r| r.report.skipped_frames).sum(),
                seeds: rs.iter().map(|r| r.seed).collect(),
                rmse_per_seed: rmse,
                nmse_db_per_seed: nmse,
            }
        })
        .collect();
    Ok(Metrics {
        config_hash,
        seeds,
        entries,
    })
}

/// Seed-averaged sum rate per SNR point, plus perfect-CSI reference rows.
pub fn sumrate_csv(runs: &[RunRecord]) -> Result<String> {
    let mut out = String::from(SUMRATE_HEADER);
    out.push('\n');
    let mut perfect: BTreeMap<(u64, usize), Vec<&RunRecord>> = BTreeMap::new();
    for ((model, _, horizon), rs) in group(runs) {
        let r0 = &rs[0].report;
        for (i, snr) in r0.snr_db.iter().enumerate() {
            let vals: Vec<f64> = rs.iter().map(|r| r.report.sum_rate[i]).collect();
            writeln!(out, "{snr},{model},{},{horizon},{}", r0.gamma, mean_stderr(&vals).0).unwrap();
        }
        perfect.entry((r0.gamma.to_bits(), horizon)).or_default().extend(rs);
    }
    for ((_, horizon), rs) in perfect {
        let r0 = &rs[0].report;
        for (i, snr) in r0.snr_db.iter().enumerate() {
            let vals: Vec<f64> = rs.iter().map(|r| r.report.sum_rate_perfect[i]).collect();
            writeln!(out, "{snr},{PERFECT_CSI},{},{horizon},{}", r0.gamma, mean_stderr(&vals).0).unwrap();
        }
    }
    Ok(out)
}

/// Training loss per epoch, averaged over the seeds that reached the epoch.
/// The model column reads `{arch}_p{horizon}`.
pub fn losscurve_csv(runs: &[RunRecord]) -> String {
    let mut out = String::from(LOSSCURVE_HEADER);
    out.push('\n');
    for ((model, _, horizon), rs) in group(runs) {
        let epochs = rs.iter().map(|r| r.trace.len()).max().unwrap_or(0);
        for e in 0..epochs {
            let vals: Vec<f64> = rs.iter().filter_map(|r| r.trace.get(e)).map(|t| t.train_loss).collect();
            let epoch = rs.iter().find_map(|r| r.trace.get(e)).map(|t| t.epoch).unwrap_or(e + 1);
            writeln!(out, "{epoch},{model}_p{horizon},{}", mean_stderr(&vals).0).unwrap();
        }
    }
    out
}

/// Per-run loss trace CSV.
pub fn trace_csv(trace: &[EpochRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_rmse).unwrap();
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Format(format!("loss trace must start with '{TRACE_HEADER}'")));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Format(format!("bad loss trace row '{l}'"));
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: f[1].parse().map_err(|_| bad())?,
                val_rmse: f[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Writes the three report files into `dir` and returns the metrics.
pub fn write_report(dir: impl AsRef<Path>, runs: &[RunRecord]) -> Result<Metrics> {
    let dir = dir.as_ref();
    let metrics = summarize(runs)?;
    std::fs::write(dir.join(METRICS_FILE), serde_json::to_string_pretty(&metrics)? + "\n")?;
    std::fs::write(dir.join(SUMRATE_FILE), sumrate_csv(runs)?)?;
    std::fs::write(dir.join(LOSSCURVE_FILE), losscurve_csv(runs))?;
    Ok(metrics)
}
