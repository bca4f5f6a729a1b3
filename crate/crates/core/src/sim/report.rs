//! Aggregation of trial rows: tier statistics, confusion per ladder rung,
//! per-mode summaries, and CSV round trips.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::trial::{TrialRecord, TRIAL_COLUMNS};
use crate::confidence::{ConfidenceLadder, ConfidenceTier};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierStats {
    pub tier: ConfidenceTier,
    pub count: usize,
    pub successes: usize,
    pub mean_tre_mm: Option<f64>,
    pub sd_tre_mm: Option<f64>,
}

/// Prediction "successful" at rung `p` means both tests pass at `p`, i.e. the
/// tier is at least as good as the rung's tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub p: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub modes: usize,
    pub trials: usize,
    pub failed_runs: usize,
    pub success_rate: f64,
    pub mean_tre_mm: Option<f64>,
    pub median_iterations: Option<f64>,
    pub mean_shape_err_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub tiers: Vec<TierStats>,
    pub confusion: Vec<Confusion>,
    pub by_modes: Vec<ModeStats>,
    pub mean_shape_err_mm: Option<f64>,
    pub mean_tre_successful_mm: Option<f64>,
    /// Mean tRE never decreases from very_confident toward no_confidence
    /// (empty tiers skipped).
    pub tier_tre_monotone: bool,
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), sd)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn finite(it: impl Iterator<Item = f64>) -> Vec<f64> {
    it.filter(|v| v.is_finite()).collect()
}

pub fn summarize(records: &[TrialRecord], ladder: &ConfidenceLadder) -> Summary {
    let tiers: Vec<TierStats> = ConfidenceTier::ALL
        .iter()
        .map(|&tier| {
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.tier == tier).collect();
            let (mean, sd) = mean_sd(&finite(rows.iter().map(|r| r.tre_mm)));
            TierStats {
                tier,
                count: rows.len(),
                successes: rows.iter().filter(|r| r.success).count(),
                mean_tre_mm: mean,
                sd_tre_mm: sd,
            }
        })
        .collect();

    let confusion = ladder
        .levels()
        .iter()
        .enumerate()
        .map(|(rung, &p)| {
            let (mut tp, mut fp, mut tn, mut fneg) = (0, 0, 0, 0);
            for r in records {
                match (r.tier.rank() <= rung, r.success) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => fneg += 1,
                }
            }
            Confusion {
                p,
                true_positive: tp,
                false_positive: fp,
                true_negative: tn,
                false_negative: fneg,
                precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
                recall: (tp + fneg > 0).then(|| tp as f64 / (tp + fneg) as f64),
            }
        })
        .collect();

    let mut modes: Vec<usize> = records.iter().map(|r| r.modes).collect();
    modes.sort_unstable();
    modes.dedup();
    let by_modes = modes
        .into_iter()
        .map(|m| {
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.modes == m).collect();
            let failed = rows.iter().filter(|r| !r.tre_mm.is_finite()).count();
            ModeStats {
                modes: m,
                trials: rows.len(),
                failed_runs: failed,
                success_rate: rows.iter().filter(|r| r.success).count() as f64 / rows.len() as f64,
                mean_tre_mm: mean_sd(&finite(rows.iter().map(|r| r.tre_mm))).0,
                median_iterations: median(
                    rows.iter().filter(|r| r.tre_mm.is_finite()).map(|r| r.iterations as f64).collect(),
                ),
                mean_shape_err_mm: mean_sd(&finite(rows.iter().map(|r| r.shape_err_mm))).0,
            }
        })
        .collect();

    let means: Vec<f64> = tiers.iter().filter_map(|t| t.mean_tre_mm).collect();
    Summary {
        trials: records.len(),
        tier_tre_monotone: means.windows(2).all(|w| w[0] <= w[1]),
        tiers,
        confusion,
        by_modes,
        mean_shape_err_mm: mean_sd(&finite(records.iter().map(|r| r.shape_err_mm))).0,
        mean_tre_successful_mm: mean_sd(&finite(records.iter().filter(|r| r.success).map(|r| r.tre_mm))).0,
    }
}

pub fn write_trials_csv<W: Write>(writer: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record(TRIAL_COLUMNS)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads trial rows, rejecting files whose header differs from the expected columns.
pub fn read_trials_csv<R: Read>(reader: R) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    for (i, col) in TRIAL_COLUMNS.iter().enumerate() {
        match headers.get(i) {
            Some(h) if h == *col => {}
            Some(h) => return Err(invalid(format!("column {} is '{h}', expected '{col}'", i + 1))),
            None => return Err(invalid(format!("missing column '{col}'"))),
        }
    }
    if headers.len() > TRIAL_COLUMNS.len() {
        return Err(invalid(format!("unexpected column '{}'", &headers[TRIAL_COLUMNS.len()])));
    }
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Plot-ready long format: one `section,key,metric,value` row per number.
pub fn write_long_csv<W: Write>(writer: W, summary: &Summary) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["section", "key", "metric", "value"])?;
    let mut put = |section: &str, key: String, metric: &str, value: Option<f64>| -> Result<()> {
        let v = value.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([section, key.as_str(), metric, v.as_str()])?;
        Ok(())
    };
    for t in &summary.tiers {
        put("tier", t.tier.to_string(), "count", Some(t.count as f64))?;
        put("tier", t.tier.to_string(), "mean_tre_mm", t.mean_tre_mm)?;
        put("tier", t.tier.to_string(), "sd_tre_mm", t.sd_tre_mm)?;
    }
    for c in &summary.confusion {
        let key = c.p.to_string();
        put("confusion", key.clone(), "true_positive", Some(c.true_positive as f64))?;
        put("confusion", key.clone(), "false_positive", Some(c.false_positive as f64))?;
        put("confusion", key.clone(), "true_negative", Some(c.true_negative as f64))?;
        put("confusion", key.clone(), "false_negative", Some(c.false_negative as f64))?;
        put("confusion", key.clone(), "precision", c.precision)?;
        put("confusion", key, "recall", c.recall)?;
    }
    for m in &summary.by_modes {
        let key = m.modes.to_string();
        put("modes", key.clone(), "trials", Some(m.trials as f64))?;
        put("modes", key.clone(), "success_rate", Some(m.success_rate))?;
        put("modes", key.clone(), "mean_tre_mm", m.mean_tre_mm)?;
        put("modes", key, "median_iterations", m.median_iterations)?;
    }
    w.flush()?;
    Ok(())
}
