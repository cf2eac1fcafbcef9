//! Batch evaluation over (prediction, ground truth) matte file pairs with
//! CSV output mirroring the benchmark column order.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::Result;
use crate::io::load_matte;
use crate::metrics::{report, ConnParams, MetricReport};

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub name: String,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub rows: Vec<EvalRow>,
    /// Pairs that could not be evaluated: (name, error message).
    pub failures: Vec<(String, String)>,
    /// Unweighted means over the successful rows.
    pub mean: Option<[f64; 6]>,
}

fn mean_of(rows: &[EvalRow]) -> Option<[f64; 6]> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mut acc = [0.0f64; 6];
    for r in rows {
        acc[0] += r.metrics.sad;
        acc[1] += r.metrics.mse;
        acc[2] += r.metrics.mad;
        acc[3] += r.metrics.sad_fg;
        acc[4] += r.metrics.sad_bg;
        acc[5] += r.metrics.conn;
    }
    for v in &mut acc {
        *v /= n;
    }
    Some(acc)
}

/// Evaluate every (pred, gt) pair. Unreadable or mismatched pairs are
/// recorded as failures and aggregation continues.
pub fn evaluate_pairs(pairs: &[(PathBuf, PathBuf)], params: &ConnParams) -> EvalOutcome {
    let results: Vec<(String, std::result::Result<MetricReport, String>)> = pairs
        .par_iter()
        .map(|(pred_path, gt_path)| {
            let name = pred_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| pred_path.display().to_string());
            let run = || -> Result<MetricReport> {
                let pred = load_matte(pred_path)?;
                let gt = load_matte(gt_path)?;
                report(&pred, &gt, params)
            };
            (name, run().map_err(|e| e.to_string()))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (name, r) in results {
        match r {
            Ok(metrics) => rows.push(EvalRow { name, metrics }),
            Err(e) => failures.push((name, e)),
        }
    }
    let mean = mean_of(&rows);
    EvalOutcome {
        rows,
        failures,
        mean,
    }
}

/// CSV with header `name,sad,mse,mad,sad_fg,sad_bg,conn`, one row per pair
/// and a final MEAN row.
pub fn write_eval_csv(path: &Path, outcome: &EvalOutcome) -> Result<()> {
    let mut out = String::from("name,sad,mse,mad,sad_fg,sad_bg,conn\n");
    for r in &outcome.rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.name, m.sad, m.mse, m.mad, m.sad_fg, m.sad_bg, m.conn
        ));
    }
    if let Some(mean) = &outcome.mean {
        out.push_str(&format!(
            "MEAN,{},{},{},{},{},{}\n",
            mean[0], mean[1], mean[2], mean[3], mean[4], mean[5]
        ));
    }
    std::fs::write(path, out).map_err(zippo_core::Error::from)?;
    Ok(())
}
