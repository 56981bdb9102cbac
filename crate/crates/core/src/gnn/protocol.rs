use serde::{Deserialize, Serialize};

use super::train::{evaluate, train, TrainConfig};
use super::{CsrMatrix, DenseMatrix, GnnError};
use crate::graph::{split_nodes, SplitRatios};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub per_seed_accuracy: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub config_fingerprint: String,
}

impl ExperimentReport {
    pub fn from_accuracies(per_seed_accuracy: Vec<f64>, config_fingerprint: impl Into<String>) -> Result<Self, GnnError> {
        let n = per_seed_accuracy.len();
        if n == 0 {
            return Err(GnnError::InvalidConfig("runs must be >= 1".into()));
        }
        let mean = per_seed_accuracy.iter().sum::<f64>() / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            (per_seed_accuracy.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Ok(Self {
            per_seed_accuracy,
            mean,
            std,
            config_fingerprint: config_fingerprint.into(),
        })
    }

    /// `"95.00 ± 7.07"`: mean and std in percent.
    pub fn cell(&self) -> String {
        format!("{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// Aligned two-column table, one row per labelled report.
pub fn render_table(header: &str, rows: &[(String, &ExperimentReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.chars().count()).chain([header.chars().count()]).max().unwrap_or(0);
    let mut out = format!("{header:<width$}  Accuracy (%)\n");
    out.push_str(&format!("{}  {}\n", "-".repeat(width), "-".repeat(14)));
    for (label, report) in rows {
        out.push_str(&format!("{label:<width$}  {}\n", report.cell()));
    }
    out
}

/// Train and evaluate `runs` times. Run `r` uses a fresh random split with
/// seed `base_seed + r` and initialization/dropout seed `base_seed + r`.
#[allow(clippy::too_many_arguments)]
pub fn run_protocol(
    x: &DenseMatrix,
    adj: Option<&CsrMatrix>,
    labels: &[usize],
    num_classes: usize,
    ratios: SplitRatios,
    base_seed: u64,
    runs: usize,
    config: &TrainConfig,
    config_fingerprint: &str,
) -> Result<ExperimentReport, GnnError> {
    if runs == 0 {
        return Err(GnnError::InvalidConfig("runs must be >= 1".into()));
    }
    let mut accs = Vec::with_capacity(runs);
    for r in 0..runs as u64 {
        let seed = base_seed.wrapping_add(r);
        let split = split_nodes(x.rows(), ratios, seed).map_err(|e| GnnError::InvalidConfig(e.to_string()))?;
        let cfg = TrainConfig { seed, ..config.clone() };
        let outcome = train(x, adj, labels, num_classes, &split, &cfg)?;
        accs.push(evaluate(&outcome.params, x, adj, cfg.model, labels, &split)?);
    }
    ExperimentReport::from_accuracies(accs, config_fingerprint)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_run_arithmetic() {
        let r = ExperimentReport::from_accuracies(vec![0.9, 1.0], "f").unwrap();
        assert!((r.mean - 0.95).abs() < 1e-12);
        assert!((r.std - 0.005f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.cell(), "95.00 ± 7.07");
    }

    #[test]
    fn degenerate_spreads() {
        assert_eq!(ExperimentReport::from_accuracies(vec![0.8], "f").unwrap().std, 0.0);
        assert_eq!(ExperimentReport::from_accuracies(vec![0.5; 4], "f").unwrap().std, 0.0);
        assert!(ExperimentReport::from_accuracies(vec![], "f").is_err());
    }

    #[test]
    fn stored_stats_recompute() {
        let r = ExperimentReport::from_accuracies(vec![0.81, 0.84, 0.79, 0.9, 0.88], "f").unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        let again = ExperimentReport::from_accuracies(back.per_seed_accuracy.clone(), "f").unwrap();
        assert!((back.mean - again.mean).abs() < 1e-12 && (back.std - again.std).abs() < 1e-12);
    }

    #[test]
    fn table_alignment() {
        let a = ExperimentReport::from_accuracies(vec![0.9, 1.0], "f").unwrap();
        let b = ExperimentReport::from_accuracies(vec![0.5], "f").unwrap();
        let t = render_table("Variant", &[("gcn".into(), &a), ("mlp (long)".into(), &b)]);
        assert_eq!(
            t,
            "Variant     Accuracy (%)\n----------  --------------\ngcn         95.00 ± 7.07\nmlp (long)  50.00 ± 0.00\n"
        );
    }
}
