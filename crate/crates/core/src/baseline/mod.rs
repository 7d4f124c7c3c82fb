//! Clustering-based identification used as the comparison baseline:
//! Gustafson-Kessel clustering in input-output space, projection onto
//! Gaussian antecedents, Jaccard-driven set merging and a threshold sweep.

mod gk;
mod grabs;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gk::{gk_cluster, GkConfig, GkResult, IterationStats, MembershipMatrix};
pub use grabs::{grabs_merge, MergeOutcome};

use crate::data::Dataset;
use crate::engine::{Rule, RuleBase};
use crate::error::{Error, Result};
use crate::estimate::fit_consequents;
use crate::metrics::mae;
use crate::partition::{FuzzyPartition, GaussianMF};

/// Variance floor applied to projected cluster widths.
const MIN_VARIANCE: f64 = 1e-6;

/// One rule per cluster. Each input feature gets one set per cluster with
/// the cluster center as mean and the square root of the fuzzy covariance
/// diagonal as width; the target dimension is dropped. Consequents are left
/// at zero.
pub fn clusters_to_rules(gk: &GkResult, data: &Dataset) -> Result<RuleBase> {
    let m = data.n_features();
    let c = gk.n_clusters();
    if gk.centers.first().is_none_or(|v| v.len() < m) {
        return Err(Error::LengthMismatch {
            left: gk.centers.first().map_or(0, |v| v.len()),
            right: m,
        });
    }
    let mut partitions = Vec::with_capacity(m);
    for (j, (lo, hi)) in data.feature_ranges().into_iter().enumerate() {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let sets = (0..c)
            .map(|i| {
                let var = gk.covariances[i][(j, j)].max(MIN_VARIANCE);
                GaussianMF::new(gk.centers[i][j], var.sqrt(), format!("c{}", i + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        partitions.push(FuzzyPartition::from_clusters(
            data.feature_names()[j].clone(),
            (lo, hi),
            sets,
        )?);
    }
    let rules = (0..c).map(|i| Rule::with_zero_consequent(vec![i; m])).collect();
    RuleBase::new(partitions, rules)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub start: f64,
    pub end: f64,
    pub step: f64,
    pub repeats: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            start: 0.05,
            end: 0.95,
            step: 0.05,
            repeats: 10,
        }
    }
}

impl SweepSpec {
    /// Thresholds from `start` to `end` inclusive, rounded to 1e-9 so the
    /// step does not accumulate drift.
    pub fn thresholds(&self) -> Result<Vec<f64>> {
        let valid = |t: f64| t > 0.0 && t <= 1.0;
        if !(valid(self.start) && valid(self.end) && self.end >= self.start && self.step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bad sweep range {}..{} step {}",
                self.start, self.end, self.step
            )));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidArgument("sweep needs at least one repeat".into()));
        }
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub threshold: f64,
    pub sweep: SweepSpec,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            threshold: 0.65,
            sweep: SweepSpec::default(),
        }
    }
}

/// Result of one clustering, merge and estimation pass.
#[derive(Debug, Clone)]
pub struct ClusterFit {
    pub rule_base: RuleBase,
    pub initial_rules: usize,
    pub dropped_sets: usize,
    pub converged: bool,
}

/// Estimates consequents for a merged base; merging is skipped when
/// `threshold` is `None`.
pub fn fit_clustered(
    clusters: &RuleBase,
    train: &Dataset,
    threshold: Option<f64>,
    lambda: f64,
) -> Result<(RuleBase, usize)> {
    let (base, dropped) = match threshold {
        Some(t) => {
            let out = grabs_merge(clusters, t, train.inputs())?;
            (out.rule_base, out.dropped_sets)
        }
        None => (clusters.clone(), 0),
    };
    Ok((fit_consequents(&base, train, lambda)?, dropped))
}

/// Full baseline on normalized training data.
pub fn fit_cluster_model(
    train: &Dataset,
    gk: &GkConfig,
    threshold: Option<f64>,
    lambda: f64,
) -> Result<ClusterFit> {
    let clustered = gk_cluster(&train.joined(), gk)?;
    let rules = clusters_to_rules(&clustered, train)?;
    let initial_rules = rules.n_rules();
    let (rule_base, dropped_sets) = fit_clustered(&rules, train, threshold, lambda)?;
    Ok(ClusterFit {
        rule_base,
        initial_rules,
        dropped_sets,
        converged: clustered.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub repeat: usize,
    pub mae: Option<f64>,
    pub dropped_sets: Option<usize>,
    pub n_rules: Option<usize>,
    pub error: Option<String>,
}

fn validation_mae(rb: &RuleBase, validation: &Dataset) -> Result<f64> {
    let pred: Vec<f64> = (0..validation.n_rows())
        .map(|i| rb.evaluate(&validation.row(i)))
        .collect();
    mae(&pred, validation.target())
}

/// Runs the baseline for every threshold and repeat. Repeat `r` clusters
/// with seed `gk.seed + r`; the clustering is shared across thresholds of
/// that repeat since it does not depend on the threshold. Failed runs are
/// kept in the trace with their error. Rows are ordered threshold-major.
pub fn merge_sweep(
    train: &Dataset,
    validation: &Dataset,
    gk: &GkConfig,
    sweep: &SweepSpec,
    lambda: f64,
) -> Result<Vec<SweepRow>> {
    let thresholds = sweep.thresholds()?;
    let per_repeat: Vec<Vec<SweepRow>> = (0..sweep.repeats)
        .into_par_iter()
        .map(|repeat| {
            let cfg = GkConfig {
                seed: gk.seed.wrapping_add(repeat as u64),
                ..*gk
            };
            let clusters = gk_cluster(&train.joined(), &cfg).and_then(|g| clusters_to_rules(&g, train));
            thresholds
                .iter()
                .map(|&threshold| {
                    let run = clusters.as_ref().map_err(|e| e.to_string()).and_then(|rules| {
                        let (rb, dropped) =
                            fit_clustered(rules, train, Some(threshold), lambda).map_err(|e| e.to_string())?;
                        let err = validation_mae(&rb, validation).map_err(|e| e.to_string())?;
                        Ok((err, dropped, rb.n_rules()))
                    });
                    match run {
                        Ok((err, dropped, n_rules)) => SweepRow {
                            threshold,
                            repeat,
                            mae: Some(err),
                            dropped_sets: Some(dropped),
                            n_rules: Some(n_rules),
                            error: None,
                        },
                        Err(e) => SweepRow {
                            threshold,
                            repeat,
                            mae: None,
                            dropped_sets: None,
                            n_rules: None,
                            error: Some(e),
                        },
                    }
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(thresholds.len() * sweep.repeats);
    for t in 0..thresholds.len() {
        for runs in &per_repeat {
            rows.push(runs[t].clone());
        }
    }
    Ok(rows)
}

/// Writes `threshold,repeat,mae,dropped_sets`; failed runs leave the last
/// two fields empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["threshold", "repeat", "mae", "dropped_sets"])?;
    for r in rows {
        w.write_record([
            r.threshold.to_string(),
            r.repeat.to_string(),
            r.mae.map(|v| v.to_string()).unwrap_or_default(),
            r.dropped_sets.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_thresholds() {
        let t = SweepSpec::default().thresholds().unwrap();
        assert_eq!(t.len(), 19);
        assert_eq!(t[0], 0.05);
        assert_eq!(t[18], 0.95);
        assert_eq!(t[12], 0.65);
        assert!(SweepSpec { start: 0.0, ..SweepSpec::default() }.thresholds().is_err());
    }
}
