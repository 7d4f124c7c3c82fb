//! Error metrics, distinguishability measures between Gaussian fuzzy sets,
//! and structural complexity counts.

use serde::{Deserialize, Serialize};

use crate::engine::RuleBase;
use crate::error::{Error, Result};
use crate::partition::{FuzzyPartition, GaussianMF};

fn check_lengths(predictions: &[f64], targets: &[f64]) -> Result<()> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions, targets)?;
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / predictions.len() as f64)
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions, targets)?;
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((total / predictions.len() as f64).sqrt())
}

/// MAE as a percentage of the target range.
pub fn mape_range(mae_value: f64, target_range: f64) -> Result<f64> {
    if !(target_range > 0.0) {
        return Err(Error::InvalidArgument(format!("target range must be positive, got {target_range}")));
    }
    Ok(100.0 * mae_value / target_range)
}

/// Conventional MAPE, `100 * mean(|e / y|)`, over rows with a nonzero target.
pub fn mape_standard(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions, targets)?;
    let (sum, count) = predictions
        .iter()
        .zip(targets)
        .filter(|(_, t)| **t != 0.0)
        .fold((0.0, 0usize), |(s, c), (p, t)| (s + ((p - t) / t).abs(), c + 1));
    if count == 0 {
        return Err(Error::InvalidArgument("every target is zero".into()));
    }
    Ok(100.0 * sum / count as f64)
}

pub const JACCARD_POINTS: usize = 2001;

/// Fuzzy Jaccard index: the ratio of the integrals of `min(A, B)` and
/// `max(A, B)`, integrated by the trapezoid rule on [`JACCARD_POINTS`]
/// points spanning the universe widened by four of the larger widths.
pub fn jaccard(a: &GaussianMF, b: &GaussianMF, universe: (f64, f64)) -> f64 {
    let pad = 4.0 * a.sigma.max(b.sigma);
    let (lo, hi) = (universe.0 - pad, universe.1 + pad);
    let step = (hi - lo) / (JACCARD_POINTS - 1) as f64;
    let mut inter = 0.0;
    let mut union = 0.0;
    for i in 0..JACCARD_POINTS {
        let x = lo + i as f64 * step;
        let (ma, mb) = (a.membership(x), b.membership(x));
        let w = if i == 0 || i == JACCARD_POINTS - 1 { 0.5 } else { 1.0 };
        inter += w * ma.min(mb);
        union += w * ma.max(mb);
    }
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Parametric similarity of two Gaussians and the derived distinguishability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JinSimilarity {
    /// `sqrt((mu1 - mu2)^2 + (sigma1 - sigma2)^2)`
    pub s: f64,
    /// `1 / (1 + s)`
    pub d: f64,
}

pub fn jin_similarity(a: &GaussianMF, b: &GaussianMF) -> JinSimilarity {
    let s = (a.mu - b.mu).hypot(a.sigma - b.sigma);
    JinSimilarity { s, d: 1.0 / (1.0 + s) }
}

/// `sup_x min(A(x), B(x))`.
///
/// Between the two centers one set falls while the other rises, so the
/// supremum is their crossing there, `x = (mu1 s2 + mu2 s1) / (s1 + s2)`,
/// where `|x - mu1| / s1 = |mu2 - mu1| / (s1 + s2)`.
pub fn possibility(a: &GaussianMF, b: &GaussianMF) -> f64 {
    let z = (a.mu - b.mu) / (a.sigma + b.sigma);
    (-0.5 * z * z).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    #[default]
    AllPairs,
    /// Neighbours after sorting by center.
    AdjacentPairs,
}

/// Pairwise metrics averaged within each feature, then across features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguishabilitySummary {
    pub mode: PairingMode,
    pub mean_s: f64,
    pub mean_d: f64,
    pub mean_jaccard: f64,
    /// Largest possibility over all pairs considered.
    pub max_possibility: f64,
    pub features_used: usize,
    /// Features with fewer than two sets.
    pub skipped: Vec<String>,
}

fn pairs(partition: &FuzzyPartition, mode: PairingMode) -> Vec<(usize, usize)> {
    let n = partition.len();
    match mode {
        PairingMode::AllPairs => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
        PairingMode::AdjacentPairs => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| partition.sets()[i].mu.total_cmp(&partition.sets()[j].mu));
            order.windows(2).map(|w| (w[0], w[1])).collect()
        }
    }
}

pub fn partition_distinguishability(partitions: &[FuzzyPartition], mode: PairingMode) -> DistinguishabilitySummary {
    let mut sums = [0.0f64; 3];
    let mut max_p = 0.0f64;
    let mut used = 0usize;
    let mut skipped = Vec::new();
    for p in partitions {
        if p.len() < 2 {
            log::warn!("partition `{}` has fewer than two sets; skipped", p.feature);
            skipped.push(p.feature.clone());
            continue;
        }
        let pairs = pairs(p, mode);
        let mut local = [0.0f64; 3];
        for &(i, j) in &pairs {
            let (a, b) = (&p.sets()[i], &p.sets()[j]);
            let jin = jin_similarity(a, b);
            local[0] += jin.s;
            local[1] += jin.d;
            local[2] += jaccard(a, b, p.universe());
            max_p = max_p.max(possibility(a, b));
        }
        for k in 0..3 {
            sums[k] += local[k] / pairs.len() as f64;
        }
        used += 1;
    }
    let mean = |v: f64| if used > 0 { v / used as f64 } else { f64::NAN };
    DistinguishabilitySummary {
        mode,
        mean_s: mean(sums[0]),
        mean_d: mean(sums[1]),
        mean_jaccard: mean(sums[2]),
        max_possibility: if used > 0 { max_p } else { f64::NAN },
        features_used: used,
        skipped,
    }
}

/// Square matrix of one pairwise metric over a partition's sets.
pub fn pairwise_matrix(partition: &FuzzyPartition, metric: impl Fn(&GaussianMF, &GaussianMF) -> f64) -> Vec<Vec<f64>> {
    let sets = partition.sets();
    sets.iter().map(|a| sets.iter().map(|b| metric(a, b)).collect()).collect()
}

/// Free parameters of a model.
///
/// Grid models share `2 * n_sets` antecedent parameters per feature across
/// all rules; cluster models carry `2m` antecedent parameters per rule.
/// Both add `m + 1` consequent parameters per rule.
pub fn parameter_count(rule_base: &RuleBase) -> usize {
    let m = rule_base.n_features();
    let r = rule_base.n_rules();
    let consequents = r * (m + 1);
    if rule_base.is_grid() {
        rule_base.partitions().iter().map(|p| 2 * p.len()).sum::<usize>() + consequents
    } else {
        r * 2 * m + consequents
    }
}

/// Accuracy and interpretability figures for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae_normalized: f64,
    pub mae: f64,
    /// MAE as a percentage of the raw target range.
    pub mape_range: f64,
    pub mape_standard: f64,
    pub target_range: f64,
    pub n_rules: usize,
    pub n_parameters: usize,
    pub all_pairs: DistinguishabilitySummary,
    pub adjacent_pairs: DistinguishabilitySummary,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{enumerate_rules, Rule};
    use crate::partition::{build_grid, GridSpec};

    fn mf(mu: f64, sigma: f64) -> GaussianMF {
        GaussianMF::new(mu, sigma, "s").unwrap()
    }

    #[test]
    fn mae_cases() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mae(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 1.5);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn mape_cases() {
        assert!((mape_range(1.986, 6.159).unwrap() - 32.245).abs() < 1e-3);
        assert!((mape_range(0.486, 6.159).unwrap() - 7.891).abs() < 1e-3);
        assert_eq!(mape_range(0.0, 6.159).unwrap(), 0.0);
        assert!(mape_range(1.0, 0.0).is_err());
        assert!((mape_standard(&[1.1, 0.0, 1.8], &[1.0, 0.0, 2.0]).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn jaccard_extremes() {
        let a = mf(0.3, 0.7);
        assert!((jaccard(&a, &a, (-1.0, 1.0)) - 1.0).abs() < 1e-9);
        let far = mf(0.3 + 20.0 * 0.7, 0.7);
        assert!(jaccard(&a, &far, (-1.0, 16.0)) < 1e-6);
    }

    #[test]
    fn jin_cases() {
        let a = mf(0.0, 1.0);
        let same = jin_similarity(&a, &a);
        assert_eq!((same.s, same.d), (0.0, 1.0));
        let j = jin_similarity(&a, &mf(3.0, 5.0));
        assert_eq!(j.s, 5.0);
        assert_eq!(j.d, 1.0 / 6.0);
    }

    #[test]
    fn possibility_cases() {
        let a = mf(0.0, 1.0);
        assert_eq!(possibility(&a, &a), 1.0);
        assert!((possibility(&a, &mf(2.0, 1.0)) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn grid_summary() {
        let p = build_grid("x", (0.0, 10.0), &GridSpec::default()).unwrap();
        let adj = partition_distinguishability(std::slice::from_ref(&p), PairingMode::AdjacentPairs);
        assert_eq!(adj.mean_s, 5.0);
        assert_eq!(adj.mean_d, 1.0 / 6.0);
        let all = partition_distinguishability(&[p], PairingMode::AllPairs);
        assert!((all.mean_s - 20.0 / 3.0).abs() < 1e-12);
        assert!(all.mean_jaccard < adj.mean_jaccard);
    }

    #[test]
    fn duplicate_pairs_summary() {
        let dup = |name: &str| {
            FuzzyPartition::from_clusters(
                name,
                (-1.0, 1.0),
                vec![
                    GaussianMF::new(0.2, 0.5, "a").unwrap(),
                    GaussianMF::new(0.2, 0.5, "b").unwrap(),
                ],
            )
            .unwrap()
        };
        let single = FuzzyPartition::from_clusters("z", (0.0, 1.0), vec![mf(0.5, 0.1)]).unwrap();
        let s = partition_distinguishability(&[dup("p"), dup("q"), single], PairingMode::AllPairs);
        assert_eq!(s.mean_d, 1.0);
        assert!((s.mean_jaccard - 1.0).abs() < 1e-12);
        assert_eq!(s.skipped, vec!["z".to_string()]);
        assert_eq!(s.features_used, 2);
    }

    #[test]
    fn parameter_counts() {
        let g = || build_grid("x", (0.0, 1.0), &GridSpec::default()).unwrap();
        let full = enumerate_rules(vec![g(), g(), g()]).unwrap();
        let fifteen = full.retain_rules(&(0..15).collect::<Vec<_>>()).unwrap();
        assert_eq!(parameter_count(&fifteen), 78);

        let sets: Vec<GaussianMF> = (0..18)
            .map(|r| GaussianMF::new(r as f64 * 0.05, 0.3, format!("c{r}")).unwrap())
            .collect();
        let parts: Vec<FuzzyPartition> = ["a", "b", "c"]
            .iter()
            .map(|n| FuzzyPartition::from_clusters(*n, (0.0, 1.0), sets.clone()).unwrap())
            .collect();
        let rules = (0..18).map(|r| Rule::with_zero_consequent(vec![r; 3])).collect();
        assert_eq!(parameter_count(&RuleBase::new(parts, rules).unwrap()), 180);

        let tiny = RuleBase::new(
            vec![build_grid("x", (0.0, 1.0), &GridSpec { n_sets: 2, ..GridSpec::default() }).unwrap()],
            vec![Rule::with_zero_consequent(vec![0])],
        )
        .unwrap();
        assert_eq!(parameter_count(&tiny), 6);
    }
}
