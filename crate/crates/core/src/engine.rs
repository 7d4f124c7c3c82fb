//! First-order Takagi-Sugeno rule bases: enumeration over grid partitions,
//! product t-norm inference and firing-strength based pruning.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::partition::{FuzzyPartition, PartitionOrigin};

/// `IF x_1 is A_1 AND ... THEN z = w . x + b`, with one set index per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub antecedent: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Rule {
    pub fn with_zero_consequent(antecedent: Vec<usize>) -> Self {
        let m = antecedent.len();
        Self {
            antecedent,
            weights: vec![0.0; m],
            bias: 0.0,
        }
    }

    /// The affine consequent `w . x + b`.
    #[inline]
    pub fn consequent(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// Partitions plus the rules whose antecedents index into them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBase {
    partitions: Vec<FuzzyPartition>,
    rules: Vec<Rule>,
}

impl RuleBase {
    pub fn new(partitions: Vec<FuzzyPartition>, rules: Vec<Rule>) -> Result<Self> {
        let rb = Self { partitions, rules };
        rb.validate()?;
        Ok(rb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::Construction("rule base has no rules".into()));
        }
        let m = self.partitions.len();
        for p in &self.partitions {
            p.validate()?;
        }
        let mut seen = HashSet::new();
        for (r, rule) in self.rules.iter().enumerate() {
            if rule.antecedent.len() != m || rule.weights.len() != m {
                return Err(Error::Construction(format!(
                    "rule {r} has {} antecedents and {} weights for {m} features",
                    rule.antecedent.len(),
                    rule.weights.len()
                )));
            }
            for (j, (&a, p)) in rule.antecedent.iter().zip(&self.partitions).enumerate() {
                if a >= p.len() {
                    return Err(Error::Construction(format!(
                        "rule {r} references set {a} of feature {j}, which has {} sets",
                        p.len()
                    )));
                }
            }
            if !seen.insert(rule.antecedent.as_slice()) {
                return Err(Error::Construction(format!(
                    "rule {r} repeats antecedent {:?}",
                    rule.antecedent
                )));
            }
        }
        Ok(())
    }

    pub fn partitions(&self) -> &[FuzzyPartition] {
        &self.partitions
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn n_features(&self) -> usize {
        self.partitions.len()
    }

    pub fn n_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.partitions.iter().map(|p| p.feature.clone()).collect()
    }

    pub(crate) fn rules_mut(&mut self) -> &mut Vec<Rule> {
        &mut self.rules
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<FuzzyPartition>, &mut Vec<Rule>) {
        (&mut self.partitions, &mut self.rules)
    }

    /// Keeps the rules at `indices`, in that order.
    pub fn retain_rules(&self, indices: &[usize]) -> Result<Self> {
        let rules = indices.iter().map(|&i| self.rules[i].clone()).collect();
        Self::new(self.partitions.clone(), rules)
    }

    /// True when every partition is a (possibly expert-edited) grid.
    pub fn is_grid(&self) -> bool {
        self.partitions.iter().all(|p| p.origin() != PartitionOrigin::Clustered)
    }

    #[inline]
    fn log_firing(&self, rule: &Rule, x: &[f64]) -> f64 {
        rule.antecedent
            .iter()
            .zip(&self.partitions)
            .zip(x)
            .map(|((&a, p), &v)| p.sets()[a].log_membership(v))
            .sum()
    }

    /// Product of the rule's antecedent memberships at `x`.
    pub fn firing_strength(&self, rule: usize, x: &[f64]) -> f64 {
        self.log_firing(&self.rules[rule], x).exp()
    }

    /// Firing strengths at `x` divided by their sum.
    ///
    /// Computed from log memberships so points far from every center still
    /// normalize instead of underflowing to 0/0.
    pub fn normalized_strengths(&self, x: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = self.rules.iter().map(|r| self.log_firing(r, x)).collect();
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        w
    }

    /// Weighted average of rule consequents at `x`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.normalized_strengths(x)
            .iter()
            .zip(&self.rules)
            .map(|(b, r)| b * r.consequent(x))
            .sum()
    }
}

/// One rule per element of the Cartesian product of set indices, with zero
/// consequents. The last feature varies fastest.
pub fn enumerate_rules(partitions: Vec<FuzzyPartition>) -> Result<RuleBase> {
    if partitions.is_empty() {
        return Err(Error::Construction("no partitions given".into()));
    }
    if let Some(p) = partitions.iter().find(|p| p.is_empty()) {
        return Err(Error::Construction(format!("partition `{}` has no sets", p.feature)));
    }
    let sizes: Vec<usize> = partitions.iter().map(FuzzyPartition::len).collect();
    let total: usize = sizes.iter().product();
    let mut rules = Vec::with_capacity(total);
    let mut idx = vec![0usize; sizes.len()];
    for _ in 0..total {
        rules.push(Rule::with_zero_consequent(idx.clone()));
        for j in (0..sizes.len()).rev() {
            idx[j] += 1;
            if idx[j] < sizes[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    RuleBase::new(partitions, rules)
}

/// Product t-norm of a rule's Gaussian memberships.
pub fn firing_strength(rule: &Rule, x: &[f64], partitions: &[FuzzyPartition]) -> f64 {
    rule.antecedent
        .iter()
        .zip(partitions)
        .zip(x)
        .map(|((&a, p), &v)| p.sets()[a].membership(v))
        .product()
}

fn check_inputs(rule_base: &RuleBase, inputs: &DMatrix<f64>) -> Result<()> {
    if inputs.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if inputs.ncols() != rule_base.n_features() {
        return Err(Error::LengthMismatch {
            left: inputs.ncols(),
            right: rule_base.n_features(),
        });
    }
    Ok(())
}

/// Each rule's firing strength summed over all rows, divided by the total
/// over all rules. The result sums to one.
pub fn normalized_cumulative_strengths(rule_base: &RuleBase, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_inputs(rule_base, inputs)?;
    let mut sums = vec![0.0; rule_base.n_rules()];
    let mut x = vec![0.0; inputs.ncols()];
    for i in 0..inputs.nrows() {
        for (j, v) in x.iter_mut().enumerate() {
            *v = inputs[(i, j)];
        }
        for (r, s) in sums.iter_mut().enumerate() {
            *s += rule_base.firing_strength(r, &x);
        }
    }
    let total: f64 = sums.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical(
            "every rule has zero firing strength on the data".into(),
        ));
    }
    Ok(sums.into_iter().map(|s| s / total).collect())
}

/// Result of [`prune_inactive`].
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub rule_base: RuleBase,
    /// Indices into the input rule base of the rules that were kept.
    pub retained: Vec<usize>,
    /// Normalized cumulative strength of every input rule.
    pub strengths: Vec<f64>,
}

/// Drops rules whose normalized cumulative strength is strictly below
/// `threshold`, keeping the survivors in their original order.
pub fn prune_inactive(rule_base: &RuleBase, inputs: &DMatrix<f64>, threshold: f64) -> Result<PruneOutcome> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "pruning threshold must lie in [0, 1), got {threshold}"
        )));
    }
    let strengths = normalized_cumulative_strengths(rule_base, inputs)?;
    let retained: Vec<usize> = strengths
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(i, _)| i)
        .collect();
    if retained.is_empty() {
        return Err(Error::EmptyRuleBase { threshold });
    }
    Ok(PruneOutcome {
        rule_base: rule_base.retain_rules(&retained)?,
        retained,
        strengths,
    })
}

/// Where a model came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Overlap factor per feature, for grid models.
    #[serde(default)]
    pub overlap: Vec<f64>,
    #[serde(default)]
    pub prune_threshold: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// (membrane type, membrane orientation) of the data subset, if split.
    #[serde(default)]
    pub config_key: Option<(u8, u8)>,
    #[serde(default)]
    pub initial_rules: usize,
}

/// A rule base with the normalization it was fitted under.
///
/// [`TSModel::predict`] works in normalized units; [`TSModel::predict_raw`]
/// takes raw inputs and returns the target in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TSModel {
    pub rule_base: RuleBase,
    pub norm_stats: NormStats,
    #[serde(default)]
    pub metadata: ModelMetadata,
}

impl TSModel {
    pub fn new(rule_base: RuleBase, norm_stats: NormStats, metadata: ModelMetadata) -> Result<Self> {
        let model = Self {
            rule_base,
            norm_stats,
            metadata,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.rule_base.validate()?;
        let names = self.rule_base.feature_names();
        if self.norm_stats.columns.len() != names.len() + 1
            || self.norm_stats.mean.len() != self.norm_stats.columns.len()
            || self.norm_stats.std.len() != self.norm_stats.columns.len()
            || self.norm_stats.feature_names() != names.as_slice()
        {
            return Err(Error::Schema(format!(
                "normalization columns {:?} do not match model features {names:?}",
                self.norm_stats.columns
            )));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.rule_base.feature_names()
    }

    pub fn target_name(&self) -> &str {
        self.norm_stats.target_name()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.rule_base.evaluate(x)
    }

    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        let z = self.norm_stats.normalize_input(x);
        self.norm_stats.denormalize_target(self.predict(&z))
    }

    pub fn predict_batch(&self, inputs: &DMatrix<f64>) -> Vec<f64> {
        let mut x = vec![0.0; inputs.ncols()];
        (0..inputs.nrows())
            .map(|i| {
                for (j, v) in x.iter_mut().enumerate() {
                    *v = inputs[(i, j)];
                }
                self.predict(&x)
            })
            .collect()
    }
}

/// Output of the model at `x`, `predict(model, x)`.
pub fn predict(model: &TSModel, x: &[f64]) -> f64 {
    model.predict(x)
}

/// One rule's share of a prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleContribution {
    pub rule: usize,
    pub firing: f64,
    pub normalized: f64,
    pub consequent: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub output: f64,
    pub terms: Vec<RuleContribution>,
}

/// Per-rule decomposition of `predict(model, x)`; contributions sum to the
/// output.
pub fn explain(model: &TSModel, x: &[f64]) -> Explanation {
    let rb = &model.rule_base;
    let normalized = rb.normalized_strengths(x);
    let terms: Vec<RuleContribution> = rb
        .rules()
        .iter()
        .zip(normalized)
        .enumerate()
        .map(|(r, (rule, nb))| {
            let z = rule.consequent(x);
            RuleContribution {
                rule: r,
                firing: rb.firing_strength(r, x),
                normalized: nb,
                consequent: z,
                contribution: nb * z,
            }
        })
        .collect();
    let output = terms.iter().map(|t| t.contribution).sum();
    Explanation { output, terms }
}

fn signed_term(out: &mut String, coefficient: f64, name: Option<&str>, first: bool) {
    let magnitude = format!("{:.2}", coefficient.abs());
    let negative = coefficient < 0.0 && magnitude != "0.00";
    let body = match name {
        Some(n) => format!("{magnitude}*{n}"),
        None => magnitude,
    };
    match (first, negative) {
        (true, true) => write!(out, "-{body}"),
        (true, false) => write!(out, "{body}"),
        (false, true) => write!(out, " - {body}"),
        (false, false) => write!(out, " + {body}"),
    }
    .expect("writing to a String cannot fail");
}

/// `IF <feat> is <label> AND ... THEN <target> = <w1>*<feat1> + ... + <b>`
pub fn render_rule(rule_base: &RuleBase, rule: usize, target: &str) -> String {
    let r = &rule_base.rules()[rule];
    let antecedent = r
        .antecedent
        .iter()
        .zip(rule_base.partitions())
        .map(|(&a, p)| format!("{} is {}", p.feature, p.sets()[a].label))
        .collect::<Vec<_>>()
        .join(" AND ");
    let mut line = format!("IF {antecedent} THEN {target} = ");
    for (j, (w, p)) in r.weights.iter().zip(rule_base.partitions()).enumerate() {
        signed_term(&mut line, *w, Some(&p.feature), j == 0);
    }
    signed_term(&mut line, r.bias, None, r.weights.is_empty());
    line
}

pub fn render_rules(model: &TSModel) -> Vec<String> {
    (0..model.rule_base.n_rules())
        .map(|r| render_rule(&model.rule_base, r, model.target_name()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{build_grid, GridSpec};

    fn grid3(name: &str) -> FuzzyPartition {
        build_grid(name, (0.0, 10.0), &GridSpec::default()).unwrap()
    }

    fn grid2(name: &str) -> FuzzyPartition {
        build_grid(
            name,
            (-1.0, 1.0),
            &GridSpec {
                n_sets: 2,
                ..GridSpec::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn enumeration_counts() {
        let rb = enumerate_rules(vec![grid3("a"), grid3("b"), grid3("c")]).unwrap();
        assert_eq!(rb.n_rules(), 27);

        let rb = enumerate_rules(vec![grid2("a")]).unwrap();
        let ants: Vec<_> = rb.rules().iter().map(|r| r.antecedent.clone()).collect();
        assert_eq!(ants, vec![vec![0], vec![1]]);

        let rb = enumerate_rules(vec![grid3("a"), grid2("b")]).unwrap();
        assert_eq!(rb.n_rules(), 6);
        let distinct: HashSet<_> = rb.rules().iter().map(|r| r.antecedent.clone()).collect();
        assert_eq!(distinct.len(), 6);
        assert!(rb.rules().iter().all(|r| r.bias == 0.0 && r.weights == vec![0.0, 0.0]));
    }

    #[test]
    fn enumeration_rejects_empty() {
        assert!(enumerate_rules(vec![]).is_err());
        let empty = FuzzyPartition::from_clusters("a", (0.0, 1.0), vec![]).unwrap();
        assert!(matches!(enumerate_rules(vec![empty]), Err(Error::Construction(_))));
    }

    #[test]
    fn duplicate_antecedents_rejected() {
        let rules = vec![Rule::with_zero_consequent(vec![0]), Rule::with_zero_consequent(vec![0])];
        assert!(RuleBase::new(vec![grid2("a")], rules).is_err());
    }

    #[test]
    fn firing_at_centers_and_one_sigma() {
        let parts = vec![grid3("a"), grid3("b")];
        let rule = Rule::with_zero_consequent(vec![1, 2]);
        assert_eq!(firing_strength(&rule, &[5.0, 10.0], &parts), 1.0);
        let beta = firing_strength(&rule, &[5.0, 10.0 + 1.25], &parts);
        assert!((beta - (-0.5f64).exp()).abs() < 1e-15);
        assert!(firing_strength(&rule, &[-30.0, 40.0], &parts) > 0.0);
    }

    #[test]
    fn cumulative_strengths() {
        let rb = enumerate_rules(vec![grid3("a"), grid3("b")]).unwrap();
        let data = DMatrix::from_fn(40, 2, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let s = normalized_cumulative_strengths(&rb, &data).unwrap();
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let single = RuleBase::new(vec![grid2("a")], vec![Rule::with_zero_consequent(vec![1])]).unwrap();
        let s = normalized_cumulative_strengths(&single, &DMatrix::from_element(3, 1, 0.2)).unwrap();
        assert_eq!(s, vec![1.0]);
    }

    #[test]
    fn symmetric_rules_share_strength() {
        let rb = enumerate_rules(vec![grid2("a")]).unwrap();
        let data = DMatrix::from_column_slice(6, 1, &[-0.9, -0.4, -0.1, 0.1, 0.4, 0.9]);
        let s = normalized_cumulative_strengths(&rb, &data).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-10 && (s[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn pruning() {
        let rb = enumerate_rules(vec![grid3("a"), grid3("b")]).unwrap();
        let data = DMatrix::from_fn(30, 2, |i, _| (i % 3) as f64 * 0.2);
        let kept = prune_inactive(&rb, &data, 0.0).unwrap();
        assert_eq!(kept.rule_base.n_rules(), 9);
        let kept = prune_inactive(&rb, &data, 0.01).unwrap();
        assert!(kept.rule_base.n_rules() < 9);
        assert_eq!(kept.retained[0], 0);
        assert!(matches!(prune_inactive(&rb, &data, 0.999), Err(Error::EmptyRuleBase { .. })));
        assert!(prune_inactive(&rb, &data, 1.0).is_err());
    }

    #[test]
    fn pruning_separated_clusters() {
        // 199 points on the low set and 1 point on the high set: the high
        // rule carries ~0.005 of the cumulative strength.
        let narrow = build_grid(
            "a",
            (-1.0, 1.0),
            &GridSpec {
                n_sets: 2,
                overlap: 4.0,
                labels: None,
            },
        )
        .unwrap();
        let rb = enumerate_rules(vec![narrow]).unwrap();
        let mut pts = vec![-1.0; 199];
        pts.push(1.0);
        let data = DMatrix::from_column_slice(200, 1, &pts);
        let out = prune_inactive(&rb, &data, 0.01).unwrap();
        assert!(out.strengths[1] < 0.01 && out.strengths[1] > 0.004);
        assert_eq!(out.retained, vec![0]);
    }

    fn toy_model(rules: Vec<Rule>, parts: Vec<FuzzyPartition>) -> TSModel {
        let mut cols: Vec<String> = parts.iter().map(|p| p.feature.clone()).collect();
        cols.push("y".into());
        TSModel::new(
            RuleBase::new(parts, rules).unwrap(),
            NormStats::identity(cols),
            ModelMetadata::default(),
        )
        .unwrap()
    }

    #[test]
    fn single_rule_prediction_is_its_consequent() {
        let rule = Rule {
            antecedent: vec![0, 1],
            weights: vec![0.5, -2.0],
            bias: 3.0,
        };
        let model = toy_model(vec![rule.clone()], vec![grid2("a"), grid2("b")]);
        for x in [[0.3, -0.7], [5.0, 2.0]] {
            assert!((model.predict(&x) - rule.consequent(&x)).abs() < 1e-14);
        }
    }

    #[test]
    fn explanation_decomposes_prediction() {
        let rules = vec![
            Rule {
                antecedent: vec![0, 0],
                weights: vec![1.0, 2.0],
                bias: -1.0,
            },
            Rule {
                antecedent: vec![2, 2],
                weights: vec![-0.5, 0.25],
                bias: 4.0,
            },
            Rule {
                antecedent: vec![1, 0],
                weights: vec![0.0, 1.0],
                bias: 0.0,
            },
        ];
        let model = toy_model(rules, vec![grid3("a"), grid3("b")]);
        let x = [0.0, 0.0];
        let e = explain(&model, &x);
        assert!((e.output - model.predict(&x)).abs() < 1e-10);
        let best = e.terms.iter().max_by(|a, b| a.normalized.total_cmp(&b.normalized)).unwrap();
        assert_eq!(best.rule, 0);
    }

    #[test]
    fn rendering_format() {
        let rules = vec![Rule {
            antecedent: vec![0, 0, 0],
            weights: vec![0.15, 0.564, -0.149],
            bias: 0.22,
        }];
        let model = toy_model(rules, vec![grid3("DSmw"), grid3("dP"), grid3("V")]);
        let line = &render_rules(&model)[0];
        assert_eq!(
            line,
            "IF DSmw is low AND dP is low AND V is low THEN y = 0.15*DSmw + 0.56*dP - 0.15*V + 0.22"
        );
        assert_eq!(line.matches("low").count(), 3);
    }

    #[test]
    fn rendering_signs() {
        let rules = vec![Rule {
            antecedent: vec![1],
            weights: vec![-0.08],
            bias: -0.001,
        }];
        let model = toy_model(rules, vec![grid3("a")]);
        assert_eq!(render_rules(&model)[0], "IF a is medium THEN y = -0.08*a + 0.00");
    }

    #[test]
    fn model_feature_mismatch() {
        let rb = enumerate_rules(vec![grid2("a")]).unwrap();
        let stats = NormStats::identity(vec!["b".into(), "y".into()]);
        assert!(TSModel::new(rb, stats, ModelMetadata::default()).is_err());
    }
}
