//! Similarity-driven merging of overlapping fuzzy sets.

use nalgebra::DMatrix;

use crate::engine::RuleBase;
use crate::error::{Error, Result};
use crate::metrics::jaccard;
use crate::partition::{FuzzyPartition, GaussianMF, PartitionOrigin};

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub rule_base: RuleBase,
    /// Fuzzy sets removed across all features.
    pub dropped_sets: usize,
    /// Rules removed because their antecedents became identical.
    pub collapsed_rules: usize,
}

/// Per-feature working state: the current sets, their firing mass over the
/// data and the cached pairwise similarities.
struct FeatureState {
    sets: Vec<GaussianMF>,
    mass: Vec<f64>,
    sim: Vec<Vec<f64>>,
    universe: (f64, f64),
    ordered: bool,
}

impl FeatureState {
    fn new(partition: &FuzzyPartition, column: &[f64]) -> Self {
        let sets = partition.sets().to_vec();
        let universe = partition.universe();
        let mass = sets.iter().map(|s| mass_of(s, column)).collect();
        let n = sets.len();
        let mut sim = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = jaccard(&sets[i], &sets[j], universe);
                sim[i][j] = v;
                sim[j][i] = v;
            }
        }
        Self {
            sets,
            mass,
            sim,
            universe,
            ordered: partition.origin() != PartitionOrigin::Clustered,
        }
    }

    fn best_pair(&self) -> Option<(usize, usize, f64)> {
        let n = self.sets.len();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.sim[i][j];
                if best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((i, j, v));
                }
            }
        }
        best
    }

    /// Replaces set `a` by the merge of `a` and `b` (a < b) and removes `b`.
    /// Returns where every pre-merge index now points. Grid partitions are
    /// kept sorted by center.
    fn merge(&mut self, a: usize, b: usize, column: &[f64]) -> Vec<usize> {
        let (wa, wb) = match (self.mass[a], self.mass[b]) {
            (x, y) if x.is_finite() && y.is_finite() && x + y > 0.0 => (x, y),
            _ => (1.0, 1.0),
        };
        let total = wa + wb;
        let (sa, sb) = (&self.sets[a], &self.sets[b]);
        let merged = GaussianMF {
            mu: (wa * sa.mu + wb * sb.mu) / total,
            sigma: (wa * sa.sigma + wb * sb.sigma) / total,
            label: sa.label.clone(),
        };
        let n = self.sets.len();
        let mut sets = self.sets.clone();
        let mut mass = self.mass.clone();
        mass[a] = mass_of(&merged, column);
        sets[a] = merged;
        // Surviving old indices in their new order.
        let mut order: Vec<usize> = (0..n).filter(|&i| i != b).collect();
        if self.ordered {
            order.sort_by(|&i, &j| sets[i].mu.total_cmp(&sets[j].mu));
        }
        let mut map = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            map[old] = new;
        }
        map[b] = map[a];
        let old_sim = std::mem::take(&mut self.sim);
        self.sets = order.iter().map(|&i| sets[i].clone()).collect();
        self.mass = order.iter().map(|&i| mass[i]).collect();
        self.sim = order
            .iter()
            .map(|&i| order.iter().map(|&j| old_sim[i][j]).collect())
            .collect();
        let na = map[a];
        for j in 0..self.sets.len() {
            if j != na {
                let v = jaccard(&self.sets[na], &self.sets[j], self.universe);
                self.sim[na][j] = v;
                self.sim[j][na] = v;
            }
        }
        map
    }
}

fn mass_of(set: &GaussianMF, column: &[f64]) -> f64 {
    column.iter().map(|&x| set.membership(x)).sum()
}

/// Greedily merges the most similar within-feature pair of sets while its
/// Jaccard index is at least `threshold`, remapping rule antecedents as it
/// goes. Rules that end up with the same antecedent are collapsed, keeping
/// the first. `inputs` (samples by features, in model space) supplies the
/// firing mass used to weight merged parameters.
pub fn grabs_merge(rb: &RuleBase, threshold: f64, inputs: &DMatrix<f64>) -> Result<MergeOutcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "merge threshold must be in (0, 1], got {threshold}"
        )));
    }
    let m = rb.n_features();
    if inputs.ncols() != m {
        return Err(Error::LengthMismatch {
            left: inputs.ncols(),
            right: m,
        });
    }
    let columns: Vec<Vec<f64>> = (0..m).map(|j| inputs.column(j).iter().copied().collect()).collect();
    let mut states: Vec<FeatureState> = rb
        .partitions()
        .iter()
        .zip(&columns)
        .map(|(p, c)| FeatureState::new(p, c))
        .collect();
    let mut antecedents: Vec<Vec<usize>> = rb.rules().iter().map(|r| r.antecedent.clone()).collect();

    let mut dropped = 0;
    loop {
        let mut best: Option<(usize, usize, usize, f64)> = None;
        for (f, st) in states.iter().enumerate() {
            if let Some((a, b, v)) = st.best_pair() {
                if best.is_none_or(|(_, _, _, bv)| v > bv) {
                    best = Some((f, a, b, v));
                }
            }
        }
        let Some((f, a, b, v)) = best else { break };
        if v < threshold {
            break;
        }
        let map = states[f].merge(a, b, &columns[f]);
        for ant in &mut antecedents {
            ant[f] = map[ant[f]];
        }
        dropped += 1;
    }

    let mut out = rb.clone();
    let mut seen = std::collections::HashSet::new();
    let mut keep = Vec::new();
    {
        let (parts, rules) = out.parts_mut();
        for (p, st) in parts.iter_mut().zip(states) {
            *p.sets_mut() = st.sets;
        }
        for (i, ant) in antecedents.iter().enumerate() {
            rules[i].antecedent = ant.clone();
            if seen.insert(ant.clone()) {
                keep.push(i);
            }
        }
    }
    let collapsed = antecedents.len() - keep.len();
    if collapsed > 0 {
        out = out.retain_rules(&keep)?;
    }
    out.validate()?;
    Ok(MergeOutcome {
        rule_base: out,
        dropped_sets: dropped,
        collapsed_rules: collapsed,
    })
}
