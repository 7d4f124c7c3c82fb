//! Gaussian fuzzy sets and the fixed grid partitions built from them.
//!
//! A grid partition places `n` sets uniformly over a feature's universe,
//! with centers at both bounds and one width shared by every set:
//!
//! ```text
//! dU      = (max - min) / (n - 1)
//! mu_j    = min + (j - 1) * dU          j = 1..n
//! sigma   = dU / (n + k)
//! ```
//!
//! `k > 0` trades overlap between neighbours for distinguishability; larger
//! `k` narrows every set. Experts may then move or resize individual sets
//! with [`override_sets`], which flags the partition as modified.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Gaussian membership function `exp(-0.5 * ((x - mu) / sigma)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMF {
    pub mu: f64,
    pub sigma: f64,
    pub label: String,
}

impl GaussianMF {
    pub fn new(mu: f64, sigma: f64, label: impl Into<String>) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Domain(format!("center must be finite, got {mu}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("width must be positive, got {sigma}")));
        }
        Ok(Self {
            mu,
            sigma,
            label: label.into(),
        })
    }

    #[inline]
    pub fn membership(&self, x: f64) -> f64 {
        self.log_membership(x).exp()
    }

    #[inline]
    pub fn log_membership(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z
    }
}

/// How a partition came to be; decides which invariants apply to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionOrigin {
    /// Built by [`build_grid`], untouched.
    Grid,
    /// A grid partition edited by [`override_sets`].
    ExpertModified,
    /// Projected from clusters: one set per cluster, no ordering.
    Clustered,
}

/// The fuzzy sets covering one feature's universe of discourse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyPartition {
    pub feature: String,
    pub universe_min: f64,
    pub universe_max: f64,
    sets: Vec<GaussianMF>,
    origin: PartitionOrigin,
}

impl FuzzyPartition {
    /// Partition with sets taken as-is (cluster projections). Only widths
    /// are checked; centers may repeat or fall outside the universe.
    pub fn from_clusters(feature: impl Into<String>, universe: (f64, f64), sets: Vec<GaussianMF>) -> Result<Self> {
        let p = Self {
            feature: feature.into(),
            universe_min: universe.0,
            universe_max: universe.1,
            sets,
            origin: PartitionOrigin::Clustered,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn sets(&self) -> &[GaussianMF] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn origin(&self) -> PartitionOrigin {
        self.origin
    }

    pub fn is_expert_modified(&self) -> bool {
        self.origin == PartitionOrigin::ExpertModified
    }

    pub fn universe(&self) -> (f64, f64) {
        (self.universe_min, self.universe_max)
    }

    pub fn memberships(&self, x: f64) -> Vec<f64> {
        self.sets.iter().map(|s| s.membership(x)).collect()
    }

    pub(crate) fn sets_mut(&mut self) -> &mut Vec<GaussianMF> {
        &mut self.sets
    }

    /// Checks the invariants that apply to this partition's origin.
    pub fn validate(&self) -> Result<()> {
        if !(self.universe_max > self.universe_min) {
            return Err(Error::DegenerateUniverse {
                min: self.universe_min,
                max: self.universe_max,
            });
        }
        for s in &self.sets {
            if !(s.sigma > 0.0 && s.sigma.is_finite()) || !s.mu.is_finite() {
                return Err(Error::Domain(format!(
                    "set `{}` of `{}` has invalid parameters (mu {}, sigma {})",
                    s.label, self.feature, s.mu, s.sigma
                )));
            }
        }
        let mut labels = HashSet::new();
        for s in &self.sets {
            if !labels.insert(s.label.as_str()) {
                return Err(Error::Domain(format!(
                    "duplicate label `{}` in partition `{}`",
                    s.label, self.feature
                )));
            }
        }
        if self.origin != PartitionOrigin::Clustered {
            for w in self.sets.windows(2) {
                if !(w[1].mu > w[0].mu) {
                    return Err(Error::Ordering(format!(
                        "centers of `{}` must increase strictly: `{}` at {} then `{}` at {}",
                        self.feature, w[0].label, w[0].mu, w[1].label, w[1].mu
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Shape of a grid partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_sets: usize,
    /// The overlap factor `k`.
    pub overlap: f64,
    pub labels: Option<Vec<String>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_sets: 3,
            overlap: 1.0,
            labels: None,
        }
    }
}

/// Linguistic terms used when none are configured.
pub fn default_labels(n: usize) -> Vec<String> {
    match n {
        2 => vec!["low".into(), "high".into()],
        3 => vec!["low".into(), "medium".into(), "high".into()],
        _ => (1..=n).map(|j| format!("mf{j}")).collect(),
    }
}

/// Uniform Gaussian grid over `range` for one feature.
pub fn build_grid(feature: impl Into<String>, range: (f64, f64), spec: &GridSpec) -> Result<FuzzyPartition> {
    let (min, max) = range;
    if !(min.is_finite() && max.is_finite() && max > min) {
        return Err(Error::DegenerateUniverse { min, max });
    }
    let n = spec.n_sets;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("a grid needs at least 2 sets, got {n}")));
    }
    if !(spec.overlap > 0.0 && spec.overlap.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "overlap factor must be positive, got {}",
            spec.overlap
        )));
    }
    let labels = match &spec.labels {
        Some(l) if l.len() != n => {
            return Err(Error::InvalidArgument(format!("{} labels for {n} sets", l.len())));
        }
        Some(l) => l.clone(),
        None => default_labels(n),
    };
    let width = (max - min) / (n - 1) as f64;
    let sigma = width / (n as f64 + spec.overlap);
    let sets = labels
        .into_iter()
        .enumerate()
        .map(|(j, label)| {
            // Pin the last center to the bound instead of accumulating rounding.
            let mu = if j == n - 1 { max } else { min + j as f64 * width };
            GaussianMF { mu, sigma, label }
        })
        .collect();
    let p = FuzzyPartition {
        feature: feature.into(),
        universe_min: min,
        universe_max: max,
        sets,
        origin: PartitionOrigin::Grid,
    };
    p.validate()?;
    Ok(p)
}

/// One expert edit; absent fields keep their current value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SetEdit {
    pub index: usize,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub label: Option<String>,
}

/// Applies expert edits and marks the result as modified.
pub fn override_sets(partition: &FuzzyPartition, edits: &[SetEdit]) -> Result<FuzzyPartition> {
    if edits.is_empty() {
        return Ok(partition.clone());
    }
    let mut out = partition.clone();
    for e in edits {
        let n = out.sets.len();
        let set = out.sets.get_mut(e.index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "set index {} out of range for `{}` ({n} sets)",
                e.index, partition.feature
            ))
        })?;
        if let Some(mu) = e.mu {
            set.mu = mu;
        }
        if let Some(sigma) = e.sigma {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Domain(format!("width must be positive, got {sigma}")));
            }
            set.sigma = sigma;
        }
        if let Some(label) = &e.label {
            set.label = label.clone();
        }
    }
    if out.origin == PartitionOrigin::Grid {
        out.origin = PartitionOrigin::ExpertModified;
    }
    out.validate()?;
    Ok(out)
}

/// Stretches of the universe where no set reaches the requested membership.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub min_membership: f64,
    /// Closed intervals `[start, end]` between scan points, in feature units.
    pub gaps: Vec<(f64, f64)>,
    /// Smallest upper-envelope value seen on the scan.
    pub weakest: f64,
}

impl CoverageReport {
    pub fn is_covered(&self) -> bool {
        self.gaps.is_empty()
    }
}

pub const COVERAGE_SCAN_POINTS: usize = 1000;

/// Scans the universe at [`COVERAGE_SCAN_POINTS`] uniform points and reports
/// runs where the best membership is below `min_membership`.
pub fn coverage_check(partition: &FuzzyPartition, min_membership: f64) -> Result<CoverageReport> {
    if !(min_membership > 0.0 && min_membership < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "coverage level must lie in (0, 1), got {min_membership}"
        )));
    }
    let (lo, hi) = partition.universe();
    let step = (hi - lo) / (COVERAGE_SCAN_POINTS - 1) as f64;
    let mut gaps = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    let mut weakest = f64::INFINITY;
    for i in 0..COVERAGE_SCAN_POINTS {
        let x = if i == COVERAGE_SCAN_POINTS - 1 { hi } else { lo + i as f64 * step };
        let best = partition.sets.iter().map(|s| s.membership(x)).fold(0.0, f64::max);
        weakest = weakest.min(best);
        if best < min_membership {
            open = Some(match open {
                Some((start, _)) => (start, x),
                None => (x, x),
            });
        } else if let Some(gap) = open.take() {
            gaps.push(gap);
        }
    }
    gaps.extend(open);
    Ok(CoverageReport {
        min_membership,
        gaps,
        weakest,
    })
}
