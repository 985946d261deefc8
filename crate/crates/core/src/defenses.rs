//! Point-removal defenses applied to a cloud before it is classified.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, PointCloud, VpTree};
use crate::net::{ClassifierParams, NetError, SaliencyKind};

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("cannot remove {remove} of {available} points")]
    TooMany { remove: usize, available: usize },
    #[error("outlier removal needs k >= 1, got {0}")]
    BadNeighborCount(usize),
    #[error("outlier removal needs more than k = {k} points, got {available}")]
    TooFewPoints { k: usize, available: usize },
    #[error("std threshold must be finite and >= 0, got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Net(#[from] NetError),
}

pub type Result<T> = std::result::Result<T, DefenseError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseKind {
    None,
    RandomRemoval,
    OutlierRemoval,
    SalientRemoval,
}

impl DefenseKind {
    pub const ALL: [DefenseKind; 4] = [
        DefenseKind::None,
        DefenseKind::RandomRemoval,
        DefenseKind::OutlierRemoval,
        DefenseKind::SalientRemoval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DefenseKind::None => "none",
            DefenseKind::RandomRemoval => "random_removal",
            DefenseKind::OutlierRemoval => "outlier_removal",
            DefenseKind::SalientRemoval => "salient_removal",
        }
    }
}

impl std::str::FromStr for DefenseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        DefenseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = DefenseKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown defense {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseConfig {
    pub kind: DefenseKind,
    /// Points removed by random and salient removal.
    pub remove: usize,
    /// Neighbor count for outlier removal.
    pub k: usize,
    /// Standard-deviation multiplier for outlier removal.
    pub std_threshold: f64,
    /// Seed for random removal; the sample index is added per sample.
    pub seed: u64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            kind: DefenseKind::None,
            remove: 200,
            k: 10,
            std_threshold: 1.0,
            seed: 0,
        }
    }
}

impl DefenseConfig {
    pub fn new(kind: DefenseKind) -> Self {
        DefenseConfig {
            kind,
            ..DefenseConfig::default()
        }
    }

    /// Applies the defense. `rng` is only used by random removal.
    pub fn apply<R: Rng + ?Sized>(&self, model: &ClassifierParams, cloud: &PointCloud, rng: &mut R) -> Result<PointCloud> {
        match self.kind {
            DefenseKind::None => Ok(cloud.clone()),
            DefenseKind::RandomRemoval => random_remove(cloud, self.remove, rng),
            DefenseKind::OutlierRemoval => outlier_remove(cloud, self.k, self.std_threshold),
            DefenseKind::SalientRemoval => salient_remove(model, cloud, self.remove),
        }
    }
}

fn check_remove(cloud: &PointCloud, m: usize) -> Result<()> {
    if m >= cloud.len() && !(m == 0 && cloud.is_empty()) {
        return Err(DefenseError::TooMany {
            remove: m,
            available: cloud.len(),
        });
    }
    Ok(())
}

fn keep_except(cloud: &PointCloud, removed: &[bool]) -> PointCloud {
    PointCloud::new(
        cloud
            .iter()
            .zip(removed)
            .filter_map(|(&p, &r)| (!r).then_some(p))
            .collect(),
    )
}

/// Removes a uniformly random `m`-subset; survivors keep their order.
pub fn random_remove<R: Rng + ?Sized>(cloud: &PointCloud, m: usize, rng: &mut R) -> Result<PointCloud> {
    check_remove(cloud, m)?;
    let mut removed = vec![false; cloud.len()];
    for i in index::sample(rng, cloud.len(), m) {
        removed[i] = true;
    }
    Ok(keep_except(cloud, &removed))
}

/// Mean distance from each point to its `k` nearest other points.
pub fn knn_mean_distances(cloud: &PointCloud, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(DefenseError::BadNeighborCount(k));
    }
    if k >= cloud.len() {
        return Err(DefenseError::TooFewPoints { k, available: cloud.len() });
    }
    let tree = VpTree::from_points(&cloud.points)?;
    cloud
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let nn = tree.k_nearest(p, k, Some(i))?;
            Ok(nn.iter().map(|n| n.distance).sum::<f64>() / k as f64)
        })
        .collect()
}

/// Statistical outlier removal: drops points whose mean distance to their
/// `k` nearest neighbors exceeds the mean of that statistic by more than
/// `std_threshold` population standard deviations.
pub fn outlier_remove(cloud: &PointCloud, k: usize, std_threshold: f64) -> Result<PointCloud> {
    if !(std_threshold >= 0.0) || !std_threshold.is_finite() {
        return Err(DefenseError::BadThreshold(std_threshold));
    }
    let o = knn_mean_distances(cloud, k)?;
    let n = o.len() as f64;
    let mean = o.iter().sum::<f64>() / n;
    let var = o.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let limit = mean + std_threshold * var.sqrt();
    let removed: Vec<bool> = o.iter().map(|&v| v > limit).collect();
    Ok(keep_except(cloud, &removed))
}

/// Indices of the `m` largest scores, ties broken toward the lower index.
pub fn top_indices(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m);
    order
}

/// Removes the `m` points with the highest class-probability saliency.
pub fn salient_remove(model: &ClassifierParams, cloud: &PointCloud, m: usize) -> Result<PointCloud> {
    check_remove(cloud, m)?;
    if m == 0 {
        return Ok(cloud.clone());
    }
    let s = model.saliency(cloud, SaliencyKind::Probability, 0)?;
    let mut removed = vec![false; cloud.len()];
    for i in top_indices(&s, m) {
        removed[i] = true;
    }
    Ok(keep_except(cloud, &removed))
}
