use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AdamState, ClassifierParams, Direction, NetError, Result};
use crate::geometry::{Point3, PointCloud};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Apply a uniformly random 3D rotation to every sample each epoch.
    pub rotate: bool,
    /// Standard deviation of per-coordinate Gaussian jitter, clipped to
    /// `±JITTER_CLIP`; 0 disables it.
    pub jitter: f64,
}

pub const JITTER_CLIP: f64 = 0.05;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 16,
            learning_rate: 2e-3,
            rotate: true,
            jitter: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Uniform random rotation from a unit quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rotate_point(r: &[[f64; 3]; 3], p: Point3) -> Point3 {
    Point3::new(
        r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z,
        r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z,
        r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z,
    )
}

fn augment<R: Rng + ?Sized>(cloud: &PointCloud, cfg: &TrainConfig, rng: &mut R) -> PointCloud {
    let rot = cfg.rotate.then(|| random_rotation(rng));
    let points = cloud
        .iter()
        .map(|&p| {
            let mut q = rot.as_ref().map_or(p, |r| rotate_point(r, p));
            if cfg.jitter > 0.0 {
                let mut n = || (cfg.jitter * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).clamp(-JITTER_CLIP, JITTER_CLIP);
                q = q + Point3::new(n(), n(), n());
            }
            q
        })
        .collect();
    PointCloud::new(points)
}

/// Minibatch Adam on the mean cross-entropy of each batch. Per-sample
/// gradients within a batch may be computed in parallel; they are summed in
/// sample order so the result does not depend on the thread count.
pub fn train<R: Rng + ?Sized>(
    params: &mut ClassifierParams,
    data: &[(PointCloud, usize)],
    cfg: &TrainConfig,
    rng: &mut R,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let classes = params.num_classes();
    if let Some((_, y)) = data.iter().find(|(_, y)| *y >= classes) {
        return Err(NetError::BadLabel { label: *y, classes });
    }
    if cfg.batch_size == 0 {
        return Err(NetError::Architecture("batch size must be positive".into()));
    }
    let mut adam = AdamState::new(params.num_parameters(), cfg.learning_rate);
    let mut flat = params.flatten();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<(PointCloud, usize)> = batch
                .iter()
                .map(|&i| (augment(&data[i].0, cfg, rng), data[i].1))
                .collect();
            let current = &*params;
            let results = inputs
                .par_iter()
                .map(|(c, y)| current.loss_and_param_gradient(c, *y))
                .collect::<Result<Vec<_>>>()?;
            let mut total = vec![0.0; flat.len()];
            for ((loss, g, fwd), (_, y)) in results.iter().zip(&inputs) {
                loss_sum += loss;
                correct += usize::from(fwd.predicted() == *y);
                for (t, v) in total.iter_mut().zip(g.flatten()) {
                    *t += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            total.iter_mut().for_each(|t| *t *= scale);
            adam.step(&mut flat, &total, Direction::Descend)?;
            params.assign_flat(&flat)?;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

/// Fraction of samples classified correctly.
pub fn accuracy(params: &ClassifierParams, data: &[(PointCloud, usize)]) -> Result<f64> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let hits = data
        .par_iter()
        .map(|(c, y)| params.predict(c).map(|p| usize::from(p == *y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / data.len() as f64)
}
