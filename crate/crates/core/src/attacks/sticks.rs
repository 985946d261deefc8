use super::chamfer::bounded_adam;
use super::{binary_search_lambda, AttackConfig, AttackError, AttackInput, AttackResult, Result};
use crate::defenses::top_indices;
use crate::geometry::{farthest_point_sample, mean_nn_distance, Point3, PointCloud, SurfaceIndex, VpTree};
use crate::net::{ClassifierParams, SaliencyKind};

/// Sticks grown from the benign surface.
#[derive(Debug, Clone, PartialEq)]
pub struct StickSet {
    /// Cloud indices of the perturbed points the sticks were built from.
    pub rows: Vec<usize>,
    /// Projections of the perturbed points onto the benign surface.
    pub bases: Vec<Point3>,
    /// The perturbed points themselves.
    pub tips: Vec<Point3>,
    /// Points placed on each stick.
    pub counts: Vec<usize>,
}

impl StickSet {
    pub fn lengths(&self) -> Vec<f64> {
        self.bases.iter().zip(&self.tips).map(|(b, t)| b.distance(*t)).collect()
    }
}

/// Number of stick points for the given stick lengths and spacing `μ′`.
pub fn stick_point_budget(lengths: &[f64], mu_prime: f64) -> usize {
    (lengths.iter().sum::<f64>() / mu_prime).floor() as usize
}

/// Splits `total` points across sticks in proportion to their lengths by
/// largest remainder (ties to the lower index).
pub fn allocate_stick_points(lengths: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = lengths.iter().sum();
    if lengths.is_empty() || !(sum > 0.0) {
        return vec![0; lengths.len()];
    }
    let quotas: Vec<f64> = lengths.iter().map(|l| total as f64 * l / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    let frac = |i: usize| quotas[i] - quotas[i].floor();
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Builds the stick cloud: `N − κ` original points kept by farthest point
/// sampling, then `κ` points spread over the sticks, evenly spaced from the
/// base (excluded) to the tip (included). Returns the cloud, the sticks and
/// whether `κ` had to be clamped to `N`.
pub(crate) fn build_sticks(
    x: &PointCloud,
    rows: &[usize],
    tips: &[Point3],
    surface: &SurfaceIndex,
    mu_prime: f64,
) -> Result<(PointCloud, StickSet, bool)> {
    let n = x.len();
    let bases: Vec<Point3> = tips.iter().map(|&t| surface.project(t)).collect();
    let lengths: Vec<f64> = bases.iter().zip(tips).map(|(b, t)| b.distance(*t)).collect();
    let mut kappa = stick_point_budget(&lengths, mu_prime);
    let clamped = kappa > n;
    kappa = kappa.min(n);
    let counts = allocate_stick_points(&lengths, kappa);
    let mut keep = farthest_point_sample(&x.points, n - kappa, &[])?;
    keep.sort_unstable();
    let mut points: Vec<Point3> = keep.iter().map(|&i| x[i]).collect();
    for ((b, t), &c) in bases.iter().zip(tips).zip(&counts) {
        for k in 1..c {
            points.push(*b + (*t - *b) * (k as f64 / c as f64));
        }
        if c > 0 {
            points.push(*t);
        }
    }
    let sticks = StickSet {
        rows: rows.to_vec(),
        bases,
        tips: tips.to_vec(),
        counts,
    };
    Ok((PointCloud::new(points), sticks, clamped))
}

/// Adversarial sticks: the `σ` most salient points are perturbed with
/// masked Adam (`δ′ = ½ tanh δ`, Chamfer plus L2 penalty, binary-searched
/// λ), projected onto the benign surface to get stick bases, and the cloud
/// is resampled onto the sticks.
pub fn adversarial_sticks(model: &ClassifierParams, input: &AttackInput, cfg: &AttackConfig) -> Result<AttackResult> {
    let x = input.cloud;
    cfg.validate(x.len())?;
    let surface = input.surface.ok_or(AttackError::MissingSurface("adversarial sticks"))?;
    let mu_prime = mean_nn_distance(x)? / cfg.mu;
    let saliency = model.saliency(x, SaliencyKind::Loss, input.label)?;
    let rows = top_indices(&saliency, cfg.sigma);
    let tree = VpTree::from_points(&x.points)?;
    let mut peak = 0.0f64;
    let (_, mut result) = binary_search_lambda(
        (cfg.lambda_min, cfg.lambda_max),
        cfg.lambda_steps,
        |lambda| {
            let run = bounded_adam(model, input, &tree, &rows, 0.5, cfg, lambda, false)?;
            peak = peak.max(run.peak);
            let tips: Vec<Point3> = rows.iter().map(|&r| run.last[r]).collect();
            let (cloud, _, clamped) = build_sticks(x, &rows, &tips, surface, mu_prime)?;
            let mut r = AttackResult::evaluate(model, input, cloud)?;
            if clamped {
                r.flagged = true;
                r.note = Some(format!("stick budget clamped to {} points", x.len()));
            }
            Ok(r)
        },
        |r| r.chamfer,
    )?;
    result.iterations = cfg.iterations;
    result.bounded_peak = Some((peak, 0.5));
    Ok(result)
}
