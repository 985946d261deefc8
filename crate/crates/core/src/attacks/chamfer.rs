use super::{binary_search_lambda, total_norm, AttackConfig, AttackInput, AttackResult, Result};
use crate::geometry::{chamfer_distance, Point3, PointCloud, VpTree};
use crate::net::{AdamState, ClassifierParams, Direction};

/// Outcome of one Adam run over a tanh-bounded perturbation.
pub(crate) struct BoundedRun {
    /// The last iterate.
    pub last: PointCloud,
    /// Successful iterate with the smallest Chamfer distance to the benign
    /// cloud, if any iterate succeeded and tracking was requested.
    pub best_success: Option<(f64, PointCloud)>,
    /// Largest |δ′| coordinate seen on any iterate.
    pub peak: f64,
}

/// Maximizes `J(x + δ′) − λ (C(x′_rows, x) + α‖δ′‖₂)` over `δ` with Adam,
/// where `δ′ = bound · tanh δ` is nonzero only on `rows` and `x′_rows` are
/// the perturbed rows.
pub(crate) fn bounded_adam(
    model: &ClassifierParams,
    input: &AttackInput,
    tree: &VpTree,
    rows: &[usize],
    bound: f64,
    cfg: &AttackConfig,
    lambda: f64,
    track_best: bool,
) -> Result<BoundedRun> {
    let x = input.cloud;
    let m = rows.len();
    let mut delta = vec![0.0f64; 3 * m];
    let mut adam = AdamState::new(3 * m, cfg.learning_rate);
    let mut current = x.clone();
    let mut best_success: Option<(f64, PointCloud)> = None;
    let mut peak = 0.0f64;
    for it in 0..=cfg.iterations {
        let (_, gj, fwd) = model.loss_and_input_gradient(&current, input.label)?;
        if track_best && fwd.predicted() != input.label {
            let c = chamfer_distance(&current, x)?;
            if best_success.as_ref().map_or(true, |(b, _)| c < *b) {
                best_success = Some((c, current.clone()));
            }
        }
        if it == cfg.iterations {
            break;
        }
        let dprime: Vec<Point3> = (0..m)
            .map(|k| Point3::new(delta[3 * k].tanh(), delta[3 * k + 1].tanh(), delta[3 * k + 2].tanh()) * bound)
            .collect();
        let dnorm = total_norm(&dprime);
        let mut grad = vec![0.0; 3 * m];
        for (k, &r) in rows.iter().enumerate() {
            let p = current[r];
            let nn = tree.nearest(p);
            let mut gc = Point3::ZERO;
            if nn.distance > 0.0 {
                gc = (p - x[nn.index]) / (nn.distance * m as f64);
            }
            let mut gl2 = Point3::ZERO;
            if dnorm > 0.0 {
                gl2 = dprime[k] * (cfg.alpha / dnorm);
            }
            let g = gj[r] - (gc + gl2) * lambda;
            let d = &delta[3 * k..3 * k + 3];
            for (c, gv) in g.to_array().into_iter().enumerate() {
                let t = d[c].tanh();
                grad[3 * k + c] = gv * bound * (1.0 - t * t);
            }
        }
        adam.step(&mut delta, &grad, Direction::Ascend)?;
        for (k, &r) in rows.iter().enumerate() {
            let d = Point3::new(delta[3 * k].tanh(), delta[3 * k + 1].tanh(), delta[3 * k + 2].tanh()) * bound;
            peak = peak.max(d.max_abs());
            current.points[r] = x[r] + d;
        }
    }
    Ok(BoundedRun {
        last: current,
        best_success,
        peak,
    })
}

/// Chamfer attack: Adam over `δ` with `δ′ = tanh δ` on every point and a
/// Chamfer plus L2 penalty weighted by a binary-searched λ. Returns the
/// successful example with the smallest Chamfer distance found.
pub fn chamfer_attack(model: &ClassifierParams, input: &AttackInput, cfg: &AttackConfig) -> Result<AttackResult> {
    cfg.validate(input.cloud.len())?;
    let tree = VpTree::from_points(&input.cloud.points)?;
    let rows: Vec<usize> = (0..input.cloud.len()).collect();
    let mut peak = 0.0f64;
    let (_, mut result) = binary_search_lambda(
        (cfg.lambda_min, cfg.lambda_max),
        cfg.lambda_steps,
        |lambda| {
            let run = bounded_adam(model, input, &tree, &rows, 1.0, cfg, lambda, true)?;
            peak = peak.max(run.peak);
            let cloud = run.best_success.map_or(run.last, |(_, c)| c);
            AttackResult::evaluate(model, input, cloud)
        },
        |r| r.chamfer,
    )?;
    result.iterations = cfg.iterations;
    result.bounded_peak = Some((peak, 1.0));
    Ok(result)
}
