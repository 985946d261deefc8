use super::{binary_search_lambda, total_norm, AttackConfig, AttackInput, AttackResult, Result};
use crate::defenses::top_indices;
use crate::geometry::{farthest_point_sample, mean_nn_distance, Point3, PointCloud};
use crate::net::{AdamState, ClassifierParams, Direction};

/// Step, relative to the normalized saliency, taken by candidate points
/// along the loss gradient when placing the initial sinks.
pub const SINK_INIT_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SinkSet {
    pub initial: Vec<Point3>,
    pub current: Vec<Point3>,
}

/// Gaussian falloff weights `φ(‖s₀[j] − x[i]‖)`, row-major `N × σ`.
fn falloff(x: &PointCloud, s0: &[Point3], mu_prime: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(x.len() * s0.len());
    for &p in x.iter() {
        for &s in s0 {
            let r = s.distance(p) / mu_prime;
            w.push((-r * r).exp());
        }
    }
    w
}

fn raw_displacement(x: &PointCloud, s: &[Point3], phi: &[f64]) -> Vec<Point3> {
    let m = s.len();
    x.iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut u = Point3::ZERO;
            for (j, &sj) in s.iter().enumerate() {
                u += (sj - p) * phi[i * m + j];
            }
            u
        })
        .collect()
}

/// Per-point displacement `x*[i] − x[i] = tanh(Σⱼ (s[j] − x[i]) φ(‖s₀[j] − x[i]‖))`
/// with `φ(r) = exp(−(r/μ′)²)`, tanh taken componentwise.
pub fn sink_displacement(x: &PointCloud, s: &[Point3], s0: &[Point3], mu_prime: f64) -> Vec<Point3> {
    let phi = falloff(x, s0, mu_prime);
    raw_displacement(x, s, &phi)
        .into_iter()
        .map(|u| u.map(f64::tanh))
        .collect()
}

/// Value of the sinks objective
/// `J(x*) − λ(‖x* − x‖₂ + α maxⱼ‖s[j] − s₀[j]‖ − β min_{i≠j}‖s[i] − s[j]‖)`
/// and its gradient with respect to the sinks.
pub struct SinkObjective {
    pub value: f64,
    pub gradient: Vec<Point3>,
    pub adversarial: PointCloud,
    pub predicted: usize,
    /// Largest |tanh| displacement coordinate.
    pub peak: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn sinks_objective(
    model: &ClassifierParams,
    x: &PointCloud,
    y: usize,
    s: &[Point3],
    s0: &[Point3],
    mu_prime: f64,
    lambda: f64,
    alpha: f64,
    beta: f64,
) -> Result<SinkObjective> {
    let phi = falloff(x, s0, mu_prime);
    objective_with(model, x, y, s, s0, &phi, lambda, alpha, beta)
}

#[allow(clippy::too_many_arguments)]
fn objective_with(
    model: &ClassifierParams,
    x: &PointCloud,
    y: usize,
    s: &[Point3],
    s0: &[Point3],
    phi: &[f64],
    lambda: f64,
    alpha: f64,
    beta: f64,
) -> Result<SinkObjective> {
    let m = s.len();
    let tanh_u: Vec<Point3> = raw_displacement(x, s, phi)
        .into_iter()
        .map(|u| u.map(f64::tanh))
        .collect();
    let peak = tanh_u.iter().map(|d| d.max_abs()).fold(0.0, f64::max);
    let adv = PointCloud::new(x.iter().zip(&tanh_u).map(|(&p, &d)| p + d).collect());
    let (loss, gj, fwd) = model.loss_and_input_gradient(&adv, y)?;
    let dnorm = total_norm(&tanh_u);

    let mut drift = (0.0f64, None);
    for (j, (a, b)) in s.iter().zip(s0).enumerate() {
        let d = a.distance(*b);
        if drift.1.is_none() || d > drift.0 {
            drift = (d, Some(j));
        }
    }
    let mut spread = (f64::INFINITY, None);
    for i in 0..m {
        for j in i + 1..m {
            let d = s[i].distance(s[j]);
            if d < spread.0 {
                spread = (d, Some((i, j)));
            }
        }
    }
    let spread_value = if spread.1.is_some() { spread.0 } else { 0.0 };
    let value = loss - lambda * (dnorm + alpha * drift.0 - beta * spread_value);

    let mut grad = vec![Point3::ZERO; m];
    for (i, (gi, t)) in gj.iter().zip(&tanh_u).enumerate() {
        let mut g = *gi;
        if dnorm > 0.0 {
            g -= *t * (lambda / dnorm);
        }
        let h = Point3::new(g.x * (1.0 - t.x * t.x), g.y * (1.0 - t.y * t.y), g.z * (1.0 - t.z * t.z));
        for (j, gs) in grad.iter_mut().enumerate() {
            *gs += h * phi[i * m + j];
        }
    }
    if let Some(j) = drift.1 {
        if drift.0 > 0.0 {
            grad[j] -= (s[j] - s0[j]) * (lambda * alpha / drift.0);
        }
    }
    if let Some((a, b)) = spread.1 {
        if spread.0 > 0.0 {
            let dir = (s[a] - s[b]) * (lambda * beta / spread.0);
            grad[a] += dir;
            grad[b] -= dir;
        }
    }
    Ok(SinkObjective {
        value,
        gradient: grad,
        adversarial: adv,
        predicted: fwd.predicted(),
        peak,
    })
}

/// Initial sinks: the `candidates` most salient points are nudged along the
/// loss gradient by `0.05 · saliency / max saliency`, then `σ` of them are
/// chosen by farthest point sampling starting from the most salient.
pub fn initial_sinks(model: &ClassifierParams, x: &PointCloud, y: usize, sigma: usize, candidates: usize) -> Result<Vec<Point3>> {
    if sigma == 0 {
        return Ok(Vec::new());
    }
    let g = model.input_gradient(x, y)?;
    let sal: Vec<f64> = g.iter().map(|v| v.norm()).collect();
    let top = top_indices(&sal, candidates.clamp(sigma, x.len()));
    let max_sal = sal[top[0]];
    let moved: Vec<Point3> = top
        .iter()
        .map(|&i| {
            let n = sal[i];
            if n > 0.0 && max_sal > 0.0 {
                x[i] + g[i] * (SINK_INIT_STEP * (n / max_sal) / n)
            } else {
                x[i]
            }
        })
        .collect();
    let pick = farthest_point_sample(&moved, sigma, &[])?;
    Ok(pick.into_iter().map(|k| moved[k]).collect())
}

/// Adversarial sinks: Adam over the sink positions on the sinks objective,
/// λ binary-searched. Returns the successful example with the smallest L2
/// perturbation found.
pub fn adversarial_sinks(model: &ClassifierParams, input: &AttackInput, cfg: &AttackConfig) -> Result<AttackResult> {
    let x = input.cloud;
    cfg.validate(x.len())?;
    if cfg.sigma == 0 {
        let mut r = AttackResult::evaluate(model, input, x.clone())?;
        r.bounded_peak = Some((0.0, 1.0));
        return Ok(r);
    }
    let mu_prime = cfg.mu * mean_nn_distance(x)?;
    let s0 = initial_sinks(model, x, input.label, cfg.sigma, cfg.sink_candidates)?;
    let phi = falloff(x, &s0, mu_prime);
    let mut peak = 0.0f64;
    let (_, mut result) = binary_search_lambda(
        (cfg.lambda_min, cfg.lambda_max),
        cfg.lambda_steps,
        |lambda| {
            let mut flat: Vec<f64> = s0.iter().flat_map(|p| p.to_array()).collect();
            let mut adam = AdamState::new(flat.len(), cfg.learning_rate);
            let mut best: Option<(f64, PointCloud)> = None;
            let mut last = x.clone();
            for it in 0..=cfg.iterations {
                let s: Vec<Point3> = flat.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
                let obj = objective_with(model, x, input.label, &s, &s0, &phi, lambda, cfg.alpha, cfg.beta)?;
                peak = peak.max(obj.peak);
                if obj.predicted != input.label {
                    let l2 = obj.adversarial.l2_distance(x);
                    if best.as_ref().map_or(true, |(b, _)| l2 < *b) {
                        best = Some((l2, obj.adversarial.clone()));
                    }
                }
                last = obj.adversarial;
                if it == cfg.iterations {
                    break;
                }
                let g: Vec<f64> = obj.gradient.iter().flat_map(|p| p.to_array()).collect();
                adam.step(&mut flat, &g, Direction::Ascend)?;
            }
            AttackResult::evaluate(model, input, best.map_or(last, |(_, c)| c))
        },
        |r| r.l2,
    )?;
    result.iterations = cfg.iterations;
    result.bounded_peak = Some((peak, 1.0));
    Ok(result)
}
