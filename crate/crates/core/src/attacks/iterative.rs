use rand::seq::index;
use rand::Rng;

use super::{total_norm, AttackConfig, AttackError, AttackInput, AttackResult, Result};
use crate::geometry::{Point3, PointCloud, SurfaceIndex};
use crate::net::ClassifierParams;

/// Gradient of the loss, with `dropout` randomly chosen points left out of
/// the forward pass; those points get a zero gradient.
pub(crate) fn loss_gradient<R: Rng + ?Sized>(
    model: &ClassifierParams,
    cloud: &PointCloud,
    y: usize,
    dropout: Option<usize>,
    rng: &mut R,
) -> Result<Vec<Point3>> {
    match dropout {
        None | Some(0) => Ok(model.input_gradient(cloud, y)?),
        Some(d) => {
            let mut dropped = vec![false; cloud.len()];
            for i in index::sample(rng, cloud.len(), d) {
                dropped[i] = true;
            }
            let kept: Vec<usize> = (0..cloud.len()).filter(|&i| !dropped[i]).collect();
            let g = model.input_gradient(&cloud.select(&kept), y)?;
            let mut full = vec![Point3::ZERO; cloud.len()];
            for (&i, gi) in kept.iter().zip(g) {
                full[i] = gi;
            }
            Ok(full)
        }
    }
}

/// Moves `points` by `g` rescaled to global L2 length `step`; returns the
/// length actually applied (0 for a zero gradient).
pub(crate) fn l2_step(points: &mut [Point3], g: &[Point3], step: f64) -> f64 {
    let norm = total_norm(g);
    if !(norm > 0.0) || step == 0.0 {
        return 0.0;
    }
    let scale = step / norm;
    for (p, gi) in points.iter_mut().zip(g) {
        *p += *gi * scale;
    }
    step
}

/// `n` steps of gradient ascent on the loss, each of global L2 length `ε/n`.
pub fn iter_grad_l2<R: Rng + ?Sized>(
    model: &ClassifierParams,
    input: &AttackInput,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackResult> {
    cfg.validate(input.cloud.len())?;
    let mut x = input.cloud.clone();
    let mut used = 0.0;
    if cfg.iterations > 0 && cfg.epsilon > 0.0 {
        let step = cfg.epsilon / cfg.iterations as f64;
        for _ in 0..cfg.iterations {
            let g = loss_gradient(model, &x, input.label, cfg.dropout, rng)?;
            used += l2_step(&mut x.points, &g, step);
        }
    }
    let mut r = AttackResult::evaluate(model, input, x)?;
    r.iterations = cfg.iterations;
    r.step_norm_total = used;
    Ok(r)
}

/// Pulls `p` back to within `tau` of the surface along the segment to its
/// closest surface point.
pub fn project_within(p: Point3, surface: &SurfaceIndex, tau: f64) -> Point3 {
    let hit = surface.closest(p);
    if hit.distance <= tau {
        return p;
    }
    hit.point + (p - hit.point) * (tau / hit.distance)
}

/// Projected gradient ascent keeping every point within `τ` of the benign
/// surface. Plain steps of global L2 length `ε/n`, no momentum.
pub fn gradient_projection(model: &ClassifierParams, input: &AttackInput, cfg: &AttackConfig) -> Result<AttackResult> {
    cfg.validate(input.cloud.len())?;
    let surface = input.surface.ok_or(AttackError::MissingSurface("gradient projection"))?;
    let mut x = input.cloud.clone();
    let mut used = 0.0;
    let step = if cfg.iterations > 0 {
        cfg.epsilon / cfg.iterations as f64
    } else {
        0.0
    };
    for _ in 0..cfg.iterations {
        let g = model.input_gradient(&x, input.label)?;
        used += l2_step(&mut x.points, &g, step);
        for p in &mut x.points {
            *p = project_within(*p, surface, cfg.tau);
        }
    }
    let mut r = AttackResult::evaluate(model, input, x)?;
    r.iterations = cfg.iterations;
    r.step_norm_total = used;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackKind;
    use crate::geometry::{Triangle, TriangleMesh};
    use crate::net::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (ClassifierParams, PointCloud) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ClassifierParams::init(&Architecture::standard(3), &mut rng).unwrap();
        let c = PointCloud::new(
            (0..64)
                .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0))
                .collect(),
        );
        (p, c)
    }

    #[test]
    fn zero_budget_is_identity() {
        let (p, c) = setup(0);
        let input = AttackInput {
            cloud: &c,
            label: 0,
            surface: None,
        };
        let mut cfg = AttackConfig::defaults(AttackKind::IterGradL2);
        cfg.epsilon = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = iter_grad_l2(&p, &input, &cfg, &mut rng).unwrap();
        assert_eq!(r.cloud, c);
        assert_eq!(r.l2, 0.0);
    }

    #[test]
    fn budget_is_respected_with_and_without_dropout() {
        let (p, c) = setup(2);
        let input = AttackInput {
            cloud: &c,
            label: 1,
            surface: None,
        };
        for dropout in [None, Some(30)] {
            let mut cfg = AttackConfig::defaults(AttackKind::IterGradL2);
            cfg.iterations = 25;
            cfg.dropout = dropout;
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let r = iter_grad_l2(&p, &input, &cfg, &mut rng).unwrap();
            assert!(r.step_norm_total <= cfg.epsilon + 1e-9);
            assert!(r.l2 <= cfg.epsilon + 1e-9);
            assert!(r.l2 > 0.0);
        }
    }

    #[test]
    fn projection_keeps_points_near_the_plane() {
        let (p, c) = setup(4);
        let mesh = TriangleMesh::new(vec![
            Triangle::new(Point3::new(-2.0, -2.0, 0.0), Point3::new(2.0, -2.0, 0.0), Point3::new(2.0, 2.0, 0.0)).unwrap(),
            Triangle::new(Point3::new(-2.0, -2.0, 0.0), Point3::new(2.0, 2.0, 0.0), Point3::new(-2.0, 2.0, 0.0)).unwrap(),
        ]);
        let surface = SurfaceIndex::new(mesh).unwrap();
        let input = AttackInput {
            cloud: &c,
            label: 2,
            surface: Some(&surface),
        };
        for tau in [0.0, 0.05] {
            let mut cfg = AttackConfig::defaults(AttackKind::GradientProjection);
            cfg.tau = tau;
            let r = gradient_projection(&p, &input, &cfg).unwrap();
            assert!(r.hausdorff.unwrap() <= tau + 1e-6);
            assert!(r.cloud.iter().all(|q| q.z.abs() <= tau + 1e-6));
        }
        let no_surface = AttackInput { surface: None, ..input };
        assert!(gradient_projection(&p, &no_surface, &AttackConfig::defaults(AttackKind::GradientProjection)).is_err());
    }
}
