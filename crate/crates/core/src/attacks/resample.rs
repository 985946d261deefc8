use rand::Rng;

use super::iterative::l2_step;
use super::{AttackConfig, AttackInput, AttackResult, Result};
use crate::defenses::top_indices;
use crate::geometry::{estimate_surface, farthest_point_sample_onto, sample_on_mesh, Point3, TriangleMesh};
use crate::net::{ClassifierParams, SaliencyKind};

/// Candidate surface samples drawn per cloud point before farthest point
/// sampling picks the resampled points.
pub const CANDIDATES_PER_POINT: usize = 4;

/// Perturbation resampling: each iteration takes one plain gradient step of
/// global L2 length `ε/n`, estimates the surface of the perturbed cloud
/// with an alpha shape, and moves the `κ` least salient points onto that
/// surface by farthest point sampling against the points that stay.
pub fn perturbation_resampling<R: Rng + ?Sized>(
    model: &ClassifierParams,
    input: &AttackInput,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackResult> {
    let n = input.cloud.len();
    cfg.validate(n)?;
    let mut x = input.cloud.clone();
    let mut used = 0.0;
    let step = if cfg.iterations > 0 {
        cfg.epsilon / cfg.iterations as f64
    } else {
        0.0
    };
    let mut surface: Option<TriangleMesh> = None;
    let mut failure = None;
    let mut done = 0;
    for it in 0..cfg.iterations {
        let g = model.input_gradient(&x, input.label)?;
        used += l2_step(&mut x.points, &g, step);
        done = it + 1;
        if cfg.kappa == 0 {
            continue;
        }
        if it % cfg.surface_refresh == 0 || surface.is_none() {
            match estimate_surface(&x) {
                Ok(est) => surface = Some(est.mesh),
                Err(e) => {
                    failure = Some(format!("surface estimation failed at iteration {it}: {e}"));
                    break;
                }
            }
        }
        let mesh = surface.as_ref().expect("set above");
        let saliency = model.saliency(&x, SaliencyKind::Loss, input.label)?;
        let keep = top_indices(&saliency, n - cfg.kappa);
        let mut replaced = vec![true; n];
        for &i in &keep {
            replaced[i] = false;
        }
        let kept_points: Vec<Point3> = keep.iter().map(|&i| x[i]).collect();
        let candidates = sample_on_mesh(mesh, CANDIDATES_PER_POINT * n, rng)?;
        let picked = farthest_point_sample_onto(&kept_points, &candidates, cfg.kappa)?;
        let slots = (0..n).filter(|&i| replaced[i]);
        for (slot, c) in slots.zip(picked) {
            x.points[slot] = candidates[c];
        }
    }
    let mut r = AttackResult::evaluate(model, input, x)?;
    r.iterations = done;
    r.step_norm_total = used;
    if let Some(msg) = failure {
        r.flagged = true;
        r.note = Some(msg);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackKind;
    use crate::geometry::{PointCloud, SurfaceIndex};
    use crate::net::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| loop {
                    let p = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    if p.norm() > 0.2 && p.norm() <= 1.0 {
                        break p / p.norm();
                    }
                })
                .collect(),
        )
    }

    #[test]
    fn keeps_point_count_and_places_points_on_the_estimated_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ClassifierParams::init(&Architecture::standard(3), &mut rng).unwrap();
        let c = sphere(200, &mut rng);
        let input = AttackInput {
            cloud: &c,
            label: 0,
            surface: None,
        };
        let mut cfg = AttackConfig::defaults(AttackKind::PerturbationResampling);
        cfg.kappa = 50;
        cfg.iterations = 1;
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let r = perturbation_resampling(&p, &input, &cfg, &mut r1).unwrap();
        assert_eq!(r.cloud.len(), 200);
        assert!(r.step_norm_total <= cfg.epsilon + 1e-9);

        // rebuild the single iteration by hand to find the surface used
        let mut x = c.clone();
        let g = p.input_gradient(&x, 0).unwrap();
        l2_step(&mut x.points, &g, cfg.epsilon);
        let surface = SurfaceIndex::new(estimate_surface(&x).unwrap().mesh).unwrap();
        let moved: Vec<usize> = (0..200).filter(|&i| r.cloud[i] != x[i]).collect();
        assert!(!moved.is_empty() && moved.len() <= 50);
        for i in moved {
            assert!(surface.distance(r.cloud[i]) < 1e-6);
        }

        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(perturbation_resampling(&p, &input, &cfg, &mut r2).unwrap(), r);
    }
}
