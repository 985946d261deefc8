//! Finite-difference checks of the analytic gradients.

use pcshape::geometry::{Point3, PointCloud};
use pcshape::net::{cross_entropy, Architecture, ClassifierParams, SaliencyKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
    )
}

fn with_coord(cloud: &PointCloud, i: usize, c: usize, delta: f64) -> PointCloud {
    let mut out = cloud.clone();
    let mut a = out.points[i].to_array();
    a[c] += delta;
    out.points[i] = Point3::from_array(a);
    out
}

/// Central difference at step `h` and `h/2`; `None` when the two disagree,
/// which means a ReLU or max-pool switch lies inside the stencil.
fn smooth_central(f: impl Fn(f64) -> f64) -> Option<f64> {
    let d1 = (f(H) - f(-H)) / (2.0 * H);
    let d2 = (f(H / 2.0) - f(-H / 2.0)) / H;
    (rel_err(d1, d2) < 1e-5).then_some(d1)
}

fn loss(p: &ClassifierParams, c: &PointCloud, y: usize) -> f64 {
    cross_entropy(&p.forward(c).unwrap().probs, y)
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut checked = 0;
    let mut skipped = 0;
    for case in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + case);
        let classes = 3 + (case as usize % 3);
        let p = ClassifierParams::init(&Architecture::standard(classes), &mut rng).unwrap();
        let cloud = random_cloud(24, &mut rng);
        let y = rng.gen_range(0..classes);
        let g = p.input_gradient(&cloud, y).unwrap();
        for i in 0..cloud.len() {
            for c in 0..3 {
                let a = g[i].to_array()[c];
                match smooth_central(|d| loss(&p, &with_coord(&cloud, i, c, d), y)) {
                    Some(n) => {
                        assert!(rel_err(a, n) < 1e-4, "case {case} point {i} coord {c}: {a} vs {n}");
                        checked += 1;
                    }
                    None => skipped += 1,
                }
            }
        }
    }
    assert!(skipped * 20 < checked, "too many kinks: {skipped} of {}", checked + skipped);
}

#[test]
fn parameter_gradient_matches_finite_differences() {
    let arch = Architecture {
        point_widths: vec![3, 8, 16],
        head_widths: vec![16, 8, 3],
    };
    let mut checked = 0;
    for case in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + case);
        let p = ClassifierParams::init(&arch, &mut rng).unwrap();
        // nonzero biases so bias gradients are exercised off the kinks
        let mut flat = p.flatten();
        for v in flat.iter_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
        let mut p = p;
        p.assign_flat(&flat).unwrap();
        let cloud = random_cloud(16, &mut rng);
        let y = case as usize % 3;
        let (_, g, _) = p.loss_and_param_gradient(&cloud, y).unwrap();
        let ga = g.flatten();
        for k in 0..flat.len() {
            let f = |d: f64| {
                let mut q = p.clone();
                let mut fl = flat.clone();
                fl[k] += d;
                q.assign_flat(&fl).unwrap();
                loss(&q, &cloud, y)
            };
            if let Some(n) = smooth_central(f) {
                assert!(rel_err(ga[k], n) < 1e-4, "case {case} param {k}: {} vs {n}", ga[k]);
                checked += 1;
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn probability_saliency_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = ClassifierParams::init(&Architecture::standard(4), &mut rng).unwrap();
    let cloud = random_cloud(20, &mut rng);
    let fwd = p.forward(&cloud).unwrap();
    let mut oracle = vec![0.0f64; cloud.len()];
    for j in 0..4 {
        let g = p.probability_gradient(&fwd, j);
        for i in 0..cloud.len() {
            let mut norm2 = 0.0;
            for c in 0..3 {
                let prob = |d: f64| p.forward(&with_coord(&cloud, i, c, d)).unwrap().probs[j];
                let Some(n) = smooth_central(prob) else { continue };
                let a = g[i].to_array()[c];
                assert!(rel_err(a, n) < 1e-3, "class {j} point {i} coord {c}: {a} vs {n}");
                norm2 += n * n;
            }
            oracle[i] = oracle[i].max(norm2.sqrt());
        }
    }
    let s = p.saliency(&cloud, SaliencyKind::Probability, 0).unwrap();
    for (a, n) in s.iter().zip(&oracle) {
        assert!(rel_err(*a, *n) < 1e-3, "{a} vs {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outputs_are_distributions_and_saliency_is_nonnegative(seed in any::<u64>(), n in 1usize..80, scale in 0.01f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ClassifierParams::init(&Architecture::standard(5), &mut rng).unwrap();
        let cloud = PointCloud::new(random_cloud(n, &mut rng).iter().map(|&q| q * scale).collect());
        let f = p.forward(&cloud).unwrap();
        prop_assert!((f.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(f.probs.iter().all(|&q| (0.0..=1.0).contains(&q)));
        for kind in [SaliencyKind::Probability, SaliencyKind::Loss] {
            let s = p.saliency(&cloud, kind, 1).unwrap();
            prop_assert_eq!(s.len(), n);
            prop_assert!(s.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn gradient_is_permutation_equivariant(seed in any::<u64>(), n in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ClassifierParams::init(&Architecture::standard(3), &mut rng).unwrap();
        let cloud = random_cloud(n, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let shuffled = cloud.select(&perm);
        let a = p.forward(&cloud).unwrap();
        let b = p.forward(&shuffled).unwrap();
        for (x, y) in a.probs.iter().zip(&b.probs) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let ga = p.input_gradient(&cloud, 0).unwrap();
        let gb = p.input_gradient(&shuffled, 0).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((ga[i] - gb[k]).norm() < 1e-12);
        }
    }
}
