//! Fixtures shared by the benchmarks.

use pcshape::experiment::{sample_normalized, ShapeClass};
use pcshape::geometry::{PointCloud, TriangleMesh};
use pcshape::net::{Architecture, ClassifierParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A normalized cloud of `n` points sampled from a random torus, with its mesh.
pub fn torus_cloud(n: usize, seed: u64) -> (PointCloud, TriangleMesh) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = ShapeClass::Torus.random_mesh(&mut rng);
    sample_normalized(&mesh, n, true, &mut rng).expect("torus sampling")
}

/// The standard classifier with random weights.
pub fn model(classes: usize, seed: u64) -> ClassifierParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ClassifierParams::init(&Architecture::standard(classes), &mut rng).expect("standard architecture")
}
