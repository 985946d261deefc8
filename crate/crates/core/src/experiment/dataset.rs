//! Synthetic shape datasets.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{sample_on_mesh, GeometryError, Point3, PointCloud, TriangleMesh};
use crate::net::{random_rotation, rotate_point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeClass {
    Sphere,
    Box,
    Cylinder,
    Cone,
    Torus,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 5] = [
        ShapeClass::Sphere,
        ShapeClass::Box,
        ShapeClass::Cylinder,
        ShapeClass::Cone,
        ShapeClass::Torus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Sphere => "sphere",
            ShapeClass::Box => "box",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Cone => "cone",
            ShapeClass::Torus => "torus",
        }
    }

    /// Mesh of a random instance of the class, before rotation and
    /// normalization. Spheres get no aspect jitter.
    pub fn random_mesh<R: Rng + ?Sized>(self, rng: &mut R) -> TriangleMesh {
        match self {
            ShapeClass::Sphere => icosphere(3),
            ShapeClass::Box => cuboid(rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0)),
            ShapeClass::Cylinder => cylinder(rng.gen_range(0.3..0.7), rng.gen_range(0.8..2.0), 32),
            ShapeClass::Cone => cone(rng.gen_range(0.4..0.8), rng.gen_range(0.8..2.0), 32),
            ShapeClass::Torus => torus(rng.gen_range(0.6..1.0), rng.gen_range(0.15..0.35), 32, 16),
        }
    }
}

impl std::str::FromStr for ShapeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ShapeClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown shape class {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub cloud: PointCloud,
    pub label: usize,
    /// Generating surface, in the same normalized frame as `cloud`.
    pub mesh: Option<TriangleMesh>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub class_names: Vec<String>,
    pub split: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(cloud, label)` pairs for training and accuracy checks.
    pub fn labeled(&self) -> Vec<(PointCloud, usize)> {
        self.samples.iter().map(|s| (s.cloud.clone(), s.label)).collect()
    }
}

/// Samples `n` points from `mesh` under a random rotation and scales the
/// result into the unit sphere; the mesh gets the same transform.
pub fn sample_normalized<R: Rng + ?Sized>(mesh: &TriangleMesh, n: usize, rotate: bool, rng: &mut R) -> Result<(PointCloud, TriangleMesh), GeometryError> {
    let mesh = if rotate {
        let r = random_rotation(rng);
        mesh.transformed(|p| rotate_point(&r, p))
    } else {
        mesh.clone()
    };
    let mut cloud = PointCloud::new(sample_on_mesh(&mesh, n, rng)?);
    let (center, scale) = cloud.normalize_unit_sphere();
    let mesh = mesh.transformed(|p| (p - center) * scale);
    Ok((cloud, mesh))
}

/// `per_class` samples of each class in `classes`, `n` points each, labels
/// following the order of `classes`.
pub fn gen_synthetic_dataset<R: Rng + ?Sized>(
    classes: &[ShapeClass],
    per_class: usize,
    n: usize,
    split: &str,
    rng: &mut R,
) -> Result<Dataset, GeometryError> {
    if n < 4 {
        return Err(GeometryError::TooMany { requested: 4, available: n });
    }
    let mut samples = Vec::with_capacity(classes.len() * per_class);
    for (label, class) in classes.iter().enumerate() {
        for _ in 0..per_class {
            let scale = rng.gen_range(0.5..1.5);
            let mesh = class.random_mesh(rng).transformed(|p| p * scale);
            let (cloud, mesh) = sample_normalized(&mesh, n, true, rng)?;
            samples.push(Sample {
                cloud,
                label,
                mesh: Some(mesh),
            });
        }
    }
    Ok(Dataset {
        samples,
        class_names: classes.iter().map(|c| c.name().to_string()).collect(),
        split: split.to_string(),
    })
}

pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Point3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| {
        let p = Point3::new(x, y, z);
        p / p.norm()
    })
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, v: &mut Vec<Point3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (v[a] + v[b]) / 2.0;
                v.push(m / m.norm());
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh::from_indexed(&v, &faces)
}

/// Axis-aligned box with the given half extents.
pub fn cuboid(hx: f64, hy: f64, hz: f64) -> TriangleMesh {
    let v: Vec<Point3> = (0..8)
        .map(|i| {
            let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
            Point3::new(s(1) * hx, s(2) * hy, s(4) * hz)
        })
        .collect();
    let faces = [
        [0, 2, 3], [0, 3, 1], [4, 5, 7], [4, 7, 6],
        [0, 1, 5], [0, 5, 4], [2, 6, 7], [2, 7, 3],
        [0, 4, 6], [0, 6, 2], [1, 3, 7], [1, 7, 5],
    ];
    TriangleMesh::from_indexed(&v, &faces)
}

fn ring(radius: f64, z: f64, segments: usize) -> Vec<Point3> {
    (0..segments)
        .map(|k| {
            let a = TAU * k as f64 / segments as f64;
            Point3::new(radius * a.cos(), radius * a.sin(), z)
        })
        .collect()
}

/// Closed cylinder along z centered at the origin.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let mut v = ring(radius, -height / 2.0, segments);
    v.extend(ring(radius, height / 2.0, segments));
    let (bottom, top) = (v.len(), v.len() + 1);
    v.push(Point3::new(0.0, 0.0, -height / 2.0));
    v.push(Point3::new(0.0, 0.0, height / 2.0));
    let mut faces = Vec::new();
    for k in 0..segments {
        let k1 = (k + 1) % segments;
        faces.push([k, k1, segments + k1]);
        faces.push([k, segments + k1, segments + k]);
        faces.push([bottom, k1, k]);
        faces.push([top, segments + k, segments + k1]);
    }
    TriangleMesh::from_indexed(&v, &faces)
}

/// Closed cone along z with its base at `z = 0`.
pub fn cone(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let mut v = ring(radius, 0.0, segments);
    let (base, apex) = (v.len(), v.len() + 1);
    v.push(Point3::ZERO);
    v.push(Point3::new(0.0, 0.0, height));
    let mut faces = Vec::new();
    for k in 0..segments {
        let k1 = (k + 1) % segments;
        faces.push([k, k1, apex]);
        faces.push([base, k1, k]);
    }
    TriangleMesh::from_indexed(&v, &faces)
}

/// Torus around z with major radius `big` and tube radius `small`.
pub fn torus(big: f64, small: f64, major: usize, minor: usize) -> TriangleMesh {
    let mut v = Vec::with_capacity(major * minor);
    for i in 0..major {
        let u = TAU * i as f64 / major as f64;
        for j in 0..minor {
            let w = TAU * j as f64 / minor as f64;
            let r = big + small * w.cos();
            v.push(Point3::new(r * u.cos(), r * u.sin(), small * w.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % major) * minor + (j % minor);
    let mut faces = Vec::new();
    for i in 0..major {
        for j in 0..minor {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh::from_indexed(&v, &faces)
}
