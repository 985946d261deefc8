//! Point sets, triangle meshes and the spatial machinery the attacks and
//! defenses are built on.

mod alpha;
mod delaunay;
mod metrics;
mod sampling;
mod triangle;
mod vptree;

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alpha::{alpha_shape, default_alpha, estimate_surface, kept_tetrahedra, SurfaceEstimate};
pub use delaunay::{delaunay_3d, Tetrahedron};
pub use metrics::{
    chamfer_distance, hausdorff_to_surface, mean_nn_distance, project_to_surface, SurfaceHit, SurfaceIndex,
};
pub use sampling::{farthest_point_sample, farthest_point_sample_onto, sample_on_mesh, sample_on_mesh_indexed};
pub use triangle::closest_point_on_triangle;
pub use vptree::{Neighbor, VpTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("input set is empty")]
    Empty,
    #[error("requested {requested} items but only {available} are available")]
    TooMany { requested: usize, available: usize },
    #[error("degenerate input: {0}")]
    Degenerate(Degeneracy),
    #[error("alpha shape with alpha = {alpha} has an empty boundary")]
    EmptyBoundary { alpha: f64 },
    #[error("mesh has zero total area")]
    ZeroArea,
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
}

/// Distinct reasons a triangulation can refuse its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    TooFewPoints,
    AllCoincident,
    AllCollinear,
    AllCoplanar,
    /// Insertion produced a cavity whose boundary is not a closed surface.
    NonManifoldCavity,
}

impl std::fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Degeneracy::TooFewPoints => "fewer than 4 points",
            Degeneracy::AllCoincident => "all points coincide",
            Degeneracy::AllCollinear => "all points are collinear",
            Degeneracy::AllCoplanar => "all points are coplanar",
            Degeneracy::NonManifoldCavity => "insertion cavity is not a ball",
        };
        f.write_str(s)
    }
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn distance_squared(self, o: Point3) -> f64 {
        (self - o).norm_squared()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn map(self, f: impl Fn(f64) -> f64) -> Point3 {
        Point3::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, o: Point3) {
        *self = *self + o;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Point3 {
    #[inline]
    fn sub_assign(&mut self, o: Point3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// An ordered point set. Index `i` names the same point before and after a
/// perturbation, so the order is never shuffled by library code.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn centroid(&self) -> Point3 {
        if self.points.is_empty() {
            return Point3::ZERO;
        }
        let sum = self.points.iter().fold(Point3::ZERO, |acc, &p| acc + p);
        sum / self.points.len() as f64
    }

    /// Maximum pairwise distance, approximated from the bounding box
    /// diagonal. Used only to scale tolerances.
    pub fn extent(&self) -> f64 {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for p in &self.points {
            lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        if self.points.is_empty() {
            0.0
        } else {
            (hi - lo).norm()
        }
    }

    /// Translates the centroid to the origin and scales so the farthest point
    /// sits at distance 1. Returns `(centroid, scale)` so meshes can follow.
    pub fn normalize_unit_sphere(&mut self) -> (Point3, f64) {
        let c = self.centroid();
        let r = self
            .points
            .iter()
            .map(|&p| p.distance(c))
            .fold(0.0_f64, f64::max);
        let s = if r > 0.0 { 1.0 / r } else { 1.0 };
        for p in &mut self.points {
            *p = (*p - c) * s;
        }
        (c, s)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.points.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(GeometryError::NonFinite(i)),
            None => Ok(()),
        }
    }

    /// Frobenius norm of `self - other`, treating both as N×3 arrays.
    pub fn l2_distance(&self, other: &PointCloud) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| a.distance_squared(*b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud::new(indices.iter().map(|&i| self.points[i]).collect())
    }
}

impl From<Vec<Point3>> for PointCloud {
    fn from(points: Vec<Point3>) -> Self {
        PointCloud::new(points)
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Point3;
    fn index(&self, i: usize) -> &Point3 {
        &self.points[i]
    }
}

/// Triangles with an area below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub vertices: [Point3; 3],
    pub normal: Point3,
}

impl Triangle {
    /// Builds a triangle with the normal given by the right-hand rule on
    /// `a, b, c`. Returns `None` for (near) zero-area input.
    pub fn new(a: Point3, b: Point3, c: Point3) -> Option<Self> {
        let n = (b - a).cross(c - a);
        let len = n.norm();
        if !(0.5 * len > DEGENERATE_AREA) {
            return None;
        }
        Some(Triangle {
            vertices: [a, b, c],
            normal: n / len,
        })
    }

    pub fn area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn centroid(&self) -> Point3 {
        let [a, b, c] = self.vertices;
        (a + b + c) / 3.0
    }

    /// Radius of the smallest centroid-centered ball enclosing the triangle.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.vertices
            .iter()
            .map(|&v| v.distance(c))
            .fold(0.0, f64::max)
    }

    pub fn closest_point(&self, p: Point3) -> Point3 {
        closest_point_on_triangle(p, &self.vertices)
    }

    pub fn distance(&self, p: Point3) -> f64 {
        p.distance(self.closest_point(p))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub triangles: Vec<Triangle>,
}

impl TriangleMesh {
    pub fn new(triangles: Vec<Triangle>) -> Self {
        TriangleMesh { triangles }
    }

    /// Builds a mesh from an indexed face list, silently dropping zero-area
    /// faces.
    pub fn from_indexed(vertices: &[Point3], faces: &[[usize; 3]]) -> Self {
        let triangles = faces
            .iter()
            .filter_map(|f| Triangle::new(vertices[f[0]], vertices[f[1]], vertices[f[2]]))
            .collect();
        TriangleMesh { triangles }
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(Triangle::area).sum()
    }

    /// Applies `f` to every vertex and recomputes normals. Triangles that
    /// collapse under `f` are dropped.
    pub fn transformed(&self, f: impl Fn(Point3) -> Point3) -> TriangleMesh {
        let triangles = self
            .triangles
            .iter()
            .filter_map(|t| {
                let [a, b, c] = t.vertices;
                Triangle::new(f(a), f(b), f(c))
            })
            .collect();
        TriangleMesh { triangles }
    }
}
