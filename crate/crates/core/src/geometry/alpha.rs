use super::delaunay::{circumsphere, triangulate, Triangulation};
use super::{mean_nn_distance, GeometryError, Point3, PointCloud, Result, Tetrahedron, Triangle, TriangleMesh};

/// Multiple of the mean nearest-neighbor spacing used as the default alpha.
pub const DEFAULT_ALPHA_FACTOR: f64 = 4.0;
/// How many times [`estimate_surface`] doubles alpha before giving up and
/// using the convex hull.
pub const ALPHA_DOUBLINGS: usize = 3;

pub fn default_alpha(cloud: &PointCloud) -> Result<f64> {
    Ok(DEFAULT_ALPHA_FACTOR * mean_nn_distance(cloud)?)
}

/// Circumcircle of a triangle in 3D.
fn circumcircle(a: Point3, b: Point3, c: Point3) -> Option<(Point3, f64)> {
    let u = b - a;
    let v = c - a;
    let w = u.cross(v);
    let w2 = w.norm_squared();
    if !(w2 > 0.0) {
        return None;
    }
    let off = (v.cross(w) * u.norm_squared() + w.cross(u) * v.norm_squared()) / (2.0 * w2);
    Some((a + off, off.norm()))
}

struct Face {
    owner: usize,
    slot: usize,
    other: Option<usize>,
    /// Circumcircle radius, or infinity for degenerate faces.
    radius: f64,
    /// True when the smallest circumsphere is empty of the incident
    /// tetrahedra apexes (which, for a Delaunay face, means empty).
    unattached: bool,
}

struct Radii {
    tri: Triangulation,
    radius: Vec<f64>,
    faces: Vec<Face>,
}

impl Radii {
    fn new(cloud: &PointCloud) -> Result<Self> {
        let tri = triangulate(cloud)?;
        let radius = tri
            .tets
            .iter()
            .map(|t| circumsphere(cloud[t[0]], cloud[t[1]], cloud[t[2]], cloud[t[3]]).1)
            .collect();
        let mut faces = Vec::with_capacity(2 * tri.tets.len() + 8);
        for (t, tet) in tri.tets.iter().enumerate() {
            for slot in 0..4 {
                let other = tri.neighbors[t][slot];
                if other.is_some_and(|o| o < t) {
                    continue;
                }
                let v = face_vertices(tet, slot);
                let (radius, unattached) = match circumcircle(cloud[v[0]], cloud[v[1]], cloud[v[2]]) {
                    None => (f64::INFINITY, false),
                    Some((center, r)) => {
                        let apex_outside = |tt: usize| {
                            let apex = tri.tets[tt].iter().copied().find(|x| !v.contains(x)).unwrap();
                            cloud[apex].distance(center) >= r
                        };
                        (r, apex_outside(t) && other.map_or(true, apex_outside))
                    }
                };
                faces.push(Face {
                    owner: t,
                    slot,
                    other,
                    radius,
                    unattached,
                });
            }
        }
        Ok(Radii { tri, radius, faces })
    }

    fn kept(&self, alpha: f64) -> Vec<bool> {
        self.radius.iter().map(|&r| r <= alpha).collect()
    }

    /// Boundary triangles of the alpha complex: faces with exactly one kept
    /// incident tetrahedron (oriented away from it), plus unattached faces
    /// with circumradius `<= alpha` and no kept incident tetrahedron
    /// (oriented away from the cloud centroid).
    fn boundary(&self, cloud: &PointCloud, alpha: f64) -> TriangleMesh {
        let kept = self.kept(alpha);
        let centroid = cloud.centroid();
        let mut triangles = Vec::new();
        for f in &self.faces {
            let k_owner = kept[f.owner];
            let k_other = f.other.is_some_and(|o| kept[o]);
            let v = face_vertices(&self.tri.tets[f.owner], f.slot);
            let (a, b, c) = (cloud[v[0]], cloud[v[1]], cloud[v[2]]);
            let away_from = if k_owner != k_other {
                let inside = if k_owner {
                    f.owner
                } else {
                    f.other.expect("kept neighbor exists")
                };
                let apex = self.tri.tets[inside].iter().copied().find(|x| !v.contains(x)).unwrap();
                cloud[apex]
            } else if !k_owner && f.unattached && f.radius <= alpha {
                centroid
            } else {
                continue;
            };
            let Some(tri) = Triangle::new(a, b, c) else {
                continue;
            };
            let tri = if tri.normal.dot(away_from - a) > 0.0 {
                Triangle::new(a, c, b).expect("same area")
            } else {
                tri
            };
            triangles.push(tri);
        }
        TriangleMesh::new(triangles)
    }
}

fn face_vertices(tet: &Tetrahedron, slot: usize) -> [usize; 3] {
    let mut face = [0usize; 3];
    let mut k = 0;
    for (s, &v) in tet.iter().enumerate() {
        if s != slot {
            face[k] = v;
            k += 1;
        }
    }
    face
}

/// Tetrahedra of the Delaunay tetrahedralization whose circumradius is at
/// most `alpha`.
pub fn kept_tetrahedra(cloud: &PointCloud, alpha: f64) -> Result<Vec<Tetrahedron>> {
    let r = Radii::new(cloud)?;
    let kept = r.kept(alpha);
    Ok(r.tri
        .tets
        .iter()
        .zip(kept)
        .filter_map(|(t, k)| k.then_some(*t))
        .collect())
}

/// Boundary triangles of the alpha shape: the Delaunay tetrahedra with
/// circumradius `<= alpha` contribute the faces they do not share with each
/// other, and Delaunay triangles whose smallest circumsphere is empty and no
/// larger than `alpha` contribute themselves even when no incident
/// tetrahedron survives (thin sheets, e.g. points sampled on a sphere).
/// `alpha = f64::INFINITY` yields the convex hull.
pub fn alpha_shape(cloud: &PointCloud, alpha: f64) -> Result<TriangleMesh> {
    let r = Radii::new(cloud)?;
    let mesh = r.boundary(cloud, alpha);
    if mesh.is_empty() {
        return Err(GeometryError::EmptyBoundary { alpha });
    }
    Ok(mesh)
}

#[derive(Debug, Clone)]
pub struct SurfaceEstimate {
    pub mesh: TriangleMesh,
    /// The alpha that produced `mesh`; infinite for the hull fallback.
    pub alpha: f64,
    pub hull_fallback: bool,
}

/// Alpha shape with the default alpha; alpha is doubled up to
/// [`ALPHA_DOUBLINGS`] times while the boundary is empty, after which the
/// convex hull is used.
pub fn estimate_surface(cloud: &PointCloud) -> Result<SurfaceEstimate> {
    estimate_surface_from(cloud, default_alpha(cloud)?)
}

pub(crate) fn estimate_surface_from(cloud: &PointCloud, alpha0: f64) -> Result<SurfaceEstimate> {
    let r = Radii::new(cloud)?;
    let mut alpha = alpha0;
    for _ in 0..=ALPHA_DOUBLINGS {
        let mesh = r.boundary(cloud, alpha);
        if !mesh.is_empty() {
            return Ok(SurfaceEstimate {
                mesh,
                alpha,
                hull_fallback: false,
            });
        }
        alpha *= 2.0;
    }
    let mesh = r.boundary(cloud, f64::INFINITY);
    if mesh.is_empty() {
        return Err(GeometryError::EmptyBoundary { alpha: f64::INFINITY });
    }
    Ok(SurfaceEstimate {
        mesh,
        alpha: f64::INFINITY,
        hull_fallback: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SurfaceIndex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_corners() -> PointCloud {
        let mut pts = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    pts.push(Point3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        PointCloud::new(pts)
    }

    fn sphere_points(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| loop {
                    let p = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    let r = p.norm();
                    if r > 0.1 && r <= 1.0 {
                        break p / r;
                    }
                })
                .collect(),
        )
    }

    #[test]
    fn tetrahedron_surface() {
        let pc = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ]);
        let mesh = alpha_shape(&pc, f64::INFINITY).unwrap();
        assert_eq!(mesh.len(), 4);
        let c = pc.centroid();
        for t in &mesh.triangles {
            assert!(t.normal.dot(t.vertices[0] - c) > 0.0, "normal points inward");
        }
    }

    #[test]
    fn cube_hull_has_twelve_triangles() {
        let pc = cube_corners();
        let mesh = alpha_shape(&pc, f64::INFINITY).unwrap();
        assert_eq!(mesh.len(), 12);
        assert!((mesh.area() - 6.0).abs() < 1e-12);
        // convex-hull oracle: every triangle lies in one of the six face planes
        for t in &mesh.triangles {
            let on_face = (0..3).any(|axis| {
                let coord = |p: Point3| p.to_array()[axis];
                t.vertices.iter().all(|&v| coord(v) == 0.0) || t.vertices.iter().all(|&v| coord(v) == 1.0)
            });
            assert!(on_face);
            assert!(t.normal.dot(t.vertices[0] - Point3::new(0.5, 0.5, 0.5)) > 0.0);
        }
    }

    #[test]
    fn tiny_alpha_has_empty_boundary() {
        let err = alpha_shape(&cube_corners(), 0.1).unwrap_err();
        assert!(matches!(err, GeometryError::EmptyBoundary { .. }));
        let est = estimate_surface_from(&cube_corners(), 0.01).unwrap();
        assert!(est.hull_fallback);
        assert_eq!(est.mesh.len(), 12);
    }

    #[test]
    fn kept_sets_grow_with_alpha() {
        let pc = sphere_points(200, 2);
        let mut prev: Vec<Tetrahedron> = Vec::new();
        for alpha in [0.1, 0.2, 0.4, 0.8, 1.6] {
            let kept = kept_tetrahedra(&pc, alpha).unwrap();
            assert!(prev.iter().all(|t| kept.contains(t)));
            prev = kept;
        }
    }

    #[test]
    fn sphere_surface_is_recovered() {
        let pc = sphere_points(512, 9);
        let alpha = default_alpha(&pc).unwrap();
        let mesh = alpha_shape(&pc, alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples = crate::geometry::sample_on_mesh(&mesh, 4000, &mut rng).unwrap();
        // every cloud point has a mesh sample nearby
        let tree = crate::geometry::VpTree::from_points(&samples).unwrap();
        let h = pc.iter().map(|&p| tree.nearest(p).distance).fold(0.0, f64::max);
        assert!(h < 0.1, "cloud to mesh samples {h}");
        // and the mesh never strays from the sphere the cloud was drawn on
        let dev = samples.iter().map(|s| (s.norm() - 1.0).abs()).fold(0.0, f64::max);
        assert!(dev < 0.1, "deviation from sphere {dev}");
        let idx = SurfaceIndex::new(mesh).unwrap();
        let back = pc.iter().map(|&p| idx.distance(p)).fold(0.0, f64::max);
        assert!(back < 0.1, "reverse hausdorff {back}");
    }
}
