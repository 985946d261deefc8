use super::{GeometryError, Point3, PointCloud, Result, TriangleMesh, VpTree};

/// Mean over points of the distance to the nearest *other* point.
pub fn mean_nn_distance(cloud: &PointCloud) -> Result<f64> {
    if cloud.len() < 2 {
        return Err(GeometryError::TooMany {
            requested: 1,
            available: cloud.len().saturating_sub(1),
        });
    }
    let tree = VpTree::from_points(&cloud.points)?;
    let sum: f64 = cloud
        .iter()
        .enumerate()
        .map(|(i, &p)| tree.k_nearest(p, 1, Some(i)).map(|nn| nn[0].distance))
        .sum::<Result<f64>>()?;
    Ok(sum / cloud.len() as f64)
}

/// Asymmetric Chamfer distance: the mean, over points of `a`, of the
/// distance to the closest point of `b`.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::Empty);
    }
    let tree = VpTree::from_points(&b.points)?;
    Ok(chamfer_with_index(a, &tree))
}

pub(crate) fn chamfer_with_index(a: &PointCloud, b_index: &VpTree) -> f64 {
    a.iter().map(|&p| b_index.nearest(p).distance).sum::<f64>() / a.len() as f64
}

/// A triangle mesh paired with a VP-tree over its triangles, for exact
/// point-to-surface queries.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    mesh: TriangleMesh,
    tree: VpTree,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub triangle: usize,
    pub point: Point3,
    pub distance: f64,
}

impl SurfaceIndex {
    pub fn new(mesh: TriangleMesh) -> Result<Self> {
        let tree = VpTree::from_triangles(&mesh)?;
        Ok(SurfaceIndex { mesh, tree })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    /// Closest surface point to `p`: the argmin over all triangles of the
    /// clipped orthogonal projection, lowest triangle index on ties.
    pub fn closest(&self, p: Point3) -> SurfaceHit {
        let nn = self
            .tree
            .nearest_by(p, |i| self.mesh.triangles[i].distance(p));
        let point = self.mesh.triangles[nn.index].closest_point(p);
        SurfaceHit {
            triangle: nn.index,
            point,
            distance: nn.distance,
        }
    }

    pub fn project(&self, p: Point3) -> Point3 {
        self.closest(p).point
    }

    pub fn distance(&self, p: Point3) -> f64 {
        self.closest(p).distance
    }

    /// Triangles that may lie within `r` of `p` (a superset).
    pub fn candidates_within(&self, p: Point3, r: f64) -> Vec<usize> {
        self.tree.within_radius(p, r)
    }
}

/// Projects `p` onto the surface represented by `index`.
pub fn project_to_surface(p: Point3, index: &SurfaceIndex) -> Point3 {
    index.project(p)
}

/// Largest point-to-surface distance over the cloud.
pub fn hausdorff_to_surface(a: &PointCloud, surface: &SurfaceIndex) -> f64 {
    a.iter().map(|&p| surface.distance(p)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Triangle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new((0..n).map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen())).collect())
    }

    fn z0_triangle() -> TriangleMesh {
        TriangleMesh::new(vec![Triangle::new(
            Point3::new(-1.0, -1.0, 0.0),
            Point3::new(1.0, -1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        )
        .unwrap()])
    }

    #[test]
    fn chamfer_basics() {
        let a = random_cloud(50, 1);
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
        let one = PointCloud::new(vec![Point3::ZERO]);
        let other = PointCloud::new(vec![Point3::new(1.0, 0.0, 0.0)]);
        assert_eq!(chamfer_distance(&one, &other).unwrap(), 1.0);
        assert_eq!(chamfer_distance(&PointCloud::default(), &a).unwrap_err(), GeometryError::Empty);
    }

    #[test]
    fn chamfer_matches_double_loop() {
        let a = random_cloud(200, 2);
        let b = random_cloud(200, 3);
        let oracle = a
            .iter()
            .map(|p| b.iter().map(|q| p.distance(*q)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / a.len() as f64;
        assert!((chamfer_distance(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn point_above_triangle() {
        let s = SurfaceIndex::new(z0_triangle()).unwrap();
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 2.0)]);
        assert_eq!(hausdorff_to_surface(&cloud, &s), 2.0);
        assert_eq!(s.project(Point3::new(0.0, 0.0, 1.0)), Point3::ZERO);
    }

    #[test]
    fn mesh_vertices_have_zero_distance() {
        let mesh = z0_triangle();
        let verts = PointCloud::new(mesh.triangles[0].vertices.to_vec());
        let s = SurfaceIndex::new(mesh).unwrap();
        assert_eq!(hausdorff_to_surface(&verts, &s), 0.0);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tris = Vec::new();
        while tris.len() < 100 {
            let a = Point3::new(rng.gen(), rng.gen(), rng.gen());
            let b = a + Point3::new(rng.gen(), rng.gen(), rng.gen()) * 0.3;
            let c = a + Point3::new(rng.gen(), rng.gen(), rng.gen()) * 0.3;
            if let Some(t) = Triangle::new(a, b, c) {
                tris.push(t);
            }
        }
        let s = SurfaceIndex::new(TriangleMesh::new(tris)).unwrap();
        for p in random_cloud(200, 5).iter() {
            let q = s.project(*p);
            assert!(s.project(q).distance(q) < 1e-9);
        }
    }

    #[test]
    fn mean_nn_of_unit_line() {
        let pc = PointCloud::new((0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect());
        assert_eq!(mean_nn_distance(&pc).unwrap(), 1.0);
    }
}
