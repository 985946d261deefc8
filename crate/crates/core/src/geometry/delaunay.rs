//! Incremental (Bowyer-Watson) 3D Delaunay tetrahedralization.
//!
//! The convex hull is closed off with "ghost" tetrahedra that share a vertex
//! at infinity, so no bounding super-tetrahedron is needed. Predicates are
//! plain `f64` determinants compared against tolerances relative to the
//! cloud extent; near-zero results are treated as "not strictly inside",
//! which keeps the cavity conservative. A cavity that would produce a flat
//! or inverted tetrahedron is grown until it is star-shaped from the new
//! point.

use super::{Degeneracy, GeometryError, Point3, PointCloud, Result};

pub type Tetrahedron = [usize; 4];

const INF: u32 = u32::MAX;
const NONE: u32 = u32::MAX;
const REL_TOL: f64 = 1e-12;

/// A finished tetrahedralization. `neighbors[t][i]` is the tetrahedron
/// across the face opposite `tets[t][i]`, or `None` on the convex hull.
/// Every tetrahedron is positively oriented (see [`orient3d`]).
#[derive(Debug, Clone)]
pub(crate) struct Triangulation {
    pub tets: Vec<Tetrahedron>,
    pub neighbors: Vec<[Option<usize>; 4]>,
}

/// Signed volume times six: positive when `d` lies on the side of plane
/// `abc` that the right-hand normal of `a, b, c` points to.
#[inline]
pub(crate) fn orient3d(a: Point3, b: Point3, c: Point3, d: Point3) -> f64 {
    -robust::orient3d(coord(a), coord(b), coord(c), coord(d))
}

#[inline]
fn coord(p: Point3) -> robust::Coord3D<f64> {
    robust::Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Positive when `e` lies strictly inside the circumsphere of the positively
/// oriented tetrahedron `abcd`.
#[inline]
pub(crate) fn insphere(a: Point3, b: Point3, c: Point3, d: Point3, e: Point3) -> f64 {
    // the exact predicate wants the opposite orientation
    robust::insphere(coord(b), coord(a), coord(c), coord(d), coord(e))
}

pub(crate) fn circumsphere(a: Point3, b: Point3, c: Point3, d: Point3) -> (Point3, f64) {
    let (b, c, d) = (b - a, c - a, d - a);
    let denom = 2.0 * b.dot(c.cross(d));
    let num = c.cross(d) * b.norm_squared() + d.cross(b) * c.norm_squared() + b.cross(c) * d.norm_squared();
    let off = num / denom;
    (a + off, off.norm())
}

#[derive(Debug, Clone)]
struct Tet {
    v: [u32; 4],
    n: [u32; 4],
    alive: bool,
}

impl Tet {
    fn inf_slot(&self) -> Option<usize> {
        self.v.iter().position(|&v| v == INF)
    }
}

struct Builder {
    pts: Vec<Point3>,
    tets: Vec<Tet>,
    free: Vec<u32>,
    cavity_mark: Vec<u32>,
    reject_mark: Vec<u32>,
    stamp: u32,
    last: u32,
    rng: u64,
}

impl Builder {
    fn p(&self, v: u32) -> Point3 {
        self.pts[v as usize]
    }

    /// Orientation of tet `t` with the vertex in `slot` replaced by `q`.
    fn orient_sub(&self, t: &Tet, slot: usize, q: Point3) -> f64 {
        let mut pts = [Point3::ZERO; 4];
        for (k, &v) in t.v.iter().enumerate() {
            pts[k] = if k == slot { q } else { self.p(v) };
        }
        orient3d(pts[0], pts[1], pts[2], pts[3])
    }

    fn finite_conflict(&self, t: &Tet, q: Point3) -> bool {
        let [a, b, c, d] = t.v.map(|v| self.p(v));
        insphere(a, b, c, d, q) > 0.0
    }

    fn conflict(&self, ti: u32, q: Point3) -> bool {
        let t = &self.tets[ti as usize];
        match t.inf_slot() {
            None => self.finite_conflict(t, q),
            Some(k) => {
                let o = self.orient_sub(t, k, q);
                if o > 0.0 {
                    true
                } else if o == 0.0 {
                    let nb = &self.tets[t.n[k] as usize];
                    nb.inf_slot().is_none() && self.finite_conflict(nb, q)
                } else {
                    false
                }
            }
        }
    }

    fn alloc(&mut self, t: Tet) -> u32 {
        if let Some(i) = self.free.pop() {
            self.tets[i as usize] = t;
            i
        } else {
            self.tets.push(t);
            self.cavity_mark.push(0);
            self.reject_mark.push(0);
            (self.tets.len() - 1) as u32
        }
    }

    fn next_rand(&mut self) -> u64 {
        self.rng ^= self.rng << 13;
        self.rng ^= self.rng >> 7;
        self.rng ^= self.rng << 17;
        self.rng
    }

    /// Finds a tetrahedron in conflict with `q` by walking from the most
    /// recently created one; falls back to a scan.
    fn locate(&mut self, q: Point3) -> Option<u32> {
        let mut t = self.last;
        if !self.tets[t as usize].alive {
            t = self.tets.iter().position(|t| t.alive).unwrap() as u32;
        }
        let max_steps = 4 * self.tets.len() + 16;
        let mut steps = 0;
        'walk: while steps < max_steps {
            steps += 1;
            let tet = &self.tets[t as usize];
            if tet.inf_slot().is_some() {
                break;
            }
            let start = (self.next_rand() % 4) as usize;
            let tet = &self.tets[t as usize];
            for k in 0..4 {
                let slot = (start + k) % 4;
                if self.orient_sub(tet, slot, q) < 0.0 {
                    t = tet.n[slot];
                    continue 'walk;
                }
            }
            break;
        }
        if self.conflict(t, q) {
            return Some(t);
        }
        (0..self.tets.len() as u32).find(|&i| self.tets[i as usize].alive && self.conflict(i, q))
    }

    /// Whether the tetrahedron created by coning boundary face `(t, slot)`
    /// to `q` would be properly shaped.
    fn new_tet_valid(&self, t: u32, slot: usize, q: Point3) -> bool {
        let tet = &self.tets[t as usize];
        match tet.inf_slot() {
            Some(k) if k != slot => {
                // New ghost: the hull must stay convex across the face shared
                // with the outside neighbor, whose apex may not lie beyond
                // the new hull face.
                let nb = &self.tets[tet.n[slot] as usize];
                let apex = nb
                    .v
                    .iter()
                    .copied()
                    .find(|v| !tet.v.contains(v))
                    .expect("adjacent tetrahedra share exactly one face");
                let mut pts = [Point3::ZERO; 4];
                for (i, &v) in tet.v.iter().enumerate() {
                    pts[i] = if i == slot {
                        q
                    } else if i == k {
                        self.p(apex)
                    } else {
                        self.p(v)
                    };
                }
                orient3d(pts[0], pts[1], pts[2], pts[3]) <= 0.0
            }
            _ => self.orient_sub(tet, slot, q) > 0.0,
        }
    }

    fn insert(&mut self, pi: u32) -> Result<bool> {
        let q = self.p(pi);
        let Some(start) = self.locate(q) else {
            return Ok(false);
        };
        self.stamp += 1;
        let stamp = self.stamp;
        let mut cavity = vec![start];
        self.cavity_mark[start as usize] = stamp;
        let mut stack = vec![start];
        while let Some(t) = stack.pop() {
            for k in 0..4 {
                let nb = self.tets[t as usize].n[k];
                let nbu = nb as usize;
                if self.cavity_mark[nbu] == stamp || self.reject_mark[nbu] == stamp {
                    continue;
                }
                if self.conflict(nb, q) {
                    self.cavity_mark[nbu] = stamp;
                    cavity.push(nb);
                    stack.push(nb);
                } else {
                    self.reject_mark[nbu] = stamp;
                }
            }
        }

        // Grow until every boundary face cones to a valid tetrahedron.
        let mut boundary = Vec::new();
        loop {
            boundary.clear();
            let mut grow = None;
            'scan: for &t in &cavity {
                for k in 0..4 {
                    let nb = self.tets[t as usize].n[k];
                    if self.cavity_mark[nb as usize] == stamp {
                        continue;
                    }
                    if !self.new_tet_valid(t, k, q) {
                        grow = Some(nb);
                        break 'scan;
                    }
                    boundary.push((t, k));
                }
            }
            match grow {
                Some(nb) => {
                    if cavity.len() + 1 >= self.tets.len() - self.free.len() {
                        return Err(GeometryError::Degenerate(Degeneracy::AllCoplanar));
                    }
                    self.cavity_mark[nb as usize] = stamp;
                    cavity.push(nb);
                }
                None => break,
            }
        }

        // The boundary must be a closed 2-manifold: every edge on exactly
        // two faces. Checked before anything is modified.
        let mut keys: Vec<(u32, u32)> = Vec::with_capacity(3 * boundary.len());
        for &(t, k) in &boundary {
            let mut v = self.tets[t as usize].v;
            v[k] = pi;
            for m in (0..4).filter(|&m| m != k) {
                let mut e = (0..4).filter(|&l| l != k && l != m).map(|l| v[l]);
                let (a, b) = (e.next().unwrap(), e.next().unwrap());
                keys.push((a.min(b), a.max(b)));
            }
        }
        keys.sort_unstable();
        let manifold = keys.len() % 2 == 0
            && keys.chunks(2).all(|c| c[0] == c[1])
            && keys.windows(3).all(|w| w[0] != w[2]);
        if !manifold {
            return Err(GeometryError::Degenerate(Degeneracy::NonManifoldCavity));
        }

        // Cone every boundary face to the new vertex.
        let mut created = Vec::with_capacity(boundary.len());
        let mut edges: Vec<((u32, u32), u32, usize)> = Vec::with_capacity(3 * boundary.len());
        for &(t, k) in &boundary {
            let old = self.tets[t as usize].clone();
            let nb = old.n[k];
            let mut v = old.v;
            v[k] = pi;
            let mut n = [NONE; 4];
            n[k] = nb;
            let nt = self.alloc(Tet { v, n, alive: true });
            let nbt = &mut self.tets[nb as usize];
            let back = nbt.n.iter().position(|&x| x == t).unwrap();
            nbt.n[back] = nt;
            for m in 0..4 {
                if m == k {
                    continue;
                }
                let mut pair = [0u32; 2];
                let mut idx = 0;
                for l in 0..4 {
                    if l != k && l != m {
                        pair[idx] = v[l];
                        idx += 1;
                    }
                }
                let key = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                edges.push((key, nt, m));
            }
            created.push(nt);
        }
        edges.sort_unstable_by_key(|e| e.0);
        for pair in edges.chunks(2) {
            let [(_, ta, sa), (_, tb, sb)] = [pair[0], pair[1]];
            self.tets[ta as usize].n[sa] = tb;
            self.tets[tb as usize].n[sb] = ta;
        }
        for &t in &cavity {
            self.tets[t as usize].alive = false;
            self.free.push(t);
        }
        self.last = created
            .iter()
            .copied()
            .find(|&t| self.tets[t as usize].inf_slot().is_none())
            .unwrap_or(created[0]);
        Ok(true)
    }
}

fn morton_key(p: Point3, lo: Point3, scale: f64) -> u64 {
    fn spread(mut x: u64) -> u64 {
        x &= 0x1f_ffff;
        x = (x | x << 32) & 0x1f00000000ffff;
        x = (x | x << 16) & 0x1f0000ff0000ff;
        x = (x | x << 8) & 0x100f00f00f00f00f;
        x = (x | x << 4) & 0x10c30c30c30c30c3;
        x = (x | x << 2) & 0x1249249249249249;
        x
    }
    let q = |v: f64, l: f64| (((v - l) * scale).clamp(0.0, 2_097_151.0)) as u64;
    spread(q(p.x, lo.x)) | spread(q(p.y, lo.y)) << 1 | spread(q(p.z, lo.z)) << 2
}

/// Moves every exact duplicate (after the first copy) by `shift` along a
/// deterministic pseudo-random direction.
fn jitter_duplicates(pts: &mut [Point3], shift: f64) {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    let key = |p: &Point3| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits());
    order.sort_by_key(|&i| (key(&pts[i]), i));
    let mut state = 0x9e37_79b9_7f4a_7c15_u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    for w in 1..order.len() {
        let (prev, cur) = (order[w - 1], order[w]);
        if pts[prev] == pts[cur] {
            let dir = Point3::new(next(), next(), next());
            let dir = dir / dir.norm().max(1e-300);
            pts[cur] += dir * shift;
        }
    }
}

pub(crate) fn triangulate(cloud: &PointCloud) -> Result<Triangulation> {
    cloud.check_finite()?;
    let n = cloud.len();
    if n < 4 {
        return Err(GeometryError::Degenerate(Degeneracy::TooFewPoints));
    }
    let extent = cloud.extent();
    if !(extent > 0.0) {
        return Err(GeometryError::Degenerate(Degeneracy::AllCoincident));
    }
    let mut pts = cloud.points.clone();
    jitter_duplicates(&mut pts, 1e-9 * extent);
    let eps_orient = REL_TOL * extent.powi(3);

    // initial non-degenerate tetrahedron
    let i0 = 0;
    let far = |from: &dyn Fn(Point3) -> f64| {
        (0..n)
            .map(|i| (from(pts[i]), i))
            .fold((-1.0, 0), |acc, e| if e.0 > acc.0 { e } else { acc })
    };
    let (d1, i1) = far(&|p| p.distance(pts[i0]));
    if d1 <= REL_TOL * extent {
        return Err(GeometryError::Degenerate(Degeneracy::AllCoincident));
    }
    let axis = pts[i1] - pts[i0];
    let (a2, i2) = far(&|p| axis.cross(p - pts[i0]).norm());
    if a2 <= REL_TOL * extent * extent {
        return Err(GeometryError::Degenerate(Degeneracy::AllCollinear));
    }
    let (v3, i3) = far(&|p| orient3d(pts[i0], pts[i1], pts[i2], p).abs());
    if v3 <= eps_orient {
        return Err(GeometryError::Degenerate(Degeneracy::AllCoplanar));
    }
    let mut first = [i0 as u32, i1 as u32, i2 as u32, i3 as u32];
    if orient3d(pts[i0], pts[i1], pts[i2], pts[i3]) < 0.0 {
        first.swap(0, 1);
    }

    let mut b = Builder {
        pts,
        tets: Vec::with_capacity(8 * n),
        free: Vec::new(),
        cavity_mark: Vec::with_capacity(8 * n),
        reject_mark: Vec::with_capacity(8 * n),
        stamp: 0,
        last: 0,
        rng: 0x2545_f491_4f6c_dd1d,
    };
    b.alloc(Tet {
        v: first,
        n: [NONE; 4],
        alive: true,
    });
    for k in 0..4 {
        let mut v = first;
        v[k] = INF;
        // flip so that substituting an outside point for INF is positive
        let others: Vec<usize> = (0..4).filter(|&s| s != k).collect();
        v.swap(others[0], others[1]);
        let mut nn = [NONE; 4];
        nn[k] = 0;
        let g = b.alloc(Tet { v, n: nn, alive: true });
        b.tets[0].n[k] = g;
    }
    // ghost-ghost adjacency
    for g in 1..5u32 {
        for slot in 0..4 {
            if b.tets[g as usize].n[slot] != NONE {
                continue;
            }
            let mut face: Vec<u32> = (0..4).filter(|&s| s != slot).map(|s| b.tets[g as usize].v[s]).collect();
            face.sort_unstable();
            for h in 1..5u32 {
                if h == g {
                    continue;
                }
                let hv = b.tets[h as usize].v;
                if face.iter().all(|v| hv.contains(v)) {
                    b.tets[g as usize].n[slot] = h;
                }
            }
        }
    }

    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for p in &b.pts {
        lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
    }
    let scale = 2_097_151.0 / extent;
    let mut order: Vec<usize> = (0..n).filter(|i| !first.contains(&(*i as u32))).collect();
    order.sort_by_key(|&i| (morton_key(b.pts[i], lo, scale), i));
    for i in order {
        b.insert(i as u32)?;
    }

    // compact finite tetrahedra
    let mut remap = vec![usize::MAX; b.tets.len()];
    let mut tets = Vec::new();
    for (i, t) in b.tets.iter().enumerate() {
        if t.alive && t.inf_slot().is_none() {
            remap[i] = tets.len();
            tets.push(t.v.map(|v| v as usize));
        }
    }
    let mut neighbors = Vec::with_capacity(tets.len());
    for t in b.tets.iter().filter(|t| t.alive && t.inf_slot().is_none()) {
        neighbors.push(t.n.map(|nb| {
            let r = remap[nb as usize];
            (r != usize::MAX).then_some(r)
        }));
    }
    Ok(Triangulation { tets, neighbors })
}

/// Delaunay tetrahedralization of `cloud`, as positively oriented 4-tuples of
/// point indices.
pub fn delaunay_3d(cloud: &PointCloud) -> Result<Vec<Tetrahedron>> {
    Ok(triangulate(cloud)?.tets)
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn volume(p: &PointCloud, t: &Tetrahedron) -> f64 {
        orient3d(p[t[0]], p[t[1]], p[t[2]], p[t[3]]) / 6.0
    }

    #[test]
    fn insphere_sign_convention() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        let d = Point3::new(0.0, 0.0, 1.0);
        assert!(orient3d(a, b, c, d) > 0.0);
        assert!(insphere(a, b, c, d, Point3::new(0.25, 0.25, 0.25)) > 0.0);
        assert!(insphere(a, b, c, d, Point3::new(3.0, 3.0, 3.0)) < 0.0);
        let (center, r) = circumsphere(a, b, c, d);
        assert!(center.distance(Point3::new(0.5, 0.5, 0.5)) < 1e-15);
        assert!((r - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn four_points_make_one_tetrahedron() {
        let pc = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ]);
        let tets = delaunay_3d(&pc).unwrap();
        assert_eq!(tets.len(), 1);
        let mut v = tets[0].to_vec();
        v.sort();
        assert_eq!(v, vec![0, 1, 2, 3]);
    }

    #[test]
    fn cube_corners_fill_unit_volume() {
        let pc = cube_corners();
        let tets = delaunay_3d(&pc).unwrap();
        let vol: f64 = tets.iter().map(|t| volume(&pc, t)).sum();
        assert!((vol - 1.0).abs() < 1e-9, "volume {vol}");
        assert!(tets.iter().all(|t| volume(&pc, t) > 0.0));
    }

    #[test]
    fn degenerate_inputs_carry_distinct_codes() {
        let e = |pts: Vec<Point3>| delaunay_3d(&PointCloud::new(pts)).unwrap_err();
        assert_eq!(e(vec![Point3::ZERO; 3]), GeometryError::Degenerate(Degeneracy::TooFewPoints));
        assert_eq!(e(vec![Point3::ZERO; 5]), GeometryError::Degenerate(Degeneracy::AllCoincident));
        let line = (0..6).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(e(line), GeometryError::Degenerate(Degeneracy::AllCollinear));
        let grid = (0..16)
            .map(|i| Point3::new((i % 4) as f64, (i / 4) as f64, 0.0))
            .collect();
        assert_eq!(e(grid), GeometryError::Degenerate(Degeneracy::AllCoplanar));
    }

    fn assert_empty_circumspheres(pc: &PointCloud, tets: &[Tetrahedron]) {
        for t in tets {
            let (c, r) = circumsphere(pc[t[0]], pc[t[1]], pc[t[2]], pc[t[3]]);
            for (i, p) in pc.iter().enumerate() {
                if t.contains(&i) {
                    continue;
                }
                assert!(p.distance_squared(c) >= r * r - 1e-9, "point {i} inside circumsphere of {t:?}");
            }
        }
    }

    #[test]
    fn random_points_satisfy_empty_circumsphere() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pc = PointCloud::new(
                (0..20)
                    .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
                    .collect(),
            );
            let tets = delaunay_3d(&pc).unwrap();
            assert_empty_circumspheres(&pc, &tets);
        }
    }

    #[test]
    fn duplicates_are_tolerated() {
        let mut pts = cube_corners().points;
        pts.push(pts[3]);
        pts.push(Point3::new(0.5, 0.5, 0.5));
        pts.push(Point3::new(0.5, 0.5, 0.5));
        let pc = PointCloud::new(pts);
        let tets = delaunay_3d(&pc).unwrap();
        let vol: f64 = tets.iter().map(|t| volume(&pc, t)).sum();
        assert!((vol - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hull_volume_of_cospherical_points() {
        // points on a sphere are the worst case for the insphere predicate
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point3> = (0..300)
            .map(|_| loop {
                let p = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let r = p.norm();
                if r > 0.1 && r <= 1.0 {
                    break p / r;
                }
            })
            .collect();
        let pc = PointCloud::new(pts);
        let tri = triangulate(&pc).unwrap();
        assert!(tri.tets.iter().all(|t| volume(&pc, t) > 0.0));
        // each interior face is shared by exactly two tetrahedra
        for (t, nbs) in tri.neighbors.iter().enumerate() {
            for nb in nbs.iter().flatten() {
                assert!(tri.neighbors[*nb].contains(&Some(t)));
            }
        }
        let vol: f64 = tri.tets.iter().map(|t| volume(&pc, t)).sum();
        assert!(vol > 3.5 && vol < 4.0 * std::f64::consts::PI / 3.0);
    }
}
