use rand::Rng;

use super::{GeometryError, Point3, Result, TriangleMesh, VpTree};

/// Greedy farthest point sampling.
///
/// Starts from `seeds` (or index 0 when `seeds` is empty) and repeatedly adds
/// the point whose distance to the chosen set is largest, lowest index on
/// ties. Returns the `m` chosen indices in selection order, seeds first.
pub fn farthest_point_sample(points: &[Point3], m: usize, seeds: &[usize]) -> Result<Vec<usize>> {
    let n = points.len();
    if m > n {
        return Err(GeometryError::TooMany {
            requested: m,
            available: n,
        });
    }
    if seeds.len() > m {
        return Err(GeometryError::TooMany {
            requested: seeds.len(),
            available: m,
        });
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut chosen = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut min_dist = vec![f64::INFINITY; n];
    let add = |i: usize, chosen: &mut Vec<usize>, min_dist: &mut [f64], taken: &mut [bool]| {
        chosen.push(i);
        taken[i] = true;
        let p = points[i];
        for (d, q) in min_dist.iter_mut().zip(points) {
            let dd = p.distance(*q);
            if dd < *d {
                *d = dd;
            }
        }
    };
    if seeds.is_empty() {
        add(0, &mut chosen, &mut min_dist, &mut taken);
    } else {
        for &s in seeds {
            if s >= n {
                return Err(GeometryError::TooMany {
                    requested: s + 1,
                    available: n,
                });
            }
            if !taken[s] {
                add(s, &mut chosen, &mut min_dist, &mut taken);
            }
        }
    }
    while chosen.len() < m {
        let mut best = usize::MAX;
        let mut best_d = -1.0;
        for (i, &d) in min_dist.iter().enumerate() {
            if !taken[i] && d > best_d {
                best = i;
                best_d = d;
            }
        }
        add(best, &mut chosen, &mut min_dist, &mut taken);
    }
    Ok(chosen)
}

/// Farthest point sampling of `m` candidates given an already chosen set.
///
/// Equivalent to [`farthest_point_sample`] over `chosen ++ candidates` with
/// every chosen point as a seed, but only pays for the candidates. Returns
/// indices into `candidates`. With `chosen` empty the first pick is
/// candidate 0.
pub fn farthest_point_sample_onto(chosen: &[Point3], candidates: &[Point3], m: usize) -> Result<Vec<usize>> {
    if m > candidates.len() {
        return Err(GeometryError::TooMany {
            requested: m,
            available: candidates.len(),
        });
    }
    // squared distances; picked candidates are marked with -1
    let mut min_d2 = if chosen.is_empty() {
        vec![f64::INFINITY; candidates.len()]
    } else {
        let tree = VpTree::from_points(chosen)?;
        candidates
            .iter()
            .map(|&c| chosen[tree.nearest(c).index].distance_squared(c))
            .collect()
    };
    let argmax = |v: &[f64]| {
        let mut best = (usize::MAX, -1.0);
        for (i, &d) in v.iter().enumerate() {
            if d > best.1 {
                best = (i, d);
            }
        }
        best.0
    };
    let mut picked = Vec::with_capacity(m);
    let mut best = argmax(&min_d2);
    while picked.len() < m {
        picked.push(best);
        let p = candidates[best];
        min_d2[best] = -1.0;
        // update and find the next pick in one pass
        let mut next = (usize::MAX, -1.0);
        for (i, (d, q)) in min_d2.iter_mut().zip(candidates).enumerate() {
            let dd = p.distance_squared(*q);
            if dd < *d {
                *d = dd;
            }
            if *d > next.1 {
                next = (i, *d);
            }
        }
        best = next.0;
    }
    Ok(picked)
}

/// Draws `m` points uniformly by area from `mesh`, returning each point with
/// the index of the triangle it was placed on.
pub fn sample_on_mesh_indexed<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    m: usize,
    rng: &mut R,
) -> Result<Vec<(usize, Point3)>> {
    let mut cumulative = Vec::with_capacity(mesh.len());
    let mut total = 0.0;
    for t in &mesh.triangles {
        total += t.area();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(GeometryError::ZeroArea);
    }
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let target = rng.gen::<f64>() * total;
        // first triangle whose cumulative area exceeds the target; a
        // zero-area triangle never strictly increases the running sum
        let ti = cumulative
            .partition_point(|&c| c <= target)
            .min(mesh.len() - 1);
        let [a, b, c] = mesh.triangles[ti].vertices;
        let r1 = rng.gen::<f64>().sqrt();
        let r2 = rng.gen::<f64>();
        let p = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
        out.push((ti, p));
    }
    Ok(out)
}

/// Draws `m` points uniformly by area from `mesh`.
pub fn sample_on_mesh<R: Rng + ?Sized>(mesh: &TriangleMesh, m: usize, rng: &mut R) -> Result<Vec<Point3>> {
    Ok(sample_on_mesh_indexed(mesh, m, rng)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Triangle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent greedy oracle: recomputes every min-distance from scratch.
    fn fps_oracle(points: &[Point3], m: usize, seeds: &[usize]) -> Vec<usize> {
        let mut chosen: Vec<usize> = if seeds.is_empty() { vec![0] } else { seeds.to_vec() };
        while chosen.len() < m {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for i in 0..points.len() {
                if chosen.contains(&i) {
                    continue;
                }
                let d = chosen
                    .iter()
                    .map(|&c| points[c].distance(points[i]))
                    .fold(f64::INFINITY, f64::min);
                if d > best.0 {
                    best = (d, i);
                }
            }
            chosen.push(best.1);
        }
        chosen
    }

    #[test]
    fn all_points_when_m_equals_n() {
        let pts: Vec<Point3> = (0..7).map(|i| Point3::new(i as f64, 0.0, 1.0)).collect();
        let mut got = farthest_point_sample(&pts, 7, &[]).unwrap();
        got.sort();
        assert_eq!(got, (0..7).collect::<Vec<_>>());
        assert!(farthest_point_sample(&pts, 8, &[]).is_err());
    }

    #[test]
    fn collinear_endpoint() {
        let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(farthest_point_sample(&pts, 2, &[0]).unwrap(), vec![0, 9]);
    }

    #[test]
    fn grid_matches_oracle() {
        let pts: Vec<Point3> = (0..100)
            .map(|i| Point3::new((i % 10) as f64, (i / 10) as f64, 0.0))
            .collect();
        assert_eq!(farthest_point_sample(&pts, 4, &[]).unwrap(), fps_oracle(&pts, 4, &[]));
        assert_eq!(
            farthest_point_sample(&pts, 30, &[44, 3]).unwrap(),
            fps_oracle(&pts, 30, &[44, 3])
        );
    }

    #[test]
    fn onto_matches_seeded_fps() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut p = || Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
        let chosen: Vec<Point3> = (0..30).map(|_| p()).collect();
        let cands: Vec<Point3> = (0..200).map(|_| p()).collect();
        let all: Vec<Point3> = chosen.iter().chain(&cands).copied().collect();
        let seeds: Vec<usize> = (0..30).collect();
        let full = fps_oracle(&all, 30 + 25, &seeds);
        let got = farthest_point_sample_onto(&chosen, &cands, 25).unwrap();
        assert_eq!(got, full[30..].iter().map(|i| i - 30).collect::<Vec<_>>());
        assert_eq!(
            farthest_point_sample_onto(&[], &cands, 10).unwrap(),
            fps_oracle(&cands, 10, &[])
        );
        assert!(farthest_point_sample_onto(&chosen, &cands, 201).is_err());
    }

    #[test]
    fn samples_lie_on_their_triangle() {
        let t = Triangle::new(Point3::ZERO, Point3::new(2.0, 0.0, 0.0), Point3::new(0.0, 1.0, 1.0)).unwrap();
        let mesh = TriangleMesh::new(vec![t]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in sample_on_mesh(&mesh, 500, &mut rng).unwrap() {
            // barycentric coordinates from the closest-point solve
            assert!(t.distance(p) < 1e-12);
        }
    }

    #[test]
    fn area_proportional_selection() {
        let small = Triangle::new(Point3::ZERO, Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)).unwrap();
        let big = Triangle::new(
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(8.0, 0.0, 0.0),
            Point3::new(5.0, 3.0, 0.0),
        )
        .unwrap();
        let mesh = TriangleMesh::new(vec![big, small]);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = sample_on_mesh_indexed(&mesh, 1000, &mut rng).unwrap();
        let big_count = s.iter().filter(|e| e.0 == 0).count();
        assert!((850..=950).contains(&big_count), "{big_count}");
    }

    #[test]
    fn zero_area_triangles_are_never_chosen() {
        let good = Triangle::new(Point3::ZERO, Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)).unwrap();
        // bypass the constructor to plant degenerate faces
        let flat = Triangle {
            vertices: [Point3::ZERO, Point3::new(1.0, 1.0, 1.0), Point3::new(2.0, 2.0, 2.0)],
            normal: Point3::new(0.0, 0.0, 1.0),
        };
        let mesh = TriangleMesh::new(vec![flat, good, flat]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_on_mesh_indexed(&mesh, 2000, &mut rng).unwrap();
        assert!(s.iter().all(|e| e.0 == 1));
        let all_flat = TriangleMesh::new(vec![flat]);
        assert_eq!(sample_on_mesh(&all_flat, 1, &mut rng).unwrap_err(), GeometryError::ZeroArea);
    }
}
