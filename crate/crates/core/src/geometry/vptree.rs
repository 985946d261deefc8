use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{GeometryError, Point3, Result, TriangleMesh};

const NONE: u32 = u32::MAX;

/// Slack applied to triangle-inequality lower bounds so rounding in the
/// bound never prunes an item sitting exactly on the current search radius.
const PRUNE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ranked {
    distance: f64,
    index: usize,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, o: &Self) -> Ordering {
        self.distance
            .total_cmp(&o.distance)
            .then(self.index.cmp(&o.index))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

#[derive(Debug, Clone)]
struct Node {
    item: u32,
    inner: u32,
    outer: u32,
    /// Largest vantage distance among items in the inner subtree.
    inner_max: f64,
    /// Smallest vantage distance among items in the outer subtree.
    outer_min: f64,
    /// Largest item radius in each subtree (zero for plain points).
    inner_radius: f64,
    outer_radius: f64,
}

/// Vantage-point tree over item centers, each optionally padded by a
/// bounding radius. In point mode every radius is zero and queries are exact;
/// in triangle mode the center is the triangle centroid and the radius its
/// enclosing-ball radius, so distance bounds stay valid for the triangle.
///
/// The vantage point of each node is the item farthest from the centroid of
/// the node's items; the remaining items are split at the median vantage
/// distance.
#[derive(Debug, Clone)]
pub struct VpTree {
    centers: Vec<Point3>,
    radii: Vec<f64>,
    nodes: Vec<Node>,
    root: u32,
}

impl VpTree {
    pub fn from_points(points: &[Point3]) -> Result<Self> {
        Self::build(points.to_vec(), vec![0.0; points.len()])
    }

    pub fn from_triangles(mesh: &TriangleMesh) -> Result<Self> {
        let centers = mesh.triangles.iter().map(|t| t.centroid()).collect();
        let radii = mesh.triangles.iter().map(|t| t.bounding_radius()).collect();
        Self::build(centers, radii)
    }

    fn build(centers: Vec<Point3>, radii: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(GeometryError::Empty);
        }
        if let Some(i) = centers.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        let mut tree = VpTree {
            centers,
            radii,
            nodes: Vec::new(),
            root: NONE,
        };
        tree.nodes.reserve(tree.centers.len());
        let mut ids: Vec<u32> = (0..tree.centers.len() as u32).collect();
        let mut scratch = Vec::with_capacity(ids.len());
        tree.root = tree.build_node(&mut ids, &mut scratch);
        Ok(tree)
    }

    fn build_node(&mut self, ids: &mut [u32], scratch: &mut Vec<(f64, u32)>) -> u32 {
        if ids.is_empty() {
            return NONE;
        }
        let n = ids.len() as f64;
        let centroid = ids
            .iter()
            .fold(Point3::ZERO, |acc, &i| acc + self.centers[i as usize])
            / n;
        // farthest from centroid, lowest id on ties
        let mut vp_pos = 0;
        let mut vp_dist = -1.0;
        for (pos, &i) in ids.iter().enumerate() {
            let d = self.centers[i as usize].distance_squared(centroid);
            if d > vp_dist || (d == vp_dist && i < ids[vp_pos]) {
                vp_dist = d;
                vp_pos = pos;
            }
        }
        ids.swap(0, vp_pos);
        let vantage = ids[0];
        let vc = self.centers[vantage as usize];
        let rest = &mut ids[1..];

        let node_idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            item: vantage,
            inner: NONE,
            outer: NONE,
            inner_max: 0.0,
            outer_min: 0.0,
            inner_radius: 0.0,
            outer_radius: 0.0,
        });
        if rest.is_empty() {
            return node_idx;
        }

        scratch.clear();
        scratch.extend(
            rest.iter()
                .map(|&i| (self.centers[i as usize].distance(vc), i)),
        );
        let half = scratch.len().div_ceil(2);
        let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if half < scratch.len() {
            scratch.select_nth_unstable_by(half, cmp);
        }
        let inner_max = scratch[..half].iter().map(|e| e.0).fold(0.0, f64::max);
        let outer_min = scratch[half..]
            .iter()
            .map(|e| e.0)
            .fold(f64::INFINITY, f64::min);
        let radius_of = |s: &[(f64, u32)], radii: &[f64]| {
            s.iter().map(|e| radii[e.1 as usize]).fold(0.0, f64::max)
        };
        let inner_radius = radius_of(&scratch[..half], &self.radii);
        let outer_radius = radius_of(&scratch[half..], &self.radii);
        for (slot, e) in rest.iter_mut().zip(scratch.iter()) {
            *slot = e.1;
        }

        let (inner_ids, outer_ids) = rest.split_at_mut(half);
        let inner = self.build_node(inner_ids, scratch);
        let outer = self.build_node(outer_ids, scratch);
        let node = &mut self.nodes[node_idx as usize];
        node.inner = inner;
        node.outer = outer;
        node.inner_max = inner_max;
        node.outer_min = outer_min;
        node.inner_radius = inner_radius;
        node.outer_radius = outer_radius;
        node_idx
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, i: usize) -> Point3 {
        self.centers[i]
    }

    /// The `k` items nearest to `q`, by increasing distance with ties broken
    /// by lower index. `exclude` removes one item (typically the query's own
    /// index) from consideration.
    pub fn k_nearest(&self, q: Point3, k: usize, exclude: Option<usize>) -> Result<Vec<Neighbor>> {
        let available = self.len() - usize::from(exclude.is_some_and(|e| e < self.len()));
        if k > available {
            return Err(GeometryError::TooMany {
                requested: k,
                available,
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
        self.knn_node(self.root, q, k, exclude, &mut heap);
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| Neighbor {
                index: r.index,
                distance: r.distance,
            })
            .collect())
    }

    pub fn nearest(&self, q: Point3) -> Neighbor {
        self.k_nearest(q, 1, None).expect("tree is non-empty")[0]
    }

    fn knn_node(
        &self,
        node: u32,
        q: Point3,
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Ranked>,
    ) {
        if node == NONE {
            return;
        }
        let n = &self.nodes[node as usize];
        let d = self.centers[n.item as usize].distance(q);
        if exclude != Some(n.item as usize) {
            let cand = Ranked {
                distance: d,
                index: n.item as usize,
            };
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().unwrap() {
                heap.pop();
                heap.push(cand);
            }
        }
        let bound = |heap: &BinaryHeap<Ranked>| {
            if heap.len() < k {
                f64::INFINITY
            } else {
                heap.peek().unwrap().distance
            }
        };
        let inner_lb = d - n.inner_max;
        let outer_lb = n.outer_min - d;
        let (first, first_lb, second, second_lb) = if inner_lb <= outer_lb {
            (n.inner, inner_lb, n.outer, outer_lb)
        } else {
            (n.outer, outer_lb, n.inner, inner_lb)
        };
        if first_lb <= bound(heap) + PRUNE_SLACK {
            self.knn_node(first, q, k, exclude, heap);
        }
        if second_lb <= bound(heap) + PRUNE_SLACK {
            self.knn_node(second, q, k, exclude, heap);
        }
    }

    /// Every item whose padded ball intersects the ball of radius `r` around
    /// `q`, i.e. `|q - center_i| - radius_i <= r`. In point mode this is the
    /// exact radius query; in triangle mode it is a superset of the
    /// triangles within `r` of `q`. Sorted by index.
    pub fn within_radius(&self, q: Point3, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_node(self.root, q, r, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_node(&self, node: u32, q: Point3, r: f64, out: &mut Vec<usize>) {
        if node == NONE {
            return;
        }
        let n = &self.nodes[node as usize];
        let d = self.centers[n.item as usize].distance(q);
        if d - self.radii[n.item as usize] <= r {
            out.push(n.item as usize);
        }
        if d - n.inner_max - n.inner_radius <= r + PRUNE_SLACK {
            self.radius_node(n.inner, q, r, out);
        }
        if n.outer_min - d - n.outer_radius <= r + PRUNE_SLACK {
            self.radius_node(n.outer, q, r, out);
        }
    }

    /// Minimizes an exact per-item distance `dist(i)` over all items, using
    /// `|q - center_i| - radius_i` as the pruning lower bound. `dist` must
    /// never be smaller than that bound. Ties go to the lower index.
    pub fn nearest_by(&self, q: Point3, dist: impl Fn(usize) -> f64) -> Neighbor {
        let mut best = Ranked {
            distance: f64::INFINITY,
            index: usize::MAX,
        };
        self.nearest_by_node(self.root, q, &dist, &mut best);
        Neighbor {
            index: best.index,
            distance: best.distance,
        }
    }

    fn nearest_by_node(&self, node: u32, q: Point3, dist: &impl Fn(usize) -> f64, best: &mut Ranked) {
        if node == NONE {
            return;
        }
        let n = &self.nodes[node as usize];
        let item = n.item as usize;
        let d = self.centers[item].distance(q);
        if d - self.radii[item] <= best.distance + PRUNE_SLACK {
            let cand = Ranked {
                distance: dist(item),
                index: item,
            };
            if cand < *best {
                *best = cand;
            }
        }
        let inner_lb = d - n.inner_max - n.inner_radius;
        let outer_lb = n.outer_min - d - n.outer_radius;
        let (first, first_lb, second, second_lb) = if inner_lb <= outer_lb {
            (n.inner, inner_lb, n.outer, outer_lb)
        } else {
            (n.outer, outer_lb, n.inner, inner_lb)
        };
        if first_lb <= best.distance + PRUNE_SLACK {
            self.nearest_by_node(first, q, dist, best);
        }
        if second_lb <= best.distance + PRUNE_SLACK {
            self.nearest_by_node(second, q, dist, best);
        }
    }
}
