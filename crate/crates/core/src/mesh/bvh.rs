//! Axis-aligned bounding volume hierarchy over mesh triangles.

use crate::geometry::Vec3;

use super::triangle::{closest_point_barycentric, interpolate, ray_intersect};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn sq_distance(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    fn ray_overlaps(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (self.min[k] - origin[k]) * inv_dir[k];
            let b = (self.max[k] - origin[k]) * inv_dir[k];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            // NaN from 0 * inf (ray in the slab plane) keeps the bound unchanged.
            if lo > t0 {
                t0 = lo;
            }
            if hi < t1 {
                t1 = hi;
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub triangle: usize,
    pub mu: [f64; 3],
    pub point: Vec3,
    pub distance: f64,
}

/// Immutable BVH holding its own copy of the triangle corners.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    tris: Vec<[Vec3; 3]>,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl TriangleBvh {
    pub fn build(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Self {
        let tris: Vec<[Vec3; 3]> = triangles
            .iter()
            .map(|t| [vertices[t[0]], vertices[t[1]], vertices[t[2]]])
            .collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        if !tris.is_empty() {
            build_node(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        }
        Self { tris, nodes, order }
    }

    pub fn len(&self) -> usize {
        self.tris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    pub fn triangle(&self, i: usize) -> &[Vec3; 3] {
        &self.tris[i]
    }

    /// Best-first branch and bound over triangles.
    ///
    /// `eval(tri)` returns the exact cost of a triangle plus a payload;
    /// `lower_bound(d2)` must never exceed the cost of any triangle whose
    /// bounding box lies at squared distance `d2` from `query`. Ties in cost
    /// go to the lowest triangle index, matching a linear scan.
    pub fn search<T, B, E>(&self, query: &Vec3, lower_bound: B, mut eval: E) -> Option<(usize, f64, T)>
    where
        B: Fn(f64) -> f64,
        E: FnMut(usize) -> (f64, T),
    {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64, T)> = None;
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        stack.push((0, lower_bound(self.nodes[0].bounds.sq_distance(query))));
        while let Some((ni, bound)) = stack.pop() {
            if let Some((_, cost, _)) = &best {
                if bound > *cost + prune_slack(*cost) {
                    continue;
                }
            }
            match self.nodes[ni].kind {
                NodeKind::Leaf { start, end } => {
                    for &tri in &self.order[start..end] {
                        let (cost, payload) = eval(tri);
                        let better = match &best {
                            None => true,
                            Some((bt, bc, _)) => cost < *bc || (cost == *bc && tri < *bt),
                        };
                        if better {
                            best = Some((tri, cost, payload));
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let bl = lower_bound(self.nodes[left].bounds.sq_distance(query));
                    let br = lower_bound(self.nodes[right].bounds.sq_distance(query));
                    // Push the farther child first so the nearer one is explored next.
                    if bl <= br {
                        stack.push((right, br));
                        stack.push((left, bl));
                    } else {
                        stack.push((left, bl));
                        stack.push((right, br));
                    }
                }
            }
        }
        best
    }

    pub fn closest_point(&self, p: &Vec3) -> Option<ClosestHit> {
        self.search(
            p,
            |d2| d2,
            |i| {
                let [a, b, c] = &self.tris[i];
                let mu = closest_point_barycentric(p, a, b, c);
                let q = interpolate(&mu, a, b, c);
                ((p - q).norm_squared(), (mu, q))
            },
        )
        .map(|(triangle, d2, (mu, point))| ClosestHit {
            triangle,
            mu,
            point,
            distance: d2.sqrt(),
        })
    }

    /// Linear scan over all triangles; the reference for [`Self::closest_point`].
    pub fn closest_point_brute_force(&self, p: &Vec3) -> Option<ClosestHit> {
        let mut best: Option<(usize, f64, [f64; 3], Vec3)> = None;
        for (i, [a, b, c]) in self.tris.iter().enumerate() {
            let mu = closest_point_barycentric(p, a, b, c);
            let q = interpolate(&mu, a, b, c);
            let d2 = (p - q).norm_squared();
            if best.as_ref().is_none_or(|b| d2 < b.1) {
                best = Some((i, d2, mu, q));
            }
        }
        best.map(|(triangle, d2, mu, point)| ClosestHit {
            triangle,
            mu,
            point,
            distance: d2.sqrt(),
        })
    }

    /// True if the segment `origin + t dir`, `t in (t_min, t_max)`, hits any
    /// triangle other than `exclude`.
    pub fn occluded(&self, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64, exclude: usize) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !node.bounds.ray_overlaps(origin, &inv, t_max) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &tri in &self.order[start..end] {
                        if tri == exclude {
                            continue;
                        }
                        let [a, b, c] = &self.tris[tri];
                        if let Some(t) = ray_intersect(origin, dir, a, b, c) {
                            if t > t_min && t < t_max {
                                return true;
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        false
    }
}

fn prune_slack(cost: f64) -> f64 {
    1e-9 * cost.abs().max(1.0)
}

fn build_node(
    tris: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &i in &order[start..end] {
        for v in &tris[i] {
            bounds.grow(v);
        }
        cbounds.grow(&centroids[i]);
    }
    let index = nodes.len();
    nodes.push(Node {
        bounds,
        kind: NodeKind::Leaf { start, end },
    });
    if end - start <= LEAF_SIZE {
        return index;
    }
    let extent = cbounds.max - cbounds.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    let left = build_node(tris, centroids, order, start, mid, nodes);
    let right = build_node(tris, centroids, order, mid, end, nodes);
    nodes[index].kind = NodeKind::Inner { left, right };
    index
}
