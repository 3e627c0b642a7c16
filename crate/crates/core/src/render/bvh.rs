//! Per-object bounding volume hierarchy over world-space triangles.

use crate::geom::{ray_triangle, Aabb, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangles reordered so each leaf owns a contiguous range.
    triangles: Vec<[Vec3; 3]>,
    /// Original index of each reordered triangle.
    order: Vec<usize>,
}

fn tri_bounds(t: &[Vec3; 3]) -> Aabb {
    Aabb::from_points(t.iter())
}

impl Bvh {
    pub fn build(triangles: &[[Vec3; 3]]) -> Bvh {
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let centroids: Vec<Vec3> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            Self::build_node(triangles, &centroids, &mut order, 0, triangles.len(), &mut nodes);
        }
        let reordered = order.iter().map(|&i| triangles[i]).collect();
        Bvh { nodes, triangles: reordered, order }
    }

    fn build_node(
        tris: &[[Vec3; 3]],
        centroids: &[Vec3],
        order: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let slice = &mut order[start..end];
        let bounds = slice.iter().map(|&i| tri_bounds(&tris[i])).fold(Aabb::empty(), |a, b| a.union(&b));
        let index = nodes.len();
        let count = end - start;
        if count <= LEAF_SIZE {
            nodes.push(Node::Leaf { bounds, start, count });
            return index;
        }
        let cb = Aabb::from_points(slice.iter().map(|&i| &centroids[i]));
        let ext = cb.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        if ext[axis] <= 0.0 {
            nodes.push(Node::Leaf { bounds, start, count });
            return index;
        }
        let mid = count / 2;
        // Ties broken by index so the split is deterministic.
        slice.select_nth_unstable_by(mid, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        nodes.push(Node::Leaf { bounds, start, count });
        let left = Self::build_node(tris, centroids, order, start, start + mid, nodes);
        let right = Self::build_node(tris, centroids, order, start + mid, end, nodes);
        nodes[index] = Node::Inner { bounds, left, right };
        index
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map(|n| *n.bounds()).unwrap_or_else(Aabb::empty)
    }

    /// Closest hit within `(0, t_max)`: distance and original triangle index.
    /// Among equal distances the lowest original index wins.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<(f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<(f64, usize)> = None;
        let mut limit = t_max;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().hit(origin, &inv, limit).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for k in start..start + count {
                        let [a, b, c] = &self.triangles[k];
                        if let Some(t) = ray_triangle(origin, dir, a, b, c) {
                            let idx = self.order[k];
                            let better = match best {
                                None => t < limit,
                                Some((bt, bi)) => t < bt || (t == bt && idx < bi),
                            };
                            if better {
                                best = Some((t, idx));
                                limit = t;
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        best
    }

    /// True if anything is hit closer than `t_max`.
    pub fn occluded(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().hit(origin, &inv, t_max).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for [a, b, c] in &self.triangles[start..start + count] {
                        if ray_triangle(origin, dir, a, b, c).is_some_and(|t| t < t_max) {
                            return true;
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use rand::{Rng, SeedableRng};

    fn brute(tris: &[[Vec3; 3]], o: &Vec3, d: &Vec3) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, [a, b, c]) in tris.iter().enumerate() {
            if let Some(t) = ray_triangle(o, d, a, b, c) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        best
    }

    #[test]
    fn matches_brute_force_on_random_soup() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut p = || vec3(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let tris: Vec<[Vec3; 3]> = (0..300)
            .map(|_| {
                let c = p();
                [c, c + p() * 0.2, c + p() * 0.2]
            })
            .collect();
        let bvh = Bvh::build(&tris);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..2000 {
            let o = vec3(3.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let target = vec3(0.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let d = (target - o).normalize();
            let a = bvh.intersect(&o, &d, f64::INFINITY);
            let b = brute(&tris, &o, &d);
            assert_eq!(a.map(|h| h.1), b.map(|h| h.1));
            assert_eq!(bvh.occluded(&o, &d, f64::INFINITY), b.is_some());
        }
    }
}
