//! Static KD-tree over 3-D points with ball queries.

use crate::geometry::{Aabb, Vec3};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let mut bbox = Aabb::empty();
        for &i in &self.order[start..end] {
            bbox.grow(&self.points[i]);
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            bbox,
            start,
            end,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let ext = bbox.extent();
            let dim = ext.imax();
            let mid = start + (end - start) / 2;
            let points = &self.points;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b))
            });
            let left = self.build_node(start, mid);
            let right = self.build_node(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    /// Indices of all points within `radius` of `center` (inclusive), sorted.
    pub fn within_radius(&self, center: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() || radius < 0.0 {
            return out;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bbox.distance(center) > radius {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        if (self.points[i] - center).norm_squared() <= r2 {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn ball_query_matches_brute_force() {
        let mut rng = crate::rng::stream(1, "kdtree", 0);
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..1.0)))
            .collect();
        let tree = KdTree::build(&pts);
        for _ in 0..50 {
            let c = Vec3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-1.0..2.0));
            let r = rng.random_range(0.0..3.0);
            let brute: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - c).norm() <= r).collect();
            assert_eq!(tree.within_radius(&c, r), brute);
        }
    }

    #[test]
    fn empty_tree() {
        let tree = KdTree::build(&[]);
        assert!(tree.within_radius(&Vec3::zeros(), 10.0).is_empty());
    }
}
