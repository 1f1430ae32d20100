use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

use crate::exec::Execution;

const LEAF_SIZE: usize = 8;

/// A query result. Among equidistant points the lowest index wins, so results
/// match a brute-force scan exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist_sq.total_cmp(&other.dist_sq).then(self.index.cmp(&other.index))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact nearest-neighbour index over a fixed 3D point set (median-split k-d tree).
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut tree = KdTree { points: points.to_vec(), order: (0..points.len()).collect(), nodes: Vec::new() };
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

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let (mut lo, mut hi) = (self.points[self.order[start]], self.points[self.order[start]]);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn nearest(&self, q: &Vector3<f64>) -> Option<Neighbor> {
        if self.is_empty() {
            return None;
        }
        let mut best = Neighbor { index: usize::MAX, dist_sq: f64::INFINITY };
        self.nearest_in(0, q, &mut best);
        Some(best)
    }

    fn nearest_in(&self, node: usize, q: &Vector3<f64>, best: &mut Neighbor) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Neighbor { index: i, dist_sq: (self.points[i] - q).norm_squared() };
                    if cand < *best {
                        *best = cand;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near, q, best);
                if diff * diff <= best.dist_sq {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }

    /// The `k` nearest points sorted by distance (fewer if the set is smaller).
    pub fn k_nearest(&self, q: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
        if self.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.k_nearest_in(0, q, k, &mut heap);
        heap.into_sorted_vec()
    }

    fn k_nearest_in(&self, node: usize, q: &Vector3<f64>, k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Neighbor { index: i, dist_sq: (self.points[i] - q).norm_squared() };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.k_nearest_in(near, q, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist_sq {
                    self.k_nearest_in(far, q, k, heap);
                }
            }
        }
    }

    /// Nearest neighbour of every query, in query order.
    pub fn nearest_batch(&self, queries: &[Vector3<f64>], exec: Execution) -> Vec<Neighbor> {
        assert!(!self.is_empty(), "nearest-neighbour query on an empty index");
        exec.map_slice(queries, |q| self.nearest(q).expect("non-empty index"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vector3<f64>], q: &Vector3<f64>) -> Neighbor {
        points
            .iter()
            .enumerate()
            .map(|(index, p)| Neighbor { index, dist_sq: (p - q).norm_squared() })
            .min()
            .unwrap()
    }

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n).map(|_| Vector3::new(rng.random(), rng.random::<f64>() * 2.0, rng.random::<f64>() * 0.5)).collect()
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let n = rng.random_range(1..2000);
            let pts = cloud(&mut rng, n);
            let tree = KdTree::build(&pts);
            let queries = cloud(&mut rng, 50);
            for q in &queries {
                assert_eq!(tree.nearest(q).unwrap(), brute(&pts, q), "trial {trial}");
            }
        }
    }

    #[test]
    fn k_nearest_matches_sorted_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts = cloud(&mut rng, 500);
        let tree = KdTree::build(&pts);
        for q in cloud(&mut rng, 20) {
            let mut all: Vec<Neighbor> = pts
                .iter()
                .enumerate()
                .map(|(index, p)| Neighbor { index, dist_sq: (p - q).norm_squared() })
                .collect();
            all.sort();
            assert_eq!(tree.k_nearest(&q, 7), all[..7].to_vec());
        }
        assert_eq!(tree.k_nearest(&Vector3::zeros(), 1000).len(), 500);
    }

    #[test]
    fn duplicates_resolve_to_lowest_index() {
        let pts = vec![Vector3::new(1.0, 0.0, 0.0); 20];
        let tree = KdTree::build(&pts);
        assert_eq!(tree.nearest(&Vector3::zeros()).unwrap().index, 0);
    }

    #[test]
    fn empty_tree() {
        let tree = KdTree::build(&[]);
        assert!(tree.nearest(&Vector3::zeros()).is_none());
        assert!(tree.k_nearest(&Vector3::zeros(), 3).is_empty());
    }
}
