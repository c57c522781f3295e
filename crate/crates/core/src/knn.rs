//! Exact k-nearest-neighbor search over Euclidean distance.
//!
//! Results are ordered by `(distance, index)`, so ties always resolve to the
//! lower point index and the kd-tree agrees exactly with brute force.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// A kd-tree over a fixed set of reference points.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    dim: usize,
    data: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KnnIndex {
    pub fn build(points: &Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::arg("k-NN index needs a non-empty point set"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("k-NN index points must be finite"));
        }
        let dim = points.ncols();
        let data: Vec<f64> = points.iter().copied().collect();
        let mut index = Self {
            dim,
            data,
            order: (0..points.nrows()).collect(),
            nodes: Vec::new(),
        };
        index.grow(0, points.nrows());
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn coord(&self, i: usize, d: usize) -> f64 {
        self.data[i * self.dim + d]
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn grow(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for d in 0..self.dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = self.coord(i, d);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        let dim = best.0;
        if best.1 == 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let data = &self.data;
        let stride = self.dim;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data[a * stride + dim].total_cmp(&data[b * stride + dim])
        });
        let value = self.coord(self.order[mid], dim);
        self.nodes.push(Node::Leaf { start, end });
        let left = self.grow(start, mid);
        let right = self.grow(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest reference points to `x`, nearest first.
    pub fn query(&self, x: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if x.len() != self.dim {
            return Err(Error::arg(format!(
                "query has dimension {}, index has {}",
                x.len(),
                self.dim
            )));
        }
        if k == 0 || k > self.len() {
            return Err(Error::arg(format!("k = {k} must lie in [1, {}]", self.len())));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, x, k, &mut heap);
        Ok(finish(heap))
    }

    fn offer(&self, i: usize, x: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        let c = Candidate {
            dist2: sq_dist(self.point(i), x),
            index: i,
        };
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().expect("non-empty") {
            heap.pop();
            heap.push(c);
        }
    }

    fn search(&self, node: usize, x: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    self.offer(i, x, k, heap);
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = x[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, x, k, heap);
                let bound = diff * diff;
                if heap.len() < k || bound <= heap.peek().expect("non-empty").dist2 {
                    self.search(far, x, k, heap);
                }
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn finish(heap: BinaryHeap<Candidate>) -> Vec<Neighbor> {
    heap.into_sorted_vec()
        .into_iter()
        .map(|c| Neighbor {
            index: c.index,
            distance: c.dist2.sqrt(),
        })
        .collect()
}

/// Reference scan over every point; same ordering contract as [`KnnIndex::query`].
pub fn brute_force(points: &Array2<f64>, x: &[f64], k: usize) -> Result<Vec<Neighbor>> {
    if k == 0 || k > points.nrows() {
        return Err(Error::arg(format!("k = {k} must lie in [1, {}]", points.nrows())));
    }
    let mut all: Vec<Candidate> = points
        .rows()
        .into_iter()
        .enumerate()
        .map(|(index, r)| Candidate {
            dist2: r.iter().zip(x).map(|(p, q)| (p - q) * (p - q)).sum(),
            index,
        })
        .collect();
    all.sort();
    all.truncate(k);
    Ok(finish(all.into_iter().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{uniform_sample, DomainBox};
    use proptest::prelude::*;

    #[test]
    fn matches_brute_force() {
        let dom = DomainBox::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let pts = uniform_sample(&dom, 500, 1).unwrap();
        let idx = KnnIndex::build(&pts).unwrap();
        let qs = uniform_sample(&dom, 50, 2).unwrap();
        for q in qs.rows() {
            let q = q.to_vec();
            assert_eq!(idx.query(&q, 7).unwrap(), brute_force(&pts, &q, 7).unwrap());
        }
    }

    #[test]
    fn ties_break_by_index() {
        // a lattice has many equidistant neighbors
        let pts = Array2::from_shape_fn((100, 2), |(i, d)| if d == 0 { (i % 10) as f64 } else { (i / 10) as f64 });
        let idx = KnnIndex::build(&pts).unwrap();
        let got = idx.query(&[4.5, 4.5], 4).unwrap();
        let ids: Vec<usize> = got.iter().map(|n| n.index).collect();
        assert_eq!(ids, vec![44, 45, 54, 55]);
        let got = idx.query(&[3.0, 3.0], 3).unwrap();
        let ids: Vec<usize> = got.iter().map(|n| n.index).collect();
        assert_eq!(ids, vec![33, 23, 32]);
    }

    #[test]
    fn duplicate_points_are_handled() {
        let pts = Array2::from_elem((40, 2), 0.5);
        let idx = KnnIndex::build(&pts).unwrap();
        let ids: Vec<usize> = idx.query(&[0.5, 0.5], 5).unwrap().iter().map(|n| n.index).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_k() {
        let pts = Array2::zeros((3, 1));
        let idx = KnnIndex::build(&pts).unwrap();
        assert!(idx.query(&[0.0], 4).is_err());
        assert!(idx.query(&[0.0], 0).is_err());
    }

    proptest! {
        #[test]
        fn tree_equals_scan(seed in 0u64..1000, k in 1usize..20) {
            let dom = DomainBox::new(vec![-1.0; 2], vec![1.0; 2]).unwrap();
            // coarse rounding forces plenty of exact ties
            let pts = uniform_sample(&dom, 120, seed).unwrap().mapv(|v| (v * 4.0).round() / 4.0);
            let idx = KnnIndex::build(&pts).unwrap();
            let q = [0.1, -0.3];
            prop_assert_eq!(idx.query(&q, k).unwrap(), brute_force(&pts, &q, k).unwrap());
        }
    }
}
