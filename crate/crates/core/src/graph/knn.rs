//! Exact k-nearest-neighbour graph over points via a uniform bucket grid.

use std::collections::BinaryHeap;

/// Candidate ordered by `(squared distance, id)`; the heap keeps the worst on top.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    d2: f64,
    id: usize,
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2.total_cmp(&other.d2).then(self.id.cmp(&other.id))
    }
}

struct Buckets {
    x0: f64,
    y0: f64,
    bw: f64,
    bh: f64,
    nx: usize,
    ny: usize,
    /// CSR layout: `members[start[b]..start[b+1]]`, ids ascending.
    start: Vec<usize>,
    members: Vec<usize>,
}

impl Buckets {
    fn new(points: &[(f64, f64)]) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        // about two points per bucket
        let side = ((points.len() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (side, side);
        let bw = ((x1 - x0) / nx as f64).max(f64::MIN_POSITIVE);
        let bh = ((y1 - y0) / ny as f64).max(f64::MIN_POSITIVE);
        let mut b = Buckets {
            x0,
            y0,
            bw,
            bh,
            nx,
            ny,
            start: vec![0; nx * ny + 1],
            members: vec![0; points.len()],
        };
        let keys: Vec<usize> = points.iter().map(|&(x, y)| b.key(x, y)).collect();
        for &k in &keys {
            b.start[k + 1] += 1;
        }
        for i in 0..nx * ny {
            b.start[i + 1] += b.start[i];
        }
        let mut fill = b.start.clone();
        for (id, &k) in keys.iter().enumerate() {
            b.members[fill[k]] = id;
            fill[k] += 1;
        }
        b
    }

    fn cell(&self, x: f64, y: f64) -> (usize, usize) {
        let cx = (((x - self.x0) / self.bw).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = (((y - self.y0) / self.bh).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn key(&self, x: f64, y: f64) -> usize {
        let (cx, cy) = self.cell(x, y);
        cy * self.nx + cx
    }

    fn bucket(&self, cx: usize, cy: usize) -> &[usize] {
        let k = cy * self.nx + cx;
        &self.members[self.start[k]..self.start[k + 1]]
    }

    /// Lower bound on the distance from `(x, y)` to any point outside the
    /// square of buckets within Chebyshev radius `r` of its own bucket.
    fn outside_bound(&self, x: f64, y: f64, cx: usize, cy: usize, r: usize) -> f64 {
        let mut bound = f64::INFINITY;
        if cx > r {
            bound = bound.min(x - (self.x0 + (cx - r) as f64 * self.bw));
        }
        if cx + r + 1 < self.nx {
            bound = bound.min(self.x0 + (cx + r + 1) as f64 * self.bw - x);
        }
        if cy > r {
            bound = bound.min(y - (self.y0 + (cy - r) as f64 * self.bh));
        }
        if cy + r + 1 < self.ny {
            bound = bound.min(self.y0 + (cy + r + 1) as f64 * self.bh - y);
        }
        bound.max(0.0)
    }
}

/// Symmetrised k-NN graph: every point links to its `k` nearest others
/// (Euclidean, ties to the lower id) and each link is added in both
/// directions. Returns sorted, de-duplicated directed pairs.
pub fn knn_edges(points: &[(f64, f64)], k: usize) -> Vec<(usize, usize)> {
    let n = points.len();
    if k == 0 || n < 2 {
        return Vec::new();
    }
    let k = k.min(n - 1);
    let b = Buckets::new(points);
    let mut edges = Vec::with_capacity(2 * n * k);
    let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
    for (i, &(x, y)) in points.iter().enumerate() {
        heap.clear();
        let (cx, cy) = b.cell(x, y);
        let max_r = b.nx.max(b.ny);
        for r in 0..=max_r {
            let (lx, hx) = (cx.saturating_sub(r), (cx + r).min(b.nx - 1));
            let (ly, hy) = (cy.saturating_sub(r), (cy + r).min(b.ny - 1));
            for by in ly..=hy {
                for bx in lx..=hx {
                    // only the ring at Chebyshev distance r
                    if bx.abs_diff(cx) != r && by.abs_diff(cy) != r {
                        continue;
                    }
                    for &j in b.bucket(bx, by) {
                        if j == i {
                            continue;
                        }
                        let (dx, dy) = (points[j].0 - x, points[j].1 - y);
                        let c = Cand {
                            d2: dx * dx + dy * dy,
                            id: j,
                        };
                        if heap.len() < k {
                            heap.push(c);
                        } else if c < *heap.peek().unwrap() {
                            heap.pop();
                            heap.push(c);
                        }
                    }
                }
            }
            if heap.len() == k {
                let bound = b.outside_bound(x, y, cx, cy, r);
                if heap.peek().unwrap().d2 < bound * bound {
                    break;
                }
            }
        }
        for c in heap.drain() {
            edges.push((i, c.id));
            edges.push((c.id, i));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}
