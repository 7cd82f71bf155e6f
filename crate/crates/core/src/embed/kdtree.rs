//! Exact nearest-neighbour search over a fixed point set.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Chebyshev,
    Euclidean,
}

impl Metric {
    /// Distance in comparison form (squared for Euclidean).
    fn reduced(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Chebyshev => a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs())),
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        }
    }

    fn reduce_axis(self, gap: f64) -> f64 {
        match self {
            Metric::Chebyshev => gap.abs(),
            Metric::Euclidean => gap * gap,
        }
    }

    fn expand(self, reduced: f64) -> f64 {
        match self {
            Metric::Chebyshev => reduced,
            Metric::Euclidean => reduced.sqrt(),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.expand(self.reduced(a, b))
    }
}

const LEAF_SIZE: usize = 12;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    root: Node,
}

impl<'a> KdTree<'a> {
    /// `points` is row-major with `dim` columns.
    pub fn new(points: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len() % dim == 0, "point buffer is not a multiple of the dimension");
        let mut order: Vec<usize> = (0..points.len() / dim).collect();
        let n = order.len();
        let root = build(points, dim, &mut order, 0, n);
        Self { points, dim, order, root }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest point to `query` among indices accepted by `keep`, ignoring
    /// points within `min_dist` (pass a negative value to accept coincident
    /// points). Ties resolve to the lowest index.
    pub fn nearest(
        &self,
        query: &[f64],
        metric: Metric,
        min_dist: f64,
        keep: impl Fn(usize) -> bool,
    ) -> Option<(usize, f64)> {
        let mut best = (usize::MAX, f64::INFINITY);
        let floor = if min_dist < 0.0 { -1.0 } else { metric.reduce_axis(min_dist) };
        self.search(&self.root, query, metric, floor, &keep, &mut best);
        (best.0 != usize::MAX).then(|| (best.0, metric.expand(best.1)))
    }

    fn search(
        &self,
        node: &Node,
        q: &[f64],
        metric: Metric,
        floor: f64,
        keep: &impl Fn(usize) -> bool,
        best: &mut (usize, f64),
    ) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if !keep(i) {
                        continue;
                    }
                    let d = metric.reduced(q, self.point(i));
                    if d <= floor {
                        continue;
                    }
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let gap = q[*axis] - value;
                let (near, far) = if gap <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, metric, floor, keep, best);
                if metric.reduce_axis(gap) <= best.1 {
                    self.search(far, q, metric, floor, keep, best);
                }
            }
        }
    }
}

fn build(points: &[f64], dim: usize, order: &mut [usize], start: usize, end: usize) -> Node {
    if end - start <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    let slice = &mut order[start..end];
    let axis = (0..dim)
        .map(|a| {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = points[i * dim + a];
                (lo.min(v), hi.max(v))
            });
            (a, hi - lo)
        })
        .fold((0, -1.0), |acc, (a, spread)| if spread > acc.1 { (a, spread) } else { acc })
        .0;
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points[a * dim + axis].total_cmp(&points[b * dim + axis]).then(a.cmp(&b))
    });
    let value = points[slice[mid] * dim + axis];
    // left holds indices < mid (values ≤ value), right the rest (values ≥ value)
    let split = start + mid;
    Node::Split {
        axis,
        value,
        left: Box::new(build(points, dim, order, start, split)),
        right: Box::new(build(points, dim, order, split, end)),
    }
}
