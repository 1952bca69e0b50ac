//! Correlation-driven feature ordering.
//!
//! Features are nodes of a complete graph weighted by |Pearson r|. A maximum
//! spanning tree keeps the strongest m-1 links, and a depth-first walk over
//! that tree yields a permutation in which strongly correlated features sit
//! next to each other. The permutation is then cut into two contiguous
//! halves, one per branch.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{LoclError, Result};
use crate::matrix::Matrix;
use crate::rng::{self, tag};

/// Symmetric matrix of Pearson coefficients with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix(pub Matrix);

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.0.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Wrap an arbitrary symmetric matrix; diagonal is forced to 1.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(LoclError::shape(format!(
                "correlation matrix must be square, got {:?}",
                m.shape()
            )));
        }
        let mut m = m;
        for i in 0..m.rows() {
            m[(i, i)] = 1.0;
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] || !m[(i, j)].is_finite() {
                    return Err(LoclError::invalid(format!(
                        "correlation matrix not symmetric and finite at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(CorrelationMatrix(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingVariant {
    #[default]
    Mst,
    Random,
    Original,
    Interleaved,
}

impl std::str::FromStr for OrderingVariant {
    type Err = LoclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mst" => Ok(OrderingVariant::Mst),
            "random" => Ok(OrderingVariant::Random),
            "original" => Ok(OrderingVariant::Original),
            "interleaved" => Ok(OrderingVariant::Interleaved),
            other => Err(LoclError::invalid(format!("unknown ordering variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for OrderingVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OrderingVariant::Mst => "mst",
            OrderingVariant::Random => "random",
            OrderingVariant::Original => "original",
            OrderingVariant::Interleaved => "interleaved",
        })
    }
}

/// Undirected tree edge, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(i: usize, j: usize, weight: f64) -> Self {
        Edge {
            a: i.min(j),
            b: i.max(j),
            weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOrdering {
    pub permutation: Vec<usize>,
    /// Empty unless `variant` is `Mst`.
    pub mst_edges: Vec<Edge>,
    pub variant: OrderingVariant,
}

/// The two feature-index subsets fed to the twin branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub subset1: Vec<usize>,
    pub subset2: Vec<usize>,
    pub overlap_fraction: f64,
}

/// Pearson correlation with population moments. Each pair is summed in row
/// order so the result does not depend on how pairs are scheduled.
pub fn pearson_matrix(x: &Matrix) -> CorrelationMatrix {
    let (n, m) = x.shape();
    let mut centered = x.transpose();
    let mut norms = vec![0.0; m];
    for (j, norm) in norms.iter_mut().enumerate() {
        let col = centered.row_mut(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        col.iter_mut().for_each(|v| *v -= mean);
        *norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let mut c = Matrix::identity(m);
    for i in 0..m {
        for j in 0..i {
            let dot: f64 = centered
                .row(i)
                .iter()
                .zip(centered.row(j))
                .map(|(a, b)| a * b)
                .sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            c[(i, j)] = r;
            c[(j, i)] = r;
        }
    }
    CorrelationMatrix(c)
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Maximum spanning tree over |M| (Kruskal). Equal weights are taken in
/// ascending `(min(i,j), max(i,j))` order, which makes the tree unique.
pub fn build_mst(c: &CorrelationMatrix) -> Result<Vec<Edge>> {
    let m = c.size();
    if m < 2 {
        return Err(LoclError::invalid(format!(
            "spanning tree needs at least 2 features, got {m}"
        )));
    }
    let mut candidates = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            candidates.push(Edge::new(i, j, c.get(i, j).abs()));
        }
    }
    candidates.sort_by(|x, y| {
        y.weight
            .total_cmp(&x.weight)
            .then_with(|| (x.a, x.b).cmp(&(y.a, y.b)))
    });
    let mut dsu = DisjointSet::new(m);
    let mut tree = Vec::with_capacity(m - 1);
    for e in candidates {
        if dsu.union(e.a, e.b) {
            tree.push(e);
            if tree.len() == m - 1 {
                break;
            }
        }
    }
    Ok(tree)
}

/// Depth-first visit order of a spanning tree.
///
/// The walk starts at an endpoint of the heaviest edge: the endpoint whose
/// incident tree edges weigh more in total, lower index on ties. Children
/// are visited heaviest edge first (lower index on ties).
pub fn dfs_order(edges: &[Edge], m: usize) -> Result<FeatureOrdering> {
    if m < 2 {
        return Err(LoclError::invalid("ordering needs at least 2 features"));
    }
    if edges.len() != m - 1 {
        return Err(LoclError::NotSpanningTree(format!(
            "{} edges for {m} nodes",
            edges.len()
        )));
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut incident = vec![0.0; m];
    for e in edges {
        if e.a >= m || e.b >= m || e.a == e.b {
            return Err(LoclError::NotSpanningTree(format!(
                "invalid edge ({}, {})",
                e.a, e.b
            )));
        }
        adj[e.a].push((e.b, e.weight));
        adj[e.b].push((e.a, e.weight));
        incident[e.a] += e.weight;
        incident[e.b] += e.weight;
    }
    for nbrs in &mut adj {
        nbrs.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    }

    let top = edges
        .iter()
        .min_by(|x, y| {
            y.weight
                .total_cmp(&x.weight)
                .then_with(|| (x.a, x.b).cmp(&(y.a, y.b)))
        })
        .expect("m >= 2 implies at least one edge");
    let root = if incident[top.b] > incident[top.a] {
        top.b
    } else {
        top.a
    };

    let mut visited = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if visited[node] {
            continue;
        }
        visited[node] = true;
        order.push(node);
        // Reverse so the heaviest child is popped first.
        for &(next, _) in adj[node].iter().rev() {
            if !visited[next] {
                stack.push(next);
            }
        }
    }
    if order.len() != m {
        return Err(LoclError::NotSpanningTree(format!(
            "only {} of {m} nodes reachable",
            order.len()
        )));
    }
    Ok(FeatureOrdering {
        permutation: order,
        mst_edges: edges.to_vec(),
        variant: OrderingVariant::Mst,
    })
}

/// MST ordering of a correlation matrix.
pub fn mst_order(c: &CorrelationMatrix) -> Result<FeatureOrdering> {
    let edges = build_mst(c)?;
    dfs_order(&edges, c.size())
}

/// Baseline orderings used by the ablations.
pub fn alternative_order(
    m: usize,
    variant: OrderingVariant,
    seed: u64,
) -> Result<FeatureOrdering> {
    if m < 2 {
        return Err(LoclError::invalid("ordering needs at least 2 features"));
    }
    let permutation = match variant {
        OrderingVariant::Original => (0..m).collect(),
        OrderingVariant::Interleaved => (0..m).step_by(2).chain((1..m).step_by(2)).collect(),
        OrderingVariant::Random => {
            let mut p: Vec<usize> = (0..m).collect();
            p.shuffle(&mut rng::stream(seed, &[tag::ORDER]));
            p
        }
        OrderingVariant::Mst => {
            return Err(LoclError::invalid(
                "mst ordering needs a correlation matrix; use mst_order",
            ))
        }
    };
    Ok(FeatureOrdering {
        permutation,
        mst_edges: Vec::new(),
        variant,
    })
}

/// Compute an ordering of any variant from feature data.
pub fn order_features(x: &Matrix, variant: OrderingVariant, seed: u64) -> Result<FeatureOrdering> {
    match variant {
        OrderingVariant::Mst => mst_order(&pearson_matrix(x)),
        other => alternative_order(x.cols(), other, seed),
    }
}

/// Cut a permutation into two contiguous halves, each widened by
/// `floor(overlap_fraction * m)` features towards the middle.
pub fn split_features(o: &FeatureOrdering, overlap_fraction: f64) -> Result<SplitPlan> {
    let m = o.permutation.len();
    if m < 2 {
        return Err(LoclError::invalid("split needs at least 2 features"));
    }
    if !(0.0..=0.5).contains(&overlap_fraction) {
        return Err(LoclError::invalid(format!(
            "overlap fraction {overlap_fraction} outside [0, 0.5]"
        )));
    }
    let extra = (overlap_fraction * m as f64 + 1e-9).floor() as usize;
    let size1 = m.div_ceil(2) + extra;
    let size2 = m / 2 + extra;
    if size1 >= m || size2 >= m {
        return Err(LoclError::invalid(format!(
            "overlap {overlap_fraction} makes a subset cover all {m} features"
        )));
    }
    Ok(SplitPlan {
        subset1: o.permutation[..size1].to_vec(),
        subset2: o.permutation[m - size2..].to_vec(),
        overlap_fraction,
    })
}

/// Mean |M| between features that are adjacent in `permutation`.
pub fn adjacency_score(c: &CorrelationMatrix, permutation: &[usize]) -> f64 {
    if permutation.len() < 2 {
        return 0.0;
    }
    let total: f64 = permutation
        .windows(2)
        .map(|w| c.get(w[0], w[1]).abs())
        .sum();
    total / (permutation.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(entries: &[(usize, usize, f64)], m: usize) -> CorrelationMatrix {
        let mut c = Matrix::identity(m);
        for &(i, j, w) in entries {
            c[(i, j)] = w;
            c[(j, i)] = w;
        }
        CorrelationMatrix::from_matrix(c).unwrap()
    }

    #[test]
    fn pearson_perfect_relations() {
        let x = Matrix::from_rows(&[
            vec![1.0, 2.0, 4.0],
            vec![2.0, 4.0, 3.0],
            vec![3.0, 6.0, 2.0],
            vec![4.0, 8.0, 1.0],
        ])
        .unwrap();
        let c = pearson_matrix(&x);
        assert!((c.get(0, 1) - 1.0).abs() < 1e-15);
        assert!((c.get(0, 2) + 1.0).abs() < 1e-15);
        assert_eq!(c.get(2, 2), 1.0);
    }

    #[test]
    fn mst_two_nodes_and_triangle() {
        let c = corr(&[(0, 1, 0.3)], 2);
        assert_eq!(build_mst(&c).unwrap(), vec![Edge::new(0, 1, 0.3)]);

        let c = corr(&[(0, 1, 0.9), (1, 2, -0.8), (0, 2, 0.1)], 3);
        let tree = build_mst(&c).unwrap();
        let pairs: Vec<_> = tree.iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        let total: f64 = tree.iter().map(|e| e.weight).sum();
        assert!((total - 1.7).abs() < 1e-12);
    }

    #[test]
    fn mst_tie_break_prefers_smaller_pair() {
        let c = corr(&[(0, 1, 0.5), (1, 2, 0.5), (0, 2, 0.5)], 3);
        let pairs: Vec<_> = build_mst(&c).unwrap().iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2)]);
        assert!(build_mst(&corr(&[], 1)).is_err());
    }

    #[test]
    fn dfs_on_path_starts_at_denser_endpoint() {
        // Heaviest edge is (0,1); node 1 carries 0.9 + 0.8 of tree weight
        // against node 0's 0.9, so the walk starts at 1.
        let edges = [Edge::new(0, 1, 0.9), Edge::new(1, 2, 0.8)];
        assert_eq!(dfs_order(&edges, 3).unwrap().permutation, vec![1, 0, 2]);
    }

    #[test]
    fn dfs_on_star_visits_heaviest_leaf_first() {
        let edges = [
            Edge::new(0, 3, 0.3),
            Edge::new(0, 1, 0.9),
            Edge::new(0, 2, 0.5),
        ];
        assert_eq!(dfs_order(&edges, 4).unwrap().permutation, vec![0, 1, 2, 3]);
    }

    #[test]
    fn dfs_goes_deep_before_wide() {
        // 0-1 (0.9), 1-2 (0.2), 0-3 (0.8), 3-4 (0.7): root 0 (1.7 vs 1.1).
        let edges = [
            Edge::new(0, 1, 0.9),
            Edge::new(1, 2, 0.2),
            Edge::new(0, 3, 0.8),
            Edge::new(3, 4, 0.7),
        ];
        assert_eq!(dfs_order(&edges, 5).unwrap().permutation, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn dfs_small_and_invalid() {
        assert_eq!(
            dfs_order(&[Edge::new(0, 1, 0.1)], 2).unwrap().permutation,
            vec![0, 1]
        );
        let disconnected = [Edge::new(0, 1, 0.5), Edge::new(0, 1, 0.4)];
        assert!(matches!(
            dfs_order(&disconnected, 3),
            Err(LoclError::NotSpanningTree(_))
        ));
        assert!(dfs_order(&[Edge::new(0, 1, 0.5)], 3).is_err());
    }

    #[test]
    fn alternative_orders() {
        let p = |v, m| alternative_order(m, v, 9).unwrap().permutation;
        assert_eq!(p(OrderingVariant::Original, 4), vec![0, 1, 2, 3]);
        assert_eq!(p(OrderingVariant::Interleaved, 5), vec![0, 2, 4, 1, 3]);
        let r = p(OrderingVariant::Random, 10);
        assert_eq!(r, p(OrderingVariant::Random, 10));
        let mut sorted = r.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert!(alternative_order(4, OrderingVariant::Mst, 0).is_err());
    }

    fn identity(m: usize) -> FeatureOrdering {
        alternative_order(m, OrderingVariant::Original, 0).unwrap()
    }

    #[test]
    fn split_uniform_and_overlapping() {
        let s = split_features(&identity(7), 0.0).unwrap();
        assert_eq!(s.subset1, vec![0, 1, 2, 3]);
        assert_eq!(s.subset2, vec![4, 5, 6]);

        let s = split_features(&identity(10), 0.1).unwrap();
        assert_eq!(s.subset1, (0..6).collect::<Vec<_>>());
        assert_eq!(s.subset2, (4..10).collect::<Vec<_>>());

        let s = split_features(&identity(2), 0.0).unwrap();
        assert_eq!((s.subset1, s.subset2), (vec![0], vec![1]));
    }

    #[test]
    fn split_rejects_full_cover() {
        assert!(split_features(&identity(2), 0.5).is_err());
        assert!(split_features(&identity(10), 0.6).is_err());
        assert!(split_features(&identity(10), 0.4).is_ok());
        assert!(split_features(&identity(10), 0.5).is_err());
    }

    #[test]
    fn split_preserves_permutation_order() {
        let o = alternative_order(9, OrderingVariant::Interleaved, 0).unwrap();
        let s = split_features(&o, 0.0).unwrap();
        assert_eq!(s.subset1, vec![0, 2, 4, 6, 8]);
        assert_eq!(s.subset2, vec![1, 3, 5, 7]);
    }
}
