//! Minimum spanning trees over D(q,s), tree metrics, and graph distances
//! between trees on a shared node set.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rhoq::QDistMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Kruskal over a dense symmetric weight matrix. Ties are broken by
/// `(weight, min(i,j), max(i,j))`.
pub fn minimum_spanning_tree(weights: &[Vec<f64>]) -> Result<Vec<MstEdge>> {
    let n = weights.len();
    if n < 2 {
        return Err(Error::Data(format!("spanning tree needs N >= 2, got {n}")));
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        if weights[i].len() != n {
            return Err(Error::Data("distance matrix is not square".into()));
        }
        for j in (i + 1)..n {
            let w = weights[i][j];
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Data(format!("invalid distance {w} at ({i}, {j})")));
            }
            if weights[j][i] != w {
                return Err(Error::Data(format!("distance matrix not symmetric at ({i}, {j})")));
            }
            edges.push(MstEdge { i, j, w });
        }
    }
    edges.sort_by(|a, b| a.w.total_cmp(&b.w).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
    let mut uf = UnionFind::new(n);
    let mut tree = Vec::with_capacity(n - 1);
    for e in edges {
        if uf.union(e.i, e.j) {
            tree.push(e);
            if tree.len() == n - 1 {
                break;
            }
        }
    }
    Ok(tree)
}

/// A spanning tree over labelled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QMst {
    assets: Vec<String>,
    edges: Vec<MstEdge>,
    neighbours: Vec<Vec<usize>>,
}

impl QMst {
    /// Builds a tree from an edge list, checking it spans all nodes without cycles.
    pub fn from_edges(assets: Vec<String>, edges: Vec<MstEdge>) -> Result<Self> {
        let n = assets.len();
        if n < 2 {
            return Err(Error::Data(format!("tree needs N >= 2 nodes, got {n}")));
        }
        if edges.len() != n - 1 {
            return Err(Error::Data(format!(
                "tree on {n} nodes needs {} edges, got {}",
                n - 1,
                edges.len()
            )));
        }
        let mut uf = UnionFind::new(n);
        let mut neighbours = vec![Vec::new(); n];
        for e in &edges {
            if e.i >= n || e.j >= n || e.i == e.j {
                return Err(Error::Data(format!("invalid edge ({}, {})", e.i, e.j)));
            }
            if !uf.union(e.i, e.j) {
                return Err(Error::Data(format!("edge ({}, {}) closes a cycle", e.i, e.j)));
            }
            neighbours[e.i].push(e.j);
            neighbours[e.j].push(e.i);
        }
        neighbours.iter_mut().for_each(|v| v.sort_unstable());
        Ok(Self {
            assets,
            edges,
            neighbours,
        })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn edges(&self) -> &[MstEdge] {
        &self.edges
    }

    pub fn n(&self) -> usize {
        self.assets.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbours.iter().map(Vec::len).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).sum()
    }

    /// Binary symmetric adjacency matrix.
    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut a = vec![vec![0.0; n]; n];
        for e in &self.edges {
            a[e.i][e.j] = 1.0;
            a[e.j][e.i] = 1.0;
        }
        a
    }

    /// Hop counts along the unique tree paths.
    pub fn hop_distances(&self) -> Vec<Vec<usize>> {
        (0..self.n()).map(|src| bfs(&self.neighbours, src)).collect()
    }

    pub fn to_json(&self) -> TreeJson {
        TreeJson {
            assets: self.assets.clone(),
            edges: self.edges.clone(),
        }
    }

    /// Graph-description text with one node statement per asset and one edge
    /// statement per tree edge. The sector label, when known, is both a node
    /// attribute and the fill-colour key.
    pub fn to_dot(&self, sectors: Option<&[String]>) -> String {
        const PALETTE: [&str; 12] = [
            "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
        ];
        let mut colour_of: BTreeMap<&str, &str> = BTreeMap::new();
        let mut out = String::from("graph qmst {\n  node [style=filled];\n");
        for (i, a) in self.assets.iter().enumerate() {
            match sectors.and_then(|s| s.get(i)) {
                Some(sector) => {
                    let next = PALETTE[colour_of.len() % PALETTE.len()];
                    let colour = *colour_of.entry(sector.as_str()).or_insert(next);
                    let _ = writeln!(
                        out,
                        "  n{i} [label={}, sector={}, fillcolor=\"{colour}\"];",
                        quote(a),
                        quote(sector)
                    );
                }
                None => {
                    let _ = writeln!(out, "  n{i} [label={}];", quote(a));
                }
            }
        }
        for e in &self.edges {
            let _ = writeln!(out, "  n{} -- n{} [weight={}];", e.i, e.j, e.w);
        }
        out.push_str("}\n");
        out
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn bfs(neighbours: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; neighbours.len()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &v in &neighbours[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// JSON edge-list form `{assets, edges: [{i, j, w}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    pub assets: Vec<String>,
    pub edges: Vec<MstEdge>,
}

impl TreeJson {
    pub fn into_tree(self) -> Result<QMst> {
        QMst::from_edges(self.assets, self.edges)
    }
}

pub fn build_mst(d: &QDistMatrix) -> Result<QMst> {
    if d.values.len() != d.assets.len() {
        return Err(Error::Data("distance matrix size does not match labels".into()));
    }
    for (i, row) in d.values.iter().enumerate() {
        if row.get(i).copied() != Some(0.0) {
            return Err(Error::Data(format!("distance diagonal nonzero at {i}")));
        }
    }
    let edges = minimum_spanning_tree(&d.values)?;
    QMst::from_edges(d.assets.clone(), edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeMetrics {
    pub k_max: usize,
    pub k_argmax: String,
    /// Mean hop count over unordered node pairs.
    pub avg_path_len: f64,
    pub diameter: usize,
}

pub fn tree_metrics(t: &QMst) -> TreeMetrics {
    let degrees = t.degrees();
    let k_max = degrees.iter().copied().max().unwrap_or(0);
    let k_argmax = t
        .assets
        .iter()
        .zip(&degrees)
        .filter(|(_, &k)| k == k_max)
        .map(|(a, _)| a)
        .min()
        .cloned()
        .unwrap_or_default();
    let hops = t.hop_distances();
    let n = t.n();
    let mut total = 0usize;
    let mut diameter = 0usize;
    for (i, row) in hops.iter().enumerate() {
        for &h in &row[(i + 1)..] {
            total += h;
            diameter = diameter.max(h);
        }
    }
    let pairs = n * (n - 1) / 2;
    TreeMetrics {
        k_max,
        k_argmax,
        avg_path_len: total as f64 / pairs as f64,
        diameter,
    }
}

fn check_adjacency(a: &[Vec<f64>]) -> Result<()> {
    let n = a.len();
    for (i, row) in a.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Data("adjacency matrix is not square".into()));
        }
        if row[i] != 0.0 {
            return Err(Error::Data(format!("adjacency has a self-loop at {i}")));
        }
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                return Err(Error::Data(format!("adjacency entry {v} at ({i}, {j}) is not binary")));
            }
            if a[j][i] != v {
                return Err(Error::Data(format!("adjacency not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

fn check_pair(a1: &[Vec<f64>], a2: &[Vec<f64>]) -> Result<()> {
    if a1.len() != a2.len() {
        return Err(Error::Data(format!(
            "graphs differ in size ({} vs {})",
            a1.len(),
            a2.len()
        )));
    }
    check_adjacency(a1)?;
    check_adjacency(a2)
}

fn max_degree(a: &[Vec<f64>]) -> f64 {
    a.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max)
}

/// Fast-belief-propagation affinity `(I + ε² D − ε A)⁻¹`.
pub fn affinity(a: &[Vec<f64>], eps: f64) -> Result<DMatrix<f64>> {
    let n = a.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 + eps * eps * a[i].iter().sum::<f64>()
        } else {
            -eps * a[i][j]
        }
    });
    m.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Defect(format!("affinity system singular at eps = {eps}")))
}

/// DeltaCon0: root Euclidean distance between element-wise square roots of
/// the two affinity matrices, with `ε = 1 / (1 + max degree)`.
pub fn deltacon0(a1: &[Vec<f64>], a2: &[Vec<f64>]) -> Result<f64> {
    check_pair(a1, a2)?;
    let eps = 1.0 / (1.0 + max_degree(a1).max(max_degree(a2)));
    let s1 = affinity(a1, eps)?;
    let s2 = affinity(a2, eps)?;
    let sum: f64 = s1
        .iter()
        .zip(s2.iter())
        .map(|(x, y)| {
            // an M-matrix inverse is non-negative; clip rounding below zero
            let d = x.max(0.0).sqrt() - y.max(0.0).sqrt();
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// Effective resistances `R_ij = L⁺_ii + L⁺_jj − 2 L⁺_ij` of a connected
/// unit-weight graph, with `L⁺ = (L + J/n)⁻¹ − J/n`.
pub fn effective_resistance(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_adjacency(a)?;
    let n = a.len();
    if n == 0 {
        return Err(Error::Data("empty graph".into()));
    }
    let neighbours: Vec<Vec<usize>> = a
        .iter()
        .map(|r| r.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, _)| j).collect())
        .collect();
    if bfs(&neighbours, 0).contains(&usize::MAX) {
        return Err(Error::Data("graph is disconnected".into()));
    }
    let inv_n = 1.0 / n as f64;
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let l = if i == j { neighbours[i].len() as f64 } else { -a[i][j] };
        l + inv_n
    });
    let inv = shifted
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Defect("shifted Laplacian is singular".into()))?;
    let pinv = inv.map(|v| v - inv_n);
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        pinv[(i, i)] + pinv[(j, j)] - 2.0 * pinv[(i, j)]
                    }
                })
                .collect()
        })
        .collect())
}

/// Resistance-perturbation distance `Σ_{i<j} |R1_ij − R2_ij|`.
pub fn resistance_distance(a1: &[Vec<f64>], a2: &[Vec<f64>]) -> Result<f64> {
    check_pair(a1, a2)?;
    let r1 = effective_resistance(a1)?;
    let r2 = effective_resistance(a2)?;
    let n = a1.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += (r1[i][j] - r2[i][j]).abs();
        }
    }
    Ok(total)
}
