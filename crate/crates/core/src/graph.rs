//! Weighted undirected graphs and their discrete calculus.
//!
//! Edges are stored once, oriented from the smaller to the larger vertex
//! index. Values of an [`EdgeField`] on the reversed orientation are obtained
//! by negation, so antisymmetry holds structurally rather than numerically.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// JSON form of a graph: `{"n": 3, "edges": [{"i": 0, "j": 1, "w": 1.0}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// An undirected edge `i < j` with weight `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
    pub sqrt_w: f64,
}

/// The stationary "volume" vector of the graph: normalized weighted degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeVector(DVector<f64>);

impl VolumeVector {
    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// An antisymmetric function on the edge set, one value per undirected edge
/// in the `i < j` orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    values: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(edge_count: usize) -> Self {
        Self {
            values: vec![0.0; edge_count],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Value on edge `e` in its stored orientation.
    pub fn oriented(&self, e: usize) -> f64 {
        self.values[e]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Value `v_ij` on the ordered pair `(i, j)`, or `None` if `(i, j)` is not an edge.
    pub fn get(&self, graph: &WeightedGraph, i: usize, j: usize) -> Option<f64> {
        let e = graph.edge_index(i, j)?;
        let v = self.values[e];
        Some(if i < j { v } else { -v })
    }
}

/// A connected weighted undirected graph with zero diagonal.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    weights: DMatrix<f64>,
    /// `adjacency[i]` lists `(neighbor, edge index)` pairs.
    adjacency: Vec<Vec<(usize, usize)>>,
    lookup: BTreeMap<(usize, usize), usize>,
    volume: VolumeVector,
}

impl WeightedGraph {
    /// Builds a graph from an edge list, rejecting self loops, duplicate
    /// edges, non-positive weights and disconnected vertex sets.
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 vertices, got {n}")));
        }
        let mut lookup = BTreeMap::new();
        let mut list: Vec<Edge> = Vec::with_capacity(edges.len());
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a vertex outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self loop at vertex {a}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has non-positive or non-finite weight {w}"
                )));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if lookup.contains_key(&(i, j)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            lookup.insert((i, j), usize::MAX);
            list.push(Edge {
                i,
                j,
                w,
                sqrt_w: w.sqrt(),
            });
        }
        list.sort_by_key(|e| (e.i, e.j));

        let mut weights = DMatrix::zeros(n, n);
        let mut adjacency = vec![Vec::new(); n];
        for (idx, e) in list.iter().enumerate() {
            lookup.insert((e.i, e.j), idx);
            weights[(e.i, e.j)] = e.w;
            weights[(e.j, e.i)] = e.w;
            adjacency[e.i].push((e.j, idx));
            adjacency[e.j].push((e.i, idx));
        }
        for row in adjacency.iter_mut() {
            row.sort_unstable();
        }

        check_connected(&adjacency)?;

        // Each undirected edge appears twice in the ordered-pair sum.
        let total: f64 = 2.0 * list.iter().map(|e| e.w).sum::<f64>();
        let volume = VolumeVector(DVector::from_fn(n, |i, _| {
            adjacency[i].iter().map(|&(_, e)| list[e].w).sum::<f64>() / total
        }));

        Ok(Self {
            n,
            edges: list,
            weights,
            adjacency,
            lookup,
            volume,
        })
    }

    pub fn from_spec(spec: &GraphSpec) -> Result<Self> {
        let edges: Vec<_> = spec.edges.iter().map(|e| (e.i, e.j, e.w)).collect();
        Self::new(spec.n, &edges)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: GraphSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            n: self.n,
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec { i: e.i, j: e.j, w: e.w })
                .collect(),
        }
    }

    /// Two vertices joined by a single edge of weight `w`.
    pub fn two_point(w: f64) -> Result<Self> {
        Self::new(2, &[(0, 1, w)])
    }

    /// Complete graph on `n` vertices with unit weights.
    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, 1.0));
            }
        }
        Self::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.lookup.get(&key).copied()
    }

    pub fn volume(&self) -> &VolumeVector {
        &self.volume
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    /// `(∇Φ)_ij = √ω_ij (Φ_j − Φ_i)`.
    pub fn gradient(&self, phi: &DVector<f64>) -> Result<EdgeField> {
        self.check_len(phi.len())?;
        Ok(EdgeField::from_values(
            self.edges
                .iter()
                .map(|e| e.sqrt_w * (phi[e.j] - phi[e.i]))
                .collect(),
        ))
    }

    /// `div(v)_i = Σ_{j∈N(i)} √ω_ij v_ij`.
    pub fn divergence(&self, field: &EdgeField) -> Result<DVector<f64>> {
        if field.values.len() != self.edges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.edges.len(),
                got: field.values.len(),
            });
        }
        let mut out = DVector::zeros(self.n);
        for (e, v) in self.edges.iter().zip(&field.values) {
            let flux = e.sqrt_w * v;
            out[e.i] += flux;
            out[e.j] -= flux;
        }
        Ok(out)
    }

    /// `ΔΦ_i = Σ_{j∈N(i)} ω_ij (Φ_j − Φ_i)`, the negative semi-definite graph Laplacian.
    pub fn laplacian_apply(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(phi.len())?;
        let mut out = DVector::zeros(self.n);
        for e in &self.edges {
            let flux = e.w * (phi[e.j] - phi[e.i]);
            out[e.i] += flux;
            out[e.j] -= flux;
        }
        Ok(out)
    }
}

fn check_connected(adjacency: &[Vec<(usize, usize)>]) -> Result<()> {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &(u, _) in &adjacency[v] {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(v) => Err(Error::Disconnected(v)),
        None => Ok(()),
    }
}
