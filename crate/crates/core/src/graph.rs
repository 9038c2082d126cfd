//! Graph-state algebra: stabilizer generators, local complementation, orbit
//! search for edge-minimal representatives, and the star decomposition that
//! turns a graph into single-control/multi-target entangling passes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::lattice::Position;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("vertex index {0} out of range")]
    UnknownVertex(usize),
    #[error("duplicate vertex {0}")]
    DuplicateVertex(String),
    #[error("loop edge on vertex {0}")]
    LoopEdge(usize),
    #[error("edge list parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("graph has {0} vertices; orbit search is limited to 10")]
    TooLargeForOrbit(usize),
}

/// Undirected simple graph over lattice sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSpec {
    vertices: Vec<Position>,
    edges: BTreeSet<(usize, usize)>,
}

impl GraphSpec {
    pub fn new(
        vertices: Vec<Position>,
        edge_list: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let mut seen = BTreeSet::new();
        for v in &vertices {
            if !seen.insert(*v) {
                return Err(GraphError::DuplicateVertex(v.render(3)));
            }
        }
        let mut edges = BTreeSet::new();
        for &(a, b) in edge_list {
            if a >= vertices.len() {
                return Err(GraphError::UnknownVertex(a));
            }
            if b >= vertices.len() {
                return Err(GraphError::UnknownVertex(b));
            }
            if a == b {
                return Err(GraphError::LoopEdge(a));
            }
            edges.insert((a.min(b), a.max(b)));
        }
        Ok(GraphSpec { vertices, edges })
    }

    /// Complete graph K_n on the given vertices.
    pub fn complete(vertices: Vec<Position>) -> Result<Self, GraphError> {
        let n = vertices.len();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                edges.push((a, b));
            }
        }
        GraphSpec::new(vertices, &edges)
    }

    /// Star K_{1,n-1} with vertex 0 as the centre.
    pub fn star(vertices: Vec<Position>) -> Result<Self, GraphError> {
        let n = vertices.len();
        let edges: Vec<(usize, usize)> = (1..n).map(|leaf| (0, leaf)).collect();
        GraphSpec::new(vertices, &edges)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Position] {
        &self.vertices
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_positions(&self) -> Vec<(Position, Position)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.vertices[a], self.vertices[b]))
            .collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    /// Complement the neighbourhood of `v`: toggle every edge between two
    /// neighbours of `v`. Involution at fixed `v`.
    pub fn local_complement(&self, v: usize) -> Result<GraphSpec, GraphError> {
        if v >= self.vertices.len() {
            return Err(GraphError::UnknownVertex(v));
        }
        let nbrs = self.neighbors(v);
        let mut edges = self.edges.clone();
        for i in 0..nbrs.len() {
            for j in (i + 1)..nbrs.len() {
                let key = (nbrs[i].min(nbrs[j]), nbrs[i].max(nbrs[j]));
                if !edges.remove(&key) {
                    edges.insert(key);
                }
            }
        }
        Ok(GraphSpec {
            vertices: self.vertices.clone(),
            edges,
        })
    }

    /// Canonical edge-set key for orbit memoisation (vertex set is fixed).
    fn edge_key(&self) -> Vec<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    /// Parse the shared edge-list format: one `i j` pair of site coordinates
    /// per line; a line with a single site declares an isolated vertex.
    pub fn from_edge_list(text: &str) -> Result<GraphSpec, GraphError> {
        let mut vertices: Vec<Position> = Vec::new();
        let mut index: BTreeMap<Position, usize> = BTreeMap::new();
        let mut intern = |p: Position, vertices: &mut Vec<Position>| -> usize {
            *index.entry(p).or_insert_with(|| {
                vertices.push(p);
                vertices.len() - 1
            })
        };
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| GraphError::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.len() {
                1 => {
                    let p = Position::parse(toks[0]).ok_or_else(|| err("bad site"))?;
                    intern(p, &mut vertices);
                }
                2 => {
                    let a = Position::parse(toks[0]).ok_or_else(|| err("bad first site"))?;
                    let b = Position::parse(toks[1]).ok_or_else(|| err("bad second site"))?;
                    let ia = intern(a, &mut vertices);
                    let ib = intern(b, &mut vertices);
                    edges.push((ia, ib));
                }
                _ => return Err(err("expected one or two site tokens")),
            }
        }
        GraphSpec::new(vertices, &edges)
    }

    pub fn to_edge_list(&self, dims: usize) -> String {
        let mut out = String::new();
        let mut touched = vec![false; self.vertices.len()];
        for &(a, b) in &self.edges {
            touched[a] = true;
            touched[b] = true;
            out.push_str(&format!(
                "{} {}\n",
                self.vertices[a].render(dims),
                self.vertices[b].render(dims)
            ));
        }
        for (v, t) in touched.iter().enumerate() {
            if !t {
                out.push_str(&format!("{}\n", self.vertices[v].render(dims)));
            }
        }
        out
    }
}

/// Result of a local-complementation orbit search.
#[derive(Debug, Clone)]
pub struct OrbitResult {
    pub graph: GraphSpec,
    /// False when the budget ran out before the orbit closed.
    pub exhaustive: bool,
    pub explored: usize,
}

/// Breadth-first search of the local-complementation orbit for a member with
/// the fewest edges. Deterministic: ties break on the lexicographically
/// smallest edge set. `budget` caps the number of distinct graphs visited.
pub fn lu_orbit_min_edges(g: &GraphSpec, budget: usize) -> Result<OrbitResult, GraphError> {
    if g.num_vertices() > 10 {
        return Err(GraphError::TooLargeForOrbit(g.num_vertices()));
    }
    let mut seen: BTreeSet<Vec<(usize, usize)>> = BTreeSet::new();
    let mut queue: VecDeque<GraphSpec> = VecDeque::new();
    seen.insert(g.edge_key());
    queue.push_back(g.clone());
    let mut best = g.clone();
    let mut best_key = (best.edge_count(), best.edge_key());
    let mut exhaustive = true;
    while let Some(current) = queue.pop_front() {
        for v in 0..current.num_vertices() {
            let next = current.local_complement(v)?;
            let key = next.edge_key();
            if seen.contains(&key) {
                continue;
            }
            if seen.len() >= budget {
                exhaustive = false;
                continue;
            }
            let cand = (next.edge_count(), key.clone());
            if cand < best_key {
                best_key = cand;
                best = next.clone();
            }
            seen.insert(key);
            queue.push_back(next);
        }
    }
    Ok(OrbitResult {
        graph: best,
        exhaustive,
        explored: seen.len(),
    })
}

/// Greedy cover of the edges by stars: repeatedly take the highest-degree
/// vertex of the residual graph (lowest index on ties) with all its residual
/// neighbours. Every edge lands in exactly one star.
pub fn star_decomposition(g: &GraphSpec) -> Vec<(usize, Vec<usize>)> {
    let mut residual: BTreeSet<(usize, usize)> = g.edges().collect();
    let mut stars = Vec::new();
    while !residual.is_empty() {
        let mut degree = vec![0usize; g.num_vertices()];
        for &(a, b) in &residual {
            degree[a] += 1;
            degree[b] += 1;
        }
        let center = (0..g.num_vertices())
            .max_by_key(|&v| (degree[v], std::cmp::Reverse(v)))
            .expect("non-empty graph");
        let mut leaves = Vec::new();
        residual.retain(|&(a, b)| {
            if a == center {
                leaves.push(b);
                false
            } else if b == center {
                leaves.push(a);
                false
            } else {
                true
            }
        });
        leaves.sort_unstable();
        stars.push((center, leaves));
    }
    stars
}

/// Signed Pauli string over n ≤ 64 qubits, bit i ↦ qubit i.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
    pub negative: bool,
}

impl PauliString {
    pub fn render(&self, n: usize) -> String {
        let mut s = String::from(if self.negative { "-" } else { "+" });
        for q in 0..n {
            let x = self.x >> q & 1 == 1;
            let z = self.z >> q & 1 == 1;
            s.push(match (x, z) {
                (false, false) => 'I',
                (true, false) => 'X',
                (false, true) => 'Z',
                (true, true) => 'Y',
            });
        }
        s
    }

    /// True when the two strings commute as operators.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let anti = (self.x & other.z).count_ones() + (self.z & other.x).count_ones();
        anti % 2 == 0
    }
}

/// Stabilizer generators of an n-qubit state.
#[derive(Debug, Clone)]
pub struct StabilizerTableau {
    pub n: usize,
    pub generators: Vec<PauliString>,
}

impl StabilizerTableau {
    /// All generator pairs commute.
    pub fn is_abelian(&self) -> bool {
        for i in 0..self.generators.len() {
            for j in (i + 1)..self.generators.len() {
                if !self.generators[i].commutes_with(&self.generators[j]) {
                    return false;
                }
            }
        }
        true
    }

    /// Generators are independent as a GF(2) system (X|Z rows full rank).
    pub fn is_independent(&self) -> bool {
        let mut rows: Vec<u128> = self
            .generators
            .iter()
            .map(|g| ((g.x as u128) << 64) | g.z as u128)
            .collect();
        let mut rank = 0usize;
        for bit in (0..128).rev() {
            let Some(pivot) = (rank..rows.len()).find(|&r| rows[r] >> bit & 1 == 1) else {
                continue;
            };
            rows.swap(rank, pivot);
            for r in 0..rows.len() {
                if r != rank && rows[r] >> bit & 1 == 1 {
                    rows[r] ^= rows[rank];
                }
            }
            rank += 1;
        }
        rank == self.generators.len()
    }
}

/// Standard graph-state generators: K_v = X_v · Π_{w∼v} Z_w, all signs +.
pub fn graph_state_tableau(g: &GraphSpec) -> StabilizerTableau {
    let n = g.num_vertices();
    let generators = (0..n)
        .map(|v| {
            let mut z = 0u64;
            for w in g.neighbors(v) {
                z |= 1 << w;
            }
            PauliString {
                x: 1 << v,
                z,
                negative: false,
            }
        })
        .collect();
    StabilizerTableau { n, generators }
}

/// Single-qubit Clifford factors relating |G⟩ and |LC_v(G)⟩:
/// |LC_v(G)⟩ = √(−iX) on v · Π_{w∼v} √(iZ) on w · |G⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcGate {
    SqrtMinusIx,
    SqrtIz,
}

pub fn lc_witness(g: &GraphSpec, v: usize) -> Result<Vec<(usize, LcGate)>, GraphError> {
    if v >= g.num_vertices() {
        return Err(GraphError::UnknownVertex(v));
    }
    let mut gates = vec![(v, LcGate::SqrtMinusIx)];
    for w in g.neighbors(v) {
        gates.push((w, LcGate::SqrtIz));
    }
    Ok(gates)
}
