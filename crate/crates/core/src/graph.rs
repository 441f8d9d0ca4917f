//! Compact metric graphs with Dirichlet, Neumann and Neumann-Kirchhoff vertices.
//!
//! Every edge carries a coordinate running from 0 at its `from` vertex to its
//! length at its `to` vertex. A loop has `from == to` and contributes two
//! incident ends to its vertex.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unsupported document version {0}")]
    UnsupportedVersion(u32),
    #[error("graph has no edges")]
    Empty,
    #[error("duplicate vertex id `{0}`")]
    DuplicateVertex(String),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(String),
    #[error("edge `{edge}` references unknown vertex `{vertex}`")]
    DanglingEndpoint { edge: String, vertex: String },
    #[error("edge `{0}` has nonpositive length")]
    NonPositiveLength(String),
    #[error("edge `{edge}`: value {value} disagrees with expression `{expr}`")]
    LengthMismatch { edge: String, value: f64, expr: String },
    #[error("cannot parse length expression `{0}`")]
    BadExpression(String),
    #[error("vertex `{0}` has degree 1 but carries a Neumann-Kirchhoff condition")]
    KirchhoffOnExternal(String),
    #[error("vertex `{0}` is internal but carries a Dirichlet or Neumann condition")]
    EndConditionOnInternal(String),
    #[error("vertex `{0}` has no incident edge")]
    IsolatedVertex(String),
    #[error("graph is disconnected and not flagged as a disjoint family")]
    Disconnected,
}

/// Vertex boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VertexCondition {
    #[serde(rename = "D")]
    Dirichlet,
    #[serde(rename = "N")]
    Neumann,
    #[serde(rename = "NK")]
    NeumannKirchhoff,
}

/// One factor of a length expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LengthFactor {
    Ratio(i64, i64),
    SqrtRatio(i64, i64),
}

/// Symbolic length: a product of rationals and square roots of rationals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LengthExpr {
    factors: Vec<LengthFactor>,
}

/// Canonical form `num/den * sqrt(radicand)` with `radicand` squarefree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuadraticSurd {
    pub num: i128,
    pub den: i128,
    pub radicand: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl LengthExpr {
    pub fn ratio(p: i64, q: i64) -> Self {
        Self { factors: vec![LengthFactor::Ratio(p, q)] }
    }

    pub fn sqrt(p: i64, q: i64) -> Self {
        Self { factors: vec![LengthFactor::SqrtRatio(p, q)] }
    }

    pub fn times(mut self, other: &LengthExpr) -> Self {
        self.factors.extend_from_slice(&other.factors);
        self
    }

    pub fn factors(&self) -> &[LengthFactor] {
        &self.factors
    }

    pub fn value(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| match *f {
                LengthFactor::Ratio(p, q) => p as f64 / q as f64,
                LengthFactor::SqrtRatio(p, q) => (p as f64 / q as f64).sqrt(),
            })
            .product()
    }

    /// Reduce to `q * sqrt(r)` with rational `q` and squarefree integer `r`.
    pub fn canonical(&self) -> QuadraticSurd {
        let (mut num, mut den, mut rad) = (1i128, 1i128, 1i128);
        for f in &self.factors {
            match *f {
                LengthFactor::Ratio(p, q) => {
                    num *= p as i128;
                    den *= q as i128;
                }
                LengthFactor::SqrtRatio(p, q) => {
                    // sqrt(p/q) = sqrt(p q) / q
                    rad *= p as i128 * q as i128;
                    den *= q as i128;
                }
            }
            let g = gcd(num, den);
            num /= g;
            den /= g;
            let s = square_part(rad);
            rad /= s * s;
            num *= s;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
        QuadraticSurd { num, den, radicand: rad }
    }
}

/// Largest `s` with `s² | n`.
fn square_part(n: i128) -> i128 {
    let mut n = n;
    let mut s = 1i128;
    let mut p = 2i128;
    while p * p <= n {
        while n % (p * p) == 0 {
            n /= p * p;
            s *= p;
        }
        p += 1;
    }
    s
}

impl fmt::Display for LengthExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, factor) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            match factor {
                LengthFactor::Ratio(p, q) => write!(f, "{p}/{q}")?,
                LengthFactor::SqrtRatio(p, q) => write!(f, "sqrt({p}/{q})")?,
            }
        }
        Ok(())
    }
}

impl FromStr for LengthExpr {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GraphError::BadExpression(s.to_string());
        let ratio = |t: &str| -> Result<(i64, i64), GraphError> {
            let (p, q) = t.split_once('/').ok_or_else(bad)?;
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if p <= 0 || q <= 0 {
                return Err(bad());
            }
            Ok((p, q))
        };
        let factors = s
            .split('*')
            .map(|term| {
                let term = term.trim();
                match term.strip_prefix("sqrt(").and_then(|t| t.strip_suffix(')')) {
                    Some(inner) => ratio(inner).map(|(p, q)| LengthFactor::SqrtRatio(p, q)),
                    None => ratio(term).map(|(p, q)| LengthFactor::Ratio(p, q)),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { factors })
    }
}

impl Serialize for LengthExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LengthExpr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Edge length with its declared symbolic form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeLength {
    #[serde(rename = "float")]
    pub value: f64,
    pub expr: LengthExpr,
}

impl EdgeLength {
    pub fn new(expr: LengthExpr) -> Self {
        Self { value: expr.value(), expr }
    }

    pub fn parse(expr: &str) -> Result<Self, GraphError> {
        Ok(Self::new(expr.parse()?))
    }

    pub fn ratio(p: i64, q: i64) -> Self {
        Self::new(LengthExpr::ratio(p, q))
    }

    pub fn sqrt(p: i64) -> Self {
        Self::new(LengthExpr::sqrt(p, 1))
    }

    fn validate(&self, edge: &str) -> Result<(), GraphError> {
        if !(self.value > 0.0) || !self.value.is_finite() {
            return Err(GraphError::NonPositiveLength(edge.to_string()));
        }
        let exact = self.expr.value();
        if (exact - self.value).abs() > 8.0 * f64::EPSILON * exact {
            return Err(GraphError::LengthMismatch {
                edge: edge.to_string(),
                value: self.value,
                expr: self.expr.to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: String,
    pub condition: VertexCondition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub length: EdgeLength,
}

impl Edge {
    pub fn len(&self) -> f64 {
        self.length.value
    }

    pub fn is_loop(&self) -> bool {
        self.from == self.to
    }
}

/// An edge end incident to a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeEnd {
    pub edge: usize,
    /// `true` when the end sits at coordinate 0.
    pub at_start: bool,
}

/// Validated, immutable metric graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    incidence: Vec<Vec<EdgeEnd>>,
    disjoint: bool,
}

/// Vertex input for [`MetricGraph::new`].
pub type VertexSpec<'a> = (&'a str, VertexCondition);
/// Edge input for [`MetricGraph::new`]: id, from, to, length.
pub type EdgeSpec<'a> = (&'a str, &'a str, &'a str, EdgeLength);

impl MetricGraph {
    pub fn new(
        vertices: Vec<Vertex>,
        edges: Vec<(String, String, String, EdgeLength)>,
        disjoint: bool,
    ) -> Result<Self, GraphError> {
        if edges.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeSet::new();
        for v in &vertices {
            if !seen.insert(v.id.as_str()) {
                return Err(GraphError::DuplicateVertex(v.id.clone()));
            }
        }
        let index = |edge: &str, id: &str| {
            vertices.iter().position(|v| v.id == id).ok_or_else(|| GraphError::DanglingEndpoint {
                edge: edge.to_string(),
                vertex: id.to_string(),
            })
        };
        let mut seen_edges = BTreeSet::new();
        let mut built = Vec::with_capacity(edges.len());
        for (id, from, to, length) in edges {
            if !seen_edges.insert(id.clone()) {
                return Err(GraphError::DuplicateEdge(id));
            }
            length.validate(&id)?;
            let from = index(&id, &from)?;
            let to = index(&id, &to)?;
            built.push(Edge { id, from, to, length });
        }
        let mut incidence = vec![Vec::new(); vertices.len()];
        for (e, edge) in built.iter().enumerate() {
            incidence[edge.from].push(EdgeEnd { edge: e, at_start: true });
            incidence[edge.to].push(EdgeEnd { edge: e, at_start: false });
        }
        for (v, ends) in vertices.iter().zip(&incidence) {
            match (ends.len(), v.condition) {
                (0, _) => return Err(GraphError::IsolatedVertex(v.id.clone())),
                (1, VertexCondition::NeumannKirchhoff) => {
                    return Err(GraphError::KirchhoffOnExternal(v.id.clone()))
                }
                (1, _) | (_, VertexCondition::NeumannKirchhoff) => {}
                _ => return Err(GraphError::EndConditionOnInternal(v.id.clone())),
            }
        }
        let g = Self { vertices, edges: built, incidence, disjoint };
        if !disjoint && g.components().len() > 1 {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    /// Convenience constructor from borrowed specs.
    pub fn from_specs(
        vertices: &[VertexSpec<'_>],
        edges: &[EdgeSpec<'_>],
        disjoint: bool,
    ) -> Result<Self, GraphError> {
        let vertices = vertices
            .iter()
            .map(|(id, c)| Vertex { id: id.to_string(), condition: *c })
            .collect();
        let edges = edges
            .iter()
            .map(|(id, a, b, l)| (id.to_string(), a.to_string(), b.to_string(), l.clone()))
            .collect();
        Self::new(vertices, edges, disjoint)
    }

    /// Interval `[0, L]` with conditions at coordinate 0 and at L.
    pub fn interval(length: EdgeLength, left: VertexCondition, right: VertexCondition) -> Result<Self, GraphError> {
        Self::from_specs(&[("v0", left), ("v1", right)], &[("e1", "v0", "v1", length)], false)
    }

    /// Star whose leaves carry `leaf` and sit at coordinate 0 of each edge.
    pub fn star(lengths: &[EdgeLength], leaf: VertexCondition) -> Result<Self, GraphError> {
        let mut vertices = vec![Vertex { id: "c".into(), condition: VertexCondition::NeumannKirchhoff }];
        let mut edges = Vec::new();
        for (i, l) in lengths.iter().enumerate() {
            vertices.push(Vertex { id: format!("v{}", i + 1), condition: leaf });
            edges.push((format!("e{}", i + 1), format!("v{}", i + 1), "c".to_string(), l.clone()));
        }
        if lengths.len() == 1 {
            vertices[0].condition = VertexCondition::Neumann;
        }
        Self::new(vertices, edges, false)
    }

    /// Loop `e1` at `v` plus tail `e2` running from the external vertex to `v`.
    pub fn tadpole(loop_len: EdgeLength, tail_len: EdgeLength, tail: VertexCondition) -> Result<Self, GraphError> {
        Self::from_specs(
            &[("v", VertexCondition::NeumannKirchhoff), ("w", tail)],
            &[("e1", "v", "v", loop_len), ("e2", "w", "v", tail_len)],
            false,
        )
    }

    /// Disjoint family of intervals with the given end conditions.
    pub fn disjoint_intervals(
        parts: &[(EdgeLength, VertexCondition, VertexCondition)],
    ) -> Result<Self, GraphError> {
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        for (i, (l, a, b)) in parts.iter().enumerate() {
            vertices.push(Vertex { id: format!("a{}", i + 1), condition: *a });
            vertices.push(Vertex { id: format!("b{}", i + 1), condition: *b });
            edges.push((format!("e{}", i + 1), format!("a{}", i + 1), format!("b{}", i + 1), l.clone()));
        }
        Self::new(vertices, edges, true)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn incidence(&self, v: usize) -> &[EdgeEnd] {
        &self.incidence[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incidence[v].len()
    }

    pub fn is_disjoint_family(&self) -> bool {
        self.disjoint
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.edges.iter().map(Edge::len).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(Edge::len).sum()
    }

    /// External (degree one) and internal vertex indices.
    pub fn classify_vertices(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.vertices.len()).partition(|&v| self.degree(v) == 1)
    }

    /// Connected components as sorted vertex index lists.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.vertices.len();
        let mut label = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![start];
            let mut members = Vec::new();
            label[start] = id;
            while let Some(v) = stack.pop() {
                members.push(v);
                for end in &self.incidence[v] {
                    let e = &self.edges[end.edge];
                    let w = if end.at_start { e.to } else { e.from };
                    if label[w] == usize::MAX {
                        label[w] = id;
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Edges of each component, in edge order.
    pub fn component_edges(&self) -> Vec<Vec<usize>> {
        self.components()
            .iter()
            .map(|vs| {
                (0..self.edges.len())
                    .filter(|&e| vs.binary_search(&self.edges[e].from).is_ok())
                    .collect()
            })
            .collect()
    }

    /// Number of vertices not carrying a Dirichlet condition.
    pub fn free_vertex_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.condition != VertexCondition::Dirichlet).count()
    }

    /// The graph with every internal vertex split into Dirichlet ends.
    pub fn dirichlet_decoupled(&self) -> Result<Self, GraphError> {
        self.decoupled(VertexCondition::Dirichlet)
    }

    fn decoupled(&self, cond: VertexCondition) -> Result<Self, GraphError> {
        let parts: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                let end = |v: usize| {
                    if self.degree(v) == 1 {
                        self.vertices[v].condition
                    } else {
                        cond
                    }
                };
                (e.length.clone(), end(e.from), end(e.to))
            })
            .collect();
        Self::disjoint_intervals(&parts)
    }
}

/// Arithmetic classification of a length vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlStatus {
    /// Every ratio `L_k / L_j` with `k != j` is algebraic irrational.
    pub ratios_irrational: bool,
    /// `{1, L_1, ..., L_N}` is linearly independent over the rationals.
    pub independent_with_one: bool,
    /// Index pairs with rational ratio.
    pub rational_pairs: Vec<(usize, usize)>,
}

impl AlStatus {
    pub fn in_al(&self) -> bool {
        self.ratios_irrational && self.independent_with_one
    }
}

/// Classify lengths from their symbolic declarations.
///
/// With `L_j = q_j sqrt(r_j)`, `r_j` squarefree, a ratio is rational iff the
/// radicands agree, and `{1, L_j}` is independent iff the radicands are
/// pairwise distinct and all differ from 1.
pub fn al_status(lengths: &[LengthExpr]) -> AlStatus {
    let surds: Vec<_> = lengths.iter().map(LengthExpr::canonical).collect();
    let mut rational_pairs = Vec::new();
    for j in 0..surds.len() {
        for k in j + 1..surds.len() {
            if surds[j].radicand == surds[k].radicand {
                rational_pairs.push((j, k));
            }
        }
    }
    let ratios_irrational = rational_pairs.is_empty();
    let independent_with_one = ratios_irrational && surds.iter().all(|s| s.radicand != 1);
    AlStatus { ratios_irrational, independent_with_one, rational_pairs }
}
