//! Context graphs, the weighted graph Laplacian, the global self-preservation
//! action and its discrete Euler–Lagrange (self-consistency) equations.
//!
//! Each undirected edge carries one effective coefficient `w + λ`: the ghost
//! coupling weight `w` from the graph plus the uniform neighbour-mismatch
//! strength `λ` of the local functionals. Per-vertex functionals contribute only
//! their internal term to the action, so no edge is counted twice.
//!
//! Vertices are processed in ascending id order regardless of declaration
//! order, which makes results independent of how a scenario lists them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::operator::RMatrix;
use crate::slayer::QuadraticFunctional;

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: String,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub weight: f64,
}

/// Undirected weighted graph of contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    index: BTreeMap<String, usize>,
}

impl ContextGraph {
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if index.insert(v.id.clone(), i).is_some() {
                return Err(Error::Graph(format!("duplicate vertex `{}`", v.id)));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            let (ia, ib) = match (index.get(&e.a), index.get(&e.b)) {
                (Some(&ia), Some(&ib)) => (ia, ib),
                _ => {
                    return Err(Error::Graph(format!(
                        "edge `{}`–`{}` references an unknown vertex",
                        e.a, e.b
                    )))
                }
            };
            if ia == ib {
                return Err(Error::Graph(format!("self-loop at `{}`", e.a)));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(Error::Graph(format!(
                    "edge `{}`–`{}` has invalid weight {}",
                    e.a, e.b, e.weight
                )));
            }
            if vertices[ia].rank != vertices[ib].rank {
                return Err(Error::Graph(format!(
                    "edge `{}`–`{}` joins charge spaces of rank {} and {}",
                    e.a, e.b, vertices[ia].rank, vertices[ib].rank
                )));
            }
            let key = (e.a.clone().min(e.b.clone()), e.a.clone().max(e.b.clone()));
            if !seen.insert(key) {
                return Err(Error::Graph(format!("duplicate edge `{}`–`{}`", e.a, e.b)));
            }
        }
        Ok(Self {
            vertices,
            edges,
            index,
        })
    }

    /// Path graph `v0 – v1 – … ` with uniform weight and rank-1 charges.
    pub fn path(n: usize, weight: f64) -> Result<Self> {
        let vertices = (0..n)
            .map(|i| Vertex {
                id: format!("v{i:06}"),
                rank: 1,
            })
            .collect();
        let edges = (1..n)
            .map(|i| Edge {
                a: format!("v{:06}", i - 1),
                b: format!("v{i:06}"),
                weight,
            })
            .collect();
        Self::new(vertices, edges)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|&i| self.vertices[i].rank)
    }

    pub fn degree(&self, id: &str) -> usize {
        self.edges.iter().filter(|e| e.a == id || e.b == id).count()
    }

    /// `(neighbour, weight)` pairs, neighbours in ascending id order.
    pub fn neighbors(&self, id: &str) -> Vec<(&str, f64)> {
        let mut out: Vec<(&str, f64)> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.a == id {
                    Some((e.b.as_str(), e.weight))
                } else if e.b == id {
                    Some((e.a.as_str(), e.weight))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by(|x, y| x.0.cmp(y.0));
        out
    }

    /// Vertex ids in ascending order.
    pub fn sorted_ids(&self) -> Vec<&str> {
        self.index.keys().map(String::as_str).collect()
    }

    /// Edges as `(lower id, higher id, weight)`, sorted.
    fn canonical_edges(&self) -> Vec<(&str, &str, f64)> {
        let mut out: Vec<(&str, &str, f64)> = self
            .edges
            .iter()
            .map(|e| {
                if e.a <= e.b {
                    (e.a.as_str(), e.b.as_str(), e.weight)
                } else {
                    (e.b.as_str(), e.a.as_str(), e.weight)
                }
            })
            .collect();
        out.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        out
    }
}

/// Charge vectors keyed by context id.
pub type ChargeField = BTreeMap<String, Vec<f64>>;

fn check_field(graph: &ContextGraph, f: &ChargeField) -> Result<()> {
    for v in &graph.vertices {
        match f.get(&v.id) {
            None => return Err(Error::Field(format!("no value for vertex `{}`", v.id))),
            Some(q) if q.len() != v.rank => {
                return Err(Error::Field(format!(
                    "vertex `{}` expects {} charges, got {}",
                    v.id,
                    v.rank,
                    q.len()
                )))
            }
            Some(q) if q.iter().any(|x| !x.is_finite()) => {
                return Err(Error::Field(format!("vertex `{}` has non-finite charges", v.id)))
            }
            _ => {}
        }
    }
    Ok(())
}

/// `(Δf)(C) = Σ_{C'∼C} w (f(C) − f(C'))`.
pub fn laplacian_apply(graph: &ContextGraph, f: &ChargeField) -> Result<ChargeField> {
    check_field(graph, f)?;
    Ok(edge_sum(graph, f, 0.0, Execution::default()))
}

fn edge_sum(graph: &ContextGraph, f: &ChargeField, extra: f64, exec: Execution) -> ChargeField {
    let ids = graph.sorted_ids();
    let rows = map_slice(&ids, exec, |id| {
        let q = &f[*id];
        let mut out = vec![0.0; q.len()];
        for (n, w) in graph.neighbors(id) {
            let qn = &f[n];
            for k in 0..q.len() {
                out[k] += (w + extra) * (q[k] - qn[k]);
            }
        }
        out
    });
    ids.into_iter().map(String::from).zip(rows).collect()
}

/// Internal self-preservation potential at a vertex.
pub trait InternalPotential: Send + Sync + Debug {
    fn rank(&self) -> usize;
    fn value(&self, q: &[f64]) -> f64;
    fn gradient(&self, q: &[f64]) -> Vec<f64>;
    fn hessian(&self, q: &[f64]) -> RMatrix;
    /// Starting point for iterative solves.
    fn preferred(&self) -> Vec<f64> {
        vec![0.0; self.rank()]
    }
}

#[derive(Debug, Clone)]
pub enum VertexPotential {
    Quadratic(QuadraticFunctional),
    Custom(Arc<dyn InternalPotential>),
}

impl VertexPotential {
    pub fn rank(&self) -> usize {
        match self {
            VertexPotential::Quadratic(f) => f.rank(),
            VertexPotential::Custom(p) => p.rank(),
        }
    }

    pub fn value(&self, q: &[f64]) -> f64 {
        match self {
            VertexPotential::Quadratic(f) => f.internal(q),
            VertexPotential::Custom(p) => p.value(q),
        }
    }

    pub fn gradient(&self, q: &[f64]) -> Vec<f64> {
        match self {
            VertexPotential::Quadratic(f) => f.internal_gradient(q),
            VertexPotential::Custom(p) => p.gradient(q),
        }
    }

    pub fn hessian(&self, q: &[f64]) -> RMatrix {
        match self {
            VertexPotential::Quadratic(f) => f.stiffness().clone(),
            VertexPotential::Custom(p) => p.hessian(q),
        }
    }

    pub fn preferred(&self) -> Vec<f64> {
        match self {
            VertexPotential::Quadratic(f) => f.preferred().to_vec(),
            VertexPotential::Custom(p) => p.preferred(),
        }
    }
}

/// Graph, per-vertex potentials and the uniform neighbour coupling `λ`.
#[derive(Debug, Clone)]
pub struct GlobalActionSpec {
    graph: ContextGraph,
    potentials: BTreeMap<String, VertexPotential>,
    coupling: f64,
}

impl GlobalActionSpec {
    pub fn new(
        graph: ContextGraph,
        potentials: BTreeMap<String, VertexPotential>,
        coupling: f64,
    ) -> Result<Self> {
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(Error::Domain(format!("coupling must be non-negative, got {coupling}")));
        }
        for v in graph.vertices() {
            match potentials.get(&v.id) {
                None => return Err(Error::Field(format!("no functional for vertex `{}`", v.id))),
                Some(p) if p.rank() != v.rank => {
                    return Err(Error::Field(format!(
                        "functional at `{}` has rank {}, vertex has {}",
                        v.id,
                        p.rank(),
                        v.rank
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = potentials.keys().find(|k| graph.rank_of(k).is_none()) {
            return Err(Error::Field(format!("functional for unknown vertex `{extra}`")));
        }
        Ok(Self {
            graph,
            potentials,
            coupling,
        })
    }

    pub fn graph(&self) -> &ContextGraph {
        &self.graph
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn potential(&self, id: &str) -> Option<&VertexPotential> {
        self.potentials.get(id)
    }

    /// Each vertex at its preferred charges.
    pub fn preferred_field(&self) -> ChargeField {
        self.potentials
            .iter()
            .map(|(k, p)| (k.clone(), p.preferred()))
            .collect()
    }

    fn all_quadratic(&self) -> bool {
        self.potentials
            .values()
            .all(|p| matches!(p, VertexPotential::Quadratic(_)))
    }
}

/// `S[q] = Σ_C F_C(q(C)) + ½ Σ_edges (w + λ) ‖q(C) − q(C')‖²`.
pub fn global_action(spec: &GlobalActionSpec, q: &ChargeField) -> Result<f64> {
    check_field(&spec.graph, q)?;
    Ok(action_unchecked(spec, q))
}

fn action_unchecked(spec: &GlobalActionSpec, q: &ChargeField) -> f64 {
    let ids = spec.graph.sorted_ids();
    let internal: Vec<f64> = map_slice(&ids, Execution::default(), |id| {
        spec.potentials[*id].value(&q[*id])
    });
    let mut total: f64 = internal.iter().sum();
    for (a, b, w) in spec.graph.canonical_edges() {
        let dist2: f64 = q[a].iter().zip(&q[b]).map(|(x, y)| (x - y) * (x - y)).sum();
        total += 0.5 * (w + spec.coupling) * dist2;
    }
    total
}

/// `∇F_C(q(C)) + Σ (w + λ)(q(C) − q(C'))` per vertex.
pub fn el_residual(spec: &GlobalActionSpec, q: &ChargeField) -> Result<ChargeField> {
    check_field(&spec.graph, q)?;
    Ok(residual_unchecked(spec, q))
}

fn residual_unchecked(spec: &GlobalActionSpec, q: &ChargeField) -> ChargeField {
    let mut out = edge_sum(&spec.graph, q, spec.coupling, Execution::default());
    for (id, r) in out.iter_mut() {
        let g = spec.potentials[id].gradient(&q[id]);
        for (rk, gk) in r.iter_mut().zip(g) {
            *rk += gk;
        }
    }
    out
}

/// Largest per-vertex Euclidean norm.
pub fn max_vertex_norm(field: &ChargeField) -> f64 {
    field
        .values()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfConsistentSolution {
    pub q_star: ChargeField,
    pub residual: ChargeField,
    pub residual_norm: f64,
    pub iterations: usize,
    pub min_hessian_eigenvalue: f64,
}

struct Layout {
    ids: Vec<String>,
    offsets: BTreeMap<String, usize>,
    size: usize,
}

fn layout(spec: &GlobalActionSpec) -> Layout {
    let mut offsets = BTreeMap::new();
    let mut size = 0;
    let ids: Vec<String> = spec.graph.sorted_ids().into_iter().map(String::from).collect();
    for id in &ids {
        offsets.insert(id.clone(), size);
        size += spec.graph.rank_of(id).unwrap_or(0);
    }
    Layout { ids, offsets, size }
}

fn flatten(l: &Layout, f: &ChargeField) -> Vec<f64> {
    let mut x = Vec::with_capacity(l.size);
    for id in &l.ids {
        x.extend_from_slice(&f[id]);
    }
    x
}

fn unflatten(l: &Layout, x: &[f64], spec: &GlobalActionSpec) -> ChargeField {
    l.ids
        .iter()
        .map(|id| {
            let o = l.offsets[id];
            let r = spec.graph.rank_of(id).unwrap_or(0);
            (id.clone(), x[o..o + r].to_vec())
        })
        .collect()
}

/// Hessian of the global action at `q`.
fn assembled_hessian(spec: &GlobalActionSpec, l: &Layout, q: &ChargeField) -> RMatrix {
    let mut a = RMatrix::zeros(l.size, l.size);
    for id in &l.ids {
        let o = l.offsets[id];
        let h = spec.potentials[id].hessian(&q[id]);
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                a[(o + i, o + j)] += h[(i, j)];
            }
        }
    }
    for (x, y, w) in spec.graph.canonical_edges() {
        let c = w + spec.coupling;
        let (ox, oy) = (l.offsets[x], l.offsets[y]);
        for k in 0..spec.graph.rank_of(x).unwrap_or(0) {
            a[(ox + k, ox + k)] += c;
            a[(oy + k, oy + k)] += c;
            a[(ox + k, oy + k)] -= c;
            a[(oy + k, ox + k)] -= c;
        }
    }
    a
}

fn min_eigenvalue(a: &RMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    crate::operator::linalg::symmetric_eigenvalues(a)[0]
}

pub const DEFAULT_SOLVE_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Stationary point of the global action.
///
/// Quadratic specs are solved directly from the assembled block system
/// `(K ⊕ … + L_eff ⊗ I) q = K q̄`; otherwise damped Newton with backtracking runs
/// from `initial` (default: preferred charges) until the largest per-vertex
/// residual is at most `tol`.
pub fn solve_self_consistent(
    spec: &GlobalActionSpec,
    initial: Option<&ChargeField>,
    tol: f64,
    max_iter: usize,
) -> Result<SelfConsistentSolution> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let l = layout(spec);
    let start = match initial {
        Some(f) => {
            check_field(&spec.graph, f)?;
            f.clone()
        }
        None => spec.preferred_field(),
    };
    let (q_star, iterations) = if spec.all_quadratic() {
        (solve_quadratic(spec, &l)?, 1)
    } else {
        solve_newton(spec, &l, start, tol, max_iter)?
    };
    let residual = residual_unchecked(spec, &q_star);
    let residual_norm = max_vertex_norm(&residual);
    if !(residual_norm <= tol) {
        return Err(Error::NonConvergence {
            iterations,
            residual: residual_norm,
        });
    }
    let min_hessian_eigenvalue = min_eigenvalue(&assembled_hessian(spec, &l, &q_star));
    if min_hessian_eigenvalue < -1e-8 {
        return Err(Error::Domain(format!(
            "stationary point is not a local minimum (Hessian eigenvalue {min_hessian_eigenvalue:e})"
        )));
    }
    Ok(SelfConsistentSolution {
        q_star,
        residual,
        residual_norm,
        iterations,
        min_hessian_eigenvalue,
    })
}

fn solve_quadratic(spec: &GlobalActionSpec, l: &Layout) -> Result<ChargeField> {
    let zero = unflatten(l, &vec![0.0; l.size], spec);
    let a = assembled_hessian(spec, l, &zero);
    let mut b = nalgebra::DVector::zeros(l.size);
    for id in &l.ids {
        if let VertexPotential::Quadratic(f) = &spec.potentials[id] {
            let kq = f.stiffness() * nalgebra::DVector::from_column_slice(f.preferred());
            let o = l.offsets[id];
            for (k, v) in kq.iter().enumerate() {
                b[o + k] = *v;
            }
        }
    }
    let lu = a.lu();
    if !lu.is_invertible() {
        return Err(Error::DegenerateSpec);
    }
    let x = lu.solve(&b).ok_or(Error::DegenerateSpec)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSpec);
    }
    Ok(unflatten(l, x.as_slice(), spec))
}

fn solve_newton(
    spec: &GlobalActionSpec,
    l: &Layout,
    start: ChargeField,
    tol: f64,
    max_iter: usize,
) -> Result<(ChargeField, usize)> {
    let mut q = start;
    let mut value = action_unchecked(spec, &q);
    for iter in 0..max_iter {
        let res = residual_unchecked(spec, &q);
        let res_norm = max_vertex_norm(&res);
        if res_norm <= tol {
            return Ok((q, iter));
        }
        let g = nalgebra::DVector::from_vec(flatten(l, &res));
        let h = assembled_hessian(spec, l, &q);
        let x = nalgebra::DVector::from_vec(flatten(l, &q));
        // Levenberg damping until the step is a descent direction
        let mut damping = 0.0;
        let step = loop {
            let shifted = &h + RMatrix::identity(l.size, l.size) * damping;
            if let Some(s) = shifted.lu().solve(&(-&g)) {
                if s.dot(&g) < 0.0 && s.iter().all(|v| v.is_finite()) {
                    break s;
                }
            }
            damping = if damping == 0.0 { 1e-8_f64.max(1e-8 * h.amax()) } else { damping * 10.0 };
            if damping > 1e12 {
                return Err(Error::NonConvergence {
                    iterations: iter,
                    residual: res_norm,
                });
            }
        };
        let slope = step.dot(&g);
        let mut t = 1.0;
        loop {
            let trial = unflatten(l, (&x + &step * t).as_slice(), spec);
            let tv = action_unchecked(spec, &trial);
            if tv.is_finite() && tv <= value + 1e-4 * t * slope {
                q = trial;
                value = tv;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                // no further decrease available at this precision
                q = trial;
                value = action_unchecked(spec, &q);
                break;
            }
        }
    }
    let residual = max_vertex_norm(&residual_unchecked(spec, &q));
    if residual <= tol {
        return Ok((q, max_iter));
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumReport {
    pub n: usize,
    /// Max interior `|(Δf)(i)/(w h²) + f''(xᵢ)|` on `n` vertices.
    pub laplacian_error: f64,
    /// Same error on `2n` vertices.
    pub refined_error: f64,
    pub observed_order: f64,
}

/// Max interior deviation of the rescaled path-graph Laplacian from `−f''`.
pub fn chain_laplacian_error(
    n: usize,
    w: f64,
    f: &(dyn Fn(f64) -> f64 + Sync),
    d2f: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<f64> {
    if n < 8 {
        return Err(Error::Domain(format!("chain needs at least 8 vertices, got {n}")));
    }
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::Domain(format!("weight must be positive, got {w}")));
    }
    let graph = ContextGraph::path(n, w)?;
    let h = 1.0 / (n - 1) as f64;
    let x = |i: usize| i as f64 * h;
    let field: ChargeField = graph
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.id.clone(), vec![f(x(i))]))
        .collect();
    let lap = laplacian_apply(&graph, &field)?;
    let mut err = 0.0_f64;
    for (i, v) in graph.vertices().iter().enumerate().take(n - 1).skip(1) {
        let approx = lap[&v.id][0] / (w * h * h);
        err = err.max((approx + d2f(x(i))).abs());
    }
    Ok(err)
}

/// Laplacian error at `n` and `2n` vertices with the observed order `log₂`-ratio.
pub fn chain_continuum_report(
    n: usize,
    w: f64,
    f: &(dyn Fn(f64) -> f64 + Sync),
    d2f: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<ContinuumReport> {
    let coarse = chain_laplacian_error(n, w, f, d2f)?;
    let fine = chain_laplacian_error(2 * n, w, f, d2f)?;
    Ok(ContinuumReport {
        n,
        laplacian_error: coarse,
        refined_error: fine,
        observed_order: convergence_order(n, coarse, 2 * n, fine),
    })
}

/// `log(e₁/e₂) / log(h₁/h₂)` with `h = 1/(n−1)`.
pub fn convergence_order(n1: usize, e1: f64, n2: usize, e2: f64) -> f64 {
    let h1 = 1.0 / (n1 - 1) as f64;
    let h2 = 1.0 / (n2 - 1) as f64;
    (e1 / e2).ln() / (h1 / h2).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chain(w: f64) -> ContextGraph {
        ContextGraph::new(
            ["C1", "C2", "C3"]
                .iter()
                .map(|id| Vertex {
                    id: id.to_string(),
                    rank: 1,
                })
                .collect(),
            vec![
                Edge {
                    a: "C1".into(),
                    b: "C2".into(),
                    weight: w,
                },
                Edge {
                    a: "C2".into(),
                    b: "C3".into(),
                    weight: w,
                },
            ],
        )
        .unwrap()
    }

    fn field(vals: &[f64]) -> ChargeField {
        ["C1", "C2", "C3"]
            .iter()
            .zip(vals)
            .map(|(k, v)| (k.to_string(), vec![*v]))
            .collect()
    }

    fn markov_spec(w: f64, lambda: f64) -> GlobalActionSpec {
        let pbar = [0.0, 1.0, 0.0];
        let potentials = ["C1", "C2", "C3"]
            .iter()
            .zip(pbar)
            .map(|(k, p)| {
                (
                    k.to_string(),
                    VertexPotential::Quadratic(QuadraticFunctional::scalar(1.0, p).unwrap()),
                )
            })
            .collect();
        GlobalActionSpec::new(chain(w), potentials, lambda).unwrap()
    }

    #[test]
    fn laplacian_on_chain() {
        let out = laplacian_apply(&chain(1.0), &field(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(out["C1"], vec![1.0]);
        assert_eq!(out["C2"], vec![-1.0]);
        assert_eq!(out["C3"], vec![0.0]);
        let constant = laplacian_apply(&chain(2.5), &field(&[0.3, 0.3, 0.3])).unwrap();
        assert!(constant.values().all(|v| v[0] == 0.0));
    }

    #[test]
    fn isolated_vertex_has_zero_laplacian() {
        let g = ContextGraph::new(
            vec![
                Vertex { id: "a".into(), rank: 1 },
                Vertex { id: "b".into(), rank: 1 },
                Vertex { id: "c".into(), rank: 1 },
            ],
            vec![Edge { a: "a".into(), b: "b".into(), weight: 1.0 }],
        )
        .unwrap();
        let f: ChargeField = [("a", 1.0), ("b", 2.0), ("c", 5.0)]
            .iter()
            .map(|(k, v)| (k.to_string(), vec![*v]))
            .collect();
        assert_eq!(laplacian_apply(&g, &f).unwrap()["c"], vec![0.0]);
    }

    #[test]
    fn missing_vertex_is_field_error() {
        let mut f = field(&[1.0, 0.0, 0.0]);
        f.remove("C2");
        assert!(matches!(laplacian_apply(&chain(1.0), &f), Err(Error::Field(_))));
    }

    #[test]
    fn graph_validation() {
        let v = |id: &str, rank| Vertex { id: id.into(), rank };
        let e = |a: &str, b: &str, weight| Edge { a: a.into(), b: b.into(), weight };
        assert!(ContextGraph::new(vec![v("a", 1)], vec![e("a", "a", 1.0)]).is_err());
        assert!(ContextGraph::new(vec![v("a", 1), v("b", 1)], vec![e("a", "b", -1.0)]).is_err());
        assert!(ContextGraph::new(vec![v("a", 1), v("b", 2)], vec![e("a", "b", 1.0)]).is_err());
        assert!(ContextGraph::new(vec![v("a", 1)], vec![e("a", "z", 1.0)]).is_err());
        assert!(ContextGraph::new(
            vec![v("a", 1), v("b", 1)],
            vec![e("a", "b", 1.0), e("b", "a", 1.0)]
        )
        .is_err());
    }

    #[test]
    fn action_at_preferred_without_coupling_is_zero() {
        let spec = markov_spec(0.0, 0.0);
        assert_eq!(global_action(&spec, &spec.preferred_field()).unwrap(), 0.0);
    }

    #[test]
    fn markov_chain_action_and_residual() {
        let spec = markov_spec(0.5, 0.5);
        let q = field(&[0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(global_action(&spec, &q).unwrap(), 1.0, epsilon = 1e-15);
        let r = el_residual(&spec, &q).unwrap();
        assert_eq!((r["C1"][0], r["C2"][0], r["C3"][0]), (-1.0, 2.0, -1.0));
    }

    #[test]
    fn decoupled_solution_is_preferred() {
        let spec = markov_spec(0.0, 0.0);
        let sol = solve_self_consistent(&spec, None, DEFAULT_SOLVE_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(sol.q_star, spec.preferred_field());
        let r = el_residual(&spec, &spec.preferred_field()).unwrap();
        assert_eq!(max_vertex_norm(&r), 0.0);
    }

    #[test]
    fn markov_chain_solution() {
        let spec = markov_spec(0.5, 0.5);
        let sol = solve_self_consistent(&spec, None, DEFAULT_SOLVE_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_abs_diff_eq!(sol.q_star["C1"][0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.q_star["C2"][0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.q_star["C3"][0], 0.25, epsilon = 1e-12);
        assert!(sol.residual_norm <= 1e-10);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn declaration_order_does_not_matter() {
        let pbar = [("C1", 0.2), ("C2", 1.0), ("C3", -0.3)];
        let build = |reverse: bool| {
            let mut vertices: Vec<Vertex> = pbar
                .iter()
                .map(|(id, _)| Vertex { id: id.to_string(), rank: 1 })
                .collect();
            let mut edges = chain(0.7).edges().to_vec();
            if reverse {
                vertices.reverse();
                edges.reverse();
            }
            let potentials = pbar
                .iter()
                .map(|(k, p)| {
                    (
                        k.to_string(),
                        VertexPotential::Quadratic(QuadraticFunctional::scalar(1.5, *p).unwrap()),
                    )
                })
                .collect();
            GlobalActionSpec::new(ContextGraph::new(vertices, edges).unwrap(), potentials, 0.1).unwrap()
        };
        let a = solve_self_consistent(&build(false), None, 1e-10, 10).unwrap();
        let b = solve_self_consistent(&build(true), None, 1e-10, 10).unwrap();
        assert_eq!(a.q_star, b.q_star);
    }

    #[derive(Debug)]
    struct Quartic {
        k: f64,
        center: f64,
    }

    impl InternalPotential for Quartic {
        fn rank(&self) -> usize {
            1
        }
        fn value(&self, q: &[f64]) -> f64 {
            let d = q[0] - self.center;
            0.25 * d.powi(4) + 0.5 * self.k * d * d
        }
        fn gradient(&self, q: &[f64]) -> Vec<f64> {
            let d = q[0] - self.center;
            vec![d.powi(3) + self.k * d]
        }
        fn hessian(&self, q: &[f64]) -> RMatrix {
            let d = q[0] - self.center;
            RMatrix::from_element(1, 1, 3.0 * d * d + self.k)
        }
    }

    fn quartic_spec() -> GlobalActionSpec {
        let potentials = [("C1", 2.0), ("C2", -1.0), ("C3", 0.5)]
            .iter()
            .map(|(k, c)| {
                (
                    k.to_string(),
                    VertexPotential::Custom(Arc::new(Quartic { k: 0.1, center: *c })),
                )
            })
            .collect();
        GlobalActionSpec::new(chain(1.0), potentials, 0.0).unwrap()
    }

    #[test]
    fn newton_path_solves_quartic_potentials() {
        let spec = quartic_spec();
        let sol = solve_self_consistent(&spec, None, 1e-12, 100).unwrap();
        assert!(sol.residual_norm <= 1e-12);
        assert!(sol.iterations > 1);
        assert!(sol.min_hessian_eigenvalue > 0.0);
    }

    #[test]
    fn newton_budget_exhaustion() {
        let err = solve_self_consistent(&quartic_spec(), None, 1e-14, 1);
        assert!(matches!(err, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn continuum_linear_and_constant() {
        let e = chain_laplacian_error(40, 1.0, &|x| 3.0 * x - 1.0, &|_| 0.0).unwrap();
        assert!(e < 1e-9, "{e}");
        let e = chain_laplacian_error(40, 2.0, &|_| 0.7, &|_| 0.0).unwrap();
        assert_eq!(e, 0.0);
        assert!(chain_laplacian_error(7, 1.0, &|x| x, &|_| 0.0).is_err());
    }

    #[test]
    fn continuum_order_for_sine() {
        use std::f64::consts::PI;
        let r = chain_continuum_report(50, 1.0, &|x| (PI * x).sin(), &|x| -PI * PI * (PI * x).sin()).unwrap();
        assert!((r.observed_order - 2.0).abs() < 0.1, "{r:?}");
    }
}
