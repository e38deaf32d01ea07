//! Region graphs, distributions and column-stochastic matrices.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the column sums of a [`StochasticMatrix`].
pub const COLUMN_SUM_TOL: f64 = 1e-10;
/// Tolerance on the total mass of a [`Distribution`].
pub const MASS_TOL: f64 = 1e-12;

/// Directed graph of workspace regions. Self-transitions are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    out: Vec<Vec<usize>>,
    names: Option<Vec<String>>,
}

impl RegionGraph {
    /// Builds a validated, strongly connected graph.
    pub fn new(n: usize, edges: &[(usize, usize)], names: Option<Vec<String>>) -> Result<Self> {
        let g = Self::unchecked(n, edges)?;
        let g = g.with_names(names)?;
        if let Some(r) = first_unreachable(&g.out) {
            return Err(Error::NotStronglyConnected(r));
        }
        Ok(g)
    }

    /// Builds a graph checking only the index bounds of the edge set.
    ///
    /// The result may fail [`check_strong_connectivity`]; use [`RegionGraph::new`] for
    /// anything handed to the synthesis or planning code.
    pub fn unchecked(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 regions, got {n}")));
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i != j {
                set.insert((i, j));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut out = vec![Vec::new(); n];
        for &(i, j) in &edges {
            out[i].push(j);
        }
        Ok(Self { n, edges, out, names: None })
    }

    fn with_names(mut self, names: Option<Vec<String>>) -> Result<Self> {
        if let Some(ref v) = names {
            if v.len() != self.n {
                return Err(Error::InvalidGraph(format!("{} names given for {} regions", v.len(), self.n)));
            }
        }
        self.names = names;
        Ok(self)
    }

    /// Complete digraph on `n` regions.
    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        Self::new(n, &edges, None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Off-diagonal edges, sorted and deduplicated.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Out-neighbours of `i`, excluding `i` itself.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out[i].len()
    }

    /// Whether a move `from -> to` is allowed. Always true for `from == to`.
    pub fn allows(&self, from: usize, to: usize) -> bool {
        from == to || self.out[from].binary_search(&to).is_ok()
    }

    /// Allowed entries of a transition matrix as `(to, from)` pairs, diagonal first.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut s: Vec<_> = (0..self.n).map(|i| (i, i)).collect();
        s.extend(self.edges.iter().map(|&(i, j)| (j, i)));
        s
    }
}

/// Serialized form of a region graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
}

impl GraphDocument {
    pub fn from_graph(g: &RegionGraph, target: Option<&Distribution>) -> Self {
        Self {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
            names: g.names.clone(),
            target: target.map(|t| t.values().to_vec()),
        }
    }

    /// Validates the document into a graph and its optional normalized target.
    pub fn into_graph(self) -> Result<(RegionGraph, Option<Distribution>)> {
        let edges: Vec<_> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let g = RegionGraph::new(self.n, &edges, self.names)?;
        let target = match self.target {
            Some(t) => {
                if t.len() != g.n {
                    return Err(Error::Dimension { expected: g.n, got: t.len() });
                }
                Some(Distribution::normalized(&t)?)
            }
            None => None,
        };
        Ok((g, target))
    }
}

/// Parses a graph document. The optional target is returned alongside the graph.
pub fn load_graph_with_target(text: &str) -> Result<(RegionGraph, Option<Distribution>)> {
    let doc: GraphDocument = serde_json::from_str(text)?;
    doc.into_graph()
}

/// Parses a graph document and checks it is strongly connected.
pub fn load_graph(text: &str) -> Result<RegionGraph> {
    load_graph_with_target(text).map(|(g, _)| g)
}

/// Every region reachable from every other along directed edges.
pub fn check_strong_connectivity(g: &RegionGraph) -> bool {
    first_unreachable(&g.out).is_none()
}

/// Returns a region not mutually reachable with region 0, if any.
fn first_unreachable(out: &[Vec<usize>]) -> Option<usize> {
    let n = out.len();
    let mut rev = vec![Vec::new(); n];
    for (i, nbrs) in out.iter().enumerate() {
        for &j in nbrs {
            rev[j].push(i);
        }
    }
    let fwd = reach(out, 0);
    let bwd = reach(&rev, 0);
    (0..n).find(|&i| !fwd[i] || !bwd[i])
}

fn reach(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Probability vector over regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    values: Vec<f64>,
}

impl Distribution {
    /// Accepts `values` as-is if non-negative and summing to one.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {i} is {}", values[i])));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("entries sum to {s}")));
        }
        Ok(Self { values })
    }

    /// Rescales non-negative weights to unit mass.
    pub fn normalized(weights: &[f64]) -> Result<Self> {
        if let Some(i) = weights.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDistribution(format!("weight {i} is {}", weights[i])));
        }
        let s: f64 = weights.iter().sum();
        if weights.is_empty() || s <= 0.0 {
            return Err(Error::InvalidDistribution("weights have no mass".into()));
        }
        Ok(Self { values: weights.iter().map(|v| v / s).collect() })
    }

    pub fn uniform(n: usize) -> Self {
        Self { values: vec![1.0 / n as f64; n] }
    }

    /// Point mass on region `i`.
    pub fn indicator(n: usize, i: usize) -> Self {
        let mut values = vec![0.0; n];
        values[i] = 1.0;
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    /// Index of the first zero entry.
    pub fn first_zero(&self) -> Option<usize> {
        self.values.iter().position(|&v| v <= 0.0)
    }
}

/// `(ρ + δ) / Σ(ρ + δ)`: lifts zero entries so the target stays well conditioned.
pub fn smooth_distribution(rho: &Distribution, delta: f64) -> Distribution {
    assert!(delta >= 0.0, "smoothing constant must be non-negative");
    if delta == 0.0 {
        return rho.clone();
    }
    let shifted: Vec<f64> = rho.values.iter().map(|v| v + delta).collect();
    let s: f64 = shifted.iter().sum();
    Distribution { values: shifted.into_iter().map(|v| v / s).collect() }
}

/// Column-stochastic transition matrix: `entries[(j, i)]` is the probability of `i -> j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
}

impl StochasticMatrix {
    /// Validates non-negativity and unit column sums.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidMatrix(format!("{}x{} is not square", entries.nrows(), entries.ncols())));
        }
        for i in 0..entries.ncols() {
            let col = entries.column(i);
            if let Some(j) = col.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidMatrix(format!("entry ({j},{i}) is {}", col[j])));
            }
            let s = col.sum();
            if (s - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::InvalidMatrix(format!("column {i} sums to {s}")));
            }
        }
        Ok(Self { entries })
    }

    /// Validates stochasticity and that every positive off-diagonal entry is an edge of `g`.
    pub fn for_graph(entries: DMatrix<f64>, g: &RegionGraph) -> Result<Self> {
        if entries.nrows() != g.n() {
            return Err(Error::Dimension { expected: g.n(), got: entries.nrows() });
        }
        let p = Self::new(entries)?;
        if let Some((j, i)) = p.support_violation(g) {
            return Err(Error::InvalidMatrix(format!("entry ({j},{i}) is positive but {i}->{j} is not an edge")));
        }
        Ok(p)
    }

    /// Builds from row-major rows, `rows[j][i]` being the probability of `i -> j`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension { expected: n, got: r.len() });
        }
        Self::new(DMatrix::from_fn(n, n, |j, i| rows[j][i]))
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: DMatrix::identity(n, n) }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// Probability of moving `from -> to`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.entries[(to, from)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// First `(to, from)` entry that is positive without a matching edge.
    pub fn support_violation(&self, g: &RegionGraph) -> Option<(usize, usize)> {
        let n = self.n();
        (0..n).flat_map(|i| (0..n).map(move |j| (j, i))).find(|&(j, i)| self.entries[(j, i)] > 0.0 && !g.allows(i, j))
    }

    /// Strong connectivity of the graph of positive entries.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n();
        let out: Vec<Vec<usize>> =
            (0..n).map(|i| (0..n).filter(|&j| j != i && self.entries[(j, i)] > 0.0).collect()).collect();
        first_unreachable(&out).is_none()
    }
}

/// Serialized chain: `matrix[j][i]` is the probability of `i -> j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainDocument {
    pub n: usize,
    pub matrix: Vec<Vec<f64>>,
}

impl ChainDocument {
    pub fn from_chain(p: &StochasticMatrix) -> Self {
        Self { n: p.n(), matrix: p.rows() }
    }

    pub fn into_chain(self) -> Result<StochasticMatrix> {
        if self.matrix.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: self.matrix.len() });
        }
        StochasticMatrix::from_rows(&self.matrix)
    }
}

/// Structural properties of a chain relative to a target distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainReport {
    pub stationary: bool,
    pub irreducible: bool,
    pub detailed_balance: bool,
    /// `‖Pρ − ρ‖∞`
    pub stationarity_residual: f64,
    /// `‖PΠ − ΠPᵀ‖∞`, entrywise max
    pub balance_residual: f64,
}

/// Checks stationarity, irreducibility and detailed balance of `p` for `rho`.
pub fn verify_chain(p: &StochasticMatrix, rho: &Distribution, tol: f64) -> Result<ChainReport> {
    let n = p.n();
    if rho.len() != n {
        return Err(Error::Dimension { expected: n, got: rho.len() });
    }
    if let Some(i) = rho.first_zero() {
        return Err(Error::ZeroTarget(i));
    }
    let m = p.matrix();
    let r = rho.values();
    let pr = m * rho.to_vector();
    let stationarity_residual = (0..n).map(|i| (pr[i] - r[i]).abs()).fold(0.0, f64::max);
    let mut balance_residual = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            // (PΠ)_{ji} = P_{ji} ρ_i, (ΠPᵀ)_{ji} = ρ_j P_{ij}
            let d = (m[(j, i)] * r[i] - r[j] * m[(i, j)]).abs();
            balance_residual = balance_residual.max(d);
        }
    }
    Ok(ChainReport {
        stationary: stationarity_residual <= tol,
        irreducible: p.is_irreducible(),
        detailed_balance: balance_residual <= tol,
        stationarity_residual,
        balance_residual,
    })
}

/// Metropolis-Hastings chain on `g` with stationary distribution `rho`.
///
/// Proposals are uniform over out-neighbours. A move along a one-way edge can never
/// be balanced, so it is always rejected; the chain therefore lives on the
/// bidirectional part of `g`, and an error is returned if that part is disconnected.
pub fn metropolis_hastings(g: &RegionGraph, rho: &Distribution) -> Result<StochasticMatrix> {
    let n = g.n();
    if rho.len() != n {
        return Err(Error::Dimension { expected: n, got: rho.len() });
    }
    if let Some(i) = rho.first_zero() {
        return Err(Error::ZeroTarget(i));
    }
    let r = rho.values();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let di = g.out_degree(i) as f64;
        let mut moved = 0.0;
        for &j in g.out_neighbors(i) {
            if !g.allows(j, i) {
                continue;
            }
            let dj = g.out_degree(j) as f64;
            let accept = (r[j] * di / (r[i] * dj)).min(1.0);
            let p = accept / di;
            m[(j, i)] = p;
            moved += p;
        }
        m[(i, i)] = (1.0 - moved).max(0.0);
    }
    let p = StochasticMatrix::new(m)?;
    if !p.is_irreducible() {
        return Err(Error::InvalidGraph(
            "bidirectional edges do not connect all regions; Metropolis-Hastings chain is reducible".into(),
        ));
    }
    Ok(p)
}
