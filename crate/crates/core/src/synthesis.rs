//! Spectral chain synthesis: minimize a largest eigenvalue over the transition polytope.
//!
//! Every program has the form `min λ_max(A₀ + Σ_e x_e A_e)` over the free entries
//! `x_e` of a column-stochastic matrix with a prescribed stationary distribution.
//! The objective is convex and nonsmooth, so two schemes are offered:
//!
//! * [`SolverMethod::CuttingPlane`] (default): Kelley's method. Each evaluated
//!   eigenvector `v` gives the supporting hyperplane `t ≥ vᵀA(x)v`; the LP over all
//!   collected planes yields both the next iterate and a certified lower bound.
//! * [`SolverMethod::Subgradient`]: projected subgradient with step `c/√t`, projecting
//!   onto the polytope by Dykstra's alternating projections. Slow but independent;
//!   kept as a cross-check.

use std::fmt;
use std::str::FromStr;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Solution, SolveOutcome};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{metropolis_hastings, Distribution, RegionGraph, StochasticMatrix};
use crate::linalg::sorted_eigen;

/// Which spectral program to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgramKind {
    /// `λ_max(½(P̃+P̃ᵀ) − 2√ρ√ρᵀ)` subject to `Pρ = ρ`.
    Remc,
    /// `λ_max(P − (2/n)11ᵀ)` over symmetric `P` (uniform target).
    SymmetricUniform,
    /// Remc objective restricted to chains in detailed balance.
    Reversible,
    /// `‖P̃ − √ρ√ρᵀ‖₂` over chains in detailed balance (fastest mixing chain).
    Fmmc,
}

impl ProgramKind {
    fn balanced(self) -> bool {
        !matches!(self, Self::Remc)
    }

    fn two_sided(self) -> bool {
        matches!(self, Self::Fmmc)
    }
}

impl fmt::Display for ProgramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Remc => "remc",
            Self::SymmetricUniform => "symmetric",
            Self::Reversible => "reversible",
            Self::Fmmc => "fmmc",
        })
    }
}

impl FromStr for ProgramKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "remc" => Ok(Self::Remc),
            "symmetric" | "symmetric_uniform" => Ok(Self::SymmetricUniform),
            "reversible" => Ok(Self::Reversible),
            "fmmc" => Ok(Self::Fmmc),
            _ => Err(format!("unknown program kind '{s}' (remc|fmmc|reversible|symmetric)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    #[default]
    CuttingPlane,
    Subgradient,
}

/// A fully specified synthesis problem.
#[derive(Debug, Clone)]
pub struct SpectralProgram {
    pub kind: ProgramKind,
    pub graph: RegionGraph,
    pub target: Distribution,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub method: SolverMethod,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_CUTTING_PLANE_ITERATIONS: usize = 2_000;
pub const DEFAULT_SUBGRADIENT_ITERATIONS: usize = 50_000;
/// Subgradient runs stop when the best value improves by less than the tolerance
/// over this many iterations.
pub const SUBGRADIENT_PATIENCE: usize = 200;

impl SpectralProgram {
    pub fn new(kind: ProgramKind, graph: RegionGraph, target: Distribution) -> Self {
        Self {
            kind,
            graph,
            target,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_CUTTING_PLANE_ITERATIONS,
            method: SolverMethod::CuttingPlane,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_method(mut self, method: SolverMethod) -> Self {
        self.method = method;
        self.max_iterations = match method {
            SolverMethod::CuttingPlane => DEFAULT_CUTTING_PLANE_ITERATIONS,
            SolverMethod::Subgradient => DEFAULT_SUBGRADIENT_ITERATIONS,
        };
        self
    }

    pub fn with_max_iterations(mut self, it: usize) -> Self {
        self.max_iterations = it;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        if self.target.len() != n {
            return Err(Error::Dimension { expected: n, got: self.target.len() });
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidProgram(format!("tolerance {} must be positive", self.tolerance)));
        }
        if let Some(i) = self.target.first_zero() {
            return Err(Error::ZeroTarget(i));
        }
        if self.kind == ProgramKind::SymmetricUniform
            && self.target.values().iter().any(|&v| (v - 1.0 / n as f64).abs() > 1e-12)
        {
            return Err(Error::InvalidProgram("symmetric program needs a uniform target".into()));
        }
        Ok(())
    }
}

/// Outcome of a synthesis run.
#[derive(Debug, Clone)]
pub struct SolverResult {
    pub chain: StochasticMatrix,
    /// Objective of `chain` (an eigenvalue for remc/symmetric/reversible, a norm for fmmc).
    pub objective: f64,
    pub iterations: usize,
    /// Distance from `objective` to a proven lower bound, when the method provides one.
    pub certified_gap: Option<f64>,
    /// False when the iteration budget ran out before the stopping rule fired.
    pub converged: bool,
    /// Best objective seen after each iteration.
    pub history: Vec<f64>,
}

/// Solves `program` with its configured method.
pub fn minimize_lambda_max(program: &SpectralProgram) -> Result<SolverResult> {
    program.validate()?;
    let model = Model::new(program);
    match program.method {
        // Badly scaled targets can leave the simplex with a singular basis.
        SolverMethod::CuttingPlane => match cutting_plane(&model, program) {
            Err(Error::Lp(_)) => subgradient(&model, &program.clone().with_method(SolverMethod::Subgradient)),
            other => other,
        },
        SolverMethod::Subgradient => subgradient(&model, program),
    }
}

pub fn solve_remc(g: &RegionGraph, rho: &Distribution, tol: f64) -> Result<SolverResult> {
    minimize_lambda_max(&SpectralProgram::new(ProgramKind::Remc, g.clone(), rho.clone()).with_tolerance(tol))
}

pub fn solve_reversible(g: &RegionGraph, rho: &Distribution, tol: f64) -> Result<SolverResult> {
    minimize_lambda_max(&SpectralProgram::new(ProgramKind::Reversible, g.clone(), rho.clone()).with_tolerance(tol))
}

pub fn solve_symmetric_uniform(g: &RegionGraph, tol: f64) -> Result<SolverResult> {
    minimize_lambda_max(
        &SpectralProgram::new(ProgramKind::SymmetricUniform, g.clone(), Distribution::uniform(g.n()))
            .with_tolerance(tol),
    )
}

pub fn solve_fmmc(g: &RegionGraph, rho: &Distribution, tol: f64) -> Result<SolverResult> {
    minimize_lambda_max(&SpectralProgram::new(ProgramKind::Fmmc, g.clone(), rho.clone()).with_tolerance(tol))
}

/// Objective value of `p` under `kind`, without feasibility checks.
pub fn objective_of(kind: ProgramKind, p: &StochasticMatrix, rho: &Distribution) -> f64 {
    let n = p.n();
    let r = rho.values();
    let pt = DMatrix::from_fn(n, n, |a, b| p.matrix()[(a, b)] * (r[b] / r[a]).sqrt());
    let s = DVector::from_iterator(n, r.iter().map(|v| v.sqrt()));
    let shift = if kind.two_sided() { 1.0 } else { 2.0 };
    let m = (&pt + pt.transpose()) * 0.5 - shift * &s * s.transpose();
    let (vals, _) = sorted_eigen(&m);
    if kind.two_sided() {
        vals[0].max(-vals[n - 1])
    } else {
        vals[0]
    }
}

/// Free entries and the affine map `x ↦ A₀ + Σ x_e A_e`.
struct Model {
    n: usize,
    kind: ProgramKind,
    /// `(to, from)` of each variable.
    entries: Vec<(usize, usize)>,
    /// Entries forced to zero (one-way moves under detailed balance).
    fixed_zero: Vec<bool>,
    /// Coefficient of `x_e` at matrix position `(to, from)`, i.e. `√(ρ_from/ρ_to)`.
    scale: Vec<f64>,
    sqrt_target: DVector<f64>,
    /// Equality rows `(coefficients by variable, rhs)`.
    equalities: Vec<(Vec<(usize, f64)>, f64)>,
}

impl Model {
    fn new(program: &SpectralProgram) -> Self {
        let g = &program.graph;
        let n = g.n();
        let r = program.target.values();
        let entries = g.support();
        let index = |to: usize, from: usize| entries.iter().position(|&e| e == (to, from));
        let balanced = program.kind.balanced();
        let fixed_zero: Vec<bool> =
            entries.iter().map(|&(to, from)| balanced && to != from && !g.allows(to, from)).collect();
        let scale = entries.iter().map(|&(to, from)| (r[from] / r[to]).sqrt()).collect();

        let mut equalities = Vec::new();
        for i in 0..n {
            let row = entries
                .iter()
                .enumerate()
                .filter(|(e, &(_, from))| from == i && !fixed_zero[*e])
                .map(|(e, _)| (e, 1.0))
                .collect();
            equalities.push((row, 1.0));
        }
        if balanced {
            // x_{ji} ρ_i = x_{ij} ρ_j; stationarity then follows from the column sums.
            for &(from, to) in g.edges() {
                if from < to && g.allows(to, from) {
                    let a = index(to, from).expect("edge in support");
                    let b = index(from, to).expect("reverse edge in support");
                    equalities.push((vec![(a, r[from]), (b, -r[to])], 0.0));
                }
            }
        } else {
            // The last stationarity row is implied by the others and the column sums.
            for j in 0..n - 1 {
                let row = entries
                    .iter()
                    .enumerate()
                    .filter(|(_, &(to, _))| to == j)
                    .map(|(e, &(_, from))| (e, r[from]))
                    .collect();
                equalities.push((row, r[j]));
            }
        }
        Self {
            n,
            kind: program.kind,
            entries,
            fixed_zero,
            scale,
            sqrt_target: DVector::from_iterator(n, r.iter().map(|v| v.sqrt())),
            equalities,
        }
    }

    fn dim(&self) -> usize {
        self.entries.len()
    }

    /// `½(P̃+P̃ᵀ) − c√ρ√ρᵀ` with `c = 1` for the two-sided norm and 2 otherwise.
    fn operator(&self, x: &[f64]) -> DMatrix<f64> {
        let s = &self.sqrt_target;
        let shift = if self.kind.two_sided() { 1.0 } else { 2.0 };
        let mut m = -shift * s * s.transpose();
        for (e, &(a, b)) in self.entries.iter().enumerate() {
            let v = 0.5 * x[e] * self.scale[e];
            m[(a, b)] += v;
            m[(b, a)] += v;
        }
        m
    }

    /// Objective and the eigenvector cuts active near the maximum.
    ///
    /// Each cut is `(sign, v)` meaning `t ≥ sign · vᵀ M(x) v`.
    fn evaluate(&self, x: &[f64], band: f64) -> (f64, Vec<(f64, DVector<f64>)>) {
        let (vals, vecs) = sorted_eigen(&self.operator(x));
        let n = self.n;
        let top = vals[0];
        let bottom = -vals[n - 1];
        let value = if self.kind.two_sided() { top.max(bottom) } else { top };
        let mut cuts = Vec::new();
        for k in 0..n {
            if vals[k] >= value - band {
                cuts.push((1.0, vecs[k].clone()));
            }
            if self.kind.two_sided() && -vals[k] >= value - band {
                cuts.push((-1.0, vecs[k].clone()));
            }
        }
        (value, cuts)
    }

    /// Constant and gradient of `sign · vᵀ M(x) v` as an affine function of `x`.
    fn linearize(&self, sign: f64, v: &DVector<f64>) -> (f64, Vec<f64>) {
        let shift = if self.kind.two_sided() { 1.0 } else { 2.0 };
        let sv = self.sqrt_target.dot(v);
        let constant = -sign * shift * sv * sv;
        let grad = self
            .entries
            .iter()
            .enumerate()
            .map(|(e, &(a, b))| if self.fixed_zero[e] { 0.0 } else { sign * v[a] * v[b] * self.scale[e] })
            .collect();
        (constant, grad)
    }

    fn lower_bound(&self) -> f64 {
        if self.kind.two_sided() {
            0.0
        } else {
            -1.0
        }
    }

    /// Clamps round-off, restores exact column sums and builds the matrix.
    fn to_chain(&self, x: &[f64]) -> StochasticMatrix {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for (e, &(a, b)) in self.entries.iter().enumerate() {
            if !self.fixed_zero[e] {
                m[(a, b)] = x[e].clamp(0.0, 1.0);
            }
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(j, i)]).sum();
            if off > 1.0 {
                for j in 0..n {
                    m[(j, i)] /= off;
                }
                m[(i, i)] = 0.0;
            } else {
                m[(i, i)] = 1.0 - off;
            }
        }
        StochasticMatrix::new(m).expect("cleaned matrix is stochastic")
    }

    fn entries_of(&self, p: &StochasticMatrix) -> Vec<f64> {
        self.entries.iter().map(|&(a, b)| p.matrix()[(a, b)]).collect()
    }
}

fn lp_error(e: microlp::Error) -> Error {
    match e {
        microlp::Error::Infeasible => Error::Infeasible("transition polytope is empty".into()),
        other => Error::Lp(other.to_string()),
    }
}

fn solution_of(outcome: SolveOutcome) -> Result<Solution> {
    outcome.into_solution().map_err(|_| Error::Lp("solve interrupted".into()))
}

fn cutting_plane(model: &Model, program: &SpectralProgram) -> Result<SolverResult> {
    let tol = program.tolerance;
    let dim = model.dim();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> =
        (0..dim).map(|e| lp.add_var(0.0, if model.fixed_zero[e] { (0.0, 0.0) } else { (0.0, 1.0) })).collect();
    let t = lp.add_var(1.0, (model.lower_bound(), f64::INFINITY));
    for (row, rhs) in &model.equalities {
        let expr: LinearExpr = row.iter().map(|&(e, c)| (vars[e], c)).collect();
        lp.add_constraint(expr, ComparisonOp::Eq, *rhs);
    }

    let band = 1e-3;
    let mut best_x: Option<Vec<f64>> = None;
    let mut best = f64::INFINITY;
    let mut history = Vec::new();

    let cut_expr = |sign: f64, v: &DVector<f64>| -> (LinearExpr, f64) {
        let (c, grad) = model.linearize(sign, v);
        let mut expr: LinearExpr =
            grad.iter().enumerate().filter(|(_, g)| **g != 0.0).map(|(e, &g)| (vars[e], -g)).collect();
        expr.add(t, 1.0);
        (expr, c)
    };

    // Seed with the Metropolis-Hastings chain when it exists.
    if let Ok(mh) = metropolis_hastings(&program.graph, &program.target) {
        let x = model.entries_of(&mh);
        let (value, cuts) = model.evaluate(&x, band);
        best = value;
        best_x = Some(x);
        for (sign, v) in &cuts {
            let (expr, rhs) = cut_expr(*sign, v);
            lp.add_constraint(expr, ComparisonOp::Ge, rhs);
        }
    }

    let mut sol = solution_of(lp.solve().map_err(lp_error)?)?;
    let mut lower = model.lower_bound();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < program.max_iterations {
        iterations += 1;
        lower = lower.max(sol.objective());
        let x: Vec<f64> = vars.iter().map(|&v| sol.var_value(v)).collect();
        let (value, cuts) = model.evaluate(&x, band);
        if value < best {
            best = value;
            best_x = Some(x);
        }
        history.push(best);
        if best - lower <= tol {
            converged = true;
            break;
        }
        let mut added = false;
        for (sign, v) in &cuts {
            let (c, grad) = model.linearize(*sign, v);
            let at_lp: f64 = c + grad.iter().zip(&vars).map(|(g, &var)| g * sol.var_value(var)).sum::<f64>();
            if at_lp <= sol.var_value(t) + 1e-12 {
                continue;
            }
            let (expr, rhs) = cut_expr(*sign, v);
            sol = solution_of(sol.add_constraint(expr, ComparisonOp::Ge, rhs).map_err(lp_error)?)?;
            added = true;
        }
        if !added {
            // The model already matches the objective at the LP point: it is optimal.
            lower = lower.max(value);
            converged = best - lower <= tol;
            if converged {
                break;
            }
        }
    }

    // The simplex output meets the equalities only to its pivot tolerance.
    let x = best_x.expect("at least one iterate");
    let x = PolytopeProjector::new(model).project(&DVector::from_vec(x))?;
    let chain = model.to_chain(x.as_slice());
    let objective = objective_of(program.kind, &chain, &program.target);
    Ok(SolverResult {
        certified_gap: Some((objective - lower).max(0.0)),
        chain,
        objective,
        iterations,
        converged,
        history,
    })
}

/// Orthogonal projection onto `{x : Ax = b, 0 ≤ x ≤ 1, fixed entries = 0}`.
struct PolytopeProjector {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// `Aᵀ(AAᵀ)⁺`
    correction: DMatrix<f64>,
    upper: Vec<f64>,
}

impl PolytopeProjector {
    fn new(model: &Model) -> Self {
        let dim = model.dim();
        let rows = model.equalities.len();
        let mut a = DMatrix::zeros(rows, dim);
        let mut b = DVector::zeros(rows);
        for (r, (row, rhs)) in model.equalities.iter().enumerate() {
            for &(e, c) in row {
                a[(r, e)] = c;
            }
            b[r] = *rhs;
        }
        let gram = &a * a.transpose();
        let pinv = gram.pseudo_inverse(1e-12).expect("pseudo-inverse of a Gram matrix");
        let correction = a.transpose() * pinv;
        let upper = model.fixed_zero.iter().map(|&z| if z { 0.0 } else { 1.0 }).collect();
        Self { a, b, correction, upper }
    }

    fn affine(&self, x: &DVector<f64>) -> DVector<f64> {
        x - &self.correction * (&self.a * x - &self.b)
    }

    fn boxed(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(&self.upper).map(|(v, u)| v.clamp(0.0, *u)))
    }

    /// Dykstra's alternating projections; stops at `1e-10` change or on stall.
    fn project(&self, x0: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = x0.clone();
        let mut p = DVector::zeros(x.len());
        let mut q = DVector::zeros(x.len());
        for _ in 0..10_000 {
            let y = self.affine(&(&x + &p));
            p = &x + &p - &y;
            let next = self.boxed(&(&y + &q));
            q = &y + &q - &next;
            let change = (&next - &x).amax();
            x = next;
            if change < 1e-10 {
                break;
            }
        }
        let residual = (&self.a * &x - &self.b).amax();
        if residual > 1e-6 {
            return Err(Error::Infeasible(format!("projection stalled at residual {residual:.2e}")));
        }
        Ok(x)
    }
}

fn subgradient(model: &Model, program: &SpectralProgram) -> Result<SolverResult> {
    let proj = PolytopeProjector::new(model);
    let start = match metropolis_hastings(&program.graph, &program.target) {
        Ok(mh) => DVector::from_vec(model.entries_of(&mh)),
        Err(_) => proj.project(&DVector::from_element(model.dim(), 0.5))?,
    };
    let mut x = start;
    let (mut best, _) = model.evaluate(x.as_slice(), 0.0);
    let mut best_x = x.clone();
    let mut history = Vec::new();
    let mut last_mark = best;
    let mut mark_at = 0;
    let mut converged = false;
    let step0 = 0.1;
    let mut iterations = 0;
    while iterations < program.max_iterations {
        iterations += 1;
        let (value, cuts) = model.evaluate(x.as_slice(), 0.0);
        if value < best {
            best = value;
            best_x = x.clone();
        }
        history.push(best);
        if iterations - mark_at >= SUBGRADIENT_PATIENCE {
            if last_mark - best < program.tolerance {
                converged = true;
                break;
            }
            last_mark = best;
            mark_at = iterations;
        }
        let (sign, v) = &cuts[0];
        let (_, grad) = model.linearize(*sign, v);
        let g = DVector::from_vec(grad);
        let norm = g.norm();
        if norm == 0.0 {
            converged = true;
            break;
        }
        let step = step0 / (iterations as f64).sqrt();
        x = proj.project(&(&x - g * (step / norm)))?;
    }
    let chain = model.to_chain(best_x.as_slice());
    let objective = objective_of(program.kind, &chain, &program.target);
    Ok(SolverResult { chain, objective, iterations, certified_gap: None, converged, history })
}
