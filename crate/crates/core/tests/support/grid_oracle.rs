//! Exhaustive lattice search over 3-state doubly stochastic matrices.
//!
//! With a uniform target every feasible chain is doubly stochastic, so a 3x3 chain
//! is fixed by four entries. Entries are enumerated in integer hundredths, which keeps
//! the support test exact, and eigenvalues come from the closed-form cubic solution.

#![allow(dead_code)]

/// Minimum objectives found on the lattice, `None` when no lattice point is feasible.
#[derive(Debug, Clone, Copy, Default)]
pub struct GridOptima {
    /// `λ_max(½(P+Pᵀ) − (2/3)J)` over all feasible chains.
    pub remc: Option<f64>,
    /// Same objective restricted to symmetric chains (also the reversible optimum).
    pub symmetric: Option<f64>,
    /// `max |λ|` of `P − J/3` over symmetric chains.
    pub fmmc: Option<f64>,
}

/// Eigenvalues of a symmetric 3x3 matrix, ascending.
pub fn sym3_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut d = [m[0][0], m[1][1], m[2][2]];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [lo, 3.0 * q - hi - lo, hi]
}

/// Searches the lattice of step `1/steps` for the graph with `allowed[from][to]`.
pub fn search(allowed: [[bool; 3]; 3], steps: i64) -> GridOptima {
    let mut best = GridOptima::default();
    let keep = |slot: &mut Option<f64>, v: f64| {
        if slot.is_none_or(|b| v < b) {
            *slot = Some(v);
        }
    };
    let ok = |from: usize, to: usize, v: i64| v >= 0 && (v == 0 || from == to || allowed[from][to]);
    let s = steps as f64;
    // rows are destinations: m[to][from]; a = m[0][1], b = m[0][2], c = m[1][0], d = m[1][2]
    for a in 0..=steps {
        if !ok(1, 0, a) {
            continue;
        }
        for b in 0..=steps - a {
            if !ok(2, 0, b) {
                continue;
            }
            let m00 = steps - a - b;
            for c in 0..=steps {
                if !ok(0, 1, c) {
                    continue;
                }
                let m20 = steps - m00 - c;
                if !ok(0, 2, m20) {
                    continue;
                }
                for d in 0..=steps - c {
                    if !ok(2, 1, d) {
                        continue;
                    }
                    let m11 = steps - c - d;
                    let m21 = steps - a - m11;
                    let m22 = steps - m20 - m21;
                    if !ok(1, 2, m21) || m22 < 0 {
                        continue;
                    }
                    let p = [
                        [m00 as f64 / s, a as f64 / s, b as f64 / s],
                        [c as f64 / s, m11 as f64 / s, d as f64 / s],
                        [m20 as f64 / s, m21 as f64 / s, m22 as f64 / s],
                    ];
                    let mut sym = [[0.0; 3]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            sym[i][j] = 0.5 * (p[i][j] + p[j][i]) - 2.0 / 3.0;
                        }
                    }
                    let ev = sym3_eigenvalues(sym);
                    keep(&mut best.remc, ev[2]);
                    if a == c && b == m20 && d == m21 {
                        keep(&mut best.symmetric, ev[2]);
                        let mut dev = p;
                        for row in dev.iter_mut() {
                            for v in row.iter_mut() {
                                *v -= 1.0 / 3.0;
                            }
                        }
                        let e = sym3_eigenvalues(dev);
                        keep(&mut best.fmmc, e[2].max(-e[0]));
                    }
                }
            }
        }
    }
    best
}

/// Strongly connected 3-node digraphs, one per isomorphism class, as edge lists.
pub fn three_node_classes() -> Vec<(&'static str, Vec<(usize, usize)>)> {
    vec![
        ("directed cycle", vec![(0, 1), (1, 2), (2, 0)]),
        ("cycle with one reverse edge", vec![(0, 1), (1, 2), (2, 0), (1, 0)]),
        ("bidirectional path", vec![(0, 1), (1, 0), (1, 2), (2, 1)]),
        ("path with one-way closing edge", vec![(0, 1), (1, 0), (1, 2), (2, 1), (2, 0)]),
        ("complete", vec![(0, 1), (1, 0), (1, 2), (2, 1), (2, 0), (0, 2)]),
    ]
}

pub fn allowed_matrix(edges: &[(usize, usize)]) -> [[bool; 3]; 3] {
    let mut m = [[false; 3]; 3];
    for &(i, j) in edges {
        m[i][j] = true;
    }
    m
}
