//! Trajectory sampling, empirical time averages and the variance of the time average.
//!
//! Randomness comes from ChaCha8 seeded with a `u64`. Independent trials share the
//! seed and use the trial index as the ChaCha stream, so any trial can be replayed
//! on its own and results do not depend on execution order.

use nalgebra::DVector;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Distribution, StochasticMatrix};
use crate::metrics::time_average_trace;

/// Generator for trial `stream` under `seed`.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Visited regions `r[0..K]` of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub regions: Vec<usize>,
    pub n: usize,
    pub seed: u64,
    pub stream: u64,
}

/// Draws successors from the columns of a chain by inverse-cdf lookup.
#[derive(Debug, Clone)]
pub struct ChainSampler {
    cdf: Vec<Vec<f64>>,
}

impl ChainSampler {
    pub fn new(p: &StochasticMatrix) -> Self {
        let n = p.n();
        let cdf = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                (0..n)
                    .map(|j| {
                        acc += p.prob(i, j);
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { cdf }
    }

    pub fn n(&self) -> usize {
        self.cdf.len()
    }

    /// Samples the region following `from`.
    pub fn step<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let col = &self.cdf[from];
        let u: f64 = rng.random::<f64>() * col[col.len() - 1];
        // u < total, so some entry exceeds it; zero-mass entries never do first.
        col.iter().position(|&c| u < c).expect("column has positive mass")
    }

    pub fn run<R: Rng + ?Sized>(&self, r0: usize, k: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        let mut cur = r0;
        out.push(cur);
        for _ in 1..k {
            cur = self.step(cur, rng);
            out.push(cur);
        }
        out
    }
}

/// Samples `k` regions starting at `r0` (stream 0 of `seed`).
pub fn sample_trajectory(p: &StochasticMatrix, r0: usize, k: usize, seed: u64) -> Trajectory {
    sample_trajectory_stream(p, r0, k, seed, 0)
}

pub fn sample_trajectory_stream(p: &StochasticMatrix, r0: usize, k: usize, seed: u64, stream: u64) -> Trajectory {
    assert!(k >= 1, "trajectory needs at least one step");
    assert!(r0 < p.n(), "start region {r0} out of range");
    let mut rng = trial_rng(seed, stream);
    let regions = ChainSampler::new(p).run(r0, k, &mut rng);
    Trajectory { regions, n: p.n(), seed, stream }
}

/// Fraction of steps spent in each region.
pub fn empirical_time_average(t: &Trajectory) -> Distribution {
    assert!(!t.regions.is_empty(), "empty trajectory");
    let mut counts = vec![0.0; t.n];
    for &r in &t.regions {
        counts[r] += 1.0;
    }
    Distribution::normalized(&counts).expect("non-empty trajectory")
}

/// Variance of the time average against its exact expectation, per horizon `k = 1..=K`.
#[derive(Debug, Clone)]
pub struct VarianceStudy {
    /// `(1/m) Σ ‖ρ̂_k − E[ρ̂_k]‖²` over trials.
    pub per_step_mle: Vec<f64>,
    /// `(1/k) Σ ρ_i(1 − ρ_i)`, the value for independent draws from the target.
    pub per_step_clt: Vec<f64>,
    /// `‖E[ρ̂_k] − ρ‖₂`
    pub per_step_expected_deviation: Vec<f64>,
    pub trials: usize,
}

impl VarianceStudy {
    pub fn steps(&self) -> usize {
        self.per_step_mle.len()
    }
}

/// Runs `m` trials of `k` steps from `r0`; trial `i` uses stream `i` of `seed`.
pub fn variance_study(
    p: &StochasticMatrix,
    rho: &Distribution,
    r0: usize,
    k: usize,
    m: usize,
    seed: u64,
) -> VarianceStudy {
    assert!(m >= 2, "variance study needs at least two trials");
    let n = p.n();
    let expected = time_average_trace(p, &Distribution::indicator(n, r0), k);
    let sampler = ChainSampler::new(p);
    let mut sq = vec![0.0; k];
    let mut counts = vec![0.0; n];
    for trial in 0..m {
        let mut rng = trial_rng(seed, trial as u64);
        counts.iter_mut().for_each(|c| *c = 0.0);
        let mut cur = r0;
        for step in 0..k {
            if step > 0 {
                cur = sampler.step(cur, &mut rng);
            }
            counts[cur] += 1.0;
            let len = (step + 1) as f64;
            let e = &expected[step];
            sq[step] += (0..n).map(|i| (counts[i] / len - e[i]).powi(2)).sum::<f64>();
        }
    }
    let target = rho.to_vector();
    let spread: f64 = rho.values().iter().map(|v| v * (1.0 - v)).sum();
    VarianceStudy {
        per_step_mle: sq.iter().map(|s| s / m as f64).collect(),
        per_step_clt: (1..=k).map(|s| spread / s as f64).collect(),
        per_step_expected_deviation: expected.iter().map(|e| (e - &target).norm()).collect(),
        trials: m,
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// One row of the expected-distribution trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// `P^k ρ0`
    pub distribution: DVector<f64>,
    /// `(1/(k+1)) Σ_{j≤k} P^j ρ0`
    pub time_average: DVector<f64>,
}

/// Expected distribution and its running time average for `k = 0..steps`.
pub fn simplex_trace(p: &StochasticMatrix, rho0: &Distribution, steps: usize) -> Vec<TraceRow> {
    let mut cur = rho0.to_vector();
    let mut sum = DVector::zeros(rho0.len());
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        sum += &cur;
        out.push(TraceRow { step, distribution: cur.clone(), time_average: &sum / (step + 1) as f64 });
        cur = p.matrix() * cur;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap() -> StochasticMatrix {
        StochasticMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn deterministic_chains() {
        assert_eq!(sample_trajectory(&swap(), 0, 4, 9).regions, vec![0, 1, 0, 1]);
        assert_eq!(sample_trajectory(&StochasticMatrix::identity(3), 2, 5, 1).regions, vec![2; 5]);
    }

    #[test]
    fn time_average_examples() {
        let t = sample_trajectory(&swap(), 0, 4, 0);
        assert_eq!(empirical_time_average(&t).values(), &[0.5, 0.5]);
        let single = Trajectory { regions: vec![2], n: 3, seed: 0, stream: 0 };
        assert_eq!(empirical_time_average(&single).values(), &[0.0, 0.0, 1.0]);
        for k in [2, 10, 100] {
            let t = sample_trajectory(&swap(), 0, k, 3);
            assert_eq!(empirical_time_average(&t).values(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn zero_mass_entries_never_drawn() {
        let p = StochasticMatrix::from_rows(&[vec![0.0, 0.0, 0.5], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.5]]).unwrap();
        let t = sample_trajectory(&p, 0, 10_000, 5);
        for w in t.regions.windows(2) {
            assert!(p.prob(w[0], w[1]) > 0.0);
        }
    }

    #[test]
    fn streams_differ_and_replay() {
        let p = StochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let a = sample_trajectory_stream(&p, 0, 64, 7, 0);
        let b = sample_trajectory_stream(&p, 0, 64, 7, 1);
        assert_ne!(a.regions, b.regions);
        assert_eq!(a, sample_trajectory_stream(&p, 0, 64, 7, 0));
    }

    #[test]
    fn clt_line_for_uniform_seven() {
        let p = StochasticMatrix::identity(7);
        let s = variance_study(&p, &Distribution::uniform(7), 0, 100, 2, 0);
        assert!((s.per_step_clt[99] - 6.0 / 700.0).abs() < 1e-15);
        assert!(s.per_step_clt.windows(2).all(|w| w[1] < w[0]));
        // Deterministic chain: every trial equals the expectation.
        assert!(s.per_step_mle.iter().all(|&v| v.abs() < 1e-24));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<_> = (1..50).map(|k| (k as f64, 3.0 / k as f64)).collect();
        assert!((log_log_slope(&pts) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_of_swap_oscillates_while_average_settles() {
        let tr = simplex_trace(&swap(), &Distribution::indicator(2, 0), 6);
        assert_eq!(tr[3].distribution[1], 1.0);
        assert_eq!(tr[5].time_average[0], 0.5);
        assert_eq!(tr[4].time_average[0], 0.6);
    }
}
