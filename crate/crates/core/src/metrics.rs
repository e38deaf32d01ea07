//! Discounted time averages and the normalized ergodicity deviation (NED).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{verify_chain, Distribution, StochasticMatrix};
use crate::linalg::{expm, lambda_max, similarity, spectral_norm, sqrt_vector, symmetric_part};

/// Horizon used to approximate the Cesàro limit of uniform weights.
///
/// For an irreducible stochastic `P` the truncated mean differs from the limit by
/// at most `2‖Z‖/K`, where `Z` is the fundamental matrix, so the error decays as `1/K`.
pub const CESARO_HORIZON: usize = 10_000;

/// Tolerance on `‖Pρ − ρ‖∞` required by the deflated metrics.
pub const STATIONARITY_TOL: f64 = 1e-8;

/// Time weights `w_k` of a discounted average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSequence {
    /// `w_k = 1`: the plain long-run average.
    Uniform,
    /// `w_k = 1/k!`
    Factorial,
    /// `w_k = 1` for `k < K`, else 0.
    FiniteHorizon(usize),
}

impl fmt::Display for WeightSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => write!(f, "uniform"),
            Self::Factorial => write!(f, "factorial"),
            Self::FiniteHorizon(k) => write!(f, "horizon:{k}"),
        }
    }
}

impl FromStr for WeightSequence {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "factorial" => Ok(Self::Factorial),
            _ => {
                let k = s
                    .strip_prefix("horizon:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| format!("unknown weights '{s}' (uniform|factorial|horizon:K)"))?;
                Ok(Self::FiniteHorizon(k))
            }
        }
    }
}

/// Weighted average of `λ^k`, normalized so that `λ = 1` maps to 1.
pub fn fw_scalar(lambda: f64, w: WeightSequence) -> f64 {
    match w {
        WeightSequence::Factorial => (lambda - 1.0).exp(),
        WeightSequence::Uniform => {
            if lambda >= 1.0 {
                1.0
            } else {
                0.0
            }
        }
        WeightSequence::FiniteHorizon(k) => {
            let mut acc = 0.0;
            let mut pow = 1.0;
            for _ in 0..k {
                acc += pow;
                pow *= lambda;
            }
            acc / k as f64
        }
    }
}

/// `f_w` applied to an arbitrary square matrix.
///
/// Uniform weights use the Cesàro mean truncated at [`CESARO_HORIZON`].
pub fn fw_apply(a: &DMatrix<f64>, w: WeightSequence) -> Result<DMatrix<f64>> {
    let out = match w {
        WeightSequence::Factorial => expm(a) * (-1f64).exp(),
        WeightSequence::Uniform => power_mean(a, CESARO_HORIZON)?,
        WeightSequence::FiniteHorizon(k) => power_mean(a, k)?,
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergent("non-finite entries".into()));
    }
    Ok(out)
}

/// `(1/K) Σ_{k<K} A^k`
fn power_mean(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut sum = DMatrix::zeros(n, n);
    let mut pow = DMatrix::identity(n, n);
    for step in 0..k {
        sum += &pow;
        pow = a * pow;
        if step % 64 == 0 && pow.amax() > 1e12 {
            return Err(Error::Divergent(format!("power {step} has entry above 1e12")));
        }
    }
    Ok(sum / k as f64)
}

/// `f_w(P)`; column-stochastic whenever `P` is.
pub fn fw_matrix(p: &StochasticMatrix, w: WeightSequence) -> Result<DMatrix<f64>> {
    fw_apply(p.matrix(), w)
}

/// `(1/K) Σ_{k<K} P^k ρ0`
pub fn expected_time_average(p: &StochasticMatrix, rho0: &Distribution, k: usize) -> Distribution {
    assert!(k >= 1, "horizon must be at least 1");
    let trace = time_average_trace(p, rho0, k);
    to_distribution(trace.last().expect("k >= 1"))
}

/// Expected time averages for horizons `1..=k`, computed in one pass.
pub fn time_average_trace(p: &StochasticMatrix, rho0: &Distribution, k: usize) -> Vec<DVector<f64>> {
    let m = p.matrix();
    let mut cur = rho0.to_vector();
    let mut sum = DVector::zeros(rho0.len());
    let mut out = Vec::with_capacity(k);
    for step in 1..=k {
        sum += &cur;
        out.push(&sum / step as f64);
        cur = m * cur;
    }
    out
}

/// `f_w(P) ρ0`
pub fn expected_discounted_average(
    p: &StochasticMatrix,
    rho0: &Distribution,
    w: WeightSequence,
) -> Result<Distribution> {
    if rho0.len() != p.n() {
        return Err(Error::Dimension { expected: p.n(), got: rho0.len() });
    }
    Ok(to_distribution(&(fw_matrix(p, w)? * rho0.to_vector())))
}

fn to_distribution(v: &DVector<f64>) -> Distribution {
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    Distribution::normalized(&clipped).expect("stochastic image keeps unit mass")
}

fn check_target(p: &StochasticMatrix, rho: &Distribution) -> Result<()> {
    let report = verify_chain(p, rho, STATIONARITY_TOL)?;
    if !report.stationary {
        return Err(Error::NotStationary(report.stationarity_residual));
    }
    Ok(())
}

/// `‖f_w(P̃) − √ρ√ρᵀ‖₂`: the worst-case ratio of the `Π^{-1}`-weighted deviation of
/// the discounted average to that of the initial distribution.
pub fn ned(p: &StochasticMatrix, rho: &Distribution, w: WeightSequence) -> Result<f64> {
    check_target(p, rho)?;
    let s = sqrt_vector(rho);
    let f = fw_apply(&similarity(p, rho), w)?;
    Ok(spectral_norm(&(f - &s * s.transpose())))
}

/// Second largest eigenvalue of the symmetrized similarity transform,
/// `λ_max(½(P̃ + P̃ᵀ) − 2√ρ√ρᵀ)`.
pub fn sle(p: &StochasticMatrix, rho: &Distribution) -> Result<f64> {
    check_target(p, rho)?;
    Ok(sle_unchecked(p, rho))
}

fn sle_unchecked(p: &StochasticMatrix, rho: &Distribution) -> f64 {
    let s = sqrt_vector(rho);
    lambda_max(&(symmetric_part(&similarity(p, rho)) - 2.0 * &s * s.transpose()))
}

/// `e^{λ* − 1}` with `λ*` the [`sle`]; bounds the factorial NED from above.
pub fn ned_upper_bound(p: &StochasticMatrix, rho: &Distribution) -> Result<f64> {
    Ok((sle(p, rho)? - 1.0).exp())
}

/// Spectral quantities of a chain relative to its target.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub ned: f64,
    pub upper_bound: f64,
    pub sle: f64,
    /// `‖P̃ − √ρ√ρᵀ‖₂`. Equals the SLEM when `slem_exact`, else an upper bound on it.
    pub slem: f64,
    pub slem_exact: bool,
    /// `‖P̃^k − √ρ√ρᵀ‖₂` for `k = 1..`: worst-case normalized deviation after `k` steps.
    pub per_step_deviation: Vec<f64>,
}

/// Number of steps in [`MetricReport::per_step_deviation`] from [`spectral_summary`].
pub const SUMMARY_STEPS: usize = 10;

/// Report with factorial weighting.
pub fn spectral_summary(p: &StochasticMatrix, rho: &Distribution) -> Result<MetricReport> {
    metric_report(p, rho, WeightSequence::Factorial, SUMMARY_STEPS)
}

/// Report with the NED taken under weights `w`, and `steps` per-step deviations.
pub fn metric_report(
    p: &StochasticMatrix,
    rho: &Distribution,
    w: WeightSequence,
    steps: usize,
) -> Result<MetricReport> {
    let report = verify_chain(p, rho, STATIONARITY_TOL)?;
    if !report.stationary {
        return Err(Error::NotStationary(report.stationarity_residual));
    }
    let s = sqrt_vector(rho);
    let proj = &s * s.transpose();
    let pt = similarity(p, rho);
    let sle = sle_unchecked(p, rho);
    let mut per_step_deviation = Vec::with_capacity(steps);
    let mut pow = pt.clone();
    for _ in 0..steps {
        per_step_deviation.push(spectral_norm(&(&pow - &proj)));
        pow = &pt * pow;
    }
    Ok(MetricReport {
        ned: ned(p, rho, w)?,
        upper_bound: (sle - 1.0).exp(),
        sle,
        slem: spectral_norm(&(pt - proj)),
        slem_exact: report.detailed_balance,
        per_step_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;

    fn swap() -> StochasticMatrix {
        StochasticMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn half() -> StochasticMatrix {
        StochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn fw_scalar_examples() {
        assert_eq!(fw_scalar(1.0, WeightSequence::Factorial), 1.0);
        assert!((fw_scalar(0.0, WeightSequence::Factorial) - 1.0 / E).abs() < 1e-15);
        assert_eq!(fw_scalar(0.5, WeightSequence::Uniform), 0.0);
        assert_eq!(fw_scalar(1.0, WeightSequence::Uniform), 1.0);
        assert_eq!(fw_scalar(-1.0, WeightSequence::FiniteHorizon(4)), 0.0);
        assert_eq!(fw_scalar(0.5, WeightSequence::FiniteHorizon(3)), 1.75 / 3.0);
        for w in [WeightSequence::Uniform, WeightSequence::Factorial, WeightSequence::FiniteHorizon(7)] {
            assert_eq!(fw_scalar(1.0, w), 1.0);
        }
    }

    #[test]
    fn weight_parsing() {
        assert_eq!("horizon:5".parse(), Ok(WeightSequence::FiniteHorizon(5)));
        assert_eq!("factorial".parse(), Ok(WeightSequence::Factorial));
        assert!("horizon:0".parse::<WeightSequence>().is_err());
        assert!("geometric".parse::<WeightSequence>().is_err());
        assert_eq!(WeightSequence::FiniteHorizon(3).to_string(), "horizon:3");
    }

    #[test]
    fn fw_matrix_identity_and_swap() {
        let f = fw_matrix(&StochasticMatrix::identity(3), WeightSequence::Factorial).unwrap();
        assert!((f - DMatrix::identity(3, 3)).amax() < 1e-14);
        // 30-term series: e^{-1} Σ S^k/k! splits into even (cosh) and odd (sinh) terms.
        let (mut ch, mut sh, mut fact) = (0.0, 0.0, 1.0);
        for k in 0..30 {
            if k > 0 {
                fact *= k as f64;
            }
            if k % 2 == 0 {
                ch += 1.0 / fact;
            } else {
                sh += 1.0 / fact;
            }
        }
        let f = fw_matrix(&swap(), WeightSequence::Factorial).unwrap();
        assert!((f[(0, 0)] - ch / E).abs() < 1e-12);
        assert!((f[(1, 0)] - sh / E).abs() < 1e-12);
    }

    #[test]
    fn example_time_averages() {
        let rho0 = Distribution::indicator(2, 0);
        let a = expected_time_average(&half(), &rho0, 4);
        assert!((a.values()[0] - 0.625).abs() < 1e-12);
        let b = expected_time_average(&swap(), &rho0, 2);
        assert!((b.values()[0] - 0.5).abs() < 1e-12);
        let c = expected_time_average(&swap(), &rho0, 1);
        assert_eq!(c, rho0);
    }

    #[test]
    fn discounted_average_of_swap() {
        let d =
            expected_discounted_average(&swap(), &Distribution::indicator(2, 0), WeightSequence::Factorial).unwrap();
        assert!((d.values()[0] - 1f64.cosh() / E).abs() < 1e-12);
        assert!((d.values()[1] - 1f64.sinh() / E).abs() < 1e-12);
        assert!((d.values()[0] - 0.5677).abs() < 1e-4);
    }

    #[test]
    fn ned_two_node_chains() {
        let u = Distribution::uniform(2);
        assert!((ned(&swap(), &u, WeightSequence::Factorial).unwrap() - (-2f64).exp()).abs() < 1e-12);
        assert!((ned(&half(), &u, WeightSequence::Factorial).unwrap() - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn ned_rejects_non_stationary_target() {
        let rho = Distribution::new(vec![0.3, 0.7]).unwrap();
        assert!(matches!(ned(&swap(), &rho, WeightSequence::Factorial), Err(Error::NotStationary(_))));
    }

    #[test]
    fn summary_two_node() {
        let u = Distribution::uniform(2);
        let r = spectral_summary(&swap(), &u).unwrap();
        assert!((r.sle + 1.0).abs() < 1e-12 && (r.slem - 1.0).abs() < 1e-12 && r.slem_exact);
        let r = spectral_summary(&half(), &u).unwrap();
        assert!(r.sle.abs() < 1e-12 && r.slem.abs() < 1e-12);
        assert!(r.per_step_deviation.iter().all(|d| d.abs() < 1e-12));
        let lazy = StochasticMatrix::from_rows(&[vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap();
        let r = spectral_summary(&lazy, &u).unwrap();
        assert!((r.slem - 0.5).abs() < 1e-12);
        assert!((r.per_step_deviation[2] - 0.125).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights_on_periodic_chain() {
        let v = ned(&swap(), &Distribution::uniform(2), WeightSequence::Uniform).unwrap();
        assert!(v < 1e-3, "{v}");
    }

    #[test]
    fn divergent_input_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 3.0]);
        assert!(matches!(fw_apply(&a, WeightSequence::Uniform), Err(Error::Divergent(_))));
    }
}
