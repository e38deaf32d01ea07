//! Chain-level experiments: random-target comparisons of REMC against the fastest
//! mixing chain, and the variance of the empirical time average.

use anyhow::{bail, Context, Result};
use hemap_core::metrics::time_average_trace;
use hemap_core::simulation::{log_log_slope, trial_rng, variance_study, VarianceStudy};
use hemap_core::synthesis::{solve_fmmc, solve_remc};
use hemap_core::{Distribution, RegionGraph, StochasticMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};

use crate::stats::{median, quantile};
use crate::table::{num, parse_bool, parse_f64, parse_usize, Table};

/// Deviations `‖E[ρ̂_k] − ρ‖₂` for horizons `k = 1..=steps` (`k = 1` is `ρ0` itself).
pub fn deviation_trace(p: &StochasticMatrix, target: &Distribution, rho0: &Distribution, steps: usize) -> Vec<f64> {
    let t = target.to_vector();
    time_average_trace(p, rho0, steps).iter().map(|e| (e - &t).norm()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphWorldTrial {
    pub trial: usize,
    /// `None` when a solve failed; the trial is then excluded from summaries.
    pub error: Option<String>,
    pub remc: Vec<f64>,
    pub fmmc: Vec<f64>,
}

impl GraphWorldTrial {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphWorldDataset {
    pub steps: usize,
    pub trials: Vec<GraphWorldTrial>,
}

/// Per-step order statistics over the successful trials.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphWorldStep {
    pub step: usize,
    pub trials: usize,
    pub remc_median: f64,
    pub fmmc_median: f64,
    /// Quartiles of `fmmc − remc`.
    pub difference_q1: f64,
    pub difference_median: f64,
    pub difference_q3: f64,
}

fn random_distribution<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Distribution> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    Ok(Distribution::normalized(&w)?)
}

/// One comparison for given target and start distributions.
pub fn compare_chains(
    graph: &RegionGraph,
    target: &Distribution,
    rho0: &Distribution,
    steps: usize,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let remc = solve_remc(graph, target, tol).context("remc")?;
    let fmmc = solve_fmmc(graph, target, tol).context("fmmc")?;
    Ok((deviation_trace(&remc.chain, target, rho0, steps), deviation_trace(&fmmc.chain, target, rho0, steps)))
}

/// Trial `t` draws the target and then the start distribution from stream `t` of
/// `seed`, each as uniform weights on `[0, 1)` normalized.
pub fn graph_world_experiment(
    graph: &RegionGraph,
    trials: usize,
    steps: usize,
    seed: u64,
    tol: f64,
) -> Result<GraphWorldDataset> {
    if trials == 0 || steps == 0 {
        bail!("graph-world experiment needs at least one trial and one step");
    }
    let mut out = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let target = random_distribution(graph.n(), &mut rng)?;
        let rho0 = random_distribution(graph.n(), &mut rng)?;
        out.push(match compare_chains(graph, &target, &rho0, steps, tol) {
            Ok((remc, fmmc)) => GraphWorldTrial { trial, error: None, remc, fmmc },
            Err(e) => GraphWorldTrial {
                trial,
                error: Some(format!("{e:#}")),
                remc: vec![f64::NAN; steps],
                fmmc: vec![f64::NAN; steps],
            },
        });
    }
    Ok(GraphWorldDataset { steps, trials: out })
}

impl GraphWorldDataset {
    pub fn summary(&self) -> Vec<GraphWorldStep> {
        let ok: Vec<&GraphWorldTrial> = self.trials.iter().filter(|t| t.ok()).collect();
        (0..self.steps)
            .map(|s| {
                let remc: Vec<f64> = ok.iter().map(|t| t.remc[s]).collect();
                let fmmc: Vec<f64> = ok.iter().map(|t| t.fmmc[s]).collect();
                let diff: Vec<f64> = ok.iter().map(|t| t.fmmc[s] - t.remc[s]).collect();
                let q = |xs: &[f64], p: f64| quantile(xs, p).unwrap_or(f64::NAN);
                GraphWorldStep {
                    step: s + 1,
                    trials: ok.len(),
                    remc_median: median(&remc).unwrap_or(f64::NAN),
                    fmmc_median: median(&fmmc).unwrap_or(f64::NAN),
                    difference_q1: q(&diff, 0.25),
                    difference_median: q(&diff, 0.5),
                    difference_q3: q(&diff, 0.75),
                }
            })
            .collect()
    }

    /// Long format: one row per trial and step.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["trial", "step", "ok", "remc_deviation", "fmmc_deviation", "difference", "error"]);
        for tr in &self.trials {
            for s in 0..self.steps {
                t.push(vec![
                    tr.trial.to_string(),
                    (s + 1).to_string(),
                    tr.ok().to_string(),
                    num(tr.remc[s]),
                    num(tr.fmmc[s]),
                    num(tr.fmmc[s] - tr.remc[s]),
                    tr.error.clone().unwrap_or_default(),
                ]);
            }
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        let [ci, cs, ck, cr, cf, ce] =
            ["trial", "step", "ok", "remc_deviation", "fmmc_deviation", "error"].map(|c| t.column(c));
        let (ci, cs, ck, cr, cf, ce) = (ci?, cs?, ck?, cr?, cf?, ce?);
        let mut trials: Vec<GraphWorldTrial> = Vec::new();
        let mut steps = 0;
        for row in &t.rows {
            let trial = parse_usize(&row[ci])?;
            let step = parse_usize(&row[cs])?;
            steps = steps.max(step);
            if trials.last().is_none_or(|l| l.trial != trial) {
                let error = (!parse_bool(&row[ck])?).then(|| row[ce].clone());
                trials.push(GraphWorldTrial { trial, error, remc: Vec::new(), fmmc: Vec::new() });
            }
            let cur = trials.last_mut().expect("pushed above");
            cur.remc.push(parse_f64(&row[cr])?);
            cur.fmmc.push(parse_f64(&row[cf])?);
        }
        Ok(Self { steps, trials })
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new([
            "step",
            "trials",
            "remc_median",
            "fmmc_median",
            "difference_q1",
            "difference_median",
            "difference_q3",
        ]);
        for s in self.summary() {
            t.push(vec![
                s.step.to_string(),
                s.trials.to_string(),
                num(s.remc_median),
                num(s.fmmc_median),
                num(s.difference_q1),
                num(s.difference_median),
                num(s.difference_q3),
            ]);
        }
        t
    }
}

/// Stationary distribution of an irreducible chain: solves `(P − I)ρ = 0`, `1ᵀρ = 1`.
pub fn stationary_distribution(p: &StochasticMatrix) -> Result<Distribution> {
    let n = p.n();
    let mut a: DMatrix<f64> = p.matrix() - DMatrix::identity(n, n);
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).context("chain has no unique stationary distribution")?;
    let clipped: Vec<f64> = x.iter().map(|v| if v.abs() < 1e-14 { 0.0 } else { *v }).collect();
    Ok(Distribution::new(clipped)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub k: usize,
    pub expected_deviation: f64,
    pub mle_variance: f64,
    pub clt_variance: f64,
}

pub fn variance_rows(study: &VarianceStudy) -> Vec<VarianceRow> {
    (0..study.steps())
        .map(|i| VarianceRow {
            k: i + 1,
            expected_deviation: study.per_step_expected_deviation[i],
            mle_variance: study.per_step_mle[i],
            clt_variance: study.per_step_clt[i],
        })
        .collect()
}

pub fn variance_table(rows: &[VarianceRow]) -> Table {
    let mut t = Table::new(["k", "expected_dev", "mle_var", "clt_var"]);
    for r in rows {
        t.push(vec![r.k.to_string(), num(r.expected_deviation), num(r.mle_variance), num(r.clt_variance)]);
    }
    t
}

pub fn variance_rows_from_table(t: &Table) -> Result<Vec<VarianceRow>> {
    let (ck, ce, cm, cc) = (t.column("k")?, t.column("expected_dev")?, t.column("mle_var")?, t.column("clt_var")?);
    t.rows
        .iter()
        .map(|r| {
            Ok(VarianceRow {
                k: parse_usize(&r[ck])?,
                expected_deviation: parse_f64(&r[ce])?,
                mle_variance: parse_f64(&r[cm])?,
                clt_variance: parse_f64(&r[cc])?,
            })
        })
        .collect()
}

/// How the sampled variance compares with the independent-draw prediction over
/// horizons `from..=to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceFit {
    pub from: usize,
    pub to: usize,
    /// Extremes of `mle / clt` over the window.
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Least-squares slope of `ln mle` against `ln k`.
    pub slope: f64,
}

pub fn variance_fit(rows: &[VarianceRow], from: usize, to: usize) -> Result<VarianceFit> {
    let window: Vec<&VarianceRow> = rows.iter().filter(|r| r.k >= from && r.k <= to).collect();
    if window.len() < 2 {
        bail!("variance window {from}..={to} holds fewer than two horizons");
    }
    let ratios: Vec<f64> = window.iter().map(|r| r.mle_variance / r.clt_variance).collect();
    let pts: Vec<(f64, f64)> = window.iter().map(|r| (r.k as f64, r.mle_variance)).collect();
    Ok(VarianceFit {
        from,
        to,
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        slope: log_log_slope(&pts),
    })
}

pub fn variance_fit_table(f: &VarianceFit) -> Table {
    let mut t = Table::new(["from", "to", "min_ratio", "max_ratio", "slope"]);
    t.push(vec![f.from.to_string(), f.to.to_string(), num(f.min_ratio), num(f.max_ratio), num(f.slope)]);
    t
}

/// Solves REMC for `target` and runs the variance study from `start`.
pub fn variance_experiment(
    graph: &RegionGraph,
    target: &Distribution,
    start: usize,
    steps: usize,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<(StochasticMatrix, VarianceStudy)> {
    check_study(graph.n(), start, steps, trials)?;
    let chain = solve_remc(graph, target, tol)?.chain;
    let study = variance_study(&chain, target, start, steps, trials, seed);
    Ok((chain, study))
}

pub fn check_study(n: usize, start: usize, steps: usize, trials: usize) -> Result<()> {
    if start >= n {
        bail!("start region {start} is out of range for {n} regions");
    }
    if steps == 0 || trials < 2 {
        bail!("need at least one step and two trials");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_start_and_target_give_zero_first_deviation() {
        let g = RegionGraph::complete(3).unwrap();
        let rho = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let (remc, fmmc) = compare_chains(&g, &rho, &rho, 4, 1e-7).unwrap();
        assert!(remc[0].abs() < 1e-15 && fmmc[0].abs() < 1e-15);
        // a stationary start stays put
        assert!(remc.iter().chain(&fmmc).all(|d| d.abs() < 1e-6));
    }

    #[test]
    fn dataset_round_trips_through_csv() {
        let g = RegionGraph::complete(3).unwrap();
        let mut d = graph_world_experiment(&g, 3, 4, 9, 1e-6).unwrap();
        d.trials[1] = GraphWorldTrial {
            trial: 1,
            error: Some("solver failed, badly".into()),
            remc: vec![f64::NAN; 4],
            fmmc: vec![f64::NAN; 4],
        };
        let text = d.to_table().to_csv().unwrap();
        let back = GraphWorldDataset::from_table(&Table::from_csv(&text).unwrap()).unwrap();
        assert_eq!(back.steps, 4);
        assert_eq!(back.trials.len(), 3);
        assert_eq!(back.trials[0], d.trials[0]);
        assert_eq!(back.trials[1].error, d.trials[1].error);
        assert!(back.trials[1].remc.iter().all(|x| x.is_nan()));
        assert_eq!(back.summary()[0].trials, 2);
    }

    #[test]
    fn stationary_distribution_of_two_state_chain() {
        let p = StochasticMatrix::from_rows(&[vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap();
        let rho = stationary_distribution(&p).unwrap();
        assert!((rho.values()[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn variance_rows_round_trip() {
        let rows = vec![
            VarianceRow { k: 1, expected_deviation: 0.5, mle_variance: 0.25, clt_variance: 0.1 },
            VarianceRow { k: 2, expected_deviation: 0.1, mle_variance: 0.125, clt_variance: 0.05 },
        ];
        let text = variance_table(&rows).to_csv().unwrap();
        assert_eq!(variance_rows_from_table(&Table::from_csv(&text).unwrap()).unwrap(), rows);
        let fit = variance_fit(&rows, 1, 2).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert_eq!((fit.min_ratio, fit.max_ratio), (2.5, 2.5));
    }
}
