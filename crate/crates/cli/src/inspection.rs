//! Paired inspection study: every planner runs the same seeded trials (same object
//! layouts), and HEMaP's detection rate is compared with each baseline by a one-sided
//! paired t-test.

use anyhow::{bail, Result};
use hemap_inspect::detection::AnomalyBelief;
use hemap_inspect::planner::trial_world;
use hemap_inspect::{
    run_inspection_trial_with_belief, InspectionWorld, PlannerConfig, PlannerKind, ReferenceCloud, TrialRecord,
};

use crate::stats::{mean, paired_t_test, std_dev, PairedTest};
use crate::table::{num, parse_f64, parse_usize, Table};

#[derive(Debug, Clone)]
pub struct InspectionStudy {
    pub n_regions: usize,
    pub seed: u64,
    /// Per planner, records for trials `0..trials` in order.
    pub runs: Vec<(PlannerKind, Vec<TrialRecord>)>,
    /// Per planner, the beliefs at the end of trial 0.
    pub first_beliefs: Vec<(PlannerKind, AnomalyBelief)>,
}

/// Runs `trials` trials of every planner in `planners` with `base` settings.
pub fn inspection_study(
    world: &InspectionWorld,
    planners: &[PlannerKind],
    base: &PlannerConfig,
    trials: usize,
    seed: u64,
) -> Result<InspectionStudy> {
    if planners.is_empty() || trials == 0 {
        bail!("inspection study needs at least one planner and one trial");
    }
    let mut runs: Vec<(PlannerKind, Vec<TrialRecord>)> = planners.iter().map(|&k| (k, Vec::new())).collect();
    let mut first_beliefs = Vec::new();
    for trial in 0..trials as u64 {
        let w = trial_world(world, seed, trial)?;
        for (kind, recs) in &mut runs {
            let cfg = base.with_kind(*kind);
            let (rec, belief) = run_inspection_trial_with_belief(&w, &cfg, seed, trial)?;
            recs.push(rec);
            if trial == 0 {
                first_beliefs.push((*kind, belief));
            }
        }
    }
    Ok(InspectionStudy { n_regions: world.n_regions(), seed, runs, first_beliefs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSummary {
    pub planner: PlannerKind,
    pub trials: usize,
    pub mean_rate: f64,
    pub sd_rate: f64,
    pub detected: usize,
    pub missed: usize,
    pub false_positives: usize,
    /// HEMaP minus this planner, when both ran and there are at least two trials.
    pub versus_hemap: Option<PairedTest>,
}

impl InspectionStudy {
    pub fn records(&self, kind: PlannerKind) -> Option<&[TrialRecord]> {
        self.runs.iter().find(|(k, _)| *k == kind).map(|(_, r)| r.as_slice())
    }

    pub fn rates(&self, kind: PlannerKind) -> Option<Vec<f64>> {
        self.records(kind).map(|r| r.iter().map(TrialRecord::detection_rate).collect())
    }

    pub fn summary(&self) -> Vec<PlannerSummary> {
        let hemap = self.rates(PlannerKind::Hemap);
        self.runs
            .iter()
            .map(|(kind, recs)| {
                let rates: Vec<f64> = recs.iter().map(TrialRecord::detection_rate).collect();
                let versus_hemap = match &hemap {
                    Some(h) if *kind != PlannerKind::Hemap && h.len() >= 2 => Some(paired_t_test(h, &rates)),
                    _ => None,
                };
                PlannerSummary {
                    planner: *kind,
                    trials: recs.len(),
                    mean_rate: mean(&rates),
                    sd_rate: std_dev(&rates),
                    detected: recs.iter().map(TrialRecord::detected_count).sum(),
                    missed: recs.iter().map(TrialRecord::missed_count).sum(),
                    false_positives: recs.iter().map(|r| r.false_positives).sum(),
                    versus_hemap,
                }
            })
            .collect()
    }

    fn trial_header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "planner",
            "seed",
            "trial",
            "fods",
            "detected",
            "missed",
            "false_positives",
            "detection_rate",
            "navigation_failures",
            "distance",
        ]
        .map(String::from)
        .to_vec();
        h.extend((0..self.n_regions).map(|r| format!("visits_{r}")));
        h
    }

    pub fn trial_table(&self) -> Table {
        let mut t = Table::new(self.trial_header());
        for (kind, recs) in &self.runs {
            for r in recs {
                let mut row = vec![
                    kind.to_string(),
                    r.seed.to_string(),
                    r.trial.to_string(),
                    r.fods.len().to_string(),
                    r.detected_count().to_string(),
                    r.missed_count().to_string(),
                    r.false_positives.to_string(),
                    num(r.detection_rate()),
                    r.navigation_failures.to_string(),
                    num(r.distance),
                ];
                row.extend(r.visit_counts(self.n_regions).iter().map(|v| v.to_string()));
                t.push(row);
            }
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new([
            "planner",
            "trials",
            "mean_detection_rate",
            "sd_detection_rate",
            "detected",
            "missed",
            "false_positives",
            "hemap_minus_planner",
            "t_statistic",
            "p_value",
        ]);
        for s in self.summary() {
            let (d, tt, p) = match s.versus_hemap {
                Some(x) => (num(x.mean_difference), num(x.t), num(x.p_value)),
                None => (String::new(), String::new(), String::new()),
            };
            t.push(vec![
                s.planner.to_string(),
                s.trials.to_string(),
                num(s.mean_rate),
                num(s.sd_rate),
                s.detected.to_string(),
                s.missed.to_string(),
                s.false_positives.to_string(),
                d,
                tt,
                p,
            ]);
        }
        t
    }
}

/// Counts read back from one row of [`InspectionStudy::trial_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub planner: PlannerKind,
    pub seed: u64,
    pub trial: u64,
    pub fods: usize,
    pub detected: usize,
    pub missed: usize,
    pub false_positives: usize,
    pub detection_rate: f64,
    pub navigation_failures: usize,
    pub distance: f64,
    pub visits: Vec<usize>,
}

impl TrialRow {
    pub fn from_record(r: &TrialRecord, n_regions: usize) -> Self {
        Self {
            planner: r.planner,
            seed: r.seed,
            trial: r.trial,
            fods: r.fods.len(),
            detected: r.detected_count(),
            missed: r.missed_count(),
            false_positives: r.false_positives,
            detection_rate: r.detection_rate(),
            navigation_failures: r.navigation_failures,
            distance: r.distance,
            visits: r.visit_counts(n_regions),
        }
    }

    pub fn from_table(t: &Table) -> Result<Vec<Self>> {
        let c = |name: &str| t.column(name);
        let (cp, cs, ct, cf, cd, cm, cfp, cr, cn, cdist) = (
            c("planner")?,
            c("seed")?,
            c("trial")?,
            c("fods")?,
            c("detected")?,
            c("missed")?,
            c("false_positives")?,
            c("detection_rate")?,
            c("navigation_failures")?,
            c("distance")?,
        );
        let visit_cols = t.columns_with_prefix("visits_");
        t.rows
            .iter()
            .map(|r| {
                Ok(Self {
                    planner: r[cp].parse().map_err(anyhow::Error::msg)?,
                    seed: parse_usize(&r[cs])? as u64,
                    trial: parse_usize(&r[ct])? as u64,
                    fods: parse_usize(&r[cf])?,
                    detected: parse_usize(&r[cd])?,
                    missed: parse_usize(&r[cm])?,
                    false_positives: parse_usize(&r[cfp])?,
                    detection_rate: parse_f64(&r[cr])?,
                    navigation_failures: parse_usize(&r[cn])?,
                    distance: parse_f64(&r[cdist])?,
                    visits: visit_cols.iter().map(|&i| parse_usize(&r[i])).collect::<Result<_>>()?,
                })
            })
            .collect()
    }
}

/// Per reference point: index, position, `P(H0)` and entropy.
pub fn belief_table(cloud: &ReferenceCloud, belief: &AnomalyBelief) -> Table {
    let mut t = Table::new(["index", "x", "y", "p_h0", "entropy"]);
    let h = belief.entropies();
    for (i, p) in cloud.points().iter().enumerate() {
        t.push(vec![i.to_string(), num(p.x), num(p.y), num(belief.p_h0()[i]), num(h[i])]);
    }
    t
}

/// One row of a belief table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefRow {
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub p_h0: f64,
    pub entropy: f64,
}

pub fn belief_from_table(t: &Table) -> Result<Vec<BeliefRow>> {
    let cols = ["index", "x", "y", "p_h0", "entropy"].map(|c| t.column(c));
    let [ci, cx, cy, cp, ch] = cols;
    let (ci, cx, cy, cp, ch) = (ci?, cx?, cy?, cp?, ch?);
    t.rows
        .iter()
        .map(|r| {
            Ok(BeliefRow {
                index: parse_usize(&r[ci])?,
                x: parse_f64(&r[cx])?,
                y: parse_f64(&r[cy])?,
                p_h0: parse_f64(&r[cp])?,
                entropy: parse_f64(&r[ch])?,
            })
        })
        .collect()
}
