//! Time-based visitation study on a grid world: a fixed REMC chain picks regions,
//! A* drives the robot to uniformly drawn cells, and the share of time spent per
//! region is compared against the target. Occupied space is an extra region with
//! target 0.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use hemap_core::synthesis::solve_remc;
use hemap_core::{Distribution, StochasticMatrix};
use hemap_inspect::planner::ergodic_walk;
use hemap_inspect::InspectionWorld;

use crate::stats::{median, quantile};
use crate::table::{num, parse_f64, parse_usize, Table};

/// Target visitation frequencies over the regions.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetPreset {
    Uniform,
    /// Proportional to each region's free area.
    Area,
    /// Given weights, normalized.
    Custom(Vec<f64>),
}

impl fmt::Display for TargetPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => f.write_str("uniform"),
            Self::Area => f.write_str("area"),
            Self::Custom(w) => {
                let parts: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                write!(f, "custom:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for TargetPreset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "area" => Ok(Self::Area),
            _ => {
                let body = s
                    .strip_prefix("custom:")
                    .ok_or_else(|| format!("unknown preset '{s}' (uniform|area|custom:w1,w2,...)"))?;
                body.split(',')
                    .map(|w| w.trim().parse::<f64>().map_err(|_| format!("bad weight '{w}'")))
                    .collect::<std::result::Result<Vec<f64>, String>>()
                    .map(Self::Custom)
            }
        }
    }
}

impl TargetPreset {
    pub fn target(&self, world: &InspectionWorld) -> Result<Distribution> {
        let n = world.n_regions();
        let weights: Vec<f64> = match self {
            Self::Uniform => vec![1.0; n],
            Self::Area => world.static_nav().region_areas().iter().map(|&a| a as f64).collect(),
            Self::Custom(w) => {
                if w.len() != n {
                    bail!("{} custom weights for {n} regions", w.len());
                }
                w.clone()
            }
        };
        Ok(Distribution::normalized(&weights)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridworldConfig {
    pub duration: f64,
    pub speed: f64,
    pub sample_every: f64,
    pub trials: usize,
    pub tolerance: f64,
}

impl Default for GridworldConfig {
    fn default() -> Self {
        Self { duration: 1200.0, speed: 0.2, sample_every: 10.0, trials: 30, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldSample {
    pub time: f64,
    /// `‖f − [ρ, 0]‖₂` over regions plus the obstacle region.
    pub deviation: f64,
    /// Share of time per region, obstacle region last.
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldTrial {
    pub trial: usize,
    pub samples: Vec<GridworldSample>,
    pub waypoint_counts: Vec<usize>,
    pub navigation_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldDataset {
    pub preset: String,
    /// Region targets followed by the obstacle region's 0.
    pub target: Vec<f64>,
    pub chain: StochasticMatrix,
    pub trials: Vec<GridworldTrial>,
}

fn deviation(freq: &[f64], target: &[f64]) -> f64 {
    freq.iter().zip(target).map(|(f, t)| (f - t).powi(2)).sum::<f64>().sqrt()
}

/// Runs `cfg.trials` walks; trial `t` uses stream `t` of `seed`.
pub fn gridworld_experiment(
    world: &InspectionWorld,
    preset: &TargetPreset,
    cfg: &GridworldConfig,
    seed: u64,
) -> Result<GridworldDataset> {
    if cfg.trials == 0 {
        bail!("gridworld experiment needs at least one trial");
    }
    let target = preset.target(world)?;
    let chain = solve_remc(world.graph(), &target, cfg.tolerance)?.chain;
    let mut extended = target.values().to_vec();
    extended.push(0.0);
    let mut trials = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let walk = ergodic_walk(world, &chain, cfg.duration, cfg.speed, cfg.sample_every, seed, trial as u64)?;
        let samples = walk
            .samples
            .into_iter()
            .map(|(time, frequencies)| GridworldSample {
                time,
                deviation: deviation(&frequencies, &extended),
                frequencies,
            })
            .collect();
        trials.push(GridworldTrial {
            trial,
            samples,
            waypoint_counts: walk.waypoint_counts,
            navigation_failures: walk.navigation_failures,
        });
    }
    Ok(GridworldDataset { preset: preset.to_string(), target: extended, chain, trials })
}

/// Order statistics of the deviation across trials at one sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridworldStep {
    pub time: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl GridworldDataset {
    pub fn n_regions(&self) -> usize {
        self.target.len() - 1
    }

    pub fn summary(&self) -> Vec<GridworldStep> {
        let len = self.trials.iter().map(|t| t.samples.len()).min().unwrap_or(0);
        (0..len)
            .map(|i| {
                let d: Vec<f64> = self.trials.iter().map(|t| t.samples[i].deviation).collect();
                GridworldStep {
                    time: self.trials[0].samples[i].time,
                    q1: quantile(&d, 0.25).unwrap_or(f64::NAN),
                    median: median(&d).unwrap_or(f64::NAN),
                    q3: quantile(&d, 0.75).unwrap_or(f64::NAN),
                }
            })
            .collect()
    }

    /// Largest time share ever booked to the obstacle region.
    pub fn max_obstacle_frequency(&self) -> f64 {
        self.trials
            .iter()
            .flat_map(|t| &t.samples)
            .map(|s| *s.frequencies.last().expect("obstacle entry"))
            .fold(0.0, f64::max)
    }

    /// Waypoints per region summed over trials, as shares.
    pub fn waypoint_shares(&self) -> Vec<f64> {
        let mut total = vec![0usize; self.n_regions()];
        for t in &self.trials {
            for (acc, c) in total.iter_mut().zip(&t.waypoint_counts) {
                *acc += c;
            }
        }
        let sum = total.iter().sum::<usize>().max(1) as f64;
        total.iter().map(|&c| c as f64 / sum).collect()
    }

    fn trace_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["trial", "time", "deviation"].map(String::from).to_vec();
        h.extend((0..self.n_regions()).map(|r| format!("f_{r}")));
        h.push("f_obstacle".into());
        h
    }

    /// One row per trial and sample time.
    pub fn trace_table(&self) -> Table {
        let mut t = Table::new(self.trace_header());
        for tr in &self.trials {
            for s in &tr.samples {
                let mut row = vec![tr.trial.to_string(), num(s.time), num(s.deviation)];
                row.extend(s.frequencies.iter().map(|&f| num(f)));
                t.push(row);
            }
        }
        t
    }

    /// Inverse of [`Self::trace_table`] for the samples of each trial.
    pub fn samples_from_table(t: &Table) -> Result<Vec<(usize, GridworldSample)>> {
        let (ct, cs, cd) = (t.column("trial")?, t.column("time")?, t.column("deviation")?);
        let mut freq_cols = t.columns_with_prefix("f_");
        freq_cols.retain(|&c| t.header[c] != "f_obstacle");
        freq_cols.push(t.column("f_obstacle")?);
        t.rows
            .iter()
            .map(|r| {
                Ok((
                    parse_usize(&r[ct])?,
                    GridworldSample {
                        time: parse_f64(&r[cs])?,
                        deviation: parse_f64(&r[cd])?,
                        frequencies: freq_cols.iter().map(|&c| parse_f64(&r[c])).collect::<Result<_>>()?,
                    },
                ))
            })
            .collect()
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(["time", "deviation_q1", "deviation_median", "deviation_q3"]);
        for s in self.summary() {
            t.push(vec![num(s.time), num(s.q1), num(s.median), num(s.q3)]);
        }
        t
    }

    pub fn waypoint_table(&self) -> Table {
        let mut t = Table::new(["region", "target", "waypoint_share"]);
        for (r, share) in self.waypoint_shares().iter().enumerate() {
            t.push(vec![r.to_string(), num(self.target[r]), num(*share)]);
        }
        t
    }
}
