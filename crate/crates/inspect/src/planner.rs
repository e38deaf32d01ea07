//! Region-level and waypoint-level planning for inspection, with the random and
//! greedy baselines, and the trial loop that ties planning, navigation, sensing and
//! detection together.

use std::fmt;
use std::str::FromStr;

use hemap_core::simulation::{trial_rng, ChainSampler};
use hemap_core::synthesis::solve_remc;
use hemap_core::{smooth_distribution, Distribution, RegionGraph, StochasticMatrix};
use nalgebra::Vector2;
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::detection::{
    batch_update, extract_candidates, information_measures, AnomalyBelief, DEFAULT_D_BUFFER, DEFAULT_K_NN,
    DEFAULT_LINK_DISTANCE, DEFAULT_PRIOR_H0, DEFAULT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::grid::astar_within;
use crate::pose::PlanarPose;
use crate::world::{place_fods, sense, Fod, InspectionWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Hemap,
    Random,
    Greedy,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Hemap, PlannerKind::Random, PlannerKind::Greedy];
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlannerKind::Hemap => "hemap",
            PlannerKind::Random => "random",
            PlannerKind::Greedy => "greedy",
        })
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hemap" => Ok(PlannerKind::Hemap),
            "random" => Ok(PlannerKind::Random),
            "greedy" => Ok(PlannerKind::Greedy),
            _ => Err(Error::InvalidConfig(format!("unknown planner {s:?} (hemap, random, greedy)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    /// Steps between chain re-solves.
    pub horizon: usize,
    pub n_waypoints: usize,
    /// Candidate poses drawn per waypoint.
    pub n_sample: usize,
    /// Smoothing added to the normalised region entropies.
    pub delta: f64,
    pub total_steps: usize,
    pub d_buffer: f64,
    pub prior_h0: f64,
    pub k_nn: usize,
    /// `P(H1)` needed for a reference point to count as anomalous.
    pub threshold: f64,
    pub link_distance: f64,
    /// Extra distance beyond the object radius within which a centroid counts as a hit.
    pub match_tolerance: f64,
    pub solver_tolerance: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            kind: PlannerKind::Hemap,
            horizon: 5,
            n_waypoints: 2,
            n_sample: 1000,
            delta: 0.001,
            total_steps: 35,
            d_buffer: DEFAULT_D_BUFFER,
            prior_h0: DEFAULT_PRIOR_H0,
            k_nn: DEFAULT_K_NN,
            threshold: DEFAULT_THRESHOLD,
            link_distance: DEFAULT_LINK_DISTANCE,
            match_tolerance: 0.25,
            solver_tolerance: 1e-6,
        }
    }
}

impl PlannerConfig {
    pub fn with_kind(mut self, kind: PlannerKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.n_sample == 0 {
            return bad("n_sample must be at least 1");
        }
        if !(self.delta >= 0.0) {
            return bad("delta must be non-negative");
        }
        if self.k_nn == 0 {
            return bad("k_nn must be at least 1");
        }
        if !(self.d_buffer >= 0.0) {
            return bad("d_buffer must be non-negative");
        }
        if !(self.prior_h0 > 0.0 && self.prior_h0 < 1.0) {
            return bad("prior must lie in (0, 1)");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if !(self.solver_tolerance > 0.0) {
            return bad("solver tolerance must be positive");
        }
        Ok(())
    }
}

/// How a waypoint is chosen among scored candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaypointRule {
    /// With probability proportional to the information in view.
    Proportional,
    /// Uniformly, ignoring information.
    Uniform,
    /// The candidate with the most information in view (first on ties).
    Best,
}

impl WaypointRule {
    pub fn for_planner(kind: PlannerKind) -> Self {
        match kind {
            PlannerKind::Hemap => WaypointRule::Proportional,
            PlannerKind::Random => WaypointRule::Uniform,
            PlannerKind::Greedy => WaypointRule::Best,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    /// Navigation cell.
    pub cell: usize,
    pub position: Vector2<f64>,
    pub heading: f64,
    /// Information in view when chosen.
    pub score: f64,
}

/// Draws `n_sample` poses uniformly over the region's candidate cells with uniform
/// headings and picks one by `rule`.
pub fn place_waypoint<R: Rng + ?Sized>(
    world: &InspectionWorld,
    region: usize,
    mu_p: &[f64],
    n_sample: usize,
    rule: WaypointRule,
    rng: &mut R,
) -> Result<Waypoint> {
    let slots = world.candidate_slots(region);
    if slots.is_empty() {
        return Err(Error::EmptyRegion(region));
    }
    let n_sample = n_sample.max(1);
    let half = world.sensor().fov() / 2.0;
    let vis = world.visibility();
    let draws: Vec<(usize, f64)> = (0..n_sample)
        .map(|_| {
            let slot = slots[rng.random_range(0..slots.len())];
            let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            (slot, heading)
        })
        .collect();
    let score = |&(slot, h): &(usize, f64)| vis.frustum_sum(slot, h, half, mu_p);
    let pick = match rule {
        WaypointRule::Uniform => rng.random_range(0..n_sample),
        WaypointRule::Best => {
            let mut best = (f64::NEG_INFINITY, 0);
            for (k, d) in draws.iter().enumerate() {
                let s = score(d);
                if s > best.0 {
                    best = (s, k);
                }
            }
            best.1
        }
        WaypointRule::Proportional => {
            let scores: Vec<f64> = draws.iter().map(score).collect();
            proportional_pick(&scores, rng)
        }
    };
    let (slot, heading) = draws[pick];
    let cell = vis.cells()[slot];
    Ok(Waypoint { cell, position: world.nav().cell_center(cell), heading, score: score(&draws[pick]) })
}

/// Entropy-weighted waypoint choice.
pub fn waypoint_placement<R: Rng + ?Sized>(
    world: &InspectionWorld,
    region: usize,
    mu_p: &[f64],
    n_sample: usize,
    rng: &mut R,
) -> Result<Waypoint> {
    place_waypoint(world, region, mu_p, n_sample, WaypointRule::Proportional, rng)
}

/// Index drawn with probability proportional to `scores`; uniform if all are zero.
pub fn proportional_pick<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> usize {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return rng.random_range(0..scores.len());
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, s) in scores.iter().enumerate() {
        acc += s;
        if u < acc {
            return k;
        }
    }
    // Rounding left u at the very top: take the last positive score.
    scores.iter().rposition(|&s| s > 0.0).expect("positive total")
}

/// The chain in use by the region planner and how often it was solved.
#[derive(Debug, Clone, Default)]
pub struct ChainCache {
    chain: Option<(StochasticMatrix, ChainSampler)>,
    target: Option<Distribution>,
    pub solves: usize,
}

impl ChainCache {
    pub fn chain(&self) -> Option<&StochasticMatrix> {
        self.chain.as_ref().map(|c| &c.0)
    }

    pub fn target(&self) -> Option<&Distribution> {
        self.target.as_ref()
    }
}

/// Region entropies as a smoothed target distribution (uniform if all are zero).
pub fn entropy_target(mu_r: &[f64], delta: f64) -> Distribution {
    let base = Distribution::normalized(mu_r).unwrap_or_else(|_| Distribution::uniform(mu_r.len()));
    smooth_distribution(&base, delta)
}

/// One region decision. Every `horizon` steps (and on first use) the entropies are
/// turned into a target and the REMC chain is re-solved; the next region is drawn
/// from the current region's column of the cached chain.
#[allow(clippy::too_many_arguments)]
pub fn hemap_step_plan<R: Rng + ?Sized>(
    graph: &RegionGraph,
    current: usize,
    mu_r: &[f64],
    delta: f64,
    k: usize,
    horizon: usize,
    tolerance: f64,
    cache: &mut ChainCache,
    rng: &mut R,
) -> Result<usize> {
    if mu_r.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::InvalidConfig("region measures must be non-negative".into()));
    }
    if cache.chain.is_none() || k.is_multiple_of(horizon.max(1)) {
        let target = entropy_target(mu_r, delta);
        let solved = solve_remc(graph, &target, tolerance)?;
        let sampler = ChainSampler::new(&solved.chain);
        cache.chain = Some((solved.chain, sampler));
        cache.target = Some(target);
        cache.solves += 1;
    }
    let (_, sampler) = cache.chain.as_ref().expect("chain cached above");
    Ok(sampler.step(current, rng))
}

/// Regions a baseline may move to in one decision: the out-neighbours, sorted.
pub fn moves_from(graph: &RegionGraph, current: usize) -> Vec<usize> {
    let mut opts = graph.out_neighbors(current).to_vec();
    opts.sort_unstable();
    opts
}

/// Random: uniform over [`moves_from`]. Greedy: the option with the largest region
/// entropy, lowest index on ties.
pub fn baseline_step_plan<R: Rng + ?Sized>(
    kind: PlannerKind,
    graph: &RegionGraph,
    current: usize,
    mu_r: &[f64],
    rng: &mut R,
) -> usize {
    let opts = moves_from(graph, current);
    match kind {
        PlannerKind::Greedy => {
            let mut best = opts[0];
            for &o in &opts[1..] {
                if mu_r[o] > mu_r[best] {
                    best = o;
                }
            }
            best
        }
        _ => opts[rng.random_range(0..opts.len())],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointRecord {
    pub step: usize,
    pub region: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub reached: bool,
    pub path_length: f64,
}

/// Everything recorded during one inspection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub planner: PlannerKind,
    pub seed: u64,
    pub trial: u64,
    /// Region occupied before step 1 and after each step.
    pub region_sequence: Vec<usize>,
    pub waypoints: Vec<WaypointRecord>,
    /// Region entropies before step 1 and after each step.
    pub region_entropy: Vec<Vec<f64>>,
    pub centroids: Vec<[f64; 2]>,
    pub fods: Vec<Fod>,
    /// Per object: whether some centroid matched it.
    pub detected: Vec<bool>,
    pub false_positives: usize,
    pub navigation_failures: usize,
    /// Reference-point updates skipped because both likelihoods underflowed.
    pub undefined_updates: usize,
    pub solves: usize,
    pub distance: f64,
}

impl TrialRecord {
    pub fn detected_count(&self) -> usize {
        self.detected.iter().filter(|&&d| d).count()
    }

    pub fn missed_count(&self) -> usize {
        self.detected.len() - self.detected_count()
    }

    /// Fraction of objects detected (1 when there are none).
    pub fn detection_rate(&self) -> f64 {
        if self.fods.is_empty() {
            1.0
        } else {
            self.detected_count() as f64 / self.fods.len() as f64
        }
    }

    /// Steps spent in each region (the start is not counted).
    pub fn visit_counts(&self, n_regions: usize) -> Vec<usize> {
        let mut v = vec![0; n_regions];
        for &r in &self.region_sequence[1..] {
            v[r] += 1;
        }
        v
    }
}

/// Matches centroids against objects: an object is detected if a centroid lies
/// within its radius plus `tolerance`; centroids matching nothing are false positives.
pub fn score_detections(centroids: &[Vector2<f64>], fods: &[Fod], tolerance: f64) -> (Vec<bool>, usize) {
    let hits = |c: &Vector2<f64>, f: &Fod| (c - f.center()).norm() <= f.radius + tolerance;
    let detected = fods.iter().map(|f| centroids.iter().any(|c| hits(c, f))).collect();
    let false_positives = centroids.iter().filter(|c| !fods.iter().any(|f| hits(c, f))).count();
    (detected, false_positives)
}

/// The trial's world: objects placed from stream `2·trial` of `seed`, with a count
/// drawn uniformly from the scenario's range.
pub fn trial_world(base: &InspectionWorld, seed: u64, trial: u64) -> Result<InspectionWorld> {
    let mut rng = trial_rng(seed, 2 * trial);
    let [lo, hi] = base.fod_spec().count;
    let count = rng.random_range(lo..=hi);
    let fods = place_fods(base, count, &mut rng)?;
    base.with_fods(fods)
}

/// Runs one inspection on `world` with planner randomness from stream `2·trial + 1`.
pub fn run_inspection_trial(
    world: &InspectionWorld,
    config: &PlannerConfig,
    seed: u64,
    trial: u64,
) -> Result<TrialRecord> {
    run_inspection_trial_with_belief(world, config, seed, trial).map(|(rec, _)| rec)
}

/// [`run_inspection_trial`] that also returns the final beliefs.
pub fn run_inspection_trial_with_belief(
    world: &InspectionWorld,
    config: &PlannerConfig,
    seed: u64,
    trial: u64,
) -> Result<(TrialRecord, AnomalyBelief)> {
    config.validate()?;
    let mut rng = trial_rng(seed, 2 * trial + 1);
    let graph = world.graph();
    let cloud = world.cloud();
    let nav = world.nav();
    let rule = WaypointRule::for_planner(config.kind);
    let pose_cov = world.pose_noise().covariance();

    let mut belief = AnomalyBelief::new(cloud.len(), config.prior_h0);
    let (mut mu_p, mut mu_r) = information_measures(&belief, cloud);
    let mut cell = world.start_cell();
    let mut region = nav.region(cell).expect("start cell is navigable");
    let mut cache = ChainCache::default();
    let mut rec = TrialRecord {
        planner: config.kind,
        seed,
        trial,
        region_sequence: vec![region],
        waypoints: Vec::new(),
        region_entropy: vec![mu_r.clone()],
        centroids: Vec::new(),
        fods: world.fods().to_vec(),
        detected: Vec::new(),
        false_positives: 0,
        navigation_failures: 0,
        undefined_updates: 0,
        solves: 0,
        distance: 0.0,
    };

    for k in 0..config.total_steps {
        let next = match config.kind {
            PlannerKind::Hemap => hemap_step_plan(
                graph,
                region,
                &mu_r,
                config.delta,
                k,
                config.horizon,
                config.solver_tolerance,
                &mut cache,
                &mut rng,
            )?,
            kind => baseline_step_plan(kind, graph, region, &mu_r, &mut rng),
        };
        for _ in 0..config.n_waypoints {
            let wp = place_waypoint(world, next, &mu_p, config.n_sample, rule, &mut rng)?;
            let from = region;
            let path = astar_within(nav, cell, wp.cell, |c| matches!(nav.region(c), Some(r) if r == from || r == next));
            let mut wrec = WaypointRecord {
                step: k + 1,
                region: next,
                x: wp.position.x,
                y: wp.position.y,
                heading: wp.heading,
                reached: false,
                path_length: 0.0,
            };
            match path {
                Ok(p) => {
                    cell = wp.cell;
                    region = next;
                    rec.distance += p.length;
                    wrec.reached = true;
                    wrec.path_length = p.length;
                    let pose = PlanarPose {
                        mean: nalgebra::Vector3::new(wp.position.x, wp.position.y, wp.heading),
                        covariance: pose_cov,
                    };
                    let obs = sense(world, &pose, &mut rng);
                    let (b, report) = batch_update(cloud, &belief, &obs, config.d_buffer, config.k_nn)?;
                    belief = b;
                    rec.undefined_updates += report.undefined.len();
                    (mu_p, mu_r) = information_measures(&belief, cloud);
                }
                Err(_) => rec.navigation_failures += 1,
            }
            rec.waypoints.push(wrec);
        }
        rec.region_sequence.push(region);
        rec.region_entropy.push(mu_r.clone());
    }

    let centroids = extract_candidates(&belief, cloud, config.threshold, config.link_distance);
    let (detected, fp) = score_detections(&centroids, world.fods(), config.match_tolerance);
    rec.centroids = centroids.iter().map(|c| [c.x, c.y]).collect();
    rec.detected = detected;
    rec.false_positives = fp;
    rec.solves = cache.solves;
    Ok((rec, belief))
}

/// Places objects for `trial` and runs the planner on them. Planners compared with the
/// same `(seed, trial)` see the same objects.
pub fn inspection_trial(base: &InspectionWorld, config: &PlannerConfig, seed: u64, trial: u64) -> Result<TrialRecord> {
    let world = trial_world(base, seed, trial)?;
    run_inspection_trial(&world, config, seed, trial)
}

/// Time spent per region along a walk driven by a fixed chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicWalk {
    /// `(time, fraction of time per region)`; the last entry of each vector is the
    /// obstacle region.
    pub samples: Vec<(f64, Vec<f64>)>,
    /// Waypoints reached per region.
    pub waypoint_counts: Vec<usize>,
    pub navigation_failures: usize,
}

/// Drives the robot from the start cell for `duration` seconds at `speed`: regions are
/// drawn from `chain`, each visit goes to a uniformly drawn navigable cell of the
/// region along the shortest path through the current and next region. Time along
/// each path step is booked to the region of the cell entered. Frequencies are
/// sampled every `sample_every` seconds from time 0.
pub fn ergodic_walk(
    world: &InspectionWorld,
    chain: &StochasticMatrix,
    duration: f64,
    speed: f64,
    sample_every: f64,
    seed: u64,
    trial: u64,
) -> Result<ErgodicWalk> {
    if !(duration > 0.0 && speed > 0.0 && sample_every > 0.0) {
        return Err(Error::InvalidConfig("duration, speed and sampling period must be positive".into()));
    }
    let nav = world.static_nav();
    let n = world.n_regions();
    if chain.n() != n {
        return Err(Error::InvalidConfig(format!("chain has {} states for {n} regions", chain.n())));
    }
    let cells: Vec<Vec<usize>> = (0..n).map(|r| nav.region_cells(r)).collect();
    let sampler = ChainSampler::new(chain);
    let mut rng = trial_rng(seed, trial);
    let mut cell = world.start_cell();
    let mut region = nav.region(cell).expect("start cell is navigable");
    let mut spent = vec![0.0; n + 1];
    let mut t = 0.0;
    let mut next_sample = 0.0;
    let mut walk = ErgodicWalk { samples: Vec::new(), waypoint_counts: vec![0; n], navigation_failures: 0 };
    let freq = |spent: &[f64], t: f64, region: usize| -> Vec<f64> {
        if t > 0.0 {
            spent.iter().map(|s| s / t).collect()
        } else {
            let mut v = vec![0.0; n + 1];
            v[region] = 1.0;
            v
        }
    };
    let mut consecutive_failures = 0;
    while t < duration {
        let next = sampler.step(region, &mut rng);
        let goal = cells[next][rng.random_range(0..cells[next].len())];
        let from = region;
        let path = match astar_within(nav, cell, goal, |c| matches!(nav.region(c), Some(r) if r == from || r == next)) {
            Ok(p) => p,
            Err(_) => {
                walk.navigation_failures += 1;
                consecutive_failures += 1;
                if consecutive_failures > 1000 {
                    return Err(Error::Unreachable { start: cell, goal });
                }
                continue;
            }
        };
        consecutive_failures = 0;
        for pair in path.cells.windows(2) {
            let step_len = (nav.cell_center(pair[1]) - nav.cell_center(pair[0])).norm();
            let r = nav.region(pair[1]).expect("paths stay in free cells");
            let mut dt = step_len / speed;
            while next_sample <= duration && t + dt >= next_sample {
                let part = next_sample - t;
                spent[r] += part;
                t = next_sample;
                dt -= part;
                walk.samples.push((t, freq(&spent, t, region)));
                next_sample += sample_every;
            }
            spent[r] += dt;
            t += dt;
            if t >= duration {
                break;
            }
        }
        cell = goal;
        region = next;
        walk.waypoint_counts[next] += 1;
        if t >= duration {
            break;
        }
    }
    Ok(walk)
}
