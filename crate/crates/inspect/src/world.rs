//! Synthetic inspection world: labelled occupancy grid, wall reference cloud,
//! foreign objects (discs), and a ray-cast stand-in for a depth camera.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use hemap_core::graph::GraphDocument;
use hemap_core::RegionGraph;
use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloud::ReferenceCloud;
use crate::error::{Error, Result};
use crate::grid::{GridDocument, OccupancyGrid};
use crate::pose::{propagate_point, wrap_angle, ObservedPoint, PlanarPose};

/// Ray-cast depth sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    /// Horizontal field of view in degrees.
    #[serde(default = "default_fov_deg")]
    pub fov_deg: f64,
    #[serde(default = "default_min_depth")]
    pub min_depth: f64,
    #[serde(default = "default_max_depth")]
    pub max_depth: f64,
    #[serde(default = "default_rays")]
    pub rays: usize,
    #[serde(default = "default_range_sigma")]
    pub range_noise_sigma: f64,
    /// Isotropic standard deviation added to every measurement covariance so it
    /// stays positive definite when the range noise is switched off.
    #[serde(default = "default_covariance_floor")]
    pub covariance_floor: f64,
}

fn default_fov_deg() -> f64 {
    69.0
}
fn default_min_depth() -> f64 {
    0.2
}
fn default_max_depth() -> f64 {
    3.0
}
fn default_rays() -> usize {
    64
}
fn default_range_sigma() -> f64 {
    0.01
}
fn default_covariance_floor() -> f64 {
    0.001
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            fov_deg: default_fov_deg(),
            min_depth: default_min_depth(),
            max_depth: default_max_depth(),
            rays: default_rays(),
            range_noise_sigma: default_range_sigma(),
            covariance_floor: default_covariance_floor(),
        }
    }
}

impl SensorModel {
    pub fn fov(&self) -> f64 {
        self.fov_deg.to_radians()
    }

    pub fn validate(&self) -> Result<()> {
        let fov = self.fov();
        let ok = fov > 0.0
            && fov <= 2.0 * PI + 1e-12
            && self.min_depth > 0.0
            && self.max_depth > self.min_depth
            && self.rays > 0
            && self.range_noise_sigma >= 0.0
            && self.covariance_floor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!("bad sensor parameters {self:?}")))
        }
    }

    /// Ray bearings relative to the heading, evenly spread over the field of view.
    pub fn ray_offsets(&self) -> Vec<f64> {
        let fov = self.fov();
        (0..self.rays).map(|k| -fov / 2.0 + fov * (k as f64 + 0.5) / self.rays as f64).collect()
    }

    /// Covariance of a sensor-frame point.
    pub fn local_covariance(&self) -> Matrix2<f64> {
        Matrix2::identity() * (self.range_noise_sigma.powi(2) + self.covariance_floor.powi(2))
    }
}

/// Localisation uncertainty of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseNoise {
    pub sigma_xy: f64,
    pub sigma_theta: f64,
}

impl Default for PoseNoise {
    fn default() -> Self {
        Self { sigma_xy: 0.005, sigma_theta: 0.003 }
    }
}

impl PoseNoise {
    pub fn covariance(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(self.sigma_xy.powi(2), self.sigma_xy.powi(2), self.sigma_theta.powi(2)))
    }
}

/// How many foreign objects a trial gets and how large they are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FodSpec {
    /// Inclusive range of the per-trial count.
    pub count: [usize; 2],
    /// Radius range.
    pub radius: [f64; 2],
    /// Minimum centre-to-centre distance.
    #[serde(default)]
    pub min_separation: f64,
}

impl Default for FodSpec {
    fn default() -> Self {
        Self { count: [3, 5], radius: [0.05, 0.15], min_separation: 1.0 }
    }
}

/// A foreign object: a disc in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fod {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Fod {
    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.center[0], self.center[1])
    }

    /// Entry distance of the ray `origin + t·dir` (unit `dir`), if it meets the disc
    /// ahead of the origin.
    pub fn ray_entry(&self, origin: &Vector2<f64>, dir: &Vector2<f64>) -> Option<f64> {
        let m = origin - self.center();
        let b = m.dot(dir);
        let c = m.norm_squared() - self.radius * self.radius;
        if c <= 0.0 {
            return Some(0.0);
        }
        let disc = b * b - c;
        if disc < 0.0 || b > 0.0 {
            return None;
        }
        Some(-b - disc.sqrt())
    }
}

/// Scenario file contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub grid: GridDocument,
    pub graph: GraphDocument,
    /// Robot start position.
    pub start: [f64; 2],
    /// Robot radius used to inflate obstacles for navigation.
    pub inflation_radius: f64,
    /// Distance between reference samples along wall faces.
    pub cloud_spacing: f64,
    #[serde(default = "default_k_nn")]
    pub k_nn: usize,
    /// Waypoint candidates live on every `visibility_stride`-th cell in each axis.
    #[serde(default = "default_stride")]
    pub visibility_stride: usize,
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default)]
    pub pose_noise: PoseNoise,
    #[serde(default)]
    pub fods: FodSpec,
}

fn default_k_nn() -> usize {
    crate::detection::DEFAULT_K_NN
}
fn default_stride() -> usize {
    2
}

/// Samples wall faces (boundaries between a free cell and an occupied cell or the
/// border) every `spacing`, with normals pointing into free space and the free
/// cell's region.
pub fn reference_cloud_from_grid(grid: &OccupancyGrid, spacing: f64, k_nn: usize) -> Result<ReferenceCloud> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidScenario("cloud spacing must be positive".into()));
    }
    let res = grid.resolution();
    let per_face = ((res / spacing).round() as usize).max(1);
    let step = res / per_face as f64;
    let (mut points, mut normals, mut regions) = (Vec::new(), Vec::new(), Vec::new());
    for idx in 0..grid.len() {
        let Some(region) = grid.region(idx) else { continue };
        let (c, r) = grid.col_row(idx);
        let lo = grid.origin() + Vector2::new(c as f64 * res, r as f64 * res);
        // (neighbour offset, inward normal, face start, face direction)
        let faces = [
            ((1i64, 0i64), Vector2::new(-1.0, 0.0), lo + Vector2::new(res, 0.0), Vector2::new(0.0, 1.0)),
            ((-1, 0), Vector2::new(1.0, 0.0), lo, Vector2::new(0.0, 1.0)),
            ((0, 1), Vector2::new(0.0, -1.0), lo + Vector2::new(0.0, res), Vector2::new(1.0, 0.0)),
            ((0, -1), Vector2::new(0.0, 1.0), lo, Vector2::new(1.0, 0.0)),
        ];
        for (off, normal, start, along) in faces {
            let (nc, nr) = (c as i64 + off.0, r as i64 + off.1);
            let inside = nc >= 0 && nr >= 0 && nc < grid.width() as i64 && nr < grid.height() as i64;
            if inside && grid.is_free(grid.index(nc as usize, nr as usize)) {
                continue;
            }
            for k in 0..per_face {
                points.push(start + along * ((k as f64 + 0.5) * step));
                normals.push(normal);
                regions.push(region);
            }
        }
    }
    ReferenceCloud::new(points, normals, regions, grid.n_regions(), k_nn)
}

/// Reference points visible from a sparse lattice of free cells, sorted by bearing.
#[derive(Debug, Clone)]
pub struct VisibilityIndex {
    cells: Vec<usize>,
    lists: Vec<Vec<(f32, u32)>>,
}

impl VisibilityIndex {
    /// For each lattice cell that is free in `nav`, the reference points within the
    /// sensor's depth band, facing the cell, with an unobstructed line of sight in
    /// `grid`.
    pub fn build(
        grid: &OccupancyGrid,
        nav: &OccupancyGrid,
        cloud: &ReferenceCloud,
        sensor: &SensorModel,
        stride: usize,
    ) -> Self {
        let stride = stride.max(1);
        let offset = stride / 2;
        let cells: Vec<usize> = (0..nav.len())
            .filter(|&i| {
                let (c, r) = nav.col_row(i);
                nav.is_free(i) && c % stride == offset && r % stride == offset
            })
            .collect();
        let (lo2, hi2) = (sensor.min_depth.powi(2), sensor.max_depth.powi(2));
        let lists = cells
            .iter()
            .map(|&cell| {
                let o = nav.cell_center(cell);
                let mut list: Vec<(f32, u32)> = cloud
                    .points()
                    .iter()
                    .zip(cloud.normals())
                    .enumerate()
                    .filter_map(|(i, (p, n))| {
                        let d = p - o;
                        let d2 = d.norm_squared();
                        if d2 < lo2 || d2 > hi2 || n.dot(&d) >= 0.0 {
                            return None;
                        }
                        grid.line_of_sight(&o, p, 1e-7).then_some((d.y.atan2(d.x) as f32, i as u32))
                    })
                    .collect();
                list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                list
            })
            .collect();
        Self { cells, lists }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn visible(&self, slot: usize) -> &[(f32, u32)] {
        &self.lists[slot]
    }

    /// Sum of `weights` over reference points inside the frustum of half-angle
    /// `half_fov` looking along `heading` from lattice cell `slot`.
    pub fn frustum_sum(&self, slot: usize, heading: f64, half_fov: f64, weights: &[f64]) -> f64 {
        let list = &self.lists[slot];
        // Bearings are stored in f32, so the ends at ±π are treated as unbounded.
        let sum_range = |a: f64, b: f64| -> f64 {
            let lo = if a <= -PI { 0 } else { list.partition_point(|e| (e.0 as f64) < a) };
            let hi = if b >= PI { list.len() } else { list.partition_point(|e| (e.0 as f64) <= b) };
            list[lo..hi.max(lo)].iter().map(|e| weights[e.1 as usize]).sum()
        };
        if half_fov >= PI {
            return sum_range(-PI, PI);
        }
        let h = wrap_angle(heading);
        let (a, b) = (h - half_fov, h + half_fov);
        if a < -PI {
            sum_range(a + 2.0 * PI, PI) + sum_range(-PI, b)
        } else if b > PI {
            sum_range(a, PI) + sum_range(-PI, b - 2.0 * PI)
        } else {
            sum_range(a, b)
        }
    }
}

/// What a ray hit first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    Wall,
    Fod(usize),
}

/// The static scenario plus the foreign objects of one trial.
#[derive(Debug, Clone)]
pub struct InspectionWorld {
    name: String,
    grid: Arc<OccupancyGrid>,
    static_nav: Arc<OccupancyGrid>,
    nav: OccupancyGrid,
    cloud: Arc<ReferenceCloud>,
    graph: RegionGraph,
    visibility: Arc<VisibilityIndex>,
    /// Visibility slots per region that are free in `nav`.
    candidates: Vec<Vec<usize>>,
    sensor: SensorModel,
    pose_noise: PoseNoise,
    fod_spec: FodSpec,
    inflation_radius: f64,
    start_cell: usize,
    fods: Vec<Fod>,
}

impl InspectionWorld {
    pub fn from_document(doc: ScenarioDocument) -> Result<Self> {
        doc.sensor.validate()?;
        let (graph, _) = doc.graph.into_graph()?;
        let grid = doc.grid.into_grid(graph.n())?;
        if !(doc.inflation_radius >= 0.0) {
            return Err(Error::InvalidScenario("inflation radius must be non-negative".into()));
        }
        if doc.fods.count[0] > doc.fods.count[1]
            || !(doc.fods.radius[0] > 0.0 && doc.fods.radius[0] <= doc.fods.radius[1])
        {
            return Err(Error::InvalidScenario("bad foreign-object ranges".into()));
        }
        let nav = grid.inflate(doc.inflation_radius);
        let start = Vector2::new(doc.start[0], doc.start[1]);
        let start_cell = nav
            .cell_at(&start)
            .filter(|&c| nav.is_free(c))
            .ok_or_else(|| Error::InvalidScenario(format!("start {:?} is not navigable", doc.start)))?;
        let cloud = reference_cloud_from_grid(&grid, doc.cloud_spacing, doc.k_nn)?;
        let visibility = VisibilityIndex::build(&grid, &nav, &cloud, &doc.sensor, doc.visibility_stride);
        let mut world = Self {
            name: doc.name,
            grid: Arc::new(grid),
            static_nav: Arc::new(nav.clone()),
            nav,
            cloud: Arc::new(cloud),
            graph,
            visibility: Arc::new(visibility),
            candidates: Vec::new(),
            sensor: doc.sensor,
            pose_noise: doc.pose_noise,
            fod_spec: doc.fods,
            inflation_radius: doc.inflation_radius,
            start_cell,
            fods: Vec::new(),
        };
        world.refresh_candidates();
        Ok(world)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Raw occupancy with region labels.
    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    /// Navigable cells for the current trial (inflated walls and objects).
    pub fn nav(&self) -> &OccupancyGrid {
        &self.nav
    }

    /// Navigable cells without foreign objects.
    pub fn static_nav(&self) -> &OccupancyGrid {
        &self.static_nav
    }

    pub fn cloud(&self) -> &ReferenceCloud {
        &self.cloud
    }

    pub fn graph(&self) -> &RegionGraph {
        &self.graph
    }

    pub fn n_regions(&self) -> usize {
        self.graph.n()
    }

    pub fn sensor(&self) -> &SensorModel {
        &self.sensor
    }

    pub fn pose_noise(&self) -> &PoseNoise {
        &self.pose_noise
    }

    pub fn fod_spec(&self) -> &FodSpec {
        &self.fod_spec
    }

    pub fn start_cell(&self) -> usize {
        self.start_cell
    }

    pub fn fods(&self) -> &[Fod] {
        &self.fods
    }

    pub fn visibility(&self) -> &VisibilityIndex {
        &self.visibility
    }

    /// Visibility slots of `region` that are currently navigable.
    pub fn candidate_slots(&self, region: usize) -> &[usize] {
        &self.candidates[region]
    }

    /// Copy of the world with a new set of foreign objects.
    pub fn with_fods(&self, fods: Vec<Fod>) -> Result<Self> {
        for f in &fods {
            if !(f.radius > 0.0) || self.grid.region_at(&f.center()).is_none() {
                return Err(Error::InvalidScenario(format!("object {f:?} is not in free space")));
            }
        }
        let mut w = self.clone();
        w.nav = blocked_nav(&self.static_nav, &fods, self.inflation_radius);
        w.fods = fods;
        w.refresh_candidates();
        Ok(w)
    }

    fn refresh_candidates(&mut self) {
        let mut per_region = vec![Vec::new(); self.n_regions()];
        for (slot, &cell) in self.visibility.cells().iter().enumerate() {
            if let Some(r) = self.nav.region(cell) {
                per_region[r].push(slot);
            }
        }
        self.candidates = per_region;
    }

    /// Structural checks: every region navigable and connected, every graph edge
    /// traversable inside the union of its two regions, start navigable, every region
    /// owning wall samples and waypoint candidates.
    pub fn validate(&self) -> Result<()> {
        connectivity_violation(&self.nav, &self.graph).map_or(Ok(()), |m| Err(Error::InvalidScenario(m)))?;
        if !self.nav.is_free(self.start_cell) {
            return Err(Error::InvalidScenario("start cell is blocked".into()));
        }
        let mut has_points = vec![false; self.n_regions()];
        for &r in self.cloud.regions() {
            has_points[r] = true;
        }
        if let Some(r) = has_points.iter().position(|&h| !h) {
            return Err(Error::InvalidScenario(format!("region {r} has no wall samples")));
        }
        if let Some(r) = self.candidates.iter().position(|c| c.is_empty()) {
            return Err(Error::InvalidScenario(format!("region {r} has no waypoint candidates")));
        }
        Ok(())
    }

    /// First surface along a unit ray, within `max_range`.
    pub fn cast(&self, origin: &Vector2<f64>, dir: &Vector2<f64>, max_range: f64) -> Option<(f64, Surface)> {
        let mut best = self.grid.cast_ray(origin, dir, max_range).map(|t| (t, Surface::Wall));
        for (k, f) in self.fods.iter().enumerate() {
            if let Some(t) = f.ray_entry(origin, dir) {
                if t <= max_range && best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, Surface::Fod(k)));
                }
            }
        }
        best
    }
}

/// Static navigation grid with every cell within `radius + inflation` of an object
/// centre blocked.
fn blocked_nav(nav: &OccupancyGrid, fods: &[Fod], inflation: f64) -> OccupancyGrid {
    let mut out = nav.clone();
    for f in fods {
        let reach = f.radius + inflation;
        let c = f.center();
        let span = (reach / nav.resolution()).ceil() as i64 + 1;
        let Some(center_cell) = nav.cell_at(&c) else { continue };
        let (cc, cr) = nav.col_row(center_cell);
        for dr in -span..=span {
            for dc in -span..=span {
                let (col, row) = (cc as i64 + dc, cr as i64 + dr);
                if col < 0 || row < 0 || col >= nav.width() as i64 || row >= nav.height() as i64 {
                    continue;
                }
                let idx = nav.index(col as usize, row as usize);
                if (nav.cell_center(idx) - c).norm() <= reach {
                    out.set(idx, None);
                }
            }
        }
    }
    out
}

/// First violated connectivity requirement, if any.
pub fn connectivity_violation(nav: &OccupancyGrid, graph: &RegionGraph) -> Option<String> {
    let areas = nav.region_areas();
    for r in 0..graph.n() {
        if areas[r] == 0 {
            return Some(format!("region {r} has no navigable cells"));
        }
        if !nav.is_connected(|i| nav.region(i) == Some(r)) {
            return Some(format!("region {r} is not connected"));
        }
    }
    for &(a, b) in graph.edges() {
        if !nav.is_connected(|i| matches!(nav.region(i), Some(r) if r == a || r == b)) {
            return Some(format!("edge {a}->{b} is not traversable"));
        }
    }
    None
}

fn sample_pose_error<R: Rng + ?Sized>(cov: &Matrix3<f64>, rng: &mut R) -> Vector3<f64> {
    let eig = SymmetricEigen::new(*cov);
    let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let scaled = Vector3::from_fn(|i, _| eig.eigenvalues[i].max(0.0).sqrt() * z[i]);
    eig.eigenvectors * scaled
}

/// One depth scan from the true pose `pose.mean`. The robot's estimate is drawn from
/// `N(pose.mean, pose.covariance)`, ranges get Gaussian noise, and each return is
/// mapped to the world through the estimate with first-order covariance.
pub fn sense<R: Rng + ?Sized>(world: &InspectionWorld, pose: &PlanarPose, rng: &mut R) -> Vec<ObservedPoint> {
    sense_with_surfaces(world, pose, rng).into_iter().map(|(p, _)| p).collect()
}

/// [`sense`] that also reports which surface produced each point.
pub fn sense_with_surfaces<R: Rng + ?Sized>(
    world: &InspectionWorld,
    pose: &PlanarPose,
    rng: &mut R,
) -> Vec<(ObservedPoint, Surface)> {
    let sensor = world.sensor();
    let err = sample_pose_error(&pose.covariance, rng);
    let estimate = PlanarPose {
        mean: Vector3::new(pose.mean.x + err.x, pose.mean.y + err.y, wrap_angle(pose.mean.z + err.z)),
        covariance: pose.covariance,
    };
    let local_cov = sensor.local_covariance();
    let origin = pose.position();
    let mut out = Vec::new();
    for offset in sensor.ray_offsets() {
        let a = pose.heading() + offset;
        let dir = Vector2::new(a.cos(), a.sin());
        let Some((t, surface)) = world.cast(&origin, &dir, sensor.max_depth) else { continue };
        if t < sensor.min_depth {
            continue;
        }
        let noise: f64 = rng.sample(StandardNormal);
        let range = t + sensor.range_noise_sigma * noise;
        let local = Vector2::new(offset.cos(), offset.sin()) * range;
        let point = propagate_point(&estimate, local, &local_cov).expect("sensor covariance is positive definite");
        out.push((point, surface));
    }
    out
}

/// Places `count` objects of the scenario's radius range. Each is drawn uniformly
/// over free cells next to a wall; a draw that would disconnect a region or a graph
/// edge, block the start, crowd another object, or be invisible from every waypoint
/// candidate moves to the nearest valid wall cell.
pub fn place_fods<R: Rng + ?Sized>(world: &InspectionWorld, count: usize, rng: &mut R) -> Result<Vec<Fod>> {
    let edge = world.grid().edge_cells();
    if count > 0 && edge.is_empty() {
        return Err(Error::InsufficientPlacements { requested: count, placed: 0 });
    }
    let spec = *world.fod_spec();
    let mut placed: Vec<Fod> = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = edge[rng.random_range(0..edge.len())];
        let radius = if spec.radius[1] > spec.radius[0] {
            rng.random_range(spec.radius[0]..=spec.radius[1])
        } else {
            spec.radius[0]
        };
        let origin = world.grid().cell_center(pick);
        let mut order: Vec<(f64, usize)> =
            edge.iter().map(|&c| ((world.grid().cell_center(c) - origin).norm_squared(), c)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let found = order.into_iter().find_map(|(_, cell)| {
            let c = world.grid().cell_center(cell);
            let fod = Fod { center: [c.x, c.y], radius };
            placement_is_valid(world, &placed, &fod).then_some(fod)
        });
        match found {
            Some(f) => placed.push(f),
            None => return Err(Error::InsufficientPlacements { requested: count, placed: placed.len() }),
        }
    }
    Ok(placed)
}

fn placement_is_valid(world: &InspectionWorld, placed: &[Fod], fod: &Fod) -> bool {
    let c = fod.center();
    let sep = world.fod_spec().min_separation;
    if placed.iter().any(|p| (p.center() - c).norm() < sep.max(p.radius + fod.radius)) {
        return false;
    }
    let mut all = placed.to_vec();
    all.push(*fod);
    let nav = blocked_nav(world.static_nav(), &all, world.inflation_radius);
    if !nav.is_free(world.start_cell()) || connectivity_violation(&nav, world.graph()).is_some() {
        return false;
    }
    let sensor = world.sensor();
    world.visibility().cells().iter().any(|&cell| {
        if !nav.is_free(cell) {
            return false;
        }
        let o = nav.cell_center(cell);
        let d = (c - o).norm() - fod.radius;
        d >= sensor.min_depth && d <= sensor.max_depth && world.grid().line_of_sight(&o, &c, fod.radius)
    })
}
