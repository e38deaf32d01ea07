//! Inspection side of the planner: a synthetic planar confined space, a depth-sensor
//! stand-in, Bayesian anomaly detection against a reference cloud, and the
//! hierarchical region/waypoint planner with its baselines.

pub mod cloud;
pub mod detection;
pub mod error;
pub mod grid;
pub mod normal;
pub mod planner;
pub mod pose;
pub mod world;

pub use cloud::{CloudDocument, ReferenceCloud};
pub use detection::{
    batch_update, extract_candidates, information_measures, point_likelihoods, AnomalyBelief, BatchReport,
    PointLikelihoods,
};
pub use error::{Error, Result};
pub use grid::{astar, astar_within, GridDocument, GridPath, OccupancyGrid};
pub use normal::normal_cdf;
pub use planner::{
    baseline_step_plan, hemap_step_plan, inspection_trial, run_inspection_trial, run_inspection_trial_with_belief,
    waypoint_placement, PlannerConfig, PlannerKind, TrialRecord,
};
pub use pose::{propagate_point, ObservedPoint, PlanarPose};
pub use world::{place_fods, sense, Fod, InspectionWorld, ScenarioDocument, SensorModel};
