#![allow(dead_code)]

use std::path::PathBuf;

use hemap_core::graph::GraphDocument;
use hemap_inspect::world::{FodSpec, PoseNoise};
use hemap_inspect::{GridDocument, InspectionWorld, ScenarioDocument, SensorModel};

pub fn tank_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/ballast_tank.json")
}

pub fn tank() -> InspectionWorld {
    InspectionWorld::load(tank_path()).expect("tank scenario loads")
}

/// Three rooms side by side (4.2 m x 2.2 m), doors A|B near the top and B|C near
/// the bottom.
pub fn three_rooms() -> ScenarioDocument {
    let mut rows = vec!["42#".to_string()];
    for i in 0..20 {
        let ab = if (3..=6).contains(&i) { "13A13B" } else { "12A1#13B" };
        let bc = if (13..=16).contains(&i) { "14C1#" } else { "1#13C1#" };
        rows.push(format!("1#{ab}{bc}"));
    }
    rows.push("42#".to_string());
    ScenarioDocument {
        name: "three-rooms".into(),
        description: String::new(),
        grid: GridDocument { resolution: 0.1, origin: [0.0, 0.0], width: 42, height: 22, rows },
        graph: GraphDocument { n: 3, edges: vec![[0, 1], [1, 0], [1, 2], [2, 1]], names: None, target: None },
        start: [0.5, 0.5],
        inflation_radius: 0.11,
        cloud_spacing: 0.02,
        k_nn: 5,
        visibility_stride: 2,
        sensor: SensorModel::default(),
        pose_noise: PoseNoise::default(),
        fods: FodSpec { count: [2, 3], radius: [0.05, 0.1], min_separation: 0.5 },
    }
}

pub fn three_rooms_world() -> InspectionWorld {
    InspectionWorld::from_document(three_rooms()).expect("three rooms build")
}
