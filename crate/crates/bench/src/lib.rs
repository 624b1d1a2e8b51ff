//! Fixtures shared by the benchmarks.

use gtamp_core::experience::{run_planner, Models, PlannerKind, RunConfig};
use gtamp_core::motion::{Roadmap, RoadmapConfig};
use gtamp_core::world::{generate_instance, GeneratorConfig, Instance};
use std::sync::Arc;

/// A generated two-room instance with `n` movables, two of them jamming the door.
pub fn instance(n: usize, seed: u64) -> Instance {
    let config = GeneratorConfig {
        n_movables: n,
        n_goal_objects: 1,
        n_blockers: 2,
    };
    generate_instance(seed, config).expect("benchmark instance generates")
}

pub fn roadmap(inst: &Instance) -> Arc<Roadmap> {
    Arc::new(Roadmap::build(&inst.environment, RoadmapConfig::default()))
}

/// Expanded nodes of one SAHS-HCOUNT run, for sanity output next to timings.
pub fn hcount_nodes(inst: &Instance, rm: Arc<Roadmap>, seed: u64) -> usize {
    let (stats, _) = run_planner(PlannerKind::SahsHcount, inst, rm, &Models::default(), &RunConfig::default(), seed)
        .expect("hcount needs no models");
    stats.nodes_expanded
}
