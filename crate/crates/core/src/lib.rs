//! Planar geometric task-and-motion planning with learned search guidance.
//!
//! The crate is organized bottom-up: [`geometry`] and [`world`] define the
//! problem, [`motion`] answers path queries over a roadmap, [`predicates`]
//! abstracts a state into occlusion relations, and [`search`] plans over
//! abstract edges ranked by [`heuristic`], optionally guided by the learned
//! components in [`ranknet`] and [`sampler`].

pub mod geometry;
pub mod graph;
pub mod heuristic;
pub mod motion;
pub mod experience;
pub mod nn;
pub mod predicates;
pub mod ranknet;
pub mod rng;
pub mod sampler;
pub mod search;
pub mod scenarios;
pub mod world;

pub use geometry::{Aabb, Attachment, Footprint, Pose2, Shape, SweptVolume};
pub use world::{
    ConcreteAction, ContinuousParams, DiscreteParams, Environment, GoalSpec, Instance, ObjectId,
    RegionId, WorldState,
};
