//! The pick-and-place problem model: environment, world state, actions,
//! the deterministic transition and the goal test.

use crate::geometry::{
    collides, contains, normalize_angle, sweep, Aabb, Attachment, Footprint, Pose2, Shape,
    SweptVolume,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

/// Standoff between the robot and a grasped object, in meters.
pub const DEFAULT_GRASP_STANDOFF: f64 = 0.05;

// Endpoint consistency slack when validating recorded paths.
const ENDPOINT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("infeasible action: {0}")]
    InfeasibleAction(String),
    #[error("instance generation failed: {0}")]
    GenerationFailed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed instance file: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Movable {
    pub id: ObjectId,
    pub name: String,
    pub shape: Shape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: RegionId,
    pub name: String,
    pub footprint: Footprint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub workspace: Aabb,
    pub robot_shape: Shape,
    pub movables: Vec<Movable>,
    pub fixed: Vec<Footprint>,
    pub regions: Vec<Region>,
    pub grasp_standoff: f64,
    pub interp_step: f64,
}

impl Environment {
    /// Ids must be dense (`movables[i].id == ObjectId(i)`), regions and fixed
    /// obstacles must lie inside the workspace, and the robot must be a disc.
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidEnvironment(m));
        if !matches!(self.robot_shape, Shape::Disc { .. }) {
            return bad("robot must be a disc".into());
        }
        for (i, m) in self.movables.iter().enumerate() {
            if m.id != ObjectId(i) {
                return bad(format!("movable {} has id {:?}", i, m.id));
            }
            m.shape
                .validate()
                .map_err(|e| WorldError::InvalidEnvironment(e.to_string()))?;
        }
        let ws = self.workspace_footprint();
        for (i, r) in self.regions.iter().enumerate() {
            if r.id != RegionId(i) {
                return bad(format!("region {} has id {:?}", i, r.id));
            }
            if !matches!(r.footprint.shape, Shape::Rectangle { .. }) {
                return bad(format!("region {} is not a rectangle", r.name));
            }
            if !contains(&ws, &r.footprint) {
                return bad(format!("region {} leaves the workspace", r.name));
            }
        }
        for f in &self.fixed {
            if !contains(&ws, f) {
                return bad("fixed obstacle leaves the workspace".into());
            }
        }
        if !(self.grasp_standoff >= 0.0 && self.interp_step > 0.0) {
            return bad("bad standoff or interpolation step".into());
        }
        Ok(())
    }

    pub fn workspace_footprint(&self) -> Footprint {
        let c = self.workspace.center();
        Footprint::new(
            Shape::Rectangle {
                half_width: 0.5 * self.workspace.width(),
                half_height: 0.5 * self.workspace.height(),
            },
            Pose2::new(c[0], c[1], 0.0),
        )
    }

    pub fn robot_radius(&self) -> f64 {
        self.robot_shape.circumradius()
    }

    pub fn n_objects(&self) -> usize {
        self.movables.len()
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn object_shape(&self, o: ObjectId) -> Shape {
        self.movables[o.0].shape
    }

    pub fn region(&self, r: RegionId) -> &Region {
        &self.regions[r.0]
    }

    /// Distance from the object center to the robot center when grasping.
    pub fn standoff(&self, o: ObjectId) -> f64 {
        self.robot_radius() + self.object_shape(o).circumradius() + self.grasp_standoff
    }

    /// Inside the workspace and clear of every fixed obstacle.
    pub fn fixed_free(&self, fp: &Footprint) -> bool {
        let bb = fp.aabb();
        let ws = self.workspace;
        if bb.min[0] < ws.min[0] || bb.min[1] < ws.min[1] || bb.max[0] > ws.max[0] || bb.max[1] > ws.max[1]
        {
            return false;
        }
        !self
            .fixed
            .iter()
            .any(|f| f.aabb().overlaps(&bb) && collides(f, fp))
    }

    /// All (object, region) pairs in enumeration order: object-major.
    pub fn all_discrete(&self) -> Vec<DiscreteParams> {
        let mut v = Vec::with_capacity(self.n_objects() * self.n_regions());
        for o in 0..self.n_objects() {
            for r in 0..self.n_regions() {
                v.push(DiscreteParams {
                    object: ObjectId(o),
                    region: RegionId(r),
                });
            }
        }
        v
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("environment serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Held {
    pub object: ObjectId,
    pub grasp: Pose2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// Indexed by object id.
    pub object_poses: Vec<Pose2>,
    pub robot: Pose2,
    pub held: Option<Held>,
    pub plan_trace: Vec<ConcreteAction>,
}

impl WorldState {
    pub fn object_footprint(&self, env: &Environment, o: ObjectId) -> Footprint {
        Footprint::new(env.object_shape(o), self.object_poses[o.0])
    }

    pub fn robot_footprint(&self, env: &Environment) -> Footprint {
        Footprint::new(env.robot_shape, self.robot)
    }

    pub fn plan_len(&self) -> usize {
        self.plan_trace.len()
    }

    /// Movables other than `except` whose footprint intersects `fp`.
    pub fn movables_hitting(
        &self,
        env: &Environment,
        fp: &Footprint,
        except: Option<ObjectId>,
    ) -> Vec<ObjectId> {
        let bb = fp.aabb();
        (0..env.n_objects())
            .map(ObjectId)
            .filter(|&o| Some(o) != except)
            .filter(|&o| {
                let of = self.object_footprint(env, o);
                of.aabb().overlaps(&bb) && collides(&of, fp)
            })
            .collect()
    }

    /// SHA-256 of the poses and held slot (the plan trace is excluded).
    pub fn digest(&self) -> String {
        let bytes =
            serde_json::to_vec(&(&self.object_poses, &self.robot, &self.held)).expect("serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiscreteParams {
    pub object: ObjectId,
    pub region: RegionId,
}

/// Continuous parameters of a pick-and-place: approach bearings and the
/// placement pose of the object in the world frame.
///
/// The grasp is rigid, so `place_pose.theta` always equals the object's
/// heading at pick time rotated by `place_bearing - pick_bearing`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousParams {
    pub pick_bearing: f64,
    pub place_pose: Pose2,
    pub place_bearing: f64,
}

impl ContinuousParams {
    /// Builds parameters from a placement position, deriving the placed heading.
    pub fn new(
        state: &WorldState,
        object: ObjectId,
        pick_bearing: f64,
        place_xy: [f64; 2],
        place_bearing: f64,
    ) -> Self {
        let pick_bearing = normalize_angle(pick_bearing);
        let place_bearing = normalize_angle(place_bearing);
        let th = state.object_poses[object.0].theta + (place_bearing - pick_bearing);
        ContinuousParams {
            pick_bearing,
            place_pose: Pose2::new(place_xy[0], place_xy[1], th),
            place_bearing,
        }
    }

    pub fn is_valid(&self) -> bool {
        use std::f64::consts::PI;
        let in_range = |a: f64| (-PI..PI).contains(&a);
        in_range(self.pick_bearing) && in_range(self.place_bearing) && self.place_pose.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcreteAction {
    pub discrete: DiscreteParams,
    pub continuous: ContinuousParams,
    pub pre_path: Vec<Pose2>,
    pub manip_path: Vec<Pose2>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub pairs: Vec<(ObjectId, RegionId)>,
}

impl GoalSpec {
    pub fn validate(&self, env: &Environment) -> Result<(), WorldError> {
        if self.pairs.is_empty() {
            return Err(WorldError::InvalidEnvironment("empty goal".into()));
        }
        for &(o, r) in &self.pairs {
            if o.0 >= env.n_objects() || r.0 >= env.n_regions() {
                return Err(WorldError::InvalidEnvironment(format!(
                    "goal pair ({}, {}) out of range",
                    o.0, r.0
                )));
            }
        }
        Ok(())
    }

    pub fn mentions_object(&self, o: ObjectId) -> bool {
        self.pairs.iter().any(|&(g, _)| g == o)
    }

    pub fn mentions_region(&self, r: RegionId) -> bool {
        self.pairs.iter().any(|&(_, g)| g == r)
    }

    pub fn contains_pair(&self, o: ObjectId, r: RegionId) -> bool {
        self.pairs.contains(&(o, r))
    }
}

/// Robot pose that grasps `object` from bearing `bearing`, facing it.
pub fn pick_config(env: &Environment, state: &WorldState, object: ObjectId, bearing: f64) -> Pose2 {
    approach_config(env, object, state.object_poses[object.0].xy(), bearing)
}

/// Robot pose at `standoff` from `center` along `bearing`, facing `center`.
pub fn approach_config(env: &Environment, object: ObjectId, center: [f64; 2], bearing: f64) -> Pose2 {
    let d = env.standoff(object);
    let (s, c) = bearing.sin_cos();
    Pose2::new(center[0] + d * c, center[1] + d * s, bearing + std::f64::consts::PI)
}

/// Object pose in the robot frame for a grasp at `pick`.
pub fn grasp_transform(object_pose: &Pose2, pick: &Pose2) -> Pose2 {
    pick.relative(object_pose)
}

/// Robot pose that leaves the object at `params.place_pose`.
pub fn place_config(env: &Environment, object: ObjectId, params: &ContinuousParams) -> Pose2 {
    approach_config(env, object, params.place_pose.xy(), params.place_bearing)
}

/// Attachment used while carrying `object` with the given pick bearing.
pub fn carry_attachment(env: &Environment, state: &WorldState, object: ObjectId, bearing: f64) -> Attachment {
    let pick = pick_config(env, state, object, bearing);
    Attachment {
        shape: env.object_shape(object),
        grasp: grasp_transform(&state.object_poses[object.0], &pick),
    }
}

/// Swept volumes of a recorded action's pre-grasp and manipulation motions.
pub fn action_volumes(env: &Environment, state: &WorldState, action: &ConcreteAction) -> (SweptVolume, SweptVolume) {
    let o = action.discrete.object;
    let pre = sweep(&action.pre_path, env.robot_shape, None, env.interp_step);
    let att = carry_attachment(env, state, o, action.continuous.pick_bearing);
    let manip = sweep(&action.manip_path, env.robot_shape, Some(att), env.interp_step);
    (pre, manip)
}

fn near(a: &Pose2, b: &Pose2) -> bool {
    a.distance(b) <= ENDPOINT_TOL && crate::geometry::angle_diff(a.theta, b.theta).abs() <= 1e-7
}

/// Full geometric feasibility of `action` in `state`: endpoint consistency,
/// placement inside the region, and collision-free swept volumes.
pub fn validate_action(env: &Environment, state: &WorldState, action: &ConcreteAction) -> Result<(), WorldError> {
    let infeasible = |m: &str| Err(WorldError::InfeasibleAction(m.to_string()));
    let o = action.discrete.object;
    if o.0 >= env.n_objects() || action.discrete.region.0 >= env.n_regions() {
        return infeasible("discrete parameters out of range");
    }
    if state.held.is_some() {
        return infeasible("robot already holds an object");
    }
    if !action.continuous.is_valid() {
        return infeasible("continuous parameters out of range");
    }
    if action.pre_path.is_empty() || action.manip_path.is_empty() {
        return infeasible("missing motion plan");
    }
    let pick = pick_config(env, state, o, action.continuous.pick_bearing);
    if !near(&action.pre_path[0], &state.robot) {
        return infeasible("pre path does not start at the robot");
    }
    if !near(action.pre_path.last().unwrap(), &pick) {
        return infeasible("pre path does not end at the pick configuration");
    }
    if action.manip_path[0].distance(&pick) > ENDPOINT_TOL {
        return infeasible("manipulation path does not start at the pick configuration");
    }
    let place = place_config(env, o, &action.continuous);
    if !near(action.manip_path.last().unwrap(), &place) {
        return infeasible("manipulation path does not end at the place configuration");
    }
    let att = carry_attachment(env, state, o, action.continuous.pick_bearing);
    let carried = att.footprint_at(&place);
    if carried.pose.distance(&action.continuous.place_pose) > 1e-7
        || crate::geometry::angle_diff(carried.pose.theta, action.continuous.place_pose.theta).abs() > 1e-7
    {
        return infeasible("placement is inconsistent with the grasp");
    }
    let placed = Footprint::new(env.object_shape(o), action.continuous.place_pose);
    if !contains(&env.region(action.discrete.region).footprint, &placed) {
        return infeasible("placement leaves the target region");
    }
    let (pre, manip) = action_volumes(env, state, action);
    for fp in pre.footprints() {
        if !env.fixed_free(&fp) {
            return infeasible("pre path hits a fixed obstacle");
        }
        if !state.movables_hitting(env, &fp, None).is_empty() {
            return infeasible("pre path hits a movable object");
        }
    }
    for fp in manip.footprints() {
        if !env.fixed_free(&fp) {
            return infeasible("manipulation path hits a fixed obstacle");
        }
        if !state.movables_hitting(env, &fp, Some(o)).is_empty() {
            return infeasible("manipulation path hits a movable object");
        }
    }
    Ok(())
}

/// Applies an action whose motion plans were already found. Only structural
/// consistency is checked here; see [`validate_action`] for the geometry.
pub fn transition(env: &Environment, state: &WorldState, action: &ConcreteAction) -> Result<WorldState, WorldError> {
    let o = action.discrete.object;
    if o.0 >= env.n_objects() || action.pre_path.is_empty() || action.manip_path.is_empty() {
        return Err(WorldError::InfeasibleAction(
            "action lacks valid motion plans".into(),
        ));
    }
    let mut next = state.clone();
    next.object_poses[o.0] = action.continuous.place_pose;
    next.robot = *action.manip_path.last().unwrap();
    next.held = None;
    next.plan_trace.push(action.clone());
    Ok(next)
}

/// [`validate_action`] followed by [`transition`].
pub fn transition_checked(env: &Environment, state: &WorldState, action: &ConcreteAction) -> Result<WorldState, WorldError> {
    validate_action(env, state, action)?;
    transition(env, state, action)
}

pub fn in_region(env: &Environment, state: &WorldState, o: ObjectId, r: RegionId) -> bool {
    contains(&env.region(r).footprint, &state.object_footprint(env, o))
}

pub fn is_goal(env: &Environment, state: &WorldState, goal: &GoalSpec) -> bool {
    goal.pairs.iter().all(|&(o, r)| in_region(env, state, o, r))
}

/// Replays a plan from `s0` with full validation of every step.
pub fn replay(env: &Environment, s0: &WorldState, plan: &[ConcreteAction]) -> Result<WorldState, WorldError> {
    let mut s = s0.clone();
    s.plan_trace.clear();
    for a in plan {
        s = transition_checked(env, &s, a)?;
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_movables: usize,
    pub n_goal_objects: usize,
    pub n_blockers: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_movables: 8,
            n_goal_objects: 1,
            n_blockers: 3,
        }
    }
}

/// A complete problem instance as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub format: String,
    pub id: String,
    pub seed: u64,
    pub config: GeneratorConfig,
    pub environment: Environment,
    pub initial_state: WorldState,
    pub goal: GoalSpec,
}

pub const INSTANCE_FORMAT: &str = "gtamp-instance/1";

impl Instance {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Instance, WorldError> {
        let inst: Instance = serde_json::from_str(s)?;
        if inst.format != INSTANCE_FORMAT {
            return Err(WorldError::InvalidEnvironment(format!(
                "unknown instance format {}",
                inst.format
            )));
        }
        inst.environment.validate()?;
        inst.goal.validate(&inst.environment)?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Instance, WorldError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub use crate::scenarios::generate_instance;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DEFAULT_INTERP_STEP;
    use crate::geometry::Shape;
    use std::f64::consts::PI;

    fn one_object_env(shape: Shape) -> (Environment, WorldState) {
        let env = Environment {
            workspace: Aabb::new([0.0, 0.0], [10.0, 10.0]),
            robot_shape: Shape::Disc { radius: 0.3 },
            movables: vec![Movable {
                id: ObjectId(0),
                name: "o0".into(),
                shape,
            }],
            fixed: vec![],
            regions: vec![Region {
                id: RegionId(0),
                name: "r0".into(),
                footprint: Shape::Rectangle {
                    half_width: 1.0,
                    half_height: 1.0,
                }
                .at(Pose2::new(8.0, 8.0, 0.0)),
            }],
            grasp_standoff: DEFAULT_GRASP_STANDOFF,
            interp_step: DEFAULT_INTERP_STEP,
        };
        let state = WorldState {
            object_poses: vec![Pose2::new(5.0, 5.0, 0.0)],
            robot: Pose2::new(1.0, 1.0, 0.0),
            held: None,
            plan_trace: vec![],
        };
        (env, state)
    }

    fn same_angle(a: f64, b: f64) -> bool {
        crate::geometry::angle_diff(a, b).abs() < 1e-12
    }

    #[test]
    fn pick_config_examples() {
        let (env, state) = one_object_env(Shape::Disc { radius: 0.2 });
        let p = pick_config(&env, &state, ObjectId(0), 0.0);
        assert!((p.x - 5.55).abs() < 1e-12 && (p.y - 5.0).abs() < 1e-12);
        assert!(same_angle(p.theta, PI));
        let p = pick_config(&env, &state, ObjectId(0), PI);
        assert!((p.x - 4.45).abs() < 1e-12 && (p.y - 5.0).abs() < 1e-12);
        assert!(same_angle(p.theta, 0.0));
    }

    #[test]
    fn rectangle_standoff_uses_circumradius() {
        use rand::Rng;
        let (env, mut state) = one_object_env(Shape::Rectangle {
            half_width: 0.3,
            half_height: 0.1,
        });
        let mut rng = crate::rng::stream(3, &[]);
        for _ in 0..100 {
            state.object_poses[0].theta = rng.random_range(-PI..PI);
            let chi = rng.random_range(-PI..PI);
            let robot = Footprint::new(env.robot_shape, pick_config(&env, &state, ObjectId(0), chi));
            assert!(!collides(&robot, &state.object_footprint(&env, ObjectId(0))));
        }
    }

    #[test]
    fn transition_requires_paths() {
        let (env, state) = one_object_env(Shape::Disc { radius: 0.2 });
        let a = ConcreteAction {
            discrete: DiscreteParams {
                object: ObjectId(0),
                region: RegionId(0),
            },
            continuous: ContinuousParams::new(&state, ObjectId(0), 0.0, [8.0, 8.0], 0.0),
            pre_path: vec![],
            manip_path: vec![],
        };
        assert!(matches!(
            transition(&env, &state, &a),
            Err(WorldError::InfeasibleAction(_))
        ));
    }

    #[test]
    fn straight_line_action_validates_and_transitions() {
        let (env, state) = one_object_env(Shape::Disc { radius: 0.2 });
        let o = ObjectId(0);
        let params = ContinuousParams::new(&state, o, 0.0, [8.0, 8.0], 0.0);
        let pick = pick_config(&env, &state, o, 0.0);
        let place = place_config(&env, o, &params);
        let action = ConcreteAction {
            discrete: DiscreteParams { object: o, region: RegionId(0) },
            continuous: params,
            pre_path: vec![state.robot, Pose2::new(7.0, 1.0, 0.0), Pose2::new(7.0, 5.0, 0.0), pick],
            manip_path: vec![pick, place],
        };
        let next = transition_checked(&env, &state, &action).unwrap();
        assert_eq!(next.object_poses[0], params.place_pose);
        assert_eq!(next.robot, place);
        assert_eq!(next.plan_len(), 1);
        let goal = GoalSpec { pairs: vec![(o, RegionId(0))] };
        assert!(is_goal(&env, &next, &goal));
        assert!(!is_goal(&env, &state, &goal));
        // Determinism.
        assert_eq!(next, transition(&env, &state, &action).unwrap());
        // A straddling placement is not a goal.
        let mut off = next.clone();
        off.object_poses[0] = Pose2::new(9.0, 8.0, 0.0);
        assert!(!is_goal(&env, &off, &goal));
    }
}
