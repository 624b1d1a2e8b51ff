//! Abstract state: occlusion predicates over objects and regions, each backed
//! by the swept volume that produced it, with reuse across successive states.

use crate::geometry::{contains, Aabb, Attachment, Footprint, Pose2, SweptVolume};
use crate::motion::{Mode, MotionPlanner, PathResult, Query};
use crate::rng::stream;
use crate::world::{
    approach_config, carry_attachment, pick_config, ConcreteAction, Environment, GoalSpec,
    ObjectId, RegionId, WorldState,
};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const UNARY: [&str; 4] = ["IsObject", "IsRegion", "IsGoal", "PreFree"];
pub const BINARY: [&str; 3] = ["InRegion", "OccludesPre", "ManipFree"];

const PLACE_TRIES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredicateConfig {
    /// Seeds the placement candidates; fixed for a whole episode.
    pub seed: u64,
    pub n_bearings: usize,
    pub n_place: usize,
}

impl PredicateConfig {
    pub fn new(seed: u64) -> Self {
        PredicateConfig {
            seed,
            n_bearings: 16,
            n_place: 10,
        }
    }

    pub fn bearing(&self, i: usize) -> f64 {
        -PI + 2.0 * PI * i as f64 / self.n_bearings as f64
    }
}

/// The path chosen to witness a predicate, and what it passes through.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    pub path: Vec<Pose2>,
    pub attached: Option<Attachment>,
    /// Movables touched by the sweep, excluding the object it concerns.
    pub occluders: Vec<ObjectId>,
    /// Number of movables touched, including the object itself.
    pub collisions: usize,
    pub bearing: f64,
    pub candidate: usize,
    pub mode: Mode,
    pub length: f64,
}

impl Volume {
    pub fn swept(&self, env: &Environment) -> SweptVolume {
        crate::geometry::sweep(&self.path, env.robot_shape, self.attached, env.interp_step)
    }

    pub fn is_free(&self) -> bool {
        self.collisions == 0
    }
}

/// Why a manipulation volume may be copied to the next state.
#[derive(Clone, Debug, PartialEq)]
struct ManipReuse {
    bearing: u64,
    bounds: Vec<Aabb>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AbstractState {
    pub n_obj: usize,
    pub n_reg: usize,
    /// Per entity (objects, then regions): IsObject, IsRegion, IsGoal, PreFree.
    pub unary: Vec<[bool; 4]>,
    /// Per ordered entity pair, row-major: InRegion, OccludesPre, ManipFree.
    pub binary: Vec<[bool; 3]>,
    /// OccludesManip(o_i, o_j, r_k) at `(i * n_obj + j) * n_reg + k`.
    pub ternary: Vec<bool>,
    pub vpre: Vec<Option<Volume>>,
    /// Indexed `o * n_reg + r`.
    pub vmanip: Vec<Option<Volume>>,
    #[serde(skip)]
    reuse: Vec<Option<ManipReuse>>,
}

impl PartialEq for AbstractState {
    fn eq(&self, o: &Self) -> bool {
        self.n_obj == o.n_obj
            && self.n_reg == o.n_reg
            && self.unary == o.unary
            && self.binary == o.binary
            && self.ternary == o.ternary
            && self.vpre == o.vpre
            && self.vmanip == o.vmanip
    }
}

impl AbstractState {
    /// All-false scaffold with only the type bits and goal flags set.
    pub fn empty(n_obj: usize, n_reg: usize, goal: &GoalSpec) -> AbstractState {
        let ne = n_obj + n_reg;
        let mut unary = vec![[false; 4]; ne];
        for (i, u) in unary.iter_mut().enumerate() {
            if i < n_obj {
                u[0] = true;
                u[2] = goal.mentions_object(ObjectId(i));
            } else {
                u[1] = true;
                u[2] = goal.mentions_region(RegionId(i - n_obj));
            }
        }
        AbstractState {
            n_obj,
            n_reg,
            unary,
            binary: vec![[false; 3]; ne * ne],
            ternary: vec![false; n_obj * n_obj * n_reg],
            vpre: vec![None; n_obj],
            vmanip: vec![None; n_obj * n_reg],
            reuse: vec![None; n_obj * n_reg],
        }
    }

    pub fn n_entities(&self) -> usize {
        self.n_obj + self.n_reg
    }

    pub fn region_entity(&self, r: RegionId) -> usize {
        self.n_obj + r.0
    }

    fn pair(&self, a: usize, b: usize) -> usize {
        a * self.n_entities() + b
    }

    pub fn is_goal_object(&self, o: ObjectId) -> bool {
        self.unary[o.0][2]
    }

    pub fn pre_free(&self, o: ObjectId) -> bool {
        self.unary[o.0][3]
    }

    pub fn in_region(&self, o: ObjectId, r: RegionId) -> bool {
        self.binary[self.pair(o.0, self.region_entity(r))][0]
    }

    pub fn occludes_pre(&self, x: ObjectId, o: ObjectId) -> bool {
        self.binary[self.pair(x.0, o.0)][1]
    }

    pub fn manip_free(&self, o: ObjectId, r: RegionId) -> bool {
        self.binary[self.pair(o.0, self.region_entity(r))][2]
    }

    pub fn occludes_manip(&self, x: ObjectId, o: ObjectId, r: RegionId) -> bool {
        self.ternary[(x.0 * self.n_obj + o.0) * self.n_reg + r.0]
    }

    pub fn set_occludes_pre(&mut self, x: ObjectId, o: ObjectId, v: bool) {
        let k = self.pair(x.0, o.0);
        self.binary[k][1] = v;
    }

    pub fn set_occludes_manip(&mut self, x: ObjectId, o: ObjectId, r: RegionId, v: bool) {
        let k = (x.0 * self.n_obj + o.0) * self.n_reg + r.0;
        self.ternary[k] = v;
    }

    pub fn set_in_region(&mut self, o: ObjectId, r: RegionId, v: bool) {
        let k = self.pair(o.0, self.region_entity(r));
        self.binary[k][0] = v;
    }

    pub fn set_pre_free(&mut self, o: ObjectId, v: bool) {
        self.unary[o.0][3] = v;
    }

    pub fn set_manip_free(&mut self, o: ObjectId, r: RegionId, v: bool) {
        let k = self.pair(o.0, self.region_entity(r));
        self.binary[k][2] = v;
    }

    pub fn vmanip(&self, o: ObjectId, r: RegionId) -> Option<&Volume> {
        self.vmanip[o.0 * self.n_reg + r.0].as_ref()
    }

    /// Number of goal pairs currently satisfied.
    pub fn achieved(&self, goal: &GoalSpec) -> usize {
        goal.pairs.iter().filter(|&&(o, r)| self.in_region(o, r)).count()
    }

    /// Every predicate slot whose arguments have the wrong type is false.
    pub fn type_rule_holds(&self) -> bool {
        let n = self.n_obj;
        let ne = self.n_entities();
        let obj = |e: usize| e < n;
        (0..ne).all(|e| {
            let u = self.unary[e];
            u[0] == obj(e) && u[1] == !obj(e) && (obj(e) || !u[3])
        }) && (0..ne).all(|a| {
            (0..ne).all(|b| {
                let v = self.binary[self.pair(a, b)];
                let obj_reg = obj(a) && !obj(b);
                let obj_obj = obj(a) && obj(b);
                (obj_reg || !v[0]) && (obj_obj || !v[1]) && (obj_reg || !v[2])
            })
        })
    }
}

/// Candidate placements of `o` in `r`: object inside the region and clear of
/// fixed obstacles. The stream depends only on `(seed, o, r)`, so every state of an episode sees
/// the same candidates.
pub fn placement_candidates(env: &Environment, cfg: &PredicateConfig, o: ObjectId, r: RegionId) -> Vec<[f64; 2]> {
    let mut rng = stream(cfg.seed, &[0x706c, o.0 as u64, r.0 as u64]);
    let region = env.region(r).footprint;
    let bb = region.aabb();
    let shape = env.object_shape(o);
    let mut out = Vec::with_capacity(cfg.n_place);
    for _ in 0..cfg.n_place {
        for _ in 0..PLACE_TRIES {
            let p = [rng.random_range(bb.min[0]..bb.max[0]), rng.random_range(bb.min[1]..bb.max[1])];
            let fp = Footprint::new(shape, Pose2::new(p[0], p[1], 0.0));
            if contains(&region, &fp) && env.fixed_free(&fp) {
                out.push(p);
                break;
            }
        }
    }
    out
}

fn choose(results: &[(usize, f64, Option<PathResult>)], own: ObjectId, attached: Option<Attachment>) -> Option<Volume> {
    results
        .iter()
        .filter_map(|(i, bearing, r)| r.as_ref().map(|r| (*i, *bearing, r)))
        .min_by(|a, b| {
            a.2.colliding
                .len()
                .cmp(&b.2.colliding.len())
                .then(a.2.length.total_cmp(&b.2.length))
                .then(a.0.cmp(&b.0))
        })
        .map(|(i, bearing, r)| Volume {
            path: r.path.clone(),
            attached,
            occluders: r.colliding.iter().copied().filter(|&x| x != own).collect(),
            collisions: r.colliding.len(),
            bearing,
            candidate: i,
            mode: r.mode,
            length: r.length,
        })
}

/// Computes the abstract state of `state`.
///
/// When `prev` (the parent's abstract state and the action that led here) is
/// given, manipulation volumes that provably cannot have changed are copied
/// instead of recomputed. The result is identical either way.
pub fn compute_abstract(
    planner: &mut MotionPlanner,
    state: &WorldState,
    goal: &GoalSpec,
    cfg: &PredicateConfig,
    prev: Option<(&AbstractState, &ConcreteAction)>,
) -> AbstractState {
    let env = planner.env.clone();
    let env = &*env;
    let n = env.n_objects();
    let nr = env.n_regions();
    let mut abs = AbstractState::empty(n, nr, goal);

    for o in 0..n {
        for r in 0..nr {
            let v = crate::world::in_region(env, state, ObjectId(o), RegionId(r));
            abs.set_in_region(ObjectId(o), RegionId(r), v);
        }
    }

    // Pre-grasp volumes: all objects and bearings in one batched query.
    let mut goals = Vec::with_capacity(n * cfg.n_bearings);
    for o in 0..n {
        for b in 0..cfg.n_bearings {
            goals.push(pick_config(env, state, ObjectId(o), cfg.bearing(b)));
        }
    }
    let pre = planner.query_mcr(
        state,
        Query {
            start: state.robot,
            goals: &goals,
            attached: None,
            carried: None,
        },
    );
    for o in 0..n {
        let slice: Vec<(usize, f64, Option<PathResult>)> = (0..cfg.n_bearings)
            .map(|b| (b, cfg.bearing(b), pre[o * cfg.n_bearings + b].clone()))
            .collect();
        let vol = choose(&slice, ObjectId(o), None);
        if let Some(v) = &vol {
            abs.set_pre_free(ObjectId(o), v.is_free());
            for &x in &v.occluders {
                abs.set_occludes_pre(x, ObjectId(o), true);
            }
        }
        abs.vpre[o] = vol;
    }

    let moved = prev.map(|(p, a)| (p, a.discrete.object, state.object_footprint(env, a.discrete.object)));
    for o in 0..n {
        let oid = ObjectId(o);
        let Some(bearing) = abs.vpre[o].as_ref().map(|v| v.bearing) else {
            continue;
        };
        let mut todo = Vec::new();
        for r in 0..nr {
            let k = o * nr + r;
            let reusable = moved.as_ref().and_then(|(p, m, fp)| {
                let info = p.reuse[k].as_ref()?;
                let bb = fp.aabb();
                (*m != oid && info.bearing == bearing.to_bits() && !info.bounds.iter().any(|b| b.overlaps(&bb)))
                    .then_some(p)
            });
            match reusable {
                Some(p) => {
                    abs.vmanip[k] = p.vmanip[k].clone();
                    abs.reuse[k] = p.reuse[k].clone();
                    if let Some(v) = &abs.vmanip[k] {
                        abs.set_manip_free(oid, RegionId(r), v.is_free());
                    }
                }
                None => todo.push(r),
            }
        }
        if todo.is_empty() {
            continue;
        }
        let pick = pick_config(env, state, oid, bearing);
        let att = carry_attachment(env, state, oid, bearing);
        let mut goals = Vec::new();
        let mut owner = Vec::new();
        for &r in &todo {
            for (i, p) in placement_candidates(env, cfg, oid, RegionId(r)).into_iter().enumerate() {
                goals.push(approach_config(env, oid, p, bearing));
                owner.push((r, i));
            }
        }
        let res = planner.query_mcr(
            state,
            Query {
                start: pick,
                goals: &goals,
                attached: Some(att),
                carried: Some(oid),
            },
        );
        for &r in &todo {
            let k = o * nr + r;
            let slice: Vec<(usize, f64, Option<PathResult>)> = owner
                .iter()
                .zip(&res)
                .filter(|((rr, _), _)| *rr == r)
                .map(|((_, i), p)| (*i, bearing, p.clone()))
                .collect();
            let vol = choose(&slice, oid, Some(att));
            // Copyable later iff every candidate is either unreachable or
            // untouched by movables; then only an object landing inside one
            // of these sweeps can change the outcome.
            let all_free = slice
                .iter()
                .all(|(_, _, p)| p.as_ref().is_none_or(|p| !p.strict_search && p.colliding.is_empty()));
            abs.reuse[k] = all_free.then(|| ManipReuse {
                bearing: bearing.to_bits(),
                bounds: slice
                    .iter()
                    .filter_map(|(_, _, p)| p.as_ref())
                    .map(|p| crate::geometry::sweep(&p.path, env.robot_shape, Some(att), env.interp_step).aabb())
                    .collect(),
            });
            if let Some(v) = &vol {
                abs.set_manip_free(oid, RegionId(r), v.is_free());
                for &x in &v.occluders {
                    abs.set_occludes_manip(x, oid, RegionId(r), true);
                }
            }
            abs.vmanip[k] = vol;
        }
    }
    abs
}

/// A predicate instance, for audit reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredicateRef {
    PreFree(ObjectId),
    InRegion(ObjectId, RegionId),
    OccludesPre(ObjectId, ObjectId),
    ManipFree(ObjectId, RegionId),
    OccludesManip(ObjectId, ObjectId, RegionId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChangeReason {
    /// The predicate mentions the moved object.
    MovedObject,
    /// The robot relocated, and pre-grasp volumes start at the robot.
    RobotRelocated,
    /// The moved object (old or new pose) touches the old or new volume.
    VolumeTouched,
    Unexplained,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReuseReport {
    pub changed: Vec<(PredicateRef, ChangeReason)>,
}

impl ReuseReport {
    pub fn is_sound(&self) -> bool {
        self.changed.iter().all(|(_, r)| *r != ChangeReason::Unexplained)
    }
}

/// Lists every predicate whose value differs between `prev` and `next` and
/// classifies why it was allowed to change.
pub fn reuse_audit(
    env: &Environment,
    before: &WorldState,
    prev: &AbstractState,
    action: &ConcreteAction,
    next: &AbstractState,
) -> ReuseReport {
    let m = action.discrete.object;
    let old_fp = before.object_footprint(env, m);
    let new_fp = Footprint::new(env.object_shape(m), action.continuous.place_pose);
    let robot_moved = action.manip_path.last().is_some_and(|p| p.bits() != before.robot.bits());
    let touches = |v: Option<&Volume>| {
        v.is_some_and(|v| {
            let sv = v.swept(env);
            sv.collides_with(&old_fp) || sv.collides_with(&new_fp)
        })
    };
    let mut report = ReuseReport::default();
    let mut push = |p: PredicateRef, involved: bool, pre_side: bool, touched: bool| {
        let reason = if involved {
            ChangeReason::MovedObject
        } else if touched {
            ChangeReason::VolumeTouched
        } else if pre_side && robot_moved {
            ChangeReason::RobotRelocated
        } else {
            ChangeReason::Unexplained
        };
        report.changed.push((p, reason));
    };
    let n = prev.n_obj;
    let nr = prev.n_reg;
    for o in 0..n {
        let oid = ObjectId(o);
        let pre_touch = touches(prev.vpre[o].as_ref()) || touches(next.vpre[o].as_ref());
        if prev.pre_free(oid) != next.pre_free(oid) {
            push(PredicateRef::PreFree(oid), oid == m, true, pre_touch);
        }
        for x in 0..n {
            let xid = ObjectId(x);
            if prev.occludes_pre(xid, oid) != next.occludes_pre(xid, oid) {
                push(PredicateRef::OccludesPre(xid, oid), oid == m || xid == m, true, pre_touch);
            }
        }
        // A changed pre-grasp bearing moves the start of every manip volume.
        let bearing_changed = prev.vpre[o].as_ref().map(|v| v.bearing.to_bits())
            != next.vpre[o].as_ref().map(|v| v.bearing.to_bits());
        for r in 0..nr {
            let rid = RegionId(r);
            if prev.in_region(oid, rid) != next.in_region(oid, rid) {
                push(PredicateRef::InRegion(oid, rid), oid == m, false, false);
            }
            let touch = touches(prev.vmanip(oid, rid)) || touches(next.vmanip(oid, rid));
            if prev.manip_free(oid, rid) != next.manip_free(oid, rid) {
                push(PredicateRef::ManipFree(oid, rid), oid == m, bearing_changed, touch);
            }
            for x in 0..n {
                let xid = ObjectId(x);
                if prev.occludes_manip(xid, oid, rid) != next.occludes_manip(xid, oid, rid) {
                    push(
                        PredicateRef::OccludesManip(xid, oid, rid),
                        oid == m || xid == m,
                        bearing_changed,
                        touch,
                    );
                }
            }
        }
    }
    report
}
