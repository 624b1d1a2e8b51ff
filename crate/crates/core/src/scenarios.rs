//! The two-room workspace used throughout: a start room on the left, a goal
//! room ("kitchen") on the right, separated by a wall with a single door.
//!
//! Besides the random generator this module builds small hand-made scenes
//! that tests and benchmarks use to pin down exact behavior.

use crate::geometry::{collides, Aabb, Footprint, Pose2, Shape, DEFAULT_INTERP_STEP};
use crate::rng::{stream, Rng};
use crate::world::{
    Environment, GeneratorConfig, GoalSpec, Instance, Movable, ObjectId, Region, RegionId,
    WorldError, WorldState, DEFAULT_GRASP_STANDOFF, INSTANCE_FORMAT,
};
use rand::seq::SliceRandom;
use rand::Rng as _;

pub const WORKSPACE_W: f64 = 10.0;
pub const WORKSPACE_H: f64 = 6.0;
pub const WALL_X: [f64; 2] = [4.8, 5.2];
pub const DOOR_Y: [f64; 2] = [2.3, 3.7];
pub const ROBOT_RADIUS: f64 = 0.3;
pub const OBJECT_RADIUS: f64 = 0.2;

pub const KITCHEN: RegionId = RegionId(0);
pub const HOME: RegionId = RegionId(1);

const KITCHEN_BOX: [[f64; 2]; 2] = [[6.0, 0.6], [9.6, 5.4]];
const HOME_BOX: [[f64; 2]; 2] = [[0.2, 0.2], [4.6, 5.8]];
// Where goal objects start: the middle of the start room.
const GOAL_ZONE: [[f64; 2]; 2] = [[1.8, 1.6], [3.6, 4.4]];
// Blockers land in and around the doorway.
const EXIT_STRIP: [[f64; 2]; 2] = [[4.5, 2.3], [5.5, 3.7]];
const ROBOT_ZONE: [[f64; 2]; 2] = [[0.5, 2.0], [1.0, 4.0]];
// Other objects live in the upper and lower bands of the start room.
const CLUTTER_BANDS: [[[f64; 2]; 2]; 2] = [[[0.4, 0.4], [4.4, 1.6]], [[0.4, 4.4], [4.4, 5.6]]];

const MAX_TRIES: usize = 2000;

fn rect_between(min: [f64; 2], max: [f64; 2]) -> Footprint {
    Footprint::new(
        Shape::Rectangle {
            half_width: 0.5 * (max[0] - min[0]),
            half_height: 0.5 * (max[1] - min[1]),
        },
        Pose2::new(0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1]), 0.0),
    )
}

/// The empty two-room environment with the given movable shapes.
pub fn two_room_environment(shapes: &[Shape]) -> Environment {
    Environment {
        workspace: Aabb::new([0.0, 0.0], [WORKSPACE_W, WORKSPACE_H]),
        robot_shape: Shape::Disc {
            radius: ROBOT_RADIUS,
        },
        movables: shapes
            .iter()
            .enumerate()
            .map(|(i, &shape)| Movable {
                id: ObjectId(i),
                name: format!("o{i}"),
                shape,
            })
            .collect(),
        fixed: vec![
            rect_between([WALL_X[0], 0.0], [WALL_X[1], DOOR_Y[0]]),
            rect_between([WALL_X[0], DOOR_Y[1]], [WALL_X[1], WORKSPACE_H]),
        ],
        regions: vec![
            Region {
                id: KITCHEN,
                name: "kitchen".into(),
                footprint: rect_between(KITCHEN_BOX[0], KITCHEN_BOX[1]),
            },
            Region {
                id: HOME,
                name: "home".into(),
                footprint: rect_between(HOME_BOX[0], HOME_BOX[1]),
            },
        ],
        grasp_standoff: DEFAULT_GRASP_STANDOFF,
        interp_step: DEFAULT_INTERP_STEP,
    }
}

fn uniform_in(rng: &mut Rng, b: [[f64; 2]; 2]) -> [f64; 2] {
    [
        rng.random_range(b[0][0]..b[1][0]),
        rng.random_range(b[0][1]..b[1][1]),
    ]
}

/// True iff a bare robot disc cannot cross the doorway from left to right.
///
/// Grid search over robot center positions in a band around the wall.
pub fn doorway_blocked(env: &Environment, obstacles: &[Footprint]) -> bool {
    let cell = 0.02;
    let x0 = WALL_X[0] - 0.9;
    let x1 = WALL_X[1] + 0.9;
    let nx = ((x1 - x0) / cell) as usize;
    let ny = (WORKSPACE_H / cell) as usize;
    let free = |i: usize, j: usize| {
        let p = Pose2::new(x0 + (i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell, 0.0);
        let fp = Footprint::new(env.robot_shape, p);
        env.fixed_free(&fp) && !obstacles.iter().any(|o| collides(o, &fp))
    };
    let mut seen = vec![false; nx * ny];
    let mut queue = std::collections::VecDeque::new();
    for j in 0..ny {
        if free(0, j) {
            seen[j * nx] = true;
            queue.push_back((0usize, j));
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        if i + 1 == nx {
            return false;
        }
        let mut push = |a: usize, b: usize, q: &mut std::collections::VecDeque<(usize, usize)>| {
            if !seen[b * nx + a] {
                seen[b * nx + a] = true;
                if free(a, b) {
                    q.push_back((a, b));
                }
            }
        };
        if i > 0 {
            push(i - 1, j, &mut queue);
        }
        push(i + 1, j, &mut queue);
        if j > 0 {
            push(i, j - 1, &mut queue);
        }
        if j + 1 < ny {
            push(i, j + 1, &mut queue);
        }
    }
    true
}

fn place_disc(
    env: &Environment,
    rng: &mut Rng,
    zones: &[[[f64; 2]; 2]],
    shape: Shape,
    taken: &[Footprint],
    clearance: f64,
) -> Option<Footprint> {
    for _ in 0..MAX_TRIES {
        let zone = zones[rng.random_range(0..zones.len())];
        let p = uniform_in(rng, zone);
        let fp = Footprint::new(shape, Pose2::new(p[0], p[1], rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)));
        let padded = Footprint::new(
            Shape::Disc {
                radius: shape.circumradius() + clearance,
            },
            fp.pose,
        );
        if env.fixed_free(&fp) && !taken.iter().any(|t| collides(t, &padded)) {
            return Some(fp);
        }
    }
    None
}

/// Deterministic random instance: goal objects in the start room, blockers
/// jamming the doorway, remaining objects as clutter in the start room.
pub fn generate_instance(seed: u64, config: GeneratorConfig) -> Result<Instance, WorldError> {
    let fail = |m: &str| WorldError::GenerationFailed(m.to_string());
    if config.n_goal_objects == 0 {
        return Err(fail("at least one goal object is required"));
    }
    if config.n_goal_objects + config.n_blockers > config.n_movables {
        return Err(fail("goal objects plus blockers exceed the movable count"));
    }
    let n = config.n_movables;
    let shape = Shape::Disc {
        radius: OBJECT_RADIUS,
    };
    let env = two_room_environment(&vec![shape; n]);
    let mut rng = stream(seed, &[0x6e6e]);

    // Roles are assigned to shuffled ids so that index order carries no signal.
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let goal_ids = &ids[..config.n_goal_objects];
    let blocker_ids = &ids[config.n_goal_objects..config.n_goal_objects + config.n_blockers];
    let clutter_ids = &ids[config.n_goal_objects + config.n_blockers..];

    let robot_xy = uniform_in(&mut rng, ROBOT_ZONE);
    let robot = Pose2::new(robot_xy[0], robot_xy[1], 0.0);
    let robot_fp = Footprint::new(env.robot_shape, robot);

    let mut poses = vec![Pose2::identity(); n];
    let mut taken = vec![robot_fp];

    let mut blockers = None;
    for _ in 0..MAX_TRIES {
        let mut set: Vec<Footprint> = Vec::new();
        for _ in blocker_ids {
            let mut all = taken.clone();
            all.extend(set.iter().copied());
            match place_disc(&env, &mut rng, &[EXIT_STRIP], shape, &all, 0.0) {
                Some(fp) => set.push(fp),
                None => break,
            }
        }
        if set.len() == blocker_ids.len() && (set.is_empty() || doorway_blocked(&env, &set)) {
            blockers = Some(set);
            break;
        }
    }
    let blockers = blockers.ok_or_else(|| fail("could not jam the doorway"))?;
    for (&i, fp) in blocker_ids.iter().zip(&blockers) {
        poses[i] = fp.pose;
        taken.push(*fp);
    }
    for &i in goal_ids {
        let fp = place_disc(&env, &mut rng, &[GOAL_ZONE], shape, &taken, 0.45)
            .ok_or_else(|| fail("no room for a goal object"))?;
        poses[i] = fp.pose;
        taken.push(fp);
    }
    for &i in clutter_ids {
        let fp = place_disc(&env, &mut rng, &CLUTTER_BANDS, shape, &taken, 0.05)
            .ok_or_else(|| fail("no room for clutter"))?;
        poses[i] = fp.pose;
        taken.push(fp);
    }

    let mut goal_sorted: Vec<usize> = goal_ids.to_vec();
    goal_sorted.sort_unstable();
    let goal = GoalSpec {
        pairs: goal_sorted.into_iter().map(|i| (ObjectId(i), KITCHEN)).collect(),
    };
    let initial_state = WorldState {
        object_poses: poses,
        robot,
        held: None,
        plan_trace: vec![],
    };
    Ok(Instance {
        format: INSTANCE_FORMAT.into(),
        id: format!("two-room-{seed:016x}-{n}-{}-{}", config.n_goal_objects, config.n_blockers),
        seed,
        config,
        environment: env,
        initial_state,
        goal,
    })
}

/// A hand-placed scene in the two-room workspace. Objects are discs of the
/// default radius at the given positions; the first `n_goal` go to the kitchen.
pub fn custom_instance(seed: u64, robot: [f64; 2], objects: &[[f64; 2]], n_goal: usize) -> Instance {
    let shape = Shape::Disc {
        radius: OBJECT_RADIUS,
    };
    let env = two_room_environment(&vec![shape; objects.len()]);
    let initial_state = WorldState {
        object_poses: objects.iter().map(|p| Pose2::new(p[0], p[1], 0.0)).collect(),
        robot: Pose2::new(robot[0], robot[1], 0.0),
        held: None,
        plan_trace: vec![],
    };
    Instance {
        format: INSTANCE_FORMAT.into(),
        id: format!("custom-{seed:016x}-{}", objects.len()),
        seed,
        config: GeneratorConfig {
            n_movables: objects.len(),
            n_goal_objects: n_goal,
            n_blockers: 0,
        },
        environment: env,
        initial_state,
        goal: GoalSpec {
            pairs: (0..n_goal).map(|i| (ObjectId(i), KITCHEN)).collect(),
        },
    }
}

/// One goal object in the start room and one blocker sitting in the middle
/// of the doorway; the shortest solution moves the blocker, then the goal.
///
/// `seed` jitters the goal object and the robot so that a family of
/// instances can be drawn.
pub fn jammed_door_instance(seed: u64) -> Instance {
    let mut rng = stream(seed, &[0x6a6d]);
    let g = uniform_in(&mut rng, [[2.0, 2.0], [3.4, 4.0]]);
    let r = uniform_in(&mut rng, ROBOT_ZONE);
    let b = [5.0, 3.0 + rng.random_range(-0.05..0.05)];
    let mut inst = custom_instance(seed, r, &[g, b], 1);
    inst.id = format!("jammed-door-{seed:016x}");
    inst
}
