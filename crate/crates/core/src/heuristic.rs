//! Occlusion-closure counting heuristic and the edge priorities built on it.

use crate::predicates::AbstractState;
use crate::world::{DiscreteParams, GoalSpec, ObjectId, RegionId};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Priority of an abstract edge; lower is explored first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgePriority {
    pub value: f64,
    pub hcount: usize,
    pub achieved: usize,
    pub goal_penalty: u8,
    pub rank_bonus: f64,
}

impl EdgePriority {
    pub fn new(hcount: usize, achieved: usize, goal_penalty: u8, rank_bonus: f64) -> Self {
        EdgePriority {
            value: hcount as f64 - achieved as f64 + goal_penalty as f64 - rank_bonus,
            hcount,
            achieved,
            goal_penalty,
            rank_bonus,
        }
    }
}

/// Does `o` stand in the way of moving `target`: inside its pre-grasp volume
/// or inside one of its manipulation volumes?
pub fn blocks(abs: &AbstractState, o: ObjectId, target: ObjectId) -> bool {
    abs.occludes_pre(o, target) || (0..abs.n_reg).any(|r| abs.occludes_manip(o, target, RegionId(r)))
}

/// Size of the occlusion closure of the unplaced goal objects.
pub fn h_count(abs: &AbstractState, goal: &GoalSpec) -> usize {
    let order: Vec<usize> = (0..abs.n_obj).collect();
    h_count_with_order(abs, goal, &order)
}

/// [`h_count`] scanning candidate objects in `order` instead of index order.
pub fn h_count_with_order(abs: &AbstractState, goal: &GoalSpec, order: &[usize]) -> usize {
    let mut in_m = vec![false; abs.n_obj];
    let mut queue = VecDeque::new();
    for &o in order {
        let unplaced = goal
            .pairs
            .iter()
            .any(|&(g, r)| g.0 == o && !abs.in_region(g, r));
        if unplaced && !in_m[o] {
            in_m[o] = true;
            queue.push_back(o);
        }
    }
    while let Some(m) = queue.pop_front() {
        for &o in order {
            if !in_m[o] && blocks(abs, ObjectId(o), ObjectId(m)) {
                in_m[o] = true;
                queue.push_back(o);
            }
        }
    }
    in_m.iter().filter(|&&b| b).count()
}

/// Hand-designed edge priority: closure size, minus achieved goal pairs,
/// plus one when the edge would disturb an already achieved goal pair.
pub fn h_edge(abs: &AbstractState, delta: DiscreteParams, goal: &GoalSpec) -> EdgePriority {
    h_edge_with_count(abs, delta, goal, h_count(abs, goal))
}

pub fn h_edge_with_count(abs: &AbstractState, delta: DiscreteParams, goal: &GoalSpec, hcount: usize) -> EdgePriority {
    let penalty = (abs.in_region(delta.object, delta.region) && goal.contains_pair(delta.object, delta.region)) as u8;
    EdgePriority::new(hcount, abs.achieved(goal), penalty, 0.0)
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Priority of every candidate edge of one state given rank scores over all
/// of them: the hand-designed priority minus the softmax share of the edge.
pub fn h_rank_all(abs: &AbstractState, deltas: &[DiscreteParams], goal: &GoalSpec, scores: &[f64]) -> Vec<EdgePriority> {
    assert_eq!(deltas.len(), scores.len());
    let hc = h_count(abs, goal);
    let p = softmax(scores);
    deltas
        .iter()
        .zip(p)
        .map(|(&d, bonus)| {
            let base = h_edge_with_count(abs, d, goal, hc);
            EdgePriority::new(base.hcount, base.achieved, base.goal_penalty, bonus)
        })
        .collect()
}
