//! Priority search over abstract edges: continuous-parameter sampling,
//! SAHS with restarts, its progressively capped variant, and a greedy
//! executor that follows the learned ranking without search.

use crate::geometry::Footprint;
use crate::heuristic::{h_count, h_edge_with_count, h_rank_all, EdgePriority};
use crate::motion::{MotionPlanner, Mode};
use crate::predicates::{compute_abstract, AbstractState, PredicateConfig};
use crate::rng::{derive_seed, stream, Rng};
use crate::world::{
    carry_attachment, is_goal, pick_config, place_config, transition, validate_action, ConcreteAction,
    ContinuousParams, DiscreteParams, Environment, GoalSpec, WorldState,
};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::rc::Rc;
use std::sync::Arc;
use std::time::Instant;

/// Default budgets for continuous sampling.
pub const DEFAULT_N_SMP: usize = 2000;
pub const DEFAULT_N_MP: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub n_smp: usize,
    pub n_mp: usize,
}

impl Default for SampleBudget {
    fn default() -> Self {
        SampleBudget {
            n_smp: DEFAULT_N_SMP,
            n_mp: DEFAULT_N_MP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSource {
    Learned,
    Uniform,
}

/// What one continuous-sampling call did.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub draws: usize,
    pub partially_feasible: usize,
    pub motion_plans: usize,
    /// Source of each partially feasible sample, in the order motion
    /// planning tried them.
    pub tried: Vec<ProposalSource>,
}

/// A planning problem as seen by the search: states, their abstractions,
/// abstract edges, and a sampler turning an edge into a concrete action.
pub trait SearchDomain {
    type State: Clone;
    type Abstract;
    type Action: Clone;

    /// Abstraction of `state`; `parent` is the parent's abstraction and the
    /// action that produced `state`, for incremental reuse.
    fn abstraction(&mut self, state: &Self::State, parent: Option<(&Self::Abstract, &Self::Action)>) -> Self::Abstract;
    fn is_goal(&self, state: &Self::State) -> bool;
    fn edges(&self, state: &Self::State, abs: &Self::Abstract) -> Vec<DiscreteParams>;
    fn smpl_cont(
        &mut self,
        state: &Self::State,
        abs: &Self::Abstract,
        delta: DiscreteParams,
        budget: SampleBudget,
        rng: &mut Rng,
    ) -> (Option<Self::Action>, SampleReport);
    fn apply(&self, state: &Self::State, action: &Self::Action) -> Self::State;
}

/// Priorities for all candidate edges of one abstract state.
pub trait EdgeHeuristic<A> {
    fn priorities(&mut self, abs: &A, deltas: &[DiscreteParams]) -> Vec<EdgePriority>;
}

/// Learned scores over the candidate edges of one abstract state; higher is
/// more promising.
pub trait EdgeScorer {
    fn scores(&mut self, abs: &AbstractState, deltas: &[DiscreteParams]) -> Vec<f64>;
}

pub struct HCountHeuristic {
    pub goal: GoalSpec,
}

impl EdgeHeuristic<AbstractState> for HCountHeuristic {
    fn priorities(&mut self, abs: &AbstractState, deltas: &[DiscreteParams]) -> Vec<EdgePriority> {
        let hc = h_count(abs, &self.goal);
        deltas.iter().map(|&d| h_edge_with_count(abs, d, &self.goal, hc)).collect()
    }
}

pub struct RankHeuristic<S> {
    pub goal: GoalSpec,
    pub scorer: S,
}

impl<S: EdgeScorer> EdgeHeuristic<AbstractState> for RankHeuristic<S> {
    fn priorities(&mut self, abs: &AbstractState, deltas: &[DiscreteParams]) -> Vec<EdgePriority> {
        let scores = self.scorer.scores(abs, deltas);
        h_rank_all(abs, deltas, &self.goal, &scores)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_nodes: Option<usize>,
    pub max_seconds: Option<f64>,
}

impl SearchBudget {
    pub fn nodes(n: usize) -> Self {
        SearchBudget {
            max_nodes: Some(n),
            max_seconds: None,
        }
    }

    pub fn unbounded() -> Self {
        SearchBudget::default()
    }

    fn exhausted(&self, nodes: usize, start: Instant) -> bool {
        self.max_nodes.is_some_and(|m| nodes >= m)
            || self.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() >= s)
    }
}

/// One line of the pop audit log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopRecord {
    pub pop_index: usize,
    pub restart: usize,
    /// Queue generation the popped edge was created in.
    pub generation: usize,
    pub priority: EdgePriority,
    /// Smallest priority value in the queue just before the pop.
    pub queue_min: f64,
    pub feasible: bool,
    pub report: SampleReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStats<A = ConcreteAction> {
    pub nodes_expanded: usize,
    pub smplcont_calls: usize,
    pub motion_plans: usize,
    pub restarts: usize,
    pub solved: bool,
    pub plan: Vec<A>,
    pub wall_seconds: f64,
    /// Plan-length cap of each outer iteration (`None` = uncapped).
    pub caps: Vec<Option<usize>>,
    /// Greedy executor only: actions executed and resets to the start.
    pub steps: usize,
    pub resets: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log: Vec<PopRecord>,
}

impl<A> Default for SearchStats<A> {
    fn default() -> Self {
        SearchStats {
            nodes_expanded: 0,
            smplcont_calls: 0,
            motion_plans: 0,
            restarts: 0,
            solved: false,
            plan: Vec::new(),
            wall_seconds: 0.0,
            caps: Vec::new(),
            steps: 0,
            resets: 0,
            log: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub seed: u64,
    /// Record a [`PopRecord`] per pop.
    pub audit: bool,
}

struct Node<S, Ab, A> {
    state: S,
    abs: Ab,
    plan: Vec<A>,
}

struct QueueEdge<S, Ab, A> {
    node: Rc<Node<S, Ab, A>>,
    delta: DiscreteParams,
    priority: EdgePriority,
    seq: u64,
    generation: usize,
}

impl<S, Ab, A> PartialEq for QueueEdge<S, Ab, A> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl<S, Ab, A> Eq for QueueEdge<S, Ab, A> {}

impl<S, Ab, A> Ord for QueueEdge<S, Ab, A> {
    fn cmp(&self, o: &Self) -> Ordering {
        // Reversed for the max-heap: lowest value first, then oldest.
        o.priority
            .value
            .total_cmp(&self.priority.value)
            .then(o.seq.cmp(&self.seq))
    }
}

impl<S, Ab, A> PartialOrd for QueueEdge<S, Ab, A> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Per-iteration plan-length cap and motion budget.
struct Schedule {
    cap: fn(usize, usize) -> Option<usize>,
    base_cap: usize,
    n_mp: fn(usize, usize) -> usize,
    base_mp: usize,
    max_iters: Option<usize>,
}

fn run<D, H>(
    domain: &mut D,
    h: &mut H,
    s0: &D::State,
    n_smp: usize,
    schedule: Schedule,
    budget: SearchBudget,
    opts: SearchOptions,
) -> SearchStats<D::Action>
where
    D: SearchDomain,
    H: EdgeHeuristic<D::Abstract>,
{
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let finish = |mut stats: SearchStats<D::Action>| {
        stats.wall_seconds = start.elapsed().as_secs_f64();
        stats
    };
    if domain.is_goal(s0) {
        stats.solved = true;
        return finish(stats);
    }
    let abs0 = domain.abstraction(s0, None);
    let deltas0 = domain.edges(s0, &abs0);
    if deltas0.is_empty() {
        return finish(stats);
    }
    let pr0 = h.priorities(&abs0, &deltas0);
    let root = Rc::new(Node {
        state: s0.clone(),
        abs: abs0,
        plan: Vec::new(),
    });

    let mut seq = 0u64;
    let mut iter = 0usize;
    'outer: loop {
        if schedule.max_iters.is_some_and(|m| iter > m) {
            break;
        }
        let cap = (schedule.cap)(schedule.base_cap, iter);
        let n_mp = (schedule.n_mp)(schedule.base_mp, iter);
        stats.caps.push(cap);
        let restart_seed = derive_seed(opts.seed, &[iter as u64]);
        let mut queue = BinaryHeap::new();
        for (&delta, &priority) in deltas0.iter().zip(&pr0) {
            queue.push(QueueEdge {
                node: root.clone(),
                delta,
                priority,
                seq,
                generation: iter,
            });
            seq += 1;
        }
        let mut pops = 0u64;
        loop {
            if budget.exhausted(stats.nodes_expanded, start) {
                break 'outer;
            }
            let queue_min = if opts.audit {
                queue.iter().map(|e| e.priority.value).fold(f64::INFINITY, f64::min)
            } else {
                f64::NAN
            };
            let Some(edge) = queue.pop() else { break };
            stats.nodes_expanded += 1;
            stats.smplcont_calls += 1;
            let mut rng = stream(restart_seed, &[pops]);
            pops += 1;
            let node = &edge.node;
            let budget_k = SampleBudget { n_smp, n_mp };
            let (action, report) = domain.smpl_cont(&node.state, &node.abs, edge.delta, budget_k, &mut rng);
            stats.motion_plans += report.motion_plans;
            if opts.audit {
                stats.log.push(PopRecord {
                    pop_index: stats.nodes_expanded - 1,
                    restart: iter,
                    generation: edge.generation,
                    priority: edge.priority,
                    queue_min,
                    feasible: action.is_some(),
                    report,
                });
            }
            let Some(action) = action else { continue };
            let next = domain.apply(&node.state, &action);
            let mut plan = node.plan.clone();
            plan.push(action.clone());
            if domain.is_goal(&next) {
                stats.solved = true;
                stats.plan = plan;
                return finish(stats);
            }
            if cap.is_some_and(|c| plan.len() >= c) {
                continue;
            }
            let abs = domain.abstraction(&next, Some((&node.abs, &action)));
            let deltas = domain.edges(&next, &abs);
            let prs = h.priorities(&abs, &deltas);
            let child = Rc::new(Node {
                state: next,
                abs,
                plan,
            });
            for (delta, priority) in deltas.into_iter().zip(prs) {
                queue.push(QueueEdge {
                    node: child.clone(),
                    delta,
                    priority,
                    seq,
                    generation: iter,
                });
                seq += 1;
            }
        }
        iter += 1;
        stats.restarts += 1;
    }
    finish(stats)
}

/// Sample-based abstract-heuristic search. Runs restarts with fresh random
/// streams whenever the queue empties, until solved or out of budget.
pub fn sahs<D, H>(
    domain: &mut D,
    h: &mut H,
    s0: &D::State,
    samples: SampleBudget,
    budget: SearchBudget,
    max_len: Option<usize>,
    opts: SearchOptions,
) -> SearchStats<D::Action>
where
    D: SearchDomain,
    H: EdgeHeuristic<D::Abstract>,
{
    let schedule = Schedule {
        cap: if max_len.is_some() { |c, _| Some(c) } else { |_, _| None },
        base_cap: max_len.unwrap_or(0),
        n_mp: |m, _| m,
        base_mp: samples.n_mp,
        max_iters: None,
    };
    run(domain, h, s0, samples.n_smp, schedule, budget, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcSahsConfig {
    /// Initial plan-length cap.
    pub l: usize,
    /// Initial motion-planning budget per sampling call.
    pub n_fc: usize,
    pub n_smp: usize,
    /// Stop after this many doublings; `None` runs until solved or out of budget.
    pub max_iters: Option<usize>,
}

/// SAHS whose plan-length cap and motion budget double on every restart.
pub fn pc_sahs<D, H>(
    domain: &mut D,
    h: &mut H,
    s0: &D::State,
    cfg: PcSahsConfig,
    budget: SearchBudget,
    opts: SearchOptions,
) -> SearchStats<D::Action>
where
    D: SearchDomain,
    H: EdgeHeuristic<D::Abstract>,
{
    assert!(cfg.l >= 1 && cfg.n_fc >= 1);
    let schedule = Schedule {
        cap: |c, i| Some(c.saturating_mul(1usize << i.min(62))),
        base_cap: cfg.l,
        n_mp: |m, i| m.saturating_mul(1usize << i.min(62)),
        base_mp: cfg.n_fc,
        max_iters: cfg.max_iters,
    };
    run(domain, h, s0, cfg.n_smp, schedule, budget, opts)
}

/// Proposal for the continuous parameters of a pick-and-place.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub pick_bearing: f64,
    pub place_xy: [f64; 2],
    pub place_bearing: f64,
}

/// A learned proposal distribution over continuous parameters. `None` means
/// the sampler has nothing to offer for this edge.
pub trait LearnedSampler {
    fn propose(
        &mut self,
        env: &Environment,
        state: &WorldState,
        abs: &AbstractState,
        delta: DiscreteParams,
        rng: &mut Rng,
    ) -> Option<Proposal>;
}

/// The pick-and-place domain: world states, predicate abstractions, and
/// motion-planned actions.
pub struct GtampDomain {
    pub env: Arc<Environment>,
    pub goal: GoalSpec,
    pub planner: MotionPlanner,
    pub predicates: PredicateConfig,
    pub sampler: Option<Box<dyn LearnedSampler>>,
}

impl GtampDomain {
    pub fn new(planner: MotionPlanner, goal: GoalSpec, predicates: PredicateConfig) -> Self {
        GtampDomain {
            env: planner.env.clone(),
            goal,
            planner,
            predicates,
            sampler: None,
        }
    }

    pub fn with_sampler(mut self, sampler: Box<dyn LearnedSampler>) -> Self {
        self.sampler = Some(sampler);
        self
    }

    pub fn uniform_proposal(&self, delta: DiscreteParams, rng: &mut Rng) -> Proposal {
        let bb = self.env.region(delta.region).footprint.aabb();
        Proposal {
            pick_bearing: rng.random_range(-PI..PI),
            place_xy: [
                rng.random_range(bb.min[0]..bb.max[0]),
                rng.random_range(bb.min[1]..bb.max[1]),
            ],
            place_bearing: rng.random_range(-PI..PI),
        }
    }

    /// Endpoint checks that need no motion planning: pick configuration,
    /// placement inside the region, and place configuration all free.
    pub fn partially_feasible(&self, state: &WorldState, delta: DiscreteParams, p: &Proposal) -> Option<ContinuousParams> {
        let env = &*self.env;
        let o = delta.object;
        let robot_free = |pose| {
            let fp = Footprint::new(env.robot_shape, pose);
            env.fixed_free(&fp) && state.movables_hitting(env, &fp, Some(o)).is_empty()
        };
        if !robot_free(pick_config(env, state, o, p.pick_bearing)) {
            return None;
        }
        let params = ContinuousParams::new(state, o, p.pick_bearing, p.place_xy, p.place_bearing);
        let placed = Footprint::new(env.object_shape(o), params.place_pose);
        if !crate::geometry::contains(&env.region(delta.region).footprint, &placed)
            || !env.fixed_free(&placed)
            || !state.movables_hitting(env, &placed, Some(o)).is_empty()
        {
            return None;
        }
        robot_free(place_config(env, o, &params)).then_some(params)
    }

    /// Motion plans for both phases of a partially feasible sample, then the
    /// full action check.
    pub fn plan_action(&mut self, state: &WorldState, delta: DiscreteParams, params: ContinuousParams) -> Option<ConcreteAction> {
        let env = self.env.clone();
        let o = delta.object;
        let pick = pick_config(&env, state, o, params.pick_bearing);
        let pre = self.planner.query_one(state, state.robot, pick, None, None, Mode::Strict)?;
        let att = carry_attachment(&env, state, o, params.pick_bearing);
        let place = place_config(&env, o, &params);
        let manip = self.planner.query_one(state, pick, place, Some(att), Some(o), Mode::Strict)?;
        let action = ConcreteAction {
            discrete: delta,
            continuous: params,
            pre_path: pre.path,
            manip_path: manip.path,
        };
        validate_action(&env, state, &action).ok().map(|_| action)
    }
}

impl SearchDomain for GtampDomain {
    type State = WorldState;
    type Abstract = AbstractState;
    type Action = ConcreteAction;

    fn abstraction(&mut self, state: &WorldState, parent: Option<(&AbstractState, &ConcreteAction)>) -> AbstractState {
        compute_abstract(&mut self.planner, state, &self.goal, &self.predicates, parent)
    }

    fn is_goal(&self, state: &WorldState) -> bool {
        is_goal(&self.env, state, &self.goal)
    }

    fn edges(&self, _state: &WorldState, _abs: &AbstractState) -> Vec<DiscreteParams> {
        self.env.all_discrete()
    }

    /// Draws up to `n_smp` proposals, keeping the first `n_mp` partially
    /// feasible ones, and motion-plans them in order. With a learned
    /// sampler, its proposals fill the first half of the kept slots.
    fn smpl_cont(
        &mut self,
        state: &WorldState,
        abs: &AbstractState,
        delta: DiscreteParams,
        budget: SampleBudget,
        rng: &mut Rng,
    ) -> (Option<ConcreteAction>, SampleReport) {
        let mut report = SampleReport::default();
        let mut kept: Vec<(ProposalSource, ContinuousParams)> = Vec::new();
        let learned_slots = if self.sampler.is_some() { budget.n_mp.div_ceil(2) } else { 0 };
        let learned_draws = budget.n_smp / 2;
        let mut sampler = self.sampler.take();
        while report.draws < budget.n_smp && kept.len() < budget.n_mp {
            let use_learned = kept.len() < learned_slots && report.draws < learned_draws;
            let learned = match sampler.as_mut() {
                Some(s) if use_learned => s.propose(&self.env, state, abs, delta, rng),
                _ => None,
            };
            let (src, p) = match learned {
                Some(p) => (ProposalSource::Learned, p),
                None => (ProposalSource::Uniform, self.uniform_proposal(delta, rng)),
            };
            report.draws += 1;
            if let Some(params) = self.partially_feasible(state, delta, &p) {
                kept.push((src, params));
            }
        }
        self.sampler = sampler;
        report.partially_feasible = kept.len();
        for (src, params) in kept {
            report.motion_plans += 1;
            report.tried.push(src);
            if let Some(a) = self.plan_action(state, delta, params) {
                return (Some(a), report);
            }
        }
        (None, report)
    }

    fn apply(&self, state: &WorldState, action: &ConcreteAction) -> WorldState {
        transition(&self.env, state, action).expect("sampled actions carry motion plans")
    }
}

/// Follows the top-scored abstract action with one sampled continuous
/// parameter per step and no search; resets to `s0` whenever the sample is
/// infeasible.
pub fn greedy_execute(
    domain: &mut GtampDomain,
    scorer: &mut dyn EdgeScorer,
    s0: &WorldState,
    max_steps: usize,
    max_resets: usize,
    seed: u64,
) -> SearchStats {
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let mut state = s0.clone();
    let mut plan = Vec::new();
    let mut parent: Option<(AbstractState, ConcreteAction)> = None;
    let mut draw = 0u64;
    while !domain.is_goal(&state) {
        if stats.steps >= max_steps || stats.resets >= max_resets {
            stats.wall_seconds = start.elapsed().as_secs_f64();
            return stats;
        }
        let abs = domain.abstraction(&state, parent.as_ref().map(|(a, b)| (a, b)));
        let deltas = domain.edges(&state, &abs);
        let scores = scorer.scores(&abs, &deltas);
        let best = (0..deltas.len())
            .max_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(j.cmp(&i)))
            .expect("at least one abstract action");
        let delta = deltas[best];
        let mut rng = stream(seed, &[draw]);
        draw += 1;
        stats.nodes_expanded += 1;
        stats.smplcont_calls += 1;
        let proposal = match domain.sampler.as_mut() {
            Some(s) => s.propose(&domain.env, &state, &abs, delta, &mut rng),
            None => None,
        };
        let proposal = proposal.unwrap_or_else(|| domain.uniform_proposal(delta, &mut rng));
        let action = domain.partially_feasible(&state, delta, &proposal).and_then(|p| {
            stats.motion_plans += 1;
            domain.plan_action(&state, delta, p)
        });
        match action {
            Some(a) => {
                state = domain.apply(&state, &a);
                plan.push(a.clone());
                parent = Some((abs, a));
                stats.steps += 1;
            }
            None => {
                state = s0.clone();
                plan.clear();
                parent = None;
                stats.resets += 1;
            }
        }
    }
    stats.solved = true;
    stats.plan = plan;
    stats.wall_seconds = start.elapsed().as_secs_f64();
    stats
}
