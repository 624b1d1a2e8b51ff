//! Planning episodes, the planner front door used to produce them, and the
//! training datasets built from them.

use crate::graph::encode;
use crate::motion::{extract_key_configs, KeyConfigSet, MotionPlanner, Roadmap};
use crate::predicates::{compute_abstract, AbstractState, PredicateConfig};
use crate::ranknet::{RankNet, RankRecord};
use crate::sampler::{clean_dataset, CleanedDataset, GanSampler};
use crate::search::{
    greedy_execute, pc_sahs, sahs, GtampDomain, HCountHeuristic, PcSahsConfig, RankHeuristic, SampleBudget, SearchBudget,
    SearchOptions, SearchStats, DEFAULT_N_MP, DEFAULT_N_SMP,
};
use crate::geometry::Pose2;
use crate::world::{is_goal, transition, ConcreteAction, Instance, WorldState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ExperienceError {
    #[error("episode {0}: {1}")]
    Invalid(String, String),
    #[error("planner {0} needs a {1}")]
    MissingModel(&'static str, &'static str),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub state_digest: String,
    pub object_poses: Vec<Pose2>,
    pub robot: Pose2,
    pub abstract_state: AbstractState,
    /// Action taken from this state; `None` on the last step.
    pub action: Option<ConcreteAction>,
}

impl EpisodeStep {
    pub fn world_state(&self) -> WorldState {
        WorldState {
            object_poses: self.object_poses.clone(),
            robot: self.robot,
            held: None,
            plan_trace: Vec::new(),
        }
    }
}

pub const EPISODE_FORMAT: &str = "gtamp-episode/1";

/// One planner run on one instance. A solved episode holds `T + 1` steps
/// for a length-`T` plan; an unsolved one holds only the start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub format: String,
    pub id: String,
    pub planner: String,
    pub seed: u64,
    pub solved: bool,
    pub instance: Instance,
    pub steps: Vec<EpisodeStep>,
    /// Search statistics without the plan and audit log.
    pub stats: SearchStats,
}

impl Episode {
    pub fn plan_len(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn actions(&self) -> Vec<ConcreteAction> {
        self.steps.iter().filter_map(|s| s.action.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("episode serializes")
    }

    /// Parses and checks structure: digests match poses, only the last step
    /// lacks an action, and a solved episode ends in a goal state.
    pub fn from_json(s: &str) -> Result<Episode, ExperienceError> {
        let ep: Episode = serde_json::from_str(s)?;
        ep.check()?;
        Ok(ep)
    }

    pub fn check(&self) -> Result<(), ExperienceError> {
        let bad = |m: &str| Err(ExperienceError::Invalid(self.id.clone(), m.into()));
        if self.format != EPISODE_FORMAT {
            return bad("unknown format");
        }
        let Some(last) = self.steps.last() else {
            return bad("no steps");
        };
        for (t, s) in self.steps.iter().enumerate() {
            if s.world_state().digest() != s.state_digest {
                return bad(&format!("step {t} digest mismatch"));
            }
            if s.action.is_none() != (t + 1 == self.steps.len()) {
                return bad(&format!("step {t} action slot"));
            }
        }
        if self.solved && !is_goal(&self.instance.environment, &last.world_state(), &self.instance.goal) {
            return bad("solved episode does not end in a goal state");
        }
        if !self.solved && self.steps.len() != 1 {
            return bad("unsolved episode stores a plan");
        }
        Ok(())
    }

    /// Replays the stored actions with full validation; returns the final state.
    pub fn replay(&self) -> Result<WorldState, crate::world::WorldError> {
        crate::world::replay(&self.instance.environment, &self.instance.initial_state, &self.actions())
    }

    pub fn save(&self, path: &Path) -> Result<(), ExperienceError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Episode, ExperienceError> {
        Episode::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Rebuilds the state and abstraction trace of a finished search.
pub fn record_episode(
    planner: &mut MotionPlanner,
    instance: &Instance,
    planner_name: &str,
    seed: u64,
    stats: &SearchStats,
) -> Episode {
    let env = &instance.environment;
    let cfg = PredicateConfig::new(instance.seed);
    let plan: &[ConcreteAction] = if stats.solved { &stats.plan } else { &[] };
    let mut state = instance.initial_state.clone();
    let mut steps = Vec::with_capacity(plan.len() + 1);
    let mut prev: Option<(AbstractState, ConcreteAction)> = None;
    for t in 0..=plan.len() {
        let abs = compute_abstract(planner, &state, &instance.goal, &cfg, prev.as_ref().map(|(a, b)| (a, b)));
        let action = plan.get(t).cloned();
        steps.push(EpisodeStep {
            state_digest: state.digest(),
            object_poses: state.object_poses.clone(),
            robot: state.robot,
            abstract_state: abs.clone(),
            action: action.clone(),
        });
        if let Some(a) = action {
            state = transition(env, &state, &a).expect("plan actions apply");
            prev = Some((abs, a));
        }
    }
    let mut summary = stats.clone();
    summary.plan.clear();
    summary.log.clear();
    Episode {
        format: EPISODE_FORMAT.into(),
        id: format!("{}-{}-s{}", instance.id, planner_name, seed),
        planner: planner_name.into(),
        seed,
        solved: stats.solved,
        instance: instance.clone(),
        steps,
        stats: summary,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    SahsHcount,
    SahsRank,
    SahsRankWgangp,
    PcSahs,
    Greedy,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 5] = [
        PlannerKind::SahsHcount,
        PlannerKind::SahsRank,
        PlannerKind::SahsRankWgangp,
        PlannerKind::PcSahs,
        PlannerKind::Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::SahsHcount => "sahs-hcount",
            PlannerKind::SahsRank => "sahs-rank",
            PlannerKind::SahsRankWgangp => "sahs-rank-wgangp",
            PlannerKind::PcSahs => "pc-sahs",
            PlannerKind::Greedy => "greedy",
        }
    }
}

impl std::str::FromStr for PlannerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown planner {s}"))
    }
}

/// Learned artifacts available to the planners.
#[derive(Clone, Debug, Default)]
pub struct Models {
    pub rank: Option<RankNet>,
    pub sampler: Option<GanSampler>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub samples: SampleBudget,
    pub budget: SearchBudget,
    pub max_len: Option<usize>,
    pub pc: PcSahsConfig,
    pub greedy_steps: usize,
    pub greedy_resets: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            samples: SampleBudget {
                n_smp: DEFAULT_N_SMP,
                n_mp: DEFAULT_N_MP,
            },
            budget: SearchBudget::nodes(100),
            max_len: None,
            pc: PcSahsConfig {
                l: 1,
                n_fc: 1,
                n_smp: DEFAULT_N_SMP,
                max_iters: None,
            },
            greedy_steps: 20,
            greedy_resets: 20,
        }
    }
}

/// Runs one planner on one instance.
pub fn run_planner(
    kind: PlannerKind,
    instance: &Instance,
    roadmap: Arc<Roadmap>,
    models: &Models,
    cfg: &RunConfig,
    seed: u64,
) -> Result<(SearchStats, MotionPlanner), ExperienceError> {
    let env = Arc::new(instance.environment.clone());
    let mp = MotionPlanner::new(env, roadmap);
    let mut domain = GtampDomain::new(mp, instance.goal.clone(), PredicateConfig::new(instance.seed));
    let rank = || models.rank.clone().ok_or(ExperienceError::MissingModel(kind.name(), "rank model"));
    let opts = SearchOptions { seed, audit: false };
    let s0 = &instance.initial_state;
    let stats = match kind {
        PlannerKind::SahsHcount => {
            let mut h = HCountHeuristic { goal: instance.goal.clone() };
            sahs(&mut domain, &mut h, s0, cfg.samples, cfg.budget, cfg.max_len, opts)
        }
        PlannerKind::SahsRank | PlannerKind::SahsRankWgangp => {
            if kind == PlannerKind::SahsRankWgangp {
                let s = models
                    .sampler
                    .as_ref()
                    .ok_or(ExperienceError::MissingModel(kind.name(), "sampler"))?;
                domain = domain.with_sampler(Box::new(s.for_goal(&instance.goal)));
            }
            let mut h = RankHeuristic {
                goal: instance.goal.clone(),
                scorer: rank()?,
            };
            sahs(&mut domain, &mut h, s0, cfg.samples, cfg.budget, cfg.max_len, opts)
        }
        PlannerKind::PcSahs => {
            let mut h = HCountHeuristic { goal: instance.goal.clone() };
            pc_sahs(&mut domain, &mut h, s0, cfg.pc, cfg.budget, opts)
        }
        PlannerKind::Greedy => {
            if let Some(s) = &models.sampler {
                domain = domain.with_sampler(Box::new(s.for_goal(&instance.goal)));
            }
            let mut scorer = rank()?;
            greedy_execute(&mut domain, &mut scorer, s0, cfg.greedy_steps, cfg.greedy_resets, seed)
        }
    };
    Ok((stats, domain.planner))
}

/// Runs `kind` on every (instance, seed) pair and records an episode per run.
pub fn collect(
    instances: &[Instance],
    kind: PlannerKind,
    models: &Models,
    cfg: &RunConfig,
    seeds: &[u64],
    roadmap: Arc<Roadmap>,
) -> Result<Vec<Episode>, ExperienceError> {
    let mut out = Vec::new();
    for inst in instances {
        for &seed in seeds {
            let (stats, mut mp) = run_planner(kind, inst, roadmap.clone(), models, cfg, seed)?;
            out.push(record_episode(&mut mp, inst, kind.name(), seed, &stats));
        }
    }
    Ok(out)
}

/// One record per plan step of every solved episode.
pub fn build_rank_dataset(episodes: &[Episode]) -> Vec<RankRecord> {
    let mut out = Vec::new();
    for ep in episodes.iter().filter(|e| e.solved) {
        let t_len = ep.plan_len();
        let mut last = usize::MAX;
        for (t, step) in ep.steps[..t_len].iter().enumerate() {
            let a = step.action.as_ref().expect("action");
            let graph = encode(&step.abstract_state);
            let expert = a.discrete.object.0 * graph.n_reg + a.discrete.region.0;
            assert!(expert < graph.n_candidates());
            let steps_to_goal = t_len - t;
            assert!(steps_to_goal < last);
            last = steps_to_goal;
            out.push(RankRecord {
                graph,
                expert,
                steps_to_goal,
            });
        }
    }
    out
}

pub fn build_sampler_dataset(episodes: &[Episode], keys: &KeyConfigSet) -> CleanedDataset {
    clean_dataset(episodes, keys)
}

/// Key configurations from every path of every solved episode.
pub fn build_key_configs(episodes: &[Episode], min_separation: f64) -> KeyConfigSet {
    let actions: Vec<ConcreteAction> = episodes.iter().filter(|e| e.solved).flat_map(|e| e.actions()).collect();
    let paths = actions
        .iter()
        .flat_map(|a| [a.pre_path.as_slice(), a.manip_path.as_slice()]);
    extract_key_configs(paths, min_separation)
}

/// Deterministic 80/20 split: true for held-out instance ids.
pub fn is_holdout(instance_id: &str) -> bool {
    let h = Sha256::digest(instance_id.as_bytes());
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) % 5 == 0
}
