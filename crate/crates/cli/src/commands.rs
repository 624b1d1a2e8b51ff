use crate::store::{self, Roadmaps};
use crate::summary::{summarize, RunRow, SummaryRow};
use crate::{CliError, Globals};
use clap::Args;
use gtamp_core::experience::{
    build_key_configs, build_rank_dataset, is_holdout, record_episode, run_planner, Episode, Models, PlannerKind,
    RunConfig,
};
use gtamp_core::motion::RoadmapConfig;
use gtamp_core::ranknet::{train_rank, RankLoss, RankNet, RankNetConfig, RankTrainConfig};
use gtamp_core::sampler::{bucket_tensors, clean_dataset, evaluate_kde, GanSampler, WganConfig, KDE_N_GEN};
use gtamp_core::search::{PcSahsConfig, SampleBudget, SearchBudget, SearchStats, DEFAULT_N_MP, DEFAULT_N_SMP};
use gtamp_core::world::{generate_instance, GeneratorConfig, Instance};
use serde::Serialize;
use std::path::{Path, PathBuf};

const RANK_PARAMS: &str = "rank.json";
const RANK_CONFIG: &str = "rank-config.json";

fn parse_planner(s: &str) -> Result<PlannerKind, String> {
    s.parse()
}

fn parse_loss(s: &str) -> Result<RankLoss, String> {
    match s {
        "hinge" => Ok(RankLoss::Hinge),
        "mse" => Ok(RankLoss::Mse),
        _ => Err(format!("unknown loss {s} (expected hinge or mse)")),
    }
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct GenArgs {
    /// Number of instances.
    #[arg(long)]
    pub n: usize,
    /// Seed of the first instance; instance i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub movables: usize,
    /// Objects jamming the doorway.
    #[arg(long, default_value_t = 3)]
    pub blockers: usize,
    #[arg(long, default_value_t = 1)]
    pub goals: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn gen(g: &Globals, a: &GenArgs) -> Result<(), CliError> {
    let out = g.resolve(&a.out);
    if a.n == 0 {
        // Nothing to write, so no directory and no manifest either.
        println!("wrote 0 instances");
        return Ok(());
    }
    store::create_dir(&out)?;
    let config = GeneratorConfig {
        n_movables: a.movables,
        n_goal_objects: a.goals,
        n_blockers: a.blockers,
    };
    for i in 0..a.n {
        let seed = a.seed + i as u64;
        let inst = generate_instance(seed, config).map_err(|e| CliError::Failed(format!("instance seed {seed}: {e}")))?;
        store::write(&out.join(format!("{}.json", inst.id)), inst.to_json().as_bytes())?;
    }
    store::write_manifest(&out, "gen", a, &[])?;
    println!("wrote {} instances to {}", a.n, out.display());
    Ok(())
}

/// Planner and budget flags shared by `plan` and `collect`.
#[derive(Args, Clone, Debug, Serialize)]
pub struct PlannerArgs {
    /// Instance files or directories.
    #[arg(long, required = true, num_args = 1..)]
    pub instances: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub budget_nodes: usize,
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    /// Planning seeds per instance.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// First planning seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only instances in this part of the id-hash split.
    #[arg(long, value_enum, default_value_t = Split::All)]
    pub split: Split,
    /// Directory written by `train-rank`.
    #[arg(long)]
    pub rank_model: Option<PathBuf>,
    /// Directory written by `train-sampler`.
    #[arg(long)]
    pub sampler: Option<PathBuf>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_N_SMP)]
    pub n_smp: usize,
    #[arg(long, default_value_t = DEFAULT_N_MP)]
    pub n_mp: usize,
    /// Initial plan-length cap of pc-sahs.
    #[arg(long, default_value_t = 1)]
    pub pc_l: usize,
    #[arg(long, default_value_t = 1)]
    pub pc_nfc: usize,
    #[arg(long, default_value_t = 20)]
    pub greedy_steps: usize,
    #[arg(long, default_value_t = 20)]
    pub greedy_resets: usize,
    #[arg(long, default_value_t = RoadmapConfig::default().n_vertices)]
    pub roadmap_vertices: usize,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    All,
    Train,
    Holdout,
}

impl Split {
    fn keeps(self, id: &str) -> bool {
        match self {
            Split::All => true,
            Split::Train => !is_holdout(id),
            Split::Holdout => is_holdout(id),
        }
    }
}

impl PlannerArgs {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        if self.seeds == 0 {
            return Err(CliError::Config("--seeds must be at least 1".into()));
        }
        if self.n_mp == 0 || self.n_smp == 0 || self.pc_l == 0 {
            return Err(CliError::Config("--n-smp, --n-mp and --pc-l must be positive".into()));
        }
        if self.budget_seconds.is_some_and(|s| !(s > 0.0)) {
            return Err(CliError::Config("--budget-seconds must be positive".into()));
        }
        Ok(RunConfig {
            samples: SampleBudget {
                n_smp: self.n_smp,
                n_mp: self.n_mp,
            },
            budget: SearchBudget {
                max_nodes: Some(self.budget_nodes),
                max_seconds: self.budget_seconds,
            },
            max_len: self.max_len,
            pc: PcSahsConfig {
                l: self.pc_l,
                n_fc: self.pc_nfc,
                n_smp: self.n_smp,
                max_iters: None,
            },
            greedy_steps: self.greedy_steps,
            greedy_resets: self.greedy_resets,
        })
    }

    fn models(&self, planners: &[PlannerKind]) -> Result<(Models, Vec<PathBuf>), CliError> {
        let needs_rank = planners.iter().any(|p| {
            matches!(
                p,
                PlannerKind::SahsRank | PlannerKind::SahsRankWgangp | PlannerKind::Greedy
            )
        });
        let needs_sampler = planners.contains(&PlannerKind::SahsRankWgangp);
        let mut inputs = Vec::new();
        let rank = match &self.rank_model {
            Some(dir) => {
                inputs.push(dir.join(RANK_PARAMS));
                Some(load_rank(dir)?)
            }
            None if needs_rank => return Err(CliError::Config("this planner needs --rank-model".into())),
            None => None,
        };
        let sampler = match &self.sampler {
            Some(dir) => {
                inputs.push(dir.join("sampler.json"));
                Some(GanSampler::load(dir).map_err(|e| CliError::input(dir, e))?)
            }
            None if needs_sampler => return Err(CliError::Config("sahs-rank-wgangp needs --sampler".into())),
            None => None,
        };
        Ok((Models { rank, sampler }, inputs))
    }

    fn instances(&self) -> Result<(Vec<Instance>, Vec<PathBuf>), CliError> {
        let (instances, files) = store::load_instances(&self.instances)?;
        Ok(instances
            .into_iter()
            .zip(files)
            .filter(|(i, _)| self.split.keeps(&i.id))
            .unzip())
    }
}

fn load_rank(dir: &Path) -> Result<RankNet, CliError> {
    let cfg_path = dir.join(RANK_CONFIG);
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| CliError::io(&cfg_path, e))?;
    let config: RankNetConfig = serde_json::from_str(&text).map_err(|e| CliError::input(&cfg_path, e))?;
    let p = dir.join(RANK_PARAMS);
    RankNet::load(&p, config).map_err(|e| CliError::input(&p, e))
}

struct RunOutcome {
    row: RunRow,
    stats: Option<SearchStats>,
    episode: Option<Episode>,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Every (planner, instance, seed) run, fanned out over the worker pool.
fn run_all(
    g: &Globals,
    planners: &[PlannerKind],
    a: &PlannerArgs,
    instances: &[Instance],
    models: &Models,
    record: bool,
) -> Result<Vec<RunOutcome>, CliError> {
    let cfg = a.run_config()?;
    let roadmaps = Roadmaps::new(RoadmapConfig {
        n_vertices: a.roadmap_vertices,
        ..RoadmapConfig::default()
    });
    let mut jobs = Vec::new();
    for &p in planners {
        for inst in instances {
            for s in 0..a.seeds {
                jobs.push((p, inst, a.seed + s));
            }
        }
    }
    Ok(store::par_map(&jobs, g.workers(), |&(kind, inst, seed)| {
        let mut row = RunRow {
            planner: kind.name().into(),
            instance: inst.id.clone(),
            seed,
            solved: false,
            nodes: 0,
            plan_len: 0,
            smplcont_calls: 0,
            motion_plans: 0,
            restarts: 0,
            wall_seconds: 0.0,
            error: String::new(),
        };
        let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            let roadmap = roadmaps.get(&inst.environment);
            let (stats, mut mp) = run_planner(kind, inst, roadmap, models, &cfg, seed)?;
            let episode = record.then(|| record_episode(&mut mp, inst, kind.name(), seed, &stats));
            Ok::<_, gtamp_core::experience::ExperienceError>((stats, episode))
        }));
        let (stats, episode) = match run {
            Ok(Ok((stats, episode))) => (Some(stats), episode),
            Ok(Err(e)) => {
                row.error = e.to_string();
                (None, None)
            }
            Err(p) => {
                row.error = panic_message(p);
                (None, None)
            }
        };
        if let Some(s) = &stats {
            row.solved = s.solved;
            row.nodes = s.nodes_expanded;
            row.plan_len = s.plan.len();
            row.smplcont_calls = s.smplcont_calls;
            row.motion_plans = s.motion_plans;
            row.restarts = s.restarts;
            row.wall_seconds = s.wall_seconds;
        }
        if !row.error.is_empty() {
            log::warn!("{} on {} seed {seed}: {}", row.planner, row.instance, row.error);
        }
        RunOutcome { row, stats, episode }
    }))
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<18} {:>7} {:>8} {:>8} {:>8} {:>8}", "planner", "solved", "p25", "p50", "p75", "p90");
    for r in rows {
        println!(
            "{:<18} {:>7.3} {:>8.1} {:>8.1} {:>8.1} {:>8.1}",
            r.planner, r.solved_rate, r.p25, r.p50, r.p75, r.p90
        );
    }
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct PlanArgs {
    /// One or more planners, comma separated.
    #[arg(long = "planner", required = true, value_delimiter = ',', value_parser = parse_planner)]
    pub planners: Vec<PlannerKind>,
    #[command(flatten)]
    pub run: PlannerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn plan(g: &Globals, a: &PlanArgs) -> Result<Vec<SummaryRow>, CliError> {
    let (models, model_files) = a.run.models(&a.planners)?;
    let (instances, mut inputs) = a.run.instances()?;
    inputs.extend(model_files);
    let out = g.resolve(&a.out);
    let outcomes = run_all(g, &a.planners, &a.run, &instances, &models, false)?;
    for &p in &a.planners {
        store::create_dir(&out.join("runs").join(p.name()))?;
    }
    for o in &outcomes {
        if let Some(stats) = &o.stats {
            let path = out
                .join("runs")
                .join(&o.row.planner)
                .join(format!("{}-s{}.json", o.row.instance, o.row.seed));
            store::write(&path, serde_json::to_string(stats).expect("stats serialize").as_bytes())?;
        }
    }
    let rows: Vec<RunRow> = outcomes.into_iter().map(|o| o.row).collect();
    let summary = summarize(&rows);
    store::write_csv(&out.join("runs.csv"), &rows)?;
    store::write_csv(&out.join("summary.csv"), &summary)?;
    store::write_manifest(&out, "plan", a, &inputs)?;
    print_summary(&summary);
    Ok(summary)
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct CollectArgs {
    #[arg(long, default_value = "sahs-hcount", value_parser = parse_planner)]
    pub planner: PlannerKind,
    #[command(flatten)]
    pub run: PlannerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs the planner and stores every episode, solved or not.
pub fn collect(g: &Globals, a: &CollectArgs) -> Result<(), CliError> {
    let (models, model_files) = a.run.models(&[a.planner])?;
    let (instances, mut inputs) = a.run.instances()?;
    inputs.extend(model_files);
    let out = g.resolve(&a.out);
    let dir = out.join("episodes");
    store::create_dir(&dir)?;
    let outcomes = run_all(g, &[a.planner], &a.run, &instances, &models, true)?;
    let mut solved = 0;
    for o in &outcomes {
        if let Some(ep) = &o.episode {
            solved += usize::from(ep.solved);
            let path = dir.join(format!("{}.json", ep.id));
            ep.save(&path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        }
    }
    let rows: Vec<RunRow> = outcomes.into_iter().map(|o| o.row).collect();
    store::write_csv(&out.join("runs.csv"), &rows)?;
    store::write_csv(&out.join("summary.csv"), &summarize(&rows))?;
    store::write_manifest(&out, "collect", a, &inputs)?;
    println!("collected {} episodes ({solved} solved) into {}", rows.len(), dir.display());
    Ok(())
}

fn split_episodes(episodes: Vec<Episode>) -> (Vec<Episode>, Vec<Episode>) {
    episodes.into_iter().partition(|e| !is_holdout(&e.instance.id))
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct TrainRankArgs {
    /// Episode files or directories written by `collect`.
    #[arg(long, required = true, num_args = 1..)]
    pub episodes: Vec<PathBuf>,
    #[arg(long, default_value = "hinge", value_parser = parse_loss)]
    pub loss: RankLoss,
    #[arg(long, default_value_t = RankTrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = RankTrainConfig::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = RankTrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = RankNetConfig::default().d_m)]
    pub d_m: usize,
    #[arg(long, default_value_t = RankNetConfig::default().hidden)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train_rank_cmd(g: &Globals, a: &TrainRankArgs) -> Result<(), CliError> {
    let (episodes, inputs) = store::load_episodes(&a.episodes)?;
    let (train, holdout) = split_episodes(episodes);
    let train_set = build_rank_dataset(&train);
    let holdout_set = build_rank_dataset(&holdout);
    if train_set.is_empty() {
        return Err(CliError::Config("no solved training episodes among the inputs".into()));
    }
    let config = RankNetConfig {
        d_m: a.d_m,
        hidden: a.hidden,
    };
    let mut net = RankNet::new(config, a.seed);
    let tc = RankTrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        loss: a.loss,
        seed: a.seed,
    };
    let curve = train_rank(&mut net, &train_set, &holdout_set, &tc).map_err(|e| CliError::Failed(e.to_string()))?;
    let out = g.resolve(&a.out);
    store::create_dir(&out)?;
    let p = out.join(RANK_PARAMS);
    net.save(&p).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?;
    store::write(&out.join(RANK_CONFIG), serde_json::to_string_pretty(&config).expect("config").as_bytes())?;
    store::write_csv(&out.join("curve.csv"), &curve)?;
    store::write_manifest(&out, "train-rank", a, &inputs)?;
    let last = curve.last().map_or(f64::NAN, |c| c.holdout_top1);
    println!(
        "trained on {} records; {} held-out records; held-out top-1 {last:.3}",
        train_set.len(),
        holdout_set.len()
    );
    Ok(())
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct TrainSamplerArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub episodes: Vec<PathBuf>,
    /// Key-configuration spacing, also the goal-sweep distance threshold.
    #[arg(long, default_value_t = 0.5)]
    pub min_separation: f64,
    #[arg(long, default_value_t = WganConfig::default().n_tot)]
    pub n_tot: usize,
    #[arg(long, default_value_t = WganConfig::default().n_c)]
    pub n_c: usize,
    #[arg(long, default_value_t = WganConfig::default().n_b)]
    pub n_b: usize,
    #[arg(long, default_value_t = WganConfig::default().lr_gen)]
    pub lr_gen: f64,
    #[arg(long, default_value_t = WganConfig::default().lr_critic)]
    pub lr_critic: f64,
    #[arg(long, default_value_t = WganConfig::default().lambda_gp)]
    pub lambda_gp: f64,
    #[arg(long, default_value_t = WganConfig::default().hidden)]
    pub hidden: usize,
    #[arg(long, default_value_t = WganConfig::default().d_z)]
    pub d_z: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct BucketRow {
    phase: &'static str,
    region: usize,
    records: usize,
}

#[derive(Serialize)]
struct WganRow {
    phase: &'static str,
    region: usize,
    iter: usize,
    critic_loss: f64,
    generator_loss: f64,
    grad_norm: f64,
}

pub fn train_sampler(g: &Globals, a: &TrainSamplerArgs) -> Result<(), CliError> {
    let (episodes, inputs) = store::load_episodes(&a.episodes)?;
    let (train, _) = split_episodes(episodes);
    let train: Vec<Episode> = train.into_iter().filter(|e| e.solved).collect();
    if train.is_empty() {
        return Err(CliError::Config("no solved training episodes among the inputs".into()));
    }
    if !(a.min_separation > 0.0) {
        return Err(CliError::Config("--min-separation must be positive".into()));
    }
    let keys = build_key_configs(&train, a.min_separation);
    let data = clean_dataset(&train, &keys);
    if data.records.is_empty() {
        return Err(CliError::Config("cleaning kept no steps; nothing to train on".into()));
    }
    let cfg = WganConfig {
        n_tot: a.n_tot,
        n_c: a.n_c,
        n_b: a.n_b,
        lr_gen: a.lr_gen,
        lr_critic: a.lr_critic,
        lambda_gp: a.lambda_gp,
        hidden: a.hidden,
        d_z: a.d_z,
        seed: a.seed,
        ..WganConfig::default()
    };
    let env = &train[0].instance.environment;
    let (sampler, reports) = GanSampler::train(keys, env, &data, &cfg).map_err(|e| CliError::Failed(e.to_string()))?;
    let out = g.resolve(&a.out);
    sampler.save(&out).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))?;
    let buckets: Vec<BucketRow> = data
        .bucket_counts()
        .into_iter()
        .map(|((phase, r), n)| BucketRow {
            phase: phase.name(),
            region: r.0,
            records: n,
        })
        .collect();
    let curves: Vec<WganRow> = reports
        .iter()
        .flat_map(|(&(phase, r), rep)| {
            rep.curve.iter().map(move |p| WganRow {
                phase: phase.name(),
                region: r.0,
                iter: p.iter,
                critic_loss: p.critic_loss,
                generator_loss: p.generator_loss,
                grad_norm: p.grad_norm,
            })
        })
        .collect();
    store::write_csv(&out.join("buckets.csv"), &buckets)?;
    store::write_csv(&out.join("curves.csv"), &curves)?;
    store::write_manifest(&out, "train-sampler", a, &inputs)?;
    println!(
        "kept {} of {} steps; {} key configurations; trained {} models",
        data.n_kept,
        data.n_steps,
        sampler.keys.len(),
        sampler.models.len()
    );
    Ok(())
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct EvalSamplerArgs {
    /// Directory written by `train-sampler`.
    #[arg(long)]
    pub sampler: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub episodes: Vec<PathBuf>,
    /// Score every episode instead of only held-out instances.
    #[arg(long)]
    pub all: bool,
    #[arg(long, default_value_t = KDE_N_GEN)]
    pub n_gen: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exit with status 1 when the mean log-likelihood is below this value.
    #[arg(long)]
    pub reject_below: Option<f64>,
}

/// Mean KDE log-likelihood of held-out parameters, over all scored states.
pub fn eval_sampler(_g: &Globals, a: &EvalSamplerArgs) -> Result<f64, CliError> {
    let sampler = GanSampler::load(&a.sampler).map_err(|e| CliError::input(&a.sampler, e))?;
    let (episodes, _) = store::load_episodes(&a.episodes)?;
    let scored: Vec<Episode> = if a.all {
        episodes
    } else {
        split_episodes(episodes).1
    };
    let scored: Vec<Episode> = scored.into_iter().filter(|e| e.solved).collect();
    if scored.is_empty() || a.n_gen < 2 {
        return Err(CliError::Config("need solved held-out episodes and --n-gen of at least 2".into()));
    }
    let data = clean_dataset(&scored, &sampler.keys);
    let env = &scored[0].instance.environment;
    let (mut total, mut count) = (0.0, 0usize);
    for ((phase, region), n) in data.bucket_counts() {
        let Some(gan) = sampler.models.get(&(phase, region)) else {
            log::warn!("no model for {}-{}; {n} records skipped", phase.name(), region.0);
            continue;
        };
        let (c, t) = bucket_tensors(env, &data.bucket(phase, region));
        let held: Vec<(Vec<f64>, Vec<f64>)> = c.rows().into_iter().zip(t.rows()).map(|(c, t)| (c.to_vec(), t.to_vec())).collect();
        let mean = evaluate_kde(&mut |c, rng| gan.generate(c, rng), &held, a.n_gen, a.seed);
        println!("{}-{}: {n} states, mean log-likelihood {mean:.4}", phase.name(), region.0);
        total += mean * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(CliError::Config("no held-out record has a trained model".into()));
    }
    let mean = total / count as f64;
    println!("mean KDE log-likelihood: {mean:.4}");
    if let Some(th) = a.reject_below {
        if mean < th {
            return Err(CliError::Failed(format!("rejected: {mean:.4} < {th}")));
        }
        println!("accepted: {mean:.4} >= {th}");
    }
    Ok(mean)
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Instances to generate; the id-hash split sends about a fifth to the held-out batch.
    #[arg(long, default_value_t = 25)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub movables: usize,
    #[arg(long, default_value_t = 2)]
    pub blockers: usize,
    #[arg(long, default_value_t = 1)]
    pub goals: usize,
    /// Collection seeds per training instance.
    #[arg(long, default_value_t = 1)]
    pub collect_seeds: u64,
    /// Planning seeds per held-out instance.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 100)]
    pub budget_nodes: usize,
    #[arg(long, default_value_t = RankTrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_tot: usize,
    #[arg(long, default_value_t = RoadmapConfig::default().n_vertices)]
    pub roadmap_vertices: usize,
}

/// gen, bootstrap collection with sahs-hcount, rank training, collection
/// with sahs-rank, sampler training, then every planner on the held-out batch.
pub fn pipeline(g: &Globals, a: &PipelineArgs) -> Result<(), CliError> {
    let out = g.resolve(&a.out);
    let sub = |name: &str| out.join(name);
    let local = Globals {
        out_root: None,
        workers: g.workers,
    };
    gen(
        &local,
        &GenArgs {
            n: a.n,
            seed: a.seed,
            movables: a.movables,
            blockers: a.blockers,
            goals: a.goals,
            out: sub("instances"),
        },
    )?;
    let runs = |seeds: u64, split: Split, rank: Option<PathBuf>, sampler: Option<PathBuf>| PlannerArgs {
        instances: vec![sub("instances")],
        budget_nodes: a.budget_nodes,
        budget_seconds: None,
        seeds,
        seed: a.seed,
        split,
        rank_model: rank,
        sampler,
        max_len: None,
        n_smp: DEFAULT_N_SMP,
        n_mp: DEFAULT_N_MP,
        pc_l: 1,
        pc_nfc: 1,
        greedy_steps: 20,
        greedy_resets: 20,
        roadmap_vertices: a.roadmap_vertices,
    };
    collect(
        &local,
        &CollectArgs {
            planner: PlannerKind::SahsHcount,
            run: runs(a.collect_seeds, Split::Train, None, None),
            out: sub("bootstrap"),
        },
    )?;
    train_rank_cmd(
        &local,
        &TrainRankArgs {
            episodes: vec![sub("bootstrap")],
            loss: RankLoss::Hinge,
            epochs: a.epochs,
            lr: RankTrainConfig::default().lr,
            batch_size: RankTrainConfig::default().batch_size,
            d_m: RankNetConfig::default().d_m,
            hidden: RankNetConfig::default().hidden,
            seed: a.seed,
            out: sub("rank"),
        },
    )?;
    collect(
        &local,
        &CollectArgs {
            planner: PlannerKind::SahsRank,
            run: runs(a.collect_seeds, Split::Train, Some(sub("rank")), None),
            out: sub("rank-episodes"),
        },
    )?;
    let d = WganConfig::default();
    train_sampler(
        &local,
        &TrainSamplerArgs {
            episodes: vec![sub("bootstrap"), sub("rank-episodes")],
            min_separation: 0.5,
            n_tot: a.n_tot,
            n_c: d.n_c,
            n_b: d.n_b,
            lr_gen: d.lr_gen,
            lr_critic: d.lr_critic,
            lambda_gp: d.lambda_gp,
            hidden: d.hidden,
            d_z: d.d_z,
            seed: a.seed,
            out: sub("sampler"),
        },
    )?;
    plan(
        &local,
        &PlanArgs {
            planners: PlannerKind::ALL.to_vec(),
            run: runs(a.seeds, Split::Holdout, Some(sub("rank")), Some(sub("sampler"))),
            out: sub("eval"),
        },
    )?;
    store::write_manifest(&out, "pipeline", a, &[])?;
    Ok(())
}
