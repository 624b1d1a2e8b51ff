//! Continuous-parameter sampler: key-configuration state encoding, data
//! cleaning, a conditional WGAN-GP, KDE scoring, and the search-facing
//! [`GanSampler`].

use crate::experience::{Episode, EpisodeStep};
use crate::geometry::{normalize_angle, Footprint, Pose2, SweptVolume};
use crate::motion::KeyConfigSet;
use crate::nn::{concat_cols, load_into, save_params, Activation, Adam, Mlp, NnError, Params, Tape, Tensor, Var};
use crate::predicates::AbstractState;
use crate::rng::{derive_seed, stream, Rng};
use crate::search::{LearnedSampler, Proposal};
use crate::world::{ContinuousParams, DiscreteParams, Environment, GoalSpec, ObjectId, RegionId, WorldState};
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("bucket {0} has no records")]
    EmptyBucket(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("sampler manifest: {0}")]
    Manifest(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pick,
    Place,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pick => "pick",
            Phase::Place => "place",
        }
    }
}

/// Per key configuration: does the robot collide with a movable there, and
/// is it near a goal manipulation sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyConfigMatrix {
    pub bits: Vec<[bool; 2]>,
}

impl KeyConfigMatrix {
    pub fn n_k(&self) -> usize {
        self.bits.len()
    }

    pub fn column(&self, c: usize) -> Vec<bool> {
        self.bits.iter().map(|b| b[c]).collect()
    }

    /// Row-major 0/1 flattening.
    pub fn flat(&self) -> Vec<u8> {
        self.bits.iter().flat_map(|b| [b[0] as u8, b[1] as u8]).collect()
    }
}

/// Swept volumes of every goal pair's manipulation path in `abs`.
pub fn goal_sweeps(env: &Environment, abs: &AbstractState, goal: &GoalSpec) -> Vec<SweptVolume> {
    goal.pairs
        .iter()
        .filter_map(|&(o, r)| abs.vmanip(o, r))
        .map(|v| v.swept(env))
        .collect()
}

/// The `n_k × 2` key-configuration encoding of a state and goal. Column 1
/// uses the set's `min_separation` as distance threshold.
pub fn encode_state(env: &Environment, state: &WorldState, keys: &KeyConfigSet, sweeps: &[SweptVolume]) -> KeyConfigMatrix {
    assert!(!keys.is_empty(), "key configuration set is empty");
    let tau = keys.min_separation;
    let bits = keys
        .configs
        .iter()
        .map(|q| {
            let fp = Footprint::new(env.robot_shape, *q);
            let hit = !state.movables_hitting(env, &fp, None).is_empty();
            let near = sweeps.iter().any(|s| s.min_waypoint_distance(q.xy()) <= tau);
            [hit, near]
        })
        .collect();
    KeyConfigMatrix { bits }
}

/// How many goal volumes `o` intrudes on: one per goal object whose
/// pre-grasp volume it occludes, one per goal pair whose manipulation volume
/// it occludes.
pub fn goal_volume_hits(abs: &AbstractState, goal: &GoalSpec, o: ObjectId) -> usize {
    let mut goal_objects: Vec<ObjectId> = goal.pairs.iter().map(|p| p.0).collect();
    goal_objects.sort();
    goal_objects.dedup();
    let pre = goal_objects
        .iter()
        .filter(|&&g| abs.vpre[g.0].as_ref().is_some_and(|v| v.occluders.contains(&o)))
        .count();
    let manip = goal
        .pairs
        .iter()
        .filter(|&&(g, r)| abs.vmanip(g, r).is_some_and(|v| v.occluders.contains(&o)))
        .count();
    pre + manip
}

/// Keep/discard decision for every action of a trace: a step is kept when
/// the moved object intrudes on strictly fewer goal volumes afterwards.
pub fn keep_decisions(goal: &GoalSpec, steps: &[EpisodeStep]) -> Vec<bool> {
    steps
        .windows(2)
        .map(|w| {
            let o = w[0].action.as_ref().expect("non-final steps carry an action").discrete.object;
            goal_volume_hits(&w[0].abstract_state, goal, o) > goal_volume_hits(&w[1].abstract_state, goal, o)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerRecord {
    pub episode: String,
    pub step: usize,
    pub phase: Phase,
    pub delta: DiscreteParams,
    pub phi: Vec<u8>,
    pub object_pose: Pose2,
    pub params: ContinuousParams,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanedDataset {
    pub records: Vec<SamplerRecord>,
    pub n_steps: usize,
    pub n_kept: usize,
}

impl CleanedDataset {
    pub fn bucket_counts(&self) -> BTreeMap<(Phase, RegionId), usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry((r.phase, r.delta.region)).or_insert(0) += 1;
        }
        m
    }

    pub fn bucket(&self, phase: Phase, region: RegionId) -> Vec<&SamplerRecord> {
        self.records
            .iter()
            .filter(|r| r.phase == phase && r.delta.region == region)
            .collect()
    }
}

/// Filters solved episodes down to progress-making steps and encodes each
/// kept step as one pick and one place record.
pub fn clean_dataset(episodes: &[Episode], keys: &KeyConfigSet) -> CleanedDataset {
    let mut out = CleanedDataset::default();
    for ep in episodes.iter().filter(|e| e.solved) {
        let env = &ep.instance.environment;
        let goal = &ep.instance.goal;
        let keep = keep_decisions(goal, &ep.steps);
        out.n_steps += keep.len();
        for (t, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
            out.n_kept += 1;
            let step = &ep.steps[t];
            let action = step.action.as_ref().expect("action");
            let state = step.world_state();
            let phi = encode_state(env, &state, keys, &goal_sweeps(env, &step.abstract_state, goal)).flat();
            for phase in [Phase::Pick, Phase::Place] {
                out.records.push(SamplerRecord {
                    episode: ep.id.clone(),
                    step: t,
                    phase,
                    delta: action.discrete,
                    phi: phi.clone(),
                    object_pose: state.object_poses[action.discrete.object.0],
                    params: action.continuous,
                });
            }
        }
    }
    out
}

/// Object pose as `[x, y, cos θ, sin θ]` with positions scaled to the workspace.
pub fn pose_features(env: &Environment, pose: &Pose2) -> [f64; 4] {
    let c = env.workspace.center();
    let (hw, hh) = (env.workspace.width() / 2.0, env.workspace.height() / 2.0);
    [(pose.x - c[0]) / hw, (pose.y - c[1]) / hh, pose.theta.cos(), pose.theta.sin()]
}

/// Generator and critic conditioning vector.
pub fn condition(env: &Environment, phi: &[u8], pose: &Pose2) -> Vec<f64> {
    phi.iter().map(|&b| b as f64).chain(pose_features(env, pose)).collect()
}

/// Center and usable half extents for placing `o` in `r`: the region box
/// shrunk by the object's circumradius where it fits.
pub fn region_frame(env: &Environment, o: ObjectId, r: RegionId) -> ([f64; 2], [f64; 2]) {
    let bb = env.region(r).footprint.aabb();
    let m = env.object_shape(o).circumradius();
    let half = |w: f64| if w / 2.0 > m { w / 2.0 - m } else { w / 2.0 };
    (bb.center(), [half(bb.width()), half(bb.height())])
}

/// Training target in critic space: `[cos, sin]` of the pick bearing, or
/// region-normalized placement position plus `[cos, sin]` of the place bearing.
pub fn target(env: &Environment, phase: Phase, delta: DiscreteParams, params: &ContinuousParams) -> Vec<f64> {
    match phase {
        Phase::Pick => vec![params.pick_bearing.cos(), params.pick_bearing.sin()],
        Phase::Place => {
            let (c, h) = region_frame(env, delta.object, delta.region);
            vec![
                (params.place_pose.x - c[0]) / h[0],
                (params.place_pose.y - c[1]) / h[1],
                params.place_bearing.cos(),
                params.place_bearing.sin(),
            ]
        }
    }
}

/// How raw generator outputs map into the critic's space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Identity.
    Raw,
    /// Two outputs normalized to a unit vector (an angle).
    Angle,
    /// Two free outputs followed by an angle pair.
    PlaneAngle,
}

const UNIT_EPS: f64 = 1e-12;

fn unit_rows<'t>(v: Var<'t>) -> Var<'t> {
    let inv = v.square().sum_cols().add_scalar(UNIT_EPS).sqrt().recip();
    v * inv.broadcast_cols(2)
}

impl Head {
    fn apply<'t>(self, raw: Var<'t>) -> Var<'t> {
        match self {
            Head::Raw => raw,
            Head::Angle => unit_rows(raw),
            Head::PlaneAngle => concat_cols(&[raw.slice_cols(0, 2), unit_rows(raw.slice_cols(2, 2))]),
        }
    }

    fn apply_tensor(self, raw: &mut Tensor) {
        let start = match self {
            Head::Raw => return,
            Head::Angle => 0,
            Head::PlaneAngle => 2,
        };
        for mut row in raw.rows_mut() {
            let n = (row[start] * row[start] + row[start + 1] * row[start + 1] + UNIT_EPS).sqrt();
            row[start] /= n;
            row[start + 1] /= n;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GanShape {
    pub cond_dim: usize,
    pub out_dim: usize,
    pub d_z: usize,
    pub hidden: usize,
    pub head: Head,
}

/// Conditional generator and critic, two tanh hidden layers each.
#[derive(Clone, Debug, PartialEq)]
pub struct CondGan {
    pub shape: GanShape,
    pub generator: Mlp,
    pub critic: Mlp,
}

impl CondGan {
    pub fn new(shape: GanShape, seed: u64) -> CondGan {
        let mut rng = stream(seed, &[0x6761]);
        let h = shape.hidden;
        let acts = [Activation::Tanh, Activation::Tanh, Activation::Linear];
        let generator = Mlp::new(&[shape.cond_dim + shape.d_z, h, h, shape.out_dim], &acts, &mut rng);
        let critic = Mlp::new(&[shape.cond_dim + shape.out_dim, h, h, 1], &acts, &mut rng);
        CondGan {
            shape,
            generator,
            critic,
        }
    }

    pub fn noise(&self, rng: &mut Rng, n: usize) -> Tensor {
        Array2::from_shape_fn((n, self.shape.d_z), |_| StandardNormal.sample(rng))
    }

    /// Generator outputs in critic space for given conditions and noise.
    pub fn generate_with(&self, cond: &Tensor, z: &Tensor) -> Tensor {
        let x = ndarray::concatenate![ndarray::Axis(1), cond.view(), z.view()];
        let mut out = self.generator.eval(&x);
        self.shape.head.apply_tensor(&mut out);
        out
    }

    /// One sample for one condition with fresh noise.
    pub fn generate(&self, cond: &[f64], rng: &mut Rng) -> Vec<f64> {
        let c = Array2::from_shape_vec((1, cond.len()), cond.to_vec()).expect("row");
        let z = self.noise(rng, 1);
        self.generate_with(&c, &z).row(0).to_vec()
    }

    pub fn critic_value(&self, cond: &Tensor, k: &Tensor) -> Tensor {
        self.critic.eval(&ndarray::concatenate![ndarray::Axis(1), cond.view(), k.view()])
    }

    fn critic_var<'t>(&self, cp: &[Var<'t>], cond: Var<'t>, k: Var<'t>) -> Var<'t> {
        self.critic.forward(cp, concat_cols(&[cond, k]))
    }

    fn generator_var<'t>(&self, gp: &[Var<'t>], cond: Var<'t>, z: Var<'t>) -> Var<'t> {
        self.shape.head.apply(self.generator.forward(gp, concat_cols(&[cond, z])))
    }
}

/// Critic objective on one batch, with the per-row gradient norms at the
/// interpolates. Minimizing it maximizes the critic's real-minus-fake gap
/// under a squared unit-norm gradient penalty.
pub struct CriticLoss<'t> {
    pub loss: Var<'t>,
    pub penalty: Var<'t>,
    pub norms: Vec<f64>,
}

pub fn critic_loss<'t>(
    gan: &CondGan,
    cp: &[Var<'t>],
    cond: &Tensor,
    real: &Tensor,
    fake: &Tensor,
    eps: &[f64],
    lambda: f64,
) -> Result<CriticLoss<'t>, NnError> {
    let tape = cp[0].tape();
    let mut khat = real.clone();
    for (i, mut row) in khat.rows_mut().into_iter().enumerate() {
        row.zip_mut_with(&fake.row(i), |r, &f| *r = eps[i] * *r + (1.0 - eps[i]) * f);
    }
    let c = tape.var(cond.clone());
    let khat = tape.var(khat);
    let d_hat = gan.critic_var(cp, c, khat).sum();
    let g = tape.grad(d_hat, &[khat])?.remove(0);
    let norm = g.square().sum_cols().sqrt();
    let norms = norm.value().iter().copied().collect();
    let penalty = norm.add_scalar(-1.0).square();
    let d_real = gan.critic_var(cp, c, tape.var(real.clone()));
    let d_fake = gan.critic_var(cp, c, tape.var(fake.clone()));
    let per = (d_fake - d_real) + penalty.scale(lambda);
    Ok(CriticLoss {
        loss: per.mean(),
        penalty: penalty.mean(),
        norms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WganConfig {
    pub lambda_gp: f64,
    pub n_tot: usize,
    pub n_c: usize,
    pub n_b: usize,
    pub lr_gen: f64,
    pub lr_critic: f64,
    /// Adam moment decay rates for both networks.
    pub betas: (f64, f64),
    pub hidden: usize,
    pub d_z: usize,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for WganConfig {
    fn default() -> Self {
        WganConfig {
            lambda_gp: 10.0,
            n_tot: 20_000,
            n_c: 5,
            n_b: 32,
            lr_gen: 1e-4,
            lr_critic: 1e-4,
            betas: (0.5, 0.9),
            hidden: 64,
            d_z: 4,
            seed: 0,
            log_every: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WganCurvePoint {
    pub iter: usize,
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WganReport {
    pub curve: Vec<WganCurvePoint>,
    /// The bucket had fewer than `n_b` records.
    pub degenerate: bool,
}

fn rows(t: &Tensor, idx: &[usize]) -> Tensor {
    t.select(ndarray::Axis(0), idx)
}

/// Trains `gan` on rows of (`cond`, `data`). Batches are drawn with
/// replacement; a bucket smaller than `n_b` is flagged and logged.
pub fn train_wgan_gp(gan: &mut CondGan, name: &str, cond: &Tensor, data: &Tensor, cfg: &WganConfig) -> Result<WganReport, SamplerError> {
    let n = cond.nrows();
    if n == 0 {
        return Err(SamplerError::EmptyBucket(name.into()));
    }
    assert_eq!(data.nrows(), n);
    let degenerate = n < cfg.n_b;
    if degenerate {
        log::warn!("bucket {name}: {n} records < batch size {}; sampling with replacement", cfg.n_b);
    }
    let mut rng = stream(cfg.seed, &[0x7767]);
    let adam = |lr| {
        let mut a = Adam::new(lr);
        (a.beta1, a.beta2) = cfg.betas;
        a
    };
    let (mut adam_c, mut adam_g) = (adam(cfg.lr_critic), adam(cfg.lr_gen));
    let mut curve = Vec::new();
    let (mut acc_c, mut acc_g, mut acc_n, mut acc_k) = (0.0, 0.0, 0.0, 0usize);
    for iter in 0..cfg.n_tot {
        for _ in 0..cfg.n_c {
            let idx: Vec<usize> = (0..cfg.n_b).map(|_| rng.random_range(0..n)).collect();
            let c = rows(cond, &idx);
            let real = rows(data, &idx);
            let z = gan.noise(&mut rng, cfg.n_b);
            let fake = gan.generate_with(&c, &z);
            let eps: Vec<f64> = (0..cfg.n_b).map(|_| rng.random::<f64>()).collect();
            let tape = Tape::new();
            let cp = gan.critic.bind(&tape);
            let l = critic_loss(gan, &cp, &c, &real, &fake, &eps, cfg.lambda_gp)?;
            let grads: Vec<Tensor> = tape.grad(l.loss, &cp)?.iter().map(|g| g.value()).collect();
            tape.check()?;
            adam_c.update(gan.critic.tensors_mut(), &grads);
            acc_c += l.loss.item();
            acc_n += l.norms.iter().sum::<f64>() / l.norms.len() as f64;
            acc_k += 1;
        }
        let idx: Vec<usize> = (0..cfg.n_b).map(|_| rng.random_range(0..n)).collect();
        let z = gan.noise(&mut rng, cfg.n_b);
        let tape = Tape::new();
        let gp = gan.generator.bind(&tape);
        let cp = gan.critic.bind(&tape);
        let c = tape.var(rows(cond, &idx));
        let k = gan.generator_var(&gp, c, tape.var(z));
        let loss = gan.critic_var(&cp, c, k).mean().scale(-1.0);
        let grads: Vec<Tensor> = tape.grad(loss, &gp)?.iter().map(|g| g.value()).collect();
        tape.check()?;
        adam_g.update(gan.generator.tensors_mut(), &grads);
        acc_g += loss.item();
        if (iter + 1) % cfg.log_every.max(1) == 0 || iter + 1 == cfg.n_tot {
            let steps = (iter % cfg.log_every.max(1)) + 1;
            let p = WganCurvePoint {
                iter: iter + 1,
                critic_loss: acc_c / acc_k.max(1) as f64,
                generator_loss: acc_g / steps as f64,
                grad_norm: acc_n / acc_k.max(1) as f64,
            };
            log::debug!("wgan {name} {p:?}");
            curve.push(p);
            (acc_c, acc_g, acc_n, acc_k) = (0.0, 0.0, 0.0, 0);
        }
    }
    Ok(WganReport { curve, degenerate })
}

/// Mean critic input-gradient norm over `n` fresh interpolates.
pub fn grad_norm_audit(gan: &CondGan, cond: &Tensor, data: &Tensor, n: usize, seed: u64) -> Result<f64, NnError> {
    let mut rng = stream(seed, &[0x6175]);
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..cond.nrows())).collect();
    let c = rows(cond, &idx);
    let real = rows(data, &idx);
    let fake = gan.generate_with(&c, &gan.noise(&mut rng, n));
    let eps: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let tape = Tape::new();
    let cp = gan.critic.bind(&tape);
    let l = critic_loss(gan, &cp, &c, &real, &fake, &eps, 0.0)?;
    Ok(l.norms.iter().sum::<f64>() / n as f64)
}

/// Gaussian product-kernel density estimate with Scott's-rule bandwidths.
#[derive(Clone, Debug, PartialEq)]
pub struct Kde {
    pub points: Vec<Vec<f64>>,
    pub bandwidth: Vec<f64>,
}

pub const KDE_MIN_BANDWIDTH: f64 = 1e-3;

impl Kde {
    pub fn fit(points: Vec<Vec<f64>>) -> Kde {
        let n = points.len();
        assert!(n > 0);
        let d = points[0].len();
        let scott = (n as f64).powf(-1.0 / (d as f64 + 4.0));
        let bandwidth = (0..d)
            .map(|j| {
                let mean = points.iter().map(|p| p[j]).sum::<f64>() / n as f64;
                let var = if n > 1 {
                    points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
                } else {
                    0.0
                };
                (var.sqrt() * scott).max(KDE_MIN_BANDWIDTH)
            })
            .collect();
        Kde { points, bandwidth }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let norm: f64 = self
            .bandwidth
            .iter()
            .map(|h| -(h * (2.0 * PI).sqrt()).ln())
            .sum();
        let terms: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                norm - p
                    .iter()
                    .zip(x)
                    .zip(&self.bandwidth)
                    .map(|((a, b), h)| ((a - b) / h).powi(2) / 2.0)
                    .sum::<f64>()
            })
            .collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln() - (self.points.len() as f64).ln()
    }
}

pub const KDE_N_GEN: usize = 100;

/// Mean KDE log-likelihood of held-out targets: per (condition, target)
/// pair, `n_gen` generator draws are fit with a KDE and scored at the target.
pub fn evaluate_kde(
    generate: &mut dyn FnMut(&[f64], &mut Rng) -> Vec<f64>,
    held_out: &[(Vec<f64>, Vec<f64>)],
    n_gen: usize,
    seed: u64,
) -> f64 {
    assert!(!held_out.is_empty(), "held-out set is empty");
    let total: f64 = held_out
        .iter()
        .enumerate()
        .map(|(i, (c, k))| {
            let mut rng = stream(seed, &[i as u64]);
            let pts = (0..n_gen).map(|_| generate(c, &mut rng)).collect();
            Kde::fit(pts).log_density(k)
        })
        .sum();
    total / held_out.len() as f64
}

/// Conditions and targets of a bucket as tensors.
pub fn bucket_tensors(env: &Environment, records: &[&SamplerRecord]) -> (Tensor, Tensor) {
    let conds: Vec<Vec<f64>> = records.iter().map(|r| condition(env, &r.phi, &r.object_pose)).collect();
    let targets: Vec<Vec<f64>> = records.iter().map(|r| target(env, r.phase, r.delta, &r.params)).collect();
    let to_t = |v: &Vec<Vec<f64>>| {
        let w = v.first().map_or(0, |r| r.len());
        Array2::from_shape_vec((v.len(), w), v.concat()).expect("rectangular")
    };
    (to_t(&conds), to_t(&targets))
}

/// Trained per-(phase, region) generators plus the key configurations
/// they were trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct GanSampler {
    pub keys: KeyConfigSet,
    pub models: BTreeMap<(Phase, RegionId), CondGan>,
    goal: Option<GoalSpec>,
    cache: Option<(Vec<Pose2>, Pose2, Vec<u8>)>,
}

#[derive(Serialize, Deserialize)]
struct SamplerManifest {
    format: String,
    keys: KeyConfigSet,
    models: Vec<ModelEntry>,
}

#[derive(Serialize, Deserialize)]
struct ModelEntry {
    phase: Phase,
    region: RegionId,
    shape: GanShape,
    generator: String,
    critic: String,
}

const SAMPLER_FORMAT: &str = "gtamp-sampler/1";

impl GanSampler {
    pub fn new(keys: KeyConfigSet) -> GanSampler {
        GanSampler {
            keys,
            models: BTreeMap::new(),
            goal: None,
            cache: None,
        }
    }

    /// Shape of the generator for `phase` over this key set.
    pub fn shape_for(&self, phase: Phase, cfg: &WganConfig) -> GanShape {
        GanShape {
            cond_dim: 2 * self.keys.len() + 4,
            out_dim: match phase {
                Phase::Pick => 2,
                Phase::Place => 4,
            },
            d_z: cfg.d_z,
            hidden: cfg.hidden,
            head: match phase {
                Phase::Pick => Head::Angle,
                Phase::Place => Head::PlaneAngle,
            },
        }
    }

    /// Trains one model per nonempty bucket of `data`.
    pub fn train(
        keys: KeyConfigSet,
        env: &Environment,
        data: &CleanedDataset,
        cfg: &WganConfig,
    ) -> Result<(GanSampler, BTreeMap<(Phase, RegionId), WganReport>), SamplerError> {
        let mut s = GanSampler::new(keys);
        let mut reports = BTreeMap::new();
        for (&(phase, region), _) in data.bucket_counts().iter() {
            let recs = data.bucket(phase, region);
            let (c, t) = bucket_tensors(env, &recs);
            let seed = derive_seed(cfg.seed, &[phase as u64, region.0 as u64]);
            let mut gan = CondGan::new(s.shape_for(phase, cfg), seed);
            let name = format!("{}-{}", phase.name(), region.0);
            let rep = train_wgan_gp(&mut gan, &name, &c, &t, &WganConfig { seed, ..*cfg })?;
            s.models.insert((phase, region), gan);
            reports.insert((phase, region), rep);
        }
        Ok((s, reports))
    }

    /// A copy bound to one problem's goal, ready for search.
    pub fn for_goal(&self, goal: &GoalSpec) -> GanSampler {
        GanSampler {
            goal: Some(goal.clone()),
            cache: None,
            ..self.clone()
        }
    }

    fn phi(&mut self, env: &Environment, state: &WorldState, abs: &AbstractState) -> Vec<u8> {
        if let Some((poses, robot, phi)) = &self.cache {
            if *poses == state.object_poses && *robot == state.robot {
                return phi.clone();
            }
        }
        let goal = self.goal.as_ref().expect("sampler is bound to a goal");
        let phi = encode_state(env, state, &self.keys, &goal_sweeps(env, abs, goal)).flat();
        self.cache = Some((state.object_poses.clone(), state.robot, phi.clone()));
        phi
    }

    /// Pick bearing and (placement position, place bearing) from the
    /// models of `delta.region`; `None` for a missing model.
    #[allow(clippy::type_complexity)]
    pub fn sample(
        &mut self,
        env: &Environment,
        state: &WorldState,
        abs: &AbstractState,
        delta: DiscreteParams,
        rng: &mut Rng,
    ) -> (Option<f64>, Option<([f64; 2], f64)>) {
        let phi = self.phi(env, state, abs);
        let cond = condition(env, &phi, &state.object_poses[delta.object.0]);
        let angle = |c: f64, s: f64| normalize_angle(s.atan2(c));
        let pick = self
            .models
            .get(&(Phase::Pick, delta.region))
            .map(|g| {
                let k = g.generate(&cond, rng);
                angle(k[0], k[1])
            });
        let place = self.models.get(&(Phase::Place, delta.region)).map(|g| {
            let k = g.generate(&cond, rng);
            let (c, h) = region_frame(env, delta.object, delta.region);
            let xy = [c[0] + k[0].clamp(-1.0, 1.0) * h[0], c[1] + k[1].clamp(-1.0, 1.0) * h[1]];
            (xy, angle(k[2], k[3]))
        });
        (pick, place)
    }

    pub fn save(&self, dir: &Path) -> Result<(), SamplerError> {
        std::fs::create_dir_all(dir)?;
        let mut models = Vec::new();
        for (&(phase, region), gan) in &self.models {
            let stem = format!("{}-{}", phase.name(), region.0);
            let (g, c) = (format!("{stem}-generator.json"), format!("{stem}-critic.json"));
            save_params(&dir.join(&g), &gan.generator.tensors())?;
            save_params(&dir.join(&c), &gan.critic.tensors())?;
            models.push(ModelEntry {
                phase,
                region,
                shape: gan.shape,
                generator: g,
                critic: c,
            });
        }
        let m = SamplerManifest {
            format: SAMPLER_FORMAT.into(),
            keys: self.keys.clone(),
            models,
        };
        std::fs::write(dir.join("sampler.json"), serde_json::to_vec_pretty(&m).expect("serializes"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<GanSampler, SamplerError> {
        let m: SamplerManifest = serde_json::from_slice(&std::fs::read(dir.join("sampler.json"))?)
            .map_err(|e| SamplerError::Manifest(e.to_string()))?;
        if m.format != SAMPLER_FORMAT {
            return Err(SamplerError::Manifest(format!("unknown format {}", m.format)));
        }
        let mut s = GanSampler::new(m.keys);
        for e in m.models {
            let mut gan = CondGan::new(e.shape, 0);
            load_into(&dir.join(&e.generator), &mut gan.generator)?;
            load_into(&dir.join(&e.critic), &mut gan.critic)?;
            s.models.insert((e.phase, e.region), gan);
        }
        Ok(s)
    }
}

impl LearnedSampler for GanSampler {
    fn propose(
        &mut self,
        env: &Environment,
        state: &WorldState,
        abs: &AbstractState,
        delta: DiscreteParams,
        rng: &mut Rng,
    ) -> Option<Proposal> {
        let (pick, place) = self.sample(env, state, abs, delta, rng);
        if pick.is_none() && place.is_none() {
            return None;
        }
        let pick_bearing = pick.unwrap_or_else(|| rng.random_range(-PI..PI));
        let (place_xy, place_bearing) = place.unwrap_or_else(|| {
            let bb = env.region(delta.region).footprint.aabb();
            (
                [rng.random_range(bb.min[0]..bb.max[0]), rng.random_range(bb.min[1]..bb.max[1])],
                rng.random_range(-PI..PI),
            )
        });
        Some(Proposal {
            pick_bearing,
            place_xy,
            place_bearing,
        })
    }
}
