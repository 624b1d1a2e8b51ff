//! Message-passing rank network over scene graphs, its large-margin and
//! squared-error losses, and minibatch training.

use crate::graph::{encode, SceneGraph, NODE_DIM};
use crate::nn::{concat_cols, save_params, Activation, Adam, Mlp, NnError, Params, Tape, Tensor, Var};
use crate::predicates::AbstractState;
use crate::rng::stream;
use crate::search::EdgeScorer;
use crate::world::DiscreteParams;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankNetConfig {
    /// Message and embedding width.
    pub d_m: usize,
    pub hidden: usize,
}

impl Default for RankNetConfig {
    fn default() -> Self {
        RankNetConfig { d_m: 32, hidden: 32 }
    }
}

/// Sender, receiver, edge, message and output functions.
#[derive(Clone, Debug, PartialEq)]
pub struct RankNet {
    pub config: RankNetConfig,
    pub sender: Mlp,
    pub receiver: Mlp,
    pub edge: Mlp,
    pub message: Mlp,
    pub output: Mlp,
}

impl Params for RankNet {
    fn tensors(&self) -> Vec<&Tensor> {
        [&self.sender, &self.receiver, &self.edge, &self.message, &self.output]
            .into_iter()
            .flat_map(|m| m.tensors())
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        [
            &mut self.sender,
            &mut self.receiver,
            &mut self.edge,
            &mut self.message,
            &mut self.output,
        ]
        .into_iter()
        .flat_map(|m| m.tensors_mut())
        .collect()
    }
}

/// Row index maps of one graph's edge tensor.
struct Indices {
    sender: Vec<usize>,
    receiver: Vec<usize>,
    receiver_region: Vec<usize>,
}

impl Indices {
    fn new(g: &SceneGraph) -> Indices {
        let (n, nr) = (g.n_obj, g.n_reg);
        let mut ix = Indices {
            sender: Vec::with_capacity(n * n * nr),
            receiver: Vec::with_capacity(n * n * nr),
            receiver_region: Vec::with_capacity(n * n * nr),
        };
        for i in 0..n {
            for j in 0..n {
                for k in 0..nr {
                    ix.sender.push(i);
                    ix.receiver.push(j);
                    ix.receiver_region.push(j * nr + k);
                }
            }
        }
        ix
    }
}

impl RankNet {
    pub fn new(config: RankNetConfig, seed: u64) -> RankNet {
        let mut rng = stream(seed, &[0x72616e6b]);
        let (d, h) = (config.d_m, config.hidden);
        let mut f = |i, o| Mlp::one_hidden(i, h, o, Activation::Tanh, &mut rng);
        RankNet {
            config,
            sender: f(d, d),
            receiver: f(d, d),
            edge: f(crate::graph::EDGE_DIM, d),
            message: f(3 * d, d),
            output: f(d, 1),
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors().into_iter().map(|t| tape.var(t.clone())).collect()
    }

    /// Rank values as an `(n_obj * n_reg) × 1` column, object-major.
    pub fn forward<'t>(&self, params: &[Var<'t>], tape: &'t Tape, g: &SceneGraph) -> Var<'t> {
        let (p1, rest) = params.split_at(4);
        let (p2, rest) = rest.split_at(4);
        let (p3, rest) = rest.split_at(4);
        let (p4, p5) = rest.split_at(4);
        let (n, nr) = (g.n_obj, g.n_reg);
        let ix = Indices::new(g);

        // Node features are zero-padded to the message width so the sender
        // and receiver functions also apply to aggregated messages.
        let x = tape.var(g.node_tensor()).pad_cols(0, self.config.d_m);
        debug_assert_eq!(NODE_DIM, g.node_tensor().ncols());
        let u0 = self.sender.forward(p1, x);
        let v0 = self.receiver.forward(p2, x);
        let c = self.edge.forward(p3, tape.var(g.edge_tensor()));
        let m0 = self.message.forward(
            p4,
            concat_cols(&[u0.gather_rows(&ix.sender), v0.gather_rows(&ix.receiver), c]),
        );
        let agg0 = m0.scatter_rows(&ix.receiver, n).scale(1.0 / (n + nr) as f64);
        let u1 = self.sender.forward(p1, agg0);
        let v1 = self.receiver.forward(p2, agg0);
        let m1 = self.message.forward(
            p4,
            concat_cols(&[u1.gather_rows(&ix.sender), v1.gather_rows(&ix.receiver), c]),
        );
        let agg1 = m1.scatter_rows(&ix.receiver_region, n * nr).scale(1.0 / n as f64);
        self.output.forward(p5, agg1)
    }

    /// Rank value of every `(object, region)` pair, object-major.
    pub fn scores_of(&self, g: &SceneGraph) -> Vec<f64> {
        let tape = Tape::new();
        let p = self.bind(&tape);
        self.forward(&p, &tape, g).value().into_iter().collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        save_params(path, &self.tensors())
    }

    pub fn load(path: &Path, config: RankNetConfig) -> Result<RankNet, NnError> {
        let mut net = RankNet::new(config, 0);
        crate::nn::load_into(path, &mut net)?;
        Ok(net)
    }
}

impl EdgeScorer for RankNet {
    fn scores(&mut self, abs: &AbstractState, deltas: &[DiscreteParams]) -> Vec<f64> {
        let all = self.scores_of(&encode(abs));
        deltas.iter().map(|d| all[d.object.0 * abs.n_reg + d.region.0]).collect()
    }
}

/// One supervised example: a scene, the index of the expert's choice among
/// its object-major candidates, and the remaining plan length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub graph: SceneGraph,
    pub expert: usize,
    pub steps_to_goal: usize,
}

/// Index of the largest value other than `expert` (lowest index on ties).
fn runner_up(values: &[f64], expert: usize) -> usize {
    (0..values.len())
        .filter(|&i| i != expert)
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if values[b] >= values[i] => Some(b),
            _ => Some(i),
        })
        .expect("at least two candidates")
}

/// Hinge on the margin between the expert's value and the best other value,
/// summed over the batch.
pub fn large_margin_loss<'t>(net: &RankNet, params: &[Var<'t>], tape: &'t Tape, batch: &[(&SceneGraph, usize)]) -> Var<'t> {
    let mut total = tape.scalar(0.0);
    for &(g, expert) in batch {
        assert!(g.n_candidates() >= 2, "large-margin loss needs two candidates");
        let f = net.forward(params, tape, g);
        let vals: Vec<f64> = f.value().into_iter().collect();
        let r = runner_up(&vals, expert);
        let margin = f.pick(expert, 0) - f.pick(r, 0);
        total = total + margin.scale(-1.0).add_scalar(1.0).relu();
    }
    total
}

/// Mean squared error between the taken edge's value and minus the
/// remaining number of steps.
pub fn mse_loss<'t>(net: &RankNet, params: &[Var<'t>], tape: &'t Tape, batch: &[(&SceneGraph, usize, f64)]) -> Var<'t> {
    let mut total = tape.scalar(0.0);
    for &(g, taken, steps) in batch {
        let f = net.forward(params, tape, g);
        total = total + f.pick(taken, 0).add_scalar(steps).square();
    }
    total.scale(1.0 / batch.len().max(1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankLoss {
    Hinge,
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss: RankLoss,
    pub seed: u64,
}

impl Default for RankTrainConfig {
    fn default() -> Self {
        RankTrainConfig {
            epochs: 60,
            batch_size: 16,
            lr: 1e-3,
            loss: RankLoss::Hinge,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub loss: f64,
    pub holdout_top1: f64,
}

/// Fraction of records whose highest-valued candidate is the expert's.
pub fn top1_accuracy(net: &RankNet, records: &[RankRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records
        .iter()
        .filter(|r| {
            let s = net.scores_of(&r.graph);
            let best = (0..s.len()).fold(0, |b, i| if s[i] > s[b] { i } else { b });
            best == r.expert
        })
        .count();
    hits as f64 / records.len() as f64
}

/// Shuffled minibatch Adam; returns the mean training loss and held-out
/// top-1 accuracy after every epoch.
pub fn train_rank(
    net: &mut RankNet,
    train: &[RankRecord],
    holdout: &[RankRecord],
    cfg: &RankTrainConfig,
) -> Result<Vec<CurvePoint>, NnError> {
    let usable: Vec<&RankRecord> = train
        .iter()
        .filter(|r| cfg.loss == RankLoss::Mse || r.graph.n_candidates() >= 2)
        .collect();
    if usable.is_empty() {
        return Err(NnError::Shape("no usable training records".into()));
    }
    let mut adam = Adam::new(cfg.lr);
    let mut rng = stream(cfg.seed, &[0x7472]);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let tape = Tape::new();
            let p = net.bind(&tape);
            let loss = match cfg.loss {
                RankLoss::Hinge => {
                    let batch: Vec<_> = chunk.iter().map(|&i| (&usable[i].graph, usable[i].expert)).collect();
                    large_margin_loss(net, &p, &tape, &batch)
                }
                RankLoss::Mse => {
                    let batch: Vec<_> = chunk
                        .iter()
                        .map(|&i| (&usable[i].graph, usable[i].expert, usable[i].steps_to_goal as f64))
                        .collect();
                    mse_loss(net, &p, &tape, &batch)
                }
            };
            let grads: Vec<Tensor> = tape.grad(loss, &p)?.iter().map(|g| g.value()).collect();
            tape.check()?;
            epoch_loss += loss.item();
            adam.update(net.tensors_mut(), &grads);
        }
        let point = CurvePoint {
            epoch,
            loss: epoch_loss / usable.len() as f64,
            holdout_top1: top1_accuracy(net, holdout),
        };
        log::debug!("rank epoch {epoch}: loss {:.4} holdout top1 {:.3}", point.loss, point.holdout_top1);
        curve.push(point);
    }
    Ok(curve)
}

/// A scene shaped like the two-room domain: region 0 is the goal region,
/// objects 0..n_goal are goal objects (placed with probability 0.3), every
/// other object sits in region 1, and each occlusion bit between distinct
/// objects is set with probability `density`. Object labels are shuffled.
pub fn synthetic_scene(rng: &mut crate::rng::Rng, n_obj: usize, n_goal: usize, density: f64) -> AbstractState {
    use crate::world::{GoalSpec, ObjectId, RegionId};
    use rand::Rng as _;
    let goal = GoalSpec {
        pairs: (0..n_goal).map(|o| (ObjectId(o), RegionId(0))).collect(),
    };
    let mut a = AbstractState::empty(n_obj, 2, &goal);
    for o in 0..n_obj {
        let placed = o < n_goal && rng.random_bool(0.3);
        a.set_in_region(ObjectId(o), RegionId(if placed { 0 } else { 1 }), true);
        a.set_pre_free(ObjectId(o), rng.random_bool(0.5));
        for r in 0..2 {
            a.set_manip_free(ObjectId(o), RegionId(r), rng.random_bool(0.5));
        }
        for x in (0..n_obj).filter(|&x| x != o) {
            a.set_occludes_pre(ObjectId(x), ObjectId(o), rng.random_bool(density));
            for r in 0..2 {
                a.set_occludes_manip(ObjectId(x), ObjectId(o), RegionId(r), rng.random_bool(density));
            }
        }
    }
    let perm = crate::graph::random_permutation(rng, n_obj);
    crate::graph::permute_abstract(&a, &perm, &[0, 1])
}

/// Synthetic supervision over [`synthetic_scene`]s with 3 to 6 objects: the
/// expert moves the unplaced goal object with the fewest occluders (objects
/// occluding its pre-grasp volume or its manipulation volume into region 0)
/// to region 0, lowest index on ties.
pub fn synthetic_rule_records(n: usize, seed: u64) -> Vec<RankRecord> {
    use crate::world::{ObjectId, RegionId};
    use rand::Rng as _;
    let mut rng = stream(seed, &[0x7379]);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let n_obj = rng.random_range(3..=6);
        let n_goal = rng.random_range(1..=3);
        let a = synthetic_scene(&mut rng, n_obj, n_goal, 0.3);
        let occluders = |o: usize| {
            (0..n_obj)
                .filter(|&x| {
                    x != o
                        && (a.occludes_pre(ObjectId(x), ObjectId(o))
                            || a.occludes_manip(ObjectId(x), ObjectId(o), RegionId(0)))
                })
                .count()
        };
        let best = (0..n_obj)
            .filter(|&o| a.is_goal_object(ObjectId(o)) && !a.in_region(ObjectId(o), RegionId(0)))
            .min_by_key(|&o| (occluders(o), o));
        if let Some(o) = best {
            out.push(RankRecord {
                graph: encode(&a),
                expert: o * 2,
                steps_to_goal: 1,
            });
        }
    }
    out
}

/// Training settings used for the fewest-occluders rule.
pub fn fewest_occluders_train_config() -> RankTrainConfig {
    RankTrainConfig {
        epochs: 40,
        lr: 3e-3,
        ..Default::default()
    }
}

/// Whether two unplaced goal objects share the minimum occluder count, so
/// the label of [`synthetic_rule_records`] comes from the index tie-break.
/// A permutation-equivariant scorer cannot see indices and must guess there.
pub fn fewest_occluders_tied(g: &SceneGraph) -> bool {
    let n = g.n_obj;
    let count = |o: usize| (0..n).filter(|&x| x != o && (g.edge(x, o, 0)[9] == 1 || g.edge(x, o, 0)[20] == 1)).count();
    let counts: Vec<usize> = (0..n)
        .filter(|&o| g.node(o)[2] == 1 && g.edge(o, o, 0)[14] == 0)
        .map(count)
        .collect();
    counts.iter().min().is_some_and(|m| counts.iter().filter(|&c| c == m).count() > 1)
}
