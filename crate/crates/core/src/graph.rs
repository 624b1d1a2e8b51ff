//! Scene graphs for the rank network: one fully connected component per
//! region over the movable objects, with predicate bits as features.

use crate::nn::Tensor;
use crate::predicates::AbstractState;
use crate::world::{GoalSpec, ObjectId, RegionId};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const NODE_DIM: usize = 4;
pub const EDGE_DIM: usize = 22;

/// Column layout of the node and edge features, stored with every graph.
pub const LAYOUT: &str = "node=[IsObject,IsRegion,IsGoal,PreFree]; \
edge(i,j,k)=[node(i)x4,node(j)x4,bin(i,j)x3,bin(j,i)x3,bin(i,r_k)x3,bin(j,r_k)x3,OccludesManip(i,j,k),OccludesManip(j,i,k)]; \
bin=[InRegion,OccludesPre,ManipFree]; edge row=(i*n_obj+j)*n_reg+k";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub layout: String,
    pub n_obj: usize,
    pub n_reg: usize,
    /// `n_obj × 4`, row-major.
    pub node_feats: Vec<u8>,
    /// `n_obj × n_obj × n_reg × 22`, row-major.
    pub edge_feats: Vec<u8>,
    /// Original object and region id of each graph index.
    pub objects: Vec<usize>,
    pub regions: Vec<usize>,
}

impl SceneGraph {
    pub fn edge_row(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_obj + j) * self.n_reg + k
    }

    pub fn node(&self, i: usize) -> &[u8] {
        &self.node_feats[i * NODE_DIM..(i + 1) * NODE_DIM]
    }

    pub fn edge(&self, i: usize, j: usize, k: usize) -> &[u8] {
        let r = self.edge_row(i, j, k);
        &self.edge_feats[r * EDGE_DIM..(r + 1) * EDGE_DIM]
    }

    pub fn node_tensor(&self) -> Tensor {
        Array2::from_shape_fn((self.n_obj, NODE_DIM), |(i, c)| self.node_feats[i * NODE_DIM + c] as f64)
    }

    pub fn edge_tensor(&self) -> Tensor {
        let rows = self.n_obj * self.n_obj * self.n_reg;
        Array2::from_shape_fn((rows, EDGE_DIM), |(r, c)| self.edge_feats[r * EDGE_DIM + c] as f64)
    }

    pub fn n_candidates(&self) -> usize {
        self.n_obj * self.n_reg
    }
}

fn bits<const N: usize>(b: [bool; N]) -> [u8; N] {
    b.map(u8::from)
}

/// Encodes the predicate bits of `abs`.
pub fn encode(abs: &AbstractState) -> SceneGraph {
    let n = abs.n_obj;
    let nr = abs.n_reg;
    let ne = abs.n_entities();
    let mut node_feats = Vec::with_capacity(n * NODE_DIM);
    for i in 0..n {
        node_feats.extend(bits(abs.unary[i]));
    }
    let bin = |a: usize, b: usize| bits(abs.binary[a * ne + b]);
    let tern = |i: usize, j: usize, k: usize| u8::from(abs.occludes_manip(ObjectId(i), ObjectId(j), RegionId(k)));
    let mut edge_feats = Vec::with_capacity(n * n * nr * EDGE_DIM);
    for i in 0..n {
        for j in 0..n {
            for k in 0..nr {
                let rk = abs.region_entity(RegionId(k));
                edge_feats.extend(bits(abs.unary[i]));
                edge_feats.extend(bits(abs.unary[j]));
                edge_feats.extend(bin(i, j));
                edge_feats.extend(bin(j, i));
                edge_feats.extend(bin(i, rk));
                edge_feats.extend(bin(j, rk));
                edge_feats.push(tern(i, j, k));
                edge_feats.push(tern(j, i, k));
            }
        }
    }
    SceneGraph {
        layout: LAYOUT.into(),
        n_obj: n,
        n_reg: nr,
        node_feats,
        edge_feats,
        objects: (0..n).collect(),
        regions: (0..nr).collect(),
    }
}

/// Relabels a graph: old object `i` becomes `obj_perm[i]`, old region `k`
/// becomes `reg_perm[k]`.
pub fn permute(g: &SceneGraph, obj_perm: &[usize], reg_perm: &[usize]) -> SceneGraph {
    let (n, nr) = (g.n_obj, g.n_reg);
    let mut out = g.clone();
    for i in 0..n {
        let d = obj_perm[i];
        out.node_feats[d * NODE_DIM..(d + 1) * NODE_DIM].copy_from_slice(g.node(i));
        out.objects[d] = g.objects[i];
    }
    for k in 0..nr {
        out.regions[reg_perm[k]] = g.regions[k];
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..nr {
                let r = out.edge_row(obj_perm[i], obj_perm[j], reg_perm[k]);
                out.edge_feats[r * EDGE_DIM..(r + 1) * EDGE_DIM].copy_from_slice(g.edge(i, j, k));
            }
        }
    }
    out
}

/// Relabels an abstract state the same way [`permute`] relabels graphs.
/// Swept volumes are dropped.
pub fn permute_abstract(abs: &AbstractState, obj_perm: &[usize], reg_perm: &[usize]) -> AbstractState {
    let (n, nr) = (abs.n_obj, abs.n_reg);
    let ent = |e: usize| if e < n { obj_perm[e] } else { n + reg_perm[e - n] };
    let ne = abs.n_entities();
    let mut out = AbstractState::empty(n, nr, &GoalSpec { pairs: vec![] });
    for e in 0..ne {
        out.unary[ent(e)] = abs.unary[e];
        for f in 0..ne {
            out.binary[ent(e) * ne + ent(f)] = abs.binary[e * ne + f];
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..nr {
                let v = abs.occludes_manip(ObjectId(i), ObjectId(j), RegionId(k));
                out.set_occludes_manip(ObjectId(obj_perm[i]), ObjectId(obj_perm[j]), RegionId(reg_perm[k]), v);
            }
        }
    }
    out
}

/// A random abstract state obeying the type rule: each object lies in at
/// most one region, occlusion bits relate distinct objects, and `density`
/// is the probability of each free bit.
pub fn random_abstract(rng: &mut impl Rng, n_obj: usize, n_reg: usize, density: f64) -> AbstractState {
    let mut objs: Vec<usize> = (0..n_obj).collect();
    objs.shuffle(rng);
    let n_goal = rng.random_range(1..=n_obj.min(3));
    let goal = GoalSpec {
        pairs: objs[..n_goal]
            .iter()
            .map(|&o| (ObjectId(o), RegionId(rng.random_range(0..n_reg))))
            .collect(),
    };
    random_abstract_with_goal(rng, n_obj, n_reg, &goal, density)
}

/// Like [`random_abstract`] with a given goal.
pub fn random_abstract_with_goal(
    rng: &mut impl Rng,
    n_obj: usize,
    n_reg: usize,
    goal: &GoalSpec,
    density: f64,
) -> AbstractState {
    let mut a = AbstractState::empty(n_obj, n_reg, goal);
    for o in 0..n_obj {
        a.set_pre_free(ObjectId(o), rng.random_bool(0.5));
        if rng.random_bool(0.8) {
            a.set_in_region(ObjectId(o), RegionId(rng.random_range(0..n_reg)), true);
        }
        for r in 0..n_reg {
            a.set_manip_free(ObjectId(o), RegionId(r), rng.random_bool(0.5));
        }
        for x in 0..n_obj {
            if x == o {
                continue;
            }
            a.set_occludes_pre(ObjectId(x), ObjectId(o), rng.random_bool(density));
            for r in 0..n_reg {
                a.set_occludes_manip(ObjectId(x), ObjectId(o), RegionId(r), rng.random_bool(density));
            }
        }
    }
    a
}

/// A uniformly random permutation of `0..n`.
pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
