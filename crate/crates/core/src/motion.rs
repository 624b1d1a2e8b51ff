//! Probabilistic roadmap over the fixed obstacles, per-object collision
//! caches, strict and movable-relaxed path queries, and key configurations.

use crate::geometry::{collides, interp_intervals, sweep, Attachment, Footprint, Pose2, Shape};
use crate::rng::stream;
use crate::world::{Environment, ObjectId, WorldState};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;
use std::sync::Arc;

/// Vertices examined when nothing lies within the connection radius.
const FALLBACK_NEIGHBORS: usize = 8;
const MAX_TREE_CACHE: usize = 4096;
const NONE: u32 = u32::MAX;
const FROM_START: u32 = u32::MAX - 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadmapConfig {
    pub n_vertices: usize,
    pub connect_radius: f64,
    pub seed: u64,
}

impl Default for RoadmapConfig {
    fn default() -> Self {
        RoadmapConfig {
            n_vertices: 600,
            connect_radius: 0.9,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

#[derive(Clone, Debug, Default)]
struct Derived {
    adjacency: Vec<Vec<(usize, usize)>>,
    samples: Vec<Vec<[f64; 2]>>,
    grid: Grid,
}

#[derive(Clone, Debug, Default)]
struct Grid {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    vertices: Vec<Vec<u32>>,
    edges: Vec<Vec<u32>>,
}

impl Grid {
    fn range(&self, lo: f64, hi: f64, origin: f64, n: usize) -> (usize, usize) {
        let a = ((lo - origin) / self.cell).floor().max(0.0) as usize;
        let b = (((hi - origin) / self.cell).floor().max(0.0) as usize).min(n - 1);
        (a.min(n - 1), b)
    }

    fn cells(&self, min: [f64; 2], max: [f64; 2]) -> impl Iterator<Item = usize> + '_ {
        let (x0, x1) = self.range(min[0], max[0], self.origin[0], self.nx);
        let (y0, y1) = self.range(min[1], max[1], self.origin[1], self.ny);
        (y0..=y1).flat_map(move |j| (x0..=x1).map(move |i| j * self.nx + i))
    }
}

/// Roadmap whose vertices and edges are collision-free for the bare robot
/// with respect to the fixed obstacles.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Roadmap {
    pub env_hash: String,
    pub config: RoadmapConfig,
    pub robot_radius: f64,
    pub interp_step: f64,
    pub vertices: Vec<Pose2>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    derived: Derived,
}

impl PartialEq for Roadmap {
    fn eq(&self, o: &Self) -> bool {
        self.env_hash == o.env_hash
            && self.config == o.config
            && self.robot_radius == o.robot_radius
            && self.interp_step == o.interp_step
            && self.vertices == o.vertices
            && self.edges == o.edges
    }
}

fn segment_points(a: [f64; 2], b: [f64; 2], step: f64) -> Vec<[f64; 2]> {
    // Same parameterization as `geometry::sweep` for a robot-only segment.
    let n = interp_intervals((b[0] - a[0]).hypot(b[1] - a[1]), step);
    let mut v = Vec::with_capacity(n + 1);
    v.push(a);
    for i in 1..=n {
        let t = i as f64 / n as f64;
        v.push([a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]);
    }
    v
}

impl Roadmap {
    pub fn build(env: &Environment, config: RoadmapConfig) -> Roadmap {
        let mut rng = stream(config.seed, &[0x726d]);
        let r = env.robot_radius();
        let ws = env.workspace;
        let disc = |p: [f64; 2]| Footprint::new(env.robot_shape, Pose2::new(p[0], p[1], 0.0));
        let mut vertices = Vec::with_capacity(config.n_vertices);
        let max_draws = 1000 * config.n_vertices.max(1);
        let mut draws = 0;
        while vertices.len() < config.n_vertices && draws < max_draws {
            draws += 1;
            let p = [
                rng.random_range(ws.min[0] + r..ws.max[0] - r),
                rng.random_range(ws.min[1] + r..ws.max[1] - r),
            ];
            if env.fixed_free(&disc(p)) {
                vertices.push(Pose2::new(p[0], p[1], 0.0));
            }
        }
        let mut rm = Roadmap {
            env_hash: env.digest(),
            config,
            robot_radius: r,
            interp_step: env.interp_step,
            vertices,
            edges: vec![],
            derived: Derived::default(),
        };
        rm.index_vertices();
        let mut edges = Vec::new();
        for a in 0..rm.vertices.len() {
            for b in rm.vertices_near(rm.vertices[a].xy(), config.connect_radius) {
                if b <= a {
                    continue;
                }
                let pa = rm.vertices[a].xy();
                let pb = rm.vertices[b].xy();
                if segment_points(pa, pb, env.interp_step)
                    .iter()
                    .all(|&p| env.fixed_free(&disc(p)))
                {
                    edges.push(Edge {
                        a,
                        b,
                        length: rm.vertices[a].distance(&rm.vertices[b]),
                    });
                }
            }
        }
        rm.edges = edges;
        rm.rebuild_derived();
        rm
    }

    fn index_vertices(&mut self) {
        let cell = self.config.connect_radius.max(0.25);
        // Cover the union of vertex positions; the workspace hash is not needed here.
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in &self.vertices {
            lo = [lo[0].min(v.x), lo[1].min(v.y)];
            hi = [hi[0].max(v.x), hi[1].max(v.y)];
        }
        if self.vertices.is_empty() {
            lo = [0.0, 0.0];
            hi = [1.0, 1.0];
        }
        let margin = self.robot_radius + cell;
        let origin = [lo[0] - margin, lo[1] - margin];
        let nx = (((hi[0] + margin - origin[0]) / cell).ceil() as usize).max(1);
        let ny = (((hi[1] + margin - origin[1]) / cell).ceil() as usize).max(1);
        let mut grid = Grid {
            origin,
            cell,
            nx,
            ny,
            vertices: vec![Vec::new(); nx * ny],
            edges: vec![Vec::new(); nx * ny],
        };
        for (i, v) in self.vertices.iter().enumerate() {
            let c: Vec<usize> = grid.cells(v.xy(), v.xy()).collect();
            grid.vertices[c[0]].push(i as u32);
        }
        self.derived.grid = grid;
    }

    fn rebuild_derived(&mut self) {
        self.index_vertices();
        let n = self.vertices.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut samples = Vec::with_capacity(self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            adjacency[e.a].push((e.b, k));
            adjacency[e.b].push((e.a, k));
            let pa = self.vertices[e.a].xy();
            let pb = self.vertices[e.b].xy();
            samples.push(segment_points(pa, pb, self.interp_step));
            let min = [pa[0].min(pb[0]), pa[1].min(pb[1])];
            let max = [pa[0].max(pb[0]), pa[1].max(pb[1])];
            let cells: Vec<usize> = self.derived.grid.cells(min, max).collect();
            for c in cells {
                self.derived.grid.edges[c].push(k as u32);
            }
        }
        self.derived.adjacency = adjacency;
        self.derived.samples = samples;
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.derived.adjacency[v]
    }

    /// Interpolation samples of edge `k`, from `edges[k].a` to `edges[k].b`.
    pub fn edge_samples(&self, k: usize) -> &[[f64; 2]] {
        &self.derived.samples[k]
    }

    /// Vertices within `radius` of `p`, sorted by index.
    pub fn vertices_near(&self, p: [f64; 2], radius: f64) -> Vec<usize> {
        let g = &self.derived.grid;
        let mut out: Vec<usize> = g
            .cells([p[0] - radius, p[1] - radius], [p[0] + radius, p[1] + radius])
            .flat_map(|c| g.vertices[c].iter().map(|&v| v as usize))
            .filter(|&v| {
                let q = self.vertices[v];
                (q.x - p[0]).hypot(q.y - p[1]) <= radius
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Connection candidates for an off-roadmap pose: everything within the
    /// connection radius, or the nearest few vertices when that set is empty.
    pub fn connection_candidates(&self, p: [f64; 2]) -> Vec<usize> {
        let near = self.vertices_near(p, self.config.connect_radius);
        if !near.is_empty() {
            return near;
        }
        let mut all: Vec<(f64, usize)> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, q)| ((q.x - p[0]).hypot(q.y - p[1]), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut v: Vec<usize> = all.into_iter().take(FALLBACK_NEIGHBORS).map(|x| x.1).collect();
        v.sort_unstable();
        v
    }

    /// Vertices and edges whose robot samples the footprint touches.
    fn blocked_by(&self, robot: Shape, fp: &Footprint) -> (Vec<u32>, Vec<u32>) {
        let bb = fp.aabb().inflate(self.robot_radius);
        let g = &self.derived.grid;
        let hit = |p: [f64; 2]| {
            bb.contains_point(p) && collides(&Footprint::new(robot, Pose2::new(p[0], p[1], 0.0)), fp)
        };
        let mut verts: Vec<u32> = g
            .cells(bb.min, bb.max)
            .flat_map(|c| g.vertices[c].iter().copied())
            .filter(|&v| hit(self.vertices[v as usize].xy()))
            .collect();
        verts.sort_unstable();
        verts.dedup();
        let mut edges: Vec<u32> = g.cells(bb.min, bb.max).flat_map(|c| g.edges[c].iter().copied()).collect();
        edges.sort_unstable();
        edges.dedup();
        edges.retain(|&k| self.derived.samples[k as usize].iter().any(|&p| hit(p)));
        (verts, edges)
    }

    /// Component label per vertex (union-find over edges).
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        (0..self.vertices.len()).map(|v| find(&mut parent, v)).collect()
    }

    pub fn file_name(env_hash: &str, seed: u64, n_vertices: usize) -> String {
        format!("roadmap-{}-{seed}-{n_vertices}.json", &env_hash[..16.min(env_hash.len())])
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string(self).expect("roadmap serializes"))
    }

    pub fn load(path: &Path) -> std::io::Result<Roadmap> {
        let text = std::fs::read_to_string(path)?;
        let mut rm: Roadmap = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        rm.rebuild_derived();
        Ok(rm)
    }
}

/// Labels robot-center grid cells clear of fixed obstacles (and `extra`) by
/// 4-connected component. Cells are `cell` meters wide; blocked cells get `None`.
pub fn grid_components(
    env: &Environment,
    extra: &[Footprint],
    cell: f64,
) -> (usize, usize, Vec<Option<usize>>) {
    let ws = env.workspace;
    let nx = (ws.width() / cell).floor() as usize;
    let ny = (ws.height() / cell).floor() as usize;
    let free: Vec<bool> = (0..nx * ny)
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            let p = Pose2::new(
                ws.min[0] + (i as f64 + 0.5) * cell,
                ws.min[1] + (j as f64 + 0.5) * cell,
                0.0,
            );
            let fp = Footprint::new(env.robot_shape, p);
            env.fixed_free(&fp) && !extra.iter().any(|o| collides(o, &fp))
        })
        .collect();
    let mut label = vec![None; nx * ny];
    let mut next = 0;
    for s in 0..nx * ny {
        if !free[s] || label[s].is_some() {
            continue;
        }
        label[s] = Some(next);
        let mut stack = vec![s];
        while let Some(k) = stack.pop() {
            let (i, j) = (k % nx, k / nx);
            let mut nb = Vec::with_capacity(4);
            if i > 0 {
                nb.push(k - 1);
            }
            if i + 1 < nx {
                nb.push(k + 1);
            }
            if j > 0 {
                nb.push(k - nx);
            }
            if j + 1 < ny {
                nb.push(k + nx);
            }
            for m in nb {
                if free[m] && label[m].is_none() {
                    label[m] = Some(next);
                    stack.push(m);
                }
            }
        }
        next += 1;
    }
    (nx, ny, label)
}

/// Grid-search oracle: can the bare robot travel from `a` to `b`?
pub fn grid_reachable(env: &Environment, extra: &[Footprint], a: [f64; 2], b: [f64; 2], cell: f64) -> bool {
    let (nx, ny, label) = grid_components(env, extra, cell);
    let idx = |p: [f64; 2]| {
        let i = ((p[0] - env.workspace.min[0]) / cell).floor() as usize;
        let j = ((p[1] - env.workspace.min[1]) / cell).floor() as usize;
        (i < nx && j < ny).then(|| j * nx + i)
    };
    match (idx(a).and_then(|k| label[k]), idx(b).and_then(|k| label[k])) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

/// Number of roadmap vertex pairs that lie in one free-space component of the
/// grid oracle but in different roadmap components. Zero means the roadmap
/// covers the free space's connectivity at this density.
pub fn connectivity_defects(env: &Environment, rm: &Roadmap, cell: f64) -> usize {
    let (nx, ny, label) = grid_components(env, &[], cell);
    let comps = rm.components();
    let mut first: HashMap<usize, usize> = HashMap::new();
    let mut defects = 0;
    for (v, p) in rm.vertices.iter().enumerate() {
        let i = ((p.x - env.workspace.min[0]) / cell).floor() as usize;
        let j = ((p.y - env.workspace.min[1]) / cell).floor() as usize;
        if i >= nx || j >= ny {
            continue;
        }
        if let Some(l) = label[j * nx + i] {
            match first.get(&l) {
                Some(&c) if c != comps[v] => defects += 1,
                Some(_) => {}
                None => {
                    first.insert(l, comps[v]);
                }
            }
        }
    }
    defects
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct CacheEntry {
    stamp: Option<[u64; 3]>,
    vertices: Vec<u32>,
    edges: Vec<u32>,
}

/// For every movable: the roadmap vertices and edges its current footprint
/// blocks, stamped with the pose they were computed for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollisionCache {
    entries: Vec<CacheEntry>,
    vertex_hits: Vec<u16>,
    edge_hits: Vec<u16>,
    recomputations: usize,
}

impl CollisionCache {
    pub fn new(env: &Environment, rm: &Roadmap) -> CollisionCache {
        CollisionCache {
            entries: vec![
                CacheEntry {
                    stamp: None,
                    vertices: vec![],
                    edges: vec![],
                };
                env.n_objects()
            ],
            vertex_hits: vec![0; rm.vertices.len()],
            edge_hits: vec![0; rm.edges.len()],
            recomputations: 0,
        }
    }

    /// Full recomputation for `state`; the oracle for incremental updates.
    pub fn from_scratch(env: &Environment, rm: &Roadmap, state: &WorldState) -> CollisionCache {
        let mut c = CollisionCache::new(env, rm);
        c.sync(env, rm, state);
        c
    }

    /// Recomputes the entry of `object` if `pose` differs from its stamp.
    pub fn update(&mut self, env: &Environment, rm: &Roadmap, object: ObjectId, pose: Pose2) {
        let e = &mut self.entries[object.0];
        if e.stamp == Some(pose.bits()) {
            return;
        }
        for &v in &e.vertices {
            self.vertex_hits[v as usize] -= 1;
        }
        for &k in &e.edges {
            self.edge_hits[k as usize] -= 1;
        }
        let (vertices, edges) = rm.blocked_by(env.robot_shape, &Footprint::new(env.object_shape(object), pose));
        for &v in &vertices {
            self.vertex_hits[v as usize] += 1;
        }
        for &k in &edges {
            self.edge_hits[k as usize] += 1;
        }
        *e = CacheEntry {
            stamp: Some(pose.bits()),
            vertices,
            edges,
        };
        self.recomputations += 1;
    }

    pub fn sync(&mut self, env: &Environment, rm: &Roadmap, state: &WorldState) {
        for (i, p) in state.object_poses.iter().enumerate() {
            self.update(env, rm, ObjectId(i), *p);
        }
    }

    pub fn blocked_vertices(&self, o: ObjectId) -> &[u32] {
        &self.entries[o.0].vertices
    }

    pub fn blocked_edges(&self, o: ObjectId) -> &[u32] {
        &self.entries[o.0].edges
    }

    /// Total number of entry recomputations so far.
    pub fn recomputations(&self) -> usize {
        self.recomputations
    }

    /// Same blocked sets, ignoring bookkeeping counters.
    pub fn same_contents(&self, other: &CollisionCache) -> bool {
        self.entries == other.entries && self.vertex_hits == other.vertex_hits && self.edge_hits == other.edge_hits
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Strict,
    McrRelaxed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub path: Vec<Pose2>,
    /// Movables the path's swept volume touches, sorted by id.
    pub colliding: Vec<ObjectId>,
    pub mode: Mode,
    /// Euclidean length of the path's positional trace.
    pub length: f64,
    /// True when the movable-aware search produced the path.
    pub strict_search: bool,
}

/// A path query: from `start` to each of `goals`, optionally carrying an
/// object. `carried` is excluded from movable collision checks.
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    pub start: Pose2,
    pub goals: &'a [Pose2],
    pub attached: Option<Attachment>,
    pub carried: Option<ObjectId>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct HeapItem {
    dist: f64,
    v: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, o: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        o.dist.total_cmp(&self.dist).then(o.v.cmp(&self.v))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

#[derive(Clone, Debug)]
struct Tree {
    dist: Vec<f64>,
    pred: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct TreeKey {
    start: [u64; 2],
    heading: u64,
    attached: Option<[u64; 6]>,
}

fn attachment_bits(a: &Attachment) -> [u64; 6] {
    let (k, p, q) = match a.shape {
        Shape::Disc { radius } => (0, radius, 0.0),
        Shape::Rectangle {
            half_width,
            half_height,
        } => (1, half_width, half_height),
    };
    [
        k,
        p.to_bits(),
        q.to_bits(),
        a.grasp.x.to_bits(),
        a.grasp.y.to_bits(),
        a.grasp.theta.to_bits(),
    ]
}

/// Counters for profiling and cache audits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MotionStats {
    pub queries: usize,
    pub tree_builds: usize,
    pub tree_hits: usize,
}

/// Path queries for one planning episode: the shared roadmap, a collision
/// cache synchronized to whichever state is queried, and a cache of
/// movable-independent search trees.
#[derive(Clone, Debug)]
pub struct MotionPlanner {
    pub env: Arc<Environment>,
    pub roadmap: Arc<Roadmap>,
    pub cache: CollisionCache,
    trees: HashMap<TreeKey, Arc<Tree>>,
    pub stats: MotionStats,
}

struct Ctx<'s> {
    state: &'s WorldState,
    carried: Option<ObjectId>,
    strict: bool,
}

impl MotionPlanner {
    pub fn new(env: Arc<Environment>, roadmap: Arc<Roadmap>) -> MotionPlanner {
        let cache = CollisionCache::new(&env, &roadmap);
        MotionPlanner {
            env,
            roadmap,
            cache,
            trees: HashMap::new(),
            stats: MotionStats::default(),
        }
    }

    /// Checks every footprint of the segment sweep against fixed obstacles,
    /// and against movables (except the carried one) when `strict`.
    fn segment_ok(&self, a: Pose2, b: Pose2, attached: Option<Attachment>, ctx: &Ctx) -> bool {
        let env = &*self.env;
        let sv = sweep(&[a, b], env.robot_shape, attached, env.interp_step);
        let ok = sv.footprints().all(|fp| {
            env.fixed_free(&fp) && (!ctx.strict || ctx.state.movables_hitting(env, &fp, ctx.carried).is_empty())
        });
        ok
    }

    fn pose_ok(&self, p: Pose2, attached: Option<Attachment>, ctx: &Ctx) -> bool {
        self.segment_ok(p, p, attached, ctx)
    }

    /// Lazy check of a roadmap edge traversed `from -> to` at `heading`.
    fn edge_ok(&self, k: usize, from: usize, to: usize, heading: f64, attached: Option<Attachment>, ctx: &Ctx) -> bool {
        if ctx.strict {
            let own = ctx
                .carried
                .map_or(0, |o| self.cache.blocked_edges(o).binary_search(&(k as u32)).is_ok() as u16);
            if self.cache.edge_hits[k] > own {
                return false;
            }
        }
        if attached.is_none() {
            return true;
        }
        let rm = &*self.roadmap;
        let a = Pose2 {
            theta: heading,
            ..rm.vertices[from]
        };
        let b = Pose2 {
            theta: heading,
            ..rm.vertices[to]
        };
        let env = &*self.env;
        let sv = sweep(&[a, b], env.robot_shape, attached, env.interp_step);
        let att = attached.unwrap();
        sv.poses.iter().all(|p| {
            let fp = att.footprint_at(p);
            env.fixed_free(&fp) && (!ctx.strict || ctx.state.movables_hitting(env, &fp, ctx.carried).is_empty())
        })
    }

    fn vertex_ok(&self, v: usize, ctx: &Ctx) -> bool {
        if !ctx.strict {
            return true;
        }
        let own = ctx.carried.map_or(0, |o| {
            self.cache.blocked_vertices(o).binary_search(&(v as u32)).is_ok() as u16
        });
        self.cache.vertex_hits[v] <= own
    }

    /// Dijkstra from `p0` over the roadmap. Stops once every vertex in
    /// `targets` is settled (or runs to exhaustion when `targets` is None).
    fn dijkstra(&self, p0: Pose2, heading: f64, attached: Option<Attachment>, ctx: &Ctx, targets: Option<&[usize]>) -> Tree {
        let rm = &*self.roadmap;
        let n = rm.vertices.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![NONE; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        let mut want: Vec<bool> = vec![false; n];
        let mut remaining = 0usize;
        if let Some(t) = targets {
            for &v in t {
                if !want[v] {
                    want[v] = true;
                    remaining += 1;
                }
            }
            if remaining == 0 {
                return Tree { dist, pred };
            }
        }
        let start = Pose2 { theta: heading, ..p0 };
        for v in rm.connection_candidates(p0.xy()) {
            if !self.vertex_ok(v, ctx) {
                continue;
            }
            let goal = Pose2 {
                theta: heading,
                ..rm.vertices[v]
            };
            let d = p0.distance(&goal);
            if d < dist[v] && self.segment_ok(start, goal, attached, ctx) {
                dist[v] = d;
                pred[v] = FROM_START;
                heap.push(HeapItem { dist: d, v: v as u32 });
            }
        }
        let mut edge_memo: HashMap<usize, bool> = HashMap::new();
        while let Some(HeapItem { dist: d, v }) = heap.pop() {
            let v = v as usize;
            if done[v] || d > dist[v] {
                continue;
            }
            done[v] = true;
            if want[v] {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            for &(w, k) in rm.neighbors(v) {
                if done[w] {
                    continue;
                }
                let nd = d + rm.edges[k].length;
                if nd >= dist[w] || !self.vertex_ok(w, ctx) {
                    continue;
                }
                let ok = *edge_memo
                    .entry(k * 2 + (w < v) as usize)
                    .or_insert_with(|| self.edge_ok(k, v, w, heading, attached, ctx));
                if ok {
                    dist[w] = nd;
                    pred[w] = v as u32;
                    heap.push(HeapItem { dist: nd, v: w as u32 });
                }
            }
        }
        for v in 0..n {
            if !done[v] {
                dist[v] = f64::INFINITY;
                pred[v] = NONE;
            }
        }
        Tree { dist, pred }
    }

    fn relaxed_tree(&mut self, p0: Pose2, heading: f64, attached: Option<Attachment>, state: &WorldState) -> Arc<Tree> {
        let key = TreeKey {
            start: [p0.x.to_bits(), p0.y.to_bits()],
            heading: if attached.is_some() { heading.to_bits() } else { 0 },
            attached: attached.as_ref().map(attachment_bits),
        };
        // Without an attachment the heading of the start pose is irrelevant.
        let p0 = if attached.is_some() { p0 } else { Pose2 { theta: heading, ..p0 } };
        if let Some(t) = self.trees.get(&key) {
            self.stats.tree_hits += 1;
            return t.clone();
        }
        let ctx = Ctx {
            state,
            carried: None,
            strict: false,
        };
        let t = Arc::new(self.dijkstra(p0, heading, attached, &ctx, None));
        self.stats.tree_builds += 1;
        if self.trees.len() >= MAX_TREE_CACHE {
            self.trees.clear();
        }
        self.trees.insert(key, t.clone());
        t
    }

    fn length_of(path: &[Pose2]) -> f64 {
        path.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Movables (except `carried`) touched by the sweep of `path`.
    pub fn sweep_colliders(&self, state: &WorldState, path: &[Pose2], attached: Option<Attachment>, carried: Option<ObjectId>) -> Vec<ObjectId> {
        let env = &*self.env;
        let sv = sweep(path, env.robot_shape, attached, env.interp_step);
        (0..env.n_objects())
            .map(ObjectId)
            .filter(|&o| Some(o) != carried)
            .filter(|&o| sv.collides_with(&state.object_footprint(env, o)))
            .collect()
    }

    /// Runs a query in one mode for every goal. Goals must share one heading
    /// when an object is attached: the carried object keeps that heading
    /// while translating.
    pub fn query(&mut self, state: &WorldState, q: Query, mode: Mode) -> Vec<Option<PathResult>> {
        self.stats.queries += 1;
        if q.goals.is_empty() {
            return vec![];
        }
        let strict = mode == Mode::Strict;
        if strict {
            let (env, rm) = (self.env.clone(), self.roadmap.clone());
            self.cache.sync(&env, &rm, state);
        }
        let ctx = Ctx {
            state,
            carried: q.carried,
            strict,
        };
        if q.attached.is_some() {
            let h = q.goals[0].theta;
            assert!(
                q.goals.iter().all(|g| g.theta == h),
                "goals of a carrying query must share one heading"
            );
        }
        if !self.pose_ok(q.start, q.attached, &ctx) {
            return vec![None; q.goals.len()];
        }
        // With an object attached the robot first turns in place to the
        // travel heading; without one, heading changes are free.
        let heading = q.goals[0].theta;
        let p0 = Pose2 { theta: heading, ..q.start };
        let turn = q.attached.is_some() && q.start.theta != heading;
        if turn && !self.segment_ok(q.start, p0, q.attached, &ctx) {
            return vec![None; q.goals.len()];
        }
        let rm = self.roadmap.clone();
        let goal_cands: Vec<Vec<usize>> = q
            .goals
            .iter()
            .map(|g| rm.connection_candidates(g.xy()))
            .collect();
        let tree = if strict {
            let mut targets: Vec<usize> = goal_cands.iter().flatten().copied().collect();
            targets.sort_unstable();
            targets.dedup();
            Arc::new(self.dijkstra(p0, heading, q.attached, &ctx, Some(&targets)))
        } else {
            self.relaxed_tree(p0, heading, q.attached, state)
        };
        q.goals
            .iter()
            .zip(&goal_cands)
            .map(|(g, cands)| self.finish(state, &q, &ctx, &tree, p0, turn, *g, cands, mode))
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        state: &WorldState,
        q: &Query,
        ctx: &Ctx,
        tree: &Tree,
        p0: Pose2,
        turn: bool,
        goal: Pose2,
        cands: &[usize],
        mode: Mode,
    ) -> Option<PathResult> {
        let rm = &*self.roadmap;
        let mut head = vec![q.start];
        if turn {
            head.push(p0);
        }
        let make = |mut path: Vec<Pose2>| {
            let colliding = if mode == Mode::Strict {
                vec![]
            } else {
                self.sweep_colliders(state, &path, q.attached, q.carried)
            };
            path.dedup_by(|b, a| a.bits() == b.bits());
            PathResult {
                length: Self::length_of(&path),
                path,
                colliding,
                mode,
                strict_search: mode == Mode::Strict,
            }
        };
        if goal.bits() == q.start.bits() {
            return Some(make(vec![q.start]));
        }
        if !self.pose_ok(goal, q.attached, ctx) {
            return None;
        }
        let mut options: Vec<(f64, usize)> = cands
            .iter()
            .filter(|&&v| tree.dist[v].is_finite())
            .map(|&v| {
                let p = rm.vertices[v];
                (tree.dist[v] + (p.x - goal.x).hypot(p.y - goal.y), v)
            })
            .collect();
        let direct = p0.distance(&goal);
        if direct <= rm.config.connect_radius {
            options.push((direct, usize::MAX));
        }
        options.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, v) in options {
            if v == usize::MAX {
                if self.segment_ok(p0, goal, q.attached, ctx) {
                    let mut path = head.clone();
                    path.push(goal);
                    return Some(make(path));
                }
                continue;
            }
            let vp = Pose2 {
                theta: goal.theta,
                ..rm.vertices[v]
            };
            if !self.segment_ok(vp, goal, q.attached, ctx) {
                continue;
            }
            let mut chain = vec![v];
            let mut cur = v;
            while tree.pred[cur] != FROM_START {
                cur = tree.pred[cur] as usize;
                chain.push(cur);
            }
            let mut path = head.clone();
            path.extend(chain.iter().rev().map(|&u| Pose2 {
                theta: goal.theta,
                ..rm.vertices[u]
            }));
            path.push(goal);
            return Some(make(path));
        }
        None
    }

    /// Convenience single-goal query.
    pub fn query_one(
        &mut self,
        state: &WorldState,
        start: Pose2,
        goal: Pose2,
        attached: Option<Attachment>,
        carried: Option<ObjectId>,
        mode: Mode,
    ) -> Option<PathResult> {
        let goals = [goal];
        self.query(
            state,
            Query {
                start,
                goals: &goals,
                attached,
                carried,
            },
            mode,
        )
        .pop()
        .flatten()
    }

    /// Two-tier query: a strict path if one exists, otherwise the relaxed
    /// path with the movables it passes through. A relaxed path that touches
    /// nothing is reported as strict.
    pub fn query_mcr(&mut self, state: &WorldState, q: Query) -> Vec<Option<PathResult>> {
        let mut relaxed = self.query(state, q, Mode::McrRelaxed);
        let need: Vec<usize> = relaxed
            .iter()
            .enumerate()
            .filter(|(_, r)| r.as_ref().is_some_and(|r| !r.colliding.is_empty()))
            .map(|(i, _)| i)
            .collect();
        for r in relaxed.iter_mut().flatten() {
            if r.colliding.is_empty() {
                r.mode = Mode::Strict;
            }
        }
        if !need.is_empty() {
            let goals: Vec<Pose2> = need.iter().map(|&i| q.goals[i]).collect();
            let strict = self.query(state, Query { goals: &goals, ..q }, Mode::Strict);
            for (i, s) in need.into_iter().zip(strict) {
                if s.is_some() {
                    relaxed[i] = s;
                }
            }
        }
        relaxed
    }

    pub fn clear_tree_cache(&mut self) {
        self.trees.clear();
    }
}

/// Sparse configurations harvested from solution paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyConfigSet {
    pub configs: Vec<Pose2>,
    pub min_separation: f64,
}

impl KeyConfigSet {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

/// Greedy farthest-first subsampling of all path waypoints, seeded with the
/// first waypoint; stops when no remaining point is `min_separation` away
/// from the retained set.
pub fn extract_key_configs<'a>(paths: impl IntoIterator<Item = &'a [Pose2]>, min_separation: f64) -> KeyConfigSet {
    let points: Vec<Pose2> = paths.into_iter().flatten().copied().collect();
    let mut configs = Vec::new();
    if let Some(&first) = points.first() {
        configs.push(first);
        let mut gap: Vec<f64> = points.iter().map(|p| p.distance(&first)).collect();
        loop {
            let (best, d) = gap
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
            if !(d >= min_separation) {
                break;
            }
            let p = points[best];
            configs.push(p);
            for (g, q) in gap.iter_mut().zip(&points) {
                *g = g.min(q.distance(&p));
            }
        }
    }
    KeyConfigSet {
        configs,
        min_separation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;
    use crate::scenarios::{self, two_room_environment};
    use crate::world::WorldState;

    fn open_env(shapes: &[Shape]) -> Environment {
        let mut env = two_room_environment(shapes);
        env.fixed.clear();
        env
    }

    fn state_with(poses: &[[f64; 2]], robot: [f64; 2]) -> WorldState {
        WorldState {
            object_poses: poses.iter().map(|p| Pose2::new(p[0], p[1], 0.0)).collect(),
            robot: Pose2::new(robot[0], robot[1], 0.0),
            held: None,
            plan_trace: vec![],
        }
    }

    #[test]
    fn empty_fixed_set_accepts_every_sample() {
        let env = open_env(&[]);
        let rm = Roadmap::build(
            &env,
            RoadmapConfig {
                n_vertices: 200,
                connect_radius: 0.0,
                seed: 1,
            },
        );
        assert_eq!(rm.vertices.len(), 200);
        assert!(rm.edges.is_empty());
    }

    #[test]
    fn build_is_deterministic_and_reload_is_exact() {
        let env = two_room_environment(&[]);
        let cfg = RoadmapConfig {
            n_vertices: 300,
            connect_radius: 0.9,
            seed: 4,
        };
        let a = Roadmap::build(&env, cfg);
        let b = Roadmap::build(&env, cfg);
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(Roadmap::file_name(&a.env_hash, 4, 300));
        a.save(&path).unwrap();
        let c = Roadmap::load(&path).unwrap();
        assert_eq!(a, c);
        for k in 0..a.edges.len() {
            assert_eq!(a.edge_samples(k), c.edge_samples(k));
        }
    }

    #[test]
    fn edges_clear_fixed_obstacles() {
        let env = two_room_environment(&[]);
        let rm = Roadmap::build(&env, RoadmapConfig::default());
        for k in 0..rm.edges.len() {
            for &p in rm.edge_samples(k) {
                assert!(env.fixed_free(&Footprint::new(env.robot_shape, Pose2::new(p[0], p[1], 0.0))));
            }
        }
        assert_eq!(connectivity_defects(&env, &rm, 0.05), 0);
    }

    fn corridor_env(shapes: &[Shape]) -> Environment {
        // 10x10 box with a horizontal corridor of width 1.0 through a thick wall.
        let mut env = open_env(shapes);
        env.workspace = Aabb::new([0.0, 0.0], [10.0, 10.0]);
        env.regions.clear();
        let rect = |x0: f64, y0: f64, x1: f64, y1: f64| {
            Footprint::new(
                Shape::Rectangle {
                    half_width: 0.5 * (x1 - x0),
                    half_height: 0.5 * (y1 - y0),
                },
                Pose2::new(0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.0),
            )
        };
        env.fixed = vec![rect(4.0, 0.0, 6.0, 4.5), rect(4.0, 5.5, 6.0, 10.0)];
        env
    }

    #[test]
    fn corridor_query_matches_grid_oracle() {
        let env = corridor_env(&[]);
        let rm = Arc::new(Roadmap::build(
            &env,
            RoadmapConfig {
                n_vertices: 2000,
                connect_radius: 0.6,
                seed: 9,
            },
        ));
        assert!(grid_reachable(&env, &[], [1.0, 5.0], [9.0, 5.0], 0.02));
        let env = Arc::new(env);
        let mut mp = MotionPlanner::new(env.clone(), rm);
        let s = state_with(&[], [1.0, 5.0]);
        let r = mp
            .query_one(&s, s.robot, Pose2::new(9.0, 5.0, 0.0), None, None, Mode::McrRelaxed)
            .expect("oracle says reachable");
        assert!(r.colliding.is_empty());
        let r = mp
            .query_one(&s, s.robot, Pose2::new(9.0, 5.0, 0.0), None, None, Mode::Strict)
            .unwrap();
        assert_eq!(r.path.first(), Some(&s.robot));
    }

    #[test]
    fn blocked_corridor_strict_fails_relaxed_reports_blocker() {
        let shape = Shape::Disc { radius: 0.45 };
        let env = corridor_env(&[shape]);
        let rm = Arc::new(Roadmap::build(
            &env,
            RoadmapConfig {
                n_vertices: 2000,
                connect_radius: 0.6,
                seed: 9,
            },
        ));
        let env = Arc::new(env);
        let mut mp = MotionPlanner::new(env.clone(), rm);
        let s = state_with(&[[5.0, 5.0]], [1.0, 5.0]);
        let goal = Pose2::new(9.0, 5.0, 0.0);
        assert!(mp.query_one(&s, s.robot, goal, None, None, Mode::Strict).is_none());
        let r = mp.query_one(&s, s.robot, goal, None, None, Mode::McrRelaxed).unwrap();
        assert_eq!(r.colliding, vec![ObjectId(0)]);
        assert_eq!(r.mode, Mode::McrRelaxed);
    }

    #[test]
    fn goal_equal_to_start_is_a_single_pose() {
        let env = Arc::new(two_room_environment(&[]));
        let rm = Arc::new(Roadmap::build(&env, RoadmapConfig::default()));
        let mut mp = MotionPlanner::new(env, rm);
        let s = state_with(&[], [1.0, 1.0]);
        for mode in [Mode::Strict, Mode::McrRelaxed] {
            let r = mp.query_one(&s, s.robot, s.robot, None, None, mode).unwrap();
            assert_eq!(r.path, vec![s.robot]);
            assert!(r.colliding.is_empty());
        }
    }

    #[test]
    fn strict_paths_are_collision_free_under_brute_force() {
        let inst = scenarios::generate_instance(3, Default::default()).unwrap();
        let env = Arc::new(inst.environment.clone());
        let rm = Arc::new(Roadmap::build(&env, RoadmapConfig::default()));
        let mut mp = MotionPlanner::new(env.clone(), rm);
        let s = &inst.initial_state;
        let mut rng = stream(5, &[]);
        let mut found = 0;
        for _ in 0..40 {
            let g = Pose2::new(rng.random_range(0.4..4.6), rng.random_range(0.4..5.6), rng.random_range(-3.0..3.0));
            if let Some(r) = mp.query_one(s, s.robot, g, None, None, Mode::Strict) {
                found += 1;
                let sv = sweep(&r.path, env.robot_shape, None, env.interp_step);
                for fp in sv.footprints() {
                    assert!(env.fixed_free(&fp));
                    assert!(s.movables_hitting(&env, &fp, None).is_empty());
                }
                assert_eq!(r.path.first(), Some(&s.robot));
                assert_eq!(r.path.last(), Some(&g));
            }
        }
        assert!(found > 10);
    }

    #[test]
    fn relaxed_colliders_match_brute_force() {
        let inst = scenarios::generate_instance(8, Default::default()).unwrap();
        let env = Arc::new(inst.environment.clone());
        let rm = Arc::new(Roadmap::build(&env, RoadmapConfig::default()));
        let mut mp = MotionPlanner::new(env.clone(), rm);
        let s = &inst.initial_state;
        let g = Pose2::new(8.0, 3.0, 0.0);
        let r = mp.query_one(s, s.robot, g, None, None, Mode::McrRelaxed).unwrap();
        assert!(!r.colliding.is_empty(), "the doorway is jammed");
        let sv = sweep(&r.path, env.robot_shape, None, env.interp_step);
        let oracle: Vec<ObjectId> = (0..env.n_objects())
            .map(ObjectId)
            .filter(|&o| sv.footprints().any(|fp| collides(&fp, &s.object_footprint(&env, o))))
            .collect();
        assert_eq!(r.colliding, oracle);
        assert!(mp.query_one(s, s.robot, g, None, None, Mode::Strict).is_none());
    }

    #[test]
    fn attached_object_is_checked_against_walls() {
        // Carrying a long bar sideways cannot pass the door.
        let bar = Shape::Rectangle {
            half_width: 0.15,
            half_height: 1.0,
        };
        let env = Arc::new(two_room_environment(&[bar]));
        let rm = Arc::new(Roadmap::build(&env, RoadmapConfig::default()));
        let mut mp = MotionPlanner::new(env.clone(), rm);
        let s = state_with(&[[2.0, 3.0]], [1.0, 3.0]);
        let att = Attachment {
            shape: bar,
            grasp: Pose2::new(env.standoff(ObjectId(0)), 0.0, 0.0),
        };
        let start = Pose2::new(1.0, 3.0, 0.0);
        let goal = Pose2::new(8.0, 3.0, 0.0);
        assert!(mp
            .query_one(&s, start, goal, Some(att), Some(ObjectId(0)), Mode::McrRelaxed)
            .is_none());
        // A small disc fits.
        let small = Attachment {
            shape: Shape::Disc { radius: 0.2 },
            grasp: att.grasp,
        };
        let r = mp
            .query_one(&s, start, goal, Some(small), Some(ObjectId(0)), Mode::McrRelaxed)
            .unwrap();
        let sv = sweep(&r.path, env.robot_shape, Some(small), env.interp_step);
        assert!(sv.footprints().all(|fp| env.fixed_free(&fp)));
    }

    #[test]
    fn cache_update_same_pose_is_noop() {
        let inst = scenarios::generate_instance(1, Default::default()).unwrap();
        let env = &inst.environment;
        let rm = Roadmap::build(env, RoadmapConfig::default());
        let mut c = CollisionCache::from_scratch(env, &rm, &inst.initial_state);
        let before = c.clone();
        c.update(env, &rm, ObjectId(0), inst.initial_state.object_poses[0]);
        assert_eq!(c, before);
    }

    #[test]
    fn incremental_cache_equals_rebuild() {
        let inst = scenarios::generate_instance(2, Default::default()).unwrap();
        let env = &inst.environment;
        let rm = Roadmap::build(env, RoadmapConfig::default());
        let mut rng = stream(77, &[]);
        let mut s = inst.initial_state.clone();
        let mut c = CollisionCache::from_scratch(env, &rm, &s);
        for _ in 0..50 {
            let o = rng.random_range(0..env.n_objects());
            s.object_poses[o] = Pose2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..6.0), 0.0);
            c.update(env, &rm, ObjectId(o), s.object_poses[o]);
            assert!(c.same_contents(&CollisionCache::from_scratch(env, &rm, &s)));
        }
        // Off the roadmap entirely: nothing blocked.
        s.object_poses[0] = Pose2::new(100.0, 100.0, 0.0);
        c.update(env, &rm, ObjectId(0), s.object_poses[0]);
        assert!(c.blocked_vertices(ObjectId(0)).is_empty());
    }

    #[test]
    fn key_configs() {
        let one = [Pose2::new(1.0, 1.0, 0.0)];
        assert_eq!(extract_key_configs([&one[..]], 0.5).len(), 1);
        let dup = [Pose2::new(1.0, 1.0, 0.0), Pose2::new(1.0, 1.0, 0.0), Pose2::new(3.0, 1.0, 0.0)];
        let k = extract_key_configs([&dup[..], &one[..]], 0.5);
        assert_eq!(k.len(), 2);
        let mut rng = stream(1, &[]);
        let pts: Vec<Pose2> = (0..500)
            .map(|_| Pose2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..6.0), 0.0))
            .collect();
        let k = extract_key_configs([&pts[..]], 0.7);
        for i in 0..k.len() {
            for j in 0..i {
                assert!(k.configs[i].distance(&k.configs[j]) >= 0.7);
            }
        }
        // Every input point is within the separation of some retained config.
        for p in &pts {
            assert!(k.configs.iter().any(|c| c.distance(p) < 0.7));
        }
    }
}
