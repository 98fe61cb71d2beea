//! Finite multigraphs with landmark labels, and the tree, tile and tile-tree
//! constructions built on them.
//!
//! Vertex ids are dense and assigned in breadth-first order from the
//! construction's root, visiting neighbours in edge-id order. Edge ids are
//! dense in construction order. Parallel edges are kept as distinct edges.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = u32;
pub type EdgeId = u32;

/// Default hard cap on the number of vertices a builder may allocate.
pub const DEFAULT_VERTEX_CAP: usize = 50_000_000;

/// Environment variable overriding [`DEFAULT_VERTEX_CAP`].
pub const VERTEX_CAP_ENV: &str = "FPPHE_VERTEX_CAP";

pub const GRAPH_MAGIC: &str = "FPPHE-GRAPH-v1";

/// Vertex cap in effect: `FPPHE_VERTEX_CAP` if set and parseable, else the default.
pub fn vertex_cap() -> usize {
    std::env::var(VERTEX_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_VERTEX_CAP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Origin,
    UpperPart,
    LowerPart,
    Tail,
    Cap,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    pub fn role(self) -> Role {
        match self {
            Side::Upper => Role::UpperPart,
            Side::Lower => Role::LowerPart,
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" | "up" => Ok(Side::Upper),
            "lower" | "low" => Ok(Side::Lower),
            other => Err(Error::invalid(format!("unknown side `{other}`"))),
        }
    }
}

/// Parameters of a tile: upper tree degree `D` and height `L`, lower binary
/// tree height `H`, and tail path length `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileParams {
    #[serde(rename = "D")]
    pub d: u32,
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(rename = "H")]
    pub h: u32,
    #[serde(rename = "R")]
    pub r: u32,
}

impl TileParams {
    pub fn new(d: u32, l: u32, h: u32, r: u32) -> Result<Self> {
        let p = TileParams { d, l, h, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::invalid(format!("tile needs D >= 2, got {}", self.d)));
        }
        if self.l == 0 || self.h == 0 || self.r == 0 {
            return Err(Error::invalid("tile needs L, H, R >= 1"));
        }
        Ok(())
    }

    /// Vertex count of [`build_tile`] for these parameters, if it fits in `u128`.
    pub fn vertex_count(&self) -> Option<u128> {
        let up = capped_tree_size(self.d, self.l)?;
        let low = capped_tree_size(2, self.h)?;
        Some(1 + up + low + u128::from(self.r - 1) + 1)
    }
}

impl std::str::FromStr for TileParams {
    type Err = Error;

    /// Parses `D=3,L=1,H=1,R=2`.
    fn from_str(s: &str) -> Result<Self> {
        let mut vals = [None::<u32>; 4];
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, val) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected KEY=VALUE, got `{part}`")))?;
            let val: u32 = val
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad integer in `{part}`")))?;
            let slot = match key.trim() {
                "D" | "d" => 0,
                "L" | "l" => 1,
                "H" | "h" => 2,
                "R" | "r" => 3,
                other => return Err(Error::invalid(format!("unknown tile key `{other}`"))),
            };
            vals[slot] = Some(val);
        }
        match vals {
            [Some(d), Some(l), Some(h), Some(r)] => TileParams::new(d, l, h, r),
            _ => Err(Error::invalid("tile spec needs all of D, L, H, R")),
        }
    }
}

/// `|T_d^h| = 1 + d + ... + d^h`.
pub fn complete_tree_size(d: u32, h: u32) -> Option<u128> {
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for g in 0..=h {
        total = total.checked_add(level)?;
        if g < h {
            level = level.checked_mul(u128::from(d))?;
        }
    }
    Some(total)
}

pub fn capped_tree_size(d: u32, h: u32) -> Option<u128> {
    complete_tree_size(d, h).map(|n| n + 1)
}

fn check_cap(what: &'static str, requested: Option<u128>, cap: usize) -> Result<usize> {
    match requested {
        Some(n) if n <= cap as u128 => Ok(n as usize),
        Some(n) => Err(Error::ResourceLimit {
            what,
            requested: n,
            cap: cap as u128,
        }),
        None => Err(Error::ResourceLimit {
            what,
            requested: u128::MAX,
            cap: cap as u128,
        }),
    }
}

/// Immutable undirected multigraph with role tags and named landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    edges: Vec<[VertexId; 2]>,
    landmarks: BTreeMap<String, VertexId>,
    roles: Vec<Role>,
    generation: Vec<u32>,
    offsets: Vec<usize>,
    incidence: Vec<(VertexId, EdgeId)>,
}

impl Graph {
    pub fn vertex_count(&self) -> usize {
        self.roles.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[[VertexId; 2]] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> [VertexId; 2] {
        self.edges[e as usize]
    }

    pub fn landmarks(&self) -> &BTreeMap<String, VertexId> {
        &self.landmarks
    }

    pub fn landmark(&self, name: &str) -> Option<VertexId> {
        self.landmarks.get(name).copied()
    }

    pub fn require_landmark(&self, name: &str) -> Result<VertexId> {
        self.landmark(name)
            .ok_or_else(|| Error::invalid(format!("graph has no landmark `{name}`")))
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn role(&self, v: VertexId) -> Role {
        self.roles[v as usize]
    }

    /// Breadth-first distance from the construction root, as assigned by the
    /// builder. Subgraphs keep the values of the graph they came from.
    pub fn generation(&self, v: VertexId) -> u32 {
        self.generation[v as usize]
    }

    pub fn generations(&self) -> &[u32] {
        &self.generation
    }

    /// Incident `(neighbour, edge)` pairs of `v`, in edge-id order.
    #[inline]
    pub fn incident(&self, v: VertexId) -> &[(VertexId, EdgeId)] {
        let v = v as usize;
        &self.incidence[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.incident(v).len()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        (v as usize) < self.vertex_count()
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    /// Tiles carry landmarks `O` and `B`, exactly one origin-tagged and one
    /// tail-tagged vertex, and only origin, tail and side tags.
    pub fn is_tile(&self) -> bool {
        let (o, b) = match (self.landmark("O"), self.landmark("B")) {
            (Some(o), Some(b)) => (o, b),
            _ => return false,
        };
        self.count_role(Role::Origin) == 1
            && self.count_role(Role::Tail) == 1
            && self.role(o) == Role::Origin
            && self.role(b) == Role::Tail
            && self
                .roles
                .iter()
                .all(|r| !matches!(r, Role::Cap | Role::Generic))
    }

    /// Vertices whose removal disconnects their connected component.
    pub fn articulation_points(&self) -> Vec<VertexId> {
        let n = self.vertex_count();
        let mut disc = vec![u32::MAX; n];
        let mut low = vec![0u32; n];
        let mut is_cut = vec![false; n];
        let mut timer = 0u32;
        // (vertex, edge used to enter, next incidence index)
        let mut stack: Vec<(usize, Option<EdgeId>, usize)> = Vec::new();
        for start in 0..n {
            if disc[start] != u32::MAX {
                continue;
            }
            disc[start] = timer;
            low[start] = timer;
            timer += 1;
            let mut root_children = 0;
            stack.push((start, None, 0));
            while let Some(&mut (v, via, ref mut idx)) = stack.last_mut() {
                let inc = self.incident(v as VertexId);
                if *idx < inc.len() {
                    let (w, e) = inc[*idx];
                    *idx += 1;
                    if Some(e) == via {
                        continue;
                    }
                    let w = w as usize;
                    if disc[w] == u32::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        if v == start {
                            root_children += 1;
                        }
                        stack.push((w, Some(e), 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(parent, _, _)) = stack.last() {
                        low[parent] = low[parent].min(low[v]);
                        if parent != start && low[v] >= disc[parent] {
                            is_cut[parent] = true;
                        }
                    }
                }
            }
            if root_children > 1 {
                is_cut[start] = true;
            }
        }
        (0..n as VertexId).filter(|&v| is_cut[v as usize]).collect()
    }

    /// Whether every vertex is reachable from vertex 0.
    pub fn is_connected(&self) -> bool {
        if self.vertex_count() == 0 {
            return true;
        }
        bfs_order(self.vertex_count(), &self.offsets, &self.incidence, 0)
            .iter()
            .all(|&x| x != u32::MAX)
    }
}

/// Assembles a graph vertex by vertex; `finish` relabels vertices in BFS order.
#[derive(Debug, Default)]
pub(crate) struct GraphBuilder {
    edges: Vec<[VertexId; 2]>,
    landmarks: BTreeMap<String, VertexId>,
    roles: Vec<Role>,
}

impl GraphBuilder {
    pub(crate) fn with_capacity(vertices: usize) -> Self {
        GraphBuilder {
            edges: Vec::with_capacity(vertices),
            landmarks: BTreeMap::new(),
            roles: Vec::with_capacity(vertices),
        }
    }

    pub(crate) fn add_vertex(&mut self, role: Role) -> VertexId {
        self.roles.push(role);
        (self.roles.len() - 1) as VertexId
    }

    pub(crate) fn add_edge(&mut self, a: VertexId, b: VertexId) -> Result<EdgeId> {
        if a == b {
            return Err(Error::invalid(format!("self-loop at vertex {a}")));
        }
        let n = self.roles.len() as VertexId;
        if a >= n || b >= n {
            return Err(Error::invalid(format!("edge ({a}, {b}) has an unknown endpoint")));
        }
        self.edges.push([a, b]);
        Ok((self.edges.len() - 1) as EdgeId)
    }

    pub(crate) fn set_role(&mut self, v: VertexId, role: Role) {
        self.roles[v as usize] = role;
    }

    pub(crate) fn landmark(&mut self, name: &str, v: VertexId) {
        self.landmarks.insert(name.to_owned(), v);
    }

    /// Relabels in BFS order from `root` and computes generations as BFS
    /// distances. Every vertex must be reachable from `root`.
    pub(crate) fn finish(self, root: VertexId) -> Result<Graph> {
        self.finish_mapped(root).map(|(g, _)| g)
    }

    /// As `finish`, also returning the old-to-new vertex id map.
    pub(crate) fn finish_mapped(self, root: VertexId) -> Result<(Graph, Vec<VertexId>)> {
        let n = self.roles.len();
        let (offsets, incidence) = csr(n, &self.edges);
        let dist = bfs_order(n, &offsets, &incidence, root);
        if dist.contains(&u32::MAX) {
            return Err(Error::invalid("graph is not connected from its root"));
        }
        self.relabel(root, |old| dist[old as usize])
    }

    /// Relabels in BFS order from `root` but keeps caller-supplied generations.
    /// Unreachable vertices are placed after reachable ones in original order.
    pub(crate) fn finish_with_generations(self, root: VertexId, generation: Vec<u32>) -> Result<Graph> {
        self.relabel(root, |old| generation[old as usize]).map(|(g, _)| g)
    }

    fn relabel(self, root: VertexId, gen_of: impl Fn(VertexId) -> u32) -> Result<(Graph, Vec<VertexId>)> {
        let n = self.roles.len();
        let (offsets, incidence) = csr(n, &self.edges);
        let order = bfs_sequence(n, &offsets, &incidence, root);
        let mut new_id = vec![u32::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            new_id[old as usize] = new as VertexId;
        }
        let edges: Vec<[VertexId; 2]> = self
            .edges
            .iter()
            .map(|&[a, b]| [new_id[a as usize], new_id[b as usize]])
            .collect();
        let mut roles = vec![Role::Generic; n];
        let mut generation = vec![0u32; n];
        for (old, &new) in new_id.iter().enumerate() {
            roles[new as usize] = self.roles[old];
            generation[new as usize] = gen_of(old as VertexId);
        }
        let landmarks = self
            .landmarks
            .into_iter()
            .map(|(k, v)| (k, new_id[v as usize]))
            .collect();
        let (offsets, incidence) = csr(n, &edges);
        let graph = Graph {
            edges,
            landmarks,
            roles,
            generation,
            offsets,
            incidence,
        };
        Ok((graph, new_id))
    }
}

fn csr(n: usize, edges: &[[VertexId; 2]]) -> (Vec<usize>, Vec<(VertexId, EdgeId)>) {
    let mut deg = vec![0usize; n + 1];
    for &[a, b] in edges {
        deg[a as usize] += 1;
        deg[b as usize] += 1;
    }
    let mut offsets = vec![0usize; n + 1];
    for v in 0..n {
        offsets[v + 1] = offsets[v] + deg[v];
    }
    let mut fill = offsets.clone();
    let mut incidence = vec![(0, 0); offsets[n]];
    for (e, &[a, b]) in edges.iter().enumerate() {
        incidence[fill[a as usize]] = (b, e as EdgeId);
        fill[a as usize] += 1;
        incidence[fill[b as usize]] = (a, e as EdgeId);
        fill[b as usize] += 1;
    }
    (offsets, incidence)
}

fn bfs_order(
    n: usize,
    offsets: &[usize],
    incidence: &[(VertexId, EdgeId)],
    root: VertexId,
) -> Vec<u32> {
    let mut dist = vec![u32::MAX; n];
    if n == 0 {
        return dist;
    }
    let mut queue = VecDeque::new();
    dist[root as usize] = 0;
    queue.push_back(root);
    while let Some(v) = queue.pop_front() {
        for &(w, _) in &incidence[offsets[v as usize]..offsets[v as usize + 1]] {
            if dist[w as usize] == u32::MAX {
                dist[w as usize] = dist[v as usize] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

fn bfs_sequence(
    n: usize,
    offsets: &[usize],
    incidence: &[(VertexId, EdgeId)],
    root: VertexId,
) -> Vec<VertexId> {
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    if n == 0 {
        return order;
    }
    seen[root as usize] = true;
    order.push(root);
    let mut head = 0;
    while head < order.len() {
        let v = order[head] as usize;
        head += 1;
        for &(w, _) in &incidence[offsets[v]..offsets[v + 1]] {
            if !seen[w as usize] {
                seen[w as usize] = true;
                order.push(w);
            }
        }
    }
    order.extend((0..n as VertexId).filter(|&v| !seen[v as usize]));
    order
}

/// Appends a complete `d`-ary tree of height `h` below `root` (already added).
/// Returns the vertices of the last generation.
fn grow_tree(b: &mut GraphBuilder, root: VertexId, d: u32, h: u32, role: Role) -> Result<Vec<VertexId>> {
    let mut frontier = vec![root];
    for _ in 0..h {
        let mut next = Vec::with_capacity(frontier.len() * d as usize);
        for &p in &frontier {
            for _ in 0..d {
                let c = b.add_vertex(role);
                b.add_edge(p, c)?;
                next.push(c);
            }
        }
        frontier = next;
    }
    Ok(frontier)
}

/// Attaches the cap vertex `w` to the last generation: `d` edges per leaf, or
/// a single edge when `merge_parallel` is set.
fn attach_cap(b: &mut GraphBuilder, leaves: &[VertexId], w: VertexId, d: u32, merge_parallel: bool) -> Result<()> {
    let copies = if merge_parallel { 1 } else { d };
    for &leaf in leaves {
        for _ in 0..copies {
            b.add_edge(leaf, w)?;
        }
    }
    Ok(())
}

/// Complete tree `T_d^h`: every vertex above generation `h` has `d` children.
pub fn build_complete_tree(d: u32, h: u32) -> Result<Graph> {
    if d == 0 {
        return Err(Error::invalid("tree degree d must be >= 1"));
    }
    let n = check_cap("complete tree", complete_tree_size(d, h), vertex_cap())?;
    let mut b = GraphBuilder::with_capacity(n);
    let root = b.add_vertex(Role::Generic);
    b.landmark("root", root);
    grow_tree(&mut b, root, d, h, Role::Generic)?;
    b.finish(root)
}

/// Capped tree: `T_d^{h+1}` with generation `h+1` merged into one vertex `W`.
/// All `d^{h+1}` edges into `W` are kept.
pub fn build_capped_tree(d: u32, h: u32) -> Result<Graph> {
    build_capped_tree_opts(d, h, false)
}

/// As [`build_capped_tree`]; `merge_parallel_edges` collapses the `d` parallel
/// edges from each generation-`h` vertex to `W` into one.
pub fn build_capped_tree_opts(d: u32, h: u32, merge_parallel_edges: bool) -> Result<Graph> {
    if d == 0 {
        return Err(Error::invalid("tree degree d must be >= 1"));
    }
    let n = check_cap("capped tree", capped_tree_size(d, h), vertex_cap())?;
    let mut b = GraphBuilder::with_capacity(n);
    let root = b.add_vertex(Role::Generic);
    b.landmark("root", root);
    let leaves = grow_tree(&mut b, root, d, h, Role::Generic)?;
    let w = b.add_vertex(Role::Cap);
    b.landmark("W", w);
    attach_cap(&mut b, &leaves, w, d, merge_parallel_edges)?;
    b.finish(root)
}

/// Adds one tile to `b` with the given origin vertex. When `tail` is given,
/// it is used as `B` instead of a fresh vertex. Returns `B`.
fn add_tile(b: &mut GraphBuilder, p: &TileParams, origin: VertexId, tail: Option<VertexId>, landmarks: bool) -> Result<VertexId> {
    let o_up = b.add_vertex(Role::UpperPart);
    let o_low = b.add_vertex(Role::LowerPart);
    b.add_edge(origin, o_up)?;
    b.add_edge(origin, o_low)?;

    let up_leaves = grow_tree(b, o_up, p.d, p.l, Role::UpperPart)?;
    let w_up = b.add_vertex(Role::UpperPart);
    attach_cap(b, &up_leaves, w_up, p.d, false)?;

    let low_leaves = grow_tree(b, o_low, 2, p.h, Role::LowerPart)?;
    let w_low = b.add_vertex(Role::LowerPart);
    attach_cap(b, &low_leaves, w_low, 2, false)?;

    let tail_vertex = match tail {
        Some(t) => t,
        None => b.add_vertex(Role::Tail),
    };
    b.add_edge(w_up, tail_vertex)?;
    let mut prev = w_low;
    for _ in 1..p.r {
        let v = b.add_vertex(Role::LowerPart);
        b.add_edge(prev, v)?;
        prev = v;
    }
    b.add_edge(prev, tail_vertex)?;

    if landmarks {
        b.landmark("O", origin);
        b.landmark("O_up", o_up);
        b.landmark("O_low", o_low);
        b.landmark("W_up", w_up);
        b.landmark("W_low", w_low);
        b.landmark("B", tail_vertex);
    }
    Ok(tail_vertex)
}

/// The tile: `O` joined to `O_up` (root of the capped `D`-ary tree of height
/// `L`, cap `W_up`) and to `O_low` (root of the capped binary tree of height
/// `H`, cap `W_low`); one edge `W_up`–`B` and a path of `R` edges `W_low`–`B`.
pub fn build_tile(p: &TileParams) -> Result<Graph> {
    p.validate()?;
    let n = check_cap("tile", p.vertex_count(), vertex_cap())?;
    let mut b = GraphBuilder::with_capacity(n);
    let o = b.add_vertex(Role::Origin);
    add_tile(&mut b, p, o, None, true)?;
    b.finish(o)
}

/// Depth-truncated forward tile tree.
#[derive(Debug, Clone)]
pub struct TileTree {
    pub graph: Graph,
    pub phi: u32,
    pub depth: u32,
    /// `junctions[k]` lists the junction vertices at tile depth `k`; index
    /// `i` at depth `k` is the child of junction `i / phi` at depth `k - 1`.
    pub junctions: Vec<Vec<VertexId>>,
}

impl TileTree {
    pub fn origin(&self) -> VertexId {
        self.junctions[0][0]
    }

    pub fn tile_count(&self) -> usize {
        self.junctions.iter().skip(1).map(Vec::len).sum()
    }
}

pub fn build_tile_tree(phi: u32, depth: u32, p: &TileParams) -> Result<TileTree> {
    build_tile_tree_with_cap(phi, depth, p, vertex_cap())
}

/// Rooted `phi`-ary tree of tile slots, `depth` levels deep. Each slot holds
/// a fresh tile whose `O` is the parent junction and whose `B` is the child
/// junction.
pub fn build_tile_tree_with_cap(phi: u32, depth: u32, p: &TileParams, cap: usize) -> Result<TileTree> {
    if phi == 0 || depth == 0 {
        return Err(Error::invalid("tile tree needs phi >= 1 and depth >= 1"));
    }
    p.validate()?;
    let tiles = (1..=depth).try_fold(0u128, |acc, k| {
        let level = u128::from(phi).checked_pow(k)?;
        acc.checked_add(level)
    });
    let per_tile = p.vertex_count().map(|n| n - 1);
    let total = match (tiles, per_tile) {
        (Some(t), Some(v)) => t.checked_mul(v).and_then(|x| x.checked_add(1)),
        _ => None,
    };
    let n = check_cap("tile tree", total, cap)?;

    let mut b = GraphBuilder::with_capacity(n);
    let o = b.add_vertex(Role::Origin);
    b.landmark("o", o);
    let mut junctions = vec![vec![o]];
    for _ in 0..depth {
        let parents = junctions.last().expect("nonempty");
        let mut next = Vec::with_capacity(parents.len() * phi as usize);
        for &parent in parents {
            for _ in 0..phi {
                let tail = b.add_vertex(Role::Tail);
                add_tile(&mut b, p, parent, Some(tail), false)?;
                next.push(tail);
            }
        }
        junctions.push(next);
    }

    let (graph, new_id) = b.finish_mapped(o)?;
    let junctions = junctions
        .into_iter()
        .map(|level| level.into_iter().map(|v| new_id[v as usize]).collect())
        .collect();
    Ok(TileTree {
        graph,
        phi,
        depth,
        junctions,
    })
}

/// Subgraph of a tile on `O`, `B` and the vertices tagged with `side`.
pub fn restrict_to_side(tile: &Graph, side: Side) -> Result<Graph> {
    if !tile.is_tile() {
        return Err(Error::invalid("restrict_to_side needs a tile graph"));
    }
    let keep_role = side.role();
    let mut new_id = vec![u32::MAX; tile.vertex_count()];
    let mut b = GraphBuilder::default();
    let mut generation = Vec::new();
    for v in 0..tile.vertex_count() as VertexId {
        let r = tile.role(v);
        if r == keep_role || r == Role::Origin || r == Role::Tail {
            new_id[v as usize] = b.add_vertex(r);
            generation.push(tile.generation(v));
        }
    }
    for &[a, c] in tile.edges() {
        let (na, nc) = (new_id[a as usize], new_id[c as usize]);
        if na != u32::MAX && nc != u32::MAX {
            b.add_edge(na, nc)?;
        }
    }
    for (name, &v) in tile.landmarks() {
        if new_id[v as usize] != u32::MAX {
            b.landmark(name, new_id[v as usize]);
        }
    }
    let o = new_id[tile.require_landmark("O")? as usize];
    b.finish_with_generations(o, generation)
}

/// DOT rendering; landmark vertices carry a `label`, parallel edges are
/// emitted as separate statements.
pub fn export_dot(g: &Graph) -> String {
    let mut names: Vec<Vec<&str>> = vec![Vec::new(); g.vertex_count()];
    for (name, &v) in g.landmarks() {
        names[v as usize].push(name);
    }
    let mut out = String::with_capacity(32 * (g.vertex_count() + g.edge_count()));
    out.push_str("graph fpphe {\n");
    for (v, vn) in names.iter().enumerate() {
        if vn.is_empty() {
            let _ = writeln!(out, "  {v};");
        } else {
            let _ = writeln!(out, "  {v} [label=\"{}\"];", vn.join("/"));
        }
    }
    for &[a, b] in g.edges() {
        let _ = writeln!(out, "  {a} -- {b};");
    }
    out.push_str("}\n");
    out
}

/// Serialized form of a graph, tagged with [`GRAPH_MAGIC`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDump {
    pub magic: String,
    pub vertex_count: usize,
    /// `(endpoint_a, endpoint_b, edge_id)` triples.
    pub edges: Vec<(VertexId, VertexId, EdgeId)>,
    pub landmarks: BTreeMap<String, VertexId>,
    pub roles: Vec<Role>,
    pub generation: Vec<u32>,
}

impl Graph {
    pub fn to_dump(&self) -> GraphDump {
        GraphDump {
            magic: GRAPH_MAGIC.to_owned(),
            vertex_count: self.vertex_count(),
            edges: self
                .edges
                .iter()
                .enumerate()
                .map(|(e, &[a, b])| (a, b, e as EdgeId))
                .collect(),
            landmarks: self.landmarks.clone(),
            roles: self.roles.clone(),
            generation: self.generation.clone(),
        }
    }

    /// Rebuilds a graph from a dump without relabelling.
    pub fn from_dump(d: GraphDump) -> Result<Graph> {
        if d.magic != GRAPH_MAGIC {
            return Err(Error::Format(format!("expected magic `{GRAPH_MAGIC}`, found `{}`", d.magic)));
        }
        let n = d.vertex_count;
        if d.roles.len() != n || d.generation.len() != n {
            return Err(Error::Format("roles/generation length differs from vertex_count".into()));
        }
        let mut edges = Vec::with_capacity(d.edges.len());
        for (i, &(a, b, id)) in d.edges.iter().enumerate() {
            if id as usize != i {
                return Err(Error::Format(format!("edge ids must be dense and ordered, found {id} at {i}")));
            }
            if a as usize >= n || b as usize >= n {
                return Err(Error::Format(format!("edge {id} has an endpoint out of range")));
            }
            if a == b {
                return Err(Error::Format(format!("edge {id} is a self-loop")));
            }
            edges.push([a, b]);
        }
        if let Some((name, _)) = d.landmarks.iter().find(|(_, &v)| v as usize >= n) {
            return Err(Error::Format(format!("landmark `{name}` out of range")));
        }
        let (offsets, incidence) = csr(n, &edges);
        Ok(Graph {
            edges,
            landmarks: d.landmarks,
            roles: d.roles,
            generation: d.generation,
            offsets,
            incidence,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_dump()).expect("graph dump serializes")
    }

    pub fn from_json(s: &str) -> Result<Graph> {
        Graph::from_dump(serde_json::from_str(s)?)
    }

    /// Small ad-hoc graph; generations are BFS distances from `root`.
    pub fn from_edges(
        vertex_count: usize,
        edges: &[(VertexId, VertexId)],
        landmarks: &[(&str, VertexId)],
        root: VertexId,
    ) -> Result<Graph> {
        if vertex_count == 0 || root as usize >= vertex_count {
            return Err(Error::invalid("root must be a vertex of a nonempty graph"));
        }
        let mut b = GraphBuilder::with_capacity(vertex_count);
        for _ in 0..vertex_count {
            b.add_vertex(Role::Generic);
        }
        b.set_role(root, Role::Origin);
        for &(a, c) in edges {
            b.add_edge(a, c)?;
        }
        for &(name, v) in landmarks {
            if v as usize >= vertex_count {
                return Err(Error::invalid(format!("landmark `{name}` out of range")));
            }
            b.landmark(name, v);
        }
        let n = vertex_count;
        let (offsets, incidence) = csr(n, &b.edges);
        let dist = bfs_order(n, &offsets, &incidence, root);
        b.finish_with_generations(root, dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(d: u32, l: u32, h: u32, r: u32) -> Graph {
        build_tile(&TileParams::new(d, l, h, r).unwrap()).unwrap()
    }

    #[test]
    fn complete_tree_examples() {
        let g = build_complete_tree(2, 0).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (1, 0));
        let g = build_complete_tree(2, 2).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (7, 6));
        let g = build_complete_tree(3, 1).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (4, 3));
        let g = build_complete_tree(1, 4).unwrap();
        assert_eq!(g.vertex_count(), 5);
        assert!(matches!(build_complete_tree(0, 3), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn complete_tree_generations() {
        let g = build_complete_tree(3, 3).unwrap();
        for gen in 0..=3u32 {
            let count = g.generations().iter().filter(|&&x| x == gen).count();
            assert_eq!(count, 3usize.pow(gen));
        }
        assert_eq!(g.landmark("root"), Some(0));
    }

    #[test]
    fn capped_tree_examples() {
        let g = build_capped_tree(2, 1).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (4, 6));
        assert_eq!(g.degree(g.landmark("W").unwrap()), 4);

        let g = build_capped_tree(3, 0).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (2, 3));
        assert!(g.edges().iter().all(|&[a, b]| (a, b) == (0, 1)));

        let g = build_capped_tree(1, 5).unwrap();
        assert_eq!(g.vertex_count(), 7);
        let w = g.landmark("W").unwrap();
        assert_eq!(g.generation(w), 6);
        assert_eq!(g.degree(w), 1);
    }

    #[test]
    fn merge_parallel_edges_flag() {
        let g = build_capped_tree_opts(3, 1, true).unwrap();
        assert_eq!(g.degree(g.landmark("W").unwrap()), 3);
        assert_eq!(g.edge_count(), 3 + 3);
    }

    #[test]
    fn tile_examples() {
        let g = tile(3, 1, 1, 2);
        assert_eq!(g.vertex_count(), 12);
        assert_eq!(g.degree(g.landmark("O").unwrap()), 2);
        assert_eq!(g.degree(g.landmark("B").unwrap()), 2);
        assert_eq!(g.landmark("O"), Some(0));

        let g = tile(2, 1, 1, 1);
        let (w_low, b) = (g.landmark("W_low").unwrap(), g.landmark("B").unwrap());
        assert!(g.incident(w_low).iter().any(|&(x, _)| x == b));

        for p in [(2, 1, 1, 1), (4, 3, 2, 5), (3, 2, 4, 1)] {
            let g = tile(p.0, p.1, p.2, p.3);
            assert_eq!(g.count_role(Role::Origin), 1);
            assert_eq!(g.count_role(Role::Tail), 1);
            assert!(g.is_tile());
            let tp = TileParams::new(p.0, p.1, p.2, p.3).unwrap();
            assert_eq!(g.vertex_count() as u128, tp.vertex_count().unwrap());
        }
    }

    #[test]
    fn tile_landmark_roles() {
        let g = tile(3, 2, 2, 3);
        for name in ["O_up", "W_up"] {
            assert_eq!(g.role(g.landmark(name).unwrap()), Role::UpperPart);
        }
        for name in ["O_low", "W_low"] {
            assert_eq!(g.role(g.landmark(name).unwrap()), Role::LowerPart);
        }
        assert_eq!(g.degree(g.landmark("W_up").unwrap()), 27 + 1);
        assert_eq!(g.degree(g.landmark("W_low").unwrap()), 8 + 1);
    }

    #[test]
    fn tile_param_parsing() {
        let p: TileParams = "D=3,L=1,H=1,R=2".parse().unwrap();
        assert_eq!(p, TileParams { d: 3, l: 1, h: 1, r: 2 });
        assert!("D=1,L=1,H=1,R=1".parse::<TileParams>().is_err());
        assert!("D=3,L=1,H=1".parse::<TileParams>().is_err());
        assert!("D=3,L=0,H=1,R=1".parse::<TileParams>().is_err());
    }

    #[test]
    fn tile_tree_examples() {
        let p = TileParams::new(2, 1, 1, 1).unwrap();
        let tt = build_tile_tree(1, 1, &p).unwrap();
        let single = build_tile(&p).unwrap();
        assert_eq!(tt.graph.vertex_count(), single.vertex_count());
        assert_eq!(tt.origin(), 0);
        assert_eq!(tt.tile_count(), 1);

        let tt = build_tile_tree(2, 2, &p).unwrap();
        assert_eq!(tt.tile_count(), 6);
        let junctions: Vec<usize> = tt.junctions.iter().map(Vec::len).collect();
        assert_eq!(junctions, vec![1, 2, 4]);

        let tp = TileParams::new(3, 2, 2, 2).unwrap();
        let tt = build_tile_tree(3, 1, &tp).unwrap();
        let o_deg = build_tile(&tp).unwrap().degree(0);
        assert_eq!(tt.graph.degree(tt.origin()), 3 * o_deg);
    }

    #[test]
    fn tile_tree_cap() {
        let p = TileParams::new(4, 4, 4, 4).unwrap();
        let err = build_tile_tree_with_cap(3, 4, &p, 10_000).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit { .. }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn restrict_examples() {
        let g = tile(3, 2, 2, 3);
        let low = restrict_to_side(&g, Side::Lower).unwrap();
        for name in ["O", "O_low", "W_low", "B"] {
            assert!(low.landmark(name).is_some(), "{name} missing");
        }
        assert!(low.landmark("O_up").is_none());
        assert!(low.is_connected());

        let up = restrict_to_side(&g, Side::Upper).unwrap();
        assert_eq!(up.vertex_count() as u128, 1 + capped_tree_size(3, 2).unwrap() + 1);

        assert_eq!(restrict_to_side(&up, Side::Upper).unwrap(), up);
        assert_eq!(restrict_to_side(&low, Side::Lower).unwrap(), low);

        let tree = build_complete_tree(2, 2).unwrap();
        assert!(restrict_to_side(&tree, Side::Upper).is_err());
    }

    #[test]
    fn restrict_keeps_generations() {
        let g = tile(2, 2, 3, 2);
        let low = restrict_to_side(&g, Side::Lower).unwrap();
        let w = low.landmark("W_low").unwrap();
        assert_eq!(low.generation(w), g.generation(g.landmark("W_low").unwrap()));
    }

    #[test]
    fn dot_export() {
        let g = Graph::from_edges(2, &[(0, 1)], &[], 0).unwrap();
        let dot = export_dot(&g);
        assert_eq!(dot.matches(" -- ").count(), 1);
        assert!(!dot.contains("label"));

        let g = build_capped_tree(2, 1).unwrap();
        assert_eq!(export_dot(&g).matches(" -- ").count(), 6);
        assert!(export_dot(&g).contains("label=\"W\""));
    }

    #[test]
    fn builder_rejects_self_loops() {
        assert!(Graph::from_edges(2, &[(1, 1)], &[], 0).is_err());
    }

    #[test]
    fn dump_round_trip_and_magic() {
        let g = tile(2, 1, 2, 2);
        let back = Graph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        let bad = g.to_json().replace(GRAPH_MAGIC, "NOPE");
        assert!(matches!(Graph::from_json(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn articulation_points_on_path_and_cycle() {
        let path = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], &[], 0).unwrap();
        assert_eq!(path.articulation_points(), vec![1, 2]);
        let cycle = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], &[], 0).unwrap();
        assert!(cycle.articulation_points().is_empty());
        let multi = Graph::from_edges(3, &[(0, 1), (0, 1), (1, 2)], &[], 0).unwrap();
        assert_eq!(multi.articulation_points(), vec![1]);
    }
}
