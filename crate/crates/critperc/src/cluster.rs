//! Decorated trees and the critical root cluster.
//!
//! The cluster is assembled from a peeling excursion: its extended looptree is
//! built, every non-root loop of length `m` is filled with a percolated
//! Boltzmann triangulation of the `m`-gon with all-black boundary, the root
//! loop is filled with a mixed boundary, and the black component of the root
//! is kept.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::boltzmann::{black_component, percolate, sample_boltzmann, BoundaryCondition, PartitionFunction};
use crate::coding::{extended_structures, looptree_from_tree, Colour, ExtendedStructures, Looptree, TwoTypeTree};
use crate::error::{Error, Result};
use crate::excursions::{Caps, LatticePath, PathKind};
use crate::geometry::{CodingLabels, Graph};
use crate::model::{ModelParams, StepLaw};
use crate::rng::SimRng;

const NONE: usize = usize::MAX;

/// Law of the graphs inserted into loops.
#[derive(Debug, Clone)]
pub enum DecorationFamily {
    /// Boltzmann triangulation of the polygon with i.i.d. site percolation.
    Percolated { pf: PartitionFunction, p: f64 },
    /// The loop itself, with no internal vertices.
    UnitCycle,
}

impl DecorationFamily {
    /// Critical percolation on Boltzmann triangulations at the model's weight.
    pub fn critical(params: &ModelParams) -> Self {
        DecorationFamily::Percolated { pf: PartitionFunction::new(params), p: params.p_c }
    }
}

/// One inserted graph. Boundary vertices are `0..boundary_len` in cyclic
/// order, internal vertices follow.
#[derive(Debug, Clone)]
pub struct Decoration {
    pub boundary_len: usize,
    pub n_vertices: usize,
    /// Edges among kept vertices (parallel edges possible).
    pub edges: Vec<(u32, u32)>,
    /// Black component of boundary vertex 0, sorted.
    pub kept: Vec<u32>,
    /// Black vertices before pruning.
    pub black_vertices: usize,
    /// Component size of boundary vertex 0 when the whole boundary is black.
    pub all_black_volume: usize,
    /// Boundary vertex `b` is glued to loop position `(rotation + b) % boundary_len`.
    pub rotation: usize,
}

impl Decoration {
    /// Largest graph distance between two boundary vertices in the kept graph.
    pub fn boundary_diameter(&self) -> u32 {
        let g = self.graph();
        let boundary: Vec<usize> = self.kept.iter().map(|&v| v as usize).filter(|&v| v < self.boundary_len).collect();
        let local = |v: usize| self.kept.binary_search(&(v as u32)).unwrap();
        boundary
            .iter()
            .map(|&b| {
                let d = g.bfs(&[local(b)]);
                boundary.iter().map(|&c| d[local(c)]).max().unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }

    /// Kept graph on local indices `0..kept.len()` (positions in `kept`).
    pub fn graph(&self) -> Graph {
        let local = |v: u32| self.kept.binary_search(&v).unwrap();
        Graph::from_edges(self.kept.len(), self.edges.iter().map(|&(a, b)| (local(a), local(b))).collect::<Vec<_>>())
    }
}

/// Draw an inserted graph for a loop of length `m`. Randomness is consumed in
/// the order map, colours, rotation.
pub fn sample_decoration<R: Rng + ?Sized>(
    family: &DecorationFamily,
    m: usize,
    boundary: &BoundaryCondition,
    rotate: bool,
    rng: &mut R,
) -> Result<Decoration> {
    let colours_b = boundary.colours(m)?;
    if colours_b.first() != Some(&Colour::Black) {
        return Err(Error::Domain("boundary vertex 0 of an inserted graph must be black".into()));
    }
    let mut dec = match family {
        DecorationFamily::UnitCycle => {
            let all: Vec<(u32, u32)> = (0..m).map(|i| (i as u32, ((i + 1) % m) as u32)).collect();
            // Black run containing vertex 0 along the cycle.
            let mut kept: Vec<u32> = Vec::new();
            let mut j = 0;
            while j < m && colours_b[j] == Colour::Black {
                kept.push(j as u32);
                j += 1;
            }
            if j < m {
                let mut i = m - 1;
                while i > j && colours_b[i] == Colour::Black {
                    kept.push(i as u32);
                    i -= 1;
                }
            }
            kept.sort_unstable();
            let edges = keep_edges(&all, &kept, m);
            let black = colours_b.iter().filter(|&&c| c == Colour::Black).count();
            Decoration {
                boundary_len: m,
                n_vertices: m,
                edges,
                kept,
                black_vertices: black,
                all_black_volume: m,
                rotation: 0,
            }
        }
        DecorationFamily::Percolated { pf, p } => {
            let map = sample_boltzmann(m, pf, rng)?;
            let coloured = percolate(map, *p, boundary.clone(), rng)?;
            let mut kept: Vec<u32> = coloured.black_component(0).into_iter().map(|v| v as u32).collect();
            kept.sort_unstable();
            let all_black_volume = if matches!(boundary, BoundaryCondition::AllBlack) {
                kept.len()
            } else {
                let mut c = coloured.colours.clone();
                c[..m].iter_mut().for_each(|x| *x = Colour::Black);
                black_component(&coloured.map, &c, 0).len()
            };
            let all: Vec<(u32, u32)> = coloured.map.edges().map(|(a, b)| (a as u32, b as u32)).collect();
            let edges = keep_edges(&all, &kept, coloured.map.n_vertices);
            let black = coloured.colours.iter().filter(|&&c| c == Colour::Black).count();
            Decoration {
                boundary_len: m,
                n_vertices: coloured.map.n_vertices,
                edges,
                kept,
                black_vertices: black,
                all_black_volume,
                rotation: 0,
            }
        }
    };
    if rotate {
        dec.rotation = rng.random_range(0..m);
    }
    Ok(dec)
}

fn keep_edges(all: &[(u32, u32)], kept: &[u32], n: usize) -> Vec<(u32, u32)> {
    let mut is_kept = vec![false; n];
    for &v in kept {
        is_kept[v as usize] = true;
    }
    all.iter().copied().filter(|&(a, b)| a != b && is_kept[a as usize] && is_kept[b as usize]).collect()
}

/// Origin of a cluster vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    /// Black vertex of the root loop.
    RootLoop,
    /// Black vertex of the tree, off the root loop.
    TreeLoop,
    /// Internal vertex of the graph inserted into loop `face`.
    Internal { face: u32 },
}

impl Provenance {
    /// Compact export code: `R`, `T`, or `I<face>`.
    pub fn code(&self) -> String {
        match self {
            Provenance::RootLoop => "R".into(),
            Provenance::TreeLoop => "T".into(),
            Provenance::Internal { face } => format!("I{face}"),
        }
    }
}

/// Kept part of one inserted graph, in graph vertex ids.
#[derive(Debug, Clone)]
pub struct DecorationRecord {
    /// Tree vertex of the white vertex owning the loop.
    pub owner: usize,
    pub loop_len: usize,
    pub vertices: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub black_vertices: usize,
    pub all_black_volume: usize,
}

/// Graph obtained by inserting decorations into the loops of a looptree.
#[derive(Debug, Clone)]
pub struct DecoratedGraph {
    pub graph: Graph,
    pub root: usize,
    pub provenance: Vec<Provenance>,
    /// Tree vertex of each graph vertex, `usize::MAX` for internal vertices.
    pub tree_vertex: Vec<usize>,
    /// Graph vertex of each tree vertex, `usize::MAX` for white or excluded vertices.
    pub vertex_of_tree: Vec<usize>,
    /// One record per loop, in loop order.
    pub decorations: Vec<DecorationRecord>,
}

impl DecoratedGraph {
    pub fn num_vertices(&self) -> usize {
        self.graph.num_vertices()
    }

    /// Counting measure.
    pub fn counting_measure(&self) -> Vec<f64> {
        vec![1.0; self.num_vertices()]
    }

    pub fn degree_measure(&self) -> Vec<f64> {
        (0..self.num_vertices()).map(|v| self.graph.degree(v) as f64).collect()
    }
}

struct RootFace {
    loop_index: usize,
    boundary: BoundaryCondition,
    /// Boundary vertex `b` sits at loop position `(offset + b) % len`.
    offset: usize,
}

fn assemble<R: Rng + ?Sized>(
    tree: &TwoTypeTree,
    looptree: &Looptree,
    excluded: usize,
    root_face: Option<RootFace>,
    family: &DecorationFamily,
    rng: &mut R,
) -> Result<DecoratedGraph> {
    let mut provenance = Vec::new();
    let mut tree_vertex = Vec::new();
    let mut vertex_of_tree = vec![NONE; tree.len()];
    for &u in &looptree.vertices {
        if u >= excluded {
            vertex_of_tree[u] = provenance.len();
            provenance.push(Provenance::TreeLoop);
            tree_vertex.push(u);
        }
    }
    let mut decorations = Vec::with_capacity(looptree.loops.len());
    let mut all_edges = Vec::new();
    for (li, lp) in looptree.loops.iter().enumerate() {
        let m = lp.len();
        let special = root_face.as_ref().filter(|rf| rf.loop_index == li);
        let dec = match special {
            Some(rf) => sample_decoration(family, m, &rf.boundary, false, rng)?,
            None => sample_decoration(family, m, &BoundaryCondition::AllBlack, true, rng)?,
        };
        let shift = special.map_or(dec.rotation, |rf| rf.offset);
        let mut local = vec![NONE; dec.n_vertices];
        let mut verts = Vec::with_capacity(dec.kept.len());
        for &v in &dec.kept {
            let v = v as usize;
            let g = if v < m {
                let tv = looptree.vertices[lp[(shift + v) % m]];
                let g = vertex_of_tree[tv];
                if g == NONE {
                    return Err(Error::Domain(format!(
                        "loop {li}: kept boundary vertex {v} maps to an excluded tree vertex"
                    )));
                }
                g
            } else {
                let g = provenance.len();
                provenance.push(Provenance::Internal { face: li as u32 });
                tree_vertex.push(NONE);
                g
            };
            local[v] = g;
            verts.push(g);
        }
        let edges: Vec<(usize, usize)> =
            dec.edges.iter().map(|&(a, b)| (local[a as usize], local[b as usize])).collect();
        all_edges.extend_from_slice(&edges);
        decorations.push(DecorationRecord {
            owner: looptree.loop_owner[li],
            loop_len: m,
            vertices: verts,
            edges,
            black_vertices: dec.black_vertices,
            all_black_volume: dec.all_black_volume,
        });
    }
    let graph = Graph::from_edges(provenance.len(), all_edges);
    let root = vertex_of_tree.get(excluded).copied().unwrap_or(0);
    Ok(DecoratedGraph { graph, root, provenance, tree_vertex, vertex_of_tree, decorations })
}

/// Replace every white vertex of `tree` by a decoration glued along its loop.
pub fn decorate_tree<R: Rng + ?Sized>(
    tree: &TwoTypeTree,
    family: &DecorationFamily,
    rng: &mut R,
) -> Result<DecoratedGraph> {
    let looptree = looptree_from_tree(tree)?;
    assemble(tree, &looptree, 0, None, family, rng)
}

/// Critical root cluster with its combinatorial skeleton.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub decorated: DecoratedGraph,
    pub structures: ExtendedStructures,
    pub tau: usize,
    pub k: usize,
    pub l: usize,
}

impl Cluster {
    pub fn graph(&self) -> &Graph {
        &self.decorated.graph
    }

    pub fn root(&self) -> usize {
        self.decorated.root
    }

    pub fn num_vertices(&self) -> usize {
        self.decorated.num_vertices()
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.decorated.provenance
    }

    pub fn root_decoration(&self) -> &DecorationRecord {
        self.decorated.decorations.last().expect("a cluster has a root loop")
    }

    /// Vertices attached to each original coding label `0..=tau`.
    pub fn coding_labels(&self) -> CodingLabels {
        let s = &self.structures;
        let mut by_owner = vec![NONE; s.tree.len()];
        for (i, d) in self.decorated.decorations.iter().enumerate() {
            by_owner[d.owner] = i;
        }
        let groups = (0..=self.tau)
            .map(|i| {
                let u = s.vertex_of_label(i);
                match s.tree.colour(u) {
                    Colour::Black => vec![self.decorated.vertex_of_tree[u]],
                    Colour::White => self.decorated.decorations[by_owner[u]].vertices.clone(),
                }
            })
            .collect();
        CodingLabels { groups, root: self.root() }
    }

    /// Tree vertices below the root white vertex in depth-first order, the ramp omitted.
    pub fn depth_first_vertices(&self) -> Vec<usize> {
        let s = &self.structures;
        let mut out = Vec::with_capacity(self.tau + 1);
        let mut stack = vec![s.root_white];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(s.tree.children(u).iter().rev().filter(|&&c| c > s.k));
        }
        out
    }

    /// Height process of the cluster's tree, measured from the root white
    /// vertex, along [`Cluster::depth_first_vertices`].
    pub fn height_process(&self) -> Vec<u32> {
        let tree = &self.structures.tree;
        let base = tree.depth(self.structures.root_white);
        self.depth_first_vertices().into_iter().map(|u| tree.depth(u) - base).collect()
    }

    /// Connected pieces hanging off the root-loop vertices once the root
    /// decoration is removed, as (attachment vertex, vertex set).
    pub fn root_subtrees(&self) -> Vec<(usize, Vec<usize>)> {
        let n = self.num_vertices();
        let root_face = self.decorated.decorations.len() - 1;
        let mut edges = Vec::new();
        for (i, d) in self.decorated.decorations.iter().enumerate() {
            if i != root_face {
                edges.extend_from_slice(&d.edges);
            }
        }
        let g = Graph::from_edges(n, edges);
        let mut out = Vec::new();
        for v in 0..n {
            if self.decorated.provenance[v] == Provenance::RootLoop {
                let d = g.bfs(&[v]);
                out.push((v, (0..n).filter(|&w| d[w] != u32::MAX).collect()));
            }
        }
        out
    }

    /// Structural validator: connected, rooted, loop-vertex count matches the tree.
    pub fn validate(&self) -> Result<()> {
        if !self.graph().is_connected() {
            return Err(Error::InvalidMap("cluster is disconnected".into()));
        }
        if self.decorated.provenance[self.root()] != Provenance::RootLoop {
            return Err(Error::InvalidMap("cluster root is not on the root loop".into()));
        }
        let loop_vertices =
            self.decorated.provenance.iter().filter(|p| !matches!(p, Provenance::Internal { .. })).count();
        let blacks = self.structures.tree.black_count() - (self.k + 1);
        if loop_vertices != blacks {
            return Err(Error::InvalidMap(format!("{loop_vertices} loop vertices for {blacks} tree blacks")));
        }
        Ok(())
    }
}

/// Assemble the cluster coded by a peeling excursion.
///
/// Decoration randomness is consumed loop by loop in coding-label order, the
/// root loop last.
pub fn build_cluster<R: Rng + ?Sized>(path: &LatticePath, family: &DecorationFamily, rng: &mut R) -> Result<Cluster> {
    let structures = extended_structures(path)?;
    let (k, l) = (structures.k, structures.l);
    let tau = path.len();
    let root_index = structures.looptree.loops.len() - 1;
    debug_assert_eq!(structures.looptree.loop_owner[root_index], structures.root_white);
    let root_face = RootFace {
        loop_index: root_index,
        boundary: BoundaryCondition::Runs(vec![(Colour::Black, l), (Colour::White, k + 1)]),
        offset: k + 1,
    };
    let mut decorated = assemble(&structures.tree, &structures.looptree, k + 1, Some(root_face), family, rng)?;
    for &u in structures.tree.children(structures.root_white) {
        if u > k {
            decorated.provenance[decorated.vertex_of_tree[u]] = Provenance::RootLoop;
        }
    }
    debug_assert_eq!(decorated.root, decorated.vertex_of_tree[k + 1]);
    Ok(Cluster { decorated, structures, tau, k, l })
}

/// Per-step volumes and the root correction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeDecomposition {
    /// `xi[i]` for steps `i = 1..=tau`; `xi[0] = 0`.
    pub xi: Vec<u64>,
    pub delta: u64,
    pub total: u64,
    /// Black vertices before pruning.
    pub unpruned: u64,
}

/// Volume of step `i`: zero for up-steps, the kept decoration volume minus the
/// parent vertex for down-steps; the final step uses the all-black boundary.
pub fn volume_decomposition(cluster: &Cluster) -> VolumeDecomposition {
    let s = &cluster.structures;
    let d = &cluster.decorated;
    let mut by_owner = vec![NONE; s.tree.len()];
    for (i, rec) in d.decorations.iter().enumerate() {
        by_owner[rec.owner] = i;
    }
    let mut xi = vec![0u64; cluster.tau + 1];
    for (i, x) in xi.iter_mut().enumerate().skip(1) {
        let u = s.vertex_of_label(i);
        if s.tree.colour(u) == Colour::White {
            let rec = &d.decorations[by_owner[u]];
            *x = if u == s.root_white { rec.all_black_volume as u64 - 1 } else { rec.vertices.len() as u64 - 1 };
        }
    }
    let root = cluster.root_decoration();
    let delta = root.all_black_volume as u64 - 1 - root.vertices.len() as u64;
    let total = xi.iter().sum();
    let loop_blacks = d.provenance.iter().filter(|p| !matches!(p, Provenance::Internal { .. })).count() as u64;
    let last = d.decorations.len() - 1;
    let internal_blacks: u64 = d
        .decorations
        .iter()
        .enumerate()
        .map(|(i, r)| (r.black_vertices - if i == last { cluster.l } else { r.loop_len }) as u64)
        .sum();
    let unpruned = loop_blacks + internal_blacks;
    VolumeDecomposition { xi, delta, total, unpruned }
}

/// Root-loop data of an excursion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootStructure {
    pub l: usize,
    pub k: usize,
    pub loop_size: usize,
    /// Lengths of the first-passage pieces of the reversed walk.
    pub gammas: Vec<u64>,
    /// Index of the longest piece (smallest index on ties).
    pub i_max: usize,
}

impl RootStructure {
    pub fn largest(&self) -> u64 {
        self.gammas[self.i_max]
    }

    pub fn second_largest(&self) -> u64 {
        let mut g = self.gammas.clone();
        g.sort_unstable_by(|a, b| b.cmp(a));
        g.get(1).copied().unwrap_or(0)
    }
}

/// Split the time reversal of `Z_0..Z_{tau-1}` (followed by a step to 0) at
/// its first passages below `l`, `l - 1`, ..., 1.
pub fn decompose_root_structure(path: &LatticePath) -> Result<RootStructure> {
    if path.kind() != PathKind::Peeling {
        return Err(Error::Domain("root structure needs a peeling excursion".into()));
    }
    let z = path.values();
    let tau = path.len();
    let l = z[tau - 1] as usize;
    let k = (-z[tau]) as usize;
    let mut gammas = Vec::with_capacity(l);
    let mut level = l as i64;
    let mut last = 0u64;
    for m in 1..=tau {
        let v = if m < tau { z[tau - 1 - m] } else { 0 };
        if v < level {
            debug_assert_eq!(v, level - 1);
            gammas.push(m as u64 - last);
            last = m as u64;
            level = v;
        }
    }
    debug_assert_eq!(gammas.len(), l);
    debug_assert_eq!(gammas.iter().sum::<u64>(), tau as u64);
    let mut i_max = 0;
    for (i, &g) in gammas.iter().enumerate() {
        if g > gammas[i_max] {
            i_max = i;
        }
    }
    Ok(RootStructure { l, k, loop_size: k + l + 1, gammas, i_max })
}

/// Running walk that draws each non-final down-step's decoration as it goes.
///
/// Decoration randomness is consumed exactly as [`build_cluster`] consumes it,
/// so a cluster rebuilt from the recorded path with a clone of the decoration
/// stream has the accumulated volume.
pub struct VolumeWalk<'a> {
    law: &'a StepLaw,
    family: &'a DecorationFamily,
    z: i64,
    t: u64,
    path: Option<Vec<i64>>,
    partial: u64,
    volume: Option<u64>,
}

impl<'a> VolumeWalk<'a> {
    pub fn new(law: &'a StepLaw, family: &'a DecorationFamily, record: bool) -> Self {
        Self { law, family, z: 1, t: 0, path: record.then(|| vec![1]), partial: 0, volume: None }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn current(&self) -> i64 {
        self.z
    }

    pub fn terminated(&self) -> bool {
        self.z <= 0
    }

    /// Exact cluster size, known once the final step has been decorated.
    pub fn volume(&self) -> Option<u64> {
        self.volume
    }

    /// Cluster size is at least this much.
    pub fn volume_lower_bound(&self) -> u64 {
        self.volume.unwrap_or(self.partial + 1)
    }

    /// Advance one step, drawing its decoration when `decorate` is set.
    pub fn step<R: Rng + ?Sized, D: Rng + ?Sized>(&mut self, decorate: bool, rng: &mut R, deco: &mut D) -> Result<()> {
        debug_assert!(!self.terminated());
        let dz = self.law.sample(rng);
        let (z, next) = (self.z, self.z + dz);
        self.z = next;
        self.t += 1;
        if let Some(p) = &mut self.path {
            p.push(next);
        }
        if dz < 0 && decorate {
            let m = (-dz) as usize + 1;
            if next > 0 {
                let dec = sample_decoration(self.family, m, &BoundaryCondition::AllBlack, true, deco)?;
                self.partial += dec.kept.len() as u64 - 1;
            } else {
                let (l, k) = (z as usize, (-next) as usize);
                let boundary = BoundaryCondition::Runs(vec![(Colour::Black, l), (Colour::White, k + 1)]);
                let dec = sample_decoration(self.family, m, &boundary, false, deco)?;
                self.volume = Some(self.partial + dec.kept.len() as u64);
            }
        }
        Ok(())
    }

    pub fn into_path(self) -> LatticePath {
        LatticePath::from_trusted(self.path.expect("path was not recorded"), PathKind::Peeling)
    }
}

/// Conditioning events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConditioningMode {
    /// `tau >= beta n`.
    TauAtLeast,
    /// `|C| >= n`.
    SizeAtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningRequest {
    pub n: u64,
    pub mode: ConditioningMode,
    pub beta: f64,
    /// Optional upper end of the window, as a multiple of the lower end.
    pub window: Option<f64>,
}

impl ConditioningRequest {
    fn tau_threshold(&self) -> u64 {
        ((self.beta * self.n as f64).ceil() as u64).max(1)
    }
}

/// Accepted cluster with the co-occurring events.
#[derive(Debug, Clone)]
pub struct ConditionedCluster {
    pub cluster: Cluster,
    pub rejections: u64,
    pub tau_event: bool,
    pub size_event: bool,
}

/// Rejection sampling of the cluster under `request`.
pub fn sample_cluster_conditioned(
    request: &ConditioningRequest,
    law: &StepLaw,
    family: &DecorationFamily,
    caps: &Caps,
    rng: &mut SimRng,
) -> Result<ConditionedCluster> {
    if request.n == 0 {
        return Err(Error::Domain("conditioning size must be at least 1".into()));
    }
    let tau_min = request.tau_threshold();
    for attempt in 0..caps.rejection_cap {
        let mut deco = SimRng::seed_from_u64(rng.random());
        let saved = deco.clone();
        let mut walk = VolumeWalk::new(law, family, true);
        let accepted = match request.mode {
            ConditioningMode::TauAtLeast => {
                let upper = request.window.map(|w| (w * tau_min as f64).ceil() as u64).unwrap_or(caps.step_cap);
                while !walk.terminated() && walk.steps() < upper {
                    walk.step(false, rng, &mut deco)?;
                }
                if !walk.terminated() && request.window.is_none() {
                    return Err(Error::StepCap { cap: caps.step_cap });
                }
                walk.terminated() && walk.steps() >= tau_min
            }
            ConditioningMode::SizeAtLeast => {
                let upper = request.window.map(|w| (w * request.n as f64).ceil() as u64);
                while !walk.terminated() {
                    if walk.steps() >= caps.step_cap {
                        return Err(Error::StepCap { cap: caps.step_cap });
                    }
                    walk.step(true, rng, &mut deco)?;
                    if upper.is_some_and(|u| walk.volume_lower_bound() >= u) {
                        break;
                    }
                }
                walk.terminated()
                    && upper.is_none_or(|u| walk.volume_lower_bound() < u)
                    && walk.volume_lower_bound() >= request.n
            }
        };
        if !accepted {
            continue;
        }
        let expected = walk.volume();
        let path = walk.into_path();
        let mut deco = saved;
        let cluster = build_cluster(&path, family, &mut deco)?;
        if let Some(v) = expected {
            debug_assert_eq!(v, cluster.num_vertices() as u64);
        }
        let tau_event = cluster.tau as u64 >= tau_min;
        let size_event = cluster.num_vertices() as u64 >= request.n;
        return Ok(ConditionedCluster { cluster, rejections: attempt, tau_event, size_event });
    }
    Err(Error::RejectionCap { cap: caps.rejection_cap })
}

/// Outcome of checking one conditioning event against the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossSample {
    pub tau_event: bool,
    pub size_event: bool,
    pub rejections: u64,
}

/// Draw under one event and decide the other without building the cluster.
///
/// The walk stops as soon as the other event is decided: the size event once
/// the accumulated volume reaches `n`, the time event once the walk survives
/// `beta n` steps.
pub fn cross_condition(
    request: &ConditioningRequest,
    law: &StepLaw,
    family: &DecorationFamily,
    caps: &Caps,
    rng: &mut SimRng,
) -> Result<CrossSample> {
    let tau_min = request.tau_threshold();
    let n = request.n;
    for attempt in 0..caps.rejection_cap {
        let mut deco = SimRng::seed_from_u64(rng.random());
        let mut walk = VolumeWalk::new(law, family, false);
        let mut size_known = false;
        while !walk.terminated() {
            if walk.steps() >= caps.step_cap {
                return Err(Error::StepCap { cap: caps.step_cap });
            }
            let decorate = !size_known;
            walk.step(decorate, rng, &mut deco)?;
            if !size_known && walk.volume_lower_bound() >= n {
                size_known = true;
            }
            match request.mode {
                ConditioningMode::TauAtLeast => {
                    if walk.steps() >= tau_min && size_known {
                        break;
                    }
                }
                ConditioningMode::SizeAtLeast => {
                    if size_known && walk.steps() >= tau_min {
                        break;
                    }
                }
            }
        }
        let tau_event = walk.steps() >= tau_min;
        let size_event = size_known;
        let conditioned = match request.mode {
            ConditioningMode::TauAtLeast => tau_event,
            ConditioningMode::SizeAtLeast => size_event,
        };
        if conditioned {
            return Ok(CrossSample { tau_event, size_event, rejections: attempt });
        }
    }
    Err(Error::RejectionCap { cap: caps.rejection_cap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_structure_examples() {
        let r = decompose_root_structure(&LatticePath::peeling(vec![1, 0]).unwrap()).unwrap();
        assert_eq!((r.l, r.k, r.loop_size, r.gammas.clone()), (1, 0, 2, vec![1]));
        let r = decompose_root_structure(&LatticePath::peeling(vec![1, 2, -1]).unwrap()).unwrap();
        assert_eq!((r.l, r.k, r.loop_size), (2, 1, 4));
        assert_eq!(r.gammas.iter().sum::<u64>(), 2);
    }

    #[test]
    fn smallest_cluster() {
        let params = ModelParams::new(0.8).unwrap();
        let family = DecorationFamily::critical(&params);
        let path = LatticePath::peeling(vec![1, 0]).unwrap();
        for seed in 0..50 {
            let c = build_cluster(&path, &family, &mut crate::rng::stream(seed, 0)).unwrap();
            assert!(c.num_vertices() >= 1);
            c.validate().unwrap();
            assert_eq!(c.root_decoration().loop_len, 2);
        }
    }
}
