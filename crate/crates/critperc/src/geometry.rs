//! Graph metrics, effective resistance, and Gromov-Hausdorff-Prohorov bounds
//! on finite rooted metric-measure spaces.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNREACHED: u32 = u32::MAX;

/// Undirected multigraph in compressed adjacency form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    offsets: Vec<usize>,
    adj: Vec<u32>,
}

impl Graph {
    /// Build from an edge list; parallel edges are kept and self-loops dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for (a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} vertices");
            if a != b {
                pairs.push((a as u32, b as u32));
                pairs.push((b as u32, a as u32));
            }
        }
        pairs.sort_unstable();
        let mut offsets = vec![0usize; n + 1];
        for &(a, _) in &pairs {
            offsets[a as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let adj = pairs.into_iter().map(|p| p.1).collect();
        Self { offsets, adj }
    }

    pub fn path(n: usize) -> Self {
        Self::from_edges(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn cycle(n: usize) -> Self {
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn complete(n: usize) -> Self {
        Self::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn star(leaves: usize) -> Self {
        Self::from_edges(leaves + 1, (1..=leaves).map(|i| (0, i)))
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.adj.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adj[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_vertices()).flat_map(move |v| {
            self.neighbors(v).iter().filter(move |&&w| (w as usize) > v).map(move |&w| (v, w as usize))
        })
    }

    pub fn is_tree(&self) -> bool {
        self.num_edges() + 1 == self.num_vertices() && self.is_connected()
    }

    pub fn is_connected(&self) -> bool {
        self.num_vertices() == 0 || self.bfs(&[0]).iter().all(|&d| d != UNREACHED)
    }

    /// Multi-source breadth-first distances; `u32::MAX` marks unreachable vertices.
    pub fn bfs(&self, sources: &[usize]) -> Vec<u32> {
        let mut dist = vec![UNREACHED; self.num_vertices()];
        let mut queue = Vec::with_capacity(self.num_vertices());
        for &s in sources {
            if dist[s] == UNREACHED {
                dist[s] = 0;
                queue.push(s as u32);
            }
        }
        let mut head = 0;
        while head < queue.len() {
            let v = queue[head] as usize;
            head += 1;
            let dv = dist[v] + 1;
            for &w in self.neighbors(v) {
                if dist[w as usize] == UNREACHED {
                    dist[w as usize] = dv;
                    queue.push(w);
                }
            }
        }
        dist
    }

    /// Largest connected subgraph containing `v` as an induced relabelled graph,
    /// with the old index of each new vertex.
    pub fn induced(&self, keep: &[usize]) -> (Graph, Vec<usize>) {
        let mut new_id = vec![usize::MAX; self.num_vertices()];
        for (i, &v) in keep.iter().enumerate() {
            new_id[v] = i;
        }
        let edges = keep.iter().flat_map(|&v| {
            let new_id = &new_id;
            self.neighbors(v)
                .iter()
                .filter(move |&&w| new_id[w as usize] != usize::MAX && (w as usize) > v)
                .map(move |&w| (new_id[v], new_id[w as usize]))
        });
        (Graph::from_edges(keep.len(), edges.collect::<Vec<_>>()), keep.to_vec())
    }
}

/// Exact graph distances from a set of sources.
pub fn graph_distance(graph: &Graph, sources: &[usize]) -> Result<Vec<u32>> {
    let d = graph.bfs(sources);
    match d.iter().position(|&x| x == UNREACHED) {
        Some(v) => Err(Error::Disconnected(v)),
        None => Ok(d),
    }
}

/// Exact diameter of a connected graph by iterative fringe upper bounds.
pub fn diameter(graph: &Graph) -> Result<u32> {
    let n = graph.num_vertices();
    if n <= 1 {
        return Ok(0);
    }
    let start = (0..n).max_by_key(|&v| graph.degree(v)).unwrap();
    let d0 = graph_distance(graph, &[start])?;
    let a = argmax(&d0);
    let da = graph.bfs(&[a]);
    let b = argmax(&da);
    let mut lb = da[b];
    // Middle vertex of a shortest a-b path.
    let db = graph.bfs(&[b]);
    let half = da[b] / 2;
    let u = (0..n).find(|&v| da[v] == half && db[v] == da[b] - half).unwrap_or(a);
    let du = graph.bfs(&[u]);
    let ecc_u = *du.iter().max().unwrap();
    lb = lb.max(ecc_u);
    let mut levels: Vec<Vec<usize>> = vec![Vec::new(); ecc_u as usize + 1];
    for v in 0..n {
        levels[du[v] as usize].push(v);
    }
    let mut i = ecc_u;
    let mut ub = 2 * ecc_u;
    while ub > lb && i > 0 {
        let bi = levels[i as usize].iter().map(|&v| *graph.bfs(&[v]).iter().max().unwrap()).max().unwrap_or(0);
        lb = lb.max(bi);
        if lb > 2 * (i - 1) {
            return Ok(lb);
        }
        ub = 2 * (i - 1);
        i -= 1;
    }
    Ok(lb)
}

fn argmax(d: &[u32]) -> usize {
    let mut best = 0;
    for (i, &x) in d.iter().enumerate() {
        if x > d[best] {
            best = i;
        }
    }
    best
}

/// Counting and degree measures.
pub fn measures(graph: &Graph) -> (Vec<f64>, Vec<f64>) {
    let n = graph.num_vertices();
    (vec![1.0; n], (0..n).map(|v| graph.degree(v) as f64).collect())
}

/// Biconnected blocks (as edge-derived vertex sets) and articulation points.
struct BlockCut {
    block_vertices: Vec<Vec<u32>>,
    /// For each vertex: its node in the block-cut tree.
    node_of: Vec<usize>,
    /// Block-cut tree: parent and depth per node; blocks are nodes `0..B`,
    /// articulation vertex `v` is node `B + cut_index[v]`.
    parent: Vec<usize>,
    depth: Vec<usize>,
    cut_vertex: Vec<u32>,
    n_blocks: usize,
}

impl BlockCut {
    fn new(graph: &Graph) -> Self {
        let n = graph.num_vertices();
        let mut disc = vec![UNREACHED; n];
        let mut low = vec![0u32; n];
        let mut blocks: Vec<Vec<u32>> = Vec::new();
        let mut edge_stack: Vec<(u32, u32)> = Vec::new();
        let mut timer = 0u32;
        // (vertex, parent, next neighbour index)
        let mut stack: Vec<(u32, u32, usize)> = Vec::new();
        for root in 0..n {
            if disc[root] != UNREACHED {
                continue;
            }
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            stack.push((root as u32, UNREACHED, 0));
            if graph.degree(root) == 0 {
                blocks.push(vec![root as u32]);
            }
            while let Some(top) = stack.last_mut() {
                let (v, p, i) = *top;
                let nb = graph.neighbors(v as usize);
                if i < nb.len() {
                    top.2 += 1;
                    let w = nb[i];
                    if w == p {
                        continue;
                    }
                    if disc[w as usize] == UNREACHED {
                        edge_stack.push((v, w));
                        disc[w as usize] = timer;
                        low[w as usize] = timer;
                        timer += 1;
                        stack.push((w, v, 0));
                    } else if disc[w as usize] < disc[v as usize] {
                        edge_stack.push((v, w));
                        low[v as usize] = low[v as usize].min(disc[w as usize]);
                    }
                } else {
                    stack.pop();
                    if p != UNREACHED {
                        low[p as usize] = low[p as usize].min(low[v as usize]);
                        if low[v as usize] >= disc[p as usize] {
                            let mut verts = Vec::new();
                            while let Some((a, b)) = edge_stack.pop() {
                                verts.push(a);
                                verts.push(b);
                                if (a, b) == (p, v) {
                                    break;
                                }
                            }
                            verts.sort_unstable();
                            verts.dedup();
                            blocks.push(verts);
                        }
                    }
                }
            }
        }
        let n_blocks = blocks.len();
        let mut count = vec![0u32; n];
        for b in &blocks {
            for &v in b {
                count[v as usize] += 1;
            }
        }
        let mut cut_index = vec![usize::MAX; n];
        let mut cut_vertex = Vec::new();
        for v in 0..n {
            if count[v] > 1 {
                cut_index[v] = cut_vertex.len();
                cut_vertex.push(v as u32);
            }
        }
        let total = n_blocks + cut_vertex.len();
        let mut tree_adj: Vec<Vec<usize>> = vec![Vec::new(); total];
        let mut node_of = vec![usize::MAX; n];
        for (bi, b) in blocks.iter().enumerate() {
            for &v in b {
                let ci = cut_index[v as usize];
                if ci != usize::MAX {
                    tree_adj[bi].push(n_blocks + ci);
                    tree_adj[n_blocks + ci].push(bi);
                    node_of[v as usize] = n_blocks + ci;
                } else {
                    node_of[v as usize] = bi;
                }
            }
        }
        let mut parent = vec![usize::MAX; total];
        let mut depth = vec![0usize; total];
        let mut seen = vec![false; total];
        for r in 0..total {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            let mut q = vec![r];
            while let Some(x) = q.pop() {
                for &y in &tree_adj[x] {
                    if !seen[y] {
                        seen[y] = true;
                        parent[y] = x;
                        depth[y] = depth[x] + 1;
                        q.push(y);
                    }
                }
            }
        }
        Self { block_vertices: blocks, node_of, parent, depth, cut_vertex, n_blocks }
    }

    fn path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let (mut x, mut y) = (a, b);
        let mut left = vec![];
        let mut right = vec![];
        while self.depth[x] > self.depth[y] {
            left.push(x);
            x = self.parent[x];
        }
        while self.depth[y] > self.depth[x] {
            right.push(y);
            y = self.parent[y];
        }
        while x != y {
            if self.parent[x] == usize::MAX || self.parent[y] == usize::MAX {
                return None;
            }
            left.push(x);
            right.push(y);
            x = self.parent[x];
            y = self.parent[y];
        }
        left.push(x);
        left.extend(right.into_iter().rev());
        Some(left)
    }
}

enum BlockSolver {
    Dense { index: HashMap<u32, usize>, chol: nalgebra::Cholesky<f64, nalgebra::Dyn> },
    Iterative { index: HashMap<u32, usize>, offsets: Vec<usize>, adj: Vec<usize> },
}

/// Dense elimination below this block size, preconditioned conjugate gradients above.
pub const DENSE_BLOCK_LIMIT: usize = 2000;
pub const RESISTANCE_TOLERANCE: f64 = 1e-10;

impl BlockSolver {
    fn new(graph: &Graph, verts: &[u32]) -> Self {
        let index: HashMap<u32, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let nb = verts.len();
        if nb <= DENSE_BLOCK_LIMIT {
            // Laplacian grounded at local vertex 0.
            let mut l = DMatrix::<f64>::zeros(nb - 1, nb - 1);
            for (i, &v) in verts.iter().enumerate() {
                for &w in graph.neighbors(v as usize) {
                    if let Some(&j) = index.get(&w) {
                        if i > 0 {
                            l[(i - 1, i - 1)] += 1.0;
                            if j > 0 {
                                l[(i - 1, j - 1)] -= 1.0;
                            }
                        }
                    }
                }
            }
            let chol =
                nalgebra::Cholesky::new(l).expect("grounded Laplacian of a connected block is positive definite");
            BlockSolver::Dense { index, chol }
        } else {
            let mut offsets = vec![0];
            let mut adj = Vec::new();
            for &v in verts {
                for &w in graph.neighbors(v as usize) {
                    if let Some(&j) = index.get(&w) {
                        adj.push(j);
                    }
                }
                offsets.push(adj.len());
            }
            BlockSolver::Iterative { index, offsets, adj }
        }
    }

    fn resistance(&self, a: u32, b: u32) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        match self {
            BlockSolver::Dense { index, chol } => {
                let (ia, ib) = (index[&a], index[&b]);
                let n = chol.l_dirty().nrows();
                let mut rhs = DVector::<f64>::zeros(n);
                if ia > 0 {
                    rhs[ia - 1] += 1.0;
                }
                if ib > 0 {
                    rhs[ib - 1] -= 1.0;
                }
                let x = chol.solve(&rhs);
                let xa = if ia > 0 { x[ia - 1] } else { 0.0 };
                let xb = if ib > 0 { x[ib - 1] } else { 0.0 };
                Ok(xa - xb)
            }
            BlockSolver::Iterative { index, offsets, adj } => {
                let (ia, ib) = (index[&a], index[&b]);
                let x = pcg_grounded(offsets, adj, ia, ib)?;
                Ok(x[ia] - x[ib])
            }
        }
    }
}

/// Solve `L x = e_a - e_b` with `x[ground] = 0`, ground = `b`, by Jacobi-preconditioned CG.
fn pcg_grounded(offsets: &[usize], adj: &[usize], a: usize, b: usize) -> Result<Vec<f64>> {
    let n = offsets.len() - 1;
    let deg: Vec<f64> = (0..n).map(|i| (offsets[i + 1] - offsets[i]) as f64).collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..n {
            if i == b {
                y[i] = 0.0;
                continue;
            }
            let mut s = deg[i] * x[i];
            for &j in &adj[offsets[i]..offsets[i + 1]] {
                if j != b {
                    s -= x[j];
                }
            }
            y[i] = s;
        }
    };
    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    r[a] = 1.0;
    let norm_b = 1.0;
    let mut z: Vec<f64> = (0..n).map(|i| if i == b { 0.0 } else { r[i] / deg[i] }).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(u, v)| u * v).sum();
    let mut ap = vec![0.0; n];
    let max_iter = 20 * n + 100;
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let alpha = rz / p.iter().zip(&ap).map(|(u, v)| u * v).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res <= RESISTANCE_TOLERANCE * norm_b {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = if i == b { 0.0 } else { r[i] / deg[i] };
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(u, v)| u * v).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(Error::SolverFailed { residual: res })
}

/// Effective resistances with unit conductances.
///
/// The graph is split into biconnected blocks; resistance adds in series
/// along the block-cut tree, and each block is solved separately.
pub struct ResistanceOracle<'g> {
    graph: &'g Graph,
    tree_distances: bool,
    bc: Option<BlockCut>,
    solvers: HashMap<usize, BlockSolver>,
}

impl<'g> ResistanceOracle<'g> {
    pub fn new(graph: &'g Graph) -> Result<Self> {
        if !graph.is_connected() {
            let d = graph.bfs(&[0]);
            return Err(Error::Disconnected(d.iter().position(|&x| x == UNREACHED).unwrap()));
        }
        let tree_distances = graph.is_tree();
        let bc = (!tree_distances).then(|| BlockCut::new(graph));
        Ok(Self { graph, tree_distances, bc, solvers: HashMap::new() })
    }

    pub fn resistance(&mut self, x: usize, y: usize) -> Result<f64> {
        if x == y {
            return Ok(0.0);
        }
        if self.tree_distances {
            return Ok(self.graph.bfs(&[x])[y] as f64);
        }
        let bc = self.bc.as_ref().unwrap();
        let path = bc.path(bc.node_of[x], bc.node_of[y]).ok_or(Error::Disconnected(y))?;
        let mut total = 0.0;
        for (pos, &node) in path.iter().enumerate() {
            if node >= bc.n_blocks {
                continue;
            }
            let entry = if pos > 0 { bc.cut_vertex[path[pos - 1] - bc.n_blocks] } else { x as u32 };
            let exit = if pos + 1 < path.len() { bc.cut_vertex[path[pos + 1] - bc.n_blocks] } else { y as u32 };
            let verts = &bc.block_vertices[node];
            if verts.len() == 2 {
                if entry != exit {
                    let parallel = self.graph.neighbors(entry as usize).iter().filter(|&&w| w == exit).count();
                    total += 1.0 / parallel as f64;
                }
                continue;
            }
            let solver = self.solvers.entry(node).or_insert_with(|| BlockSolver::new(self.graph, verts));
            total += solver.resistance(entry, exit)?;
        }
        Ok(total)
    }

    /// Resistances from `x` to every vertex of `targets`.
    pub fn batch(&mut self, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        pairs.iter().map(|&(a, b)| self.resistance(a, b)).collect()
    }
}

pub fn effective_resistance(graph: &Graph, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    ResistanceOracle::new(graph)?.batch(pairs)
}

/// Finite rooted metric-measure space with a full distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMetricMeasureSpace {
    pub n: usize,
    pub dist: Vec<f64>,
    pub weights: Vec<f64>,
    pub root: usize,
}

impl FiniteMetricMeasureSpace {
    pub fn new(dist: Vec<f64>, weights: Vec<f64>, root: usize) -> Result<Self> {
        let n = weights.len();
        if dist.len() != n * n || root >= n.max(1) || n == 0 {
            return Err(Error::Domain("distance matrix, weights and root are inconsistent".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Domain("measure weights must be non-negative".into()));
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(Error::Domain(format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                if dist[i * n + j] != dist[j * n + i] || !(dist[i * n + j] >= 0.0) {
                    return Err(Error::Domain(format!("asymmetric or negative distance at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, dist, weights, root })
    }

    pub fn point() -> Self {
        Self { n: 1, dist: vec![0.0], weights: vec![1.0], root: 0 }
    }

    /// Subspace of graph vertices with graph distances (one BFS per point).
    pub fn from_graph(graph: &Graph, points: &[usize], weights: Vec<f64>, root: usize) -> Result<Self> {
        let n = points.len();
        let mut dist = vec![0.0; n * n];
        for (i, &p) in points.iter().enumerate() {
            let d = graph_distance(graph, &[p])?;
            for (j, &q) in points.iter().enumerate() {
                dist[i * n + j] = d[q] as f64;
            }
        }
        Self::new(dist, weights, root)
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            dist: self.dist.iter().map(|d| d * factor).collect(),
            weights: self.weights.clone(),
            root: self.root,
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), self.n);
        self.weights = weights;
        self
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    /// Count of violated triangle inequalities among `samples` random triples.
    pub fn triangle_violations<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> usize {
        (0..samples)
            .filter(|_| {
                let (a, b, c) = (rng.random_range(0..self.n), rng.random_range(0..self.n), rng.random_range(0..self.n));
                self.d(a, c) > self.d(a, b) + self.d(b, c) + 1e-9
            })
            .count()
    }

    /// Header, weights line, then one row of the matrix per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("# mm-space points={} root={}\n", self.n, self.root);
        let row = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        s.push_str(&row(&self.weights));
        s.push('\n');
        for i in 0..self.n {
            s.push_str(&row(&self.dist[i * self.n..(i + 1) * self.n]));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Domain("empty space file".into()))?;
        let field = |key: &str| -> Result<usize> {
            header
                .split_whitespace()
                .find_map(|w| w.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Domain(format!("header lacks {key}")))
        };
        let (n, root) = (field("points")?, field("root")?);
        let parse = |l: &str| -> Result<Vec<f64>> {
            l.split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| Error::Domain(format!("bad number {x:?}"))))
                .collect()
        };
        let weights = parse(lines.next().unwrap_or(""))?;
        let mut dist = Vec::with_capacity(n * n);
        for _ in 0..n {
            dist.extend(parse(lines.next().unwrap_or(""))?);
        }
        if weights.len() != n {
            return Err(Error::Domain("weights line has the wrong length".into()));
        }
        Self::new(dist, weights, root)
    }
}

/// Relation between the points of two spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
}

impl Correspondence {
    pub fn identity(n: usize) -> Self {
        Self { pairs: (0..n).map(|i| (i, i)).collect() }
    }

    pub fn validate(&self, x: &FiniteMetricMeasureSpace, y: &FiniteMetricMeasureSpace) -> Result<()> {
        let mut cx = vec![false; x.n];
        let mut cy = vec![false; y.n];
        for &(a, b) in &self.pairs {
            if a >= x.n || b >= y.n {
                return Err(Error::InvalidCorrespondence(format!("pair ({a}, {b}) out of range")));
            }
            cx[a] = true;
            cy[b] = true;
        }
        if let Some(a) = cx.iter().position(|c| !c) {
            return Err(Error::InvalidCorrespondence(format!("point {a} of the first space is uncovered")));
        }
        if let Some(b) = cy.iter().position(|c| !c) {
            return Err(Error::InvalidCorrespondence(format!("point {b} of the second space is uncovered")));
        }
        if !self.pairs.contains(&(x.root, y.root)) {
            return Err(Error::InvalidCorrespondence("root pair missing".into()));
        }
        Ok(())
    }
}

/// `sup |d_X(x, x') - d_Y(y, y')|` over pairs of pairs.
pub fn distortion(corr: &Correspondence, x: &FiniteMetricMeasureSpace, y: &FiniteMetricMeasureSpace) -> Result<f64> {
    corr.validate(x, y)?;
    Ok(raw_distortion(&corr.pairs, x, y))
}

fn raw_distortion(pairs: &[(usize, usize)], x: &FiniteMetricMeasureSpace, y: &FiniteMetricMeasureSpace) -> f64 {
    let mut worst = 0.0f64;
    for (i, &(a, b)) in pairs.iter().enumerate() {
        for &(c, d) in &pairs[..i] {
            worst = worst.max((x.d(a, c) - y.d(b, d)).abs());
        }
    }
    worst
}

/// Largest space size for the exhaustive Gromov-Hausdorff search.
pub const GH_EXACT_LIMIT: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhBounds {
    /// Half the distortion of the heuristic correspondence.
    pub upper: f64,
    pub correspondence: Correspondence,
    /// Exact value when both spaces are small enough.
    pub exact: Option<f64>,
}

/// Greedy root-distance profile matching, in both directions.
pub fn greedy_correspondence(x: &FiniteMetricMeasureSpace, y: &FiniteMetricMeasureSpace) -> Correspondence {
    let closest = |a: &FiniteMetricMeasureSpace, b: &FiniteMetricMeasureSpace, i: usize| -> usize {
        let target = a.d(a.root, i);
        (0..b.n).min_by(|&p, &q| (b.d(b.root, p) - target).abs().total_cmp(&(b.d(b.root, q) - target).abs())).unwrap()
    };
    let mut pairs = vec![(x.root, y.root)];
    pairs.extend((0..x.n).filter(|&i| i != x.root).map(|i| (i, closest(x, y, i))));
    pairs.extend((0..y.n).filter(|&j| j != y.root).map(|j| (closest(y, x, j), j)));
    pairs.sort_unstable();
    pairs.dedup();
    Correspondence { pairs }
}

pub fn gh_bounds(x: &FiniteMetricMeasureSpace, y: &FiniteMetricMeasureSpace, exact: bool) -> Result<GhBounds> {
    if exact && (x.n > GH_EXACT_LIMIT || y.n > GH_EXACT_LIMIT) {
        return Err(Error::SizeLimit(format!(
            "exact Gromov-Hausdorff search is limited to {GH_EXACT_LIMIT} points per space"
        )));
    }
    let correspondence = greedy_correspondence(x, y);
    let upper = raw_distortion(&correspondence.pairs, x, y) / 2.0;
    let exact = exact.then(|| gh_exact(x, y, upper * 2.0) / 2.0);
    Ok(GhBounds { upper: exact.map_or(upper, |e| e.min(upper)), correspondence, exact })
}

/// Minimal distortion over correspondences containing the root pair, by
/// branch and bound over a map `X -> Y` followed by a map `Y -> X`.
fn gh_exact(x: &FiniteMetricMeasureSpace, y: &FiniteMetricMeasureSpace, initial: f64) -> f64 {
    struct Search<'a> {
        x: &'a FiniteMetricMeasureSpace,
        y: &'a FiniteMetricMeasureSpace,
        best: f64,
        pairs: Vec<(usize, usize)>,
    }
    impl Search<'_> {
        fn go(&mut self, step: usize, current: f64) {
            if current >= self.best {
                return;
            }
            let (nx, ny) = (self.x.n, self.y.n);
            if step == nx + ny {
                self.best = current;
                return;
            }
            let options: Vec<(usize, usize)> = if step < nx {
                let a = step;
                if a == self.x.root {
                    vec![(a, self.y.root)]
                } else {
                    (0..ny).map(|b| (a, b)).collect()
                }
            } else {
                let b = step - nx;
                if b == self.y.root {
                    vec![(self.x.root, b)]
                } else {
                    (0..nx).map(|a| (a, b)).collect()
                }
            };
            for (a, b) in options {
                let mut worst = current;
                for &(c, d) in &self.pairs {
                    worst = worst.max((self.x.d(a, c) - self.y.d(b, d)).abs());
                }
                self.pairs.push((a, b));
                self.go(step + 1, worst);
                self.pairs.pop();
            }
        }
    }
    let mut s = Search { x, y, best: initial + 1e-12, pairs: Vec::new() };
    s.go(0, 0.0);
    s.best.min(initial)
}

/// Dinic maximum flow on a small dense network with real capacities.
struct FlowNetwork {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
    next: Vec<usize>,
}

impl FlowNetwork {
    fn new(n: usize) -> Self {
        Self { head: vec![usize::MAX; n], to: Vec::new(), cap: Vec::new(), next: Vec::new() }
    }

    fn add(&mut self, a: usize, b: usize, c: f64) {
        for (u, v, w) in [(a, b, c), (b, a, 0.0)] {
            self.to.push(v);
            self.cap.push(w);
            self.next.push(self.head[u]);
            self.head[u] = self.to.len() - 1;
        }
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.head.len();
        let eps = 1e-15;
        let mut total = 0.0;
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut q = std::collections::VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                let mut e = self.head[u];
                while e != usize::MAX {
                    if self.cap[e] > eps && level[self.to[e]] == usize::MAX {
                        level[self.to[e]] = level[u] + 1;
                        q.push_back(self.to[e]);
                    }
                    e = self.next[e];
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut it = self.head.clone();
            loop {
                let f = self.augment(s, t, f64::INFINITY, &level, &mut it, eps);
                if f <= eps {
                    break;
                }
                total += f;
            }
        }
    }

    fn augment(&mut self, u: usize, t: usize, limit: f64, level: &[usize], it: &mut [usize], eps: f64) -> f64 {
        if u == t {
            return limit;
        }
        while it[u] != usize::MAX {
            let e = it[u];
            let v = self.to[e];
            if self.cap[e] > eps && level[v] == level[u] + 1 {
                let f = self.augment(v, t, limit.min(self.cap[e]), level, it, eps);
                if f > eps {
                    self.cap[e] -= f;
                    self.cap[e ^ 1] += f;
                    return f;
                }
            }
            it[u] = self.next[e];
        }
        0.0
    }
}

/// Whether `mu(A) <= nu(A^eps) + eps` for every set `A` (closed fattening),
/// with `dist[i][j]` the distance from the `i`-th atom of `mu` to the `j`-th of `nu`.
pub fn prohorov_one_sided_feasible(mu: &[f64], nu: &[f64], dist: &dyn Fn(usize, usize) -> f64, eps: f64) -> bool {
    let (a, b) = (mu.len(), nu.len());
    let (s, t) = (a + b, a + b + 1);
    let mut net = FlowNetwork::new(a + b + 2);
    let big: f64 = mu.iter().sum::<f64>() + nu.iter().sum::<f64>() + 1.0;
    for i in 0..a {
        net.add(s, i, mu[i]);
        for j in 0..b {
            if dist(i, j) <= eps {
                net.add(i, a + j, big);
            }
        }
    }
    for j in 0..b {
        net.add(a + j, t, nu[j]);
    }
    let total: f64 = mu.iter().sum();
    net.max_flow(s, t) >= total - eps - 1e-12
}

pub const PROHOROV_TOLERANCE: f64 = 1e-9;

/// Prohorov distance between two finite measures given their cross distances.
pub fn prohorov_distance(mu: &[f64], nu: &[f64], dist: &dyn Fn(usize, usize) -> f64) -> f64 {
    let feasible = |eps: f64| {
        prohorov_one_sided_feasible(mu, nu, dist, eps) && prohorov_one_sided_feasible(nu, mu, &|j, i| dist(i, j), eps)
    };
    let mut max_d: f64 = 0.0;
    for i in 0..mu.len() {
        for j in 0..nu.len() {
            max_d = max_d.max(dist(i, j));
        }
    }
    let mut hi = max_d.max(mu.iter().sum::<f64>().max(nu.iter().sum::<f64>()));
    if !feasible(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    if feasible(0.0) {
        return 0.0;
    }
    while hi - lo > PROHOROV_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhpUpper {
    pub hausdorff: f64,
    pub prohorov: f64,
    pub root: f64,
    pub distortion: f64,
    pub total: f64,
}

/// Upper bound on the pointed GHP distance from the canonical embedding of a
/// correspondence: `D(x, y) = inf_R d_X(x, u) + dis/2 + d_Y(v, y)`.
pub fn ghp_upper(
    x: &FiniteMetricMeasureSpace,
    y: &FiniteMetricMeasureSpace,
    corr: &Correspondence,
) -> Result<GhpUpper> {
    let dis = distortion(corr, x, y)?;
    let mut cross = vec![f64::INFINITY; x.n * y.n];
    for &(u, v) in &corr.pairs {
        for i in 0..x.n {
            let dxu = x.d(i, u);
            for j in 0..y.n {
                let c = &mut cross[i * y.n + j];
                *c = c.min(dxu + y.d(v, j));
            }
        }
    }
    for c in &mut cross {
        *c += dis / 2.0;
    }
    let dist = |i: usize, j: usize| cross[i * y.n + j];
    let hx = (0..x.n).map(|i| (0..y.n).map(|j| dist(i, j)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
    let hy = (0..y.n).map(|j| (0..x.n).map(|i| dist(i, j)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
    let hausdorff = hx.max(hy);
    let prohorov = prohorov_distance(&x.weights, &y.weights, &dist);
    let root = dist(x.root, y.root);
    Ok(GhpUpper { hausdorff, prohorov, root, distortion: dis, total: hausdorff + prohorov + root })
}

/// Vertices attached to each coding label: one vertex for a black label,
/// the decoration's vertices for a white label.
#[derive(Debug, Clone)]
pub struct CodingLabels {
    pub groups: Vec<Vec<usize>>,
    pub root: usize,
}

/// Coding correspondence restricted to sampled times: time `s` is paired with
/// the vertices of label `floor(s n)` (the root once `s n` passes the last
/// label). At most `per_label` vertices, chosen uniformly, are kept per white label.
pub fn coding_correspondence<R: Rng + ?Sized>(
    labels: &CodingLabels,
    times: &[f64],
    n: f64,
    per_label: Option<usize>,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if n <= 0.0 {
        return Err(Error::InvalidCorrespondence("scale must be positive".into()));
    }
    let mut pairs = Vec::new();
    for (j, &s) in times.iter().enumerate() {
        let i = (s * n).floor();
        let group: &[usize] = if i < 0.0 || i as usize >= labels.groups.len() {
            std::slice::from_ref(&labels.root)
        } else {
            &labels.groups[i as usize]
        };
        if group.is_empty() {
            return Err(Error::InvalidCorrespondence(format!("label {i} has no vertices")));
        }
        match per_label {
            Some(cap) if group.len() > cap => {
                for _ in 0..cap {
                    pairs.push((group[rng.random_range(0..group.len())], j));
                }
            }
            _ => pairs.extend(group.iter().map(|&v| (v, j))),
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_parallel_values() {
        let r = effective_resistance(&Graph::cycle(4), &[(0, 1), (0, 2)]).unwrap();
        assert!((r[0] - 0.75).abs() < 1e-12 && (r[1] - 1.0).abs() < 1e-12);
        let r = effective_resistance(&Graph::complete(3), &[(0, 2)]).unwrap();
        assert!((r[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn diameters() {
        assert_eq!(diameter(&Graph::path(7)).unwrap(), 6);
        assert_eq!(diameter(&Graph::cycle(9)).unwrap(), 4);
        assert_eq!(diameter(&Graph::complete(5)).unwrap(), 1);
    }

    #[test]
    fn prohorov_two_atoms() {
        let d = |_: usize, _: usize| 0.5;
        assert!((prohorov_distance(&[1.0], &[1.0], &d) - 0.5).abs() < 1e-8);
    }
}
