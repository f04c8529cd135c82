//! Two-type plane trees, looptrees and their coding by lattice excursions.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excursions::{LatticePath, PathKind};
use crate::model::OffspringLaws;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Colour {
    Black,
    White,
}

/// Rooted two-type plane tree with flat storage.
///
/// Vertex `0` is the root. Colours alternate with depth, black at even depth.
/// Each vertex carries its coding label: following the contour, black vertices
/// are labelled on their first visit and white vertices on their last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoTypeTree {
    parent: Vec<usize>,
    child_start: Vec<usize>,
    child_list: Vec<usize>,
    depth: Vec<u32>,
    labels: Vec<usize>,
}

impl TwoTypeTree {
    /// Build from ordered child lists. Vertex `0` must be the root and every
    /// other vertex must appear in exactly one list.
    pub fn from_children(children: &[Vec<usize>]) -> Result<Self> {
        let n = children.len();
        if n == 0 {
            return Err(Error::InvalidTree("empty vertex set".into()));
        }
        let mut parent = vec![NONE; n];
        let mut child_start = Vec::with_capacity(n + 1);
        let mut child_list = Vec::with_capacity(n.saturating_sub(1));
        for (u, cs) in children.iter().enumerate() {
            child_start.push(child_list.len());
            for &c in cs {
                if c >= n || c == 0 {
                    return Err(Error::InvalidTree(format!("vertex {u} has invalid child {c}")));
                }
                if parent[c] != NONE {
                    return Err(Error::InvalidTree(format!("vertex {c} has two parents")));
                }
                parent[c] = u;
                child_list.push(c);
            }
        }
        child_start.push(child_list.len());
        let mut tree = Self { parent, child_start, child_list, depth: vec![0; n], labels: vec![0; n] };
        tree.finish()?;
        Ok(tree)
    }

    fn finish(&mut self) -> Result<()> {
        let n = self.parent.len();
        // Depths by a preorder walk; also detects unreachable vertices.
        let mut seen = 0usize;
        let mut stack = vec![0usize];
        while let Some(u) = stack.pop() {
            seen += 1;
            let d = self.depth[u] + 1;
            for i in (self.child_start[u]..self.child_start[u + 1]).rev() {
                let c = self.child_list[i];
                self.depth[c] = d;
                stack.push(c);
            }
        }
        if seen != n {
            return Err(Error::InvalidTree(format!("{} vertices unreachable from the root", n - seen)));
        }
        self.labels = self.compute_labels();
        Ok(())
    }

    fn compute_labels(&self) -> Vec<usize> {
        let n = self.len();
        let mut labels = vec![0; n];
        let mut next = 0usize;
        // (vertex, next child index)
        let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
        while let Some(top) = stack.last_mut() {
            let (u, i) = *top;
            top.1 += 1;
            if i == 0 && self.colour(u) == Colour::Black {
                labels[u] = next;
                next += 1;
            }
            let cs = self.children(u);
            if i < cs.len() {
                stack.push((cs[i], 0));
            } else {
                if self.colour(u) == Colour::White {
                    labels[u] = next;
                    next += 1;
                }
                stack.pop();
            }
        }
        labels
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent(&self, u: usize) -> Option<usize> {
        let p = self.parent[u];
        (p != NONE).then_some(p)
    }

    pub fn children(&self, u: usize) -> &[usize] {
        &self.child_list[self.child_start[u]..self.child_start[u + 1]]
    }

    pub fn num_children(&self, u: usize) -> usize {
        self.child_start[u + 1] - self.child_start[u]
    }

    pub fn depth(&self, u: usize) -> u32 {
        self.depth[u]
    }

    pub fn colour(&self, u: usize) -> Colour {
        if self.depth[u] % 2 == 0 {
            Colour::Black
        } else {
            Colour::White
        }
    }

    pub fn label(&self, u: usize) -> usize {
        self.labels[u]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Vertex ids indexed by label.
    pub fn by_label(&self) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for (u, &l) in self.labels.iter().enumerate() {
            out[l] = u;
        }
        out
    }

    pub fn black_count(&self) -> usize {
        (0..self.len()).filter(|&u| self.colour(u) == Colour::Black).count()
    }

    pub fn has_white_leaf(&self) -> bool {
        (0..self.len()).any(|u| self.colour(u) == Colour::White && self.num_children(u) == 0)
    }

    fn require_no_white_leaf(&self) -> Result<()> {
        match (0..self.len()).find(|&u| self.colour(u) == Colour::White && self.num_children(u) == 0) {
            Some(u) => Err(Error::InvalidTree(format!("white vertex {u} is a leaf"))),
            None => Ok(()),
        }
    }

    /// Ulam-Harris address (1-based child indices from the root).
    pub fn address(&self, mut u: usize) -> Vec<u32> {
        let mut out = Vec::new();
        while let Some(p) = self.parent(u) {
            let i = self.children(p).iter().position(|&c| c == u).unwrap();
            out.push(i as u32 + 1);
            u = p;
        }
        out.reverse();
        out
    }

    /// Child lists, in order.
    pub fn to_children(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|u| self.children(u).to_vec()).collect()
    }

    /// Canonical form of the plane tree: child counts in preorder.
    pub fn shape(&self) -> Vec<usize> {
        depth_first(self).iter().map(|&u| self.num_children(u)).collect()
    }
}

/// Decode a tree excursion; vertex ids equal coding labels.
pub fn tree_from_excursion(path: &LatticePath) -> Result<TwoTypeTree> {
    if path.kind() != PathKind::Tree {
        return Err(Error::Domain("tree coding needs an excursion ending at 1".into()));
    }
    decode(path.values())
}

fn decode(z: &[i64]) -> Result<TwoTypeTree> {
    let n = z.len() - 1;
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    // last_class[h] = most recent black vertex at level h.
    let mut last_class: Vec<usize> = vec![NONE, 0];
    for i in 1..=n {
        let (from, to) = (z[i - 1], z[i]);
        if to == from + 1 {
            last_class.push(i);
        } else {
            let h = to as usize;
            let parent = last_class[h];
            children[i] = last_class[h + 1..].to_vec();
            children[parent].push(i);
            last_class.truncate(h + 1);
        }
    }
    let tree = TwoTypeTree::from_children(&children)?;
    debug_assert!(tree.labels.iter().enumerate().all(|(u, &l)| u == l));
    Ok(tree)
}

/// Coding excursion of a tree with no white leaves.
pub fn excursion_from_tree(tree: &TwoTypeTree) -> Result<LatticePath> {
    tree.require_no_white_leaf()?;
    let order = tree.by_label();
    let mut z = Vec::with_capacity(tree.len());
    z.push(1i64);
    for &u in &order[1..] {
        let step = match tree.colour(u) {
            Colour::Black => 1,
            Colour::White => -(tree.num_children(u) as i64),
        };
        z.push(z.last().unwrap() + step);
    }
    LatticePath::tree(z)
}

/// Looptree: one loop through each white vertex's parent and children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Looptree {
    /// Tree vertex of each looptree vertex.
    pub vertices: Vec<usize>,
    /// Looptree index of each tree vertex (`usize::MAX` for white vertices).
    pub index_of: Vec<usize>,
    /// Loops as cyclic vertex sequences `[parent, child_1, .., child_k]`.
    pub loops: Vec<Vec<usize>>,
    /// Tree vertex of the white vertex owning each loop.
    pub loop_owner: Vec<usize>,
    pub extended: bool,
}

impl Looptree {
    pub fn root(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edge multiset: consecutive loop vertices, closing back to the parent.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for lp in &self.loops {
            for j in 0..lp.len() {
                out.push((lp[j], lp[(j + 1) % lp.len()]));
            }
        }
        out
    }
}

pub fn looptree_from_tree(tree: &TwoTypeTree) -> Result<Looptree> {
    tree.require_no_white_leaf()?;
    Ok(build_looptree(tree, false))
}

fn build_looptree(tree: &TwoTypeTree, extended: bool) -> Looptree {
    let mut vertices = Vec::new();
    let mut index_of = vec![NONE; tree.len()];
    for u in depth_first(tree) {
        if tree.colour(u) == Colour::Black {
            index_of[u] = vertices.len();
            vertices.push(u);
        }
    }
    let mut loops = Vec::new();
    let mut loop_owner = Vec::new();
    for u in tree.by_label() {
        if tree.colour(u) == Colour::White {
            let mut lp = vec![index_of[tree.parent(u).unwrap()]];
            lp.extend(tree.children(u).iter().map(|&c| index_of[c]));
            loops.push(lp);
            loop_owner.push(u);
        }
    }
    Looptree { vertices, index_of, loops, loop_owner, extended }
}

/// Quotient of `{0..n}` under `i ~ j` iff `Z_i = Z_j = min Z` between them,
/// with an edge between the classes of `i - 1` and `i` for every step.
///
/// Classes are named by their smallest time.
pub fn excursion_quotient(path: &LatticePath) -> (Vec<usize>, Vec<(usize, usize)>) {
    let z = path.values();
    let mut class = vec![0usize; z.len()];
    // Stack of (level, representative) with increasing levels.
    let mut stack: Vec<(i64, usize)> = Vec::new();
    for (i, &v) in z.iter().enumerate() {
        while let Some(&(lvl, _)) = stack.last() {
            if lvl > v {
                stack.pop();
            } else {
                break;
            }
        }
        match stack.last() {
            Some(&(lvl, rep)) if lvl == v => class[i] = rep,
            _ => {
                class[i] = i;
                stack.push((v, i));
            }
        }
    }
    let edges = (1..z.len()).map(|i| (class[i - 1], class[i])).collect();
    (class, edges)
}

/// Extended excursion `Z*`, its tree and looptree, with the root-loop data.
#[derive(Debug, Clone)]
pub struct ExtendedStructures {
    /// `Z*` shifted to start at 1: ramp `1..=k+1` followed by `Z + k + 1`.
    pub path: LatticePath,
    pub tree: TwoTypeTree,
    pub looptree: Looptree,
    /// `k = -Z_tau`.
    pub k: usize,
    /// `l = Z_{tau - 1}`.
    pub l: usize,
    /// Tree vertex of the white vertex owning the root loop.
    pub root_white: usize,
}

impl ExtendedStructures {
    /// Tree vertex of original label `i` (so `i = 0` is the cluster root).
    pub fn vertex_of_label(&self, i: usize) -> usize {
        i + self.k + 1
    }

    pub fn root_loop_size(&self) -> usize {
        self.k + self.l + 1
    }

    /// Tree vertices of the ramp (`k + 1` of them, white on the root face).
    pub fn ramp(&self) -> std::ops::Range<usize> {
        0..self.k + 1
    }

    /// Root loop in tree vertices: positions `0..=k` are the ramp,
    /// position `k + 1` is the cluster root, then the remaining `l - 1` blacks.
    pub fn root_loop(&self) -> Vec<usize> {
        let mut lp = vec![self.tree.parent(self.root_white).unwrap()];
        lp.extend_from_slice(self.tree.children(self.root_white));
        lp
    }
}

pub fn extended_structures(path: &LatticePath) -> Result<ExtendedStructures> {
    if path.kind() != PathKind::Peeling {
        return Err(Error::Domain("extended structures need a peeling excursion".into()));
    }
    let z = path.values();
    let tau = path.len();
    let k = (-z[tau]) as usize;
    let l = z[tau - 1] as usize;
    let shift = k as i64 + 1;
    let mut star = Vec::with_capacity(tau + k + 2);
    star.extend((1..=k as i64 + 1).map(|v| v));
    star.extend(z.iter().map(|v| v + shift));
    let path_star = LatticePath::tree(star)?;
    let tree = decode(path_star.values())?;
    let looptree = build_looptree(&tree, true);
    let root_white = tree.len() - 1;
    debug_assert_eq!(tree.num_children(root_white), k + l);
    Ok(ExtendedStructures { path: path_star, tree, looptree, k, l, root_white })
}

/// Preorder of all vertices.
pub fn depth_first(tree: &TwoTypeTree) -> Vec<usize> {
    let mut out = Vec::with_capacity(tree.len());
    let mut stack = vec![0usize];
    while let Some(u) = stack.pop() {
        out.push(u);
        stack.extend(tree.children(u).iter().rev());
    }
    out
}

/// Depth-first order, its height sequence, and the coding-label order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Orderings {
    pub depth_first: Vec<usize>,
    pub heights: Vec<u32>,
    pub coding: Vec<usize>,
}

pub fn orderings(tree: &TwoTypeTree) -> Orderings {
    let depth_first = depth_first(tree);
    let heights = depth_first.iter().map(|&u| tree.depth(u)).collect();
    Orderings { depth_first, heights, coding: tree.by_label() }
}

/// Log-probability of a tree under the two-type Galton-Watson law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeLogProbability {
    pub value: f64,
    /// Set when the tree has probability zero for structural reasons.
    pub structural_zero: bool,
}

pub fn tree_probability(tree: &TwoTypeTree, laws: &OffspringLaws) -> TreeLogProbability {
    if tree.has_white_leaf() {
        return TreeLogProbability { value: f64::NEG_INFINITY, structural_zero: true };
    }
    let value = (0..tree.len())
        .map(|u| {
            let k = tree.num_children(u) as u64;
            match tree.colour(u) {
                Colour::Black => laws.ln_bullet_pmf(k),
                Colour::White => laws.ln_circ_pmf(k),
            }
        })
        .sum();
    TreeLogProbability { value, structural_zero: false }
}

/// Log-probability that the reversed walk, started at 1, follows the time
/// reversal of `path` and then steps to 0.
pub fn reversed_walk_log_probability(path: &LatticePath, laws: &OffspringLaws) -> Result<f64> {
    if path.kind() != PathKind::Tree {
        return Err(Error::Domain("expected a tree excursion".into()));
    }
    let s = laws.bullet_param;
    let ln_down = s.ln();
    let mut total = ln_down; // final step from 1 to 0
    for step in path.increments() {
        total += if step == 1 { ln_down } else { (1.0 - s).ln() + laws.ln_circ_pmf(step.unsigned_abs()) };
    }
    Ok(total)
}

/// Outcome of a size-capped Galton-Watson draw.
#[derive(Debug, Clone)]
pub enum GwSample {
    Complete(TwoTypeTree),
    /// The tree exceeded the cap; it was discarded after `generated` vertices.
    Truncated {
        generated: usize,
    },
}

impl GwSample {
    pub fn complete(self) -> Option<TwoTypeTree> {
        match self {
            GwSample::Complete(t) => Some(t),
            GwSample::Truncated { .. } => None,
        }
    }
}

pub const DEFAULT_SIZE_CAP: usize = 10_000_000;

/// Two-type Galton-Watson tree, generated breadth first.
pub fn sample_two_type_gw<R: Rng + ?Sized>(laws: &OffspringLaws, size_cap: usize, rng: &mut R) -> GwSample {
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut white = vec![false];
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let k = if white[u] { laws.sample_circ(rng) } else { laws.sample_bullet(rng) } as usize;
        if children.len() + k > size_cap {
            return GwSample::Truncated { generated: children.len() + k };
        }
        for _ in 0..k {
            let c = children.len();
            children.push(Vec::new());
            white.push(!white[u]);
            children[u].push(c);
            queue.push_back(c);
        }
    }
    GwSample::Complete(TwoTypeTree::from_children(&children).expect("sampled trees are valid"))
}

/// Two-type Kesten tree truncated at height `h`.
#[derive(Debug, Clone)]
pub struct KestenTree {
    pub children: Vec<Vec<usize>>,
    pub parent: Vec<usize>,
    pub depth: Vec<usize>,
    pub special: Vec<bool>,
    pub height: usize,
}

impl KestenTree {
    /// Special vertices `v_0, .., v_h`.
    pub fn spine(&self) -> Vec<usize> {
        let mut out = vec![0];
        let mut u = 0;
        while let Some(&c) = self.children[u].iter().find(|&&c| self.special[c]) {
            out.push(c);
            u = c;
        }
        out
    }

    pub fn colour(&self, u: usize) -> Colour {
        if self.depth[u] % 2 == 0 {
            Colour::Black
        } else {
            Colour::White
        }
    }

    pub fn generation(&self, g: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.depth.len()).filter(move |&u| self.depth[u] == g)
    }
}

pub fn sample_kesten<R: Rng + ?Sized>(laws: &OffspringLaws, h: usize, rng: &mut R) -> KestenTree {
    let mut t =
        KestenTree { children: vec![Vec::new()], parent: vec![NONE], depth: vec![0], special: vec![true], height: h };
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        if t.depth[u] >= h {
            continue;
        }
        let white = t.depth[u] % 2 == 1;
        let k = match (white, t.special[u]) {
            (false, false) => laws.sample_bullet(rng),
            (true, false) => laws.sample_circ(rng),
            (false, true) => laws.sample_bullet_biased(rng),
            (true, true) => laws.sample_circ_biased(rng),
        } as usize;
        let chosen = if t.special[u] { rng.random_range(0..k) } else { NONE };
        for j in 0..k {
            let c = t.parent.len();
            t.children.push(Vec::new());
            t.parent.push(u);
            t.depth.push(t.depth[u] + 1);
            t.special.push(j == chosen);
            t.children[u].push(c);
            queue.push_back(c);
        }
    }
    t
}

/// Newline-delimited fixture format: a header line, then one record per
/// vertex `id parent colour label` with `-` as the root's parent.
pub fn write_tree(tree: &TwoTypeTree) -> String {
    let mut out = format!("# two-type-tree vertices={}\n", tree.len());
    for u in 0..tree.len() {
        let p = tree.parent(u).map_or("-".to_string(), |p| p.to_string());
        let c = match tree.colour(u) {
            Colour::Black => 'B',
            Colour::White => 'W',
        };
        writeln!(out, "{u} {p} {c} {}", tree.label(u)).unwrap();
    }
    out
}

/// Parse [`write_tree`] output. Siblings are ordered by label; colours and
/// labels are checked against the reconstructed tree.
pub fn read_tree(text: &str) -> Result<TwoTypeTree> {
    let bad = |line: usize, what: &str| Error::InvalidTree(format!("line {line}: {what}"));
    let mut records = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(bad(ln + 1, "expected 4 fields"));
        }
        let id: usize = f[0].parse().map_err(|_| bad(ln + 1, "bad id"))?;
        let parent: Option<usize> =
            if f[1] == "-" { None } else { Some(f[1].parse().map_err(|_| bad(ln + 1, "bad parent"))?) };
        let colour = match f[2] {
            "B" => Colour::Black,
            "W" => Colour::White,
            _ => return Err(bad(ln + 1, "bad colour")),
        };
        let label: usize = f[3].parse().map_err(|_| bad(ln + 1, "bad label"))?;
        records.push((id, parent, colour, label));
    }
    let n = records.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut label = vec![0; n];
    for &(id, parent, _, l) in &records {
        if id >= n {
            return Err(Error::InvalidTree(format!("vertex id {id} out of range")));
        }
        label[id] = l;
        match parent {
            Some(p) if p < n => children[p].push(id),
            Some(p) => return Err(Error::InvalidTree(format!("parent {p} out of range"))),
            None if id != 0 => return Err(Error::InvalidTree("root must be vertex 0".into())),
            None => {}
        }
    }
    for cs in &mut children {
        cs.sort_by_key(|&c| label[c]);
    }
    let tree = TwoTypeTree::from_children(&children)?;
    for &(id, _, colour, l) in &records {
        if tree.colour(id) != colour || tree.label(id) != l {
            return Err(Error::InvalidTree(format!("vertex {id}: colour or label inconsistent")));
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_trees() {
        let t = tree_from_excursion(&LatticePath::tree(vec![1]).unwrap()).unwrap();
        assert_eq!(t.len(), 1);
        let t = tree_from_excursion(&LatticePath::tree(vec![1, 2, 1]).unwrap()).unwrap();
        assert_eq!(t.to_children(), vec![vec![2], vec![], vec![1]]);
        assert_eq!(t.colour(2), Colour::White);
    }

    #[test]
    fn extended_root_loop_sizes() {
        let e = extended_structures(&LatticePath::peeling(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(e.root_loop().len(), 2);
        let e = extended_structures(&LatticePath::peeling(vec![1, -2]).unwrap()).unwrap();
        assert_eq!(e.root_loop().len(), 4);
        assert_eq!(e.root_loop()[e.k + 1], e.vertex_of_label(0));
    }
}
