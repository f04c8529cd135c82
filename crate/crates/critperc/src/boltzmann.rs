//! Boltzmann triangulations of polygons, their percolation, and an exhaustive
//! enumeration oracle.
//!
//! A triangulation of the `m`-gon is stored as a half-edge map. The first `m`
//! darts are the outer-face darts `o_0..o_{m-1}`: `o_j` runs from boundary
//! vertex `j + 1` to boundary vertex `j` and `next(o_j) = o_{j-1}`. Boundary
//! vertices are `0..m`, internal vertices follow. The map is rooted at `o_0`.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coding::Colour;
use crate::error::{Error, Result};
use crate::model::{ln_peeling_unchecked, ModelParams, ALPHA_MIN};

const NONE: u32 = u32::MAX;

/// Largest admissible vertex weight.
pub const Q_CRITICAL: f64 = 2.0 / 27.0;

/// `alpha` in `[2/3, 1)` with `alpha^2 (1 - alpha) / 2 = q`.
pub fn alpha_for_weight(q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= Q_CRITICAL) {
        return Err(Error::Domain(format!("vertex weight q = {q} outside (0, 2/27]")));
    }
    let f = |a: f64| a * a * (1.0 - a) / 2.0 - q;
    let (mut lo, mut hi) = (ALPHA_MIN, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // f is decreasing on [2/3, 1].
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Value with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: f64,
    pub error: f64,
}

/// Partition functions `Z_m(q)` of loopless triangulations of the `m`-gon.
///
/// Evaluated through `Z_{m+1} = p_m / (2 r^m)` with `r = q / alpha`, and
/// validated against the vertex-count series in the tests.
#[derive(Debug, Clone)]
pub struct PartitionFunction {
    alpha: f64,
    q: f64,
    ln_r: f64,
    ln_p: Vec<f64>,
    /// Transition probabilities per hole size, in scan order.
    moves: Vec<Vec<f64>>,
}

const LN_P_TABLE: usize = 4096;
const MOVE_TABLE: usize = 256;

impl PartitionFunction {
    pub fn new(params: &ModelParams) -> Self {
        Self::with_alpha(params.alpha)
    }

    pub fn for_weight(q: f64) -> Result<Self> {
        Ok(Self::with_alpha(alpha_for_weight(q)?))
    }

    fn with_alpha(alpha: f64) -> Self {
        let q = alpha * alpha * (1.0 - alpha) / 2.0;
        let ln_p: Vec<f64> =
            (0..=LN_P_TABLE as u64).map(|m| if m == 0 { f64::NAN } else { ln_peeling_unchecked(alpha, m) }).collect();
        let mut pf = Self { alpha, q, ln_r: (q / alpha).ln(), ln_p, moves: Vec::new() };
        pf.moves = (0..=MOVE_TABLE).map(|m| if m < 2 { Vec::new() } else { pf.compute_moves(m) }).collect();
        pf
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weight(&self) -> f64 {
        self.q
    }

    fn ln_p(&self, m: usize) -> f64 {
        match self.ln_p.get(m) {
            Some(v) => *v,
            None => ln_peeling_unchecked(self.alpha, m as u64),
        }
    }

    /// `ln Z_m` for `m >= 2`.
    pub fn ln_z(&self, m: usize) -> f64 {
        assert!(m >= 2, "polygons have at least two sides");
        self.ln_p(m - 1) - std::f64::consts::LN_2 - (m - 1) as f64 * self.ln_r
    }

    pub fn value(&self, m: usize) -> Result<Bounded> {
        if m < 2 {
            return Err(Error::Domain(format!("polygon perimeter {m} < 2")));
        }
        let value = self.ln_z(m).exp();
        if !value.is_finite() {
            return Err(Error::Domain(format!("Z_{m} overflows")));
        }
        // Log-gamma evaluation error grows mildly with m.
        let rel = 1e-13 * (1.0 + m as f64).ln().max(1.0);
        Ok(Bounded { value, error: rel * value })
    }

    /// `q d/dq ln Z_m`, the mean number of internal vertices.
    pub fn mean_internal_vertices(&self, m: usize) -> f64 {
        let a = self.alpha;
        let j = (m - 1) as f64;
        let dln_p = j * (-2.0 / (a * a)) / (2.0 / a - 2.0) + 3.0 * j / ((3.0 * a - 2.0) * j + 1.0);
        let dln_r = 1.0 / a - 1.0 / (1.0 - a);
        let dq_da = a * (2.0 - 3.0 * a) / 2.0;
        self.q * (dln_p - j * dln_r) / dq_da
    }

    /// Probability that a 2-gon is a single edge, `1 / Z_2`.
    fn glue_probability(&self) -> f64 {
        (-self.ln_z(2)).exp()
    }

    /// `P(new internal vertex)` for a hole of size `m`: `q Z_{m+1} / Z_m`.
    fn internal_probability(&self, m: usize) -> f64 {
        (self.alpha.ln() + self.ln_p(m) - self.ln_p(m - 1)).exp()
    }

    /// `P(split at j)`: `Z_j Z_{m+1-j} / Z_m`.
    fn split_probability(&self, m: usize, j: usize) -> f64 {
        (self.ln_p(j - 1) + self.ln_p(m - j) - std::f64::consts::LN_2 - self.ln_p(m - 1)).exp()
    }

    fn scan_order(m: usize) -> impl Iterator<Item = usize> {
        let (mut lo, mut hi) = (2usize, m - 1);
        let mut take_lo = true;
        std::iter::from_fn(move || {
            if lo > hi {
                return None;
            }
            let j = if take_lo {
                lo += 1;
                lo - 1
            } else {
                hi -= 1;
                hi + 1
            };
            take_lo = !take_lo;
            Some(j)
        })
    }

    fn compute_moves(&self, m: usize) -> Vec<f64> {
        if m == 2 {
            return vec![self.glue_probability()];
        }
        let mut out = vec![self.internal_probability(m)];
        out.extend(Self::scan_order(m).map(|j| self.split_probability(m, j)));
        out
    }

    /// `None` for a new internal vertex, `Some(j)` for a split at boundary
    /// vertex `j` (`Some(0)` glues a 2-gon).
    fn sample_move<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Option<usize> {
        let u: f64 = rng.random();
        if m == 2 {
            return if u < self.moves[2][0] { Some(0) } else { None };
        }
        if m <= MOVE_TABLE {
            let probs = &self.moves[m];
            let mut acc = probs[0];
            if u < acc {
                return None;
            }
            let mut last = 2;
            for (j, p) in Self::scan_order(m).zip(&probs[1..]) {
                acc += p;
                last = j;
                if u < acc {
                    return Some(j);
                }
            }
            return Some(last);
        }
        let mut acc = self.internal_probability(m);
        if u < acc {
            return None;
        }
        let mut last = 2;
        for j in Self::scan_order(m) {
            acc += self.split_probability(m, j);
            last = j;
            if u < acc {
                return Some(j);
            }
        }
        Some(last)
    }
}

/// `Z_m` evaluated at an arbitrary weight.
pub fn partition_function(m: usize, q: f64) -> Result<Bounded> {
    PartitionFunction::for_weight(q)?.value(m)
}

/// Exact counts `T(m, n)` of rooted loopless triangulations of the `m`-gon
/// with `n` internal vertices, `2 <= m <= max_m`, `n <= max_n`, from the
/// root-edge decomposition.
pub fn loopless_counts(max_m: usize, max_n: usize) -> Vec<Vec<u128>> {
    let width = max_m + max_n + 1;
    // t[m][n], computed by increasing n then decreasing m reach.
    let mut t = vec![vec![0u128; max_n + 1]; width + 1];
    for n in 0..=max_n {
        let top = width - n;
        for m in 2..=top {
            let mut v: u128 = if m == 2 && n == 0 { 1 } else { 0 };
            if n >= 1 && m + 1 <= width {
                v += t[m + 1][n - 1];
            }
            for j in 2..m {
                for n1 in 0..=n {
                    v += t[j][n1] * t[m - j + 1][n - n1];
                }
            }
            t[m][n] = v;
        }
    }
    t.truncate(max_m + 1);
    t
}

/// Half-edge triangulation of a polygon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriangulatedPolygon {
    pub next: Vec<u32>,
    pub twin: Vec<u32>,
    pub tail: Vec<u32>,
    pub boundary_len: usize,
    pub n_vertices: usize,
}

impl TriangulatedPolygon {
    pub fn num_internal(&self) -> usize {
        self.n_vertices - self.boundary_len
    }

    pub fn num_darts(&self) -> usize {
        self.next.len()
    }

    pub fn num_edges(&self) -> usize {
        self.next.len() / 2
    }

    pub fn num_faces(&self) -> usize {
        let n = self.num_darts();
        let mut seen = vec![false; n];
        let mut faces = 0;
        for d in 0..n {
            if !seen[d] {
                faces += 1;
                let mut x = d;
                while !seen[x] {
                    seen[x] = true;
                    x = self.next[x] as usize;
                }
            }
        }
        faces
    }

    /// Edges as vertex pairs, one per undirected edge (multi-edges repeated).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_darts()).filter_map(move |d| {
            let t = self.twin[d] as usize;
            (d < t).then(|| (self.tail[d] as usize, self.tail[t] as usize))
        })
    }

    /// Degree of every vertex counted with edge multiplicity.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_vertices];
        for (a, b) in self.edges() {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Structural check: involution, triangle faces, simple boundary,
    /// looplessness, consistent vertex labels and Euler's formula.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_darts();
        let m = self.boundary_len;
        let bad = |s: String| Err(Error::InvalidMap(s));
        if self.twin.len() != n || self.tail.len() != n || m < 2 || n < m {
            return bad("array lengths inconsistent".into());
        }
        for d in 0..n {
            let t = self.twin[d] as usize;
            if t >= n || self.twin[t] as usize != d || t == d {
                return bad(format!("twin is not a fixed-point-free involution at dart {d}"));
            }
            if self.tail[self.next[d] as usize] != self.tail[t] {
                return bad(format!("dart {d}: head and next tail disagree"));
            }
            if self.tail[d] == self.tail[t] {
                return bad(format!("dart {d} is a loop"));
            }
        }
        for j in 0..m {
            if self.next[j] as usize != (j + m - 1) % m {
                return bad(format!("outer face broken at dart {j}"));
            }
            if self.tail[j] as usize != (j + 1) % m {
                return bad(format!("boundary vertex labels broken at dart {j}"));
            }
        }
        for d in m..n {
            let a = self.next[d] as usize;
            let b = self.next[a] as usize;
            if a < m || b < m || self.next[b] as usize != d || a == d {
                return bad(format!("face through dart {d} is not a triangle"));
            }
        }
        // Vertices are the orbits of next o twin; they must match the labels.
        let mut orbit_label = vec![NONE; n];
        let mut orbits = 0;
        for d in 0..n {
            if orbit_label[d] != NONE {
                continue;
            }
            orbits += 1;
            let mut x = d;
            while orbit_label[x] == NONE {
                orbit_label[x] = self.tail[d];
                if self.tail[x] != self.tail[d] {
                    return bad(format!("vertex orbit of dart {d} has mixed labels"));
                }
                x = self.next[self.twin[x] as usize] as usize;
            }
        }
        if orbits != self.n_vertices {
            return bad(format!("{orbits} vertex orbits for {} labels", self.n_vertices));
        }
        let euler = self.n_vertices as i64 - self.num_edges() as i64 + self.num_faces() as i64;
        if euler != 2 {
            return bad(format!("Euler characteristic {euler}"));
        }
        Ok(())
    }

    /// Root-preserving canonical code: breadth-first traversal from `o_0`
    /// along `next` and `twin`, recording both images by discovery index.
    pub fn canonical_code(&self) -> Vec<u32> {
        canonical_code(&self.next, &self.twin)
    }

    /// Counts header and one `next twin tail` line per dart.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# polygon-map darts={} boundary={} vertices={}\n",
            self.num_darts(),
            self.boundary_len,
            self.n_vertices
        );
        for d in 0..self.num_darts() {
            s.push_str(&format!("{} {} {}\n", self.next[d], self.twin[d], self.tail[d]));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::InvalidMap("empty input".into()))?;
        let field = |key: &str| -> Result<usize> {
            header
                .split_whitespace()
                .find_map(|w| w.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::InvalidMap(format!("header lacks {key}")))
        };
        let (darts, boundary_len, n_vertices) = (field("darts")?, field("boundary")?, field("vertices")?);
        let (mut next, mut twin, mut tail) = (Vec::new(), Vec::new(), Vec::new());
        for line in lines {
            let v: Vec<u32> = line
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| Error::InvalidMap(format!("bad line {line:?}"))))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::InvalidMap(format!("bad line {line:?}")));
            }
            next.push(v[0]);
            twin.push(v[1]);
            tail.push(v[2]);
        }
        if next.len() != darts || next.iter().chain(&twin).any(|&x| x as usize >= darts) {
            return Err(Error::InvalidMap("dart count or index out of range".into()));
        }
        if tail.iter().any(|&x| x as usize >= n_vertices) {
            return Err(Error::InvalidMap("vertex index out of range".into()));
        }
        let map = Self { next, twin, tail, boundary_len, n_vertices };
        map.validate()?;
        Ok(map)
    }
}

fn canonical_code(next: &[u32], twin: &[u32]) -> Vec<u32> {
    let n = next.len();
    let mut id = vec![NONE; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([0usize]);
    id[0] = 0;
    order.push(0);
    while let Some(d) = queue.pop_front() {
        for e in [next[d] as usize, twin[d] as usize] {
            if id[e] == NONE {
                id[e] = order.len() as u32;
                order.push(e);
                queue.push_back(e);
            }
        }
    }
    let mut code = Vec::with_capacity(2 * n);
    for &d in &order {
        code.push(id[next[d] as usize]);
        code.push(id[twin[d] as usize]);
    }
    code
}

/// Exact Boltzmann triangulation of the `m`-gon by peeling.
pub fn sample_boltzmann<R: Rng + ?Sized>(m: usize, pf: &PartitionFunction, rng: &mut R) -> Result<TriangulatedPolygon> {
    if m < 2 {
        return Err(Error::Domain(format!("polygon perimeter {m} < 2")));
    }
    let mut next: Vec<u32> = (0..m).map(|j| ((j + m - 1) % m) as u32).collect();
    let mut twin: Vec<u32> = vec![NONE; m];
    let mut tail: Vec<u32> = (0..m).map(|j| ((j + 1) % m) as u32).collect();
    let mut n_vertices = m as u32;
    // A hole is a cycle of (outside dart, tail of the missing inside dart).
    let mut holes: Vec<VecDeque<(u32, u32)>> = vec![(0..m).map(|j| (j as u32, j as u32)).collect()];
    while let Some(mut hole) = holes.pop() {
        let len = hole.len();
        let mv = pf.sample_move(len, rng);
        if len == 2 && mv == Some(0) {
            let (a, _) = hole[0];
            let (b, _) = hole[1];
            twin[a as usize] = b;
            twin[b as usize] = a;
            continue;
        }
        let (a0, u) = hole.pop_front().unwrap();
        let v = hole[0].1;
        let d = next.len() as u32;
        let (e1, e2) = (d + 1, d + 2);
        next.extend([e1, e2, d]);
        twin.extend([a0, NONE, NONE]);
        twin[a0 as usize] = d;
        match mv {
            None => {
                let w = n_vertices;
                n_vertices += 1;
                tail.extend([u, v, w]);
                hole.push_front((e1, w));
                hole.push_front((e2, u));
                holes.push(hole);
            }
            Some(j) => {
                // Remaining hole holds positions 1..len; vertex j sits at index j - 1.
                let vj = hole[j - 1].1;
                tail.extend([u, v, vj]);
                let mut b = hole.split_off(j - 1);
                let mut a = hole;
                a.push_back((e1, vj));
                b.push_back((e2, u));
                holes.push(a);
                holes.push(b);
            }
        }
    }
    if next.len() > u32::MAX as usize / 2 {
        return Err(Error::SizeLimit("triangulation exceeds dart index range".into()));
    }
    Ok(TriangulatedPolygon { next, twin, tail, boundary_len: m, n_vertices: n_vertices as usize })
}

/// Boundary colouring of an inserted map, read from boundary vertex 0 onwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    AllBlack,
    /// Consecutive runs of one colour.
    Runs(Vec<(Colour, usize)>),
}

impl BoundaryCondition {
    pub fn colours(&self, m: usize) -> Result<Vec<Colour>> {
        match self {
            BoundaryCondition::AllBlack => Ok(vec![Colour::Black; m]),
            BoundaryCondition::Runs(runs) => {
                let total: usize = runs.iter().map(|r| r.1).sum();
                if total != m {
                    return Err(Error::Domain(format!(
                        "boundary descriptor covers {total} vertices, boundary has {m}"
                    )));
                }
                Ok(runs.iter().flat_map(|&(c, k)| std::iter::repeat_n(c, k)).collect())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ColoredMap {
    pub map: TriangulatedPolygon,
    pub colours: Vec<Colour>,
    pub boundary: BoundaryCondition,
}

impl ColoredMap {
    /// Vertices joined to boundary vertex `source` by black paths.
    pub fn black_component(&self, source: usize) -> Vec<usize> {
        black_component(&self.map, &self.colours, source)
    }
}

pub fn percolate<R: Rng + ?Sized>(
    map: TriangulatedPolygon,
    p: f64,
    boundary: BoundaryCondition,
    rng: &mut R,
) -> Result<ColoredMap> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("percolation parameter {p} outside [0, 1]")));
    }
    let mut colours = boundary.colours(map.boundary_len)?;
    colours.extend((map.boundary_len..map.n_vertices).map(|_| {
        if rng.random::<f64>() < p {
            Colour::Black
        } else {
            Colour::White
        }
    }));
    Ok(ColoredMap { map, colours, boundary })
}

pub(crate) fn vertex_adjacency(map: &TriangulatedPolygon) -> (Vec<usize>, Vec<u32>) {
    let n = map.n_vertices;
    let mut start = vec![0usize; n + 1];
    for &t in &map.tail {
        start[t as usize + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut adj = vec![0u32; map.tail.len()];
    for d in 0..map.tail.len() {
        let t = map.tail[d] as usize;
        adj[fill[t]] = map.tail[map.twin[d] as usize];
        fill[t] += 1;
    }
    (start, adj)
}

pub(crate) fn black_component(map: &TriangulatedPolygon, colours: &[Colour], source: usize) -> Vec<usize> {
    if colours[source] != Colour::Black {
        return Vec::new();
    }
    let (start, adj) = vertex_adjacency(map);
    let mut seen = vec![false; map.n_vertices];
    let mut out = vec![source];
    seen[source] = true;
    let mut i = 0;
    while i < out.len() {
        let u = out[i];
        i += 1;
        for &w in &adj[start[u]..start[u + 1]] {
            let w = w as usize;
            if !seen[w] && colours[w] == Colour::Black {
                seen[w] = true;
                out.push(w);
            }
        }
    }
    out
}

/// Exhaustive list of rooted loopless triangulations of the `m`-gon, by
/// number of internal vertices.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub boundary_len: usize,
    /// `maps[n]` holds the canonical codes of maps with `n` internal vertices.
    pub maps: Vec<Vec<Vec<u32>>>,
}

impl Enumeration {
    pub fn counts(&self) -> Vec<usize> {
        self.maps.iter().map(Vec::len).collect()
    }

    /// Code to internal-vertex count.
    pub fn index(&self) -> HashMap<Vec<u32>, usize> {
        let mut out = HashMap::new();
        for (n, codes) in self.maps.iter().enumerate() {
            for c in codes {
                out.insert(c.clone(), n);
            }
        }
        out
    }
}

pub const ENUMERATION_MAX_BOUNDARY: usize = 5;
pub const ENUMERATION_MAX_INTERNAL: usize = 3;

/// Generates every gluing of the outer face and `m + 2n - 2` triangles,
/// discovering triangles in breadth-first order from the root so that each
/// rooted map arises once, and keeps the planar, loopless ones with a simple
/// boundary.
pub fn enumerate_triangulations(m: usize, max_internal: usize) -> Result<Enumeration> {
    if !(2..=ENUMERATION_MAX_BOUNDARY).contains(&m) || max_internal > ENUMERATION_MAX_INTERNAL {
        return Err(Error::SizeLimit(format!(
            "enumeration limited to 2 <= m <= {ENUMERATION_MAX_BOUNDARY} and at most {ENUMERATION_MAX_INTERNAL} internal vertices"
        )));
    }
    let mut maps = Vec::new();
    for n in 0..=max_internal {
        let mut search = Gluing::new(m, n);
        search.run(0, 0);
        let unique: HashSet<&Vec<u32>> = search.found.iter().collect();
        if unique.len() != search.found.len() {
            return Err(Error::InvalidMap("enumeration produced a duplicate map".into()));
        }
        maps.push(search.found);
    }
    Ok(Enumeration { boundary_len: m, maps })
}

struct Gluing {
    m: usize,
    n: usize,
    faces: usize,
    next: Vec<u32>,
    twin: Vec<u32>,
    // Union-find with rollback over dart tails.
    uf_parent: Vec<u32>,
    uf_size: Vec<u32>,
    boundary: Vec<bool>,
    history: Vec<(u32, u32)>,
    found: Vec<Vec<u32>>,
}

impl Gluing {
    fn new(m: usize, n: usize) -> Self {
        let faces = m + 2 * n - 2;
        let cap = m + 3 * faces;
        let mut g = Self {
            m,
            n,
            faces,
            next: Vec::with_capacity(cap),
            twin: Vec::with_capacity(cap),
            uf_parent: Vec::with_capacity(cap),
            uf_size: Vec::with_capacity(cap),
            boundary: Vec::with_capacity(cap),
            history: Vec::new(),
            found: Vec::new(),
        };
        for j in 0..m {
            g.push_dart(((j + m - 1) % m) as u32, true);
        }
        g
    }

    fn push_dart(&mut self, next: u32, boundary: bool) {
        let d = self.next.len() as u32;
        self.next.push(next);
        self.twin.push(NONE);
        self.uf_parent.push(d);
        self.uf_size.push(1);
        self.boundary.push(boundary);
    }

    fn find(&self, mut x: u32) -> u32 {
        while self.uf_parent[x as usize] != x {
            x = self.uf_parent[x as usize];
        }
        x
    }

    /// Merge; returns false if two boundary vertices would merge.
    fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return true;
        }
        if self.boundary[ra as usize] && self.boundary[rb as usize] {
            return false;
        }
        if self.uf_size[ra as usize] < self.uf_size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.uf_parent[rb as usize] = ra;
        self.uf_size[ra as usize] += self.uf_size[rb as usize];
        let was_boundary = self.boundary[ra as usize];
        self.boundary[ra as usize] |= self.boundary[rb as usize];
        self.history.push((rb, if was_boundary { 1 } else { 0 }));
        true
    }

    fn rollback(&mut self, mark: usize) {
        while self.history.len() > mark {
            let (rb, was_boundary) = self.history.pop().unwrap();
            let ra = self.uf_parent[rb as usize];
            self.uf_parent[rb as usize] = rb;
            self.uf_size[ra as usize] -= self.uf_size[rb as usize];
            self.boundary[ra as usize] = was_boundary == 1;
        }
    }

    /// Whether the vertex at the tail of `d` has all its darts glued.
    fn closed_at(&self, d: u32) -> bool {
        let mut x = d;
        loop {
            let t = self.twin[x as usize];
            if t == NONE {
                return false;
            }
            x = self.next[t as usize];
            if x == d {
                return true;
            }
        }
    }

    fn glue(&mut self, a: u32, b: u32, closed: usize) -> Option<usize> {
        self.twin[a as usize] = b;
        self.twin[b as usize] = a;
        let ok = self.union(a, self.next[b as usize]) && self.union(self.next[a as usize], b);
        if !ok || self.find(a) == self.find(self.next[a as usize]) {
            return None;
        }
        let mut closed = closed;
        for d in [a, b] {
            if self.closed_at(d) && !self.boundary[self.find(d) as usize] {
                closed += 1;
            }
        }
        (closed <= self.n).then_some(closed)
    }

    fn unglue(&mut self, a: u32, b: u32, mark: usize) {
        self.twin[a as usize] = NONE;
        self.twin[b as usize] = NONE;
        self.rollback(mark);
    }

    fn run(&mut self, cursor: usize, closed: usize) {
        let total = self.m + 3 * self.faces;
        let mut d = cursor;
        while d < self.next.len() && self.twin[d] != NONE {
            d += 1;
        }
        if d == self.next.len() {
            if self.next.len() == total {
                self.record();
            }
            return;
        }
        let d32 = d as u32;
        // Glue to an existing open dart.
        for e in d + 1..self.next.len() {
            if self.twin[e] != NONE {
                continue;
            }
            let mark = self.history.len();
            if let Some(c) = self.glue(d32, e as u32, closed) {
                self.run(d + 1, c);
            }
            self.unglue(d32, e as u32, mark);
        }
        // Glue to a fresh triangle.
        if self.next.len() < total {
            let t = self.next.len() as u32;
            self.push_dart(t + 1, false);
            self.push_dart(t + 2, false);
            self.push_dart(t, false);
            let mark = self.history.len();
            if let Some(c) = self.glue(d32, t, closed) {
                self.run(d + 1, c);
            }
            self.unglue(d32, t, mark);
            for _ in 0..3 {
                self.next.pop();
                self.twin.pop();
                self.uf_parent.pop();
                self.uf_size.pop();
                self.boundary.pop();
            }
        }
    }

    fn record(&mut self) {
        if (0..self.next.len() as u32).any(|d| self.find(d) == self.find(self.next[d as usize])) {
            return;
        }
        let mut roots = HashSet::new();
        for d in 0..self.next.len() as u32 {
            roots.insert(self.find(d));
        }
        if roots.len() == self.m + self.n {
            self.found.push(canonical_code(&self.next, &self.twin));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_gon_values() {
        let pf = PartitionFunction::new(&ModelParams::new(0.8).unwrap());
        assert!((pf.value(2).unwrap().value - 1.09375).abs() < 1e-12);
        let z3 = pf.value(3).unwrap().value;
        assert!((pf.value(2).unwrap().value - 1.0 - pf.weight() * z3).abs() < 1e-12);
    }

    #[test]
    fn small_enumeration_counts() {
        assert_eq!(enumerate_triangulations(3, 2).unwrap().counts(), vec![1, 4, 24]);
        assert_eq!(enumerate_triangulations(2, 1).unwrap().counts(), vec![1, 1]);
    }

    #[test]
    fn sampled_maps_are_valid() {
        let pf = PartitionFunction::new(&ModelParams::new(0.8).unwrap());
        let mut rng = crate::rng::stream(5, 0);
        for m in [2, 3, 7, 20] {
            for _ in 0..50 {
                sample_boltzmann(m, &pf, &mut rng).unwrap().validate().unwrap();
            }
        }
    }
}
