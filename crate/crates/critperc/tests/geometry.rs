use critperc::boltzmann::{sample_boltzmann, PartitionFunction};
use critperc::geometry::{
    coding_correspondence, diameter, distortion, effective_resistance, gh_bounds, ghp_upper, graph_distance, measures,
    prohorov_distance, prohorov_one_sided_feasible, CodingLabels, Correspondence, FiniteMetricMeasureSpace, Graph,
    ResistanceOracle,
};
use critperc::model::ModelParams;
use critperc::rng::stream;
use critperc::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

/// Connected random graph: a random spanning tree plus extra edges, some parallel.
fn random_graph<R: Rng>(n: usize, extra: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push((a, b));
        }
    }
    edges
}

/// Resistances from the Laplacian pseudo-inverse, `(L + J/n)^{-1} - J/n`.
fn kirchhoff(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut l = DMatrix::<f64>::from_element(n, n, 1.0 / n as f64);
    for &(a, b) in edges {
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
        l[(a, b)] -= 1.0;
        l[(b, a)] -= 1.0;
    }
    let g = l.try_inverse().unwrap();
    DMatrix::from_fn(n, n, |i, j| g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)])
}

/// Random series-parallel network between terminals 0 and 1 with its resistance.
fn series_parallel<R: Rng>(depth: u32, rng: &mut R) -> (usize, Vec<(usize, usize)>, f64) {
    fn build<R: Rng>(
        depth: u32,
        s: usize,
        t: usize,
        next: &mut usize,
        edges: &mut Vec<(usize, usize)>,
        rng: &mut R,
    ) -> f64 {
        if depth == 0 || rng.random_bool(0.3) {
            edges.push((s, t));
            return 1.0;
        }
        if rng.random_bool(0.5) {
            let m = *next;
            *next += 1;
            build(depth - 1, s, m, next, edges, rng) + build(depth - 1, m, t, next, edges, rng)
        } else {
            let a = build(depth - 1, s, t, next, edges, rng);
            let b = build(depth - 1, s, t, next, edges, rng);
            a * b / (a + b)
        }
    }
    let mut next = 2;
    let mut edges = Vec::new();
    let r = build(depth, 0, 1, &mut next, &mut edges, rng);
    (next, edges, r)
}

#[test]
fn graph_distances() {
    assert_eq!(graph_distance(&Graph::path(3), &[0]).unwrap()[2], 2);
    assert_eq!(graph_distance(&Graph::cycle(4), &[0]).unwrap()[2], 2);
    let split = Graph::from_edges(3, [(0, 1)]);
    match graph_distance(&split, &[0]) {
        Err(Error::Disconnected(vertex)) => assert_eq!(vertex, 2),
        other => panic!("{other:?}"),
    }
    let mut rng = stream(51, 0);
    for _ in 0..50 {
        let n = rng.random_range(2..=100);
        let parent: Vec<usize> = (0..n).map(|v| if v == 0 { 0 } else { rng.random_range(0..v) }).collect();
        let mut depth = vec![0usize; n];
        for v in 1..n {
            depth[v] = depth[parent[v]] + 1;
        }
        let g = Graph::from_edges(n, (1..n).map(|v| (parent[v], v)));
        let lca = |mut a: usize, mut b: usize| {
            while a != b {
                if depth[a] >= depth[b] {
                    a = parent[a];
                } else {
                    b = parent[b];
                }
            }
            a
        };
        let u = rng.random_range(0..n);
        let d = graph_distance(&g, &[u]).unwrap();
        for v in 0..n {
            assert_eq!(d[v] as usize, depth[u] + depth[v] - 2 * depth[lca(u, v)]);
        }
    }
    assert_eq!(diameter(&Graph::path(5)).unwrap(), 4);
}

#[test]
fn resistance_small_values() {
    let r = effective_resistance(&Graph::cycle(4), &[(0, 1)]).unwrap();
    assert!((r[0] - 0.75).abs() < 1e-12);
    let r = effective_resistance(&Graph::complete(3), &[(0, 1), (1, 2)]).unwrap();
    assert!(r.iter().all(|x| (x - 2.0 / 3.0).abs() < 1e-12));
    // parallel edges count
    let r = effective_resistance(&Graph::from_edges(2, [(0, 1), (1, 0)]), &[(0, 1)]).unwrap();
    assert!((r[0] - 0.5).abs() < 1e-12);
    assert!(effective_resistance(&Graph::from_edges(3, [(0, 1)]), &[(0, 2)]).is_err());
}

#[test]
fn resistance_matches_kirchhoff_and_series_parallel() {
    let mut rng = stream(52, 0);
    for _ in 0..100 {
        let n = rng.random_range(2..=30);
        let extra = rng.random_range(0..2 * n);
        let edges = random_graph(n, extra, &mut rng);
        let g = Graph::from_edges(n, edges.clone());
        let oracle = kirchhoff(n, &edges);
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
        let r = effective_resistance(&g, &pairs).unwrap();
        let d: Vec<Vec<u32>> = (0..n).map(|a| graph_distance(&g, &[a]).unwrap()).collect();
        for (k, &(a, b)) in pairs.iter().enumerate() {
            assert!((r[k] - oracle[(a, b)]).abs() < 1e-8, "n={n} ({a},{b}): {} vs {}", r[k], oracle[(a, b)]);
            assert!(r[k] <= d[a][b] as f64 + 1e-12);
        }
    }
    for _ in 0..100 {
        let (n, edges, expected) = series_parallel(6, &mut rng);
        let r = effective_resistance(&Graph::from_edges(n, edges), &[(0, 1)]).unwrap();
        assert!((r[0] - expected).abs() < 1e-8 * expected.max(1.0));
    }
}

#[test]
fn resistance_equals_distance_on_trees() {
    let mut rng = stream(53, 0);
    for _ in 0..50 {
        let n = rng.random_range(2..=300);
        let g = Graph::from_edges(n, random_graph(n, 0, &mut rng));
        assert!(g.is_tree());
        let mut oracle = ResistanceOracle::new(&g).unwrap();
        let d = graph_distance(&g, &[0]).unwrap();
        for v in 0..n {
            assert_eq!(oracle.resistance(0, v).unwrap(), d[v] as f64);
        }
    }
}

#[test]
fn resistance_on_a_large_block() {
    // a long cycle is one block beyond the dense limit
    let n = 3000;
    let g = Graph::cycle(n);
    let r = effective_resistance(&g, &[(0, 1), (0, 750), (10, 1510)]).unwrap();
    for (x, k) in r.iter().zip([1usize, 750, 1500]) {
        let exact = (k * (n - k)) as f64 / n as f64;
        assert!((x - exact).abs() < 1e-8 * exact, "{x} vs {exact}");
    }
}

#[test]
fn rayleigh_monotonicity() {
    let mut rng = stream(54, 0);
    for _ in 0..100 {
        let n = rng.random_range(3..=30);
        let mut edges = random_graph(n, n / 2, &mut rng);
        let pairs: Vec<(usize, usize)> = (0..10).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let before = effective_resistance(&Graph::from_edges(n, edges.clone()), &pairs).unwrap();
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        edges.push((a, b));
        let after = effective_resistance(&Graph::from_edges(n, edges), &pairs).unwrap();
        for (x, y) in before.iter().zip(&after) {
            assert!(y <= &(x + 1e-10));
        }
    }
}

#[test]
fn measure_totals() {
    let (c, d) = measures(&Graph::from_edges(1, []));
    assert_eq!((c, d), (vec![1.0], vec![0.0]));
    let (_, d) = measures(&Graph::cycle(4));
    assert_eq!(d, vec![2.0; 4]);
    assert_eq!(d.iter().sum::<f64>(), 8.0);
    let pf = PartitionFunction::new(&ModelParams::new(0.8).unwrap());
    let mut rng = stream(55, 0);
    for _ in 0..200 {
        let m = rng.random_range(2..40);
        let t = sample_boltzmann(m, &pf, &mut rng).unwrap();
        let g = Graph::from_edges(t.n_vertices, t.edges().collect::<Vec<_>>());
        let (c, d) = measures(&g);
        assert_eq!(d.iter().sum::<f64>(), 2.0 * g.num_edges() as f64);
        assert_eq!(g.num_edges(), t.num_edges());
        assert!(d.iter().sum::<f64>() <= 6.0 * c.iter().sum::<f64>());
    }
}

fn space(dist: &[&[f64]], weights: &[f64]) -> FiniteMetricMeasureSpace {
    FiniteMetricMeasureSpace::new(dist.concat(), weights.to_vec(), 0).unwrap()
}

#[test]
fn distortion_examples() {
    let mut rng = stream(56, 0);
    let g = Graph::from_edges(10, random_graph(10, 5, &mut rng));
    let x = FiniteMetricMeasureSpace::from_graph(&g, &(0..10).collect::<Vec<_>>(), vec![1.0; 10], 0).unwrap();
    assert_eq!(x.triangle_violations(1000, &mut rng), 0);
    assert_eq!(distortion(&Correspondence::identity(10), &x, &x).unwrap(), 0.0);
    let c = 2.5;
    let y = x.scaled(c);
    assert!((distortion(&Correspondence::identity(10), &x, &y).unwrap() - (c - 1.0) * x.diameter()).abs() < 1e-12);

    let two = space(&[&[0.0, 2.0], &[2.0, 0.0]], &[1.0, 1.0]);
    let point = FiniteMetricMeasureSpace::point();
    let corr = Correspondence { pairs: vec![(0, 0), (1, 0)] };
    assert_eq!(distortion(&corr, &two, &point).unwrap(), 2.0);
    let partial = Correspondence { pairs: vec![(0, 0)] };
    assert!(matches!(distortion(&partial, &two, &point), Err(Error::InvalidCorrespondence(_))));
    assert_eq!(FiniteMetricMeasureSpace::from_text(&x.to_text()).unwrap(), x);
    assert!(FiniteMetricMeasureSpace::new(vec![0.0, 1.0, 2.0, 0.0], vec![1.0, 1.0], 0).is_err());
}

/// Minimal distortion by enumerating every relation containing the root pair.
fn gh_brute(x: &FiniteMetricMeasureSpace, y: &FiniteMetricMeasureSpace) -> f64 {
    let all: Vec<(usize, usize)> = (0..x.n).flat_map(|a| (0..y.n).map(move |b| (a, b))).collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << all.len()) {
        let pairs: Vec<(usize, usize)> = (0..all.len()).filter(|&i| mask >> i & 1 == 1).map(|i| all[i]).collect();
        let c = Correspondence { pairs };
        if c.validate(x, y).is_ok() {
            best = best.min(distortion(&c, x, y).unwrap());
        }
    }
    best / 2.0
}

fn random_space<R: Rng>(n: usize, rng: &mut R) -> FiniteMetricMeasureSpace {
    // shortest paths over random weights give a metric
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let w = rng.random_range(1..5) as f64;
            d[i * n + j] = w;
            d[j * n + i] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = d[i * n + j].min(d[i * n + k] + d[k * n + j]);
            }
        }
    }
    FiniteMetricMeasureSpace::new(d, vec![1.0 / n as f64; n], 0).unwrap()
}

#[test]
fn gromov_hausdorff_examples() {
    let two = space(&[&[0.0, 2.0], &[2.0, 0.0]], &[1.0, 1.0]);
    let point = FiniteMetricMeasureSpace::point();
    assert_eq!(gh_bounds(&two, &point, true).unwrap().exact, Some(1.0));
    assert_eq!(gh_bounds(&two, &two, true).unwrap().exact, Some(0.0));
    let triangle = space(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]], &[1.0; 3]);
    let path = space(&[&[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0], &[2.0, 1.0, 0.0]], &[1.0; 3]);
    assert_eq!(gh_brute(&triangle, &path), 0.5);
    assert_eq!(gh_bounds(&triangle, &path, true).unwrap().exact, Some(0.5));
    let big = random_space(7, &mut stream(57, 0));
    assert!(matches!(gh_bounds(&big, &point, true), Err(Error::SizeLimit(_))));
    assert!(gh_bounds(&big, &point, false).unwrap().upper >= big.diameter() / 2.0 - 1e-12);

    let mut rng = stream(58, 0);
    for _ in 0..40 {
        let s: Vec<FiniteMetricMeasureSpace> =
            (0..3).map(|_| random_space(rng.random_range(1..=3), &mut rng)).collect();
        let gh =
            |a: &FiniteMetricMeasureSpace, b: &FiniteMetricMeasureSpace| gh_bounds(a, b, true).unwrap().exact.unwrap();
        let (ab, ba) = (gh(&s[0], &s[1]), gh(&s[1], &s[0]));
        assert!((ab - ba).abs() < 1e-12);
        assert!((ab - gh_brute(&s[0], &s[1])).abs() < 1e-12);
        assert!(gh(&s[0], &s[2]) <= ab + gh(&s[1], &s[2]) + 1e-12);
        let b = gh_bounds(&s[0], &s[1], false).unwrap();
        assert!(b.upper + 1e-12 >= ab);
        b.correspondence.validate(&s[0], &s[1]).unwrap();
    }
}

/// `mu(A) <= nu(A^eps) + eps` for every subset `A`, by enumeration.
fn prohorov_brute(mu: &[f64], nu: &[f64], dist: &[Vec<f64>], eps: f64) -> bool {
    (0u32..(1 << mu.len())).all(|mask| {
        let a: Vec<usize> = (0..mu.len()).filter(|&i| mask >> i & 1 == 1).collect();
        let mass: f64 = a.iter().map(|&i| mu[i]).sum();
        let fat: f64 = (0..nu.len()).filter(|&j| a.iter().any(|&i| dist[i][j] <= eps)).map(|j| nu[j]).sum();
        mass <= fat + eps + 1e-12
    })
}

#[test]
fn prohorov_feasibility_matches_enumeration() {
    let mut rng = stream(59, 0);
    let mut checked = 0;
    while checked < 2000 {
        let a = rng.random_range(1..=4);
        let b = rng.random_range(1..=4);
        let mu: Vec<f64> = (0..a).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
        let nu: Vec<f64> = (0..b).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
        let dist: Vec<Vec<f64>> =
            (0..a).map(|_| (0..b).map(|_| rng.random_range(0..8) as f64 / 8.0).collect()).collect();
        // stay away from ties with distances and masses
        let eps = rng.random_range(0..16) as f64 / 16.0 + 1.0 / 64.0;
        let fast = prohorov_one_sided_feasible(&mu, &nu, &|i, j| dist[i][j], eps);
        assert_eq!(fast, prohorov_brute(&mu, &nu, &dist, eps), "{mu:?} {nu:?} {dist:?} {eps}");
        checked += 1;
    }
    let d = |_: usize, _: usize| 0.5;
    assert!((prohorov_distance(&[1.0], &[1.0], &d) - 0.5).abs() < 1e-8);
    let zero = |_: usize, _: usize| 0.0;
    assert_eq!(prohorov_distance(&[0.3, 0.7], &[1.0], &zero), 0.0);
}

#[test]
fn ghp_upper_bounds() {
    let mut rng = stream(60, 0);
    let x = random_space(6, &mut rng);
    let u = ghp_upper(&x, &x, &Correspondence::identity(6)).unwrap();
    assert_eq!(u.total, 0.0);
    let two = space(&[&[0.0, 0.5], &[0.5, 0.0]], &[1.0, 0.0]);
    let moved = space(&[&[0.0, 0.5], &[0.5, 0.0]], &[0.0, 1.0]);
    let u = ghp_upper(&two, &moved, &Correspondence::identity(2)).unwrap();
    assert!((u.prohorov - 0.5).abs() < 1e-8);
    for _ in 0..50 {
        let y = random_space(rng.random_range(1..=6), &mut rng);
        let g = gh_bounds(&x, &y, false).unwrap();
        let u = ghp_upper(&x, &y, &g.correspondence).unwrap();
        assert!(u.total + 1e-12 >= g.upper);
        assert!(u.hausdorff >= u.distortion / 2.0 - 1e-12);
        assert!((u.total - (u.hausdorff + u.prohorov + u.root)).abs() < 1e-12);
    }
}

#[test]
fn coding_correspondence_basics() {
    let mut rng = stream(61, 0);
    let labels = CodingLabels { groups: vec![vec![0]], root: 0 };
    let pairs = coding_correspondence(&labels, &[0.0], 1.0, None, &mut rng).unwrap();
    let corr = Correspondence { pairs };
    let p = FiniteMetricMeasureSpace::point();
    assert_eq!(distortion(&corr, &p, &p).unwrap(), 0.0);
    let labels = CodingLabels { groups: vec![vec![0], vec![1, 2], vec![3]], root: 0 };
    let pairs = coding_correspondence(&labels, &[0.0, 0.4, 0.9, 1.0], 3.0, None, &mut rng).unwrap();
    assert!(pairs.contains(&(0, 0)));
    assert!(pairs.contains(&(1, 1)) && pairs.contains(&(2, 1)));
    assert!(pairs.contains(&(3, 2)));
    assert!(pairs.contains(&(0, 3)));
    assert!(coding_correspondence(&labels, &[0.5], 0.0, None, &mut rng).is_err());
    let empty = CodingLabels { groups: vec![vec![0], vec![]], root: 0 };
    assert!(coding_correspondence(&empty, &[0.6], 2.0, None, &mut rng).is_err());
}

proptest! {
    #[test]
    fn resistance_is_a_metric_below_distance(seed in 0u64..1000) {
        let mut rng = stream(seed, 62);
        let n = rng.random_range(2..=12);
        let g = Graph::from_edges(n, random_graph(n, n, &mut rng));
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
        let r = effective_resistance(&g, &pairs).unwrap();
        let at = |a: usize, b: usize| r[a * n + b];
        for a in 0..n {
            prop_assert!(at(a, a).abs() < 1e-12);
            for b in 0..n {
                prop_assert!((at(a, b) - at(b, a)).abs() < 1e-10);
                for c in 0..n {
                    prop_assert!(at(a, c) <= at(a, b) + at(b, c) + 1e-10);
                }
            }
        }
    }
}
