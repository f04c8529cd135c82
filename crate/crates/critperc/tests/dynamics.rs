use critperc::continuum::{crt_from_excursion, crt_from_function, sample_excursion_fixed_lifetime};
use critperc::dynamics::{
    ctrw, ctrw_coupled, displacement_stats, path_law_comparison, srw, trace_displacements, walk_on_crt, walk_on_tree,
    MatchedScaling, SpannedTree, WalkTrace,
};
use critperc::geometry::{graph_distance, Graph};
use critperc::rng::stream;
use critperc::stats::mean_and_se;
use critperc::Error;
use rand::Rng;

/// Time spent at each vertex in each of `batches` equal slices of `[0, end_time]`,
/// as fractions of the slice.
fn occupation_batches(trace: &WalkTrace, n: usize, batches: usize) -> Vec<Vec<f64>> {
    let times = trace.times.as_ref().unwrap();
    let width = trace.end_time / batches as f64;
    let mut out = vec![vec![0.0; n]; batches];
    for i in 0..trace.len() {
        let (mut a, b) = (times[i], if i + 1 < trace.len() { times[i + 1] } else { trace.end_time });
        let v = trace.vertices[i] as usize;
        while a < b {
            let k = ((a / width) as usize).min(batches - 1);
            let edge = ((k + 1) as f64 * width).min(b);
            let edge = if k == batches - 1 { b } else { edge };
            out[k][v] += (edge - a) / width;
            a = edge;
        }
    }
    out
}

fn check_occupation(trace: &WalkTrace, n: usize, target: &[f64]) {
    let batches = occupation_batches(trace, n, 100);
    for v in 0..n {
        let col: Vec<f64> = batches.iter().map(|b| b[v]).collect();
        let (m, se) = mean_and_se(&col);
        assert!((m - target[v]).abs() < 3.0 * se, "vertex {v}: {m} vs {} (se {se})", target[v]);
    }
}

/// Critical geometric Galton-Watson tree with between `lo` and `hi` vertices.
fn gw_tree<R: Rng>(lo: usize, hi: usize, rng: &mut R) -> Graph {
    loop {
        let mut edges = Vec::new();
        let mut queue = std::collections::VecDeque::from([0usize]);
        let mut n = 1;
        while let Some(v) = queue.pop_front() {
            while rng.random::<bool>() {
                edges.push((v, n));
                queue.push_back(n);
                n += 1;
                if n > hi {
                    break;
                }
            }
            if n > hi {
                break;
            }
        }
        if n >= lo && n <= hi {
            return Graph::from_edges(n, edges);
        }
    }
}

#[test]
fn srw_occupation_and_errors() {
    let g = Graph::cycle(4);
    let mut rng = stream(81, 0);
    let steps = 1_000_000;
    let w = srw(&g, 0, steps, &mut rng).unwrap();
    w.validate(&g).unwrap();
    assert_eq!(w.steps(), steps);
    let mut counts = [0u64; 4];
    for &v in &w.vertices[1..] {
        counts[v as usize] += 1;
    }
    // on even steps the walk sits at 0 or 2 independently with probability 1/2
    let se = (0.25 * (steps / 2) as f64).sqrt() / steps as f64;
    for c in counts {
        assert!((c as f64 / steps as f64 - 0.25).abs() < 3.0 * se, "{counts:?}");
    }

    let single = Graph::from_edges(1, []);
    assert!(matches!(srw(&single, 0, 10, &mut rng), Err(Error::Domain(_))));
    assert!(srw(&g, 4, 10, &mut rng).is_err());
    let two = Graph::path(2);
    let w = ctrw(&two, 1, 50.0, &mut rng).unwrap();
    for (i, &v) in w.vertices.iter().enumerate() {
        assert_eq!(v as usize, (i + 1) % 2);
    }
}

#[test]
fn ctrw_stationary_measures() {
    let mut rng = stream(82, 0);
    let k3 = Graph::complete(3);
    let w = ctrw(&k3, 0, 200_000.0, &mut rng).unwrap();
    w.validate(&k3).unwrap();
    check_occupation(&w, 3, &[1.0 / 3.0; 3]);

    let star = Graph::star(3);
    let centre = (0..4).find(|&v| star.degree(v) == 3).unwrap();
    let w = ctrw(&star, centre, 200_000.0, &mut rng).unwrap();
    w.validate(&star).unwrap();
    let target: Vec<f64> = (0..4).map(|v| star.degree(v) as f64 / 6.0).collect();
    assert_eq!(target[centre], 0.5);
    check_occupation(&w, 4, &target);

    assert!(ctrw(&k3, 0, -1.0, &mut rng).is_err());
    assert!(ctrw(&k3, 0, f64::NAN, &mut rng).is_err());
    assert_eq!(ctrw(&k3, 2, 0.0, &mut rng).unwrap().vertices, vec![2]);
}

#[test]
fn ctrw_jump_chain_is_srw() {
    let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3), (1, 4)]);
    for seed in 0..50 {
        let mut jumps = stream(seed, 1);
        let mut holds = stream(seed, 2);
        let c = ctrw_coupled(&g, 0, 300.0, &mut jumps, &mut holds).unwrap();
        c.validate(&g).unwrap();
        let d = srw(&g, 0, c.steps(), &mut stream(seed, 1)).unwrap();
        assert_eq!(c.vertices, d.vertices);
        let times = c.times.as_ref().unwrap();
        assert!(*times.last().unwrap() <= 300.0);
        assert_eq!(c.position_at(300.0).unwrap(), *c.vertices.last().unwrap());
        assert!(c.position_at(300.5).is_err());
    }
}

#[test]
fn detailed_balance() {
    let g = Graph::from_edges(5, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (1, 3)]);
    let mut rng = stream(83, 0);
    let w = srw(&g, 0, 1_000_000, &mut rng).unwrap();
    let mut flow = vec![vec![0f64; 5]; 5];
    for s in w.vertices.windows(2) {
        flow[s[0] as usize][s[1] as usize] += 1.0;
    }
    for (x, y) in g.edges() {
        let (a, b) = (flow[x][y], flow[y][x]);
        assert!((a - b).abs() <= 3.0 * (a + b).sqrt(), "{x}-{y}: {a} vs {b}");
    }
}

#[test]
fn two_point_tree_split() {
    // points at heights 0 and 1 with masses 1 and 3
    let crt = crt_from_function(&[0.0, 1.0, 0.0], 1.0, 2.0, vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
    let mut rng = stream(84, 0);
    let (tree, trace) = walk_on_crt(&crt, 0, 100_000, &mut rng).unwrap();
    assert_eq!(tree.num_nodes(), 2);
    let a = tree.node_of_point(0);
    let b = tree.node_of_point(1);
    assert!((tree.distances_from(a)[b] - 1.0).abs() < 1e-12);
    let mut target = vec![0.0; 2];
    target[a] = 0.25;
    target[b] = 0.75;
    check_occupation(&trace, 2, &target);
    let one = crt_from_function(&[0.0, 1.0, 0.0], 1.0, 2.0, vec![0.0, 2.0], vec![1.0, 1.0]).unwrap();
    assert!(walk_on_crt(&one, 0, 10, &mut rng).is_err());
}

#[test]
fn hitting_probabilities_follow_resistances() {
    // 0 - 1 (1.0), 1 - 2 (2.0), 1 - 3 (0.5), 0 - 4 (1.5)
    let tree = SpannedTree::from_parts(
        vec![None, Some(0), Some(1), Some(1), Some(0)],
        vec![0.0, 1.0, 2.0, 0.5, 1.5],
        vec![0.0, 0.0, 1.0, 1.0, 1.0],
    )
    .unwrap();
    let d2 = tree.distances_from(2);
    let d3 = tree.distances_from(3);
    let (r_x_b, r_a_b, r_x_a) = (d2[4], d3[4], d2[3]);
    let exact = (r_x_b + r_a_b - r_x_a) / (2.0 * r_a_b);
    assert!((exact - 5.0 / 6.0).abs() < 1e-12);
    let mut rng = stream(85, 0);
    let n = 40_000;
    let mut hits = 0;
    for _ in 0..n {
        let w = walk_on_tree(&tree, 2, 400, &mut rng).unwrap();
        let first = w.vertices.iter().find(|&&v| v == 3 || v == 4).expect("hits a target");
        hits += (*first == 3) as usize;
    }
    let p = hits as f64 / n as f64;
    assert!((p - exact).abs() < 3.0 * (exact * (1.0 - exact) / n as f64).sqrt(), "{p} vs {exact}");

    assert!(SpannedTree::from_parts(vec![None, None], vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    assert!(SpannedTree::from_parts(vec![None, Some(0)], vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    assert!(walk_on_tree(&tree, 9, 5, &mut rng).is_err());
}

#[test]
fn spanned_tree_of_a_crt() {
    let mut rng = stream(86, 0);
    for _ in 0..20 {
        let e = sample_excursion_fixed_lifetime(1.0, 1.0 / 4096.0, &mut rng).unwrap();
        let crt = crt_from_excursion(&e, 60, &mut rng).unwrap();
        let (tree, trace) = walk_on_crt(&crt, 0, 2000, &mut rng).unwrap();
        let k = crt.space.n;
        for i in 0..k {
            let di = tree.distances_from(tree.node_of_point(i));
            for j in 0..k {
                assert!((di[tree.node_of_point(j)] - crt.space.d(i, j)).abs() < 1e-9);
            }
        }
        let total: f64 = (0..tree.num_nodes()).map(|v| tree.mass(v)).sum();
        assert!((total - crt.space.total_mass()).abs() < 1e-9);
        let times = trace.times.as_ref().unwrap();
        assert!(times.windows(2).all(|w| w[1] >= w[0]));
        let from = tree.distances_from(trace.start as usize);
        let grid: Vec<f64> = (0..20).map(|i| trace.end_time * i as f64 / 20.0).collect();
        let disp = trace_displacements(&trace, &grid, |v| from[v as usize]).unwrap();
        let diam = crt.space.diameter();
        assert!(disp.iter().all(|&x| x <= diam + 1e-9));
    }
}

#[test]
fn diffusive_slope_on_a_segment() {
    let g = Graph::path(1001);
    let dist = graph_distance(&g, &[500]).unwrap();
    let mut rng = stream(87, 0);
    let grid: Vec<f64> = (0..=12).map(|i| 10f64 * 10f64.powf(i as f64 / 4.0)).collect();
    let samples: Vec<Vec<f64>> = (0..400)
        .map(|_| {
            let w = srw(&g, 500, 10_000, &mut rng).unwrap();
            trace_displacements(&w, &grid, |v| dist[v as usize] as f64).unwrap()
        })
        .collect();
    let table = displacement_stats(&samples, &grid, 200, &mut rng).unwrap();
    assert_eq!(table.traces, 400);
    assert!((table.slope - 0.5).abs() < 0.05, "slope {}", table.slope);
    for r in &table.rows {
        assert!(r.mean_lo <= r.mean && r.mean <= r.mean_hi);
        assert!(r.q10 <= r.median && r.median <= r.q90);
    }
    let w = srw(&g, 500, 10, &mut rng).unwrap();
    assert!(trace_displacements(&w, &[11.0], |v| v as f64).is_err());
    assert!(matches!(displacement_stats(&samples[..29], &grid, 10, &mut rng), Err(Error::InsufficientData(_))));
    assert!(displacement_stats(&samples, &grid[1..], 10, &mut rng).is_err());
}

#[test]
fn subdiffusive_slope_on_random_trees() {
    let mut rng = stream(88, 0);
    let grid: Vec<f64> = (0..=12).map(|i| 100f64 * 10f64.powf(i as f64 / 4.0)).collect();
    let samples: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            let g = gw_tree(10_000, 40_000, &mut rng);
            let dist = graph_distance(&g, &[0]).unwrap();
            let w = srw(&g, 0, 100_000, &mut rng).unwrap();
            trace_displacements(&w, &grid, |v| dist[v as usize] as f64).unwrap()
        })
        .collect();
    let table = displacement_stats(&samples, &grid, 0, &mut rng).unwrap();
    assert!((table.slope - 1.0 / 3.0).abs() < 0.06, "slope {}", table.slope);
}

#[test]
fn path_law_self_comparison() {
    let g = Graph::path(201);
    let dist = graph_distance(&g, &[100]).unwrap();
    let mut rng = stream(89, 0);
    let times = [0.25, 0.5, 1.0];
    let samples: Vec<Vec<f64>> = (0..2000)
        .map(|_| {
            let w = ctrw(&g, 100, 400.0, &mut rng).unwrap();
            let grid: Vec<f64> = times.iter().map(|t| t * 400.0).collect();
            trace_displacements(&w, &grid, |v| dist[v as usize] as f64 / 20.0).unwrap()
        })
        .collect();
    let (a, b) = samples.split_at(1000);
    let ks = path_law_comparison(a, b, &times).unwrap();
    assert_eq!(ks.len(), 3);
    for row in &ks {
        assert!(row.p_value > 0.01, "{row:?}");
    }
    assert!(path_law_comparison(a, &[vec![0.0]], &times).is_err());
    assert!(matches!(MatchedScaling::new(1000.0, None), Err(Error::InsufficientData(_))));
}
