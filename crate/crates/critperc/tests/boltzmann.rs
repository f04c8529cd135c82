use std::collections::HashMap;

use critperc::boltzmann::{
    enumerate_triangulations, loopless_counts, partition_function, percolate, sample_boltzmann, BoundaryCondition,
    PartitionFunction, TriangulatedPolygon, Q_CRITICAL,
};
use critperc::coding::Colour;
use critperc::model::ModelParams;
use critperc::rng::stream;
use critperc::Error;

fn pf08() -> PartitionFunction {
    PartitionFunction::new(&ModelParams::new(0.8).unwrap())
}

#[test]
fn enumeration_agrees_with_recursion() {
    let counts = loopless_counts(5, 3);
    for m in 2..=5 {
        let max_n = if m == 5 { 2 } else { 3 };
        let e = enumerate_triangulations(m, max_n).unwrap();
        let c = e.counts();
        for n in 0..=max_n {
            assert_eq!(c[n] as u128, counts[m][n], "m={m} n={n}");
        }
    }
    assert_eq!(enumerate_triangulations(3, 0).unwrap().counts(), vec![1]);
    assert_eq!(enumerate_triangulations(2, 0).unwrap().counts(), vec![1]);
    assert!(matches!(enumerate_triangulations(6, 0), Err(Error::SizeLimit(_))));
    assert!(matches!(enumerate_triangulations(3, 4), Err(Error::SizeLimit(_))));
}

#[test]
fn enumerated_maps_are_distinct_and_valid() {
    let e = enumerate_triangulations(4, 2).unwrap();
    let idx = e.index();
    assert_eq!(idx.len(), e.counts().iter().sum::<usize>());
}

#[test]
fn closed_form_matches_vertex_series() {
    let counts = loopless_counts(8, 30);
    for q in [1e-3f64, 5e-3, 0.02] {
        for m in 2..=8 {
            let series: f64 = counts[m].iter().enumerate().map(|(n, &c)| c as f64 * q.powi(n as i32)).sum();
            let z = partition_function(m, q).unwrap();
            assert!((z.value - series).abs() < 1e-9 * series, "m={m} q={q}: {} vs {series}", z.value);
            assert!(z.error >= 0.0);
        }
    }
}

#[test]
fn partition_function_domain_and_monotonicity() {
    assert!(partition_function(3, 0.0).is_err());
    assert!(partition_function(3, Q_CRITICAL * 1.01).is_err());
    assert!(partition_function(3, Q_CRITICAL).unwrap().value.is_finite());
    assert!(pf08().value(1).is_err());
    let mut prev = 0.0;
    for q in [0.001, 0.01, 0.03, 0.05, 0.07] {
        let z = partition_function(5, q).unwrap().value;
        assert!(z > prev);
        prev = z;
    }
    assert_eq!(partition_function(3, 1e-6).unwrap().value.round(), 1.0);
}

#[test]
fn conditional_law_matches_enumeration() {
    let pf = pf08();
    let q = pf.weight();
    let e = enumerate_triangulations(3, 2).unwrap();
    let idx = e.index();
    let mut codes: Vec<&Vec<u32>> = idx.keys().collect();
    codes.sort();
    let norm: f64 = e.counts().iter().enumerate().map(|(n, &c)| c as f64 * q.powi(n as i32)).sum();
    let mut hits: HashMap<&Vec<u32>, u64> = HashMap::new();
    let mut rng = stream(21, 0);
    let mut kept = 0u64;
    let mut single = 0u64;
    let total = 100_000;
    for _ in 0..total {
        let t = sample_boltzmann(3, &pf, &mut rng).unwrap();
        if t.num_internal() == 0 {
            single += 1;
        }
        if t.num_internal() > 2 {
            continue;
        }
        let code = t.canonical_code();
        let key = codes.iter().find(|c| ***c == code).copied().expect("sampled map missing from enumeration");
        *hits.entry(key).or_default() += 1;
        kept += 1;
    }
    let tv: f64 = codes
        .iter()
        .map(|c| {
            let p = q.powi(idx[*c] as i32) / norm;
            let f = hits.get(c).copied().unwrap_or(0) as f64 / kept as f64;
            (p - f).abs()
        })
        .sum::<f64>()
        / 2.0;
    assert!(tv <= 0.01, "tv {tv}");
    let p1 = 1.0 / pf.value(3).unwrap().value;
    let se = (p1 * (1.0 - p1) / total as f64).sqrt();
    assert!((single as f64 / total as f64 - p1).abs() < 3.0 * se);
}

#[test]
fn mean_internal_vertices_matches_log_derivative() {
    let pf = pf08();
    let mut rng = stream(22, 0);
    for m in [2, 3, 6, 12] {
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_boltzmann(m, &pf, &mut rng).unwrap().num_internal() as f64).collect();
        let (mean, se) = critperc::stats::mean_and_se(&xs);
        // numerical derivative of ln Z in q as an independent route
        let h = 1e-6;
        let q = pf.weight();
        let d = (partition_function(m, q + h).unwrap().value.ln() - partition_function(m, q - h).unwrap().value.ln())
            / (2.0 * h);
        assert!((pf.mean_internal_vertices(m) - q * d).abs() < 1e-5);
        assert!((mean - q * d).abs() < 3.0 * se, "m={m}: {mean} vs {}", q * d);
    }
}

#[test]
fn samples_are_valid_triangulations() {
    let pf = pf08();
    let mut rng = stream(23, 0);
    for i in 0..1000 {
        let m = 2 + i % 30;
        let t = sample_boltzmann(m, &pf, &mut rng).unwrap();
        t.validate().unwrap();
        let v = t.n_vertices as i64;
        let e = t.num_edges() as i64;
        let f = t.num_faces() as i64;
        if t.num_darts() > 2 {
            assert_eq!(v - e + f, 2);
        }
        let deg: usize = t.degrees().iter().sum();
        assert!(deg <= 6 * t.n_vertices);
        assert_eq!(TriangulatedPolygon::from_text(&t.to_text()).unwrap(), t);
    }
}

#[test]
fn volume_moments_grow_linearly() {
    let pf = pf08();
    let mut rng = stream(24, 0);
    let mut var_ratio = Vec::new();
    let mut cube_ratio = Vec::new();
    for i in [5usize, 10, 20, 40] {
        let xs: Vec<f64> = (0..5000).map(|_| sample_boltzmann(i, &pf, &mut rng).unwrap().n_vertices as f64).collect();
        let (mean, _) = critperc::stats::mean_and_se(&xs);
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let cube = xs.iter().map(|x| x.powi(3)).sum::<f64>() / xs.len() as f64;
        var_ratio.push(var / i as f64);
        cube_ratio.push(cube / (i as f64).powi(3));
    }
    for r in [&var_ratio, &cube_ratio] {
        let c = r.iter().cloned().fold(0.0, f64::max);
        assert!(r.iter().all(|&x| x <= c));
        // no growth beyond the fitted constant as i doubles
        assert!(r[3] <= 1.5 * r[1], "{r:?}");
    }
}

#[test]
fn percolation_respects_boundary_and_parameter() {
    let pf = pf08();
    let mut rng = stream(25, 0);
    let t = sample_boltzmann(30, &pf, &mut rng).unwrap();
    let all = percolate(t.clone(), 1.0, BoundaryCondition::AllBlack, &mut rng).unwrap();
    assert!(all.colours.iter().all(|&c| c == Colour::Black));
    let runs = BoundaryCondition::Runs(vec![(Colour::Black, 10), (Colour::White, 20)]);
    let none = percolate(t.clone(), 0.0, runs.clone(), &mut rng).unwrap();
    assert!(none.colours[30..].iter().all(|&c| c == Colour::White));
    assert_eq!(none.colours[..30], runs.colours(30).unwrap()[..]);
    assert!(percolate(t.clone(), 0.5, BoundaryCondition::Runs(vec![(Colour::Black, 3)]), &mut rng).is_err());
    assert!(percolate(t, 1.5, BoundaryCondition::AllBlack, &mut rng).is_err());

    let p = 0.3;
    let (mut black, mut internal) = (0u64, 0u64);
    for _ in 0..300 {
        let t = sample_boltzmann(40, &pf, &mut rng).unwrap();
        let c = percolate(t, p, BoundaryCondition::AllBlack, &mut rng).unwrap();
        internal += (c.colours.len() - 40) as u64;
        black += c.colours[40..].iter().filter(|&&c| c == Colour::Black).count() as u64;
    }
    let f = black as f64 / internal as f64;
    assert!((f - p).abs() < 3.0 * (p * (1.0 - p) / internal as f64).sqrt());
}
