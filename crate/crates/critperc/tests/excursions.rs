use critperc::excursions::{
    contract_to_jumps, reverse, sample_conditioned_excursion, sample_excursion, sample_excursion_in_window, sample_tau,
    simulate_peeling, simulate_peeling_prefix, tail_exponent_estimate, Caps, LatticePath, PathKind, PeelEvent,
    PeelingLaw, PeelingTrace, TailFitOptions,
};
use critperc::model::ModelParams;
use critperc::rng::stream;
use critperc::Error;
use proptest::prelude::*;
use rand::Rng;

fn params() -> ModelParams {
    ModelParams::new(0.8).unwrap()
}

/// All tree excursions (start and end at 1, stay >= 1) with `len` values.
fn tree_paths(len: usize) -> Vec<Vec<i64>> {
    fn go(cur: &mut Vec<i64>, len: usize, out: &mut Vec<Vec<i64>>) {
        let z = *cur.last().unwrap();
        if cur.len() == len {
            if z == 1 {
                out.push(cur.clone());
            }
            return;
        }
        for next in std::iter::once(z + 1).chain((1..z).rev()) {
            cur.push(next);
            go(cur, len, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut vec![1], len, &mut out);
    out
}

#[test]
fn immediate_termination_and_validation() {
    assert_eq!(LatticePath::peeling(vec![1, 0]).unwrap().tau(), Some(1));
    match LatticePath::peeling(vec![1, 3, 0]) {
        Err(Error::InvalidPath { index, .. }) => assert_eq!(index, 1),
        other => panic!("{other:?}"),
    }
    assert!(LatticePath::tree(vec![1, 2, 0]).is_err());
    assert!(LatticePath::peeling(vec![1, 0, 1]).is_err());
    // a walk whose first step is down ends at once
    let law = params().step_law();
    let mut rng = stream(1, 0);
    loop {
        let p = sample_excursion(&law, &Caps::default(), &mut rng).unwrap();
        if p.values()[1] <= 0 {
            assert_eq!(p.tau(), Some(1));
            break;
        }
    }
}

#[test]
fn tau_law() {
    let law = params().step_law();
    let mut rng = stream(2, 0);
    let n = 1_000_000;
    let cap = 10_000;
    let taus: Vec<u64> = (0..n).map(|_| sample_tau(&law, cap, &mut rng).tau).collect();
    let ones = taus.iter().filter(|&&t| t == 1).count() as f64 / n as f64;
    let p = 1.0 - law.prob(1);
    assert!((p - 0.4605).abs() < 1e-4);
    assert!((ones - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    let scaled: Vec<f64> = [100u64, 1000, 10_000]
        .iter()
        .map(|&x| taus.iter().filter(|&&t| t >= x).count() as f64 / n as f64 * (x as f64).sqrt())
        .collect();
    let mean = scaled.iter().sum::<f64>() / 3.0;
    for s in &scaled {
        assert!((s - mean).abs() < 0.1 * mean, "{scaled:?}");
    }
}

#[test]
fn conditioned_excursions() {
    let law = params().step_law();
    let caps = Caps::default();
    let mut rng = stream(3, 0);
    let c = sample_conditioned_excursion(&law, 1, &caps, &mut rng).unwrap();
    assert_eq!(c.rejections, 0);
    // a window keeps the conditioned paths short; its upper end barely moves the ratio
    let upper = Some(1_000_000);
    let mut rate = |n: u64| {
        let mut acc = 0u64;
        let mut att = 0u64;
        for _ in 0..3000 {
            let c = sample_excursion_in_window(&law, n, upper, &caps, &mut rng).unwrap();
            let v = c.path.values();
            assert!(v[..v.len() - 1].iter().all(|&z| z >= 1));
            let tau = c.path.tau().unwrap() as u64;
            assert!(tau >= n && tau < 1_000_000);
            acc += 1;
            att += c.rejections + 1;
        }
        acc as f64 / att as f64
    };
    let ratio = rate(100) / rate(400);
    assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    let tight = Caps { step_cap: 1_000_000, rejection_cap: 3 };
    assert!(matches!(
        sample_conditioned_excursion(&law, 1_000_000, &tight, &mut rng),
        Err(Error::RejectionCap { .. } | Error::StepCap { .. })
    ));
    assert!(sample_excursion_in_window(&law, 10, Some(10), &caps, &mut rng).is_err());
}

#[test]
fn peeling_event_frequencies() {
    let p = params();
    let law = PeelingLaw::new(&p);
    let mut rng = stream(4, 0);
    let n = 1_000_000;
    let (mut black, mut white, mut left1, mut right1) = (0u64, 0u64, 0u64, 0u64);
    for _ in 0..n {
        match law.sample(&mut rng) {
            PeelEvent::InternalBlack => black += 1,
            PeelEvent::InternalWhite => white += 1,
            PeelEvent::BoundaryLeft(1) => left1 += 1,
            PeelEvent::BoundaryRight(1) => right1 += 1,
            _ => {}
        }
    }
    let check = |count: u64, prob: f64| {
        let se = (prob * (1.0 - prob) / n as f64).sqrt();
        assert!((count as f64 / n as f64 - prob).abs() < 3.0 * se, "{count} vs {prob}");
    };
    assert!((p.alpha * p.p_c - 0.11716).abs() < 1e-5);
    check(black, p.alpha * p.p_c);
    check(white, p.alpha * (1.0 - p.p_c));
    check(left1, 0.0875);
    check(right1, 0.0875);
    assert!((law.prob(PeelEvent::BoundaryLeft(1)) - 0.0875).abs() < 1e-12);
}

#[test]
fn peeling_traces_and_contraction() {
    let p = params();
    let mut rng = stream(5, 0);
    for _ in 0..2000 {
        let t = simulate_peeling(&p, &Caps::default(), &mut rng).unwrap();
        assert_eq!(t.boundary[0], 1);
        for (i, e) in t.events.iter().enumerate() {
            assert_eq!(t.boundary[i + 1] - t.boundary[i], e.delta());
        }
        assert_eq!(t.termination_index(), Some(t.boundary.len() - 1));
        let z = contract_to_jumps(&t).unwrap();
        let v = z.values();
        assert!(*v.last().unwrap() <= 0 && v[v.len() - 2] >= 1);
        assert_eq!(z.kind(), PathKind::Peeling);
    }
    let t = PeelingTrace::from_boundary(vec![1, 1, 1, 0]).unwrap();
    assert_eq!(contract_to_jumps(&t).unwrap().values(), &[1, 0]);
    let t = PeelingTrace::from_boundary(vec![1, 2, 2, 1, -1]).unwrap();
    assert_eq!(contract_to_jumps(&t).unwrap().values(), &[1, 2, 1, -1]);
    let open = PeelingTrace::from_boundary(vec![1, 2, 2]).unwrap();
    assert!(contract_to_jumps(&open).is_err());
    let short = simulate_peeling_prefix(&PeelingLaw::new(&p), 1, &mut rng);
    assert!(short.boundary.len() >= 2);
}

#[test]
fn reversal() {
    assert_eq!(reverse(&LatticePath::tree(vec![1]).unwrap()).unwrap().values(), &[1]);
    assert_eq!(reverse(&LatticePath::tree(vec![1, 2, 1]).unwrap()).unwrap().values(), &[1, 2, 1]);
    assert!(reverse(&LatticePath::peeling(vec![1, 0]).unwrap()).is_err());
    let mut total = 0;
    for len in 1..=13 {
        for v in tree_paths(len) {
            let p = LatticePath::tree(v.clone()).unwrap();
            let r = reverse(&p).unwrap();
            assert_eq!(r.kind(), PathKind::ReversedTree);
            assert!(r.increments().all(|d| d == -1 || d >= 1));
            assert_eq!(reverse(&r).unwrap(), p);
            total += 1;
        }
    }
    // number of such paths with at most 12 steps
    assert_eq!(total, 6787);
}

#[test]
fn tail_fit_on_synthetic_and_walk_samples() {
    let mut rng = stream(6, 0);
    let pareto: Vec<f64> = (0..200_000).map(|_| (1.0 - rng.random::<f64>()).powi(-2)).collect();
    let fit = tail_exponent_estimate(&pareto, &TailFitOptions { x_min: 1.0, ..Default::default() }).unwrap();
    assert!((fit.exponent + 0.5).abs() < 0.02, "{fit:?}");
    assert!(fit.ci.0 <= fit.exponent && fit.exponent <= fit.ci.1);

    let law = params().step_law();
    let cap = 100_000;
    let taus: Vec<f64> = (0..200_000).map(|_| sample_tau(&law, cap, &mut rng).tau as f64).collect();
    let opts = TailFitOptions { censor: Some(cap as f64), ..Default::default() };
    let fit = tail_exponent_estimate(&taus, &opts).unwrap();
    assert!((fit.exponent + 0.5).abs() < 0.05, "{fit:?}");
    assert!(fit.x_max / fit.x_min >= 100.0);

    assert!(matches!(
        tail_exponent_estimate(&vec![3.0; 20_000], &TailFitOptions::default()),
        Err(Error::InsufficientData(_))
    ));
    assert!(tail_exponent_estimate(&pareto[..100], &TailFitOptions::default()).is_err());
}

proptest! {
    #[test]
    fn from_boundary_contracts_to_valid_paths(steps in prop::collection::vec(prop_oneof![Just(1i64), Just(0), -3i64..0], 1..40)) {
        let mut b = vec![1i64];
        for s in steps {
            let last = *b.last().unwrap();
            if last <= 0 { break; }
            b.push(last + s);
        }
        let t = PeelingTrace::from_boundary(b.clone()).unwrap();
        if t.is_terminated() {
            let z = contract_to_jumps(&t).unwrap();
            prop_assert!(z.increments().all(|d| d == 1 || d < 0));
            prop_assert_eq!(*z.values().last().unwrap(), *b.last().unwrap());
        }
    }
}
