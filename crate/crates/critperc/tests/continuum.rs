use critperc::continuum::{
    crt_from_excursion, crt_from_function, sample_excursion, sample_excursion_fixed_lifetime, sample_lifetime,
};
use critperc::excursions::{tail_exponent_estimate, TailFitOptions};
use critperc::rng::stream;
use critperc::stats::{ks_one_sample, ks_two_sample};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Gaussian random-walk bridge with `n` steps over `[0, zeta]`, kept only when
/// its interior is positive. Returns the midpoint value.
fn rejection_midpoint<R: Rng>(zeta: f64, n: usize, rng: &mut R) -> f64 {
    let sd = (zeta / n as f64).sqrt();
    let mut w = vec![0.0; n + 1];
    loop {
        for i in 1..=n {
            let z: f64 = StandardNormal.sample(rng);
            w[i] = w[i - 1] + sd * z;
        }
        let end = w[n];
        let ok = (1..n).all(|i| w[i] - end * i as f64 / n as f64 > 0.0);
        if ok {
            return w[n / 2] - end / 2.0;
        }
    }
}

#[test]
fn lifetime_law() {
    let mut rng = stream(71, 0);
    let n = 100_000;
    let z: Vec<f64> = (0..n).map(|_| sample_lifetime(&mut rng)).collect();
    assert!(z.iter().all(|&x| x >= 1.0));
    let p4 = z.iter().filter(|&&x| x >= 4.0).count() as f64 / n as f64;
    assert!((p4 - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    let fit = tail_exponent_estimate(&z, &TailFitOptions { x_min: 1.0, ..Default::default() }).unwrap();
    assert!((fit.exponent + 0.5).abs() < 0.03, "{fit:?}");
    assert!(fit.x_max >= 1e3);
}

#[test]
fn excursion_shape_and_errors() {
    let mut rng = stream(72, 0);
    let e = sample_excursion_fixed_lifetime(3.0, 3.0 / 2048.0, &mut rng).unwrap();
    assert_eq!(e.values.len(), 2049);
    assert_eq!((e.values[0], *e.values.last().unwrap()), (0.0, 0.0));
    assert_eq!(e.violations, 0);
    assert!(e.values[1..e.values.len() - 1].iter().all(|&v| v > 0.0));
    assert!(e.bridge_argmin < 2048);
    assert!((e.value_at(e.zeta) - 0.0).abs() < 1e-12);
    assert!(sample_excursion_fixed_lifetime(0.5, 0.001, &mut rng).is_err());
    assert!(sample_excursion_fixed_lifetime(1.0, 0.1, &mut rng).is_err());
    assert!(sample_excursion_fixed_lifetime(f64::INFINITY, 0.1, &mut rng).is_err());
    let e = sample_excursion(&mut rng).unwrap();
    assert!(e.zeta >= 1.0);
    assert_eq!(e.values.len(), 16385);
}

#[test]
fn rotated_bridge_matches_rejection_oracle() {
    let mut rng = stream(73, 0);
    let n = 10_000;
    let rotated: Vec<f64> =
        (0..n).map(|_| sample_excursion_fixed_lifetime(1.0, 0.01, &mut rng).unwrap().values[50]).collect();
    let oracle: Vec<f64> = (0..n).map(|_| rejection_midpoint(1.0, 100, &mut rng)).collect();
    let ks = ks_two_sample(&rotated, &oracle).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn midpoint_law_on_a_fine_grid() {
    // B(zeta/2) for an excursion of lifetime zeta is sqrt(zeta)/2 times a chi_3 variable
    let mut rng = stream(74, 0);
    let zeta = 2.0;
    let xs: Vec<f64> = (0..3000)
        .map(|_| {
            let e = sample_excursion_fixed_lifetime(zeta, zeta / 4096.0, &mut rng).unwrap();
            e.value_at(zeta / 2.0)
        })
        .collect();
    let chi2 = ChiSquared::new(3.0).unwrap();
    let ks = ks_one_sample(&xs, |x| if x <= 0.0 { 0.0 } else { chi2.cdf((2.0 * x / zeta.sqrt()).powi(2)) }).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn brownian_scaling() {
    let mut rng = stream(75, 0);
    let n = 3000;
    let unit: Vec<f64> =
        (0..n).map(|_| sample_excursion_fixed_lifetime(1.0, 1.0 / 1024.0, &mut rng).unwrap().value_at(0.3)).collect();
    let big: Vec<f64> = (0..n)
        .map(|_| sample_excursion_fixed_lifetime(9.0, 9.0 / 1024.0, &mut rng).unwrap().value_at(2.7) / 3.0)
        .collect();
    let ks = ks_two_sample(&unit, &big).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn crt_metric_properties() {
    let mut rng = stream(76, 0);
    let e = sample_excursion_fixed_lifetime(1.5, 1.5 / 16384.0, &mut rng).unwrap();
    let crt = crt_from_excursion(&e, 200, &mut rng).unwrap();
    assert!(!crt.coarse);
    assert!((crt.space.total_mass() - 1.5).abs() < 1e-12);
    assert_eq!(crt.space.weights[0], 0.0);
    let d = |i: usize, j: usize| crt.space.d(i, j);
    let k = crt.space.n;
    for i in 0..k {
        assert!((d(0, i) - crt.heights[i]).abs() < 1e-12);
        for j in 0..k {
            for l in 0..k {
                assert!(d(i, l) <= d(i, j) + d(j, l) + 1e-12);
            }
        }
    }
    let small = crt_from_excursion(&e, 99, &mut rng).unwrap();
    let d = |i: usize, j: usize| small.space.d(i, j);
    let k = small.space.n;
    for w in 0..k {
        for x in w + 1..k {
            for y in x + 1..k {
                for z in y + 1..k {
                    let s = [d(w, x) + d(y, z), d(w, y) + d(x, z), d(w, z) + d(x, y)];
                    for a in 0..3 {
                        let others =
                            s.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, v)| *v).fold(f64::MIN, f64::max);
                        assert!(s[a] <= others + 1e-12);
                    }
                }
            }
        }
    }
    assert!(crt_from_excursion(&e, 1, &mut rng).is_err());
    let coarse = sample_excursion_fixed_lifetime(1.0, 0.01, &mut rng).unwrap();
    assert!(crt_from_excursion(&coarse, 50, &mut rng).unwrap().coarse);
}

#[test]
fn crt_from_a_known_function() {
    // tent on [0, 2] with a dip: 0 -> 2 at t=0.5 -> 1 at t=1 -> 2 at t=1.5 -> 0
    let mesh = 0.5;
    let values = [0.0, 2.0, 1.0, 2.0, 0.0];
    let crt = crt_from_function(&values, mesh, 2.0, vec![0.0, 0.5, 1.5], vec![0.0, 1.0, 1.0]).unwrap();
    assert_eq!(crt.space.d(0, 1), 2.0);
    assert_eq!(crt.space.d(1, 2), 2.0);
    assert_eq!(crt.space.d(0, 2), 2.0);
    assert!(crt_from_function(&values, mesh, 2.0, vec![0.0], vec![]).is_err());
}

#[test]
fn rerooting_invariance() {
    let mut rng = stream(77, 0);
    let n = 2000;
    let mut from_root = Vec::with_capacity(n);
    let mut from_point = Vec::with_capacity(n);
    for i in 0..2 * n {
        let e = sample_excursion_fixed_lifetime(1.0, 1.0 / 2048.0, &mut rng).unwrap();
        let crt = crt_from_excursion(&e, 2, &mut rng).unwrap();
        if i % 2 == 0 {
            from_root.push(crt.space.d(0, 1));
        } else {
            from_point.push(crt.space.d(2, 1));
        }
    }
    let ks = ks_two_sample(&from_root, &from_point).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn mass_tail() {
    let mut rng = stream(78, 0);
    let masses: Vec<f64> = (0..20_000)
        .map(|_| {
            let zeta = sample_lifetime(&mut rng);
            let e = sample_excursion_fixed_lifetime(zeta, zeta / 128.0, &mut rng).unwrap();
            crt_from_excursion(&e, 2, &mut rng).unwrap().space.total_mass()
        })
        .collect();
    let fit = tail_exponent_estimate(&masses, &TailFitOptions { x_min: 1.0, ..Default::default() }).unwrap();
    assert!((fit.exponent + 0.5).abs() < 0.05, "{fit:?}");
}
