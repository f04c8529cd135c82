//! Acceptance criteria A1 to A9 at full budget. Each test prints one
//! pass/fail line, visible without `--nocapture`.

use std::io::Write;
use std::sync::OnceLock;

use critperc_cli::verify::{self, Context, Criterion};

fn context() -> &'static Context {
    static CTX: OnceLock<Context> = OnceLock::new();
    CTX.get_or_init(|| Context::new(1, 1.0, 1).expect("context"))
}

fn accept(criterion: &Criterion) {
    let report = criterion.run(context());
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", report.line());
    let _ = out.flush();
    assert!(report.passed, "{}", report.line());
}

#[test]
fn a1_exact_constants() {
    accept(&verify::A1);
}

#[test]
fn a2_coding_bijection() {
    accept(&verify::A2);
}

#[test]
fn a3_peeling_contour() {
    accept(&verify::A3);
}

#[test]
fn a4_tail_exponents() {
    accept(&verify::A4);
}

#[test]
fn a5_boltzmann_oracle() {
    accept(&verify::A5);
}

#[test]
fn a6_root_structure() {
    accept(&verify::A6);
}

#[test]
fn a7_geometry_trend() {
    accept(&verify::A7);
}

#[test]
fn a8_walk_and_resistance() {
    accept(&verify::A8);
}

#[test]
fn a9_resistance_oracle() {
    accept(&verify::A9);
}
