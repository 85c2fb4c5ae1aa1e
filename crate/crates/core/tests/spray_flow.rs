use std::sync::Arc;

use nalgebra::DMatrix;
use pnf_core::field::{BivectorField, ChartBox, Expr};
use pnf_core::linalg::max_abs;
use pnf_core::sampling::Sampler;
use pnf_core::spray::*;

fn so3(r: f64) -> SprayField {
    let chart = Arc::new(ChartBox::new("so3", vec![(-r, r); 3]).unwrap());
    let s = |i: usize, j: usize, e: &str| ((i, j), Expr::parse(e).unwrap());
    SprayField::flat(
        BivectorField::new(chart, vec![s(0, 1, "x3"), s(0, 2, "-x2"), s(1, 2, "x1")]).unwrap(),
    )
}

fn constant(m: &DMatrix<f64>) -> SprayField {
    let n = m.nrows();
    let chart = Arc::new(ChartBox::new("c", vec![(-3.0, 3.0); n]).unwrap());
    SprayField::flat(BivectorField::constant(chart, m).unwrap())
}

fn chart_of(s: &SprayField, rho: f64) -> CotangentChart {
    CotangentChart::new(s.pi().chart().clone(), rho).unwrap()
}

fn so3_samples(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut smp = Sampler::new(seed);
    (0..count)
        .map(|_| {
            let mut z = smp.in_ball(3, 0.75);
            z.extend(smp.in_ball(3, 0.5));
            z
        })
        .collect()
}

#[test]
fn step_doubling_agreement_for_so3() {
    let s = so3(2.0);
    let cc = chart_of(&s, 1.0);
    let z = [0.0, 0.0, 1.0, 0.1, 0.0, 0.0];
    let a = geodesic_flow(&s, &cc, &z, 1.0, 64).unwrap();
    let b = geodesic_flow(&s, &cc, &z, 1.0, 128).unwrap();
    let d = a.state.iter().zip(&b.state).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-10, "{d}");
    let det_ratio = a.jacobian.determinant() / b.jacobian.determinant();
    assert!((det_ratio - 1.0).abs() < 0.1);
}

#[test]
fn forward_then_backward_returns() {
    let s = so3(2.0);
    let cc = chart_of(&s, 1.0);
    for z in so3_samples(10, 3) {
        let f = geodesic_flow(&s, &cc, &z, 1.0, 64).unwrap();
        let g = geodesic_flow(&s, &cc, &f.state, -1.0, 64).unwrap();
        let d = z.iter().zip(&g.state).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-8 * pnf_core::linalg::norm(&z).max(1.0), "{d}");
    }
}

#[test]
fn group_law() {
    let s = so3(2.0);
    let cc = chart_of(&s, 1.0);
    for z in so3_samples(5, 4) {
        for (t, u) in [(0.25, 0.5), (0.5, 0.25), (0.5, 0.5)] {
            let ts = geodesic_flow(&s, &cc, &z, t + u, 256).unwrap();
            let first = geodesic_flow(&s, &cc, &z, u, 128).unwrap();
            let both = geodesic_flow(&s, &cc, &first.state, t, 128).unwrap();
            let d = ts.state.iter().zip(&both.state).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-8, "{d}");
        }
    }
}

#[test]
fn zero_section_is_fixed() {
    let s = so3(2.0);
    let cc = chart_of(&s, 1.0);
    let f = geodesic_flow(&s, &cc, &[0.2, 0.1, -0.3, 0.0, 0.0, 0.0], 1.0, 16).unwrap();
    assert_eq!(f.state, vec![0.2, 0.1, -0.3, 0.0, 0.0, 0.0]);
    let base = f.jacobian.view((0, 0), (3, 3)).into_owned();
    assert_eq!(base, DMatrix::identity(3, 3));
}

#[test]
fn exp_first_order_expansion() {
    let s = so3(2.0);
    let cc = chart_of(&s, 1.0);
    let eps = 1e-3;
    let x = contravariant_exp(&s, &cc, &[0.0, 0.0, 1.0, eps, 0.0, 0.0], 64).unwrap();
    let lin = [0.0, -eps, 1.0];
    let d = x.iter().zip(lin).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(d <= 10.0 * eps * eps, "{d}");
}

#[test]
fn constant_pi_is_closed_form() {
    let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let s = constant(&m);
    let cc = chart_of(&s, 1.0);
    let z = [0.3, -0.1, 0.4, 0.2];
    let o = omega_spray(&s, &cc, &z, 16, 64).unwrap();
    assert!(max_abs(&(o - zero_section_form(&m))) <= 1e-12);
    let x = contravariant_exp(&s, &cc, &z, 3).unwrap();
    assert!((x[0] - (0.3 - 0.2)).abs() < 1e-15 && (x[1] - (-0.1 + 0.4)).abs() < 1e-15);
    let opts = RealizationOptions::default();
    let samples = vec![z.to_vec(), vec![0.0, 0.0, -0.5, 0.5]];
    let r = check_realization(&s, &cc, &samples, &opts);
    assert!(r.passed());
    assert!(r.max("pushforward") <= 1e-12);
    let d = check_self_dual_pair(&s, &cc, &samples, &opts);
    assert!(d.passed());
    assert!(d.max("exp-pushforward") <= 1e-12);
}

#[test]
fn zero_bivector_gives_canonical_form() {
    let s = constant(&DMatrix::zeros(3, 3));
    let cc = chart_of(&s, 1.0);
    let z = [0.3, -0.1, 0.4, 0.2, 0.1, 0.0];
    assert!(max_abs(&(omega_spray(&s, &cc, &z, 16, 8).unwrap() - omega_can(3))) <= 1e-14);
    let samples = vec![z.to_vec()];
    let opts = RealizationOptions::default();
    assert!(check_realization(&s, &cc, &samples, &opts).max("pushforward") <= 1e-14);
    let d = check_self_dual_pair(&s, &cc, &samples, &opts);
    assert!(d.max("orthogonality") <= 1e-14);
}

#[test]
fn so3_realization_and_dual_pair() {
    let s = so3(2.0);
    let cc = chart_of(&s, 1.0);
    let samples = so3_samples(50, 11);
    let opts = RealizationOptions::default();
    let r = check_realization(&s, &cc, &samples, &opts);
    assert!(r.passed(), "{:?} {:?}", r.failures.first(), r.limits);
    assert!(r.max("pushforward") <= 1e-5);
    let d = check_self_dual_pair(&s, &cc, &samples, &opts);
    assert!(d.passed(), "{} {}", d.max("exp-pushforward"), d.max("orthogonality"));
    assert_eq!(r.probed_radius, Some(samples.iter().map(|z| pnf_core::linalg::norm(&z[3..])).fold(0.0, f64::max)));
}

#[test]
fn pullback_consistency_on_so3() {
    let s = so3(2.0);
    let cc = chart_of(&s, 1.0);
    for z in so3_samples(5, 5) {
        let r = pullback_consistency_residual(&s, &cc, &z, 16, 64).unwrap();
        assert!(r <= 1e-6, "{r}");
    }
}

#[test]
fn dual_pair_residual_refines_with_steps() {
    let s = so3(2.0);
    let cc = chart_of(&s, 1.0);
    let samples = so3_samples(8, 12);
    let coarse = RealizationOptions { steps: 8, ..Default::default() };
    let fine = RealizationOptions { steps: 16, ..Default::default() };
    let a = check_self_dual_pair(&s, &cc, &samples, &coarse).max("exp-pushforward");
    let b = check_self_dual_pair(&s, &cc, &samples, &fine).max("exp-pushforward");
    eprintln!("dual pair refinement {a:e} -> {b:e} ratio {}", a / b);
    assert!(a / b >= 8.0, "{a} {b}");
}
