use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use pnf_core::field::{gauge_bivector, BivectorField, ChartBox, Expr, OneFormField, TwoFormField};
use pnf_core::linalg::max_abs;
use pnf_core::moser::*;
use pnf_core::sampling::Sampler;
use pnf_core::spray::{CotangentChart, SprayField};
use pnf_core::transversal::*;
use pnf_core::Error;

fn chart(n: usize, r: f64) -> Arc<ChartBox> {
    Arc::new(ChartBox::new("m", vec![(-r, r); n]).unwrap())
}

fn biv(n: usize, r: f64, slots: &[(usize, usize, &str)]) -> BivectorField {
    let slots = slots.iter().map(|&(i, j, s)| ((i - 1, j - 1), Expr::parse(s).unwrap())).collect();
    BivectorField::new(chart(n, r), slots).unwrap()
}

fn one_form(pi: &BivectorField, comps: &[&str]) -> OneFormField {
    OneFormField::new(pi.chart().clone(), comps.iter().map(|s| Expr::parse(s).unwrap()).collect()).unwrap()
}

fn symplectic_r2(alpha: &[&str]) -> GaugePath {
    let pi = biv(2, 2.0, &[(1, 2, "-1")]);
    let a = one_form(&pi, alpha);
    GaugePath::new(pi, a).unwrap()
}

#[test]
fn gauge_path_symplectic_r2() {
    let gp = symplectic_r2(&["0", "x1"]);
    let x = [0.3, -0.7];
    assert_eq!(gauge_path_eval(&gp, 0.0, &x).unwrap(), gp.pi().matrix(&x).unwrap());
    for t in [0.25, 0.5, 1.0, 2.0] {
        let pt = gauge_path_eval(&gp, t, &x).unwrap();
        let a = 1.0 / (1.0 + t);
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, -a, a, 0.0]);
        assert!(max_abs(&(pt - expect)) <= 1e-15);
    }
    let omega = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let b = TwoFormField::constant(gp.pi().chart().clone(), &omega).unwrap();
    let one_shot = gauge_bivector(gp.pi(), &b, &x).unwrap();
    assert!(max_abs(&(gauge_path_eval(&gp, 1.0, &x).unwrap() - one_shot)) <= 1e-12);
}

#[test]
fn closed_alpha_gives_constant_path() {
    let gp = symplectic_r2(&["x2", "x1"]);
    let x = [0.4, 0.1];
    for t in [0.3, 1.0] {
        assert!(max_abs(&(gauge_path_eval(&gp, t, &x).unwrap() - gp.pi().matrix(&x).unwrap())) <= 1e-15);
    }
}

#[test]
fn singular_gauge_is_reported() {
    let gp = symplectic_r2(&["0", "x1"]);
    assert!(matches!(gauge_path_eval(&gp, -1.0, &[0.0, 0.0]), Err(Error::SingularGauge { .. })));
}

#[test]
fn moser_flow_symplectic_r2() {
    let gp = symplectic_r2(&["0", "x1"]);
    let x = [0.3, 0.4];
    let a = moser_flow(&gp, 0.0, 1.0, &x, 64).unwrap();
    let b = moser_flow(&gp, 0.0, 1.0, &x, 128).unwrap();
    let gap = a.end.iter().zip(&b.end).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(gap <= 1e-9, "{gap:e}");
    // ẋ₁ = −x₁/(1+t), so φ^{1,0}(x) = (x₁/2, x₂)
    assert!((b.end[0] - 0.15).abs() <= 1e-9 && (b.end[1] - 0.4).abs() <= 1e-15);
    let res = stabilization_residual(&gp, 0.0, 1.0, &b).unwrap();
    assert!(res <= 1e-6, "{res:e}");
}

#[test]
fn zero_alpha_flow_is_identity() {
    let gp = symplectic_r2(&["0", "0"]);
    let f = moser_flow(&gp, 0.0, 1.0, &[0.2, -0.5], 8).unwrap();
    assert_eq!(f.end, vec![0.2, -0.5]);
    assert!(max_abs(&(f.jacobian - DMatrix::identity(2, 2))) <= 1e-10);
}

#[test]
fn stabilization_and_cocycle_on_samples() {
    let gp = symplectic_r2(&["0", "x1"]);
    let mut s = Sampler::new(3);
    let xs: Vec<Vec<f64>> = (0..8).map(|_| s.in_box(&[(-1.0, 1.0), (-1.0, 1.0)])).collect();
    let r = verify_moser(&gp, &xs, &MoserOptions::default());
    assert!(r.passed(), "{:?} {:e} {:e}", r.failures, r.max("stabilization"), r.max("cocycle"));
}

#[test]
fn flow_fixes_first_order_zeros_of_alpha() {
    let gp = symplectic_r2(&["0", "x1^2"]);
    let f = moser_flow(&gp, 0.0, 1.0, &[0.0, 0.3], 16).unwrap();
    assert_eq!(f.end, vec![0.0, 0.3]);
    assert!(max_abs(&(f.jacobian - DMatrix::identity(2, 2))) <= 1e-6);
}

/// `d(f₁² dy₁)` on `(y.., f..)` with `y₁ = z[0]`, `f₁ = z[k]`.
fn d_f1sq_dy1(n: usize, k: usize, z: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    m[(0, k)] = -2.0 * z[k];
    m[(k, 0)] = 2.0 * z[k];
    m
}

#[test]
fn primitive_of_zero_is_zero() {
    let eta = relative_primitive(&|_: &[f64]| Ok(DMatrix::zeros(2, 2)), 1, &[0.1, 0.3]).unwrap();
    assert_eq!(eta.as_slice(), &[0.0, 0.0]);
}

#[test]
fn nonvanishing_difference_is_rejected() {
    let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let r = relative_primitive(&|_: &[f64]| Ok(c.clone()), 1, &[0.1, 0.3]);
    assert!(matches!(r, Err(Error::NotVanishingOnX { .. })));
}

#[test]
fn primitive_of_d_f1sq_dy1() {
    let delta = |z: &[f64]| Ok(d_f1sq_dy1(2, 1, z));
    let z = [0.2, -0.35];
    let eta = relative_primitive(&delta, 1, &z).unwrap();
    assert!((eta[0] - z[1] * z[1]).abs() <= 1e-15 && eta[1].abs() <= 1e-15);
    let c = check_primitive(&delta, 1, &z, 1e-5).unwrap();
    assert!(c.exactness <= 1e-6 && c.zero_value == 0.0 && c.zero_jet <= 1e-6, "{c:?}");
}

struct Setup {
    spray: SprayField,
    chart: CotangentChart,
    cc: ConormalChart,
}

fn setup(pi: BivectorField, bounds: Vec<(f64, f64)>, comps: &[&str], probe: &[f64], radius: f64) -> Setup {
    let params = Arc::new(ChartBox::new("y", bounds).unwrap());
    let e = Embedding::new(params, pi.chart().clone(), comps.iter().map(|s| Expr::parse(s).unwrap()).collect()).unwrap();
    let td = check_transversal(&pi, &e, &[probe.to_vec()]).unwrap();
    let cc = conormal_chart(&td, radius).unwrap();
    let chart = CotangentChart::new(pi.chart().clone(), 1.0).unwrap();
    Setup { spray: SprayField::flat(pi), chart, cc }
}

fn samples(k: usize, c: usize, ybox: f64, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut s = Sampler::new(seed);
    (0..count)
        .map(|i| {
            let mut z = s.in_box(&vec![(-ybox, ybox); k]);
            if i % 3 == 0 {
                z.extend(vec![0.0; c]);
            } else {
                z.extend(s.in_ball(c, radius));
            }
            z
        })
        .collect()
}

#[test]
fn identical_extensions_give_identity_flow() {
    let s = setup(biv(4, 3.0, &[(1, 2, "-1"), (3, 4, "-1")]), vec![(-0.5, 0.5); 2], &["x1", "x2", "0", "0"], &[0.0, 0.0], 0.3);
    let zs = samples(2, 2, 0.4, 0.3, 3, 1);
    let r = verify_extension_independence(&s.cc, canonical_extension, canonical_extension, &zs, &Default::default());
    assert!(r.passed() && r.max("pushforward") <= 1e-9, "{:?} {:e}", r.failures, r.max("pushforward"));
}

#[test]
fn extension_independence_symplectic_r4() {
    let s = setup(biv(4, 3.0, &[(1, 2, "-1"), (3, 4, "-1")]), vec![(-0.5, 0.5); 2], &["x1", "x2", "0", "0"], &[0.0, 0.0], 0.3);
    let b = |cc: &ConormalChart, z: &[f64]| Ok(canonical_extension(cc, z)? + d_f1sq_dy1(4, 2, z));
    let zs = samples(2, 2, 0.4, 0.3, 9, 4);
    let opts = ExtensionOptions { tol: 1e-6, ..Default::default() };
    let r = verify_extension_independence(&s.cc, canonical_extension, b, &zs, &opts);
    assert!(r.passed(), "{:?} {:e}", r.failures, r.max("pushforward"));
}

#[test]
fn extension_independence_so3_axis() {
    let pi = biv(3, 2.0, &[(1, 2, "x3"), (1, 3, "-x2"), (2, 3, "x1")]);
    let s = setup(pi, vec![(-0.2, 0.2)], &["0", "0", "1+x1"], &[0.0], 0.15);
    let disc = Discretization { steps: 8, quad: 8 };
    let a = |cc: &ConormalChart, z: &[f64]| sigma_tilde(&s.spray, &s.chart, cc, z, disc);
    let zs = samples(1, 2, 0.2, 0.15, 6, 8);
    let t0 = Instant::now();
    let r = verify_extension_independence(&s.cc, a, canonical_extension, &zs, &ExtensionOptions::default());
    eprintln!(
        "so3 extension independence: push {:e} fix {:e} id {:e} in {:?}",
        r.max("pushforward"),
        r.max("fixes-X"),
        r.max("identity-differential"),
        t0.elapsed()
    );
    assert!(r.passed(), "{:?}", r.failures);
}

