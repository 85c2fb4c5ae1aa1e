use nalgebra::DMatrix;
use pnf_core::equivariant::*;
use pnf_core::linalg::{expm, max_abs, omega_std};
use pnf_core::sampling::Sampler;
use pnf_core::Result;

fn random_matrix(s: &mut Sampler, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| s.uniform(-scale, scale))
}

fn antisym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[test]
fn b_map_identities_by_hand() {
    let mut s = Sampler::new(11);
    for m in [1, 2, 3] {
        let w0 = omega_std(m);
        let n = 2 * m;
        for _ in 0..100 {
            let mut e = antisym(&random_matrix(&mut s, n, 1.0));
            e *= 0.3 / max_abs(&e);
            let w = &w0 + &e;
            let b = b_map(&SymplecticPair::new(w0.clone(), w.clone()).unwrap()).unwrap();
            assert!(max_abs(&(b.transpose() * &w0 * &b - &w)) <= 1e-10);
            // symplectic s = exp(ω₀^{-1} H) for symmetric H
            let h = sym(&random_matrix(&mut s, n, 0.3));
            let sp = expm(&(w0.clone().try_inverse().unwrap() * h));
            assert!(max_abs(&(sp.transpose() * &w0 * &sp - &w0)) <= 1e-12);
            let moved = sp.transpose() * &w * &sp;
            let b2 = b_map(&SymplecticPair::new(w0.clone(), moved).unwrap()).unwrap();
            let conj = sp.clone().try_inverse().unwrap() * &b * &sp;
            assert!(max_abs(&(b2 - conj)) <= 1e-9);
        }
    }
}

#[test]
fn sqrt_near_identity_and_conjugation() {
    let mut s = Sampler::new(5);
    for _ in 0..50 {
        let e = random_matrix(&mut s, 4, 0.2);
        let m = DMatrix::identity(4, 4) + &e;
        let r = principal_sqrt(&m).unwrap();
        assert!(max_abs(&(&r * &r - &m)) <= 1e-10 * max_abs(&m));
        assert!(max_abs(&(&r * &m - &m * &r)) <= 1e-10);
        assert!(max_abs(&(&r - DMatrix::identity(4, 4))) <= 4.0 * max_abs(&e));
        let y = DMatrix::identity(4, 4) + random_matrix(&mut s, 4, 0.3);
        let yi = y.clone().try_inverse().unwrap();
        let lhs = principal_sqrt(&(&y * &m * &yi)).unwrap();
        assert!(max_abs(&(lhs - &y * &r * &yi)) <= 1e-9);
    }
}

/// Fiber `R²` with form `C(y)ᵀ σ₀ C(y)` and `ρ_y(g) = C(g y)^{-1} g_f C(y)`,
/// where `g_f` is the action on the fiber and `g` acts on the base `y ∈ R²`.
struct Twisted {
    eps: f64,
    fiber: fn(&DMatrix<f64>) -> DMatrix<f64>,
}

impl Twisted {
    fn c(&self, y: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0 + self.eps * y[0], self.eps * y[1], 0.0, 1.0 + self.eps * y[0] * y[1]])
    }
}

impl EquivariantBundle for Twisted {
    fn fiber_dim(&self) -> usize {
        2
    }
    fn base_point(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
    fn form(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let c = self.c(y);
        Ok(c.transpose() * omega_std(1) * c)
    }
    fn act(&self, g: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        (g * nalgebra::DVector::from_column_slice(y)).as_slice().to_vec()
    }
    fn rep(&self, g: &DMatrix<f64>, y: &[f64]) -> Result<DMatrix<f64>> {
        let gy = self.act(g, y);
        Ok(self.c(&gy).try_inverse().unwrap() * (self.fiber)(g) * self.c(y))
    }
}

#[test]
fn z2_intertwiner_matches_two_term_average() {
    let r = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
    let action = GroupAction::finite(vec![DMatrix::identity(2, 2), r.clone()], vec![0.0, 0.0]).unwrap();
    let b = Twisted { eps: 0.2, fiber: |g| g.clone() };
    let y = [0.3, -0.2];
    let a = average_intertwiner(&action, &b, &y).unwrap();
    let by_hand = (DMatrix::identity(2, 2) + r.clone().try_inverse().unwrap() * b.rep(&r, &y).unwrap()) * 0.5;
    assert!(max_abs(&(&a - by_hand)) <= 1e-15);
    let lhs = average_intertwiner(&action, &b, &b.act(&r, &y)).unwrap() * b.rep(&r, &y).unwrap();
    assert!(max_abs(&(lhs - b.rep(&r, &[0.0, 0.0]).unwrap() * &a)) <= 1e-12);
    assert!(max_abs(&(average_intertwiner(&action, &b, &[0.0, 0.0]).unwrap() - DMatrix::identity(2, 2))) <= 1e-15);
}

#[test]
fn circle_intertwiner_and_trivialization() {
    let gen = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let action = GroupAction::circle(gen, CIRCLE_NODES, vec![0.0, 0.0]).unwrap();
    let b = Twisted { eps: 0.15, fiber: |g| g.clone() };
    let tests: Vec<_> = [0.3, 1.1, 2.5, -0.7].iter().map(|&t| action.element_at(t)).collect();
    for y in [[0.2, 0.1], [-0.3, 0.25]] {
        let a = average_intertwiner(&action, &b, &y).unwrap();
        for g in &tests {
            let lhs = average_intertwiner(&action, &b, &b.act(g, &y)).unwrap() * b.rep(g, &y).unwrap();
            assert!(max_abs(&(lhs - b.rep(g, &[0.0, 0.0]).unwrap() * &a)) <= 1e-8);
        }
        let (form, equi) = trivialization_residuals(&action, &b, &y, &tests).unwrap();
        assert!(form <= 1e-9 && equi <= 1e-8, "{form:e} {equi:e}");
    }
}

#[test]
fn trivial_bundle_gives_identity() {
    let action = GroupAction::trivial(vec![0.0, 0.0]);
    let b = Twisted { eps: 0.0, fiber: |g| g.clone() };
    let phi = equivariant_trivialization(&action, &b, &[0.3, 0.4]).unwrap();
    assert!(max_abs(&(phi - DMatrix::identity(2, 2))) <= 1e-12);
}

/// `σ_y = (1 + |y|²) σ₀` on a trivial group.
struct Scaled;

impl EquivariantBundle for Scaled {
    fn fiber_dim(&self) -> usize {
        4
    }
    fn base_point(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
    fn form(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        Ok(omega_std(2) * (1.0 + y[0] * y[0] + y[1] * y[1]))
    }
    fn act(&self, _: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }
    fn rep(&self, _: &DMatrix<f64>, _: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(4, 4))
    }
}

#[test]
fn scaled_form_trivialization() {
    let action = GroupAction::trivial(vec![0.0, 0.0]);
    let y = [0.4, -0.3];
    let phi = equivariant_trivialization(&action, &Scaled, &y).unwrap();
    let expect = DMatrix::identity(4, 4) * (1.0f64 + 0.25).sqrt();
    assert!(max_abs(&(phi - expect)) <= 1e-12);
}

#[test]
fn invalid_groups_are_rejected() {
    let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    // {I, R} with R of order 4 is not closed
    assert!(GroupAction::finite(vec![DMatrix::identity(2, 2), r.clone()], vec![0.0; 2]).is_err());
    assert!(GroupAction::finite(vec![r.clone() * -1.0], vec![0.0; 2]).is_err());
    assert!(GroupAction::circle(r * 0.5, 16, vec![0.0; 2]).is_err());
}

mod invariant {
    use std::sync::Arc;

    use nalgebra::DMatrix;
    use pnf_core::equivariant::*;
    use pnf_core::field::{BivectorField, ChartBox, Expr};
    use pnf_core::linalg::max_abs;
    use pnf_core::spray::{CotangentChart, SprayField};
    use pnf_core::Error;

    fn biv(n: usize, r: f64, slots: &[(usize, usize, &str)]) -> BivectorField {
        let chart = Arc::new(ChartBox::new("m", vec![(-r, r); n]).unwrap());
        let slots = slots.iter().map(|&(i, j, s)| ((i - 1, j - 1), Expr::parse(s).unwrap())).collect();
        BivectorField::new(chart, slots).unwrap()
    }

    fn so3() -> BivectorField {
        biv(3, 2.0, &[(1, 2, "x3"), (1, 3, "-x2"), (2, 3, "x1")])
    }

    fn z2_about_x3() -> GroupAction {
        let r = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -1.0, 1.0]));
        GroupAction::finite(vec![DMatrix::identity(3, 3), r], vec![0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn z2_preserves_so3() {
        let a = z2_about_x3();
        let pi = so3();
        let pts = vec![vec![0.1, -0.3, 0.9], vec![0.5, 0.2, 1.3]];
        assert!(a.check_poisson(|x| pi.matrix(x), &pts).unwrap() <= 1e-15);
        // a reflection reverses π
        let refl = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, 1.0]));
        let bad = GroupAction::finite(vec![DMatrix::identity(3, 3), refl], vec![0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(bad.check_poisson(|x| pi.matrix(x), &pts), Err(Error::InvalidAction(_))));
    }

    #[test]
    fn averaging_flat_spray_is_identity() {
        let a = z2_about_x3();
        let s = SprayField::flat(so3());
        let avg = invariant_spray(&s, &a).unwrap();
        assert!(avg.is_flat());
        let chart = CotangentChart::new(so3().chart().clone(), 1.0).unwrap();
        let tests: Vec<_> = a.elements().iter().map(|(g, _)| g.clone()).collect();
        let r = spray_equivariance_residual(&avg, &chart, &a, &tests, &[0.1, 0.2, 1.1, 0.3, -0.2, 0.1], 1.0, 32)
            .unwrap();
        assert!(r <= 1e-12, "{r:e}");
        let trivial = invariant_spray(&s, &GroupAction::trivial(vec![0.0, 0.0, 1.0])).unwrap();
        assert!(trivial.is_flat());
    }

    #[test]
    fn averaging_restores_equivariance() {
        let a = z2_about_x3();
        let mut gamma = vec![0.0; 27];
        // Γ_1^{33} and Γ_3^{11}: the first is odd under the Z₂, the second even
        gamma[2 * 3 + 2] = 0.4;
        gamma[2 * 9] = 0.3;
        let s = SprayField::with_quadratic(so3(), gamma).unwrap();
        let chart = CotangentChart::new(so3().chart().clone(), 1.0).unwrap();
        let tests: Vec<_> = a.elements().iter().map(|(g, _)| g.clone()).collect();
        let z = [0.1, 0.2, 1.1, 0.3, -0.2, 0.4];
        let before = spray_equivariance_residual(&s, &chart, &a, &tests, &z, 1.0, 32).unwrap();
        let avg = invariant_spray(&s, &a).unwrap();
        let after = spray_equivariance_residual(&avg, &chart, &a, &tests, &z, 1.0, 32).unwrap();
        assert!(before > 1e-3 && after <= 1e-9, "{before:e} {after:e}");
        let g = avg.gamma().unwrap();
        assert!(g[2 * 3 + 2] == 0.0 && (g[18] - 0.3).abs() <= 1e-15);
        // idempotent
        let again = invariant_spray(&avg, &a).unwrap();
        assert!(again.gamma().unwrap().iter().zip(g).all(|(p, q)| (p - q).abs() <= 1e-12));
    }

    #[test]
    fn transversal_of_constant_symplectic_is_a_point() {
        let pi = biv(4, 1.0, &[(1, 2, "-1"), (3, 4, "-1")]);
        let td = invariant_transversal(&pi, &GroupAction::trivial(vec![0.0; 4]), 0.1).unwrap();
        assert_eq!(td.k(), 0);
    }

    #[test]
    fn transversal_of_product_is_three_dimensional() {
        // symplectic R² × so(3)* at a zero of the so(3)* part
        let pi = biv(5, 1.0, &[(1, 2, "-1"), (3, 4, "x5"), (3, 5, "-x4"), (4, 5, "x3")]);
        let td = invariant_transversal(&pi, &GroupAction::trivial(vec![0.0; 5]), 0.2).unwrap();
        assert_eq!(td.k(), 3);
        let t = td.embedding().jacobian(&[0.0; 3]).unwrap();
        assert!(max_abs(&t.rows(0, 2).into_owned()) <= 1e-12);
    }

    #[test]
    fn swapped_planes_keep_complement_invariant() {
        let pi = biv(5, 1.0, &[(1, 2, "-1"), (3, 4, "-1")]);
        let mut swap = DMatrix::zeros(5, 5);
        for (i, j) in [(0, 2), (2, 0), (1, 3), (3, 1), (4, 4)] {
            swap[(i, j)] = 1.0;
        }
        let a = GroupAction::finite(vec![DMatrix::identity(5, 5), swap.clone()], vec![0.0; 5]).unwrap();
        a.check_poisson(|x| pi.matrix(x), &[vec![0.1; 5]]).unwrap();
        let td = invariant_transversal(&pi, &a, 0.2).unwrap();
        let k = td.embedding().jacobian(&[0.0]).unwrap();
        let (_, defect) = induced_linear_action(&k, &swap);
        assert!(defect <= 1e-12, "{defect:e}");
    }

    #[test]
    fn odd_rank_is_an_error() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0]));
        assert!(matches!(leaf_tangent(&m), Err(Error::RankOddity { rank: 1 })));
    }
}

mod split {
    use std::sync::Arc;
    use std::time::Instant;

    use nalgebra::DMatrix;
    use pnf_core::equivariant::*;
    use pnf_core::field::{BivectorField, ChartBox, Expr};
    use pnf_core::linalg::{max_abs, omega_std};
    use pnf_core::report::CheckReport;

    fn biv(n: usize, r: f64, slots: &[(usize, usize, &str)]) -> BivectorField {
        let chart = Arc::new(ChartBox::new("m", vec![(-r, r); n]).unwrap());
        let slots = slots.iter().map(|&(i, j, s)| ((i - 1, j - 1), Expr::parse(s).unwrap())).collect();
        BivectorField::new(chart, slots).unwrap()
    }

    fn show(name: &str, r: &CheckReport, t: Instant) {
        eprintln!(
            "{name}: sym {:e} cross {:e} y {:e} origin {:e} group {:e} in {:?}",
            r.max("symplectic-block"),
            r.max("cross-block"),
            r.max("transversal-block"),
            r.max("transversal-origin"),
            r.max("group-conjugation"),
            t.elapsed()
        );
    }

    #[test]
    fn darboux_frame() {
        let s = DMatrix::from_row_slice(4, 4, &[0.0, 2.0, 0.5, 0.0, -2.0, 0.0, 0.0, 1.0, -0.5, 0.0, 0.0, 3.0, 0.0, -1.0, -3.0, 0.0]);
        let d = darboux_basis(&s).unwrap();
        assert!(max_abs(&(d.transpose() * &s * &d - omega_std(2))) <= 1e-14);
    }

    #[test]
    fn constant_symplectic_is_affine() {
        let pi = biv(4, 1.0, &[(1, 2, "-1"), (3, 4, "-1")]);
        let t = Instant::now();
        let sp = weinstein_split(&pi, &GroupAction::trivial(vec![0.1, 0.0, -0.1, 0.2]), SplitOptions::default()).unwrap();
        let zs = sp.sample_plan(4, 0.1, 0.9, 1);
        let r = sp.verify(&zs);
        show("R4", &r, t);
        assert!(r.passed(), "{:?}", r.failures);
        assert!(r.max("symplectic-block") <= 1e-10 && r.max("cross-block") <= 1e-10);
    }

    #[test]
    fn so3_axis_split() {
        let pi = biv(3, 2.0, &[(1, 2, "x3"), (1, 3, "-x2"), (2, 3, "x1")]);
        let t = Instant::now();
        let sp = weinstein_split(&pi, &GroupAction::trivial(vec![0.0, 0.0, 1.0]), SplitOptions::default()).unwrap();
        assert_eq!((sp.symplectic_dim(), sp.transversal_dim()), (2, 1));
        let zs = sp.sample_plan(4, 0.1, 0.9, 2);
        let r = sp.verify(&zs);
        show("so3", &r, t);
        assert!(r.passed(), "{:?}", r.failures);
    }

    #[test]
    fn so3_axis_with_z2() {
        let pi = biv(3, 2.0, &[(1, 2, "x3"), (1, 3, "-x2"), (2, 3, "x1")]);
        let r = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -1.0, 1.0]));
        let action = GroupAction::finite(vec![DMatrix::identity(3, 3), r.clone()], vec![0.0, 0.0, 1.0]).unwrap();
        let td = invariant_transversal(&pi, &action, 0.2).unwrap();
        let bundle = ConormalBundle::new(&td).unwrap();
        for y in [-0.15, 0.1] {
            let (form, equi) = trivialization_residuals(&action, &bundle, &[y], std::slice::from_ref(&r)).unwrap();
            assert!(form <= 1e-9 && equi <= 1e-9, "{form:e} {equi:e}");
        }
        let sp = weinstein_split(&pi, &action, SplitOptions::default()).unwrap();
        let rep = sp.verify(&sp.sample_plan(2, 0.1, 0.9, 6));
        assert!(rep.passed(), "{:?}", rep.failures);
    }

    #[test]
    fn product_with_z4() {
        let pi = biv(7, 1.0, &[(1, 2, "-1"), (3, 4, "-1"), (5, 6, "x7"), (5, 7, "-x6"), (6, 7, "x5")]);
        let mut g = DMatrix::identity(7, 7);
        g[(0, 0)] = 0.0;
        g[(1, 1)] = 0.0;
        g[(0, 1)] = -1.0;
        g[(1, 0)] = 1.0;
        let els: Vec<DMatrix<f64>> = (0..4).map(|k| g.pow(k)).collect();
        let action = GroupAction::finite(els, vec![0.0; 7]).unwrap();
        action.check_poisson(|x| pi.matrix(x), &[vec![0.1, 0.2, -0.1, 0.3, 0.05, -0.2, 0.1]]).unwrap();
        let t = Instant::now();
        let sp = weinstein_split(&pi, &action, SplitOptions::default()).unwrap();
        assert_eq!((sp.symplectic_dim(), sp.transversal_dim()), (4, 3));
        let zs = sp.sample_plan(3, 0.1, 0.9, 3);
        let r = sp.verify(&zs);
        show("R4xR3", &r, t);
        assert!(r.passed(), "{:?}", r.failures);
        assert!(r.max("symplectic-block") <= 1e-6);
    }
}

#[test]
fn b_map_trial_report() {
    let r = b_map_trials(&[1, 2, 3], 100, 0.3, 17);
    assert!(r.passed(), "{:?}", r.failures);
    assert_eq!(r.residuals.iter().filter(|x| x.kind == "b-pullback").count(), 300);
    assert!(r.max("b-identity") <= 1e-12);
}
