use leafcalc::bisubmersion::IdentityBisubmersion;
use leafcalc::calculus;
use leafcalc::foliation::{Domain, FoliationModule, PolyVectorField};
use leafcalc::polysym::{ClosedFormSymbol, PolyhomSymbol, Symbol};
use leafcalc::quantize::{apply_symbol, quantize_dense, GridFunction, GridOperator, LinearOp, PeriodicGrid};
use leafcalc::ring::Coef;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn matrix(n: usize, seed: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |i, j| {
        let k = (i * n + j) % seed.len();
        Complex64::new(seed[k] * (1.0 + i as f64), seed[(k + 1) % seed.len()] - j as f64 * 0.1)
    })
}

fn operator(grid: &PeriodicGrid, seed: &[f64]) -> GridOperator {
    GridOperator::new(grid.clone(), matrix(grid.len(), seed)).unwrap()
}

fn polynomial(c: &[i64]) -> String {
    format!("{}*x^2 + {}*x*y + {}*y + {}", c[0], c[1], c[2], c[3])
}

fn field(c: &[i64]) -> PolyVectorField {
    PolyVectorField::parse(&[&polynomial(&c[..4]), &polynomial(&c[4..])]).unwrap()
}

fn max_diff(a: &GridOperator, b: &GridOperator) -> f64 {
    (a.matrix() - b.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn coefs() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-3i64..=3, 8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn composition_is_associative(a in prop::collection::vec(-1.0f64..1.0, 7), b in prop::collection::vec(-1.0f64..1.0, 5), c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let g = PeriodicGrid::new(1, 6).unwrap();
        let (a, b, c) = (operator(&g, &a), operator(&g, &b), operator(&g, &c));
        let left = a.compose(&b).unwrap().compose(&c).unwrap();
        let right = a.compose(&b.compose(&c).unwrap()).unwrap();
        prop_assert!(max_diff(&left, &right) < 1e-10 * (1.0 + left.max_abs()));
    }

    #[test]
    fn adjoint_reverses_products(a in prop::collection::vec(-1.0f64..1.0, 7), b in prop::collection::vec(-1.0f64..1.0, 5)) {
        let g = PeriodicGrid::new(1, 8).unwrap();
        let (a, b) = (operator(&g, &a), operator(&g, &b));
        let lhs = a.compose(&b).unwrap().adjoint();
        let rhs = b.adjoint().compose(&a.adjoint()).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-10 * (1.0 + lhs.max_abs()));
        prop_assert!(max_diff(&a.adjoint().adjoint(), &a) == 0.0);
    }

    #[test]
    fn operator_text_round_trip(a in prop::collection::vec(-1e3f64..1e3, 5), origin in -3.0f64..3.0) {
        let g = PeriodicGrid::new(1, 4).unwrap().with_origin(origin);
        let op = operator(&g, &a);
        prop_assert_eq!(GridOperator::from_text(&op.to_text()).unwrap(), op);
    }

    #[test]
    fn function_text_round_trip(v in prop::collection::vec(-1e6f64..1e6, 32)) {
        let g = PeriodicGrid::new(2, 4).unwrap();
        let f = GridFunction::new(v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect());
        let (g2, f2) = GridFunction::from_text(&f.to_text(&g)).unwrap();
        prop_assert_eq!(g2, g);
        prop_assert_eq!(f2, f);
    }

    #[test]
    fn symbol_text_round_trip(a in -5i64..=5, b in 1i64..=4, order in -2i32..=2) {
        let lead = format!("({a} + {b}*cos(x))*xi^{order}");
        let next = format!("sin(x)*xi^{}", order - 1);
        let s = PolyhomSymbol::parse(order, &[&lead, &next], 1, 1).unwrap();
        let back = PolyhomSymbol::from_text(&s.to_text()).unwrap();
        for xi in [1.5, 3.0, 40.0] {
            let (u, v) = (s.eval(&[0.7], &[xi]).unwrap(), back.eval(&[0.7], &[xi]).unwrap());
            prop_assert!((u - v).norm() <= 1e-12 * (1.0 + u.norm()));
        }
    }

    #[test]
    fn bracket_is_antisymmetric_and_satisfies_jacobi(x in coefs(), y in coefs(), z in coefs()) {
        let (x, y, z) = (field(&x), field(&y), field(&z));
        let xy = x.bracket(&y).unwrap();
        prop_assert_eq!(xy.add(&y.bracket(&x).unwrap()).unwrap(), PolyVectorField::zero(2));
        let jacobi = x.bracket(&y.bracket(&z).unwrap()).unwrap()
            .add(&y.bracket(&z.bracket(&x).unwrap()).unwrap()).unwrap()
            .add(&z.bracket(&xy).unwrap()).unwrap();
        prop_assert_eq!(jacobi, PolyVectorField::zero(2));
    }

    #[test]
    fn derivative_obeys_leibniz(f in prop::collection::vec(-4i64..=4, 4), g in prop::collection::vec(-4i64..=4, 4), j in 0usize..2) {
        let (f, g) = (Coef::parse(&polynomial(&f), 2).unwrap(), Coef::parse(&polynomial(&g), 2).unwrap());
        let lhs = f.mul(&g).deriv(j);
        let rhs = f.deriv(j).mul(&g).add(&f.mul(&g.deriv(j)));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn fast_and_dense_quantizations_agree(a in 1.5f64..4.0, b in -1.0f64..1.0, k in 1i64..4) {
        let expr = format!("({a} + {b}*sin({k}*x))*xi^2 + cos(x)*xi");
        let s = ClosedFormSymbol::parse(2, &expr, &format!("({a} + {b}*sin({k}*x))*xi^2"), 1, 1).unwrap();
        let g = PeriodicGrid::new(1, 16).unwrap();
        let f = GridFunction::from_fn(&g, |x| Complex64::new((x[0] * 2.0).sin(), (x[0] * 5.0).cos()));
        let fast = apply_symbol(&s, &f, &g).unwrap();
        let dense = quantize_dense(&s, &g).unwrap().apply(&f).unwrap();
        prop_assert!(fast.sub(&dense).max_norm() < 1e-10);
    }

    #[test]
    fn laplacian_is_symmetric_and_nonnegative(a in -2i64..=2, b in -2i64..=2, c in 1i64..=2) {
        let first = format!("{a}*sin(x) + {c}");
        let second = format!("{b}*cos(y)");
        let m = FoliationModule::parse(Domain::Torus { dim: 2 }, &[vec![first.as_str(), "0"], vec!["0", second.as_str()]]).unwrap();
        let g = PeriodicGrid::new(2, 6).unwrap();
        let lap = calculus::laplacian(&m, &g, None).unwrap();
        prop_assert!(lap.element.op.hermitian_defect() < 1e-10);
        let min = leafcalc::spectra::spectrum(&lap.element.op, 1).unwrap()[0];
        prop_assert!(min >= -1e-8, "min eigenvalue {}", min);
    }

    #[test]
    fn fiber_dimension_bounds_leaf_dimension(x in prop::array::uniform3(-1.5f64..1.5)) {
        let gens = [vec!["0", "-z", "y"], vec!["z", "0", "-x"], vec!["-y", "x", "0"]];
        let m = FoliationModule::parse(Domain::Box { lower: vec![-2.0; 3], upper: vec![2.0; 3] }, &gens).unwrap();
        let fiber = m.fiber_dimension(&x, 2).unwrap();
        let leaf = m.leaf_tangent_dim(&x).unwrap();
        prop_assert!(leaf <= fiber && fiber <= 3);
    }

    #[test]
    fn rotation_flow_preserves_radius(y in prop::array::uniform3(-1.0f64..1.0), xi in prop::array::uniform3(-0.28f64..0.28)) {
        let gens = [vec!["0", "-z", "y"], vec!["z", "0", "-x"], vec!["-y", "x", "0"]];
        let m = FoliationModule::parse(Domain::Box { lower: vec![-3.0; 3], upper: vec![3.0; 3] }, &gens).unwrap();
        let b = IdentityBisubmersion::new(m);
        prop_assert_eq!(b.target(&y, &[0.0; 3]).unwrap(), y.to_vec());
        let t = b.target(&y, &xi).unwrap();
        let r = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!((r(&t) - r(&y)).abs() < 1e-9);
    }
}

#[test]
fn symbol_values_are_finite_off_zero() {
    let s = ClosedFormSymbol::parse(-2, "1/(1 + xi^2)", "xi^(-2)", 1, 1).unwrap();
    for xi in [-40.0, -1.0, 0.0, 1.0, 40.0] {
        assert!(s.value(&[0.3], &[xi]).is_finite());
    }
}
