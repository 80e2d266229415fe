//! Operator-level calculus on a grid: composition, adjoints, vector fields,
//! the foliation Laplacian, parametrices and square roots.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::dense;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::foliation::{Domain, FoliationModule, PolyVectorField};
use crate::polysym::{principal_inverse, principal_sqrt, symbol_product, symbol_sum, Cutoff, PolyhomSymbol, SampleSet, Symbol};
use crate::quantize::{
    axis_frequencies, estimate_order, nyquist_projector, quantize_dense, spectral_derivative, GridOperator, LinearOp, PeriodicGrid,
};

/// Hermitian defect accepted by `sqrt_op`.
pub const SELF_ADJOINT_TOL: f64 = 1e-8;

/// Order below which an operator counts as regularizing.
pub const DEFAULT_REGULARIZING_FLOOR: f64 = -6.0;

/// A pseudodifferential element realized on a grid together with its
/// principal-level symbol.
#[derive(Clone, Debug)]
pub struct PdoElement {
    pub symbol: PolyhomSymbol,
    pub op: GridOperator,
    pub order: i32,
}

impl PdoElement {
    pub fn new(symbol: PolyhomSymbol, op: GridOperator) -> PdoElement {
        PdoElement {
            order: symbol.order_value(),
            symbol,
            op,
        }
    }

    /// `Op(a)` as a dense matrix, keeping `a`'s principal part.
    pub fn quantize(a: &dyn Symbol, grid: &PeriodicGrid) -> Result<PdoElement> {
        Ok(PdoElement::new(a.principal(), quantize_dense(a, grid)?))
    }

    pub fn identity(grid: &PeriodicGrid) -> Result<PdoElement> {
        let one = PolyhomSymbol::new(0, vec![Expr::one()], grid.dim(), grid.dim())?.with_cutoff(Cutoff::None);
        Ok(PdoElement::new(one, GridOperator::identity(grid)))
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.op.grid()
    }

    /// Plane-wave order estimate over `k e_1`.
    pub fn estimate_order(&self, ks: &[i64]) -> Result<f64> {
        estimate_order(&self.op, &axis_frequencies(self.grid().dim(), ks))
    }
}

/// `P Q`; the symbol is the principal product.
pub fn compose(p: &PdoElement, q: &PdoElement) -> Result<PdoElement> {
    Ok(PdoElement::new(symbol_product(&p.symbol, &q.symbol)?, p.op.compose(&q.op)?))
}

pub fn adjoint_op(p: &PdoElement) -> PdoElement {
    PdoElement::new(p.symbol.conj(), p.op.adjoint())
}

pub fn add(p: &PdoElement, q: &PdoElement) -> Result<PdoElement> {
    Ok(PdoElement::new(symbol_sum(&p.symbol, &q.symbol)?, p.op.add(&q.op)?))
}

fn check_grid_dim(grid: &PeriodicGrid, dim: usize) -> Result<()> {
    if grid.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: grid.dim(),
        });
    }
    Ok(())
}

fn weight_values(weight: Option<&Expr>, grid: &PeriodicGrid) -> Result<Vec<f64>> {
    match weight {
        None => Ok(vec![1.0; grid.len()]),
        Some(w) => {
            if w.depends_on_xi() {
                return Err(Error::input("a cutoff may depend on x only"));
            }
            let c = w.compile();
            Ok((0..grid.len()).map(|p| c.eval(&grid.coords(p), &[]).re).collect())
        }
    }
}

fn field_values(x: &PolyVectorField, weight: Option<&Expr>, grid: &PeriodicGrid) -> Result<Vec<Vec<f64>>> {
    let w = weight_values(weight, grid)?;
    let ev = x.evaluator();
    Ok((0..grid.len())
        .map(|p| ev.eval(&grid.coords(p)).into_iter().map(|v| v * w[p]).collect())
        .collect())
}

/// `sum_j diag(w X^j) (G/2) Pi_j` with `Pi_j` the axis-`j` Nyquist projector.
/// The spectral derivative vanishes on Nyquist modes, and averaging the two
/// Nyquist signs of `A -+ i B` restores `|k_j| = G/2` there.
fn nyquist_companion(values: &[Vec<f64>], grid: &PeriodicGrid) -> Result<GridOperator> {
    let size = grid.len();
    let half = grid.nyquist() as f64;
    let mut m = DMatrix::from_element(size, size, Complex64::new(0.0, 0.0));
    for j in 0..grid.dim() {
        if values.iter().all(|v| v[j] == 0.0) {
            continue;
        }
        let pi = nyquist_projector(grid, j);
        let pi = pi.matrix();
        for p in 0..size {
            let c = values[p][j] * half;
            if c == 0.0 {
                continue;
            }
            for q in 0..size {
                m[(p, q)] += pi[(p, q)] * c;
            }
        }
    }
    GridOperator::new(grid.clone(), m)
}

/// `X f = sum_j X^j d_j f` by spectral differentiation.
pub fn vector_field_op(x: &PolyVectorField, grid: &PeriodicGrid) -> Result<PdoElement> {
    weighted_vector_field_op(x, None, grid)
}

/// `(w X) f` for an x-only weight `w`; symbol `i w <X(x), xi>`.
pub fn weighted_vector_field_op(x: &PolyVectorField, weight: Option<&Expr>, grid: &PeriodicGrid) -> Result<PdoElement> {
    let n = x.dim();
    check_grid_dim(grid, n)?;
    let values = field_values(x, weight, grid)?;
    let size = grid.len();
    let mut m = DMatrix::from_element(size, size, Complex64::new(0.0, 0.0));
    for j in 0..n {
        if values.iter().all(|v| v[j] == 0.0) {
            continue;
        }
        let d = spectral_derivative(grid, j);
        let d = d.matrix();
        for p in 0..size {
            let c = values[p][j];
            if c == 0.0 {
                continue;
            }
            for q in 0..size {
                let e = d[(p, q)];
                if e.re != 0.0 {
                    m[(p, q)] += e * c;
                }
            }
        }
    }
    let pairing = Expr::add(
        x.coefficients()
            .iter()
            .enumerate()
            .map(|(j, c)| Expr::mul(vec![c.to_expr(), Expr::Xi(j)]))
            .collect(),
    );
    let mut factors = vec![Expr::imag(), pairing];
    if let Some(w) = weight {
        factors.insert(0, w.clone());
    }
    let symbol = PolyhomSymbol::new(1, vec![Expr::mul(factors)], n, n)?;
    Ok(PdoElement::new(symbol, GridOperator::new(grid.clone(), m)?))
}

/// `-sum_j d_j (c d_j) + V` for x-only expressions `c` and `V`.
pub fn divergence_form_op(coefficient: &Expr, potential: &Expr, grid: &PeriodicGrid) -> Result<PdoElement> {
    let n = grid.dim();
    let c = weight_values(Some(coefficient), grid)?;
    let v = weight_values(Some(potential), grid)?;
    let size = grid.len();
    let mut m = DMatrix::from_element(size, size, Complex64::new(0.0, 0.0));
    for j in 0..n {
        let d = spectral_derivative(grid, j).into_matrix();
        let mut cd = d.clone();
        for p in 0..size {
            for q in 0..size {
                cd[(p, q)] *= c[p];
            }
        }
        m -= dense::cmatmul(&d, &cd);
    }
    for p in 0..size {
        m[(p, p)] += v[p];
    }
    let norm2 = Expr::add((0..n).map(|j| Expr::pow(Expr::Xi(j), 2)).collect());
    let symbol = PolyhomSymbol::new(2, vec![Expr::mul(vec![coefficient.clone(), norm2])], n, n)?;
    Ok(PdoElement::new(symbol, GridOperator::new(grid.clone(), m)?))
}

/// `Delta = sum_k X_k^* X_k` and its symbols.
#[derive(Clone, Debug)]
pub struct LaplacianOp {
    /// Base-coordinate symbol `sum_k <X_k(x), xi>^2` (cutoff-weighted).
    pub element: PdoElement,
    /// Fiber-coordinate symbol `chi^2 sum_k eta_k^2`.
    pub longitudinal: PolyhomSymbol,
}

/// Builds the Laplacian, with the Nyquist companion of each `X_k` added so
/// that flat generators give exactly `|k|^2`; box domains need a cutoff `chi` supported inside
/// the box, and then `X_k` is replaced by `chi X_k`.
pub fn laplacian(module: &FoliationModule, grid: &PeriodicGrid, cutoff: Option<&Expr>) -> Result<LaplacianOp> {
    let n = module.dim();
    check_grid_dim(grid, n)?;
    if let Domain::Box { .. } = module.domain() {
        if cutoff.is_none() {
            return Err(Error::Config("a box domain needs a cutoff supported inside the box".into()));
        }
    }
    let size = grid.len();
    let mut total = DMatrix::from_element(size, size, Complex64::new(0.0, 0.0));
    let mut pairings = Vec::new();
    for x in module.generators() {
        let a = weighted_vector_field_op(x, cutoff, grid)?;
        total += dense::cmatmul(&a.op.adjoint().into_matrix(), a.op.matrix());
        let b = nyquist_companion(&field_values(x, cutoff, grid)?, grid)?;
        total += dense::cmatmul(&b.adjoint().into_matrix(), b.matrix());
        let pairing = Expr::add(
            x.coefficients()
                .iter()
                .enumerate()
                .map(|(j, c)| Expr::mul(vec![c.to_expr(), Expr::Xi(j)]))
                .collect(),
        );
        pairings.push(Expr::pow(pairing, 2));
    }
    let mut base = Expr::add(pairings);
    let mut fiber = Expr::add((0..module.len()).map(|k| Expr::pow(Expr::Xi(k), 2)).collect());
    if let Some(chi) = cutoff {
        let chi2 = Expr::pow(chi.clone(), 2);
        base = Expr::mul(vec![chi2.clone(), base]);
        fiber = Expr::mul(vec![chi2, fiber]);
    }
    let symbol = PolyhomSymbol::new(2, vec![base], n, n)?;
    let longitudinal = PolyhomSymbol::new(2, vec![fiber], n, module.len())?;
    Ok(LaplacianOp {
        element: PdoElement::new(symbol, GridOperator::new(grid.clone(), total)?),
        longitudinal,
    })
}

/// Unit-sphere samples over every grid point.
pub fn grid_samples(grid: &PeriodicGrid) -> SampleSet {
    let xs: Vec<Vec<f64>> = (0..grid.len()).map(|p| grid.coords(p)).collect();
    SampleSet::sphere(&xs, grid.dim())
}

/// One row of an iteration trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationOrder {
    pub iteration: usize,
    pub left: f64,
    pub right: f64,
}

#[derive(Clone, Debug)]
pub struct ParametrixResult {
    pub q: PdoElement,
    /// Orders of `I - Q^(k) P` and `I - P Q^(k)` for `k = 0..=N`.
    pub orders: Vec<IterationOrder>,
}

fn principal_cutoff(order: i32) -> Cutoff {
    if order == 0 {
        Cutoff::None
    } else {
        Cutoff::Standard
    }
}

/// `Q^(N) = sum_{k<=N} Q_0 (I - P Q_0)^k` with `Q_0 = Op(1 / sigma_m(P))`.
/// Orders are measured on plane waves `k e_1` for `k` in `band`.
pub fn parametrix(p: &PdoElement, iterations: usize, band: &[i64]) -> Result<ParametrixResult> {
    let grid = p.grid().clone();
    for &k in band {
        if k.abs() >= grid.nyquist() {
            return Err(Error::input(format!("band frequency {k} exceeds the Nyquist limit")));
        }
    }
    let inv = principal_inverse(&p.symbol, &grid_samples(&grid))?.with_cutoff(principal_cutoff(p.order));
    let q0 = PdoElement::quantize(&inv, &grid)?;
    let id = GridOperator::identity(&grid);
    let r = id.sub(&p.op.compose(&q0.op)?)?;
    let mut term = q0.op.clone();
    let mut sum = q0.op.clone();
    let mut orders = Vec::new();
    let freqs = axis_frequencies(grid.dim(), band);
    for k in 0..=iterations {
        if k > 0 {
            term = term.compose(&r)?;
            sum = sum.add(&term)?;
        }
        let left = id.sub(&sum.compose(&p.op)?)?;
        let right = id.sub(&p.op.compose(&sum)?)?;
        orders.push(IterationOrder {
            iteration: k,
            left: estimate_order(&left, &freqs)?,
            right: estimate_order(&right, &freqs)?,
        });
    }
    Ok(ParametrixResult {
        q: PdoElement::new(inv, sum),
        orders,
    })
}

#[derive(Clone, Debug)]
pub struct SqrtResult {
    pub q: PdoElement,
    /// Order of `P - Q_n^2` after each iteration `n = 0..=N`.
    pub orders: Vec<f64>,
    /// Order of `[Q_0, P]`.
    pub commutator_order: f64,
}

/// Square root by `Q_n = (2 Q_0)^{-1} (P - S_{n-1}^2)` at leading order,
/// each increment symmetrized.
pub fn sqrt_op(p: &PdoElement, iterations: usize, band: &[i64]) -> Result<SqrtResult> {
    let grid = p.grid().clone();
    let defect = p.op.hermitian_defect();
    if defect > SELF_ADJOINT_TOL {
        return Err(Error::NotSelfAdjoint {
            defect,
            tolerance: SELF_ADJOINT_TOL,
        });
    }
    if p.order % 2 != 0 {
        return Err(Error::input(format!("order {} is odd", p.order)));
    }
    let samples = grid_samples(&grid);
    let root = principal_sqrt(&p.symbol, &samples)?.with_cutoff(principal_cutoff(p.order));
    let half_inverse = principal_inverse(&root, &samples)?
        .with_cutoff(principal_cutoff(p.order))
        .scale(&Expr::parse("1/2")?)?;
    let q0 = quantize_dense(&root, &grid)?.symmetrize();
    let divide = quantize_dense(&half_inverse, &grid)?;
    let freqs = axis_frequencies(grid.dim(), band);
    let mut s = q0.clone();
    let mut orders = Vec::new();
    let residual = |s: &GridOperator| -> Result<GridOperator> { p.op.sub(&s.compose(s)?) };
    let mut r = residual(&s)?;
    orders.push(estimate_order(&r, &freqs)?);
    for _ in 0..iterations {
        let qn = divide.compose(&r)?.symmetrize();
        s = s.add(&qn)?.symmetrize();
        r = residual(&s)?;
        orders.push(estimate_order(&r, &freqs)?);
    }
    let commutator = q0.compose(&p.op)?.sub(&p.op.compose(&q0)?)?;
    let commutator_order = estimate_order(&commutator, &freqs)?;
    Ok(SqrtResult {
        q: PdoElement::new(root, s),
        orders,
        commutator_order,
    })
}

/// `max |T^2 - T|` for `T = [[R, Q], [P R, P Q]]` with `R = I - Q P`.
pub fn idempotent_check(p: &GridOperator, q: &GridOperator) -> Result<f64> {
    let id = GridOperator::identity(p.grid());
    let r = id.sub(&q.compose(p)?)?;
    let pr = p.compose(&r)?;
    let pq = p.compose(q)?;
    let n = p.grid().len();
    let mut t = DMatrix::from_element(2 * n, 2 * n, Complex64::new(0.0, 0.0));
    t.view_mut((0, 0), (n, n)).copy_from(r.matrix());
    t.view_mut((0, n), (n, n)).copy_from(q.matrix());
    t.view_mut((n, 0), (n, n)).copy_from(pr.matrix());
    t.view_mut((n, n), (n, n)).copy_from(pq.matrix());
    let t2 = dense::cmatmul(&t, &t);
    Ok((t2 - t).iter().map(|z| z.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foliation::{flat_torus_module, so3_module};
    use crate::polysym::ClosedFormSymbol;
    use crate::quantize::{recover_principal_symbol, GridFunction};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn field(s: &[&str]) -> PolyVectorField {
        PolyVectorField::parse(s).unwrap()
    }

    #[test]
    fn vector_field_examples() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let d = vector_field_op(&field(&["1"]), &grid).unwrap();
        let s = GridFunction::from_fn(&grid, |x| c(x[0].sin(), 0.0));
        let out = d.op.apply(&s).unwrap();
        assert!(out.sub(&GridFunction::from_fn(&grid, |x| c(x[0].cos(), 0.0))).max_norm() < 1e-12);

        let sx = vector_field_op(&field(&["sin(x)"]), &grid).unwrap();
        let out = sx.op.apply(&s).unwrap();
        let expected = GridFunction::from_fn(&grid, |x| c(x[0].sin() * x[0].cos(), 0.0));
        assert!(out.sub(&expected).max_norm() < 1e-10);
        assert_eq!(sx.order, 1);
        let v = sx.symbol.eval(&[PI / 2.0], &[1.0]).unwrap();
        assert!((v - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn composition_and_adjoints() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let d = vector_field_op(&field(&["1"]), &grid).unwrap();
        let dd = compose(&d, &d).unwrap();
        assert_eq!(dd.order, 2);
        assert!((dd.symbol.eval(&[0.0], &[3.0]).unwrap() - c(-9.0, 0.0)).norm() < 1e-12);
        let id = PdoElement::identity(&grid).unwrap();
        assert_eq!(compose(&id, &d).unwrap().op, d.op);

        let da = adjoint_op(&d);
        assert!(da.op.add(&d.op).unwrap().max_abs() < 1e-12);
        let sx = vector_field_op(&field(&["sin(x)"]), &grid).unwrap();
        // X^* = -X - div X on band-limited input
        let f = GridFunction::from_fn(&grid, |x| c((3.0 * x[0]).cos(), (2.0 * x[0]).sin()));
        let got = adjoint_op(&sx).op.apply(&f).unwrap();
        let expected = GridFunction::from_fn(&grid, |x| {
            let df = c(-3.0 * (3.0 * x[0]).sin(), 2.0 * (2.0 * x[0]).cos());
            let v = c((3.0 * x[0]).cos(), (2.0 * x[0]).sin());
            -(df * x[0].sin()) - v * x[0].cos()
        });
        assert!(got.sub(&expected).max_norm() < 1e-10);
        assert_eq!(adjoint_op(&adjoint_op(&sx)).op, sx.op);
    }

    #[test]
    fn principal_multiplicativity_by_recovery() {
        let grid = PeriodicGrid::new(1, 256).unwrap();
        let a = PdoElement::quantize(&PolyhomSymbol::parse(1, &["(2 + cos(x))*i*xi"], 1, 1).unwrap(), &grid).unwrap();
        let b = PdoElement::quantize(&PolyhomSymbol::parse(1, &["i*xi"], 1, 1).unwrap(), &grid).unwrap();
        let ab = compose(&a, &b).unwrap();
        let t = recover_principal_symbol(&ab.op, 2, &[0.0], &[1], &[8, 16, 32, 64]).unwrap();
        assert!((t.values[3] - c(-3.0, 0.0)).norm() < 0.3);
    }

    #[test]
    fn flat_laplacians() {
        let grid = PeriodicGrid::new(1, 16).unwrap();
        let lap = laplacian(&flat_torus_module(1).unwrap(), &grid, None).unwrap();
        for k in [-8i64, -5, 0, 3, 7] {
            let w = GridFunction::plane_wave(&grid, &[k]);
            let out = lap.element.op.apply(&w).unwrap();
            let expected = GridFunction::new(w.values.iter().map(|v| v * (k * k) as f64).collect());
            assert!(out.sub(&expected).max_norm() < 1e-10);
        }
        let g2 = PeriodicGrid::new(2, 8).unwrap();
        let lap2 = laplacian(&flat_torus_module(2).unwrap(), &g2, None).unwrap();
        let ones = GridFunction::new(vec![c(1.0, 0.0); 64]);
        assert!(lap2.element.op.apply(&ones).unwrap().max_norm() < 1e-12);
        assert!(lap2.element.op.hermitian_defect() < 1e-12);
    }

    #[test]
    fn box_laplacian_needs_a_cutoff() {
        let grid = PeriodicGrid::new(3, 4).unwrap().with_origin(-PI);
        let so3 = so3_module(PI).unwrap();
        assert!(matches!(laplacian(&so3, &grid, None), Err(Error::Config(_))));
        let chi = Expr::parse("bump(1.5, 2.5)").unwrap();
        let lap = laplacian(&so3, &grid, Some(&chi)).unwrap();
        assert!(lap.element.op.hermitian_defect() < 1e-10);
        let v = lap.longitudinal.eval(&[0.1, 0.0, 0.0], &[0.6, 0.0, 0.8]).unwrap();
        assert!((v.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parametrix_of_identity_and_constant_multiplier() {
        let grid = PeriodicGrid::new(1, 64).unwrap();
        let id = PdoElement::identity(&grid).unwrap();
        let r = parametrix(&id, 2, &[4, 8, 16]).unwrap();
        assert!(r.q.op.sub(&id.op).unwrap().max_abs() < 1e-14);
        assert_eq!(r.orders[0].left, f64::NEG_INFINITY);

        let p = PdoElement::new(
            PolyhomSymbol::parse(2, &["xi^2"], 1, 1).unwrap(),
            quantize_dense(&ClosedFormSymbol::parse(2, "1 + xi^2", "xi^2", 1, 1).unwrap(), &grid).unwrap(),
        );
        let r = parametrix(&p, 3, &[4, 8, 16]).unwrap();
        assert!(r.orders[0].left <= -1.0 + 0.7);
        for k in 2..=16i64 {
            let w = GridFunction::plane_wave(&grid, &[k]);
            let got = r.q.op.apply(&w).unwrap().values[0] / w.values[0];
            let exact = 1.0 / (1.0 + (k * k) as f64);
            assert!((got.re - exact).abs() <= 0.02 * exact, "k={k}");
        }
        assert!(parametrix(&p, 1, &[40]).is_err());
    }

    #[test]
    fn square_root_of_constant_multiplier() {
        let grid = PeriodicGrid::new(1, 64).unwrap();
        let p = PdoElement::new(
            PolyhomSymbol::parse(2, &["xi^2"], 1, 1).unwrap(),
            quantize_dense(&ClosedFormSymbol::parse(2, "1 + xi^2", "xi^2", 1, 1).unwrap(), &grid).unwrap(),
        );
        let r = sqrt_op(&p, 3, &[2, 4, 8, 16]).unwrap();
        assert!(r.q.op.hermitian_defect() < 1e-8);
        for k in 1..=16i64 {
            let w = GridFunction::plane_wave(&grid, &[k]);
            let got = r.q.op.apply(&w).unwrap().values[0] / w.values[0];
            let exact = (1.0 + (k * k) as f64).sqrt();
            assert!((got.re - exact).abs() <= 0.03 * exact, "k={k}");
        }
        assert!(r.orders.windows(2).all(|w| w[1] < w[0]), "{:?}", r.orders);

        let id = PdoElement::identity(&grid).unwrap();
        let r = sqrt_op(&id, 2, &[4, 8]).unwrap();
        assert!(r.q.op.sub(&id.op).unwrap().max_abs() < 1e-14);

        let d = vector_field_op(&field(&["1"]), &grid).unwrap();
        assert!(matches!(
            sqrt_op(&d, 1, &[4, 8]),
            Err(Error::NotSelfAdjoint { .. }) | Err(Error::Input(_))
        ));
    }

    #[test]
    fn idempotent_identity() {
        let grid = PeriodicGrid::new(1, 8).unwrap();
        let id = GridOperator::identity(&grid);
        assert_eq!(idempotent_check(&id, &id).unwrap(), 0.0);
        let p = divergence_form_op(&Expr::parse("2 + cos(x)").unwrap(), &Expr::one(), &grid).unwrap();
        let q = parametrix(&p, 2, &[1, 2]).unwrap().q;
        assert!(idempotent_check(&p.op, &q.op).unwrap() < 1e-8);
    }
}
