//! The module `F` generated by finitely many vector fields with exact
//! coefficients: brackets, structure functions, fibers `F_x = F / I_x F`,
//! leaf tangent spaces and the cotangent fibers `F*_x`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{exact_from_f64, exact_int, exact_to_c64, rref, Exact, Field};
use crate::polysym::{PolyhomSymbol, SampleSet, Symbol};
use crate::ring::{basis, BasisKinds, Coef, Mono};

/// Relative singular-value threshold for numerical ranks.
pub const RANK_TOL: f64 = 1e-8;

/// Largest admissible distance of a covector from a fiber.
pub const FIBER_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Domain {
    /// `(R / 2 pi Z)^dim`.
    Torus { dim: usize },
    /// Product of intervals `[lower_j, upper_j]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Torus { dim } => *dim,
            Domain::Box { lower, .. } => lower.len(),
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Domain::Torus { .. } => true,
            Domain::Box { lower, upper } => x.iter().zip(lower.iter().zip(upper)).all(|(v, (lo, hi))| *lo <= *v && *v <= *hi),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Torus { dim } if *dim == 0 => Err(Error::input("torus dimension must be positive")),
            Domain::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::input("box bounds must be nonempty and of equal length"));
                }
                if lower.iter().zip(upper).any(|(lo, hi)| lo.is_nan() || hi.is_nan() || lo >= hi) {
                    return Err(Error::input("box bounds must satisfy lower < upper"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// `sum_j c_j(x) d/dx_j` with exact coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyVectorField {
    coefficients: Vec<Coef>,
}

impl PolyVectorField {
    pub fn new(coefficients: Vec<Coef>) -> Result<PolyVectorField> {
        let dim = coefficients.len();
        if dim == 0 {
            return Err(Error::input("vector field needs at least one component"));
        }
        if let Some(c) = coefficients.iter().find(|c| c.dim() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: c.dim(),
            });
        }
        Ok(PolyVectorField { coefficients })
    }

    pub fn parse(components: &[&str]) -> Result<PolyVectorField> {
        let dim = components.len();
        PolyVectorField::new(components.iter().map(|c| Coef::parse(c, dim)).collect::<Result<_>>()?)
    }

    pub fn zero(dim: usize) -> PolyVectorField {
        PolyVectorField {
            coefficients: vec![Coef::zero(dim); dim],
        }
    }

    /// `d/dx_j`.
    pub fn coordinate(dim: usize, j: usize) -> PolyVectorField {
        let mut coefficients = vec![Coef::zero(dim); dim];
        coefficients[j] = Coef::int(dim, 1);
        PolyVectorField { coefficients }
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[Coef] {
        &self.coefficients
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(Coef::is_zero)
    }

    pub fn has_fourier_modes(&self) -> bool {
        self.coefficients.iter().any(Coef::has_fourier_modes)
    }

    pub fn is_trigonometric(&self) -> bool {
        self.coefficients.iter().all(Coef::is_trigonometric)
    }

    fn check(&self, o: &PolyVectorField) -> Result<()> {
        if self.dim() != o.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: o.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, o: &PolyVectorField) -> Result<PolyVectorField> {
        self.check(o)?;
        Ok(PolyVectorField {
            coefficients: self.coefficients.iter().zip(&o.coefficients).map(|(a, b)| a.add(b)).collect(),
        })
    }

    pub fn sub(&self, o: &PolyVectorField) -> Result<PolyVectorField> {
        self.check(o)?;
        Ok(PolyVectorField {
            coefficients: self.coefficients.iter().zip(&o.coefficients).map(|(a, b)| a.sub(b)).collect(),
        })
    }

    /// `f X`.
    pub fn times(&self, f: &Coef) -> PolyVectorField {
        PolyVectorField {
            coefficients: self.coefficients.iter().map(|c| c.mul(f)).collect(),
        }
    }

    /// `X(f) = sum_j X^j d_j f`.
    pub fn derivative_of(&self, f: &Coef) -> Coef {
        self.coefficients
            .iter()
            .enumerate()
            .fold(Coef::zero(self.dim()), |acc, (j, c)| acc.add(&c.mul(&f.deriv(j))))
    }

    /// `[X, Y] = X(Y) - Y(X)` componentwise.
    pub fn bracket(&self, o: &PolyVectorField) -> Result<PolyVectorField> {
        self.check(o)?;
        Ok(PolyVectorField {
            coefficients: (0..self.dim())
                .map(|i| self.derivative_of(&o.coefficients[i]).sub(&o.derivative_of(&self.coefficients[i])))
                .collect(),
        })
    }

    pub fn divergence(&self) -> Coef {
        self.coefficients
            .iter()
            .enumerate()
            .fold(Coef::zero(self.dim()), |acc, (j, c)| acc.add(&c.deriv(j)))
    }

    pub fn eval(&self, x: &[f64]) -> Vec<Complex64> {
        self.coefficients.iter().map(|c| c.eval(x)).collect()
    }

    pub fn evaluator(&self) -> FieldEvaluator {
        FieldEvaluator::new(self)
    }
}

impl fmt::Display for PolyVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(j, c)| format!("({c})*d{}", j + 1))
            .collect();
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

/// Coefficient, polynomial exponents and Fourier frequencies of one term.
type FieldTerm = (Complex64, Vec<u32>, Vec<i64>);

/// Floating evaluation of a field, real part only.
#[derive(Clone, Debug)]
pub struct FieldEvaluator {
    components: Vec<Vec<FieldTerm>>,
}

impl FieldEvaluator {
    fn new(x: &PolyVectorField) -> FieldEvaluator {
        FieldEvaluator {
            components: x
                .coefficients
                .iter()
                .map(|c| c.terms().map(|(m, v)| (exact_to_c64(v), m.pow.clone(), m.freq.clone())).collect())
                .collect(),
        }
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.components) {
            let mut acc = 0.0;
            for (c, pow, freq) in terms {
                let mut mag = 1.0;
                let mut phase = 0.0;
                for ((p, k), xv) in pow.iter().zip(freq).zip(x) {
                    if *p > 0 {
                        mag *= xv.powi(*p as i32);
                    }
                    phase += *k as f64 * xv;
                }
                acc += mag * (c.re * phase.cos() - c.im * phase.sin());
            }
            *o = acc;
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components.len()];
        self.eval_into(x, &mut out);
        out
    }
}

/// `f[i][j][k]` with `[X_i, X_j] = sum_k f_ijk X_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureTable {
    pub f: Vec<Vec<Vec<Coef>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StructureResult {
    Closed(StructureTable),
    /// `[X_i, X_j]` is not a combination with coefficients of degree at most `cap`.
    Inconclusive {
        i: usize,
        j: usize,
        witness: PolyVectorField,
        cap: u32,
    },
}

/// Orthonormal basis of `F*_x` inside `(R^N)*`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CotangentFiber {
    pub x: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub fiber_dim: usize,
    /// Orthonormal basis of `K_x`.
    pub kernel: Vec<Vec<f64>>,
}

impl CotangentFiber {
    /// Distance of `eta` from the span of the basis.
    pub fn residual(&self, eta: &[f64]) -> f64 {
        let mut r = eta.to_vec();
        for b in &self.basis {
            let c: f64 = b.iter().zip(eta).map(|(u, v)| u * v).sum();
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= c * bi;
            }
        }
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit covectors `sum_i s_i b_i` for a direction mesh `s`.
    pub fn unit_mesh(&self) -> Vec<Vec<f64>> {
        let n = self.basis.first().map_or(0, Vec::len);
        SampleSet::unit_directions(self.fiber_dim)
            .into_iter()
            .map(|s| {
                let mut eta = vec![0.0; n];
                for (si, b) in s.iter().zip(&self.basis) {
                    for (e, bi) in eta.iter_mut().zip(b) {
                        *e += si * bi;
                    }
                }
                eta
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum EllipticityVerdict {
    Pass,
    Witness { x: Vec<f64>, eta: Vec<f64>, value: f64 },
}

impl EllipticityVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, EllipticityVerdict::Pass)
    }
}

trait FromExact: Field {
    fn from_exact(e: &Exact) -> Self;
}

impl FromExact for Exact {
    fn from_exact(e: &Exact) -> Self {
        e.clone()
    }
}

impl FromExact for Complex64 {
    fn from_exact(e: &Exact) -> Self {
        exact_to_c64(e)
    }
}

/// Sparse column over `(component, monomial)` rows.
type Column<F> = BTreeMap<(usize, Mono), F>;

fn field_column<F: FromExact>(x: &PolyVectorField, scale: Option<&F>) -> Column<F> {
    let mut col = Column::new();
    for (l, c) in x.coefficients.iter().enumerate() {
        for (m, v) in c.terms() {
            let mut e = F::from_exact(v);
            if let Some(s) = scale {
                e = e.mul(s);
            }
            col.insert((l, m.clone()), e);
        }
    }
    col
}

fn accumulate<F: FromExact>(into: &mut Column<F>, from: Column<F>) {
    for (k, v) in from {
        let entry = into.entry(k).or_insert_with(F::zero);
        *entry = entry.add(&v);
    }
}

fn dense_rows<F: FromExact>(columns: &[Column<F>]) -> Vec<Vec<F>> {
    let mut keys: BTreeMap<&(usize, Mono), usize> = BTreeMap::new();
    for col in columns {
        for k in col.keys() {
            let next = keys.len();
            keys.entry(k).or_insert(next);
        }
    }
    let mut rows = vec![vec![F::zero(); columns.len()]; keys.len()];
    for (j, col) in columns.iter().enumerate() {
        for (k, v) in col {
            rows[keys[k]][j] = v.clone();
        }
    }
    rows
}

/// Row space of `vectors`, as the nonzero rows of its reduced echelon form.
fn row_space<F: FromExact>(vectors: Vec<Vec<F>>, cols: usize) -> Vec<Vec<F>> {
    if vectors.is_empty() {
        return vec![];
    }
    rref(vectors, cols).rows
}

fn kx_basis<F>(gens: &[PolyVectorField], monos: &[Mono], at: &[F]) -> Vec<Vec<Complex64>>
where
    F: FromExact + Into<Complex64Proxy>,
{
    let n = gens.len();
    let mut columns: Vec<Column<F>> = gens.iter().map(|g| field_column::<F>(g, None)).collect();
    for (m, mx) in monos.iter().zip(at) {
        let minus = F::zero().sub(mx);
        for g in gens {
            let mut col = Column::new();
            for (l, c) in g.coefficients.iter().enumerate() {
                for (mono, v) in c.mul_mono(m).terms() {
                    col.insert((l, mono.clone()), F::from_exact(v));
                }
            }
            accumulate(&mut col, field_column(g, Some(&minus)));
            columns.push(col);
        }
    }
    let cols = columns.len();
    let rows = dense_rows(&columns);
    let kernel = if rows.is_empty() {
        (0..cols)
            .map(|j| {
                let mut v = vec![F::zero(); cols];
                v[j] = F::one();
                v
            })
            .collect()
    } else {
        rref(rows, cols).kernel()
    };
    let projected: Vec<Vec<F>> = kernel.into_iter().map(|v| v[..n].to_vec()).collect();
    row_space(projected, n)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.into().0).collect())
        .collect()
}

/// Conversion used only to report kernels in floating point.
struct Complex64Proxy(Complex64);

impl From<Exact> for Complex64Proxy {
    fn from(e: Exact) -> Self {
        Complex64Proxy(exact_to_c64(&e))
    }
}

impl From<Complex64> for Complex64Proxy {
    fn from(z: Complex64) -> Self {
        Complex64Proxy(z)
    }
}

/// Orthonormal basis of the real span of the given complex vectors.
fn real_orthonormal_span(vectors: &[Vec<Complex64>], n: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let candidates = vectors
        .iter()
        .flat_map(|v| [v.iter().map(|z| z.re).collect::<Vec<_>>(), v.iter().map(|z| z.im).collect()]);
    for mut c in candidates {
        let scale = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if scale == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &out {
                let d: f64 = b.iter().zip(&c).map(|(u, v)| u * v).sum();
                for (ci, bi) in c.iter_mut().zip(b) {
                    *ci -= d * bi;
                }
            }
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > RANK_TOL * scale && out.len() < n {
            out.push(c.iter().map(|v| v / norm).collect());
        }
    }
    out
}

fn orthogonal_complement(basis: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut all = basis.to_vec();
    let start = all.len();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for _ in 0..2 {
            for b in &all {
                let d = b[j..].iter().zip(&e[j..]).map(|(u, v)| u * v).sum::<f64>()
                    + b[..j].iter().zip(&e[..j]).map(|(u, v)| u * v).sum::<f64>();
                for (ei, bi) in e.iter_mut().zip(b) {
                    *ei -= d * bi;
                }
            }
        }
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-6 {
            all.push(e.iter().map(|v| v / norm).collect());
        }
    }
    all.split_off(start)
}

/// Numerical rank with singular values above `RANK_TOL` times the largest.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * top).count()
}

/// The module `F` with generators `X_1 .. X_N`.
#[derive(Clone, Debug)]
pub struct FoliationModule {
    domain: Domain,
    generators: Vec<PolyVectorField>,
    structure: Option<StructureTable>,
    evaluators: Vec<FieldEvaluator>,
}

impl FoliationModule {
    pub fn new(domain: Domain, generators: Vec<PolyVectorField>) -> Result<FoliationModule> {
        domain.validate()?;
        if generators.is_empty() {
            return Err(Error::input("a module needs at least one generator"));
        }
        let n = domain.dim();
        for g in &generators {
            if g.dim() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: g.dim(),
                });
            }
            if domain.is_torus() && !g.is_trigonometric() {
                return Err(Error::Ring(format!(
                    "generator {g} has polynomial coefficients, which are not periodic"
                )));
            }
        }
        let evaluators = generators.iter().map(PolyVectorField::evaluator).collect();
        Ok(FoliationModule {
            domain,
            generators,
            structure: None,
            evaluators,
        })
    }

    pub fn parse(domain: Domain, generators: &[Vec<&str>]) -> Result<FoliationModule> {
        let gens = generators.iter().map(|g| PolyVectorField::parse(g)).collect::<Result<Vec<_>>>()?;
        FoliationModule::new(domain, gens)
    }

    /// Attaches a table after checking the bracket identities exactly.
    pub fn with_structure(mut self, table: StructureTable) -> Result<FoliationModule> {
        if !self.verify_structure(&table)? {
            return Err(Error::input("structure functions do not reproduce the brackets"));
        }
        self.structure = Some(table);
        Ok(self)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Number of generators `N`.
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn generators(&self) -> &[PolyVectorField] {
        &self.generators
    }

    pub fn structure(&self) -> Option<&StructureTable> {
        self.structure.as_ref()
    }

    pub fn evaluators(&self) -> &[FieldEvaluator] {
        &self.evaluators
    }

    pub fn bracket(&self, i: usize, j: usize) -> Result<PolyVectorField> {
        self.generators[i].bracket(&self.generators[j])
    }

    fn basis_kinds(&self) -> BasisKinds {
        BasisKinds {
            polynomial: !self.domain.is_torus(),
            fourier: self.domain.is_torus() || self.generators.iter().any(PolyVectorField::has_fourier_modes),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if !self.domain.contains(x) {
            return Err(Error::input(format!("point {x:?} is outside the domain")));
        }
        Ok(())
    }

    /// `sum_k f_k X_k`.
    pub fn combination(&self, f: &[Coef]) -> Result<PolyVectorField> {
        let mut acc = PolyVectorField::zero(self.dim());
        for (fk, x) in f.iter().zip(&self.generators) {
            acc = acc.add(&x.times(fk))?;
        }
        Ok(acc)
    }

    pub fn verify_structure(&self, table: &StructureTable) -> Result<bool> {
        let n = self.len();
        if table.f.len() != n {
            return Ok(false);
        }
        for i in 0..n {
            for j in 0..n {
                if table.f[i].len() != n || table.f[i][j].len() != n {
                    return Ok(false);
                }
                if self.bracket(i, j)? != self.combination(&table.f[i][j])? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Exact solve for `f_ijk` of degree at most `cap`, preferring constants.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_structure_functions(&self, cap: u32) -> Result<StructureResult> {
        let n = self.len();
        let dim = self.dim();
        let monos = basis(dim, cap, self.basis_kinds());
        // columns ordered (mono, generator) so constant columns come first
        let mut columns: Vec<Column<Exact>> = Vec::new();
        for m in &monos {
            for g in &self.generators {
                let mut col = Column::new();
                for (l, c) in g.coefficients.iter().enumerate() {
                    for (mono, v) in c.mul_mono(m).terms() {
                        col.insert((l, mono.clone()), v.clone());
                    }
                }
                columns.push(col);
            }
        }
        let zero_coef = Coef::zero(dim);
        let mut f = vec![vec![vec![zero_coef.clone(); n]; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let b = self.bracket(i, j)?;
                if b.is_zero() {
                    continue;
                }
                let mut all = columns.clone();
                all.push(field_column::<Exact>(&b, None));
                let rows = dense_rows(&all);
                let cols = columns.len();
                let red = rref(rows, cols + 1);
                if red.pivots.contains(&cols) {
                    return Ok(StructureResult::Inconclusive { i, j, witness: b, cap });
                }
                let mut u = vec![exact_int(0); cols];
                for (row, &p) in red.rows.iter().zip(&red.pivots) {
                    u[p] = row[cols].clone();
                }
                for (mi, m) in monos.iter().enumerate() {
                    for k in 0..n {
                        let c = &u[mi * n + k];
                        if !c.is_zero_value() {
                            f[i][j][k] = f[i][j][k].add(&Coef::monomial(m.clone(), c.clone()));
                        }
                    }
                }
                f[j][i] = f[i][j].iter().map(|c| c.scale(&exact_int(-1))).collect();
            }
        }
        let table = StructureTable { f };
        debug_assert!(self.verify_structure(&table).unwrap_or(false));
        Ok(StructureResult::Closed(table))
    }

    /// `A(x) = [X_1(x) ... X_N(x)]`, an `n x N` real matrix.
    pub fn evaluation_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, self.len());
        for (k, ev) in self.evaluators.iter().enumerate() {
            a.set_column(k, &DVector::from_vec(ev.eval(x)));
        }
        a
    }

    /// Dimension of the image of `ev_x`.
    pub fn leaf_tangent_dim(&self, x: &[f64]) -> Result<usize> {
        self.check_point(x)?;
        Ok(numerical_rank(&self.evaluation_matrix(x)))
    }

    /// `K_x` as complex row vectors in `C^N`; exact whenever every basis
    /// function takes an exact value at `x`.
    fn kernel_vectors(&self, x: &[f64], cap: u32) -> Result<Vec<Vec<Complex64>>> {
        self.check_point(x)?;
        let monos: Vec<Mono> = basis(self.dim(), cap, self.basis_kinds())
            .into_iter()
            .filter(|m| !m.is_constant())
            .collect();
        let exact_x: Option<Vec<_>> = x.iter().map(|v| exact_from_f64(*v)).collect();
        let exact_values: Option<Vec<Exact>> = exact_x.and_then(|ex| monos.iter().map(|m| m.eval_exact(&ex)).collect());
        Ok(match exact_values {
            Some(at) => kx_basis::<Exact>(&self.generators, &monos, &at),
            None => {
                let at: Vec<Complex64> = monos.iter().map(|m| m.eval(x)).collect();
                kx_basis::<Complex64>(&self.generators, &monos, &at)
            }
        })
    }

    /// `dim F_x = N - dim K_x` at the given degree cap.
    pub fn fiber_dimension(&self, x: &[f64], cap: u32) -> Result<usize> {
        Ok(self.len() - self.kernel_vectors(x, cap)?.len())
    }

    pub fn cotangent_fiber(&self, x: &[f64], cap: u32) -> Result<CotangentFiber> {
        let k = self.kernel_vectors(x, cap)?;
        let n = self.len();
        let kernel = real_orthonormal_span(&k, n);
        let basis = orthogonal_complement(&kernel, n);
        Ok(CotangentFiber {
            x: x.to_vec(),
            fiber_dim: basis.len(),
            basis,
            kernel,
        })
    }

    /// `N - dim F_x`.
    pub fn minimality_gap(&self, x: &[f64], cap: u32) -> Result<usize> {
        Ok(self.len() - self.fiber_dimension(x, cap)?)
    }

    /// Leading term of `a` (fiber coordinates `eta in (R^N)*`) at `(x, eta)`.
    pub fn longitudinal_symbol(&self, a: &PolyhomSymbol, x: &[f64], eta: &[f64], cap: u32) -> Result<Complex64> {
        if a.xi_dim() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                found: a.xi_dim(),
            });
        }
        let fiber = self.cotangent_fiber(x, cap)?;
        let scale = eta.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        if fiber.residual(eta) > FIBER_RESIDUAL_TOL * scale {
            return Err(Error::input(format!("covector {eta:?} is not in F*_x at x={x:?}")));
        }
        Ok(a.leading().eval(x, eta))
    }

    /// Unit covectors of `F*_x` drawn in base coordinates: the range of
    /// `A(x)` at regular points, every direction at singular ones.
    pub fn base_cotangent_samples(&self, x: &[f64], cap: u32) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let leaf = self.leaf_tangent_dim(x)?;
        let fiber = self.fiber_dimension(x, cap)?;
        if leaf < fiber || leaf == n {
            return Ok(SampleSet::unit_directions(n));
        }
        let a = self.evaluation_matrix(x);
        let columns: Vec<Vec<Complex64>> = (0..a.ncols())
            .map(|k| a.column(k).iter().map(|v| Complex64::new(*v, 0.0)).collect())
            .collect();
        let range = real_orthonormal_span(&columns, n);
        Ok(SampleSet::unit_directions(range.len())
            .into_iter()
            .map(|s| {
                let mut xi = vec![0.0; n];
                for (si, b) in s.iter().zip(&range) {
                    for (e, bi) in xi.iter_mut().zip(b) {
                        *e += si * bi;
                    }
                }
                xi
            })
            .collect())
    }

    /// Checks `|a_m(x, eta)| >= tol` on a unit mesh of every `F*_x`
    /// (fiber coordinates).
    pub fn ellipticity_check(&self, a: &PolyhomSymbol, points: &[Vec<f64>], cap: u32, tol: f64) -> Result<EllipticityVerdict> {
        if a.xi_dim() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                found: a.xi_dim(),
            });
        }
        for x in points {
            let fiber = self.cotangent_fiber(x, cap)?;
            for eta in fiber.unit_mesh() {
                let v = a.leading().eval(x, &eta).norm();
                if v.is_nan() || v < tol {
                    return Ok(EllipticityVerdict::Witness {
                        x: x.clone(),
                        eta,
                        value: v,
                    });
                }
            }
        }
        Ok(EllipticityVerdict::Pass)
    }

    /// As `ellipticity_check` for a symbol written in base coordinates.
    pub fn ellipticity_check_base(&self, a: &PolyhomSymbol, points: &[Vec<f64>], cap: u32, tol: f64) -> Result<EllipticityVerdict> {
        if a.xi_dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: a.xi_dim(),
            });
        }
        for x in points {
            for xi in self.base_cotangent_samples(x, cap)? {
                let v = a.leading().eval(x, &xi).norm();
                if v.is_nan() || v < tol {
                    return Ok(EllipticityVerdict::Witness {
                        x: x.clone(),
                        eta: xi,
                        value: v,
                    });
                }
            }
        }
        Ok(EllipticityVerdict::Pass)
    }
}

trait ZeroValue {
    fn is_zero_value(&self) -> bool;
}

impl ZeroValue for Exact {
    fn is_zero_value(&self) -> bool {
        use num_traits::Zero;
        self.is_zero()
    }
}

/// The rotation fields `y d_z - z d_y`, `z d_x - x d_z`, `x d_y - y d_x`
/// on a box.
pub fn so3_module(half_width: f64) -> Result<FoliationModule> {
    FoliationModule::parse(
        Domain::Box {
            lower: vec![-half_width; 3],
            upper: vec![half_width; 3],
        },
        &[vec!["0", "-z", "y"], vec!["z", "0", "-x"], vec!["-y", "x", "0"]],
    )
}

/// Coordinate fields on the flat torus.
pub fn flat_torus_module(dim: usize) -> Result<FoliationModule> {
    FoliationModule::new(
        Domain::Torus { dim },
        (0..dim).map(|j| PolyVectorField::coordinate(dim, j)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use std::f64::consts::PI;

    fn field(c: &[&str]) -> PolyVectorField {
        PolyVectorField::parse(c).unwrap()
    }

    #[test]
    fn brackets() {
        let d1 = PolyVectorField::coordinate(2, 0);
        let d2 = PolyVectorField::coordinate(2, 1);
        assert!(d1.bracket(&d2).unwrap().is_zero());

        let so3 = so3_module(PI).unwrap();
        // the commutator convention gives [X_1, X_2] = -X_3
        let minus_x3 = PolyVectorField::zero(3).sub(&so3.generators()[2]).unwrap();
        assert_eq!(so3.bracket(0, 1).unwrap(), minus_x3);

        let s = field(&["0", "sin(x1)"]);
        assert_eq!(d1.bracket(&s).unwrap(), field(&["0", "cos(x1)"]));
    }

    #[test]
    fn structure_functions() {
        let so3 = so3_module(PI).unwrap();
        let StructureResult::Closed(t) = so3.solve_structure_functions(1).unwrap() else {
            panic!("so(3) closes")
        };
        let one = Coef::int(3, 1);
        let minus = Coef::int(3, -1);
        assert_eq!(t.f[0][1][2], minus);
        assert_eq!(t.f[1][0][2], one);
        assert_eq!(t.f[1][2][0], minus);
        assert_eq!(t.f[2][0][1], minus);
        assert!(t.f[0][1][0].is_zero() && t.f[0][1][1].is_zero());
        assert!(so3.clone().with_structure(t).is_ok());

        let flat = flat_torus_module(2).unwrap();
        let StructureResult::Closed(t) = flat.solve_structure_functions(2).unwrap() else {
            panic!()
        };
        assert!(t.f.iter().flatten().flatten().all(Coef::is_zero));

        let m = FoliationModule::new(
            Domain::Torus { dim: 2 },
            vec![PolyVectorField::coordinate(2, 0), field(&["0", "sin(x1)"])],
        )
        .unwrap();
        match m.solve_structure_functions(2).unwrap() {
            StructureResult::Inconclusive { i, j, witness, cap } => {
                assert_eq!((i, j, cap), (0, 1, 2));
                assert_eq!(witness, field(&["0", "cos(x1)"]));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn so3_fibers() {
        let so3 = so3_module(PI).unwrap();
        let o = [0.0, 0.0, 0.0];
        let e1 = [1.0, 0.0, 0.0];
        assert_eq!(so3.leaf_tangent_dim(&o).unwrap(), 0);
        assert_eq!(so3.leaf_tangent_dim(&e1).unwrap(), 2);
        assert_eq!(so3.fiber_dimension(&o, 2).unwrap(), 3);
        assert_eq!(so3.fiber_dimension(&e1, 1).unwrap(), 2);
        assert_eq!(so3.fiber_dimension(&e1, 2).unwrap(), 2);
        // cap 0 admits no relation
        assert_eq!(so3.fiber_dimension(&e1, 0).unwrap(), 3);
        let f = so3.cotangent_fiber(&e1, 1).unwrap();
        assert_eq!(f.fiber_dim, 2);
        // K_{e1} is spanned by the first generator, which vanishes there
        assert!((f.kernel[0][0].abs() - 1.0).abs() < 1e-12);
        assert_eq!(so3.cotangent_fiber(&o, 2).unwrap().fiber_dim, 3);
        assert_eq!(so3.minimality_gap(&o, 2).unwrap(), 0);
        assert_eq!(so3.minimality_gap(&e1, 2).unwrap(), 1);
    }

    #[test]
    fn euler_relation_witness() {
        // X_1 = (1 - x) X_1 - y X_2 - z X_3 at e_1
        let so3 = so3_module(PI).unwrap();
        let g = [
            Coef::parse("1 - x", 3).unwrap(),
            Coef::parse("-y", 3).unwrap(),
            Coef::parse("-z", 3).unwrap(),
        ];
        assert_eq!(so3.combination(&g).unwrap(), so3.generators()[0]);
    }

    #[test]
    fn flat_torus_fibers() {
        let flat = flat_torus_module(2).unwrap();
        for x in [[0.0, 0.0], [1.3, 2.9]] {
            assert_eq!(flat.leaf_tangent_dim(&x).unwrap(), 2);
            assert_eq!(flat.fiber_dimension(&x, 0).unwrap(), 2);
            assert_eq!(flat.fiber_dimension(&x, 2).unwrap(), 2);
            assert_eq!(flat.cotangent_fiber(&x, 2).unwrap().fiber_dim, 2);
            assert_eq!(flat.minimality_gap(&x, 2).unwrap(), 0);
        }
    }

    #[test]
    fn irrational_points_use_floating_arithmetic() {
        let m = FoliationModule::new(
            Domain::Torus { dim: 2 },
            vec![PolyVectorField::coordinate(2, 0), field(&["0", "sin(x1)"])],
        )
        .unwrap();
        assert_eq!(m.fiber_dimension(&[0.7, 0.1], 2).unwrap(), 2);
        assert_eq!(m.leaf_tangent_dim(&[0.0, 0.1]).unwrap(), 1);
        assert_eq!(m.leaf_tangent_dim(&[0.7, 0.1]).unwrap(), 2);
    }

    #[test]
    fn longitudinal_symbols() {
        let so3 = so3_module(PI).unwrap();
        let lap = PolyhomSymbol::parse(2, &["xi1^2 + xi2^2 + xi3^2"], 3, 3).unwrap();
        let e1 = [1.0, 0.0, 0.0];
        let fiber = so3.cotangent_fiber(&e1, 1).unwrap();
        for eta in fiber.unit_mesh() {
            let v = so3.longitudinal_symbol(&lap, &e1, &eta, 1).unwrap();
            assert!((v.re - 1.0).abs() < 1e-12);
        }
        assert!(so3.longitudinal_symbol(&lap, &e1, &[1.0, 0.0, 0.0], 1).is_err());
        let zero = PolyhomSymbol::new(2, vec![Expr::zero()], 3, 3).unwrap();
        assert_eq!(
            so3.longitudinal_symbol(&zero, &e1, &fiber.basis[0], 1).unwrap(),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn ellipticity() {
        let so3 = so3_module(PI).unwrap();
        let pts = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.5, -1.0, 2.0]];
        let lap = PolyhomSymbol::parse(2, &["xi1^2 + xi2^2 + xi3^2"], 3, 3).unwrap();
        assert!(so3.ellipticity_check(&lap, &pts, 2, 1e-8).unwrap().passed());
        let one = PolyhomSymbol::parse(0, &["1"], 3, 3).unwrap();
        assert!(so3.ellipticity_check(&one, &pts, 2, 1e-8).unwrap().passed());
        let pairing = PolyhomSymbol::parse(1, &["x1*xi1 + x2*xi2 + x3*xi3"], 3, 3).unwrap();
        match so3.ellipticity_check_base(&pairing, &pts, 2, 1e-8).unwrap() {
            EllipticityVerdict::Witness { x, value, .. } => {
                assert_eq!(x, pts[0]);
                assert_eq!(value, 0.0);
            }
            v => panic!("{v:?}"),
        }
        // every base sample at a regular point is orthogonal to x
        for xi in so3.base_cotangent_samples(&pts[2], 2).unwrap() {
            let d: f64 = xi.iter().zip(&pts[2]).map(|(a, b)| a * b).sum();
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn domain_checks() {
        assert!(FoliationModule::parse(Domain::Torus { dim: 1 }, &[vec!["x"]]).is_err());
        let so3 = so3_module(1.0).unwrap();
        assert!(so3.leaf_tangent_dim(&[2.0, 0.0, 0.0]).is_err());
        assert!(FoliationModule::parse(Domain::Torus { dim: 2 }, &[vec!["1"]]).is_err());
    }

    #[test]
    fn divergence_of_rotations_vanishes() {
        let so3 = so3_module(PI).unwrap();
        assert!(so3.generators().iter().all(|g| g.divergence().is_zero()));
        assert_eq!(field(&["sin(x1)"]).divergence(), Coef::parse("cos(x1)", 1).unwrap());
    }
}
