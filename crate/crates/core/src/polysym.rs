//! Classical (polyhomogeneous) symbols `a ~ sum_k a_k`, truncated to a
//! finite number of positively homogeneous terms, plus closed-form
//! symbols for exact Fourier multipliers such as `(1 + |xi|^2)^(-1)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{smooth_step, Compiled, Degree, Expr};

/// Default truncation depth of the asymptotic expansion.
pub const DEFAULT_DEPTH: usize = 4;

/// Smallest admissible |leading term| for ellipticity checks.
pub const DEFAULT_ELLIPTIC_TOL: f64 = 1e-8;

/// Anything that can be quantized.
pub trait Symbol: Send + Sync {
    fn order(&self) -> i32;
    fn x_dim(&self) -> usize;
    fn xi_dim(&self) -> usize;
    fn depends_on_x(&self) -> bool;
    /// Raw value; non-finite where the symbol is singular.
    fn value(&self, x: &[f64], xi: &[f64]) -> Complex64;
    /// Principal-level data (leading homogeneous term, standard cutoff).
    fn principal(&self) -> PolyhomSymbol;
}

/// Radial cutoff in `|xi|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cutoff {
    /// 0 below 1/2, 1 from 1 on, quintic smoothstep in between.
    Standard,
    /// No cutoff: homogeneous terms are evaluated down to `xi = 0`.
    None,
}

impl Cutoff {
    pub fn weight(self, r: f64) -> f64 {
        match self {
            Cutoff::None => 1.0,
            Cutoff::Standard => {
                if r < 0.5 {
                    0.0
                } else if r >= 1.0 {
                    1.0
                } else {
                    let t = 2.0 * r - 1.0;
                    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousTerm {
    degree: i32,
    expr: Expr,
}

impl HomogeneousTerm {
    pub fn new(degree: i32, expr: Expr) -> Result<HomogeneousTerm> {
        let expr = expr.canonical();
        match expr.xi_degree()? {
            Degree::Any => {}
            d => {
                if d.integer() != Some(degree) {
                    return Err(Error::input(format!("term `{expr}` is not homogeneous of degree {degree}")));
                }
            }
        }
        Ok(HomogeneousTerm { degree, expr })
    }

    pub fn zero(degree: i32) -> HomogeneousTerm {
        HomogeneousTerm {
            degree,
            expr: Expr::zero(),
        }
    }

    pub fn degree(&self) -> i32 {
        self.degree
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn is_zero(&self) -> bool {
        self.expr.is_zero_literal()
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        self.expr.eval(x, xi)
    }

    /// Splits into (x-only factor, remaining factor) strings.
    fn split(&self) -> (String, String) {
        fn parts(e: &Expr) -> (Vec<Expr>, Vec<Expr>) {
            match e {
                Expr::Mul(factors) => {
                    let (xi, x): (Vec<Expr>, Vec<Expr>) = factors.iter().cloned().partition(|f| f.depends_on_xi());
                    (x, xi)
                }
                e if e.depends_on_xi() => (vec![], vec![e.clone()]),
                e => (vec![e.clone()], vec![]),
            }
        }
        let (x, xi) = match &self.expr {
            Expr::Add(summands) => {
                let split: Vec<_> = summands.iter().map(parts).collect();
                if split.iter().all(|(_, xi)| xi == &split[0].1) {
                    let coefficient = Expr::add(split.iter().map(|(x, _)| Expr::mul(x.clone())).collect());
                    (coefficient, Expr::mul(split[0].1.clone()))
                } else {
                    (Expr::one(), self.expr.clone())
                }
            }
            e => {
                let (x, xi) = parts(e);
                (Expr::mul(x), Expr::mul(xi))
            }
        };
        (x.canonical().to_string(), xi.canonical().to_string())
    }
}

/// Finitely many points `(x, xi)` with `|xi| = 1`.
#[derive(Clone, Debug, Default)]
pub struct SampleSet {
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
}

impl SampleSet {
    pub fn new(points: Vec<(Vec<f64>, Vec<f64>)>) -> SampleSet {
        SampleSet { points }
    }

    /// Unit directions `+-e_j` and the normalized diagonals.
    pub fn unit_directions(xi_dim: usize) -> Vec<Vec<f64>> {
        let mut dirs = Vec::new();
        for j in 0..xi_dim {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; xi_dim];
                v[j] = s;
                dirs.push(v);
            }
        }
        if xi_dim > 1 {
            let scale = 1.0 / (xi_dim as f64).sqrt();
            for mask in 0..(1u32 << xi_dim) {
                dirs.push((0..xi_dim).map(|j| if mask & (1 << j) != 0 { -scale } else { scale }).collect());
            }
        }
        dirs
    }

    pub fn sphere(xs: &[Vec<f64>], xi_dim: usize) -> SampleSet {
        let dirs = SampleSet::unit_directions(xi_dim);
        let mut points = Vec::new();
        for x in xs {
            for d in &dirs {
                points.push((x.clone(), d.clone()));
            }
        }
        SampleSet { points }
    }
}

#[derive(Clone, Debug)]
pub struct PolyhomSymbol {
    order: i32,
    terms: Vec<HomogeneousTerm>,
    cutoff: Cutoff,
    depth: usize,
    x_dim: usize,
    xi_dim: usize,
    compiled: Vec<Compiled>,
}

impl PartialEq for PolyhomSymbol {
    fn eq(&self, o: &Self) -> bool {
        self.order == o.order
            && self.terms == o.terms
            && self.cutoff == o.cutoff
            && self.depth == o.depth
            && self.x_dim == o.x_dim
            && self.xi_dim == o.xi_dim
    }
}

impl PolyhomSymbol {
    /// Builds `sum_k terms[k]` with `terms[k]` of degree `order - k`.
    pub fn new(order: i32, terms: Vec<Expr>, x_dim: usize, xi_dim: usize) -> Result<PolyhomSymbol> {
        PolyhomSymbol::with_depth(order, terms, x_dim, xi_dim, DEFAULT_DEPTH)
    }

    pub fn with_depth(order: i32, terms: Vec<Expr>, x_dim: usize, xi_dim: usize, depth: usize) -> Result<PolyhomSymbol> {
        if depth == 0 {
            return Err(Error::input("truncation depth must be at least 1"));
        }
        if terms.len() > depth {
            return Err(Error::input(format!("{} terms exceed the truncation depth {depth}", terms.len())));
        }
        let mut built = Vec::with_capacity(terms.len().max(1));
        for (k, e) in terms.into_iter().enumerate() {
            if e.x_extent() > x_dim {
                return Err(Error::Dimension {
                    expected: x_dim,
                    found: e.x_extent(),
                });
            }
            if e.xi_extent() > xi_dim {
                return Err(Error::Dimension {
                    expected: xi_dim,
                    found: e.xi_extent(),
                });
            }
            built.push(HomogeneousTerm::new(order - k as i32, e)?);
        }
        if built.is_empty() {
            built.push(HomogeneousTerm::zero(order));
        }
        Ok(PolyhomSymbol::from_terms(order, built, Cutoff::Standard, depth, x_dim, xi_dim))
    }

    fn from_terms(order: i32, terms: Vec<HomogeneousTerm>, cutoff: Cutoff, depth: usize, x_dim: usize, xi_dim: usize) -> PolyhomSymbol {
        let compiled = terms.iter().map(|t| t.expr.compile()).collect();
        PolyhomSymbol {
            order,
            terms,
            cutoff,
            depth,
            x_dim,
            xi_dim,
            compiled,
        }
    }

    pub fn parse(order: i32, terms: &[&str], x_dim: usize, xi_dim: usize) -> Result<PolyhomSymbol> {
        let exprs = terms.iter().map(|t| Expr::parse(t)).collect::<Result<Vec<_>>>()?;
        PolyhomSymbol::new(order, exprs, x_dim, xi_dim)
    }

    pub fn with_cutoff(mut self, cutoff: Cutoff) -> PolyhomSymbol {
        self.cutoff = cutoff;
        self
    }

    pub fn order_value(&self) -> i32 {
        self.order
    }

    pub fn terms(&self) -> &[HomogeneousTerm] {
        &self.terms
    }

    pub fn leading(&self) -> &HomogeneousTerm {
        &self.terms[0]
    }

    pub fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Truncated evaluation `chi(|xi|) * sum_k a_k(x, xi)` with input checks.
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Result<Complex64> {
        if x.len() != self.x_dim {
            return Err(Error::Dimension {
                expected: self.x_dim,
                found: x.len(),
            });
        }
        if xi.len() != self.xi_dim {
            return Err(Error::Dimension {
                expected: self.xi_dim,
                found: xi.len(),
            });
        }
        if x.iter().chain(xi).any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite point"));
        }
        let v = self.value(x, xi);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::input(format!(
                "symbol is singular at xi={xi:?} (negative-degree term without cutoff)"
            )));
        }
        Ok(v)
    }

    /// The leading term alone, standard cutoff.
    pub fn principal_part(&self) -> PolyhomSymbol {
        PolyhomSymbol::from_terms(
            self.order,
            vec![self.terms[0].clone()],
            Cutoff::Standard,
            self.depth,
            self.x_dim,
            self.xi_dim,
        )
    }

    pub fn conj(&self) -> PolyhomSymbol {
        let terms = self
            .terms
            .iter()
            .map(|t| HomogeneousTerm {
                degree: t.degree,
                expr: Expr::conj(t.expr.clone()).canonical(),
            })
            .collect();
        PolyhomSymbol::from_terms(self.order, terms, self.cutoff, self.depth, self.x_dim, self.xi_dim)
    }

    /// Multiplies every term by a degree-0 factor.
    pub fn scale(&self, factor: &Expr) -> Result<PolyhomSymbol> {
        match factor.xi_degree()? {
            Degree::Any | Degree::Halves(0) => {}
            _ => return Err(Error::input("scaling factor must have degree 0")),
        }
        let terms = self
            .terms
            .iter()
            .map(|t| HomogeneousTerm {
                degree: t.degree,
                expr: Expr::mul(vec![factor.clone(), t.expr.clone()]).canonical(),
            })
            .collect();
        Ok(PolyhomSymbol::from_terms(
            self.order,
            terms,
            self.cutoff,
            self.depth,
            self.x_dim.max(factor.x_extent()),
            self.xi_dim,
        ))
    }

    pub fn to_record(&self) -> SymbolRecord {
        SymbolRecord {
            order: self.order,
            depth: self.depth,
            cutoff: self.cutoff,
            x_dim: self.x_dim,
            xi_dim: self.xi_dim,
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let (coefficient, xi) = t.split();
                    TermRecord {
                        degree: t.degree,
                        coefficient,
                        xi,
                    }
                })
                .collect(),
        }
    }

    pub fn from_record(r: &SymbolRecord) -> Result<PolyhomSymbol> {
        let mut terms = Vec::new();
        for (k, t) in r.terms.iter().enumerate() {
            if t.degree != r.order - k as i32 {
                return Err(Error::input(format!(
                    "term {k} has degree {} but {} was expected",
                    t.degree,
                    r.order - k as i32
                )));
            }
            let e = Expr::mul(vec![Expr::parse(&t.coefficient)?, Expr::parse(&t.xi)?]);
            terms.push(e);
        }
        Ok(PolyhomSymbol::with_depth(r.order, terms, r.x_dim, r.xi_dim, r.depth)?.with_cutoff(r.cutoff))
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(&self.to_record()).expect("symbol record serializes")
    }

    pub fn from_text(text: &str) -> Result<PolyhomSymbol> {
        let r: SymbolRecord = serde_json::from_str(text).map_err(|e| Error::input(format!("symbol record: {e}")))?;
        PolyhomSymbol::from_record(&r)
    }
}

impl Symbol for PolyhomSymbol {
    fn order(&self) -> i32 {
        self.order
    }

    fn x_dim(&self) -> usize {
        self.x_dim
    }

    fn xi_dim(&self) -> usize {
        self.xi_dim
    }

    fn depends_on_x(&self) -> bool {
        self.terms.iter().any(|t| t.expr.depends_on_x())
    }

    fn value(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let w = self.cutoff.weight(r);
        if w == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if r == 0.0 {
            // only reachable without cutoff
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, c) in self.terms.iter().zip(&self.compiled) {
                if t.is_zero() || t.degree > 0 {
                    continue;
                }
                if t.degree < 0 {
                    return Complex64::new(f64::INFINITY, 0.0);
                }
                let v = c.eval_with_norm(x, xi, r);
                if v.re.is_finite() && v.im.is_finite() {
                    acc += v;
                }
            }
            return acc;
        }
        let s: Complex64 = self.compiled.iter().map(|c| c.eval_with_norm(x, xi, r)).sum();
        s * w
    }

    fn principal(&self) -> PolyhomSymbol {
        self.principal_part()
    }
}

/// Structured-text form of a symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub order: i32,
    pub depth: usize,
    pub cutoff: Cutoff,
    pub x_dim: usize,
    pub xi_dim: usize,
    pub terms: Vec<TermRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub degree: i32,
    pub coefficient: String,
    pub xi: String,
}

fn check_same_dims(a: &PolyhomSymbol, b: &PolyhomSymbol) -> Result<()> {
    if a.xi_dim != b.xi_dim {
        return Err(Error::Dimension {
            expected: a.xi_dim,
            found: b.xi_dim,
        });
    }
    Ok(())
}

fn combined_cutoff(a: Cutoff, b: Cutoff) -> Cutoff {
    if a == Cutoff::None && b == Cutoff::None {
        Cutoff::None
    } else {
        Cutoff::Standard
    }
}

/// Pointwise product; term `j` is the degree-`m_a + m_b - j` part of the
/// Cauchy product, truncated to the smaller depth.
pub fn symbol_product(a: &PolyhomSymbol, b: &PolyhomSymbol) -> Result<PolyhomSymbol> {
    check_same_dims(a, b)?;
    let depth = a.depth.min(b.depth);
    let count = (a.terms.len() + b.terms.len() - 1).min(depth);
    let order = a.order + b.order;
    let mut terms = Vec::with_capacity(count);
    for j in 0..count {
        let mut summands = Vec::new();
        for i in 0..=j {
            let (Some(ai), Some(bk)) = (a.terms.get(i), b.terms.get(j - i)) else {
                continue;
            };
            if ai.is_zero() || bk.is_zero() {
                continue;
            }
            summands.push(Expr::mul(vec![ai.expr.clone(), bk.expr.clone()]));
        }
        terms.push(HomogeneousTerm {
            degree: order - j as i32,
            expr: Expr::add(summands).canonical(),
        });
    }
    Ok(PolyhomSymbol::from_terms(
        order,
        terms,
        combined_cutoff(a.cutoff, b.cutoff),
        depth,
        a.x_dim.max(b.x_dim),
        a.xi_dim,
    ))
}

/// Degree-wise sum; the order is the larger of the two.
pub fn symbol_sum(a: &PolyhomSymbol, b: &PolyhomSymbol) -> Result<PolyhomSymbol> {
    check_same_dims(a, b)?;
    let order = a.order.max(b.order);
    let depth = a.depth.min(b.depth);
    let last = (a.order - a.terms.len() as i32 + 1).min(b.order - b.terms.len() as i32 + 1);
    let count = ((order - last + 1) as usize).min(depth);
    let pick = |s: &PolyhomSymbol, degree: i32| -> Option<Expr> {
        let k = s.order - degree;
        (k >= 0).then(|| s.terms.get(k as usize).map(|t| t.expr.clone())).flatten()
    };
    let terms = (0..count)
        .map(|j| {
            let degree = order - j as i32;
            let parts: Vec<Expr> = [pick(a, degree), pick(b, degree)].into_iter().flatten().collect();
            HomogeneousTerm {
                degree,
                expr: Expr::add(parts).canonical(),
            }
        })
        .collect();
    Ok(PolyhomSymbol::from_terms(
        order,
        terms,
        combined_cutoff(a.cutoff, b.cutoff),
        depth,
        a.x_dim.max(b.x_dim),
        a.xi_dim,
    ))
}

fn check_nonvanishing(a: &PolyhomSymbol, samples: &SampleSet, tol: f64) -> Result<()> {
    let lead = a.leading().expr.compile();
    for (x, xi) in &samples.points {
        let v = lead.eval(x, xi);
        if v.norm().is_nan() || v.norm() < tol {
            return Err(Error::Ellipticity {
                x: x.clone(),
                xi: xi.clone(),
                value: v.norm(),
            });
        }
    }
    Ok(())
}

/// Order `-m` symbol whose leading term is `1 / a_m`.
pub fn principal_inverse(a: &PolyhomSymbol, samples: &SampleSet) -> Result<PolyhomSymbol> {
    principal_inverse_tol(a, samples, DEFAULT_ELLIPTIC_TOL)
}

pub fn principal_inverse_tol(a: &PolyhomSymbol, samples: &SampleSet, tol: f64) -> Result<PolyhomSymbol> {
    check_nonvanishing(a, samples, tol)?;
    let inv = HomogeneousTerm {
        degree: -a.order,
        expr: Expr::pow(a.leading().expr.clone(), -1).canonical(),
    };
    Ok(PolyhomSymbol::from_terms(
        -a.order,
        vec![inv],
        Cutoff::Standard,
        a.depth,
        a.x_dim,
        a.xi_dim,
    ))
}

/// Order `m` symbol whose leading term is `sqrt(a_{2m})`.
pub fn principal_sqrt(a: &PolyhomSymbol, samples: &SampleSet) -> Result<PolyhomSymbol> {
    if a.order % 2 != 0 {
        return Err(Error::input(format!("order {} is odd", a.order)));
    }
    let lead = a.leading().expr.compile();
    for (x, xi) in &samples.points {
        let v = lead.eval(x, xi);
        let real = v.im.abs() <= 1e-12 * v.norm().max(1.0);
        if !(real && v.re > DEFAULT_ELLIPTIC_TOL) {
            return Err(Error::Positivity {
                x: x.clone(),
                xi: xi.clone(),
                value: format!("{v}"),
            });
        }
    }
    let root = HomogeneousTerm {
        degree: a.order / 2,
        expr: Expr::sqrt(a.leading().expr.clone()).canonical(),
    };
    Ok(PolyhomSymbol::from_terms(
        a.order / 2,
        vec![root],
        Cutoff::Standard,
        a.depth,
        a.x_dim,
        a.xi_dim,
    ))
}

/// `a(x, xi) * chi_1(|xi| / n)` with `chi_1 = 1` on `[0, 1]` and `0` from 2 on.
#[derive(Clone, Debug)]
pub struct MollifiedSymbol {
    inner: PolyhomSymbol,
    n: u32,
}

pub const MOLLIFIER_PLATEAU: f64 = 1.0;
pub const MOLLIFIER_SUPPORT: f64 = 2.0;

pub fn mollify(a: &PolyhomSymbol, n: u32) -> Result<MollifiedSymbol> {
    if n == 0 {
        return Err(Error::input("mollification index must be positive"));
    }
    Ok(MollifiedSymbol { inner: a.clone(), n })
}

impl MollifiedSymbol {
    fn weight(&self, r: f64) -> f64 {
        let s = r / self.n as f64;
        smooth_step((MOLLIFIER_SUPPORT - s) / (MOLLIFIER_SUPPORT - MOLLIFIER_PLATEAU))
    }

    /// Radius beyond which the symbol vanishes.
    pub fn support_radius(&self) -> f64 {
        MOLLIFIER_SUPPORT * self.n as f64
    }
}

impl Symbol for MollifiedSymbol {
    fn order(&self) -> i32 {
        self.inner.order
    }
    fn x_dim(&self) -> usize {
        self.inner.x_dim
    }
    fn xi_dim(&self) -> usize {
        self.inner.xi_dim
    }
    fn depends_on_x(&self) -> bool {
        self.inner.depends_on_x()
    }
    fn value(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let w = self.weight(r);
        if w == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.inner.value(x, xi) * w
    }
    fn principal(&self) -> PolyhomSymbol {
        self.inner.principal_part()
    }
}

/// Degree-wise accumulation of a finite sequence with orders `m, m-1, ...`.
pub fn asymptotic_sum(inputs: &[PolyhomSymbol]) -> Result<PolyhomSymbol> {
    let first = inputs.first().ok_or_else(|| Error::input("asymptotic sum of an empty sequence"))?;
    let m = first.order;
    for (k, s) in inputs.iter().enumerate() {
        if s.order != m - k as i32 {
            return Err(Error::input(format!(
                "input {k} has order {} but {} was expected",
                s.order,
                m - k as i32
            )));
        }
        check_same_dims(first, s)?;
    }
    let depth = inputs.iter().map(|s| s.depth).min().unwrap_or(DEFAULT_DEPTH);
    let count = inputs
        .iter()
        .enumerate()
        .map(|(k, s)| k + s.terms.len())
        .max()
        .unwrap_or(1)
        .min(depth);
    let terms = (0..count)
        .map(|j| {
            let parts: Vec<Expr> = inputs
                .iter()
                .enumerate()
                .filter(|(k, _)| *k <= j)
                .filter_map(|(k, s)| s.terms.get(j - k).map(|t| t.expr.clone()))
                .collect();
            HomogeneousTerm {
                degree: m - j as i32,
                expr: Expr::add(parts).canonical(),
            }
        })
        .collect();
    let cutoff = inputs.iter().map(|s| s.cutoff).fold(Cutoff::None, combined_cutoff);
    Ok(PolyhomSymbol::from_terms(
        m,
        terms,
        cutoff,
        depth,
        inputs.iter().map(|s| s.x_dim).max().unwrap_or(0),
        first.xi_dim,
    ))
}

/// Exact closed-form multiplier, e.g. `(1 + |xi|^2)^(-1/2) * (2 + cos(x1))`.
/// Carries its principal part explicitly.
#[derive(Clone, Debug)]
pub struct ClosedFormSymbol {
    order: i32,
    expr: Expr,
    compiled: Compiled,
    principal: PolyhomSymbol,
    x_dim: usize,
    xi_dim: usize,
}

impl ClosedFormSymbol {
    pub fn new(order: i32, expr: Expr, principal: Expr, x_dim: usize, xi_dim: usize) -> Result<ClosedFormSymbol> {
        if expr.x_extent() > x_dim || expr.xi_extent() > xi_dim {
            return Err(Error::input(format!("`{expr}` uses more variables than declared")));
        }
        let principal = PolyhomSymbol::new(order, vec![principal], x_dim, xi_dim)?;
        Ok(ClosedFormSymbol {
            order,
            compiled: expr.compile(),
            expr,
            principal,
            x_dim,
            xi_dim,
        })
    }

    pub fn parse(order: i32, expr: &str, principal: &str, x_dim: usize, xi_dim: usize) -> Result<ClosedFormSymbol> {
        ClosedFormSymbol::new(order, Expr::parse(expr)?, Expr::parse(principal)?, x_dim, xi_dim)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl Symbol for ClosedFormSymbol {
    fn order(&self) -> i32 {
        self.order
    }
    fn x_dim(&self) -> usize {
        self.x_dim
    }
    fn xi_dim(&self) -> usize {
        self.xi_dim
    }
    fn depends_on_x(&self) -> bool {
        self.expr.depends_on_x()
    }
    fn value(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        self.compiled.eval(x, xi)
    }
    fn principal(&self) -> PolyhomSymbol {
        self.principal.clone()
    }
}

/// Least-squares slope of `ln(values)` against `ln(abscissa)`.
pub fn loglog_slope(abscissa: &[f64], values: &[f64]) -> f64 {
    let n = abscissa.len() as f64;
    let lx: Vec<f64> = abscissa.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// Growth exponent of `max_x |a(x, r e)|` over radii, by log-log regression.
pub fn growth_exponent(a: &dyn Symbol, xs: &[Vec<f64>], radii: &[f64]) -> f64 {
    let dirs = SampleSet::unit_directions(a.xi_dim());
    let maxima: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let mut best: f64 = 0.0;
            for x in xs {
                for d in &dirs {
                    let xi: Vec<f64> = d.iter().map(|v| v * r).collect();
                    best = best.max(a.value(x, &xi).norm());
                }
            }
            best
        })
        .collect();
    loglog_slope(radii, &maxima)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eval_examples() {
        let a = PolyhomSymbol::parse(2, &["xi^2"], 1, 1).unwrap();
        assert_eq!(a.eval(&[0.0], &[3.0]).unwrap(), c(9.0, 0.0));
        assert_eq!(a.eval(&[0.0], &[0.25]).unwrap(), c(0.0, 0.0));
        let b = PolyhomSymbol::parse(1, &["i*xi", "1"], 1, 1).unwrap();
        assert_eq!(b.eval(&[0.0], &[2.0]).unwrap(), c(1.0, 2.0));
        assert!(b.eval(&[0.0, 1.0], &[2.0]).is_err());
    }

    #[test]
    fn degrees_must_be_consistent() {
        assert!(PolyhomSymbol::parse(2, &["xi^2", "xi^2"], 1, 1).is_err());
        assert!(PolyhomSymbol::parse(1, &["1 + xi"], 1, 1).is_err());
        assert!(PolyhomSymbol::parse(0, &["1", "0", "0", "0", "0"], 1, 1).is_err());
    }

    #[test]
    fn product_examples() {
        let ixi = PolyhomSymbol::parse(1, &["i*xi"], 1, 1).unwrap();
        let p = symbol_product(&ixi, &ixi).unwrap();
        assert_eq!(p.order_value(), 2);
        assert_eq!(p.terms()[0].expr(), &Expr::parse("-xi1^2").unwrap().canonical());

        let one = PolyhomSymbol::parse(0, &["1"], 1, 1).unwrap();
        assert_eq!(symbol_product(&one, &ixi).unwrap(), ixi);

        let a = PolyhomSymbol::parse(1, &["i*xi", "1"], 1, 1).unwrap();
        let p = symbol_product(&a, &ixi).unwrap();
        let expected = PolyhomSymbol::parse(2, &["-xi^2", "i*xi"], 1, 1).unwrap();
        assert_eq!(p.terms(), expected.terms());
        assert_abs_diff_eq!((p.eval(&[0.0], &[2.0]).unwrap() - c(-4.0, 2.0)).norm(), 0.0, epsilon = 1e-14);

        let two_d = PolyhomSymbol::parse(1, &["xi2"], 2, 2).unwrap();
        assert!(symbol_product(&ixi, &two_d).is_err());
    }

    #[test]
    fn inverse_examples() {
        let xs: Vec<Vec<f64>> = (0..8).map(|k| vec![k as f64 * 0.7]).collect();
        let samples = SampleSet::sphere(&xs, 1);
        let a = PolyhomSymbol::parse(2, &["xi^2"], 1, 1).unwrap();
        let inv = principal_inverse(&a, &samples).unwrap();
        assert_eq!(inv.order_value(), -2);
        assert_abs_diff_eq!(inv.eval(&[0.3], &[2.0]).unwrap().re, 0.25, epsilon = 1e-15);

        let b = PolyhomSymbol::parse(2, &["(2 + cos(x))*xi^2"], 1, 1).unwrap();
        let inv = principal_inverse(&b, &samples).unwrap();
        assert_abs_diff_eq!(inv.eval(&[0.0], &[1.0]).unwrap().re, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_detects_vanishing_on_so3_cotangent_set() {
        // <x, xi> with xi orthogonal to x
        let a = PolyhomSymbol::parse(1, &["x1*xi1 + x2*xi2 + x3*xi3"], 3, 3).unwrap();
        let samples = SampleSet::new(vec![
            (vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]),
            (vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]),
        ]);
        match principal_inverse(&a, &samples) {
            Err(Error::Ellipticity { x, xi, value }) => {
                assert_eq!(x, vec![1.0, 0.0, 0.0]);
                assert_eq!(xi, vec![0.0, 1.0, 0.0]);
                assert_eq!(value, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sqrt_examples() {
        let xs: Vec<Vec<f64>> = (0..8).map(|k| vec![k as f64 * 0.7]).collect();
        let samples = SampleSet::sphere(&xs, 1);
        let a = PolyhomSymbol::parse(2, &["xi^2"], 1, 1).unwrap();
        let r = principal_sqrt(&a, &samples).unwrap();
        assert_eq!(r.order_value(), 1);
        for xi in [-3.0, 1.5, 7.0] {
            assert_abs_diff_eq!(r.eval(&[0.0], &[xi]).unwrap().re, f64::abs(xi), epsilon = 1e-14);
        }
        let b = PolyhomSymbol::parse(2, &["(2 + cos(x))^2*xi^2"], 1, 1).unwrap();
        let r = principal_sqrt(&b, &samples).unwrap();
        for x in [0.0, 1.0, 2.5] {
            let v = r.eval(&[x], &[-2.0]).unwrap();
            assert_abs_diff_eq!(v.re, (2.0 + x.cos()) * 2.0, epsilon = 1e-13);
        }
        let neg = PolyhomSymbol::parse(2, &["-xi^2"], 1, 1).unwrap();
        assert!(matches!(principal_sqrt(&neg, &samples), Err(Error::Positivity { .. })));
        let odd = PolyhomSymbol::parse(1, &["xi"], 1, 1).unwrap();
        assert!(principal_sqrt(&odd, &samples).is_err());
    }

    #[test]
    fn mollify_examples() {
        let a = PolyhomSymbol::parse(2, &["xi^2"], 1, 1).unwrap();
        let m = mollify(&a, 10).unwrap();
        assert_eq!(m.value(&[0.0], &[9.0]), c(81.0, 0.0));
        assert_eq!(m.value(&[0.0], &[m.support_radius() + 0.5]), c(0.0, 0.0));
        let mid = m.value(&[0.0], &[15.0]).re;
        assert!(mid > 0.0 && mid < 225.0);
        assert!(mollify(&a, 0).is_err());
    }

    #[test]
    fn asymptotic_sum_examples() {
        let a = PolyhomSymbol::parse(2, &["xi^2", "-xi"], 1, 1).unwrap();
        assert_eq!(asymptotic_sum(std::slice::from_ref(&a)).unwrap(), a);

        let s = asymptotic_sum(&[
            PolyhomSymbol::parse(2, &["xi^2"], 1, 1).unwrap(),
            PolyhomSymbol::parse(1, &["-xi"], 1, 1).unwrap(),
        ])
        .unwrap();
        assert_eq!(s, a);

        let s = asymptotic_sum(&[
            PolyhomSymbol::parse(2, &["xi^2", "xi"], 1, 1).unwrap(),
            PolyhomSymbol::parse(1, &["2*xi"], 1, 1).unwrap(),
        ])
        .unwrap();
        assert_eq!(s, PolyhomSymbol::parse(2, &["xi^2", "3*xi"], 1, 1).unwrap());

        let bad = asymptotic_sum(&[
            PolyhomSymbol::parse(2, &["xi^2"], 1, 1).unwrap(),
            PolyhomSymbol::parse(0, &["1"], 1, 1).unwrap(),
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn text_form_round_trips() {
        let a = PolyhomSymbol::parse(2, &["(2 + cos(x1))*xi1^2", "i*sin(x1)*xi1", "1"], 1, 1).unwrap();
        let text = a.to_text();
        let back = PolyhomSymbol::from_text(&text).unwrap();
        assert_eq!(back, a);
        let rec = a.to_record();
        assert_eq!(rec.terms[0].xi, "xi1^2");
    }

    #[test]
    fn sum_aligns_degrees() {
        let a = PolyhomSymbol::parse(2, &["xi^2"], 1, 1).unwrap();
        let b = PolyhomSymbol::parse(0, &["1"], 1, 1).unwrap();
        let s = symbol_sum(&a, &b).unwrap();
        assert_eq!(s.terms().len(), 3);
        assert_eq!(s.eval(&[0.0], &[2.0]).unwrap(), c(5.0, 0.0));
    }
}
