//! Exact coefficient ring: finite sums of `c * x^p * exp(i k.x)` with
//! `c` in Q(i). Polynomials (box domains) and trigonometric polynomials
//! (torus domains) are both subrings; derivatives and products stay exact.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::exact::{exact_i, exact_int, exact_real, exact_to_c64, format_exact, Exact};
use crate::expr::Expr;

/// `x^pow * exp(i freq.x)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mono {
    pub pow: Vec<u32>,
    pub freq: Vec<i64>,
}

impl Mono {
    pub fn one(dim: usize) -> Mono {
        Mono {
            pow: vec![0; dim],
            freq: vec![0; dim],
        }
    }

    pub fn degree(&self) -> u32 {
        self.pow.iter().sum::<u32>() + self.freq.iter().map(|k| k.unsigned_abs() as u32).sum::<u32>()
    }

    fn mul(&self, o: &Mono) -> Mono {
        Mono {
            pow: self.pow.iter().zip(&o.pow).map(|(a, b)| a + b).collect(),
            freq: self.freq.iter().zip(&o.freq).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let mut v = 1.0;
        let mut phase = 0.0;
        for ((p, k), xv) in self.pow.iter().zip(&self.freq).zip(x) {
            v *= xv.powi(*p as i32);
            phase += *k as f64 * xv;
        }
        Complex64::from_polar(v, phase)
    }

    /// Exact value; only available when the phase `k.x` vanishes.
    pub fn eval_exact(&self, x: &[BigRational]) -> Option<Exact> {
        let phase: BigRational = self
            .freq
            .iter()
            .zip(x)
            .map(|(k, xv)| BigRational::from_integer((*k).into()) * xv)
            .fold(BigRational::zero(), |a, b| a + b);
        if !phase.is_zero() {
            return None;
        }
        let mut v = BigRational::one();
        for (p, xv) in self.pow.iter().zip(x) {
            for _ in 0..*p {
                v *= xv;
            }
        }
        Some(exact_real(v))
    }

    pub fn is_constant(&self) -> bool {
        self.pow.iter().all(|&p| p == 0) && self.freq.iter().all(|&k| k == 0)
    }

    pub fn is_trigonometric(&self) -> bool {
        self.pow.iter().all(|&p| p == 0)
    }
}

/// Which building blocks a finite-dimensional function space may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisKinds {
    pub polynomial: bool,
    pub fourier: bool,
}

/// All monomials of degree at most `cap`, ordered by degree.
pub fn basis(dim: usize, cap: u32, kinds: BasisKinds) -> Vec<Mono> {
    let pows = if kinds.polynomial {
        exponent_vectors(dim, cap)
    } else {
        vec![vec![0; dim]]
    };
    let mut out = Vec::new();
    for pow in pows {
        let used: u32 = pow.iter().sum();
        let freqs = if kinds.fourier {
            frequency_vectors(dim, cap - used)
        } else {
            vec![vec![0; dim]]
        };
        for freq in freqs {
            out.push(Mono { pow: pow.clone(), freq });
        }
    }
    out.sort_by(|a, b| a.degree().cmp(&b.degree()).then(a.cmp(b)));
    out
}

fn exponent_vectors(dim: usize, cap: u32) -> Vec<Vec<u32>> {
    if dim == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..=cap {
        for mut rest in exponent_vectors(dim - 1, cap - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn frequency_vectors(dim: usize, cap: u32) -> Vec<Vec<i64>> {
    if dim == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let c = cap as i64;
    for first in -c..=c {
        for mut rest in frequency_vectors(dim - 1, cap - first.unsigned_abs() as u32) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coef {
    dim: usize,
    terms: BTreeMap<Mono, Exact>,
}

impl Coef {
    pub fn zero(dim: usize) -> Coef {
        Coef {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: Exact) -> Coef {
        Coef::monomial(Mono::one(dim), c)
    }

    pub fn int(dim: usize, n: i64) -> Coef {
        Coef::constant(dim, exact_int(n))
    }

    pub fn monomial(m: Mono, c: Exact) -> Coef {
        let mut out = Coef::zero(m.pow.len());
        if !c.is_zero() {
            out.terms.insert(m, c);
        }
        out
    }

    pub fn var(dim: usize, j: usize) -> Coef {
        let mut m = Mono::one(dim);
        m.pow[j] = 1;
        Coef::monomial(m, exact_int(1))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Exact)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Mono::degree).max().unwrap_or(0)
    }

    pub fn is_trigonometric(&self) -> bool {
        self.terms.keys().all(Mono::is_trigonometric)
    }

    pub fn has_fourier_modes(&self) -> bool {
        self.terms.keys().any(|m| m.freq.iter().any(|&k| k != 0))
    }

    pub fn is_integer_valued(&self) -> bool {
        self.terms.values().all(|c| c.re.is_integer() && c.im.is_integer())
    }

    fn insert_add(&mut self, m: Mono, c: Exact) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert_with(|| exact_int(0));
        *entry = &*entry + &c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, o: &Coef) -> Coef {
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.insert_add(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, o: &Coef) -> Coef {
        self.add(&o.scale(&exact_int(-1)))
    }

    pub fn scale(&self, c: &Exact) -> Coef {
        let mut out = Coef::zero(self.dim);
        for (m, v) in &self.terms {
            out.insert_add(m.clone(), v * c);
        }
        out
    }

    pub fn mul(&self, o: &Coef) -> Coef {
        let mut out = Coef::zero(self.dim);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                out.insert_add(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn mul_mono(&self, m: &Mono) -> Coef {
        let mut out = Coef::zero(self.dim);
        for (ma, ca) in &self.terms {
            out.insert_add(ma.mul(m), ca.clone());
        }
        out
    }

    /// Exact partial derivative along coordinate `j`.
    pub fn deriv(&self, j: usize) -> Coef {
        let mut out = Coef::zero(self.dim);
        for (m, c) in &self.terms {
            if m.pow[j] > 0 {
                let mut d = m.clone();
                d.pow[j] -= 1;
                out.insert_add(d, c * exact_int(m.pow[j] as i64));
            }
            if m.freq[j] != 0 {
                out.insert_add(m.clone(), c * exact_i() * exact_int(m.freq[j]));
            }
        }
        out
    }

    /// Complex conjugate for real arguments.
    pub fn conj(&self) -> Coef {
        let mut out = Coef::zero(self.dim);
        for (m, c) in &self.terms {
            let mut mc = m.clone();
            mc.freq.iter_mut().for_each(|k| *k = -*k);
            out.insert_add(mc, c.conj());
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.terms.iter().map(|(m, c)| exact_to_c64(c) * m.eval(x)).sum()
    }

    pub fn eval_exact(&self, x: &[BigRational]) -> Option<Exact> {
        let mut acc = exact_int(0);
        for (m, c) in &self.terms {
            acc += c * m.eval_exact(x)?;
        }
        Some(acc)
    }

    /// Reads an expression into the ring. Rejects anything that is not a
    /// polynomial or trigonometric polynomial with exact coefficients.
    pub fn from_expr(e: &Expr, dim: usize) -> Result<Coef> {
        let unsupported = |what: &str| Error::Ring(format!("{what} in `{e}`"));
        Ok(match e {
            Expr::Const(c) => Coef::constant(dim, c.clone()),
            Expr::X(j) => {
                if *j >= dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        found: j + 1,
                    });
                }
                Coef::var(dim, *j)
            }
            Expr::Add(v) => {
                let mut acc = Coef::zero(dim);
                for c in v {
                    acc = acc.add(&Coef::from_expr(c, dim)?);
                }
                acc
            }
            Expr::Mul(v) => {
                let mut acc = Coef::int(dim, 1);
                for c in v {
                    acc = acc.mul(&Coef::from_expr(c, dim)?);
                }
                acc
            }
            Expr::Pow(b, n) if *n >= 0 => {
                let base = Coef::from_expr(b, dim)?;
                let mut acc = Coef::int(dim, 1);
                for _ in 0..*n {
                    acc = acc.mul(&base);
                }
                acc
            }
            Expr::Conj(b) => Coef::from_expr(b, dim)?.conj(),
            Expr::Sin(b) | Expr::Cos(b) => {
                let k = integer_linear_form(&Coef::from_expr(b, dim)?)
                    .ok_or_else(|| unsupported("trigonometric argument is not an integer combination of coordinates"))?;
                let plus = Coef::monomial(
                    Mono {
                        pow: vec![0; dim],
                        freq: k.clone(),
                    },
                    exact_int(1),
                );
                let minus = Coef::monomial(
                    Mono {
                        pow: vec![0; dim],
                        freq: k.iter().map(|v| -v).collect(),
                    },
                    exact_int(1),
                );
                if matches!(e, Expr::Sin(_)) {
                    // (e^{ik.x} - e^{-ik.x}) / 2i
                    let half_over_i = Exact::new(BigRational::zero(), BigRational::new((-1).into(), 2.into()));
                    plus.sub(&minus).scale(&half_over_i)
                } else {
                    let half = exact_real(BigRational::new(1.into(), 2.into()));
                    plus.add(&minus).scale(&half)
                }
            }
            Expr::Exp(b) => {
                let arg = Coef::from_expr(b, dim)?.scale(&Exact::new(BigRational::zero(), -BigRational::one()));
                let k =
                    integer_linear_form(&arg).ok_or_else(|| unsupported("exponential argument is not i times an integer combination"))?;
                Coef::monomial(
                    Mono {
                        pow: vec![0; dim],
                        freq: k,
                    },
                    exact_int(1),
                )
            }
            Expr::Pow(b, n) => {
                // only nonzero constants may be inverted
                let base = Coef::from_expr(b, dim)?;
                let c = match base.terms.iter().next() {
                    Some((m, c)) if base.terms.len() == 1 && m.is_constant() => c.clone(),
                    _ => return Err(unsupported("negative power")),
                };
                let inv = exact_int(1) / c;
                let mut acc = exact_int(1);
                for _ in 0..(-n) {
                    acc *= &inv;
                }
                Coef::constant(dim, acc)
            }
            Expr::Pi => return Err(unsupported("pi")),
            Expr::Xi(_) | Expr::XiNorm => return Err(unsupported("covector variable")),
            Expr::Sqrt(_) => return Err(unsupported("square root")),
            Expr::Bump { .. } => return Err(unsupported("cutoff")),
        })
    }

    pub fn parse(text: &str, dim: usize) -> Result<Coef> {
        Coef::from_expr(&Expr::parse(text)?, dim)
    }

    /// Expression with the same values (trigonometric pairs are folded
    /// back into `sin`/`cos`).
    pub fn to_expr(&self) -> Expr {
        Expr::parse(&self.to_string()).expect("ring display is parseable")
    }
}

/// Returns `k` when `c = sum_j k_j x_j` with integer `k_j`.
fn integer_linear_form(c: &Coef) -> Option<Vec<i64>> {
    let mut k = vec![0i64; c.dim];
    for (m, v) in &c.terms {
        if m.freq.iter().any(|&f| f != 0) || m.pow.iter().sum::<u32>() != 1 {
            return None;
        }
        if !v.im.is_zero() || !v.re.is_integer() {
            return None;
        }
        let j = m.pow.iter().position(|&p| p == 1)?;
        k[j] = v.re.to_integer().to_i64()?;
    }
    Some(k)
}

fn format_linear_form(k: &[i64]) -> String {
    let mut s = String::new();
    for (j, &kj) in k.iter().enumerate() {
        if kj == 0 {
            continue;
        }
        let var = format!("x{}", j + 1);
        let term = match kj.abs() {
            1 => var,
            a => format!("{a}*{var}"),
        };
        if s.is_empty() {
            if kj < 0 {
                s.push('-');
            }
        } else {
            s.push_str(if kj < 0 { " - " } else { " + " });
        }
        s.push_str(&term);
    }
    s
}

fn canonical_sign(k: &[i64]) -> bool {
    k.iter().find(|&&v| v != 0).is_none_or(|&v| v > 0)
}

impl fmt::Display for Coef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // group by polynomial part, fold +-k pairs into cos/sin
        let mut groups: BTreeMap<Vec<u32>, BTreeMap<Vec<i64>, Exact>> = BTreeMap::new();
        for (m, c) in &self.terms {
            groups.entry(m.pow.clone()).or_default().insert(m.freq.clone(), c.clone());
        }
        let mut pieces: Vec<String> = Vec::new();
        for (pow, modes) in &groups {
            let poly: Vec<String> = pow
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0)
                .map(|(j, &p)| if p == 1 { format!("x{}", j + 1) } else { format!("x{}^{p}", j + 1) })
                .collect();
            let mut seen = std::collections::BTreeSet::new();
            for (k, c) in modes {
                if seen.contains(k) {
                    continue;
                }
                let neg: Vec<i64> = k.iter().map(|v| -v).collect();
                let mut push = |coeff: Exact, func: Option<String>| {
                    if coeff.is_zero() {
                        return;
                    }
                    let mut factors = vec![];
                    if !coeff.is_one() || (poly.is_empty() && func.is_none()) {
                        factors.push(format_exact(&coeff));
                    }
                    factors.extend(poly.iter().cloned());
                    factors.extend(func);
                    pieces.push(factors.join("*"));
                };
                if k.iter().all(|&v| v == 0) {
                    seen.insert(k.clone());
                    push(c.clone(), None);
                    continue;
                }
                let (kp, a, b) = if canonical_sign(k) {
                    (k.clone(), c.clone(), modes.get(&neg).cloned().unwrap_or_else(|| exact_int(0)))
                } else {
                    (neg.clone(), modes.get(&neg).cloned().unwrap_or_else(|| exact_int(0)), c.clone())
                };
                seen.insert(k.clone());
                seen.insert(neg.clone());
                let form = format_linear_form(&kp);
                // a e^{ik} + b e^{-ik} = (a+b) cos + i(a-b) sin
                let cos_c = &a + &b;
                let sin_c = exact_i() * (&a - &b);
                if (&a * &b).is_zero() && !(a.is_zero() && b.is_zero()) {
                    // a single exponential reads better as exp(i k.x)
                    let (coeff, sign) = if a.is_zero() { (b, "-") } else { (a, "") };
                    push(coeff, Some(format!("exp({sign}i*({form}))")));
                } else {
                    push(cos_c, Some(format!("cos({form})")));
                    push(sin_c, Some(format!("sin({form})")));
                }
            }
        }
        write!(f, "{}", pieces.join(" + "))
    }
}
