//! Closed-form expressions in base coordinates `x` and covector `xi`.
//!
//! Grammar: `+ - * / ^` (integer exponents), parentheses, decimal
//! literals, `i`, `pi`, coordinates `x1..xn` (aliases `x y z`), covector
//! components `xi1..xin` (alias `xi`), the norm `|xi|`, and the functions
//! `sin cos exp sqrt conj bump(inner, outer)`. `bump` is a radial
//! C-infinity cutoff of `|x|`: 1 inside `inner`, 0 beyond `outer`.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exact::{exact_int, exact_to_c64, format_exact, parse_decimal, Exact};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(Exact),
    Pi,
    X(usize),
    Xi(usize),
    XiNorm,
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Box<Expr>, i32),
    Sqrt(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Conj(Box<Expr>),
    Bump { inner: f64, outer: f64 },
}

/// Degree of positive homogeneity in `xi`, counted in halves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degree {
    /// The literal zero, homogeneous of every degree.
    Any,
    Halves(i32),
}

impl Degree {
    pub fn integer(self) -> Option<i32> {
        match self {
            Degree::Any => None,
            Degree::Halves(h) if h % 2 == 0 => Some(h / 2),
            Degree::Halves(_) => None,
        }
    }
}

/// C-infinity step: 0 for t <= 0, 1 for t >= 1.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Radial cutoff equal to 1 for `r <= inner` and 0 for `r >= outer`.
pub fn radial_bump(r: f64, inner: f64, outer: f64) -> f64 {
    smooth_step((outer - r) / (outer - inner))
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Const(exact_int(n))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn imag() -> Expr {
        Expr::Const(crate::exact::exact_i())
    }

    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_zero())
    }

    pub fn is_one_literal(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_one())
    }

    pub fn add(terms: Vec<Expr>) -> Expr {
        Expr::Add(terms)
    }

    pub fn mul(factors: Vec<Expr>) -> Expr {
        Expr::Mul(factors)
    }

    pub fn negate(e: Expr) -> Expr {
        Expr::Mul(vec![Expr::int(-1), e])
    }

    pub fn pow(e: Expr, n: i32) -> Expr {
        Expr::Pow(Box::new(e), n)
    }

    pub fn sqrt(e: Expr) -> Expr {
        Expr::Sqrt(Box::new(e))
    }

    pub fn conj(e: Expr) -> Expr {
        Expr::Conj(Box::new(e))
    }

    pub fn parse(text: &str) -> Result<Expr> {
        let mut p = Parser::new(text)?;
        let e = p.expr()?;
        if p.pos < p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Add(v) | Expr::Mul(v) => v.iter().collect(),
            Expr::Pow(b, _) | Expr::Sqrt(b) | Expr::Sin(b) | Expr::Cos(b) | Expr::Exp(b) | Expr::Conj(b) => vec![b.as_ref()],
            _ => vec![],
        }
    }

    /// Number of base coordinates referenced (largest index + 1).
    pub fn x_extent(&self) -> usize {
        match self {
            Expr::X(j) => j + 1,
            // bump reads |x| and adapts to any dimension
            _ => self.children().iter().map(|c| c.x_extent()).max().unwrap_or(0),
        }
    }

    pub fn xi_extent(&self) -> usize {
        match self {
            Expr::Xi(j) => j + 1,
            _ => self.children().iter().map(|c| c.xi_extent()).max().unwrap_or(0),
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            Expr::X(_) | Expr::Bump { .. } => true,
            _ => self.children().iter().any(|c| c.depends_on_x()),
        }
    }

    pub fn depends_on_xi(&self) -> bool {
        match self {
            Expr::Xi(_) | Expr::XiNorm => true,
            _ => self.children().iter().any(|c| c.depends_on_xi()),
        }
    }

    /// Structural homogeneity degree in `xi`; errors if the expression is
    /// not visibly positively homogeneous.
    pub fn xi_degree(&self) -> Result<Degree> {
        let inhomogeneous = || Error::input(format!("expression `{self}` is not homogeneous in xi"));
        Ok(match self {
            Expr::Const(c) if c.is_zero() => Degree::Any,
            Expr::Const(_) | Expr::Pi | Expr::X(_) | Expr::Bump { .. } => Degree::Halves(0),
            Expr::Xi(_) | Expr::XiNorm => Degree::Halves(2),
            Expr::Add(v) => {
                let mut d = Degree::Any;
                for c in v {
                    match (d, c.xi_degree()?) {
                        (_, Degree::Any) => {}
                        (Degree::Any, k) => d = k,
                        (a, b) if a == b => {}
                        _ => return Err(inhomogeneous()),
                    }
                }
                d
            }
            Expr::Mul(v) => {
                let mut total = 0;
                for c in v {
                    match c.xi_degree()? {
                        Degree::Any => return Ok(Degree::Any),
                        Degree::Halves(h) => total += h,
                    }
                }
                Degree::Halves(total)
            }
            Expr::Pow(b, n) => match b.xi_degree()? {
                Degree::Any if *n > 0 => Degree::Any,
                Degree::Any => Degree::Halves(0),
                Degree::Halves(h) => Degree::Halves(h * n),
            },
            Expr::Sqrt(b) => match b.xi_degree()? {
                Degree::Any => Degree::Any,
                Degree::Halves(h) if h % 2 == 0 => Degree::Halves(h / 2),
                Degree::Halves(_) => return Err(inhomogeneous()),
            },
            Expr::Conj(b) => b.xi_degree()?,
            Expr::Sin(b) | Expr::Cos(b) | Expr::Exp(b) => match b.xi_degree()? {
                Degree::Any | Degree::Halves(0) => Degree::Halves(0),
                _ => return Err(inhomogeneous()),
            },
        })
    }

    /// Canonical expanded form: flattened sums of products with sorted
    /// atoms and collected exact coefficients.
    pub fn canonical(&self) -> Expr {
        Nf::from_expr(self).to_expr()
    }

    pub fn compile(&self) -> Compiled {
        Compiled(self.compile_node())
    }

    fn compile_node(&self) -> Node {
        let rec = |e: &Expr| Box::new(e.compile_node());
        match self {
            Expr::Const(c) => Node::Const(exact_to_c64(c)),
            Expr::Pi => Node::Const(Complex64::new(std::f64::consts::PI, 0.0)),
            Expr::X(j) => Node::X(*j),
            Expr::Xi(j) => Node::Xi(*j),
            Expr::XiNorm => Node::XiNorm,
            Expr::Add(v) => Node::Add(v.iter().map(Expr::compile_node).collect()),
            Expr::Mul(v) => Node::Mul(v.iter().map(Expr::compile_node).collect()),
            Expr::Pow(b, n) => Node::Pow(rec(b), *n),
            Expr::Sqrt(b) => Node::Sqrt(rec(b)),
            Expr::Sin(b) => Node::Sin(rec(b)),
            Expr::Cos(b) => Node::Cos(rec(b)),
            Expr::Exp(b) => Node::Exp(rec(b)),
            Expr::Conj(b) => Node::Conj(rec(b)),
            Expr::Bump { inner, outer } => Node::Bump(*inner, *outer),
        }
    }

    /// Convenience evaluation (compiles on every call).
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        self.compile().eval(x, xi)
    }
}

/// Float-only evaluation tree.
#[derive(Clone, Debug)]
pub struct Compiled(Node);

#[derive(Clone, Debug)]
enum Node {
    Const(Complex64),
    X(usize),
    Xi(usize),
    XiNorm,
    Add(Vec<Node>),
    Mul(Vec<Node>),
    Pow(Box<Node>, i32),
    Sqrt(Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
    Conj(Box<Node>),
    Bump(f64, f64),
}

/// Reciprocal that sends a real zero to +infinity instead of NaN.
fn recip(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        Complex64::new(1.0 / z.re, 0.0)
    } else {
        z.inv()
    }
}

fn powi(z: Complex64, n: i32) -> Complex64 {
    if n >= 0 {
        z.powi(n)
    } else if z.im == 0.0 {
        Complex64::new(z.re.powi(n), 0.0)
    } else {
        recip(z.powi(-n))
    }
}

impl Compiled {
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.eval_with_norm(x, xi, norm)
    }

    pub fn eval_with_norm(&self, x: &[f64], xi: &[f64], xi_norm: f64) -> Complex64 {
        let ctx = Ctx { x, xi, xi_norm };
        ctx.eval(&self.0)
    }
}

struct Ctx<'a> {
    x: &'a [f64],
    xi: &'a [f64],
    xi_norm: f64,
}

impl Ctx<'_> {
    fn eval(&self, n: &Node) -> Complex64 {
        let re = |v: f64| Complex64::new(v, 0.0);
        match n {
            Node::Const(c) => *c,
            Node::X(j) => re(self.x.get(*j).copied().unwrap_or(0.0)),
            Node::Xi(j) => re(self.xi.get(*j).copied().unwrap_or(0.0)),
            Node::XiNorm => re(self.xi_norm),
            Node::Add(v) => v.iter().map(|c| self.eval(c)).sum(),
            Node::Mul(v) => {
                let mut acc = Complex64::new(1.0, 0.0);
                for c in v {
                    acc *= self.eval(c);
                }
                acc
            }
            Node::Pow(b, k) => powi(self.eval(b), *k),
            Node::Sqrt(b) => {
                let z = self.eval(b);
                if z.im == 0.0 && z.re >= 0.0 {
                    re(z.re.sqrt())
                } else {
                    z.sqrt()
                }
            }
            Node::Sin(b) => self.eval(b).sin(),
            Node::Cos(b) => self.eval(b).cos(),
            Node::Exp(b) => {
                let z = self.eval(b);
                if z.re == f64::NEG_INFINITY {
                    Complex64::new(0.0, 0.0)
                } else {
                    z.exp()
                }
            }
            Node::Conj(b) => self.eval(b).conj(),
            Node::Bump(inner, outer) => {
                let r = self.x.iter().map(|v| v * v).sum::<f64>().sqrt();
                re(radial_bump(r, *inner, *outer))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// canonical form

type Monomial = Vec<(String, i32)>;

#[derive(Clone, Debug, Default)]
struct Nf {
    terms: BTreeMap<Monomial, Exact>,
    atoms: BTreeMap<String, Expr>,
}

impl Nf {
    fn constant(c: Exact) -> Nf {
        let mut nf = Nf::default();
        if !c.is_zero() {
            nf.terms.insert(Vec::new(), c);
        }
        nf
    }

    fn atom(e: Expr) -> Nf {
        let key = e.to_string();
        let mut nf = Nf::default();
        nf.terms.insert(vec![(key.clone(), 1)], exact_int(1));
        nf.atoms.insert(key, e);
        nf
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_assign(&mut self, other: Nf) {
        self.atoms.extend(other.atoms);
        for (m, c) in other.terms {
            let entry = self.terms.entry(m.clone()).or_insert_with(|| exact_int(0));
            *entry = &*entry + &c;
            if entry.is_zero() {
                self.terms.remove(&m);
            }
        }
    }

    fn mul(&self, other: &Nf) -> Nf {
        let mut out = Nf {
            atoms: self.atoms.clone(),
            ..Nf::default()
        };
        out.atoms.extend(other.atoms.clone());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m = merge_monomials(ma, mb);
                let c = ca * cb;
                let entry = out.terms.entry(m.clone()).or_insert_with(|| exact_int(0));
                *entry = &*entry + &c;
                if entry.is_zero() {
                    out.terms.remove(&m);
                }
            }
        }
        out
    }

    fn powi(&self, n: u32) -> Nf {
        let mut acc = Nf::constant(exact_int(1));
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    fn from_expr(e: &Expr) -> Nf {
        match e {
            Expr::Const(c) => Nf::constant(c.clone()),
            Expr::Pi | Expr::X(_) | Expr::Xi(_) | Expr::XiNorm | Expr::Bump { .. } => Nf::atom(e.clone()),
            Expr::Add(v) => {
                let mut acc = Nf::default();
                for c in v {
                    acc.add_assign(Nf::from_expr(c));
                }
                acc
            }
            Expr::Mul(v) => {
                let mut acc = Nf::constant(exact_int(1));
                for c in v {
                    acc = acc.mul(&Nf::from_expr(c));
                    if acc.is_zero() {
                        break;
                    }
                }
                acc
            }
            Expr::Pow(b, n) => {
                let base = Nf::from_expr(b);
                if *n >= 0 {
                    return base.powi(*n as u32);
                }
                if base.terms.len() == 1 {
                    let (m, c) = base.terms.iter().next().unwrap();
                    let inv = exact_int(1) / c;
                    let mut out = Nf {
                        atoms: base.atoms.clone(),
                        ..Nf::default()
                    };
                    let m: Monomial = m.iter().map(|(k, p)| (k.clone(), p * n)).collect();
                    let mut coeff = exact_int(1);
                    for _ in 0..(-n) {
                        coeff = &coeff * &inv;
                    }
                    out.terms.insert(m, coeff);
                    return out;
                }
                // sums (and zero) become a reciprocal atom
                let recip = Nf::atom(Expr::Pow(Box::new(base.to_expr()), -1));
                recip.powi((-n) as u32)
            }
            Expr::Sqrt(b) => {
                let inner = Nf::from_expr(b);
                if inner.is_zero() {
                    return Nf::default();
                }
                Nf::atom(Expr::Sqrt(Box::new(inner.to_expr())))
            }
            Expr::Sin(b) => {
                let inner = Nf::from_expr(b);
                if inner.is_zero() {
                    return Nf::default();
                }
                Nf::atom(Expr::Sin(Box::new(inner.to_expr())))
            }
            Expr::Cos(b) => {
                let inner = Nf::from_expr(b);
                if inner.is_zero() {
                    return Nf::constant(exact_int(1));
                }
                Nf::atom(Expr::Cos(Box::new(inner.to_expr())))
            }
            Expr::Exp(b) => {
                let inner = Nf::from_expr(b);
                if inner.is_zero() {
                    return Nf::constant(exact_int(1));
                }
                Nf::atom(Expr::Exp(Box::new(inner.to_expr())))
            }
            Expr::Conj(b) => Nf::from_expr(b).conj(),
        }
    }

    fn conj(&self) -> Nf {
        let mut out = Nf::constant(exact_int(0));
        for (m, c) in &self.terms {
            let mut term = Nf::constant(c.conj());
            for (key, p) in m {
                let atom = conj_atom(&self.atoms[key]);
                let f = Nf::from_expr(&atom);
                let f = if *p >= 0 {
                    f.powi(*p as u32)
                } else {
                    Nf::from_expr(&Expr::Pow(Box::new(f.to_expr()), *p))
                };
                term = term.mul(&f);
            }
            out.add_assign(term);
        }
        out
    }

    fn to_expr(&self) -> Expr {
        if self.terms.is_empty() {
            return Expr::zero();
        }
        let mut summands: Vec<Expr> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut factors = Vec::new();
                if m.is_empty() || !c.is_one() {
                    factors.push(Expr::Const(c.clone()));
                }
                for (key, p) in m {
                    let a = self.atoms[key].clone();
                    factors.push(if *p == 1 { a } else { Expr::Pow(Box::new(a), *p) });
                }
                if factors.len() == 1 {
                    factors.pop().unwrap()
                } else {
                    Expr::Mul(factors)
                }
            })
            .collect();
        if summands.len() == 1 {
            summands.pop().unwrap()
        } else {
            Expr::Add(summands)
        }
    }
}

fn merge_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut map: BTreeMap<String, i32> = BTreeMap::new();
    for (k, p) in a.iter().chain(b) {
        *map.entry(k.clone()).or_insert(0) += p;
    }
    map.into_iter().filter(|(_, p)| *p != 0).collect()
}

fn conj_atom(e: &Expr) -> Expr {
    let c = |b: &Expr| Box::new(Expr::Conj(Box::new(b.clone())).canonical());
    match e {
        Expr::Pow(b, n) => Expr::Pow(c(b), *n),
        Expr::Sqrt(b) => Expr::Sqrt(c(b)),
        Expr::Sin(b) => Expr::Sin(c(b)),
        Expr::Cos(b) => Expr::Cos(c(b)),
        Expr::Exp(b) => Expr::Exp(c(b)),
        // coordinates, norms, pi and bumps are real
        other => other.clone(),
    }
}

// ---------------------------------------------------------------------------
// display / serde

fn needs_parens(e: &Expr) -> bool {
    matches!(e, Expr::Add(_) | Expr::Mul(_) | Expr::Pow(..))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{}", format_exact(c)),
            Expr::Pi => write!(f, "pi"),
            Expr::X(j) => write!(f, "x{}", j + 1),
            Expr::Xi(j) => write!(f, "xi{}", j + 1),
            Expr::XiNorm => write!(f, "|xi|"),
            Expr::Add(v) => {
                write!(f, "(")?;
                for (k, c) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
            Expr::Mul(v) => {
                for (k, c) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, "*")?;
                    }
                    if matches!(c, Expr::Mul(_)) {
                        write!(f, "({c})")?;
                    } else {
                        write!(f, "{c}")?;
                    }
                }
                Ok(())
            }
            Expr::Pow(b, n) => {
                if needs_parens(b) && !matches!(**b, Expr::Add(_)) {
                    write!(f, "({b})")?;
                } else {
                    write!(f, "{b}")?;
                }
                if *n < 0 {
                    write!(f, "^({n})")
                } else {
                    write!(f, "^{n}")
                }
            }
            Expr::Sqrt(b) => write!(f, "sqrt({b})"),
            Expr::Sin(b) => write!(f, "sin({b})"),
            Expr::Cos(b) => write!(f, "cos({b})"),
            Expr::Exp(b) => write!(f, "exp({b})"),
            Expr::Conj(b) => write!(f, "conj({b})"),
            Expr::Bump { inner, outer } => write!(f, "bump({inner:?}, {outer:?})"),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Expr::parse(&text).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// parser

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Norm,
    Op(char),
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    len: usize,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '-' || chars[j] == '+') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push((Tok::Num(chars[start..i].iter().collect()), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if c == '|' {
            let rest: String = chars[i..].iter().take(4).collect();
            if rest == "|xi|" {
                out.push((Tok::Norm, col));
                i += 4;
            } else {
                return Err(Error::Parse {
                    column: col,
                    message: "only `|xi|` is supported between bars".into(),
                });
            }
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Op(c), col));
            i += 1;
        } else {
            return Err(Error::Parse {
                column: col,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

fn variable(name: &str) -> Option<Expr> {
    match name {
        "x" => return Some(Expr::X(0)),
        "y" => return Some(Expr::X(1)),
        "z" => return Some(Expr::X(2)),
        "xi" => return Some(Expr::Xi(0)),
        "pi" => return Some(Expr::Pi),
        "i" => return Some(Expr::imag()),
        _ => {}
    }
    let index = |prefix: &str| -> Option<usize> {
        let rest = name.strip_prefix(prefix)?;
        let k: usize = rest.parse().ok()?;
        (k >= 1).then_some(k - 1)
    };
    if let Some(k) = index("xi") {
        return Some(Expr::Xi(k));
    }
    index("x").map(Expr::X)
}

impl Parser {
    fn new(text: &str) -> Result<Parser> {
        Ok(Parser {
            tokens: tokenize(text)?,
            pos: 0,
            len: text.chars().count(),
        })
    }

    fn error(&self, message: &str) -> Error {
        let column = self.tokens.get(self.pos).map(|t| t.1).unwrap_or(self.len + 1);
        Error::Parse {
            column,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: char) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat_op('+') {
                terms.push(self.term()?);
            } else if self.eat_op('-') {
                terms.push(Expr::negate(self.term()?));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Add(terms) })
    }

    fn term(&mut self) -> Result<Expr> {
        let mut factors = vec![self.unary()?];
        loop {
            if self.eat_op('*') {
                factors.push(self.unary()?);
            } else if self.eat_op('/') {
                factors.push(Expr::pow(self.unary()?, -1));
            } else {
                break;
            }
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            Expr::Mul(factors)
        })
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            return Ok(match self.unary()? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::negate(e),
            });
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat_op('^') {
            let n = self.integer_exponent()?;
            return Ok(Expr::pow(base, n));
        }
        Ok(base)
    }

    fn integer_exponent(&mut self) -> Result<i32> {
        let paren = self.eat_op('(');
        let neg = self.eat_op('-');
        let n = match self.peek().cloned() {
            Some(Tok::Num(s)) => {
                self.pos += 1;
                s.parse::<i32>().map_err(|_| self.error("exponent must be an integer"))?
            }
            _ => return Err(self.error("expected integer exponent")),
        };
        if paren {
            self.expect_op(')')?;
        }
        Ok(if neg { -n } else { n })
    }

    fn number_arg(&mut self) -> Result<f64> {
        let neg = self.eat_op('-');
        match self.peek().cloned() {
            Some(Tok::Num(s)) => {
                self.pos += 1;
                let v: f64 = s.parse().map_err(|_| self.error("bad number"))?;
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.error("expected numeric argument")),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error("unexpected end of expression"));
        };
        match tok {
            Tok::Num(s) => {
                let r = parse_decimal(&s).ok_or_else(|| self.error("malformed number"))?;
                self.pos += 1;
                Ok(Expr::Const(crate::exact::exact_real(r)))
            }
            Tok::Norm => {
                self.pos += 1;
                Ok(Expr::XiNorm)
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let column = self.tokens[self.pos].1;
                let unknown = |what: &str| Error::Parse {
                    column,
                    message: format!("unknown {what} `{name}`"),
                };
                self.pos += 1;
                if self.peek() == Some(&Tok::Op('(')) {
                    self.pos += 1;
                    if name == "bump" {
                        let inner = self.number_arg()?;
                        self.expect_op(',')?;
                        let outer = self.number_arg()?;
                        self.expect_op(')')?;
                        if !(inner >= 0.0 && outer > inner) {
                            return Err(self.error("bump needs 0 <= inner < outer"));
                        }
                        return Ok(Expr::Bump { inner, outer });
                    }
                    let arg = Box::new(self.expr()?);
                    self.expect_op(')')?;
                    return match name.as_str() {
                        "sin" => Ok(Expr::Sin(arg)),
                        "cos" => Ok(Expr::Cos(arg)),
                        "exp" => Ok(Expr::Exp(arg)),
                        "sqrt" => Ok(Expr::Sqrt(arg)),
                        "conj" => Ok(Expr::Conj(arg)),
                        _ => Err(unknown("function")),
                    };
                }
                variable(&name).ok_or_else(|| unknown("identifier"))
            }
            Tok::Op(c) => Err(self.error(&format!("unexpected `{c}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("(2 + sin(x))*i*xi").unwrap();
        let v = e.eval(&[std::f64::consts::FRAC_PI_2], &[1.0]);
        assert!((v - c(0.0, 3.0)).norm() < 1e-15);
        let e = Expr::parse("-x^2 + 1/2").unwrap();
        assert!((e.eval(&[2.0], &[]) - c(-3.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn reports_error_column() {
        match Expr::parse("1 + foo(x)") {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 5),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("x^1.5").is_err());
        assert!(Expr::parse("(x").is_err());
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "(2 + cos(x1))*xi1^2",
            "exp(-(x1*xi1/|xi|)^(-2))",
            "(1 + |xi|^2)^(-1)*(3/4)",
            "bump(1, 2.5)*x2 - i*xi2",
        ] {
            let e = Expr::parse(text).unwrap();
            let again = Expr::parse(&e.to_string()).unwrap();
            assert_eq!(e, again, "{text}");
        }
    }

    #[test]
    fn homogeneity_degrees() {
        let d = |t: &str| Expr::parse(t).unwrap().xi_degree().unwrap();
        assert_eq!(d("xi1^2 + xi2^2"), Degree::Halves(4));
        assert_eq!(d("sqrt(xi^2)"), Degree::Halves(2));
        assert_eq!(d("x1*xi1/|xi|"), Degree::Halves(0));
        assert_eq!(d("0"), Degree::Any);
        assert!(Expr::parse("1 + xi").unwrap().xi_degree().is_err());
        assert!(Expr::parse("sin(xi)").unwrap().xi_degree().is_err());
    }

    #[test]
    fn canonical_form_collects_and_distributes() {
        let a = Expr::parse("(i*xi + 1)*(i*xi)").unwrap().canonical();
        let b = Expr::parse("i*xi - xi^2").unwrap().canonical();
        assert_eq!(a, b);
        let z = Expr::parse("x*(z*xi2 - y*xi3) + y*(x*xi3 - z*xi1) + z*(y*xi1 - x*xi2)")
            .unwrap()
            .canonical();
        assert!(z.is_zero_literal());
        let conj = Expr::parse("conj(i*(2+cos(x))*xi)").unwrap().canonical();
        let neg = Expr::parse("-i*(2+cos(x))*xi").unwrap().canonical();
        assert_eq!(conj, neg);
    }

    #[test]
    fn reciprocal_of_zero_flows_to_zero_exponential() {
        let e = Expr::parse("exp(-(x1*xi1/|xi|)^(-2))").unwrap();
        assert_eq!(e.eval(&[0.0], &[1.0]), c(0.0, 0.0));
        let v = e.eval(&[1.0], &[1.0]);
        assert!((v.re - (-1.0f64).exp()).abs() < 1e-15);
    }
}
