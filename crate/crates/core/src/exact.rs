//! Exact Gaussian-rational scalars and a small row-reduction toolkit that
//! works both over them and over floating complex numbers.

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Element of Q(i).
pub type Exact = Complex<BigRational>;

pub fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn exact_int(n: i64) -> Exact {
    Complex::new(rational(n, 1), BigRational::zero())
}

pub fn exact_real(r: BigRational) -> Exact {
    Complex::new(r, BigRational::zero())
}

pub fn exact_i() -> Exact {
    Complex::new(BigRational::zero(), BigRational::one())
}

/// Exact binary value of a finite float.
pub fn exact_from_f64(v: f64) -> Option<BigRational> {
    BigRational::from_float(v)
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn exact_to_c64(z: &Exact) -> Complex64 {
    Complex64::new(rational_to_f64(&z.re), rational_to_f64(&z.im))
}

/// Parses a decimal literal such as `12`, `0.25` or `1.5e-3` exactly.
pub fn parse_decimal(text: &str) -> Option<BigRational> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let numer: BigInt = digits.parse().ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let r = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(r)
}

pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        if r.is_negative() {
            format!("({})", r.numer())
        } else {
            format!("{}", r.numer())
        }
    } else {
        format!("({}/{})", r.numer(), r.denom())
    }
}

pub fn format_exact(z: &Exact) -> String {
    match (z.re.is_zero(), z.im.is_zero()) {
        (_, true) => format_rational(&z.re),
        (true, false) if z.im.is_one() => "i".to_string(),
        (true, false) => format!("({}*i)", format_rational(&z.im)),
        (false, false) => format!("({}+{}*i)", format_rational(&z.re), format_rational(&z.im)),
    }
}

/// Scalar field used by the row reduction.
pub trait Field: Clone + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    /// Size used for pivot selection.
    fn magnitude(&self) -> f64;
    /// Zero test; `scale` is the largest magnitude in the system.
    fn is_negligible(&self, scale: f64) -> bool;
}

impl Field for Exact {
    fn zero() -> Self {
        Complex::new(BigRational::zero(), BigRational::zero())
    }
    fn one() -> Self {
        exact_int(1)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn magnitude(&self) -> f64 {
        exact_to_c64(self).norm()
    }
    fn is_negligible(&self, _scale: f64) -> bool {
        self.is_zero()
    }
}

/// Relative tolerance for rank decisions in floating arithmetic.
pub const FLOAT_RANK_TOL: f64 = 1e-9;

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn is_negligible(&self, scale: f64) -> bool {
        self.norm() <= FLOAT_RANK_TOL * scale.max(f64::MIN_POSITIVE)
    }
}

/// Reduced row echelon form of a dense matrix given as rows.
#[derive(Debug, Clone)]
pub struct Rref<F: Field> {
    pub rows: Vec<Vec<F>>,
    pub pivots: Vec<usize>,
    pub cols: usize,
}

pub fn rref<F: Field>(mut rows: Vec<Vec<F>>, cols: usize) -> Rref<F> {
    let scale = rows.iter().flat_map(|r| r.iter().map(Field::magnitude)).fold(0.0, f64::max);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows.len() {
            break;
        }
        // partial pivoting; exact entries just need a nonzero one
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in rows.iter().enumerate().skip(r) {
            if row[c].is_negligible(scale) {
                continue;
            }
            let m = row[c].magnitude();
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((i, m));
            }
        }
        let Some((p, _)) = best else { continue };
        rows.swap(r, p);
        let inv = F::one().div(&rows[r][c]);
        for v in rows[r].iter_mut() {
            *v = v.mul(&inv);
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c].is_negligible(scale) {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v = v.sub(&f.mul(pv));
            }
            row[c] = F::zero();
        }
        pivots.push(c);
        r += 1;
    }
    rows.truncate(r);
    Rref { rows, pivots, cols }
}

impl<F: Field> Rref<F> {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Basis of the null space, one vector per free column.
    pub fn kernel(&self) -> Vec<Vec<F>> {
        let free: Vec<usize> = (0..self.cols).filter(|c| !self.pivots.contains(c)).collect();
        free.iter()
            .map(|&f| {
                let mut v = vec![F::zero(); self.cols];
                v[f] = F::one();
                for (row, &p) in self.rows.iter().zip(&self.pivots) {
                    v[p] = F::zero().sub(&row[f]);
                }
                v
            })
            .collect()
    }
}

/// Solves `A u = b` with free variables set to zero. `None` if inconsistent.
pub fn solve<F: Field>(a_rows: &[Vec<F>], b: &[F], cols: usize) -> Option<Vec<F>> {
    let augmented: Vec<Vec<F>> = a_rows
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let red = rref(augmented, cols + 1);
    if red.pivots.contains(&cols) {
        return None;
    }
    let mut u = vec![F::zero(); cols];
    for (row, &p) in red.rows.iter().zip(&red.pivots) {
        u[p] = row[cols].clone();
    }
    Some(u)
}
