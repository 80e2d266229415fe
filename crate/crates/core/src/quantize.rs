//! Quantization `Op(a) f(x) = sum_xi a(x, xi) f^(xi) e^{i<x, xi>}` on the
//! periodic grid, a dense matrix oracle, principal-symbol recovery and
//! numerical order estimates.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dense;
use crate::error::{Error, Result};
use crate::expr::radial_bump;
use crate::polysym::{loglog_slope, Symbol};

/// Default row cap for materialized operators.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Norms below this are treated as exact zeros by `estimate_order`.
pub const ORDER_NORM_FLOOR: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Uniform grid on `[origin, origin + 2 pi)^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicGrid {
    dim: usize,
    points: usize,
    origin: f64,
}

impl PeriodicGrid {
    pub fn new(dim: usize, points: usize) -> Result<PeriodicGrid> {
        if dim == 0 {
            return Err(Error::input("grid dimension must be positive"));
        }
        if points < 4 || !points.is_multiple_of(2) {
            return Err(Error::input(format!("points per axis must be even and at least 4, got {points}")));
        }
        Ok(PeriodicGrid { dim, points, origin: 0.0 })
    }

    pub fn with_origin(mut self, origin: f64) -> PeriodicGrid {
        self.origin = origin;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Total number of grid points `G^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.points as f64
    }

    /// Quadrature weight `(2 pi / G)^n`.
    pub fn weight(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn nyquist(&self) -> i64 {
        (self.points / 2) as i64
    }

    /// Axis 0 varies slowest.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.points;
            flat /= self.points;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points + i)
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|i| self.origin + i as f64 * self.spacing())
            .collect()
    }

    /// Integer frequency stored at FFT slot `j`, in `[-G/2, G/2)`.
    pub fn freq_of(&self, j: usize) -> i64 {
        let g = self.points as i64;
        let j = j as i64;
        if j < g / 2 {
            j
        } else {
            j - g
        }
    }

    pub fn frequency(&self, flat: usize) -> Vec<i64> {
        self.multi_index(flat).into_iter().map(|j| self.freq_of(j)).collect()
    }

    pub fn freq_index(&self, k: &[i64]) -> Result<usize> {
        if k.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: k.len(),
            });
        }
        let n = self.nyquist();
        let mut idx = Vec::with_capacity(self.dim);
        for &kj in k {
            if kj < -n || kj >= n {
                return Err(Error::Aliasing {
                    frequency: kj,
                    points: self.points,
                });
            }
            idx.push(kj.rem_euclid(self.points as i64) as usize);
        }
        Ok(self.flat_index(&idx))
    }

    /// Grid point at `x`, which must coincide with a node.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut idx = Vec::with_capacity(self.dim);
        for &xj in x {
            let s = (xj - self.origin) / self.spacing();
            let r = s.round();
            if (s - r).abs() > 1e-9 {
                return Err(Error::input(format!("{xj} is not a grid node")));
            }
            idx.push((r as i64).rem_euclid(self.points as i64) as usize);
        }
        Ok(self.flat_index(&idx))
    }

    fn check_symbol(&self, a: &dyn Symbol) -> Result<()> {
        for found in [a.x_dim(), a.xi_dim()] {
            if found != self.dim {
                return Err(Error::Dimension { expected: self.dim, found });
            }
        }
        Ok(())
    }

    /// `e^{2 pi i j / G}` for `j` in `0..G`.
    fn roots(&self) -> Vec<Complex64> {
        (0..self.points)
            .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / self.points as f64))
            .collect()
    }

    /// `e^{i <k, p h>}` for integer frequency `k` and node multi-index `p`.
    fn phase(&self, roots: &[Complex64], k: &[i64], p: &[usize]) -> Complex64 {
        let g = self.points as i64;
        let mut s = 0i64;
        for (kj, pj) in k.iter().zip(p) {
            s += kj * *pj as i64;
        }
        roots[s.rem_euclid(g) as usize]
    }
}

/// Complex samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(values: Vec<Complex64>) -> GridFunction {
        GridFunction { values }
    }

    pub fn zeros(grid: &PeriodicGrid) -> GridFunction {
        GridFunction {
            values: vec![ZERO; grid.len()],
        }
    }

    pub fn from_fn(grid: &PeriodicGrid, f: impl Fn(&[f64]) -> Complex64) -> GridFunction {
        GridFunction {
            values: (0..grid.len()).map(|p| f(&grid.coords(p))).collect(),
        }
    }

    /// `e^{i <k, x>}`.
    pub fn plane_wave(grid: &PeriodicGrid, k: &[i64]) -> GridFunction {
        GridFunction::from_fn(grid, |x| {
            let t: f64 = k.iter().zip(x).map(|(kj, xj)| *kj as f64 * xj).sum();
            Complex64::from_polar(1.0, t)
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `sqrt((2 pi / G)^n sum |f|^2)`.
    pub fn l2_norm(&self, grid: &PeriodicGrid) -> f64 {
        (grid.weight() * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// `<f, g> = (2 pi / G)^n sum conj(f) g`.
    pub fn inner(&self, other: &GridFunction, grid: &PeriodicGrid) -> Complex64 {
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        s * grid.weight()
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        GridFunction {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn to_text(&self, grid: &PeriodicGrid) -> String {
        let mut out = format!("gridfunction dim={} points={} origin={}\n", grid.dim, grid.points, grid.origin);
        for z in &self.values {
            let _ = writeln!(out, "{} {}", z.re, z.im);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<(PeriodicGrid, GridFunction)> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::input("empty grid function"))?;
        let (grid, _) = parse_header(header, "gridfunction")?;
        let mut values = Vec::with_capacity(grid.len());
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let nums = parse_numbers(line)?;
            if nums.len() != 2 {
                return Err(Error::input(format!("expected `re im`, got `{line}`")));
            }
            values.push(Complex64::new(nums[0], nums[1]));
        }
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok((grid, GridFunction { values }))
    }
}

fn parse_numbers(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::input(format!("bad number `{t}`"))))
        .collect()
}

fn parse_header(line: &str, kind: &str) -> Result<(PeriodicGrid, Vec<(String, String)>)> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(kind) {
        return Err(Error::input(format!("expected a `{kind}` header")));
    }
    let fields: Vec<(String, String)> = parts
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::input(format!("bad header field `{p}`")))
        })
        .collect::<Result<_>>()?;
    let get = |name: &str| -> Result<&str> {
        fields
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::input(format!("header lacks `{name}`")))
    };
    let dim: usize = get("dim")?.parse().map_err(|_| Error::input("bad dim"))?;
    let points: usize = get("points")?.parse().map_err(|_| Error::input("bad points"))?;
    let origin: f64 = get("origin")?.parse().map_err(|_| Error::input("bad origin"))?;
    let grid = PeriodicGrid::new(dim, points)?.with_origin(origin);
    Ok((grid, fields))
}

/// In-place unnormalized n-dimensional DFT with kernel `e^{-i}` (forward)
/// or `e^{+i}` (inverse).
pub fn fft_nd(grid: &PeriodicGrid, data: &mut [Complex64], inverse: bool) {
    let g = grid.points;
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(g)
    } else {
        planner.plan_fft_forward(g)
    };
    let mut line = vec![ZERO; g];
    for axis in 0..grid.dim {
        let stride = g.pow((grid.dim - 1 - axis) as u32);
        let block = stride * g;
        for start in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}

/// Discrete Fourier coefficients normalized so that
/// `f(x_p) = sum c_k e^{i k (x_p - origin)}`.
pub fn fourier_coefficients(grid: &PeriodicGrid, f: &GridFunction) -> Vec<Complex64> {
    let mut c = f.values.clone();
    fft_nd(grid, &mut c, false);
    let scale = 1.0 / grid.len() as f64;
    for v in c.iter_mut() {
        *v *= scale;
    }
    c
}

/// Symbol value used at frequency `k`; at the Nyquist line it is averaged
/// over the sign flips of the Nyquist components.
pub fn multiplier(a: &dyn Symbol, grid: &PeriodicGrid, x: &[f64], k: &[i64]) -> Result<Complex64> {
    let n = grid.nyquist();
    let nyq: Vec<usize> = (0..k.len()).filter(|&j| k[j] == -n).collect();
    let mut xi: Vec<f64> = k.iter().map(|&v| v as f64).collect();
    let v = if nyq.is_empty() {
        a.value(x, &xi)
    } else {
        let mut acc = ZERO;
        let count = 1usize << nyq.len();
        for mask in 0..count {
            for (b, &j) in nyq.iter().enumerate() {
                xi[j] = if mask & (1 << b) != 0 { n as f64 } else { -(n as f64) };
            }
            acc += a.value(x, &xi);
        }
        acc / count as f64
    };
    if !v.re.is_finite() || !v.im.is_finite() {
        return Err(Error::input(format!("symbol is not finite at x={x:?}, xi={k:?}")));
    }
    Ok(v)
}

/// `Op(a) f` by one forward transform followed by per-point frequency sums.
pub fn apply_symbol(a: &dyn Symbol, f: &GridFunction, grid: &PeriodicGrid) -> Result<GridFunction> {
    grid.check_symbol(a)?;
    if f.len() != grid.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            found: f.len(),
        });
    }
    let c = fourier_coefficients(grid, f);
    let n = grid.len();
    let freqs: Vec<Vec<i64>> = (0..n).map(|q| grid.frequency(q)).collect();
    if !a.depends_on_x() {
        let x0 = grid.coords(0);
        let mut hat = c;
        for (q, v) in hat.iter_mut().enumerate() {
            *v *= multiplier(a, grid, &x0, &freqs[q])?;
        }
        fft_nd(grid, &mut hat, true);
        return Ok(GridFunction { values: hat });
    }
    let roots = grid.roots();
    let active: Vec<usize> = (0..n).filter(|&q| c[q] != ZERO).collect();
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let x = grid.coords(p);
        let pi = grid.multi_index(p);
        let mut acc = ZERO;
        for &q in &active {
            acc += multiplier(a, grid, &x, &freqs[q])? * c[q] * grid.phase(&roots, &freqs[q], &pi);
        }
        out.push(acc);
    }
    Ok(GridFunction { values: out })
}

/// Dense matrix of `Op(a)`, built row by row with one transform per row.
pub fn quantize_dense(a: &dyn Symbol, grid: &PeriodicGrid) -> Result<GridOperator> {
    quantize_dense_capped(a, grid, DEFAULT_DENSE_CAP)
}

pub fn quantize_dense_capped(a: &dyn Symbol, grid: &PeriodicGrid, cap: usize) -> Result<GridOperator> {
    grid.check_symbol(a)?;
    let n = grid.len();
    if n > cap {
        return Err(Error::DenseCap { rows: n, cap });
    }
    let roots = grid.roots();
    let freqs: Vec<Vec<i64>> = (0..n).map(|q| grid.frequency(q)).collect();
    let scale = 1.0 / n as f64;
    let mut m = DMatrix::from_element(n, n, ZERO);
    let constant: Option<Vec<Complex64>> = if a.depends_on_x() {
        None
    } else {
        let x0 = grid.coords(0);
        Some(freqs.iter().map(|k| multiplier(a, grid, &x0, k)).collect::<Result<_>>()?)
    };
    let mut row = vec![ZERO; n];
    for p in 0..n {
        let x = grid.coords(p);
        let pi = grid.multi_index(p);
        for (q, v) in row.iter_mut().enumerate() {
            let sym = match &constant {
                Some(c) => c[q],
                None => multiplier(a, grid, &x, &freqs[q])?,
            };
            *v = sym * grid.phase(&roots, &freqs[q], &pi) * scale;
        }
        fft_nd(grid, &mut row, false);
        for (q, v) in row.iter().enumerate() {
            m[(p, q)] = *v;
        }
    }
    Ok(GridOperator {
        grid: grid.clone(),
        matrix: m,
    })
}

/// Linear map on grid functions.
pub trait LinearOp {
    fn grid(&self) -> &PeriodicGrid;
    fn apply(&self, f: &GridFunction) -> Result<GridFunction>;
    /// Image of `e^{i <k, x>}`.
    fn apply_plane_wave(&self, k: &[i64]) -> Result<GridFunction> {
        self.grid().freq_index(k)?;
        self.apply(&GridFunction::plane_wave(self.grid(), k))
    }
}

/// Matrix-free `Op(a)`.
#[derive(Clone)]
pub struct SymbolOp {
    symbol: Arc<dyn Symbol>,
    grid: PeriodicGrid,
}

impl SymbolOp {
    pub fn new(symbol: Arc<dyn Symbol>, grid: PeriodicGrid) -> Result<SymbolOp> {
        grid.check_symbol(symbol.as_ref())?;
        Ok(SymbolOp { symbol, grid })
    }

    pub fn symbol(&self) -> &dyn Symbol {
        self.symbol.as_ref()
    }
}

impl LinearOp for SymbolOp {
    fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        apply_symbol(self.symbol.as_ref(), f, &self.grid)
    }

    fn apply_plane_wave(&self, k: &[i64]) -> Result<GridFunction> {
        self.grid.freq_index(k)?;
        let wave = GridFunction::plane_wave(&self.grid, k);
        let values = wave
            .values
            .iter()
            .enumerate()
            .map(|(p, w)| Ok(multiplier(self.symbol.as_ref(), &self.grid, &self.grid.coords(p), k)? * w))
            .collect::<Result<_>>()?;
        Ok(GridFunction { values })
    }
}

/// Dense operator on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridOperator {
    grid: PeriodicGrid,
    matrix: DMatrix<Complex64>,
}

impl GridOperator {
    pub fn new(grid: PeriodicGrid, matrix: DMatrix<Complex64>) -> Result<GridOperator> {
        let n = grid.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(GridOperator { grid, matrix })
    }

    pub fn identity(grid: &PeriodicGrid) -> GridOperator {
        GridOperator {
            grid: grid.clone(),
            matrix: DMatrix::identity(grid.len(), grid.len()),
        }
    }

    pub fn zero(grid: &PeriodicGrid) -> GridOperator {
        GridOperator {
            grid: grid.clone(),
            matrix: DMatrix::from_element(grid.len(), grid.len(), ZERO),
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    fn check_grid(&self, other: &GridOperator) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::input("operators live on different grids"));
        }
        Ok(())
    }

    pub fn compose(&self, other: &GridOperator) -> Result<GridOperator> {
        self.check_grid(other)?;
        Ok(GridOperator {
            grid: self.grid.clone(),
            matrix: dense::cmatmul(&self.matrix, &other.matrix),
        })
    }

    pub fn add(&self, other: &GridOperator) -> Result<GridOperator> {
        self.check_grid(other)?;
        Ok(GridOperator {
            grid: self.grid.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &GridOperator) -> Result<GridOperator> {
        self.check_grid(other)?;
        Ok(GridOperator {
            grid: self.grid.clone(),
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn scale(&self, c: Complex64) -> GridOperator {
        GridOperator {
            grid: self.grid.clone(),
            matrix: &self.matrix * c,
        }
    }

    /// Adjoint for the uniform-weight inner product: the conjugate transpose.
    pub fn adjoint(&self) -> GridOperator {
        GridOperator {
            grid: self.grid.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    /// `(P + P^*) / 2`.
    pub fn symmetrize(&self) -> GridOperator {
        GridOperator {
            grid: self.grid.clone(),
            matrix: (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0),
        }
    }

    pub fn hermitian_defect(&self) -> f64 {
        dense::hermitian_defect(&self.matrix)
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest singular value.
    pub fn norm(&self) -> f64 {
        dense::spectral_norm(&self.matrix)
    }

    pub fn to_text(&self) -> String {
        let n = self.grid.len();
        let mut out = format!(
            "gridoperator dim={} points={} origin={} rows={n} cols={n}\n",
            self.grid.dim, self.grid.points, self.grid.origin
        );
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| {
                    let z = self.matrix[(i, j)];
                    format!("{} {}", z.re, z.im)
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<GridOperator> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::input("empty operator"))?;
        let (grid, _) = parse_header(header, "gridoperator")?;
        let n = grid.len();
        let mut m = DMatrix::from_element(n, n, ZERO);
        let mut count = 0;
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let nums = parse_numbers(line)?;
            if i >= n || nums.len() != 2 * n {
                return Err(Error::Dimension {
                    expected: 2 * n,
                    found: nums.len(),
                });
            }
            for j in 0..n {
                m[(i, j)] = Complex64::new(nums[2 * j], nums[2 * j + 1]);
            }
            count += 1;
        }
        if count != n {
            return Err(Error::Dimension { expected: n, found: count });
        }
        Ok(GridOperator { grid, matrix: m })
    }
}

impl LinearOp for GridOperator {
    fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.len() != self.grid.len() {
            return Err(Error::Dimension {
                expected: self.grid.len(),
                found: f.len(),
            });
        }
        let v = &self.matrix * DVector::from_column_slice(&f.values);
        Ok(GridFunction {
            values: v.iter().copied().collect(),
        })
    }
}

/// Convenience for `adjoint`.
pub fn adjoint(p: &GridOperator) -> GridOperator {
    p.adjoint()
}

/// Frequencies `k e_1` for the given `k` values.
pub fn axis_frequencies(dim: usize, ks: &[i64]) -> Vec<Vec<i64>> {
    ks.iter()
        .map(|&k| {
            let mut v = vec![0; dim];
            v[0] = k;
            v
        })
        .collect()
}

/// Plane-wave response `|xi| -> ||P e_xi|| / ||e_xi||` and its log-log slope.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderProfile {
    pub frequencies: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
}

pub fn order_profile(p: &dyn LinearOp, freqs: &[Vec<i64>]) -> Result<OrderProfile> {
    if freqs.len() < 2 {
        return Err(Error::input("order estimate needs at least two frequencies"));
    }
    let grid = p.grid();
    let mut frequencies = Vec::new();
    let mut norms = Vec::new();
    for k in freqs {
        let r = k.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        if r == 0.0 {
            return Err(Error::input("order estimate needs nonzero frequencies"));
        }
        let wave_norm = GridFunction::plane_wave(grid, k).l2_norm(grid);
        let image = p.apply_plane_wave(k)?;
        frequencies.push(r);
        norms.push(image.l2_norm(grid) / wave_norm);
    }
    let (fx, fy): (Vec<f64>, Vec<f64>) = frequencies
        .iter()
        .zip(&norms)
        .filter(|(_, n)| **n >= ORDER_NORM_FLOOR)
        .map(|(a, b)| (*a, *b))
        .unzip();
    let slope = if fx.len() < 2 { f64::NEG_INFINITY } else { loglog_slope(&fx, &fy) };
    Ok(OrderProfile { frequencies, norms, slope })
}

/// Log-log slope of `||P e_xi||` against `|xi|`; `-inf` when the response
/// vanishes (norms below `ORDER_NORM_FLOOR` are dropped from the fit).
pub fn estimate_order(p: &dyn LinearOp, freqs: &[Vec<i64>]) -> Result<f64> {
    Ok(order_profile(p, freqs)?.slope)
}

/// Values `tau^{-m} P(e^{i tau phi} chi)(x)` and their extrapolations.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryTrace {
    pub taus: Vec<i64>,
    pub values: Vec<Complex64>,
    /// Richardson estimates removing the `1/tau` term; one fewer than `values`.
    pub extrapolated: Vec<Complex64>,
    pub value: Complex64,
}

impl RecoveryTrace {
    /// Distances of the raw values to `target`.
    pub fn errors(&self, target: Complex64) -> Vec<f64> {
        self.values.iter().map(|v| (v - target).norm()).collect()
    }
}

/// Quarter period.
pub const DEFAULT_LOCALIZER_WIDTH: f64 = PI / 2.0;

pub fn recover_principal_symbol(p: &dyn LinearOp, m: i32, x: &[f64], xi_dir: &[i64], taus: &[i64]) -> Result<RecoveryTrace> {
    recover_principal_symbol_with(p, m, x, xi_dir, taus, DEFAULT_LOCALIZER_WIDTH)
}

/// As `recover_principal_symbol` with localizer support radius `width`
/// (plateau of radius `width / 2`).
pub fn recover_principal_symbol_with(
    p: &dyn LinearOp,
    m: i32,
    x: &[f64],
    xi_dir: &[i64],
    taus: &[i64],
    width: f64,
) -> Result<RecoveryTrace> {
    let grid = p.grid().clone();
    if xi_dir.len() != grid.dim {
        return Err(Error::Dimension {
            expected: grid.dim,
            found: xi_dir.len(),
        });
    }
    if taus.is_empty() || taus.iter().any(|&t| t <= 0) {
        return Err(Error::input("tau schedule must be nonempty and positive"));
    }
    if xi_dir.iter().all(|&v| v == 0) {
        return Err(Error::input("direction must be nonzero"));
    }
    let center = grid.locate(x)?;
    let xc = grid.coords(center);
    let reach = xi_dir.iter().map(|v| v.abs()).max().unwrap_or(0);
    for &tau in taus {
        if tau * reach >= grid.nyquist() {
            return Err(Error::Aliasing {
                frequency: tau * reach,
                points: grid.points,
            });
        }
    }
    let localizer = GridFunction::from_fn(&grid, |u| {
        let r2: f64 = u
            .iter()
            .zip(&xc)
            .map(|(a, b)| {
                let d = (a - b + PI).rem_euclid(2.0 * PI) - PI;
                d * d
            })
            .sum();
        Complex64::new(radial_bump(r2.sqrt(), width / 2.0, width), 0.0)
    });
    let mut values = Vec::with_capacity(taus.len());
    for &tau in taus {
        let f = GridFunction {
            values: (0..grid.len())
                .map(|q| {
                    let u = grid.coords(q);
                    let phase: f64 = xi_dir
                        .iter()
                        .zip(u.iter().zip(&xc))
                        .map(|(k, (a, b))| (tau * k) as f64 * (a - b))
                        .sum();
                    localizer.values[q] * Complex64::from_polar(1.0, phase)
                })
                .collect(),
        };
        let image = p.apply(&f)?;
        values.push(image.values[center] * (tau as f64).powi(-m));
    }
    let extrapolated: Vec<Complex64> = (1..taus.len())
        .map(|k| {
            let (t0, t1) = (taus[k - 1] as f64, taus[k] as f64);
            (values[k] * t1 - values[k - 1] * t0) / (t1 - t0)
        })
        .collect();
    let value = *extrapolated.last().unwrap_or(&values[values.len() - 1]);
    Ok(RecoveryTrace {
        taus: taus.to_vec(),
        values,
        extrapolated,
        value,
    })
}

/// Spectral differentiation along `axis` (`Op(i xi_axis)`, Nyquist zeroed),
/// built from the cotangent formula.
pub fn spectral_derivative(grid: &PeriodicGrid, axis: usize) -> GridOperator {
    let g = grid.points;
    let h = grid.spacing();
    let d1 = |j: usize, k: usize| -> f64 {
        if j == k {
            0.0
        } else {
            let s = j as i64 - k as i64;
            let sign = if s.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (s as f64 * h / 2.0).tan()
        }
    };
    let n = grid.len();
    let stride = g.pow((grid.dim - 1 - axis) as u32);
    let mut m = DMatrix::from_element(n, n, ZERO);
    for p in 0..n {
        let pj = (p / stride) % g;
        let base = p - pj * stride;
        for qj in 0..g {
            let v = d1(pj, qj);
            if v != 0.0 {
                m[(p, base + qj * stride)] = Complex64::new(v, 0.0);
            }
        }
    }
    GridOperator {
        grid: grid.clone(),
        matrix: m,
    }
}

/// Projector onto the modes whose `axis` frequency is the Nyquist one.
pub fn nyquist_projector(grid: &PeriodicGrid, axis: usize) -> GridOperator {
    let g = grid.points;
    let n = grid.len();
    let stride = g.pow((grid.dim - 1 - axis) as u32);
    let mut m = DMatrix::from_element(n, n, ZERO);
    let w = 1.0 / g as f64;
    for p in 0..n {
        let pj = (p / stride) % g;
        let base = p - pj * stride;
        for qj in 0..g {
            let sign = if (pj + qj).is_multiple_of(2) { w } else { -w };
            m[(p, base + qj * stride)] = Complex64::new(sign, 0.0);
        }
    }
    GridOperator {
        grid: grid.clone(),
        matrix: m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polysym::{ClosedFormSymbol, Cutoff, PolyhomSymbol};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sym(order: i32, terms: &[&str], dim: usize) -> PolyhomSymbol {
        PolyhomSymbol::parse(order, terms, dim, dim).unwrap()
    }

    fn random_fn(grid: &PeriodicGrid, rng: &mut ChaCha8Rng) -> GridFunction {
        GridFunction::new(
            (0..grid.len())
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        )
    }

    #[test]
    fn grid_indexing() {
        let g = PeriodicGrid::new(2, 8).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.multi_index(13), vec![1, 5]);
        assert_eq!(g.flat_index(&[1, 5]), 13);
        assert_eq!(g.frequency(13), vec![1, -3]);
        assert_eq!(g.freq_index(&[1, -3]).unwrap(), 13);
        assert!(matches!(g.freq_index(&[4, 0]), Err(Error::Aliasing { .. })));
        assert!(PeriodicGrid::new(1, 6).is_ok());
        assert!(PeriodicGrid::new(1, 2).is_err());
        assert!(PeriodicGrid::new(1, 7).is_err());
    }

    #[test]
    fn identity_symbol_is_identity() {
        let grid = PeriodicGrid::new(1, 16).unwrap();
        let one = sym(0, &["1"], 1).with_cutoff(Cutoff::None);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_fn(&grid, &mut rng);
        let g = apply_symbol(&one, &f, &grid).unwrap();
        assert!(g.sub(&f).max_norm() < 1e-14);
        let m = quantize_dense(&one, &grid).unwrap();
        assert!(m.sub(&GridOperator::identity(&grid)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn derivative_examples() {
        let grid = PeriodicGrid::new(1, 16).unwrap();
        let d = sym(1, &["i*xi"], 1);
        let wave = GridFunction::plane_wave(&grid, &[3]);
        let out = apply_symbol(&d, &wave, &grid).unwrap();
        let expected = GridFunction::new(wave.values.iter().map(|w| w * c(0.0, 3.0)).collect());
        assert!(out.sub(&expected).max_norm() < 1e-13);

        let s = GridFunction::from_fn(&grid, |x| c(x[0].sin(), 0.0));
        let out = apply_symbol(&d, &s, &grid).unwrap();
        let cosine = GridFunction::from_fn(&grid, |x| c(x[0].cos(), 0.0));
        assert!(out.sub(&cosine).max_norm() < 1e-12);
    }

    #[test]
    fn dense_matches_matrix_free_in_one_and_two_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g1 = PeriodicGrid::new(1, 16).unwrap();
        let a = sym(1, &["(2 + sin(x))*i*xi", "cos(x)"], 1);
        let m = quantize_dense(&a, &g1).unwrap();
        for _ in 0..20 {
            let f = random_fn(&g1, &mut rng);
            let diff = m.apply(&f).unwrap().sub(&apply_symbol(&a, &f, &g1).unwrap());
            assert!(diff.max_norm() < 1e-10);
        }
        let g2 = PeriodicGrid::new(2, 8).unwrap();
        let b = sym(2, &["(1 + cos(x1)*sin(x2)/2)*(xi1^2 + xi2^2)", "i*xi2"], 2);
        let m = quantize_dense(&b, &g2).unwrap();
        let f = random_fn(&g2, &mut rng);
        let diff = m.apply(&f).unwrap().sub(&apply_symbol(&b, &f, &g2).unwrap());
        assert!(diff.max_norm() < 1e-10);
    }

    #[test]
    fn derivative_symbol_is_the_cotangent_matrix() {
        let grid = PeriodicGrid::new(1, 16).unwrap();
        let m = quantize_dense(&sym(1, &["i*xi"], 1), &grid).unwrap();
        let d = spectral_derivative(&grid, 0);
        assert!(m.sub(&d).unwrap().max_abs() < 1e-13);
        // i * (skew) is self-adjoint
        let h = m.scale(c(0.0, 1.0));
        assert!(h.hermitian_defect() < 1e-12);
    }

    #[test]
    fn spectral_derivative_on_a_two_dimensional_grid() {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let d = spectral_derivative(&grid, 1);
        let f = GridFunction::from_fn(&grid, |x| c(x[0].cos() * (2.0 * x[1]).sin(), 0.0));
        let df = d.apply(&f).unwrap();
        let expected = GridFunction::from_fn(&grid, |x| c(2.0 * x[0].cos() * (2.0 * x[1]).cos(), 0.0));
        assert!(df.sub(&expected).max_norm() < 1e-12);
    }

    #[test]
    fn adjoint_definition() {
        let grid = PeriodicGrid::new(1, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(8, 8, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let p = GridOperator::new(grid.clone(), a).unwrap();
        let pa = p.adjoint();
        assert_eq!(pa.adjoint(), p);
        let f = random_fn(&grid, &mut rng);
        let g = random_fn(&grid, &mut rng);
        let lhs = p.apply(&f).unwrap().inner(&g, &grid);
        let rhs = f.inner(&pa.apply(&g).unwrap(), &grid);
        assert!((lhs - rhs).norm() < 1e-12);
        assert_eq!(GridOperator::identity(&grid).adjoint(), GridOperator::identity(&grid));
    }

    #[test]
    fn order_estimates() {
        let grid = PeriodicGrid::new(1, 128).unwrap();
        let freqs = axis_frequencies(1, &[4, 8, 16, 32]);
        let sq = SymbolOp::new(Arc::new(sym(2, &["xi^2"], 1)), grid.clone()).unwrap();
        assert!((estimate_order(&sq, &freqs).unwrap() - 2.0).abs() < 0.1);
        let id = GridOperator::identity(&grid);
        assert!(estimate_order(&id, &freqs).unwrap().abs() < 1e-12);
        let inv = ClosedFormSymbol::parse(-2, "(1 + xi^2)^(-1)", "xi^(-2)", 1, 1).unwrap();
        let op = SymbolOp::new(Arc::new(inv), grid.clone()).unwrap();
        assert!((estimate_order(&op, &freqs).unwrap() + 2.0).abs() < 0.1);
        let zero = GridOperator::zero(&grid);
        assert_eq!(estimate_order(&zero, &freqs).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn recovery_examples() {
        let grid = PeriodicGrid::new(1, 256).unwrap();
        let taus = [8, 16, 32, 64];
        let d = SymbolOp::new(Arc::new(sym(1, &["i*xi"], 1)), grid.clone()).unwrap();
        let t = recover_principal_symbol(&d, 1, &[0.0], &[1], &taus).unwrap();
        assert!((t.values[3] - c(0.0, 1.0)).norm() < 0.1);

        let id = GridOperator::identity(&grid);
        let t = recover_principal_symbol(&id, 0, &[0.0], &[1], &taus).unwrap();
        assert!((t.value - c(1.0, 0.0)).norm() < 1e-12);

        let a = SymbolOp::new(Arc::new(sym(1, &["(2 + sin(x))*i*xi"], 1)), grid.clone()).unwrap();
        let t = recover_principal_symbol(&a, 1, &[PI / 2.0], &[1], &taus).unwrap();
        assert!((t.values[3] - c(0.0, 3.0)).norm() < 0.3);

        assert!(matches!(
            recover_principal_symbol(&id, 0, &[0.0], &[1], &[128]),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn text_round_trips() {
        let grid = PeriodicGrid::new(1, 8).unwrap().with_origin(-PI);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_fn(&grid, &mut rng);
        let (g2, f2) = GridFunction::from_text(&f.to_text(&grid)).unwrap();
        assert_eq!(g2, grid);
        assert_eq!(f2, f);
        let p = quantize_dense(&sym(1, &["(2 + cos(x))*i*xi"], 1), &grid).unwrap();
        assert_eq!(GridOperator::from_text(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn dense_cap_is_enforced() {
        let grid = PeriodicGrid::new(2, 16).unwrap();
        let a = sym(0, &["1"], 2);
        assert!(matches!(
            quantize_dense_capped(&a, &grid, 100),
            Err(Error::DenseCap { rows: 256, cap: 100 })
        ));
    }
}
