//! Finite-resolution diagnostics: boundedness under refinement, decay of
//! negative-order operators, spectra and wave-packet probes of `F*`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::dense;
use crate::error::{Error, Result};
use crate::foliation::FoliationModule;
use crate::polysym::{loglog_slope, PolyhomSymbol, Symbol};
use crate::quantize::{
    fourier_coefficients, multiplier, quantize_dense_capped, GridFunction, GridOperator, PeriodicGrid, DEFAULT_DENSE_CAP,
};

/// Largest accepted ratio between norms on consecutive grids.
pub const BOUNDEDNESS_RATIO: f64 = 1.25;

/// Norms below this count as zero in decay fits.
pub const DECAY_NORM_FLOOR: f64 = 1e-14;

/// Hermitian defect accepted by `spectrum`.
pub const HERMITIAN_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundednessReport {
    pub symbol: String,
    pub grids: Vec<usize>,
    pub norms: Vec<f64>,
    pub max_ratio: f64,
    pub passed: bool,
}

/// Operator norm of `Op(a)` on each grid; passes when consecutive norms stay
/// within `BOUNDEDNESS_RATIO` of each other.
pub fn boundedness_scan(a: &dyn Symbol, id: &str, grids: &[usize]) -> Result<BoundednessReport> {
    if grids.len() < 3 {
        return Err(Error::input("a boundedness scan needs at least three grids"));
    }
    let mut norms = Vec::with_capacity(grids.len());
    for &g in grids {
        let grid = PeriodicGrid::new(a.x_dim(), g)?;
        let op = quantize_dense_capped(a, &grid, DEFAULT_DENSE_CAP)?;
        norms.push(dense::spectral_norm(op.matrix()));
    }
    let max_ratio = norms
        .windows(2)
        .map(|w| {
            let r = w[1] / w[0];
            r.max(1.0 / r)
        })
        .fold(1.0, f64::max);
    let passed = norms.iter().all(|n| *n > 0.0) && max_ratio <= BOUNDEDNESS_RATIO;
    Ok(BoundednessReport {
        symbol: id.to_string(),
        grids: grids.to_vec(),
        norms,
        max_ratio,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub cutoffs: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
    pub order: i32,
    pub passed: bool,
}

/// Norm of `Op(a)` restricted to plane waves with `|k| >= K`, for each `K`.
/// The slope is fitted in log-log; it is `-inf` when fewer than two norms
/// exceed the floor.
pub fn negative_order_decay(a: &dyn Symbol, grid: &PeriodicGrid, cutoffs: &[f64]) -> Result<DecayReport> {
    if cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::input("cutoffs must be increasing"));
    }
    if cutoffs.first().is_some_and(|k| *k <= 0.0) {
        return Err(Error::input("cutoffs must be positive"));
    }
    if grid.len() > DEFAULT_DENSE_CAP {
        return Err(Error::DenseCap {
            rows: grid.len(),
            cap: DEFAULT_DENSE_CAP,
        });
    }
    let size = grid.len();
    let scale = 1.0 / (size as f64).sqrt();
    let points: Vec<Vec<f64>> = (0..size).map(|p| grid.coords(p)).collect();
    let mut norms = Vec::with_capacity(cutoffs.len());
    for &cut in cutoffs {
        let freqs: Vec<Vec<i64>> = (0..size)
            .map(|f| grid.frequency(f))
            .filter(|k| k.iter().map(|v| (v * v) as f64).sum::<f64>().sqrt() >= cut)
            .collect();
        if freqs.is_empty() {
            return Err(Error::input(format!("cutoff {cut} leaves no frequencies on the grid")));
        }
        let mut b = DMatrix::from_element(size, freqs.len(), Complex64::new(0.0, 0.0));
        for (col, k) in freqs.iter().enumerate() {
            for (p, x) in points.iter().enumerate() {
                let phase: f64 = k.iter().zip(x).map(|(kj, xj)| *kj as f64 * (xj - grid.origin())).sum();
                b[(p, col)] = multiplier(a, grid, x, k)? * Complex64::from_polar(scale, phase);
            }
        }
        norms.push(dense::spectral_norm(&b));
    }
    let kept: Vec<(f64, f64)> = cutoffs
        .iter()
        .zip(&norms)
        .filter(|(_, n)| **n > DECAY_NORM_FLOOR)
        .map(|(k, n)| (*k, *n))
        .collect();
    let slope = if kept.len() < 2 {
        f64::NEG_INFINITY
    } else {
        let (ks, ns): (Vec<f64>, Vec<f64>) = kept.into_iter().unzip();
        loglog_slope(&ks, &ns)
    };
    let order = a.order();
    Ok(DecayReport {
        cutoffs: cutoffs.to_vec(),
        norms,
        slope,
        order,
        passed: slope <= order as f64 + 0.5,
    })
}

/// Lowest `count` eigenvalues of a Hermitian operator, ascending.
pub fn spectrum(op: &GridOperator, count: usize) -> Result<Vec<f64>> {
    let defect = op.hermitian_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::NotSelfAdjoint {
            defect,
            tolerance: HERMITIAN_TOL,
        });
    }
    let mut values = dense::hermitian_eigenvalues(op.matrix());
    values.truncate(count);
    Ok(values)
}

/// `exp(-|xi|^2 / <x, xi>^2)` off `<x, xi> = 0` and zero on it: an order 0
/// symbol vanishing to infinite order on the SO(3) cotangent set.
#[derive(Clone, Debug)]
pub struct FlatVanishingSymbol {
    dim: usize,
    principal: PolyhomSymbol,
}

impl FlatVanishingSymbol {
    pub fn new(dim: usize) -> Result<FlatVanishingSymbol> {
        if dim == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        let norm2: Vec<String> = (1..=dim).map(|j| format!("xi{j}^2")).collect();
        let pairing: Vec<String> = (1..=dim).map(|j| format!("x{j}*xi{j}")).collect();
        let text = if dim == 1 {
            "exp(-xi^2/(x*xi)^2)".to_string()
        } else {
            format!("exp(-({})/({})^2)", norm2.join("+"), pairing.join("+"))
        };
        Ok(FlatVanishingSymbol {
            dim,
            principal: PolyhomSymbol::parse(0, &[&text], dim, dim)?,
        })
    }
}

impl Symbol for FlatVanishingSymbol {
    fn order(&self) -> i32 {
        0
    }
    fn x_dim(&self) -> usize {
        self.dim
    }
    fn xi_dim(&self) -> usize {
        self.dim
    }
    fn depends_on_x(&self) -> bool {
        true
    }
    fn value(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        let pairing: f64 = x.iter().zip(xi).map(|(a, b)| a * b).sum();
        let norm2: f64 = xi.iter().map(|v| v * v).sum();
        if pairing == 0.0 || norm2 == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new((-norm2 / (pairing * pairing)).exp(), 0.0)
    }
    fn principal(&self) -> PolyhomSymbol {
        self.principal.clone()
    }
}

/// Gaussian envelope times a grid plane wave; axes with no width are flat.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WavePacket {
    pub center: Vec<f64>,
    pub frequency: Vec<i64>,
    pub widths: Vec<Option<f64>>,
}

impl WavePacket {
    pub fn sample(&self, grid: &PeriodicGrid) -> Result<GridFunction> {
        let d = grid.dim();
        if self.center.len() != d || self.frequency.len() != d || self.widths.len() != d {
            return Err(Error::Dimension {
                expected: d,
                found: self.center.len(),
            });
        }
        grid.freq_index(&self.frequency)?;
        Ok(GridFunction::from_fn(grid, |x| {
            let mut env = 0.0;
            let mut phase = 0.0;
            for (j, &xj) in x.iter().enumerate().take(d) {
                if let Some(w) = self.widths[j] {
                    let t = xj - self.center[j];
                    env += t * t / (2.0 * w * w);
                }
                phase += self.frequency[j] as f64 * xj;
            }
            Complex64::from_polar((-env).exp(), phase)
        }))
    }
}

/// `Op(a) f` keeping only Fourier modes above `rel_tol` times the largest.
pub fn apply_truncated(a: &dyn Symbol, f: &GridFunction, grid: &PeriodicGrid, rel_tol: f64) -> Result<GridFunction> {
    let c = fourier_coefficients(grid, f);
    let top = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let modes: Vec<(Vec<i64>, Complex64)> = (0..grid.len())
        .filter(|&i| c[i].norm() > rel_tol * top)
        .map(|i| (grid.frequency(i), c[i]))
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (p, v) in out.iter_mut().enumerate() {
        let x = grid.coords(p);
        for (k, ck) in &modes {
            let phase: f64 = k.iter().zip(&x).map(|(kj, xj)| *kj as f64 * (xj - grid.origin())).sum();
            *v += multiplier(a, grid, &x, k)? * ck * Complex64::from_polar(1.0, phase);
        }
    }
    Ok(GridFunction::new(out))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacketProbe {
    pub packet: WavePacket,
    pub on_cotangent_set: bool,
    /// `|Op(a) psi| / |psi|`.
    pub norm: f64,
    /// `|a(center, frequency)|`.
    pub symbol_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtensionReport {
    pub probes: Vec<PacketProbe>,
    pub max_on: f64,
    pub max_off_deviation: f64,
    pub passed: bool,
}

/// Packet norms on `F*` stay below this.
pub const ON_SET_NORM: f64 = 0.1;
/// Off `F*`, packet norms track `|a|` at the packet centre to this fraction.
pub const OFF_SET_DEVIATION: f64 = 0.1;

/// Whether `xi` lies in the range of the evaluation map at `x`.
pub fn in_cotangent_set(module: &FoliationModule, x: &[f64], xi: &[f64]) -> bool {
    let a = module.evaluation_matrix(x);
    let svd = a.svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut residual: Vec<f64> = xi.to_vec();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s <= 1e-8 * top.max(1.0) {
            continue;
        }
        let col = u.column(k);
        let dot: f64 = col.iter().zip(xi).map(|(a, b)| a * b).sum();
        for (r, c) in residual.iter_mut().zip(col.iter()) {
            *r -= dot * c;
        }
    }
    let scale = xi.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    residual.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-8 * scale
}

/// Probes `Op(a)` with wave packets, split by whether the carrier frequency
/// lies in `F*` at the packet centre.
pub fn extension_report(a: &dyn Symbol, module: &FoliationModule, grid: &PeriodicGrid, packets: &[WavePacket]) -> Result<ExtensionReport> {
    let mut probes = Vec::with_capacity(packets.len());
    for packet in packets {
        let psi = packet.sample(grid)?;
        let out = apply_truncated(a, &psi, grid, 1e-10)?;
        let xi: Vec<f64> = packet.frequency.iter().map(|v| *v as f64).collect();
        probes.push(PacketProbe {
            packet: packet.clone(),
            on_cotangent_set: in_cotangent_set(module, &packet.center, &xi),
            norm: out.l2_norm(grid) / psi.l2_norm(grid),
            symbol_value: a.value(&packet.center, &xi).norm(),
        });
    }
    let max_on = probes.iter().filter(|p| p.on_cotangent_set).map(|p| p.norm).fold(0.0, f64::max);
    let max_off_deviation = probes
        .iter()
        .filter(|p| !p.on_cotangent_set)
        .map(|p| (p.norm - p.symbol_value).abs() / p.symbol_value.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(ExtensionReport {
        passed: max_on < ON_SET_NORM && max_off_deviation <= OFF_SET_DEVIATION,
        probes,
        max_on,
        max_off_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::laplacian;
    use crate::foliation::{flat_torus_module, so3_module};
    use crate::polysym::ClosedFormSymbol;

    #[test]
    fn boundedness_discriminates_order() {
        let one = PolyhomSymbol::parse(0, &["1"], 1, 1)
            .unwrap()
            .with_cutoff(crate::polysym::Cutoff::None);
        let r = boundedness_scan(&one, "one", &[16, 32, 64]).unwrap();
        assert!(r.norms.iter().all(|n| (n - 1.0).abs() < 1e-12));
        assert!(r.passed);
        let xi = PolyhomSymbol::parse(1, &["xi"], 1, 1).unwrap();
        let r = boundedness_scan(&xi, "xi", &[16, 32, 64]).unwrap();
        assert!(!r.passed);
        assert!(r.max_ratio > 1.8);
        assert!(boundedness_scan(&one, "one", &[16, 32]).is_err());
    }

    #[test]
    fn decay_of_resolvent_multiplier() {
        let grid = PeriodicGrid::new(1, 128).unwrap();
        let a = ClosedFormSymbol::parse(-2, "1/(1+xi^2)", "xi^(-2)", 1, 1).unwrap();
        let r = negative_order_decay(&a, &grid, &[4.0, 8.0, 16.0, 32.0]).unwrap();
        assert!((r.slope + 2.0).abs() < 0.2, "{}", r.slope);
        assert!(r.passed);
        let zero = PolyhomSymbol::parse(-1, &["0"], 1, 1).unwrap();
        let r = negative_order_decay(&zero, &grid, &[4.0, 8.0]).unwrap();
        assert_eq!(r.slope, f64::NEG_INFINITY);
    }

    #[test]
    fn flat_torus_spectrum() {
        let grid = PeriodicGrid::new(1, 32).unwrap();
        let lap = laplacian(&flat_torus_module(1).unwrap(), &grid, None).unwrap();
        let ev = spectrum(&lap.element.op, 7).unwrap();
        for (got, want) in ev.iter().zip([0.0, 1.0, 1.0, 4.0, 4.0, 9.0, 9.0]) {
            assert!((got - want).abs() < 1e-10);
        }
        let skew = crate::calculus::vector_field_op(&crate::foliation::PolyVectorField::parse(&["1"]).unwrap(), &grid).unwrap();
        assert!(matches!(spectrum(&skew.op, 3), Err(Error::NotSelfAdjoint { .. })));
    }

    #[test]
    fn flat_vanishing_symbol_on_the_cotangent_set() {
        let a = FlatVanishingSymbol::new(3).unwrap();
        let so3 = so3_module(4.0).unwrap();
        for x in [[1.0, 0.0, 0.0], [0.3, -0.7, 0.2], [0.0, 0.0, 2.0]] {
            for xi in so3.base_cotangent_samples(&x, 2).unwrap() {
                assert_eq!(a.value(&x, &xi), Complex64::new(0.0, 0.0));
                assert!(in_cotangent_set(&so3, &x, &xi));
            }
        }
        let v = a.value(&[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]).re;
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!(!in_cotangent_set(&so3, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]));
    }
}
