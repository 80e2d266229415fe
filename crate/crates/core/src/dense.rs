//! Dense complex kernels routed through real BLAS-style products.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

fn split(a: &DMatrix<Complex64>) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let re = a.map(|z| z.re);
    let im = a.map(|z| z.im);
    let real = im.iter().all(|v| *v == 0.0);
    (re, if real { None } else { Some(im) })
}

fn join(re: DMatrix<f64>, im: Option<DMatrix<f64>>) -> DMatrix<Complex64> {
    match im {
        None => re.map(|v| Complex64::new(v, 0.0)),
        Some(im) => re.zip_map(&im, Complex64::new),
    }
}

/// Complex matrix product; exactly-real operands take a single real product.
pub fn cmatmul(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re_part = &ar * &br;
    match (ai, bi) {
        (None, None) => join(re_part, None),
        (Some(ai), None) => {
            let im = &ai * &br;
            join(re_part, Some(im))
        }
        (None, Some(bi)) => {
            let im = &ar * &bi;
            join(re_part, Some(im))
        }
        (Some(ai), Some(bi)) => {
            let re = re_part - &ai * &bi;
            let im = &ar * &bi + &ai * &br;
            join(re, Some(im))
        }
    }
}

pub fn is_real(a: &DMatrix<Complex64>) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

/// Largest entry of `|A - A^*|`.
pub fn hermitian_defect(a: &DMatrix<Complex64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Ascending eigenvalues of the Hermitian part of `a`.
pub fn hermitian_eigenvalues(a: &DMatrix<Complex64>) -> Vec<f64> {
    let n = a.nrows();
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let mut values: Vec<f64> = if h.iter().all(|z| z.im.abs() <= 1e-15 * (1.0 + z.re.abs())) {
        let re = h.map(|z| z.re);
        SymmetricEigen::new(re).eigenvalues.iter().copied().collect()
    } else {
        // real 2n embedding [[Re, -Im], [Im, Re]] doubles every eigenvalue
        let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = h[(i, j)];
                big[(i, j)] = z.re;
                big[(i + n, j + n)] = z.re;
                big[(i, j + n)] = -z.im;
                big[(i + n, j)] = z.im;
            }
        }
        let mut all: Vec<f64> = SymmetricEigen::new(big).eigenvalues.iter().copied().collect();
        all.sort_by(f64::total_cmp);
        all.into_iter().step_by(2).collect()
    };
    values.sort_by(f64::total_cmp);
    values
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<Complex64>) -> f64 {
    if is_real(a) {
        let re = a.map(|z| z.re);
        re.singular_values().iter().copied().fold(0.0, f64::max)
    } else {
        a.clone().singular_values().iter().copied().fold(0.0, f64::max)
    }
}
