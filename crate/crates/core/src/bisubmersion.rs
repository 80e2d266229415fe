//! Identity bi-submersions `U = M x B_r(0) subset M x R^N` with
//! `s(y, xi) = y` and `t(y, xi) = exp(sum xi_i X_i)(y)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::foliation::{Domain, FoliationModule};

pub const DEFAULT_RADIUS: f64 = 0.5;
pub const DEFAULT_STEPS: usize = 64;
/// Relative singular-value threshold for the submersion rank test.
pub const SUBMERSION_RANK_TOL: f64 = 1e-6;

/// Fixed-step one-step methods of order four.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Classical Runge-Kutta.
    Rk4,
    /// Kutta's 3/8 rule.
    Rk38,
}

#[derive(Clone, Debug)]
pub struct IdentityBisubmersion {
    module: FoliationModule,
    radius: f64,
    steps: usize,
    integrator: Integrator,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum SubmersionVerdict {
    Pass,
    Witness { y: Vec<f64>, xi: Vec<f64>, rank: usize },
}

impl SubmersionVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, SubmersionVerdict::Pass)
    }
}

/// Successive differences under step doubling and the implied orders.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub steps: Vec<usize>,
    pub differences: Vec<f64>,
    pub orders: Vec<f64>,
    pub order: f64,
}

impl IdentityBisubmersion {
    pub fn new(module: FoliationModule) -> IdentityBisubmersion {
        IdentityBisubmersion {
            module,
            radius: DEFAULT_RADIUS,
            steps: DEFAULT_STEPS,
            integrator: Integrator::Rk4,
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Result<IdentityBisubmersion> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(Error::input("radius must be positive"));
        }
        self.radius = radius;
        Ok(self)
    }

    pub fn with_steps(mut self, steps: usize) -> Result<IdentityBisubmersion> {
        if steps == 0 {
            return Err(Error::input("step count must be positive"));
        }
        self.steps = steps;
        Ok(self)
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> IdentityBisubmersion {
        self.integrator = integrator;
        self
    }

    pub fn module(&self) -> &FoliationModule {
        &self.module
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn source(&self, y: &[f64], _xi: &[f64]) -> Vec<f64> {
        y.to_vec()
    }

    fn check(&self, y: &[f64], xi: &[f64]) -> Result<()> {
        if y.len() != self.module.dim() {
            return Err(Error::Dimension {
                expected: self.module.dim(),
                found: y.len(),
            });
        }
        if xi.len() != self.module.len() {
            return Err(Error::Dimension {
                expected: self.module.len(),
                found: xi.len(),
            });
        }
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > self.radius * (1.0 + 1e-12) {
            return Err(Error::input(format!(
                "|xi| = {norm} exceeds the neighborhood radius {}",
                self.radius
            )));
        }
        if !self.module.domain().contains(y) {
            return Err(Error::input(format!("{y:?} is outside the domain")));
        }
        Ok(())
    }

    fn field(&self, xi: &[f64], p: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (c, ev) in xi.iter().zip(self.module.evaluators()) {
            if *c == 0.0 {
                continue;
            }
            ev.eval_into(p, scratch);
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o += c * s;
            }
        }
    }

    fn step(&self, xi: &[f64], p: &mut [f64], h: f64) {
        let n = p.len();
        let mut scratch = vec![0.0; n];
        let mut k = vec![vec![0.0; n]; 4];
        let mut tmp = vec![0.0; n];
        let shift = |tmp: &mut Vec<f64>, p: &[f64], terms: &[(f64, &Vec<f64>)]| {
            for i in 0..n {
                tmp[i] = p[i] + terms.iter().map(|(c, v)| c * v[i]).sum::<f64>();
            }
        };
        match self.integrator {
            Integrator::Rk4 => {
                self.field(xi, p, &mut k[0], &mut scratch);
                let (k0, rest) = k.split_at_mut(1);
                shift(&mut tmp, p, &[(h / 2.0, &k0[0])]);
                self.field(xi, &tmp, &mut rest[0], &mut scratch);
                let (k1, rest) = rest.split_at_mut(1);
                shift(&mut tmp, p, &[(h / 2.0, &k1[0])]);
                self.field(xi, &tmp, &mut rest[0], &mut scratch);
                let (k2, rest) = rest.split_at_mut(1);
                shift(&mut tmp, p, &[(h, &k2[0])]);
                self.field(xi, &tmp, &mut rest[0], &mut scratch);
                for i in 0..n {
                    p[i] += h / 6.0 * (k0[0][i] + 2.0 * k1[0][i] + 2.0 * k2[0][i] + rest[0][i]);
                }
            }
            Integrator::Rk38 => {
                self.field(xi, p, &mut k[0], &mut scratch);
                let (k0, rest) = k.split_at_mut(1);
                shift(&mut tmp, p, &[(h / 3.0, &k0[0])]);
                self.field(xi, &tmp, &mut rest[0], &mut scratch);
                let (k1, rest) = rest.split_at_mut(1);
                shift(&mut tmp, p, &[(-h / 3.0, &k0[0]), (h, &k1[0])]);
                self.field(xi, &tmp, &mut rest[0], &mut scratch);
                let (k2, rest) = rest.split_at_mut(1);
                shift(&mut tmp, p, &[(h, &k0[0]), (-h, &k1[0]), (h, &k2[0])]);
                self.field(xi, &tmp, &mut rest[0], &mut scratch);
                for i in 0..n {
                    p[i] += h / 8.0 * (k0[0][i] + 3.0 * k1[0][i] + 3.0 * k2[0][i] + rest[0][i]);
                }
            }
        }
    }

    fn integrate(&self, y: &[f64], xi: &[f64], steps: usize, mut visit: impl FnMut(f64, &[f64])) -> Result<Vec<f64>> {
        self.check(y, xi)?;
        let mut p = y.to_vec();
        visit(0.0, &p);
        if xi.iter().all(|v| *v == 0.0) {
            return Ok(p);
        }
        let h = 1.0 / steps as f64;
        for s in 0..steps {
            self.step(xi, &mut p, h);
            let t = (s + 1) as f64 * h;
            if let Domain::Box { .. } = self.module.domain() {
                if !self.module.domain().contains(&p) {
                    return Err(Error::Escape { time: t, point: p });
                }
            }
            visit(t, &p);
        }
        if self.module.domain().is_torus() {
            for v in p.iter_mut() {
                *v = v.rem_euclid(2.0 * PI);
            }
        }
        Ok(p)
    }

    /// Time-1 flow of the frozen field `sum xi_i X_i` from `y`.
    pub fn target(&self, y: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        self.integrate(y, xi, self.steps, |_, _| {})
    }

    pub fn target_with_steps(&self, y: &[f64], xi: &[f64], steps: usize) -> Result<Vec<f64>> {
        if steps == 0 {
            return Err(Error::input("step count must be positive"));
        }
        self.integrate(y, xi, steps, |_, _| {})
    }

    /// `(t, point)` after every step.
    pub fn trajectory(&self, y: &[f64], xi: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
        let mut out = Vec::new();
        self.integrate(y, xi, self.steps, |t, p| out.push((t, p.to_vec())))?;
        Ok(out)
    }

    /// Central finite-difference Jacobian of `t` in `(y, xi)`, `n x (n + N)`.
    pub fn jacobian(&self, y: &[f64], xi: &[f64], fd: f64) -> Result<DMatrix<f64>> {
        let n = y.len();
        let big_n = xi.len();
        let mut jac = DMatrix::zeros(n, n + big_n);
        let unwrap = |a: f64, b: f64| -> f64 {
            if self.module.domain().is_torus() {
                (a - b + PI).rem_euclid(2.0 * PI) - PI
            } else {
                a - b
            }
        };
        for c in 0..(n + big_n) {
            let (mut yp, mut ym) = (y.to_vec(), y.to_vec());
            let (mut xp, mut xm) = (xi.to_vec(), xi.to_vec());
            if c < n {
                yp[c] += fd;
                ym[c] -= fd;
            } else {
                xp[c - n] += fd;
                xm[c - n] -= fd;
            }
            let tp = self.integrate(&yp, &xp, self.steps, |_, _| {})?;
            let tm = self.integrate(&ym, &xm, self.steps, |_, _| {})?;
            for r in 0..n {
                jac[(r, c)] = unwrap(tp[r], tm[r]) / (2.0 * fd);
            }
        }
        Ok(jac)
    }

    /// `t` is a submersion at every sample: its Jacobian has rank `dim M`.
    pub fn check_submersion(&self, samples: &[(Vec<f64>, Vec<f64>)], fd: f64) -> Result<SubmersionVerdict> {
        let n = self.module.dim();
        for (y, xi) in samples {
            let jac = self.jacobian(y, xi, fd)?;
            let sv = jac.singular_values();
            let top = sv.iter().copied().fold(0.0, f64::max);
            let rank = sv.iter().filter(|s| **s > SUBMERSION_RANK_TOL * top).count();
            if rank < n {
                return Ok(SubmersionVerdict::Witness {
                    y: y.clone(),
                    xi: xi.clone(),
                    rank,
                });
            }
        }
        Ok(SubmersionVerdict::Pass)
    }

    /// `dim U - (dim M + dim F_x) = N - dim F_x` at `(x, 0)`.
    pub fn minimality_gap(&self, x: &[f64], cap: u32) -> Result<usize> {
        self.module.minimality_gap(x, cap)
    }

    /// Orders `log2(d_k / d_{k+1})` from successive step doublings.
    pub fn convergence_order(&self, y: &[f64], xi: &[f64], steps: &[usize]) -> Result<ConvergenceReport> {
        if steps.len() < 3 {
            return Err(Error::input("convergence order needs at least three step counts"));
        }
        let results: Vec<Vec<f64>> = steps.iter().map(|&s| self.target_with_steps(y, xi, s)).collect::<Result<_>>()?;
        let differences: Vec<f64> = results
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect();
        let orders: Vec<f64> = differences
            .windows(2)
            .zip(steps.windows(3))
            .map(|(d, s)| (d[0] / d[1]).ln() / (s[1] as f64 / s[0] as f64).ln())
            .collect();
        let usable: Vec<f64> = orders
            .iter()
            .zip(differences.windows(2))
            .filter(|(_, d)| d[1] > 1e-13)
            .map(|(o, _)| *o)
            .collect();
        let order = if usable.is_empty() {
            f64::INFINITY
        } else {
            usable.iter().sum::<f64>() / usable.len() as f64
        };
        Ok(ConvergenceReport {
            steps: steps.to_vec(),
            differences,
            orders,
            order,
        })
    }
}
