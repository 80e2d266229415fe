//! Acceptance criteria 1 to 10, one verdict line each.

use std::f64::consts::FRAC_PI_2;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use leafcalc::bisubmersion::IdentityBisubmersion;
use leafcalc::calculus::{self, PdoElement};
use leafcalc::foliation::{Domain, FoliationModule};
use leafcalc::polysym::{ClosedFormSymbol, PolyhomSymbol, Symbol};
use leafcalc::quantize::{apply_symbol, quantize_dense, recover_principal_symbol, GridFunction, LinearOp, PeriodicGrid, SymbolOp};
use leafcalc::report::{CheckResult, Report};
use leafcalc::scenario;
use num_complex::Complex64;
use serde_json::Value;

const SO3: [[&str; 3]; 3] = [["0", "-z", "y"], ["z", "0", "-x"], ["-y", "x", "0"]];

struct Verdict {
    lines: Vec<String>,
    ok: bool,
}

impl Verdict {
    fn new() -> Verdict {
        Verdict {
            lines: Vec::new(),
            ok: true,
        }
    }

    fn check(&mut self, passed: bool, what: impl Into<String>) {
        let what = what.into();
        if !passed {
            self.ok = false;
            self.lines.push(format!("FAILED {what}"));
        } else {
            self.lines.push(what);
        }
    }

    fn scenario(&mut self, name: &str) -> (Report, Duration) {
        let start = Instant::now();
        let report = match scenario::bundled(name).and_then(|c| scenario::run(&c)) {
            Ok(r) => r,
            Err(e) => {
                self.check(false, format!("scenario {name}: {e}"));
                return (Report::new(name), start.elapsed());
            }
        };
        let elapsed = start.elapsed();
        for c in report.checks.iter().filter(|c| !c.passed) {
            self.check(
                false,
                format!("{name}/{}: {}", c.name, c.message.as_deref().unwrap_or("check failed")),
            );
        }
        self.check(
            report.passed() && !report.checks.is_empty(),
            format!("scenario {name} {:.2?}", elapsed),
        );
        (report, elapsed)
    }
}

fn real(c: Option<&CheckResult>, name: &str) -> f64 {
    c.and_then(|c| c.metric_value(name)).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

fn reals(c: Option<&CheckResult>, name: &str) -> Vec<f64> {
    c.and_then(|c| c.metric_value(name))
        .and_then(Value::as_array)
        .map(|v| v.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect())
        .unwrap_or_default()
}

fn so3(half_width: f64) -> leafcalc::Result<FoliationModule> {
    let gens: Vec<Vec<&str>> = SO3.iter().map(|g| g.to_vec()).collect();
    FoliationModule::parse(
        Domain::Box {
            lower: vec![-half_width; 3],
            upper: vec![half_width; 3],
        },
        &gens,
    )
}

fn criterion_1(v: &mut Verdict) -> leafcalc::Result<()> {
    let start = Instant::now();
    let m = so3(2.0)?;
    let (origin, e1) = ([0.0; 3], [1.0, 0.0, 0.0]);
    let fibers = (m.fiber_dimension(&origin, 2)?, m.fiber_dimension(&e1, 2)?);
    let leaves = (m.leaf_tangent_dim(&origin)?, m.leaf_tangent_dim(&e1)?);
    let cot = (m.cotangent_fiber(&origin, 2)?.fiber_dim, m.cotangent_fiber(&e1, 2)?.fiber_dim);
    v.check(fibers == (3, 2), format!("fiber dims {fibers:?}"));
    v.check(leaves == (0, 2), format!("leaf dims {leaves:?}"));
    v.check(cot == fibers, format!("cotangent fiber dims {cot:?}"));
    let (_, t) = v.scenario("so3-fibers");
    let total = start.elapsed();
    v.check(
        total < Duration::from_secs(5) && t < Duration::from_secs(5),
        format!("runtime {total:.2?} < 5s"),
    );
    Ok(())
}

fn naive_apply(a: &dyn Symbol, f: &[Complex64], grid: &PeriodicGrid) -> Vec<Complex64> {
    let n = grid.len();
    let coords: Vec<Vec<f64>> = (0..n).map(|p| grid.coords(p)).collect();
    let phase = |k: &[i64], x: &[f64]| k.iter().zip(x).map(|(k, x)| *k as f64 * (x - grid.origin())).sum::<f64>();
    let coef: Vec<Complex64> = (0..n)
        .map(|q| {
            let k = grid.frequency(q);
            coords
                .iter()
                .zip(f)
                .map(|(x, fx)| fx * Complex64::from_polar(1.0, -phase(&k, x)))
                .sum::<Complex64>()
                / n as f64
        })
        .collect();
    coords
        .iter()
        .map(|x| {
            (0..n)
                .map(|q| {
                    let k = grid.frequency(q);
                    let xi: Vec<f64> = k.iter().map(|&k| k as f64).collect();
                    a.value(x, &xi) * coef[q] * Complex64::from_polar(1.0, phase(&k, x))
                })
                .sum()
        })
        .collect()
}

fn criterion_2(v: &mut Verdict) -> leafcalc::Result<()> {
    let start = Instant::now();
    let (report, _) = v.scenario("oracle");
    let c = report.checks.first();
    let count = c.and_then(|c| c.metric_value("symbols")).and_then(Value::as_u64).unwrap_or(0);
    let diff = real(c, "max-diff");
    v.check(count >= 10, format!("{count} symbols"));
    v.check(diff < 1e-10, format!("apply vs dense max diff {diff:.2e} < 1e-10"));

    let mut worst = 0.0f64;
    let cases: [(i32, &str, usize); 3] = [
        (2, "(2 + sin(x))*xi^2", 1),
        (1, "cos(x)*xi", 1),
        (2, "(1 + cos(x)*sin(y)/2)*(xi1^2 + xi2^2)", 2),
    ];
    for (order, expr, dim) in cases {
        let a = ClosedFormSymbol::parse(order, expr, expr, dim, dim)?;
        let grid = PeriodicGrid::new(dim, 16)?;
        let f = GridFunction::from_fn(&grid, |x| {
            Complex64::new((2.0 * x[0]).cos(), x.iter().map(|t| (3.0 * t).sin()).sum::<f64>())
        });
        let fast = apply_symbol(&a, &f, &grid)?;
        let dense = quantize_dense(&a, &grid)?.apply(&f)?;
        let slow = naive_apply(&a, &f.values, &grid);
        for ((p, q), r) in fast.values.iter().zip(&dense.values).zip(&slow) {
            worst = worst.max((p - r).norm()).max((q - r).norm());
        }
    }
    v.check(worst < 1e-10, format!("direct-sum oracle diff {worst:.2e} < 1e-10"));
    let total = start.elapsed();
    v.check(total < Duration::from_secs(10), format!("runtime {total:.2?} < 10s"));
    Ok(())
}

fn criterion_3(v: &mut Verdict) -> leafcalc::Result<()> {
    let grid = PeriodicGrid::new(1, 256)?;
    let a = PolyhomSymbol::parse(1, &["(2 + sin(x))*i*xi"], 1, 1)?;
    let op = SymbolOp::new(Arc::new(a), grid)?;
    let target = Complex64::new(0.0, 3.0);
    let trace = recover_principal_symbol(&op, 1, &[FRAC_PI_2], &[1], &[8, 16, 32, 64])?;
    let rel: Vec<f64> = trace.errors(target).iter().map(|e| e / 3.0).collect();
    let last = rel[rel.len() - 1];
    v.check(last <= 0.1, format!("relative error {last:.2e} at tau=64 within 10%"));
    let floor = 1e-4;
    let decreasing = rel.windows(2).all(|w| w[1] < w[0] || w[0].max(w[1]) <= floor);
    let shown: Vec<String> = rel.iter().map(|e| format!("{e:.1e}")).collect();
    v.check(
        decreasing,
        format!("errors [{}] decreasing above floor {floor:e}", shown.join(", ")),
    );
    let (report, _) = v.scenario("recovery");
    let strict = report.checks.get(1).map(|c| c.passed).unwrap_or(false);
    v.check(strict, "strictly decreasing with a subprincipal term");
    Ok(())
}

fn criterion_4(v: &mut Verdict) -> leafcalc::Result<()> {
    let (report, _) = v.scenario("multiplicativity");
    let c = report.checks.first();
    let samples = c.and_then(|c| c.metric_value("samples")).and_then(Value::as_u64).unwrap_or(0);
    let err = real(c, "max-relative-error");
    v.check(samples >= 5, format!("{samples} samples"));
    v.check(err <= 0.1, format!("max relative error {err:.2e} within 10%"));
    Ok(())
}

fn plane_wave_ratio(op: &dyn LinearOp, k: i64) -> leafcalc::Result<Complex64> {
    let g = op.apply_plane_wave(&[k])?;
    let e = GridFunction::plane_wave(op.grid(), &[k]);
    Ok(g.inner(&e, op.grid()) / e.inner(&e, op.grid()))
}

fn criterion_5(v: &mut Verdict) -> leafcalc::Result<()> {
    let (report, _) = v.scenario("parametrix");
    let c = report.checks.first();
    let left = reals(c, "left-orders");
    let right = reals(c, "right-orders");
    let mut ok = left.len() >= 3 && right.len() >= 3;
    for n in 0..left.len().min(3) {
        let bound = -(n as f64 + 1.0) + 0.7;
        ok &= left[n] <= bound && right[n] <= bound;
    }
    v.check(ok, format!("residual orders left {left:.2?} right {right:.2?} within -(N+1)+0.7"));

    let grid = PeriodicGrid::new(1, 64)?;
    let a = ClosedFormSymbol::parse(2, "1 + xi^2", "xi^2", 1, 1)?;
    let p = PdoElement::quantize(&a, &grid)?;
    let q = calculus::parametrix(&p, 3, &[4, 8, 16])?.q;
    let mut worst = 0.0f64;
    for k in 2..=16 {
        let exact = 1.0 / (1.0 + (k * k) as f64);
        worst = worst.max((plane_wave_ratio(&q.op, k)? - exact).norm() / exact);
    }
    v.check(
        worst <= 0.02,
        format!("exact inverse oracle max relative error {worst:.2e} within 2% on xi in 2..=16"),
    );
    Ok(())
}

fn criterion_6(v: &mut Verdict) -> leafcalc::Result<()> {
    v.scenario("sqrt");
    let grid = PeriodicGrid::new(1, 64)?;
    let a = ClosedFormSymbol::parse(2, "1 + xi^2", "xi^2", 1, 1)?;
    let p = PdoElement::quantize(&a, &grid)?;
    let r = calculus::sqrt_op(&p, 3, &[4, 8, 16])?;
    let mut worst = 0.0f64;
    for k in 1..=16 {
        let exact = (1.0 + (k * k) as f64).sqrt();
        worst = worst.max((plane_wave_ratio(&r.q.op, k)? - exact).norm() / exact);
    }
    v.check(
        worst <= 0.03,
        format!("sqrt(1 + xi^2) oracle max relative error {worst:.2e} within 3%"),
    );
    let strict = r.orders.windows(2).all(|w| w[1] < w[0]);
    v.check(strict, format!("orders of P - Q^2 {:.2?} strictly decreasing", r.orders));
    let defect = r.q.op.hermitian_defect();
    v.check(defect < 1e-8, format!("Hermitian defect {defect:.2e} < 1e-8"));
    Ok(())
}

fn criterion_7(v: &mut Verdict) -> leafcalc::Result<()> {
    let (report, t) = v.scenario("laplacian");
    let so3 = report.checks.first();
    let size = so3.and_then(|c| c.metric_value("size")).and_then(Value::as_u64).unwrap_or(0);
    let defect = real(so3, "symmetry-defect");
    let min = real(so3, "min-eigenvalue");
    v.check(size == 1728, format!("dense size {size}"));
    v.check(defect < 1e-10, format!("symmetry defect {defect:.2e} < 1e-10"));
    v.check(min >= -1e-8, format!("min eigenvalue {min:.2e} >= -1e-8"));
    let flat = real(report.checks.get(1), "flat-spectrum-error");
    v.check(flat < 1e-10, format!("flat spectrum error {flat:.2e} < 1e-10"));

    let grid = PeriodicGrid::new(2, 8)?;
    let m = FoliationModule::parse(Domain::Torus { dim: 2 }, &[vec!["1", "0"], vec!["0", "1"]])?;
    let lap = calculus::laplacian(&m, &grid, None)?;
    let mut got = leafcalc::spectra::spectrum(&lap.element.op, grid.len())?;
    let mut want: Vec<f64> = (0..grid.len())
        .map(|p| grid.frequency(p).iter().map(|k| (k * k) as f64).sum())
        .collect();
    got.sort_by(f64::total_cmp);
    want.sort_by(f64::total_cmp);
    let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    v.check(err < 1e-10, format!("independent |k|^2 spectrum error {err:.2e} on G=8"));
    v.check(t < Duration::from_secs(120), format!("runtime {t:.2?} < 2min"));
    Ok(())
}

fn criterion_8(v: &mut Verdict) -> leafcalc::Result<()> {
    let (report, _) = v.scenario("extension");
    let a = ClosedFormSymbol::parse(0, "xi/sqrt(1 + xi^2)*(2 + sin(x))", "xi/sqrt(xi^2)*(2 + sin(x))", 1, 1)?;
    let scan = leafcalc::spectra::boundedness_scan(&a, "order 0", &[32, 64, 128])?;
    v.check(
        scan.max_ratio <= 1.25,
        format!("order-0 scan ratio {:.3} <= 1.25 over G in 32,64,128", scan.max_ratio),
    );
    let slope = real(report.checks.get(1), "slope");
    v.check(
        (slope + 2.0).abs() <= 0.2,
        format!("order -2 decay slope {slope:.3} in -2.0 +/- 0.2"),
    );
    let vanishing = report.checks.iter().find(|c| c.name.starts_with("flat-vanishing"));
    let zero = vanishing.map(|c| c.passed).unwrap_or(false);
    let order = real(vanishing, "order-estimate");
    v.check(zero, "vanishes exactly on cotangent samples");
    v.check(order > -0.5, format!("plain order estimate {order:.2} > -0.5"));
    Ok(())
}

fn criterion_9(v: &mut Verdict) -> leafcalc::Result<()> {
    let (report, _) = v.scenario("idempotent");
    let c = report.checks.first();
    let pair = real(c, "parametrix-defect");
    let random = real(c, "random-defect");
    v.check(pair < 1e-8, format!("parametrix pair defect {pair:.2e} < 1e-8"));
    v.check(random < 1e-10, format!("random pair defect {random:.2e} < 1e-10"));
    Ok(())
}

fn rotation(y: &[f64], xi: &[f64]) -> Vec<f64> {
    let theta = xi.iter().map(|t| t * t).sum::<f64>().sqrt();
    if theta == 0.0 {
        return y.to_vec();
    }
    let k: Vec<f64> = xi.iter().map(|t| t / theta).collect();
    let cross = [k[1] * y[2] - k[2] * y[1], k[2] * y[0] - k[0] * y[2], k[0] * y[1] - k[1] * y[0]];
    let dot: f64 = k.iter().zip(y).map(|(a, b)| a * b).sum();
    (0..3)
        .map(|i| y[i] * theta.cos() + cross[i] * theta.sin() + k[i] * dot * (1.0 - theta.cos()))
        .collect()
}

fn criterion_10(v: &mut Verdict) -> leafcalc::Result<()> {
    v.scenario("bisubmersion");
    let b = IdentityBisubmersion::new(so3(4.0)?).with_radius(1.0)?;
    let y = [0.3, -0.2, 0.5];
    let exact = b.target(&y, &[0.0; 3])? == y.to_vec();
    v.check(exact, "t(y, 0) = y exactly");
    let xi = [0.3, 0.2, -0.1];
    let order = b.convergence_order(&y, &xi, &[4, 8, 16, 32])?.order;
    v.check(order >= 3.5, format!("integrator order {order:.2} >= 3.5"));
    let t = b.target(&y, &xi)?;
    let drift = (t.iter().map(|a| a * a).sum::<f64>().sqrt() - y.iter().map(|a| a * a).sum::<f64>().sqrt()).abs();
    v.check(drift <= 1e-8, format!("radius drift {drift:.2e} <= 1e-8"));
    let err = t.iter().zip(rotation(&y, &xi)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    v.check(err <= 1e-8, format!("rotation oracle error {err:.2e}"));
    let gaps = (b.minimality_gap(&[0.0; 3], 2)?, b.minimality_gap(&[1.0, 0.0, 0.0], 2)?);
    v.check(gaps == (0, 1), format!("minimality gaps {gaps:?}"));
    Ok(())
}

type Criterion = fn(&mut Verdict) -> leafcalc::Result<()>;

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, Criterion); 10] = [
        ("rotation fiber structure", criterion_1),
        ("oracle equivalence", criterion_2),
        ("symbol recovery", criterion_3),
        ("principal multiplicativity", criterion_4),
        ("parametrix", criterion_5),
        ("square root", criterion_6),
        ("foliation Laplacian", criterion_7),
        ("extension diagnostics", criterion_8),
        ("idempotent identity", criterion_9),
        ("bi-submersion", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let mut v = Verdict::new();
        if let Err(e) = run(&mut v) {
            v.check(false, format!("error: {e}"));
        }
        if !v.ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<28} {}  {}",
            i + 1,
            name,
            if v.ok { "PASS" } else { "FAIL" },
            v.lines.join("; ")
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
