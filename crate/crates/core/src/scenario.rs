//! Scenario files and the pipeline runner behind the command line.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;

use crate::bisubmersion::IdentityBisubmersion;
use crate::calculus::{self, PdoElement};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::foliation::{Domain, FoliationModule, StructureResult};
use crate::polysym::{ClosedFormSymbol, Cutoff, PolyhomSymbol, Symbol};
use crate::quantize::{
    apply_symbol, axis_frequencies, estimate_order, quantize_dense, recover_principal_symbol, GridFunction, GridOperator, LinearOp,
    PeriodicGrid, SymbolOp,
};
use crate::report::{number, CheckResult, Report};
use crate::spectra::{self, FlatVanishingSymbol, WavePacket};

fn default_cap() -> u32 {
    2
}

/// A scenario file: foliation data plus the checks to run.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub domain: Option<Domain>,
    /// One list of component expressions per generator.
    #[serde(default)]
    pub generators: Vec<Vec<String>>,
    /// Degree cap for `I_x` and structure-function solves.
    #[serde(default = "default_cap")]
    pub cap: u32,
    /// Default grid size for stages that do not set one.
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub pipeline: Vec<StageConfig>,
    /// Grid size forced onto every stage.
    #[serde(skip)]
    pub grid_override: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Report file name inside the output directory.
    pub report: Option<String>,
    /// Plot-data file name inside the output directory.
    pub csv: Option<String>,
}

/// Symbol given either by homogeneous terms or by a closed form with its
/// principal part.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolConfig {
    #[serde(default)]
    pub label: Option<String>,
    pub order: i32,
    #[serde(default)]
    pub terms: Option<Vec<String>>,
    #[serde(default)]
    pub expr: Option<String>,
    #[serde(default)]
    pub principal: Option<String>,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub cutoff: Option<Cutoff>,
    /// Expected verdict of a boundedness scan.
    #[serde(default = "yes")]
    pub bounded: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl SymbolConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| match (&self.expr, &self.terms) {
            (Some(e), _) => e.clone(),
            (None, Some(t)) => t.join(" + "),
            _ => "?".into(),
        })
    }

    pub fn build(&self) -> Result<Arc<dyn Symbol>> {
        match (&self.expr, &self.terms) {
            (Some(expr), None) => {
                let principal = self
                    .principal
                    .as_deref()
                    .ok_or_else(|| Error::Config(format!("symbol `{expr}` needs a principal part")))?;
                Ok(Arc::new(ClosedFormSymbol::parse(self.order, expr, principal, self.dim, self.dim)?))
            }
            (None, Some(terms)) => {
                let refs: Vec<&str> = terms.iter().map(String::as_str).collect();
                let s = PolyhomSymbol::parse(self.order, &refs, self.dim, self.dim)?;
                Ok(Arc::new(match self.cutoff {
                    Some(c) => s.with_cutoff(c),
                    None => s,
                }))
            }
            _ => Err(Error::Config("a symbol needs exactly one of `expr` or `terms`".into())),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorConfig {
    Identity,
    /// Constant-coefficient multiplier `Op(full)` with principal part.
    Multiplier {
        order: i32,
        full: String,
        principal: String,
    },
    /// `-sum_j d_j (c d_j) + V`.
    Divergence {
        coefficient: String,
        #[serde(default = "unit_potential")]
        potential: String,
    },
    /// Foliation Laplacian plus `shift` times the identity.
    Laplacian {
        #[serde(default)]
        cutoff: Option<String>,
        #[serde(default)]
        shift: f64,
    },
    Symbol {
        symbol: SymbolConfig,
    },
}

fn unit_potential() -> String {
    "1".into()
}

/// Relative agreement with an exact multiplier on `k e_1`, `min <= k <= max`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleRange {
    pub min: i64,
    pub max: i64,
    pub rel_tol: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySample {
    pub x: Vec<f64>,
    pub direction: Vec<i64>,
}

fn default_band() -> Vec<i64> {
    vec![4, 8, 16, 32]
}

fn default_slack() -> f64 {
    0.7
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StageConfig {
    /// Involutivity: structure functions exist up to the degree cap.
    CheckFoliation {
        #[serde(default)]
        structure_cap: Option<u32>,
    },
    /// Fiber, leaf and cotangent dimensions at points.
    Fibers {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        fiber: Option<Vec<usize>>,
        #[serde(default)]
        leaf: Option<Vec<usize>>,
    },
    /// Identity bi-submersion: identity section, integrator order,
    /// conservation and minimality.
    Bisubmersion {
        #[serde(default = "default_radius")]
        radius: f64,
        points: Vec<Vec<f64>>,
        #[serde(default)]
        directions: Vec<Vec<f64>>,
        #[serde(default = "default_steps")]
        convergence_steps: Vec<usize>,
        #[serde(default = "default_min_order")]
        min_order: f64,
        #[serde(default)]
        conserve_norm: bool,
        #[serde(default = "default_conservation_tol")]
        conservation_tol: f64,
        #[serde(default)]
        gaps: Option<Vec<usize>>,
    },
    Laplacian {
        #[serde(default)]
        grid: Option<usize>,
        /// Foliation used instead of the scenario's own.
        #[serde(default)]
        foliation: Option<FoliationConfig>,
        #[serde(default)]
        cutoff: Option<String>,
        #[serde(default = "default_count")]
        count: usize,
        /// Compare the whole spectrum with `|k|^2`.
        #[serde(default)]
        flat_spectrum: bool,
    },
    Parametrix {
        operator: OperatorConfig,
        #[serde(default)]
        grid: Option<usize>,
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_band")]
        band: Vec<i64>,
        #[serde(default = "default_slack")]
        slack: f64,
        #[serde(default)]
        oracle: Option<OracleRange>,
    },
    Sqrt {
        operator: OperatorConfig,
        #[serde(default)]
        grid: Option<usize>,
        #[serde(default = "default_sqrt_iterations")]
        iterations: usize,
        #[serde(default = "default_band")]
        band: Vec<i64>,
        #[serde(default = "default_min_drop")]
        min_drop: f64,
        #[serde(default = "default_floor")]
        floor: f64,
        #[serde(default)]
        oracle: Option<OracleRange>,
    },
    Idempotent {
        operator: OperatorConfig,
        #[serde(default)]
        grid: Option<usize>,
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_trials")]
        random_trials: usize,
        #[serde(default = "default_random_size")]
        random_size: usize,
    },
    /// Norms of `Op(a)` under refinement.
    Scan {
        symbols: Vec<SymbolConfig>,
        #[serde(default = "default_scan_grids")]
        grids: Vec<usize>,
    },
    Decay {
        symbol: SymbolConfig,
        #[serde(default)]
        grid: Option<usize>,
        cutoffs: Vec<f64>,
        #[serde(default)]
        slope: Option<f64>,
        #[serde(default = "default_slope_tol")]
        slope_tol: f64,
        #[serde(default)]
        max_slope: Option<f64>,
    },
    /// Matrix-free application against the dense matrix.
    Oracle {
        symbols: Vec<SymbolConfig>,
        #[serde(default)]
        grid: Option<usize>,
        #[serde(default = "default_oracle_tol")]
        tol: f64,
    },
    Recovery {
        symbol: SymbolConfig,
        #[serde(default)]
        grid: Option<usize>,
        x: Vec<f64>,
        direction: Vec<i64>,
        taus: Vec<i64>,
        expected: [f64; 2],
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
        /// Relative errors below this count as converged.
        #[serde(default = "default_recovery_floor")]
        floor: f64,
    },
    Multiplicativity {
        left: SymbolConfig,
        right: SymbolConfig,
        #[serde(default)]
        grid: Option<usize>,
        samples: Vec<RecoverySample>,
        taus: Vec<i64>,
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
    },
    /// The flat-vanishing order 0 symbol on the SO(3) cotangent set.
    FlatVanishing {
        #[serde(default)]
        grid: Option<usize>,
        points: Vec<Vec<f64>>,
        #[serde(default = "default_vanishing_ks")]
        ks: Vec<i64>,
        #[serde(default = "default_vanishing_floor")]
        min_order: f64,
        #[serde(default)]
        packets: Vec<PacketConfig>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoliationConfig {
    pub domain: Domain,
    pub generators: Vec<Vec<String>>,
}

impl FoliationConfig {
    pub fn module(&self) -> Result<FoliationModule> {
        let gens: Vec<Vec<&str>> = self.generators.iter().map(|g| g.iter().map(String::as_str).collect()).collect();
        FoliationModule::parse(self.domain.clone(), &gens)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub center: Vec<f64>,
    pub frequency: Vec<i64>,
    /// Gaussian width per axis; zero marks a flat axis.
    pub widths: Vec<f64>,
}

fn default_radius() -> f64 {
    crate::bisubmersion::DEFAULT_RADIUS
}
fn default_steps() -> Vec<usize> {
    vec![4, 8, 16, 32]
}
fn default_min_order() -> f64 {
    3.5
}
fn default_conservation_tol() -> f64 {
    1e-8
}
fn default_count() -> usize {
    10
}
fn default_iterations() -> usize {
    2
}
fn default_sqrt_iterations() -> usize {
    3
}
fn default_min_drop() -> f64 {
    0.8
}
fn default_floor() -> f64 {
    calculus::DEFAULT_REGULARIZING_FLOOR
}
fn default_trials() -> usize {
    5
}
fn default_random_size() -> usize {
    16
}
fn default_scan_grids() -> Vec<usize> {
    vec![32, 64, 128]
}
fn default_slope_tol() -> f64 {
    0.2
}
fn default_oracle_tol() -> f64 {
    1e-10
}
fn default_rel_tol() -> f64 {
    0.1
}
fn default_recovery_floor() -> f64 {
    1e-4
}
fn default_vanishing_ks() -> Vec<i64> {
    vec![2, 4, 8]
}
fn default_vanishing_floor() -> f64 {
    -0.5
}

/// Symmetry defect accepted for Laplacian matrices.
pub const LAPLACIAN_SYMMETRY_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted for Laplacian matrices.
pub const LAPLACIAN_PSD_TOL: f64 = -1e-8;
/// Accuracy of a flat spectrum against `|k|^2`.
pub const FLAT_SPECTRUM_TOL: f64 = 1e-10;
/// Defect accepted for parametrix pairs in the idempotent check.
pub const IDEMPOTENT_PAIR_TOL: f64 = 1e-8;
/// Defect accepted for random pairs in the idempotent check.
pub const IDEMPOTENT_RANDOM_TOL: f64 = 1e-10;
/// Subcommands accepted by `run_command`.
pub const COMMANDS: [&str; 7] = ["check-foliation", "fibers", "laplacian", "parametrix", "sqrt", "scan", "report"];

impl StageConfig {
    pub fn name(&self) -> &'static str {
        match self {
            StageConfig::CheckFoliation { .. } => "check-foliation",
            StageConfig::Fibers { .. } => "fibers",
            StageConfig::Bisubmersion { .. } => "bisubmersion",
            StageConfig::Laplacian { .. } => "laplacian",
            StageConfig::Parametrix { .. } => "parametrix",
            StageConfig::Sqrt { .. } => "sqrt",
            StageConfig::Idempotent { .. } => "idempotent",
            StageConfig::Scan { .. } => "scan",
            StageConfig::Decay { .. } => "decay",
            StageConfig::Oracle { .. } => "oracle",
            StageConfig::Recovery { .. } => "recovery",
            StageConfig::Multiplicativity { .. } => "multiplicativity",
            StageConfig::FlatVanishing { .. } => "flat-vanishing",
        }
    }

    /// Subcommand that runs this stage (besides `report`).
    pub fn command(&self) -> &'static str {
        match self {
            StageConfig::CheckFoliation { .. } | StageConfig::Bisubmersion { .. } => "check-foliation",
            StageConfig::Fibers { .. } => "fibers",
            StageConfig::Laplacian { .. } => "laplacian",
            StageConfig::Parametrix { .. } | StageConfig::Idempotent { .. } => "parametrix",
            StageConfig::Sqrt { .. } => "sqrt",
            _ => "scan",
        }
    }

    fn needs_foliation(&self) -> bool {
        match self {
            StageConfig::Laplacian { foliation, .. } => foliation.is_none(),
            StageConfig::CheckFoliation { .. }
            | StageConfig::Fibers { .. }
            | StageConfig::Bisubmersion { .. }
            | StageConfig::FlatVanishing { .. } => true,
            StageConfig::Parametrix { operator, .. } | StageConfig::Sqrt { operator, .. } | StageConfig::Idempotent { operator, .. } => {
                matches!(operator, OperatorConfig::Laplacian { .. })
            }
            _ => false,
        }
    }
}

fn toml_error(text: &str, e: toml::de::Error) -> Error {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::Parse {
        column,
        message: format!("line {line}: {}", e.message()),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<ScenarioConfig> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ScenarioConfig::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if let Some(d) = &self.domain {
            d.validate()?;
            for (i, g) in self.generators.iter().enumerate() {
                if g.len() != d.dim() {
                    return Err(Error::Config(format!(
                        "generators[{i}] has {} components but the domain has dimension {}",
                        g.len(),
                        d.dim()
                    )));
                }
            }
        } else if !self.generators.is_empty() {
            return Err(Error::Config("generators need a domain".into()));
        }
        for stage in &self.pipeline {
            if stage.needs_foliation() && (self.domain.is_none() || self.generators.is_empty()) {
                return Err(Error::Config(format!("stage `{}` needs a domain and generators", stage.name())));
            }
        }
        Ok(())
    }

    pub fn module(&self) -> Result<FoliationModule> {
        let domain = self.domain.clone().ok_or_else(|| Error::Config("no domain".into()))?;
        let gens: Vec<Vec<&str>> = self.generators.iter().map(|g| g.iter().map(String::as_str).collect()).collect();
        FoliationModule::parse(domain, &gens)
    }

    fn grid_size(&self, stage: Option<usize>, fallback: usize) -> usize {
        self.grid_override.or(stage).or(self.grid).unwrap_or(fallback)
    }

    fn grid(&self, points: usize) -> Result<PeriodicGrid> {
        grid_for(self.domain.as_ref(), points)
    }
}

/// Grid matching a domain: a box starts its grid at its lower corner.
fn grid_for(domain: Option<&Domain>, points: usize) -> Result<PeriodicGrid> {
    let grid = PeriodicGrid::new(domain.map_or(1, Domain::dim), points)?;
    match domain {
        Some(Domain::Box { lower, upper }) => {
            if lower.iter().any(|l| *l != lower[0]) {
                return Err(Error::Config("a gridded box needs equal lower corners".into()));
            }
            if lower.iter().zip(upper).any(|(l, u)| u - l > 2.0 * PI + 1e-12) {
                return Err(Error::Config("a gridded box must fit in one period".into()));
            }
            Ok(grid.with_origin(lower[0]))
        }
        _ => Ok(grid),
    }
}

/// Names of the bundled scenarios with their sources.
pub const BUNDLED: &[(&str, &str)] = &[
    ("so3", include_str!("../scenarios/so3.toml")),
    ("flat-torus", include_str!("../scenarios/flat-torus.toml")),
    ("empty", include_str!("../scenarios/empty.toml")),
    ("so3-fibers", include_str!("../scenarios/so3-fibers.toml")),
    ("oracle", include_str!("../scenarios/oracle.toml")),
    ("recovery", include_str!("../scenarios/recovery.toml")),
    ("multiplicativity", include_str!("../scenarios/multiplicativity.toml")),
    ("parametrix", include_str!("../scenarios/parametrix.toml")),
    ("sqrt", include_str!("../scenarios/sqrt.toml")),
    ("laplacian", include_str!("../scenarios/laplacian.toml")),
    ("extension", include_str!("../scenarios/extension.toml")),
    ("idempotent", include_str!("../scenarios/idempotent.toml")),
    ("bisubmersion", include_str!("../scenarios/bisubmersion.toml")),
];

pub fn bundled(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("no bundled scenario `{name}`")))?;
    ScenarioConfig::parse(text)
}

/// Runs every stage.
pub fn run(config: &ScenarioConfig) -> Result<Report> {
    run_command(config, "report")
}

/// Runs the stages selected by a subcommand; stage failures are recorded as
/// failing checks.
pub fn run_command(config: &ScenarioConfig, command: &str) -> Result<Report> {
    if !COMMANDS.contains(&command) {
        return Err(Error::Config(format!("unknown command `{command}`")));
    }
    let module = if config.pipeline.iter().any(StageConfig::needs_foliation) {
        Some(config.module()?)
    } else {
        None
    };
    let mut report = Report::new(&config.id);
    let mut seen: Vec<&str> = Vec::new();
    for stage in &config.pipeline {
        if command != "report" && stage.command() != command {
            continue;
        }
        let base = stage.name();
        let n = seen.iter().filter(|s| **s == base).count();
        seen.push(base);
        let name = if n == 0 { base.to_string() } else { format!("{base}-{}", n + 1) };
        let runner = Runner {
            config,
            module: module.as_ref(),
        };
        let check = match runner.stage(stage, &name) {
            Ok(c) => c,
            Err(e) => CheckResult::failed(&name, &e.in_stage(&name)),
        };
        report.checks.push(check);
    }
    Ok(report)
}

struct Runner<'a> {
    config: &'a ScenarioConfig,
    module: Option<&'a FoliationModule>,
}

fn uints(v: &[usize]) -> Value {
    Value::Array(v.iter().map(|n| Value::from(*n as u64)).collect())
}

fn rel_err(got: Complex64, want: Complex64) -> f64 {
    (got - want).norm() / want.norm().max(f64::MIN_POSITIVE)
}

impl Runner<'_> {
    fn module(&self) -> Result<&FoliationModule> {
        self.module.ok_or_else(|| Error::Config("no foliation".into()))
    }

    fn stage(&self, stage: &StageConfig, name: &str) -> Result<CheckResult> {
        let mut c = CheckResult::new(name);
        match stage {
            StageConfig::CheckFoliation { structure_cap } => self.check_foliation(&mut c, structure_cap.unwrap_or(self.config.cap))?,
            StageConfig::Fibers { points, fiber, leaf } => self.fibers(&mut c, points, fiber.as_deref(), leaf.as_deref())?,
            StageConfig::Bisubmersion {
                radius,
                points,
                directions,
                convergence_steps,
                min_order,
                conserve_norm,
                conservation_tol,
                gaps,
            } => {
                let b = IdentityBisubmersion::new(self.module()?.clone()).with_radius(*radius)?;
                let mut exact = true;
                for y in points {
                    exact &= b.target(y, &vec![0.0; b.module().len()])? == *y;
                }
                c.require("identity-section", exact);
                let mut orders = Vec::new();
                let mut drift: f64 = 0.0;
                for y in points {
                    for xi in directions {
                        let r = b.convergence_order(y, xi, convergence_steps)?;
                        c.series(
                            &format!("differences y={y:?} xi={xi:?}"),
                            "steps",
                            convergence_steps[1..]
                                .iter()
                                .map(|s| *s as f64)
                                .zip(r.differences.iter().copied())
                                .collect(),
                        );
                        orders.push(r.order);
                        if *conserve_norm {
                            let t = b.target(y, xi)?;
                            let n = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
                            drift = drift.max((n(&t) - n(y)).abs());
                        }
                    }
                }
                c.reals("orders", &orders);
                let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
                c.require("integrator-order", orders.is_empty() || min >= *min_order);
                if *conserve_norm {
                    c.real("norm-drift", drift);
                    c.require("conservation", drift <= *conservation_tol);
                }
                let samples: Vec<(Vec<f64>, Vec<f64>)> = points.iter().map(|y| (y.clone(), vec![0.0; b.module().len()])).collect();
                let verdict = b.check_submersion(&samples, 1e-6)?;
                c.require("submersion", verdict.passed());
                let got: Vec<usize> = points.iter().map(|y| b.minimality_gap(y, self.config.cap)).collect::<Result<_>>()?;
                c.metric("minimality-gaps", uints(&got));
                if let Some(want) = gaps {
                    c.require("minimality", &got == want);
                }
            }
            StageConfig::Laplacian {
                grid,
                foliation,
                cutoff,
                count,
                flat_spectrum,
            } => {
                let points = self.config.grid_size(*grid, 16);
                match foliation {
                    Some(f) => {
                        let module = f.module()?;
                        let g = grid_for(Some(&f.domain), points)?;
                        laplacian_check(&mut c, &module, &g, cutoff.as_deref(), *count, *flat_spectrum)?
                    }
                    None => laplacian_check(
                        &mut c,
                        self.module()?,
                        &self.config.grid(points)?,
                        cutoff.as_deref(),
                        *count,
                        *flat_spectrum,
                    )?,
                }
            }
            StageConfig::Parametrix {
                operator,
                grid,
                iterations,
                band,
                slack,
                oracle,
            } => {
                let g = self.config.grid(self.config.grid_size(*grid, 64))?;
                let (p, exact) = self.operator(operator, &g)?;
                let r = calculus::parametrix(&p, *iterations, band)?;
                let mut ok = true;
                for row in &r.orders {
                    let bound = -(row.iteration as f64 + 1.0) + slack;
                    ok &= row.left <= bound && row.right <= bound;
                }
                c.series("left", "iteration", r.orders.iter().map(|o| (o.iteration as f64, o.left)).collect());
                c.series(
                    "right",
                    "iteration",
                    r.orders.iter().map(|o| (o.iteration as f64, o.right)).collect(),
                );
                c.reals("left-orders", &r.orders.iter().map(|o| o.left).collect::<Vec<_>>());
                c.reals("right-orders", &r.orders.iter().map(|o| o.right).collect::<Vec<_>>());
                c.require("residual-orders", ok);
                if let Some(range) = oracle {
                    let f = exact.ok_or_else(|| Error::Config("the inverse oracle needs a multiplier operator".into()))?;
                    let worst = oracle_error(&r.q.op, range, |k| Complex64::new(1.0, 0.0) / f.value(&origin(&g), &k))?;
                    c.real("oracle-max-rel-error", worst);
                    c.require("oracle", worst <= range.rel_tol);
                }
            }
            StageConfig::Sqrt {
                operator,
                grid,
                iterations,
                band,
                min_drop,
                floor,
                oracle,
            } => {
                let g = self.config.grid(self.config.grid_size(*grid, 64))?;
                let (p, exact) = self.operator(operator, &g)?;
                let r = calculus::sqrt_op(&p, *iterations, band)?;
                c.series(
                    "residual-order",
                    "iteration",
                    r.orders.iter().enumerate().map(|(i, o)| (i as f64, *o)).collect(),
                );
                let mut ok = true;
                for w in r.orders.windows(2) {
                    if w[0] <= *floor {
                        break;
                    }
                    ok &= w[1] <= w[0] - min_drop;
                }
                c.require("residual-decrease", ok);
                let defect = r.q.op.hermitian_defect();
                c.real("hermitian-defect", defect);
                c.require("self-adjoint", defect < calculus::SELF_ADJOINT_TOL);
                let bound = p.order as f64 + p.order as f64 / 2.0 - 1.0 + 0.5;
                c.real("commutator-order", r.commutator_order);
                c.require("commutator", r.commutator_order <= bound);
                if let Some(range) = oracle {
                    let f = exact.ok_or_else(|| Error::Config("the square-root oracle needs a multiplier operator".into()))?;
                    let worst = oracle_error(&r.q.op, range, |k| f.value(&origin(&g), &k).sqrt())?;
                    c.real("oracle-max-rel-error", worst);
                    c.require("oracle", worst <= range.rel_tol);
                }
            }
            StageConfig::Idempotent {
                operator,
                grid,
                iterations,
                random_trials,
                random_size,
            } => {
                let g = self.config.grid(self.config.grid_size(*grid, 64))?;
                let (p, _) = self.operator(operator, &g)?;
                let q = calculus::parametrix(&p, *iterations, &[2, 4])?.q;
                let defect = calculus::idempotent_check(&p.op, &q.op)?;
                c.real("parametrix-defect", defect);
                c.require("parametrix-pair", defect < IDEMPOTENT_PAIR_TOL);
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                let rg = PeriodicGrid::new(1, *random_size)?;
                let mut worst: f64 = 0.0;
                for _ in 0..*random_trials {
                    let mut sample = || {
                        let m = DMatrix::from_fn(rg.len(), rg.len(), |_, _| {
                            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                        });
                        GridOperator::new(rg.clone(), m)
                    };
                    let (a, b) = (sample()?, sample()?);
                    worst = worst.max(calculus::idempotent_check(&a, &b)?);
                }
                c.real("random-defect", worst);
                c.require("random-pairs", worst < IDEMPOTENT_RANDOM_TOL);
            }
            StageConfig::Scan { symbols, grids } => {
                let grids: Vec<usize> = match self.config.grid_override {
                    Some(g) => vec![g / 2, g, 2 * g],
                    None => grids.clone(),
                };
                for s in symbols {
                    let label = s.label();
                    let r = spectra::boundedness_scan(s.build()?.as_ref(), &label, &grids)?;
                    c.series(
                        &label,
                        "grid",
                        grids.iter().map(|g| *g as f64).zip(r.norms.iter().copied()).collect(),
                    );
                    c.real(&format!("max-ratio {label}"), r.max_ratio);
                    c.require(&format!("bounded={} {label}", s.bounded), r.passed == s.bounded);
                }
            }
            StageConfig::Decay {
                symbol,
                grid,
                cutoffs,
                slope,
                slope_tol,
                max_slope,
            } => {
                let g = PeriodicGrid::new(symbol.dim, self.config.grid_size(*grid, 128))?;
                let r = spectra::negative_order_decay(symbol.build()?.as_ref(), &g, cutoffs)?;
                c.series(
                    &symbol.label(),
                    "cutoff",
                    r.cutoffs.iter().copied().zip(r.norms.iter().copied()).collect(),
                );
                c.real("slope", r.slope);
                c.require("order-bound", r.passed);
                if let Some(s) = slope {
                    c.require("slope-target", (r.slope - s).abs() <= *slope_tol);
                }
                if let Some(m) = max_slope {
                    c.require("slope-ceiling", r.slope <= *m);
                }
            }
            StageConfig::Oracle { symbols, grid, tol } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                let mut worst: f64 = 0.0;
                for s in symbols {
                    let a = s.build()?;
                    let g = PeriodicGrid::new(s.dim, self.config.grid_size(*grid, 16))?;
                    let f = GridFunction::new(
                        (0..g.len())
                            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                            .collect(),
                    );
                    let fast = apply_symbol(a.as_ref(), &f, &g)?;
                    let dense = quantize_dense(a.as_ref(), &g)?.apply(&f)?;
                    let d = fast.sub(&dense).max_norm();
                    c.real(&format!("diff {}", s.label()), d);
                    worst = worst.max(d);
                }
                c.metric("symbols", Value::from(symbols.len() as u64));
                c.real("max-diff", worst);
                c.require("agreement", worst < *tol);
            }
            StageConfig::Recovery {
                symbol,
                grid,
                x,
                direction,
                taus,
                expected,
                rel_tol,
                floor,
            } => {
                let g = PeriodicGrid::new(symbol.dim, self.config.grid_size(*grid, 256))?;
                let op = SymbolOp::new(symbol.build()?, g)?;
                let t = recover_principal_symbol(&op, symbol.order, x, direction, taus)?;
                let want = Complex64::new(expected[0], expected[1]);
                let errors: Vec<f64> = t.values.iter().map(|v| rel_err(*v, want)).collect();
                c.series(
                    "relative-error",
                    "tau",
                    taus.iter().map(|t| *t as f64).zip(errors.iter().copied()).collect(),
                );
                let last = *errors.last().ok_or_else(|| Error::input("no taus"))?;
                c.real("final-relative-error", last);
                c.metric(
                    "final-value",
                    Value::from(vec![
                        number(t.values[t.values.len() - 1].re),
                        number(t.values[t.values.len() - 1].im),
                    ]),
                );
                c.require("accuracy", last <= *rel_tol);
                c.require("decreasing", errors.windows(2).all(|w| w[1] < w[0] || w[0].max(w[1]) <= *floor));
            }
            StageConfig::Multiplicativity {
                left,
                right,
                grid,
                samples,
                taus,
                rel_tol,
            } => {
                let dim = left.dim;
                let g = PeriodicGrid::new(dim, self.config.grid_size(*grid, 256))?;
                let (a, b) = (left.build()?, right.build()?);
                let ab = calculus::compose(&PdoElement::quantize(a.as_ref(), &g)?, &PdoElement::quantize(b.as_ref(), &g)?)?;
                let m = left.order + right.order;
                let mut worst: f64 = 0.0;
                for s in samples {
                    let t = recover_principal_symbol(&ab.op, m, &s.x, &s.direction, taus)?;
                    let dir: Vec<f64> = s.direction.iter().map(|v| *v as f64).collect();
                    let want = a.principal().leading().eval(&s.x, &dir) * b.principal().leading().eval(&s.x, &dir);
                    worst = worst.max(rel_err(t.values[t.values.len() - 1], want));
                }
                c.metric("samples", Value::from(samples.len() as u64));
                c.real("max-relative-error", worst);
                c.require("multiplicativity", worst <= *rel_tol);
            }
            StageConfig::FlatVanishing {
                grid,
                points,
                ks,
                min_order,
                packets,
            } => {
                let module = self.module()?;
                let a = FlatVanishingSymbol::new(module.dim())?;
                let mut zero = true;
                let mut count = 0;
                for x in points {
                    for xi in module.base_cotangent_samples(x, self.config.cap)? {
                        zero &= a.value(x, &xi) == Complex64::new(0.0, 0.0);
                        count += 1;
                    }
                }
                c.metric("cotangent-samples", Value::from(count as u64));
                c.require("vanishes-on-cotangent-set", zero && count > 0);
                let g = self.config.grid(self.config.grid_size(*grid, 32))?;
                let op = SymbolOp::new(Arc::new(a.clone()), g.clone())?;
                let order = estimate_order(&op, &axis_frequencies(g.dim(), ks))?;
                c.real("order-estimate", order);
                c.require("not-lower-order", order > *min_order);
                if !packets.is_empty() {
                    let packets: Vec<WavePacket> = packets
                        .iter()
                        .map(|p| WavePacket {
                            center: p.center.clone(),
                            frequency: p.frequency.clone(),
                            widths: p.widths.iter().map(|w| (*w > 0.0).then_some(*w)).collect(),
                        })
                        .collect();
                    let r = spectra::extension_report(&a, module, &g, &packets)?;
                    for (i, p) in r.probes.iter().enumerate() {
                        let tag = if p.on_cotangent_set { "on" } else { "off" };
                        c.reals(&format!("packet-{i} {tag} norm,symbol"), &[p.norm, p.symbol_value]);
                    }
                    c.real("max-norm-on-cotangent-set", r.max_on);
                    c.real("max-deviation-off", r.max_off_deviation);
                    c.require("extension", r.passed);
                }
            }
        }
        Ok(c)
    }

    fn check_foliation(&self, c: &mut CheckResult, cap: u32) -> Result<()> {
        let module = self.module()?;
        match module.solve_structure_functions(cap)? {
            StructureResult::Closed(table) => {
                c.require("verified", module.verify_structure(&table)?);
                c.require("involutive", true);
                let nonzero = table.f.iter().flatten().flatten().filter(|f| !f.is_zero()).count();
                c.metric("nonzero-structure-functions", Value::from(nonzero as u64));
            }
            StructureResult::Inconclusive { i, j, witness, cap } => {
                c.require("involutive", false);
                c.metric("witness", Value::String(format!("[X{i}, X{j}] = {witness} (cap {cap})")));
            }
        }
        Ok(())
    }

    fn fibers(&self, c: &mut CheckResult, points: &[Vec<f64>], fiber: Option<&[usize]>, leaf: Option<&[usize]>) -> Result<()> {
        let module = self.module()?;
        let cap = self.config.cap;
        let mut fibers = Vec::new();
        let mut leaves = Vec::new();
        let mut consistent = true;
        for x in points {
            let f = module.fiber_dimension(x, cap)?;
            consistent &= module.cotangent_fiber(x, cap)?.fiber_dim == f;
            fibers.push(f);
            leaves.push(module.leaf_tangent_dim(x)?);
        }
        c.metric("fiber-dimensions", uints(&fibers));
        c.metric("leaf-dimensions", uints(&leaves));
        c.require("cotangent-consistent", consistent);
        c.require("semicontinuity", fibers.iter().zip(&leaves).all(|(f, l)| l <= f));
        if let Some(want) = fiber {
            c.require("fiber-expected", fibers == want);
        }
        if let Some(want) = leaf {
            c.require("leaf-expected", leaves == want);
        }
        Ok(())
    }

    fn operator(&self, spec: &OperatorConfig, g: &PeriodicGrid) -> Result<(PdoElement, Option<ClosedFormSymbol>)> {
        let d = g.dim();
        Ok(match spec {
            OperatorConfig::Identity => (PdoElement::identity(g)?, None),
            OperatorConfig::Multiplier { order, full, principal } => {
                let f = ClosedFormSymbol::parse(*order, full, principal, d, d)?;
                if f.depends_on_x() {
                    return Err(Error::Config("a multiplier may not depend on x".into()));
                }
                (PdoElement::quantize(&f, g)?, Some(f))
            }
            OperatorConfig::Divergence { coefficient, potential } => (
                calculus::divergence_form_op(&Expr::parse(coefficient)?, &Expr::parse(potential)?, g)?,
                None,
            ),
            OperatorConfig::Laplacian { cutoff, shift } => {
                let chi = cutoff.as_deref().map(Expr::parse).transpose()?;
                let lap = calculus::laplacian(self.module()?, g, chi.as_ref())?;
                let shifted = lap.element.op.add(&GridOperator::identity(g).scale(Complex64::new(*shift, 0.0)))?;
                (PdoElement::new(lap.element.symbol, shifted), None)
            }
            OperatorConfig::Symbol { symbol } => {
                let s = symbol.build()?;
                (PdoElement::quantize(s.as_ref(), g)?, None)
            }
        })
    }
}

fn laplacian_check(
    c: &mut CheckResult,
    module: &FoliationModule,
    g: &PeriodicGrid,
    cutoff: Option<&str>,
    count: usize,
    flat: bool,
) -> Result<()> {
    let chi = cutoff.map(Expr::parse).transpose()?;
    let lap = calculus::laplacian(module, g, chi.as_ref())?;
    let defect = lap.element.op.hermitian_defect();
    c.metric("size", Value::from(g.len() as u64));
    c.real("symmetry-defect", defect);
    c.require("symmetric", defect < LAPLACIAN_SYMMETRY_TOL);
    let all = spectra::spectrum(&lap.element.op, g.len())?;
    c.reals("lowest-eigenvalues", &all[..count.min(all.len())]);
    c.real("min-eigenvalue", all[0]);
    c.require("positive-semidefinite", all[0] >= LAPLACIAN_PSD_TOL);
    if flat {
        let mut exact: Vec<f64> = (0..g.len()).map(|f| g.frequency(f).iter().map(|k| (k * k) as f64).sum()).collect();
        exact.sort_by(f64::total_cmp);
        let err = all.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        c.real("flat-spectrum-error", err);
        c.require("flat-spectrum", err < FLAT_SPECTRUM_TOL);
    }
    Ok(())
}

fn origin(g: &PeriodicGrid) -> Vec<f64> {
    vec![g.origin(); g.dim()]
}

/// Largest relative plane-wave error of `op` against an exact multiplier.
fn oracle_error(op: &GridOperator, range: &OracleRange, exact: impl Fn(Vec<f64>) -> Complex64) -> Result<f64> {
    let g = op.grid();
    let mut worst: f64 = 0.0;
    for k in range.min..=range.max {
        let mut kv = vec![0i64; g.dim()];
        kv[0] = k;
        let w = GridFunction::plane_wave(g, &kv);
        let out = op.apply(&w)?;
        let got = out.values[0] / w.values[0];
        let want = exact(kv.iter().map(|v| *v as f64).collect());
        worst = worst.max(rel_err(got, want));
    }
    Ok(worst)
}
