//! Experiment configuration.
//!
//! The file is a flat list of `section.key = value` lines (valid TOML, read
//! with the `toml` crate). Every key is optional; missing keys take the value
//! of the selected profile. Example:
//!
//! ```text
//! profile = "desk"
//! spec.alphas = [0.55, 0.65, 0.75, 0.85]
//! spec.modes = 100
//! bank.dir = "banks"
//! query.sigmas = [1.0]
//! query.field = "sine"
//! output.dir = "out"
//! ```
//!
//! Sections and keys:
//!
//! | key | meaning | desk | paper |
//! |-----|---------|------|-------|
//! | `profile` | `desk` or `paper` | | |
//! | `spec.alphas` | stability indices, one bank each | 0.55, 0.65, 0.75, 0.85 | same |
//! | `spec.gamma_bar` | subordinator scale | 1 | 1 |
//! | `spec.modes` | dimension `N`, eigenvalues `k^2` | 100 | 100 |
//! | `spec.eigenvalues` | explicit diagonal of `-A` (overrides `k^2`) | | |
//! | `spec.noise_modes` | diagonal of `sqrt(Q)` before the scale | all 1 | all 1 |
//! | `spec.horizon` | `T` | 1 | 1 |
//! | `bank.m_sub` / `bank.m_ou` | clock paths / convolution records | 10^4 | 10^5 |
//! | `bank.delta_fine` / `bank.delta_coarse` | bank grids | 1e-3 / 1e-2 | 1e-4 / 1e-2 |
//! | `bank.seed` | base seed of all streams | 2024 | 2024 |
//! | `bank.precision` | `f64` or `f32` checkpoints | f64 | f64 |
//! | `bank.clock` | `stable` or `deterministic` | stable | stable |
//! | `bank.dir` | directory of bank files | `banks` | `banks` |
//! | `query.s` / `query.t` | start / final time | 0 / 1 | 0 / 1 |
//! | `query.x` | starting point `x * e` | 1 | 1 |
//! | `query.radius` | indicator radius `R` | 1 | 1 |
//! | `query.sigmas` | noise scales | 1 | 1 |
//! | `query.field` | `zero`, `sine` or `cubic` | sine | sine |
//! | `query.cubic_b0` / `query.cubic_y_bar` / `query.cubic_a` | cubic parameters (`y_bar` is a multiple of `e`) | 2 / 2 / 1e4 | same |
//! | `query.shift` | time-shift on or off | true | true |
//! | `query.times` | figure time grid | 0.1, 0.2, ..., 1 | same |
//! | `query.starts` / `query.points` / `query.fields` | sweep axes | `[s]` / `[x]` / `[field]` | same |
//! | `estimator.mesh` | first-iterate mesh | 1e-2 | 1e-2 |
//! | `estimator.n_pairs` | first-iterate pairs | `m_ou` | `m_ou` |
//! | `estimator.order2_mesh` / `estimator.n_tuples` | second iterate | 2e-2 / 5000 | 1e-2 / `m_ou` |
//! | `estimator.shift_step` | grid of the time-shift | 1e-4 | 1e-4 |
//! | `estimator.flow_solver` | `rk4` or `euler` | rk4 | euler |
//! | `benchmark.paths` / `benchmark.delta` | Euler–Maruyama referee | 10^4 / 1e-3 | 10^5 / 1e-4 |
//! | `benchmark.scheme` | `exponential` or `explicit` | exponential | explicit |
//! | `output.dir` | CSV directory | `out` | `out` |

use std::fs;
use std::path::{Path, PathBuf};

use levy_iterates::{ClockSource, EmScheme, FlowSolver, Precision, ProblemSpec, VectorField};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(CliError::Config(format!("unknown profile '{other}' (expected desk or paper)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Zero,
    Sine,
    Cubic,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Zero => "zero",
            FieldKind::Sine => "sine",
            FieldKind::Cubic => "cubic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PrecisionKey {
    F64,
    F32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ClockKey {
    Stable,
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SolverKey {
    Rk4,
    Euler,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SchemeKey {
    Exponential,
    Explicit,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    profile: Option<Profile>,
    #[serde(default)]
    spec: RawSpec,
    #[serde(default)]
    bank: RawBank,
    #[serde(default)]
    query: RawQuery,
    #[serde(default)]
    estimator: RawEstimator,
    #[serde(default)]
    benchmark: RawBenchmark,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    alphas: Option<Vec<f64>>,
    gamma_bar: Option<f64>,
    modes: Option<usize>,
    eigenvalues: Option<Vec<f64>>,
    noise_modes: Option<Vec<f64>>,
    horizon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBank {
    m_sub: Option<usize>,
    m_ou: Option<usize>,
    delta_fine: Option<f64>,
    delta_coarse: Option<f64>,
    seed: Option<u64>,
    precision: Option<PrecisionKey>,
    clock: Option<ClockKey>,
    dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuery {
    s: Option<f64>,
    t: Option<f64>,
    x: Option<f64>,
    radius: Option<f64>,
    sigmas: Option<Vec<f64>>,
    field: Option<FieldKind>,
    cubic_b0: Option<f64>,
    cubic_y_bar: Option<f64>,
    cubic_a: Option<f64>,
    shift: Option<bool>,
    times: Option<Vec<f64>>,
    starts: Option<Vec<f64>>,
    points: Option<Vec<f64>>,
    fields: Option<Vec<FieldKind>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    mesh: Option<f64>,
    n_pairs: Option<usize>,
    order2_mesh: Option<f64>,
    n_tuples: Option<usize>,
    shift_step: Option<f64>,
    flow_solver: Option<SolverKey>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBenchmark {
    paths: Option<usize>,
    delta: Option<f64>,
    scheme: Option<SchemeKey>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Parameters of the cubic field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicParams {
    pub b0: f64,
    pub y_bar: f64,
    pub a: f64,
}

/// Query keys the file set explicitly. Table and figure presets supply their
/// own field, noise scales, shift and stability indices; explicit keys win.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExplicitQuery {
    pub alphas: Option<Vec<f64>>,
    pub sigmas: Option<Vec<f64>>,
    pub field: Option<FieldKind>,
    pub shift: Option<bool>,
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub alphas: Vec<f64>,
    pub gamma_bar: f64,
    pub eigenvalues: Vec<f64>,
    pub noise_modes: Vec<f64>,
    pub horizon: f64,
    pub m_sub: usize,
    pub m_ou: usize,
    pub delta_fine: f64,
    pub delta_coarse: f64,
    pub seed: u64,
    pub precision: Precision,
    pub clock: ClockSource,
    pub bank_dir: PathBuf,
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub radius: f64,
    pub sigmas: Vec<f64>,
    pub field: FieldKind,
    pub cubic: CubicParams,
    pub shift: bool,
    pub times: Vec<f64>,
    pub starts: Vec<f64>,
    pub points: Vec<f64>,
    pub fields: Vec<FieldKind>,
    pub mesh: f64,
    pub n_pairs: usize,
    pub order2_mesh: f64,
    pub n_tuples: usize,
    pub shift_step: f64,
    pub flow_solver: FlowSolver,
    pub benchmark_paths: usize,
    pub delta_em: f64,
    pub scheme: EmScheme,
    pub out_dir: PathBuf,
    pub explicit: ExplicitQuery,
}

/// Command-line overrides, applied after the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub bank_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let profile = overrides.profile.or(raw.profile).unwrap_or(Profile::Desk);
        let paper = profile == Profile::Paper;

        let modes = raw.spec.modes.unwrap_or(100);
        let eigenvalues = raw
            .spec
            .eigenvalues
            .unwrap_or_else(|| (1..=modes).map(|k| (k * k) as f64).collect());
        let dim = eigenvalues.len();
        let noise_modes = raw.spec.noise_modes.unwrap_or_else(|| vec![1.0; dim]);
        let m_ou = raw.bank.m_ou.unwrap_or(if paper { 100_000 } else { 10_000 });
        let s = raw.query.s.unwrap_or(0.0);
        let x = raw.query.x.unwrap_or(1.0);
        let field = raw.query.field.unwrap_or(FieldKind::Sine);
        let explicit = ExplicitQuery {
            alphas: raw.spec.alphas.clone(),
            sigmas: raw.query.sigmas.clone(),
            field: raw.query.field,
            shift: raw.query.shift,
        };
        let cfg = ExperimentConfig {
            profile,
            alphas: raw.spec.alphas.unwrap_or_else(|| vec![0.55, 0.65, 0.75, 0.85]),
            gamma_bar: raw.spec.gamma_bar.unwrap_or(1.0),
            eigenvalues,
            noise_modes,
            horizon: raw.spec.horizon.unwrap_or(1.0),
            m_sub: raw.bank.m_sub.unwrap_or(if paper { 100_000 } else { 10_000 }),
            m_ou,
            delta_fine: raw.bank.delta_fine.unwrap_or(if paper { 1e-4 } else { 1e-3 }),
            delta_coarse: raw.bank.delta_coarse.unwrap_or(1e-2),
            seed: overrides.seed.or(raw.bank.seed).unwrap_or(2024),
            precision: match raw.bank.precision {
                Some(PrecisionKey::F32) => Precision::F32,
                _ => Precision::F64,
            },
            clock: match raw.bank.clock {
                Some(ClockKey::Deterministic) => ClockSource::Deterministic,
                _ => ClockSource::Stable,
            },
            bank_dir: overrides
                .bank_dir
                .clone()
                .or(raw.bank.dir)
                .unwrap_or_else(|| PathBuf::from("banks")),
            s,
            t: raw.query.t.unwrap_or(1.0),
            x,
            radius: raw.query.radius.unwrap_or(1.0),
            sigmas: raw.query.sigmas.unwrap_or_else(|| vec![1.0]),
            field,
            cubic: CubicParams {
                b0: raw.query.cubic_b0.unwrap_or(2.0),
                y_bar: raw.query.cubic_y_bar.unwrap_or(2.0),
                a: raw.query.cubic_a.unwrap_or(1e4),
            },
            shift: raw.query.shift.unwrap_or(true),
            times: raw
                .query
                .times
                .unwrap_or_else(|| (1..=10).map(|i| i as f64 / 10.0).collect()),
            starts: raw.query.starts.unwrap_or_else(|| vec![s]),
            points: raw.query.points.unwrap_or_else(|| vec![x]),
            fields: raw.query.fields.unwrap_or_else(|| vec![field]),
            mesh: raw.estimator.mesh.unwrap_or(1e-2),
            n_pairs: raw.estimator.n_pairs.unwrap_or(m_ou),
            order2_mesh: raw.estimator.order2_mesh.unwrap_or(if paper { 1e-2 } else { 2e-2 }),
            n_tuples: raw.estimator.n_tuples.unwrap_or(if paper { m_ou } else { 5000 }),
            shift_step: raw.estimator.shift_step.unwrap_or(1e-4),
            flow_solver: match raw.estimator.flow_solver {
                Some(SolverKey::Euler) => FlowSolver::Euler,
                Some(SolverKey::Rk4) => FlowSolver::Rk4,
                None if paper => FlowSolver::Euler,
                None => FlowSolver::Rk4,
            },
            benchmark_paths: raw.benchmark.paths.unwrap_or(if paper { 100_000 } else { 10_000 }),
            delta_em: raw.benchmark.delta.unwrap_or(if paper { 1e-4 } else { 1e-3 }),
            scheme: match raw.benchmark.scheme {
                Some(SchemeKey::Explicit) => EmScheme::Explicit,
                Some(SchemeKey::Exponential) => EmScheme::Exponential,
                None if paper => EmScheme::Explicit,
                None => EmScheme::Exponential,
            },
            out_dir: overrides
                .out_dir
                .clone()
                .or(raw.output.dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            explicit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.alphas.is_empty() {
            return bad("spec.alphas must not be empty".into());
        }
        if self.noise_modes.len() != self.eigenvalues.len() {
            return bad(format!(
                "spec.noise_modes has {} entries but there are {} modes",
                self.noise_modes.len(),
                self.eigenvalues.len()
            ));
        }
        for &alpha in &self.alphas {
            self.spec(alpha)?;
        }
        let ratio = self.delta_coarse / self.delta_fine;
        if !(self.delta_fine > 0.0 && ratio >= 1.0 && (ratio - ratio.round()).abs() <= 1e-9 * ratio) {
            return bad(format!(
                "bank.delta_coarse = {} must be a positive integer multiple of bank.delta_fine = {}",
                self.delta_coarse, self.delta_fine
            ));
        }
        if self.m_sub == 0 {
            return bad("bank.m_sub must be at least 1".into());
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("query.sigmas must be a non-empty list of positive numbers".into());
        }
        if self.times.is_empty() {
            return bad("query.times must not be empty".into());
        }
        if self.starts.is_empty() || self.points.is_empty() || self.fields.is_empty() {
            return bad("sweep axes query.starts, query.points and query.fields must not be empty".into());
        }
        if self.benchmark_paths == 0 || self.delta_em.is_nan() || self.delta_em <= 0.0 {
            return bad("benchmark.paths and benchmark.delta must be positive".into());
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn spec(&self, alpha: f64) -> CliResult<ProblemSpec> {
        Ok(ProblemSpec::new(
            alpha,
            self.gamma_bar,
            self.eigenvalues.clone(),
            self.noise_modes.clone(),
            self.horizon,
        )?)
    }

    pub fn vector_field(&self, kind: FieldKind) -> VectorField {
        match kind {
            FieldKind::Zero => VectorField::Zero,
            FieldKind::Sine => VectorField::Sine,
            FieldKind::Cubic => VectorField::BoundedCubic {
                b0: self.cubic.b0,
                y_bar: vec![self.cubic.y_bar; self.dim()],
                a: self.cubic.a,
            },
        }
    }
}
