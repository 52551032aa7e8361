//! The subcommands, as library functions returning what they wrote.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use levy_iterates::{
    bank_load_count, covariance_deterministic_clock, covariance_integral, em_benchmark, em_benchmark_series,
    generate_bank, load_bank, partial_sums, sample_subordinator_path, save_bank, solve_flow, v0_estimate,
    v1_estimate, validate_sampler, vn_estimate, BankConfig, IterateEstimate, PartialSumReport, ProblemSpec,
    QueryParams, SimulationBank, SubordinatorPath, TimeGrid, TimeShift,
};

use crate::config::{ExperimentConfig, FieldKind};
use crate::error::{CliError, CliResult};
use crate::output::{number, Csv};

/// One line per generated bank.
#[derive(Clone, Debug, PartialEq)]
pub struct BankSummary {
    pub alpha: f64,
    pub path: PathBuf,
    pub sub_paths: usize,
    pub records: usize,
    pub delta_fine: f64,
    pub delta_coarse: f64,
    pub bytes: u64,
    pub spec_hash: String,
}

impl fmt::Display for BankSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "alpha={} sub_paths={} records={} fine_step={} coarse_step={} bytes={} spec_hash={} file={}",
            self.alpha,
            self.sub_paths,
            self.records,
            self.delta_fine,
            self.delta_coarse,
            self.bytes,
            self.spec_hash,
            self.path.display()
        )
    }
}

pub fn bank_config(cfg: &ExperimentConfig) -> BankConfig {
    BankConfig {
        precision: cfg.precision,
        clock: cfg.clock,
        ..BankConfig::new(cfg.delta_fine, cfg.delta_coarse, cfg.m_sub, cfg.m_ou, cfg.seed)
    }
}

pub fn bank_path(cfg: &ExperimentConfig, alpha: f64) -> PathBuf {
    cfg.bank_dir.join(format!("alpha-{alpha}.lvib"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn generate_and_save(cfg: &ExperimentConfig, spec: &ProblemSpec, path: &Path) -> CliResult<SimulationBank> {
    let bank = generate_bank(spec, &bank_config(cfg))?;
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    save_bank(&bank, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(bank)
}

/// Generates and writes one bank per configured stability index.
pub fn cmd_bank(cfg: &ExperimentConfig) -> CliResult<Vec<BankSummary>> {
    let mut out = Vec::new();
    for &alpha in &cfg.alphas {
        let spec = cfg.spec(alpha)?;
        let path = bank_path(cfg, alpha);
        let bank = generate_and_save(cfg, &spec, &path)?;
        let bytes = fs::metadata(&path)?.len();
        out.push(BankSummary {
            alpha,
            path,
            sub_paths: bank.sub_paths.len(),
            records: bank.records.len(),
            delta_fine: bank.header.delta_fine,
            delta_coarse: bank.header.delta_coarse,
            bytes,
            spec_hash: hex(&bank.header.spec_hash.0),
        });
    }
    Ok(out)
}

fn check_bank_matches(cfg: &ExperimentConfig, bank: &SimulationBank, path: &Path) -> CliResult<()> {
    let want = bank_config(cfg);
    let h = &bank.header;
    if (h.delta_fine, h.delta_coarse, h.m_sub, h.m_ou, h.base_seed, h.precision)
        != (want.delta_fine, want.delta_coarse, want.m_sub, want.m_ou, want.base_seed, want.precision)
    {
        return Err(CliError::Config(format!(
            "{} was generated with different bank parameters; rerun the bank command",
            path.display()
        )));
    }
    Ok(())
}

/// Loads the bank of `alpha`, which must already exist.
pub fn load_existing_bank(cfg: &ExperimentConfig, spec: &ProblemSpec) -> CliResult<SimulationBank> {
    let path = bank_path(cfg, spec.alpha);
    if !path.exists() {
        return Err(CliError::Io(format!("{} not found; run the bank command first", path.display())));
    }
    let bank = load_bank(&path, spec)?;
    check_bank_matches(cfg, &bank, &path)?;
    Ok(bank)
}

/// Loads the bank of `alpha`, generating and saving it if it is missing.
pub fn obtain_bank(cfg: &ExperimentConfig, spec: &ProblemSpec) -> CliResult<SimulationBank> {
    let path = bank_path(cfg, spec.alpha);
    if path.exists() {
        load_existing_bank(cfg, spec)
    } else {
        eprintln!("generating {}", path.display());
        generate_and_save(cfg, spec, &path)
    }
}

pub fn query_params(cfg: &ExperimentConfig, sigma: f64, field: FieldKind, shift: bool) -> QueryParams {
    QueryParams {
        s: cfg.s,
        t: cfg.t,
        x: vec![cfg.x; cfg.dim()],
        sigma_scale: sigma,
        radius: cfg.radius,
        field: cfg.vector_field(field),
        use_shift: shift,
    }
}

/// The time-shift of a query under the configured solver and grid.
pub fn time_shift(cfg: &ExperimentConfig, spec: &ProblemSpec, q: &QueryParams) -> CliResult<TimeShift> {
    let grid = TimeGrid::new(0.0, spec.horizon, cfg.shift_step)?;
    if q.use_shift {
        Ok(solve_flow(spec, &q.field, q.s, &q.x, grid, cfg.flow_solver)?)
    } else {
        Ok(TimeShift::zero(spec.dim, grid))
    }
}

pub fn benchmark(cfg: &ExperimentConfig, spec: &ProblemSpec, q: &QueryParams) -> CliResult<IterateEstimate> {
    Ok(em_benchmark(spec, q, cfg.benchmark_paths, cfg.delta_em, cfg.seed, cfg.scheme)?)
}

/// The iterates `v^0, ..., v^max_order` of one query.
pub fn iterates(
    cfg: &ExperimentConfig,
    spec: &ProblemSpec,
    bank: &SimulationBank,
    shift: &TimeShift,
    q: &QueryParams,
    max_order: usize,
) -> CliResult<Vec<IterateEstimate>> {
    let mut out = vec![v0_estimate(bank, spec, shift, q)?];
    if max_order >= 1 {
        out.push(v1_estimate(bank, spec, shift, q, cfg.mesh, cfg.n_pairs, 0)?);
    }
    for order in 2..=max_order {
        out.push(vn_estimate(bank, spec, shift, q, order, cfg.order2_mesh, cfg.n_tuples, 0)?);
    }
    Ok(out)
}

/// Field, noise scale, shift and depth of one of the four tables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TablePreset {
    pub field: FieldKind,
    pub sigma: f64,
    pub shift: bool,
    pub max_order: usize,
}

impl TablePreset {
    pub fn new(id: u32) -> CliResult<Self> {
        let (field, sigma, shift, max_order) = match id {
            1 => (FieldKind::Sine, 1.0, true, 1),
            2 => (FieldKind::Sine, 1.0, false, 1),
            3 => (FieldKind::Cubic, 0.7, true, 1),
            4 => (FieldKind::Cubic, 0.7, false, 2),
            _ => return Err(CliError::Config(format!("unknown table {id} (expected 1-4)"))),
        };
        Ok(TablePreset { field, sigma, shift, max_order })
    }

    /// The preset with the configuration's explicit query keys applied.
    pub fn resolve(id: u32, cfg: &ExperimentConfig) -> CliResult<Self> {
        let mut p = Self::new(id)?;
        let e = &cfg.explicit;
        p.field = e.field.unwrap_or(p.field);
        p.sigma = e.sigmas.as_ref().map_or(p.sigma, |s| s[0]);
        p.shift = e.shift.unwrap_or(p.shift);
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub alpha: f64,
    pub report: PartialSumReport,
}

/// Estimates one table row per stability index.
pub fn run_table(cfg: &ExperimentConfig, preset: &TablePreset) -> CliResult<Vec<TableRow>> {
    let mut rows = Vec::new();
    for &alpha in &cfg.alphas {
        let spec = cfg.spec(alpha)?;
        let q = query_params(cfg, preset.sigma, preset.field, preset.shift);
        q.validate(&spec)?;
        let bank = obtain_bank(cfg, &spec)?;
        let shift = time_shift(cfg, &spec, &q)?;
        let p = benchmark(cfg, &spec, &q)?;
        let est = iterates(cfg, &spec, &bank, &shift, &q, preset.max_order)?;
        let report = partial_sums(&est, &p)?;
        eprintln!("alpha={alpha}: P={:.4} v0={:.4}", report.benchmark, report.rows[0].iterate);
        rows.push(TableRow { alpha, report });
    }
    Ok(rows)
}

/// The value and standard-error tables of a run.
pub fn table_csv(rows: &[TableRow], max_order: usize) -> (Csv, Csv) {
    let mut header = vec!["alpha".to_string(), "P".to_string()];
    for n in 0..=max_order {
        header.push(format!("v{n}"));
        header.push(format!("eps{n}"));
    }
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let (mut values, mut errors) = (Csv::new(&refs), Csv::new(&refs));
    for row in rows {
        let r = &row.report;
        let mut v = vec![row.alpha, r.benchmark];
        let mut e = vec![row.alpha, r.benchmark_se];
        for it in &r.rows {
            v.extend([it.iterate, it.rel_error]);
            e.extend([it.iterate_se, it.rel_error_se]);
        }
        values.push_numbers(&v);
        errors.push_numbers(&e);
    }
    (values, errors)
}

/// Writes `table{id}.csv` and `table{id}_se.csv`; returns their paths.
pub fn cmd_table(cfg: &ExperimentConfig, id: u32) -> CliResult<Vec<PathBuf>> {
    let preset = TablePreset::resolve(id, cfg)?;
    let rows = run_table(cfg, &preset)?;
    let (values, errors) = table_csv(&rows, preset.max_order);
    let paths = vec![cfg.out_dir.join(format!("table{id}.csv")), cfg.out_dir.join(format!("table{id}_se.csv"))];
    values.write(&paths[0])?;
    errors.write(&paths[1])?;
    Ok(paths)
}

/// One curve of a figure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FigureLine {
    pub alpha: f64,
    pub sigma: f64,
    pub field: FieldKind,
    pub shift: bool,
}

impl FigureLine {
    fn file_stem(&self, id: u32) -> String {
        format!(
            "figure{id}_alpha{}_sigma{}_{}_shift-{}",
            self.alpha,
            self.sigma,
            self.field.name(),
            if self.shift { "on" } else { "off" }
        )
    }
}

/// The curves of a figure, with explicit configuration keys overriding.
pub fn figure_lines(cfg: &ExperimentConfig, id: u32) -> CliResult<Vec<FigureLine>> {
    let (alphas, sigmas, field, shifts) = match id {
        1 => (vec![0.6], vec![0.1, 1.3], FieldKind::Sine, vec![true]),
        2 => (vec![0.55, 0.85], vec![0.5], FieldKind::Cubic, vec![true, false]),
        3 => (vec![0.6], vec![0.1, 1.3], FieldKind::Cubic, vec![true]),
        _ => return Err(CliError::Config(format!("unknown figure {id} (expected 1-3)"))),
    };
    let e = &cfg.explicit;
    let alphas = e.alphas.clone().unwrap_or(alphas);
    let sigmas = e.sigmas.clone().unwrap_or(sigmas);
    let field = e.field.unwrap_or(field);
    let shifts = e.shift.map_or(shifts, |s| vec![s]);
    let mut lines = Vec::new();
    for &alpha in &alphas {
        for &sigma in &sigmas {
            for &shift in &shifts {
                lines.push(FigureLine { alpha, sigma, field, shift });
            }
        }
    }
    Ok(lines)
}

/// Value and standard-error series `(t, P, v0, v0 + v1, |eps0|, |eps1|)`.
pub fn run_figure_line(
    cfg: &ExperimentConfig,
    spec: &ProblemSpec,
    bank: &SimulationBank,
    line: &FigureLine,
) -> CliResult<(Csv, Csv)> {
    let header = ["t", "P", "v0", "v0_plus_v1", "abs_eps0", "abs_eps1"];
    let (mut values, mut errors) = (Csv::new(&header), Csv::new(&header));
    let t_max = cfg.times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let base = QueryParams {
        t: t_max,
        ..query_params(cfg, line.sigma, line.field, line.shift)
    };
    base.validate(spec)?;
    let shift = time_shift(cfg, spec, &base)?;
    let series = em_benchmark_series(spec, &base, &cfg.times, cfg.benchmark_paths, cfg.delta_em, cfg.seed, cfg.scheme)?;
    for (&t, p) in cfg.times.iter().zip(&series) {
        let q = QueryParams { t, ..base.clone() };
        let report = partial_sums(&iterates(cfg, spec, bank, &shift, &q, 1)?, p)?;
        let (r0, r1) = (&report.rows[0], &report.rows[1]);
        values.push_numbers(&[t, p.value, r0.iterate, r1.partial_sum, r0.rel_error.abs(), r1.rel_error.abs()]);
        errors.push_numbers(&[t, p.std_error, r0.iterate_se, r1.partial_sum_se, r0.rel_error_se, r1.rel_error_se]);
    }
    Ok((values, errors))
}

/// Writes one value and one standard-error CSV per curve.
pub fn cmd_figure(cfg: &ExperimentConfig, id: u32) -> CliResult<Vec<PathBuf>> {
    let lines = figure_lines(cfg, id)?;
    let mut by_alpha: BTreeMap<u64, Vec<FigureLine>> = BTreeMap::new();
    for line in lines {
        by_alpha.entry(line.alpha.to_bits()).or_default().push(line);
    }
    let mut paths = Vec::new();
    for (alpha_bits, lines) in by_alpha {
        let spec = cfg.spec(f64::from_bits(alpha_bits))?;
        let bank = obtain_bank(cfg, &spec)?;
        for line in lines {
            let (values, errors) = run_figure_line(cfg, &spec, &bank, &line)?;
            let stem = line.file_stem(id);
            let (vp, ep) = (cfg.out_dir.join(format!("{stem}.csv")), cfg.out_dir.join(format!("{stem}_se.csv")));
            values.write(&vp)?;
            errors.write(&ep)?;
            paths.extend([vp, ep]);
        }
    }
    Ok(paths)
}

/// What a sweep produced.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub results: Csv,
    pub timing: Csv,
    pub bank_loads: usize,
    pub invalid: usize,
    pub failed: usize,
}

/// Evaluates `v0` and `v1` over `starts x points x sigmas x fields` against
/// the bank of the first configured stability index.
pub fn run_sweep(cfg: &ExperimentConfig) -> CliResult<SweepOutcome> {
    let spec = cfg.spec(cfg.alphas[0])?;
    let loads_before = bank_load_count();
    let bank = load_existing_bank(cfg, &spec)?;
    let mut results = Csv::new(&["s", "t", "x", "sigma", "field", "shift", "status", "v0", "v0_se", "v1", "v1_se"]);
    let mut timing = Csv::new(&["row", "seconds"]);
    let (mut invalid, mut failed) = (0, 0);
    for &s in &cfg.starts {
        for &x in &cfg.points {
            for &sigma in &cfg.sigmas {
                for &field in &cfg.fields {
                    let q = QueryParams {
                        s,
                        x: vec![x; cfg.dim()],
                        ..query_params(cfg, sigma, field, cfg.shift)
                    };
                    let clock = Instant::now();
                    let outcome = q
                        .validate(&spec)
                        .map_err(CliError::from)
                        .and_then(|()| time_shift(cfg, &spec, &q))
                        .and_then(|shift| iterates(cfg, &spec, &bank, &shift, &q, 1));
                    let mut row = vec![
                        number(s),
                        number(cfg.t),
                        number(x),
                        number(sigma),
                        field.name().to_string(),
                        cfg.shift.to_string(),
                    ];
                    match outcome {
                        Ok(est) => {
                            row.push("ok".into());
                            row.extend([est[0].value, est[0].std_error, est[1].value, est[1].std_error].map(number));
                        }
                        Err(err) => {
                            eprintln!("sweep row {}: {err}", results.rows.len());
                            let status = if matches!(err, CliError::Numerical(_)) {
                                failed += 1;
                                "numerical-failure"
                            } else {
                                invalid += 1;
                                "invalid"
                            };
                            row.push(status.into());
                            row.extend(std::iter::repeat_n(String::new(), 4));
                        }
                    }
                    timing.push(vec![results.rows.len().to_string(), format!("{:.6}", clock.elapsed().as_secs_f64())]);
                    results.push(row);
                }
            }
        }
    }
    Ok(SweepOutcome {
        results,
        timing,
        bank_loads: bank_load_count() - loads_before,
        invalid,
        failed,
    })
}

/// Writes `sweep.csv` (deterministic) and `sweep_timing.csv` (wall times).
pub fn cmd_sweep(cfg: &ExperimentConfig) -> CliResult<SweepOutcome> {
    let outcome = run_sweep(cfg)?;
    outcome.results.write(&cfg.out_dir.join("sweep.csv"))?;
    outcome.timing.write(&cfg.out_dir.join("sweep_timing.csv"))?;
    Ok(outcome)
}

/// Result of one oracle or sampler check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

/// Empirical Laplace transform of `L_1` against the closed form.
pub fn sampler_checks(cfg: &ExperimentConfig, n_samples: usize) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    for &alpha in &cfg.alphas {
        for c in validate_sampler(alpha, cfg.gamma_bar, n_samples, &[0.5, 1.0, 2.0], cfg.seed)? {
            out.push(Check {
                name: format!("sampler alpha={alpha} lambda={}", c.lam),
                passed: !c.flagged,
                detail: format!("empirical {:.6} analytic {:.6} se {:.2e}", c.empirical, c.analytic, c.std_error),
            });
        }
    }
    Ok(out)
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs()).fold(0.0, f64::max)
}

/// The covariance integral under a deterministic clock against its closed
/// form, and the splitting identity on a sampled clock.
pub fn covariance_checks(cfg: &ExperimentConfig) -> CliResult<Vec<Check>> {
    let spec = cfg.spec(cfg.alphas[0])?;
    let horizon = spec.horizon;
    let grid = TimeGrid::new(0.0, horizon, cfg.delta_fine)?;
    let clock = SubordinatorPath::deterministic(grid);
    let mut worst: f64 = 0.0;
    for (u, t) in [(0.0, horizon), (0.3 * horizon, 0.7 * horizon), (0.5 * horizon, horizon)] {
        let got = covariance_integral(&clock, &spec, 1.0, u, t)?;
        let exact = covariance_deterministic_clock(&spec, u, t)?;
        worst = worst.max(max_rel(got.entries(), exact.entries()));
    }
    let oracle = Check {
        name: "covariance deterministic clock".into(),
        passed: worst <= 1e-10,
        detail: format!("max relative error {worst:.3e} (bound 1e-10)"),
    };

    let path = sample_subordinator_path(&spec, grid, cfg.seed)?;
    let mut worst: f64 = 0.0;
    for (u, v, t) in [(0.0, 0.5, 1.0), (0.2, 0.21, 0.9), (0.0, 0.999, 1.0)] {
        let (u, v, t) = (u * horizon, v * horizon, t * horizon);
        let whole = covariance_integral(&path, &spec, 1.0, u, t)?;
        let left = covariance_integral(&path, &spec, 1.0, u, v)?;
        let right = covariance_integral(&path, &spec, 1.0, v, t)?;
        let joined: Vec<f64> = (0..spec.dim)
            .map(|k| (-2.0 * spec.lambdas[k] * (t - v)).exp() * left[k] + right[k])
            .collect();
        worst = worst.max(max_rel(&joined, whole.entries()));
    }
    let split = Check {
        name: "covariance splitting".into(),
        passed: worst <= 1e-12,
        detail: format!("max relative error {worst:.3e} (bound 1e-12)"),
    };
    Ok(vec![oracle, split])
}

/// Runs the sampler and covariance suites; fails if any check does.
pub fn cmd_validate(cfg: &ExperimentConfig) -> CliResult<Vec<Check>> {
    let mut checks = sampler_checks(cfg, 100_000)?;
    checks.extend(covariance_checks(cfg)?);
    Ok(checks)
}
