//! Estimators of `P_{s,t} u0(x)`: the Euler-Maruyama benchmark, the
//! Ornstein-Uhlenbeck iterate `v0`, the corrections `v1, v2, ...`, the OU
//! gradient diagnostic and relative-error bookkeeping.
//!
//! Bank-based estimators never draw random numbers: a query at a new
//! starting point, noise strength or drift reuses the same bank.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bank::{CovarianceTable, SimulationBank};
use crate::error::{config, domain, Error, Result};
use crate::fields::VectorField;
use crate::flow::{phi1, solve_flow, FlowSolver, ForcingTable, TimeShift};
use crate::model::{indicator_observable, ProblemSpec, TimeGrid};
use crate::rng::{derive_seed, stream_rng, StreamKind};
use crate::stable::StableIncrementSampler;

/// Covariance entries are floored here before inversion or square roots.
pub const COVARIANCE_FLOOR: f64 = 1e-300;

/// Highest iterate order the general engine is exercised at.
pub const MAX_SUPPORTED_ORDER: usize = 2;

/// A bounded observable `phi: R^N -> R`.
pub type Observable<'a> = dyn Fn(&[f64]) -> f64 + Send + Sync + 'a;

/// One query of the semigroup: `P_{s,t} u0(x)` with `u0 = 1{|.| > radius}`.
#[derive(Clone, Debug)]
pub struct QueryParams {
    pub s: f64,
    pub t: f64,
    pub x: Vec<f64>,
    /// Multiplies `sqrt(Q)`.
    pub sigma_scale: f64,
    pub radius: f64,
    pub field: VectorField,
    /// Whether the OU process is recentred on the noiseless flow.
    pub use_shift: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateMeta {
    pub s: f64,
    pub t: f64,
    pub x: String,
    pub sigma: f64,
    pub field: String,
    pub shift: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateEstimate {
    pub value: f64,
    /// Sample standard deviation over `sqrt(n_samples)`.
    pub std_error: f64,
    pub n_samples: usize,
    /// `-1` for the benchmark, otherwise the iterate order.
    pub order: i32,
    pub meta: EstimateMeta,
}

/// Default step of the grid the time-shift is computed on.
pub const DEFAULT_SHIFT_STEP: f64 = 1e-4;

impl QueryParams {
    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if !(self.s >= 0.0 && self.s < self.t && self.t <= spec.horizon * (1.0 + 1e-12)) {
            return Err(domain(format!(
                "query needs 0 <= s < t <= {}, got s = {}, t = {}",
                spec.horizon, self.s, self.t
            )));
        }
        if self.x.len() != spec.dim {
            return Err(config(format!(
                "starting point has {} entries, expected {}",
                self.x.len(),
                spec.dim
            )));
        }
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return Err(domain(format!("noise scale must be positive, got {}", self.sigma_scale)));
        }
        if !(self.radius >= 0.0) {
            return Err(domain(format!("radius must be non-negative, got {}", self.radius)));
        }
        self.field.validate(spec.dim)
    }

    pub fn meta(&self) -> EstimateMeta {
        let first = self.x.first().copied().unwrap_or(0.0);
        let x = if self.x.iter().all(|&v| v == first) {
            format!("{first}*e")
        } else {
            format!("vector[{}]", self.x.len())
        };
        EstimateMeta {
            s: self.s,
            t: self.t,
            x,
            sigma: self.sigma_scale,
            field: self.field.kind().to_string(),
            shift: self.use_shift,
        }
    }

    /// The time-shift of this query on a grid of the given step: the flow
    /// from `(s, x)` if the shift is on, otherwise `f = 0`.
    pub fn build_shift(&self, spec: &ProblemSpec, step: f64) -> Result<TimeShift> {
        let grid = TimeGrid::new(0.0, spec.horizon, step)?;
        if self.use_shift {
            solve_flow(spec, &self.field, self.s, &self.x, grid, FlowSolver::Rk4)
        } else {
            Ok(TimeShift::zero(spec.dim, grid))
        }
    }

    fn observable(&self) -> impl Fn(&[f64]) -> f64 + Send + Sync + '_ {
        move |y: &[f64]| indicator_observable(y, self.radius)
    }
}

/// Sum with `O(log n)` error growth; fixed association, so reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 64 {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Mean and standard error, rejecting non-finite samples.
pub fn mean_and_std_error(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(config("no samples"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("sample {i} is {}", values[i])));
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

fn estimate(values: &[f64], order: i32, q: &QueryParams) -> Result<IterateEstimate> {
    let (value, std_error) = mean_and_std_error(values)?;
    Ok(IterateEstimate {
        value,
        std_error,
        n_samples: values.len(),
        order,
        meta: q.meta(),
    })
}

/// Time stepping of the benchmark.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmScheme {
    /// Linear part propagated exactly, drift frozen over the step, noise drawn
    /// from the exact conditional law of the step's stochastic convolution.
    #[default]
    Exponential,
    /// `X + (AX + B0) delta + sqrt(Q) dW_L`; needs `max lambda * delta <= 2`.
    Explicit,
}

fn steps_between(from: f64, to: f64, delta: f64) -> Result<usize> {
    let r = (to - from) / delta;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * n {
        return Err(config(format!(
            "[{from}, {to}] is not a whole number of benchmark steps of {delta}"
        )));
    }
    Ok(n as usize)
}

/// Euler-Maruyama reference `P(|X_t| > R)` from fresh paths of the
/// semilinear equation (the time-shift plays no role here).
pub fn em_benchmark(
    spec: &ProblemSpec,
    q: &QueryParams,
    n_paths: usize,
    delta_em: f64,
    seed: u64,
    scheme: EmScheme,
) -> Result<IterateEstimate> {
    let mut series = em_benchmark_series(spec, q, &[q.t], n_paths, delta_em, seed, scheme)?;
    Ok(series.remove(0))
}

/// [`em_benchmark`] at several end times along the same paths.
pub fn em_benchmark_series(
    spec: &ProblemSpec,
    q: &QueryParams,
    times: &[f64],
    n_paths: usize,
    delta_em: f64,
    seed: u64,
    scheme: EmScheme,
) -> Result<Vec<IterateEstimate>> {
    q.validate(spec)?;
    if n_paths == 0 || times.is_empty() {
        return Err(config("benchmark needs at least one path and one time"));
    }
    let t_max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if times.iter().any(|&t| !(t > q.s)) || t_max > spec.horizon * (1.0 + 1e-12) {
        return Err(domain("benchmark times must lie in (s, T]"));
    }
    let total = steps_between(q.s, t_max, delta_em)?;
    let marks: Vec<usize> = times
        .iter()
        .map(|&t| steps_between(q.s, t, delta_em))
        .collect::<Result<_>>()?;
    let n = spec.dim;
    if scheme == EmScheme::Explicit {
        let stiff = spec.lambdas.iter().fold(0.0f64, |m, l| m.max(l * delta_em));
        if stiff > 2.0 {
            return Err(config(format!(
                "explicit Euler-Maruyama is unstable here: max lambda * step = {stiff}"
            )));
        }
    }
    let sampler = StableIncrementSampler::new(spec.alpha, spec.gamma_bar, delta_em)?;
    let (lin, drift_w, noise_w): (Vec<f64>, Vec<f64>, Vec<f64>) = match scheme {
        EmScheme::Exponential => (
            spec.lambdas.iter().map(|l| (-l * delta_em).exp()).collect(),
            spec.lambdas.iter().map(|l| delta_em * phi1(l * delta_em)).collect(),
            spec.lambdas
                .iter()
                .zip(&spec.sigmas)
                .map(|(l, s)| q.sigma_scale * s * phi1(2.0 * l * delta_em).sqrt())
                .collect(),
        ),
        EmScheme::Explicit => (
            spec.lambdas.iter().map(|l| 1.0 - l * delta_em).collect(),
            vec![delta_em; n],
            spec.sigmas.iter().map(|s| q.sigma_scale * s).collect(),
        ),
    };
    let obs = q.observable();
    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut clock = stream_rng(derive_seed(seed, StreamKind::BenchmarkSubordinator, i));
            let mut noise = stream_rng(derive_seed(seed, StreamKind::BenchmarkGaussian, i));
            let mut x = q.x.clone();
            let mut b = vec![0.0; n];
            let mut hits = vec![f64::NAN; marks.len()];
            for step in 0..total {
                let t = q.s + step as f64 * delta_em;
                q.field.eval_into(t, &x, &mut b);
                let root = sampler.sample(&mut clock).sqrt();
                for k in 0..n {
                    let xi: f64 = noise.sample(StandardNormal);
                    x[k] = lin[k] * x[k] + drift_w[k] * b[k] + noise_w[k] * root * xi;
                }
                for (h, &m) in hits.iter_mut().zip(&marks) {
                    if m == step + 1 {
                        *h = obs(&x);
                    }
                }
            }
            hits
        })
        .collect();
    times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let values: Vec<f64> = per_path.iter().map(|h| h[j]).collect();
            let mut est = estimate(&values, -1, q)?;
            est.meta.t = t;
            Ok(est)
        })
        .collect()
}

/// Quadrature nodes and query-level quantities shared by all samples.
struct Context<'a> {
    spec: &'a ProblemSpec,
    bank: &'a SimulationBank,
    q: &'a QueryParams,
    shift: &'a TimeShift,
    mesh: TimeGrid,
    /// Bank checkpoints per mesh step.
    ratio: usize,
    js: usize,
    jt: usize,
    forcing: ForcingTable,
    /// `decay[g][k] = e^{-lambda_k g mesh}`.
    decay: Vec<Vec<f64>>,
    sigma2: f64,
}

impl<'a> Context<'a> {
    fn new(
        bank: &'a SimulationBank,
        spec: &'a ProblemSpec,
        shift: &'a TimeShift,
        q: &'a QueryParams,
        mesh_step: f64,
    ) -> Result<Self> {
        q.validate(spec)?;
        bank.check_spec(spec)?;
        if shift.dim() != spec.dim {
            return Err(config("time-shift dimension does not match the problem"));
        }
        if q.use_shift == shift.is_zero() {
            return Err(config(if q.use_shift {
                "query asks for the time-shift but none was supplied"
            } else {
                "query has the time-shift off but a non-zero shift was supplied"
            }));
        }
        let mesh = TimeGrid::new(0.0, spec.horizon, mesh_step)?;
        let ratio = bank.coarse_grid.refinement_ratio(&mesh).ok_or_else(|| {
            config(format!(
                "mesh {mesh_step} is not a whole multiple of the bank checkpoint step {}",
                bank.coarse_grid.step()
            ))
        })?;
        let (js, jt) = match (mesh.index_of(q.s), mesh.index_of(q.t)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(domain(format!(
                    "s = {} and t = {} must lie on the quadrature mesh {mesh_step}",
                    q.s, q.t
                )))
            }
        };
        let forcing = ForcingTable::new(spec, shift, mesh)?;
        let decay = (0..=jt - js)
            .map(|g| {
                let tau = g as f64 * mesh_step;
                spec.lambdas.iter().map(|l| (-l * tau).exp()).collect()
            })
            .collect();
        Ok(Self {
            spec,
            bank,
            q,
            shift,
            mesh,
            ratio,
            js,
            jt,
            forcing,
            decay,
            sigma2: q.sigma_scale * q.sigma_scale,
        })
    }

    fn n(&self) -> usize {
        self.spec.dim
    }

    /// `sigma sqrt(Q) (Z0_b - e^{(b-a)A} Z0_a)` for mesh nodes `a <= b`.
    fn segment_into(&self, rec: usize, a: usize, b: usize, out: &mut [f64]) {
        let r = &self.bank.records[rec];
        let n = self.n();
        let (za, zb) = (r.checkpoint(a * self.ratio, n), r.checkpoint(b * self.ratio, n));
        let d = &self.decay[b - a];
        for k in 0..n {
            out[k] = self.q.sigma_scale * self.spec.sigmas[k] * (zb[k] - d[k] * za[k]);
        }
    }

    /// `Z^{s,x}` of record `rec` at mesh node `a >= js`.
    fn ou_at_into(&self, rec: usize, a: usize, out: &mut [f64]) {
        if a == self.js {
            out.copy_from_slice(&self.q.x);
            return;
        }
        self.segment_into(rec, self.js, a, out);
        let f = self.forcing.between(self.js, a);
        let d = &self.decay[a - self.js];
        for k in 0..self.n() {
            out[k] += d[k] * self.q.x[k] + f[k];
        }
    }

    /// `B(t, y) = B0(t, y) - f(t)` at mesh node `a`.
    fn drift_into(&self, a: usize, y: &[f64], out: &mut [f64]) {
        let t = self.mesh.point(a);
        self.q.field.eval_into(t, y, out);
        if let Some(f) = self.shift.value_at(t) {
            for (o, v) in out.iter_mut().zip(f.iter()) {
                *o -= v;
            }
        }
    }
}

/// `v0_s(t, x) = E[u0(Z^{s,x}_t)]` over the bank records.
pub fn v0_estimate(
    bank: &SimulationBank,
    spec: &ProblemSpec,
    shift: &TimeShift,
    q: &QueryParams,
) -> Result<IterateEstimate> {
    let obs = q.observable();
    v0_estimate_with(bank, spec, shift, q, &obs)
}

/// [`v0_estimate`] for an arbitrary bounded observable.
pub fn v0_estimate_with(
    bank: &SimulationBank,
    spec: &ProblemSpec,
    shift: &TimeShift,
    q: &QueryParams,
    observable: &Observable<'_>,
) -> Result<IterateEstimate> {
    let values = v0_samples(bank, spec, shift, q, observable)?;
    estimate(&values, 0, q)
}

/// Per-record values `u0(Z^{s,x}_t)` in record order.
pub fn v0_samples(
    bank: &SimulationBank,
    spec: &ProblemSpec,
    shift: &TimeShift,
    q: &QueryParams,
    observable: &Observable<'_>,
) -> Result<Vec<f64>> {
    let ctx = Context::new(bank, spec, shift, q, bank.coarse_grid.step())?;
    if bank.records.is_empty() {
        return Err(config("the bank holds no convolution records"));
    }
    Ok((0..bank.records.len())
        .into_par_iter()
        .map(|r| {
            let mut z = vec![0.0; ctx.n()];
            ctx.ou_at_into(r, ctx.jt, &mut z);
            observable(&z)
        })
        .collect())
}

/// First index into the subordinator-path section used by the pairing.
fn pairing_offset(bank: &SimulationBank, seed: u64) -> usize {
    (seed % bank.sub_paths.len() as u64) as usize
}

fn check_sizes(bank: &SimulationBank, order: usize, n_tuples: usize) -> Result<()> {
    if n_tuples == 0 {
        return Err(config("at least one Monte Carlo tuple is needed"));
    }
    if n_tuples > bank.records.len() || order * n_tuples > bank.sub_paths.len() {
        return Err(config(format!(
            "order {order} with {n_tuples} tuples needs {n_tuples} records and {} subordinator paths; \
             the bank has {} and {}",
            order * n_tuples,
            bank.records.len(),
            bank.sub_paths.len()
        )));
    }
    Ok(())
}

/// Covariances `sigma^2 I^L_{a,b}` of one path for mesh nodes `lo <= a < b`,
/// with `b` restricted to a requested set of end points.
struct PairTable {
    lo: usize,
    n: usize,
    /// `ends[b - lo]` holds rows `a = lo..b`, or nothing if `b` was not requested.
    ends: Vec<Vec<f64>>,
}

impl PairTable {
    fn build(table: &CovarianceTable, lo: usize, hi: usize, ends: &[usize], sigma2: f64, n: usize) -> Self {
        let mut out = vec![Vec::new(); hi - lo + 1];
        for &b in ends {
            let mut rows = vec![0.0; (b - lo) * n];
            table.all_to_into(lo, b, &mut rows);
            for v in rows.iter_mut() {
                *v = (*v * sigma2).max(COVARIANCE_FLOOR);
            }
            out[b - lo] = rows;
        }
        Self { lo, n, ends: out }
    }

    fn get(&self, a: usize, b: usize) -> &[f64] {
        let row = &self.ends[b - self.lo];
        &row[(a - self.lo) * self.n..(a - self.lo + 1) * self.n]
    }
}

/// `v1_s(t, x)`: left Riemann sum over `u` in `{s, s + mesh, ..., t - mesh}`
/// of the product expectation, record `i` paired with subordinator path
/// `(seed + i) mod M_sub`.
pub fn v1_estimate(
    bank: &SimulationBank,
    spec: &ProblemSpec,
    shift: &TimeShift,
    q: &QueryParams,
    mesh: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<IterateEstimate> {
    let obs = q.observable();
    let ctx = Context::new(bank, spec, shift, q, mesh)?;
    check_sizes(bank, 1, n_pairs)?;
    let offset = pairing_offset(bank, seed);
    let values: Vec<f64> = (0..n_pairs)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let n = ctx.n();
            let (js, jt) = (ctx.js, ctx.jt);
            let rec = &bank.records[i];
            let cov_path = &bank.sub_paths[(offset + i) % bank.sub_paths.len()];
            let i1 = PairTable::build(&CovarianceTable::new(&rec.sub, spec, ctx.mesh)?, js, jt, &[jt], ctx.sigma2, n);
            let i0 = PairTable::build(&CovarianceTable::new(cov_path, spec, ctx.mesh)?, js, jt, &[jt], ctx.sigma2, n);
            let (mut z, mut d, mut b, mut f, mut y) =
                (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let mut sum = 0.0;
            for u in js..jt {
                ctx.ou_at_into(i, u, &mut z);
                ctx.segment_into(i, u, jt, &mut d);
                ctx.drift_into(u, &z, &mut b);
                ctx.forcing.between_into(u, jt, &mut f);
                let e = &ctx.decay[jt - u];
                let (c0, c1) = (i0.get(u, jt), i1.get(u, jt));
                let mut factor = 0.0;
                for k in 0..n {
                    factor += e[k] * b[k] * d[k] / (c0[k].sqrt() * c1[k].sqrt());
                    y[k] = (c0[k] / c1[k]).sqrt() * d[k] + f[k] + e[k] * z[k];
                }
                sum += obs(&y) * factor;
            }
            Ok(sum * ctx.mesh.step())
        })
        .collect::<Result<_>>()?;
    estimate(&values, 1, q)
}

/// Per-tuple data of the general engine.
struct Tuple<'c> {
    record: usize,
    /// `rec_cov.get(a, b) = sigma^2 I^L_{a,b}(omega_m)`.
    rec_cov: PairTable,
    /// `cov[j] = sigma^2 I^L(omega_j)`, `j = 0..m`.
    cov: Vec<PairTable>,
    ctx: &'c Context<'c>,
    order: usize,
}

impl Tuple<'_> {
    /// Adds to `acc` the contribution of every ordered node sequence that
    /// continues from node `a` at level `p` with state `y = Y_p`.
    fn descend(&self, p: usize, a: usize, y: &[f64], prod: f64, obs: &Observable<'_>, acc: &mut f64) {
        let ctx = self.ctx;
        let n = ctx.n();
        let m = self.order;
        let mut drift = vec![0.0; n];
        ctx.drift_into(a, y, &mut drift);
        let (mut d, mut f, mut next) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let ends = if p == m { ctx.jt..ctx.jt + 1 } else { a + 1..ctx.jt - (m - p) + 1 };
        let cov = &self.cov[m - p];
        for b in ends {
            ctx.segment_into(self.record, a, b, &mut d);
            ctx.forcing.between_into(a, b, &mut f);
            let e = &ctx.decay[b - a];
            let (cc, cr) = (cov.get(a, b), self.rec_cov.get(a, b));
            let mut factor = 0.0;
            for k in 0..n {
                factor += e[k] * drift[k] * d[k] / (cc[k].sqrt() * cr[k].sqrt());
                next[k] = (cc[k] / cr[k]).sqrt() * d[k] + f[k] + e[k] * y[k];
            }
            let weight = prod * factor;
            if weight == 0.0 {
                continue;
            }
            if p == m {
                *acc += obs(&next) * weight;
            } else {
                self.descend(p + 1, b, &next, weight, obs, acc);
            }
        }
    }
}

/// The iterate of order `order = n + 1 >= 1` from the general expansion:
/// an `order`-fold left Riemann sum over `s <= s_1 < ... < s_order < t`;
/// Monte Carlo tuple `i` combines record `i` (all `Z` values and the record
/// covariances) with subordinator paths `seed + i * order + j`,
/// `j = 0..order`, modulo `M_sub`.
pub fn vn_estimate(
    bank: &SimulationBank,
    spec: &ProblemSpec,
    shift: &TimeShift,
    q: &QueryParams,
    order: usize,
    mesh: f64,
    n_tuples: usize,
    seed: u64,
) -> Result<IterateEstimate> {
    let obs = q.observable();
    vn_estimate_with(bank, spec, shift, q, order, mesh, n_tuples, seed, &obs)
}

#[allow(clippy::too_many_arguments)]
pub fn vn_estimate_with(
    bank: &SimulationBank,
    spec: &ProblemSpec,
    shift: &TimeShift,
    q: &QueryParams,
    order: usize,
    mesh: f64,
    n_tuples: usize,
    seed: u64,
    observable: &Observable<'_>,
) -> Result<IterateEstimate> {
    let values = vn_samples(bank, spec, shift, q, order, mesh, n_tuples, seed, observable)?;
    estimate(&values, order as i32, q)
}

/// Per-tuple values of [`vn_estimate_with`] in tuple order.
#[allow(clippy::too_many_arguments)]
pub fn vn_samples(
    bank: &SimulationBank,
    spec: &ProblemSpec,
    shift: &TimeShift,
    q: &QueryParams,
    order: usize,
    mesh: f64,
    n_tuples: usize,
    seed: u64,
    observable: &Observable<'_>,
) -> Result<Vec<f64>> {
    if order == 0 || order > MAX_SUPPORTED_ORDER {
        return Err(config(format!(
            "iterate order {order} is not supported (1..={MAX_SUPPORTED_ORDER})"
        )));
    }
    let ctx = Context::new(bank, spec, shift, q, mesh)?;
    check_sizes(bank, order, n_tuples)?;
    if ctx.jt - ctx.js < order {
        return Err(config(format!(
            "order {order} needs at least {order} mesh steps between s and t"
        )));
    }
    let offset = pairing_offset(bank, seed);
    let (js, jt, n) = (ctx.js, ctx.jt, ctx.n());
    let interior: Vec<usize> = (js + 1..jt).collect();
    let all: Vec<usize> = (js + 1..=jt).collect();
    let h_m = ctx.mesh.step().powi(order as i32);
    let values: Vec<f64> = (0..n_tuples)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let rec = &bank.records[i];
            let rec_ends: &[usize] = if order == 1 { &[jt] } else { &all };
            let rec_cov = PairTable::build(&CovarianceTable::new(&rec.sub, spec, ctx.mesh)?, js, jt, rec_ends, ctx.sigma2, n);
            let cov = (0..order)
                .map(|j| {
                    let path = &bank.sub_paths[(offset + i * order + j) % bank.sub_paths.len()];
                    // omega_0 covers the last interval only
                    let ends: &[usize] = if j == 0 { &[jt] } else { &interior };
                    Ok(PairTable::build(&CovarianceTable::new(path, spec, ctx.mesh)?, js, jt, ends, ctx.sigma2, n))
                })
                .collect::<Result<Vec<_>>>()?;
            let tuple = Tuple {
                record: i,
                rec_cov,
                cov,
                ctx: &ctx,
                order,
            };
            let mut acc = 0.0;
            let mut z = vec![0.0; n];
            for s1 in js..=jt - order {
                ctx.ou_at_into(i, s1, &mut z);
                tuple.descend(1, s1, &z, 1.0, observable, &mut acc);
            }
            Ok(acc * h_m)
        })
        .collect::<Result<_>>()?;
    Ok(values)
}

/// Directional derivative `<grad v0(x), h>` with standard error, from
/// `E[phi(Z_t) <(I^L_{s,t})^{-1} e^{(t-s)A} h, Z_t - e^{(t-s)A} x - F_{s,t}>]`.
pub fn ou_gradient(
    bank: &SimulationBank,
    spec: &ProblemSpec,
    shift: &TimeShift,
    q: &QueryParams,
    direction: &[f64],
) -> Result<(f64, f64)> {
    let obs = q.observable();
    ou_gradient_with(bank, spec, shift, q, direction, &obs)
}

pub fn ou_gradient_with(
    bank: &SimulationBank,
    spec: &ProblemSpec,
    shift: &TimeShift,
    q: &QueryParams,
    direction: &[f64],
    observable: &Observable<'_>,
) -> Result<(f64, f64)> {
    let ctx = Context::new(bank, spec, shift, q, bank.coarse_grid.step())?;
    if direction.len() != spec.dim {
        return Err(config("direction has the wrong dimension"));
    }
    if bank.records.is_empty() {
        return Err(config("the bank holds no convolution records"));
    }
    let (js, jt, n) = (ctx.js, ctx.jt, ctx.n());
    let values: Vec<f64> = (0..bank.records.len())
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let table = CovarianceTable::new(&bank.records[r].sub, spec, ctx.mesh)?;
            let cov = PairTable::build(&table, js, jt, &[jt], ctx.sigma2, n);
            let (mut z, mut d) = (vec![0.0; n], vec![0.0; n]);
            ctx.ou_at_into(r, jt, &mut z);
            ctx.segment_into(r, js, jt, &mut d);
            let (c, e) = (cov.get(js, jt), &ctx.decay[jt - js]);
            let weight: f64 = (0..n).map(|k| e[k] * direction[k] * d[k] / c[k]).sum();
            Ok(observable(&z) * weight)
        })
        .collect::<Result<_>>()?;
    mean_and_std_error(&values)
}

/// One line of a relative-error report.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialSumRow {
    pub order: i32,
    pub iterate: f64,
    pub iterate_se: f64,
    pub partial_sum: f64,
    pub partial_sum_se: f64,
    /// `(P - sum_{i <= n} v^i) / P`.
    pub rel_error: f64,
    pub rel_error_se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartialSumReport {
    pub benchmark: f64,
    pub benchmark_se: f64,
    pub rows: Vec<PartialSumRow>,
}

/// Partial sums of the iterates and their relative errors against the
/// benchmark. Standard errors treat all estimates as independent; the
/// relative error's uses the delta method.
pub fn partial_sums(estimates: &[IterateEstimate], benchmark: &IterateEstimate) -> Result<PartialSumReport> {
    if estimates.is_empty() {
        return Err(config("no iterates to sum"));
    }
    if benchmark.value == 0.0 {
        return Err(Error::Numerical("benchmark is zero; relative error undefined".into()));
    }
    for (i, e) in estimates.iter().enumerate() {
        if e.order != i as i32 {
            return Err(config(format!(
                "iterates must be ordered 0, 1, ...; position {i} has order {}",
                e.order
            )));
        }
    }
    let p = benchmark.value;
    let mut sum = 0.0;
    let mut var = 0.0;
    let rows = estimates
        .iter()
        .map(|e| {
            sum += e.value;
            var += e.std_error * e.std_error;
            let rel = (p - sum) / p;
            let d_p = sum / (p * p);
            let rel_var = d_p * d_p * benchmark.std_error.powi(2) + var / (p * p);
            PartialSumRow {
                order: e.order,
                iterate: e.value,
                iterate_se: e.std_error,
                partial_sum: sum,
                partial_sum_se: var.sqrt(),
                rel_error: rel,
                rel_error_se: rel_var.sqrt(),
            }
        })
        .collect();
    Ok(PartialSumReport {
        benchmark: p,
        benchmark_se: benchmark.std_error,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::{generate_bank, BankConfig};

    fn spec(n: usize) -> ProblemSpec {
        ProblemSpec::with_squared_modes(0.75, n, 1.0).unwrap()
    }

    fn query(n: usize, field: VectorField, use_shift: bool) -> QueryParams {
        QueryParams {
            s: 0.0,
            t: 1.0,
            x: vec![1.0; n],
            sigma_scale: 1.0,
            radius: 1.0,
            field,
            use_shift,
        }
    }

    fn dummy(value: f64, se: f64, order: i32) -> IterateEstimate {
        IterateEstimate {
            value,
            std_error: se,
            n_samples: 10,
            order,
            meta: query(1, VectorField::Zero, false).meta(),
        }
    }

    #[test]
    fn pairwise_sum_is_accurate() {
        let v = vec![0.1; 10_000];
        assert!((pairwise_sum(&v) - 1000.0).abs() < 1e-10);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn nan_samples_are_numerical_failures() {
        assert!(matches!(mean_and_std_error(&[1.0, f64::NAN]), Err(Error::Numerical(_))));
        let (m, se) = mean_and_std_error(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn partial_sum_report() {
        let r = partial_sums(&[dummy(0.863, 0.0, 0), dummy(0.0187, 0.0, 1)], &dummy(0.899, 0.0, -1)).unwrap();
        assert!((r.rows[1].rel_error - 0.0192).abs() < 5e-5);
        assert!((r.rows[0].rel_error - 0.036 / 0.899).abs() < 1e-12);
        let same = partial_sums(&[dummy(0.5, 0.01, 0)], &dummy(0.5, 0.01, -1)).unwrap();
        assert_eq!(same.rows[0].rel_error, 0.0);
        assert!(same.rows[0].rel_error_se > 0.0);
        assert!(partial_sums(&[], &dummy(0.5, 0.0, -1)).is_err());
        assert!(matches!(
            partial_sums(&[dummy(0.5, 0.0, 0)], &dummy(0.0, 0.0, -1)),
            Err(Error::Numerical(_))
        ));
        assert!(partial_sums(&[dummy(0.5, 0.0, 1)], &dummy(0.5, 0.0, -1)).is_err());
    }

    #[test]
    fn query_validation() {
        let sp = spec(2);
        let mut q = query(2, VectorField::Sine, false);
        assert!(q.validate(&sp).is_ok());
        q.s = 1.0;
        assert!(q.validate(&sp).is_err());
        q.s = 0.0;
        q.sigma_scale = 0.0;
        assert!(q.validate(&sp).is_err());
        q.sigma_scale = 1.0;
        q.x = vec![1.0; 3];
        assert!(q.validate(&sp).is_err());
        assert_eq!(query(2, VectorField::Sine, true).meta().x, "1*e");
    }

    #[test]
    fn benchmark_radius_zero_is_one() {
        let sp = spec(5);
        let mut q = query(5, VectorField::Sine, false);
        q.radius = 0.0;
        let est = em_benchmark(&sp, &q, 200, 1e-2, 1, EmScheme::Exponential).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.order, -1);
    }

    #[test]
    fn benchmark_schemes_agree_on_a_mild_problem() {
        let sp = ProblemSpec::new(0.75, 1.0, vec![1.0, 4.0], vec![1.0, 1.0], 1.0).unwrap();
        let q = QueryParams { sigma_scale: 0.5, ..query(2, VectorField::Sine, false) };
        let a = em_benchmark(&sp, &q, 20_000, 1e-3, 3, EmScheme::Exponential).unwrap();
        let b = em_benchmark(&sp, &q, 20_000, 1e-3, 3, EmScheme::Explicit).unwrap();
        // same random numbers; the schemes differ by O(delta)
        assert!((a.value - b.value).abs() < 0.01, "{} vs {}", a.value, b.value);
        let stiff = spec(100);
        let q100 = query(100, VectorField::Sine, false);
        assert!(em_benchmark(&stiff, &q100, 10, 1e-3, 3, EmScheme::Explicit).is_err());
    }

    #[test]
    fn benchmark_series_matches_single_times() {
        let sp = spec(4);
        let q = query(4, VectorField::Sine, false);
        let series = em_benchmark_series(&sp, &q, &[0.5, 1.0], 500, 1e-2, 9, EmScheme::Exponential).unwrap();
        let single = em_benchmark(&sp, &QueryParams { t: 0.5, ..q.clone() }, 500, 1e-2, 9, EmScheme::Exponential).unwrap();
        assert_eq!(series[0].value, single.value);
        assert_eq!(series[1].meta.t, 1.0);
    }

    #[test]
    fn shift_flag_must_match_the_supplied_shift() {
        let sp = spec(3);
        let bank = generate_bank(&sp, &BankConfig::new(1e-2, 1e-2, 2, 2, 1)).unwrap();
        let q = query(3, VectorField::Sine, true);
        let zero = QueryParams { use_shift: false, ..q.clone() }.build_shift(&sp, 1e-3).unwrap();
        assert!(v0_estimate(&bank, &sp, &zero, &q).is_err());
        let shift = q.build_shift(&sp, 1e-3).unwrap();
        assert!(v0_estimate(&bank, &sp, &shift, &q).is_ok());
        let off = QueryParams { use_shift: false, ..q };
        assert!(v0_estimate(&bank, &sp, &shift, &off).is_err());
    }

    #[test]
    fn weak_noise_v0_is_the_flow_indicator() {
        let sp = spec(10);
        let bank = generate_bank(&sp, &BankConfig::new(1e-3, 1e-2, 1, 50, 4)).unwrap();
        for radius in [0.5, 2.0] {
            let q = QueryParams {
                sigma_scale: 1e-12,
                radius,
                ..query(10, VectorField::Sine, true)
            };
            let shift = q.build_shift(&sp, 1e-4).unwrap();
            let est = v0_estimate(&bank, &sp, &shift, &q).unwrap();
            let flow_end = shift.flow_at(1.0).unwrap();
            assert_eq!(est.value, indicator_observable(flow_end, radius));
        }
    }

    #[test]
    fn zero_drift_iterates_vanish() {
        let sp = spec(6);
        let bank = generate_bank(&sp, &BankConfig::new(1e-3, 1e-2, 40, 20, 2)).unwrap();
        let q = query(6, VectorField::Zero, false);
        let shift = q.build_shift(&sp, 1e-3).unwrap();
        assert_eq!(v1_estimate(&bank, &sp, &shift, &q, 1e-2, 20, 0).unwrap().value, 0.0);
        for order in [1, 2] {
            let v = vn_estimate(&bank, &sp, &shift, &q, order, 5e-2, 20, 3).unwrap();
            assert_eq!(v.value, 0.0);
            assert_eq!(v.std_error, 0.0);
        }
    }

    #[test]
    fn order_one_engine_matches_first_iterate() {
        let sp = spec(8);
        let bank = generate_bank(&sp, &BankConfig::new(1e-3, 1e-2, 60, 30, 5)).unwrap();
        for (field, shift_on) in [
            (VectorField::Sine, true),
            (VectorField::bounded_cubic_default(8), false),
        ] {
            let q = QueryParams { sigma_scale: 0.7, ..query(8, field, shift_on) };
            let shift = q.build_shift(&sp, 1e-3).unwrap();
            for seed in [0, 17] {
                let a = v1_estimate(&bank, &sp, &shift, &q, 1e-2, 30, seed).unwrap();
                let b = vn_estimate(&bank, &sp, &shift, &q, 1, 1e-2, 30, seed).unwrap();
                assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1e-300), "{a:?} {b:?}");
                assert!((a.std_error - b.std_error).abs() <= 1e-12 * a.std_error.max(1e-300));
            }
        }
    }

    #[test]
    fn unsupported_orders_and_sizes_are_rejected() {
        let sp = spec(3);
        let bank = generate_bank(&sp, &BankConfig::new(1e-2, 1e-2, 4, 4, 1)).unwrap();
        let q = query(3, VectorField::Sine, false);
        let shift = q.build_shift(&sp, 1e-2).unwrap();
        assert!(vn_estimate(&bank, &sp, &shift, &q, 0, 1e-2, 1, 0).is_err());
        assert!(vn_estimate(&bank, &sp, &shift, &q, 3, 1e-2, 1, 0).is_err());
        assert!(vn_estimate(&bank, &sp, &shift, &q, 2, 1e-2, 3, 0).is_err());
        assert!(v1_estimate(&bank, &sp, &shift, &q, 1e-2, 5, 0).is_err());
        assert!(v1_estimate(&bank, &sp, &shift, &q, 1.5e-2, 2, 0).is_err());
    }

    #[test]
    fn gradient_is_linear_in_direction() {
        let sp = spec(4);
        let bank = generate_bank(&sp, &BankConfig::new(1e-3, 1e-2, 1, 200, 6)).unwrap();
        let q = query(4, VectorField::Sine, true);
        let shift = q.build_shift(&sp, 1e-3).unwrap();
        let (zero, se) = ou_gradient(&bank, &sp, &shift, &q, &[0.0; 4]).unwrap();
        assert_eq!((zero, se), (0.0, 0.0));
        let h = [0.3, -1.0, 0.5, 2.0];
        let h2: Vec<f64> = h.iter().map(|v| 2.0 * v).collect();
        let (g1, _) = ou_gradient(&bank, &sp, &shift, &q, &h).unwrap();
        let (g2, _) = ou_gradient(&bank, &sp, &shift, &q, &h2).unwrap();
        assert!((g2 - 2.0 * g1).abs() <= 1e-12 * g1.abs());
    }
}
