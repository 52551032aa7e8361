//! The noiseless flow `x' = Ax + B0(t, x)`, the time-shift `f(t) = B0(t, x(t))`
//! and the forcing convolution `F_{s,t} = int_s^t e^{(t-r)A} f(r) dr`.

use std::borrow::Cow;

use crate::error::{config, domain, Result};
use crate::fields::VectorField;
use crate::model::{ProblemSpec, TimeGrid};

/// Integrator for the flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FlowSolver {
    /// Fourth-order exponential time-differencing Runge-Kutta (Cox-Matthews):
    /// the linear part is integrated exactly, so the scheme is stable and keeps
    /// the right quasi-static limit `x_k ~ B0_k / lambda_k` for any
    /// `lambda * step`.
    #[default]
    Rk4,
    /// Explicit Euler; only accepted when `max lambda * step <= 2`.
    Euler,
}

/// Forcing term `f` sampled on a uniform grid over `[0, T]`.
#[derive(Clone, Debug)]
pub struct TimeShift {
    pub grid: TimeGrid,
    /// `f` at every grid point; empty for the zero shift.
    pub values: Vec<Vec<f64>>,
    /// Starting time and point of the flow.
    pub origin: (f64, Vec<f64>),
    /// The flow `x(t)` at every grid point; empty for the zero shift.
    pub flow_values: Vec<Vec<f64>>,
    dim: usize,
}

impl TimeShift {
    /// `f = 0`, i.e. no recentering.
    pub fn zero(dim: usize, grid: TimeGrid) -> Self {
        Self {
            grid,
            values: Vec::new(),
            origin: (0.0, vec![0.0; dim]),
            flow_values: Vec::new(),
            dim,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `f(t)`, or `None` for the zero shift. Off-grid times are linearly
    /// interpolated.
    pub fn value_at(&self, t: f64) -> Option<Cow<'_, [f64]>> {
        if self.is_zero() {
            return None;
        }
        if let Some(i) = self.grid.index_of(t) {
            return Some(Cow::Borrowed(&self.values[i]));
        }
        let i = self.grid.snap_down(t).min(self.grid.steps() - 1);
        let theta = ((t - self.grid.point(i)) / self.grid.step()).clamp(0.0, 1.0);
        let (a, b) = (&self.values[i], &self.values[i + 1]);
        Some(Cow::Owned(
            a.iter().zip(b).map(|(p, q)| p + theta * (q - p)).collect(),
        ))
    }

    /// `x(t)` on the grid, or `None` for the zero shift.
    pub fn flow_at(&self, t: f64) -> Option<&[f64]> {
        if self.is_zero() {
            return None;
        }
        self.grid.index_of(t).map(|i| self.flow_values[i].as_slice())
    }
}

/// Integrates the flow from `(s, x)` over `grid` and records `f(t) = B0(t, x(t))`.
/// Before `s` the flow is held at `x`.
pub fn solve_flow(
    spec: &ProblemSpec,
    field: &VectorField,
    s: f64,
    x: &[f64],
    grid: TimeGrid,
    solver: FlowSolver,
) -> Result<TimeShift> {
    let n = spec.dim;
    if x.len() != n {
        return Err(config(format!("start point has {} entries, expected {n}", x.len())));
    }
    field.validate(n)?;
    if grid.start() != 0.0 || grid.end() < spec.horizon * (1.0 - 1e-12) {
        return Err(config("flow grid must cover [0, T]"));
    }
    let start = grid
        .index_of(s)
        .filter(|&i| i < grid.steps())
        .ok_or_else(|| domain(format!("flow start {s} is not an interior grid point")))?;
    let h = grid.step();
    if solver == FlowSolver::Euler {
        let stiff = spec.lambdas.iter().fold(0.0f64, |m, l| m.max(l * h));
        if stiff > 2.0 {
            return Err(config(format!(
                "explicit Euler is unstable here: max lambda * step = {stiff}"
            )));
        }
    }

    let etd = EtdCoefficients::new(&spec.lambdas, h);
    let mut flow = Vec::with_capacity(grid.steps() + 1);
    for _ in 0..=start {
        flow.push(x.to_vec());
    }
    let mut cur = x.to_vec();
    let (mut na, mut nb, mut nc, mut nd) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in start..grid.steps() {
        let t = grid.point(i);
        match solver {
            FlowSolver::Rk4 => {
                field.eval_into(t, &cur, &mut na);
                for k in 0..n {
                    a[k] = etd.half[k] * cur[k] + etd.q[k] * na[k];
                }
                field.eval_into(t + 0.5 * h, &a, &mut nb);
                for k in 0..n {
                    b[k] = etd.half[k] * cur[k] + etd.q[k] * nb[k];
                }
                field.eval_into(t + 0.5 * h, &b, &mut nc);
                for k in 0..n {
                    c[k] = etd.half[k] * a[k] + etd.q[k] * (2.0 * nc[k] - na[k]);
                }
                field.eval_into(t + h, &c, &mut nd);
                for k in 0..n {
                    cur[k] = etd.full[k] * cur[k]
                        + etd.f1[k] * na[k]
                        + 2.0 * etd.f2[k] * (nb[k] + nc[k])
                        + etd.f3[k] * nd[k];
                }
            }
            FlowSolver::Euler => {
                field.eval_into(t, &cur, &mut na);
                for k in 0..n {
                    cur[k] += h * (na[k] - spec.lambdas[k] * cur[k]);
                }
            }
        }
        flow.push(cur.clone());
    }
    let values = grid
        .points()
        .zip(&flow)
        .map(|(t, xt)| {
            let mut out = vec![0.0; n];
            field.eval_into(t, xt, &mut out);
            out
        })
        .collect();
    Ok(TimeShift {
        grid,
        values,
        origin: (s, x.to_vec()),
        flow_values: flow,
        dim: n,
    })
}

/// `phi_1, phi_2, phi_3` at `z <= 0`, where `phi_k(z) = sum_j z^j / (j + k)!`.
fn phi123(z: f64) -> [f64; 3] {
    if z.abs() < 1.0 {
        phi123_series(z)
    } else {
        phi123_closed(z)
    }
}

fn phi123_series(z: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        // sum_{j >= 0} z^j / (j + k + 1)!
        let mut term = 1.0 / (1..=k + 1).product::<usize>() as f64;
        let mut sum = term;
        for j in 1..20 {
            term *= z / (j + k + 1) as f64;
            sum += term;
        }
        *o = sum;
    }
    out
}

fn phi123_closed(z: f64) -> [f64; 3] {
    let em1 = z.exp_m1();
    let p1 = em1 / z;
    let p2 = (em1 - z) / (z * z);
    let p3 = (em1 - z - 0.5 * z * z) / (z * z * z);
    [p1, p2, p3]
}

/// Per-mode weights of the exponential Runge-Kutta step.
struct EtdCoefficients {
    full: Vec<f64>,
    half: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl EtdCoefficients {
    fn new(lambdas: &[f64], h: f64) -> Self {
        let n = lambdas.len();
        let mut c = Self {
            full: Vec::with_capacity(n),
            half: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        for &l in lambdas {
            let z = -l * h;
            let [p1, p2, p3] = phi123(z);
            c.full.push(z.exp());
            c.half.push((0.5 * z).exp());
            c.q.push(0.5 * h * phi123(0.5 * z)[0]);
            c.f1.push(h * (p1 - 3.0 * p2 + 4.0 * p3));
            c.f2.push(h * (p2 - 2.0 * p3));
            c.f3.push(h * (4.0 * p3 - p2));
        }
        c
    }
}

/// `(1 - e^{-z} - z e^{-z}) / z^2`, accurate down to `z = 0`.
fn linear_weight_kernel(z: f64) -> f64 {
    if z < 0.1 {
        // sum_{n >= 2} (-1)^n (n - 1) / n! z^{n-2}
        let mut term = 0.5;
        let mut sum = 0.5;
        for n in 3..14 {
            term *= -z / n as f64;
            sum += term * (n - 1) as f64;
        }
        sum
    } else {
        let e = (-z).exp();
        (1.0 - e - z * e) / (z * z)
    }
}

/// `(1 - e^{-z}) / z`, accurate down to `z = 0`.
pub(crate) fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// Per-mode bin weights for the piecewise-linear exponential rule: a bin
/// `[r, r + delta]` ending at `t` contributes
/// `e^{-lambda (t - r - delta)} (w_left f(r) + w_right f(r + delta))`.
pub(crate) struct ForcingWeights {
    pub decay: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl ForcingWeights {
    pub fn new(lambdas: &[f64], delta: f64) -> Self {
        let mut decay = Vec::with_capacity(lambdas.len());
        let mut left = Vec::with_capacity(lambdas.len());
        let mut right = Vec::with_capacity(lambdas.len());
        for &l in lambdas {
            let z = l * delta;
            let wl = delta * linear_weight_kernel(z);
            decay.push((-z).exp());
            left.push(wl);
            right.push(delta * phi1(z) - wl);
        }
        Self { decay, left, right }
    }
}

/// `F_{s,t}`: exact exponential weights against the piecewise-linear
/// interpolant of `f` on the shift's grid. Exact for constant `f` and for
/// every `lambda`; factors through the propagator, so
/// `F_{s,t} = e^{(t-u)A} F_{s,u} + F_{u,t}` holds to rounding.
pub fn forcing_convolution(spec: &ProblemSpec, shift: &TimeShift, s: f64, t: f64) -> Result<Vec<f64>> {
    if !(s < t) {
        return Err(domain(format!("forcing convolution needs s < t, got s = {s}, t = {t}")));
    }
    if s < 0.0 || t > spec.horizon * (1.0 + 1e-12) {
        return Err(domain(format!("[{s}, {t}] leaves [0, {}]", spec.horizon)));
    }
    let n = spec.dim;
    if shift.is_zero() {
        return Ok(vec![0.0; n]);
    }
    let grid = &shift.grid;
    let (i0, i1) = match (grid.index_of(s), grid.index_of(t)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(domain(format!("[{s}, {t}] is not aligned with the shift grid"))),
    };
    let w = ForcingWeights::new(&spec.lambdas, grid.step());
    let mut acc = vec![0.0; n];
    for i in i0..i1 {
        let (fl, fr) = (&shift.values[i], &shift.values[i + 1]);
        for k in 0..n {
            acc[k] = acc[k] * w.decay[k] + w.left[k] * fl[k] + w.right[k] * fr[k];
        }
    }
    Ok(acc)
}

/// `F_{0, c_j}` at every point `c_j` of a coarse grid, from which any
/// `F_{c_i, c_j} = F_{0, c_j} - e^{(c_j - c_i)A} F_{0, c_i}` is read off in
/// `O(N)`.
#[derive(Clone, Debug)]
pub struct ForcingTable {
    pub grid: TimeGrid,
    cumulative: Vec<Vec<f64>>,
    lambdas: Vec<f64>,
}

impl ForcingTable {
    pub fn new(spec: &ProblemSpec, shift: &TimeShift, grid: TimeGrid) -> Result<Self> {
        let n = spec.dim;
        let mut cumulative = vec![vec![0.0; n]; grid.steps() + 1];
        if !shift.is_zero() {
            let ratio = shift
                .grid
                .refinement_ratio(&grid)
                .ok_or_else(|| config("coarse grid is not aligned with the shift grid"))?;
            let first = shift.grid.index_of(grid.start()).expect("aligned");
            let w = ForcingWeights::new(&spec.lambdas, shift.grid.step());
            let mut acc = vec![0.0; n];
            for j in 0..grid.steps() {
                for i in first + j * ratio..first + (j + 1) * ratio {
                    let (fl, fr) = (&shift.values[i], &shift.values[i + 1]);
                    for k in 0..n {
                        acc[k] = acc[k] * w.decay[k] + w.left[k] * fl[k] + w.right[k] * fr[k];
                    }
                }
                cumulative[j + 1].copy_from_slice(&acc);
            }
        }
        Ok(Self {
            grid,
            cumulative,
            lambdas: spec.lambdas.clone(),
        })
    }

    /// `F_{c_i, c_j}` for coarse indices `i <= j`.
    pub fn between(&self, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.lambdas.len()];
        self.between_into(i, j, &mut out);
        out
    }

    pub fn between_into(&self, i: usize, j: usize, out: &mut [f64]) {
        assert!(i <= j, "forcing interval must be ordered");
        let tau = self.grid.point(j) - self.grid.point(i);
        let (a, b) = (&self.cumulative[i], &self.cumulative[j]);
        for k in 0..out.len() {
            out[k] = b[k] - (-self.lambdas[k] * tau).exp() * a[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::propagator;

    fn spec(lambdas: Vec<f64>) -> ProblemSpec {
        let n = lambdas.len();
        ProblemSpec::new(0.75, 1.0, lambdas, vec![1.0; n], 1.0).unwrap()
    }

    fn grid(step: f64) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, step).unwrap()
    }

    #[test]
    fn phi_functions_are_continuous() {
        for z in [-1.0, -1.5, -2.0] {
            let (pa, pb) = (phi123_series(z), phi123_closed(z));
            for k in 0..3 {
                assert!((pa[k] - pb[k]).abs() < 1e-13, "{pa:?} {pb:?}");
            }
        }
        assert_eq!(phi123(0.0), [1.0, 0.5, 1.0 / 6.0]);
        let z = -20.0f64;
        assert!((phi123(z)[2] - (z.exp() - 1.0 - z - z * z / 2.0) / z.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn stiff_modes_reach_their_quasi_static_value() {
        // x' = -lambda x + 1 relaxes to 1/lambda within a single step
        let sp = spec(vec![1.0, 1e4]);
        let field = VectorField::custom("one", 1.0, |_, _, o| o.fill(1.0)).unwrap();
        let shift = solve_flow(&sp, &field, 0.0, &[0.0, 1.0], grid(1e-3), FlowSolver::Rk4).unwrap();
        let x = shift.flow_at(0.5).unwrap();
        assert!((x[0] - (1.0 - (-0.5f64).exp())).abs() < 1e-13);
        assert!((x[1] - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn kernel_series_matches_closed_form() {
        for z in [0.05f64, 0.0999, 0.1, 0.2] {
            let e = (-z).exp();
            let direct = (1.0 - e - z * e) / (z * z);
            assert!((linear_weight_kernel(z) - direct).abs() < 1e-13);
        }
        assert_eq!(linear_weight_kernel(0.0), 0.5);
        assert_eq!(phi1(0.0), 1.0);
    }

    #[test]
    fn zero_field_is_exponential_decay() {
        let sp = ProblemSpec::with_squared_modes(0.75, 100, 1.0).unwrap();
        let x = vec![1.0; 100];
        let shift = solve_flow(&sp, &VectorField::Zero, 0.0, &x, grid(1e-3), FlowSolver::Rk4).unwrap();
        for (i, t) in shift.grid.points().enumerate() {
            let exact = propagator(&sp, t).unwrap();
            for k in 0..100 {
                let e = exact[k];
                let got = shift.flow_values[i][k];
                assert!((got - e).abs() <= 1e-8 * e.max(1e-300) || (got - e).abs() < 1e-300);
            }
        }
    }

    #[test]
    fn constant_drift_without_linear_part() {
        let sp = spec(vec![1e-12; 3]);
        let c = [0.5, -1.0, 2.0];
        let field = VectorField::custom("const", 2.0, move |_, _, o| o.copy_from_slice(&c)).unwrap();
        let shift = solve_flow(&sp, &field, 0.2, &[1.0, 1.0, 1.0], grid(1e-3), FlowSolver::Rk4).unwrap();
        let end = shift.flow_at(1.0).unwrap();
        for k in 0..3 {
            assert!((end[k] - (1.0 + c[k] * 0.8)).abs() < 1e-6);
        }
        assert_eq!(shift.flow_at(0.1).unwrap(), &[1.0, 1.0, 1.0]);
    }

    fn euler_oracle(lambda: f64, x0: f64, h: f64, steps: usize) -> f64 {
        let mut x = x0;
        for _ in 0..steps {
            x += h * (-lambda * x + x.sin());
        }
        x
    }

    #[test]
    fn sine_flow_matches_fine_euler() {
        let sp = spec(vec![1.0]);
        let shift = solve_flow(&sp, &VectorField::Sine, 0.0, &[1.0], grid(1e-3), FlowSolver::Rk4).unwrap();
        let oracle = euler_oracle(1.0, 1.0, 1e-6, 1_000_000);
        let got = shift.flow_at(1.0).unwrap()[0];
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn euler_mode_is_guarded_and_first_order() {
        let stiff = ProblemSpec::with_squared_modes(0.75, 100, 1.0).unwrap();
        let x = vec![1.0; 100];
        assert!(solve_flow(&stiff, &VectorField::Sine, 0.0, &x, grid(1e-3), FlowSolver::Euler).is_err());
        let sp = spec(vec![1.0]);
        let shift = solve_flow(&sp, &VectorField::Sine, 0.0, &[1.0], grid(1e-4), FlowSolver::Euler).unwrap();
        let oracle = euler_oracle(1.0, 1.0, 1e-4, 10_000);
        assert!((shift.flow_at(1.0).unwrap()[0] - oracle).abs() < 1e-12);
    }

    #[test]
    fn flow_semigroup() {
        let sp = ProblemSpec::with_squared_modes(0.75, 20, 1.0).unwrap();
        let x = vec![1.0; 20];
        let field = VectorField::bounded_cubic_default(20);
        let direct = solve_flow(&sp, &field, 0.0, &x, grid(1e-3), FlowSolver::Rk4).unwrap();
        let mid = direct.flow_at(0.4).unwrap().to_vec();
        let restarted = solve_flow(&sp, &field, 0.4, &mid, grid(1e-3), FlowSolver::Rk4).unwrap();
        let (a, b) = (direct.flow_at(1.0).unwrap(), restarted.flow_at(1.0).unwrap());
        for k in 0..20 {
            assert!((a[k] - b[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn flow_start_must_be_on_grid() {
        let sp = spec(vec![1.0]);
        assert!(solve_flow(&sp, &VectorField::Sine, 0.0005, &[1.0], grid(1e-3), FlowSolver::Rk4).is_err());
        assert!(solve_flow(&sp, &VectorField::Sine, 1.0, &[1.0], grid(1e-3), FlowSolver::Rk4).is_err());
    }

    #[test]
    fn forcing_of_zero_and_constant_shifts() {
        let sp = spec(vec![1.0, 1e4]);
        let zero = TimeShift::zero(2, grid(1e-3));
        assert_eq!(forcing_convolution(&sp, &zero, 0.0, 1.0).unwrap(), vec![0.0, 0.0]);

        let c = 0.7;
        let field = VectorField::custom("const", c, move |_, _, o| o.fill(c)).unwrap();
        let shift = solve_flow(&sp, &field, 0.0, &[1.0, 1.0], grid(1e-3), FlowSolver::Rk4).unwrap();
        let f = forcing_convolution(&sp, &shift, 0.0, 1.0).unwrap();
        let exact = [c * (1.0 - (-1.0f64).exp()), c * -(-1e4f64).exp_m1() / 1e4];
        for k in 0..2 {
            assert!(((f[k] - exact[k]) / exact[k]).abs() < 1e-10);
        }
        assert!(forcing_convolution(&sp, &shift, 0.5, 0.5).is_err());
        assert!(forcing_convolution(&sp, &shift, 0.5, 0.2).is_err());
    }

    #[test]
    fn forcing_richardson_self_consistency() {
        let sp = spec(vec![1.0]);
        let coarse = solve_flow(&sp, &VectorField::Sine, 0.0, &[1.0], grid(1e-3), FlowSolver::Rk4).unwrap();
        let fine = solve_flow(&sp, &VectorField::Sine, 0.0, &[1.0], grid(1e-5), FlowSolver::Rk4).unwrap();
        let a = forcing_convolution(&sp, &coarse, 0.0, 1.0).unwrap()[0];
        let b = forcing_convolution(&sp, &fine, 0.0, 1.0).unwrap()[0];
        assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
    }

    #[test]
    fn forcing_splits_through_the_propagator() {
        let sp = ProblemSpec::with_squared_modes(0.75, 100, 1.0).unwrap();
        let field = VectorField::bounded_cubic_default(100);
        let shift = solve_flow(&sp, &field, 0.0, &vec![1.0; 100], grid(1e-3), FlowSolver::Rk4).unwrap();
        for (s, u, t) in [(0.0, 0.3, 1.0), (0.1, 0.11, 0.5), (0.0, 0.999, 1.0)] {
            let whole = forcing_convolution(&sp, &shift, s, t).unwrap();
            let left = forcing_convolution(&sp, &shift, s, u).unwrap();
            let right = forcing_convolution(&sp, &shift, u, t).unwrap();
            let p = propagator(&sp, t - u).unwrap();
            for k in 0..100 {
                let joined = p[k] * left[k] + right[k];
                assert!((joined - whole[k]).abs() <= 1e-12 * whole[k].abs().max(1e-300), "k = {k}");
            }
        }
    }

    #[test]
    fn ou_mean_follows_the_flow() {
        let sp = ProblemSpec::with_squared_modes(0.75, 100, 1.0).unwrap();
        let x = vec![1.0; 100];
        // the cubic field has a boundary layer of width ~1/lambda_N at t = 0,
        // which the step has to resolve
        for (field, step, tol) in [
            (VectorField::Sine, 1e-3, 1e-6),
            (VectorField::bounded_cubic_default(100), 1e-5, 1e-6),
        ] {
            let shift = solve_flow(&sp, &field, 0.0, &x, grid(step), FlowSolver::Rk4).unwrap();
            for t in [0.1, 0.5, 1.0] {
                let f = forcing_convolution(&sp, &shift, 0.0, t).unwrap();
                let p = propagator(&sp, t).unwrap();
                let xt = shift.flow_at(t).unwrap();
                for k in 0..100 {
                    let mean = p[k] * x[k] + f[k];
                    assert!((mean - xt[k]).abs() < tol, "{} t = {t} k = {k}", field.kind());
                }
            }
        }
    }

    #[test]
    fn forcing_table_matches_direct_quadrature() {
        let sp = ProblemSpec::with_squared_modes(0.75, 30, 1.0).unwrap();
        let shift = solve_flow(&sp, &VectorField::Sine, 0.0, &vec![1.0; 30], grid(1e-3), FlowSolver::Rk4).unwrap();
        let table = ForcingTable::new(&sp, &shift, grid(1e-2)).unwrap();
        for (i, j) in [(0, 100), (20, 21), (37, 90)] {
            let direct = forcing_convolution(&sp, &shift, i as f64 / 100.0, j as f64 / 100.0).unwrap();
            let fast = table.between(i, j);
            for k in 0..30 {
                assert!((direct[k] - fast[k]).abs() < 1e-14, "({i}, {j}) k = {k}");
            }
        }
        assert!(table.between(5, 5).iter().all(|&v| v == 0.0));
        let zero = ForcingTable::new(&sp, &TimeShift::zero(30, grid(1e-3)), grid(1e-2)).unwrap();
        assert!(zero.between(0, 100).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shift_values_are_the_field_on_the_flow() {
        let sp = spec(vec![1.0, 4.0]);
        let shift = solve_flow(&sp, &VectorField::Sine, 0.3, &[1.0, -2.0], grid(1e-2), FlowSolver::Rk4).unwrap();
        for (f, x) in shift.values.iter().zip(&shift.flow_values) {
            assert_eq!(f[0], x[0].sin());
            assert_eq!(f[1], x[1].sin());
        }
        let mid = shift.value_at(0.505).unwrap();
        let (a, b) = (&shift.values[50], &shift.values[51]);
        assert!((mid[0] - 0.5 * (a[0] + b[0])).abs() < 1e-12);
    }
}
