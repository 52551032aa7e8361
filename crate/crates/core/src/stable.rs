//! One-sided strictly alpha-stable subordinator: increments, paths, and a
//! Laplace-transform check of the sampler.
//!
//! The subordinator is normalized so that
//! `E[exp(-lam L_t)] = exp(-t gamma_bar^alpha lam^alpha / cos(pi alpha / 2))`,
//! which is what the characteristic function
//! `exp(-gamma_bar^alpha |u|^alpha (1 - i tan(pi alpha / 2) sign u))`
//! gives after the substitution `u = i lam`.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;

use crate::error::{config, domain, Result};
use crate::model::{ProblemSpec, TimeGrid};
use crate::rng::{derive_seed, stream_rng, StreamKind};

/// Draws increments `L_{t+dt} - L_t` for fixed `(alpha, gamma_bar, dt)`.
///
/// Kanter's representation: with `U ~ Uniform(0, pi)` and `E ~ Exp(1)`,
/// `sin(alpha U) / sin(U)^{1/alpha} * (sin((1-alpha) U) / E)^{(1-alpha)/alpha}`
/// has Laplace transform `exp(-lam^alpha)`. It is rescaled by
/// `gamma_bar dt^{1/alpha} cos(pi alpha / 2)^{-1/alpha}`.
#[derive(Clone, Copy, Debug)]
pub struct StableIncrementSampler {
    alpha: f64,
    inv_alpha: f64,
    tail_exp: f64,
    scale: f64,
}

impl StableIncrementSampler {
    pub fn new(alpha: f64, gamma_bar: f64, dt: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(gamma_bar > 0.0 && gamma_bar.is_finite()) {
            return Err(domain(format!("gamma_bar must be positive, got {gamma_bar}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(domain(format!("dt must be positive, got {dt}")));
        }
        let inv_alpha = 1.0 / alpha;
        let scale = gamma_bar * dt.powf(inv_alpha) * (PI * alpha / 2.0).cos().powf(-inv_alpha);
        Ok(Self {
            alpha,
            inv_alpha,
            tail_exp: (1.0 - alpha) / alpha,
            scale,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// One strictly positive draw. Results that underflow are clamped to the
    /// smallest positive normal number.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = PI * rng.sample::<f64, _>(Open01);
        let e = -rng.sample::<f64, _>(Open01).ln();
        let a = (self.alpha * u).sin() / u.sin().powf(self.inv_alpha);
        let b = (((1.0 - self.alpha) * u).sin() / e).powf(self.tail_exp);
        let draw = self.scale * a * b;
        if draw >= f64::MIN_POSITIVE {
            draw
        } else {
            f64::MIN_POSITIVE
        }
    }
}

/// One draw of `L_{t+dt} - L_t`.
pub fn sample_stable_increment<R: Rng + ?Sized>(
    alpha: f64,
    gamma_bar: f64,
    dt: f64,
    rng: &mut R,
) -> Result<f64> {
    Ok(StableIncrementSampler::new(alpha, gamma_bar, dt)?.sample(rng))
}

/// `gamma_bar^alpha lam^alpha / cos(pi alpha / 2)`.
pub fn laplace_exponent(alpha: f64, gamma_bar: f64, lam: f64) -> f64 {
    if lam == 0.0 {
        return 0.0;
    }
    (gamma_bar * lam).powf(alpha) / (PI * alpha / 2.0).cos()
}

/// One realization of `L` on a uniform grid starting at time 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SubordinatorPath {
    pub grid: TimeGrid,
    /// `L` at every grid point; `values[0] == 0`, strictly increasing.
    pub values: Vec<f64>,
    pub seed: u64,
}

impl SubordinatorPath {
    /// The clock `L_r = r`, used as an exact oracle for quadrature.
    pub fn deterministic(grid: TimeGrid) -> Self {
        let values = (0..=grid.steps()).map(|i| i as f64 * grid.step()).collect();
        Self {
            grid,
            values,
            seed: 0,
        }
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("path has at least two points")
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.values.first() == Some(&0.0) && self.values.windows(2).all(|w| w[1] > w[0])
    }
}

/// Appends `current + increment`, nudging up by one ulp when the increment is
/// lost to rounding.
#[inline]
pub(crate) fn advance_clock(current: f64, increment: f64) -> f64 {
    let next = current + increment;
    if next > current {
        next
    } else {
        current.next_up()
    }
}

/// Cumulative sum of independent increments on `grid`, driven by the stream
/// seeded with `seed`.
pub fn sample_subordinator_path(spec: &ProblemSpec, grid: TimeGrid, seed: u64) -> Result<SubordinatorPath> {
    if grid.start() != 0.0 || grid.end() < spec.horizon * (1.0 - 1e-12) {
        return Err(config(format!(
            "subordinator grid must cover [0, {}], got [{}, {}]",
            spec.horizon,
            grid.start(),
            grid.end()
        )));
    }
    let sampler = StableIncrementSampler::new(spec.alpha, spec.gamma_bar, grid.step())?;
    let mut rng = stream_rng(seed);
    let mut values = Vec::with_capacity(grid.steps() + 1);
    let mut current = 0.0;
    values.push(current);
    for _ in 0..grid.steps() {
        current = advance_clock(current, sampler.sample(&mut rng));
        values.push(current);
    }
    Ok(SubordinatorPath { grid, values, seed })
}

/// One row of a sampler validation report.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceCheck {
    pub lam: f64,
    /// Sample mean of `exp(-lam L_1)`.
    pub empirical: f64,
    pub analytic: f64,
    pub std_error: f64,
    /// `|empirical - analytic| > 3 std_error`.
    pub flagged: bool,
}

/// Compares the empirical Laplace transform of `L_1` with the analytic one.
pub fn validate_sampler(
    alpha: f64,
    gamma_bar: f64,
    n_samples: usize,
    lams: &[f64],
    seed: u64,
) -> Result<Vec<LaplaceCheck>> {
    validate_sampler_against(alpha, gamma_bar, n_samples, lams, seed, |lam| {
        (-laplace_exponent(alpha, gamma_bar, lam)).exp()
    })
}

/// As [`validate_sampler`], with a caller-supplied analytic transform.
pub fn validate_sampler_against(
    alpha: f64,
    gamma_bar: f64,
    n_samples: usize,
    lams: &[f64],
    seed: u64,
    analytic: impl Fn(f64) -> f64,
) -> Result<Vec<LaplaceCheck>> {
    if n_samples < 1000 {
        return Err(config(format!("sampler validation needs at least 1000 samples, got {n_samples}")));
    }
    let sampler = StableIncrementSampler::new(alpha, gamma_bar, 1.0)?;
    let mut rng = stream_rng(derive_seed(seed, StreamKind::Validation, 0));
    let draws: Vec<f64> = (0..n_samples).map(|_| sampler.sample(&mut rng)).collect();
    let n = n_samples as f64;
    Ok(lams
        .iter()
        .map(|&lam| {
            let (mean, var) = mean_and_variance(draws.iter().map(|l| (-lam * l).exp()));
            let std_error = (var / n).sqrt();
            let expected = analytic(lam);
            LaplaceCheck {
                lam,
                empirical: mean,
                analytic: expected,
                std_error,
                flagged: (mean - expected).abs() > 3.0 * std_error,
            }
        })
        .collect())
}

/// Two-pass sample mean and unbiased variance.
pub(crate) fn mean_and_variance(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}
