//! Problem configuration, diagonal operator arithmetic, time grids and the
//! closed-form expressions that the stochastic parts are checked against.
//!
//! The linear part `A = -diag(lambdas)` and the noise covariance
//! `Q = diag(sigmas^2)` are diagonal, so every operator in the crate is a
//! vector of per-mode entries.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config, domain, Result};

/// Full problem configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Stability index of the subordinator, in `(1/2, 1)`.
    pub alpha: f64,
    /// Subordinator scale.
    pub gamma_bar: f64,
    pub dim: usize,
    /// Diagonal of `-A`, ascending.
    pub lambdas: Vec<f64>,
    /// Diagonal of `sqrt(Q)`.
    pub sigmas: Vec<f64>,
    pub horizon: f64,
}

impl ProblemSpec {
    pub fn new(
        alpha: f64,
        gamma_bar: f64,
        lambdas: Vec<f64>,
        sigmas: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        let spec = Self {
            alpha,
            gamma_bar,
            dim: lambdas.len(),
            lambdas,
            sigmas,
            horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `lambda_k = k^2`, `sigma_k = 1`, `gamma_bar = 1`.
    pub fn with_squared_modes(alpha: f64, dim: usize, horizon: f64) -> Result<Self> {
        let lambdas = (1..=dim).map(|k| (k * k) as f64).collect();
        Self::new(alpha, 1.0, lambdas, vec![1.0; dim], horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return Err(config(format!("alpha must lie in (1/2, 1), got {}", self.alpha)));
        }
        if !(self.gamma_bar > 0.0 && self.gamma_bar.is_finite()) {
            return Err(config(format!("gamma_bar must be positive, got {}", self.gamma_bar)));
        }
        if self.dim == 0 {
            return Err(config("dimension must be positive"));
        }
        if self.lambdas.len() != self.dim || self.sigmas.len() != self.dim {
            return Err(config(format!(
                "expected {} eigenvalues and noise scales, got {} and {}",
                self.dim,
                self.lambdas.len(),
                self.sigmas.len()
            )));
        }
        if !self.lambdas.iter().all(|&l| l > 0.0 && l.is_finite()) {
            return Err(config("eigenvalues must be positive and finite"));
        }
        if self.lambdas.windows(2).any(|w| w[0] > w[1]) {
            return Err(config("eigenvalues must be sorted ascending"));
        }
        if !self.sigmas.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(config("noise scales must be positive and finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(config(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    /// SHA-256 over a canonical little-endian encoding of every field.
    pub fn hash(&self) -> SpecHash {
        let mut h = Sha256::new();
        h.update(b"levy-iterates/problem-spec/v1");
        h.update(self.alpha.to_le_bytes());
        h.update(self.gamma_bar.to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        for l in &self.lambdas {
            h.update(l.to_le_bytes());
        }
        for s in &self.sigmas {
            h.update(s.to_le_bytes());
        }
        h.update(self.horizon.to_le_bytes());
        SpecHash(h.finalize().into())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpecHash(pub [u8; 32]);

impl fmt::Display for SpecHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for SpecHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpecHash({self})")
    }
}

/// A diagonal `N x N` operator stored as its diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalOperator(Vec<f64>);

impl DiagonalOperator {
    pub fn new(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self(vec![1.0; dim])
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.0.len());
        self.0.iter().zip(x).map(|(d, v)| d * v).collect()
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v * c).collect())
    }

    pub fn powf(&self, p: f64) -> Self {
        Self(self.0.iter().map(|v| v.powf(p)).collect())
    }
}

impl Index<usize> for DiagonalOperator {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// Tolerance, in units of the step, for deciding that a time lies on a grid.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Uniform partition of `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    start: f64,
    end: f64,
    step: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(start < end) || !start.is_finite() || !end.is_finite() {
            return Err(config(format!("grid needs start < end, got [{start}, {end}]")));
        }
        if !(step > 0.0) {
            return Err(config(format!("grid step must be positive, got {step}")));
        }
        let ratio = (end - start) / step;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > GRID_TOLERANCE * steps.max(1.0) {
            return Err(config(format!(
                "step {step} does not divide [{start}, {end}] into a whole number of bins"
            )));
        }
        Ok(Self {
            start,
            end,
            step,
            steps: steps as usize,
        })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of bins; there are `steps() + 1` points.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn point(&self, i: usize) -> f64 {
        if i == self.steps {
            self.end
        } else {
            self.start + i as f64 * self.step
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|i| self.point(i))
    }

    fn position(&self, t: f64) -> f64 {
        (t - self.start) / self.step
    }

    /// Index of `t` if it lies on the grid (within [`GRID_TOLERANCE`] steps).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let r = self.position(t);
        let i = r.round();
        if (r - i).abs() <= GRID_TOLERANCE * i.abs().max(1.0) && i >= 0.0 && i <= self.steps as f64
        {
            Some(i as usize)
        } else {
            None
        }
    }

    /// Smallest grid index whose point is `>= t`, treating near-hits as hits.
    pub fn snap_up(&self, t: f64) -> usize {
        if let Some(i) = self.index_of(t) {
            return i;
        }
        (self.position(t).ceil().max(0.0) as usize).min(self.steps)
    }

    /// Largest grid index whose point is `<= t`, treating near-hits as hits.
    pub fn snap_down(&self, t: f64) -> usize {
        if let Some(i) = self.index_of(t) {
            return i;
        }
        (self.position(t).floor().max(0.0) as usize).min(self.steps)
    }

    /// Whether every point of `coarse` is a point of `self`; returns the ratio.
    pub fn refinement_ratio(&self, coarse: &TimeGrid) -> Option<usize> {
        let ratio = coarse.step / self.step;
        let r = ratio.round();
        if r < 1.0 || (ratio - r).abs() > GRID_TOLERANCE * r {
            return None;
        }
        if self.index_of(coarse.start).is_none() || self.index_of(coarse.end).is_none() {
            return None;
        }
        Some(r as usize)
    }
}

/// `e^{tau A}`: entry `k` is `exp(-lambda_k tau)`.
///
/// For large `lambda_k tau` the entry underflows to `0.0`.
pub fn propagator(spec: &ProblemSpec, tau: f64) -> Result<DiagonalOperator> {
    if !(tau >= 0.0) {
        return Err(domain(format!("propagator needs tau >= 0, got {tau}")));
    }
    Ok(DiagonalOperator(
        spec.lambdas.iter().map(|l| (-l * tau).exp()).collect(),
    ))
}

/// Covariance of the stochastic convolution over `[u, t]` when the clock is
/// `L_r = r`: entry `k` is `sigma_k^2 (1 - e^{-2 lambda_k (t-u)}) / (2 lambda_k)`.
pub fn covariance_deterministic_clock(spec: &ProblemSpec, u: f64, t: f64) -> Result<DiagonalOperator> {
    if !(u >= 0.0 && u < t) {
        return Err(domain(format!("need 0 <= u < t, got u = {u}, t = {t}")));
    }
    let tau = t - u;
    Ok(DiagonalOperator(
        spec.lambdas
            .iter()
            .zip(&spec.sigmas)
            .map(|(l, s)| s * s * -(-2.0 * l * tau).exp_m1() / (2.0 * l))
            .collect(),
    ))
}

pub fn euclidean_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `1` if `|x| > radius`, else `0`.
pub fn indicator_observable(x: &[f64], radius: f64) -> f64 {
    if radius == 0.0 {
        // squares of tiny entries can underflow
        return if x.iter().any(|&v| v != 0.0) { 1.0 } else { 0.0 };
    }
    // compare squared norms; the boundary case stays exact for representable radii
    let sq: f64 = x.iter().map(|v| v * v).sum();
    if sq > radius * radius {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(lambdas: Vec<f64>) -> ProblemSpec {
        let n = lambdas.len();
        ProblemSpec::new(0.75, 1.0, lambdas, vec![1.0; n], 1.0).unwrap()
    }

    #[test]
    fn propagator_identity_at_zero() {
        let s = ProblemSpec::with_squared_modes(0.6, 100, 1.0).unwrap();
        let p = propagator(&s, 0.0).unwrap();
        assert!(p.entries().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn propagator_single_mode() {
        let p = propagator(&spec(vec![1.0]), 0.5).unwrap();
        assert!((p[0] - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn propagator_squared_modes() {
        let s = ProblemSpec::with_squared_modes(0.6, 100, 1.0).unwrap();
        let p = propagator(&s, 1.0).unwrap();
        for k in 1..=100usize {
            assert_eq!(p[k - 1], (-((k * k) as f64)).exp());
        }
    }

    #[test]
    fn propagator_rejects_negative_tau() {
        assert!(propagator(&spec(vec![1.0]), -1e-3).is_err());
    }

    #[test]
    fn deterministic_clock_values() {
        let c = covariance_deterministic_clock(&spec(vec![1.0]), 0.0, 1.0).unwrap();
        assert!((c[0] - 0.432_332_358_381_693_6).abs() < 1e-15);
        let c = covariance_deterministic_clock(&spec(vec![1.0]), 0.5, 0.5 + 1e-12).unwrap();
        assert!(c[0] > 0.0 && c[0] < 1.1e-12);
        let c = covariance_deterministic_clock(&spec(vec![10_000.0]), 0.0, 1.0).unwrap();
        assert!((c[0] - 5.0e-5).abs() < 1e-18);
        assert!(covariance_deterministic_clock(&spec(vec![1.0]), 1.0, 1.0).is_err());
    }

    #[test]
    fn indicator_boundary_is_strict() {
        let e = vec![1.0; 100];
        assert_eq!(indicator_observable(&e, 1.0), 1.0);
        assert_eq!(indicator_observable(&[0.0; 100], 1.0), 0.0);
        assert_eq!(indicator_observable(&[3.0, 4.0], 5.0), 0.0);
        assert_eq!(indicator_observable(&[1e-300], 0.0), 1.0);
    }

    #[test]
    fn spec_validation() {
        assert!(ProblemSpec::new(0.5, 1.0, vec![1.0], vec![1.0], 1.0).is_err());
        assert!(ProblemSpec::new(0.7, 0.0, vec![1.0], vec![1.0], 1.0).is_err());
        assert!(ProblemSpec::new(0.7, 1.0, vec![2.0, 1.0], vec![1.0, 1.0], 1.0).is_err());
        assert!(ProblemSpec::new(0.7, 1.0, vec![1.0], vec![0.0], 1.0).is_err());
        assert!(ProblemSpec::new(0.7, 1.0, vec![1.0], vec![1.0], 0.0).is_err());
        let a = spec(vec![1.0, 4.0]);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.lambdas[1] = 4.5;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn grid_alignment() {
        let g = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
        assert_eq!(g.steps(), 1000);
        assert_eq!(g.index_of(0.37), Some(370));
        assert_eq!(g.index_of(0.3705), None);
        assert_eq!(g.snap_up(0.3705), 371);
        assert_eq!(g.snap_down(0.3705), 370);
        let coarse = TimeGrid::new(0.0, 1.0, 1e-2).unwrap();
        assert_eq!(g.refinement_ratio(&coarse), Some(10));
        assert!(TimeGrid::new(0.0, 1.0, 0.3).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 0.1).is_err());
        let odd = TimeGrid::new(0.0, 1.0, 0.025).unwrap();
        assert_eq!(g.refinement_ratio(&odd), Some(25));
        let off = TimeGrid::new(0.0, 1.0, 1.0 / 3.0).unwrap();
        assert_eq!(g.refinement_ratio(&off), None);
    }

    proptest! {
        #[test]
        fn propagator_semigroup(t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
            let s = spec(vec![0.3, 1.0, 4.0, 9.0]);
            let a = propagator(&s, t1).unwrap();
            let b = propagator(&s, t2).unwrap();
            let ab = propagator(&s, t1 + t2).unwrap();
            for k in 0..4 {
                let prod = a[k] * b[k];
                // rounding of t1 + t2 is amplified by lambda (t1 + t2)
                let tol = 4.0 * f64::EPSILON * ab[k] * (1.0 + s.lambdas[k] * (t1 + t2));
                prop_assert!((prod - ab[k]).abs() <= tol, "k={} {} vs {}", k, prod, ab[k]);
                prop_assert!(a[k] > 0.0 && a[k] <= 1.0);
            }
        }

        #[test]
        fn covariance_split_and_monotone(u in 0.0f64..0.5, dv in 0.01f64..0.5, dt in 0.01f64..0.5) {
            let s = spec(vec![0.5, 1.0, 25.0, 400.0]);
            let v = u + dv;
            let t = v + dt;
            let uv = covariance_deterministic_clock(&s, u, v).unwrap();
            let vt = covariance_deterministic_clock(&s, v, t).unwrap();
            let ut = covariance_deterministic_clock(&s, u, t).unwrap();
            for k in 0..4 {
                let prop = (-2.0 * s.lambdas[k] * (t - v)).exp();
                let split = prop * uv[k] + vt[k];
                prop_assert!(((split - ut[k]) / ut[k]).abs() < 1e-12);
                prop_assert!(ut[k] >= uv[k]);
            }
        }
    }
}
