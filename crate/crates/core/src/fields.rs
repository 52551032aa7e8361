//! Drift nonlinearities `B0`, their smooth-max helpers, and the effective
//! drift `B = B0 - f`.

use std::fmt;
use std::sync::Arc;

use crate::error::{config, Result};
use crate::flow::TimeShift;

/// Evaluation hook for a caller-supplied drift: `(t, x, out)`.
pub type FieldFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// A bounded drift `B0(t, x)`.
#[derive(Clone)]
pub enum VectorField {
    Zero,
    /// `B0(x)_k = sin(x_k)`.
    Sine,
    /// Cubic pull towards `y_bar` with a smooth cutoff for large `|y_bar - x|_inf`.
    BoundedCubic { b0: f64, y_bar: Vec<f64>, a: f64 },
    Custom {
        name: String,
        /// Declared bound on `sup |B0(t, .)|_inf`.
        bound: f64,
        eval: Arc<FieldFn>,
    },
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Sine => write!(f, "Sine"),
            Self::BoundedCubic { b0, y_bar, a } => f
                .debug_struct("BoundedCubic")
                .field("b0", b0)
                .field("y_bar", y_bar)
                .field("a", a)
                .finish(),
            Self::Custom { name, bound, .. } => f
                .debug_struct("Custom")
                .field("name", name)
                .field("bound", bound)
                .finish_non_exhaustive(),
        }
    }
}

impl VectorField {
    /// The experiments' cubic field: `b0 = 2`, `y_bar = 2 e`, `a = 1e4`.
    pub fn bounded_cubic_default(dim: usize) -> Self {
        Self::BoundedCubic {
            b0: 2.0,
            y_bar: vec![2.0; dim],
            a: 1e4,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        bound: f64,
        eval: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(config("custom fields must declare a finite bound"));
        }
        Ok(Self::Custom {
            name: name.into(),
            bound,
            eval: Arc::new(eval),
        })
    }

    pub fn kind(&self) -> &str {
        match self {
            Self::Zero => "zero",
            Self::Sine => "sine",
            Self::BoundedCubic { .. } => "bounded_cubic",
            Self::Custom { name, .. } => name,
        }
    }

    /// A bound on `sup_x |B0(t, x)|_inf`.
    pub fn bound(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Sine => 1.0,
            Self::BoundedCubic { b0, y_bar, .. } => b0 * inf_norm(y_bar),
            Self::Custom { bound, .. } => *bound,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::BoundedCubic { b0, y_bar, a } => {
                if y_bar.len() != dim {
                    return Err(config(format!(
                        "y_bar has {} entries, problem dimension is {dim}",
                        y_bar.len()
                    )));
                }
                if !(*b0 > 0.0 && *a > 0.0) {
                    return Err(config("bounded cubic field needs b0 > 0 and a > 0"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Writes `B0(t, x)` into `out`.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Zero => out.fill(0.0),
            Self::Sine => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v.sin();
                }
            }
            Self::BoundedCubic { b0, y_bar, a } => bounded_cubic_into(*b0, y_bar, *a, x, out),
            Self::Custom { eval, .. } => eval(t, x, out),
        }
    }
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `sum x_i e^{a x_i} / sum e^{a x_i}`, evaluated with the exponent shifted by
/// the maximum entry.
pub fn soft_max(x: &[f64], a: f64) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for &v in x {
        let w = (a * (v - m)).exp();
        num += v * w;
        den += w;
    }
    num / den
}

/// Componentwise `x_k tanh(a x_k)`.
pub fn soft_abs(x: &[f64], a: f64) -> Vec<f64> {
    x.iter().map(|&v| v * (a * v).tanh()).collect()
}

fn bounded_cubic_into(b0: f64, y_bar: &[f64], a: f64, x: &[f64], out: &mut [f64]) {
    let c = b0 * inf_norm(y_bar);
    // out holds y_bar - x until the last loop
    for ((o, y), v) in out.iter_mut().zip(y_bar).zip(x) {
        *o = y - v;
    }
    let mut m = f64::NEG_INFINITY;
    for &d in out.iter() {
        m = m.max(d * (a * d).tanh());
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &d in out.iter() {
        let g = d * (a * d).tanh();
        let w = (a * (g - m)).exp();
        num += g * w;
        den += w;
    }
    let s = num / den;
    let scale = c / (c + s * s * s);
    for o in out.iter_mut() {
        let d = *o;
        *o = scale * d * d * d;
    }
}

pub fn eval_field(field: &VectorField, t: f64, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    field.eval_into(t, x, &mut out);
    out
}

/// `B0(t, x) - f(t)`.
pub fn effective_drift(field: &VectorField, shift: &TimeShift, t: f64, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    effective_drift_into(field, shift, t, x, &mut out);
    out
}

pub fn effective_drift_into(field: &VectorField, shift: &TimeShift, t: f64, x: &[f64], out: &mut [f64]) {
    field.eval_into(t, x, out);
    if let Some(f) = shift.value_at(t) {
        for (o, v) in out.iter_mut().zip(f.iter()) {
            *o -= v;
        }
    }
}
