//! Pointwise regression losses and their first derivatives.
//!
//! All losses are per-sample: the `1/n` averaging belongs to the training
//! loop (see [`crate::optim::empirical_risk`]). Residuals are signed,
//! `r = y - y_hat`; every loss here is an even function of `r`, so every
//! gradient is odd and vanishes at the origin (absolute loss by the
//! subgradient convention).
//!
//! The `robos` loss is the interesting one: with `u = |r|` and
//! `g = a*(sqrt(u^2 + eps) - sqrt(eps))` it evaluates to
//! `lambda * (1 - (g + 1) * exp(-g))`, which is smooth, even, bounded above
//! by `lambda`, and non-convex. Evaluating through `r^2` instead of `|r|`
//! makes the implementation even by construction, since
//! `sqrt(u^2 + eps) = sqrt(r^2 + eps)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Past this value of `g`, `(g + 1) * exp(-g)` underflows f64 and is
/// clamped to zero (so the loss saturates at exactly `lambda`).
const SATURATION_G: f64 = 700.0;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("invalid loss parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite residual: {0}")]
    NonFiniteResidual(f64),
    #[error("invalid profile range: need r_min < r_max and n_points >= 2, got [{r_min}, {r_max}] with {n_points} points")]
    InvalidRange {
        r_min: f64,
        r_max: f64,
        n_points: usize,
    },
}

/// Selects one of the five supported losses together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// Squared error `r^2`.
    Square,
    /// Absolute error `|r|`.
    Absolute,
    /// Piecewise square/absolute with threshold `delta`.
    Huber { delta: f64 },
    /// `ln(cosh(r))`.
    LogCosh,
    /// Robust bounded smooth loss with shape `a`, bound `lambda`, and
    /// stability `eps`.
    Robos { a: f64, lambda: f64, eps: f64 },
}

/// One grid point of a loss profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub r: f64,
    pub value: f64,
    pub grad: f64,
}

impl LossSpec {
    pub fn huber(delta: f64) -> Self {
        LossSpec::Huber { delta }
    }

    pub fn robos(a: f64, lambda: f64, eps: f64) -> Self {
        LossSpec::Robos { a, lambda, eps }
    }

    /// Short kind name used in CLI flags, file names, and table headers.
    pub fn kind_name(&self) -> &'static str {
        match self {
            LossSpec::Square => "square",
            LossSpec::Absolute => "absolute",
            LossSpec::Huber { .. } => "huber",
            LossSpec::LogCosh => "logcosh",
            LossSpec::Robos { .. } => "robos",
        }
    }

    /// Checks the parameter invariants for this kind.
    pub fn validate(&self) -> Result<(), LossError> {
        match *self {
            LossSpec::Square | LossSpec::Absolute | LossSpec::LogCosh => Ok(()),
            LossSpec::Huber { delta } => {
                if delta.is_finite() && delta > 0.0 {
                    Ok(())
                } else {
                    Err(LossError::InvalidParameter(format!(
                        "huber delta must be a positive finite real, got {delta}"
                    )))
                }
            }
            LossSpec::Robos { a, lambda, eps } => {
                for (name, v) in [("a", a), ("lambda", lambda), ("eps", eps)] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(LossError::InvalidParameter(format!(
                            "robos {name} must be a positive finite real, got {v}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Per-sample loss at signed residual `r`. Nonnegative; for `Robos`
    /// strictly below `lambda`.
    pub fn value(&self, r: f64) -> Result<f64, LossError> {
        self.validate()?;
        if !r.is_finite() {
            return Err(LossError::NonFiniteResidual(r));
        }
        Ok(match *self {
            LossSpec::Square => r * r,
            LossSpec::Absolute => r.abs(),
            LossSpec::Huber { delta } => {
                let u = r.abs();
                if u <= delta {
                    0.5 * r * r
                } else {
                    delta * (u - 0.5 * delta)
                }
            }
            LossSpec::LogCosh => log_cosh(r),
            LossSpec::Robos { a, lambda, eps } => {
                let g = a * ((r * r + eps).sqrt() - eps.sqrt());
                lambda * (1.0 - decay(g))
            }
        })
    }

    /// Derivative of [`LossSpec::value`] with respect to the signed residual.
    pub fn grad(&self, r: f64) -> Result<f64, LossError> {
        self.validate()?;
        if !r.is_finite() {
            return Err(LossError::NonFiniteResidual(r));
        }
        Ok(match *self {
            LossSpec::Square => 2.0 * r,
            // Subgradient 0 at the kink.
            LossSpec::Absolute => sign(r),
            LossSpec::Huber { delta } => {
                if r.abs() <= delta {
                    r
                } else {
                    delta * sign(r)
                }
            }
            LossSpec::LogCosh => r.tanh(),
            LossSpec::Robos { a, lambda, eps } => {
                let root = (r * r + eps).sqrt();
                let g = a * (root - eps.sqrt());
                if g > SATURATION_G {
                    0.0
                } else {
                    lambda * a * r * g * (-g).exp() / root
                }
            }
        })
    }

    /// Uniform grid of `(r, value, grad)` over `[r_min, r_max]`, endpoints
    /// included. Serializes naturally as `r,value,grad` CSV columns.
    pub fn profile(
        &self,
        r_min: f64,
        r_max: f64,
        n_points: usize,
    ) -> Result<Vec<ProfilePoint>, LossError> {
        self.validate()?;
        if !(r_min.is_finite() && r_max.is_finite() && r_min < r_max) || n_points < 2 {
            return Err(LossError::InvalidRange {
                r_min,
                r_max,
                n_points,
            });
        }
        let step = (r_max - r_min) / (n_points - 1) as f64;
        (0..n_points)
            .map(|i| {
                // Pin the last point to r_max so the endpoint is exact.
                let r = if i + 1 == n_points {
                    r_max
                } else {
                    r_min + step * i as f64
                };
                Ok(ProfilePoint {
                    r,
                    value: self.value(r)?,
                    grad: self.grad(r)?,
                })
            })
            .collect()
    }
}

fn sign(r: f64) -> f64 {
    // f64::signum maps +-0.0 to +-1.0, which is not the subgradient we want.
    if r == 0.0 {
        0.0
    } else {
        r.signum()
    }
}

/// `ln(cosh(r))` without overflowing `cosh` for large arguments:
/// `|r| + ln(1 + exp(-2|r|)) - ln 2`. Exact zero at the origin.
fn log_cosh(r: f64) -> f64 {
    let u = r.abs();
    u + (-2.0 * u).exp().ln_1p() - std::f64::consts::LN_2
}

/// `(g + 1) * exp(-g)` for `g >= 0`, clamped to 0 once it underflows.
fn decay(g: f64) -> f64 {
    if g > SATURATION_G {
        0.0
    } else {
        (g + 1.0) * (-g).exp()
    }
}
