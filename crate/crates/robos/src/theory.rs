//! Generalization-gap bound for networks trained with the robos loss.
//!
//! For a depth-`d` network with 1-Lipschitz positive-homogeneous activations,
//! per-layer weight Frobenius norms `M_F(j)`, inputs bounded by `B` in
//! Euclidean norm, and `n` training samples, the gap between expected and
//! empirical risk is, with confidence `1 - eps`:
//!
//! ```text
//! 2 a B (sqrt(2 ln(2) d) + 1) prod_j M_F(j) / (e sqrt(n))
//!     + sqrt(8 ln(1/eps) / n)
//! ```
//!
//! The capacity term uses `a/e` as the loss Lipschitz constant. The analytic
//! derivative bound of the implemented loss is `lambda * a / e`; the
//! tightened variant with that extra factor is reported alongside as
//! `lipschitz_adjusted_bound`.

use serde::Serialize;
use thiserror::Error;

use crate::data::WindowedDataset;
use crate::loss::LossSpec;
use crate::nn::Network;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("confidence parameter must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("invalid bound inputs: {0}")]
    InvalidInputs(String),
    #[error("bound report requires a robos loss spec, got {0}")]
    NotRobosLoss(&'static str),
    #[error("empty training set")]
    EmptyTrainingSet,
}

/// Base of the `log` inside the depth factor `sqrt(2 log(2) d)`. The
/// Rademacher bound this term comes from uses the natural logarithm;
/// base 2 is exposed for sensitivity analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthLogBase {
    Natural,
    Two,
}

/// Everything the bound formula consumes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs {
    /// Loss shape parameter.
    pub a: f64,
    /// Bound on the Euclidean norm of inputs.
    #[serde(rename = "B")]
    pub input_norm_bound: f64,
    /// Number of weight matrices.
    #[serde(rename = "d")]
    pub depth: usize,
    /// Per-layer Frobenius norms, length `depth`.
    pub m_f: Vec<f64>,
    /// Training sample count.
    #[serde(rename = "n")]
    pub n_samples: usize,
    /// Confidence parameter in (0, 1).
    pub eps_conf: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<(), TheoryError> {
        if !(self.eps_conf > 0.0 && self.eps_conf < 1.0) {
            return Err(TheoryError::InvalidConfidence(self.eps_conf));
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(TheoryError::InvalidInputs(format!("a = {}", self.a)));
        }
        if !(self.input_norm_bound.is_finite() && self.input_norm_bound >= 0.0) {
            return Err(TheoryError::InvalidInputs(format!(
                "B = {}",
                self.input_norm_bound
            )));
        }
        if self.depth == 0 || self.m_f.len() != self.depth {
            return Err(TheoryError::InvalidInputs(format!(
                "depth {} with {} Frobenius norms",
                self.depth,
                self.m_f.len()
            )));
        }
        if self.m_f.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(TheoryError::InvalidInputs("negative Frobenius norm".into()));
        }
        if self.n_samples == 0 {
            return Err(TheoryError::InvalidInputs("n = 0".into()));
        }
        Ok(())
    }

    /// The two additive terms: capacity and concentration.
    fn terms(&self, base: DepthLogBase) -> (f64, f64) {
        let log2 = match base {
            DepthLogBase::Natural => std::f64::consts::LN_2,
            DepthLogBase::Two => 1.0,
        };
        let depth_factor = (2.0 * log2 * self.depth as f64).sqrt() + 1.0;
        let capacity: f64 = self.m_f.iter().product::<f64>();
        let n = self.n_samples as f64;
        let first = 2.0 * self.a * self.input_norm_bound * depth_factor * capacity
            / (std::f64::consts::E * n.sqrt());
        let second = (8.0 * (1.0 / self.eps_conf).ln() / n).sqrt();
        (first, second)
    }
}

/// Evaluates the gap bound with the natural-log depth factor.
pub fn generalization_bound(inputs: &BoundInputs) -> Result<f64, TheoryError> {
    generalization_bound_with_log(inputs, DepthLogBase::Natural)
}

pub fn generalization_bound_with_log(
    inputs: &BoundInputs,
    base: DepthLogBase,
) -> Result<f64, TheoryError> {
    inputs.validate()?;
    let (first, second) = inputs.terms(base);
    Ok(first + second)
}

/// The bound evaluated for a trained network, together with its inputs.
/// Serializes as `{a, B, d, m_f, n, eps_conf, bound,
/// lipschitz_adjusted_bound}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    #[serde(flatten)]
    pub inputs: BoundInputs,
    pub bound: f64,
    /// Same bound with the capacity term scaled by the loss bound
    /// parameter lambda (the tighter Lipschitz constant of the
    /// implemented derivative).
    pub lipschitz_adjusted_bound: f64,
}

/// Wires a trained network and its training data into the bound: `B` is the
/// largest training-input norm, `d` and `m_f` come from the network, and `n`
/// is the training window count.
pub fn bound_report(
    net: &Network,
    data: &WindowedDataset,
    spec: &LossSpec,
    eps_conf: f64,
) -> Result<BoundReport, TheoryError> {
    let LossSpec::Robos { a, lambda, .. } = *spec else {
        return Err(TheoryError::NotRobosLoss(spec.kind_name()));
    };
    let (train_inputs, _) = data.train_slices();
    if train_inputs.is_empty() {
        return Err(TheoryError::EmptyTrainingSet);
    }
    let input_norm_bound = train_inputs
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    let m_f = net.frobenius_norms();
    let inputs = BoundInputs {
        a,
        input_norm_bound,
        depth: m_f.len(),
        m_f,
        n_samples: train_inputs.len(),
        eps_conf,
    };
    inputs.validate()?;
    let (first, second) = inputs.terms(DepthLogBase::Natural);
    Ok(BoundReport {
        inputs,
        bound: first + second,
        lipschitz_adjusted_bound: lambda * first + second,
    })
}
