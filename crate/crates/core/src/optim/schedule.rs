use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Step sizes for the local and global updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSchedule {
    /// `1 / ((mu + lambda)(k + 1))`, for the regularized local problems.
    InnerProx { mu: f64, lambda: f64 },
    /// `2 (mu + lambda) / (lambda mu (t + 1))`, for the server update.
    Outer { mu: f64, lambda: f64 },
    /// `1 / (mu (k + 1))`, for plain strongly convex ERM.
    PlainSc { mu: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::InnerProx { mu, lambda } => mu >= 0.0 && lambda >= 0.0 && mu + lambda > 0.0,
            StepSchedule::Outer { mu, lambda } => mu > 0.0 && lambda > 0.0,
            StepSchedule::PlainSc { mu } => mu > 0.0,
        };
        let finite = match *self {
            StepSchedule::InnerProx { mu, lambda } | StepSchedule::Outer { mu, lambda } => {
                mu.is_finite() && lambda.is_finite()
            }
            StepSchedule::PlainSc { mu } => mu.is_finite(),
        };
        if ok && finite {
            Ok(())
        } else {
            Err(invalid(format!("schedule parameters out of range: {self:?}")))
        }
    }

    /// Step at outer round `t` and inner step `k`. Each variant reads only
    /// the counter it depends on.
    #[inline]
    pub fn value(&self, t: usize, k: usize) -> f64 {
        match *self {
            StepSchedule::InnerProx { mu, lambda } => 1.0 / ((mu + lambda) * (k as f64 + 1.0)),
            StepSchedule::Outer { mu, lambda } => 2.0 * (mu + lambda) / (lambda * mu * (t as f64 + 1.0)),
            StepSchedule::PlainSc { mu } => 1.0 / (mu * (k as f64 + 1.0)),
        }
    }
}

pub fn schedule_value(s: &StepSchedule, t: usize, k: usize) -> Result<f64> {
    s.validate()?;
    Ok(s.value(t, k))
}
