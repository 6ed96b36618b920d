//! Projection, minibatch sampling, step-size schedules, projected SGD and
//! proximal-point solvers.

mod projection;
mod prox;
mod sampling;
mod schedule;
mod sgd;

pub use projection::ProjectionDomain;
pub use prox::{gradient_norm_bound, moreau_grad, prox_local, prox_quadratic_closed_form};
pub use sampling::{minibatch_sample, minibatch_variance_formula, MinibatchSampler};
pub use schedule::{schedule_value, StepSchedule};
pub use sgd::sgd_erm;

pub(crate) use sgd::{run_projected_sgd, Anchor};
