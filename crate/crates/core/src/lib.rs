//! Probabilistic rule models and their use as an interpretable correction
//! layer for drifting credit-risk scores.

pub mod analysis;
pub mod bits;
pub mod bundled;
pub mod calibrate;
pub mod correction;
pub mod data;
pub mod error;
pub mod io;
pub mod lbfgs;
pub mod mining;
pub mod model;
pub mod oracle;
pub mod scenario;
pub mod session;

pub use error::{Error, FieldError, Result};
pub use model::{
    logit, points_from_weight, sigmoid, weight_from_points, Contribution, Explanation, Literal,
    Mode, Rule, RuleModel,
};
