//! Minimal reverse-mode autodiff stack used by the network.
//!
//! Everything runs in `f64` so analytic gradients can be validated against
//! central finite differences at tight tolerances, and so that fixed seeds
//! give bitwise-reproducible runs on a given platform.

mod conv;
mod init;
mod layers;
mod norm;
mod optim;
mod params;
mod tape;

pub use conv::{adaptive_avg_pool_value, adaptive_window, ConvGeom};
pub use init::fan_in_uniform;
pub use layers::{BatchNorm2d, Conv2d, ConvTranspose2d, Linear};
pub use norm::BatchStats;
pub use optim::{Adam, CosineSchedule};
pub use params::{ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
