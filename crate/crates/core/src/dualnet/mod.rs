//! The magnitude/phase autoencoder pair, its combiner, the training
//! objectives and the feedback payload.

mod arch;
mod config;
mod losses;
mod model;
mod payload;

pub use arch::{Architecture, DenseSpec, SubNetwork};
pub use config::{FrameworkConfig, PhaseMethod, QuantizerKind, SignPlacement};
pub use losses::{
    complex_loss_t, loss_magnitude, loss_mdpp, loss_naive, loss_smdp, magnitude_loss_t, mdpp_loss_t, naive_loss_t,
    smdp_loss_t, SQRT_EPS,
};
pub use model::{DualNetModel, EvalOptions, EvalReport, PreparedSample, QuantMode, Reconstruction, Stage2Inputs};
pub use payload::{FeedbackPayload, PayloadLayout};
