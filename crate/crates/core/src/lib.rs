//! Multimodal variational autoencoder laboratory.
//!
//! Trains per-modality encoders and decoders joined in one latent space under
//! several KL-weight (beta) schedules and quantifies multimodal integration
//! with KL-divergence measures between reconstructions from full and partially
//! muted inputs.

pub mod checkpoint;
pub mod data;
mod error;
pub mod gaussian;
pub mod harness;
pub mod layout;
pub mod losses;
pub mod measures;
pub mod model;
pub mod nn;
pub mod schedule;

pub use error::{Error, Result};
pub use gaussian::DiagonalGaussian;
pub use layout::{Modality, ModalityLayout, Timestep};
pub use losses::LossBreakdown;
pub use model::{LatentMode, MultimodalVae};
pub use schedule::{BetaSchedule, ScheduleKind};
