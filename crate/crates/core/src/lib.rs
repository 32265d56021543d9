//! Learned sequence features for cross-user human activity recognition.
//!
//! A small autoregressive encoder-decoder policy reads a sensor window and
//! emits a short sequence of Gaussian feature tokens. The policy is trained
//! with PPO against set-level rewards: spread class centroids apart, pull
//! each class's per-user centroids together. A linear probe on the frozen
//! deterministic tokens then measures how well the features transfer to
//! held-out users.
//!
//! Module map:
//! - [`numkit`]: matrices, reverse-mode autodiff, seeded RNG, gradient checks
//! - [`data`]: dataset ingestion, normalization, windowing, splits, synthesis
//! - [`model`]: the encoder-decoder policy and its rollouts
//! - [`rewards`]: class-discrimination and user-invariance objectives
//! - [`ppo`]: rollout collection, advantages, clipped surrogate training
//! - [`classifier`]: the multinomial logistic probe
//! - [`eval`]: leave-one-group-out experiments and metrics

pub mod classifier;
pub mod data;
pub mod eval;
pub mod model;
pub mod numkit;
pub mod ppo;
pub mod rewards;

pub use classifier::{ClassifierError, LrModel};
pub use data::{DataError, Dataset, LabeledWindow, SensorRecording, SplitPlan};
pub use eval::{ConfusionMatrix, EvalError, ExperimentResult, Summary};
pub use numkit::{check_gradient, derive_seed, AttnMask, Graph, Matrix, Node, NumError, Rng};
pub use ppo::{PpoConfig, PpoError, TrainLog};
