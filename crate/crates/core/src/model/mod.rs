//! The autoregressive feature generator.
//!
//! A window is encoded by a small Transformer encoder; a causally masked
//! decoder then emits `s` Gaussian token distributions, one token at a time,
//! each conditioned on the window and the tokens sampled so far. Stochastic
//! rollouts (sample + log-density) drive training; deterministic rollouts
//! (the means) are the features downstream classifiers consume.

mod net;
mod params;

pub use net::{BoundPolicy, Episode, FeatureSequence, PolicyNetwork};
pub use params::ParamSet;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{AttnMask, Matrix, NumError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),

    #[error("{ctx}: expected {expected}, got {got}")]
    Shape { ctx: &'static str, expected: String, got: String },

    #[error("decoder prefix has {got} tokens; at most {max} fit before the last step")]
    PrefixTooLong { got: usize, max: usize },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io { path: std::path::PathBuf, source: std::io::Error },

    #[error(transparent)]
    Num(#[from] NumError),
}

/// Architecture and distribution hyperparameters.
///
/// `l` and `d` come from the data (window length, channel count); the rest
/// default to a deliberately small configuration that trains in CPU minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Window length in samples.
    pub l: usize,
    /// Input channels per sample.
    pub d: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub d_ff: usize,
    /// Tokens emitted per window.
    pub s: usize,
    /// Token dimension.
    pub k: usize,
    /// Clamp bounds for the predicted log standard deviation. The floor
    /// keeps the policy stochastic enough to explore; the ceiling keeps
    /// densities finite.
    pub logsig_min: f64,
    pub logsig_max: f64,
}

impl ModelConfig {
    pub fn new(l: usize, d: usize) -> Self {
        ModelConfig {
            l,
            d,
            d_model: 32,
            n_heads: 2,
            n_layers_enc: 1,
            n_layers_dec: 1,
            d_ff: 64,
            s: 5,
            k: 8,
            logsig_min: -5.0,
            logsig_max: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.l == 0 || self.d == 0 {
            return bad(format!("window {}x{} must be nonempty", self.l, self.d));
        }
        if self.d_model == 0 || self.d_model % 2 != 0 {
            return bad(format!(
                "d_model must be even for the sinusoidal encoding, got {}",
                self.d_model
            ));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} must divide into n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers_enc == 0 || self.n_layers_dec == 0 {
            return bad("need at least one encoder and one decoder layer".into());
        }
        if self.d_ff == 0 {
            return bad("d_ff must be nonzero".into());
        }
        if self.s == 0 || self.k == 0 {
            return bad(format!("token geometry {}x{} must be nonzero", self.s, self.k));
        }
        if !(self.logsig_min < self.logsig_max) {
            return bad(format!(
                "logsig clamp [{}, {}] is empty",
                self.logsig_min, self.logsig_max
            ));
        }
        Ok(())
    }

    /// Per-head key/query/value width.
    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Sinusoidal position encoding over positions 1..=n.
///
/// Entry (t, j) is sin(t / 10000^(2*floor(j/2)/d_model)) for even j and
/// cos of the same argument for odd j, with t starting at 1.
pub fn positional_encoding(n: usize, d_model: usize) -> Matrix {
    assert!(d_model % 2 == 0, "d_model must be even");
    let mut data = Vec::with_capacity(n * d_model);
    for t in 1..=n {
        for j in 0..d_model {
            let exponent = (2 * (j / 2)) as f64 / d_model as f64;
            let arg = t as f64 / 10000f64.powf(exponent);
            data.push(if j % 2 == 0 { arg.sin() } else { arg.cos() });
        }
    }
    Matrix::new(n, d_model, data).expect("sin/cos are finite")
}

/// Causal self-attention mask: position p may attend to positions q <= p.
pub fn causal_mask(s: usize) -> AttnMask {
    assert!(s >= 1, "mask needs at least one position");
    let mut allowed = Vec::with_capacity(s * s);
    for p in 0..s {
        for q in 0..s {
            allowed.push(q <= p);
        }
    }
    AttnMask::new(s, s, allowed).expect("lower-triangular rows are never empty")
}

pub const CHECKPOINT_SCHEMA: &str = "harfeat.checkpoint.v1";

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema: String,
    config: ModelConfig,
    params: ParamSet,
}

/// Write the network to a JSON checkpoint. All values survive bit-exactly.
pub fn save_checkpoint(path: &Path, net: &PolicyNetwork) -> Result<(), ModelError> {
    let file = CheckpointFile {
        schema: CHECKPOINT_SCHEMA.to_string(),
        config: net.config.clone(),
        params: net.params.clone(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| ModelError::Checkpoint(format!("encode: {e}")))?;
    std::fs::write(path, json + "\n")
        .map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })
}

/// Load a checkpoint, validating schema, config, and parameter layout.
pub fn load_checkpoint(path: &Path) -> Result<PolicyNetwork, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if file.schema != CHECKPOINT_SCHEMA {
        return Err(ModelError::Checkpoint(format!(
            "schema {:?}, expected {CHECKPOINT_SCHEMA:?}",
            file.schema
        )));
    }
    PolicyNetwork::from_parts(file.config, file.params)
}
