//! Named parameter storage with a deterministic layout.
//!
//! Parameters live in insertion order, which is fixed by `parameter_specs`,
//! so serialization, optimizer traversal, and checkpoint validation all see
//! the same sequence.

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};
use crate::numkit::{Matrix, Rng};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet {
    entries: Vec<(String, Matrix)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    fn push(&mut self, name: String, value: Matrix) {
        debug_assert!(
            !self.entries.iter().any(|(n, _)| *n == name),
            "duplicate parameter {name}"
        );
        self.entries.push((name, value));
    }

    pub fn get(&self, name: &str) -> &Matrix {
        &self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Matrix {
        &mut self
            .entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.entries.iter_mut().map(|(n, m)| (n.as_str(), m))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, m)| m.rows() * m.cols()).sum()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Uniform { fan_in: usize },
    /// Layer-norm bias.
    Zeros,
    /// Layer-norm gain.
    Ones,
}

#[derive(Debug, Clone)]
pub(super) struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    init: Init,
}

fn spec(name: String, rows: usize, cols: usize, init: Init) -> ParamSpec {
    ParamSpec { name, rows, cols, init }
}

/// The full parameter layout for a config, in canonical order.
pub(super) fn parameter_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (dm, dk, dff, k) = (cfg.d_model, cfg.d_k(), cfg.d_ff, cfg.k);
    let mut specs = Vec::new();

    let norm = |specs: &mut Vec<ParamSpec>, stem: &str| {
        specs.push(spec(format!("{stem}.g"), 1, dm, Init::Ones));
        specs.push(spec(format!("{stem}.b"), 1, dm, Init::Zeros));
    };
    let attention = |specs: &mut Vec<ParamSpec>, stem: &str| {
        for h in 0..cfg.n_heads {
            for w in ["wq", "wk", "wv"] {
                specs.push(spec(
                    format!("{stem}.h{h}.{w}"),
                    dm,
                    dk,
                    Init::Uniform { fan_in: dm },
                ));
            }
        }
        specs.push(spec(format!("{stem}.wo"), dm, dm, Init::Uniform { fan_in: dm }));
        specs.push(spec(format!("{stem}.bo"), 1, dm, Init::Uniform { fan_in: dm }));
    };
    let ffn = |specs: &mut Vec<ParamSpec>, stem: &str| {
        specs.push(spec(format!("{stem}.w1"), dm, dff, Init::Uniform { fan_in: dm }));
        specs.push(spec(format!("{stem}.b1"), 1, dff, Init::Uniform { fan_in: dm }));
        specs.push(spec(format!("{stem}.w2"), dff, dm, Init::Uniform { fan_in: dff }));
        specs.push(spec(format!("{stem}.b2"), 1, dm, Init::Uniform { fan_in: dff }));
    };

    specs.push(spec("in_proj.w".into(), cfg.d, dm, Init::Uniform { fan_in: cfg.d }));
    specs.push(spec("in_proj.b".into(), 1, dm, Init::Uniform { fan_in: cfg.d }));
    for le in 0..cfg.n_layers_enc {
        norm(&mut specs, &format!("enc{le}.ln1"));
        attention(&mut specs, &format!("enc{le}.attn"));
        norm(&mut specs, &format!("enc{le}.ln2"));
        ffn(&mut specs, &format!("enc{le}.ffn"));
    }
    norm(&mut specs, "enc.ln");

    specs.push(spec("dec.start".into(), 1, k, Init::Uniform { fan_in: k }));
    specs.push(spec("tok_proj.w".into(), k, dm, Init::Uniform { fan_in: k }));
    specs.push(spec("tok_proj.b".into(), 1, dm, Init::Uniform { fan_in: k }));
    for ld in 0..cfg.n_layers_dec {
        norm(&mut specs, &format!("dec{ld}.ln1"));
        attention(&mut specs, &format!("dec{ld}.self"));
        norm(&mut specs, &format!("dec{ld}.ln2"));
        attention(&mut specs, &format!("dec{ld}.cross"));
        norm(&mut specs, &format!("dec{ld}.ln3"));
        ffn(&mut specs, &format!("dec{ld}.ffn"));
    }
    norm(&mut specs, "dec.ln");

    for head in ["mu", "sig"] {
        specs.push(spec(format!("head.{head}.w"), dm, k, Init::Uniform { fan_in: dm }));
        specs.push(spec(format!("head.{head}.b"), 1, k, Init::Uniform { fan_in: dm }));
    }
    specs
}

/// Fresh parameters for `cfg`, drawn in spec order from `rng`.
pub(super) fn init_params(cfg: &ModelConfig, rng: &mut Rng) -> ParamSet {
    let mut params = ParamSet::new();
    for s in parameter_specs(cfg) {
        let n = s.rows * s.cols;
        let data = match s.init {
            Init::Uniform { fan_in } => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.uniform_in(-bound, bound)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        params.push(s.name, Matrix::new(s.rows, s.cols, data).expect("finite init"));
    }
    params
}

/// Check that `params` has exactly the names and shapes `cfg` demands.
pub(super) fn validate_layout(cfg: &ModelConfig, params: &ParamSet) -> Result<(), ModelError> {
    let specs = parameter_specs(cfg);
    if specs.len() != params.len() {
        return Err(ModelError::Checkpoint(format!(
            "{} parameters, expected {}",
            params.len(),
            specs.len()
        )));
    }
    for (s, (name, m)) in specs.iter().zip(params.iter()) {
        if s.name != name {
            return Err(ModelError::Checkpoint(format!(
                "parameter {name:?} out of place, expected {:?}",
                s.name
            )));
        }
        if (m.rows(), m.cols()) != (s.rows, s.cols) {
            return Err(ModelError::Checkpoint(format!(
                "parameter {name} is {}, expected {}x{}",
                m.dims(),
                s.rows,
                s.cols
            )));
        }
    }
    Ok(())
}
