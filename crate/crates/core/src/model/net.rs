//! Forward passes: encoder, causally masked decoder, rollouts, log-densities.
//!
//! Everything is built on the autodiff graph, so the same code path serves
//! value-only rollouts and differentiable training losses. Two exactness
//! properties are load-bearing and tested here:
//!
//! 1. Teacher-forced and incremental decoding agree bit-for-bit. Every op is
//!    row-local (matmul rows, per-row softmax over allowed entries, per-row
//!    layer norm), so decoder row p never sees rows > p, and running the
//!    decoder on a longer prefix cannot change earlier rows. This is what
//!    makes PPO ratios exactly 1 at unchanged parameters.
//! 2. A stochastic rollout's recorded log-densities equal a teacher-forced
//!    re-evaluation on its tokens, because both compute the same expression
//!    in the same order on the same bits.

use serde::{Deserialize, Serialize};

use super::params::{init_params, validate_layout, ParamSet};
use super::{causal_mask, positional_encoding, ModelConfig, ModelError};
use crate::numkit::{AttnMask, Graph, Matrix, Node, NumError, Rng};

const LN_EPS: f64 = 1e-5;
/// ln(2*pi), the normalization constant of the Gaussian log-density.
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Deterministic features for one window: the s x k matrix of token means.
pub type FeatureSequence = Matrix;

/// One stochastic pass over a window: sampled tokens, the distributions they
/// came from, and their log-densities under those distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    /// s x k sampled tokens.
    pub tokens: Matrix,
    /// s x k means.
    pub mus: Matrix,
    /// s x k log standard deviations, clamped to the config bounds.
    pub logsigs: Matrix,
    /// Per-token log-density of `tokens`.
    pub logprobs: Vec<f64>,
}

/// The policy: a config plus its named parameters.
#[derive(Debug, Clone)]
pub struct PolicyNetwork {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl PolicyNetwork {
    /// Fresh network with uniform(-1/sqrt(fan_in), +) weights.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let params = init_params(&config, rng);
        Ok(PolicyNetwork { config, params })
    }

    /// Assemble from existing parts (checkpoint load), validating layout.
    pub fn from_parts(config: ModelConfig, params: ParamSet) -> Result<Self, ModelError> {
        config.validate()?;
        validate_layout(&config, &params)?;
        Ok(PolicyNetwork { config, params })
    }

    /// Lease the parameters into a graph as differentiable leaves.
    pub fn bind(&self, g: &mut Graph) -> BoundPolicy {
        self.bind_impl(g, None)
    }

    /// As `bind`, but parameter `name` maps to the caller's node instead of a
    /// fresh leaf — the hook gradient checks use to vary one parameter.
    pub fn bind_with_override(&self, g: &mut Graph, name: &str, node: Node) -> BoundPolicy {
        self.bind_impl(g, Some((name, node)))
    }

    fn bind_impl(&self, g: &mut Graph, over: Option<(&str, Node)>) -> BoundPolicy {
        let nodes = self
            .params
            .iter()
            .map(|(n, m)| {
                let handle = match over {
                    Some((name, node)) if n == name => node,
                    _ => g.leaf(m.clone()),
                };
                (n.to_string(), handle)
            })
            .collect();
        BoundPolicy { cfg: self.config.clone(), nodes }
    }

    /// Encode one window to its l x d_model hidden representation.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let h = bound.encode(&mut g, x)?;
        Ok(g.value(h).clone())
    }

    /// Distribution for the next token given the tokens so far.
    pub fn decode_step(
        &self,
        h: &Matrix,
        prefix: &[Vec<f64>],
    ) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let cfg = &self.config;
        if prefix.len() >= cfg.s {
            return Err(ModelError::PrefixTooLong { got: prefix.len(), max: cfg.s - 1 });
        }
        if (h.rows(), h.cols()) != (cfg.l, cfg.d_model) {
            return Err(ModelError::Shape {
                ctx: "decode_step hidden state",
                expected: format!("{}x{}", cfg.l, cfg.d_model),
                got: h.dims(),
            });
        }
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let h_node = g.leaf(h.clone());
        let mut rows = vec![bound.node("dec.start")];
        for (i, z) in prefix.iter().enumerate() {
            if z.len() != cfg.k {
                return Err(ModelError::Shape {
                    ctx: "decode_step prefix token",
                    expected: format!("k={}", cfg.k),
                    got: format!("len {} at index {i}", z.len()),
                });
            }
            rows.push(g.leaf(Matrix::new(1, cfg.k, z.clone())?));
        }
        let (mu, logsig) = bound.decoder_pass(&mut g, h_node, &rows)?;
        let last = prefix.len();
        Ok((g.value(mu).row(last).to_vec(), g.value(logsig).row(last).to_vec()))
    }

    /// Sample an episode: token j ~ N(mu_j, diag(exp(logsig_j)^2)).
    pub fn rollout_stochastic(&self, x: &Matrix, rng: &mut Rng) -> Result<Episode, ModelError> {
        self.rollout(x, Some(rng))
    }

    /// Deterministic features: the token means, fed back autoregressively.
    pub fn rollout_deterministic(&self, x: &Matrix) -> Result<FeatureSequence, ModelError> {
        self.rollout(x, None).map(|episode| episode.tokens)
    }

    fn rollout(&self, x: &Matrix, mut rng: Option<&mut Rng>) -> Result<Episode, ModelError> {
        let cfg = &self.config;
        let (s, k) = (cfg.s, cfg.k);
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let h = bound.encode(&mut g, x)?;

        let mut rows = vec![bound.node("dec.start")];
        let mut tokens = Vec::with_capacity(s * k);
        let mut mus = Vec::with_capacity(s * k);
        let mut logsigs = Vec::with_capacity(s * k);
        let mut logprobs = Vec::with_capacity(s);
        for j in 0..s {
            let (mu_n, ls_n) = bound.decoder_pass(&mut g, h, &rows)?;
            let mu = g.value(mu_n).row(j).to_vec();
            let ls = g.value(ls_n).row(j).to_vec();
            let z: Vec<f64> = match rng.as_deref_mut() {
                Some(rng) => (0..k)
                    .map(|d| mu[d] + ls[d].exp() * rng.normal())
                    .collect(),
                None => mu.clone(),
            };
            logprobs.push(gauss_logp(&z, &mu, &ls));
            if j + 1 < s {
                rows.push(g.leaf(Matrix::new(1, k, z.clone())?));
            }
            tokens.extend_from_slice(&z);
            mus.extend_from_slice(&mu);
            logsigs.extend_from_slice(&ls);
        }
        Ok(Episode {
            tokens: Matrix::new(s, k, tokens)?,
            mus: Matrix::new(s, k, mus)?,
            logsigs: Matrix::new(s, k, logsigs)?,
            logprobs,
        })
    }

    /// Teacher-forced per-token log-densities of `tokens` given `x`.
    pub fn log_prob(&self, x: &Matrix, tokens: &Matrix) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let h = bound.encode(&mut g, x)?;
        let lp = bound.log_prob(&mut g, h, tokens)?;
        Ok(g.value(lp).as_slice().to_vec())
    }
}

/// A network's parameters leased into one graph, plus the graph builders.
pub struct BoundPolicy {
    cfg: ModelConfig,
    nodes: Vec<(String, Node)>,
}

impl BoundPolicy {
    fn node(&self, name: &str) -> Node {
        self.nodes
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .1
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Parameter leaves in canonical order, for optimizer traversal.
    pub fn params(&self) -> impl Iterator<Item = (&str, Node)> {
        self.nodes.iter().map(|(n, h)| (n.as_str(), *h))
    }

    /// Encoder over a window already leased into the graph.
    pub fn encode_node(&self, g: &mut Graph, x: Node) -> Result<Node, ModelError> {
        let got = (g.value(x).rows(), g.value(x).cols());
        if got != (self.cfg.l, self.cfg.d) {
            return Err(ModelError::Shape {
                ctx: "encoder input",
                expected: format!("{}x{}", self.cfg.l, self.cfg.d),
                got: format!("{}x{}", got.0, got.1),
            });
        }
        let proj = self.linear(g, x, "in_proj.w", "in_proj.b")?;
        let pe = g.leaf(positional_encoding(self.cfg.l, self.cfg.d_model));
        let mut cur = g.add(proj, pe)?;
        for le in 0..self.cfg.n_layers_enc {
            let stem = format!("enc{le}");
            let n1 = self.layer_norm(g, cur, &format!("{stem}.ln1"))?;
            let attn = self.attention(g, &format!("{stem}.attn"), n1, n1, None)?;
            cur = g.add(cur, attn)?;
            let n2 = self.layer_norm(g, cur, &format!("{stem}.ln2"))?;
            let f = self.ffn(g, n2, &format!("{stem}.ffn"))?;
            cur = g.add(cur, f)?;
        }
        Ok(self.layer_norm(g, cur, "enc.ln")?)
    }

    /// As `encode_node` for a window not yet in the graph.
    pub fn encode(&self, g: &mut Graph, x: &Matrix) -> Result<Node, ModelError> {
        let leaf = g.leaf(x.clone());
        self.encode_node(g, leaf)
    }

    /// Per-token log-densities of `tokens` (s x k) as a differentiable
    /// s x 1 node: the teacher-forced pass conditions step j on the GIVEN
    /// tokens 1..j-1, not on anything the model would sample.
    pub fn log_prob(&self, g: &mut Graph, h: Node, tokens: &Matrix) -> Result<Node, ModelError> {
        let (s, k) = (self.cfg.s, self.cfg.k);
        if (tokens.rows(), tokens.cols()) != (s, k) {
            return Err(ModelError::Shape {
                ctx: "log_prob tokens",
                expected: format!("{s}x{k}"),
                got: tokens.dims(),
            });
        }
        let mut rows = vec![self.node("dec.start")];
        for j in 0..s - 1 {
            rows.push(g.leaf(Matrix::new(1, k, tokens.row(j).to_vec())?));
        }
        let (mu, logsig) = self.decoder_pass(g, h, &rows)?;

        let z = g.leaf(tokens.clone());
        let diff = g.sub(z, mu)?;
        let neg_ls = g.scale(logsig, -1.0)?;
        let inv_sig = g.exp(neg_ls)?;
        let zn = g.mul(diff, inv_sig)?;
        let sq = g.mul(zn, zn)?;
        let rs_sq = g.row_sums(sq)?;
        let rs_ls = g.row_sums(logsig)?;
        let two_ls = g.scale(rs_ls, 2.0)?;
        let norm = g.leaf(Matrix::filled(s, 1, k as f64 * LN_2PI));
        let a = g.add(rs_sq, two_ls)?;
        let b = g.add(a, norm)?;
        Ok(g.scale(b, -0.5)?)
    }

    /// Run the decoder over `token_rows` (start token first), returning the
    /// per-position mean and clamped log-std nodes, each rows x k.
    fn decoder_pass(
        &self,
        g: &mut Graph,
        h: Node,
        token_rows: &[Node],
    ) -> Result<(Node, Node), ModelError> {
        let rows = token_rows.len();
        let toks = g.concat_rows(token_rows)?;
        let proj = self.linear(g, toks, "tok_proj.w", "tok_proj.b")?;
        let pe = g.leaf(positional_encoding(rows, self.cfg.d_model));
        let mut cur = g.add(proj, pe)?;
        let mask = causal_mask(rows);
        for ld in 0..self.cfg.n_layers_dec {
            let stem = format!("dec{ld}");
            let n1 = self.layer_norm(g, cur, &format!("{stem}.ln1"))?;
            let sa = self.attention(g, &format!("{stem}.self"), n1, n1, Some(&mask))?;
            cur = g.add(cur, sa)?;
            let n2 = self.layer_norm(g, cur, &format!("{stem}.ln2"))?;
            let ca = self.attention(g, &format!("{stem}.cross"), n2, h, None)?;
            cur = g.add(cur, ca)?;
            let n3 = self.layer_norm(g, cur, &format!("{stem}.ln3"))?;
            let f = self.ffn(g, n3, &format!("{stem}.ffn"))?;
            cur = g.add(cur, f)?;
        }
        let fin = self.layer_norm(g, cur, "dec.ln")?;
        let mu = self.linear(g, fin, "head.mu.w", "head.mu.b")?;
        let raw = self.linear(g, fin, "head.sig.w", "head.sig.b")?;
        let logsig = g.clamp(raw, self.cfg.logsig_min, self.cfg.logsig_max)?;
        Ok((mu, logsig))
    }

    fn linear(&self, g: &mut Graph, x: Node, w: &str, b: &str) -> Result<Node, NumError> {
        let wx = g.matmul(x, self.node(w))?;
        g.add_row_broadcast(wx, self.node(b))
    }

    fn layer_norm(&self, g: &mut Graph, x: Node, stem: &str) -> Result<Node, NumError> {
        g.layer_norm(x, self.node(&format!("{stem}.g")), self.node(&format!("{stem}.b")), LN_EPS)
    }

    fn ffn(&self, g: &mut Graph, x: Node, stem: &str) -> Result<Node, NumError> {
        let h1 = self.linear(g, x, &format!("{stem}.w1"), &format!("{stem}.b1"))?;
        let act = g.relu(h1)?;
        self.linear(g, act, &format!("{stem}.w2"), &format!("{stem}.b2"))
    }

    /// Multi-head scaled dot-product attention; queries from `xq`, keys and
    /// values from `xkv`.
    fn attention(
        &self,
        g: &mut Graph,
        stem: &str,
        xq: Node,
        xkv: Node,
        mask: Option<&AttnMask>,
    ) -> Result<Node, NumError> {
        let inv_sqrt_dk = 1.0 / (self.cfg.d_k() as f64).sqrt();
        let mut heads = Vec::with_capacity(self.cfg.n_heads);
        for hd in 0..self.cfg.n_heads {
            let q = g.matmul(xq, self.node(&format!("{stem}.h{hd}.wq")))?;
            let k = g.matmul(xkv, self.node(&format!("{stem}.h{hd}.wk")))?;
            let v = g.matmul(xkv, self.node(&format!("{stem}.h{hd}.wv")))?;
            let kt = g.transpose(k)?;
            let dots = g.matmul(q, kt)?;
            let scores = g.scale(dots, inv_sqrt_dk)?;
            let attn = match mask {
                Some(m) => g.softmax_rows_masked(scores, m)?,
                None => g.softmax_rows(scores)?,
            };
            heads.push(g.matmul(attn, v)?);
        }
        let cat = g.concat_cols(&heads)?;
        let out = g.matmul(cat, self.node(&format!("{stem}.wo")))?;
        g.add_row_broadcast(out, self.node(&format!("{stem}.bo")))
    }
}

/// Diagonal-Gaussian log-density, written to mirror the graph version
/// operation-for-operation so the two agree bit-for-bit.
fn gauss_logp(z: &[f64], mu: &[f64], ls: &[f64]) -> f64 {
    let mut rs_sq = 0.0;
    let mut rs_ls = 0.0;
    for d in 0..z.len() {
        let zn = (z[d] - mu[d]) * (-ls[d]).exp();
        rs_sq += zn * zn;
        rs_ls += ls[d];
    }
    -0.5 * ((rs_sq + 2.0 * rs_ls) + z.len() as f64 * LN_2PI)
}
