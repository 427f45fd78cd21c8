//! Decoder-only transformer: causal self-attention + MLP blocks with
//! learned positional embeddings, trained from random initialization.
//!
//! Parameters live in one flat `Vec<f64>` addressed through a fixed layout;
//! the analytic backward pass writes into a gradient buffer of the same
//! shape, which keeps the optimizer and the finite-difference checks simple.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocab};
use super::{LmError, NextTokenModel};
use crate::rng;

const RMS_EPS: f64 = 1e-6;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;
const INIT_STD: f64 = 0.05;

/// Model and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    /// Longest token sequence the model accepts; 0 means "fit to the
    /// schema" (resolved to `1 + 4(M+1)` when fine-tuning).
    pub max_len: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Default sampling temperature.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            layers: 2,
            heads: 2,
            embed_dim: 64,
            max_len: 0,
            learning_rate: 3e-3,
            batch_size: 32,
            epochs: 50,
            temperature: 0.7,
            seed: 0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if self.layers == 0 || self.heads == 0 || self.embed_dim == 0 {
            return Err(LmError::BadConfig(
                "layers, heads and embed_dim must be positive".into(),
            ));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(LmError::BadConfig(format!(
                "embed_dim {} must be divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.max_len < 2 {
            return Err(LmError::BadConfig(format!(
                "max_len {} is too short for any sentence",
                self.max_len
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(LmError::BadTemperature(self.temperature));
        }
        Ok(())
    }

    /// Copy of the config with `max_len` resolved for `m` feature columns.
    pub fn resolved_for(&self, m: usize) -> LmConfig {
        let mut cfg = self.clone();
        if cfg.max_len == 0 {
            cfg.max_len = 1 + 4 * (m + 1);
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dims {
    v: usize,
    d: usize,
    h: usize,
    dh: usize,
    ff: usize,
    layers: usize,
    max_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerOffsets {
    ln1: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln2: usize,
    w1: usize,
    w2: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    wte: usize,
    wpe: usize,
    layers: Vec<LayerOffsets>,
    lnf: usize,
    wout: usize,
    total: usize,
}

impl Layout {
    fn new(dims: &Dims) -> Layout {
        let mut at = 0usize;
        let mut take = |n: usize| {
            let start = at;
            at += n;
            start
        };
        let wte = take(dims.v * dims.d);
        let wpe = take(dims.max_len * dims.d);
        let mut layers = Vec::with_capacity(dims.layers);
        for _ in 0..dims.layers {
            layers.push(LayerOffsets {
                ln1: take(dims.d),
                wq: take(dims.d * dims.d),
                wk: take(dims.d * dims.d),
                wv: take(dims.d * dims.d),
                wo: take(dims.d * dims.d),
                ln2: take(dims.d),
                w1: take(dims.ff * dims.d),
                w2: take(dims.d * dims.ff),
            });
        }
        let lnf = take(dims.d);
        let wout = take(dims.v * dims.d);
        Layout {
            wte,
            wpe,
            layers,
            lnf,
            wout,
            total: at,
        }
    }
}

/// `out = W x` with `W` row-major `[nout, nin]`.
fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let nin = x.len();
    for (o, slot) in out.iter_mut().enumerate() {
        let row = &w[o * nin..(o + 1) * nin];
        let mut acc = 0.0;
        for i in 0..nin {
            acc += row[i] * x[i];
        }
        *slot = acc;
    }
}

/// `dx += W^T dy`.
fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let nin = dx.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[o * nin..(o + 1) * nin];
        for i in 0..nin {
            dx[i] += g * row[i];
        }
    }
}

/// `dW += dy ⊗ x`.
fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let nin = x.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut dw[o * nin..(o + 1) * nin];
        for i in 0..nin {
            row[i] += g * x[i];
        }
    }
}

/// Normalize `x` in place into `out[i] = x[i] * ri * gain[i]`; returns `ri`.
fn rmsnorm(x: &[f64], gain: &[f64], out: &mut [f64]) -> f64 {
    let d = x.len() as f64;
    let ms = x.iter().map(|v| v * v).sum::<f64>() / d;
    let ri = 1.0 / (ms + RMS_EPS).sqrt();
    for i in 0..x.len() {
        out[i] = x[i] * ri * gain[i];
    }
    ri
}

/// Backward of [`rmsnorm`]: accumulates into `dgain` and `dx`.
fn rmsnorm_bwd(dn: &[f64], x: &[f64], ri: f64, gain: &[f64], dgain: &mut [f64], dx: &mut [f64]) {
    let d = x.len() as f64;
    let mut dot = 0.0;
    for i in 0..x.len() {
        dgain[i] += dn[i] * x[i] * ri;
        dot += dn[i] * gain[i] * x[i];
    }
    let c = ri * ri * ri / d * dot;
    for i in 0..x.len() {
        dx[i] += ri * dn[i] * gain[i] - c * x[i];
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Softmax over `row` in place, with max subtraction.
fn softmax_inplace(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

struct LayerActs {
    h_in: Vec<f64>,
    ri1: Vec<f64>,
    n1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    att: Vec<f64>, // [head][q][k], zero above the diagonal
    o: Vec<f64>,
    h_mid: Vec<f64>,
    ri2: Vec<f64>,
    n2: Vec<f64>,
    f1: Vec<f64>,
    act: Vec<f64>,
}

struct Pass {
    t: usize,
    layers: Vec<LayerActs>,
    xf: Vec<f64>,
    ri_f: Vec<f64>,
    nf: Vec<f64>,
    logits: Vec<f64>, // [t][v]
}

/// Per-layer, per-head attention weights for one input sequence.
///
/// `weight(l, h, q, k)` is exactly 0 whenever `k > q` (causal mask) and each
/// row sums to 1 over the allowed positions.
#[derive(Debug, Clone, Serialize)]
pub struct AttentionTrace {
    pub layers: usize,
    pub heads: usize,
    pub len: usize,
    weights: Vec<f64>,
}

impl AttentionTrace {
    pub fn weight(&self, layer: usize, head: usize, q: usize, k: usize) -> f64 {
        let t = self.len;
        self.weights[((layer * self.heads + head) * t + q) * t + k]
    }

    pub fn row(&self, layer: usize, head: usize, q: usize) -> &[f64] {
        let t = self.len;
        let base = ((layer * self.heads + head) * t + q) * t;
        &self.weights[base..base + t]
    }
}

/// A trained (ed or trainable) causal language model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSnapshot", into = "ModelSnapshot")]
pub struct Model {
    config: LmConfig,
    vocab: Vocab,
    dims: Dims,
    layout: Layout,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelSnapshot {
    config: LmConfig,
    vocab: Vocab,
    params: Vec<f64>,
}

impl From<Model> for ModelSnapshot {
    fn from(m: Model) -> Self {
        ModelSnapshot {
            config: m.config,
            vocab: m.vocab,
            params: m.params,
        }
    }
}

impl TryFrom<ModelSnapshot> for Model {
    type Error = LmError;

    fn try_from(s: ModelSnapshot) -> Result<Self, Self::Error> {
        let mut model = Model::init(&s.config, s.vocab)?;
        if s.params.len() != model.params.len() {
            return Err(LmError::BadConfig(format!(
                "checkpoint has {} parameters, config implies {}",
                s.params.len(),
                model.params.len()
            )));
        }
        model.params = s.params;
        Ok(model)
    }
}

impl Model {
    /// Random initialization from `config.seed`. `config.max_len` must be
    /// resolved (non-zero) at this point.
    pub fn init(config: &LmConfig, vocab: Vocab) -> Result<Model, LmError> {
        config.validate()?;
        let dims = Dims {
            v: vocab.size(),
            d: config.embed_dim,
            h: config.heads,
            dh: config.embed_dim / config.heads,
            ff: 4 * config.embed_dim,
            layers: config.layers,
            max_len: config.max_len,
        };
        let layout = Layout::new(&dims);
        let mut params = vec![0.0; layout.total];
        let mut rng = rng::substream(config.seed, 0x1717, 0);
        for p in params.iter_mut() {
            *p = gauss(&mut rng) * INIT_STD;
        }
        // norm gains start at identity
        for l in &layout.layers {
            params[l.ln1..l.ln1 + dims.d].fill(1.0);
            params[l.ln2..l.ln2 + dims.d].fill(1.0);
        }
        params[layout.lnf..layout.lnf + dims.d].fill(1.0);
        Ok(Model {
            config: config.clone(),
            vocab,
            dims,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.dims.max_len
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_tokens(&self, tokens: &[TokenId], max: usize) -> Result<(), LmError> {
        if tokens.is_empty() || tokens.len() > max {
            return Err(LmError::BadPrefix {
                len: tokens.len(),
                max,
            });
        }
        for &id in tokens {
            if id >= self.dims.v {
                return Err(LmError::BadTokenId {
                    id,
                    size: self.dims.v,
                });
            }
        }
        Ok(())
    }

    fn forward(&self, tokens: &[TokenId]) -> Pass {
        let Dims {
            d, h, dh, ff, v, ..
        } = self.dims;
        let t = tokens.len();
        let p = &self.params;
        let lo = &self.layout;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x = vec![0.0; t * d];
        for (pos, &tok) in tokens.iter().enumerate() {
            let te = &p[lo.wte + tok * d..lo.wte + (tok + 1) * d];
            let pe = &p[lo.wpe + pos * d..lo.wpe + (pos + 1) * d];
            for i in 0..d {
                x[pos * d + i] = te[i] + pe[i];
            }
        }

        let mut layers = Vec::with_capacity(self.dims.layers);
        for l in &lo.layers {
            let h_in = x.clone();
            let mut ri1 = vec![0.0; t];
            let mut n1 = vec![0.0; t * d];
            for pos in 0..t {
                ri1[pos] = rmsnorm(
                    &h_in[pos * d..(pos + 1) * d],
                    &p[l.ln1..l.ln1 + d],
                    &mut n1[pos * d..(pos + 1) * d],
                );
            }
            let mut q = vec![0.0; t * d];
            let mut k = vec![0.0; t * d];
            let mut vv = vec![0.0; t * d];
            for pos in 0..t {
                let n = &n1[pos * d..(pos + 1) * d];
                matvec(&p[l.wq..l.wq + d * d], n, &mut q[pos * d..(pos + 1) * d]);
                matvec(&p[l.wk..l.wk + d * d], n, &mut k[pos * d..(pos + 1) * d]);
                matvec(&p[l.wv..l.wv + d * d], n, &mut vv[pos * d..(pos + 1) * d]);
            }
            let mut att = vec![0.0; h * t * t];
            let mut o = vec![0.0; t * d];
            for head in 0..h {
                let off = head * dh;
                for qt in 0..t {
                    let row = &mut att[(head * t + qt) * t..(head * t + qt) * t + qt + 1];
                    let qv = &q[qt * d + off..qt * d + off + dh];
                    for (ku, slot) in row.iter_mut().enumerate() {
                        let kv = &k[ku * d + off..ku * d + off + dh];
                        let mut s = 0.0;
                        for i in 0..dh {
                            s += qv[i] * kv[i];
                        }
                        *slot = s * scale;
                    }
                    softmax_inplace(row);
                    let out = &mut o[qt * d + off..qt * d + off + dh];
                    for (ku, &w) in row.iter().enumerate() {
                        let val = &vv[ku * d + off..ku * d + off + dh];
                        for i in 0..dh {
                            out[i] += w * val[i];
                        }
                    }
                }
            }
            let mut h_mid = h_in.clone();
            let mut ao = vec![0.0; d];
            for pos in 0..t {
                matvec(&p[l.wo..l.wo + d * d], &o[pos * d..(pos + 1) * d], &mut ao);
                for i in 0..d {
                    h_mid[pos * d + i] += ao[i];
                }
            }
            let mut ri2 = vec![0.0; t];
            let mut n2 = vec![0.0; t * d];
            for pos in 0..t {
                ri2[pos] = rmsnorm(
                    &h_mid[pos * d..(pos + 1) * d],
                    &p[l.ln2..l.ln2 + d],
                    &mut n2[pos * d..(pos + 1) * d],
                );
            }
            let mut f1 = vec![0.0; t * ff];
            let mut act = vec![0.0; t * ff];
            let mut f2 = vec![0.0; d];
            x = h_mid.clone();
            for pos in 0..t {
                matvec(
                    &p[l.w1..l.w1 + ff * d],
                    &n2[pos * d..(pos + 1) * d],
                    &mut f1[pos * ff..(pos + 1) * ff],
                );
                for i in 0..ff {
                    act[pos * ff + i] = gelu(f1[pos * ff + i]);
                }
                matvec(
                    &p[l.w2..l.w2 + d * ff],
                    &act[pos * ff..(pos + 1) * ff],
                    &mut f2,
                );
                for i in 0..d {
                    x[pos * d + i] += f2[i];
                }
            }
            layers.push(LayerActs {
                h_in,
                ri1,
                n1,
                q,
                k,
                v: vv,
                att,
                o,
                h_mid,
                ri2,
                n2,
                f1,
                act,
            });
        }

        let xf = x;
        let mut ri_f = vec![0.0; t];
        let mut nf = vec![0.0; t * d];
        for pos in 0..t {
            ri_f[pos] = rmsnorm(
                &xf[pos * d..(pos + 1) * d],
                &p[lo.lnf..lo.lnf + d],
                &mut nf[pos * d..(pos + 1) * d],
            );
        }
        let mut logits = vec![0.0; t * v];
        for pos in 0..t {
            matvec(
                &p[lo.wout..lo.wout + v * d],
                &nf[pos * d..(pos + 1) * d],
                &mut logits[pos * v..(pos + 1) * v],
            );
        }
        Pass {
            t,
            layers,
            xf,
            ri_f,
            nf,
            logits,
        }
    }

    /// Logits over the vocabulary for the next token after `prefix`.
    pub fn logits(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        self.check_tokens(prefix, self.dims.max_len - 1)?;
        let pass = self.forward(prefix);
        let v = self.dims.v;
        Ok(pass.logits[(pass.t - 1) * v..pass.t * v].to_vec())
    }

    /// Sum of next-token negative log likelihoods over `seq`, in nats, plus
    /// the number of predicted tokens.
    pub fn sequence_nll(&self, seq: &[TokenId]) -> Result<(f64, usize), LmError> {
        self.check_tokens(seq, self.dims.max_len)?;
        if seq.len() < 2 {
            return Err(LmError::BadPrefix {
                len: seq.len(),
                max: self.dims.max_len,
            });
        }
        let inputs = &seq[..seq.len() - 1];
        let targets = &seq[1..];
        let pass = self.forward(inputs);
        let v = self.dims.v;
        let mut nll = 0.0;
        for (pos, &target) in targets.iter().enumerate() {
            let z = &pass.logits[pos * v..(pos + 1) * v];
            nll += log_sum_exp(z) - z[target];
        }
        Ok((nll, targets.len()))
    }

    /// Analytic gradient of the summed NLL; accumulates into `grads`
    /// (same layout as [`Model::params`]). Returns `(nll_sum, n_tokens)`.
    pub fn sequence_grad(&self, seq: &[TokenId], grads: &mut [f64]) -> Result<(f64, usize), LmError> {
        assert_eq!(grads.len(), self.params.len());
        self.check_tokens(seq, self.dims.max_len)?;
        if seq.len() < 2 {
            return Err(LmError::BadPrefix {
                len: seq.len(),
                max: self.dims.max_len,
            });
        }
        let Dims {
            d, h, dh, ff, v, ..
        } = self.dims;
        let scale = 1.0 / (dh as f64).sqrt();
        let inputs = &seq[..seq.len() - 1];
        let targets = &seq[1..];
        let pass = self.forward(inputs);
        let t = pass.t;
        let p = &self.params;
        let lo = &self.layout;

        // output head + cross entropy
        let mut nll = 0.0;
        let mut dnf = vec![0.0; t * d];
        {
            let wout = &p[lo.wout..lo.wout + v * d];
            let mut dlogits = vec![0.0; v];
            for (pos, &target) in targets.iter().enumerate() {
                let z = &pass.logits[pos * v..(pos + 1) * v];
                let lse = log_sum_exp(z);
                nll += lse - z[target];
                for c in 0..v {
                    dlogits[c] = (z[c] - lse).exp();
                }
                dlogits[target] -= 1.0;
                outer_acc(
                    &mut grads[lo.wout..lo.wout + v * d],
                    &dlogits,
                    &pass.nf[pos * d..(pos + 1) * d],
                );
                matvec_t_acc(wout, &dlogits, &mut dnf[pos * d..(pos + 1) * d]);
            }
        }

        // final norm
        let mut dx = vec![0.0; t * d];
        {
            let gain = &p[lo.lnf..lo.lnf + d];
            for pos in 0..t {
                rmsnorm_bwd(
                    &dnf[pos * d..(pos + 1) * d],
                    &pass.xf[pos * d..(pos + 1) * d],
                    pass.ri_f[pos],
                    gain,
                    &mut grads[lo.lnf..lo.lnf + d],
                    &mut dx[pos * d..(pos + 1) * d],
                );
            }
        }

        // layers in reverse
        for (li, l) in lo.layers.iter().enumerate().rev() {
            let acts = &pass.layers[li];

            // MLP path: x_out = h_mid + W2 gelu(W1 n2(h_mid))
            let mut dh_mid = dx.clone();
            {
                let w1 = &p[l.w1..l.w1 + ff * d];
                let w2 = &p[l.w2..l.w2 + d * ff];
                let gain2 = &p[l.ln2..l.ln2 + d];
                let mut da = vec![0.0; ff];
                let mut df1 = vec![0.0; ff];
                let mut dn2 = vec![0.0; d];
                for pos in 0..t {
                    let df2 = &dx[pos * d..(pos + 1) * d];
                    da.fill(0.0);
                    matvec_t_acc(w2, df2, &mut da);
                    outer_acc(
                        &mut grads[l.w2..l.w2 + d * ff],
                        df2,
                        &acts.act[pos * ff..(pos + 1) * ff],
                    );
                    for i in 0..ff {
                        df1[i] = da[i] * gelu_grad(acts.f1[pos * ff + i]);
                    }
                    outer_acc(
                        &mut grads[l.w1..l.w1 + ff * d],
                        &df1,
                        &acts.n2[pos * d..(pos + 1) * d],
                    );
                    dn2.fill(0.0);
                    matvec_t_acc(w1, &df1, &mut dn2);
                    rmsnorm_bwd(
                        &dn2,
                        &acts.h_mid[pos * d..(pos + 1) * d],
                        acts.ri2[pos],
                        gain2,
                        &mut grads[l.ln2..l.ln2 + d],
                        &mut dh_mid[pos * d..(pos + 1) * d],
                    );
                }
            }

            // attention path: h_mid = h_in + Wo o(n1(h_in))
            let mut dh_in = dh_mid.clone();
            {
                let wo = &p[l.wo..l.wo + d * d];
                let wq = &p[l.wq..l.wq + d * d];
                let wk = &p[l.wk..l.wk + d * d];
                let wv = &p[l.wv..l.wv + d * d];
                let gain1 = &p[l.ln1..l.ln1 + d];

                let mut do_heads = vec![0.0; t * d];
                for pos in 0..t {
                    let dao = &dh_mid[pos * d..(pos + 1) * d];
                    outer_acc(
                        &mut grads[l.wo..l.wo + d * d],
                        dao,
                        &acts.o[pos * d..(pos + 1) * d],
                    );
                    matvec_t_acc(wo, dao, &mut do_heads[pos * d..(pos + 1) * d]);
                }

                let mut dq = vec![0.0; t * d];
                let mut dk = vec![0.0; t * d];
                let mut dv = vec![0.0; t * d];
                let mut datt = vec![0.0; t];
                let mut ds = vec![0.0; t];
                for head in 0..h {
                    let off = head * dh;
                    for qt in 0..t {
                        let arow = &acts.att[(head * t + qt) * t..(head * t + qt) * t + qt + 1];
                        let dohead = &do_heads[qt * d + off..qt * d + off + dh];
                        for ku in 0..=qt {
                            let val = &acts.v[ku * d + off..ku * d + off + dh];
                            let mut s = 0.0;
                            for i in 0..dh {
                                s += dohead[i] * val[i];
                                dv[ku * d + off + i] += arow[ku] * dohead[i];
                            }
                            datt[ku] = s;
                        }
                        let mut inner = 0.0;
                        for ku in 0..=qt {
                            inner += arow[ku] * datt[ku];
                        }
                        for ku in 0..=qt {
                            ds[ku] = arow[ku] * (datt[ku] - inner);
                        }
                        let dqv = &mut dq[qt * d + off..qt * d + off + dh];
                        for ku in 0..=qt {
                            let g = ds[ku] * scale;
                            if g == 0.0 {
                                continue;
                            }
                            let kv = &acts.k[ku * d + off..ku * d + off + dh];
                            let qv = &acts.q[qt * d + off..qt * d + off + dh];
                            let dkv = &mut dk[ku * d + off..ku * d + off + dh];
                            for i in 0..dh {
                                dqv[i] += g * kv[i];
                                dkv[i] += g * qv[i];
                            }
                        }
                    }
                }

                let mut dn1 = vec![0.0; d];
                for pos in 0..t {
                    dn1.fill(0.0);
                    matvec_t_acc(wq, &dq[pos * d..(pos + 1) * d], &mut dn1);
                    matvec_t_acc(wk, &dk[pos * d..(pos + 1) * d], &mut dn1);
                    matvec_t_acc(wv, &dv[pos * d..(pos + 1) * d], &mut dn1);
                    let n = &acts.n1[pos * d..(pos + 1) * d];
                    outer_acc(&mut grads[l.wq..l.wq + d * d], &dq[pos * d..(pos + 1) * d], n);
                    outer_acc(&mut grads[l.wk..l.wk + d * d], &dk[pos * d..(pos + 1) * d], n);
                    outer_acc(&mut grads[l.wv..l.wv + d * d], &dv[pos * d..(pos + 1) * d], n);
                    rmsnorm_bwd(
                        &dn1,
                        &acts.h_in[pos * d..(pos + 1) * d],
                        acts.ri1[pos],
                        gain1,
                        &mut grads[l.ln1..l.ln1 + d],
                        &mut dh_in[pos * d..(pos + 1) * d],
                    );
                }
            }

            dx = dh_in;
        }

        // embeddings
        for (pos, &tok) in inputs.iter().enumerate() {
            for i in 0..d {
                grads[lo.wte + tok * d + i] += dx[pos * d + i];
                grads[lo.wpe + pos * d + i] += dx[pos * d + i];
            }
        }

        Ok((nll, targets.len()))
    }

    /// Attention weights for every layer and head on `seq`.
    pub fn attention_trace(&self, seq: &[TokenId]) -> Result<AttentionTrace, LmError> {
        self.check_tokens(seq, self.dims.max_len)?;
        let pass = self.forward(seq);
        let t = pass.t;
        let h = self.dims.h;
        let mut weights = vec![0.0; self.dims.layers * h * t * t];
        for (li, acts) in pass.layers.iter().enumerate() {
            let base = li * h * t * t;
            weights[base..base + h * t * t].copy_from_slice(&acts.att);
        }
        Ok(AttentionTrace {
            layers: self.dims.layers,
            heads: h,
            len: t,
            weights,
        })
    }
}

impl NextTokenModel for Model {
    fn vocab_size(&self) -> usize {
        self.dims.v
    }

    fn context_limit(&self) -> usize {
        self.dims.max_len - 1
    }

    fn eos(&self) -> TokenId {
        self.vocab.eos()
    }

    fn logits(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        Model::logits(self, prefix)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
