//! Attention encoder-decoder on top of [`crate::numgrad`].
//!
//! Encoder: linear projection + LeakyReLU, then a stack of bidirectional LSTM
//! layers; the top `subsample_layers` layers keep every second output frame.
//!
//! Decoder step: the previous grapheme's embedding is concatenated with the
//! previous context vector and fed to an LSTM cell; attention is computed from
//! the *new* hidden state, and the output layer reads `[h; context]`.
//!
//! Output ids are `0..vocab_size`, with eos as the last one. The start symbol
//! `sos = vocab_size` exists only as an extra embedding row.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numgrad::{GradError, Tape, Tensor, Var};
use crate::rng::substream;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error(transparent)]
    Grad(#[from] GradError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Dot,
    Bilinear,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_dim: usize,
    /// Hidden units per direction.
    pub enc_hidden: usize,
    pub enc_layers: usize,
    pub subsample_layers: usize,
    pub embed_dim: usize,
    pub dec_hidden: usize,
    pub scorer: Scorer,
    pub mlp_hidden: usize,
    /// Graphemes plus eos.
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: 16,
            enc_hidden: 32,
            enc_layers: 3,
            subsample_layers: 2,
            embed_dim: 16,
            dec_hidden: 64,
            scorer: Scorer::Mlp,
            mlp_hidden: 32,
            vocab_size: 9,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("enc_hidden", self.enc_hidden),
            ("enc_layers", self.enc_layers),
            ("embed_dim", self.embed_dim),
            ("dec_hidden", self.dec_hidden),
            ("mlp_hidden", self.mlp_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if self.vocab_size < 2 {
            return Err(ModelError::Config("vocab_size must cover at least one grapheme and eos".into()));
        }
        if self.subsample_layers + 1 > self.enc_layers {
            return Err(ModelError::Config(format!(
                "subsample_layers ({}) must be at most enc_layers - 1 ({})",
                self.subsample_layers,
                self.enc_layers - 1
            )));
        }
        if self.scorer == Scorer::Dot && self.enc_dim() != self.dec_hidden {
            return Err(ModelError::Config(format!(
                "dot scorer needs 2*enc_hidden ({}) == dec_hidden ({})",
                self.enc_dim(),
                self.dec_hidden
            )));
        }
        Ok(())
    }

    /// Width of encoder states (both directions).
    pub fn enc_dim(&self) -> usize {
        2 * self.enc_hidden
    }

    pub fn eos_id(&self) -> usize {
        self.vocab_size - 1
    }

    pub fn sos_id(&self) -> usize {
        self.vocab_size
    }

    /// Number of encoder frames after subsampling `frames` input frames.
    pub fn encoded_len(&self, frames: usize) -> usize {
        (0..self.subsample_layers).fold(frames, |s, _| s.div_ceil(2))
    }

    /// Default decode cap: twice the encoded length plus five.
    pub fn default_max_len(&self, frames: usize) -> usize {
        2 * self.encoded_len(frames) + 5
    }

    /// Canonical parameter names and shapes; a pure function of the config.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.enc_hidden;
        let e = self.enc_dim();
        let mut out = vec![
            ("enc.proj.W".to_string(), vec![self.feature_dim, e]),
            ("enc.proj.b".to_string(), vec![1, e]),
        ];
        for l in 0..self.enc_layers {
            for dir in ["fw", "bw"] {
                out.push((format!("enc.l{l}.{dir}.w_ih"), vec![e, 4 * h]));
                out.push((format!("enc.l{l}.{dir}.w_hh"), vec![h, 4 * h]));
                out.push((format!("enc.l{l}.{dir}.b"), vec![1, 4 * h]));
            }
        }
        let d = self.dec_hidden;
        out.push(("dec.embed".to_string(), vec![self.vocab_size + 1, self.embed_dim]));
        out.push(("dec.lstm.w_ih".to_string(), vec![self.embed_dim + e, 4 * d]));
        out.push(("dec.lstm.w_hh".to_string(), vec![d, 4 * d]));
        out.push(("dec.lstm.b".to_string(), vec![1, 4 * d]));
        match self.scorer {
            Scorer::Dot => {}
            Scorer::Bilinear => out.push(("att.bilinear.W".to_string(), vec![e, d])),
            Scorer::Mlp => {
                out.push(("att.mlp.W_enc".to_string(), vec![e, self.mlp_hidden]));
                out.push(("att.mlp.W_dec".to_string(), vec![d, self.mlp_hidden]));
                out.push(("att.mlp.V".to_string(), vec![self.mlp_hidden, 1]));
            }
        }
        out.push(("dec.out.W".to_string(), vec![d + e, self.vocab_size]));
        out.push(("dec.out.b".to_string(), vec![1, self.vocab_size]));
        out
    }
}

/// All trainable weights, keyed by canonical name.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    entries: BTreeMap<String, Tensor>,
}

pub const INIT_SCALE: f64 = 0.08;

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let entries = config
            .param_shapes()
            .into_iter()
            .map(|(n, s)| {
                let t = Tensor::zeros(&s);
                (n, t)
            })
            .collect();
        ModelParams { entries }
    }

    /// Uniform `[-0.08, 0.08]` weights; LSTM forget-gate biases start at 1.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        Self::init_scaled(config, seed, INIT_SCALE)
    }

    pub fn init_scaled(config: &ModelConfig, seed: u64, scale: f64) -> Self {
        let mut rng = substream(seed, &[0x1417]);
        let mut params = Self::zeros(config);
        for (name, t) in params.entries.iter_mut() {
            for v in t.values_mut() {
                *v = rng.random_range(-scale..=scale);
            }
            if name.ends_with(".b") && (name.starts_with("enc.l") || name == "dec.lstm.b") {
                let hidden = t.len() / 4;
                for v in &mut t.values_mut()[hidden..2 * hidden] {
                    *v = 1.0;
                }
            }
        }
        params
    }

    pub fn from_entries(config: &ModelConfig, entries: BTreeMap<String, Tensor>) -> Result<Self> {
        let expected: BTreeMap<String, Vec<usize>> = config.param_shapes().into_iter().collect();
        let missing: Vec<&String> = expected.keys().filter(|k| !entries.contains_key(*k)).collect();
        let extra: Vec<&String> = entries.keys().filter(|k| !expected.contains_key(*k)).collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(ModelError::Config(format!(
                "parameter names do not match the model config; missing {missing:?}, unexpected {extra:?}"
            )));
        }
        for (name, t) in &entries {
            if t.shape() != expected[name].as_slice() {
                return Err(ModelError::Config(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    expected[name]
                )));
            }
        }
        Ok(ModelParams { entries })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|t| t.values().iter().all(|v| v.is_finite()))
    }
}

/// Gradient per parameter name, aligned with [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    entries: BTreeMap<String, Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        ParamGrads {
            entries: params
                .iter()
                .map(|(n, t)| (n.clone(), vec![0.0; t.len()]))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<f64>)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// `self += scale * other`, name by name.
    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        for (name, g) in &mut self.entries {
            if let Some(o) = other.entries.get(name) {
                for (a, b) in g.iter_mut().zip(o) {
                    *a += scale * b;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.entries.values_mut() {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }

    /// All components in name order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries.values().flatten().copied().collect()
    }

    pub fn max_abs_diff(&self, other: &ParamGrads) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_zero(&self) -> bool {
        self.entries.values().flatten().all(|&v| v == 0.0)
    }
}

#[derive(Clone, Copy, Debug)]
struct LstmVars {
    w_ih: Var,
    w_hh: Var,
    b: Var,
}

#[derive(Clone, Copy, Debug)]
enum AttVars {
    Dot,
    Bilinear { w: Var },
    Mlp { w_enc: Var, w_dec: Var, v: Var },
}

/// Encoded utterance plus scorer-specific precomputations.
#[derive(Clone, Copy, Debug)]
pub struct EncoderStates {
    /// `[S' x 2*enc_hidden]`.
    pub states: Var,
    pub source_length: usize,
    pub encoded_length: usize,
    /// Dot/bilinear: transposed keys `[k x S']` so that `scores = h_d * keys`.
    keys: Option<Var>,
    /// MLP: `states * W_enc`, `[S' x mlp_hidden]`.
    projected: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub lstm_h: Var,
    pub lstm_c: Var,
    pub prev_context: Var,
    pub step_index: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    /// `[1 x vocab_size]` log-probabilities.
    pub log_probs: Var,
    pub alignment: Var,
    pub context: Var,
    pub state: DecoderState,
}

/// A tape with every model parameter bound as a leaf.
#[derive(Clone, Debug)]
pub struct Session {
    pub tape: Tape,
    config: ModelConfig,
    bound: Vec<(String, Var)>,
    proj_w: Var,
    proj_b: Var,
    enc_layers: Vec<[LstmVars; 2]>,
    embed: Var,
    dec: LstmVars,
    att: AttVars,
    out_w: Var,
    out_b: Var,
}

impl Session {
    pub fn new(params: &ModelParams, config: &ModelConfig) -> Result<Self> {
        Self::build(params, config, true)
    }

    /// Session whose parameters are constants: forward-only decoding.
    pub fn inference(params: &ModelParams, config: &ModelConfig) -> Result<Self> {
        Self::build(params, config, false)
    }

    fn build(params: &ModelParams, config: &ModelConfig, trainable: bool) -> Result<Self> {
        config.validate()?;
        let expected = config.param_shapes();
        let mut tape = Tape::new();
        let mut bound = Vec::with_capacity(expected.len());
        let mut lookup = BTreeMap::new();
        for (name, shape) in &expected {
            let t = params
                .get(name)
                .ok_or_else(|| ModelError::Config(format!("missing parameter {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::Config(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            let v = if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            };
            bound.push((name.clone(), v));
            lookup.insert(name.clone(), v);
        }
        let g = |n: &str| lookup[n];
        let lstm = |prefix: &str| LstmVars {
            w_ih: g(&format!("{prefix}.w_ih")),
            w_hh: g(&format!("{prefix}.w_hh")),
            b: g(&format!("{prefix}.b")),
        };
        let enc_layers = (0..config.enc_layers)
            .map(|l| [lstm(&format!("enc.l{l}.fw")), lstm(&format!("enc.l{l}.bw"))])
            .collect();
        let att = match config.scorer {
            Scorer::Dot => AttVars::Dot,
            Scorer::Bilinear => AttVars::Bilinear {
                w: g("att.bilinear.W"),
            },
            Scorer::Mlp => AttVars::Mlp {
                w_enc: g("att.mlp.W_enc"),
                w_dec: g("att.mlp.W_dec"),
                v: g("att.mlp.V"),
            },
        };
        Ok(Session {
            proj_w: g("enc.proj.W"),
            proj_b: g("enc.proj.b"),
            enc_layers,
            embed: g("dec.embed"),
            dec: lstm("dec.lstm"),
            att,
            out_w: g("dec.out.W"),
            out_b: g("dec.out.b"),
            tape,
            config: config.clone(),
            bound,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.bound.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Gradients of all parameters after `tape.backward`; unreached ones are zero.
    pub fn gradients(&self) -> ParamGrads {
        let entries = self
            .bound
            .iter()
            .map(|(n, v)| {
                let g = match self.tape.grad(*v) {
                    Some(g) => g.to_vec(),
                    None => vec![0.0; self.tape.value(*v).len()],
                };
                (n.clone(), g)
            })
            .collect();
        ParamGrads { entries }
    }

    /// One LSTM step given the precomputed input contribution `x_part`
    /// (`x * W_ih + b`). Gate order: input, forget, cell, output.
    fn lstm_step(&mut self, cell: LstmVars, x_part: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let t = &mut self.tape;
        let hidden = t.value(h).len();
        let rec = t.matmul(h, cell.w_hh)?;
        let gates = t.add(x_part, rec)?;
        let i = t.slice(gates, 0, hidden)?;
        let f = t.slice(gates, hidden, hidden)?;
        let g = t.slice(gates, 2 * hidden, hidden)?;
        let o = t.slice(gates, 3 * hidden, hidden)?;
        let i = t.sigmoid(i);
        let f = t.sigmoid(f);
        let g = t.tanh(g);
        let o = t.sigmoid(o);
        let fc = t.mul(f, c)?;
        let ig = t.mul(i, g)?;
        let c_new = t.add(fc, ig)?;
        let tc = t.tanh(c_new);
        let h_new = t.mul(o, tc)?;
        Ok((h_new, c_new))
    }

    fn run_direction(&mut self, cell: LstmVars, inputs: Var, frames: usize, reverse: bool) -> Result<Vec<Var>> {
        let hidden = self.tape.value(cell.w_hh).dims2().0;
        let xw = self.tape.matmul(inputs, cell.w_ih)?;
        let xw = self.tape.add_row_bias(xw, cell.b)?;
        let mut h = self.tape.constant(Tensor::row(vec![0.0; hidden]));
        let mut c = self.tape.constant(Tensor::row(vec![0.0; hidden]));
        let mut out = vec![h; frames];
        let order: Vec<usize> = if reverse {
            (0..frames).rev().collect()
        } else {
            (0..frames).collect()
        };
        for s in order {
            let x = self.tape.row(xw, s)?;
            let (h2, c2) = self.lstm_step(cell, x, h, c)?;
            h = h2;
            c = c2;
            out[s] = h;
        }
        Ok(out)
    }

    /// Encode `[S x feature_dim]` features.
    pub fn encode(&mut self, features: &Tensor) -> Result<EncoderStates> {
        let cfg = self.config.clone();
        let (frames, width) = features.dims2();
        if features.shape().len() != 2 || width != cfg.feature_dim {
            return Err(ModelError::Input(format!(
                "features have shape {:?}, expected [S, {}]",
                features.shape(),
                cfg.feature_dim
            )));
        }
        let min_frames = 1usize << cfg.subsample_layers;
        if frames < min_frames {
            return Err(ModelError::Input(format!(
                "{frames} frames is too short for {} subsampling layers (need at least {min_frames})",
                cfg.subsample_layers
            )));
        }
        let n_layers = cfg.enc_layers;
        let first_sub = n_layers - cfg.subsample_layers;

        let x = self.tape.constant(features.clone());
        let proj = self.tape.matmul(x, self.proj_w)?;
        let proj = self.tape.add_row_bias(proj, self.proj_b)?;
        let mut layer_in = self.tape.leaky_relu(proj);
        let mut len = frames;
        for l in 0..n_layers {
            let [fw, bw] = self.enc_layers[l];
            let f_out = self.run_direction(fw, layer_in, len, false)?;
            let b_out = self.run_direction(bw, layer_in, len, true)?;
            let keep: Vec<usize> = if l >= first_sub {
                (0..len).step_by(2).collect()
            } else {
                (0..len).collect()
            };
            let mut rows = Vec::with_capacity(keep.len());
            for s in keep {
                rows.push(self.tape.concat(&[f_out[s], b_out[s]])?);
            }
            len = rows.len();
            layer_in = self.tape.stack_rows(&rows)?;
        }
        let states = layer_in;
        let (keys, projected) = match self.att {
            AttVars::Dot => (Some(self.tape.transpose(states)), None),
            AttVars::Bilinear { w } => {
                let hw = self.tape.matmul(states, w)?;
                (Some(self.tape.transpose(hw)), None)
            }
            AttVars::Mlp { w_enc, .. } => (None, Some(self.tape.matmul(states, w_enc)?)),
        };
        Ok(EncoderStates {
            states,
            source_length: frames,
            encoded_length: len,
            keys,
            projected,
        })
    }

    /// Alignment over encoder frames and the resulting context vector.
    pub fn attend(&mut self, enc: &EncoderStates, h_d: Var) -> Result<(Var, Var)> {
        let n = enc.encoded_length;
        let t = &mut self.tape;
        let scores = match self.att {
            AttVars::Dot | AttVars::Bilinear { .. } => {
                let keys = enc.keys.expect("keys are built for dot and bilinear scorers");
                t.matmul(h_d, keys)?
            }
            AttVars::Mlp { w_dec, v, .. } => {
                let projected = enc.projected.expect("projection is built for the mlp scorer");
                let q = t.matmul(h_d, w_dec)?;
                let pre = t.add_row_bias(projected, q)?;
                let act = t.tanh(pre);
                let s = t.matmul(act, v)?;
                t.reshape(s, &[1, n])?
            }
        };
        let alignment = t.softmax_row(scores)?;
        let context = t.matmul(alignment, enc.states)?;
        Ok((context, alignment))
    }

    pub fn initial_state(&mut self) -> DecoderState {
        let d = self.config.dec_hidden;
        let e = self.config.enc_dim();
        DecoderState {
            lstm_h: self.tape.constant(Tensor::row(vec![0.0; d])),
            lstm_c: self.tape.constant(Tensor::row(vec![0.0; d])),
            prev_context: self.tape.constant(Tensor::row(vec![0.0; e])),
            step_index: 0,
        }
    }

    pub fn decode_step(&mut self, prev: usize, state: &DecoderState, enc: &EncoderStates) -> Result<StepOutput> {
        let emb = self.tape.gather_rows(self.embed, &[prev])?;
        let x = self.tape.concat(&[emb, state.prev_context])?;
        let xw = self.tape.matmul(x, self.dec.w_ih)?;
        let xw = self.tape.add(xw, self.dec.b)?;
        let (h, c) = self.lstm_step(self.dec, xw, state.lstm_h, state.lstm_c)?;
        let (context, alignment) = self.attend(enc, h)?;
        let t = &mut self.tape;
        let hc = t.concat(&[h, context])?;
        let logits = t.matmul(hc, self.out_w)?;
        let logits = t.add(logits, self.out_b)?;
        let log_probs = t.log_softmax_row(logits)?;
        Ok(StepOutput {
            log_probs,
            alignment,
            context,
            state: DecoderState {
                lstm_h: h,
                lstm_c: c,
                prev_context: context,
                step_index: state.step_index + 1,
            },
        })
    }

    /// Teacher-forced output distributions: row `t` is the `[1 x vocab]`
    /// log-probability vector after feeding `sos, emitted[..t]`.
    pub fn step_distributions(&mut self, enc: &EncoderStates, emitted: &[usize]) -> Result<Vec<Var>> {
        let mut state = self.initial_state();
        let mut prev = self.config.sos_id();
        let mut out = Vec::with_capacity(emitted.len());
        for &y in emitted {
            if y >= self.config.vocab_size {
                return Err(GradError::Index {
                    op: "force",
                    id: y,
                    len: self.config.vocab_size,
                }
                .into());
            }
            let step = self.decode_step(prev, &state, enc)?;
            out.push(step.log_probs);
            state = step.state;
            prev = y;
        }
        Ok(out)
    }

    /// Feed `emitted` (graphemes, optionally ending in eos) with teacher
    /// forcing; returns the log-probability of each emitted symbol as a scalar.
    pub fn force(&mut self, enc: &EncoderStates, emitted: &[usize]) -> Result<Vec<Var>> {
        let dists = self.step_distributions(enc, emitted)?;
        dists
            .into_iter()
            .zip(emitted)
            .map(|(d, &y)| Ok(self.tape.pick(d, y)?))
            .collect()
    }
}

/// Teacher-forced `log P(transcript | features)`; `transcript` must end in eos.
pub fn sequence_log_prob(
    features: &Tensor,
    transcript: &[usize],
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(f64, Vec<f64>)> {
    if transcript.last() != Some(&config.eos_id()) {
        return Err(ModelError::Contract("transcript must end with eos".into()));
    }
    let mut s = Session::inference(params, config)?;
    let enc = s.encode(features)?;
    let steps = s.force(&enc, transcript)?;
    let per_step: Vec<f64> = steps.iter().map(|v| s.tape.scalar_value(*v)).collect();
    let total = per_step.iter().sum();
    Ok((total, per_step))
}

/// Attention score for a single encoder/decoder state pair.
pub fn attention_score(h_e: &[f64], h_d: &[f64], params: &ModelParams, config: &ModelConfig) -> Result<f64> {
    if h_e.len() != config.enc_dim() || h_d.len() != config.dec_hidden {
        return Err(ModelError::Input(format!(
            "state widths {}/{} do not match config {}/{}",
            h_e.len(),
            h_d.len(),
            config.enc_dim(),
            config.dec_hidden
        )));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let param = |n: &str| {
        params
            .get(n)
            .ok_or_else(|| ModelError::Config(format!("missing parameter {n}")))
    };
    match config.scorer {
        Scorer::Dot => Ok(dot(h_e, h_d)),
        Scorer::Bilinear => {
            let w = param("att.bilinear.W")?.values();
            let d = h_d.len();
            Ok(h_e
                .iter()
                .enumerate()
                .map(|(i, &e)| e * dot(&w[i * d..(i + 1) * d], h_d))
                .sum())
        }
        Scorer::Mlp => {
            let w_enc = param("att.mlp.W_enc")?.values();
            let w_dec = param("att.mlp.W_dec")?.values();
            let v = param("att.mlp.V")?.values();
            let a = config.mlp_hidden;
            let mut pre = vec![0.0; a];
            for (i, &x) in h_e.iter().enumerate() {
                for j in 0..a {
                    pre[j] += x * w_enc[i * a + j];
                }
            }
            for (i, &x) in h_d.iter().enumerate() {
                for j in 0..a {
                    pre[j] += x * w_dec[i * a + j];
                }
            }
            Ok(pre.iter().zip(v).map(|(p, vj)| p.tanh() * vj).sum())
        }
    }
}
