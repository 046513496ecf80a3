//! Adam, the MLE and RL training phases, evaluation and checkpoints.
//!
//! Each update prepares the utterances of a mini-batch in parallel, computes
//! estimator coefficients sequentially (the moving statistics are shared
//! state), runs backward in parallel and reduces gradients in utterance order.
//! The result is identical for any worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::editdist::{edit_distance, MovingStats};
use crate::inference::{beam_search, greedy_decode, Hypothesis};
use crate::numgrad::Tensor;
use crate::objectives::{batch_coefficients, finish_utterance, prepare_utterance, ObjectiveError, RlConfig};
use crate::parallel::{map_ordered, Workers};
use crate::rng::{derive_seed, substream};
use crate::seq2seq::{ModelConfig, ModelError, ModelParams, ParamGrads, INIT_SCALE};
use crate::synthtask::{format_f64, Corpus, CorpusError, SynthConfig};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("checkpoint parse error at line {line}: {msg}")]
    CheckpointParse { line: usize, msg: String },
    #[error("checkpoint schema error: {0}")]
    CheckpointSchema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a strict dev CER improvement.
    pub patience: usize,
    /// Beam width used by `evaluate`.
    pub eval_beam: usize,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            batch_size: 16,
            max_epochs: 30,
            patience: 5,
            eval_beam: 5,
            init_scale: INIT_SCALE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train: 1000,
            dev: 100,
            test: 100,
        }
    }
}

/// Everything a run needs; the on-disk config file is this struct as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: SynthConfig,
    pub splits: SplitSizes,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub rl: RlConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            data: SynthConfig::default(),
            splits: SplitSizes::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            rl: RlConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate()?;
        self.rl.validate()?;
        if self.model.vocab_size != self.data.graphemes + 1 {
            return Err(TrainError::Config(format!(
                "model.vocab_size ({}) must be data.graphemes + 1 ({})",
                self.model.vocab_size,
                self.data.graphemes + 1
            )));
        }
        if self.model.feature_dim != self.data.feature_dim {
            return Err(TrainError::Config(format!(
                "model.feature_dim ({}) differs from data.feature_dim ({})",
                self.model.feature_dim, self.data.feature_dim
            )));
        }
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(TrainError::Config("train.lr must be positive".into()));
        }
        if t.batch_size == 0 || t.eval_beam == 0 {
            return Err(TrainError::Config("train.batch_size and train.eval_beam must be positive".into()));
        }
        if !(t.init_scale > 0.0 && t.init_scale.is_finite()) {
            return Err(TrainError::Config("train.init_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Adam first and second moments plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParamGrads,
    pub v: ParamGrads,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: ParamGrads::zeros_like(params),
            v: ParamGrads::zeros_like(params),
            step: 0,
        }
    }
}

/// One bias-corrected Adam step of `params` against `grads`.
pub fn adam_update(params: &mut ModelParams, grads: &ParamGrads, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    for (name, t) in params.iter_mut() {
        let (Some(g), Some(m), Some(v)) = (grads.get(name), state.m.get_mut(name), state.v.get_mut(name)) else {
            continue;
        };
        for (((w, &g), m), v) in t.values_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Mle,
    Rl,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Mle => "mle",
            Phase::Rl => "rl",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Phase::Mle => 1,
            Phase::Rl => 2,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "mle" => Some(Phase::Mle),
            "rl" => Some(Phase::Rl),
            _ => None,
        }
    }
}

/// Full training state; what a checkpoint stores.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub phase: Phase,
    /// Epochs completed in `phase` when this state was recorded.
    pub epoch: usize,
    pub best_dev_cer: f64,
    pub params: ModelParams,
    pub adam: AdamState,
    pub stats: MovingStats,
}

impl Checkpoint {
    pub fn fresh(config: &ExperimentConfig) -> Self {
        let params = ModelParams::init_scaled(&config.model, config.seed, config.train.init_scale);
        Checkpoint {
            config: config.clone(),
            phase: Phase::Mle,
            epoch: 0,
            best_dev_cer: f64::INFINITY,
            adam: AdamState::new(&params),
            params,
            stats: MovingStats::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub phase: Phase,
    /// Mean per-utterance MLE loss over the epoch.
    pub train_loss: f64,
    /// Mean total reward of the samples drawn during the epoch (RL only).
    pub mean_reward: Option<f64>,
    pub dev_cer: f64,
}

pub const METRICS_HEADER: &str = "epoch,phase,train_loss,mean_reward,dev_cer";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.9},{},{:.9}",
            self.epoch,
            self.phase.name(),
            self.train_loss,
            self.mean_reward.map(|r| format!("{r:.9}")).unwrap_or_default(),
            self.dev_cer
        )
    }
}

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// State at the best dev CER.
    pub best: Checkpoint,
    /// State after the last epoch.
    pub last: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    /// Wall-clock seconds per epoch; kept apart from the deterministic metrics.
    pub epoch_seconds: Vec<f64>,
}

/// Greedy dev CER pooled over the corpus: total edits over total reference length.
pub fn dev_cer(params: &ModelParams, config: &ModelConfig, corpus: &Corpus, workers: Workers) -> Result<f64> {
    Ok(evaluate(params, config, corpus, 1, workers)?.pooled_cer)
}

fn batch_step(
    state: &mut Checkpoint,
    corpus: &Corpus,
    batch: &[usize],
    rl: Option<&RlConfig>,
    sample_seed: u64,
    workers: Workers,
) -> Result<(f64, Vec<f64>)> {
    let model = &state.config.model;
    let params = &state.params;
    let prepared = map_ordered(batch.to_vec(), workers, |i| {
        let u = &corpus.utterances[i];
        let max_len = model.default_max_len(u.frames());
        prepare_utterance(&u.features, &u.transcript, params, model, rl, max_len, sample_seed, i)
    });
    let graphs = prepared.into_iter().collect::<std::result::Result<Vec<_>, _>>()?;
    let coeffs = match rl {
        Some(r) if graphs.iter().any(|g| !g.paths.is_empty()) => batch_coefficients(&graphs, r, &mut state.stats)?,
        _ => vec![Vec::new(); graphs.len()],
    };
    let finished = map_ordered(graphs.into_iter().zip(coeffs).collect(), workers, |(g, c)| {
        finish_utterance(g, &c, rl)
    });
    let mut total = ParamGrads::zeros_like(&state.params);
    let mut loss = 0.0;
    let mut rewards = Vec::new();
    for f in finished {
        let f = f?;
        total.add_scaled(&f.grads, 1.0);
        loss += f.mle_loss;
        rewards.extend(f.sample_rewards);
    }
    total.scale(1.0 / batch.len() as f64);
    let lr = state.config.train.lr;
    adam_update(&mut state.params, &total, &mut state.adam, lr);
    Ok((loss, rewards))
}

/// Train from `start` in `phase` until `max_epochs` or early stopping.
/// `on_epoch` sees every epoch's metrics as they are produced. The worker
/// count only affects speed, never results.
pub fn train_phase(
    start: Checkpoint,
    phase: Phase,
    train: &Corpus,
    dev: &Corpus,
    workers: Workers,
    mut on_epoch: impl FnMut(&EpochMetrics, f64),
) -> Result<TrainOutcome> {
    let config = start.config.clone();
    config.validate()?;
    train.check_vocab(&config.data.vocab()?)?;
    dev.check_vocab(&config.data.vocab()?)?;
    if train.is_empty() || dev.is_empty() {
        return Err(TrainError::Config("training and dev corpora must be nonempty".into()));
    }
    if train.feature_dim != config.model.feature_dim || dev.feature_dim != config.model.feature_dim {
        return Err(TrainError::Config("corpus feature_dim differs from model.feature_dim".into()));
    }
    let rl = match phase {
        Phase::Mle => None,
        Phase::Rl => Some(&config.rl),
    };

    let mut state = start;
    if state.phase != phase {
        state.phase = phase;
        state.epoch = 0;
    }
    // The first epoch of a phase always becomes the best so far.
    state.best_dev_cer = f64::INFINITY;
    let mut best = state.clone();
    let mut stale = 0;
    let mut metrics = Vec::new();
    let mut epoch_seconds = Vec::new();
    let first_epoch = state.epoch;

    for epoch in first_epoch + 1..=first_epoch + config.train.max_epochs {
        let clock = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut substream(config.seed, &[7, phase.stream(), epoch as u64]));
        let sample_seed = derive_seed(config.seed, &[8, phase.stream(), epoch as u64]);
        let mut loss_sum = 0.0;
        let mut rewards = Vec::new();
        for batch in order.chunks(config.train.batch_size) {
            let (l, r) = batch_step(&mut state, train, batch, rl, sample_seed, workers)?;
            loss_sum += l;
            rewards.extend(r);
        }
        if !state.params.all_finite() {
            return Err(TrainError::Numeric(format!("non-finite parameters after {} epoch {epoch}", phase.name())));
        }
        state.epoch = epoch;
        let cer = dev_cer(&state.params, &config.model, dev, workers)?;
        let row = EpochMetrics {
            epoch,
            phase,
            train_loss: loss_sum / train.len() as f64,
            mean_reward: rl.map(|_| rewards.iter().sum::<f64>() / rewards.len().max(1) as f64),
            dev_cer: cer,
        };
        let secs = clock.elapsed().as_secs_f64();
        on_epoch(&row, secs);
        metrics.push(row);
        epoch_seconds.push(secs);
        if cer < best.best_dev_cer {
            state.best_dev_cer = cer;
            best = state.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.train.patience {
                break;
            }
        }
    }
    state.best_dev_cer = best.best_dev_cer;
    Ok(TrainOutcome {
        best,
        last: state,
        metrics,
        epoch_seconds,
    })
}

pub fn train_mle(config: &ExperimentConfig, train: &Corpus, dev: &Corpus, workers: Workers) -> Result<TrainOutcome> {
    train_phase(Checkpoint::fresh(config), Phase::Mle, train, dev, workers, |_, _| {})
}

/// RL fine-tuning from an MLE checkpoint. Adam moments and moving statistics
/// carry over from the checkpoint; the RL settings come from `config`.
pub fn train_rl(
    from: &Checkpoint,
    config: &ExperimentConfig,
    train: &Corpus,
    dev: &Corpus,
    workers: Workers,
) -> Result<TrainOutcome> {
    if from.config.model != config.model {
        return Err(TrainError::CheckpointSchema("checkpoint model config differs from the run config".into()));
    }
    let start = Checkpoint {
        config: config.clone(),
        ..from.clone()
    };
    train_phase(start, Phase::Rl, train, dev, workers, |_, _| {})
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub hypothesis: Vec<usize>,
    pub reference: Vec<usize>,
    pub edits: usize,
    pub cer: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Total edits over total reference length.
    pub pooled_cer: f64,
    pub rows: Vec<EvalRow>,
}

pub fn decode(features: &Tensor, params: &ModelParams, config: &ModelConfig, beam: usize) -> Result<Hypothesis> {
    let max_len = config.default_max_len(features.dims2().0);
    Ok(if beam <= 1 {
        greedy_decode(features, params, config, max_len)?
    } else {
        beam_search(features, params, config, beam, max_len)?
    })
}

pub fn evaluate(params: &ModelParams, config: &ModelConfig, corpus: &Corpus, beam: usize, workers: Workers) -> Result<EvalReport> {
    let rows = map_ordered(corpus.utterances.iter().collect(), workers, |u| -> Result<EvalRow> {
        if u.transcript.is_empty() {
            return Err(TrainError::Corpus(CorpusError::Contract("CER needs a nonempty reference")));
        }
        let h = decode(&u.features, params, config, beam)?;
        let edits = edit_distance(&h.graphemes, &u.transcript);
        Ok(EvalRow {
            id: u.id.clone(),
            cer: edits as f64 / u.transcript.len() as f64,
            hypothesis: h.graphemes,
            reference: u.transcript.clone(),
            edits,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let edits: usize = rows.iter().map(|r| r.edits).sum();
    let len: usize = rows.iter().map(|r| r.reference.len()).sum();
    Ok(EvalReport {
        pooled_cer: if len == 0 { 0.0 } else { edits as f64 / len as f64 },
        rows,
    })
}

// Checkpoint text format:
//
//   seqrl-checkpoint 1
//   phase <mle|rl>
//   epoch <n>
//   adam_step <n>
//   best_dev_cer <f64>
//   config <n_lines>
//   <n_lines of TOML>
//   tensor <group> <name> <dim>x<dim>...
//   <values>
//   stats <n>
//   <means>
//   <stds>
//   end
//
// Groups are `param`, `adam_m` and `adam_v`, each in parameter-name order.

const CKPT_MAGIC: &str = "seqrl-checkpoint";
const CKPT_VERSION: u32 = 1;

fn push_values(out: &mut String, values: &[f64]) {
    let line: Vec<String> = values.iter().map(|&v| format_f64(v)).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

pub fn checkpoint_to_string(ck: &Checkpoint) -> String {
    let mut out = String::new();
    let cfg = ck.config.to_toml();
    let _ = writeln!(out, "{CKPT_MAGIC} {CKPT_VERSION}");
    let _ = writeln!(out, "phase {}", ck.phase.name());
    let _ = writeln!(out, "epoch {}", ck.epoch);
    let _ = writeln!(out, "adam_step {}", ck.adam.step);
    let _ = writeln!(out, "best_dev_cer {}", format_f64(ck.best_dev_cer));
    let _ = writeln!(out, "config {}", cfg.lines().count());
    for l in cfg.lines() {
        out.push_str(l);
        out.push('\n');
    }
    for group in GROUPS {
        for (name, t) in ck.params.iter() {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let _ = writeln!(out, "tensor {group} {name} {}", dims.join("x"));
            let values = match group {
                "param" => t.values(),
                "adam_m" => ck.adam.m.get(name).expect("moment per parameter"),
                _ => ck.adam.v.get(name).expect("moment per parameter"),
            };
            push_values(&mut out, values);
        }
    }
    let _ = writeln!(out, "stats {}", ck.stats.len());
    push_values(&mut out, &ck.stats.mean);
    push_values(&mut out, &ck.stats.std);
    out.push_str("end\n");
    out
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_string(ck))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&fs::read_to_string(path)?)
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self) -> Result<&'a str> {
        let l = self.peek().ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(l)
    }

    /// Error attributed to the most recently consumed line.
    fn err(&self, msg: impl Into<String>) -> TrainError {
        TrainError::CheckpointParse {
            line: self.pos.max(1),
            msg: msg.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        l.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected `{key}`")))
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.keyed(key)?;
        v.parse().map_err(|_| self.err(format!("bad value for `{key}`")))
    }

    fn values(&mut self, expected: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        let v = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| self.err("bad float"))?;
        if v.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", v.len())));
        }
        Ok(v)
    }
}

const GROUPS: [&str; 3] = ["param", "adam_m", "adam_v"];

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut c = Cursor {
        lines: text.lines().collect(),
        pos: 0,
    };
    let version: u32 = c.number(CKPT_MAGIC)?;
    if version != CKPT_VERSION {
        return Err(c.err(format!("unsupported checkpoint version {version}")));
    }
    let phase = Phase::parse(c.keyed("phase")?).ok_or_else(|| c.err("unknown phase"))?;
    let epoch: usize = c.number("epoch")?;
    let step: u64 = c.number("adam_step")?;
    let best_dev_cer: f64 = c.number("best_dev_cer")?;
    let n_cfg: usize = c.number("config")?;
    let mut cfg = String::new();
    for _ in 0..n_cfg {
        cfg.push_str(c.next()?);
        cfg.push('\n');
    }
    let config: ExperimentConfig =
        toml::from_str(&cfg).map_err(|e| TrainError::CheckpointSchema(format!("embedded config: {e}")))?;
    config.model.validate()?;

    let mut groups: [BTreeMap<String, Tensor>; 3] = Default::default();
    while c.peek().is_some_and(|l| l.starts_with("tensor ")) {
        let l = c.next()?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let [_, group, name, dims] = toks.as_slice() else {
            return Err(c.err("expected `tensor <group> <name> <shape>`"));
        };
        let gi = GROUPS
            .iter()
            .position(|g| g == group)
            .ok_or_else(|| c.err(format!("unknown tensor group {group:?}")))?;
        let shape = dims
            .split('x')
            .map(str::parse::<usize>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| c.err("bad tensor shape"))?;
        let values = c.values(shape.iter().product())?;
        let t = Tensor::new(shape, values).map_err(|e| c.err(e.to_string()))?;
        if groups[gi].insert(name.to_string(), t).is_some() {
            return Err(c.err(format!("duplicate tensor {group} {name}")));
        }
    }
    let n_stats: usize = c.number("stats")?;
    let mean = if n_stats == 0 { c.next().map(|_| Vec::new())? } else { c.values(n_stats)? };
    let std = if n_stats == 0 { c.next().map(|_| Vec::new())? } else { c.values(n_stats)? };
    if c.next()? != "end" {
        return Err(c.err("expected `end`"));
    }

    let [params, m, v] = groups;
    let params = ModelParams::from_entries(&config.model, params)
        .map_err(|e| TrainError::CheckpointSchema(format!("param: {e}")))?;
    let moments = |group: &str, map: BTreeMap<String, Tensor>| -> Result<ParamGrads> {
        let shaped = ModelParams::from_entries(&config.model, map)
            .map_err(|e| TrainError::CheckpointSchema(format!("{group}: {e}")))?;
        let mut g = ParamGrads::zeros_like(&shaped);
        for (name, t) in shaped.iter() {
            g.get_mut(name).expect("same names").copy_from_slice(t.values());
        }
        Ok(g)
    };
    Ok(Checkpoint {
        adam: AdamState {
            m: moments("adam_m", m)?,
            v: moments("adam_v", v)?,
            step,
        },
        config,
        phase,
        epoch,
        best_dev_cer,
        params,
        stats: MovingStats { mean, std },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthtask::{generate_corpus, Split};

    fn tiny_config() -> ExperimentConfig {
        let mut c = ExperimentConfig {
            data: SynthConfig {
                graphemes: 3,
                feature_dim: 4,
                frames_per_symbol: 4,
                min_len: 1,
                max_len: 3,
                ..SynthConfig::default()
            },
            model: ModelConfig {
                feature_dim: 4,
                enc_hidden: 4,
                enc_layers: 2,
                subsample_layers: 1,
                embed_dim: 4,
                dec_hidden: 6,
                mlp_hidden: 4,
                vocab_size: 4,
                ..ModelConfig::default()
            },
            ..ExperimentConfig::default()
        };
        c.train.batch_size = 4;
        c.train.max_epochs = 2;
        c.train.lr = 0.01;
        c.rl.samples = 3;
        c
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let cfg = ModelConfig::default();
        let mut p = ModelParams::zeros(&cfg);
        let mut st = AdamState::new(&p);
        for _ in 0..200 {
            let w = p.get("dec.out.b").unwrap().values()[0];
            let mut g = ParamGrads::zeros_like(&p);
            g.get_mut("dec.out.b").unwrap()[0] = 2.0 * (w - 3.0);
            adam_update(&mut p, &g, &mut st, 0.1);
        }
        let w = p.get("dec.out.b").unwrap().values()[0];
        assert!((w - 3.0).abs() < 0.1, "w = {w}");
        assert_eq!(st.step, 200);
    }

    #[test]
    fn config_toml_round_trip_and_partial_sections() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = ExperimentConfig::from_toml("seed = 4\n[train]\nlr = 0.01\n[rl]\nsamples = 3\n").unwrap();
        assert_eq!(partial.seed, 4);
        assert_eq!(partial.train.batch_size, 16);
        assert_eq!(partial.rl.samples, 3);
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1\n"), Err(TrainError::Config(_))));
        let mut bad = c.clone();
        bad.model.vocab_size = 5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let c = tiny_config();
        let mut ck = Checkpoint::fresh(&c);
        ck.stats.update(&[vec![1.0, 2.0], vec![0.5]]);
        ck.adam.m.get_mut("dec.out.b").unwrap()[0] = 1.0 / 3.0;
        ck.adam.step = 9;
        ck.best_dev_cer = 0.25;
        let text = checkpoint_to_string(&ck);
        let back = parse_checkpoint(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(checkpoint_to_string(&back), text);

        let empty_stats = Checkpoint::fresh(&c);
        assert_eq!(parse_checkpoint(&checkpoint_to_string(&empty_stats)).unwrap(), empty_stats);
    }

    #[test]
    fn checkpoint_schema_errors_name_tensors() {
        let ck = Checkpoint::fresh(&tiny_config());
        let text = checkpoint_to_string(&ck).replace("tensor param dec.out.b", "tensor param dec.out.bias");
        match parse_checkpoint(&text) {
            Err(TrainError::CheckpointSchema(msg)) => {
                assert!(msg.contains("dec.out.b") && msg.contains("dec.out.bias"), "{msg}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
        let text = checkpoint_to_string(&ck).replace("phase mle", "phase sgd");
        assert!(matches!(parse_checkpoint(&text), Err(TrainError::CheckpointParse { line: 2, .. })));
    }

    #[test]
    fn training_is_independent_of_worker_count() {
        let c = tiny_config();
        let train = generate_corpus(&c.data, Split::Train, 10).unwrap();
        let dev = generate_corpus(&c.data, Split::Dev, 4).unwrap();
        let run = |workers: usize, phase: Phase| {
            train_phase(Checkpoint::fresh(&c), phase, &train, &dev, Workers(workers), |_, _| {}).unwrap()
        };
        for phase in [Phase::Mle, Phase::Rl] {
            let a = run(1, phase);
            let b = run(3, phase);
            assert_eq!(a.metrics, b.metrics);
            assert_eq!(a.last.params, b.last.params);
            assert_eq!(a.last.stats, b.last.stats);
            assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
        }
    }

    #[test]
    fn rl_phase_reports_rewards_and_updates_stats() {
        let c = tiny_config();
        let train = generate_corpus(&c.data, Split::Train, 8).unwrap();
        let dev = generate_corpus(&c.data, Split::Dev, 4).unwrap();
        let mle = train_mle(&c, &train, &dev, Workers::ALL).unwrap();
        assert!(mle.metrics.iter().all(|m| m.mean_reward.is_none()));
        let rl = train_rl(&mle.best, &c, &train, &dev, Workers::ALL).unwrap();
        assert!(rl.metrics.iter().all(|m| m.mean_reward.is_some()));
        assert!(!rl.last.stats.is_empty());
        assert!(rl.last.adam.step > mle.best.adam.step);
        assert!(metrics_csv(&rl.metrics).starts_with(METRICS_HEADER));
    }

    #[test]
    fn evaluation_pools_edits() {
        let c = tiny_config();
        let dev = generate_corpus(&c.data, Split::Dev, 5).unwrap();
        let p = ModelParams::init(&c.model, 1);
        let r = evaluate(&p, &c.model, &dev, 2, Workers::SEQUENTIAL).unwrap();
        let edits: usize = r.rows.iter().map(|r| r.edits).sum();
        let len: usize = dev.utterances.iter().map(|u| u.transcript.len()).sum();
        assert_eq!(r.pooled_cer, edits as f64 / len as f64);
        assert_eq!(r.rows.len(), 5);
    }
}
