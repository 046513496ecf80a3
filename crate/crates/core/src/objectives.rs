//! Training objectives: teacher-forced MLE and the two REINFORCE estimators.
//!
//! Both estimators are realized as a surrogate scalar
//! `(1/M) * sum_m sum_t c[m][t] * log P(y_t^m | y_<t^m, x)` whose gradient is the
//! estimate; the coefficients `c` are constants on the tape.
//!
//! - time reward: `c[m][t]` is the (normalized) discounted return from step `t`.
//! - final reward: `c[m][t]` is the sample's (normalized) total reward for all `t`.
//!
//! The eos step of a terminated sample is a step of its own with zero reward,
//! so its return is 0 before normalization.

use serde::{Deserialize, Serialize};

use crate::editdist::{normalize_final, MovingStats, RewardError, RewardTrace};
use crate::inference::{sample_paths, SampleBatch, SampledPath};
use crate::numgrad::{GradError, Tensor, Var};
use crate::seq2seq::{ModelConfig, ModelError, ModelParams, ParamGrads, Session};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ObjectiveError {
    #[error("contract error: {0}")]
    Contract(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

impl From<GradError> for ObjectiveError {
    fn from(e: GradError) -> Self {
        ObjectiveError::Model(e.into())
    }
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    FinalReward,
    TimeReward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Per-time-step moving mean/std (pairs with time reward).
    Timewise,
    /// Mean/std across the M samples of one utterance (pairs with final reward).
    AcrossSamples,
    /// Raw returns; used by the exactness checks.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub mode: RewardMode,
    pub gamma: f64,
    /// Samples per utterance (M).
    pub samples: usize,
    /// Weight of the RL term added to the MLE loss.
    pub rl_weight: f64,
    pub normalization: Normalization,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            mode: RewardMode::TimeReward,
            gamma: 0.95,
            samples: 15,
            rl_weight: 1.0,
            normalization: Normalization::Timewise,
        }
    }
}

impl RlConfig {
    pub fn time_reward(gamma: f64) -> Self {
        RlConfig {
            gamma,
            ..Self::default()
        }
    }

    pub fn final_reward() -> Self {
        RlConfig {
            mode: RewardMode::FinalReward,
            gamma: 1.0,
            normalization: Normalization::AcrossSamples,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ObjectiveError::Contract(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.samples == 0 {
            return Err(ObjectiveError::Contract("at least one sample per utterance".into()));
        }
        if !(self.rl_weight >= 0.0 && self.rl_weight.is_finite()) {
            return Err(ObjectiveError::Contract("rl_weight must be finite and non-negative".into()));
        }
        match (self.mode, self.normalization) {
            (_, Normalization::None)
            | (RewardMode::TimeReward, Normalization::Timewise)
            | (RewardMode::FinalReward, Normalization::AcrossSamples) => {}
            (m, n) => {
                return Err(ObjectiveError::Contract(format!(
                    "{m:?} cannot be combined with {n:?} normalization"
                )))
            }
        }
        if self.normalization == Normalization::AcrossSamples && self.samples < 2 {
            return Err(ObjectiveError::Contract("normalizing across samples needs M >= 2".into()));
        }
        Ok(())
    }
}

/// `-sum_t log P(y_t)` from teacher-forced distributions; `transcript`
/// includes the final eos.
pub fn mle_loss(session: &mut Session, step_log_probs: &[Var], transcript: &[usize]) -> Result<Var> {
    if step_log_probs.len() != transcript.len() || transcript.is_empty() {
        return Err(ObjectiveError::Contract(format!(
            "{} distributions for a transcript of {} symbols",
            step_log_probs.len(),
            transcript.len()
        )));
    }
    let t = &mut session.tape;
    let picks = step_log_probs
        .iter()
        .zip(transcript)
        .map(|(&d, &y)| t.pick(d, y))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let total = t.add_all(&picks)?;
    Ok(t.scale(total, -1.0))
}

/// Per-emitted-step returns for one sample: the grapheme returns, followed by
/// a zero for the eos step when the sample terminated.
pub fn emitted_returns(graphemes: &[usize], truncated: bool, reference: &[usize], gamma: f64) -> Result<(RewardTrace, Vec<f64>)> {
    let trace = RewardTrace::new(graphemes, reference, gamma)?;
    let mut returns = trace.returns.clone();
    if !truncated {
        returns.push(0.0);
    }
    Ok((trace, returns))
}

/// Coefficients of the time-distributed estimator for a batch of utterances,
/// each with its samples. Time-wise statistics are applied and then updated
/// once for the whole batch, in utterance order.
pub fn time_coefficients(
    per_utterance: &[Vec<Vec<f64>>],
    normalization: Normalization,
    stats: &mut MovingStats,
) -> Vec<Vec<Vec<f64>>> {
    match normalization {
        Normalization::Timewise => {
            let flat: Vec<Vec<f64>> = per_utterance.iter().flatten().cloned().collect();
            let mut normed = stats.normalize_timewise(&flat).into_iter();
            per_utterance
                .iter()
                .map(|u| u.iter().map(|_| normed.next().expect("one row per sample")).collect())
                .collect()
        }
        _ => per_utterance.to_vec(),
    }
}

/// Coefficients of the global-reward estimator for one utterance's samples.
pub fn final_coefficients(totals: &[f64], lengths: &[usize], normalization: Normalization) -> Result<Vec<Vec<f64>>> {
    let scaled = match normalization {
        Normalization::AcrossSamples => normalize_final(totals)?,
        Normalization::None => totals.to_vec(),
        Normalization::Timewise => {
            return Err(ObjectiveError::Contract("final reward is not normalized time-wise".into()))
        }
    };
    Ok(scaled
        .into_iter()
        .zip(lengths)
        .map(|(c, &n)| vec![c; n])
        .collect())
}

/// Surrogate scalar and the constant coefficient leaves it was built from.
#[derive(Clone, Debug)]
pub struct Surrogate {
    pub value: Var,
    pub coefficient_vars: Vec<Var>,
}

/// `(1/M) * sum_m sum_t c[m][t] * log_probs[m][t]`.
pub fn reinforce_surrogate(session: &mut Session, log_probs: &[Vec<Var>], coefficients: &[Vec<f64>]) -> Result<Surrogate> {
    if log_probs.is_empty() {
        return Err(ObjectiveError::Contract("empty sample batch".into()));
    }
    if log_probs.len() != coefficients.len() {
        return Err(ObjectiveError::Contract("one coefficient row per sample".into()));
    }
    let t = &mut session.tape;
    let mut terms = Vec::with_capacity(log_probs.len());
    let mut coefficient_vars = Vec::with_capacity(log_probs.len());
    for (lps, cs) in log_probs.iter().zip(coefficients) {
        if lps.len() != cs.len() || lps.is_empty() {
            return Err(ObjectiveError::Contract(format!(
                "{} log-probabilities but {} coefficients",
                lps.len(),
                cs.len()
            )));
        }
        let row = t.concat(lps)?;
        let c = t.constant(Tensor::row(cs.clone()));
        let prod = t.mul(row, c)?;
        terms.push(t.sum(prod));
        coefficient_vars.push(c);
    }
    let total = t.add_all(&terms)?;
    let value = t.scale(total, 1.0 / log_probs.len() as f64);
    Ok(Surrogate {
        value,
        coefficient_vars,
    })
}

fn forced_log_probs(session: &mut Session, features: &Tensor, batch: &SampleBatch, eos: usize) -> Result<Vec<Vec<Var>>> {
    let enc = session.encode(features)?;
    batch
        .samples
        .iter()
        .map(|h| Ok(session.force(&enc, &h.emitted(eos))?))
        .collect()
}

/// Gradient of the time-distributed surrogate for one utterance's samples
/// (an estimate of the gradient of expected reward). `stats` is used and
/// updated only under time-wise normalization.
#[allow(clippy::too_many_arguments)]
pub fn reinforce_time_gradient(
    features: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
    batch: &SampleBatch,
    reference: &[usize],
    gamma: f64,
    normalization: Normalization,
    stats: &mut MovingStats,
) -> Result<ParamGrads> {
    if batch.samples.is_empty() {
        return Err(ObjectiveError::Contract("empty sample batch".into()));
    }
    let mut s = Session::new(params, config)?;
    let lps = forced_log_probs(&mut s, features, batch, config.eos_id())?;
    let returns = batch
        .samples
        .iter()
        .map(|h| Ok(emitted_returns(&h.graphemes, h.truncated, reference, gamma)?.1))
        .collect::<Result<Vec<_>>>()?;
    let coeffs = time_coefficients(&[returns], normalization, stats).remove(0);
    let sur = reinforce_surrogate(&mut s, &lps, &coeffs)?;
    s.tape.backward(sur.value)?;
    Ok(s.gradients())
}

/// Gradient of the global-reward surrogate for one utterance's samples.
pub fn reinforce_final_gradient(
    features: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
    batch: &SampleBatch,
    reference: &[usize],
    normalization: Normalization,
) -> Result<ParamGrads> {
    if normalization == Normalization::AcrossSamples && batch.samples.len() < 2 {
        return Err(ObjectiveError::Contract("normalizing across samples needs M >= 2".into()));
    }
    if batch.samples.is_empty() {
        return Err(ObjectiveError::Contract("empty sample batch".into()));
    }
    let mut s = Session::new(params, config)?;
    let lps = forced_log_probs(&mut s, features, batch, config.eos_id())?;
    let totals = batch
        .samples
        .iter()
        .map(|h| Ok(RewardTrace::new(&h.graphemes, reference, 1.0)?.total_reward()))
        .collect::<Result<Vec<_>>>()?;
    let lengths: Vec<usize> = lps.iter().map(Vec::len).collect();
    let coeffs = final_coefficients(&totals, &lengths, normalization)?;
    let sur = reinforce_surrogate(&mut s, &lps, &coeffs)?;
    s.tape.backward(sur.value)?;
    Ok(s.gradients())
}

/// Forward state of one utterance between sampling and backward.
#[derive(Debug)]
pub struct UtteranceGraph {
    pub session: Session,
    pub mle_loss: Var,
    pub paths: Vec<SampledPath>,
    /// Per-sample emitted returns (time mode) or a single total (final mode).
    pub returns: Vec<Vec<f64>>,
    pub sample_rewards: Vec<f64>,
}

/// Result of backward for one utterance.
#[derive(Clone, Debug)]
pub struct UtteranceGradient {
    pub grads: ParamGrads,
    pub mle_loss: f64,
    /// Total reward `|ref| - ED` of each sample.
    pub sample_rewards: Vec<f64>,
}

/// Forward pass for one utterance: teacher-forced MLE and, when the RL weight
/// is positive, `M` on-policy samples on the same tape.
#[allow(clippy::too_many_arguments)]
pub fn prepare_utterance(
    features: &Tensor,
    transcript: &[usize],
    params: &ModelParams,
    config: &ModelConfig,
    rl: Option<&RlConfig>,
    max_len: usize,
    seed: u64,
    utterance_index: usize,
) -> Result<UtteranceGraph> {
    let eos = config.eos_id();
    let mut target = transcript.to_vec();
    target.push(eos);
    let mut session = Session::new(params, config)?;
    let enc = session.encode(features)?;
    let dists = session.step_distributions(&enc, &target)?;
    let mle = mle_loss(&mut session, &dists, &target)?;
    let mut paths = Vec::new();
    let mut returns = Vec::new();
    let mut sample_rewards = Vec::new();
    if let Some(rl) = rl.filter(|r| r.rl_weight > 0.0) {
        rl.validate()?;
        paths = sample_paths(&mut session, &enc, rl.samples, max_len, seed, utterance_index)?;
        for p in &paths {
            let (trace, ret) = emitted_returns(&p.graphemes, p.truncated, transcript, rl.gamma)?;
            sample_rewards.push(trace.total_reward());
            returns.push(ret);
        }
    }
    Ok(UtteranceGraph {
        session,
        mle_loss: mle,
        paths,
        returns,
        sample_rewards,
    })
}

/// Estimator coefficients for a batch of prepared utterances.
pub fn batch_coefficients(graphs: &[UtteranceGraph], rl: &RlConfig, stats: &mut MovingStats) -> Result<Vec<Vec<Vec<f64>>>> {
    match rl.mode {
        RewardMode::TimeReward => {
            let returns: Vec<Vec<Vec<f64>>> = graphs.iter().map(|g| g.returns.clone()).collect();
            Ok(time_coefficients(&returns, rl.normalization, stats))
        }
        RewardMode::FinalReward => graphs
            .iter()
            .map(|g| {
                if g.paths.is_empty() {
                    return Ok(Vec::new());
                }
                let lengths: Vec<usize> = g.paths.iter().map(|p| p.log_prob_vars.len()).collect();
                final_coefficients(&g.sample_rewards, &lengths, rl.normalization)
            })
            .collect(),
    }
}

/// Backward of `mle_loss - rl_weight * surrogate` for one utterance.
pub fn finish_utterance(mut graph: UtteranceGraph, coefficients: &[Vec<f64>], rl: Option<&RlConfig>) -> Result<UtteranceGradient> {
    let mle_value = graph.session.tape.scalar_value(graph.mle_loss);
    let weight = rl.map_or(0.0, |r| r.rl_weight);
    let loss = if weight > 0.0 && !graph.paths.is_empty() {
        let lps: Vec<Vec<Var>> = graph.paths.iter().map(|p| p.log_prob_vars.clone()).collect();
        let sur = reinforce_surrogate(&mut graph.session, &lps, coefficients)?;
        let t = &mut graph.session.tape;
        let scaled = t.scale(sur.value, weight);
        t.sub(graph.mle_loss, scaled)?
    } else {
        graph.mle_loss
    };
    graph.session.tape.backward(loss)?;
    Ok(UtteranceGradient {
        grads: graph.session.gradients(),
        mle_loss: mle_value,
        sample_rewards: graph.sample_rewards,
    })
}

/// Gradient of `mle_loss - rl_weight * RL surrogate` for a single utterance.
/// With `rl == None` or a zero weight this is exactly the MLE gradient.
#[allow(clippy::too_many_arguments)]
pub fn combined_gradient(
    features: &Tensor,
    transcript: &[usize],
    params: &ModelParams,
    config: &ModelConfig,
    rl: Option<&RlConfig>,
    stats: &mut MovingStats,
    max_len: usize,
    seed: u64,
    utterance_index: usize,
) -> Result<UtteranceGradient> {
    let graph = prepare_utterance(features, transcript, params, config, rl, max_len, seed, utterance_index)?;
    let coeffs = match rl {
        Some(r) if !graph.paths.is_empty() => {
            batch_coefficients(std::slice::from_ref(&graph), r, stats)?.remove(0)
        }
        _ => Vec::new(),
    };
    finish_utterance(graph, &coeffs, rl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{sample_sequences, Hypothesis};
    use crate::rng::substream;
    use crate::seq2seq::Scorer;
    use rand::Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            feature_dim: 3,
            enc_hidden: 2,
            enc_layers: 2,
            subsample_layers: 1,
            embed_dim: 3,
            dec_hidden: 4,
            scorer: Scorer::Mlp,
            mlp_hidden: 3,
            vocab_size: 4,
        }
    }

    fn feats(seed: u64) -> Tensor {
        let mut rng = substream(seed, &[5]);
        Tensor::matrix(6, 3, (0..18).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn mle_loss_cases() {
        let c = tiny();
        let f = feats(1);
        let target = [0, 1, 2, c.eos_id()];
        let mut s = Session::new(&ModelParams::zeros(&c), &c).unwrap();
        let enc = s.encode(&f).unwrap();
        let d = s.step_distributions(&enc, &target).unwrap();
        let l = mle_loss(&mut s, &d, &target).unwrap();
        assert!((s.tape.scalar_value(l) - 4.0 * 4f64.ln()).abs() < 1e-12);
        assert!(mle_loss(&mut s, &d[..3], &target).is_err());

        // Loss is the negated sequence log-probability.
        let p = ModelParams::init_scaled(&c, 3, 0.4);
        let (total, _) = crate::seq2seq::sequence_log_prob(&f, &target, &p, &c).unwrap();
        let mut s = Session::new(&p, &c).unwrap();
        let enc = s.encode(&f).unwrap();
        let d = s.step_distributions(&enc, &target).unwrap();
        let l = mle_loss(&mut s, &d, &target).unwrap();
        assert!(s.tape.scalar_value(l) >= 0.0);
        assert!((s.tape.scalar_value(l) + total).abs() < 1e-12);
    }

    #[test]
    fn perfect_model_has_zero_loss() {
        let c = tiny();
        let mut p = ModelParams::zeros(&c);
        // Always emit eos with probability one.
        let b = p.get_mut("dec.out.b").unwrap();
        b.values_mut().fill(-1000.0);
        b.values_mut()[c.eos_id()] = 0.0;
        let mut s = Session::new(&p, &c).unwrap();
        let enc = s.encode(&feats(1)).unwrap();
        let d = s.step_distributions(&enc, &[c.eos_id()]).unwrap();
        let l = mle_loss(&mut s, &d, &[c.eos_id()]).unwrap();
        assert_eq!(s.tape.scalar_value(l), 0.0);
    }

    #[test]
    fn zero_coefficients_give_zero_gradient() {
        let c = tiny();
        let p = ModelParams::init(&c, 1);
        let mut s = Session::new(&p, &c).unwrap();
        let enc = s.encode(&feats(2)).unwrap();
        let paths = sample_paths(&mut s, &enc, 3, 5, 7, 0).unwrap();
        let lps: Vec<Vec<Var>> = paths.iter().map(|p| p.log_prob_vars.clone()).collect();
        let coeffs: Vec<Vec<f64>> = lps.iter().map(|l| vec![0.0; l.len()]).collect();
        let sur = reinforce_surrogate(&mut s, &lps, &coeffs).unwrap();
        s.tape.backward(sur.value).unwrap();
        assert!(s.gradients().all_zero());
        for v in sur.coefficient_vars {
            assert!(s.tape.grad(v).is_none());
        }
    }

    #[test]
    fn unit_coefficient_is_the_score_function() {
        let c = tiny();
        let p = ModelParams::init_scaled(&c, 4, 0.3);
        let f = feats(3);
        let mut s = Session::new(&p, &c).unwrap();
        let enc = s.encode(&f).unwrap();
        let lp = s.force(&enc, &[2]).unwrap();
        let sur = reinforce_surrogate(&mut s, std::slice::from_ref(&lp), &[vec![1.0]]).unwrap();
        s.tape.backward(sur.value).unwrap();
        let via_surrogate = s.gradients();

        let mut s = Session::new(&p, &c).unwrap();
        let enc = s.encode(&f).unwrap();
        let lp = s.force(&enc, &[2]).unwrap();
        s.tape.backward(lp[0]).unwrap();
        assert_eq!(s.gradients(), via_surrogate);
    }

    #[test]
    fn identical_samples_have_zero_final_gradient() {
        let c = tiny();
        let p = ModelParams::init(&c, 2);
        let f = feats(4);
        let h = Hypothesis::new(vec![1, 0], vec![-1.0, -1.0, -1.0], false);
        let batch = SampleBatch {
            utterance_index: 0,
            samples: vec![h.clone(), h],
            seeds: vec![0, 1],
        };
        let g = reinforce_final_gradient(&f, &p, &c, &batch, &[0, 1], Normalization::AcrossSamples).unwrap();
        assert!(g.all_zero());
        let one = SampleBatch {
            samples: batch.samples[..1].to_vec(),
            ..batch.clone()
        };
        assert!(reinforce_final_gradient(&f, &p, &c, &one, &[0, 1], Normalization::AcrossSamples).is_err());
    }

    #[test]
    fn two_sample_final_gradient_is_half_difference() {
        let c = tiny();
        let p = ModelParams::init_scaled(&c, 6, 0.3);
        let f = feats(5);
        let reference = [0, 1];
        let good = Hypothesis::new(vec![0, 1], vec![0.0; 3], false);
        let bad = Hypothesis::new(vec![2], vec![0.0; 2], false);
        let batch = SampleBatch {
            utterance_index: 0,
            samples: vec![good.clone(), bad.clone()],
            seeds: vec![0, 1],
        };
        let g = reinforce_final_gradient(&f, &p, &c, &batch, &reference, Normalization::AcrossSamples).unwrap();

        let grad_logp = |h: &Hypothesis| {
            let mut s = Session::new(&p, &c).unwrap();
            let enc = s.encode(&f).unwrap();
            let lps = s.force(&enc, &h.emitted(c.eos_id())).unwrap();
            let tot = s.tape.add_all(&lps).unwrap();
            s.tape.backward(tot).unwrap();
            s.gradients()
        };
        let mut expect = grad_logp(&good);
        expect.add_scaled(&grad_logp(&bad), -1.0);
        // Normalized rewards are +-1/(1+eps).
        expect.scale(0.5 / (1.0 + crate::editdist::NORM_EPS));
        assert!(g.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn zero_rl_weight_is_pure_mle_bitwise() {
        let c = tiny();
        let p = ModelParams::init(&c, 8);
        let f = feats(6);
        let mut stats = MovingStats::new();
        let mle = combined_gradient(&f, &[0, 2], &p, &c, None, &mut stats, 6, 1, 0).unwrap();
        let rl = RlConfig {
            rl_weight: 0.0,
            samples: 4,
            ..RlConfig::default()
        };
        let zero = combined_gradient(&f, &[0, 2], &p, &c, Some(&rl), &mut stats, 6, 1, 0).unwrap();
        assert_eq!(mle.grads, zero.grads);
        assert!(stats.is_empty());
    }

    #[test]
    fn combined_is_mle_plus_weighted_rl() {
        let c = tiny();
        let p = ModelParams::init_scaled(&c, 9, 0.3);
        let f = feats(7);
        let reference = [1, 0, 2];
        let rl = RlConfig {
            rl_weight: 0.7,
            samples: 3,
            gamma: 0.5,
            ..RlConfig::default()
        };
        let mut stats = MovingStats::new();
        let combined = combined_gradient(&f, &reference, &p, &c, Some(&rl), &mut stats, 6, 11, 2).unwrap();

        let mut fresh = MovingStats::new();
        let mle = combined_gradient(&f, &reference, &p, &c, None, &mut fresh, 6, 11, 2).unwrap();
        let batch = sample_sequences(&f, &p, &c, 3, 6, 11, 2).unwrap();
        let rl_part =
            reinforce_time_gradient(&f, &p, &c, &batch, &reference, 0.5, Normalization::Timewise, &mut fresh).unwrap();
        assert_eq!(stats, fresh);
        let mut expect = mle.grads.clone();
        expect.add_scaled(&rl_part, -0.7);
        assert!(combined.grads.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn matching_sample_earns_full_reward() {
        let reference = [3usize, 1, 1, 0];
        let (trace, ret) = emitted_returns(&reference, false, &reference, 0.95).unwrap();
        assert_eq!(trace.total_reward(), reference.len() as f64);
        assert_eq!(ret.len(), reference.len() + 1);
        assert_eq!(*ret.last().unwrap(), 0.0);
        let (_, ret) = emitted_returns(&[], false, &reference, 0.95).unwrap();
        assert_eq!(ret, vec![0.0]);
    }

    #[test]
    fn config_pairing_is_enforced() {
        assert!(RlConfig::default().validate().is_ok());
        assert!(RlConfig::final_reward().validate().is_ok());
        let bad = RlConfig {
            normalization: Normalization::AcrossSamples,
            ..RlConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RlConfig {
            gamma: 1.5,
            ..RlConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RlConfig {
            samples: 1,
            ..RlConfig::final_reward()
        };
        assert!(bad.validate().is_err());
    }
}
