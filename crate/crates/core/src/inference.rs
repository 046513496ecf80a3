//! Monte Carlo sampling, greedy decoding and beam search.

use std::cmp::Ordering;

use rand::Rng;

use crate::numgrad::{Tensor, Var};
use crate::rng::{derive_seed, substream};
use crate::seq2seq::{DecoderState, EncoderStates, ModelConfig, ModelParams, Result, Session};

/// A decoded transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted graphemes, eos stripped.
    pub graphemes: Vec<usize>,
    /// Log-probability of every emitted symbol, including a terminal eos.
    pub step_log_probs: Vec<f64>,
    pub total_log_prob: f64,
    /// `total_log_prob` divided by the number of emitted symbols.
    pub normalized_score: f64,
    /// True when decoding hit the length cap before emitting eos.
    pub truncated: bool,
}

impl Hypothesis {
    pub fn new(graphemes: Vec<usize>, step_log_probs: Vec<f64>, truncated: bool) -> Self {
        let total_log_prob = step_log_probs.iter().sum();
        Self::with_total(graphemes, step_log_probs, total_log_prob, truncated)
    }

    fn with_total(graphemes: Vec<usize>, step_log_probs: Vec<f64>, total_log_prob: f64, truncated: bool) -> Self {
        let emitted = step_log_probs.len().max(1);
        Hypothesis {
            normalized_score: total_log_prob / emitted as f64,
            graphemes,
            step_log_probs,
            total_log_prob,
            truncated,
        }
    }

    /// Emitted symbols, with eos appended unless truncated.
    pub fn emitted(&self, eos: usize) -> Vec<usize> {
        let mut e = self.graphemes.clone();
        if !self.truncated {
            e.push(eos);
        }
        e
    }

    /// Higher score first; ties go to the lexicographically smaller transcript.
    fn better_than(&self, other: &Hypothesis) -> bool {
        match self.normalized_score.partial_cmp(&other.normalized_score) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => self.graphemes < other.graphemes,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub utterance_index: usize,
    pub samples: Vec<Hypothesis>,
    /// Seed of each sample's random substream.
    pub seeds: Vec<u64>,
}

/// A sampled path kept on the session's tape, for gradient estimators.
#[derive(Clone, Debug)]
pub struct SampledPath {
    pub graphemes: Vec<usize>,
    /// Scalar log-probability of each emitted symbol (eos included when present).
    pub log_prob_vars: Vec<Var>,
    pub truncated: bool,
    pub seed: u64,
}

impl SampledPath {
    pub fn to_hypothesis(&self, session: &Session) -> Hypothesis {
        let steps = self
            .log_prob_vars
            .iter()
            .map(|v| session.tape.scalar_value(*v))
            .collect();
        Hypothesis::new(self.graphemes.clone(), steps, self.truncated)
    }
}

/// Draw an index from log-probabilities by inverse CDF.
fn draw(log_probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, lp) in log_probs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_nonzero
}

/// Sample `count` sequences on `session`'s tape. Sample `m` of utterance
/// `utterance_index` uses substream `(seed, utterance_index, m)`.
pub fn sample_paths(
    session: &mut Session,
    enc: &EncoderStates,
    count: usize,
    max_len: usize,
    seed: u64,
    utterance_index: usize,
) -> Result<Vec<SampledPath>> {
    let eos = session.config().eos_id();
    let sos = session.config().sos_id();
    let mut out = Vec::with_capacity(count);
    for m in 0..count {
        let path = [utterance_index as u64, m as u64];
        let sample_seed = derive_seed(seed, &path);
        let mut rng = substream(seed, &path);
        let mut state = session.initial_state();
        let mut prev = sos;
        let mut graphemes = Vec::new();
        let mut log_prob_vars = Vec::new();
        let mut truncated = true;
        for _ in 0..max_len {
            let step = session.decode_step(prev, &state, enc)?;
            let y = draw(session.tape.values(step.log_probs), rng.random::<f64>());
            log_prob_vars.push(session.tape.pick(step.log_probs, y)?);
            if y == eos {
                truncated = false;
                break;
            }
            graphemes.push(y);
            state = step.state;
            prev = y;
        }
        out.push(SampledPath {
            graphemes,
            log_prob_vars,
            truncated,
            seed: sample_seed,
        });
    }
    Ok(out)
}

/// Sample `count` transcripts from the model for one utterance.
pub fn sample_sequences(
    features: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
    count: usize,
    max_len: usize,
    seed: u64,
    utterance_index: usize,
) -> Result<SampleBatch> {
    let mut s = Session::inference(params, config)?;
    let enc = s.encode(features)?;
    let paths = sample_paths(&mut s, &enc, count, max_len, seed, utterance_index)?;
    Ok(SampleBatch {
        utterance_index,
        seeds: paths.iter().map(|p| p.seed).collect(),
        samples: paths.iter().map(|p| p.to_hypothesis(&s)).collect(),
    })
}

/// Argmax decoding; ties go to the smaller symbol id.
pub fn greedy_decode(features: &Tensor, params: &ModelParams, config: &ModelConfig, max_len: usize) -> Result<Hypothesis> {
    let mut s = Session::inference(params, config)?;
    let enc = s.encode(features)?;
    greedy_on(&mut s, &enc, max_len)
}

pub fn greedy_on(s: &mut Session, enc: &EncoderStates, max_len: usize) -> Result<Hypothesis> {
    let eos = s.config().eos_id();
    let mut state = s.initial_state();
    let mut prev = s.config().sos_id();
    let mut graphemes = Vec::new();
    let mut steps = Vec::new();
    let mut total = 0.0;
    for _ in 0..max_len {
        let out = s.decode_step(prev, &state, enc)?;
        let lps = s.tape.values(out.log_probs);
        let mut best = 0;
        for (i, &lp) in lps.iter().enumerate() {
            if total + lp > total + lps[best] {
                best = i;
            }
        }
        total += lps[best];
        steps.push(lps[best]);
        if best == eos {
            return Ok(Hypothesis::with_total(graphemes, steps, total, false));
        }
        graphemes.push(best);
        state = out.state;
        prev = best;
    }
    Ok(Hypothesis::with_total(graphemes, steps, total, true))
}

struct Partial {
    graphemes: Vec<usize>,
    steps: Vec<f64>,
    total: f64,
    state: DecoderState,
}

/// Beam search with length-normalized final selection.
///
/// Every step expands each live hypothesis by every symbol and keeps the
/// `beam` best expansions by total log-probability (ties: smaller transcript
/// first). Kept eos expansions are finished; so are expansions that reach
/// `max_len`. The finished hypothesis with the best normalized score wins.
pub fn beam_search(
    features: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
    beam: usize,
    max_len: usize,
) -> Result<Hypothesis> {
    let mut s = Session::inference(params, config)?;
    let enc = s.encode(features)?;
    beam_on(&mut s, &enc, beam, max_len)
}

pub fn beam_on(s: &mut Session, enc: &EncoderStates, beam: usize, max_len: usize) -> Result<Hypothesis> {
    let beam = beam.max(1);
    let eos = s.config().eos_id();
    let sos = s.config().sos_id();
    let init = s.initial_state();
    let mut live = vec![Partial {
        graphemes: Vec::new(),
        steps: Vec::new(),
        total: 0.0,
        state: init,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for step in 1..=max_len {
        if live.is_empty() {
            break;
        }
        // (parent, symbol, new total, log-prob, next state)
        let mut cands: Vec<(usize, usize, f64, f64, DecoderState)> = Vec::new();
        for (pi, p) in live.iter().enumerate() {
            let prev = p.graphemes.last().copied().unwrap_or(sos);
            let out = s.decode_step(prev, &p.state, enc)?;
            for (y, &lp) in s.tape.values(out.log_probs).iter().enumerate() {
                cands.push((pi, y, p.total + lp, lp, out.state));
            }
        }
        cands.sort_by(|a, b| {
            b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal).then_with(|| {
                let sa = live[a.0].graphemes.iter().chain(std::iter::once(&a.1));
                let sb = live[b.0].graphemes.iter().chain(std::iter::once(&b.1));
                sa.cmp(sb)
            })
        });
        let mut next = Vec::with_capacity(beam);
        for (pi, y, total, lp, state) in cands.into_iter().take(beam) {
            let parent = &live[pi];
            let mut steps = parent.steps.clone();
            steps.push(lp);
            if y == eos {
                finished.push(Hypothesis::with_total(parent.graphemes.clone(), steps, total, false));
                continue;
            }
            let mut graphemes = parent.graphemes.clone();
            graphemes.push(y);
            if step == max_len {
                finished.push(Hypothesis::with_total(graphemes, steps, total, true));
            } else {
                next.push(Partial {
                    graphemes,
                    steps,
                    total,
                    state,
                });
            }
        }
        live = next;
    }

    let mut best: Option<Hypothesis> = None;
    for h in finished {
        if best.as_ref().is_none_or(|b| h.better_than(b)) {
            best = Some(h);
        }
    }
    Ok(best.expect("max_len >= 1 always finishes at least one hypothesis"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::Scorer;

    fn tiny(vocab: usize) -> ModelConfig {
        ModelConfig {
            feature_dim: 3,
            enc_hidden: 2,
            enc_layers: 2,
            subsample_layers: 1,
            embed_dim: 3,
            dec_hidden: 4,
            scorer: Scorer::Mlp,
            mlp_hidden: 3,
            vocab_size: vocab,
        }
    }

    fn feats(seed: u64) -> Tensor {
        let mut rng = substream(seed, &[77]);
        Tensor::matrix(6, 3, (0..18).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn always_eos(c: &ModelConfig) -> ModelParams {
        let mut p = ModelParams::zeros(c);
        let b = p.get_mut("dec.out.b").unwrap();
        b.values_mut().fill(-1000.0);
        b.values_mut()[c.eos_id()] = 0.0;
        p
    }

    #[test]
    fn deterministic_eos_gives_empty_samples() {
        let c = tiny(4);
        let batch = sample_sequences(&feats(1), &always_eos(&c), &c, 5, 10, 3, 0).unwrap();
        assert_eq!(batch.samples.len(), 5);
        for h in &batch.samples {
            assert!(h.graphemes.is_empty());
            assert_eq!(h.step_log_probs, vec![0.0]);
            assert!(!h.truncated);
        }
        let g = greedy_decode(&feats(1), &always_eos(&c), &c, 10).unwrap();
        assert!(g.graphemes.is_empty());
    }

    #[test]
    fn sampling_is_reproducible_and_capped() {
        let c = tiny(4);
        let p = ModelParams::init_scaled(&c, 2, 0.5);
        let a = sample_sequences(&feats(2), &p, &c, 8, 4, 99, 3).unwrap();
        let b = sample_sequences(&feats(2), &p, &c, 8, 4, 99, 3).unwrap();
        assert_eq!(a, b);
        let other = sample_sequences(&feats(2), &p, &c, 8, 4, 99, 4).unwrap();
        assert_ne!(a.seeds, other.seeds);
        for h in &a.samples {
            assert!(h.step_log_probs.len() <= 4);
            assert_eq!(h.truncated, h.graphemes.len() == 4);
            assert!((h.total_log_prob - h.step_log_probs.iter().sum::<f64>()).abs() <= 1e-12);
        }
    }

    #[test]
    fn draw_handles_rounding_at_the_top() {
        let lps = [0.5f64.ln(), 0.5f64.ln(), f64::NEG_INFINITY];
        assert_eq!(draw(&lps, 0.25), 0);
        assert_eq!(draw(&lps, 0.75), 1);
        assert_eq!(draw(&lps, 1.0), 1);
    }

    #[test]
    fn beam_one_equals_greedy() {
        let c = tiny(5);
        for seed in 0..10 {
            let p = ModelParams::init_scaled(&c, seed, 0.6);
            let f = feats(seed);
            let g = greedy_decode(&f, &p, &c, 8).unwrap();
            let b = beam_search(&f, &p, &c, 1, 8).unwrap();
            assert_eq!(g, b);
            let again = greedy_decode(&f, &p, &c, 8).unwrap();
            assert_eq!(g, again);
        }
    }

    fn enumerate(s: &mut Session, enc: &EncoderStates, max_len: usize) -> Vec<Hypothesis> {
        let v = s.config().vocab_size;
        let eos = s.config().eos_id();
        let mut out = Vec::new();
        let mut stack: Vec<Vec<usize>> = vec![vec![]];
        while let Some(prefix) = stack.pop() {
            // Terminate here with eos, or extend.
            if prefix.len() < max_len {
                let mut with_eos = prefix.clone();
                with_eos.push(eos);
                let lps = s.force(enc, &with_eos).unwrap();
                let steps = lps.iter().map(|x| s.tape.scalar_value(*x)).collect();
                out.push(Hypothesis::new(prefix.clone(), steps, false));
                for y in 0..v - 1 {
                    let mut p = prefix.clone();
                    p.push(y);
                    stack.push(p);
                }
            } else {
                let lps = s.force(enc, &prefix).unwrap();
                let steps = lps.iter().map(|x| s.tape.scalar_value(*x)).collect();
                out.push(Hypothesis::new(prefix.clone(), steps, true));
            }
        }
        out
    }

    #[test]
    fn wide_beam_matches_exhaustive_search() {
        for (vocab, max_len, beam) in [(2usize, 2usize, 4usize), (3, 3, 27)] {
            let c = tiny(vocab);
            for seed in 0..5 {
                let p = ModelParams::init_scaled(&c, seed, 1.0);
                let f = feats(seed);
                let mut s = Session::inference(&p, &c).unwrap();
                let enc = s.encode(&f).unwrap();
                let all = enumerate(&mut s, &enc, max_len);
                let total_p: f64 = all.iter().map(|h| h.total_log_prob.exp()).sum();
                assert!((total_p - 1.0).abs() < 1e-12);
                let best = all
                    .iter()
                    .max_by(|a, b| {
                        a.normalized_score
                            .partial_cmp(&b.normalized_score)
                            .unwrap()
                            .then(b.graphemes.cmp(&a.graphemes))
                    })
                    .unwrap();
                let found = beam_search(&f, &p, &c, beam, max_len).unwrap();
                assert_eq!(found.graphemes, best.graphemes);
                assert!((found.normalized_score - best.normalized_score).abs() < 1e-12);
            }
        }
    }
}
