//! Reference computations that check the training code from the outside.
//!
//! None of these reuse the code paths they check: finite differences perturb
//! parameters and re-run inference, and the policy-gradient references
//! enumerate every output sequence of a tiny model. Used by the test suites
//! and by the `oracle-check` command. They panic on malformed input.

use rand::Rng;

use crate::editdist::{edit_distance, MovingStats};
use crate::inference::{Hypothesis, SampleBatch};
use crate::numgrad::Tensor;
use crate::objectives::{mle_loss, reinforce_final_gradient, reinforce_time_gradient, Normalization};
use crate::rng::substream;
use crate::seq2seq::{sequence_log_prob, ModelConfig, ModelParams, ParamGrads, Scorer, Session};

/// A model small enough for exhaustive checks: every dimension is at most 8.
pub fn tiny_config(scorer: Scorer, vocab_size: usize) -> ModelConfig {
    ModelConfig {
        feature_dim: 3,
        enc_hidden: 4,
        enc_layers: 2,
        subsample_layers: 1,
        embed_dim: 3,
        dec_hidden: if scorer == Scorer::Dot { 8 } else { 5 },
        scorer,
        mlp_hidden: 4,
        vocab_size,
    }
}

/// Features uniform in `[-1, 1]`.
pub fn random_features(frames: usize, dim: usize, seed: u64) -> Tensor {
    let mut rng = substream(seed, &[99]);
    Tensor::matrix(frames, dim, (0..frames * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}


#[derive(Debug)]
pub struct FdComponent {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl FdComponent {
    /// `|a - n| / max(|a|, |n|)`, or 0 when both vanish.
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

#[derive(Debug)]
pub struct TensorError {
    pub name: String,
    pub norm: f64,
    /// `||a - n|| / max(||a||, 1e-8)` over the tensor's components.
    pub relative_error: f64,
}

/// Norm-wise relative error of each named parameter, in name order.
pub fn per_tensor(components: &[FdComponent]) -> Vec<TensorError> {
    let mut out: Vec<TensorError> = Vec::new();
    let mut i = 0;
    while i < components.len() {
        let name = &components[i].name;
        let group: Vec<&FdComponent> = components[i..].iter().take_while(|c| &c.name == name).collect();
        i += group.len();
        let norm = group.iter().map(|c| c.analytic * c.analytic).sum::<f64>().sqrt();
        let diff = group.iter().map(|c| (c.analytic - c.numeric).powi(2)).sum::<f64>().sqrt();
        out.push(TensorError {
            name: name.clone(),
            norm,
            relative_error: diff / norm.max(1e-8),
        });
    }
    out
}

fn nll(features: &Tensor, target: &[usize], params: &ModelParams, config: &ModelConfig) -> f64 {
    -sequence_log_prob(features, target, params, config).unwrap().0
}

/// Backprop and central differences of the teacher-forced loss for every
/// parameter component. `target` ends in eos.
pub fn fd_check(features: &Tensor, target: &[usize], params: &ModelParams, config: &ModelConfig, h: f64) -> Vec<FdComponent> {
    let mut s = Session::new(params, config).unwrap();
    let enc = s.encode(features).unwrap();
    let d = s.step_distributions(&enc, target).unwrap();
    let loss = mle_loss(&mut s, &d, target).unwrap();
    s.tape.backward(loss).unwrap();
    let grads = s.gradients();

    let mut out = Vec::new();
    let mut p = params.clone();
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        let n = params.get(&name).unwrap().len();
        for i in 0..n {
            let orig = params.get(&name).unwrap().values()[i];
            p.get_mut(&name).unwrap().values_mut()[i] = orig + h;
            let up = nll(features, target, &p, config);
            p.get_mut(&name).unwrap().values_mut()[i] = orig - h;
            let down = nll(features, target, &p, config);
            p.get_mut(&name).unwrap().values_mut()[i] = orig;
            out.push(FdComponent {
                name: name.clone(),
                index: i,
                analytic: grads.get(&name).unwrap()[i],
                numeric: (up - down) / (2.0 * h),
            });
        }
    }
    out
}

/// Every output sequence with at most `max_len` emitted symbols: terminated
/// ones end with eos, truncated ones have exactly `max_len` graphemes.
pub fn enumerate_outputs(graphemes: usize, max_len: usize) -> Vec<(Vec<usize>, bool)> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for len in 0..=max_len {
        let mut next = Vec::new();
        for g in frontier {
            if len < max_len {
                out.push((g.clone(), false));
                for y in 0..graphemes {
                    let mut e = g.clone();
                    e.push(y);
                    next.push(e);
                }
            } else {
                out.push((g, true));
            }
        }
        frontier = next;
    }
    out
}

pub fn hypothesis(graphemes: &[usize], truncated: bool) -> Hypothesis {
    let n = graphemes.len() + usize::from(!truncated);
    Hypothesis::new(graphemes.to_vec(), vec![0.0; n], truncated)
}

fn emitted(graphemes: &[usize], truncated: bool, eos: usize) -> Vec<usize> {
    let mut e = graphemes.to_vec();
    if !truncated {
        e.push(eos);
    }
    e
}

/// `P(y | x)` of every enumerated output.
pub fn output_probabilities(
    features: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
    outputs: &[(Vec<usize>, bool)],
) -> Vec<f64> {
    let mut s = Session::inference(params, config).unwrap();
    let enc = s.encode(features).unwrap();
    outputs
        .iter()
        .map(|(g, t)| {
            let lps = s.force(&enc, &emitted(g, *t, config.eos_id())).unwrap();
            lps.iter().map(|v| s.tape.scalar_value(*v)).sum::<f64>().exp()
        })
        .collect()
}

pub fn total_reward(graphemes: &[usize], reference: &[usize]) -> f64 {
    reference.len() as f64 - edit_distance(graphemes, reference) as f64
}

/// Gradient of `E[R] = sum_y P(y) R(y)` built on one tape from the model's
/// own log-probabilities; no estimator code is involved.
pub fn exact_expected_reward_gradient(
    features: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
    reference: &[usize],
    max_len: usize,
) -> ParamGrads {
    let outputs = enumerate_outputs(config.vocab_size - 1, max_len);
    let mut s = Session::new(params, config).unwrap();
    let enc = s.encode(features).unwrap();
    let mut terms = Vec::new();
    for (g, t) in &outputs {
        let lps = s.force(&enc, &emitted(g, *t, config.eos_id())).unwrap();
        let logp = s.tape.add_all(&lps).unwrap();
        let p = s.tape.exp(logp);
        terms.push(s.tape.scale(p, total_reward(g, reference)));
    }
    let e = s.tape.add_all(&terms).unwrap();
    s.tape.backward(e).unwrap();
    s.gradients()
}

fn weighted_sum(items: impl Iterator<Item = (f64, ParamGrads)>, like: &ModelParams) -> ParamGrads {
    let mut acc = ParamGrads::zeros_like(like);
    for (w, g) in items {
        acc.add_scaled(&g, w);
    }
    acc
}

fn single(g: &[usize], t: bool) -> SampleBatch {
    SampleBatch {
        utterance_index: 0,
        samples: vec![hypothesis(g, t)],
        seeds: vec![0],
    }
}

/// `sum_y P(y) * g_time(y)`: the exact expectation of the time-distributed
/// estimator with one sample, no normalization.
pub fn exact_time_estimator(
    features: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
    reference: &[usize],
    gamma: f64,
    max_len: usize,
) -> ParamGrads {
    let outputs = enumerate_outputs(config.vocab_size - 1, max_len);
    let probs = output_probabilities(features, params, config, &outputs);
    weighted_sum(
        outputs.iter().zip(probs).map(|((g, t), p)| {
            let mut stats = MovingStats::new();
            let grad = reinforce_time_gradient(
                features,
                params,
                config,
                &single(g, *t),
                reference,
                gamma,
                Normalization::None,
                &mut stats,
            )
            .unwrap();
            (p, grad)
        }),
        params,
    )
}

/// `sum_y P(y) * g_final(y)` for the global-reward estimator.
pub fn exact_final_estimator(
    features: &Tensor,
    params: &ModelParams,
    config: &ModelConfig,
    reference: &[usize],
    max_len: usize,
) -> ParamGrads {
    let outputs = enumerate_outputs(config.vocab_size - 1, max_len);
    let probs = output_probabilities(features, params, config, &outputs);
    weighted_sum(
        outputs.iter().zip(probs).map(|((g, t), p)| {
            let grad =
                reinforce_final_gradient(features, params, config, &single(g, *t), reference, Normalization::None)
                    .unwrap();
            (p, grad)
        }),
        params,
    )
}

/// Levenshtein distance from the complete `(|a|+1) x (|b|+1)` table.
pub fn full_table_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// The output with the best length-normalized log-probability among all
/// outputs of at most `max_len` symbols; ties go to the smaller transcript.
pub fn exhaustive_best(features: &Tensor, params: &ModelParams, config: &ModelConfig, max_len: usize) -> (Vec<usize>, bool) {
    let outputs = enumerate_outputs(config.vocab_size - 1, max_len);
    let probs = output_probabilities(features, params, config, &outputs);
    let mut best: Option<(usize, f64)> = None;
    for (i, ((g, t), p)) in outputs.iter().zip(&probs).enumerate() {
        let emitted = g.len() + usize::from(!*t);
        let score = p.ln() / emitted.max(1) as f64;
        let better = match best {
            None => true,
            Some((b, s)) => score > s || (score == s && *g < outputs[b].0),
        };
        if better {
            best = Some((i, score));
        }
    }
    outputs[best.expect("at least one output").0].clone()
}

/// Outcome of one [`self_check`] item.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Quick versions of the oracle comparisons, drawn from `seed`: edit distance
/// against the full table, MLE gradients against finite differences, the two
/// exact policy-gradient estimators against the gradient of `E[R]`, and a wide
/// beam against exhaustive search.
pub fn self_check(seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();

    let mut rng = substream(seed, &[0xed]);
    let mut bad = 0;
    for _ in 0..500 {
        let a: Vec<u8> = (0..rng.random_range(0..=15)).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u8> = (0..rng.random_range(0..=15)).map(|_| rng.random_range(0..4)).collect();
        if edit_distance(&a, &b) != full_table_edit_distance(&a, &b) {
            bad += 1;
        }
    }
    out.push(CheckResult {
        name: "edit distance",
        pass: bad == 0,
        detail: format!("{bad}/500 pairs disagree with the full table"),
    });

    let mut worst = (0.0f64, String::new());
    for (k, scorer) in [Scorer::Mlp, Scorer::Bilinear, Scorer::Dot].into_iter().enumerate() {
        let c = tiny_config(scorer, 4);
        let p = ModelParams::init_scaled(&c, seed.wrapping_add(k as u64), 1.0);
        let f = random_features(7, 3, seed.wrapping_add(k as u64));
        for t in per_tensor(&fd_check(&f, &[2, 0, 1, c.eos_id()], &p, &c, 1e-5)) {
            if t.relative_error >= worst.0 {
                worst = (t.relative_error, format!("{scorer:?} {}", t.name));
            }
        }
    }
    out.push(CheckResult {
        name: "MLE gradient",
        pass: worst.0 <= 1e-6,
        detail: format!("worst per-tensor relative error {:.2e} ({})", worst.0, worst.1),
    });

    let c = tiny_config(Scorer::Mlp, 3);
    let p = ModelParams::init_scaled(&c, seed, 0.7);
    let f = random_features(6, 3, seed);
    let r = [0, 1];
    let exact = exact_expected_reward_gradient(&f, &p, &c, &r, 3);
    let fin = exact_final_estimator(&f, &p, &c, &r, 3);
    let time = exact_time_estimator(&f, &p, &c, &r, 1.0, 3);
    let (d_fin, d_time) = (fin.max_abs_diff(&exact), time.max_abs_diff(&exact));
    out.push(CheckResult {
        name: "policy gradient",
        pass: d_fin <= 1e-10 && d_time <= 1e-10,
        detail: format!("final-reward {d_fin:.2e}, per-step {d_time:.2e} from the gradient of E[R]"),
    });

    let mut mismatch = 0;
    for i in 0..5u64 {
        let s = seed.wrapping_mul(31).wrapping_add(i);
        let p = ModelParams::init_scaled(&c, s, 1.0);
        let f = random_features(6, 3, s);
        let b = crate::inference::beam_search(&f, &p, &c, 27, 3).expect("tiny model decodes");
        if (b.graphemes, b.truncated) != exhaustive_best(&f, &p, &c, 3) {
            mismatch += 1;
        }
    }
    out.push(CheckResult {
        name: "beam search",
        pass: mismatch == 0,
        detail: format!("{mismatch}/5 models where a full beam misses the exhaustive best"),
    });
    out
}
