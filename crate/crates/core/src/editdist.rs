//! Levenshtein distance and the edit-distance reward machinery.
//!
//! The per-step reward is the decrease in edit distance to the reference
//! caused by appending one more grapheme to the hypothesis. Rewards telescope:
//! their sum over a hypothesis is `|ref| - ED(hyp, ref)`.

use serde::{Deserialize, Serialize};

/// Guard added to standard deviations in both normalizers.
pub const NORM_EPS: f64 = 1e-8;
/// Decay of the per-time-step exponential moving averages.
pub const STATS_DECAY: f64 = 0.99;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RewardError {
    #[error("contract error: {0}")]
    Contract(&'static str),
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `ED(hyp[..=t], ref)` for every prefix of `hyp`, from a single DP pass.
///
/// Row `t` of the table holds distances from `hyp[..t]` to every prefix of
/// `reference`; its last column is the prefix distance we want.
pub fn prefix_edit_distances<T: PartialEq>(
    hyp: &[T],
    reference: &[T],
) -> Result<Vec<usize>, RewardError> {
    if hyp.is_empty() {
        return Err(RewardError::Contract("prefix_edit_distances needs a nonempty hypothesis"));
    }
    let n = reference.len();
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut cur = vec![0; n + 1];
    let mut out = Vec::with_capacity(hyp.len());
    for (i, x) in hyp.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in reference.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        out.push(cur[n]);
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(out)
}

/// Integer per-step rewards; see [`step_rewards`].
pub fn step_rewards_int<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<Vec<i64>, RewardError> {
    if reference.is_empty() {
        return Err(RewardError::Contract("step rewards need a nonempty reference"));
    }
    let dists = prefix_edit_distances(hyp, reference)?;
    let mut prev = reference.len() as i64;
    Ok(dists
        .into_iter()
        .map(|d| {
            let d = d as i64;
            let r = -(d - prev);
            prev = d;
            r
        })
        .collect())
}

/// `r[0] = |ref| - ED(hyp[..1], ref)`, `r[t] = ED(hyp[..t], ref) - ED(hyp[..=t], ref)`.
pub fn step_rewards<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<Vec<f64>, RewardError> {
    Ok(step_rewards_int(hyp, reference)?
        .into_iter()
        .map(|r| r as f64)
        .collect())
}

/// `R[t] = sum_{i>=t} gamma^(i-t) r[i]` by a right-to-left scan.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>, RewardError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(RewardError::Contract("discount must lie in [0, 1]"));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// Rewards, returns and (optionally) normalized returns for one hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardTrace {
    pub step_rewards: Vec<f64>,
    pub returns: Vec<f64>,
    pub normalized_returns: Option<Vec<f64>>,
    pub discount: f64,
}

impl RewardTrace {
    /// Trace for a hypothesis of graphemes (eos excluded). An empty hypothesis
    /// yields an empty trace.
    pub fn new(hyp: &[usize], reference: &[usize], discount: f64) -> Result<Self, RewardError> {
        let step_rewards = if hyp.is_empty() {
            if reference.is_empty() {
                return Err(RewardError::Contract("step rewards need a nonempty reference"));
            }
            Vec::new()
        } else {
            step_rewards(hyp, reference)?
        };
        let returns = discounted_returns(&step_rewards, discount)?;
        Ok(RewardTrace {
            step_rewards,
            returns,
            normalized_returns: None,
            discount,
        })
    }

    pub fn total_reward(&self) -> f64 {
        self.step_rewards.iter().sum()
    }
}

/// Per-time-step running mean and standard deviation of returns.
///
/// Slots grow on demand; a step index never seen before starts at
/// `mean = 0, std = 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MovingStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl MovingStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn ensure(&mut self, len: usize) {
        if self.mean.len() < len {
            self.mean.resize(len, 0.0);
            self.std.resize(len, 1.0);
        }
    }

    pub fn mean_at(&self, t: usize) -> f64 {
        self.mean.get(t).copied().unwrap_or(0.0)
    }

    pub fn std_at(&self, t: usize) -> f64 {
        self.std.get(t).copied().unwrap_or(1.0)
    }

    /// Normalize a batch of return sequences with the current statistics, then
    /// fold the batch into the moving averages.
    ///
    /// Sequences may have different lengths; each step index is updated from
    /// the samples that reach it.
    pub fn normalize_timewise(&mut self, returns: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let out = returns
            .iter()
            .map(|seq| {
                seq.iter()
                    .enumerate()
                    .map(|(t, r)| (r - self.mean_at(t)) / (self.std_at(t) + NORM_EPS))
                    .collect()
            })
            .collect();
        self.update(returns);
        out
    }

    /// EMA update: `mean <- d*mean + (1-d)*batch_mean`, and the variance EMA
    /// tracks the batch's mean squared deviation from the previous mean.
    pub fn update(&mut self, returns: &[Vec<f64>]) {
        let max_len = returns.iter().map(Vec::len).max().unwrap_or(0);
        self.ensure(max_len);
        for t in 0..max_len {
            let col: Vec<f64> = returns.iter().filter_map(|s| s.get(t).copied()).collect();
            let n = col.len() as f64;
            let mu = self.mean[t];
            let batch_mean = col.iter().sum::<f64>() / n;
            let batch_sq = col.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / n;
            let var = self.std[t] * self.std[t];
            self.mean[t] = STATS_DECAY * mu + (1.0 - STATS_DECAY) * batch_mean;
            self.std[t] = (STATS_DECAY * var + (1.0 - STATS_DECAY) * batch_sq).sqrt();
        }
    }
}

/// `(R - mean) / (std + eps)` across samples, population standard deviation.
pub fn normalize_final(rewards: &[f64]) -> Result<Vec<f64>, RewardError> {
    if rewards.len() < 2 {
        return Err(RewardError::Contract("normalizing across samples needs at least two"));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    let std = (centered.iter().map(|c| c * c).sum::<f64>() / n).sqrt();
    Ok(centered.into_iter().map(|c| c / (std + NORM_EPS)).collect())
}
