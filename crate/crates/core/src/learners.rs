//! Independent tabular learners for strategic-form games: softmax policies
//! trained by Reinforce with Adam, and the prosocial reward mixer.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix_games::ProsocialWeight;

/// How a prosocial agent aggregates the rewards of the other agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixMode {
    /// Mean of the other agents' rewards.
    #[default]
    Average,
    /// Sum of the other agents' rewards.
    Sum,
}

/// Mixes an agent's own reward with those of the others:
/// `(1 - α) own + α aggregate(others)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardMixer {
    pub alpha: ProsocialWeight,
    pub mode: MixMode,
}

impl RewardMixer {
    pub fn new(alpha: ProsocialWeight, mode: MixMode) -> Self {
        Self { alpha, mode }
    }

    pub fn selfish() -> Self {
        Self::default()
    }

    pub fn mix(&self, own: f64, others: &[f64]) -> Result<f64> {
        mix_rewards(self, own, others)
    }
}

pub fn mix_rewards(mixer: &RewardMixer, own: f64, others: &[f64]) -> Result<f64> {
    if others.is_empty() {
        return Err(Error::Empty("rewards of other agents"));
    }
    let total: f64 = others.iter().sum();
    let aggregate = match mixer.mode {
        MixMode::Average => total / others.len() as f64,
        MixMode::Sum => total,
    };
    let a = mixer.alpha.value();
    Ok((1.0 - a) * own + a * aggregate)
}

/// Numerically stable softmax of `logits` into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = libm::exp(z - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Stateless policy over a finite action set, parameterized by logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    logits: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Empty("action set"));
        }
        Ok(Self { logits })
    }

    pub fn uniform(actions: usize) -> Result<Self> {
        Self::new(vec![0.0; actions])
    }

    /// Logits drawn i.i.d. from `N(0, sigma²)`.
    pub fn random<R: Rng + ?Sized>(actions: usize, sigma: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, sigma)
            .map_err(|_| Error::InvalidConfig(alloc::format!("init sigma {sigma}")))?;
        Self::new((0..actions).map(|_| normal.sample(rng)).collect())
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn num_actions(&self) -> usize {
        self.logits.len()
    }

    pub fn action_probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.logits.len()];
        softmax_into(&self.logits, &mut p);
        p
    }

    fn check_finite(&self) -> Result<()> {
        if self.logits.iter().all(|z| z.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("policy logits".into()))
        }
    }

    /// Gradient of `log π(action)` with respect to the logits,
    /// `onehot(action) - π`.
    pub fn log_prob_grad(&self, action: usize) -> Vec<f64> {
        let mut g = self.action_probabilities();
        for x in &mut g {
            *x = -*x;
        }
        g[action] += 1.0;
        g
    }
}

/// An action drawn from a policy with its log-probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    pub action: usize,
    pub log_prob: f64,
}

/// Draws an action from `softmax(logits)` by inverse CDF on one uniform draw.
pub fn sample_action<R: Rng + ?Sized>(policy: &SoftmaxPolicy, rng: &mut R) -> Result<SampledAction> {
    policy.check_finite()?;
    let probs = policy.action_probabilities();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut action = probs.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            action = i;
            break;
        }
    }
    Ok(SampledAction {
        action,
        log_prob: libm::log(probs[action]),
    })
}

/// Adam optimizer state for a flat parameter vector. Steps minimize.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected Adam step of `params` against `grad` (the gradient
    /// of a loss to be minimized).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                found: if params.len() != self.m.len() { params.len() } else { grad.len() },
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
        Ok(())
    }
}

/// One decision of an episode: the action taken and the (already mixed)
/// reward that followed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub reward: f64,
}

/// Discounted return-to-go of each step of an episode.
pub fn discounted_returns(rewards: impl DoubleEndedIterator<Item = f64>, discount: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut acc = 0.0;
    for r in rewards.rev() {
        acc = r + discount * acc;
        out.push(acc);
    }
    out.reverse();
    out
}

/// Reinforce estimate of the gradient of expected return:
/// `mean over steps of ∇ log π(a_t) (G_t - baseline)`.
///
/// Empty episodes contribute nothing. Returns `None` when the batch holds no
/// steps at all.
pub fn policy_gradient(
    policy: &SoftmaxPolicy,
    episodes: &[Vec<Decision>],
    discount: f64,
    baseline: f64,
) -> Option<Vec<f64>> {
    let n = policy.num_actions();
    let probs = policy.action_probabilities();
    let mut grad = vec![0.0; n];
    let mut steps = 0usize;
    for episode in episodes {
        let returns = discounted_returns(episode.iter().map(|d| d.reward), discount);
        for (d, g) in episode.iter().zip(returns) {
            let weight = g - baseline;
            for (k, gk) in grad.iter_mut().enumerate() {
                let indicator = if k == d.action { 1.0 } else { 0.0 };
                *gk += (indicator - probs[k]) * weight;
            }
            steps += 1;
        }
    }
    if steps == 0 {
        return None;
    }
    for g in &mut grad {
        *g /= steps as f64;
    }
    Some(grad)
}

/// One Reinforce step with Adam: ascends the expected mixed return.
pub fn reinforce_update(
    policy: &mut SoftmaxPolicy,
    episodes: &[Vec<Decision>],
    adam: &mut AdamState,
    discount: f64,
    baseline: f64,
) -> Result<()> {
    if episodes.is_empty() {
        return Err(Error::Empty("episode batch"));
    }
    for d in episodes.iter().flatten() {
        if d.action >= policy.num_actions() {
            return Err(Error::IndexOutOfBounds {
                index: d.action,
                len: policy.num_actions(),
            });
        }
    }
    let Some(grad) = policy_gradient(policy, episodes, discount, baseline) else {
        return Ok(());
    };
    let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
    adam.step(&mut policy.logits, &descent)?;
    policy.check_finite()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub lr: f64,
    /// Standard deviation of the initial logits.
    pub init_sigma: f64,
    /// Subtract a running mean of returns from each return.
    pub baseline: bool,
    /// Decay of the running baseline.
    pub baseline_decay: f64,
    pub discount: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            init_sigma: 1.0,
            baseline: false,
            baseline_decay: 0.99,
            discount: 1.0,
        }
    }
}

/// A reactive learner: a softmax policy, its optimizer, its reward mixer and
/// an optional running baseline.
#[derive(Debug, Clone)]
pub struct TabularLearner {
    pub policy: SoftmaxPolicy,
    pub adam: AdamState,
    pub mixer: RewardMixer,
    cfg: LearnerConfig,
    baseline: Option<f64>,
}

impl TabularLearner {
    pub fn new<R: Rng + ?Sized>(
        actions: usize,
        mixer: RewardMixer,
        cfg: LearnerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let policy = SoftmaxPolicy::random(actions, cfg.init_sigma, rng)?;
        Ok(Self {
            adam: AdamState::new(actions, cfg.lr),
            policy,
            mixer,
            cfg,
            baseline: None,
        })
    }

    pub fn act<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        Ok(sample_action(&self.policy, rng)?.action)
    }

    /// Updates on a single one-step episode with the given mixed reward.
    pub fn learn(&mut self, action: usize, mixed_reward: f64) -> Result<()> {
        let baseline = if self.cfg.baseline { self.baseline.unwrap_or(0.0) } else { 0.0 };
        reinforce_update(
            &mut self.policy,
            &[vec![Decision {
                action,
                reward: mixed_reward,
            }]],
            &mut self.adam,
            self.cfg.discount,
            baseline,
        )?;
        if self.cfg.baseline {
            let d = self.cfg.baseline_decay;
            self.baseline = Some(match self.baseline {
                None => mixed_reward,
                Some(b) => d * b + (1.0 - d) * mixed_reward,
            });
        }
        Ok(())
    }
}
