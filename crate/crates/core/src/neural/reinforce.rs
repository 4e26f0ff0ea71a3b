use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::net::{ConvPolicyNet, Mode};
use super::optim::RmsProp;
use super::{log_softmax, Scalar};
use crate::envs_markov::GameKind;
use crate::error::{Error, Result};
use crate::learners::discounted_returns;

/// Upper bound on the steps used to refresh batch-norm running statistics
/// after an update.
pub const REFRESH_SAMPLES: usize = 4096;

/// Batched episodic training settings for grid-game policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSpec {
    pub batch_episodes: usize,
    pub discount: f64,
    pub entropy_weight: f64,
    pub total_episodes: usize,
    pub lr: f64,
    /// Subtract a running mean of returns from every return.
    pub baseline: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            batch_episodes: 64,
            discount: 0.99,
            entropy_weight: 0.0,
            total_episodes: 20_000,
            lr: 1e-3,
            baseline: false,
        }
    }
}

impl TrainSpec {
    /// Defaults for a game: entropy regularization 0.05 for the Markov Stag
    /// Hunt, none otherwise.
    pub fn for_game(kind: GameKind) -> Self {
        Self {
            entropy_weight: if kind == GameKind::StagHunt { 0.05 } else { 0.0 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_episodes == 0 {
            return Err(Error::InvalidConfig("batch_episodes must be >= 1".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::InvalidConfig(format!("discount {} must lie in (0, 1]", self.discount)));
        }
        if !(self.entropy_weight >= 0.0 && self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("entropy_weight must be >= 0 and lr > 0".into()));
        }
        Ok(())
    }
}

/// One agent's view of an episode: observations (`steps x C*k*k`), actions
/// and mixed rewards.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeRecord<T> {
    pub obs: Vec<T>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl<T: Scalar> EpisodeRecord<T> {
    pub fn new() -> Self {
        Self {
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
        }
    }

    pub fn push(&mut self, obs: &[T], action: usize, reward: f64) {
        self.obs.extend_from_slice(obs);
        self.actions.push(action);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Mean per-step loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub loss: f64,
    /// Mean of `log pi(a_t) * A_t`.
    pub weighted_log_prob: f64,
    pub entropy: f64,
}

/// `loss = -mean_t[log pi(a_t) A_t] - w * mean_t[H(pi(.|s_t))]` and its
/// gradient with respect to the `[steps, actions]` logits.
pub fn reinforce_loss<T: Scalar>(
    logits: &[T],
    actions: &[usize],
    advantages: &[f64],
    entropy_weight: f64,
    num_actions: usize,
) -> Result<(LossTerms, Vec<T>)> {
    let steps = actions.len();
    if steps == 0 {
        return Err(Error::Empty("reinforce batch"));
    }
    if logits.len() != steps * num_actions || advantages.len() != steps {
        return Err(Error::DimensionMismatch {
            expected: steps * num_actions,
            found: logits.len(),
        });
    }
    let inv = 1.0 / steps as f64;
    let mut grad = vec![T::zero(); logits.len()];
    let mut terms = LossTerms::default();
    for t in 0..steps {
        let row = &logits[t * num_actions..(t + 1) * num_actions];
        let a = actions[t];
        if a >= num_actions {
            return Err(Error::IndexOutOfBounds {
                index: a,
                len: num_actions,
            });
        }
        let lp: Vec<f64> = log_softmax(row).iter().map(|v| v.as_f64()).collect();
        let p: Vec<f64> = lp.iter().map(|v| libm::exp(*v)).collect();
        let h: f64 = -p.iter().zip(&lp).map(|(p, l)| if *p > 0.0 { p * l } else { 0.0 }).sum::<f64>();
        let adv = advantages[t];
        terms.weighted_log_prob += lp[a] * adv * inv;
        terms.entropy += h * inv;
        for j in 0..num_actions {
            let onehot = if j == a { 1.0 } else { 0.0 };
            let dh = if p[j] > 0.0 { -p[j] * (lp[j] + h) } else { 0.0 };
            grad[t * num_actions + j] = T::of((-adv * (onehot - p[j]) - entropy_weight * dh) * inv);
        }
    }
    terms.loss = -terms.weighted_log_prob - entropy_weight * terms.entropy;
    if !terms.loss.is_finite() {
        return Err(Error::NonFinite(format!("reinforce loss {}", terms.loss)));
    }
    Ok((terms, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub terms: LossTerms,
    pub steps: usize,
    /// Mean discounted return over all steps, before any baseline.
    pub mean_return: f64,
}

/// One Reinforce step on a batch of episodes: a train-mode forward over all
/// steps, the loss of [`reinforce_loss`] on discounted returns (minus
/// `baseline`), backward, and one RMSProp step. Empty episodes are skipped.
/// Afterwards the batch-norm running statistics are reset to the batch
/// statistics of (up to [`REFRESH_SAMPLES`] evenly spaced) batch steps under
/// the new parameters, and the network is left in eval mode.
pub fn reinforce_batch_update<T: Scalar>(
    net: &mut ConvPolicyNet<T>,
    episodes: &[EpisodeRecord<T>],
    spec: &TrainSpec,
    opt: &mut RmsProp<T>,
    baseline: f64,
) -> Result<UpdateStats> {
    spec.validate()?;
    let input_len = net.config().input_len();
    let steps: usize = episodes.iter().map(|e| e.len()).sum();
    if steps == 0 {
        return Err(Error::Empty("episode batch"));
    }
    let mut obs = Vec::with_capacity(steps * input_len);
    let mut actions = Vec::with_capacity(steps);
    let mut returns = Vec::with_capacity(steps);
    for e in episodes.iter().filter(|e| !e.is_empty()) {
        if e.obs.len() != e.len() * input_len || e.rewards.len() != e.len() {
            return Err(Error::DimensionMismatch {
                expected: e.len() * input_len,
                found: e.obs.len(),
            });
        }
        obs.extend_from_slice(&e.obs);
        actions.extend_from_slice(&e.actions);
        returns.extend(discounted_returns(e.rewards.iter().copied(), spec.discount));
    }
    let mean_return = returns.iter().sum::<f64>() / steps as f64;
    let advantages: Vec<f64> = returns.iter().map(|g| g - baseline).collect();

    net.set_mode(Mode::Train);
    let result = (|| {
        let logits = net.forward(&obs, steps)?;
        let (terms, dlogits) = reinforce_loss(&logits, &actions, &advantages, spec.entropy_weight, net.config().actions)?;
        net.zero_grad();
        net.backward(&dlogits, false)?;
        opt.lr = spec.lr;
        let mut params: Vec<_> = net.params_mut().into_iter().map(|(_, t)| t).collect();
        opt.step(&mut params)?;
        // Rollouts run in eval mode, so the running statistics must describe
        // the updated network rather than lag behind it.
        let stride = steps.div_ceil(REFRESH_SAMPLES);
        let sample: Vec<T> = obs
            .chunks(input_len)
            .step_by(stride)
            .flatten()
            .copied()
            .collect();
        net.refresh_running_stats(&sample, sample.len() / input_len)?;
        Ok(terms)
    })();
    net.set_mode(Mode::Eval);
    Ok(UpdateStats {
        terms: result?,
        steps,
        mean_return,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{softmax, NetConfig};
    use rand::{Rng, SeedableRng};

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = crate::Rng::seed_from_u64(0);
        let steps = 5;
        let logits: Vec<f64> = (0..steps * 4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let actions: Vec<usize> = (0..steps).map(|_| rng.random_range(0..4)).collect();
        let adv: Vec<f64> = (0..steps).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (_, grad) = reinforce_loss(&logits, &actions, &adv, 0.3, 4).unwrap();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut p = logits.clone();
            p[i] += h;
            let mut m = logits.clone();
            m[i] -= h;
            let fd = (reinforce_loss(&p, &actions, &adv, 0.3, 4).unwrap().0.loss
                - reinforce_loss(&m, &actions, &adv, 0.3, 4).unwrap().0.loss)
                / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * (fd.abs() + grad[i].abs()).max(1e-6), "{fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn log_softmax_gradient_is_onehot_minus_probs() {
        let z = [0.3, -1.2, 2.0, 0.1];
        let (_, grad) = reinforce_loss(&z, &[2], &[1.0], 0.0, 4).unwrap();
        let p = softmax(&z);
        for j in 0..4 {
            let expect = -((j == 2) as u8 as f64 - p[j]);
            assert!((grad[j] - expect).abs() < 1e-15);
        }
    }

    fn zero_reward_batch(net: &ConvPolicyNet<f64>, rng: &mut crate::Rng, episodes: usize) -> Vec<EpisodeRecord<f64>> {
        let len = net.config().input_len();
        (0..episodes)
            .map(|_| {
                let mut e = EpisodeRecord::new();
                for _ in 0..6 {
                    let o: Vec<f64> = (0..len).map(|_| (rng.random::<f64>() < 0.2) as u8 as f64).collect();
                    e.push(&o, rng.random_range(0..4), 0.0);
                }
                e
            })
            .collect()
    }

    fn mean_entropy(net: &ConvPolicyNet<f64>, batch: &[EpisodeRecord<f64>]) -> f64 {
        let mut total = 0.0;
        let mut n = 0;
        for e in batch {
            let logits = net.predict(&e.obs, e.len()).unwrap();
            for row in logits.chunks(4) {
                let p = softmax(row);
                total -= p.iter().map(|q| q * q.ln()).sum::<f64>();
                n += 1;
            }
        }
        total / n as f64
    }

    #[test]
    fn entropy_bonus_raises_entropy() {
        let mut rng = crate::Rng::seed_from_u64(1);
        let cfg = NetConfig {
            base_channels: 4,
            ..NetConfig::default()
        };
        let mut net = ConvPolicyNet::<f64>::new(cfg, &mut rng).unwrap();
        // Start from a peaked policy.
        for (name, t) in net.params_mut() {
            if name == "head.bias" {
                t.data = vec![3.0, 0.0, -1.0, 0.5];
            }
        }
        let spec = TrainSpec {
            entropy_weight: 10.0,
            lr: 1e-2,
            ..TrainSpec::default()
        };
        let mut opt = RmsProp::new(spec.lr);
        let batch = zero_reward_batch(&net, &mut rng, 8);
        // Populate running statistics so eval mode matches the data.
        net.set_mode(Mode::Train);
        net.forward(&batch[0].obs, batch[0].len()).unwrap();
        net.set_mode(Mode::Eval);
        let before = mean_entropy(&net, &batch);
        for _ in 0..5 {
            reinforce_batch_update(&mut net, &batch, &spec, &mut opt, 0.0).unwrap();
        }
        let after = mean_entropy(&net, &batch);
        assert!(after > before, "{before} -> {after}");
        assert_eq!(net.mode(), Mode::Eval);
    }

    #[test]
    fn empty_episodes_do_not_count() {
        let mut rng = crate::Rng::seed_from_u64(2);
        let cfg = NetConfig {
            base_channels: 2,
            ..NetConfig::default()
        };
        let net0 = ConvPolicyNet::<f64>::new(cfg, &mut rng).unwrap();
        let batch = zero_reward_batch(&net0, &mut rng, 2);
        let mut padded = batch.clone();
        padded.insert(1, EpisodeRecord::new());
        let spec = TrainSpec {
            entropy_weight: 0.5,
            ..TrainSpec::default()
        };
        let (mut a, mut b) = (net0.clone(), net0.clone());
        let sa = reinforce_batch_update(&mut a, &batch, &spec, &mut RmsProp::new(1e-3), 0.0).unwrap();
        let sb = reinforce_batch_update(&mut b, &padded, &spec, &mut RmsProp::new(1e-3), 0.0).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(a.state(), b.state());
        assert!(reinforce_batch_update(&mut a, &[EpisodeRecord::new()], &spec, &mut RmsProp::new(1e-3), 0.0).is_err());
    }

    #[test]
    fn spec_defaults() {
        assert_eq!(TrainSpec::for_game(GameKind::StagHunt).entropy_weight, 0.05);
        assert_eq!(TrainSpec::for_game(GameKind::Harvest).entropy_weight, 0.0);
        let s = TrainSpec::default();
        assert_eq!((s.batch_episodes, s.discount), (64, 0.99));
        assert!(TrainSpec { discount: 0.0, ..s }.validate().is_err());
        assert!(TrainSpec { batch_episodes: 0, ..s }.validate().is_err());
    }
}
