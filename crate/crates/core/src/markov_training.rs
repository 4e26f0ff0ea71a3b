//! Two independent convolutional policies trained with batched Reinforce in a
//! grid-world Markov game.
//!
//! Each batch rolls out `batch_episodes` episodes in lockstep so that every
//! step is one eval-mode forward pass per agent over all active episodes.
//! Environment randomness and action sampling use separate streams of the
//! replicate seed, so the environment side of any episode can be replayed
//! from its actions alone.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng as _, SeedableRng};

use crate::envs_markov::{
    episode_horizon, observe_into, reset, step, Action, GameConfig, GameKind, GridState, StepEvents, DEFAULT_BOARD,
};
use crate::error::{Error, Result};
use crate::learners::RewardMixer;
use crate::neural::{reinforce_batch_update, softmax, ConvPolicyNet, EpisodeRecord, NetConfig, RmsProp, Scalar, TrainSpec};
use crate::Rng;

pub const ENV_STREAM: u64 = 0;
pub const POLICY_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovConfig {
    pub game: GameConfig,
    pub board: usize,
    pub base_channels: usize,
    pub train: TrainSpec,
    pub mixers: [RewardMixer; 2],
    /// Mean of the geometric episode length (ignored by Escalation).
    pub mean_episode_len: f64,
}

impl MarkovConfig {
    /// Selfish agents with the default network and training settings.
    pub fn new(game: GameConfig) -> Self {
        Self {
            game,
            board: DEFAULT_BOARD,
            base_channels: 16,
            train: TrainSpec::for_game(game.kind()),
            mixers: [RewardMixer::selfish(); 2],
            mean_episode_len: 250.0,
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            board: self.board,
            base_channels: self.base_channels,
            ..NetConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        self.train.validate()?;
        if !(self.mean_episode_len >= 1.0) {
            return Err(Error::InvalidConfig("mean episode length must be >= 1".into()));
        }
        Ok(())
    }
}

/// Summary of one training episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    /// Raw (unmixed) return of each agent.
    pub rewards: [f64; 2],
    pub length: u32,
    /// Coordinated reward events: joint stag captures, mature-plant pickups,
    /// joint marker steps.
    pub coord_events: u32,
    /// Events the coordination rate is taken over: all reward events for
    /// Stag Hunt and Harvest, all steps for Escalation.
    pub opportunities: u32,
    /// Escalation streak reached when the episode ended.
    pub streak: u32,
}

impl EpisodeStats {
    fn record(&mut self, kind: GameKind, e: &StepEvents, rewards: [f64; 2]) {
        self.rewards[0] += rewards[0];
        self.rewards[1] += rewards[1];
        self.length += 1;
        match kind {
            GameKind::StagHunt => {
                let captured = e.stag_captured as u32;
                self.coord_events += captured;
                self.opportunities += captured + e.plants_picked + e.gored;
            }
            GameKind::Harvest => {
                self.coord_events += e.mature_picked;
                self.opportunities += e.mature_picked + e.young_picked;
            }
            GameKind::Escalation => {
                self.coord_events += e.joint_marker as u32;
                self.opportunities += 1;
            }
        }
    }

    pub fn coord_rate(&self) -> f64 {
        if self.opportunities == 0 {
            0.0
        } else {
            self.coord_events as f64 / self.opportunities as f64
        }
    }
}

/// Draws an action index from logits by inverse CDF.
pub fn sample_from_logits<T: Scalar>(logits: &[T], rng: &mut Rng) -> usize {
    let p = softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, q) in p.iter().enumerate() {
        acc += q.as_f64();
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Trained agents plus everything needed to continue training.
#[derive(Debug, Clone)]
pub struct MarkovTrainer<T> {
    pub cfg: MarkovConfig,
    pub nets: [ConvPolicyNet<T>; 2],
    opts: [RmsProp<T>; 2],
    baselines: [Option<f64>; 2],
    env_rng: Rng,
    policy_rng: Rng,
    pub episodes_done: usize,
}

impl<T: Scalar> MarkovTrainer<T> {
    pub fn new(cfg: MarkovConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut env_rng = Rng::seed_from_u64(seed);
        env_rng.set_stream(ENV_STREAM);
        let mut policy_rng = Rng::seed_from_u64(seed);
        policy_rng.set_stream(POLICY_STREAM);
        let net_cfg = cfg.net_config();
        let nets = [
            ConvPolicyNet::new(net_cfg, &mut policy_rng)?,
            ConvPolicyNet::new(net_cfg, &mut policy_rng)?,
        ];
        let lr = cfg.train.lr;
        Ok(Self {
            cfg,
            nets,
            opts: [RmsProp::new(lr), RmsProp::new(lr)],
            baselines: [None, None],
            env_rng,
            policy_rng,
            episodes_done: 0,
        })
    }

    /// Rolls out `count` episodes in lockstep with the current policies.
    pub fn rollout(&mut self, count: usize) -> Result<(Vec<EpisodeStats>, [Vec<EpisodeRecord<T>>; 2])> {
        let kind = self.cfg.game.kind();
        let input_len = self.cfg.net_config().input_len();
        let mut states: Vec<GridState> = Vec::with_capacity(count);
        let mut horizons = Vec::with_capacity(count);
        for _ in 0..count {
            states.push(reset(self.cfg.game, self.cfg.board, &mut self.env_rng)?);
            horizons.push(episode_horizon(&self.cfg.game, self.cfg.mean_episode_len, &mut self.env_rng)?);
        }
        let mut stats = vec![EpisodeStats::default(); count];
        let mut records: [Vec<EpisodeRecord<T>>; 2] = [
            (0..count).map(|_| EpisodeRecord::new()).collect(),
            (0..count).map(|_| EpisodeRecord::new()).collect(),
        ];
        let mut active: Vec<usize> = (0..count).collect();
        let mut obs = [Vec::new(), Vec::new()];
        let mut scratch = vec![0.0f64; input_len];
        while !active.is_empty() {
            let n = active.len();
            let mut logits = [Vec::new(), Vec::new()];
            for agent in 0..2 {
                obs[agent].clear();
                for &e in &active {
                    observe_into(&states[e], agent, &mut scratch)?;
                    obs[agent].extend(scratch.iter().map(|&v| T::of(v)));
                }
                logits[agent] = self.nets[agent].predict(&obs[agent], n)?;
            }
            let mut still = Vec::with_capacity(n);
            for (slot, &e) in active.iter().enumerate() {
                let acts = [
                    sample_from_logits(&logits[0][slot * 4..slot * 4 + 4], &mut self.policy_rng),
                    sample_from_logits(&logits[1][slot * 4..slot * 4 + 4], &mut self.policy_rng),
                ];
                let out = step(&mut states[e], Action::from_index(acts[0])?, Action::from_index(acts[1])?, &mut self.env_rng)?;
                stats[e].record(kind, &out.events, out.rewards);
                for agent in 0..2 {
                    let mixed = self.cfg.mixers[agent].mix(out.rewards[agent], &[out.rewards[1 - agent]])?;
                    let o = &obs[agent][slot * input_len..(slot + 1) * input_len];
                    records[agent][e].push(o, acts[agent], mixed);
                }
                if out.done || stats[e].length >= horizons[e] {
                    stats[e].streak = states[e].streak;
                } else {
                    still.push(e);
                }
            }
            active = still;
        }
        Ok((stats, records))
    }

    /// One batch: rollout plus one Reinforce update per agent.
    pub fn train_batch(&mut self) -> Result<Vec<EpisodeStats>> {
        let remaining = self.cfg.train.total_episodes.saturating_sub(self.episodes_done);
        let count = self.cfg.train.batch_episodes.min(remaining);
        if count == 0 {
            return Ok(Vec::new());
        }
        let (stats, records) = self.rollout(count)?;
        let spec = self.cfg.train;
        for agent in 0..2 {
            let baseline = if spec.baseline { self.baselines[agent].unwrap_or(0.0) } else { 0.0 };
            let upd = reinforce_batch_update(&mut self.nets[agent], &records[agent], &spec, &mut self.opts[agent], baseline)?;
            if spec.baseline {
                self.baselines[agent] = Some(match self.baselines[agent] {
                    None => upd.mean_return,
                    Some(b) => 0.9 * b + 0.1 * upd.mean_return,
                });
            }
        }
        self.episodes_done += count;
        Ok(stats)
    }

    /// Trains until `total_episodes`, returning per-episode stats in order.
    pub fn train(&mut self) -> Result<Vec<EpisodeStats>> {
        let mut all = Vec::with_capacity(self.cfg.train.total_episodes);
        loop {
            let batch = self.train_batch()?;
            if batch.is_empty() {
                return Ok(all);
            }
            all.extend(batch);
        }
    }
}

/// Trains a fresh pair from `seed`.
pub fn train_markov<T: Scalar>(cfg: &MarkovConfig, seed: u64) -> Result<Vec<EpisodeStats>> {
    MarkovTrainer::<T>::new(cfg.clone(), seed)?.train()
}

/// One step of a recorded episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep {
    /// Hash of the state the actions were taken in.
    pub state_hash: u64,
    pub actions: [usize; 2],
    pub rewards: [f64; 2],
}

/// Plays one episode with `policy` choosing joint actions, using the
/// environment stream of `seed`.
pub fn record_episode(
    game: GameConfig,
    board: usize,
    horizon: u32,
    seed: u64,
    mut policy: impl FnMut(&GridState) -> [usize; 2],
) -> Result<Vec<TrajectoryStep>> {
    let mut env_rng = Rng::seed_from_u64(seed);
    env_rng.set_stream(ENV_STREAM);
    let mut state = reset(game, board, &mut env_rng)?;
    let mut out = Vec::new();
    for _ in 0..horizon {
        let actions = policy(&state);
        let state_hash = state.state_hash();
        let r = step(&mut state, Action::from_index(actions[0])?, Action::from_index(actions[1])?, &mut env_rng)?;
        out.push(TrajectoryStep {
            state_hash,
            actions,
            rewards: r.rewards,
        });
        if r.done {
            break;
        }
    }
    Ok(out)
}

/// Replays recorded actions and checks every state hash and reward.
/// Returns the index of the first diverging step, if any.
pub fn replay_episode(game: GameConfig, board: usize, seed: u64, steps: &[TrajectoryStep]) -> Result<Option<usize>> {
    let mut i = 0;
    let replayed = record_episode(game, board, steps.len() as u32, seed, |_| {
        let a = steps.get(i).map_or([0, 0], |s| s.actions);
        i += 1;
        a
    })?;
    if replayed.len() != steps.len() {
        return Ok(Some(replayed.len().min(steps.len())));
    }
    Ok(replayed.iter().zip(steps).position(|(a, b)| a != b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs_markov::{EscalationConfig, HarvestConfig, StagHuntGridConfig};

    fn tiny(game: GameConfig) -> MarkovConfig {
        let mut cfg = MarkovConfig::new(game);
        cfg.base_channels = 2;
        cfg.mean_episode_len = 10.0;
        cfg.train.batch_episodes = 4;
        cfg.train.total_episodes = 10;
        cfg
    }

    #[test]
    fn training_is_seeded() {
        let cfg = tiny(GameConfig::Harvest(HarvestConfig::default()));
        let a = train_markov::<f64>(&cfg, 3).unwrap();
        let b = train_markov::<f64>(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_ne!(a, train_markov::<f64>(&cfg, 4).unwrap());
    }

    #[test]
    fn escalation_episodes_are_capped() {
        let mut cfg = tiny(GameConfig::Escalation(EscalationConfig::default()));
        cfg.mean_episode_len = 1000.0;
        let stats = train_markov::<f64>(&cfg, 0).unwrap();
        assert!(stats.iter().all(|s| s.length >= 1 && s.length <= 50));
        assert!(stats.iter().all(|s| s.opportunities == s.length));
    }

    #[test]
    fn stag_hunt_trains_with_entropy_bonus() {
        let cfg = tiny(GameConfig::StagHunt(StagHuntGridConfig::new(2.0).unwrap()));
        assert_eq!(cfg.train.entropy_weight, 0.05);
        let mut t = MarkovTrainer::<f64>::new(cfg, 1).unwrap();
        let before = t.nets[0].state();
        t.train().unwrap();
        assert_ne!(before, t.nets[0].state());
        assert_eq!(t.episodes_done, 10);
    }

    #[test]
    fn prosocial_records_mix_rewards() {
        let mut cfg = tiny(GameConfig::Harvest(HarvestConfig::default()));
        cfg.mixers = [RewardMixer::new(crate::matrix_games::ProsocialWeight::SELFLESS, Default::default()); 2];
        let mut t = MarkovTrainer::<f64>::new(cfg, 2).unwrap();
        let (stats, records) = t.rollout(4).unwrap();
        for e in 0..4 {
            let own: f64 = records[0][e].rewards.iter().sum();
            assert!((own - stats[e].rewards[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectories_replay() {
        let game = GameConfig::StagHunt(StagHuntGridConfig::new(1.0).unwrap());
        let mut k = 0usize;
        let traj = record_episode(game, 5, 100, 9, |_| {
            k += 1;
            [k % 4, (k * 7 + 1) % 4]
        })
        .unwrap();
        assert_eq!(traj.len(), 100);
        assert_eq!(replay_episode(game, 5, 9, &traj).unwrap(), None);
        let mut bad = traj.clone();
        bad[40].actions[0] = (bad[40].actions[0] + 1) % 4;
        assert!(replay_episode(game, 5, 9, &bad).unwrap().is_some());
    }
}
