//! One replicate of independent learners repeatedly playing a
//! strategic-form game.
//!
//! Every round each agent samples an action from its softmax policy, the game
//! pays out, each agent mixes its own reward with the others' rewards, and
//! each agent takes one Reinforce step on that one-step episode.

use alloc::vec::Vec;

use rand::SeedableRng;

use crate::envs_strategic::{all_hunt, dyad_step, NetworkGame, WeakLinkGame};
use crate::error::{Error, Result};
use crate::learners::{LearnerConfig, RewardMixer, TabularLearner};
use crate::matrix_games::{StagHuntPayoffs, HUNT};
use crate::Rng;

/// A stateless game with a common finite action set.
pub trait StrategicGame {
    fn num_agents(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn rewards(&self, actions: &[usize]) -> Result<Vec<f64>>;
    /// Whether the joint action is the payoff-dominant outcome (everyone
    /// hunts, everyone gives maximum effort).
    fn coordinated(&self, actions: &[usize]) -> bool;
}

/// The two-player matrix Stag Hunt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dyad(pub StagHuntPayoffs);

impl StrategicGame for Dyad {
    fn num_agents(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn rewards(&self, actions: &[usize]) -> Result<Vec<f64>> {
        match *actions {
            [a1, a2] if a1 < 2 && a2 < 2 => {
                let (r1, r2) = dyad_step(&self.0, a1, a2);
                Ok(alloc::vec![r1, r2])
            }
            [_, _] => Err(Error::IndexOutOfBounds { index: actions[0].max(actions[1]), len: 2 }),
            _ => Err(Error::DimensionMismatch {
                expected: 2,
                found: actions.len(),
            }),
        }
    }

    fn coordinated(&self, actions: &[usize]) -> bool {
        all_hunt(actions)
    }
}

impl StrategicGame for NetworkGame {
    fn num_agents(&self) -> usize {
        self.n()
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn rewards(&self, actions: &[usize]) -> Result<Vec<f64>> {
        self.step(actions)
    }

    fn coordinated(&self, actions: &[usize]) -> bool {
        all_hunt(actions)
    }
}

impl StrategicGame for WeakLinkGame {
    fn num_agents(&self) -> usize {
        self.n_players()
    }

    fn num_actions(&self) -> usize {
        WeakLinkGame::num_actions(self)
    }

    fn rewards(&self, actions: &[usize]) -> Result<Vec<f64>> {
        self.step(actions)
    }

    fn coordinated(&self, actions: &[usize]) -> bool {
        actions.iter().all(|&e| e == self.max_effort())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedConfig {
    pub rounds: usize,
    pub learner: LearnerConfig,
    /// One mixer per agent.
    pub mixers: Vec<RewardMixer>,
}

/// What happened in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub actions: Vec<usize>,
    /// Raw game rewards (before mixing).
    pub rewards: Vec<f64>,
    pub coordinated: bool,
}

/// Fraction of rounds in which every agent played [`HUNT`]-like coordination
/// among the last `window` rounds.
pub fn final_coordination_rate(rounds: &[Round], window: usize) -> f64 {
    let tail = &rounds[rounds.len().saturating_sub(window)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().filter(|r| r.coordinated).count() as f64 / tail.len() as f64
}

/// Fraction of the last `window` rounds in which `agent` hunted.
pub fn final_hunt_rate(rounds: &[Round], agent: usize, window: usize) -> f64 {
    let tail = &rounds[rounds.len().saturating_sub(window)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().filter(|r| r.actions[agent] == HUNT).count() as f64 / tail.len() as f64
}

/// Runs one replicate from `seed`. Learner initialization draws from the
/// stream first (agent order), then each round draws actions in agent order.
pub fn run_repeated<G: StrategicGame + ?Sized>(
    game: &G,
    cfg: &RepeatedConfig,
    seed: u64,
) -> Result<Vec<Round>> {
    let n = game.num_agents();
    if cfg.mixers.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: cfg.mixers.len(),
        });
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut learners = cfg
        .mixers
        .iter()
        .map(|&mixer| TabularLearner::new(game.num_actions(), mixer, cfg.learner, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut trace = Vec::with_capacity(cfg.rounds);
    let mut others = Vec::with_capacity(n.saturating_sub(1));
    for _ in 0..cfg.rounds {
        let actions = learners
            .iter()
            .map(|l| l.act(&mut rng))
            .collect::<Result<Vec<_>>>()?;
        let rewards = game.rewards(&actions)?;
        for (i, learner) in learners.iter_mut().enumerate() {
            others.clear();
            others.extend(rewards.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &r)| r));
            let mixed = learner.mixer.mix(rewards[i], &others)?;
            learner.learn(actions[i], mixed)?;
        }
        trace.push(Round {
            coordinated: game.coordinated(&actions),
            actions,
            rewards,
        });
    }
    Ok(trace)
}
