//! Seeded replicate execution on a worker pool, per-block aggregates and
//! convergence labels.

use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use prosocial_core::envs_markov::GameKind;
use prosocial_core::markov_training::{train_markov, EpisodeStats};
use prosocial_core::repeated::{run_repeated, Dyad, RepeatedConfig, Round, StrategicGame};

use crate::config::{ExperimentConfig, GameSpec, Precision};
use crate::error::{Error, Result};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "PROSOCIAL_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    PayoffDominant,
    RiskDominant,
    Unresolved,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::PayoffDominant => "payoff-dominant",
            Label::RiskDominant => "risk-dominant",
            Label::Unresolved => "unresolved",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "payoff-dominant" => Some(Label::PayoffDominant),
            "risk-dominant" => Some(Label::RiskDominant),
            "unresolved" => Some(Label::Unresolved),
            _ => None,
        }
    }
}

/// Aggregates of one block of consecutive rounds or episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAggregate {
    pub block: usize,
    /// Units (rounds or episodes) in the block.
    pub units: usize,
    /// Per-agent mean raw reward per round, or mean raw return per episode.
    pub mean_reward: Vec<f64>,
    pub coord_rate: f64,
    /// Mean final Escalation streak (Markov games only).
    pub mean_streak: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub blocks: Vec<BlockAggregate>,
    /// Coordination rate over the classification window.
    pub final_coord_rate: Option<f64>,
    pub label: Label,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub message: String,
}

/// Every replicate of one experiment, sorted by replicate id.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub results: Vec<ReplicateResult>,
    pub failures: Vec<ReplicateFailure>,
}

impl ExperimentRun {
    /// Fraction of successful replicates labelled payoff-dominant.
    pub fn payoff_dominant_fraction(&self) -> f64 {
        if self.results.is_empty() {
            return 0.0;
        }
        let n = self.results.iter().filter(|r| r.label == Label::PayoffDominant).count();
        n as f64 / self.results.len() as f64
    }
}

/// `payoff-dominant` when `rate >= threshold`, `risk-dominant` below it and
/// `unresolved` when the window holds nothing to measure.
pub fn classify_convergence(rate: Option<f64>, threshold: f64) -> Label {
    match rate {
        Some(r) if r >= threshold => Label::PayoffDominant,
        Some(_) => Label::RiskDominant,
        None => Label::Unresolved,
    }
}

/// Means of consecutive blocks of `block_size` values; the last block may
/// be shorter.
pub fn block_means(values: &[f64], block_size: usize) -> Vec<f64> {
    assert!(block_size > 0, "block size must be positive");
    values.chunks(block_size).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `job(0..n)` on `workers` threads pulling from a shared counter.
/// Output order follows the job index, not completion order.
pub fn run_indexed<T: Send>(n: usize, workers: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = job(i);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|o| o.expect("every job index is claimed exactly once"))
        .collect()
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".into()
    }
}

/// One replicate with seed `base_seed + replicate`.
pub fn run_replicate(cfg: &ExperimentConfig, replicate: usize) -> Result<ReplicateResult> {
    let seed = cfg.base_seed.wrapping_add(replicate as u64);
    let start = Instant::now();
    let (blocks, final_coord_rate) = match &cfg.game {
        GameSpec::Matrix { .. } => strategic(&Dyad(cfg.game.payoffs()?), cfg, seed)?,
        GameSpec::Network { .. } => strategic(&cfg.game.network()?, cfg, seed)?,
        GameSpec::Weaklink { .. } => strategic(&cfg.game.weaklink()?, cfg, seed)?,
        GameSpec::Markov { precision, .. } => {
            let mc = cfg.markov_config()?;
            let stats = match precision {
                Precision::F32 => train_markov::<f32>(&mc, seed)?,
                Precision::F64 => train_markov::<f64>(&mc, seed)?,
            };
            markov_blocks(&stats, mc.game.kind(), cfg)
        }
    };
    Ok(ReplicateResult {
        replicate,
        seed,
        blocks,
        final_coord_rate,
        label: classify_convergence(final_coord_rate, cfg.threshold),
        wall_time: start.elapsed(),
    })
}

fn strategic<G: StrategicGame>(game: &G, cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<BlockAggregate>, Option<f64>)> {
    let rc = RepeatedConfig {
        rounds: cfg.length(),
        learner: cfg.learner_config(),
        mixers: cfg.mixers()?,
    };
    let rounds = run_repeated(game, &rc, seed)?;
    Ok((strategic_blocks(&rounds, cfg.block_size()), window_rate(&rounds, cfg.window())))
}

fn strategic_blocks(rounds: &[Round], block_size: usize) -> Vec<BlockAggregate> {
    rounds
        .chunks(block_size)
        .enumerate()
        .map(|(block, c)| {
            let n = c.len() as f64;
            let agents = c[0].rewards.len();
            BlockAggregate {
                block,
                units: c.len(),
                mean_reward: (0..agents).map(|i| c.iter().map(|r| r.rewards[i]).sum::<f64>() / n).collect(),
                coord_rate: c.iter().filter(|r| r.coordinated).count() as f64 / n,
                mean_streak: None,
            }
        })
        .collect()
}

fn window_rate(rounds: &[Round], window: usize) -> Option<f64> {
    let tail = &rounds[rounds.len().saturating_sub(window)..];
    (!tail.is_empty()).then(|| tail.iter().filter(|r| r.coordinated).count() as f64 / tail.len() as f64)
}

/// Pooled coordination rate: coordinated events over opportunities.
fn pooled_rate(episodes: &[EpisodeStats]) -> Option<f64> {
    let events: u64 = episodes.iter().map(|e| e.coord_events as u64).sum();
    let opportunities: u64 = episodes.iter().map(|e| e.opportunities as u64).sum();
    (opportunities > 0).then(|| events as f64 / opportunities as f64)
}

fn markov_blocks(stats: &[EpisodeStats], kind: GameKind, cfg: &ExperimentConfig) -> (Vec<BlockAggregate>, Option<f64>) {
    let blocks = stats
        .chunks(cfg.block_size())
        .enumerate()
        .map(|(block, c)| {
            let n = c.len() as f64;
            BlockAggregate {
                block,
                units: c.len(),
                mean_reward: (0..2).map(|i| c.iter().map(|e| e.rewards[i]).sum::<f64>() / n).collect(),
                coord_rate: pooled_rate(c).unwrap_or(0.0),
                mean_streak: (kind == GameKind::Escalation).then(|| c.iter().map(|e| e.streak as f64).sum::<f64>() / n),
            }
        })
        .collect();
    let tail = &stats[stats.len().saturating_sub(cfg.window())..];
    (blocks, pooled_rate(tail))
}

/// Runs every replicate of every config on one pool. Replicate failures and
/// panics are recorded; the remaining replicates still run.
pub fn run_experiments(configs: &[ExperimentConfig], workers: usize) -> Result<Vec<ExperimentRun>> {
    let resolved = configs.iter().map(ExperimentConfig::resolved).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = resolved
        .iter()
        .enumerate()
        .flat_map(|(c, cfg)| (0..cfg.replicates()).map(move |r| (c, r)))
        .collect();
    let outcomes = run_indexed(jobs.len(), workers, |j| {
        let (c, r) = jobs[j];
        let cfg = &resolved[c];
        match panic::catch_unwind(AssertUnwindSafe(|| run_replicate(cfg, r))) {
            Ok(Ok(res)) => Ok(res),
            Ok(Err(e)) => Err(e.to_string()),
            Err(payload) => Err(panic_message(payload)),
        }
    });
    let mut runs: Vec<ExperimentRun> = resolved
        .into_iter()
        .map(|config| ExperimentRun {
            config,
            results: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for (&(c, r), outcome) in jobs.iter().zip(outcomes) {
        let run = &mut runs[c];
        match outcome {
            Ok(res) => run.results.push(res),
            Err(message) => run.failures.push(ReplicateFailure {
                replicate: r,
                seed: run.config.base_seed.wrapping_add(r as u64),
                message,
            }),
        }
    }
    Ok(runs)
}

pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentRun> {
    run_experiments(std::slice::from_ref(cfg), workers)?
        .pop()
        .ok_or_else(|| Error::Config("no experiment".into()))
}
