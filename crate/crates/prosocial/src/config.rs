//! Experiment and sweep definitions, read from TOML with dotted-key
//! overrides, resolved against per-game defaults.

use std::path::{Path, PathBuf};

use prosocial_core::envs_markov::{EscalationConfig, GameConfig, HarvestConfig, StagHuntGridConfig};
use prosocial_core::envs_strategic::{GraphPreset, NeighborAggregation, NetworkGame, WeakLinkGame};
use prosocial_core::learners::{LearnerConfig, MixMode, RewardMixer};
use prosocial_core::markov_training::MarkovConfig;
use prosocial_core::matrix_games::{ProsocialWeight, StagHuntPayoffs};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Star,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Average,
    Total,
}

impl From<Aggregation> for NeighborAggregation {
    fn from(a: Aggregation) -> Self {
        match a {
            Aggregation::Average => NeighborAggregation::Average,
            Aggregation::Total => NeighborAggregation::Total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkovGame {
    StagHunt,
    Harvest,
    Escalation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    #[default]
    Average,
    Sum,
}

impl From<Mixing> for MixMode {
    fn from(m: Mixing) -> Self {
        match m {
            Mixing::Average => MixMode::Average,
            Mixing::Sum => MixMode::Sum,
        }
    }
}

fn default_h() -> f64 {
    2.0
}
fn default_cm() -> f64 {
    1.0
}
fn default_penalty() -> f64 {
    2.0
}
fn default_agents() -> usize {
    5
}
fn default_effort() -> usize {
    5
}
fn default_board() -> usize {
    5
}
fn default_channels() -> usize {
    16
}
fn default_episode_len() -> f64 {
    250.0
}
fn default_batch() -> usize {
    64
}
fn default_discount() -> f64 {
    0.99
}

/// The game and its parameters. Penalties are stored as magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSpec {
    Matrix {
        #[serde(default = "default_h")]
        h: f64,
        #[serde(default = "default_cm")]
        c: f64,
        #[serde(default = "default_cm")]
        m: f64,
        /// The sucker payoff is `-penalty`.
        #[serde(default = "default_penalty")]
        penalty: f64,
    },
    Network {
        #[serde(default)]
        graph: Option<GraphKind>,
        #[serde(default = "default_agents")]
        agents: usize,
        /// Explicit 0/1 adjacency rows; overrides `graph`.
        #[serde(default)]
        adjacency: Option<Vec<Vec<u8>>>,
        #[serde(default = "default_h")]
        h: f64,
        #[serde(default = "default_cm")]
        c: f64,
        #[serde(default = "default_cm")]
        m: f64,
        #[serde(default = "default_penalty")]
        penalty: f64,
        #[serde(default = "default_aggregation")]
        aggregation: Aggregation,
    },
    Weaklink {
        #[serde(default = "default_agents")]
        players: usize,
        #[serde(default = "default_effort")]
        max_effort: usize,
        multiplier: f64,
    },
    Markov {
        game: MarkovGame,
        /// Gore penalty, young fraction or penalty multiplier.
        risk: f64,
        #[serde(default = "default_board")]
        board: usize,
        #[serde(default = "default_channels")]
        base_channels: usize,
        #[serde(default = "default_episode_len")]
        mean_episode_len: f64,
        #[serde(default = "default_batch")]
        batch_episodes: usize,
        #[serde(default = "default_discount")]
        discount: f64,
        #[serde(default)]
        precision: Precision,
    },
}

fn default_aggregation() -> Aggregation {
    Aggregation::Average
}

impl GameSpec {
    pub fn family(&self) -> &'static str {
        match self {
            GameSpec::Matrix { .. } => "matrix",
            GameSpec::Network { .. } => "network",
            GameSpec::Weaklink { .. } => "weaklink",
            GameSpec::Markov { .. } => "markov",
        }
    }

    pub fn is_markov(&self) -> bool {
        matches!(self, GameSpec::Markov { .. })
    }

    /// The default configuration of a game family.
    pub fn default_for(family: &str) -> Result<Self> {
        Ok(match family {
            "matrix" => GameSpec::Matrix {
                h: 2.0,
                c: 1.0,
                m: 1.0,
                penalty: 2.0,
            },
            "network" => GameSpec::Network {
                graph: Some(GraphKind::Star),
                agents: 5,
                adjacency: None,
                h: 2.0,
                c: 1.0,
                m: 1.0,
                penalty: 2.0,
                aggregation: Aggregation::Average,
            },
            "weaklink" => GameSpec::Weaklink {
                players: 5,
                max_effort: 5,
                multiplier: 2.0,
            },
            "markov" => GameSpec::Markov {
                game: MarkovGame::StagHunt,
                risk: 2.0,
                board: 5,
                base_channels: 16,
                mean_episode_len: 250.0,
                batch_episodes: 64,
                discount: 0.99,
                precision: Precision::F32,
            },
            other => return Err(Error::Config(format!("unknown game family `{other}`"))),
        })
    }

    pub fn num_agents(&self) -> usize {
        match self {
            GameSpec::Matrix { .. } | GameSpec::Markov { .. } => 2,
            GameSpec::Network { agents, adjacency, .. } => adjacency.as_ref().map_or(*agents, Vec::len),
            GameSpec::Weaklink { players, .. } => *players,
        }
    }

    /// Name of the parameter a sweep varies.
    pub fn risk_name(&self) -> &'static str {
        match self {
            GameSpec::Matrix { .. } | GameSpec::Network { .. } => "g",
            GameSpec::Weaklink { .. } => "A",
            GameSpec::Markov { game, .. } => match game {
                MarkovGame::StagHunt => "gore",
                MarkovGame::Harvest => "young_fraction",
                MarkovGame::Escalation => "multiplier",
            },
        }
    }

    pub fn risk(&self) -> f64 {
        match self {
            GameSpec::Matrix { penalty, .. } | GameSpec::Network { penalty, .. } => *penalty,
            GameSpec::Weaklink { multiplier, .. } => *multiplier,
            GameSpec::Markov { risk, .. } => *risk,
        }
    }

    pub fn with_risk(&self, value: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            GameSpec::Matrix { penalty, .. } | GameSpec::Network { penalty, .. } => *penalty = value,
            GameSpec::Weaklink { multiplier, .. } => *multiplier = value,
            GameSpec::Markov { risk, .. } => *risk = value,
        }
        out
    }

    pub fn payoffs(&self) -> Result<StagHuntPayoffs> {
        match *self {
            GameSpec::Matrix { h, c, m, penalty } | GameSpec::Network { h, c, m, penalty, .. } => {
                Ok(StagHuntPayoffs::new(h, c, m, -penalty)?)
            }
            _ => Err(Error::Config(format!("{} games have no matrix payoffs", self.family()))),
        }
    }

    pub fn network(&self) -> Result<NetworkGame> {
        match self {
            GameSpec::Network {
                graph,
                agents,
                adjacency,
                aggregation,
                ..
            } => {
                let payoffs = self.payoffs()?;
                if let Some(rows) = adjacency {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(Error::Config("adjacency must be square".into()));
                    }
                    let flat = rows.iter().flatten().map(|&v| v != 0).collect();
                    return Ok(NetworkGame::new(n, flat, payoffs, (*aggregation).into())?);
                }
                let preset = match graph.unwrap_or(GraphKind::Star) {
                    GraphKind::Star => GraphPreset::Star { n: *agents },
                    GraphKind::Complete => GraphPreset::Complete { n: *agents },
                };
                Ok(NetworkGame::from_preset(preset, payoffs, (*aggregation).into())?)
            }
            _ => Err(Error::Config("not a network game".into())),
        }
    }

    pub fn weaklink(&self) -> Result<WeakLinkGame> {
        match *self {
            GameSpec::Weaklink {
                players,
                max_effort,
                multiplier,
            } => Ok(WeakLinkGame::with_size(players, max_effort, multiplier)?),
            _ => Err(Error::Config("not a weak-link game".into())),
        }
    }

    pub fn grid_game(&self) -> Result<GameConfig> {
        match *self {
            GameSpec::Markov { game, risk, .. } => {
                let g = match game {
                    MarkovGame::StagHunt => GameConfig::StagHunt(StagHuntGridConfig::new(risk)?),
                    MarkovGame::Harvest => GameConfig::Harvest(HarvestConfig::new(risk)?),
                    MarkovGame::Escalation => GameConfig::Escalation(EscalationConfig::new(risk)?),
                };
                Ok(g)
            }
            _ => Err(Error::Config("not a Markov game".into())),
        }
    }
}

/// Learner settings. Unset values take the defaults of the game family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub lr: Option<f64>,
    pub init_sigma: Option<f64>,
    pub baseline: Option<bool>,
    pub entropy_weight: Option<f64>,
}

/// Which agents are prosocial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsocialSpec {
    /// One weight per agent; empty means everyone is selfish.
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub mode: Mixing,
}

/// Named prosociality assignments used by sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assignment {
    None,
    Single,
    All,
    CenterOnly,
    LeafOnly,
}

impl Assignment {
    pub fn name(self) -> &'static str {
        match self {
            Assignment::None => "none",
            Assignment::Single => "single",
            Assignment::All => "all",
            Assignment::CenterOnly => "center-only",
            Assignment::LeafOnly => "leaf-only",
        }
    }

    /// Per-agent weights. Agent 0 is the star center, so `single` and
    /// `center-only` coincide there; `leaf-only` makes agent 1 prosocial.
    pub fn alphas(self, agents: usize, alpha: f64) -> Vec<f64> {
        (0..agents)
            .map(|i| {
                let on = match self {
                    Assignment::None => false,
                    Assignment::Single | Assignment::CenterOnly => i == 0,
                    Assignment::All => true,
                    Assignment::LeafOnly => i == 1,
                };
                if on {
                    alpha
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// One experiment: a game, learners, a prosociality assignment and a number
/// of seeded replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_id")]
    pub experiment_id: String,
    #[serde(default)]
    pub condition: Option<String>,
    pub game: GameSpec,
    #[serde(default)]
    pub learner: LearnerSpec,
    #[serde(default)]
    pub prosocial: ProsocialSpec,
    /// Rounds (strategic games) or episodes (Markov games).
    pub length: Option<usize>,
    pub replicates: Option<usize>,
    #[serde(default)]
    pub base_seed: u64,
    /// Rounds or episodes per reported block.
    pub block_size: Option<usize>,
    /// Final rounds or episodes the convergence label is taken over.
    pub window: Option<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_id() -> String {
    "experiment".into()
}

fn default_threshold() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn new(game: GameSpec) -> Self {
        Self {
            experiment_id: default_id(),
            condition: None,
            game,
            learner: LearnerSpec::default(),
            prosocial: ProsocialSpec::default(),
            length: None,
            replicates: None,
            base_seed: 0,
            block_size: None,
            window: None,
            threshold: default_threshold(),
            output: None,
        }
    }

    /// Fills every unset field with the default of the game family and
    /// validates the result.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let markov = c.game.is_markov();
        let length = *c.length.get_or_insert(if markov { 20_000 } else { 400 });
        c.replicates.get_or_insert(match c.game {
            GameSpec::Matrix { .. } => 300,
            GameSpec::Network { .. } | GameSpec::Weaklink { .. } => 100,
            GameSpec::Markov { .. } => 10,
        });
        c.block_size.get_or_insert(if markov { 1000.min(length) } else { 50.min(length) });
        c.window.get_or_insert(if markov { (length / 10).max(1) } else { 50.min(length) });
        let l = &mut c.learner;
        l.lr.get_or_insert(if markov { 1e-3 } else { 0.01 });
        l.init_sigma.get_or_insert(1.0);
        l.baseline.get_or_insert(false);
        let entropy = match c.game {
            GameSpec::Markov {
                game: MarkovGame::StagHunt,
                ..
            } => 0.05,
            _ => 0.0,
        };
        l.entropy_weight.get_or_insert(entropy);
        if c.prosocial.alphas.is_empty() {
            c.prosocial.alphas = vec![0.0; c.game.num_agents()];
        }
        if c.condition.is_none() {
            c.condition = Some(default_condition(&c.prosocial.alphas));
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let n = self.game.num_agents();
        if self.prosocial.alphas.len() != n {
            return Err(Error::Config(format!(
                "{} prosocial weights given for {n} agents",
                self.prosocial.alphas.len()
            )));
        }
        for &a in &self.prosocial.alphas {
            ProsocialWeight::new(a)?;
        }
        if self.replicates() == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.length() == 0 || self.block_size() == 0 || self.window() == 0 {
            return Err(Error::Config("length, block_size and window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must be in [0, 1]".into()));
        }
        let label = self.condition();
        if label.contains([',', '"', '\n']) || self.experiment_id.contains([',', '"', '\n']) {
            return Err(Error::Config("experiment_id and condition must not contain commas, quotes or newlines".into()));
        }
        match &self.game {
            GameSpec::Matrix { .. } => {
                self.game.payoffs()?;
            }
            GameSpec::Network { .. } => {
                self.game.network()?;
            }
            GameSpec::Weaklink { .. } => {
                self.game.weaklink()?;
            }
            GameSpec::Markov { .. } => self.markov_config()?.validate()?,
        }
        Ok(())
    }

    pub fn length(&self) -> usize {
        self.length.unwrap_or(0)
    }

    pub fn replicates(&self) -> usize {
        self.replicates.unwrap_or(0)
    }

    pub fn block_size(&self) -> usize {
        self.block_size.unwrap_or(0)
    }

    pub fn window(&self) -> usize {
        self.window.unwrap_or(0)
    }

    pub fn condition(&self) -> &str {
        self.condition.as_deref().unwrap_or("")
    }

    pub fn mixers(&self) -> Result<Vec<RewardMixer>> {
        self.prosocial
            .alphas
            .iter()
            .map(|&a| Ok(RewardMixer::new(ProsocialWeight::new(a)?, self.prosocial.mode.into())))
            .collect()
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            lr: self.learner.lr.unwrap_or(0.01),
            init_sigma: self.learner.init_sigma.unwrap_or(1.0),
            baseline: self.learner.baseline.unwrap_or(false),
            ..LearnerConfig::default()
        }
    }

    pub fn markov_config(&self) -> Result<MarkovConfig> {
        let GameSpec::Markov {
            board,
            base_channels,
            mean_episode_len,
            batch_episodes,
            discount,
            ..
        } = self.game
        else {
            return Err(Error::Config("not a Markov game".into()));
        };
        let mixers = self.mixers()?;
        let mut cfg = MarkovConfig::new(self.game.grid_game()?);
        cfg.board = board;
        cfg.base_channels = base_channels;
        cfg.mean_episode_len = mean_episode_len;
        cfg.train.batch_episodes = batch_episodes;
        cfg.train.discount = discount;
        cfg.train.total_episodes = self.length();
        if let Some(lr) = self.learner.lr {
            cfg.train.lr = lr;
        }
        if let Some(w) = self.learner.entropy_weight {
            cfg.train.entropy_weight = w;
        }
        cfg.train.baseline = self.learner.baseline.unwrap_or(false);
        cfg.mixers = [mixers[0], mixers[1]];
        Ok(cfg)
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let table = apply_overrides(parse_table(text)?, overrides)?;
        Ok(table.try_into()?)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::from_toml(&read(path)?, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

fn default_condition(alphas: &[f64]) -> String {
    let parts: Vec<String> = alphas.iter().map(|a| format!("{a}")).collect();
    format!("alpha={}", parts.join("/"))
}

/// A grid of experiments: every risk level crossed with every assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub risks: Vec<f64>,
    pub assignments: Vec<Assignment>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.5
}

impl SweepSpec {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let table = apply_overrides(parse_table(text)?, overrides)?;
        Ok(table.try_into()?)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::from_toml(&read(path)?, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Resolved cells in grid order: risks outer, assignments inner.
    pub fn cells(&self) -> Result<Vec<ExperimentConfig>> {
        if self.risks.is_empty() || self.assignments.is_empty() {
            return Err(Error::Config("a sweep needs at least one risk level and one assignment".into()));
        }
        let agents = self.base.game.num_agents();
        let mut out = Vec::new();
        for &risk in &self.risks {
            for &assignment in &self.assignments {
                let mut cell = self.base.clone();
                cell.game = self.base.game.with_risk(risk);
                cell.prosocial.alphas = assignment.alphas(agents, self.alpha);
                cell.condition = Some(format!("{} {}={risk}", assignment.name(), cell.game.risk_name()));
                out.push(cell.resolved()?);
            }
        }
        Ok(out)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse_table(text: &str) -> Result<toml::Table> {
    Ok(text.parse::<toml::Table>()?)
}

/// Applies `key.path=value` overrides. Values parse as TOML and fall back to
/// plain strings.
pub fn apply_overrides(mut table: toml::Table, overrides: &[String]) -> Result<toml::Table> {
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let path: Vec<&str> = key.trim().split('.').collect();
        let (last, parents) = path.split_last().expect("split yields at least one part");
        let mut cur = &mut table;
        for p in parents {
            let entry = cur
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
        }
        cur.insert(last.to_string(), value);
    }
    Ok(table)
}
