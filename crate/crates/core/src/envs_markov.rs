//! Two-player grid-world Markov games with Stag Hunt structure: Markov Stag
//! Hunt, Harvest and Coordinated Escalation.
//!
//! Every step applies, in order: simultaneous agent moves (off-grid moves are
//! no-ops), game-specific reward resolution and entity dynamics, respawns, and
//! the termination check. Agents may share a cell.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_BOARD: usize = 5;
/// Number of observation planes.
pub const CHANNELS: usize = 7;

pub const PLANE_SELF: usize = 0;
pub const PLANE_PARTNER: usize = 1;
pub const PLANE_STAG: usize = 2;
pub const PLANE_YOUNG: usize = 3;
pub const PLANE_MATURE: usize = 4;
pub const PLANE_MARKER: usize = 5;
pub const PLANE_STREAK: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Pos) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

/// A move in one of the four cardinal directions. North decreases `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    North,
    South,
    East,
    West,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::North, Action::South, Action::East, Action::West];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or(Error::IndexOutOfBounds { index: i, len: 4 })
    }

    /// The neighboring cell, or `None` when the move leaves the board.
    pub fn apply(self, p: Pos, size: usize) -> Option<Pos> {
        match self {
            Action::North => p.y.checked_sub(1).map(|y| Pos::new(p.x, y)),
            Action::South => (p.y + 1 < size).then(|| Pos::new(p.x, p.y + 1)),
            Action::East => (p.x + 1 < size).then(|| Pos::new(p.x + 1, p.y)),
            Action::West => p.x.checked_sub(1).map(|x| Pos::new(x, p.y)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagHuntGridConfig {
    /// Points lost by an agent alone on the stag (stored as a magnitude).
    pub gore_penalty: f64,
    pub stag_reward: f64,
    pub plant_reward: f64,
    pub plants: usize,
}

impl StagHuntGridConfig {
    pub fn new(gore_penalty: f64) -> Result<Self> {
        let cfg = Self {
            gore_penalty,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gore_penalty >= 0.0 && self.gore_penalty.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "gore penalty {} must be a finite magnitude >= 0",
                self.gore_penalty
            )));
        }
        Ok(())
    }
}

impl Default for StagHuntGridConfig {
    fn default() -> Self {
        Self {
            gore_penalty: 0.0,
            stag_reward: 5.0,
            plant_reward: 1.0,
            plants: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestConfig {
    /// Expected fraction of a plant's life spent young.
    pub young_fraction: f64,
    /// Probability that a young plant appears on a given step.
    pub spawn_prob: f64,
    pub max_plants: usize,
    pub young_reward: f64,
    pub mature_reward: f64,
    /// Expected plant lifetime in steps.
    pub lifetime: f64,
}

impl HarvestConfig {
    pub fn new(young_fraction: f64) -> Result<Self> {
        let cfg = Self {
            young_fraction,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Per-step probability that a young plant matures.
    pub fn r_mature(&self) -> f64 {
        1.0 / (self.lifetime * self.young_fraction)
    }

    /// Per-step probability that a mature plant dies.
    pub fn r_death(&self) -> f64 {
        1.0 / (self.lifetime * (1.0 - self.young_fraction))
    }

    fn validate(&self) -> Result<()> {
        // Both phases last at least one step, so each rate must be <= 1.
        let lo = 1.0 / self.lifetime;
        if !(self.young_fraction >= lo && self.young_fraction <= 1.0 - lo) {
            return Err(Error::InvalidConfig(alloc::format!(
                "young fraction {} must lie in [{lo}, {}]",
                self.young_fraction,
                1.0 - lo
            )));
        }
        if !(0.0..=1.0).contains(&self.spawn_prob) || self.max_plants == 0 {
            return Err(Error::InvalidConfig("spawn_prob must be in [0, 1] and max_plants >= 1".into()));
        }
        Ok(())
    }
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            young_fraction: 0.5,
            spawn_prob: 0.5,
            max_plants: 4,
            young_reward: 1.0,
            mature_reward: 2.0,
            lifetime: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscalationConfig {
    pub penalty_multiplier: f64,
    pub step_reward: f64,
    /// Episode cap, also the streak normalizer in observations.
    pub max_steps: u32,
}

impl EscalationConfig {
    pub fn new(penalty_multiplier: f64) -> Result<Self> {
        let cfg = Self {
            penalty_multiplier,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.penalty_multiplier > 0.0 && self.penalty_multiplier.is_finite()) || self.max_steps == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "penalty multiplier {} must be positive",
                self.penalty_multiplier
            )));
        }
        Ok(())
    }
}

impl Default for EscalationConfig {
    fn default() -> Self {
        Self {
            penalty_multiplier: 1.0,
            step_reward: 1.0,
            max_steps: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GameKind {
    StagHunt,
    Harvest,
    Escalation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GameConfig {
    StagHunt(StagHuntGridConfig),
    Harvest(HarvestConfig),
    Escalation(EscalationConfig),
}

impl GameConfig {
    pub fn kind(&self) -> GameKind {
        match self {
            GameConfig::StagHunt(_) => GameKind::StagHunt,
            GameConfig::Harvest(_) => GameKind::Harvest,
            GameConfig::Escalation(_) => GameKind::Escalation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GameConfig::StagHunt(c) => c.validate(),
            GameConfig::Harvest(c) => c.validate(),
            GameConfig::Escalation(c) => c.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Plant {
    pub pos: Pos,
    pub mature: bool,
}

/// Full state of a grid game.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    config: GameConfig,
    size: usize,
    pub agents: [Pos; 2],
    pub stag: Option<Pos>,
    pub plants: Vec<Plant>,
    pub marker: Option<Pos>,
    /// Escalation streak length `T`.
    pub streak: u32,
    pub step_count: u32,
    pub terminated: bool,
}

/// Counts of the reward events of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepEvents {
    pub young_picked: u32,
    pub mature_picked: u32,
    /// Stag Hunt plants picked up.
    pub plants_picked: u32,
    pub stag_captured: bool,
    /// Agents gored this step.
    pub gored: u32,
    pub joint_marker: bool,
    pub streak_broken: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub rewards: [f64; 2],
    pub done: bool,
    pub events: StepEvents,
}

/// Uniformly random cell not in `taken`.
fn random_free_cell<R: Rng + ?Sized>(size: usize, taken: &[Pos], rng: &mut R) -> Option<Pos> {
    let free: Vec<Pos> = (0..size * size)
        .map(|k| Pos::new(k % size, k / size))
        .filter(|p| !taken.contains(p))
        .collect();
    if free.is_empty() {
        None
    } else {
        Some(free[rng.random_range(0..free.len())])
    }
}

/// `count` distinct uniformly random cells.
fn distinct_cells<R: Rng + ?Sized>(size: usize, count: usize, rng: &mut R) -> Result<Vec<Pos>> {
    let mut cells = Vec::with_capacity(count);
    for _ in 0..count {
        let p = random_free_cell(size, &cells, rng)
            .ok_or_else(|| Error::InvalidConfig("board too small for its entities".into()))?;
        cells.push(p);
    }
    Ok(cells)
}

/// What happened to a plant during one lifecycle step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantFate {
    Unchanged,
    Matured,
    Died,
}

/// Advances a Harvest plant by one step: a young plant matures with
/// `r_mature`, a mature one dies with `r_death`.
pub fn advance_plant<R: Rng + ?Sized>(plant: &mut Plant, cfg: &HarvestConfig, rng: &mut R) -> PlantFate {
    let u: f64 = rng.random();
    if plant.mature {
        if u < cfg.r_death() {
            PlantFate::Died
        } else {
            PlantFate::Unchanged
        }
    } else if u < cfg.r_mature() {
        plant.mature = true;
        PlantFate::Matured
    } else {
        PlantFate::Unchanged
    }
}

impl GridState {
    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn kind(&self) -> GameKind {
        self.config.kind()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Streak normalizer for observations.
    pub fn streak_max(&self) -> u32 {
        match self.config {
            GameConfig::Escalation(c) => c.max_steps,
            _ => EscalationConfig::default().max_steps,
        }
    }

    fn occupied(&self) -> Vec<Pos> {
        let mut taken = Vec::with_capacity(8);
        taken.extend_from_slice(&self.agents);
        taken.extend(self.stag);
        taken.extend(self.plants.iter().map(|p| p.pos));
        taken.extend(self.marker);
        taken
    }

    /// Checks the structural invariants of the state.
    pub fn check_invariants(&self) -> Result<()> {
        let in_bounds = |p: &Pos| p.x < self.size && p.y < self.size;
        let all_in = self.agents.iter().all(in_bounds)
            && self.stag.iter().all(in_bounds)
            && self.plants.iter().all(|p| in_bounds(&p.pos))
            && self.marker.iter().all(in_bounds);
        if !all_in {
            return Err(Error::Precondition("entity outside the board"));
        }
        match self.config {
            GameConfig::StagHunt(c) => {
                if self.stag.is_none() || self.plants.len() != c.plants || self.marker.is_some() {
                    return Err(Error::Precondition("stag hunt needs one stag and its plants"));
                }
                if self.plants.iter().any(|p| p.mature) {
                    return Err(Error::Precondition("stag hunt plants have no phase"));
                }
            }
            GameConfig::Harvest(c) => {
                if self.plants.len() > c.max_plants || self.stag.is_some() || self.marker.is_some() {
                    return Err(Error::Precondition("too many harvest plants"));
                }
                for (i, a) in self.plants.iter().enumerate() {
                    if self.plants[i + 1..].iter().any(|b| b.pos == a.pos) {
                        return Err(Error::Precondition("two plants share a cell"));
                    }
                }
            }
            GameConfig::Escalation(_) => {
                if self.marker.is_none() != self.terminated {
                    return Err(Error::Precondition("escalation needs exactly one active marker"));
                }
                if self.stag.is_some() || !self.plants.is_empty() {
                    return Err(Error::Precondition("escalation has no stag or plants"));
                }
            }
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a digest of the dynamic state.
    pub fn state_hash(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        let pos = |p: Pos| ((p.x as u64) << 32) | p.y as u64;
        for a in self.agents {
            feed(pos(a));
        }
        feed(self.stag.map_or(u64::MAX, pos));
        feed(self.plants.len() as u64);
        for p in &self.plants {
            feed(pos(p.pos));
            feed(p.mature as u64);
        }
        feed(self.marker.map_or(u64::MAX, pos));
        feed(self.streak as u64);
        feed(self.step_count as u64);
        feed(self.terminated as u64);
        h
    }
}

/// Initial state: agents and entities on distinct uniformly random cells,
/// streak 0. Harvest starts with an empty board.
pub fn reset<R: Rng + ?Sized>(config: GameConfig, size: usize, rng: &mut R) -> Result<GridState> {
    config.validate()?;
    if size < 2 {
        return Err(Error::InvalidConfig("board must be at least 2x2".into()));
    }
    let mut state = GridState {
        config,
        size,
        agents: [Pos::new(0, 0); 2],
        stag: None,
        plants: Vec::new(),
        marker: None,
        streak: 0,
        step_count: 0,
        terminated: false,
    };
    match config {
        GameConfig::StagHunt(c) => {
            let cells = distinct_cells(size, 3 + c.plants, rng)?;
            state.agents = [cells[0], cells[1]];
            state.stag = Some(cells[2]);
            state.plants = cells[3..]
                .iter()
                .map(|&pos| Plant { pos, mature: false })
                .collect();
        }
        GameConfig::Harvest(_) => {
            let cells = distinct_cells(size, 2, rng)?;
            state.agents = [cells[0], cells[1]];
        }
        GameConfig::Escalation(_) => {
            let cells = distinct_cells(size, 3, rng)?;
            state.agents = [cells[0], cells[1]];
            state.marker = Some(cells[2]);
        }
    }
    Ok(state)
}

/// Advances the game by one joint action.
pub fn step<R: Rng + ?Sized>(state: &mut GridState, a1: Action, a2: Action, rng: &mut R) -> Result<StepResult> {
    if state.terminated {
        return Err(Error::Terminated);
    }
    let size = state.size;
    for (agent, action) in state.agents.iter_mut().zip([a1, a2]) {
        if let Some(p) = action.apply(*agent, size) {
            *agent = p;
        }
    }
    state.step_count += 1;
    let mut result = StepResult {
        rewards: [0.0; 2],
        done: false,
        events: StepEvents::default(),
    };
    match state.config {
        GameConfig::StagHunt(c) => step_stag_hunt(state, &c, &mut result, rng),
        GameConfig::Harvest(c) => step_harvest(state, &c, &mut result, rng),
        GameConfig::Escalation(c) => step_escalation(state, &c, &mut result, rng),
    }
    result.done = state.terminated;
    Ok(result)
}

/// Splits `total` among the agents standing on `cell`, returning how many
/// were there.
fn pay_pickers(agents: &[Pos; 2], cell: Pos, total: f64, rewards: &mut [f64; 2]) -> usize {
    let pickers = agents.iter().filter(|&&a| a == cell).count();
    if pickers > 0 {
        for (i, a) in agents.iter().enumerate() {
            if *a == cell {
                rewards[i] += total / pickers as f64;
            }
        }
    }
    pickers
}

fn step_stag_hunt<R: Rng + ?Sized>(
    state: &mut GridState,
    c: &StagHuntGridConfig,
    out: &mut StepResult,
    rng: &mut R,
) {
    let agents = state.agents;
    // Plants: picked up and respawned elsewhere.
    for k in 0..state.plants.len() {
        let cell = state.plants[k].pos;
        if pay_pickers(&agents, cell, c.plant_reward, &mut out.rewards) > 0 {
            out.events.plants_picked += 1;
            let mut taken = state.occupied();
            taken.push(cell);
            if let Some(p) = random_free_cell(state.size, &taken, rng) {
                state.plants[k].pos = p;
            }
        }
    }
    // Stag: joint capture pays both and respawns it, a lone hunter is gored.
    let stag = state.stag.expect("stag hunt always has a stag");
    let on_stag = [agents[0] == stag, agents[1] == stag];
    let mut respawned = false;
    if on_stag[0] && on_stag[1] {
        out.rewards[0] += c.stag_reward;
        out.rewards[1] += c.stag_reward;
        out.events.stag_captured = true;
        let taken = state.occupied();
        if let Some(p) = random_free_cell(state.size, &taken, rng) {
            state.stag = Some(p);
        }
        respawned = true;
    } else {
        for i in 0..2 {
            if on_stag[i] {
                out.rewards[i] -= c.gore_penalty;
                out.events.gored += 1;
            }
        }
    }
    if !respawned {
        state.stag = Some(stag_move(stag, agents));
    }
}

/// One step of the stag toward the closer agent (agent 1 on ties), moving
/// horizontally whenever the horizontal offset is non-zero.
pub fn stag_move(stag: Pos, agents: [Pos; 2]) -> Pos {
    let target = if stag.manhattan(agents[1]) < stag.manhattan(agents[0]) {
        agents[1]
    } else {
        agents[0]
    };
    if target.x != stag.x {
        let x = if target.x > stag.x { stag.x + 1 } else { stag.x - 1 };
        Pos::new(x, stag.y)
    } else if target.y != stag.y {
        let y = if target.y > stag.y { stag.y + 1 } else { stag.y - 1 };
        Pos::new(stag.x, y)
    } else {
        stag
    }
}

fn step_harvest<R: Rng + ?Sized>(state: &mut GridState, c: &HarvestConfig, out: &mut StepResult, rng: &mut R) {
    let agents = state.agents;
    let mut k = 0;
    while k < state.plants.len() {
        let plant = state.plants[k];
        let picked = if plant.mature {
            let here = agents.contains(&plant.pos);
            if here {
                out.rewards[0] += c.mature_reward;
                out.rewards[1] += c.mature_reward;
                out.events.mature_picked += 1;
            }
            here
        } else {
            let here = pay_pickers(&agents, plant.pos, c.young_reward, &mut out.rewards) > 0;
            if here {
                out.events.young_picked += 1;
            }
            here
        };
        if picked {
            state.plants.swap_remove(k);
        } else {
            k += 1;
        }
    }
    state.plants.retain_mut(|p| advance_plant(p, c, rng) != PlantFate::Died);
    // Restore spawn order determinism after swap_remove.
    state.plants.sort_by_key(|p| (p.pos.y, p.pos.x));
    if state.plants.len() < c.max_plants && rng.random::<f64>() < c.spawn_prob {
        let taken = state.occupied();
        if let Some(pos) = random_free_cell(state.size, &taken, rng) {
            state.plants.push(Plant { pos, mature: false });
            state.plants.sort_by_key(|p| (p.pos.y, p.pos.x));
        }
    }
}

fn step_escalation<R: Rng + ?Sized>(
    state: &mut GridState,
    c: &EscalationConfig,
    out: &mut StepResult,
    rng: &mut R,
) {
    let marker = state.marker.expect("active escalation has a marker");
    let on = [state.agents[0] == marker, state.agents[1] == marker];
    if on[0] && on[1] {
        out.rewards = [c.step_reward; 2];
        out.events.joint_marker = true;
        state.streak += 1;
        let next: Vec<Pos> = Action::ALL
            .iter()
            .filter_map(|a| a.apply(marker, state.size))
            .collect();
        state.marker = Some(next[rng.random_range(0..next.len())]);
    } else if state.streak >= 1 {
        // The agent still on the marker is the one let down.
        let penalty = c.penalty_multiplier * state.streak as f64;
        for i in 0..2 {
            if on[i] {
                out.rewards[i] -= penalty;
            }
        }
        out.events.streak_broken = true;
        state.terminated = true;
        state.marker = None;
    }
    if state.step_count >= c.max_steps {
        state.terminated = true;
        state.marker = None;
    }
}

/// Channel-plane encoding `CHANNELS x size x size` of the state from one
/// agent's point of view (`agent` is 0 or 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub size: usize,
    pub data: Vec<f64>,
}

impl Observation {
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Writes the observation of `agent` into `out` (length `CHANNELS * size²`).
pub fn observe_into(state: &GridState, agent: usize, out: &mut [f64]) -> Result<()> {
    if agent > 1 {
        return Err(Error::IndexOutOfBounds { index: agent, len: 2 });
    }
    let n = state.size * state.size;
    if out.len() != CHANNELS * n {
        return Err(Error::DimensionMismatch {
            expected: CHANNELS * n,
            found: out.len(),
        });
    }
    out.fill(0.0);
    let idx = |c: usize, p: Pos| c * n + p.y * state.size + p.x;
    out[idx(PLANE_SELF, state.agents[agent])] = 1.0;
    out[idx(PLANE_PARTNER, state.agents[1 - agent])] = 1.0;
    if let Some(s) = state.stag {
        out[idx(PLANE_STAG, s)] = 1.0;
    }
    for p in &state.plants {
        let plane = if p.mature { PLANE_MATURE } else { PLANE_YOUNG };
        out[idx(plane, p.pos)] = 1.0;
    }
    if let Some(m) = state.marker {
        out[idx(PLANE_MARKER, m)] = 1.0;
    }
    let streak = state.streak as f64 / state.streak_max() as f64;
    out[PLANE_STREAK * n..(PLANE_STREAK + 1) * n].fill(streak);
    Ok(())
}

pub fn observe(state: &GridState, agent: usize) -> Result<Observation> {
    let mut data = vec![0.0; CHANNELS * state.size * state.size];
    observe_into(state, agent, &mut data)?;
    Ok(Observation {
        size: state.size,
        data,
    })
}

/// Episode length with per-step continuation probability `1 - 1/mean`
/// (geometric on `1, 2, ...`, mean `mean`).
pub fn episode_length_sampler<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u32> {
    if !(mean >= 1.0 && mean.is_finite()) {
        return Err(Error::InvalidConfig(alloc::format!(
            "mean episode length {mean} must be >= 1"
        )));
    }
    let stop = 1.0 / mean;
    if stop >= 1.0 {
        return Ok(1);
    }
    let dist = rand_distr::Geometric::new(stop).expect("stop probability in (0, 1)");
    let failures = rand_distr::Distribution::sample(&dist, rng);
    Ok(u32::try_from(failures.saturating_add(1)).unwrap_or(u32::MAX))
}

/// Horizon of one episode: geometric with the given mean, capped for
/// Escalation at its step limit.
pub fn episode_horizon<R: Rng + ?Sized>(config: &GameConfig, mean: f64, rng: &mut R) -> Result<u32> {
    match config {
        GameConfig::Escalation(c) => Ok(c.max_steps),
        _ => episode_length_sampler(mean, rng),
    }
}
