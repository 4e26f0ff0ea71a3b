//! Strategic-form environments: the repeated Stag Hunt dyad, Stag Hunts
//! played on a graph, and the weak-link effort game.
//!
//! Every environment maps a joint action to per-agent rewards and holds no
//! state between rounds.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix_games::{StagHuntPayoffs, HUNT};

/// `(r1, r2)` of a single Stag Hunt round. Actions are [`HUNT`] or
/// [`FORAGE`](crate::matrix_games::FORAGE).
pub fn dyad_step(payoffs: &StagHuntPayoffs, a1: usize, a2: usize) -> (f64, f64) {
    (payoffs.reward(a1, a2), payoffs.reward(a2, a1))
}

/// How an agent combines the payoffs of its neighbor games.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborAggregation {
    #[default]
    Average,
    Total,
}

/// Named graph families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphPreset {
    /// Agent 0 is the center, all others are leaves.
    Star { n: usize },
    Complete { n: usize },
}

impl GraphPreset {
    pub fn n(&self) -> usize {
        match *self {
            GraphPreset::Star { n } | GraphPreset::Complete { n } => n,
        }
    }

    /// Row-major 0/1 adjacency matrix.
    pub fn adjacency(&self) -> Vec<bool> {
        let n = self.n();
        let mut adj = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                adj[i * n + j] = i != j
                    && match self {
                        GraphPreset::Star { .. } => i == 0 || j == 0,
                        GraphPreset::Complete { .. } => true,
                    };
            }
        }
        adj
    }
}

/// Agents on an undirected graph each choose one action and play it against
/// every neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGame {
    n: usize,
    adjacency: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
    pub payoffs: StagHuntPayoffs,
    pub aggregation: NeighborAggregation,
}

impl NetworkGame {
    /// Validates a row-major adjacency matrix: symmetric, no self-loops,
    /// no isolated agents.
    pub fn new(
        n: usize,
        adjacency: Vec<bool>,
        payoffs: StagHuntPayoffs,
        aggregation: NeighborAggregation,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig("a network needs at least two agents".into()));
        }
        if adjacency.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: adjacency.len(),
            });
        }
        let mut neighbors = Vec::with_capacity(n);
        for i in 0..n {
            if adjacency[i * n + i] {
                return Err(Error::InvalidConfig(alloc::format!("self-loop at agent {i}")));
            }
            let mut row = Vec::new();
            for j in 0..n {
                if adjacency[i * n + j] != adjacency[j * n + i] {
                    return Err(Error::InvalidConfig(alloc::format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
                if adjacency[i * n + j] {
                    row.push(j);
                }
            }
            if row.is_empty() {
                return Err(Error::InvalidConfig(alloc::format!("agent {i} has no neighbors")));
            }
            neighbors.push(row);
        }
        Ok(Self {
            n,
            adjacency,
            neighbors,
            payoffs,
            aggregation,
        })
    }

    pub fn from_preset(
        preset: GraphPreset,
        payoffs: StagHuntPayoffs,
        aggregation: NeighborAggregation,
    ) -> Result<Self> {
        Self::new(preset.n(), preset.adjacency(), payoffs, aggregation)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &[bool] {
        &self.adjacency
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.neighbors[agent]
    }

    /// Reward of every agent: the average or total of its neighbor games.
    pub fn step(&self, actions: &[usize]) -> Result<Vec<f64>> {
        if actions.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: actions.len(),
            });
        }
        Ok((0..self.n)
            .map(|i| {
                let nbrs = &self.neighbors[i];
                let total: f64 = nbrs
                    .iter()
                    .map(|&j| self.payoffs.reward(actions[i], actions[j]))
                    .sum();
                match self.aggregation {
                    NeighborAggregation::Average => total / nbrs.len() as f64,
                    NeighborAggregation::Total => total,
                }
            })
            .collect())
    }
}

pub fn network_step(game: &NetworkGame, actions: &[usize]) -> Result<Vec<f64>> {
    game.step(actions)
}

/// True when every agent hunts.
pub fn all_hunt(actions: &[usize]) -> bool {
    actions.iter().all(|&a| a == HUNT)
}

/// Minimum-effort coordination game: `reward_i = A * min_j e_j - e_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakLinkGame {
    n_players: usize,
    max_effort: usize,
    multiplier: f64,
}

impl WeakLinkGame {
    pub const PLAYERS: usize = 5;
    pub const MAX_EFFORT: usize = 5;

    /// Five players with efforts `0..=5`.
    pub fn new(multiplier: f64) -> Result<Self> {
        Self::with_size(Self::PLAYERS, Self::MAX_EFFORT, multiplier)
    }

    pub fn with_size(n_players: usize, max_effort: usize, multiplier: f64) -> Result<Self> {
        if !(multiplier > 0.0 && multiplier.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "weak-link multiplier {multiplier} must be positive"
            )));
        }
        if n_players < 2 || max_effort == 0 {
            return Err(Error::InvalidConfig("weak-link game needs >= 2 players and >= 2 effort levels".into()));
        }
        Ok(Self {
            n_players,
            max_effort,
            multiplier,
        })
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn max_effort(&self) -> usize {
        self.max_effort
    }

    /// Number of effort levels, `max_effort + 1`.
    pub fn num_actions(&self) -> usize {
        self.max_effort + 1
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn step(&self, efforts: &[usize]) -> Result<Vec<f64>> {
        if efforts.len() != self.n_players {
            return Err(Error::DimensionMismatch {
                expected: self.n_players,
                found: efforts.len(),
            });
        }
        if let Some(&bad) = efforts.iter().find(|&&e| e > self.max_effort) {
            return Err(Error::IndexOutOfBounds {
                index: bad,
                len: self.max_effort + 1,
            });
        }
        let min = *efforts.iter().min().expect("at least two players") as f64;
        Ok(efforts
            .iter()
            .map(|&e| self.multiplier * min - e as f64)
            .collect())
    }
}

pub fn weaklink_step(game: &WeakLinkGame, efforts: &[usize]) -> Result<Vec<f64>> {
    game.step(efforts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_games::FORAGE;

    fn sh() -> StagHuntPayoffs {
        StagHuntPayoffs::standard(-1.0).unwrap()
    }

    #[test]
    fn dyad_examples() {
        assert_eq!(dyad_step(&sh(), HUNT, HUNT), (2.0, 2.0));
        assert_eq!(dyad_step(&sh(), FORAGE, FORAGE), (1.0, 1.0));
        assert_eq!(dyad_step(&sh(), HUNT, FORAGE), (-1.0, 1.0));
    }

    #[test]
    fn network_examples() {
        let complete =
            NetworkGame::from_preset(GraphPreset::Complete { n: 5 }, sh(), NeighborAggregation::Average)
                .unwrap();
        assert_eq!(complete.step(&[HUNT; 5]).unwrap(), vec![2.0; 5]);

        let star =
            NetworkGame::from_preset(GraphPreset::Star { n: 5 }, sh(), NeighborAggregation::Average)
                .unwrap();
        let r = star.step(&[HUNT, FORAGE, FORAGE, FORAGE, FORAGE]).unwrap();
        assert_eq!(r, vec![-1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(star.step(&[FORAGE; 5]).unwrap(), vec![1.0; 5]);

        let total =
            NetworkGame::from_preset(GraphPreset::Star { n: 5 }, sh(), NeighborAggregation::Total)
                .unwrap();
        assert_eq!(total.step(&[HUNT; 5]).unwrap(), vec![8.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn two_node_network_is_the_dyad() {
        let pair = NetworkGame::new(2, vec![false, true, true, false], sh(), NeighborAggregation::Average)
            .unwrap();
        for a1 in [HUNT, FORAGE] {
            for a2 in [HUNT, FORAGE] {
                let (r1, r2) = dyad_step(&sh(), a1, a2);
                assert_eq!(pair.step(&[a1, a2]).unwrap(), vec![r1, r2]);
            }
        }
    }

    #[test]
    fn network_rejects_bad_adjacency() {
        let agg = NeighborAggregation::Average;
        assert!(NetworkGame::new(2, vec![true, true, true, false], sh(), agg).is_err());
        assert!(NetworkGame::new(2, vec![false, true, false, false], sh(), agg).is_err());
        assert!(NetworkGame::new(3, vec![false, true, false, true, false, false, false, false, false], sh(), agg)
            .is_err());
        let star = NetworkGame::from_preset(GraphPreset::Star { n: 5 }, sh(), agg).unwrap();
        assert!(star.step(&[HUNT; 4]).is_err());
    }

    #[test]
    fn weaklink_examples() {
        let g = WeakLinkGame::new(2.0).unwrap();
        assert_eq!(g.step(&[0; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(g.step(&[3; 5]).unwrap(), vec![3.0; 5]);
        assert_eq!(g.step(&[3, 3, 3, 3, 1]).unwrap(), vec![-1.0, -1.0, -1.0, -1.0, 1.0]);
        assert!(g.step(&[6, 0, 0, 0, 0]).is_err());
        assert!(WeakLinkGame::new(0.0).is_err());
    }

    #[test]
    fn symmetric_efforts_are_equilibria() {
        for a in [1.5, 2.0, 3.0] {
            let g = WeakLinkGame::new(a).unwrap();
            for e in 0..=5 {
                let profile = [e; 5];
                let base = g.step(&profile).unwrap();
                for player in 0..5 {
                    for dev in 0..=5 {
                        let mut p = profile;
                        p[player] = dev;
                        assert!(g.step(&p).unwrap()[player] <= base[player]);
                    }
                }
            }
        }
    }
}
