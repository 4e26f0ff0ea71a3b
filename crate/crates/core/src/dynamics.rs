//! Belief-based best-response dynamics for 2x2 Stag Hunts.
//!
//! Each agent holds a belief that its partner hunts, best-responds to it
//! under its own (prosocially transformed) utilities, and then moves the
//! belief toward the partner's observed action by exponential smoothing.
//! Both agents act and update simultaneously.

use crate::error::{Error, Result};
use crate::matrix_games::{
    prosocial_transform, to_bimatrix, BimatrixGame, ProsocialWeight, StagHuntPayoffs, FORAGE,
    HUNT,
};

/// Beliefs that the partner plays `Hunt`, one per agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefState {
    pub p1: f64,
    pub p2: f64,
}

impl BeliefState {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        for p in [p1, p2] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "belief {p} is not a probability"
                )));
            }
        }
        Ok(Self { p1, p2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicConfig {
    /// Smoothing rate λ in `(0, 1]`.
    pub step: f64,
    pub max_iters: usize,
    /// Distance from a corner of belief space that counts as absorbed.
    pub tol: f64,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        Self {
            step: 0.2,
            max_iters: 10_000,
            tol: 1e-6,
        }
    }
}

impl DynamicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "belief step {} must be in (0, 1]",
                self.step
            )));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidConfig("tol must be > 0 and max_iters >= 1".into()));
        }
        Ok(())
    }
}

/// Where a belief trajectory ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Absorption {
    Hunt,
    Forage,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasinEstimate {
    pub fraction_hunt: f64,
    pub fraction_forage: f64,
    pub unresolved: f64,
    /// Grid points per belief axis.
    pub resolution: usize,
}

/// Best responses `(a1, a2)` of both agents to their beliefs. Indifference
/// resolves to `Hunt`.
///
/// `game` holds each agent's utilities (already transformed): agent 1 is
/// the row player, agent 2 the column player.
pub fn best_responses(game: &BimatrixGame, b: BeliefState) -> (usize, usize) {
    let hunt1 = b.p1 * game.r1(HUNT, HUNT) + (1.0 - b.p1) * game.r1(HUNT, FORAGE);
    let forage1 = b.p1 * game.r1(FORAGE, HUNT) + (1.0 - b.p1) * game.r1(FORAGE, FORAGE);
    let hunt2 = b.p2 * game.r2(HUNT, HUNT) + (1.0 - b.p2) * game.r2(FORAGE, HUNT);
    let forage2 = b.p2 * game.r2(HUNT, FORAGE) + (1.0 - b.p2) * game.r2(FORAGE, FORAGE);
    let a1 = if hunt1 >= forage1 { HUNT } else { FORAGE };
    let a2 = if hunt2 >= forage2 { HUNT } else { FORAGE };
    (a1, a2)
}

fn smooth(p: f64, partner_action: usize, step: f64) -> f64 {
    let target = if partner_action == HUNT { 1.0 } else { 0.0 };
    ((1.0 - step) * p + step * target).clamp(0.0, 1.0)
}

/// One synchronous round: both agents best-respond, then update beliefs
/// toward what the partner played.
pub fn step_beliefs(game: &BimatrixGame, b: BeliefState, cfg: &DynamicConfig) -> BeliefState {
    let (a1, a2) = best_responses(game, b);
    BeliefState {
        p1: smooth(b.p1, a2, cfg.step),
        p2: smooth(b.p2, a1, cfg.step),
    }
}

/// Iterates [`step_beliefs`] until beliefs are within `tol` of `(1, 1)` or
/// `(0, 0)`, or `max_iters` is reached.
pub fn run_to_absorption(game: &BimatrixGame, start: BeliefState, cfg: &DynamicConfig) -> Absorption {
    let mut b = start;
    for _ in 0..=cfg.max_iters {
        if b.p1 >= 1.0 - cfg.tol && b.p2 >= 1.0 - cfg.tol {
            return Absorption::Hunt;
        }
        if b.p1 <= cfg.tol && b.p2 <= cfg.tol {
            return Absorption::Forage;
        }
        b = step_beliefs(game, b, cfg);
    }
    Absorption::Unresolved
}

/// Same classification as [`run_to_absorption`] for games whose expected
/// utility gap `EU(Hunt) - EU(Forage)` increases in the belief (every
/// prosocial transform of a Stag Hunt).
///
/// Once both agents pick the same action their beliefs move toward the
/// matching corner, which only reinforces that action, so the outcome is
/// decided at the first coordinated round.
pub fn run_to_lock_in(game: &BimatrixGame, start: BeliefState, cfg: &DynamicConfig) -> Absorption {
    let mut b = start;
    for _ in 0..=cfg.max_iters {
        match best_responses(game, b) {
            (HUNT, HUNT) => return Absorption::Hunt,
            (FORAGE, FORAGE) => return Absorption::Forage,
            (a1, a2) => {
                b = BeliefState {
                    p1: smooth(b.p1, a2, cfg.step),
                    p2: smooth(b.p2, a1, cfg.step),
                }
            }
        }
    }
    Absorption::Unresolved
}

/// Fraction of an interior `resolution x resolution` grid of initial beliefs
/// `((i + 0.5) / R, (j + 0.5) / R)` absorbed by `(Hunt, Hunt)` when agent 1
/// has prosociality `alpha1` and agent 2 has `alpha2`.
pub fn basin_fraction(
    payoffs: &StagHuntPayoffs,
    alpha1: ProsocialWeight,
    alpha2: ProsocialWeight,
    cfg: &DynamicConfig,
    resolution: usize,
) -> Result<BasinEstimate> {
    cfg.validate()?;
    if resolution == 0 {
        return Err(Error::InvalidConfig("resolution must be >= 1".into()));
    }
    let game = prosocial_transform(&to_bimatrix(payoffs), alpha1, alpha2);
    let (mut hunt, mut forage, mut unresolved) = (0usize, 0usize, 0usize);
    let r = resolution as f64;
    for i in 0..resolution {
        for j in 0..resolution {
            let start = BeliefState {
                p1: (i as f64 + 0.5) / r,
                p2: (j as f64 + 0.5) / r,
            };
            match run_to_lock_in(&game, start, cfg) {
                Absorption::Hunt => hunt += 1,
                Absorption::Forage => forage += 1,
                Absorption::Unresolved => unresolved += 1,
            }
        }
    }
    let total = (resolution * resolution) as f64;
    Ok(BasinEstimate {
        fraction_hunt: hunt as f64 / total,
        fraction_forage: forage as f64 / total,
        unresolved: unresolved as f64 / total,
        resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_games::{alpha_star, pstar};

    fn sh() -> StagHuntPayoffs {
        StagHuntPayoffs::standard(-1.0).unwrap()
    }

    fn selfish_game() -> BimatrixGame {
        to_bimatrix(&sh())
    }

    #[test]
    fn fixed_points() {
        let cfg = DynamicConfig::default();
        let g = selfish_game();
        let top = BeliefState::new(1.0, 1.0).unwrap();
        assert_eq!(step_beliefs(&g, top, &cfg), top);
        let bottom = BeliefState::new(0.0, 0.0).unwrap();
        assert_eq!(step_beliefs(&g, bottom, &cfg), bottom);
    }

    #[test]
    fn hand_evaluated_step() {
        let cfg = DynamicConfig {
            step: 0.5,
            ..DynamicConfig::default()
        };
        let b = step_beliefs(&selfish_game(), BeliefState::new(0.9, 0.9).unwrap(), &cfg);
        assert!((b.p1 - 0.95).abs() < 1e-15 && (b.p2 - 0.95).abs() < 1e-15);
    }

    #[test]
    fn threshold_tie_hunts() {
        let g = selfish_game();
        let p = pstar(&sh(), ProsocialWeight::SELFISH);
        let (a1, _) = best_responses(&g, BeliefState::new(p + 1e-12, p).unwrap());
        assert_eq!(a1, HUNT);
        let (a1, _) = best_responses(&g, BeliefState::new(p - 1e-9, p).unwrap());
        assert_eq!(a1, FORAGE);
        // Exactly representable threshold p* = 1/2.
        let tie = to_bimatrix(&StagHuntPayoffs::standard(0.0).unwrap());
        assert_eq!(best_responses(&tie, BeliefState::new(0.5, 0.5).unwrap()), (HUNT, HUNT));
    }

    #[test]
    fn single_center_point_forages() {
        let est = basin_fraction(
            &sh(),
            ProsocialWeight::SELFISH,
            ProsocialWeight::SELFISH,
            &DynamicConfig::default(),
            1,
        )
        .unwrap();
        assert_eq!(est.fraction_forage, 1.0);
    }

    #[test]
    fn selfless_agent_makes_hunt_global() {
        let p = StagHuntPayoffs::new(2.0, 1.5, 1.0, -1.0).unwrap();
        let a = alpha_star(&p);
        for alpha2 in [0.0, 0.3, 1.0] {
            let est = basin_fraction(
                &p,
                a,
                ProsocialWeight::new(alpha2).unwrap(),
                &DynamicConfig::default(),
                41,
            )
            .unwrap();
            assert_eq!(est.fraction_hunt, 1.0);
        }
    }

    #[test]
    fn quadrant_bounds() {
        let est = basin_fraction(
            &sh(),
            ProsocialWeight::SELFISH,
            ProsocialWeight::SELFISH,
            &DynamicConfig::default(),
            101,
        )
        .unwrap();
        assert!(est.fraction_hunt >= 1.0 / 9.0);
        assert!(est.fraction_forage >= 4.0 / 9.0);
        let sum = est.fraction_hunt + est.fraction_forage + est.unresolved;
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lock_in_agrees_with_full_iteration() {
        let cfg = DynamicConfig::default();
        for (a1, a2) in [(0.0, 0.0), (0.3, 0.0), (0.5, 0.7)] {
            let game = prosocial_transform(
                &selfish_game(),
                ProsocialWeight::new(a1).unwrap(),
                ProsocialWeight::new(a2).unwrap(),
            );
            for i in 0..30 {
                for j in 0..30 {
                    let b = BeliefState::new((i as f64 + 0.5) / 30.0, (j as f64 + 0.5) / 30.0)
                        .unwrap();
                    assert_eq!(run_to_lock_in(&game, b, &cfg), run_to_absorption(&game, b, &cfg));
                }
            }
        }
    }

    #[test]
    fn full_step_can_oscillate() {
        let cfg = DynamicConfig {
            step: 1.0,
            max_iters: 100,
            tol: 1e-6,
        };
        // Agent 1 hunts, agent 2 forages, then they swap forever.
        let b = BeliefState::new(0.9, 0.1).unwrap();
        assert_eq!(run_to_absorption(&selfish_game(), b, &cfg), Absorption::Unresolved);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = DynamicConfig {
            step: 0.0,
            ..DynamicConfig::default()
        };
        assert!(basin_fraction(&sh(), ProsocialWeight::SELFISH, ProsocialWeight::SELFISH, &cfg, 3)
            .is_err());
        assert!(BeliefState::new(1.2, 0.0).is_err());
    }
}
