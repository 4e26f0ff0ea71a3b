//! Two-player strategic-form games: generalized Stag Hunt payoffs, bimatrix
//! tables, the prosocial payoff transformation and its threshold analysis,
//! and pure Nash enumeration.
//!
//! All comparisons between payoffs are exact floating point comparisons.
//! Payoffs are user-supplied constants, and an epsilon would silently move
//! profiles in and out of the equilibrium set.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Strategy index of `Hunt` in a Stag Hunt bimatrix.
pub const HUNT: usize = 0;
/// Strategy index of `Forage` in a Stag Hunt bimatrix.
pub const FORAGE: usize = 1;

/// Default α grid spacing used by [`dominance_alpha`].
pub const DEFAULT_ALPHA_STEP: f64 = 1e-4;

/// Payoffs of a generalized Stag Hunt, `h > c >= m > g`.
///
/// * `h` joint hunting
/// * `c` foraging while the partner hunts
/// * `m` joint foraging
/// * `g` hunting alone
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagHuntPayoffs {
    h: f64,
    c: f64,
    m: f64,
    g: f64,
}

impl StagHuntPayoffs {
    pub fn new(h: f64, c: f64, m: f64, g: f64) -> Result<Self> {
        // Written so that NaN fails every comparison and is rejected.
        if h > c && c >= m && m > g && h.is_finite() && g.is_finite() {
            Ok(Self { h, c, m, g })
        } else {
            Err(Error::InvalidStagHunt { h, c, m, g })
        }
    }

    /// The matrix game used throughout the experiments: `h = 2`, `c = m = 1`.
    pub fn standard(g: f64) -> Result<Self> {
        Self::new(2.0, 1.0, 1.0, g)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    /// Row player's reward for `(own, partner)` strategy indices.
    pub fn reward(&self, own: usize, partner: usize) -> f64 {
        match (own == HUNT, partner == HUNT) {
            (true, true) => self.h,
            (true, false) => self.g,
            (false, true) => self.c,
            (false, false) => self.m,
        }
    }
}

/// Level of prosociality α in `[0, 1]`: 0 is selfish, 0.5 weighs both
/// players equally, 1 is selfless.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct ProsocialWeight(f64);

impl ProsocialWeight {
    pub const SELFISH: Self = Self(0.0);
    pub const PROSOCIAL: Self = Self(0.5);
    pub const SELFLESS: Self = Self(1.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidWeight(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for ProsocialWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A pure strategy pair `(a1, a2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StrategyProfile {
    pub a1: usize,
    pub a2: usize,
}

impl StrategyProfile {
    pub fn new(a1: usize, a2: usize) -> Self {
        Self { a1, a2 }
    }
}

/// Two-player game in strategic form. `r1[i][j]` and `r2[i][j]` are the row
/// and column player's rewards when row plays `i` and column plays `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BimatrixGame {
    rows: usize,
    cols: usize,
    r1: Vec<f64>,
    r2: Vec<f64>,
}

impl BimatrixGame {
    /// Builds a game from row-major tables.
    pub fn new(rows: usize, cols: usize, r1: Vec<f64>, r2: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("strategy set"));
        }
        for table in [&r1, &r2] {
            if table.len() != rows * cols {
                return Err(Error::DimensionMismatch {
                    expected: rows * cols,
                    found: table.len(),
                });
            }
        }
        if r1.iter().chain(&r2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reward table".into()));
        }
        Ok(Self { rows, cols, r1, r2 })
    }

    /// Builds a game from nested rows.
    pub fn from_rows(r1: &[Vec<f64>], r2: &[Vec<f64>]) -> Result<Self> {
        let rows = r1.len();
        let cols = r1.first().map_or(0, Vec::len);
        if r2.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: r2.len(),
            });
        }
        let mut flat1 = Vec::with_capacity(rows * cols);
        let mut flat2 = Vec::with_capacity(rows * cols);
        for (a, b) in r1.iter().zip(r2) {
            if a.len() != cols || b.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: if a.len() != cols { a.len() } else { b.len() },
                });
            }
            flat1.extend_from_slice(a);
            flat2.extend_from_slice(b);
        }
        Self::new(rows, cols, flat1, flat2)
    }

    /// Symmetric game in which the row player's table is `u` (`n x n`,
    /// row-major) and the column player's is its transpose.
    pub fn symmetric(n: usize, u: Vec<f64>) -> Result<Self> {
        if u.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: u.len(),
            });
        }
        let mut ut = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                ut[i * n + j] = u[j * n + i];
            }
        }
        Self::new(n, n, u, ut)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row player's reward.
    pub fn r1(&self, i: usize, j: usize) -> f64 {
        self.r1[i * self.cols + j]
    }

    /// Column player's reward.
    pub fn r2(&self, i: usize, j: usize) -> f64 {
        self.r2[i * self.cols + j]
    }

    pub fn row_table(&self) -> &[f64] {
        &self.r1
    }

    pub fn col_table(&self) -> &[f64] {
        &self.r2
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// True when `r2 == r1ᵀ` exactly.
    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..self.cols).all(|j| self.r2(i, j) == self.r1(j, i)))
    }

    pub fn contains(&self, profile: StrategyProfile) -> bool {
        profile.a1 < self.rows && profile.a2 < self.cols
    }

    fn check_profile(&self, profile: StrategyProfile) -> Result<()> {
        if profile.a1 >= self.rows {
            return Err(Error::IndexOutOfBounds {
                index: profile.a1,
                len: self.rows,
            });
        }
        if profile.a2 >= self.cols {
            return Err(Error::IndexOutOfBounds {
                index: profile.a2,
                len: self.cols,
            });
        }
        Ok(())
    }

    /// Rewards `(r1, r2)` at a profile.
    pub fn payoffs(&self, profile: StrategyProfile) -> Result<(f64, f64)> {
        self.check_profile(profile)?;
        Ok((self.r1(profile.a1, profile.a2), self.r2(profile.a1, profile.a2)))
    }

    /// Reorders strategies of a symmetric game by non-increasing diagonal
    /// payoff, ties broken by original index. Returns the reordered game and
    /// the permutation (`order[k]` is the original index of new strategy `k`).
    pub fn canonicalize(&self) -> Result<(BimatrixGame, Vec<usize>)> {
        if !self.is_symmetric() {
            return Err(Error::NotSymmetric);
        }
        let n = self.rows;
        let mut order: Vec<usize> = (0..n).collect();
        // Stable sort keeps the original index order among equal diagonals.
        order.sort_by(|&a, &b| self.r1(b, b).total_cmp(&self.r1(a, a)));
        let mut u = Vec::with_capacity(n * n);
        for &i in &order {
            for &j in &order {
                u.push(self.r1(i, j));
            }
        }
        Ok((BimatrixGame::symmetric(n, u)?, order))
    }
}

/// The 2x2 symmetric bimatrix of a Stag Hunt with `Hunt = 0`, `Forage = 1`:
/// `R1 = [[h, g], [c, m]]` and `R2 = R1ᵀ`.
pub fn to_bimatrix(p: &StagHuntPayoffs) -> BimatrixGame {
    BimatrixGame::symmetric(2, vec![p.h, p.g, p.c, p.m]).expect("2x2 table from finite payoffs")
}

/// Prosocial utilities: `U1 = (1 - α1) R1 + α1 R2` and
/// `U2 = (1 - α2) R2 + α2 R1`, elementwise.
pub fn prosocial_transform(
    game: &BimatrixGame,
    alpha1: ProsocialWeight,
    alpha2: ProsocialWeight,
) -> BimatrixGame {
    let (a1, a2) = (alpha1.value(), alpha2.value());
    let u1 = game
        .r1
        .iter()
        .zip(&game.r2)
        .map(|(&own, &other)| (1.0 - a1) * own + a1 * other)
        .collect();
    let u2 = game
        .r2
        .iter()
        .zip(&game.r1)
        .map(|(&own, &other)| (1.0 - a2) * own + a2 * other)
        .collect();
    BimatrixGame {
        rows: game.rows,
        cols: game.cols,
        r1: u1,
        r2: u2,
    }
}

/// Minimum belief that the partner hunts above which `Hunt` is a best
/// response for an α-prosocial agent, clamped to `[0, 1]`.
pub fn pstar(p: &StagHuntPayoffs, alpha: ProsocialWeight) -> f64 {
    let denom = p.h + p.m - p.g - p.c;
    assert!(denom > 0.0, "Stag Hunt inequalities imply h + m - g - c > 0");
    let a = alpha.value();
    (((p.m - p.g) - a * (p.c - p.g)) / denom).clamp(0.0, 1.0)
}

/// Prosociality at which `Hunt` becomes weakly dominant, `(m - g) / (c - g)`.
pub fn alpha_star(p: &StagHuntPayoffs) -> ProsocialWeight {
    let value = (p.m - p.g) / (p.c - p.g);
    assert!(value > 0.0 && value <= 1.0, "alpha* must lie in (0, 1]");
    ProsocialWeight(value)
}

/// Which equilibrium of a Stag Hunt has the larger basin under belief-based
/// best response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskDominance {
    Hunt,
    Forage,
    /// `p* = 1/2` exactly: both basins have equal size.
    Tie,
}

pub fn risk_dominance(p: &StagHuntPayoffs) -> RiskDominance {
    let threshold = pstar(p, ProsocialWeight::SELFISH);
    if threshold < 0.5 {
        RiskDominance::Hunt
    } else if threshold > 0.5 {
        RiskDominance::Forage
    } else {
        RiskDominance::Tie
    }
}

/// True iff `(Hunt, Hunt)` is risk dominant. A tie counts as not risk
/// dominant; use [`risk_dominance`] to tell the two apart.
pub fn is_risk_dominant_hunt(p: &StagHuntPayoffs) -> bool {
    risk_dominance(p) == RiskDominance::Hunt
}

/// All pure profiles from which neither player gains by deviating (weak
/// inequalities), in row-major order.
pub fn enumerate_pure_nash(game: &BimatrixGame) -> Vec<StrategyProfile> {
    let (rows, cols) = (game.rows, game.cols);
    // Column-wise maxima of r1 and row-wise maxima of r2.
    let best1: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| game.r1(i, j)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let best2: Vec<f64> = (0..rows)
        .map(|i| (0..cols).map(|j| game.r2(i, j)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut out = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if game.r1(i, j) >= best1[j] && game.r2(i, j) >= best2[i] {
                out.push(StrategyProfile::new(i, j));
            }
        }
    }
    out
}

fn check_sorted_symmetric(game: &BimatrixGame) -> Result<()> {
    if !game.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    for i in 1..game.rows {
        if game.r1(i, i) > game.r1(i - 1, i - 1) {
            return Err(Error::UnsortedDiagonal { index: i });
        }
    }
    Ok(())
}

/// True iff every 2x2 restriction of a symmetric game is a generalized Stag
/// Hunt: `U_ii > U_ji >= U_jj > U_ij` for all `i < j`, where `U` is the row
/// player's table.
///
/// Strategies must already be ordered by non-increasing diagonal payoff; see
/// [`BimatrixGame::canonicalize`].
pub fn is_all_subgames_staghunt(game: &BimatrixGame) -> Result<bool> {
    check_sorted_symmetric(game)?;
    let n = game.rows;
    let u = |i, j| game.r1(i, j);
    for i in 0..n {
        for j in i + 1..n {
            if !(u(i, i) > u(j, i) && u(j, i) >= u(j, j) && u(j, j) > u(i, j)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Row player's table under prosociality α: `(1 - α) U + α Uᵀ`.
pub fn interpolated_utility(game: &BimatrixGame, alpha: ProsocialWeight) -> BimatrixGame {
    prosocial_transform(game, alpha, ProsocialWeight::SELFISH)
}

/// Whether strategy 0 weakly dominates every other strategy `j` within the
/// 2x2 restriction to `{0, j}` of the α-agent's utilities.
pub fn hunt_dominates_subgames(game: &BimatrixGame, alpha: ProsocialWeight) -> bool {
    let a = alpha.value();
    let u = |i, j| (1.0 - a) * game.r1(i, j) + a * game.r1(j, i);
    (1..game.rows).all(|j| u(0, 0) >= u(j, 0) && u(0, j) >= u(j, j))
}

/// Whether strategy 0 weakly dominates every other strategy against every
/// column of the full α-utility table. Stronger than
/// [`hunt_dominates_subgames`] once `n > 2`, and not guaranteed to hold for
/// any α.
pub fn hunt_dominates_full(game: &BimatrixGame, alpha: ProsocialWeight) -> bool {
    let a = alpha.value();
    let n = game.rows;
    let u = |i, j| (1.0 - a) * game.r1(i, j) + a * game.r1(j, i);
    (1..n).all(|j| (0..n).all(|k| u(0, k) >= u(j, k)))
}

/// Smallest α on a uniform grid of spacing `step` at which strategy 0 weakly
/// dominates every other strategy in the α-agent's 2x2 subgames.
///
/// The predicate is monotone in α (each pairwise condition is linear in α
/// and holds at α = 1), so the grid is binary searched. `1.0` is always the
/// last grid point even when `step` does not divide it.
pub fn dominance_alpha(game: &BimatrixGame, step: f64) -> Result<ProsocialWeight> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "alpha grid step {step} must be in (0, 1]"
        )));
    }
    if !is_all_subgames_staghunt(game)? {
        return Err(Error::Precondition("every 2x2 subgame must be a Stag Hunt"));
    }
    let last = libm::ceil(1.0 / step) as usize;
    let alpha_at = |k: usize| {
        if k >= last {
            ProsocialWeight::SELFLESS
        } else {
            ProsocialWeight(k as f64 * step)
        }
    };
    if !hunt_dominates_subgames(game, ProsocialWeight::SELFLESS) {
        // Ruled out by the subgame ordering; kept as a loud failure.
        return Err(Error::Precondition("no dominating alpha at alpha = 1"));
    }
    let (mut lo, mut hi) = (0usize, last);
    if hunt_dominates_subgames(game, alpha_at(0)) {
        return Ok(alpha_at(0));
    }
    // Invariant: predicate false at lo, true at hi.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if hunt_dominates_subgames(game, alpha_at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(alpha_at(hi))
}
