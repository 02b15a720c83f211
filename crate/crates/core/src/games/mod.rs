//! Cooperative games: the coalition type, game traits, synthetic test games,
//! and the tabular-model explanation games (local attribution, global
//! importance, sensitivity).
//!
//! A deterministic game maps coalitions to real values. A stochastic game
//! additionally depends on an exogenous variable `U`; here `U` always ranges
//! over a finite set of equally likely outcomes (rows of a dataset), so
//! expectations over `U` are computable by a full pass.

pub mod model;
pub mod synthetic;
pub mod tabular;

pub use model::{load_dataset, load_model, Dataset, Loss, ModelKind, TabularModel};
pub use synthetic::{parse_game_spec, InessentialGame, MajorityGame, RandomGame, UnanimityGame};
pub use tabular::{sage_game, shap_game, shapley_effects_game, SageGame, ShapGame, ShapleyEffectsGame};

use crate::error::{Error, Result};

/// A subset of players encoded as a binary indicator vector `z ∈ {0,1}^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coalition {
    bits: Vec<bool>,
}

impl Coalition {
    /// The empty coalition (all zeros).
    pub fn empty(d: usize) -> Self {
        Coalition { bits: vec![false; d] }
    }

    /// The grand coalition (all ones).
    pub fn grand(d: usize) -> Self {
        Coalition { bits: vec![true; d] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Coalition { bits }
    }

    /// Builds a coalition from a bitmask; bit `i` of `mask` is player `i`.
    /// Only valid for `d <= 64`.
    pub fn from_mask(mask: u64, d: usize) -> Self {
        assert!(d <= 64, "bitmask coalitions require d <= 64");
        let bits = (0..d).map(|i| (mask >> i) & 1 == 1).collect();
        Coalition { bits }
    }

    /// The bitmask with bit `i` set iff player `i` is in the coalition.
    /// Only valid for `d <= 64`.
    pub fn mask(&self) -> u64 {
        assert!(self.bits.len() <= 64, "bitmask coalitions require d <= 64");
        self.bits
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| if b { m | (1 << i) } else { m })
    }

    pub fn player_count(&self) -> usize {
        self.bits.len()
    }

    /// Number of players in the coalition.
    pub fn size(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, player: usize) -> bool {
        self.bits[player]
    }

    pub fn set(&mut self, player: usize, included: bool) {
        self.bits[player] = included;
    }

    /// The complement coalition `1 - z`.
    pub fn complement(&self) -> Coalition {
        Coalition { bits: self.bits.iter().map(|&b| !b).collect() }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Indices of the included players.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn is_empty_coalition(&self) -> bool {
        self.bits.iter().all(|&b| !b)
    }

    pub fn is_grand_coalition(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }
}

/// A deterministic cooperative game `v: {0,1}^d -> R`.
///
/// Implementations must be pure: the same coalition always evaluates to the
/// same finite value, and evaluation is safe from multiple threads.
pub trait Game: Send + Sync {
    fn player_count(&self) -> usize;
    fn evaluate(&self, coalition: &Coalition) -> f64;
}

impl<G: Game + ?Sized> Game for &G {
    fn player_count(&self) -> usize {
        (**self).player_count()
    }
    fn evaluate(&self, coalition: &Coalition) -> f64 {
        (**self).evaluate(coalition)
    }
}

impl<G: Game + ?Sized> Game for Box<G> {
    fn player_count(&self) -> usize {
        (**self).player_count()
    }
    fn evaluate(&self, coalition: &Coalition) -> f64 {
        (**self).evaluate(coalition)
    }
}

/// A stochastic cooperative game `V(z, u)` with a finite exogenous variable.
///
/// Outcomes `0..outcome_count()` are equally likely draws of `U`, so
/// `E_U[V(z, U)]` is the plain average over outcomes. `grand_mean` and
/// `empty_mean` are `E_U[V(1, U)]` and `E_U[V(0, U)]`, fixed at construction
/// by a full pass over the outcomes.
pub trait StochasticGame: Send + Sync {
    fn player_count(&self) -> usize;
    fn outcome_count(&self) -> usize;
    fn evaluate(&self, coalition: &Coalition, outcome: usize) -> f64;
    fn grand_mean(&self) -> f64;
    fn empty_mean(&self) -> f64;
}

impl<G: StochasticGame + ?Sized> StochasticGame for &G {
    fn player_count(&self) -> usize {
        (**self).player_count()
    }
    fn outcome_count(&self) -> usize {
        (**self).outcome_count()
    }
    fn evaluate(&self, coalition: &Coalition, outcome: usize) -> f64 {
        (**self).evaluate(coalition, outcome)
    }
    fn grand_mean(&self) -> f64 {
        (**self).grand_mean()
    }
    fn empty_mean(&self) -> f64 {
        (**self).empty_mean()
    }
}

/// The expectation `v̄(z) = E_U[V(z, U)]` of a stochastic game, as a
/// deterministic game. Every evaluation is a full pass over the outcomes.
pub struct ExpectedGame<'a> {
    inner: &'a dyn StochasticGame,
}

impl<'a> ExpectedGame<'a> {
    pub fn new(inner: &'a dyn StochasticGame) -> Self {
        ExpectedGame { inner }
    }
}

impl Game for ExpectedGame<'_> {
    fn player_count(&self) -> usize {
        self.inner.player_count()
    }

    fn evaluate(&self, coalition: &Coalition) -> f64 {
        let count = self.inner.outcome_count();
        let sum: f64 = (0..count).map(|u| self.inner.evaluate(coalition, u)).sum();
        sum / count as f64
    }
}

/// Affine rescaling `scale * v(z) + offset` of another game.
///
/// Used to normalize test games to unit value spread; Shapley values scale
/// by `scale` and are unaffected by `offset`.
pub struct ScaledGame<G> {
    inner: G,
    scale: f64,
    offset: f64,
}

impl<G: Game> ScaledGame<G> {
    pub fn new(inner: G, scale: f64, offset: f64) -> Self {
        ScaledGame { inner, scale, offset }
    }
}

impl<G: Game> Game for ScaledGame<G> {
    fn player_count(&self) -> usize {
        self.inner.player_count()
    }

    fn evaluate(&self, coalition: &Coalition) -> f64 {
        self.scale * self.inner.evaluate(coalition) + self.offset
    }
}

/// A stochastic game with a single exogenous outcome, wrapping a
/// deterministic game. `V(z, u) = v(z)` for the only `u`.
pub struct DegenerateStochasticGame<G> {
    inner: G,
    grand: f64,
    empty: f64,
}

impl<G: Game> DegenerateStochasticGame<G> {
    pub fn new(inner: G) -> Self {
        let d = inner.player_count();
        let grand = inner.evaluate(&Coalition::grand(d));
        let empty = inner.evaluate(&Coalition::empty(d));
        DegenerateStochasticGame { inner, grand, empty }
    }
}

impl<G: Game> StochasticGame for DegenerateStochasticGame<G> {
    fn player_count(&self) -> usize {
        self.inner.player_count()
    }
    fn outcome_count(&self) -> usize {
        1
    }
    fn evaluate(&self, coalition: &Coalition, _outcome: usize) -> f64 {
        self.inner.evaluate(coalition)
    }
    fn grand_mean(&self) -> f64 {
        self.grand
    }
    fn empty_mean(&self) -> f64 {
        self.empty
    }
}

pub(crate) fn validate_player_count(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::Config("player count must be at least 1".into()));
    }
    Ok(())
}
