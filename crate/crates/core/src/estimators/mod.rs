//! The four sampling estimators: the original sampled-moments solve and the
//! exact-moment unbiased solve, each for deterministic and stochastic games,
//! with optional complement pairing, streaming accumulation, convergence
//! detection, and sample-count forecasting.
//!
//! Every run owns its seeded generator, so identical configuration and seed
//! produce a bit-identical [`Estimate`].

mod welford;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::games::{Coalition, Game, StochasticGame};
use crate::kernel::{MomentMatrix, SubsetDistribution};
use crate::solver::{compute_c_exact, solve_constrained, solve_constrained_exact};
use welford::VectorWelford;

/// Which estimator family to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    /// Sampled moment matrix and moment vector, solved exactly (the
    /// dataset-sampling estimator). Covariance comes from intermediate
    /// batch estimates.
    Original,
    /// Exact moment matrix with a sampled moment vector; unbiased, with
    /// covariance propagated through the projection matrix.
    Unbiased,
}

/// Configuration shared by all four estimator runs.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub variant: Variant,
    /// Evaluate each sampled coalition together with its complement.
    pub paired: bool,
    /// Convergence threshold `t` in (0, 1): stop when the largest standard
    /// error falls below `t` times the spread of the current estimates.
    pub threshold: f64,
    /// Stride (in samples) between intermediate estimates and convergence
    /// checks. Defaults to `max(32 d, 512)`.
    pub batch: Option<usize>,
    pub seed: u64,
    /// Hard cap on samples; `None` runs until convergence.
    pub max_samples: Option<u64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            variant: Variant::Original,
            paired: true,
            threshold: 0.01,
            batch: None,
            seed: 0,
            max_samples: None,
        }
    }
}

impl EstimatorConfig {
    pub fn new(variant: Variant) -> Self {
        EstimatorConfig { variant, ..Default::default() }
    }

    pub fn with_paired(mut self, paired: bool) -> Self {
        self.paired = paired;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = Some(batch);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_samples(mut self, max_samples: u64) -> Self {
        self.max_samples = Some(max_samples);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.batch == Some(0) {
            return Err(Error::Config("batch stride must be at least 1".into()));
        }
        if self.max_samples == Some(0) {
            return Err(Error::Config("max_samples must be at least 1".into()));
        }
        Ok(())
    }

    fn resolved_batch(&self, d: usize) -> usize {
        self.batch.unwrap_or_else(|| (32 * d).max(512))
    }
}

/// Convergence may only fire after this many intermediate estimates; a
/// covariance from fewer batches is too unstable to gate stopping.
pub const MIN_INTERMEDIATE_ESTIMATES: u64 = 4;

/// One entry of the forecast history: after `n` samples, the predicted
/// total sample count needed to reach the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ForecastPoint {
    pub n: u64,
    pub predicted: u64,
}

/// A finished estimation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    /// The estimated values; always sum to `v(1) - v(0)` (or the stochastic
    /// means thereof).
    pub values: Vec<f64>,
    /// Per-coordinate standard errors, `sqrt(diag(covariance))`. `None`
    /// when the run stopped before a covariance was available.
    pub std_errors: Option<Vec<f64>>,
    /// Covariance of the estimate at the final sample count.
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Samples consumed (one per coalition pair when paired).
    pub n_samples: u64,
    /// Total game evaluations, including the grand/empty evaluations for
    /// deterministic games and two per sample when paired.
    pub game_evals: u64,
    pub converged: bool,
    /// Set when the last convergence check found uncertainty remaining but
    /// all value estimates equal, leaving the stopping ratio undefined.
    pub spread_degenerate: bool,
    /// Intermediate estimates dropped because their batch moment matrix was
    /// singular.
    pub skipped_intermediates: u64,
    pub forecasts: Vec<ForecastPoint>,
}

impl Estimate {
    /// 95% confidence intervals `value ± 1.96 std_error`.
    pub fn ci95(&self) -> Option<Vec<(f64, f64)>> {
        let sigma = self.std_errors.as_ref()?;
        Some(
            self.values
                .iter()
                .zip(sigma)
                .map(|(v, s)| (v - 1.96 * s, v + 1.96 * s))
                .collect(),
        )
    }
}

/// The stopping ratio: largest standard error over the spread of the
/// current estimates. Zero uncertainty yields `Some(0.0)` regardless of
/// spread; `None` marks a degenerate spread (uncertainty remains but all
/// estimates coincide, e.g. a constant game sampled without pairing).
pub fn convergence_ratio(std_errors: &[f64], values: &[f64]) -> Option<f64> {
    let max_sigma = std_errors.iter().cloned().fold(0.0, f64::max);
    if max_sigma == 0.0 {
        return Some(0.0);
    }
    let max_v = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_v = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = max_v - min_v;
    let scale = values.iter().fold(1.0, |acc: f64, v| acc.max(v.abs()));
    if !(spread > 1e-12 * scale) {
        return None;
    }
    Some(max_sigma / spread)
}

/// Forecast of the total sample count needed to reach threshold `t`, from
/// the one-over-n variance law: `n (ratio / t)^2`, rounded up.
pub fn forecast_samples(n: u64, ratio: f64, threshold: f64) -> u64 {
    (n as f64 * (ratio / threshold).powi(2)).ceil() as u64
}

/// Deterministically derives an independent seed for a sub-stream (run
/// index, worker index) from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut x = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// One sample's contribution to the moment-vector estimate.
///
/// Unpaired, original variant: `z (v(z) - v0)`. Unpaired, unbiased variant:
/// `z v(z) - v0/2` in every coordinate (the mean of `Z` is 1/2). Paired
/// (both variants): `(z v(z) + (1-z) v(1-z) - v0) / 2`.
pub fn sample_b_contribution(
    game: &dyn Game,
    z: &Coalition,
    variant: Variant,
    paired: bool,
    v0: f64,
) -> Vec<f64> {
    let vz = game.evaluate(z);
    let vzc = if paired { Some(game.evaluate(&z.complement())) } else { None };
    let mut out = DVector::zeros(z.player_count());
    write_b_sample(&mut out, z, vz, vzc, v0, variant);
    out.as_slice().to_vec()
}

fn write_b_sample(
    out: &mut DVector<f64>,
    z: &Coalition,
    vz: f64,
    vzc: Option<f64>,
    baseline: f64,
    variant: Variant,
) {
    match vzc {
        Some(vc) => {
            for (i, &bit) in z.bits().iter().enumerate() {
                out[i] = 0.5 * (if bit { vz } else { vc } - baseline);
            }
        }
        None => match variant {
            Variant::Original => {
                for (i, &bit) in z.bits().iter().enumerate() {
                    out[i] = if bit { vz - baseline } else { 0.0 };
                }
            }
            Variant::Unbiased => {
                let half_base = 0.5 * baseline;
                for (i, &bit) in z.bits().iter().enumerate() {
                    out[i] = if bit { vz - half_base } else { -half_base };
                }
            }
        },
    }
}

/// Abstracts deterministic and stochastic games for the run loops: both
/// provide a baseline value, a constraint total, and per-draw evaluations
/// (the stochastic side draws its exogenous outcome internally, shared
/// between a coalition and its complement).
trait SampleSource {
    fn player_count(&self) -> usize;
    fn baseline(&self) -> f64;
    fn total(&self) -> f64;
    fn setup_evals(&self) -> u64;
    fn values(&self, rng: &mut ChaCha8Rng, z: &Coalition, paired: bool) -> (f64, Option<f64>);
}

struct DeterministicSource<'a> {
    game: &'a dyn Game,
    v0: f64,
    v1: f64,
}

impl<'a> DeterministicSource<'a> {
    fn new(game: &'a dyn Game) -> Self {
        let d = game.player_count();
        let v0 = game.evaluate(&Coalition::empty(d));
        let v1 = game.evaluate(&Coalition::grand(d));
        DeterministicSource { game, v0, v1 }
    }
}

impl SampleSource for DeterministicSource<'_> {
    fn player_count(&self) -> usize {
        self.game.player_count()
    }
    fn baseline(&self) -> f64 {
        self.v0
    }
    fn total(&self) -> f64 {
        self.v1 - self.v0
    }
    fn setup_evals(&self) -> u64 {
        2
    }
    fn values(&self, _rng: &mut ChaCha8Rng, z: &Coalition, paired: bool) -> (f64, Option<f64>) {
        let vz = self.game.evaluate(z);
        let vzc = if paired { Some(self.game.evaluate(&z.complement())) } else { None };
        (vz, vzc)
    }
}

struct StochasticSource<'a> {
    game: &'a dyn StochasticGame,
}

impl SampleSource for StochasticSource<'_> {
    fn player_count(&self) -> usize {
        self.game.player_count()
    }
    fn baseline(&self) -> f64 {
        self.game.empty_mean()
    }
    fn total(&self) -> f64 {
        self.game.grand_mean() - self.game.empty_mean()
    }
    fn setup_evals(&self) -> u64 {
        0
    }
    fn values(&self, rng: &mut ChaCha8Rng, z: &Coalition, paired: bool) -> (f64, Option<f64>) {
        let count = self.game.outcome_count();
        // A single-outcome game consumes no randomness, so it reproduces the
        // induced deterministic game's sample stream exactly.
        let u = if count > 1 { rng.gen_range(0..count) } else { 0 };
        let vz = self.game.evaluate(z, u);
        let vzc = if paired { Some(self.game.evaluate(&z.complement(), u)) } else { None };
        (vz, vzc)
    }
}

/// The dataset-sampling estimator on a deterministic game.
pub fn run_original(game: &dyn Game, cfg: &EstimatorConfig) -> Result<Estimate> {
    run_original_impl(&DeterministicSource::new(game), cfg)
}

/// The exact-moment unbiased estimator on a deterministic game.
pub fn run_unbiased(game: &dyn Game, cfg: &EstimatorConfig) -> Result<Estimate> {
    run_unbiased_impl(&DeterministicSource::new(game), cfg)
}

/// The dataset-sampling estimator on a stochastic game: each draw pairs an
/// independent coalition and exogenous outcome, and the constraint total is
/// the difference of the grand and empty means.
pub fn run_original_stochastic(
    game: &dyn StochasticGame,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    run_original_impl(&StochasticSource { game }, cfg)
}

/// The unbiased estimator on a stochastic game.
pub fn run_unbiased_stochastic(
    game: &dyn StochasticGame,
    cfg: &EstimatorConfig,
) -> Result<Estimate> {
    run_unbiased_impl(&StochasticSource { game }, cfg)
}

/// Runs the estimator selected by `cfg.variant` on a deterministic game.
pub fn estimate(game: &dyn Game, cfg: &EstimatorConfig) -> Result<Estimate> {
    match cfg.variant {
        Variant::Original => run_original(game, cfg),
        Variant::Unbiased => run_unbiased(game, cfg),
    }
}

/// Runs the estimator selected by `cfg.variant` on a stochastic game.
pub fn estimate_stochastic(game: &dyn StochasticGame, cfg: &EstimatorConfig) -> Result<Estimate> {
    match cfg.variant {
        Variant::Original => run_original_stochastic(game, cfg),
        Variant::Unbiased => run_unbiased_stochastic(game, cfg),
    }
}

/// With a single player the subset distribution has empty support; the one
/// value is pinned by the constraint and carries no uncertainty.
fn trivial_estimate(total: f64, game_evals: u64) -> Estimate {
    Estimate {
        values: vec![total],
        std_errors: Some(vec![0.0]),
        covariance: Some(vec![vec![0.0]]),
        n_samples: 0,
        game_evals,
        converged: true,
        spread_degenerate: false,
        skipped_intermediates: 0,
        forecasts: Vec::new(),
    }
}

fn fill_indicator(out: &mut DVector<f64>, z: &Coalition) {
    for (i, &bit) in z.bits().iter().enumerate() {
        out[i] = if bit { 1.0 } else { 0.0 };
    }
}

fn run_original_impl<S: SampleSource>(source: &S, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let d = source.player_count();
    if d == 0 {
        return Err(Error::Config("games must have at least one player".into()));
    }
    if d == 1 {
        return Ok(trivial_estimate(source.total(), source.setup_evals()));
    }

    let m = cfg.resolved_batch(d);
    let dist = SubsetDistribution::new(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let baseline = source.baseline();
    let total = source.total();

    let mut game_evals = source.setup_evals();
    let mut n: u64 = 0;
    let mut a_mean = DMatrix::zeros(d, d);
    let mut b_mean = DVector::zeros(d);
    let mut counter: usize = 0;
    let mut a_temp = DMatrix::zeros(d, d);
    let mut b_temp = DVector::zeros(d);
    let mut intermediates = VectorWelford::new(d);
    let mut skipped: u64 = 0;

    let mut b_sample = DVector::zeros(d);
    let mut z_vec = DVector::zeros(d);
    let mut zc_vec = DVector::zeros(d);

    let mut converged = false;
    let mut spread_degenerate = false;
    let mut forecasts = Vec::new();

    loop {
        if let Some(cap) = cfg.max_samples {
            if n >= cap {
                break;
            }
        }
        let z = dist.sample(&mut rng);
        let (vz, vzc) = source.values(&mut rng, &z, cfg.paired);
        game_evals += if cfg.paired { 2 } else { 1 };
        write_b_sample(&mut b_sample, &z, vz, vzc, baseline, Variant::Original);
        fill_indicator(&mut z_vec, &z);

        n += 1;
        counter += 1;
        let inv_n = 1.0 / n as f64;
        let inv_c = 1.0 / counter as f64;
        b_mean.axpy(inv_n, &b_sample, 1.0 - inv_n);
        b_temp.axpy(inv_c, &b_sample, 1.0 - inv_c);
        a_mean *= 1.0 - inv_n;
        a_temp *= 1.0 - inv_c;
        if cfg.paired {
            for (i, &bit) in z.bits().iter().enumerate() {
                zc_vec[i] = if bit { 0.0 } else { 1.0 };
            }
            a_mean.ger(0.5 * inv_n, &z_vec, &z_vec, 1.0);
            a_mean.ger(0.5 * inv_n, &zc_vec, &zc_vec, 1.0);
            a_temp.ger(0.5 * inv_c, &z_vec, &z_vec, 1.0);
            a_temp.ger(0.5 * inv_c, &zc_vec, &zc_vec, 1.0);
        } else {
            a_mean.ger(inv_n, &z_vec, &z_vec, 1.0);
            a_temp.ger(inv_c, &z_vec, &z_vec, 1.0);
        }

        if counter == m {
            match solve_constrained(&a_temp, b_temp.as_slice(), total) {
                Ok(beta_m) => intermediates.update(&DVector::from_vec(beta_m)),
                Err(Error::DegenerateSystem { .. }) | Err(Error::InsufficientSamples) => {
                    skipped += 1;
                }
                Err(e) => return Err(e),
            }
            counter = 0;
            a_temp.fill(0.0);
            b_temp.fill(0.0);

            if let Some(cov_m) = intermediates.sample_covariance() {
                if let Ok(beta_n) = solve_constrained(&a_mean, b_mean.as_slice(), total) {
                    let scale = m as f64 / n as f64;
                    let sigma: Vec<f64> =
                        (0..d).map(|i| (cov_m[(i, i)] * scale).max(0.0).sqrt()).collect();
                    match convergence_ratio(&sigma, &beta_n) {
                        Some(ratio) => {
                            spread_degenerate = false;
                            forecasts.push(ForecastPoint {
                                n,
                                predicted: forecast_samples(n, ratio, cfg.threshold),
                            });
                            if intermediates.count() >= MIN_INTERMEDIATE_ESTIMATES
                                && ratio < cfg.threshold
                            {
                                converged = true;
                            }
                        }
                        None => spread_degenerate = true,
                    }
                    if converged {
                        break;
                    }
                }
            }
        }
    }

    let values = match solve_constrained(&a_mean, b_mean.as_slice(), total) {
        Ok(values) => values,
        Err(Error::DegenerateSystem { .. }) => return Err(Error::InsufficientSamples),
        Err(e) => return Err(e),
    };
    let (std_errors, covariance) = match intermediates.sample_covariance() {
        Some(cov_m) if n > 0 => {
            let scale = m as f64 / n as f64;
            let sigma: Vec<f64> =
                (0..d).map(|i| (cov_m[(i, i)] * scale).max(0.0).sqrt()).collect();
            let cov: Vec<Vec<f64>> =
                (0..d).map(|i| (0..d).map(|j| cov_m[(i, j)] * scale).collect()).collect();
            (Some(sigma), Some(cov))
        }
        _ => (None, None),
    };

    Ok(Estimate {
        values,
        std_errors,
        covariance,
        n_samples: n,
        game_evals,
        converged,
        spread_degenerate,
        skipped_intermediates: skipped,
        forecasts,
    })
}

fn run_unbiased_impl<S: SampleSource>(source: &S, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let d = source.player_count();
    if d == 0 {
        return Err(Error::Config("games must have at least one player".into()));
    }
    if d == 1 {
        return Ok(trivial_estimate(source.total(), source.setup_evals()));
    }

    let m = cfg.resolved_batch(d);
    let moment = MomentMatrix::exact(d)?;
    let projection = compute_c_exact(&moment);
    let dist = SubsetDistribution::new(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let baseline = source.baseline();
    let total = source.total();

    let mut game_evals = source.setup_evals();
    let mut stats = VectorWelford::new(d);
    let mut b_sample = DVector::zeros(d);

    let mut converged = false;
    let mut spread_degenerate = false;
    let mut forecasts = Vec::new();

    loop {
        let n = stats.count();
        if let Some(cap) = cfg.max_samples {
            if n >= cap {
                break;
            }
        }
        let z = dist.sample(&mut rng);
        let (vz, vzc) = source.values(&mut rng, &z, cfg.paired);
        game_evals += if cfg.paired { 2 } else { 1 };
        write_b_sample(&mut b_sample, &z, vz, vzc, baseline, Variant::Unbiased);
        stats.update(&b_sample);
        let n = stats.count();

        if n % m as u64 == 0 {
            let beta = solve_constrained_exact(&moment, stats.mean().as_slice(), total);
            let sigma_beta = projection.propagate(&stats.population_covariance());
            let sigma: Vec<f64> =
                (0..d).map(|i| (sigma_beta[(i, i)] / n as f64).max(0.0).sqrt()).collect();
            match convergence_ratio(&sigma, &beta) {
                Some(ratio) => {
                    spread_degenerate = false;
                    forecasts.push(ForecastPoint {
                        n,
                        predicted: forecast_samples(n, ratio, cfg.threshold),
                    });
                    if n >= 2 && ratio < cfg.threshold {
                        converged = true;
                    }
                }
                None => spread_degenerate = true,
            }
            if converged {
                break;
            }
        }
    }

    let n = stats.count();
    if n == 0 {
        return Err(Error::InsufficientSamples);
    }
    let values = solve_constrained_exact(&moment, stats.mean().as_slice(), total);
    let sigma_beta = projection.propagate(&stats.population_covariance());
    let sigma: Vec<f64> =
        (0..d).map(|i| (sigma_beta[(i, i)] / n as f64).max(0.0).sqrt()).collect();
    let covariance: Vec<Vec<f64>> =
        (0..d).map(|i| (0..d).map(|j| sigma_beta[(i, j)] / n as f64).collect()).collect();

    Ok(Estimate {
        values,
        std_errors: Some(sigma),
        covariance: Some(covariance),
        n_samples: n,
        game_evals,
        converged,
        spread_degenerate,
        skipped_intermediates: 0,
        forecasts,
    })
}
