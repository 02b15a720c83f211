//! Ground-truth oracles and experiment harnesses: brute-force values by
//! subset enumeration, the enumerated weighted-least-squares route, bias and
//! variance decomposition, the pairing cross-covariance matrix, and trace
//! ratio studies at matched evaluation budgets.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{derive_seed, estimate, Estimate, EstimatorConfig, Variant};
use crate::games::{Coalition, ExpectedGame, Game, ScaledGame, StochasticGame};
use crate::kernel::{binomial, MomentMatrix, SubsetDistribution};
use crate::solver::solve_constrained_exact;

/// Enumeration cap for the direct brute-force oracle.
pub const EXACT_ENUMERATION_CAP: usize = 20;
/// Enumeration cap for the weighted-least-squares route and bias/variance
/// studies (which need the oracle as a reference).
pub const WLS_ENUMERATION_CAP: usize = 16;
/// Enumeration cap for stochastic games (full double enumeration).
pub const STOCHASTIC_ENUMERATION_CAP: usize = 16;
/// Enumeration cap for the pairing cross-covariance matrix.
pub const GV_ENUMERATION_CAP: usize = 12;

/// Exact values by direct enumeration of marginal contributions: for each
/// player, the average contribution over all orderings,
/// `(1/d) sum_S C(d-1,|S|)^{-1} (v(S+i) - v(S))`.
pub fn shapley_exact(game: &dyn Game) -> Result<Vec<f64>> {
    let d = game.player_count();
    if d == 0 {
        return Err(Error::Config("games must have at least one player".into()));
    }
    if d > EXACT_ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge { d, cap: EXACT_ENUMERATION_CAP });
    }
    let table = value_table(game);
    Ok(shapley_from_table(&table, d))
}

/// Exact generalized values of a stochastic game with enumerable outcomes:
/// averages the game over the exogenous variable by a full double
/// enumeration, then applies the deterministic oracle to the expectation.
pub fn shapley_exact_stochastic(game: &dyn StochasticGame) -> Result<Vec<f64>> {
    let d = game.player_count();
    if d == 0 {
        return Err(Error::Config("games must have at least one player".into()));
    }
    if d > STOCHASTIC_ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge { d, cap: STOCHASTIC_ENUMERATION_CAP });
    }
    if game.outcome_count() == 0 {
        return Err(Error::Config("stochastic games need at least one outcome".into()));
    }
    let expected = ExpectedGame::new(game);
    let table = value_table(&expected);
    Ok(shapley_from_table(&table, d))
}

/// The second oracle route: enumerate the exact moment vector
/// `b = sum_z p(z) z (v(z) - v(0))` under the subset distribution and solve
/// with the exact moment matrix. Agrees with [`shapley_exact`] on every
/// game; the two routes check each other.
pub fn exact_wls(game: &dyn Game) -> Result<Vec<f64>> {
    let d = game.player_count();
    if d == 0 {
        return Err(Error::Config("games must have at least one player".into()));
    }
    if d > WLS_ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge { d, cap: WLS_ENUMERATION_CAP });
    }
    let v0 = game.evaluate(&Coalition::empty(d));
    let v1 = game.evaluate(&Coalition::grand(d));
    if d == 1 {
        return Ok(vec![v1 - v0]);
    }
    let dist = SubsetDistribution::new(d)?;
    let mut b = vec![0.0; d];
    for mask in 1u64..((1 << d) - 1) {
        let z = Coalition::from_mask(mask, d);
        let p = dist.coalition_probability(z.size());
        let dv = game.evaluate(&z) - v0;
        for i in z.iter_ones() {
            b[i] += p * dv;
        }
    }
    let moment = MomentMatrix::exact(d)?;
    Ok(solve_constrained_exact(&moment, &b, v1 - v0))
}

fn value_table(game: &dyn Game) -> Vec<f64> {
    let d = game.player_count();
    (0..(1u64 << d)).map(|mask| game.evaluate(&Coalition::from_mask(mask, d))).collect()
}

fn shapley_from_table(table: &[f64], d: usize) -> Vec<f64> {
    let weights: Vec<f64> =
        (0..d).map(|s| 1.0 / (d as f64 * binomial(d - 1, s))).collect();
    let mut phi = vec![0.0; d];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for (mask, &v) in table.iter().enumerate() {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                *phi_i += weights[s] * (table[mask | bit] - v);
            }
        }
    }
    phi
}

/// An estimator variant with its pairing flag, for experiment tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariantSpec {
    pub variant: Variant,
    pub paired: bool,
}

impl VariantSpec {
    pub const ALL: [VariantSpec; 4] = [
        VariantSpec { variant: Variant::Unbiased, paired: false },
        VariantSpec { variant: Variant::Unbiased, paired: true },
        VariantSpec { variant: Variant::Original, paired: false },
        VariantSpec { variant: Variant::Original, paired: true },
    ];

    pub fn label(&self) -> &'static str {
        match (self.variant, self.paired) {
            (Variant::Original, false) => "original",
            (Variant::Original, true) => "original_paired",
            (Variant::Unbiased, false) => "unbiased",
            (Variant::Unbiased, true) => "unbiased_paired",
        }
    }

    /// Samples affordable within a game-evaluation budget (paired runs
    /// consume two evaluations per sample).
    pub fn samples_for_budget(&self, evals: u64) -> u64 {
        if self.paired {
            (evals / 2).max(1)
        } else {
            evals.max(1)
        }
    }
}

/// Per-coordinate error decomposition against the oracle.
#[derive(Debug, Clone, Serialize)]
pub struct CoordinateStats {
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
}

/// Empirical bias/variance decomposition of an estimator at a fixed sample
/// count, against the enumeration oracle, on the game rescaled to unit
/// value spread.
#[derive(Debug, Clone, Serialize)]
pub struct BiasVarianceReport {
    pub variant: Variant,
    pub paired: bool,
    pub n: u64,
    pub runs: u32,
    pub per_coordinate: Vec<CoordinateStats>,
    /// Squared norm of the mean deviation from the oracle.
    pub bias_sq: f64,
    /// Expected squared deviation from the run mean, summed over coordinates.
    pub variance: f64,
    /// `bias_sq + variance` up to rounding.
    pub mse: f64,
}

impl BiasVarianceReport {
    /// One row per coordinate plus an aggregate row. The aggregate bias
    /// column holds the squared norm; coordinate rows hold signed biases.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("coordinate,bias,variance,mse\n");
        for (i, c) in self.per_coordinate.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", i, c.bias, c.variance, c.mse));
        }
        out.push_str(&format!("aggregate,{},{},{}\n", self.bias_sq, self.variance, self.mse));
        out
    }
}

/// Runs the configured estimator `runs` times at a fixed sample count and
/// decomposes the error against the oracle. Games are rescaled to unit
/// value spread first so reports are comparable across games.
pub fn bias_variance(
    game: &dyn Game,
    variant: Variant,
    paired: bool,
    n: u64,
    runs: u32,
    seed: u64,
) -> Result<BiasVarianceReport> {
    let d = game.player_count();
    if d > WLS_ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge { d, cap: WLS_ENUMERATION_CAP });
    }
    if runs == 0 || n == 0 {
        return Err(Error::Config("bias/variance needs runs >= 1 and n >= 1".into()));
    }
    let table = value_table(game);
    let spread = value_spread(&table);
    let scale = if spread > 0.0 { 1.0 / spread } else { 1.0 };
    let scaled = ScaledGame::new(game, scale, 0.0);
    let oracle: Vec<f64> = shapley_from_table(&table, d).iter().map(|p| p * scale).collect();

    let estimates = run_many(&scaled, VariantSpec { variant, paired }, n, runs, seed)?;
    let mut mean = vec![0.0; d];
    for est in &estimates {
        for i in 0..d {
            mean[i] += est.values[i];
        }
    }
    for m in &mut mean {
        *m /= runs as f64;
    }

    let mut per_coordinate = Vec::with_capacity(d);
    let mut bias_sq = 0.0;
    let mut variance = 0.0;
    let mut mse = 0.0;
    for i in 0..d {
        let bias = mean[i] - oracle[i];
        let mut var_i = 0.0;
        let mut mse_i = 0.0;
        for est in &estimates {
            let dev = est.values[i] - mean[i];
            var_i += dev * dev;
            let err = est.values[i] - oracle[i];
            mse_i += err * err;
        }
        var_i /= runs as f64;
        mse_i /= runs as f64;
        per_coordinate.push(CoordinateStats { bias, variance: var_i, mse: mse_i });
        bias_sq += bias * bias;
        variance += var_i;
        mse += mse_i;
    }

    Ok(BiasVarianceReport { variant, paired, n, runs, per_coordinate, bias_sq, variance, mse })
}

fn value_spread(table: &[f64]) -> f64 {
    let max = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = table.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// Runs the configured estimator `runs` times at fixed `n` with seeds
/// derived per run, in parallel, preserving run order.
fn run_many(
    game: &dyn Game,
    spec: VariantSpec,
    n: u64,
    runs: u32,
    seed: u64,
) -> Result<Vec<Estimate>> {
    // A threshold this small never stops a run with real sampling noise, so
    // every run consumes exactly n samples.
    let base = EstimatorConfig::new(spec.variant)
        .with_paired(spec.paired)
        .with_threshold(1e-9)
        .with_max_samples(n);
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let cfg =
                EstimatorConfig { seed: derive_seed(seed, i as u64), ..base.clone() };
            estimate(game, &cfg)
        })
        .collect()
}

/// Trace of the empirical covariance of the estimator's values at a fixed
/// sample count, across seeded runs.
pub fn covariance_trace(
    game: &dyn Game,
    spec: VariantSpec,
    n: u64,
    runs: u32,
    seed: u64,
) -> Result<f64> {
    if runs < 2 {
        return Err(Error::Config("covariance trace needs at least 2 runs".into()));
    }
    let d = game.player_count();
    let estimates = run_many(game, spec, n, runs, seed)?;
    let mut mean = vec![0.0; d];
    for est in &estimates {
        for i in 0..d {
            mean[i] += est.values[i];
        }
    }
    for m in &mut mean {
        *m /= runs as f64;
    }
    let mut trace = 0.0;
    for est in &estimates {
        for i in 0..d {
            let dev = est.values[i] - mean[i];
            trace += dev * dev;
        }
    }
    Ok(trace / runs as f64)
}

/// Ratio of empirical covariance traces at matched game-evaluation budgets:
/// `tr(Cov(baseline)) / tr(Cov(method))`. Above one, the method needs fewer
/// samples than the baseline for the same precision.
pub fn speedup_ratio(
    game: &dyn Game,
    baseline: VariantSpec,
    method: VariantSpec,
    evals: u64,
    runs: u32,
    seed: u64,
) -> Result<f64> {
    let baseline_trace =
        covariance_trace(game, baseline, baseline.samples_for_budget(evals), runs, derive_seed(seed, 1))?;
    let method_trace =
        covariance_trace(game, method, method.samples_for_budget(evals), runs, derive_seed(seed, 2))?;
    Ok(baseline_trace / method_trace)
}

/// The pairing cross-covariance matrix
/// `G_v = -Cov(Z v(Z), (1-Z) v(1-Z))` by exact enumeration under the
/// subset distribution. Its diagonal is nonnegative for every game; full
/// positive semidefiniteness certifies that pairing reduces variance, and
/// is reported (never asserted) via the smallest eigenvalue.
#[derive(Debug, Clone, Serialize)]
pub struct GvReport {
    pub matrix: Vec<Vec<f64>>,
    pub min_diag: f64,
    pub min_eigenvalue: f64,
}

impl GvReport {
    /// One row per coordinate (the diagonal entry) plus an aggregate row
    /// carrying the minimum diagonal and minimum eigenvalue.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("coordinate,diag,min_diag,min_eigenvalue\n");
        for (i, row) in self.matrix.iter().enumerate() {
            out.push_str(&format!("{},{},,\n", i, row[i]));
        }
        out.push_str(&format!("aggregate,,{},{}\n", self.min_diag, self.min_eigenvalue));
        out
    }
}

pub fn gv_matrix(game: &dyn Game) -> Result<GvReport> {
    let d = game.player_count();
    if d < 2 {
        return Err(Error::Config("the pairing matrix needs at least 2 players".into()));
    }
    if d > GV_ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge { d, cap: GV_ENUMERATION_CAP });
    }
    let dist = SubsetDistribution::new(d)?;
    let table = value_table(game);
    let full = (1usize << d) - 1;

    let mut e_xy: DMatrix<f64> = DMatrix::zeros(d, d);
    let mut e_x = vec![0.0; d];
    let mut e_y = vec![0.0; d];
    for mask in 1..full {
        let z = Coalition::from_mask(mask as u64, d);
        let p = dist.coalition_probability(z.size());
        let vz = table[mask];
        let vzc = table[full ^ mask];
        for i in 0..d {
            let zi = if z.contains(i) { 1.0 } else { 0.0 };
            e_x[i] += p * zi * vz;
            e_y[i] += p * (1.0 - zi) * vzc;
            for j in 0..d {
                let zj_c = if z.contains(j) { 0.0 } else { 1.0 };
                e_xy[(i, j)] += p * zi * zj_c * vz * vzc;
            }
        }
    }
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            g[(i, j)] = -(e_xy[(i, j)] - e_x[i] * e_y[j]);
        }
    }
    // Enumeration leaves only rounding-level asymmetry; symmetrize for the
    // eigensolver.
    let g_sym = (&g + g.transpose()) * 0.5;
    debug_assert!((&g - &g_sym).abs().max() < 1e-10);

    let min_diag = (0..d).map(|i| g_sym[(i, i)]).fold(f64::INFINITY, f64::min);
    let min_eigenvalue =
        g_sym.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    let matrix = (0..d).map(|i| (0..d).map(|j| g_sym[(i, j)]).collect()).collect();
    Ok(GvReport { matrix, min_diag, min_eigenvalue })
}

/// Forecast accuracy across repeated runs to convergence: how often the
/// half-way forecast lands within a factor of two of the final sample
/// count, and how the relative forecast error evolves.
#[derive(Debug, Clone, Serialize)]
pub struct ForecastSummary {
    pub runs: u32,
    pub converged_runs: u32,
    /// Fraction of converged runs whose forecast at half the final count
    /// was within `[0.5, 2] x` the final count.
    pub within_factor_two: f64,
    /// Median relative error of the forecast made near a quarter of the
    /// final count (`None` if no run had a forecast that early).
    pub median_rel_error_quarter: Option<f64>,
    /// Median relative error of the forecast made near half the final count.
    pub median_rel_error_half: Option<f64>,
}

pub fn forecast_accuracy(
    game: &dyn Game,
    cfg: &EstimatorConfig,
    runs: u32,
    seed: u64,
) -> Result<ForecastSummary> {
    if cfg.max_samples.is_none() {
        return Err(Error::Config("forecast studies need a max_samples cap".into()));
    }
    let estimates: Vec<Estimate> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let run_cfg = EstimatorConfig { seed: derive_seed(seed, i as u64), ..cfg.clone() };
            estimate(game, &run_cfg)
        })
        .collect::<Result<_>>()?;

    let mut within = 0u32;
    let mut converged_runs = 0u32;
    let mut quarter_errors = Vec::new();
    let mut half_errors = Vec::new();
    for est in &estimates {
        if !est.converged {
            continue;
        }
        converged_runs += 1;
        let n_true = est.n_samples;
        let at = |limit: u64| {
            est.forecasts.iter().filter(|f| f.n <= limit).max_by_key(|f| f.n)
        };
        if let Some(f) = at(n_true / 2) {
            let ratio = f.predicted as f64 / n_true as f64;
            if (0.5..=2.0).contains(&ratio) {
                within += 1;
            }
            half_errors.push((ratio - 1.0).abs());
        }
        if let Some(f) = at(n_true / 4) {
            quarter_errors.push((f.predicted as f64 / n_true as f64 - 1.0).abs());
        }
    }

    Ok(ForecastSummary {
        runs,
        converged_runs,
        within_factor_two: if converged_runs > 0 {
            within as f64 / converged_runs as f64
        } else {
            0.0
        },
        median_rel_error_quarter: median(&mut quarter_errors),
        median_rel_error_half: median(&mut half_errors),
    })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}
