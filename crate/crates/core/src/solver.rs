//! The constrained weighted-least-squares solve shared by every estimator:
//! minimize the quadratic with moment matrix `A` and moment vector `b`
//! subject to the values summing to `v(1) - v(0)`, plus the projection
//! matrix `C` that propagates covariance from `b` to the solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::games::Coalition;
use crate::kernel::{empirical_a, MomentMatrix};

/// Condition-number cutoff above which a system is treated as degenerate.
pub const CONDITION_LIMIT: f64 = 1e10;

const SYMMETRY_TOL: f64 = 1e-10;

/// Solves `min_beta beta^T A beta - 2 beta^T b` subject to `1^T beta = total`
/// for a dense symmetric positive-definite `A`:
/// `beta = A^{-1} (b - 1 (1^T A^{-1} b - total) / (1^T A^{-1} 1))`.
///
/// Signals a degenerate-system error when `A` is singular or its condition
/// estimate exceeds [`CONDITION_LIMIT`].
pub fn solve_constrained(a: &DMatrix<f64>, b: &[f64], total: f64) -> Result<Vec<f64>> {
    let d = check_system(a, b.len())?;
    let chol = nalgebra::Cholesky::new(a.clone())
        .ok_or(Error::DegenerateSystem { condition: f64::INFINITY })?;
    let inv_b = chol.solve(&DVector::from_column_slice(b));
    let inv_ones = chol.solve(&DVector::from_element(d, 1.0));
    let ones_quad: f64 = inv_ones.sum();
    if !ones_quad.is_finite() || ones_quad.abs() < f64::EPSILON {
        return Err(Error::DegenerateSystem { condition: f64::INFINITY });
    }
    let correction = (inv_b.sum() - total) / ones_quad;
    Ok((0..d).map(|i| inv_b[i] - correction * inv_ones[i]).collect())
}

/// The `O(d)` closed-form constrained solve for the exact moment matrix,
/// using its rank-one-update inverse.
pub fn solve_constrained_exact(a: &MomentMatrix, b: &[f64], total: f64) -> Vec<f64> {
    debug_assert_eq!(b.len(), a.player_count());
    let inv_b = a.inverse_apply(b);
    let ones_quad = a.ones_quadratic_inverse();
    let correction = (inv_b.iter().sum::<f64>() - total) / ones_quad;
    // A^{-1} 1 has all entries 1/(a + d c) = ones_quad / d.
    let inv_ones_entry = ones_quad / a.player_count() as f64;
    inv_b.iter().map(|x| x - correction * inv_ones_entry).collect()
}

/// The covariance-propagation matrix
/// `C = A^{-1} - A^{-1} 1 1^T A^{-1} / (1^T A^{-1} 1)`.
///
/// `C` annihilates the constraint direction (`C 1 = 0`) and is the linear
/// part of the constrained solution's affine dependence on `b`.
#[derive(Debug, Clone)]
pub struct CMatrix {
    matrix: DMatrix<f64>,
}

impl CMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Propagates a covariance of `b` to a covariance of the solution:
    /// `C sigma C^T`.
    pub fn propagate(&self, sigma_b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * sigma_b * self.matrix.transpose()
    }
}

/// Computes `C` for a dense symmetric positive-definite `A`.
pub fn compute_c(a: &DMatrix<f64>) -> Result<CMatrix> {
    let d = check_system(a, a.nrows())?;
    let chol = nalgebra::Cholesky::new(a.clone())
        .ok_or(Error::DegenerateSystem { condition: f64::INFINITY })?;
    let inverse = chol.inverse();
    let inv_ones = &inverse * DVector::from_element(d, 1.0);
    let ones_quad = inv_ones.sum();
    if !ones_quad.is_finite() || ones_quad.abs() < f64::EPSILON {
        return Err(Error::DegenerateSystem { condition: f64::INFINITY });
    }
    let matrix = inverse - (&inv_ones * inv_ones.transpose()) / ones_quad;
    Ok(CMatrix { matrix })
}

/// Computes `C` for the exact moment matrix. The rank-one-update inverse
/// collapses to `C = (I - 11^T/d) / (diag - offdiag)`.
pub fn compute_c_exact(a: &MomentMatrix) -> CMatrix {
    let d = a.player_count();
    let scale = 1.0 / a.identity_coefficient();
    let mut matrix = DMatrix::from_element(d, d, -scale / d as f64);
    for i in 0..d {
        matrix[(i, i)] += scale;
    }
    CMatrix { matrix }
}

/// The original sampled estimator: builds the empirical moments from a
/// coalition/value sample and solves with `total = v1 - v0`.
///
/// A singular empirical moment matrix signals an insufficient-samples
/// error; the caller may add more samples and retry.
pub fn solve_empirical(samples: &[(Coalition, f64)], v0: f64, v1: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples);
    }
    let coalitions: Vec<Coalition> = samples.iter().map(|(z, _)| z.clone()).collect();
    let a = empirical_a(&coalitions)?;
    let d = a.nrows();
    let mut b = vec![0.0; d];
    for (z, value) in samples {
        for i in z.iter_ones() {
            b[i] += value - v0;
        }
    }
    for bi in &mut b {
        *bi /= samples.len() as f64;
    }
    match solve_constrained(&a, &b, v1 - v0) {
        Ok(beta) => Ok(beta),
        Err(Error::DegenerateSystem { .. }) => Err(Error::InsufficientSamples),
        Err(e) => Err(e),
    }
}

/// Validates shape, symmetry, and conditioning; returns the dimension.
fn check_system(a: &DMatrix<f64>, b_len: usize) -> Result<usize> {
    let d = a.nrows();
    if a.ncols() != d || d == 0 {
        return Err(Error::Config(format!("matrix must be square, got {}x{}", d, a.ncols())));
    }
    if b_len != d {
        return Err(Error::Config(format!("vector length {b_len} does not match dimension {d}")));
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::Config("matrix is not symmetric".into()));
            }
        }
    }
    let eigenvalues = a.clone().symmetric_eigenvalues();
    let max_eig = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(Error::DegenerateSystem { condition: f64::INFINITY });
    }
    let condition = max_eig / min_eig;
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::DegenerateSystem { condition });
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{Coalition, Game, InessentialGame, UnanimityGame};
    use crate::kernel::SubsetDistribution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Enumerates `b = sum_z p(z) z (v(z) - v(0))` for a small game.
    fn enumerate_b(game: &dyn Game) -> Vec<f64> {
        let d = game.player_count();
        let dist = SubsetDistribution::new(d).unwrap();
        let v0 = game.evaluate(&Coalition::empty(d));
        let mut b = vec![0.0; d];
        for mask in 1u64..((1 << d) - 1) {
            let z = Coalition::from_mask(mask, d);
            let p = dist.coalition_probability(z.size());
            let dv = game.evaluate(&z) - v0;
            for i in z.iter_ones() {
                b[i] += p * dv;
            }
        }
        b
    }

    #[test]
    fn exact_a_with_enumerated_b_recovers_unanimity_values() {
        let game = UnanimityGame::new(3, vec![0, 1]).unwrap();
        let b = enumerate_b(&game);
        let a = MomentMatrix::exact(3).unwrap();
        let total = game.evaluate(&Coalition::grand(3)) - game.evaluate(&Coalition::empty(3));
        let beta = solve_constrained(&a.to_dense(), &b, total).unwrap();
        let expected = [0.5, 0.5, 0.0];
        for i in 0..3 {
            assert!((beta[i] - expected[i]).abs() < 1e-12, "beta = {beta:?}");
        }
    }

    #[test]
    fn exact_and_dense_paths_agree() {
        for d in [2usize, 3, 6, 11] {
            let a = MomentMatrix::exact(d).unwrap();
            let b: Vec<f64> = (0..d).map(|i| ((i * i) as f64 * 0.13).cos()).collect();
            let total = 0.77;
            let fast = solve_constrained_exact(&a, &b, total);
            let dense = solve_constrained(&a.to_dense(), &b, total).unwrap();
            for i in 0..d {
                assert!((fast[i] - dense[i]).abs() < 1e-12, "d={d} i={i}");
            }
        }
    }

    #[test]
    fn solution_sums_to_total() {
        let a = MomentMatrix::exact(7).unwrap();
        for (seed, total) in [(1u64, 2.0), (2, -13.5), (3, 0.0)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = (0..7).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            let beta = solve_constrained_exact(&a, &b, total);
            assert!((beta.iter().sum::<f64>() - total).abs() < 1e-10);
            let beta = solve_constrained(&a.to_dense(), &b, total).unwrap();
            assert!((beta.iter().sum::<f64>() - total).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_lagrange_correction_leaves_unconstrained_solution() {
        // Choose b so that 1^T A^{-1} b already equals the total.
        let a = MomentMatrix::exact(4).unwrap();
        let b = vec![0.3, -0.1, 0.25, 0.05];
        let unconstrained = a.inverse_apply(&b);
        let total: f64 = unconstrained.iter().sum();
        let beta = solve_constrained_exact(&a, &b, total);
        for i in 0..4 {
            assert!((beta[i] - unconstrained[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn c_matrix_annihilates_ones_and_is_symmetric() {
        for d in [2usize, 3, 8] {
            let a = MomentMatrix::exact(d).unwrap();
            for c in [compute_c_exact(&a), compute_c(&a.to_dense()).unwrap()] {
                let m = c.matrix();
                let row_sums = m * DVector::from_element(d, 1.0);
                for i in 0..d {
                    assert!(row_sums[i].abs() < 1e-12, "d={d}");
                    for j in 0..d {
                        assert!((m[(i, j)] - m[(j, i)]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn c_matrix_hand_value_d2() {
        // A = I/2, A^{-1} = 2I, 1^T A^{-1} 1 = 4: C = 2I - 11^T.
        let c = compute_c_exact(&MomentMatrix::exact(2).unwrap());
        let m = c.matrix();
        assert!((m[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((m[(1, 1)] - 1.0).abs() < 1e-12);
        assert!((m[(0, 1)] + 1.0).abs() < 1e-12);
        assert!((m[(1, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_and_dense_c_agree() {
        for d in [2usize, 5, 9] {
            let a = MomentMatrix::exact(d).unwrap();
            let fast = compute_c_exact(&a);
            let dense = compute_c(&a.to_dense()).unwrap();
            let diff = (fast.matrix() - dense.matrix()).abs().max();
            assert!(diff < 1e-12, "d={d}: {diff}");
        }
    }

    #[test]
    fn solution_is_affine_in_b_with_linear_part_c() {
        let d = 5;
        let a = MomentMatrix::exact(d).unwrap().to_dense();
        let c = compute_c(&a).unwrap();
        let b0: Vec<f64> = (0..d).map(|i| (i as f64 + 1.0) * 0.11).collect();
        let beta0 = solve_constrained(&a, &b0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let delta: Vec<f64> =
                (0..d).map(|_| rand::Rng::gen_range(&mut rng, -0.5..0.5)).collect();
            let b1: Vec<f64> = b0.iter().zip(&delta).map(|(x, dx)| x + dx).collect();
            let beta1 = solve_constrained(&a, &b1, 1.0).unwrap();
            let predicted = c.matrix() * DVector::from_column_slice(&delta);
            for i in 0..d {
                assert!((beta1[i] - beta0[i] - predicted[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn full_enumeration_sample_recovers_unanimity_values() {
        // d=3: all interior coalitions are equally likely, so multiplicity 1
        // each is an exact draw from p(z).
        let game = UnanimityGame::new(3, vec![0, 1]).unwrap();
        let samples: Vec<(Coalition, f64)> = (1u64..7)
            .map(|mask| {
                let z = Coalition::from_mask(mask, 3);
                let v = game.evaluate(&z);
                (z, v)
            })
            .collect();
        let beta = solve_empirical(&samples, 0.0, 1.0).unwrap();
        let expected = [0.5, 0.5, 0.0];
        for i in 0..3 {
            assert!((beta[i] - expected[i]).abs() < 1e-8, "beta = {beta:?}");
        }
    }

    #[test]
    fn multiplicity_weighted_enumeration_matches_exact_values_d4() {
        // d=4: p(z) is 1/11, 1/22, 1/11 by size; multiplicities 2,1,2 give
        // an exact empirical draw. The fitted values must match the
        // brute-force Shapley values of the game.
        let game = UnanimityGame::new(4, vec![0]).unwrap();
        let mut samples = Vec::new();
        for mask in 1u64..15 {
            let z = Coalition::from_mask(mask, 4);
            let copies = match z.size() {
                1 | 3 => 2,
                2 => 1,
                _ => unreachable!(),
            };
            let v = game.evaluate(&z);
            for _ in 0..copies {
                samples.push((z.clone(), v));
            }
        }
        let beta = solve_empirical(&samples, 0.0, 1.0).unwrap();
        let expected = [1.0, 0.0, 0.0, 0.0];
        for i in 0..4 {
            assert!((beta[i] - expected[i]).abs() < 1e-8, "beta = {beta:?}");
        }
    }

    #[test]
    fn inessential_game_is_recovered_exactly_from_any_invertible_sample() {
        let game = InessentialGame::new(0.7, vec![1.5, -2.0, 0.25, 3.0]).unwrap();
        let dist = SubsetDistribution::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let samples: Vec<(Coalition, f64)> = (0..40)
            .map(|_| {
                let z = dist.sample(&mut rng);
                let v = game.evaluate(&z);
                (z, v)
            })
            .collect();
        let v0 = game.evaluate(&Coalition::empty(4));
        let v1 = game.evaluate(&Coalition::grand(4));
        let beta = solve_empirical(&samples, v0, v1).unwrap();
        for (b, c) in beta.iter().zip(game.coefficients()) {
            assert!((b - c).abs() < 1e-10);
        }
    }

    #[test]
    fn repeated_single_coalition_is_insufficient() {
        let z = Coalition::from_mask(0b011, 3);
        let samples = vec![(z.clone(), 1.0), (z.clone(), 1.0), (z, 1.0)];
        assert!(matches!(solve_empirical(&samples, 0.0, 1.0), Err(Error::InsufficientSamples)));
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let mut a = MomentMatrix::exact(3).unwrap().to_dense();
        a[(0, 1)] += 1e-6;
        assert!(matches!(
            solve_constrained(&a, &[1.0, 2.0, 3.0], 1.0),
            Err(Error::Config(_))
        ));
    }
}
