//! Explanation games over tabular models: per-prediction attribution (a
//! deterministic game) and the two global methods (stochastic games whose
//! exogenous variable ranges over dataset rows).

use crate::error::{Error, Result};
use crate::games::model::{Loss, ModelKind, TabularModel};
use crate::games::{Coalition, Game, StochasticGame};

/// The per-prediction attribution game: `v(z)` is the model prediction at
/// `instance` with the features outside `z` marginalized over the background.
pub struct ShapGame {
    model: TabularModel,
    instance: Vec<f64>,
}

/// Builds the attribution game for one instance.
pub fn shap_game(model: TabularModel, instance: Vec<f64>) -> Result<ShapGame> {
    if instance.len() != model.feature_count() {
        return Err(Error::Config(format!(
            "instance has {} features, model expects {}",
            instance.len(),
            model.feature_count()
        )));
    }
    if instance.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("instance values must be finite".into()));
    }
    Ok(ShapGame { model, instance })
}

impl ShapGame {
    pub fn instance(&self) -> &[f64] {
        &self.instance
    }

    pub fn model(&self) -> &TabularModel {
        &self.model
    }
}

impl Game for ShapGame {
    fn player_count(&self) -> usize {
        self.model.feature_count()
    }

    fn evaluate(&self, coalition: &Coalition) -> f64 {
        self.model.restricted_predict(&self.instance, coalition)
    }
}

/// The global importance game: `V(z, u)` is the negated loss of the
/// restricted prediction against the label of dataset row `u`.
pub struct SageGame {
    model: TabularModel,
    rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
    loss: Loss,
    grand: f64,
    empty: f64,
}

/// Builds the global importance game over a labeled dataset. The exogenous
/// variable is a uniform draw of a (row, label) pair; the grand and empty
/// means are computed by a full pass at construction.
pub fn sage_game(
    model: TabularModel,
    rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
    loss: Loss,
) -> Result<SageGame> {
    if rows.len() != labels.len() {
        return Err(Error::Config(format!(
            "dataset has {} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    validate_rows(&model, &rows)?;
    match loss {
        Loss::Squared => {}
        Loss::CrossEntropy => {
            if model.kind() != ModelKind::Logistic {
                return Err(Error::Config("cross-entropy loss requires a logistic model".into()));
            }
            if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
                return Err(Error::Config("cross-entropy loss requires labels in {0,1}".into()));
            }
        }
        Loss::SoftCrossEntropy => {
            return Err(Error::Config(
                "soft cross-entropy is the sensitivity-game loss; use cross_entropy here".into(),
            ));
        }
    }
    let mut game = SageGame { model, rows, labels, loss, grand: 0.0, empty: 0.0 };
    let (grand, empty) = coalition_means(&game);
    game.grand = grand;
    game.empty = empty;
    Ok(game)
}

impl StochasticGame for SageGame {
    fn player_count(&self) -> usize {
        self.model.feature_count()
    }

    fn outcome_count(&self) -> usize {
        self.rows.len()
    }

    fn evaluate(&self, coalition: &Coalition, outcome: usize) -> f64 {
        let prediction = self.model.restricted_predict(&self.rows[outcome], coalition);
        -self.loss.evaluate(prediction, self.labels[outcome])
    }

    fn grand_mean(&self) -> f64 {
        self.grand
    }

    fn empty_mean(&self) -> f64 {
        self.empty
    }
}

/// The sensitivity game: like the importance game, but the loss is taken
/// against the model's own full prediction, so the exogenous variable is
/// the input row alone.
pub struct ShapleyEffectsGame {
    model: TabularModel,
    rows: Vec<Vec<f64>>,
    full_predictions: Vec<f64>,
    loss: Loss,
    grand: f64,
    empty: f64,
}

/// Builds the sensitivity game over a dataset (no labels needed).
pub fn shapley_effects_game(
    model: TabularModel,
    rows: Vec<Vec<f64>>,
    loss: Loss,
) -> Result<ShapleyEffectsGame> {
    validate_rows(&model, &rows)?;
    match loss {
        Loss::Squared | Loss::SoftCrossEntropy => {}
        Loss::CrossEntropy => {
            return Err(Error::Config(
                "the sensitivity game compares against soft predictions; use soft_cross_entropy"
                    .into(),
            ));
        }
    }
    if loss == Loss::SoftCrossEntropy && model.kind() != ModelKind::Logistic {
        return Err(Error::Config("soft cross-entropy loss requires a logistic model".into()));
    }
    let full_predictions = rows.iter().map(|r| model.predict(r)).collect();
    let mut game =
        ShapleyEffectsGame { model, rows, full_predictions, loss, grand: 0.0, empty: 0.0 };
    let (grand, empty) = coalition_means(&game);
    game.grand = grand;
    game.empty = empty;
    Ok(game)
}

impl StochasticGame for ShapleyEffectsGame {
    fn player_count(&self) -> usize {
        self.model.feature_count()
    }

    fn outcome_count(&self) -> usize {
        self.rows.len()
    }

    fn evaluate(&self, coalition: &Coalition, outcome: usize) -> f64 {
        let prediction = self.model.restricted_predict(&self.rows[outcome], coalition);
        -self.loss.evaluate(prediction, self.full_predictions[outcome])
    }

    fn grand_mean(&self) -> f64 {
        self.grand
    }

    fn empty_mean(&self) -> f64 {
        self.empty
    }
}

fn validate_rows(model: &TabularModel, rows: &[Vec<f64>]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("dataset must have at least one row".into()));
    }
    for row in rows {
        if row.len() != model.feature_count() {
            return Err(Error::Config(format!(
                "dataset row has {} features, model expects {}",
                row.len(),
                model.feature_count()
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("dataset values must be finite".into()));
        }
    }
    Ok(())
}

/// Full-pass means of `V(1, u)` and `V(0, u)` over all outcomes.
fn coalition_means<G: StochasticGame>(game: &G) -> (f64, f64) {
    let d = game.player_count();
    let grand_z = Coalition::grand(d);
    let empty_z = Coalition::empty(d);
    let count = game.outcome_count() as f64;
    let grand = (0..game.outcome_count()).map(|u| game.evaluate(&grand_z, u)).sum::<f64>() / count;
    let empty = (0..game.outcome_count()).map(|u| game.evaluate(&empty_z, u)).sum::<f64>() / count;
    (grand, empty)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_model(coefficients: Vec<f64>, intercept: f64, background: Vec<Vec<f64>>) -> TabularModel {
        TabularModel::new(ModelKind::Linear, coefficients, intercept, background).unwrap()
    }

    #[test]
    fn grand_coalition_is_the_plain_prediction() {
        let model = linear_model(vec![1.0, 2.0, -0.5], 0.3, vec![vec![5.0, 5.0, 5.0], vec![0.0, 1.0, 2.0]]);
        let instance = vec![1.0, -1.0, 2.0];
        let direct = model.predict(&instance);
        let game = shap_game(model, instance).unwrap();
        let v1 = game.evaluate(&Coalition::grand(3));
        assert!((v1 - direct).abs() < 1e-12);
    }

    #[test]
    fn empty_coalition_is_the_mean_background_prediction() {
        let model = linear_model(vec![1.0, 2.0], 0.0, vec![vec![0.0, 0.0], vec![2.0, 2.0]]);
        let expected = (model.predict(&[0.0, 0.0]) + model.predict(&[2.0, 2.0])) / 2.0;
        let game = shap_game(model, vec![1.0, 1.0]).unwrap();
        let v0 = game.evaluate(&Coalition::empty(2));
        assert!((v0 - expected).abs() < 1e-12);
    }

    #[test]
    fn single_player_coalition_mixes_background() {
        // f(x) = x1 + 2 x2, instance (1,1), background {(0,0),(2,2)}:
        // v({1}) = mean(f(1,0), f(1,2)) = mean(1, 5) = 3.
        let model = linear_model(vec![1.0, 2.0], 0.0, vec![vec![0.0, 0.0], vec![2.0, 2.0]]);
        let game = shap_game(model, vec![1.0, 1.0]).unwrap();
        let v = game.evaluate(&Coalition::from_mask(0b01, 2));
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dummy_player_with_constant_background_column() {
        // Coefficient 0 for feature 1 and constant background column 1.
        let model = linear_model(
            vec![2.0, 0.0, 1.0],
            0.0,
            vec![vec![1.0, 7.0, 0.0], vec![-1.0, 7.0, 3.0]],
        );
        let game = shap_game(model, vec![0.5, 7.0, 2.0]).unwrap();
        for mask in 0..(1u64 << 3) {
            if mask & 0b010 == 0 {
                let off = Coalition::from_mask(mask, 3);
                let on = Coalition::from_mask(mask | 0b010, 3);
                assert!((game.evaluate(&on) - game.evaluate(&off)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn instance_dimension_mismatch_is_rejected() {
        let model = linear_model(vec![1.0, 2.0], 0.0, vec![vec![0.0, 0.0]]);
        assert!(shap_game(model, vec![1.0]).is_err());
    }

    #[test]
    fn perfect_model_has_zero_loss_at_grand_coalition() {
        // f(x) = x1, labels equal to x1: zero squared loss for every outcome.
        let model = linear_model(vec![1.0], 0.0, vec![vec![0.0]]);
        let rows = vec![vec![0.5], vec![-2.0], vec![3.0]];
        let labels = vec![0.5, -2.0, 3.0];
        let game = sage_game(model, rows, labels, Loss::Squared).unwrap();
        let grand = Coalition::grand(1);
        for u in 0..game.outcome_count() {
            assert!(game.evaluate(&grand, u).abs() < 1e-20);
        }
        assert!(game.grand_mean().abs() < 1e-20);
    }

    #[test]
    fn importance_game_means_match_full_pass_average() {
        let model = linear_model(vec![1.0, -1.0], 0.2, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.5], vec![-1.0, 0.25]];
        let labels = vec![0.1, 0.2, 1.5, -0.75];
        let game = sage_game(model, rows, labels, Loss::Squared).unwrap();
        let d = game.player_count();
        let n = game.outcome_count();
        let grand: f64 =
            (0..n).map(|u| game.evaluate(&Coalition::grand(d), u)).sum::<f64>() / n as f64;
        let empty: f64 =
            (0..n).map(|u| game.evaluate(&Coalition::empty(d), u)).sum::<f64>() / n as f64;
        assert!((game.grand_mean() - grand).abs() < 1e-10);
        assert!((game.empty_mean() - empty).abs() < 1e-10);
    }

    #[test]
    fn importance_game_expectation_matches_pairwise_enumeration() {
        // Independent oracle: enumerate all (row, background-row) pairs by
        // hand for every coalition and compare against the game's average.
        let background = vec![vec![0.0, 1.0], vec![2.0, -1.0]];
        let model = linear_model(vec![1.5, -0.5], 0.1, background.clone());
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.5], vec![-1.0, 0.25]];
        let labels = vec![0.1, 0.2, 1.5, -0.75];
        let game =
            sage_game(model.clone(), rows.clone(), labels.clone(), Loss::Squared).unwrap();

        for mask in 0..(1u64 << 2) {
            let z = Coalition::from_mask(mask, 2);
            let mut expected = 0.0;
            for (row, label) in rows.iter().zip(&labels) {
                let mut pred = 0.0;
                for bg in &background {
                    let composite: Vec<f64> = (0..2)
                        .map(|i| if z.contains(i) { row[i] } else { bg[i] })
                        .collect();
                    pred += model.predict(&composite);
                }
                pred /= background.len() as f64;
                expected += -(pred - label) * (pred - label);
            }
            expected /= rows.len() as f64;

            let n = game.outcome_count();
            let actual: f64 = (0..n).map(|u| game.evaluate(&z, u)).sum::<f64>() / n as f64;
            assert!((actual - expected).abs() < 1e-10, "mask {mask}");
        }
    }

    #[test]
    fn cross_entropy_requires_binary_labels_and_logistic_model() {
        let model = linear_model(vec![1.0], 0.0, vec![vec![0.0]]);
        let err = sage_game(model, vec![vec![1.0]], vec![0.5], Loss::CrossEntropy);
        assert!(err.is_err());

        let logistic =
            TabularModel::new(ModelKind::Logistic, vec![1.0], 0.0, vec![vec![0.0]]).unwrap();
        let err = sage_game(logistic.clone(), vec![vec![1.0]], vec![0.5], Loss::CrossEntropy);
        assert!(err.is_err());
        let ok = sage_game(logistic, vec![vec![1.0]], vec![1.0], Loss::CrossEntropy);
        assert!(ok.is_ok());
    }

    #[test]
    fn sensitivity_game_is_zero_at_grand_coalition_for_squared_loss() {
        let model = linear_model(vec![1.0, 2.0], 0.0, vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        let rows = vec![vec![0.5, 0.25], vec![2.0, -1.0]];
        let game = shapley_effects_game(model, rows, Loss::Squared).unwrap();
        let grand = Coalition::grand(2);
        for u in 0..game.outcome_count() {
            assert!(game.evaluate(&grand, u).abs() < 1e-20);
        }
    }

    #[test]
    fn sensitivity_game_expectation_matches_pairwise_enumeration() {
        let background = vec![vec![0.0, 1.0], vec![2.0, -1.0]];
        let model = linear_model(vec![1.5, -0.5], 0.1, background.clone());
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.5], vec![-1.0, 0.25]];
        let game = shapley_effects_game(model.clone(), rows.clone(), Loss::Squared).unwrap();

        for mask in 0..(1u64 << 2) {
            let z = Coalition::from_mask(mask, 2);
            let mut expected = 0.0;
            for row in &rows {
                let mut pred = 0.0;
                for bg in &background {
                    let composite: Vec<f64> = (0..2)
                        .map(|i| if z.contains(i) { row[i] } else { bg[i] })
                        .collect();
                    pred += model.predict(&composite);
                }
                pred /= background.len() as f64;
                let target = model.predict(row);
                expected += -(pred - target) * (pred - target);
            }
            expected /= rows.len() as f64;

            let n = game.outcome_count();
            let actual: f64 = (0..n).map(|u| game.evaluate(&z, u)).sum::<f64>() / n as f64;
            assert!((actual - expected).abs() < 1e-10, "mask {mask}");
        }
    }
}
