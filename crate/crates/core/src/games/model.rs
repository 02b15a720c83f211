//! Tabular models (linear / logistic) with a background matrix for
//! marginal-distribution feature removal, plus model/dataset file loading.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::games::Coalition;

/// Upper bound on background rows; marginal imputation averages over the
/// full background matrix, so it is kept small by configuration.
pub const MAX_BACKGROUND_ROWS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Logistic,
}

/// Loss functions for the global explanation games.
///
/// `CrossEntropy` compares a predicted probability against a hard 0/1 label;
/// `SoftCrossEntropy` compares against a probability treated as a soft label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Squared,
    CrossEntropy,
    SoftCrossEntropy,
}

const PROB_EPS: f64 = 1e-12;

impl Loss {
    /// Loss value (not negated) for a prediction against a target.
    pub fn evaluate(&self, prediction: f64, target: f64) -> f64 {
        match self {
            Loss::Squared => {
                let diff = prediction - target;
                diff * diff
            }
            Loss::CrossEntropy | Loss::SoftCrossEntropy => {
                let p = prediction.clamp(PROB_EPS, 1.0 - PROB_EPS);
                -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
            }
        }
    }
}

/// A loaded linear or logistic model together with its background matrix.
#[derive(Debug, Clone)]
pub struct TabularModel {
    kind: ModelKind,
    coefficients: Vec<f64>,
    intercept: f64,
    background: Vec<Vec<f64>>,
}

impl TabularModel {
    pub fn new(
        kind: ModelKind,
        coefficients: Vec<f64>,
        intercept: f64,
        background: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Config("model must have at least one coefficient".into()));
        }
        if background.is_empty() {
            return Err(Error::Config("background matrix must have at least one row".into()));
        }
        if background.len() > MAX_BACKGROUND_ROWS {
            return Err(Error::Config(format!(
                "background matrix has {} rows, exceeding the cap of {}; trim it to keep \
                 marginal imputation exact and cheap",
                background.len(),
                MAX_BACKGROUND_ROWS
            )));
        }
        for row in &background {
            if row.len() != coefficients.len() {
                return Err(Error::Config(format!(
                    "background row has {} features, model expects {}",
                    row.len(),
                    coefficients.len()
                )));
            }
        }
        if !intercept.is_finite()
            || coefficients.iter().any(|c| !c.is_finite())
            || background.iter().flatten().any(|x| !x.is_finite())
        {
            return Err(Error::Config("model parameters and background must be finite".into()));
        }
        Ok(TabularModel { kind, coefficients, intercept, background })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn feature_count(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn background(&self) -> &[Vec<f64>] {
        &self.background
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let linear = self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(c, xi)| c * xi)
                .sum::<f64>();
        match self.kind {
            ModelKind::Linear => linear,
            // Clamp away from the endpoints so extreme inputs cannot
            // underflow the probability to exactly 0 or 1.
            ModelKind::Logistic => sigmoid(linear).clamp(1e-15, 1.0 - 1e-15),
        }
    }

    /// Prediction with the features outside `coalition` marginalized out:
    /// the mean over background rows of `f(x)` where `x` takes `instance`
    /// on included features and the background row elsewhere.
    pub fn restricted_predict(&self, instance: &[f64], coalition: &Coalition) -> f64 {
        debug_assert_eq!(instance.len(), self.feature_count());
        let mut composite = vec![0.0; self.feature_count()];
        let mut sum = 0.0;
        for row in &self.background {
            for i in 0..composite.len() {
                composite[i] = if coalition.contains(i) { instance[i] } else { row[i] };
            }
            sum += self.predict(&composite);
        }
        sum / self.background.len() as f64
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// A numeric table loaded from CSV: a header row of column names followed by
/// comma-separated numeric rows.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Dataset {
    /// Splits off the named label column, returning (feature rows, labels,
    /// feature names).
    pub fn split_label(&self, label: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<String>)> {
        let idx = self
            .column_names
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::Config(format!("label column '{label}' not found")))?;
        let mut features = Vec::with_capacity(self.rows.len());
        let mut labels = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut r = row.clone();
            labels.push(r.remove(idx));
            features.push(r);
        }
        let names = self
            .column_names
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, n)| n.clone())
            .collect();
        Ok((features, labels, names))
    }
}

/// Loads a dataset CSV (header row, numeric columns).
pub fn load_dataset<P: AsRef<Path>>(path: P) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let column_names: Vec<String> =
        reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut row = Vec::with_capacity(column_names.len());
        for field in record.iter() {
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!("non-numeric CSV field '{}'", field.trim()))
            })?;
            row.push(value);
        }
        if row.len() != column_names.len() {
            return Err(Error::Parse(format!(
                "CSV row has {} fields, header has {}",
                row.len(),
                column_names.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("CSV contains no data rows".into()));
    }
    Ok(Dataset { column_names, rows })
}

#[derive(Deserialize)]
struct ModelFile {
    kind: String,
    coefficients: Vec<f64>,
    intercept: f64,
    background_csv: String,
}

/// Loads a model JSON file:
/// `{"kind": "linear"|"logistic", "coefficients": [..], "intercept": r,
///   "background_csv": "path"}`.
///
/// The background CSV path is resolved relative to the JSON file's directory.
pub fn load_model<P: AsRef<Path>>(path: P) -> Result<TabularModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    let kind = match file.kind.as_str() {
        "linear" => ModelKind::Linear,
        "logistic" => ModelKind::Logistic,
        other => return Err(Error::Parse(format!("unknown model kind '{other}'"))),
    };
    let background_path = {
        let p = Path::new(&file.background_csv);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            path.parent().unwrap_or_else(|| Path::new(".")).join(p)
        }
    };
    let background = load_dataset(&background_path)?;
    TabularModel::new(kind, file.coefficients, file.intercept, background.rows)
}
