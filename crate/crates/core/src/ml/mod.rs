//! Regressors trained on the synthetic corpus: a multilayer perceptron and a
//! random forest, sharing feature scaling, target handling and a JSON format.

pub mod forest;
pub mod mlp;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{coefficient_of_determination, pearson_r2, rmse};
use crate::sampling::TrainingSet;
use crate::spectral::MinMaxScaler;

pub use forest::{ForestHyper, ForestModel};
pub use mlp::{MlpHyper, MlpModel, MlpNet};

/// Fraction of rows used for training.
pub const TRAIN_FRACTION: f64 = 0.85;
/// Smallest corpus that may be split.
pub const MIN_SPLIT_ROWS: usize = 20;
pub const MODEL_FORMAT: &str = "hgpp-model";
pub const MODEL_VERSION: u32 = 1;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Shuffled train/test index split with `round(fraction · n)` training rows.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < MIN_SPLIT_ROWS {
        return Err(Error::Argument(format!(
            "need at least {MIN_SPLIT_ROWS} rows to split, got {n}"
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// Split arbitrary rows into (train, test).
pub fn split_dataset<T: Clone>(rows: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (tr, te) = split_indices(rows.len(), fraction, seed)?;
    Ok((
        tr.iter().map(|&i| rows[i].clone()).collect(),
        te.iter().map(|&i| rows[i].clone()).collect(),
    ))
}

/// Learnable quantities of a corpus row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Gpp,
    Lai,
    Fpar,
    FparCab,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Gpp => "gpp",
            Target::Lai => "lai",
            Target::Fpar => "fpar",
            Target::FparCab => "fpar_cab",
        }
    }

    /// Comma-separated target list such as `gpp,lai`.
    pub fn parse_list(s: &str) -> Result<Vec<Target>> {
        let list: Vec<Target> = s
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(Error::Argument("no targets given".into()));
        }
        Ok(list)
    }

    pub fn values(self, set: &TrainingSet) -> Result<Vec<f64>> {
        let diag = |f: fn(&crate::sampling::Diagnostics) -> f64| {
            if set.diagnostics.len() != set.rows.len() {
                return Err(Error::Argument(format!(
                    "target {} needs simulator diagnostics; load them alongside a CSV corpus",
                    self.name()
                )));
            }
            Ok(set.diagnostics.iter().map(f).collect())
        };
        match self {
            Target::Gpp => Ok(set.rows.iter().map(|r| r.gpp).collect()),
            Target::Lai => Ok(set.rows.iter().map(|r| r.lai).collect()),
            Target::Fpar => diag(|d| d.fpar),
            Target::FparCab => diag(|d| d.fpar_cab),
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gpp" => Ok(Target::Gpp),
            "lai" => Ok(Target::Lai),
            "fpar" => Ok(Target::Fpar),
            "fpar_cab" => Ok(Target::FparCab),
            other => Err(Error::Argument(format!("unknown target {other:?}"))),
        }
    }
}

/// Feature layout and scaling shared by every model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub sensor: String,
    pub band_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub targets: Vec<Target>,
    pub scaler: MinMaxScaler,
}

impl Preprocessor {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn transform(&self, rows: &Matrix) -> Result<Matrix> {
        if rows.cols != self.n_features() {
            return Err(Error::Argument(format!(
                "model expects {} features, got {}",
                self.n_features(),
                rows.cols
            )));
        }
        let mut out = rows.clone();
        for i in 0..out.rows {
            self.scaler.apply_in_place(out.row_mut(i));
        }
        Ok(out)
    }

    /// Clamp GPP outputs at zero.
    fn finish(&self, mut pred: Matrix) -> Matrix {
        for (t, target) in self.targets.iter().enumerate() {
            if *target == Target::Gpp {
                for i in 0..pred.rows {
                    let v = &mut pred.row_mut(i)[t];
                    *v = v.max(0.0);
                }
            }
        }
        pred
    }
}

/// Corpus prepared for fitting: unscaled features and targets, split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub preprocessor: Preprocessor,
    /// Scaled features.
    pub x_train: Matrix,
    pub y_train: Matrix,
    pub x_test: Matrix,
    pub y_test: Matrix,
}

impl PreparedData {
    /// Split `set`, fit the scaler on the training rows and scale both parts.
    pub fn new(set: &TrainingSet, targets: &[Target], split_seed: u64) -> Result<Self> {
        let (tr, te) = split_indices(set.rows.len(), TRAIN_FRACTION, split_seed)?;
        Self::from_indices(set, targets, &tr, &te)
    }

    /// Use every row for training and leave the test part empty.
    pub fn full(set: &TrainingSet, targets: &[Target]) -> Result<Self> {
        let all: Vec<usize> = (0..set.rows.len()).collect();
        Self::from_indices(set, targets, &all, &[])
    }

    fn from_indices(set: &TrainingSet, targets: &[Target], tr: &[usize], te: &[usize]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Argument("no targets given".into()));
        }
        let x = Matrix::from_rows(&set.features())?;
        let cols: Vec<Vec<f64>> = targets.iter().map(|t| t.values(set)).collect::<Result<_>>()?;
        let mut y = Matrix::zeros(set.rows.len(), targets.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                y.data[i * targets.len() + j] = *v;
            }
        }
        let x_train_raw = x.select_rows(tr);
        let scaler = MinMaxScaler::fit(&x_train_raw.to_rows())?;
        let preprocessor = Preprocessor {
            sensor: set.sensor.clone(),
            band_ids: set.band_ids.clone(),
            feature_names: set.feature_names(),
            targets: targets.to_vec(),
            scaler,
        };
        let x_train = preprocessor.transform(&x_train_raw)?;
        let x_test = preprocessor.transform(&x.select_rows(te))?;
        Ok(Self {
            preprocessor,
            x_train,
            y_train: y.select_rows(tr),
            x_test,
            y_test: y.select_rows(te),
        })
    }
}

/// Scores of one target on one data part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScore {
    pub target: Target,
    /// Coefficient of determination.
    pub r2_train: f64,
    pub r2_test: f64,
    pub r2_pearson_test: f64,
    pub rmse_train: f64,
    pub rmse_test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub epochs_run: usize,
    /// Epochs behind the returned weights.
    pub best_epoch: usize,
    /// Mean training loss per epoch, standardized target units.
    pub train_loss: Vec<f64>,
    /// Held-out loss per epoch.
    pub test_loss: Vec<f64>,
    pub scores: Vec<TargetScore>,
    /// Seconds; logged only, kept out of the serialized report.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn score(&self, target: Target) -> Option<&TargetScore> {
        self.scores.iter().find(|s| s.target == target)
    }
}

/// Score predictions (after the GPP clamp) against train and test targets.
pub(crate) fn score_parts(
    targets: &[Target],
    pred_train: &Matrix,
    y_train: &Matrix,
    pred_test: &Matrix,
    y_test: &Matrix,
) -> Vec<TargetScore> {
    let part = |p: &Matrix, y: &Matrix, j: usize| -> (f64, f64, f64) {
        if y.rows == 0 {
            return (f64::NAN, f64::NAN, f64::NAN);
        }
        let (pc, yc) = (p.column(j), y.column(j));
        (
            coefficient_of_determination(&pc, &yc),
            pearson_r2(&pc, &yc),
            rmse(&pc, &yc),
        )
    };
    targets
        .iter()
        .enumerate()
        .map(|(j, &target)| {
            let (r2_train, _, rmse_train) = part(pred_train, y_train, j);
            let (r2_test, r2_pearson_test, rmse_test) = part(pred_test, y_test, j);
            TargetScore {
                target,
                r2_train,
                r2_test,
                r2_pearson_test,
                rmse_train,
                rmse_test,
            }
        })
        .collect()
}

/// Any trained regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Mlp(MlpModel),
    Forest(ForestModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

impl TrainedModel {
    pub fn preprocessor(&self) -> &Preprocessor {
        match self {
            TrainedModel::Mlp(m) => &m.preprocessor,
            TrainedModel::Forest(m) => &m.preprocessor,
        }
    }

    /// Predictions for unscaled feature rows, GPP clamped at zero.
    pub fn predict(&self, features: &Matrix) -> Result<Matrix> {
        match self {
            TrainedModel::Mlp(m) => m.predict(features),
            TrainedModel::Forest(m) => m.predict(features),
        }
    }

    pub fn target_index(&self, target: Target) -> Option<usize> {
        self.preprocessor().targets.iter().position(|&t| t == target)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ModelLoad(e.to_string()))?;
        if probe.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
            return Err(Error::ModelLoad("not an hgpp model file".into()));
        }
        let version = probe.get("version").and_then(|v| v.as_u64());
        if version != Some(MODEL_VERSION as u64) {
            return Err(Error::ModelLoad(format!(
                "unsupported model version {version:?}, expected {MODEL_VERSION}"
            )));
        }
        let file: ModelFile =
            serde_json::from_value(probe).map_err(|e| Error::ModelLoad(e.to_string()))?;
        file.model.validate()?;
        Ok(file.model)
    }

    fn validate(&self) -> Result<()> {
        let p = self.preprocessor();
        if p.scaler.n_features() != p.n_features() || p.targets.is_empty() {
            return Err(Error::ModelLoad("inconsistent feature or target layout".into()));
        }
        match self {
            TrainedModel::Mlp(m) => m.net.validate(p.n_features(), p.targets.len()),
            TrainedModel::Forest(m) => m.validate(p.n_features(), p.targets.len()),
        }
    }
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()? + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainedModel::from_json(&text)
}
