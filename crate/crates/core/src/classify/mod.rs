//! Linear classifiers, an exact separability check and the nested
//! cross-validation protocol used to compare signal spaces.

mod cv;
mod lda;
mod plda;
mod separability;
mod svm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv::{
    cohen_kappa, cross_validate, run_fold, stratified_folds, CvConfig, CvReport, FoldOutcome,
    FoldResult, Folds, ParamGrid,
};
pub use lda::fit_fisher_lda;
pub use plda::{fit_penalized_lda, project_2d, PldaModel, DEFAULT_PROJECTION_ALPHA};
pub use separability::{certificate_residual, check_linear_separability, Separability};
pub use svm::{fit_linear_svm, train_svm, SvmFit, SvmOptions};

/// Default shrinkage for the within-class scatter, relative to its mean
/// eigenvalue `trace(S_W) / D`.
pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("{rows} feature rows but {labels} labels")]
    RowMismatch { rows: usize, labels: usize },
    #[error("row {row} has {got} features, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite feature in row {0}")]
    NonFinite(usize),
    #[error("need at least 2 distinct labels, found {0}")]
    TooFewClasses(usize),
    #[error("method needs exactly 2 classes, found {0}")]
    NotBinary(usize),
    #[error("regularized within-class scatter is not invertible")]
    SingularScatter,
    #[error("class means coincide; discriminant direction is undefined")]
    DegenerateMeans,
    #[error("requested {requested} discriminant directions but only {available} are nontrivial")]
    BadRank { requested: usize, available: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("solver did not reach the duality-gap target within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("point sets have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("point set is empty")]
    EmptySet,
    #[error("class {label} has {count} samples, fewer than the {folds} folds requested")]
    TooFewSamples {
        label: i64,
        count: usize,
        folds: usize,
    },
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("classifier weights are all zero")]
    ZeroWeights,
}

pub type Result<T> = std::result::Result<T, ClassifyError>;

/// Feature matrix (rows are samples) with one class id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DMatrix<f64>,
    labels: Vec<i64>,
}

impl LabeledDataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<i64>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(ClassifyError::RowMismatch {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(ClassifyError::Ragged {
                    row: i,
                    expected: dim,
                    got: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(ClassifyError::NonFinite(i));
            }
        }
        let features = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self::from_matrix(features, labels)
    }

    pub fn from_matrix(features: DMatrix<f64>, labels: Vec<i64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(ClassifyError::RowMismatch {
                rows: features.nrows(),
                labels: labels.len(),
            });
        }
        if let Some((i, _)) = features
            .row_iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(ClassifyError::NonFinite(i));
        }
        let data = Self { features, labels };
        let k = data.classes().len();
        if k < 2 {
            return Err(ClassifyError::TooFewClasses(k));
        }
        Ok(data)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<i64> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Rows at `idx`, in that order. Fails if fewer than two classes remain.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Self::from_matrix(features, labels)
    }

    /// Same rows with every label replaced.
    pub fn relabeled(&self, labels: Vec<i64>) -> Result<Self> {
        Self::from_matrix(self.features.clone(), labels)
    }

    /// Same labels with features multiplied by `gamma`.
    pub fn scaled(&self, gamma: f64) -> Self {
        Self {
            features: &self.features * gamma,
            labels: self.labels.clone(),
        }
    }

    /// Rows grouped by class, in sorted label order.
    pub(crate) fn rows_by_class(&self) -> Vec<(i64, Vec<usize>)> {
        self.classes()
            .into_iter()
            .map(|c| {
                let idx = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
                (c, idx)
            })
            .collect()
    }

    pub(crate) fn class_mean(&self, idx: &[usize]) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for &i in idx {
            m += self.features.row(i).transpose();
        }
        m / idx.len() as f64
    }

    /// Within-class scatter `sum_c sum_i (x_i - m_c)(x_i - m_c)^T`.
    pub(crate) fn within_scatter(&self) -> DMatrix<f64> {
        let mut centered = self.features.clone();
        for (_, idx) in self.rows_by_class() {
            let m = self.class_mean(&idx).transpose();
            for &i in &idx {
                let mut row = centered.row_mut(i);
                row -= &m;
            }
        }
        centered.transpose() * centered
    }

    fn binary_classes(&self) -> Result<(i64, i64)> {
        let c = self.classes();
        if c.len() != 2 {
            return Err(ClassifyError::NotBinary(c.len()));
        }
        Ok((c[0], c[1]))
    }
}

/// Hyperplane `w . x = b`. Points with `w . x < b` fall on the negative side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    weights: Vec<f64>,
    bias: f64,
}

impl LinearClassifier {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.iter().all(|&w| w == 0.0) {
            return Err(ClassifyError::ZeroWeights);
        }
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(ClassifyError::BadParameter(
                "non-finite hyperplane".to_string(),
            ));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Signed score `w . x - b`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() - self.bias
    }
}

/// Two-class model: positive scores predict `positive`, the rest `negative`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub classifier: LinearClassifier,
    pub negative: i64,
    pub positive: i64,
}

impl BinaryModel {
    pub fn predict(&self, x: &[f64]) -> i64 {
        if self.classifier.decision(x) > 0.0 {
            self.positive
        } else {
            self.negative
        }
    }
}

/// A trained model of any supported kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Binary(BinaryModel),
    /// One classifier per class (that class positive); highest score wins.
    OneVsRest(Vec<(i64, LinearClassifier)>),
    Centroid(PldaModel),
}

impl Fitted {
    pub fn predict(&self, x: &[f64]) -> i64 {
        match self {
            Fitted::Binary(m) => m.predict(x),
            Fitted::OneVsRest(models) => {
                let mut best = (models[0].0, f64::NEG_INFINITY);
                for (label, c) in models {
                    let s = c.decision(x);
                    if s > best.1 {
                        best = (*label, s);
                    }
                }
                best.0
            }
            Fitted::Centroid(m) => m.predict(x),
        }
    }

    pub fn predict_all(&self, data: &LabeledDataset) -> Vec<i64> {
        (0..data.len()).map(|i| self.predict(&data.row(i))).collect()
    }

    /// Fraction of rows whose prediction differs from the label.
    pub fn error_rate(&self, data: &LabeledDataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let wrong = self
            .predict_all(data)
            .iter()
            .zip(data.labels())
            .filter(|(p, l)| p != l)
            .count();
        wrong as f64 / data.len() as f64
    }

    /// Two-class hyperplane, when the model has one.
    pub fn linear(&self) -> Option<&LinearClassifier> {
        match self {
            Fitted::Binary(m) => Some(&m.classifier),
            Fitted::Centroid(m) => m.binary(),
            Fitted::OneVsRest(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "lda")]
    FisherLda,
    #[serde(rename = "plda")]
    PenalizedLda,
    #[serde(rename = "svm")]
    LinearSvm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FisherLda, Method::PenalizedLda, Method::LinearSvm];

    pub fn name(&self) -> &'static str {
        match self {
            Method::FisherLda => "lda",
            Method::PenalizedLda => "plda",
            Method::LinearSvm => "svm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lda" | "fisher" | "fisher-lda" => Ok(Method::FisherLda),
            "plda" | "penalized-lda" => Ok(Method::PenalizedLda),
            "svm" | "linear-svm" => Ok(Method::LinearSvm),
            other => Err(ClassifyError::BadParameter(format!(
                "unknown classifier '{other}'"
            ))),
        }
    }
}

/// Hyperparameters shared by the classifiers. The cross-validation grid
/// overrides entries by name (`shrinkage`, `alpha`, `ridge`, `c`, `dims`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub shrinkage: f64,
    pub alpha: f64,
    pub ridge: f64,
    pub c: f64,
    /// Embedding size for penalized LDA; 0 means classes - 1.
    pub dims: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            shrinkage: DEFAULT_SHRINKAGE,
            alpha: 0.0,
            ridge: DEFAULT_SHRINKAGE,
            c: 1.0,
            dims: 0,
        }
    }
}

impl Params {
    pub fn with(mut self, name: &str, value: f64) -> Result<Self> {
        match name {
            "shrinkage" => self.shrinkage = value,
            "alpha" => self.alpha = value,
            "ridge" => self.ridge = value,
            "c" | "C" => self.c = value,
            "dims" | "k" => self.dims = value as usize,
            other => {
                return Err(ClassifyError::BadParameter(format!(
                    "unknown parameter '{other}'"
                )))
            }
        }
        Ok(self)
    }

    pub fn apply(self, values: &BTreeMap<String, f64>) -> Result<Self> {
        values.iter().try_fold(self, |p, (k, v)| p.with(k, *v))
    }
}

/// Trains `method` on `data`. Two-class problems give a single hyperplane;
/// with more classes Fisher LDA and the SVM fall back to one-vs-rest while
/// penalized LDA stays natively multi-class.
pub fn fit(method: Method, data: &LabeledDataset, params: &Params) -> Result<Fitted> {
    let classes = data.classes();
    match method {
        Method::PenalizedLda => {
            let k = if params.dims == 0 {
                classes.len() - 1
            } else {
                params.dims
            };
            Ok(Fitted::Centroid(fit_penalized_lda(
                data,
                params.alpha,
                params.ridge,
                k,
            )?))
        }
        Method::FisherLda | Method::LinearSvm if classes.len() == 2 => {
            let classifier = fit_binary(method, data, params)?;
            Ok(Fitted::Binary(BinaryModel {
                classifier,
                negative: classes[0],
                positive: classes[1],
            }))
        }
        Method::FisherLda | Method::LinearSvm => {
            let mut models = Vec::with_capacity(classes.len());
            for &c in &classes {
                // rest = 0, this class = 1, so the class is the positive side
                let labels = data.labels().iter().map(|&l| i64::from(l == c)).collect();
                let binary = data.relabeled(labels)?;
                models.push((c, fit_binary(method, &binary, params)?));
            }
            Ok(Fitted::OneVsRest(models))
        }
    }
}

fn fit_binary(method: Method, data: &LabeledDataset, params: &Params) -> Result<LinearClassifier> {
    match method {
        Method::FisherLda => fit_fisher_lda(data, params.shrinkage),
        Method::LinearSvm => fit_linear_svm(data, params.c),
        Method::PenalizedLda => unreachable!("penalized LDA is fitted natively"),
    }
}
