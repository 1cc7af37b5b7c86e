use nalgebra::{DMatrix, DVector};

use super::{ClassifyError, LabeledDataset, LinearClassifier, Result};

/// Blend used for 2-D visualizations when no tuned value is supplied.
pub const DEFAULT_PROJECTION_ALPHA: f64 = 0.1;

/// Relative eigenvalue cutoff below which a direction counts as trivial.
const RANK_TOLERANCE: f64 = 1e-10;

/// Penalized LDA embedding with nearest-centroid classification.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    projection: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    centroids: Vec<(i64, DVector<f64>)>,
    binary: Option<LinearClassifier>,
}

impl PldaModel {
    /// `D x k` matrix whose columns are the discriminant directions.
    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn centroids(&self) -> &[(i64, DVector<f64>)] {
        &self.centroids
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (self.projection.transpose() * x).iter().copied().collect()
    }

    /// Nearest class centroid in the embedding; ties go to the smaller label.
    pub fn predict(&self, x: &[f64]) -> i64 {
        let z = DVector::from_vec(self.project(x));
        let mut best = (self.centroids[0].0, f64::INFINITY);
        for (label, c) in &self.centroids {
            let d = (&z - c).norm_squared();
            if d < best.1 {
                best = (*label, d);
            }
        }
        best.0
    }

    /// For two classes nearest-centroid is a hyperplane:
    /// `w = V (c_2 - c_1)`, `b = (|c_2|^2 - |c_1|^2) / 2`.
    pub fn binary(&self) -> Option<&LinearClassifier> {
        self.binary.as_ref()
    }
}

/// Penalized LDA: the top-`k` generalized eigenvectors of
/// `S_B + alpha * S_T` against `S_W + (ridge * tr(S_W)/D + alpha * tr(S_T)/D) * I`.
///
/// `alpha = 0` is Fisher's criterion with a trace-scaled ridge; as `alpha`
/// grows the total-scatter (PCA) term dominates both sides and the directions
/// approach the principal components.
pub fn fit_penalized_lda(
    data: &LabeledDataset,
    alpha: f64,
    ridge: f64,
    k: usize,
) -> Result<PldaModel> {
    if !(alpha.is_finite() && alpha >= 0.0) || !(ridge.is_finite() && ridge >= 0.0) {
        return Err(ClassifyError::BadParameter(format!(
            "alpha and ridge must be nonnegative, got {alpha} and {ridge}"
        )));
    }
    let d = data.dim();
    if k == 0 || k > d {
        return Err(ClassifyError::BadRank {
            requested: k,
            available: d,
        });
    }

    let groups = data.rows_by_class();
    let mean = data.class_mean(&(0..data.len()).collect::<Vec<_>>());
    let mut between = DMatrix::zeros(d, d);
    for (_, idx) in &groups {
        let diff = data.class_mean(idx) - &mean;
        between += (&diff * diff.transpose()) * idx.len() as f64;
    }
    let within = data.within_scatter();
    let total = &within + &between;

    let tau_w = within.trace() / d as f64;
    let tau_t = total.trace() / d as f64;
    let mut denom = within.clone();
    let shift = ridge * tau_w + alpha * tau_t;
    for i in 0..d {
        denom[(i, i)] += shift;
    }
    let numer = between + total * alpha;

    let chol = denom.cholesky().ok_or(ClassifyError::SingularScatter)?;
    let l = chol.l();
    // C = L^-1 A L^-T
    let y = l
        .solve_lower_triangular(&numer)
        .ok_or(ClassifyError::SingularScatter)?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(ClassifyError::SingularScatter)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let available = if top > 0.0 {
        order
            .iter()
            .filter(|&&i| eig.eigenvalues[i] > RANK_TOLERANCE * top)
            .count()
    } else {
        0
    };
    if k > available {
        return Err(ClassifyError::BadRank {
            requested: k,
            available,
        });
    }

    let lt = l.transpose();
    let mut projection = DMatrix::zeros(d, k);
    for (col, &i) in order.iter().take(k).enumerate() {
        let u = eig.eigenvectors.column(i).into_owned();
        let mut v = lt
            .solve_upper_triangular(&u)
            .ok_or(ClassifyError::SingularScatter)?;
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(ClassifyError::SingularScatter);
        }
        v /= norm;
        // deterministic sign: largest-magnitude entry positive
        if v[v.iamax()] < 0.0 {
            v = -v;
        }
        projection.set_column(col, &v);
    }

    let centroids: Vec<(i64, DVector<f64>)> = groups
        .iter()
        .map(|(label, idx)| (*label, projection.transpose() * data.class_mean(idx)))
        .collect();
    let binary = if centroids.len() == 2 {
        let (c1, c2) = (&centroids[0].1, &centroids[1].1);
        let w = &projection * (c2 - c1);
        let b = 0.5 * (c2.norm_squared() - c1.norm_squared());
        LinearClassifier::new(w.iter().copied().collect(), b).ok()
    } else {
        None
    };

    Ok(PldaModel {
        projection,
        eigenvalues: order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect(),
        centroids,
        binary,
    })
}

/// Fits a 2-D penalized LDA embedding on the rows in `train_idx` only and
/// projects every row of `data`.
pub fn project_2d(
    data: &LabeledDataset,
    train_idx: &[usize],
    alpha: f64,
    ridge: f64,
) -> Result<Vec<[f64; 2]>> {
    if train_idx.is_empty() {
        return Err(ClassifyError::EmptySet);
    }
    let train = data.subset(train_idx)?;
    let model = fit_penalized_lda(&train, alpha, ridge, 2)?;
    Ok((0..data.len())
        .map(|i| {
            let z = model.project(&data.row(i));
            [z[0], z[1]]
        })
        .collect())
}
