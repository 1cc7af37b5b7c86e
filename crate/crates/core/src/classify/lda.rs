use nalgebra::{DMatrix, DVector};

use super::{ClassifyError, LabeledDataset, LinearClassifier, Result};

/// `S + shrinkage * trace(S) / D * I`, the ridge scaled to the mean eigenvalue
/// so the fit does not depend on feature units.
pub(crate) fn shrunk(scatter: &DMatrix<f64>, shrinkage: f64) -> DMatrix<f64> {
    let d = scatter.nrows();
    let ridge = shrinkage * scatter.trace() / d as f64;
    let mut s = scatter.clone();
    for i in 0..d {
        s[(i, i)] += ridge;
    }
    s
}

/// Fisher linear discriminant for two classes.
///
/// `w = (S_W + shrinkage * trace(S_W)/D * I)^-1 (m_2 - m_1)` and the threshold
/// is the midpoint of the projected class means, so the higher label lands
/// on the positive side.
pub fn fit_fisher_lda(data: &LabeledDataset, shrinkage: f64) -> Result<LinearClassifier> {
    if !(shrinkage.is_finite() && shrinkage >= 0.0) {
        return Err(ClassifyError::BadParameter(format!(
            "shrinkage must be nonnegative, got {shrinkage}"
        )));
    }
    data.binary_classes()?;
    let groups = data.rows_by_class();
    let m1 = data.class_mean(&groups[0].1);
    let m2 = data.class_mean(&groups[1].1);
    let diff: DVector<f64> = &m2 - &m1;
    let scale = m1.amax().max(m2.amax()).max(1.0);
    if diff.amax() <= 1e-14 * scale {
        return Err(ClassifyError::DegenerateMeans);
    }
    let s = shrunk(&data.within_scatter(), shrinkage);
    let chol = s.cholesky().ok_or(ClassifyError::SingularScatter)?;
    let w = chol.solve(&diff);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ClassifyError::SingularScatter);
    }
    let b = w.dot(&(&m1 + &m2)) * 0.5;
    LinearClassifier::new(w.iter().copied().collect(), b)
}
