//! Exact linear-separability decision for two finite point sets.
//!
//! Two finite sets are strictly separable exactly when their convex hulls are
//! disjoint. The check first looks for a hyperplane with a unit gap on either
//! side; when that program is infeasible it solves for convex weights whose
//! combinations coincide, which certifies that the hulls intersect.

use minilp::{ComparisonOp, Error as LpError, LinearExpr, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use super::{ClassifyError, LinearClassifier, Result};

/// Weights below this are treated as outside the certificate's support.
const SUPPORT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Separability {
    /// Every point of the first set has `w . x < b`, every point of the
    /// second set `w . x > b`. `w` has unit Euclidean norm.
    Separable { witness: LinearClassifier },
    /// Convex weights (index, weight), all positive and summing to one per
    /// set, whose combinations of the two sets coincide.
    Inseparable {
        alpha: Vec<(usize, f64)>,
        beta: Vec<(usize, f64)>,
    },
}

impl Separability {
    pub fn is_separable(&self) -> bool {
        matches!(self, Separability::Separable { .. })
    }
}

/// `|sum_i alpha_i a_i - sum_j beta_j b_j|` for a certificate.
pub fn certificate_residual(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    alpha: &[(usize, f64)],
    beta: &[(usize, f64)],
) -> f64 {
    let dim = a[0].len();
    let mut diff = vec![0.0; dim];
    for &(i, w) in alpha {
        for (d, v) in diff.iter_mut().zip(&a[i]) {
            *d += w * v;
        }
    }
    for &(j, w) in beta {
        for (d, v) in diff.iter_mut().zip(&b[j]) {
            *d -= w * v;
        }
    }
    diff.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn check_linear_separability(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Separability> {
    if a.is_empty() || b.is_empty() {
        return Err(ClassifyError::EmptySet);
    }
    let dim = a[0].len();
    for p in a.iter().chain(b) {
        if p.len() != dim {
            return Err(ClassifyError::DimensionMismatch(dim, p.len()));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ClassifyError::BadParameter("non-finite point".to_string()));
        }
    }

    // Work in centered, unit-RMS coordinates so the unit gap is meaningful.
    let n = (a.len() + b.len()) as f64;
    let mut mean = vec![0.0; dim];
    for p in a.iter().chain(b) {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let spread = (a
        .iter()
        .chain(b)
        .map(|p| p.iter().zip(&mean).map(|(v, m)| (v - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n)
        .sqrt();
    let scale = if spread > 0.0 { spread } else { 1.0 };
    let norm = |p: &Vec<f64>| -> Vec<f64> {
        p.iter().zip(&mean).map(|(v, m)| (v - m) / scale).collect()
    };
    let na: Vec<Vec<f64>> = a.iter().map(norm).collect();
    let nb: Vec<Vec<f64>> = b.iter().map(norm).collect();

    if let Some(w) = separating_direction(&na, &nb)? {
        if let Some(witness) = finish_witness(a, b, &w) {
            return Ok(Separability::Separable { witness });
        }
    }
    match hull_intersection(&na, &nb)? {
        Some((alpha, beta)) => {
            let (alpha, beta) = polish(&na, &nb, alpha, beta);
            Ok(Separability::Inseparable { alpha, beta })
        }
        None => Err(ClassifyError::Lp(
            "neither a separating hyperplane nor a hull intersection was found".to_string(),
        )),
    }
}

/// Minimum-L1 `w` with `w . p - c <= -1` on the first set and
/// `w . q - c >= 1` on the second, or `None` when infeasible.
fn separating_direction(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Option<Vec<f64>>> {
    let dim = a[0].len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let plus: Vec<_> = (0..dim).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let minus: Vec<_> = (0..dim).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let offset = lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY));
    let row = |p: &[f64]| {
        let mut e = LinearExpr::empty();
        for d in 0..dim {
            if p[d] != 0.0 {
                e.add(plus[d], p[d]);
                e.add(minus[d], -p[d]);
            }
        }
        e.add(offset, -1.0);
        e
    };
    for p in a {
        lp.add_constraint(row(p), ComparisonOp::Le, -1.0);
    }
    for q in b {
        lp.add_constraint(row(q), ComparisonOp::Ge, 1.0);
    }
    match lp.solve() {
        Ok(sol) => Ok(Some(
            (0..dim)
                .map(|d| sol[plus[d]] - sol[minus[d]])
                .collect(),
        )),
        Err(LpError::Infeasible) => Ok(None),
        Err(e) => Err(ClassifyError::Lp(e.to_string())),
    }
}

/// Maps a normalized-space direction back to a unit-norm hyperplane in the
/// original coordinates with the threshold centered in the gap.
fn finish_witness(a: &[Vec<f64>], b: &[Vec<f64>], w: &[f64]) -> Option<LinearClassifier> {
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    let w: Vec<f64> = w.iter().map(|v| v / norm).collect();
    let proj = |p: &Vec<f64>| p.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>();
    let hi_a = a.iter().map(proj).fold(f64::NEG_INFINITY, f64::max);
    let lo_b = b.iter().map(proj).fold(f64::INFINITY, f64::min);
    if hi_a.partial_cmp(&lo_b) != Some(std::cmp::Ordering::Less) {
        return None;
    }
    let bias = 0.5 * (hi_a + lo_b);
    if !(hi_a < bias && bias < lo_b) {
        return None;
    }
    LinearClassifier::new(w, bias).ok()
}

type Weights = Vec<(usize, f64)>;

/// Convex weights with `sum alpha_i a_i = sum beta_j b_j`, or `None`.
fn hull_intersection(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Option<(Weights, Weights)>> {
    let dim = a[0].len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let alpha: Vec<_> = a.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let beta: Vec<_> = b.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    lp.add_constraint(
        alpha.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>().as_slice(),
        ComparisonOp::Eq,
        1.0,
    );
    lp.add_constraint(
        beta.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>().as_slice(),
        ComparisonOp::Eq,
        1.0,
    );
    for d in 0..dim {
        let mut e = LinearExpr::empty();
        for (v, p) in alpha.iter().zip(a) {
            if p[d] != 0.0 {
                e.add(*v, p[d]);
            }
        }
        for (v, q) in beta.iter().zip(b) {
            if q[d] != 0.0 {
                e.add(*v, -q[d]);
            }
        }
        lp.add_constraint(e, ComparisonOp::Eq, 0.0);
    }
    match lp.solve() {
        Ok(sol) => {
            let pick = |vars: &[minilp::Variable]| -> Weights {
                vars.iter()
                    .enumerate()
                    .map(|(i, &v)| (i, sol[v]))
                    .filter(|&(_, w)| w > SUPPORT_TOLERANCE)
                    .collect()
            };
            Ok(Some((pick(&alpha), pick(&beta))))
        }
        Err(LpError::Infeasible) => Ok(None),
        Err(e) => Err(ClassifyError::Lp(e.to_string())),
    }
}

fn renormalize(w: Weights) -> Weights {
    let total: f64 = w.iter().map(|(_, v)| v).sum();
    w.into_iter().map(|(i, v)| (i, v / total)).collect()
}

/// Re-solves the equality system on the certificate's support by least
/// squares; keeps the refined weights when they stay positive and reduce the
/// residual.
fn polish(a: &[Vec<f64>], b: &[Vec<f64>], alpha: Weights, beta: Weights) -> (Weights, Weights) {
    let alpha = renormalize(alpha);
    let beta = renormalize(beta);
    let dim = a[0].len();
    let cols = alpha.len() + beta.len();
    let mut m = DMatrix::zeros(dim + 2, cols);
    for (c, &(i, _)) in alpha.iter().enumerate() {
        for d in 0..dim {
            m[(d, c)] = a[i][d];
        }
        m[(dim, c)] = 1.0;
    }
    for (c, &(j, _)) in beta.iter().enumerate() {
        let col = alpha.len() + c;
        for d in 0..dim {
            m[(d, col)] = -b[j][d];
        }
        m[(dim + 1, col)] = 1.0;
    }
    let mut rhs = DVector::zeros(dim + 2);
    rhs[dim] = 1.0;
    rhs[dim + 1] = 1.0;

    let before = certificate_residual(a, b, &alpha, &beta);
    let Ok(sol) = m.svd(true, true).solve(&rhs, 1e-14) else {
        return (alpha, beta);
    };
    if sol.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return (alpha, beta);
    }
    let refined_a = renormalize(
        alpha
            .iter()
            .enumerate()
            .map(|(c, &(i, _))| (i, sol[c]))
            .collect(),
    );
    let refined_b = renormalize(
        beta.iter()
            .enumerate()
            .map(|(c, &(j, _))| (j, sol[alpha.len() + c]))
            .collect(),
    );
    if certificate_residual(a, b, &refined_a, &refined_b) < before {
        (refined_a, refined_b)
    } else {
        (alpha, beta)
    }
}
