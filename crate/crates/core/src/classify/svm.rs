//! Soft-margin linear SVM trained by sequential minimal optimization on the
//! dual, stopped on the primal-dual gap.

use nalgebra::{DMatrix, DVector};

use super::{ClassifyError, LabeledDataset, LinearClassifier, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmOptions {
    pub c: f64,
    /// Stop once `primal - dual <= gap_tolerance * primal`.
    pub gap_tolerance: f64,
    pub max_iterations: usize,
}

impl SvmOptions {
    pub fn new(c: f64) -> Self {
        Self {
            c,
            gap_tolerance: 1e-6,
            max_iterations: 2_000_000,
        }
    }
}

/// Trained SVM with the objective values it stopped at.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmFit {
    pub classifier: LinearClassifier,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
}

/// Minimizes `1/2 |w|^2 + C sum_i hinge(y_i (w . x_i + b))` for two classes;
/// the higher label is the positive side.
///
/// Features are centered and divided by their RMS radius before training, so
/// `C` is in units of the normalized data and predictions do not change when
/// all features are rescaled.
pub fn fit_linear_svm(data: &LabeledDataset, c: f64) -> Result<LinearClassifier> {
    train_svm(data, &SvmOptions::new(c)).map(|f| f.classifier)
}

pub fn train_svm(data: &LabeledDataset, opts: &SvmOptions) -> Result<SvmFit> {
    let c = opts.c;
    if !(c.is_finite() && c > 0.0) {
        return Err(ClassifyError::BadParameter(format!(
            "C must be positive, got {c}"
        )));
    }
    let (_, positive) = data.binary_classes()?;
    let n = data.len();
    let y: Vec<f64> = data
        .labels()
        .iter()
        .map(|&l| if l == positive { 1.0 } else { -1.0 })
        .collect();

    let mean = data.class_mean(&(0..n).collect::<Vec<_>>());
    let mut x = data.features().clone();
    for i in 0..n {
        let mut r = x.row_mut(i);
        r -= mean.transpose();
    }
    let radius = (x.norm_squared() / n as f64).sqrt();
    let scale = if radius > 0.0 { radius } else { 1.0 };
    x /= scale;

    let gram: DMatrix<f64> = &x * x.transpose();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let check_every = n.clamp(50, 1000);

    let finish = |alpha: &[f64], b: f64, primal: f64, dual: f64, iterations: usize| {
        let mut w = DVector::zeros(x.ncols());
        for i in 0..n {
            if alpha[i] != 0.0 {
                w += x.row(i).transpose() * (alpha[i] * y[i]);
            }
        }
        let w_orig: DVector<f64> = w / scale;
        let bias = w_orig.dot(&mean) - b;
        Ok(SvmFit {
            classifier: LinearClassifier::new(w_orig.iter().copied().collect(), bias)?,
            primal,
            dual,
            iterations,
        })
    };
    let converged = |primal: f64, dual: f64| primal - dual <= opts.gap_tolerance * primal.abs();

    let mut iterations = 0;
    loop {
        let pair = select_pair(&gram, &y, &alpha, &grad, c);
        let kkt_done = pair.is_none();
        if kkt_done || iterations % check_every == 0 {
            let (b, primal, dual) = objectives(&scores_from_grad(&grad, &y), &y, &alpha, c);
            if converged(primal, dual) || (kkt_done && primal - dual <= 1e-9 * primal.abs()) {
                return finish(&alpha, b, primal, dual, iterations);
            }
            let candidate = refine(&gram, &y, &alpha, c);
            let scores = scores_of(&gram, &y, &candidate);
            let (cb, cprimal, cdual) = objectives(&scores, &y, &candidate, c);
            if converged(cprimal, cdual) {
                return finish(&candidate, cb, cprimal, cdual, iterations);
            }
            if cdual > dual {
                alpha = candidate;
                grad = scores.iter().zip(&y).map(|(s, yi)| yi * s - 1.0).collect();
            }
        }
        if iterations >= opts.max_iterations {
            return Err(ClassifyError::NotConverged { iterations });
        }
        let Some((i, j)) = pair else {
            // KKT satisfied to working precision but the gap target is not;
            // nothing left to optimize.
            return Err(ClassifyError::NotConverged { iterations });
        };
        update_pair(&gram, &y, &mut alpha, &mut grad, c, i, j);
        iterations += 1;
    }
}

/// `s_i = w . x_i` recovered from the dual gradient `g_i = y_i s_i - 1`.
fn scores_from_grad(grad: &[f64], y: &[f64]) -> Vec<f64> {
    grad.iter().zip(y).map(|(g, yi)| yi * (g + 1.0)).collect()
}

fn scores_of(gram: &DMatrix<f64>, y: &[f64], alpha: &[f64]) -> Vec<f64> {
    let ay = DVector::from_iterator(y.len(), alpha.iter().zip(y).map(|(a, yi)| a * yi));
    (gram * ay).iter().copied().collect()
}

/// Primal active-set refinement of the dual QP
/// `min 1/2 a'Qa - 1'a` s.t. `y'a = 0`, `0 <= a <= C`, warm-started at `alpha`.
///
/// Each step solves the equality-constrained problem on the free set, moves
/// toward its solution as far as the box allows and pins the blocking
/// variable; at a stationary point the bounded variable that most violates
/// its KKT sign condition is released. Every iterate stays feasible and the
/// objective never increases.
fn refine(gram: &DMatrix<f64>, y: &[f64], alpha: &[f64], c: f64) -> Vec<f64> {
    let n = y.len();
    let eps = 1e-12 * c;
    let mut a = alpha.to_vec();
    let mut free: Vec<bool> = a.iter().map(|&v| v > eps && v < c - eps).collect();
    for _ in 0..4 * n {
        let f_idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let k = f_idx.len();
        if k == 0 {
            break;
        }
        let mut m = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        let mut fixed_part = a.clone();
        for &i in &f_idx {
            fixed_part[i] = 0.0;
        }
        let base = scores_of(gram, y, &fixed_part);
        for (r, &i) in f_idx.iter().enumerate() {
            for (s, &j) in f_idx.iter().enumerate() {
                m[(r, s)] = y[i] * y[j] * gram[(i, j)];
            }
            m[(r, k)] = y[i];
            m[(k, r)] = y[i];
            rhs[r] = 1.0 - y[i] * base[i];
        }
        rhs[k] = -fixed_part.iter().zip(y).map(|(v, yi)| v * yi).sum::<f64>();
        let Ok(sol) = m.svd(true, true).solve(&rhs, 1e-14) else {
            break;
        };
        let nu = sol[k];
        let d: Vec<f64> = f_idx.iter().enumerate().map(|(r, &i)| sol[r] - a[i]).collect();
        let step_size = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let scores = scores_of(gram, y, &a);
        let g: Vec<f64> = scores.iter().zip(y).map(|(s, yi)| yi * s - 1.0).collect();
        if step_size <= 1e-14 * c {
            // Stationary on the free set: release the worst KKT violator.
            let mut worst = (None, 1e-12);
            for i in (0..n).filter(|&i| !free[i]) {
                let r = g[i] + nu * y[i];
                let violation = if a[i] <= eps { -r } else { r };
                if violation > worst.1 {
                    worst = (Some(i), violation);
                }
            }
            match worst.0 {
                Some(i) => free[i] = true,
                None => break,
            }
            continue;
        }
        let slope: f64 = f_idx.iter().zip(&d).map(|(&i, di)| g[i] * di).sum();
        if slope >= 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut blocking = None;
        for (&i, &di) in f_idx.iter().zip(&d) {
            let limit = if di < 0.0 {
                a[i] / -di
            } else if di > 0.0 {
                (c - a[i]) / di
            } else {
                f64::INFINITY
            };
            if limit < t {
                t = limit;
                blocking = Some((i, di < 0.0));
            }
        }
        for (&i, &di) in f_idx.iter().zip(&d) {
            a[i] = (a[i] + t * di).clamp(0.0, c);
        }
        if let Some((i, to_zero)) = blocking {
            a[i] = if to_zero { 0.0 } else { c };
            free[i] = false;
        }
    }
    a
}

fn is_upper(a: f64, c: f64) -> bool {
    a >= c
}

fn is_lower(a: f64) -> bool {
    a <= 0.0
}

/// Maximal-violating pair with second-order selection of the partner.
fn select_pair(
    gram: &DMatrix<f64>,
    y: &[f64],
    alpha: &[f64],
    grad: &[f64],
    c: f64,
) -> Option<(usize, usize)> {
    let n = y.len();
    let mut gmax = f64::NEG_INFINITY;
    let mut i_best = None;
    for t in 0..n {
        let v = -y[t] * grad[t];
        let eligible = if y[t] > 0.0 {
            !is_upper(alpha[t], c)
        } else {
            !is_lower(alpha[t])
        };
        if eligible && v >= gmax {
            gmax = v;
            i_best = Some(t);
        }
    }
    let i = i_best?;
    let mut gmax2 = f64::NEG_INFINITY;
    let mut j_best = None;
    let mut best_obj = f64::INFINITY;
    for t in 0..n {
        let eligible = if y[t] > 0.0 {
            !is_lower(alpha[t])
        } else {
            !is_upper(alpha[t], c)
        };
        if !eligible {
            continue;
        }
        let v = y[t] * grad[t];
        gmax2 = gmax2.max(v);
        let grad_diff = gmax + v;
        if grad_diff > 0.0 {
            let quad = (gram[(i, i)] + gram[(t, t)] - 2.0 * gram[(i, t)]).max(TAU);
            let obj = -grad_diff * grad_diff / quad;
            if obj <= best_obj {
                best_obj = obj;
                j_best = Some(t);
            }
        }
    }
    if gmax + gmax2 < 1e-12 {
        return None;
    }
    j_best.map(|j| (i, j))
}

fn update_pair(
    gram: &DMatrix<f64>,
    y: &[f64],
    alpha: &mut [f64],
    grad: &mut [f64],
    c: f64,
    i: usize,
    j: usize,
) {
    let (old_i, old_j) = (alpha[i], alpha[j]);
    let quad = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(TAU);
    if y[i] != y[j] {
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if diff > 0.0 {
            if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = -diff;
        }
        if diff > 0.0 {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            }
        } else if alpha[j] > c {
            alpha[j] = c;
            alpha[i] = c + diff;
        }
    } else {
        let delta = (grad[i] - grad[j]) / quad;
        let sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if sum > c {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            }
        } else if alpha[j] < 0.0 {
            alpha[j] = 0.0;
            alpha[i] = sum;
        }
        if sum > c {
            if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = sum;
        }
    }
    let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
    for k in 0..y.len() {
        grad[k] += y[k] * (y[i] * gram[(k, i)] * di + y[j] * gram[(k, j)] * dj);
    }
}

/// Best bias for the given scores `s_i = w . x_i`, with primal and dual values.
fn objectives(scores: &[f64], y: &[f64], alpha: &[f64], c: f64) -> (f64, f64, f64) {
    let norm_sq: f64 = alpha
        .iter()
        .zip(y)
        .zip(scores)
        .map(|((a, yi), s)| a * yi * s)
        .sum();
    let (b, hinge) = best_bias(scores, y);
    let half_norm = 0.5 * norm_sq;
    (b, half_norm + c * hinge, alpha.iter().sum::<f64>() - half_norm)
}

/// Minimizes `sum_i max(0, 1 - y_i (s_i + b))` over `b`. The loss is convex
/// and piecewise linear with kinks at `y_i - s_i`; when a whole interval is
/// optimal its midpoint is returned.
fn best_bias(scores: &[f64], y: &[f64]) -> (f64, f64) {
    // Positive terms are active for b below their kink, negative ones above.
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for (s, &yi) in scores.iter().zip(y) {
        if yi > 0.0 {
            pos.push(1.0 - s);
        } else {
            neg.push(-1.0 - s);
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let suffix: Vec<f64> = {
        let mut acc = vec![0.0; pos.len() + 1];
        for i in (0..pos.len()).rev() {
            acc[i] = acc[i + 1] + pos[i];
        }
        acc
    };
    let prefix: Vec<f64> = {
        let mut acc = vec![0.0; neg.len() + 1];
        for i in 0..neg.len() {
            acc[i + 1] = acc[i] + neg[i];
        }
        acc
    };
    let loss = |b: f64| -> f64 {
        let p = pos.partition_point(|&k| k <= b);
        let q = neg.partition_point(|&k| k < b);
        (suffix[p] - b * (pos.len() - p) as f64) + (b * q as f64 - prefix[q])
    };
    let mut kinks: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    kinks.sort_by(f64::total_cmp);
    let values: Vec<f64> = kinks.iter().map(|&b| loss(b)).collect();
    let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + best);
    let lo = values.iter().position(|&v| v <= best + tol).unwrap();
    let hi = values.iter().rposition(|&v| v <= best + tol).unwrap();
    let b = 0.5 * (kinks[lo] + kinks[hi]);
    (b, loss(b).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{fit, Method, Params};

    /// Hard-margin oracle in 2-D: sweep unit directions and keep the one that
    /// maximizes the half-gap between the projected classes.
    fn margin_oracle(neg: &[[f64; 2]], pos: &[[f64; 2]]) -> f64 {
        let gap = |theta: f64| {
            let (u0, u1) = (theta.cos(), theta.sin());
            let hi_neg = neg.iter().map(|p| u0 * p[0] + u1 * p[1]).fold(f64::MIN, f64::max);
            let lo_pos = pos.iter().map(|p| u0 * p[0] + u1 * p[1]).fold(f64::MAX, f64::min);
            0.5 * (lo_pos - hi_neg)
        };
        let steps = 200_000;
        let mut best = (0.0, f64::MIN);
        for k in 0..steps {
            let t = std::f64::consts::TAU * k as f64 / steps as f64;
            let g = gap(t);
            if g > best.1 {
                best = (t, g);
            }
        }
        // golden-section refinement around the best sample
        let h = std::f64::consts::TAU / steps as f64;
        let (mut a, mut b) = (best.0 - h, best.0 + h);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if gap(c) > gap(d) {
                b = d;
            } else {
                a = c;
            }
        }
        gap(0.5 * (a + b))
    }

    #[test]
    fn separable_toy_matches_hard_margin() {
        let neg = [[0.0, 0.0], [1.0, 0.5], [0.2, 1.4], [-0.5, 0.7]];
        let pos = [[2.5, 2.0], [3.0, 0.8], [2.2, 3.1], [4.0, 1.0]];
        let rows: Vec<Vec<f64>> = neg.iter().chain(&pos).map(|p| p.to_vec()).collect();
        let data = LabeledDataset::new(rows, vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        let sol = train_svm(&data, &SvmOptions::new(1e4)).unwrap();
        let w = sol.classifier.weights();
        let oracle = margin_oracle(&neg, &pos);
        let geometric = {
            let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
            let s: Vec<f64> = neg
                .iter()
                .chain(&pos)
                .map(|p| (w[0] * p[0] + w[1] * p[1] - sol.classifier.bias()) / norm)
                .collect();
            let hi_neg = s[..4].iter().cloned().fold(f64::MIN, f64::max);
            let lo_pos = s[4..].iter().cloned().fold(f64::MAX, f64::min);
            0.5 * (lo_pos - hi_neg)
        };
        assert!((geometric - oracle).abs() < 1e-4, "{geometric} vs {oracle}");
        let params = Params::default().with("c", 1e4).unwrap();
        let model = fit(Method::LinearSvm, &data, &params).unwrap();
        assert_eq!(model.error_rate(&data), 0.0);
        assert!(sol.primal - sol.dual <= 1e-6 * sol.primal);
    }

    #[test]
    fn symmetric_pair() {
        let data = LabeledDataset::new(vec![vec![-1.0], vec![1.0]], vec![0, 1]).unwrap();
        let c = fit_linear_svm(&data, 1.0).unwrap();
        assert!((c.weights()[0] - 1.0).abs() < 1e-9);
        assert!(c.bias().abs() < 1e-9);
    }

    #[test]
    fn overlapping_classes_reach_gap_target() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let t = i as f64;
            let class = (i % 2) as i64;
            rows.push(vec![
                (t * 1.37).sin() + 0.4 * class as f64,
                (t * 0.61).cos() - 0.2 * class as f64,
                (t * 2.9).sin() * 0.3,
            ]);
            labels.push(class);
        }
        let data = LabeledDataset::new(rows, labels).unwrap();
        for c in [1e-3, 1e-1, 1.0, 1e2, 1e3] {
            let fit = train_svm(&data, &SvmOptions::new(c)).unwrap();
            assert!(fit.primal - fit.dual <= 1e-6 * fit.primal, "C={c}");
            assert!(fit.primal >= fit.dual - 1e-12);
        }
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let t = i as f64;
            rows.push(vec![(t * 1.1).sin(), (t * 0.3).cos()]);
            labels.push((i % 2) as i64);
        }
        let data = LabeledDataset::new(rows, labels).unwrap();
        let opts = SvmOptions {
            max_iterations: 1,
            ..SvmOptions::new(100.0)
        };
        assert!(matches!(
            train_svm(&data, &opts),
            Err(ClassifyError::NotConverged { .. })
        ));
        assert!(fit_linear_svm(&data, 0.0).is_err());
    }

    #[test]
    fn best_bias_picks_interval_midpoint() {
        let (b, loss) = best_bias(&[-3.0, 3.0], &[-1.0, 1.0]);
        assert_eq!(loss, 0.0);
        assert!(b.abs() < 1e-12);
    }
}
