//! Stratified, seeded cross-validation with a nested parameter sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, ClassifyError, Fitted, LabeledDataset, Method, Params, Result};

/// Candidate values per parameter name.
pub type ParamGrid = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Folds {
    K(usize),
    LeaveOneOut,
}

impl Folds {
    pub fn count(&self, n: usize) -> usize {
        match self {
            Folds::K(k) => *k,
            Folds::LeaveOneOut => n,
        }
    }
}

impl FromStr for Folds {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("loo") {
            return Ok(Folds::LeaveOneOut);
        }
        s.parse::<usize>()
            .map(Folds::K)
            .map_err(|_| ClassifyError::BadParameter(format!("bad fold count '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub method: Method,
    pub folds: Folds,
    pub inner_folds: usize,
    pub grid: ParamGrid,
    pub base: Params,
    pub seed: u64,
}

impl CvConfig {
    /// Five inner folds and the method's default grid.
    pub fn new(method: Method, folds: Folds, seed: u64) -> Self {
        Self {
            method,
            folds,
            inner_folds: 5,
            grid: Self::default_grid(method),
            base: Params::default(),
            seed,
        }
    }

    pub fn default_grid(method: Method) -> ParamGrid {
        let mut grid = ParamGrid::new();
        match method {
            Method::FisherLda => {}
            Method::PenalizedLda => {
                grid.insert("alpha".into(), vec![0.0, 0.01, 0.1, 1.0, 10.0]);
            }
            Method::LinearSvm => {
                grid.insert("c".into(), (-3..=3).map(|e| 10f64.powi(e)).collect());
            }
        }
        grid
    }
}

/// One fold's summary line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_error: f64,
    pub test_error: f64,
    pub params: BTreeMap<String, f64>,
}

/// A trained fold: the model plus what it scored.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub model: Fitted,
    pub params: BTreeMap<String, f64>,
    pub train_error: f64,
    pub test_error: f64,
    pub predictions: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub folds: Vec<FoldResult>,
    pub per_fold_errors: Vec<f64>,
    pub mean_train_error: f64,
    pub mean_test_error: f64,
    pub chosen_params: Vec<BTreeMap<String, f64>>,
    /// Agreement of the pooled out-of-fold predictions with the labels.
    pub kappa: f64,
}

fn format_params(p: &BTreeMap<String, f64>) -> String {
    p.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

impl CvReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method: {}", self.method);
        let _ = writeln!(out, "{:>5}  {:>11}  {:>10}  params", "fold", "train_error", "test_error");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{:>5}  {:>11.4}  {:>10.4}  {}",
                f.fold,
                f.train_error,
                f.test_error,
                format_params(&f.params)
            );
        }
        let _ = writeln!(
            out,
            " mean  {:>11.4}  {:>10.4}",
            self.mean_train_error, self.mean_test_error
        );
        let _ = writeln!(out, "kappa: {:.4}", self.kappa);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fold", "train_error", "test_error", "params"])
            .expect("in-memory write");
        for f in &self.folds {
            w.write_record([
                f.fold.to_string(),
                f.train_error.to_string(),
                f.test_error.to_string(),
                format_params(&f.params),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

/// Fold id per row. Each class is shuffled with `seed` and dealt round-robin,
/// continuing the deal across classes so fold sizes differ by at most one.
/// `k == labels.len()` is leave-one-out and skips the per-class size check.
pub fn stratified_folds(labels: &[i64], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(ClassifyError::BadParameter(format!(
            "fold count {k} must lie in [2, {n}]"
        )));
    }
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; n];
    let mut next = 0;
    for c in classes {
        let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        if k < n && idx.len() < k {
            return Err(ClassifyError::TooFewSamples {
                label: c,
                count: idx.len(),
                folds: k,
            });
        }
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok(assignment)
}

/// Cartesian product of the grid, ordered so that earlier entries carry
/// smaller values (names in key order, each list ascending).
fn expand(grid: &ParamGrid) -> Vec<BTreeMap<String, f64>> {
    let mut combos = vec![BTreeMap::new()];
    for (name, values) in grid {
        let mut values = values.clone();
        values.sort_by(f64::total_cmp);
        values.dedup();
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |&v| {
                    let mut c = c.clone();
                    c.insert(name.clone(), v);
                    c
                })
            })
            .collect();
    }
    combos
}

fn error_of(model: &Fitted, data: &LabeledDataset) -> f64 {
    model.error_rate(data)
}

/// Mean inner validation error of one candidate, or `None` if any inner fit fails.
fn inner_error(
    train: &LabeledDataset,
    folds: &[usize],
    k: usize,
    method: Method,
    params: &Params,
) -> Option<f64> {
    let mut total = 0.0;
    for f in 0..k {
        let fit_idx: Vec<usize> = (0..train.len()).filter(|&i| folds[i] != f).collect();
        let val_idx: Vec<usize> = (0..train.len()).filter(|&i| folds[i] == f).collect();
        let fit_set = train.subset(&fit_idx).ok()?;
        let model = fit(method, &fit_set, params).ok()?;
        let val = train.features().select_rows(&val_idx);
        let wrong = val_idx
            .iter()
            .enumerate()
            .filter(|(r, &i)| {
                let x: Vec<f64> = val.row(*r).iter().copied().collect();
                model.predict(&x) != train.labels()[i]
            })
            .count();
        total += wrong as f64 / val_idx.len() as f64;
    }
    Some(total / k as f64)
}

/// Picks parameters on `train_idx` alone (inner sweep), fits on all of them
/// and scores `test_idx`.
///
/// The inner fold count shrinks to the smallest training class when needed;
/// below two the first grid point is used without a sweep.
pub fn run_fold(
    data: &LabeledDataset,
    config: &CvConfig,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<FoldOutcome> {
    let train = data.subset(train_idx)?;
    let combos = expand(&config.grid);
    let sweep = config.method != Method::FisherLda && combos.len() > 1;

    let chosen = if sweep {
        let smallest = train
            .rows_by_class()
            .iter()
            .map(|(_, idx)| idx.len())
            .min()
            .unwrap_or(0);
        let k = config.inner_folds.min(smallest);
        if k >= 2 {
            let folds = stratified_folds(train.labels(), k, config.seed)?;
            let scores: Vec<Option<f64>> = combos
                .par_iter()
                .map(|c| {
                    let p = config.base.apply(c).ok()?;
                    inner_error(&train, &folds, k, config.method, &p)
                })
                .collect();
            let mut best: Option<(usize, f64)> = None;
            for (i, s) in scores.iter().enumerate() {
                if let Some(e) = *s {
                    if best.is_none_or(|(_, b)| e < b) {
                        best = Some((i, e));
                    }
                }
            }
            best.map_or_else(|| combos[0].clone(), |(i, _)| combos[i].clone())
        } else {
            combos[0].clone()
        }
    } else {
        combos.into_iter().next().unwrap_or_default()
    };

    let params = config.base.apply(&chosen)?;
    let model = fit(config.method, &train, &params)?;
    let train_error = error_of(&model, &train);
    let predictions: Vec<i64> = test_idx
        .iter()
        .map(|&i| model.predict(&data.row(i)))
        .collect();
    let wrong = predictions
        .iter()
        .zip(test_idx)
        .filter(|(p, &i)| **p != data.labels()[i])
        .count();
    let test_error = if test_idx.is_empty() {
        0.0
    } else {
        wrong as f64 / test_idx.len() as f64
    };
    Ok(FoldOutcome {
        model,
        params: chosen,
        train_error,
        test_error,
        predictions,
    })
}

/// Outer stratified folds, each trained independently (and concurrently);
/// results are assembled in fold order.
pub fn cross_validate(data: &LabeledDataset, config: &CvConfig) -> Result<CvReport> {
    let k = config.folds.count(data.len());
    let assignment = stratified_folds(data.labels(), k, config.seed)?;
    let outcomes: Vec<Result<(Vec<usize>, FoldOutcome)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == f).collect();
            run_fold(data, config, &train, &test).map(|o| (test, o))
        })
        .collect();

    let mut folds = Vec::with_capacity(k);
    let mut pooled = vec![0i64; data.len()];
    for (f, outcome) in outcomes.into_iter().enumerate() {
        let (test, o) = outcome?;
        for (&i, &p) in test.iter().zip(&o.predictions) {
            pooled[i] = p;
        }
        folds.push(FoldResult {
            fold: f,
            train_error: o.train_error,
            test_error: o.test_error,
            params: o.params,
        });
    }
    let mean = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>() / k as f64;
    Ok(CvReport {
        method: config.method,
        per_fold_errors: folds.iter().map(|f| f.test_error).collect(),
        mean_train_error: mean(&mut folds.iter().map(|f| f.train_error)),
        mean_test_error: mean(&mut folds.iter().map(|f| f.test_error)),
        chosen_params: folds.iter().map(|f| f.params.clone()).collect(),
        kappa: cohen_kappa(data.labels(), &pooled),
        folds,
    })
}

/// Cohen's kappa between two label sequences. Returns 1 for perfect agreement
/// even when chance agreement is also 1.
pub fn cohen_kappa(truth: &[i64], predicted: &[i64]) -> f64 {
    let n = truth.len().min(predicted.len());
    if n == 0 {
        return 0.0;
    }
    let observed = truth.iter().zip(predicted).filter(|(a, b)| a == b).count() as f64 / n as f64;
    let mut counts: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        counts.entry(t).or_default().0 += 1;
        counts.entry(p).or_default().1 += 1;
    }
    let chance: f64 = counts
        .values()
        .map(|&(a, b)| (a as f64 / n as f64) * (b as f64 / n as f64))
        .sum();
    if (1.0 - chance).abs() < 1e-15 {
        return if observed == 1.0 { 1.0 } else { 0.0 };
    }
    (observed - chance) / (1.0 - chance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n_per: usize, gap: f64) -> LabeledDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for i in 0..n_per {
                let t = (i * 2 + c) as f64;
                rows.push(vec![
                    c as f64 * gap + (t * 1.3).sin(),
                    (t * 0.7).cos(),
                    (t * 2.9).sin() * 0.5,
                ]);
                labels.push(c as i64);
            }
        }
        LabeledDataset::new(rows, labels).unwrap()
    }

    #[test]
    fn folds_are_stratified_and_balanced() {
        let labels: Vec<i64> = (0..23).map(|i| i64::from(i % 3 == 0)).collect();
        let f = stratified_folds(&labels, 5, 7).unwrap();
        let mut sizes = [0; 5];
        for &v in &f {
            sizes[v] += 1;
        }
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(f, stratified_folds(&labels, 5, 7).unwrap());
    }

    #[test]
    fn too_few_samples() {
        let labels = vec![0, 0, 0, 0, 0, 1, 1];
        assert_eq!(
            stratified_folds(&labels, 3, 0).unwrap_err(),
            ClassifyError::TooFewSamples {
                label: 1,
                count: 2,
                folds: 3
            }
        );
        // leave-one-out is exempt
        let f = stratified_folds(&labels, 7, 0).unwrap();
        let mut sorted = f.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn separable_data_has_zero_error() {
        let data = blobs(15, 10.0);
        for m in Method::ALL {
            let report = cross_validate(&data, &CvConfig::new(m, Folds::K(5), 3)).unwrap();
            assert_eq!(report.mean_test_error, 0.0, "{m}");
            assert_eq!(report.per_fold_errors.len(), 5);
            assert_eq!(report.kappa, 1.0);
        }
    }

    #[test]
    fn shuffled_labels_near_chance() {
        let data = blobs(20, 0.0);
        let mut total = 0.0;
        for seed in 0..20 {
            let mut labels = data.labels().to_vec();
            labels.shuffle(&mut ChaCha8Rng::seed_from_u64(1000 + seed));
            let shuffled = data.relabeled(labels).unwrap();
            let cfg = CvConfig::new(Method::FisherLda, Folds::K(5), seed);
            total += cross_validate(&shuffled, &cfg).unwrap().mean_test_error;
        }
        let mean = total / 20.0;
        assert!((mean - 0.5).abs() <= 0.1, "mean {mean}");
    }

    #[test]
    fn test_rows_do_not_leak() {
        let data = blobs(12, 1.5);
        let cfg = CvConfig::new(Method::LinearSvm, Folds::K(4), 11);
        let train: Vec<usize> = (0..24).filter(|i| i % 4 != 0).collect();
        let test: Vec<usize> = (0..24).filter(|i| i % 4 == 0).collect();
        let full = run_fold(&data, &cfg, &train, &test).unwrap();
        let fewer = run_fold(&data, &cfg, &train, &test[1..]).unwrap();
        assert_eq!(full.params, fewer.params);
        assert_eq!(full.model, fewer.model);
    }

    #[test]
    fn leave_one_out_runs_every_row() {
        let data = blobs(10, 4.0);
        let cfg = CvConfig::new(Method::PenalizedLda, Folds::LeaveOneOut, 5);
        let report = cross_validate(&data, &cfg).unwrap();
        assert_eq!(report.folds.len(), 20);
        assert!(report.chosen_params.iter().all(|p| p.contains_key("alpha")));
    }

    #[test]
    fn reports_are_deterministic_and_serializable() {
        let data = blobs(10, 1.0);
        let cfg = CvConfig::new(Method::LinearSvm, Folds::K(5), 9);
        let a = cross_validate(&data, &cfg).unwrap();
        let b = cross_validate(&data, &cfg).unwrap();
        assert_eq!(a, b);
        let csv = a.to_csv();
        assert!(csv.starts_with("fold,train_error,test_error,params\n"));
        assert_eq!(csv.lines().count(), 6);
        assert!(a.to_table().contains("kappa"));
    }

    #[test]
    fn kappa_values() {
        assert_eq!(cohen_kappa(&[0, 1, 0, 1], &[0, 1, 0, 1]), 1.0);
        assert!((cohen_kappa(&[0, 1, 0, 1], &[1, 0, 1, 0]) + 1.0).abs() < 1e-12);
        assert_eq!(cohen_kappa(&[0, 0, 1, 1], &[0, 0, 0, 0]), 0.0);
    }

    #[test]
    fn grid_order_prefers_small_values() {
        let mut g = ParamGrid::new();
        g.insert("c".into(), vec![10.0, 0.1, 1.0]);
        let combos = expand(&g);
        assert_eq!(combos[0]["c"], 0.1);
        assert_eq!(combos.len(), 3);
    }
}
