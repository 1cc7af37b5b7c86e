//! Cross-module properties of the transform, the generators and the
//! classifiers, checked on the public API only.

use std::sync::Arc;

use cdtkit::cdt::{forward, scale_oracle, translate_oracle, CdtSignal, Reference};
use cdtkit::classify::{
    certificate_residual, check_linear_separability, fit, LabeledDataset, Method, Params,
    Separability,
};
use cdtkit::datagen::{sample_class, ClassId, ConfoundFamily, GenerativeSpec, ParamRange};
use cdtkit::density::DiscreteDensity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn normal_pdf(mean: f64, sd: f64) -> impl Fn(f64) -> f64 {
    move |x| (-0.5 * ((x - mean) / sd).powi(2)).exp()
}

fn weighted_l2(a: &CdtSignal, b: &[f64]) -> f64 {
    let w = a.reference().weight();
    (w * a.values().iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).sqrt()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn transform_of_a_mixture_is_not_the_mixture_of_transforms() {
    let r = Reference::uniform(512).unwrap();
    let n = 2000;
    let normal = DiscreteDensity::from_fn(normal_pdf(0.5, 0.1), 0.0, 1.0, n, 0.0).unwrap();
    let uniform = DiscreteDensity::uniform(0.0, 1.0, n).unwrap();
    let mix: Vec<f64> = normal
        .values()
        .iter()
        .zip(uniform.values())
        .map(|(a, b)| 0.5 * a + 0.5 * b)
        .collect();
    let mix = DiscreteDensity::on_interval(&mix, 0.0, 1.0, 0.0).unwrap();

    let t_mix = forward(&mix, &r).unwrap();
    let t1 = forward(&normal, &r).unwrap();
    let t2 = forward(&uniform, &r).unwrap();
    let avg: Vec<f64> = t1
        .values()
        .iter()
        .zip(t2.values())
        .map(|(a, b)| 0.5 * a + 0.5 * b)
        .collect();
    let diff = weighted_l2(&t_mix, &avg);
    assert!(diff > 0.01, "L2 difference {diff}");
}

/// A strictly positive, markedly non-uniform reference on [0, 1].
fn skewed_reference(m: usize) -> Arc<Reference> {
    let d = DiscreteDensity::from_fn(|x| 0.3 + 2.0 * x * x, 0.0, 1.0, 400, 0.0).unwrap();
    Reference::new(d, m).unwrap()
}

#[test]
fn translation_and_scaling_identities_hold_for_any_reference() {
    let n = 4000;
    let (mean, sd) = (0.0, 0.5);
    let base = |lo: f64, hi: f64, mean: f64, sd: f64| {
        DiscreteDensity::from_fn(normal_pdf(mean, sd), lo, hi, n, 0.0).unwrap()
    };
    for r in [Reference::uniform(256).unwrap(), skewed_reference(256)] {
        let t = forward(&base(-3.0, 3.0, mean, sd), &r).unwrap();

        let mu = 0.7;
        let shifted = forward(&base(-3.0 + mu, 3.0 + mu, mean + mu, sd), &r).unwrap();
        let predicted = translate_oracle(&t, mu);
        assert!(max_gap(predicted.values(), shifted.values()) < 1e-3);

        // a * I(a x) is the law of X / a
        let a = 1.6;
        let dilated = forward(&base(-3.0 / a, 3.0 / a, mean / a, sd / a), &r).unwrap();
        let predicted = scale_oracle(&t, a).unwrap();
        assert!(max_gap(predicted.values(), dilated.values()) < 1e-3);
    }
}

#[test]
fn generated_maps_compose_back_to_the_mother() {
    let (lo, hi, n) = (-2.0, 4.0, 6000);
    let p = DiscreteDensity::from_fn(normal_pdf(0.5, 0.15), lo, hi, n, 0.0).unwrap();
    let q = DiscreteDensity::from_fn(normal_pdf(0.5, 0.25), lo, hi, n, 0.0).unwrap();
    let family = ConfoundFamily::affine(ParamRange::new(0.0, 0.5), ParamRange::new(0.6, 1.67), 17);
    let spec = GenerativeSpec::new(p, q, family, 6).unwrap();
    let r = Reference::uniform(256).unwrap();

    for which in [ClassId::P, ClassId::Q] {
        let f0 = forward(spec.mother(which), &r).unwrap().transport_map();
        for sample in sample_class(&spec, which).unwrap() {
            let fi = forward(&sample.density, &r).unwrap().transport_map();
            let composed: Vec<f64> = fi
                .iter()
                .map(|&x| sample.confound.apply(x).unwrap())
                .collect();
            let gap = max_gap(&composed, &f0);
            assert!(gap <= 1e-3, "{which:?} {:?}: {gap}", sample.confound);
        }
    }
}

fn gaussian_blobs(rng: &mut ChaCha8Rng, per_class: usize, dim: usize, gap: f64) -> LabeledDataset {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for label in 0..2 {
        for _ in 0..per_class {
            let row = (0..dim)
                .map(|j| {
                    let g: f64 = (0..6).map(|_| rng.random::<f64>()).sum::<f64>() - 3.0;
                    g + if j == 0 && label == 1 { gap } else { 0.0 }
                })
                .collect();
            rows.push(row);
            labels.push(label);
        }
    }
    LabeledDataset::new(rows, labels).unwrap()
}

fn scaled(data: &LabeledDataset, gamma: f64) -> LabeledDataset {
    let rows = (0..data.len())
        .map(|i| data.row(i).iter().map(|v| v * gamma).collect())
        .collect();
    LabeledDataset::new(rows, data.labels().to_vec()).unwrap()
}

#[test]
fn predictions_are_unchanged_by_feature_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = gaussian_blobs(&mut rng, 25, 5, 1.2);
    for method in [Method::FisherLda, Method::PenalizedLda, Method::LinearSvm] {
        let params = Params::default();
        let base = fit(method, &data, &params).unwrap().predict_all(&data);
        for gamma in [0.01, 3.0, 250.0] {
            let s = scaled(&data, gamma);
            let got = fit(method, &s, &params).unwrap().predict_all(&s);
            assert_eq!(got, base, "{method:?} at scale {gamma}");
        }
    }
}

fn point_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize, offset: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|j| rng.random_range(-1.0..1.0) + if j == 0 { offset } else { 0.0 })
                .collect()
        })
        .collect()
}

#[test]
fn separability_answers_carry_sound_evidence() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut separable, mut inseparable) = (0, 0);
    for case in 0..40 {
        let dim = 2 + case % 4;
        let offset = rng.random_range(0.0..3.0);
        let a = point_cloud(&mut rng, 4 + case % 7, dim, 0.0);
        let b = point_cloud(&mut rng, 3 + case % 5, dim, offset);
        match check_linear_separability(&a, &b).unwrap() {
            Separability::Separable { witness } => {
                separable += 1;
                assert!(a.iter().all(|x| witness.decision(x) < 0.0));
                assert!(b.iter().all(|x| witness.decision(x) > 0.0));
            }
            Separability::Inseparable { alpha, beta } => {
                inseparable += 1;
                for weights in [&alpha, &beta] {
                    assert!(weights.iter().all(|&(_, w)| w > 0.0));
                    let total: f64 = weights.iter().map(|&(_, w)| w).sum();
                    assert!((total - 1.0).abs() < 1e-9);
                }
                assert!(certificate_residual(&a, &b, &alpha, &beta) <= 1e-8);
            }
        }
    }
    assert!(separable > 0 && inseparable > 0, "{separable} / {inseparable}");
}
