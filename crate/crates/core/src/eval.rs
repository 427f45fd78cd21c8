//! Evaluation metrics for synthetic tabular data: TSTR, real-vs-fake
//! discriminator, inverse KL over per-feature histograms, k-NN density and
//! coverage, and distance to closest record (DCR).

use rand::seq::SliceRandom;
use serde::Serialize;
use thiserror::Error;

use crate::predictor::{self, PredictError, PredictorSpec};
use crate::rng;
use crate::table::{ColumnKind, Dataset, Task, Value};

/// Histogram bin count for continuous features in the inverse KL score.
pub const DEFAULT_KL_BINS: usize = 20;
/// Neighborhood size for density and coverage.
pub const DEFAULT_KNN_K: usize = 2;
const DCR_HIST_BINS: usize = 20;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("datasets have different schemas")]
    SchemaMismatch,
    #[error("need at least {need} points, got {have}")]
    TooFewPoints { have: usize, need: usize },
    #[error("synthetic point set is empty")]
    EmptyFake,
    #[error("dataset has too few rows for a {0} split")]
    TooFewRows(&'static str),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

/// Maps rows into one Euclidean space: z-scored continuous features
/// (statistics from the real data; zero-variance features dropped) followed
/// by one-hot categorical blocks (category sets from the real data; unseen
/// categories embed as all-zero blocks).
#[derive(Debug, Clone)]
pub struct Embedding {
    continuous: Vec<(usize, f64, f64)>,     // feature, mean, std
    categorical: Vec<(usize, Vec<String>)>, // feature, categories in sort order
    dim: usize,
}

impl Embedding {
    /// Fit embedding statistics on the real dataset's feature columns.
    pub fn fit(real: &Dataset) -> Embedding {
        let schema = real.schema();
        let mut continuous = Vec::new();
        let mut categorical = Vec::new();
        for (j, kind) in schema.feature_kinds().iter().enumerate() {
            match kind {
                ColumnKind::Continuous => {
                    let n = real.len() as f64;
                    let sum: f64 = (0..real.len())
                        .map(|i| real.features(i)[j].as_num().expect("continuous"))
                        .sum();
                    let mean = sum / n;
                    let var: f64 = (0..real.len())
                        .map(|i| {
                            let x = real.features(i)[j].as_num().expect("continuous");
                            (x - mean) * (x - mean)
                        })
                        .sum::<f64>()
                        / n;
                    let std = var.sqrt();
                    if std > 0.0 {
                        continuous.push((j, mean, std));
                    }
                }
                ColumnKind::Categorical => {
                    let mut cats: Vec<String> = (0..real.len())
                        .map(|i| real.features(i)[j].render())
                        .collect();
                    cats.sort();
                    cats.dedup();
                    categorical.push((j, cats));
                }
            }
        }
        let dim = continuous.len() + categorical.iter().map(|(_, c)| c.len()).sum::<usize>();
        Embedding {
            continuous,
            categorical,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_row(&self, features: &[Value]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        for &(j, mean, std) in &self.continuous {
            let x = features[j].as_num().expect("continuous feature");
            out.push((x - mean) / std);
        }
        for (j, cats) in &self.categorical {
            let value = features[*j].render();
            for cat in cats {
                out.push(if *cat == value { 1.0 } else { 0.0 });
            }
        }
        out
    }

    pub fn embed(&self, ds: &Dataset) -> Vec<Vec<f64>> {
        (0..ds.len())
            .map(|i| self.embed_row(ds.features(i)))
            .collect()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc.sqrt()
}

/// Distance from each point to its k-th nearest *other* point.
pub fn knn_radius(points: &[Vec<f64>], k: usize) -> Result<Vec<f64>, EvalError> {
    if points.len() < k + 1 {
        return Err(EvalError::TooFewPoints {
            have: points.len(),
            need: k + 1,
        });
    }
    let mut radii = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len() - 1);
    for (i, p) in points.iter().enumerate() {
        dists.clear();
        for (j, q) in points.iter().enumerate() {
            if i != j {
                dists.push(euclidean(p, q));
            }
        }
        dists.sort_by(f64::total_cmp);
        radii.push(dists[k - 1]);
    }
    Ok(radii)
}

/// How many synthetic points land inside the closed k-NN balls of the real
/// points, normalized by `k * |real|`.
pub fn density(real: &[Vec<f64>], fake: &[Vec<f64>], k: usize) -> Result<f64, EvalError> {
    let radii = knn_radius(real, k)?;
    let mut count = 0usize;
    for f in fake {
        for (r, radius) in real.iter().zip(&radii) {
            if euclidean(f, r) <= *radius {
                count += 1;
            }
        }
    }
    Ok(count as f64 / (k as f64 * real.len() as f64))
}

/// Fraction of real points whose closed k-NN ball contains at least one
/// synthetic point.
pub fn coverage(real: &[Vec<f64>], fake: &[Vec<f64>], k: usize) -> Result<f64, EvalError> {
    let radii = knn_radius(real, k)?;
    let covered = real
        .iter()
        .zip(&radii)
        .filter(|(r, radius)| fake.iter().any(|f| euclidean(f, r) <= **radius))
        .count();
    Ok(covered as f64 / real.len() as f64)
}

/// Distribution summary of per-point DCR values.
#[derive(Debug, Clone, Serialize)]
pub struct DcrSummary {
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// `(bin_left, count)` over 20 equal-width bins spanning `[0, max]`.
    pub histogram: Vec<(f64, usize)>,
}

/// Per real point, the minimum Euclidean distance to any synthetic point.
pub fn dcr(real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<(Vec<f64>, DcrSummary), EvalError> {
    if fake.is_empty() {
        return Err(EvalError::EmptyFake);
    }
    let values: Vec<f64> = real
        .iter()
        .map(|r| {
            fake.iter()
                .map(|f| euclidean(r, f))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let max = sorted[n - 1];
    let width = max / DCR_HIST_BINS as f64;
    let mut histogram: Vec<(f64, usize)> = (0..DCR_HIST_BINS)
        .map(|b| (b as f64 * width, 0usize))
        .collect();
    for &v in &values {
        let bin = if width > 0.0 {
            ((v / width) as usize).min(DCR_HIST_BINS - 1)
        } else {
            0
        };
        histogram[bin].1 += 1;
    }
    let summary = DcrSummary {
        min: sorted[0],
        mean: values.iter().sum::<f64>() / n as f64,
        median,
        max,
        histogram,
    };
    Ok((values, summary))
}

fn smoothed_kl(real_counts: &[usize], fake_counts: &[usize], n_real: usize, n_fake: usize) -> f64 {
    let bins = real_counts.len();
    let mut kl = 0.0;
    for b in 0..bins {
        let p = (real_counts[b] as f64 + 1.0) / (n_real as f64 + bins as f64);
        let q = (fake_counts[b] as f64 + 1.0) / (n_fake as f64 + bins as f64);
        kl += p * (p / q).ln();
    }
    kl
}

/// Mean over features of `1 / (1 + KL(real || fake))`, with per-feature
/// histograms: categories over the union of observed values, continuous
/// features in `bins` equal-width bins over the real range (fake values
/// clipped), both Laplace-smoothed with alpha = 1. KL is in nats. The
/// target column is excluded.
pub fn inverse_kl(real: &Dataset, fake: &Dataset, bins: usize) -> Result<f64, EvalError> {
    if real.schema() != fake.schema() {
        return Err(EvalError::SchemaMismatch);
    }
    let schema = real.schema();
    let m = schema.num_features();
    let mut total = 0.0;
    for j in 0..m {
        let kl = match schema.feature_kinds()[j] {
            ColumnKind::Categorical => {
                let mut union: Vec<String> = (0..real.len())
                    .map(|i| real.features(i)[j].render())
                    .chain((0..fake.len()).map(|i| fake.features(i)[j].render()))
                    .collect();
                union.sort();
                union.dedup();
                let count = |ds: &Dataset| -> Vec<usize> {
                    let mut c = vec![0usize; union.len()];
                    for i in 0..ds.len() {
                        let v = ds.features(i)[j].render();
                        let pos = union.binary_search(&v).expect("value is in union");
                        c[pos] += 1;
                    }
                    c
                };
                smoothed_kl(&count(real), &count(fake), real.len(), fake.len())
            }
            ColumnKind::Continuous => {
                let xs: Vec<f64> = (0..real.len())
                    .map(|i| real.features(i)[j].as_num().expect("continuous"))
                    .collect();
                let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let width = (hi - lo) / bins as f64;
                let bin_of = |x: f64| -> usize {
                    let clipped = x.clamp(lo, hi);
                    if width > 0.0 {
                        (((clipped - lo) / width) as usize).min(bins - 1)
                    } else {
                        0
                    }
                };
                let mut rc = vec![0usize; bins];
                for &x in &xs {
                    rc[bin_of(x)] += 1;
                }
                let mut fc = vec![0usize; bins];
                for i in 0..fake.len() {
                    fc[bin_of(fake.features(i)[j].as_num().expect("continuous"))] += 1;
                }
                smoothed_kl(&rc, &fc, real.len(), fake.len())
            }
        };
        total += 1.0 / (1.0 + kl);
    }
    Ok(total / m as f64)
}

/// Train-on-synthetic-test-on-real score: accuracy for classification, MSE
/// for regression. A single-class synthetic dataset on a classification
/// task scores 0 (no usable predictor can be trained from it).
pub fn tstr(fake: &Dataset, test: &Dataset, spec: &PredictorSpec) -> Result<f64, EvalError> {
    if fake.schema() != test.schema() {
        return Err(EvalError::SchemaMismatch);
    }
    let schema = fake.schema();
    let rows: Vec<Vec<Value>> = (0..fake.len()).map(|i| fake.features(i).to_vec()).collect();
    let labels: Vec<Value> = (0..fake.len()).map(|i| fake.target(i).clone()).collect();
    if schema.task() == Task::Classification && fake.classes().len() < 2 {
        return Ok(0.0);
    }
    let model = predictor::fit(spec, &rows, schema.feature_kinds(), &labels, schema.task())?;
    let test_rows: Vec<Vec<Value>> = (0..test.len()).map(|i| test.features(i).to_vec()).collect();
    let test_labels: Vec<Value> = (0..test.len()).map(|i| test.target(i).clone()).collect();
    Ok(match schema.task() {
        Task::Classification => predictor::accuracy(model.as_ref(), &test_rows, &test_labels),
        Task::Regression => predictor::mse(model.as_ref(), &test_rows, &test_labels),
    })
}

/// Held-out accuracy of a classifier separating real rows (label `real`)
/// from fake rows (label `fake`). Sides are balanced by seeded
/// down-sampling of the larger one, then split 80/20 per side. Chance level
/// (0.5) means the two datasets are indistinguishable. Full rows (target
/// column included) are the discriminator input.
pub fn discriminator_accuracy(
    real: &Dataset,
    fake: &Dataset,
    spec: &PredictorSpec,
    seed: u64,
) -> Result<f64, EvalError> {
    if real.schema() != fake.schema() {
        return Err(EvalError::SchemaMismatch);
    }
    let mut rng = rng::substream(seed, 0xd15c, 0);
    let n = real.len().min(fake.len());
    if n < 2 {
        return Err(EvalError::TooFewRows("discriminator"));
    }
    let pick = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(rng);
        idx.truncate(n);
        idx.sort_unstable();
        idx
    };
    let real_idx = pick(real.len(), &mut rng);
    let fake_idx = pick(fake.len(), &mut rng);

    // per-side 80/20 keeps the classes balanced in train and test
    let n_test = (((n as f64) * 0.2).round() as usize).clamp(1, n - 1);
    let mut split_side = |idx: &[usize], rng: &mut rand_chacha::ChaCha8Rng| {
        let mut order = idx.to_vec();
        order.shuffle(rng);
        (order[n_test..].to_vec(), order[..n_test].to_vec())
    };
    let (real_train, real_test) = split_side(&real_idx, &mut rng);
    let (fake_train, fake_test) = split_side(&fake_idx, &mut rng);

    let mut kinds: Vec<ColumnKind> = real.schema().feature_kinds().to_vec();
    kinds.push(real.schema().target_kind());

    let mut train_rows = Vec::with_capacity(real_train.len() + fake_train.len());
    let mut train_labels = Vec::with_capacity(real_train.len() + fake_train.len());
    for &i in &real_train {
        train_rows.push(real.row(i).to_vec());
        train_labels.push(Value::Cat("real".into()));
    }
    for &i in &fake_train {
        train_rows.push(fake.row(i).to_vec());
        train_labels.push(Value::Cat("fake".into()));
    }
    let model = predictor::fit(
        &spec.with_seed(rng::subseed(seed, 0xd15c, 1)),
        &train_rows,
        &kinds,
        &train_labels,
        Task::Classification,
    )?;

    let mut hits = 0usize;
    let mut total = 0usize;
    for &i in &real_test {
        total += 1;
        if model.predict_row(real.row(i)) == Value::Cat("real".into()) {
            hits += 1;
        }
    }
    for &i in &fake_test {
        total += 1;
        if model.predict_row(fake.row(i)) == Value::Cat("fake".into()) {
            hits += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// All metrics of one evaluation run.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    /// Accuracy (classification) or MSE (regression).
    pub tstr_score: f64,
    pub discriminator_accuracy: f64,
    /// `max(0, 2 * accuracy - 1)`: 0 means indistinguishable.
    pub discriminator_normalized: f64,
    pub inverse_kl: f64,
    pub density: f64,
    pub coverage: f64,
    pub dcr: DcrSummary,
}

/// Run every metric with one shared embedding fitted on `real`.
pub fn evaluate_all(
    real: &Dataset,
    fake: &Dataset,
    test: &Dataset,
    spec: &PredictorSpec,
) -> Result<MetricsReport, EvalError> {
    if real.schema() != fake.schema() || real.schema() != test.schema() {
        return Err(EvalError::SchemaMismatch);
    }
    let embedding = Embedding::fit(real);
    let real_pts = embedding.embed(real);
    let fake_pts = embedding.embed(fake);
    let tstr_score = tstr(fake, test, spec)?;
    let disc = discriminator_accuracy(real, fake, spec, spec.seed)?;
    let inv_kl = inverse_kl(real, fake, DEFAULT_KL_BINS)?;
    let den = density(&real_pts, &fake_pts, DEFAULT_KNN_K)?;
    let cov = coverage(&real_pts, &fake_pts, DEFAULT_KNN_K)?;
    let (_, dcr_summary) = dcr(&real_pts, &fake_pts)?;
    Ok(MetricsReport {
        tstr_score,
        discriminator_accuracy: disc,
        discriminator_normalized: (2.0 * disc - 1.0).max(0.0),
        inverse_kl: inv_kl,
        density: den,
        coverage: cov,
        dcr: dcr_summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::table::{Schema, Task};

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn knn_radii_hand_case() {
        let radii = knn_radius(&pts(&[0.0, 1.0, 2.0, 3.0]), 2).unwrap();
        assert_eq!(radii, vec![2.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn knn_radius_k1_two_points() {
        let radii = knn_radius(&pts(&[0.0, 5.0]), 1).unwrap();
        assert_eq!(radii, vec![5.0, 5.0]);
    }

    #[test]
    fn knn_radius_coincident_points() {
        let radii = knn_radius(&pts(&[1.0, 1.0, 4.0]), 1).unwrap();
        assert_eq!(radii[0], 0.0);
        assert_eq!(radii[1], 0.0);
    }

    #[test]
    fn knn_radius_needs_enough_points() {
        assert!(matches!(
            knn_radius(&pts(&[0.0, 1.0]), 2),
            Err(EvalError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn density_hand_case() {
        let p = pts(&[0.0, 1.0, 2.0, 3.0]);
        let den = density(&p, &p, 2).unwrap();
        assert!((den - 1.5).abs() < 1e-12);
    }

    #[test]
    fn density_of_distant_fake_is_zero() {
        let real = pts(&[0.0, 1.0, 2.0, 3.0]);
        let fake = pts(&[1e6, 2e6]);
        assert_eq!(density(&real, &fake, 2).unwrap(), 0.0);
    }

    #[test]
    fn coverage_hand_case() {
        let real = pts(&[0.0, 1.0, 2.0, 3.0]);
        let fake = pts(&[0.5]);
        assert!((coverage(&real, &fake, 2).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coverage_extremes() {
        let real = pts(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(coverage(&real, &real, 2).unwrap(), 1.0);
        assert_eq!(coverage(&real, &pts(&[1e9]), 2).unwrap(), 0.0);
    }

    #[test]
    fn dcr_hand_cases() {
        let real = vec![vec![0.0, 0.0]];
        let fake = vec![vec![3.0, 4.0], vec![1.0, 1.0]];
        let (values, summary) = dcr(&real, &fake).unwrap();
        assert!((values[0] - 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(summary.min, summary.max);

        let real = pts(&[0.0, 1.0, 2.0]);
        let (values, summary) = dcr(&real, &real).unwrap();
        assert!(values.iter().all(|&v| v == 0.0));
        assert_eq!(summary.max, 0.0);
        assert_eq!(summary.histogram[0].1, 3);
        assert_eq!(summary.histogram.len(), 20);
    }

    #[test]
    fn dcr_rejects_empty_fake() {
        assert!(matches!(dcr(&pts(&[0.0]), &[]), Err(EvalError::EmptyFake)));
    }

    fn binary_feature_dataset(counts: (usize, usize)) -> Dataset {
        let schema = Schema::new(
            vec!["f".into()],
            vec![ColumnKind::Categorical],
            "y".into(),
            Task::Classification,
        )
        .unwrap();
        let mut rows = Vec::new();
        for _ in 0..counts.0 {
            rows.push(vec![Value::Cat("a".into()), Value::Cat("t".into())]);
        }
        for _ in 0..counts.1 {
            rows.push(vec![Value::Cat("b".into()), Value::Cat("t".into())]);
        }
        Dataset::new(schema, rows).unwrap()
    }

    #[test]
    fn inverse_kl_hand_case() {
        // real (2,2), fake (4,0), alpha=1: p=(1/2,1/2), q=(5/6,1/6);
        // KL = 0.5 ln(1.8) = 0.2938933...; InvKL = 0.7728612...
        let real = binary_feature_dataset((2, 2));
        let fake = binary_feature_dataset((4, 0));
        let inv = inverse_kl(&real, &fake, DEFAULT_KL_BINS).unwrap();
        assert!((inv - 0.7728612358683935).abs() < 1e-12, "inv = {inv}");
    }

    #[test]
    fn inverse_kl_identical_is_one() {
        let ds = datasets::rule_dataset(50, 3);
        assert_eq!(inverse_kl(&ds, &ds, DEFAULT_KL_BINS).unwrap(), 1.0);
    }

    #[test]
    fn inverse_kl_bounds() {
        let real = binary_feature_dataset((40, 0));
        let fake = binary_feature_dataset((0, 40));
        let inv = inverse_kl(&real, &fake, DEFAULT_KL_BINS).unwrap();
        assert!(inv > 0.0 && inv < 1.0);
    }

    #[test]
    fn tstr_identical_fake_matches_train_on_real() {
        let ds = datasets::rule_dataset(300, 7);
        let (train, test) = ds.split(0.2, 0).unwrap();
        let spec = PredictorSpec::default();
        let on_fake = tstr(&train, &test, &spec).unwrap();
        let on_real = tstr(&train, &test, &spec).unwrap();
        assert_eq!(on_fake, on_real);
        assert!(on_real > 0.95, "rule data should be learnable: {on_real}");
    }

    #[test]
    fn tstr_single_class_fake_scores_zero() {
        let ds = datasets::rule_dataset(100, 7);
        let (train, test) = ds.split(0.2, 0).unwrap();
        let one_class_rows: Vec<Vec<Value>> = (0..train.len())
            .map(|i| {
                let mut row = train.row(i).to_vec();
                let m = train.schema().num_features();
                row[m] = Value::Cat("alpha".into());
                row
            })
            .collect();
        let fake = Dataset::new(train.schema().clone(), one_class_rows).unwrap();
        assert_eq!(tstr(&fake, &test, &PredictorSpec::default()).unwrap(), 0.0);
    }

    #[test]
    fn discriminator_separable_point_masses() {
        let schema = Schema::new(
            vec!["x".into(), "y".into()],
            vec![ColumnKind::Continuous, ColumnKind::Continuous],
            "t".into(),
            Task::Classification,
        )
        .unwrap();
        let real_rows: Vec<Vec<Value>> = (0..40)
            .map(|_| vec![Value::Num(0.0), Value::Num(0.0), Value::Cat("c".into())])
            .collect();
        let fake_rows: Vec<Vec<Value>> = (0..40)
            .map(|_| vec![Value::Num(10.0), Value::Num(10.0), Value::Cat("c".into())])
            .collect();
        let real = Dataset::new(schema.clone(), real_rows).unwrap();
        let fake = Dataset::new(schema, fake_rows).unwrap();
        let acc = discriminator_accuracy(&real, &fake, &PredictorSpec::default(), 0).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn discriminator_identical_data_is_chance_level() {
        let ds = datasets::rule_dataset(400, 9);
        let mut total = 0.0;
        for seed in 0..5 {
            total += discriminator_accuracy(&ds, &ds, &PredictorSpec::default(), seed).unwrap();
        }
        let mean = total / 5.0;
        assert!((mean - 0.5).abs() <= 0.1, "mean discriminator acc {mean}");
    }

    #[test]
    fn evaluate_all_identical_fake() {
        let ds = datasets::rule_dataset(300, 11);
        let (train, test) = ds.split(0.2, 1).unwrap();
        let report =
            evaluate_all(&train, &train.clone(), &test, &PredictorSpec::default()).unwrap();
        assert_eq!(report.inverse_kl, 1.0);
        assert_eq!(report.coverage, 1.0);
        assert_eq!(report.dcr.max, 0.0);
        let on_real = tstr(&train, &test, &PredictorSpec::default()).unwrap();
        assert_eq!(report.tstr_score, on_real);
        assert!(report.density >= 0.0);
        assert!(report.discriminator_accuracy >= 0.0 && report.discriminator_accuracy <= 1.0);
    }

    #[test]
    fn metrics_are_row_order_invariant() {
        let ds = datasets::rule_dataset(80, 13);
        let (train, _) = ds.split(0.25, 2).unwrap();
        let fake = datasets::rule_dataset(60, 14);
        let mut rows = fake.rows().to_vec();
        rows.reverse();
        let fake_rev = Dataset::new(fake.schema().clone(), rows).unwrap();

        let e = Embedding::fit(&train);
        let rp = e.embed(&train);
        let fp = e.embed(&fake);
        let fp_rev = e.embed(&fake_rev);
        assert!((density(&rp, &fp, 2).unwrap() - density(&rp, &fp_rev, 2).unwrap()).abs() < 1e-9);
        assert!(
            (coverage(&rp, &fp, 2).unwrap() - coverage(&rp, &fp_rev, 2).unwrap()).abs() < 1e-9
        );
        assert!(
            (inverse_kl(&train, &fake, 20).unwrap() - inverse_kl(&train, &fake_rev, 20).unwrap())
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn adding_a_fake_point_is_monotone() {
        // coverage never decreases; no DCR value increases
        let real = pts(&[0.0, 1.0, 2.0, 3.0, 7.0]);
        let mut fake = pts(&[10.0, -3.0]);
        let mut last_cov = coverage(&real, &fake, 2).unwrap();
        let (mut last_dcr, _) = dcr(&real, &fake).unwrap();
        for add in [5.0, 1.5, 0.2, 100.0, 2.9] {
            fake.push(vec![add]);
            let cov = coverage(&real, &fake, 2).unwrap();
            let (d, _) = dcr(&real, &fake).unwrap();
            assert!(cov >= last_cov);
            for (new, old) in d.iter().zip(&last_dcr) {
                assert!(new <= old);
            }
            last_cov = cov;
            last_dcr = d;
        }
    }

    #[test]
    fn embedding_drops_constant_features_and_handles_unseen() {
        let schema = Schema::new(
            vec!["c".into(), "k".into()],
            vec![ColumnKind::Continuous, ColumnKind::Categorical],
            "y".into(),
            Task::Classification,
        )
        .unwrap();
        let rows = vec![
            vec![
                Value::Num(5.0),
                Value::Cat("a".into()),
                Value::Cat("t".into()),
            ],
            vec![
                Value::Num(5.0),
                Value::Cat("b".into()),
                Value::Cat("t".into()),
            ],
        ];
        let ds = Dataset::new(schema, rows).unwrap();
        let e = Embedding::fit(&ds);
        // constant continuous feature dropped; two one-hot slots remain
        assert_eq!(e.dim(), 2);
        let unseen = e.embed_row(&[Value::Num(5.0), Value::Cat("zzz".into())]);
        assert_eq!(unseen, vec![0.0, 0.0]);
    }
}
