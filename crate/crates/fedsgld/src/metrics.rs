//! Predictive averaging, accuracy, calibration (ECE + reliability bins),
//! and convergence-speed extraction.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, ModelSpec, ParamVector};
use crate::prior::PosteriorSamples;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Knobs for evaluation: bin count J, the accuracy threshold for
/// convergence counting, and how many posterior samples feed the
/// predictive average (`None` = all retained).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_num_bins")]
    pub num_bins: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub avg_samples: Option<usize>,
}

fn default_num_bins() -> usize {
    10
}

fn default_threshold() -> f64 {
    0.85
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            num_bins: default_num_bins(),
            threshold: default_threshold(),
            avg_samples: None,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_bins == 0 {
            return Err(Error::InvalidConfig("metrics.num_bins must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "metrics.threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.avg_samples == Some(0) {
            return Err(Error::InvalidConfig(
                "metrics.avg_samples must be >= 1 when set".into(),
            ));
        }
        Ok(())
    }
}

/// Per-row predictions: class probabilities, argmax label, confidence
/// (max probability), and the ground truth.
#[derive(Clone, Debug)]
pub struct PredictionSet {
    pub probs: Array2<f64>,
    pub predicted_label: Vec<usize>,
    pub confidence: Vec<f64>,
    pub true_label: Vec<usize>,
}

impl PredictionSet {
    /// Ties in the argmax go to the lowest class index.
    pub fn from_probs(probs: Array2<f64>, true_label: Vec<usize>) -> Result<Self> {
        if probs.nrows() == 0 {
            return Err(Error::Empty("prediction set"));
        }
        if probs.nrows() != true_label.len() {
            return Err(Error::LengthMismatch {
                left: probs.nrows(),
                right: true_label.len(),
            });
        }
        let mut predicted_label = Vec::with_capacity(probs.nrows());
        let mut confidence = Vec::with_capacity(probs.nrows());
        for row in probs.rows() {
            let mut best = 0;
            let mut best_p = row[0];
            for (j, &p) in row.iter().enumerate().skip(1) {
                if p > best_p {
                    best = j;
                    best_p = p;
                }
            }
            predicted_label.push(best);
            confidence.push(best_p);
        }
        Ok(Self {
            probs,
            predicted_label,
            confidence,
            true_label,
        })
    }

    pub fn len(&self) -> usize {
        self.true_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_label.is_empty()
    }
}

/// Bayesian model average: mean of forward-pass probabilities over the last
/// `num_avg` retained posterior samples.
pub fn predictive(
    spec: &ModelSpec,
    samples: &PosteriorSamples,
    features: &Array2<f64>,
    num_avg: usize,
) -> Result<Array2<f64>> {
    let available = samples.retained();
    if num_avg == 0 || num_avg > available {
        return Err(Error::AvgSizeOutOfRange {
            requested: num_avg,
            available,
        });
    }
    let first = available - num_avg;
    let rows: Vec<usize> = (first..available).collect();

    let per_sample = |&r: &usize| -> Result<Array2<f64>> {
        let params = ParamVector::new(samples.samples.row(r).to_owned());
        forward(spec, &params, features)
    };

    #[cfg(feature = "parallel")]
    let all: Vec<Array2<f64>> = rows.par_iter().map(per_sample).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let all: Vec<Array2<f64>> = rows.iter().map(per_sample).collect::<Result<_>>()?;

    // Fixed summation order keeps the result identical across thread counts.
    let mut mean: Array2<f64> = Array2::zeros((features.nrows(), spec.num_classes()));
    for probs in &all {
        mean += probs;
    }
    mean /= num_avg as f64;
    Ok(mean)
}

/// Fraction of rows whose argmax matches the true label.
pub fn accuracy(pred: &PredictionSet) -> f64 {
    let correct = pred
        .predicted_label
        .iter()
        .zip(&pred.true_label)
        .filter(|(a, b)| a == b)
        .count();
    correct as f64 / pred.len() as f64
}

/// One confidence bin: edges `[(j-1)/J, j/J)`, its population, and the
/// within-bin accuracy and mean confidence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinStat {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub accuracy: f64,
    pub confidence: f64,
}

impl BinStat {
    pub fn gap(&self) -> f64 {
        self.accuracy - self.confidence
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationBins {
    pub num_bins: usize,
    pub bins: Vec<BinStat>,
}

/// Bin index for a confidence value: `ceil(p * J)` clamped to `[1, J]`,
/// returned 0-based.
fn bin_index(confidence: f64, num_bins: usize) -> usize {
    let raw = (confidence * num_bins as f64).ceil() as isize;
    (raw.max(1) as usize).min(num_bins) - 1
}

/// Assign every prediction to a confidence bin and compute per-bin
/// accuracy and mean confidence. Empty bins carry zeros.
pub fn calibration_bins(pred: &PredictionSet, num_bins: usize) -> Result<CalibrationBins> {
    if num_bins == 0 {
        return Err(Error::InvalidConfig("num_bins must be >= 1".into()));
    }
    if pred.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    let mut count = vec![0usize; num_bins];
    let mut correct = vec![0usize; num_bins];
    let mut conf_sum = vec![0.0f64; num_bins];
    for i in 0..pred.len() {
        let b = bin_index(pred.confidence[i], num_bins);
        count[b] += 1;
        conf_sum[b] += pred.confidence[i];
        if pred.predicted_label[i] == pred.true_label[i] {
            correct[b] += 1;
        }
    }
    let bins = (0..num_bins)
        .map(|j| BinStat {
            lower: j as f64 / num_bins as f64,
            upper: (j + 1) as f64 / num_bins as f64,
            count: count[j],
            accuracy: if count[j] > 0 {
                correct[j] as f64 / count[j] as f64
            } else {
                0.0
            },
            confidence: if count[j] > 0 {
                conf_sum[j] / count[j] as f64
            } else {
                0.0
            },
        })
        .collect();
    Ok(CalibrationBins { num_bins, bins })
}

/// Expected calibration error: count-weighted mean absolute gap between
/// per-bin accuracy and confidence.
pub fn ece(bins: &CalibrationBins, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::Empty("calibration total"));
    }
    Ok(bins
        .bins
        .iter()
        .map(|b| (b.count as f64 / total as f64) * (b.accuracy - b.confidence).abs())
        .sum())
}

/// 1-based index of the first curve entry at or above the threshold, or
/// `None` if the curve never reaches it. First crossing counts; there is
/// no sustain requirement.
pub fn iterations_to_threshold(acc_curve: &[f64], threshold: f64) -> Result<Option<usize>> {
    if acc_curve.is_empty() {
        return Err(Error::Empty("accuracy curve"));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold must be in (0, 1], got {threshold}"
        )));
    }
    Ok(acc_curve
        .iter()
        .position(|&a| a >= threshold)
        .map(|i| i + 1))
}

/// Single-model evaluation: forward under one parameter vector, then
/// accuracy against the labels.
pub fn point_accuracy(
    spec: &ModelSpec,
    params: &ParamVector,
    features: &Array2<f64>,
    labels: &[usize],
) -> Result<f64> {
    let probs = forward(spec, params, features)?;
    let pred = PredictionSet::from_probs(probs, labels.to_vec())?;
    Ok(accuracy(&pred))
}

/// Mean per-row entropy is not needed anywhere; the only derived quantity
/// reports currently use is the mean confidence.
pub fn mean_confidence(pred: &PredictionSet) -> f64 {
    pred.confidence.iter().sum::<f64>() / pred.len() as f64
}

#[allow(dead_code)]
fn row_sums(m: &Array2<f64>) -> Vec<f64> {
    m.sum_axis(Axis(1)).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, ModelSpec};
    use crate::rng::substream;
    use crate::testutil::random_params;
    use ndarray::arr2;
    use proptest::prelude::*;
    use rand::Rng;

    fn pred_from(confidences: &[f64], correct: &[bool]) -> PredictionSet {
        // Two-class rows engineered to carry the requested confidence.
        let rows: Vec<[f64; 2]> = confidences.iter().map(|&c| [c, 1.0 - c]).collect();
        let probs = Array2::from_shape_vec(
            (rows.len(), 2),
            rows.iter().flat_map(|r| r.iter().cloned()).collect(),
        )
        .unwrap();
        // predicted label is 0 whenever c >= 0.5; pick true labels to match
        let true_label = correct
            .iter()
            .zip(confidences)
            .map(|(&ok, &c)| {
                let predicted = if c >= 0.5 { 0 } else { 1 };
                if ok {
                    predicted
                } else {
                    1 - predicted
                }
            })
            .collect();
        PredictionSet::from_probs(probs, true_label).unwrap()
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        let probs = arr2(&[[0.5, 0.5], [0.2, 0.8]]);
        let pred = PredictionSet::from_probs(probs, vec![0, 1]).unwrap();
        assert_eq!(pred.predicted_label, vec![0, 1]);
        assert_eq!(pred.confidence, vec![0.5, 0.8]);
    }

    #[test]
    fn accuracy_counts_fractions() {
        let pred = pred_from(&[0.9, 0.9, 0.9, 0.9], &[true, true, true, false]);
        assert!((accuracy(&pred) - 0.75).abs() < 1e-15);
        let all = pred_from(&[0.9, 0.8], &[true, true]);
        assert_eq!(accuracy(&all), 1.0);
        let none = pred_from(&[0.9, 0.8], &[false, false]);
        assert_eq!(none.len(), 2);
        assert_eq!(accuracy(&none), 0.0);
    }

    #[test]
    fn single_bin_degenerates_to_overall_stats() {
        let pred = pred_from(&[0.6, 0.7, 0.9, 1.0], &[true, false, true, true]);
        let bins = calibration_bins(&pred, 1).unwrap();
        assert_eq!(bins.bins.len(), 1);
        assert!((bins.bins[0].accuracy - 0.75).abs() < 1e-15);
        let mean_conf = (0.6 + 0.7 + 0.9 + 1.0) / 4.0;
        assert!((bins.bins[0].confidence - mean_conf).abs() < 1e-15);
        let e = ece(&bins, pred.len()).unwrap();
        assert!((e - (0.75f64 - mean_conf).abs()).abs() < 1e-15);
    }

    #[test]
    fn hand_binning_case_from_fixed_confidences() {
        // 4 samples at confidence 0.8, 3 correct, J=10: bin 8 (index 7).
        let pred = pred_from(&[0.8, 0.8, 0.8, 0.8], &[true, true, true, false]);
        let bins = calibration_bins(&pred, 10).unwrap();
        let b = &bins.bins[7];
        assert_eq!(b.count, 4);
        assert!((b.accuracy - 0.75).abs() < 1e-15);
        assert!((b.confidence - 0.8).abs() < 1e-15);
        let total: usize = bins.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, 4);
        let e = ece(&bins, 4).unwrap();
        assert!((e - 0.05).abs() < 1e-12);
    }

    #[test]
    fn extreme_confidences_land_in_edge_bins() {
        // 20 classes so a confidence of 0.05 (uniform row) is possible
        let c = 20;
        let mut probs = Array2::zeros((2, c));
        probs.row_mut(0).fill(1.0 / c as f64); // confidence 0.05
        probs[[1, 0]] = 0.95; // confidence 0.95
        for j in 1..c {
            probs[[1, j]] = 0.05 / (c - 1) as f64;
        }
        let pred = PredictionSet::from_probs(probs, vec![0, 0]).unwrap();
        assert_eq!(pred.confidence, vec![0.05, 0.95]);
        let bins = calibration_bins(&pred, 10).unwrap();
        assert_eq!(bins.bins[0].count, 1);
        assert_eq!(bins.bins[9].count, 1);
        // confidence exactly 1.0 also goes to the last bin
        let pred = pred_from(&[1.0], &[true]);
        let bins = calibration_bins(&pred, 10).unwrap();
        assert_eq!(bins.bins[9].count, 1);
    }

    #[test]
    fn ece_weights_gaps_by_population() {
        // two bins: (count 2, gap 0.1) and (count 2, gap 0.3) -> 0.2
        let bins = CalibrationBins {
            num_bins: 2,
            bins: vec![
                BinStat {
                    lower: 0.0,
                    upper: 0.5,
                    count: 2,
                    accuracy: 0.4,
                    confidence: 0.3,
                },
                BinStat {
                    lower: 0.5,
                    upper: 1.0,
                    count: 2,
                    accuracy: 0.5,
                    confidence: 0.8,
                },
            ],
        };
        let e = ece(&bins, 4).unwrap();
        assert!((e - 0.2).abs() < 1e-15);
    }

    #[test]
    fn perfectly_calibrated_bins_give_zero() {
        let bins = CalibrationBins {
            num_bins: 2,
            bins: vec![
                BinStat {
                    lower: 0.0,
                    upper: 0.5,
                    count: 3,
                    accuracy: 0.4,
                    confidence: 0.4,
                },
                BinStat {
                    lower: 0.5,
                    upper: 1.0,
                    count: 1,
                    accuracy: 0.9,
                    confidence: 0.9,
                },
            ],
        };
        assert_eq!(ece(&bins, 4).unwrap(), 0.0);
    }

    #[test]
    fn threshold_crossing_is_first_touch() {
        assert_eq!(
            iterations_to_threshold(&[0.3, 0.6, 0.9], 0.85).unwrap(),
            Some(3)
        );
        assert_eq!(iterations_to_threshold(&[0.3, 0.8], 0.85).unwrap(), None);
        assert_eq!(
            iterations_to_threshold(&[0.9, 0.2, 0.9], 0.85).unwrap(),
            Some(1)
        );
        assert!(iterations_to_threshold(&[], 0.85).is_err());
        assert!(iterations_to_threshold(&[0.5], 1.5).is_err());
    }

    #[test]
    fn predictive_single_sample_equals_forward() {
        let spec = ModelSpec::new(vec![2, 3, 2], Activation::Tanh).unwrap();
        let mut rng = substream(51, "t", 0, 0);
        let n = spec.param_count();
        let mut rows = Array2::zeros((3, n));
        for mut r in rows.rows_mut() {
            r.assign(&random_params(&spec, &mut rng).values);
        }
        let samples = PosteriorSamples::new(rows.clone(), 1, 4, 1, 0).unwrap();
        let x = arr2(&[[0.2, -0.4], [1.0, 1.5]]);
        let avg1 = predictive(&spec, &samples, &x, 1).unwrap();
        let direct = forward(
            &spec,
            &ParamVector::new(rows.row(2).to_owned()),
            &x,
        )
        .unwrap();
        assert_eq!(avg1, direct);
    }

    #[test]
    fn predictive_averages_rows() {
        let spec = ModelSpec::new(vec![2, 3, 2], Activation::Relu).unwrap();
        let mut rng = substream(52, "t", 0, 0);
        let n = spec.param_count();
        let mut rows = Array2::zeros((3, n));
        for mut r in rows.rows_mut() {
            r.assign(&random_params(&spec, &mut rng).values);
        }
        let samples = PosteriorSamples::new(rows.clone(), 1, 4, 1, 0).unwrap();
        let x = arr2(&[[0.2, -0.4], [1.0, 1.5], [0.0, 0.0]]);
        let avg = predictive(&spec, &samples, &x, 3).unwrap();
        let mut expect: Array2<f64> = Array2::zeros((3, 2));
        for r in 0..3 {
            expect += &forward(&spec, &ParamVector::new(rows.row(r).to_owned()), &x).unwrap();
        }
        expect /= 3.0;
        for (a, b) in avg.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for s in row_sums(&avg) {
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn predictive_rejects_out_of_range_window() {
        let spec = ModelSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let rows = Array2::zeros((2, spec.param_count()));
        let samples = PosteriorSamples::new(rows, 1, 3, 1, 0).unwrap();
        let x = arr2(&[[0.0]]);
        assert!(matches!(
            predictive(&spec, &samples, &x, 0).unwrap_err(),
            Error::AvgSizeOutOfRange { .. }
        ));
        assert!(matches!(
            predictive(&spec, &samples, &x, 3).unwrap_err(),
            Error::AvgSizeOutOfRange { requested: 3, available: 2 }
        ));
    }

    #[test]
    fn two_delta_mixture_is_half_half() {
        // hand-built rows [1,0] and [0,1] average to [0.5, 0.5]
        let a = arr2(&[[1.0, 0.0]]);
        let b = arr2(&[[0.0, 1.0]]);
        let mean = (&a + &b) / 2.0;
        assert_eq!(mean, arr2(&[[0.5, 0.5]]));
    }

    // One-pass ECE straight from raw triples, sharing no code with the
    // binned path.
    fn brute_force_ece(pred: &PredictionSet, num_bins: usize) -> f64 {
        let mut count = vec![0usize; num_bins];
        let mut acc_sum = vec![0.0f64; num_bins];
        let mut conf_sum = vec![0.0f64; num_bins];
        for i in 0..pred.len() {
            let raw = (pred.confidence[i] * num_bins as f64).ceil() as isize;
            let b = (raw.max(1) as usize).min(num_bins) - 1;
            count[b] += 1;
            conf_sum[b] += pred.confidence[i];
            if pred.predicted_label[i] == pred.true_label[i] {
                acc_sum[b] += 1.0;
            }
        }
        let n = pred.len() as f64;
        (0..num_bins)
            .filter(|&b| count[b] > 0)
            .map(|b| {
                let c = count[b] as f64;
                (c / n) * ((acc_sum[b] / c) - (conf_sum[b] / c)).abs()
            })
            .sum()
    }

    proptest! {
        #[test]
        fn binned_ece_matches_brute_force(seed in 0u64..300) {
            let mut rng = substream(seed, "ece", 0, 0);
            let n = rng.gen_range(1..200);
            let c = if rng.gen_bool(0.5) { 2 } else { 10 };
            let mut probs = Array2::zeros((n, c));
            for mut row in probs.rows_mut() {
                let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                for (slot, v) in row.iter_mut().zip(raw) {
                    *slot = v / sum;
                }
            }
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
            let pred = PredictionSet::from_probs(probs, labels).unwrap();
            for j in [1usize, 5, 10, 15] {
                let bins = calibration_bins(&pred, j).unwrap();
                let a = ece(&bins, pred.len()).unwrap();
                let b = brute_force_ece(&pred, j);
                prop_assert!((a - b).abs() < 1e-12, "J={} {} vs {}", j, a, b);
                prop_assert!((0.0..=1.0).contains(&a));
                let total: usize = bins.bins.iter().map(|b| b.count).sum();
                prop_assert_eq!(total, pred.len());
            }
        }

        #[test]
        fn accuracy_and_ece_are_permutation_invariant(seed in 0u64..100) {
            let mut rng = substream(seed, "perm", 0, 0);
            let n = rng.gen_range(2..60);
            let confs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.0)).collect();
            let oks: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
            let pred = pred_from(&confs, &oks);
            let mut rev_confs = confs.clone();
            rev_confs.reverse();
            let mut rev_oks = oks.clone();
            rev_oks.reverse();
            let rev = pred_from(&rev_confs, &rev_oks);
            prop_assert!((accuracy(&pred) - accuracy(&rev)).abs() < 1e-15);
            let a = ece(&calibration_bins(&pred, 10).unwrap(), n).unwrap();
            let b = ece(&calibration_bins(&rev, 10).unwrap(), n).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
