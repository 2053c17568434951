//! Synchronous parameter-server simulation.
//!
//! Every round, each node takes one Langevin step from the current global
//! parameters on its own shard and stream, and the server aggregates the
//! results as a weighted average. The post-burn-in sequence of aggregated
//! vectors is the day's posterior sample. Three continual strategies are
//! built on this: transfer learning (train day 1, freeze), full retraining
//! (fresh standard prior per day), and posterior-chained priors (fit a
//! Gaussian to yesterday's posterior, use it as today's prior and init).
//!
//! Node updates inside a round run in parallel under the `parallel`
//! feature. Streams are owned per node and the aggregation order is fixed,
//! so results do not depend on scheduling.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::DayDataset;
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, calibration_bins, ece, iterations_to_threshold, point_accuracy, predictive,
    MetricsConfig, PredictionSet,
};
use crate::model::{self, LabeledBatch, ModelSpec, ParamVector};
use crate::prior::{fit_from_samples, standard_prior, GaussianDiagPrior, PosteriorSamples};
use crate::report::{CurvePoint, ExperimentReport, StrategyDayCell};
use crate::rng::substream;
use crate::sgld::{self, GradientTarget, SgldConfig};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TransferLearning,
    Retrain,
    PosteriorContinual,
}

impl Strategy {
    pub fn all() -> [Strategy; 3] {
        [
            Strategy::TransferLearning,
            Strategy::Retrain,
            Strategy::PosteriorContinual,
        ]
    }

    /// Short name used in file names and tables.
    pub fn tag(&self) -> &'static str {
        match self {
            Strategy::TransferLearning => "tl",
            Strategy::Retrain => "retrain",
            Strategy::PosteriorContinual => "pcl",
        }
    }

    pub fn parse(s: &str) -> Result<Strategy> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tl" | "transfer_learning" | "transfer-learning" => Ok(Strategy::TransferLearning),
            "retrain" | "retr" => Ok(Strategy::Retrain),
            "pcl" | "posterior_continual" | "posterior-continual" => {
                Ok(Strategy::PosteriorContinual)
            }
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Strategy::TransferLearning => "TL",
            Strategy::Retrain => "Retr.",
            Strategy::PosteriorContinual => "P-CL",
        };
        write!(f, "{name}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationWeights {
    Uniform,
    DataProportional,
}

/// How the first iterate of a posterior-continual day is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PclInit {
    SamplePrior,
    PriorMean,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FederationConfig {
    pub num_nodes: usize,
    pub per_node_samples: usize,
    pub sgld: SgldConfig,
    pub num_days: usize,
    pub strategy: Strategy,
    pub aggregation_weights: AggregationWeights,
    /// Applies to posterior-continual days after the first.
    pub pcl_init: PclInit,
    pub seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            num_nodes: 10,
            per_node_samples: 50,
            sgld: SgldConfig::default(),
            num_days: 3,
            strategy: Strategy::PosteriorContinual,
            aggregation_weights: AggregationWeights::Uniform,
            pcl_init: PclInit::SamplePrior,
            seed: 0,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgld.validate()?;
        if self.num_nodes == 0 {
            return Err(Error::InvalidConfig("num_nodes must be >= 1".into()));
        }
        if self.num_days == 0 {
            return Err(Error::InvalidConfig("num_days must be >= 1".into()));
        }
        if self.per_node_samples < self.sgld.batch_size {
            return Err(Error::InvalidConfig(format!(
                "per_node_samples ({}) must be >= sgld.batch_size ({})",
                self.per_node_samples, self.sgld.batch_size
            )));
        }
        if self.sgld.num_nodes != self.num_nodes {
            return Err(Error::InvalidConfig(format!(
                "sgld.num_nodes ({}) must equal num_nodes ({})",
                self.sgld.num_nodes, self.num_nodes
            )));
        }
        Ok(())
    }
}

/// One federated round, recorded after aggregation.
#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub day: usize,
    pub iteration: usize,
    pub global_params: ParamVector,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Normalized weighted average of node parameter vectors.
pub fn aggregate(node_params: &[ParamVector], weights: &[f64]) -> Result<ParamVector> {
    if node_params.is_empty() {
        return Err(Error::Empty("node parameter list"));
    }
    if node_params.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: node_params.len(),
            right: weights.len(),
        });
    }
    let n = node_params[0].len();
    for p in node_params {
        if p.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: p.len(),
            });
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeightSum);
    }
    let mut out = ParamVector::zeros(n);
    for (params, &w) in node_params.iter().zip(weights) {
        out.values.scaled_add(w / total, &params.values);
    }
    Ok(out)
}

/// A node's shard exposed to the sampler.
pub struct ClassifierTarget<'a> {
    pub spec: &'a ModelSpec,
    pub shard: &'a LabeledBatch,
}

impl GradientTarget for ClassifierTarget<'_> {
    fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn sample_count(&self) -> usize {
        self.shard.len()
    }

    fn nll_grad_batch(&self, params: &ParamVector, indices: &[usize]) -> Result<ParamVector> {
        model::nll_grad(self.spec, params, &self.shard.select(indices))
    }
}

fn aggregation_weights(config: &FederationConfig, shards: &[LabeledBatch]) -> Vec<f64> {
    match config.aggregation_weights {
        AggregationWeights::Uniform => vec![1.0; shards.len()],
        AggregationWeights::DataProportional => {
            shards.iter().map(|s| s.len() as f64).collect()
        }
    }
}

fn one_node_update(
    spec: &ModelSpec,
    global: &ParamVector,
    shard: &LabeledBatch,
    prior: &GaussianDiagPrior,
    config: &FederationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ParamVector> {
    let target = ClassifierTarget { spec, shard };
    let grad = sgld::local_gradient(&target, global, prior, &config.sgld, rng)?;
    let noise = sgld::standard_normal_vector(global.len(), rng);
    sgld::sgld_step(global, &grad, config.sgld.eta, &noise)
}

/// One synchronous round: every node steps from the current global vector,
/// then the server aggregates. The result is independent of node execution
/// order.
pub fn federated_round(
    spec: &ModelSpec,
    global: &ParamVector,
    day_data: &DayDataset,
    prior: &GaussianDiagPrior,
    config: &FederationConfig,
    iteration: usize,
    rngs: &mut [ChaCha8Rng],
) -> Result<(ParamVector, RoundRecord)> {
    let shards = &day_data.train_shards;
    if rngs.len() != shards.len() {
        return Err(Error::LengthMismatch {
            left: rngs.len(),
            right: shards.len(),
        });
    }

    let step = |(node, (rng, shard)): (usize, (&mut ChaCha8Rng, &LabeledBatch))| {
        one_node_update(spec, global, shard, prior, config, rng)
            .map_err(|e| tag_divergence(e, iteration).at_node(node))
    };

    #[cfg(feature = "parallel")]
    let updates: Vec<ParamVector> = rngs
        .par_iter_mut()
        .zip(shards.par_iter())
        .enumerate()
        .map(step)
        .collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let updates: Vec<ParamVector> = rngs
        .iter_mut()
        .zip(shards.iter())
        .enumerate()
        .map(step)
        .collect::<Result<_>>()?;

    let weights = aggregation_weights(config, shards);
    let new_global = aggregate(&updates, &weights)?;
    if !new_global.all_finite() {
        return Err(Error::Divergence { iteration });
    }

    let train_loss = mean_train_loss(spec, &new_global, shards)?;
    let val_accuracy = point_accuracy(
        spec,
        &new_global,
        &day_data.validation.features,
        &day_data.validation.labels,
    )?;
    let record = RoundRecord {
        day: day_data.day,
        iteration,
        global_params: new_global.clone(),
        train_loss,
        val_accuracy,
    };
    Ok((new_global, record))
}

fn tag_divergence(err: Error, iteration: usize) -> Error {
    match err {
        Error::NonFiniteGradient => Error::Divergence { iteration },
        other => other,
    }
}

fn mean_train_loss(
    spec: &ModelSpec,
    params: &ParamVector,
    shards: &[LabeledBatch],
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for shard in shards {
        total += model::nll_loss(spec, params, shard)?;
        count += shard.len();
    }
    Ok(total / count as f64)
}

/// How a day's first iterate is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    SamplePrior,
    PriorMean,
}

/// Run all T rounds of one day from a prior-derived init; the aggregated
/// vectors of rounds `burn_in+1..=T` become the day's posterior sample.
pub fn run_day(
    spec: &ModelSpec,
    day_data: &DayDataset,
    prior: &GaussianDiagPrior,
    config: &FederationConfig,
    init_mode: InitMode,
) -> Result<(PosteriorSamples, Vec<RoundRecord>)> {
    config.validate()?;
    let day = day_data.day;
    let seed = config.seed;

    let init = match init_mode {
        InitMode::SamplePrior => {
            let mut init_rng = substream(seed, "init", day, 0);
            model::init_params(spec, prior, &mut init_rng)?
        }
        InitMode::PriorMean => ParamVector::new(prior.mean().clone()),
    };

    let mut node_rngs: Vec<ChaCha8Rng> = (0..config.num_nodes)
        .map(|n| substream(seed, "node", day, n as u64))
        .collect();

    let mut global = init;
    let mut records = Vec::with_capacity(config.sgld.total_iters);
    let mut retained = ndarray::Array2::zeros((config.sgld.retained(), spec.param_count()));
    for k in 1..=config.sgld.total_iters {
        let (next, record) =
            federated_round(spec, &global, day_data, prior, config, k, &mut node_rngs)?;
        global = next;
        if k > config.sgld.burn_in {
            retained
                .row_mut(k - config.sgld.burn_in - 1)
                .assign(&global.values);
        }
        records.push(record);
    }
    let samples =
        PosteriorSamples::new(retained, day, config.sgld.total_iters, config.sgld.burn_in, seed)?;
    Ok((samples, records))
}

fn evaluate_cell(
    spec: &ModelSpec,
    samples: &PosteriorSamples,
    validation: &LabeledBatch,
    metrics_cfg: &MetricsConfig,
    strategy: Strategy,
    day: usize,
    trained: bool,
    records: &[RoundRecord],
) -> Result<StrategyDayCell> {
    let s = metrics_cfg.avg_samples.unwrap_or(samples.retained());
    let probs = predictive(spec, samples, &validation.features, s)?;
    let pred = PredictionSet::from_probs(probs, validation.labels.clone())?;
    let bins = calibration_bins(&pred, metrics_cfg.num_bins)?;
    let final_ece = ece(&bins, pred.len())?;
    let iterations = if trained {
        let curve: Vec<f64> = records.iter().map(|r| r.val_accuracy).collect();
        iterations_to_threshold(&curve, metrics_cfg.threshold)?
    } else {
        None
    };
    Ok(StrategyDayCell {
        strategy,
        day,
        trained,
        final_accuracy: accuracy(&pred),
        final_ece,
        iterations_to_threshold: iterations,
        bins,
    })
}

fn curve_points(strategy: Strategy, records: &[RoundRecord]) -> Vec<CurvePoint> {
    records
        .iter()
        .map(|r| CurvePoint {
            strategy,
            day: r.day,
            iteration: r.iteration,
            train_loss: r.train_loss,
            val_accuracy: r.val_accuracy,
        })
        .collect()
}

/// Run the configured strategy over all days. Returns the report plus the
/// posterior samples of every trained day, in training order.
pub fn run_continual(
    spec: &ModelSpec,
    all_days: &[DayDataset],
    config: &FederationConfig,
    metrics_cfg: &MetricsConfig,
) -> Result<(ExperimentReport, Vec<PosteriorSamples>)> {
    config.validate()?;
    metrics_cfg.validate()?;
    if all_days.is_empty() {
        return Err(Error::Empty("day list"));
    }
    let n_params = spec.param_count();
    let mut cells = Vec::new();
    let mut curves = Vec::new();
    let mut posteriors = Vec::new();

    match config.strategy {
        Strategy::TransferLearning => {
            let prior = standard_prior(n_params);
            let (samples, records) =
                run_day(spec, &all_days[0], &prior, config, InitMode::SamplePrior)?;
            for day_data in all_days {
                let trained = day_data.day == all_days[0].day;
                let recs: &[RoundRecord] = if trained { &records } else { &[] };
                cells.push(evaluate_cell(
                    spec,
                    &samples,
                    &day_data.validation,
                    metrics_cfg,
                    config.strategy,
                    day_data.day,
                    trained,
                    recs,
                )?);
            }
            curves.extend(curve_points(config.strategy, &records));
            posteriors.push(samples);
        }
        Strategy::Retrain | Strategy::PosteriorContinual => {
            let chained = config.strategy == Strategy::PosteriorContinual;
            let mut prior = standard_prior(n_params);
            for (i, day_data) in all_days.iter().enumerate() {
                if chained && i > 0 {
                    prior = fit_from_samples(&posteriors[i - 1])?;
                } else if !chained {
                    prior = standard_prior(n_params);
                }
                let init_mode = if chained && i > 0 && config.pcl_init == PclInit::PriorMean {
                    InitMode::PriorMean
                } else {
                    InitMode::SamplePrior
                };
                let (samples, records) = run_day(spec, day_data, &prior, config, init_mode)?;
                cells.push(evaluate_cell(
                    spec,
                    &samples,
                    &day_data.validation,
                    metrics_cfg,
                    config.strategy,
                    day_data.day,
                    true,
                    &records,
                )?);
                curves.extend(curve_points(config.strategy, &records));
                posteriors.push(samples);
            }
        }
    }

    let report = ExperimentReport {
        seed: config.seed,
        threshold: metrics_cfg.threshold,
        cells,
        curves,
    };
    Ok((report, posteriors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_day, ShiftSpec};
    use crate::model::Activation;
    use crate::sgld::run_chain;
    use ndarray::arr2;
    use proptest::prelude::*;
    // proptest's glob exports its own `Strategy` trait; ours wins here.
    use super::Strategy;

    fn pv(values: &[f64]) -> ParamVector {
        ParamVector::from_vec(values.to_vec())
    }

    fn small_setup(
        num_nodes: usize,
        per_node: usize,
        t: usize,
        tb: usize,
        seed: u64,
    ) -> (ModelSpec, DayDataset, FederationConfig) {
        let spec = ModelSpec::new(vec![2, 8, 3], Activation::Relu).unwrap();
        let shift = ShiftSpec::circle(3, 3.0, 0.5, num_nodes * per_node * 2).unwrap();
        let day = build_day(&shift, 1, num_nodes, per_node, seed).unwrap();
        let config = FederationConfig {
            num_nodes,
            per_node_samples: per_node,
            sgld: SgldConfig {
                eta: 1e-3,
                total_iters: t,
                burn_in: tb,
                num_batches: 1,
                batch_size: per_node.min(8),
                num_nodes,
            },
            num_days: 1,
            strategy: Strategy::Retrain,
            aggregation_weights: AggregationWeights::Uniform,
            pcl_init: PclInit::SamplePrior,
            seed,
        };
        (spec, day, config)
    }

    #[test]
    fn aggregate_uniform_mean() {
        let out = aggregate(&[pv(&[0.0, 2.0]), pv(&[2.0, 0.0])], &[1.0, 1.0]).unwrap();
        assert_eq!(out.values.as_slice().unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn aggregate_single_node_is_identity() {
        let p = pv(&[0.25, -1.5, 3.0]);
        let out = aggregate(std::slice::from_ref(&p), &[7.0]).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn aggregate_weighted_hand_case() {
        let out = aggregate(&[pv(&[0.0]), pv(&[4.0])], &[1.0, 3.0]).unwrap();
        assert!((out.values[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn aggregate_rejects_bad_inputs() {
        assert!(matches!(
            aggregate(&[], &[]).unwrap_err(),
            Error::Empty(_)
        ));
        assert!(matches!(
            aggregate(&[pv(&[0.0])], &[0.0]).unwrap_err(),
            Error::ZeroWeightSum
        ));
        assert!(matches!(
            aggregate(&[pv(&[0.0]), pv(&[0.0, 1.0])], &[1.0, 1.0]).unwrap_err(),
            Error::LengthMismatch { .. }
        ));
    }

    #[test]
    fn round_matches_manual_node_updates_in_any_order() {
        let (spec, day, config) = small_setup(3, 10, 4, 2, 17);
        let prior = standard_prior(spec.param_count());
        let global = ParamVector::zeros(spec.param_count());

        let mut rngs: Vec<ChaCha8Rng> = (0..3)
            .map(|n| substream(config.seed, "node", 1, n as u64))
            .collect();
        let (next, record) =
            federated_round(&spec, &global, &day, &prior, &config, 1, &mut rngs).unwrap();
        assert_eq!(record.iteration, 1);
        assert!(record.val_accuracy >= 0.0 && record.val_accuracy <= 1.0);

        // recompute node updates in reverse order with fresh streams
        let mut updates = vec![ParamVector::zeros(spec.param_count()); 3];
        for node in (0..3).rev() {
            let mut rng = substream(config.seed, "node", 1, node as u64);
            updates[node] = one_node_update(
                &spec,
                &global,
                &day.train_shards[node],
                &prior,
                &config,
                &mut rng,
            )
            .unwrap();
        }
        let manual = aggregate(&updates, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(next, manual);
    }

    #[test]
    fn two_node_round_equals_hand_average_of_sgd_steps() {
        // Zero-noise composition: the aggregate of two plain SGD steps.
        let spec = ModelSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let prior = standard_prior(spec.param_count());
        let cfg = SgldConfig {
            eta: 0.1,
            total_iters: 4,
            burn_in: 2,
            num_batches: 1,
            batch_size: 2,
            num_nodes: 2,
        };
        let shard_a = LabeledBatch::new(arr2(&[[1.0], [0.5]]), vec![0, 0]).unwrap();
        let shard_b = LabeledBatch::new(arr2(&[[-1.0], [-0.5]]), vec![1, 1]).unwrap();
        let global = pv(&[0.3, -0.3, 0.1, -0.1]);

        let zero = ParamVector::zeros(4);
        let mut updates = Vec::new();
        for shard in [&shard_a, &shard_b] {
            let like = model::nll_grad(&spec, &global, shard).unwrap();
            let pg = crate::prior::log_prior_grad(&prior, &global).unwrap();
            let grad = ParamVector::new(&like.values - &(pg.values / 2.0));
            updates.push(sgld::sgld_step(&global, &grad, cfg.eta, &zero).unwrap());
        }
        let agg = aggregate(&updates, &[1.0, 1.0]).unwrap();
        for j in 0..4 {
            let expect = (updates[0].values[j] + updates[1].values[j]) / 2.0;
            assert!((agg.values[j] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_shards_and_streams_collapse_to_one_node() {
        let spec = ModelSpec::new(vec![2, 4, 2], Activation::Tanh).unwrap();
        let prior = standard_prior(spec.param_count());
        let shard = LabeledBatch::new(
            arr2(&[[0.5, 1.0], [-0.5, -1.0], [1.5, 0.0], [0.0, 1.5]]),
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let config = FederationConfig {
            num_nodes: 3,
            per_node_samples: 4,
            sgld: SgldConfig {
                eta: 1e-2,
                total_iters: 4,
                burn_in: 2,
                num_batches: 1,
                batch_size: 4,
                num_nodes: 3,
            },
            ..FederationConfig::default()
        };
        let global = ParamVector::zeros(spec.param_count());
        // same stream for every node -> identical updates -> aggregate equals any one of them
        let mut rng = substream(3, "same", 0, 0);
        let update = one_node_update(&spec, &global, &shard, &prior, &config, &mut rng).unwrap();
        let mut updates = Vec::new();
        for _ in 0..3 {
            let mut rng = substream(3, "same", 0, 0);
            updates.push(one_node_update(&spec, &global, &shard, &prior, &config, &mut rng).unwrap());
        }
        let agg = aggregate(&updates, &[1.0, 1.0, 1.0]).unwrap();
        for j in 0..agg.len() {
            assert!((agg.values[j] - update.values[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn run_day_bookkeeping_and_determinism() {
        let (spec, day, config) = small_setup(2, 12, 6, 3, 23);
        let prior = standard_prior(spec.param_count());
        let (samples, records) =
            run_day(&spec, &day, &prior, &config, InitMode::SamplePrior).unwrap();
        assert_eq!(records.len(), 6);
        assert_eq!(samples.retained(), 3);
        assert_eq!(samples.day, 1);

        let (samples2, records2) =
            run_day(&spec, &day, &prior, &config, InitMode::SamplePrior).unwrap();
        assert_eq!(samples, samples2);
        for (a, b) in records.iter().zip(&records2) {
            assert_eq!(a.global_params, b.global_params);
            assert_eq!(a.train_loss, b.train_loss);
            assert_eq!(a.val_accuracy, b.val_accuracy);
        }
        // retained rows are the post-burn-in aggregated snapshots
        for (row, rec) in samples.samples.rows().into_iter().zip(&records[3..]) {
            for (a, b) in row.iter().zip(rec.global_params.values.iter()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn single_node_day_reduces_to_plain_chain() {
        let (spec, day, mut config) = small_setup(1, 20, 8, 4, 31);
        config.sgld.batch_size = 8;
        let prior = standard_prior(spec.param_count());
        let (fed_samples, _) =
            run_day(&spec, &day, &prior, &config, InitMode::SamplePrior).unwrap();

        let mut init_rng = substream(config.seed, "init", 1, 0);
        let init = model::init_params(&spec, &prior, &mut init_rng).unwrap();
        let target = ClassifierTarget {
            spec: &spec,
            shard: &day.train_shards[0],
        };
        let mut chain_rng = substream(config.seed, "node", 1, 0);
        let chain_samples = run_chain(
            &target,
            &init,
            &prior,
            &config.sgld,
            1,
            config.seed,
            &mut chain_rng,
        )
        .unwrap();
        assert_eq!(fed_samples, chain_samples);
    }

    #[test]
    fn day_one_trajectories_agree_across_strategies() {
        let (spec, day, config) = small_setup(2, 10, 5, 2, 41);
        let metrics_cfg = MetricsConfig {
            num_bins: 5,
            threshold: 0.99,
            avg_samples: None,
        };
        let days = vec![day];
        let mut outs = Vec::new();
        for strategy in Strategy::all() {
            let cfg = FederationConfig {
                strategy,
                num_days: 1,
                ..config.clone()
            };
            let (report, posteriors) =
                run_continual(&spec, &days, &cfg, &metrics_cfg).unwrap();
            outs.push((report, posteriors));
        }
        for (report, posteriors) in &outs[1..] {
            assert_eq!(posteriors[0].samples, outs[0].1[0].samples);
            assert_eq!(report.cells[0].final_accuracy, outs[0].0.cells[0].final_accuracy);
            assert_eq!(report.cells[0].final_ece, outs[0].0.cells[0].final_ece);
        }
    }

    #[test]
    fn transfer_learning_reports_every_day_but_trains_once() {
        let spec = ModelSpec::new(vec![2, 8, 3], Activation::Relu).unwrap();
        let shift = ShiftSpec::circle(3, 3.0, 0.5, 60).unwrap();
        let days: Vec<DayDataset> = (1..=3)
            .map(|d| build_day(&shift, d, 2, 10, 7).unwrap())
            .collect();
        let config = FederationConfig {
            num_nodes: 2,
            per_node_samples: 10,
            sgld: SgldConfig {
                eta: 1e-3,
                total_iters: 5,
                burn_in: 2,
                num_batches: 1,
                batch_size: 8,
                num_nodes: 2,
            },
            num_days: 3,
            strategy: Strategy::TransferLearning,
            ..FederationConfig::default()
        };
        let metrics_cfg = MetricsConfig::default();
        let (report, posteriors) = run_continual(&spec, &days, &config, &metrics_cfg).unwrap();
        assert_eq!(report.cells.len(), 3);
        assert_eq!(posteriors.len(), 1);
        assert!(report.cells[0].trained);
        assert!(!report.cells[1].trained);
        assert!(report.cells[1].iterations_to_threshold.is_none());
        // curves only cover the trained day
        assert!(report.curves.iter().all(|p| p.day == 1));
    }

    #[test]
    fn pcl_chains_fitted_priors() {
        let spec = ModelSpec::new(vec![2, 6, 3], Activation::Relu).unwrap();
        let shift = ShiftSpec::circle(3, 3.0, 0.5, 60).unwrap();
        let days: Vec<DayDataset> = (1..=2)
            .map(|d| build_day(&shift, d, 2, 10, 19).unwrap())
            .collect();
        let config = FederationConfig {
            num_nodes: 2,
            per_node_samples: 10,
            sgld: SgldConfig {
                eta: 1e-3,
                total_iters: 6,
                burn_in: 3,
                num_batches: 1,
                batch_size: 8,
                num_nodes: 2,
            },
            num_days: 2,
            strategy: Strategy::PosteriorContinual,
            seed: 5,
            ..FederationConfig::default()
        };
        let metrics_cfg = MetricsConfig::default();
        let (_, posteriors) = run_continual(&spec, &days, &config, &metrics_cfg).unwrap();
        assert_eq!(posteriors.len(), 2);

        // day 2 must replay exactly when run standalone with the fitted prior
        let fitted = fit_from_samples(&posteriors[0]).unwrap();
        let (manual, _) =
            run_day(&spec, &days[1], &fitted, &config, InitMode::SamplePrior).unwrap();
        assert_eq!(manual, posteriors[1]);
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant_and_convex(seed in 0u64..100) {
            use rand::Rng;
            let mut rng = substream(seed, "agg", 0, 0);
            let n_nodes = rng.gen_range(2..5);
            let dim = rng.gen_range(1..6);
            let params: Vec<ParamVector> = (0..n_nodes)
                .map(|_| ParamVector::from_vec((0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect()))
                .collect();
            let weights: Vec<f64> = (0..n_nodes).map(|_| rng.gen_range(0.1..2.0)).collect();
            let a = aggregate(&params, &weights).unwrap();

            let mut rev_params = params.clone();
            rev_params.reverse();
            let mut rev_weights = weights.clone();
            rev_weights.reverse();
            let b = aggregate(&rev_params, &rev_weights).unwrap();
            for j in 0..dim {
                prop_assert!((a.values[j] - b.values[j]).abs() < 1e-12);
                let lo = params.iter().map(|p| p.values[j]).fold(f64::INFINITY, f64::min);
                let hi = params.iter().map(|p| p.values[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(a.values[j] >= lo - 1e-12 && a.values[j] <= hi + 1e-12);
            }

            // identical inputs stay put
            let same = vec![params[0].clone(); 3];
            let id = aggregate(&same, &[1.0, 1.0, 1.0]).unwrap();
            for j in 0..dim {
                prop_assert!((id.values[j] - params[0].values[j]).abs() < 1e-12);
            }
        }
    }
}
