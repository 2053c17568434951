//! The Langevin transition kernel and chain bookkeeping.
//!
//! One step is plain SGD plus Gaussian noise of standard deviation
//! `sqrt(2*eta)`. The stochastic gradient averages M minibatch
//! likelihood-gradient sums and subtracts the prior gradient scaled by
//! `1/num_nodes`, so a federation of N nodes applies the prior exactly once
//! in aggregate. Iterates after the burn-in prefix are retained as
//! posterior samples.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamVector;
use crate::prior::{log_prior_grad, GaussianDiagPrior, PosteriorSamples};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgldConfig {
    /// Learning rate.
    pub eta: f64,
    /// Chain length T.
    pub total_iters: usize,
    /// Burn-in prefix length; iterates `burn_in+1..=total_iters` are kept.
    pub burn_in: usize,
    /// Minibatches averaged per gradient estimate.
    pub num_batches: usize,
    /// Samples per minibatch, drawn without replacement.
    pub batch_size: usize,
    /// Federation size N; scales the prior term by 1/N.
    pub num_nodes: usize,
}

impl Default for SgldConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            total_iters: 100,
            burn_in: 50,
            num_batches: 1,
            batch_size: 32,
            num_nodes: 10,
        }
    }
}

impl SgldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sgld.eta must be positive, got {}",
                self.eta
            )));
        }
        if self.burn_in >= self.total_iters {
            return Err(Error::InvalidConfig(format!(
                "sgld.burn_in ({}) must be below total_iters ({})",
                self.burn_in, self.total_iters
            )));
        }
        if self.total_iters - self.burn_in < 2 {
            return Err(Error::InvalidConfig(
                "sgld needs at least 2 retained iterations (total_iters - burn_in >= 2)".into(),
            ));
        }
        if self.num_batches == 0 {
            return Err(Error::InvalidConfig("sgld.num_batches must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("sgld.batch_size must be >= 1".into()));
        }
        if self.num_nodes == 0 {
            return Err(Error::InvalidConfig("sgld.num_nodes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.total_iters - self.burn_in
    }
}

/// Anything the sampler can draw stochastic likelihood gradients from.
///
/// Implementations return the gradient of the summed negative
/// log-likelihood restricted to the samples at `indices`.
pub trait GradientTarget: Sync {
    fn param_count(&self) -> usize;
    fn sample_count(&self) -> usize;
    fn nll_grad_batch(&self, params: &ParamVector, indices: &[usize]) -> Result<ParamVector>;
}

/// Draw a standard-normal vector from the stream.
pub fn standard_normal_vector(n: usize, rng: &mut ChaCha8Rng) -> ParamVector {
    ParamVector::from_vec(
        (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

/// One Langevin step: `params - eta * grad + sqrt(2*eta) * noise`.
///
/// `noise` must be a standard-normal draw supplied by the caller.
pub fn sgld_step(
    params: &ParamVector,
    grad: &ParamVector,
    eta: f64,
    noise: &ParamVector,
) -> Result<ParamVector> {
    if params.len() != grad.len() {
        return Err(Error::LengthMismatch {
            left: params.len(),
            right: grad.len(),
        });
    }
    if params.len() != noise.len() {
        return Err(Error::LengthMismatch {
            left: params.len(),
            right: noise.len(),
        });
    }
    if !grad.all_finite() {
        return Err(Error::NonFiniteGradient);
    }
    let scale = (2.0 * eta).sqrt();
    let values = &params.values - &(eta * &grad.values) + &(scale * &noise.values);
    Ok(ParamVector::new(values))
}

/// Stochastic gradient estimate for one node: the mean of `num_batches`
/// minibatch likelihood-gradient sums minus `1/num_nodes` of the prior
/// gradient. Batches are drawn uniformly without replacement,
/// independently of each other, from the node's stream.
pub fn local_gradient<T: GradientTarget>(
    target: &T,
    params: &ParamVector,
    prior: &GaussianDiagPrior,
    config: &SgldConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ParamVector> {
    let n = target.sample_count();
    if n == 0 {
        return Err(Error::EmptyShard);
    }
    if config.batch_size > n {
        return Err(Error::BatchTooLarge {
            batch_size: config.batch_size,
            shard_size: n,
        });
    }
    let mut acc = ParamVector::zeros(target.param_count());
    for _ in 0..config.num_batches {
        let indices = rand::seq::index::sample(rng, n, config.batch_size).into_vec();
        let g = target.nll_grad_batch(params, &indices)?;
        acc.values += &g.values;
    }
    acc.values /= config.num_batches as f64;

    let prior_grad = log_prior_grad(prior, params)?;
    acc.values -= &(prior_grad.values / config.num_nodes as f64);
    Ok(acc)
}

/// Run a single chain for `total_iters` steps from `init`, retaining the
/// post-burn-in iterates. `day` and `seed` are carried into the sample
/// metadata only.
pub fn run_chain<T: GradientTarget>(
    target: &T,
    init: &ParamVector,
    prior: &GaussianDiagPrior,
    config: &SgldConfig,
    day: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<PosteriorSamples> {
    config.validate()?;
    let n_params = target.param_count();
    if init.len() != n_params {
        return Err(Error::ParamLength {
            expected: n_params,
            got: init.len(),
        });
    }
    let mut retained = Array2::zeros((config.retained(), n_params));
    let mut params = init.clone();
    for k in 1..=config.total_iters {
        let grad = local_gradient(target, &params, prior, config, rng)
            .map_err(|e| divergence_at(e, k))?;
        let noise = standard_normal_vector(n_params, rng);
        params = sgld_step(&params, &grad, config.eta, &noise).map_err(|e| divergence_at(e, k))?;
        if !params.all_finite() {
            return Err(Error::Divergence { iteration: k });
        }
        if k > config.burn_in {
            retained.row_mut(k - config.burn_in - 1).assign(&params.values);
        }
    }
    PosteriorSamples::new(retained, day, config.total_iters, config.burn_in, seed)
}

fn divergence_at(err: Error, iteration: usize) -> Error {
    match err {
        Error::NonFiniteGradient => Error::Divergence { iteration },
        other => other,
    }
}
