//! Diagonal Gaussian prior over the flat parameter vector: density,
//! gradient, the standard-normal default, and fitting from retained
//! posterior samples so one day's posterior becomes the next day's prior.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::model::ParamVector;

/// Fitted variances are floored here so a collapsed posterior column can
/// never blow up the next day's prior gradient.
pub const VAR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDiagPrior {
    mean: Array1<f64>,
    variance: Array1<f64>,
}

impl GaussianDiagPrior {
    /// Build a prior; variances are floored at [`VAR_FLOOR`].
    pub fn new(mean: Array1<f64>, variance: Array1<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::LengthMismatch {
                left: mean.len(),
                right: variance.len(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) || variance.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "prior mean/variance must be finite".into(),
            ));
        }
        Ok(Self {
            mean,
            variance: variance.mapv(|v| v.max(VAR_FLOOR)),
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn variance(&self) -> &Array1<f64> {
        &self.variance
    }

    fn check_len(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: params.len(),
            });
        }
        Ok(())
    }
}

/// The day-1 prior: N(0, I).
pub fn standard_prior(n_params: usize) -> GaussianDiagPrior {
    GaussianDiagPrior {
        mean: Array1::zeros(n_params),
        variance: Array1::ones(n_params),
    }
}

/// Full normalized log-density of `params` under the prior.
pub fn log_prior(prior: &GaussianDiagPrior, params: &ParamVector) -> Result<f64> {
    prior.check_len(params)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut total = 0.0;
    for ((&theta, &mu), &var) in params
        .values
        .iter()
        .zip(prior.mean.iter())
        .zip(prior.variance.iter())
    {
        let d = theta - mu;
        total -= d * d / (2.0 * var) + 0.5 * (two_pi * var).ln();
    }
    Ok(total)
}

/// Gradient of [`log_prior`]: component j is `-(theta_j - mu_j) / var_j`.
pub fn log_prior_grad(prior: &GaussianDiagPrior, params: &ParamVector) -> Result<ParamVector> {
    prior.check_len(params)?;
    let values = params
        .values
        .iter()
        .zip(prior.mean.iter())
        .zip(prior.variance.iter())
        .map(|((&theta, &mu), &var)| -(theta - mu) / var)
        .collect();
    Ok(ParamVector::from_vec(values))
}

/// Retained post-burn-in parameter vectors, one chain iterate per row.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSamples {
    pub samples: Array2<f64>,
    pub day: usize,
    pub total_iters: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl PosteriorSamples {
    pub fn new(
        samples: Array2<f64>,
        day: usize,
        total_iters: usize,
        burn_in: usize,
        seed: u64,
    ) -> Result<Self> {
        let retained = total_iters.saturating_sub(burn_in);
        if retained < 2 || samples.nrows() != retained {
            return Err(Error::InsufficientSamples {
                got: samples.nrows(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "posterior samples must be finite".into(),
            ));
        }
        Ok(Self {
            samples,
            day,
            total_iters,
            burn_in,
            seed,
        })
    }

    pub fn retained(&self) -> usize {
        self.samples.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.samples.ncols()
    }
}

/// Fit a diagonal Gaussian to the sample columns: per-column mean and
/// unbiased variance, floored at [`VAR_FLOOR`].
pub fn fit_from_samples(samples: &PosteriorSamples) -> Result<GaussianDiagPrior> {
    let rows = samples.samples.nrows();
    if rows < 2 {
        return Err(Error::InsufficientSamples { got: rows });
    }
    let mean = samples.samples.mean_axis(Axis(0)).unwrap();
    let mut variance = Array1::zeros(samples.samples.ncols());
    for (j, col) in samples.samples.axis_iter(Axis(1)).enumerate() {
        let m = mean[j];
        let ss: f64 = col.iter().map(|&v| (v - m) * (v - m)).sum();
        variance[j] = ss / (rows - 1) as f64;
    }
    GaussianDiagPrior::new(mean, variance)
}
