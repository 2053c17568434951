//! Experiment configuration: a single TOML file covering the model, the
//! federation, the data source, and the metrics, with every knob
//! defaulting to the simulator's standard setup (10 nodes, 50 samples
//! each, 100 iterations with 50 burn-in, learning rate 1e-4, standard
//! normal day-1 prior, 85% accuracy threshold).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::ShiftSpec;
use crate::error::{Error, Result};
use crate::federation::{AggregationWeights, FederationConfig, PclInit, Strategy};
use crate::metrics::MetricsConfig;
use crate::model::{Activation, ModelSpec};
use crate::sgld::SgldConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Which strategies `run` executes; accepts tl / retrain / pcl.
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default)]
    pub federation: FederationSection,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

fn default_strategies() -> Vec<String> {
    vec!["tl".into(), "retrain".into(), "pcl".into()]
}

fn default_model() -> ModelSpec {
    ModelSpec {
        layer_sizes: vec![2, 64, 64, 10],
        activation: Activation::Relu,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: default_output_dir(),
            strategies: default_strategies(),
            model: default_model(),
            federation: FederationSection::default(),
            data: DataConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

/// Federation knobs as they appear in the file; `num_nodes` is stated once
/// here and copied into the sampler config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    #[serde(default = "default_num_nodes")]
    pub num_nodes: usize,
    #[serde(default = "default_per_node_samples")]
    pub per_node_samples: usize,
    #[serde(default = "default_num_days")]
    pub num_days: usize,
    #[serde(default = "default_aggregation")]
    pub aggregation_weights: AggregationWeights,
    #[serde(default = "default_pcl_init")]
    pub pcl_init: PclInit,
    #[serde(default)]
    pub sgld: SgldSection,
}

fn default_num_nodes() -> usize {
    10
}
fn default_per_node_samples() -> usize {
    50
}
fn default_num_days() -> usize {
    3
}
fn default_aggregation() -> AggregationWeights {
    AggregationWeights::Uniform
}
fn default_pcl_init() -> PclInit {
    PclInit::SamplePrior
}

impl Default for FederationSection {
    fn default() -> Self {
        Self {
            num_nodes: default_num_nodes(),
            per_node_samples: default_per_node_samples(),
            num_days: default_num_days(),
            aggregation_weights: default_aggregation(),
            pcl_init: default_pcl_init(),
            sgld: SgldSection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgldSection {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_total_iters")]
    pub total_iters: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_num_batches")]
    pub num_batches: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_eta() -> f64 {
    1e-4
}
fn default_total_iters() -> usize {
    100
}
fn default_burn_in() -> usize {
    50
}
fn default_num_batches() -> usize {
    1
}
fn default_batch_size() -> usize {
    32
}

impl Default for SgldSection {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            total_iters: default_total_iters(),
            burn_in: default_burn_in(),
            num_batches: default_num_batches(),
            batch_size: default_batch_size(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Drifting Gaussian blobs, one per class.
    Synthetic {
        #[serde(default = "default_num_classes")]
        num_classes: usize,
        #[serde(default = "default_input_dim")]
        input_dim: usize,
        /// Used when `class_centers_day1` is not given.
        #[serde(default = "default_circle_radius")]
        circle_radius: f64,
        #[serde(default)]
        class_centers_day1: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_noise_std")]
        class_noise_std: f64,
        #[serde(default = "default_samples_per_day")]
        samples_per_day: usize,
        #[serde(default = "default_drift_rotation")]
        drift_rotation: f64,
        #[serde(default)]
        drift_translation: Option<Vec<f64>>,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    /// One CSV file per day: features then an integer label per line.
    Tabular {
        paths: Vec<PathBuf>,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
}

fn default_num_classes() -> usize {
    10
}
fn default_input_dim() -> usize {
    2
}
fn default_circle_radius() -> f64 {
    3.0
}
fn default_noise_std() -> f64 {
    0.6
}
fn default_samples_per_day() -> usize {
    625
}
fn default_drift_rotation() -> f64 {
    0.1
}
fn default_val_fraction() -> f64 {
    0.2
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic {
            num_classes: default_num_classes(),
            input_dim: default_input_dim(),
            circle_radius: default_circle_radius(),
            class_centers_day1: None,
            class_noise_std: default_noise_std(),
            samples_per_day: default_samples_per_day(),
            drift_rotation: default_drift_rotation(),
            drift_translation: None,
            val_fraction: default_val_fraction(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Build the runtime federation config for one strategy.
    pub fn federation_config(&self, strategy: Strategy) -> FederationConfig {
        let f = &self.federation;
        FederationConfig {
            num_nodes: f.num_nodes,
            per_node_samples: f.per_node_samples,
            sgld: SgldConfig {
                eta: f.sgld.eta,
                total_iters: f.sgld.total_iters,
                burn_in: f.sgld.burn_in,
                num_batches: f.sgld.num_batches,
                batch_size: f.sgld.batch_size,
                num_nodes: f.num_nodes,
            },
            num_days: f.num_days,
            strategy,
            aggregation_weights: f.aggregation_weights,
            pcl_init: f.pcl_init,
            seed: self.seed,
        }
    }

    pub fn resolved_strategies(&self) -> Result<Vec<Strategy>> {
        if self.strategies.is_empty() {
            return Err(Error::InvalidConfig("strategies must not be empty".into()));
        }
        let mut out = Vec::new();
        for s in &self.strategies {
            let parsed = Strategy::parse(s)?;
            if !out.contains(&parsed) {
                out.push(parsed);
            }
        }
        Ok(out)
    }

    /// Resolve the synthetic section into a concrete generator spec.
    pub fn shift_spec(&self) -> Result<ShiftSpec> {
        match &self.data {
            DataConfig::Synthetic {
                num_classes,
                input_dim,
                circle_radius,
                class_centers_day1,
                class_noise_std,
                samples_per_day,
                drift_rotation,
                drift_translation,
                val_fraction,
            } => {
                let mut spec = match class_centers_day1 {
                    Some(centers) => ShiftSpec {
                        num_classes: *num_classes,
                        input_dim: *input_dim,
                        class_centers_day1: centers.clone(),
                        drift_translation: vec![0.0; *input_dim],
                        drift_rotation: *drift_rotation,
                        class_noise_std: *class_noise_std,
                        samples_per_day: *samples_per_day,
                        val_fraction: *val_fraction,
                    },
                    None => {
                        if *input_dim != 2 {
                            return Err(Error::InvalidConfig(
                                "default circle centers need input_dim = 2; give class_centers_day1"
                                    .into(),
                            ));
                        }
                        let mut s = ShiftSpec::circle(
                            *num_classes,
                            *circle_radius,
                            *class_noise_std,
                            *samples_per_day,
                        )?;
                        s.drift_rotation = *drift_rotation;
                        s.val_fraction = *val_fraction;
                        s
                    }
                };
                if let Some(t) = drift_translation {
                    spec.drift_translation = t.clone();
                }
                spec.validate()?;
                Ok(spec)
            }
            DataConfig::Tabular { .. } => Err(Error::InvalidConfig(
                "data.kind is tabular; no synthetic spec to resolve".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ModelSpec::new(self.model.layer_sizes.clone(), self.model.activation)?;
        self.metrics.validate()?;
        self.resolved_strategies()?;
        // strategy choice does not affect validity; use any
        self.federation_config(Strategy::Retrain).validate()?;

        let retained = self.federation.sgld.total_iters - self.federation.sgld.burn_in;
        if let Some(s) = self.metrics.avg_samples {
            if s > retained {
                return Err(Error::InvalidConfig(format!(
                    "metrics.avg_samples ({s}) exceeds retained samples ({retained})"
                )));
            }
        }

        match &self.data {
            DataConfig::Synthetic { .. } => {
                let spec = self.shift_spec()?;
                if spec.input_dim != self.model.layer_sizes[0] {
                    return Err(Error::InvalidConfig(format!(
                        "model input dim {} != data input dim {}",
                        self.model.layer_sizes[0], spec.input_dim
                    )));
                }
                if spec.num_classes != *self.model.layer_sizes.last().unwrap() {
                    return Err(Error::InvalidConfig(format!(
                        "model class count {} != data class count {}",
                        self.model.layer_sizes.last().unwrap(),
                        spec.num_classes
                    )));
                }
                let val = (spec.samples_per_day as f64 * spec.val_fraction).round() as usize;
                let train = spec.samples_per_day.saturating_sub(val);
                let needed = self.federation.num_nodes * self.federation.per_node_samples;
                if train < needed {
                    return Err(Error::InvalidConfig(format!(
                        "day pool leaves {train} training samples but sharding needs {needed}"
                    )));
                }
                if val == 0 {
                    return Err(Error::InvalidConfig(
                        "validation holdout is empty; raise samples_per_day or val_fraction"
                            .into(),
                    ));
                }
            }
            DataConfig::Tabular { paths, val_fraction } => {
                if paths.len() != self.federation.num_days {
                    return Err(Error::InvalidConfig(format!(
                        "{} tabular paths for {} days",
                        paths.len(),
                        self.federation.num_days
                    )));
                }
                if !(*val_fraction > 0.0 && *val_fraction < 1.0) {
                    return Err(Error::InvalidConfig(
                        "tabular val_fraction must be in (0, 1)".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}
