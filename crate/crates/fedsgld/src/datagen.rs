//! Synthetic multi-day classification data with controllable drift, plus a
//! plain tabular loader so recorded datasets can stand in for the
//! generator.
//!
//! Day 1 places one Gaussian blob per class; each following day applies the
//! same affine drift (rotation about the day-1 centroid, then translation)
//! to every class center. Tabular files are UTF-8 CSV, one sample per
//! line, features first and an integer label last, no header.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::LabeledBatch;
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    /// One center per class on day 1.
    pub class_centers_day1: Vec<Vec<f64>>,
    /// Added to every center once per day.
    pub drift_translation: Vec<f64>,
    /// Radians per day, applied to the first two coordinates about the
    /// day-1 centroid.
    pub drift_rotation: f64,
    pub class_noise_std: f64,
    pub samples_per_day: usize,
    /// Fraction of each day's pool held out for validation before sharding.
    pub val_fraction: f64,
}

impl ShiftSpec {
    /// Centers equally spaced on a circle of `radius`; the default
    /// geometry when no explicit centers are configured.
    pub fn circle(
        num_classes: usize,
        radius: f64,
        noise_std: f64,
        samples_per_day: usize,
    ) -> Result<Self> {
        let centers = (0..num_classes)
            .map(|c| {
                let angle = 2.0 * std::f64::consts::PI * c as f64 / num_classes as f64;
                vec![radius * angle.cos(), radius * angle.sin()]
            })
            .collect();
        let spec = Self {
            num_classes,
            input_dim: 2,
            class_centers_day1: centers,
            drift_translation: vec![0.0, 0.0],
            drift_rotation: 0.1,
            class_noise_std: noise_std,
            samples_per_day,
            val_fraction: 0.2,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("need at least 2 classes".into()));
        }
        if !(self.class_noise_std > 0.0 && self.class_noise_std.is_finite()) {
            return Err(Error::InvalidConfig("class_noise_std must be > 0".into()));
        }
        if self.class_centers_day1.len() != self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "{} centers for {} classes",
                self.class_centers_day1.len(),
                self.num_classes
            )));
        }
        if self
            .class_centers_day1
            .iter()
            .any(|c| c.len() != self.input_dim)
        {
            return Err(Error::InvalidConfig(
                "every class center must have input_dim coordinates".into(),
            ));
        }
        if self.drift_translation.len() != self.input_dim {
            return Err(Error::InvalidConfig(
                "drift_translation must have input_dim coordinates".into(),
            ));
        }
        if self.drift_rotation != 0.0 && self.input_dim < 2 {
            return Err(Error::InvalidConfig(
                "rotation drift needs at least 2 input dimensions".into(),
            ));
        }
        for a in 0..self.num_classes {
            for b in a + 1..self.num_classes {
                if self.class_centers_day1[a] == self.class_centers_day1[b] {
                    return Err(Error::InvalidConfig(format!(
                        "class centers {a} and {b} coincide on day 1"
                    )));
                }
            }
        }
        if !(self.val_fraction >= 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "val_fraction must be in [0, 1)".into(),
            ));
        }
        if self.samples_per_day == 0 {
            return Err(Error::InvalidConfig("samples_per_day must be >= 1".into()));
        }
        Ok(())
    }

    fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.input_dim];
        for center in &self.class_centers_day1 {
            for (acc, v) in c.iter_mut().zip(center) {
                *acc += v;
            }
        }
        for v in &mut c {
            *v /= self.num_classes as f64;
        }
        c
    }

    fn drift_once(&self, center: &[f64], pivot: &[f64]) -> Vec<f64> {
        let mut out = center.to_vec();
        if self.drift_rotation != 0.0 {
            let (sin, cos) = self.drift_rotation.sin_cos();
            let x = center[0] - pivot[0];
            let y = center[1] - pivot[1];
            out[0] = pivot[0] + cos * x - sin * y;
            out[1] = pivot[1] + sin * x + cos * y;
        }
        for (o, t) in out.iter_mut().zip(&self.drift_translation) {
            *o += t;
        }
        out
    }

    /// Class centers on `day`: the day-1 centers with drift applied
    /// `day - 1` times.
    pub fn centers_on_day(&self, day: usize) -> Vec<Vec<f64>> {
        let pivot = self.centroid();
        let mut centers = self.class_centers_day1.clone();
        for _ in 1..day {
            for c in &mut centers {
                *c = self.drift_once(c, &pivot);
            }
        }
        centers
    }
}

/// A day's data, already split for the federation.
#[derive(Clone, Debug)]
pub struct DayDataset {
    pub day: usize,
    pub train_shards: Vec<LabeledBatch>,
    pub validation: LabeledBatch,
}

impl DayDataset {
    pub fn train_size(&self) -> usize {
        self.train_shards.iter().map(LabeledBatch::len).sum()
    }
}

/// Generate one day's labeled pool: balanced classes, Gaussian blobs around
/// the drifted centers, deterministic per `(spec, day, seed)`.
pub fn gen_day(spec: &ShiftSpec, day: usize, seed: u64) -> Result<LabeledBatch> {
    spec.validate()?;
    if day == 0 {
        return Err(Error::InvalidConfig("days are 1-based".into()));
    }
    let centers = spec.centers_on_day(day);
    let total = spec.samples_per_day;
    let base = total / spec.num_classes;
    let extra = total % spec.num_classes;

    let mut rng = substream(seed, "data", day, 0);
    let mut features = Vec::with_capacity(total * spec.input_dim);
    let mut labels = Vec::with_capacity(total);
    for (class, center) in centers.iter().enumerate() {
        let count = base + usize::from(class < extra);
        for _ in 0..count {
            for &coord in center {
                features.push(coord + spec.class_noise_std * rng.sample::<f64, _>(StandardNormal));
            }
            labels.push(class);
        }
    }
    LabeledBatch::new(
        Array2::from_shape_vec((labels.len(), spec.input_dim), features)
            .expect("generated pool is rectangular"),
        labels,
    )
}

/// Split a pool into `num_nodes` disjoint shards of exactly `per_node`
/// samples each, uniformly without replacement; returns the shards and the
/// unassigned leftover.
pub fn shard(
    pool: &LabeledBatch,
    num_nodes: usize,
    per_node: usize,
    seed: u64,
) -> Result<(Vec<LabeledBatch>, Vec<usize>)> {
    let needed = num_nodes * per_node;
    if pool.len() < needed {
        return Err(Error::InsufficientPool {
            needed,
            available: pool.len(),
        });
    }
    let mut rng = substream(seed, "shard", 0, 0);
    let chosen = rand::seq::index::sample(&mut rng, pool.len(), needed).into_vec();
    let shards = chosen
        .chunks(per_node)
        .map(|idx| pool.select(idx))
        .collect();
    let assigned: std::collections::HashSet<usize> = chosen.iter().cloned().collect();
    let leftover = (0..pool.len()).filter(|i| !assigned.contains(i)).collect();
    Ok((shards, leftover))
}

/// Generate, hold out validation, and shard one day in a single step.
pub fn build_day(
    spec: &ShiftSpec,
    day: usize,
    num_nodes: usize,
    per_node: usize,
    seed: u64,
) -> Result<DayDataset> {
    let pool = gen_day(spec, day, seed)?;
    let val_count = (pool.len() as f64 * spec.val_fraction).round() as usize;
    split_and_shard(&pool, day, val_count, num_nodes, per_node, seed)
}

/// Hold out `val_count` samples for validation, then shard the rest.
pub fn split_and_shard(
    pool: &LabeledBatch,
    day: usize,
    val_count: usize,
    num_nodes: usize,
    per_node: usize,
    seed: u64,
) -> Result<DayDataset> {
    if val_count == 0 || val_count >= pool.len() {
        return Err(Error::InvalidConfig(format!(
            "validation holdout {} out of range for pool of {}",
            val_count,
            pool.len()
        )));
    }
    let mut rng = substream(seed, "val", day, 0);
    let val_idx = rand::seq::index::sample(&mut rng, pool.len(), val_count).into_vec();
    let held: std::collections::HashSet<usize> = val_idx.iter().cloned().collect();
    let train_idx: Vec<usize> = (0..pool.len()).filter(|i| !held.contains(i)).collect();
    let validation = pool.select(&val_idx);
    let train = pool.select(&train_idx);
    let (train_shards, _) = shard(&train, num_nodes, per_node, seed ^ (day as u64))?;
    Ok(DayDataset {
        day,
        train_shards,
        validation,
    })
}

/// Expected feature/label layout of a tabular file.
#[derive(Clone, Debug)]
pub struct TabularSchema {
    pub num_features: usize,
    pub num_classes: usize,
}

/// Load a CSV pool: features then an integer label per line.
pub fn load_tabular(path: &Path, schema: &TabularSchema) -> Result<LabeledBatch> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != schema.num_features + 1 {
            return Err(Error::Parse {
                path: name,
                line: lineno,
                msg: format!(
                    "expected {} fields, got {}",
                    schema.num_features + 1,
                    fields.len()
                ),
            });
        }
        for f in &fields[..schema.num_features] {
            let v: f64 = f.trim().parse().map_err(|e| Error::Parse {
                path: name.clone(),
                line: lineno,
                msg: format!("bad feature {f:?}: {e}"),
            })?;
            features.push(v);
        }
        let label: usize = fields[schema.num_features]
            .trim()
            .parse()
            .map_err(|e| Error::Parse {
                path: name.clone(),
                line: lineno,
                msg: format!("bad label {:?}: {e}", fields[schema.num_features]),
            })?;
        if label >= schema.num_classes {
            return Err(Error::Parse {
                path: name,
                line: lineno,
                msg: format!(
                    "label {label} out of range for {} classes",
                    schema.num_classes
                ),
            });
        }
        labels.push(label);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Empty("tabular file"));
    }
    LabeledBatch::new(
        Array2::from_shape_vec((rows, schema.num_features), features)
            .expect("parsed rows are rectangular"),
        labels,
    )
}

/// Write a pool in the same format `load_tabular` reads. Floats use the
/// shortest representation that round-trips exactly.
pub fn save_tabular(path: &Path, pool: &LabeledBatch) -> Result<()> {
    let mut out = String::new();
    for (row, &label) in pool.features.rows().into_iter().zip(&pool.labels) {
        for v in row.iter() {
            write!(out, "{v},").expect("string write");
        }
        writeln!(out, "{label}").expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}
