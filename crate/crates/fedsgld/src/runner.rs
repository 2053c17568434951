//! Drives a full experiment from a parsed config: builds the per-day
//! datasets, runs every requested strategy, and persists the report,
//! curves, reliability bins, and posterior samples. `report` re-renders a
//! finished run purely from the persisted files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, ExperimentConfig};
use crate::datagen::{self, DayDataset, TabularSchema};
use crate::error::{Error, Result};
use crate::federation::{run_continual, Strategy};
use crate::model::ModelSpec;
use crate::persist;
use crate::prior::PosteriorSamples;
use crate::report::ExperimentReport;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Everything `report` needs, persisted as one JSON document.
#[derive(Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub report: ExperimentReport,
}

/// Wall-clock details live here and only here, so every other artifact is
/// byte-stable across reruns.
#[derive(Serialize, Deserialize)]
struct RunMeta {
    unix_time_secs: u64,
    crate_version: String,
}

pub fn build_all_days(config: &ExperimentConfig) -> Result<Vec<DayDataset>> {
    let fed = &config.federation;
    match &config.data {
        DataConfig::Synthetic { .. } => {
            let spec = config.shift_spec()?;
            (1..=fed.num_days)
                .map(|day| {
                    datagen::build_day(
                        &spec,
                        day,
                        fed.num_nodes,
                        fed.per_node_samples,
                        config.seed,
                    )
                })
                .collect()
        }
        DataConfig::Tabular { paths, val_fraction } => {
            let schema = TabularSchema {
                num_features: config.model.layer_sizes[0],
                num_classes: *config.model.layer_sizes.last().unwrap(),
            };
            paths
                .iter()
                .enumerate()
                .map(|(i, path)| {
                    let day = i + 1;
                    let pool = datagen::load_tabular(path, &schema)?;
                    let val_count = (pool.len() as f64 * val_fraction).round() as usize;
                    datagen::split_and_shard(
                        &pool,
                        day,
                        val_count,
                        fed.num_nodes,
                        fed.per_node_samples,
                        config.seed,
                    )
                })
                .collect()
        }
    }
}

/// Run every requested strategy over the configured days and write all
/// artifacts into `config.output_dir`.
pub fn cmd_run(config: &ExperimentConfig, quiet: bool) -> Result<RunArtifact> {
    config.validate()?;
    let spec = ModelSpec::new(config.model.layer_sizes.clone(), config.model.activation)?;
    let days = build_all_days(config)?;
    let strategies = config.resolved_strategies()?;

    let run_one = |&strategy: &Strategy| -> Result<(ExperimentReport, Vec<PosteriorSamples>)> {
        let fed = config.federation_config(strategy);
        run_continual(&spec, &days, &fed, &config.metrics)
            .map_err(|e| e.with_context(format!("strategy {}", strategy.tag())))
    };

    #[cfg(feature = "parallel")]
    let outcomes: Vec<(ExperimentReport, Vec<PosteriorSamples>)> =
        strategies.par_iter().map(run_one).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<(ExperimentReport, Vec<PosteriorSamples>)> =
        strategies.iter().map(run_one).collect::<Result<_>>()?;

    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir)?;

    let mut reports = Vec::new();
    for (strategy, (report, posteriors)) in strategies.iter().zip(outcomes) {
        for samples in &posteriors {
            let path = out_dir.join(persist::posterior_file_name(*strategy, samples.day));
            persist::save_posterior(&path, samples, *strategy)?;
        }
        if !quiet {
            for cell in &report.cells {
                println!(
                    "{} day {}: accuracy {:.3}, ece {:.4}, iterations {}",
                    cell.strategy,
                    cell.day,
                    cell.final_accuracy,
                    cell.final_ece,
                    cell.iterations_to_threshold
                        .map(|i| i.to_string())
                        .unwrap_or_else(|| "n/r".into()),
                );
            }
        }
        reports.push(report);
    }

    let report = ExperimentReport::merge(reports).expect("at least one strategy ran");
    let artifact = RunArtifact {
        config: config.clone(),
        report,
    };
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&artifact).expect("report serializes"),
    )?;
    persist::write_curves_csv(&out_dir.join("curves.csv"), &artifact.report)?;
    persist::write_reliability_csv(&out_dir.join("reliability.csv"), &artifact.report)?;
    let meta = RunMeta {
        unix_time_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    std::fs::write(
        out_dir.join("run_meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;
    if !quiet {
        println!("artifacts written to {}", out_dir.display());
    }
    Ok(artifact)
}

/// Write one tabular file per configured day: `day_1.csv .. day_D.csv`.
pub fn cmd_gen_data(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let spec = config.shift_spec()?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for day in 1..=config.federation.num_days {
        let pool = datagen::gen_day(&spec, day, config.seed)?;
        let path = out_dir.join(format!("day_{day}.csv"));
        datagen::save_tabular(&path, &pool)?;
        written.push(path);
    }
    Ok(written)
}

/// Rendered summary plus the number of missing cells tolerated.
#[derive(Debug)]
pub struct ReportRender {
    pub text: String,
    pub warnings: usize,
}

pub fn load_artifact(run_dir: &Path) -> Result<RunArtifact> {
    let path = run_dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::CorruptArtifact {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::CorruptArtifact {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Render the per-day summary table from persisted artifacts only.
pub fn cmd_report(run_dir: &Path) -> Result<ReportRender> {
    let artifact = load_artifact(run_dir)?;
    let report = &artifact.report;
    let days = report.days();
    let strategies = report.strategies();
    if days.is_empty() || strategies.is_empty() {
        return Err(Error::CorruptArtifact {
            path: run_dir.join("report.json").display().to_string(),
            msg: "report holds no cells".into(),
        });
    }
    let mut warnings = 0usize;
    let expected_days: Vec<usize> = (1..=artifact.config.federation.num_days).collect();

    let mut text = String::new();
    let header: String = expected_days
        .iter()
        .map(|d| format!("{:>12}", format!("Day {d}")))
        .collect();
    text.push_str(&format!("{:<10}{header}\n", "Setup"));

    let fmt_cell = |value: Option<String>, warnings: &mut usize| -> String {
        match value {
            Some(v) => format!("{v:>12}"),
            None => {
                *warnings += 1;
                format!("{:>12}", "—")
            }
        }
    };

    text.push_str("Accuracy, % (posterior predictive)\n");
    for &strategy in &strategies {
        let mut row = format!("{:<10}", strategy.to_string());
        for &d in &expected_days {
            let v = report
                .cell(strategy, d)
                .map(|c| format!("{:.1}", 100.0 * c.final_accuracy));
            row.push_str(&fmt_cell(v, &mut warnings));
        }
        text.push_str(&row);
        text.push('\n');
    }

    text.push_str("ECE\n");
    for &strategy in &strategies {
        let mut row = format!("{:<10}", strategy.to_string());
        for &d in &expected_days {
            let v = report
                .cell(strategy, d)
                .map(|c| format!("{:.3}", c.final_ece));
            row.push_str(&fmt_cell(v, &mut warnings));
        }
        text.push_str(&row);
        text.push('\n');
    }

    text.push_str(&format!(
        "Num. Iter. (accuracy >= {:.0}%)\n",
        100.0 * report.threshold
    ));
    let iter_strategies: Vec<Strategy> = strategies
        .iter()
        .copied()
        .filter(|s| *s != Strategy::TransferLearning)
        .collect();
    for &strategy in &iter_strategies {
        let mut row = format!("{:<10}", strategy.to_string());
        for &d in &expected_days {
            let cell = report.cell(strategy, d);
            let v = match cell {
                None => None,
                Some(c) => match c.iterations_to_threshold {
                    None => Some("n/r".to_string()),
                    Some(iters) => {
                        // delta of P-CL vs Retrain: round(100*(retr-pcl)/retr)
                        let delta = if strategy == Strategy::PosteriorContinual && d > 1 {
                            report
                                .cell(Strategy::Retrain, d)
                                .and_then(|r| r.iterations_to_threshold)
                                .map(|retr| {
                                    (100.0 * (retr as f64 - iters as f64) / retr as f64).round()
                                        as i64
                                })
                        } else {
                            None
                        };
                        match delta {
                            Some(pct) => Some(format!("{iters} ({pct:+}%)")),
                            None => Some(iters.to_string()),
                        }
                    }
                },
            };
            row.push_str(&fmt_cell(v, &mut warnings));
        }
        text.push_str(&row);
        text.push('\n');
    }
    if warnings > 0 {
        text.push_str(&format!("warning: {warnings} missing cell(s)\n"));
    }
    Ok(ReportRender { text, warnings })
}

impl Error {
    pub(crate) fn with_context(self, msg: String) -> Error {
        Error::Context {
            msg,
            source: Box::new(self),
        }
    }
}
