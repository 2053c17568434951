//! Scratch harness for picking the acceptance-fixture learning rate.
//! Not part of the deliverable; run with --release.

use fedsgld::config::ExperimentConfig;
use fedsgld::datagen::DayDataset;
use fedsgld::federation::{run_continual, run_day, InitMode, Strategy};
use fedsgld::metrics::iterations_to_threshold;
use fedsgld::model::ModelSpec;
use fedsgld::prior::standard_prior;
use fedsgld::runner::build_all_days;

fn apply_env_overrides(cfg: &mut ExperimentConfig) {
    if let Ok(b) = std::env::var("CAL_BATCH") {
        cfg.federation.sgld.batch_size = b.parse().unwrap();
    }
    if let Ok(s) = std::env::var("CAL_SAMPLES") {
        if let fedsgld::config::DataConfig::Synthetic {
            ref mut samples_per_day,
            ..
        } = cfg.data
        {
            *samples_per_day = s.parse().unwrap();
        }
    }
    if let Ok(t) = std::env::var("CAL_ITERS") {
        let t: usize = t.parse().unwrap();
        cfg.federation.sgld.total_iters = t;
        cfg.federation.sgld.burn_in = t / 2;
    }
}

fn pct(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((v.len() as f64 - 1.0) * q).floor() as usize;
    v[idx]
}

fn curve_mode(etas: &[f64], layers: &[usize]) {
    // From-scratch Retrain curves per day: is the model learning at all,
    // and do the days behave alike?
    for &eta in etas {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 0;
        cfg.federation.sgld.eta = eta;
        cfg.model.layer_sizes = layers.to_vec();
        if std::env::var("CAL_TANH").is_ok() { cfg.model.activation = fedsgld::model::Activation::Tanh; }
        apply_env_overrides(&mut cfg);
        cfg.validate().unwrap();
        let spec = ModelSpec::new(cfg.model.layer_sizes.clone(), cfg.model.activation).unwrap();
        let days: Vec<DayDataset> = build_all_days(&cfg).unwrap();
        let fed = cfg.federation_config(Strategy::Retrain);
        let prior = standard_prior(spec.param_count());
        for day in &days {
            match run_day(&spec, day, &prior, &fed, InitMode::SamplePrior) {
                Ok((_, records)) => {
                    let probe: Vec<String> = [0usize, 4, 9, 24, 49, 74, 99]
                        .iter()
                        .filter(|&&i| i < records.len())
                        .map(|&i| {
                            format!(
                                "k{}: acc={:.2} loss={:.2}",
                                i + 1,
                                records[i].val_accuracy,
                                records[i].train_loss
                            )
                        })
                        .collect();
                    println!(
                        "eta={eta:<8} {layers:?} day {}  {}",
                        day.day,
                        probe.join("  ")
                    );
                }
                Err(e) => println!("eta={eta:<8} {layers:?} day {}  DIVERGED: {e}", day.day),
            }
        }
    }
}

fn full_mode(etas: &[f64], layers: &[usize]) {
    for &eta in etas {
        println!("==== eta = {eta}  layers {layers:?} ====");
        let mut tl_acc_days: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut tl_drop = Vec::new();
        let mut tl_monotone = 0;
        let mut retr_iters: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut pcl_iters: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut ratios2 = Vec::new();
        let mut ratios3 = Vec::new();
        let mut ece_wins = 0;
        let seed_base: u64 = std::env::var("CAL_SEED_BASE").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
        for seed in seed_base..seed_base + 5 {
            let mut cfg = ExperimentConfig::default();
            cfg.seed = seed;
            cfg.federation.sgld.eta = eta;
            cfg.model.layer_sizes = layers.to_vec();
        if std::env::var("CAL_TANH").is_ok() { cfg.model.activation = fedsgld::model::Activation::Tanh; }
            apply_env_overrides(&mut cfg);
            cfg.validate().unwrap();
            let spec =
                ModelSpec::new(cfg.model.layer_sizes.clone(), cfg.model.activation).unwrap();
            let days: Vec<DayDataset> = build_all_days(&cfg).unwrap();

            let t0 = std::time::Instant::now();
            let mut reports = Vec::new();
            let mut failed = false;
            for strategy in Strategy::all() {
                let fed = cfg.federation_config(strategy);
                match run_continual(&spec, &days, &fed, &cfg.metrics) {
                    Ok((report, _)) => reports.push(report),
                    Err(e) => {
                        println!("seed {seed} strategy {strategy}: DIVERGED: {e}");
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                continue;
            }
            let elapsed = t0.elapsed().as_secs_f64();

            let (tl, retr, pcl) = (&reports[0], &reports[1], &reports[2]);
            let tl_acc: Vec<f64> = (1..=3)
                .map(|d| tl.cell(Strategy::TransferLearning, d).unwrap().final_accuracy)
                .collect();
            tl_drop.push(tl_acc[0] - tl_acc[2]);
            if tl_acc[0] >= tl_acc[1] && tl_acc[1] >= tl_acc[2] {
                tl_monotone += 1;
            }

            let day1_curve = retr.accuracy_curve(Strategy::Retrain, 1);
            let threshold = pct(&day1_curve, 0.9).clamp(0.01, 1.0);

            let iters = |report: &fedsgld::report::ExperimentReport, s, d| {
                let curve = report.accuracy_curve(s, d);
                iterations_to_threshold(&curve, threshold)
                    .unwrap()
                    .map(|i| i as f64)
                    .unwrap_or(101.0)
            };
            let r1 = iters(retr, Strategy::Retrain, 1);
            let r2 = iters(retr, Strategy::Retrain, 2);
            let p2 = iters(pcl, Strategy::PosteriorContinual, 2);
            let r3 = iters(retr, Strategy::Retrain, 3);
            let p3 = iters(pcl, Strategy::PosteriorContinual, 3);
            ratios2.push(p2 / r2);
            ratios3.push(p3 / r3);
            for (d, v) in tl_acc.iter().enumerate() {
                tl_acc_days[d].push(*v);
            }
            retr_iters[0].push(r2);
            retr_iters[1].push(r3);
            pcl_iters[0].push(p2);
            pcl_iters[1].push(p3);

            let e_r = retr.cell(Strategy::Retrain, 3).unwrap().final_ece;
            let e_p = pcl.cell(Strategy::PosteriorContinual, 3).unwrap().final_ece;
            if e_p <= e_r {
                ece_wins += 1;
            }

            println!(
                "seed {seed}: tl_acc={:.3}/{:.3}/{:.3} thr={threshold:.3} retr={r1:.0}/{r2:.0}/{r3:.0} pcl=-/{p2:.0}/{p3:.0} ece retr={e_r:.4} pcl={e_p:.4} ({elapsed:.1}s)",
                tl_acc[0], tl_acc[1], tl_acc[2]
            );
        }
        if !tl_drop.is_empty() {
            let med = |v: &[f64]| pct(v, 0.5);
            println!(
                "MEDIANS: tl acc {:.3}/{:.3}/{:.3} (drop {:.3}, per-seed monotone {tl_monotone}/5)",
                med(&tl_acc_days[0]),
                med(&tl_acc_days[1]),
                med(&tl_acc_days[2]),
                med(&tl_drop),
            );
            println!(
                "MEDIANS: iters retr d2={:.0} d3={:.0}  pcl d2={:.0} d3={:.0}  med-of-ratio d2={:.2} d3={:.2}  ece wins={ece_wins}/5",
                med(&retr_iters[0]),
                med(&retr_iters[1]),
                med(&pcl_iters[0]),
                med(&pcl_iters[1]),
                med(&ratios2),
                med(&ratios3)
            );
        }
    }
}

fn main() {
    // usage: calibrate <curve|full> <eta,eta,...> [layer sizes...]
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("curve");
    let etas: Vec<f64> = args
        .get(1)
        .map(|s| s.split(',').map(|a| a.parse().unwrap()).collect())
        .unwrap_or_default();
    let layers: Vec<usize> = args
        .iter()
        .skip(2)
        .map(|a| a.parse().unwrap())
        .collect();
    let layers = if layers.is_empty() {
        vec![2, 64, 64, 10]
    } else {
        layers
    };
    let etas = if etas.is_empty() { vec![1e-3] } else { etas };
    match mode {
        "curve" => curve_mode(&etas, &layers),
        _ => full_mode(&etas, &layers),
    }
}
