//! Desk-scale benchmark: every attack against the default defenses on the
//! default SBM, one line per seed.
//!
//! cargo run --release -p gialab-core --example desk -- [seeds] [opt_epochs]

use std::time::Instant;

use gialab::attack::EdgePolicy;
use gialab::eval::{evaluate_attack, ReportMeta};
use gialab::experiment::{load_dataset, train_models, ExperimentConfig, Method};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let seeds = args.next().unwrap_or(5) as u64;
    let epochs = args.next();
    let mut config = ExperimentConfig::default();
    if let Some(e) = epochs {
        config.attack.opt_epochs = e;
        config.baseline.opt_epochs = e;
    }
    let methods = [
        Method::Tdgia,
        Method::Afgsm,
        Method::Fgsm,
        Method::Ablation(EdgePolicy::Uniform),
        Method::Ablation(EdgePolicy::Random),
    ];
    let weights = config.weights().unwrap();
    println!("weighted-accuracy reduction, b={} d={}", config.budget.nodes, config.budget.degree);
    for seed in 0..seeds {
        let started = Instant::now();
        let ds = load_dataset(&config, seed).unwrap();
        let trained = train_models(&config, &ds, seed).unwrap();
        let budget = config.budget.resolve(&ds).unwrap();
        let surrogate = &trained.surrogates[0].model;
        let mut line = format!("seed {seed}:");
        for method in methods {
            let out = method.run(surrogate, &ds, &budget, &method.config(&config, seed)).unwrap();
            let report =
                evaluate_attack(&trained.defenses, &ds, &out.injection, &weights, config.top3, ReportMeta::default())
                    .unwrap();
            line += &format!(" {method} {:.3}", report.reduction);
        }
        println!("{line} ({:.0}s)", started.elapsed().as_secs_f64());
    }
}
