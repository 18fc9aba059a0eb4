use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use gialab::eval::{load_report, ReportBundle};
use gialab::experiment::{
    find_artifacts, load_trained, seed_dir, stage_attack, stage_evaluate, stage_train, write_report, DatasetSource,
    ExperimentConfig, Method,
};
use gialab::sbm::{synth_sbm, SbmParams};
use gialab::{Error, Result};

/// Graph injection attacks against small GNNs: synthesize data, train
/// surrogates and defenses, attack, evaluate.
#[derive(Parser)]
#[command(name = "gialab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a stochastic block model dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        blocks: Option<usize>,
    },
    /// Train the surrogates and defenses of every seed.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run one attack per seed and surrogate.
    Attack {
        #[command(flatten)]
        common: Common,
        /// tdgia, fgsm, afgsm or ablation:<defective|uniform|random>.
        #[arg(long)]
        method: String,
        /// Injected nodes; may not exceed the config budget.
        #[arg(long)]
        budget_nodes: Option<usize>,
        /// Edges per injected node; may not exceed the config budget.
        #[arg(long)]
        budget_degree: Option<usize>,
    },
    /// Score the clean graph and attack artifacts against the defenses.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Explicit injection.json files; default is every artifact of the seed.
        injections: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        let out = config
            .out
            .clone()
            .ok_or_else(|| Error::Config("no output directory: pass --out or set `out` in the config".into()))?;
        Ok((config, out))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GIALAB_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical { .. } => 3,
        e if e.is_validation() => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { common, nodes, blocks } => synth(&common, nodes, blocks),
        Command::Train { common } => {
            let (config, out) = common.resolve()?;
            config.check()?;
            for &seed in &config.seeds {
                let dir = seed_dir(&out, seed);
                let (_, trained) = stage_train(&config, seed, &dir)?;
                let clean = std::fs::read_to_string(dir.join("clean_accuracy.csv")).map_err(|e| Error::io(&dir, e))?;
                println!("seed {seed}: {} surrogate(s), {} defense(s)", trained.surrogates.len(), trained.defenses.len());
                print!("{clean}");
            }
            Ok(())
        }
        Command::Attack {
            common,
            method,
            budget_nodes,
            budget_degree,
        } => {
            let (mut config, out) = common.resolve()?;
            let method: Method = method.parse()?;
            override_budget(&mut config, budget_nodes, budget_degree)?;
            config.check()?;
            for &seed in &config.seeds {
                let dir = seed_dir(&out, seed);
                let (dataset, trained) = trained_or_train(&config, seed, &dir)?;
                for path in stage_attack(&config, method, seed, &dir, &dataset, &trained)? {
                    println!("{}", path.display());
                }
            }
            Ok(())
        }
        Command::Evaluate { common, injections } => {
            let (config, out) = common.resolve()?;
            config.check()?;
            for &seed in &config.seeds {
                let dir = seed_dir(&out, seed);
                let (dataset, trained) = load_trained(&config, &dir)
                    .map_err(|e| Error::Config(format!("seed {seed} has no trained models ({e}); run `train` first")))?;
                let artifacts = if injections.is_empty() {
                    find_artifacts(&dir)?
                } else {
                    injections.clone()
                };
                let bundle = stage_evaluate(&config, seed, &dataset, &trained, &artifacts)?;
                let report_dir = write_report(&config, &bundle, &dir)?;
                print_summary(seed, &load_report(&report_dir)?);
            }
            Ok(())
        }
    }
}

fn synth(common: &Common, nodes: Option<usize>, blocks: Option<usize>) -> Result<()> {
    let (config, out) = common.resolve()?;
    let mut params = match &config.dataset {
        DatasetSource::Sbm(p) => p.clone(),
        DatasetSource::Path(_) => SbmParams::default(),
    };
    if nodes.is_some() || blocks.is_some() {
        let n = nodes.unwrap_or_else(|| params.num_nodes());
        let k = blocks.unwrap_or(params.sizes.len());
        if k == 0 || n < k {
            return Err(Error::Config(format!("cannot split {n} nodes into {k} blocks")));
        }
        params.sizes = SbmParams::with_nodes(n, k).sizes;
    }
    for &seed in &config.seeds {
        let dir = if config.seeds.len() == 1 { out.clone() } else { seed_dir(&out, seed) };
        let ds = synth_sbm(&params, seed)?;
        ds.save(&dir)?;
        println!(
            "{}: nodes {} edges {} classes {} features {}",
            dir.display(),
            ds.num_nodes(),
            ds.graph.num_edges(),
            ds.num_classes,
            ds.feature_dim()
        );
    }
    Ok(())
}

fn override_budget(config: &mut ExperimentConfig, nodes: Option<usize>, degree: Option<usize>) -> Result<()> {
    if let Some(n) = nodes {
        if n > config.budget.nodes {
            return Err(Error::Config(format!(
                "--budget-nodes {n} exceeds the config budget of {} nodes",
                config.budget.nodes
            )));
        }
        config.budget.nodes = n;
    }
    if let Some(d) = degree {
        if d > config.budget.degree {
            return Err(Error::Config(format!(
                "--budget-degree {d} exceeds the config budget degree {}",
                config.budget.degree
            )));
        }
        config.budget.degree = d;
        if config.attack.effective_degree_cap.is_some_and(|c| c > d) {
            config.attack.effective_degree_cap = Some(d);
        }
        if config.baseline.effective_degree_cap.is_some_and(|c| c > d) {
            config.baseline.effective_degree_cap = Some(d);
        }
    }
    Ok(())
}

fn trained_or_train(
    config: &ExperimentConfig,
    seed: u64,
    dir: &Path,
) -> Result<(gialab::Dataset, gialab::experiment::Trained)> {
    if dir.join("models").is_dir() {
        load_trained(config, dir)
    } else {
        info!("seed {seed}: no trained models in {}, training first", dir.display());
        stage_train(config, seed, dir)
    }
}

fn print_summary(seed: u64, bundle: &ReportBundle) {
    println!("seed {seed}");
    println!(
        "  {:<22} {:<10} {:>5} {:>9} {:>9} {:>9}",
        "method", "surrogate", "b", "s_avg", "s_top3", "s_weighted"
    );
    for r in &bundle.reports {
        println!(
            "  {:<22} {:<10} {:>5} {:>9.4} {:>9.4} {:>9.4}",
            r.meta.method,
            r.meta.surrogate.as_deref().unwrap_or("-"),
            r.meta.budget.map_or(0, |b| b.nodes),
            r.attacked.s_avg,
            r.attacked.s_top3,
            r.attacked.s_weighted
        );
    }
}
