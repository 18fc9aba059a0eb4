//! Config-driven pipeline: dataset, surrogate and defense training,
//! attacks, and evaluation, laid out on disk one directory per seed.
//!
//! ```text
//! <out>/seed_<s>/config.json
//! <out>/seed_<s>/dataset/...
//! <out>/seed_<s>/models/{surrogate,defense}_<name>.json
//! <out>/seed_<s>/clean_accuracy.csv
//! <out>/seed_<s>/attacks/<method>/<surrogate>/b<nodes>/{injection.json,attack_log.csv}
//! <out>/seed_<s>/report/{report.json,metrics.csv,curve.csv,transfer_matrix.csv}
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use crate::attack::{
    afgsm_attack, edge_policy_ablation, fgsm_attack, tdgia_attack, AttackConfig, AttackOutcome, EdgePolicy,
};
use crate::dataset::{write_file, Dataset};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, emit_report, evaluate_attack, fmt_f64, transfer_matrix, CurvePoint, Defense, MetricWeights, ReportBundle,
    ReportMeta, Top3Mode,
};
use crate::gnn::{load_model, predict_labels, save_model, train, ModelSpec, TrainConfig};
use crate::injection::{Budget, Injection, InjectionArtifact};
use crate::par;
use crate::sbm::{synth_sbm, SbmParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// A dataset directory on disk.
    Path(PathBuf),
    /// A synthetic graph sampled with the run seed.
    Sbm(SbmParams),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Sbm(SbmParams::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    #[serde(flatten)]
    pub spec: ModelSpec,
}

impl ModelEntry {
    pub fn new(name: &str, spec: ModelSpec) -> Self {
        ModelEntry {
            name: name.into(),
            spec,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub nodes: usize,
    pub degree: usize,
    /// Defaults to the dataset's feature range.
    pub feature_bounds: Option<(f64, f64)>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            nodes: 20,
            degree: 5,
            feature_bounds: None,
        }
    }
}

impl BudgetConfig {
    pub fn resolve(&self, dataset: &Dataset) -> Result<Budget> {
        Budget::new(
            self.nodes,
            self.degree,
            self.feature_bounds.unwrap_or(dataset.feature_range),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub surrogates: Vec<ModelEntry>,
    pub defenses: Vec<ModelEntry>,
    pub train: TrainConfig,
    pub budget: BudgetConfig,
    /// Settings for tdgia and the edge-policy ablations.
    pub attack: AttackConfig,
    /// Settings for fgsm and afgsm.
    pub baseline: AttackConfig,
    /// Required unless there are 3, 7 or 12 defenses.
    pub weights: Option<MetricWeights>,
    pub top3: Top3Mode,
    pub seeds: Vec<u64>,
    /// Extra injected-node counts attacked and reported as a curve.
    pub sweep_budgets: Vec<usize>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::default(),
            surrogates: vec![ModelEntry::new("gcn_ln", ModelSpec::gcn_layernorm())],
            defenses: vec![
                ModelEntry::new("gcn_ln", ModelSpec::gcn_layernorm()),
                ModelEntry::new("sgc", ModelSpec::sgc()),
                ModelEntry::new("sage_mean", ModelSpec::sage_mean()),
            ],
            train: TrainConfig::default(),
            budget: BudgetConfig::default(),
            attack: AttackConfig::default(),
            baseline: AttackConfig::baseline(),
            weights: None,
            top3: Top3Mode::default(),
            seeds: vec![0],
            sweep_budgets: Vec::new(),
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn weights(&self) -> Result<MetricWeights> {
        if let Some(w) = &self.weights {
            return Ok(w.clone());
        }
        match self.defenses.len() {
            3 => Ok(MetricWeights::three_model()),
            7 => Ok(MetricWeights::seven_model()),
            12 => Ok(MetricWeights::twelve_model()),
            n => Err(Error::Config(format!(
                "{n} defenses need explicit metric weights (defaults exist for 3, 7 and 12)"
            ))),
        }
    }

    /// Validates every section that does not need the dataset.
    pub fn check(&self) -> Result<()> {
        if let DatasetSource::Sbm(p) = &self.dataset {
            p.check()?;
        }
        if self.surrogates.is_empty() || self.defenses.is_empty() {
            return Err(Error::Config("need at least one surrogate and one defense".into()));
        }
        for group in [&self.surrogates, &self.defenses] {
            let mut seen = std::collections::HashSet::new();
            for m in group {
                let ok = !m.name.is_empty() && m.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
                if !ok {
                    return Err(Error::Config(format!(
                        "model name {:?} must be non-empty ASCII letters, digits, '_' or '-'",
                        m.name
                    )));
                }
                if !seen.insert(&m.name) {
                    return Err(Error::Config(format!("duplicate model name {:?}", m.name)));
                }
                m.spec.check()?;
            }
        }
        self.train.check()?;
        let weights = self.weights()?;
        if weights.len() != self.defenses.len() {
            return Err(Error::Config(format!(
                "{} metric weights for {} defenses",
                weights.len(),
                self.defenses.len()
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds list is empty".into()));
        }
        let probe = Budget::new(
            self.budget.nodes,
            self.budget.degree,
            self.budget.feature_bounds.unwrap_or((-1.0, 1.0)),
        )?;
        self.attack.check(&probe)?;
        self.baseline.check(&probe)?;
        Ok(())
    }

    /// Node counts attacked for each (method, surrogate): the sweep plus the
    /// configured budget, ascending and deduplicated.
    pub fn budgets(&self) -> Vec<usize> {
        let mut b = self.sweep_budgets.clone();
        b.push(self.budget.nodes);
        b.sort_unstable();
        b.dedup();
        b
    }
}

/// Attack methods selectable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Tdgia,
    Fgsm,
    Afgsm,
    Ablation(EdgePolicy),
}

impl Method {
    pub const NAMES: &'static str = "tdgia, fgsm, afgsm, ablation:defective, ablation:uniform, ablation:random";

    pub fn config(self, exp: &ExperimentConfig, seed: u64) -> AttackConfig {
        let base = match self {
            Method::Fgsm | Method::Afgsm => &exp.baseline,
            Method::Tdgia | Method::Ablation(_) => &exp.attack,
        };
        AttackConfig {
            seed,
            ..base.clone()
        }
    }

    pub fn run(
        self,
        surrogate: &crate::gnn::Model,
        dataset: &Dataset,
        budget: &Budget,
        config: &AttackConfig,
    ) -> Result<AttackOutcome> {
        match self {
            Method::Tdgia => tdgia_attack(surrogate, dataset, budget, config),
            Method::Fgsm => fgsm_attack(surrogate, dataset, budget, config),
            Method::Afgsm => afgsm_attack(surrogate, dataset, budget, config),
            Method::Ablation(p) => edge_policy_ablation(p, surrogate, dataset, budget, config),
        }
    }

    /// Directory-safe form of the name.
    pub fn dir_name(self) -> String {
        self.to_string().replace(':', "-")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Tdgia => f.write_str("tdgia"),
            Method::Fgsm => f.write_str("fgsm"),
            Method::Afgsm => f.write_str("afgsm"),
            Method::Ablation(p) => write!(f, "ablation:{}", p.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Config(format!("unknown method {s:?}; valid methods: {}", Method::NAMES));
        match s {
            "tdgia" => Ok(Method::Tdgia),
            "fgsm" => Ok(Method::Fgsm),
            "afgsm" => Ok(Method::Afgsm),
            _ => {
                let policy = s.strip_prefix("ablation:").ok_or_else(unknown)?;
                EdgePolicy::parse(policy).map(Method::Ablation).ok_or_else(unknown)
            }
        }
    }
}

/// SplitMix64 step: distinct, well-spread seeds for each model of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

pub fn load_dataset(config: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    match &config.dataset {
        DatasetSource::Path(p) => Dataset::load(p),
        DatasetSource::Sbm(params) => synth_sbm(params, seed),
    }
}

/// Trained models of one seed.
#[derive(Clone, Debug)]
pub struct Trained {
    pub surrogates: Vec<Defense>,
    pub defenses: Vec<Defense>,
}

/// Trains every surrogate and defense, each from its own seed, so a
/// surrogate and a defense of the same architecture still differ.
pub fn train_models(config: &ExperimentConfig, dataset: &Dataset, seed: u64) -> Result<Trained> {
    let jobs: Vec<(bool, usize, &ModelEntry)> = config
        .surrogates
        .iter()
        .enumerate()
        .map(|(i, m)| (true, i, m))
        .chain(config.defenses.iter().enumerate().map(|(i, m)| (false, i, m)))
        .collect();
    let models = par::map(&jobs, |&(surrogate, i, entry)| -> Result<Defense> {
        let stream = if surrogate { 1000 } else { 2000 } + i as u64;
        let tc = TrainConfig {
            seed: derive_seed(seed, stream),
            ..config.train.clone()
        };
        Ok(Defense::new(entry.name.clone(), train(&entry.spec, dataset, &tc)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (s, d): (Vec<_>, Vec<_>) = jobs.iter().zip(models).partition(|((surrogate, _, _), _)| *surrogate);
    Ok(Trained {
        surrogates: s.into_iter().map(|(_, m)| m).collect(),
        defenses: d.into_iter().map(|(_, m)| m).collect(),
    })
}

fn model_path(dir: &Path, role: &str, name: &str) -> PathBuf {
    dir.join("models").join(format!("{role}_{name}.json"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the resolved config next to a run's outputs.
pub fn echo_config(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("config.json"), &config.to_json())
}

/// Dataset, trained models and clean accuracies for one seed.
pub fn stage_train(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<(Dataset, Trained)> {
    config.check()?;
    let dataset = load_dataset(config, seed)?;
    let trained = train_models(config, &dataset, seed)?;
    create_dir(&dir.join("models"))?;
    echo_config(config, dir)?;
    dataset.save(dir.join("dataset"))?;
    let mut csv = String::from("role,name,accuracy\n");
    for (role, models) in [("surrogate", &trained.surrogates), ("defense", &trained.defenses)] {
        for m in models.iter() {
            save_model(&m.model, model_path(dir, role, &m.name))?;
            let pred = predict_labels(&m.model, &dataset)?;
            let acc = accuracy(&pred.labels, &dataset.labels, dataset.targets())?;
            info!("seed {seed}: {role} {} clean accuracy {acc:.4}", m.name);
            csv += &format!("{role},{},{}\n", m.name, fmt_f64(acc));
        }
    }
    write_file(&dir.join("clean_accuracy.csv"), &csv)?;
    Ok((dataset, trained))
}

/// Reads back what [`stage_train`] wrote.
pub fn load_trained(config: &ExperimentConfig, dir: &Path) -> Result<(Dataset, Trained)> {
    let dataset = Dataset::load(dir.join("dataset"))?;
    let load = |role: &str, entries: &[ModelEntry]| -> Result<Vec<Defense>> {
        entries
            .iter()
            .map(|m| Ok(Defense::new(m.name.clone(), load_model(model_path(dir, role, &m.name))?)))
            .collect()
    };
    Ok((
        dataset,
        Trained {
            surrogates: load("surrogate", &config.surrogates)?,
            defenses: load("defense", &config.defenses)?,
        },
    ))
}

pub fn attack_dir(dir: &Path, method: Method, surrogate: &str, nodes: usize) -> PathBuf {
    dir.join("attacks")
        .join(method.dir_name())
        .join(surrogate)
        .join(format!("b{nodes}"))
}

/// Runs `method` from every surrogate at every budget in
/// [`ExperimentConfig::budgets`] and writes the artifacts. Returns the
/// artifact paths.
pub fn stage_attack(
    config: &ExperimentConfig,
    method: Method,
    seed: u64,
    dir: &Path,
    dataset: &Dataset,
    trained: &Trained,
) -> Result<Vec<PathBuf>> {
    config.check()?;
    let attack_cfg = method.config(config, seed);
    let mut paths = Vec::new();
    for surrogate in &trained.surrogates {
        for nodes in config.budgets() {
            let budget = BudgetConfig {
                nodes,
                ..config.budget.clone()
            }
            .resolve(dataset)?;
            let outcome = method.run(&surrogate.model, dataset, &budget, &attack_cfg)?;
            let out = attack_dir(dir, method, &surrogate.name, nodes);
            create_dir(&out)?;
            let mut artifact = InjectionArtifact::new(&outcome.injection, budget);
            artifact.method = Some(method.to_string());
            artifact.seed = Some(seed);
            artifact.save(out.join("injection.json"))?;
            outcome.save_log(out.join("attack_log.csv"))?;
            info!(
                "seed {seed}: {method} from {} with b={nodes} -> {}",
                surrogate.name,
                out.display()
            );
            paths.push(out.join("injection.json"));
        }
    }
    echo_config(config, dir)?;
    Ok(paths)
}

/// Every `injection.json` under `dir/attacks`, in sorted path order.
pub fn find_artifacts(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(p: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        if !p.is_dir() {
            return Ok(());
        }
        let mut entries: Vec<PathBuf> = fs::read_dir(p)
            .map_err(|e| Error::io(p, e))?
            .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(p, e)))
            .collect::<Result<_>>()?;
        entries.sort();
        for e in entries {
            if e.is_dir() {
                walk(&e, out)?;
            } else if e.file_name().is_some_and(|n| n == "injection.json") {
                out.push(e);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(&dir.join("attacks"), &mut out)?;
    Ok(out)
}

/// Scores the clean graph and each artifact against the defenses, and adds
/// budget curves and transfer matrices when the artifacts support them.
/// Surrogate names are read from the artifact path when it follows the
/// [`attack_dir`] layout.
pub fn stage_evaluate(
    config: &ExperimentConfig,
    seed: u64,
    dataset: &Dataset,
    trained: &Trained,
    artifacts: &[PathBuf],
) -> Result<ReportBundle> {
    config.check()?;
    let weights = config.weights()?;
    let mut bundle = ReportBundle::default();
    bundle.reports.push(evaluate_attack(
        &trained.defenses,
        dataset,
        &Injection::empty(dataset.feature_dim()),
        &weights,
        config.top3,
        ReportMeta {
            method: "clean".into(),
            surrogate: None,
            budget: None,
            seed: Some(seed),
        },
    )?);

    // (method, surrogate) -> [(nodes, injection)]
    let mut runs: BTreeMap<(String, String), Vec<(usize, Injection)>> = BTreeMap::new();
    for path in artifacts {
        let art = InjectionArtifact::load(path)?;
        let injection = art.injection()?;
        let method = art.method.clone().unwrap_or_else(|| "unknown".into());
        let surrogate = surrogate_from_path(path).unwrap_or_default();
        let report = evaluate_attack(
            &trained.defenses,
            dataset,
            &injection,
            &weights,
            config.top3,
            ReportMeta {
                method: method.clone(),
                surrogate: (!surrogate.is_empty()).then(|| surrogate.clone()),
                budget: Some(art.budget),
                seed: Some(seed),
            },
        )?;
        if report.reduction < 0.0 {
            log::warn!("{method} from {surrogate:?} raised weighted accuracy by {:.4}", -report.reduction);
        }
        bundle.reports.push(report);
        runs.entry((method, surrogate))
            .or_default()
            .push((art.budget.nodes, injection));
    }

    let clean = bundle.reports[0].clone();
    for report in &bundle.reports[1..] {
        let key = (
            report.meta.method.clone(),
            report.meta.surrogate.clone().unwrap_or_default(),
        );
        if runs.get(&key).is_some_and(|r| r.len() > 1) {
            bundle.curve.push(CurvePoint::from_report(report));
        }
    }
    if !bundle.curve.is_empty() {
        let curves: std::collections::BTreeSet<(String, Option<String>)> =
            bundle.curve.iter().map(|p| (p.method.clone(), p.surrogate.clone())).collect();
        for (method, surrogate) in curves {
            // the unattacked graph anchors every curve at b = 0
            let anchored = bundle
                .curve
                .iter()
                .any(|p| p.method == method && p.surrogate == surrogate && p.budget_nodes == 0);
            if !anchored {
                let mut p = CurvePoint::from_report(&clean);
                p.method = method;
                p.surrogate = surrogate;
                bundle.curve.push(p);
            }
        }
        bundle.curve.sort_by(|a, b| {
            (&a.method, &a.surrogate, a.budget_nodes).cmp(&(&b.method, &b.surrogate, b.budget_nodes))
        });
    }

    if trained.surrogates.len() > 1 {
        let methods: std::collections::BTreeSet<String> = runs.keys().map(|(m, _)| m.clone()).collect();
        for method in methods {
            let per_surrogate: Vec<Option<&Injection>> = trained
                .surrogates
                .iter()
                .map(|s| {
                    runs.get(&(method.clone(), s.name.clone())).and_then(|r| {
                        r.iter()
                            .find(|(n, _)| *n == config.budget.nodes)
                            .map(|(_, inj)| inj)
                    })
                })
                .collect();
            if per_surrogate.iter().any(Option::is_none) {
                continue;
            }
            let mut m = transfer_matrix(&trained.surrogates, &trained.defenses, dataset, |s| {
                let i = trained.surrogates.iter().position(|x| x.name == s.name).expect("known surrogate");
                Ok(per_surrogate[i].expect("checked above").clone())
            })?;
            m.method = method;
            bundle.transfer.push(m);
        }
    }
    Ok(bundle)
}

fn surrogate_from_path(path: &Path) -> Option<String> {
    // .../attacks/<method>/<surrogate>/b<nodes>/injection.json
    let parts: Vec<_> = path.components().rev().take(5).collect();
    if parts.len() == 5 && parts[4].as_os_str() == "attacks" {
        parts[2].as_os_str().to_str().map(str::to_owned)
    } else {
        None
    }
}

/// Writes a bundle under `dir/report`.
pub fn write_report(config: &ExperimentConfig, bundle: &ReportBundle, dir: &Path) -> Result<PathBuf> {
    let out = dir.join("report");
    emit_report(bundle, &out)?;
    echo_config(config, &out)?;
    Ok(out)
}
