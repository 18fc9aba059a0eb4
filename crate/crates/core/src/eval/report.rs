use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::{accuracy, aggregate, fmt_f64, Aggregate, MetricWeights, Top3Mode};
use crate::dataset::{write_file, Dataset};
use crate::error::{Error, Result};
use crate::gnn::{predict_labels, Model};
use crate::injection::{apply_injection, Budget, Injection};
use crate::par;

/// A fixed, already trained model evaluated under attack.
#[derive(Clone, Debug, PartialEq)]
pub struct Defense {
    pub name: String,
    pub model: Model,
}

impl Defense {
    pub fn new(name: impl Into<String>, model: Model) -> Self {
        Defense {
            name: name.into(),
            model,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub method: String,
    pub surrogate: Option<String>,
    pub budget: Option<Budget>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub name: String,
    pub clean: f64,
    pub attacked: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub models: Vec<ModelScore>,
    pub clean: Aggregate,
    pub attacked: Aggregate,
    /// Clean minus attacked weighted accuracy.
    pub reduction: f64,
}

/// Applies `injection` to `clean` once and scores every defense on the
/// test targets against the true labels. Defenses are only read.
pub fn evaluate_attack(
    defenses: &[Defense],
    clean: &Dataset,
    injection: &Injection,
    weights: &MetricWeights,
    top3: Top3Mode,
    meta: ReportMeta,
) -> Result<EvalReport> {
    if defenses.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} defenses but {} metric weights",
            defenses.len(),
            weights.len()
        )));
    }
    let attacked = apply_injection(clean, injection)?;
    let targets = clean.targets();
    let scores = par::map(defenses, |d| -> Result<ModelScore> {
        let before = predict_labels(&d.model, clean)?;
        let after = predict_labels(&d.model, &attacked)?;
        Ok(ModelScore {
            name: d.name.clone(),
            clean: accuracy(&before.labels, &clean.labels, targets)?,
            attacked: accuracy(&after.labels, &clean.labels, targets)?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let clean_agg = aggregate(&scores.iter().map(|s| s.clean).collect::<Vec<_>>(), weights, top3)?;
    let attacked_agg = aggregate(&scores.iter().map(|s| s.attacked).collect::<Vec<_>>(), weights, top3)?;
    let report = EvalReport {
        meta,
        models: scores,
        clean: clean_agg,
        attacked: attacked_agg,
        reduction: clean_agg.s_weighted - attacked_agg.s_weighted,
    };
    info!(
        "{}: weighted accuracy {:.4} -> {:.4}",
        report.meta.method, report.clean.s_weighted, report.attacked.s_weighted
    );
    Ok(report)
}

/// Per-defense accuracy reductions; rows are surrogates, columns defenses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub method: String,
    pub surrogates: Vec<String>,
    pub defenses: Vec<String>,
    pub reductions: Vec<Vec<f64>>,
}

impl TransferMatrix {
    /// Header `method,surrogate,<defense>...`, one row per surrogate.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        write_transfer_header(&mut s, &self.defenses);
        self.write_rows(&mut s);
        s
    }

    fn write_rows(&self, s: &mut String) {
        for (name, row) in self.surrogates.iter().zip(&self.reductions) {
            write!(s, "{},{name}", self.method).unwrap();
            for x in row {
                s.push(',');
                s.push_str(&fmt_f64(*x));
            }
            s.push('\n');
        }
    }

    /// Parses one or more matrices sharing a header, split by method.
    pub fn from_csv(text: &str) -> Result<Vec<Self>> {
        let bad = |line: usize, message: String| Error::load("transfer_matrix.csv", line, message);
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let defenses: Vec<String> = match header.strip_prefix("method,surrogate") {
            Some("") => Vec::new(),
            Some(rest) if rest.starts_with(',') => rest[1..].split(',').map(str::to_owned).collect(),
            _ => return Err(bad(1, "header must start with `method,surrogate`".into())),
        };
        let mut out: Vec<TransferMatrix> = Vec::new();
        for (i, line) in lines {
            let mut cells = line.split(',');
            let method = cells.next().unwrap_or_default();
            let surrogate = cells.next().ok_or_else(|| bad(i + 1, "missing surrogate".into()))?;
            let row = cells
                .map(|c| c.trim().parse::<f64>().map_err(|e| bad(i + 1, format!("{c:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != defenses.len() {
                return Err(bad(i + 1, format!("{} values for {} defenses", row.len(), defenses.len())));
            }
            if out.last().is_none_or(|m| m.method != method) {
                out.push(TransferMatrix {
                    method: method.to_owned(),
                    defenses: defenses.clone(),
                    ..TransferMatrix::default()
                });
            }
            let m = out.last_mut().expect("pushed above");
            m.surrogates.push(surrogate.to_owned());
            m.reductions.push(row);
        }
        Ok(out)
    }
}

fn write_transfer_header(s: &mut String, defenses: &[String]) {
    s.push_str("method,surrogate");
    for d in defenses {
        s.push(',');
        s.push_str(d);
    }
    s.push('\n');
}

/// Runs `attack` once per surrogate and scores each injection against
/// every defense.
pub fn transfer_matrix<F>(surrogates: &[Defense], defenses: &[Defense], dataset: &Dataset, attack: F) -> Result<TransferMatrix>
where
    F: Fn(&Defense) -> Result<Injection> + Sync + Send,
{
    let targets = dataset.targets();
    let clean: Vec<f64> = defenses
        .iter()
        .map(|d| accuracy(&predict_labels(&d.model, dataset)?.labels, &dataset.labels, targets))
        .collect::<Result<_>>()?;
    let rows = par::map(surrogates, |s| -> Result<Vec<f64>> {
        let attacked = apply_injection(dataset, &attack(s)?)?;
        defenses
            .iter()
            .zip(&clean)
            .map(|(d, c)| Ok(c - accuracy(&predict_labels(&d.model, &attacked)?.labels, &dataset.labels, targets)?))
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(TransferMatrix {
        method: String::new(),
        surrogates: surrogates.iter().map(|s| s.name.clone()).collect(),
        defenses: defenses.iter().map(|d| d.name.clone()).collect(),
        reductions: rows,
    })
}

/// One point of an accuracy-versus-budget curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub surrogate: Option<String>,
    pub seed: Option<u64>,
    pub budget_nodes: usize,
    pub s_avg: f64,
    pub s_top3: f64,
    pub s_weighted: f64,
    pub reduction: f64,
}

impl CurvePoint {
    pub fn from_report(report: &EvalReport) -> Self {
        CurvePoint {
            method: report.meta.method.clone(),
            surrogate: report.meta.surrogate.clone(),
            seed: report.meta.seed,
            budget_nodes: report.meta.budget.as_ref().map_or(0, |b| b.nodes),
            s_avg: report.attacked.s_avg,
            s_top3: report.attacked.s_top3,
            s_weighted: report.attacked.s_weighted,
            reduction: report.reduction,
        }
    }
}

/// Everything `emit_report` writes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub reports: Vec<EvalReport>,
    pub curve: Vec<CurvePoint>,
    pub transfer: Vec<TransferMatrix>,
}

/// One row of `metrics.csv`. `kind` is `model` for a defense or
/// `aggregate` for `s_avg`, `s_top3` and `s_weighted`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub surrogate: Option<String>,
    pub seed: Option<u64>,
    pub budget_nodes: Option<usize>,
    pub budget_degree: Option<usize>,
    pub kind: String,
    pub name: String,
    pub clean: f64,
    pub attacked: f64,
    pub reduction: f64,
}

const METRICS_HEADER: &str = "method,surrogate,seed,budget_nodes,budget_degree,kind,name,clean,attacked,reduction";

fn metric_rows(report: &EvalReport) -> Vec<MetricRow> {
    let meta = &report.meta;
    let row = |kind: &str, name: &str, clean: f64, attacked: f64| MetricRow {
        method: meta.method.clone(),
        surrogate: meta.surrogate.clone(),
        seed: meta.seed,
        budget_nodes: meta.budget.as_ref().map(|b| b.nodes),
        budget_degree: meta.budget.as_ref().map(|b| b.degree),
        kind: kind.into(),
        name: name.into(),
        clean,
        attacked,
        reduction: clean - attacked,
    };
    let mut rows: Vec<MetricRow> = report
        .models
        .iter()
        .map(|m| row("model", &m.name, m.clean, m.attacked))
        .collect();
    let (c, a) = (&report.clean, &report.attacked);
    rows.push(row("aggregate", "s_avg", c.s_avg, a.s_avg));
    rows.push(row("aggregate", "s_top3", c.s_top3, a.s_top3));
    rows.push(row("aggregate", "s_weighted", c.s_weighted, a.s_weighted));
    rows
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn check_name(name: &str) -> Result<()> {
    if name.contains([',', '\n', '"']) {
        return Err(Error::Config(format!("name {name:?} cannot be written to CSV")));
    }
    Ok(())
}

/// Writes `report.json` and `metrics.csv` into `dir`, plus `curve.csv`
/// when the bundle has curve points and `transfer_matrix.csv` when it has
/// a matrix. Floats in CSV files carry 17 significant digits.
pub fn emit_report(bundle: &ReportBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let json = serde_json::to_string_pretty(bundle).map_err(|source| Error::Json {
        context: "report.json".into(),
        source,
    })?;
    write_file(&dir.join("report.json"), &(json + "\n"))?;

    let mut csv = format!("{METRICS_HEADER}\n");
    for report in &bundle.reports {
        for r in metric_rows(report) {
            check_name(&r.method)?;
            check_name(&r.name)?;
            check_name(r.surrogate.as_deref().unwrap_or_default())?;
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.surrogate.as_deref().unwrap_or_default(),
                opt(r.seed),
                opt(r.budget_nodes),
                opt(r.budget_degree),
                r.kind,
                r.name,
                fmt_f64(r.clean),
                fmt_f64(r.attacked),
                fmt_f64(r.reduction)
            )
            .unwrap();
        }
    }
    write_file(&dir.join("metrics.csv"), &csv)?;

    if !bundle.curve.is_empty() {
        let mut csv = String::from("method,surrogate,seed,budget_nodes,s_avg,s_top3,s_weighted,reduction\n");
        for p in &bundle.curve {
            check_name(&p.method)?;
            check_name(p.surrogate.as_deref().unwrap_or_default())?;
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                p.method,
                p.surrogate.as_deref().unwrap_or_default(),
                opt(p.seed),
                p.budget_nodes,
                fmt_f64(p.s_avg),
                fmt_f64(p.s_top3),
                fmt_f64(p.s_weighted),
                fmt_f64(p.reduction)
            )
            .unwrap();
        }
        write_file(&dir.join("curve.csv"), &csv)?;
    }
    if let Some(first) = bundle.transfer.first() {
        let mut csv = String::new();
        write_transfer_header(&mut csv, &first.defenses);
        for m in &bundle.transfer {
            if m.defenses != first.defenses {
                return Err(Error::Config("transfer matrices disagree on the defense list".into()));
            }
            for name in m.surrogates.iter().chain(&m.defenses).chain([&m.method]) {
                check_name(name)?;
            }
            m.write_rows(&mut csv);
        }
        write_file(&dir.join("transfer_matrix.csv"), &csv)?;
    }
    Ok(())
}

/// Reads back the `report.json` written by [`emit_report`].
pub fn load_report(dir: impl AsRef<Path>) -> Result<ReportBundle> {
    let path = dir.as_ref().join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        _ => return Err(Error::load(path, 1, "unexpected header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: String| Error::load(path, i + 1, m);
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 10 {
            return Err(bad(format!("{} fields, expected 10", cells.len())));
        }
        fn parse_opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, String>
        where
            T::Err: std::fmt::Display,
        {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| format!("{s:?}: {e}"))
            }
        }
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        rows.push(MetricRow {
            method: cells[0].into(),
            surrogate: parse_opt(cells[1]).map_err(bad)?,
            seed: parse_opt(cells[2]).map_err(bad)?,
            budget_nodes: parse_opt(cells[3]).map_err(bad)?,
            budget_degree: parse_opt(cells[4]).map_err(bad)?,
            kind: cells[5].into(),
            name: cells[6].into(),
            clean: float(cells[7])?,
            attacked: float(cells[8])?,
            reduction: float(cells[9])?,
        });
    }
    Ok(rows)
}
