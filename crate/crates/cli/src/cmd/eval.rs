use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chessprobe::corpus::{read_probes, ProbeInstance, ProbeTask};
use chessprobe::eval::{
    canonical_perplexity, error_breakdown, errors_table, metrics_json, obstruction_table, path_length_csv,
    pseudo_legal_table, random_legal_baseline, rap_sweep, results_table, sweep_csv, ErrorBreakdown, ModelRow,
    Perplexity, PerplexityOptions, ProbeOptions, TaskResult, SWEEP_VALUES,
};
use chessprobe::lm::{Gpt, LanguageModel};
use chessprobe::notation::vocab::piece_type_tokens;
use chessprobe::notation::NotationScheme;
use serde::{Deserialize, Serialize};

use super::{load_checkpoint, read_games, Precision};
use crate::config::{write_json, write_text, ConfigFile, Global, RunConfig, ARTIFACT_VERSION};
use crate::error::CliError;

/// A loaded model in whichever precision was asked for.
enum Loaded {
    F32(Gpt<f32>),
    F64(Gpt<f64>),
}

impl Loaded {
    fn as_model(&self) -> &dyn LanguageModel {
        match self {
            Loaded::F32(m) => m,
            Loaded::F64(m) => m,
        }
    }
}

struct ModelInfo {
    model: Loaded,
    scheme: NotationScheme,
    run_config: serde_json::Value,
}

fn load_model(path: &Path, precision: Precision) -> Result<ModelInfo, CliError> {
    Ok(match precision {
        Precision::F32 => {
            let ck = load_checkpoint::<f32>(path)?;
            ModelInfo {
                model: Loaded::F32(ck.best_model()),
                scheme: ck.scheme,
                run_config: ck.run_config,
            }
        }
        Precision::F64 => {
            let ck = load_checkpoint::<f64>(path)?;
            ModelInfo {
                model: Loaded::F64(ck.best_model()),
                scheme: ck.scheme,
                run_config: ck.run_config,
            }
        }
    })
}

fn run_config<S: Serialize>(command: &'static str, global: &Global, settings: S) -> serde_json::Value {
    RunConfig {
        format_version: ARTIFACT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        global: global.clone(),
        settings,
    }
    .to_value()
}

// ---------------------------------------------------------------- ppl

#[derive(Debug, clap::Args, Serialize)]
pub struct PplArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<PathBuf>,
    /// Games to score.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    games: Option<PathBuf>,
    /// Logits removed before normalizing: auto (from the model's scheme),
    /// none, pieces (the 6 piece-type ids) or non-move (pieces, promotions).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
    /// Also write the result here as JSON.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    precision: Option<Precision>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PplSettings {
    pub checkpoint: PathBuf,
    pub games: PathBuf,
    pub mask: String,
    pub out: Option<PathBuf>,
    pub precision: Precision,
}

impl Default for PplSettings {
    fn default() -> Self {
        PplSettings {
            checkpoint: PathBuf::from("model.ckpt"),
            games: PathBuf::from("prepared/test.txt"),
            mask: "auto".into(),
            out: None,
            precision: Precision::F32,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PplReport {
    format_version: u32,
    scheme: String,
    mask: Vec<u32>,
    #[serde(flatten)]
    result: Perplexity,
    run_config: serde_json::Value,
}

pub fn run_ppl(file: &ConfigFile, global: Global, args: PplArgs) -> Result<(), CliError> {
    let s: PplSettings = file.command("ppl", PplSettings::default(), serde_json::to_value(&args).expect("flags"))?;
    let info = load_model(&global.path(&s.checkpoint), s.precision)?;
    let mut opts = PerplexityOptions::for_scheme(info.scheme);
    opts.threads = global.threads;
    opts.masked = match s.mask.as_str() {
        "auto" => opts.masked,
        "none" => Vec::new(),
        "pieces" => piece_type_tokens(),
        "non-move" => (64..74).collect(),
        other => return Err(CliError::usage(format!("unknown mask `{other}`"))),
    };
    let games = read_games(&global.path(&s.games))?;
    let result = canonical_perplexity(info.model.as_model(), &games, &opts)?;
    println!("perplexity {:.4} over {} moves", result.perplexity, result.moves);
    let report = PplReport {
        format_version: ARTIFACT_VERSION,
        scheme: info.scheme.to_string(),
        mask: opts.masked.clone(),
        result,
        run_config: run_config("ppl", &global, &s),
    };
    if let Some(out) = &s.out {
        write_json(&global.path(out), &report)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- probe

#[derive(Debug, clap::Args, Serialize)]
pub struct ProbeArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<PathBuf>,
    /// Directory holding <task>.jsonl probe files.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    probes: Option<PathBuf>,
    /// Tasks to run (end-actual, end-other, start-actual, start-other).
    /// Defaults to every task the model supports.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    tasks: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<PathBuf>,
    /// Restrict predictions to square tokens (default true).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    squares_only: Option<bool>,
    /// Label used for this model in the report tables.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    /// Monte-Carlo trials for the random-legal baseline.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_trials: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    precision: Option<Precision>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub checkpoint: PathBuf,
    pub probes: PathBuf,
    pub tasks: Vec<String>,
    pub out_dir: PathBuf,
    pub squares_only: bool,
    pub label: Option<String>,
    pub baseline_trials: usize,
    pub precision: Precision,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            checkpoint: PathBuf::from("model.ckpt"),
            probes: PathBuf::from("prepared/probes"),
            tasks: Vec::new(),
            out_dir: PathBuf::from("probe_out"),
            squares_only: true,
            label: None,
            baseline_trials: 10_000,
            precision: Precision::F32,
        }
    }
}

/// Saved per-task predictions, the input of `analyze`.
#[derive(Debug, Serialize, Deserialize)]
struct Predictions {
    format_version: u32,
    label: String,
    scheme: String,
    /// Probe file the instances came from.
    probes: PathBuf,
    model_run_config: serde_json::Value,
    run_config: serde_json::Value,
    result: TaskResult,
}

fn parse_task(s: &str) -> Result<ProbeTask, CliError> {
    let norm = s.trim().to_ascii_lowercase().replace('-', "_");
    ProbeTask::ALL
        .into_iter()
        .find(|t| t.file_stem() == norm)
        .ok_or_else(|| CliError::usage(format!("unknown task `{s}`")))
}

fn read_probe_file(path: &Path) -> Result<Vec<ProbeInstance>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_probes(BufReader::new(f)).map_err(|e| CliError::from(e).context(path.display()))
}

fn predictions_path(dir: &Path, task: ProbeTask) -> PathBuf {
    dir.join(format!("{}.predictions.json", task.file_stem()))
}

pub fn run_probe(file: &ConfigFile, global: Global, args: ProbeArgs) -> Result<(), CliError> {
    let s: ProbeSettings = file.command("probe", ProbeSettings::default(), serde_json::to_value(&args).expect("flags"))?;
    let info = load_model(&global.path(&s.checkpoint), s.precision)?;
    let probe_dir = global.path(&s.probes);
    let tasks: Vec<ProbeTask> = if s.tasks.is_empty() {
        ProbeTask::ALL
            .into_iter()
            .filter(|t| t.is_end() || info.scheme.has_piece_types())
            .filter(|t| probe_dir.join(format!("{}.jsonl", t.file_stem())).exists())
            .collect()
    } else {
        s.tasks.iter().map(|t| parse_task(t)).collect::<Result<_, _>>()?
    };
    if tasks.is_empty() {
        return Err(CliError::data(format!("no probe files found in {}", probe_dir.display())));
    }
    let label = s.label.clone().unwrap_or_else(|| info.scheme.to_string().to_uppercase());
    let out_dir = global.path(&s.out_dir);
    let rc = run_config("probe", &global, &s);
    let mut opts = ProbeOptions::new(info.scheme);
    opts.squares_only = s.squares_only;
    opts.threads = global.threads;
    let mut results = Vec::new();
    for task in tasks {
        let path = probe_dir.join(format!("{}.jsonl", task.file_stem()));
        let instances = read_probe_file(&path)?;
        let result = chessprobe::eval::run_probe(info.model.as_model(), &instances, &opts)?;
        println!(
            "{:<13} n={:<5} ExM {}  LgM {:.3}  R-Prec {:.3}",
            task.label(),
            result.n,
            result.exm_acc.map_or("  -  ".into(), |x| format!("{x:.3}")),
            result.lgm_acc,
            result.r_precision
        );
        results.push((task, path, result));
    }
    for (task, path, result) in results {
        write_json(
            &predictions_path(&out_dir, task),
            &Predictions {
                format_version: ARTIFACT_VERSION,
                label: label.clone(),
                scheme: info.scheme.to_string(),
                probes: path,
                model_run_config: info.run_config.clone(),
                run_config: rc.clone(),
                result,
            },
        )?;
    }
    let settings = AnalyzeSettings {
        runs: vec![out_dir.display().to_string()],
        out_dir: Some(out_dir.clone()),
        baseline_trials: s.baseline_trials,
    };
    analyze(&global, &settings)
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, clap::Args, Serialize)]
pub struct AnalyzeArgs {
    /// Probe output directories, optionally as label=dir. One table row each.
    #[arg(value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    runs: Vec<String>,
    /// Where the reports go; defaults to the first run directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_trials: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSettings {
    pub runs: Vec<String>,
    pub out_dir: Option<PathBuf>,
    pub baseline_trials: usize,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        AnalyzeSettings {
            runs: Vec::new(),
            out_dir: None,
            baseline_trials: 10_000,
        }
    }
}

pub fn run_analyze(file: &ConfigFile, global: Global, args: AnalyzeArgs) -> Result<(), CliError> {
    let s: AnalyzeSettings =
        file.command("analyze", AnalyzeSettings::default(), serde_json::to_value(&args).expect("flags"))?;
    analyze(&global, &s)
}

#[derive(Debug, Serialize)]
struct RunMetrics {
    label: String,
    scheme: String,
    dev_ppl: Option<f64>,
    test_ppl: Option<f64>,
    tasks: Vec<chessprobe::eval::TaskMetrics>,
}

#[derive(Debug, Serialize)]
struct AnalysisReport {
    format_version: u32,
    runs: Vec<RunMetrics>,
    run_config: serde_json::Value,
}

fn read_ppl(path: &Path) -> Result<Option<f64>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: PplReport = serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(Some(v.result.perplexity))
}

fn safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Dev perplexity against RAP probability, when the runs cover at least two
/// values of p (a UCI run counts as p = 0).
fn write_sweep(runs: &[RunMetrics], out_dir: &Path) -> Result<(), CliError> {
    let mut by_p: BTreeMap<u8, f64> = BTreeMap::new();
    for r in runs {
        let p = match r.scheme.parse::<NotationScheme>() {
            Ok(NotationScheme::Uci) => 0,
            Ok(NotationScheme::Rap(p)) => p,
            _ => continue,
        };
        if !SWEEP_VALUES.contains(&p) {
            log::warn!("{}: p = {p} is not a sweep value, left out of rap_sweep.csv", r.label);
            continue;
        }
        if let Some(ppl) = r.dev_ppl {
            by_p.entry(p).or_insert(ppl);
        }
    }
    if by_p.len() < 2 {
        return Ok(());
    }
    let ps: Vec<u8> = by_p.keys().copied().collect();
    let rows = rap_sweep(&ps, |scheme| match scheme {
        NotationScheme::Rap(p) => Ok(by_p[&p]),
        _ => unreachable!(),
    })?;
    write_text(&out_dir.join("rap_sweep.csv"), &sweep_csv(&rows))
}

fn analyze(global: &Global, s: &AnalyzeSettings) -> Result<(), CliError> {
    if s.runs.is_empty() {
        return Err(CliError::usage("analyze needs at least one probe output directory"));
    }
    let mut runs = Vec::new();
    let mut breakdowns: BTreeMap<ProbeTask, Vec<(String, ErrorBreakdown)>> = BTreeMap::new();
    let mut probe_cache: BTreeMap<PathBuf, Vec<ProbeInstance>> = BTreeMap::new();
    for spec in &s.runs {
        let (label, dir) = match spec.split_once('=') {
            Some((l, d)) => (Some(l.to_string()), global.path(Path::new(d))),
            None => (None, global.path(Path::new(spec))),
        };
        let mut tasks = Vec::new();
        let mut run_label = label.clone();
        let mut scheme = String::new();
        for task in ProbeTask::ALL {
            let p = predictions_path(&dir, task);
            if !p.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            let pred: Predictions =
                serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            if pred.result.task != task {
                return Err(CliError::data(format!("{} holds {} results", p.display(), pred.result.task)));
            }
            let run_label = run_label.get_or_insert_with(|| pred.label.clone()).clone();
            scheme = pred.scheme.clone();
            if !probe_cache.contains_key(&pred.probes) {
                let inst = read_probe_file(&pred.probes)?;
                probe_cache.insert(pred.probes.clone(), inst);
            }
            let instances = &probe_cache[&pred.probes];
            if instances.len() != pred.result.instances.len() {
                return Err(CliError::data(format!(
                    "{}: {} predictions for {} probe instances",
                    p.display(),
                    pred.result.instances.len(),
                    instances.len()
                )));
            }
            // recompute the aggregates from the per-instance scores
            let result = TaskResult::from_instances(task, pred.result.instances);
            let baseline = random_legal_baseline(instances, global.seed, s.baseline_trials);
            let errors = if task.is_end() {
                Some(error_breakdown(instances, &result)?)
            } else {
                None
            };
            tasks.push(metrics_json(&result, baseline.as_ref().filter(|_| task.is_actual()), errors.as_ref()));
            if let Some(b) = errors {
                breakdowns.entry(task).or_default().push((run_label, b));
            }
        }
        if tasks.is_empty() {
            return Err(CliError::data(format!("no predictions in {}", dir.display())));
        }
        runs.push(RunMetrics {
            label: run_label.unwrap_or_default(),
            scheme,
            dev_ppl: read_ppl(&dir.join("ppl_dev.json"))?,
            test_ppl: read_ppl(&dir.join("ppl_test.json"))?,
            tasks,
        });
    }
    let out_dir = match &s.out_dir {
        Some(d) => global.path(d),
        None => {
            let first = &s.runs[0];
            global.path(Path::new(first.split_once('=').map_or(first.as_str(), |x| x.1)))
        }
    };
    let rows: Vec<ModelRow> = runs
        .iter()
        .map(|r| ModelRow {
            name: r.label.clone(),
            dev_ppl: r.dev_ppl,
            test_ppl: r.test_ppl,
            tasks: r.tasks.clone(),
        })
        .collect();
    let table = results_table(&rows);
    write_text(&out_dir.join("results.txt"), &table)?;
    print!("{table}");
    for (task, rows) in &breakdowns {
        let stem = task.file_stem();
        let errors = errors_table(rows);
        write_text(&out_dir.join(format!("errors_{stem}.txt")), &errors)?;
        write_text(&out_dir.join(format!("pseudo_legal_{stem}.txt")), &pseudo_legal_table(rows))?;
        write_text(&out_dir.join(format!("obstruction_{stem}.txt")), &obstruction_table(rows))?;
        for (label, b) in rows {
            write_text(&out_dir.join(format!("path_length_{}_{stem}.csv", safe(label))), &path_length_csv(b))?;
        }
        println!("\n{}\n{errors}", task.label());
    }
    write_sweep(&runs, &out_dir)?;
    let mut settings = s.clone();
    settings.out_dir = Some(out_dir.clone());
    write_json(
        &out_dir.join("metrics.json"),
        &AnalysisReport {
            format_version: ARTIFACT_VERSION,
            runs,
            run_config: run_config("analyze", global, settings),
        },
    )?;
    Ok(())
}
