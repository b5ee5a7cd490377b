use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use chessprobe::corpus::{
    build_probe_sets, make_splits, prompt_piece_histogram, write_probes, LengthUnit, ProbeConfig, ProbeTask,
    SplitSpec,
};
use serde::{Deserialize, Serialize};

use super::{read_games, write_games};
use crate::config::{write_json, ConfigFile, Global, RunConfig, ARTIFACT_VERSION};
use crate::error::CliError;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Filtered dataset to split.
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<PathBuf>,
    /// Directory receiving the split and probe files.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<PathBuf>,
    /// Nested training tier sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    train_sizes: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dev_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test_size: Option<usize>,
    /// Held-out games the probe prefixes are drawn from.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    probe_pool_size: Option<usize>,
    /// Instances per probe task.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    probe_n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_prefix: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_prefix: Option<usize>,
    /// Unit of the prefix bounds: plies or full-moves.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    prefix_unit: Option<LengthUnit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub train_sizes: Vec<usize>,
    pub dev_size: usize,
    pub test_size: usize,
    pub probe_pool_size: usize,
    pub probe_n: usize,
    pub min_prefix: usize,
    pub max_prefix: usize,
    pub prefix_unit: LengthUnit,
}

impl Default for Settings {
    fn default() -> Self {
        let p = ProbeConfig::default();
        Settings {
            dataset: PathBuf::from("games.txt"),
            out_dir: PathBuf::from("prepared"),
            train_sizes: vec![10_000],
            dev_size: 500,
            test_size: 500,
            probe_pool_size: 2500,
            probe_n: p.n,
            min_prefix: p.min_prefix,
            max_prefix: p.max_prefix,
            prefix_unit: p.unit,
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest {
    format_version: u32,
    files: BTreeMap<String, usize>,
    /// Prompted piece types per probe task.
    prompt_pieces: BTreeMap<String, BTreeMap<String, usize>>,
    run_config: serde_json::Value,
}

pub fn train_file_name(size: usize) -> String {
    format!("train_{size}.txt")
}

pub fn run(file: &ConfigFile, global: Global, args: Args) -> Result<(), CliError> {
    let s: Settings = file.command("prepare", Settings::default(), serde_json::to_value(&args).expect("flags"))?;
    if s.train_sizes.is_empty() {
        return Err(CliError::usage("--train-sizes needs at least one size"));
    }
    if s.min_prefix > s.max_prefix {
        return Err(CliError::usage("--min-prefix exceeds --max-prefix"));
    }
    let games = read_games(&global.path(&s.dataset))?;
    let splits = make_splits(
        &games,
        &SplitSpec {
            train_sizes: s.train_sizes.clone(),
            dev_size: s.dev_size,
            test_size: s.test_size,
            probe_pool_size: s.probe_pool_size,
            seed: global.seed,
        },
    )?;
    let largest = splits.train.iter().max_by_key(|t| t.len()).expect("one tier");
    let sets = build_probe_sets(
        &splits.probe_pool,
        largest,
        &ProbeConfig {
            n: s.probe_n,
            min_prefix: s.min_prefix,
            max_prefix: s.max_prefix,
            unit: s.prefix_unit,
            seed: global.seed,
        },
    )?;

    let dir = global.path(&s.out_dir);
    let mut files = BTreeMap::new();
    for (size, tier) in s.train_sizes.iter().zip(&splits.train) {
        let name = train_file_name(*size);
        write_games(&dir.join(&name), tier)?;
        files.insert(name, tier.len());
    }
    for (name, part) in [("dev.txt", &splits.dev), ("test.txt", &splits.test), ("probe_pool.txt", &splits.probe_pool)] {
        write_games(&dir.join(name), part)?;
        files.insert(name.to_string(), part.len());
    }
    let probe_dir = dir.join("probes");
    std::fs::create_dir_all(&probe_dir).map_err(|e| CliError::io(&probe_dir, e))?;
    let mut prompt_pieces = BTreeMap::new();
    for task in ProbeTask::ALL {
        let name = format!("{}.jsonl", task.file_stem());
        let path = probe_dir.join(&name);
        let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_probes(BufWriter::new(f), sets.get(task)).map_err(|e| CliError::io(&path, e))?;
        files.insert(format!("probes/{name}"), sets.get(task).len());
        let hist = prompt_piece_histogram(sets.get(task))
            .into_iter()
            .map(|(k, n)| (k.name().to_string(), n))
            .collect();
        prompt_pieces.insert(task.file_stem().to_string(), hist);
    }
    let rc = RunConfig {
        format_version: ARTIFACT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "prepare",
        global,
        settings: s,
    };
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            format_version: ARTIFACT_VERSION,
            files,
            prompt_pieces,
            run_config: rc.to_value(),
        },
    )?;
    println!("splits and probe sets written to {}", dir.display());
    Ok(())
}
