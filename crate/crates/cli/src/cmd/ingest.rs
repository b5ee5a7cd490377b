use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use chessprobe::corpus::{FilterConfig, GameFilter, LengthUnit};
use chessprobe::notation::{PgnItem, PgnReader};
use log::info;
use serde::{Deserialize, Serialize};

use super::write_games;
use crate::config::{sidecar, write_json, ConfigFile, Global, RunConfig, ARTIFACT_VERSION};
use crate::error::CliError;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// PGN files to read, in order.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    inputs: Vec<PathBuf>,
    /// Output dataset (one game per line, UCI moves).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Shortest game kept.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_length: Option<usize>,
    /// Longest game kept.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_length: Option<usize>,
    /// Unit for the length bounds: plies or full-moves.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    unit: Option<LengthUnit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub min_length: usize,
    pub max_length: usize,
    pub unit: LengthUnit,
}

impl Default for Settings {
    fn default() -> Self {
        let f = FilterConfig::default();
        Settings {
            inputs: Vec::new(),
            out: PathBuf::from("games.txt"),
            min_length: f.min_len,
            max_length: f.max_len,
            unit: f.unit,
        }
    }
}

#[derive(Debug, Default, Serialize)]
struct Report {
    format_version: u32,
    complete: bool,
    parsed: usize,
    unparseable: usize,
    dup: usize,
    too_short: usize,
    too_long: usize,
    kept: usize,
    /// Unparseable games counted by error message.
    unparseable_reasons: BTreeMap<String, usize>,
    errors: Vec<String>,
    run_config: serde_json::Value,
}

pub fn run(file: &ConfigFile, global: Global, args: Args) -> Result<(), CliError> {
    let s: Settings = file.command("ingest", Settings::default(), serde_json::to_value(&args).expect("flags"))?;
    if s.inputs.is_empty() {
        return Err(CliError::usage("ingest needs at least one PGN file"));
    }
    let out = global.path(&s.out);
    let rc = RunConfig {
        format_version: ARTIFACT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "ingest",
        global: global.clone(),
        settings: s.clone(),
    };
    let mut filter = GameFilter::new(FilterConfig {
        min_len: s.min_length,
        max_len: s.max_length,
        unit: s.unit,
    });
    let mut report = Report {
        format_version: ARTIFACT_VERSION,
        run_config: rc.to_value(),
        ..Report::default()
    };
    let mut kept = Vec::new();
    let mut first_error: Option<CliError> = None;
    for input in &s.inputs {
        let path = global.path(input);
        let f = match File::open(&path) {
            Ok(f) => f,
            Err(e) => {
                let err = CliError::io(&path, e);
                report.errors.push(err.to_string());
                first_error.get_or_insert(err);
                continue;
            }
        };
        let name = input.display().to_string();
        for item in PgnReader::new(BufReader::new(f), name) {
            match item {
                Ok(PgnItem::Game(g)) => {
                    report.parsed += 1;
                    if let Some(g) = filter.accept(g) {
                        kept.push(g);
                    }
                }
                Ok(PgnItem::Dropped { error, .. }) => {
                    report.unparseable += 1;
                    *report.unparseable_reasons.entry(error.to_string()).or_default() += 1;
                }
                Err(e) => {
                    let err = CliError::from(e);
                    report.errors.push(err.to_string());
                    first_error.get_or_insert(err);
                    break;
                }
            }
        }
    }
    let st = &filter.stats;
    report.dup = st.duplicates;
    report.too_short = st.too_short;
    report.too_long = st.too_long;
    report.kept = st.kept;
    report.complete = first_error.is_none();
    let report_path = sidecar(&out, ".report.json");
    write_json(&report_path, &report)?;
    if let Some(e) = first_error {
        return Err(e.context("ingest stopped, partial report written"));
    }
    write_games(&out, &kept)?;
    info!(
        "ingest: {} parsed, {} kept, {} duplicates, {} too short, {} too long, {} unparseable",
        report.parsed, report.kept, report.dup, report.too_short, report.too_long, report.unparseable
    );
    println!("{} games written to {}", kept.len(), out.display());
    Ok(())
}
