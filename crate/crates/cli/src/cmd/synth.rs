use std::path::PathBuf;

use chessprobe::corpus::{synth_game, FilterConfig, FilterStats, GameFilter, LengthUnit};
use serde::{Deserialize, Serialize};

use super::write_games;
use crate::config::{sidecar, write_json, ConfigFile, Global, RunConfig, ARTIFACT_VERSION};
use crate::error::CliError;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Number of games to keep after filtering.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    /// Games stop after this many plies if not over sooner.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_plies: Option<usize>,
    /// Shortest game kept.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_length: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub count: usize,
    pub max_plies: usize,
    pub min_length: usize,
    pub out: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            count: 12_000,
            max_plies: 150,
            min_length: FilterConfig::default().min_len,
            out: PathBuf::from("synth.txt"),
        }
    }
}

#[derive(Debug, Serialize)]
struct Meta {
    format_version: u32,
    generated: usize,
    filter: FilterStats,
    run_config: serde_json::Value,
}

pub fn run(file: &ConfigFile, global: Global, args: Args) -> Result<(), CliError> {
    let s: Settings = file.command("synth", Settings::default(), serde_json::to_value(&args).expect("flags"))?;
    if s.min_length > s.max_plies {
        return Err(CliError::usage("--min-length exceeds --max-plies"));
    }
    let out = global.path(&s.out);
    let mut filter = GameFilter::new(FilterConfig {
        min_len: s.min_length,
        max_len: s.max_plies,
        unit: LengthUnit::Plies,
    });
    let limit = s.count.saturating_mul(10).max(100);
    let mut games = Vec::with_capacity(s.count);
    let mut i = 0;
    while games.len() < s.count {
        if i == limit {
            return Err(CliError::data(format!(
                "only {} of {} games survived filtering after {limit} attempts",
                games.len(),
                s.count
            )));
        }
        if let Some(g) = filter.accept(synth_game(s.max_plies, global.seed, i)) {
            games.push(g);
        }
        i += 1;
    }
    write_games(&out, &games)?;
    let rc = RunConfig {
        format_version: ARTIFACT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "synth",
        global,
        settings: s,
    };
    write_json(
        &sidecar(&out, ".meta.json"),
        &Meta {
            format_version: ARTIFACT_VERSION,
            generated: i,
            filter: filter.stats,
            run_config: rc.to_value(),
        },
    )?;
    println!("{} games written to {}", games.len(), out.display());
    Ok(())
}
