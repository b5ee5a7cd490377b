pub mod eval;
pub mod ingest;
pub mod play;
pub mod prepare;
pub mod synth;
pub mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use chessprobe::lm::{Checkpoint, Scalar};
use chessprobe::notation::{read_dataset, write_dataset, GameRecord, Vocabulary};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Floating-point type used for weights and arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

pub fn read_games(path: &Path) -> Result<Vec<GameRecord>, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    read_dataset(BufReader::new(f), &name).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn write_games(path: &Path, games: &[GameRecord]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_dataset(BufWriter::new(f), games).map_err(|e| CliError::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CliError> {
    Checkpoint::load(path, Some(&Vocabulary::new())).map_err(|e| CliError::from(e).context(path.display()))
}
