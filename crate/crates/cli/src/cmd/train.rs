use std::io::Write;
use std::ops::ControlFlow;
use std::path::PathBuf;

use chessprobe::lm::{self, Checkpoint, ModelConfig, Scalar, TrainConfig, TrainState};
use chessprobe::notation::{NotationScheme, Vocabulary};
use log::info;
use serde::{Deserialize, Serialize};

use super::{load_checkpoint, read_games, Precision};
use crate::config::{sidecar, ConfigFile, Global, RunConfig, ARTIFACT_VERSION};
use crate::error::CliError;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Training games.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<PathBuf>,
    /// Dev games for early stopping.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dev: Option<PathBuf>,
    /// Notation: uci, rap<p> (e.g. rap25) or ap.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scheme: Option<String>,
    /// Checkpoint to write; rewritten after every epoch.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Continue the training run stored in this checkpoint. The model and
    /// optimizer settings stored with it are used; flags for them are ignored.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    resume: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    precision: Option<Precision>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    layers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    heads: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    d_model: Option<usize>,
    /// Feed-forward width; defaults to 4 x d_model.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    d_ff: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<usize>,
    /// Local attention window; full causal attention when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dropout: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    weight_decay: Option<f64>,
    /// Share of all steps spent warming up.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    warmup_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    /// Epochs without dev improvement before stopping.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    patience: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grad_clip: Option<f64>,
    /// End this invocation after this many epochs in total. The schedule
    /// still spans --epochs, so a later --resume picks up where it left off.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stop_after: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub scheme: String,
    pub out: PathBuf,
    pub resume: Option<PathBuf>,
    pub precision: Precision,
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: Option<usize>,
    pub context: usize,
    pub window: Option<usize>,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub grad_clip: Option<f64>,
    pub stop_after: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        Settings {
            train: PathBuf::from("prepared/train_10000.txt"),
            dev: PathBuf::from("prepared/dev.txt"),
            scheme: "uci".into(),
            out: PathBuf::from("model.ckpt"),
            resume: None,
            precision: Precision::F32,
            layers: m.n_layers,
            heads: m.n_heads,
            d_model: m.d_model,
            d_ff: None,
            context: m.context_len,
            window: m.attention_window,
            dropout: m.dropout_rate,
            lr: t.learning_rate,
            weight_decay: t.weight_decay,
            warmup_fraction: t.warmup_fraction,
            batch_size: t.batch_size,
            epochs: t.max_epochs,
            patience: t.patience,
            grad_clip: t.grad_clip,
            stop_after: None,
        }
    }
}

impl Settings {
    fn model_config(&self) -> ModelConfig {
        let mut m = ModelConfig::new(self.layers, self.heads, self.d_model);
        if let Some(ff) = self.d_ff {
            m.d_ff = ff;
        }
        m.context_len = self.context;
        m.attention_window = self.window;
        m.dropout_rate = self.dropout;
        m
    }

    fn train_config(&self, global: &Global) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            warmup_fraction: self.warmup_fraction,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: self.patience,
            seed: global.seed,
            grad_clip: self.grad_clip,
            threads: global.threads,
            ..TrainConfig::default()
        }
    }
}

pub fn parse_scheme(s: &str) -> Result<NotationScheme, CliError> {
    s.parse()
        .map_err(|_| CliError::usage(format!("unknown scheme `{s}` (expected uci, ap or rap<p> with p in 0..=100)")))
}

pub fn run(file: &ConfigFile, global: Global, args: Args) -> Result<(), CliError> {
    let s: Settings = file.command("train", Settings::default(), serde_json::to_value(&args).expect("flags"))?;
    match s.precision {
        Precision::F32 => train_as::<f32>(global, s),
        Precision::F64 => train_as::<f64>(global, s),
    }
}

fn train_as<T: Scalar>(global: Global, s: Settings) -> Result<(), CliError> {
    let mut scheme = parse_scheme(&s.scheme)?;
    let mut tcfg = s.train_config(&global);
    let mut model_cfg = s.model_config();
    model_cfg.validate()?;
    tcfg.validate()?;
    let resume = match &s.resume {
        Some(p) => {
            let ck = load_checkpoint::<T>(&global.path(p))?;
            let Some((stored, state)) = ck.train else {
                return Err(CliError::data(format!("{} holds no training state", p.display())));
            };
            tcfg = TrainConfig {
                threads: global.threads,
                ..stored
            };
            if ck.scheme != scheme {
                info!("resuming a {} run", ck.scheme);
                scheme = ck.scheme;
            }
            model_cfg = state.model.config.clone();
            Some(state)
        }
        None => None,
    };
    let train_games = read_games(&global.path(&s.train))?;
    let dev_games = read_games(&global.path(&s.dev))?;
    let out = global.path(&s.out);
    let log_path = sidecar(&out, ".metrics.jsonl");
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    let rc = RunConfig {
        format_version: ARTIFACT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "train",
        global: global.clone(),
        settings: s.clone(),
    }
    .to_value();
    let run_meta = serde_json::json!({
        "run_config": rc,
        "model_config": model_cfg,
        "train_config": tcfg,
        "scheme": scheme.to_string(),
        "train_games": train_games.len(),
        "dev_games": dev_games.len(),
    });
    // the log is rebuilt from the stored history so it always matches the checkpoint
    let mut log_text = String::new();
    if let Some(st) = &resume {
        for m in &st.history {
            log_text.push_str(&serde_json::to_string(m).expect("metrics"));
            log_text.push('\n');
        }
    }
    std::fs::write(&log_path, &log_text).map_err(|e| CliError::io(&log_path, e))?;
    let vocab = Vocabulary::new();
    let save = |state: &TrainState<T>| -> Result<(), lm::LmError> {
        let mut ck = Checkpoint::new(state.model.clone(), scheme, &vocab);
        ck.run_config = run_meta.clone();
        ck.train = Some((tcfg.clone(), state.clone()));
        ck.save(&out)
    };
    let outcome = lm::train::<T, _>(&model_cfg, &tcfg, &train_games, &dev_games, scheme, resume, |m, state, improved| {
        let mut f = std::fs::OpenOptions::new().append(true).open(&log_path)?;
        writeln!(f, "{}", serde_json::to_string(m).expect("metrics"))?;
        save(state)?;
        info!("epoch {} saved{}", m.epoch, if improved { " (new best)" } else { "" });
        let pause = s.stop_after.is_some_and(|n| m.epoch >= n);
        println!(
            "epoch {:>3}  train {:.4}  dev {:.4}  lr {:.2e}{}",
            m.epoch,
            m.train_loss,
            m.dev_loss,
            m.lr,
            if improved { "  *" } else { "" }
        );
        Ok(if pause { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
    })?;
    save(&outcome.state)?;
    println!(
        "best dev loss {:.4} at epoch {}{}; checkpoint {}",
        outcome.state.best_dev.unwrap_or(f64::NAN),
        outcome.best_epoch,
        if outcome.stopped_early { " (stopped early)" } else { "" },
        out.display()
    );
    Ok(())
}
