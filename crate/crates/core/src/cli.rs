//! The `nmt` command line: `train`, `translate`, `evaluate`, `ablate`.
//!
//! Configuration is layered: built-in defaults, then `--preset`, then a
//! `--config` file of `key = value` lines, then individual flags. The
//! effective configuration is echoed to stderr before any work starts.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or
//! checkpoint error, 3 non-finite training loss.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Preset, TrainConfig};
use crate::corpus::{experiment_split, load_tsv, SentencePair};
use crate::error::{NmtError, Result};
use crate::evaluation::{ablation_sweep, csv_header, csv_row, evaluate_pairs, median, translate_corpus};
use crate::training::{fit, load_checkpoint, save_checkpoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "nmt", version, about = "Convolutional-recurrent neural machine translation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write the best-validation checkpoint.
    Train(TrainArgs),
    /// Translate sentences, one per line, from a file or stdin.
    Translate(TranslateArgs),
    /// Score a checkpoint on a parallel TSV file.
    Evaluate(EvaluateArgs),
    /// Train over conv depths and position-embedding settings.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Parallel TSV file: target<TAB>source[<TAB>attribution].
    #[arg(long)]
    pub data: PathBuf,
    /// Read the first column as the source language.
    #[arg(long)]
    pub swap_columns: bool,
}

#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// Base hyperparameters: `tiny` (desk scale) or `paper` (d=512, batch 128).
    #[arg(long)]
    pub preset: Option<Preset>,
    /// File of `key = value` lines; `#` starts a comment.
    #[arg(long = "config")]
    pub config_file: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub conv_layers: Option<usize>,
    #[arg(long)]
    pub kernel_width: Option<usize>,
    /// Freeze the position table at zero.
    #[arg(long)]
    pub no_position_embedding: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub grad_clip_norm: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub max_sentence_len: Option<usize>,
    /// Any configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint directory to create.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Source sentences, one per line. Defaults to stdin.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Overrides the checkpoint's max_decode_len.
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Append a CSV row (config, p1..p4, BP, BLEU) to this file.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Conv depths to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub depths: Vec<usize>,
    /// Position embedding settings to sweep.
    #[arg(long = "position-embedding", value_delimiter = ',', default_value = "on,off", value_parser = parse_on_off)]
    pub position_embedding: Vec<bool>,
    /// Model seeds; every seed shares the data split drawn from --seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Use a random subset of this many pairs.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Write the CSV table here.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn parse_on_off(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(format!("expected on or off, got {other:?}")),
    }
}

impl std::str::FromStr for ConfigFile {
    type Err = NmtError;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| NmtError::Config(format!("config line {}: expected key = value", n + 1)))?;
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(ConfigFile(entries))
    }
}

/// Parsed `key = value` configuration file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile(pub Vec<(String, String)>);

impl ConfigArgs {
    /// Resolves defaults, preset, file and flags into one configuration.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut config = TrainConfig::preset(self.preset.unwrap_or(Preset::Paper));
        if let Some(path) = &self.config_file {
            let text = fs::read_to_string(path).map_err(|e| NmtError::io(path, e))?;
            let file: ConfigFile = text.parse()?;
            for (k, v) in &file.0 {
                config.set(k, v)?;
            }
        }
        macro_rules! flag {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    config.$field = v;
                }
            };
        }
        flag!(batch_size);
        flag!(conv_layers);
        flag!(kernel_width);
        flag!(epochs);
        flag!(patience);
        flag!(seed);
        flag!(grad_clip_norm);
        flag!(val_frac);
        flag!(d_model);
        flag!(max_sentence_len);
        if let Some(lr) = self.lr {
            config.adadelta_lr = lr;
        }
        if self.no_position_embedding {
            config.position_embedding = false;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| NmtError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            config.set(k.trim(), v)?;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &NmtError) -> i32 {
    match err {
        NmtError::Config(_) => EXIT_USAGE,
        NmtError::NonFiniteLoss { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the exit code; errors are reported on `stderr`.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a, stderr),
        Command::Translate(a) => cmd_translate(&a, stdin, stdout, stderr),
        Command::Evaluate(a) => cmd_evaluate(&a, stdout, stderr),
        Command::Ablate(a) => cmd_ablate(&a, stdout, stderr),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn echo_config(stderr: &mut dyn Write, config: &TrainConfig) {
    let _ = writeln!(stderr, "# effective configuration (seed {})", config.seed);
    let _ = write!(stderr, "{config}");
}

fn load_pairs(data: &DataArgs, stderr: &mut dyn Write) -> Result<Vec<SentencePair>> {
    let corpus = load_tsv(&data.data, data.swap_columns)?;
    let _ = writeln!(
        stderr,
        "loaded {} pairs from {} ({} malformed lines skipped)",
        corpus.pairs.len(),
        data.data.display(),
        corpus.skipped
    );
    Ok(corpus.pairs)
}

pub fn cmd_train(args: &TrainArgs, stderr: &mut dyn Write) -> Result<()> {
    let config = args.config.resolve()?;
    echo_config(stderr, &config);
    let pairs = load_pairs(&args.data, stderr)?;
    let (train, val, test) = experiment_split(&pairs, config.val_frac, config.seed)?;
    let _ = writeln!(stderr, "split: {} train / {} validation / {} test", train.len(), val.len(), test.len());
    let outcome = fit(&train, &val, &config, |r| {
        let _ = writeln!(
            stderr,
            "epoch {:>3}  train_loss {:.4}  val_loss {:.4}{}",
            r.epoch,
            r.train_loss,
            r.val_loss,
            if r.improved { "  *" } else { "" }
        );
    })?;
    save_checkpoint(&outcome.best, &args.out)?;
    let _ = writeln!(
        stderr,
        "saved epoch {} (val_loss {:.4}) to {}",
        outcome.best.epoch,
        outcome.best.best_val_loss,
        args.out.display()
    );
    if !test.is_empty() {
        let report = evaluate_pairs(&outcome.best, &test)?;
        let _ = writeln!(stderr, "test: {report}");
    }
    Ok(())
}

pub fn cmd_translate(
    args: &TranslateArgs,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let trained = load_checkpoint(&args.checkpoint)?;
    echo_config(stderr, &trained.config);
    let text = match &args.input {
        Some(path) => fs::read_to_string(path).map_err(|e| NmtError::io(path, e))?,
        None => {
            let mut s = String::new();
            stdin
                .read_to_string(&mut s)
                .map_err(|e| NmtError::io(Path::new("<stdin>"), e))?;
            s
        }
    };
    let lines: Vec<&str> = text.lines().collect();
    let max_len = args.max_len.unwrap_or(trained.config.max_decode_len);
    let out = translate_corpus(&trained, &lines, max_len)?;
    for tokens in out {
        writeln!(stdout, "{}", tokens.join(" ")).map_err(|e| NmtError::io(Path::new("<stdout>"), e))?;
    }
    Ok(())
}

fn append_csv(path: &Path, rows: &[String]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| NmtError::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(&csv_header());
        text.push('\n');
    }
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    file.write_all(text.as_bytes()).map_err(|e| NmtError::io(path, e))
}

pub fn cmd_evaluate(args: &EvaluateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let trained = load_checkpoint(&args.checkpoint)?;
    echo_config(stderr, &trained.config);
    let pairs = load_pairs(&args.data, stderr)?;
    let report = evaluate_pairs(&trained, &pairs)?;
    writeln!(stdout, "{report}").map_err(|e| NmtError::io(Path::new("<stdout>"), e))?;
    if let Some(path) = &args.results {
        append_csv(path, &[csv_row(&trained.config, trained.epoch, trained.best_val_loss, &report)])?;
    }
    Ok(())
}

pub fn cmd_ablate(args: &AblateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let base = args.config.resolve()?;
    echo_config(stderr, &base);
    if args.depths.is_empty() || args.position_embedding.is_empty() {
        return Err(NmtError::Config("nothing to sweep".into()));
    }
    for &d in &args.depths {
        let mut probe = base.clone();
        probe.conv_layers = d;
        probe.validate()?;
    }
    let mut pairs = load_pairs(&args.data, stderr)?;
    if let Some(n) = args.subset {
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(base.seed));
        pairs.truncate(n);
    }
    let (train, val, test) = experiment_split(&pairs, base.val_frac, base.seed)?;
    let _ = writeln!(stderr, "split: {} train / {} validation / {} test", train.len(), val.len(), test.len());
    let seeds = if args.seeds.is_empty() { vec![base.seed] } else { args.seeds.clone() };
    let mut table = crate::evaluation::AblationTable::default();
    for seed in seeds {
        let mut config = base.clone();
        config.seed = seed;
        let part = ablation_sweep(&train, &val, &test, &args.depths, &args.position_embedding, &config, |row| {
            let _ = writeln!(
                stderr,
                "depth {} pos {} seed {}: val_loss {:.4}, test BLEU {:.2}",
                row.config.conv_layers,
                if row.config.position_embedding { "on" } else { "off" },
                row.config.seed,
                row.val_loss,
                row.test.bleu
            );
        })?;
        table.rows.extend(part.rows);
    }
    let io_err = |e| NmtError::io(Path::new("<stdout>"), e);
    write!(stdout, "{table}").map_err(io_err)?;
    for &d in &args.depths {
        for &pos in &args.position_embedding {
            let bleus: Vec<f64> = table.find(d, pos).iter().map(|r| r.test.bleu).collect();
            if let Some(m) = median(&bleus) {
                writeln!(
                    stdout,
                    "median BLEU depth {d} pos {}: {m:.2} over {} seeds",
                    if pos { "on" } else { "off" },
                    bleus.len()
                )
                .map_err(io_err)?;
            }
        }
    }
    if let Some(path) = &args.results {
        fs::write(path, table.to_csv()).map_err(|e| NmtError::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let f: ConfigFile = "# comment\nbatch_size = 8  # trailing\n\nseed=3\n".parse().unwrap();
        assert_eq!(
            f.0,
            vec![("batch_size".into(), "8".into()), ("seed".into(), "3".into())]
        );
        assert!("no equals sign".parse::<ConfigFile>().is_err());
    }

    #[test]
    fn flags_override_preset() {
        let args = ConfigArgs {
            preset: Some(Preset::Tiny),
            batch_size: Some(7),
            no_position_embedding: true,
            overrides: vec!["d_model=16".into()],
            ..Default::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.batch_size, 7);
        assert_eq!(c.d_model, 16);
        assert!(!c.position_embedding);
        assert_eq!(c.enc_hidden, TrainConfig::preset(Preset::Tiny).enc_hidden);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&NmtError::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&NmtError::NonFiniteLoss { batch: 0, loss: f64::NAN }), EXIT_NUMERIC);
        assert_eq!(exit_code(&NmtError::Format("x".into())), EXIT_DATA);
    }
}
