//! Training and architecture configuration.
//!
//! The configuration is flat so it can round-trip through `key = value`
//! config files, command-line flags and the checkpoint manifest alike.

use std::fmt;
use std::str::FromStr;

use crate::error::{NmtError, Result};

pub const MAX_CONV_LAYERS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Small hidden sizes and short sentences; trains on a laptop CPU.
    Tiny,
    /// d = 512, batch 128, three convolutional layers.
    Paper,
}

impl FromStr for Preset {
    type Err = NmtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "paper" => Ok(Preset::Paper),
            other => Err(NmtError::Config(format!(
                "unknown preset {other:?} (expected tiny or paper)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Tiny => "tiny",
            Preset::Paper => "paper",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adadelta_lr: f64,
    pub adadelta_eps: f64,
    pub adadelta_rho: f64,
    pub conv_layers: usize,
    pub kernel_width: usize,
    pub position_embedding: bool,
    /// Upper bound on training epochs; early stopping may end sooner.
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub val_frac: f64,
    pub d_model: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub attn_dim: usize,
    pub tgt_emb_dim: usize,
    /// Rows in the learned position table.
    pub max_positions: usize,
    /// Training pairs with a longer source or target are dropped.
    pub max_sentence_len: usize,
    pub max_vocab: usize,
    pub min_freq: usize,
    pub max_decode_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Paper => Self {
                batch_size: 128,
                adadelta_lr: 0.1,
                adadelta_eps: 1e-6,
                adadelta_rho: 0.95,
                conv_layers: 3,
                kernel_width: 3,
                position_embedding: true,
                epochs: 30,
                patience: 5,
                grad_clip_norm: 5.0,
                seed: 1,
                val_frac: 0.05,
                d_model: 512,
                enc_hidden: 256,
                dec_hidden: 512,
                attn_dim: 512,
                tgt_emb_dim: 512,
                max_positions: 100,
                max_sentence_len: 50,
                max_vocab: 20_000,
                min_freq: 2,
                max_decode_len: 50,
            },
            Preset::Tiny => Self {
                batch_size: 2,
                adadelta_lr: 0.1,
                adadelta_eps: 1e-6,
                adadelta_rho: 0.95,
                conv_layers: 3,
                kernel_width: 3,
                position_embedding: true,
                epochs: 300,
                patience: 5,
                grad_clip_norm: 5.0,
                seed: 1,
                val_frac: 0.05,
                d_model: 128,
                enc_hidden: 64,
                dec_hidden: 128,
                attn_dim: 128,
                tgt_emb_dim: 128,
                max_positions: 32,
                max_sentence_len: 24,
                max_vocab: 20_000,
                min_freq: 1,
                max_decode_len: 30,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("d_model", self.d_model),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("attn_dim", self.attn_dim),
            ("tgt_emb_dim", self.tgt_emb_dim),
            ("max_positions", self.max_positions),
            ("max_sentence_len", self.max_sentence_len),
            ("max_decode_len", self.max_decode_len),
            ("min_freq", self.min_freq),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(NmtError::Config(format!("{name} must be positive")));
        }
        if !(1..=MAX_CONV_LAYERS).contains(&self.conv_layers) {
            return Err(NmtError::Config(format!(
                "conv_layers must be between 1 and {MAX_CONV_LAYERS}, got {}",
                self.conv_layers
            )));
        }
        if self.kernel_width % 2 == 0 {
            return Err(NmtError::Config(format!(
                "kernel_width must be odd, got {}",
                self.kernel_width
            )));
        }
        let pos_real = [
            ("adadelta_lr", self.adadelta_lr),
            ("adadelta_eps", self.adadelta_eps),
            ("grad_clip_norm", self.grad_clip_norm),
        ];
        if let Some((name, v)) = pos_real.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(NmtError::Config(format!("{name} must be positive, got {v}")));
        }
        if !(self.adadelta_rho > 0.0 && self.adadelta_rho < 1.0) {
            return Err(NmtError::Config(format!(
                "adadelta_rho must be in (0, 1), got {}",
                self.adadelta_rho
            )));
        }
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return Err(NmtError::Config(format!(
                "val_frac must be in (0, 1), got {}",
                self.val_frac
            )));
        }
        if self.max_vocab < 5 {
            return Err(NmtError::Config("max_vocab must be at least 5".into()));
        }
        if self.max_sentence_len > self.max_positions {
            return Err(NmtError::Config(format!(
                "max_sentence_len ({}) cannot exceed max_positions ({})",
                self.max_sentence_len, self.max_positions
            )));
        }
        Ok(())
    }

    /// Every field as `(key, value)`, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("batch_size", self.batch_size.to_string()),
            ("adadelta_lr", format!("{:?}", self.adadelta_lr)),
            ("adadelta_eps", format!("{:?}", self.adadelta_eps)),
            ("adadelta_rho", format!("{:?}", self.adadelta_rho)),
            ("conv_layers", self.conv_layers.to_string()),
            ("kernel_width", self.kernel_width.to_string()),
            ("position_embedding", self.position_embedding.to_string()),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("grad_clip_norm", format!("{:?}", self.grad_clip_norm)),
            ("seed", self.seed.to_string()),
            ("val_frac", format!("{:?}", self.val_frac)),
            ("d_model", self.d_model.to_string()),
            ("enc_hidden", self.enc_hidden.to_string()),
            ("dec_hidden", self.dec_hidden.to_string()),
            ("attn_dim", self.attn_dim.to_string()),
            ("tgt_emb_dim", self.tgt_emb_dim.to_string()),
            ("max_positions", self.max_positions.to_string()),
            ("max_sentence_len", self.max_sentence_len.to_string()),
            ("max_vocab", self.max_vocab.to_string()),
            ("min_freq", self.min_freq.to_string()),
            ("max_decode_len", self.max_decode_len.to_string()),
        ]
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| NmtError::Config(format!("invalid value {value:?} for {key}")))
        }
        match key {
            "batch_size" => self.batch_size = parse(key, value)?,
            "adadelta_lr" => self.adadelta_lr = parse(key, value)?,
            "adadelta_eps" => self.adadelta_eps = parse(key, value)?,
            "adadelta_rho" => self.adadelta_rho = parse(key, value)?,
            "conv_layers" => self.conv_layers = parse(key, value)?,
            "kernel_width" => self.kernel_width = parse(key, value)?,
            "position_embedding" => self.position_embedding = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "grad_clip_norm" => self.grad_clip_norm = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "val_frac" => self.val_frac = parse(key, value)?,
            "d_model" => self.d_model = parse(key, value)?,
            "enc_hidden" => self.enc_hidden = parse(key, value)?,
            "dec_hidden" => self.dec_hidden = parse(key, value)?,
            "attn_dim" => self.attn_dim = parse(key, value)?,
            "tgt_emb_dim" => self.tgt_emb_dim = parse(key, value)?,
            "max_positions" => self.max_positions = parse(key, value)?,
            "max_sentence_len" => self.max_sentence_len = parse(key, value)?,
            "max_vocab" => self.max_vocab = parse(key, value)?,
            "min_freq" => self.min_freq = parse(key, value)?,
            "max_decode_len" => self.max_decode_len = parse(key, value)?,
            other => return Err(NmtError::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn model_config(&self, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        ModelConfig {
            src_vocab,
            tgt_vocab,
            d_model: self.d_model,
            max_positions: self.max_positions,
            conv_layers: self.conv_layers,
            kernel_width: self.kernel_width,
            enc_hidden: self.enc_hidden,
            dec_hidden: self.dec_hidden,
            attn_dim: self.attn_dim,
            tgt_emb_dim: self.tgt_emb_dim,
            position_embedding: self.position_embedding,
        }
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Architecture sizes of one encoder-decoder instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub d_model: usize,
    pub max_positions: usize,
    /// Zero is allowed here (conv stack becomes the identity); training
    /// configurations require 1..=5.
    pub conv_layers: usize,
    pub kernel_width: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub attn_dim: usize,
    pub tgt_emb_dim: usize,
    pub position_embedding: bool,
}

impl ModelConfig {
    /// Two-sided width of the bidirectional annotations.
    pub fn annotation_dim(&self) -> usize {
        2 * self.enc_hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_width % 2 == 0 {
            return Err(NmtError::Config(format!(
                "kernel_width must be odd, got {}",
                self.kernel_width
            )));
        }
        if self.conv_layers > MAX_CONV_LAYERS {
            return Err(NmtError::Config(format!(
                "conv_layers must be at most {MAX_CONV_LAYERS}, got {}",
                self.conv_layers
            )));
        }
        let dims = [
            self.src_vocab,
            self.tgt_vocab,
            self.d_model,
            self.max_positions,
            self.enc_hidden,
            self.dec_hidden,
            self.attn_dim,
            self.tgt_emb_dim,
        ];
        if dims.contains(&0) {
            return Err(NmtError::Config(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        TrainConfig::preset(Preset::Tiny).validate().unwrap();
        let paper = TrainConfig::preset(Preset::Paper);
        paper.validate().unwrap();
        assert_eq!(paper.batch_size, 128);
        assert_eq!(paper.d_model, 512);
        assert_eq!(paper.conv_layers, 3);
        assert_eq!(paper.adadelta_lr, 0.1);
        assert_eq!(paper.adadelta_eps, 1e-6);
    }

    #[test]
    fn conv_depth_range() {
        let mut c = TrainConfig::preset(Preset::Tiny);
        c.conv_layers = 7;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("between 1 and 5"), "{msg}");
        c.conv_layers = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn pairs_round_trip_through_set() {
        let mut c = TrainConfig::preset(Preset::Tiny);
        c.adadelta_lr = 0.1 + 1e-17;
        c.position_embedding = false;
        let mut d = TrainConfig::preset(Preset::Paper);
        for (k, v) in c.to_pairs() {
            d.set(k, &v).unwrap();
        }
        assert_eq!(c, d);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut c = TrainConfig::default();
        assert!(c.set("learning_rate", "1").is_err());
        assert!(c.set("batch_size", "many").is_err());
    }
}
