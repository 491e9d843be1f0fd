//! Checkpoint directories.
//!
//! ```text
//! <dir>/manifest    UTF-8, tab separated
//!     format_version  1
//!     config.<key>    <value>          (one line per TrainConfig field)
//!     vocab_src       vocab.src
//!     vocab_tgt       vocab.tgt
//!     epoch           <n>
//!     best_val_loss   <f64>
//!     <param name>    f32   <d1,d2,...>   <byte offset>
//! <dir>/params.bin  row-major little-endian f32 arrays at the stated offsets
//! <dir>/vocab.src   one token per line, line number = id
//! <dir>/vocab.tgt
//! ```
//!
//! Header lines have two fields, parameter lines four.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::TrainedModel;
use crate::config::TrainConfig;
use crate::corpus::Vocabulary;
use crate::error::{NmtError, Result};
use crate::model::Seq2Seq;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest";
pub const PARAMS: &str = "params.bin";
pub const VOCAB_SRC: &str = "vocab.src";
pub const VOCAB_TGT: &str = "vocab.tgt";

/// One parameter line of the manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub header: Vec<(String, String)>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(|l| l.split('\t').collect::<Vec<_>>()) {
            Some(fields) if fields.len() == 2 && fields[0] == "format_version" => {
                let version: u32 = fields[1]
                    .parse()
                    .map_err(|_| NmtError::Checkpoint(format!("unreadable format version {:?}", fields[1])))?;
                if version != FORMAT_VERSION {
                    return Err(NmtError::Checkpoint(format!(
                        "format version {version} is not supported (expected {FORMAT_VERSION})"
                    )));
                }
            }
            _ => {
                return Err(NmtError::Checkpoint(
                    "manifest does not start with a format_version line (wrong magic)".into(),
                ))
            }
        }
        let mut manifest = Manifest {
            header: vec![("format_version".into(), FORMAT_VERSION.to_string())],
            entries: Vec::new(),
        };
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [key, value] => manifest.header.push((key.to_string(), value.to_string())),
                [name, dtype, dims, offset] => {
                    let shape = dims
                        .split(',')
                        .map(str::parse)
                        .collect::<std::result::Result<Vec<usize>, _>>()
                        .map_err(|_| NmtError::Checkpoint(format!("bad shape {dims:?} on manifest line {}", n + 2)))?;
                    let offset = offset
                        .parse()
                        .map_err(|_| NmtError::Checkpoint(format!("bad offset {offset:?} on manifest line {}", n + 2)))?;
                    manifest.entries.push(ManifestEntry {
                        name: name.to_string(),
                        dtype: dtype.to_string(),
                        shape,
                        offset,
                    });
                }
                _ => {
                    return Err(NmtError::Checkpoint(format!(
                        "manifest line {} has {} fields",
                        n + 2,
                        fields.len()
                    )))
                }
            }
        }
        Ok(manifest)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(out, "{k}\t{v}");
        }
        for e in &self.entries {
            let dims: Vec<String> = e.shape.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.name, e.dtype, dims.join(","), e.offset);
        }
        out
    }
}

/// Writes `trained` into directory `dir`, creating it if necessary.
/// Parameters are stored as 32-bit floats.
pub fn save_checkpoint(trained: &TrainedModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| NmtError::io(dir, e))?;
    let mut header = vec![("format_version".to_string(), FORMAT_VERSION.to_string())];
    header.extend(
        trained
            .config
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (format!("config.{k}"), v)),
    );
    header.push(("vocab_src".into(), VOCAB_SRC.into()));
    header.push(("vocab_tgt".into(), VOCAB_TGT.into()));
    header.push(("epoch".into(), trained.epoch.to_string()));
    header.push(("best_val_loss".into(), format!("{:?}", trained.best_val_loss)));

    let mut entries = Vec::new();
    let mut blob = Vec::with_capacity(trained.model.params.num_scalars() * 4);
    for p in trained.model.params.iter() {
        entries.push(ManifestEntry {
            name: p.name.clone(),
            dtype: "f32".into(),
            shape: p.tensor.shape().to_vec(),
            offset: blob.len(),
        });
        for &v in p.tensor.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = Manifest { header, entries };
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| NmtError::io(path, e))
    };
    write(MANIFEST, manifest.render().as_bytes())?;
    write(PARAMS, &blob)?;
    trained.src_vocab.save(dir.join(VOCAB_SRC))?;
    trained.tgt_vocab.save(dir.join(VOCAB_TGT))?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| NmtError::io(&path, e))?;
    Manifest::parse(&text)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<TrainedModel> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let mut config = TrainConfig::default();
    for (k, v) in &manifest.header {
        if let Some(key) = k.strip_prefix("config.") {
            config
                .set(key, v)
                .map_err(|e| NmtError::Checkpoint(format!("manifest config: {e}")))?;
        }
    }
    config
        .validate()
        .map_err(|e| NmtError::Checkpoint(format!("manifest config: {e}")))?;
    let required = |key: &str| {
        manifest
            .get(key)
            .ok_or_else(|| NmtError::Checkpoint(format!("manifest is missing {key}")))
    };
    let src_vocab = Vocabulary::load(dir.join(required("vocab_src")?))?;
    let tgt_vocab = Vocabulary::load(dir.join(required("vocab_tgt")?))?;
    let epoch = required("epoch")?
        .parse()
        .map_err(|_| NmtError::Checkpoint("bad epoch".into()))?;
    let best_val_loss = required("best_val_loss")?
        .parse()
        .map_err(|_| NmtError::Checkpoint("bad best_val_loss".into()))?;

    let params_path = dir.join(PARAMS);
    let blob = fs::read(&params_path).map_err(|e| NmtError::io(&params_path, e))?;
    let mut model = Seq2Seq::new(config.model_config(src_vocab.len(), tgt_vocab.len()), 0)?;
    if manifest.entries.len() != model.params.len() {
        return Err(NmtError::Checkpoint(format!(
            "manifest lists {} parameters, model expects {}",
            manifest.entries.len(),
            model.params.len()
        )));
    }
    for param in model.params.iter_mut() {
        let entry = manifest
            .entries
            .iter()
            .find(|e| e.name == param.name)
            .ok_or_else(|| NmtError::Checkpoint(format!("parameter {} missing from manifest", param.name)))?;
        if entry.dtype != "f32" {
            return Err(NmtError::Checkpoint(format!("unsupported dtype {} for {}", entry.dtype, entry.name)));
        }
        if entry.shape != param.tensor.shape() {
            return Err(NmtError::Checkpoint(format!(
                "{} has shape {:?} in the manifest but the model expects {:?}",
                entry.name,
                entry.shape,
                param.tensor.shape()
            )));
        }
        let end = entry.offset + 4 * param.tensor.numel();
        let bytes = blob.get(entry.offset..end).ok_or_else(|| {
            NmtError::Checkpoint(format!(
                "{} is truncated ({} bytes present, needs {end})",
                PARAMS,
                blob.len()
            ))
        })?;
        for (dst, chunk) in param.tensor.data_mut().iter_mut().zip(bytes.chunks_exact(4)) {
            *dst = f64::from(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
    }
    let expected: usize = model.params.num_scalars() * 4;
    if blob.len() != expected {
        return Err(NmtError::Checkpoint(format!(
            "{PARAMS} holds {} bytes, manifest describes {expected}",
            blob.len()
        )));
    }
    Ok(TrainedModel {
        config,
        src_vocab,
        tgt_vocab,
        model,
        epoch,
        best_val_loss,
    })
}
