use std::fs;
use std::path::Path;

use convrec_nmt::corpus::{toy, SentencePair};
use convrec_nmt::evaluation::translate_tokens;
use convrec_nmt::training::checkpoint::{read_manifest, Manifest, MANIFEST, PARAMS};
use convrec_nmt::training::{build_vocabs, load_checkpoint, save_checkpoint, TrainedModel, FORMAT_VERSION};
use convrec_nmt::{NmtError, Preset, TrainConfig};

fn trained(seed: u64) -> (TrainedModel, Vec<SentencePair>) {
    let pairs = toy::generate(16, seed);
    let mut config = TrainConfig::preset(Preset::Tiny);
    config.d_model = 12;
    config.enc_hidden = 6;
    config.dec_hidden = 10;
    config.attn_dim = 8;
    config.tgt_emb_dim = 8;
    config.conv_layers = 2;
    config.position_embedding = false;
    config.seed = seed;
    let (src, tgt) = build_vocabs(&pairs, &config).unwrap();
    let mut t = TrainedModel::init(config, src, tgt).unwrap();
    t.epoch = 7;
    t.best_val_loss = 1.25;
    (t, pairs)
}

fn saved(seed: u64) -> (tempfile::TempDir, TrainedModel, Vec<SentencePair>) {
    let (t, pairs) = trained(seed);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&t, dir.path()).unwrap();
    (dir, t, pairs)
}

fn expect_checkpoint_error(dir: &Path, needle: &str) {
    match load_checkpoint(dir) {
        Err(NmtError::Checkpoint(msg)) => assert!(msg.contains(needle), "{msg:?} lacks {needle:?}"),
        Err(other) => panic!("expected a checkpoint error, got {other}"),
        Ok(_) => panic!("corrupt checkpoint loaded"),
    }
}

#[test]
fn round_trip_restores_parameters_and_translations() {
    let (dir, original, pairs) = saved(3);
    let loaded = load_checkpoint(dir.path()).unwrap();
    assert_eq!(loaded.config, original.config);
    assert_eq!(loaded.src_vocab, original.src_vocab);
    assert_eq!(loaded.tgt_vocab, original.tgt_vocab);
    assert_eq!(loaded.epoch, 7);
    assert_eq!(loaded.best_val_loss, 1.25);
    for (a, b) in original.model.params.iter().zip(loaded.model.params.iter()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.trainable, b.trainable);
        let stored: Vec<f64> = a.tensor.data().iter().map(|&v| f64::from(v as f32)).collect();
        assert_eq!(stored, b.tensor.data(), "{}", a.name);
    }

    let sources: Vec<_> = pairs.iter().map(|p| p.source.clone()).collect();
    let before = translate_tokens(&original, &sources, 12).unwrap();
    let after = translate_tokens(&loaded, &sources, 12).unwrap();
    assert_eq!(before, after);

    // A second save of the loaded model is byte-identical.
    let again = tempfile::tempdir().unwrap();
    save_checkpoint(&loaded, again.path()).unwrap();
    for file in [MANIFEST, PARAMS, "vocab.src", "vocab.tgt"] {
        assert!(fs::read(dir.path().join(file)).unwrap() == fs::read(again.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn manifest_layout() {
    let (dir, original, _) = saved(4);
    let text = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
    assert_eq!(text.lines().next().unwrap(), format!("format_version\t{FORMAT_VERSION}"));
    assert!(text.lines().any(|l| l == "config.position_embedding\tfalse"));
    assert!(text.lines().any(|l| l == "config.conv_layers\t2"));
    assert!(text.lines().any(|l| l == "vocab_src\tvocab.src"));
    assert!(text.lines().any(|l| l == "vocab_tgt\tvocab.tgt"));

    let manifest = read_manifest(dir.path()).unwrap();
    assert_eq!(Manifest::parse(&manifest.render()).unwrap(), manifest);
    assert_eq!(manifest.entries.len(), original.model.params.len());
    let blob = fs::read(dir.path().join(PARAMS)).unwrap();
    let mut offset = 0;
    for (entry, param) in manifest.entries.iter().zip(original.model.params.iter()) {
        assert_eq!(entry.name, param.name);
        assert_eq!(entry.dtype, "f32");
        assert_eq!(entry.shape, param.tensor.shape());
        assert_eq!(entry.offset, offset);
        for (i, &v) in param.tensor.data().iter().enumerate() {
            let at = entry.offset + 4 * i;
            let bytes: [u8; 4] = blob[at..at + 4].try_into().unwrap();
            assert_eq!(bytes, (v as f32).to_le_bytes());
        }
        offset += 4 * param.tensor.numel();
    }
    assert_eq!(blob.len(), offset);

    let vocab = fs::read_to_string(dir.path().join("vocab.tgt")).unwrap();
    let lines: Vec<&str> = vocab.lines().collect();
    assert_eq!(lines.len(), original.tgt_vocab.len());
    for (id, token) in lines.iter().enumerate() {
        assert_eq!(original.tgt_vocab.id(token), id);
    }
}

#[test]
fn truncated_parameters_are_rejected() {
    let (dir, _, _) = saved(5);
    let path = dir.path().join(PARAMS);
    let blob = fs::read(&path).unwrap();
    fs::write(&path, &blob[..blob.len() - 3]).unwrap();
    expect_checkpoint_error(dir.path(), "truncated");
    fs::write(&path, []).unwrap();
    expect_checkpoint_error(dir.path(), "truncated");
    let mut longer = blob.clone();
    longer.extend([0u8; 4]);
    fs::write(&path, longer).unwrap();
    expect_checkpoint_error(dir.path(), "bytes");
}

#[test]
fn wrong_magic_and_version_are_rejected() {
    let (dir, _, _) = saved(6);
    let path = dir.path().join(MANIFEST);
    let text = fs::read_to_string(&path).unwrap();

    fs::write(&path, text.replacen("format_version", "fmt", 1)).unwrap();
    expect_checkpoint_error(dir.path(), "magic");
    fs::write(&path, "\u{0}\u{1}garbage").unwrap();
    expect_checkpoint_error(dir.path(), "magic");
    fs::write(&path, text.replacen("format_version\t1", "format_version\t2", 1)).unwrap();
    expect_checkpoint_error(dir.path(), "version 2");
}

#[test]
fn manifest_corruption_is_diagnosed() {
    let (dir, _, _) = saved(7);
    let path = dir.path().join(MANIFEST);
    let text = fs::read_to_string(&path).unwrap();

    let first_param = text.lines().find(|l| l.split('\t').count() == 4).unwrap().to_string();
    let name = first_param.split('\t').next().unwrap();

    let reshaped = text.replace(&first_param, &format!("{name}\tf32\t1,1\t0"));
    fs::write(&path, reshaped).unwrap();
    expect_checkpoint_error(dir.path(), "shape");

    let retyped = text.replace(&first_param, &first_param.replace("\tf32\t", "\tf16\t"));
    fs::write(&path, retyped).unwrap();
    expect_checkpoint_error(dir.path(), "dtype");

    let dropped: String = text.lines().filter(|l| *l != first_param).map(|l| format!("{l}\n")).collect();
    fs::write(&path, dropped).unwrap();
    expect_checkpoint_error(dir.path(), "parameters");

    fs::write(&path, text.replace("config.conv_layers\t2", "config.conv_layers\t9")).unwrap();
    expect_checkpoint_error(dir.path(), "conv_layers");

    fs::write(&path, format!("{text}stray line with no tabs\n")).unwrap();
    expect_checkpoint_error(dir.path(), "fields");
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(NmtError::Io { .. })));
}
