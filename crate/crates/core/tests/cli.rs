use std::fs;
use std::path::Path;

use convrec_nmt::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use convrec_nmt::corpus::toy;
use convrec_nmt::training::checkpoint::read_manifest;
use convrec_nmt::training::load_checkpoint;

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn nmt(args: &[&str], stdin: &str) -> Output {
    let mut argv = vec!["nmt"];
    argv.extend_from_slice(args);
    let mut input = stdin.as_bytes();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut input, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

const SMALL: &[&str] = &[
    "--preset", "tiny", "--epochs", "2", "--d-model", "12",
    "--set", "enc_hidden=6", "--set", "dec_hidden=8", "--set", "attn_dim=8", "--set", "tgt_emb_dim=8",
    "--batch-size", "8",
];

fn write_corpus(dir: &Path) -> String {
    let path = dir.join("de-en.tsv");
    fs::write(&path, toy::generate_tsv(60, 5)).unwrap();
    path.to_str().unwrap().to_string()
}

fn train(dir: &Path, extra: &[&str]) -> (String, Output) {
    let data = write_corpus(dir);
    let out = dir.join("ck").to_str().unwrap().to_string();
    let mut args = vec!["train", "--data", data.as_str(), "--out", out.as_str()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    let o = nmt(&args, "");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    (out, o)
}

#[test]
fn train_writes_a_checkpoint_and_echoes_the_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, o) = train(dir.path(), &["--conv-layers", "3", "--seed", "9"]);
    assert!(o.stderr.starts_with("# effective configuration (seed 9)"));
    assert!(o.stderr.contains("conv_layers = 3"));
    assert!(o.stderr.contains("d_model = 12"));
    assert!(o.stderr.contains("epoch   1"));
    assert!(o.stderr.contains("test: BLEU = "));
    for file in ["manifest", "params.bin", "vocab.src", "vocab.tgt"] {
        assert!(Path::new(&ck).join(file).is_file(), "{file}");
    }
    assert_eq!(read_manifest(&ck).unwrap().get("config.seed"), Some("9"));
}

#[test]
fn no_position_embedding_is_recorded_and_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, _) = train(dir.path(), &["--no-position-embedding"]);
    let manifest = read_manifest(&ck).unwrap();
    assert_eq!(manifest.get("config.position_embedding"), Some("false"));
    let loaded = load_checkpoint(&ck).unwrap();
    let pos = loaded.model.params.find("encoder.pos_emb").unwrap();
    assert!(loaded.model.params.get(pos).data().iter().all(|&v| v == 0.0));
}

#[test]
fn conv_depth_out_of_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_corpus(dir.path());
    for depth in ["7", "0"] {
        let o = nmt(&["train", "--data", &data, "--out", "unused", "--conv-layers", depth], "");
        assert_eq!(o.code, EXIT_USAGE);
        assert!(o.stderr.contains("between 1 and 5"), "{}", o.stderr);
    }
    assert!(!Path::new("unused").exists());
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(nmt(&[], "").code, EXIT_USAGE);
    assert_eq!(nmt(&["train"], "").code, EXIT_USAGE);
    assert_eq!(nmt(&["frobnicate"], "").code, EXIT_USAGE);
    assert_eq!(nmt(&["train", "--data", "x", "--out", "y", "--preset", "huge"], "").code, EXIT_USAGE);
    assert_eq!(nmt(&["train", "--data", "x", "--out", "y", "--set", "nonsense=1"], "").code, EXIT_USAGE);
    let help = nmt(&["--help"], "");
    assert_eq!(help.code, EXIT_OK);
    for sub in ["train", "translate", "evaluate", "ablate"] {
        assert!(help.stdout.contains(sub));
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# small run\nconv_layers = 1\nseed = 4\n").unwrap();
    let (ck, o) = train(dir.path(), &["--config", cfg.to_str().unwrap(), "--seed", "5"]);
    assert!(o.stderr.contains("conv_layers = 1"));
    let manifest = read_manifest(&ck).unwrap();
    assert_eq!(manifest.get("config.conv_layers"), Some("1"));
    assert_eq!(manifest.get("config.seed"), Some("5"));
}

#[test]
fn translate_line_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, _) = train(dir.path(), &[]);

    let empty = nmt(&["translate", "--checkpoint", &ck], "");
    assert_eq!(empty.code, EXIT_OK, "{}", empty.stderr);
    assert_eq!(empty.stdout, "");

    let input = "der hund schläft .\n\nein völlig unbekanntes wort\ndie katze sieht den vogel .\n";
    let a = nmt(&["translate", "--checkpoint", &ck, "--max-len", "6"], input);
    assert_eq!(a.code, EXIT_OK, "{}", a.stderr);
    assert_eq!(a.stdout.lines().count(), 4);
    for line in a.stdout.lines() {
        assert!(line.split_whitespace().count() <= 6);
    }
    let b = nmt(&["translate", "--checkpoint", &ck, "--max-len", "6"], input);
    assert_eq!(a.stdout, b.stdout);

    let file = dir.path().join("input.txt");
    fs::write(&file, input).unwrap();
    let c = nmt(&["translate", "--checkpoint", &ck, "--max-len", "6", "--input", file.to_str().unwrap()], "");
    assert_eq!(a.stdout, c.stdout);

    let missing = nmt(&["translate", "--checkpoint", dir.path().join("nope").to_str().unwrap()], "x\n");
    assert_eq!(missing.code, EXIT_DATA);
    assert!(missing.stderr.contains("error:"));
}

#[test]
fn evaluate_reports_and_appends_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, _) = train(dir.path(), &[]);
    let data = dir.path().join("de-en.tsv");
    let csv = dir.path().join("results.csv");
    let args = [
        "evaluate", "--checkpoint", &ck, "--data", data.to_str().unwrap(), "--results", csv.to_str().unwrap(),
    ];
    let o = nmt(&args, "");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("BLEU = "));
    assert!(o.stdout.contains("p1..p4 = "));
    assert!(o.stdout.contains("BP = "));
    nmt(&args, "");
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("p1") && lines[0].contains("bleu"));
    assert_eq!(lines[1], lines[2]);

    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "no tab on this line\nnor on this one\n").unwrap();
    let o = nmt(&["evaluate", "--checkpoint", &ck, "--data", bad.to_str().unwrap()], "");
    assert_eq!(o.code, EXIT_DATA);
    assert!(o.stderr.contains("format error") || o.stderr.contains("no usable"), "{}", o.stderr);
}

#[test]
fn ablate_sweeps_the_requested_depths() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_corpus(dir.path());
    let csv = dir.path().join("ablation.csv");
    let mut args = vec![
        "ablate", "--data", data.as_str(), "--depths", "1,3", "--position-embedding", "on,off",
        "--results", csv.to_str().unwrap(), "--seeds", "1,2",
    ];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--set", "epochs=1"]);
    let o = nmt(&args, "");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("30.6") && o.stdout.contains("27.9"));
    assert_eq!(o.stdout.matches("median BLEU").count(), 4);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let depths: Vec<&str> = rows.iter().map(|r| r.split(',').nth(col("conv_layers")).unwrap()).collect();
    assert!(depths.iter().all(|d| *d == "1" || *d == "3"));
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), header.len());
        assert_eq!(fields[col("d_model")], "12");
    }

    let bad = nmt(&["ablate", "--data", data.as_str(), "--depths", "2,6"], "");
    assert_eq!(bad.code, EXIT_USAGE);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_nmt");
    let status = std::process::Command::new(bin)
        .args(["train", "--data", "x.tsv", "--out", "y", "--conv-layers", "7"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&status.stderr).contains("between 1 and 5"));
    let status = std::process::Command::new(bin)
        .args(["evaluate", "--checkpoint", "/nonexistent", "--data", "x.tsv"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_DATA));
}
