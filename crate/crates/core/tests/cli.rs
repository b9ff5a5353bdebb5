use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_tenbed");

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("TENBED_SEED")
        .output()
        .unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn build_vocab_two_words() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let o = run(
        &[
            "build-vocab",
            "--segmentations",
            &fixture("two_words.tsv"),
            "-n",
            "3",
            "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let vocab = fs::read_to_string(out.join("vocab.tsv")).unwrap();
    assert_eq!(
        vocab,
        "morpheme\tid\nun\t0\nkind\t1\nly\t2\nness\t3\n<pad>\t4\n"
    );
    let index = fs::read_to_string(out.join("index.tsv")).unwrap();
    assert_eq!(
        index,
        "word\tm1\tm2\tm3\nunkindly\t0\t1\t2\nunkindness\t0\t1\t3\n"
    );
    let stats = fs::read_to_string(out.join("stats.tsv")).unwrap();
    assert_eq!(
        stats.lines().next().unwrap(),
        "segmentation\tN=1\tN=2\tN=3\tN=4\tN>4\t|M|"
    );
    assert_eq!(stats.lines().nth(2).unwrap(), "mor_3\t0\t0\t2\t0\t0\t4");
}

#[test]
fn build_vocab_order_one_and_rerun_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let seg = fixture("two_words.tsv");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = run(
            &[
                "build-vocab",
                "--segmentations",
                &seg,
                "-n",
                "1",
                "--out",
                out.to_str().unwrap(),
            ],
            tmp.path(),
        );
        assert!(o.status.success());
    }
    let index = fs::read_to_string(a.join("index.tsv")).unwrap();
    assert_eq!(index, "word\tm1\nunkindly\t0\nunkindness\t1\n");
    assert!(fs::read_to_string(a.join("vocab.tsv"))
        .unwrap()
        .contains("unkindly\t0\n"));
    for f in ["vocab.tsv", "index.tsv", "stats.tsv", "run.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn build_vocab_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.tsv");
    fs::write(&bad, "ok\tok\nbroken\n").unwrap();
    let o = run(
        &[
            "build-vocab",
            "--segmentations",
            bad.to_str().unwrap(),
            "--out",
            "x",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = run(
        &[
            "build-vocab",
            "--segmentations",
            "missing.tsv",
            "--out",
            "x",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn audit_original_and_morphte() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(
        tmp.path(),
        "o.toml",
        "method = \"original\"\nvocab = 100\ndim = 16\n",
    );
    let o = run(&["audit", "--config", &c], tmp.path());
    assert!(o.status.success());
    assert!(
        stdout(&o).ends_with("\t1600\t0\t1600\t1.00\n"),
        "{}",
        stdout(&o)
    );
    let c = write_config(
        tmp.path(),
        "m.toml",
        "method = \"morphte\"\nvocab = 41280\ndim = 512\norder = 3\nsubdim = 8\nrank = 10\nmorphemes = 10818\n",
    );
    let o = run(&["audit", "--config", &c], tmp.path());
    let total: u64 = stdout(&o)
        .lines()
        .nth(1)
        .unwrap()
        .split('\t')
        .nth(4)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!((total as f64 / 1e4).round() / 100.0, 0.99);
}

#[test]
fn audit_bundled_tables_reports_mismatches_with_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["audit", "--paper-tables"], tmp.path());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 63);
    let bad = text.lines().filter(|l| l.ends_with("MISMATCH")).count();
    assert_eq!(o.status.code(), Some(if bad == 0 { 0 } else { 4 }));
}

#[test]
fn gradcheck_pass_and_negative_control() {
    let tmp = tempfile::tempdir().unwrap();
    fs::copy(fixture("synthetic_lexicon.tsv"), tmp.path().join("lex.tsv")).unwrap();
    let c = write_config(
        tmp.path(),
        "o.toml",
        "method = \"original\"\nvocab = 30\ndim = 5\n",
    );
    let o = run(&["gradcheck", "--config", &c, "--trials", "5"], tmp.path());
    assert!(o.status.success());
    assert!(
        stdout(&o)
            .lines()
            .skip(1)
            .all(|l| l.split('\t').nth(3) == Some("0e0")),
        "{}",
        stdout(&o)
    );

    let c = write_config(
        tmp.path(),
        "m.toml",
        "method = \"morphte\"\nsegmentations = \"lex.tsv\"\ndim = 8\norder = 3\nsubdim = 2\nrank = 2\n",
    );
    let o = run(&["gradcheck", "--config", &c, "--trials", "10"], tmp.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let o = run(
        &[
            "gradcheck",
            "--config",
            &c,
            "--trials",
            "3",
            "--perturb-backward",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn train_export_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    fs::copy(fixture("synthetic_lexicon.tsv"), tmp.path().join("lex.tsv")).unwrap();
    let c = write_config(
        tmp.path(),
        "t.toml",
        "method = \"morphte\"\nsegmentations = \"lex.tsv\"\ndim = 16\norder = 3\nsubdim = 3\nrank = 2\nepochs = 3\nseed = 9\n",
    );
    let o = run(&["train", "--config", &c, "--out", "ck"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ck = tmp.path().join("ck");
    let hist = fs::read_to_string(ck.join("history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 4);
    assert!(ck.join("index.bin").exists());
    let manifest = fs::read_to_string(ck.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"morph.0\"") && manifest.contains("\"morph.1\""));

    // same seed, same history
    let o = run(&["train", "--config", &c, "--out", "ck2"], tmp.path());
    assert!(o.status.success());
    assert_eq!(
        hist,
        fs::read_to_string(tmp.path().join("ck2/history.csv")).unwrap()
    );

    // TENBED_SEED overrides the config seed
    let o = Command::new(BIN)
        .args(["train", "--config", &c, "--out", "ck3"])
        .current_dir(tmp.path())
        .env("TENBED_SEED", "10")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_ne!(
        hist,
        fs::read_to_string(tmp.path().join("ck3/history.csv")).unwrap()
    );

    let o = run(
        &["eval", "--checkpoint", "ck", "--word", "pre0root0suf0"],
        tmp.path(),
    );
    assert!(o.status.success());
    let line = stdout(&o);
    assert_eq!(line.trim_end().split('\t').count(), 17);

    let o = run(
        &["eval", "--checkpoint", "ck", "--word", "nope"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = run(
        &["eval", "--checkpoint", "missing", "--word", "x"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn export_then_eval_all() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(
        tmp.path(),
        "w.toml",
        "method = \"word2ket\"\nvocab = 4\ndim = 9\norder = 2\nrank = 2\nseed = 1\n",
    );
    let o = run(&["export", "--config", &c, "--out", "ck"], tmp.path());
    assert!(o.status.success());
    assert!(!tmp.path().join("ck/index.bin").exists());
    let o = run(&["eval", "--checkpoint", "ck", "--all"], tmp.path());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("0\t"));
}

#[test]
fn version_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(
        tmp.path(),
        "o.toml",
        "method = \"original\"\nvocab = 3\ndim = 2\n",
    );
    assert!(run(&["export", "--config", &c, "--out", "ck"], tmp.path())
        .status
        .success());
    let m = tmp.path().join("ck/manifest.json");
    let text = fs::read_to_string(&m)
        .unwrap()
        .replace("\"format_version\": 1", "\"format_version\": 2");
    fs::write(&m, text).unwrap();
    let o = run(&["eval", "--checkpoint", "ck", "--all"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version 2"));
}

#[test]
fn bad_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(
        tmp.path(),
        "x.toml",
        "method = \"morphte\"\nvocab = 3\ndim = 2\n",
    );
    assert_eq!(
        run(&["export", "--config", &c, "--out", "ck"], tmp.path())
            .status
            .code(),
        Some(2)
    );
    let c = write_config(
        tmp.path(),
        "y.toml",
        "method = \"nonsense\"\nvocab = 3\ndim = 2\n",
    );
    assert_eq!(
        run(&["export", "--config", &c, "--out", "ck"], tmp.path())
            .status
            .code(),
        Some(2)
    );
}
