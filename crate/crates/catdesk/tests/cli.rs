mod common;

use std::path::Path;
use std::process::{Command, Output};

use catdesk::fst_text::read_fst;
use catdesk::symbols::SymbolTable;
use catdesk_core::fst::enumerate_language;
use catdesk_core::topology::{ctc_collapse, Alphabet};

const SMALL: &[&str] = &["--set", "corpus_size=20", "--set", "workers=1"];

fn catdesk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catdesk"))
        .args(args)
        .env_remove("CATDESK_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = catdesk(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    SMALL.iter().copied().chain(args.iter().copied()).collect()
}

#[test]
fn synth_writes_three_splits_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&with_small(&["synth", "--out", p(&a)]));
    ok(&with_small(&["synth", "--out", p(&b)]));
    for split in ["train", "dev", "test"] {
        for file in ["feats.bin", "text"] {
            let x = std::fs::read(a.join(split).join(file)).unwrap();
            let y = std::fs::read(b.join(split).join(file)).unwrap();
            assert_eq!(x, y, "{split}/{file}");
        }
    }
    assert!(a.join("units.txt").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(catdesk(&["synth"]).status.code(), Some(2));
    assert_eq!(catdesk(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = catdesk(&["--set", "bogus_key=1", "synth", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn environment_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "seed=1\ncorpus_size=10\n").unwrap();
    let run = |out: &Path, env_seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_catdesk"));
        cmd.args(["--config", p(&cfg), "synth", "--out", p(out)]);
        match env_seed {
            Some(s) => cmd.env("CATDESK_SEED", s),
            None => cmd.env_remove("CATDESK_SEED"),
        };
        assert!(cmd.stdout(std::process::Stdio::null()).status().unwrap().success());
        std::fs::read(out.join("test/feats.bin")).unwrap()
    };
    let file_only = run(&dir.path().join("x"), None);
    let env_same = run(&dir.path().join("y"), Some("1"));
    let env_other = run(&dir.path().join("z"), Some("2"));
    assert_eq!(file_only, env_same);
    assert_ne!(file_only, env_other);
}

#[test]
fn score_identical_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("ref");
    std::fs::write(&f, "u1\t0\ta b\nu2\t0\tc\n").unwrap();
    assert_eq!(ok(&["score", "--ref", p(&f), "--hyp", p(&f)]).trim(), "PER 0.000 S 0 I 0 D 0");
}

#[test]
fn built_denominator_matches_alignment_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let lm = dir.path().join("lm.arpa");
    let den = dir.path().join("den.fst");
    ok(&["--set", "alphabet=2", "--set", "corpus_size=20", "synth", "--out", p(&data)]);
    ok(&["train-lm", "--data", p(&data), "--out", p(&lm)]);
    ok(&["build-den", "--data", p(&data), "--lm", p(&lm), "--out", p(&den)]);

    let mut units = SymbolTable::read(std::fs::read(data.join("units.txt")).unwrap().as_slice(), "u").unwrap();
    let model = catdesk::arpa::read_arpa(std::fs::read(&lm).unwrap().as_slice(), "lm", &mut units).unwrap();
    let graph = read_fst(std::fs::read(&den).unwrap().as_slice(), "den").unwrap();
    let alphabet = Alphabet::new(2).unwrap();
    let symbols: Vec<u32> = alphabet.emissions().collect();
    let accepted = enumerate_language(&graph, 3).unwrap();
    for t in 1..=3 {
        for seq in common::all_strings(&symbols, t) {
            let expected = common::backoff_path_sum(&model, &ctc_collapse(&seq));
            let got = accepted.iter().find(|(s, _)| *s == seq).map(|(_, w)| *w).unwrap();
            assert!((got - expected).abs() < 1e-9, "{seq:?}: {got} vs {expected}");
        }
    }
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    let (data, lm, den, teacher, student, ctc, hyp) =
        (d("data"), d("lm.arpa"), d("den.fst"), d("t.ckpt"), d("s.ckpt"), d("ctc.ckpt"), d("hyp"));
    let small = |args: &[&str]| {
        let mut v = with_small(&["--set", "epochs=2", "--set", "chunk_size=8", "--set", "left_context=2"]);
        v.extend(["--set", "right_context=2"]);
        v.extend(args);
        ok(&v)
    };
    small(&["synth", "--out", p(&data)]);
    small(&["train-lm", "--data", p(&data), "--out", p(&lm)]);
    small(&["build-den", "--data", p(&data), "--lm", p(&lm), "--out", p(&den)]);

    let no_den = catdesk(&with_small(&["train", "--data", p(&data), "--loss", "crf", "--out", p(&student)]));
    assert_eq!(no_den.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_den.stderr).contains("build-den"));

    let log = small(&["train", "--data", p(&data), "--loss", "ctc", "--out", p(&ctc)]);
    assert!(log.lines().filter(|l| l.split_whitespace().count() >= 3).count() >= 2);
    assert!(ctc.exists());

    small(&["train", "--data", p(&data), "--den", p(&den), "--lm", p(&lm), "--out", p(&teacher)]);
    let lines = std::fs::read_to_string(format!("{}.log", p(&teacher))).unwrap();
    for line in lines.lines() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(fields.len(), 3, "{line}");
        assert!(fields.iter().all(|f| f.parse::<f64>().is_ok()), "{line}");
    }

    let no_teacher = catdesk(&with_small(&[
        "train", "--data", p(&data), "--mode", "csf", "--den", p(&den), "--out", p(&student),
    ]));
    assert_ne!(no_teacher.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&no_teacher.stderr).contains("teacher"));

    small(&[
        "train", "--data", p(&data), "--mode", "csf", "--den", p(&den), "--teacher", p(&teacher), "--out",
        p(&student),
    ]);
    let report = small(&["decode", "--data", p(&data), "--model", p(&student), "--lm", p(&lm), "--inference", "chunked", "--out", p(&hyp)]);
    assert!(report.contains("PER"), "{report}");
    let scored = ok(&["score", "--ref", p(&data.join("test/text")), "--hyp", p(&hyp)]);
    assert!(scored.starts_with("PER "), "{scored}");

    let demo = small(&["stream-demo", "--data", p(&data), "--model", p(&student)]);
    let summary = demo.lines().last().unwrap();
    assert!(summary.contains("matches-batch true"), "{summary}");
    let field = |k: &str| -> usize {
        let toks: Vec<&str> = summary.split_whitespace().collect();
        let i = toks.iter().position(|t| *t == k).unwrap();
        toks[i + 1].parse().unwrap()
    };
    assert!(field("max-lag") <= field("bound"));
}

#[test]
fn stream_demo_reports_default_latency() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("m.ckpt");
    ok(&with_small(&["synth", "--out", p(&data)]));
    ok(&with_small(&["--set", "epochs=1", "train", "--data", p(&data), "--loss", "ctc", "--out", p(&model)]));
    let demo = ok(&["stream-demo", "--data", p(&data), "--model", p(&model)]);
    assert!(demo.contains("context-latency-ms 300 "), "{demo}");
}
