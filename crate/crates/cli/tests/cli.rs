use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn specdec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specdec"))
        .args(args)
        .output()
        .expect("spawn specdec")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_model(dir: &Path, name: &str, seed: &str) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap();
    let o = specdec(&[
        "init-model",
        "--d-model",
        "16",
        "--n-layers",
        "1",
        "--n-heads",
        "2",
        "--d-ff",
        "32",
        "--max-context",
        "128",
        "--seed",
        seed,
        "--out",
        p,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    p.to_string()
}

fn assert_report_lines(out: &str, banner: &str) -> String {
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3, "{out}");
    assert_eq!(lines[0], banner);
    let t = lines[1]
        .strip_prefix("Time = ")
        .unwrap()
        .strip_suffix('s')
        .unwrap();
    let (whole, frac) = t.split_once('.').unwrap();
    assert!(!whole.is_empty() && whole.bytes().all(|b| b.is_ascii_digit()));
    assert!(frac.len() == 2 && frac.bytes().all(|b| b.is_ascii_digit()));
    lines[2].strip_prefix("Text = ").unwrap().to_string()
}

#[test]
fn init_model_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = small_model(dir.path(), "a.ttwf", "3");
    let b = small_model(dir.path(), "b.ttwf", "3");
    let c = small_model(dir.path(), "c.ttwf", "4");
    let (a, b, c) = (
        std::fs::read(a).unwrap(),
        std::fs::read(b).unwrap(),
        std::fs::read(c).unwrap(),
    );
    assert_eq!(&a[..4], b"TTWF");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn default_presets_write_loadable_files() {
    let dir = TempDir::new().unwrap();
    for preset in ["target", "draft"] {
        let p = dir.path().join(format!("{preset}.ttwf"));
        let o = specdec(&[
            "init-model",
            "--preset",
            preset,
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        specdec_core::model::load_transformer(&p).unwrap();
    }
}

#[test]
fn generate_autoregressive_prints_three_lines() {
    let dir = TempDir::new().unwrap();
    let t = small_model(dir.path(), "t.ttwf", "0");
    let o = specdec(&[
        "generate",
        "--target",
        &t,
        "--max-tokens",
        "12",
        "--prompt",
        "Alan Turing",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = assert_report_lines(&stdout(&o), "Autoregressive Decode");
    assert!(text.starts_with("Alan Turing"));
    let err = stderr(&o);
    for key in [
        "draft_forward_calls = 0",
        "target_forward_calls = 13",
        "tokens_proposed = 0",
        "tokens_accepted",
        "tokens_rejected",
        "bonus_tokens",
        "wall_time_total",
        "wall_time_draft",
        "wall_time_target",
    ] {
        assert!(err.contains(key), "missing {key} in {err}");
    }
}

#[test]
fn generate_speculative_with_transformer_and_bigram_drafts() {
    let dir = TempDir::new().unwrap();
    let t = small_model(dir.path(), "t.ttwf", "0");
    let d = small_model(dir.path(), "d.ttwf", "1");
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, "the theory of the thing").unwrap();
    let bigram = dir.path().join("bigram.json");
    let o = specdec(&[
        "train-bigram",
        "--corpus",
        corpus.to_str().unwrap(),
        "--smoothing",
        "0.5",
        "--out",
        bigram.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let from_corpus = format!("bigram:{}", corpus.display());
    for draft in [d.as_str(), bigram.to_str().unwrap(), from_corpus.as_str()] {
        let o = specdec(&[
            "generate",
            "--target",
            &t,
            "--mode",
            "speculative",
            "--draft",
            draft,
            "--k",
            "3",
            "--max-tokens",
            "20",
            "--prompt",
            "the",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_report_lines(&stdout(&o), "Speculative Decode");
    }
}

#[test]
fn greedy_cli_outputs_agree_across_modes() {
    let dir = TempDir::new().unwrap();
    let t = small_model(dir.path(), "t.ttwf", "5");
    let d = small_model(dir.path(), "d.ttwf", "6");
    let ar = specdec(&[
        "generate",
        "--target",
        &t,
        "--temperature",
        "0",
        "--max-tokens",
        "30",
        "--prompt",
        "I am",
    ]);
    let sp = specdec(&[
        "generate",
        "--target",
        &t,
        "--draft",
        &d,
        "--mode",
        "speculative",
        "--temperature",
        "0",
        "--max-tokens",
        "30",
        "--prompt",
        "I am",
    ]);
    assert_eq!(
        assert_report_lines(&stdout(&ar), "Autoregressive Decode"),
        assert_report_lines(&stdout(&sp), "Speculative Decode")
    );
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let t = small_model(dir.path(), "t.ttwf", "0");
    for args in [
        vec![
            "generate",
            "--target",
            &t,
            "--mode",
            "speculative",
            "--prompt",
            "x",
        ],
        vec![
            "generate",
            "--target",
            &t,
            "--mode",
            "autoregressive",
            "--temperature",
            "-1",
            "--prompt",
            "x",
        ],
        vec!["generate", "--target", &t, "--top-p", "0", "--prompt", "x"],
        vec!["generate", "--target", &t, "--k", "0", "--prompt", "x"],
        vec!["generate", "--target", &t, "--prompt", "x", "--unknown"],
        vec!["generate", "--prompt", "x"],
        vec!["frobnicate"],
    ] {
        let o = specdec(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn model_and_file_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.ttwf");
    let junk = dir.path().join("junk.ttwf");
    std::fs::write(&junk, b"TTWF\x09\x00\x00\x00").unwrap();
    for target in [missing.to_str().unwrap(), junk.to_str().unwrap()] {
        let o = specdec(&["generate", "--target", target, "--prompt", "x"]);
        assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    }
    let o = specdec(&[
        "bench",
        "--scenario-file",
        dir.path().join("nope.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn context_overflow_exits_4() {
    let dir = TempDir::new().unwrap();
    let t = small_model(dir.path(), "t.ttwf", "0");
    let o = specdec(&[
        "generate",
        "--target",
        &t,
        "--max-tokens",
        "200",
        "--prompt",
        "x",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn bench_writes_csv_and_json() {
    let dir = TempDir::new().unwrap();
    small_model(dir.path(), "t.ttwf", "0");
    small_model(dir.path(), "d.ttwf", "1");
    let scenarios = dir.path().join("scenarios.toml");
    std::fs::write(
        &scenarios,
        r#"
[[scenario]]
id = "smoke"
target = "t.ttwf"
draft = "d.ttwf"
prompt = "Alan Turing"
max_new_tokens = 8
k = 2
draft_delay = 0.0
target_delay = 0.0
"#,
    )
    .unwrap();
    let csv = dir.path().join("report.csv");
    let o = specdec(&[
        "bench",
        "--scenario-file",
        scenarios.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let recs = specdec_core::bench::parse_csv_report(&text).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs[1].speedup_vs_autoregressive.is_some());
    assert!(text.starts_with("scenario_id,mode,"));

    let o = specdec(&[
        "bench",
        "--scenario-file",
        scenarios.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = specdec_core::bench::parse_json_report(&stdout(&o)).unwrap();
    assert_eq!(recs.len(), 2);
}

#[cfg(unix)]
#[test]
fn prompt_accepts_arbitrary_bytes() {
    use std::ffi::OsStr;
    use std::os::unix::ffi::OsStrExt;

    let dir = TempDir::new().unwrap();
    let t = small_model(dir.path(), "t.ttwf", "0");
    let o = Command::new(env!("CARGO_BIN_EXE_specdec"))
        .args(["generate", "--target", &t, "--max-tokens", "4", "--prompt"])
        .arg(OsStr::from_bytes(b"a\xffb\n"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = assert_report_lines(&String::from_utf8_lossy(&o.stdout), "Autoregressive Decode");
    assert!(text.starts_with("a\\xffb\\n"), "{text}");
}
