use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenloss_core::loss_store::write_loss_dump;
use tokenloss_core::LossVector;

fn tokenloss(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokenloss"))
        .current_dir(dir)
        .args(args)
        .env_remove("TOKENLOSS_THREADS")
        .output()
        .expect("spawn tokenloss")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = stderr(o);
    let last = text.lines().last().expect("stderr line");
    serde_json::from_str(last).unwrap_or_else(|_| panic!("not JSON: {last}"))
}

/// Four checkpoints in family `a`, two of them also in `b`, with a `judge`
/// metric.
fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut manifest = String::from("version = 1\n");
    for (i, scale) in [1.0f32, 1.3, 0.8, 2.1].into_iter().enumerate() {
        let id = format!("ck{i}");
        let v: Vec<f32> = (0..4000).map(|_| scale * -rng.random::<f32>().max(1e-6).ln()).collect();
        write_loss_dump(&LossVector::new(&id, v).unwrap(), dir.path().join(format!("{id}.bin"))).unwrap();
        let family = if i < 2 { "[\"a\", \"b\"]" } else { "\"a\"" };
        manifest.push_str(&format!(
            "\n[[checkpoints]]\nid = \"{id}\"\nfamily = {family}\nstep = {}\nobjective = \"ce\"\nloss = \"{id}.bin\"\nmetrics = {{ judge = {} }}\n",
            (i + 1) * 1000,
            3.0 - scale as f64
        ));
    }
    std::fs::write(dir.path().join("manifest.toml"), manifest).unwrap();
    dir
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let help = tokenloss(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("summarize"));
    let version = tokenloss(dir.path(), &["--version"]);
    assert_eq!(version.status.code(), Some(0));
}

#[test]
fn missing_dump_is_a_data_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = tokenloss(dir.path(), &["summarize", "missing.bin"]);
    assert_eq!(o.status.code(), Some(2));
    let j = error_json(&o);
    assert_eq!(j["error"], "data");
    assert_eq!(j["code"], 2);
    assert!(j["message"].as_str().unwrap().contains("missing.bin"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = fixture_dir();
    for args in [
        &["concord", "--manifest", "manifest.toml", "--summaries", "mean"][..],
        &["summarize", "--bogus"],
        &["summarize", "ck0.bin", "--ks", "0,50"],
        &["shape", "--manifest", "manifest.toml", "--bands", "1,0.5"],
        &["correlate", "--manifest", "manifest.toml", "--family", "a", "--sweep"],
        &["summarize", "ck0.bin", "--sketch", "--epsilon", "0.5"],
    ] {
        let o = tokenloss(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert_eq!(error_json(&o)["error"], "usage", "{args:?}");
    }
}

#[test]
fn bad_thread_env_is_a_usage_error() {
    let dir = fixture_dir();
    let o = Command::new(env!("CARGO_BIN_EXE_tokenloss"))
        .current_dir(dir.path())
        .args(["summarize", "ck0.bin"])
        .env("TOKENLOSS_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn corrupt_dump_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = b"CELOSSv1".to_vec();
    bytes.extend(10u64.to_le_bytes());
    bytes.extend(1.0f32.to_le_bytes());
    std::fs::write(dir.path().join("short.bin"), bytes).unwrap();
    let o = tokenloss(dir.path(), &["summarize", "short.bin"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn summarize_csv_is_deterministic_across_threads() {
    let dir = fixture_dir();
    let args = ["summarize", "--manifest", "manifest.toml", "--ks", "5,50,95"];
    let one = tokenloss(dir.path(), &[&["--threads", "1"], &args[..]].concat());
    let four = tokenloss(dir.path(), &[&["--threads", "4"], &args[..]].concat());
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    assert_eq!(one.stdout, four.stdout);
    let text = stdout(&one);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "checkpoint_id,count,mean,p05,median,p95");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("ck0,4000,"));
}

#[test]
fn summarize_json_and_text_dumps() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.txt"), "1\n2\n3\n4\n5\n").unwrap();
    let o = tokenloss(dir.path(), &["summarize", "x.txt", "--format", "json", "--ks", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let j: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(j[0]["checkpoint_id"], "x");
    assert_eq!(j[0]["mean"], 3.0);
    assert_eq!(j[0]["percentiles"]["50"], 3.0);
}

#[test]
fn concord_table_layout() {
    let dir = fixture_dir();
    let o = tokenloss(
        dir.path(),
        &["concord", "--manifest", "manifest.toml", "--summaries", "mean,median"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "| Checkpoint family | pi(S) | {mean,median} |");
    assert!(lines[2].starts_with("| a (4) | "));
    assert!(lines[3].starts_with("| b (2) | 1.00 |"));
}

#[test]
fn shape_out_dir_writes_every_section() {
    let dir = fixture_dir();
    let o = tokenloss(
        dir.path(),
        &[
            "shape",
            "--manifest",
            "manifest.toml",
            "--family",
            "a",
            "--reference",
            "ck0",
            "--out-dir",
            "shape",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["profiles", "distances", "family-distances", "tail", "bands"] {
        let p: PathBuf = dir.path().join("shape").join(format!("{name}.csv"));
        assert!(p.exists(), "{name}");
    }
    let bands = std::fs::read_to_string(dir.path().join("shape/bands.csv")).unwrap();
    assert!(bands.starts_with("checkpoint_id,row,<0.1,0.1-0.5,0.5-1.5,1.5-5,5-10,>=10\n"));
    assert!(bands.contains("\nck1-ck0,delta,"));
}

#[test]
fn correlate_select_and_crossing() {
    let dir = fixture_dir();
    let o = tokenloss(
        dir.path(),
        &[
            "correlate",
            "--manifest",
            "manifest.toml",
            "--family",
            "a",
            "--select",
            "mean,judge",
            "--metric",
            "judge",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("| Best mean CE | ck2 |"), "{text}");
    assert!(text.contains("| Best judge | ck2 |"), "{text}");

    let o = tokenloss(
        dir.path(),
        &[
            "correlate",
            "--manifest",
            "manifest.toml",
            "--family",
            "a",
            "--trajectory",
            "ce",
            "--crossing",
            "--reference-checkpoint",
            "ck0",
            "--normalize",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("\nreference,crossing_step\n"), "{text}");
    assert!(text.trim_end().ends_with(",3000"), "{text}");
}

#[test]
fn correlate_passk_only() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.txt"), "0.6\n").unwrap();
    let o = tokenloss(
        dir.path(),
        &["correlate", "--passk", "p.txt", "--samples", "5", "--digits", "3"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "prompts,samples,mean,half_width\n1,5,0.6,0.429\n");
}

#[test]
fn missing_metric_is_a_data_error() {
    let dir = fixture_dir();
    let o = tokenloss(
        dir.path(),
        &[
            "correlate",
            "--manifest",
            "manifest.toml",
            "--family",
            "a",
            "--metric",
            "bleu",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["message"].as_str().unwrap().contains("bleu"));
}
