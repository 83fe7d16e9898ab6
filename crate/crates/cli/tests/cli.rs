use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

use serde_json::Value;

fn kw2sent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kw2sent"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}\nstderr: {}", o.status.code(), stderr(o));
    stdout(o)
}

fn json(o: &Output) -> Value {
    serde_json::from_str(&ok(o)).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Trained {
    _dir: tempfile::TempDir,
    data: PathBuf,
    model: PathBuf,
    baseline: PathBuf,
}

/// A toy dataset and two briefly trained checkpoints shared by the tests.
fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("toy.jsonl");
        ok(&kw2sent(&["prepare", "--toy", "120", "--seed", "3", "--out", p(&data)]));
        let small = [
            "--preset", "desk", "--epochs", "2", "--quiet", "--set", "word_dim=16", "--set", "keyword_dim=16",
            "--set", "decoder_dim=16", "--set", "template_hidden=8", "--set", "attention_dim=8",
        ];
        let run = |name: &str, extra: &[&str]| {
            let out = dir.path().join(name);
            let mut args = vec!["train", "--data", p(&data), "--dev", p(&data), "--out-dir", p(&out)];
            args.extend_from_slice(&small);
            args.extend_from_slice(extra);
            let o = kw2sent(&args);
            ok(&o);
            out
        };
        let model = run("tmpl", &[]).join("final.ckpt");
        let baseline = run("base", &["--no-template"]).join("final.ckpt");
        Trained {
            _dir: dir,
            data,
            model,
            baseline,
        }
    })
}

#[test]
fn help_exits_zero_and_unknown_flag_is_usage_error() {
    assert_eq!(kw2sent(&["--help"]).status.code(), Some(0));
    assert_eq!(kw2sent(&["stats", "--bogus"]).status.code(), Some(1));
    assert_eq!(kw2sent(&[]).status.code(), Some(1));
}

#[test]
fn missing_input_file_is_data_error() {
    let o = kw2sent(&["stats", "--data", "/nonexistent/file.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no such file"));
}

#[test]
fn raw_input_without_tagger_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    std::fs::write(&raw, "the dog ran .\n").unwrap();
    let o = kw2sent(&["prepare", "--input", p(&raw), "--out", p(&dir.path().join("o.jsonl"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn prepare_raw_text_writes_dataset_vocab_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.txt");
    std::fs::write(&raw, "the dog ran .\nthe old cat will eat the apple .\n\nthe the .\nthe girls like the books .\n")
        .unwrap();
    let out = dir.path().join("d.jsonl");
    let summary = json(&kw2sent(&["prepare", "--input", p(&raw), "--tagger", "lexicon", "--out", p(&out)]));
    assert_eq!(summary["sentences"], 4);
    assert_eq!(summary["kept"], 3);
    assert_eq!(summary["dropped_no_content"], 1);

    let lines = std::fs::read_to_string(&out).unwrap();
    assert_eq!(lines.lines().count(), 3);
    let first: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["template"], serde_json::json!(["DT", "NN", "VBD", "."]));

    let vocab = std::fs::read_to_string(dir.path().join("d.jsonl.vocab")).unwrap();
    assert!(vocab.contains("apple"));

    let file_stats: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.jsonl.stats.json")).unwrap()).unwrap();
    let cmd_stats = json(&kw2sent(&["stats", "--data", p(&out)]));
    assert_eq!(file_stats["count"], 3);
    assert_eq!(file_stats["count"], cmd_stats["count"]);
    assert_eq!(file_stats["avg_keywords"], cmd_stats["avg_keywords"]);
    assert_eq!(file_stats["avg_sentence_length"], cmd_stats["avg_sentence_length"]);
    assert_eq!(file_stats["dropped_no_content"], 1);
}

#[test]
fn train_writes_artifacts() {
    let t = trained();
    let dir = t.model.parent().unwrap();
    for f in ["final.ckpt", "last.ckpt", "best.ckpt", "history.csv", "config.txt"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let hist = std::fs::read_to_string(dir.join("history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 3);
    assert!(hist.starts_with("epoch,train_loss,dev_bleu,dev_posmatch"));
}

#[test]
fn train_rejects_unknown_config_key() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let o = kw2sent(&[
        "train", "--data", p(&t.data), "--out-dir", p(dir.path()), "--set", "learning_rate=0.1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("known keys"));
}

#[test]
fn generate_output_has_template_length() {
    let t = trained();
    let out = ok(&kw2sent(&[
        "generate", "--model", p(&t.model), "--keywords", "dog,apple,eat", "--template", "DT NN VBD DT NN .",
    ]));
    assert_eq!(out.split_whitespace().count(), 6);
}

#[test]
fn exemplar_matches_explicit_template() {
    let t = trained();
    let a = ok(&kw2sent(&[
        "generate", "--model", p(&t.model), "--keywords", "cat,ball", "--template", "DT NN VBZ DT NN .",
    ]));
    let b = ok(&kw2sent(&[
        "generate", "--model", p(&t.model), "--keywords", "cat,ball", "--exemplar", "the dog likes the book .",
    ]));
    assert_eq!(a, b);
}

#[test]
fn beam_one_is_default_greedy() {
    let t = trained();
    let base = ["generate", "--model", p(&t.model), "--keywords", "girl,run", "--template", "DT NN VBD RB ."];
    let a = ok(&kw2sent(&base));
    let mut with = base.to_vec();
    with.extend(["--beam", "1"]);
    assert_eq!(a, ok(&kw2sent(&with)));
    let mut zero = base.to_vec();
    zero.extend(["--beam", "0"]);
    assert_eq!(kw2sent(&zero).status.code(), Some(1));
    let mut beam = base.to_vec();
    beam.extend(["--beam", "3"]);
    assert_eq!(ok(&kw2sent(&beam)).split_whitespace().count(), 5);
}

#[test]
fn unknown_template_tag_lists_known_tags() {
    let t = trained();
    let o = kw2sent(&["generate", "--model", p(&t.model), "--keywords", "dog", "--template", "DT XYZ ."]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("XYZ") && e.contains("VBZ") && e.contains("NOUN"), "{e}");
}

#[test]
fn empty_keywords_rejected() {
    let t = trained();
    let o = kw2sent(&["generate", "--model", p(&t.model), "--keywords", " , ", "--template", "DT NN ."]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn template_model_requires_template() {
    let t = trained();
    let o = kw2sent(&["generate", "--model", p(&t.model), "--keywords", "dog"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn baseline_generates_without_template() {
    let t = trained();
    let out = ok(&kw2sent(&["generate", "--model", p(&t.baseline), "--keywords", "dog,ball"]));
    assert!(out.split_whitespace().count() <= 30);
}

#[test]
fn generate_trace_and_show_lambda() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    let out = ok(&kw2sent(&[
        "generate", "--model", p(&t.model), "--keywords", "boy,book", "--template", "DT NN VBD DT NN .", "--trace",
        p(&trace), "--show-lambda",
    ]));
    let tokens: Vec<&str> = out.split_whitespace().collect();
    assert_eq!(tokens.len(), 6);
    assert!(tokens.iter().all(|t| t.contains('/')));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(v["steps"].as_array().unwrap().len(), 6);
    assert_eq!(v["keywords"], serde_json::json!(["boy", "book"]));
}

fn repl(model: &Path, input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_kw2sent"))
        .args(["repl", "--model", p(model)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn repl_answers(o: &Output) -> Vec<String> {
    stdout(o)
        .split("> ")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

#[test]
fn repl_recovers_from_errors_and_quits() {
    let t = trained();
    let o = repl(
        &t.model,
        "dog,apple | DT NN VBD DT NN .\n | DT NN .\ndog,apple | DT NN VBD DT NN .\ncat | the dog ran .\n:quit\nnever | DT .\n",
    );
    assert_eq!(o.status.code(), Some(0));
    let ans = repl_answers(&o);
    assert_eq!(ans.len(), 4, "{ans:?}");
    assert_eq!(ans[0].split_whitespace().count(), 5 + 1);
    assert!(ans[1].starts_with("error:"));
    assert_eq!(ans[0], ans[2]);
    assert_eq!(ans[3].split_whitespace().count(), 4);
}

#[test]
fn repl_exits_on_eof() {
    let t = trained();
    let o = repl(&t.model, "");
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn evaluate_reports_metrics() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let audit = dir.path().join("audit.jsonl");
    let v = json(&kw2sent(&["evaluate", "--model", p(&t.model), "--data", p(&t.data), "--audit", p(&audit)]));
    for k in ["bleu", "meteor_lite", "rouge_l", "posmatch", "posmatch_binary"] {
        let x = v[k].as_f64().unwrap_or_else(|| panic!("{k} missing"));
        assert!((0.0..=100.0).contains(&x), "{k} = {x}");
    }
    assert_eq!(v["n_examples"], 120);
    assert_eq!(std::fs::read_to_string(&audit).unwrap().lines().count(), 120);

    let base = json(&kw2sent(&["evaluate", "--model", p(&t.baseline), "--data", p(&t.data)]));
    assert!(base["posmatch"].is_null());

    let rev = json(&kw2sent(&["evaluate", "--model", p(&t.model), "--data", p(&t.data), "--reverse"]));
    for k in ["bleu", "meteor_lite", "rouge_l"] {
        assert_eq!(rev["deltas"][k].as_f64(), Some(0.0), "{k}");
    }
    let sim = json(&kw2sent(&["evaluate", "--model", p(&t.model), "--data", p(&t.data), "--scenario", "similar"]));
    assert_eq!(sim["scenario"], "similar");
    let bad = kw2sent(&["evaluate", "--model", p(&t.model), "--data", p(&t.data), "--scenario", "nearest"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn inspect_traces_align_with_templates() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traces.jsonl");
    let summary = json(&kw2sent(&["inspect", "--model", p(&t.model), "--input", p(&t.data), "--out", p(&out)]));
    assert_eq!(summary["examples"], 120);
    assert!(summary["lambda"]["content_count"].as_u64().unwrap() > 0);
    for line in std::fs::read_to_string(&out).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let steps = v["steps"].as_array().unwrap();
        assert_eq!(steps.len(), v["template"].as_array().unwrap().len());
        for s in steps {
            let lambda = s["lambda"].as_f64().unwrap();
            let sum: f64 = s["lambda_alpha"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((sum - lambda).abs() < 1e-5, "{sum} vs {lambda}");
        }
    }
}

#[test]
fn corrupt_checkpoint_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let o = kw2sent(&["generate", "--model", p(&bad), "--keywords", "dog", "--template", "DT NN ."]);
    assert_eq!(o.status.code(), Some(2));
}
