use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use expertscope::corpus::{TokenizedCorpus, Tokenizer};
use expertscope::model::{FfnKind, ModelConfig, NormKind, PlantSpec};
use serde_json::{json, Value};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expertscope"))
        .args(args)
        .env_remove("EXPERTSCOPE_LOG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn write_json(p: &Path, v: &impl serde::Serialize) -> PathBuf {
    std::fs::write(p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_path_buf()
}

fn moe_config(n_experts: usize, n_active: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        d_model: 64,
        n_layers: 2,
        n_heads: 4,
        d_ff: 64,
        vocab_size: 1024,
        n_experts,
        n_active,
        n_shared: 0,
        ffn_kind: vec![FfnKind::Moe; 2],
        norm_kind: NormKind::Rms,
        seed,
    }
}

#[test]
fn inspect_reports_the_olmoe_toy_sparsity() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    ok(&["model", "init", "--preset", "olmoe-toy", "--out", s(&m)]);
    let text = ok(&["model", "inspect", "--model", s(&m)]);
    assert!(text.contains("N=64 N_A=8"), "{text}");
    assert!(text.contains("N_A/N = 0.125"), "{text}");
    let info: Value = serde_json::from_str(&ok(&["model", "inspect", "--model", s(&m), "--json"])).unwrap();
    assert_eq!(info["routing_sparsity"], json!(0.125));
}

#[test]
fn plant_round_trips_and_reruns_are_flagged_as_reproductions() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    let cfg = write_json(&dir.path().join("config.json"), &moe_config(8, 2, 3));
    let spec = PlantSpec {
        layer: 1,
        expert: 6,
        neuron: 2,
        trigger_tokens: vec![810, 770],
        concept_tokens: None,
        promoted_token: 810,
    };
    let specs = write_json(&dir.path().join("specs.json"), &json!({ "plants": [spec] }));
    let args = ["model", "plant", "--model-config", s(&cfg), "--specs", s(&specs), "--out", s(&m)];
    ok(&args);
    let first = read_json(&m.join("manifest.json"));
    assert_eq!(first["reproduction"], json!(false));
    ok(&args);
    let second = read_json(&m.join("manifest.json"));
    assert_eq!(second["reproduction"], json!(true));
    assert_eq!(second["outputs_identical"], json!(true));
    assert_eq!(first["outputs"], second["outputs"]);
    let info: Value = serde_json::from_str(&ok(&["model", "inspect", "--model", s(&m), "--json"])).unwrap();
    assert_eq!(info["config"]["n_experts"], json!(8));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    ok(&["model", "init", "--preset", "small-moe", "--out", s(&m)]);
    let missing = dir.path().join("nope.jsonl");
    let out = dir.path().join("o");
    assert_eq!(code(&["probe", "--model", s(&m), "--corpus", s(&missing), "--out", s(&out)]), 2);
    assert_eq!(code(&["model", "init", "--preset", "huge", "--out", s(&out)]), 2);
    assert_eq!(code(&["specialize", "--model", s(&m), "--k", "2000", "--out", s(&out)]), 2);
    assert_eq!(code(&["probe", "--model", s(&m), "--concepts", "no_such", "--out", s(&out)]), 2);

    let weights = m.join("weights.bin");
    let mut bytes = std::fs::read(&weights).unwrap();
    let n = bytes.len();
    bytes[n / 2] ^= 0xff;
    std::fs::write(&weights, &bytes).unwrap();
    let c = code(&["model", "inspect", "--model", s(&m)]);
    assert!(c != 0);
    std::fs::write(&weights, &bytes[..n / 3]).unwrap();
    assert!(code(&["model", "inspect", "--model", s(&m)]) != 0);
}

#[test]
fn probe_finds_the_planted_site() {
    let dir = tempfile::tempdir().unwrap();
    let tok = Tokenizer::shipped();
    let corpus = TokenizedCorpus::fixture();
    let digits: Vec<u32> = (0..1024u32)
        .filter(|&t| tok.token_bytes(t).iter().any(|b| b.is_ascii_digit()))
        .collect();
    let mut freq = std::collections::HashMap::<u32, usize>::new();
    for doc in &corpus.documents {
        for t in doc {
            *freq.entry(*t).or_default() += 1;
        }
    }
    let mut common: Vec<(u32, usize)> = freq.into_iter().filter(|(t, _)| !digits.contains(t)).collect();
    common.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut triggers = digits.clone();
    triggers.extend(common.iter().take(30).map(|x| x.0));
    let spec = PlantSpec {
        layer: 0,
        expert: 3,
        neuron: 5,
        trigger_tokens: triggers,
        concept_tokens: Some(digits),
        promoted_token: 810,
    };
    let cfg = write_json(&dir.path().join("config.json"), &moe_config(16, 2, 11));
    let specs = write_json(&dir.path().join("specs.json"), &json!({ "plants": [spec] }));
    let m = dir.path().join("m");
    ok(&["model", "plant", "--model-config", s(&cfg), "--specs", s(&specs), "--out", s(&m)]);
    let out = dir.path().join("probe");
    ok(&[
        "probe", "--model", s(&m), "--concepts", "contains_digit", "--k", "1,2", "--plot-data", "--out", s(&out),
    ]);
    let best = read_json(&out.join("best.json"));
    let best = best.as_array().unwrap();
    assert_eq!(best.len(), 2);
    for b in best {
        assert_eq!(b["site"], json!({ "layer": 0, "expert": 3 }), "{b}");
    }
    for f in ["results.csv", "results.json", "plot.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn attribution_commands() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    ok(&["model", "init", "--preset", "small-moe", "--out", s(&m)]);
    let empty = write_json(&dir.path().join("cases.json"), &json!([]));
    let out = dir.path().join("a");
    assert!(code(&["attribute", "cases", "--model", s(&m), "--layer", "0", "--cases", s(&empty), "--out", s(&out)]) != 0);

    let cases = json!([{ "expert": 0, "cases": [
        { "text": "The river ran past the old mill", "trigger": " river", "target": " mill" }
    ]}]);
    let cases = write_json(&dir.path().join("cases1.json"), &cases);
    ok(&["attribute", "cases", "--model", s(&m), "--layer", "0", "--cases", s(&cases), "--out", s(&out)]);
    assert!(out.join("report.json").exists());

    let text = ok(&["attribute", "text", "--model", s(&m), "--text", "The river ran", "--target", " mill"]);
    let v: Value = serde_json::from_str(&text).unwrap();
    let logit = v["logit"].as_f64().unwrap();
    let sum = v["sum_of_components"].as_f64().unwrap();
    assert!((logit - sum).abs() < 1e-5, "{logit} vs {sum}");
}

#[test]
fn specialize_writes_scores_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    ok(&["model", "init", "--preset", "small-moe", "--out", s(&m)]);
    let out = dir.path().join("s");
    ok(&[
        "specialize", "--model", s(&m), "--k", "8,32", "--budget", "4000", "--mc-samples", "20", "--out", s(&out),
    ]);
    let csv = std::fs::read_to_string(out.join("scores.csv")).unwrap();
    // header + 2 kinds x 2 k x 2 layers x 8 experts
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2 * 8, "{csv}");
    assert!(out.join("clusters/k8.json").exists());
    let series = read_json(&out.join("series.json"));
    assert_eq!(series.as_array().unwrap().len(), 2 * 2 * 2);
}

#[test]
fn mock_autointerp_scores_perfectly_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(&dir.path().join("config.json"), &moe_config(8, 2, 3));
    let spec = PlantSpec {
        layer: 1,
        expert: 6,
        neuron: 2,
        trigger_tokens: vec![810, 770, 669, 648, 707],
        concept_tokens: None,
        promoted_token: 810,
    };
    let specs = write_json(&dir.path().join("specs.json"), &json!({ "plants": [spec] }));
    let m = dir.path().join("m");
    ok(&["model", "plant", "--model-config", s(&cfg), "--specs", s(&specs), "--out", s(&m)]);
    let out = dir.path().join("ai");
    let args = ["autointerp", "--model", s(&m), "--mock-endpoint", "ground-truth", "--layers", "1", "--out", s(&out)];
    ok(&args);
    let labels = read_json(&out.join("labels.json"));
    let labeled: Vec<&Value> = labels.as_array().unwrap().iter().filter(|r| r["status"] == "labeled").collect();
    assert!(labeled.iter().any(|r| r["expert"] == json!(6)));
    for r in &labeled {
        assert_eq!(r["f1"], json!(1.0));
    }
    assert!(out.join("transcripts.jsonl").exists());
    let before = std::fs::read(out.join("labels.json")).unwrap();
    ok(&args);
    assert_eq!(before, std::fs::read(out.join("labels.json")).unwrap());
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["reproduction"], json!(true));
    assert_eq!(manifest["outputs_identical"], json!(true));
    assert_eq!(manifest["config"]["mining"]["explainer"], json!(20));
}

#[test]
fn live_endpoint_without_credentials_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    ok(&["model", "init", "--preset", "small-moe", "--out", s(&m)]);
    let endpoint = json!({
        "base_url": "http://127.0.0.1:9/v1/chat/completions",
        "model": "x",
        "auth_env": "EXPERTSCOPE_TEST_UNSET_KEY"
    });
    let endpoint = write_json(&dir.path().join("endpoint.json"), &endpoint);
    let out = dir.path().join("ai");
    let c = Command::new(env!("CARGO_BIN_EXE_expertscope"))
        .args(["autointerp", "--model", s(&m), "--endpoint", s(&endpoint), "--out", s(&out)])
        .env_remove("EXPERTSCOPE_TEST_UNSET_KEY")
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(c.code(), Some(2));
}

#[test]
fn tokenizer_encode_prints_ids() {
    let v: Value = serde_json::from_str(&ok(&["tokenizer", "encode", "--text", " river"])).unwrap();
    assert_eq!(v["ids"], json!([810]), "{v}");
}
