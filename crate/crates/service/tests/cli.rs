use std::path::Path;

use clap::Parser;
use polestar_service::cli::{run, Cli};

fn polestar(args: &[&str]) {
    let argv = std::iter::once("polestar").chain(args.iter().copied());
    run(Cli::parse_from(argv)).unwrap_or_else(|e| panic!("polestar {}: {e:#}", args.join(" ")));
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn offline_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (data, ptg, cache, log, model, report) =
        (p(d, "data"), p(d, "ptg.bin"), p(d, "cache.bin"), p(d, "queries.jsonl"), p(d, "model.bin"), p(d, "report.json"));
    std::fs::write(d.join("weights.toml"), "transfer_penalty_s = 90.0\n").unwrap();
    std::fs::write(d.join("params.toml"), "n_trees = 20\nbeta = 5.0\n").unwrap();

    polestar(&["synth-city", "--preset", "small", "--out", &data]);
    polestar(&["compile", "--data", &data, "--out", &ptg, "--config", &p(d, "weights.toml")]);
    polestar(&["bind-cache", "--data", &data, "--ptg", &ptg, "--lambda", "1500", "--out", &cache]);
    polestar(&["synth-log", "--data", &data, "--ptg", &ptg, "--cache", &cache, "--n", "150", "--seed", "3", "--out", &log]);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 150);
    polestar(&["train", "--log", &log, "--data", &data, "--ptg", &ptg, "--out", &model, "--params", &p(d, "params.toml")]);
    polestar(&["importance", "--model", &model]);
    polestar(&["eval", "--ptg", &ptg, "--cache", &cache, "--model", &model, "--log", &log, "--data", &data, "--out", &report]);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let methods: Vec<&str> = r["ndcg"].as_array().unwrap().iter().map(|m| m["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["Shortest", "Fastest", "LeastTransfer", "Reranker"]);

    std::fs::write(d.join("engine.toml"), "ptg = \"ptg.bin\"\ncache = \"cache.bin\"\nmodel = \"model.bin\"\ndata = \"data\"\n")
        .unwrap();
    let first: serde_json::Value = serde_json::from_str(std::fs::read_to_string(&log).unwrap().lines().next().unwrap()).unwrap();
    let ll = |k: &str| format!("{},{}", first[k]["lat"], first[k]["lon"]);
    let t = first["timestamp"].to_string();
    polestar(&["query", "--config", &p(d, "engine.toml"), "--o", &ll("origin"), "--d", &ll("destination"), "--t", &t]);
}

#[test]
fn stale_graph_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (a, b) = (p(d, "a"), p(d, "b"));
    polestar(&["synth-city", "--preset", "fixture", "--out", &a]);
    polestar(&["synth-city", "--preset", "small", "--out", &b]);
    polestar(&["compile", "--data", &a, "--out", &p(d, "ptg.bin")]);
    let err = run(Cli::parse_from(["polestar", "bind-cache", "--data", &b, "--ptg", &p(d, "ptg.bin"), "--out", &p(d, "c.bin")]))
        .unwrap_err();
    assert!(err.to_string().contains("different datasets"), "{err}");
}
