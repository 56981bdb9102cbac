mod common;

use std::fs;

use common::{fixed_text, small_config_in, snapshot};
use lansagnn::dual::SelfLoopMode;
use lansagnn::edge_filter::FilterDecision;
use lansagnn::embed::EmbeddingMatrix;
use lansagnn::gateway::{BackendConfig, BackendKind};
use lansagnn::gnn::{normalize_adjacency, run_protocol, DenseMatrix};
use lansagnn::graph::EdgeCap;
use lansagnn::pipeline::{sweep, DatasetConfig, SyntheticSpec, Pipeline, PipelineError, Stage, StageStatus, SweepAxis};

#[test]
fn rerun_skips_every_stage() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config_in(root.path());
    let mut p = Pipeline::open(cfg.clone(), None).unwrap();
    let first = p.run_all().unwrap();
    assert!(first.iter().all(|r| r.status == StageStatus::Ran), "{first:?}");
    assert!(p.dispatch_count() > 0);
    drop(p);

    let mut p = Pipeline::open(cfg, None).unwrap();
    let second = p.run_all().unwrap();
    assert!(second.iter().all(|r| r.status == StageStatus::UpToDate));
    assert_eq!(second[0].to_string(), "ingest: skipped (up-to-date)");
    assert_eq!(p.dispatch_count(), 0);
}

#[test]
fn warm_cache_fresh_run_dir_is_identical_without_dispatches() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config_in(root.path());
    let a = root.path().join("a");
    let b = root.path().join("b");
    let mut p = Pipeline::open(cfg.clone(), Some(a.clone())).unwrap();
    p.run_all().unwrap();
    drop(p);
    let mut q = Pipeline::open(cfg, Some(b.clone())).unwrap();
    q.run_all().unwrap();
    assert_eq!(q.dispatch_count(), 0);
    assert_eq!(snapshot(&a), snapshot(&b));
}

#[test]
fn stages_need_their_upstream() {
    let root = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(small_config_in(root.path()), None).unwrap();
    p.run_stage(Stage::Ingest).unwrap();
    p.run_stage(Stage::Split).unwrap();
    let e = p.run_stage(Stage::Extract).unwrap_err();
    assert!(matches!(e, PipelineError::MissingUpstream(Stage::Sample)), "{e:?}");
    assert_eq!(e.exit_code(), 3);
    assert!(matches!(p.run_stage(Stage::Eval), Err(PipelineError::MissingUpstream(Stage::Sample))));
}

#[test]
fn eval_reproduces_from_artifacts() {
    let root = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(small_config_in(root.path()), None).unwrap();
    p.run_all().unwrap();
    let eval_dir = p.stage_dir(Stage::Eval);
    let before = snapshot(&eval_dir);
    fs::remove_dir_all(&eval_dir).unwrap();
    assert_eq!(p.run_stage(Stage::Eval).unwrap().status, StageStatus::Ran);
    assert_eq!(snapshot(&eval_dir), before);
    let table = fs::read_to_string(eval_dir.join("report.txt")).unwrap();
    assert!(table.starts_with("Variant"), "{table}");
    assert!(table.contains(&p.report().unwrap().cell()));
}

#[test]
fn tampered_output_is_rebuilt() {
    let root = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(small_config_in(root.path()), None).unwrap();
    p.run_all().unwrap();
    let f = p.stage_dir(Stage::Sample).join("neighborhoods.json");
    fs::write(&f, "{}").unwrap();
    assert_eq!(p.run_stage(Stage::Sample).unwrap().status, StageStatus::Ran);
    // Rewritten bytes are identical, so downstream stays up to date.
    assert_eq!(p.run_stage(Stage::Filter).unwrap().status, StageStatus::UpToDate);
}

#[test]
fn report_matches_direct_protocol() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config_in(root.path());
    let mut p = Pipeline::open(cfg.clone(), None).unwrap();
    p.run_all().unwrap();
    let (emb, _) = EmbeddingMatrix::load(&p.stage_dir(Stage::Embed).join("embeddings.bin")).unwrap();
    let x = DenseMatrix::from_f32(emb.rows(), emb.dim(), emb.as_slice()).unwrap();
    let pairs: Vec<_> = p.neighborhoods().unwrap().pairs().collect();
    let adj = normalize_adjacency(&pairs, x.rows()).unwrap();
    let g = p.graph().unwrap();
    let direct = run_protocol(
        &x,
        Some(&adj),
        g.labels().unwrap(),
        g.num_classes(),
        cfg.split,
        cfg.base_seed,
        cfg.runs,
        &cfg.train,
        p.fingerprint(),
    )
    .unwrap();
    assert_eq!(direct, p.report().unwrap());
}

#[test]
fn config_changes_move_the_run_dir() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config_in(root.path());
    let a = Pipeline::open(cfg.clone(), None).unwrap().run_dir().to_owned();
    let mut other = cfg.clone();
    other.k = EdgeCap::Limited(3);
    let b = Pipeline::open(other, None).unwrap().run_dir().to_owned();
    let mut moved = cfg;
    moved.extract_backend.max_inflight = 1;
    moved.run_root = root.path().join("runs");
    let c = Pipeline::open(moved, None).unwrap().run_dir().to_owned();
    assert_ne!(a, b);
    assert_eq!(a, c);
}

#[test]
fn second_open_of_a_locked_dir_fails() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config_in(root.path());
    let _held = Pipeline::open(cfg.clone(), None).unwrap();
    assert!(matches!(Pipeline::open(cfg, None), Err(PipelineError::Locked(_))));
}

#[test]
fn replay_misses_make_a_partial_run() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small_config_in(root.path());
    cfg.ablations.no_finetune = true;
    cfg.extract_backend = BackendConfig {
        replay_of: Some(BackendKind::OracleExtract),
        ..BackendConfig::new(BackendKind::Replay, root.path().join("empty-cache"))
    };
    let mut p = Pipeline::open(cfg.clone(), None).unwrap();
    let reports = p.run_all().unwrap();
    let extract = reports.iter().find(|r| r.stage == Stage::Extract).unwrap();
    assert!(matches!(extract.status, StageStatus::Partial { gaps } if gaps > 0));
    assert_eq!(reports.iter().find(|r| r.stage == Stage::Kb).unwrap().status, StageStatus::Disabled);
    let m = p.manifest(Stage::Extract).unwrap().unwrap();
    assert!(!m.gaps.is_empty());
    // Partial stages are retried on rerun.
    assert!(matches!(p.run_stage(Stage::Extract).unwrap().status, StageStatus::Partial { .. }));

    // Filling the cache with the real oracle lets the replay run complete.
    drop(p);
    let mut warm = cfg.clone();
    warm.extract_backend = BackendConfig::new(BackendKind::OracleExtract, root.path().join("empty-cache"));
    Pipeline::open(warm, Some(root.path().join("warm"))).unwrap().run_all().unwrap();
    let mut p = Pipeline::open(cfg, None).unwrap();
    assert_eq!(p.run_stage(Stage::Extract).unwrap().status, StageStatus::Ran);
    assert_eq!(p.dispatch_count(), 0);
}

#[test]
fn unreachable_backend_is_exhausted() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small_config_in(root.path());
    cfg.ablations.no_finetune = true;
    std::env::set_var("PIPELINE_TEST_KEY", "k");
    cfg.extract_backend = BackendConfig {
        max_retries: 0,
        api_key_env_var: "PIPELINE_TEST_KEY".into(),
        ..BackendConfig::http("http://127.0.0.1:9", "m", root.path().join("c"))
    };
    let mut p = Pipeline::open(cfg, None).unwrap();
    let e = p.run_all().unwrap_err();
    assert!(matches!(e, PipelineError::BackendExhausted(_)), "{e:?}");
    assert_eq!(e.exit_code(), 4);
}

#[test]
fn self_loop_fallback_covers_isolated_nodes() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small_config_in(root.path());
    cfg.k = EdgeCap::Limited(1);
    cfg.dataset = DatasetConfig::Synthetic(SyntheticSpec { nodes_per_class: 25, p_in: 0.03, p_out: 0.0, ..SyntheticSpec::default() });
    cfg.self_loop_mode = SelfLoopMode::FallbackOnly;
    let mut p = Pipeline::open(cfg.clone(), None).unwrap();
    p.run_all().unwrap();
    let hoods = p.neighborhoods().unwrap();
    let isolated: Vec<usize> = (0..hoods.lists.len()).filter(|&i| hoods.lists[i].is_empty()).collect();
    let msgs = p.messages().unwrap();
    let selves: Vec<usize> = msgs.iter().filter(|((i, j), _)| i == j).map(|((i, _), _)| i).collect();
    assert_eq!(selves, isolated);
    assert!(!isolated.is_empty(), "fixture should have isolated nodes");
    drop(p);

    cfg.self_loop_mode = SelfLoopMode::Full;
    let mut p = Pipeline::open(cfg, None).unwrap();
    p.run_all().unwrap();
    let n = p.graph().unwrap().num_nodes();
    assert_eq!(p.messages().unwrap().iter().filter(|((i, j), _)| i == j).count(), n);
}

#[test]
fn without_origin_text_silent_nodes_get_zero_rows() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small_config_in(root.path());
    cfg.k = EdgeCap::Limited(1);
    cfg.ablations.no_origin_text = true;
    let mut p = Pipeline::open(cfg, None).unwrap();
    p.run_all().unwrap();
    let (emb, _) = EmbeddingMatrix::load(&p.stage_dir(Stage::Embed).join("embeddings.bin")).unwrap();
    let msgs = p.messages().unwrap();
    for i in 0..emb.rows() {
        let zero = emb.row(i).iter().all(|&v| v == 0.0);
        assert_eq!(zero, msgs.incoming(i).is_empty(), "node {i}");
    }
}

#[test]
fn mlp_ablation_ignores_the_graph() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small_config_in(root.path());
    cfg.ablations.no_es = true;
    let mut p = Pipeline::open(cfg, None).unwrap();
    p.run_all().unwrap();
    assert!(fs::read_to_string(p.stage_dir(Stage::Eval).join("report.txt")).unwrap().contains("MLP"));
}

#[test]
fn k_sweep_is_monotone_and_shares_cache() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config_in(root.path());
    let values: Vec<String> = ["1", "3"].iter().map(|s| s.to_string()).collect();
    let result = sweep(&cfg, SweepAxis::K, &values).unwrap();
    assert_eq!(result.rows.len(), 2);
    assert!(result.rows[0].messages <= result.rows[1].messages);
    let table = result.render();
    assert_eq!(table.lines().count(), 4, "{table}");
    // Every request of the second sweep is already cached.
    assert_eq!(sweep(&cfg, SweepAxis::K, &values).unwrap().dispatches, 0);
    assert!(matches!(sweep(&cfg, SweepAxis::K, &[]), Err(PipelineError::ConfigInvalid { .. })));
    assert!(matches!(sweep(&cfg, SweepAxis::K, &["zero".into()]), Err(PipelineError::ConfigInvalid { .. })));
}

#[test]
fn oef_sweep_keeps_only_homophilous_pairs() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config_in(root.path());
    let result = sweep(&cfg, SweepAxis::Oef, &["off".into(), "on".into()]).unwrap();
    assert!(result.rows[1].messages <= result.rows[0].messages);
    let on = &result.rows[1].run_dir;
    let labels: Vec<usize> = fs::read_to_string(on.join("ingest/graph.jsonl"))
        .unwrap()
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter_map(|v| v.get("label").and_then(|l| l.as_u64()).map(|l| l as usize))
        .collect();
    let decisions: Vec<FilterDecision> = fs::read_to_string(on.join("filter/decisions.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!decisions.is_empty());
    for d in &decisions {
        assert_eq!(d.kept, labels[d.i] == labels[d.j], "{d:?}");
    }
    let msgs = fs::read_to_string(on.join("extract/messages.jsonl")).unwrap();
    for line in msgs.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let (i, j) = (v["i"].as_u64().unwrap() as usize, v["j"].as_u64().unwrap() as usize);
        assert_eq!(labels[i], labels[j]);
    }
    assert!(!on.join("../").join(result.rows[0].run_dir.file_name().unwrap()).join("filter/decisions.jsonl").exists());
}

#[test]
fn fixed_text_messages_reach_the_embedder() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small_config_in(root.path());
    fixed_text(&mut cfg, "unrelated");
    let mut p = Pipeline::open(cfg, None).unwrap();
    p.run_all().unwrap();
    assert!(p.messages().unwrap().iter().all(|(_, t)| t == "unrelated"));
}
