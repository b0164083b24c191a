//! Command-level flows over small configurations: file handoff between
//! subcommands, resolved-config reproducibility, and report structure.

use std::path::{Path, PathBuf};

use vbp_cli::commands;
use vbp_cli::config::RunConfig;
use vbp_cli::formats::{load_checkpoint, load_dataset, load_labels};
use vbp_cli::svg::is_well_formed;

fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::desk();
    cfg.pipeline.prototype_count = 9;
    cfg.pipeline.targen_sequence_length = 150;
    cfg.pipeline.targen_epochs = 60;
    cfg.pipeline.total_steps = 1_200;
    cfg.pipeline.slice_length = 120;
    cfg.pipeline.slice_count = 4;
    cfg.classifier.epochs = 50;
    cfg.classifier.layer_sizes = vec![8, 4];
    cfg.classifier.time_constants = vec![2.0, 8.0];
    cfg.network.layer_sizes = vec![10, 5];
    cfg.network.time_constants = vec![2.0, 8.0];
    cfg.training.epochs = 40;
    cfg.training.batch_size = 4;
    cfg.analysis.free_run_steps = 300;
    cfg
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vbp_cli_{}_{}", std::process::id(), name));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn exists(p: &Path) -> bool {
    p.exists()
}

#[test]
fn synth_train_generate_classify_analyze_chain() {
    let cfg = tiny_config();
    let out = temp_dir("chain");

    commands::cmd_synth(&cfg, 7, &out, false).unwrap();
    for file in [
        "config.resolved.toml",
        "pfsm.txt",
        "labels.txt",
        "rendered.vbpdata",
        "targets.vbpdata",
        "targen.vbpckpt",
        "classifier.vbpckpt",
        "targen_log.csv",
        "classifier_log.csv",
        "provenance.txt",
    ] {
        assert!(exists(&out.join(file)), "missing {}", file);
    }
    let targets = load_dataset(&out.join("targets.vbpdata")).unwrap();
    assert_eq!(targets.len(), 4);
    assert_eq!(targets.raw()[0].step_count(), 120);

    // resolved config alone reproduces the dataset
    let reread = RunConfig::from_file(&out.join("config.resolved.toml")).unwrap();
    let out2 = temp_dir("chain_rerun");
    commands::cmd_synth(&reread, reread.seed, &out2, false).unwrap();
    let a = std::fs::read(out.join("targets.vbpdata")).unwrap();
    let b = std::fs::read(out2.join("targets.vbpdata")).unwrap();
    assert_eq!(a, b, "resolved config did not reproduce the dataset");

    let train_out = out.join("train");
    commands::cmd_train(&cfg, 7, &out.join("targets.vbpdata"), None, true, 2, &train_out).unwrap();
    let mut checkpoints = Vec::new();
    for w in &cfg.training.sweep_w {
        let path = train_out.join(format!("vbp_w{}.vbpckpt", w));
        assert!(exists(&path), "missing checkpoint for W={}", w);
        checkpoints.push(path);
    }
    assert!(exists(&train_out.join("sweep_summary.csv")));
    let ck = load_checkpoint(&checkpoints[0]).unwrap();
    assert_eq!(ck.meta_prior_w, 0.0);
    assert_eq!(ck.params.init_latents.len(), 4);

    let gen_out = out.join("gen");
    commands::cmd_generate(&cfg, 7, &checkpoints[0], None, None, None, true, &gen_out).unwrap();
    assert!(exists(&gen_out.join("generated.csv")));
    assert!(exists(&gen_out.join("trace_seq0.csv")));
    let generated = std::fs::read_to_string(gen_out.join("generated.csv")).unwrap();
    // 4 sequences x 120 steps + header
    assert_eq!(generated.lines().count(), 4 * 120 + 1);

    let cls_out = out.join("cls");
    commands::cmd_classify(
        &cfg,
        7,
        &out.join("classifier.vbpckpt"),
        &out.join("targets.vbpdata"),
        &cls_out,
    )
    .unwrap();
    let labels = load_labels(&cls_out.join("labels_seq0.txt")).unwrap();
    assert_eq!(labels.per_step().len(), 120);

    let ana_out = out.join("ana");
    commands::cmd_analyze(
        &cfg,
        7,
        &out.join("targets.vbpdata"),
        &checkpoints,
        &out.join("classifier.vbpckpt"),
        &out.join("targen.vbpckpt"),
        &ana_out,
    )
    .unwrap();
    let table = std::fs::read_to_string(ana_out.join("table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "metric rows + header");
    assert!(lines[0].starts_with("metric,W=0"));
    assert_eq!(lines[0].split(',').count(), 1 + 4, "one column per W");
    assert!(lines[1].starts_with("ads,"));
    assert!(lines[2].starts_with("trigram_kl,"));
    assert!(exists(&ana_out.join("per_sequence.csv")));
    for w in &cfg.training.sweep_w {
        let svg_path = ana_out.join(format!("regen_w{}.svg", w));
        assert!(exists(&svg_path), "missing regen svg for W={}", w);
        let svg = std::fs::read_to_string(&svg_path).unwrap();
        assert!(is_well_formed(&svg), "malformed svg for W={}", w);
        let sigma_path = ana_out.join(format!("sigma_w{}.svg", w));
        assert!(is_well_formed(
            &std::fs::read_to_string(&sigma_path).unwrap()
        ));
    }

    // analyze twice -> identical SVG bytes (deterministic rendering)
    let ana_out2 = out.join("ana2");
    commands::cmd_analyze(
        &cfg,
        7,
        &out.join("targets.vbpdata"),
        &checkpoints,
        &out.join("classifier.vbpckpt"),
        &out.join("targen.vbpckpt"),
        &ana_out2,
    )
    .unwrap();
    let a = std::fs::read(ana_out.join("regen_w0.svg")).unwrap();
    let b = std::fs::read(ana_out2.join("regen_w0.svg")).unwrap();
    assert_eq!(a, b);

    let _ = std::fs::remove_dir_all(&out);
    let _ = std::fs::remove_dir_all(&out2);
}

#[test]
fn gradcheck_command_reports_and_passes() {
    let out = temp_dir("gradcheck");
    commands::cmd_gradcheck(3, 1e-5, Some(&out)).unwrap();
    let report = std::fs::read_to_string(out.join("gradcheck.csv")).unwrap();
    assert!(report.lines().count() > 8);
    assert!(report.contains("stochastic"));
    assert!(report.contains("deterministic-sigma"));
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn generate_rejects_bad_sequence_index() {
    let cfg = tiny_config();
    let out = temp_dir("badseq");
    commands::cmd_synth(&cfg, 3, &out, true).unwrap();
    let train_out = out.join("t");
    commands::cmd_train(
        &cfg,
        3,
        &out.join("targets.vbpdata"),
        Some(0.0),
        false,
        1,
        &train_out,
    )
    .unwrap();
    let err = commands::cmd_generate(
        &cfg,
        3,
        &train_out.join("vbp_w0.vbpckpt"),
        Some(20),
        Some(99),
        None,
        false,
        &out.join("g"),
    );
    assert!(err.is_err());
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn renderer_only_synth_uses_rendered_chunks_as_targets() {
    let cfg = tiny_config();
    let out = temp_dir("ronly");
    commands::cmd_synth(&cfg, 11, &out, true).unwrap();
    let rendered = std::fs::read(out.join("rendered.vbpdata")).unwrap();
    let targets = std::fs::read(out.join("targets.vbpdata")).unwrap();
    assert_eq!(rendered, targets);
    assert!(!exists(&out.join("targen.vbpckpt")));
    let _ = std::fs::remove_dir_all(&out);
}
