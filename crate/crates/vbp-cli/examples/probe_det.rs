use vbp_cli::config::RunConfig;

fn main() {
    let mut cfg = RunConfig::desk();
    cfg.pipeline.prototype_count = 9;
    cfg.pipeline.targen_sequence_length = 200;
    cfg.classifier.epochs = 30;
    cfg.training.epochs = 25;
    cfg.network.layer_sizes = vec![8, 4];
    cfg.network.time_constants = vec![2.0, 8.0];
    cfg.training.batch_size = 2;
    for dir in ["/tmp/acc9/a", "/tmp/acc9/b"] {
        let dir = std::path::Path::new(dir);
        vbp_cli::commands::cmd_synth(&cfg, 5, dir, true).unwrap();
        vbp_cli::commands::cmd_train(&cfg, 5, &dir.join("targets.vbpdata"), Some(0.01), false, 1, &dir.join("train")).unwrap();
        vbp_cli::commands::cmd_generate(&cfg, 5, &dir.join("train/vbp_w0.01.vbpckpt"), Some(50), Some(0), None, false, &dir.join("gen")).unwrap();
    }
}
