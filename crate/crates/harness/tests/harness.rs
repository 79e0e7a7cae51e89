use std::path::Path;

use tbma_harness::config::{ExperimentConfig, Method, PointSelection};
use tbma_harness::plot::{build_series, plot_results, SeriesKey, XAxis};
use tbma_harness::report::cluster_report;
use tbma_harness::run::{evaluate_loaded, run_method, write_run_dir};
use tbma_harness::sweep::{read_results, run_dir, summarize, sweep, SweepOptions, RESULTS_HEADER};
use tbma_harness::{persist, HarnessError};

fn smoke() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json");
    ExperimentConfig::load(&path).unwrap()
}

fn schema_path(text: &str) -> String {
    match ExperimentConfig::from_json(text) {
        Err(HarnessError::Schema { path, .. }) => path,
        other => panic!("expected a schema error, got {other:?}"),
    }
}

fn with(edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    edit(&mut v);
    v.to_string()
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let config = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(config.name, path.file_stem().unwrap().to_str().unwrap());
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn config_errors_name_the_field() {
    assert_eq!(
        schema_path(&with(|v| v["source"]["observations"]["extra"] = 1.into())),
        "source.observations"
    );
    assert_eq!(
        schema_path(&with(|v| v["train"]["epochs"] = "ten".into())),
        "train.epochs"
    );
    assert_eq!(
        schema_path(&with(|v| v["sweep"]["channels"][1]["kind"] = "awgn".into())),
        "sweep.channels[1].kind"
    );
    assert_eq!(schema_path(&with(|v| v["protocols"][0] = "ib".into())), "protocols[0]");
    assert_eq!(schema_path(&with(|v| v["bogus"] = true.into())), "bogus");
    assert_eq!(schema_path(&with(|v| v["eval_samples"] = 999.into())), "eval_samples");
    assert_eq!(schema_path(&with(|v| v["schema_version"] = 2.into())), "schema_version");
    assert_eq!(
        schema_path(&with(|v| v["sweep"]["seeds"] = serde_json::json!([]))),
        "sweep"
    );
    assert_eq!(
        schema_path(&with(|v| v["source"]["prior"] = serde_json::json!([0.5, 0.5]))),
        "source.prior"
    );
    assert_eq!(schema_path(&with(|v| v["fc_bins"] = 7.into())), "fc_bins");
    assert_eq!(
        schema_path(&with(|v| v["protocols"] = serde_json::json!(["fc_ib_tbma"]))),
        "fc_bins"
    );
}

#[test]
fn output_dir_precedence() {
    let mut config = smoke();
    config.output_dir = Some("from_config".into());
    assert_eq!(config.output_dir(Some(Path::new("explicit"))), Path::new("explicit"));
    // The environment override sits between the two; it is process-global,
    // so it is only checked here.
    std::env::set_var("TBMA_OUT_DIR", "from_env");
    assert_eq!(config.output_dir(None), Path::new("from_env"));
    std::env::remove_var("TBMA_OUT_DIR");
    assert_eq!(config.output_dir(None), Path::new("from_config"));
    config.output_dir = None;
    assert_eq!(config.output_dir(None), Path::new("out"));
}

#[test]
fn persisted_systems_evaluate_bit_identically() {
    let config = smoke();
    let point = config
        .select_point(&PointSelection {
            channel: Some("rician".into()),
            seed: Some(5),
            ..Default::default()
        })
        .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    for method in [Method::IbTbma, Method::CibTbma, Method::GaussAnn] {
        let run = run_method(&config, &point, method, None).unwrap();
        let dir = run_dir(tmp.path(), &config.name, &point, method);
        write_run_dir(&dir, &config, &point, &run).unwrap();
        let loaded = persist::load(&dir.join("model.tbma")).unwrap();
        let original = &run.outcome.as_ref().unwrap().system;
        assert_eq!(loaded.codebook(), original.codebook());
        assert_eq!(loaded.decoder, original.decoder);
        let again = evaluate_loaded(&config, &point, &loaded).unwrap();
        assert_eq!(again.mse.to_bits(), run.mse.mse.to_bits());
        assert_eq!(again.stderr.to_bits(), run.mse.stderr.to_bits());
        if method == Method::CibTbma {
            let phase_one = persist::load(&dir.join("phase1.tbma")).unwrap();
            let report = cluster_report(&phase_one, &[]).unwrap();
            assert!(!report.is_empty() && report.iter().all(|e| e.valid));
            assert!(dir.join("clusters.csv").exists());
        }
    }
}

#[test]
fn missing_model_is_a_file_error() {
    let err = persist::load(Path::new("/nonexistent/model.tbma")).unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }));
}

#[test]
fn sweep_is_deterministic_and_plots_round_trip() {
    let config = smoke();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = sweep(&config, a.path(), &SweepOptions { save_models: true }).unwrap();
    let rb = sweep(&config, b.path(), &SweepOptions { save_models: true }).unwrap();
    assert!(ra.failures.is_empty(), "{:?}", ra.failures);
    // 2 channels x 2 K x 1 SNR x 2 seeds x 4 protocols.
    assert_eq!(ra.rows.len(), 32);
    let results_a = std::fs::read(&ra.results_path).unwrap();
    assert_eq!(results_a, std::fs::read(&rb.results_path).unwrap());
    assert_eq!(
        std::fs::read(&ra.summary_path).unwrap(),
        std::fs::read(&rb.summary_path).unwrap()
    );
    let first_line = String::from_utf8(results_a).unwrap().lines().next().unwrap().to_owned();
    assert_eq!(first_line, RESULTS_HEADER.join(","));
    assert!(!a.path().join("staging").exists());

    for row in &ra.rows {
        assert!(row.mse >= 0.0 && row.stderr >= 0.0);
        let compressed = row.protocol == "cib_tbma" || row.protocol == "fc_ib_tbma";
        assert_eq!(row.m_prime.is_some(), compressed);
        let point_dir = a.path().join("runs/smoke").join(format!(
            "{}_K{}_snr{}_seed{}",
            row.channel, row.sensors, row.snr_db, row.seed
        ));
        let model_a = std::fs::read(point_dir.join(&row.protocol).join("model.tbma")).unwrap();
        let model_b = std::fs::read(
            b.path()
                .join(point_dir.strip_prefix(a.path()).unwrap())
                .join(&row.protocol)
                .join("model.tbma"),
        )
        .unwrap();
        assert_eq!(model_a, model_b);
    }
    // FC-IB-TBMA bins with the M' that CIB-TBMA found at the same point.
    for pair in ra.rows.chunks(4) {
        assert_eq!(pair[1].protocol, "cib_tbma");
        assert_eq!(pair[2].protocol, "fc_ib_tbma");
        assert_eq!(pair[1].m_prime, pair[2].m_prime);
    }

    let rows = read_results(&ra.results_path).unwrap();
    assert_eq!(rows, ra.rows);
    assert_eq!(summarize(&rows), ra.summary);
    let svgs = plot_results(&ra.results_path, a.path(), XAxis::Sensors, SeriesKey::Protocol).unwrap();
    assert_eq!(svgs.len(), 2);
    for svg in &svgs {
        let text = std::fs::read_to_string(svg).unwrap();
        assert!(text.starts_with("<svg"));
        for protocol in ["ib_tbma", "cib_tbma", "fc_ib_tbma", "gauss_ann"] {
            assert!(text.contains(protocol), "{protocol} missing from {}", svg.display());
        }
    }
    let gaussian: Vec<_> = rows.iter().filter(|r| r.channel == "gaussian").cloned().collect();
    let series = build_series(&gaussian, XAxis::Sensors, SeriesKey::Protocol);
    assert_eq!(series.len(), 4);
    let ib = series.iter().find(|s| s.label == "ib_tbma").unwrap();
    let expected: f64 = gaussian
        .iter()
        .filter(|r| r.protocol == "ib_tbma" && r.sensors == 4)
        .map(|r| r.mse)
        .sum::<f64>()
        / 2.0;
    assert_eq!(ib.points[0], (4.0, expected));
}

#[test]
fn summary_statistics() {
    let mut rows = Vec::new();
    for (seed, mse) in [(1, 0.1), (2, 0.3), (3, f64::NAN)] {
        rows.push(tbma_harness::sweep::ResultRow {
            protocol: "ib_tbma".into(),
            channel: "gaussian".into(),
            sensors: 4,
            snr_db: 0.0,
            seed,
            mse,
            stderr: 0.0,
            m_prime: None,
        });
    }
    let s = summarize(&rows);
    assert_eq!(s.len(), 1);
    assert_eq!((s[0].runs, s[0].failed), (3, 1));
    assert!((s[0].mse_mean - 0.2).abs() < 1e-15);
    // sd 0.1414.. over sqrt(2)
    assert!((s[0].mse_se - 0.1).abs() < 1e-12);
}

#[test]
fn failed_runs_become_failed_rows() {
    let mut config = smoke();
    // A Rician channel cannot carry the exact likelihood decoder, so the
    // baseline fails while the sweep carries on.
    config.protocols = vec![Method::IbTbma, Method::Ml];
    config.source.observations = tbma_harness::config::ObservationConfig::Bernoulli;
    config.sweep.sensors = vec![4];
    config.sweep.seeds = vec![1];
    let tmp = tempfile::tempdir().unwrap();
    let report = sweep(&config, tmp.path(), &SweepOptions::default()).unwrap();
    assert_eq!(report.rows.len(), 4);
    let failed: Vec<_> = report.rows.iter().filter(|r| r.failed()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(
        (failed[0].protocol.as_str(), failed[0].channel.as_str()),
        ("ml", "rician")
    );
    assert_eq!(report.failures.len(), 1);
    assert!(tmp.path().join("smoke_failures.csv").exists());
    let reread = read_results(&report.results_path).unwrap();
    assert!(reread[3].mse.is_nan());
}
