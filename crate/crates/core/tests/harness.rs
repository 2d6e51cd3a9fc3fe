use metarep::harness::presets::PRESET_NAMES;
use metarep::harness::record::{read_csv, write_csv};
use metarep::harness::{emit_report, run_sweep, ExperimentConfig, ExperimentKind, ExperimentRecord, ReportFormat, SweepOptions};

#[test]
fn every_preset_is_valid_and_round_trips() {
    for name in PRESET_NAMES {
        let config = ExperimentConfig::preset(name).unwrap();
        config.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&config.to_toml()).unwrap(), config, "{name}");
        assert!(!config.grid().is_empty());
    }
}

#[test]
fn figure_presets_use_the_stated_sizes() {
    let fig1a = ExperimentConfig::preset("fig1a").unwrap();
    assert_eq!((fig1a.d[..].to_vec(), fig1a.r[..].to_vec(), fig1a.k[..].to_vec(), fig1a.seeds.len()), (vec![50], vec![5], vec![100], 10));
    assert_eq!(fig1a.n, (1..=10).map(|i| 20 * i).collect::<Vec<_>>());
    let fig3a = ExperimentConfig::preset("fig3a").unwrap();
    assert_eq!((fig3a.k[..].to_vec(), fig3a.n[..].to_vec()), (vec![2000], vec![50]));
    let fig3b = ExperimentConfig::preset("fig3b").unwrap();
    assert_eq!(fig3b.r, vec![20, 50, 100, 784]);
    assert_eq!(fig3b.mnist.pairs.len(), 15);
    assert_eq!(fig3b.fewshot.n, (1..=7).map(|i| 8 * i).collect::<Vec<_>>());
}

#[test]
fn one_record_gives_header_and_one_line() {
    let rec = ExperimentRecord { kind: ExperimentKind::FewShotSynthetic, seed: 3, n: 10, k: 2000, r: 5, metric: "accuracy".into(), value: 0.75, stderr: None, wall_ms: 12 };
    let mut buf = Vec::new();
    write_csv(std::slice::from_ref(&rec), &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), ["kind,seed,n,k,r,metric,value,stderr,wall_ms", "few_shot_synthetic,3,10,2000,5,accuracy,0.75,,12"]);
    assert_eq!(read_csv(&buf[..]).unwrap(), vec![rec]);
}

#[test]
fn small_fewshot_sweep_reports_both_curves() {
    let text = r#"
        kind = "few_shot_synthetic"
        seeds = [0, 1, 2]
        d = [20]
        r = [2]
        k = [200]
        n = [50]
        mc_samples = 2000
        [fewshot]
        n = [5, 200]
        eval_n = 400
    "#;
    let config = ExperimentConfig::from_toml(text).unwrap();
    let records = run_sweep(&config, &SweepOptions { threads: Some(1), ..SweepOptions::default() }).unwrap();
    for metric in ["accuracy", "accuracy_baseline", "risk_gap", "risk_gap_baseline"] {
        assert_eq!(records.iter().filter(|r| r.metric == metric).count(), 6, "{metric}");
    }
    let dir = tempfile::tempdir().unwrap();
    let charts = emit_report(&records, ReportFormat::Svg, dir.path()).unwrap();
    let accuracy = charts.iter().find(|p| p.ends_with("few_shot_synthetic_accuracy.svg")).unwrap();
    assert!(std::fs::read_to_string(accuracy).unwrap().contains("<polyline"));
}
