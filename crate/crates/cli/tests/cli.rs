use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn metarep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metarep")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = metarep(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn header_d(dir: &Path) -> usize {
    let text = fs::read_to_string(dir.join("header.toml")).unwrap();
    let value: toml::Value = toml::from_str(&text).unwrap();
    value["d"].as_integer().unwrap() as usize
}

#[test]
fn gen_meta_fewshot_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen", "--d", "8", "--r", "2", "--k", "40", "--n", "60", "--seed", "5", "--out", "ds", "--csv", "ds.csv"]);
    assert_eq!(header_d(&dir.join("ds")), 8);
    assert_eq!(fs::read_to_string(dir.join("ds.csv")).unwrap().lines().count(), 1 + 40 * 60);

    let summary: serde_json::Value = serde_json::from_str(&ok(dir, &["meta", "--data", "ds", "--out", "est"])).unwrap();
    assert_eq!(summary["r"], 2);
    let corr = summary["subspace_correlation"].as_f64().unwrap();
    assert!((0.0..=1.0 + 1e-12).contains(&corr));
    assert!(dir.join("est/subspace.bin").exists() && dir.join("est/moment.bin").exists());

    let args = ["fewshot", "--subspace", "est/subspace.bin", "--data", "ds", "--n", "12", "--eval-n", "200", "--mc-samples", "1000", "--out", "m.json"];
    let report: serde_json::Value = serde_json::from_str(&ok(dir, &args)).unwrap();
    for key in ["accuracy", "accuracy_baseline"] {
        let acc = report[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc), "{key} = {acc}");
    }
    assert!(report["risk_gap"]["value"].is_number());
    assert_eq!(report["model"]["theta"].as_array().unwrap().len(), 2);
    assert!(dir.join("m.json").exists());
    // Same inputs, same answer.
    assert_eq!(report, serde_json::from_str::<serde_json::Value>(&ok(dir, &args)).unwrap());
}

#[test]
fn config_file_supplies_flags_and_cli_wins() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("c.toml"), "threads = 1\n[gen]\nd = 7\nr = 1\nk = 3\nn = 4\nout = \"from_file\"\n").unwrap();
    ok(dir, &["--config", "c.toml", "gen"]);
    assert_eq!(header_d(&dir.join("from_file")), 7);
    ok(dir, &["--config", "c.toml", "gen", "--d", "5", "--out", "from_cli"]);
    assert_eq!(header_d(&dir.join("from_cli")), 5);
}

#[test]
fn bad_config_and_missing_flags_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("c.toml"), "[gen]\ndimension = 7\n").unwrap();
    let out = metarep(dir, &["--config", "c.toml", "gen", "--out", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));

    let out = metarep(dir, &["gen"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));

    let out = metarep(dir, &["gen", "--n", "5", "--out", "odd"]);
    assert!(!out.status.success());
}

#[test]
fn sweep_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let experiment = "kind = \"subspace_recovery_glm\"\nseeds = [0, 1]\nd = [6]\nr = [2]\nk = [10]\nn = [20, 40]\n";
    fs::write(dir.join("e.toml"), experiment).unwrap();
    ok(dir, &["sweep", "--experiment", "e.toml", "--out", "one", "--threads", "1", "--progress", "false"]);
    let out = Command::new(env!("CARGO_BIN_EXE_metarep"))
        .current_dir(dir)
        .env("METAREP_THREADS", "2")
        .args(["sweep", "--experiment", "e.toml", "--out", "two"])
        .output()
        .unwrap();
    assert!(out.status.success());

    let strip = |p: &str| -> Vec<String> {
        fs::read_to_string(dir.join(p).join("records.csv")).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_owned()).collect()
    };
    let one = strip("one");
    assert_eq!(one, strip("two"));
    assert_eq!(one[0], "kind,seed,n,k,r,metric,value,stderr");
    assert!(one.iter().filter(|l| l.contains("subspace_correlation")).count() == 4);

    let svg = ok(dir, &["report", "--in", "one", "--format", "svg", "--out", "plots"]);
    assert!(svg.lines().any(|l| l.ends_with("subspace_recovery_glm_subspace_correlation.svg")));
    ok(dir, &["report", "--in", "one", "--format", "csv"]);
    let summary = fs::read_to_string(dir.join("one/summary.csv")).unwrap();
    assert!(summary.starts_with("kind,metric,k,r,n,count,mean,median,stderr"));

    let out = metarep(dir, &["sweep", "--preset", "fig9"]);
    assert!(!out.status.success());
}

fn idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut bytes = magic.to_be_bytes().to_vec();
    for d in dims {
        bytes.extend_from_slice(&d.to_be_bytes());
    }
    bytes.extend_from_slice(payload);
    bytes
}

#[test]
fn mnist_builds_a_dataset_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::create_dir(dir.join("idx")).unwrap();
    // 40 images of 2×2 pixels, digits 0..3 ten times each.
    let labels: Vec<u8> = (0..40).map(|i| (i % 4) as u8).collect();
    let pixels: Vec<u8> = (0..160).map(|i| (i * 37 % 256) as u8).collect();
    fs::write(dir.join("idx/train-images-idx3-ubyte"), idx(0x803, &[40, 2, 2], &pixels)).unwrap();
    fs::write(dir.join("idx/train-labels-idx1-ubyte"), idx(0x801, &[40], &labels)).unwrap();

    let text = ok(dir, &["mnist", "--mnist-dir", "idx", "--pairs", "0-1,2-3", "--per-class", "4", "--out", "mn"]);
    assert!(text.contains("2 digit-pair tasks"));
    assert_eq!(header_d(&dir.join("mn")), 4);
    let summary: serde_json::Value = serde_json::from_str(&ok(dir, &["meta", "--data", "mn", "--r", "2"])).unwrap();
    assert!(summary["subspace_correlation"].is_null());

    let out = metarep(dir, &["mnist", "--mnist-dir", "idx", "--pairs", "0-1", "--per-class", "11", "--out", "big"]);
    assert!(!out.status.success());
    let out = metarep(dir, &["mnist", "--mnist-dir", "idx", "--pairs", "0-x", "--out", "bad"]);
    assert!(!out.status.success());
}
