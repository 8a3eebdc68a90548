use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_driftpost"));
    c.env_remove("DRIFTPOST_THREADS");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const OU1: &str = r#"{"dim":1,"form":{"ou":{"beta":1.0}},"growth_K":2.0,"dissipativity":{"r":1.0,"M":1.0}}"#;

#[test]
fn bad_growth_exits_one_naming_growth() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("validate", &configs().join("bad_growth.json"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("growth"), "{}", stderr(&o));
}

#[test]
fn other_commands_reject_invalid_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"seed":1,"delta":0.5,"n":10,
            "truth":{"dim":1,"form":{"ou":{"beta":2.0}},"growth_K":1.0,"dissipativity":{"r":2.0,"M":1.0}}}"#,
    );
    let o = run("simulate", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("growth"));
}

#[test]
fn valid_truth_passes_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &format!(r#"{{"seed":1,"truth":{OU1}}}"#));
    let o = run("validate", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("validation.json").exists());
}

#[test]
fn consistency_writes_curve_with_header() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("consistency", &configs().join("ou_experiment.json"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("curve.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,mass,stderr"));
    let masses: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(masses.len(), 5);
    assert!(masses.last().unwrap() < &0.01, "{masses:?}");
}

#[test]
fn two_atom_posterior_concentrates() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("posterior", &configs().join("two_atom.json"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("posterior.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("atom,prior,log_likelihood_ratio,posterior"));
    let weights: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(weights[0] > 0.99, "{weights:?}");
}

#[test]
fn reruns_are_byte_identical_and_manifest_is_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run("posterior", &configs().join("two_atom.json"), dir, &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "posterior");
    assert_eq!(manifest["seed"], 11);
    let listed: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["file"].as_str().unwrap())
        .collect();
    let mut on_disk: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "run_manifest.json")
        .collect();
    on_disk.sort();
    let mut listed_sorted: Vec<String> = listed.iter().map(|s| s.to_string()).collect();
    listed_sorted.sort();
    assert_eq!(listed_sorted, on_disk);
    for entry in manifest["outputs"].as_array().unwrap() {
        let file = entry["file"].as_str().unwrap();
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        assert_eq!(x, y, "{file} differs between runs");
        let digest = format!("{:x}", <sha2::Sha256 as sha2::Digest>::digest(&x));
        assert_eq!(entry["sha256"], digest.as_str());
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &format!(r#"{{"seed":1,"delta":0.5,"n":5,"truth":{OU1}}}"#));
    let read = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = run("simulate", &cfg, &out, &["--seed", seed]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out.join("series.csv")).unwrap()
    };
    assert_eq!(read("9", "a"), read("9", "b"));
    assert_ne!(read("9", "c"), read("10", "d"));
}

#[test]
fn missing_seed_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &format!(r#"{{"delta":0.5,"n":5,"truth":{OU1}}}"#));
    let o = run("simulate", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn malformed_config_reports_line_and_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", "{\n  \"seed\": 1,\n  \"delta\": \"half\"\n}");
    let o = run("simulate", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("delta"), "{e}");

    let cfg = write_config(tmp.path(), "d.json", r#"{"seed":1,"detla":0.5}"#);
    let o = run("simulate", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("detla"));
}

#[test]
fn missing_config_file_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("simulate", &tmp.path().join("absent.json"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

fn ingest_config(dir: &Path, data: &str) -> PathBuf {
    write_config(
        dir,
        "ingest.json",
        &format!(r#"{{"seed":1,"delta":0.5,"data":"{data}"}}"#),
    )
}

#[test]
fn ingest_reads_three_rows() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("d.csv"), "t,x1\n0,0.1\n0.5,-0.2\n1.0,0.3\n").unwrap();
    let cfg = ingest_config(tmp.path(), "d.csv");
    let o = run("ingest", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/ingest.json")).unwrap()).unwrap();
    assert_eq!(summary["observations"], 3);
    assert_eq!(summary["dim"], 1);
}

#[test]
fn ingest_rejects_drifting_timestamp_at_row_three() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("d.csv"), "t,x1\n0,0.1\n0.5,-0.2\n1.1,0.3\n").unwrap();
    let cfg = ingest_config(tmp.path(), "d.csv");
    let o = run("ingest", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn ingest_rejects_non_numeric_cell() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("d.csv"), "t,x1\n0,0.1\n0.5,abc\n").unwrap();
    let cfg = ingest_config(tmp.path(), "d.csv");
    let o = run("ingest", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));
}

#[test]
fn simulate_then_ingest_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sim.json", &format!(r#"{{"seed":4,"delta":0.5,"n":50,"truth":{OU1}}}"#));
    let o = run("simulate", &cfg, &tmp.path().join("sim"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cfg = ingest_config(tmp.path(), "sim/series.csv");
    let o = run("ingest", &cfg, &tmp.path().join("back"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(tmp.path().join("sim/series.csv")).unwrap(),
        std::fs::read(tmp.path().join("back/series.csv")).unwrap()
    );
}

#[test]
fn net_command_writes_net_and_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("net", &configs().join("gradient_net.json"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let audit: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("audit.json")).unwrap()).unwrap();
    assert!(audit["failures"].as_array().unwrap().is_empty());
    let net: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("net.json")).unwrap()).unwrap();
    assert!(!net["atoms"].as_array().unwrap().is_empty());
}

#[test]
fn saved_net_feeds_posterior() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("net", &configs().join("ou_experiment.json"), &tmp.path().join("net"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cfg = write_config(
        tmp.path(),
        "post.json",
        &format!(r#"{{"seed":3,"delta":0.5,"n":200,"truth":{OU1},"net":{{"kind":"file","path":"net/net.json"}}}}"#),
    );
    let o = run("posterior", &cfg, &tmp.path().join("post"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("post/posterior.csv")).unwrap();
    let total: f64 = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn divergence_and_identifiability_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("divergence", &configs().join("divergence.json"), &tmp.path().join("d"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("d/divergence.json")).unwrap()).unwrap();
    assert_eq!(d.as_array().unwrap().len(), 2);
    let o = run("identifiability", &configs().join("identifiability.json"), &tmp.path().join("i"), &["--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("i/identifiability.json").exists());
}

#[test]
fn incompatible_transition_model_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let tanh = r#"{"dim":1,"form":{"parametric_1d":{"id":"tanh","params":[2.0,1.0]}},"growth_K":2.0,"dissipativity":{"r":1.5,"M":2.0}}"#;
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &format!(
            r#"{{"seed":1,"delta":0.5,"n":10,"truth":{OU1},"model":{{"method":{{"kind":"exact_ou"}}}},
                "net":{{"kind":"explicit","atoms":[{tanh}],"weights":[1.0]}}}}"#
        ),
    );
    let o = run("posterior", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_thread_env_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .env("DRIFTPOST_THREADS", "many")
        .args(["validate", "--config"])
        .arg(configs().join("two_atom.json"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("DRIFTPOST_THREADS"));
}
