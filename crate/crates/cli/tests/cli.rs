use std::fs;
use std::path::Path;
use std::process::Command;

fn bbn() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bbn"));
    c.env_remove("BBN_OUTPUT_DIR");
    c
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let out = dir.join("out");
    fs::write(
        &path,
        format!(
            "seed = 3\nn_bans = 3\nduration_ms = 5000\nprotocols = [\"spr\", \"cmr\"]\noutput_dir = {:?}\n{extra}",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    path
}

#[test]
fn run_writes_four_files_per_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let status = bbn()
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let mut names: Vec<String> = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "hops_cmr.csv",
            "hops_spr.csv",
            "outage_cmr.csv",
            "outage_spr.csv",
            "outcomes_cmr.csv",
            "outcomes_spr.csv",
            "summary_cmr.json",
            "summary_spr.json"
        ]
    );
}

#[test]
fn env_var_overrides_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let alt = dir.path().join("alt");
    let status = bbn()
        .env("BBN_OUTPUT_DIR", &alt)
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(alt.join("summary_spr.json").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_config_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "no_such_key = 1\n");
    let out = bbn()
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
    let missing = bbn()
        .args(["run", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert!(!missing.status.success());
}

#[test]
fn synth_then_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let trace = dir.path().join("trace.csv");
    assert!(bbn()
        .args([
            "synth",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            trace.to_str().unwrap()
        ])
        .status()
        .unwrap()
        .success());
    let head = fs::read_to_string(&trace).unwrap();
    assert!(head.starts_with("time_ms,tx,rx,gain_db\n"));

    // run on the written trace, then fit the SPR and CMR combined gains
    let cfg2 = write_config(
        dir.path(),
        &format!("trace_file = {:?}\n", trace.to_str().unwrap()),
    );
    assert!(bbn()
        .args(["run", "--config", cfg2.to_str().unwrap()])
        .output()
        .unwrap()
        .status
        .success());
    for (file, family) in [
        ("outcomes_spr.csv", "gamma"),
        ("outcomes_cmr.csv", "rician"),
    ] {
        let fit_dir = dir.path().join(format!("fit_{family}"));
        let status = bbn()
            .args(["fit", "--input"])
            .arg(dir.path().join("out").join(file))
            .args(["--family", family, "--out-dir"])
            .arg(&fit_dir)
            .status()
            .unwrap();
        assert!(status.success(), "{family}");
        let json: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(fit_dir.join(format!("fit_{family}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(json["family"], family);
        assert!(json["loglik"].is_number());
        assert!(fit_dir.join("pdf_empirical.csv").exists());
    }
}

#[test]
fn fit_on_empty_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = bbn()
        .args([
            "fit",
            "--input",
            empty.to_str().unwrap(),
            "--family",
            "gamma",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let header_only = dir.path().join("h.csv");
    fs::write(&header_only, "gain_db\n").unwrap();
    let out = bbn()
        .args([
            "fit",
            "--input",
            header_only.to_str().unwrap(),
            "--family",
            "rician",
            "--out-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn unknown_family_is_rejected() {
    let out = bbn()
        .args(["fit", "--input", "x.csv", "--family", "lognormal"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
