use std::fs;
use std::process::Command;

fn simulate() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    let out = dir.path().join("results.csv");
    fs::write(
        &conf,
        format!(
            "# two node counts, one algorithm\nnodes = 40,60\nalgorithm = venkataraman\nreplications = 2\nseed = 5\nout = {}\n",
            dir.path().join("ignored.csv").display()
        ),
    )
    .unwrap();
    let status = simulate()
        .args(["--config", conf.to_str().unwrap(), "--algorithm", "cellular", "--out", out.to_str().unwrap()])
        .args(["--trace", dir.path().join("t.csv").to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(!dir.path().join("ignored.csv").exists());

    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(rows.iter().all(|r| r.contains(",cellular,") && r.ends_with(",2,5")));
    assert!(rows.iter().any(|r| r.starts_with("40,")) && rows.iter().any(|r| r.starts_with("60,")));

    let trace = fs::read_to_string(dir.path().join("t-n60-cellular.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "tick,event,sender,receiver,kind,group,cell,energy");
    assert!(trace.lines().count() > 1);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = simulate().args(["--scenario", "meteor-strike", "--out", out.to_str().unwrap()]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("meteor-strike"));
    assert!(!out.exists());
}
