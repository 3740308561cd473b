use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wncs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wncs")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn estimator_demo_prints_reference_column() {
    let text = stdout(&wncs(&["estimator-demo"]));
    let tm: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(text.lines().next(), Some("sample_ms,event,rtt_ms,tm_ms"));
    assert_eq!(tm, ["0", "20", "40", "60", "74", "60", "63", "50", "60"]);
}

#[test]
fn design_and_stability_report() {
    let d = stdout(&wncs(&["design-pi", "--zeta", "0.94", "--wd-over-ws", "0.1"]));
    assert!(d.contains("zero = 0.5440"), "{d}");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let s = stdout(&wncs(&["stability", "--tau-list", "1,2", "--out", out]));
    assert!(s.contains("1,1.476732,74.592,true,0"), "{s}");
    assert!(s.contains("2,1.476732,-10.019,false,"), "{s}");
    assert!(dir.path().join("margins.csv").exists());
    assert!(dir.path().join("nyquist_tau_2.dat").exists());
}

#[test]
fn ise_table_has_every_kind() {
    let t = stdout(&wncs(&["ise-table", "--taus", "0.04,0.3"]));
    assert_eq!(t.lines().next(), Some("kind,0.04,0.3,average"));
    assert_eq!(t.lines().count(), 7);
}

#[test]
fn identify_recovers_first_order_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("steps.csv");
    let mut text = String::from("t,u,y\n");
    let mut y = 0.0;
    for k in 0..300 {
        let u = if (k / 40) % 2 == 0 { 150.0 } else { 60.0 };
        text.push_str(&format!("{},{u},{y}\n", k as f64 * 0.02));
        y = 0.92 * y + 0.0831 * u;
    }
    fs::write(&path, text).unwrap();
    let raw = stdout(&wncs(&["identify", "--data", path.to_str().unwrap(), "--raw"]));
    assert!(raw.contains("fit = 100.00%"), "{raw}");
    assert!(raw.contains("continuous: 4.3306/(s + 4.1691)"), "{raw}");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,u,y\n0,1,1\n0.02,1,x\n").unwrap();
    let o = wncs(&["identify", "--data", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn simulate_from_config_with_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("trace.csv"), "direction,delay_ms\nuplink,90\nuplink,150\ndownlink,120\n").unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "duration_s": 5,
            "channel": {
                "uplink": {"trace_file": {"path": "trace.csv"}},
                "downlink": {"trace_file": {"path": "trace.csv"}}
            },
            "smith": {"mode": "adaptive", "kind": "dfr"},
            "setpoint": {"step": {"value_rps": 80}}
        }"#,
    );
    let out = dir.path().join("out");
    stdout(&wncs(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]));
    let run = fs::read_to_string(out.join("run.csv")).unwrap();
    assert!(run.starts_with("t_ms,setpoint,speed_meas,speed_true,duty,tm_ms,event\n"));
    assert_eq!(run.lines().count(), 251);
    assert!(fs::read_to_string(out.join("metrics.csv")).unwrap().starts_with("metric,value\n"));
    assert!(out.join("speed.dat").exists());
}

#[test]
fn simulate_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let unknown = write_config(
        dir.path(),
        r#"{"duration_s": 1, "colour": "red", "channel": {"uplink": {"fixed": {"delay_ms": 0}},
            "downlink": {"fixed": {"delay_ms": 0}}}, "setpoint": {"step": {"value_rps": 50}}}"#,
    );
    let o = wncs(&["simulate", "--config", &unknown, "--out", out]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    assert!(!wncs(&["simulate", "--preset", "no-such", "--out", out]).status.success());
    assert!(!wncs(&["simulate", "--out", out]).status.success());
}

#[test]
fn seed_flag_changes_random_links_only() {
    let dir = tempfile::tempdir().unwrap();
    let run = |preset: &str, seed: &str| {
        let out = dir.path().join(format!("{preset}-{seed}"));
        stdout(&wncs(&["simulate", "--preset", preset, "--seed", seed, "--out", out.to_str().unwrap()]));
        fs::read(out.join("run.csv")).unwrap()
    };
    assert_ne!(run("intermediate-uniform", "1"), run("intermediate-uniform", "2"));
    assert_eq!(run("p2p-80ms", "1"), run("p2p-80ms", "2"));
}
