//! Frozen outputs. Set `WNCS_BLESS=1` to rewrite them after an intended change.

use std::fs;
use std::path::PathBuf;

use wncs::netchan::{ChannelModel, DelayPolicy};
use wncs::scenario::{run_closed_loop, write_run_csv, ScenarioConfig};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn compare_or_bless(name: &str, actual: &str) {
    let path = data(name);
    if std::env::var_os("WNCS_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the frozen copy");
}

#[test]
fn seeded_uniform_delays() {
    // one frame per second so FIFO ordering never clamps a draw
    let mut c = ChannelModel::new(&DelayPolicy::UniformRandom { lo_ms: 160, hi_ms: 400, seed: 42 }).unwrap();
    let mut text = String::from("delay_ms\n");
    for k in 0..200u64 {
        let f = c.send(0, 1000 * k);
        text.push_str(&format!("{}\n", f.deliver_time - f.send_time));
    }
    compare_or_bless("uniform_160_400_seed42.csv", &text);
}

#[test]
fn wired_step_trace() {
    let rec = run_closed_loop(&ScenarioConfig::preset("wired").unwrap()).unwrap();
    let mut buf = Vec::new();
    write_run_csv(&mut buf, &rec).unwrap();
    compare_or_bless("wired_run.csv", &String::from_utf8(buf).unwrap());
}
