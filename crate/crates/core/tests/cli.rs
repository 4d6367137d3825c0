use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sps_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sps-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_SWEEP: &str = r#"
[run]
duration_s = 40
replications = 2

[axes]
"topology.n_vehicles" = [20, 40]
"protocol.resel_prob" = [0.2, 0.8]
"#;

#[test]
fn analyze_prints_one_row() {
    let o = sps_sim(&["analyze", "--n-vehicles", "2", "--n-blocks", "10", "--sps-periods", "1", "--resel-prob", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let col = headers.iter().position(|h| h == "pc").unwrap();
    let pc: f64 = rows[0][col].parse().unwrap();
    assert!((pc - (66f64.sqrt() - 8.0)).abs() < 1e-9);
}

#[test]
fn analyze_hidden_terminal_mode() {
    let o = sps_sim(&["analyze", "--density-per-km", "100", "--range-m", "500"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("101,200,10,0.2,100,100,500,"), "{row}");
}

#[test]
fn analyze_rejects_overload() {
    let o = sps_sim(&["analyze", "--n-vehicles", "200"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_vehicles < n_blocks"));
}

#[test]
fn simulate_with_overrides_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "one.toml", "[topology]\nn_vehicles = 30\n[run]\nduration_s = 20\nreplications = 2\n");
    let trace = dir.path().join("trace.txt");
    let out = dir.path().join("out.csv");
    let o = sps_sim(&[
        "simulate", "--config", &cfg,
        "--set", "protocol.resel_prob=0.5",
        "--trace", trace.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv_text = fs::read_to_string(&out).unwrap();
    assert_eq!(csv_text.lines().count(), 2);
    assert!(csv_text.starts_with("sim_collision_mean,"));
    // 200 periods of 30 transmissions
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 200 * 30);
}

#[test]
fn unknown_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[protocol]\nresel_probability = 0.2\n");
    let o = sps_sim(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("resel_probability"));
}

#[test]
fn sweep_output_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "sweep.toml", SMALL_SWEEP);
    let a = sps_sim(&["sweep", &spec, "--jobs", "1"]);
    let b = sps_sim(&["sweep", &spec, "--jobs", "3"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 1 + 4);
}

#[test]
fn sweep_writes_location_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "road.toml",
        "[topology]\nkind = \"linear_road\"\ndensity_per_km = 20\nroad_length_m = 3000\n[run]\nduration_s = 20\nreplications = 2\nlocation_bins = 30\n[axes]\n\"topology.range_m\" = [300, 500]\n",
    );
    let loc = dir.path().join("loc.csv");
    let o = sps_sim(&["sweep", &spec, "--locations", loc.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&loc).unwrap();
    assert!(text.starts_with("point_id,bin_center_m,per_mean,per_ci"));
    assert_eq!(text.lines().count(), 1 + 2 * 30);
}

#[test]
fn compare_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "sweep.toml", SMALL_SWEEP);
    let loose = sps_sim(&["compare", &spec, "--tolerance-abs", "0.5", "--delay-tolerance-abs", "100"]);
    assert_eq!(loose.status.code(), Some(0), "{}", String::from_utf8_lossy(&loose.stderr));
    assert!(stdout(&loose).starts_with("point_id,metric,"));
    let strict = sps_sim(&[
        "compare", &spec,
        "--tolerance-abs", "0", "--tolerance-rel", "0",
        "--delay-tolerance-abs", "0", "--delay-tolerance-rel", "0",
    ]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("FAIL"));
}
