use std::path::Path;
use std::process::{Command, Output};

fn risloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str =
    "trials = 4\nmethods = [\"proposed-energy\", \"ls-baseline\"]\n[sweep]\nvariable = \"snr_db\"\nvalues = [10, 20]\n";

#[test]
fn run_writes_csv_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("out");
    let o = risloc(&["run", &config, "--out", out.to_str().unwrap(), "--seed", "3", "--log"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("sweep_variable,value,method,rmse_position,rmse_position_se"));
    assert!(lines[1].starts_with("snr_db,10,proposed-energy,"));
    let log = std::fs::read_to_string(out.join("trials.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 16);
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", SMALL);
    let read = |sub: &str| {
        let out = dir.path().join(sub);
        assert!(risloc(&["run", &config, "--out", out.to_str().unwrap()])
            .status
            .success());
        std::fs::read(out.join("results.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let slots = write(
        dir.path(),
        "t.toml",
        "[arrays]\nbs = [10, 10]\n[radio]\ntime_slots = 50\n",
    );
    let o = risloc(&["peb", &slots]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("T >= N"));

    let subcarriers = write(dir.path(), "k.toml", "[radio]\nsubcarriers = 3\n");
    assert_eq!(risloc(&["run", &subcarriers]).status.code(), Some(2));

    assert_eq!(risloc(&["run", "/nonexistent/config.toml"]).status.code(), Some(2));
    let fine = write(dir.path(), "ok.toml", SMALL);
    assert_eq!(risloc(&["run", &fine, "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn peb_prints_one_line_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", SMALL);
    let o = risloc(&["peb", &config]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sweep_variable,value,peb,ceb");
    assert_eq!(lines.len(), 3);
    let peb = |l: &str| l.split(',').nth(2).unwrap().parse::<f64>().unwrap();
    // ten more dB of SNR shrinks the bound
    assert!(peb(lines[2]) < peb(lines[1]));
}

#[test]
fn design_lists_every_element() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", "");
    let o = risloc(&["design", &config]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    // two RIS of 8x8 elements plus the header
    assert_eq!(text.lines().count(), 1 + 2 * 64);
    for line in text.lines().skip(1) {
        let phase: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..std::f64::consts::TAU).contains(&phase));
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        risloc::harness::parse_config(&path, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
