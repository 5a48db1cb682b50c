//! A small Monte-Carlo sweep from an inline TOML config, written as CSV to stdout.

use risloc::harness::{parse_config_str, run_sweep, write_csv};

const CONFIG: &str = r#"
trials = 30
seed = 7
methods = ["proposed-energy", "ls-baseline", "exip-oracle"]

[sweep]
variable = "snr_db"
values = [0, 10, 20]
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = parse_config_str(CONFIG, None)?;
    let out = run_sweep(&config)?;
    write_csv(&out.rows, std::io::stdout().lock())?;
    Ok(())
}
