//! Drives the harness from a TOML document and writes the CSV and JSON
//! artifacts to a temporary directory.

use rqlab::harness::{run, ExperimentConfig};

const CONFIG: &str = r#"
mode = "solve"

[instance]
kind = "canonical"
name = "fully-observed-3"

[representation]
kind = "frame-stack"
n = 1

[solve]
horizon = 30
history_depth = 2
"#;

pub fn run_example() -> rqlab::Result<()> {
    let dir = std::env::temp_dir().join(format!("rqlab-example-{}", std::process::id()));
    let mut cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    cfg.out = Some(dir.clone());
    let out = run(&cfg)?;
    for line in &out.summary {
        println!("{line}");
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> rqlab::Result<()> {
    run_example()
}
