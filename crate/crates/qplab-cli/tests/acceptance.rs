//! Acceptance: determinism of the command-line surface. Every command, run
//! twice with the same configuration and seed, must produce byte-identical
//! output files.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

fn run(cmd: &[&str], out: &Path) {
    let exe = env!("CARGO_BIN_EXE_qplab");
    let status = Command::new(exe)
        .args(cmd)
        .arg("--out")
        .arg(out)
        .status()
        .expect("binary runs");
    assert!(status.success(), "command {cmd:?} failed");
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("output dir exists") {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().into_owned();
        out.insert(name, std::fs::read(entry.path()).unwrap());
    }
    out
}

#[test]
fn c13_byte_identical_outputs() {
    let t0 = Instant::now();
    let base = std::env::temp_dir().join(format!("qplab-determinism-{}", std::process::id()));
    std::fs::create_dir_all(&base).unwrap();
    let config_path = base.join("run.toml");
    std::fs::write(
        &config_path,
        r#"
[model]
epsilon = 1e-3
epsilon0 = 1e-2

[grids]
energy = 24
eta_count = 9
time_count = 16

[run]
seed = 11
theta = 0.23
box_radius = 60.0
"#,
    )
    .unwrap();
    let cfg = config_path.to_str().unwrap();

    let commands: Vec<Vec<&str>> = vec![
        vec!["spectrum", "--config", cfg, "--block", "12"],
        vec!["rellich", "--config", cfg, "--depth", "0"],
        vec!["certify", "--config", cfg, "--depth", "1"],
        vec!["ids", "--config", cfg, "--centers", "4"],
        vec!["moment", "--config", cfg],
        vec!["badset", "--config", cfg, "--scale", "0", "--samples", "4000"],
        vec!["decay", "--config", cfg],
        vec!["deform", "--config", cfg, "--energy", "0.3", "--eta", "0.02"],
    ];

    for (i, cmd) in commands.iter().enumerate() {
        let d1 = base.join(format!("a{i}"));
        let d2 = base.join(format!("b{i}"));
        run(cmd, &d1);
        run(cmd, &d2);
        let f1 = read_dir_bytes(&d1);
        let f2 = read_dir_bytes(&d2);
        assert_eq!(
            f1.keys().collect::<Vec<_>>(),
            f2.keys().collect::<Vec<_>>(),
            "command {cmd:?} produced different file sets"
        );
        assert!(!f1.is_empty(), "command {cmd:?} wrote no files");
        for (name, bytes) in &f1 {
            assert_eq!(
                bytes, &f2[name],
                "command {cmd:?}: file {name} differs between runs"
            );
        }
    }
    let _ = std::fs::remove_dir_all(&base);
    println!(
        "PASS: criterion 13 (determinism) — {} commands byte-identical across reruns [{:.1}s]",
        commands.len(),
        t0.elapsed().as_secs_f64()
    );
}
