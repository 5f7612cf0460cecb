#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fgw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgw"))
        .current_dir(dir)
        .args(args)
        .env("FGW_THREADS", "2")
        .output()
        .expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub const GOLDEN_STEM: &str = "rigid-n8-seed7";

/// Produces every golden artifact inside `dir` and returns (file name, bytes).
pub fn golden_artifacts(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let bundle = format!("{GOLDEN_STEM}.fgwb");
    let steps: [(&str, Vec<&str>); 6] = [
        (
            "synth.txt",
            vec![
                "synth",
                "--scenario",
                "rigid",
                "--n",
                "8",
                "--seed",
                "7",
                "--noise",
                "0.1",
            ],
        ),
        ("match.txt", vec!["match", &bundle, "--anchors", "4"]),
        ("eval.txt", vec!["eval", &bundle, "--labels", "rigid-n8-seed7.labels"]),
        (
            "eval_plan.txt",
            vec!["eval", &bundle, "--plan", "rigid-n8-seed7.fgwp", "--radius", "0.2"],
        ),
        (
            "oracle_gw.txt",
            vec!["oracle", &bundle, "--plan", "rigid-n8-seed7.fgwp"],
        ),
        ("oracle_gt.txt", vec!["oracle", &bundle, "--ground-truth"]),
    ];
    let mut out = Vec::new();
    for (name, args) in steps {
        let o = fgw(dir, &args);
        if !o.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
        }
        out.push((name.to_string(), o.stdout));
    }
    for ext in ["fgwb", "fgwp", "labels", "diag"] {
        let name = format!("{GOLDEN_STEM}.{ext}");
        let bytes = std::fs::read(dir.join(&name)).map_err(|e| format!("{name}: {e}"))?;
        out.push((name, bytes));
    }
    Ok(out)
}

/// Compares artifacts with the checked-in copies, rewriting them instead
/// when UPDATE_GOLDEN is set.
pub fn check_golden(artifacts: &[(String, Vec<u8>)]) -> Result<(), String> {
    let dir = golden_dir();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        for (name, bytes) in artifacts {
            std::fs::write(dir.join(name), bytes).map_err(|e| e.to_string())?;
        }
        return Ok(());
    }
    for (name, bytes) in artifacts {
        let want = std::fs::read(dir.join(name)).map_err(|e| format!("golden {name}: {e}"))?;
        if &want != bytes {
            return Err(format!("{name} differs from golden copy"));
        }
    }
    Ok(())
}
