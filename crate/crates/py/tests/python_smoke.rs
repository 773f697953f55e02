//! Loads the freshly built extension into Python and runs the smoke script.

use std::path::{Path, PathBuf};
use std::process::Command;

fn built_extension() -> Option<PathBuf> {
    // test binaries live in target/<profile>/deps, the cdylib one level up
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?;
    ["libbicm_llr_py.so", "libbicm_llr_py.dylib", "bicm_llr_py.dll"].iter().map(|n| dir.join(n)).find(|p| p.exists())
}

#[test]
fn python_smoke_script() {
    let Some(lib) = built_extension() else {
        panic!("extension library not found next to {:?}", std::env::current_exe());
    };
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 not available, skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let ext = if cfg!(windows) { "bicm_llr_py.pyd" } else { "bicm_llr_py.so" };
    std::fs::copy(&lib, dir.path().join(ext)).unwrap();
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../python/smoke_test.py");
    let out = Command::new("python3").arg(&script).env("PYTHONPATH", dir.path()).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("python smoke test: ok"));
}
