//! Compiles a C client against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().expect("test binary path");
    exe.parent().and_then(|deps| deps.parent()).expect("target/<profile>").to_path_buf()
}

#[test]
fn header_compiles_and_links() {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libneutral_supply_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let out = std::env::temp_dir().join(format!("ns_client_{}", std::process::id()));
    let status = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg(here.join("tests/c/client.c"))
        .arg("-I")
        .arg(here.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let run = Command::new(&out).output().expect("client runs");
    let _ = std::fs::remove_file(&out);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("s12 1 1 4703.96"), "{stdout}");
    assert!(stdout.contains("ok 0.1.0"));
}

#[test]
fn header_is_valid_cpp() {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new("c++")
        .args(["-fsyntax-only", "-x", "c++", "-Wall", "-Werror"])
        .arg(here.join("include/neutral_supply.h"))
        .status()
        .expect("C++ compiler available");
    assert!(status.success());
}
