use std::path::PathBuf;
use std::process::Command;

// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libflowtree_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("flowtree_smoke");
    let status = Command::new(&cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap_or_else(|e| panic!("running {cc}: {e}"));
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "edges=11 error=0");
}
