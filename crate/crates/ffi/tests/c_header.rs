//! Compiles and runs a small C program against the generated header and
//! the shared library, so the published ABI is exercised by an actual C
//! toolchain and not only from Rust.

use std::env;
use std::fs;
use std::path::PathBuf;
use std::process::Command;

const SMOKE: &str = r#"
#include <stdio.h>
#include "fieldtriple.h"

static const char *JSON =
    "{"
    "\"schema\": 1, \"m\": 2, \"n\": 1,"
    "\"lagrangian\": \"0.5*(u1_1^2 + u1_2^2)\","
    "\"sections\": {\"harmonic\": [\"x1^2 - x2^2\"]},"
    "\"samples\": 4, \"seed\": 1"
    "}";

int main(void) {
    FtProblem *problem = NULL;
    if (ft_problem_from_json(JSON, &problem) != FtStatus_Ok) return 1;
    if (ft_problem_base_dim(problem) != 2) return 2;
    if (ft_problem_fiber_dim(problem) != 1) return 3;

    double x[2] = {0.25, -0.5};
    double residual[1] = {42.0};
    if (ft_el_residual(problem, "harmonic", x, 2, residual, 1) != FtStatus_Ok) return 4;
    if (residual[0] > 1e-9 || residual[0] < -1e-9) return 5;

    FtProblem *bogus = NULL;
    if (ft_problem_from_json(NULL, &bogus) != FtStatus_NullArgument) return 6;
    if (ft_last_error() == NULL) return 7;

    ft_problem_free(problem);
    return 0;
}
"#;

#[test]
fn the_header_compiles_and_links_from_c() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH, skipping");
        return;
    }

    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include_dir = crate_dir.join("include");
    let lib_dir = env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    assert!(
        lib_dir.join("libfieldtriple_ffi.so").exists(),
        "shared library not found in {}",
        lib_dir.display()
    );

    let work = tempfile::tempdir().unwrap();
    let source = work.path().join("smoke.c");
    fs::write(&source, SMOKE).unwrap();
    let binary = work.path().join("smoke");

    let compile = Command::new("cc")
        .arg(&source)
        .arg("-I")
        .arg(&include_dir)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lfieldtriple_ffi")
        .arg("-o")
        .arg(&binary)
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "cc failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&binary)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "smoke binary exited with {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
}
