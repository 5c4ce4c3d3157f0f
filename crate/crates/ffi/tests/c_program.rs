//! Compiles a small C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "viewalign.h"

int main(void) {
    char buf[16];
    if (va_density_percent(19445, 7050, 160792, 3, buf, sizeof buf) != VaStatus_Ok) return 1;
    if (strcmp(buf, "0.117%") != 0) return 2;
    VaStore *store = NULL;
    if (va_store_open("/nonexistent/store.bin", &store) != VaStatus_Io) return 3;
    if (va_last_error() == NULL || store != NULL) return 4;
    size_t ranking[3] = {2, 0, 1};
    size_t targets[1] = {0};
    double ndcg = 0.0;
    if (va_ndcg_at_k(ranking, 3, targets, 1, 3, &ndcg) != VaStatus_Ok) return 5;
    printf("%.6f\n", ndcg);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libviewalign_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(std::env::var("CC").unwrap_or_else(|_| "cc".into()))
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.630930");
}
