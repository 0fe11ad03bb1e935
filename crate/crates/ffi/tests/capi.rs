use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use branchopt_ffi::*;

const CONFIG: &str = r#"{
  "decomposition": {
    "bounding_box": { "x0": 0, "y0": 0, "x1": 1, "y1": 1 },
    "subdomains": [{ "id": 0, "rect": { "x0": 0, "y0": 0, "x1": 1, "y1": 1 }, "reference": 0, "rotation": 0 }]
  },
  "loads": {
    "top": { "traction": [0, -1], "intervals": [[0.25, 0.75]] },
    "bottom": { "traction": [0, 1], "intervals": [[0.25, 0.75]] }
  },
  "resolution": 6,
  "params": { "beta": 2.0 }
}"#;

fn last_error() -> String {
    let p = bo_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn problem(json: &str) -> (BoStatus, *mut BoProblem) {
    let c = CString::new(json).unwrap();
    let mut p = ptr::null_mut();
    let s = unsafe { bo_problem_from_json(c.as_ptr(), ptr::null(), &mut p) };
    (s, p)
}

#[test]
fn run_round_trip() {
    let (s, p) = problem(CONFIG);
    assert_eq!(s, BoStatus::Ok);
    assert!(bo_last_error_message().is_null());
    let (mut unknowns, mut cells) = (0usize, 0usize);
    unsafe {
        assert_eq!(bo_problem_sizes(p, &mut unknowns, ptr::null_mut(), &mut cells), BoStatus::Ok);
        assert_eq!((unknowns, cells), (4 * 6 * 7, 36));
        let mut r = ptr::null_mut();
        assert_eq!(bo_problem_run(p, &mut r), BoStatus::Ok);
        let (mut conv, mut iters, mut mono) = (false, 0usize, false);
        assert_eq!(bo_result_status(r, &mut conv, &mut iters, &mut mono), BoStatus::Ok);
        assert!(conv && mono && iters >= 1);
        let mut obj = BoObjective::default();
        assert_eq!(bo_result_objective(r, &mut obj), BoStatus::Ok);
        assert!((obj.total - (obj.elastic + 2.0 * obj.volume + 0.1 * obj.perimeter)).abs() < 1e-9 * obj.total);
        let (mut nx, mut ny) = (0, 0);
        assert_eq!(bo_result_raster_size(r, &mut nx, &mut ny), BoStatus::Ok);
        assert_eq!((nx, ny), (6, 6));
        let mut needed = 0;
        assert_eq!(bo_result_phase(r, ptr::null_mut(), 0, &mut needed), BoStatus::BufferTooSmall);
        assert_eq!(needed, 36);
        let mut buf = vec![0.0; needed];
        assert_eq!(bo_result_phase(r, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), BoStatus::Ok);
        assert!(buf.iter().all(|&v| (0.01..=1.0).contains(&v)));
        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(bo_write_outputs(p, r, d.as_ptr()), BoStatus::Ok);
        assert!(dir.path().join("report.json").is_file());
        assert!(dir.path().join("phase.pgm").is_file());
        bo_result_free(r);
        bo_problem_free(p);
    }
}

#[test]
fn limits_override() {
    // Heavy volume cost, so the first sweep moves the field.
    let (_, p) = problem(&CONFIG.replace(r#""beta": 2.0"#, r#""beta": 40.0"#));
    unsafe {
        assert_eq!(bo_problem_set_limits(p, 1, 1e-300), BoStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(bo_problem_run(p, &mut r), BoStatus::Ok);
        let (mut conv, mut iters) = (true, 0usize);
        bo_result_status(r, &mut conv, &mut iters, ptr::null_mut());
        assert!(!conv);
        assert_eq!(iters, 1);
        bo_result_free(r);
        bo_problem_free(p);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let (s, p) = problem("{ not json");
    assert_eq!(s, BoStatus::InvalidConfig);
    assert!(p.is_null());
    assert!(last_error().contains("json"));

    let unbalanced = CONFIG.replace(r#""bottom": { "traction": [0, 1]"#, r#""bottom": { "traction": [0, 3]"#);
    assert_eq!(problem(&unbalanced).0, BoStatus::InvalidLoad);

    let overlapping = CONFIG.replace(r#""x1": 1, "y1": 1 }, "reference""#, r#""x1": 1.5, "y1": 1 }, "reference""#);
    assert_eq!(problem(&overlapping).0, BoStatus::InvalidDecomposition);

    unsafe {
        assert_eq!(bo_problem_from_json(ptr::null(), ptr::null(), &mut ptr::null_mut()), BoStatus::NullPointer);
        assert!(last_error().contains("json"));
        let c = CString::new(CONFIG).unwrap();
        assert_eq!(bo_problem_from_json(c.as_ptr(), ptr::null(), ptr::null_mut()), BoStatus::NullPointer);
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(bo_validate_json(bad.as_ptr().cast(), ptr::null()), BoStatus::InvalidUtf8);
        assert_eq!(bo_result_objective(ptr::null(), &mut BoObjective::default()), BoStatus::NullPointer);
        let missing = CString::new("/nonexistent/run.json").unwrap();
        assert_eq!(bo_problem_from_file(missing.as_ptr(), &mut ptr::null_mut()), BoStatus::InvalidConfig);
        bo_problem_free(ptr::null_mut());
        bo_result_free(ptr::null_mut());
    }
}

#[test]
fn validate_relative_decomposition_path() {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/configs");
    let json = CString::new(r#"{"decomposition": "branching_layout.json",
        "loads": {"top": {"traction": [0, -1]}, "bottom": {"traction": [0, 1]}}, "resolution": 6}"#)
    .unwrap();
    let base = CString::new(configs.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { bo_validate_json(json.as_ptr(), base.as_ptr()) }, BoStatus::Ok);
    assert_eq!(unsafe { bo_validate_json(json.as_ptr(), ptr::null()) }, BoStatus::InvalidConfig);
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(bo_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    assert!(
        lib_dir.join("libbranchopt_ffi.a").is_file(),
        "static library not found in {}",
        lib_dir.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "branchopt.h"
int main(int argc, char **argv) {
    BoProblem *p = NULL;
    BoResult *r = NULL;
    if (bo_problem_from_json("{", NULL, &p) != BO_STATUS_INVALID_CONFIG || p != NULL) return 10;
    if (bo_last_error_message() == NULL) return 11;
    if (bo_problem_from_json(argv[1], NULL, &p) != BO_STATUS_OK) return 12;
    if (bo_problem_run(p, &r) != BO_STATUS_OK) return 13;
    BoObjective o;
    if (bo_result_objective(r, &o) != BO_STATUS_OK) return 14;
    size_t nx = 0, ny = 0;
    bo_result_raster_size(r, &nx, &ny);
    printf("%zu %zu %.6f\n", nx, ny, o.total);
    bo_result_free(r);
    bo_problem_free(p);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(lib_dir.join("libbranchopt_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).arg(CONFIG).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("6 6 "), "{text}");
}
