use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use obstacle_lab_ffi::*;

const PROBLEM: &str = r#"{
    "dim": 2, "a": [["1", "0"], ["0", "1"]],
    "k_plus": "1", "k_minus": "2", "obstacle": "0",
    "p": 2.0, "kappa": 2, "dirichlet": "x1"
}"#;

fn last_error() -> String {
    let p = ol_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn problem(json: &str, m: usize) -> (OlStatus, *mut OlProblem) {
    let text = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { ol_problem_from_json(text.as_ptr(), m, &mut out) };
    (st, out)
}

#[test]
fn solve_and_read_back() {
    let (st, p) = problem(PROBLEM, 33);
    assert_eq!(st, OlStatus::Ok);
    unsafe {
        assert_eq!(ol_problem_node_count(p), 33 * 17);
        let mut s = ptr::null_mut();
        assert_eq!(ol_solve(p, 0.0, 0, &mut s), OlStatus::Ok);
        let n = ol_solution_node_count(s);
        assert_eq!(n, 33 * 17);
        let mut buf = vec![0.0; n];
        assert_eq!(ol_solution_copy_values(s, buf.as_mut_ptr(), n - 1), OlStatus::BufferTooSmall);
        assert!(last_error().contains("buffer"));
        assert_eq!(ol_solution_copy_values(s, buf.as_mut_ptr(), n), OlStatus::Ok);
        assert!(ol_last_error_message().is_null());
        // outer face carries the Dirichlet datum x1
        assert_eq!(buf[0], -1.0);
        assert_eq!(buf[16], -1.0);
        assert_eq!(buf[n - 1], 1.0);
        assert!(ol_solution_weak_residual(s) < 1e-9);
        assert!(ol_solution_energy(s).is_finite());
        assert!(ol_solution_iterations(s) >= 1);

        let mut v = 0.0;
        let x = [0.5, 1.0];
        assert_eq!(ol_solution_interpolate(s, x.as_ptr(), 2, &mut v), OlStatus::Ok);
        assert!((v - 0.5).abs() < 1e-12);
        let far = [0.5, 2.0];
        assert_eq!(ol_solution_interpolate(s, far.as_ptr(), 2, &mut v), OlStatus::Domain);
        assert_eq!(ol_solution_interpolate(s, x.as_ptr(), 3, &mut v), OlStatus::Domain);

        let mut csv = ptr::null_mut();
        let x0 = [0.0, 0.0];
        assert_eq!(ol_frequency_profile_csv(s, x0.as_ptr(), 2, 0.0, 4, &mut csv), OlStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
        ol_string_free(csv);
        assert_eq!(text.lines().count(), 5, "{text}");

        ol_solution_free(s);
        ol_problem_free(p);
    }
}

#[test]
fn error_codes() {
    let (st, p) = problem(&PROBLEM.replace("\"x1\"", "\"x1 +\""), 33);
    assert_eq!(st, OlStatus::Parse);
    assert!(p.is_null());
    assert!(last_error().contains("problem.dirichlet"));

    assert_eq!(problem("{", 33).0, OlStatus::Config);
    assert_eq!(problem(PROBLEM, 32).0, OlStatus::Config);
    assert!(last_error().contains("odd"));
    assert_eq!(problem(&PROBLEM.replace("\"0\", \"1\"]]", "\"0\", \"-1\"]]"), 33).0, OlStatus::Validation);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ol_problem_from_json(ptr::null(), 33, &mut out) }, OlStatus::NullPointer);
    let bad = [0xffu8, 0];
    assert_eq!(
        unsafe { ol_problem_from_json(bad.as_ptr().cast(), 33, &mut out) },
        OlStatus::InvalidUtf8
    );
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ol_solve(ptr::null(), 0.0, 0, &mut s) }, OlStatus::NullPointer);
    unsafe {
        assert_eq!(ol_solution_node_count(ptr::null()), 0);
        assert!(ol_solution_energy(ptr::null()).is_nan());
        ol_solution_free(ptr::null_mut());
        ol_problem_free(ptr::null_mut());
        ol_string_free(ptr::null_mut());
    }
}

#[test]
fn non_convergence_keeps_last_iterate() {
    let (_, p) = problem(PROBLEM, 33);
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(ol_solve(p, 1e-300, 1, &mut s), OlStatus::NoConvergence);
        assert!(!s.is_null());
        assert_eq!(ol_solution_iterations(s), 1);
        ol_solution_free(s);
        ol_problem_free(p);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ol_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile_dir();
    let c = dir.join("probe.c");
    std::fs::write(
        &c,
        "#include \"obstacle_lab.h\"\nint main(void) { OlProblem *p = 0; OlStatus s = OL_STATUS_OK; \
         (void)ol_problem_node_count(p); return (int)s; }\n",
    )
    .unwrap();
    for (compiler, extra) in [("cc", "-std=c99"), ("c++", "-xc++")] {
        let out = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", extra, "-I", include])
            .arg(&c)
            .output()
            .expect("C compiler available");
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("obstacle-lab-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
