use std::ffi::CStr;
use std::ptr;

use skelqbx_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(skq_last_error_message()) }.to_string_lossy().into_owned()
}

fn starfish() -> *mut SkqDiscretization {
    let mut d = ptr::null_mut();
    let rc = unsafe { skq_starfish_new(0.25, 4, 48, 8, 0.5, &mut d) };
    assert_eq!(rc, SKQ_OK, "{}", last_error());
    assert!(!d.is_null());
    d
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn solve_roundtrip_against_dense_product() {
    let d = starfish();
    let n = unsafe { skq_discretization_len(d) };
    assert_eq!(n, 48 * 8);
    let sigma: Vec<f64> = (0..n).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
    let mut b = vec![0.0; n];
    assert_eq!(unsafe { skq_dense_apply(d, SKQ_LAYER_DOUBLE, 8, sigma.as_ptr(), b.as_mut_ptr(), n) }, SKQ_OK);

    let mut s = ptr::null_mut();
    let rc = unsafe { skq_solver_new(d, SKQ_LAYER_DOUBLE, 8, 1.15, 64, 1e-12, 4, &mut s) };
    assert_eq!(rc, SKQ_OK, "{}", last_error());
    // the solver owns its geometry
    unsafe { skq_discretization_free(d) };
    assert_eq!(unsafe { skq_solver_len(s) }, n);

    let mut y = vec![0.0; n];
    assert_eq!(unsafe { skq_solver_apply(s, sigma.as_ptr(), y.as_mut_ptr(), n) }, SKQ_OK);
    assert!(rel_err(&y, &b) < 1e-9);

    let mut x = vec![0.0; n];
    assert_eq!(unsafe { skq_solver_solve(s, b.as_ptr(), x.as_mut_ptr(), n) }, SKQ_OK);
    assert!(rel_err(&x, &sigma) < 1e-8);
    assert_eq!(last_error(), "");
    unsafe { skq_solver_free(s) };
}

#[test]
fn nodes_and_weights_copy_out() {
    let d = starfish();
    let n = unsafe { skq_discretization_len(d) };
    let mut xyz = vec![f64::NAN; 3 * n];
    let mut w = vec![0.0; n];
    assert_eq!(unsafe { skq_discretization_nodes(d, xyz.as_mut_ptr(), 3 * n) }, SKQ_OK);
    assert_eq!(unsafe { skq_discretization_weights(d, w.as_mut_ptr(), n) }, SKQ_OK);
    assert!(xyz.chunks(3).all(|p| p[2] == 0.0 && (0.7..1.3).contains(&p[0].hypot(p[1]))));
    assert!(w.iter().all(|&x| x > 0.0));
    // wrong length is a dimension error
    assert_eq!(unsafe { skq_discretization_nodes(d, xyz.as_mut_ptr(), n) }, SKQ_ERR_DIMENSION);
    unsafe { skq_discretization_free(d) };
}

#[test]
fn null_handles_are_reported() {
    let mut x = [0.0; 4];
    let rc = unsafe { skq_solver_solve(ptr::null(), x.as_ptr(), x.as_mut_ptr(), 4) };
    assert_eq!(rc, SKQ_ERR_NULL_POINTER);
    assert!(last_error().contains("solver"));
    assert_eq!(unsafe { skq_circle_new(1.0, 16, 4, 0.5, ptr::null_mut()) }, SKQ_ERR_NULL_POINTER);
    assert_eq!(unsafe { skq_discretization_len(ptr::null()) }, 0);
    unsafe {
        skq_solver_free(ptr::null_mut());
        skq_discretization_free(ptr::null_mut());
    }
}

#[test]
fn library_errors_keep_their_codes() {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { skq_circle_new(-1.0, 16, 4, 0.5, &mut d) }, SKQ_ERR_INVALID_PARAMETER);
    assert!(d.is_null());
    assert!(!last_error().is_empty());

    let d = starfish();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { skq_solver_new(d, 7, 8, 1.15, 64, 1e-8, 4, &mut s) }, SKQ_ERR_INVALID_PARAMETER);
    assert!(last_error().contains("layer"));
    unsafe { skq_discretization_free(d) };
}

#[test]
fn errors_are_per_thread() {
    let mut d = ptr::null_mut();
    assert_ne!(unsafe { skq_circle_new(-1.0, 16, 4, 0.5, &mut d) }, SKQ_OK);
    let other = std::thread::spawn(last_error).join().unwrap();
    assert_eq!(other, "");
    assert!(!last_error().is_empty());
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(skq_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/skelqbx.h")).unwrap();
    for name in [
        "skq_last_error_message",
        "skq_version",
        "skq_starfish_new",
        "skq_circle_new",
        "skq_torus_new",
        "skq_sphere_new",
        "skq_discretization_len",
        "skq_discretization_nodes",
        "skq_discretization_weights",
        "skq_discretization_free",
        "skq_dense_apply",
        "skq_solver_new",
        "skq_solver_len",
        "skq_solver_solve",
        "skq_solver_apply",
        "skq_solver_free",
        "typedef struct SkqSolver SkqSolver",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
