//! C ABI over the calderon-core laboratory.
//!
//! Conventions: every function returns a `CalderonStatus` code; outputs go
//! through caller-supplied pointers; handles are opaque and must be released
//! with their matching `_free` function; `calderon_last_error_message` returns
//! a thread-local description of the most recent failure. The hand-maintained
//! header lives in `include/calderon.h` and is kept in sync by
//! `tests/header_sync.rs`.

use calderon_core::bvp::{solve_dirichlet, BoundaryField};
use calderon_core::experiment::{gap_explorer, run_stability_sweep, ExperimentConfig};
use calderon_core::reconstruct::{choose_scales, h_minus1_error, lowpass_invert, CgoSampler, SampleMode};
use calderon_core::spectral::SchrodingerOp;
use calderon_core::torus::Torus;
use calderon_core::BoundaryPatch;
use num_complex::Complex;
use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes of every FFI call. Keep in sync with include/calderon.h.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalderonStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    NumericalError = 4,
    IoError = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &calderon_core::LabError) -> CalderonStatus {
    use calderon_core::LabError::*;
    match err {
        Config(_) | InvalidArgument(_) | InvalidGrid(_) | InvalidRegion(_) | InvalidPatch(_) => {
            CalderonStatus::ConfigError
        }
        Io(_) | Serde(_) => CalderonStatus::IoError,
        _ => CalderonStatus::NumericalError,
    }
}

fn guard<F: FnOnce() -> Result<(), (CalderonStatus, String)>>(f: F) -> CalderonStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CalderonStatus::Ok,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic across the FFI boundary".into());
            CalderonStatus::Panic
        }
    }
}

fn lab_err(e: calderon_core::LabError) -> (CalderonStatus, String) {
    (status_of(&e), e.to_string())
}

/// Opaque experiment handle: a validated configuration.
pub struct CalderonLab {
    config: ExperimentConfig,
}

/// Thread-local description of the most recent error, or NULL when the last
/// call succeeded. The pointer stays valid until the next failing call on the
/// same thread.
#[no_mangle]
pub extern "C" fn calderon_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Library version string (static storage).
#[no_mangle]
pub extern "C" fn calderon_version() -> *const c_char {
    static VERSION: &[u8] = b"calderon-ffi 0.1.0\0";
    VERSION.as_ptr() as *const c_char
}

/// Parse a TOML experiment configuration into an opaque handle.
///
/// # Safety
/// `toml_text` must be a valid NUL-terminated string; `out_lab` must be a
/// valid, writable pointer. On success the caller owns the handle and must
/// release it with [`calderon_lab_free`].
#[no_mangle]
pub unsafe extern "C" fn calderon_lab_new(
    toml_text: *const c_char,
    out_lab: *mut *mut CalderonLab,
) -> CalderonStatus {
    guard(|| {
        if toml_text.is_null() || out_lab.is_null() {
            return Err((CalderonStatus::NullPointer, "null argument".into()));
        }
        let text = unsafe { CStr::from_ptr(toml_text) }
            .to_str()
            .map_err(|_| (CalderonStatus::InvalidUtf8, "config is not UTF-8".into()))?;
        let config = ExperimentConfig::from_toml(text).map_err(lab_err)?;
        let lab = Box::new(CalderonLab { config });
        unsafe { *out_lab = Box::into_raw(lab) };
        Ok(())
    })
}

/// Release a handle created by [`calderon_lab_new`]. NULL is a no-op.
///
/// # Safety
/// `lab` must be a pointer previously returned by `calderon_lab_new` and not
/// already freed.
#[no_mangle]
pub unsafe extern "C" fn calderon_lab_free(lab: *mut CalderonLab) {
    if !lab.is_null() {
        drop(unsafe { Box::from_raw(lab) });
    }
}

/// Number of interior grid nodes of the configured experiment.
///
/// # Safety
/// `lab` and `out_n` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn calderon_grid_size(
    lab: *const CalderonLab,
    out_n: *mut usize,
) -> CalderonStatus {
    guard(|| {
        if lab.is_null() || out_n.is_null() {
            return Err((CalderonStatus::NullPointer, "null argument".into()));
        }
        let lab = unsafe { &*lab };
        let grid = lab.config.grid().map_err(lab_err)?;
        unsafe { *out_n = grid.n_interior() };
        Ok(())
    })
}

/// Solve the Dirichlet problem (Delta + lambda - q0)u = 0 with the datum
/// exp(x1)|dM and write the interior field into `out_field` (length = grid
/// size). `out_residual` receives the relative algebraic residual.
///
/// # Safety
/// `out_field` must point to at least `calderon_grid_size` doubles.
#[no_mangle]
pub unsafe extern "C" fn calderon_forward_dirichlet(
    lab: *const CalderonLab,
    lambda: c_double,
    out_field: *mut c_double,
    out_residual: *mut c_double,
) -> CalderonStatus {
    guard(|| {
        if lab.is_null() || out_field.is_null() || out_residual.is_null() {
            return Err((CalderonStatus::NullPointer, "null argument".into()));
        }
        let lab = unsafe { &*lab };
        let grid = lab.config.grid().map_err(lab_err)?;
        let q0 = lab.config.q0_field(&grid).map_err(lab_err)?;
        let op = SchrodingerOp::new(grid.clone(), q0).map_err(lab_err)?;
        let phi = BoundaryField::from_fn(&grid, BoundaryPatch::full_boundary(&grid), |x| {
            Complex::new(x[0].exp(), 0.0)
        });
        let sol = solve_dirichlet(&op, lambda, &phi).map_err(lab_err)?;
        let n = grid.n_interior();
        let out = unsafe { std::slice::from_raw_parts_mut(out_field, n) };
        for (o, v) in out.iter_mut().zip(&sol.interior) {
            *o = v.re;
        }
        unsafe { *out_residual = sol.residual };
        Ok(())
    })
}

/// Run the stability sweep and write records.csv, fits.json, manifest.json
/// into the directory named by the config (or `out_dir` when non-NULL).
///
/// # Safety
/// `out_dir`, when non-NULL, must be a valid NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn calderon_sweep_run(
    lab: *const CalderonLab,
    out_dir: *const c_char,
    out_n_records: *mut usize,
) -> CalderonStatus {
    guard(|| {
        if lab.is_null() || out_n_records.is_null() {
            return Err((CalderonStatus::NullPointer, "null argument".into()));
        }
        let lab = unsafe { &*lab };
        let mut config = lab.config.clone();
        if !out_dir.is_null() {
            let dir = unsafe { CStr::from_ptr(out_dir) }
                .to_str()
                .map_err(|_| (CalderonStatus::InvalidUtf8, "out_dir is not UTF-8".into()))?;
            config.output_dir = dir.to_string();
        }
        let out = run_stability_sweep(&config).map_err(lab_err)?;
        calderon_core::experiment::emit_report(
            &config,
            &out,
            &[],
            std::path::Path::new(&config.output_dir),
        )
        .map_err(lab_err)?;
        unsafe { *out_n_records = out.records.len() };
        Ok(())
    })
}

/// End-to-end oracle-mode reconstruction at the config's first lambda and the
/// given tau with s = tau^{2/(n+2)}; returns the relative H^{-1} error.
///
/// # Safety
/// `lab` and `out_rel_error` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn calderon_reconstruct_rel_error(
    lab: *const CalderonLab,
    tau: c_double,
    out_rel_error: *mut c_double,
) -> CalderonStatus {
    guard(|| {
        if lab.is_null() || out_rel_error.is_null() {
            return Err((CalderonStatus::NullPointer, "null argument".into()));
        }
        let lab = unsafe { &*lab };
        let cfg = &lab.config;
        let grid = cfg.grid().map_err(lab_err)?;
        let partition = cfg.partition(&grid).map_err(lab_err)?;
        let q0 = cfg.q0_field(&grid).map_err(lab_err)?;
        let shape = cfg.perturbation_shape(&grid).map_err(lab_err)?;
        let amp = cfg.amplitudes[0];
        let dq: Vec<f64> = shape.iter().map(|s| amp * s).collect();
        let q1_vals: Vec<f64> = q0.values().iter().zip(&dq).map(|(a, d)| a + d).collect();
        let q1 = calderon_core::PotentialField::new(&grid, q1_vals).map_err(lab_err)?;
        let op1 = SchrodingerOp::new(grid.clone(), q1).map_err(lab_err)?;
        let op0 = SchrodingerOp::new(grid.clone(), q0).map_err(lab_err)?;
        let lambda = cfg.lambdas[0];
        let kappa = cfg.kappa0 + cfg.kappa1;
        let scales = choose_scales(tau, grid.dim(), None).map_err(lab_err)?;
        let sampler = CgoSampler::new(&op1, &op0, &partition, lambda, tau, kappa, cfg.seed, 1e-9)
            .map_err(lab_err)?;
        let set = sampler.sample_set(scales.s, SampleMode::Oracle).map_err(lab_err)?;
        let torus = Torus::enclosing(&grid);
        let (rec, _) = lowpass_invert(&set, &torus).map_err(lab_err)?;
        let dq_torus: Vec<f64> = torus.embed_interior(&grid, &dq).iter().map(|v| v.re).collect();
        let (_, rel) = h_minus1_error(&torus, &rec, &dq_torus);
        let rel = rel.ok_or((
            CalderonStatus::NumericalError,
            "zero true field: relative error undefined".to_string(),
        ))?;
        unsafe { *out_rel_error = rel };
        Ok(())
    })
}

/// Box spectrum gap explorer: first `k` eigenvalues sum k_j^2/mu_j^2 into
/// `out_values` (length >= k); `out_all_simple` is 1 when every multiplicity
/// is one.
///
/// # Safety
/// `mu` must point to `mu_len` doubles; `out_values` to at least `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn calderon_gap_eigenvalues(
    mu: *const c_double,
    mu_len: usize,
    k: usize,
    out_values: *mut c_double,
    out_all_simple: *mut c_int,
) -> CalderonStatus {
    guard(|| {
        if mu.is_null() || out_values.is_null() || out_all_simple.is_null() {
            return Err((CalderonStatus::NullPointer, "null argument".into()));
        }
        let mu = unsafe { std::slice::from_raw_parts(mu, mu_len) };
        let rep = gap_explorer(mu, k).map_err(lab_err)?;
        let out = unsafe { std::slice::from_raw_parts_mut(out_values, k) };
        out.copy_from_slice(&rep.eigenvalues);
        unsafe { *out_all_simple = if rep.all_simple { 1 } else { 0 } };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_toml() -> CString {
        CString::new(
            r#"
box_sides = [3.141592653589793, 3.141592653589793, 3.141592653589793]
resolution = [9, 9, 9]
inner_lo = [0.7853981633974483, 0.7853981633974483, 0.7853981633974483]
inner_hi = [2.356194490192345, 2.356194490192345, 2.356194490192345]
gamma_axis = 0
gamma_side = "lo"
sigma_axis = 0
sigma_side = "hi"
amplitudes = [0.05]
lambdas = [4.0]
kappa0 = 0.5
kappa1 = 1.0
lambda0 = 1.0
seed = 7
mode = "dirichlet"
max_modes_per_axis = 3
output_dir = "out"

[q0]
kind = "zero"

[perturbation]
kind = "bump"
"#,
        )
        .unwrap()
    }

    #[test]
    fn lifecycle_and_forward() {
        let toml = sample_toml();
        let mut lab: *mut CalderonLab = std::ptr::null_mut();
        let st = unsafe { calderon_lab_new(toml.as_ptr(), &mut lab) };
        assert_eq!(st, CalderonStatus::Ok);
        assert!(!lab.is_null());
        let mut n = 0usize;
        assert_eq!(unsafe { calderon_grid_size(lab, &mut n) }, CalderonStatus::Ok);
        assert_eq!(n, 729);
        let mut field = vec![0.0f64; n];
        let mut residual = f64::NAN;
        let st = unsafe {
            calderon_forward_dirichlet(lab, 4.0, field.as_mut_ptr(), &mut residual)
        };
        assert_eq!(st, CalderonStatus::Ok);
        assert!(residual <= 1e-10);
        assert!(field.iter().any(|&v| v != 0.0));
        unsafe { calderon_lab_free(lab) };
    }

    #[test]
    fn null_and_bad_inputs_are_rejected() {
        let mut lab: *mut CalderonLab = std::ptr::null_mut();
        assert_eq!(
            unsafe { calderon_lab_new(std::ptr::null(), &mut lab) },
            CalderonStatus::NullPointer
        );
        let bad = CString::new("this is not toml = [").unwrap();
        assert_eq!(
            unsafe { calderon_lab_new(bad.as_ptr(), &mut lab) },
            CalderonStatus::ConfigError
        );
        let msg = calderon_last_error_message();
        assert!(!msg.is_null());
        let text = unsafe { CStr::from_ptr(msg) }.to_str().unwrap();
        assert!(!text.is_empty());
        // freeing NULL is a no-op
        unsafe { calderon_lab_free(std::ptr::null_mut()) };
    }

    #[test]
    fn gap_eigenvalues_through_ffi() {
        let mu = [1.0f64, 1.0, 1.0];
        let mut values = vec![0.0f64; 12];
        let mut simple: c_int = -1;
        let st = unsafe {
            calderon_gap_eigenvalues(mu.as_ptr(), 3, 12, values.as_mut_ptr(), &mut simple)
        };
        assert_eq!(st, CalderonStatus::Ok);
        assert_eq!(simple, 0);
        assert!((values[0] - 3.0).abs() < 1e-12);
        assert!((values[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_through_ffi_writes_reports() {
        let toml = sample_toml();
        let mut lab: *mut CalderonLab = std::ptr::null_mut();
        assert_eq!(
            unsafe { calderon_lab_new(toml.as_ptr(), &mut lab) },
            CalderonStatus::Ok
        );
        let dir = std::env::temp_dir().join(format!("calderon_ffi_{}", std::process::id()));
        let dir_c = CString::new(dir.to_str().unwrap()).unwrap();
        let mut n_records = 0usize;
        let st = unsafe { calderon_sweep_run(lab, dir_c.as_ptr(), &mut n_records) };
        assert_eq!(st, CalderonStatus::Ok);
        assert_eq!(n_records, 1);
        assert!(dir.join("records.csv").exists());
        assert!(dir.join("manifest.json").exists());
        std::fs::remove_dir_all(&dir).ok();
        unsafe { calderon_lab_free(lab) };
    }
}
