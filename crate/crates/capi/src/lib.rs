//! C ABI for the advspheres library.
//!
//! Every handle returned by a constructor is opaque and must be released
//! with its matching `_free` function. Functions that can fail either
//! return a null pointer (constructors) or a non-zero [`AdvStatus`];
//! in both cases a human-readable message is available from
//! [`adv_last_error_message`] until the next API call on the same thread.
//!
//! Results are bit-for-bit identical to the `advspheres` CLI: `adv_fit`
//! matches `advspheres infer`, and `adv_attack_run` matches one source
//! direction of `advspheres attack`, given the same configuration keys.

// The safety contract is uniform across the API instead of repeated on all
// functions: handle and string arguments must be valid (non-dangling,
// unaliased for the duration of the call) pointers from this API or NUL
// terminated C strings. Null handles are tolerated and reported as
// `ADV_NULL_ARGUMENT` rather than dereferenced.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use advspheres::attack::{run_attack, AttackResult};
use advspheres::bench::{avg_confidence, fit_method, Method};
use advspheres::config::{PartialRunConfig, RunConfig};
use advspheres::data::{feature_map_matrix, fit_normalizer, generate, FeatureNormalizer};
use advspheres::math::derive_seed;
use advspheres::model::WeightEnsemble;
use advspheres::{Error, Result};
use ndarray::Array2;

/// Status codes returned by fallible functions. The non-zero values mirror
/// the CLI exit codes where a counterpart exists (2 usage, 3 data,
/// 4 numerical failure).
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AdvStatus {
    /// Success.
    AdvOk = 0,
    /// A required pointer argument was null.
    AdvNullArgument = 1,
    /// Invalid configuration key, value, or method name.
    AdvUsageError = 2,
    /// Missing or malformed data (files, CSV, dimension mismatches).
    AdvDataError = 3,
    /// Numerical failure (optimization, sampling, or attack divergence).
    AdvNumericError = 4,
    /// A provided buffer was too small for the requested copy.
    AdvBufferTooSmall = 5,
    /// A string argument was not valid UTF-8.
    AdvInvalidUtf8 = 6,
    /// The library panicked; state may be inconsistent.
    AdvPanic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized: String = message.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> AdvStatus {
    match err.exit_code() {
        2 => AdvStatus::AdvUsageError,
        3 => AdvStatus::AdvDataError,
        _ => AdvStatus::AdvNumericError,
    }
}

/// Run a fallible closure behind a panic guard, returning a status.
fn guarded_status(f: impl FnOnce() -> Result<()>) -> AdvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdvStatus::AdvOk,
        Ok(Err(err)) => {
            set_error(&err.to_string());
            status_of(&err)
        }
        Err(_) => {
            set_error("internal panic");
            AdvStatus::AdvPanic
        }
    }
}

/// Run a fallible constructor behind a panic guard, returning a raw
/// pointer (null on failure).
fn guarded_new<T>(f: impl FnOnce() -> Result<T>) -> *mut T {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(value)) => Box::into_raw(Box::new(value)),
        Ok(Err(err)) => {
            set_error(&err.to_string());
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

unsafe fn required_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str> {
    if ptr.is_null() {
        return Err(Error::Config(format!("{name} must not be null")));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| Error::Config(format!("{name} is not valid UTF-8")))
}

macro_rules! require_handle {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => {
                set_error("null handle");
                return AdvStatus::AdvNullArgument;
            }
        }
    };
}

// ---------------------------------------------------------------------
// Library metadata and error reporting

/// Version of the library as a static, NUL-terminated string.
#[no_mangle]
pub extern "C" fn adv_version() -> *const c_char {
    const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message describing the most recent failure on the calling thread.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn adv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ---------------------------------------------------------------------
// Configuration

/// Resolved run configuration. Create with [`adv_config_new`], adjust
/// with [`adv_config_set`], release with [`adv_config_free`].
pub struct AdvConfig {
    run: RunConfig,
}

/// Create a configuration from a named profile (`"paper"` or `"ci"`).
/// Returns null and sets the error message when the profile is unknown.
#[no_mangle]
pub unsafe extern "C" fn adv_config_new(profile: *const c_char) -> *mut AdvConfig {
    guarded_new(|| {
        let name = unsafe { required_str(profile, "profile") }?;
        let profile = name
            .parse()
            .map_err(|_| Error::Config(format!("unknown profile '{name}'")))?;
        Ok(AdvConfig {
            run: RunConfig::profile_defaults(profile),
        })
    })
}

/// Set one configuration key. Keys and values use the same flat
/// namespace as the CLI's `--set KEY=VALUE` (e.g. `"dim"`, `"seed"`,
/// `"attack_restarts"`); the value is parsed first as a typed literal and
/// then as a string. The updated configuration is re-validated, so an
/// out-of-range value is rejected immediately.
#[no_mangle]
pub unsafe extern "C" fn adv_config_set(
    cfg: *mut AdvConfig,
    key: *const c_char,
    value: *const c_char,
) -> AdvStatus {
    let Some(cfg) = (unsafe { cfg.as_mut() }) else {
        set_error("null handle");
        return AdvStatus::AdvNullArgument;
    };
    guarded_status(|| {
        let key = unsafe { required_str(key, "key") }?;
        let value = unsafe { required_str(value, "value") }?;
        let partial = PartialRunConfig::from_toml(&format!("{key} = {value}\n"))
            .or_else(|_| {
                PartialRunConfig::from_toml(&format!("{key} = \"{}\"\n", value.escape_default()))
            })
            .map_err(|err| Error::Config(format!("{key}={value}: {err}")))?;
        let mut candidate = cfg.run.clone();
        candidate.apply_partial(&partial);
        candidate.validate()?;
        cfg.run = candidate;
        Ok(())
    })
}

/// Stable fingerprint of the statistical configuration (ignores output
/// paths and thread counts). Matches the `config_fingerprint` recorded in
/// CLI manifests.
#[no_mangle]
pub unsafe extern "C" fn adv_config_fingerprint(cfg: *const AdvConfig) -> u64 {
    match unsafe { cfg.as_ref() } {
        Some(cfg) => cfg.run.fingerprint(),
        None => 0,
    }
}

/// Release a configuration handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn adv_config_free(cfg: *mut AdvConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

// ---------------------------------------------------------------------
// Data

/// Generated sphere dataset: train and validation splits, already mapped
/// to normalized feature space, plus the fitted normalizer.
pub struct AdvDataset {
    train_features: Array2<f64>,
    train_labels: Vec<u8>,
    val_features: Array2<f64>,
    val_labels: Vec<u8>,
    normalizer: FeatureNormalizer,
    input_dim: usize,
}

/// Sample both splits from the configured spheres and fit the feature
/// normalizer on the training split, exactly as the benchmark does.
#[no_mangle]
pub unsafe extern "C" fn adv_dataset_generate(cfg: *const AdvConfig) -> *mut AdvDataset {
    guarded_new(|| {
        let cfg = unsafe { cfg.as_ref() }
            .ok_or_else(|| Error::Config("null config handle".into()))?;
        let sphere = cfg.run.sphere();
        let (train, val) = generate(&sphere)?;
        let mut train_features = feature_map_matrix(train.points.view());
        let normalizer = fit_normalizer(train_features.view())?;
        normalizer.normalize_in_place(&mut train_features);
        let mut val_features = feature_map_matrix(val.points.view());
        normalizer.normalize_in_place(&mut val_features);
        Ok(AdvDataset {
            train_features,
            train_labels: train.labels,
            val_features,
            val_labels: val.labels,
            normalizer,
            input_dim: sphere.dim,
        })
    })
}

/// Number of training points (0 for a null handle).
#[no_mangle]
pub unsafe extern "C" fn adv_dataset_train_len(ds: *const AdvDataset) -> usize {
    unsafe { ds.as_ref() }.map_or(0, |ds| ds.train_labels.len())
}

/// Number of validation points (0 for a null handle).
#[no_mangle]
pub unsafe extern "C" fn adv_dataset_val_len(ds: *const AdvDataset) -> usize {
    unsafe { ds.as_ref() }.map_or(0, |ds| ds.val_labels.len())
}

/// Input-space dimension D (0 for a null handle).
#[no_mangle]
pub unsafe extern "C" fn adv_dataset_dim(ds: *const AdvDataset) -> usize {
    unsafe { ds.as_ref() }.map_or(0, |ds| ds.input_dim)
}

/// Release a dataset handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn adv_dataset_free(ds: *mut AdvDataset) {
    if !ds.is_null() {
        drop(unsafe { Box::from_raw(ds) });
    }
}

// ---------------------------------------------------------------------
// Inference

/// Fitted weight ensemble plus the normalizer it was trained under (so
/// attacks can chain gradients back to input space).
pub struct AdvEnsemble {
    ensemble: WeightEnsemble,
    normalizer: FeatureNormalizer,
}

/// Fit one inference method on the dataset's training split. `method` is
/// a CLI method tag: `ml`, `map`, `bootstrap`, `mcmc`, `laplace`, `svi`,
/// `svi_hier`, or `mcmc_mean_hier`. Seeds derive from the configured
/// master seed exactly as in `advspheres infer`, so the resulting
/// ensemble matches the CLI's saved ensemble bit for bit.
#[no_mangle]
pub unsafe extern "C" fn adv_fit(
    cfg: *const AdvConfig,
    ds: *const AdvDataset,
    method: *const c_char,
) -> *mut AdvEnsemble {
    guarded_new(|| {
        let cfg = unsafe { cfg.as_ref() }
            .ok_or_else(|| Error::Config("null config handle".into()))?;
        let ds = unsafe { ds.as_ref() }
            .ok_or_else(|| Error::Config("null dataset handle".into()))?;
        let tag = unsafe { required_str(method, "method") }?;
        let method: Method = tag.parse()?;
        let bench_cfg = cfg.run.bench_config();
        let ensemble = fit_method(
            method,
            ds.train_features.view(),
            &ds.train_labels,
            &bench_cfg,
            0,
        )?;
        Ok(AdvEnsemble {
            ensemble,
            normalizer: ds.normalizer.clone(),
        })
    })
}

/// Number of ensemble members (0 for a null handle).
#[no_mangle]
pub unsafe extern "C" fn adv_ensemble_members(e: *const AdvEnsemble) -> usize {
    unsafe { e.as_ref() }.map_or(0, |e| e.ensemble.n_members())
}

/// Weight-space dimension (0 for a null handle).
#[no_mangle]
pub unsafe extern "C" fn adv_ensemble_dim(e: *const AdvEnsemble) -> usize {
    unsafe { e.as_ref() }.map_or(0, |e| e.ensemble.dim())
}

/// Copy the ensemble's weights into `out`, row-major
/// (members × dimension). `len` is the capacity of `out` in doubles and
/// must be at least members × dimension.
#[no_mangle]
pub unsafe extern "C" fn adv_ensemble_weights(
    e: *const AdvEnsemble,
    out: *mut f64,
    len: usize,
) -> AdvStatus {
    let e = require_handle!(e);
    if out.is_null() {
        set_error("null output buffer");
        return AdvStatus::AdvNullArgument;
    }
    let needed = e.ensemble.n_members() * e.ensemble.dim();
    if len < needed {
        set_error(&format!("buffer holds {len} doubles, need {needed}"));
        return AdvStatus::AdvBufferTooSmall;
    }
    for (i, &w) in e.ensemble.weights.iter().enumerate() {
        unsafe { *out.add(i) = w };
    }
    AdvStatus::AdvOk
}

/// Save the ensemble as `{stem}.csv` + `{stem}.meta.toml`, the format the
/// CLI's `infer` command writes and its `attack` command loads.
#[no_mangle]
pub unsafe extern "C" fn adv_ensemble_save(
    e: *const AdvEnsemble,
    stem: *const c_char,
) -> AdvStatus {
    let e = require_handle!(e);
    guarded_status(|| {
        let stem = unsafe { required_str(stem, "stem") }?;
        e.ensemble.save(&PathBuf::from(stem))
    })
}

/// Average predictive confidence in the true label over the dataset's
/// validation split, written to `out`.
#[no_mangle]
pub unsafe extern "C" fn adv_avg_confidence(
    e: *const AdvEnsemble,
    ds: *const AdvDataset,
    out: *mut f64,
) -> AdvStatus {
    let e = require_handle!(e);
    let ds = require_handle!(ds);
    if out.is_null() {
        set_error("null output pointer");
        return AdvStatus::AdvNullArgument;
    }
    guarded_status(|| {
        let value = avg_confidence(&e.ensemble, ds.val_features.view(), &ds.val_labels)?;
        unsafe { *out = value };
        Ok(())
    })
}

/// Release an ensemble handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn adv_ensemble_free(e: *mut AdvEnsemble) {
    if !e.is_null() {
        drop(unsafe { Box::from_raw(e) });
    }
}

// ---------------------------------------------------------------------
// Attack

/// Result of one projected-gradient attack (one source sphere).
pub struct AdvAttack {
    result: AttackResult,
}

/// Attack the ensemble from the sphere of `source_label` (0 inner,
/// 1 outer), maximizing the probability of the opposite label. Uses the
/// configured attack parameters and the same seed derivation as
/// `advspheres attack`, so results match the CLI run for run.
#[no_mangle]
pub unsafe extern "C" fn adv_attack_run(
    cfg: *const AdvConfig,
    e: *const AdvEnsemble,
    source_label: u8,
) -> *mut AdvAttack {
    guarded_new(|| {
        let cfg = unsafe { cfg.as_ref() }
            .ok_or_else(|| Error::Config("null config handle".into()))?;
        let e = unsafe { e.as_ref() }
            .ok_or_else(|| Error::Config("null ensemble handle".into()))?;
        if source_label > 1 {
            return Err(Error::Config(format!(
                "source_label must be 0 or 1, got {source_label}"
            )));
        }
        let sphere = cfg.run.sphere();
        let result = run_attack(
            &e.ensemble,
            &e.normalizer,
            sphere.radius_of(source_label),
            source_label,
            &cfg.run.attack_config(),
            derive_seed(cfg.run.seed, "cli/attack", source_label as u64),
        )?;
        Ok(AdvAttack { result })
    })
}

/// Best ensemble probability of the target label across restarts
/// (NaN for a null handle).
#[no_mangle]
pub unsafe extern "C" fn adv_attack_best_prob(a: *const AdvAttack) -> f64 {
    unsafe { a.as_ref() }.map_or(f64::NAN, |a| a.result.target_prob)
}

/// Input-space dimension of the attack point (0 for a null handle).
#[no_mangle]
pub unsafe extern "C" fn adv_attack_dim(a: *const AdvAttack) -> usize {
    unsafe { a.as_ref() }.map_or(0, |a| a.result.point.len())
}

/// Copy the best adversarial point (input-space coordinates, on the
/// source sphere) into `out`. `len` is the capacity of `out` in doubles.
#[no_mangle]
pub unsafe extern "C" fn adv_attack_point(
    a: *const AdvAttack,
    out: *mut f64,
    len: usize,
) -> AdvStatus {
    let a = require_handle!(a);
    if out.is_null() {
        set_error("null output buffer");
        return AdvStatus::AdvNullArgument;
    }
    let needed = a.result.point.len();
    if len < needed {
        set_error(&format!("buffer holds {len} doubles, need {needed}"));
        return AdvStatus::AdvBufferTooSmall;
    }
    for (i, &v) in a.result.point.iter().enumerate() {
        unsafe { *out.add(i) = v };
    }
    AdvStatus::AdvOk
}

/// Number of restarts the attack ran (0 for a null handle).
#[no_mangle]
pub unsafe extern "C" fn adv_attack_restarts(a: *const AdvAttack) -> usize {
    unsafe { a.as_ref() }.map_or(0, |a| a.result.per_restart.len())
}

/// Number of restarts that aborted on numerical failure (such restarts
/// are recorded but never contribute a best point).
#[no_mangle]
pub unsafe extern "C" fn adv_attack_aborted(a: *const AdvAttack) -> usize {
    unsafe { a.as_ref() }.map_or(0, |a| a.result.n_aborted())
}

/// Release an attack handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn adv_attack_free(a: *mut AdvAttack) {
    if !a.is_null() {
        drop(unsafe { Box::from_raw(a) });
    }
}
