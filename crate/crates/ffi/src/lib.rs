//! C ABI over the `hhi` library.
//!
//! Every fallible function returns an [`HhiStatus`]; on failure the message
//! is available from [`hhi_last_error`] on the same thread until the next
//! failing call. Models and trials are opaque handles created by the
//! `*_load` functions and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hhi::channel::{self, PropagationConfig};
use hhi::domain::{InteractionLabel, Trial, NUM_CLASSES};
use hhi::features::robust_transform;
use hhi::model::{AttentionBiGru, ModelWeights};
use hhi::pipeline::{classify_frame, raw_features};
use hhi::postprocess;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HhiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Shape = 4,
    Format = 5,
    Checksum = 6,
    Version = 7,
    Io = 8,
    Config = 9,
    Diverged = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// A loaded fold model plus its scaler.
pub struct HhiModel {
    weights: ModelWeights,
    model: AttentionBiGru,
}

/// A loaded trial recording.
pub struct HhiTrial {
    trial: Trial,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &hhi::Error) -> HhiStatus {
    match e.root() {
        hhi::Error::Domain(_) => HhiStatus::Domain,
        hhi::Error::Shape(_) => HhiStatus::Shape,
        hhi::Error::Format(_) => HhiStatus::Format,
        hhi::Error::Checksum { .. } => HhiStatus::Checksum,
        hhi::Error::Version { .. } => HhiStatus::Version,
        hhi::Error::Diverged(_) => HhiStatus::Diverged,
        hhi::Error::Config(_) => HhiStatus::Config,
        hhi::Error::Io(_) | hhi::Error::Path { .. } => HhiStatus::Io,
    }
}

struct Fail(HhiStatus, String);

impl From<hhi::Error> for Fail {
    fn from(e: hhi::Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(HhiStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(HhiStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HhiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HhiStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HhiStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn labels_in(raw: &[u32]) -> Result<Vec<usize>, Fail> {
    let labels: Vec<usize> = raw.iter().map(|&l| l as usize).collect();
    postprocess::check_labels(&labels)?;
    Ok(labels)
}

fn copy_labels(src: &[usize], dst: &mut [u32]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = s as u32;
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hhi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hhi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of interaction classes.
#[no_mangle]
pub extern "C" fn hhi_label_count() -> usize {
    NUM_CLASSES
}

/// Static name of class `index`, or null when out of range.
#[no_mangle]
pub extern "C" fn hhi_label_name(index: u32) -> *const c_char {
    const NAMES: [&CStr; NUM_CLASSES] = [
        c"steady-state",
        c"approaching",
        c"departing",
        c"handshaking",
        c"high-five",
        c"hugging",
        c"kicking-left",
        c"kicking-right",
        c"pointing-left",
        c"pointing-right",
        c"punching-left",
        c"punching-right",
        c"pushing",
    ];
    NAMES.get(index as usize).map_or(ptr::null(), |n| n.as_ptr())
}

/// Class index of a label name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hhi_label_index(name: *const c_char, out_index: *mut u32) -> HhiStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let s = CStr::from_ptr(name).to_str().map_err(|_| invalid("name is not valid UTF-8"))?;
        let label = InteractionLabel::from_name(s)?;
        *out_arg(out_index, "out_index")? = label.index() as u32;
        Ok(())
    })
}

/// Carrier wavelength `c / freq_hz` in meters.
///
/// # Safety
/// `out_meters` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hhi_wavelength(freq_hz: f64, out_meters: *mut f64) -> HhiStatus {
    guard(|| {
        *out_arg(out_meters, "out_meters")? = channel::wavelength_at(freq_hz)?;
        Ok(())
    })
}

/// Log-distance path loss in dB at `distance` for the given reference loss,
/// reference distance and exponent.
///
/// # Safety
/// `out_db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hhi_path_loss_db(
    distance: f64,
    ref_distance: f64,
    exponent: f64,
    ref_loss_db: f64,
    out_db: *mut f64,
) -> HhiStatus {
    guard(|| {
        let config = PropagationConfig {
            tx_rx_distance: distance,
            ref_distance,
            path_loss_exponent: exponent,
            ..PropagationConfig::default()
        };
        *out_arg(out_db, "out_db")? = channel::path_loss_db(&config, ref_loss_db)?;
        Ok(())
    })
}

/// Rician received-power density at `p` for K factor `k` and mean power
/// `p_bar`.
///
/// # Safety
/// `out_density` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hhi_rician_power_pdf(p: f64, k: f64, p_bar: f64, out_density: *mut f64) -> HhiStatus {
    guard(|| {
        *out_arg(out_density, "out_density")? = channel::rician_power_pdf(p, k, p_bar)?;
        Ok(())
    })
}

/// Per-position majority vote over `folds` label rows of length `len`
/// (row-major `folds × len`); ties go to the lowest class index.
///
/// # Safety
/// `labels` must hold `folds * len` values and `out` must hold `len`.
#[no_mangle]
pub unsafe extern "C" fn hhi_ensemble_mode(labels: *const u32, folds: usize, len: usize, out: *mut u32) -> HhiStatus {
    guard(|| {
        let total = folds.checked_mul(len).ok_or_else(|| invalid("folds * len overflows"))?;
        let flat = labels_in(slice_arg(labels, total, "labels")?)?;
        let rows: Vec<Vec<usize>> = if len == 0 {
            vec![Vec::new(); folds]
        } else {
            flat.chunks(len).map(<[usize]>::to_vec).collect()
        };
        let mode = postprocess::ensemble_mode(&rows)?;
        copy_labels(&mode, slice_out(out, len, "out")?);
        Ok(())
    })
}

/// Apply the prediction smoother (window 20 per side) to `len` labels.
///
/// # Safety
/// `labels` and `out` must each hold `len` values; they may not overlap.
#[no_mangle]
pub unsafe extern "C" fn hhi_smooth(labels: *const u32, len: usize, out: *mut u32) -> HhiStatus {
    guard(|| {
        let input = labels_in(slice_arg(labels, len, "labels")?)?;
        copy_labels(&postprocess::smooth(&input), slice_out(out, len, "out")?);
        Ok(())
    })
}

/// Load a weight bundle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hhi_model_load(path: *const c_char, out_model: *mut *mut HhiModel) -> HhiStatus {
    guard(|| {
        let out = out_arg(out_model, "out_model")?;
        let weights = ModelWeights::load(&path_arg(path)?)?;
        let model = weights.to_model()?;
        *out = Box::into_raw(Box::new(HhiModel { weights, model }));
        Ok(())
    })
}

/// Release a model; null is ignored.
///
/// # Safety
/// `model` must come from [`hhi_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hhi_model_free(model: *mut HhiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Sequence length the model expects (packets per trial).
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn hhi_model_seq_len(model: *const HhiModel) -> usize {
    model.as_ref().map_or(0, |m| m.weights.arch.seq_len)
}

/// Feature columns the model expects per packet.
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn hhi_model_feature_dim(model: *const HhiModel) -> usize {
    model.as_ref().map_or(0, |m| m.weights.arch.feature_dim)
}

/// Per-packet labels for a scaled `rows × cols` feature matrix (row-major).
///
/// # Safety
/// `model` must be live; `features` must hold `rows * cols` values and
/// `out_labels` must hold `rows`.
#[no_mangle]
pub unsafe extern "C" fn hhi_model_predict(
    model: *const HhiModel,
    features: *const f64,
    rows: usize,
    cols: usize,
    out_labels: *mut u32,
) -> HhiStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let total = rows.checked_mul(cols).ok_or_else(|| invalid("rows * cols overflows"))?;
        let data = slice_arg(features, total, "features")?.to_vec();
        let frame = hhi::features::FeatureFrame::new(rows, cols, data, None)?;
        let labels = m.model.predict_labels(&frame)?;
        copy_labels(&labels, slice_out(out_labels, rows, "out_labels")?);
        Ok(())
    })
}

/// Load a trial file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_trial` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hhi_trial_load(path: *const c_char, out_trial: *mut *mut HhiTrial) -> HhiStatus {
    guard(|| {
        let out = out_arg(out_trial, "out_trial")?;
        let trial = hhi::dataio::read_trial(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(HhiTrial { trial }));
        Ok(())
    })
}

/// Release a trial; null is ignored.
///
/// # Safety
/// `trial` must come from [`hhi_trial_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hhi_trial_free(trial: *mut HhiTrial) {
    if !trial.is_null() {
        drop(Box::from_raw(trial));
    }
}

/// Number of packets in a trial.
///
/// # Safety
/// `trial` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn hhi_trial_len(trial: *const HhiTrial) -> usize {
    trial.as_ref().map_or(0, |t| t.trial.len())
}

/// Classify a trial with an ensemble of models: the trial is normalized to
/// the models' sequence length, scaled with the first model's scaler, and
/// each model's labels are mode-ensembled and smoothed. `out_ensembled` and
/// `out_smoothed` must each hold `capacity >= seq_len` labels; `out_len`
/// receives the number written. Either output may be null.
///
/// # Safety
/// `models` must point to `n_models` live model handles sharing one
/// architecture; `trial` must be live; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hhi_classify_trial(
    models: *const *const HhiModel,
    n_models: usize,
    trial: *const HhiTrial,
    out_ensembled: *mut u32,
    out_smoothed: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> HhiStatus {
    guard(|| {
        let handles = slice_arg(models, n_models, "models")?;
        if handles.is_empty() {
            return Err(invalid("no models given"));
        }
        let ms = handles
            .iter()
            .map(|&h| h.as_ref().ok_or_else(|| null("model handle")))
            .collect::<Result<Vec<&HhiModel>, Fail>>()?;
        let t = trial.as_ref().ok_or_else(|| null("trial"))?;
        let out_len = out_arg(out_len, "out_len")?;
        let arch = &ms[0].weights.arch;
        if ms.iter().any(|m| &m.weights.arch != arch) {
            return Err(invalid("models have different architectures"));
        }
        if capacity < arch.seq_len {
            *out_len = arch.seq_len;
            return Err(Fail(
                HhiStatus::BufferTooSmall,
                format!("capacity {capacity} < sequence length {}", arch.seq_len),
            ));
        }
        let raw = raw_features(&t.trial, arch.seq_len)?;
        let frame = match &ms[0].weights.scaler {
            Some(s) => robust_transform(&raw, s)?,
            None => raw,
        };
        let nets: Vec<&AttentionBiGru> = ms.iter().map(|m| &m.model).collect();
        let trace = classify_frame(&nets, &frame)?;
        if !out_ensembled.is_null() {
            copy_labels(&trace.ensembled, slice_out(out_ensembled, trace.len(), "out_ensembled")?);
        }
        if !out_smoothed.is_null() {
            copy_labels(&trace.smoothed, slice_out(out_smoothed, trace.len(), "out_smoothed")?);
        }
        *out_len = trace.len();
        Ok(())
    })
}
