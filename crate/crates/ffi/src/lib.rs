//! C ABI over the duplex-coupling toolkit.
//!
//! Every function returns a [`DcStatus`]; results come back through out
//! pointers. After a non-`Ok` status, [`dc_last_error`] describes the failure
//! on the calling thread. Traces are opaque [`DcTrace`] handles released with
//! [`dc_trace_free`]. Buffers are caller-owned and row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use duplex_coupling::probe::auc_roc;
use duplex_coupling::segmentation::{annotate, Transition};
use duplex_coupling::similarity::{lagged_cka, linear_cka, symmetric_lags, LagOptions};
use duplex_coupling::toyduplex::{simulate_dialogue, SimConfig};
use duplex_coupling::trace::{read_trace, write_trace};
use duplex_coupling::{DialogueTrace, Error, ExperimentCondition, FrameClock, Speaker, Variant};
use ndarray::ArrayView2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Degenerate = 5,
    NumericFault = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcSpeaker {
    A = 0,
    B = 1,
}

impl From<DcSpeaker> for Speaker {
    fn from(s: DcSpeaker) -> Self {
        match s {
            DcSpeaker::A => Speaker::A,
            DcSpeaker::B => Speaker::B,
        }
    }
}

/// Opaque dialogue trace.
pub struct DcTrace {
    inner: DialogueTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DcStatus {
    match e {
        Error::Io { .. } => DcStatus::Io,
        Error::Manifest(_)
        | Error::SizeMismatch { .. }
        | Error::NonFinite { .. }
        | Error::PrecisionLoss { .. }
        | Error::InvalidTrace(_) => DcStatus::Format,
        Error::Degenerate(_)
        | Error::InsufficientFrames { .. }
        | Error::EmptyMask
        | Error::UndefinedAuc { .. } => DcStatus::Degenerate,
        Error::NumericFault { .. } => DcStatus::NumericFault,
        _ => DcStatus::InvalidArgument,
    }
}

struct Fail(DcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DcStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(DcStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    non_null(p, "path")?;
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail(DcStatus::InvalidArgument, "path is not UTF-8".into()))
}

unsafe fn trace_ref<'a>(t: *const DcTrace) -> Result<&'a DialogueTrace, Fail> {
    non_null(t, "trace")?;
    Ok(&(*t).inner)
}

unsafe fn out_slice<'a, T>(buf: *mut T, len: usize, needed: usize) -> Result<&'a mut [T], Fail> {
    non_null(buf, "buffer")?;
    if len < needed {
        return Err(Fail(
            DcStatus::BufferTooSmall,
            format!("buffer holds {len} elements, need {needed}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(buf, needed))
}

/// Message for the last failure on this thread; empty after a success. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Reads and validates a trace directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_read(path: *const c_char, out: *mut *mut DcTrace) -> DcStatus {
    guard(|| {
        non_null(out, "out")?;
        let inner = read_trace(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(DcTrace { inner }));
        Ok(())
    })
}

/// Simulates one toy dialogue with the default agent configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_simulate(
    noise_p: f64,
    pad_bias_a: f64,
    pad_bias_b: f64,
    finetuned_a: bool,
    finetuned_b: bool,
    seed: u64,
    n_frames: usize,
    frame_ms: u32,
    out: *mut *mut DcTrace,
) -> DcStatus {
    guard(|| {
        non_null(out, "out")?;
        let variant = |f: bool| if f { Variant::Finetuned } else { Variant::Default };
        let cond = ExperimentCondition {
            noise_p,
            pad_bias_a,
            pad_bias_b,
            variant_a: variant(finetuned_a),
            variant_b: variant(finetuned_b),
            seed,
        };
        let clock = FrameClock::new(frame_ms)?;
        let inner = simulate_dialogue(&cond, n_frames, clock, &SimConfig::default())?;
        *out = Box::into_raw(Box::new(DcTrace { inner }));
        Ok(())
    })
}

/// # Safety
/// `trace` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_write(trace: *const DcTrace, path: *const c_char) -> DcStatus {
    guard(|| {
        write_trace(trace_ref(trace)?, &path_arg(path)?)?;
        Ok(())
    })
}

/// Releases a trace. Null is ignored.
///
/// # Safety
/// `trace` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_free(trace: *mut DcTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// `trace` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_n_frames(trace: *const DcTrace, out: *mut usize) -> DcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = trace_ref(trace)?.n_frames();
        Ok(())
    })
}

/// # Safety
/// `trace` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_frame_ms(trace: *const DcTrace, out: *mut u32) -> DcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = trace_ref(trace)?.clock().frame_ms();
        Ok(())
    })
}

/// Activation dimension of one participant.
///
/// # Safety
/// `trace` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_dim(trace: *const DcTrace, speaker: DcSpeaker, out: *mut usize) -> DcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = trace_ref(trace)?.participant(speaker.into()).activations.dim();
        Ok(())
    })
}

/// Copies `n_frames × dim` activations, row-major.
///
/// # Safety
/// `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_activations(
    trace: *const DcTrace,
    speaker: DcSpeaker,
    buf: *mut f64,
    len: usize,
) -> DcStatus {
    guard(|| {
        let act = trace_ref(trace)?.participant(speaker.into()).activations.data();
        let dst = out_slice(buf, len, act.len())?;
        for (d, s) in dst.iter_mut().zip(act.iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// Copies the per-frame VAD track as 0/1 bytes.
///
/// # Safety
/// `buf` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_vad(
    trace: *const DcTrace,
    speaker: DcSpeaker,
    buf: *mut u8,
    len: usize,
) -> DcStatus {
    guard(|| {
        let vad = trace_ref(trace)?.participant(speaker.into()).vad.voiced();
        let dst = out_slice(buf, len, vad.len())?;
        for (d, &v) in dst.iter_mut().zip(vad) {
            *d = u8::from(v);
        }
        Ok(())
    })
}

/// End-of-IPU targets (0/1 per frame) for one participant.
///
/// # Safety
/// `buf` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_eoi_targets(
    trace: *const DcTrace,
    speaker: DcSpeaker,
    buf: *mut u8,
    len: usize,
) -> DcStatus {
    guard(|| {
        let ann = annotate(trace_ref(trace)?);
        let eoi = &ann.speaker(speaker.into()).eoi;
        out_slice(buf, len, eoi.len())?.copy_from_slice(eoi);
        Ok(())
    })
}

/// Number of Hold and Non-Hold boundaries in a trace.
///
/// # Safety
/// `trace` must come from this library; both out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_transition_counts(
    trace: *const DcTrace,
    holds: *mut usize,
    non_holds: *mut usize,
) -> DcStatus {
    guard(|| {
        non_null(holds, "holds")?;
        non_null(non_holds, "non_holds")?;
        let ann = annotate(trace_ref(trace)?);
        let count = |t| ann.transitions.iter().filter(|l| l.label == t).count();
        *holds = count(Transition::Hold);
        *non_holds = count(Transition::NonHold);
        Ok(())
    })
}

/// Linear CKA of two row-major matrices sharing `n_rows`.
///
/// # Safety
/// `x` must hold `n_rows * dim_x` doubles, `y` `n_rows * dim_y`.
#[no_mangle]
pub unsafe extern "C" fn dc_linear_cka(
    x: *const f64,
    y: *const f64,
    n_rows: usize,
    dim_x: usize,
    dim_y: usize,
    out: *mut f64,
) -> DcStatus {
    guard(|| {
        non_null(x, "x")?;
        non_null(y, "y")?;
        non_null(out, "out")?;
        let xs = std::slice::from_raw_parts(x, n_rows * dim_x);
        let ys = std::slice::from_raw_parts(y, n_rows * dim_y);
        let shape = |e: ndarray::ShapeError| Fail(DcStatus::InvalidArgument, e.to_string());
        let xv = ArrayView2::from_shape((n_rows, dim_x), xs).map_err(shape)?;
        let yv = ArrayView2::from_shape((n_rows, dim_y), ys).map_err(shape)?;
        *out = linear_cka(xv, yv)?;
        Ok(())
    })
}

/// Lagged CKA between the two participants for lags `-max_lag..=max_lag`.
/// Lags with too little overlap are written as NaN.
///
/// # Safety
/// `values` must hold `len >= 2 * max_lag + 1` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_lagged_cka(
    trace: *const DcTrace,
    max_lag: i64,
    min_overlap: usize,
    values: *mut f64,
    len: usize,
) -> DcStatus {
    guard(|| {
        if max_lag < 0 {
            return Err(Fail(DcStatus::InvalidArgument, "max_lag must be >= 0".into()));
        }
        let t = trace_ref(trace)?;
        let lags = symmetric_lags(max_lag);
        let dst = out_slice(values, len, lags.len())?;
        let curve = lagged_cka(
            &t.participant(Speaker::A).activations,
            &t.participant(Speaker::B).activations,
            &lags,
            LagOptions {
                min_overlap,
                ..LagOptions::default()
            },
        )?;
        for (d, v) in dst.iter_mut().zip(&curve.values) {
            *d = v.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// AUC-ROC with ties counted one half. Labels are 0 or 1.
///
/// # Safety
/// `scores` and `labels` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn dc_auc_roc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> DcStatus {
    guard(|| {
        non_null(scores, "scores")?;
        non_null(labels, "labels")?;
        non_null(out, "out")?;
        let s = std::slice::from_raw_parts(scores, n);
        let l = std::slice::from_raw_parts(labels, n);
        *out = auc_roc(s, l)?;
        Ok(())
    })
}
