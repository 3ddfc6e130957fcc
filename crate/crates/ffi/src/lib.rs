//! C ABI over snapshot scoring and HAC regression.
//!
//! Every function returns an [`NeStatus`]; results are written through out-pointers. On failure
//! the message is kept per thread and can be read with [`ne_last_error`]. Handles are opaque and
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::DMatrix;
use news_entropy::corpus::{preprocess, Article};
use news_entropy::econ::{ols_hac, RegressionFit};
use news_entropy::embeddings::EmbeddingTable;
use news_entropy::entropy::Scorer;
use news_entropy::lstm::{next_word_distribution, Dims, ModelSnapshot};
use news_entropy::{Error, Month};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    InvalidArgument = 6,
    Numeric = 7,
    RankDeficient = 8,
    Panic = 9,
}

/// A loaded model snapshot with its embedding table.
pub struct NeSnapshot {
    snapshot: ModelSnapshot,
    embeddings: EmbeddingTable,
}

/// A fitted regression.
pub struct NeRegression {
    fit: RegressionFit,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> NeStatus {
    match e {
        Error::Io { .. } => NeStatus::Io,
        Error::Parse { .. } | Error::InvalidMonth(_) => NeStatus::Parse,
        Error::Config(_) => NeStatus::Config,
        Error::NonFinite(_) | Error::Singular(_) => NeStatus::Numeric,
        Error::RankDeficient { .. } => NeStatus::RankDeficient,
        _ => NeStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (NeStatus, String)>) -> NeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NeStatus::Panic
        }
    }
}

trait Lift<T> {
    fn lift(self) -> Result<T, (NeStatus, String)>;
}

impl<T> Lift<T> for Result<T, Error> {
    fn lift(self) -> Result<T, (NeStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (NeStatus, String) {
    (NeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (NeStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (NeStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (NeStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failure on this thread; empty if none. Valid until the next call that
/// fails on the same thread.
#[no_mangle]
pub extern "C" fn ne_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Trainable parameter count of an LSTM language model with the given dimensions.
#[no_mangle]
pub extern "C" fn ne_param_count(d_in: usize, d_h: usize, d_out: usize) -> usize {
    Dims::new(d_in, d_h, d_out).param_count()
}

/// Loads a snapshot file and rebuilds its embedding table.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ne_snapshot_load(path: *const c_char, out: *mut *mut NeSnapshot) -> NeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let snapshot = ModelSnapshot::load(Path::new(path)).lift()?;
        let embeddings = snapshot.embeddings().lift()?;
        *out = Box::into_raw(Box::new(NeSnapshot { snapshot, embeddings }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`ne_snapshot_load`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ne_snapshot_free(handle: *mut NeSnapshot) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Output size of the snapshot: vocabulary words plus the unknown-word class.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ne_snapshot_output_size(handle: *const NeSnapshot, out: *mut usize) -> NeStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        *out_arg(out, "out")? = h.snapshot.vocab.output_size();
        Ok(())
    })
}

/// Mean per-token negative log-likelihood of `text` (nats), with the recurrent state carried
/// across segments of `segment_len` tokens.
///
/// # Safety
/// `handle` and `out` must be valid pointers; `text` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ne_snapshot_score(
    handle: *const NeSnapshot,
    text: *const c_char,
    segment_len: usize,
    out: *mut f64,
) -> NeStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let article = Article {
            id: "ffi".into(),
            month: Month::new(2000, 1).expect("valid month"),
            tokens: preprocess(text),
        };
        let scorer = Scorer::new(&h.snapshot, &h.embeddings, segment_len).lift()?;
        *out = scorer.article(&article).lift()?.value;
        Ok(())
    })
}

/// The `k` most probable next words after `prefix`. Writes up to `k` probabilities to `probs`
/// and the matching output ids to `ids`, and the number written to `written`.
///
/// # Safety
/// `probs` and `ids` must hold at least `k` elements; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ne_snapshot_top_k(
    handle: *const NeSnapshot,
    prefix: *const c_char,
    k: usize,
    ids: *mut usize,
    probs: *mut f64,
    written: *mut usize,
) -> NeStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        let prefix = str_arg(prefix, "prefix")?;
        let written = out_arg(written, "written")?;
        *written = 0;
        if k > 0 && (ids.is_null() || probs.is_null()) {
            return Err(null("ids or probs"));
        }
        let top = next_word_distribution(&h.snapshot, &h.embeddings, prefix, k).lift()?;
        let vocab = &h.snapshot.vocab;
        for (i, (word, p)) in top.iter().enumerate() {
            let id = if vocab.contains(word) { vocab.id(word) } else { vocab.unk_id() };
            *ids.add(i) = id as usize;
            *probs.add(i) = *p;
        }
        *written = top.len();
        Ok(())
    })
}

/// Copies the word with output id `id` into `buf` as a NUL-terminated string. `needed` receives
/// the buffer size required, including the terminator; nothing is copied if `len` is smaller.
///
/// # Safety
/// `buf` must hold `len` bytes (or be null with `len == 0`); other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ne_snapshot_word(
    handle: *const NeSnapshot,
    id: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> NeStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        let needed = out_arg(needed, "needed")?;
        let word = u32::try_from(id)
            .ok()
            .and_then(|i| h.snapshot.vocab.word(i))
            .ok_or_else(|| (NeStatus::InvalidArgument, format!("output id {id} out of range")))?;
        *needed = word.len() + 1;
        if len >= *needed {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(word.as_ptr(), buf.cast::<u8>(), word.len());
            *buf.add(word.len()) = 0;
        }
        Ok(())
    })
}

/// Least squares of `y` (length `n`) on the `n x k` row-major design `x` with Newey-West
/// covariance of `lags` lags. Include a column of ones for an intercept.
///
/// # Safety
/// `y` must hold `n` values, `x` `n * k` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ne_ols_hac(
    y: *const f64,
    x: *const f64,
    n: usize,
    k: usize,
    lags: usize,
    out: *mut *mut NeRegression,
) -> NeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if y.is_null() || x.is_null() {
            return Err(null("y or x"));
        }
        let cells = n
            .checked_mul(k)
            .ok_or_else(|| (NeStatus::InvalidArgument, "n * k overflows".to_string()))?;
        let y = std::slice::from_raw_parts(y, n);
        let x = DMatrix::from_row_slice(n, k, std::slice::from_raw_parts(x, cells));
        let names: Vec<String> = (0..k).map(|j| format!("x{j}")).collect();
        let fit = ols_hac(y, &x, &names, lags).lift()?;
        *out = Box::into_raw(Box::new(NeRegression { fit }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`ne_ols_hac`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ne_regression_free(handle: *mut NeRegression) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Coefficient, standard error and t-statistic of regressor `j`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ne_regression_coef(
    handle: *const NeRegression,
    j: usize,
    coef: *mut f64,
    se: *mut f64,
    t: *mut f64,
) -> NeStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        if j >= h.fit.coef.len() {
            return Err((NeStatus::InvalidArgument, format!("regressor {j} out of range")));
        }
        *out_arg(coef, "coef")? = h.fit.coef[j];
        *out_arg(se, "se")? = h.fit.se(j);
        *out_arg(t, "t")? = h.fit.t_stats[j];
        Ok(())
    })
}

/// HAC covariance entry `(i, j)`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ne_regression_cov(handle: *const NeRegression, i: usize, j: usize, out: *mut f64) -> NeStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        let k = h.fit.coef.len();
        if i >= k || j >= k {
            return Err((NeStatus::InvalidArgument, format!("entry ({i}, {j}) out of range")));
        }
        *out_arg(out, "out")? = h.fit.cov[i][j];
        Ok(())
    })
}

/// R-squared and observation count.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ne_regression_summary(handle: *const NeRegression, r2: *mut f64, n_obs: *mut usize) -> NeStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        *out_arg(r2, "r2")? = h.fit.r2;
        *out_arg(n_obs, "n_obs")? = h.fit.n_obs;
        Ok(())
    })
}
