//! C ABI over the viewalign library.
//!
//! Every function returns a [`VaStatus`]; on failure the message is available from
//! [`va_last_error`] on the calling thread. Stores are opaque handles released with
//! [`va_store_free`]. Output buffers are caller-allocated and their length is checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use viewalign::alignment::{self, profile_all};
use viewalign::data::DatasetStats;
use viewalign::error::Error;
use viewalign::eval;
use viewalign::fusion::{self, FusionMethod};
use viewalign::store::{self, ViewEmbeddingSet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    InvalidData = 4,
    Numeric = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VaFusion {
    Sum = 0,
    Concat = 1,
    Sa = 2,
}

/// Opaque embedding store.
pub struct VaStore {
    inner: ViewEmbeddingSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(VaStatus, String);

fn status_of(e: &Error) -> VaStatus {
    match e {
        Error::Parameter(_) | Error::UnknownUser(_) => VaStatus::InvalidArgument,
        Error::Io { .. } => VaStatus::Io,
        Error::Numeric(_) => VaStatus::Numeric,
        Error::Stage { source, .. } => status_of(source),
        _ => VaStatus::InvalidData,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: VaStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VaStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return fail(VaStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out_slice<'a, T>(ptr: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len < need {
        return fail(VaStatus::BufferTooSmall, format!("{what} holds {len}, needs {need}"));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return fail(VaStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, need))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut()
        .ok_or_else(|| Failure(VaStatus::NullPointer, format!("{what} is null")))
}

unsafe fn store_ref<'a>(store: *const VaStore) -> Result<&'a ViewEmbeddingSet, Failure> {
    store
        .as_ref()
        .map(|s| &s.inner)
        .ok_or_else(|| Failure(VaStatus::NullPointer, "store is null".into()))
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn va_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn va_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens and validates a store file and its manifest sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn va_store_open(path: *const c_char, out: *mut *mut VaStore) -> VaStatus {
    guard(|| {
        if path.is_null() {
            return fail(VaStatus::NullPointer, "path is null");
        }
        let out = out_ref(out, "out")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(VaStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let inner = store::read_store(Path::new(path))?;
        *out = Box::into_raw(Box::new(VaStore { inner }));
        Ok(())
    })
}

/// Releases a store. NULL is ignored.
///
/// # Safety
/// `store` must come from [`va_store_open`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn va_store_free(store: *mut VaStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// `store` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn va_store_dims(
    store: *const VaStore,
    n_items: *mut usize,
    n_views: *mut usize,
    dim: *mut usize,
) -> VaStatus {
    guard(|| {
        let s = store_ref(store)?;
        *out_ref(n_items, "n_items")? = s.n_items();
        *out_ref(n_views, "n_views")? = s.n_views();
        *out_ref(dim, "dim")? = s.dim();
        Ok(())
    })
}

/// Copies the `n_items * n_views * dim` text payload.
///
/// # Safety
/// `store` must be a live handle and `buf` valid for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn va_store_copy_text(store: *const VaStore, buf: *mut f32, len: usize) -> VaStatus {
    guard(|| {
        let s = store_ref(store)?;
        out_slice(buf, len, s.text_data().len(), "buf")?.copy_from_slice(s.text_data());
        Ok(())
    })
}

/// Copies the `n_items * dim` image payload.
///
/// # Safety
/// `store` must be a live handle and `buf` valid for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn va_store_copy_image(store: *const VaStore, buf: *mut f32, len: usize) -> VaStatus {
    guard(|| {
        let s = store_ref(store)?;
        out_slice(buf, len, s.image_data().len(), "buf")?.copy_from_slice(s.image_data());
        Ok(())
    })
}

/// Cosine similarity of two vectors of length `len`.
///
/// # Safety
/// `a` and `b` must be valid for `len` floats and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn va_cosine_similarity(a: *const f32, b: *const f32, len: usize, out: *mut f64) -> VaStatus {
    guard(|| {
        let (a, b) = (slice(a, len, "a")?, slice(b, len, "b")?);
        *out_ref(out, "out")? = alignment::cosine_similarity(a, b)?;
        Ok(())
    })
}

/// Temperature softmax over the cosines of `n_views` row-major views against one image.
///
/// # Safety
/// `views` must hold `n_views * dim` floats, `image` `dim` floats, `scores` `n_views` doubles.
#[no_mangle]
pub unsafe extern "C" fn va_view_scores(
    views: *const f32,
    n_views: usize,
    dim: usize,
    image: *const f32,
    tau: f64,
    scores: *mut f64,
) -> VaStatus {
    guard(|| {
        let views = slice(views, n_views * dim, "views")?;
        let image = slice(image, dim, "image")?;
        let p = alignment::view_similarity_scores(views, image, tau)?;
        out_slice(scores, n_views, n_views, "scores")?.copy_from_slice(&p.scores);
        Ok(())
    })
}

/// Similarity scores of every item, `n_items * n_views` row-major.
///
/// # Safety
/// `store` must be a live handle and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn va_store_profile(store: *const VaStore, tau: f64, out: *mut f64, len: usize) -> VaStatus {
    guard(|| {
        let s = store_ref(store)?;
        let profiles = profile_all(s, tau)?;
        let out = out_slice(out, len, s.n_items() * s.n_views(), "out")?;
        for (row, p) in out.chunks_exact_mut(s.n_views()).zip(&profiles) {
            row.copy_from_slice(&p.scores);
        }
        Ok(())
    })
}

/// Width of the fused text vector for a method.
///
/// # Safety
/// `store` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn va_fused_dim(store: *const VaStore, method: VaFusion, out: *mut usize) -> VaStatus {
    guard(|| {
        let s = store_ref(store)?;
        *out_ref(out, "out")? = fusion_method(method).output_dim(s.n_views(), s.dim());
        Ok(())
    })
}

fn fusion_method(m: VaFusion) -> FusionMethod {
    match m {
        VaFusion::Sum => FusionMethod::Sum,
        VaFusion::Concat => FusionMethod::Concat,
        VaFusion::Sa => FusionMethod::Sa,
    }
}

/// Fused text of every item, `n_items * fused_dim` row-major. `tau` is used by SA only.
///
/// # Safety
/// `store` must be a live handle and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn va_store_fuse(
    store: *const VaStore,
    method: VaFusion,
    tau: f64,
    out: *mut f64,
    len: usize,
) -> VaStatus {
    guard(|| {
        let s = store_ref(store)?;
        let method = fusion_method(method);
        let profiles = match method {
            FusionMethod::Sa => Some(profile_all(s, tau)?),
            _ => None,
        };
        let reps = fusion::fuse_all(s, profiles.as_deref(), method, None)?;
        let width = method.output_dim(s.n_views(), s.dim());
        let out = out_slice(out, len, s.n_items() * width, "out")?;
        for (row, r) in out.chunks_exact_mut(width.max(1)).zip(&reps) {
            row.copy_from_slice(&r.text);
        }
        Ok(())
    })
}

/// Recall@K of a ranking (item indices, best first) against a target set.
///
/// # Safety
/// `ranking` and `targets` must be valid for their lengths and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn va_recall_at_k(
    ranking: *const usize,
    n_ranking: usize,
    targets: *const usize,
    n_targets: usize,
    k: usize,
    out: *mut f64,
) -> VaStatus {
    guard(|| {
        let r = slice(ranking, n_ranking, "ranking")?;
        let t = slice(targets, n_targets, "targets")?;
        *out_ref(out, "out")? = eval::recall_at_k(r, t, k)?;
        Ok(())
    })
}

/// NDCG@K with a `log2(rank + 1)` discount.
///
/// # Safety
/// `ranking` and `targets` must be valid for their lengths and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn va_ndcg_at_k(
    ranking: *const usize,
    n_ranking: usize,
    targets: *const usize,
    n_targets: usize,
    k: usize,
    out: *mut f64,
) -> VaStatus {
    guard(|| {
        let r = slice(ranking, n_ranking, "ranking")?;
        let t = slice(targets, n_targets, "targets")?;
        *out_ref(out, "out")? = eval::ndcg_at_k(r, t, k)?;
        Ok(())
    })
}

/// Writes the density percentage (e.g. `0.117%`) as a NUL-terminated string.
///
/// # Safety
/// `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn va_density_percent(
    n_users: u64,
    n_items: u64,
    n_interactions: u64,
    decimals: u32,
    buf: *mut c_char,
    len: usize,
) -> VaStatus {
    guard(|| {
        if decimals > 12 {
            return fail(VaStatus::InvalidArgument, "at most 12 decimals");
        }
        let stats = DatasetStats::from_counts(n_users, n_items, n_interactions)?;
        let s = stats.density_percent(decimals);
        let out = out_slice(buf, len, s.len() + 1, "buf")?;
        for (o, b) in out.iter_mut().zip(s.bytes().chain(Some(0))) {
            *o = b as c_char;
        }
        Ok(())
    })
}
