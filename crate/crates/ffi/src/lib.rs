//! C ABI over the pwi-bench kernels: Jaro-Winkler, zero-shot
//! classification, RDMs, word vectors, the synthetic provider and stimulus
//! rendering.
//!
//! Every fallible function returns a [`PwiStatus`]; on failure the message
//! is available from [`pwi_last_error_message`] on the same thread. Objects
//! are opaque handles released with their `_free` function. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pwi_bench::metrics::{self, WordVectorStore};
use pwi_bench::provider::{Embedding, SyntheticProvider, SyntheticProviderConfig};
use pwi_bench::rsa::{self, Rdm};
use pwi_bench::stimulus::{self, RenderConfig};
use pwi_bench::zeroshot;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Provider = 5,
    Render = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PwiStatus, String);

type FfiResult = Result<(), Failure>;

fn fail<T>(status: PwiStatus, msg: impl ToString) -> Result<T, Failure> {
    Err(Failure(status, msg.to_string()))
}

fn guard(f: impl FnOnce() -> FfiResult) -> PwiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PwiStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PwiStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(PwiStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PwiStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(PwiStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(PwiStatus::NullPointer, format!("{name} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(PwiStatus::NullPointer, format!("{name} is null")))
}

fn embedding(values: &[f64]) -> Result<Embedding, Failure> {
    Embedding::new(values.to_vec()).map_err(|e| Failure(PwiStatus::InvalidArgument, e.to_string()))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pwi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pwi_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Jaro-Winkler similarity of two UTF-8 strings.
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwi_jaro_winkler(a: *const c_char, b: *const c_char, out: *mut f64) -> PwiStatus {
    guard(|| {
        let (a, b) = (str_arg(a, "a")?, str_arg(b, "b")?);
        *out_arg(out, "out")? = metrics::jaro_winkler(a, b);
        Ok(())
    })
}

/// Zero-shot classification of one image embedding against `n_labels`
/// label embeddings stored row-major in `labels` (`n_labels × dim`).
/// Writes `n_labels` probabilities and the predicted index.
///
/// # Safety
/// Array arguments must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn pwi_classify(
    image: *const f64,
    dim: usize,
    labels: *const f64,
    n_labels: usize,
    logit_scale: f64,
    out_probabilities: *mut f64,
    out_index: *mut usize,
) -> PwiStatus {
    guard(|| {
        let img = embedding(slice_arg(image, dim, "image")?)?;
        let rows = slice_arg(labels, n_labels * dim, "labels")?;
        let label_embs = rows.chunks(dim.max(1)).map(embedding).collect::<Result<Vec<_>, _>>()?;
        let names: Vec<String> = (0..n_labels).map(|i| i.to_string()).collect();
        let r = zeroshot::classify(&img, &label_embs, &names, logit_scale)
            .map_err(|e| Failure(PwiStatus::InvalidArgument, e.to_string()))?;
        if out_probabilities.is_null() {
            return fail(PwiStatus::NullPointer, "out_probabilities is null");
        }
        std::slice::from_raw_parts_mut(out_probabilities, n_labels).copy_from_slice(&r.probabilities);
        *out_arg(out_index, "out_index")? = r.predicted_index;
        Ok(())
    })
}

/// Opaque representational dissimilarity matrix.
pub struct PwiRdm(Rdm);

/// RDM of `n` embeddings stored row-major in `data` (`n × dim`).
///
/// # Safety
/// `data` must hold `n × dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwi_rdm_from_embeddings(data: *const f64, n: usize, dim: usize, out: *mut *mut PwiRdm) -> PwiStatus {
    guard(|| {
        let values = slice_arg(data, n * dim, "data")?;
        let embs = values.chunks(dim.max(1)).map(embedding).collect::<Result<Vec<_>, _>>()?;
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let rdm = rsa::compute_rdm(&embs, &ids).map_err(|e| Failure(PwiStatus::InvalidArgument, e.to_string()))?;
        *out_arg(out, "out")? = Box::into_raw(Box::new(PwiRdm(rdm)));
        Ok(())
    })
}

/// # Safety
/// `rdm` must come from `pwi_rdm_from_embeddings` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn pwi_rdm_free(rdm: *mut PwiRdm) {
    if !rdm.is_null() {
        drop(Box::from_raw(rdm));
    }
}

/// Number of items, or 0 for a null handle.
///
/// # Safety
/// `rdm` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pwi_rdm_size(rdm: *const PwiRdm) -> usize {
    rdm.as_ref().map_or(0, |r| r.0.n())
}

/// # Safety
/// `rdm` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwi_rdm_get(rdm: *const PwiRdm, i: usize, j: usize, out: *mut f64) -> PwiStatus {
    guard(|| {
        let r = &handle(rdm, "rdm")?.0;
        if i >= r.n() || j >= r.n() {
            return fail(PwiStatus::InvalidArgument, format!("index ({i}, {j}) out of range for {} items", r.n()));
        }
        *out_arg(out, "out")? = r.get(i, j);
        Ok(())
    })
}

/// Assign an integer category to each item, in item order.
///
/// # Safety
/// `rdm` must be a live handle; `categories` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn pwi_rdm_set_categories(rdm: *mut PwiRdm, categories: *const u32, n: usize) -> PwiStatus {
    guard(|| {
        let h = rdm.as_mut().ok_or_else(|| Failure(PwiStatus::NullPointer, "rdm is null".into()))?;
        if n != h.0.n() {
            return fail(PwiStatus::InvalidArgument, format!("{n} categories for {} items", h.0.n()));
        }
        let cats = slice_arg(categories, n, "categories")?;
        let map: BTreeMap<String, String> = h
            .0
            .item_ids()
            .iter()
            .zip(cats)
            .map(|(id, c)| (id.clone(), c.to_string()))
            .collect();
        h.0 = h.0.clone().with_categories(map);
        Ok(())
    })
}

/// # Safety
/// `rdm` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwi_rdm_cluster_index(rdm: *const PwiRdm, out: *mut f64) -> PwiStatus {
    guard(|| {
        let r = &handle(rdm, "rdm")?.0;
        *out_arg(out, "out")? = rsa::cluster_index(r).map_err(|e| Failure(PwiStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// # Safety
/// `rdm` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwi_rdm_mean_offdiag(rdm: *const PwiRdm, out: *mut f64) -> PwiStatus {
    guard(|| {
        *out_arg(out, "out")? = rsa::mean_offdiag(&handle(rdm, "rdm")?.0);
        Ok(())
    })
}

/// Spearman correlation between the upper triangles of two RDMs.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwi_rdm_compare(a: *const PwiRdm, b: *const PwiRdm, out: *mut f64) -> PwiStatus {
    guard(|| {
        let (a, b) = (&handle(a, "a")?.0, &handle(b, "b")?.0);
        *out_arg(out, "out")? = rsa::compare_rdms(a, b).map_err(|e| Failure(PwiStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Opaque pretrained word-vector table.
pub struct PwiWordVectors(WordVectorStore);

/// Load a text-format word-vector file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwi_word_vectors_load(path: *const c_char, out: *mut *mut PwiWordVectors) -> PwiStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let store = metrics::load_word_vectors(Path::new(path)).map_err(|e| {
            let status = match e {
                metrics::WordVectorError::Io { .. } => PwiStatus::Io,
                _ => PwiStatus::InvalidArgument,
            };
            Failure(status, e.to_string())
        })?;
        *out_arg(out, "out")? = Box::into_raw(Box::new(PwiWordVectors(store)));
        Ok(())
    })
}

/// # Safety
/// `store` must come from `pwi_word_vectors_load` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn pwi_word_vectors_free(store: *mut PwiWordVectors) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Cosine similarity of two strings' vectors. `*out_found` is false (and
/// `*out` untouched) when either string has no usable vector.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pwi_semantic_similarity(
    store: *const PwiWordVectors,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
    out_found: *mut bool,
) -> PwiStatus {
    guard(|| {
        let s = &handle(store, "store")?.0;
        let (a, b) = (str_arg(a, "a")?, str_arg(b, "b")?);
        let found = out_arg(out_found, "out_found")?;
        match metrics::semantic_similarity(s, a, b) {
            Some(v) => {
                *out_arg(out, "out")? = v;
                *found = true;
            }
            None => *found = false,
        }
        Ok(())
    })
}

/// Opaque synthetic embedding provider.
pub struct PwiSynthetic(SyntheticProvider);

/// # Safety
/// `vocabulary` must hold `n` NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwi_synthetic_new(
    vocabulary: *const *const c_char,
    n: usize,
    seed: u64,
    gamma: f64,
    out: *mut *mut PwiSynthetic,
) -> PwiStatus {
    guard(|| {
        let ptrs = slice_arg(vocabulary, n, "vocabulary")?;
        let vocab = ptrs
            .iter()
            .map(|p| str_arg(*p, "vocabulary entry").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let p = SyntheticProvider::new(SyntheticProviderConfig::new(vocab, seed, gamma))
            .map_err(|e| Failure(PwiStatus::Provider, e.to_string()))?;
        *out_arg(out, "out")? = Box::into_raw(Box::new(PwiSynthetic(p)));
        Ok(())
    })
}

/// # Safety
/// `provider` must come from `pwi_synthetic_new` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn pwi_synthetic_free(provider: *mut PwiSynthetic) {
    if !provider.is_null() {
        drop(Box::from_raw(provider));
    }
}

/// Embedding width, or 0 for a null handle.
///
/// # Safety
/// `provider` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pwi_synthetic_dim(provider: *const PwiSynthetic) -> usize {
    provider.as_ref().map_or(0, |p| p.0.config().dim)
}

fn write_embedding(e: &Embedding, out: *mut f64, out_len: usize) -> FfiResult {
    if out_len != e.dim() {
        return fail(PwiStatus::InvalidArgument, format!("output holds {out_len} values, embedding has {}", e.dim()));
    }
    if out.is_null() {
        return fail(PwiStatus::NullPointer, "out is null");
    }
    // SAFETY: caller guarantees `out` holds `out_len` values
    unsafe { std::slice::from_raw_parts_mut(out, out_len) }.copy_from_slice(e.values());
    Ok(())
}

/// # Safety
/// `text` must be NUL-terminated; `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn pwi_synthetic_embed_text(
    provider: *const PwiSynthetic,
    text: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> PwiStatus {
    guard(|| {
        let p = &handle(provider, "provider")?.0;
        let e = p
            .text_embedding(str_arg(text, "text")?)
            .map_err(|e| Failure(PwiStatus::Provider, e.to_string()))?;
        write_embedding(&e, out, out_len)
    })
}

/// Image embedding for a content label with an optional word (NULL for
/// none).
///
/// # Safety
/// Strings must be NUL-terminated; `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn pwi_synthetic_embed_image(
    provider: *const PwiSynthetic,
    content: *const c_char,
    word: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> PwiStatus {
    guard(|| {
        let p = &handle(provider, "provider")?.0;
        let e = p
            .image_embedding(str_arg(content, "content")?, opt_str_arg(word, "word")?)
            .map_err(|e| Failure(PwiStatus::Provider, e.to_string()))?;
        write_embedding(&e, out, out_len)
    })
}

/// Render `word` onto an encoded image with the default style. With a NULL
/// word the input bytes come back unchanged. The result is released with
/// `pwi_bytes_free`.
///
/// # Safety
/// `image` must hold `len` bytes; `out_data` and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pwi_render_png(
    image: *const u8,
    len: usize,
    word: *const c_char,
    out_data: *mut *mut u8,
    out_len: *mut usize,
) -> PwiStatus {
    guard(|| {
        let bytes = slice_arg(image, len, "image")?;
        let word = opt_str_arg(word, "word")?;
        let png = stimulus::render(bytes, word, &RenderConfig::default())
            .map_err(|e| Failure(PwiStatus::Render, e.to_string()))?;
        let out_len = out_arg(out_len, "out_len")?;
        let out_data = out_arg(out_data, "out_data")?;
        let boxed = png.into_boxed_slice();
        *out_len = boxed.len();
        *out_data = Box::into_raw(boxed).cast();
        Ok(())
    })
}

/// # Safety
/// `data`/`len` must come from one `pwi_render_png` call.
#[no_mangle]
pub unsafe extern "C" fn pwi_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}
