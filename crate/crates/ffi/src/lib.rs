//! C ABI over the nsir core.
//!
//! Every function returns an [`NsirStatus`]. On failure the message is kept
//! per thread and can be read with [`nsir_last_error_message`]. Handles are
//! opaque and must be released with their matching `_free` function.
//! Matrices are dense row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ndarray::Array2;
use nsir_core::embedding::{EmbedError, EmbeddingStore, Side, TokenMatrix};
use nsir_core::eval::{load_qrels, mean_average_precision, ndcg_at_k, MetricOptions, Run};
use nsir_core::fol::{tokenize_fol, FolTokenSeq, TokenClass};
use nsir_core::logic_align::fuse_cls;
use nsir_core::ot::{build_cost_matrix, solve_ot, TransportProblem};
use nsir_core::pipeline::{analyze_side, PipelineError, ScoringOptions, SideAnalysis};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsirStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    DimensionMismatch = 4,
    NumericalFailure = 5,
    NotFound = 6,
    IoError = 7,
    DataError = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsirTokenClass {
    Negation = 0,
    BinaryConnective = 1,
    Quantifier = 2,
    Predicate = 3,
    Term = 4,
    Punctuation = 5,
}

impl From<TokenClass> for NsirTokenClass {
    fn from(c: TokenClass) -> Self {
        match c {
            TokenClass::Negation => NsirTokenClass::Negation,
            TokenClass::BinaryConnective => NsirTokenClass::BinaryConnective,
            TokenClass::Quantifier => NsirTokenClass::Quantifier,
            TokenClass::Predicate => NsirTokenClass::Predicate,
            TokenClass::Term => NsirTokenClass::Term,
            TokenClass::Punctuation => NsirTokenClass::Punctuation,
        }
    }
}

/// Scoring switches mirrored from the core options.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NsirOptions {
    /// Attention scale; 0 means the embedding dimension.
    pub d_k: usize,
    pub normalize: bool,
    pub include_cls_row: bool,
    pub w1: f64,
    pub w2: f64,
}

/// Tokenized FOL formula.
pub struct NsirFolSeq(FolTokenSeq);

/// Embedding store loaded from disk.
pub struct NsirStore(EmbeddingStore);

/// Alignment, σ and attention results for one NL/FOL pair.
pub struct NsirSideAnalysis(SideAnalysis);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("no interior NUL")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type FfiResult<T> = Result<T, (NsirStatus, String)>;

fn fail<T>(status: NsirStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err((status, msg.into()))
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> NsirStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NsirStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NsirStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> FfiResult<()> {
    if p.is_null() {
        return fail(NsirStatus::NullPointer, format!("{name} is null"));
    }
    Ok(())
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(NsirStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn matrix<'a>(p: *const f64, rows: usize, cols: usize, name: &str) -> FfiResult<&'a [f64]> {
    non_null(p, name)?;
    if rows == 0 || cols == 0 {
        return fail(NsirStatus::InvalidArgument, format!("{name} has an empty dimension"));
    }
    Ok(std::slice::from_raw_parts(p, rows * cols))
}

fn token_matrix(values: &[f64], rows: usize, cols: usize) -> FfiResult<TokenMatrix> {
    let arr = Array2::from_shape_vec((rows, cols), values.to_vec()).expect("length checked");
    TokenMatrix::new(arr).or_else(|e| fail(NsirStatus::InvalidArgument, e.to_string()))
}

fn embed_status(e: &EmbedError) -> NsirStatus {
    match e {
        EmbedError::Io(_) => NsirStatus::IoError,
        EmbedError::CacheMiss => NsirStatus::NotFound,
        EmbedError::DimensionMismatch { .. } => NsirStatus::DimensionMismatch,
        EmbedError::Fol(_) => NsirStatus::ParseError,
        _ => NsirStatus::DataError,
    }
}

fn pipeline_status(e: &PipelineError) -> NsirStatus {
    match e {
        PipelineError::Fol(_) => NsirStatus::ParseError,
        PipelineError::Embed(e) | PipelineError::QueryEncoding(e) => embed_status(e),
        PipelineError::TokenCountMismatch { .. } => NsirStatus::DimensionMismatch,
        PipelineError::Align(_) | PipelineError::Ot(_) => NsirStatus::NumericalFailure,
        _ => NsirStatus::DataError,
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn nsir_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn nsir_default_options() -> NsirOptions {
    let d = ScoringOptions::default();
    NsirOptions {
        d_k: 0,
        normalize: d.normalize,
        include_cls_row: d.include_cls_row,
        w1: d.weights.0,
        w2: d.weights.1,
    }
}

// ---------------------------------------------------------------------------
// FOL tokens

/// # Safety
/// `formula` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nsir_fol_tokenize(formula: *const c_char, out: *mut *mut NsirFolSeq) -> NsirStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = c_str(formula, "formula")?;
        let seq = tokenize_fol(text).or_else(|e| fail(NsirStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(NsirFolSeq(seq)));
        Ok(())
    })
}

/// # Safety
/// `seq` must come from [`nsir_fol_tokenize`] or be null.
#[no_mangle]
pub unsafe extern "C" fn nsir_fol_len(seq: *const NsirFolSeq) -> usize {
    seq.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `seq` must come from [`nsir_fol_tokenize`]; `class_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nsir_fol_token_class(
    seq: *const NsirFolSeq,
    index: usize,
    class_out: *mut NsirTokenClass,
) -> NsirStatus {
    guard(|| {
        non_null(class_out, "class_out")?;
        let seq = seq.as_ref().ok_or((NsirStatus::NullPointer, "seq is null".to_string()))?;
        let tok = seq.0.tokens.get(index).ok_or((
            NsirStatus::InvalidArgument,
            format!("token {index} out of range for {} tokens", seq.0.len()),
        ))?;
        *class_out = tok.class.into();
        Ok(())
    })
}

/// Copies token `index`'s canonical surface into `buf` (NUL-terminated,
/// truncated to `buf_len`). Returns the full byte length via `len_out`.
///
/// # Safety
/// `seq` must come from [`nsir_fol_tokenize`]; `buf` must hold `buf_len`
/// bytes or be null when `buf_len` is 0.
#[no_mangle]
pub unsafe extern "C" fn nsir_fol_token_surface(
    seq: *const NsirFolSeq,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
    len_out: *mut usize,
) -> NsirStatus {
    guard(|| {
        let seq = seq.as_ref().ok_or((NsirStatus::NullPointer, "seq is null".to_string()))?;
        let tok = seq.0.tokens.get(index).ok_or((
            NsirStatus::InvalidArgument,
            format!("token {index} out of range for {} tokens", seq.0.len()),
        ))?;
        let bytes = tok.surface.as_bytes();
        if !len_out.is_null() {
            *len_out = bytes.len();
        }
        if buf_len > 0 {
            non_null(buf, "buf")?;
            let n = bytes.len().min(buf_len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        Ok(())
    })
}

/// # Safety
/// `seq` must come from [`nsir_fol_tokenize`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nsir_fol_free(seq: *mut NsirFolSeq) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

// ---------------------------------------------------------------------------
// Numerics

/// Cosine cost `1 - cos` between rows of `h` (`m × d`) and `z` (`n × d`),
/// written to `cost_out` (`m × n`).
///
/// # Safety
/// All pointers must reference arrays of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn nsir_cost_matrix(
    h: *const f64,
    m: usize,
    z: *const f64,
    n: usize,
    d: usize,
    cost_out: *mut f64,
) -> NsirStatus {
    guard(|| {
        let hm = token_matrix(matrix(h, m, d, "h")?, m, d)?;
        let zm = token_matrix(matrix(z, n, d, "z")?, n, d)?;
        non_null(cost_out, "cost_out")?;
        let cost = build_cost_matrix(&hm, &zm).or_else(|e| fail(NsirStatus::InvalidArgument, e.to_string()))?;
        let out = std::slice::from_raw_parts_mut(cost_out, m * n);
        for (o, c) in out.iter_mut().zip(cost.iter()) {
            *o = *c;
        }
        Ok(())
    })
}

/// Exact transport plan for an `m × n` cost matrix with uniform marginals.
///
/// # Safety
/// `cost` and `plan_out` must hold `m * n` doubles; `objective_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn nsir_solve_ot(
    cost: *const f64,
    m: usize,
    n: usize,
    plan_out: *mut f64,
    objective_out: *mut f64,
) -> NsirStatus {
    guard(|| {
        let values = matrix(cost, m, n, "cost")?;
        non_null(plan_out, "plan_out")?;
        let arr = Array2::from_shape_vec((m, n), values.to_vec()).expect("length checked");
        let problem = TransportProblem::uniform(arr).or_else(|e| fail(NsirStatus::InvalidArgument, e.to_string()))?;
        let sol = solve_ot(&problem).or_else(|e| fail(NsirStatus::NumericalFailure, e.to_string()))?;
        let out = std::slice::from_raw_parts_mut(plan_out, m * n);
        for (o, p) in out.iter_mut().zip(sol.plan.iter()) {
            *o = *p;
        }
        if !objective_out.is_null() {
            *objective_out = sol.objective;
        }
        Ok(())
    })
}

/// Fused CLS vector `Hᵀ · P · Z · cls` of length `d`.
///
/// # Safety
/// `h` is `m × d`, `plan` is `m × n`, `z` is `n × d`, `cls` and `out` hold `d`.
#[no_mangle]
pub unsafe extern "C" fn nsir_fuse_cls(
    h: *const f64,
    m: usize,
    plan: *const f64,
    z: *const f64,
    n: usize,
    d: usize,
    cls: *const f64,
    normalize: bool,
    out: *mut f64,
) -> NsirStatus {
    guard(|| {
        let hm = token_matrix(matrix(h, m, d, "h")?, m, d)?;
        let zm = token_matrix(matrix(z, n, d, "z")?, n, d)?;
        let p = Array2::from_shape_vec((m, n), matrix(plan, m, n, "plan")?.to_vec()).expect("length checked");
        let cls = matrix(cls, 1, d, "cls")?;
        non_null(out, "out")?;
        let fused = fuse_cls(&hm, &p, &zm, cls, normalize).or_else(|e| fail(NsirStatus::NumericalFailure, e.to_string()))?;
        std::slice::from_raw_parts_mut(out, d).copy_from_slice(&fused.vector);
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Stores and side analyses

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nsir_store_open(path: *const c_char, out: *mut *mut NsirStore) -> NsirStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = c_str(path, "path")?;
        let store = EmbeddingStore::load(Path::new(path)).map_err(|e| (embed_status(&e), e.to_string()))?;
        *out = Box::into_raw(Box::new(NsirStore(store)));
        Ok(())
    })
}

/// # Safety
/// `store` must come from [`nsir_store_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn nsir_store_len(store: *const NsirStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `store` must come from [`nsir_store_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nsir_store_free(store: *mut NsirStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

fn scoring(opts: Option<&NsirOptions>) -> ScoringOptions {
    match opts {
        None => ScoringOptions::default(),
        Some(o) => ScoringOptions {
            d_k: (o.d_k > 0).then_some(o.d_k),
            normalize: o.normalize,
            weights: (o.w1, o.w2),
            include_cls_row: o.include_cls_row,
        },
    }
}

/// Analyzes an NL text and its FOL translation, both looked up in `store`.
///
/// # Safety
/// `store` must be a live store handle, the texts NUL-terminated strings,
/// `opts` null or valid, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nsir_analyze_side(
    store: *const NsirStore,
    nl_text: *const c_char,
    fol_text: *const c_char,
    opts: *const NsirOptions,
    out: *mut *mut NsirSideAnalysis,
) -> NsirStatus {
    guard(|| {
        non_null(out, "out")?;
        let store = store.as_ref().ok_or((NsirStatus::NullPointer, "store is null".to_string()))?;
        let nl_text = c_str(nl_text, "nl_text")?;
        let fol_text = c_str(fol_text, "fol_text")?;
        let missing = |side: &str| (NsirStatus::NotFound, format!("{side} text not in store"));
        let nl = store.0.get(nl_text, Side::Nl).ok_or_else(|| missing("NL"))?;
        let fol = store.0.get(fol_text, Side::Fol).ok_or_else(|| missing("FOL"))?;
        let analysis = analyze_side(nl, fol_text, fol, &scoring(opts.as_ref()))
            .map_err(|e| (pipeline_status(&e), e.to_string()))?;
        *out = Box::into_raw(Box::new(NsirSideAnalysis(analysis)));
        Ok(())
    })
}

/// Plan shape as (NL rows, FOL tokens).
///
/// # Safety
/// `side` must be a live analysis handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn nsir_side_shape(
    side: *const NsirSideAnalysis,
    nl_out: *mut usize,
    fol_out: *mut usize,
) -> NsirStatus {
    guard(|| {
        let side = side.as_ref().ok_or((NsirStatus::NullPointer, "side is null".to_string()))?;
        let (m, n) = side.0.plan.plan.dim();
        if !nl_out.is_null() {
            *nl_out = m;
        }
        if !fol_out.is_null() {
            *fol_out = n;
        }
        Ok(())
    })
}

/// Copies the transport plan (row-major, NL × FOL) into `plan_out`.
///
/// # Safety
/// `side` must be a live analysis handle and `plan_out` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nsir_side_plan(side: *const NsirSideAnalysis, plan_out: *mut f64, len: usize) -> NsirStatus {
    guard(|| {
        let side = side.as_ref().ok_or((NsirStatus::NullPointer, "side is null".to_string()))?;
        non_null(plan_out, "plan_out")?;
        let plan = &side.0.plan.plan;
        if len != plan.len() {
            return fail(NsirStatus::DimensionMismatch, format!("plan has {} cells, buffer {len}", plan.len()));
        }
        let out = std::slice::from_raw_parts_mut(plan_out, len);
        for (o, p) in out.iter_mut().zip(plan.iter()) {
            *o = *p;
        }
        Ok(())
    })
}

/// Copies σ (row-major, FOL × NL) into `sigma_out`.
///
/// # Safety
/// `side` must be a live analysis handle and `sigma_out` hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn nsir_side_sigma(side: *const NsirSideAnalysis, sigma_out: *mut i8, len: usize) -> NsirStatus {
    guard(|| {
        let side = side.as_ref().ok_or((NsirStatus::NullPointer, "side is null".to_string()))?;
        non_null(sigma_out, "sigma_out")?;
        let sigma = side.0.sigma.as_array();
        if len != sigma.len() {
            return fail(NsirStatus::DimensionMismatch, format!("sigma has {} cells, buffer {len}", sigma.len()));
        }
        let out = std::slice::from_raw_parts_mut(sigma_out, len);
        for (o, s) in out.iter_mut().zip(sigma.iter()) {
            *o = *s;
        }
        Ok(())
    })
}

/// Scores a query analysis against a document analysis.
///
/// # Safety
/// Both handles must be live; `opts` null or valid; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn nsir_pair_scores(
    query: *const NsirSideAnalysis,
    doc: *const NsirSideAnalysis,
    opts: *const NsirOptions,
    score1_out: *mut f64,
    score2_out: *mut f64,
    combined_out: *mut f64,
) -> NsirStatus {
    guard(|| {
        let q = query.as_ref().ok_or((NsirStatus::NullPointer, "query is null".to_string()))?;
        let d = doc.as_ref().ok_or((NsirStatus::NullPointer, "doc is null".to_string()))?;
        let opts = scoring(opts.as_ref());
        let s1 = nsir_core::logic_align::score1(&q.0.fused, &d.0.fused)
            .or_else(|e| fail(NsirStatus::DimensionMismatch, e.to_string()))?;
        let s2 = nsir_core::connective::score2(&q.0.pooled, &d.0.pooled)
            .or_else(|e| fail(NsirStatus::DimensionMismatch, e.to_string()))?;
        let combined = opts.weights.0 * s1 + opts.weights.1 * s2;
        for (p, v) in [(score1_out, s1), (score2_out, s2), (combined_out, combined)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `side` must come from [`nsir_analyze_side`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nsir_side_free(side: *mut NsirSideAnalysis) {
    if !side.is_null() {
        drop(Box::from_raw(side));
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Mean nDCG@cutoff and MAP of a TREC run file against a qrels file.
///
/// # Safety
/// Paths must be NUL-terminated strings; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn nsir_eval_files(
    run_path: *const c_char,
    qrels_path: *const c_char,
    cutoff: usize,
    ndcg_out: *mut f64,
    map_out: *mut f64,
) -> NsirStatus {
    guard(|| {
        if cutoff == 0 {
            return fail(NsirStatus::InvalidArgument, "cutoff must be at least 1");
        }
        let run_path = c_str(run_path, "run_path")?;
        let qrels_path = c_str(qrels_path, "qrels_path")?;
        let run = Run::load(Path::new(run_path)).map_err(|e| match e {
            nsir_core::eval::RunError::MissingFile(_) => (NsirStatus::IoError, e.to_string()),
            nsir_core::eval::RunError::Io(_) => (NsirStatus::IoError, e.to_string()),
            other => (NsirStatus::DataError, other.to_string()),
        })?;
        let qrels = load_qrels(Path::new(qrels_path)).map_err(|e| match e {
            nsir_core::eval::DataError::MissingFile(_) | nsir_core::eval::DataError::Io(_) => {
                (NsirStatus::IoError, e.to_string())
            }
            other => (NsirStatus::DataError, other.to_string()),
        })?;
        let opts = MetricOptions::default();
        if !ndcg_out.is_null() {
            *ndcg_out = ndcg_at_k(&run, &qrels, cutoff, opts).mean;
        }
        if !map_out.is_null() {
            *map_out = mean_average_precision(&run, &qrels, opts).mean;
        }
        Ok(())
    })
}
