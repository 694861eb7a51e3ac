//! C ABI for the spegcl library.
//!
//! Handles are opaque pointers created and destroyed by this library;
//! functions return `SpeGclStatus` and leave a thread-local message
//! retrievable via `spegcl_last_error_message`. The C header is generated
//! by cbindgen at build time into `include/spegcl.h`.
//!
//! Thread safety: handles are immutable after creation and may be shared
//! across threads for reads; creation/destruction of a given handle must
//! not race with its use.

// Pointer contracts are documented once above and on each function's
// parameter docs rather than per-item Safety sections.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use spegcl::encoder::EncoderKind;
use spegcl::error::Error;
use spegcl::eval;
use spegcl::graph::{self, Dataset};
use spegcl::objective::{LossMode, NegativePolicy};
use spegcl::theory::{self, EmbeddingDistribution};
use spegcl::trainer::{self, Checkpoint, TrainConfig};

/// Status codes returned by every fallible function. 0 is success;
/// 1/2/3 mirror the CLI's configuration/data/numeric error classes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeGclStatus {
    Ok = 0,
    InvalidArgument = 1,
    DataError = 2,
    NumericError = 3,
    NullPointer = 4,
    InvalidUtf8 = 5,
    BufferTooSmall = 6,
    InternalError = 7,
}

/// Opaque dataset handle.
pub struct SpeGclDataset {
    inner: Dataset,
}

/// Opaque trained-model handle (encoder parameters plus optimizer state).
pub struct SpeGclModel {
    inner: Checkpoint,
}

/// Training options. Zero-initialize and fill, or call
/// `spegcl_train_options_default` first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpeGclTrainOptions {
    pub epochs: u64,
    pub batch_size: u64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Contrastive temperature (> 0).
    pub tau: f64,
    pub m_negatives: u64,
    /// 0 = nce, 1 = neg_only, 2 = align_only.
    pub loss_mode: i32,
    /// 0 = cross_view, 1 = cross_and_in_view.
    pub negative_policy: i32,
    /// Nonzero averages both contrast directions.
    pub symmetrize: i32,
    pub omega_node: f64,
    pub omega_edge: f64,
    pub radius_ratio: f64,
    pub augment_seed: u64,
    /// Hidden layer widths; entries beyond `n_hidden` are ignored.
    pub hidden_dims: [u64; 8],
    pub n_hidden: u64,
    pub emb_dim: u64,
    /// 0 = fourier, 1 = gcn, 2 = gin.
    pub encoder_kind: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(status: SpeGclStatus, msg: &str) -> SpeGclStatus {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap();
    });
    status
}

fn status_of(err: &Error) -> SpeGclStatus {
    match err {
        Error::Argument(_) | Error::InsufficientData(_) => SpeGclStatus::InvalidArgument,
        Error::Ingest(_) | Error::Format { .. } | Error::Stratification(_) | Error::Io(_) => {
            SpeGclStatus::DataError
        }
        Error::State(_) | Error::Numeric(_) => SpeGclStatus::NumericError,
    }
}

fn fail(err: Error) -> SpeGclStatus {
    set_error(status_of(&err), &err.to_string())
}

fn guarded(f: impl FnOnce() -> SpeGclStatus) -> SpeGclStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => set_error(SpeGclStatus::InternalError, "internal panic"),
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, SpeGclStatus> {
    if ptr.is_null() {
        return Err(set_error(
            SpeGclStatus::NullPointer,
            &format!("{name} is null"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(
            SpeGclStatus::InvalidUtf8,
            &format!("{name} is not valid UTF-8"),
        )
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spegcl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent error on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn spegcl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Generate a synthetic two-class dataset (see the library's synthetic
/// generator for semantics). On success `*out` owns the handle.
#[no_mangle]
pub unsafe extern "C" fn spegcl_dataset_gen_sbm(
    n_graphs: u64,
    nodes_per_graph: u64,
    p_in_class0: f64,
    p_in_class1: f64,
    feature_noise: f64,
    seed: u64,
    out: *mut *mut SpeGclDataset,
) -> SpeGclStatus {
    guarded(|| {
        if out.is_null() {
            return set_error(SpeGclStatus::NullPointer, "out is null");
        }
        match graph::make_synthetic_sbm(
            n_graphs as usize,
            nodes_per_graph as usize,
            p_in_class0,
            p_in_class1,
            feature_noise,
            seed,
        ) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(SpeGclDataset { inner: ds }));
                SpeGclStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Load a dataset in the TUDataset text format from `<root>/<name>_*.txt`.
#[no_mangle]
pub unsafe extern "C" fn spegcl_dataset_load_tudataset(
    root_path: *const c_char,
    name: *const c_char,
    out: *mut *mut SpeGclDataset,
) -> SpeGclStatus {
    guarded(|| {
        if out.is_null() {
            return set_error(SpeGclStatus::NullPointer, "out is null");
        }
        let root = match cstr_arg(root_path, "root_path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        let name = match cstr_arg(name, "name") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match graph::load_tudataset(Path::new(root), name) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(SpeGclDataset { inner: ds }));
                SpeGclStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn spegcl_dataset_free(dataset: *mut SpeGclDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of graphs, or 0 on a null handle.
#[no_mangle]
pub unsafe extern "C" fn spegcl_dataset_len(dataset: *const SpeGclDataset) -> u64 {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).inner.len() as u64
}

#[no_mangle]
pub unsafe extern "C" fn spegcl_dataset_num_classes(dataset: *const SpeGclDataset) -> u64 {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).inner.num_classes() as u64
}

#[no_mangle]
pub unsafe extern "C" fn spegcl_dataset_feature_dim(dataset: *const SpeGclDataset) -> u64 {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).inner.feature_dim() as u64
}

/// Fill `opts` with the library defaults.
#[no_mangle]
pub unsafe extern "C" fn spegcl_train_options_default(opts: *mut SpeGclTrainOptions) -> SpeGclStatus {
    guarded(|| {
        if opts.is_null() {
            return set_error(SpeGclStatus::NullPointer, "opts is null");
        }
        let d = TrainConfig::default();
        let mut hidden = [0u64; 8];
        for (slot, &w) in hidden.iter_mut().zip(&d.hidden_dims) {
            *slot = w as u64;
        }
        *opts = SpeGclTrainOptions {
            epochs: d.epochs as u64,
            batch_size: d.batch_size as u64,
            learning_rate: d.learning_rate,
            seed: d.seed,
            tau: d.loss.tau,
            m_negatives: d.loss.m_negatives as u64,
            loss_mode: match d.loss.mode {
                LossMode::Nce => 0,
                LossMode::NegOnly => 1,
                LossMode::AlignOnly => 2,
            },
            negative_policy: match d.loss.policy {
                NegativePolicy::CrossView => 0,
                NegativePolicy::CrossAndInView => 1,
            },
            symmetrize: d.loss.symmetrize as i32,
            omega_node: d.augment.omega_node,
            omega_edge: d.augment.omega_edge,
            radius_ratio: d.augment.radius_ratio,
            augment_seed: d.augment.seed,
            hidden_dims: hidden,
            n_hidden: d.hidden_dims.len() as u64,
            emb_dim: d.emb_dim as u64,
            encoder_kind: 0,
        };
        SpeGclStatus::Ok
    })
}

fn config_from_options(opts: &SpeGclTrainOptions) -> Result<TrainConfig, SpeGclStatus> {
    let mode = match opts.loss_mode {
        0 => LossMode::Nce,
        1 => LossMode::NegOnly,
        2 => LossMode::AlignOnly,
        k => {
            return Err(set_error(
                SpeGclStatus::InvalidArgument,
                &format!("unknown loss_mode {k}"),
            ))
        }
    };
    let policy = match opts.negative_policy {
        0 => NegativePolicy::CrossView,
        1 => NegativePolicy::CrossAndInView,
        k => {
            return Err(set_error(
                SpeGclStatus::InvalidArgument,
                &format!("unknown negative_policy {k}"),
            ))
        }
    };
    let kind = match opts.encoder_kind {
        0 => EncoderKind::Fourier,
        1 => EncoderKind::Gcn,
        2 => EncoderKind::Gin,
        k => {
            return Err(set_error(
                SpeGclStatus::InvalidArgument,
                &format!("unknown encoder_kind {k}"),
            ))
        }
    };
    if opts.n_hidden == 0 || opts.n_hidden > 8 {
        return Err(set_error(
            SpeGclStatus::InvalidArgument,
            "n_hidden must be in 1..=8",
        ));
    }
    let defaults = TrainConfig::default();
    Ok(TrainConfig {
        epochs: opts.epochs as usize,
        batch_size: opts.batch_size as usize,
        learning_rate: opts.learning_rate,
        adam_betas: defaults.adam_betas,
        adam_eps: defaults.adam_eps,
        seed: opts.seed,
        augment: spegcl::augment::AugmentConfig {
            omega_node: opts.omega_node,
            omega_edge: opts.omega_edge,
            radius_ratio: opts.radius_ratio,
            seed: opts.augment_seed,
            ..defaults.augment
        },
        loss: spegcl::objective::LossConfig {
            tau: opts.tau,
            m_negatives: opts.m_negatives as usize,
            mode,
            policy,
            symmetrize: opts.symmetrize != 0,
        },
        hidden_dims: opts.hidden_dims[..opts.n_hidden as usize]
            .iter()
            .map(|&w| w as usize)
            .collect(),
        emb_dim: opts.emb_dim as usize,
        kind,
        checkpoint_every: 0,
    })
}

/// Run self-supervised training; on success `*out` owns the model.
#[no_mangle]
pub unsafe extern "C" fn spegcl_train(
    dataset: *const SpeGclDataset,
    opts: *const SpeGclTrainOptions,
    out: *mut *mut SpeGclModel,
) -> SpeGclStatus {
    guarded(|| {
        if dataset.is_null() || opts.is_null() || out.is_null() {
            return set_error(SpeGclStatus::NullPointer, "dataset, opts or out is null");
        }
        let cfg = match config_from_options(&*opts) {
            Ok(c) => c,
            Err(st) => return st,
        };
        match trainer::train(&(*dataset).inner, &cfg) {
            Ok((checkpoint, _)) => {
                *out = Box::into_raw(Box::new(SpeGclModel { inner: checkpoint }));
                SpeGclStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// An untrained model with the same architecture/seeding the options
/// describe (the random-baseline for comparisons).
#[no_mangle]
pub unsafe extern "C" fn spegcl_model_init_untrained(
    dataset: *const SpeGclDataset,
    opts: *const SpeGclTrainOptions,
    out: *mut *mut SpeGclModel,
) -> SpeGclStatus {
    guarded(|| {
        if dataset.is_null() || opts.is_null() || out.is_null() {
            return set_error(SpeGclStatus::NullPointer, "dataset, opts or out is null");
        }
        let cfg = match config_from_options(&*opts) {
            Ok(c) => c,
            Err(st) => return st,
        };
        match trainer::initial_checkpoint(&(*dataset).inner, &cfg) {
            Ok(checkpoint) => {
                *out = Box::into_raw(Box::new(SpeGclModel { inner: checkpoint }));
                SpeGclStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn spegcl_model_free(model: *mut SpeGclModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn spegcl_model_save(
    model: *const SpeGclModel,
    path: *const c_char,
) -> SpeGclStatus {
    guarded(|| {
        if model.is_null() {
            return set_error(SpeGclStatus::NullPointer, "model is null");
        }
        let path = match cstr_arg(path, "path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match (*model).inner.save(Path::new(path)) {
            Ok(()) => SpeGclStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn spegcl_model_load(
    path: *const c_char,
    out: *mut *mut SpeGclModel,
) -> SpeGclStatus {
    guarded(|| {
        if out.is_null() {
            return set_error(SpeGclStatus::NullPointer, "out is null");
        }
        let path = match cstr_arg(path, "path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match Checkpoint::load(Path::new(path)) {
            Ok(cp) => {
                *out = Box::into_raw(Box::new(SpeGclModel { inner: cp }));
                SpeGclStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Embedding dimensionality of a model, or 0 on a null handle.
#[no_mangle]
pub unsafe extern "C" fn spegcl_model_embedding_dim(model: *const SpeGclModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    (*model).inner.params.emb_dim as u64
}

/// Encode every graph of the dataset. `out_buf` must hold
/// `len(dataset) * embedding_dim` doubles; embeddings are written
/// row-major in dataset order.
#[no_mangle]
pub unsafe extern "C" fn spegcl_model_embed(
    model: *const SpeGclModel,
    dataset: *const SpeGclDataset,
    out_buf: *mut f64,
    buf_len: u64,
) -> SpeGclStatus {
    guarded(|| {
        if model.is_null() || dataset.is_null() || out_buf.is_null() {
            return set_error(SpeGclStatus::NullPointer, "model, dataset or out_buf is null");
        }
        let ds = &(*dataset).inner;
        let params = &(*model).inner.params;
        let needed = ds.len() * params.emb_dim;
        if (buf_len as usize) < needed {
            return set_error(
                SpeGclStatus::BufferTooSmall,
                &format!("need {needed} doubles, got {buf_len}"),
            );
        }
        match eval::embed_dataset(ds, params, 64) {
            Ok(embs) => {
                let out = std::slice::from_raw_parts_mut(out_buf, needed);
                for (i, e) in embs.iter().enumerate() {
                    out[i * params.emb_dim..(i + 1) * params.emb_dim]
                        .copy_from_slice(e.as_slice());
                }
                SpeGclStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Frozen-embedding evaluation: stratified k-fold linear probe. Writes the
/// mean and standard deviation of the fold accuracies.
#[no_mangle]
pub unsafe extern "C" fn spegcl_linear_probe(
    model: *const SpeGclModel,
    dataset: *const SpeGclDataset,
    k_folds: u64,
    seed: u64,
    out_mean: *mut f64,
    out_std: *mut f64,
) -> SpeGclStatus {
    guarded(|| {
        if model.is_null() || dataset.is_null() || out_mean.is_null() || out_std.is_null() {
            return set_error(SpeGclStatus::NullPointer, "null argument");
        }
        let ds = &(*dataset).inner;
        let embs = match eval::embed_dataset(ds, &(*model).inner.params, 64) {
            Ok(e) => e,
            Err(e) => return fail(e),
        };
        match eval::linear_probe(&embs, &ds.labels(), k_folds as usize, seed) {
            Ok(report) => {
                *out_mean = report.mean;
                *out_std = report.std;
                SpeGclStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Check the loss sandwich `l_u <= info_nce <= l_u + slack` over random
/// unit embeddings on a `dim`-dimensional sphere; writes the violation
/// count (0 expected).
#[no_mangle]
pub unsafe extern "C" fn spegcl_verify_prop1(
    dim: u64,
    tau: f64,
    draws: u64,
    negatives_per_draw: u64,
    seed: u64,
    out_violations: *mut u64,
) -> SpeGclStatus {
    guarded(|| {
        if out_violations.is_null() {
            return set_error(SpeGclStatus::NullPointer, "out_violations is null");
        }
        let dist = EmbeddingDistribution::uniform_sphere(dim as usize);
        match theory::check_prop1(
            &dist,
            tau,
            draws as usize,
            negatives_per_draw as usize,
            seed,
        ) {
            Ok(report) => {
                *out_violations = (report.lower_violations + report.upper_violations) as u64;
                SpeGclStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
