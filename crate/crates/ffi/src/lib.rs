//! C ABI over the aarm engine.
//!
//! Every function returns an [`AarmStatus`]; on failure a message is kept
//! per thread and can be read with [`aarm_last_error_message`]. Datasets and
//! models are opaque handles released with their `_free` functions.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use aarm::checkpoint::load_model_for;
use aarm::corpus::DatasetBundle;
use aarm::evaluation::{evaluate, recommend_top_n, ModelScorer, Scorer};
use aarm::model::{self, AspectCache, ModelParams};
use aarm::parallel::Workers;
use aarm::AarmError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AarmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Schema = 5,
    UnknownId = 6,
    Numeric = 7,
    Panic = 8,
    Other = 9,
}

/// Prepared dataset bundle.
pub struct AarmDataset {
    bundle: DatasetBundle,
}

/// Trained model bound to the dataset it was loaded against.
pub struct AarmModel {
    params: ModelParams,
    cache: AspectCache,
}

/// Averaged metrics as fractions in [0, 1].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AarmMetrics {
    pub recall: f64,
    pub precision: f64,
    pub ndcg: f64,
    pub hit_ratio: f64,
    pub num_users: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &AarmError) -> AarmStatus {
    match err {
        AarmError::Io { .. } => AarmStatus::Io,
        AarmError::Parse { .. } | AarmError::InvalidRecord { .. } | AarmError::Json(_) => AarmStatus::Parse,
        AarmError::Schema(_) | AarmError::DimensionMismatch { .. } | AarmError::MissingAspects(_) => AarmStatus::Schema,
        AarmError::UnknownUser(_) | AarmError::UnknownItem(_) => AarmStatus::UnknownId,
        AarmError::DegenerateNorm { .. } | AarmError::NonFinite { .. } => AarmStatus::Numeric,
        AarmError::InvalidArgument(_) => AarmStatus::InvalidArgument,
        _ => AarmStatus::Other,
    }
}

struct Failure(AarmStatus, String);

impl From<AarmError> for Failure {
    fn from(e: AarmError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AarmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> AarmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AarmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AarmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(AarmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread ("" after a success).
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn aarm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aarm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens a dataset bundle directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aarm_dataset_open(path: *const c_char, out: *mut *mut AarmDataset) -> AarmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(path, "path")?);
        let bundle = DatasetBundle::load(&path)?;
        *out = Box::into_raw(Box::new(AarmDataset { bundle }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from [`aarm_dataset_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aarm_dataset_free(dataset: *mut AarmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of users, items and aspects (PAD excluded).
///
/// # Safety
/// Pointers must be valid; any output pointer may be null to skip it.
#[no_mangle]
pub unsafe extern "C" fn aarm_dataset_counts(
    dataset: *const AarmDataset,
    num_users: *mut usize,
    num_items: *mut usize,
    num_aspects: *mut usize,
) -> AarmStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        if let Some(u) = num_users.as_mut() {
            *u = ds.bundle.num_users();
        }
        if let Some(v) = num_items.as_mut() {
            *v = ds.bundle.num_items();
        }
        if let Some(a) = num_aspects.as_mut() {
            *a = ds.bundle.vocab.num_aspects();
        }
        Ok(())
    })
}

/// Internal index of an external user id.
///
/// # Safety
/// `id` must be NUL-terminated; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn aarm_dataset_user_index(dataset: *const AarmDataset, id: *const c_char, out: *mut usize) -> AarmStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        *out_arg(out, "out")? = ds.bundle.user_index(str_arg(id, "id")?)?;
        Ok(())
    })
}

/// Internal index of an external item id.
///
/// # Safety
/// `id` must be NUL-terminated; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn aarm_dataset_item_index(dataset: *const AarmDataset, id: *const c_char, out: *mut usize) -> AarmStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        *out_arg(out, "out")? = ds.bundle.item_index(str_arg(id, "id")?)?;
        Ok(())
    })
}

/// Loads a checkpoint and checks it against `dataset`.
///
/// # Safety
/// `path` must be NUL-terminated; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn aarm_model_load(
    path: *const c_char,
    dataset: *const AarmDataset,
    out: *mut *mut AarmModel,
) -> AarmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let ds = handle(dataset, "dataset")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let params = load_model_for(&path, &ds.bundle)?;
        let cache = AspectCache::build(&params)?;
        *out = Box::into_raw(Box::new(AarmModel { params, cache }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`aarm_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aarm_model_free(model: *mut AarmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Inference-mode score of (user, item) by internal index.
///
/// # Safety
/// Handles must be valid and `model` loaded against `dataset`.
#[no_mangle]
pub unsafe extern "C" fn aarm_model_score(
    model: *const AarmModel,
    dataset: *const AarmDataset,
    user: usize,
    item: usize,
    out: *mut f64,
) -> AarmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let ds = handle(dataset, "dataset")?;
        if user >= ds.bundle.num_users() {
            return Err(AarmError::UnknownUser(user.to_string()).into());
        }
        *out_arg(out, "out")? = model::score(&m.params, &m.cache, &ds.bundle.sets, user, item)?;
        Ok(())
    })
}

/// Writes up to `n` recommended item indices for `user` into `items`
/// (capacity `n`) and their count into `written`.
///
/// # Safety
/// `items` must have room for `n` values; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn aarm_model_recommend(
    model: *const AarmModel,
    dataset: *const AarmDataset,
    user: usize,
    n: usize,
    items: *mut usize,
    written: *mut usize,
) -> AarmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let ds = handle(dataset, "dataset")?;
        let written = out_arg(written, "written")?;
        *written = 0;
        if items.is_null() && n > 0 {
            return Err(null("items"));
        }
        let scorer = ModelScorer::new(&m.params, &ds.bundle.sets)?;
        let list = recommend_top_n(&scorer as &dyn Scorer, &ds.bundle, user, n)?;
        for (k, &v) in list.iter().enumerate() {
            *items.add(k) = v;
        }
        *written = list.len();
        Ok(())
    })
}

/// Test-set evaluation at cutoff `n`.
///
/// # Safety
/// Handles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aarm_model_evaluate(
    model: *const AarmModel,
    dataset: *const AarmDataset,
    n: usize,
    threads: usize,
    out: *mut AarmMetrics,
) -> AarmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let ds = handle(dataset, "dataset")?;
        let out = out_arg(out, "out")?;
        if n == 0 {
            return Err(Failure(AarmStatus::InvalidArgument, "n must be positive".into()));
        }
        let scorer = ModelScorer::new(&m.params, &ds.bundle.sets)?;
        let workers = Workers::new(threads)?;
        let report = evaluate(&scorer, &ds.bundle, n, &workers)?;
        *out = AarmMetrics {
            recall: report.metrics.recall,
            precision: report.metrics.precision,
            ndcg: report.metrics.ndcg,
            hit_ratio: report.metrics.hit_ratio,
            num_users: report.num_users(),
        };
        Ok(())
    })
}

/// Runs a command-line invocation (`argv[0]` is the program name) and
/// returns its exit status.
///
/// # Safety
/// `argv` must hold `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn aarm_run_command(argc: c_int, argv: *const *const c_char) -> c_int {
    if argv.is_null() || argc < 0 {
        set_error("argv is null");
        return 2;
    }
    let mut args = Vec::with_capacity(argc as usize);
    for k in 0..argc as usize {
        match str_arg(*argv.add(k), "argv entry") {
            Ok(s) => args.push(s.to_string()),
            Err(Failure(_, msg)) => {
                set_error(&msg);
                return 2;
            }
        }
    }
    catch_unwind(|| aarm::cli::run_command(args)).unwrap_or(101)
}
