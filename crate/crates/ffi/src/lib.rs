//! C ABI over `lossprio`.
//!
//! Objects are opaque handles created by `*_new` functions and released with
//! the matching `*_free`. Every fallible call returns an [`LpStatus`]; on
//! failure the message is available from [`lp_last_error`] on the same
//! thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use lossprio::dataset::{apply_corruption, CorruptionKind, CorruptionSpec, DatasetPair, SyntheticParams, SyntheticTask};
use lossprio::harness::{run_training, speedup_from_curves, RunMetrics};
use lossprio::model::{Mlp, TrainerConfig};
use lossprio::prioritizer::{make_prioritizer, Candidate, Prioritizer, PrioritizerConfig};
use lossprio::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Numerical = 5,
    Diverged = 6,
    Format = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpPrioritizerKind {
    Uniform = 0,
    SbLoss = 1,
    SbEntropy = 2,
    Vr = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpCorruption {
    None = 0,
    RandomLabel = 1,
    ShuffledPixels = 2,
    Gaussian = 3,
}

/// Trainer settings. `max_backprops` of 0 means no cap.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct LpTrainerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub total_epochs: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub seed: u64,
    pub max_backprops: u64,
    pub eval_every: u64,
}

/// Backprops-to-threshold result. `reached` is false when the method never
/// gets to the threshold, in which case `method_backprops` and `speedup`
/// are 0.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct LpSpeedup {
    pub threshold_error: f64,
    pub baseline_backprops: u64,
    pub method_backprops: u64,
    pub speedup: f64,
    pub best_error: f64,
    pub reached: bool,
}

pub struct LpDataset {
    data: DatasetPair,
}

pub struct LpPrioritizer {
    inner: Box<dyn Prioritizer>,
    num_classes: usize,
}

pub struct LpModel {
    model: Mlp,
}

pub struct LpRun {
    metrics: RunMetrics,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LpStatus {
    match e {
        Error::Config(_) => LpStatus::Config,
        Error::Ingestion { .. } | Error::Io(_) => LpStatus::Io,
        Error::Numerical(_) | Error::Aggregation(_) => LpStatus::Numerical,
        Error::Diverged { .. } => LpStatus::Diverged,
        Error::Format { .. } | Error::Csv(_) | Error::Json(_) => LpStatus::Format,
    }
}

fn fail(status: LpStatus, msg: impl Into<String>) -> LpStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), LpStatus>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(LpStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: lossprio::Result<T>) -> Result<T, LpStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), LpStatus> {
    if p.is_null() {
        Err(fail(LpStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn slice_or_empty<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], LpStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts(p, n))
}

fn boxed<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Last error message on this thread, or null. Valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn lp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Defaults for every trainer field, with `eval_every` set to ten batches.
#[no_mangle]
pub extern "C" fn lp_trainer_config_default() -> LpTrainerConfig {
    let d = TrainerConfig::default();
    LpTrainerConfig {
        learning_rate: d.learning_rate,
        momentum: d.momentum,
        weight_decay: d.weight_decay,
        batch_size: d.batch_size,
        total_epochs: d.total_epochs,
        hidden_width: d.hidden_layers.first().copied().unwrap_or(0),
        hidden_layers: d.hidden_layers.len(),
        seed: d.seed,
        max_backprops: 0,
        eval_every: 10 * d.batch_size as u64,
    }
}

// ---- datasets ----

/// Synthetic clustered classification task.
#[no_mangle]
pub unsafe extern "C" fn lp_dataset_synthetic(
    n_train: usize,
    n_test: usize,
    num_classes: usize,
    feature_dim: usize,
    seed: u64,
    out: *mut *mut LpDataset,
) -> LpStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = SyntheticParams {
            num_classes,
            feature_dim,
            seed,
            ..SyntheticParams::default()
        };
        let data = lift(SyntheticTask::new(params).and_then(|t| t.sample_pair(n_train, n_test)))?;
        boxed(out, LpDataset { data });
        Ok(())
    })
}

/// Corrupts the training split in place.
#[no_mangle]
pub unsafe extern "C" fn lp_dataset_corrupt(
    dataset: *mut LpDataset,
    kind: LpCorruption,
    fraction: f64,
    seed: u64,
) -> LpStatus {
    guard(|| {
        non_null(dataset, "dataset")?;
        let ds = &mut *dataset;
        let kind = match kind {
            LpCorruption::None => CorruptionKind::None,
            LpCorruption::RandomLabel => CorruptionKind::RandomLabel,
            LpCorruption::ShuffledPixels => CorruptionKind::ShuffledPixels,
            LpCorruption::Gaussian => CorruptionKind::Gaussian,
        };
        let train = lift(apply_corruption(&ds.data.train, &CorruptionSpec::new(kind, fraction, seed)))?;
        ds.data = lift(DatasetPair::new(train, ds.data.test.clone()))?;
        Ok(())
    })
}

/// Number of training examples; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn lp_dataset_train_len(dataset: *const LpDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.data.train.len())
}

/// Number of corrupted training examples; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn lp_dataset_corrupted_count(dataset: *const LpDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.data.train.corrupted_count())
}

#[no_mangle]
pub unsafe extern "C" fn lp_dataset_free(dataset: *mut LpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

// ---- prioritizers ----

/// `pool_batches` is only read for VR, `beta` only for the SB kinds.
#[no_mangle]
pub unsafe extern "C" fn lp_prioritizer_new(
    kind: LpPrioritizerKind,
    beta: f64,
    pool_batches: usize,
    batch_size: usize,
    num_classes: usize,
    seed: u64,
    out: *mut *mut LpPrioritizer,
) -> LpStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = match kind {
            LpPrioritizerKind::Uniform => PrioritizerConfig::uniform(),
            LpPrioritizerKind::SbLoss => PrioritizerConfig::sb_loss(beta),
            LpPrioritizerKind::SbEntropy => PrioritizerConfig::sb_entropy(beta),
            LpPrioritizerKind::Vr => PrioritizerConfig::vr(pool_batches, batch_size),
        }
        .with_seed(seed);
        let inner = lift(make_prioritizer(&cfg, batch_size))?;
        boxed(out, LpPrioritizer { inner, num_classes });
        Ok(())
    })
}

/// Feeds `n` scored candidates. `probs` holds `n * num_classes` row-major
/// softmax outputs and may be null unless the kind is entropy-based.
/// Emitted ids are written back to back into `out_ids`; `out_len` receives
/// their count. Fails with `BUFFER_TOO_SMALL` (writing the needed length)
/// if `out_cap` is insufficient, in which case the batches are lost.
#[no_mangle]
pub unsafe extern "C" fn lp_prioritizer_feed(
    prioritizer: *mut LpPrioritizer,
    ids: *const u64,
    losses: *const f64,
    probs: *const f64,
    n: usize,
    out_ids: *mut u64,
    out_cap: usize,
    out_len: *mut usize,
) -> LpStatus {
    guard(|| {
        non_null(prioritizer, "prioritizer")?;
        non_null(out_len, "out_len")?;
        let p = &mut *prioritizer;
        let ids = slice_or_empty(ids, n, "ids")?;
        let losses = slice_or_empty(losses, n, "losses")?;
        let k = p.num_classes;
        let probs: &[f64] = if probs.is_null() {
            &[]
        } else {
            slice::from_raw_parts(probs, n * k)
        };
        let candidates: Vec<Candidate> = (0..n)
            .map(|i| Candidate {
                id: ids[i],
                loss: losses[i],
                probs: if probs.is_empty() { &[] } else { &probs[i * k..(i + 1) * k] },
            })
            .collect();
        let emitted: Vec<u64> = lift(p.inner.feed(&candidates))?
            .into_iter()
            .flat_map(|b| b.ids)
            .collect();
        *out_len = emitted.len();
        if emitted.len() > out_cap {
            return Err(fail(
                LpStatus::BufferTooSmall,
                format!("{} ids emitted, capacity {out_cap}", emitted.len()),
            ));
        }
        if !emitted.is_empty() {
            non_null(out_ids, "out_ids")?;
            ptr::copy_nonoverlapping(emitted.as_ptr(), out_ids, emitted.len());
        }
        Ok(())
    })
}

/// Writes the prioritizer state as a NUL-terminated JSON line into `buf`.
/// `needed` receives the required size including the terminator.
#[no_mangle]
pub unsafe extern "C" fn lp_prioritizer_snapshot(
    prioritizer: *const LpPrioritizer,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> LpStatus {
    guard(|| {
        non_null(prioritizer, "prioritizer")?;
        non_null(needed, "needed")?;
        let text = (*prioritizer).inner.snapshot().to_text();
        *needed = text.len() + 1;
        if cap < text.len() + 1 {
            return Err(fail(LpStatus::BufferTooSmall, format!("snapshot needs {} bytes", text.len() + 1)));
        }
        non_null(buf, "buf")?;
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_prioritizer_free(prioritizer: *mut LpPrioritizer) {
    if !prioritizer.is_null() {
        drop(Box::from_raw(prioritizer));
    }
}

// ---- models ----

/// MLP with the given layer widths, input first and classes last.
#[no_mangle]
pub unsafe extern "C" fn lp_model_new(
    widths: *const usize,
    n_widths: usize,
    seed: u64,
    out: *mut *mut LpModel,
) -> LpStatus {
    guard(|| {
        non_null(out, "out")?;
        let widths = slice_or_empty(widths, n_widths, "widths")?;
        let model = lift(Mlp::new(widths, seed))?;
        boxed(out, LpModel { model });
        Ok(())
    })
}

/// Softmax output for one example, written to `probs_out[0..num_classes]`.
#[no_mangle]
pub unsafe extern "C" fn lp_model_predict(
    model: *const LpModel,
    features: *const f64,
    dim: usize,
    probs_out: *mut f64,
    num_classes: usize,
) -> LpStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(probs_out, "probs_out")?;
        let m = &(*model).model;
        if dim != m.input_dim() || num_classes != m.num_classes() {
            return Err(fail(
                LpStatus::InvalidArgument,
                format!(
                    "model expects {} features and {} classes, got {dim} and {num_classes}",
                    m.input_dim(),
                    m.num_classes()
                ),
            ));
        }
        let x = slice_or_empty(features, dim, "features")?;
        let ex = lossprio::dataset::Example::new(0, x.to_vec(), 0);
        let r = lift(m.forward_one(&ex))?;
        ptr::copy_nonoverlapping(r.probs.as_ptr(), probs_out, num_classes);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_model_param_count(model: *const LpModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.params().len())
}

#[no_mangle]
pub unsafe extern "C" fn lp_model_free(model: *mut LpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---- training runs ----

/// Trains on `dataset` with the given prioritizer settings. A diverged run
/// still yields a handle, and the call returns `DIVERGED`.
#[no_mangle]
pub unsafe extern "C" fn lp_train(
    dataset: *const LpDataset,
    config: *const LpTrainerConfig,
    kind: LpPrioritizerKind,
    beta: f64,
    pool_batches: usize,
    out: *mut *mut LpRun,
) -> LpStatus {
    guard(|| {
        non_null(dataset, "dataset")?;
        non_null(config, "config")?;
        non_null(out, "out")?;
        let c = *config;
        let trainer = TrainerConfig {
            learning_rate: c.learning_rate,
            momentum: c.momentum,
            weight_decay: c.weight_decay,
            batch_size: c.batch_size,
            total_epochs: c.total_epochs,
            hidden_layers: vec![c.hidden_width; c.hidden_layers],
            seed: c.seed,
            max_backprops: (c.max_backprops > 0).then_some(c.max_backprops),
            ..TrainerConfig::default()
        };
        let prio = match kind {
            LpPrioritizerKind::Uniform => PrioritizerConfig::uniform(),
            LpPrioritizerKind::SbLoss => PrioritizerConfig::sb_loss(beta),
            LpPrioritizerKind::SbEntropy => PrioritizerConfig::sb_entropy(beta),
            LpPrioritizerKind::Vr => PrioritizerConfig::vr(pool_batches, c.batch_size),
        }
        .with_seed(c.seed);
        let metrics = lift(run_training(&(*dataset).data, &trainer, &prio, c.eval_every))?;
        let diverged = metrics.divergence.clone();
        boxed(out, LpRun { metrics });
        match diverged {
            Some(msg) => Err(fail(LpStatus::Diverged, msg)),
            None => Ok(()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_run_eval_count(run: *const LpRun) -> usize {
    run.as_ref().map_or(0, |r| r.metrics.eval_points.len())
}

/// The `index`-th evaluation as (backprops, test error).
#[no_mangle]
pub unsafe extern "C" fn lp_run_eval_point(
    run: *const LpRun,
    index: usize,
    backprops: *mut u64,
    test_error: *mut f64,
) -> LpStatus {
    guard(|| {
        non_null(run, "run")?;
        non_null(backprops, "backprops")?;
        non_null(test_error, "test_error")?;
        let run = &*run;
        let p = run
            .metrics
            .eval_points
            .get(index)
            .ok_or_else(|| fail(LpStatus::InvalidArgument, format!("no evaluation {index}")))?;
        *backprops = p.backprops;
        *test_error = p.test_error;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lp_run_best_error(run: *const LpRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.metrics.best_test_error())
}

#[no_mangle]
pub unsafe extern "C" fn lp_run_total_backprops(run: *const LpRun) -> u64 {
    run.as_ref().map_or(0, |r| r.metrics.total_backprops())
}

/// Mean corrupted fraction of the batches from `start` (fraction of the
/// run) onwards.
#[no_mangle]
pub unsafe extern "C" fn lp_run_corrupted_fraction(run: *const LpRun, start: f64) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.metrics.mean_corrupted_fraction_from(start))
}

#[no_mangle]
pub unsafe extern "C" fn lp_run_free(run: *mut LpRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

// ---- speedup ----

/// Compares two evaluation curves given as parallel arrays of backprop
/// counts and test errors.
#[no_mangle]
pub unsafe extern "C" fn lp_speedup(
    baseline_backprops: *const u64,
    baseline_errors: *const f64,
    n_baseline: usize,
    method_backprops: *const u64,
    method_errors: *const f64,
    n_method: usize,
    slack: f64,
    out: *mut LpSpeedup,
) -> LpStatus {
    guard(|| {
        non_null(out, "out")?;
        let zip = |x: &[u64], y: &[f64]| x.iter().copied().zip(y.iter().copied()).collect::<Vec<_>>();
        let base = zip(
            slice_or_empty(baseline_backprops, n_baseline, "baseline_backprops")?,
            slice_or_empty(baseline_errors, n_baseline, "baseline_errors")?,
        );
        let method = zip(
            slice_or_empty(method_backprops, n_method, "method_backprops")?,
            slice_or_empty(method_errors, n_method, "method_errors")?,
        );
        let r = lift(speedup_from_curves(&base, &method, slack))?;
        *out = LpSpeedup {
            threshold_error: r.threshold_error,
            baseline_backprops: r.baseline_backprops,
            method_backprops: r.method_backprops.unwrap_or(0),
            speedup: r.speedup.unwrap_or(0.0),
            best_error: r.best_error,
            reached: r.speedup.is_some(),
        };
        Ok(())
    })
}
