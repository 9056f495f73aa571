//! C interface to `hilbert_consensus`.
//!
//! Every function returns an [`HcStatus`]; results come back through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`hc_last_error`]. Handles are opaque and must be released with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use hilbert_consensus::analysis::Verdict;
use hilbert_consensus::graph::{is_qsc, WeightedDigraph};
use hilbert_consensus::hilbert::{self, Cone, StateVector};
use hilbert_consensus::output::trajectory_to_csv;
use hilbert_consensus::scenario::{RunOutput, Scenario};
use hilbert_consensus::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad dimensions, out-of-range indices or parameters outside their domain.
    InvalidArgument = 2,
    /// Scenario text or file could not be parsed or resolved.
    Config = 3,
    /// A model or hypothesis check failed (not Metzler, not QSC, ...).
    Contract = 4,
    Io = 5,
    /// The caller's buffer is too small; the required size is reported.
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcVerdict {
    Exponential = 0,
    Asymptotic = 1,
    Undecided = 2,
    Diverging = 3,
}

/// Weighted digraph, `weight(i, j)` being the influence of `j` on `i`.
pub struct HcDigraph(WeightedDigraph);

/// A parsed scenario plus the directory its relative paths resolve against.
pub struct HcScenario {
    scenario: Scenario,
    base: PathBuf,
}

/// Result of running a scenario: trajectory and certificates.
pub struct HcRun {
    output: RunOutput,
    hash: String,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> HcStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } => HcStatus::Config,
        Error::Io(_) => HcStatus::Io,
        Error::NotMetzler(_)
        | Error::ContractViolation { .. }
        | Error::NotQsc
        | Error::Hypothesis(_)
        | Error::NotCertifiable(_)
        | Error::StepTooLarge { .. } => HcStatus::Contract,
        _ => HcStatus::InvalidArgument,
    }
}

struct Fail(HcStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        set_error(e.to_string());
        Fail(status_of(&e))
    }
}

fn fail(status: HcStatus, msg: impl Into<String>) -> Fail {
    set_error(msg);
    Fail(status)
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HcStatus::Ok,
        Ok(Err(Fail(s))) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            HcStatus::Panic
        }
    }
}

fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: the caller promises `p` is either null or valid for writes.
    unsafe { p.as_mut() }.ok_or_else(|| fail(HcStatus::NullPointer, format!("`{name}` is null")))
}

fn obj<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    // SAFETY: non-null handles come from this library and are still live.
    unsafe { p.as_ref() }.ok_or_else(|| fail(HcStatus::NullPointer, format!("`{name}` is null")))
}

fn slice<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(fail(HcStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: the caller promises `n` readable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(HcStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: the caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(HcStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

fn state(p: *const f64, n: usize, name: &str) -> Result<StateVector, Fail> {
    Ok(StateVector::new(slice(p, n, name)?.to_vec())?)
}

fn copy_str(s: &str, buf: *mut c_char, len: usize, required: *mut usize) -> Result<(), Fail> {
    if let Some(r) = unsafe { required.as_mut() } {
        *r = s.len() + 1;
    }
    if buf.is_null() || len < s.len() + 1 {
        return Err(fail(
            HcStatus::BufferTooSmall,
            format!("buffer holds {len} bytes, need {}", s.len() + 1),
        ));
    }
    // SAFETY: `buf` has room for `len >= s.len() + 1` bytes.
    unsafe {
        ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
        *buf.add(s.len()) = 0;
    }
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn hc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Hilbert projective distance between two positive vectors of length `n`.
/// Infinite when exactly one of them touches the orthant boundary.
///
/// # Safety
/// `x` and `y` point to `n` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_hilbert_distance(x: *const f64, y: *const f64, n: usize, out_d: *mut f64) -> HcStatus {
    guard(|| {
        let d = hilbert::hilbert_distance(&state(x, n, "x")?, &state(y, n, "y")?)?;
        *out(out_d, "out")? = d.value();
        Ok(())
    })
}

/// Distance from `x` to the consensus ray, `ln(max x / min x)`.
///
/// # Safety
/// `x` points to `n` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_distance_to_consensus(x: *const f64, n: usize, out_d: *mut f64) -> HcStatus {
    guard(|| {
        *out(out_d, "out")? = hilbert::distance_to_consensus(&state(x, n, "x")?).value();
        Ok(())
    })
}

/// Smallest `gamma` whose cone contains `x`. `out_boundary`, when non-NULL,
/// is set to 1 if `x` touches the orthant boundary and lies in no cone.
///
/// # Safety
/// `x` points to `n` doubles; `out_gamma` is writable; `out_boundary` is
/// NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn hc_minimal_gamma(
    x: *const f64,
    n: usize,
    out_gamma: *mut f64,
    out_boundary: *mut i32,
) -> HcStatus {
    guard(|| {
        let g = hilbert::minimal_gamma(&state(x, n, "x")?)?;
        *out(out_gamma, "out_gamma")? = g.value;
        if let Some(p) = out_boundary.as_mut() {
            *p = g.boundary as i32;
        }
        Ok(())
    })
}

/// Hilbert diameter of the cone with margin `gamma` in dimension `n`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_cone_diameter(n: usize, gamma: f64, out_d: *mut f64) -> HcStatus {
    guard(|| {
        *out(out_d, "out")? = hilbert::cone_diameter(&Cone::new(n, gamma)?);
        Ok(())
    })
}

/// Contraction constant for `n` agents, link bound `delta` and cone margin
/// `epsilon`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_contraction_constant(n: usize, delta: f64, epsilon: f64, out_c: *mut f64) -> HcStatus {
    guard(|| {
        *out(out_c, "out")? = hilbert::contraction_constant(n, delta, epsilon)?;
        Ok(())
    })
}

/// Empty digraph on `n` agents.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_digraph_new(n: usize, out_g: *mut *mut HcDigraph) -> HcStatus {
    guard(|| {
        let slot = out(out_g, "out")?;
        if n == 0 {
            return Err(fail(HcStatus::InvalidArgument, "digraph needs at least one agent"));
        }
        *slot = Box::into_raw(Box::new(HcDigraph(WeightedDigraph::empty(n))));
        Ok(())
    })
}

/// Digraph from an `n × n` row-major weight matrix. The diagonal is ignored.
///
/// # Safety
/// `weights` points to `n * n` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_digraph_from_weights(
    weights: *const f64,
    n: usize,
    out_g: *mut *mut HcDigraph,
) -> HcStatus {
    guard(|| {
        let slot = out(out_g, "out")?;
        let len = n
            .checked_mul(n)
            .ok_or_else(|| fail(HcStatus::InvalidArgument, "n * n overflows"))?;
        let flat = slice(weights, len, "weights")?;
        let rows: Vec<Vec<f64>> = flat.chunks(n.max(1)).map(|r| r.to_vec()).collect();
        let g = WeightedDigraph::from_rows(&rows)?;
        *slot = Box::into_raw(Box::new(HcDigraph(g)));
        Ok(())
    })
}

/// # Safety
/// `g` is NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_digraph_free(g: *mut HcDigraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// `g` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_digraph_size(g: *const HcDigraph, out_n: *mut usize) -> HcStatus {
    guard(|| {
        *out(out_n, "out")? = obj(g, "g")?.0.n();
        Ok(())
    })
}

fn check_index(g: &WeightedDigraph, i: usize, j: usize) -> Result<(), Fail> {
    if i >= g.n() || j >= g.n() {
        return Err(fail(
            HcStatus::InvalidArgument,
            format!("link ({i}, {j}) out of range for {} agents", g.n()),
        ));
    }
    Ok(())
}

/// Sets the influence of `j` on `i` (0-based).
///
/// # Safety
/// `g` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_digraph_set_weight(g: *mut HcDigraph, i: usize, j: usize, w: f64) -> HcStatus {
    guard(|| {
        let g = out(g, "g")?;
        check_index(&g.0, i, j)?;
        g.0.set(i, j, w)?;
        Ok(())
    })
}

/// # Safety
/// `g` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_digraph_weight(g: *const HcDigraph, i: usize, j: usize, out_w: *mut f64) -> HcStatus {
    guard(|| {
        let g = obj(g, "g")?;
        check_index(&g.0, i, j)?;
        *out(out_w, "out")? = g.0.weight(i, j);
        Ok(())
    })
}

/// Quasi-strong connectivity check ignoring weights `<= tol`. Writes 1 or 0
/// to `out_qsc`; when connected, `out_center` (if non-NULL) receives the
/// smallest agent whose information reaches everyone and `out_margin` (if
/// non-NULL) the smallest weight on the witness tree.
///
/// # Safety
/// `g` is a live handle; `out_qsc` is writable; the others are NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn hc_digraph_is_qsc(
    g: *const HcDigraph,
    tol: f64,
    out_qsc: *mut i32,
    out_center: *mut usize,
    out_margin: *mut f64,
) -> HcStatus {
    guard(|| {
        let g = obj(g, "g")?;
        let flag = out(out_qsc, "out_qsc")?;
        let cert = is_qsc(&g.0, tol);
        *flag = cert.is_some() as i32;
        if let Some(c) = cert {
            if let Some(p) = out_center.as_mut() {
                *p = c.center;
            }
            if let Some(p) = out_margin.as_mut() {
                *p = c.margin;
            }
        }
        Ok(())
    })
}

fn scenario_handle(scenario: Scenario, base: PathBuf) -> *mut HcScenario {
    Box::into_raw(Box::new(HcScenario { scenario, base }))
}

/// Loads a scenario file, or a bundled scenario when `path` is one of the
/// bundled names.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_scenario_load(path: *const c_char, out_s: *mut *mut HcScenario) -> HcStatus {
    guard(|| {
        let slot = out(out_s, "out")?;
        let (value, base) = Scenario::load(Path::new(text(path, "path")?))?;
        *slot = scenario_handle(Scenario::from_value(value)?, base);
        Ok(())
    })
}

/// Parses scenario TOML. Relative paths inside resolve against the current
/// directory.
///
/// # Safety
/// `toml` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_scenario_from_toml(toml: *const c_char, out_s: *mut *mut HcScenario) -> HcStatus {
    guard(|| {
        let slot = out(out_s, "out")?;
        let s = Scenario::from_toml(text(toml, "toml")?)?;
        *slot = scenario_handle(s, PathBuf::from("."));
        Ok(())
    })
}

/// # Safety
/// `s` is NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_scenario_free(s: *mut HcScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Overrides the scenario's random seed.
///
/// # Safety
/// `s` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_scenario_set_seed(s: *mut HcScenario, seed: u64) -> HcStatus {
    guard(|| {
        out(s, "s")?.scenario.seed = Some(seed);
        Ok(())
    })
}

/// Hex SHA-256 of the scenario (64 characters plus NUL). `required`, when
/// non-NULL, receives the buffer size needed.
///
/// # Safety
/// `s` is a live handle; `buf` holds `len` bytes; `required` is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn hc_scenario_hash(
    s: *const HcScenario,
    buf: *mut c_char,
    len: usize,
    required: *mut usize,
) -> HcStatus {
    guard(|| copy_str(&obj(s, "s")?.scenario.hash(), buf, len, required))
}

/// Builds, simulates and certifies the scenario.
///
/// # Safety
/// `s` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hc_scenario_run(s: *const HcScenario, out_r: *mut *mut HcRun) -> HcStatus {
    guard(|| {
        let s = obj(s, "s")?;
        let slot = out(out_r, "out")?;
        let output = s.scenario.build(&s.base)?.run()?;
        *slot = Box::into_raw(Box::new(HcRun {
            output,
            hash: s.scenario.hash(),
        }));
        Ok(())
    })
}

/// # Safety
/// `r` is NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_run_free(r: *mut HcRun) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Number of samples and number of agents.
///
/// # Safety
/// `r` is a live handle; the out pointers are NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn hc_run_shape(r: *const HcRun, out_samples: *mut usize, out_agents: *mut usize) -> HcStatus {
    guard(|| {
        let t = &obj(r, "r")?.output.trajectory;
        if let Some(p) = out_samples.as_mut() {
            *p = t.times().len();
        }
        if let Some(p) = out_agents.as_mut() {
            *p = t.states().first().map_or(0, StateVector::n);
        }
        Ok(())
    })
}

/// Time of sample `k` and, when `state` is non-NULL, the state copied into
/// `state[0..n]`, where `n` must equal the number of agents.
///
/// # Safety
/// `r` is a live handle; `out_t` is NULL or writable; `state` is NULL or
/// holds `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn hc_run_sample(
    r: *const HcRun,
    k: usize,
    out_t: *mut f64,
    state: *mut f64,
    n: usize,
) -> HcStatus {
    guard(|| {
        let t = &obj(r, "r")?.output.trajectory;
        if k >= t.times().len() {
            return Err(fail(
                HcStatus::InvalidArgument,
                format!("sample {k} out of range ({} samples)", t.times().len()),
            ));
        }
        if let Some(p) = out_t.as_mut() {
            *p = t.times()[k];
        }
        if !state.is_null() {
            let x = t.states()[k].as_slice();
            if n != x.len() {
                return Err(fail(
                    HcStatus::InvalidArgument,
                    format!("state buffer has {n} entries, trajectory has {}", x.len()),
                ));
            }
            std::slice::from_raw_parts_mut(state, n).copy_from_slice(x);
        }
        Ok(())
    })
}

/// Consensus verdict, decay rate and prefactor of the certified envelope.
/// Any out pointer may be NULL.
///
/// # Safety
/// `r` is a live handle; the out pointers are NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn hc_run_consensus(
    r: *const HcRun,
    out_verdict: *mut HcVerdict,
    out_rate: *mut f64,
    out_prefactor: *mut f64,
) -> HcStatus {
    guard(|| {
        let c = &obj(r, "r")?.output.consensus;
        if let Some(p) = out_verdict.as_mut() {
            *p = match c.verdict {
                Verdict::Exponential => HcVerdict::Exponential,
                Verdict::Asymptotic => HcVerdict::Asymptotic,
                Verdict::Undecided => HcVerdict::Undecided,
                Verdict::Diverging => HcVerdict::Diverging,
            };
        }
        if let Some(p) = out_rate.as_mut() {
            *p = c.rate_lambda;
        }
        if let Some(p) = out_prefactor.as_mut() {
            *p = c.prefactor_k;
        }
        Ok(())
    })
}

/// Outcome of the lower-bound check: 1 pass, 0 fail, -1 when the scenario
/// declares no lower bound. `out_margin` (if non-NULL) receives the worst
/// margin.
///
/// # Safety
/// `r` is a live handle; `out_pass` is writable; `out_margin` is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn hc_run_lower_bound(r: *const HcRun, out_pass: *mut i32, out_margin: *mut f64) -> HcStatus {
    guard(|| {
        let lb = &obj(r, "r")?.output.lower_bound;
        *out(out_pass, "out_pass")? = lb.as_ref().map_or(-1, |l| l.pass as i32);
        if let (Some(p), Some(l)) = (out_margin.as_mut(), lb) {
            *p = l.worst_margin;
        }
        Ok(())
    })
}

/// Writes the trajectory as CSV, in the same format as `hcons simulate`.
///
/// # Safety
/// `r` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hc_run_write_csv(r: *const HcRun, path: *const c_char) -> HcStatus {
    guard(|| {
        let r = obj(r, "r")?;
        let csv = trajectory_to_csv(&r.output.trajectory, &r.hash);
        std::fs::write(text(path, "path")?, csv).map_err(Error::from)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, HcStatus::Panic);
        let msg = unsafe { CStr::from_ptr(hc_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }

    #[test]
    fn copy_str_checks_room() {
        let mut buf = [1 as c_char; 4];
        let mut need = 0;
        assert!(copy_str("abcd", buf.as_mut_ptr(), 4, &mut need).is_err());
        assert_eq!(need, 5);
        assert!(copy_str("abc", buf.as_mut_ptr(), 4, ptr::null_mut()).is_ok());
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "abc");
    }
}
