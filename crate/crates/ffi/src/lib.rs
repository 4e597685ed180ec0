//! C ABI over `vrql-core`.
//!
//! Every fallible function returns a [`VrqlStatus`]; on failure a message is
//! available from [`vrql_last_error`] on the same thread. MDPs and samplers are
//! opaque handles that must be released with their `_free` function. Output
//! buffers are caller-allocated and their lengths are checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vrql_core::bounds;
use vrql_core::{Error, GenerativeSampler, Policy, QFunction, SampleMatrix, TabularMdp, VrqlConfig};

/// Result codes. Validation and I/O failures use the same numbers as the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VrqlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    NonConvergence = 4,
    SingularSystem = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque MDP handle.
pub struct VrqlMdp {
    inner: TabularMdp,
}

/// Opaque generative-model sampler handle.
pub struct VrqlSampler {
    inner: GenerativeSampler,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: VrqlStatus, msg: impl Into<String>) -> VrqlStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> VrqlStatus {
    match err {
        Error::NonConvergence { .. } => VrqlStatus::NonConvergence,
        Error::SingularSystem => VrqlStatus::SingularSystem,
        e if e.exit_code() == 3 => VrqlStatus::Io,
        _ => VrqlStatus::InvalidArgument,
    }
}

impl From<Error> for VrqlStatus {
    fn from(err: Error) -> Self {
        let status = status_of(&err);
        set_error(err.to_string());
        status
    }
}

/// Runs `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), VrqlStatus>) -> VrqlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => VrqlStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(VrqlStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn slice<'a, T>(data: *const T, len: usize) -> Result<&'a [T], VrqlStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(VrqlStatus::NullPointer, "null input buffer"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn slice_mut<'a, T>(data: *mut T, len: usize, needed: usize) -> Result<&'a mut [T], VrqlStatus> {
    if len < needed {
        return Err(fail(VrqlStatus::BufferTooSmall, format!("output buffer holds {len}, need {needed}")));
    }
    if needed == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(fail(VrqlStatus::NullPointer, "null output buffer"));
    }
    Ok(&mut std::slice::from_raw_parts_mut(data, len)[..needed])
}

unsafe fn handle<'a, T>(ptr: *const T) -> Result<&'a T, VrqlStatus> {
    ptr.as_ref().ok_or_else(|| fail(VrqlStatus::NullPointer, "null handle"))
}

unsafe fn handle_mut<'a, T>(ptr: *mut T) -> Result<&'a mut T, VrqlStatus> {
    ptr.as_mut().ok_or_else(|| fail(VrqlStatus::NullPointer, "null handle"))
}

unsafe fn out_ref<'a, T>(ptr: *mut T) -> Result<&'a mut T, VrqlStatus> {
    ptr.as_mut().ok_or_else(|| fail(VrqlStatus::NullPointer, "null output pointer"))
}

unsafe fn c_str<'a>(ptr: *const c_char) -> Result<&'a str, VrqlStatus> {
    if ptr.is_null() {
        return Err(fail(VrqlStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| fail(VrqlStatus::InvalidArgument, "string is not UTF-8"))
}

fn q_from(mdp: &TabularMdp, values: &[f64]) -> Result<QFunction, VrqlStatus> {
    Ok(QFunction::from_values(mdp.num_states(), mdp.num_actions(), values.to_vec())?)
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vrql_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vrql_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vrql_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds and validates an MDP from a row-major `[s][a][s']` kernel and `[s][a]` rewards.
///
/// # Safety
/// `kernel` and `reward` must point to `kernel_len` and `reward_len` doubles;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrql_mdp_new(
    num_states: usize,
    num_actions: usize,
    kernel: *const f64,
    kernel_len: usize,
    reward: *const f64,
    reward_len: usize,
    gamma: f64,
    r_max: f64,
    out: *mut *mut VrqlMdp,
) -> VrqlStatus {
    guard(|| {
        let out = out_ref(out)?;
        let kernel = slice(kernel, kernel_len)?.to_vec();
        let reward = slice(reward, reward_len)?.to_vec();
        let inner = TabularMdp::new(num_states, num_actions, kernel, reward, gamma, r_max)?;
        *out = Box::into_raw(Box::new(VrqlMdp { inner }));
        Ok(())
    })
}

/// Parses an MDP JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrql_mdp_from_json(json: *const c_char, out: *mut *mut VrqlMdp) -> VrqlStatus {
    guard(|| {
        let out = out_ref(out)?;
        let inner: TabularMdp = serde_json::from_str(c_str(json)?).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(VrqlMdp { inner }));
        Ok(())
    })
}

/// Reads an MDP JSON document from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrql_mdp_from_file(path: *const c_char, out: *mut *mut VrqlMdp) -> VrqlStatus {
    guard(|| {
        let out = out_ref(out)?;
        let text = std::fs::read_to_string(c_str(path)?).map_err(Error::from)?;
        let inner: TabularMdp = serde_json::from_str(&text).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(VrqlMdp { inner }));
        Ok(())
    })
}

/// Serializes an MDP to JSON; free the result with [`vrql_string_free`].
///
/// # Safety
/// `mdp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrql_mdp_to_json(mdp: *const VrqlMdp, out: *mut *mut c_char) -> VrqlStatus {
    guard(|| {
        let mdp = handle(mdp)?;
        let out = out_ref(out)?;
        let text = serde_json::to_string(&mdp.inner).map_err(Error::from)?;
        *out = CString::new(text).map_err(|_| fail(VrqlStatus::InvalidArgument, "interior NUL"))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `mdp` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn vrql_mdp_free(mdp: *mut VrqlMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Writes the state and action counts, discount and reward bound.
///
/// # Safety
/// `mdp` must be a live handle; each output pointer may be NULL to skip it.
#[no_mangle]
pub unsafe extern "C" fn vrql_mdp_dims(
    mdp: *const VrqlMdp,
    num_states: *mut usize,
    num_actions: *mut usize,
    gamma: *mut f64,
    r_max: *mut f64,
) -> VrqlStatus {
    guard(|| {
        let m = &handle(mdp)?.inner;
        if let Some(p) = num_states.as_mut() {
            *p = m.num_states();
        }
        if let Some(p) = num_actions.as_mut() {
            *p = m.num_actions();
        }
        if let Some(p) = gamma.as_mut() {
            *p = m.discount();
        }
        if let Some(p) = r_max.as_mut() {
            *p = m.r_max();
        }
        Ok(())
    })
}

/// Applies the Bellman operator to `theta` (length `|S||A|`).
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn vrql_bellman_apply(
    mdp: *const VrqlMdp,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
    out_len: usize,
) -> VrqlStatus {
    guard(|| {
        let m = &handle(mdp)?.inner;
        let theta = q_from(m, slice(theta, theta_len)?)?;
        let out = slice_mut(out, out_len, m.num_pairs())?;
        out.copy_from_slice(vrql_core::bellman_apply(m, &theta)?.values());
        Ok(())
    })
}

/// Applies the empirical Bellman operator built from `next_states`, one
/// successor per `(s, a)` in row-major order.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn vrql_empirical_bellman_apply(
    mdp: *const VrqlMdp,
    next_states: *const u32,
    next_len: usize,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
    out_len: usize,
) -> VrqlStatus {
    guard(|| {
        let m = &handle(mdp)?.inner;
        let sample = SampleMatrix::new(m.num_states(), m.num_actions(), slice(next_states, next_len)?.to_vec())?;
        let theta = q_from(m, slice(theta, theta_len)?)?;
        let out = slice_mut(out, out_len, m.num_pairs())?;
        let result = vrql_core::empirical_bellman_apply(&m.reward_matrix(), m.discount(), &sample, &theta)?;
        out.copy_from_slice(result.values());
        Ok(())
    })
}

/// Value iteration to `tol`; writes `theta*` (length `|S||A|`).
///
/// # Safety
/// `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vrql_solve_optimal_q(mdp: *const VrqlMdp, tol: f64, out: *mut f64, out_len: usize) -> VrqlStatus {
    guard(|| {
        let m = &handle(mdp)?.inner;
        let out = slice_mut(out, out_len, m.num_pairs())?;
        out.copy_from_slice(vrql_core::solve_optimal_q(m, tol)?.values());
        Ok(())
    })
}

/// Greedy policy of `theta` with lowest-index tie-breaking; writes one action per state.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn vrql_greedy_policy(
    mdp: *const VrqlMdp,
    theta: *const f64,
    theta_len: usize,
    actions: *mut usize,
    actions_len: usize,
) -> VrqlStatus {
    guard(|| {
        let m = &handle(mdp)?.inner;
        let theta = q_from(m, slice(theta, theta_len)?)?;
        let out = slice_mut(actions, actions_len, m.num_states())?;
        out.copy_from_slice(vrql_core::greedy_policy(&theta).actions());
        Ok(())
    })
}

/// Exact `Q^pi` for a deterministic policy (one action per state).
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn vrql_policy_q_exact(
    mdp: *const VrqlMdp,
    actions: *const usize,
    actions_len: usize,
    out: *mut f64,
    out_len: usize,
) -> VrqlStatus {
    guard(|| {
        let m = &handle(mdp)?.inner;
        if actions_len != m.num_states() {
            return Err(fail(VrqlStatus::InvalidArgument, format!("policy needs {} actions", m.num_states())));
        }
        let policy = Policy::new(slice(actions, actions_len)?.to_vec(), m.num_actions())?;
        let out = slice_mut(out, out_len, m.num_pairs())?;
        out.copy_from_slice(vrql_core::policy_q_exact(m, &policy)?.values());
        Ok(())
    })
}

/// Instance complexity at `theta_star`: writes `sigma(theta*)` and the two scalars.
///
/// # Safety
/// Buffers must hold the stated number of doubles; scalar outputs may be NULL.
#[no_mangle]
pub unsafe extern "C" fn vrql_instance_complexity(
    mdp: *const VrqlMdp,
    theta_star: *const f64,
    theta_len: usize,
    sigma_out: *mut f64,
    sigma_len: usize,
    theta_norm: *mut f64,
    b0: *mut f64,
) -> VrqlStatus {
    guard(|| {
        let m = &handle(mdp)?.inner;
        let theta = q_from(m, slice(theta_star, theta_len)?)?;
        let complexity = vrql_core::instance_complexity(m, &theta)?;
        let sigma = slice_mut(sigma_out, sigma_len, m.num_pairs())?;
        sigma.copy_from_slice(complexity.sigma_star.values());
        if let Some(p) = theta_norm.as_mut() {
            *p = complexity.theta_star_norm;
        }
        if let Some(p) = b0.as_mut() {
            *p = complexity.b0;
        }
        Ok(())
    })
}

/// Creates a seeded sampler for `mdp`. The sampler keeps its own copy of the
/// transition tables, so the MDP may be freed afterwards.
///
/// # Safety
/// `mdp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrql_sampler_new(mdp: *const VrqlMdp, seed: u64, out: *mut *mut VrqlSampler) -> VrqlStatus {
    guard(|| {
        let m = &handle(mdp)?.inner;
        let out = out_ref(out)?;
        let inner = GenerativeSampler::new(m, seed)?;
        *out = Box::into_raw(Box::new(VrqlSampler { inner }));
        Ok(())
    })
}

/// Child stream keyed by `label`; shares the parent's sample counter.
///
/// # Safety
/// `sampler` must be a live handle, `label` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vrql_sampler_split(
    sampler: *const VrqlSampler,
    label: *const c_char,
    out: *mut *mut VrqlSampler,
) -> VrqlStatus {
    guard(|| {
        let s = handle(sampler)?;
        let label = c_str(label)?;
        let out = out_ref(out)?;
        *out = Box::into_raw(Box::new(VrqlSampler { inner: s.inner.split(label) }));
        Ok(())
    })
}

/// Draws one sample matrix: one successor per `(s, a)` in row-major order.
///
/// # Safety
/// `sampler` must be a live handle; `out` must hold `out_len` integers.
#[no_mangle]
pub unsafe extern "C" fn vrql_sampler_draw(sampler: *mut VrqlSampler, out: *mut u32, out_len: usize) -> VrqlStatus {
    guard(|| {
        let s = handle_mut(sampler)?;
        let needed = s.inner.num_states() * s.inner.num_actions();
        let out = slice_mut(out, out_len, needed)?;
        out.copy_from_slice(s.inner.draw().next_states());
        Ok(())
    })
}

/// Matrix samples drawn so far by this sampler and every stream split from
/// the same root; 0 for a NULL handle.
///
/// # Safety
/// `sampler` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrql_sampler_samples_drawn(sampler: *const VrqlSampler) -> u64 {
    sampler.as_ref().map_or(0, |s| s.inner.samples_drawn())
}

/// # Safety
/// `sampler` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn vrql_sampler_free(sampler: *mut VrqlSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Plans `K` and `{N_m}` for `num_epochs` epochs.
///
/// # Safety
/// `sizes_out` must hold `sizes_len >= num_epochs` integers; scalar outputs may be NULL.
#[no_mangle]
pub unsafe extern "C" fn vrql_plan_parameters(
    gamma: f64,
    delta: f64,
    num_pairs: usize,
    num_epochs: usize,
    c1: f64,
    c2: f64,
    base: f64,
    epoch_length: *mut u64,
    sizes_out: *mut u64,
    sizes_len: usize,
    total_samples: *mut u64,
) -> VrqlStatus {
    guard(|| {
        let plan = bounds::plan_parameters(gamma, delta, num_pairs, num_epochs, c1, c2, base)?;
        slice_mut(sizes_out, sizes_len, num_epochs)?.copy_from_slice(&plan.recenter_sizes);
        if let Some(p) = epoch_length.as_mut() {
            *p = plan.epoch_length_k;
        }
        if let Some(p) = total_samples.as_mut() {
            *p = plan.total_samples;
        }
        Ok(())
    })
}

/// Smallest `M >= 1` with `b0 / base^M <= epsilon`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrql_epochs_needed(epsilon: f64, b0: f64, base: f64, out: *mut usize) -> VrqlStatus {
    guard(|| {
        let out = out_ref(out)?;
        if !(epsilon > 0.0 && base > 1.0 && b0.is_finite()) {
            return Err(fail(VrqlStatus::InvalidArgument, "need epsilon > 0, base > 1 and finite b0"));
        }
        *out = bounds::epochs_needed(epsilon, b0, base);
        Ok(())
    })
}

/// Instance-dependent sample budget.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrql_corollary_budget(
    gamma: f64,
    delta: f64,
    num_pairs: usize,
    epsilon: f64,
    b0: f64,
    c: f64,
    c_prime: f64,
    out: *mut u64,
) -> VrqlStatus {
    guard(|| {
        *out_ref(out)? = bounds::corollary_budget(gamma, delta, num_pairs, epsilon, b0, c, c_prime)?;
        Ok(())
    })
}

/// Worst-case budget over `r_max`-bounded instances.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrql_worst_case_budget(
    gamma: f64,
    delta: f64,
    num_pairs: usize,
    epsilon: f64,
    r_max: f64,
    c: f64,
    out: *mut u64,
) -> VrqlStatus {
    guard(|| {
        *out_ref(out)? = bounds::worst_case_budget(gamma, delta, num_pairs, epsilon, r_max, c)?;
        Ok(())
    })
}

/// Two-phase budget.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vrql_t_max(
    gamma: f64,
    delta: f64,
    num_pairs: usize,
    epsilon: f64,
    r_max: f64,
    c: f64,
    out: *mut u64,
) -> VrqlStatus {
    guard(|| {
        *out_ref(out)? = bounds::t_max(gamma, delta, num_pairs, epsilon, r_max, c)?;
        Ok(())
    })
}

/// Runs variance-reduced Q-learning from zero with epoch length `epoch_length`
/// and recentering sizes `recenter_sizes[0..num_epochs]`. Writes the final
/// iterate, its sup-norm error against a freshly solved `theta*`, and the
/// number of matrix samples consumed.
///
/// # Safety
/// Buffers must hold the stated number of elements; scalar outputs may be NULL.
#[no_mangle]
pub unsafe extern "C" fn vrql_run(
    mdp: *const VrqlMdp,
    num_epochs: usize,
    epoch_length: u64,
    recenter_sizes: *const u64,
    seed: u64,
    theta_out: *mut f64,
    theta_len: usize,
    final_error: *mut f64,
    total_samples: *mut u64,
) -> VrqlStatus {
    guard(|| {
        let m = &handle(mdp)?.inner;
        let sizes = slice(recenter_sizes, num_epochs)?.to_vec();
        let config = VrqlConfig {
            num_epochs,
            epoch_length,
            recenter_sizes: sizes,
            base: 2.0,
            delta: 0.1,
            c1: 1.0,
            c2: 1.0,
            seed,
            record_inner: false,
        };
        let out = slice_mut(theta_out, theta_len, m.num_pairs())?;
        let (theta, trace) = vrql_core::vr_q_learning(m, &config, None)?;
        out.copy_from_slice(theta.values());
        let last = trace.final_record();
        if let Some(p) = final_error.as_mut() {
            *p = last.map_or(f64::NAN, |r| r.linf_error);
        }
        if let Some(p) = total_samples.as_mut() {
            *p = last.map_or(0, |r| r.cumulative_samples);
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, VrqlStatus::Panic);
        let msg = unsafe { CStr::from_ptr(vrql_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }

    #[test]
    fn errors_map_to_codes() {
        assert_eq!(status_of(&Error::SingularSystem), VrqlStatus::SingularSystem);
        assert_eq!(status_of(&Error::NonConvergence { tol: 1e-9, iters: 3 }), VrqlStatus::NonConvergence);
        assert_eq!(status_of(&Error::from(std::io::Error::other("disk"))), VrqlStatus::Io);
        assert_eq!(status_of(&Error::DiscountOutOfRange(1.0)), VrqlStatus::InvalidArgument);
    }

    #[test]
    fn output_buffers_are_length_checked() {
        let mut buf = [0.0; 2];
        assert!(unsafe { slice_mut(buf.as_mut_ptr(), 2, 3) }.is_err());
        assert_eq!(unsafe { slice_mut(buf.as_mut_ptr(), 2, 1) }.unwrap().len(), 1);
        assert!(unsafe { slice::<f64>(ptr::null(), 1) }.is_err());
        assert!(unsafe { slice::<f64>(ptr::null(), 0) }.unwrap().is_empty());
    }
}
