//! C interface to the environment and to trained policies.
//!
//! Handles are opaque pointers created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns an
//! [`AhtStatus`]; on failure [`aht_last_error`] gives a message for the
//! calling thread. Panics are caught at the boundary and reported as
//! [`AhtStatus::Panic`].
//!
//! Actions are head slots: `0..M` samples that global process, `M` stops.
//! In [`aht_env_step`] a negative slot marks an agent that does not act
//! (it must be inactive).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aht_core::cli::RunConfig;
use aht_core::env::{EnvConfig, EpisodeState};
use aht_core::eval::{evaluate, HeuristicPolicy};
use aht_core::nn::Checkpoint;
use aht_core::ppo::networks_for;
use aht_core::rng::{stream, ChaCha8Rng, Stream};
use aht_core::rollout::{build_policy_input, slot_to_action, NetworkPolicy, Policy};
use aht_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AhtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    WidthMismatch = 3,
    Checkpoint = 4,
    Numerical = 5,
    Io = 6,
    /// The episode has ended; reset before stepping again.
    EpisodeOver = 7,
    Panic = 8,
}

/// Result of a finished episode.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AhtOutcome {
    pub true_hypothesis: usize,
    pub num_wrong: usize,
    pub total_samples: u64,
    pub terminal_cost: f64,
    /// `c * sum(tau) + J`.
    pub risk: f64,
}

/// Evaluation summary.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AhtMetrics {
    pub episodes: usize,
    pub error_rate: f64,
    pub error_se: f64,
    pub avg_sample_size: f64,
    pub sample_se: f64,
    pub bayes_risk: f64,
    pub risk_se: f64,
}

/// One environment configuration and its current episode.
pub struct AhtEnv {
    config: EnvConfig,
    state: EpisodeState,
}

/// A frozen policy with its own action-sampling stream.
pub struct AhtPolicy {
    policy: Box<dyn Policy + Send>,
    rng: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AhtStatus {
    match e {
        Error::Config { .. } | Error::Contract(_) | Error::Trace { .. } => AhtStatus::InvalidArgument,
        Error::WidthMismatch { .. } => AhtStatus::WidthMismatch,
        Error::Checkpoint { .. } => AhtStatus::Checkpoint,
        Error::Numerical { .. } => AhtStatus::Numerical,
        Error::Io(_) | Error::Csv(_) => AhtStatus::Io,
    }
}

struct Fail(AhtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AhtStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(AhtStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AhtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AhtStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            AhtStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(invalid(format!("`{what}` holds {len} values, {need} needed")));
    }
    Ok(unsafe { std::slice::from_raw_parts_mut(p, need) })
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn aht_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn aht_status_name(status: AhtStatus) -> *const c_char {
    let s: &'static CStr = match status {
        AhtStatus::Ok => c"ok",
        AhtStatus::NullPointer => c"null pointer",
        AhtStatus::InvalidArgument => c"invalid argument",
        AhtStatus::WidthMismatch => c"width mismatch",
        AhtStatus::Checkpoint => c"checkpoint error",
        AhtStatus::Numerical => c"numerical error",
        AhtStatus::Io => c"i/o error",
        AhtStatus::EpisodeOver => c"episode over",
        AhtStatus::Panic => c"panic",
    };
    s.as_ptr()
}

fn new_env(config: EnvConfig, seed: u64, out: *mut *mut AhtEnv) -> Result<(), Fail> {
    let state = EpisodeState::new(&config, seed)?;
    unsafe { *out = Box::into_raw(Box::new(AhtEnv { config, state })) };
    Ok(())
}

/// Environment with `num_agents` agents that all sample every process
/// (`no_overlap == false`) or split the processes into equal contiguous
/// blocks. The first episode is started with `seed`.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn aht_env_new(
    num_processes: usize,
    num_agents: usize,
    sampling_cost: f64,
    no_overlap: bool,
    communication: bool,
    seed: u64,
    out: *mut *mut AhtEnv,
) -> AhtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mut config = if no_overlap {
            EnvConfig::no_overlap(num_processes, num_agents, sampling_cost)?
        } else {
            EnvConfig::independent(num_processes, num_agents, sampling_cost)?
        };
        config.communication = communication;
        new_env(config, seed, out)
    })
}

/// Environment from a run configuration file (the `env.*` and `run.mode`
/// keys apply).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn aht_env_from_config(path: *const c_char, seed: u64, out: *mut *mut AhtEnv) -> AhtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { path_arg(path, "path") }?;
        let cfg = RunConfig::load(Some(path), &[])?;
        new_env(cfg.env, seed, out)
    })
}

/// # Safety
/// `env` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn aht_env_free(env: *mut AhtEnv) {
    if !env.is_null() {
        drop(unsafe { Box::from_raw(env) });
    }
}

/// Start a new episode.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn aht_env_reset(env: *mut AhtEnv, seed: u64) -> AhtStatus {
    guard(|| {
        let env = unsafe { env.as_mut() }.ok_or_else(|| null("env"))?;
        env.state = EpisodeState::new(&env.config, seed)?;
        Ok(())
    })
}

/// # Safety
/// `env` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn aht_env_num_processes(env: *const AhtEnv) -> usize {
    unsafe { env.as_ref() }.map_or(0, |e| e.config.num_processes())
}

/// # Safety
/// `env` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn aht_env_num_agents(env: *const AhtEnv) -> usize {
    unsafe { env.as_ref() }.map_or(0, |e| e.config.num_agents())
}

/// Width of the actor input, for callers that run their own network.
///
/// # Safety
/// `env` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn aht_env_policy_input_width(env: *const AhtEnv) -> usize {
    unsafe { env.as_ref() }.map_or(0, |e| aht_core::rollout::policy_input_width(&e.config))
}

fn agent_index(env: &AhtEnv, agent: usize) -> Result<(), Fail> {
    if agent >= env.config.num_agents() {
        return Err(invalid(format!("agent {agent} out of range")));
    }
    Ok(())
}

/// Copy the agent's belief into `out` (at least M values).
///
/// # Safety
/// `env` must be a live handle; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn aht_env_belief(env: *const AhtEnv, agent: usize, out: *mut f64, len: usize) -> AhtStatus {
    guard(|| {
        let env = unsafe { env.as_ref() }.ok_or_else(|| null("env"))?;
        agent_index(env, agent)?;
        let b = env.state.belief(agent).probs();
        unsafe { out_slice(out, len, b.len(), "out") }?.copy_from_slice(b);
        Ok(())
    })
}

/// Copy the agent's legal-slot mask (M + 1 bytes, 1 = legal) into `out`.
///
/// # Safety
/// `env` must be a live handle; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn aht_env_action_mask(env: *const AhtEnv, agent: usize, out: *mut u8, len: usize) -> AhtStatus {
    guard(|| {
        let env = unsafe { env.as_ref() }.ok_or_else(|| null("env"))?;
        agent_index(env, agent)?;
        let mask = env.state.action_mask(&env.config, agent);
        let dst = unsafe { out_slice(out, len, mask.len(), "out") }?;
        for (d, m) in dst.iter_mut().zip(mask) {
            *d = u8::from(m);
        }
        Ok(())
    })
}

/// Copy the agent's actor input into `out`.
///
/// # Safety
/// `env` must be a live handle; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn aht_env_policy_input(env: *const AhtEnv, agent: usize, out: *mut f64, len: usize) -> AhtStatus {
    guard(|| {
        let env = unsafe { env.as_ref() }.ok_or_else(|| null("env"))?;
        agent_index(env, agent)?;
        let x = build_policy_input(agent, &env.state, &env.config);
        unsafe { out_slice(out, len, x.len(), "out") }?.copy_from_slice(&x);
        Ok(())
    })
}

/// # Safety
/// `env` must be a live handle or null (returns false).
#[no_mangle]
pub unsafe extern "C" fn aht_env_is_active(env: *const AhtEnv, agent: usize) -> bool {
    unsafe { env.as_ref() }.is_some_and(|e| agent < e.config.num_agents() && e.state.is_active(agent))
}

/// Advance one tick. `slots[k]` is agent k's head slot, negative for an
/// agent that has already stopped. `done` receives whether the episode ended.
///
/// # Safety
/// `env` must be a live handle; `slots` must hold `len` values; `done` must
/// be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn aht_env_step(env: *mut AhtEnv, slots: *const i64, len: usize, done: *mut bool) -> AhtStatus {
    guard(|| {
        let env = unsafe { env.as_mut() }.ok_or_else(|| null("env"))?;
        if slots.is_null() {
            return Err(null("slots"));
        }
        if done.is_null() {
            return Err(null("done"));
        }
        if env.state.is_terminal() {
            return Err(Fail(AhtStatus::EpisodeOver, "episode has ended".into()));
        }
        let k = env.config.num_agents();
        if len != k {
            return Err(invalid(format!("{len} slots given for {k} agents")));
        }
        let slots = unsafe { std::slice::from_raw_parts(slots, len) };
        let actions = slots
            .iter()
            .enumerate()
            .map(|(agent, &s)| match usize::try_from(s) {
                Ok(slot) => slot_to_action(&env.config, agent, slot).map(Some),
                Err(_) => Ok(None),
            })
            .collect::<aht_core::Result<Vec<_>>>()?;
        let out = env.state.step(&env.config, &actions)?;
        unsafe { *done = out.outcome.is_some() };
        Ok(())
    })
}

/// Outcome of the finished episode; `EpisodeOver` is not an error here but
/// `InvalidArgument` is returned while the episode is still running.
///
/// # Safety
/// `env` must be a live handle; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn aht_env_outcome(env: *const AhtEnv, out: *mut AhtOutcome) -> AhtStatus {
    guard(|| {
        let env = unsafe { env.as_ref() }.ok_or_else(|| null("env"))?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let o = env.state.outcome().ok_or_else(|| invalid("episode still running"))?;
        *out = AhtOutcome {
            true_hypothesis: o.true_hypothesis,
            num_wrong: o.num_wrong,
            total_samples: o.total_samples(),
            terminal_cost: o.terminal_cost,
            risk: o.risk(),
        };
        Ok(())
    })
}

fn new_policy(policy: Box<dyn Policy + Send>, seed: u64, out: *mut *mut AhtPolicy) {
    let rng = stream(seed, Stream::Policy, 0);
    unsafe { *out = Box::into_raw(Box::new(AhtPolicy { policy, rng })) };
}

/// Actor from a training checkpoint, checked against `env`'s widths.
/// `greedy` picks the most probable slot instead of sampling; `seed` seeds
/// the sampling stream.
///
/// # Safety
/// `path` must be a NUL-terminated string, `env` a live handle and `out`
/// valid for writing.
#[no_mangle]
pub unsafe extern "C" fn aht_policy_load(
    path: *const c_char,
    env: *const AhtEnv,
    greedy: bool,
    seed: u64,
    out: *mut *mut AhtPolicy,
) -> AhtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let env = unsafe { env.as_ref() }.ok_or_else(|| null("env"))?;
        let path = unsafe { path_arg(path, "path") }?;
        let ck = Checkpoint::load(path)?;
        let (actor, _) = networks_for(&env.config, &ck)?;
        new_policy(Box::new(NetworkPolicy::new(actor.net.clone(), greedy)), seed, out);
        Ok(())
    })
}

/// Highest-belief rule with stopping threshold `threshold` in (1/M, 1).
///
/// # Safety
/// `env` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn aht_policy_heuristic(
    env: *const AhtEnv,
    threshold: f64,
    out: *mut *mut AhtPolicy,
) -> AhtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let env = unsafe { env.as_ref() }.ok_or_else(|| null("env"))?;
        let h = HeuristicPolicy::new(threshold, env.config.num_processes())?;
        new_policy(Box::new(h), 0, out);
        Ok(())
    })
}

/// # Safety
/// `policy` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn aht_policy_free(policy: *mut AhtPolicy) {
    if !policy.is_null() {
        drop(unsafe { Box::from_raw(policy) });
    }
}

/// Head slot chosen by `policy` for an active `agent` in `env`'s episode.
///
/// # Safety
/// `policy` and `env` must be live handles; `slot` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn aht_policy_act(
    policy: *mut AhtPolicy,
    env: *const AhtEnv,
    agent: usize,
    slot: *mut usize,
) -> AhtStatus {
    guard(|| {
        let p = unsafe { policy.as_mut() }.ok_or_else(|| null("policy"))?;
        let env = unsafe { env.as_ref() }.ok_or_else(|| null("env"))?;
        let slot = unsafe { slot.as_mut() }.ok_or_else(|| null("slot"))?;
        agent_index(env, agent)?;
        if !env.state.is_active(agent) {
            return Err(invalid(format!("agent {agent} has stopped")));
        }
        let action = p.policy.act(&env.config, &env.state, agent, &mut p.rng)?;
        let spec = &env.config.agents[agent];
        *slot = match action {
            aht_core::env::AgentAction::Sample(local) => spec
                .process(local)
                .ok_or_else(|| invalid(format!("local action {local} out of range")))?,
            _ => env.config.stop_slot(),
        };
        Ok(())
    })
}

/// Evaluate `policy` on `episodes` fresh episodes of `env`'s configuration.
/// Deterministic in `seed`; the handle's own episode is left untouched.
///
/// # Safety
/// `policy` and `env` must be live handles; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn aht_evaluate(
    policy: *const AhtPolicy,
    env: *const AhtEnv,
    episodes: usize,
    seed: u64,
    out: *mut AhtMetrics,
) -> AhtStatus {
    guard(|| {
        let p = unsafe { policy.as_ref() }.ok_or_else(|| null("policy"))?;
        let env = unsafe { env.as_ref() }.ok_or_else(|| null("env"))?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let m = evaluate(p.policy.as_ref(), &env.config, "ffi", episodes, seed, 1)?;
        *out = AhtMetrics {
            episodes: m.num_episodes,
            error_rate: m.error_rate,
            error_se: m.error_se,
            avg_sample_size: m.avg_sample_size,
            sample_se: m.sample_se,
            bayes_risk: m.bayes_risk,
            risk_se: m.risk_se,
        };
        Ok(())
    })
}
