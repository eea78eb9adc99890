//! C ABI for the pursuit world and trained tracking filters.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Every fallible call returns a [`PtStatus`]; on failure
//! the message is kept per thread and read with [`pt_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use pursuit_core::filter::{build_filter_input, FilterError, FilterModel, MixturePrediction};
use pursuit_core::geom::Vec2;
use pursuit_core::world::{EnvConfig, Scenario, World, WorldError};
use pursuit_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullPointer = 1,
    /// Buffer length or index out of range.
    InvalidArgument = 2,
    /// Rejected configuration or malformed checkpoint.
    Config = 3,
    Io = 4,
    /// The call is not valid in the handle's current state.
    State = 5,
    Internal = 6,
    Panic = 7,
}

pub struct PtWorld {
    world: World,
}

pub struct PtFilter {
    model: FilterModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(PtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_)
            | Error::Json(_)
            | Error::Parse { .. }
            | Error::World(WorldError::Config(_))
            | Error::Filter(FilterError::Config(_) | FilterError::Metadata(_)) => PtStatus::Config,
            Error::Io(_) | Error::Filter(FilterError::Io(_)) => PtStatus::Io,
            Error::World(WorldError::Contract(_)) | Error::Contract(_) => PtStatus::State,
            _ => PtStatus::Internal,
        };
        Fail(status, e.to_string())
    }
}

impl From<WorldError> for Fail {
    fn from(e: WorldError) -> Self {
        Error::from(e).into()
    }
}

impl From<FilterError> for Fail {
    fn from(e: FilterError) -> Self {
        Error::from(e).into()
    }
}

fn fail<T>(status: PtStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PtStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside pursuit-ffi".into());
            PtStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(PtStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(PtStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return fail(PtStatus::NullPointer, format!("{what} is null"));
    }
    if len < need {
        return fail(PtStatus::InvalidArgument, format!("{what} holds {len} values, need {need}"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(PtStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(PtStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pt_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a world from a JSON environment config, or from the defaults
/// when `config_json` is null, and starts an episode.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pt_world_new(config_json: *const c_char, episode_seed: u64, out: *mut *mut PtWorld) -> PtStatus {
    guard(|| {
        if out.is_null() {
            return fail(PtStatus::NullPointer, "out is null");
        }
        let cfg = if config_json.is_null() {
            EnvConfig::default()
        } else {
            serde_json::from_str::<EnvConfig>(c_str(config_json, "config_json")?).map_err(Error::from)?
        };
        cfg.validate()?;
        let world = World::new(Scenario::build(cfg)?, episode_seed)?;
        *out = Box::into_raw(Box::new(PtWorld { world }));
        Ok(())
    })
}

/// # Safety
/// `world` must be null or a handle from [`pt_world_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pt_world_free(world: *mut PtWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Starts a fresh episode on the same terrain and roster.
///
/// # Safety
/// `world` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pt_world_reset(world: *mut PtWorld, episode_seed: u64) -> PtStatus {
    guard(|| {
        let w = handle_mut(world, "world")?;
        w.world = World::new(Arc::clone(w.world.scenario()), episode_seed)?;
        Ok(())
    })
}

/// Number of learnable agents; actions and rewards are laid out per agent
/// in this order.
///
/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_world_agent_count(world: *const PtWorld, out: *mut usize) -> PtStatus {
    guard(|| {
        let w = handle(world, "world")?;
        *handle_mut(out, "out")? = w.world.scenario().learnable().len();
        Ok(())
    })
}

/// Length of one agent's base observation.
///
/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_world_obs_dim(world: *const PtWorld, out: *mut usize) -> PtStatus {
    guard(|| {
        let w = handle(world, "world")?;
        *handle_mut(out, "out")? = w.world.scenario().base_obs_dim();
        Ok(())
    })
}

/// Advances one step. `actions` holds `2 * agent_count` velocities
/// (x then y per agent), clipped to each agent's speed by the world.
/// `rewards` receives one value per agent; `done` may be null.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pt_world_step(
    world: *mut PtWorld,
    actions: *const f64,
    actions_len: usize,
    rewards: *mut f64,
    rewards_len: usize,
    done: *mut bool,
) -> PtStatus {
    guard(|| {
        let w = handle_mut(world, "world")?;
        let n = w.world.scenario().learnable().len();
        if actions.is_null() {
            return fail(PtStatus::NullPointer, "actions is null");
        }
        if actions_len != 2 * n {
            return fail(PtStatus::InvalidArgument, format!("expected {} action values, got {actions_len}", 2 * n));
        }
        let rewards = out_slice(rewards, rewards_len, n, "rewards")?;
        if w.world.state().done() {
            return fail(PtStatus::State, "episode is over; reset the world");
        }
        let acts: Vec<Vec2> = std::slice::from_raw_parts(actions, actions_len)
            .chunks(2)
            .map(|c| Vec2::new(c[0], c[1]))
            .collect();
        let res = w.world.step(&acts)?;
        rewards[..n].copy_from_slice(&res.rewards);
        if !done.is_null() {
            *done = w.world.state().done();
        }
        Ok(())
    })
}

/// Writes agent `agent`'s base observation into `out`.
///
/// # Safety
/// `world` must be a live handle; `out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pt_world_observe(world: *const PtWorld, agent: usize, out: *mut f64, len: usize) -> PtStatus {
    guard(|| {
        let w = handle(world, "world")?;
        if agent >= w.world.scenario().learnable().len() {
            return fail(PtStatus::InvalidArgument, format!("agent {agent} out of range"));
        }
        let o = w.world.observe_base(agent)?;
        out_slice(out, len, o.len(), "out")?[..o.len()].copy_from_slice(&o);
        Ok(())
    })
}

/// Current step index.
///
/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_world_time(world: *const PtWorld, out: *mut usize) -> PtStatus {
    guard(|| {
        *handle_mut(out, "out")? = handle(world, "world")?.world.state().t;
        Ok(())
    })
}

/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_world_done(world: *const PtWorld, out: *mut bool) -> PtStatus {
    guard(|| {
        *handle_mut(out, "out")? = handle(world, "world")?.world.state().done();
        Ok(())
    })
}

/// Ground-truth evader position, two values.
///
/// # Safety
/// `world` must be a live handle; `out` valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn pt_world_evader_position(world: *const PtWorld, out: *mut f64, len: usize) -> PtStatus {
    guard(|| {
        let p = handle(world, "world")?.world.state().evader_pos;
        out_slice(out, len, 2, "out")?[..2].copy_from_slice(&[p.x, p.y]);
        Ok(())
    })
}

/// Loads a filter checkpoint written by `pursuit-track train-filter`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_filter_load(path: *const c_char, out: *mut *mut PtFilter) -> PtStatus {
    guard(|| {
        if out.is_null() {
            return fail(PtStatus::NullPointer, "out is null");
        }
        let model = FilterModel::load(Path::new(c_str(path, "path")?))?;
        *out = Box::into_raw(Box::new(PtFilter { model }));
        Ok(())
    })
}

/// # Safety
/// `filter` must be null or a handle from [`pt_filter_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pt_filter_free(filter: *mut PtFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Number of mixture components `K` in each prediction.
///
/// # Safety
/// `filter` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_filter_components(filter: *const PtFilter, out: *mut usize) -> PtStatus {
    guard(|| {
        *handle_mut(out, "out")? = handle(filter, "filter")?.model.arch().components;
        Ok(())
    })
}

/// Predicts the evader's position from the world's detection log. Writes
/// `K` weights, `2K` means and `2K` scales (x, y per component).
///
/// # Safety
/// Handles must be live; each output valid for `k` and `2k` values.
#[no_mangle]
pub unsafe extern "C" fn pt_filter_predict(
    filter: *const PtFilter,
    world: *const PtWorld,
    weights: *mut f64,
    means: *mut f64,
    scales: *mut f64,
    k: usize,
) -> PtStatus {
    guard(|| {
        let f = handle(filter, "filter")?;
        let w = handle(world, "world")?;
        let kk = f.model.arch().components;
        if k != kk {
            return fail(PtStatus::InvalidArgument, format!("filter has {kk} components, caller passed {k}"));
        }
        let st = w.world.state();
        let input = build_filter_input(&st.detections, st.t, st.evader_start, w.world.config().t_max);
        let pred = f.model.predict_one(&input)?;
        write_prediction(&pred, out_slice(weights, k, k, "weights")?, out_slice(means, 2 * k, 2 * k, "means")?, out_slice(scales, 2 * k, 2 * k, "scales")?);
        Ok(())
    })
}

fn write_prediction(p: &MixturePrediction, weights: &mut [f64], means: &mut [f64], scales: &mut [f64]) {
    for j in 0..p.components() {
        weights[j] = p.weights[j];
        means[2 * j] = p.means[j].x;
        means[2 * j + 1] = p.means[j].y;
        scales[2 * j] = p.scales[j].x;
        scales[2 * j + 1] = p.scales[j].y;
    }
}
