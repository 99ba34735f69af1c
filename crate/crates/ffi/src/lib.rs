//! C interface to `tsclab`.
//!
//! Every fallible function returns a [`TsclabStatus`]. On failure a message
//! is kept per thread and can be read with [`tsclab_last_error`] until the
//! next failing call. Objects are opaque handles made by a `*_new`, `*_grid`
//! or `*_load` function and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use tsclab::agent::encode_state;
use tsclab::flow::{exact_wasserstein, FlowSet};
use tsclab::harness::relative_improvement;
use tsclab::trafficsim::{
    average_travel_time, build_grid, FlowFile, LaneParams, PressureMode, Roadnet, RoadnetFile, SimWorld,
};
use tsclab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsclabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    NonFinite = 4,
    Parse = 5,
    Io = 6,
    /// A panic was caught at the boundary.
    Internal = 7,
}

/// A road network.
pub struct TsclabRoadnet(Arc<Roadnet>);

/// A running simulation.
pub struct TsclabWorld(SimWorld);

/// A set of flow matrices.
pub struct TsclabFlowSet(FlowSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn status_of(e: &Error) -> TsclabStatus {
    match e {
        Error::Shape(_) => TsclabStatus::Shape,
        Error::InvalidArgument(_) | Error::NotInGraph => TsclabStatus::InvalidArgument,
        Error::NonFinite(_) => TsclabStatus::NonFinite,
        Error::Parse { .. } => TsclabStatus::Parse,
        Error::Io { .. } => TsclabStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TsclabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsclabStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed as `{what}`"));
            TsclabStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            TsclabStatus::Internal
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("`{what}` is not UTF-8"))))?;
    Ok(PathBuf::from(s))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tsclab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the next failure.
#[no_mangle]
pub extern "C" fn tsclab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Raw and relative improvement of `ours` over `baseline`, in percent.
///
/// # Safety
/// `raw` and `relative` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tsclab_relative_improvement(
    baseline: f64,
    ours: f64,
    free_flow: f64,
    raw: *mut f64,
    relative: *mut f64,
) -> TsclabStatus {
    guard(|| {
        let raw = as_mut(raw, "raw")?;
        let relative = as_mut(relative, "relative")?;
        let i = relative_improvement(baseline, ours, free_flow)?;
        *raw = i.raw;
        *relative = i.relative;
        Ok(())
    })
}

/// A `rows × cols` grid with default lanes.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tsclab_roadnet_grid(rows: usize, cols: usize, out: *mut *mut TsclabRoadnet) -> TsclabStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        *out = boxed(TsclabRoadnet(Arc::new(build_grid(rows, cols, LaneParams::default())?)));
        Ok(())
    })
}

/// Loads a roadnet JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tsclab_roadnet_load(path: *const c_char, out: *mut *mut TsclabRoadnet) -> TsclabStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let path = path_arg(path, "path")?;
        *out = boxed(TsclabRoadnet(Arc::new(RoadnetFile::load(&path)?)));
        Ok(())
    })
}

/// Number of intersections, 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live roadnet handle.
#[no_mangle]
pub unsafe extern "C" fn tsclab_roadnet_intersections(net: *const TsclabRoadnet) -> usize {
    net.as_ref().map_or(0, |n| n.0.intersections.len())
}

/// # Safety
/// `net` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsclab_roadnet_free(net: *mut TsclabRoadnet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// A simulation on `net` with the vehicles of a flow file, or none if `flow_path` is NULL.
///
/// # Safety
/// `net` must be a live roadnet handle, `flow_path` NULL or a NUL-terminated
/// string, and `out` valid for writes. The world keeps its own reference to the network.
#[no_mangle]
pub unsafe extern "C" fn tsclab_world_new(
    net: *const TsclabRoadnet,
    flow_path: *const c_char,
    out: *mut *mut TsclabWorld,
) -> TsclabStatus {
    guard(|| {
        let net = as_ref(net, "net")?;
        let out = as_mut(out, "out")?;
        let flow = if flow_path.is_null() {
            Vec::new()
        } else {
            FlowFile::load(&path_arg(flow_path, "flow_path")?)?
        };
        *out = boxed(TsclabWorld(SimWorld::new(net.0.clone(), &flow)?));
        Ok(())
    })
}

/// Advances one second with one phase per intersection.
///
/// # Safety
/// `world` must be live and `actions` point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn tsclab_world_step(world: *mut TsclabWorld, actions: *const usize, n: usize) -> TsclabStatus {
    guard(|| {
        let world = as_mut(world, "world")?;
        if actions.is_null() && n > 0 {
            return Err(Failure::Null("actions"));
        }
        let acts = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(actions, n)
        };
        world.0.step(acts)?;
        Ok(())
    })
}

/// Seconds simulated so far, 0 for NULL.
///
/// # Safety
/// `world` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn tsclab_world_clock(world: *const TsclabWorld) -> u64 {
    world.as_ref().map_or(0, |w| w.0.clock())
}

/// Vehicles currently on the road, 0 for NULL.
///
/// # Safety
/// `world` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn tsclab_world_on_road(world: *const TsclabWorld) -> usize {
    world.as_ref().map_or(0, |w| w.0.on_road())
}

/// The agent state of intersection `i` (phase one-hot, then lane densities).
/// Writes at most `capacity` values and stores the full length in `len`;
/// a short buffer yields a shape error after `len` is set.
///
/// # Safety
/// `world` must be live, `out` valid for `capacity` writes (may be NULL when
/// `capacity` is 0) and `len` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tsclab_world_state(
    world: *const TsclabWorld,
    i: usize,
    out: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> TsclabStatus {
    guard(|| {
        let world = as_ref(world, "world")?;
        let len = as_mut(len, "len")?;
        let s = encode_state(&world.0.observe(i)?);
        *len = s.len();
        if capacity < s.len() {
            return Err(Error::Shape(format!("state needs {} values, buffer holds {capacity}", s.len())).into());
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        std::slice::from_raw_parts_mut(out, s.len()).copy_from_slice(&s);
        Ok(())
    })
}

/// Intersection pressure `|Σ w|`.
///
/// # Safety
/// `world` must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tsclab_world_pressure(world: *const TsclabWorld, i: usize, out: *mut f64) -> TsclabStatus {
    guard(|| {
        let world = as_ref(world, "world")?;
        let out = as_mut(out, "out")?;
        *out = world.0.pressure(i, PressureMode::AbsOfSum)?.pressure;
        Ok(())
    })
}

/// Average travel time so far, unfinished vehicles counted up to the current clock.
///
/// # Safety
/// `world` must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tsclab_world_average_travel_time(world: *const TsclabWorld, out: *mut f64) -> TsclabStatus {
    guard(|| {
        let world = as_ref(world, "world")?;
        let out = as_mut(out, "out")?;
        *out = average_travel_time(&world.0.travel_log(), world.0.clock()).seconds;
        Ok(())
    })
}

/// # Safety
/// `world` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsclab_world_free(world: *mut TsclabWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Loads a flow-set directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tsclab_flowset_load(dir: *const c_char, out: *mut *mut TsclabFlowSet) -> TsclabStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let dir = path_arg(dir, "dir")?;
        *out = boxed(TsclabFlowSet(FlowSet::load_dir(&dir)?));
        Ok(())
    })
}

/// Number of flows, 0 for NULL.
///
/// # Safety
/// `set` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn tsclab_flowset_len(set: *const TsclabFlowSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `set` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsclab_flowset_free(set: *mut TsclabFlowSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Exact Wasserstein distance between two equally sized flow sets.
///
/// # Safety
/// `a` and `b` must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tsclab_exact_wasserstein(
    a: *const TsclabFlowSet,
    b: *const TsclabFlowSet,
    out: *mut f64,
) -> TsclabStatus {
    guard(|| {
        let a = as_ref(a, "a")?;
        let b = as_ref(b, "b")?;
        let out = as_mut(out, "out")?;
        *out = exact_wasserstein(&a.0, &b.0)?;
        Ok(())
    })
}
