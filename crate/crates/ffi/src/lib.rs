//! C interface to `flowtree`.
//!
//! Objects are opaque handles created by `ft_*_new`/`ft_*_load`-style calls
//! and released with the matching `ft_*_free`. Every fallible call returns an
//! [`FtStatus`]; on failure [`ft_last_error`] describes what went wrong on the
//! calling thread. Panics are caught at the boundary and reported as
//! `FT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use flowtree::experiment::{self, FamilyChoice, Template};
use flowtree::learner::{self, LearnedTopology};
use flowtree::simulator::{self, InjectionModel, MeasurementSet, NoiseSpec};
use flowtree::{rng, Error, NetworkGraph};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtStatus {
    Ok = 0,
    NullPointer = 1,
    /// Input rejected: malformed file, bad argument, invalid network.
    InvalidInput = 2,
    /// Valid input that the pipeline could not process.
    Pipeline = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtTemplate {
    Chain = 0,
    Star = 1,
    RandomRadial = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtFamily {
    Linear = 0,
    Quadratic = 1,
    PowerLaw = 2,
    Mixed = 3,
}

/// Candidate graph with flow functions and the operational tree.
pub struct FtNetwork(NetworkGraph);

/// Potential samples, one row per sample and one column per node.
pub struct FtMeasurements(MeasurementSet);

/// Learned spanning tree with edge weights and margins.
pub struct FtTopology(LearnedTopology);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> FtStatus {
    match err {
        Error::Io(_) => FtStatus::Io,
        e if e.is_validation() => FtStatus::InvalidInput,
        _ => FtStatus::Pipeline,
    }
}

fn guard(f: impl FnOnce() -> Result<(), FtStatus>) -> FtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FtStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            FtStatus::Panic
        }
    }
}

fn check<T>(r: flowtree::Result<T>) -> Result<T, FtStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn invalid(msg: &str) -> FtStatus {
    set_error(msg.to_string());
    FtStatus::InvalidInput
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, FtStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(FtStatus::NullPointer);
    }
    Ok(&*p)
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, FtStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(FtStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), FtStatus> {
    if out.is_null() {
        set_error("output pointer is null".into());
        return Err(FtStatus::NullPointer);
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), FtStatus> {
    if out.is_null() {
        set_error("output pointer is null".into());
        return Err(FtStatus::NullPointer);
    }
    *out = value;
    Ok(())
}

/// Message for the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next `ft_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ft_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ft_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from an `ft_*` call that documents ownership transfer.
#[no_mangle]
pub unsafe extern "C" fn ft_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a network from a NUL-terminated JSON document.
///
/// # Safety
/// `json` must be a valid C string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_network_from_json(json: *const c_char, out: *mut *mut FtNetwork) -> FtStatus {
    guard(|| {
        let g = check(NetworkGraph::from_json_str(string(json, "json")?))?;
        store(out, FtNetwork(g))
    })
}

/// Reads a network JSON file.
///
/// # Safety
/// `path` must be a valid C string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_network_load(path: *const c_char, out: *mut *mut FtNetwork) -> FtStatus {
    guard(|| {
        let g = check(NetworkGraph::load(Path::new(string(path, "path")?)))?;
        store(out, FtNetwork(g))
    })
}

/// Generates a seeded synthetic network; node 0 is the reference.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_network_generate(
    template: FtTemplate,
    nodes: usize,
    fictitious: usize,
    family: FtFamily,
    seed: u64,
    out: *mut *mut FtNetwork,
) -> FtStatus {
    guard(|| {
        let template = match template {
            FtTemplate::Chain => Template::Chain,
            FtTemplate::Star => Template::Star,
            FtTemplate::RandomRadial => Template::RandomRadial,
        };
        let family = match family {
            FtFamily::Linear => FamilyChoice::Linear,
            FtFamily::Quadratic => FamilyChoice::Quadratic,
            FtFamily::PowerLaw => FamilyChoice::PowerLaw,
            FtFamily::Mixed => FamilyChoice::Mixed,
        };
        let g = check(experiment::gen_network(template, nodes, fictitious, family, seed))?;
        store(out, FtNetwork(g))
    })
}

/// Serializes a network to JSON. Free the result with [`ft_string_free`].
///
/// # Safety
/// `network` must be a live handle; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_network_to_json(network: *const FtNetwork, out: *mut *mut c_char) -> FtStatus {
    guard(|| {
        let g = borrow(network, "network")?;
        let text = serde_json::to_string(&g.0).map_err(|e| {
            set_error(e.to_string());
            FtStatus::Pipeline
        })?;
        write(out, CString::new(text).unwrap().into_raw())
    })
}

/// Number of nodes, or 0 for a NULL handle.
///
/// # Safety
/// `network` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ft_network_node_count(network: *const FtNetwork) -> usize {
    network.as_ref().map_or(0, |g| g.0.node_count())
}

/// # Safety
/// `network` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ft_network_free(network: *mut FtNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Simulates `samples` potential vectors on the operational tree with the
/// default Gaussian injection model, optionally adding measurement noise of
/// relative variance `noise_frac`.
///
/// # Safety
/// `network` must be a live handle; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_simulate(
    network: *const FtNetwork,
    samples: usize,
    seed: u64,
    noise_frac: f64,
    out: *mut *mut FtMeasurements,
) -> FtStatus {
    guard(|| {
        let g = &borrow(network, "network")?.0;
        let tree = check(g.validate_radial())?;
        let model = check(InjectionModel::for_network(g, vec![tree.reference()], seed))?;
        let mut ms = check(simulator::simulate(
            g,
            &tree,
            &model,
            samples,
            seed,
            simulator::DEFAULT_REFERENCE_POTENTIAL,
        ))?;
        if noise_frac != 0.0 {
            let spec = check(NoiseSpec::new(noise_frac, rng::derive(seed, &[0x4E])))?;
            ms = check(simulator::add_noise(&ms, spec))?;
        }
        store(out, FtMeasurements(ms))
    })
}

/// Wraps caller data laid out row-major: `data[s * nodes + a]` is the
/// potential of node `a` in sample `s`. The data is copied.
///
/// # Safety
/// `data` must point to `samples * nodes` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn ft_measurements_from_rows(
    nodes: usize,
    samples: usize,
    data: *const f64,
    out: *mut *mut FtMeasurements,
) -> FtStatus {
    guard(|| {
        let len = samples.checked_mul(nodes).ok_or_else(|| invalid("size overflow"))?;
        if data.is_null() && len > 0 {
            set_error("data is null".into());
            return Err(FtStatus::NullPointer);
        }
        let rows = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        store(out, FtMeasurements(check(MeasurementSet::from_rows(nodes, rows))?))
    })
}

/// Reads a measurement CSV (and its sidecar metadata when present).
///
/// # Safety
/// `path` must be a valid C string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_measurements_load(path: *const c_char, out: *mut *mut FtMeasurements) -> FtStatus {
    guard(|| {
        let ms = check(MeasurementSet::read_csv(Path::new(string(path, "path")?)))?;
        store(out, FtMeasurements(ms))
    })
}

/// # Safety
/// `ms` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ft_measurements_samples(ms: *const FtMeasurements) -> usize {
    ms.as_ref().map_or(0, |m| m.0.samples())
}

/// # Safety
/// `ms` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ft_measurements_nodes(ms: *const FtMeasurements) -> usize {
    ms.as_ref().map_or(0, |m| m.0.nodes())
}

/// Copies all samples row-major into `buffer`, which must hold
/// `samples * nodes` doubles (`capacity` is checked).
///
/// # Safety
/// `ms` must be a live handle; `buffer` writable for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ft_measurements_copy_rows(ms: *const FtMeasurements, buffer: *mut f64, capacity: usize) -> FtStatus {
    guard(|| {
        let ms = &borrow(ms, "measurements")?.0;
        let (m, n) = (ms.samples(), ms.nodes());
        if capacity < m * n {
            return Err(invalid(&format!("buffer holds {capacity} values, need {}", m * n)));
        }
        if buffer.is_null() {
            set_error("buffer is null".into());
            return Err(FtStatus::NullPointer);
        }
        let out = std::slice::from_raw_parts_mut(buffer, m * n);
        for a in 0..n {
            for (s, v) in ms.column(flowtree::NodeId(a)).iter().enumerate() {
                out[s * n + a] = *v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `ms` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ft_measurements_free(ms: *mut FtMeasurements) {
    if !ms.is_null() {
        drop(Box::from_raw(ms));
    }
}

/// Learns the minimum-weight spanning tree. With a NULL `candidates` network
/// every node pair is a candidate.
///
/// # Safety
/// `ms` must be a live handle, `candidates` NULL or a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ft_learn(
    ms: *const FtMeasurements,
    candidates: *const FtNetwork,
    out: *mut *mut FtTopology,
) -> FtStatus {
    guard(|| {
        let ms = &borrow(ms, "measurements")?.0;
        let keys = candidates.as_ref().map(|g| g.0.candidate_keys());
        let topo = check(learner::learn_structure(ms, keys.as_deref()))?;
        store(out, FtTopology(topo))
    })
}

/// # Safety
/// `topology` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ft_topology_edge_count(topology: *const FtTopology) -> usize {
    topology.as_ref().map_or(0, |t| t.0.edges.len())
}

/// # Safety
/// `topology` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ft_topology_total_weight(topology: *const FtTopology) -> f64 {
    topology.as_ref().map_or(f64::NAN, |t| t.0.total_weight)
}

/// Edge `index` in selection order. `margin` is NaN for edges with no
/// replacement candidate. Any output pointer may be NULL.
///
/// # Safety
/// `topology` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_topology_edge(
    topology: *const FtTopology,
    index: usize,
    u: *mut usize,
    v: *mut usize,
    weight: *mut f64,
    margin: *mut f64,
) -> FtStatus {
    guard(|| {
        let t = &borrow(topology, "topology")?.0;
        let e = t.edges.get(index).ok_or_else(|| invalid(&format!("edge index {index} out of range")))?;
        if !u.is_null() {
            *u = e.u.0;
        }
        if !v.is_null() {
            *v = e.v.0;
        }
        if !weight.is_null() {
            *weight = e.weight;
        }
        if !margin.is_null() {
            *margin = e.margin.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Fraction of the network's operational edges missing from `topology`.
///
/// # Safety
/// Both handles must be live; `error` writable.
#[no_mangle]
pub unsafe extern "C" fn ft_eval(topology: *const FtTopology, network: *const FtNetwork, error: *mut f64) -> FtStatus {
    guard(|| {
        let t = &borrow(topology, "topology")?.0;
        let g = &borrow(network, "network")?.0;
        let mut truth = g.operational_keys();
        truth.sort();
        write(error, check(experiment::eval_topology(&t.edge_keys(), &truth))?)
    })
}

/// # Safety
/// `topology` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ft_topology_free(topology: *mut FtTopology) {
    if !topology.is_null() {
        drop(Box::from_raw(topology));
    }
}
