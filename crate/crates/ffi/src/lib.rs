//! C ABI over `neutral-supply`.
//!
//! Networks and decompositions are opaque handles, released with the
//! matching `ns_*_free`. Every fallible call returns an
//! `NsStatus`; the message of the last failure on the calling thread is
//! available from `ns_last_error`. Matrices are exchanged row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use neutral_supply::cli::dcgrid::{dcgrid_network, published_storage, DcGridParameters};
use neutral_supply::cli::NetworkFile;
use neutral_supply::decompose::DecompositionConfig;
use neutral_supply::lmi::{find_additive_lyapunov, SolverOptions, Status};
use neutral_supply::netgraph::{decompose_acyclic, is_acyclic, NetworkDecomposition};
use neutral_supply::robustness::{edge_removal_certificate, system_removal_certificate};
use neutral_supply::{Error, Mat, NetworkGraph, StorageCertificate, SystemId, Tolerance};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    UnknownSystem = 4,
    Hypothesis = 5,
    NotAcyclic = 6,
    IllPosed = 7,
    Undecided = 8,
    NoCertificate = 9,
    BufferTooSmall = 10,
    Internal = 11,
}

/// A network together with its storage certificate, once one is known.
pub struct NsNetwork {
    net: NetworkGraph,
    certificate: Option<StorageCertificate>,
    tol: Tolerance,
}

/// Neutral supplies on every link of a network.
pub struct NsDecomposition {
    inner: NetworkDecomposition,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn record(msg: impl Into<String>) {
    let text = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> NsStatus {
    match e {
        Error::Parse(_) => NsStatus::Parse,
        Error::UnknownSystem(_) => NsStatus::UnknownSystem,
        Error::InvalidInput(_) => NsStatus::InvalidArgument,
        Error::NotAcyclic | Error::CycleDetected(..) => NsStatus::NotAcyclic,
        Error::IllPosed { .. } => NsStatus::IllPosed,
        Error::Undecided(_) => NsStatus::Undecided,
        _ => NsStatus::Hypothesis,
    }
}

/// Runs `f`, turning errors and panics into a status and a recorded message.
fn guard(f: impl FnOnce() -> Result<(), (NsStatus, String)>) -> NsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NsStatus::Ok,
        Ok(Err((status, msg))) => {
            record(msg);
            status
        }
        Err(_) => {
            record("internal panic");
            NsStatus::Internal
        }
    }
}

fn lib(e: Error) -> (NsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (NsStatus, String) {
    (NsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (NsStatus, String)> {
    // SAFETY: the caller passes a handle obtained from this library or null.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (NsStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null output pointers must be valid for writes.
    unsafe { out.write(value) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ns_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; valid until the next call.
#[no_mangle]
pub extern "C" fn ns_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a JSON network file. A certificate in the file is attached to
/// the handle without being checked.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_network_from_json(json: *const c_char, out: *mut *mut NsNetwork) -> NsStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        // SAFETY: checked non-null; the caller guarantees NUL termination.
        let text = unsafe { CStr::from_ptr(json) }.to_str().map_err(|e| (NsStatus::Parse, e.to_string()))?;
        let tol = Tolerance::default();
        let file = NetworkFile::from_json(text).map_err(lib)?;
        let net = file.network().map_err(lib)?;
        let certificate = match file.storage(&tol).map_err(lib)? {
            Some(blocks) => Some(net.certify(blocks, &tol).map_err(lib)?),
            None => None,
        };
        let handle = Box::into_raw(Box::new(NsNetwork { net, certificate, tol }));
        // SAFETY: `out` is checked inside.
        unsafe { write_out(out, handle, "out") }.inspect_err(|_| drop(unsafe { Box::from_raw(handle) }))
    })
}

/// The built-in DC grid with its published storage attached.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_network_dcgrid(out: *mut *mut NsNetwork) -> NsStatus {
    guard(|| {
        let tol = Tolerance::default();
        let net = dcgrid_network(&DcGridParameters::default()).map_err(lib)?;
        let certificate = Some(net.certify(published_storage(), &tol).map_err(lib)?);
        let handle = Box::into_raw(Box::new(NsNetwork { net, certificate, tol }));
        // SAFETY: `out` is checked inside.
        unsafe { write_out(out, handle, "out") }.inspect_err(|_| drop(unsafe { Box::from_raw(handle) }))
    })
}

/// # Safety
/// `net` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ns_network_free(net: *mut NsNetwork) {
    if !net.is_null() {
        // SAFETY: the handle was created by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(net) });
    }
}

/// Overrides the definiteness and rank tolerances used by later calls.
///
/// # Safety
/// `net` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn ns_network_set_tolerance(net: *mut NsNetwork, definiteness: f64, rank: f64) -> NsStatus {
    guard(|| {
        // SAFETY: the caller passes a live handle or null.
        let net = unsafe { net.as_mut() }.ok_or_else(|| null("net"))?;
        net.tol = Tolerance::new(definiteness, rank).map_err(lib)?;
        Ok(())
    })
}

/// # Safety
/// `net` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_network_system_count(net: *const NsNetwork, out: *mut usize) -> NsStatus {
    guard(|| {
        let net = unsafe { deref(net, "net") }?;
        unsafe { write_out(out, net.net.ids().len(), "out") }
    })
}

/// # Safety
/// `net` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_network_is_acyclic(net: *const NsNetwork, out: *mut bool) -> NsStatus {
    guard(|| {
        let net = unsafe { deref(net, "net") }?;
        unsafe { write_out(out, is_acyclic(&net.net), "out") }
    })
}

/// Searches an additive Lyapunov certificate and attaches it to the handle.
///
/// # Safety
/// `net` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn ns_network_solve_certificate(net: *mut NsNetwork) -> NsStatus {
    guard(|| {
        // SAFETY: the caller passes a live handle or null.
        let net = unsafe { net.as_mut() }.ok_or_else(|| null("net"))?;
        let search = find_additive_lyapunov(&net.net, &net.tol, &SolverOptions::default()).map_err(lib)?;
        match search.status {
            Status::Feasible => {
                net.certificate = search.certificate;
                Ok(())
            }
            Status::Infeasible => Err((NsStatus::Hypothesis, "no additive Lyapunov function exists".into())),
            Status::Undecided => Err((NsStatus::Undecided, "Lyapunov search did not converge".into())),
        }
    })
}

fn certificate(net: &NsNetwork) -> Result<&StorageCertificate, (NsStatus, String)> {
    net.certificate.as_ref().ok_or_else(|| (NsStatus::NoCertificate, "no certificate attached".into()))
}

/// Largest eigenvalue of the Lyapunov inequality of the attached certificate.
///
/// # Safety
/// `net` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_network_certificate_margin(net: *const NsNetwork, out: *mut f64) -> NsStatus {
    guard(|| {
        let net = unsafe { deref(net, "net") }?;
        let margin = certificate(net)?.margin;
        unsafe { write_out(out, margin, "out") }
    })
}

/// Neutral supplies on every link of an acyclic network, from the attached certificate.
///
/// # Safety
/// `net` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_decompose(net: *const NsNetwork, alpha: f64, out: *mut *mut NsDecomposition) -> NsStatus {
    guard(|| {
        let net = unsafe { deref(net, "net") }?;
        let cfg = DecompositionConfig::new(alpha, 2.0, net.tol).map_err(lib)?;
        let inner = decompose_acyclic(&net.net, certificate(net)?, &cfg).map_err(lib)?;
        let handle = Box::into_raw(Box::new(NsDecomposition { inner }));
        unsafe { write_out(out, handle, "out") }.inspect_err(|_| drop(unsafe { Box::from_raw(handle) }))
    })
}

/// # Safety
/// `dec` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ns_decomposition_free(dec: *mut NsDecomposition) {
    if !dec.is_null() {
        // SAFETY: the handle was created by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(dec) });
    }
}

/// Whether every link is neutral and every system dissipative.
///
/// # Safety
/// `dec` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_decomposition_holds(dec: *const NsDecomposition, out: *mut bool) -> NsStatus {
    guard(|| {
        let dec = unsafe { deref(dec, "dec") }?;
        unsafe { write_out(out, dec.inner.holds(), "out") }
    })
}

/// Input and output dimensions of the supply on the port of `system` facing `neighbor`.
///
/// # Safety
/// `dec` must be a valid handle; `nv` and `nw` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ns_decomposition_supply_dims(
    dec: *const NsDecomposition,
    system: u32,
    neighbor: u32,
    nv: *mut usize,
    nw: *mut usize,
) -> NsStatus {
    guard(|| {
        let dec = unsafe { deref(dec, "dec") }?;
        let s = dec
            .inner
            .supply(SystemId(system), SystemId(neighbor))
            .ok_or_else(|| (NsStatus::UnknownSystem, format!("no link ({system}, {neighbor})")))?;
        let (a, b) = s.dims();
        unsafe { write_out(nv, a, "nv") }?;
        unsafe { write_out(nw, b, "nw") }
    })
}

unsafe fn copy_matrix(m: &Mat, out: *mut f64, len: usize, what: &str) -> Result<(), (NsStatus, String)> {
    let need = m.nrows() * m.ncols();
    if need == 0 {
        return Ok(());
    }
    if out.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err((NsStatus::BufferTooSmall, format!("{what} needs {need} entries, got {len}")));
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            // SAFETY: bounds checked against `len` above.
            unsafe { out.add(i * m.ncols() + j).write(m[(i, j)]) };
        }
    }
    Ok(())
}

/// Copies the blocks `q` (nv x nv), `s` (nv x nw) and `r` (nw x nw) of the
/// supply on the port of `system` facing `neighbor`, row-major.
///
/// # Safety
/// `dec` must be a valid handle; each buffer must hold at least its stated length.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ns_decomposition_supply(
    dec: *const NsDecomposition,
    system: u32,
    neighbor: u32,
    q: *mut f64,
    q_len: usize,
    s: *mut f64,
    s_len: usize,
    r: *mut f64,
    r_len: usize,
) -> NsStatus {
    guard(|| {
        let dec = unsafe { deref(dec, "dec") }?;
        let supply = dec
            .inner
            .supply(SystemId(system), SystemId(neighbor))
            .ok_or_else(|| (NsStatus::UnknownSystem, format!("no link ({system}, {neighbor})")))?;
        unsafe { copy_matrix(supply.q.as_mat(), q, q_len, "q") }?;
        unsafe { copy_matrix(&supply.s, s, s_len, "s") }?;
        unsafe { copy_matrix(supply.r.as_mat(), r, r_len, "r") }
    })
}

/// Whether the network stays stable when the link between `i` and `j` is
/// scaled by any factor in `[0, 1]`.
///
/// # Safety
/// `net` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_robust_to_link_removal(net: *const NsNetwork, i: u32, j: u32, out: *mut bool) -> NsStatus {
    guard(|| {
        let net = unsafe { deref(net, "net") }?;
        let cfg = DecompositionConfig::new(0.5, 2.0, net.tol).map_err(lib)?;
        let c = edge_removal_certificate(&net.net, certificate(net)?, (SystemId(i), SystemId(j)), &cfg).map_err(lib)?;
        unsafe { write_out(out, c.conclusion, "out") }
    })
}

/// Whether the network stays stable when all links of `system` are scaled
/// by any common factor in `[0, 1]`.
///
/// # Safety
/// `net` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_robust_to_system_removal(net: *const NsNetwork, system: u32, out: *mut bool) -> NsStatus {
    guard(|| {
        let net = unsafe { deref(net, "net") }?;
        let cfg = DecompositionConfig::new(0.5, 2.0, net.tol).map_err(lib)?;
        let c = system_removal_certificate(&net.net, certificate(net)?, SystemId(system), &cfg).map_err(lib)?;
        unsafe { write_out(out, c.conclusion, "out") }
    })
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn ns_status_name(status: NsStatus) -> *const c_char {
    let name: &'static str = match status {
        NsStatus::Ok => "ok\0",
        NsStatus::NullPointer => "null pointer\0",
        NsStatus::InvalidArgument => "invalid argument\0",
        NsStatus::Parse => "parse error\0",
        NsStatus::UnknownSystem => "unknown system\0",
        NsStatus::Hypothesis => "hypothesis violated\0",
        NsStatus::NotAcyclic => "not acyclic\0",
        NsStatus::IllPosed => "ill-posed\0",
        NsStatus::Undecided => "undecided\0",
        NsStatus::NoCertificate => "no certificate\0",
        NsStatus::BufferTooSmall => "buffer too small\0",
        NsStatus::Internal => "internal error\0",
    };
    name.as_ptr().cast()
}
