//! C ABI over the session API.
//!
//! Every call returns an [`SfStatus`]. On failure the message is kept per
//! thread and read with [`sf_last_error_message`]. Handles are opaque and
//! owned by the caller until passed to their `_free` function. Panics never
//! cross the boundary; they come back as [`SfStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use surfluid::edit::ObjectSpec;
use surfluid::io::SparseHint;
use surfluid::render::FrameSequence;
use surfluid::session::{CreateRequest, Request, SceneSource, Session, SimulateRequest};
use surfluid::Error;

/// Result codes. Values are stable.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullArgument = 1,
    BufferTooSmall = 2,
    Utf8 = 3,
    Panic = 4,
    MissingFile = 10,
    DimensionMismatch = 11,
    NonPositiveDepth = 12,
    BadMagic = 13,
    TruncatedFile = 14,
    Format = 15,
    EmptySequence = 20,
    EmptyFluidRegion = 21,
    NoHints = 22,
    DegenerateTriangle = 23,
    SolverDiverged = 24,
    SingularSystem = 25,
    AllHoles = 26,
    ObjectOutOfFrame = 27,
    InvalidConfig = 30,
    InvalidInput = 31,
    Io = 40,
    Image = 41,
    Json = 42,
}

impl From<&Error> for SfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::MissingFile { .. } => Self::MissingFile,
            Error::DimensionMismatch { .. } => Self::DimensionMismatch,
            Error::NonPositiveDepth { .. } => Self::NonPositiveDepth,
            Error::BadMagic(_) => Self::BadMagic,
            Error::TruncatedFile { .. } => Self::TruncatedFile,
            Error::Format { .. } => Self::Format,
            Error::EmptySequence => Self::EmptySequence,
            Error::EmptyFluidRegion => Self::EmptyFluidRegion,
            Error::NoHints => Self::NoHints,
            Error::DegenerateTriangle(_) => Self::DegenerateTriangle,
            Error::SolverDiverged { .. } => Self::SolverDiverged,
            Error::SingularSystem(_) => Self::SingularSystem,
            Error::AllHoles => Self::AllHoles,
            Error::ObjectOutOfFrame => Self::ObjectOutOfFrame,
            Error::InvalidConfig(_) => Self::InvalidConfig,
            Error::InvalidInput(_) => Self::InvalidInput,
            Error::Io(_) => Self::Io,
            Error::Image(_) => Self::Image,
            Error::Json(_) => Self::Json,
        }
    }
}

/// Opaque editing session.
pub struct SfSession(Session);

/// Opaque rendered frame sequence.
pub struct SfFrames(FrameSequence);

/// Simulation settings; start from [`sf_simulate_defaults`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SfSimulateParams {
    pub frames: usize,
    pub beta: f64,
    pub seed: u64,
    pub warmup_steps: usize,
    pub gravity_scale: f64,
    pub particles_per_face: usize,
}

impl From<SimulateRequest> for SfSimulateParams {
    fn from(r: SimulateRequest) -> Self {
        Self {
            frames: r.frames,
            beta: r.beta,
            seed: r.seed,
            warmup_steps: r.warmup_steps,
            gravity_scale: r.gravity_scale,
            particles_per_face: r.particles_per_face,
        }
    }
}

impl From<SfSimulateParams> for SimulateRequest {
    fn from(p: SfSimulateParams) -> Self {
        Self {
            frames: p.frames,
            beta: p.beta,
            seed: p.seed,
            warmup_steps: p.warmup_steps,
            gravity_scale: p.gravity_scale,
            particles_per_face: p.particles_per_face,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SfStatus, msg: impl Into<String>) -> SfStatus {
    set_error(msg.into());
    status
}

/// Run `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), SfStatus>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SfStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SfStatus::Panic, msg)
        }
    }
}

fn engine(e: Error) -> SfStatus {
    let s = SfStatus::from(&e);
    fail(s, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, SfStatus> {
    if p.is_null() {
        return Err(fail(SfStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(SfStatus::Utf8, format!("`{name}`: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, SfStatus> {
    p.as_ref()
        .ok_or_else(|| fail(SfStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, SfStatus> {
    p.as_mut()
        .ok_or_else(|| fail(SfStatus::NullArgument, format!("`{name}` is null")))
}

fn apply(s: &mut SfSession, req: Request) -> Result<(), SfStatus> {
    s.0.apply(req, |_| {}).map_err(engine)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on this thread.
#[no_mangle]
pub extern "C" fn sf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Open a session on a scene manifest or directory. Hints stored in the
/// manifest are kept.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_session_open(path: *const c_char, stride: usize, out: *mut *mut SfSession) -> SfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = mut_arg(out, "out")?;
        let req = CreateRequest {
            stride,
            clear_hints: false,
            ..CreateRequest::new(SceneSource::Manifest(path.into()))
        };
        let s = Session::create(req).map_err(engine)?;
        *out = Box::into_raw(Box::new(SfSession(s)));
        Ok(())
    })
}

/// Open a session from a JSON create request, as accepted by the HTTP API.
///
/// # Safety
/// `json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_session_create_json(json: *const c_char, out: *mut *mut SfSession) -> SfStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let out = mut_arg(out, "out")?;
        let req: CreateRequest = serde_json::from_str(json).map_err(|e| engine(e.into()))?;
        let s = Session::create(req).map_err(engine)?;
        *out = Box::into_raw(Box::new(SfSession(s)));
        Ok(())
    })
}

/// # Safety
/// `session` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_session_free(session: *mut SfSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Apply one JSON request (`{"op": ...}`) from a session log.
///
/// # Safety
/// `session` must be valid; `json` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn sf_session_apply_json(session: *mut SfSession, json: *const c_char) -> SfStatus {
    guard(|| {
        let s = mut_arg(session, "session")?;
        let req: Request = serde_json::from_str(str_arg(json, "json")?).map_err(|e| engine(e.into()))?;
        apply(s, req)
    })
}

/// Replace the hints. `hints` holds `count` records of `u, v, vx, vy`.
///
/// # Safety
/// `session` must be valid; `hints` must point to `4 * count` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_session_set_hints(session: *mut SfSession, hints: *const f64, count: usize) -> SfStatus {
    guard(|| {
        let s = mut_arg(session, "session")?;
        let flat: &[f64] = if count == 0 {
            &[]
        } else {
            ref_arg(hints, "hints")?;
            std::slice::from_raw_parts(hints, 4 * count)
        };
        let hints = flat
            .chunks_exact(4)
            .map(|h| SparseHint::new(h[0], h[1], h[2], h[3]))
            .collect();
        apply(s, Request::PutHints { hints })
    })
}

/// Default simulation settings.
#[no_mangle]
pub extern "C" fn sf_simulate_defaults() -> SfSimulateParams {
    SimulateRequest::default().into()
}

/// # Safety
/// `session` and `params` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_session_simulate(session: *mut SfSession, params: *const SfSimulateParams) -> SfStatus {
    guard(|| {
        let s = mut_arg(session, "session")?;
        let p = *ref_arg(params, "params")?;
        apply(s, Request::Simulate(p.into()))
    })
}

/// Place a sphere of `radius` meters on the surface under pixel `(u, v)`.
///
/// # Safety
/// `session` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_session_add_sphere(session: *mut SfSession, u: f64, v: f64, radius: f64) -> SfStatus {
    guard(|| {
        let s = mut_arg(session, "session")?;
        apply(s, Request::AddObject(ObjectSpec::sphere([u, v], radius)))
    })
}

/// # Safety
/// `session` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_session_remove_object(session: *mut SfSession, index: usize) -> SfStatus {
    guard(|| {
        let s = mut_arg(session, "session")?;
        apply(s, Request::RemoveObject { index })
    })
}

/// # Safety
/// `session` must be valid or null; null yields 0.
#[no_mangle]
pub unsafe extern "C" fn sf_session_revision(session: *const SfSession) -> u64 {
    session.as_ref().map_or(0, |s| s.0.revision)
}

/// Image size and number of available motion fields.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_session_dims(
    session: *const SfSession,
    width: *mut usize,
    height: *mut usize,
    fields: *mut usize,
) -> SfStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let (w, h) = s.0.scene.dims();
        *mut_arg(width, "width")? = w;
        *mut_arg(height, "height")? = h;
        *mut_arg(fields, "fields")? = s.0.fields.len();
        Ok(())
    })
}

/// Copy motion field `frame` as interleaved `dx, dy` floats, row-major.
/// `len` is the capacity of `out` in floats and must be `2 * width * height`.
///
/// # Safety
/// `session` must be valid; `out` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn sf_session_motion(
    session: *const SfSession,
    frame: usize,
    out: *mut f32,
    len: usize,
) -> SfStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let f = s.0.fields.get(frame).ok_or_else(|| {
            fail(SfStatus::InvalidInput, format!("no motion field {frame}"))
        })?;
        let (w, h) = f.dims();
        if len < 2 * w * h {
            return Err(fail(SfStatus::BufferTooSmall, format!("need {} floats", 2 * w * h)));
        }
        mut_arg(out, "out")?;
        let dst = std::slice::from_raw_parts_mut(out, 2 * w * h);
        for v in 0..h {
            for u in 0..w {
                let m = f.get(u, v);
                let i = 2 * (v * w + u);
                dst[i] = m[0] as f32;
                dst[i + 1] = m[1] as f32;
            }
        }
        Ok(())
    })
}

/// Session log as JSON, for replay. Free with [`sf_string_free`].
///
/// # Safety
/// `session` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_session_log_json(session: *const SfSession, out: *mut *mut c_char) -> SfStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let out = mut_arg(out, "out")?;
        let json = serde_json::to_string(&s.0.log).map_err(|e| engine(e.into()))?;
        *out = CString::new(json).expect("json has no nul").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Render frames `0..=n` from motion field `field`.
///
/// # Safety
/// `session` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_session_render(
    session: *const SfSession,
    field: usize,
    n: usize,
    cyclic: bool,
    out: *mut *mut SfFrames,
) -> SfStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let out = mut_arg(out, "out")?;
        let seq = s.0.render(field, n, cyclic).map_err(engine)?;
        *out = Box::into_raw(Box::new(SfFrames(seq)));
        Ok(())
    })
}

/// # Safety
/// `frames` must be valid or null; null yields 0.
#[no_mangle]
pub unsafe extern "C" fn sf_frames_count(frames: *const SfFrames) -> usize {
    frames.as_ref().map_or(0, |f| f.0.len())
}

/// Copy frame `index` as 8-bit RGB, row-major. `len` must be at least
/// `3 * width * height`.
///
/// # Safety
/// `frames` must be valid; `out` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sf_frames_copy_rgb8(frames: *const SfFrames, index: usize, out: *mut u8, len: usize) -> SfStatus {
    guard(|| {
        let f = ref_arg(frames, "frames")?;
        let img = f.0.frames.get(index).ok_or_else(|| {
            fail(SfStatus::InvalidInput, format!("no frame {index}"))
        })?;
        let bytes = img.to_u8();
        if len < bytes.len() {
            return Err(fail(SfStatus::BufferTooSmall, format!("need {} bytes", bytes.len())));
        }
        mut_arg(out, "out")?;
        std::slice::from_raw_parts_mut(out, bytes.len()).copy_from_slice(&bytes);
        Ok(())
    })
}

/// # Safety
/// `frames` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_frames_free(frames: *mut SfFrames) {
    if !frames.is_null() {
        drop(Box::from_raw(frames));
    }
}
