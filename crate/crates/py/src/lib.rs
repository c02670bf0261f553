//! Python bindings. Images cross the boundary as nested `[row][col][channel]`
//! lists of floats in `[0, 1]`; matrices as `[[a, b], [c, d]]`.

use animkp_core::bitstream::{self, read_stream, write_stream, QuantSpec, StreamHeader};
use animkp_core::trace::{motion_to_trace, parse_trace, records_to_motion, TraceError};
use animkp_core::transforms::{self, DEFAULT_NUM_KEYPOINTS, DEFAULT_SINGULAR_EPS};
use animkp_core::warpfield::{self, DEFAULT_SIGMA};
use animkp_core::{
    gradnorm, image, metrics, Error, Image, KeypointFrame, Mat2, Point, TransformMode,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

create_exception!(animkp, NearSingularError, PyValueError);
create_exception!(animkp, TruncatedStreamError, PyValueError);
create_exception!(animkp, ModeMismatchError, PyValueError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NearSingular { .. } => NearSingularError::new_err(e.to_string()),
        Error::TruncatedStream { .. } => TruncatedStreamError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn trace_err(e: TraceError) -> PyErr {
    match e {
        TraceError::ModeMismatch { .. } => ModeMismatchError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type PyMat = [[f64; 2]; 2];
type PyImage = Vec<Vec<Vec<f64>>>;

fn to_py_mat(m: Mat2) -> PyMat {
    [[m.a, m.b], [m.c, m.d]]
}

fn mode(name: &str) -> PyResult<TransformMode> {
    name.parse().map_err(py_err)
}

fn keypoints(pts: Vec<(f64, f64)>) -> PyResult<KeypointFrame> {
    KeypointFrame::new(pts.into_iter().map(|(x, y)| Point::new(x, y)).collect()).map_err(py_err)
}

fn to_image(rows: PyImage) -> PyResult<Image> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    let c = rows.first().and_then(|r| r.first()).map_or(0, Vec::len);
    let mut planes = vec![Vec::with_capacity(w * h); c];
    for row in &rows {
        if row.len() != w {
            return Err(PyValueError::new_err("ragged image rows"));
        }
        for px in row {
            if px.len() != c {
                return Err(PyValueError::new_err("inconsistent channel count"));
            }
            for (plane, &v) in planes.iter_mut().zip(px) {
                plane.push(v);
            }
        }
    }
    Image::new(w, h, planes).map_err(py_err)
}

fn from_image(img: &Image) -> PyImage {
    (0..img.height())
        .map(|r| {
            (0..img.width())
                .map(|c| (0..img.channels()).map(|ch| img.get(ch, r, c)).collect())
                .collect()
        })
        .collect()
}

fn quant(kp_bits: u8, rot_bits: u8, shear_bits: u8, jac_bits: u8, fps: u8) -> PyResult<QuantSpec> {
    let q = QuantSpec {
        kp_bits,
        rot_bits,
        shear_bits,
        jac_bits,
        fps,
        ..QuantSpec::default()
    };
    q.validate().map_err(py_err)?;
    Ok(q)
}

#[pyfunction]
fn rotation_matrix(phi: f64) -> PyResult<PyMat> {
    transforms::rotation_matrix(phi)
        .map(to_py_mat)
        .map_err(py_err)
}

#[pyfunction]
fn shear_matrix(lam: f64, mu: f64) -> PyResult<PyMat> {
    transforms::shear_matrix(lam, mu)
        .map(to_py_mat)
        .map_err(py_err)
}

#[pyfunction]
fn shear_inverse(lam: f64, mu: f64) -> PyResult<PyMat> {
    transforms::shear_inverse(lam, mu)
        .map(to_py_mat)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (m, eps = DEFAULT_SINGULAR_EPS))]
fn invert2x2(m: PyMat, eps: f64) -> PyResult<PyMat> {
    let m = Mat2::from_rows(m).map_err(py_err)?;
    transforms::invert2x2(&m, eps)
        .map(to_py_mat)
        .map_err(py_err)
}

#[pyfunction]
fn scale_regression(kp_i: Vec<(f64, f64)>, kp_p: Vec<(f64, f64)>) -> PyResult<f64> {
    transforms::scale_regression(&keypoints(kp_i)?, &keypoints(kp_p)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (mode_name, k = DEFAULT_NUM_KEYPOINTS, kp_bits = 6, rot_bits = 4, shear_bits = 4, jac_bits = 5, fps = 25))]
fn bits_per_frame(
    mode_name: &str,
    k: usize,
    kp_bits: u8,
    rot_bits: u8,
    shear_bits: u8,
    jac_bits: u8,
    fps: u8,
) -> PyResult<u64> {
    let q = quant(kp_bits, rot_bits, shear_bits, jac_bits, fps)?;
    Ok(bitstream::bits_per_frame(mode(mode_name)?, k, &q))
}

#[pyfunction]
#[pyo3(signature = (mode_name, k = DEFAULT_NUM_KEYPOINTS, kp_bits = 6, rot_bits = 4, shear_bits = 4, jac_bits = 5, fps = 25))]
fn bitrate_kbps(
    mode_name: &str,
    k: usize,
    kp_bits: u8,
    rot_bits: u8,
    shear_bits: u8,
    jac_bits: u8,
    fps: u8,
) -> PyResult<f64> {
    let q = quant(kp_bits, rot_bits, shear_bits, jac_bits, fps)?;
    Ok(bitstream::bitrate_kbps(mode(mode_name)?, k, &q))
}

/// Savings of `mode_name` relative to `baseline`, in percent, at default
/// quantizer settings.
#[pyfunction]
#[pyo3(signature = (mode_name, baseline = "full-jac", k = DEFAULT_NUM_KEYPOINTS))]
fn savings_percent(mode_name: &str, baseline: &str, k: usize) -> PyResult<f64> {
    Ok(bitstream::savings_percent(
        mode(mode_name)?,
        mode(baseline)?,
        k,
        &QuantSpec::default(),
    ))
}

/// Encodes JSON-lines trace text into stream bytes.
#[pyfunction]
#[pyo3(signature = (trace, mode_name, kp_bits = 6, rot_bits = 4, shear_bits = 4, jac_bits = 5, fps = 25))]
#[allow(clippy::too_many_arguments)]
fn encode_trace<'py>(
    py: Python<'py>,
    trace: &str,
    mode_name: &str,
    kp_bits: u8,
    rot_bits: u8,
    shear_bits: u8,
    jac_bits: u8,
    fps: u8,
) -> PyResult<Bound<'py, PyBytes>> {
    let q = quant(kp_bits, rot_bits, shear_bits, jac_bits, fps)?;
    let m = mode(mode_name)?;
    let frames =
        records_to_motion(&parse_trace(trace).map_err(trace_err)?, m).map_err(trace_err)?;
    let k = u8::try_from(frames[0].num_keypoints())
        .map_err(|_| PyValueError::new_err("at most 255 keypoints"))?;
    let count =
        u32::try_from(frames.len()).map_err(|_| PyValueError::new_err("too many frames"))?;
    let stream = write_stream(&frames, &StreamHeader::new(m, k, q, count)).map_err(py_err)?;
    Ok(PyBytes::new(py, &stream.to_bytes()))
}

/// Decodes stream bytes into `(mode_name, trace_text)`.
#[pyfunction]
fn decode_stream(data: &[u8]) -> PyResult<(String, String)> {
    let (header, frames) = read_stream(data).map_err(py_err)?;
    Ok((header.mode.name().to_string(), motion_to_trace(&frames)))
}

/// Warps `iframe` with the motion of stream frame `frame`, using stream frame
/// 0 as the I-frame motion.
#[pyfunction]
#[pyo3(signature = (iframe, stream, frame, sigma = DEFAULT_SIGMA, eps = DEFAULT_SINGULAR_EPS))]
fn animate(
    iframe: PyImage,
    stream: &[u8],
    frame: usize,
    sigma: f64,
    eps: f64,
) -> PyResult<PyImage> {
    let img = to_image(iframe)?;
    let (header, frames) = read_stream(stream).map_err(py_err)?;
    let target = frames
        .get(frame)
        .ok_or_else(|| PyValueError::new_err(format!("frame {frame} out of range")))?;
    let out = warpfield::animate_frame(&img, &frames[0], target, header.mode, sigma, eps)
        .map_err(py_err)?;
    Ok(from_image(&out))
}

#[pyfunction]
fn read_pnm(path: &str) -> PyResult<PyImage> {
    image::read_pnm(path)
        .map(|i| from_image(&i))
        .map_err(py_err)
}

#[pyfunction]
fn write_pnm(path: &str, img: PyImage) -> PyResult<()> {
    image::write_pnm(path, &to_image(img)?).map_err(py_err)
}

#[pyfunction]
fn psnr(a: PyImage, b: PyImage) -> PyResult<f64> {
    metrics::psnr(&to_image(a)?, &to_image(b)?).map_err(py_err)
}

#[pyfunction]
fn ssim(a: PyImage, b: PyImage) -> PyResult<f64> {
    metrics::ssim(&to_image(a)?, &to_image(b)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (f, grad, eps = gradnorm::DEFAULT_GN_EPS))]
fn grad_normalize(f: f64, grad: Vec<f64>, eps: f64) -> PyResult<f64> {
    gradnorm::grad_normalize(f, &grad, eps).map_err(py_err)
}

/// `(raw, normalized)` empirical Lipschitz estimates of the seeded reference
/// network over `[-2, 2]^n`.
#[pyfunction]
#[pyo3(signature = (seed = 0, pairs = 10_000))]
fn gn_check(seed: u64, pairs: usize) -> PyResult<(f64, f64)> {
    let net = gradnorm::steep_reference_net(seed).map_err(py_err)?;
    let domain = vec![(-2.0, 2.0); net.input_dim()];
    let raw = gradnorm::empirical_lipschitz(&net, false, pairs, &domain, seed).map_err(py_err)?;
    let gn = gradnorm::empirical_lipschitz(&net, true, pairs, &domain, seed).map_err(py_err)?;
    Ok((raw, gn))
}

#[pymodule]
fn animkp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("NearSingularError", py.get_type::<NearSingularError>())?;
    m.add(
        "TruncatedStreamError",
        py.get_type::<TruncatedStreamError>(),
    )?;
    m.add("ModeMismatchError", py.get_type::<ModeMismatchError>())?;
    m.add(
        "MODES",
        TransformMode::ALL
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>(),
    )?;
    m.add("LIPSCHITZ_TOLERANCE", gradnorm::LIPSCHITZ_TOLERANCE)?;
    m.add_function(wrap_pyfunction!(rotation_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(shear_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(shear_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(invert2x2, m)?)?;
    m.add_function(wrap_pyfunction!(scale_regression, m)?)?;
    m.add_function(wrap_pyfunction!(bits_per_frame, m)?)?;
    m.add_function(wrap_pyfunction!(bitrate_kbps, m)?)?;
    m.add_function(wrap_pyfunction!(savings_percent, m)?)?;
    m.add_function(wrap_pyfunction!(encode_trace, m)?)?;
    m.add_function(wrap_pyfunction!(decode_stream, m)?)?;
    m.add_function(wrap_pyfunction!(animate, m)?)?;
    m.add_function(wrap_pyfunction!(read_pnm, m)?)?;
    m.add_function(wrap_pyfunction!(write_pnm, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(grad_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(gn_check, m)?)?;
    Ok(())
}
