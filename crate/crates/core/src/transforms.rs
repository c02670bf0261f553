//! 2x2 transform algebra for keypoint Jacobians.
//!
//! Grid points are column vectors; a matrix acts on them from the left.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default `|det|` threshold below which [`invert2x2`] refuses to invert.
pub const DEFAULT_SINGULAR_EPS: f64 = 1e-6;

/// Default number of keypoints per frame.
pub const DEFAULT_NUM_KEYPOINTS: usize = 10;

/// Sum of squared deviations below which the I-frame keypoints are treated as
/// coincident.
const MIN_KEYPOINT_SPREAD: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Row-major 2x2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    /// Builds a matrix, rejecting non-finite entries.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let m = Mat2 { a, b, c, d };
        if !m.is_finite() {
            return Err(Error::invalid(format!("non-finite matrix entry in {m:?}")));
        }
        Ok(m)
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Result<Self> {
        Mat2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    }

    /// Entries in row-major order.
    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn from_entries(e: [f64; 4]) -> Result<Self> {
        Mat2::new(e[0], e[1], e[2], e[3])
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|v| v.is_finite())
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2 {
            a: self.a,
            b: self.c,
            c: self.b,
            d: self.d,
        }
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2 {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
            d: self.d * s,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(self.a * p.x + self.b * p.y, self.c * p.x + self.d * p.y)
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

impl Default for Mat2 {
    fn default() -> Self {
        Mat2::IDENTITY
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, r: Mat2) -> Mat2 {
        Mat2 {
            a: self.a * r.a + self.b * r.c,
            b: self.a * r.b + self.b * r.d,
            c: self.c * r.a + self.d * r.c,
            d: self.c * r.b + self.d * r.d,
        }
    }
}

impl Mul<Point> for Mat2 {
    type Output = Point;
    fn mul(self, p: Point) -> Point {
        self.apply(p)
    }
}

/// Per-keypoint shear parameters `(lambda, mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Shear {
    pub lambda: f64,
    pub mu: f64,
}

impl Shear {
    pub const fn new(lambda: f64, mu: f64) -> Self {
        Shear { lambda, mu }
    }
}

/// The keypoints of one frame, in normalized `[-1, 1]` image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFrame {
    kps: Vec<Point>,
}

impl KeypointFrame {
    pub fn new(kps: Vec<Point>) -> Result<Self> {
        if kps.len() < 2 {
            return Err(Error::invalid(format!(
                "a keypoint frame needs at least 2 keypoints, got {}",
                kps.len()
            )));
        }
        for (k, p) in kps.iter().enumerate() {
            let in_range = |v: f64| (-1.0..=1.0).contains(&v);
            if !(in_range(p.x) && in_range(p.y)) {
                return Err(Error::invalid(format!(
                    "keypoint {k} = ({}, {}) outside [-1, 1]",
                    p.x, p.y
                )));
            }
        }
        Ok(KeypointFrame { kps })
    }

    pub fn len(&self) -> usize {
        self.kps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kps.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.kps
    }

    pub fn get(&self, k: usize) -> Option<Point> {
        self.kps.get(k).copied()
    }

    pub fn mean(&self) -> Point {
        mean(&self.kps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformMode {
    NoJacobian,
    RotScale,
    RotScaleShear,
    FullJacobian,
}

impl TransformMode {
    pub const ALL: [TransformMode; 4] = [
        TransformMode::NoJacobian,
        TransformMode::RotScale,
        TransformMode::RotScaleShear,
        TransformMode::FullJacobian,
    ];

    /// Code used in the stream header.
    pub fn code(self) -> u8 {
        match self {
            TransformMode::NoJacobian => 0,
            TransformMode::RotScale => 1,
            TransformMode::RotScaleShear => 2,
            TransformMode::FullJacobian => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        TransformMode::ALL
            .into_iter()
            .find(|m| m.code() == code)
            .ok_or_else(|| Error::Format(format!("unknown transform mode code {code}")))
    }

    /// Command-line name (`none`, `rot-scale`, `rot-scale-shear`, `full-jac`).
    pub fn name(self) -> &'static str {
        match self {
            TransformMode::NoJacobian => "none",
            TransformMode::RotScale => "rot-scale",
            TransformMode::RotScaleShear => "rot-scale-shear",
            TransformMode::FullJacobian => "full-jac",
        }
    }

    pub fn has_rotation(self) -> bool {
        matches!(self, TransformMode::RotScale | TransformMode::RotScaleShear)
    }
}

impl fmt::Display for TransformMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown mode {s:?} (expected none, rot-scale, rot-scale-shear or full-jac)"
                ))
            })
    }
}

/// Keypoints plus the mode-dependent transform payload of one frame.
///
/// Exactly the fields the mode needs are present. `phi` is stored wrapped to
/// `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionParams {
    kp_frame: KeypointFrame,
    phi: Option<f64>,
    shear: Option<Vec<Shear>>,
    jacobians: Option<Vec<Mat2>>,
}

impl MotionParams {
    pub fn new(
        mode: TransformMode,
        kp_frame: KeypointFrame,
        phi: Option<f64>,
        shear: Option<Vec<Shear>>,
        jacobians: Option<Vec<Mat2>>,
    ) -> Result<Self> {
        let k = kp_frame.len();
        let want_phi = mode.has_rotation();
        let want_shear = mode == TransformMode::RotScaleShear;
        let want_jac = mode == TransformMode::FullJacobian;
        if want_phi != phi.is_some()
            || want_shear != shear.is_some()
            || want_jac != jacobians.is_some()
        {
            return Err(Error::invalid(format!(
                "payload does not match mode {mode}: phi={}, shear={}, jacobians={}",
                phi.is_some(),
                shear.is_some(),
                jacobians.is_some()
            )));
        }
        let phi = match phi {
            Some(p) if !p.is_finite() => {
                return Err(Error::invalid(format!("non-finite phi {p}")));
            }
            Some(p) => Some(wrap_angle(p)),
            None => None,
        };
        if let Some(s) = &shear {
            if s.len() != k {
                return Err(Error::invalid(format!(
                    "expected {k} shear pairs, got {}",
                    s.len()
                )));
            }
            if s.iter()
                .any(|s| !(s.lambda.is_finite() && s.mu.is_finite()))
            {
                return Err(Error::invalid("non-finite shear parameter"));
            }
        }
        if let Some(j) = &jacobians {
            if j.len() != k {
                return Err(Error::invalid(format!(
                    "expected {k} jacobians, got {}",
                    j.len()
                )));
            }
            if j.iter().any(|m| !m.is_finite()) {
                return Err(Error::invalid("non-finite jacobian entry"));
            }
        }
        Ok(MotionParams {
            kp_frame,
            phi,
            shear,
            jacobians,
        })
    }

    pub fn no_jacobian(kp_frame: KeypointFrame) -> Result<Self> {
        MotionParams::new(TransformMode::NoJacobian, kp_frame, None, None, None)
    }

    pub fn rot_scale(kp_frame: KeypointFrame, phi: f64) -> Result<Self> {
        MotionParams::new(TransformMode::RotScale, kp_frame, Some(phi), None, None)
    }

    pub fn rot_scale_shear(kp_frame: KeypointFrame, phi: f64, shear: Vec<Shear>) -> Result<Self> {
        MotionParams::new(
            TransformMode::RotScaleShear,
            kp_frame,
            Some(phi),
            Some(shear),
            None,
        )
    }

    pub fn full_jacobian(kp_frame: KeypointFrame, jacobians: Vec<Mat2>) -> Result<Self> {
        MotionParams::new(
            TransformMode::FullJacobian,
            kp_frame,
            None,
            None,
            Some(jacobians),
        )
    }

    /// The mode implied by the payload.
    pub fn mode(&self) -> TransformMode {
        match (&self.phi, &self.shear, &self.jacobians) {
            (_, _, Some(_)) => TransformMode::FullJacobian,
            (_, Some(_), _) => TransformMode::RotScaleShear,
            (Some(_), _, _) => TransformMode::RotScale,
            _ => TransformMode::NoJacobian,
        }
    }

    pub fn keypoints(&self) -> &KeypointFrame {
        &self.kp_frame
    }

    pub fn num_keypoints(&self) -> usize {
        self.kp_frame.len()
    }

    pub fn phi(&self) -> Option<f64> {
        self.phi
    }

    pub fn shear(&self) -> Option<&[Shear]> {
        self.shear.as_deref()
    }

    pub fn jacobians(&self) -> Option<&[Mat2]> {
        self.jacobians.as_deref()
    }

    fn expect_mode(&self, mode: TransformMode) -> Result<()> {
        if self.mode() != mode {
            return Err(Error::invalid(format!(
                "motion parameters carry a {} payload, mode is {mode}",
                self.mode()
            )));
        }
        Ok(())
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(phi: f64) -> f64 {
    if (-PI..PI).contains(&phi) {
        return phi;
    }
    let mut r = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r -= 2.0 * PI;
    }
    r
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {v}")))
    }
}

/// `[[cos phi, -sin phi], [sin phi, cos phi]]`.
pub fn rotation_matrix(phi: f64) -> Result<Mat2> {
    check_finite("phi", phi)?;
    let (s, c) = phi.sin_cos();
    Ok(Mat2 {
        a: c,
        b: -s,
        c: s,
        d: c,
    })
}

/// Unit-determinant shear `[[1 + lambda*mu, lambda], [mu, 1]]`.
pub fn shear_matrix(lambda: f64, mu: f64) -> Result<Mat2> {
    check_finite("lambda", lambda)?;
    check_finite("mu", mu)?;
    Ok(Mat2 {
        a: 1.0 + lambda * mu,
        b: lambda,
        c: mu,
        d: 1.0,
    })
}

/// Closed-form inverse of [`shear_matrix`]: `[[1, -lambda], [-mu, 1 + lambda*mu]]`.
pub fn shear_inverse(lambda: f64, mu: f64) -> Result<Mat2> {
    check_finite("lambda", lambda)?;
    check_finite("mu", mu)?;
    Ok(Mat2 {
        a: 1.0,
        b: -lambda,
        c: -mu,
        d: 1.0 + lambda * mu,
    })
}

/// Least-squares scale of the P-frame keypoints against the I-frame keypoints.
///
/// Both coordinates of every keypoint enter one regression (2K samples), each
/// centered on its own per-axis mean, so the result is a single factor that is
/// invariant to translating either frame.
pub fn scale_regression(kp_i: &KeypointFrame, kp_p: &KeypointFrame) -> Result<f64> {
    regress_scale(kp_i.points(), kp_p.points())
}

pub(crate) fn regress_scale(kp_i: &[Point], kp_p: &[Point]) -> Result<f64> {
    if kp_i.len() != kp_p.len() {
        return Err(Error::invalid(format!(
            "keypoint count mismatch: {} vs {}",
            kp_i.len(),
            kp_p.len()
        )));
    }
    let mean_i = mean(kp_i);
    let mean_p = mean(kp_p);
    let (num, den) = kp_i
        .iter()
        .zip(kp_p)
        .fold((0.0, 0.0), |(num, den), (&pi, &pp)| {
            let di = pi - mean_i;
            let dp = pp - mean_p;
            (num + (di.x * dp.x + di.y * dp.y), den + di.norm_sq())
        });
    if den < MIN_KEYPOINT_SPREAD {
        return Err(Error::DegenerateKeypoints);
    }
    Ok(num / den)
}

fn mean(pts: &[Point]) -> Point {
    let n = pts.len() as f64;
    let sum = pts.iter().fold(Point::ORIGIN, |acc, &p| acc + p);
    Point::new(sum.x / n, sum.y / n)
}

/// Adjugate inverse, refusing matrices with `|det| < eps`.
pub fn invert2x2(m: &Mat2, eps: f64) -> Result<Mat2> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let det = m.det();
    if !det.is_finite() || det.abs() < eps {
        return Err(Error::NearSingular {
            det,
            keypoint: None,
        });
    }
    let inv = 1.0 / det;
    Ok(Mat2 {
        a: m.d * inv,
        b: -m.b * inv,
        c: -m.c * inv,
        d: m.a * inv,
    })
}

fn check_scf(scf: f64) -> Result<()> {
    if scf.is_finite() && scf > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "scale factor must be positive and finite, got {scf}"
        )))
    }
}

fn shear_at(params: &MotionParams, k: usize) -> Result<Shear> {
    params
        .shear()
        .and_then(|s| s.get(k))
        .copied()
        .ok_or_else(|| Error::invalid(format!("no shear pair for keypoint {k}")))
}

/// Jacobian of keypoint `k` under `mode`.
///
/// `NoJacobian` gives the identity, `RotScale` gives `R(phi) * scf`,
/// `RotScaleShear` gives `R(phi) * SHR_k * scf` and `FullJacobian` returns the
/// stored matrix (ignoring `scf`).
pub fn compose_jacobian(
    mode: TransformMode,
    params: &MotionParams,
    k: usize,
    scf: f64,
) -> Result<Mat2> {
    params.expect_mode(mode)?;
    check_scf(scf)?;
    if k >= params.num_keypoints() {
        return Err(Error::invalid(format!(
            "keypoint index {k} out of range for K = {}",
            params.num_keypoints()
        )));
    }
    match mode {
        TransformMode::NoJacobian => Ok(Mat2::IDENTITY),
        TransformMode::RotScale => Ok(rotation_matrix(phi_of(params)?)?.scale(scf)),
        TransformMode::RotScaleShear => {
            let s = shear_at(params, k)?;
            let r = rotation_matrix(phi_of(params)?)?;
            Ok((r * shear_matrix(s.lambda, s.mu)?).scale(scf))
        }
        TransformMode::FullJacobian => Ok(params.jacobians().expect("mode checked")[k]),
    }
}

/// Inverse of [`compose_jacobian`].
///
/// The structured modes use closed forms (transpose of the rotation, the
/// analytic shear inverse, reciprocal scale) and cannot fail on
/// conditioning; only `FullJacobian` goes through [`invert2x2`] and may
/// report [`Error::NearSingular`].
pub fn compose_jacobian_inverse(
    mode: TransformMode,
    params: &MotionParams,
    k: usize,
    scf: f64,
    eps: f64,
) -> Result<Mat2> {
    params.expect_mode(mode)?;
    check_scf(scf)?;
    match mode {
        TransformMode::NoJacobian => {
            compose_jacobian(mode, params, k, scf)?;
            Ok(Mat2::IDENTITY)
        }
        TransformMode::RotScale => {
            compose_jacobian(mode, params, k, scf)?;
            Ok(rotation_matrix(phi_of(params)?)?
                .transpose()
                .scale(1.0 / scf))
        }
        TransformMode::RotScaleShear => {
            compose_jacobian(mode, params, k, scf)?;
            let s = shear_at(params, k)?;
            let rt = rotation_matrix(phi_of(params)?)?.transpose();
            Ok((shear_inverse(s.lambda, s.mu)? * rt).scale(1.0 / scf))
        }
        TransformMode::FullJacobian => {
            let j = compose_jacobian(mode, params, k, scf)?;
            invert2x2(&j, eps).map_err(|e| match e {
                Error::NearSingular { det, .. } => Error::NearSingular {
                    det,
                    keypoint: Some(k),
                },
                other => other,
            })
        }
    }
}

fn phi_of(params: &MotionParams) -> Result<f64> {
    params
        .phi()
        .ok_or_else(|| Error::invalid("rotation angle missing"))
}

/// `|wrap(phi - phi_ref)|`, the shortest angular distance.
pub fn rotation_loss_l1(phi: f64, phi_ref: f64) -> Result<f64> {
    check_finite("phi", phi)?;
    check_finite("phi_ref", phi_ref)?;
    Ok(wrap_angle(phi - phi_ref).abs())
}
