//! Dense warp grids and bilinear resampling.
//!
//! Coordinates are normalized to `[-1, 1]` with the pixel-center convention:
//! pixel `(r, c)` of a `H x W` raster sits at
//! `(-1 + (2c + 1) / W, -1 + (2r + 1) / H)`.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::transforms::{
    compose_jacobian, compose_jacobian_inverse, invert2x2, regress_scale, rotation_matrix,
    scale_regression, Mat2, MotionParams, Point, TransformMode,
};

/// Default width of the Gaussian keypoint weight maps, in normalized units.
pub const DEFAULT_SIGMA: f64 = 0.1;

/// `H x W` grid of normalized sampling positions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    width: usize,
    height: usize,
    coords: Vec<Point>,
}

impl WarpField {
    pub fn new(width: usize, height: usize, coords: Vec<Point>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty warp field {width}x{height}")));
        }
        if coords.len() != width * height {
            return Err(Error::invalid(format!(
                "warp field {width}x{height} needs {} coordinates, got {}",
                width * height,
                coords.len()
            )));
        }
        if coords.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite warp coordinate"));
        }
        Ok(WarpField {
            width,
            height,
            coords,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn at(&self, row: usize, col: usize) -> Point {
        self.coords[row * self.width + col]
    }

    /// Applies `v -> m * (v - from) + to` to every coordinate.
    pub fn map_affine(&self, m: &Mat2, from: Point, to: Point) -> WarpField {
        WarpField {
            width: self.width,
            height: self.height,
            coords: self
                .coords
                .iter()
                .map(|&v| m.apply(v - from) + to)
                .collect(),
        }
    }

    fn same_dims(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }
}

/// Nonnegative per-pixel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl WeightMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(
                "weight map size does not match width*height",
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        Ok(WeightMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Normalized coordinate of the center of pixel `i` along an axis of length `n`.
pub fn pixel_center(i: usize, n: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

/// Identity warp field: every coordinate is its own pixel center.
pub fn neutral_grid(height: usize, width: usize) -> Result<WarpField> {
    if height == 0 || width == 0 {
        return Err(Error::invalid(format!(
            "grid dimensions must be positive, got {height}x{width}"
        )));
    }
    let coords = (0..height)
        .flat_map(|r| {
            (0..width).map(move |c| Point::new(pixel_center(c, width), pixel_center(r, height)))
        })
        .collect();
    Ok(WarpField {
        width,
        height,
        coords,
    })
}

/// Warp grid of one keypoint: `v -> jac_i * jac_p^-1 * (v - kp_p) + kp_i`.
pub fn keypoint_warp_grid(
    neutral: &WarpField,
    kp_i: Point,
    kp_p: Point,
    jac_i: &Mat2,
    jac_p: &Mat2,
    eps: f64,
) -> Result<WarpField> {
    let m = *jac_i * invert2x2(jac_p, eps)?;
    Ok(neutral.map_affine(&m, kp_p, kp_i))
}

/// Samples `src` at every coordinate of `field` with bilinear interpolation.
///
/// Coordinates outside the image are clamped to the border pixel centers.
pub fn bilinear_sample(src: &Image, field: &WarpField) -> Image {
    let (w, h) = (src.width(), src.height());
    let mut planes = vec![Vec::with_capacity(field.coords.len()); src.channels()];
    for &p in &field.coords {
        let (x0, x1, fx) = axis_taps(p.x, w);
        let (y0, y1, fy) = axis_taps(p.y, h);
        for (c, out) in planes.iter_mut().enumerate() {
            let s = src.plane(c);
            let top = s[y0 * w + x0] * (1.0 - fx) + s[y0 * w + x1] * fx;
            let bot = s[y1 * w + x0] * (1.0 - fx) + s[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Image::new(field.width, field.height, planes).expect("field dimensions are nonzero")
}

/// Neighbor indices and fractional offset along one axis after border clamping.
fn axis_taps(coord: f64, n: usize) -> (usize, usize, f64) {
    let max = (n - 1) as f64;
    let pos = (((coord + 1.0) * n as f64 - 1.0) / 2.0).clamp(0.0, max);
    let i0 = (pos.floor() as usize).min(n.saturating_sub(2));
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, pos - i0 as f64)
}

/// Gaussian bump `exp(-|v - kp|^2 / (2 sigma^2))` on the neutral lattice.
pub fn gaussian_weight_map(
    kp: Point,
    height: usize,
    width: usize,
    sigma: f64,
) -> Result<WeightMap> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let grid = neutral_grid(height, width)?;
    let denom = 2.0 * sigma * sigma;
    let values = grid
        .coords
        .iter()
        .map(|&v| (-(v - kp).norm_sq() / denom).exp())
        .collect();
    Ok(WeightMap {
        width,
        height,
        values,
    })
}

/// Per-pixel convex combination of keypoint fields and a background field.
///
/// The background weight is `max(0, 1 - sum of weights)`; all weights are then
/// normalized to sum to one.
pub fn blend_warp_fields(
    fields: &[WarpField],
    weights: &[WeightMap],
    background: &WarpField,
) -> Result<WarpField> {
    if fields.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} fields but {} weight maps",
            fields.len(),
            weights.len()
        )));
    }
    let (w, h) = (background.width, background.height);
    if fields.iter().any(|f| !f.same_dims(w, h))
        || weights.iter().any(|m| m.width != w || m.height != h)
    {
        return Err(Error::invalid("blend inputs have mismatched dimensions"));
    }
    let coords = (0..w * h)
        .map(|i| {
            let mut total = 0.0;
            let mut acc = Point::ORIGIN;
            for (f, m) in fields.iter().zip(weights) {
                let wt = m.values[i];
                total += wt;
                acc = acc + f.coords[i] * wt;
            }
            let bg = (1.0 - total).max(0.0);
            acc = acc + background.coords[i] * bg;
            acc * (1.0 / (total + bg))
        })
        .collect();
    Ok(WarpField {
        width: w,
        height: h,
        coords,
    })
}

/// Scale factor of the P-frame keypoints relative to the I-frame.
///
/// In the rotation modes the transmitted relative rotation is removed from the
/// P-frame keypoints first, so the regression sees scale only.
pub fn decoder_scale(
    mode: TransformMode,
    motion_i: &MotionParams,
    motion_p: &MotionParams,
) -> Result<f64> {
    match (mode.has_rotation(), motion_i.phi(), motion_p.phi()) {
        (true, Some(phi_i), Some(phi_p)) => {
            let derotate = rotation_matrix(phi_i - phi_p)?;
            let aligned: Vec<Point> = motion_p
                .keypoints()
                .points()
                .iter()
                .map(|&p| derotate.apply(p))
                .collect();
            regress_scale(motion_i.keypoints().points(), &aligned)
        }
        _ => scale_regression(motion_i.keypoints(), motion_p.keypoints()),
    }
}

/// Blended warp field mapping P-frame pixels to I-frame sampling positions.
pub fn motion_warp_field(
    height: usize,
    width: usize,
    motion_i: &MotionParams,
    motion_p: &MotionParams,
    mode: TransformMode,
    sigma: f64,
    eps: f64,
) -> Result<WarpField> {
    let k = motion_i.num_keypoints();
    if motion_p.num_keypoints() != k {
        return Err(Error::invalid(format!(
            "keypoint count mismatch: {k} vs {}",
            motion_p.num_keypoints()
        )));
    }
    let scf = if mode.has_rotation() {
        let s = decoder_scale(mode, motion_i, motion_p)?;
        if !(s > 0.0) {
            return Err(Error::invalid(format!(
                "regressed scale factor {s} is not positive"
            )));
        }
        s
    } else {
        1.0
    };
    let neutral = neutral_grid(height, width)?;
    let mut fields = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for idx in 0..k {
        let kp_i = motion_i.keypoints().points()[idx];
        let kp_p = motion_p.keypoints().points()[idx];
        let jac_i = compose_jacobian(mode, motion_i, idx, 1.0)?;
        let jac_p_inv = compose_jacobian_inverse(mode, motion_p, idx, scf, eps)?;
        fields.push(neutral.map_affine(&(jac_i * jac_p_inv), kp_p, kp_i));
        weights.push(gaussian_weight_map(kp_p, height, width, sigma)?);
    }
    blend_warp_fields(&fields, &weights, &neutral)
}

/// Renders the P-frame described by `motion_p` by warping the I-frame.
pub fn animate_frame(
    iframe: &Image,
    motion_i: &MotionParams,
    motion_p: &MotionParams,
    mode: TransformMode,
    sigma: f64,
    eps: f64,
) -> Result<Image> {
    let field = motion_warp_field(
        iframe.height(),
        iframe.width(),
        motion_i,
        motion_p,
        mode,
        sigma,
        eps,
    )?;
    Ok(bilinear_sample(iframe, &field))
}
