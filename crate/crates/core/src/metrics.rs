//! PSNR and single-scale SSIM on real-valued images (dynamic range 1.0).

use crate::error::{Error, Result};
use crate::image::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    /// `(psnr_db, ssim)` per frame when several frames were compared.
    pub per_frame: Option<Vec<(f64, f64)>>,
}

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let (sum, n) = a
        .planes()
        .iter()
        .zip(b.planes())
        .flat_map(|(pa, pb)| pa.iter().zip(pb))
        .fold((0.0, 0usize), |(s, n), (x, y)| {
            (s + (x - y) * (x - y), n + 1)
        });
    let mse = sum / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).clamp(0.0, PSNR_CAP_DB))
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable "valid" filtering: output is `(w - 10) x (h - 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            horiz[r * ow + c] = taps.iter().zip(&row[c..]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * horiz[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let taps = gaussian_taps();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let prod =
        |f: fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(a, w, h, &taps);
    let mu_b = filter_valid(b, w, h, &taps);
    let aa = filter_valid(&prod(|x, _| x * x), w, h, &taps);
    let bb = filter_valid(&prod(|_, y| y * y), w, h, &taps);
    let ab = filter_valid(&prod(|x, y| x * y), w, h, &taps);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
/// channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    if a.width().min(a.height()) < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let sum: f64 = a
        .planes()
        .iter()
        .zip(b.planes())
        .map(|(pa, pb)| ssim_plane(pa, pb, a.width(), a.height()))
        .sum();
    Ok((sum / a.channels() as f64).clamp(-1.0, 1.0))
}

pub fn compare(a: &Image, b: &Image) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(a, b)?,
        ssim: ssim(a, b)?,
        per_frame: None,
    })
}

/// Averages per-frame metrics over equally long frame sequences.
pub fn compare_sequence(a: &[Image], b: &[Image]) -> Result<MetricReport> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(
            "sequences must be nonempty and equally long",
        ));
    }
    let per_frame = a
        .iter()
        .zip(b)
        .map(|(x, y)| Ok((psnr(x, y)?, ssim(x, y)?)))
        .collect::<Result<Vec<_>>>()?;
    let n = per_frame.len() as f64;
    Ok(MetricReport {
        psnr_db: per_frame.iter().map(|p| p.0).sum::<f64>() / n,
        ssim: per_frame.iter().map(|p| p.1).sum::<f64>() / n,
        per_frame: Some(per_frame),
    })
}
