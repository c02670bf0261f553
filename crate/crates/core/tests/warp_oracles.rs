use std::f64::consts::FRAC_PI_2;

use animkp_core::transforms::{rotation_matrix, DEFAULT_SINGULAR_EPS};
use animkp_core::warpfield::{
    animate_frame, keypoint_warp_grid, motion_warp_field, neutral_grid, pixel_center,
};
use animkp_core::{Error, Image, KeypointFrame, Mat2, MotionParams, Point, TransformMode};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

/// Wide enough that every keypoint weight is ~1 everywhere, so the
/// background field gets no weight.
const FLAT_SIGMA: f64 = 1e3;

fn ramp(w: usize, h: usize) -> Image {
    let data: Vec<u8> = (0..w * h)
        .map(|i| ((i * 37 + i / w * 11) % 256) as u8)
        .collect();
    Image::from_u8(w, h, 1, &data).unwrap()
}

fn kps(points: &[(f64, f64)]) -> KeypointFrame {
    KeypointFrame::new(points.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
}

#[test]
fn no_jacobian_translation_shifts_pixels() {
    let (w, h) = (16, 12);
    let img = ramp(w, h);
    let base = [(-0.3, 0.2), (0.1, -0.1), (0.25, 0.3)];
    // two columns right, one row down, in normalized units
    let (dx, dy) = (2usize, 1usize);
    let t = (2.0 * dx as f64 / w as f64, 2.0 * dy as f64 / h as f64);
    let moved: Vec<_> = base.iter().map(|&(x, y)| (x + t.0, y + t.1)).collect();
    let mi = MotionParams::no_jacobian(kps(&base)).unwrap();
    let mp = MotionParams::no_jacobian(kps(&moved)).unwrap();
    let out = animate_frame(
        &img,
        &mi,
        &mp,
        TransformMode::NoJacobian,
        FLAT_SIGMA,
        DEFAULT_SINGULAR_EPS,
    )
    .unwrap()
    .quantized();
    for r in dy..h {
        for c in dx..w {
            assert_eq!(
                out.get(0, r, c),
                img.get(0, r - dy, c - dx),
                "pixel ({r}, {c})"
            );
        }
    }
}

#[test]
fn rot_scale_quarter_turn_rotates_square_image() {
    let n = 10;
    let img = ramp(n, n);
    let base = [(-0.3, 0.1), (0.2, -0.2), (0.1, 0.4), (-0.1, -0.3)];
    let r = rotation_matrix(FRAC_PI_2).unwrap();
    let turned: Vec<_> = base
        .iter()
        .map(|&(x, y)| {
            let p = r.apply(Point::new(x, y));
            (p.x, p.y)
        })
        .collect();
    let mi = MotionParams::rot_scale(kps(&base), 0.0).unwrap();
    let mp = MotionParams::rot_scale(kps(&turned), FRAC_PI_2).unwrap();
    let out = animate_frame(
        &img,
        &mi,
        &mp,
        TransformMode::RotScale,
        FLAT_SIGMA,
        DEFAULT_SINGULAR_EPS,
    )
    .unwrap()
    .quantized();
    for row in 0..n {
        for col in 0..n {
            assert_eq!(
                out.get(0, row, col),
                img.get(0, n - 1 - col, row),
                "pixel ({row}, {col})"
            );
        }
    }
}

#[test]
fn field_maps_keypoint_centers_to_their_source() {
    // at a pixel sitting exactly on kp_p with a tight sigma, the blended
    // field is dominated by that keypoint and lands on kp_i
    let (w, h) = (20, 20);
    let kp_p = Point::new(pixel_center(6, w), pixel_center(13, h));
    let kp_i = Point::new(pixel_center(9, w), pixel_center(4, h));
    let mi =
        MotionParams::no_jacobian(KeypointFrame::new(vec![kp_i, Point::new(0.9, 0.9)]).unwrap())
            .unwrap();
    let mp =
        MotionParams::no_jacobian(KeypointFrame::new(vec![kp_p, Point::new(0.9, 0.9)]).unwrap())
            .unwrap();
    let field = motion_warp_field(
        h,
        w,
        &mi,
        &mp,
        TransformMode::NoJacobian,
        0.01,
        DEFAULT_SINGULAR_EPS,
    )
    .unwrap();
    let v = field.at(13, 6);
    assert_abs_diff_eq!(v.x, kp_i.x, epsilon = 1e-12);
    assert_abs_diff_eq!(v.y, kp_i.y, epsilon = 1e-12);
}

#[test]
fn singular_full_jacobian_is_reported_with_its_keypoint() {
    let img = ramp(12, 12);
    let k = kps(&[(-0.2, 0.0), (0.3, 0.1)]);
    let good = Mat2::IDENTITY;
    let bad = Mat2::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let mi = MotionParams::full_jacobian(k.clone(), vec![good, good]).unwrap();
    let mp = MotionParams::full_jacobian(k, vec![good, bad]).unwrap();
    match animate_frame(
        &img,
        &mi,
        &mp,
        TransformMode::FullJacobian,
        0.1,
        DEFAULT_SINGULAR_EPS,
    ) {
        Err(Error::NearSingular { keypoint, .. }) => assert_eq!(keypoint, Some(1)),
        other => panic!("expected NearSingular, got {other:?}"),
    }
}

fn mat() -> impl Strategy<Value = Mat2> {
    prop::array::uniform4(-3.0f64..3.0).prop_map(|e| Mat2::from_entries(e).unwrap())
}

fn point() -> impl Strategy<Value = Point> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y)| Point::new(x, y))
}

proptest! {
    #[test]
    fn keypoint_grid_is_the_affine_map(
        jac_i in mat(),
        jac_p in mat(),
        kp_i in point(),
        kp_p in point(),
        w in 1usize..9,
        h in 1usize..9,
    ) {
        prop_assume!(jac_p.det().abs() > 1e-2);
        let neutral = neutral_grid(h, w).unwrap();
        let grid = keypoint_warp_grid(&neutral, kp_i, kp_p, &jac_i, &jac_p, DEFAULT_SINGULAR_EPS).unwrap();
        for r in 0..h {
            for c in 0..w {
                let v = neutral.at(r, c);
                // solve jac_p * u = v - kp_p by Cramer's rule, then apply jac_i
                let d = v - kp_p;
                let det = jac_p.det();
                let u = Point::new(
                    (d.x * jac_p.d - jac_p.b * d.y) / det,
                    (jac_p.a * d.y - jac_p.c * d.x) / det,
                );
                let expect = jac_i.apply(u) + kp_i;
                let got = grid.at(r, c);
                let tol = 1e-9 * (1.0 + expect.x.abs().max(expect.y.abs()));
                prop_assert!((got.x - expect.x).abs() <= tol && (got.y - expect.y).abs() <= tol);
            }
        }
    }

    #[test]
    fn flat_weights_average_the_displacements(tx in -0.2f64..0.2, ty in -0.2f64..0.2) {
        let base = [(-0.3, 0.2), (0.1, -0.1), (0.25, 0.3)];
        let p = [(-0.25 + tx, 0.1 + ty), (0.12 + tx, -0.05 + ty), (0.3 + tx, 0.35 + ty)];
        let mi = MotionParams::no_jacobian(kps(&base)).unwrap();
        let mp = MotionParams::no_jacobian(kps(&p)).unwrap();
        let field = motion_warp_field(6, 6, &mi, &mp, TransformMode::NoJacobian, FLAT_SIGMA, DEFAULT_SINGULAR_EPS).unwrap();
        let shift = base.iter().zip(&p).fold((0.0, 0.0), |acc, (i, q)| (acc.0 + (i.0 - q.0) / 3.0, acc.1 + (i.1 - q.1) / 3.0));
        let neutral = neutral_grid(6, 6).unwrap();
        // weights are 1 - O(|v - kp|^2 / sigma^2), i.e. flat to within 4e-6
        for r in 0..6 {
            for c in 0..6 {
                let (v, got) = (neutral.at(r, c), field.at(r, c));
                prop_assert!((got.x - v.x - shift.0).abs() < 1e-6 && (got.y - v.y - shift.1).abs() < 1e-6);
            }
        }
    }
}
