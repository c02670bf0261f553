use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use animkp_core::image::{read_pnm, write_pnm};
use animkp_core::trace::parse_trace;
use animkp_core::Image;
use tempfile::TempDir;

fn animkp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_animkp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `n` frames of a slow drift with a small roll angle.
fn rot_scale_trace(n: usize) -> String {
    (0..n)
        .map(|f| {
            let t = f as f64 * 0.004;
            let kps: Vec<String> = (0..10)
                .map(|k| {
                    let x = -0.6 + 0.12 * k as f64 + t;
                    let y = 0.5 * ((k as f64) * 0.7).sin() - t;
                    format!("[{x},{y}]")
                })
                .collect();
            format!(
                "{{\"frame\":{f},\"kps\":[{}],\"phi\":{}}}\n",
                kps.join(","),
                0.01 * f as f64
            )
        })
        .collect()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

fn test_image(dir: &TempDir) -> PathBuf {
    let (w, h) = (32, 24);
    let data: Vec<u8> = (0..w * h * 3)
        .map(|i| ((i * 53 + i / 7) % 256) as u8)
        .collect();
    let p = dir.path().join("iframe.ppm");
    write_pnm(&p, &Image::from_u8(w, h, 3, &data).unwrap()).unwrap();
    p
}

#[test]
fn encode_reports_rot_scale_bitrate() {
    let dir = TempDir::new().unwrap();
    let trace = write(&dir, "t.jsonl", &rot_scale_trace(90));
    let out = dir.path().join("s.akp");
    let o = animkp(&[
        "encode",
        path(&trace),
        "--mode",
        "rot-scale",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("frames: 90"), "{text}");
    assert!(text.contains("bits/frame: 124"), "{text}");
    assert!(text.contains("kbps: 3.100"), "{text}");
    assert_eq!(fs::metadata(&out).unwrap().len(), 16 + 1395);
}

#[test]
fn encode_rejects_bad_traces() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.akp");
    let empty = write(&dir, "empty.jsonl", "");
    let o = animkp(&[
        "encode",
        path(&empty),
        "--mode",
        "none",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));

    let jac = write(
        &dir,
        "jac.jsonl",
        "{\"frame\":0,\"kps\":[[0,0],[0.5,0.5]],\"jacobians\":[[1,0,0,1],[1,0,0,1]]}\n",
    );
    let o = animkp(&[
        "encode",
        path(&jac),
        "--mode",
        "rot-scale",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = animkp(&[
        "encode",
        path(&jac),
        "--mode",
        "sideways",
        "--out",
        path(&out),
    ]);
    assert!(!o.status.success());
    assert!(!out.exists());
}

#[test]
fn decode_round_trip_is_idempotent() {
    let dir = TempDir::new().unwrap();
    let trace = write(&dir, "t.jsonl", &rot_scale_trace(12));
    let s1 = dir.path().join("s1.akp");
    let d1 = dir.path().join("d1.jsonl");
    let s2 = dir.path().join("s2.akp");
    assert!(animkp(&[
        "encode",
        path(&trace),
        "--mode",
        "rot-scale",
        "--out",
        path(&s1)
    ])
    .status
    .success());
    assert!(animkp(&["decode", path(&s1), "--out", path(&d1)])
        .status
        .success());
    assert!(animkp(&[
        "encode",
        path(&d1),
        "--mode",
        "rot-scale",
        "--out",
        path(&s2)
    ])
    .status
    .success());
    assert_eq!(fs::read(&s1).unwrap(), fs::read(&s2).unwrap());

    // decoded keypoints sit within half a 6-bit step of the source
    let half = 2.0 / 63.0 / 2.0 + 1e-12;
    let src = parse_trace(&fs::read_to_string(&trace).unwrap()).unwrap();
    let back = parse_trace(&fs::read_to_string(&d1).unwrap()).unwrap();
    assert_eq!(src.len(), back.len());
    for (a, b) in src.iter().zip(&back) {
        for (p, q) in a.kps.iter().zip(&b.kps) {
            assert!((p[0] - q[0]).abs() <= half && (p[1] - q[1]).abs() <= half);
        }
    }
}

#[test]
fn decode_no_jacobian_prints_keypoints_only() {
    let dir = TempDir::new().unwrap();
    let trace = write(
        &dir,
        "t.jsonl",
        "{\"frame\":0,\"kps\":[[0,0],[0.5,-0.5]]}\n{\"frame\":1,\"kps\":[[0.1,0],[0.5,-0.4]]}\n",
    );
    let s = dir.path().join("s.akp");
    assert!(
        animkp(&["encode", path(&trace), "--mode", "none", "--out", path(&s)])
            .status
            .success()
    );
    let o = animkp(&["decode", path(&s)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.contains("\"kps\"")
        && !l.contains("phi")
        && !l.contains("shear")
        && !l.contains("jacobians")));
}

#[test]
fn decode_truncated_stream_names_the_frame() {
    let dir = TempDir::new().unwrap();
    let trace = write(&dir, "t.jsonl", &rot_scale_trace(10));
    let s = dir.path().join("s.akp");
    assert!(animkp(&[
        "encode",
        path(&trace),
        "--mode",
        "rot-scale",
        "--out",
        path(&s)
    ])
    .status
    .success());
    let bytes = fs::read(&s).unwrap();
    fs::write(&s, &bytes[..bytes.len() - 20]).unwrap();
    let o = animkp(&["decode", path(&s)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("frame 8"), "{}", stderr(&o));

    fs::write(&s, b"nope").unwrap();
    assert_eq!(animkp(&["decode", path(&s)]).status.code(), Some(1));
}

#[test]
fn animate_identical_frames_reproduce_the_iframe() {
    let dir = TempDir::new().unwrap();
    let img = test_image(&dir);
    let one = rot_scale_trace(1);
    let still = format!("{one}{}", one.replacen("\"frame\":0", "\"frame\":1", 1));
    let trace = write(&dir, "t.jsonl", &still);
    let s = dir.path().join("s.akp");
    let out = dir.path().join("frames");
    assert!(animkp(&[
        "encode",
        path(&trace),
        "--mode",
        "rot-scale",
        "--out",
        path(&s)
    ])
    .status
    .success());
    let o = animkp(&[
        "animate",
        path(&img),
        path(&s),
        "--all",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let src = read_pnm(&img).unwrap();
    for f in ["frame_0000.ppm", "frame_0001.ppm"] {
        assert_eq!(read_pnm(out.join(f)).unwrap(), src, "{f}");
    }
}

#[test]
fn animate_translation_moves_pixels() {
    let dir = TempDir::new().unwrap();
    // on a 63-wide image one 6-bit keypoint step is exactly one pixel
    let (w, h) = (63, 16);
    let data: Vec<u8> = (0..w * h).map(|i| ((i * 53 + i / 7) % 256) as u8).collect();
    let img = dir.path().join("wide.pgm");
    write_pnm(&img, &Image::from_u8(w, h, 1, &data).unwrap()).unwrap();
    let level = |code: u32| -1.0 + 2.0 * f64::from(code) / 63.0;
    let frame = |f: usize, shift: u32| {
        format!(
            "{{\"frame\":{f},\"kps\":[[{},{}],[{},{}]]}}\n",
            level(16 + shift),
            level(30),
            level(40 + shift),
            level(20)
        )
    };
    let trace = write(&dir, "t.jsonl", &(frame(0, 0) + &frame(1, 1)));
    let s = dir.path().join("s.akp");
    let out = dir.path().join("frames");
    assert!(
        animkp(&["encode", path(&trace), "--mode", "none", "--out", path(&s)])
            .status
            .success()
    );
    let o = animkp(&[
        "animate",
        path(&img),
        path(&s),
        "--frame",
        "1",
        "--sigma",
        "1000",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let src = read_pnm(&img).unwrap();
    let got = read_pnm(out.join("frame_0001.ppm")).unwrap();
    assert!(!out.join("frame_0000.ppm").exists());
    for r in 0..h {
        for col in 1..w {
            assert_eq!(
                got.get(0, r, col),
                src.get(0, r, col - 1),
                "pixel ({r}, {col})"
            );
        }
    }
}

#[test]
fn animate_singular_jacobian_exits_3() {
    let dir = TempDir::new().unwrap();
    let img = test_image(&dir);
    let trace = write(
        &dir,
        "t.jsonl",
        "{\"frame\":0,\"kps\":[[0,0],[0.5,0.5]],\"jacobians\":[[1,0,0,1],[1,0,0,1]]}\n\
         {\"frame\":1,\"kps\":[[0,0],[0.5,0.5]],\"jacobians\":[[1,0,0,1],[1,1,1,1]]}\n",
    );
    let s = dir.path().join("s.akp");
    assert!(animkp(&[
        "encode",
        path(&trace),
        "--mode",
        "full-jac",
        "--out",
        path(&s)
    ])
    .status
    .success());
    let o = animkp(&[
        "animate",
        path(&img),
        path(&s),
        "--frame",
        "1",
        "--out",
        path(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("frame 1"), "{}", stderr(&o));
}

#[test]
fn bitrate_table_defaults() {
    let o = animkp(&["bitrate"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().collect())
        .collect();
    let expect = [
        ("none", "120", "3.000", "62.50"),
        ("rot-scale", "124", "3.100", "61.25"),
        ("rot-scale-shear", "204", "5.100", "36.25"),
        ("full-jac", "320", "8.000", "0.00"),
    ];
    assert_eq!(rows.len(), 4, "{text}");
    for (row, (m, b, k, s)) in rows.iter().zip(expect) {
        assert_eq!(row, &vec![m, b, k, s]);
    }
}

#[test]
fn bitrate_scales_with_fps() {
    let o = animkp(&["bitrate", "--mode", "rot-scale", "--fps", "30"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("3.720"), "{}", stdout(&o));
    assert_eq!(
        animkp(&["bitrate", "--kp-bits", "0"]).status.code(),
        Some(1)
    );
}

#[test]
fn compare_identical_images() {
    let dir = TempDir::new().unwrap();
    let img = test_image(&dir);
    let o = animkp(&["compare", path(&img), path(&img)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(
        text.contains("psnr_db: 99.0000") && text.contains("ssim: 1.000000"),
        "{text}"
    );
}

#[test]
fn gn_check_bounds() {
    let o = animkp(&["gn-check", "--seed", "3", "--pairs", "2000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert!(value("normalized_lipschitz:") <= 1.001);
    assert!(value("raw_lipschitz:") > 5.0);

    let o = animkp(&["gn-check", "--no-normalize", "--pairs", "500"]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("normalized"));
}
