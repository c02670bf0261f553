//! `animkp`: encode, decode and animate keypoint motion streams.
//!
//! Exit codes: 0 success, 1 malformed input or I/O failure, 2 trace fields do
//! not match `--mode`, 3 near-singular Jacobian while animating, 4 the
//! gradient-normalization check exceeded its Lipschitz bound.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use animkp_core::bitstream::{
    bitrate_kbps, bits_per_frame, read_stream, savings_percent, write_stream, QuantSpec,
    StreamHeader,
};
use animkp_core::gradnorm::{self, empirical_lipschitz};
use animkp_core::image::{read_pnm, write_pnm};
use animkp_core::metrics;
use animkp_core::trace::{motion_to_trace, parse_trace, records_to_motion, TraceError};
use animkp_core::transforms::{TransformMode, DEFAULT_NUM_KEYPOINTS, DEFAULT_SINGULAR_EPS};
use animkp_core::warpfield::{animate_frame, DEFAULT_SIGMA};
use animkp_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "animkp",
    version,
    about = "Keypoint motion codec for animation video coding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a keypoint trace into a motion bitstream.
    Encode {
        trace: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: TransformMode,
        #[command(flatten)]
        quant: QuantArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a motion bitstream back into a trace.
    Decode {
        stream: PathBuf,
        /// Trace output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Warp an I-frame with the motion of one or all stream frames.
    Animate {
        iframe: PathBuf,
        stream: PathBuf,
        #[arg(long, conflicts_with = "all", required_unless_present = "all")]
        frame: Option<usize>,
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        #[arg(long, default_value_t = DEFAULT_SINGULAR_EPS)]
        eps: f64,
        /// Output directory for `frame_NNNN.ppm` files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print bits per frame, bitrate and savings versus full Jacobians.
    Bitrate {
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TransformMode>,
        #[arg(long, default_value_t = DEFAULT_NUM_KEYPOINTS)]
        keypoints: usize,
        #[command(flatten)]
        quant: QuantArgs,
    },
    /// PSNR and SSIM between two images.
    Compare { a: PathBuf, b: PathBuf },
    /// Empirical Lipschitz constant of a random network before and after
    /// gradient normalization.
    GnCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        /// Report the raw network only.
        #[arg(long)]
        no_normalize: bool,
    },
}

#[derive(Args, Clone, Copy)]
struct QuantArgs {
    #[arg(long, default_value_t = 6)]
    kp_bits: u8,
    #[arg(long, default_value_t = 4)]
    rot_bits: u8,
    #[arg(long, default_value_t = 4)]
    shear_bits: u8,
    #[arg(long, default_value_t = 5)]
    jac_bits: u8,
    #[arg(long, default_value_t = 25)]
    fps: u8,
}

impl QuantArgs {
    fn spec(self) -> Result<QuantSpec, Failure> {
        let q = QuantSpec {
            kp_bits: self.kp_bits,
            rot_bits: self.rot_bits,
            shear_bits: self.shear_bits,
            jac_bits: self.jac_bits,
            fps: self.fps,
            ..QuantSpec::default()
        };
        q.validate().map_err(|e| Failure::input(e.to_string()))?;
        Ok(q)
    }
}

fn parse_mode(s: &str) -> Result<TransformMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Failure {
            code: 1,
            msg: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NearSingular { .. } => 3,
            _ => 1,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        let code = match e {
            TraceError::ModeMismatch { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn encode(trace: &Path, mode: TransformMode, quant: QuantSpec, out: &Path) -> Result<(), Failure> {
    let text = String::from_utf8(read_file(trace)?)
        .map_err(|_| Failure::input(format!("{}: not UTF-8 text", trace.display())))?;
    let records = parse_trace(&text)?;
    let frames = records_to_motion(&records, mode)?;
    let k = u8::try_from(frames[0].num_keypoints())
        .map_err(|_| Failure::input("at most 255 keypoints fit in a stream header"))?;
    let count = u32::try_from(frames.len()).map_err(|_| Failure::input("too many frames"))?;
    let header = StreamHeader::new(mode, k, quant, count);
    let stream = write_stream(&frames, &header)?;
    fs::write(out, stream.to_bytes())
        .map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
    println!("frames: {count}");
    println!("bits/frame: {}", header.bits_per_frame());
    println!("kbps: {:.3}", bitrate_kbps(mode, usize::from(k), &quant));
    Ok(())
}

fn decode(stream: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let (_, frames) = read_stream(&read_file(stream)?)?;
    let text = motion_to_trace(&frames);
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn animate(
    iframe: &Path,
    stream: &Path,
    which: Option<usize>,
    sigma: f64,
    eps: f64,
    out: &Path,
) -> Result<(), Failure> {
    let img = read_pnm(iframe).map_err(|e| Failure::input(format!("{}: {e}", iframe.display())))?;
    let (header, frames) = read_stream(&read_file(stream)?)?;
    if frames.is_empty() {
        return Err(Failure::input("stream holds no frames"));
    }
    let indices: Vec<usize> = match which {
        Some(i) if i < frames.len() => vec![i],
        Some(i) => {
            return Err(Failure::input(format!(
                "frame {i} out of range (stream has {})",
                frames.len()
            )))
        }
        None => (0..frames.len()).collect(),
    };
    fs::create_dir_all(out).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
    for i in indices {
        let rendered = animate_frame(&img, &frames[0], &frames[i], header.mode, sigma, eps)
            .map_err(|e| {
                let mut f = Failure::from(e);
                f.msg = format!("frame {i}: {}", f.msg);
                f
            })?;
        let path = out.join(format!("frame_{i:04}.ppm"));
        write_pnm(&path, &rendered.quantized())
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn bitrate(mode: Option<TransformMode>, k: usize, quant: QuantSpec) -> Result<(), Failure> {
    if k == 0 {
        return Err(Failure::input("need at least one keypoint"));
    }
    let modes: Vec<_> = match mode {
        Some(m) => vec![m],
        None => TransformMode::ALL.to_vec(),
    };
    println!(
        "{:<16} {:>10} {:>8} {:>12}",
        "mode", "bits/frame", "kbps", "savings[%]"
    );
    for m in modes {
        println!(
            "{:<16} {:>10} {:>8.3} {:>12.2}",
            m.name(),
            bits_per_frame(m, k, &quant),
            bitrate_kbps(m, k, &quant),
            savings_percent(m, TransformMode::FullJacobian, k, &quant)
        );
    }
    Ok(())
}

fn compare(a: &Path, b: &Path) -> Result<(), Failure> {
    let load = |p: &Path| read_pnm(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())));
    let report = metrics::compare(&load(a)?, &load(b)?)?;
    println!("psnr_db: {:.4}", report.psnr_db);
    println!("ssim: {:.6}", report.ssim);
    Ok(())
}

fn gn_check(seed: u64, pairs: usize, normalize: bool) -> Result<(), Failure> {
    let net = gradnorm::steep_reference_net(seed)?;
    let domain = vec![(-2.0, 2.0); net.input_dim()];
    let raw = empirical_lipschitz(&net, false, pairs, &domain, seed)?;
    println!("raw_lipschitz: {raw:.6}");
    if normalize {
        let gn = empirical_lipschitz(&net, true, pairs, &domain, seed)?;
        println!("normalized_lipschitz: {gn:.6}");
        if gn > gradnorm::LIPSCHITZ_TOLERANCE {
            return Err(Failure {
                code: 4,
                msg: format!(
                    "normalized estimate {gn:.6} exceeds {}",
                    gradnorm::LIPSCHITZ_TOLERANCE
                ),
            });
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Encode {
            trace,
            mode,
            quant,
            out,
        } => encode(&trace, mode, quant.spec()?, &out),
        Command::Decode { stream, out } => decode(&stream, out.as_deref()),
        Command::Animate {
            iframe,
            stream,
            frame,
            all: _,
            sigma,
            eps,
            out,
        } => animate(&iframe, &stream, frame, sigma, eps, &out),
        Command::Bitrate {
            mode,
            keypoints,
            quant,
        } => bitrate(mode, keypoints, quant.spec()?),
        Command::Compare { a, b } => compare(&a, &b),
        Command::GnCheck {
            seed,
            pairs,
            no_normalize,
        } => gn_check(seed, pairs, !no_normalize),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
