//! Command-line front end: reads two PNG images and a network, runs the
//! analogy and writes both outputs, both fields and optional diagnostics.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | an input file is missing, or the command line is invalid |
//! | 3 | an input file cannot be decoded (image, manifest or weights) |
//! | 4 | the pipeline rejected the inputs or failed |
//! | 5 | an output file cannot be written |

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use deep_analogy::fuse::AlphaSchedule;
use deep_analogy::io::encode_nnf;
use deep_analogy::{load_network, run, Image, Mode, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Default,
    /// Same scene, different tone: default weights plus 0.1.
    Photo,
    /// Near-identical pairs: every level fully content-weighted.
    Identical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Full,
    ColorTransfer,
}

/// Dense correspondence and appearance transfer between two images.
#[derive(Debug, Parser)]
#[command(name = "deep-analogy", version)]
struct Args {
    /// Structure image A (PNG).
    #[arg(long)]
    content: PathBuf,
    /// Appearance image B' (PNG).
    #[arg(long)]
    style: PathBuf,
    /// Weight file (DIAW).
    #[arg(long)]
    weights: PathBuf,
    /// Network manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory, created if needed.
    #[arg(long)]
    out: PathBuf,
    /// Added to every level's content weight; within [-0.1, 0.2].
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha_offset: f64,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    preset: Preset,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// PatchMatch sweeps per level.
    #[arg(long)]
    sweeps: Option<usize>,
    /// Iteration budget of each deconvolution.
    #[arg(long)]
    deconv_iters: Option<usize>,
    /// Also write diagnostics.txt.
    #[arg(long)]
    diagnostics: bool,
}

enum Failure {
    Missing(PathBuf),
    Format(String),
    Pipeline(String),
    Output(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Missing(_) => 2,
            Failure::Format(_) => 3,
            Failure::Pipeline(_) => 4,
            Failure::Output(_) => 5,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Missing(p) => format!("input file not found: {}", p.display()),
            Failure::Format(m) | Failure::Pipeline(m) | Failure::Output(m) => m.clone(),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => Failure::Missing(path.to_path_buf()),
        _ => Failure::Format(format!("{}: {e}", path.display())),
    })
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Image, Failure> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Failure::Format(format!("{}: {e}", path.display())))?
        .to_rgb8();
    Image::from_rgb_bytes(img.height() as usize, img.width() as usize, img.as_raw())
        .map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(&path, bytes).map_err(|e| Failure::Output(format!("{}: {e}", path.display())))
}

fn write_png(path: PathBuf, img: &Image) -> Result<(), Failure> {
    image::save_buffer_with_format(
        &path,
        &img.to_rgb_bytes(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|e| Failure::Output(format!("{}: {e}", path.display())))
}

fn config(args: &Args) -> Result<PipelineConfig, Failure> {
    let alpha = match args.preset {
        Preset::Default => AlphaSchedule::default(),
        Preset::Photo => AlphaSchedule::photo(),
        Preset::Identical => AlphaSchedule::identical(),
    };
    // The photo preset already carries its own +0.1.
    let offset = alpha.offset() + args.alpha_offset;
    let alpha = alpha
        .with_offset(offset)
        .map_err(|e| Failure::Pipeline(e.to_string()))?;
    let mut cfg = PipelineConfig {
        alpha,
        seed: args.seed,
        mode: match args.mode {
            ModeArg::Full => Mode::Full,
            ModeArg::ColorTransfer => Mode::ColorTransfer,
        },
        ..PipelineConfig::default()
    };
    if let Some(sweeps) = args.sweeps {
        cfg.sweeps = sweeps;
    }
    if let Some(iters) = args.deconv_iters {
        cfg.deconv.max_iterations = iters;
    }
    Ok(cfg)
}

fn execute(args: &Args) -> Result<(), Failure> {
    // Check every input exists before decoding any of them.
    let inputs = [&args.content, &args.style, &args.manifest, &args.weights];
    if let Some(missing) = inputs.iter().find(|p| !p.exists()) {
        return Err(Failure::Missing(missing.to_path_buf()));
    }
    let cfg = config(args)?;
    let a = decode_png(&args.content, &read(&args.content)?)?;
    let b_prime = decode_png(&args.style, &read(&args.style)?)?;
    let net = load_network(&read(&args.manifest)?, &read(&args.weights)?).map_err(|e| {
        Failure::Format(format!(
            "{} / {}: {e}",
            args.manifest.display(),
            args.weights.display()
        ))
    })?;

    let result = run(&a, &b_prime, &net, &cfg).map_err(|e| Failure::Pipeline(e.to_string()))?;

    fs::create_dir_all(&args.out).map_err(|e| Failure::Output(format!("{}: {e}", args.out.display())))?;
    write_png(args.out.join("A_prime.png"), &result.a_prime)?;
    write_png(args.out.join("B.png"), &result.b)?;
    write(args.out.join("phi_ab.nnf"), &encode_nnf(&result.phi_ab))?;
    write(args.out.join("phi_ba.nnf"), &encode_nnf(&result.phi_ba))?;
    if args.diagnostics {
        write(args.out.join("diagnostics.txt"), result.diagnostics.to_text().as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("deep-analogy: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
