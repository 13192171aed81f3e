use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deep_analogy::fuse::AlphaSchedule;
use deep_analogy::io::decode_nnf;
use deep_analogy::net::toy::ToyNetwork;
use deep_analogy::{run, Image, PipelineConfig};
use tempfile::TempDir;

struct Fixture {
    dir: TempDir,
    toy: ToyNetwork,
}

fn pattern(h: usize, w: usize, salt: usize) -> Image {
    Image::from_fn(h, w, |r, c| {
        let v = (r * 37 + c * 91 + salt * 53) ^ (r * c + salt);
        [(v % 251) as u8, ((v / 3 + 4 * c) % 241) as u8, ((r * 11 + salt * 7) % 229) as u8]
    })
}

fn save_png(path: &Path, img: &Image) {
    image::save_buffer(path, &img.to_rgb_bytes(), img.width() as u32, img.height() as u32, image::ExtendedColorType::Rgb8)
        .unwrap();
}

fn load_png(path: &Path) -> Image {
    let img = image::open(path).unwrap().to_rgb8();
    Image::from_rgb_bytes(img.height() as usize, img.width() as usize, img.as_raw()).unwrap()
}

impl Fixture {
    fn new(content: &Image, style: &Image) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let toy = ToyNetwork::new(2, 8, 3);
        fs::write(dir.path().join("net.manifest"), toy.manifest()).unwrap();
        fs::write(dir.path().join("net.diaw"), toy.weights()).unwrap();
        save_png(&dir.path().join("a.png"), content);
        save_png(&dir.path().join("b.png"), style);
        Fixture { dir, toy }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, extra: &[&str]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_deep-analogy"));
        cmd.arg("--content")
            .arg(self.path("a.png"))
            .arg("--style")
            .arg(self.path("b.png"))
            .arg("--weights")
            .arg(self.path("net.diaw"))
            .arg("--manifest")
            .arg(self.path("net.manifest"))
            .arg("--out")
            .arg(self.path("out"))
            .args(extra);
        cmd.output().unwrap()
    }
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn toy_run_writes_all_outputs() {
    let fx = Fixture::new(&pattern(16, 24, 1), &pattern(16, 16, 2));
    let out = fx.run(&["--sweeps", "3", "--deconv-iters", "20", "--diagnostics"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let a_prime = load_png(&fx.path("out/A_prime.png"));
    assert_eq!((a_prime.height(), a_prime.width()), (16, 24));
    let b = load_png(&fx.path("out/B.png"));
    assert_eq!((b.height(), b.width()), (16, 16));
    let phi_ab = decode_nnf(&fs::read(fx.path("out/phi_ab.nnf")).unwrap()).unwrap();
    assert_eq!((phi_ab.height(), phi_ab.width(), phi_ab.target_height(), phi_ab.target_width()), (16, 24, 16, 16));
    let phi_ba = decode_nnf(&fs::read(fx.path("out/phi_ba.nnf")).unwrap()).unwrap();
    assert_eq!((phi_ba.height(), phi_ba.width()), (16, 16));
    let diag = fs::read_to_string(fx.path("out/diagnostics.txt")).unwrap();
    assert!(diag.lines().any(|l| l.starts_with("kind=nnf_cost level=2 dir=ab sweep=3 ")));
}

#[test]
fn diagnostics_only_on_request() {
    let fx = Fixture::new(&pattern(8, 8, 1), &pattern(8, 8, 2));
    let out = fx.run(&["--sweeps", "2", "--deconv-iters", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(fx.path("out/A_prime.png").exists());
    assert!(!fx.path("out/diagnostics.txt").exists());
}

#[test]
fn identical_preset_matches_the_library() {
    let a = pattern(16, 16, 4);
    let fx = Fixture::new(&a, &a);
    let out = fx.run(&["--preset", "identical", "--seed", "9"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cfg = PipelineConfig {
        alpha: AlphaSchedule::identical(),
        seed: 9,
        ..PipelineConfig::default()
    };
    let expected = run(&a, &a, &fx.toy.build(), &cfg).unwrap();
    assert_eq!(load_png(&fx.path("out/A_prime.png")), expected.a_prime);
    assert_eq!(load_png(&fx.path("out/B.png")), expected.b);
    assert!(load_png(&fx.path("out/A_prime.png")).max_abs_diff(&a) <= 2);
}

#[test]
fn missing_weights_exit_two() {
    let fx = Fixture::new(&pattern(8, 8, 1), &pattern(8, 8, 2));
    fs::remove_file(fx.path("net.diaw")).unwrap();
    let out = fx.run(&[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains(&fx.path("net.diaw").display().to_string()), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn corrupt_weights_exit_three() {
    let fx = Fixture::new(&pattern(8, 8, 1), &pattern(8, 8, 2));
    let mut bytes = fx.toy.weights();
    bytes.truncate(bytes.len() - 3);
    fs::write(fx.path("net.diaw"), bytes).unwrap();
    let out = fx.run(&[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("truncated"), "{}", stderr(&out));
}

#[test]
fn non_png_input_exit_three() {
    let fx = Fixture::new(&pattern(8, 8, 1), &pattern(8, 8, 2));
    fs::write(fx.path("a.png"), b"not an image").unwrap();
    assert_eq!(fx.run(&[]).status.code(), Some(3));
}

#[test]
fn indivisible_image_exit_four() {
    let fx = Fixture::new(&pattern(9, 8, 1), &pattern(8, 8, 2));
    let out = fx.run(&[]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("divisible"), "{}", stderr(&out));
}

#[test]
fn out_of_range_alpha_offset_exit_four() {
    let fx = Fixture::new(&pattern(8, 8, 1), &pattern(8, 8, 2));
    let out = fx.run(&["--alpha-offset", "0.5"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("alpha offset"), "{}", stderr(&out));
    assert!(!stderr(&out).contains("panicked"));
}
