//! Writes a small random network in the VGG layout.
//!
//! ```text
//! cargo run -p deep-analogy --example make_toy_net -- <out-dir> [levels] [channels] [seed]
//! ```
//!
//! Produces `<out-dir>/toy.manifest` and `<out-dir>/toy.diaw`.

use std::path::PathBuf;
use std::process::ExitCode;

use deep_analogy::net::toy::ToyNetwork;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(out) = args.first().map(PathBuf::from) else {
        eprintln!("usage: make_toy_net <out-dir> [levels] [channels] [seed]");
        return ExitCode::from(2);
    };
    let num = |i: usize, default: u64| args.get(i).map_or(Ok(default), |s| s.parse::<u64>());
    let (Ok(levels), Ok(channels), Ok(seed)) = (num(1, 3), num(2, 16), num(3, 0)) else {
        eprintln!("levels, channels and seed must be non-negative integers");
        return ExitCode::from(2);
    };
    let toy = ToyNetwork::new(levels as usize, channels as usize, seed);
    let written = std::fs::create_dir_all(&out)
        .and_then(|_| std::fs::write(out.join("toy.manifest"), toy.manifest()))
        .and_then(|_| std::fs::write(out.join("toy.diaw"), toy.weights()));
    if let Err(e) = written {
        eprintln!("{}: {e}", out.display());
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
