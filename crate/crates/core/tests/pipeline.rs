mod common;

use deep_analogy::fuse::AlphaSchedule;
use deep_analogy::io::{decode_nnf, encode_nnf};
use deep_analogy::net::toy::ToyNetwork;
use deep_analogy::pipeline::wls_refine;
use deep_analogy::{run, Error, Image, Mode, PipelineConfig};

/// Textured content on a flat gray frame of width `border`.
fn framed(side: usize, border: usize, seed: u64) -> Image {
    let inner = common::test_image(side, side, seed);
    Image::from_fn(side, side, |r, c| {
        if r < border || c < border || r >= side - border || c >= side - border {
            [128, 128, 128]
        } else {
            inner.get(r, c)
        }
    })
}

/// A pure camera shift is a same-scene pair, which calls for the all-ones
/// alpha profile.
#[test]
fn planted_translation_is_recovered() {
    let net = ToyNetwork::new(3, 16, 0).build();
    let bp = framed(64, 16, 1);
    let a = common::translate_image(&bp, 8, 8);
    let cfg = PipelineConfig {
        alpha: AlphaSchedule::identical(),
        ..PipelineConfig::default()
    };
    let result = run(&a, &bp, &net, &cfg).unwrap();
    // Content of A sits in rows/cols 24..56 and came from B' at -8.
    let mut hits = 0;
    let mut total = 0;
    for r in 24..56 {
        for c in 24..56 {
            total += 1;
            let q = result.phi_ab.get(r, c);
            hits += usize::from(q.row + 8 == r && q.col + 8 == c);
        }
    }
    let rate = hits as f64 / total as f64;
    assert!(rate >= 0.9, "recovered {:.1}%", 100.0 * rate);
}

#[test]
fn outputs_have_input_shapes() {
    let net = ToyNetwork::new(2, 8, 1).build();
    let a = common::test_image(24, 32, 2);
    let bp = common::test_image(16, 20, 3);
    let result = run(&a, &bp, &net, &PipelineConfig::default()).unwrap();
    assert_eq!((result.a_prime.height(), result.a_prime.width()), (24, 32));
    assert_eq!((result.b.height(), result.b.width()), (16, 20));
    assert_eq!((result.phi_ab.height(), result.phi_ab.width()), (24, 32));
    assert_eq!((result.phi_ab.target_height(), result.phi_ab.target_width()), (16, 20));
    assert_eq!((result.phi_ba.height(), result.phi_ba.width()), (16, 20));
    assert_eq!((result.phi_ba.target_height(), result.phi_ba.target_width()), (24, 32));
    assert_eq!(result.diagnostics.levels.len(), 2);
    assert_eq!(result.timings.len(), 2);
    assert_eq!(decode_nnf(&encode_nnf(&result.phi_ab)).unwrap(), result.phi_ab);
}

#[test]
fn diagnostics_are_well_formed() {
    let net = ToyNetwork::new(3, 8, 4).build();
    let a = common::test_image(32, 32, 5);
    let bp = common::test_image(32, 32, 6);
    let cfg = PipelineConfig {
        sweeps: 4,
        ..PipelineConfig::default()
    };
    let result = run(&a, &bp, &net, &cfg).unwrap();
    let levels: Vec<usize> = result.diagnostics.levels.iter().map(|l| l.level).collect();
    assert_eq!(levels, vec![3, 2, 1]);
    for lv in &result.diagnostics.levels {
        for costs in [&lv.ab_costs, &lv.ba_costs] {
            assert_eq!(costs.len(), 5);
            assert!(costs.windows(2).all(|w| w[1] <= w[0]));
        }
        assert_eq!(lv.ab_deconv.is_some(), lv.level > 1);
        if let Some(trace) = &lv.ab_deconv {
            assert!(trace.losses.windows(2).all(|w| w[1] <= w[0]));
        }
    }
    let text = result.diagnostics.to_text();
    assert!(text.lines().all(|l| l.starts_with("kind=") && l.contains("level=")));
    assert!(text.contains("kind=deconv_stop level=1 dir=ba"));
}

#[test]
fn seed_changes_the_result() {
    let net = ToyNetwork::new(2, 8, 7).build();
    let a = common::test_image(16, 16, 8);
    let bp = common::test_image(16, 16, 9);
    let first = run(&a, &bp, &net, &PipelineConfig::default()).unwrap();
    let again = run(&a, &bp, &net, &PipelineConfig::default()).unwrap();
    let other = run(&a, &bp, &net, &PipelineConfig { seed: 1, ..PipelineConfig::default() }).unwrap();
    assert_eq!(first.diagnostics, again.diagnostics);
    assert_ne!(first.diagnostics, other.diagnostics);
}

#[test]
fn color_transfer_mode_refines_the_full_output() {
    let net = ToyNetwork::new(2, 8, 10).build();
    let a = common::test_image(16, 16, 11);
    let bp = common::test_image(16, 16, 12);
    let full = run(&a, &bp, &net, &PipelineConfig::default()).unwrap();
    let cfg = PipelineConfig {
        mode: Mode::ColorTransfer,
        ..PipelineConfig::default()
    };
    let refined = run(&a, &bp, &net, &cfg).unwrap();
    assert_eq!(refined.phi_ab, full.phi_ab);
    assert_eq!(refined.a_prime, wls_refine(&a, &full.a_prime, &cfg.wls).unwrap());
    assert_eq!(refined.b, wls_refine(&bp, &full.b, &cfg.wls).unwrap());
}

#[test]
fn indivisible_size_is_a_dimension_error() {
    let net = ToyNetwork::new(3, 4, 1).build();
    let a = common::test_image(30, 32, 1);
    let err = run(&a, &a, &net, &PipelineConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)), "{err}");
    assert!(err.to_string().contains("divisible by 4"), "{err}");
}

#[test]
fn missing_level_configuration_is_rejected() {
    let net = ToyNetwork::new(3, 4, 1).build();
    let a = common::test_image(16, 16, 1);
    let mut cfg = PipelineConfig::default();
    cfg.search_radius.remove(&2);
    assert!(matches!(run(&a, &a, &net, &cfg), Err(Error::Config(_))));
}
