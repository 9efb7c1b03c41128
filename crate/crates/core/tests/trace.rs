use dcrl_core::trace::{
    generate_bandwidth_trace, generate_scene_trace, read_trace, split_trace, write_trace, BandwidthParams,
    SceneGenParams, TracePair,
};
use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

#[test]
fn mean_block_count_matches_stationary_walk() {
    let params = SceneGenParams::default();
    // uniform stationary law on 0..=12 objects, round(n/3) blocks with a floor of one
    let exact: f64 = (0..=12u32)
        .map(|n| ((f64::from(n) / 3.0).round()).max(1.0))
        .sum::<f64>()
        / 13.0;
    assert!((exact - 28.0 / 13.0).abs() < 1e-12);
    assert!((params.mean_block_count() - exact).abs() < 1e-12);

    let scene = generate_scene_trace(&params, 7, 10_000).unwrap();
    let mean = scene.iter().map(|s| s.block_count() as f64).sum::<f64>() / scene.len() as f64;
    assert!(
        (mean / exact - 1.0).abs() < 0.10,
        "sample mean {mean}, stationary {exact}"
    );
}

#[test]
fn bandwidth_mean_matches_clamped_normal() {
    let p = BandwidthParams::default();
    let std = Normal::new(0.0, 1.0).unwrap();
    let alpha = (p.floor - p.mean) / p.sd;
    let expected = p.floor * std.cdf(alpha) + p.mean * (1.0 - std.cdf(alpha)) + p.sd * std.pdf(alpha);

    let trace = generate_bandwidth_trace(&p, 11, 20_000).unwrap();
    let n = trace.len() as f64;
    let mean = trace.samples.iter().sum::<f64>() / n;
    // four standard errors of a variance-bounded sample mean
    assert!(
        (mean - expected).abs() < 4.0 * p.sd / n.sqrt(),
        "mean {mean}, expected {expected}"
    );
    assert!((10.0..=10.9).contains(&mean));
    assert!(trace.samples.iter().all(|b| *b >= p.floor));
}

#[test]
fn csv_round_trip_is_exact() {
    let pair = TracePair::generate(&SceneGenParams::default(), &BandwidthParams::default(), 3, 400).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&pair, &path).unwrap();
    assert_eq!(read_trace(&path).unwrap(), pair);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_slots_are_valid(seed in any::<u64>(), slots in 1usize..300, scale in 0.0f64..3.0) {
        let params = SceneGenParams { motion_scale: scale, ..Default::default() };
        let scene = generate_scene_trace(&params, seed, slots).unwrap();
        prop_assert_eq!(scene.len(), slots);
        for (t, s) in scene.iter().enumerate() {
            prop_assert!(s.validate().is_ok());
            prop_assert_eq!(s.slot, t);
            prop_assert!((0.0..=1.0).contains(&s.similarity));
            prop_assert!(s.object_count <= params.max_objects);
            prop_assert_eq!(s.block_count(), params.blocks_for(s.object_count));
            let assigned: u32 = s.blocks.iter().map(|b| b.density).sum();
            prop_assert_eq!(assigned, s.object_count);
            if s.object_count > 0 {
                prop_assert!(s.blocks.iter().all(|b| b.density >= 1));
            }
        }
        for w in scene.windows(2) {
            prop_assert!(w[0].object_count.abs_diff(w[1].object_count) <= 1);
        }
    }

    #[test]
    fn splits_partition_the_trace(seed in any::<u64>(), slots in 2usize..200, frac in 0.05f64..0.95) {
        let pair = TracePair::generate(&SceneGenParams::default(), &BandwidthParams::default(), seed, slots).unwrap();
        match split_trace(&pair, frac) {
            Ok((a, b)) => {
                prop_assert_eq!(a.len() + b.len(), slots);
                prop_assert_eq!(b.scene[0].slot, a.len());
                prop_assert_eq!(&b.bandwidth.samples[..], &pair.bandwidth.samples[a.len()..]);
            }
            Err(_) => {
                let cut = (frac * slots as f64).floor() as usize;
                prop_assert!(cut == 0 || cut == slots);
            }
        }
    }
}
