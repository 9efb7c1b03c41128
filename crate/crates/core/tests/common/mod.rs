#![allow(dead_code)]

use dcrl_core::env::{BlockConfig, Decision, ObservationState, TrackingMode, TrackingState};
use dcrl_core::trace::{block_fraction, BlockSpec, SceneSlot, NATIVE_FRAME_PIXELS};
use rand::Rng;

pub fn random_slot<R: Rng>(rng: &mut R) -> SceneSlot {
    let s = rng.random_range(1..=4);
    let blocks: Vec<BlockSpec> = (0..s)
        .map(|_| {
            let density = rng.random_range(1..=8);
            BlockSpec {
                pixel_fraction: block_fraction(density),
                density,
            }
        })
        .collect();
    SceneSlot {
        slot: 0,
        similarity: rng.random_range(0.0..=1.0),
        object_count: blocks.iter().map(|b| b.density).sum(),
        blocks,
        full_frame_pixels: NATIVE_FRAME_PIXELS,
    }
}

pub fn random_decision<R: Rng>(slot: &SceneSlot, rng: &mut R) -> Decision {
    let kind = rng.random_range(0..5);
    let mut cfg = || BlockConfig::from_index(rng.random_range(0..BlockConfig::COUNT));
    match kind {
        0 => Decision::Track(TrackingMode::Skip),
        1 => Decision::Track(TrackingMode::Kcf),
        2 => Decision::Track(TrackingMode::Csrt),
        3 => Decision::full_frame(cfg()),
        _ => Decision::Offload {
            roi: true,
            configs: slot.blocks.iter().map(|_| cfg()).collect(),
        },
    }
}

pub fn random_observation<R: Rng>(slot: &SceneSlot, bandwidth: f64, rng: &mut R) -> ObservationState {
    let tracking = TrackingState {
        complexity: rng.random_range(0..=12),
        streak: rng.random_range(0..40),
    };
    ObservationState::new(slot, bandwidth, tracking)
}
