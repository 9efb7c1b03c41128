//! Frame-level, time-slotted environment.
//!
//! Each slot a frame is either handled on the device by a tracker (or by
//! reusing the previous result) or offloaded to the edge server, whole or as
//! ROI blocks, with a detection model and resolution per transmitted block.

use crate::error::{invalid, Error, Result};
use crate::trace::{SceneSlot, NATIVE_FRAME_PIXELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectionModel {
    Yolov5x,
    Yolov5l,
    Yolov5m,
}

impl DetectionModel {
    /// Most to least accurate.
    pub const ALL: [DetectionModel; 3] = [Self::Yolov5x, Self::Yolov5l, Self::Yolov5m];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Yolov5x => "yolov5x",
            Self::Yolov5l => "yolov5l",
            Self::Yolov5m => "yolov5m",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    P640,
    P480,
    P320,
}

impl Resolution {
    /// Highest to lowest.
    pub const ALL: [Resolution; 3] = [Self::P640, Self::P480, Self::P320];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Full-frame pixel count at this resolution (4:3).
    pub fn pixels(self) -> u64 {
        match self {
            Self::P640 => NATIVE_FRAME_PIXELS,
            Self::P480 => 172_800,
            Self::P320 => 76_800,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::P640 => "640p",
            Self::P480 => "480p",
            Self::P320 => "320p",
        }
    }
}

/// Detection model and offloading resolution for one transmitted block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockConfig {
    pub model: DetectionModel,
    pub resolution: Resolution,
}

impl BlockConfig {
    pub const COUNT: usize = 9;

    /// Ordered `(x,640), (x,480), (x,320), (l,640), ..., (m,320)`.
    pub fn from_index(i: usize) -> Self {
        assert!(i < Self::COUNT, "config index {i} out of range");
        Self {
            model: DetectionModel::ALL[i / 3],
            resolution: Resolution::ALL[i % 3],
        }
    }

    pub fn index(self) -> usize {
        self.model.index() * 3 + self.resolution.index()
    }

    pub fn all() -> impl Iterator<Item = BlockConfig> {
        (0..Self::COUNT).map(Self::from_index)
    }

    pub const BEST: BlockConfig = BlockConfig {
        model: DetectionModel::Yolov5x,
        resolution: Resolution::P640,
    };
}

impl std::fmt::Display for BlockConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.model.name(), self.resolution.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackingMode {
    Skip,
    Kcf,
    Csrt,
}

impl TrackingMode {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// The five frame-processing actions of the offloading controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Skip,
    Kcf,
    Csrt,
    OffloadFull,
    OffloadRoi,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [Self::Skip, Self::Kcf, Self::Csrt, Self::OffloadFull, Self::OffloadRoi];

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_offload(self) -> bool {
        matches!(self, Self::OffloadFull | Self::OffloadRoi)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Skip => "skip",
            Self::Kcf => "kcf",
            Self::Csrt => "csrt",
            Self::OffloadFull => "offload_full",
            Self::OffloadRoi => "offload_roi",
        }
    }
}

/// A fully specified per-slot decision: either a local tracking mode, or an
/// offload with one configuration per transmitted block.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Track(TrackingMode),
    Offload { roi: bool, configs: Vec<BlockConfig> },
}

impl Decision {
    pub fn action(&self) -> Action {
        match self {
            Self::Track(TrackingMode::Skip) => Action::Skip,
            Self::Track(TrackingMode::Kcf) => Action::Kcf,
            Self::Track(TrackingMode::Csrt) => Action::Csrt,
            Self::Offload { roi: false, .. } => Action::OffloadFull,
            Self::Offload { roi: true, .. } => Action::OffloadRoi,
        }
    }

    pub fn full_frame(config: BlockConfig) -> Self {
        Self::Offload {
            roi: false,
            configs: vec![config],
        }
    }

    pub fn validate(&self, slot: &SceneSlot) -> Result<()> {
        if let Self::Offload { roi, configs } = self {
            let expected = if *roi { slot.block_count() } else { 1 };
            if configs.len() != expected {
                return Err(Error::InvalidDecision(format!(
                    "{} configs for {expected} transmitted block(s)",
                    configs.len()
                )));
            }
        }
        Ok(())
    }
}

/// A per-(model, resolution) table.
pub type ConfigTable = [[f64; 3]; 3];

fn lookup(table: &ConfigTable, c: BlockConfig) -> f64 {
    table[c.model.index()][c.resolution.index()]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub f_device: f64,
    pub f_edge: f64,
    /// Tracking intensity per MB, indexed by [`TrackingMode`]; Skip is 0.
    pub u_track: [f64; 3],
    pub u_roi: f64,
    /// Pre-detection intensity.
    pub u_dnn: f64,
    pub u_infer: ConfigTable,
    /// MB per pixel.
    pub tau: f64,
    pub data_scale: f64,
    /// Slot length and per-frame deadline, seconds.
    pub l_max: f64,
    pub acc_detect: ConfigTable,
    /// Base accuracy of KCF and CSRT.
    pub acc_track_kcf: f64,
    pub acc_track_csrt: f64,
    pub track_decay: f64,
    pub skip_exponent: f64,
    pub roi_penalty: f64,
    pub acc_threshold: f64,
    pub lambda: f64,
    pub eta: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            f_device: 1.0,
            f_edge: 2.0,
            u_track: [0.0, 0.02, 0.10],
            u_roi: 0.02,
            u_dnn: 0.01,
            u_infer: [[0.10, 0.095, 0.09], [0.07, 0.065, 0.06], [0.04, 0.035, 0.03]],
            tau: 6.25e-4,
            data_scale: 0.03125,
            l_max: 1.0,
            acc_detect: [[0.90, 0.85, 0.78], [0.86, 0.81, 0.74], [0.82, 0.77, 0.70]],
            acc_track_kcf: 0.68,
            acc_track_csrt: 0.78,
            track_decay: 0.97,
            skip_exponent: 2.0,
            roi_penalty: 0.95,
            acc_threshold: 0.5,
            lambda: 0.5,
            eta: 1.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("system.f_device", self.f_device),
            ("system.f_edge", self.f_edge),
            ("system.tau", self.tau),
            ("system.data_scale", self.data_scale),
            ("system.l_max", self.l_max),
            ("system.skip_exponent", self.skip_exponent),
            ("system.eta", self.eta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be > 0 (got {v})")));
            }
        }
        let nonneg = [
            ("system.u_track.kcf", self.u_track[1]),
            ("system.u_track.csrt", self.u_track[2]),
            ("system.u_roi", self.u_roi),
            ("system.u_dnn", self.u_dnn),
            ("system.lambda", self.lambda),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be >= 0 (got {v})")));
            }
        }
        if self.u_track[0] != 0.0 {
            return Err(invalid("system.u_track.skip", "skip intensity must be 0"));
        }
        let unit = [
            ("system.acc_track.kcf", self.acc_track_kcf),
            ("system.acc_track.csrt", self.acc_track_csrt),
            ("system.track_decay", self.track_decay),
            ("system.roi_penalty", self.roi_penalty),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(name, format!("must be in (0,1] (got {v})")));
            }
        }
        if !(0.0..1.0).contains(&self.acc_threshold) {
            return Err(invalid("system.acc_threshold", "must be in [0,1)"));
        }
        if self.acc_track_csrt <= self.acc_track_kcf {
            return Err(invalid("system.acc_track.csrt", "CSRT accuracy must exceed KCF"));
        }
        for m in 0..3 {
            for r in 0..3 {
                let a = self.acc_detect[m][r];
                if !(a > 0.0 && a <= 1.0) {
                    return Err(invalid("system.acc_detect", format!("entry {a} outside (0,1]")));
                }
                let u = self.u_infer[m][r];
                if !(u > 0.0 && u.is_finite()) {
                    return Err(invalid("system.u_infer", format!("entry {u} must be > 0")));
                }
                // better model / resolution: accuracy and intensity never lower
                if m > 0 && (a > self.acc_detect[m - 1][r] || u > self.u_infer[m - 1][r]) {
                    return Err(invalid("system.acc_detect", "tables must be monotone in model quality"));
                }
                if r > 0 && (a > self.acc_detect[m][r - 1] || u > self.u_infer[m][r - 1]) {
                    return Err(invalid("system.acc_detect", "tables must be monotone in resolution"));
                }
            }
        }
        Ok(())
    }

    pub fn acc_track(&self, mode: TrackingMode) -> f64 {
        match mode {
            TrackingMode::Skip => 1.0,
            TrackingMode::Kcf => self.acc_track_kcf,
            TrackingMode::Csrt => self.acc_track_csrt,
        }
    }

    /// Native-resolution frame size in MB, used by on-device computations.
    pub fn raw_frame_mb(&self, slot: &SceneSlot) -> f64 {
        self.data_scale * self.tau * slot.full_frame_pixels as f64
    }
}

/// MB transmitted for each block of an offload.
pub fn block_payloads(slot: &SceneSlot, roi: bool, configs: &[BlockConfig], params: &SystemParams) -> Result<Vec<f64>> {
    let scale = params.data_scale * params.tau;
    if roi {
        if configs.len() != slot.block_count() {
            return Err(Error::InvalidDecision(format!(
                "{} resolutions for {} blocks",
                configs.len(),
                slot.block_count()
            )));
        }
        Ok(slot
            .blocks
            .iter()
            .zip(configs)
            .map(|(b, c)| scale * b.pixel_fraction * c.resolution.pixels() as f64)
            .collect())
    } else {
        match configs {
            [c] => Ok(vec![scale * c.resolution.pixels() as f64]),
            _ => Err(Error::InvalidDecision(format!(
                "full-frame offload needs one configuration, got {}",
                configs.len()
            ))),
        }
    }
}

/// Total offload payload `d_t` in MB.
pub fn offload_data_size(slot: &SceneSlot, roi: bool, configs: &[BlockConfig], params: &SystemParams) -> Result<f64> {
    Ok(block_payloads(slot, roi, configs, params)?.iter().sum())
}

/// Latency components of one slot, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Latency {
    pub roi: f64,
    pub dnn: f64,
    pub trans: f64,
    pub edge: f64,
    pub local: f64,
    pub total: f64,
}

impl Latency {
    /// Recombines the components for the given action.
    pub fn recombine(&self, action: Action) -> f64 {
        if action.is_offload() {
            let roi = if action == Action::OffloadRoi { self.roi } else { 0.0 };
            roi + self.dnn + self.trans + self.edge
        } else {
            self.local
        }
    }
}

pub fn total_latency(
    decision: &Decision,
    slot: &SceneSlot,
    bandwidth: f64,
    params: &SystemParams,
) -> Result<(Latency, f64)> {
    decision.validate(slot)?;
    let raw = params.raw_frame_mb(slot);
    match decision {
        Decision::Track(mode) => {
            let local = params.u_track[mode.index()] * raw / params.f_device;
            Ok((
                Latency {
                    local,
                    total: local,
                    ..Default::default()
                },
                0.0,
            ))
        }
        Decision::Offload { roi, configs } => {
            let payloads = block_payloads(slot, *roi, configs, params)?;
            let d: f64 = payloads.iter().sum();
            let roi_time = if *roi {
                params.u_roi * raw / params.f_device
            } else {
                0.0
            };
            let dnn = params.u_dnn * raw / params.f_device;
            let trans = d / bandwidth;
            let edge = payloads
                .iter()
                .zip(configs)
                .map(|(d_i, c)| lookup(&params.u_infer, *c) * d_i / params.f_edge)
                .sum::<f64>();
            Ok((
                Latency {
                    roi: roi_time,
                    dnn,
                    trans,
                    edge,
                    local: 0.0,
                    total: roi_time + dnn + trans + edge,
                },
                d,
            ))
        }
    }
}

/// Tracking state carried between slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrackingState {
    /// Objects in the most recent successfully offloaded frame.
    pub complexity: u32,
    /// Consecutive slots since that frame.
    pub streak: u32,
}

/// What the offloading controller observes at the start of a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationState {
    pub similarity: f64,
    pub bandwidth: f64,
    pub complexity: u32,
    pub streak: u32,
}

impl ObservationState {
    pub fn new(slot: &SceneSlot, bandwidth: f64, tracking: TrackingState) -> Self {
        Self {
            similarity: slot.similarity,
            bandwidth,
            complexity: tracking.complexity,
            streak: tracking.streak,
        }
    }
}

/// Detection accuracy of the slot before the deadline rule is applied.
pub fn frame_accuracy(decision: &Decision, slot: &SceneSlot, obs: &ObservationState, params: &SystemParams) -> f64 {
    let staleness = params.track_decay.powi(obs.streak as i32 + 1);
    let acc = match decision {
        Decision::Track(TrackingMode::Skip) => slot.similarity.powf(params.skip_exponent) * staleness,
        Decision::Track(mode) => params.acc_track(*mode) * staleness,
        Decision::Offload { roi, configs } => {
            let mean = configs.iter().map(|c| lookup(&params.acc_detect, *c)).sum::<f64>() / configs.len() as f64;
            if *roi {
                params.roi_penalty * mean
            } else {
                mean
            }
        }
    };
    acc.clamp(0.0, 1.0)
}

pub fn success_flag(l_total: f64, acc: f64, params: &SystemParams) -> bool {
    l_total <= params.l_max && acc >= params.acc_threshold
}

pub fn slot_reward(acc: f64, l_total: f64, params: &SystemParams) -> f64 {
    acc + params.lambda * ((params.l_max - l_total) / params.l_max).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub action: Action,
    pub latency: Latency,
    /// Accuracy after the deadline rule: 0 when the frame missed `l_max`.
    pub acc: f64,
    pub success: bool,
    pub reward: f64,
    /// Offloaded payload in MB (0 for local processing).
    pub payload_mb: f64,
    pub blocks_sent: usize,
}

pub fn step(
    slot: &SceneSlot,
    bandwidth: f64,
    obs: &ObservationState,
    decision: &Decision,
    params: &SystemParams,
) -> Result<(StepOutcome, TrackingState)> {
    if !(bandwidth > 0.0) {
        return Err(invalid("bandwidth", format!("must be > 0 (got {bandwidth})")));
    }
    let (latency, payload_mb) = total_latency(decision, slot, bandwidth, params)?;
    let mut acc = frame_accuracy(decision, slot, obs, params);
    if latency.total > params.l_max {
        // abandoned: no result returns
        acc = 0.0;
    }
    let success = success_flag(latency.total, acc, params);
    let reward = slot_reward(acc, latency.total, params);
    let action = decision.action();
    let blocks_sent = match decision {
        Decision::Offload { configs, .. } => configs.len(),
        Decision::Track(_) => 0,
    };

    let next = if action.is_offload() && success {
        TrackingState {
            complexity: slot.object_count,
            streak: 0,
        }
    } else {
        TrackingState {
            complexity: obs.complexity,
            streak: obs.streak + 1,
        }
    };
    Ok((
        StepOutcome {
            action,
            latency,
            acc,
            success,
            reward,
            payload_mb,
            blocks_sent,
        },
        next,
    ))
}

/// `(1/T) Σq + η Σ(q·acc) / Σq`, with the second term 0 when nothing succeeded.
pub fn episode_utility(outcomes: &[StepOutcome], eta: f64) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(invalid("outcomes", "episode must contain at least one slot"));
    }
    let successes = outcomes.iter().filter(|o| o.success).count();
    let rate = successes as f64 / outcomes.len() as f64;
    if successes == 0 {
        return Ok(rate);
    }
    let acc_sum: f64 = outcomes.iter().filter(|o| o.success).map(|o| o.acc).sum();
    Ok(rate + eta * acc_sum / successes as f64)
}
