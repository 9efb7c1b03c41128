//! Synthetic scene and bandwidth traces.
//!
//! A scene trace stands in for a decoded video: each slot carries the
//! similarity to the previous frame, the ground-truth object count and the
//! ROI blocks a lightweight pre-detector would produce. Bandwidth traces are
//! i.i.d. Gaussian draws clamped from below.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::fmt::real;
use crate::rng::{derive_seed, rng_from_seed};

/// Pixel count of a native 640×480 frame.
pub const NATIVE_FRAME_PIXELS: u64 = 307_200;

const MIN_BLOCK_FRACTION: f64 = 0.02;
const MAX_BLOCK_FRACTION: f64 = 0.35;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    /// Fraction of the native frame covered by this block.
    pub pixel_fraction: f64,
    /// Bounding boxes inside the block.
    pub density: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSlot {
    pub slot: usize,
    /// Hash similarity to the previous frame, in `[0, 1]`.
    pub similarity: f64,
    pub object_count: u32,
    pub blocks: Vec<BlockSpec>,
    pub full_frame_pixels: u64,
}

impl SceneSlot {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidSlot {
            slot: self.slot,
            reason,
        };
        if !(0.0..=1.0).contains(&self.similarity) {
            return Err(fail(format!("h={} outside [0,1]", self.similarity)));
        }
        if self.blocks.is_empty() {
            return Err(fail("slot has no blocks".into()));
        }
        if self.full_frame_pixels == 0 {
            return Err(fail("full_frame_pixels must be > 0".into()));
        }
        let mut fraction_sum = 0.0;
        let mut density_sum = 0u64;
        for (i, b) in self.blocks.iter().enumerate() {
            if !(b.pixel_fraction > 0.0 && b.pixel_fraction <= 1.0) {
                return Err(fail(format!(
                    "block {i} pixel_fraction={} outside (0,1]",
                    b.pixel_fraction
                )));
            }
            fraction_sum += b.pixel_fraction;
            density_sum += u64::from(b.density);
        }
        if fraction_sum > 1.0 + 1e-12 {
            return Err(fail(format!("block fractions sum to {fraction_sum} > 1")));
        }
        if density_sum != u64::from(self.object_count) {
            return Err(fail(format!(
                "block densities sum to {density_sum}, object count is {}",
                self.object_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGenParams {
    pub max_objects: u32,
    /// Probability the object count steps up by one.
    pub step_up: f64,
    /// Probability the object count steps down by one.
    pub step_down: f64,
    pub motion_mean: f64,
    pub motion_sd: f64,
    /// Multiplier on the sampled motion; 0 yields a static scene.
    pub motion_scale: f64,
    /// Objects per ROI block.
    pub cluster_size: u32,
}

impl Default for SceneGenParams {
    fn default() -> Self {
        Self {
            max_objects: 12,
            step_up: 0.2,
            step_down: 0.2,
            motion_mean: 0.15,
            motion_sd: 0.15,
            motion_scale: 1.0,
            cluster_size: 3,
        }
    }
}

impl SceneGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_objects == 0 {
            return Err(invalid("scene.max_objects", "must be >= 1"));
        }
        for (name, p) in [("scene.step_up", self.step_up), ("scene.step_down", self.step_down)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(name, format!("must be in [0,1] (got {p})")));
            }
        }
        if self.step_up + self.step_down > 1.0 {
            return Err(invalid("scene.step_up", "step_up + step_down must be <= 1"));
        }
        if !(self.step_up > 0.0 && self.step_down > 0.0) {
            return Err(invalid("scene.step_up", "both step probabilities must be > 0"));
        }
        if !self.motion_mean.is_finite() {
            return Err(invalid("scene.motion_mean", "must be finite"));
        }
        if !(self.motion_sd >= 0.0 && self.motion_sd.is_finite()) {
            return Err(invalid("scene.motion_sd", "must be >= 0"));
        }
        if !(self.motion_scale >= 0.0 && self.motion_scale.is_finite()) {
            return Err(invalid("scene.motion_scale", "must be >= 0"));
        }
        if self.cluster_size == 0 {
            return Err(invalid("scene.cluster_size", "must be >= 1"));
        }
        Ok(())
    }

    /// Number of ROI blocks produced for a given object count.
    pub fn blocks_for(&self, objects: u32) -> usize {
        let s = (f64::from(objects) / f64::from(self.cluster_size)).round() as usize;
        s.max(1)
    }

    /// Stationary distribution of the clamped birth-death walk on
    /// `0..=max_objects`: `pi[k+1] / pi[k] = step_up / step_down`.
    pub fn stationary_counts(&self) -> Vec<f64> {
        let ratio = self.step_up / self.step_down;
        let mut pi: Vec<f64> = (0..=self.max_objects)
            .scan(1.0, |w, _| {
                let cur = *w;
                *w *= ratio;
                Some(cur)
            })
            .collect();
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        pi
    }

    /// Expected block count per slot under the stationary walk.
    pub fn mean_block_count(&self) -> f64 {
        self.stationary_counts()
            .iter()
            .enumerate()
            .map(|(k, p)| p * self.blocks_for(k as u32) as f64)
            .sum()
    }
}

pub fn block_fraction(density: u32) -> f64 {
    (0.04 * f64::from(density) + 0.02).clamp(MIN_BLOCK_FRACTION, MAX_BLOCK_FRACTION)
}

pub fn generate_scene_trace(params: &SceneGenParams, seed: u64, slots: usize) -> Result<Vec<SceneSlot>> {
    params.validate()?;
    if slots == 0 {
        return Err(invalid("slots", "must be >= 1"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "scene"));

    // start from the stationary law so there is no burn-in bias
    let pi = params.stationary_counts();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut count = params.max_objects;
    for (k, p) in pi.iter().enumerate() {
        acc += p;
        if u < acc {
            count = k as u32;
            break;
        }
    }

    let mut trace = Vec::with_capacity(slots);
    for slot in 0..slots {
        if slot > 0 {
            let step: f64 = rng.random();
            if step < params.step_down {
                count = count.saturating_sub(1);
            } else if step < params.step_down + params.step_up {
                count = (count + 1).min(params.max_objects);
            }
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        let motion = (params.motion_scale * (params.motion_mean + params.motion_sd * z)).clamp(0.0, 1.0);
        let similarity = 1.0 - motion;

        let n_blocks = params.blocks_for(count);
        let mut densities = vec![0u32; n_blocks];
        let mut remaining = count;
        // one seed object per block, the rest scattered uniformly
        for d in densities.iter_mut() {
            if remaining == 0 {
                break;
            }
            *d = 1;
            remaining -= 1;
        }
        for _ in 0..remaining {
            let i = rng.random_range(0..n_blocks);
            densities[i] += 1;
        }
        let blocks = densities
            .into_iter()
            .map(|density| BlockSpec {
                pixel_fraction: block_fraction(density),
                density,
            })
            .collect();
        trace.push(SceneSlot {
            slot,
            similarity,
            object_count: count,
            blocks,
            full_frame_pixels: NATIVE_FRAME_PIXELS,
        });
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthParams {
    pub mean: f64,
    pub sd: f64,
    pub floor: f64,
}

impl Default for BandwidthParams {
    fn default() -> Self {
        Self {
            mean: 10.0,
            sd: 5.0,
            floor: 0.5,
        }
    }
}

impl BandwidthParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean > 0.0 && self.mean.is_finite()) {
            return Err(invalid("bandwidth.rho", "must be > 0"));
        }
        if !(self.sd >= 0.0 && self.sd.is_finite()) {
            return Err(invalid("bandwidth.sigma", "must be >= 0"));
        }
        if !(self.floor > 0.0 && self.floor < self.mean) {
            return Err(invalid("bandwidth.b_min", "must satisfy 0 < b_min < rho"));
        }
        Ok(())
    }
}

/// Channel capacity per slot, in MB/s.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthTrace {
    pub samples: Vec<f64>,
    pub params: BandwidthParams,
}

impl BandwidthTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn generate_bandwidth_trace(params: &BandwidthParams, seed: u64, slots: usize) -> Result<BandwidthTrace> {
    params.validate()?;
    if slots == 0 {
        return Err(invalid("slots", "must be >= 1"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "bandwidth"));
    let samples = (0..slots)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (params.mean + params.sd * z).max(params.floor)
        })
        .collect();
    Ok(BandwidthTrace {
        samples,
        params: params.clone(),
    })
}

/// A scene trace together with its bandwidth series.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePair {
    pub scene: Vec<SceneSlot>,
    pub bandwidth: BandwidthTrace,
}

impl TracePair {
    pub fn new(scene: Vec<SceneSlot>, bandwidth: BandwidthTrace) -> Result<Self> {
        if scene.len() != bandwidth.len() {
            return Err(Error::TraceFormat(format!(
                "scene has {} slots but bandwidth has {}",
                scene.len(),
                bandwidth.len()
            )));
        }
        if scene.is_empty() {
            return Err(Error::TraceFormat("trace is empty".into()));
        }
        Ok(Self { scene, bandwidth })
    }

    pub fn generate(scene: &SceneGenParams, bandwidth: &BandwidthParams, seed: u64, slots: usize) -> Result<Self> {
        Self::new(
            generate_scene_trace(scene, seed, slots)?,
            generate_bandwidth_trace(bandwidth, seed, slots)?,
        )
    }

    pub fn len(&self) -> usize {
        self.scene.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scene.is_empty()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            scene: self.scene[range.clone()].to_vec(),
            bandwidth: BandwidthTrace {
                samples: self.bandwidth.samples[range].to_vec(),
                params: self.bandwidth.params.clone(),
            },
        }
    }
}

/// Splits into a contiguous training prefix of `floor(fraction * T)` slots
/// and the remaining test suffix. Slot indices are preserved.
pub fn split_trace(pair: &TracePair, train_fraction: f64) -> Result<(TracePair, TracePair)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(
            "train_fraction",
            format!("must be in (0,1) (got {train_fraction})"),
        ));
    }
    if pair.scene.len() != pair.bandwidth.len() {
        return Err(Error::TraceFormat("scene and bandwidth lengths differ".into()));
    }
    let t = pair.len();
    let cut = (train_fraction * t as f64).floor() as usize;
    if cut == 0 || cut == t {
        return Err(invalid(
            "train_fraction",
            format!("split of {t} slots at {train_fraction} leaves an empty part"),
        ));
    }
    Ok((pair.slice(0..cut), pair.slice(cut..t)))
}

const CSV_HEADER: [&str; 5] = ["slot", "h", "objects", "bandwidth", "blocks"];

/// Writes the trace CSV. A `#` preamble line carries the bandwidth generator
/// parameters; the header row follows.
pub fn write_trace(pair: &TracePair, path: &Path) -> Result<()> {
    for s in &pair.scene {
        s.validate()?;
    }
    if pair.scene.len() != pair.bandwidth.len() {
        return Err(Error::TraceFormat("scene and bandwidth lengths differ".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    let p = &pair.bandwidth.params;
    writeln!(
        out,
        "# rho={} sigma={} b_min={}",
        real(p.mean),
        real(p.sd),
        real(p.floor)
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (s, b) in pair.scene.iter().zip(&pair.bandwidth.samples) {
        let blocks = s
            .blocks
            .iter()
            .map(|blk| format!("{}:{}", real(blk.pixel_fraction), blk.density))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            s.slot.to_string(),
            real(s.similarity),
            s.object_count.to_string(),
            real(*b),
            blocks,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_preamble(line: &str) -> Result<BandwidthParams> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::TraceFormat("missing `# rho=.. sigma=.. b_min=..` preamble".into()))?;
    let mut params = BandwidthParams::default();
    let mut seen = 0;
    for kv in body.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::TraceFormat(format!("bad preamble entry `{kv}`")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::TraceFormat(format!("bad preamble value `{kv}`")))?;
        match k {
            "rho" => params.mean = v,
            "sigma" => params.sd = v,
            "b_min" => params.floor = v,
            _ => return Err(Error::TraceFormat(format!("unknown preamble key `{k}`"))),
        }
        seen += 1;
    }
    if seen != 3 {
        return Err(Error::TraceFormat("preamble must set rho, sigma and b_min".into()));
    }
    Ok(params)
}

pub fn read_trace(path: &Path) -> Result<TracePair> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    if reader.read_line(&mut first)? == 0 {
        return Err(Error::TraceFormat("empty trace file".into()));
    }
    let params = parse_preamble(first.trim_end())?;

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::TraceFormat(format!(
            "expected header `{}`",
            CSV_HEADER.join(",")
        )));
    }

    let mut scene = Vec::new();
    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let bad = |what: &str| Error::InvalidSlot {
            slot: row,
            reason: format!("malformed {what}"),
        };
        if record.len() != CSV_HEADER.len() {
            return Err(bad("row"));
        }
        let slot: usize = record[0].parse().map_err(|_| bad("slot"))?;
        let similarity: f64 = record[1].parse().map_err(|_| bad("h"))?;
        let object_count: u32 = record[2].parse().map_err(|_| bad("objects"))?;
        let bandwidth: f64 = record[3].parse().map_err(|_| bad("bandwidth"))?;
        let blocks = record[4]
            .split(';')
            .map(|item| {
                let (f, d) = item.split_once(':').ok_or_else(|| bad("blocks"))?;
                Ok(BlockSpec {
                    pixel_fraction: f.parse().map_err(|_| bad("block fraction"))?,
                    density: d.parse().map_err(|_| bad("block density"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let s = SceneSlot {
            slot,
            similarity,
            object_count,
            blocks,
            full_frame_pixels: NATIVE_FRAME_PIXELS,
        };
        s.validate()?;
        if !(bandwidth >= params.floor && bandwidth.is_finite()) {
            return Err(Error::InvalidSlot {
                slot,
                reason: format!("bandwidth {bandwidth} below b_min {}", params.floor),
            });
        }
        scene.push(s);
        samples.push(bandwidth);
    }
    if scene.is_empty() {
        return Err(Error::TraceFormat("trace has no rows".into()));
    }
    TracePair::new(scene, BandwidthTrace { samples, params })
}
