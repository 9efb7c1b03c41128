//! Run configuration: a flat `key = value` text format with dotted
//! namespaces. `#` starts a comment. Absent keys take defaults, unknown keys
//! are rejected, and [`RunConfig::to_text`] emits every key so the echoed
//! file reproduces the run.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cmab::CmabParams;
use crate::ddqn::DdqnHyper;
use crate::env::{DetectionModel, Resolution, SystemParams};
use crate::error::{invalid, Error, Result};
use crate::fmt::real;
use crate::orchestrator::{ExperimentSettings, Policy};
use crate::trace::{BandwidthParams, SceneGenParams};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemParams,
    pub scene: SceneGenParams,
    pub bandwidth: BandwidthParams,
    pub ddqn: DdqnHyper,
    pub cmab: CmabParams,
    /// Total slots per generated trace.
    pub slots: usize,
    pub train_fraction: f64,
    /// Training passes over the training split.
    pub passes: usize,
    pub pretrain_slots: usize,
    pub trace_seed: u64,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub policies: Vec<Policy>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bandwidth = BandwidthParams::default();
        let scene = SceneGenParams::default();
        let mut ddqn = DdqnHyper::default();
        ddqn.scale.bandwidth = bandwidth.mean;
        ddqn.scale.objects = f64::from(scene.max_objects);
        Self {
            system: SystemParams::default(),
            scene,
            bandwidth,
            ddqn,
            cmab: CmabParams::default(),
            slots: 2500,
            train_fraction: 0.8,
            passes: 25,
            pretrain_slots: 2000,
            trace_seed: 2024,
            seed: 1,
            seeds: vec![1, 2, 3, 4, 5],
            policies: Policy::ALL.to_vec(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn model_key(m: DetectionModel) -> &'static str {
    m.name()
}

fn res_key(r: Resolution) -> &'static str {
    r.name()
}

fn list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| invalid(key, format!("`{v}` is not a finite number")))
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| invalid(key, format!("`{v}` is not a non-negative integer")))
}

fn parse_list<T>(key: &str, v: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<Vec<_>>>()?;
    if items.is_empty() {
        return Err(invalid(key, "list must not be empty"));
    }
    Ok(items)
}

impl RunConfig {
    /// Every key with its current value, in a stable order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let s = &self.system;
        let mut out: Vec<(String, String)> = vec![
            ("system.f_device".into(), real(s.f_device)),
            ("system.f_edge".into(), real(s.f_edge)),
            ("system.u_track.kcf".into(), real(s.u_track[1])),
            ("system.u_track.csrt".into(), real(s.u_track[2])),
            ("system.u_roi".into(), real(s.u_roi)),
            ("system.u_dnn".into(), real(s.u_dnn)),
        ];
        for m in DetectionModel::ALL {
            for r in Resolution::ALL {
                out.push((
                    format!("system.u_infer.{}.{}", model_key(m), res_key(r)),
                    real(s.u_infer[m.index()][r.index()]),
                ));
            }
        }
        out.extend([
            ("system.tau".into(), real(s.tau)),
            ("system.data_scale".into(), real(s.data_scale)),
            ("system.l_max".into(), real(s.l_max)),
        ]);
        for m in DetectionModel::ALL {
            for r in Resolution::ALL {
                out.push((
                    format!("system.acc_detect.{}.{}", model_key(m), res_key(r)),
                    real(s.acc_detect[m.index()][r.index()]),
                ));
            }
        }
        out.extend([
            ("system.acc_track.kcf".into(), real(s.acc_track_kcf)),
            ("system.acc_track.csrt".into(), real(s.acc_track_csrt)),
            ("system.track_decay".into(), real(s.track_decay)),
            ("system.skip_exponent".into(), real(s.skip_exponent)),
            ("system.roi_penalty".into(), real(s.roi_penalty)),
            ("system.acc_threshold".into(), real(s.acc_threshold)),
            ("system.lambda".into(), real(s.lambda)),
            ("system.eta".into(), real(s.eta)),
            ("scene.max_objects".into(), self.scene.max_objects.to_string()),
            ("scene.step_up".into(), real(self.scene.step_up)),
            ("scene.step_down".into(), real(self.scene.step_down)),
            ("scene.motion_mean".into(), real(self.scene.motion_mean)),
            ("scene.motion_sd".into(), real(self.scene.motion_sd)),
            ("scene.motion_scale".into(), real(self.scene.motion_scale)),
            ("scene.cluster_size".into(), self.scene.cluster_size.to_string()),
            ("bandwidth.rho".into(), real(self.bandwidth.mean)),
            ("bandwidth.sigma".into(), real(self.bandwidth.sd)),
            ("bandwidth.b_min".into(), real(self.bandwidth.floor)),
            ("ddqn.gamma".into(), real(self.ddqn.gamma)),
            ("ddqn.learning_rate".into(), real(self.ddqn.learning_rate)),
            ("ddqn.batch_size".into(), self.ddqn.batch_size.to_string()),
            ("ddqn.sync_period".into(), self.ddqn.sync_period.to_string()),
            ("ddqn.epsilon".into(), real(self.ddqn.epsilon)),
            ("ddqn.buffer_capacity".into(), self.ddqn.buffer_capacity.to_string()),
            ("ddqn.hidden".into(), list(&self.ddqn.hidden)),
            ("ddqn.streak_horizon".into(), real(self.ddqn.scale.streak_horizon)),
            ("cmab.xi_density".into(), real(self.cmab.xi_density)),
            ("cmab.xi_bandwidth".into(), real(self.cmab.xi_bandwidth)),
            ("cmab.decay".into(), real(self.cmab.decay)),
            ("cmab.epsilon".into(), real(self.cmab.epsilon)),
            ("cmab.initial_density".into(), real(self.cmab.initial_density)),
            ("run.slots".into(), self.slots.to_string()),
            ("run.train_fraction".into(), real(self.train_fraction)),
            ("run.passes".into(), self.passes.to_string()),
            ("run.pretrain_slots".into(), self.pretrain_slots.to_string()),
            ("run.trace_seed".into(), self.trace_seed.to_string()),
            ("run.seed".into(), self.seed.to_string()),
            ("run.seeds".into(), list(&self.seeds)),
            (
                "run.policies".into(),
                self.policies.iter().map(|p| p.name()).collect::<Vec<_>>().join(","),
            ),
            ("output.dir".into(), self.output_dir.display().to_string()),
        ]);
        out
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let f = || parse_f64(key, v);
        if let Some(rest) = key
            .strip_prefix("system.u_infer.")
            .or_else(|| key.strip_prefix("system.acc_detect."))
        {
            let (m, r) = rest
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
            let m = DetectionModel::ALL
                .into_iter()
                .find(|x| model_key(*x) == m)
                .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
            let r = Resolution::ALL
                .into_iter()
                .find(|x| res_key(*x) == r)
                .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
            let table = if key.starts_with("system.u_infer.") {
                &mut self.system.u_infer
            } else {
                &mut self.system.acc_detect
            };
            table[m.index()][r.index()] = f()?;
            return Ok(());
        }
        let s = &mut self.system;
        match key {
            "system.f_device" => s.f_device = f()?,
            "system.f_edge" => s.f_edge = f()?,
            "system.u_track.kcf" => s.u_track[1] = f()?,
            "system.u_track.csrt" => s.u_track[2] = f()?,
            "system.u_roi" => s.u_roi = f()?,
            "system.u_dnn" => s.u_dnn = f()?,
            "system.tau" => s.tau = f()?,
            "system.data_scale" => s.data_scale = f()?,
            "system.l_max" => s.l_max = f()?,
            "system.acc_track.kcf" => s.acc_track_kcf = f()?,
            "system.acc_track.csrt" => s.acc_track_csrt = f()?,
            "system.track_decay" => s.track_decay = f()?,
            "system.skip_exponent" => s.skip_exponent = f()?,
            "system.roi_penalty" => s.roi_penalty = f()?,
            "system.acc_threshold" => s.acc_threshold = f()?,
            "system.lambda" => s.lambda = f()?,
            "system.eta" => s.eta = f()?,
            "scene.max_objects" => self.scene.max_objects = parse_int(key, v)?,
            "scene.step_up" => self.scene.step_up = f()?,
            "scene.step_down" => self.scene.step_down = f()?,
            "scene.motion_mean" => self.scene.motion_mean = f()?,
            "scene.motion_sd" => self.scene.motion_sd = f()?,
            "scene.motion_scale" => self.scene.motion_scale = f()?,
            "scene.cluster_size" => self.scene.cluster_size = parse_int(key, v)?,
            "bandwidth.rho" => self.bandwidth.mean = f()?,
            "bandwidth.sigma" => self.bandwidth.sd = f()?,
            "bandwidth.b_min" => self.bandwidth.floor = f()?,
            "ddqn.gamma" => self.ddqn.gamma = f()?,
            "ddqn.learning_rate" => self.ddqn.learning_rate = f()?,
            "ddqn.batch_size" => self.ddqn.batch_size = parse_int(key, v)?,
            "ddqn.sync_period" => self.ddqn.sync_period = parse_int(key, v)?,
            "ddqn.epsilon" => self.ddqn.epsilon = f()?,
            "ddqn.buffer_capacity" => self.ddqn.buffer_capacity = parse_int(key, v)?,
            "ddqn.hidden" => self.ddqn.hidden = parse_list(key, v, |x| parse_int(key, x))?,
            "ddqn.streak_horizon" => self.ddqn.scale.streak_horizon = f()?,
            "cmab.xi_density" => self.cmab.xi_density = f()?,
            "cmab.xi_bandwidth" => self.cmab.xi_bandwidth = f()?,
            "cmab.decay" => self.cmab.decay = f()?,
            "cmab.epsilon" => self.cmab.epsilon = f()?,
            "cmab.initial_density" => self.cmab.initial_density = f()?,
            "run.slots" => self.slots = parse_int(key, v)?,
            "run.train_fraction" => self.train_fraction = f()?,
            "run.passes" => self.passes = parse_int(key, v)?,
            "run.pretrain_slots" => self.pretrain_slots = parse_int(key, v)?,
            "run.trace_seed" => self.trace_seed = parse_int(key, v)?,
            "run.seed" => self.seed = parse_int(key, v)?,
            "run.seeds" => self.seeds = parse_list(key, v, |x| parse_int(key, x))?,
            "run.policies" => self.policies = parse_list(key, v, Policy::from_name)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Derived values: the DDQN input scaling follows the bandwidth mean and
    /// the object-count bound.
    fn sync_derived(&mut self) {
        self.ddqn.scale.bandwidth = self.bandwidth.mean;
        self.ddqn.scale.objects = f64::from(self.scene.max_objects.max(1));
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.scene.validate()?;
        self.bandwidth.validate()?;
        self.ddqn.validate()?;
        self.cmab.validate()?;
        if self.slots < 4 {
            return Err(invalid("run.slots", "must be >= 4"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid("run.train_fraction", "must be in (0,1)"));
        }
        if self.pretrain_slots == 0 {
            return Err(invalid("run.pretrain_slots", "must be >= 1"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.sync_derived();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            ddqn: self.ddqn.clone(),
            cmab: self.cmab.clone(),
            passes: self.passes,
            pretrain_slots: self.pretrain_slots,
        }
    }
}
