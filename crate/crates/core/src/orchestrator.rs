//! Joint training of the offloading and configuration agents, baseline
//! policies, episode evaluation and the policy comparison table.

use std::io::Write;

use rand::Rng;

use crate::cmab::{self, CmabParams, CmabState, Context};
use crate::ddqn::{DdqnAgent, DdqnHyper, Transition};
use crate::env::{
    self, Action, BlockConfig, Decision, ObservationState, StepOutcome, SystemParams, TrackingMode, TrackingState,
};
use crate::error::{invalid, Error, Result};
use crate::fmt::real;
use crate::par::{map_ordered, ExecMode};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::trace::TracePair;

/// How the frame-processing action is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Offloader {
    Ddqn,
    Random,
    FullOnly,
}

/// How each transmitted block's configuration is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Configurator {
    Cmab,
    Random,
    Best,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    Dcrl,
    RandRand,
    RandCmab,
    DdqnRand,
    FullHigh,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Self::Dcrl,
        Self::RandRand,
        Self::RandCmab,
        Self::DdqnRand,
        Self::FullHigh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dcrl => "DCRL",
            Self::RandRand => "R-R",
            Self::RandCmab => "R-C",
            Self::DdqnRand => "D-R",
            Self::FullHigh => "F-B",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::UnknownPolicy(name.to_string()))
    }

    pub fn offloader(self) -> Offloader {
        match self {
            Self::Dcrl | Self::DdqnRand => Offloader::Ddqn,
            Self::RandRand | Self::RandCmab => Offloader::Random,
            Self::FullHigh => Offloader::FullOnly,
        }
    }

    pub fn configurator(self) -> Configurator {
        match self {
            Self::Dcrl | Self::RandCmab => Configurator::Cmab,
            Self::RandRand | Self::DdqnRand => Configurator::Random,
            Self::FullHigh => Configurator::Best,
        }
    }

    /// Whether any component of this policy learns.
    pub fn trains(self) -> bool {
        self.offloader() == Offloader::Ddqn || self.configurator() == Configurator::Cmab
    }
}

/// One of the four comparison baselines by name (`R-R`, `R-C`, `D-R`, `F-B`).
pub fn make_baseline(name: &str) -> Result<Policy> {
    match Policy::from_name(name)? {
        Policy::Dcrl => Err(Error::UnknownPolicy(format!("{name} is not a baseline"))),
        p => Ok(p),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub ddqn: DdqnHyper,
    pub cmab: CmabParams,
    /// Training passes over the training trace.
    pub passes: usize,
    pub pretrain_slots: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            ddqn: DdqnHyper::default(),
            cmab: CmabParams::default(),
            passes: 25,
            pretrain_slots: 2000,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Agents {
    pub ddqn: Option<DdqnAgent>,
    pub cmab: Option<CmabState>,
}

impl Agents {
    /// Fresh agents for `policy`: a randomly initialised DDQN and/or a
    /// pretrained bandit, as the policy requires.
    pub fn fresh(
        policy: Policy,
        train: &TracePair,
        system: &SystemParams,
        settings: &ExperimentSettings,
        seed: u64,
    ) -> Result<Self> {
        let ddqn = match policy.offloader() {
            Offloader::Ddqn => Some(DdqnAgent::new(settings.ddqn.clone(), Action::COUNT, seed)?),
            _ => None,
        };
        let cmab = match policy.configurator() {
            Configurator::Cmab => Some(cmab::pretrain(
                train,
                system,
                &settings.cmab,
                settings.pretrain_slots,
                seed,
            )?),
            _ => None,
        };
        Ok(Self { ddqn, cmab })
    }

    fn check(&self, policy: Policy) -> Result<()> {
        if policy.offloader() == Offloader::Ddqn && self.ddqn.is_none() {
            return Err(invalid("agents", format!("{} needs a DDQN agent", policy.name())));
        }
        if policy.configurator() == Configurator::Cmab && self.cmab.is_none() {
            return Err(invalid("agents", format!("{} needs a bandit state", policy.name())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub action: Action,
    pub blocks: usize,
    pub payload_mb: f64,
    pub l_total: f64,
    pub acc: f64,
    pub success: bool,
    pub reward: f64,
}

impl SlotRecord {
    fn new(slot: usize, o: &StepOutcome) -> Self {
        Self {
            slot,
            action: o.action,
            blocks: o.blocks_sent,
            payload_mb: o.payload_mb,
            l_total: o.latency.total,
            acc: o.acc,
            success: o.success,
            reward: o.reward,
        }
    }
}

/// Summary of one episode. `mean_accuracy` is a mAP proxy: the mean slot
/// accuracy over successfully processed slots.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub cumulative_reward: f64,
    pub processing_rate: f64,
    pub mean_accuracy: f64,
    pub mean_latency: f64,
    pub utility: f64,
    pub log: Vec<SlotRecord>,
}

impl EpisodeMetrics {
    pub fn from_log(log: Vec<SlotRecord>, eta: f64) -> Result<Self> {
        if log.is_empty() {
            return Err(invalid("episode", "no metered slots"));
        }
        let n = log.len() as f64;
        let successes = log.iter().filter(|r| r.success).count();
        let acc_sum: f64 = log.iter().filter(|r| r.success).map(|r| r.acc).sum();
        let mean_accuracy = if successes == 0 {
            0.0
        } else {
            acc_sum / successes as f64
        };
        let processing_rate = successes as f64 / n;
        Ok(Self {
            cumulative_reward: log.iter().map(|r| r.reward).sum(),
            processing_rate,
            mean_accuracy,
            mean_latency: log.iter().map(|r| r.l_total).sum::<f64>() / n,
            utility: processing_rate + if successes == 0 { 0.0 } else { eta * mean_accuracy },
            log,
        })
    }

    pub fn fields(&self) -> [f64; 5] {
        [
            self.cumulative_reward,
            self.processing_rate,
            self.mean_accuracy,
            self.mean_latency,
            self.utility,
        ]
    }
}

pub fn write_slot_log<W: Write>(log: &[SlotRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "action", "s_count", "d_t", "l_total", "acc", "q", "reward"])?;
    for r in log {
        w.write_record([
            r.slot.to_string(),
            r.action.name().to_string(),
            r.blocks.to_string(),
            real(r.payload_mb),
            real(r.l_total),
            real(r.acc),
            u8::from(r.success).to_string(),
            real(r.reward),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-pass training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PassSummary {
    pub total_reward: f64,
    pub processing_rate: f64,
    /// Mean DDQN batch loss over the pass, if any update ran.
    pub mean_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub passes: Vec<PassSummary>,
}

impl TrainingLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pass", "total_reward", "processing_rate", "mean_loss"])?;
        for (i, p) in self.passes.iter().enumerate() {
            w.write_record([
                i.to_string(),
                real(p.total_reward),
                real(p.processing_rate),
                p.mean_loss.map(real).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Counters of which pipeline stages ran, for checking branch structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageCounts {
    pub tracking: usize,
    pub pre_detection: usize,
    pub roi_extraction: usize,
    pub bandit_selections: usize,
    pub bandit_updates: usize,
}

struct PassOutput {
    log: Vec<SlotRecord>,
    losses: Vec<f64>,
    stages: StageCounts,
}

fn pick_config(
    configurator: Configurator,
    cmab: Option<&CmabState>,
    density: u32,
    bandwidth: f64,
    epsilon: f64,
    rng: &mut SimRng,
) -> (Option<Context>, BlockConfig) {
    match (configurator, cmab) {
        (Configurator::Cmab, Some(state)) => {
            let ctx = state.classify_context(f64::from(density), bandwidth);
            (Some(ctx), state.select_config_with(ctx, epsilon, rng))
        }
        (Configurator::Best, _) => (None, BlockConfig::BEST),
        _ => (None, BlockConfig::from_index(rng.random_range(0..BlockConfig::COUNT))),
    }
}

/// Runs the policy once over `trace`. The first slot is a forced full-frame
/// offload that seeds the tracking state and is not metered. With `learn`
/// set, agents explore with their configured ε and update online; otherwise
/// they act greedily and stay frozen.
fn run_pass(
    policy: Policy,
    trace: &TracePair,
    system: &SystemParams,
    agents: &mut Agents,
    learn: bool,
    rng: &mut SimRng,
) -> Result<PassOutput> {
    agents.check(policy)?;
    let first = &trace.scene[0];
    let mut tracking = TrackingState {
        complexity: first.object_count,
        streak: 0,
    };
    let mut out = PassOutput {
        log: Vec::with_capacity(trace.len().saturating_sub(1)),
        losses: Vec::new(),
        stages: StageCounts::default(),
    };

    for t in 1..trace.len() {
        let slot = &trace.scene[t];
        let bandwidth = trace.bandwidth.samples[t];
        let obs = ObservationState::new(slot, bandwidth, tracking);

        let (action, state) = match policy.offloader() {
            Offloader::Ddqn => {
                let agent = agents.ddqn.as_ref().expect("checked");
                let state = agent.hyper.scale.encode(&obs);
                let eps = if learn { agent.hyper.epsilon } else { 0.0 };
                (Action::from_index(agent.act(&state, eps, rng)), Some(state))
            }
            Offloader::Random => (Action::from_index(rng.random_range(0..Action::COUNT)), None),
            Offloader::FullOnly => (Action::OffloadFull, None),
        };

        let mut played: Vec<(Option<Context>, BlockConfig, u32)> = Vec::new();
        let decision = match action {
            Action::Skip => Decision::Track(TrackingMode::Skip),
            Action::Kcf => Decision::Track(TrackingMode::Kcf),
            Action::Csrt => Decision::Track(TrackingMode::Csrt),
            Action::OffloadFull | Action::OffloadRoi => {
                let roi = action == Action::OffloadRoi;
                out.stages.pre_detection += 1;
                if roi {
                    out.stages.roi_extraction += 1;
                }
                let densities: Vec<u32> = if roi {
                    slot.blocks.iter().map(|b| b.density).collect()
                } else {
                    vec![slot.object_count]
                };
                let eps = if learn {
                    agents.cmab.as_ref().map_or(0.0, |c| c.params.epsilon)
                } else {
                    0.0
                };
                for n in densities {
                    let (ctx, cfg) = pick_config(policy.configurator(), agents.cmab.as_ref(), n, bandwidth, eps, rng);
                    if ctx.is_some() {
                        out.stages.bandit_selections += 1;
                    }
                    played.push((ctx, cfg, n));
                }
                Decision::Offload {
                    roi,
                    configs: played.iter().map(|p| p.1).collect(),
                }
            }
        };
        if !action.is_offload() {
            out.stages.tracking += 1;
        }

        let (outcome, next) = env::step(slot, bandwidth, &obs, &decision, system)?;

        if learn && action.is_offload() {
            if let Some(state) = agents
                .cmab
                .as_mut()
                .filter(|_| policy.configurator() == Configurator::Cmab)
            {
                for (ctx, cfg, n) in &played {
                    if let Some(ctx) = ctx {
                        state.update_estimate(*ctx, *cfg, outcome.reward);
                        out.stages.bandit_updates += 1;
                    }
                    state.update_density_average(f64::from(*n));
                }
                state.update_bandwidth_average(bandwidth);
            }
        }

        if learn {
            if let (Some(agent), Some(state)) = (agents.ddqn.as_mut(), state) {
                let terminal = t + 1 == trace.len();
                let next_state = if terminal {
                    state
                } else {
                    let next_obs = ObservationState::new(&trace.scene[t + 1], trace.bandwidth.samples[t + 1], next);
                    agent.hyper.scale.encode(&next_obs)
                };
                let loss = agent.observe(
                    Transition {
                        state,
                        action: action.index(),
                        reward: outcome.reward,
                        next_state,
                        terminal,
                    },
                    rng,
                )?;
                out.losses.extend(loss);
            }
        }

        out.log.push(SlotRecord::new(slot.slot, &outcome));
        tracking = next;
    }
    Ok(out)
}

/// Trains the policy's learning components for `passes` passes over
/// `train`. Policies without learners return an empty log.
pub fn train_policy(
    policy: Policy,
    train: &TracePair,
    system: &SystemParams,
    agents: &mut Agents,
    passes: usize,
    seed: u64,
) -> Result<TrainingLog> {
    system.validate()?;
    if train.len() < 2 {
        return Err(invalid("train", "training trace needs at least two slots"));
    }
    let mut log = TrainingLog::default();
    if !policy.trains() {
        return Ok(log);
    }
    let mut rng = rng_from_seed(derive_seed(seed, "train"));
    for _ in 0..passes {
        let pass = run_pass(policy, train, system, agents, true, &mut rng)?;
        let n = pass.log.len() as f64;
        log.passes.push(PassSummary {
            total_reward: pass.log.iter().map(|r| r.reward).sum(),
            processing_rate: pass.log.iter().filter(|r| r.success).count() as f64 / n,
            mean_loss: (!pass.losses.is_empty()).then(|| pass.losses.iter().sum::<f64>() / pass.losses.len() as f64),
        });
    }
    Ok(log)
}

/// Joint DDQN + bandit training. `agents` must hold both a DDQN agent and a
/// pretrained bandit state.
pub fn run_dcrl_training(
    train: &TracePair,
    system: &SystemParams,
    agents: &mut Agents,
    passes: usize,
    seed: u64,
) -> Result<TrainingLog> {
    train_policy(Policy::Dcrl, train, system, agents, passes, seed)
}

/// Greedy, frozen evaluation of `policy` on `trace`.
pub fn run_episode(
    policy: Policy,
    trace: &TracePair,
    system: &SystemParams,
    agents: &Agents,
    seed: u64,
) -> Result<EpisodeMetrics> {
    Ok(run_episode_with_stages(policy, trace, system, agents, seed)?.0)
}

pub fn run_episode_with_stages(
    policy: Policy,
    trace: &TracePair,
    system: &SystemParams,
    agents: &Agents,
    seed: u64,
) -> Result<(EpisodeMetrics, StageCounts)> {
    system.validate()?;
    if trace.len() < 2 {
        return Err(invalid("trace", "evaluation trace needs at least two slots"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "eval"));
    let mut frozen = agents.clone();
    let pass = run_pass(policy, trace, system, &mut frozen, false, &mut rng)?;
    Ok((EpisodeMetrics::from_log(pass.log, system.eta)?, pass.stages))
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub policy: Policy,
    pub seed: u64,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub policy: Policy,
    pub mean: [f64; 5],
    /// Sample standard deviation; 0 for a single seed.
    pub sd: [f64; 5],
}

#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub aggregates: Vec<Aggregate>,
}

pub const METRIC_COLUMNS: [&str; 5] = [
    "cum_reward",
    "processing_rate",
    "mean_accuracy",
    "mean_latency",
    "utility",
];

impl ComparisonTable {
    pub fn aggregate(&self, policy: Policy) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.policy == policy)
    }

    /// Per-seed rows, then `mean` and `sd` rows per policy in the seed column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["policy", "seed"];
        header.extend(METRIC_COLUMNS);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.policy.name().to_string(), r.seed.to_string()];
            rec.extend(r.metrics.fields().iter().map(|v| real(*v)));
            w.write_record(&rec)?;
        }
        for a in &self.aggregates {
            for (label, vals) in [("mean", &a.mean), ("sd", &a.sd)] {
                let mut rec = vec![a.policy.name().to_string(), label.to_string()];
                rec.extend(vals.iter().map(|v| real(*v)));
                w.write_record(&rec)?;
            }
        }
        let mut inner = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        writeln!(
            inner,
            "# mean_accuracy is a mAP proxy: mean slot accuracy over successfully processed slots"
        )?;
        inner.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains (where applicable) and evaluates every policy × seed cell with
/// fresh agents, on a test trace shared by all cells.
pub fn compare(
    policies: &[Policy],
    train: &TracePair,
    test: &TracePair,
    system: &SystemParams,
    settings: &ExperimentSettings,
    seeds: &[u64],
    mode: ExecMode,
) -> Result<ComparisonTable> {
    if seeds.is_empty() {
        return Err(invalid("seeds", "need at least one seed"));
    }
    if policies.is_empty() {
        return Err(invalid("policies", "need at least one policy"));
    }
    system.validate()?;
    settings.ddqn.validate()?;
    settings.cmab.validate()?;

    let cells: Vec<(Policy, u64)> = policies
        .iter()
        .flat_map(|p| seeds.iter().map(move |s| (*p, *s)))
        .collect();
    let results = map_ordered(&cells, mode, |&(policy, seed)| -> Result<ComparisonRow> {
        let mut agents = Agents::fresh(policy, train, system, settings, seed)?;
        train_policy(policy, train, system, &mut agents, settings.passes, seed)?;
        let metrics = run_episode(policy, test, system, &agents, seed)?;
        Ok(ComparisonRow { policy, seed, metrics })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;

    let aggregates = policies
        .iter()
        .map(|&policy| {
            let mine: Vec<&ComparisonRow> = rows.iter().filter(|r| r.policy == policy).collect();
            let mut mean = [0.0; 5];
            let mut sd = [0.0; 5];
            for k in 0..5 {
                let vals: Vec<f64> = mine.iter().map(|r| r.metrics.fields()[k]).collect();
                (mean[k], sd[k]) = mean_sd(&vals);
            }
            Aggregate { policy, mean, sd }
        })
        .collect();
    Ok(ComparisonTable { rows, aggregates })
}
