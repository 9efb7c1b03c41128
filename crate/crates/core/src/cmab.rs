//! Four ε-greedy bandits over the nine (model, resolution) configurations,
//! one per (information density, bandwidth) context.
//!
//! Contexts compare the block's density and the slot bandwidth against
//! exponential moving averages. Gain estimates use a constant step size:
//!
//! ```text
//! Q[e][g] <- Q[e][g] + phi * (R - Q[e][g])
//! ```
//!
//! applied only to the cell actually played.

use rand::Rng;

use crate::ddqn::argmax;
use crate::env::{self, BlockConfig, Decision, ObservationState, SystemParams, TrackingState};
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::trace::TracePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Context {
    HighDensityHighBandwidth,
    LowDensityHighBandwidth,
    HighDensityLowBandwidth,
    LowDensityLowBandwidth,
}

impl Context {
    pub const ALL: [Context; 4] = [
        Self::HighDensityHighBandwidth,
        Self::LowDensityHighBandwidth,
        Self::HighDensityLowBandwidth,
        Self::LowDensityLowBandwidth,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::HighDensityHighBandwidth => "HI-HB",
            Self::LowDensityHighBandwidth => "LI-HB",
            Self::HighDensityLowBandwidth => "HI-LB",
            Self::LowDensityLowBandwidth => "LI-LB",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmabParams {
    /// EMA weight of the newest density observation.
    pub xi_density: f64,
    /// EMA weight of the newest bandwidth observation.
    pub xi_bandwidth: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub initial_density: f64,
}

impl Default for CmabParams {
    fn default() -> Self {
        Self {
            xi_density: 0.05,
            xi_bandwidth: 0.05,
            decay: 0.1,
            epsilon: 0.3,
            initial_density: 3.0,
        }
    }
}

impl CmabParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cmab.xi_density", self.xi_density),
            ("cmab.xi_bandwidth", self.xi_bandwidth),
            ("cmab.epsilon", self.epsilon),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, format!("must be in [0,1] (got {v})")));
            }
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(invalid("cmab.decay", format!("must be in (0,1] (got {})", self.decay)));
        }
        if !(self.initial_density >= 0.0 && self.initial_density.is_finite()) {
            return Err(invalid("cmab.initial_density", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmabState {
    pub params: CmabParams,
    pub estimates: [[f64; BlockConfig::COUNT]; 4],
    pub pulls: [[u64; BlockConfig::COUNT]; 4],
    pub avg_density: f64,
    pub avg_bandwidth: f64,
}

impl CmabState {
    pub fn new(params: CmabParams, initial_bandwidth: f64) -> Result<Self> {
        params.validate()?;
        if !(initial_bandwidth > 0.0) {
            return Err(invalid("initial_bandwidth", "must be > 0"));
        }
        Ok(Self {
            avg_density: params.initial_density,
            avg_bandwidth: initial_bandwidth,
            params,
            estimates: [[0.0; BlockConfig::COUNT]; 4],
            pulls: [[0; BlockConfig::COUNT]; 4],
        })
    }

    /// Strictly above the average is "high"; ties fall to the low side.
    pub fn classify_context(&self, density: f64, bandwidth: f64) -> Context {
        match (density > self.avg_density, bandwidth > self.avg_bandwidth) {
            (true, true) => Context::HighDensityHighBandwidth,
            (false, true) => Context::LowDensityHighBandwidth,
            (true, false) => Context::HighDensityLowBandwidth,
            (false, false) => Context::LowDensityLowBandwidth,
        }
    }

    pub fn update_density_average(&mut self, density: f64) {
        let xi = self.params.xi_density;
        self.avg_density = xi * density + (1.0 - xi) * self.avg_density;
    }

    pub fn update_bandwidth_average(&mut self, bandwidth: f64) {
        let xi = self.params.xi_bandwidth;
        self.avg_bandwidth = xi * bandwidth + (1.0 - xi) * self.avg_bandwidth;
    }

    pub fn update_averages(&mut self, density: f64, bandwidth: f64) {
        self.update_density_average(density);
        self.update_bandwidth_average(bandwidth);
    }

    pub fn greedy_config(&self, context: Context) -> BlockConfig {
        BlockConfig::from_index(argmax(&self.estimates[context.index()]))
    }

    /// ε-greedy over the nine configurations using the state's own ε.
    pub fn select_config<R: Rng + ?Sized>(&self, context: Context, rng: &mut R) -> BlockConfig {
        self.select_config_with(context, self.params.epsilon, rng)
    }

    pub fn select_config_with<R: Rng + ?Sized>(&self, context: Context, epsilon: f64, rng: &mut R) -> BlockConfig {
        if rng.random::<f64>() < epsilon {
            BlockConfig::from_index(rng.random_range(0..BlockConfig::COUNT))
        } else {
            self.greedy_config(context)
        }
    }

    pub fn update_estimate(&mut self, context: Context, config: BlockConfig, reward: f64) {
        let (e, g) = (context.index(), config.index());
        let q = &mut self.estimates[e][g];
        *q += self.params.decay * (reward - *q);
        self.pulls[e][g] += 1;
    }
}

/// Warms up a bandit state by offloading ROI blocks in every slot of the
/// training trace (cycling if `slots` exceeds its length).
pub fn pretrain(
    trace: &TracePair,
    system: &SystemParams,
    params: &CmabParams,
    slots: usize,
    seed: u64,
) -> Result<CmabState> {
    if slots == 0 {
        return Err(invalid("pretrain_slots", "must be >= 1"));
    }
    system.validate()?;
    let mut state = CmabState::new(params.clone(), trace.bandwidth.params.mean)?;
    let mut rng = rng_from_seed(derive_seed(seed, "cmab-pretrain"));
    let mut tracking = TrackingState::default();
    for i in 0..slots {
        let t = i % trace.len();
        let slot = &trace.scene[t];
        let b = trace.bandwidth.samples[t];
        let picks: Vec<_> = slot
            .blocks
            .iter()
            .map(|blk| {
                let ctx = state.classify_context(f64::from(blk.density), b);
                (ctx, state.select_config(ctx, &mut rng))
            })
            .collect();
        let decision = Decision::Offload {
            roi: true,
            configs: picks.iter().map(|p| p.1).collect(),
        };
        let obs = ObservationState::new(slot, b, tracking);
        let (outcome, next) = env::step(slot, b, &obs, &decision, system)?;
        for ((ctx, cfg), blk) in picks.iter().zip(&slot.blocks) {
            state.update_estimate(*ctx, *cfg, outcome.reward);
            state.update_density_average(f64::from(blk.density));
        }
        state.update_bandwidth_average(b);
        tracking = next;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::trace::{BandwidthParams, SceneGenParams};

    fn state() -> CmabState {
        CmabState::new(CmabParams::default(), 10.0).unwrap()
    }

    #[test]
    fn context_examples() {
        let mut s = state();
        s.avg_density = 5.0;
        s.avg_bandwidth = 10.0;
        assert_eq!(s.classify_context(10.0, 12.0), Context::HighDensityHighBandwidth);
        assert_eq!(s.classify_context(5.0, 10.0), Context::LowDensityLowBandwidth);
        assert_eq!(s.classify_context(2.0, 15.0), Context::LowDensityHighBandwidth);
        assert_eq!(s.classify_context(6.0, 3.0), Context::HighDensityLowBandwidth);
    }

    #[test]
    fn ema_examples() {
        let mut s = state();
        s.params.xi_density = 1.0;
        s.update_density_average(7.0);
        assert_eq!(s.avg_density, 7.0);

        s.params.xi_density = 0.3;
        s.avg_density = 5.0;
        s.update_density_average(10.0);
        assert!((s.avg_density - 6.5).abs() < 1e-12);

        s.params.xi_bandwidth = 0.0;
        for b in [1.0, 50.0, 3.0] {
            s.update_bandwidth_average(b);
        }
        assert_eq!(s.avg_bandwidth, 10.0);
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut s = state();
        s.params.epsilon = 0.0;
        let mut rng = rng_from_seed(1);
        let ctx = Context::LowDensityLowBandwidth;
        assert_eq!(s.select_config(ctx, &mut rng), BlockConfig::BEST);
        s.estimates[ctx.index()] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        assert_eq!(s.select_config(ctx, &mut rng), BlockConfig::from_index(8));
    }

    #[test]
    fn estimate_update_examples() {
        let mut s = state();
        let ctx = Context::HighDensityLowBandwidth;
        let g = BlockConfig::from_index(4);
        s.update_estimate(ctx, g, 1.0);
        assert!((s.estimates[ctx.index()][4] - 0.1).abs() < 1e-15);
        assert_eq!(s.pulls[ctx.index()][4], 1);

        let q = s.estimates[ctx.index()][4];
        s.update_estimate(ctx, g, q);
        assert_eq!(s.estimates[ctx.index()][4], q);
    }

    #[test]
    fn update_touches_one_cell() {
        let mut s = state();
        let before = s.estimates;
        s.update_estimate(Context::LowDensityHighBandwidth, BlockConfig::from_index(2), 0.7);
        let changed = (0..4)
            .flat_map(|e| (0..9).map(move |g| (e, g)))
            .filter(|&(e, g)| s.estimates[e][g] != before[e][g])
            .count();
        assert_eq!(changed, 1);
    }

    #[test]
    fn pretrain_contract() {
        let pair = TracePair::generate(&SceneGenParams::default(), &BandwidthParams::default(), 3, 300).unwrap();
        let sys = SystemParams::default();
        let p = CmabParams::default();
        assert!(pretrain(&pair, &sys, &p, 0, 1).is_err());
        let a = pretrain(&pair, &sys, &p, 500, 9).unwrap();
        let b = pretrain(&pair, &sys, &p, 500, 9).unwrap();
        assert_eq!(a, b);
        let total: u64 = a.pulls.iter().flatten().sum();
        let blocks: usize = (0..500).map(|i| pair.scene[i % 300].block_count()).sum();
        assert_eq!(total as usize, blocks);
    }
}
