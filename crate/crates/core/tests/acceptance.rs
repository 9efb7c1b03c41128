//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.
//!
//! `cargo test -p dcrl-core --test acceptance` runs everything;
//! `cargo test -p dcrl-core --test acceptance -- 1 4` runs criteria 1 and 4
//! (criterion 8 runs together with 7).

mod common;

use std::process::ExitCode;
use std::time::Instant;

use dcrl_core::cmab::{CmabParams, CmabState, Context};
use dcrl_core::config::RunConfig;
use dcrl_core::ddqn::{run_algorithm1, td_targets, DdqnHyper, Environment, State, Transition};
use dcrl_core::env::{self, BlockConfig, Decision, StepOutcome};
use dcrl_core::nn::{Dense, QNetwork};
use dcrl_core::orchestrator::{compare, ComparisonTable, Policy};
use dcrl_core::rng::{rng_from_seed, SimRng};
use dcrl_core::trace::{split_trace, BlockSpec, SceneSlot, TracePair, NATIVE_FRAME_PIXELS};
use dcrl_core::{ExecMode, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

struct Verdict {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: &'static str, pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        id,
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Vec<Verdict> {
    let mut params = env::SystemParams::default();
    params.u_infer[0][0] = 0.30;
    let slot = SceneSlot {
        slot: 0,
        similarity: 0.5,
        object_count: 3,
        blocks: vec![BlockSpec {
            pixel_fraction: 0.14,
            density: 3,
        }],
        full_frame_pixels: NATIVE_FRAME_PIXELS,
    };
    let decision = Decision::full_frame(BlockConfig::BEST);
    let (lat, d) = env::total_latency(&decision, &slot, 10.0, &params).expect("valid decision");
    let expected = 0.01 * 6.0 / 1.0 + 6.0 / 10.0 + 0.30 * 6.0 / 2.0;
    let latency_ok = (lat.total - expected).abs() < 1e-9 && (d - 6.0).abs() < 1e-9;

    let outcome = |q: bool, acc: f64| StepOutcome {
        action: env::Action::OffloadRoi,
        latency: Default::default(),
        acc,
        success: q,
        reward: 0.0,
        payload_mb: 0.0,
        blocks_sent: 1,
    };
    let all = vec![outcome(true, 0.9); 7];
    let mixed = [
        outcome(true, 0.8),
        outcome(false, 0.3),
        outcome(true, 0.6),
        outcome(false, 0.1),
    ];
    let none = [outcome(false, 0.7); 4];
    let u = [
        env::episode_utility(&all, 1.0).unwrap(),
        env::episode_utility(&mixed, 2.0).unwrap(),
        env::episode_utility(&none, 1.0).unwrap(),
    ];
    let want = [1.0 + 0.9, 0.5 + 2.0 * (1.4 / 2.0), 0.0];
    let utility_ok = u.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-9);
    vec![
        verdict(
            "1a",
            latency_ok,
            format!("full-frame latency {:.12} s, expected {expected:.12} s", lat.total),
        ),
        verdict("1b", utility_ok, format!("utilities {u:?}, expected {want:?}")),
    ]
}

fn criterion_2() -> Vec<Verdict> {
    let mut rng = rng_from_seed(2);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let net = QNetwork::new(&[4, 8, 5], &mut rng);
        let inputs: Vec<[f64; 4]> = (0..6)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect();
        let samples: Vec<(&[f64], usize, f64)> = inputs
            .iter()
            .map(|x| (&x[..], rng.random_range(0..5), rng.random_range(-1.0..1.0)))
            .collect();
        let (_, grads) = net.loss_and_gradient(&samples);
        let analytic = grads.flatten();
        let count = net.parameter_count();
        for _ in 0..100 {
            let i = rng.random_range(0..count);
            let mut plus = net.clone();
            *plus.parameter_mut(i) += h;
            let mut minus = net.clone();
            *minus.parameter_mut(i) -= h;
            let numeric = (plus.loss(&samples) - minus.loss(&samples)) / (2.0 * h);
            let scale = analytic[i].abs().max(numeric.abs());
            if scale > 1e-8 {
                worst = worst.max((analytic[i] - numeric).abs() / scale);
            }
        }
    }
    vec![verdict(
        "2",
        worst < 1e-4,
        format!("max relative error {worst:.3e} over 1000 parameters"),
    )]
}

/// Single-hidden-unit network whose outputs are its biases.
fn constant_net(values: &[f64]) -> QNetwork {
    QNetwork::from_layers(vec![
        Dense::zeros(4, 1),
        Dense {
            inputs: 1,
            outputs: values.len(),
            weights: vec![0.0; values.len()],
            bias: values.to_vec(),
        },
    ])
    .expect("consistent shapes")
}

fn criterion_3() -> Vec<Verdict> {
    let online = constant_net(&[0.1, 0.9]);
    let target = constant_net(&[0.9, 0.2]);
    let t = Transition {
        state: [0.0; 4],
        action: 0,
        reward: 1.0,
        next_state: [0.0; 4],
        terminal: false,
    };
    let y = td_targets(&[&t], &online, &target, 0.9)[0];
    let vanilla = 1.0 + 0.9 * 0.9;
    let pass = (y - 1.18).abs() < 1e-12 && (y - vanilla).abs() > 0.1;
    vec![verdict(
        "3",
        pass,
        format!("target {y:.6}, vanilla max-under-target would be {vanilla:.2}"),
    )]
}

/// Two states, `stay` (action 0) earns 0 and keeps the state, `advance`
/// (action 1) earns 1 and moves to the other state.
struct Chain {
    state: usize,
    t: usize,
}

const CHAIN_EPISODE: usize = 10;

fn chain_state(s: usize) -> State {
    let mut x = [0.0; 4];
    x[s] = 1.0;
    x
}

impl Environment for Chain {
    fn num_actions(&self) -> usize {
        2
    }

    fn reset(&mut self, rng: &mut SimRng) -> Result<State> {
        self.state = rng.random_range(0..2);
        self.t = 0;
        Ok(chain_state(self.state))
    }

    fn step(&mut self, action: usize, _rng: &mut SimRng) -> Result<(f64, State, bool)> {
        let reward = if action == 1 {
            self.state = 1 - self.state;
            1.0
        } else {
            0.0
        };
        self.t += 1;
        Ok((reward, chain_state(self.state), self.t == CHAIN_EPISODE))
    }
}

fn criterion_4() -> Vec<Verdict> {
    let hyper = DdqnHyper {
        gamma: 0.9,
        ..Default::default()
    };
    let episodes = 5000 / CHAIN_EPISODE;
    let optimal = (0..10u64)
        .filter(|&seed| {
            let mut env = Chain { state: 0, t: 0 };
            let (agent, _) = run_algorithm1(&mut env, &hyper, episodes, seed).expect("training runs");
            (0..2).all(|s| agent.greedy(&chain_state(s)) == 1)
        })
        .count();
    vec![verdict(
        "4",
        optimal == 10,
        format!("{optimal}/10 seeds greedy-optimal after 5000 steps"),
    )]
}

/// Expected reward of arm `g`, identical in every context; the last arm
/// (smallest model at the lowest resolution) is best.
fn arm_mean(g: usize) -> f64 {
    0.2 + 0.08 * g as f64
}

fn criterion_5() -> Vec<Verdict> {
    let best = (0..BlockConfig::COUNT)
        .max_by(|a, b| arm_mean(*a).total_cmp(&arm_mean(*b)))
        .unwrap();
    let mut state = CmabState::new(CmabParams::default(), 10.0).unwrap();
    let mut rng = rng_from_seed(5);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut worst = 1.0f64;
    for ctx in Context::ALL {
        for _ in 0..2000 {
            let g = state.select_config(ctx, &mut rng);
            let r = arm_mean(g.index()) + noise.sample(&mut rng);
            state.update_estimate(ctx, g, r);
        }
        let hits = (0..1000)
            .filter(|_| state.select_config_with(ctx, 0.0, &mut rng).index() == best)
            .count();
        worst = worst.min(hits as f64 / 1000.0);
    }
    vec![verdict(
        "5",
        best == 8 && worst >= 0.9,
        format!(
            "best arm {}, worst per-context hit rate {worst:.3}",
            BlockConfig::from_index(best)
        ),
    )]
}

fn criterion_6() -> Vec<Verdict> {
    let params = env::SystemParams::default();
    let mut rng = rng_from_seed(6);
    let mut violations = 0;
    let mut successes = 0;
    for _ in 0..100_000 {
        let slot = common::random_slot(&mut rng);
        let b = rng.random_range(0.5..30.0);
        let obs = common::random_observation(&slot, b, &mut rng);
        let decision = common::random_decision(&slot, &mut rng);
        let (o, _) = env::step(&slot, b, &obs, &decision, &params).expect("valid step");
        successes += usize::from(o.success);
        if o.success && o.latency.total > params.l_max {
            violations += 1;
        }
    }
    vec![verdict(
        "6",
        violations == 0,
        format!("{violations} violations in 100000 triples ({successes} successes)"),
    )]
}

fn run_default_compare(mode: ExecMode) -> ComparisonTable {
    let cfg = RunConfig::default();
    let pair = TracePair::generate(&cfg.scene, &cfg.bandwidth, cfg.trace_seed, cfg.slots).unwrap();
    let (train, test) = split_trace(&pair, cfg.train_fraction).unwrap();
    compare(
        &Policy::ALL,
        &train,
        &test,
        &cfg.system,
        &cfg.settings(),
        &cfg.seeds,
        mode,
    )
    .unwrap()
}

fn criteria_7_and_8() -> Vec<Verdict> {
    let cfg = RunConfig::default();
    assert_eq!(cfg.seeds.len(), 5);
    let first = run_default_compare(ExecMode::Parallel);
    let mean = |p: Policy, k: usize| first.aggregate(p).unwrap().mean[k];
    let (reward, rate, acc, latency) = (0, 1, 2, 3);
    let others = [Policy::RandRand, Policy::RandCmab, Policy::DdqnRand, Policy::FullHigh];

    let summary = |k: usize| {
        Policy::ALL
            .iter()
            .map(|p| format!("{} {:.4}", p.name(), mean(*p, k)))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let a = others.iter().all(|p| mean(Policy::Dcrl, reward) > mean(*p, reward));
    let gain = mean(Policy::Dcrl, rate) / mean(Policy::FullHigh, rate) - 1.0;
    let b = gain >= 0.30;
    let c = Policy::ALL
        .iter()
        .filter(|p| **p != Policy::FullHigh)
        .all(|p| mean(Policy::FullHigh, rate) < mean(*p, rate) && mean(Policy::FullHigh, acc) > mean(*p, acc));
    let d = others.iter().all(|p| mean(Policy::Dcrl, latency) < mean(*p, latency));

    let second = run_default_compare(ExecMode::Sequential);
    let same = first.to_csv_string().unwrap() == second.to_csv_string().unwrap();

    vec![
        verdict("7a", a, format!("mean cumulative reward: {}", summary(reward))),
        verdict(
            "7b",
            b,
            format!("DCRL processing rate {:+.1}% relative to F-B", 100.0 * gain),
        ),
        verdict(
            "7c",
            c,
            format!(
                "processing rate: {}; accuracy on success: {}",
                summary(rate),
                summary(acc)
            ),
        ),
        verdict("7d", d, format!("mean latency: {}", summary(latency))),
        verdict(
            "8",
            same,
            "repeat run (sequential) byte-identical to first run (parallel)",
        ),
    ]
}

/// The utility formula evaluated term by term over the raw q and acc vectors.
fn brute_force_utility(q: &[bool], acc: &[f64], eta: f64) -> f64 {
    let t = q.len() as f64;
    let sum_q: f64 = q.iter().map(|s| f64::from(u8::from(*s))).sum();
    let sum_q_acc: f64 = q.iter().zip(acc).map(|(s, a)| f64::from(u8::from(*s)) * a).sum();
    let second = if sum_q == 0.0 { 0.0 } else { eta * sum_q_acc / sum_q };
    sum_q / t + second
}

fn criterion_9() -> Vec<Verdict> {
    let mut rng = rng_from_seed(9);
    let mut mismatches = 0;
    for _ in 0..100 {
        let t = rng.random_range(1..=50);
        let eta = rng.random_range(0.1..3.0);
        let q: Vec<bool> = (0..t).map(|_| rng.random_bool(0.6)).collect();
        let acc: Vec<f64> = (0..t).map(|_| rng.random_range(0.0..1.0)).collect();
        let outcomes: Vec<StepOutcome> = q
            .iter()
            .zip(&acc)
            .map(|(s, a)| StepOutcome {
                action: env::Action::Skip,
                latency: Default::default(),
                acc: *a,
                success: *s,
                reward: 0.0,
                payload_mb: 0.0,
                blocks_sent: 0,
            })
            .collect();
        if env::episode_utility(&outcomes, eta).unwrap() != brute_force_utility(&q, &acc, eta) {
            mismatches += 1;
        }
    }
    vec![verdict(
        "9",
        mismatches == 0,
        format!("{mismatches} mismatches over 100 episodes"),
    )]
}

/// `(selector, name, runner)`
type Criterion = (&'static str, &'static str, fn() -> Vec<Verdict>);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1", "formula fidelity", criterion_1),
        ("2", "gradient oracle", criterion_2),
        ("3", "double-DQN target", criterion_3),
        ("4", "toy MDP convergence", criterion_4),
        ("5", "bandit best arm", criterion_5),
        ("6", "deadline constraint", criterion_6),
        ("9", "utility oracle", criterion_9),
        ("7", "end-to-end ordering and determinism", criteria_7_and_8),
    ];
    // positional arguments select criteria by number, e.g. `-- 1 4`
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (key, name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == key) {
            continue;
        }
        let start = Instant::now();
        let verdicts = run();
        let secs = start.elapsed().as_secs_f64();
        for v in verdicts {
            let tag = if v.pass { "PASS" } else { "FAIL" };
            println!("{tag} criterion {:<3} {name} ({secs:.1}s): {}", v.id, v.detail);
            failed += usize::from(!v.pass);
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} check(s) failed");
        ExitCode::FAILURE
    }
}
