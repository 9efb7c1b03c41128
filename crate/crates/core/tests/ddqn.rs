use dcrl_core::ddqn::{select_action, DdqnAgent, DdqnHyper, ReplayBuffer, Transition, STATE_DIM};
use dcrl_core::env::Action;
use dcrl_core::nn::QNetwork;
use dcrl_core::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

fn random_transition<R: Rng>(rng: &mut R) -> Transition {
    Transition {
        state: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        action: rng.random_range(0..Action::COUNT),
        reward: rng.random_range(0.0..1.5),
        next_state: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        terminal: rng.random_bool(0.01),
    }
}

#[test]
fn full_exploration_is_uniform_over_actions() {
    let mut rng = rng_from_seed(41);
    let net = QNetwork::new(&[STATE_DIM, 8, Action::COUNT], &mut rng);
    let state = [0.3, 0.9, 0.25, 0.1];
    let mut counts = [0usize; Action::COUNT];
    let draws = 100_000;
    for _ in 0..draws {
        counts[select_action(&net, &state, 1.0, &mut rng)] += 1;
    }
    for c in counts {
        let f = c as f64 / draws as f64;
        assert!((0.19..=0.21).contains(&f), "frequency {f}");
    }
}

#[test]
fn zero_exploration_is_greedy() {
    let mut rng = rng_from_seed(42);
    let net = QNetwork::new(&[STATE_DIM, 8, Action::COUNT], &mut rng);
    let state = [0.5; 4];
    let best = dcrl_core::ddqn::argmax(&net.forward(&state));
    assert!((0..1000).all(|_| select_action(&net, &state, 0.0, &mut rng) == best));
}

#[test]
fn replay_sampling_is_uniform() {
    let capacity = 50;
    let mut buf = ReplayBuffer::new(capacity);
    for i in 0..capacity {
        buf.push(Transition {
            state: [i as f64, 0.0, 0.0, 0.0],
            action: 0,
            reward: 0.0,
            next_state: [0.0; 4],
            terminal: false,
        });
    }
    let mut rng = rng_from_seed(43);
    let (rounds, batch) = (20_000, 8);
    let mut hits = vec![0usize; capacity];
    for _ in 0..rounds {
        for t in buf.sample(batch, &mut rng).unwrap() {
            hits[t.state[0] as usize] += 1;
        }
    }
    // each entry is included with probability batch / capacity per round
    let p = batch as f64 / capacity as f64;
    let mean = rounds as f64 * p;
    let sd = (rounds as f64 * p * (1.0 - p)).sqrt();
    for h in hits {
        assert!(
            (h as f64 - mean).abs() < 3.0 * sd + 1.0,
            "hits {h}, expected {mean} ± {sd}"
        );
    }
}

#[test]
fn target_network_only_changes_on_sync() {
    let hyper = DdqnHyper {
        sync_period: 25,
        batch_size: 4,
        ..Default::default()
    };
    let mut agent = DdqnAgent::new(hyper.clone(), Action::COUNT, 44).unwrap();
    let mut rng = rng_from_seed(45);
    let mut frozen = agent.target.clone();
    for step in 1..=200u64 {
        agent.observe(random_transition(&mut rng), &mut rng).unwrap();
        if step % hyper.sync_period == 0 {
            assert_eq!(agent.target, agent.online, "step {step}");
            frozen = agent.target.clone();
        } else {
            assert_eq!(agent.target, frozen, "step {step}");
            if step > hyper.batch_size as u64 {
                assert_ne!(agent.online, agent.target, "step {step}");
            }
        }
    }
    assert_eq!(agent.steps(), 200);
}

#[test]
fn training_keeps_parameters_finite() {
    let mut agent = DdqnAgent::new(DdqnHyper::default(), Action::COUNT, 46).unwrap();
    let mut rng = rng_from_seed(47);
    let mut losses = Vec::new();
    for _ in 0..3000 {
        losses.extend(agent.observe(random_transition(&mut rng), &mut rng).unwrap());
    }
    assert!(agent.online.is_finite() && agent.target.is_finite());
    assert_eq!(losses.len(), 3000 - 31);
    assert!(losses.iter().all(|l| l.is_finite() && *l >= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn buffer_keeps_the_newest_entries(capacity in 1usize..64, pushes in 0usize..200) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(Transition {
                state: [0.0; 4],
                action: 0,
                reward: i as f64,
                next_state: [0.0; 4],
                terminal: false,
            });
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        let first = pushes.saturating_sub(capacity);
        for k in 0..buf.len() {
            prop_assert_eq!(buf.get(k).unwrap().reward, (first + k) as f64);
        }
    }
}
