use aht_core::env::trace::TraceRow;
use aht_core::env::{AgentAction, EnvConfig, EpisodeState, MessageContent};
use aht_core::nn::{Checkpoint, Mlp, NamedNetwork};
use aht_core::rng::{stream, Stream};
use aht_core::rollout::{collect_traced, critic_input_width, policy_input_width, RolloutBuffer};
use aht_core::sum::exact_sum;
use proptest::prelude::*;
use rand::Rng;

fn config(m: usize, k: usize, c: f64, no_overlap: bool, communication: bool) -> EnvConfig {
    let mut cfg = if no_overlap && m.is_multiple_of(k) {
        EnvConfig::no_overlap(m, k, c).unwrap()
    } else {
        EnvConfig::independent(m, k, c).unwrap()
    };
    cfg.communication = communication;
    cfg
}

/// Uniformly random legal action for every active agent.
fn random_actions(cfg: &EnvConfig, ep: &EpisodeState, rng: &mut impl Rng) -> Vec<Option<AgentAction>> {
    (0..cfg.num_agents())
        .map(|k| {
            ep.is_active(k).then(|| {
                let mask = ep.action_mask(cfg, k);
                let legal: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
                let slot = legal[rng.random_range(0..legal.len())];
                if slot == cfg.stop_slot() {
                    AgentAction::Stop
                } else {
                    AgentAction::Sample(cfg.agents[k].local_index(slot).unwrap())
                }
            })
        })
        .collect()
}

fn zero_actor(cfg: &EnvConfig, hidden: &[usize]) -> (Mlp, Mlp) {
    let mut actor = Mlp::new(policy_input_width(cfg), hidden, cfg.num_action_slots(), 0.01, &mut stream(1, Stream::Init, 0));
    let n = actor.num_params();
    actor.set_params_flat(&vec![0.0; n]).unwrap();
    let critic = Mlp::new(critic_input_width(cfg), hidden, 1, 1.0, &mut stream(1, Stream::Init, 1));
    (actor, critic)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn negated_rewards_equal_risk_exactly(
        m in 2usize..8,
        k in 1usize..4,
        c in 0.0f64..0.3,
        no_overlap in any::<bool>(),
        communication in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let cfg = config(m, k, c, no_overlap, communication);
        let mut ep = EpisodeState::new(&cfg, seed).unwrap();
        let mut rng = stream(seed, Stream::Policy, 0);
        let mut rewards = Vec::new();
        loop {
            let actions = random_actions(&cfg, &ep, &mut rng);
            let out = ep.step(&cfg, &actions).unwrap();
            rewards.extend(out.agents.iter().flatten().map(|s| s.reward));
            if let Some(o) = out.outcome {
                rewards.extend(o.terminal_rewards.iter().copied());
                prop_assert_eq!(-exact_sum(rewards), o.risk());
                let wrong = (0..k).filter(|&a| o.is_wrong(a)).count();
                prop_assert_eq!(o.terminal_cost, cfg.terminal_costs[wrong]);
                break;
            }
        }
    }

    #[test]
    fn identical_seeds_give_identical_episodes(
        m in 2usize..7,
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let cfg = config(m, k, 0.05, false, true);
        let run = || {
            let mut ep = EpisodeState::new(&cfg, seed).unwrap();
            let mut rng = stream(seed, Stream::Policy, 1);
            let mut log = Vec::new();
            while !ep.is_terminal() {
                let actions = random_actions(&cfg, &ep, &mut rng);
                let out = ep.step(&cfg, &actions).unwrap();
                log.push(format!("{:?}", out.agents));
            }
            (log, ep.outcome().cloned())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn messages_depend_only_on_earlier_actions(
        m in 2usize..7,
        seed in any::<u64>(),
        prefix in 1usize..6,
    ) {
        // Two runs share every action before tick `prefix + 1` and differ at
        // that tick; what agents see when choosing that tick must agree.
        let cfg = config(m, 2, 0.05, false, true);
        let mut a = EpisodeState::new(&cfg, seed).unwrap();
        let mut rng = stream(seed, Stream::Policy, 2);
        for _ in 0..prefix {
            if a.is_terminal() { return Ok(()); }
            let acts: Vec<_> = (0..2).map(|k| a.is_active(k).then(|| AgentAction::Sample(rng.random_range(0..m)))).collect();
            a.step(&cfg, &acts).unwrap();
        }
        let b = a.clone();
        let (mut a2, mut b2) = (a.clone(), b.clone());
        let visible_a = a2.messages().to_vec();
        let visible_b = b2.messages().to_vec();
        a2.step(&cfg, &[Some(AgentAction::Sample(0)), Some(AgentAction::Sample(0))]).unwrap();
        b2.step(&cfg, &[Some(AgentAction::Stop), Some(AgentAction::Sample(m - 1))]).unwrap();
        prop_assert_eq!(visible_a, visible_b);
        prop_assert_ne!(a2.messages()[0].content, b2.messages()[0].content);
        prop_assert!(matches!(b2.messages()[0].content, MessageContent::Declared(_)));
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(
        input in 1usize..9,
        hidden in prop::collection::vec(1usize..12, 0..3),
        output in 1usize..6,
        seed in any::<u64>(),
        scalar in any::<f64>(),
    ) {
        let net = Mlp::new(input, &hidden, output, 0.5, &mut stream(seed, Stream::Init, 0));
        let ck = Checkpoint {
            networks: vec![NamedNetwork { name: "actor".into(), net: net.clone(), optimizer: None }],
            scalars: vec![("x".into(), scalar)],
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        let a: Vec<u64> = net.params_flat().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.network("actor").unwrap().net.params_flat().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(back.scalar("x").map(f64::to_bits), Some(scalar.to_bits()));
    }

    #[test]
    fn collected_buffers_satisfy_risk_identity(seed in any::<u64>(), k in 1usize..4) {
        let cfg = config(4, k, 0.07, false, true);
        let (actor, critic) = zero_actor(&cfg, &[6]);
        let (buf, _) = collect_traced(&cfg, &actor, &critic, 60, seed, 1).unwrap();
        check_buffer(&buf)?;
    }
}

fn check_buffer(buf: &RolloutBuffer) -> Result<(), TestCaseError> {
    for (i, ep) in buf.episodes().iter().enumerate() {
        let rewards = buf.transitions()[ep.range.clone()].iter().flat_map(|t| [t.step_reward, t.terminal_reward]);
        prop_assert_eq!(-exact_sum(rewards), ep.outcome.risk());
        prop_assert_eq!(buf.episode_cost(i), ep.outcome.risk());
    }
    Ok(())
}

/// Rebuild the actor input of every transition from the trace rows of
/// earlier ticks plus the agent's own belief at the current tick.
#[test]
fn policy_inputs_are_reconstructible_from_earlier_trace() {
    let cfg = config(4, 3, 0.1, false, true);
    let (actor, critic) = zero_actor(&cfg, &[6]);
    let (buf, rows) = collect_traced(&cfg, &actor, &critic, 400, 11, 1).unwrap();
    let m = cfg.num_processes();
    let prior = vec![0.25; m];
    let row = |e: u64, k: usize, step: u32| -> Option<&TraceRow> {
        rows.iter().find(|r| r.episode == e && r.agent == k && r.step == step)
    };
    // Latest row of `k` strictly before `step`.
    let last_before = |e: u64, k: usize, step: u32| -> Option<&TraceRow> {
        rows.iter().filter(|r| r.episode == e && r.agent == k && r.step < step).max_by_key(|r| r.step)
    };
    for t in buf.transitions() {
        let own = if t.step == 1 {
            prior.clone()
        } else {
            row(t.episode, t.agent, t.step - 1).unwrap().beliefs.clone()
        };
        let mut expected = own;
        for peer in (0..3).filter(|&j| j != t.agent) {
            let mut block = vec![0.0; 2 * m + 1];
            if let Some(r) = last_before(t.episode, peer, t.step) {
                match r.message {
                    MessageContent::LastAction(p) if r.step == t.step - 1 => block[p] = 1.0,
                    MessageContent::Declared(d) => {
                        block[m] = 1.0;
                        block[m + 1 + d] = 1.0;
                    }
                    _ => {}
                }
            }
            expected.extend(block);
        }
        assert_eq!(t.policy_input, expected, "episode {} agent {} step {}", t.episode, t.agent, t.step);
    }
}

/// Sampling only the anomalous process drives its posterior above 0.99
/// within the horizon in nearly every episode.
#[test]
fn posterior_concentrates_on_the_anomaly() {
    let cfg = EnvConfig::independent(5, 1, 0.05).unwrap();
    let mut hits = 0;
    for seed in 0..1000u64 {
        let mut ep = EpisodeState::new(&cfg, seed).unwrap();
        let h = ep.true_hypothesis();
        let mut reached = false;
        while !ep.is_terminal() && ep.time() < 199 {
            ep.step(&cfg, &[Some(AgentAction::Sample(h))]).unwrap();
            if ep.belief(0).probs()[h] > 0.99 {
                reached = true;
                break;
            }
        }
        hits += usize::from(reached);
    }
    assert!(hits >= 950, "{hits} of 1000 episodes concentrated");
}

/// A stopped agent takes no further ticks and pays nothing after stopping.
#[test]
fn stopped_agents_accrue_no_cost() {
    let cfg = config(5, 2, 0.05, false, true);
    let mut ep = EpisodeState::new(&cfg, 3).unwrap();
    let first = ep.step(&cfg, &[Some(AgentAction::Stop), Some(AgentAction::Sample(1))]).unwrap();
    assert_eq!(first.agents[0].as_ref().unwrap().reward, -0.05);
    for _ in 0..4 {
        let out = ep.step(&cfg, &[None, Some(AgentAction::Sample(2))]).unwrap();
        assert!(out.agents[0].is_none());
    }
    let out = ep.step(&cfg, &[None, Some(AgentAction::Stop)]).unwrap();
    let o = out.outcome.unwrap();
    assert_eq!(o.stop_times, vec![1, 6]);
    assert_eq!(o.total_samples(), 7);
}

/// A stopping agent whose top beliefs tie picks the process a peer sampled
/// on the previous tick, and ignores it without communication.
#[test]
fn ties_follow_peer_sample_only_with_communication() {
    for communication in [true, false] {
        let cfg = config(3, 2, 0.05, false, communication);
        let seed = (0..1000u64)
            .find(|&s| {
                let mut ep = EpisodeState::new(&cfg, s).unwrap();
                ep.step(&cfg, &[Some(AgentAction::Sample(2)), Some(AgentAction::Sample(1))]).unwrap();
                ep.belief(0).probs()[2] < ep.belief(0).probs()[0]
            })
            .unwrap();
        let mut ep = EpisodeState::new(&cfg, seed).unwrap();
        ep.step(&cfg, &[Some(AgentAction::Sample(2)), Some(AgentAction::Sample(1))]).unwrap();
        ep.step(&cfg, &[Some(AgentAction::Stop), Some(AgentAction::Sample(0))]).unwrap();
        assert_eq!(ep.declaration(0), Some(if communication { 1 } else { 0 }));
    }
}
