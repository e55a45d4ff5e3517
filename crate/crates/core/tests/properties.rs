use std::collections::{BTreeMap, BTreeSet};

use copo_core::env::{builtin, AgentId, KinematicAction, SimConfig, Simulator, TerminationReason, Vec2};
use copo_core::eval::{idm_acceleration, EpisodeMetrics, IdmPolicyConfig, Leader};
use copo_core::netcore::ParamSet;
use copo_core::rollout::{build_batch, fill_reward_streams, AgentEpisodeBuffer, BehaviorNets, Collector, CollectorConfig, EnvironmentalEpisode, GaeConfig, TransitionRecord};
use copo_core::trainer::{Algorithm, LcfDistribution};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_step(sim: &mut Simulator, rng: &mut ChaCha8Rng) -> copo_core::env::StepOutcome {
    let actions: BTreeMap<_, _> = sim
        .active_ids()
        .into_iter()
        .map(|id| (id, KinematicAction::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
        .collect();
    sim.step(&actions).unwrap()
}

fn synthetic_episode(rng: &mut ChaCha8Rng) -> EnvironmentalEpisode {
    let horizon = 60;
    let buffers = (0..rng.random_range(2..8u32))
        .map(|a| {
            let start = rng.random_range(1..30);
            let end = rng.random_range(start..=horizon);
            let records = (start..=end)
                .map(|t| TransitionRecord {
                    agent_id: AgentId(a),
                    step: t,
                    obs: vec![rng.random_range(-1.0..1.0)],
                    action: vec![0.0, 0.0],
                    log_prob: 0.0,
                    behavior_mean: vec![0.0, 0.0],
                    behavior_log_std: vec![0.0, 0.0],
                    position: Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)),
                    r_individual: rng.random_range(-1.0..1.0),
                    r_neighborhood: 0.0,
                    r_global: 0.0,
                    done: t == end,
                    values: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                    lcf_phi: 0.0,
                    lcf_eps: 0.0,
                    lcf_clamped: false,
                    critic_obs: None,
                })
                .collect();
            AgentEpisodeBuffer { agent_id: AgentId(a), records, reason: Some(TerminationReason::Success), bootstrap: [0.0; 3] }
        })
        .collect();
    let mut ep = EnvironmentalEpisode { env_index: 0, buffers, active_counts: vec![], horizon };
    fill_reward_streams(&mut ep, 10.0);
    ep
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulator_contracts_hold_under_random_driving(seed in any::<u64>(), scene_pick in 0usize..2) {
        let scene = [builtin::mini_intersection(), builtin::merge()][scene_pick].clone();
        let cfg = SimConfig { horizon: 80, ..SimConfig::default() };
        let (mut sim, obs0) = Simulator::reset(&scene, cfg.clone(), seed);
        let (mut twin, twin_obs0) = Simulator::reset(&scene, cfg, seed);
        prop_assert_eq!(&obs0, &twin_obs0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut twin_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terminated = BTreeSet::new();
        while !sim.is_finished() {
            let out = random_step(&mut sim, &mut rng);
            prop_assert_eq!(&out, &random_step(&mut twin, &mut twin_rng));
            for (id, r) in &out.results {
                prop_assert!(!terminated.contains(id), "agent {:?} acted after terminating", id);
                prop_assert!(r.reward.is_finite() && r.speed >= 0.0);
                if r.done {
                    terminated.insert(*id);
                }
            }
            for o in out.observations.values() {
                prop_assert!(o.as_slice().iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
            }
            for id in &out.spawned {
                let body = sim.vehicle(*id).unwrap().body();
                let clash = sim.vehicles().chain(sim.dead_vehicles()).filter(|v| v.agent_id != *id).any(|v| v.body().overlaps(&body));
                prop_assert!(!clash, "spawned {:?} overlaps another body", id);
            }
            for v in sim.vehicles() {
                prop_assert!(v.steering.abs() <= cfg_max_steer(&sim) + 1e-12);
                for n in sim.neighborhood_query(v.agent_id, 10.0) {
                    prop_assert!(sim.neighborhood_query(n, 10.0).contains(&v.agent_id));
                }
            }
        }
    }

    #[test]
    fn neighborhood_edits_leave_other_streams_alone(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ep = synthetic_episode(&mut rng);
        let base = build_batch(std::slice::from_ref(&ep), &GaeConfig::default(), true, false).unwrap();
        let mut edited = ep.clone();
        for r in edited.buffers.iter_mut().flat_map(|b| b.records.iter_mut()) {
            r.r_neighborhood = r.r_neighborhood * 3.0 + shift;
        }
        let other = build_batch(&[edited], &GaeConfig::default(), true, false).unwrap();
        prop_assert_eq!(&base.advantages[0], &other.advantages[0]);
        prop_assert_eq!(&base.advantages[2], &other.advantages[2]);
    }

    #[test]
    fn gae_of_one_agent_ignores_the_others(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ep = synthetic_episode(&mut rng);
        let first = &ep.buffers[0];
        let n = first.records.len();
        let base = build_batch(std::slice::from_ref(&ep), &GaeConfig::default(), false, false).unwrap();
        let mut shuffled = ep.clone();
        let tail = shuffled.buffers.split_off(1);
        let mut tail: Vec<_> = tail.into_iter().rev().collect();
        for b in &mut tail {
            b.records.iter_mut().for_each(|r| r.r_individual = -r.r_individual);
        }
        shuffled.buffers.extend(tail);
        let other = build_batch(&[shuffled], &GaeConfig::default(), false, false).unwrap();
        prop_assert_eq!(&base.advantages[0][..n], &other.advantages[0][..n]);
    }

    #[test]
    fn metric_identities(outcomes in proptest::collection::vec(0usize..4, 1..60), steps in 1usize..2000) {
        let reasons = [TerminationReason::Success, TerminationReason::Crash, TerminationReason::OutOfRoad, TerminationReason::Truncated];
        let mut m = EpisodeMetrics { episodes: 1, steps, ..Default::default() };
        outcomes.iter().for_each(|&k| m.record(reasons[k]));
        let count = |k: usize| outcomes.iter().filter(|&&o| o == k).count();
        prop_assert_eq!(m.agents(), outcomes.len());
        prop_assert_eq!(m.success_rate(), count(0) as f64 / outcomes.len() as f64);
        prop_assert_eq!(m.efficiency(), (count(0) as f64 - (count(1) + count(2)) as f64) / steps as f64);
        prop_assert_eq!(m.safety(), count(1));
    }

    #[test]
    fn idm_interaction_is_scale_free(speed in 0.5f64..12.0, gap in 3.0f64..60.0) {
        let cfg = IdmPolicyConfig { desired_speed: 1e9, ..IdmPolicyConfig::default() };
        let doubled = IdmPolicyConfig { min_gap: 2.0 * cfg.min_gap, time_headway: 2.0 * cfg.time_headway, ..cfg };
        let a = idm_acceleration(speed, Some(Leader { gap, speed }), &cfg);
        let b = idm_acceleration(speed, Some(Leader { gap: 2.0 * gap, speed }), &doubled);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

fn cfg_max_steer(sim: &Simulator) -> f64 {
    sim.config().max_steer
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn coordination_factor_is_fixed_per_agent_episode(seed in any::<u64>()) {
        let scene = builtin::mini_intersection();
        let cfg = CollectorConfig {
            n_envs: 2,
            seed,
            sim: SimConfig { horizon: 120, ..SimConfig::default() },
            neighborhood_radius: 10.0,
            feed_phi: false,
            critic: Algorithm::Copo.critic_spec(4, 10.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = ParamSet::init(&[copo_core::env::OBS_DIM, 8, 2], Some(-0.5), 1.0, &mut rng);
        let value = ParamSet::init(&[copo_core::env::OBS_DIM, 8, 1], None, 1.0, &mut rng);
        let nets = BehaviorNets { policy: &policy, values: [&value, &value, &value] };
        let mut collector = Collector::new(&scene, cfg);
        let (episodes, _) = collector.collect(&nets, &LcfDistribution::new(0.2, 0.5), 400).unwrap();
        let mut phi_of: BTreeMap<(usize, AgentId), f64> = BTreeMap::new();
        for ep in &episodes {
            for b in &ep.buffers {
                prop_assert!(b.is_well_formed());
                for r in &b.records {
                    let phi = *phi_of.entry((ep.env_index, b.agent_id)).or_insert(r.lcf_phi);
                    prop_assert_eq!(phi, r.lcf_phi);
                }
            }
        }
    }
}
