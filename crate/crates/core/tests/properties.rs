// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::sync::Arc;

use bpa_core::advice::{AdviceSource, Decision};
use bpa_core::advisors::default_rules;
use bpa_core::mountain_car::{self, McAction, McState};
use bpa_core::selfdrive::{self, CarPose, SdAction, SelfDriveOptions, V_MAX, V_MIN};
use bpa_core::*;
use proptest::prelude::*;

fn action_strategy(n: usize) -> impl Strategy<Value = usize> {
    0..n
}

proptest! {
    #[test]
    fn mountain_car_stays_in_bounds(
        x in -1.2f64..=0.6,
        v in -0.07f64..=0.07,
        actions in prop::collection::vec(action_strategy(3), 1..200),
    ) {
        let mut s = McState { x, v };
        for a in actions {
            let (next, r, done) = mountain_car::step(s, McAction::from_id(a).unwrap());
            prop_assert!((-1.2..=0.6).contains(&next.x));
            prop_assert!(next.v.abs() <= 0.07);
            prop_assert!(r == -1.0 || (r == 0.0 && done));
            prop_assert_eq!(done, next.x >= 0.6);
            if done { break; }
            s = next;
        }
    }

    #[test]
    fn self_drive_step_invariants(
        seed in any::<u64>(),
        actions in prop::collection::vec(action_strategy(5), 1..300),
    ) {
        let map = ArenaMap::default();
        let opts = SelfDriveOptions::default();
        let mut rng = derive_stream(seed, "env");
        let mut pose: CarPose = selfdrive::safe_reset(&map, &mut rng).unwrap();
        for a in actions {
            let (next, r, hit) = selfdrive::step(&pose, SdAction::from_id(a).unwrap(), &map, &opts, &mut rng).unwrap();
            prop_assert!(next.velocity_index <= 8);
            prop_assert!(!map.collides(next.px, next.py));
            if hit {
                prop_assert_eq!(r, -100.0);
                prop_assert_eq!(next.velocity_index, 0);
            } else {
                prop_assert_eq!(r, next.velocity());
                prop_assert!((V_MIN..=V_MAX).contains(&r));
            }
            prop_assert!((0.0..std::f64::consts::TAU).contains(&next.heading));
            pose = next;
        }
    }

    #[test]
    fn live_advice_always_wins(
        live in 0usize..5,
        default in 0usize..5,
        stored in prop::option::of(0usize..5),
        mode in prop_oneof![Just(AdviceMode::None), Just(AdviceMode::NonPersistent), Just(AdviceMode::Persistent)],
        episode in 0u32..1000,
        seed in any::<u64>(),
    ) {
        let mut store = AdviceStore::new();
        let c = ClusterId(3);
        if let Some(a) = stored {
            store.record(c, a, AdviceSource::Simulated, None);
        }
        let mut rng = derive_stream(seed, "agent");
        let d = store.arbitrate(mode, Some((live, AdviceSource::Live)), c, None, &PprParams::default(), episode, default, &mut rng);
        prop_assert_eq!(d, Decision { action: live, provenance: Provenance::Advisor });
    }

    #[test]
    fn psi_is_monotone_and_bounded(
        psi0 in 0.0f64..=1.0,
        decay in 0.01f64..=1.0,
        floor in 0.0f64..=1.0,
        e in 0u32..10_000,
    ) {
        let p = PprParams { psi0, decay, floor };
        let (a, b) = (p.psi(e), p.psi(e + 1));
        prop_assert!(b <= a);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a, (psi0 * decay.powf(f64::from(e))).max(floor));
    }

    #[test]
    fn q_update_touches_one_cell(
        s in 0usize..6, a in 0usize..3, s2 in 0usize..6,
        r in -10.0f64..10.0, terminal in any::<bool>(),
    ) {
        let mut q = QTable::new(6, 3, 0.5);
        q.set(s2, 1, 2.0);
        let before = q.clone();
        q.update(s, a, r, s2, terminal, &LearnParams::default());
        let changed = q.iter().zip(before.iter()).filter(|(x, y)| x.2 != y.2).count();
        prop_assert!(changed <= 1);
        for ((ss, aa, v), (_, _, w)) in q.iter().zip(before.iter()) {
            if (ss, aa) != (s, a) { prop_assert_eq!(v, w); }
        }
    }
}

fn mc_runner(mode: AdviceMode, user: Option<SimulatedUser>, seed: u64) -> Runner<MountainCar> {
    let advisor = user.map(|u| Box::new(u) as episode::BoxedAdvisor<MountainCar>);
    Runner::new(
        MountainCar::new(),
        LearnerConfig::mountain_car(mode),
        advisor,
        seed,
        EpisodeLimit::MOUNTAIN_CAR,
    )
    .unwrap()
}

fn sd_runner(
    mode: AdviceMode,
    advisor: Option<episode::BoxedAdvisor<SelfDrive>>,
    seed: u64,
) -> Runner<SelfDrive> {
    let env = SelfDrive::new(Arc::new(ArenaMap::default()), SelfDriveOptions::default()).unwrap();
    Runner::new(
        env,
        LearnerConfig::self_drive(mode),
        advisor,
        seed,
        EpisodeLimit::SELF_DRIVE,
    )
    .unwrap()
}

#[test]
fn untrained_unassisted_mountain_car_hits_the_cap() {
    let mut r = mc_runner(AdviceMode::None, None, 1);
    let m = r.run_episode().unwrap();
    assert_eq!(m.steps, 1000);
    assert_eq!(m.total_reward, -1000.0);
    assert_eq!(m.interactions, 0);
}

#[test]
fn episode_reward_is_minus_steps_before_goal() {
    let mut r = mc_runner(AdviceMode::Persistent, Some(SimulatedUser::optimistic()), 2);
    for m in r.run(30).unwrap() {
        assert!(m.steps <= 1000);
        if m.steps < 1000 {
            assert_eq!(m.total_reward, -f64::from(m.steps - 1));
        } else {
            assert!(m.total_reward == -1000.0 || m.total_reward == -999.0);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let a = mc_runner(AdviceMode::Persistent, Some(SimulatedUser::realistic()), 9)
        .run(20)
        .unwrap();
    let b = mc_runner(AdviceMode::Persistent, Some(SimulatedUser::realistic()), 9)
        .run(20)
        .unwrap();
    assert_eq!(a, b);
    let c = mc_runner(AdviceMode::Persistent, Some(SimulatedUser::realistic()), 10)
        .run(20)
        .unwrap();
    assert_ne!(a, c);
}

#[test]
fn episode_limit_is_respected() {
    let env = MountainCar::new();
    let mut r = Runner::new(
        env,
        LearnerConfig::mountain_car(AdviceMode::None),
        None,
        0,
        EpisodeLimit::new(17),
    )
    .unwrap();
    for m in r.run(5).unwrap() {
        assert!(m.steps <= 17);
    }
}

#[test]
fn states_in_one_grid_cell_share_advice() {
    let g = Generalizer::UniformGrid {
        bins_per_dim: vec![20, 20],
        lo: vec![-1.2, -0.07],
        hi: vec![0.6, 0.07],
    };
    let a = [-0.52, 0.001];
    let b = [-0.51, 0.002];
    let view = |f: &'static [f64; 2]| StateView {
        features: f,
        discrete: None,
    };
    let (ca, cb) = (
        g.assign(view(Box::leak(Box::new(a)))),
        g.assign(view(Box::leak(Box::new(b)))),
    );
    assert_eq!(ca, cb);
    let mut store = AdviceStore::new();
    store.record(ca, 2, AdviceSource::Simulated, Some(a.to_vec()));
    let always = PprParams {
        psi0: 1.0,
        decay: 1.0,
        floor: 0.0,
    };
    let d = store.arbitrate(
        AdviceMode::Persistent,
        None,
        cb,
        Some(&b),
        &always,
        0,
        0,
        &mut derive_stream(0, "agent"),
    );
    assert_eq!(
        d,
        Decision {
            action: 2,
            provenance: Provenance::Reused
        }
    );
}

#[test]
fn persistent_user_never_repeats_a_cluster_and_store_is_bounded() {
    // Suppression off so the user's own memory is what stops repeats.
    let mut cfg = LearnerConfig::mountain_car(AdviceMode::Persistent);
    cfg.suppress_queries_on_known_cluster = false;
    let user = SimulatedUser::optimistic();
    let mut r = Runner::new(
        MountainCar::new(),
        cfg,
        Some(Box::new(user)),
        4,
        EpisodeLimit::MOUNTAIN_CAR,
    )
    .unwrap();
    let mut advised = BTreeSet::new();
    for _ in 0..20 {
        loop {
            let rec = r.step(None).unwrap();
            if rec.provenance == Provenance::Advisor {
                assert!(
                    advised.insert(rec.cluster),
                    "cluster {:?} advised twice",
                    rec.cluster
                );
            }
            if rec.episode_end.is_some() {
                break;
            }
        }
    }
    assert!(r.learner().store().len() <= 400);
    assert_eq!(r.learner().store().len(), advised.len());
}

#[test]
fn no_reuse_without_persistence() {
    for mode in [AdviceMode::None, AdviceMode::NonPersistent] {
        let mut r = mc_runner(mode, Some(SimulatedUser::realistic()), 5);
        for m in r.run(10).unwrap() {
            assert_eq!(m.reused_steps, 0);
            if mode == AdviceMode::None {
                assert_eq!(m.interactions, 0);
            }
        }
    }
}

#[test]
fn non_persistent_users_repeat_advice() {
    let mut r = mc_runner(
        AdviceMode::NonPersistent,
        Some(SimulatedUser::optimistic()),
        5,
    );
    let m = r.run_episode().unwrap();
    assert_eq!(m.interactions, m.steps);
    assert!(r.learner().store().is_empty());
}

#[test]
fn q_values_stay_within_reward_bounds() {
    let mut r = mc_runner(
        AdviceMode::Persistent,
        Some(SimulatedUser::pessimistic()),
        6,
    );
    r.run(50).unwrap();
    let lo = -1.0 / (1.0 - 0.99);
    for (_, _, q) in r.learner().q().iter() {
        assert!(q.is_finite());
        assert!((lo - 1e-9..=0.0).contains(&q), "{q}");
    }
}

#[test]
fn broad_advice_is_expanded_over_matching_clusters() {
    let advisor = BroadAdvisor::new(default_rules()).unwrap();
    let mut r = sd_runner(AdviceMode::Persistent, Some(Box::new(advisor)), 3);
    let metrics = r.run(5).unwrap();
    let total: u32 = metrics.iter().map(|m| m.interactions).sum();
    assert!(total <= 2);
    let rules = default_rules();
    for (c, e) in r.learner().store().iter() {
        let obs = selfdrive::SdObservation::decode(c.0).unwrap();
        let rule = rules
            .iter()
            .find(|r| r.action == e.action && r.matches(&obs));
        assert!(rule.is_some(), "cluster {c:?} holds advice no rule covers");
    }
    // at least the front-blocked rule fired in five episodes of driving
    assert!(r.learner().store().len() >= 1152);
}

#[test]
fn self_drive_rewards_are_velocity_or_penalty() {
    let mut r = sd_runner(AdviceMode::None, None, 8);
    for _ in 0..3000 {
        let rec = r.step(None).unwrap();
        if rec.collision {
            assert_eq!(rec.reward, -100.0);
        } else {
            assert!((V_MIN..=V_MAX).contains(&rec.reward));
            assert_eq!((rec.reward * 2.0).fract(), 0.0);
        }
    }
}

#[test]
fn collision_can_end_the_episode_when_configured() {
    let opts = SelfDriveOptions {
        terminate_on_collision: true,
        ..Default::default()
    };
    let env = SelfDrive::new(Arc::new(ArenaMap::default()), opts).unwrap();
    let mut r = Runner::new(
        env,
        LearnerConfig::self_drive(AdviceMode::None),
        None,
        0,
        EpisodeLimit::SELF_DRIVE,
    )
    .unwrap();
    let m = r.run_episode().unwrap();
    assert!(m.steps < 3000);
}

#[test]
fn kmeans_generalizer_fits_after_warmup_and_rekeys() {
    let mut cfg = LearnerConfig::mountain_car(AdviceMode::Persistent);
    cfg.generalizer = GeneralizerSpec::KMeans {
        k: 32,
        warmup_samples: 500,
        max_iters: 50,
        tolerance: 1e-6,
    };
    let mut r = Runner::new(
        MountainCar::new(),
        cfg,
        Some(Box::new(SimulatedUser::optimistic())),
        3,
        EpisodeLimit::MOUNTAIN_CAR,
    )
    .unwrap();
    while !r.learner().generalizer().is_fitted() {
        r.step(None).unwrap();
    }
    let mut late = 0;
    for _ in 0..5000 {
        late += u32::from(r.step(None).unwrap().interaction);
    }
    assert_eq!(r.learner().generalizer().cluster_count(), Some(32));
    assert!(r.learner().store().len() <= 32);
    for (c, _) in r.learner().store().iter() {
        assert!(c.0 < 32);
    }
    // after the fit the user only speaks on clusters without advice
    assert!(late <= 32, "{late}");
}

#[test]
fn invalid_live_advice_is_rejected() {
    let mut r = mc_runner(AdviceMode::Persistent, None, 0);
    assert_eq!(
        r.step(Some(3)),
        Err(Error::InvalidAction {
            action: 3,
            count: 3
        })
    );
}
