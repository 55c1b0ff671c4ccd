use proptest::collection::vec;
use proptest::prelude::*;

use diffadvise::advising::{nearest_neighbor_state, p_ask, p_give, state_difference};
use diffadvise::env::grid::{Cell, Dynamics, GridSetting, GridWorld, Move};
use diffadvise::env::load::{LoadDecision, LoadWorld};
use diffadvise::harness::aggregate::summarize;
use diffadvise::harness::{run_replica, ExperimentConfig};
use diffadvise::learning::{policy_improve, q_update, QTable, StateVec};
use diffadvise::numerics::{normalize_policy, RngStream};

fn state(len: usize) -> impl Strategy<Value = StateVec> {
    vec(0i32..3, len).prop_map(StateVec::new)
}

/// Brute-force scan used as the oracle for the offset-based lookup.
fn nearest_by_scan(
    s: &StateVec,
    table: &QTable<f64>,
    strict: bool,
    min_visits: u64,
) -> Option<(StateVec, u64)> {
    let mut best: Option<(StateVec, u64, u64)> = None;
    for (cand, entry) in table.iter() {
        let d = state_difference(s, cand).unwrap();
        if d > 1 || (strict && d == 0) || entry.visits < min_visits.max(1) {
            continue;
        }
        let key = (d, std::cmp::Reverse(entry.visits), cand.clone());
        let replace = match &best {
            None => true,
            Some((bs, bd, bv)) => key < (*bd, std::cmp::Reverse(*bv), bs.clone()),
        };
        if replace {
            best = Some((cand.clone(), d, entry.visits));
        }
    }
    best.map(|(st, d, _)| (st, d))
}

proptest! {
    #[test]
    fn normalized_policy_is_a_floored_distribution(
        raw in vec(-5.0f64..5.0, 1..9),
        floor_frac in 0.0f64..0.99,
    ) {
        let k = raw.len() as f64;
        let floor = floor_frac / k;
        prop_assume!(floor > 0.0);
        let p = normalize_policy(&raw, floor).unwrap();
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        for &x in &p {
            prop_assert!(x > 0.0 && x < 1.0 + 1e-12);
        }
    }

    #[test]
    fn policy_improve_keeps_a_distribution_and_favours_better_actions(
        q in vec(-10.0f64..10.0, 2..6),
        zeta in 0.001f64..0.5,
    ) {
        let k = q.len();
        let pi = vec![1.0 / k as f64; k];
        let out = policy_improve(&pi, &q, zeta, 0.01).unwrap();
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // From a uniform row, a strictly larger Q never gets a smaller probability.
        for a in 0..k {
            for b in 0..k {
                if q[a] > q[b] {
                    prop_assert!(out[a] >= out[b] - 1e-12);
                }
            }
        }
    }

    #[test]
    fn q_values_stay_within_discounted_reward_bounds(
        rewards in vec(-5.0f64..10.0, 1..300),
        gamma in 0.0f64..0.95,
        alpha in 0.0f64..1.0,
    ) {
        let (lo, hi) = (-5.0 / (1.0 - gamma), 10.0 / (1.0 - gamma));
        let mut q = [0.0f64; 2];
        for (t, r) in rewards.iter().enumerate() {
            let max = q[0].max(q[1]);
            let a = t % 2;
            q[a] = q_update(q[a], *r, max, alpha, gamma);
            prop_assert!(q[a] >= lo - 1e-9 && q[a] <= hi + 1e-9);
        }
    }

    #[test]
    fn state_difference_is_a_metric(a in state(6), b in state(6), c in state(6)) {
        let ab = state_difference(&a, &b).unwrap();
        prop_assert_eq!(ab, state_difference(&b, &a).unwrap());
        prop_assert_eq!(ab == 0, a == b);
        let ac = state_difference(&a, &c).unwrap();
        let cb = state_difference(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb);
    }

    #[test]
    fn nearest_neighbor_matches_brute_force(
        s in state(4),
        visited in vec((state(4), 1u64..6), 0..40),
        strict in any::<bool>(),
        min_visits in 1u64..5,
    ) {
        let mut table = QTable::<f64>::new(2);
        for (st, n) in visited {
            table.insert(st, vec![0.0, 0.0], n).unwrap();
        }
        prop_assert_eq!(
            nearest_neighbor_state(&s, &table, strict, min_visits),
            nearest_by_scan(&s, &table, strict, min_visits)
        );
    }

    #[test]
    fn ask_and_give_are_probabilities(
        n in 0u64..10_000,
        m in 0u64..10_000,
        total in 0u64..1000,
        left_frac in 0.0f64..=1.0,
        threshold in 1u64..10,
    ) {
        let left = (total as f64 * left_frac) as u64;
        let pa = p_ask(n, left, total, threshold);
        let pg = p_give(n, m, left, total);
        prop_assert!((0.0..=1.0).contains(&pa));
        prop_assert!((0.0..1.0).contains(&pg));
        if left == 0 {
            prop_assert_eq!(pa, 0.0);
            prop_assert_eq!(pg, 0.0);
        }
    }

    #[test]
    fn grid_agents_never_overlap_or_stand_on_obstacles(
        seed in any::<u64>(),
        setting in prop_oneof![
            Just(GridSetting::Static),
            Just(GridSetting::Dynamic1),
            Just(GridSetting::Dynamic2),
        ],
        moves in vec(vec(0usize..4, 3), 1..80),
    ) {
        let dynamics = Dynamics { setting, p_spawn: 0.2, p_move: 0.3 };
        let mut rng = RngStream::new(seed, 0);
        let mut world = GridWorld::generate(7, 6, 3, 6, 5, dynamics, &mut rng).unwrap();
        let obstacles = world.obstacle_count();
        for step in moves {
            let acts: Vec<Move> = step.into_iter().map(Move::from_index).collect();
            world.step(&acts, &mut rng).unwrap();
            let pos = world.positions().to_vec();
            for (i, &(x, y)) in pos.iter().enumerate() {
                prop_assert_ne!(world.cell(x, y), Cell::Obstacle);
                for &other in &pos[i + 1..] {
                    prop_assert_ne!((x, y), other);
                }
            }
            prop_assert_eq!(world.obstacle_count(), obstacles);
            prop_assert!(world.spawned() <= world.initial_target_count());
        }
    }

    #[test]
    fn load_stock_never_exceeds_capacity(
        seed in any::<u64>(),
        m in 1u32..4,
        passes in vec(any::<bool>(), 1..200),
    ) {
        let mut world = LoadWorld::uniform(3, 2, m, 0.5, 0.9).unwrap();
        let mut rng = RngStream::new(seed, 0);
        for pass in passes {
            let rewards = world
                .step(&mut rng, |_, _| if pass { LoadDecision::Pass } else { LoadDecision::Keep })
                .unwrap();
            for i in 0..3 {
                prop_assert!(world.stocks(i).iter().all(|&x| x <= m));
                prop_assert!(rewards[i] <= 50.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn aggregation_ignores_replica_order(seed in any::<u64>(), rot in 0usize..4) {
        let mut cfg = ExperimentConfig::parse(
            "width = 6\nheight = 5\ntargets = 4\nobstacles = 3\nrounds = 3\nruns = 4",
        )
        .unwrap();
        cfg.seed = seed;
        let replicas: Vec<_> = (0..4).map(|i| run_replica(&cfg, i).unwrap()).collect();
        let mut shuffled = replicas.clone();
        shuffled.rotate_left(rot);
        shuffled.reverse();
        let a = summarize(&replicas, 3);
        let b = summarize(&shuffled, 3);
        for (ra, rb) in a.iter().zip(&b) {
            for ((ma, sa), (mb, sb)) in ra.metrics.iter().zip(&rb.metrics) {
                prop_assert_eq!(ma, mb);
                prop_assert_eq!(sa.mean().to_bits(), sb.mean().to_bits());
                prop_assert_eq!(sa.stderr().to_bits(), sb.stderr().to_bits());
            }
        }
    }

    #[test]
    fn config_text_round_trips(
        agents in 2usize..6,
        budget in 0u64..2000,
        eps in 0.1f64..4.0,
        load in any::<bool>(),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.agents = agents;
        cfg.budget = budget;
        cfg.epsilon = eps;
        if load {
            cfg.set("scenario", "load").unwrap();
            cfg.delta_q = Some(1.5);
        }
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
