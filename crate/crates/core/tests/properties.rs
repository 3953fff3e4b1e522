mod common;

use common::random_map;
use gatherplan_core::collector::estimate_worker_time;
use gatherplan_core::executor::travel_ticks;
use gatherplan_core::fmm::{fmm_solve, SpeedField};
use gatherplan_core::planner::{normalize, select, utility, ConfigEvaluation};
use gatherplan_core::segmentation::{segment, Method};
use gatherplan_core::{CellPos, GridMap, Scenario};
use proptest::prelude::*;

fn free_cells(g: &GridMap) -> Vec<CellPos> {
    g.free_cells().map(|i| g.pos(i)).collect()
}

fn eval(i: usize, t: f64, n: f64) -> ConfigEvaluation {
    ConfigEvaluation {
        method: Method::ALL[i % 3],
        n_c: i / 3,
        feasible: true,
        est_t_refresh: t,
        est_n_goals: n,
        t_norm: 0.0,
        n_norm: 0.0,
        utility: 0.0,
        error: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn in_comm_is_symmetric(seed in 0u64..400, range in 1.0f64..15.0, picks in prop::collection::vec((0usize..1000, 0usize..1000), 20)) {
        let (grid, oc) = random_map(seed, 20, 14, 0.25);
        let mut sc = Scenario::with_defaults(grid, oc, 2);
        sc.comm_range = range;
        let free = free_cells(&sc.grid);
        for (a, b) in picks {
            let (a, b) = (free[a % free.len()], free[b % free.len()]);
            prop_assert_eq!(sc.in_comm(a, b), sc.in_comm(b, a));
        }
    }

    #[test]
    fn sight_is_a_clear_symmetric_supercover(seed in 0u64..400, a in 0usize..1000, b in 0usize..1000) {
        let (grid, _) = random_map(seed, 20, 14, 0.25);
        let free = free_cells(&grid);
        let (a, b) = (free[a % free.len()], free[b % free.len()]);
        let ray = grid.supercover(a, b);
        prop_assert_eq!(grid.line_of_sight(a, b), ray.iter().all(|&c| grid.is_free(c)));
        prop_assert_eq!(ray[0], a);
        prop_assert_eq!(*ray.last().unwrap(), b);
        for w in ray.windows(2) {
            prop_assert_eq!(w[0].chebyshev(w[1]), 1);
        }
        let mut back = grid.supercover(b, a);
        back.sort_unstable_by_key(|p| (p.row, p.col));
        let mut fwd = ray.clone();
        fwd.sort_unstable_by_key(|p| (p.row, p.col));
        prop_assert_eq!(fwd, back);
    }

    #[test]
    fn scenario_text_round_trips(seed in 0u64..400, n in 2usize..30, range in 0.5f64..40.0, k in 1usize..6, tau in 0.0f64..5.0, rng_seed in any::<u64>()) {
        let (grid, oc) = random_map(seed, 17, 9, 0.2);
        let mut sc = Scenario::with_defaults(grid, oc, n);
        sc.comm_range = range;
        sc.goals_per_segment_per_cycle = k;
        sc.transfer_time_per_goal = tau;
        sc.rng_seed = rng_seed;
        let back = Scenario::parse(&sc.to_text()).unwrap();
        prop_assert_eq!(back, sc);
    }

    #[test]
    fn labels_ignore_source_order(seed in 0u64..400, picks in prop::collection::vec(0usize..1000, 2..6)) {
        let (grid, _) = random_map(seed, 18, 12, 0.25);
        let free = free_cells(&grid);
        let mut sources: Vec<CellPos> = picks.iter().map(|&i| free[i % free.len()]).collect();
        sources.sort_unstable_by_key(|p| (p.row, p.col));
        sources.dedup();
        let speed = SpeedField::uniform(&grid);
        let (t1, l1) = fmm_solve(&grid, &speed, &sources).unwrap();
        let mut rev = sources.clone();
        rev.reverse();
        let (t2, l2) = fmm_solve(&grid, &speed, &rev).unwrap();
        prop_assert_eq!(t1.values(), t2.values());
        for i in grid.free_cells() {
            prop_assert_eq!(sources[l1.at(i) as usize], rev[l2.at(i) as usize]);
        }
    }

    #[test]
    fn normalized_scores_stay_in_unit_range(raw in prop::collection::vec((0u32..500, 0u32..100), 1..27)) {
        let mut evals: Vec<_> = raw.iter().enumerate().map(|(i, &(t, n))| eval(i, t as f64, n as f64)).collect();
        normalize(&mut evals);
        for e in &evals {
            prop_assert!((0.0..=1.0).contains(&e.t_norm));
            prop_assert!((0.0..=1.0).contains(&e.n_norm));
            let u = utility(e.t_norm, e.n_norm, 0.5, 0.5);
            prop_assert!((0.0..=1.0).contains(&u));
        }
        for a in &evals {
            for b in &evals {
                if a.est_t_refresh < b.est_t_refresh {
                    prop_assert!(a.t_norm <= b.t_norm);
                }
            }
        }
    }

    #[test]
    fn affine_time_maps_leave_selection_unchanged(
        raw in prop::collection::vec((0u32..500, 0u32..100), 1..27),
        a in 1u32..50,
        b in 0u32..1000,
    ) {
        let evals: Vec<_> = raw.iter().enumerate().map(|(i, &(t, n))| eval(i, t as f64, n as f64)).collect();
        let mapped: Vec<_> = evals
            .iter()
            .map(|e| ConfigEvaluation { est_t_refresh: a as f64 * e.est_t_refresh + b as f64, ..e.clone() })
            .collect();
        let r1 = select(evals, 0.5, 0.5);
        let r2 = select(mapped, 0.5, 0.5);
        prop_assert_eq!(r1.best, r2.best);
        for (x, y) in r1.evaluations.iter().zip(&r2.evaluations) {
            prop_assert_eq!(x.t_norm, y.t_norm);
            prop_assert_eq!(x.utility, y.utility);
        }
    }

    #[test]
    fn better_raw_values_never_lower_utility(
        raw in prop::collection::vec((1u32..500, 0u32..100), 2..27),
        which in 0usize..27,
        dt in 0u32..50,
        dn in 0u32..50,
    ) {
        let which = which % raw.len();
        let evals: Vec<_> = raw.iter().enumerate().map(|(i, &(t, n))| eval(i, t as f64, n as f64)).collect();
        let mut improved = evals.clone();
        improved[which].est_t_refresh = (improved[which].est_t_refresh - dt as f64).max(0.0);
        improved[which].est_n_goals += dn as f64;
        let before = select(evals, 0.5, 0.5).evaluations[which].utility;
        let after = select(improved, 0.5, 0.5).evaluations[which].utility;
        prop_assert!(after >= before - 1e-12, "{before} -> {after}");
    }

    #[test]
    fn travel_ticks_cover_the_length(len in 0.0f64..500.0, h in 0.1f64..5.0) {
        let t = travel_ticks(len, h);
        prop_assert!(t as f64 * h >= len - 1e-6 * h);
        prop_assert!(t == 0 || (t - 1) as f64 * h < len);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn worker_time_grows_with_goals(seed in 0u64..200, n_w in 1usize..6, id in 0usize..6) {
        let (grid, oc) = random_map(seed, 20, 14, 0.2);
        let mut sc = Scenario::with_defaults(grid, oc, n_w);
        let seg = segment(&sc, Method::Pap, n_w).unwrap();
        let id = (id % n_w) as u32 + 1;
        let m = seg.centroid(id);
        let mut last = f64::NEG_INFINITY;
        for k in 0..6 {
            sc.goals_per_segment_per_cycle = k;
            let t = estimate_worker_time(&sc, &seg, id, m).unwrap();
            prop_assert!(t >= last);
            last = t;
        }
    }
}
