use fairshare::drf::solve_drf;
use fairshare::io::{instance_to_json, parse_instance};
use fairshare::model::{ProblemInstance, ResourceMatrix, ToleranceConfig};
use fairshare::oracle::{enumerate_solutions, grid_search_n2, random_instance, RandomSpec};
use fairshare::preprocess::{preprocess, PreprocessOptions};
use fairshare::{solve, solve_batch, verify, Allocation, Execution, SolveOptions};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = ProblemInstance> {
    (any::<u64>(), 1usize..=5, 1usize..=5).prop_map(|(seed, n, m)| random_instance(seed, n, m, RandomSpec::default()))
}

fn tol() -> ToleranceConfig {
    ToleranceConfig::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn verification_is_deterministic(inst in instance(), raw in prop::collection::vec(0.0f64..=1.0, 5)) {
        let x = Allocation(raw[..inst.n_users()].to_vec());
        let a = verify(&inst, &x, &tol()).unwrap();
        let b = verify(&inst, &x, &tol()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn solver_output_is_fair_and_efficient(inst in instance()) {
        let r = solve(&inst, &SolveOptions::default()).unwrap();
        prop_assert!(r.verified, "{:?}", r.solution.allocation);
        prop_assert!(r.report.capacity.ok);
        prop_assert!(r.report.pareto.ok, "capacity and no complaint must imply Pareto efficiency");
        prop_assert!(r.report.sharing_incentive.ok);
    }

    #[test]
    fn reduction_replays_bit_exactly(inst in instance(), dominated in any::<bool>()) {
        let opts = PreprocessOptions { remove_dominated: dominated };
        let (reduced, trace) = preprocess(&inst, &tol(), opts).unwrap();
        prop_assert_eq!(trace.replay(&inst).unwrap(), reduced);
    }

    #[test]
    fn drf_equalizes_weighted_dominant_shares(inst in instance()) {
        let d = solve_drf(&inst);
        let e = inst.entitlements();
        for i in 0..inst.n_users() {
            prop_assert!(d.x[i] <= 1.0 + 1e-12);
            prop_assert!(d.utilizations.iter().all(|&u| u <= 1.0 + 1e-9));
            if d.x[i] < 1.0 - 1e-12 {
                prop_assert!((d.dominant_shares[i] / e[i] - d.level).abs() <= 1e-9 * d.level.max(1.0));
            }
        }
    }

    #[test]
    fn single_resource_matches_drf(seed in any::<u64>(), n in 1usize..=5) {
        let inst = random_instance(seed, n, 1, RandomSpec::default());
        let fair = solve(&inst, &SolveOptions::default()).unwrap();
        let drf = solve_drf(&inst);
        for (a, b) in fair.solution.allocation.0.iter().zip(&drf.x.0) {
            prop_assert!((a - b).abs() <= 1e-6, "{:?} vs {:?}", fair.solution.allocation.0, drf.x.0);
        }
    }

    #[test]
    fn trajectory_csv_starts_at_origin(inst in instance()) {
        let r = solve(&inst, &SolveOptions::default()).unwrap();
        let csv = r.trajectory_csv(10);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        prop_assert!(header.starts_with("t,x_1"));
        if let Some(first) = lines.next() {
            let cells: Vec<f64> = first.split(',').map(|c| c.parse().unwrap()).collect();
            prop_assert_eq!(cells[0], 0.0);
            let eliminated: Vec<usize> = r.trace.eliminated_users().iter().map(|e| e.user).collect();
            for (i, v) in cells[1..=inst.n_users()].iter().enumerate() {
                let want = if eliminated.contains(&i) { 1.0 } else { 0.0 };
                prop_assert_eq!(*v, want);
            }
        }
    }

    #[test]
    fn json_round_trip(inst in instance()) {
        prop_assert_eq!(parse_instance(&instance_to_json(&inst)).unwrap(), inst);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn two_users_have_one_solution_bracketed_by_the_grid(seed in any::<u64>(), m in 1usize..=4) {
        let inst = random_instance(seed, 2, m, RandomSpec::default());
        let family = enumerate_solutions(&inst, &tol()).unwrap();
        prop_assert_eq!(family.witnesses.len(), 1);
        let w = &family.witnesses[0].x.0;
        let res = 1e-4;
        let grid = grid_search_n2(&inst, res).unwrap();
        let (lo, hi) = grid.interval.unwrap();
        prop_assert!(lo - 2.0 * res <= w[0] && w[0] <= hi + 2.0 * res, "{:?} outside [{lo}, {hi}]", w);
    }
}

#[test]
fn batch_results_do_not_depend_on_execution() {
    let insts: Vec<ProblemInstance> = (0..20).map(|s| random_instance(s, 1 + (s % 4) as usize, 3, RandomSpec::default())).collect();
    let opts = SolveOptions::default();
    let seq = solve_batch(&insts, &opts, Execution::Sequential);
    let par = solve_batch(&insts, &opts, Execution::Parallel);
    for (a, b) in seq.iter().zip(&par) {
        assert_eq!(a.as_ref().unwrap().solution, b.as_ref().unwrap().solution);
    }
}
