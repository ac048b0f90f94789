use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::segment::Segment;
use super::*;
use crate::model::{Prize, RoutingInstance, Site, DESTINATION, ORIGIN};
use crate::travel::TravelMatrix;

/// Random Euclidean instance on a 1000 x 1000 grid. Travel time equals
/// distance; windows are random but reachable from the depot.
pub(crate) fn random_instance(
    seed: u64,
    clusters: usize,
    vehicles: usize,
    with_break: bool,
    required_share: f64,
) -> RoutingInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = 6000;
    let points: Vec<(f64, f64)> = std::iter::once((500.0, 500.0))
        .chain((0..clusters).map(|_| (rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0))))
        .collect();
    let n = points.len();
    let mut dist = vec![0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (points[i], points[j]);
            dist[i * n + j] = ((a.0 - b.0).hypot(a.1 - b.1)).round() as i64;
        }
    }
    let matrix = TravelMatrix::from_flat(n, dist.clone(), dist).unwrap();
    let sites: Vec<Site> = (0..clusters)
        .map(|i| {
            let reach = matrix.duration(0, i + 1);
            let earliest = rng.random_range(0..horizon / 2);
            let latest = (earliest + rng.random_range(300..3000))
                .max(reach + 10)
                .min(horizon - reach - 60);
            let prize = if rng.random_bool(required_share) {
                Prize::Required
            } else {
                Prize::Optional(rng.random_range(0..1500))
            };
            Site {
                location: i + 1,
                service: 60,
                earliest: earliest.min(latest),
                latest,
                demand: 0,
                prize,
            }
        })
        .collect();
    let breaks: &[(i64, i64, i64)] = if with_break { &[(2500, 3500, 300)] } else { &[] };
    RoutingInstance::new(&matrix, 0, (0, horizon), breaks, &sites, vehicles, None).unwrap()
}

/// A random route: some clusters in random order with all breaks inserted
/// in window order at random positions.
fn random_route(inst: &RoutingInstance, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut route: Vec<usize> = inst.cluster_nodes().filter(|_| rng.random_bool(0.7)).collect();
    use rand::seq::SliceRandom;
    route.shuffle(rng);
    let mut at = 0;
    for b in inst.break_nodes() {
        at = rng.random_range(at..=route.len());
        route.insert(at, b);
        at += 1;
    }
    route
}

fn quick_params(seed: u64, iterations: u64) -> SolverParams {
    SolverParams {
        budget: Budget::Iterations(iterations),
        seed,
        ..SolverParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segments_agree_with_forward_pass(seed in any::<u64>(), n in 1usize..12, brk in any::<bool>()) {
        let inst = random_instance(seed, n, 1, brk, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let route = random_route(&inst, &mut rng);
        let mut full = vec![ORIGIN];
        full.extend(&route);
        full.push(DESTINATION);
        let seg = Segment::of_nodes(&inst, &full);
        let sched = schedule_route(&inst, &route);
        prop_assert_eq!(seg.distance, sched.distance);
        prop_assert_eq!(seg.time_warp, sched.time_warp);

        // Any split point gives the same concatenation.
        let cut = rng.random_range(1..full.len());
        let joined = Segment::merge(&inst, &Segment::of_nodes(&inst, &full[..cut]), &Segment::of_nodes(&inst, &full[cut..]));
        prop_assert_eq!(joined.distance, seg.distance);
        prop_assert_eq!(joined.time_warp, seg.time_warp);
    }

    #[test]
    fn local_search_never_worsens(seed in any::<u64>(), n in 2usize..25, brk in any::<bool>()) {
        let inst = random_instance(seed, n, 3, brk, 0.2);
        let nb = Neighbourhood::build(&inst, &NeighbourhoodParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut routes = vec![Vec::new(); 3];
        let mut clusters: Vec<usize> = inst.cluster_nodes().collect();
        use rand::seq::SliceRandom;
        clusters.shuffle(&mut rng);
        for (k, c) in clusters.into_iter().enumerate() {
            if inst.prize(c).is_required() || rng.random_bool(0.5) {
                routes[k % 3].push(c);
            }
        }
        for r in &mut routes {
            r.extend(inst.break_nodes());
        }
        let start = Solution::new(&inst, routes);
        let penalties = Penalties { time_warp: 3.0, load: 1.0 };
        let before = evaluate(&inst, &start).penalised(&penalties);
        let after_sol = local_search(&inst, &nb, &start, penalties, &mut rng);
        after_sol.validate(&inst).unwrap();
        let after = evaluate(&inst, &after_sol);
        prop_assert!(after.penalised(&penalties) <= before + 1e-6);
        prop_assert_eq!(after.missing_required, 0);
    }
}

#[test]
fn trailing_break_is_dropped_when_home_early() {
    let matrix = TravelMatrix::from_flat(2, vec![0, 100, 100, 0], vec![0, 100, 100, 0]).unwrap();
    let site = |latest| Site {
        location: 1,
        service: 60,
        earliest: 0,
        latest,
        demand: 0,
        prize: Prize::Required,
    };
    let inst = RoutingInstance::new(&matrix, 0, (0, 6000), &[(2500, 3500, 300)], &[site(6000)], 1, None).unwrap();
    let (c, brk) = (inst.cluster_node(0), inst.break_node(0));
    let sched = schedule_route(&inst, &[c, brk]);
    assert_eq!((sched.distance, sched.time_warp, sched.end), (200, 0, 260));
    assert!(sched.visits[1].dropped);
    let seg = Segment::of_nodes(&inst, &[ORIGIN, c, brk, DESTINATION]);
    assert_eq!((seg.distance, seg.time_warp), (200, 0));

    // Served after the break opens: the break is taken on return.
    let late = RoutingInstance::new(
        &matrix,
        0,
        (0, 6000),
        &[(2500, 3500, 300)],
        &[Site {
            earliest: 2600,
            ..site(6000)
        }],
        1,
        None,
    )
    .unwrap();
    let sched = schedule_route(&late, &[c, brk]);
    assert!(!sched.visits[1].dropped);
    assert_eq!(sched.visits[1].start, 2760);
    assert_eq!(sched.end, 3060);
}

#[test]
fn hgs_matches_brute_force_on_small_instances() {
    let mut matched = 0;
    for seed in 0..20 {
        let inst = random_instance(seed, 6, 1 + (seed as usize % 2), seed % 3 == 0, 0.2);
        let oracle = brute_force_optimal(&inst);
        let outcome = solve_hgs(&inst, &quick_params(seed, 300));
        match (oracle, outcome) {
            (Ok((_, best)), Ok(found)) => {
                assert!(found.is_feasible());
                assert!(found.evaluation.objective() >= best.objective());
                if found.evaluation.objective() == best.objective() {
                    matched += 1;
                }
            }
            (Err(BruteForceError::Infeasible), _) => matched += 1,
            (Ok(_), Err(e)) => panic!("solver refused a feasible instance: {e}"),
            (Err(e), _) => panic!("{e}"),
        }
    }
    assert!(matched >= 19, "matched {matched} of 20");
}

#[test]
fn brute_force_limits() {
    let inst = random_instance(1, 9, 1, false, 0.0);
    assert!(matches!(
        brute_force_optimal(&inst),
        Err(BruteForceError::TooLarge { .. })
    ));
    let inst = random_instance(1, 3, 3, false, 0.0);
    assert!(matches!(
        brute_force_optimal(&inst),
        Err(BruteForceError::TooLarge { .. })
    ));
}

#[test]
fn brute_force_single_cluster() {
    let inst = random_instance(3, 1, 1, false, 0.0);
    let c = inst.cluster_node(0);
    let (sol, eval) = brute_force_optimal(&inst).unwrap();
    let round_trip = inst.dist(ORIGIN, c) + inst.dist(c, DESTINATION);
    let prize = inst.prize(c).value();
    assert_eq!(eval.objective(), round_trip.min(prize));
    assert_eq!(sol.num_routes(), usize::from(round_trip < prize));
}

#[test]
fn unreachable_required_cluster_is_reported() {
    let matrix = TravelMatrix::from_flat(2, vec![0, 100, 100, 0], vec![0, 100, 100, 0]).unwrap();
    let site = Site {
        location: 1,
        service: 10,
        earliest: 0,
        latest: 50,
        demand: 0,
        prize: Prize::Required,
    };
    let inst = RoutingInstance::new(&matrix, 0, (0, 1000), &[], &[site], 1, None).unwrap();
    assert_eq!(
        solve_hgs(&inst, &quick_params(0, 10)),
        Err(SolveError::Infeasible(vec![0]))
    );
    assert_eq!(brute_force_optimal(&inst), Err(BruteForceError::Infeasible));
}

#[test]
fn solver_output_is_valid_and_deterministic() {
    let inst = random_instance(11, 40, 3, true, 0.1);
    let first = solve_hgs(&inst, &quick_params(5, 200)).unwrap();
    let second = solve_hgs(&inst, &quick_params(5, 200)).unwrap();
    assert_eq!(first, second);
    first.solution.validate(&inst).unwrap();
    assert_eq!(first.evaluation, evaluate(&inst, &first.solution));
    if let Some(initial) = first.initial_objective {
        assert!(first.evaluation.objective() <= initial);
    }
}

#[test]
fn all_required_prizes_are_visited() {
    let inst = random_instance(2, 15, 2, true, 1.0);
    let outcome = solve_hgs(&inst, &quick_params(1, 100)).unwrap();
    assert!(covers_required(&inst, &outcome.solution));
}

#[test]
fn zero_prizes_leave_everything_unvisited() {
    let inst = random_instance(4, 10, 2, true, 0.0);
    let zero = vec![Prize::Optional(0); 10];
    let inst = inst.with_prizes(&zero).unwrap();
    let outcome = solve_hgs(&inst, &quick_params(1, 50)).unwrap();
    assert_eq!(outcome.evaluation.objective(), 0);
    assert_eq!(outcome.solution.num_routes(), 0);
}

#[test]
fn text_format_lists_routes_and_objective() {
    let inst = random_instance(5, 3, 1, false, 1.0);
    let outcome = solve_hgs(&inst, &quick_params(0, 20)).unwrap();
    let text = format_solution(&inst, &outcome.solution);
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("route 1: 0:0 "));
    assert!(first.ends_with(&format!(
        " 1:{}",
        schedule_route(&inst, &outcome.solution.routes()[0]).end
    )));
    assert!(text.contains(&format!("objective {}", outcome.evaluation.objective())));
}

#[test]
fn validate_rejects_bad_structures() {
    let inst = random_instance(6, 3, 1, true, 0.0);
    let (a, b) = (inst.cluster_node(0), inst.cluster_node(1));
    let brk = inst.break_node(0);
    assert!(Solution::new(&inst, vec![vec![a, brk]]).validate(&inst).is_ok());
    assert_eq!(
        Solution::new(&inst, vec![vec![a, a, brk]]).validate(&inst),
        Err(SolutionError::DuplicateVisit(a))
    );
    assert_eq!(
        Solution::new(&inst, vec![vec![a, b]]).validate(&inst),
        Err(SolutionError::BreakOrder { route: 0 })
    );
    assert_eq!(
        Solution::new(&inst, vec![vec![a, brk], vec![b, brk]]).validate(&inst),
        Err(SolutionError::TooManyRoutes { routes: 2, vehicles: 1 })
    );
}
