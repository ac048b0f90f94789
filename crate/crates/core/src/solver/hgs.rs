use std::collections::VecDeque;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Cost, RoutingInstance, DESTINATION, ORIGIN};

use super::crossover::srex;
use super::local_search::LocalSearch;
use super::neighbourhood::{Neighbourhood, NeighbourhoodParams};
use super::population::{Individual, Population, PopulationParams};
use super::solution::{evaluate, Evaluation, Penalties, Solution};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    /// Required clusters that no route can serve within their window and
    /// still return to the depot in time (cluster indices).
    #[error("required clusters {0:?} cannot be served within their time windows")]
    Infeasible(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Iterations(u64),
    Time(Duration),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub budget: Budget,
    pub seed: u64,
    pub min_population: usize,
    pub generation_size: usize,
    /// Weight of the elite when ranking by cost; the diversity rank gets
    /// `1 - elite_fraction`.
    pub elite_fraction: f64,
    pub closest: usize,
    pub granularity: usize,
    pub weight_wait: f64,
    pub weight_time_warp: f64,
    pub initial_time_warp_penalty: f64,
    pub penalty_factor: f64,
    pub target_feasible: f64,
    pub penalty_update_every: u64,
    pub repair_probability: f64,
    pub repair_factor: f64,
    pub restart_after: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            budget: Budget::Iterations(2_000),
            seed: 0,
            min_population: 25,
            generation_size: 40,
            elite_fraction: 0.5,
            closest: 5,
            granularity: 40,
            weight_wait: 0.2,
            weight_time_warp: 1.0,
            initial_time_warp_penalty: 1.0,
            penalty_factor: 1.25,
            target_feasible: 0.4,
            penalty_update_every: 25,
            repair_probability: 0.5,
            repair_factor: 10.0,
            restart_after: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    /// Best feasible solution, or the least infeasible one when no feasible
    /// solution was found.
    pub solution: Solution,
    pub evaluation: Evaluation,
    pub iterations: u64,
    /// Objective of the best feasible solution after the initial
    /// population was built.
    pub initial_objective: Option<Cost>,
}

impl SolveOutcome {
    pub fn is_feasible(&self) -> bool {
        self.evaluation.is_feasible()
    }
}

/// Required clusters that cannot be visited on time by any route: either
/// unreachable before their window closes, or too late to get home.
pub fn unreachable_required(inst: &RoutingInstance) -> Vec<usize> {
    let depot = inst.node(ORIGIN);
    let home = inst.node(DESTINATION);
    inst.cluster_nodes()
        .filter(|&c| inst.prize(c).is_required())
        .filter(|&c| {
            let node = inst.node(c);
            let arrival = depot.earliest + inst.travel(ORIGIN, c);
            let start = arrival.max(node.earliest);
            arrival > node.latest || start + node.service + inst.travel(c, DESTINATION) > home.latest
        })
        .map(|c| inst.cluster_of(c).expect("cluster node"))
        .collect()
}

fn random_solution<R: Rng>(inst: &RoutingInstance, rng: &mut R) -> Solution {
    let mut clusters: Vec<usize> = inst
        .cluster_nodes()
        .filter(|&c| inst.prize(c).is_required() || rng.random_bool(0.5))
        .collect();
    clusters.shuffle(rng);
    let k = inst.num_vehicles();
    let mut routes = vec![Vec::new(); k];
    for (idx, c) in clusters.into_iter().enumerate() {
        routes[idx % k].push(c);
    }
    for route in &mut routes {
        route.extend(inst.break_nodes());
    }
    Solution::new(inst, routes)
}

struct Tracker {
    best: Option<(Solution, Evaluation)>,
    fallback: Option<(Solution, Evaluation)>,
}

impl Tracker {
    /// Returns true when the best feasible objective improved.
    fn offer(&mut self, solution: &Solution, eval: &Evaluation) -> bool {
        if eval.is_feasible() {
            if self.best.as_ref().is_none_or(|(_, e)| eval.objective() < e.objective()) {
                self.best = Some((solution.clone(), *eval));
                return true;
            }
        } else {
            let key = |e: &Evaluation| (e.missing_required, e.time_warp + e.excess_load, e.objective());
            if self.fallback.as_ref().is_none_or(|(_, e)| key(eval) < key(e)) {
                self.fallback = Some((solution.clone(), *eval));
            }
        }
        false
    }
}

struct PenaltyManager {
    penalties: Penalties,
    history_tw: VecDeque<bool>,
    history_load: VecDeque<bool>,
    factor: f64,
    target: f64,
}

impl PenaltyManager {
    const WINDOW: usize = 100;
    const BAND: f64 = 0.05;

    fn record(&mut self, eval: &Evaluation) {
        for (hist, ok) in [
            (&mut self.history_tw, eval.time_warp == 0),
            (&mut self.history_load, eval.excess_load == 0),
        ] {
            hist.push_back(ok);
            if hist.len() > Self::WINDOW {
                hist.pop_front();
            }
        }
    }

    fn adjust(value: &mut f64, hist: &VecDeque<bool>, factor: f64, target: f64) {
        if hist.is_empty() {
            return;
        }
        let share = hist.iter().filter(|&&ok| ok).count() as f64 / hist.len() as f64;
        if share < target - Self::BAND {
            *value = (*value * factor).min(1e6);
        } else if share > target + Self::BAND {
            *value = (*value / factor).max(1e-3);
        }
    }

    fn update(&mut self) {
        Self::adjust(
            &mut self.penalties.time_warp,
            &self.history_tw,
            self.factor,
            self.target,
        );
        Self::adjust(&mut self.penalties.load, &self.history_load, self.factor, self.target);
    }
}

struct Clock {
    budget: Budget,
    #[cfg(not(target_arch = "wasm32"))]
    start: Option<std::time::Instant>,
}

impl Clock {
    fn new(budget: Budget) -> Self {
        Clock {
            budget,
            #[cfg(not(target_arch = "wasm32"))]
            start: match budget {
                Budget::Time(_) => Some(std::time::Instant::now()),
                Budget::Iterations(_) => None,
            },
        }
    }

    fn exhausted(&self, iterations: u64) -> bool {
        match self.budget {
            Budget::Iterations(n) => iterations >= n,
            #[cfg(not(target_arch = "wasm32"))]
            Budget::Time(limit) => self.start.is_some_and(|s| s.elapsed() >= limit),
            #[cfg(target_arch = "wasm32")]
            Budget::Time(_) => true,
        }
    }
}

/// Hybrid genetic search for the prize-collecting routing problem.
///
/// Deterministic for a given instance and `params` when the budget is an
/// iteration count.
pub fn solve_hgs(inst: &RoutingInstance, params: &SolverParams) -> Result<SolveOutcome, SolveError> {
    let blocked = unreachable_required(inst);
    if !blocked.is_empty() {
        return Err(SolveError::Infeasible(blocked));
    }
    if inst.num_clusters() == 0 {
        return Ok(SolveOutcome {
            solution: Solution::empty(),
            evaluation: evaluate(inst, &Solution::empty()),
            iterations: 0,
            initial_objective: Some(0),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let nb = Neighbourhood::build(
        inst,
        &NeighbourhoodParams {
            size: params.granularity,
            weight_wait: params.weight_wait,
            weight_time_warp: params.weight_time_warp,
        },
    );
    let mut ls = LocalSearch::new(inst, &nb);
    let mut pop = Population::new(PopulationParams {
        min_size: params.min_population.max(1),
        generation: params.generation_size.max(1),
        closest: params.closest.max(1),
        diversity_weight: 1.0 - params.elite_fraction,
    });
    let initial_load = match inst.capacity() {
        Some(cap) if cap > 0 => {
            let longest = inst.cluster_nodes().map(|c| inst.dist(ORIGIN, c)).max().unwrap_or(1);
            (longest as f64 / cap as f64).clamp(0.1, 1000.0)
        }
        _ => 1.0,
    };
    let mut pm = PenaltyManager {
        penalties: Penalties {
            time_warp: params.initial_time_warp_penalty,
            load: initial_load,
        },
        history_tw: VecDeque::new(),
        history_load: VecDeque::new(),
        factor: params.penalty_factor,
        target: params.target_feasible,
    };
    let mut tracker = Tracker {
        best: None,
        fallback: None,
    };
    let clock = Clock::new(params.budget);
    let mut iterations = 0u64;

    let mut educate = |start: &Solution,
                       pop: &mut Population,
                       pm: &mut PenaltyManager,
                       tracker: &mut Tracker,
                       rng: &mut ChaCha8Rng|
     -> bool {
        let improved = ls.improve(start, pm.penalties, rng);
        let eval = evaluate(inst, &improved);
        pm.record(&eval);
        let mut better = tracker.offer(&improved, &eval);
        let feasible = eval.is_feasible();
        pop.add(Individual::new(inst, improved.clone(), eval), &pm.penalties);
        if !feasible && rng.random_bool(params.repair_probability) {
            let repaired = ls.improve(&improved, pm.penalties.scaled(params.repair_factor), rng);
            let eval = evaluate(inst, &repaired);
            if eval.is_feasible() {
                better |= tracker.offer(&repaired, &eval);
                pop.add(Individual::new(inst, repaired, eval), &pm.penalties);
            }
        }
        better
    };

    let initialise = |pop: &mut Population,
                      pm: &mut PenaltyManager,
                      tracker: &mut Tracker,
                      rng: &mut ChaCha8Rng,
                      iterations: u64,
                      educate: &mut dyn FnMut(
        &Solution,
        &mut Population,
        &mut PenaltyManager,
        &mut Tracker,
        &mut ChaCha8Rng,
    ) -> bool| {
        for k in 0..params.min_population.max(1) {
            if k > 0 && clock.exhausted(iterations) {
                break;
            }
            let start = random_solution(inst, rng);
            educate(&start, pop, pm, tracker, rng);
        }
    };

    initialise(&mut pop, &mut pm, &mut tracker, &mut rng, iterations, &mut educate);
    let initial_objective = tracker.best.as_ref().map(|(_, e)| e.objective());
    let mut since_improvement = 0u64;

    while !clock.exhausted(iterations) {
        iterations += 1;
        let first = pop.select(&pm.penalties, &mut rng).solution.clone();
        let second = pop.select(&pm.penalties, &mut rng).solution.clone();
        let child = srex(inst, &first, &second, &pm.penalties, &mut rng);
        if educate(&child, &mut pop, &mut pm, &mut tracker, &mut rng) {
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }

        if iterations.is_multiple_of(params.penalty_update_every.max(1)) {
            pm.update();
        }
        if since_improvement >= params.restart_after {
            log::debug!("restarting after {since_improvement} iterations without improvement");
            pop.clear();
            since_improvement = 0;
            initialise(&mut pop, &mut pm, &mut tracker, &mut rng, iterations, &mut educate);
        }
    }

    let (solution, evaluation) = tracker
        .best
        .or(tracker.fallback)
        .expect("at least one solution is evaluated");
    Ok(SolveOutcome {
        solution,
        evaluation,
        iterations,
        initial_objective,
    })
}
