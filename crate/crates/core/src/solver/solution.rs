use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Cost, RoutingInstance, Seconds, DESTINATION, ORIGIN};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolutionError {
    #[error("node {0} is not a cluster or break of this instance")]
    UnknownNode(usize),
    #[error("cluster node {0} is visited more than once")]
    DuplicateVisit(usize),
    #[error("route {route} must visit every break exactly once, in window order")]
    BreakOrder { route: usize },
    #[error("{routes} routes for {vehicles} vehicles")]
    TooManyRoutes { routes: usize, vehicles: usize },
}

/// A set of routes. Each route lists the nodes visited between the origin
/// and destination depots (exclusive), breaks included.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Solution {
    routes: Vec<Vec<usize>>,
}

impl Solution {
    /// Routes that serve no cluster are dropped: an idle vehicle stays at
    /// the depot and takes its breaks there.
    pub fn new(inst: &RoutingInstance, routes: Vec<Vec<usize>>) -> Self {
        let routes = routes
            .into_iter()
            .filter(|r| r.iter().any(|&n| inst.is_cluster(n)))
            .collect();
        Solution { routes }
    }

    pub fn empty() -> Self {
        Solution::default()
    }

    pub fn routes(&self) -> &[Vec<usize>] {
        &self.routes
    }

    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }

    /// Cluster nodes in visiting order, route by route.
    pub fn visited(&self, inst: &RoutingInstance) -> Vec<usize> {
        self.routes
            .iter()
            .flatten()
            .copied()
            .filter(|&n| inst.is_cluster(n))
            .collect()
    }

    /// Checks the structural rules; time windows and prizes are the
    /// business of [`evaluate`].
    pub fn validate(&self, inst: &RoutingInstance) -> Result<(), SolutionError> {
        if self.routes.len() > inst.num_vehicles() {
            return Err(SolutionError::TooManyRoutes {
                routes: self.routes.len(),
                vehicles: inst.num_vehicles(),
            });
        }
        let mut seen = vec![false; inst.num_nodes()];
        for (idx, route) in self.routes.iter().enumerate() {
            let breaks: Vec<usize> = route.iter().copied().filter(|&n| inst.is_break(n)).collect();
            if !breaks.iter().copied().eq(inst.break_nodes()) {
                return Err(SolutionError::BreakOrder { route: idx });
            }
            for &node in route {
                if inst.is_break(node) {
                    continue;
                }
                if !inst.is_cluster(node) {
                    return Err(SolutionError::UnknownNode(node));
                }
                if std::mem::replace(&mut seen[node], true) {
                    return Err(SolutionError::DuplicateVisit(node));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub time_warp: f64,
    pub load: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Penalties {
            time_warp: 1.0,
            load: 1.0,
        }
    }
}

impl Penalties {
    pub fn scaled(self, factor: f64) -> Self {
        Penalties {
            time_warp: self.time_warp * factor,
            load: self.load * factor,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub distance: Cost,
    /// Sum of the finite prizes of clusters left out.
    pub uncollected: Cost,
    pub time_warp: Seconds,
    pub wait: Seconds,
    pub excess_load: i64,
    pub missing_required: usize,
    pub num_routes: usize,
}

impl Evaluation {
    /// Distance plus uncollected prizes.
    pub fn objective(&self) -> Cost {
        self.distance + self.uncollected
    }

    pub fn is_feasible(&self) -> bool {
        self.time_warp == 0 && self.excess_load == 0 && self.missing_required == 0
    }

    /// Objective with time warp and excess load priced in. Missing required
    /// clusters are not priced; the local search never leaves them out.
    pub fn penalised(&self, penalties: &Penalties) -> f64 {
        self.objective() as f64 + penalties.time_warp * self.time_warp as f64 + penalties.load * self.excess_load as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub node: usize,
    pub arrival: Seconds,
    /// Start of service (or of the break).
    pub start: Seconds,
    /// A break after the last cluster that the driver does not need to take
    /// on the road, because the vehicle is already home by its opening time.
    pub dropped: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSchedule {
    /// Visits in order, ending with the destination depot.
    pub visits: Vec<Visit>,
    pub distance: Cost,
    pub time_warp: Seconds,
    pub wait: Seconds,
    pub load: i64,
    /// When the vehicle is back at the depot with nothing left to do.
    pub end: Seconds,
}

/// Exact forward pass: leave at the depot's opening time, wait when early,
/// and when late record the lateness as time warp and continue as if service
/// started at the window's close.
pub fn schedule_route(inst: &RoutingInstance, route: &[usize]) -> RouteSchedule {
    let mut time = inst.node(ORIGIN).earliest;
    let mut prev = ORIGIN;
    let (mut distance, mut time_warp, mut wait, mut load) = (0, 0, 0, 0);
    let mut visits = Vec::with_capacity(route.len() + 1);
    let mut home_after_last_cluster = time;

    for &id in route.iter().chain(std::iter::once(&DESTINATION)) {
        let node = inst.node(id);
        let arrival = time + inst.travel(prev, id);
        distance += inst.dist(prev, id);
        load += node.demand;
        let mut start = arrival;
        if arrival < node.earliest {
            wait += node.earliest - arrival;
            start = node.earliest;
        } else if arrival > node.latest {
            time_warp += arrival - node.latest;
            start = node.latest;
        }
        visits.push(Visit {
            node: id,
            arrival,
            start,
            dropped: false,
        });
        time = start + node.service;
        prev = id;
        if inst.is_cluster(id) {
            home_after_last_cluster = time + inst.travel(id, DESTINATION);
        }
    }

    // Trailing breaks are replayed from the moment the vehicle is back home:
    // a break it is home in time for is not taken on the road. Breaks are
    // chained so that this never changes distance or time warp.
    let last_cluster = visits.iter().rposition(|v| inst.is_cluster(v.node));
    let trailing_from = last_cluster.map_or(0, |p| p + 1);
    let mut end = home_after_last_cluster;
    for visit in &mut visits[trailing_from..] {
        if visit.node == DESTINATION {
            visit.arrival = end;
            visit.start = end;
            continue;
        }
        let node = inst.node(visit.node);
        if end <= node.earliest {
            visit.dropped = true;
        } else {
            visit.arrival = end;
            visit.start = end.min(node.latest);
            end = visit.start + node.service;
        }
    }

    RouteSchedule {
        visits,
        distance,
        time_warp,
        wait,
        load,
        end,
    }
}

/// Evaluates a solution exactly. Routes are scheduled independently; prizes
/// of unvisited clusters are counted as uncollected.
pub fn evaluate(inst: &RoutingInstance, solution: &Solution) -> Evaluation {
    let mut eval = Evaluation {
        num_routes: solution.num_routes(),
        ..Evaluation::default()
    };
    let mut visited = vec![false; inst.num_nodes()];
    for route in solution.routes() {
        let sched = schedule_route(inst, route);
        eval.distance += sched.distance;
        eval.time_warp += sched.time_warp;
        eval.wait += sched.wait;
        if let Some(cap) = inst.capacity() {
            eval.excess_load += (sched.load - cap).max(0);
        }
        for &node in route {
            visited[node] = true;
        }
    }
    for node in inst.cluster_nodes() {
        if !visited[node] {
            match inst.prize(node) {
                crate::model::Prize::Required => eval.missing_required += 1,
                prize => eval.uncollected += prize.value(),
            }
        }
    }
    eval
}

/// Plain-text rendering: one line per route with `node:start` pairs (start
/// of service in instance seconds, dropped breaks omitted), then the
/// objective breakdown.
pub fn format_solution(inst: &RoutingInstance, solution: &Solution) -> String {
    let mut out = String::new();
    for (idx, route) in solution.routes().iter().enumerate() {
        let sched = schedule_route(inst, route);
        let _ = write!(out, "route {}: {}:{}", idx + 1, ORIGIN, inst.node(ORIGIN).earliest);
        for visit in sched.visits.iter().filter(|v| !v.dropped) {
            let _ = write!(out, " {}:{}", visit.node, visit.start);
        }
        out.push('\n');
    }
    let eval = evaluate(inst, solution);
    let _ = writeln!(out, "distance {}", eval.distance);
    let _ = writeln!(out, "uncollected {}", eval.uncollected);
    let _ = writeln!(out, "time_warp {}", eval.time_warp);
    let _ = writeln!(out, "missing_required {}", eval.missing_required);
    let _ = writeln!(out, "objective {}", eval.objective());
    out
}
