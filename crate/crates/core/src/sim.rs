//! Discrete-event simulation of daily waste collection.
//!
//! Deposits are drawn up front from the seed, so every policy sees the same
//! arrival stream. Each morning a policy turns what it has observed into
//! prizes, the router builds the shift, and services are replayed at the
//! times the routes reach each cluster.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{sample_arrivals, DemandError, VolumeDistribution};
use crate::model::{
    build_routing_instance, Cost, ModelError, Prize, RoutingInstance, Seconds, DAY, DESTINATION, HOUR, MINUTE, ORIGIN,
};
use crate::policy::{
    baseline_prizes, baseline_prizes_sensor, default_prior, isr_prizes, isr_prizes_sensor, next_plan_time,
    ClusterObservation, EstimateBook, EstimatorMode, PolicyError, ServiceObservation, VolumeEstimate,
};
use crate::solver::{solve_hgs, Budget, Solution, SolveError, SolverParams};
use crate::travel::{City, TravelError};

/// Shifts are planned five minutes before they start.
pub const PLAN_LEAD: Seconds = 5 * MINUTE;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("warm-up of {warmup} days leaves nothing of a {horizon} day horizon")]
    EmptyWindow { warmup: u32, horizon: u32 },
    #[error(transparent)]
    City(#[from] TravelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Demand(#[from] DemandError),
}

/// Prior volume belief for the integrated policy; `sigma` defaults to the
/// conservative deviation of `mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Prior {
    fn estimate(&self) -> VolumeEstimate {
        match self.sigma {
            Some(sigma) => VolumeEstimate {
                mu: self.mu,
                sigma,
                boundary: None,
            },
            None => VolumeEstimate::conservative(self.mu),
        }
    }
}

fn default_min_observations() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PolicyConfig {
    Baseline {
        top_n: usize,
        #[serde(default)]
        sensor: bool,
    },
    Isr {
        epsilon: f64,
        rho_km: f64,
        #[serde(default)]
        sensor: bool,
        #[serde(default)]
        estimator: EstimatorMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<Prior>,
        #[serde(default = "default_min_observations")]
        min_observations: usize,
    },
}

impl PolicyConfig {
    pub fn isr(epsilon: f64, rho_km: f64) -> Self {
        PolicyConfig::Isr {
            epsilon,
            rho_km,
            sensor: false,
            estimator: EstimatorMode::default(),
            prior: None,
            min_observations: default_min_observations(),
        }
    }

    pub fn baseline(top_n: usize) -> Self {
        PolicyConfig::Baseline { top_n, sensor: false }
    }

    pub fn with_sensor(mut self, on: bool) -> Self {
        match &mut self {
            PolicyConfig::Baseline { sensor, .. } | PolicyConfig::Isr { sensor, .. } => *sensor = on,
        }
        self
    }

    pub fn sensor(&self) -> bool {
        match self {
            PolicyConfig::Baseline { sensor, .. } | PolicyConfig::Isr { sensor, .. } => *sensor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub horizon_days: u32,
    pub warmup_days: u32,
    pub seed: u64,
    pub solver: SolverParams,
    pub volumes: VolumeDistribution,
    /// Also record every deposit in the event log.
    pub log_deposits: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon_days: 120,
            warmup_days: 30,
            seed: 0,
            solver: SolverParams {
                budget: Budget::Iterations(100),
                granularity: 20,
                ..SolverParams::default()
            },
            volumes: VolumeDistribution::default(),
            log_deposits: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Deposit,
    Plan,
    Service,
    Break,
    RouteEnd,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Deposit => "deposit",
            EventKind::Plan => "plan",
            EventKind::Service => "service",
            EventKind::Break => "break",
            EventKind::RouteEnd => "route_end",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "deposit" => EventKind::Deposit,
            "plan" => EventKind::Plan,
            "service" => EventKind::Service,
            "break" => EventKind::Break,
            "route_end" => EventKind::RouteEnd,
            _ => return None,
        })
    }
}

/// One line of the event log. Fields that do not apply to a kind are empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub time: Seconds,
    pub kind: Option<EventKind>,
    pub cluster: Option<usize>,
    pub vehicle: Option<usize>,
    pub fill_percent: Option<f64>,
    pub overflow_litres: Option<f64>,
    /// Route distance in metres (route ends only).
    pub distance: Option<Cost>,
    /// Route duration in seconds, breaks included (route ends only).
    pub duration: Option<Seconds>,
}

impl LogRecord {
    fn new(time: Seconds, kind: EventKind) -> Self {
        LogRecord {
            time,
            kind: Some(kind),
            ..LogRecord::default()
        }
    }
}

pub const LOG_HEADER: &str = "time,kind,cluster,vehicle,fill_percent,overflow_litres,distance_m,duration_s";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_f(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_default()
}

pub fn log_to_csv(log: &[LogRecord]) -> String {
    let mut out = String::with_capacity(48 * (log.len() + 1));
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.time,
            r.kind.map(EventKind::name).unwrap_or(""),
            opt(r.cluster),
            opt(r.vehicle),
            opt_f(r.fill_percent),
            opt_f(r.overflow_litres),
            opt(r.distance),
            opt(r.duration),
        );
    }
    out
}

/// Parses a log written by [`log_to_csv`]. Returns `None` on malformed input.
pub fn log_from_csv(text: &str) -> Option<Vec<LogRecord>> {
    let mut lines = text.lines();
    if lines.next()? != LOG_HEADER {
        return None;
    }
    fn field<T: std::str::FromStr>(s: &str) -> Option<Option<T>> {
        if s.is_empty() {
            Some(None)
        } else {
            s.parse().ok().map(Some)
        }
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return None;
            }
            Some(LogRecord {
                time: f[0].parse().ok()?,
                kind: Some(EventKind::parse(f[1])?),
                cluster: field(f[2])?,
                vehicle: field(f[3])?,
                fill_percent: field(f[4])?,
                overflow_litres: field(f[5])?,
                distance: field(f[6])?,
                duration: field(f[7])?,
            })
        })
        .collect()
}

/// Ground truth and observed state of one cluster.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClusterState {
    /// Litres deposited since the last service, including any overflow.
    pub hidden_volume: f64,
    /// Deposits registered since the last service.
    pub deposits: u64,
    pub last_service: Seconds,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceRecord {
    pub fill_percent: f64,
    pub overflow: bool,
    pub overflow_litres: f64,
    /// Litres taken out of the containers.
    pub collected: f64,
    pub observation: ServiceObservation,
}

/// Empties a cluster and reports what was found.
pub fn handle_service(state: &mut ClusterState, capacity: f64, time: Seconds) -> ServiceRecord {
    let hidden = state.hidden_volume;
    let record = ServiceRecord {
        fill_percent: hidden / capacity * 100.0,
        overflow: hidden > capacity,
        overflow_litres: (hidden - capacity).max(0.0),
        collected: hidden.min(capacity),
        observation: ServiceObservation {
            deposits: state.deposits,
            overflow: hidden > capacity,
        },
    };
    *state = ClusterState {
        hidden_volume: 0.0,
        deposits: 0,
        last_service: time,
    };
    record
}

/// Clock time (relative to the shift start) at which a vehicle that just
/// left `prev` at `t` would be back at the depot.
fn home_time(inst: &RoutingInstance, prev: usize, t: Seconds) -> Seconds {
    t + inst.travel(prev, DESTINATION)
}

/// Adds breaks to a route planned without them. Each break goes after the
/// last cluster from which the vehicle can still be at the depot before the
/// break's latest start; a route that is over before a break opens skips
/// it. The flag is set when a break had to be placed without meeting its
/// window.
pub fn insert_breaks(inst: &RoutingInstance, route: &[usize]) -> (Vec<usize>, bool) {
    let clusters: Vec<usize> = route.iter().copied().filter(|&n| inst.is_cluster(n)).collect();
    if clusters.is_empty() {
        return (Vec::new(), false);
    }
    let mut placed: Vec<(usize, usize)> = Vec::new();
    let mut flagged = false;
    for b in inst.break_nodes() {
        let with = |positions: &[(usize, usize)]| assemble(&clusters, positions);
        if execute_route(inst, &with(&placed)).end <= inst.node(b).earliest {
            break;
        }
        let lower = placed.last().map_or(0, |&(k, _)| k);
        let feasible = (lower..=clusters.len()).rev().find(|&k| {
            let mut trial = placed.clone();
            trial.push((k, b));
            depot_arrival_for_break(inst, &with(&trial), b) <= inst.node(b).latest
        });
        let k = feasible.unwrap_or_else(|| {
            flagged = true;
            lower
        });
        placed.push((k, b));
    }
    (assemble(&clusters, &placed), flagged)
}

fn assemble(clusters: &[usize], breaks: &[(usize, usize)]) -> Vec<usize> {
    let mut out = Vec::with_capacity(clusters.len() + breaks.len());
    let mut next = breaks.iter().peekable();
    for k in 0..=clusters.len() {
        while let Some(&&(pos, b)) = next.peek() {
            if pos != k {
                break;
            }
            out.push(b);
            next.next();
        }
        if k < clusters.len() {
            out.push(clusters[k]);
        }
    }
    out
}

/// Time at which the vehicle reaches the depot for break `brk`, without any
/// clusters being skipped.
fn depot_arrival_for_break(inst: &RoutingInstance, route: &[usize], brk: usize) -> Seconds {
    let mut t = inst.node(ORIGIN).earliest;
    let mut prev = ORIGIN;
    for &node in route {
        let arrival = t + inst.travel(prev, node);
        if node == brk {
            return arrival;
        }
        let n = inst.node(node);
        t = arrival.max(n.earliest) + n.service;
        prev = node;
    }
    home_time(inst, prev, t)
}

/// A route as actually driven: the stops made with their start times
/// (relative to the shift start), the clusters left out, the return time
/// and the distance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecutedRoute {
    pub stops: Vec<(usize, Seconds)>,
    pub skipped: Vec<usize>,
    pub end: Seconds,
    pub distance: Cost,
}

/// Drives a route without time travel. A cluster that can no longer be
/// started within its window, or after which the vehicle could not get home
/// before the shift ends, is skipped. Breaks after the last cluster are
/// taken at the depot, and dropped when the vehicle is home before they
/// open.
pub fn execute_route(inst: &RoutingInstance, route: &[usize]) -> ExecutedRoute {
    let horizon = inst.node(DESTINATION).latest;
    let last_cluster = route.iter().rposition(|&n| inst.is_cluster(n));
    let mut out = ExecutedRoute::default();
    let Some(last_cluster) = last_cluster else {
        out.end = inst.node(ORIGIN).earliest;
        return out;
    };

    let mut t = inst.node(ORIGIN).earliest;
    let mut prev = ORIGIN;
    for &node in &route[..=last_cluster] {
        let n = inst.node(node);
        let arrival = t + inst.travel(prev, node);
        let start = arrival.max(n.earliest);
        if inst.is_cluster(node) && (start > n.latest || start + n.service + inst.travel(node, DESTINATION) > horizon) {
            out.skipped.push(node);
            continue;
        }
        out.distance += inst.dist(prev, node);
        out.stops.push((node, start));
        t = start + n.service;
        prev = node;
    }

    if !out.stops.iter().any(|&(n, _)| inst.is_cluster(n)) {
        out.stops.clear();
        out.distance = 0;
        out.end = inst.node(ORIGIN).earliest;
        return out;
    }

    out.distance += inst.dist(prev, DESTINATION);
    t = home_time(inst, prev, t);
    for &node in &route[last_cluster + 1..] {
        let n = inst.node(node);
        if t <= n.earliest {
            break;
        }
        let start = t.max(n.earliest);
        out.stops.push((node, start));
        t = start + n.service;
    }
    out.end = t;
    out
}

/// Measures over the post-warm-up part of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    /// Kilometres per day.
    pub avg_daily_distance: f64,
    /// Hours, breaks included.
    pub avg_route_duration: f64,
    pub avg_routes_per_day: f64,
    pub avg_clusters_per_day: f64,
    /// Percentage of services that found the cluster at most full.
    pub service_level: f64,
    /// Mean fill percentage at service.
    pub avg_fill_level: f64,
    /// Mean litres above capacity over the services that found an overflow.
    pub avg_overflow_volume: f64,
    /// Clusters without a single service after the warm-up.
    pub unserviced_count: usize,
}

impl MeasureReport {
    pub const FIELDS: [&'static str; 8] = [
        "avg_daily_distance_km",
        "avg_route_duration_h",
        "avg_routes_per_day",
        "avg_clusters_per_day",
        "service_level_pct",
        "avg_fill_level_pct",
        "avg_overflow_volume_l",
        "unserviced_count",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.avg_daily_distance,
            self.avg_route_duration,
            self.avg_routes_per_day,
            self.avg_clusters_per_day,
            self.service_level,
            self.avg_fill_level,
            self.avg_overflow_volume,
            self.unserviced_count as f64,
        ]
    }

    /// Field-wise mean of several reports.
    pub fn mean(reports: &[MeasureReport]) -> [f64; 8] {
        let mut acc = [0.0; 8];
        for r in reports {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        if !reports.is_empty() {
            for a in &mut acc {
                *a /= reports.len() as f64;
            }
        }
        acc
    }
}

/// Table measures from an event log. Records before `warmup_days` are
/// ignored; the window ends at `horizon_days`.
pub fn compute_measures(
    log: &[LogRecord],
    warmup_days: u32,
    horizon_days: u32,
    num_clusters: usize,
) -> Result<MeasureReport, SimError> {
    if warmup_days >= horizon_days {
        return Err(SimError::EmptyWindow {
            warmup: warmup_days,
            horizon: horizon_days,
        });
    }
    let from = warmup_days as Seconds * DAY;
    let to = horizon_days as Seconds * DAY;
    let days = (horizon_days - warmup_days) as f64;

    let mut distance = 0i64;
    let mut duration = 0i64;
    let mut routes = 0usize;
    let mut services = 0usize;
    let mut on_time = 0usize;
    let mut fill = 0.0;
    let mut overflow_sum = 0.0;
    let mut overflows = 0usize;
    let mut served = vec![false; num_clusters];

    for r in log.iter().filter(|r| (from..to).contains(&r.time)) {
        match r.kind {
            Some(EventKind::RouteEnd) => {
                routes += 1;
                distance += r.distance.unwrap_or(0);
                duration += r.duration.unwrap_or(0);
            }
            Some(EventKind::Service) => {
                services += 1;
                let f = r.fill_percent.unwrap_or(0.0);
                fill += f;
                let over = r.overflow_litres.unwrap_or(0.0);
                if over > 0.0 {
                    overflows += 1;
                    overflow_sum += over;
                } else {
                    on_time += 1;
                }
                if let Some(c) = r.cluster.filter(|&c| c < num_clusters) {
                    served[c] = true;
                }
            }
            _ => {}
        }
    }

    let ratio = |a: f64, b: usize, empty: f64| if b == 0 { empty } else { a / b as f64 };
    Ok(MeasureReport {
        avg_daily_distance: distance as f64 / 1000.0 / days,
        avg_route_duration: ratio(duration as f64 / HOUR as f64, routes, 0.0),
        avg_routes_per_day: routes as f64 / days,
        avg_clusters_per_day: services as f64 / days,
        service_level: ratio(100.0 * on_time as f64, services, 100.0),
        avg_fill_level: ratio(fill, services, 0.0),
        avg_overflow_volume: ratio(overflow_sum, overflows, 0.0),
        unserviced_count: served.iter().filter(|&&s| !s).count(),
    })
}

/// Litre totals over a whole run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VolumeBalance {
    pub deposited: f64,
    pub collected: f64,
    pub in_clusters: f64,
    pub overflow_removed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOutput {
    pub measures: MeasureReport,
    pub log: Vec<LogRecord>,
    pub balance: VolumeBalance,
    /// Days on which the router could not fit every required cluster.
    pub infeasible_days: usize,
}

#[derive(Clone, Copy, Debug)]
struct Deposit {
    time: Seconds,
    cluster: usize,
    volume: f64,
}

/// All deposits in `[0, horizon)`, ordered by time then cluster. Cluster `c`
/// draws from its own stream of the seed, so the stream does not depend on
/// anything a policy does.
fn generate_deposits(city: &City, horizon: Seconds, seed: u64, volumes: &VolumeDistribution) -> Vec<Deposit> {
    let mut all = Vec::new();
    for (c, rate) in city.rates.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64 + 1);
        let times = sample_arrivals(rate, 0, horizon, &mut rng);
        all.extend(times.into_iter().map(|time| Deposit {
            time,
            cluster: c,
            volume: volumes.sample(&mut rng),
        }));
    }
    all.sort_by_key(|d| (d.time, d.cluster));
    all
}

/// Pending events: (time, kind, id, sequence, payload).
type Pending = Reverse<(Seconds, EventKind, usize, u64, Option<usize>)>;

enum Planner {
    Baseline {
        top_n: usize,
        sensor: bool,
    },
    Isr {
        epsilon: f64,
        rho_km: f64,
        sensor: bool,
        book: EstimateBook,
    },
}

impl Planner {
    fn new(policy: &PolicyConfig, city: &City) -> Result<Self, SimError> {
        Ok(match policy {
            &PolicyConfig::Baseline { top_n, sensor } => {
                if top_n < 1 {
                    return Err(PolicyError::Parameter("top_n must be at least 1".into()).into());
                }
                Planner::Baseline { top_n, sensor }
            }
            PolicyConfig::Isr {
                epsilon,
                rho_km,
                sensor,
                estimator,
                prior,
                min_observations,
            } => Planner::Isr {
                epsilon: *epsilon,
                rho_km: *rho_km,
                sensor: *sensor,
                book: EstimateBook::new(
                    city.clusters.iter().map(|c| c.capacity).collect(),
                    prior.map_or_else(default_prior, |p| p.estimate()),
                    *min_observations,
                    *estimator,
                ),
            },
        })
    }

    fn sensor(&self) -> bool {
        match self {
            Planner::Baseline { sensor, .. } | Planner::Isr { sensor, .. } => *sensor,
        }
    }

    fn prizes(&mut self, city: &City, obs: &[ClusterObservation], now: Seconds) -> Result<Vec<Prize>, PolicyError> {
        match self {
            Planner::Baseline { top_n, sensor } => {
                let f = if *sensor {
                    baseline_prizes_sensor
                } else {
                    baseline_prizes
                };
                f(obs, &city.rates, &city.clusters, now, *top_n)
            }
            Planner::Isr {
                epsilon,
                rho_km,
                sensor,
                book,
            } => {
                let estimates = book.estimates();
                let f = if *sensor { isr_prizes_sensor } else { isr_prizes };
                f(
                    obs,
                    &city.rates,
                    &city.clusters,
                    &estimates,
                    now,
                    next_plan_time(now),
                    *epsilon,
                    *rho_km,
                )
            }
        }
    }

    fn record(&mut self, cluster: usize, obs: ServiceObservation) {
        if let Planner::Isr { book, .. } = self {
            book.record(cluster, obs);
        }
    }
}

/// Solves the day's routing problem. Required clusters the router cannot
/// reach in time are demoted to a zero prize and the rest is planned.
fn plan_routes(inst: &RoutingInstance, prizes: &[Prize], params: &SolverParams) -> Result<(Solution, bool), SimError> {
    match solve_hgs(inst, params) {
        Ok(outcome) => {
            let infeasible = !outcome.is_feasible();
            Ok((outcome.solution, infeasible))
        }
        Err(SolveError::Infeasible(blocked)) => {
            log::warn!("required clusters {blocked:?} cannot be served today; demoting them");
            let mut demoted = prizes.to_vec();
            for c in blocked {
                demoted[c] = Prize::Optional(0);
            }
            let relaxed = inst.with_prizes(&demoted)?;
            let outcome = solve_hgs(&relaxed, params).expect("no required cluster is unreachable after demotion");
            Ok((outcome.solution, true))
        }
    }
}

fn day_seed(seed: u64, day: u32) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (day as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Runs one replication. Deterministic in `city`, `policy` and `config`
/// when the solver budget is an iteration count.
pub fn run_simulation(city: &City, policy: &PolicyConfig, config: &SimConfig) -> Result<SimulationOutput, SimError> {
    city.validate()?;
    config.volumes.validate()?;
    if config.warmup_days >= config.horizon_days {
        return Err(SimError::EmptyWindow {
            warmup: config.warmup_days,
            horizon: config.horizon_days,
        });
    }
    let horizon = config.horizon_days as Seconds * DAY;
    let n = city.clusters.len();
    let mut planner = Planner::new(policy, city)?;
    let break_aware = matches!(planner, Planner::Isr { .. });

    let all_required = vec![Prize::Required; n];
    let full = build_routing_instance(
        &city.clusters,
        &city.shift,
        &city.matrix,
        city.depot_location,
        &all_required,
    )?;
    let plain_shift = city.shift.without_breaks();
    let plain = build_routing_instance(
        &city.clusters,
        &plain_shift,
        &city.matrix,
        city.depot_location,
        &all_required,
    )?;

    let deposits = generate_deposits(city, horizon, config.seed, &config.volumes);
    let mut next_deposit = 0;

    let mut queue: BinaryHeap<Pending> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |queue: &mut BinaryHeap<Pending>, time, kind, id, payload| {
        seq += 1;
        queue.push(Reverse((time, kind, id, seq, payload)));
    };
    for day in 0..config.horizon_days {
        let t = day as Seconds * DAY + city.shift.start - PLAN_LEAD;
        if t >= 0 {
            push(&mut queue, t, EventKind::Plan, 0, Some(day as usize));
        }
    }

    let mut state = vec![ClusterState::default(); n];
    let mut balance = VolumeBalance::default();
    let mut log = Vec::new();
    let mut infeasible_days = 0;

    loop {
        let deposit_first = match (deposits.get(next_deposit), queue.peek()) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(d), Some(Reverse((t, kind, id, _, _)))) => (d.time, EventKind::Deposit, d.cluster) < (*t, *kind, *id),
        };
        if deposit_first {
            let d = deposits[next_deposit];
            next_deposit += 1;
            let s = &mut state[d.cluster];
            s.hidden_volume += d.volume;
            s.deposits += 1;
            balance.deposited += d.volume;
            if config.log_deposits {
                log.push(LogRecord {
                    cluster: Some(d.cluster),
                    ..LogRecord::new(d.time, EventKind::Deposit)
                });
            }
            continue;
        }

        let Reverse((time, kind, id, _, payload)) = queue.pop().expect("peeked");
        if time >= horizon {
            continue;
        }
        match kind {
            EventKind::Plan => {
                let day = payload.expect("plan events carry their day") as u32;
                let sensor = planner.sensor();
                let obs: Vec<ClusterObservation> = state
                    .iter()
                    .zip(&city.clusters)
                    .map(|(s, c)| ClusterObservation {
                        deposits: s.deposits,
                        last_service: s.last_service,
                        measured_volume: sensor.then(|| s.hidden_volume.min(c.capacity)),
                    })
                    .collect();
                let prizes = planner.prizes(city, &obs, time)?;
                let base = if break_aware { &full } else { &plain };
                let inst = base.with_prizes(&prizes)?;
                let params = SolverParams {
                    seed: day_seed(config.seed, day),
                    ..config.solver.clone()
                };
                let (solution, infeasible) = plan_routes(&inst, &prizes, &params)?;
                if infeasible {
                    infeasible_days += 1;
                }
                log.push(LogRecord::new(time, EventKind::Plan));

                let shift_start = day as Seconds * DAY + city.shift.start;
                for (vehicle, route) in solution.routes().iter().enumerate() {
                    let route: Vec<usize> = if break_aware {
                        route.clone()
                    } else {
                        let mapped: Vec<usize> = route
                            .iter()
                            .filter_map(|&node| inst.cluster_of(node))
                            .map(|c| full.cluster_node(c))
                            .collect();
                        let (with_breaks, flagged) = insert_breaks(&full, &mapped);
                        if flagged {
                            log::debug!("day {day} vehicle {vehicle}: break placed outside its window");
                        }
                        with_breaks
                    };
                    let driven = execute_route(&full, &route);
                    if driven.stops.is_empty() {
                        continue;
                    }
                    for &(node, start) in &driven.stops {
                        let at = shift_start + start;
                        match full.cluster_of(node) {
                            Some(c) => push(&mut queue, at, EventKind::Service, c, Some(vehicle)),
                            None => push(&mut queue, at, EventKind::Break, vehicle, None),
                        }
                    }
                    let mut end = LogRecord::new(shift_start + driven.end, EventKind::RouteEnd);
                    end.vehicle = Some(vehicle);
                    end.distance = Some(driven.distance);
                    end.duration = Some(driven.end - full.node(ORIGIN).earliest);
                    log.push(end);
                }
            }
            EventKind::Service => {
                let capacity = city.clusters[id].capacity;
                let rec = handle_service(&mut state[id], capacity, time);
                balance.collected += rec.collected;
                balance.overflow_removed += rec.overflow_litres;
                planner.record(id, rec.observation);
                log.push(LogRecord {
                    cluster: Some(id),
                    vehicle: payload,
                    fill_percent: Some(rec.fill_percent),
                    overflow_litres: Some(rec.overflow_litres),
                    ..LogRecord::new(time, EventKind::Service)
                });
            }
            EventKind::Break => {
                log.push(LogRecord {
                    vehicle: Some(id),
                    ..LogRecord::new(time, EventKind::Break)
                });
            }
            EventKind::RouteEnd | EventKind::Deposit => {}
        }
    }

    // Route ends were logged at planning time; restore time order.
    log.sort_by_key(|r| (r.time, r.kind, r.cluster.or(r.vehicle)));
    balance.in_clusters = state.iter().map(|s| s.hidden_volume).sum();
    let measures = compute_measures(&log, config.warmup_days, config.horizon_days, n)?;
    Ok(SimulationOutput {
        measures,
        log,
        balance,
        infeasible_days,
    })
}
