//! Domain types shared by the solver, the policies and the simulator, and the
//! assembly of a prize-collecting routing instance from city data.
//!
//! Clock values on [`Cluster`], [`BreakSpec`] and [`ShiftConfig`] are seconds
//! since midnight. Inside a [`RoutingInstance`] every time is expressed in
//! seconds since the start of the shift, and distances are integer metres (or
//! whatever integer unit the travel matrix uses).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::travel::TravelMatrix;

/// Seconds, either on the wall clock or relative to a shift start.
pub type Seconds = i64;

/// Integer distance unit used by the routing objective (metres for cities).
pub type Cost = i64;

pub const MINUTE: Seconds = 60;
pub const HOUR: Seconds = 3600;
pub const DAY: Seconds = 24 * HOUR;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("expected {expected} prizes (one per cluster), got {got}")]
    PrizeCount { expected: usize, got: usize },
    #[error("location {location} is outside the {size}-location travel matrix")]
    LocationOutOfRange { location: usize, size: usize },
    #[error("invalid cluster {id}: {reason}")]
    InvalidCluster { id: usize, reason: String },
    #[error("invalid shift configuration: {0}")]
    InvalidShift(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

/// A group of co-located containers that is always emptied as one unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub num_containers: u32,
    /// Capacity in litres.
    pub capacity: f64,
    pub correction_factor: f64,
    pub location: usize,
    pub earliest_service: Seconds,
    pub latest_service: Seconds,
}

impl Cluster {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| {
            Err(ModelError::InvalidCluster {
                id: self.id,
                reason: reason.to_string(),
            })
        };

        if self.num_containers < 1 {
            return fail("needs at least one container");
        }
        if !(self.capacity > 0.0) {
            return fail("capacity must be positive");
        }
        if !(self.correction_factor > 0.0) {
            return fail("correction factor must be positive");
        }
        if self.earliest_service > self.latest_service {
            return fail("earliest service after latest service");
        }
        Ok(())
    }
}

/// Set-up and tear-down take two minutes, plus one minute per container.
pub fn service_duration(cluster: &Cluster) -> Seconds {
    (2 + cluster.num_containers as Seconds) * MINUTE
}

/// A driver break taken at the depot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakSpec {
    pub earliest: Seconds,
    pub latest: Seconds,
    pub duration: Seconds,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftConfig {
    /// Clock time at which vehicles leave the depot.
    pub start: Seconds,
    pub max_duration: Seconds,
    pub num_vehicles: usize,
    pub breaks: Vec<BreakSpec>,
}

impl Default for ShiftConfig {
    /// 07:00 start, seven hour shifts, four vehicles, coffee at 10:00 and
    /// lunch at 12:00 (thirty minutes each, startable within half an hour).
    fn default() -> Self {
        ShiftConfig {
            start: 7 * HOUR,
            max_duration: 7 * HOUR,
            num_vehicles: 4,
            breaks: vec![
                BreakSpec {
                    earliest: 10 * HOUR,
                    latest: 10 * HOUR + 30 * MINUTE,
                    duration: 30 * MINUTE,
                },
                BreakSpec {
                    earliest: 12 * HOUR,
                    latest: 12 * HOUR + 30 * MINUTE,
                    duration: 30 * MINUTE,
                },
            ],
        }
    }
}

impl ShiftConfig {
    pub fn end(&self) -> Seconds {
        self.start + self.max_duration
    }

    pub fn without_breaks(&self) -> ShiftConfig {
        ShiftConfig {
            breaks: Vec::new(),
            ..self.clone()
        }
    }

    /// Breaks must be ordered, and each must be completable before the next
    /// one opens and before the shift ends. The route evaluation relies on
    /// this to treat a trailing break like any other node.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidShift(msg));

        if self.num_vehicles < 1 {
            return bad("at least one vehicle is required".into());
        }
        if self.max_duration <= 0 {
            return bad("max_duration must be positive".into());
        }
        for (idx, brk) in self.breaks.iter().enumerate() {
            if brk.duration < 0 || brk.earliest > brk.latest {
                return bad(format!("break {idx} has an invalid window or duration"));
            }
            if brk.earliest < self.start || brk.earliest + brk.duration > self.end() {
                return bad(format!("break {idx} does not fit inside the shift"));
            }
            if let Some(next) = self.breaks.get(idx + 1) {
                if brk.earliest + brk.duration > next.earliest {
                    return bad(format!("breaks {idx} and {} overlap or are unordered", idx + 1));
                }
            }
        }
        Ok(())
    }
}

/// The value of visiting a cluster in today's routing problem, in the same
/// integer unit as distances. `Required` plays the role of an infinite prize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prize {
    Optional(Cost),
    Required,
}

impl Prize {
    pub fn is_required(self) -> bool {
        matches!(self, Prize::Required)
    }

    /// The finite part of the prize; required prizes contribute zero.
    pub fn value(self) -> Cost {
        match self {
            Prize::Optional(value) => value,
            Prize::Required => 0,
        }
    }
}

impl Default for Prize {
    fn default() -> Self {
        Prize::Optional(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    OriginDepot,
    DestinationDepot,
    Break(usize),
    Cluster(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub location: usize,
    pub service: Seconds,
    pub earliest: Seconds,
    pub latest: Seconds,
    pub demand: i64,
    pub prize: Prize,
}

/// Everything needed to describe one client of a generic instance. Used by
/// the benchmark reader and by tests; cities go through
/// [`build_routing_instance`].
#[derive(Clone, Debug, PartialEq)]
pub struct Site {
    pub location: usize,
    pub service: Seconds,
    pub earliest: Seconds,
    pub latest: Seconds,
    pub demand: i64,
    pub prize: Prize,
}

/// One prize-collecting routing problem with time windows and breaks.
///
/// Node layout: `0` is the origin depot, `1` the destination depot, then one
/// node per break, then one node per cluster (in cluster order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingInstance {
    nodes: Vec<Node>,
    num_breaks: usize,
    num_vehicles: usize,
    capacity: Option<i64>,
    distance: Vec<Cost>,
    duration: Vec<Seconds>,
}

pub const ORIGIN: usize = 0;
pub const DESTINATION: usize = 1;

impl RoutingInstance {
    /// Generic constructor. `depot_window` is the depot's time window,
    /// breaks are `(earliest, latest, duration)` in instance time.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        matrix: &TravelMatrix,
        depot_location: usize,
        depot_window: (Seconds, Seconds),
        breaks: &[(Seconds, Seconds, Seconds)],
        sites: &[Site],
        num_vehicles: usize,
        capacity: Option<i64>,
    ) -> Result<Self, ModelError> {
        let size = matrix.len();
        let check_loc = |location: usize| {
            if location >= size {
                Err(ModelError::LocationOutOfRange { location, size })
            } else {
                Ok(())
            }
        };
        check_loc(depot_location)?;
        if num_vehicles == 0 {
            return Err(ModelError::InvalidInstance("no vehicles".into()));
        }
        if depot_window.0 > depot_window.1 {
            return Err(ModelError::InvalidInstance("depot window is empty".into()));
        }

        let depot = |kind| Node {
            kind,
            location: depot_location,
            service: 0,
            earliest: depot_window.0,
            latest: depot_window.1,
            demand: 0,
            prize: Prize::Optional(0),
        };
        let mut nodes = vec![depot(NodeKind::OriginDepot), depot(NodeKind::DestinationDepot)];

        for (idx, &(earliest, latest, duration)) in breaks.iter().enumerate() {
            if earliest > latest || duration < 0 {
                return Err(ModelError::InvalidInstance(format!("break {idx} is malformed")));
            }
            nodes.push(Node {
                kind: NodeKind::Break(idx),
                location: depot_location,
                service: duration,
                earliest,
                latest,
                demand: 0,
                prize: Prize::Optional(0),
            });
        }

        for (idx, site) in sites.iter().enumerate() {
            check_loc(site.location)?;
            if site.earliest > site.latest || site.service < 0 {
                return Err(ModelError::InvalidInstance(format!("client {idx} is malformed")));
            }
            if let Prize::Optional(value) = site.prize {
                if value < 0 {
                    return Err(ModelError::InvalidInstance(format!(
                        "client {idx} has a negative prize"
                    )));
                }
            }
            nodes.push(Node {
                kind: NodeKind::Cluster(idx),
                location: site.location,
                service: site.service,
                earliest: site.earliest,
                latest: site.latest,
                demand: site.demand,
                prize: site.prize,
            });
        }

        let n = nodes.len();
        let mut distance = vec![0; n * n];
        let mut duration = vec![0; n * n];
        for (i, from) in nodes.iter().enumerate() {
            for (j, to) in nodes.iter().enumerate() {
                if i != j {
                    distance[i * n + j] = matrix.distance(from.location, to.location);
                    duration[i * n + j] = matrix.duration(from.location, to.location);
                }
            }
        }

        Ok(RoutingInstance {
            nodes,
            num_breaks: breaks.len(),
            num_vehicles,
            capacity,
            distance,
            duration,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.nodes.len() - 2 - self.num_breaks
    }

    pub fn num_breaks(&self) -> usize {
        self.num_breaks
    }

    pub fn num_vehicles(&self) -> usize {
        self.num_vehicles
    }

    pub fn capacity(&self) -> Option<i64> {
        self.capacity
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    #[inline]
    pub fn dist(&self, from: usize, to: usize) -> Cost {
        self.distance[from * self.nodes.len() + to]
    }

    #[inline]
    pub fn travel(&self, from: usize, to: usize) -> Seconds {
        self.duration[from * self.nodes.len() + to]
    }

    pub fn break_node(&self, idx: usize) -> usize {
        2 + idx
    }

    pub fn break_nodes(&self) -> std::ops::Range<usize> {
        2..2 + self.num_breaks
    }

    pub fn cluster_node(&self, cluster: usize) -> usize {
        2 + self.num_breaks + cluster
    }

    pub fn cluster_nodes(&self) -> std::ops::Range<usize> {
        2 + self.num_breaks..self.nodes.len()
    }

    pub fn is_cluster(&self, node: usize) -> bool {
        node >= 2 + self.num_breaks && node < self.nodes.len()
    }

    pub fn is_break(&self, node: usize) -> bool {
        node >= 2 && node < 2 + self.num_breaks
    }

    /// Cluster index of a cluster node.
    pub fn cluster_of(&self, node: usize) -> Option<usize> {
        match self.nodes[node].kind {
            NodeKind::Cluster(idx) => Some(idx),
            _ => None,
        }
    }

    pub fn prize(&self, node: usize) -> Prize {
        self.nodes[node].prize
    }

    /// End of the planning horizon (latest arrival back at the depot).
    pub fn horizon(&self) -> Seconds {
        self.nodes[DESTINATION].latest
    }

    /// Returns a copy with new prizes, keeping everything else.
    pub fn with_prizes(&self, prizes: &[Prize]) -> Result<Self, ModelError> {
        if prizes.len() != self.num_clusters() {
            return Err(ModelError::PrizeCount {
                expected: self.num_clusters(),
                got: prizes.len(),
            });
        }
        let mut out = self.clone();
        let offset = 2 + self.num_breaks;
        for (idx, &prize) in prizes.iter().enumerate() {
            out.nodes[offset + idx].prize = prize;
        }
        Ok(out)
    }
}

/// Assembles the routing problem for one shift: the depot is duplicated into
/// an origin and destination node, every configured break becomes a node at
/// the depot, and cluster windows are clipped to the shift.
pub fn build_routing_instance(
    clusters: &[Cluster],
    shift: &ShiftConfig,
    matrix: &TravelMatrix,
    depot_location: usize,
    prizes: &[Prize],
) -> Result<RoutingInstance, ModelError> {
    if prizes.len() != clusters.len() {
        return Err(ModelError::PrizeCount {
            expected: clusters.len(),
            got: prizes.len(),
        });
    }
    shift.validate()?;

    let horizon = shift.max_duration;
    let clip = |clock: Seconds| (clock - shift.start).clamp(0, horizon);

    let mut sites = Vec::with_capacity(clusters.len());
    for (cluster, &prize) in clusters.iter().zip(prizes) {
        cluster.validate()?;
        sites.push(Site {
            location: cluster.location,
            service: service_duration(cluster),
            earliest: clip(cluster.earliest_service),
            latest: clip(cluster.latest_service),
            demand: 0,
            prize,
        });
    }

    let breaks: Vec<_> = shift
        .breaks
        .iter()
        .map(|b| (clip(b.earliest), clip(b.latest), b.duration))
        .collect();

    RoutingInstance::new(
        matrix,
        depot_location,
        (0, horizon),
        &breaks,
        &sites,
        shift.num_vehicles,
        None,
    )
}
