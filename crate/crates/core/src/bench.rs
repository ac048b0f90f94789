//! Solomon and Gehring-Homberger VRPTW instances for solver benchmarking.
//!
//! Each client gets a prize of `max(h q, 1)` with `h ~ U[0.75, 2.25]`, so a
//! prize is worth one and a half times the demand on average. Distances,
//! times and prizes are scaled by ten and floored to integers; costs are
//! reported back in the original unit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Cost, ModelError, Prize, RoutingInstance, Site};
use crate::travel::TravelMatrix;

/// Fixed-point factor applied to distances, times and prizes.
pub const SCALE: f64 = 10.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchClient {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub demand: i64,
    pub ready: f64,
    pub due: f64,
    pub service: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkInstance {
    pub name: String,
    pub vehicles: usize,
    pub capacity: i64,
    pub depot: BenchClient,
    pub clients: Vec<BenchClient>,
    /// Generated prizes, in the original unit.
    pub prizes: Option<Vec<f64>>,
}

fn parse_error(line: usize, reason: impl Into<String>) -> BenchError {
    BenchError::Parse {
        line,
        reason: reason.into(),
    }
}

/// Reads the classic text layout: a name line, a `VEHICLE` block with
/// number and capacity, and a `CUSTOMER` block with one row per location
/// (depot first).
pub fn parse_solomon(text: &str) -> Result<BenchmarkInstance, BenchError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let (_, name) = *lines.first().ok_or_else(|| parse_error(1, "empty file"))?;

    let find = |word: &str| {
        lines
            .iter()
            .position(|(_, l)| l.eq_ignore_ascii_case(word))
            .ok_or_else(|| parse_error(0, format!("missing {word} section")))
    };
    let vehicle_at = find("VEHICLE")?;
    let customer_at = find("CUSTOMER")?;

    let numbers = |(line, text): (usize, &str)| -> Result<Vec<f64>, BenchError> {
        text.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_error(line, format!("not a number: {t}")))
            })
            .collect()
    };

    // Skip the column header line after VEHICLE.
    let fleet_line = *lines
        .get(vehicle_at + 2)
        .ok_or_else(|| parse_error(0, "missing vehicle numbers"))?;
    let fleet = numbers(fleet_line)?;
    if fleet.len() != 2 || fleet[0] < 1.0 || fleet[1] < 0.0 {
        return Err(parse_error(fleet_line.0, "expected vehicle number and capacity"));
    }

    let mut rows = Vec::new();
    for &entry in lines.iter().skip(customer_at + 2) {
        let v = numbers(entry)?;
        if v.len() != 7 {
            return Err(parse_error(entry.0, format!("expected 7 columns, found {}", v.len())));
        }
        if v[3] < 0.0 || v[6] < 0.0 || v[4] > v[5] {
            return Err(parse_error(entry.0, "negative demand or service, or reversed window"));
        }
        rows.push(BenchClient {
            id: v[0] as usize,
            x: v[1],
            y: v[2],
            demand: v[3] as i64,
            ready: v[4],
            due: v[5],
            service: v[6],
        });
    }
    if rows.len() < 2 {
        return Err(parse_error(customer_at + 1, "need a depot and at least one client"));
    }
    let depot = rows.remove(0);
    Ok(BenchmarkInstance {
        name: name.to_string(),
        vehicles: fleet[0] as usize,
        capacity: fleet[1] as i64,
        depot,
        clients: rows,
        prizes: None,
    })
}

/// Writes an instance in the layout [`parse_solomon`] reads.
pub fn write_solomon(inst: &BenchmarkInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}\n\nVEHICLE\nNUMBER     CAPACITY\n{:>6}{:>13}\n",
        inst.name, inst.vehicles, inst.capacity
    );
    let _ = writeln!(
        out,
        "CUSTOMER\nCUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME  DUE DATE   SERVICE   TIME\n"
    );
    for c in std::iter::once(&inst.depot).chain(&inst.clients) {
        let _ = writeln!(
            out,
            "{:>6}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}",
            c.id, c.x, c.y, c.demand, c.ready, c.due, c.service
        );
    }
    out
}

/// Prizes `max(h_i q_i, 1)` with `h_i ~ U[0.75, 2.25]`, deterministic in
/// `seed`.
pub fn generate_prizes(inst: &BenchmarkInstance, seed: u64) -> BenchmarkInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prizes = inst
        .clients
        .iter()
        .map(|c| (rng.random_range(0.75..=2.25) * c.demand as f64).max(1.0))
        .collect();
    BenchmarkInstance {
        prizes: Some(prizes),
        ..inst.clone()
    }
}

fn scaled(v: f64) -> i64 {
    (v * SCALE).floor() as i64
}

/// The prize-collecting routing instance with vehicle capacity. Clients
/// without generated prizes are required.
pub fn to_routing_instance(inst: &BenchmarkInstance) -> Result<RoutingInstance, BenchError> {
    let points: Vec<&BenchClient> = std::iter::once(&inst.depot).chain(&inst.clients).collect();
    let n = points.len();
    let mut dist = vec![0; n * n];
    for (i, a) in points.iter().enumerate() {
        for (j, b) in points.iter().enumerate() {
            dist[i * n + j] = scaled((a.x - b.x).hypot(a.y - b.y));
        }
    }
    let matrix = TravelMatrix::from_flat(n, dist.clone(), dist).map_err(|e| parse_error(0, e.to_string()))?;
    let sites: Vec<Site> = inst
        .clients
        .iter()
        .enumerate()
        .map(|(k, c)| Site {
            location: k + 1,
            service: scaled(c.service),
            earliest: scaled(c.ready),
            latest: scaled(c.due),
            demand: c.demand,
            prize: match &inst.prizes {
                Some(p) => Prize::Optional(scaled(p[k])),
                None => Prize::Required,
            },
        })
        .collect();
    Ok(RoutingInstance::new(
        &matrix,
        0,
        (scaled(inst.depot.ready), scaled(inst.depot.due)),
        &[],
        &sites,
        inst.vehicles,
        Some(inst.capacity),
    )?)
}

/// Converts a scaled objective back to the original unit.
pub fn unscaled(cost: Cost) -> f64 {
    cost as f64 / SCALE
}

/// Relative gap to a best known solution.
pub fn gap(cost: f64, bks: f64) -> f64 {
    (cost - bks) / bks
}

/// Benchmark group of an instance name: `C1`, `C2`, `R1`, `R2`, `RC1` or
/// `RC2`.
pub fn group_of(name: &str) -> Option<&'static str> {
    let upper = name.to_ascii_uppercase();
    let groups = ["RC1", "RC2", "C1", "C2", "R1", "R2"];
    groups.into_iter().find(|g| upper.starts_with(g))
}

/// Best known solutions: one `name value` pair per line, `#` comments.
pub fn parse_bks(text: &str) -> Result<BTreeMap<String, f64>, BenchError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_error(i + 1, "expected `name value`"));
        };
        let value: f64 = value
            .parse()
            .map_err(|_| parse_error(i + 1, format!("not a number: {value}")))?;
        out.insert(name.to_string(), value);
    }
    Ok(out)
}

/// Mean gap per group over `(instance name, gap)` pairs.
pub fn group_means(gaps: &[(String, f64)]) -> BTreeMap<&'static str, f64> {
    let mut acc: BTreeMap<&'static str, (f64, usize)> = BTreeMap::new();
    for (name, g) in gaps {
        if let Some(group) = group_of(name) {
            let e = acc.entry(group).or_default();
            e.0 += g;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// A random instance in the Gehring-Homberger layout (random client
/// positions, service time 10), for when the published files are not at
/// hand.
pub fn synthetic_instance(name: &str, clients: usize, seed: u64) -> BenchmarkInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 500.0;
    let horizon = 1000.0;
    let depot = BenchClient {
        id: 0,
        x: side / 2.0,
        y: side / 2.0,
        demand: 0,
        ready: 0.0,
        due: horizon,
        service: 0.0,
    };
    let clients = (1..=clients)
        .map(|id| {
            let x = rng.random_range(0..=side as i64) as f64;
            let y = rng.random_range(0..=side as i64) as f64;
            let reach = (x - depot.x).hypot(y - depot.y).ceil();
            let service = 10.0;
            let slack = horizon - 2.0 * reach - service;
            let width = rng.random_range(30..=120) as f64;
            let ready = (rng.random_range(0.0..1.0) * (slack - width).max(0.0) + reach).floor();
            let due = (ready + width).min(horizon - reach - service).max(ready);
            BenchClient {
                id,
                x,
                y,
                demand: rng.random_range(10..=50),
                ready,
                due,
                service,
            }
        })
        .collect();
    BenchmarkInstance {
        name: name.to_string(),
        vehicles: 250,
        capacity: 200,
        depot,
        clients,
        prizes: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "C101

VEHICLE
NUMBER     CAPACITY
  25         200

CUSTOMER
CUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME  DUE DATE   SERVICE   TIME

    0      40         50          0          0       1236          0
    1      45         68         10        912        967         90
    2      45         70         30        825        870         90
    3      42         66          0         65        146         90
";

    #[test]
    fn parses_the_classic_layout() {
        let inst = parse_solomon(SAMPLE).unwrap();
        assert_eq!(inst.name, "C101");
        assert_eq!((inst.vehicles, inst.capacity), (25, 200));
        assert_eq!(inst.clients.len(), 3);
        assert_eq!(inst.depot.due, 1236.0);
        assert_eq!(inst.clients[1].demand, 30);
        assert_eq!(parse_solomon(&write_solomon(&inst)).unwrap(), inst);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let broken = SAMPLE.replace(
            "    2      45         70         30        825        870         90",
            "    2  45 x",
        );
        assert!(matches!(parse_solomon(&broken), Err(BenchError::Parse { .. })));
        assert!(parse_solomon("C101\n").is_err());
        let reversed = SAMPLE.replace("912        967", "967        912");
        assert!(parse_solomon(&reversed).is_err());
    }

    #[test]
    fn prizes_follow_the_demand() {
        let inst = parse_solomon(SAMPLE).unwrap();
        let a = generate_prizes(&inst, 3);
        let b = generate_prizes(&inst, 3);
        assert_eq!(a, b);
        let p = a.prizes.unwrap();
        assert!((7.5..=22.5).contains(&p[0]));
        assert!((22.5..=67.5).contains(&p[1]));
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn mean_prize_ratio_is_one_and_a_half() {
        let inst = generate_prizes(&synthetic_instance("R1_10_1", 1000, 1), 7);
        let p = inst.prizes.as_ref().unwrap();
        let ratios: Vec<f64> = inst
            .clients
            .iter()
            .zip(p)
            .filter(|(c, _)| c.demand >= 10)
            .map(|(c, p)| p / c.demand as f64)
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 1.5).abs() < 0.05, "{mean}");
    }

    #[test]
    fn instance_conversion_scales_by_ten() {
        let inst = generate_prizes(&parse_solomon(SAMPLE).unwrap(), 0);
        let r = to_routing_instance(&inst).unwrap();
        let c = r.cluster_node(0);
        // |(40,50) - (45,68)| = 18.68 -> 186
        assert_eq!(r.dist(0, c), 186);
        assert_eq!(r.node(c).earliest, 9120);
        assert_eq!(r.node(c).service, 900);
        assert_eq!(r.capacity(), Some(200));
        assert_eq!(
            r.prize(c),
            Prize::Optional((inst.prizes.unwrap()[0] * 10.0).floor() as i64)
        );
    }

    #[test]
    fn gaps_and_groups() {
        assert_eq!(gap(1234.5, 1234.5), 0.0);
        assert!((gap(1.0026 * 800.0, 800.0) - 0.0026).abs() < 1e-12);
        assert_eq!(group_of("RC2_10_5"), Some("RC2"));
        assert_eq!(group_of("c101"), Some("C1"));
        assert_eq!(group_of("R1_10_1"), Some("R1"));
        assert_eq!(group_of("X-n101"), None);
        let means = group_means(&[("C101".into(), 0.01), ("C102".into(), 0.03), ("R201".into(), 0.0)]);
        assert!((means["C1"] - 0.02).abs() < 1e-12);
        assert_eq!(means["R2"], 0.0);
    }

    #[test]
    fn bks_file() {
        let bks = parse_bks("# name value\nC1_10_1 42444.8\nR1_10_1  53026.1 # comment\n").unwrap();
        assert_eq!(bks["C1_10_1"], 42444.8);
        assert_eq!(bks.len(), 2);
        assert!(parse_bks("C1 x\n").is_err());
    }

    #[test]
    fn synthetic_windows_are_reachable() {
        let inst = synthetic_instance("R1_10_1", 300, 2);
        for c in &inst.clients {
            let reach = (c.x - inst.depot.x).hypot(c.y - inst.depot.y);
            assert!(c.ready <= c.due);
            assert!(c.due + c.service + reach <= inst.depot.due + 1.0);
            assert!(reach <= c.due + 1.0);
        }
    }
}
