//! Browser demo. Each exported function takes plain numbers and returns a
//! JSON string for `www/index.html` to draw.

use isr_core::model::Prize;
use isr_core::policy::{
    conservative_sigma, estimate_volume, log_likelihood, overflow_probability, prize_for, EstimatorMode,
    ServiceObservation,
};
use isr_core::sim::{run_simulation, EventKind, PolicyConfig, SimConfig};
use isr_core::{generate_city, ShiftConfig, SolverParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Curve {
    /// Deposits already in the cluster.
    pub deposits: Vec<u64>,
    pub probability: Vec<f64>,
    /// Prize in km; `None` marks a required visit.
    pub prize_km: Vec<Option<f64>>,
}

/// Overflow probability and prize against the number of deposits present,
/// for mean volume `mu`, capacity and expected arrivals before the next
/// shift.
pub fn overflow_curve_data(mu: f64, capacity: f64, arrivals: f64, epsilon: f64, rho_km: f64) -> Result<Curve, String> {
    if !(mu > 0.0 && mu < 100.0) || !(capacity > 0.0) || !(arrivals >= 0.0) {
        return Err("need 0 < mu < 100, capacity > 0 and arrivals >= 0".into());
    }
    if !(0.0..1.0).contains(&epsilon) || !(rho_km > 0.0) {
        return Err("need 0 <= epsilon < 1 and rho > 0".into());
    }
    let sigma = conservative_sigma(mu);
    let top = (1.5 * capacity / mu).ceil() as u64;
    let deposits: Vec<u64> = (0..=top).collect();
    let probability: Vec<f64> = deposits
        .iter()
        .map(|&n| overflow_probability(n, arrivals, mu, sigma, capacity))
        .collect();
    let prize_km = probability
        .iter()
        .map(|&p| match prize_for(p, epsilon, rho_km) {
            Prize::Required => None,
            Prize::Optional(m) => Some(m as f64 / 1000.0),
        })
        .collect();
    Ok(Curve {
        deposits,
        probability,
        prize_km,
    })
}

#[derive(Debug, Serialize)]
pub struct Likelihood {
    pub mu: Vec<f64>,
    pub log_likelihood: Vec<f64>,
    pub estimate: f64,
    pub overflows: usize,
}

/// Volume estimation from `observations` services of a cluster whose
/// deposits all hold `true_mu` litres; the visit interval is random.
pub fn likelihood_data(true_mu: f64, capacity: f64, observations: usize, seed: u64) -> Result<Likelihood, String> {
    if !(true_mu > 0.0 && true_mu < 100.0) || !(capacity > 0.0) || observations == 0 {
        return Err("need 0 < mu < 100, capacity > 0 and at least one observation".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = capacity / true_mu;
    let sample: Vec<ServiceObservation> = (0..observations)
        .map(|_| {
            let deposits = (centre * rng.random_range(0.7..1.35)).round() as u64;
            ServiceObservation {
                deposits,
                overflow: true_mu * deposits as f64 > capacity,
            }
        })
        .collect();
    let est = estimate_volume(&sample, capacity, EstimatorMode::Conservative).map_err(|e| e.to_string())?;
    let mu: Vec<f64> = (1..=198).map(|k| f64::from(k) * 0.5).collect();
    let log_likelihood = mu
        .iter()
        .map(|&m| log_likelihood(m, conservative_sigma(m), capacity, &sample))
        .collect();
    Ok(Likelihood {
        mu,
        log_likelihood,
        estimate: est.mu,
        overflows: sample.iter().filter(|o| o.overflow).count(),
    })
}

#[derive(Debug, Serialize)]
pub struct Snapshot {
    pub depot: (f64, f64),
    pub clusters: Vec<(f64, f64)>,
    /// Fill percentage at each service on the last day, by cluster.
    pub last_fill: Vec<Option<f64>>,
    /// Visited points of each route on the last day, depot at both ends.
    pub routes: Vec<Vec<(f64, f64)>>,
    pub distance_km_per_day: f64,
    pub service_level: f64,
    pub clusters_per_day: f64,
}

/// Simulates a small synthetic city for `days` days under the integrated
/// policy (`policy = "isr"`, `parameter` = rho in km) or the baseline
/// (`policy = "baseline"`, `parameter` = clusters per day).
pub fn simulate_data(seed: u64, clusters: usize, days: u32, policy: &str, parameter: f64) -> Result<Snapshot, String> {
    if !(5..=150).contains(&clusters) || !(2..=60).contains(&days) {
        return Err("use 5 to 150 clusters and 2 to 60 days".into());
    }
    let policy = match policy {
        "isr" if parameter > 0.0 => PolicyConfig::isr(0.0, parameter),
        "baseline" if parameter >= 1.0 => PolicyConfig::baseline(parameter as usize),
        _ => return Err("policy must be `isr` (rho > 0) or `baseline` (count >= 1)".into()),
    };
    let area = (clusters as f64).sqrt() * 0.8;
    let (synthetic, matrix) = generate_city(seed, clusters, area);
    let city = synthetic.clone().into_city(matrix, ShiftConfig::default());
    let config = SimConfig {
        horizon_days: days,
        warmup_days: 1,
        seed,
        solver: SolverParams {
            budget: isr_core::Budget::Iterations(60),
            granularity: 20,
            ..SolverParams::default()
        },
        ..SimConfig::default()
    };
    let out = run_simulation(&city, &policy, &config).map_err(|e| e.to_string())?;

    let last_day = i64::from(days - 1) * isr_core::model::DAY;
    let mut last_fill = vec![None; clusters];
    let mut routes: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut current: Vec<Option<usize>> = vec![None; city.shift.num_vehicles];
    for rec in out.log.iter().filter(|r| r.time >= last_day) {
        let (Some(kind), Some(vehicle)) = (rec.kind, rec.vehicle) else {
            continue;
        };
        let slot = match current[vehicle] {
            Some(s) => s,
            None => {
                routes.push(vec![synthetic.depot]);
                current[vehicle] = Some(routes.len() - 1);
                routes.len() - 1
            }
        };
        match (kind, rec.cluster) {
            (EventKind::Service, Some(c)) => {
                routes[slot].push(synthetic.coordinates[c]);
                last_fill[c] = rec.fill_percent;
            }
            (EventKind::RouteEnd, _) => {
                routes[slot].push(synthetic.depot);
                current[vehicle] = None;
            }
            _ => {}
        }
    }
    Ok(Snapshot {
        depot: synthetic.depot,
        clusters: synthetic.coordinates,
        last_fill,
        routes,
        distance_km_per_day: out.measures.avg_daily_distance,
        service_level: out.measures.service_level,
        clusters_per_day: out.measures.avg_clusters_per_day,
    })
}

fn to_js<T: Serialize>(result: Result<T, String>) -> Result<String, JsError> {
    let value = result.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn overflow_curve(mu: f64, capacity: f64, arrivals: f64, epsilon: f64, rho_km: f64) -> Result<String, JsError> {
    to_js(overflow_curve_data(mu, capacity, arrivals, epsilon, rho_km))
}

#[wasm_bindgen]
pub fn likelihood(true_mu: f64, capacity: f64, observations: u32, seed: u32) -> Result<String, JsError> {
    to_js(likelihood_data(
        true_mu,
        capacity,
        observations as usize,
        u64::from(seed),
    ))
}

#[wasm_bindgen]
pub fn simulate_city(seed: u32, clusters: u32, days: u32, policy: &str, parameter: f64) -> Result<String, JsError> {
    to_js(simulate_data(
        u64::from(seed),
        clusters as usize,
        days,
        policy,
        parameter,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_rises_with_deposits() {
        let c = overflow_curve_data(30.0, 4000.0, 20.0, 0.05, 64.0).unwrap();
        assert_eq!(c.deposits.len(), c.probability.len());
        assert!(c.probability.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        assert!(c.probability[0] < 1e-6);
        assert_eq!(c.prize_km.last(), Some(&None));
        assert_eq!(c.prize_km[0], Some(0.0));
        assert!(overflow_curve_data(0.0, 4000.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn likelihood_peaks_near_the_truth() {
        let l = likelihood_data(30.0, 4000.0, 150, 1).unwrap();
        assert!((25.0..=36.0).contains(&l.estimate), "{}", l.estimate);
        let best =
            l.mu.iter()
                .zip(&l.log_likelihood)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
        assert!((best - l.estimate).abs() <= 1.0);
        assert!(l.overflows > 0 && l.overflows < 150);
    }

    #[test]
    fn snapshot_routes_start_and_end_at_the_depot() {
        let s = simulate_data(3, 20, 4, "isr", 64.0).unwrap();
        assert_eq!(s.clusters.len(), 20);
        assert!(!s.routes.is_empty());
        for r in &s.routes {
            assert_eq!(r.first(), Some(&s.depot));
            assert_eq!(r.last(), Some(&s.depot));
        }
        let served: usize = s.routes.iter().map(|r| r.len() - 2).sum();
        assert_eq!(served, s.last_fill.iter().filter(|f| f.is_some()).count());
        assert!(simulate_data(3, 20, 4, "other", 1.0).is_err());
        let json = serde_json::to_string(&simulate_data(3, 10, 3, "baseline", 4.0).unwrap()).unwrap();
        assert!(json.contains("\"routes\""));
    }
}
