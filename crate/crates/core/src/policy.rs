//! Prize-setting policies for one shift.
//!
//! The baseline ranks clusters by when they are expected to be full and makes
//! the most urgent ones mandatory. The integrated policy turns an estimated
//! overflow probability into a prize, so the router trades driving distance
//! against overflow risk. Deposit volumes are not observed directly; they are
//! estimated by maximum likelihood from whether clusters had overflowed when
//! serviced.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{expected_arrivals, DemandError, RateFunction, MAX_DEPOSIT_LITRES};
use crate::model::{Cluster, Cost, Prize, Seconds, DAY};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("{what}: expected {expected} entries, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid policy parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Demand(#[from] DemandError),
}

/// What the planner knows about a cluster at planning time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterObservation {
    /// Deposits since the last service.
    pub deposits: u64,
    pub last_service: Seconds,
    /// Litres in the cluster as reported by a fill-level sensor.
    pub measured_volume: Option<f64>,
}

/// Deposits between two consecutive services and whether the cluster had
/// overflowed when the second one took place.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceObservation {
    pub deposits: u64,
    pub overflow: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// No observed overflow: the likelihood keeps rising towards small means.
    Lower,
    /// Every service found an overflow.
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub mu: f64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
}

impl VolumeEstimate {
    /// The largest standard deviation a deposit volume in `[0, 100]` litres
    /// with mean `mu` can have.
    pub fn conservative(mu: f64) -> Self {
        VolumeEstimate {
            mu,
            sigma: conservative_sigma(mu),
            boundary: None,
        }
    }
}

pub fn conservative_sigma(mu: f64) -> f64 {
    (mu * (MAX_DEPOSIT_LITRES - mu)).max(0.0).sqrt()
}

/// Litres per deposit assumed by the baseline.
pub const BASELINE_DEPOSIT_LITRES: f64 = 60.0;

/// How far ahead the baseline looks for the moment a cluster fills up.
pub const BASELINE_LOOKAHEAD: Seconds = 28 * DAY;

/// Shifts are planned once a day.
pub fn next_plan_time(now: Seconds) -> Seconds {
    now + DAY
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), PolicyError> {
    if expected != got {
        return Err(PolicyError::Length { what, expected, got });
    }
    Ok(())
}

/// Standard normal upper tail `1 - Phi(z)`, accurate far into the tail.
fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Probability that a cluster holding `n` deposits, receiving a Poisson
/// number of further deposits with mean `l`, exceeds `capacity` litres when
/// deposit volumes have mean `mu` and standard deviation `sigma`. Uses the
/// normal approximation of the total volume.
pub fn overflow_probability(n: u64, l: f64, mu: f64, sigma: f64, capacity: f64) -> f64 {
    let count = n as f64 + l;
    let mean = count * mu;
    let var = count * sigma * sigma + l * mu * mu;
    if var <= 0.0 {
        return if n as f64 * mu > capacity { 1.0 } else { 0.0 };
    }
    upper_tail((capacity - mean) / var.sqrt())
}

/// Overflow probability when the current content `measured` is known and
/// only the `l` future deposits are uncertain.
pub fn overflow_probability_sensor(measured: f64, l: f64, mu: f64, sigma: f64, capacity: f64) -> f64 {
    let var = l * sigma * sigma + l * mu * mu;
    if var <= 0.0 {
        return if measured > capacity { 1.0 } else { 0.0 };
    }
    upper_tail((capacity - measured - l * mu) / var.sqrt())
}

const PROB_FLOOR: f64 = 1e-12;

fn overflow_given(deposits: u64, mu: f64, sigma: f64, capacity: f64) -> f64 {
    overflow_probability(deposits, 0.0, mu, sigma, capacity)
}

/// Observations grouped by (capacity, deposits, overflow), so sums do not
/// depend on observation order.
#[derive(Clone, Debug, Default, PartialEq)]
struct Sample {
    counts: BTreeMap<(u64, u64, bool), u64>,
    overflows: u64,
    total: u64,
}

impl Sample {
    fn add(&mut self, capacity: f64, obs: &ServiceObservation) {
        *self
            .counts
            .entry((capacity.to_bits(), obs.deposits, obs.overflow))
            .or_default() += 1;
        self.total += 1;
        self.overflows += obs.overflow as u64;
    }

    fn of(capacity: f64, observations: &[ServiceObservation]) -> Self {
        let mut sample = Sample::default();
        for obs in observations {
            sample.add(capacity, obs);
        }
        sample
    }

    fn boundary(&self) -> Option<Boundary> {
        if self.overflows == 0 {
            Some(Boundary::Lower)
        } else if self.overflows == self.total {
            Some(Boundary::Upper)
        } else {
            None
        }
    }

    fn log_likelihood(&self, mu: f64, sigma: f64) -> f64 {
        self.counts
            .iter()
            .map(|(&(cap, d, o), &count)| {
                let p = overflow_given(d, mu, sigma, f64::from_bits(cap)).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                count as f64 * if o { p.ln() } else { (1.0 - p).ln() }
            })
            .sum()
    }
}

/// Log likelihood of overflow observations at one cluster of capacity
/// `capacity` under deposit volumes with mean `mu` and deviation `sigma`.
pub fn log_likelihood(mu: f64, sigma: f64, capacity: f64, observations: &[ServiceObservation]) -> f64 {
    Sample::of(capacity, observations).log_likelihood(mu, sigma)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// One-dimensional search along the largest admissible deviation.
    #[default]
    Conservative,
    /// Two-dimensional ascent started from the conservative estimate.
    Unconstrained,
}

const WALK_STEP: f64 = 0.1;
const GOLDEN_TOL: f64 = 1e-4;
const MU_MIN: f64 = 1e-3;

fn golden_section(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > GOLDEN_TOL {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}

fn conservative_fit(sample: &Sample) -> f64 {
    let f = |mu: f64| sample.log_likelihood(mu, conservative_sigma(mu));
    let mut mu = MAX_DEPOSIT_LITRES;
    let mut value = f(mu);
    loop {
        let next = mu - WALK_STEP;
        if next < WALK_STEP {
            return mu;
        }
        let next_value = f(next);
        if next_value < value {
            let hi = (mu + WALK_STEP).min(MAX_DEPOSIT_LITRES);
            let best = golden_section(&f, next, hi);
            return if f(best) >= value { best } else { mu };
        }
        mu = next;
        value = next_value;
    }
}

fn unconstrained_fit(sample: &Sample, start: f64) -> (f64, f64) {
    let project = |mu: f64, sigma: f64| {
        let mu = mu.clamp(MU_MIN, MAX_DEPOSIT_LITRES);
        (mu, sigma.clamp(1e-3, conservative_sigma(mu).max(1e-3)))
    };
    let f = |(mu, sigma): (f64, f64)| sample.log_likelihood(mu, sigma);
    let mut x = project(start, conservative_sigma(start));
    let mut fx = f(x);
    let h = 1e-4;
    let mut step = 1.0;
    for _ in 0..500 {
        let g_mu = (f(project(x.0 + h, x.1)) - f(project(x.0 - h, x.1))) / (2.0 * h);
        let g_sigma = (f(project(x.0, x.1 + h)) - f(project(x.0, x.1 - h))) / (2.0 * h);
        let norm = g_mu.hypot(g_sigma);
        if !(norm > 1e-9) {
            break;
        }
        let mut moved = false;
        while step > 1e-8 {
            let candidate = project(x.0 + step * g_mu / norm, x.1 + step * g_sigma / norm);
            let fc = f(candidate);
            if fc > fx {
                x = candidate;
                fx = fc;
                moved = true;
                step *= 2.0;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    x
}

fn estimate_sample(sample: &Sample, mode: EstimatorMode) -> VolumeEstimate {
    let mu = conservative_fit(sample);
    let (mu, sigma) = match mode {
        EstimatorMode::Conservative => (mu, conservative_sigma(mu)),
        EstimatorMode::Unconstrained => unconstrained_fit(sample, mu),
    };
    VolumeEstimate {
        mu,
        sigma,
        boundary: sample.boundary(),
    }
}

/// Maximum likelihood estimate of the deposit volume distribution from
/// overflow observations at one cluster. The conservative mode walks down
/// from a mean of 100 litres along the largest admissible deviation until
/// the likelihood drops, then refines by golden section. Samples without
/// overflow variation are flagged with a [`Boundary`].
pub fn estimate_volume(
    observations: &[ServiceObservation],
    capacity: f64,
    mode: EstimatorMode,
) -> Result<VolumeEstimate, PolicyError> {
    if observations.is_empty() {
        return Err(PolicyError::Parameter("at least one observation is needed".into()));
    }
    Ok(estimate_sample(&Sample::of(capacity, observations), mode))
}

/// Like [`estimate_volume`], over observations from clusters of different
/// capacities.
pub fn estimate_volume_pooled(
    groups: &[(f64, &[ServiceObservation])],
    mode: EstimatorMode,
) -> Result<VolumeEstimate, PolicyError> {
    let mut sample = Sample::default();
    for (capacity, observations) in groups {
        for obs in *observations {
            sample.add(*capacity, obs);
        }
    }
    if sample.total == 0 {
        return Err(PolicyError::Parameter("at least one observation is needed".into()));
    }
    Ok(estimate_sample(&sample, mode))
}

/// Volume estimates for every cluster from the service history, with a
/// fallback chain: the cluster's own sample when it has enough
/// observations with overflow variation, else the pooled sample of all
/// clusters, else the prior.
#[derive(Clone, Debug)]
pub struct EstimateBook {
    capacities: Vec<f64>,
    history: Vec<Vec<ServiceObservation>>,
    own: Vec<Option<VolumeEstimate>>,
    pooled: Option<VolumeEstimate>,
    pooled_stale: bool,
    prior: VolumeEstimate,
    min_observations: usize,
    mode: EstimatorMode,
}

impl EstimateBook {
    pub fn new(capacities: Vec<f64>, prior: VolumeEstimate, min_observations: usize, mode: EstimatorMode) -> Self {
        let n = capacities.len();
        EstimateBook {
            capacities,
            history: vec![Vec::new(); n],
            own: vec![None; n],
            pooled: None,
            pooled_stale: false,
            prior,
            min_observations,
            mode,
        }
    }

    pub fn record(&mut self, cluster: usize, obs: ServiceObservation) {
        self.history[cluster].push(obs);
        let sample = Sample::of(self.capacities[cluster], &self.history[cluster]);
        self.own[cluster] = if self.history[cluster].len() >= self.min_observations && sample.boundary().is_none() {
            Some(estimate_sample(&sample, self.mode))
        } else {
            None
        };
        self.pooled_stale = true;
    }

    pub fn history(&self, cluster: usize) -> &[ServiceObservation] {
        &self.history[cluster]
    }

    pub fn estimates(&mut self) -> Vec<VolumeEstimate> {
        if self.pooled_stale {
            let mut sample = Sample::default();
            for (cap, obs) in self.capacities.iter().zip(&self.history) {
                for o in obs {
                    sample.add(*cap, o);
                }
            }
            self.pooled =
                (sample.total > 0 && sample.boundary().is_none()).then(|| estimate_sample(&sample, self.mode));
            self.pooled_stale = false;
        }
        self.own
            .iter()
            .map(|own| own.or(self.pooled).unwrap_or(self.prior))
            .collect()
    }
}

/// Prior used before any overflow has been seen: 30 litre mean with the
/// conservative deviation.
pub fn default_prior() -> VolumeEstimate {
    VolumeEstimate::conservative(30.0)
}

fn time_till_full(rate: &RateFunction, now: Seconds, remaining_deposits: f64) -> Seconds {
    if remaining_deposits <= 0.0 {
        return now;
    }
    rate.time_until(now, remaining_deposits, now + BASELINE_LOOKAHEAD)
}

/// Ranks by expected time until full. Clusters already past full tie at
/// `now`; among them the one furthest past full comes first.
fn rank_required(full_at: &[(Seconds, f64)], top_n: usize) -> Vec<Prize> {
    let mut order: Vec<usize> = (0..full_at.len()).collect();
    order.sort_by(|&a, &b| {
        let ((ta, ra), (tb, rb)) = (full_at[a], full_at[b]);
        ta.cmp(&tb).then(ra.total_cmp(&rb)).then(a.cmp(&b))
    });
    let mut prizes = vec![Prize::Optional(0); full_at.len()];
    for &c in order.iter().take(top_n) {
        prizes[c] = Prize::Required;
    }
    prizes
}

/// Baseline: the `top_n` clusters expected to fill up soonest are required,
/// all others get a zero prize. A cluster is expected to be full once the
/// expected number of deposits reaches `r_c (V_c / D - n_c)`.
pub fn baseline_prizes(
    observations: &[ClusterObservation],
    rates: &[RateFunction],
    clusters: &[Cluster],
    now: Seconds,
    top_n: usize,
) -> Result<Vec<Prize>, PolicyError> {
    check_len("observations", clusters.len(), observations.len())?;
    check_len("rates", clusters.len(), rates.len())?;
    if top_n < 1 {
        return Err(PolicyError::Parameter("top_n must be at least 1".into()));
    }
    let full_at: Vec<(Seconds, f64)> = clusters
        .iter()
        .zip(observations)
        .zip(rates)
        .map(|((c, obs), rate)| {
            let remaining = c.correction_factor * (c.capacity / BASELINE_DEPOSIT_LITRES - obs.deposits as f64);
            (time_till_full(rate, now, remaining), remaining)
        })
        .collect();
    Ok(rank_required(&full_at, top_n))
}

/// Baseline with fill-level sensors: the remaining capacity is measured.
pub fn baseline_prizes_sensor(
    observations: &[ClusterObservation],
    rates: &[RateFunction],
    clusters: &[Cluster],
    now: Seconds,
    top_n: usize,
) -> Result<Vec<Prize>, PolicyError> {
    check_len("observations", clusters.len(), observations.len())?;
    check_len("rates", clusters.len(), rates.len())?;
    if top_n < 1 {
        return Err(PolicyError::Parameter("top_n must be at least 1".into()));
    }
    let full_at: Vec<(Seconds, f64)> = clusters
        .iter()
        .zip(observations)
        .zip(rates)
        .map(|((c, obs), rate)| {
            let measured = obs.measured_volume.unwrap_or(0.0);
            let remaining = c.correction_factor * (c.capacity - measured) / BASELINE_DEPOSIT_LITRES;
            (time_till_full(rate, now, remaining), remaining)
        })
        .collect();
    Ok(rank_required(&full_at, top_n))
}

fn check_isr(epsilon: f64, rho_km: f64) -> Result<(), PolicyError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(PolicyError::Parameter(format!("epsilon {epsilon} is outside [0, 1]")));
    }
    if !(rho_km > 0.0) {
        return Err(PolicyError::Parameter(format!("rho {rho_km} must be positive")));
    }
    Ok(())
}

/// Prize for an overflow probability: required when `p >= 1 - epsilon`
/// (never for `epsilon = 0`), otherwise `rho * p` in metres.
pub fn prize_for(p: f64, epsilon: f64, rho_km: f64) -> Prize {
    if epsilon > 0.0 && p >= 1.0 - epsilon {
        Prize::Required
    } else {
        Prize::Optional((rho_km * 1000.0 * p).round() as Cost)
    }
}

/// Integrated policy: prize `rho * P(overflow before the next shift)`.
#[allow(clippy::too_many_arguments)]
pub fn isr_prizes(
    observations: &[ClusterObservation],
    rates: &[RateFunction],
    clusters: &[Cluster],
    estimates: &[VolumeEstimate],
    now: Seconds,
    next_plan: Seconds,
    epsilon: f64,
    rho_km: f64,
) -> Result<Vec<Prize>, PolicyError> {
    isr_common(
        observations,
        rates,
        clusters,
        estimates,
        now,
        next_plan,
        epsilon,
        rho_km,
        false,
    )
}

/// Integrated policy with fill-level sensors: the current content is known.
#[allow(clippy::too_many_arguments)]
pub fn isr_prizes_sensor(
    observations: &[ClusterObservation],
    rates: &[RateFunction],
    clusters: &[Cluster],
    estimates: &[VolumeEstimate],
    now: Seconds,
    next_plan: Seconds,
    epsilon: f64,
    rho_km: f64,
) -> Result<Vec<Prize>, PolicyError> {
    isr_common(
        observations,
        rates,
        clusters,
        estimates,
        now,
        next_plan,
        epsilon,
        rho_km,
        true,
    )
}

#[allow(clippy::too_many_arguments)]
fn isr_common(
    observations: &[ClusterObservation],
    rates: &[RateFunction],
    clusters: &[Cluster],
    estimates: &[VolumeEstimate],
    now: Seconds,
    next_plan: Seconds,
    epsilon: f64,
    rho_km: f64,
    sensor: bool,
) -> Result<Vec<Prize>, PolicyError> {
    check_len("observations", clusters.len(), observations.len())?;
    check_len("rates", clusters.len(), rates.len())?;
    check_len("estimates", clusters.len(), estimates.len())?;
    check_isr(epsilon, rho_km)?;
    clusters
        .iter()
        .enumerate()
        .map(|(c, cluster)| {
            let l = expected_arrivals(&rates[c], now, next_plan)?;
            let est = estimates[c];
            let obs = &observations[c];
            let p = if sensor {
                let measured = obs.measured_volume.unwrap_or(0.0);
                overflow_probability_sensor(measured, l, est.mu, est.sigma, cluster.capacity)
            } else {
                overflow_probability(obs.deposits, l, est.mu, est.sigma, cluster.capacity)
            };
            Ok(prize_for(p, epsilon, rho_km))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HOUR;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cluster(id: usize, capacity: f64) -> Cluster {
        Cluster {
            id,
            num_containers: 1,
            capacity,
            correction_factor: 1.0,
            location: id + 1,
            earliest_service: 0,
            latest_service: DAY,
        }
    }

    fn obs(deposits: u64) -> ClusterObservation {
        ClusterObservation {
            deposits,
            last_service: 0,
            measured_volume: None,
        }
    }

    /// Scalar reference: normal CDF from the error function.
    fn reference_tail(z: f64) -> f64 {
        1.0 - 0.5 * (1.0 + libm::erf(z / 2f64.sqrt()))
    }

    #[test]
    fn overflow_probability_examples() {
        assert!((overflow_probability(100, 20.0, 30.0, 12.0, 3600.0) - 0.5).abs() < 1e-12);
        assert_eq!(overflow_probability(0, 0.0, 30.0, 12.0, 100.0), 0.0);
        assert_eq!(overflow_probability(10, 0.0, 30.0, 0.0, 299.0), 1.0);
        assert_eq!(overflow_probability(10, 0.0, 30.0, 0.0, 300.0), 0.0);
        let p = overflow_probability(100, 20.0, 30.0, 12.0, 4000.0);
        let z = (4000.0 - 120.0 * 30.0) / (120.0 * 144.0 + 20.0 * 900.0f64).sqrt();
        assert!((p - reference_tail(z)).abs() < 1e-12);
        assert!((p - 0.0166).abs() < 5e-4);
    }

    #[test]
    fn sensor_probability_examples() {
        let plain = overflow_probability(0, 15.0, 30.0, 20.0, 4000.0);
        let sensor = overflow_probability_sensor(0.0, 15.0, 30.0, 20.0, 4000.0);
        assert_eq!(plain, sensor);
        assert!(overflow_probability_sensor(4000.0, 0.5, 30.0, 20.0, 4000.0) >= 0.5);
        assert_eq!(overflow_probability_sensor(4001.0, 0.0, 30.0, 20.0, 4000.0), 1.0);
    }

    #[test]
    fn prize_rules() {
        assert_eq!(prize_for(0.5, 0.0, 100.0), Prize::Optional(50_000));
        assert_eq!(prize_for(1.0, 0.1, 100.0), Prize::Required);
        assert_eq!(prize_for(1.0, 0.0, 100.0), Prize::Optional(100_000));
        assert_eq!(prize_for(0.85, 0.1, 100.0), Prize::Optional(85_000));
        assert_eq!(prize_for(0.9, 0.1, 100.0), Prize::Required);
    }

    #[test]
    fn log_likelihood_examples() {
        assert_eq!(log_likelihood(30.0, 10.0, 4000.0, &[]), 0.0);
        // d * mu = V puts the overflow probability at one half.
        let half = [ServiceObservation {
            deposits: 100,
            overflow: true,
        }];
        assert!((log_likelihood(40.0, 10.0, 4000.0, &half) - 0.5f64.ln()).abs() < 1e-12);

        let sample = [(120, true), (90, false), (150, true)]
            .map(|(deposits, overflow)| ServiceObservation { deposits, overflow });
        let (mu, sigma, v) = (31.0, 17.0, 4000.0);
        let mut expected = 0.0;
        for o in &sample {
            let d = o.deposits as f64;
            let p = reference_tail((v - d * mu) / (d.sqrt() * sigma)).clamp(1e-12, 1.0 - 1e-12);
            expected += if o.overflow { p.ln() } else { (1.0 - p).ln() };
        }
        assert!((log_likelihood(mu, sigma, v, &sample) - expected).abs() < 1e-9);
    }

    fn constant_volume_sample(seed: u64, m: usize) -> Vec<ServiceObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                let d: u64 = rng.random_range(90..=180);
                ServiceObservation {
                    deposits: d,
                    overflow: 30.0 * d as f64 > 4000.0,
                }
            })
            .collect()
    }

    #[test]
    fn estimator_recovers_constant_volume() {
        for seed in 0..5 {
            let sample = constant_volume_sample(seed, 200);
            let est = estimate_volume(&sample, 4000.0, EstimatorMode::Conservative).unwrap();
            assert!((25.0..=36.0).contains(&est.mu), "seed {seed}: {}", est.mu);
            assert!(est.boundary.is_none());
            assert!(est.sigma * est.sigma <= est.mu * (100.0 - est.mu) + 1e-9);

            let grid_best = (1..=200)
                .map(|k| k as f64 * 0.5)
                .map(|mu| log_likelihood(mu, conservative_sigma(mu), 4000.0, &sample))
                .fold(f64::NEG_INFINITY, f64::max);
            let found = log_likelihood(est.mu, est.sigma, 4000.0, &sample);
            assert!(found >= grid_best - 1e-6);
        }
    }

    #[test]
    fn unconstrained_estimate_is_no_worse() {
        let sample = constant_volume_sample(9, 200);
        let cons = estimate_volume(&sample, 4000.0, EstimatorMode::Conservative).unwrap();
        let free = estimate_volume(&sample, 4000.0, EstimatorMode::Unconstrained).unwrap();
        assert!(
            log_likelihood(free.mu, free.sigma, 4000.0, &sample)
                >= log_likelihood(cons.mu, cons.sigma, 4000.0, &sample)
        );
        assert!(free.sigma <= conservative_sigma(free.mu) + 1e-9);
    }

    #[test]
    fn degenerate_samples_are_flagged() {
        let never: Vec<_> = (0..20)
            .map(|d| ServiceObservation {
                deposits: 50 + d,
                overflow: false,
            })
            .collect();
        let est = estimate_volume(&never, 4000.0, EstimatorMode::Conservative).unwrap();
        assert_eq!(est.boundary, Some(Boundary::Lower));
        let always: Vec<_> = never
            .iter()
            .map(|o| ServiceObservation { overflow: true, ..*o })
            .collect();
        let est = estimate_volume(&always, 4000.0, EstimatorMode::Conservative).unwrap();
        assert_eq!(est.boundary, Some(Boundary::Upper));
        assert!(estimate_volume(&[], 4000.0, EstimatorMode::Conservative).is_err());
    }

    #[test]
    fn duplicated_sample_gives_same_estimate() {
        let sample = constant_volume_sample(4, 60);
        let doubled: Vec<_> = sample.iter().chain(&sample).copied().collect();
        let a = estimate_volume(&sample, 4000.0, EstimatorMode::Conservative).unwrap();
        let b = estimate_volume(&doubled, 4000.0, EstimatorMode::Conservative).unwrap();
        assert!((a.mu - b.mu).abs() < 1e-3);
    }

    #[test]
    fn estimate_book_falls_back() {
        let prior = default_prior();
        let mut book = EstimateBook::new(vec![4000.0, 4000.0], prior, 10, EstimatorMode::Conservative);
        assert_eq!(book.estimates(), vec![prior, prior]);
        for o in constant_volume_sample(1, 12) {
            book.record(0, o);
        }
        let est = book.estimates();
        assert!(est[0].boundary.is_none() && est[0] != prior);
        // Cluster 1 has no history of its own and uses the pooled estimate.
        assert_eq!(est[1], est[0]);
        book.record(
            1,
            ServiceObservation {
                deposits: 100,
                overflow: false,
            },
        );
        let est = book.estimates();
        assert_ne!(est[1], prior);
    }

    #[test]
    fn baseline_examples() {
        let rate = RateFunction::constant(10.0 / 24.0).unwrap();
        let c = Cluster {
            capacity: 20.0 * BASELINE_DEPOSIT_LITRES,
            ..cluster(0, 0.0)
        };
        let now = 3 * DAY + 5 * HOUR;
        let full = time_till_full(&rate, now, c.capacity / BASELINE_DEPOSIT_LITRES);
        assert_eq!(full, now + 2 * DAY);
        assert_eq!(
            time_till_full(&RateFunction::zero(), now, 5.0),
            now + BASELINE_LOOKAHEAD
        );
        assert_eq!(time_till_full(&rate, now, 0.0), now);

        let clusters: Vec<_> = (0..300).map(|i| cluster(i, 4000.0 + i as f64)).collect();
        let rates = vec![rate.clone(); 300];
        let observations = vec![obs(3); 300];
        let prizes = baseline_prizes(&observations, &rates, &clusters, now, 250).unwrap();
        assert_eq!(prizes.iter().filter(|p| p.is_required()).count(), 250);
        assert!(prizes[..250].iter().all(|p| p.is_required()));
        let prizes = baseline_prizes(&observations[..10], &rates[..10], &clusters[..10], now, 250).unwrap();
        assert_eq!(prizes.iter().filter(|p| p.is_required()).count(), 10);
        assert!(baseline_prizes(&observations, &rates, &clusters, now, 0).is_err());
    }

    #[test]
    fn baseline_zero_rate_ranks_last() {
        let clusters: Vec<_> = (0..3).map(|i| cluster(i, 4000.0)).collect();
        let rates = vec![
            RateFunction::zero(),
            RateFunction::constant(1.0).unwrap(),
            RateFunction::constant(2.0).unwrap(),
        ];
        let prizes = baseline_prizes(&[obs(0); 3], &rates, &clusters, 0, 2).unwrap();
        assert_eq!(prizes, vec![Prize::Optional(0), Prize::Required, Prize::Required]);
    }

    #[test]
    fn baseline_ranks_overdue_clusters_by_excess() {
        let clusters: Vec<_> = (0..3).map(|i| cluster(i, 60.0 * BASELINE_DEPOSIT_LITRES)).collect();
        let rates = vec![RateFunction::constant(1.0).unwrap(); 3];
        let observations = [obs(61), obs(90), obs(75)];
        let prizes = baseline_prizes(&observations, &rates, &clusters, 0, 2).unwrap();
        assert_eq!(prizes, vec![Prize::Optional(0), Prize::Required, Prize::Required]);
    }

    #[test]
    fn sensor_baseline_full_cluster_is_most_urgent() {
        let clusters: Vec<_> = (0..2).map(|i| cluster(i, 4000.0)).collect();
        let rates = vec![RateFunction::constant(5.0).unwrap(); 2];
        let mut observations = vec![obs(0); 2];
        observations[1].measured_volume = Some(4000.0);
        let prizes = baseline_prizes_sensor(&observations, &rates, &clusters, 0, 1).unwrap();
        assert_eq!(prizes, vec![Prize::Optional(0), Prize::Required]);
    }

    #[test]
    fn isr_prizes_use_expected_arrivals_until_next_shift() {
        let clusters = vec![cluster(0, 3600.0)];
        let rates = vec![RateFunction::constant(20.0 / 24.0).unwrap()];
        let est = vec![VolumeEstimate {
            mu: 30.0,
            sigma: 12.0,
            boundary: None,
        }];
        let now = 7 * HOUR;
        let prizes = isr_prizes(
            &[obs(100)],
            &rates,
            &clusters,
            &est,
            now,
            next_plan_time(now),
            0.0,
            100.0,
        )
        .unwrap();
        assert_eq!(prizes, vec![Prize::Optional(50_000)]);
        assert!(isr_prizes(&[obs(100)], &rates, &clusters, &est, now, now + DAY, 1.5, 100.0).is_err());
        assert!(isr_prizes(&[obs(100)], &rates, &clusters, &est, now, now + DAY, 0.1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn overflow_probability_is_monotone(
            n in 0u64..400, l in 0.0f64..100.0, mu in 0.5f64..100.0, sigma in 0.0f64..50.0,
            v in 1.0f64..20000.0, dn in 0u64..50, dl in 0.0f64..20.0, dmu in 0.0f64..10.0, dv in 0.0f64..2000.0,
        ) {
            let p = overflow_probability(n, l, mu, sigma, v);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(overflow_probability(n + dn, l, mu, sigma, v) >= p - 1e-12);
            prop_assert!(overflow_probability(n, l + dl, mu, sigma, v) >= p - 1e-12);
            prop_assert!(overflow_probability(n, l, mu + dmu, sigma, v) >= p - 1e-12);
            prop_assert!(overflow_probability(n, l, mu, sigma, v + dv) <= p + 1e-12);
        }

        #[test]
        fn isr_prizes_are_bounded(
            deposits in proptest::collection::vec(0u64..300, 1..20),
            epsilon in 0.0f64..0.5, rho in 1.0f64..2000.0, mu in 1.0f64..99.0,
        ) {
            let k = deposits.len();
            let clusters: Vec<_> = (0..k).map(|i| cluster(i, 4000.0)).collect();
            let rates = vec![RateFunction::constant(1.0).unwrap(); k];
            let est = vec![VolumeEstimate::conservative(mu); k];
            let observations: Vec<_> = deposits.iter().map(|&d| obs(d)).collect();
            let prizes = isr_prizes(&observations, &rates, &clusters, &est, 0, DAY, epsilon, rho).unwrap();
            for (c, prize) in prizes.iter().enumerate() {
                let l = expected_arrivals(&rates[c], 0, DAY).unwrap();
                let p = overflow_probability(deposits[c], l, mu, conservative_sigma(mu), 4000.0);
                match prize {
                    Prize::Required => prop_assert!(epsilon > 0.0 && p >= 1.0 - epsilon),
                    Prize::Optional(v) => prop_assert!(*v >= 0 && *v as f64 <= rho * 1000.0 + 0.5),
                }
            }
        }

        #[test]
        fn baseline_marks_top_n(k in 1usize..60, top_n in 1usize..80, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let clusters: Vec<_> = (0..k).map(|i| cluster(i, rng.random_range(1000.0..6000.0))).collect();
            let rates: Vec<_> = (0..k).map(|_| RateFunction::constant(rng.random_range(0.0..3.0)).unwrap()).collect();
            let observations: Vec<_> = (0..k).map(|_| obs(rng.random_range(0..120))).collect();
            let prizes = baseline_prizes(&observations, &rates, &clusters, 0, top_n).unwrap();
            prop_assert_eq!(prizes.iter().filter(|p| p.is_required()).count(), top_n.min(k));
            prop_assert!(prizes.iter().all(|p| p.is_required() || *p == Prize::Optional(0)));
        }

        #[test]
        fn log_likelihood_is_permutation_invariant(seed in any::<u64>(), mu in 1.0f64..99.0, sigma in 0.1f64..40.0) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sample: Vec<_> = (0..40).map(|_| ServiceObservation { deposits: rng.random_range(1..200), overflow: rng.random_bool(0.4) }).collect();
            let mut shuffled = sample.clone();
            shuffled.shuffle(&mut rng);
            prop_assert_eq!(log_likelihood(mu, sigma, 4000.0, &sample), log_likelihood(mu, sigma, 4000.0, &shuffled));
        }

        #[test]
        fn conservative_estimate_respects_sigma_bound(seed in any::<u64>(), m in 5usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sample: Vec<_> = (0..m).map(|_| ServiceObservation { deposits: rng.random_range(1..200), overflow: rng.random_bool(0.5) }).collect();
            let est = estimate_volume(&sample, 4000.0, EstimatorMode::Conservative).unwrap();
            prop_assert!(est.mu > 0.0 && est.mu <= 100.0);
            prop_assert!(est.sigma * est.sigma <= est.mu * (100.0 - est.mu) + 1e-9);
        }
    }
}
