//! Deposit arrivals: hourly non-homogeneous Poisson rates, deposit volume
//! distributions, and rate estimation from deposit logs.

use rand::Rng;
use rand_distr::{Distribution, Poisson, Triangular, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Seconds, DAY, HOUR};

#[derive(Debug, Error, PartialEq)]
pub enum DemandError {
    #[error("interval start {start} is after its end {end}")]
    ReversedInterval { start: Seconds, end: Seconds },
    #[error("arrival rates must be finite and non-negative")]
    NegativeRate,
    #[error("invalid volume distribution: {0}")]
    InvalidVolume(String),
    #[error("deposit log must span at least one full day")]
    ShortLog,
    #[error("deposit log line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Piecewise-constant arrival rate (deposits per hour) for each hour of the
/// day, repeating every day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 24]", into = "[f64; 24]")]
pub struct RateFunction {
    hourly: [f64; 24],
}

impl TryFrom<[f64; 24]> for RateFunction {
    type Error = DemandError;

    fn try_from(hourly: [f64; 24]) -> Result<Self, Self::Error> {
        RateFunction::new(hourly)
    }
}

impl From<RateFunction> for [f64; 24] {
    fn from(rate: RateFunction) -> Self {
        rate.hourly
    }
}

fn hour_of_day(t: Seconds) -> usize {
    (t.div_euclid(HOUR)).rem_euclid(24) as usize
}

impl RateFunction {
    pub fn new(hourly: [f64; 24]) -> Result<Self, DemandError> {
        if hourly.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(DemandError::NegativeRate);
        }
        Ok(RateFunction { hourly })
    }

    pub fn constant(per_hour: f64) -> Result<Self, DemandError> {
        Self::new([per_hour; 24])
    }

    pub fn zero() -> Self {
        RateFunction { hourly: [0.0; 24] }
    }

    pub fn hourly(&self) -> &[f64; 24] {
        &self.hourly
    }

    pub fn per_day(&self) -> f64 {
        self.hourly.iter().sum()
    }

    /// Expected deposits in `[0, t)` (negative `t` counts backwards).
    fn cumulative(&self, t: Seconds) -> f64 {
        let days = t.div_euclid(DAY);
        let within = t.rem_euclid(DAY);
        let hour = (within / HOUR) as usize;
        let partial = (within % HOUR) as f64 / HOUR as f64;
        let mut total = days as f64 * self.per_day();
        total += self.hourly[..hour].iter().sum::<f64>();
        total + self.hourly[hour] * partial
    }

    /// Latest time `t >= from` (capped at `cap`) with at most `budget`
    /// expected deposits in `[from, t]`.
    pub fn time_until(&self, from: Seconds, budget: f64, cap: Seconds) -> Seconds {
        if budget < 0.0 {
            return from;
        }
        let mut t = from;
        let mut used = 0.0;
        while t < cap {
            let piece_end = ((t.div_euclid(HOUR) + 1) * HOUR).min(cap);
            let rate = self.hourly[hour_of_day(t)];
            let piece = rate * (piece_end - t) as f64 / HOUR as f64;
            // small slack so exact hits on a piece boundary are not lost to rounding
            if used + piece > budget + 1e-9 * budget.max(1.0) {
                let secs = ((budget - used) / rate * HOUR as f64).clamp(0.0, (piece_end - t) as f64);
                return t + secs.round() as Seconds;
            }
            used += piece;
            t = piece_end;
        }
        cap
    }
}

/// Expected number of deposits in `[a, b]`: the exact integral of the
/// hourly rate.
pub fn expected_arrivals(rate: &RateFunction, a: Seconds, b: Seconds) -> Result<f64, DemandError> {
    if a > b {
        return Err(DemandError::ReversedInterval { start: a, end: b });
    }
    if a == b {
        return Ok(0.0);
    }
    Ok(rate.cumulative(b) - rate.cumulative(a))
}

/// Samples deposit times in `[start, end)`. Each hourly piece gets a
/// Poisson number of arrivals placed uniformly (to the second) within it.
pub fn sample_arrivals<R: Rng + ?Sized>(
    rate: &RateFunction,
    start: Seconds,
    end: Seconds,
    rng: &mut R,
) -> Vec<Seconds> {
    let mut times = Vec::new();
    let mut t = start;
    while t < end {
        let piece_end = ((t.div_euclid(HOUR) + 1) * HOUR).min(end);
        let len = piece_end - t;
        let mean = rate.hourly[hour_of_day(t)] * len as f64 / HOUR as f64;
        if mean > 0.0 {
            let count = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
            let first = times.len();
            for _ in 0..count {
                times.push(t + rng.random_range(0..len));
            }
            times[first..].sort_unstable();
        }
        t = piece_end;
    }
    times
}

/// Distribution of the (unobserved) volume of a single deposit, in litres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeDistribution {
    Triangular { min: f64, mode: f64, max: f64 },
    Uniform { min: f64, max: f64 },
    Constant(f64),
}

/// Physical upper bound on a single deposit (the drum size).
pub const MAX_DEPOSIT_LITRES: f64 = 100.0;

impl Default for VolumeDistribution {
    fn default() -> Self {
        VolumeDistribution::Triangular {
            min: 10.0,
            mode: 30.0,
            max: 60.0,
        }
    }
}

impl VolumeDistribution {
    pub fn validate(&self) -> Result<(), DemandError> {
        let in_support = |v: f64| (0.0..=MAX_DEPOSIT_LITRES).contains(&v);
        let ok = match *self {
            VolumeDistribution::Triangular { min, mode, max } => {
                in_support(min) && in_support(max) && min <= mode && mode <= max && min < max
            }
            VolumeDistribution::Uniform { min, max } => in_support(min) && in_support(max) && min < max,
            VolumeDistribution::Constant(v) => in_support(v),
        };
        if ok {
            Ok(())
        } else {
            Err(DemandError::InvalidVolume(format!("{self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            VolumeDistribution::Triangular { min, mode, max } => (min + mode + max) / 3.0,
            VolumeDistribution::Uniform { min, max } => (min + max) / 2.0,
            VolumeDistribution::Constant(v) => v,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            VolumeDistribution::Triangular { min, mode, max } => Triangular::new(min, max, mode)
                .expect("validated triangular distribution")
                .sample(rng),
            VolumeDistribution::Uniform { min, max } => Uniform::new(min, max)
                .expect("validated uniform distribution")
                .sample(rng),
            VolumeDistribution::Constant(v) => v,
        }
    }
}

/// Registered deposits (timestamp in seconds, cluster id) over a window.
/// Volumes are never part of a log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DepositLog {
    pub start: Seconds,
    pub end: Seconds,
    pub deposits: Vec<(Seconds, usize)>,
}

impl DepositLog {
    /// Parses `timestamp,cluster_id` rows (an optional header is skipped).
    /// The observation window is widened to whole days around the data.
    pub fn from_csv(text: &str) -> Result<Self, DemandError> {
        let mut deposits = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (idx == 0 && line.starts_with("timestamp")) {
                continue;
            }
            let mut fields = line.split(',');
            let parse = |field: Option<&str>, what: &str| -> Result<i64, DemandError> {
                field
                    .ok_or_else(|| DemandError::Parse {
                        line: idx + 1,
                        reason: format!("missing {what}"),
                    })?
                    .trim()
                    .parse()
                    .map_err(|e| DemandError::Parse {
                        line: idx + 1,
                        reason: format!("bad {what}: {e}"),
                    })
            };
            let t = parse(fields.next(), "timestamp")?;
            let cluster = parse(fields.next(), "cluster_id")?;
            if cluster < 0 {
                return Err(DemandError::Parse {
                    line: idx + 1,
                    reason: "negative cluster id".into(),
                });
            }
            deposits.push((t, cluster as usize));
        }
        let start = deposits.iter().map(|d| d.0).min().unwrap_or(0).div_euclid(DAY) * DAY;
        let end = deposits
            .iter()
            .map(|d| (d.0.div_euclid(DAY) + 1) * DAY)
            .max()
            .unwrap_or(DAY);
        Ok(DepositLog { start, end, deposits })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,cluster_id\n");
        for (t, c) in &self.deposits {
            out.push_str(&format!("{t},{c}\n"));
        }
        out
    }
}

/// Estimates hourly rates per cluster: deposits seen in hour-of-day `h`
/// divided by the number of `h`-hours observed.
pub fn estimate_rates(log: &DepositLog, num_clusters: usize) -> Result<Vec<RateFunction>, DemandError> {
    if log.end - log.start < DAY {
        return Err(DemandError::ShortLog);
    }
    if log.deposits.is_empty() {
        log::warn!("empty deposit log: all estimated rates are zero");
        return Ok(vec![RateFunction::zero(); num_clusters]);
    }

    let mut observed = [0.0f64; 24];
    let mut t = log.start;
    while t < log.end {
        let piece_end = ((t.div_euclid(HOUR) + 1) * HOUR).min(log.end);
        observed[hour_of_day(t)] += (piece_end - t) as f64 / HOUR as f64;
        t = piece_end;
    }

    let mut counts = vec![[0u64; 24]; num_clusters];
    for &(ts, cluster) in &log.deposits {
        if ts < log.start || ts >= log.end || cluster >= num_clusters {
            continue;
        }
        counts[cluster][hour_of_day(ts)] += 1;
    }

    Ok(counts
        .into_iter()
        .map(|row| {
            let mut hourly = [0.0; 24];
            for h in 0..24 {
                if observed[h] > 0.0 {
                    hourly[h] = row[h] as f64 / observed[h];
                }
            }
            RateFunction { hourly }
        })
        .collect())
}
