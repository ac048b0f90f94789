//! Travel matrices and cities: the plain-text matrix format, the JSON city
//! file, and a Euclidean synthetic city generator.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::RateFunction;
use crate::model::{Cluster, ModelError, Seconds, ShiftConfig, DAY, HOUR};

#[derive(Debug, Error)]
pub enum TravelError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("matrix parse error: {0}")]
    Parse(String),
    #[error("invalid matrix: {0}")]
    Invalid(String),
    #[error("city file error: {0}")]
    City(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Square distance (metres) and duration (seconds) matrices over locations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TravelMatrix {
    size: usize,
    distance: Vec<i64>,
    duration: Vec<i64>,
}

impl TravelMatrix {
    pub fn from_flat(size: usize, distance: Vec<i64>, duration: Vec<i64>) -> Result<Self, TravelError> {
        if distance.len() != size * size || duration.len() != size * size {
            return Err(TravelError::Invalid(format!(
                "expected {} entries per block, got {} and {}",
                size * size,
                distance.len(),
                duration.len()
            )));
        }
        for i in 0..size {
            for j in 0..size {
                let (d, t) = (distance[i * size + j], duration[i * size + j]);
                if d < 0 || t < 0 {
                    return Err(TravelError::Invalid(format!("negative entry at ({i}, {j})")));
                }
                if i == j && (d != 0 || t != 0) {
                    return Err(TravelError::Invalid(format!("non-zero diagonal at {i}")));
                }
            }
        }
        Ok(TravelMatrix {
            size,
            distance,
            duration,
        })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    #[inline]
    pub fn distance(&self, from: usize, to: usize) -> i64 {
        self.distance[from * self.size + to]
    }

    #[inline]
    pub fn duration(&self, from: usize, to: usize) -> i64 {
        self.duration[from * self.size + to]
    }

    /// Parses `n`, then the n×n distance block, then the n×n duration block.
    pub fn parse(text: &str) -> Result<Self, TravelError> {
        let mut tokens = text.split_whitespace();
        let size: usize = tokens
            .next()
            .ok_or_else(|| TravelError::Parse("missing size header".into()))?
            .parse()
            .map_err(|e| TravelError::Parse(format!("bad size header: {e}")))?;

        let mut read_block = |name: &str| -> Result<Vec<i64>, TravelError> {
            (0..size * size)
                .map(|idx| {
                    let tok = tokens.next().ok_or_else(|| {
                        TravelError::Parse(format!("{name} block ended after {idx} of {} entries", size * size))
                    })?;
                    tok.parse::<i64>()
                        .map_err(|e| TravelError::Parse(format!("{name} entry {idx} ({tok:?}): {e}")))
                })
                .collect()
        };
        let distance = read_block("distance")?;
        let duration = read_block("duration")?;
        if tokens.next().is_some() {
            return Err(TravelError::Parse("trailing data after duration block".into()));
        }
        Self::from_flat(size, distance, duration)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.size);
        for block in [&self.distance, &self.duration] {
            for row in block.chunks(self.size.max(1)) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| {
            (0..i).all(|j| self.distance(i, j) == self.distance(j, i) && self.duration(i, j) == self.duration(j, i))
        })
    }
}

pub fn load_matrix(path: &Path) -> Result<TravelMatrix, TravelError> {
    let text = fs::read_to_string(path).map_err(|source| TravelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    TravelMatrix::parse(&text)
}

pub fn write_matrix(path: &Path, matrix: &TravelMatrix) -> Result<(), TravelError> {
    fs::write(path, matrix.to_text()).map_err(|source| TravelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Urban driving speed used for synthetic durations.
pub const SYNTHETIC_SPEED_KMH: f64 = 30.0;

/// Everything the simulator needs to know about a city.
#[derive(Clone, Debug, PartialEq)]
pub struct City {
    pub clusters: Vec<Cluster>,
    pub rates: Vec<RateFunction>,
    pub depot_location: usize,
    pub matrix: TravelMatrix,
    pub shift: ShiftConfig,
    /// Planar coordinates in km (location order), when known.
    pub coordinates: Option<Vec<(f64, f64)>>,
}

impl City {
    pub fn validate(&self) -> Result<(), TravelError> {
        if self.rates.len() != self.clusters.len() {
            return Err(TravelError::City(format!(
                "{} clusters but {} rate profiles",
                self.clusters.len(),
                self.rates.len()
            )));
        }
        if self.depot_location >= self.matrix.len() {
            return Err(ModelError::LocationOutOfRange {
                location: self.depot_location,
                size: self.matrix.len(),
            }
            .into());
        }
        for (idx, cluster) in self.clusters.iter().enumerate() {
            cluster.validate()?;
            if cluster.id != idx {
                return Err(TravelError::City(format!(
                    "cluster at position {idx} has id {}",
                    cluster.id
                )));
            }
            if cluster.location >= self.matrix.len() {
                return Err(ModelError::LocationOutOfRange {
                    location: cluster.location,
                    size: self.matrix.len(),
                }
                .into());
            }
        }
        if self.rates.iter().any(|r| r.hourly().iter().any(|&v| !(v >= 0.0))) {
            return Err(TravelError::City("negative or NaN arrival rate".into()));
        }
        self.shift.validate()?;
        Ok(())
    }

    /// Writes `city.json` plus the matrix file it references into `dir`.
    pub fn save(&self, dir: &Path, matrix_name: &str) -> Result<PathBuf, TravelError> {
        fs::create_dir_all(dir).map_err(|source| TravelError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_matrix(&dir.join(matrix_name), &self.matrix)?;
        let file = CityFile {
            matrix: matrix_name.to_string(),
            depot_location: self.depot_location,
            shift: self.shift.clone(),
            clusters: self.clusters.clone(),
            rates: self.rates.clone(),
            coordinates: self.coordinates.clone(),
        };
        let path = dir.join("city.json");
        let json = serde_json::to_string_pretty(&file).map_err(|e| TravelError::City(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|source| TravelError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<City, TravelError> {
        let text = fs::read_to_string(path).map_err(|source| TravelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: CityFile =
            serde_json::from_str(&text).map_err(|e| TravelError::City(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let matrix = load_matrix(&base.join(&file.matrix))?;
        let city = City {
            clusters: file.clusters,
            rates: file.rates,
            depot_location: file.depot_location,
            matrix,
            shift: file.shift,
            coordinates: file.coordinates,
        };
        city.validate()?;
        Ok(city)
    }
}

/// On-disk form of a [`City`]; the matrix path is relative to the JSON file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CityFile {
    pub matrix: String,
    pub depot_location: usize,
    pub shift: ShiftConfig,
    pub clusters: Vec<Cluster>,
    pub rates: Vec<RateFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<(f64, f64)>>,
}

/// Output of [`generate_city`] before it is wrapped into a [`City`].
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCity {
    pub depot: (f64, f64),
    pub coordinates: Vec<(f64, f64)>,
    pub clusters: Vec<Cluster>,
    pub rates: Vec<RateFunction>,
}

impl SyntheticCity {
    pub fn into_city(self, matrix: TravelMatrix, shift: ShiftConfig) -> City {
        let mut coordinates = vec![self.depot];
        coordinates.extend(self.coordinates);
        City {
            clusters: self.clusters,
            rates: self.rates,
            depot_location: 0,
            matrix,
            shift,
            coordinates: Some(coordinates),
        }
    }
}

/// Relative deposit intensity per hour of the day: quiet nights, a daytime
/// plateau and an evening peak.
const HOURLY_SHAPE: [f64; 24] = [
    0.1, 0.05, 0.05, 0.05, 0.05, 0.1, 0.3, 0.6, 0.8, 0.9, 1.0, 1.0, //
    1.0, 1.0, 1.0, 1.1, 1.2, 1.5, 1.6, 1.5, 1.2, 0.8, 0.5, 0.2,
];

/// Mean deposit volume (litres) used to scale generated rates.
const NOMINAL_DEPOSIT_LITRES: f64 = 100.0 / 3.0;

/// Clusters closer than this fraction of the area to the centre form the
/// inner city and must be serviced before noon.
const INNER_CITY_RADIUS: f64 = 0.1;

/// Generates a random city in an `area_km`-sided square with the depot near
/// the southern edge. Location 0 is the depot, location `i + 1` is cluster
/// `i`. Distances are Euclidean metres, durations assume 30 km/h.
pub fn generate_city(seed: u64, n_clusters: usize, area_km: f64) -> (SyntheticCity, TravelMatrix) {
    assert!(n_clusters >= 1, "a city needs at least one cluster");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let depot = (area_km / 2.0, 0.05 * area_km);
    let centre = (area_km / 2.0, area_km / 2.0);
    let shape_total: f64 = HOURLY_SHAPE.iter().sum();

    let mut coordinates = Vec::with_capacity(n_clusters);
    let mut clusters = Vec::with_capacity(n_clusters);
    let mut rates = Vec::with_capacity(n_clusters);

    for id in 0..n_clusters {
        let xy = (rng.random::<f64>() * area_km, rng.random::<f64>() * area_km);
        let num_containers = match rng.random::<f64>() {
            u if u < 0.7 => 1,
            u if u < 0.95 => 2,
            _ => 3,
        };
        let capacity = [4000.0, 5000.0, 6000.0][rng.random_range(0..3)];
        let fill_days = rng.random_range(2.0..7.0);
        let inner = ((xy.0 - centre.0).powi(2) + (xy.1 - centre.1).powi(2)).sqrt() <= INNER_CITY_RADIUS * area_km;

        let daily = capacity / (NOMINAL_DEPOSIT_LITRES * fill_days);
        let mut hourly = [0.0; 24];
        for (h, rate) in hourly.iter_mut().enumerate() {
            *rate = daily * HOURLY_SHAPE[h] / shape_total;
        }

        coordinates.push(xy);
        clusters.push(Cluster {
            id,
            num_containers,
            capacity,
            correction_factor: 1.0,
            location: id + 1,
            earliest_service: 0,
            latest_service: if inner { 12 * HOUR } else { DAY },
        });
        rates.push(RateFunction::new(hourly).expect("generated rates are non-negative"));
    }

    let matrix = euclidean_matrix(depot, &coordinates);
    (
        SyntheticCity {
            depot,
            coordinates,
            clusters,
            rates,
        },
        matrix,
    )
}

/// Euclidean matrix over the depot followed by `points` (km coordinates).
pub fn euclidean_matrix(depot: (f64, f64), points: &[(f64, f64)]) -> TravelMatrix {
    let mut all = Vec::with_capacity(points.len() + 1);
    all.push(depot);
    all.extend_from_slice(points);

    let n = all.len();
    let metres_per_second = SYNTHETIC_SPEED_KMH * 1000.0 / HOUR as f64;
    let mut distance = vec![0; n * n];
    let mut duration = vec![0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let metres = 1000.0 * ((all[i].0 - all[j].0).powi(2) + (all[i].1 - all[j].1).powi(2)).sqrt();
            distance[i * n + j] = metres.round() as i64;
            duration[i * n + j] = (metres / metres_per_second).round() as Seconds;
        }
    }
    TravelMatrix::from_flat(n, distance, duration).expect("euclidean matrices are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_matrix_is_accepted() {
        let m = TravelMatrix::parse("2\n0 5\n5 0\n0 60\n60 0\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.distance(0, 1), 5);
        assert_eq!(m.duration(1, 0), 60);
    }

    #[test]
    fn negative_entry_is_rejected() {
        let err = TravelMatrix::parse("2\n0 -5\n5 0\n0 60\n60 0\n").unwrap_err();
        assert!(matches!(err, TravelError::Invalid(_)), "{err}");
    }

    #[test]
    fn short_or_garbled_files_are_rejected() {
        assert!(matches!(TravelMatrix::parse("3\n0 1 2\n"), Err(TravelError::Parse(_))));
        assert!(matches!(TravelMatrix::parse("x"), Err(TravelError::Parse(_))));
        assert!(matches!(TravelMatrix::parse("1\n0\n0\n7"), Err(TravelError::Parse(_))));
        assert!(matches!(TravelMatrix::parse("1\n3\n0\n"), Err(TravelError::Invalid(_))));
    }

    #[test]
    fn large_matrix_size_is_echoed() {
        let n = 854;
        let mut text = format!("{n}\n");
        for _ in 0..2 {
            for i in 0..n {
                let row: Vec<&str> = (0..n).map(|j| if i == j { "0" } else { "7" }).collect();
                text.push_str(&row.join(" "));
                text.push('\n');
            }
        }
        assert_eq!(TravelMatrix::parse(&text).unwrap().len(), 854);
    }

    #[test]
    fn text_format_round_trips() {
        let (_, m) = generate_city(3, 6, 4.0);
        assert_eq!(TravelMatrix::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn generation_is_deterministic_in_seed() {
        assert_eq!(generate_city(1, 10, 5.0), generate_city(1, 10, 5.0));
        assert_ne!(generate_city(1, 10, 5.0).0, generate_city(2, 10, 5.0).0);
    }

    #[test]
    fn full_scale_city_respects_geometry() {
        let (city, m) = generate_city(7, 850, 14.0);
        assert!(m.is_symmetric());
        let bound = (14_000.0 * 2f64.sqrt()).ceil() as i64;
        for i in 0..m.len() {
            for j in 0..m.len() {
                assert!(m.distance(i, j) <= bound);
            }
        }
        for c in &city.clusters {
            assert!([4000.0, 5000.0, 6000.0].contains(&c.capacity));
        }
    }

    #[test]
    fn generated_cities_fill_within_a_week() {
        let (city, _) = generate_city(11, 200, 8.0);
        for (c, rate) in city.clusters.iter().zip(&city.rates) {
            let per_day: f64 = rate.hourly().iter().sum();
            let days = c.capacity / (per_day * NOMINAL_DEPOSIT_LITRES);
            assert!((2.0..=7.0).contains(&days), "fills in {days} days");
        }
    }

    #[test]
    fn synthetic_matrices_satisfy_triangle_inequality() {
        let (_, m) = generate_city(5, 25, 6.0);
        for i in 0..m.len() {
            for j in 0..m.len() {
                for k in 0..m.len() {
                    // one metre slack for rounding
                    assert!(m.distance(i, k) <= m.distance(i, j) + m.distance(j, k) + 1);
                }
            }
        }
    }

    #[test]
    fn city_file_round_trips() {
        let dir = std::env::temp_dir().join(format!("isr-city-{}", std::process::id()));
        let (synthetic, matrix) = generate_city(2, 5, 3.0);
        let city = synthetic.into_city(matrix, ShiftConfig::default());
        let path = city.save(&dir, "matrix.txt").unwrap();
        let loaded = City::load(&path).unwrap();
        assert_eq!(loaded, city);
        fs::remove_dir_all(&dir).ok();
    }
}
