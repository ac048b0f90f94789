//! Experiment runner behind the `isr` binary: scenario simulation, policy
//! grid search, single solves and the benchmark harness.
//!
//! Every command writes plain CSV or text files. Outputs depend only on the
//! config and seeds (wall-clock budgets aside), and each report row carries
//! the config hash.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{ensure, Context, Result};
use isr_core::bench::{self as harness, BenchmarkInstance};
use isr_core::model::Prize;
use isr_core::sim::{log_to_csv, run_simulation, MeasureReport, PolicyConfig, SimulationOutput};
use isr_core::solver::{format_solution, SolveError};
use isr_core::{
    build_routing_instance, generate_city, solve_hgs, Budget, City, ShiftConfig, SolveOutcome, SolverParams,
};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use config::{config_hash, CitySource, ExperimentConfig, Scenario, TuneGrid, Variant};

/// Bad input: exit code 2.
#[derive(Debug, Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

/// No feasible plan exists: exit code 3.
#[derive(Debug, Error)]
#[error("infeasible: {0}")]
pub struct InfeasibleError(pub String);

/// Process exit code for an error returned by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        2
    } else if err.downcast_ref::<InfeasibleError>().is_some() {
        3
    } else {
        1
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

// ---------------------------------------------------------------- gen-city

#[derive(Clone, Debug, Serialize)]
pub struct GenCityArgs {
    pub seed: u64,
    pub clusters: usize,
    pub area_km: f64,
    pub vehicles: Option<usize>,
}

/// Writes `city.json` and `matrix.txt` into `out`.
pub fn gen_city(args: &GenCityArgs, out: &Path) -> Result<PathBuf> {
    if args.clusters == 0 || !(args.area_km > 0.0) || args.vehicles == Some(0) {
        return Err(config_error("need clusters > 0, area > 0 and a positive fleet"));
    }
    let (synthetic, matrix) = generate_city(args.seed, args.clusters, args.area_km);
    let mut shift = ShiftConfig::default();
    if let Some(v) = args.vehicles {
        shift.num_vehicles = v;
    }
    let city = synthetic.into_city(matrix, shift);
    Ok(city.save(out, "matrix.txt")?)
}

// ---------------------------------------------------------------- simulate

/// One (variant, seed) simulation.
#[derive(Clone, Debug)]
pub struct Cell {
    pub scenario: String,
    pub seed: u64,
    pub output: SimulationOutput,
}

fn city_for(city: &City, vehicles: Option<usize>) -> City {
    let mut city = city.clone();
    if let Some(v) = vehicles {
        city.shift.num_vehicles = v;
    }
    city
}

/// Runs every (variant, seed) pair on the worker pool; results come back in
/// variant-major, seed-minor order whatever the scheduling.
pub fn run_cells(config: &ExperimentConfig, city: &City, variants: &[Variant]) -> Result<Vec<Cell>> {
    let jobs: Vec<(&Variant, u64)> = variants
        .iter()
        .flat_map(|v| config.seeds.iter().map(move |&s| (v, s)))
        .collect();
    jobs.par_iter()
        .map(|&(variant, seed)| {
            log::info!("simulating {} seed {seed}", variant.id);
            let city = city_for(city, variant.vehicles);
            let output = run_simulation(&city, &variant.policy, &config.sim_config(seed))
                .with_context(|| format!("scenario {} seed {seed}", variant.id))?;
            Ok(Cell {
                scenario: variant.id.clone(),
                seed,
                output,
            })
        })
        .collect()
}

fn push_measures(out: &mut String, values: &[f64]) {
    for v in values {
        let _ = write!(out, ",{v:.4}");
    }
}

/// One row per cell followed by one mean row per scenario.
pub fn reports_csv(hash: &str, cells: &[Cell]) -> String {
    let mut out = format!(
        "config_hash,scenario,seed,{},infeasible_days\n",
        MeasureReport::FIELDS.join(",")
    );
    for c in cells {
        let _ = write!(out, "{hash},{},{}", c.scenario, c.seed);
        push_measures(&mut out, &c.output.measures.values());
        let _ = writeln!(out, ",{}", c.output.infeasible_days);
    }
    let mut groups: Vec<(&str, Vec<&Cell>)> = Vec::new();
    for c in cells {
        match groups.iter_mut().find(|(name, _)| *name == c.scenario) {
            Some((_, members)) => members.push(c),
            None => groups.push((&c.scenario, vec![c])),
        }
    }
    for (name, members) in groups {
        let reports: Vec<MeasureReport> = members.iter().map(|c| c.output.measures.clone()).collect();
        let infeasible = members.iter().map(|c| c.output.infeasible_days as f64).sum::<f64>() / members.len() as f64;
        let _ = write!(out, "{hash},{name},mean");
        push_measures(&mut out, &MeasureReport::mean(&reports));
        let _ = writeln!(out, ",{infeasible:.4}");
    }
    out
}

fn config_base(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write_logs(out: &Path, cells: &[Cell]) -> Result<()> {
    for c in cells {
        let path = out.join("logs").join(format!("{}_seed{}.csv", c.scenario, c.seed));
        write_file(&path, &log_to_csv(&c.output.log))?;
    }
    Ok(())
}

/// `simulate`: writes `reports.csv` (and `logs/` when asked for).
pub fn simulate(config: &ExperimentConfig, base: &Path, out: &Path) -> Result<Vec<Cell>> {
    if config.scenarios.is_empty() {
        return Err(config_error("simulate needs at least one scenario"));
    }
    let city = config.city.load(base)?;
    let cells = run_cells(config, &city, &config.variants())?;
    write_file(&out.join("reports.csv"), &reports_csv(&config.hash(), &cells))?;
    if config.write_logs {
        write_logs(out, &cells)?;
    }
    Ok(cells)
}

/// `simulate` from a config file.
pub fn simulate_file(config_path: &Path, out: &Path) -> Result<Vec<Cell>> {
    let config = ExperimentConfig::load(config_path)?;
    simulate(&config, &config_base(config_path), out)
}

// ---------------------------------------------------------------- tune

/// Mean measures of one grid cell over the configured seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct TuneCell {
    pub epsilon: f64,
    pub rho_km: f64,
    pub measures: [f64; 8],
}

/// Rows are epsilon values, columns rho values.
pub fn heatmap_csv(grid: &TuneGrid, cells: &[TuneCell], field: usize) -> String {
    let mut out = String::from("epsilon\\rho_km");
    for r in &grid.rho_km {
        let _ = write!(out, ",{r}");
    }
    out.push('\n');
    for (i, e) in grid.epsilon.iter().enumerate() {
        let _ = write!(out, "{e}");
        for j in 0..grid.rho_km.len() {
            let _ = write!(out, ",{:.4}", cells[i * grid.rho_km.len() + j].measures[field]);
        }
        out.push('\n');
    }
    out
}

pub const DISTANCE_FIELD: usize = 0;
pub const SERVICE_LEVEL_FIELD: usize = 4;

/// `tune`: one integrated-policy scenario per (epsilon, rho) pair. Writes
/// `tune_cells.csv` plus distance and service-level heatmaps.
pub fn tune(config: &ExperimentConfig, base: &Path, out: &Path) -> Result<Vec<TuneCell>> {
    let grid = &config.tune;
    if grid.epsilon.is_empty() || grid.rho_km.is_empty() {
        return Err(config_error("tune needs non-empty epsilon and rho grids"));
    }
    if grid.vehicles == Some(0) {
        return Err(config_error("fleet sizes must be positive"));
    }
    for &e in &grid.epsilon {
        for &r in &grid.rho_km {
            config::check_isr(e, r)?;
        }
    }
    let city = config.city.load(base)?;
    let variants: Vec<Variant> = grid
        .epsilon
        .iter()
        .flat_map(|&e| grid.rho_km.iter().map(move |&r| (e, r)))
        .enumerate()
        .map(|(k, (e, r))| Variant {
            id: format!("cell{k}"),
            policy: PolicyConfig::isr(e, r).with_sensor(grid.sensor),
            vehicles: grid.vehicles,
        })
        .collect();
    let runs = run_cells(config, &city, &variants)?;

    let hash = config.hash();
    let mut long = format!("config_hash,epsilon,rho_km,seed,{}\n", MeasureReport::FIELDS.join(","));
    let mut cells = Vec::new();
    let per_cell = config.seeds.len();
    for (k, chunk) in runs.chunks(per_cell).enumerate() {
        let (e, r) = (grid.epsilon[k / grid.rho_km.len()], grid.rho_km[k % grid.rho_km.len()]);
        for c in chunk {
            let _ = write!(long, "{hash},{e},{r},{}", c.seed);
            push_measures(&mut long, &c.output.measures.values());
            long.push('\n');
        }
        let reports: Vec<MeasureReport> = chunk.iter().map(|c| c.output.measures.clone()).collect();
        cells.push(TuneCell {
            epsilon: e,
            rho_km: r,
            measures: MeasureReport::mean(&reports),
        });
    }
    write_file(&out.join("tune_cells.csv"), &long)?;
    write_file(
        &out.join("heatmap_distance.csv"),
        &heatmap_csv(grid, &cells, DISTANCE_FIELD),
    )?;
    write_file(
        &out.join("heatmap_service_level.csv"),
        &heatmap_csv(grid, &cells, SERVICE_LEVEL_FIELD),
    )?;
    Ok(cells)
}

pub fn tune_file(config_path: &Path, out: &Path) -> Result<Vec<TuneCell>> {
    let config = ExperimentConfig::load(config_path)?;
    tune(&config, &config_base(config_path), out)
}

// ---------------------------------------------------------------- solve

/// Reads a benchmark instance and attaches prizes (`None` keeps every
/// client required).
pub fn load_benchmark(path: &Path, prize_seed: Option<u64>) -> Result<BenchmarkInstance> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let inst = harness::parse_solomon(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    Ok(match prize_seed {
        Some(seed) => harness::generate_prizes(&inst, seed),
        None => inst,
    })
}

/// Prizes per cluster from `cluster,prize` lines; `required` marks a
/// mandatory cluster and unlisted clusters are required.
pub fn parse_prizes(text: &str, num_clusters: usize) -> Result<Vec<Prize>> {
    let mut prizes = vec![Prize::Required; num_clusters];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("cluster")) {
            continue;
        }
        let bad = || config_error(format!("prizes line {}: expected `cluster,prize`", i + 1));
        let (c, p) = line.split_once(',').ok_or_else(bad)?;
        let c: usize = c.trim().parse().map_err(|_| bad())?;
        if c >= num_clusters {
            return Err(config_error(format!("prizes line {}: no cluster {c}", i + 1)));
        }
        prizes[c] = match p.trim() {
            "required" => Prize::Required,
            v => Prize::Optional(v.parse().ok().filter(|&v: &i64| v >= 0).ok_or_else(bad)?),
        };
    }
    Ok(prizes)
}

pub enum SolveInput<'a> {
    Benchmark { path: &'a Path, prize_seed: Option<u64> },
    City { path: &'a Path, prizes: Option<&'a Path> },
}

/// `solve`: one routing problem, rendered as text. Infeasibility is an
/// [`InfeasibleError`].
pub fn solve(input: SolveInput<'_>, params: &SolverParams) -> Result<(SolveOutcome, String)> {
    let inst = match input {
        SolveInput::Benchmark { path, prize_seed } => harness::to_routing_instance(&load_benchmark(path, prize_seed)?)?,
        SolveInput::City { path, prizes } => {
            let city = City::load(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            let prizes = match prizes {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                    parse_prizes(&text, city.clusters.len())?
                }
                None => vec![Prize::Required; city.clusters.len()],
            };
            build_routing_instance(&city.clusters, &city.shift, &city.matrix, city.depot_location, &prizes)?
        }
    };
    let outcome = match solve_hgs(&inst, params) {
        Ok(o) => o,
        Err(SolveError::Infeasible(clusters)) => {
            return Err(InfeasibleError(format!("required clusters {clusters:?} cannot be served")).into())
        }
    };
    if !outcome.is_feasible() {
        return Err(InfeasibleError("no feasible solution found within the budget".into()).into());
    }
    let text = format_solution(&inst, &outcome.solution);
    Ok((outcome, text))
}

// ---------------------------------------------------------------- bench

#[derive(Clone, Debug, Serialize)]
pub struct BenchArgs {
    pub instances: Vec<PathBuf>,
    pub bks: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub prize_seed: u64,
    pub budget: Budget,
    pub solver: SolverParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub instance: String,
    pub group: Option<&'static str>,
    pub seed: u64,
    pub initial_cost: Option<f64>,
    pub cost: f64,
    pub bks: Option<f64>,
    pub gap: Option<f64>,
}

pub fn budget_label(budget: &Budget) -> String {
    match budget {
        Budget::Iterations(n) => format!("{n}it"),
        Budget::Time(d) => format!("{}s", d.as_secs_f64()),
    }
}

pub fn bench_csv(hash: &str, budget: &Budget, rows: &[BenchRow]) -> String {
    let opt = |v: Option<f64>, scale: f64| v.map(|v| format!("{:.4}", v * scale)).unwrap_or_default();
    let mut out = String::from("config_hash,instance,group,seed,budget,initial_cost,cost,bks,gap_pct\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{hash},{},{},{},{},{},{:.1},{},{}",
            r.instance,
            r.group.unwrap_or(""),
            r.seed,
            budget_label(budget),
            opt(r.initial_cost, 1.0),
            r.cost,
            opt(r.bks, 1.0),
            opt(r.gap, 100.0),
        );
    }
    out
}

pub fn bench_groups_csv(hash: &str, rows: &[BenchRow]) -> String {
    let gaps: Vec<(String, f64)> = rows
        .iter()
        .filter_map(|r| r.gap.map(|g| (r.instance.clone(), g)))
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (name, _) in &gaps {
        if let Some(g) = harness::group_of(name) {
            *counts.entry(g).or_default() += 1;
        }
    }
    let mut out = String::from("config_hash,group,runs,mean_gap_pct\n");
    for (group, mean) in harness::group_means(&gaps) {
        let _ = writeln!(out, "{hash},{group},{},{:.4}", counts[group], mean * 100.0);
    }
    out
}

/// `bench`: every instance with every seed. Writes `bench.csv` and
/// `bench_groups.csv`.
pub fn bench(args: &BenchArgs, out: &Path) -> Result<Vec<BenchRow>> {
    if args.instances.is_empty() || args.seeds.is_empty() {
        return Err(config_error("bench needs at least one instance and one seed"));
    }
    let bks = match &args.bks {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
            harness::parse_bks(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
        }
        None => BTreeMap::new(),
    };
    let instances = args
        .instances
        .iter()
        .map(|p| {
            let inst = load_benchmark(p, Some(args.prize_seed))?;
            let routing = harness::to_routing_instance(&inst)?;
            Ok((inst.name, routing))
        })
        .collect::<Result<Vec<_>>>()?;
    for (name, _) in &instances {
        if !bks.contains_key(name) {
            log::warn!("no best known solution for {name}: gap omitted");
        }
    }

    let jobs: Vec<(usize, u64)> = (0..instances.len())
        .flat_map(|i| args.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let (name, inst) = &instances[i];
            let params = SolverParams {
                budget: args.budget,
                seed,
                ..args.solver.clone()
            };
            log::info!("solving {name} seed {seed} ({})", budget_label(&args.budget));
            let outcome = solve_hgs(inst, &params).map_err(|e| InfeasibleError(format!("{name}: {e}")))?;
            if !outcome.is_feasible() {
                return Err(InfeasibleError(format!("{name}: no feasible solution within the budget")).into());
            }
            let cost = outcome.evaluation.objective();
            if let Some(initial) = outcome.initial_objective {
                ensure!(cost <= initial, "{name}: final cost {cost} above initial {initial}");
            }
            let cost = harness::unscaled(cost);
            let best = bks.get(name).copied();
            Ok(BenchRow {
                instance: name.clone(),
                group: harness::group_of(name),
                seed,
                initial_cost: outcome.initial_objective.map(harness::unscaled),
                cost,
                bks: best,
                gap: best.map(|b| harness::gap(cost, b)),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let hash = config_hash(args);
    write_file(&out.join("bench.csv"), &bench_csv(&hash, &args.budget, &rows))?;
    write_file(&out.join("bench_groups.csv"), &bench_groups_csv(&hash, &rows))?;
    Ok(rows)
}

/// Default per-instance budget for `bench`.
pub const DEFAULT_BENCH_SECONDS: u64 = 60;

pub fn default_bench_budget() -> Budget {
    Budget::Time(Duration::from_secs(DEFAULT_BENCH_SECONDS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use isr_core::sim::VolumeBalance;

    fn fake_cell(scenario: &str, seed: u64, distance: f64) -> Cell {
        Cell {
            scenario: scenario.into(),
            seed,
            output: SimulationOutput {
                measures: MeasureReport {
                    avg_daily_distance: distance,
                    service_level: 100.0,
                    ..MeasureReport::default()
                },
                log: Vec::new(),
                balance: VolumeBalance::default(),
                infeasible_days: 0,
            },
        }
    }

    #[test]
    fn two_policies_three_seeds_give_six_rows_and_two_means() {
        let cells: Vec<Cell> = ["base", "isr"]
            .iter()
            .flat_map(|s| (0..3).map(move |k| fake_cell(s, k, 10.0 + k as f64)))
            .collect();
        let csv = reports_csv("abc", &cells);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 6 + 2);
        assert!(lines[7].starts_with("abc,base,mean,11.0000,"));
        assert!(lines[8].starts_with("abc,isr,mean,"));
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    }

    #[test]
    fn heatmap_layout() {
        let grid = TuneGrid {
            epsilon: vec![0.0, 0.05],
            rho_km: vec![1.0, 4.0, 16.0],
            ..TuneGrid::default()
        };
        let cells: Vec<TuneCell> = (0..6)
            .map(|k| TuneCell {
                epsilon: grid.epsilon[k / 3],
                rho_km: grid.rho_km[k % 3],
                measures: [k as f64; 8],
            })
            .collect();
        let csv = heatmap_csv(&grid, &cells, DISTANCE_FIELD);
        assert_eq!(
            csv,
            "epsilon\\rho_km,1,4,16\n0,0.0000,1.0000,2.0000\n0.05,3.0000,4.0000,5.0000\n"
        );
    }

    #[test]
    fn prize_files() {
        let p = parse_prizes("cluster,prize\n0,1500\n2,required\n", 3).unwrap();
        assert_eq!(p, vec![Prize::Optional(1500), Prize::Required, Prize::Required]);
        assert!(parse_prizes("5,3\n", 3).is_err());
        assert!(parse_prizes("0,-3\n", 3).is_err());
    }

    #[test]
    fn bench_reports() {
        let rows = vec![
            BenchRow {
                instance: "C1_10_1".into(),
                group: Some("C1"),
                seed: 0,
                initial_cost: Some(120.0),
                cost: 100.0,
                bks: Some(100.0),
                gap: Some(0.0),
            },
            BenchRow {
                instance: "R2_10_1".into(),
                group: Some("R2"),
                seed: 0,
                initial_cost: None,
                cost: 80.2,
                bks: None,
                gap: None,
            },
        ];
        let csv = bench_csv("h", &Budget::Iterations(10), &rows);
        assert!(csv.contains("h,C1_10_1,C1,0,10it,120.0000,100.0,100.0000,0.0000\n"));
        assert!(csv.contains("h,R2_10_1,R2,0,10it,,80.2,,\n"));
        assert_eq!(
            bench_groups_csv("h", &rows),
            "config_hash,group,runs,mean_gap_pct\nh,C1,1,0.0000\n"
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&ConfigError("x".into()).into()), 2);
        assert_eq!(exit_code(&InfeasibleError("x".into()).into()), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("x")), 1);
        let wrapped = anyhow::Error::from(ConfigError("x".into())).context("while loading");
        assert_eq!(exit_code(&wrapped), 2);
    }
}
