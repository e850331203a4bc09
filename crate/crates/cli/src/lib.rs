//! Batch experiment driver: solve, simulate, compare policies and run the
//! sensitivity sweeps. Every artifact is a CSV (plus the binary value table)
//! written atomically under the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pdmp_maint::model::grid_w;
use pdmp_maint::persist::{load_table, save_table, write_atomic};
use pdmp_maint::sim::{EventKind, Simulator};
use pdmp_maint::{
    extract_policy, monte_carlo, solve, threshold_sweep, Action, ActionTable, Config, Policy, SimOptions,
    SolveOptions, SolveReport, State, Table,
};

/// Artifact format version written into every header.
pub const ARTIFACT_VERSION: &str = concat!("pdmp-maint ", env!("CARGO_PKG_VERSION"), " artifacts v1");
/// Default output directory when `--out` is not given.
pub const OUT_ENV: &str = "PDMP_MAINT_OUT";

pub const TABLE_FILE: &str = "value_table.bin";
pub const POLICY_FILE: &str = "policy.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const VALUES_FILE: &str = "values.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Simulate,
    Compare,
    SweepThreshold,
    SweepRho,
    SweepInspection,
    SweepCost,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Simulate => "simulate",
            Self::Compare => "compare",
            Self::SweepThreshold => "sweep-threshold",
            Self::SweepRho => "sweep-rho",
            Self::SweepInspection => "sweep-inspection",
            Self::SweepCost => "sweep-cost",
        }
    }
}

/// Which policy `simulate` runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyChoice {
    Imm,
    Cmm,
    Tmm { xi1: f64, xi2: f64 },
}

/// Which cost `sweep-cost` varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// Fixed part c1 of the imperfect repair cost.
    C1,
    /// Replacement cost C2 (with C3 raised to 40).
    C2,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out: PathBuf,
    pub seed: u64,
    pub n_paths: usize,
    pub workers: Option<usize>,
    pub coarse: bool,
    /// Explicit sweep points; empty means the command's defaults.
    pub values: Vec<f64>,
    pub policy: PolicyChoice,
    pub tmm: (f64, f64),
    pub threshold_step: f64,
    pub cost: CostKind,
    /// `simulate`: number of leading paths whose event logs are written.
    pub log_paths: usize,
}

impl ExperimentSpec {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            config: None,
            overrides: Vec::new(),
            out: out.into(),
            seed: 2024,
            n_paths: 2000,
            workers: None,
            coarse: false,
            values: Vec::new(),
            policy: PolicyChoice::Imm,
            tmm: (2.0, 4.0),
            threshold_step: 0.1,
            cost: CostKind::C1,
            log_paths: 1,
        }
    }

    /// Base config: file (or defaults), then overrides, then `--coarse`.
    /// Overrides are validated before anything runs.
    pub fn model_config(&self) -> Result<Config> {
        let base = match &self.config {
            Some(p) => Config::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => Config::default(),
        };
        let cfg = base.with_overrides(&self.overrides)?;
        Ok(if self.coarse { cfg.coarse() } else { cfg })
    }
}

/// Output directory from `--out`, else the environment, else `./out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs `spec` on a pool of `spec.workers` threads and returns the files written.
pub fn run(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    let cfg = spec.model_config()?;
    std::fs::create_dir_all(&spec.out).with_context(|| format!("creating {}", spec.out.display()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = spec.workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build()?;
    pool.install(|| match spec.command {
        Command::Solve => run_solve(spec, &cfg).map(|o| o.files),
        Command::Simulate => run_simulate(spec, &cfg),
        Command::Compare => run_compare(spec, &cfg),
        Command::SweepThreshold => run_sweep_threshold(spec, &cfg),
        Command::SweepRho => run_sweep_rho(spec, &cfg),
        Command::SweepInspection => run_sweep_inspection(spec, &cfg),
        Command::SweepCost => run_sweep_cost(spec, &cfg),
    })
}

fn header(spec: &ExperimentSpec, cfg: &Config, extra: &[String]) -> String {
    let mut h = String::new();
    writeln!(h, "# {ARTIFACT_VERSION}").unwrap();
    writeln!(h, "# command: {}", spec.command.as_str()).unwrap();
    writeln!(h, "# config-fingerprint: {}", cfg.fingerprint_hex()).unwrap();
    writeln!(h, "# seed: {}", spec.seed).unwrap();
    for line in extra {
        writeln!(h, "# {line}").unwrap();
    }
    h
}

fn write_csv(path: &Path, head: String, body: String) -> Result<PathBuf> {
    write_atomic(path, (head + &body).as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

/// Shortest round-trip text for a float, so reruns print identical bytes.
fn num(x: f64) -> String {
    format!("{x}")
}

fn action_code(a: Action) -> u8 {
    a as u8
}

fn policy_table(policy: &Policy<f64>) -> &ActionTable {
    match policy {
        Policy::OptimalTable(t) => t,
        _ => unreachable!("extract_policy returns a table"),
    }
}

/// Rows `θ, n, w, action` of the optimal action table, optionally one θ.
fn policy_rows(table: &ActionTable, cfg: &Config, theta: Option<usize>) -> String {
    let mut body = String::from("theta,n,w,action\n");
    let thetas: Vec<usize> = match theta {
        Some(t) => vec![t],
        None => (0..table.n_theta).collect(),
    };
    for t in thetas {
        let th = t as f64 * cfg.time_step;
        for n in 0..table.n_n {
            for w in 0..table.n_w {
                writeln!(body, "{},{},{},{}", num(th), n, num(grid_w(w, cfg)), action_code(table.get(w, n, t))).unwrap();
            }
        }
    }
    body
}

pub struct SolveOutcome {
    pub table: Table,
    pub policy: Policy<f64>,
    /// `None` when a cached table was reused.
    pub report: Option<SolveReport>,
    pub cached: bool,
    pub files: Vec<PathBuf>,
}

fn fingerprint_line(path: &Path) -> Option<String> {
    let text = std::fs::read_to_string(path).ok()?;
    text.lines().find(|l| l.starts_with("# config-fingerprint:")).map(str::to_owned)
}

/// Solves (or reuses a cached table with the same fingerprint) and writes
/// the table, the policy CSV, the convergence history and the probe values.
pub fn run_solve(spec: &ExperimentSpec, cfg: &Config) -> Result<SolveOutcome> {
    let table_path = spec.out.join(TABLE_FILE);
    let conv_path = spec.out.join(CONVERGENCE_FILE);
    let values_path = spec.out.join(VALUES_FILE);
    let expected = format!("# config-fingerprint: {}", cfg.fingerprint_hex());
    let cached = load_table(&table_path, cfg).ok().filter(|_| {
        [&conv_path, &values_path].iter().all(|p| fingerprint_line(p).as_deref() == Some(expected.as_str()))
    });

    let (table, report, was_cached) = match cached {
        Some(t) => (t, None, true),
        None => {
            let (t, r) = solve(cfg, &SolveOptions::default())?;
            (t, Some(r), false)
        }
    };
    let policy = extract_policy(&table, cfg)?;
    let mut files = vec![table_path.clone()];
    if let Some(r) = &report {
        save_table(&table, &table_path)?;
        let mut body = String::from("iteration,sup_norm\n");
        for (i, d) in r.sup_norm_history.iter().enumerate() {
            writeln!(body, "{},{}", i + 1, num(*d)).unwrap();
        }
        files.push(write_csv(&conv_path, header(spec, cfg, &[format!("converged: {}", r.converged)]), body)?);

        let mut body = String::from("w,n,sigma,d,theta,value\n");
        for (x, v) in &r.value_at {
            writeln!(body, "{},{},{},{},{},{}", num(x.w), x.n, num(x.sigma), x.d as u8, num(x.theta), num(*v)).unwrap();
        }
        files.push(write_csv(&values_path, header(spec, cfg, &[]), body)?);
    } else {
        files.push(conv_path);
        files.push(values_path);
    }
    let body = policy_rows(policy_table(&policy), cfg, None);
    files.push(write_csv(&spec.out.join(POLICY_FILE), header(spec, cfg, &[]), body)?);
    Ok(SolveOutcome { table, policy, report, cached: was_cached, files })
}

/// The IMM policy from a table previously written by `solve`.
fn saved_policy(spec: &ExperimentSpec, cfg: &Config) -> Result<Policy<f64>> {
    let path = spec.out.join(TABLE_FILE);
    if !path.exists() {
        bail!(
            "no value table at {}; run `pdmp-maint solve` with the same configuration and --out first",
            path.display()
        );
    }
    let table = load_table(&path, cfg).with_context(|| {
        format!("{} does not match this configuration; rerun `pdmp-maint solve`", path.display())
    })?;
    Ok(extract_policy(&table, cfg)?)
}

fn choose_policy(spec: &ExperimentSpec, cfg: &Config) -> Result<Policy<f64>> {
    Ok(match spec.policy {
        PolicyChoice::Imm => saved_policy(spec, cfg)?,
        PolicyChoice::Cmm => Policy::CorrectiveOnly,
        PolicyChoice::Tmm { xi1, xi2 } => Policy::threshold(xi1, xi2, cfg)?,
    })
}

/// Per-path totals for one policy plus event logs of the first paths.
pub fn run_simulate(spec: &ExperimentSpec, cfg: &Config) -> Result<Vec<PathBuf>> {
    let policy = choose_policy(spec, cfg)?;
    let x0 = State::reference_start();
    let sim = Simulator::new(cfg, SimOptions::default())?;
    let records = {
        use rayon::prelude::*;
        (0..spec.n_paths)
            .into_par_iter()
            .map(|k| sim.path(&policy, &x0, &mut pdmp_maint::sim::path_rng(spec.seed, k as u64)))
            .collect::<pdmp_maint::Result<Vec<_>>>()?
    };
    let extra = [format!("policy: {}", policy.name()), format!("paths: {}", spec.n_paths)];
    let mut body = String::from("path_index,discounted_total,time_in_failure,inspections,imperfect,corrective,surprise,shocks\n");
    for (k, r) in records.iter().enumerate() {
        writeln!(
            body,
            "{},{},{},{},{},{},{},{}",
            k,
            num(r.discounted_total),
            num(r.time_in_failure),
            r.count(EventKind::Inspect),
            r.count(EventKind::MaintainImperfect),
            r.count(EventKind::MaintainCorrective),
            r.count(EventKind::MaintainSurprise),
            r.count(EventKind::Shock),
        )
        .unwrap();
    }
    let mut files = vec![write_csv(&spec.out.join("simulate.csv"), header(spec, cfg, &extra), body)?];
    for (k, r) in records.iter().take(spec.log_paths).enumerate() {
        let path = spec.out.join(format!("path_{k}.csv"));
        files.push(write_csv(&path, header(spec, cfg, &extra[..1]), r.to_csv(cfg))?);
    }
    Ok(files)
}

/// Running means of IMM, CMM and TMM over the same paths.
pub fn run_compare(spec: &ExperimentSpec, cfg: &Config) -> Result<Vec<PathBuf>> {
    let imm = saved_policy(spec, cfg)?;
    let tmm = Policy::threshold(spec.tmm.0, spec.tmm.1, cfg)?;
    let x0 = State::reference_start();
    let stats = [&imm, &Policy::CorrectiveOnly, &tmm]
        .into_iter()
        .map(|p| monte_carlo(p, &x0, spec.n_paths, spec.seed, cfg))
        .collect::<pdmp_maint::Result<Vec<_>>>()?;
    let extra = [
        format!("paths: {}", spec.n_paths),
        format!("tmm: {}", tmm.name()),
        format!(
            "final: imm {} (se {}) cmm {} (se {}) tmm {} (se {})",
            num(stats[0].mean),
            num(stats[0].std_error),
            num(stats[1].mean),
            num(stats[1].std_error),
            num(stats[2].mean),
            num(stats[2].std_error)
        ),
    ];
    let mut body = String::from("path_index,imm_mean,cmm_mean,tmm_mean\n");
    for k in 0..spec.n_paths {
        writeln!(
            body,
            "{},{},{},{}",
            k,
            num(stats[0].running_mean[k]),
            num(stats[1].running_mean[k]),
            num(stats[2].running_mean[k])
        )
        .unwrap();
    }
    Ok(vec![write_csv(&spec.out.join("compare.csv"), header(spec, cfg, &extra), body)?])
}

pub fn run_sweep_threshold(spec: &ExperimentSpec, cfg: &Config) -> Result<Vec<PathBuf>> {
    let surface = threshold_sweep(spec.threshold_step, &State::reference_start(), spec.n_paths, spec.seed, cfg)?;
    let a = &surface.argmin;
    let extra = [
        format!("paths-per-point: {}", spec.n_paths),
        format!("argmin: xi1 {} xi2 {} mean {} se {}", num(a.xi1), num(a.xi2), num(a.mean), num(a.std_error)),
    ];
    let mut body = String::from("xi1,xi2,mean,std_error\n");
    for p in &surface.points {
        writeln!(body, "{},{},{},{}", num(p.xi1), num(p.xi2), num(p.mean), num(p.std_error)).unwrap();
    }
    Ok(vec![write_csv(&spec.out.join("sweep_threshold.csv"), header(spec, cfg, &extra), body)?])
}

/// Outcome of one sweep point: a row of values or the error that stopped it.
fn status_row(key: f64, result: Result<Vec<f64>>, width: usize) -> String {
    match result {
        Ok(vals) => {
            let cols: Vec<String> = vals.into_iter().map(num).collect();
            format!("{},{},ok\n", num(key), cols.join(","))
        }
        Err(e) => {
            let msg = format!("{e:#}").replace([',', '\n'], ";");
            format!("{},{},error: {msg}\n", num(key), vec![""; width].join(","))
        }
    }
}

fn points_or(spec: &ExperimentSpec, default: &[f64]) -> Vec<f64> {
    if spec.values.is_empty() {
        default.to_vec()
    } else {
        spec.values.clone()
    }
}

fn solve_value(cfg: &Config) -> Result<(Table, f64)> {
    let (t, r) = solve(cfg, &SolveOptions::default())?;
    let v = r.value(&State::reference_start()).context("probe state missing from report")?;
    Ok((t, v))
}

pub const RHO_POINTS: [f64; 6] = [0.001, 0.01, 0.02, 0.05, 0.08, 0.1];

pub fn run_sweep_rho(spec: &ExperimentSpec, cfg: &Config) -> Result<Vec<PathBuf>> {
    use rayon::prelude::*;
    let points = points_or(spec, &RHO_POINTS);
    let rows: Vec<String> = points
        .par_iter()
        .map(|&rho| {
            let r = Config { discount: rho, ..cfg.clone() }
                .validated()
                .and_then(|c| solve_value(&c))
                .map(|(_, v)| vec![v]);
            status_row(rho, r, 1)
        })
        .collect();
    let body = String::from("rho,value,status\n") + &rows.concat();
    Ok(vec![write_csv(&spec.out.join("sweep_rho.csv"), header(spec, cfg, &[]), body)?])
}

pub const INSPECTION_POINTS: [f64; 10] = [8.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];

/// Re-solves per T_isp at ρ = 0.01 and checks the solver with a Monte Carlo
/// run of the extracted policy.
pub fn run_sweep_inspection(spec: &ExperimentSpec, cfg: &Config) -> Result<Vec<PathBuf>> {
    use rayon::prelude::*;
    let points = points_or(spec, &INSPECTION_POINTS);
    let rows: Vec<String> = points
        .par_iter()
        .map(|&t_isp| {
            let r = Config { inspection_interval: t_isp, discount: 0.01, ..cfg.clone() }
                .validated()
                .and_then(|c| {
                    let (t, v) = solve_value(&c)?;
                    let policy = extract_policy(&t, &c)?;
                    let mc = monte_carlo(&policy, &State::reference_start(), spec.n_paths, spec.seed, &c)?;
                    Ok(vec![v, mc.mean, mc.std_error])
                });
            status_row(t_isp, r, 3)
        })
        .collect();
    let extra = [format!("paths-per-point: {}", spec.n_paths), "discount: 0.01".into()];
    let body = String::from("inspection_interval,value,mc_mean,mc_std_error,status\n") + &rows.concat();
    Ok(vec![write_csv(&spec.out.join("sweep_inspection.csv"), header(spec, cfg, &extra), body)?])
}

pub const C1_POINTS: [f64; 8] = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 8.0, 10.0];
pub const C2_POINTS: [f64; 3] = [10.0, 20.0, 30.0];
/// θ of the action slices written by the cost sweeps.
pub const COST_SLICE_THETA: f64 = 200.0;

/// Summary values and slice rows of one cost point.
type CostPoint = Result<(Vec<f64>, String)>;

/// Re-solves per cost value; writes MC means of the optimal policy and the
/// optimal-action slice at θ = 200 for every point.
pub fn run_sweep_cost(spec: &ExperimentSpec, cfg: &Config) -> Result<Vec<PathBuf>> {
    use rayon::prelude::*;
    let (name, defaults): (&str, &[f64]) = match spec.cost {
        CostKind::C1 => ("c1", &C1_POINTS),
        CostKind::C2 => ("c2", &C2_POINTS),
    };
    let points = points_or(spec, defaults);
    let results: Vec<(f64, CostPoint)> = points
        .par_iter()
        .map(|&c| {
            let point = match spec.cost {
                CostKind::C1 => Config { imperfect_fixed_cost: c, ..cfg.clone() },
                CostKind::C2 => Config { corrective_cost: c, surprise_cost: 40.0, ..cfg.clone() },
            };
            let r = point.validated().and_then(|p| {
                let (t, v) = solve_value(&p)?;
                let policy = extract_policy(&t, &p)?;
                let mc = monte_carlo(&policy, &State::reference_start(), spec.n_paths, spec.seed, &p)?;
                let theta = (COST_SLICE_THETA / p.time_step).round() as usize;
                let table = policy_table(&policy);
                let ones = table.count(theta, Action::Imperfect) as f64;
                Ok((vec![v, mc.mean, mc.std_error, ones], policy_rows(table, &p, Some(theta))))
            });
            (c, r)
        })
        .collect();

    let extra = [format!("paths-per-point: {}", spec.n_paths), format!("slice-theta: {}", num(COST_SLICE_THETA))];
    let mut body = format!("{name},value,mc_mean,mc_std_error,imperfect_states_at_slice,status\n");
    let mut slices = format!("{name},theta,n,w,action\n");
    for (c, r) in results {
        let r = r.map(|(vals, rows)| {
            for line in rows.lines().skip(1) {
                writeln!(slices, "{},{line}", num(c)).unwrap();
            }
            vals
        });
        body.push_str(&status_row(c, r, 4));
    }
    Ok(vec![
        write_csv(&spec.out.join(format!("sweep_cost_{name}.csv")), header(spec, cfg, &extra), body)?,
        write_csv(&spec.out.join(format!("sweep_cost_{name}_slices.csv")), header(spec, cfg, &extra), slices)?,
    ])
}

trait Validated: Sized {
    fn validated(self) -> Result<Self>;
}

impl Validated for Config {
    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }
}
