//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ctjmdp_core::costs::{
    exact_curve, finite_horizon_cost, infinite_horizon_cost_exact, mc_discounted_cost_streaming, truncation_horizon,
    CostError, PathCost,
};
use ctjmdp_core::experiments::battery::{assemble_battery, battery_size, run_battery_entry, BatteryConfig};
use ctjmdp_core::experiments::explosion::{run_explosion_demo, ExplosionConfig};
use ctjmdp_core::experiments::extension::{run_extension_battery, ExtensionConfig};
use ctjmdp_core::experiments::two_state::{run_example_two_state, TwoStateConfig};
use ctjmdp_core::experiments::ExperimentError;
use ctjmdp_core::forward::{feller_series, policy_marginals, substeps_for, MarginalCurve, OdeOptions, QFunction, SeriesOptions, SolverError};
use ctjmdp_core::markovize::{compare_marginals, derive_markov_exact, derive_markov_mc, DominanceReport, MarkovizeError, MIN_CELL_COUNT};
use ctjmdp_core::policy::augment;
use ctjmdp_core::simulator::{estimate_marginals, SimConfig, SimError, Simulation, Trajectory};
use ctjmdp_core::{ModelError, ModelSpec, Policy, PolicyError, TimeGrid};

use crate::files::{self, fmt_f64, FileError};
use crate::pool::{Pool, THREADS_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FAILED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "ctjmdp", version, about = "Continuous-time jump Markov decision process toolkit")]
pub struct Cli {
    /// Seed of every random stream (overrides experiment configs).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs serially.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Verification tolerance (overrides experiment configs).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Output file; standard output if absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    /// Initial law: array in state order, or object state → probability.
    #[arg(long)]
    pub gamma: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveMethod {
    Series,
    Ode,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimateMethod {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    TwoState,
    Battery,
    Explosion,
    Extension,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample trajectories to CSV.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1_000_000)]
        max_jumps: usize,
        /// Grid of the empirical marginals written with `--marginals`.
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long, requires = "grid_step")]
        marginals: Option<PathBuf>,
    },
    /// Marginal distributions on a time grid.
    Forward {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        grid_step: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long, value_enum, default_value_t = SolveMethod::Ode)]
        method: SolveMethod,
        /// Add state-action columns `p_<action>` (needs the ODE).
        #[arg(long)]
        actions: bool,
        #[arg(long, default_value_t = 10_000)]
        max_terms: usize,
    },
    /// Markov policy with the marginals of the given policy.
    Markovize {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        grid_step: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long, value_enum, default_value_t = EstimateMethod::Exact)]
        method: EstimateMethod,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = MIN_CELL_COUNT)]
        min_count: usize,
        #[arg(long, default_value_t = 1_000_000)]
        max_jumps: usize,
    },
    /// Compare the marginals of a Markov policy against those of the given policy.
    Verify {
        #[command(flatten)]
        inputs: Inputs,
        /// Markov policy to check; the exact Markovization if absent.
        #[arg(long)]
        phi: Option<PathBuf>,
        #[arg(long)]
        grid_step: f64,
        #[arg(long)]
        horizon: f64,
        /// Solve on `grid_step / refine` and compare on `grid_step`.
        #[arg(long, default_value_t = 1)]
        refine: usize,
    },
    /// Expected discounted cost.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        alpha: f64,
        #[arg(long, required_unless_present = "infinite", conflicts_with = "infinite")]
        horizon: Option<f64>,
        #[arg(long)]
        infinite: bool,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = EstimateMethod::Exact)]
        method: EstimateMethod,
        #[arg(long, default_value_t = 0.001)]
        grid_step: f64,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1_000_000)]
        max_jumps: usize,
    },
    /// Run a reproducible experiment and write its report.
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
        /// JSON config; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Plot-ready CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// A failed command: stable error code, message and exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub exit: i32,
}

impl CliError {
    pub fn invalid(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            message: message.into(),
            exit: EXIT_INVALID,
        }
    }

    fn failed(message: impl Into<String>) -> Self {
        CliError {
            code: "VERIFICATION_FAILED".into(),
            message: message.into(),
            exit: EXIT_FAILED,
        }
    }

    /// `{"error": code, "message": message}`
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.code, "message": self.message }).to_string()
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::invalid(e.code(), e.to_string())
            }
        }
    )*};
}

invalid_from!(FileError, ModelError, PolicyError, SolverError, MarkovizeError, CostError, SimError, ExperimentError);

/// Parses `argv` and runs it, returning the exit status. Errors go to standard error.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let pool = Pool::new(cli.threads).map_err(|e| CliError::invalid("BAD_ARGS", e.to_string()))?;
    let out = cli.out.as_deref();
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Simulate {
            inputs,
            horizon,
            n,
            max_jumps,
            grid_step,
            marginals,
        } => {
            let (model, policy, gamma) = load(inputs)?;
            let cfg = SimConfig {
                horizon: *horizon,
                max_jumps: *max_jumps,
                trajectories: *n,
                seed,
            };
            let trajs = sample(&pool, &model, &policy, &gamma, cfg)?;
            write(out, &trajectory_csv(&model, &trajs))?;
            if let (Some(path), Some(step)) = (marginals, grid_step) {
                let grid = TimeGrid::covering(*step, *horizon)?;
                let est = estimate_marginals(&trajs, &model, &policy, grid)?;
                write(Some(path), &files::json_string(&est))?;
            }
            Ok(())
        }
        Command::Forward {
            inputs,
            grid_step,
            horizon,
            method,
            actions,
            max_terms,
        } => {
            let (model, policy, gamma) = load(inputs)?;
            if *actions && *method == SolveMethod::Series {
                return Err(CliError::invalid("BAD_ARGS", "--actions needs --method ode or both"));
            }
            let grid = TimeGrid::covering(*grid_step, *horizon)?;
            let opts = OdeOptions {
                substeps: substeps_for(&model, *grid_step),
            };
            let ode = match method {
                SolveMethod::Series => None,
                _ => Some(policy_marginals(&model, &policy, &gamma, grid, opts)?),
            };
            let series = match method {
                SolveMethod::Ode => None,
                _ => Some(series_probs(&model, &policy, &gamma, grid, opts.substeps, *max_terms)?),
            };
            write(out, &forward_csv(&model, grid, ode.as_ref(), series.as_ref(), *actions))
        }
        Command::Markovize {
            inputs,
            grid_step,
            horizon,
            method,
            n,
            min_count,
            max_jumps,
        } => {
            let (model, policy, gamma) = load(inputs)?;
            let grid = TimeGrid::covering(*grid_step, *horizon)?;
            let phi = match method {
                EstimateMethod::Exact => {
                    let opts = OdeOptions {
                        substeps: substeps_for(&model, *grid_step),
                    };
                    let curve = policy_marginals(&model, &policy, &gamma, grid, opts)?;
                    derive_markov_exact(&model, &curve)?.policy
                }
                EstimateMethod::Mc => {
                    let cfg = SimConfig {
                        horizon: grid.horizon(),
                        max_jumps: *max_jumps,
                        trajectories: *n,
                        seed,
                    };
                    let trajs = sample(&pool, &model, &policy, &gamma, cfg)?;
                    derive_markov_mc(&trajs, &model, &policy, grid, *min_count)?.policy
                }
            };
            write(out, &files::json_string(&files::markov_policy_file(&model, &phi)))
        }
        Command::Verify {
            inputs,
            phi,
            grid_step,
            horizon,
            refine,
        } => {
            let (model, policy, gamma) = load(inputs)?;
            let tol = cli.tol.unwrap_or(1e-6);
            let report = verify(&model, &policy, &gamma, phi.as_deref(), *grid_step, *horizon, *refine)?;
            let passed = report.violation_sup <= tol && report.equality_sup_nonexplosive <= tol;
            write(
                out,
                &files::json_string(&VerifyReport {
                    report: &report,
                    tolerance: tol,
                    passed,
                }),
            )?;
            if passed {
                Ok(())
            } else {
                Err(CliError::failed(format!(
                    "violation_sup {} / equality_sup_nonexplosive {} above {tol}",
                    report.violation_sup, report.equality_sup_nonexplosive
                )))
            }
        }
        Command::Evaluate {
            inputs,
            alpha,
            horizon,
            infinite,
            eps,
            method,
            grid_step,
            n,
            max_jumps,
        } => {
            let (model, policy, gamma) = load(inputs)?;
            let costs = model.costs();
            let result = match (method, *infinite) {
                (EstimateMethod::Exact, true) => {
                    infinite_horizon_cost_exact(&model, &policy, &gamma, costs, *alpha, *eps, *grid_step)?
                }
                (EstimateMethod::Exact, false) => {
                    let t = horizon.expect("clap requires --horizon");
                    let curve = exact_curve(&model, &policy, &gamma, *grid_step, t)?;
                    finite_horizon_cost(&curve, &model, costs, *alpha, t)?
                }
                (EstimateMethod::Mc, _) => {
                    let t = match horizon {
                        Some(t) => *t,
                        None => truncation_horizon(&model, costs, *alpha, *eps)?,
                    };
                    let cfg = SimConfig {
                        horizon: t,
                        max_jumps: *max_jumps,
                        trajectories: *n,
                        seed,
                    };
                    let sim = Simulation::new(&model, &policy, &gamma, cfg)?;
                    let cost = PathCost::new(&model, &policy, costs, *alpha, t)?;
                    mc_discounted_cost_streaming(&pool, &sim, &cost)?
                }
            };
            write(out, &files::json_string(&result))
        }
        Command::Experiment { name, config, csv } => experiment(cli, &pool, *name, config.as_deref(), csv.as_deref()),
    }
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    #[serde(flatten)]
    report: &'a DominanceReport,
    tolerance: f64,
    passed: bool,
}

fn write(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    Ok(files::write_output(path, contents)?)
}

fn load(inputs: &Inputs) -> Result<(ModelSpec, Policy, Vec<f64>), CliError> {
    let model = files::read_model(&inputs.model)?;
    let policy = files::read_policy(&inputs.policy, &model)?;
    let gamma = files::read_gamma(&inputs.gamma, &model)?;
    Ok((model, policy, gamma))
}

fn sample(
    pool: &Pool,
    model: &ModelSpec,
    policy: &Policy,
    gamma: &[f64],
    cfg: SimConfig,
) -> Result<Vec<Trajectory>, CliError> {
    let sim = Simulation::new(model, policy, gamma, cfg)?;
    let trajs: Result<Vec<_>, SimError> = pool.map(cfg.trajectories, |i| sim.trajectory(i)).into_iter().collect();
    Ok(trajs?)
}

fn trajectory_csv(model: &ModelSpec, trajs: &[Trajectory]) -> String {
    let rows = trajs.iter().enumerate().flat_map(|(i, traj)| {
        let status = traj.status.as_str();
        let start = (0.0, traj.path.initial);
        std::iter::once(start)
            .chain(traj.path.jumps.iter().map(|j| (j.time, j.state)))
            .enumerate()
            .map(move |(n, (t, z))| {
                vec![
                    i.to_string(),
                    n.to_string(),
                    fmt_f64(t),
                    model.state_name(z).to_string(),
                    status.to_string(),
                ]
            })
    });
    files::csv(&["trajectory_id", "jump_index", "time", "state", "status"], rows)
}

/// Series probabilities `[k * n_states + z]` and mass defects per grid point. Finite-memory
/// policies are solved on the product chain and projected.
fn series_probs(
    model: &ModelSpec,
    policy: &Policy,
    gamma: &[f64],
    grid: TimeGrid,
    substeps: usize,
    max_terms: usize,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let opts = SeriesOptions {
        n_max: max_terms,
        substeps,
        ..SeriesOptions::default()
    };
    let ns = model.n_states();
    match policy {
        Policy::Markov(phi) => {
            let q = QFunction::new(model, phi)?;
            let curve = feller_series(&q, gamma, grid, opts)?.curve;
            Ok((curve.probs.clone(), curve.mass_defects()))
        }
        Policy::FiniteMemory(fm) => {
            let aug = augment(model, fm)?;
            let q = QFunction::new(&aug.model, &aug.policy)?;
            let lifted = aug.lift_distribution(gamma, fm.initial_memory());
            let curve = feller_series(&q, &lifted, grid, opts)?.curve;
            let mut probs = vec![0.0; grid.points() * ns];
            for k in 0..grid.points() {
                for (i, &p) in curve.probs_at(k).iter().enumerate() {
                    probs[k * ns + aug.split(i).0] += p;
                }
            }
            Ok((probs, curve.mass_defects()))
        }
        Policy::General(_) => Err(SolverError::UnsupportedPolicy.into()),
    }
}

fn forward_csv(
    model: &ModelSpec,
    grid: TimeGrid,
    ode: Option<&MarginalCurve>,
    series: Option<&(Vec<f64>, Vec<f64>)>,
    actions: bool,
) -> String {
    let ns = model.n_states();
    let mut header = vec!["time".to_string(), "state".into(), "probability".into()];
    if ode.is_some() && series.is_some() {
        header.push("series_probability".into());
    }
    if actions {
        header.extend(model.action_names().iter().map(|a| format!("p_{a}")));
    }
    header.push("mass_defect".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..grid.points()).flat_map(|k| {
        (0..ns).map(move |z| {
            let mut row = vec![fmt_f64(grid.time(k)), model.state_name(z).to_string()];
            if let Some(c) = ode {
                row.push(fmt_f64(c.prob(k, z)));
            }
            if let Some((p, _)) = series {
                row.push(fmt_f64(p[k * ns + z]));
            }
            if actions {
                let c = ode.expect("actions need the ODE curve");
                for a in 0..model.n_actions() {
                    row.push(fmt_f64(c.state_action(k, z, a).unwrap_or(0.0)));
                }
            }
            let defect = match (ode, series) {
                (Some(c), _) => c.mass_defect_at(k),
                (None, Some((_, d))) => d[k],
                (None, None) => unreachable!(),
            };
            row.push(fmt_f64(defect));
            row
        })
    });
    files::csv(&header, rows)
}

fn verify(
    model: &ModelSpec,
    policy: &Policy,
    gamma: &[f64],
    phi: Option<&Path>,
    step: f64,
    horizon: f64,
    refine: usize,
) -> Result<DominanceReport, CliError> {
    if refine == 0 {
        return Err(CliError::invalid("BAD_ARGS", "--refine must be positive"));
    }
    let grid = TimeGrid::covering(step, horizon)?.refine(refine);
    let opts = OdeOptions {
        substeps: substeps_for(model, grid.step),
    };
    let pi = policy_marginals(model, policy, gamma, grid, opts)?;
    let phi_curve = match phi {
        Some(path) => match files::read_policy(path, model)? {
            p @ Policy::Markov(_) => policy_marginals(model, &p, gamma, grid, opts)?,
            _ => return Err(CliError::invalid("BAD_ARGS", "--phi must be a Markov policy")),
        },
        None => {
            let phi = Policy::Markov(derive_markov_exact(model, &pi)?.policy);
            policy_marginals(model, &phi, gamma, grid, opts)?
        }
    };
    Ok(compare_marginals(&phi_curve.resample(refine)?, &pi.resample(refine)?)?)
}

fn read_config<T: Default + serde::de::DeserializeOwned>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        Some(p) => Ok(files::read_json(p)?),
        None => Ok(T::default()),
    }
}

/// `dir/stem_suffix.ext` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

fn experiment(cli: &Cli, pool: &Pool, name: Experiment, config: Option<&Path>, csv: Option<&Path>) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    let passed = match name {
        Experiment::TwoState => {
            let mut cfg: TwoStateConfig = read_config(config)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            cfg.tol = cli.tol.unwrap_or(cfg.tol);
            let r = run_example_two_state(&cfg, pool)?;
            if let Some(path) = csv {
                let rows = r.rows.iter().map(|row| {
                    [row.alpha, row.v_pi, row.v_phi, row.gap, row.gap_formula].map(fmt_f64).to_vec()
                });
                write(Some(path), &files::csv(&["alpha", "v_pi", "v_phi", "gap", "gap_formula"], rows))?;
                let curve = r.curve.iter().map(|c| {
                    [c.t, c.pi_1, c.pi_2, c.phi_1, c.phi_2, c.phi_b_given_2].map(fmt_f64).to_vec()
                });
                let header = ["time", "pi_1", "pi_2", "phi_1", "phi_2", "phi_b_given_2"];
                write(Some(&sibling(path, "curve")), &files::csv(&header, curve))?;
            }
            write(out, &files::json_string(&r))?;
            r.passed
        }
        Experiment::Battery => {
            let mut cfg: BatteryConfig = read_config(config)?;
            cfg.tol = cli.tol.unwrap_or(cfg.tol);
            let entries = pool
                .map(battery_size(&cfg), |i| run_battery_entry(&cfg, i))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            let r = assemble_battery(&cfg, entries);
            if let Some(path) = csv {
                let rows = r.entries.iter().map(|e| {
                    vec![
                        e.model_seed.to_string(),
                        e.policy.clone(),
                        fmt_f64(e.violation_sup),
                        fmt_f64(e.equality_sup),
                        fmt_f64(e.cost_gap_sup),
                    ]
                });
                let header = ["model_seed", "policy", "violation_sup", "equality_sup", "cost_gap_sup"];
                write(Some(path), &files::csv(&header, rows))?;
            }
            write(out, &files::json_string(&r))?;
            r.passed
        }
        Experiment::Explosion => {
            let mut cfg: ExplosionConfig = read_config(config)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            cfg.tol = cli.tol.unwrap_or(cfg.tol);
            let r = run_explosion_demo(&cfg, pool)?;
            if let Some(path) = csv {
                let rows = r.rows.iter().map(|row| {
                    vec![
                        row.depth.to_string(),
                        fmt_f64(row.mass_defect),
                        row.series_ode_sup.map(fmt_f64).unwrap_or_default(),
                    ]
                });
                write(Some(path), &files::csv(&["depth", "mass_defect", "series_ode_sup"], rows))?;
            }
            write(out, &files::json_string(&r))?;
            r.passed
        }
        Experiment::Extension => {
            let mut cfg: ExtensionConfig = read_config(config)?;
            cfg.tol = cli.tol.unwrap_or(cfg.tol);
            let r = run_extension_battery(&cfg)?;
            if let Some(path) = csv {
                let rows = r.rows.iter().map(|row| {
                    vec![
                        row.model_seed.to_string(),
                        row.policy.clone(),
                        fmt_f64(row.result.residual),
                        fmt_f64(row.result.entry_mass_error),
                    ]
                });
                write(Some(path), &files::csv(&["model_seed", "policy", "residual", "entry_mass_error"], rows))?;
            }
            write(out, &files::json_string(&r))?;
            r.passed
        }
    };
    if passed {
        Ok(())
    } else {
        Err(CliError::failed("experiment checks failed; see the report"))
    }
}
