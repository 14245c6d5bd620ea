//! `txflow` — command-line harness for the power-flow solver.
//!
//! Three subcommands: `solve` (one case, solution JSON), `sweep`
//! (initial-condition grid / line family / random sample, CSV) and
//! `compare` (both methods side by side per initial condition).
//!
//! Exit codes: 0 the solve converged to the high-voltage solution;
//! 1 the case could not be read or parsed; 2 the case is semantically
//! invalid or the invocation is a usage error; 3 the solver finished
//! without reaching the high-voltage solution.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use txflow::{
    build_index, classify_solution, compare_csv, compare_table, eq15_points, grid_points,
    iter_csv, load_case, run_compare, run_sweep, solve_plain_nr, solve_tx_stepping, stage_csv,
    sweep_csv, write_solution, ClassifyConfig, HomotopySchedule, InitPoint, Method, Network,
    NrConfig, SolutionClass, SolveStatus,
};

#[derive(Parser)]
#[command(
    name = "txflow",
    version,
    about = "Steady-state AC power flow with Tx-stepping continuation",
    after_help = "Set TXFLOW_LOG=debug (or info, trace) for solver logging."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one case and write the solution document.
    Solve(SolveArgs),
    /// Solve a family of initial conditions and write the status CSV.
    Sweep(SweepArgs),
    /// Run both methods per initial condition and tabulate side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliMethod {
    /// Newton-Raphson with voltage and variable limiting only.
    PlainNr,
    /// Tx-stepping continuation from the shorted network.
    Tx,
}

impl From<CliMethod> for Method {
    fn from(m: CliMethod) -> Method {
        match m {
            CliMethod::PlainNr => Method::PlainNr,
            CliMethod::Tx => Method::Tx,
        }
    }
}

/// Solver knobs shared by every subcommand.
#[derive(Args)]
struct SolverArgs {
    /// Series-admittance scaling of the shorted network (scale = 1 + λγ).
    #[arg(long, default_value_t = 999.0)]
    gamma: f64,
    /// Per-iteration voltage step limit, pu.
    #[arg(long, default_value_t = 0.1)]
    dv_max: f64,
    /// Residual convergence tolerance, pu current.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Newton iteration budget per stage.
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    /// Drop the generators at these bus ids (comma separated) before
    /// solving; affected PV buses degrade to PQ.
    #[arg(long, value_delimiter = ',')]
    drop_gen: Vec<i64>,
}

impl SolverArgs {
    fn nr_config(&self) -> NrConfig {
        NrConfig {
            tol_res: self.tol,
            dv_max: self.dv_max,
            max_iter: self.max_iter,
            ..NrConfig::default()
        }
    }

    fn schedule(&self) -> HomotopySchedule {
        HomotopySchedule {
            gamma: self.gamma,
            ..HomotopySchedule::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Case file (.m or .json).
    case: PathBuf,
    #[arg(long, value_enum, default_value_t = CliMethod::Tx)]
    method: CliMethod,
    /// Flat initial voltage magnitude for all non-slack buses, pu.
    #[arg(long, requires = "init_ang")]
    init_mag: Option<f64>,
    /// Flat initial voltage angle, degrees.
    #[arg(long, requires = "init_mag", allow_hyphen_values = true)]
    init_ang: Option<f64>,
    /// Write the solution JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the continuation stage trace CSV here.
    #[arg(long)]
    trace_stages: Option<PathBuf>,
    /// Write the Newton iteration trace CSV here.
    #[arg(long)]
    trace_iters: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Case file (.m or .json).
    case: PathBuf,
    #[arg(long, value_enum, default_value_t = CliMethod::Tx)]
    method: CliMethod,
    /// Grid resolution as MAGxANG, e.g. 5x5.
    #[arg(long, default_value = "5x5")]
    grid: String,
    /// Magnitude range lo:hi, pu.
    #[arg(long, default_value = "0.6:1.0", allow_hyphen_values = true)]
    mag_range: String,
    /// Angle range lo:hi, degrees.
    #[arg(long, default_value = "-50:50", allow_hyphen_values = true)]
    ang_range: String,
    /// Use the rectangular line family (V_R across [0.6, 1.1],
    /// V_I = 1 − V_R) with this many points instead of the grid.
    #[arg(long, conflicts_with_all = ["grid", "sample"])]
    eq15: Option<usize>,
    /// Sample this many random points from the ranges instead of the grid.
    #[arg(long, requires = "seed", conflicts_with = "grid")]
    sample: Option<usize>,
    /// RNG seed; required with --sample.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Case file (.m or .json).
    case: PathBuf,
    /// Initial condition MAG:ANG (pu, degrees); repeatable.
    #[arg(long = "init", required = true, allow_hyphen_values = true)]
    inits: Vec<String>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the comparison CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TXFLOW_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Compare(a) => cmd_compare(a),
    };
    ExitCode::from(code)
}

/// Load a case, mapping syntactic failures to exit 1 and semantic ones
/// to exit 2.
fn load(path: &Path) -> Result<(String, Network), u8> {
    match load_case(path) {
        Ok(lc) => Ok((lc.name, lc.network)),
        Err(e) => {
            eprintln!("error: {e}");
            Err(if e.is_validation() { 2 } else { 1 })
        }
    }
}

fn drop_gens(net: Network, ids: &[i64]) -> Result<Network, u8> {
    if ids.is_empty() {
        return Ok(net);
    }
    let mut indices = Vec::with_capacity(ids.len());
    for id in ids {
        match net.bus_ids.iter().position(|b| b == id) {
            Some(i) => indices.push(i),
            None => {
                eprintln!("error: --drop-gen references unknown bus {id}");
                return Err(2);
            }
        }
    }
    Ok(net.without_gens_at(&indices))
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), u8> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", path.display());
            1
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_pair(text: &str, what: &str, sep: char) -> Result<(f64, f64), u8> {
    let parts: Vec<&str> = text.split(sep).collect();
    if parts.len() == 2 {
        if let (Ok(a), Ok(b)) = (parts[0].trim().parse(), parts[1].trim().parse()) {
            return Ok((a, b));
        }
    }
    eprintln!("error: expected {what} as A{sep}B, got {text:?}");
    Err(2)
}

fn parse_grid(text: &str) -> Result<(usize, usize), u8> {
    let parts: Vec<&str> = text.split('x').collect();
    if parts.len() == 2 {
        if let (Ok(a), Ok(b)) = (parts[0].parse(), parts[1].parse()) {
            if a >= 1 && b >= 1 {
                return Ok((a, b));
            }
        }
    }
    eprintln!("error: expected --grid as MAGxANG (e.g. 5x5), got {text:?}");
    Err(2)
}

fn run(f: impl FnOnce() -> Result<u8, u8>) -> u8 {
    f().unwrap_or_else(|code| code)
}

fn cmd_solve(a: SolveArgs) -> u8 {
    run(|| {
        let (name, net) = load(&a.case)?;
        let net = drop_gens(net, &a.solver.drop_gen)?;
        let idx = build_index(&net);
        let nr = a.solver.nr_config();
        let sched = a.solver.schedule();
        let init = a.init_mag.map(|vm| {
            InitPoint::Polar {
                vm,
                va_deg: a.init_ang.unwrap_or(0.0),
            }
            .state(&net, &idx)
        });
        let method: Method = a.method.into();
        let report = match method {
            Method::PlainNr => solve_plain_nr(&net, &idx, init.as_deref(), &nr),
            Method::Tx => solve_tx_stepping(&net, &idx, init.as_deref(), &sched, &nr),
        };
        let json = write_solution(&net, &idx, &report, &name, &method.to_string());
        emit(a.out.as_ref(), &json)?;
        if let Some(path) = &a.trace_stages {
            emit(Some(path), &stage_csv(&report))?;
        }
        if let Some(path) = &a.trace_iters {
            emit(Some(path), &iter_csv(&report.trace))?;
        }
        let high = report.status == SolveStatus::Converged
            && classify_solution(&net, &idx, &report.final_state, &ClassifyConfig::default())
                == SolutionClass::HighVoltage;
        if !high {
            log::warn!(
                "solve finished {} at λ={} without the high-voltage solution",
                report.status,
                report.final_lambda
            );
        }
        Ok(if high { 0u8 } else { 3u8 })
    })
}

fn sweep_inits(a: &SweepArgs) -> Result<Vec<InitPoint>, u8> {
    if let Some(n) = a.eq15 {
        return Ok(eq15_points(n));
    }
    let mag = parse_pair(&a.mag_range, "--mag-range", ':')?;
    let ang = parse_pair(&a.ang_range, "--ang-range", ':')?;
    if mag.0 > mag.1 || ang.0 > ang.1 {
        eprintln!("error: range lower bound exceeds upper bound");
        return Err(2);
    }
    if let Some(n) = a.sample {
        // clap enforces the seed's presence; randomness is never implicit
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed.expect("clap requires --seed"));
        return Ok((0..n)
            .map(|_| InitPoint::Polar {
                vm: rng.gen_range(mag.0..=mag.1),
                va_deg: rng.gen_range(ang.0..=ang.1),
            })
            .collect());
    }
    let (n_mag, n_ang) = parse_grid(&a.grid)?;
    Ok(grid_points(mag, ang, n_mag, n_ang))
}

fn cmd_sweep(a: SweepArgs) -> u8 {
    run(|| {
        let (_, net) = load(&a.case)?;
        let net = drop_gens(net, &a.solver.drop_gen)?;
        let idx = build_index(&net);
        let inits = sweep_inits(&a)?;
        let result = run_sweep(
            &net,
            &idx,
            a.method.into(),
            &inits,
            &a.solver.schedule(),
            &a.solver.nr_config(),
            a.jobs,
        );
        emit(a.out.as_ref(), &sweep_csv(&result))?;
        Ok(0u8)
    })
}

fn cmd_compare(a: CompareArgs) -> u8 {
    run(|| {
        let (_, net) = load(&a.case)?;
        let net = drop_gens(net, &a.solver.drop_gen)?;
        let idx = build_index(&net);
        let mut inits = Vec::with_capacity(a.inits.len());
        for text in &a.inits {
            let (vm, va_deg) = parse_pair(text, "--init", ':')?;
            inits.push(InitPoint::Polar { vm, va_deg });
        }
        let result = run_compare(
            &net,
            &idx,
            &inits,
            &a.solver.schedule(),
            &a.solver.nr_config(),
            a.jobs,
        );
        print!("{}", compare_table(&result));
        match a.out.as_ref() {
            Some(path) => emit(Some(path), &compare_csv(&result))?,
            None => print!("\n{}", compare_csv(&result)),
        }
        Ok(0u8)
    })
}
