//! Batch drivers: initial-condition sweeps over a polar grid or the
//! rectangular line family, side-by-side method comparison, and the CSV
//! emitters for sweep, stage-trace and iteration-trace output.
//!
//! Cells are independent solves sharing an immutable [`Network`]; with
//! `jobs > 1` they run on a local thread pool and results are assembled in
//! input order, so the status grid never depends on scheduling.

use crate::homotopy::{
    solve_plain_nr_cached, solve_tx_stepping_cached, HomotopySchedule, SolveReport, StageRecord,
};
use crate::lu::min_degree_order;
use crate::network::{IndexMap, Network};
use crate::nr::{
    classify_solution, flat_start, uniform_rect_start, ClassifyConfig, IterRecord, LuCache,
    NrConfig, SolutionClass, SolveStatus,
};
use crate::stamps::{assemble_system, HomotopyConfig};
use rayon::prelude::*;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PlainNr,
    Tx,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::PlainNr => "plain-nr",
            Method::Tx => "tx",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Method, String> {
        match s {
            "plain-nr" | "plain_nr" => Ok(Method::PlainNr),
            "tx" | "tx-stepping" | "tx_stepping" => Ok(Method::Tx),
            other => Err(format!("unknown method {other:?} (expected plain-nr or tx)")),
        }
    }
}

/// One flat initial condition, applied uniformly to every non-slack bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitPoint {
    /// Vm∠Va, the polar grid family.
    Polar { vm: f64, va_deg: f64 },
    /// V_R + j·V_I, the rectangular line family.
    Rect { vr: f64, vi: f64 },
}

impl InitPoint {
    pub fn rect(&self) -> (f64, f64) {
        match *self {
            InitPoint::Polar { vm, va_deg } => {
                let (s, c) = va_deg.to_radians().sin_cos();
                (vm * c, vm * s)
            }
            InitPoint::Rect { vr, vi } => (vr, vi),
        }
    }

    pub fn vm(&self) -> f64 {
        match *self {
            InitPoint::Polar { vm, .. } => vm,
            InitPoint::Rect { vr, vi } => vr.hypot(vi),
        }
    }

    pub fn va_deg(&self) -> f64 {
        match *self {
            InitPoint::Polar { va_deg, .. } => va_deg,
            InitPoint::Rect { vr, vi } => vi.atan2(vr).to_degrees(),
        }
    }

    /// Build the full state vector: the flat guess on every non-slack bus,
    /// the slack at its setpoint, auxiliary states zero.
    pub fn state(&self, net: &Network, idx: &IndexMap) -> Vec<f64> {
        let (vr, vi) = self.rect();
        let mut x = uniform_rect_start(idx, vr, vi);
        let sb = &net.buses[net.slack_bus];
        let (s, c) = sb.angle_set.sin_cos();
        x[idx.v_r(net.slack_bus)] = sb.v_set * c;
        x[idx.v_i(net.slack_bus)] = sb.v_set * s;
        x
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Inclusive n_mag × n_ang polar grid, magnitude-major: the cell for
/// (mag i, ang j) sits at index `i * n_ang + j`.
pub fn grid_points(
    mag: (f64, f64),
    ang_deg: (f64, f64),
    n_mag: usize,
    n_ang: usize,
) -> Vec<InitPoint> {
    let mags = linspace(mag.0, mag.1, n_mag);
    let angs = linspace(ang_deg.0, ang_deg.1, n_ang);
    let mut out = Vec::with_capacity(n_mag * n_ang);
    for &vm in &mags {
        for &va_deg in &angs {
            out.push(InitPoint::Polar { vm, va_deg });
        }
    }
    out
}

/// The rectangular line family: n points with V_R evenly spaced across
/// [0.6, 1.1] and V_I = 1 − V_R.
pub fn eq15_points(n: usize) -> Vec<InitPoint> {
    linspace(0.6, 1.1, n)
        .into_iter()
        .map(|vr| InitPoint::Rect { vr, vi: 1.0 - vr })
        .collect()
}

/// One finished sweep cell.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub v_mag: f64,
    pub v_ang_deg: f64,
    pub status: SolveStatus,
    /// Voltage classification, present when the solve converged.
    pub class: Option<SolutionClass>,
    pub iterations: usize,
    pub ms: f64,
    pub report: SolveReport,
}

impl SweepCell {
    /// Status label for tables: the classification when converged, the
    /// solver status otherwise.
    pub fn outcome(&self) -> String {
        match self.class {
            Some(c) => c.to_string(),
            None => self.status.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Cells in input order (magnitude-major for grids).
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Outcome labels and their multiplicities, sorted by label.
    pub fn counts(&self) -> Vec<(String, usize)> {
        let mut map: std::collections::BTreeMap<String, usize> = Default::default();
        for c in &self.cells {
            *map.entry(c.outcome()).or_default() += 1;
        }
        map.into_iter().collect()
    }
}

fn solve_cell(
    net: &Network,
    idx: &IndexMap,
    method: Method,
    init: InitPoint,
    sched: &HomotopySchedule,
    nr_cfg: &NrConfig,
    order: Option<&[usize]>,
) -> SweepCell {
    let x0 = init.state(net, idx);
    let mut cache = LuCache {
        order: order.map(|o| o.to_vec()),
    };
    let t0 = std::time::Instant::now();
    let report = match method {
        Method::PlainNr => solve_plain_nr_cached(net, idx, Some(&x0), nr_cfg, &mut cache),
        Method::Tx => solve_tx_stepping_cached(net, idx, Some(&x0), sched, nr_cfg, &mut cache),
    };
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    let class = (report.status == SolveStatus::Converged).then(|| {
        classify_solution(net, idx, &report.final_state, &ClassifyConfig::default())
    });
    SweepCell {
        v_mag: init.vm(),
        v_ang_deg: init.va_deg(),
        status: report.status,
        class,
        iterations: report.total_iterations,
        ms,
        report,
    }
}

/// Fill-reducing column order for a network's Jacobian. The pattern does
/// not depend on the state or the continuation level, so one order serves
/// every factorization on the same network.
pub fn jacobian_order(net: &Network, idx: &IndexMap) -> Vec<usize> {
    let x = flat_start(idx);
    let sys = assemble_system(net, idx, &x, &HomotopyConfig::at_lambda(0.0), 1.0);
    min_degree_order(&sys.to_csc())
}

/// Run one solve per initial condition. `jobs > 1` distributes cells over
/// that many threads; output order always matches `inits`.
pub fn run_sweep(
    net: &Network,
    idx: &IndexMap,
    method: Method,
    inits: &[InitPoint],
    sched: &HomotopySchedule,
    nr_cfg: &NrConfig,
    jobs: usize,
) -> SweepResult {
    let order = jacobian_order(net, idx);
    let order = Some(order.as_slice());
    let cells = if jobs > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| {
                inits
                    .par_iter()
                    .map(|&p| solve_cell(net, idx, method, p, sched, nr_cfg, order))
                    .collect()
            }),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); sweeping serially");
                inits
                    .iter()
                    .map(|&p| solve_cell(net, idx, method, p, sched, nr_cfg, order))
                    .collect()
            }
        }
    } else {
        inits
            .iter()
            .map(|&p| solve_cell(net, idx, method, p, sched, nr_cfg, order))
            .collect()
    };
    SweepResult { cells }
}

/// Both methods on the same initial condition.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub plain: SweepCell,
    pub tx: SweepCell,
}

#[derive(Debug, Clone)]
pub struct CompareResult {
    pub rows: Vec<CompareRow>,
}

/// Run plain Newton and continuation side by side for each initial
/// condition.
pub fn run_compare(
    net: &Network,
    idx: &IndexMap,
    inits: &[InitPoint],
    sched: &HomotopySchedule,
    nr_cfg: &NrConfig,
    jobs: usize,
) -> CompareResult {
    let plain = run_sweep(net, idx, Method::PlainNr, inits, sched, nr_cfg, jobs);
    let tx = run_sweep(net, idx, Method::Tx, inits, sched, nr_cfg, jobs);
    CompareResult {
        rows: plain
            .cells
            .into_iter()
            .zip(tx.cells)
            .map(|(plain, tx)| CompareRow { plain, tx })
            .collect(),
    }
}

/// Sweep CSV: fixed header, one row per cell, trailing `#`-prefixed
/// summary with per-outcome counts.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut s = String::from("v_mag,v_ang_deg,status,iters,ms\n");
    for c in &result.cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.3}",
            c.v_mag,
            c.v_ang_deg,
            c.outcome(),
            c.iterations,
            c.ms
        );
    }
    let counts = result
        .counts()
        .iter()
        .map(|(k, n)| format!("{k}={n}"))
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(s, "# summary: {counts}");
    s
}

/// Comparison CSV, one row per initial condition.
pub fn compare_csv(result: &CompareResult) -> String {
    let mut s = String::from("v_mag,v_ang_deg,plain_nr,plain_nr_iters,tx,tx_iters\n");
    for r in &result.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.plain.v_mag,
            r.plain.v_ang_deg,
            r.plain.outcome(),
            r.plain.iterations,
            r.tx.outcome(),
            r.tx.iterations
        );
    }
    s
}

/// Aligned text rendering of a comparison, one row per initial condition.
pub fn compare_table(result: &CompareResult) -> String {
    let mut s = format!(
        "{:>8}  {:>9}  {:>13} {:>6}  {:>13} {:>6}\n",
        "v_mag", "v_ang_deg", "plain-nr", "iters", "tx", "iters"
    );
    for r in &result.rows {
        let _ = writeln!(
            s,
            "{:>8.4}  {:>9.4}  {:>13} {:>6}  {:>13} {:>6}",
            r.plain.v_mag,
            r.plain.v_ang_deg,
            r.plain.outcome(),
            r.plain.iterations,
            r.tx.outcome(),
            r.tx.iterations
        );
    }
    s
}

/// Stage-trace CSV: accepted and rejected attempts merged in attempt order.
pub fn stage_csv(report: &SolveReport) -> String {
    let mut all: Vec<&StageRecord> = report
        .stages
        .iter()
        .chain(report.rejected_stages.iter())
        .collect();
    all.sort_by_key(|r| r.stage);
    let mut s = String::from("stage,lambda,iterations,status,max_residual\n");
    for r in all {
        let _ = writeln!(
            s,
            "{},{},{},{},{:e}",
            r.stage, r.lambda, r.iterations, r.status, r.max_residual
        );
    }
    s
}

/// Iteration-trace CSV across all attempts of a solve.
pub fn iter_csv(trace: &[IterRecord]) -> String {
    let mut s = String::from("iteration,lambda,zeta,max_dx,residual_inf\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{},{},{},{:e},{:e}",
            r.iteration, r.lambda, r.zeta, r.max_dx, r.residual_inf
        );
    }
    s
}
