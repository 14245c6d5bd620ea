//! Damped Newton-Raphson core.
//!
//! Each iteration assembles the full-state system about the current iterate,
//! solves it directly, and limits the update twice: voltage components are
//! clamped per-component to ±`dv_max` and boxed into [`v_min`, `v_max`], and
//! the damping factor ζ softens the PV-generator linearizations whenever
//! raw voltage steps run hot. Convergence requires both a small raw step and
//! a small residual, so a limited step can never masquerade as a solution.

use crate::lu::{factorize_csc, min_degree_order};
use crate::network::{IndexMap, Network};
use crate::stamps::{assemble_system, residual, HomotopyConfig};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrConfig {
    /// Convergence threshold on the raw step ‖Δx‖∞.
    pub tol_dv: f64,
    /// Convergence threshold on the residual ‖F‖∞.
    pub tol_res: f64,
    pub max_iter: usize,
    /// Per-component voltage step limit.
    pub dv_max: f64,
    /// Hard box on every voltage component.
    pub v_min: f64,
    pub v_max: f64,
    pub zeta_min: f64,
    pub zeta_shrink: f64,
    pub zeta_grow: f64,
    /// Smallest allowed |V|² at a constant-power bus; steps are halved and
    /// initial points lifted to stay above it.
    pub collapse_floor: f64,
}

impl Default for NrConfig {
    fn default() -> NrConfig {
        NrConfig {
            tol_dv: 1e-8,
            tol_res: 1e-6,
            max_iter: 50,
            dv_max: 0.1,
            v_min: -2.0,
            v_max: 2.0,
            zeta_min: 0.05,
            zeta_shrink: 0.5,
            zeta_grow: 1.5,
            collapse_floor: 1e-4,
        }
    }
}

/// Residual explosion bound; beyond this the iteration is declared diverged.
const DIVERGE_RES: f64 = 1e6;
/// Cap on step halvings while backing away from a voltage collapse.
const MAX_HALVINGS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Diverged,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "Converged",
            SolveStatus::MaxIterations => "MaxIterations",
            SolveStatus::Diverged => "Diverged",
        })
    }
}

/// One Newton iteration, as written to the iteration trace. The first five
/// fields are the trace CSV columns; the rest support step-limit audits.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub lambda: f64,
    pub zeta: f64,
    /// ‖Δx‖∞ of the raw (unlimited) step.
    pub max_dx: f64,
    /// ‖F‖∞ before the step.
    pub residual_inf: f64,
    /// Largest voltage-component change actually applied this iteration.
    pub max_dv_applied: f64,
    /// Extremes over all voltage components after the step.
    pub min_v: f64,
    pub max_v: f64,
}

#[derive(Debug, Clone)]
pub struct NrOutcome {
    pub status: SolveStatus,
    /// Completed (state-changing) iterations.
    pub iterations: usize,
    /// ‖F‖∞ at the final state.
    pub residual_inf: f64,
    pub state: Vec<f64>,
    pub trace: Vec<IterRecord>,
}

/// Column-ordering cache so repeated factorizations of the same sparsity
/// pattern skip the minimum-degree analysis.
#[derive(Default)]
pub struct LuCache {
    pub order: Option<Vec<usize>>,
}

/// All buses at 1∠0, zero reactive states and slack currents.
pub fn flat_start(idx: &IndexMap) -> Vec<f64> {
    uniform_polar_start(idx, 1.0, 0.0)
}

/// Every bus at vm∠va (radians); auxiliary states zero.
pub fn uniform_polar_start(idx: &IndexMap, vm: f64, va: f64) -> Vec<f64> {
    uniform_rect_start(idx, vm * va.cos(), vm * va.sin())
}

/// Every bus at v_r + j·v_i; auxiliary states zero.
pub fn uniform_rect_start(idx: &IndexMap, vr: f64, vi: f64) -> Vec<f64> {
    let mut x = vec![0.0; idx.n];
    for i in 0..idx.n_bus {
        x[idx.v_r(i)] = vr;
        x[idx.v_i(i)] = vi;
    }
    x
}

pub fn bus_vm(idx: &IndexMap, state: &[f64], bus: usize) -> f64 {
    state[idx.v_r(bus)].hypot(state[idx.v_i(bus)])
}

/// Bus angle in radians.
pub fn bus_va(idx: &IndexMap, state: &[f64], bus: usize) -> f64 {
    state[idx.v_i(bus)].atan2(state[idx.v_r(bus)])
}

/// Apply `scale`·Δx to `x` with voltage limiting: each voltage component
/// moves at most `dv_max` and stays inside [`v_min`, `v_max`]; other
/// components take the full scaled delta.
pub fn nr_step(idx: &IndexMap, x: &[f64], dx_raw: &[f64], scale: f64, cfg: &NrConfig) -> Vec<f64> {
    let mut out = x.to_vec();
    for i in 0..x.len() {
        let d = scale * dx_raw[i];
        if idx.is_voltage(i) {
            let limited = d.clamp(-cfg.dv_max, cfg.dv_max);
            out[i] = (x[i] + limited).clamp(cfg.v_min, cfg.v_max);
        } else {
            out[i] = x[i] + d;
        }
    }
    out
}

/// Damping schedule: shrink while raw voltage steps exceed `dv_max`,
/// recover once the residual is falling, hold otherwise.
pub fn update_zeta(zeta: f64, max_dv_raw: f64, res_history: &[f64], cfg: &NrConfig) -> f64 {
    if max_dv_raw > cfg.dv_max {
        (zeta * cfg.zeta_shrink).max(cfg.zeta_min)
    } else if res_history.len() >= 2
        && res_history[res_history.len() - 1] < res_history[res_history.len() - 2]
    {
        (zeta * cfg.zeta_grow).min(1.0)
    } else {
        zeta
    }
}

/// Buses carrying a constant-power device (these divide by |V|²).
fn power_bus_mask(net: &Network) -> Vec<bool> {
    let mut mask = vec![false; net.buses.len()];
    for l in &net.loads {
        if l.big.is_none() {
            mask[l.bus] = true;
        }
    }
    for g in &net.gens {
        mask[g.bus] = true;
    }
    mask
}

fn min_power_d(idx: &IndexMap, state: &[f64], mask: &[bool]) -> f64 {
    let mut min_d = f64::INFINITY;
    for (bus, &m) in mask.iter().enumerate() {
        if m {
            let (vr, vi) = (state[idx.v_r(bus)], state[idx.v_i(bus)]);
            min_d = min_d.min(vr * vr + vi * vi);
        }
    }
    min_d
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn voltage_extremes(idx: &IndexMap, state: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..2 * idx.n_bus {
        lo = lo.min(state[i]);
        hi = hi.max(state[i]);
    }
    (lo, hi)
}

/// Newton-Raphson solve at a fixed continuation level.
pub fn solve_nr(
    net: &Network,
    idx: &IndexMap,
    init: &[f64],
    h: &HomotopyConfig,
    cfg: &NrConfig,
) -> NrOutcome {
    solve_nr_cached(net, idx, init, h, cfg, &mut LuCache::default())
}

/// As [`solve_nr`] but reusing a fill-reducing ordering across calls with an
/// identical sparsity pattern (continuation stages of one network qualify:
/// remote-control ties are stamped at every λ).
pub fn solve_nr_cached(
    net: &Network,
    idx: &IndexMap,
    init: &[f64],
    h: &HomotopyConfig,
    cfg: &NrConfig,
    cache: &mut LuCache,
) -> NrOutcome {
    debug_assert_eq!(init.len(), idx.n);
    let mask = power_bus_mask(net);
    let mut x = init.to_vec();

    // lift collapsed starting voltages off the floor, keeping the angle
    let lift = 2.0 * cfg.collapse_floor.sqrt();
    for (bus, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        let (vr, vi) = (x[idx.v_r(bus)], x[idx.v_i(bus)]);
        let d = vr * vr + vi * vi;
        if d < cfg.collapse_floor {
            if d == 0.0 {
                x[idx.v_r(bus)] = lift;
            } else {
                let s = lift / d.sqrt();
                x[idx.v_r(bus)] = vr * s;
                x[idx.v_i(bus)] = vi * s;
            }
        }
    }

    let mut zeta = 1.0f64;
    let mut res_history: Vec<f64> = Vec::with_capacity(cfg.max_iter + 1);
    let mut trace: Vec<IterRecord> = Vec::new();
    let mut dx_raw = vec![0.0f64; idx.n];

    for iteration in 0..cfg.max_iter {
        let f = residual(net, idx, &x, h);
        let res_inf = inf_norm(&f);
        if !res_inf.is_finite() || res_inf > DIVERGE_RES {
            return NrOutcome {
                status: SolveStatus::Diverged,
                iterations: iteration,
                residual_inf: res_inf,
                state: x,
                trace,
            };
        }
        res_history.push(res_inf);

        let sys = assemble_system(net, idx, &x, h, zeta);
        let a = sys.to_csc();
        if cache.order.is_none() {
            cache.order = Some(min_degree_order(&a));
        }
        let solved = factorize_csc(a, cache.order.as_deref()).and_then(|fac| fac.solve(&sys.rhs));
        let x_raw = match solved {
            Ok(v) => v,
            Err(_) => {
                return NrOutcome {
                    status: SolveStatus::Diverged,
                    iterations: iteration,
                    residual_inf: res_inf,
                    state: x,
                    trace,
                };
            }
        };

        let mut max_dx = 0.0f64;
        let mut max_dv_raw = 0.0f64;
        for i in 0..idx.n {
            dx_raw[i] = x_raw[i] - x[i];
            let a = dx_raw[i].abs();
            max_dx = max_dx.max(a);
            if idx.is_voltage(i) {
                max_dv_raw = max_dv_raw.max(a);
            }
        }

        if max_dx < cfg.tol_dv && res_inf < cfg.tol_res {
            let (min_v, max_v) = voltage_extremes(idx, &x);
            trace.push(IterRecord {
                iteration,
                lambda: h.lambda,
                zeta,
                max_dx,
                residual_inf: res_inf,
                max_dv_applied: 0.0,
                min_v,
                max_v,
            });
            return NrOutcome {
                status: SolveStatus::Converged,
                iterations: iteration,
                residual_inf: res_inf,
                state: x,
                trace,
            };
        }

        // take the limited step, backing off while it would drive a
        // constant-power bus into voltage collapse
        let mut scale = 1.0f64;
        let mut x_next = nr_step(idx, &x, &dx_raw, scale, cfg);
        let mut halvings = 0;
        while min_power_d(idx, &x_next, &mask) < cfg.collapse_floor && halvings < MAX_HALVINGS {
            scale *= 0.5;
            halvings += 1;
            x_next = nr_step(idx, &x, &dx_raw, scale, cfg);
        }
        let mut max_dv_applied = 0.0f64;
        for i in 0..idx.n {
            if idx.is_voltage(i) {
                max_dv_applied = max_dv_applied.max((x_next[i] - x[i]).abs());
            }
        }
        let (min_v, max_v) = voltage_extremes(idx, &x_next);
        trace.push(IterRecord {
            iteration,
            lambda: h.lambda,
            zeta,
            max_dx,
            residual_inf: res_inf,
            max_dv_applied,
            min_v,
            max_v,
        });
        log::trace!(
            "iter {iteration}: λ={:.5} ζ={zeta:.3} max|dx|={max_dx:.3e} res={res_inf:.3e} halvings={halvings}",
            h.lambda
        );
        x = x_next;
        zeta = update_zeta(zeta, max_dv_raw, &res_history, cfg);
    }

    let res_inf = inf_norm(&residual(net, idx, &x, h));
    NrOutcome {
        status: SolveStatus::MaxIterations,
        iterations: cfg.max_iter,
        residual_inf: res_inf,
        state: x,
        trace,
    }
}

/// Voltage-band and angle classification of a solved operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyConfig {
    pub vm_low: f64,
    pub vm_high: f64,
    /// Largest tolerated |angle difference| across a branch (radians),
    /// measured net of the transformer phase shift.
    pub angle_max: f64,
}

impl Default for ClassifyConfig {
    fn default() -> ClassifyConfig {
        ClassifyConfig {
            vm_low: 0.8,
            vm_high: 1.2,
            angle_max: std::f64::consts::FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolutionClass {
    HighVoltage,
    LowVoltage,
    AngleUnstable,
}

impl std::fmt::Display for SolutionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolutionClass::HighVoltage => "HighVoltage",
            SolutionClass::LowVoltage => "LowVoltage",
            SolutionClass::AngleUnstable => "AngleUnstable",
        })
    }
}

/// Classify a converged state: any bus outside the magnitude band marks the
/// low-voltage branch of the solution manifold; otherwise any branch
/// stretched past `angle_max` marks an angle-unstable point; the remainder
/// is the physical high-voltage solution.
pub fn classify_solution(
    net: &Network,
    idx: &IndexMap,
    state: &[f64],
    cfg: &ClassifyConfig,
) -> SolutionClass {
    for bus in 0..net.buses.len() {
        let vm = bus_vm(idx, state, bus);
        if vm < cfg.vm_low || vm > cfg.vm_high {
            return SolutionClass::LowVoltage;
        }
    }
    for br in &net.branches {
        let d = bus_va(idx, state, br.from) - bus_va(idx, state, br.to) - br.shift;
        let wrapped = d.sin().atan2(d.cos());
        if wrapped.abs() >= cfg.angle_max {
            return SolutionClass::AngleUnstable;
        }
    }
    SolutionClass::HighVoltage
}
