//! Continuation driver: solve the network virtually shorted, then walk the
//! continuation parameter λ from 1 back to 0 with adaptive steps, warm
//! starting every stage from the last accepted solution.
//!
//! At λ=1 every series element is scaled by 1+γ (a near-short), taps and
//! phase shifts are flattened and shunts faded out, so the flat profile
//! dictated by the slack and the voltage setpoints is already nearly exact
//! and Newton converges trivially. Each λ reduction deforms the network back
//! toward the original; the final stage at λ=0 solves the real equations.

use crate::network::{IndexMap, Network};
use crate::nr::{
    flat_start, solve_nr_cached, IterRecord, LuCache, NrConfig, NrOutcome, SolveStatus,
};
use crate::stamps::{residual, HomotopyConfig};
use serde::Serialize;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomotopySchedule {
    /// First λ decrement taken after the shorted stage.
    pub step_init: f64,
    /// Declare divergence when the decrement shrinks below this.
    pub step_min: f64,
    /// Decrement multiplier after a failed stage.
    pub shrink: f64,
    /// Decrement multiplier after a quickly converged stage.
    pub grow: f64,
    /// Total stage-attempt budget (accepted + rejected).
    pub max_stages: usize,
    /// Series scaling at λ=1 is 1+γ.
    pub gamma: f64,
    /// Virtual conductance for remotely controlled bus pairs.
    pub g_ctrl: f64,
    /// Fade charging and shunts out toward λ=1.
    pub shunt_relax: bool,
}

impl Default for HomotopySchedule {
    fn default() -> HomotopySchedule {
        HomotopySchedule {
            step_init: 0.1,
            step_min: 1e-4,
            shrink: 0.5,
            grow: 2.0,
            max_stages: 200,
            gamma: 999.0,
            g_ctrl: 100.0,
            shunt_relax: true,
        }
    }
}

impl HomotopySchedule {
    /// Stamp-level view of this schedule at a given λ.
    pub fn level(&self, lambda: f64) -> HomotopyConfig {
        HomotopyConfig {
            lambda,
            gamma: self.gamma,
            g_ctrl: self.g_ctrl,
            shunt_relax: self.shunt_relax,
        }
    }
}

/// Decision taken after a stage attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NextLambda {
    /// Attempt the given λ next, with the (possibly adapted) decrement.
    Step { lambda: f64, dlam: f64 },
    /// λ=0 has been accepted; the continuation is complete.
    Done,
    /// The decrement underflowed `step_min`; give up.
    Underflow,
}

/// Pure schedule step. `lambda_good` is the λ of the last accepted stage;
/// `success`/`quick` describe the attempt just finished (quick means it used
/// under a quarter of the iteration budget).
pub fn next_lambda(
    lambda_good: f64,
    dlam: f64,
    success: bool,
    quick: bool,
    sched: &HomotopySchedule,
) -> NextLambda {
    if success {
        if lambda_good == 0.0 {
            return NextLambda::Done;
        }
        let grown = if quick { dlam * sched.grow } else { dlam };
        let d = grown.min(lambda_good);
        NextLambda::Step {
            lambda: (lambda_good - d).max(0.0),
            dlam: d,
        }
    } else {
        let d = dlam * sched.shrink;
        if d < sched.step_min {
            return NextLambda::Underflow;
        }
        NextLambda::Step {
            lambda: (lambda_good - d).max(0.0),
            dlam: d,
        }
    }
}

/// One attempted continuation stage, as written to the stage trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StageRecord {
    pub stage: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub max_residual: f64,
}

/// Outcome of a full solve (continuation or plain Newton).
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Accepted stages, λ strictly decreasing from 1 to the final level.
    pub stages: Vec<StageRecord>,
    /// Failed attempts (the schedule retried with a smaller decrement).
    pub rejected_stages: Vec<StageRecord>,
    pub total_iterations: usize,
    /// λ of the last accepted stage (0 when fully converged).
    pub final_lambda: f64,
    /// ‖F‖∞ at the final state, at the final λ.
    pub max_residual: f64,
    pub wall_ms: f64,
    /// Concatenated Newton traces of every attempt, in order.
    pub trace: Vec<IterRecord>,
    pub used_trivial_start: bool,
    /// ‖F‖∞ of the final state under the *original* (λ=0) equations.
    pub endpoint_residual: f64,
    pub final_state: Vec<f64>,
}

/// The exact solution of the fully shorted network: every bus sits at the
/// slack angle; controlled buses take their setpoint magnitude, everything
/// else the slack magnitude. Reactive and slack-current states start at 0.
pub fn trivial_start(net: &Network, idx: &IndexMap) -> Vec<f64> {
    let sb = &net.buses[net.slack_bus];
    let (sin_a, cos_a) = sb.angle_set.sin_cos();
    let mut x = vec![0.0; idx.n];
    for i in 0..idx.n_bus {
        x[idx.v_r(i)] = sb.v_set * cos_a;
        x[idx.v_i(i)] = sb.v_set * sin_a;
    }
    for c in &net.controls {
        x[idx.v_r(c.controlled)] = c.v_set * cos_a;
        x[idx.v_i(c.controlled)] = c.v_set * sin_a;
    }
    x[idx.v_r(net.slack_bus)] = sb.v_set * cos_a;
    x[idx.v_i(net.slack_bus)] = sb.v_set * sin_a;
    x
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn stage_record(stage: usize, lambda: f64, out: &NrOutcome) -> StageRecord {
    StageRecord {
        stage,
        lambda,
        iterations: out.iterations,
        status: out.status,
        max_residual: out.residual_inf,
    }
}

/// Continuation solve. `init` of `None` starts the shorted stage from
/// [`trivial_start`]; `Some` honors the caller's state instead.
pub fn solve_tx_stepping(
    net: &Network,
    idx: &IndexMap,
    init: Option<&[f64]>,
    sched: &HomotopySchedule,
    nr_cfg: &NrConfig,
) -> SolveReport {
    solve_tx_stepping_cached(net, idx, init, sched, nr_cfg, &mut LuCache::default())
}

/// [`solve_tx_stepping`] with a caller-owned factorization cache, so batch
/// drivers can compute the fill-reducing order once per network and share
/// it across solves (the Jacobian pattern is state- and λ-independent).
pub fn solve_tx_stepping_cached(
    net: &Network,
    idx: &IndexMap,
    init: Option<&[f64]>,
    sched: &HomotopySchedule,
    nr_cfg: &NrConfig,
    cache: &mut LuCache,
) -> SolveReport {
    let t0 = Instant::now();
    let used_trivial_start = init.is_none();
    let mut state = match init {
        Some(x) => x.to_vec(),
        None => trivial_start(net, idx),
    };
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut rejected_stages: Vec<StageRecord> = Vec::new();
    let mut trace: Vec<IterRecord> = Vec::new();
    let mut total_iterations = 0usize;

    let finish = |status: SolveStatus,
                  state: Vec<f64>,
                  final_lambda: f64,
                  max_residual: f64,
                  stages: Vec<StageRecord>,
                  rejected_stages: Vec<StageRecord>,
                  total_iterations: usize,
                  trace: Vec<IterRecord>| {
        let endpoint_residual = inf_norm(&residual(net, idx, &state, &sched.level(0.0)));
        SolveReport {
            status,
            stages,
            rejected_stages,
            total_iterations,
            final_lambda,
            max_residual,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            trace,
            used_trivial_start,
            endpoint_residual,
            final_state: state,
        }
    };

    // shorted stage: λ = 1 must hold, or the continuation has no anchor
    let out = solve_nr_cached(net, idx, &state, &sched.level(1.0), nr_cfg, cache);
    total_iterations += out.iterations;
    trace.extend_from_slice(&out.trace);
    let rec = stage_record(0, 1.0, &out);
    log::debug!(
        "stage 0: λ=1 {} in {} iterations (res {:.2e})",
        out.status,
        out.iterations,
        out.residual_inf
    );
    if out.status != SolveStatus::Converged {
        rejected_stages.push(rec);
        return finish(
            SolveStatus::Diverged,
            out.state,
            1.0,
            out.residual_inf,
            stages,
            rejected_stages,
            total_iterations,
            trace,
        );
    }
    stages.push(rec);
    state = out.state;
    let mut lambda_good = 1.0f64;
    let mut last_residual = out.residual_inf;
    let mut dlam = sched.step_init;
    let mut lambda_try = (lambda_good - dlam).max(0.0);

    loop {
        if stages.len() + rejected_stages.len() >= sched.max_stages {
            return finish(
                SolveStatus::MaxIterations,
                state,
                lambda_good,
                last_residual,
                stages,
                rejected_stages,
                total_iterations,
                trace,
            );
        }
        let out = solve_nr_cached(net, idx, &state, &sched.level(lambda_try), nr_cfg, cache);
        total_iterations += out.iterations;
        trace.extend_from_slice(&out.trace);
        let rec = stage_record(stages.len() + rejected_stages.len(), lambda_try, &out);
        let success = out.status == SolveStatus::Converged;
        let quick = success && out.iterations * 4 < nr_cfg.max_iter;
        log::debug!(
            "stage {}: λ={:.5} {} in {} iterations (res {:.2e}, Δλ {:.5})",
            rec.stage,
            lambda_try,
            out.status,
            out.iterations,
            out.residual_inf,
            dlam
        );
        if success {
            stages.push(rec);
            state = out.state;
            lambda_good = lambda_try;
            last_residual = out.residual_inf;
        } else {
            rejected_stages.push(rec);
        }
        match next_lambda(lambda_good, dlam, success, quick, sched) {
            NextLambda::Done => {
                return finish(
                    SolveStatus::Converged,
                    state,
                    0.0,
                    last_residual,
                    stages,
                    rejected_stages,
                    total_iterations,
                    trace,
                );
            }
            NextLambda::Underflow => {
                return finish(
                    SolveStatus::Diverged,
                    state,
                    lambda_good,
                    last_residual,
                    stages,
                    rejected_stages,
                    total_iterations,
                    trace,
                );
            }
            NextLambda::Step { lambda, dlam: d } => {
                lambda_try = lambda;
                dlam = d;
            }
        }
    }
}

/// Single Newton solve of the original (λ=0) equations, reported in the same
/// shape as the continuation for uniform downstream handling. `init` of
/// `None` starts flat.
pub fn solve_plain_nr(
    net: &Network,
    idx: &IndexMap,
    init: Option<&[f64]>,
    nr_cfg: &NrConfig,
) -> SolveReport {
    solve_plain_nr_cached(net, idx, init, nr_cfg, &mut LuCache::default())
}

/// [`solve_plain_nr`] with a caller-owned factorization cache; see
/// [`solve_tx_stepping_cached`].
pub fn solve_plain_nr_cached(
    net: &Network,
    idx: &IndexMap,
    init: Option<&[f64]>,
    nr_cfg: &NrConfig,
    cache: &mut LuCache,
) -> SolveReport {
    let t0 = Instant::now();
    let state0 = match init {
        Some(x) => x.to_vec(),
        None => flat_start(idx),
    };
    let h = HomotopyConfig::at_lambda(0.0);
    let out = solve_nr_cached(net, idx, &state0, &h, nr_cfg, cache);
    let rec = stage_record(0, 0.0, &out);
    let (stages, rejected_stages) = if out.status == SolveStatus::Converged {
        (vec![rec], Vec::new())
    } else {
        (Vec::new(), vec![rec])
    };
    SolveReport {
        status: out.status,
        stages,
        rejected_stages,
        total_iterations: out.iterations,
        final_lambda: 0.0,
        max_residual: out.residual_inf,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        trace: out.trace.clone(),
        used_trivial_start: false,
        endpoint_residual: out.residual_inf,
        final_state: out.state,
    }
}
