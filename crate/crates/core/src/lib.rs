//! Steady-state AC power flow on an equivalent split-circuit model.
//!
//! The network is posed as coupled real/imaginary sub-circuits over
//! rectangular voltage unknowns, so every device contributes linear(ized)
//! stamps to a sparse nodal system and Newton-Raphson becomes repeated
//! stamping plus a sparse LU solve. Robustness comes from three layers:
//!
//! * **voltage limiting** — per-iteration voltage steps are clamped to
//!   `dv_max` and boxed into `[v_min, v_max]`;
//! * **variable limiting** — a damping factor ζ scales the sensitive
//!   PV-generator derivative stamps, adapted from the observed step sizes;
//! * **Tx stepping** — a continuation that virtually shorts every series
//!   element (large parallel admittance, neutralized taps, shifts and
//!   shunts) at λ=1, where the solution is trivially near the setpoints,
//!   then relaxes λ→0 on an adaptive schedule, warm-starting each stage.
//!
//! Modules: [`network`] (model + indexing), [`sparse`]/[`lu`] (triplet
//! assembly, left-looking LU with partial pivoting, minimum-degree
//! ordering, condition estimation), [`stamps`] (device stamps and the
//! nonlinear residual), [`nr`] (damped Newton and solution
//! classification), [`homotopy`] (the continuation driver), [`case_io`]
//! (MATPOWER subset + native JSON cases, solution documents) and
//! [`harness`] (sweeps, comparisons, CSV emitters).

pub mod case_io;
pub mod harness;
pub mod homotopy;
pub mod lu;
pub mod network;
pub mod nr;
pub mod sparse;
pub mod stamps;

pub use case_io::{
    load_case, parse_case_json, parse_matpower, sig12, solution_document, to_network,
    write_matpower, write_solution, CaseError, LoadedCase, RawBranch, RawBus, RawCase, RawGen,
    SolutionDocument,
};
pub use harness::{
    compare_csv, compare_table, eq15_points, grid_points, iter_csv, jacobian_order, run_compare,
    run_sweep, stage_csv, sweep_csv, CompareResult, CompareRow, InitPoint, Method, SweepCell,
    SweepResult,
};
pub use homotopy::{
    next_lambda, solve_plain_nr, solve_plain_nr_cached, solve_tx_stepping,
    solve_tx_stepping_cached, trivial_start, HomotopySchedule, NextLambda, SolveReport,
    StageRecord,
};
pub use lu::{condition_estimate, factorize, factorize_csc, min_degree_order, Factors, LinearError};
pub use network::{
    build_index, series_admittance, validate, BigLoad, Branch, Bus, BusKind, Diagnostic,
    Generator, IndexMap, Load, Network, NetworkError, Shunt, VoltageControl,
};
pub use nr::{
    bus_va, bus_vm, classify_solution, flat_start, nr_step, solve_nr, uniform_polar_start,
    uniform_rect_start, update_zeta, ClassifyConfig, IterRecord, LuCache, NrConfig, NrOutcome,
    SolutionClass, SolveStatus,
};
pub use sparse::{CscMatrix, SparseSystem};
pub use stamps::{assemble_system, branch_blocks, residual, BranchBlocks, HomotopyConfig};
