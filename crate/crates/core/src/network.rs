//! Per-unit network model: buses, branches, generators, loads, shunts,
//! voltage-control records, plus unknown-vector indexing and topology checks.
//!
//! Everything here is immutable after construction and safe to share across
//! concurrent solves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Role of a bus in the power-flow problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    /// Fixed complex voltage; injection currents are solved unknowns.
    Slack,
    /// Fixed real power and controlled voltage magnitude; Q is unknown.
    Pv,
    /// Fixed real and reactive power draw.
    Pq,
}

/// A single bus. `v_set` is meaningful for `Slack` and `Pv` buses,
/// `angle_set` (radians) only for the slack.
#[derive(Debug, Clone, Copy)]
pub struct Bus {
    pub kind: BusKind,
    pub v_set: f64,
    pub angle_set: f64,
}

/// A series branch (line or transformer) in pi form. `tap` is the off-nominal
/// turns ratio on the from side, `shift` the phase shift in radians, `b_ch`
/// the total line-charging susceptance. `g_series`/`b_series` cache the
/// series admittance 1/(r + jx).
#[derive(Debug, Clone, Copy)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_ch: f64,
    pub tap: f64,
    pub shift: f64,
    pub g_series: f64,
    pub b_series: f64,
}

/// A generator holding fixed real power `p_g` and regulating the voltage
/// magnitude of `controlled_bus` (its own bus unless remote) to `v_set`.
/// Its reactive output is the solver unknown owned by `control`.
#[derive(Debug, Clone, Copy)]
pub struct Generator {
    pub bus: usize,
    pub p_g: f64,
    pub v_set: f64,
    pub controlled_bus: usize,
    /// Index into `Network::controls` of the constraint owning this Q unknown.
    pub control: usize,
}

/// Linear load parameters: constant admittance `g_b + j b_b` plus a constant
/// real-axis current draw `i_b`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BigLoad {
    pub g_b: f64,
    pub b_b: f64,
    pub i_b: f64,
}

/// A load: either constant power (`p_l`, `q_l`) or, when `big` is set, the
/// linear form. The two are mutually exclusive.
#[derive(Debug, Clone, Copy)]
pub struct Load {
    pub bus: usize,
    pub p_l: f64,
    pub q_l: f64,
    pub big: Option<BigLoad>,
}

/// A fixed shunt admittance `g_sh + j b_sh` at a bus.
#[derive(Debug, Clone, Copy)]
pub struct Shunt {
    pub bus: usize,
    pub g_sh: f64,
    pub b_sh: f64,
}

/// Voltage-magnitude control: the generator at `controlling` holds bus
/// `controlled` at `v_set` through its reactive-power unknown. When the two
/// buses differ the homotopy adds a virtual conductance between them.
#[derive(Debug, Clone, Copy)]
pub struct VoltageControl {
    pub controlling: usize,
    pub controlled: usize,
    pub v_set: f64,
    /// Index into `Network::gens` of the owning generator.
    pub gen: usize,
}

/// Immutable per-unit description of the whole system.
#[derive(Debug, Clone)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub gens: Vec<Generator>,
    pub loads: Vec<Load>,
    pub shunts: Vec<Shunt>,
    pub controls: Vec<VoltageControl>,
    pub slack_bus: usize,
    /// External bus identifiers (case-file numbering), index-aligned with
    /// `buses`. Used only for reporting.
    pub bus_ids: Vec<i64>,
}

/// Positions of the unknowns in the solution vector. Layout is bus-major:
/// interleaved (V_R, V_I) per bus, then one Q per voltage control, then the
/// two slack injection currents. Equation rows mirror the columns: KCL rows
/// sit at the voltage positions, control rows at the Q positions, and the
/// slack-voltage constraint rows at the slack-current positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexMap {
    pub n_bus: usize,
    pub n_ctrl: usize,
    pub n: usize,
}

impl IndexMap {
    #[inline]
    pub fn v_r(&self, bus: usize) -> usize {
        2 * bus
    }
    #[inline]
    pub fn v_i(&self, bus: usize) -> usize {
        2 * bus + 1
    }
    #[inline]
    pub fn q_g(&self, ctrl: usize) -> usize {
        2 * self.n_bus + ctrl
    }
    #[inline]
    pub fn slack_ir(&self) -> usize {
        2 * self.n_bus + self.n_ctrl
    }
    #[inline]
    pub fn slack_ii(&self) -> usize {
        2 * self.n_bus + self.n_ctrl + 1
    }
    /// Real-part KCL row of a bus.
    #[inline]
    pub fn kcl_r(&self, bus: usize) -> usize {
        2 * bus
    }
    /// Imaginary-part KCL row of a bus.
    #[inline]
    pub fn kcl_i(&self, bus: usize) -> usize {
        2 * bus + 1
    }
    /// Constraint row of a voltage control.
    #[inline]
    pub fn row_ctrl(&self, ctrl: usize) -> usize {
        2 * self.n_bus + ctrl
    }
    /// Row forcing V_R at the slack.
    #[inline]
    pub fn row_slack_vr(&self) -> usize {
        2 * self.n_bus + self.n_ctrl
    }
    /// Row forcing V_I at the slack.
    #[inline]
    pub fn row_slack_vi(&self) -> usize {
        2 * self.n_bus + self.n_ctrl + 1
    }
    /// True for vector positions that hold a voltage component.
    #[inline]
    pub fn is_voltage(&self, pos: usize) -> bool {
        pos < 2 * self.n_bus
    }
}

/// Errors raised while constructing network elements.
#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("branch {from}-{to} has zero series impedance")]
    ZeroImpedanceBranch { from: usize, to: usize },
}

/// Structural problems reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    MultipleSlack { buses: Vec<usize> },
    NoSlack,
    ZeroImpedanceBranch { branch: usize },
    /// A connected component with neither the slack nor any PV bus.
    IslandWithoutSource { buses: Vec<usize> },
    BadSetpoint { bus: usize, v_set: f64 },
    ElementIndexOutOfRange { element: &'static str, index: usize },
    PvWithoutControl { bus: usize },
    DuplicateControl { bus: usize },
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diagnostic::MultipleSlack { buses } => {
                write!(f, "more than one slack bus: {buses:?}")
            }
            Diagnostic::NoSlack => write!(f, "no slack bus"),
            Diagnostic::ZeroImpedanceBranch { branch } => {
                write!(f, "branch {branch} has zero series impedance")
            }
            Diagnostic::IslandWithoutSource { buses } => {
                write!(f, "island without slack or PV bus: {} buses", buses.len())
            }
            Diagnostic::BadSetpoint { bus, v_set } => {
                write!(f, "bus {bus} has non-positive setpoint {v_set}")
            }
            Diagnostic::ElementIndexOutOfRange { element, index } => {
                write!(f, "{element} {index} references a bus out of range")
            }
            Diagnostic::PvWithoutControl { bus } => {
                write!(f, "PV bus {bus} has no voltage control")
            }
            Diagnostic::DuplicateControl { bus } => {
                write!(f, "bus {bus} is targeted by more than one voltage control")
            }
        }
    }
}

/// Series admittance of an impedance r + jx:
/// G = r/(r² + x²), B = −x/(r² + x²), i.e. (G + jB)(r + jx) = 1.
pub fn series_admittance(r: f64, x: f64) -> Result<(f64, f64), NetworkError> {
    let d = r * r + x * x;
    if d == 0.0 {
        return Err(NetworkError::ZeroImpedanceBranch { from: 0, to: 0 });
    }
    Ok((r / d, -x / d))
}

impl Branch {
    /// Build a branch, caching the series admittance. `shift` in radians.
    pub fn new(
        from: usize,
        to: usize,
        r: f64,
        x: f64,
        b_ch: f64,
        tap: f64,
        shift: f64,
    ) -> Result<Branch, NetworkError> {
        let (g, b) =
            series_admittance(r, x).map_err(|_| NetworkError::ZeroImpedanceBranch { from, to })?;
        Ok(Branch {
            from,
            to,
            r,
            x,
            b_ch,
            tap,
            shift,
            g_series: g,
            b_series: b,
        })
    }
}

/// Deterministic unknown indexing for a network.
pub fn build_index(net: &Network) -> IndexMap {
    let n_bus = net.buses.len();
    let n_ctrl = net.controls.len();
    IndexMap {
        n_bus,
        n_ctrl,
        n: 2 * n_bus + n_ctrl + 2,
    }
}

/// Structural validation. Returns an empty list iff the network satisfies
/// the model invariants; diagnostics never panic.
pub fn validate(net: &Network) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let nb = net.buses.len();

    let slacks: Vec<usize> = net
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.kind == BusKind::Slack)
        .map(|(i, _)| i)
        .collect();
    let n_slack = slacks.len();
    if slacks.is_empty() {
        out.push(Diagnostic::NoSlack);
    } else if slacks.len() > 1 {
        out.push(Diagnostic::MultipleSlack { buses: slacks });
    }

    for (i, b) in net.buses.iter().enumerate() {
        if b.kind != BusKind::Pq && !(b.v_set > 0.0) {
            out.push(Diagnostic::BadSetpoint {
                bus: i,
                v_set: b.v_set,
            });
        }
    }

    for (i, br) in net.branches.iter().enumerate() {
        if br.from >= nb || br.to >= nb {
            out.push(Diagnostic::ElementIndexOutOfRange {
                element: "branch",
                index: i,
            });
        } else if br.r == 0.0 && br.x == 0.0 {
            out.push(Diagnostic::ZeroImpedanceBranch { branch: i });
        }
    }
    for (i, g) in net.gens.iter().enumerate() {
        if g.bus >= nb || g.controlled_bus >= nb {
            out.push(Diagnostic::ElementIndexOutOfRange {
                element: "generator",
                index: i,
            });
        }
    }
    for (i, l) in net.loads.iter().enumerate() {
        if l.bus >= nb {
            out.push(Diagnostic::ElementIndexOutOfRange {
                element: "load",
                index: i,
            });
        }
    }
    for (i, s) in net.shunts.iter().enumerate() {
        if s.bus >= nb {
            out.push(Diagnostic::ElementIndexOutOfRange {
                element: "shunt",
                index: i,
            });
        }
    }

    // At most one control may pin any bus, and every PV bus must drive one.
    // The two sides differ for remote control: the machine sits on the PV
    // bus while the pinned magnitude belongs to the controlled bus.
    let mut pinned_count = vec![0usize; nb];
    let mut drives_count = vec![0usize; nb];
    for c in &net.controls {
        if c.controlled >= nb || c.controlling >= nb {
            out.push(Diagnostic::ElementIndexOutOfRange {
                element: "control",
                index: c.gen,
            });
            continue;
        }
        pinned_count[c.controlled] += 1;
        drives_count[c.controlling] += 1;
    }
    for (i, b) in net.buses.iter().enumerate() {
        if b.kind == BusKind::Pv && drives_count[i] == 0 {
            out.push(Diagnostic::PvWithoutControl { bus: i });
        }
        if pinned_count[i] > 1 {
            out.push(Diagnostic::DuplicateControl { bus: i });
        }
    }

    // Island scan over branches: flag any component with neither slack nor PV.
    if nb > 0 && n_slack == 1 {
        let mut comp = vec![usize::MAX; nb];
        let mut adj = vec![Vec::new(); nb];
        for br in &net.branches {
            if br.from < nb && br.to < nb {
                adj[br.from].push(br.to);
                adj[br.to].push(br.from);
            }
        }
        let mut stack = Vec::new();
        let mut n_comp = 0;
        for start in 0..nb {
            if comp[start] != usize::MAX {
                continue;
            }
            stack.push(start);
            comp[start] = n_comp;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = n_comp;
                        stack.push(w);
                    }
                }
            }
            n_comp += 1;
        }
        let mut has_source = vec![false; n_comp];
        for (i, b) in net.buses.iter().enumerate() {
            if b.kind != BusKind::Pq {
                has_source[comp[i]] = true;
            }
        }
        for c in 0..n_comp {
            if !has_source[c] {
                out.push(Diagnostic::IslandWithoutSource {
                    buses: (0..nb).filter(|&i| comp[i] == c).collect(),
                });
            }
        }
    }

    out
}

impl Network {
    /// Copy of the network with the generators at the given bus indices (and
    /// their controls) removed; affected PV buses without a remaining control
    /// degrade to PQ. Supports N-k what-if runs.
    pub fn without_gens_at(&self, bus_indices: &[usize]) -> Network {
        let mut net = self.clone();
        let drop: std::collections::HashSet<usize> = bus_indices.iter().copied().collect();
        let keep: Vec<Generator> = net
            .gens
            .iter()
            .copied()
            .filter(|g| !drop.contains(&g.bus))
            .collect();
        let mut controls = Vec::new();
        let mut gens = Vec::new();
        for g in keep {
            let c = net.controls[g.control];
            let ctrl_idx = controls.len();
            controls.push(VoltageControl {
                gen: gens.len(),
                ..c
            });
            gens.push(Generator {
                control: ctrl_idx,
                ..g
            });
        }
        let still_controlling: std::collections::HashSet<usize> =
            controls.iter().map(|c| c.controlling).collect();
        for (i, b) in net.buses.iter_mut().enumerate() {
            if b.kind == BusKind::Pv && !still_controlling.contains(&i) {
                b.kind = BusKind::Pq;
            }
        }
        net.gens = gens;
        net.controls = controls;
        net
    }
}

#[cfg(test)]
pub(crate) fn bus(kind: BusKind, v_set: f64) -> Bus {
    Bus {
        kind,
        v_set,
        angle_set: 0.0,
    }
}

/// Two-bus test fixture: slack + PQ load over a pure reactance.
#[cfg(test)]
pub(crate) fn two_bus() -> Network {
    Network {
        buses: vec![bus(BusKind::Slack, 1.0), bus(BusKind::Pq, 0.0)],
        branches: vec![Branch::new(0, 1, 0.0, 0.1, 0.0, 1.0, 0.0).unwrap()],
        gens: vec![],
        loads: vec![Load {
            bus: 1,
            p_l: 0.1,
            q_l: 0.0,
            big: None,
        }],
        shunts: vec![],
        controls: vec![],
        slack_bus: 0,
        bus_ids: vec![1, 2],
    }
}
