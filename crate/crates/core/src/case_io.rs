//! Case ingestion and solution serialization.
//!
//! Two input formats are supported: the MATPOWER `.m` table subset
//! (baseMVA / bus / gen / branch; everything else ignored) and a native
//! `.json` format mirroring [`Network`] in per-unit quantities, convenient
//! for hand-built test cases. Solution output is a versioned JSON document
//! rounded to 12 significant digits so identical inputs serialize
//! byte-identically.

use crate::homotopy::SolveReport;
use crate::network::{
    validate, BigLoad, Branch, Bus, BusKind, Generator, IndexMap, Load, Network, Shunt,
    VoltageControl,
};
use crate::nr::{bus_va, bus_vm, classify_solution, ClassifyConfig, SolveStatus};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed {section} table, row {row}: {detail}")]
    MalformedTable {
        section: &'static str,
        row: usize,
        detail: String,
    },
    #[error("missing section mpc.{section}")]
    MissingSection { section: &'static str },
    #[error("duplicate bus id {id}")]
    DuplicateBusId { id: i64 },
    #[error("no slack bus (type 3) in case")]
    NoSlackBus,
    #[error("{element} references unknown bus {id}")]
    UnknownBusReference { element: &'static str, id: i64 },
    #[error("non-positive system base {base} MVA")]
    NonPositiveBase { base: f64 },
    #[error("island without slack or PV source: buses {buses:?}")]
    IslandWithoutSlack { buses: Vec<i64> },
    #[error("bad case json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported case extension: {path} (expected .m or .json)")]
    UnsupportedExtension { path: String },
    #[error("invalid network: {details}")]
    Invalid { details: String },
}

impl CaseError {
    /// True for semantic (network-level) failures, false for syntactic or
    /// I/O failures; drives the CLI's exit-code split.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            CaseError::NonPositiveBase { .. }
                | CaseError::IslandWithoutSlack { .. }
                | CaseError::Invalid { .. }
        )
    }
}

/// Verbatim capture of the MATPOWER tables (first 13/10/11 columns of
/// bus/gen/branch; trailing columns ignored). Units are the file's own:
/// MW, MVAr, degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<RawBus>,
    pub gens: Vec<RawGen>,
    pub branches: Vec<RawBranch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawBus {
    pub id: i64,
    /// 1 = PQ, 2 = PV, 3 = slack (4, isolated, is treated as PQ).
    pub bus_type: i32,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub area: f64,
    pub vm: f64,
    pub va_deg: f64,
    pub base_kv: f64,
    pub zone: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawGen {
    pub bus: i64,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub mbase: f64,
    pub status: i32,
    pub pmax: f64,
    pub pmin: f64,
    /// Remote-controlled bus id; only expressible in the native format.
    pub controlled: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawBranch {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    pub tap: f64,
    pub shift_deg: f64,
    pub status: i32,
}

fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        match line.find('%') {
            Some(p) => out.push_str(&line[..p]),
            None => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

/// Locate `mpc.<key> =` and return the text following the `=`. Keys that
/// merely share a prefix (`mpc.bus` vs `mpc.bus_name`) do not match.
fn find_assignment<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("mpc.{key}");
    let mut from = 0;
    while let Some(p) = text[from..].find(&pat) {
        let after = from + p + pat.len();
        let rest = &text[after..];
        let boundary = rest
            .chars()
            .next()
            .map(|c| !c.is_alphanumeric() && c != '_')
            .unwrap_or(false);
        if boundary {
            let t = rest.trim_start();
            if let Some(v) = t.strip_prefix('=') {
                return Some(v);
            }
        }
        from = after;
    }
    None
}

fn parse_table(
    text: &str,
    key: &'static str,
    min_cols: usize,
) -> Result<Vec<Vec<f64>>, CaseError> {
    let after_eq =
        find_assignment(text, key).ok_or(CaseError::MissingSection { section: key })?;
    let t = after_eq.trim_start();
    let body = t
        .strip_prefix('[')
        .ok_or_else(|| CaseError::MalformedTable {
            section: key,
            row: 0,
            detail: "expected '[' after '='".into(),
        })?;
    let end = body.find(']').ok_or_else(|| CaseError::MalformedTable {
        section: key,
        row: 0,
        detail: "unterminated table".into(),
    })?;
    let mut rows = Vec::new();
    for (ri, chunk) in body[..end].split(';').enumerate() {
        let c = chunk.trim();
        if c.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(min_cols);
        for tok in c.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| CaseError::MalformedTable {
                section: key,
                row: ri + 1,
                detail: format!("bad number {tok:?}"),
            })?;
            row.push(v);
        }
        if row.len() < min_cols {
            return Err(CaseError::MalformedTable {
                section: key,
                row: ri + 1,
                detail: format!("{} columns, need at least {min_cols}", row.len()),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Parse the MATPOWER `.m` subset: `mpc.baseMVA`, `mpc.bus`, `mpc.gen`,
/// `mpc.branch`. Comments and unrelated assignments are ignored.
/// Referential integrity (bus ids unique, endpoints defined, a slack
/// present) is checked here; unit conversion happens in [`to_network`].
pub fn parse_matpower(text: &str) -> Result<RawCase, CaseError> {
    let clean = strip_comments(text);

    let mut name = String::from("case");
    for line in clean.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                name = rest[eq + 1..].trim().trim_end_matches(';').to_string();
            }
            break;
        }
    }

    let base_text =
        find_assignment(&clean, "baseMVA").ok_or(CaseError::MissingSection { section: "baseMVA" })?;
    let base_tok = base_text
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_string();
    let base_mva: f64 = base_tok.parse().map_err(|_| CaseError::MalformedTable {
        section: "baseMVA",
        row: 1,
        detail: format!("bad number {base_tok:?}"),
    })?;

    let bus_rows = parse_table(&clean, "bus", 13)?;
    let gen_rows = parse_table(&clean, "gen", 10)?;
    let branch_rows = parse_table(&clean, "branch", 11)?;

    let buses: Vec<RawBus> = bus_rows
        .iter()
        .map(|r| RawBus {
            id: r[0] as i64,
            bus_type: r[1] as i32,
            pd: r[2],
            qd: r[3],
            gs: r[4],
            bs: r[5],
            area: r[6],
            vm: r[7],
            va_deg: r[8],
            base_kv: r[9],
            zone: r[10],
            vmax: r[11],
            vmin: r[12],
        })
        .collect();
    let mut gens: Vec<RawGen> = gen_rows
        .iter()
        .map(|r| RawGen {
            bus: r[0] as i64,
            pg: r[1],
            qg: r[2],
            qmax: r[3],
            qmin: r[4],
            vg: r[5],
            mbase: r[6],
            status: r[7] as i32,
            pmax: r[8],
            pmin: r[9],
            controlled: None,
        })
        .collect();
    let branches: Vec<RawBranch> = branch_rows
        .iter()
        .map(|r| RawBranch {
            from: r[0] as i64,
            to: r[1] as i64,
            r: r[2],
            x: r[3],
            b: r[4],
            rate_a: r[5],
            rate_b: r[6],
            rate_c: r[7],
            tap: r[8],
            shift_deg: r[9],
            status: r[10] as i32,
        })
        .collect();

    let mut seen: HashMap<i64, ()> = HashMap::with_capacity(buses.len());
    for b in &buses {
        if seen.insert(b.id, ()).is_some() {
            return Err(CaseError::DuplicateBusId { id: b.id });
        }
    }
    for g in &gens {
        if !seen.contains_key(&g.bus) {
            return Err(CaseError::UnknownBusReference {
                element: "generator",
                id: g.bus,
            });
        }
    }
    for br in &branches {
        for id in [br.from, br.to] {
            if !seen.contains_key(&id) {
                return Err(CaseError::UnknownBusReference {
                    element: "branch",
                    id,
                });
            }
        }
    }
    if !buses.iter().any(|b| b.bus_type == 3) {
        return Err(CaseError::NoSlackBus);
    }

    // a slack bus with no machine gets an implicit zero-output one, so the
    // gen table always carries the slack voltage source
    for b in buses.iter().filter(|b| b.bus_type == 3) {
        if !gens.iter().any(|g| g.bus == b.id && g.status > 0) {
            gens.push(RawGen {
                bus: b.id,
                pg: 0.0,
                qg: 0.0,
                qmax: 0.0,
                qmin: 0.0,
                vg: if b.vm > 0.0 { b.vm } else { 1.0 },
                mbase: base_mva,
                status: 1,
                pmax: 0.0,
                pmin: 0.0,
                controlled: None,
            });
        }
    }

    Ok(RawCase {
        name,
        base_mva,
        buses,
        gens,
        branches,
    })
}

/// Serialize a [`RawCase`] back to MATPOWER text. Numbers use Rust's
/// shortest round-trip formatting, so parse ∘ write ∘ parse is the identity
/// on every captured field.
pub fn write_matpower(raw: &RawCase) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {}", raw.name);
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", raw.base_mva);
    let _ = writeln!(s, "mpc.bus = [");
    for b in &raw.buses {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            b.id, b.bus_type, b.pd, b.qd, b.gs, b.bs, b.area, b.vm, b.va_deg, b.base_kv, b.zone,
            b.vmax, b.vmin
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &raw.gens {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus, g.pg, g.qg, g.qmax, g.qmin, g.vg, g.mbase, g.status, g.pmax, g.pmin
        );
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "mpc.branch = [");
    for b in &raw.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            b.from, b.to, b.r, b.x, b.b, b.rate_a, b.rate_b, b.rate_c, b.tap, b.shift_deg,
            b.status
        );
    }
    let _ = writeln!(s, "];");
    s
}

/// Island scan plus structural validation, shared by both ingestion paths.
fn finalize(net: Network) -> Result<Network, CaseError> {
    let nb = net.buses.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for br in &net.branches {
        adj[br.from].push(br.to);
        adj[br.to].push(br.from);
    }
    let mut comp = vec![usize::MAX; nb];
    let mut n_comp = 0;
    let mut stack = Vec::new();
    for start in 0..nb {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = n_comp;
        stack.push(start);
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
            return Err(CaseError::IslandWithoutSlack {
                buses: (0..nb)
                    .filter(|&i| comp[i] == c)
                    .map(|i| net.bus_ids[i])
                    .collect(),
            });
        }
    }
    let diags = validate(&net);
    if !diags.is_empty() {
        let details = diags
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(CaseError::Invalid { details });
    }
    Ok(net)
}

/// Convert a parsed case to the per-unit [`Network`]: MW/MVAr divided by
/// the system base, shunts to pu admittance, tap 0 normalized to 1, phase
/// shift to radians, remote-control pairs extracted, co-located generators
/// aggregated, out-of-service elements dropped.
pub fn to_network(raw: &RawCase) -> Result<Network, CaseError> {
    if !(raw.base_mva > 0.0) {
        return Err(CaseError::NonPositiveBase { base: raw.base_mva });
    }
    let base = raw.base_mva;
    let nb = raw.buses.len();

    let mut index_of: HashMap<i64, usize> = HashMap::with_capacity(nb);
    for (i, b) in raw.buses.iter().enumerate() {
        if index_of.insert(b.id, i).is_some() {
            return Err(CaseError::DuplicateBusId { id: b.id });
        }
    }
    let bus_of = |id: i64, element: &'static str| -> Result<usize, CaseError> {
        index_of
            .get(&id)
            .copied()
            .ok_or(CaseError::UnknownBusReference { element, id })
    };

    // generators grouped by bus, in-service only
    let mut gens_at: Vec<Vec<&RawGen>> = vec![Vec::new(); nb];
    for g in raw.gens.iter().filter(|g| g.status > 0) {
        gens_at[bus_of(g.bus, "generator")?].push(g);
    }

    // effective kinds: the type column, with PV buses lacking an in-service
    // machine degraded to PQ (MATPOWER convention)
    let slack_buses: Vec<usize> = raw
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.bus_type == 3)
        .map(|(i, _)| i)
        .collect();
    if slack_buses.is_empty() {
        return Err(CaseError::NoSlackBus);
    }
    if slack_buses.len() > 1 {
        return Err(CaseError::Invalid {
            details: format!(
                "multiple slack buses: {:?}",
                slack_buses.iter().map(|&i| raw.buses[i].id).collect::<Vec<_>>()
            ),
        });
    }
    let slack = slack_buses[0];

    let mut kinds = vec![BusKind::Pq; nb];
    kinds[slack] = BusKind::Slack;
    for (i, b) in raw.buses.iter().enumerate() {
        if b.bus_type == 2 {
            if gens_at[i].is_empty() {
                log::debug!("bus {}: PV without an in-service generator, treated as PQ", b.id);
            } else {
                kinds[i] = BusKind::Pv;
            }
        }
    }

    let mut buses = Vec::with_capacity(nb);
    for (i, rb) in raw.buses.iter().enumerate() {
        let v_set = match kinds[i] {
            BusKind::Slack | BusKind::Pv => {
                let vg = gens_at[i].first().map(|g| g.vg).unwrap_or(rb.vm);
                if vg > 0.0 {
                    vg
                } else {
                    1.0
                }
            }
            BusKind::Pq => rb.vm,
        };
        buses.push(Bus {
            kind: kinds[i],
            v_set,
            angle_set: if kinds[i] == BusKind::Slack {
                rb.va_deg.to_radians()
            } else {
                0.0
            },
        });
    }

    let mut loads: Vec<Load> = Vec::new();
    let mut load_at: Vec<Option<usize>> = vec![None; nb];
    for (i, rb) in raw.buses.iter().enumerate() {
        if rb.pd != 0.0 || rb.qd != 0.0 {
            load_at[i] = Some(loads.len());
            loads.push(Load {
                bus: i,
                p_l: rb.pd / base,
                q_l: rb.qd / base,
                big: None,
            });
        }
    }

    let mut shunts = Vec::new();
    for (i, rb) in raw.buses.iter().enumerate() {
        if rb.gs != 0.0 || rb.bs != 0.0 {
            shunts.push(Shunt {
                bus: i,
                g_sh: rb.gs / base,
                b_sh: rb.bs / base,
            });
        }
    }

    let mut gens = Vec::new();
    let mut controls = Vec::new();
    for i in 0..nb {
        if gens_at[i].is_empty() {
            continue;
        }
        match kinds[i] {
            BusKind::Slack => {
                // the slack stamp supplies the bus; machine output is implied
            }
            BusKind::Pv => {
                let first = gens_at[i][0];
                let p_g: f64 = gens_at[i].iter().map(|g| g.pg).sum::<f64>() / base;
                if gens_at[i].iter().any(|g| (g.vg - first.vg).abs() > 1e-9) {
                    log::warn!(
                        "bus {}: co-located generators disagree on Vg; using {}",
                        raw.buses[i].id,
                        first.vg
                    );
                }
                let controlled = match first.controlled {
                    Some(id) => bus_of(id, "control")?,
                    None => i,
                };
                let v_set = buses[i].v_set;
                gens.push(Generator {
                    bus: i,
                    p_g,
                    v_set,
                    controlled_bus: controlled,
                    control: controls.len(),
                });
                controls.push(VoltageControl {
                    controlling: i,
                    controlled,
                    v_set,
                    gen: gens.len() - 1,
                });
            }
            BusKind::Pq => {
                // machine on a PQ-typed bus: fixed P and Q, i.e. negative load
                let pg: f64 = gens_at[i].iter().map(|g| g.pg).sum::<f64>() / base;
                let qg: f64 = gens_at[i].iter().map(|g| g.qg).sum::<f64>() / base;
                log::warn!(
                    "bus {}: generator on a PQ bus folded into the load as fixed injection",
                    raw.buses[i].id
                );
                match load_at[i] {
                    Some(li) => {
                        loads[li].p_l -= pg;
                        loads[li].q_l -= qg;
                    }
                    None => loads.push(Load {
                        bus: i,
                        p_l: -pg,
                        q_l: -qg,
                        big: None,
                    }),
                }
            }
        }
    }

    let mut branches = Vec::new();
    for rb in raw.branches.iter().filter(|b| b.status > 0) {
        let from = bus_of(rb.from, "branch")?;
        let to = bus_of(rb.to, "branch")?;
        let tap = if rb.tap == 0.0 { 1.0 } else { rb.tap };
        let br = Branch::new(from, to, rb.r, rb.x, rb.b, tap, rb.shift_deg.to_radians())
            .map_err(|e| CaseError::Invalid {
                details: e.to_string(),
            })?;
        branches.push(br);
    }

    finalize(Network {
        buses,
        branches,
        gens,
        loads,
        shunts,
        controls,
        slack_bus: slack,
        bus_ids: raw.buses.iter().map(|b| b.id).collect(),
    })
}

// ---------------------------------------------------------------------------
// native JSON case format

fn default_tap() -> f64 {
    1.0
}
fn default_vset() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
struct JsonCase {
    #[serde(default)]
    format: Option<u32>,
    #[serde(default)]
    #[allow(dead_code)]
    name: String,
    buses: Vec<JsonBus>,
    #[serde(default)]
    branches: Vec<JsonBranch>,
    #[serde(default)]
    gens: Vec<JsonGen>,
    #[serde(default)]
    loads: Vec<JsonLoad>,
    #[serde(default)]
    shunts: Vec<JsonShunt>,
}

#[derive(Debug, Deserialize)]
struct JsonBus {
    id: i64,
    kind: BusKind,
    #[serde(default = "default_vset")]
    v_set: f64,
    #[serde(default)]
    angle_set_deg: f64,
}

#[derive(Debug, Deserialize)]
struct JsonBranch {
    from: i64,
    to: i64,
    #[serde(default)]
    r: f64,
    x: f64,
    #[serde(default)]
    b_ch: f64,
    #[serde(default = "default_tap")]
    tap: f64,
    #[serde(default)]
    shift_deg: f64,
}

#[derive(Debug, Deserialize)]
struct JsonGen {
    bus: i64,
    #[serde(default)]
    p_g: f64,
    #[serde(default = "default_vset")]
    v_set: f64,
    #[serde(default)]
    controlled_bus: Option<i64>,
}

#[derive(Debug, Deserialize)]
struct JsonLoad {
    bus: i64,
    #[serde(default)]
    p_l: f64,
    #[serde(default)]
    q_l: f64,
    #[serde(default)]
    big: Option<JsonBig>,
}

#[derive(Debug, Deserialize)]
struct JsonBig {
    #[serde(default)]
    g_b: f64,
    #[serde(default)]
    b_b: f64,
    #[serde(default)]
    i_b: f64,
}

#[derive(Debug, Deserialize)]
struct JsonShunt {
    bus: i64,
    #[serde(default)]
    g_sh: f64,
    #[serde(default)]
    b_sh: f64,
}

/// Parse the native per-unit JSON case format.
pub fn parse_case_json(text: &str) -> Result<Network, CaseError> {
    let jc: JsonCase = serde_json::from_str(text)?;
    if let Some(f) = jc.format {
        if f != 1 {
            return Err(CaseError::Invalid {
                details: format!("unsupported case format {f}"),
            });
        }
    }
    let nb = jc.buses.len();
    let mut index_of: HashMap<i64, usize> = HashMap::with_capacity(nb);
    for (i, b) in jc.buses.iter().enumerate() {
        if index_of.insert(b.id, i).is_some() {
            return Err(CaseError::DuplicateBusId { id: b.id });
        }
    }
    let bus_of = |id: i64, element: &'static str| -> Result<usize, CaseError> {
        index_of
            .get(&id)
            .copied()
            .ok_or(CaseError::UnknownBusReference { element, id })
    };

    let slack = jc
        .buses
        .iter()
        .position(|b| b.kind == BusKind::Slack)
        .ok_or(CaseError::NoSlackBus)?;

    let mut gens_at: Vec<Vec<&JsonGen>> = vec![Vec::new(); nb];
    for g in &jc.gens {
        gens_at[bus_of(g.bus, "generator")?].push(g);
    }

    let mut buses: Vec<Bus> = jc
        .buses
        .iter()
        .map(|b| Bus {
            kind: b.kind,
            v_set: b.v_set,
            angle_set: b.angle_set_deg.to_radians(),
        })
        .collect();
    // PV buses take their magnitude setpoint from the machine
    for i in 0..nb {
        if buses[i].kind == BusKind::Pv {
            match gens_at[i].first() {
                Some(g) => buses[i].v_set = g.v_set,
                None => {
                    log::debug!(
                        "bus {}: PV without a generator, treated as PQ",
                        jc.buses[i].id
                    );
                    buses[i].kind = BusKind::Pq;
                }
            }
        }
    }

    let mut gens = Vec::new();
    let mut controls = Vec::new();
    let mut loads: Vec<Load> = Vec::new();
    for i in 0..nb {
        if gens_at[i].is_empty() || buses[i].kind == BusKind::Slack {
            continue;
        }
        if buses[i].kind == BusKind::Pq {
            let pg: f64 = gens_at[i].iter().map(|g| g.p_g).sum();
            log::warn!(
                "bus {}: generator on a PQ bus folded into the load as fixed injection",
                jc.buses[i].id
            );
            loads.push(Load {
                bus: i,
                p_l: -pg,
                q_l: 0.0,
                big: None,
            });
            continue;
        }
        let first = gens_at[i][0];
        let p_g: f64 = gens_at[i].iter().map(|g| g.p_g).sum();
        let controlled = match first.controlled_bus {
            Some(id) => bus_of(id, "control")?,
            None => i,
        };
        gens.push(Generator {
            bus: i,
            p_g,
            v_set: first.v_set,
            controlled_bus: controlled,
            control: controls.len(),
        });
        controls.push(VoltageControl {
            controlling: i,
            controlled,
            v_set: first.v_set,
            gen: gens.len() - 1,
        });
    }

    for l in &jc.loads {
        let bus = bus_of(l.bus, "load")?;
        loads.push(Load {
            bus,
            p_l: l.p_l,
            q_l: l.q_l,
            big: l.big.as_ref().map(|b| BigLoad {
                g_b: b.g_b,
                b_b: b.b_b,
                i_b: b.i_b,
            }),
        });
    }

    let mut shunts = Vec::new();
    for sh in &jc.shunts {
        shunts.push(Shunt {
            bus: bus_of(sh.bus, "shunt")?,
            g_sh: sh.g_sh,
            b_sh: sh.b_sh,
        });
    }

    let mut branches = Vec::new();
    for rb in &jc.branches {
        let from = bus_of(rb.from, "branch")?;
        let to = bus_of(rb.to, "branch")?;
        let tap = if rb.tap == 0.0 { 1.0 } else { rb.tap };
        let br = Branch::new(from, to, rb.r, rb.x, rb.b_ch, tap, rb.shift_deg.to_radians())
            .map_err(|e| CaseError::Invalid {
                details: e.to_string(),
            })?;
        branches.push(br);
    }

    finalize(Network {
        buses,
        branches,
        gens,
        loads,
        shunts,
        controls,
        slack_bus: slack,
        bus_ids: jc.buses.iter().map(|b| b.id).collect(),
    })
}

/// A case loaded from disk; `name` is the file stem.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub name: String,
    pub network: Network,
}

/// Load a `.m` or `.json` case file.
pub fn load_case(path: &Path) -> Result<LoadedCase, CaseError> {
    let text = std::fs::read_to_string(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let network = match ext.as_str() {
        "m" => to_network(&parse_matpower(&text)?)?,
        "json" => parse_case_json(&text)?,
        _ => {
            return Err(CaseError::UnsupportedExtension {
                path: path.display().to_string(),
            })
        }
    };
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("case")
        .to_string();
    Ok(LoadedCase { name, network })
}

// ---------------------------------------------------------------------------
// solution output

/// Round to 12 significant digits (and normalize negative zero) so the
/// emitted JSON is byte-stable across platforms.
pub fn sig12(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    if !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().unwrap()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionBusRecord {
    pub id: i64,
    pub vm: f64,
    pub va_deg: f64,
    pub v_r: f64,
    pub v_i: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionGenRecord {
    pub bus: i64,
    pub q_g: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlackRecord {
    pub bus: i64,
    pub i_r: f64,
    pub i_i: f64,
}

/// Versioned solution document; field order is the serialization order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub format: u32,
    pub case: String,
    pub method: String,
    pub status: String,
    /// Voltage classification, present when the solve converged.
    pub class: Option<String>,
    pub iterations: usize,
    pub final_lambda: f64,
    pub max_residual: f64,
    pub endpoint_residual: f64,
    pub used_trivial_start: bool,
    pub buses: Vec<SolutionBusRecord>,
    pub gens: Vec<SolutionGenRecord>,
    pub slack: SlackRecord,
}

/// Build the solution document for a finished report.
pub fn solution_document(
    net: &Network,
    idx: &IndexMap,
    report: &SolveReport,
    case: &str,
    method: &str,
) -> SolutionDocument {
    let x = &report.final_state;
    let class = if report.status == SolveStatus::Converged {
        Some(classify_solution(net, idx, x, &ClassifyConfig::default()).to_string())
    } else {
        None
    };
    let buses = (0..net.buses.len())
        .map(|i| SolutionBusRecord {
            id: net.bus_ids[i],
            vm: sig12(bus_vm(idx, x, i)),
            va_deg: sig12(bus_va(idx, x, i).to_degrees()),
            v_r: sig12(x[idx.v_r(i)]),
            v_i: sig12(x[idx.v_i(i)]),
        })
        .collect();
    let gens = net
        .gens
        .iter()
        .map(|g| SolutionGenRecord {
            bus: net.bus_ids[g.bus],
            q_g: sig12(x[idx.q_g(g.control)]),
        })
        .collect();
    SolutionDocument {
        format: 1,
        case: case.to_string(),
        method: method.to_string(),
        status: report.status.to_string(),
        class,
        iterations: report.total_iterations,
        final_lambda: sig12(report.final_lambda),
        max_residual: sig12(report.max_residual),
        endpoint_residual: sig12(report.endpoint_residual),
        used_trivial_start: report.used_trivial_start,
        buses,
        gens,
        slack: SlackRecord {
            bus: net.bus_ids[net.slack_bus],
            i_r: sig12(x[idx.slack_ir()]),
            i_i: sig12(x[idx.slack_ii()]),
        },
    }
}

/// Serialize the solution document: pretty JSON, trailing newline,
/// byte-identical for identical inputs.
pub fn write_solution(
    net: &Network,
    idx: &IndexMap,
    report: &SolveReport,
    case: &str,
    method: &str,
) -> String {
    let doc = solution_document(net, idx, report, case, method);
    let mut s = serde_json::to_string_pretty(&doc).expect("solution document serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homotopy::{solve_plain_nr, solve_tx_stepping, HomotopySchedule};
    use crate::network::build_index;
    use crate::nr::NrConfig;
    use approx::assert_abs_diff_eq;

    const TWO_BUS_M: &str = r#"
function mpc = two_bus
% hand-written minimal case
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	1	10	0	0	0	1	1	0	345	1	1.1	0.9;
];
mpc.gen = [];
mpc.branch = [
	1	2	0	0.1	0	0	0	0	0	0	1	-360	360;
];
"#;

    const TWO_BUS_JSON: &str = r#"{
  "format": 1,
  "name": "two_bus",
  "buses": [
    {"id": 1, "kind": "slack", "v_set": 1.0},
    {"id": 2, "kind": "pq"}
  ],
  "branches": [{"from": 1, "to": 2, "x": 0.1}],
  "loads": [{"bus": 2, "p_l": 0.1}]
}"#;

    #[test]
    fn parses_two_bus_case_with_implicit_slack_gen() {
        let raw = parse_matpower(TWO_BUS_M).unwrap();
        assert_eq!(raw.name, "two_bus");
        assert_eq!(raw.base_mva, 100.0);
        assert_eq!(raw.buses.len(), 2);
        assert_eq!(raw.branches.len(), 1);
        assert_eq!(raw.gens.len(), 1, "implicit slack machine expected");
        assert_eq!(raw.gens[0].bus, 1);
        assert_eq!(raw.gens[0].vg, 1.0);
        assert_eq!(raw.buses[1].pd, 10.0);
    }

    #[test]
    fn per_unit_conversion_and_tap_normalization() {
        let mut raw = parse_matpower(TWO_BUS_M).unwrap();
        raw.branches[0].tap = 0.0;
        raw.branches[0].shift_deg = 30.0;
        let net = to_network(&raw).unwrap();
        assert_eq!(net.loads.len(), 1);
        assert_abs_diff_eq!(net.loads[0].p_l, 0.1, epsilon = 1e-15);
        assert_eq!(net.branches[0].tap, 1.0);
        assert_abs_diff_eq!(
            net.branches[0].shift,
            30.0f64.to_radians(),
            epsilon = 1e-15
        );
        assert_eq!(net.slack_bus, 0);
        assert_eq!(net.bus_ids, vec![1, 2]);
        assert!(net.gens.is_empty(), "slack machine becomes the slack stamp");
    }

    #[test]
    fn duplicate_bus_id_is_rejected() {
        let text = TWO_BUS_M.replace(
            "2	1	10	0	0	0	1	1	0	345	1	1.1	0.9;",
            "1	1	10	0	0	0	1	1	0	345	1	1.1	0.9;",
        );
        match parse_matpower(&text) {
            Err(CaseError::DuplicateBusId { id: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn branch_to_unknown_bus_is_rejected() {
        let text = TWO_BUS_M.replace(
            "1	2	0	0.1	0	0	0	0	0	0	1	-360	360;",
            "1	3	0	0.1	0	0	0	0	0	0	1	-360	360;",
        );
        match parse_matpower(&text) {
            Err(CaseError::UnknownBusReference {
                element: "branch",
                id: 3,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_sections_and_slack_are_reported() {
        let no_branch = TWO_BUS_M.replace("mpc.branch", "mpc.ignored");
        assert!(matches!(
            parse_matpower(&no_branch),
            Err(CaseError::MissingSection { section: "branch" })
        ));
        let no_slack = TWO_BUS_M.replace(
            "1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;",
            "1	1	0	0	0	0	1	1	0	345	1	1.1	0.9;",
        );
        assert!(matches!(parse_matpower(&no_slack), Err(CaseError::NoSlackBus)));
    }

    #[test]
    fn short_rows_and_bad_numbers_are_malformed() {
        let short = TWO_BUS_M.replace(
            "1	2	0	0.1	0	0	0	0	0	0	1	-360	360;",
            "1	2	0	0.1;",
        );
        match parse_matpower(&short) {
            Err(CaseError::MalformedTable {
                section: "branch", ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let bad = TWO_BUS_M.replace("0.1", "zero-point-one");
        assert!(matches!(
            parse_matpower(&bad),
            Err(CaseError::MalformedTable { .. })
        ));
    }

    #[test]
    fn matpower_roundtrip_is_identity() {
        let raw = parse_matpower(TWO_BUS_M).unwrap();
        let again = parse_matpower(&write_matpower(&raw)).unwrap();
        assert_eq!(raw, again);
    }

    #[test]
    fn json_case_matches_matpower_equivalent() {
        let from_json = parse_case_json(TWO_BUS_JSON).unwrap();
        let from_m = to_network(&parse_matpower(TWO_BUS_M).unwrap()).unwrap();
        assert_eq!(from_json.buses.len(), from_m.buses.len());
        assert_eq!(from_json.loads[0].p_l, from_m.loads[0].p_l);
        assert_eq!(from_json.branches[0].x, from_m.branches[0].x);
        assert_eq!(from_json.slack_bus, from_m.slack_bus);
    }

    #[test]
    fn json_remote_control_is_extracted() {
        let text = r#"{
          "buses": [
            {"id": 5, "kind": "slack"},
            {"id": 7, "kind": "pv"},
            {"id": 9, "kind": "pq"}
          ],
          "branches": [
            {"from": 5, "to": 7, "x": 0.1},
            {"from": 7, "to": 9, "x": 0.2}
          ],
          "gens": [{"bus": 7, "p_g": 0.5, "v_set": 1.02, "controlled_bus": 9}],
          "loads": [{"bus": 9, "p_l": 0.3, "q_l": 0.1}]
        }"#;
        let net = parse_case_json(text).unwrap();
        assert_eq!(net.controls.len(), 1);
        let c = &net.controls[0];
        assert_eq!(net.bus_ids[c.controlling], 7);
        assert_eq!(net.bus_ids[c.controlled], 9);
        assert_abs_diff_eq!(c.v_set, 1.02);
    }

    #[test]
    fn island_without_source_is_a_validation_error() {
        let text = r#"{
          "buses": [
            {"id": 1, "kind": "slack"},
            {"id": 2, "kind": "pq"},
            {"id": 3, "kind": "pq"}
          ],
          "branches": [{"from": 1, "to": 2, "x": 0.1}],
          "loads": [{"bus": 3, "p_l": 0.2}]
        }"#;
        match parse_case_json(text) {
            Err(e @ CaseError::IslandWithoutSlack { .. }) => {
                assert!(e.is_validation());
                match e {
                    CaseError::IslandWithoutSlack { buses } => assert_eq!(buses, vec![3]),
                    _ => unreachable!(),
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_positive_base_is_a_validation_error() {
        let mut raw = parse_matpower(TWO_BUS_M).unwrap();
        raw.base_mva = 0.0;
        let err = to_network(&raw).unwrap_err();
        assert!(matches!(err, CaseError::NonPositiveBase { .. }));
        assert!(err.is_validation());
    }

    #[test]
    fn solution_document_polar_conversion_and_invariant() {
        let net = parse_case_json(TWO_BUS_JSON).unwrap();
        let idx = build_index(&net);
        let rep = solve_plain_nr(&net, &idx, None, &NrConfig::default());
        let doc = solution_document(&net, &idx, &rep, "two_bus", "plain-nr");
        assert_eq!(doc.format, 1);
        assert_eq!(doc.status, "Converged");
        assert_eq!(doc.class.as_deref(), Some("HighVoltage"));
        for b in &doc.buses {
            let vm = (b.v_r * b.v_r + b.v_i * b.v_i).sqrt();
            assert_abs_diff_eq!(b.vm, vm, epsilon = 1e-9);
        }
        // hand-computed polar conversions for an off-axis voltage
        let mut rep2 = rep.clone();
        rep2.final_state[idx.v_r(1)] = 0.8;
        rep2.final_state[idx.v_i(1)] = 0.2;
        let doc2 = solution_document(&net, &idx, &rep2, "two_bus", "plain-nr");
        assert_abs_diff_eq!(doc2.buses[1].vm, 0.824621125124, epsilon = 1e-9);
        assert_abs_diff_eq!(doc2.buses[1].va_deg, 14.0362434679, epsilon = 1e-7);
    }

    #[test]
    fn solution_serialization_is_byte_identical() {
        let net = parse_case_json(TWO_BUS_JSON).unwrap();
        let idx = build_index(&net);
        let rep = solve_tx_stepping(
            &net,
            &idx,
            None,
            &HomotopySchedule::default(),
            &NrConfig::default(),
        );
        let a = write_solution(&net, &idx, &rep, "two_bus", "tx");
        let b = write_solution(&net, &idx, &rep, "two_bus", "tx");
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
        assert!(a.contains("\"format\": 1"));
    }

    #[test]
    fn sig12_rounds_and_normalizes() {
        assert_eq!(sig12(0.0), 0.0);
        assert_eq!(sig12(-0.0).to_bits(), 0.0f64.to_bits());
        assert_eq!(sig12(1.0), 1.0);
        assert_abs_diff_eq!(
            sig12(0.123456789012345),
            0.123456789012,
            epsilon = 1e-15
        );
        assert_eq!(sig12(f64::INFINITY), f64::INFINITY);
    }

    #[test]
    fn pq_bus_generator_becomes_fixed_injection() {
        let mut raw = parse_matpower(TWO_BUS_M).unwrap();
        raw.gens.push(RawGen {
            bus: 2,
            pg: 5.0,
            qg: 1.0,
            qmax: 0.0,
            qmin: 0.0,
            vg: 1.0,
            mbase: 100.0,
            status: 1,
            pmax: 0.0,
            pmin: 0.0,
            controlled: None,
        });
        let net = to_network(&raw).unwrap();
        assert!(net.gens.is_empty());
        assert_abs_diff_eq!(net.loads[0].p_l, 0.1 - 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(net.loads[0].q_l, -0.01, epsilon = 1e-15);
    }

    #[test]
    fn pv_bus_without_machine_degrades_to_pq() {
        let mut raw = parse_matpower(TWO_BUS_M).unwrap();
        raw.buses[1].bus_type = 2;
        let net = to_network(&raw).unwrap();
        assert_eq!(net.buses[1].kind, BusKind::Pq);
        assert!(net.controls.is_empty());
    }

    #[test]
    fn out_of_service_elements_are_dropped() {
        let mut raw = parse_matpower(TWO_BUS_M).unwrap();
        raw.branches.push(RawBranch {
            from: 1,
            to: 2,
            r: 0.0,
            x: 0.5,
            b: 0.0,
            rate_a: 0.0,
            rate_b: 0.0,
            rate_c: 0.0,
            tap: 0.0,
            shift_deg: 0.0,
            status: 0,
        });
        let net = to_network(&raw).unwrap();
        assert_eq!(net.branches.len(), 1);
    }
}
