//! Device stamps for the equivalent split-circuit formulation.
//!
//! Every network element contributes current terms to the KCL rows of its
//! buses, split into real and imaginary parts. Nonlinear devices (constant
//! power loads and generators) are linearized about the current iterate, so
//! the assembled system solves A(xᵏ)·xᵏ⁺¹ = b(xᵏ) for the *full* next state
//! rather than for a correction. The residual evaluation mirrors the stamps
//! exactly; `A(x)·x − b(x)` equals the residual for any damping factor ζ
//! because the ζ-scaled history terms cancel.

use crate::network::{Branch, IndexMap, Network};
use crate::sparse::SparseSystem;

/// Continuation knobs shared by assembly and residual evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomotopyConfig {
    /// Continuation level: 1 = virtually shorted network, 0 = original.
    pub lambda: f64,
    /// Series admittances are scaled by 1 + λγ.
    pub gamma: f64,
    /// Virtual conductance tying a remote-controlling generator bus to its
    /// controlled bus while λ > 0.
    pub g_ctrl: f64,
    /// Fade branch charging and bus shunts out as λ → 1.
    pub shunt_relax: bool,
}

impl Default for HomotopyConfig {
    fn default() -> HomotopyConfig {
        HomotopyConfig {
            lambda: 0.0,
            gamma: 999.0,
            g_ctrl: 100.0,
            shunt_relax: true,
        }
    }
}

impl HomotopyConfig {
    pub fn at_lambda(lambda: f64) -> HomotopyConfig {
        HomotopyConfig {
            lambda,
            ..HomotopyConfig::default()
        }
    }
}

/// Real 2×2 admittance blocks of a branch two-port at a given continuation
/// level. A complex admittance g + jb maps to [[g, −b], [b, g]] acting on
/// (v_r, v_i).
#[derive(Debug, Clone, Copy)]
pub struct BranchBlocks {
    pub gff: f64,
    pub bff: f64,
    pub gft: f64,
    pub bft: f64,
    pub gtf: f64,
    pub btf: f64,
    pub gtt: f64,
    pub btt: f64,
}

/// Effective branch admittance blocks. At λ=0 this is the standard pi-model
/// with off-nominal tap τ and phase shift θ on the from side:
///   Yff = (y + jb_c/2)/τ², Yft = −y·e^{jθ}/τ, Ytf = −y·e^{−jθ}/τ,
///   Ytt = y + jb_c/2.
/// The continuation scales y by (1 + λγ) and walks τ → 1, θ → 0 and
/// (optionally) b_c → 0 linearly in λ, so at λ=1 every branch is a near-short
/// and the network voltage profile is trivially flat.
pub fn branch_blocks(br: &Branch, h: &HomotopyConfig) -> BranchBlocks {
    let scale = 1.0 + h.lambda * h.gamma;
    let g = br.g_series * scale;
    let b = br.b_series * scale;
    let tau = br.tap + h.lambda * (1.0 - br.tap);
    let theta = br.shift * (1.0 - h.lambda);
    let bc = if h.shunt_relax {
        br.b_ch * (1.0 - h.lambda)
    } else {
        br.b_ch
    };
    let (s, c) = theta.sin_cos();
    let t2 = tau * tau;
    BranchBlocks {
        gff: g / t2,
        bff: (b + 0.5 * bc) / t2,
        gft: -(g * c - b * s) / tau,
        bft: -(b * c + g * s) / tau,
        gtf: -(g * c + b * s) / tau,
        btf: -(b * c - g * s) / tau,
        gtt: g,
        btt: b + 0.5 * bc,
    }
}

/// Terminal currents of a constant-power element: I = (P − jQ)/conj(V).
///   I_R = (P·v_r + Q·v_i)/|V|²,  I_I = (P·v_i − Q·v_r)/|V|².
/// Returns (I_R, I_I, |V|²).
#[inline]
pub(crate) fn power_currents(p: f64, q: f64, vr: f64, vi: f64) -> (f64, f64, f64) {
    let d = vr * vr + vi * vi;
    ((p * vr + q * vi) / d, (p * vi - q * vr) / d, d)
}

/// Stamp one 2×2 complex admittance block: row pair (current at bus `rb`),
/// column pair (voltage of bus `cb`), admittance g + jb.
#[inline]
fn push_block(sys: &mut SparseSystem, idx: &IndexMap, rb: usize, cb: usize, g: f64, b: f64) {
    sys.push(idx.kcl_r(rb), idx.v_r(cb), g);
    sys.push(idx.kcl_r(rb), idx.v_i(cb), -b);
    sys.push(idx.kcl_i(rb), idx.v_r(cb), b);
    sys.push(idx.kcl_i(rb), idx.v_i(cb), g);
}

/// Assemble the full-state linear system A(x)·x⁺ = b(x) about `state`, at
/// continuation level `h` and damping ζ. ζ scales the voltage partials (and
/// matching history terms) of the PV-generator stamps only — loads and the
/// reactive-power couplings stay undamped; at ζ=1 the matrix is exactly the
/// Jacobian ∂F/∂x of [`residual`].
pub fn assemble_system(
    net: &Network,
    idx: &IndexMap,
    state: &[f64],
    h: &HomotopyConfig,
    zeta: f64,
) -> SparseSystem {
    debug_assert_eq!(state.len(), idx.n);
    let cap = 16 * net.branches.len()
        + 12 * (net.gens.len() + net.loads.len())
        + 10 * net.controls.len()
        + 4 * net.shunts.len()
        + 8;
    let mut sys = SparseSystem::with_capacity(idx.n, cap);

    for br in &net.branches {
        let bb = branch_blocks(br, h);
        push_block(&mut sys, idx, br.from, br.from, bb.gff, bb.bff);
        push_block(&mut sys, idx, br.from, br.to, bb.gft, bb.bft);
        push_block(&mut sys, idx, br.to, br.from, bb.gtf, bb.btf);
        push_block(&mut sys, idx, br.to, br.to, bb.gtt, bb.btt);
    }

    let shunt_scale = if h.shunt_relax { 1.0 - h.lambda } else { 1.0 };
    for sh in &net.shunts {
        push_block(
            &mut sys,
            idx,
            sh.bus,
            sh.bus,
            sh.g_sh * shunt_scale,
            sh.b_sh * shunt_scale,
        );
    }

    for l in &net.loads {
        let (kr, ki) = (idx.kcl_r(l.bus), idx.kcl_i(l.bus));
        let (cvr, cvi) = (idx.v_r(l.bus), idx.v_i(l.bus));
        if let Some(big) = &l.big {
            // linear model: I = (G_B + jB_B)·V + I_B (real constant current)
            push_block(&mut sys, idx, l.bus, l.bus, big.g_b, big.b_b);
            sys.rhs[kr] -= big.i_b;
        } else {
            // loads stay fully linearized at every ζ: variable limiting
            // damps only the most sensitive stamps (the PV-node currents),
            // not the whole system
            let (vr, vi) = (state[cvr], state[cvi]);
            let (ir, ii, d) = power_currents(l.p_l, l.q_l, vr, vi);
            let dir_dvr = (l.p_l - 2.0 * vr * ir) / d;
            let dir_dvi = (l.q_l - 2.0 * vi * ir) / d;
            let dii_dvr = (-l.q_l - 2.0 * vr * ii) / d;
            let dii_dvi = (l.p_l - 2.0 * vi * ii) / d;
            sys.push(kr, cvr, dir_dvr);
            sys.push(kr, cvi, dir_dvi);
            sys.push(ki, cvr, dii_dvr);
            sys.push(ki, cvi, dii_dvi);
            sys.rhs[kr] += dir_dvr * vr + dir_dvi * vi - ir;
            sys.rhs[ki] += dii_dvr * vr + dii_dvi * vi - ii;
        }
    }

    for g in &net.gens {
        let (kr, ki) = (idx.kcl_r(g.bus), idx.kcl_i(g.bus));
        let (cvr, cvi) = (idx.v_r(g.bus), idx.v_i(g.bus));
        let cq = idx.q_g(g.control);
        let (vr, vi) = (state[cvr], state[cvi]);
        let q = state[cq];
        let (ir, ii, d) = power_currents(g.p_g, q, vr, vi);
        let dir_dvr = (g.p_g - 2.0 * vr * ir) / d;
        let dir_dvi = (q - 2.0 * vi * ir) / d;
        let dir_dq = vi / d;
        let dii_dvr = (-q - 2.0 * vr * ii) / d;
        let dii_dvi = (g.p_g - 2.0 * vi * ii) / d;
        let dii_dq = -vr / d;
        // generation enters the KCL with opposite sign to load
        sys.push(kr, cvr, -zeta * dir_dvr);
        sys.push(kr, cvi, -zeta * dir_dvi);
        sys.push(kr, cq, -dir_dq);
        sys.push(ki, cvr, -zeta * dii_dvr);
        sys.push(ki, cvi, -zeta * dii_dvi);
        sys.push(ki, cq, -dii_dq);
        sys.rhs[kr] -= zeta * (dir_dvr * vr + dir_dvi * vi) + dir_dq * q - ir;
        sys.rhs[ki] -= zeta * (dii_dvr * vr + dii_dvi * vi) + dii_dq * q - ii;
    }

    for (c, ctrl) in net.controls.iter().enumerate() {
        let w = ctrl.controlled;
        let (vr, vi) = (state[idx.v_r(w)], state[idx.v_i(w)]);
        let row = idx.row_ctrl(c);
        sys.push(row, idx.v_r(w), 2.0 * vr);
        sys.push(row, idx.v_i(w), 2.0 * vi);
        sys.rhs[row] += ctrl.v_set * ctrl.v_set + vr * vr + vi * vi;
        if ctrl.controlling != ctrl.controlled {
            // virtual tie keeping a remotely controlled pair coherent while
            // the network is shorted; stamped at every λ (zero value at λ=0)
            // so the sparsity pattern is continuation-invariant
            let gl = h.lambda * h.g_ctrl;
            let o = ctrl.controlling;
            sys.push(idx.kcl_r(o), idx.v_r(o), gl);
            sys.push(idx.kcl_r(o), idx.v_r(w), -gl);
            sys.push(idx.kcl_r(w), idx.v_r(w), gl);
            sys.push(idx.kcl_r(w), idx.v_r(o), -gl);
            sys.push(idx.kcl_i(o), idx.v_i(o), gl);
            sys.push(idx.kcl_i(o), idx.v_i(w), -gl);
            sys.push(idx.kcl_i(w), idx.v_i(w), gl);
            sys.push(idx.kcl_i(w), idx.v_i(o), -gl);
        }
    }

    // slack: pinned voltage rows plus free injection currents in its KCL
    let sl = net.slack_bus;
    let sb = &net.buses[sl];
    sys.push(idx.row_slack_vr(), idx.v_r(sl), 1.0);
    sys.rhs[idx.row_slack_vr()] += sb.v_set * sb.angle_set.cos();
    sys.push(idx.row_slack_vi(), idx.v_i(sl), 1.0);
    sys.rhs[idx.row_slack_vi()] += sb.v_set * sb.angle_set.sin();
    sys.push(idx.kcl_r(sl), idx.slack_ir(), -1.0);
    sys.push(idx.kcl_i(sl), idx.slack_ii(), -1.0);

    sys
}

/// Residual F(x) of the split-circuit equations at continuation level `h`.
/// KCL rows sum branch, shunt and load currents minus generation and the
/// slack injection; control rows hold |V|² − V_set²; slack rows pin the
/// slack voltage.
pub fn residual(net: &Network, idx: &IndexMap, state: &[f64], h: &HomotopyConfig) -> Vec<f64> {
    debug_assert_eq!(state.len(), idx.n);
    let mut f = vec![0.0f64; idx.n];

    for br in &net.branches {
        let bb = branch_blocks(br, h);
        let (vrf, vif) = (state[idx.v_r(br.from)], state[idx.v_i(br.from)]);
        let (vrt, vit) = (state[idx.v_r(br.to)], state[idx.v_i(br.to)]);
        f[idx.kcl_r(br.from)] += bb.gff * vrf - bb.bff * vif + bb.gft * vrt - bb.bft * vit;
        f[idx.kcl_i(br.from)] += bb.bff * vrf + bb.gff * vif + bb.bft * vrt + bb.gft * vit;
        f[idx.kcl_r(br.to)] += bb.gtf * vrf - bb.btf * vif + bb.gtt * vrt - bb.btt * vit;
        f[idx.kcl_i(br.to)] += bb.btf * vrf + bb.gtf * vif + bb.btt * vrt + bb.gtt * vit;
    }

    let shunt_scale = if h.shunt_relax { 1.0 - h.lambda } else { 1.0 };
    for sh in &net.shunts {
        let (vr, vi) = (state[idx.v_r(sh.bus)], state[idx.v_i(sh.bus)]);
        let (g, b) = (sh.g_sh * shunt_scale, sh.b_sh * shunt_scale);
        f[idx.kcl_r(sh.bus)] += g * vr - b * vi;
        f[idx.kcl_i(sh.bus)] += b * vr + g * vi;
    }

    for l in &net.loads {
        let (vr, vi) = (state[idx.v_r(l.bus)], state[idx.v_i(l.bus)]);
        if let Some(big) = &l.big {
            f[idx.kcl_r(l.bus)] += big.g_b * vr - big.b_b * vi + big.i_b;
            f[idx.kcl_i(l.bus)] += big.b_b * vr + big.g_b * vi;
        } else {
            let (ir, ii, _) = power_currents(l.p_l, l.q_l, vr, vi);
            f[idx.kcl_r(l.bus)] += ir;
            f[idx.kcl_i(l.bus)] += ii;
        }
    }

    for g in &net.gens {
        let (vr, vi) = (state[idx.v_r(g.bus)], state[idx.v_i(g.bus)]);
        let q = state[idx.q_g(g.control)];
        let (ir, ii, _) = power_currents(g.p_g, q, vr, vi);
        f[idx.kcl_r(g.bus)] -= ir;
        f[idx.kcl_i(g.bus)] -= ii;
    }

    for (c, ctrl) in net.controls.iter().enumerate() {
        let w = ctrl.controlled;
        let (vr, vi) = (state[idx.v_r(w)], state[idx.v_i(w)]);
        f[idx.row_ctrl(c)] = vr * vr + vi * vi - ctrl.v_set * ctrl.v_set;
        if ctrl.controlling != ctrl.controlled {
            let gl = h.lambda * h.g_ctrl;
            let o = ctrl.controlling;
            let dr = state[idx.v_r(o)] - state[idx.v_r(w)];
            let di = state[idx.v_i(o)] - state[idx.v_i(w)];
            f[idx.kcl_r(o)] += gl * dr;
            f[idx.kcl_r(w)] -= gl * dr;
            f[idx.kcl_i(o)] += gl * di;
            f[idx.kcl_i(w)] -= gl * di;
        }
    }

    let sl = net.slack_bus;
    let sb = &net.buses[sl];
    f[idx.row_slack_vr()] = state[idx.v_r(sl)] - sb.v_set * sb.angle_set.cos();
    f[idx.row_slack_vi()] = state[idx.v_i(sl)] - sb.v_set * sb.angle_set.sin();
    f[idx.kcl_r(sl)] -= state[idx.slack_ir()];
    f[idx.kcl_i(sl)] -= state[idx.slack_ii()];

    f
}
