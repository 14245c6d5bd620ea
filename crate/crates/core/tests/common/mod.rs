//! Helpers shared by the integration test targets: a seeded LCG, a random
//! network generator covering every device kind, and dense oracles.

#![allow(dead_code)]

use txflow::{
    build_index, residual, validate, BigLoad, Branch, Bus, BusKind, Generator, HomotopyConfig,
    IndexMap, Load, Network, Shunt, VoltageControl,
};

pub struct Lcg(pub u64);

impl Lcg {
    pub fn new(seed: u64) -> Lcg {
        Lcg(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x2545f4914f6cdd1d))
    }
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0
    }
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

/// Random connected network with 2..=10 buses covering every device kind:
/// PV and PQ buses, taps, shifts, charging, loads (occasionally with the
/// linear big-load companion), shunts, and sometimes a remote control.
pub fn random_network(seed: u64) -> Network {
    let mut rng = Lcg::new(seed);
    let nb = 2 + rng.below(9);

    let mut buses = vec![Bus {
        kind: BusKind::Slack,
        v_set: rng.range(0.95, 1.05),
        angle_set: rng.range(-0.3, 0.3),
    }];
    for _ in 1..nb {
        if rng.chance(0.3) {
            buses.push(Bus {
                kind: BusKind::Pv,
                v_set: rng.range(0.95, 1.05),
                angle_set: 0.0,
            });
        } else {
            buses.push(Bus {
                kind: BusKind::Pq,
                v_set: 1.0,
                angle_set: 0.0,
            });
        }
    }

    let branch = |rng: &mut Lcg, from: usize, to: usize| {
        Branch::new(
            from,
            to,
            rng.range(0.0, 0.05),
            rng.range(0.01, 0.3),
            rng.range(0.0, 0.2),
            if rng.chance(0.3) {
                rng.range(0.9, 1.1)
            } else {
                1.0
            },
            if rng.chance(0.3) {
                rng.range(-0.2, 0.2)
            } else {
                0.0
            },
        )
        .expect("nonzero impedance by construction")
    };
    let mut branches = Vec::new();
    for i in 1..nb {
        let j = rng.below(i);
        branches.push(branch(&mut rng, j, i));
    }
    for _ in 0..rng.below(nb) {
        let a = rng.below(nb);
        let b = rng.below(nb);
        if a != b {
            branches.push(branch(&mut rng, a, b));
        }
    }

    let mut loads = Vec::new();
    let mut shunts = Vec::new();
    for i in 0..nb {
        if rng.chance(0.6) {
            loads.push(Load {
                bus: i,
                p_l: rng.range(-0.5, 0.5),
                q_l: rng.range(-0.3, 0.3),
                big: rng.chance(0.25).then(|| BigLoad {
                    g_b: rng.range(0.0, 1.0),
                    b_b: rng.range(-1.0, 1.0),
                    i_b: rng.range(-0.2, 0.2),
                }),
            });
        }
        if rng.chance(0.3) {
            shunts.push(Shunt {
                bus: i,
                g_sh: rng.range(0.0, 0.1),
                b_sh: rng.range(-0.5, 0.5),
            });
        }
    }

    let mut gens = Vec::new();
    let mut controls = Vec::new();
    let mut targeted = vec![false; nb];
    for i in 0..nb {
        if buses[i].kind != BusKind::Pv {
            continue;
        }
        // remote control occasionally, but never two controls on one bus
        let mut controlled = i;
        if rng.chance(0.2) {
            let t = rng.below(nb);
            if buses[t].kind == BusKind::Pq && !targeted[t] {
                controlled = t;
            }
        }
        targeted[controlled] = true;
        let v_set = buses[i].v_set;
        gens.push(Generator {
            bus: i,
            p_g: rng.range(-0.5, 0.5),
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

    let ids = (0..nb as i64).map(|i| i + 1).collect();
    let net = Network {
        buses,
        branches,
        gens,
        loads,
        shunts,
        controls,
        slack_bus: 0,
        bus_ids: ids,
    };
    assert!(validate(&net).is_empty(), "generator produced invalid network");
    net
}

/// Random state away from collapse: |V| stays well above the floor.
pub fn random_state(idx: &IndexMap, rng: &mut Lcg) -> Vec<f64> {
    let mut x = vec![0.0; idx.n];
    for i in 0..idx.n_bus {
        let vm = rng.range(0.7, 1.2);
        let va = rng.range(-0.4, 0.4);
        x[idx.v_r(i)] = vm * va.cos();
        x[idx.v_i(i)] = vm * va.sin();
    }
    for c in 0..idx.n_ctrl {
        x[idx.q_g(c)] = rng.range(-0.5, 0.5);
    }
    x[idx.slack_ir()] = rng.range(-1.0, 1.0);
    x[idx.slack_ii()] = rng.range(-1.0, 1.0);
    x
}

/// Central finite differences of the residual, column by column.
pub fn dense_jacobian_fd(
    net: &Network,
    idx: &IndexMap,
    x: &[f64],
    h_cfg: &HomotopyConfig,
) -> Vec<Vec<f64>> {
    let n = idx.n;
    let mut jac = vec![vec![0.0; n]; n];
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let fp = residual(net, idx, &xp, h_cfg);
        let fm = residual(net, idx, &xm, h_cfg);
        for i in 0..n {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Dense Gaussian elimination with partial pivoting; `None` for singular.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))?;
        if m[piv][k] == 0.0 {
            return None;
        }
        m.swap(k, piv);
        x.swap(k, piv);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        for j in k + 1..n {
            let xj = x[j];
            x[k] -= m[k][j] * xj;
        }
        x[k] /= m[k][k];
    }
    Some(x)
}

/// Shared fixture: a network solved from a given start is reproducible, so
/// `build_index` here keeps call sites short.
pub fn indexed(net: &Network) -> IndexMap {
    build_index(net)
}
