//! Shared helpers for the integration tests: a density-matrix model of
//! Werner pairs, and random demand sets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsched_core::model::{Demand, RepeaterProtocol, Topology};
use qsched_core::protoselect::{select_protocol, SelectionConfig};

/// Real density matrix on four qubits, row-major over indices
/// q0*8 + q1*4 + q2*2 + q3.
pub type Rho4 = [[f64; 16]; 16];

const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Amplitude of |Phi+> on a two-qubit basis index.
fn phi(i: usize) -> f64 {
    if i == 0 || i == 3 {
        S
    } else {
        0.0
    }
}

/// (1-F)/3 * I + (4F-1)/3 * |Phi+><Phi+|
pub fn werner(f: f64) -> [[f64; 4]; 4] {
    let mut w = [[0.0; 4]; 4];
    for (i, row) in w.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = (4.0 * f - 1.0) / 3.0 * phi(i) * phi(j);
            if i == j {
                *x += (1.0 - f) / 3.0;
            }
        }
    }
    w
}

pub fn kron(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> Rho4 {
    let mut out = [[0.0; 16]; 16];
    for i in 0..16 {
        for j in 0..16 {
            out[i][j] = a[i >> 2][j >> 2] * b[i & 3][j & 3];
        }
    }
    out
}

pub fn trace2(r: &[[f64; 4]; 4]) -> f64 {
    (0..4).map(|i| r[i][i]).sum()
}

/// <Phi+| r |Phi+> for an unnormalised two-qubit state.
pub fn bell_overlap(r: &[[f64; 4]; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += phi(i) * r[i][j] * phi(j);
        }
    }
    s
}

/// Pairs (A,B1) and (B2,C); the middle qubits are projected onto Phi+ and
/// traced out. Returns the fidelity of the remaining (A,C) pair.
pub fn oracle_swap(f1: f64, f2: f64) -> f64 {
    let rho = kron(&werner(f1), &werner(f2));
    let mut out = [[0.0; 4]; 4];
    for a in 0..2 {
        for c in 0..2 {
            for a2 in 0..2 {
                for c2 in 0..2 {
                    let mut s = 0.0;
                    for m in 0..4 {
                        for m2 in 0..4 {
                            let i = a << 3 | m << 1 | c;
                            let j = a2 << 3 | m2 << 1 | c2;
                            s += phi(m) * rho[i][j] * phi(m2);
                        }
                    }
                    out[a << 1 | c][a2 << 1 | c2] = s;
                }
            }
        }
    }
    bell_overlap(&out) / trace2(&out)
}

/// Pairs (A1,B1) and (A2,B2); CNOTs A1->A2 and B1->B2, both targets
/// measured, kept when the outcomes agree. Returns (fidelity, success
/// probability) of the kept (A1,B1) pair.
pub fn oracle_distill(f1: f64, f2: f64) -> (f64, f64) {
    let rho = kron(&werner(f1), &werner(f2));
    let cnots = |i: usize| {
        let (q0, q1) = (i >> 3 & 1, i >> 2 & 1);
        i ^ (q0 << 1) ^ q1
    };
    let mut out = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            for m in [0b00, 0b11] {
                out[r][c] += rho[cnots(r << 2 | m)][cnots(c << 2 | m)];
            }
        }
    }
    let p = trace2(&out);
    (bell_overlap(&out) / p, p)
}

/// A random demand set between end nodes that all have a protocol.
pub fn random_pairs(
    t: &Topology,
    seed: u64,
    max_demands: usize,
    fidelities: &[f64],
    rates: &[f64],
) -> Vec<(Demand, RepeaterProtocol)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ends: Vec<String> = t.end_nodes().iter().map(|n| n.id.clone()).collect();
    let n = rng.gen_range(1..=max_demands);
    let mut out = Vec::new();
    for k in 0..n {
        let a = rng.gen_range(0..ends.len());
        let mut b = rng.gen_range(0..ends.len() - 1);
        if b >= a {
            b += 1;
        }
        let f = fidelities[rng.gen_range(0..fidelities.len())];
        let r = rates[rng.gen_range(0..rates.len())];
        let d = Demand::new(&format!("d{k}"), &ends[a], &ends[b], f, r);
        if let Ok(p) = select_protocol(t, &d, &SelectionConfig::default()) {
            out.push((d, p));
        }
    }
    out
}
