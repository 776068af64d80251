//! Lattice kernel tables for the grid perimeter estimator.
//!
//! For cells of unit side, the integral of |x − y|^{-(N+2s)} over the pair
//! (C_0, C_k) equals J(k) = ∫_{[-1,1]^N} tent(z) |k + z|^{-(N+2s)} dz. Near
//! offsets (|k|_∞ ≤ r) use J(k) itself, computed with subbox splitting and a
//! Duffy transform at the singular corner; far offsets use the second-order
//! expansion K + ΔK/12. The table also stores T = Σ_{k≠0} K̃(k), which must be
//! consistent with the kernel used in the convolution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use crate::quadrature::{endpoint_singular_rule, gauss_legendre, Rule};
use crate::specfun::{gamma_signed, FracParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelTable {
    pub dim: usize,
    pub s: f64,
    pub near: usize,
    /// J(k) on [-near, near]^N, row-major, zero at the origin.
    pub near_values: Vec<f64>,
    /// Σ_{k ≠ 0} K̃(k) over the whole lattice.
    pub total: f64,
}

impl KernelTable {
    fn near_index(&self, k: &[i64]) -> Option<usize> {
        let r = self.near as i64;
        let side = 2 * r + 1;
        let mut idx = 0i64;
        for &c in k {
            if c.abs() > r {
                return None;
            }
            idx = idx * side + (c + r);
        }
        Some(idx as usize)
    }

    /// Lattice kernel K̃(k); zero at k = 0.
    pub fn k_tilde(&self, k: &[i64]) -> f64 {
        if let Some(i) = self.near_index(k) {
            return self.near_values[i];
        }
        let r2: f64 = k.iter().map(|c| (*c as f64) * (*c as f64)).sum();
        far_kernel(self.dim, self.s, r2)
    }

    /// Cached table for (N, s, near); computed on first use, optionally
    /// persisted in the directory named by FRACPERIM_CACHE.
    pub fn get(params: FracParams, near: usize) -> Arc<KernelTable> {
        static MEMO: OnceLock<Mutex<HashMap<(usize, u64, usize), Arc<KernelTable>>>> = OnceLock::new();
        let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (params.dim, params.s.to_bits(), near);
        if let Some(t) = memo.lock().unwrap().get(&key) {
            return t.clone();
        }
        let table = Arc::new(load_or_build(params, near));
        memo.lock().unwrap().insert(key, table.clone());
        table
    }
}

fn cache_path(params: FracParams, near: usize) -> Option<PathBuf> {
    let dir = std::env::var_os("FRACPERIM_CACHE")?;
    Some(PathBuf::from(dir).join(format!(
        "kernel-N{}-s{:016x}-r{}.json",
        params.dim,
        params.s.to_bits(),
        near
    )))
}

fn load_or_build(params: FracParams, near: usize) -> KernelTable {
    if let Some(path) = cache_path(params, near) {
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(t) = serde_json::from_str::<KernelTable>(&text) {
                if t.dim == params.dim && t.s == params.s && t.near == near {
                    return t;
                }
            }
        }
        let t = build(params, near);
        if let Some(parent) = path.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        if let Ok(text) = serde_json::to_string(&t) {
            let _ = std::fs::write(&path, text);
        }
        return t;
    }
    build(params, near)
}

/// K + ΔK/12 at squared distance r2.
pub fn far_kernel(dim: usize, s: f64, r2: f64) -> f64 {
    let a = dim as f64 + 2.0 * s;
    let k = r2.powf(-0.5 * a);
    k * (1.0 + a * (2.0 + 2.0 * s) / (12.0 * r2))
}

fn build(params: FracParams, near: usize) -> KernelTable {
    let n = params.dim;
    let s = params.s;
    let r = near as i64;
    let side = (2 * r + 1) as usize;
    let count = side.pow(n as u32);
    let offsets: Vec<Vec<i64>> = (0..count)
        .map(|mut idx| {
            let mut k = vec![0i64; n];
            for d in (0..n).rev() {
                k[d] = (idx % side) as i64 - r;
                idx /= side;
            }
            k
        })
        .collect();
    let near_values: Vec<f64> = offsets
        .par_iter()
        .map(|k| if k.iter().all(|c| *c == 0) { 0.0 } else { cell_pair_integral(n, s, k) })
        .collect();
    let mut table = KernelTable {
        dim: n,
        s,
        near,
        near_values,
        total: 0.0,
    };
    table.total = lattice_total(&table);
    table
}

/// J(k) = ∫_{[-1,1]^N} Π(1 − |z_i|) |k + z|^{-(N+2s)} dz for k ≠ 0.
pub fn cell_pair_integral(n: usize, s: f64, k: &[i64]) -> f64 {
    let a = n as f64 + 2.0 * s;
    let sing: Vec<f64> = k.iter().map(|c| -(*c as f64)).collect();
    let mut cuts: Vec<Vec<f64>> = Vec::with_capacity(n);
    for d in 0..n {
        let mut c = vec![-1.0, 0.0, 1.0];
        if sing[d] > -1.0 && sing[d] < 1.0 && sing[d] != 0.0 {
            c.push(sing[d]);
        }
        c.sort_by(|x, y| x.total_cmp(y));
        c.dedup();
        cuts.push(c);
    }
    let gl = gauss_legendre(16);
    let gj = endpoint_singular_rule(12, s);
    let mut total = 0.0;
    let counts: Vec<usize> = cuts.iter().map(|c| c.len() - 1).collect();
    let nsub: usize = counts.iter().product();
    for mut idx in 0..nsub {
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for d in 0..n {
            let i = idx % counts[d];
            idx /= counts[d];
            lo[d] = cuts[d][i];
            hi[d] = cuts[d][i + 1];
        }
        let corner = (0..n).all(|d| sing[d] == lo[d] || sing[d] == hi[d]);
        total += if corner {
            duffy_box(n, a, &lo, &hi, &sing, &gl, &gj)
        } else {
            tensor_box(n, a, &lo, &hi, k, &gl)
        };
    }
    total
}

fn tent(z: &[f64]) -> f64 {
    z.iter().map(|v| 1.0 - v.abs()).product()
}

fn tensor_box(n: usize, a: f64, lo: &[f64], hi: &[f64], k: &[i64], gl: &Rule) -> f64 {
    let rules: Vec<Rule> = (0..n).map(|d| gl.mapped(lo[d], hi[d])).collect();
    let m = gl.len();
    let mut acc = 0.0;
    let mut z = vec![0.0; n];
    for mut idx in 0..m.pow(n as u32) {
        let mut w = 1.0;
        for d in 0..n {
            let i = idx % m;
            idx /= m;
            z[d] = rules[d].nodes[i];
            w *= rules[d].weights[i];
        }
        let r2: f64 = z.iter().zip(k).map(|(zz, kk)| (zz + *kk as f64).powi(2)).sum();
        acc += w * tent(&z) * r2.powf(-0.5 * a);
    }
    acc
}

/// Subbox whose corner `c` is the kernel singularity: split into pyramids
/// over the faces opposite c and integrate radially with weight t^{-2s}.
#[allow(clippy::too_many_arguments)]
fn duffy_box(n: usize, a: f64, lo: &[f64], hi: &[f64], c: &[f64], gl: &Rule, gj: &Rule) -> f64 {
    let d: Vec<f64> = (0..n).map(|i| if c[i] == lo[i] { hi[i] } else { lo[i] }).collect();
    let mut acc = 0.0;
    let m = gl.len();
    for face in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != face).collect();
        let rules: Vec<Rule> = others.iter().map(|&j| gl.mapped(lo[j], hi[j])).collect();
        let height = (d[face] - c[face]).abs();
        let mut q = vec![0.0; n];
        q[face] = d[face];
        for mut idx in 0..m.pow(others.len() as u32) {
            let mut wq = 1.0;
            for (o, &j) in others.iter().enumerate() {
                let i = idx % m;
                idx /= m;
                q[j] = rules[o].nodes[i];
                wq *= rules[o].weights[i];
            }
            let dq2: f64 = (0..n).map(|i| (q[i] - c[i]).powi(2)).sum();
            let kern = dq2.powf(-0.5 * a);
            // ∫_0^1 t^{N-1} t^{-a} tent(c + t(q − c)) dt = ∫ t^{-2s} [tent(..)/t] dt
            let mut radial = 0.0;
            let mut z = vec![0.0; n];
            for (t, w) in gj.nodes.iter().zip(&gj.weights) {
                for i in 0..n {
                    z[i] = c[i] + t * (q[i] - c[i]);
                }
                radial += w * tent(&z) / t;
            }
            acc += wq * height * kern * radial;
        }
    }
    acc
}

/// Constants of the continuum tail: C = ∫_{|z|_∞>1} |z|^{-a} dz and
/// D = ∫_{|z|_∞>1} Δ|z|^{-a} dz.
fn cube_complement_constants(n: usize, s: f64) -> (f64, f64) {
    let a = n as f64 + 2.0 * s;
    let gl = gauss_legendre(64);
    let face = |p: f64| -> f64 {
        // ∫_{[-1,1]^{N-1}} (1 + |y|²)^{-p/2} dy
        match n {
            2 => gl.integrate(|y| (1.0 + y * y).powf(-0.5 * p)),
            _ => gl.integrate(|y| gl.integrate(|x| (1.0 + x * x + y * y).powf(-0.5 * p))),
        }
    };
    let faces = 2.0 * n as f64;
    let c = faces * face(a) / (2.0 * s);
    let d = a * faces * face(a + 2.0);
    (c, d)
}

fn lattice_total(table: &KernelTable) -> f64 {
    lattice_total_truncated(table, if table.dim == 2 { 2000 } else { 200 })
}

/// Σ K̃ over 0 < |k|_∞ ≤ m plus the continuum tail beyond.
pub fn lattice_total_truncated(table: &KernelTable, m: i64) -> f64 {
    let n = table.dim;
    let s = table.s;
    // first hyper-octant with multiplicities
    let total: f64 = (0..=m)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            let mi = if i == 0 { 1.0 } else { 2.0 };
            if n == 2 {
                for j in 0..=m {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    let mj = if j == 0 { 1.0 } else { 2.0 };
                    acc += mi * mj * table.k_tilde(&[i, j]);
                }
            } else {
                for j in 0..=m {
                    let mj = if j == 0 { 1.0 } else { 2.0 };
                    for l in 0..=m {
                        if i == 0 && j == 0 && l == 0 {
                            continue;
                        }
                        let ml = if l == 0 { 1.0 } else { 2.0 };
                        acc += mi * mj * ml * table.k_tilde(&[i, j, l]);
                    }
                }
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let (c, d) = cube_complement_constants(n, s);
    let rho = m as f64 + 0.5;
    total + c * rho.powf(-2.0 * s) + d * rho.powf(-2.0 * s - 2.0) / 24.0
}

/// Per-layer totals for cells in the half-space {x_N ≥ 0}: entry l is
/// Σ K̃(k) over k ≠ 0 with k_N ≤ l.
pub fn halfspace_layer_totals(table: &KernelTable, layers: usize) -> Vec<f64> {
    let n = table.dim;
    let s = table.s;
    let a = n as f64 + 2.0 * s;
    let direct = 8usize;
    let mp: i64 = if n == 2 { 2000 } else { 200 };
    let rho = mp as f64 + 0.5;
    // tail of the transverse sum beyond |k'|_∞ > ρ, expanded in m²/ρ²
    let transverse_tail = |m: f64| -> f64 {
        if n == 2 {
            2.0 * (rho.powf(1.0 - a) / (a - 1.0) - 0.5 * a * m * m * rho.powf(-1.0 - a) / (a + 1.0))
        } else {
            let gl = gauss_legendre(64);
            let e2 = |p: f64| 4.0 / (p - 2.0) * gl.integrate(|t| (1.0 + t * t).powf(-0.5 * p));
            rho.powf(2.0 - a) * e2(a) - 0.5 * a * m * m * rho.powf(-a) * e2(a + 2.0)
        }
    };
    let row = |m: i64| -> f64 {
        let mut acc = 0.0;
        if n == 2 {
            for i in -mp..=mp {
                acc += table.k_tilde(&[i, m]);
            }
        } else {
            acc = (-mp..=mp)
                .into_par_iter()
                .map(|i| (-mp..=mp).map(|j| table.k_tilde(&[i, j, m])).sum::<f64>())
                .collect::<Vec<f64>>()
                .iter()
                .sum();
        }
        acc + transverse_tail(m as f64)
    };
    // rows far from the wall through Poisson summation of K + ΔK/12
    let cp = std::f64::consts::PI.powf((n as f64 - 1.0) / 2.0) * gamma_signed((1.0 + 2.0 * s) / 2.0)
        / gamma_signed(a / 2.0);
    let q = (1.0 + 2.0 * s) * (2.0 + 2.0 * s) / 12.0;
    let poisson = |m: f64| cp * (m.powf(-1.0 - 2.0 * s) + q * m.powf(-3.0 - 2.0 * s));
    // Euler–Maclaurin for Σ_{m ≥ A} poisson(m)
    let em_tail = |big_a: f64| -> f64 {
        let p1 = 1.0 + 2.0 * s;
        let p3 = 3.0 + 2.0 * s;
        let int = cp * (big_a.powf(-2.0 * s) / (2.0 * s) + q * big_a.powf(-2.0 - 2.0 * s) / (2.0 + 2.0 * s));
        let f = poisson(big_a);
        let fp = -cp * (p1 * big_a.powf(-p1 - 1.0) + q * p3 * big_a.powf(-p3 - 1.0));
        let fppp = -cp
            * (p1 * (p1 + 1.0) * (p1 + 2.0) * big_a.powf(-p1 - 3.0)
                + q * p3 * (p3 + 1.0) * (p3 + 2.0) * big_a.powf(-p3 - 3.0));
        int + 0.5 * f - fp / 12.0 + fppp / 720.0
    };
    let far_start = (layers + 2).max(direct + 1);
    let mut above = vec![0.0; far_start + 1];
    // above[l] = Σ_{m ≥ l+1} R(m)
    let mut acc = em_tail(far_start as f64 + 1.0);
    above[far_start] = acc;
    for l in (0..far_start).rev() {
        let m = l + 1;
        let r = if m <= direct { row(m as i64) } else { poisson(m as f64) };
        acc += r;
        above[l] = acc;
    }
    (0..layers).map(|l| table.total - above[l]).collect()
}
