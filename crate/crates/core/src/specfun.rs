//! Special functions and closed forms: Gamma, the eigenvalues of the spherical
//! fractional Laplacian, real spherical-harmonic bases, ball volumes and the
//! normalising constant of the curvature linearization.

use serde::{Deserialize, Serialize};
use statrs::function::gamma as sg;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// The pair (N, s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct FracParams {
    pub dim: usize,
    pub s: f64,
}

#[derive(Deserialize)]
struct RawParams {
    dim: usize,
    s: f64,
}

impl TryFrom<RawParams> for FracParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        FracParams::new(r.dim, r.s)
    }
}

impl FracParams {
    pub fn new(dim: usize, s: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!(
                "dimension N must be 2 or 3, got {dim}"
            )));
        }
        if !(s > 0.0 && s < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "fractional order s must lie in the open interval (0, 1/2), got {s}"
            )));
        }
        Ok(FracParams { dim, s })
    }

    /// Kernel exponent N + 2s.
    pub fn kernel_exponent(&self) -> f64 {
        self.dim as f64 + 2.0 * self.s
    }
}

/// Γ(x) for x > 0.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma_fn needs a positive argument, got {x}")));
    }
    Ok(sg::gamma(x))
}

/// Γ(x) for any non-pole real x, negative arguments through reflection.
pub fn gamma_signed(x: f64) -> f64 {
    if x >= 0.5 {
        sg::gamma(x)
    } else {
        PI / ((PI * x).sin() * sg::gamma(1.0 - x))
    }
}

fn gamma_ratio(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        (sg::ln_gamma(a) - sg::ln_gamma(b)).exp()
    } else {
        gamma_signed(a) / gamma_signed(b)
    }
}

/// Eigenvalue λ_k of the spherical fractional Laplacian on S^{N-1}.
pub fn eigenvalue(params: FracParams, k: usize) -> f64 {
    let n = params.dim as f64;
    let s = params.s;
    let pref = PI.powf((n - 1.0) / 2.0) * gamma_signed((1.0 - 2.0 * s) / 2.0)
        / ((1.0 + 2.0 * s) * 2f64.powf(2.0 * s) * gamma_signed((n + 2.0 * s) / 2.0));
    let ratio = |k: usize| {
        let kf = k as f64;
        gamma_ratio(
            (2.0 * kf + n + 2.0 * s) / 2.0,
            (2.0 * kf + n - 2.0 * s - 2.0) / 2.0,
        )
    };
    if k == 0 {
        return 0.0;
    }
    pref * (ratio(k) - ratio(0))
}

fn binom(n: i64, k: i64) -> i64 {
    if k < 0 || n < 0 || k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Dimension of the space of degree-k spherical harmonics on S^{N-1}.
pub fn harmonic_dim(n: usize, k: usize) -> usize {
    // N_k = number of monomials of degree k in N variables
    let nk = |k: i64| binom(k + n as i64 - 1, n as i64 - 1);
    (nk(k as i64) - nk(k as i64 - 2)) as usize
}

/// Volume of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    PI.powf(h) / sg::gamma(h + 1.0)
}

/// Surface measure of S^{n-1}.
pub fn sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// d_{N,s} = (1-2s) / ((N-1) |B_1^{N-1}|).
pub fn d_const(params: FracParams) -> f64 {
    let n = params.dim;
    (1.0 - 2.0 * params.s) / ((n as f64 - 1.0) * unit_ball_volume(n - 1))
}

/// Nonlocal mean curvature c_{N,s} of the unit sphere in all of R^N.
pub fn sphere_curvature(params: FracParams) -> f64 {
    eigenvalue(params, 1) / params.s
}

/// P_s(B_1) in all of R^N.
pub fn ball_perimeter(params: FracParams) -> f64 {
    let n = params.dim as f64;
    sphere_area(params.dim) * sphere_curvature(params) / (n - 2.0 * params.s)
}

/// Orthonormal real spherical-harmonic basis up to a maximal degree, with a
/// quadrature node set that integrates products of basis functions exactly.
///
/// Within each degree k the functions are ordered as
/// `cos(mφ)`-type for m = 1..k, then `sin(mφ)`-type for m = 1..k, then the
/// zonal function (N = 3 only). For k = 1 this is (x, y[, z]) up to scale.
#[derive(Debug, Clone)]
pub struct HarmonicBasis {
    pub params: FracParams,
    pub max_degree: usize,
    pub dims: Vec<usize>,
    offsets: Vec<usize>,
    nodes: Vec<[f64; 3]>,
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl HarmonicBasis {
    /// Default node counts: 256 on the circle, 48×96 on S².
    pub fn new(params: FracParams, max_degree: usize) -> Result<Self> {
        match params.dim {
            2 => Self::with_nodes(params, max_degree, 256, 0),
            _ => Self::with_nodes(params, max_degree, 48, 96),
        }
    }

    /// `n_a` is the number of circle nodes (N = 2) or polar nodes (N = 3);
    /// `n_b` the azimuthal count for N = 3 (ignored for N = 2).
    pub fn with_nodes(params: FracParams, max_degree: usize, n_a: usize, n_b: usize) -> Result<Self> {
        let l = max_degree;
        let (nodes, weights) = match params.dim {
            2 => {
                if n_a <= 2 * l {
                    return Err(Error::InvalidParameter(format!(
                        "{n_a} circle nodes cannot resolve degree {l}"
                    )));
                }
                let h = 2.0 * PI / n_a as f64;
                let nodes = (0..n_a)
                    .map(|j| {
                        let t = j as f64 * h;
                        [t.cos(), t.sin(), 0.0]
                    })
                    .collect();
                (nodes, vec![h; n_a])
            }
            _ => {
                if n_a <= l || n_b <= 2 * l {
                    return Err(Error::InvalidParameter(format!(
                        "{n_a}x{n_b} sphere grid cannot resolve degree {l}"
                    )));
                }
                let gl = gauss_legendre(n_a);
                let hb = 2.0 * PI / n_b as f64;
                let mut nodes = Vec::with_capacity(n_a * n_b);
                let mut weights = Vec::with_capacity(n_a * n_b);
                for (z, wz) in gl.nodes.iter().zip(&gl.weights) {
                    let rho = (1.0 - z * z).sqrt();
                    for j in 0..n_b {
                        let phi = j as f64 * hb;
                        nodes.push([rho * phi.cos(), rho * phi.sin(), *z]);
                        weights.push(wz * hb);
                    }
                }
                (nodes, weights)
            }
        };
        let dims: Vec<usize> = (0..=l).map(|k| harmonic_dim(params.dim, k)).collect();
        let mut offsets = vec![0];
        for d in &dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        let nf = *offsets.last().unwrap();
        let mut values = Vec::with_capacity(nodes.len() * nf);
        for p in &nodes {
            let (v, _) = solid_harmonics(params.dim, l, p, false);
            values.extend_from_slice(&v);
        }
        Ok(HarmonicBasis {
            params,
            max_degree: l,
            dims,
            offsets,
            nodes,
            weights,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// Total number of basis functions.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index range of the degree-k block.
    pub fn degree_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn degree_of(&self, index: usize) -> usize {
        (0..=self.max_degree)
            .find(|&k| self.degree_range(k).contains(&index))
            .expect("index in range")
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Node as a length-N slice of a unit vector.
    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j][..self.dim()]
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    /// Value of basis function i at node j.
    pub fn value(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.len() + i]
    }

    /// Values of the degree-k functions at a unit vector.
    pub fn eval_harmonics(&self, k: usize, point: &[f64]) -> Result<Vec<f64>> {
        if k > self.max_degree {
            return Err(Error::InvalidParameter(format!(
                "degree {k} exceeds basis degree {}",
                self.max_degree
            )));
        }
        let p = unit_point(self.dim(), point)?;
        let (v, _) = solid_harmonics(self.dim(), self.max_degree, &p, false);
        Ok(v[self.degree_range(k)].to_vec())
    }

    /// All basis values and tangential gradients at a unit vector (no check).
    pub fn eval_all(&self, p: &[f64; 3], with_grad: bool) -> (Vec<f64>, Vec<[f64; 3]>) {
        solid_harmonics(self.dim(), self.max_degree, p, with_grad)
    }

    /// Node-set inner products ⟨f_i, f_j⟩.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut g = vec![vec![0.0; n]; n];
        for j in 0..self.num_nodes() {
            let w = self.weights[j];
            let row = &self.values[j * n..(j + 1) * n];
            for a in 0..n {
                for b in 0..n {
                    g[a][b] += w * row[a] * row[b];
                }
            }
        }
        g
    }

    /// Coefficients of the L² projection of node values.
    pub fn project(&self, node_values: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut c = vec![0.0; n];
        for (j, fv) in node_values.iter().enumerate() {
            let w = self.weights[j] * fv;
            let row = &self.values[j * n..(j + 1) * n];
            for i in 0..n {
                c[i] += w * row[i];
            }
        }
        c
    }

    /// Node values of an expansion.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..self.num_nodes())
            .map(|j| {
                self.values[j * n..(j + 1) * n]
                    .iter()
                    .zip(coeffs)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Value of an expansion at an arbitrary unit vector.
    pub fn evaluate(&self, coeffs: &[f64], p: &[f64; 3]) -> f64 {
        let (v, _) = self.eval_all(p, false);
        v.iter().zip(coeffs).map(|(a, b)| a * b).sum()
    }

    /// Value and tangential gradient of an expansion at a unit vector.
    pub fn evaluate_with_grad(&self, coeffs: &[f64], p: &[f64; 3]) -> (f64, [f64; 3]) {
        let (v, g) = self.eval_all(p, true);
        let mut val = 0.0;
        let mut grad = [0.0; 3];
        for i in 0..coeffs.len() {
            val += v[i] * coeffs[i];
            for d in 0..3 {
                grad[d] += g[i][d] * coeffs[i];
            }
        }
        (val, grad)
    }

    /// Integral over the sphere of node values.
    pub fn integrate(&self, node_values: &[f64]) -> f64 {
        node_values.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }

    /// Coefficient vector of the function `scale·f_i`.
    pub fn unit_coeffs(&self, i: usize, scale: f64) -> Vec<f64> {
        let mut c = vec![0.0; self.len()];
        c[i] = scale;
        c
    }
}

/// Pads a unit vector of R^N to three components.
pub fn unit_point(dim: usize, point: &[f64]) -> Result<[f64; 3]> {
    if point.len() != dim {
        return Err(Error::Domain(format!(
            "expected a point of dimension {dim}, got {}",
            point.len()
        )));
    }
    let norm2: f64 = point.iter().map(|x| x * x).sum();
    if (norm2.sqrt() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "point is not on the unit sphere (|p| = {})",
            norm2.sqrt()
        )));
    }
    let mut p = [0.0; 3];
    p[..dim].copy_from_slice(point);
    Ok(p)
}

/// Orthonormal harmonics of degree ≤ l evaluated at a unit vector through
/// their homogeneous (solid) extensions; gradients are tangential.
fn solid_harmonics(dim: usize, l: usize, p: &[f64; 3], with_grad: bool) -> (Vec<f64>, Vec<[f64; 3]>) {
    let (x, y, z) = (p[0], p[1], p[2]);
    // C_m + i S_m = (x + i y)^m
    let mut cm = vec![1.0; l + 1];
    let mut sm = vec![0.0; l + 1];
    for m in 1..=l {
        cm[m] = x * cm[m - 1] - y * sm[m - 1];
        sm[m] = x * sm[m - 1] + y * cm[m - 1];
    }
    let nf: usize = (0..=l).map(|k| harmonic_dim(dim, k)).sum();
    let mut vals = Vec::with_capacity(nf);
    let mut grads = Vec::with_capacity(if with_grad { nf } else { 0 });
    let tangential = |g: [f64; 3], f: f64, k: usize| -> [f64; 3] {
        let kf = k as f64;
        [g[0] - kf * f * x, g[1] - kf * f * y, g[2] - kf * f * z]
    };
    if dim == 2 {
        let c0 = 1.0 / (2.0 * PI).sqrt();
        vals.push(c0);
        if with_grad {
            grads.push([0.0; 3]);
        }
        let c = 1.0 / PI.sqrt();
        for k in 1..=l {
            let kf = k as f64;
            vals.push(c * cm[k]);
            vals.push(c * sm[k]);
            if with_grad {
                let gc = [c * kf * cm[k - 1], -c * kf * sm[k - 1], 0.0];
                let gs = [c * kf * sm[k - 1], c * kf * cm[k - 1], 0.0];
                grads.push(tangential(gc, c * cm[k], k));
                grads.push(tangential(gs, c * sm[k], k));
            }
        }
        return (vals, grads);
    }
    // N = 3: Q_l^m(z, ρ=r²) with r^l P_l^m(cos θ) e^{imφ} = (x+iy)^m Q_l^m.
    let rho = 1.0;
    let idx = |k: usize, m: usize| k * (l + 1) + m;
    let sz = (l + 1) * (l + 1);
    let mut q = vec![0.0; sz];
    let mut qz = vec![0.0; sz];
    let mut qr = vec![0.0; sz];
    for m in 0..=l {
        let mut dfact = 1.0;
        for i in 0..m {
            dfact *= (2 * i + 1) as f64;
        }
        q[idx(m, m)] = dfact;
        if m < l {
            q[idx(m + 1, m)] = (2 * m + 1) as f64 * z * dfact;
            qz[idx(m + 1, m)] = (2 * m + 1) as f64 * dfact;
        }
        for k in (m + 2)..=l {
            let a = (2 * k - 1) as f64;
            let b = (k + m - 1) as f64;
            let d = (k - m) as f64;
            let (q1, q2) = (q[idx(k - 1, m)], q[idx(k - 2, m)]);
            q[idx(k, m)] = (a * z * q1 - b * rho * q2) / d;
            qz[idx(k, m)] = (a * (q1 + z * qz[idx(k - 1, m)]) - b * rho * qz[idx(k - 2, m)]) / d;
            qr[idx(k, m)] = (a * z * qr[idx(k - 1, m)] - b * (q2 + rho * qr[idx(k - 2, m)])) / d;
        }
    }
    for k in 0..=l {
        let norm = |m: usize| {
            let mut ratio = 1.0;
            for i in (k - m + 1)..=(k + m) {
                ratio /= i as f64;
            }
            let base = ((2 * k + 1) as f64 / (4.0 * PI) * ratio).sqrt();
            if m > 0 {
                base * 2f64.sqrt()
            } else {
                base
            }
        };
        let push = |vals: &mut Vec<f64>, grads: &mut Vec<[f64; 3]>, a: f64, ax: f64, ay: f64, m: usize| {
            let nn = norm(m);
            let qq = q[idx(k, m)];
            let f = nn * a * qq;
            vals.push(f);
            if with_grad {
                let dz = qz[idx(k, m)];
                let dr = qr[idx(k, m)];
                let g = [
                    nn * (ax * qq + a * 2.0 * x * dr),
                    nn * (ay * qq + a * 2.0 * y * dr),
                    nn * a * (dz + 2.0 * z * dr),
                ];
                grads.push(tangential(g, f, k));
            }
        };
        for m in 1..=k {
            let mf = m as f64;
            push(&mut vals, &mut grads, cm[m], mf * cm[m - 1], -mf * sm[m - 1], m);
        }
        for m in 1..=k {
            let mf = m as f64;
            push(&mut vals, &mut grads, sm[m], mf * sm[m - 1], mf * cm[m - 1], m);
        }
        push(&mut vals, &mut grads, 1.0, 0.0, 0.0, 0);
    }
    (vals, grads)
}
