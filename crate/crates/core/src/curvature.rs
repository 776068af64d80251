//! Nonlocal mean curvature of star-shaped boundaries, the spherical fractional
//! Laplacian and the finite-difference check of the curvature linearization.
//!
//! The curvature in all of R^N is evaluated through the divergence theorem,
//! H(x) = (1/s) ∫_{∂E} (y − x)·ν(y) |y − x|^{-(N+2s)} dσ(y),
//! whose integrand is only weakly singular (|y − x|^{2−N−2s}). In polar
//! coordinates around x on the sphere the singular factor is α^{-2s}, which a
//! Gauss–Jacobi rule integrates exactly; the rest of the sphere uses
//! Gauss–Legendre. The relative curvature subtracts V_Ω(x).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::domains::{Domain, Region, StarSurface};
use crate::error::{Error, Result};
use crate::potential::{potential_with, PotentialOpts};
use crate::quadrature::{endpoint_singular_rule, gauss_legendre, Rule};
use crate::specfun::{d_const, eigenvalue, unit_point, FracParams, HarmonicBasis};

/// Quadrature sizes for the angular integral around the evaluation point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvatureOpts {
    /// Gauss–Jacobi nodes on the near half (α ≤ π/2).
    pub near_nodes: usize,
    /// Gauss–Legendre nodes on the far half.
    pub far_nodes: usize,
    /// Trapezoid nodes in the azimuth around the evaluation point (N = 3).
    pub azimuth_nodes: usize,
}

impl Default for CurvatureOpts {
    fn default() -> Self {
        CurvatureOpts {
            near_nodes: 24,
            far_nodes: 20,
            azimuth_nodes: 48,
        }
    }
}

impl CurvatureOpts {
    /// Cheaper rule for the Galerkin loop in three dimensions.
    pub fn coarse() -> Self {
        CurvatureOpts {
            near_nodes: 16,
            far_nodes: 12,
            azimuth_nodes: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvatureSplit {
    /// Part of the boundary integral within angle π/2 of the evaluation point.
    pub near: f64,
    pub far: f64,
    /// −V_Ω(x); zero in all of space.
    pub complement: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub node: Vec<f64>,
    pub point: Vec<f64>,
    pub value: f64,
    pub split: CurvatureSplit,
}

/// Precomputed angular rules; reuse across many evaluations.
#[derive(Debug, Clone)]
pub struct AngularRule {
    dim: usize,
    /// (α, weight) pairs on (0, π], weights including sin α for N = 3; the
    /// flag marks the near half.
    alpha: Vec<(f64, f64, bool)>,
    azimuth: usize,
}

impl AngularRule {
    /// Rule for integrands that behave like α^{-2s} near α = 0.
    pub fn new(dim: usize, s: f64, opts: &CurvatureOpts) -> Self {
        let half = PI / 2.0;
        let gj = endpoint_singular_rule(opts.near_nodes, s);
        let gl: Rule = gauss_legendre(opts.far_nodes).mapped(half, PI);
        let jac = |a: f64| if dim == 3 { a.sin() } else { 1.0 };
        let mut alpha = Vec::new();
        for (t, w) in gj.nodes.iter().zip(&gj.weights) {
            let a = half * t;
            // weight w contains t^{-2s}; undo it so the rule applies to plain integrands
            alpha.push((a, half * w * t.powf(2.0 * s) * jac(a), true));
        }
        for (a, w) in gl.nodes.iter().zip(&gl.weights) {
            alpha.push((*a, w * jac(*a), false));
        }
        AngularRule {
            dim,
            alpha,
            azimuth: opts.azimuth_nodes,
        }
    }

    /// Directions θ'(α, β) about θ0 with weights; for N = 2 the two sides.
    fn for_each<F: FnMut(&[f64; 3], f64, bool)>(&self, theta0: &[f64; 3], mut f: F) {
        if self.dim == 2 {
            let (c0, s0) = (theta0[0], theta0[1]);
            for &(a, w, near) in &self.alpha {
                let (ca, sa) = (a.cos(), a.sin());
                for sg in [1.0, -1.0] {
                    let p = [c0 * ca - sg * s0 * sa, s0 * ca + sg * c0 * sa, 0.0];
                    f(&p, w, near);
                }
            }
        } else {
            let (e1, e2) = frame(theta0);
            let nb = self.azimuth;
            let hb = 2.0 * PI / nb as f64;
            let cs: Vec<(f64, f64)> = (0..nb).map(|j| ((j as f64 * hb).cos(), (j as f64 * hb).sin())).collect();
            for &(a, w, near) in &self.alpha {
                let (ca, sa) = (a.cos(), a.sin());
                for &(cb, sb) in &cs {
                    let mut p = [0.0; 3];
                    for i in 0..3 {
                        p[i] = ca * theta0[i] + sa * (cb * e1[i] + sb * e2[i]);
                    }
                    f(&p, w * hb, near);
                }
            }
        }
    }
}

/// Orthonormal completion of a unit vector.
fn frame(t: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let a = if t[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = a[0] * t[0] + a[1] * t[1] + a[2] * t[2];
    let mut e1 = [a[0] - d * t[0], a[1] - d * t[1], a[2] - d * t[2]];
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|v| *v /= n);
    let e2 = [
        t[1] * e1[2] - t[2] * e1[1],
        t[2] * e1[0] - t[0] * e1[2],
        t[0] * e1[1] - t[1] * e1[0],
    ];
    (e1, e2)
}

/// H in all of R^N at the boundary point over θ0, split near/far.
pub fn curvature_all_space(surface: &StarSurface, params: FracParams, theta0: &[f64; 3], rule: &AngularRule) -> (f64, f64) {
    let n = surface.dim();
    let s = params.s;
    let expo = 0.5 * (n as f64 + 2.0 * s);
    let r0 = surface.radius(theta0);
    let x = [r0 * theta0[0], r0 * theta0[1], r0 * theta0[2]];
    let (mut near, mut far) = (0.0, 0.0);
    rule.for_each(theta0, |p, w, is_near| {
        let (r, g) = surface.radius_with_grad(p);
        let rn = if n == 3 { r } else { 1.0 };
        let mut dot = 0.0;
        let mut d2 = 0.0;
        for i in 0..3 {
            let d = r * p[i] - x[i];
            let a = rn * (r * p[i] - g[i]);
            dot += d * a;
            d2 += d * d;
        }
        let v = w * dot / d2.powf(expo);
        if is_near {
            near += v;
        } else {
            far += v;
        }
    });
    (near / s, far / s)
}

/// H_s^Ω at the boundary point ξ + (1 + w(θ))θ; Ω = None means all of R^N.
pub fn mean_curvature(
    surface: &StarSurface,
    omega: Option<&Domain>,
    params: FracParams,
    theta: &[f64],
    opts: &CurvatureOpts,
) -> Result<CurvatureSample> {
    let rule = AngularRule::new(surface.dim(), params.s, opts);
    mean_curvature_with_rule(surface, omega, params, theta, &rule)
}

pub fn mean_curvature_with_rule(
    surface: &StarSurface,
    omega: Option<&Domain>,
    params: FracParams,
    theta: &[f64],
    rule: &AngularRule,
) -> Result<CurvatureSample> {
    if surface.dim() != params.dim {
        return Err(Error::InvalidParameter("surface and parameters disagree on N".into()));
    }
    let t = unit_point(surface.dim(), theta)?;
    let point = surface.surface_point(theta)?;
    let complement = match omega {
        None => 0.0,
        Some(dom) => {
            if !dom.contains(&point) || dom.boundary_distance(&point) <= 0.0 {
                return Err(Error::NotInterior(format!("boundary point {point:?} is not inside Ω")));
            }
            -potential_with(dom, &point, params, &PotentialOpts::default())?
        }
    };
    let (near, far) = curvature_all_space(surface, params, &t, rule);
    Ok(CurvatureSample {
        node: theta.to_vec(),
        point,
        value: near + far + complement,
        split: CurvatureSplit { near, far, complement },
    })
}

/// Curvature at every node of the surface's basis (parallel over nodes).
pub fn curvature_profile(
    surface: &StarSurface,
    omega: Option<&Domain>,
    params: FracParams,
    opts: &CurvatureOpts,
) -> Result<Vec<f64>> {
    let basis = surface.basis.clone();
    curvature_on(surface, omega, params, opts, &basis)
}

/// Curvature at every node of `nodes` (which may differ from the surface basis).
pub fn curvature_on(
    surface: &StarSurface,
    omega: Option<&Domain>,
    params: FracParams,
    opts: &CurvatureOpts,
    nodes: &HarmonicBasis,
) -> Result<Vec<f64>> {
    let rule = AngularRule::new(surface.dim(), params.s, opts);
    (0..nodes.num_nodes())
        .into_par_iter()
        .map(|j| mean_curvature_with_rule(surface, omega, params, nodes.node(j), &rule).map(|c| c.value))
        .collect()
}

/// Diagonal action of L_s on harmonic coefficients.
pub fn spherical_frac_laplacian(coeffs: &[f64], params: FracParams, basis: &HarmonicBasis) -> Vec<f64> {
    let mut out = coeffs.to_vec();
    for k in 0..=basis.max_degree {
        let lk = eigenvalue(params, k);
        for i in basis.degree_range(k) {
            if i < out.len() {
                out[i] *= lk;
            }
        }
    }
    out
}

/// Principal-value quadrature of L_s f(θ) = PV ∫_S (f(θ) − f(σ)) |θ − σ|^{-(N+2s)} dσ
/// for f given by harmonic coefficients, using antipodal symmetrization
/// about θ.
pub fn frac_laplacian_pointwise(
    coeffs: &[f64],
    basis: &HarmonicBasis,
    params: FracParams,
    theta: &[f64],
    opts: &CurvatureOpts,
) -> Result<f64> {
    let t = unit_point(basis.dim(), theta)?;
    let n = basis.dim() as f64;
    let s = params.s;
    let f0 = basis.evaluate(coeffs, &t);
    let rule = AngularRule::new(basis.dim(), s, opts);
    let mut acc = 0.0;
    // each direction is visited once; (f0 − f(σ)) summed over σ and its
    // mirror image about θ gives the second difference
    rule.for_each(&t, |p, w, _| {
        let chord2 = 2.0 - 2.0 * (p[0] * t[0] + p[1] * t[1] + p[2] * t[2]);
        let mirror = {
            let c = p[0] * t[0] + p[1] * t[1] + p[2] * t[2];
            [2.0 * c * t[0] - p[0], 2.0 * c * t[1] - p[1], 2.0 * c * t[2] - p[2]]
        };
        let second = 2.0 * f0 - basis.evaluate(coeffs, p) - basis.evaluate(coeffs, &mirror);
        acc += 0.5 * w * second / chord2.powf(0.5 * (n + 2.0 * s));
    });
    Ok(acc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearizationRow {
    pub t: f64,
    /// sup |FD − prediction| / sup |prediction| (absolute sup |FD| when the
    /// prediction vanishes).
    pub max_rel_dev: f64,
    pub per_degree_dev: BTreeMap<usize, f64>,
    pub fd_sup: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub dim: usize,
    pub s: f64,
    pub d_const: f64,
    pub normalization: String,
    pub rows: Vec<LinearizationRow>,
}

/// Central differences of the curvature of ∂𝔹(0, ±tφ) against the
/// linearized operator. Compared in the normalization d_{N,s}·H, for which
/// the linearization reads 2d_{N,s}(L_s − λ_1)φ; the raw curvature has the
/// same relative deviation against 2(L_s − λ_1)φ.
pub fn linearization_check(
    phi: &[f64],
    params: FracParams,
    basis: std::sync::Arc<HarmonicBasis>,
    t_list: &[f64],
    opts: &CurvatureOpts,
) -> Result<LinearizationReport> {
    let n = basis.dim();
    let d = d_const(params);
    let l1 = eigenvalue(params, 1);
    let mut pred = spherical_frac_laplacian(phi, params, &basis);
    for (p, f) in pred.iter_mut().zip(phi) {
        *p = 2.0 * d * (*p - l1 * f);
    }
    let pred_nodes = basis.synthesize(&pred);
    let pred_sup = pred_nodes.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let center = vec![0.0; n];
    let mut rows = Vec::new();
    for &t in t_list {
        let plus: Vec<f64> = phi.iter().map(|v| t * v).collect();
        let minus: Vec<f64> = phi.iter().map(|v| -t * v).collect();
        let sp = StarSurface::new(&center, plus, basis.clone())?;
        let sm = StarSurface::new(&center, minus, basis.clone())?;
        let hp = curvature_profile(&sp, None, params, opts)?;
        let hm = curvature_profile(&sm, None, params, opts)?;
        let fd: Vec<f64> = hp.iter().zip(&hm).map(|(a, b)| d * (a - b) / (2.0 * t)).collect();
        let fd_sup = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dev_sup = fd
            .iter()
            .zip(&pred_nodes)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let max_rel_dev = if pred_sup > 1e-14 { dev_sup / pred_sup } else { dev_sup };
        let fd_c = basis.project(&fd);
        let mut per_degree_dev = BTreeMap::new();
        for k in 0..=basis.max_degree {
            let r = basis.degree_range(k);
            let pk: f64 = r.clone().map(|i| pred[i] * pred[i]).sum::<f64>().sqrt();
            let phik: f64 = r.clone().map(|i| phi[i] * phi[i]).sum::<f64>().sqrt();
            if phik == 0.0 {
                continue;
            }
            let dk: f64 = r.map(|i| (fd_c[i] - pred[i]).powi(2)).sum::<f64>().sqrt();
            per_degree_dev.insert(k, if pk > 1e-14 { dk / pk } else { dk });
        }
        rows.push(LinearizationRow {
            t,
            max_rel_dev,
            per_degree_dev,
            fd_sup,
        });
    }
    Ok(LinearizationReport {
        dim: n,
        s: params.s,
        d_const: d,
        normalization: "d_{N,s} * H".into(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive;
    use crate::specfun::sphere_curvature;
    use std::sync::Arc;

    fn p(n: usize, s: f64) -> FracParams {
        FracParams::new(n, s).unwrap()
    }

    /// Unit sphere curvature from the ray form (1/s)∫_{ω·ν<0} (2|ω·ν|)^{-2s} dω.
    fn sphere_oracle(n: usize, s: f64) -> f64 {
        // substitution u = v^q, q = 1/(1-2s), removes the endpoint singularity
        let q = 1.0 / (1.0 - 2.0 * s);
        let smooth = |g: &dyn Fn(f64) -> f64, a: f64| {
            adaptive(|v: f64| q * v.powf(q - 1.0) * g(v.powf(q)), &[0.0, a.powf(1.0 / q)], 1e-15, 1e-14, 2000).value
        };
        let v = if n == 2 {
            // ω·ν = cos φ < 0 on (π/2, 3π/2); |cos φ| = sin u
            2.0 * smooth(&|u: f64| (2.0 * u.sin()).powf(-2.0 * s), PI / 2.0)
        } else {
            2.0 * PI * smooth(&|z: f64| (2.0 * z).powf(-2.0 * s), 1.0)
        };
        v / s
    }

    #[test]
    fn sphere_curvature_matches_ray_oracle_and_closed_form() {
        for (n, s) in [(2, 0.25), (2, 0.1), (2, 0.4), (3, 0.25), (3, 0.1)] {
            let b = Arc::new(HarmonicBasis::with_nodes(p(n, s), 2, 16, 16).unwrap());
            let sph = StarSurface::sphere(&vec![0.0; n], b.clone());
            let theta = b.node(3).to_vec();
            let h = mean_curvature(&sph, None, p(n, s), &theta, &CurvatureOpts::default()).unwrap();
            let oracle = sphere_oracle(n, s);
            assert!((h.value / oracle - 1.0).abs() < 1e-10, "N={n} s={s} {} {oracle}", h.value);
            assert!((sphere_curvature(p(n, s)) / oracle - 1.0).abs() < 1e-10);
            assert!((h.split.near + h.split.far - h.value).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_paths_agree() {
        for (n, s) in [(2, 0.25), (3, 0.4)] {
            let b = HarmonicBasis::with_nodes(p(n, s), 4, 16, 16).unwrap();
            for i in 0..b.len() {
                let c = b.unit_coeffs(i, 1.0);
                let k = b.degree_of(i);
                let th = [0.6, 0.8, 0.0];
                let th3 = [0.48, 0.64, 0.6];
                let t: &[f64] = if n == 2 { &th[..2] } else { &th3 };
                let q = frac_laplacian_pointwise(&c, &b, p(n, s), t, &CurvatureOpts::default()).unwrap();
                let tt = unit_point(n, t).unwrap();
                let d = eigenvalue(p(n, s), k) * b.evaluate(&c, &tt);
                assert!((q - d).abs() < 1e-9 * eigenvalue(p(n, s), k.max(1)), "N={n} i={i} {q} {d}");
            }
        }
    }

    #[test]
    fn translation_invariance_is_exact() {
        let b = Arc::new(HarmonicBasis::new(p(2, 0.3), 4).unwrap());
        let mut c = vec![0.0; b.len()];
        c[3] = 0.05;
        c[6] = -0.02;
        let s0 = StarSurface::new(&[0.0, 0.0], c.clone(), b.clone()).unwrap();
        let s1 = s0.translated(&[3.5, -1.25]);
        let th = b.node(17).to_vec();
        let o = CurvatureOpts::default();
        let a = mean_curvature(&s0, None, p(2, 0.3), &th, &o).unwrap().value;
        let bb = mean_curvature(&s1, None, p(2, 0.3), &th, &o).unwrap().value;
        assert_eq!(a, bb);
    }

    #[test]
    fn point_outside_omega_is_error() {
        let b = Arc::new(HarmonicBasis::new(p(2, 0.3), 2).unwrap());
        let s0 = StarSurface::sphere(&[0.0, 0.0], b);
        let small = Domain::unit_ball(2).dilate(0.5).unwrap();
        assert!(mean_curvature(&s0, Some(&small), p(2, 0.3), &[1.0, 0.0], &CurvatureOpts::default()).is_err());
    }
}
