//! The potential V_Ω(x) = ∫_{Ω^c} |x−y|^{-(N+2s)} dy, its finite-difference
//! derivatives, critical points and blow-up at the boundary.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::domains::{Domain, Region, Shape};
use crate::error::{Error, Result};
use crate::quadrature::adaptive;
use crate::specfun::FracParams;

/// Angular quadrature controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PotentialOpts {
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for PotentialOpts {
    fn default() -> Self {
        PotentialOpts {
            rel_tol: 1e-12,
            max_panels: 4000,
        }
    }
}

/// Radial part ∫ r^{-1-2s} dr over the outside stretches of a ray starting
/// inside the set. `intervals` are the inside stretches for t ≥ 0.
pub fn ray_contribution(intervals: &[(f64, f64)], s: f64) -> f64 {
    let tail = |t: f64| if t.is_finite() { t.powf(-2.0 * s) } else { 0.0 };
    let mut acc = 0.0;
    for (k, iv) in intervals.iter().enumerate() {
        let a = iv.1;
        let b = intervals.get(k + 1).map(|n| n.0).unwrap_or(f64::INFINITY);
        if a.is_finite() && a > 0.0 {
            acc += tail(a) - tail(b);
        }
    }
    acc / (2.0 * s)
}

fn check_interior(domain: &Domain, x: &[f64]) -> Result<()> {
    if x.len() != domain.dim {
        return Err(Error::InvalidParameter("point dimension does not match domain".into()));
    }
    if !domain.contains(x) || domain.boundary_distance(x) <= 0.0 {
        return Err(Error::NotInterior(format!("{x:?} is not an interior point")));
    }
    Ok(())
}

/// V_Ω(x).
pub fn potential(domain: &Domain, x: &[f64], params: FracParams) -> Result<f64> {
    potential_with(domain, x, params, &PotentialOpts::default())
}

pub fn potential_with(domain: &Domain, x: &[f64], params: FracParams, opts: &PotentialOpts) -> Result<f64> {
    check_interior(domain, x)?;
    Ok(potential_unchecked(domain, x, params, opts))
}

fn potential_unchecked(domain: &Domain, x: &[f64], params: FracParams, opts: &PotentialOpts) -> f64 {
    let s = params.s;
    let ray = |d: &[f64]| ray_contribution(&domain.ray_intervals(x, d), s);
    match domain.dim {
        2 => {
            let breaks: Vec<f64> = (0..=16).map(|k| k as f64 * PI / 8.0).collect();
            adaptive(
                |phi: f64| ray(&[phi.cos(), phi.sin()]),
                &breaks,
                0.0,
                opts.rel_tol,
                opts.max_panels,
            )
            .value
        }
        _ => {
            let breaks: Vec<f64> = (0..=8).map(|k| -1.0 + k as f64 * 0.25).collect();
            let inner_breaks: Vec<f64> = (0..=8).map(|k| k as f64 * PI / 4.0).collect();
            adaptive(
                |z: f64| {
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    adaptive(
                        |phi: f64| ray(&[rho * phi.cos(), rho * phi.sin(), z]),
                        &inner_breaks,
                        0.0,
                        opts.rel_tol,
                        opts.max_panels,
                    )
                    .value
                },
                &breaks,
                0.0,
                opts.rel_tol * 10.0,
                opts.max_panels,
            )
            .value
        }
    }
}

/// ∫_{B_r(c)} V_Ω for a ball compactly inside Ω, by Gauss quadrature in
/// polar coordinates.
pub fn ball_potential_integral(
    domain: &Domain,
    center: &[f64],
    radius: f64,
    params: FracParams,
    opts: &PotentialOpts,
) -> Result<f64> {
    check_interior(domain, center)?;
    if domain.boundary_distance(center) <= radius {
        return Err(Error::NotInterior(format!(
            "ball of radius {radius} at {center:?} reaches the boundary"
        )));
    }
    let n = domain.dim;
    let radial = crate::quadrature::gauss_legendre(12).mapped(0.0, radius);
    let dirs: Vec<(Vec<f64>, f64)> = match n {
        2 => {
            let m = 32;
            (0..m)
                .map(|j| {
                    let a = 2.0 * PI * j as f64 / m as f64;
                    (vec![a.cos(), a.sin()], 2.0 * PI / m as f64)
                })
                .collect()
        }
        _ => {
            let zr = crate::quadrature::gauss_legendre(12);
            let m = 24;
            let mut v = Vec::new();
            for (z, wz) in zr.nodes.iter().zip(&zr.weights) {
                let rho = (1.0 - z * z).sqrt();
                for j in 0..m {
                    let a = 2.0 * PI * j as f64 / m as f64;
                    v.push((vec![rho * a.cos(), rho * a.sin(), *z], wz * 2.0 * PI / m as f64));
                }
            }
            v
        }
    };
    let terms: Vec<f64> = radial
        .nodes
        .par_iter()
        .zip(&radial.weights)
        .map(|(r, wr)| {
            let mut acc = 0.0;
            for (d, wd) in &dirs {
                let x: Vec<f64> = (0..n).map(|i| center[i] + r * d[i]).collect();
                acc += wd * potential_unchecked(domain, &x, params, opts);
            }
            wr * r.powi(n as i32 - 1) * acc
        })
        .collect();
    Ok(terms.iter().sum())
}

fn fd_step(domain: &Domain, x: &[f64], frac: f64) -> Result<f64> {
    let d = domain.boundary_distance(x);
    if d <= 0.0 {
        return Err(Error::NotInterior(format!("{x:?} is not an interior point")));
    }
    Ok(frac * d)
}

/// Central-difference gradient of V with step 1e-3·dist(x, ∂Ω).
pub fn potential_grad(domain: &Domain, x: &[f64], params: FracParams) -> Result<Vec<f64>> {
    check_interior(domain, x)?;
    let h = fd_step(domain, x, 1e-3)?;
    let opts = PotentialOpts::default();
    Ok((0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (potential_unchecked(domain, &p, params, &opts) - potential_unchecked(domain, &m, params, &opts))
                / (2.0 * h)
        })
        .collect())
}

/// Central-difference Hessian of V with step 1e-2·dist(x, ∂Ω), symmetric by construction.
pub fn potential_hess(domain: &Domain, x: &[f64], params: FracParams) -> Result<Vec<Vec<f64>>> {
    check_interior(domain, x)?;
    let h = fd_step(domain, x, 1e-2)?;
    let opts = PotentialOpts::default();
    let n = x.len();
    let v = |dx: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, d) in dx {
            p[i] += d;
        }
        potential_unchecked(domain, &p, params, &opts)
    };
    let v0 = v(&[]);
    let mut hm = vec![vec![0.0; n]; n];
    for i in 0..n {
        hm[i][i] = (v(&[(i, h)]) - 2.0 * v0 + v(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let val = (v(&[(i, h), (j, h)]) - v(&[(i, h), (j, -h)]) - v(&[(i, -h), (j, h)])
                + v(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hm[i][j] = val;
            hm[j][i] = val;
        }
    }
    Ok(hm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Min,
    Max,
    Saddle,
    Degenerate,
}

impl Classification {
    pub fn from_eigs(eigs: &[f64]) -> Self {
        let trace: f64 = eigs.iter().map(|e| e.abs()).sum();
        if eigs.iter().any(|e| e.abs() < 1e-6 * trace) || trace == 0.0 {
            Classification::Degenerate
        } else if eigs.iter().all(|e| *e > 0.0) {
            Classification::Min
        } else if eigs.iter().all(|e| *e < 0.0) {
            Classification::Max
        } else {
            Classification::Saddle
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Min => "min",
            Classification::Max => "max",
            Classification::Saddle => "saddle",
            Classification::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub location: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub hessian_eigs: Vec<f64>,
    pub classification: Classification,
}

pub fn sym_eigs(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let mut e: Vec<f64> = SymmetricEigen::new(mat).eigenvalues.iter().cloned().collect();
    e.sort_by(|a, b| a.total_cmp(b));
    e
}

/// Multistart search controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub multistart: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Convergence threshold on |∇V| relative to V.
    pub grad_tol: f64,
    pub merge_radius: f64,
}

impl Default for CriticalSearch {
    fn default() -> Self {
        CriticalSearch {
            multistart: 32,
            seed: 7,
            max_iter: 60,
            grad_tol: 1e-7,
            merge_radius: 1e-4,
        }
    }
}

/// Seeds: the bounding-box center plus rejection-sampled interior points
/// with clearance at least 1% of the diameter.
pub fn interior_seeds(domain: &Domain, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let (lo, hi) = domain
        .bounding_box()
        .ok_or_else(|| Error::Domain("critical-point search needs a bounded domain".into()))?;
    let diam = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let floor = 0.01 * diam;
    let mut out = Vec::new();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    if domain.contains(&center) && domain.boundary_distance(&center) > 0.0 {
        out.push(center);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tries = 0;
    while out.len() < count + 1 && tries < 1000 * count.max(1) {
        tries += 1;
        let p: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..*b)).collect();
        if domain.contains(&p) && domain.boundary_distance(&p) >= floor {
            out.push(p);
        }
    }
    Ok(out)
}

/// Newton iteration on ∇V = 0 with a trust region of half the clearance.
pub fn newton_critical(
    domain: &Domain,
    x0: &[f64],
    params: FracParams,
    search: &CriticalSearch,
) -> Option<CriticalPointReport> {
    let mut x = x0.to_vec();
    let n = x.len();
    let mut g = potential_grad(domain, &x, params).ok()?;
    let mut gn = norm(&g);
    for _ in 0..search.max_iter {
        let v = potential(domain, &x, params).ok()?;
        if gn <= search.grad_tol * v.abs().max(1.0) {
            let hess = potential_hess(domain, &x, params).ok()?;
            let eigs = sym_eigs(&hess);
            return Some(CriticalPointReport {
                location: x,
                value: v,
                gradient_norm: gn,
                classification: Classification::from_eigs(&eigs),
                hessian_eigs: eigs,
            });
        }
        let hess = potential_hess(domain, &x, params).ok()?;
        let hm = DMatrix::from_fn(n, n, |i, j| hess[i][j]);
        let gv = DVector::from_vec(g.clone());
        let mut step: Vec<f64> = match hm.clone().lu().solve(&gv) {
            Some(sol) => sol.iter().map(|v| -v).collect(),
            None => g.iter().map(|v| -v).collect(),
        };
        let radius = 0.5 * domain.boundary_distance(&x);
        let sn = norm(&step);
        if sn > radius {
            step.iter_mut().for_each(|v| *v *= radius / sn);
        }
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            if domain.contains(&trial) && domain.boundary_distance(&trial) > 0.0 {
                if let Ok(gt) = potential_grad(domain, &trial, params) {
                    let gtn = norm(&gt);
                    if gtn < gn {
                        x = trial;
                        g = gt;
                        gn = gtn;
                        accepted = true;
                        break;
                    }
                }
            }
            step.iter_mut().for_each(|v| *v *= 0.5);
        }
        if !accepted {
            return None;
        }
    }
    None
}

/// Critical points of V_Ω from multistart Newton, merged and sorted.
pub fn find_critical_points(
    domain: &Domain,
    params: FracParams,
    search: &CriticalSearch,
) -> Result<Vec<CriticalPointReport>> {
    if !domain.is_bounded() {
        return Err(Error::Domain("critical-point search needs a bounded domain".into()));
    }
    let seeds = interior_seeds(domain, search.multistart, search.seed)?;
    let found: Vec<Option<CriticalPointReport>> = seeds
        .par_iter()
        .map(|x0| newton_critical(domain, x0, params, search))
        .collect();
    let mut merged: Vec<CriticalPointReport> = Vec::new();
    for r in found.into_iter().flatten() {
        let dup = merged.iter().any(|m| {
            m.location
                .iter()
                .zip(&r.location)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                < search.merge_radius.max(1e-6 * domain.dilation)
        });
        if !dup {
            merged.push(r);
        }
    }
    merged.sort_by(|a, b| {
        a.location
            .iter()
            .zip(&b.location)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(merged)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Inward unit normal at a boundary point of a primitive.
pub fn inward_normal(domain: &Domain, p: &[f64]) -> Result<Vec<f64>> {
    let n = domain.dim;
    let y: Vec<f64> = p.iter().map(|v| v / domain.dilation).collect();
    let unit = |v: Vec<f64>| -> Result<Vec<f64>> {
        let l = norm(&v);
        if l == 0.0 {
            return Err(Error::Domain("normal is not resolvable at this point".into()));
        }
        Ok(v.iter().map(|x| x / l).collect())
    };
    let toward = |c: &[f64]| unit(c.iter().zip(&y).map(|(a, b)| a - b).collect());
    let tol = 1e-9;
    match &domain.shape {
        Shape::Ball { center, .. } => toward(center),
        Shape::Box { lo, hi } => {
            let mut best = (f64::INFINITY, vec![0.0; n]);
            for i in 0..n {
                for (dist, sgn) in [(y[i] - lo[i], 1.0), (hi[i] - y[i], -1.0)] {
                    if dist.abs() < best.0 {
                        let mut e = vec![0.0; n];
                        e[i] = sgn;
                        best = (dist.abs(), e);
                    }
                }
            }
            Ok(best.1)
        }
        Shape::Halfspace { normal_axis } => {
            let mut e = vec![0.0; n];
            e[*normal_axis] = 1.0;
            Ok(e)
        }
        Shape::Halfball { radius } => {
            if y[n - 1].abs() < tol && norm(&y) < radius - tol {
                let mut e = vec![0.0; n];
                e[n - 1] = 1.0;
                Ok(e)
            } else if (norm(&y) - radius).abs() < tol * radius.max(1.0) && y[n - 1] > tol {
                toward(&vec![0.0; n])
            } else {
                Err(Error::Domain("normal is not resolvable at this point".into()))
            }
        }
        Shape::Dumbbell { lobe_radius, separation, .. } => {
            let c1 = vec![0.0; n];
            let mut c2 = vec![0.0; n];
            c2[0] = *separation;
            let on = |c: &[f64]| {
                (c.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() - lobe_radius).abs()
                    < tol * lobe_radius
            };
            let inside_neck_x = y[0] > 0.0 && y[0] < *separation;
            if on(&c1) && !(inside_neck_x && domain.contains(&nudge(p, &toward(&c1)?, -1e-7))) {
                toward(&c1)
            } else if on(&c2) && !(inside_neck_x && domain.contains(&nudge(p, &toward(&c2)?, -1e-7))) {
                toward(&c2)
            } else if inside_neck_x {
                let mut perp = y.clone();
                perp[0] = 0.0;
                unit(perp.iter().map(|v| -v).collect())
            } else {
                Err(Error::Domain("normal is not resolvable at this point".into()))
            }
        }
        Shape::Custom(_) => Err(Error::Domain("normal is not resolvable for custom domains".into())),
    }
}

fn nudge(p: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    p.iter().zip(dir).map(|(a, b)| a + t * b).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupFit {
    pub slope: f64,
    pub distances: Vec<f64>,
    pub values: Vec<f64>,
    /// V strictly increases as d decreases.
    pub monotone: bool,
}

/// Least-squares slope of log V against log d along the inward normal.
pub fn boundary_blowup_fit(
    domain: &Domain,
    boundary_point: &[f64],
    params: FracParams,
    d_list: &[f64],
) -> Result<BlowupFit> {
    if d_list.len() < 2 {
        return Err(Error::InvalidParameter("need at least two distances".into()));
    }
    let nu = inward_normal(domain, boundary_point)?;
    let mut ds = d_list.to_vec();
    ds.sort_by(|a, b| b.total_cmp(a));
    let values = ds
        .iter()
        .map(|d| potential(domain, &nudge(boundary_point, &nu, *d), params))
        .collect::<Result<Vec<f64>>>()?;
    let lx: Vec<f64> = ds.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let slope = crate::fit_slope(&lx, &ly);
    let monotone = values.windows(2).all(|w| w[1] > w[0]);
    Ok(BlowupFit {
        slope,
        distances: ds,
        values,
        monotone,
    })
}

/// Evenly spread unit vectors: a uniform angle grid (N = 2) or a
/// Fibonacci lattice (N = 3).
pub fn direction_set(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => vec![vec![1.0], vec![-1.0]],
    }
}

/// Rows (r, V(r·e)) along a ray from the origin, for plotting.
pub fn radial_profile(domain: &Domain, params: FracParams, dir: &[f64], radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    radii
        .iter()
        .map(|r| {
            let x: Vec<f64> = dir.iter().map(|d| d * r).collect();
            Ok((*r, potential(domain, &x, params)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::make_dumbbell;
    use crate::specfun::unit_ball_volume;

    fn p(n: usize, s: f64) -> FracParams {
        FracParams::new(n, s).unwrap()
    }

    #[test]
    fn ball_center_value() {
        for (n, s) in [(2, 0.25), (2, 0.1), (3, 0.3)] {
            let v = potential(&Domain::unit_ball(n), &vec![0.0; n], p(n, s)).unwrap();
            let exact = n as f64 * unit_ball_volume(n) / (2.0 * s);
            assert!((v - exact).abs() < 1e-8 * exact, "N={n} s={s} {v} {exact}");
        }
    }

    #[test]
    fn halfspace_matches_slicing_formula() {
        // V_H(x) = x_N^{-2s}/(2s) ∫_{ω_N<0} |ω_N|^{2s} dω, N = 2: B(1/2, s+1/2)/(2s)
        let s = 0.3;
        let h = Domain::halfspace(2, 1).unwrap();
        let v = potential(&h, &[0.4, 0.5], p(2, s)).unwrap();
        let beta = crate::specfun::gamma_signed(0.5) * crate::specfun::gamma_signed(s + 0.5)
            / crate::specfun::gamma_signed(s + 1.0);
        let exact = beta / (2.0 * s) * 0.5f64.powf(-2.0 * s);
        assert!((v / exact - 1.0).abs() < 1e-9, "{v} {exact}");
    }

    #[test]
    fn not_interior_is_error() {
        let b = Domain::unit_ball(2);
        assert!(potential(&b, &[1.0, 0.0], p(2, 0.25)).is_err());
        assert!(potential(&b, &[1.5, 0.0], p(2, 0.25)).is_err());
    }

    #[test]
    fn ray_contribution_counts_gaps() {
        let s = 0.25;
        let one = ray_contribution(&[(0.0, 1.0)], s);
        assert!((one - 2.0).abs() < 1e-15);
        let two = ray_contribution(&[(0.0, 1.0), (4.0, 9.0)], s);
        let exact = (1.0 - 0.5 + 1.0 / 3.0) / 0.5;
        assert!((two - exact).abs() < 1e-14);
        assert_eq!(ray_contribution(&[(0.0, f64::INFINITY)], s), 0.0);
    }

    #[test]
    fn dumbbell_is_mirror_symmetric() {
        let d = make_dumbbell(2, 1.0, 4.0, 0.1).unwrap();
        let pr = p(2, 0.25);
        let a = potential(&d, &[0.3, 0.2], pr).unwrap();
        let b = potential(&d, &[3.7, 0.2], pr).unwrap();
        let c = potential(&d, &[0.3, -0.2], pr).unwrap();
        assert!((a - b).abs() < 1e-9 * a && (a - c).abs() < 1e-9 * a);
    }

    #[test]
    fn box_center_is_critical() {
        let q = Domain::cube(&[0.0, 0.0], &[2.0, 1.0]).unwrap();
        let g = potential_grad(&q, &[1.0, 0.5], p(2, 0.25)).unwrap();
        assert!(norm(&g) < 1e-7);
    }
}
