//! Lyapunov–Schmidt reduction for nearly spherical sets of volume ω_N in
//! the dilated domain Ω_ε = Ω/ε.
//!
//! At a fixed center ξ the Galerkin system
//! ⟨H^{Ω_ε}(∂B(ξ, w)) − c − Σλ_iY_i, Y_j⟩ = 0, |B(ξ, w)| = ω_N
//! is solved for w (degree-1 block held at zero), c and λ. Centers with
//! λ = 0 carry surfaces of constant curvature. The reduced functional
//! Φ(ξ) is the relative perimeter of the solved surface.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::curvature::{curvature_on, CurvatureOpts};
use crate::domains::{Domain, Region, StarSurface};
use crate::error::{Error, Result};
use crate::potential::{
    ball_potential_integral, find_critical_points, potential, potential_grad, Classification, CriticalSearch,
    PotentialOpts,
};
use crate::quadrature::gauss_legendre;
use crate::specfun::{ball_perimeter, eigenvalue, sphere_area, sphere_curvature, unit_ball_volume};
use crate::{FracParams, HarmonicBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Newton,
    /// Fixed point with the frozen all-space linearization.
    Picard,
}

impl std::str::FromStr for SolveMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton" => Ok(SolveMethod::Newton),
            "picard" => Ok(SolveMethod::Picard),
            other => Err(Error::InvalidParameter(format!("unknown solver method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOpts {
    pub method: SolveMethod,
    pub max_iter: usize,
    /// Accept when the sup-node residual is below this multiple of c_{N,s}.
    pub curv_tol: f64,
    /// Accept when |vol − ω_N| is below this multiple of ω_N.
    pub vol_tol: f64,
    /// Keep iterating (cheaply) until the Galerkin residual reaches this
    /// multiple of c_{N,s}, so that λ is resolved well below `curv_tol`.
    pub target: f64,
    pub fd_step: f64,
    /// Largest ε accepted.
    pub max_eps: f64,
    pub curvature: CurvatureOpts,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            method: SolveMethod::Newton,
            max_iter: 40,
            curv_tol: 1e-6,
            vol_tol: 1e-8,
            target: 1e-11,
            fd_step: 1e-6,
            max_eps: 0.5,
            curvature: CurvatureOpts::default(),
        }
    }
}

/// Basis used by the solver: degree 8 on 64 circle nodes, or degree 6 on a
/// 16×32 sphere grid with the coarse curvature rule.
pub fn default_basis(params: FracParams) -> Result<Arc<HarmonicBasis>> {
    let b = match params.dim {
        2 => HarmonicBasis::with_nodes(params, 8, 64, 0)?,
        _ => HarmonicBasis::with_nodes(params, 6, 16, 32)?,
    };
    Ok(Arc::new(b))
}

/// Solver options matched to `default_basis`.
pub fn default_opts(params: FracParams) -> SolverOpts {
    let mut o = SolverOpts::default();
    if params.dim == 3 {
        o.curvature = CurvatureOpts::coarse();
    }
    o
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedSolution {
    /// Center in Ω_ε coordinates.
    pub xi: Vec<f64>,
    pub w_coeffs: Vec<f64>,
    pub c: f64,
    pub lambda: Vec<f64>,
    /// Φ(ξ); filled by `reduced_functional`.
    pub phi: Option<f64>,
    pub residual_curv: f64,
    pub residual_vol: f64,
    pub newton_iters: usize,
    pub method: SolveMethod,
    /// 2-norm condition number of the final Jacobian (Newton only).
    pub jacobian_cond: Option<f64>,
}

impl ReducedSolution {
    pub fn lambda_norm(&self) -> f64 {
        self.lambda.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// sup over nodes of |w|.
    pub fn w_sup(&self, basis: &HarmonicBasis) -> f64 {
        basis.synthesize(&self.w_coeffs).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

struct System<'a> {
    omega_eps: Domain,
    xi: Vec<f64>,
    params: FracParams,
    basis: &'a Arc<HarmonicBasis>,
    opts: &'a SolverOpts,
    /// Basis indices of w that are solved for.
    free: Vec<usize>,
    deg1: std::ops::Range<usize>,
}

struct Eval {
    f: Vec<f64>,
    sup_curv: f64,
    vol_err: f64,
}

impl<'a> System<'a> {
    fn unknowns(&self) -> usize {
        self.free.len() + 1 + self.deg1.len()
    }

    fn unpack(&self, u: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
        let mut coeffs = vec![0.0; self.basis.len()];
        for (k, &i) in self.free.iter().enumerate() {
            coeffs[i] = u[k];
        }
        let m = self.free.len();
        (coeffs, u[m], u[m + 1..].to_vec())
    }

    fn surface(&self, coeffs: Vec<f64>) -> Result<StarSurface> {
        StarSurface::new(&self.xi, coeffs, self.basis.clone())
    }

    fn node_curvature(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let surf = self.surface(coeffs.to_vec())?;
        curvature_on(&surf, Some(&self.omega_eps), self.params, &self.opts.curvature, self.basis)
    }

    fn eval(&self, u: &[f64]) -> Result<Eval> {
        let (coeffs, c, lambda) = self.unpack(u);
        let h = self.node_curvature(&coeffs)?;
        let b = self.basis;
        let mut g = h;
        for (j, gj) in g.iter_mut().enumerate() {
            let mut y1 = 0.0;
            for (k, i) in self.deg1.clone().enumerate() {
                y1 += lambda[k] * b.value(j, i);
            }
            *gj -= c + y1;
        }
        let sup_curv = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut f = b.project(&g);
        let vol_err = self.surface(coeffs)?.enclosed_volume()? - unit_ball_volume(self.params.dim);
        f.push(vol_err);
        Ok(Eval { f, sup_curv, vol_err })
    }

    /// Columns for c and λ are exact; w columns by forward differences.
    fn jacobian(&self, u: &[f64], base: &Eval) -> Result<DMatrix<f64>> {
        let n = self.unknowns();
        let rows = base.f.len();
        let mut jac = DMatrix::zeros(rows, n);
        let h = self.opts.fd_step;
        for k in 0..self.free.len() {
            let mut up = u.to_vec();
            up[k] += h;
            let e = self.eval(&up)?;
            for r in 0..rows {
                jac[(r, k)] = (e.f[r] - base.f[r]) / h;
            }
        }
        let b = self.basis;
        let ones = vec![1.0; b.num_nodes()];
        let pc = b.project(&ones);
        let m = self.free.len();
        for (r, v) in pc.iter().enumerate() {
            jac[(r, m)] = -v;
        }
        for (k, i) in self.deg1.clone().enumerate() {
            let yi: Vec<f64> = (0..b.num_nodes()).map(|j| b.value(j, i)).collect();
            for (r, v) in b.project(&yi).iter().enumerate() {
                jac[(r, m + 1 + k)] = -v;
            }
        }
        Ok(jac)
    }

    /// Linearization of the all-space problem at the sphere.
    fn frozen_jacobian(&self) -> DMatrix<f64> {
        let n = self.unknowns();
        let rows = self.basis.len() + 1;
        let mut jac = DMatrix::zeros(rows, n);
        let l1 = eigenvalue(self.params, 1);
        let root = sphere_area(self.params.dim).sqrt();
        for (k, &i) in self.free.iter().enumerate() {
            let deg = self.basis.degree_of(i);
            jac[(i, k)] = 2.0 * (eigenvalue(self.params, deg) - l1);
            if i == 0 {
                jac[(rows - 1, k)] = root;
            }
        }
        let m = self.free.len();
        jac[(0, m)] = -root;
        for (k, i) in self.deg1.clone().enumerate() {
            jac[(i, m + 1 + k)] = -1.0;
        }
        jac
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn merit(sys: &System, e: &Eval) -> f64 {
    // curvature rows and the volume row on comparable scales
    let c = sphere_curvature(sys.params);
    let k = e.f.len() - 1;
    (inf_norm(&e.f[..k]) / c).max(e.f[k].abs() / unit_ball_volume(sys.params.dim))
}

fn condition_number(j: &DMatrix<f64>) -> f64 {
    let sv = j.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

fn check_setup(omega: &Domain, eps: f64, xi: &[f64], params: FracParams, basis: &HarmonicBasis, opts: &SolverOpts) -> Result<Domain> {
    if !(eps > 0.0 && eps <= opts.max_eps) {
        return Err(Error::InvalidParameter(format!("ε must lie in (0, {}], got {eps}", opts.max_eps)));
    }
    if xi.len() != params.dim || basis.dim() != params.dim || omega.dim != params.dim {
        return Err(Error::InvalidParameter("dimension mismatch between domain, center and basis".into()));
    }
    if basis.max_degree < 2 {
        return Err(Error::InvalidParameter("basis needs degree at least 2".into()));
    }
    let omega_eps = omega.dilate(1.0 / eps)?;
    if !omega_eps.contains(xi) || omega_eps.boundary_distance(xi) < 2.0 {
        return Err(Error::Domain(format!(
            "center needs distance 2 from the boundary of Ω_ε, has {:.4}",
            if omega_eps.contains(xi) { omega_eps.boundary_distance(xi) } else { 0.0 }
        )));
    }
    Ok(omega_eps)
}

/// Solve the Galerkin system at center ξ (Ω_ε coordinates).
pub fn solve_reduction(
    omega: &Domain,
    eps: f64,
    xi: &[f64],
    params: FracParams,
    basis: &Arc<HarmonicBasis>,
    opts: &SolverOpts,
) -> Result<ReducedSolution> {
    solve_reduction_from(omega, eps, xi, params, basis, opts, None)
}

/// As `solve_reduction`, starting from a previous solution's (w, c, λ).
pub fn solve_reduction_from(
    omega: &Domain,
    eps: f64,
    xi: &[f64],
    params: FracParams,
    basis: &Arc<HarmonicBasis>,
    opts: &SolverOpts,
    start: Option<&ReducedSolution>,
) -> Result<ReducedSolution> {
    let omega_eps = check_setup(omega, eps, xi, params, basis, opts)?;
    let deg1 = basis.degree_range(1);
    let free: Vec<usize> = (0..basis.len()).filter(|i| !deg1.contains(i)).collect();
    let sys = System {
        omega_eps,
        xi: xi.to_vec(),
        params,
        basis,
        opts,
        free,
        deg1,
    };
    let mut u = vec![0.0; sys.unknowns()];
    let m = sys.free.len();
    match start {
        Some(s) if s.w_coeffs.len() == basis.len() && s.lambda.len() == params.dim => {
            for (k, &i) in sys.free.iter().enumerate() {
                u[k] = s.w_coeffs[i];
            }
            u[m] = s.c;
            u[m + 1..].copy_from_slice(&s.lambda);
        }
        _ => {
            u[m] = sphere_curvature(params) - potential(&sys.omega_eps, xi, params)?;
        }
    }

    let c_ref = sphere_curvature(params);
    let vol_ref = unit_ball_volume(params.dim);
    let mut cur = sys.eval(&u)?;
    let mut res = merit(&sys, &cur);
    let mut iters = 0;
    let mut jac: Option<DMatrix<f64>> = None;
    let mut lu = None;
    let mut last_ratio = 1.0;
    let mut cond = None;
    while iters < opts.max_iter && res > opts.target {
        iters += 1;
        let need_new = match opts.method {
            SolveMethod::Newton => jac.is_none() || last_ratio > 0.1,
            SolveMethod::Picard => jac.is_none(),
        };
        if need_new {
            let j = match opts.method {
                SolveMethod::Newton => sys.jacobian(&u, &cur)?,
                SolveMethod::Picard => sys.frozen_jacobian(),
            };
            lu = Some(j.clone().lu());
            jac = Some(j);
        }
        let rhs = DVector::from_iterator(cur.f.len(), cur.f.iter().map(|v| -v));
        let step = lu
            .as_ref()
            .and_then(|l| l.solve(&rhs))
            .ok_or_else(|| Error::NoConvergence {
                iterations: iters,
                residual: res,
                context: "singular Galerkin Jacobian".into(),
            })?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            match sys.eval(&trial) {
                Ok(e) => {
                    let r = merit(&sys, &e);
                    if r < res {
                        accepted = Some((trial, e, r));
                        break;
                    }
                }
                Err(Error::DegenerateSurface(_)) => {}
                Err(other) => return Err(other),
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, e, r)) => {
                last_ratio = r / res;
                u = trial;
                cur = e;
                res = r;
            }
            None => {
                if need_new {
                    break;
                }
                // stale Jacobian: force a refresh next round
                last_ratio = 1.0;
                if opts.method == SolveMethod::Picard {
                    break;
                }
            }
        }
    }
    if opts.method == SolveMethod::Newton {
        cond = jac.as_ref().map(condition_number);
    }
    if !(cur.sup_curv <= opts.curv_tol * c_ref && cur.vol_err.abs() <= opts.vol_tol * vol_ref) {
        return Err(Error::NoConvergence {
            iterations: iters,
            residual: cur.sup_curv,
            context: format!(
                "reduction at ξ = {:?}: curvature residual {:.3e}, volume residual {:.3e}",
                xi, cur.sup_curv, cur.vol_err
            ),
        });
    }
    let (w_coeffs, c, lambda) = sys.unpack(&u);
    Ok(ReducedSolution {
        xi: xi.to_vec(),
        w_coeffs,
        c,
        lambda,
        phi: None,
        residual_curv: cur.sup_curv,
        residual_vol: cur.vol_err.abs(),
        newton_iters: iters,
        method: opts.method,
        jacobian_cond: cond,
    })
}

/// P^{Ω_ε}(B_1(ξ)) = P(B_1) − ∫_{B_1(ξ)} V_{Ω_ε}.
pub fn ball_relative_perimeter(omega_eps: &Domain, xi: &[f64], params: FracParams) -> Result<f64> {
    let inner = ball_potential_integral(omega_eps, xi, 1.0, params, &PotentialOpts::default())?;
    Ok(ball_perimeter(params) - inner)
}

/// Φ(ξ) − P^{Ω_ε}(B_1(ξ)) by integrating the first variation along t·w:
/// ∫₀¹∫_S (H^{Ω_ε}(tw) − c)(1 + tw)^{N−1} w dθ dt + c(|B(ξ,w)| − ω_N).
pub fn perimeter_gap(
    omega: &Domain,
    eps: f64,
    sol: &ReducedSolution,
    params: FracParams,
    basis: &Arc<HarmonicBasis>,
    opts: &SolverOpts,
) -> Result<f64> {
    let omega_eps = omega.dilate(1.0 / eps)?;
    let wv = basis.synthesize(&sol.w_coeffs);
    let n = params.dim as i32;
    let rule = gauss_legendre(4).mapped(0.0, 1.0);
    let mut gap = 0.0;
    for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
        let coeffs: Vec<f64> = sol.w_coeffs.iter().map(|v| v * t).collect();
        let surf = StarSurface::new(&sol.xi, coeffs, basis.clone())?;
        let h = curvature_on(&surf, Some(&omega_eps), params, &opts.curvature, basis)?;
        let f: Vec<f64> = h
            .iter()
            .zip(&wv)
            .map(|(hv, w)| (hv - sol.c) * (1.0 + t * w).powi(n - 1) * w)
            .collect();
        gap += wt * basis.integrate(&f);
    }
    let surf = StarSurface::new(&sol.xi, sol.w_coeffs.clone(), basis.clone())?;
    gap += sol.c * (surf.enclosed_volume()? - unit_ball_volume(params.dim));
    Ok(gap)
}

/// Φ(ξ) = P^{Ω_ε}(B(ξ, w_ε)), with the solved surface attached.
pub fn reduced_functional(
    omega: &Domain,
    eps: f64,
    xi: &[f64],
    params: FracParams,
    basis: &Arc<HarmonicBasis>,
    opts: &SolverOpts,
) -> Result<ReducedSolution> {
    let sol = solve_reduction(omega, eps, xi, params, basis, opts)?;
    with_phi(omega, eps, sol, params, basis, opts)
}

fn with_phi(
    omega: &Domain,
    eps: f64,
    mut sol: ReducedSolution,
    params: FracParams,
    basis: &Arc<HarmonicBasis>,
    opts: &SolverOpts,
) -> Result<ReducedSolution> {
    let omega_eps = omega.dilate(1.0 / eps)?;
    let base = ball_relative_perimeter(&omega_eps, &sol.xi, params)?;
    let gap = perimeter_gap(omega, eps, &sol, params, basis, opts)?;
    sol.phi = Some(base + gap);
    Ok(sol)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmcSearch {
    pub critical: CriticalSearch,
    /// Required ‖λ‖ at a returned center.
    pub lambda_tol: f64,
    pub max_iter: usize,
    /// Finite-difference step in ξ for ∂λ/∂ξ.
    pub xi_step: f64,
}

impl Default for CmcSearch {
    fn default() -> Self {
        CmcSearch {
            critical: CriticalSearch::default(),
            lambda_tol: 1e-6,
            max_iter: 20,
            xi_step: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmcResult {
    /// Critical point of V_Ω (physical coordinates) used as seed.
    pub seed: Vec<f64>,
    pub seed_classification: Classification,
    pub solution: ReducedSolution,
    /// Eigenvalues of the symmetrized ∂λ/∂ξ, proportional to the Hessian of Φ.
    pub hessian_eigs: Vec<f64>,
    pub classification: Classification,
    pub converged: bool,
}

fn lambda_jacobian(
    omega: &Domain,
    eps: f64,
    sol: &ReducedSolution,
    params: FracParams,
    basis: &Arc<HarmonicBasis>,
    opts: &SolverOpts,
    h: f64,
) -> Result<DMatrix<f64>> {
    let n = params.dim;
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut lp = sol.xi.clone();
        let mut lm = sol.xi.clone();
        lp[k] += h;
        lm[k] -= h;
        let a = solve_reduction_from(omega, eps, &lp, params, basis, opts, Some(sol))?;
        let b = solve_reduction_from(omega, eps, &lm, params, basis, opts, Some(sol))?;
        for i in 0..n {
            j[(i, k)] = (a.lambda[i] - b.lambda[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Newton iteration on λ(ξ) = 0 from one seed center.
pub fn refine_center(
    omega: &Domain,
    eps: f64,
    xi0: &[f64],
    params: FracParams,
    basis: &Arc<HarmonicBasis>,
    opts: &SolverOpts,
    search: &CmcSearch,
) -> Result<(ReducedSolution, DMatrix<f64>, bool)> {
    let mut sol = solve_reduction(omega, eps, xi0, params, basis, opts)?;
    let mut jac = lambda_jacobian(omega, eps, &sol, params, basis, opts, search.xi_step)?;
    let mut done = sol.lambda_norm() <= search.lambda_tol;
    let mut it = 0;
    while !done && it < search.max_iter {
        it += 1;
        let rhs = DVector::from_iterator(params.dim, sol.lambda.iter().map(|v| -v));
        let step = match jac.clone().lu().solve(&rhs) {
            Some(s) => s,
            None => break,
        };
        let norm0 = sol.lambda_norm();
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..8 {
            let xi: Vec<f64> = sol.xi.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            if let Ok(s) = solve_reduction_from(omega, eps, &xi, params, basis, opts, Some(&sol)) {
                if s.lambda_norm() < norm0 {
                    next = Some(s);
                    break;
                }
            }
            t *= 0.5;
        }
        match next {
            Some(s) => sol = s,
            None => break,
        }
        done = sol.lambda_norm() <= search.lambda_tol;
        if !done && it % 3 == 0 {
            jac = lambda_jacobian(omega, eps, &sol, params, basis, opts, search.xi_step)?;
        }
    }
    if done {
        jac = lambda_jacobian(omega, eps, &sol, params, basis, opts, search.xi_step)?;
    }
    Ok((sol, jac, done))
}

/// Centers of constant-curvature surfaces near the critical points of V_Ω.
///
/// Every critical point x₀ of V_Ω seeds ξ₀ = x₀/ε; Newton on λ(ξ) = 0
/// follows, and the symmetrized ∂λ/∂ξ classifies the critical point of Φ.
pub fn find_cmc(
    omega: &Domain,
    eps: f64,
    params: FracParams,
    basis: &Arc<HarmonicBasis>,
    opts: &SolverOpts,
    search: &CmcSearch,
) -> Result<Vec<CmcResult>> {
    let seeds = find_critical_points(omega, params, &search.critical)?;
    let mut out = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cp in seeds {
        let xi0: Vec<f64> = cp.location.iter().map(|v| v / eps).collect();
        let (sol, jac, converged) = match refine_center(omega, eps, &xi0, params, basis, opts, search) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let sym = (&jac + jac.transpose()) * 0.5;
        let eigs: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().cloned().collect();
        let ln = sol.lambda_norm();
        if best.as_ref().is_none_or(|b| ln < b.0) {
            best = Some((ln, sol.xi.clone()));
        }
        let sol = with_phi(omega, eps, sol, params, basis, opts)?;
        out.push(CmcResult {
            seed: cp.location,
            seed_classification: cp.classification,
            solution: sol,
            classification: Classification::from_eigs(&eigs),
            hessian_eigs: eigs,
            converged,
        });
    }
    if !out.iter().any(|r| r.converged) {
        let (ln, xi) = best.unwrap_or((f64::INFINITY, Vec::new()));
        return Err(Error::NoConvergence {
            iterations: search.max_iter,
            residual: ln,
            context: format!("no center with ‖λ‖ ≤ {:e}; best candidate ξ = {:?}", search.lambda_tol, xi),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub eps: f64,
    /// Center in Ω_ε coordinates.
    pub xbar: Vec<f64>,
    pub relative_perimeter: f64,
    /// V_Ω at the physical point εx̄.
    pub potential: f64,
    /// P(B_1(x̄), Ω_ε) − P(B_1) + ω_N ε^{2s} V_Ω(εx̄).
    pub remainder: f64,
    /// (P(B_1) − P(B_1(x̄), Ω_ε)) / (ω_N ε^{2s} V_Ω(εx̄)).
    pub leading_ratio: f64,
    /// ∇_{x̄} P(B_1(x̄), Ω_ε) by central differences.
    pub grad_fd: Vec<f64>,
    /// −ω_N ε^{2s+1} ∇V_Ω(εx̄).
    pub grad_model: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionSeries {
    /// Physical point εx̄, held fixed along the series.
    pub point: Vec<f64>,
    pub rows: Vec<ExpansionRow>,
    /// Slope of log|remainder| against log ε.
    pub remainder_slope: f64,
    /// Slope of log|∇P| against log ε.
    pub grad_slope: f64,
    /// Slope of log|∇P − model| against log ε (NaN if the difference vanishes).
    pub grad_remainder_slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub series: Vec<ExpansionSeries>,
    /// (ε, physical point, reason) for pairs that were skipped.
    pub skipped: Vec<(f64, Vec<f64>, String)>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn slope_of(eps: &[f64], vals: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = eps
        .iter()
        .zip(vals)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    if pairs.len() < 2 {
        return f64::NAN;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    crate::fit_slope(&x, &y)
}

/// Check the small-ε expansion of the relative perimeter of unit balls.
///
/// `points` are physical locations p; each ε uses x̄ = p/ε. The gradient
/// step `grad_step` is in Ω_ε units.
pub fn expansion_validate(
    omega: &Domain,
    params: FracParams,
    eps_list: &[f64],
    points: &[Vec<f64>],
    grad_step: f64,
) -> Result<ExpansionReport> {
    let wn = unit_ball_volume(params.dim);
    let pb = ball_perimeter(params);
    let s2 = 2.0 * params.s;
    let mut series = Vec::new();
    let mut skipped = Vec::new();
    for p in points {
        if p.len() != params.dim {
            return Err(Error::InvalidParameter("point dimension does not match N".into()));
        }
        let mut rows = Vec::new();
        for &eps in eps_list {
            let omega_eps = omega.dilate(1.0 / eps)?;
            let xbar: Vec<f64> = p.iter().map(|v| v / eps).collect();
            if !omega_eps.contains(&xbar) || omega_eps.boundary_distance(&xbar) < 1.0 + grad_step {
                skipped.push((eps, p.clone(), "unit ball does not fit inside Ω_ε".into()));
                continue;
            }
            let rel = ball_relative_perimeter(&omega_eps, &xbar, params)?;
            let v = potential(omega, p, params)?;
            let scale = wn * eps.powf(s2);
            let mut grad_fd = vec![0.0; params.dim];
            for k in 0..params.dim {
                let mut a = xbar.clone();
                let mut b = xbar.clone();
                a[k] += grad_step;
                b[k] -= grad_step;
                grad_fd[k] = (ball_relative_perimeter(&omega_eps, &a, params)?
                    - ball_relative_perimeter(&omega_eps, &b, params)?)
                    / (2.0 * grad_step);
            }
            let gv = potential_grad(omega, p, params)?;
            let grad_model: Vec<f64> = gv.iter().map(|g| -scale * eps * g).collect();
            rows.push(ExpansionRow {
                eps,
                xbar,
                relative_perimeter: rel,
                potential: v,
                remainder: rel - pb + scale * v,
                leading_ratio: (pb - rel) / (scale * v),
                grad_fd,
                grad_model,
            });
        }
        let es: Vec<f64> = rows.iter().map(|r| r.eps).collect();
        let rem: Vec<f64> = rows.iter().map(|r| r.remainder.abs()).collect();
        let gn: Vec<f64> = rows.iter().map(|r| norm(&r.grad_fd)).collect();
        let gr: Vec<f64> = rows
            .iter()
            .map(|r| norm(&r.grad_fd.iter().zip(&r.grad_model).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .collect();
        series.push(ExpansionSeries {
            point: p.clone(),
            remainder_slope: slope_of(&es, &rem),
            grad_slope: slope_of(&es, &gn),
            grad_remainder_slope: slope_of(&es, &gr),
            rows,
        });
    }
    Ok(ExpansionReport { series, skipped })
}

/// sup over nodes of |H^{Ω_ε}(∂B_1(ξ)) − c_{N,s}|, and the sup of its
/// derivative along `dir` in ξ (central differences with step `h`).
pub fn sphere_curvature_deviation(
    omega: &Domain,
    eps: f64,
    xi: &[f64],
    dir: &[f64],
    h: f64,
    params: FracParams,
    basis: &Arc<HarmonicBasis>,
    opts: &CurvatureOpts,
) -> Result<(f64, f64)> {
    let omega_eps = omega.dilate(1.0 / eps)?;
    let c = sphere_curvature(params);
    let at = |x: &[f64]| -> Result<Vec<f64>> {
        let surf = StarSurface::sphere(x, basis.clone());
        curvature_on(&surf, Some(&omega_eps), params, opts, basis)
    };
    let h0 = at(xi)?;
    let dev = h0.iter().fold(0.0f64, |m, v| m.max((v - c).abs()));
    let a: Vec<f64> = xi.iter().zip(dir).map(|(x, d)| x + h * d).collect();
    let b: Vec<f64> = xi.iter().zip(dir).map(|(x, d)| x - h * d).collect();
    let ha = at(&a)?;
    let hb = at(&b)?;
    let der = ha.iter().zip(&hb).fold(0.0f64, |m, (p, q)| m.max(((p - q) / (2.0 * h)).abs()));
    Ok((dev, der))
}

/// Serializable record of one solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionBundle {
    pub omega_spec: Domain,
    pub eps: f64,
    pub xi: Vec<f64>,
    pub w_coeffs: Vec<f64>,
    pub c: f64,
    pub lambda: Vec<f64>,
    pub phi: Option<f64>,
    pub residuals: Residuals,
    pub iters: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Residuals {
    pub curvature: f64,
    pub volume: f64,
    pub jacobian_cond: Option<f64>,
}

impl ReductionBundle {
    pub fn new(omega: &Domain, eps: f64, sol: &ReducedSolution) -> Self {
        ReductionBundle {
            omega_spec: omega.clone(),
            eps,
            xi: sol.xi.clone(),
            w_coeffs: sol.w_coeffs.clone(),
            c: sol.c,
            lambda: sol.lambda.clone(),
            phi: sol.phi,
            residuals: Residuals {
                curvature: sol.residual_curv,
                volume: sol.residual_vol,
                jacobian_cond: sol.jacobian_cond,
            },
            iters: sol.newton_iters,
        }
    }
}

/// One row of an ε- or ξ-sweep table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub xi: String,
    pub c: f64,
    pub lambda_norm: f64,
    pub w_sup: f64,
    pub phi: f64,
    pub ball_relative_perimeter: f64,
    pub residual_curv: f64,
    pub residual_vol: f64,
    pub iters: usize,
}

/// Solve at each (ε, ξ) pair and tabulate.
pub fn sweep(
    omega: &Domain,
    pairs: &[(f64, Vec<f64>)],
    params: FracParams,
    basis: &Arc<HarmonicBasis>,
    opts: &SolverOpts,
) -> Result<Vec<SweepRow>> {
    pairs
        .iter()
        .map(|(eps, xi)| {
            let sol = reduced_functional(omega, *eps, xi, params, basis, opts)?;
            let omega_eps = omega.dilate(1.0 / eps)?;
            Ok(SweepRow {
                eps: *eps,
                xi: xi.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" "),
                c: sol.c,
                lambda_norm: sol.lambda_norm(),
                w_sup: sol.w_sup(basis),
                phi: sol.phi.unwrap_or(f64::NAN),
                ball_relative_perimeter: ball_relative_perimeter(&omega_eps, xi, params)?,
                residual_curv: sol.residual_curv,
                residual_vol: sol.residual_vol,
                iters: sol.newton_iters,
            })
        })
        .collect()
}

pub fn write_sweep_csv(path: &std::path::Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
