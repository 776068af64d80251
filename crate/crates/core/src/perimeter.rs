//! Fractional perimeter P_s(E) = ∫_E ∫_{E^c} |x − y|^{-(N+2s)} dx dy.
//!
//! Three estimators: an FFT lattice sum on occupancy grids with Richardson
//! extrapolation in h, stratified Monte Carlo over ray lengths, and chord
//! quadrature through one-dimensional perimeters of line sections. Also the
//! relative perimeter in Ω, Fraenkel asymmetry and the s → 1/2 probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

use crate::domains::{Domain, Region, Shape};
use crate::error::{Error, Result};
use crate::kernel::{halfspace_layer_totals, KernelTable};
use crate::potential::{ball_potential_integral, potential_with, PotentialOpts};
use crate::quadrature::adaptive;
use crate::specfun::{sphere_area, unit_ball_volume, FracParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerimeterEstimate {
    pub value: f64,
    /// Richardson correction size (grid), standard error (Monte Carlo) or
    /// quadrature error estimate (chord).
    pub error_bound: f64,
    pub method: String,
    /// Cell size, sample count or tolerance, depending on the method.
    pub resolution: f64,
    pub wall_ms: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: f64,
    /// Explicit (lo, hi) window; defaults to the bounding box padded by 2h.
    #[serde(default)]
    pub window: Option<(Vec<f64>, Vec<f64>)>,
    #[serde(default = "default_near")]
    pub near_field: usize,
    #[serde(default = "default_sub")]
    pub subsample: usize,
}

fn default_near() -> usize {
    3
}
fn default_sub() -> usize {
    4
}

impl GridSpec {
    pub fn new(h: f64) -> Self {
        GridSpec {
            h,
            window: None,
            near_field: 3,
            subsample: 4,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {}", self.h)));
        }
        if self.subsample == 0 || self.near_field == 0 {
            return Err(Error::InvalidParameter("subsample and near_field must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McSpec {
    pub samples: u64,
    pub seed: u64,
    /// Smallest sampled ray length, relative to the bounding-box diameter.
    #[serde(default = "default_cutoff")]
    pub inner_cutoff: f64,
    #[serde(default = "default_strata")]
    pub strata_per_decade: usize,
}

fn default_cutoff() -> f64 {
    1e-3
}
fn default_strata() -> usize {
    2
}

impl McSpec {
    pub fn new(samples: u64, seed: u64) -> Self {
        McSpec {
            samples,
            seed,
            inner_cutoff: 1e-3,
            strata_per_decade: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChordSpec {
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for ChordSpec {
    fn default() -> Self {
        ChordSpec {
            rel_tol: 1e-9,
            max_panels: 3000,
        }
    }
}

/// Cell occupancy fractions on a regular grid; x is the fastest index.
#[derive(Debug, Clone)]
pub struct Raster {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub h: f64,
    pub shape: Vec<usize>,
    pub u: Vec<f64>,
}

impl Raster {
    /// Occupancy from line sections along x: exact in x, `sub` midpoint
    /// lines per cell in each transverse direction.
    pub fn new(region: &dyn Region, lo: &[f64], hi: &[f64], h: f64, sub: usize) -> Result<Raster> {
        let n = region.dim();
        if lo.len() != n || hi.len() != n {
            return Err(Error::InvalidParameter("window dimension does not match the set".into()));
        }
        let shape: Vec<usize> = (0..n).map(|d| (((hi[d] - lo[d]) / h) - 1e-9).ceil().max(1.0) as usize).collect();
        let total: usize = shape.iter().product();
        if total > 200_000_000 {
            return Err(Error::InvalidParameter(format!("grid of {total} cells is too large")));
        }
        let n0 = shape[0];
        let len0 = n0 as f64 * h;
        let lines_per_row = sub.pow(n as u32 - 1);
        let weight = 1.0 / lines_per_row as f64;
        let mut u = vec![0.0; total];
        u.par_chunks_mut(n0).enumerate().for_each(|(row, out)| {
            let mut tidx = vec![0usize; n - 1];
            let mut r = row;
            for (d, t) in tidx.iter_mut().enumerate() {
                *t = r % shape[d + 1];
                r /= shape[d + 1];
            }
            let mut dir = vec![0.0; n];
            dir[0] = 1.0;
            for mut l in 0..lines_per_row {
                let mut origin = vec![lo[0]; n];
                for d in 1..n {
                    let k = l % sub;
                    l /= sub;
                    origin[d] = lo[d] + (tidx[d - 1] as f64 + (k as f64 + 0.5) / sub as f64) * h;
                }
                for (a, b) in region.line_intervals(&origin, &dir) {
                    let a = a.max(0.0);
                    let b = b.min(len0);
                    if b <= a {
                        continue;
                    }
                    let ia = ((a / h).floor() as usize).min(n0 - 1);
                    let ib = ((b / h).floor() as usize).min(n0 - 1);
                    for (i, cell) in out.iter_mut().enumerate().take(ib + 1).skip(ia) {
                        let c0 = i as f64 * h;
                        let cover = (b.min(c0 + h) - a.max(c0)).max(0.0);
                        *cell += weight * cover / h;
                    }
                }
            }
            for v in out.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        });
        Ok(Raster {
            dim: n,
            lo: lo.to_vec(),
            h,
            shape,
            u,
        })
    }

    pub fn volume(&self) -> f64 {
        self.u.iter().sum::<f64>() * self.h.powi(self.dim as i32)
    }

    pub fn index_of(&self, flat: usize) -> Vec<usize> {
        let mut r = flat;
        self.shape
            .iter()
            .map(|n| {
                let i = r % n;
                r /= n;
                i
            })
            .collect()
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.index_of(flat)
            .iter()
            .enumerate()
            .map(|(d, i)| self.lo[d] + (*i as f64 + 0.5) * self.h)
            .collect()
    }

    /// Average over 2^N blocks; odd extents are padded with empty cells.
    pub fn coarsen(&self) -> Raster {
        let n = self.dim;
        let shape: Vec<usize> = self.shape.iter().map(|m| m.div_ceil(2)).collect();
        let total: usize = shape.iter().product();
        let mut u = vec![0.0; total];
        let scale = 0.5f64.powi(n as i32);
        for (flat, v) in self.u.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let idx = self.index_of(flat);
            let mut c = 0usize;
            let mut stride = 1usize;
            for d in 0..n {
                c += (idx[d] / 2) * stride;
                stride *= shape[d];
            }
            u[c] += scale * v;
        }
        Raster {
            dim: n,
            lo: self.lo.clone(),
            h: 2.0 * self.h,
            shape,
            u,
        }
    }
}

fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    let mut stride = 1;
    for &len in shape {
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let block = len * stride;
        data.par_chunks_mut(block).for_each(|chunk| {
            let mut line = vec![Complex64::default(); len];
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            for j in 0..stride {
                for i in 0..len {
                    line[i] = chunk[j + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for i in 0..len {
                    chunk[j + i * stride] = line[i];
                }
            }
        });
        stride *= len;
    }
}

/// conv_i = Σ_j K̃(i − j) u_j by zero-padded FFT.
pub fn lattice_convolution(shape: &[usize], u: &[f64], table: &KernelTable) -> Vec<f64> {
    let n = shape.len();
    let pshape: Vec<usize> = shape.iter().map(|m| fast_len(2 * m - 1)).collect();
    let total: usize = pshape.iter().product();
    let mut a = vec![Complex64::default(); total];
    let mut pstride = vec![1usize; n];
    for d in 1..n {
        pstride[d] = pstride[d - 1] * pshape[d - 1];
    }
    for (flat, v) in u.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let mut r = flat;
        let mut p = 0;
        for d in 0..n {
            p += (r % shape[d]) * pstride[d];
            r /= shape[d];
        }
        a[p] = Complex64::new(*v, 0.0);
    }
    let mut k = vec![Complex64::default(); total];
    k.par_iter_mut().enumerate().for_each(|(flat, out)| {
        let mut r = flat;
        let mut off = [0i64; 3];
        for d in 0..n {
            let p = r % pshape[d];
            r /= pshape[d];
            let m = shape[d];
            off[d] = if p < m {
                p as i64
            } else if p + m > pshape[d] {
                p as i64 - pshape[d] as i64
            } else {
                return;
            };
        }
        *out = Complex64::new(table.k_tilde(&off[..n]), 0.0);
    });
    fft_nd(&mut a, &pshape, false);
    fft_nd(&mut k, &pshape, false);
    a.par_iter_mut().zip(k.par_iter()).for_each(|(x, y)| *x *= *y);
    fft_nd(&mut a, &pshape, true);
    let scale = 1.0 / total as f64;
    (0..u.len())
        .into_par_iter()
        .map(|flat| {
            let mut r = flat;
            let mut p = 0;
            for d in 0..n {
                p += (r % shape[d]) * pstride[d];
                r /= shape[d];
            }
            a[p].re * scale
        })
        .collect()
}

/// h^{N−2s} Σ_i u_i (T_i − conv_i). With `wall`, T depends on the layer
/// index along the last axis and the sum is relative to {x_N ≥ lo_N}.
pub fn lattice_energy(raster: &Raster, params: FracParams, near: usize, wall: bool) -> f64 {
    if raster.u.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let table = KernelTable::get(params, near);
    let conv = lattice_convolution(&raster.shape, &raster.u, &table);
    let n = raster.dim;
    let layer_stride: usize = raster.shape[..n - 1].iter().product();
    let layers = if wall {
        halfspace_layer_totals(&table, raster.shape[n - 1])
    } else {
        Vec::new()
    };
    let sum: f64 = raster
        .u
        .par_iter()
        .zip(conv.par_iter())
        .enumerate()
        .map(|(flat, (u, c))| {
            if *u == 0.0 {
                return 0.0;
            }
            let t = if wall { layers[flat / layer_stride] } else { table.total };
            u * (t - c)
        })
        .sum();
    sum * raster.h.powf(n as f64 - 2.0 * params.s)
}

fn check_dim(region: &dyn Region, params: FracParams) -> Result<()> {
    if region.dim() != params.dim {
        return Err(Error::InvalidParameter(format!(
            "set has dimension {} but parameters have N = {}",
            region.dim(),
            params.dim
        )));
    }
    Ok(())
}

fn window_for(region: &dyn Region, grid: &GridSpec) -> Result<(Vec<f64>, Vec<f64>, Vec<String>)> {
    let bbox = region.bounding_box();
    let mut warnings = Vec::new();
    let (lo, hi) = match (&grid.window, &bbox) {
        (Some((lo, hi)), Some((blo, bhi))) => {
            let inside = (0..lo.len()).all(|d| lo[d] <= blo[d] + 1e-12 && hi[d] >= bhi[d] - 1e-12);
            if !inside {
                return Err(Error::Domain("the set does not fit inside the grid window".into()));
            }
            (lo.clone(), hi.clone())
        }
        (Some((lo, hi)), None) => (lo.clone(), hi.clone()),
        (None, Some((blo, bhi))) => (
            blo.iter().map(|v| v - 2.0 * grid.h).collect(),
            bhi.iter().map(|v| v + 2.0 * grid.h).collect(),
        ),
        (None, None) => return Err(Error::Domain("unbounded set needs an explicit grid window".into())),
    };
    if let Some((blo, bhi)) = &bbox {
        let diam = blo.iter().zip(bhi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        if grid.h > 0.25 * diam {
            warnings.push(format!("cell size {} exceeds a quarter of the set diameter {diam}", grid.h));
        }
    }
    Ok((lo, hi, warnings))
}

/// Richardson with order 1 − 2s on (h, 2h); the error bound is the change of
/// the extrapolated value between the (h, 2h) and (2h, 4h) pairs.
fn richardson(levels: [f64; 3], s: f64) -> (f64, f64) {
    let f1 = 2f64.powf(1.0 - 2.0 * s) - 1.0;
    let r_fine = levels[0] + (levels[0] - levels[1]) / f1;
    let r_coarse = levels[1] + (levels[1] - levels[2]) / f1;
    (r_fine, (r_fine - r_coarse).abs())
}

/// Grid estimate of P_s(E) from cells h, 2h and 4h, Richardson-extrapolated.
pub fn perimeter_grid(region: &dyn Region, params: FracParams, grid: &GridSpec) -> Result<PerimeterEstimate> {
    grid.check()?;
    check_dim(region, params)?;
    let t0 = Instant::now();
    let (lo, hi, warnings) = window_for(region, grid)?;
    let mut levels = [0.0; 3];
    for (i, level) in levels.iter_mut().enumerate() {
        let h = grid.h * (1 << i) as f64;
        let raster = Raster::new(region, &lo, &hi, h, grid.subsample)?;
        *level = lattice_energy(&raster, params, grid.near_field, false);
    }
    let (value, err) = richardson(levels, params.s);
    Ok(PerimeterEstimate {
        value,
        error_bound: err,
        method: "grid".into(),
        resolution: grid.h,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        warnings,
    })
}

/// Grid estimate for an already rasterized set; coarse levels by 2^N block
/// averaging. With `wall`, relative to {x_N ≥ lo_N}.
pub fn perimeter_of_raster(raster: &Raster, params: FracParams, near: usize, wall: bool) -> PerimeterEstimate {
    let t0 = Instant::now();
    let c1 = raster.coarsen();
    let c2 = c1.coarsen();
    let levels = [
        lattice_energy(raster, params, near, wall),
        lattice_energy(&c1, params, near, wall),
        lattice_energy(&c2, params, near, wall),
    ];
    let (value, err) = richardson(levels, params.s);
    PerimeterEstimate {
        value,
        error_bound: err,
        method: if wall { "grid-halfspace" } else { "grid" }.into(),
        resolution: raster.h,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        warnings: Vec::new(),
    }
}

/// P_s(E, Ω) = ∫_E ∫_{Ω∖E} K for E ⊂ Ω.
///
/// In the half-space {x_N > 0} this is a lattice sum with layer-dependent
/// totals; otherwise P_s(E) − ∫_E V_Ω, which needs E at positive distance
/// from ∂Ω.
pub fn perimeter_rel(
    region: &dyn Region,
    omega: &Domain,
    params: FracParams,
    grid: &GridSpec,
) -> Result<PerimeterEstimate> {
    grid.check()?;
    check_dim(region, params)?;
    if omega.dim != params.dim {
        return Err(Error::InvalidParameter("ambient set has the wrong dimension".into()));
    }
    let t0 = Instant::now();
    let n = params.dim;
    if let Shape::Halfspace { normal_axis } = omega.shape {
        if normal_axis == n - 1 {
            let Some((blo, bhi)) = region.bounding_box() else {
                return Err(Error::Domain("unbounded set".into()));
            };
            let mut warnings = Vec::new();
            if blo[n - 1] < -1e-12 {
                warnings.push("set extends below the half-space; the part below is ignored".to_string());
            }
            let mut lo: Vec<f64> = blo.iter().map(|v| v - 2.0 * grid.h).collect();
            let hi: Vec<f64> = bhi.iter().map(|v| v + 2.0 * grid.h).collect();
            lo[n - 1] = 0.0;
            let raster = Raster::new(region, &lo, &hi, grid.h, grid.subsample)?;
            let mut est = perimeter_of_raster(&raster, params, grid.near_field, true);
            est.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
            est.warnings = warnings;
            return Ok(est);
        }
    }
    let full = perimeter_grid(region, params, grid)?;
    let (vint, verr, outside) = potential_integral(region, omega, params)?;
    let mut warnings = full.warnings;
    if outside > 0 {
        warnings.push(format!("{outside} occupied cells lie outside the ambient set"));
    }
    Ok(PerimeterEstimate {
        value: (full.value - vint).max(0.0),
        error_bound: full.error_bound + verr,
        method: "grid-relative".into(),
        resolution: grid.h,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        warnings,
    })
}

/// ∫_{E∩Ω} V_Ω with an error estimate, plus the number of occupied cells
/// found outside Ω (E ⊄ Ω).
fn potential_integral(region: &dyn Region, omega: &Domain, params: FracParams) -> Result<(f64, f64, usize)> {
    let opts = PotentialOpts {
        rel_tol: 1e-10,
        max_panels: 2000,
    };
    if let Some((c, r)) = region.as_ball() {
        if omega.contains(&c) && omega.boundary_distance(&c) > r {
            let v = ball_potential_integral(omega, &c, r, params, &opts)?;
            return Ok((v, 1e-8 * v.abs(), 0));
        }
    }
    let (blo, bhi) = region
        .bounding_box()
        .ok_or_else(|| Error::Domain("unbounded set".into()))?;
    let n = params.dim;
    let cells = if n == 2 { 48 } else { 16 };
    let side = (0..n).map(|d| bhi[d] - blo[d]).fold(0.0, f64::max);
    let eval = |m: usize| -> Result<(f64, usize)> {
        let h = side / m as f64;
        let hi: Vec<f64> = blo.iter().map(|v| v + side + 1e-12).collect();
        let raster = Raster::new(region, &blo, &hi, h, 4)?;
        let vals: Vec<Option<f64>> = raster
            .u
            .par_iter()
            .enumerate()
            .filter(|(_, u)| **u > 0.0)
            .map(|(flat, u)| {
                let x = raster.center(flat);
                potential_with(omega, &x, params, &opts).ok().map(|v| u * v)
            })
            .collect();
        let outside = vals.iter().filter(|v| v.is_none()).count();
        Ok((vals.iter().flatten().sum::<f64>() * h.powi(n as i32), outside))
    };
    let (fine, outside) = eval(cells)?;
    let (coarse, _) = eval(cells / 2)?;
    Ok((fine, (fine - coarse).abs(), outside))
}

/// Ordered splitmix64 derivation of sub-seeds.
fn sub_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    n: u64,
    sum: f64,
    sum_r: f64,
    sum_r2: f64,
    sum_sr: f64,
    tries: u64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_r += o.sum_r;
        self.sum_r2 += o.sum_r2;
        self.sum_sr += o.sum_sr;
        self.tries += o.tries;
        self
    }
    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
    /// Bernoulli variance with a half-count prior, so strata without any
    /// exit still report an honest spread.
    fn var(&self) -> f64 {
        let p = (self.sum + 0.5) / (self.n as f64 + 1.0);
        p * (1.0 - p)
    }
}

const BLOCK: u64 = 8192;

/// Per-stratum variance estimates of the last Monte Carlo run, exposed for
/// diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McStratum {
    pub r_lo: f64,
    pub r_hi: f64,
    pub samples: u64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub estimate: PerimeterEstimate,
    pub strata: Vec<McStratum>,
    pub volume: f64,
    /// Fitted exit probability per unit ray length below the cutoff.
    pub inner_slope: f64,
    pub inner_slope_se: f64,
}

/// Stratified Monte Carlo estimate of P_s(E). Ray lengths are stratified in
/// geometric bands between δ·D and D (D the bounding-box diameter) and drawn
/// from the kernel density inside each band; r > D contributes exactly and
/// r < δ·D through the flat-interface law P(exit) ≈ c·r.
pub fn perimeter_mc(region: &dyn Region, params: FracParams, mc: &McSpec) -> Result<PerimeterEstimate> {
    perimeter_mc_report(region, params, mc).map(|r| r.estimate)
}

pub fn perimeter_mc_report(region: &dyn Region, params: FracParams, mc: &McSpec) -> Result<McReport> {
    check_dim(region, params)?;
    if mc.samples < 1000 {
        return Err(Error::InvalidParameter("at least 1000 samples are needed".into()));
    }
    if !(mc.inner_cutoff > 0.0 && mc.inner_cutoff < 1.0) || mc.strata_per_decade == 0 {
        return Err(Error::InvalidParameter("inner cutoff must lie in (0, 1)".into()));
    }
    let t0 = Instant::now();
    let n = params.dim;
    let s = params.s;
    let (lo, hi) = region
        .bounding_box()
        .ok_or_else(|| Error::Domain("Monte Carlo needs a bounded set".into()))?;
    let diam = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let decades = (1.0 / mc.inner_cutoff).log10();
    let k_strata = ((decades * mc.strata_per_decade as f64).ceil() as usize).max(1);
    let edges: Vec<f64> = (0..=k_strata)
        .map(|k| diam * mc.inner_cutoff.powf(1.0 - k as f64 / k_strata as f64))
        .collect();
    let mass = |a: f64, b: f64| (a.powf(-2.0 * s) - b.powf(-2.0 * s)) / (2.0 * s);

    let run_block = |k: usize, phase: u64, b: u64, count: u64| -> Tally {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(mc.seed, (k as u64) << 8 | phase, b));
        let (ra, rb) = (edges[k], edges[k + 1]);
        let (pa, pb) = (ra.powf(-2.0 * s), rb.powf(-2.0 * s));
        let mut t = Tally::default();
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut w = vec![0.0; n];
        while t.n < count {
            t.tries += 1;
            for d in 0..n {
                x[d] = rng.random_range(lo[d]..hi[d]);
            }
            if !region.contains(&x) {
                if t.tries > 1000 * (t.n + 1) + 100_000 {
                    break;
                }
                continue;
            }
            let mut norm = 0.0;
            for v in w.iter_mut() {
                let g = standard_normal(&mut rng);
                *v = g;
                norm += g * g;
            }
            let norm = norm.sqrt();
            let u: f64 = rng.random();
            let r = (pa - u * (pa - pb)).powf(-0.5 / s);
            for d in 0..n {
                y[d] = x[d] + r * w[d] / norm;
            }
            let score = if region.contains(&y) { 0.0 } else { 1.0 };
            t.n += 1;
            t.sum += score;
            t.sum_r += r;
            t.sum_r2 += r * r;
            t.sum_sr += score * r;
        }
        t
    };
    let run = |k: usize, phase: u64, count: u64| -> Tally {
        let blocks = count.div_ceil(BLOCK);
        let parts: Vec<Tally> = (0..blocks)
            .into_par_iter()
            .map(|b| run_block(k, phase, b, BLOCK.min(count - b * BLOCK)))
            .collect();
        parts.into_iter().fold(Tally::default(), Tally::merge)
    };

    let pilot_each = (mc.samples / 20 / k_strata as u64).max(1000);
    let mut tallies: Vec<Tally> = (0..k_strata).map(|k| run(k, 0, pilot_each)).collect();
    if tallies.iter().all(|t| t.n == 0) {
        return Err(Error::Domain("rejection sampling found no point of the set".into()));
    }
    let remaining = mc.samples.saturating_sub(pilot_each * k_strata as u64);
    let weights: Vec<f64> = (0..k_strata)
        .map(|k| mass(edges[k], edges[k + 1]) * tallies[k].var().sqrt().max(1e-3))
        .collect();
    let wsum: f64 = weights.iter().sum();
    for k in 0..k_strata {
        let extra = (remaining as f64 * weights[k] / wsum).round() as u64;
        if extra > 0 {
            tallies[k] = tallies[k].merge(run(k, 1, extra));
        }
    }

    let volume = match region.exact_volume() {
        Some(v) => v,
        None => {
            let (acc, tries) = tallies.iter().fold((0u64, 0u64), |(a, b), t| (a + t.n, b + t.tries));
            box_vol * acc as f64 / tries as f64
        }
    };
    let vol_rel_var = match region.exact_volume() {
        Some(_) => 0.0,
        None => {
            let (acc, tries) = tallies.iter().fold((0u64, 0u64), |(a, b), t| (a + t.n, b + t.tries));
            let p = acc as f64 / tries as f64;
            (1.0 - p) / (p * tries as f64)
        }
    };
    let area = sphere_area(n);
    let mut mean = diam.powf(-2.0 * s) / (2.0 * s);
    let mut strata = Vec::with_capacity(k_strata);
    for (k, t) in tallies.iter().enumerate() {
        mean += mass(edges[k], edges[k + 1]) * t.mean();
        strata.push(McStratum {
            r_lo: edges[k],
            r_hi: edges[k + 1],
            samples: t.n,
            mean: t.mean(),
            variance: t.var(),
        });
    }
    // flat-interface slope c from the two innermost strata (ratio estimator)
    let near_count = 2.min(k_strata);
    let near = tallies.iter().take(near_count).fold(Tally::default(), |a, b| a.merge(*b));
    let c = if near.sum_r > 0.0 { near.sum / near.sum_r } else { 0.0 };
    let inner = edges[0].powf(1.0 - 2.0 * s) / (1.0 - 2.0 * s);
    mean += c * inner;
    // delta method: a sample in an inner stratum moves both its stratum mean
    // and c, so the two effects are combined per sample before squaring
    let mut var = 0.0;
    let mut c_var = 0.0;
    for (k, t) in tallies.iter().enumerate() {
        if t.n == 0 {
            continue;
        }
        let nk = t.n as f64;
        let a = mass(edges[k], edges[k + 1]) / nk;
        let var_s = t.var();
        if k < near_count && near.sum_r > 0.0 {
            let b = inner / near.sum_r;
            let mr = t.sum_r / nk;
            let var_r = (t.sum_r2 / nk - mr * mr).max(0.0);
            let cov = t.sum_sr / nk - t.mean() * mr;
            let phi = (a + b) * (a + b) * var_s - 2.0 * (a + b) * b * c * cov + b * b * c * c * var_r;
            var += nk * phi.max(0.0);
            let g = 1.0 / near.sum_r;
            c_var += nk * g * g * (var_s - 2.0 * c * cov + c * c * var_r).max(0.0);
        } else {
            var += nk * a * a * var_s;
        }
    }
    let value = volume * area * mean;
    let se = (volume * area) * var.sqrt();
    let se = (se * se + value * value * vol_rel_var).sqrt();
    let total: u64 = tallies.iter().map(|t| t.n).sum();
    Ok(McReport {
        estimate: PerimeterEstimate {
            value,
            error_bound: se,
            method: "monte-carlo".into(),
            resolution: total as f64,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            warnings: Vec::new(),
        },
        strata,
        volume,
        inner_slope: c,
        inner_slope_se: c_var.sqrt(),
    })
}

/// Box–Muller standard normal, enough for direction sampling.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Ψ(L) = L^{1−2s} / (2s(1−2s)), the one-sided interaction of a segment.
fn psi(x: f64, s: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.powf(1.0 - 2.0 * s) / (2.0 * s * (1.0 - 2.0 * s))
    }
}

/// One-dimensional P_s of a finite union of sorted disjoint intervals, with
/// kernel |t − τ|^{-1-2s}.
pub fn p1d(intervals: &[(f64, f64)], s: f64) -> f64 {
    let mut acc = 0.0;
    for (i, a) in intervals.iter().enumerate() {
        acc += 2.0 * psi(a.1 - a.0, s);
        for b in &intervals[i + 1..] {
            acc -= 2.0 * (psi(b.0 - a.0, s) - psi(b.0 - a.1, s) - psi(b.1 - a.0, s) + psi(b.1 - a.1, s));
        }
    }
    acc
}

fn projected_range(lo: &[f64], hi: &[f64], v: &[f64]) -> (f64, f64) {
    let n = lo.len();
    let mut a = 0.0;
    let mut b = 0.0;
    for d in 0..n {
        let (x, y) = (lo[d] * v[d], hi[d] * v[d]);
        a += x.min(y);
        b += x.max(y);
    }
    (a, b)
}

/// P_s(E) = ½ ∫_{S^{N−1}} ∫_{ω^⊥} P1D(E ∩ (p + ℝω)) dp dω, with adaptive
/// Gauss–Kronrod in every variable.
pub fn perimeter_chord(region: &dyn Region, params: FracParams, spec: &ChordSpec) -> Result<PerimeterEstimate> {
    check_dim(region, params)?;
    let t0 = Instant::now();
    let s = params.s;
    let (lo, hi) = region
        .bounding_box()
        .ok_or_else(|| Error::Domain("chord quadrature needs a bounded set".into()))?;
    let section = |o: &[f64], w: &[f64]| -> f64 {
        let iv = region.line_intervals(o, w);
        if iv.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return f64::NAN;
        }
        p1d(&iv, s)
    };
    let tol = spec.rel_tol;
    let (value, err) = match params.dim {
        2 => {
            let inner = |phi: f64| -> (f64, f64) {
                let w = [phi.cos(), phi.sin()];
                let nrm = [-phi.sin(), phi.cos()];
                let (pa, pb) = projected_range(&lo, &hi, &nrm);
                let br: Vec<f64> = (0..=8).map(|k| pa + (pb - pa) * k as f64 / 8.0).collect();
                let r = adaptive(
                    |p| section(&[p * nrm[0], p * nrm[1]], &w),
                    &br,
                    0.0,
                    tol,
                    spec.max_panels,
                );
                (r.value, r.error)
            };
            let br: Vec<f64> = (0..=16).map(|k| k as f64 * std::f64::consts::PI / 16.0).collect();
            let mut inner_err = 0.0f64;
            let r = adaptive(
                |phi| {
                    let (v, e) = inner(phi);
                    inner_err = inner_err.max(e);
                    v
                },
                &br,
                0.0,
                tol,
                spec.max_panels,
            );
            (r.value, r.error + inner_err * std::f64::consts::PI)
        }
        _ => {
            let plane = |z: f64, phi: f64| -> f64 {
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let w = [rho * phi.cos(), rho * phi.sin(), z];
                let (e1, e2) = orthonormal_pair(&w);
                let (a1, b1) = projected_range(&lo, &hi, &e1);
                let (a2, b2) = projected_range(&lo, &hi, &e2);
                let br1: Vec<f64> = (0..=4).map(|k| a1 + (b1 - a1) * k as f64 / 4.0).collect();
                let br2: Vec<f64> = (0..=4).map(|k| a2 + (b2 - a2) * k as f64 / 4.0).collect();
                adaptive(
                    |p| {
                        adaptive(
                            |q| {
                                let o = [p * e1[0] + q * e2[0], p * e1[1] + q * e2[1], p * e1[2] + q * e2[2]];
                                section(&o, &w)
                            },
                            &br2,
                            0.0,
                            tol,
                            spec.max_panels,
                        )
                        .value
                    },
                    &br1,
                    0.0,
                    tol,
                    spec.max_panels,
                )
                .value
            };
            let brz: Vec<f64> = (0..=4).map(|k| k as f64 / 4.0).collect();
            let brp: Vec<f64> = (0..=8).map(|k| k as f64 * std::f64::consts::PI / 4.0).collect();
            let r = adaptive(
                |z| adaptive(|phi| plane(z, phi), &brp, 0.0, tol * 10.0, spec.max_panels).value,
                &brz,
                0.0,
                tol * 10.0,
                spec.max_panels,
            );
            (r.value, r.error)
        }
    };
    if !value.is_finite() {
        return Err(Error::Domain("chord quadrature needs bounded line sections".into()));
    }
    Ok(PerimeterEstimate {
        value,
        error_bound: err,
        method: "chord".into(),
        resolution: tol,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        warnings: Vec::new(),
    })
}

pub(crate) fn orthonormal_pair(w: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let a = if w[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = a[0] * w[0] + a[1] * w[1] + a[2] * w[2];
    let mut e1 = [a[0] - d * w[0], a[1] - d * w[1], a[2] - d * w[2]];
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    for v in e1.iter_mut() {
        *v /= n1;
    }
    let e2 = [
        w[1] * e1[2] - w[2] * e1[1],
        w[2] * e1[0] - w[0] * e1[2],
        w[0] * e1[1] - w[1] * e1[0],
    ];
    (e1, e2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Asymmetry {
    pub value: f64,
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Occupancy of E on a 64-point sub-lattice of every non-empty cell.
struct CellMasks {
    corners: Vec<Vec<f64>>,
    masks: Vec<u64>,
    sub: usize,
    h: f64,
}

impl CellMasks {
    fn new(region: &dyn Region, raster: &Raster) -> Self {
        let n = raster.dim;
        let sub = if n == 2 { 8 } else { 4 };
        let cells: Vec<(Vec<f64>, u64)> = raster
            .u
            .par_iter()
            .enumerate()
            .filter(|(_, u)| **u > 0.0)
            .map(|(flat, u)| {
                let corner: Vec<f64> = raster
                    .index_of(flat)
                    .iter()
                    .enumerate()
                    .map(|(d, i)| raster.lo[d] + *i as f64 * raster.h)
                    .collect();
                let mask = if *u >= 1.0 {
                    u64::MAX
                } else {
                    let mut m = 0u64;
                    let mut x = vec![0.0; n];
                    for (bit, mut idx) in (0..64usize).enumerate() {
                        for d in 0..n {
                            x[d] = corner[d] + ((idx % sub) as f64 + 0.5) / sub as f64 * raster.h;
                            idx /= sub;
                        }
                        if region.contains(&x) {
                            m |= 1 << bit;
                        }
                    }
                    m
                };
                (corner, mask)
            })
            .collect();
        let (corners, masks) = cells.into_iter().unzip();
        CellMasks {
            corners,
            masks,
            sub,
            h: raster.h,
        }
    }

    /// |E ∩ B_r(c)| on the sub-lattice.
    fn overlap(&self, c: &[f64], r: f64) -> f64 {
        let n = c.len();
        let sub = self.sub;
        let h = self.h;
        let half_diag = 0.5 * h * (n as f64).sqrt();
        let count: u32 = self
            .corners
            .par_iter()
            .zip(self.masks.par_iter())
            .map(|(corner, mask)| {
                let d = (0..n).map(|i| (corner[i] + 0.5 * h - c[i]).powi(2)).sum::<f64>().sqrt();
                if d + half_diag <= r {
                    return mask.count_ones();
                }
                if d - half_diag >= r {
                    return 0;
                }
                let mut ball = 0u64;
                for (bit, mut idx) in (0..64usize).enumerate() {
                    let mut q = 0.0;
                    for i in 0..n {
                        let x = corner[i] + ((idx % sub) as f64 + 0.5) / sub as f64 * h;
                        idx /= sub;
                        q += (x - c[i]).powi(2);
                    }
                    if q <= r * r {
                        ball |= 1 << bit;
                    }
                }
                (mask & ball).count_ones()
            })
            .sum();
        count as f64 / 64.0 * h.powi(n as i32)
    }

    fn volume(&self) -> f64 {
        let n = self.corners.first().map(|c| c.len()).unwrap_or(2);
        self.masks.iter().map(|m| m.count_ones() as f64).sum::<f64>() / 64.0 * self.h.powi(n as i32)
    }
}

/// Fraenkel asymmetry min_x |E Δ B_r(x)| / |E| with |B_r| = |E|, on the
/// occupancy grid of `grid`; coarse scan of centers then Nelder–Mead.
pub fn fraenkel_asymmetry(region: &dyn Region, grid: &GridSpec) -> Result<Asymmetry> {
    grid.check()?;
    let (lo, hi, _) = window_for(region, grid)?;
    let raster = Raster::new(region, &lo, &hi, grid.h, grid.subsample)?;
    let n = raster.dim;
    let masks = CellMasks::new(region, &raster);
    let vol = masks.volume();
    if vol <= 0.0 {
        return Err(Error::Domain("asymmetry of an empty set".into()));
    }
    let r = (vol / unit_ball_volume(n)).powf(1.0 / n as f64);
    let objective = |c: &[f64]| 2.0 * (vol - masks.overlap(c, r)) / vol;
    // centroid and a coarse scan
    let mut centroid = vec![0.0; n];
    for (flat, u) in raster.u.iter().enumerate() {
        if *u > 0.0 {
            let x = raster.center(flat);
            for d in 0..n {
                centroid[d] += u * x[d];
            }
        }
    }
    let mass: f64 = raster.u.iter().sum();
    for v in centroid.iter_mut() {
        *v /= mass;
    }
    let (blo, bhi) = region.bounding_box().unwrap_or((lo.clone(), hi.clone()));
    let mut best = (objective(&centroid), centroid.clone());
    let m = 5usize;
    for mut idx in 0..m.pow(n as u32) {
        let c: Vec<f64> = (0..n)
            .map(|d| {
                let k = idx % m;
                idx /= m;
                blo[d] + (bhi[d] - blo[d]) * (k as f64 + 0.5) / m as f64
            })
            .collect();
        let v = objective(&c);
        if v < best.0 {
            best = (v, c);
        }
    }
    let (value, center) = nelder_mead(&objective, &best.1, 0.25 * r, 1e-4 * grid.h, 400);
    Ok(Asymmetry {
        value: value.max(0.0),
        center,
        radius: r,
    })
}

/// Plain Nelder–Mead; returns (f, x) at the best vertex.
pub(crate) fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: f64, xtol: f64, max_iter: usize) -> (f64, Vec<f64>) {
    let n = x0.len();
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
    simplex.push((f(x0), x0.to_vec()));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push((f(&x), x));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let size = simplex[1..]
            .iter()
            .map(|(_, x)| x.iter().zip(&simplex[0].1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size < xtol {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|(_, x)| x[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let at = |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (worst.1[d] - centroid[d])).collect() };
        let xr = at(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].0 {
            let xe = at(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (fe, xe) } else { (fr, xr) };
        } else if fr < simplex[n - 1].0 {
            simplex[n] = (fr, xr);
        } else {
            let xc = if fr < worst.0 { at(-0.5) } else { at(0.5) };
            let fc = f(&xc);
            if fc < worst.0.min(fr) {
                simplex[n] = (fc, xc);
            } else {
                let best = simplex[0].1.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..n).map(|d| best[d] + 0.5 * (v.1[d] - best[d])).collect();
                    *v = (f(&x), x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
    simplex.swap_remove(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ProbeMethod {
    Grid(GridSpec),
    Chord(ChordSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaRow {
    pub s: f64,
    pub scaled: f64,
    pub error_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaProbe {
    pub rows: Vec<GammaRow>,
    /// Linear extrapolation of (1 − 2s) P_s to s = 1/2.
    pub limit: f64,
    /// ω_{N−1} Per(E) when the classical perimeter is known.
    pub classical: Option<f64>,
}

/// (1 − 2s) P_s(E) along `s_list`, extrapolated linearly in 1/2 − s.
pub fn gamma_limit_probe(region: &dyn Region, s_list: &[f64], method: &ProbeMethod) -> Result<GammaProbe> {
    if s_list.len() < 2 {
        return Err(Error::InvalidParameter("need at least two values of s".into()));
    }
    let n = region.dim();
    let mut rows = Vec::new();
    for &s in s_list {
        let params = FracParams::new(n, s)?;
        let est = match method {
            ProbeMethod::Grid(g) => perimeter_grid(region, params, g)?,
            ProbeMethod::Chord(c) => perimeter_chord(region, params, c)?,
        };
        rows.push(GammaRow {
            s,
            scaled: (1.0 - 2.0 * s) * est.value,
            error_bound: (1.0 - 2.0 * s) * est.error_bound,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| 0.5 - r.s).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.scaled).collect();
    let slope = crate::fit_slope(&x, &y);
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let limit = my - slope * mx;
    let classical = region
        .classical_perimeter()
        .map(|p| unit_ball_volume(n - 1) * p);
    Ok(GammaProbe { rows, limit, classical })
}

/// One row per estimate: label, method, N, s, resolution, value, error
/// bound, wall time.
pub fn write_csv(path: &Path, rows: &[(String, FracParams, PerimeterEstimate)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "method", "N", "s", "resolution", "value", "error_bound", "wall_time_ms"])?;
    for (label, params, e) in rows {
        w.write_record([
            label.clone(),
            e.method.clone(),
            params.dim.to_string(),
            params.s.to_string(),
            format!("{:.6e}", e.resolution),
            format!("{:.12e}", e.value),
            format!("{:.6e}", e.error_bound),
            format!("{:.3}", e.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::ball_perimeter;
    use approx::assert_relative_eq;

    fn p(n: usize, s: f64) -> FracParams {
        FracParams::new(n, s).unwrap()
    }

    #[test]
    fn p1d_single_interval_and_homogeneity() {
        let s = 0.3;
        let one = p1d(&[(0.0, 1.0)], s);
        assert_relative_eq!(one, 2.0 / (2.0 * s * (1.0 - 2.0 * s)), max_relative = 1e-14);
        let two = p1d(&[(0.0, 2.0)], s);
        assert_relative_eq!(two, 2f64.powf(1.0 - 2.0 * s) * one, max_relative = 1e-14);
    }

    #[test]
    fn p1d_two_intervals_against_direct_quadrature() {
        let s = 0.25;
        let iv = [(0.0, 1.0), (1.5, 2.2)];
        // ∫_A ∫_{A^c}: inner integral of the complement in closed form
        let outside = |t: f64| -> f64 {
            let pieces = [(f64::NEG_INFINITY, 0.0), (1.0, 1.5), (2.2, f64::INFINITY)];
            pieces
                .iter()
                .map(|(a, b)| {
                    let f = |x: f64| {
                        if x.is_infinite() {
                            0.0
                        } else {
                            (x - t).signum() * (x - t).abs().powf(-2.0 * s) / (-2.0 * s)
                        }
                    };
                    f(*b) - f(*a)
                })
                .sum()
        };
        // cosine map softens the t^{-2s} endpoint singularities
        let piece = |a: f64, b: f64| {
            let f = |v: f64| {
                let t = a + 0.5 * (b - a) * (1.0 - (std::f64::consts::PI * v).cos());
                let dt = 0.5 * (b - a) * std::f64::consts::PI * (std::f64::consts::PI * v).sin();
                outside(t) * dt
            };
            crate::quadrature::adaptive(f, &[0.0, 0.5, 1.0], 1e-13, 1e-11, 4000).value
        };
        let direct = piece(0.0, 1.0) + piece(1.5, 2.2);
        assert_relative_eq!(p1d(&iv, s), direct, max_relative = 1e-7);
    }

    #[test]
    fn disk_by_chord_matches_closed_form() {
        for s in [0.1, 0.25, 0.4] {
            let e = perimeter_chord(&Domain::unit_ball(2), p(2, s), &ChordSpec::default()).unwrap();
            assert_relative_eq!(e.value, ball_perimeter(p(2, s)), max_relative = 1e-6);
        }
    }

    #[test]
    fn disk_by_grid_matches_closed_form() {
        let e = perimeter_grid(&Domain::unit_ball(2), p(2, 0.25), &GridSpec::new(0.01)).unwrap();
        let exact = ball_perimeter(p(2, 0.25));
        assert!((e.value - exact).abs() < 2e-3 * exact, "{} vs {exact}", e.value);
    }

    #[test]
    fn square_grid_is_translation_invariant() {
        let params = p(2, 0.3);
        let sq = Domain::cube(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let moved = Domain::cube(&[0.37, -0.21], &[1.37, 0.79]).unwrap();
        let g = GridSpec::new(0.01);
        let a = perimeter_grid(&sq, params, &g).unwrap();
        let b = perimeter_grid(&moved, params, &g).unwrap();
        assert!((a.value - b.value).abs() < 1e-3 * a.value, "{} {}", a.value, b.value);
        let c = perimeter_chord(&sq, params, &ChordSpec::default()).unwrap();
        assert!((a.value - c.value).abs() < 2e-3 * c.value, "grid {} chord {}", a.value, c.value);
    }

    #[test]
    fn monte_carlo_disk_within_error() {
        let params = p(2, 0.25);
        let e = perimeter_mc(&Domain::unit_ball(2), params, &McSpec::new(2_000_000, 11)).unwrap();
        let exact = ball_perimeter(params);
        assert!((e.value - exact).abs() < 4.0 * e.error_bound + 2e-3 * exact, "{} ± {} vs {exact}", e.value, e.error_bound);
    }

    #[test]
    fn stratum_variances_are_finite_and_stable() {
        let params = p(2, 0.25);
        let a = perimeter_mc_report(&Domain::unit_ball(2), params, &McSpec::new(400_000, 1)).unwrap();
        let b = perimeter_mc_report(&Domain::unit_ball(2), params, &McSpec::new(400_000, 2)).unwrap();
        for (x, y) in a.strata.iter().zip(&b.strata) {
            assert!(x.variance.is_finite() && x.variance > 0.0 && x.variance <= 0.25);
            assert!((x.variance / y.variance - 1.0).abs() < 0.2, "{} vs {}", x.variance, y.variance);
        }
    }

    #[test]
    fn monte_carlo_is_thread_independent() {
        let params = p(2, 0.3);
        let sq = Domain::cube(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let spec = McSpec::new(200_000, 5);
        let a = perimeter_mc(&sq, params, &spec).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| perimeter_mc(&sq, params, &spec).unwrap());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn ball_in_three_dimensions() {
        let params = p(3, 0.25);
        let exact = ball_perimeter(params);
        let g = perimeter_grid(&Domain::unit_ball(3), params, &GridSpec::new(0.05)).unwrap();
        assert!((g.value - exact).abs() < 1e-2 * exact, "{} vs {exact}", g.value);
    }

    #[test]
    fn empty_grid_set_has_zero_perimeter() {
        let empty = Domain::custom("empty", &[-1.0, -1.0], &[1.0, 1.0], |_| false).unwrap();
        let e = perimeter_grid(&empty, p(2, 0.25), &GridSpec::new(0.05)).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn asymmetry_of_disk_and_square() {
        let g = GridSpec::new(0.01);
        let a = fraenkel_asymmetry(&Domain::unit_ball(2), &g).unwrap();
        assert!(a.value < 5e-3, "{}", a.value);
        let sq = Domain::cube(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let a = fraenkel_asymmetry(&sq, &g).unwrap();
        let r = 1.0 / std::f64::consts::PI.sqrt();
        let seg = r * r * (0.5 / r).acos() - 0.5 * (r * r - 0.25).sqrt();
        assert!((a.value - 8.0 * seg).abs() < 5e-3, "{} vs {}", a.value, 8.0 * seg);
    }

    #[test]
    fn relative_perimeter_in_large_balls() {
        let params = p(2, 0.25);
        let full = ball_perimeter(params);
        let g = GridSpec::new(0.01);
        let e = Domain::unit_ball(2);
        let rel = |r: f64| perimeter_rel(&e, &Domain::ball(&[0.0, 0.0], r).unwrap(), params, &g).unwrap().value;
        let grid_full = perimeter_grid(&e, params, &g).unwrap().value;
        // V_{B_R} ≈ 2π/(2s)·R^{-2s} on B_1, so the deficit is π·2π/(2s)·R^{-2s}
        for r in [100.0, 1000.0] {
            let deficit = grid_full - rel(r);
            let expected = std::f64::consts::PI * 2.0 * std::f64::consts::PI / 0.5 * r.powf(-0.5);
            assert!((deficit / expected - 1.0).abs() < 1e-3, "R={r}: {deficit} vs {expected}");
            assert!(rel(r) < full);
        }
    }

    #[test]
    fn relative_perimeter_in_the_half_plane() {
        use crate::specfun::gamma_signed;
        let s = 0.25;
        let params = p(2, s);
        let e = Domain::ball(&[0.0, 2.0], 1.0).unwrap();
        let h = Domain::halfspace(2, 1).unwrap();
        let est = perimeter_rel(&e, &h, params, &GridSpec::new(0.005)).unwrap();
        // V_H(x) = C x_2^{-2s}, C = B(1/2, s + 1/2)/(2s)
        let beta = gamma_signed(0.5) * gamma_signed(s + 0.5) / gamma_signed(s + 1.0);
        let c = beta / (2.0 * s);
        let slab = crate::quadrature::adaptive(
            |y: f64| 2.0 * (1.0 - (y - 2.0) * (y - 2.0)).max(0.0).sqrt() * y.powf(-2.0 * s),
            &[1.0, 2.0, 3.0],
            1e-13,
            1e-12,
            2000,
        )
        .value;
        let expected = ball_perimeter(params) - c * slab;
        assert!(
            (est.value - expected).abs() < est.error_bound.max(1e-3 * expected),
            "{} ± {} vs {expected}",
            est.value,
            est.error_bound
        );
    }

    #[test]
    fn invalid_grid_spacing_is_rejected() {
        let e = perimeter_grid(&Domain::unit_ball(2), p(2, 0.25), &GridSpec::new(0.0));
        assert!(matches!(e, Err(Error::InvalidParameter(_))));
    }
}
