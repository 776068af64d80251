//! Volume-constrained minimization of P_s(·, ℝ^N_+) and the two
//! rearrangements (slice-wise symmetrization, column-wise push-down) on
//! gridded sets.
//!
//! The relative perimeter of E ⊂ ℝ^N_+ only counts interactions inside the
//! half-space: P_s(E, ℝ^N_+) = ∫_E ∫_{ℝ^N_+ ∖ E} |x − y|^{−N−2s}. For graph
//! sets we evaluate it as P_s(E) − ∫_E V_H, with P_s(E) from the boundary
//! double integral
//!   P_s(E) = 1/(2s(N−2+2s)) ∬_{∂E×∂E} ν_x·ν_y |x − y|^{2−N−2s},
//! reduced to the generator curve for solids of revolution.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domains::{clip_to_box, merge_intervals, Region};
use crate::error::{Error, Result};
use crate::perimeter::{perimeter_of_raster, PerimeterEstimate, Raster};
use crate::quadrature::{adaptive, gauss_jacobi, gauss_legendre, Rule};
use crate::specfun::gamma_signed;
use crate::FracParams;

/// Correctly rounded sum (Shewchuk's partials).
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // round-half-even correction as in math.fsum
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Fractional occupancy on a grid over a window in the closed half-space.
///
/// Cells are indexed with the first coordinate fastest; the last axis is
/// the vertical one and the window starts at x_N = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    pub h: f64,
    /// Lower corner; the last entry is 0.
    pub lo: Vec<f64>,
    pub shape: Vec<usize>,
    pub occupancy: Vec<f64>,
}

impl GridSet {
    pub fn new(h: f64, lo: Vec<f64>, shape: Vec<usize>, occupancy: Vec<f64>) -> Result<Self> {
        let n = shape.len();
        if !(2..=3).contains(&n) || lo.len() != n {
            return Err(Error::InvalidParameter("grid sets live in two or three dimensions".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("cell size must be positive, got {h}")));
        }
        if lo[n - 1] != 0.0 {
            return Err(Error::InvalidParameter("the window must start on the floor x_N = 0".into()));
        }
        if occupancy.len() != shape.iter().product::<usize>() {
            return Err(Error::InvalidParameter("occupancy length does not match the shape".into()));
        }
        if let Some(v) = occupancy.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("occupancy {v} outside [0, 1]")));
        }
        Ok(GridSet { h, lo, shape, occupancy })
    }

    /// Rasterize a region over a window [lo', hi'] × [0, top].
    pub fn from_region(region: &dyn Region, lo: &[f64], hi: &[f64], h: f64, sub: usize) -> Result<Self> {
        let n = lo.len();
        let mut lo = lo.to_vec();
        lo[n - 1] = 0.0;
        let r = Raster::new(region, &lo, hi, h, sub)?;
        let occupancy = r.u.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        GridSet::new(r.h, r.lo, r.shape, occupancy)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Σ occupancy · h^N.
    pub fn mass(&self) -> f64 {
        exact_sum(self.occupancy.iter().cloned()) * self.h.powi(self.dim() as i32)
    }

    fn layer_len(&self) -> usize {
        self.shape[..self.dim() - 1].iter().product()
    }

    /// Occupancy sum of each horizontal slice (cell units).
    pub fn slice_sums(&self) -> Vec<f64> {
        let l = self.layer_len();
        self.occupancy.chunks(l).map(|c| exact_sum(c.iter().cloned())).collect()
    }

    /// Occupancy sum of each vertical column (cell units).
    pub fn column_sums(&self) -> Vec<f64> {
        let l = self.layer_len();
        let layers = self.shape[self.dim() - 1];
        (0..l)
            .map(|c| exact_sum((0..layers).map(|k| self.occupancy[k * l + c])))
            .collect()
    }

    pub fn to_raster(&self) -> Raster {
        Raster {
            dim: self.dim(),
            lo: self.lo.clone(),
            h: self.h,
            shape: self.shape.clone(),
            u: self.occupancy.clone(),
        }
    }

    /// Grid estimate of P_s(E, ℝ^N_+).
    pub fn perimeter(&self, params: FracParams, near: usize) -> Result<PerimeterEstimate> {
        if params.dim != self.dim() {
            return Err(Error::InvalidParameter("grid set and parameters disagree on N".into()));
        }
        Ok(perimeter_of_raster(&self.to_raster(), params, near, true))
    }
}

/// Horizontal cells grouped into orbits of the symmetries of the window
/// about its center, ordered by distance from the center.
fn slice_orbits(shape: &[usize]) -> Vec<Vec<usize>> {
    let m = shape.len();
    let mut groups: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let total: usize = shape.iter().product();
    for flat in 0..total {
        let mut rem = flat;
        // doubled offsets from the center keep everything integral
        let mut key: Vec<i64> = (0..m)
            .map(|d| {
                let i = rem % shape[d];
                rem /= shape[d];
                (2 * i as i64 + 1 - shape[d] as i64).abs()
            })
            .collect();
        key.sort_unstable();
        groups.entry(key).or_default().push(flat);
    }
    let mut orbits: Vec<(Vec<i64>, Vec<usize>)> = groups.into_iter().collect();
    orbits.sort_by(|a, b| {
        let da: i64 = a.0.iter().map(|v| v * v).sum();
        let db: i64 = b.0.iter().map(|v| v * v).sum();
        da.cmp(&db).then_with(|| a.0.cmp(&b.0))
    });
    orbits.into_iter().map(|(_, v)| v).collect()
}

/// Fill `cells` in order with total mass `t`, full cells first; the
/// fractional remainder is split evenly over the first partially filled
/// orbit (orbits have power-of-two size, so the split is exact).
fn fill_orbits(orbits: &[Vec<usize>], t: f64, out: &mut [f64]) {
    let mut left = t;
    for orbit in orbits {
        if left <= 0.0 {
            break;
        }
        let g = orbit.len() as f64;
        if left >= g {
            for &c in orbit {
                out[c] = 1.0;
            }
            left -= g;
        } else {
            let q = left / g;
            for &c in orbit {
                out[c] = q;
            }
            left = 0.0;
        }
    }
}

/// Replace every horizontal slice by a centered discrete ball of the same
/// mass: cells fill in order of distance from the window's vertical axis.
pub fn rearrange_radial(set: &GridSet) -> Result<GridSet> {
    let n = set.dim();
    if n == 3 && set.shape[0] != set.shape[1] {
        return Err(Error::InvalidParameter("radial rearrangement needs a square horizontal window".into()));
    }
    let orbits = slice_orbits(&set.shape[..n - 1]);
    let l = set.layer_len();
    let mut out = vec![0.0; set.occupancy.len()];
    for (k, t) in set.slice_sums().into_iter().enumerate() {
        fill_orbits(&orbits, t, &mut out[k * l..(k + 1) * l]);
    }
    GridSet::new(set.h, set.lo.clone(), set.shape.clone(), out)
}

/// Push the mass of every vertical column down onto the floor.
pub fn rearrange_decreasing(set: &GridSet) -> Result<GridSet> {
    let l = set.layer_len();
    let layers = set.shape[set.dim() - 1];
    let mut out = vec![0.0; set.occupancy.len()];
    for (c, t) in set.column_sums().into_iter().enumerate() {
        let mut left = t;
        for k in 0..layers {
            if left <= 0.0 {
                break;
            }
            let v = left.min(1.0);
            out[k * l + c] = v;
            left -= v;
        }
    }
    GridSet::new(set.h, set.lo.clone(), set.shape.clone(), out)
}

/// Face-neighbor connectivity of the cells with occupancy > 1/2.
pub fn is_connected(set: &GridSet) -> Result<bool> {
    let marked: Vec<bool> = set.occupancy.iter().map(|v| *v > 0.5).collect();
    let Some(start) = marked.iter().position(|m| *m) else {
        return Err(Error::InvalidParameter("empty set".into()));
    };
    let n = set.dim();
    let mut strides = vec![1usize; n];
    for d in 1..n {
        strides[d] = strides[d - 1] * set.shape[d - 1];
    }
    let mut seen = vec![false; marked.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 1;
    while let Some(c) = stack.pop() {
        for d in 0..n {
            let i = (c / strides[d]) % set.shape[d];
            let mut nb = Vec::with_capacity(2);
            if i > 0 {
                nb.push(c - strides[d]);
            }
            if i + 1 < set.shape[d] {
                nb.push(c + strides[d]);
            }
            for q in nb {
                if marked[q] && !seen[q] {
                    seen[q] = true;
                    count += 1;
                    stack.push(q);
                }
            }
        }
    }
    Ok(count == marked.iter().filter(|m| **m).count())
}

/// Union of axis-aligned ellipsoids, cut to the closed upper half-space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Blob {
    pub centers: Vec<Vec<f64>>,
    pub semi_axes: Vec<Vec<f64>>,
}

impl Region for Blob {
    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn contains(&self, x: &[f64]) -> bool {
        let n = x.len();
        x[n - 1] >= 0.0
            && self.centers.iter().zip(&self.semi_axes).any(|(c, a)| {
                (0..n).map(|d| ((x[d] - c[d]) / a[d]).powi(2)).sum::<f64>() < 1.0
            })
    }

    fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for (c, a) in self.centers.iter().zip(&self.semi_axes) {
            for d in 0..n {
                lo[d] = lo[d].min(c[d] - a[d]);
                hi[d] = hi[d].max(c[d] + a[d]);
            }
        }
        lo[n - 1] = lo[n - 1].max(0.0);
        Some((lo, hi))
    }

    fn line_intervals(&self, origin: &[f64], dir: &[f64]) -> Vec<(f64, f64)> {
        let n = origin.len();
        let mut all = Vec::new();
        for (c, a) in self.centers.iter().zip(&self.semi_axes) {
            // |(o + t d − c)/a|² = 1
            let (mut qa, mut qb, mut qc) = (0.0, 0.0, -1.0);
            for k in 0..n {
                let p = (origin[k] - c[k]) / a[k];
                let q = dir[k] / a[k];
                qa += q * q;
                qb += 2.0 * p * q;
                qc += p * p;
            }
            let disc = qb * qb - 4.0 * qa * qc;
            if qa > 0.0 && disc > 0.0 {
                let r = disc.sqrt();
                all.push(((-qb - r) / (2.0 * qa), (-qb + r) / (2.0 * qa)));
            }
        }
        let merged = merge_intervals(all);
        // clip to x_N ≥ 0
        let (o, d) = (origin[n - 1], dir[n - 1]);
        merged
            .into_iter()
            .filter_map(|(a, b)| {
                let (mut a, mut b) = (a, b);
                if d == 0.0 {
                    return if o >= 0.0 { Some((a, b)) } else { None };
                }
                let t0 = -o / d;
                if d > 0.0 {
                    a = a.max(t0);
                } else {
                    b = b.min(t0);
                }
                (b > a).then_some((a, b))
            })
            .collect()
    }
}

/// Seeded corpus of blobs: 1–3 ellipsoids each, some resting on the floor,
/// some floating.
pub fn blob_corpus(dim: usize, count: usize, seed: u64) -> Vec<Blob> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.random_range(1..=3);
            let mut centers = Vec::new();
            let mut semi_axes = Vec::new();
            for _ in 0..k {
                let mut c: Vec<f64> = (0..dim - 1).map(|_| rng.random_range(-0.6..0.6)).collect();
                let a: Vec<f64> = (0..dim).map(|_| rng.random_range(0.25..0.6)).collect();
                let floating = rng.random_bool(0.3);
                let height = if floating {
                    a[dim - 1] + rng.random_range(0.05..0.4)
                } else {
                    rng.random_range(0.0..a[dim - 1] * 0.8)
                };
                c.push(height);
                centers.push(c);
                semi_axes.push(a);
            }
            Blob { centers, semi_axes }
        })
        .collect()
}

/// Symmetric window [−w, w]^{N−1} × [0, top] with cell size h, large enough
/// to hold the blob corpus.
pub fn corpus_window(dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![-1.28; dim];
    let mut hi = vec![1.28; dim];
    lo[dim - 1] = 0.0;
    hi[dim - 1] = 1.6;
    (lo, hi)
}

// ---------------------------------------------------------------------
// Boundary double integrals
// ---------------------------------------------------------------------

/// Straight piece of a boundary curve with constant outward normal.
#[derive(Debug, Clone, Copy)]
struct Edge {
    a: [f64; 2],
    b: [f64; 2],
    normal: [f64; 2],
    len: f64,
}

impl Edge {
    fn new(a: [f64; 2], b: [f64; 2]) -> Option<Edge> {
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = d[0].hypot(d[1]);
        if len == 0.0 {
            return None;
        }
        // counterclockwise orientation: outward normal is d rotated by −90°
        Some(Edge {
            a,
            b,
            normal: [d[1] / len, -d[0] / len],
            len,
        })
    }

    fn at(&self, t: f64) -> [f64; 2] {
        [self.a[0] + t * (self.b[0] - self.a[0]), self.a[1] + t * (self.b[1] - self.a[1])]
    }
}

/// Pair integrand split as sing(P, Q)·|P − Q|^{−2s} + reg(P, Q).
trait PairKernel: Sync {
    fn sing(&self, p: [f64; 2], n: [f64; 2], q: [f64; 2], m: [f64; 2]) -> f64;
    fn reg(&self, p: [f64; 2], n: [f64; 2], q: [f64; 2], m: [f64; 2]) -> f64;
    fn s(&self) -> f64;
}

/// Plane curves: ν_x·ν_y |x − y|^{−2s}.
struct PlaneKernel {
    s: f64,
}

impl PairKernel for PlaneKernel {
    fn sing(&self, _p: [f64; 2], n: [f64; 2], _q: [f64; 2], m: [f64; 2]) -> f64 {
        n[0] * m[0] + n[1] * m[1]
    }
    fn reg(&self, _: [f64; 2], _: [f64; 2], _: [f64; 2], _: [f64; 2]) -> f64 {
        0.0
    }
    fn s(&self) -> f64 {
        self.s
    }
}

/// Solids of revolution about the x_N axis, generator points (r, z):
/// r ρ ∫₀^{2π} ν_x·ν_y |x − y|^{−1−2s} dψ.
struct AxisymmetricKernel {
    s: f64,
    table: Arc<AzimuthalTable>,
}

impl PairKernel for AxisymmetricKernel {
    fn sing(&self, p: [f64; 2], n: [f64; 2], q: [f64; 2], m: [f64; 2]) -> f64 {
        self.table.lead * (0.5 * p[0] * q[0]).sqrt() * (n[0] * m[0] + n[1] * m[1])
    }

    fn reg(&self, p: [f64; 2], n: [f64; 2], q: [f64; 2], m: [f64; 2]) -> f64 {
        let (r, rho) = (p[0], q[0]);
        let dz = p[1] - q[1];
        let a = r * r + rho * rho + dz * dz;
        let b = 2.0 * r * rho;
        let nu = 0.5 + self.s;
        if b <= 1e-12 * a {
            // on the axis the azimuthal integral is elementary
            let full = 2.0 * PI * a.powf(-nu) * n[1] * m[1];
            let dist2 = (r - rho).powi(2) + dz * dz;
            let sing = self.sing(p, n, q, m) * if dist2 > 0.0 { dist2.powf(-self.s) } else { 0.0 };
            return r * rho * full - sing;
        }
        let e = ((r - rho).powi(2) + dz * dz) / b;
        let (r0, r1) = self.table.regular(e);
        r * rho * b.powf(-nu) * (n[0] * m[0] * r1 + n[1] * m[1] * r0)
    }

    fn s(&self) -> f64 {
        self.s
    }
}

/// R_k(q) = J_k(q) − a (q − 1)^{−s}, J_k(q) = ∫₀^{2π} cos^k ψ (q − cos ψ)^{−1/2−s} dψ,
/// tabulated against log(q − 1).
#[derive(Serialize, Deserialize)]
struct AzimuthalTable {
    s: f64,
    lead: f64,
    t0: f64,
    dt: f64,
    r0: Vec<f64>,
    r1: Vec<f64>,
}

impl AzimuthalTable {
    const T_MIN: f64 = -34.0;
    const T_MAX: f64 = 16.0;
    const STEP: f64 = 0.02;

    fn get(s: f64) -> Arc<AzimuthalTable> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<AzimuthalTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().expect("table cache").get(&s.to_bits()) {
            return t.clone();
        }
        let t = Arc::new(AzimuthalTable::load_or_build(s));
        cache.lock().expect("table cache").insert(s.to_bits(), t.clone());
        t
    }

    /// Persisted in the directory named by FRACPERIM_CACHE when set.
    fn load_or_build(s: f64) -> AzimuthalTable {
        let Some(dir) = std::env::var_os("FRACPERIM_CACHE") else {
            return AzimuthalTable::build(s);
        };
        let path = std::path::PathBuf::from(dir).join(format!("azimuthal-s{:016x}.json", s.to_bits()));
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(t) = serde_json::from_str::<AzimuthalTable>(&text) {
                if t.s == s && t.r0.len() == t.r1.len() && t.r0.len() > 4 {
                    return t;
                }
            }
        }
        let t = AzimuthalTable::build(s);
        if let Some(parent) = path.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        if let Ok(text) = serde_json::to_string(&t) {
            let _ = std::fs::write(&path, text);
        }
        t
    }

    fn build(s: f64) -> AzimuthalTable {
        use rayon::prelude::*;
        let lead = (2.0 * PI).sqrt() * gamma_signed(s) / gamma_signed(s + 0.5);
        let count = ((Self::T_MAX - Self::T_MIN) / Self::STEP).round() as usize + 1;
        let vals: Vec<(f64, f64)> = (0..count)
            .into_par_iter()
            .map(|i| {
                let e = (Self::T_MIN + i as f64 * Self::STEP).exp();
                (regular_part(s, e, 0), regular_part(s, e, 1))
            })
            .collect();
        AzimuthalTable {
            s,
            lead,
            t0: Self::T_MIN,
            dt: Self::STEP,
            r0: vals.iter().map(|v| v.0).collect(),
            r1: vals.iter().map(|v| v.1).collect(),
        }
    }

    /// (R_0, R_1) at q − 1 = e.
    fn regular(&self, e: f64) -> (f64, f64) {
        let t = e.ln();
        let last = self.r0.len() - 1;
        if t <= self.t0 {
            return (self.r0[0], self.r1[0]);
        }
        if t >= self.t0 + self.dt * last as f64 {
            // far field: expand (q − cos ψ)^{−ν} in 1/q
            let q = 1.0 + e;
            let nu = 0.5 + self.s;
            let j0 = 2.0 * PI * q.powf(-nu) * (1.0 + nu * (nu + 1.0) / (4.0 * q * q));
            let j1 = PI * nu * q.powf(-nu - 1.0) * (1.0 + (nu + 1.0) * (nu + 2.0) / (8.0 * q * q));
            let sing = self.lead * e.powf(-self.s);
            return (j0 - sing, j1 - sing);
        }
        let x = (t - self.t0) / self.dt;
        let i = (x.floor() as usize).clamp(1, last - 2);
        let f = x - i as f64;
        let w = [
            -f * (f - 1.0) * (f - 2.0) / 6.0,
            (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
            -(f + 1.0) * f * (f - 2.0) / 2.0,
            (f + 1.0) * f * (f - 1.0) / 6.0,
        ];
        let pick = |v: &[f64]| (0..4).map(|k| w[k] * v[i - 1 + k]).sum::<f64>();
        (pick(&self.r0), pick(&self.r1))
    }
}

fn regular_part(s: f64, e: f64, k: i32) -> f64 {
    let nu = 0.5 + s;
    // subtract the model (e + ψ²/2)^{−ν}, whose integral over ℝ is lead·e^{−s}
    let f = |psi: f64| {
        let w = if k == 0 { 1.0 } else { psi.cos() };
        let gap = e + 2.0 * (0.5 * psi).sin().powi(2);
        w * gap.powf(-nu) - (e + 0.5 * psi * psi).powf(-nu)
    };
    let w = (2.0 * e).sqrt();
    let mut breaks = vec![0.0];
    let mut x = w.min(PI);
    while x < PI {
        breaks.push(x);
        x *= 4.0;
    }
    breaks.push(PI);
    let inner = adaptive(f, &breaks, 1e-14, 1e-13, 4000).value;
    // ∫_π^∞ (e + ψ²/2)^{−ν} dψ with ψ = π/u
    let tail = adaptive(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let psi = PI / u;
            (e + 0.5 * psi * psi).powf(-nu) * PI / (u * u)
        },
        &[0.0, 0.5, 1.0],
        1e-15,
        1e-13,
        2000,
    )
    .value;
    2.0 * (inner - tail)
}

struct PairRules {
    /// Gauss–Jacobi on [0, 1] with weight ξ^{1−2s}.
    duffy_outer: Rule,
    /// Gauss–Jacobi on [0, 1] with weight η^{−2s}.
    duffy_inner: Rule,
    eta: Rule,
    near: Rule,
    mid: Rule,
    far: Rule,
}

impl PairRules {
    fn new(s: f64) -> PairRules {
        let to01 = |r: Rule, alpha_pow: f64| -> Rule {
            // Jacobi weight (1+x)^β on [−1, 1] mapped to t^β on [0, 1]
            let scale = 2f64.powf(-1.0 - alpha_pow);
            Rule {
                nodes: r.nodes.iter().map(|x| 0.5 * (1.0 + x)).collect(),
                weights: r.weights.iter().map(|w| w * scale).collect(),
            }
        };
        PairRules {
            duffy_outer: to01(gauss_jacobi(12, 0.0, 1.0 - 2.0 * s), 1.0 - 2.0 * s),
            duffy_inner: to01(gauss_jacobi(12, 0.0, -2.0 * s), -2.0 * s),
            eta: gauss_legendre(20).mapped(0.0, 1.0),
            near: gauss_legendre(24).mapped(0.0, 1.0),
            mid: gauss_legendre(12).mapped(0.0, 1.0),
            far: gauss_legendre(6).mapped(0.0, 1.0),
        }
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// ∫_e ∫_e: t = ξ, u = ξ(1 − η) on the half u < t, doubled.
fn same_edge<K: PairKernel>(k: &K, e: &Edge, rules: &PairRules) -> f64 {
    let s = k.s();
    let l = e.len;
    let mut sing = 0.0;
    for (xi, wx) in rules.duffy_outer.nodes.iter().zip(&rules.duffy_outer.weights) {
        for (eta, we) in rules.duffy_inner.nodes.iter().zip(&rules.duffy_inner.weights) {
            let p = e.at(*xi);
            let q = e.at(xi * (1.0 - eta));
            let v = k.sing(p, e.normal, q, e.normal) + k.sing(q, e.normal, p, e.normal);
            sing += wx * we * v;
        }
    }
    // |P − Q| = l ξ η, Jacobian l² ξ
    sing *= l.powf(2.0 - 2.0 * s);
    let mut reg = 0.0;
    for (x, wx) in rules.near.nodes.iter().zip(&rules.near.weights) {
        for (y, wy) in rules.near.nodes.iter().zip(&rules.near.weights) {
            reg += wx * wy * k.reg(e.at(*x), e.normal, e.at(*y), e.normal);
        }
    }
    sing + reg * l * l
}

/// Rule on [0, 1] for integrands with a near singularity of width `width`
/// at `center`: panels grow geometrically away from the center.
fn graded_rule(base: &Rule, center: f64, width: f64) -> Rule {
    if !(width < 1.0) || center <= -width || center >= 1.0 + width {
        return base.clone();
    }
    let w = width.max(1e-14);
    let mut breaks = vec![0.0, 1.0];
    if center > 0.0 && center < 1.0 {
        breaks.push(center);
    }
    let mut k = w;
    while k < 1.0 {
        for x in [center - k, center + k] {
            if x > 0.0 && x < 1.0 {
                breaks.push(x);
            }
        }
        k *= 3.0;
    }
    breaks.sort_by(|x, y| x.total_cmp(y));
    breaks.dedup();
    let g = gauss_legendre(10);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for p in breaks.windows(2) {
        if p[1] - p[0] <= 0.0 {
            continue;
        }
        let m = g.mapped(p[0], p[1]);
        nodes.extend(m.nodes);
        weights.extend(m.weights);
    }
    Rule { nodes, weights }
}

/// Edges meeting at a common vertex v = e.a = f.a (after reorientation).
fn adjacent<K: PairKernel>(k: &K, e: &Edge, e_from_v: bool, f: &Edge, f_from_v: bool, rules: &PairRules) -> f64 {
    let s = k.s();
    let pt_e = |t: f64| if e_from_v { e.at(t) } else { e.at(1.0 - t) };
    let pt_f = |t: f64| if f_from_v { f.at(t) } else { f.at(1.0 - t) };
    let (a, b) = (e.len, f.len);
    // unit directions away from the shared vertex
    let dir = |edge: &Edge, from_v: bool| {
        let sgn = if from_v { 1.0 } else { -1.0 };
        [sgn * (edge.b[0] - edge.a[0]) / edge.len, sgn * (edge.b[1] - edge.a[1]) / edge.len]
    };
    let (de, df) = (dir(e, e_from_v), dir(f, f_from_v));
    let cos_g = de[0] * df[0] + de[1] * df[1];
    let sin_g = (1.0 - cos_g * cos_g).max(0.0).sqrt();
    // triangle 1: (u, v) = (ξ, ξ η), |P − Q|/ξ = |a ê − b η f̂|;
    // triangle 2: (u, v) = (ξ η, ξ), |P − Q|/ξ = |a η ê − b f̂|
    let tri = [
        (graded_rule(&rules.eta, a / b * cos_g, a / b * sin_g), true),
        (graded_rule(&rules.eta, b / a * cos_g, b / a * sin_g), false),
    ];
    let mut sing = 0.0;
    for (rule, first) in &tri {
        for (eta, we) in rule.nodes.iter().zip(&rule.weights) {
            let (ca, cb) = if *first { (a, b * eta) } else { (a * eta, b) };
            let g = [ca * de[0] - cb * df[0], ca * de[1] - cb * df[1]];
            let d = g[0].hypot(g[1]).powf(-2.0 * s);
            for (xi, wx) in rules.duffy_outer.nodes.iter().zip(&rules.duffy_outer.weights) {
                let (u, v) = if *first { (*xi, xi * eta) } else { (xi * eta, *xi) };
                sing += wx * we * k.sing(pt_e(u), e.normal, pt_f(v), f.normal) * d;
            }
        }
    }
    sing *= a * b;
    let mut reg = 0.0;
    for (x, wx) in rules.near.nodes.iter().zip(&rules.near.weights) {
        for (y, wy) in rules.near.nodes.iter().zip(&rules.near.weights) {
            reg += wx * wy * k.reg(pt_e(*x), e.normal, pt_f(*y), f.normal);
        }
    }
    sing + reg * a * b
}

fn separated<K: PairKernel>(k: &K, e: &Edge, f: &Edge, rule: &Rule) -> f64 {
    let s = k.s();
    let mut acc = 0.0;
    for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
        let p = e.at(*x);
        for (y, wy) in rule.nodes.iter().zip(&rule.weights) {
            let q = f.at(*y);
            let d = dist(p, q);
            acc += wx * wy * (k.sing(p, e.normal, q, f.normal) * d.powf(-2.0 * s) + k.reg(p, e.normal, q, f.normal));
        }
    }
    acc * e.len * f.len
}

fn point_segment(p: [f64; 2], e: &Edge) -> f64 {
    let d = [e.b[0] - e.a[0], e.b[1] - e.a[1]];
    let t = (((p[0] - e.a[0]) * d[0] + (p[1] - e.a[1]) * d[1]) / (e.len * e.len)).clamp(0.0, 1.0);
    dist(p, e.at(t))
}

/// Distance between two non-crossing segments.
fn segment_gap(e: &Edge, f: &Edge) -> f64 {
    point_segment(e.a, f)
        .min(point_segment(e.b, f))
        .min(point_segment(f.a, e))
        .min(point_segment(f.b, e))
}

fn split(e: &Edge) -> (Edge, Edge) {
    let m = e.at(0.5);
    let half = |a, b| Edge {
        a,
        b,
        normal: e.normal,
        len: 0.5 * e.len,
    };
    (half(e.a, m), half(m, e.b))
}

/// Tensor Gauss rule sized by the gap/length ratio; the longer edge is
/// halved until the pair is well separated.
fn separated_pair<K: PairKernel>(k: &K, e: &Edge, f: &Edge, rules: &PairRules, depth: u32) -> f64 {
    let gap = segment_gap(e, f);
    let l = e.len.max(f.len);
    if gap > 3.0 * l {
        separated(k, e, f, &rules.far)
    } else if gap > l {
        separated(k, e, f, &rules.mid)
    } else if gap > 0.4 * l || depth >= 14 {
        separated(k, e, f, &rules.near)
    } else if e.len >= f.len {
        let (a, b) = split(e);
        separated_pair(k, &a, f, rules, depth + 1) + separated_pair(k, &b, f, rules, depth + 1)
    } else {
        let (a, b) = split(f);
        separated_pair(k, e, &a, rules, depth + 1) + separated_pair(k, e, &b, rules, depth + 1)
    }
}

/// Σ over ordered edge pairs of ∫∫ kernel, for a chain of edges (closed if
/// `cyclic`). Consecutive edges share a vertex and get Duffy rules.
fn chain_energy<K: PairKernel>(k: &K, edges: &[Edge], cyclic: bool) -> f64 {
    use rayon::prelude::*;
    let rules = PairRules::new(k.s());
    let n = edges.len();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in i..n {
                let raw = j - i;
                let wraps = cyclic && n > 2 && raw == n - 1;
                let v = if raw == 0 {
                    same_edge(k, &edges[i], &rules)
                } else if raw == 1 {
                    // edges[i].b == edges[j].a
                    adjacent(k, &edges[i], false, &edges[j], true, &rules)
                } else if wraps {
                    // edges[i].a == edges[j].b
                    adjacent(k, &edges[i], true, &edges[j], false, &rules)
                } else {
                    separated_pair(k, &edges[i], &edges[j], &rules, 0)
                };
                acc += if j == i { v } else { 2.0 * v };
            }
            acc
        })
        .collect();
    rows.iter().sum()
}

/// V_H(x) = C_H x_N^{−2s} in ℝ^N_+.
pub fn halfspace_constant(params: FracParams) -> f64 {
    let s = params.s;
    match params.dim {
        2 => gamma_signed(0.5) * gamma_signed(s + 0.5) / gamma_signed(s + 1.0) / (2.0 * s),
        _ => PI / (s * (2.0 * s + 1.0)),
    }
}

/// P_s in ℝ³ of the solid of revolution about the x_3 axis whose generator
/// is the polyline `points` (r, z), running from the axis back to the axis
/// with the solid on its left.
pub fn revolution_perimeter(points: &[[f64; 2]], s: f64) -> Result<f64> {
    if points.len() < 3 || points[0][0] != 0.0 || points[points.len() - 1][0] != 0.0 {
        return Err(Error::InvalidParameter("generator must start and end on the axis".into()));
    }
    if points.iter().any(|p| p[0] < 0.0) {
        return Err(Error::InvalidParameter("generator must stay in r ≥ 0".into()));
    }
    let edges: Vec<Edge> = points.windows(2).filter_map(|w| Edge::new(w[0], w[1])).collect();
    let k = AxisymmetricKernel {
        s,
        table: AzimuthalTable::get(s),
    };
    Ok(2.0 * PI * chain_energy(&k, &edges, false) / (2.0 * s * (1.0 + 2.0 * s)))
}

/// Simple closed polygon in the plane, counterclockwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Polygon> {
        if vertices.len() < 3 {
            return Err(Error::InvalidParameter("a polygon needs three vertices".into()));
        }
        let p = Polygon { vertices };
        if p.signed_area() <= 0.0 {
            return Err(Error::InvalidParameter("polygon must be counterclockwise with positive area".into()));
        }
        Ok(p)
    }

    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        0.5 * (0..n)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
    }

    fn edges(&self) -> Vec<Edge> {
        let n = self.vertices.len();
        (0..n)
            .filter_map(|i| Edge::new(self.vertices[i], self.vertices[(i + 1) % n]))
            .collect()
    }

    /// P_s of the polygon in the whole plane.
    pub fn perimeter(&self, s: f64) -> f64 {
        chain_energy(&PlaneKernel { s }, &self.edges(), true) / (4.0 * s * s)
    }

    /// ∫_E x_2^{−2s} dx for a polygon in the closed upper half-plane,
    /// by Green's theorem with the field (x y^{−2s}, 0).
    pub fn floor_moment(&self, s: f64) -> f64 {
        let p = 1.0 - 2.0 * s;
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            let dy = b[1] - a[1];
            if dy == 0.0 {
                continue;
            }
            // x(y) = a_x + k (y − a_y)
            let k = (b[0] - a[0]) / dy;
            let c = a[0] - k * a[1];
            let prim = |y: f64| c * y.max(0.0).powf(p) / p + k * y.max(0.0).powf(p + 1.0) / (p + 1.0);
            acc += prim(b[1]) - prim(a[1]);
        }
        acc
    }

    /// P_s(E, ℝ²_+) for a polygon in the closed upper half-plane.
    pub fn perimeter_halfplane(&self, params: FracParams) -> f64 {
        self.perimeter(params.s) - halfspace_constant(params) * self.floor_moment(params.s)
    }
}

impl Region for Polygon {
    fn dim(&self) -> usize {
        2
    }

    fn contains(&self, x: &[f64]) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            if (a[1] > x[1]) != (b[1] > x[1]) {
                let t = (x[1] - a[1]) / (b[1] - a[1]);
                if x[0] < a[0] + t * (b[0] - a[0]) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut lo = vec![f64::INFINITY; 2];
        let mut hi = vec![f64::NEG_INFINITY; 2];
        for p in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        Some((lo, hi))
    }

    fn line_intervals(&self, origin: &[f64], dir: &[f64]) -> Vec<(f64, f64)> {
        let v = &self.vertices;
        let n = v.len();
        // signed distance to the line, with the usual half-open crossing rule
        let side = |p: [f64; 2]| (p[0] - origin[0]) * dir[1] - (p[1] - origin[1]) * dir[0];
        let mut ts = Vec::new();
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            let (sa, sb) = (side(a), side(b));
            if (sa > 0.0) != (sb > 0.0) {
                let w = sa / (sa - sb);
                let p = [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])];
                let dd = dir[0] * dir[0] + dir[1] * dir[1];
                ts.push(((p[0] - origin[0]) * dir[0] + (p[1] - origin[1]) * dir[1]) / dd);
            }
        }
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.chunks(2)
            .filter(|c| c.len() == 2 && c[1] > c[0])
            .map(|c| (c[0], c[1]))
            .collect()
    }

    fn exact_volume(&self) -> Option<f64> {
        Some(self.signed_area())
    }
}

// ---------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------

/// Symmetric decreasing graph {0 ≤ x_N < h(|x′|)} with h piecewise linear
/// between the nodes (radii[i], heights[i]); heights end at 0 on the
/// contact radius radii[M].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphProfile {
    pub dim: usize,
    pub radii: Vec<f64>,
    pub heights: Vec<f64>,
    pub volume: f64,
}

impl GraphProfile {
    pub fn new(dim: usize, radii: Vec<f64>, heights: Vec<f64>) -> Result<GraphProfile> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidParameter("profiles exist for N = 2 and N = 3".into()));
        }
        if radii.len() != heights.len() || radii.len() < 3 {
            return Err(Error::InvalidParameter("profile needs at least three matching nodes".into()));
        }
        if radii[0] != 0.0 || radii.windows(2).any(|w| w[1] < w[0]) || !(radii[radii.len() - 1] > 0.0) {
            return Err(Error::InvalidParameter("radii must start at 0 and increase".into()));
        }
        if heights.iter().any(|h| *h < 0.0 || !h.is_finite()) || heights.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("heights must be nonnegative and nonincreasing".into()));
        }
        if *heights.last().expect("nonempty") != 0.0 {
            return Err(Error::InvalidParameter("the last height must be 0".into()));
        }
        let volume = profile_volume(dim, &radii, &heights);
        Ok(GraphProfile {
            dim,
            radii,
            heights,
            volume,
        })
    }

    pub fn contact_radius(&self) -> f64 {
        *self.radii.last().expect("nonempty")
    }

    /// Multiply heights so that the volume is m.
    pub fn rescale_to(&mut self, m: f64) {
        let f = m / self.volume;
        for h in self.heights.iter_mut() {
            *h *= f;
        }
        self.volume = profile_volume(self.dim, &self.radii, &self.heights);
    }

    /// Dilate about the origin so that the volume is m.
    pub fn dilate_to(&mut self, m: f64) {
        let f = (m / self.volume).powf(1.0 / self.dim as f64);
        for v in self.radii.iter_mut().chain(self.heights.iter_mut()) {
            *v *= f;
        }
        self.volume = profile_volume(self.dim, &self.radii, &self.heights);
    }

    /// Cross-section through the axis as a counterclockwise polygon, with
    /// floor vertices at ±radii.
    pub fn polygon(&self) -> Polygon {
        let m = self.radii.len() - 1;
        let floor = self.floor_nodes();
        let mut v = Vec::with_capacity(4 * m);
        for i in (1..=m).rev() {
            v.push([-floor[i], 0.0]);
        }
        for f in floor.iter().take(m) {
            v.push([*f, 0.0]);
        }
        for i in (1..=m).rev() {
            v.push([self.radii[i], self.heights[i]]);
        }
        for i in 0..m {
            v.push([-self.radii[i], self.heights[i]]);
        }
        // drop the repeated contact corners and the axis duplicate on top
        let mut out: Vec<[f64; 2]> = Vec::with_capacity(v.len());
        for p in v {
            if out.last().is_none_or(|q: &[f64; 2]| q[0] != p[0] || q[1] != p[1]) {
                out.push(p);
            }
        }
        if out.len() > 1 && out[0] == out[out.len() - 1] {
            out.pop();
        }
        Polygon { vertices: out }
    }

    /// Floor nodes R(1 − (1 − i/M)²), graded toward the contact like the
    /// boundary vertices but always monotone.
    fn floor_nodes(&self) -> Vec<f64> {
        let m = self.radii.len() - 1;
        let r = self.contact_radius();
        (0..=m)
            .map(|i| {
                let u = 1.0 - i as f64 / m as f64;
                if i == m {
                    r
                } else {
                    r * (1.0 - u * u)
                }
            })
            .collect()
    }

    /// Generator curve (r, z) of the solid: floor from the axis to R, then
    /// the boundary back to the axis.
    fn generator(&self) -> Vec<Edge> {
        let m = self.radii.len() - 1;
        let mut pts: Vec<[f64; 2]> = self.floor_nodes().into_iter().map(|r| [r, 0.0]).collect();
        for i in (0..m).rev() {
            pts.push([self.radii[i], self.heights[i]]);
        }
        pts.windows(2).filter_map(|w| Edge::new(w[0], w[1])).collect()
    }

    /// P_s(E, ℝ^N_+) of the graph set.
    pub fn perimeter(&self, params: FracParams) -> Result<f64> {
        if params.dim != self.dim {
            return Err(Error::InvalidParameter("profile and parameters disagree on N".into()));
        }
        let s = params.s;
        Ok(match self.dim {
            2 => self.polygon().perimeter_halfplane(params),
            _ => {
                let k = AxisymmetricKernel {
                    s,
                    table: AzimuthalTable::get(s),
                };
                let full = 2.0 * PI * chain_energy(&k, &self.generator(), false) / (2.0 * s * (1.0 + 2.0 * s));
                full - halfspace_constant(params) * self.floor_moment(s)
            }
        })
    }

    /// ∫_E x_N^{−2s}.
    fn floor_moment(&self, s: f64) -> f64 {
        let p = 1.0 - 2.0 * s;
        let mut acc = 0.0;
        for i in 0..self.radii.len() - 1 {
            let (r0, r1) = (self.radii[i], self.radii[i + 1]);
            let (h0, h1) = (self.heights[i], self.heights[i + 1]);
            acc += match self.dim {
                2 => 2.0 * segment_power(r0, r1, h0, h1, p) / p,
                _ => 2.0 * PI * segment_power_r(r0, r1, h0, h1, p) / p,
            };
        }
        acc
    }

    /// Largest distance between two points of the set.
    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        let pts: Vec<(f64, f64)> = self
            .radii
            .iter()
            .zip(&self.heights)
            .map(|(r, h)| (*r, *h))
            .chain(self.radii.iter().map(|r| (*r, 0.0)))
            .collect();
        for &(r, z) in &pts {
            for &(rho, zeta) in &pts {
                best = best.max((r + rho).hypot(z - zeta));
            }
        }
        best
    }

    /// Height at radius r.
    pub fn height_at(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.contact_radius() {
            return 0.0;
        }
        let i = self.radii.partition_point(|x| *x <= r).saturating_sub(1);
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let t = (r - r0) / (r1 - r0);
        self.heights[i] + t * (self.heights[i + 1] - self.heights[i])
    }

    /// Occupancy grid of the set over the window [−w, w]^{N−1} × [0, top].
    pub fn to_gridset(&self, w: f64, top: f64, h: f64) -> Result<GridSet> {
        let n = self.dim;
        let mut lo = vec![-w; n];
        let mut hi = vec![w; n];
        lo[n - 1] = 0.0;
        hi[n - 1] = top;
        GridSet::from_region(&ProfileSolid { profile: self.clone() }, &lo, &hi, h, 4)
    }
}

/// ∫_{r0}^{r1} h(r)^p dr for linear h.
fn segment_power(r0: f64, r1: f64, h0: f64, h1: f64, p: f64) -> f64 {
    let dr = r1 - r0;
    if (h1 - h0).abs() <= 1e-3 * h0.max(h1) {
        let g = gauss_legendre(8).mapped(0.0, 1.0);
        return dr * g.integrate(|t| (h0 + (h1 - h0) * t).powf(p));
    }
    dr * (h1.powf(p + 1.0) - h0.powf(p + 1.0)) / ((p + 1.0) * (h1 - h0))
}

/// ∫_{r0}^{r1} r h(r)^p dr for linear h.
fn segment_power_r(r0: f64, r1: f64, h0: f64, h1: f64, p: f64) -> f64 {
    let dr = r1 - r0;
    if (h1 - h0).abs() <= 1e-3 * h0.max(h1) {
        let g = gauss_legendre(8).mapped(r0, r1);
        return g.integrate(|r| r * (h0 + (h1 - h0) * (r - r0) / dr).powf(p));
    }
    // y = h(r), r = r0 + (y − h0)/β
    let beta = (h1 - h0) / dr;
    let c = r0 - h0 / beta;
    let prim = |y: f64| (c * y.powf(p + 1.0) / (p + 1.0) + y.powf(p + 2.0) / ((p + 2.0) * beta)) / beta;
    prim(h1) - prim(h0)
}

fn profile_volume(dim: usize, radii: &[f64], heights: &[f64]) -> f64 {
    let mut v = 0.0;
    for i in 0..radii.len() - 1 {
        let (r0, r1) = (radii[i], radii[i + 1]);
        let (h0, h1) = (heights[i], heights[i + 1]);
        v += match dim {
            2 => (r1 - r0) * (h0 + h1),
            // 2π ∫ r h dr for linear h
            _ => 2.0 * PI * (r1 - r0) * (h0 * (2.0 * r0 + r1) + h1 * (r0 + 2.0 * r1)) / 6.0,
        };
    }
    v
}

fn half_ball_radius(dim: usize, m: f64) -> f64 {
    match dim {
        2 => (2.0 * m / PI).sqrt(),
        _ => (3.0 * m / (2.0 * PI)).cbrt(),
    }
}

/// The solid {0 ≤ x_N < h(|x′|)} as a region.
struct ProfileSolid {
    profile: GraphProfile,
}

impl Region for ProfileSolid {
    fn dim(&self) -> usize {
        self.profile.dim
    }

    fn contains(&self, x: &[f64]) -> bool {
        let n = x.len();
        let r = x[..n - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        x[n - 1] >= 0.0 && x[n - 1] < self.profile.height_at(r)
    }

    fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.profile.dim;
        let r = self.profile.contact_radius();
        let mut lo = vec![-r; n];
        let mut hi = vec![r; n];
        lo[n - 1] = 0.0;
        hi[n - 1] = self.profile.heights[0];
        Some((lo, hi))
    }

    fn line_intervals(&self, origin: &[f64], dir: &[f64]) -> Vec<(f64, f64)> {
        let n = origin.len();
        let axis_aligned = dir[0] != 0.0 && dir[1..].iter().all(|d| *d == 0.0);
        if !axis_aligned {
            let Some((lo, hi)) = self.bounding_box() else { return Vec::new() };
            if clip_to_box(origin, dir, &lo, &hi).is_none() {
                return Vec::new();
            }
            return crate::domains::sampled_line_intervals(self, origin, dir, 2048);
        }
        // line along x_1 at fixed transverse coordinates
        let z = origin[n - 1];
        if z < 0.0 {
            return Vec::new();
        }
        let p = &self.profile;
        // radius of the horizontal section at height z
        let rz = if z >= p.heights[0] {
            return Vec::new();
        } else {
            let k = p.heights.iter().rposition(|h| *h > z).expect("z below the top");
            let (r0, r1, h0, h1) = (p.radii[k], p.radii[k + 1], p.heights[k], p.heights[k + 1]);
            r0 + (r1 - r0) * (h0 - z) / (h0 - h1)
        };
        let y2: f64 = origin[1..n - 1].iter().map(|v| v * v).sum();
        if y2 >= rz * rz {
            return Vec::new();
        }
        let half = (rz * rz - y2).sqrt();
        let (a, b) = ((-half - origin[0]) / dir[0], (half - origin[0]) / dir[0]);
        vec![(a.min(b), a.max(b))]
    }
}

/// Angle in degrees between the boundary and the floor at the contact
/// point, inside the set: 90° for orthogonal contact, 45° for a cone.
///
/// Uses the secant slopes of the inverse function r(h) from the contact
/// point to the last two nodes, extrapolated linearly to h = 0.
pub fn contact_angle(profile: &GraphProfile) -> Result<f64> {
    let m = profile.radii.len() - 1;
    let (h1, h2) = (profile.heights[m - 1], profile.heights[m - 2]);
    if !(h1 > 0.0 && h2 > h1) {
        return Err(Error::DegenerateSurface("no resolved contact: the last heights vanish".into()));
    }
    let r = profile.contact_radius();
    let s1 = (profile.radii[m - 1] - r) / h1;
    let s2 = (profile.radii[m - 2] - r) / h2;
    let slope = (s1 * h2 - s2 * h1) / (h2 - h1);
    Ok(1.0f64.atan2(-slope).to_degrees())
}

// ---------------------------------------------------------------------
// Minimization
// ---------------------------------------------------------------------

/// Isotonic regression onto nonincreasing sequences (pool adjacent violators).
pub fn pav_nonincreasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let k = blocks.len();
            let (m1, n1) = blocks[k - 2];
            let (m2, n2) = blocks[k - 1];
            if m2 > m1 {
                blocks.truncate(k - 2);
                blocks.push(((m1 * n1 as f64 + m2 * n2 as f64) / (n1 + n2) as f64, n1 + n2));
            } else {
                break;
            }
        }
    }
    blocks.into_iter().flat_map(|(m, n)| std::iter::repeat_n(m, n)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizeOpts {
    /// Number of profile intervals M.
    pub intervals: usize,
    pub max_iter: usize,
    /// Stop when the relative objective change falls below this.
    pub rel_tol: f64,
    pub fd_step: f64,
    /// Bound on the contact radius and height (None: unbounded).
    pub window: Option<f64>,
}

impl Default for MinimizeOpts {
    fn default() -> Self {
        MinimizeOpts {
            intervals: 32,
            max_iter: 300,
            rel_tol: 1e-8,
            fd_step: 1e-5,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfspaceResult {
    pub profile: GraphProfile,
    pub perimeter: f64,
    pub iterations: usize,
    /// Objective after each accepted step.
    pub history: Vec<f64>,
    /// P_s(half-ball of volume m, ℝ^N_+) on the same rays.
    pub half_ball_perimeter: f64,
    /// Contact radius and height stay strictly below the window bound.
    pub inside_window: bool,
    /// Largest correction needed to make the final curve a monotone graph.
    pub overhang: f64,
}

/// Ray angles θ_i = (π/2)(1 − (1 − i/M)²) from the vertical axis, dense
/// near the contact ray θ = π/2.
pub fn contact_rays(m: usize) -> Vec<f64> {
    (0..=m)
        .map(|i| {
            let u = 1.0 - i as f64 / m as f64;
            0.5 * PI * (1.0 - u * u)
        })
        .collect()
}

impl GraphProfile {
    /// Boundary points ρ_i (sin θ_i, cos θ_i); θ_0 = 0 is the top of the
    /// axis and θ_M = π/2 the contact point.
    pub fn from_polar(dim: usize, thetas: &[f64], rho: &[f64]) -> Result<GraphProfile> {
        let m = thetas.len() - 1;
        let radii: Vec<f64> = (0..=m)
            .map(|i| if i == 0 { 0.0 } else { rho[i] * thetas[i].sin() })
            .collect();
        let heights: Vec<f64> = (0..=m)
            .map(|i| if i == m { 0.0 } else { rho[i] * thetas[i].cos() })
            .collect();
        GraphProfile::new(dim, radii, heights)
    }

    /// Half-ball of volume m with vertices on the rays of `contact_rays(intervals)`.
    pub fn half_ball(dim: usize, m: f64, intervals: usize) -> Result<GraphProfile> {
        let thetas = contact_rays(intervals);
        let rho = vec![half_ball_radius(dim, m); thetas.len()];
        let mut p = GraphProfile::from_polar(dim, &thetas, &rho)?;
        p.dilate_to(m);
        Ok(p)
    }
}

struct Problem {
    dim: usize,
    m: f64,
    thetas: Vec<f64>,
    params: FracParams,
    window: Option<f64>,
}

impl Problem {
    /// Boundary vertices of the star-shaped set with radial distances ρ;
    /// not necessarily a graph.
    fn star(&self, rho: &[f64]) -> GraphProfile {
        let m = self.thetas.len() - 1;
        let radii: Vec<f64> = (0..=m).map(|i| if i == 0 { 0.0 } else { rho[i] * self.thetas[i].sin() }).collect();
        let heights: Vec<f64> = (0..=m).map(|i| if i == m { 0.0 } else { rho[i] * self.thetas[i].cos() }).collect();
        let volume = profile_volume(self.dim, &radii, &heights);
        GraphProfile {
            dim: self.dim,
            radii,
            heights,
            volume,
        }
    }

    /// Rescale ρ to volume m and check the window.
    fn normalize(&self, rho: &[f64]) -> Result<Vec<f64>> {
        if rho.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::DegenerateSurface("nonpositive radial distance".into()));
        }
        let v = self.star(rho).volume;
        if !(v > 0.0) {
            return Err(Error::DegenerateSurface("curve encloses no volume".into()));
        }
        let f = (self.m / v).powf(1.0 / self.dim as f64);
        let rho: Vec<f64> = rho.iter().map(|r| r * f).collect();
        if let Some(w) = self.window {
            let p = self.star(&rho);
            if p.contact_radius() > w || p.heights[0] > w {
                return Err(Error::DegenerateSurface("profile leaves the window".into()));
            }
        }
        Ok(rho)
    }

    /// Objective at ρ after rescaling to volume m.
    fn value(&self, rho: &[f64]) -> Result<f64> {
        let mut p = self.star(rho);
        if !(p.volume > 0.0) {
            return Err(Error::DegenerateSurface("curve encloses no volume".into()));
        }
        p.dilate_to(self.m);
        p.perimeter(self.params)
    }

    /// Graph profile of the final iterate: radii made nondecreasing and
    /// heights nonincreasing by isotonic regression, then rescaled. Also
    /// returns the largest monotonicity violation that was removed.
    fn finish(&self, rho: &[f64]) -> Result<(GraphProfile, f64)> {
        let p = self.star(rho);
        let neg: Vec<f64> = p.radii.iter().map(|r| -r).collect();
        let radii: Vec<f64> = pav_nonincreasing(&neg).into_iter().map(|r| -r).collect();
        let heights = pav_nonincreasing(&p.heights);
        let violation = p
            .radii
            .iter()
            .zip(&radii)
            .chain(p.heights.iter().zip(&heights))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let mut g = GraphProfile::new(self.dim, radii, heights)?;
        g.dilate_to(self.m);
        Ok((g, violation))
    }

    fn gradient(&self, rho: &[f64], step: f64) -> Result<Vec<f64>> {
        (0..rho.len())
            .map(|k| {
                let h = step * rho[k];
                let mut a = rho.to_vec();
                let mut b = rho.to_vec();
                a[k] += h;
                b[k] -= h;
                Ok((self.value(&a)? - self.value(&b)?) / (2.0 * h))
            })
            .collect()
    }
}

/// Minimize P_s(E, ℝ^N_+) over symmetric decreasing graphs of volume m.
///
/// The boundary is written in polar form ρ(θ) about the origin of the floor;
/// BFGS runs on (ρ_0, …, ρ_M) with finite-difference gradients, every trial
/// point is rescaled to volume m, and steps that break the graph property
/// or leave the window are cut back. Starts from the paraboloid
/// h = R(1 − r²/R²), whose contact angle is far from 90°.
pub fn minimize_halfspace(m: f64, params: FracParams, opts: &MinimizeOpts) -> Result<HalfspaceResult> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("volume must be positive, got {m}")));
    }
    if opts.intervals < 4 {
        return Err(Error::InvalidParameter("need at least four profile intervals".into()));
    }
    let dim = params.dim;
    let thetas = contact_rays(opts.intervals);
    let prob = Problem {
        dim,
        m,
        thetas: thetas.clone(),
        params,
        window: opts.window,
    };
    let half_ball_perimeter = GraphProfile::half_ball(dim, m, opts.intervals)?.perimeter(params)?;
    let r0 = half_ball_radius(dim, m);
    let start: Vec<f64> = thetas
        .iter()
        .map(|th| {
            let (sn, c) = (th.sin(), th.cos());
            if sn < 1e-12 {
                r0
            } else {
                r0 * (-c + (c * c + 4.0 * sn * sn).sqrt()) / (2.0 * sn * sn)
            }
        })
        .collect();
    let mut x = prob.normalize(&start)?;
    let mut f = prob.value(&x)?;
    let mut g = prob.gradient(&x, opts.fd_step)?;
    let n = x.len();
    let reset = |g: &nalgebra::DVector<f64>| nalgebra::DMatrix::<f64>::identity(n, n) * (0.05 * r0 / g.norm().max(1e-12));
    let mut hinv = reset(&nalgebra::DVector::from_vec(g.clone()));
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let mut quiet = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let gv = nalgebra::DVector::from_vec(g.clone());
        let mut d = -(&hinv * &gv);
        if d.dot(&gv) >= 0.0 {
            hinv = reset(&gv);
            d = -(&hinv * &gv);
        }
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
            if let Ok(xt) = prob.normalize(&trial) {
                if let Ok(ft) = prob.value(&xt) {
                    if ft.is_finite() && ft <= f + 1e-4 * t * d.dot(&gv) {
                        next = Some((xt, ft));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = next else {
            // no descent left at the resolution of the gradient
            converged = true;
            break;
        };
        let gn = prob.gradient(&xn, opts.fd_step)?;
        let sv = nalgebra::DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let yv = nalgebra::DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = sv.dot(&yv);
        if sy > 1e-12 * sv.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let i = nalgebra::DMatrix::<f64>::identity(n, n);
            let a = &i - rho * &sv * yv.transpose();
            let b = &i - rho * &yv * sv.transpose();
            hinv = &a * &hinv * &b + rho * &sv * sv.transpose();
        }
        let change = (f - fnew).abs() / fnew.abs();
        x = xn;
        f = fnew;
        g = gn;
        history.push(f);
        if change < opts.rel_tol {
            quiet += 1;
            if quiet >= 2 {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    let (profile, overhang) = prob.finish(&x)?;
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            residual: history.windows(2).last().map(|w| (w[0] - w[1]).abs() / w[1]).unwrap_or(f64::NAN),
            context: format!("half-space minimization at volume {m}; last perimeter {f}, last profile {:?}", profile.heights),
        });
    }
    let inside_window = opts
        .window
        .is_none_or(|w| profile.contact_radius() < w * (1.0 - 1e-6) && profile.heights[0] < w * (1.0 - 1e-6));
    Ok(HalfspaceResult {
        profile,
        perimeter: f,
        iterations,
        history,
        half_ball_perimeter,
        inside_window,
        overhang,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfspaceDiagnostics {
    pub schema: u32,
    pub dim: usize,
    pub s: f64,
    pub volume: f64,
    pub perimeter: f64,
    pub half_ball_perimeter: f64,
    pub diameter: f64,
    pub contact_radius: f64,
    pub height: f64,
    pub contact_angle: Option<f64>,
    pub iterations: usize,
}

impl HalfspaceDiagnostics {
    pub fn new(params: FracParams, res: &HalfspaceResult) -> Self {
        HalfspaceDiagnostics {
            schema: 1,
            dim: params.dim,
            s: params.s,
            volume: res.profile.volume,
            perimeter: res.perimeter,
            half_ball_perimeter: res.half_ball_perimeter,
            diameter: res.profile.diameter(),
            contact_radius: res.profile.contact_radius(),
            height: res.profile.heights[0],
            contact_angle: contact_angle(&res.profile).ok(),
            iterations: res.iterations,
        }
    }
}

/// Profile table with columns r, h.
pub fn write_profile_csv(path: &Path, profile: &GraphProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["r", "h"])?;
    for (r, h) in profile.radii.iter().zip(&profile.heights) {
        w.write_record([format!("{r:.17e}"), format!("{h:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perimeter::{perimeter_chord, ChordSpec};
    use crate::specfun::ball_perimeter;

    fn p2() -> FracParams {
        FracParams::new(2, 0.25).unwrap()
    }

    fn ngon(n: usize, center: [f64; 2], r: f64) -> Polygon {
        let v = (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                [center[0] + r * t.cos(), center[1] + r * t.sin()]
            })
            .collect();
        Polygon::new(v).unwrap()
    }

    #[test]
    fn exact_sum_survives_cancellation() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        let v: Vec<f64> = (1..=1000).map(|k| 1.0 / k as f64).collect();
        let fwd = exact_sum(v.iter().cloned());
        let rev = exact_sum(v.iter().rev().cloned());
        assert_eq!(fwd.to_bits(), rev.to_bits());
    }

    #[test]
    fn fine_polygon_approaches_the_disk() {
        let s = 0.25;
        let poly = ngon(256, [0.0, 0.0], 1.0);
        let r = (poly.signed_area() / PI).sqrt();
        let ball = ball_perimeter(p2()) * r.powf(2.0 - 2.0 * s);
        let got = poly.perimeter(s);
        // inscribed polygons lose a little to the isoperimetric inequality
        assert!(got > ball && (got - ball) / ball < 1e-5, "{got} vs {ball}");
    }

    #[test]
    fn square_matches_the_chord_estimator() {
        let sq = Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let chord = perimeter_chord(&sq, p2(), &ChordSpec::default()).unwrap();
        let got = sq.perimeter(0.25);
        assert!((got - chord.value).abs() < 1e-6 * chord.value + chord.error_bound, "{got} vs {}", chord.value);
    }

    #[test]
    fn wall_constants_match_quadrature() {
        // V_H at unit height is ∫_1^∞ a^{−1−2s} da · I = I/(2s), with
        // I = ∫_{ℝ^{N−1}} (1 + |t|²)^{−(N+2s)/2} dt split at |t| = 1; the
        // outer part uses t = 1/w, w = x^{1/(2s)} to remove the endpoint power
        for (dim, s) in [(2usize, 0.25), (2, 0.4), (3, 0.25), (3, 0.1)] {
            let e = (dim as f64 + 2.0 * s) / 2.0;
            let (area, tpow) = if dim == 2 { (2.0, 0.0) } else { (2.0 * PI, 1.0) };
            let near = adaptive(|t: f64| t.powf(tpow) * (1.0 + t * t).powf(-e), &[0.0, 1.0], 1e-15, 1e-13, 2000).value;
            let far = adaptive(
                |x: f64| {
                    if x <= 0.0 {
                        return if dim == 3 { 1.0 / (2.0 * s) } else { 0.0 };
                    }
                    let w = x.powf(0.5 / s);
                    // t^{tpow} (1 + t²)^{−e} dt = w^{2e − 2 − tpow} (1 + w²)^{−e} dw
                    let dw = w / (2.0 * s * x);
                    w.powf(2.0 * e - 2.0 - tpow) * (1.0 + w * w).powf(-e) * dw
                },
                &[0.0, 0.5, 1.0],
                1e-15,
                1e-13,
                2000,
            )
            .value;
            let oracle = area * (near + far) / (2.0 * s);
            let c = halfspace_constant(FracParams::new(dim, s).unwrap());
            assert!((oracle - c).abs() < 1e-9 * c, "N={dim} s={s}: {oracle} vs {c}");
        }
    }

    #[test]
    fn floor_moment_of_a_rectangle() {
        let s = 0.25;
        let rect = Polygon::new(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]]).unwrap();
        // 2 ∫_0^1 y^{−1/2} = 4
        assert!((rect.floor_moment(s) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn sliding_a_floating_disk_down_lowers_the_perimeter() {
        let p = p2();
        let heights = [2.0, 1.6, 1.3, 1.1, 1.0];
        let vals: Vec<f64> = heights
            .iter()
            .map(|h| ngon(96, [0.0, *h], 1.0).perimeter_halfplane(p))
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] < w[0], "{vals:?}");
        }
    }

    #[test]
    fn horizontal_translation_is_invisible() {
        let p = p2();
        let prof = GraphProfile::half_ball(2, 1.0, 16).unwrap();
        let base = prof.polygon();
        let moved = Polygon::new(base.vertices.iter().map(|v| [v[0] + 0.37, v[1]]).collect()).unwrap();
        let (a, b) = (base.perimeter_halfplane(p), moved.perimeter_halfplane(p));
        assert!((a - b).abs() < 1e-10 * a, "{a} vs {b}");
    }

    #[test]
    fn half_disk_profile_geometry() {
        let thetas = contact_rays(32);
        let prof = GraphProfile::from_polar(2, &thetas, &vec![1.0; 33]).unwrap();
        assert_eq!(prof.diameter(), 2.0);
        let a = contact_angle(&prof).unwrap();
        assert!((a - 90.0).abs() < 0.05, "{a}");
        let cone = GraphProfile::new(2, vec![0.0, 0.5, 0.8, 1.0], vec![1.0, 0.5, 0.2, 0.0]).unwrap();
        assert!((contact_angle(&cone).unwrap() - 45.0).abs() < 1e-9);
        // exact discrete volume: trapezoids for N = 2
        assert!((cone.volume - 2.0 * (0.5 * 0.75 + 0.3 * 0.35 + 0.2 * 0.1)).abs() < 1e-15);
    }

    #[test]
    fn flat_contact_is_an_error() {
        let p = GraphProfile::new(2, vec![0.0, 0.5, 0.8, 1.0], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(contact_angle(&p).is_err());
    }

    #[test]
    fn revolution_recovers_the_ball() {
        let s = 0.25;
        let n = 64;
        let pts: Vec<[f64; 2]> = (0..=n)
            .map(|i| {
                let a = -0.5 * PI + PI * i as f64 / n as f64;
                [if i == 0 || i == n { 0.0 } else { a.cos() }, a.sin()]
            })
            .collect();
        let vol: f64 = pts
            .windows(2)
            .map(|w| PI * (w[1][1] - w[0][1]) * (w[0][0].powi(2) + w[0][0] * w[1][0] + w[1][0].powi(2)) / 3.0)
            .sum();
        let r = (vol / (4.0 / 3.0 * PI)).cbrt();
        let ball = ball_perimeter(FracParams::new(3, s).unwrap()) * r.powf(3.0 - 2.0 * s);
        let got = revolution_perimeter(&pts, s).unwrap();
        assert!(got > ball && (got - ball) / ball < 2e-5, "{got} vs {ball}");
    }

    #[test]
    fn profile_volume_is_the_solid_integral() {
        let prof = GraphProfile::half_ball(3, 1.0, 24).unwrap();
        assert!((prof.volume - 1.0).abs() < 1e-12);
        let g = prof.to_gridset(1.0, 1.0, 0.05).unwrap();
        assert!((g.mass() - 1.0).abs() < 2e-3, "{}", g.mass());
    }

    fn offset_disk_set() -> GridSet {
        let b = Blob {
            centers: vec![vec![0.4, 0.6]],
            semi_axes: vec![vec![0.3, 0.3]],
        };
        let (lo, hi) = corpus_window(2);
        GridSet::from_region(&b, &lo, &hi, 0.04, 4).unwrap()
    }

    #[test]
    fn radial_rearrangement_centers_each_slice() {
        let g = offset_disk_set();
        let r = rearrange_radial(&g).unwrap();
        let l = g.shape[0];
        for (k, (a, b)) in g.slice_sums().iter().zip(r.slice_sums()).enumerate() {
            assert_eq!(a.to_bits(), b.to_bits(), "slice {k}");
            let row = &r.occupancy[k * l..(k + 1) * l];
            for i in 0..l / 2 {
                assert_eq!(row[i], row[l - 1 - i]);
                if i > 0 {
                    assert!(row[i] >= row[i - 1]);
                }
            }
        }
        assert_eq!(rearrange_radial(&r).unwrap(), r);
    }

    #[test]
    fn push_down_grounds_every_column() {
        let g = offset_disk_set();
        let d = rearrange_decreasing(&g).unwrap();
        for (a, b) in g.column_sums().iter().zip(d.column_sums()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let l = g.shape[0];
        for c in 0..l {
            let col: Vec<f64> = (0..g.shape[1]).map(|k| d.occupancy[k * l + c]).collect();
            assert!(col.windows(2).all(|w| w[1] <= w[0]));
        }
        assert_eq!(rearrange_decreasing(&d).unwrap(), d);
        // the floating disk now rests on the floor
        assert!(d.slice_sums()[0] > 0.0 && g.slice_sums()[0] == 0.0);
    }

    #[test]
    fn three_dimensional_orbits_are_exact() {
        let b = Blob {
            centers: vec![vec![0.3, -0.2, 0.5]],
            semi_axes: vec![vec![0.4, 0.3, 0.35]],
        };
        let g = GridSet::from_region(&b, &[-0.8, -0.8, 0.0], &[0.8, 0.8, 1.0], 0.1, 2).unwrap();
        let r = rearrange_radial(&g).unwrap();
        for (a, b) in g.slice_sums().iter().zip(r.slice_sums()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(rearrange_radial(&r).unwrap(), r);
    }

    #[test]
    fn two_lumps_are_disconnected_until_rearranged() {
        let b = Blob {
            centers: vec![vec![-0.7, 0.3], vec![0.7, 0.3]],
            semi_axes: vec![vec![0.3, 0.25], vec![0.3, 0.25]],
        };
        let (lo, hi) = corpus_window(2);
        let g = GridSet::from_region(&b, &lo, &hi, 0.04, 4).unwrap();
        assert!(!is_connected(&g).unwrap());
        let both = rearrange_decreasing(&rearrange_radial(&g).unwrap()).unwrap();
        assert!(is_connected(&both).unwrap());
        let empty = GridSet::new(0.1, vec![0.0, 0.0], vec![2, 2], vec![0.0; 4]).unwrap();
        assert!(is_connected(&empty).is_err());
    }

    #[test]
    fn blob_chords_match_membership() {
        for b in blob_corpus(2, 5, 3) {
            let o = [-2.0, 0.31];
            let iv = b.line_intervals(&o, &[1.0, 0.0]);
            for k in 0..400 {
                let t = k as f64 * 0.01 + 0.005;
                let inside = iv.iter().any(|(a, c)| t > *a && t < *c);
                assert_eq!(inside, b.contains(&[o[0] + t, o[1]]), "t = {t}");
            }
        }
    }

    #[test]
    fn pav_pools_violators() {
        assert_eq!(pav_nonincreasing(&[3.0, 1.0, 2.0, 0.0]), vec![3.0, 1.5, 1.5, 0.0]);
        assert_eq!(pav_nonincreasing(&[1.0, 2.0, 3.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn coarse_minimizer_beats_the_half_disk() {
        let opts = MinimizeOpts {
            intervals: 8,
            ..Default::default()
        };
        let res = minimize_halfspace(1.0, p2(), &opts).unwrap();
        assert!(res.perimeter < res.half_ball_perimeter);
        assert!((res.profile.volume - 1.0).abs() < 1e-10);
        assert!(res.profile.heights[0] > 0.0 && res.profile.contact_radius() > 0.0);
        assert!(minimize_halfspace(-1.0, p2(), &opts).is_err());
    }
}
