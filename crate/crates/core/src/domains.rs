//! Sets as membership oracles: analytic primitives, the dumb-bell, dilations,
//! and star-shaped deformed balls ξ + (1 + w(θ))θ.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::specfun::{unit_ball_volume, HarmonicBasis};

/// Current version of the domain file format.
pub const DOMAIN_SCHEMA: u32 = 1;

/// Anything that can answer "is x in the set" plus a few geometric queries.
pub trait Region: Send + Sync {
    fn dim(&self) -> usize;

    fn contains(&self, x: &[f64]) -> bool;

    /// Axis-aligned box (lo, hi) containing the set; None if unbounded.
    fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)>;

    /// Sorted disjoint parameter intervals [t0, t1] with origin + t·dir in
    /// the set, over the whole line. Ends may be infinite for unbounded sets.
    fn line_intervals(&self, origin: &[f64], dir: &[f64]) -> Vec<(f64, f64)> {
        sampled_line_intervals(self, origin, dir, 4096)
    }

    /// Exact measure when known in closed form.
    fn exact_volume(&self) -> Option<f64> {
        None
    }

    /// Classical perimeter when known in closed form.
    fn classical_perimeter(&self) -> Option<f64> {
        None
    }

    /// (center, radius) when the set is a round ball.
    fn as_ball(&self) -> Option<(Vec<f64>, f64)> {
        None
    }
}

/// Intervals found by sampling the line inside the bounding box and bisecting
/// each membership transition.
pub fn sampled_line_intervals<R: Region + ?Sized>(
    region: &R,
    origin: &[f64],
    dir: &[f64],
    samples: usize,
) -> Vec<(f64, f64)> {
    let Some((lo, hi)) = region.bounding_box() else {
        return Vec::new();
    };
    let Some((ta, tb)) = clip_to_box(origin, dir, &lo, &hi) else {
        return Vec::new();
    };
    let pad = 1e-9 * (tb - ta).abs().max(1.0);
    let (ta, tb) = (ta - pad, tb + pad);
    let at = |t: f64| -> Vec<f64> { origin.iter().zip(dir).map(|(o, d)| o + t * d).collect() };
    let inside = |t: f64| region.contains(&at(t));
    let bisect = |mut a: f64, mut b: f64, ina: bool| {
        for _ in 0..64 {
            let m = 0.5 * (a + b);
            if inside(m) == ina {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let mut out = Vec::new();
    let dt = (tb - ta) / samples as f64;
    let mut prev = inside(ta);
    let mut start = if prev { Some(ta) } else { None };
    for i in 1..=samples {
        let t = ta + dt * i as f64;
        let cur = inside(t);
        if cur != prev {
            let tc = bisect(t - dt, t, prev);
            if cur {
                start = Some(tc);
            } else if let Some(s0) = start.take() {
                out.push((s0, tc));
            }
            prev = cur;
        }
    }
    if let Some(s0) = start {
        out.push((s0, tb));
    }
    out
}

/// Parameter range of the line inside an axis-aligned box.
pub fn clip_to_box(origin: &[f64], dir: &[f64], lo: &[f64], hi: &[f64]) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for i in 0..origin.len() {
        if dir[i] == 0.0 {
            if origin[i] < lo[i] || origin[i] > hi[i] {
                return None;
            }
        } else {
            let a = (lo[i] - origin[i]) / dir[i];
            let b = (hi[i] - origin[i]) / dir[i];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

fn ball_interval(origin: &[f64], dir: &[f64], center: &[f64], r: f64) -> Option<(f64, f64)> {
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = -r * r;
    for i in 0..origin.len() {
        let o = origin[i] - center[i];
        a += dir[i] * dir[i];
        b += o * dir[i];
        c += o * o;
    }
    let disc = b * b - a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // stable roots of a t² + 2 b t + c
    let q = -(b + b.signum() * sq);
    let (r1, r2) = if q != 0.0 { (q / a, c / q) } else { (-sq / a, sq / a) };
    Some((r1.min(r2), r1.max(r2)))
}

/// Intersection of sorted interval lists with one interval.
fn intersect_with(list: Vec<(f64, f64)>, iv: (f64, f64)) -> Vec<(f64, f64)> {
    list.into_iter()
        .filter_map(|(a, b)| {
            let lo = a.max(iv.0);
            let hi = b.min(iv.1);
            (lo <= hi).then_some((lo, hi))
        })
        .collect()
}

/// Union of interval lists, sorted and merged.
pub fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Membership oracle for user-defined sets.
#[derive(Clone)]
pub struct CustomSet {
    pub label: String,
    pub oracle: Arc<dyn Fn(&[f64]) -> bool + Send + Sync>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl fmt::Debug for CustomSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSet").field("label", &self.label).finish()
    }
}

/// Primitive shapes in their own (undilated) coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// {x : x[normal_axis] ≥ 0}
    Halfspace { normal_axis: usize },
    /// B_R ∩ {x_N ≥ 0}
    Halfball { radius: f64 },
    Dumbbell { lobe_radius: f64, separation: f64, neck_halfwidth: f64 },
    #[serde(skip)]
    Custom(CustomSet),
}

/// A shape together with its dimension and dilation factor: x is in the
/// domain iff x / dilation is in the shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Domain {
    #[serde(default = "schema_default")]
    pub schema: u32,
    pub dim: usize,
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default = "one")]
    pub dilation: f64,
}

fn schema_default() -> u32 {
    DOMAIN_SCHEMA
}

fn one() -> f64 {
    1.0
}

impl Domain {
    pub fn new(dim: usize, shape: Shape) -> Result<Self> {
        let d = Domain {
            schema: DOMAIN_SCHEMA,
            dim,
            shape,
            dilation: 1.0,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        Self::new(center.len(), Shape::Ball { center: center.to_vec(), radius })
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::ball(&vec![0.0; dim], 1.0).expect("valid")
    }

    pub fn cube(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Self::new(lo.len(), Shape::Box { lo: lo.to_vec(), hi: hi.to_vec() })
    }

    pub fn halfspace(dim: usize, normal_axis: usize) -> Result<Self> {
        Self::new(dim, Shape::Halfspace { normal_axis })
    }

    pub fn halfball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(dim, Shape::Halfball { radius })
    }

    pub fn custom(
        label: &str,
        lo: &[f64],
        hi: &[f64],
        oracle: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(
            lo.len(),
            Shape::Custom(CustomSet {
                label: label.to_string(),
                oracle: Arc::new(oracle),
                lo: lo.to_vec(),
                hi: hi.to_vec(),
            }),
        )
    }

    /// Checks parameters after construction or parsing.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(1..=3).contains(&n) {
            return bad(format!("unsupported dimension {n}"));
        }
        if !(self.dilation > 0.0 && self.dilation.is_finite()) {
            return bad(format!("dilation must be positive, got {}", self.dilation));
        }
        match &self.shape {
            Shape::Ball { center, radius } => {
                if center.len() != n || !(*radius > 0.0) {
                    return bad("ball needs a center of length N and radius > 0".into());
                }
            }
            Shape::Box { lo, hi } => {
                if lo.len() != n || hi.len() != n || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return bad("box needs lo < hi componentwise, both of length N".into());
                }
            }
            Shape::Halfspace { normal_axis } => {
                if *normal_axis >= n {
                    return bad(format!("normal_axis {normal_axis} out of range"));
                }
            }
            Shape::Halfball { radius } => {
                if !(*radius > 0.0) {
                    return bad("halfball radius must be positive".into());
                }
            }
            Shape::Dumbbell { lobe_radius, separation, neck_halfwidth } => {
                if !(*lobe_radius > 0.0) {
                    return bad("lobe_radius must be positive".into());
                }
                if !(*neck_halfwidth > 0.0 && neck_halfwidth < lobe_radius) {
                    return bad("dumbbell needs 0 < neck_halfwidth < lobe_radius".into());
                }
                if !(*separation > 2.0 * lobe_radius) {
                    return bad("dumbbell needs separation > 2 lobe_radius".into());
                }
            }
            Shape::Custom(c) => {
                if c.lo.len() != n || c.hi.len() != n {
                    return bad("custom bounding box must have length N".into());
                }
            }
        }
        Ok(())
    }

    /// Ω ↦ factor·Ω.
    pub fn dilate(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Domain(format!("dilation factor must be positive, got {factor}")));
        }
        let mut d = self.clone();
        d.dilation *= factor;
        Ok(d)
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.shape, Shape::Halfspace { .. })
    }

    fn to_shape(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v / self.dilation).collect()
    }

    fn shape_contains(&self, y: &[f64]) -> bool {
        let n = self.dim;
        match &self.shape {
            Shape::Ball { center, radius } => dist2(y, center) <= radius * radius,
            Shape::Box { lo, hi } => (0..n).all(|i| y[i] >= lo[i] && y[i] <= hi[i]),
            Shape::Halfspace { normal_axis } => y[*normal_axis] >= 0.0,
            Shape::Halfball { radius } => y[n - 1] >= 0.0 && norm2(y) <= radius * radius,
            Shape::Dumbbell { lobe_radius, separation, neck_halfwidth } => {
                let r2 = lobe_radius * lobe_radius;
                if norm2(y) <= r2 {
                    return true;
                }
                let mut z = y.to_vec();
                z[0] -= separation;
                if norm2(&z) <= r2 {
                    return true;
                }
                let perp2: f64 = y[1..].iter().map(|v| v * v).sum();
                y[0] >= 0.0 && y[0] <= *separation && perp2 <= neck_halfwidth * neck_halfwidth
            }
            Shape::Custom(c) => (c.oracle)(y),
        }
    }

    fn shape_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.dim;
        match &self.shape {
            Shape::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            Shape::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            Shape::Halfspace { .. } => None,
            Shape::Halfball { radius } => {
                let mut lo = vec![-radius; n];
                lo[n - 1] = 0.0;
                Some((lo, vec![*radius; n]))
            }
            Shape::Dumbbell { lobe_radius, separation, .. } => {
                let mut lo = vec![-lobe_radius; n];
                let mut hi = vec![*lobe_radius; n];
                lo[0] = -lobe_radius;
                hi[0] = separation + lobe_radius;
                Some((lo, hi))
            }
            Shape::Custom(c) => Some((c.lo.clone(), c.hi.clone())),
        }
    }

    fn shape_intervals(&self, o: &[f64], d: &[f64]) -> Vec<(f64, f64)> {
        let n = self.dim;
        match &self.shape {
            Shape::Ball { center, radius } => ball_interval(o, d, center, *radius).into_iter().collect(),
            Shape::Box { lo, hi } => clip_to_box(o, d, lo, hi).into_iter().collect(),
            Shape::Halfspace { normal_axis } => halfspace_interval(o, d, *normal_axis).into_iter().collect(),
            Shape::Halfball { radius } => {
                let b: Vec<_> = ball_interval(o, d, &vec![0.0; n], *radius).into_iter().collect();
                match halfspace_interval(o, d, n - 1) {
                    Some(h) => intersect_with(b, h),
                    None => Vec::new(),
                }
            }
            Shape::Dumbbell { lobe_radius, separation, neck_halfwidth } => {
                let mut all = Vec::new();
                let mut c2 = vec![0.0; n];
                all.extend(ball_interval(o, d, &c2, *lobe_radius));
                c2[0] = *separation;
                all.extend(ball_interval(o, d, &c2, *lobe_radius));
                // neck: 0 ≤ y_0 ≤ sep and |y_⊥| ≤ δ
                let slab = if d[0] == 0.0 {
                    (o[0] >= 0.0 && o[0] <= *separation).then_some((f64::NEG_INFINITY, f64::INFINITY))
                } else {
                    let a = -o[0] / d[0];
                    let b = (separation - o[0]) / d[0];
                    Some((a.min(b), a.max(b)))
                };
                if let Some(slab) = slab {
                    let mut op = o.to_vec();
                    let mut dp = d.to_vec();
                    op[0] = 0.0;
                    dp[0] = 0.0;
                    let tube = if dp.iter().all(|v| *v == 0.0) {
                        (norm2(&op) <= neck_halfwidth * neck_halfwidth)
                            .then_some((f64::NEG_INFINITY, f64::INFINITY))
                    } else {
                        ball_interval(&op, &dp, &vec![0.0; n], *neck_halfwidth)
                    };
                    if let Some(t) = tube {
                        let lo = slab.0.max(t.0);
                        let hi = slab.1.min(t.1);
                        if lo <= hi {
                            all.push((lo, hi));
                        }
                    }
                }
                merge_intervals(all)
            }
            Shape::Custom(_) => Vec::new(),
        }
    }

    /// Distance from an interior point to the complement.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        let y = self.to_shape(x);
        let n = self.dim;
        let s = self.dilation;
        let d = match &self.shape {
            Shape::Ball { center, radius } => radius - dist2(&y, center).sqrt(),
            Shape::Box { lo, hi } => (0..n)
                .map(|i| (y[i] - lo[i]).min(hi[i] - y[i]))
                .fold(f64::INFINITY, f64::min),
            Shape::Halfspace { normal_axis } => y[*normal_axis],
            Shape::Halfball { radius } => (radius - norm2(&y).sqrt()).min(y[n - 1]),
            _ => return self.exit_distance_search(x),
        };
        d * s
    }

    fn exit_distance_search(&self, x: &[f64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        let dirs = crate::potential::direction_set(self.dim, 2000);
        let exit = |d: &[f64]| self.first_exit(x, d).unwrap_or(f64::INFINITY);
        let (mut best, mut bi) = (f64::INFINITY, 0);
        for (i, d) in dirs.iter().enumerate() {
            let e = exit(d);
            if e < best {
                best = e;
                bi = i;
            }
        }
        // local refinement by random-free pattern search around the best direction
        let mut cur = dirs[bi].clone();
        let mut step = 0.05;
        while step > 1e-7 {
            let mut improved = false;
            for axis in 0..self.dim {
                for sgn in [-1.0, 1.0] {
                    let mut c = cur.clone();
                    c[axis] += sgn * step;
                    let nr = norm2(&c).sqrt();
                    c.iter_mut().for_each(|v| *v /= nr);
                    let e = exit(&c);
                    if e < best {
                        best = e;
                        cur = c;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best
    }

    /// Smallest t > 0 where the ray x + t·dir leaves the domain.
    pub fn first_exit(&self, x: &[f64], dir: &[f64]) -> Option<f64> {
        self.ray_intervals(x, dir).first().map(|iv| iv.1)
    }

    /// Inside-intervals of the ray x + t·dir, t ≥ 0.
    pub fn ray_intervals(&self, x: &[f64], dir: &[f64]) -> Vec<(f64, f64)> {
        intersect_with(self.line_intervals(x, dir), (0.0, f64::INFINITY))
    }

    /// Analytic or sampled volume.
    pub fn volume(&self) -> Option<f64> {
        self.exact_volume()
    }

    pub fn label(&self) -> String {
        match &self.shape {
            Shape::Ball { .. } => "ball".into(),
            Shape::Box { .. } => "box".into(),
            Shape::Halfspace { .. } => "halfspace".into(),
            Shape::Halfball { .. } => "halfball".into(),
            Shape::Dumbbell { .. } => "dumbbell".into(),
            Shape::Custom(c) => c.label.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Domain = serde_json::from_str(text)?;
        if d.schema != DOMAIN_SCHEMA {
            return Err(Error::InvalidParameter(format!(
                "unsupported domain schema {} (expected {DOMAIN_SCHEMA})",
                d.schema
            )));
        }
        d.validate()?;
        Ok(d)
    }

    pub fn to_json(&self) -> Result<String> {
        if matches!(self.shape, Shape::Custom(_)) {
            return Err(Error::InvalidParameter("custom domains cannot be serialized".into()));
        }
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Union of two balls at 0 and (separation, 0, …) joined by the neck
/// {0 ≤ x_1 ≤ separation, |x_⊥| ≤ δ}.
pub fn make_dumbbell(dim: usize, lobe_radius: f64, separation: f64, neck_halfwidth: f64) -> Result<Domain> {
    Domain::new(dim, Shape::Dumbbell { lobe_radius, separation, neck_halfwidth }).map_err(|e| match e {
        Error::InvalidParameter(m) => Error::Domain(m),
        other => other,
    })
}

fn halfspace_interval(o: &[f64], d: &[f64], axis: usize) -> Option<(f64, f64)> {
    if d[axis] == 0.0 {
        (o[axis] >= 0.0).then_some((f64::NEG_INFINITY, f64::INFINITY))
    } else {
        let t = -o[axis] / d[axis];
        if d[axis] > 0.0 {
            Some((t, f64::INFINITY))
        } else {
            Some((f64::NEG_INFINITY, t))
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Region for Domain {
    fn dim(&self) -> usize {
        self.dim
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.shape_contains(&self.to_shape(x))
    }

    fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.shape_box().map(|(lo, hi)| {
            (
                lo.iter().map(|v| v * self.dilation).collect(),
                hi.iter().map(|v| v * self.dilation).collect(),
            )
        })
    }

    fn line_intervals(&self, origin: &[f64], dir: &[f64]) -> Vec<(f64, f64)> {
        if let Shape::Custom(_) = self.shape {
            return sampled_line_intervals(self, origin, dir, 4096);
        }
        let o = self.to_shape(origin);
        self.shape_intervals(&o, dir)
            .into_iter()
            .map(|(a, b)| (a * self.dilation, b * self.dilation))
            .collect()
    }

    fn exact_volume(&self) -> Option<f64> {
        let n = self.dim;
        let v = match &self.shape {
            Shape::Ball { radius, .. } => unit_ball_volume(n) * radius.powi(n as i32),
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            Shape::Halfball { radius } => 0.5 * unit_ball_volume(n) * radius.powi(n as i32),
            Shape::Dumbbell { lobe_radius: r, separation: l, neck_halfwidth: d } => match n {
                2 => {
                    let cap = d * (r * r - d * d).sqrt() + r * r * (d / r).asin();
                    2.0 * PI * r * r + 2.0 * d * l - 2.0 * cap
                }
                3 => {
                    let cap = 2.0 * PI / 3.0 * (r.powi(3) - (r * r - d * d).powf(1.5));
                    2.0 * unit_ball_volume(3) * r.powi(3) + PI * d * d * l - 2.0 * cap
                }
                _ => return None,
            },
            _ => return None,
        };
        Some(v * self.dilation.powi(n as i32))
    }

    fn classical_perimeter(&self) -> Option<f64> {
        let n = self.dim;
        let p = match &self.shape {
            Shape::Ball { radius, .. } => n as f64 * unit_ball_volume(n) * radius.powi(n as i32 - 1),
            Shape::Box { lo, hi } => {
                let e: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
                let vol: f64 = e.iter().product();
                e.iter().map(|x| 2.0 * vol / x).sum()
            }
            _ => return None,
        };
        Some(p * self.dilation.powi(n as i32 - 1))
    }

    fn as_ball(&self) -> Option<(Vec<f64>, f64)> {
        match &self.shape {
            Shape::Ball { center, radius } => Some((
                center.iter().map(|c| c * self.dilation).collect(),
                radius * self.dilation,
            )),
            _ => None,
        }
    }
}

/// Deformed ball with boundary ξ + (1 + w(θ))θ, w expanded in a harmonic basis.
#[derive(Debug, Clone)]
pub struct StarSurface {
    pub center: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub basis: Arc<HarmonicBasis>,
}

impl StarSurface {
    pub fn new(center: &[f64], coeffs: Vec<f64>, basis: Arc<HarmonicBasis>) -> Result<Self> {
        if center.len() != basis.dim() {
            return Err(Error::InvalidParameter("center dimension does not match basis".into()));
        }
        if coeffs.len() != basis.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficients, got {}",
                basis.len(),
                coeffs.len()
            )));
        }
        let s = StarSurface {
            center: center.to_vec(),
            coeffs,
            basis,
        };
        s.check_admissible()?;
        Ok(s)
    }

    /// The sphere S_ξ.
    pub fn sphere(center: &[f64], basis: Arc<HarmonicBasis>) -> Self {
        let n = basis.len();
        StarSurface {
            center: center.to_vec(),
            coeffs: vec![0.0; n],
            basis,
        }
    }

    /// Sphere of radius r about ξ.
    pub fn sphere_of_radius(center: &[f64], r: f64, basis: Arc<HarmonicBasis>) -> Result<Self> {
        let mut c = vec![0.0; basis.len()];
        c[0] = (r - 1.0) * crate::specfun::sphere_area(basis.dim()).sqrt();
        StarSurface::new(center, c, basis)
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// sup over nodes of |w|.
    pub fn sup_w(&self) -> f64 {
        self.basis
            .synthesize(&self.coeffs)
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_admissible(&self) -> Result<()> {
        let vals = self.basis.synthesize(&self.coeffs);
        // constant part may be large (scaled spheres); the oscillating part must stay small
        let mean = self.coeffs[0] / crate::specfun::sphere_area(self.dim()).sqrt();
        for v in &vals {
            if 1.0 + v <= 0.0 {
                return Err(Error::DegenerateSurface(format!("radius 1 + w = {} is not positive", 1.0 + v)));
            }
            if (v - mean).abs() >= 0.5 * (1.0 + mean) {
                return Err(Error::DegenerateSurface(format!(
                    "perturbation {} exceeds the admissible size",
                    v - mean
                )));
            }
        }
        Ok(())
    }

    /// Radius 1 + w(θ) at a unit vector.
    pub fn radius(&self, theta: &[f64; 3]) -> f64 {
        1.0 + self.basis.evaluate(&self.coeffs, theta)
    }

    /// Radius and tangential gradient of the radius.
    pub fn radius_with_grad(&self, theta: &[f64; 3]) -> (f64, [f64; 3]) {
        let (w, g) = self.basis.evaluate_with_grad(&self.coeffs, theta);
        (1.0 + w, g)
    }

    pub fn surface_point(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let t = crate::specfun::unit_point(self.dim(), theta)?;
        let r = self.radius(&t);
        if r <= 0.0 {
            return Err(Error::DegenerateSurface(format!("radius {r} at the requested direction")));
        }
        Ok((0..self.dim()).map(|i| self.center[i] + r * t[i]).collect())
    }

    /// (1/N) ∮ (1 + w)^N on the node set.
    pub fn enclosed_volume(&self) -> Result<f64> {
        let vals = self.basis.synthesize(&self.coeffs);
        let n = self.dim() as i32;
        if let Some(v) = vals.iter().find(|v| 1.0 + **v <= 0.0) {
            return Err(Error::DegenerateSurface(format!("radius {} at a node", 1.0 + v)));
        }
        let f: Vec<f64> = vals.iter().map(|v| (1.0 + v).powi(n)).collect();
        Ok(self.basis.integrate(&f) / n as f64)
    }

    pub fn star_membership(&self, x: &[f64]) -> bool {
        let n = self.dim();
        let mut d = [0.0; 3];
        for i in 0..n {
            d[i] = x[i] - self.center[i];
        }
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if r == 0.0 {
            return true;
        }
        for v in d.iter_mut() {
            *v /= r;
        }
        r <= self.radius(&d)
    }

    /// Translated copy.
    pub fn translated(&self, center: &[f64]) -> Self {
        StarSurface {
            center: center.to_vec(),
            coeffs: self.coeffs.clone(),
            basis: self.basis.clone(),
        }
    }

    /// Largest radius over the node set, a loose bound for bounding boxes.
    pub fn max_radius(&self) -> f64 {
        let vals = self.basis.synthesize(&self.coeffs);
        1.0 + vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Region for StarSurface {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.star_membership(x)
    }

    fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let r = 1.1 * self.max_radius() + 0.05;
        Some((
            self.center.iter().map(|c| c - r).collect(),
            self.center.iter().map(|c| c + r).collect(),
        ))
    }

    // smooth and nearly round: coarse sampling finds every crossing
    fn line_intervals(&self, origin: &[f64], dir: &[f64]) -> Vec<(f64, f64)> {
        sampled_line_intervals(self, origin, dir, 384)
    }

    fn exact_volume(&self) -> Option<f64> {
        self.enclosed_volume().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::FracParams;

    #[test]
    fn primitive_membership() {
        let b = Domain::unit_ball(2);
        assert!(b.contains(&[0.0, 0.0]));
        assert!(!b.contains(&[2.0, 0.0]));
        assert!(b.contains(&[1.0, 0.0]));
        let d = make_dumbbell(2, 1.0, 4.0, 0.1).unwrap();
        assert!(d.contains(&[0.0, 0.0]));
        assert!(d.contains(&[2.0, 0.0]));
        assert!(!d.contains(&[2.0, 0.5]));
        assert!(d.contains(&[4.0, 0.9]));
        assert!(make_dumbbell(2, 1.0, 1.5, 0.1).is_err());
        assert!(make_dumbbell(2, 1.0, 4.0, 1.5).is_err());
    }

    #[test]
    fn dilation() {
        let b = Domain::unit_ball(2).dilate(2.0).unwrap();
        assert!(b.contains(&[1.9, 0.0]));
        assert!(!b.contains(&[2.1, 0.0]));
        assert!((b.exact_volume().unwrap() - 4.0 * PI).abs() < 1e-12);
        let q = Domain::cube(&[0.0, 0.0], &[1.0, 1.0]).unwrap().dilate(10.0).unwrap();
        assert_eq!(q.bounding_box().unwrap(), (vec![0.0, 0.0], vec![10.0, 10.0]));
        assert!(Domain::unit_ball(2).dilate(0.0).is_err());
        assert!(Domain::unit_ball(2).dilate(-1.0).is_err());
    }

    #[test]
    fn dumbbell_area_against_grid_count() {
        let d = make_dumbbell(2, 1.0, 4.0, 0.1).unwrap();
        let exact = d.exact_volume().unwrap();
        let approx = 2.0 * PI + (4.0 - 2.0 * (1.0f64 - 0.01).sqrt()) * 0.2;
        assert!((exact / approx - 1.0).abs() < 1e-3);
        let h = 0.005;
        let mut count = 0usize;
        let (lo, hi) = d.bounding_box().unwrap();
        let nx = ((hi[0] - lo[0]) / h) as usize;
        let ny = ((hi[1] - lo[1]) / h) as usize;
        for i in 0..nx {
            for j in 0..ny {
                let x = [lo[0] + (i as f64 + 0.5) * h, lo[1] + (j as f64 + 0.5) * h];
                if d.contains(&x) {
                    count += 1;
                }
            }
        }
        let grid = count as f64 * h * h;
        assert!((grid / exact - 1.0).abs() < 0.01);
    }

    #[test]
    fn analytic_intervals_agree_with_sampling() {
        let shapes = vec![
            Domain::ball(&[0.3, -0.2], 0.8).unwrap(),
            Domain::cube(&[-1.0, -0.5], &[0.7, 0.9]).unwrap(),
            Domain::halfball(2, 1.2).unwrap(),
            make_dumbbell(2, 1.0, 4.0, 0.1).unwrap().dilate(1.7).unwrap(),
            make_dumbbell(3, 1.0, 4.0, 0.2).unwrap(),
        ];
        for d in shapes {
            for k in 0..40 {
                let a = 0.37 + k as f64 * 0.61;
                let n = d.dim;
                let mut dir = vec![a.cos(), a.sin(), 0.0];
                if n == 3 {
                    dir = vec![a.cos() * 0.8, a.sin() * 0.8, 0.6];
                }
                dir.truncate(n);
                let mut o = vec![0.1 * k as f64 % 1.3, 0.05, 0.0];
                o.truncate(n);
                let exact = d.line_intervals(&o, &dir);
                let sampled = sampled_line_intervals(&d, &o, &dir, 20000);
                assert_eq!(exact.len(), sampled.len(), "{:?} {exact:?} {sampled:?}", d.shape);
                for (e, s) in exact.iter().zip(&sampled) {
                    assert!((e.0 - s.0).abs() < 1e-6 && (e.1 - s.1).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let d = make_dumbbell(2, 1.0, 4.0, 0.1).unwrap().dilate(20.0).unwrap();
        let text = d.to_json().unwrap();
        assert!(text.contains("\"kind\": \"dumbbell\""));
        assert!(text.contains("\"parameters\""));
        let back = Domain::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        let parsed = Domain::from_json(r#"{"dim":2,"kind":"ball","parameters":{"center":[0,0],"radius":1}}"#).unwrap();
        assert_eq!(parsed.dilation, 1.0);
        assert!(Domain::from_json(r#"{"dim":2,"kind":"ball","parameters":{"center":[0,0],"radius":-1}}"#).is_err());
    }

    #[test]
    fn star_surface_basics() {
        let params = FracParams::new(2, 0.25).unwrap();
        let basis = Arc::new(HarmonicBasis::new(params, 4).unwrap());
        let s = StarSurface::sphere(&[0.0, 0.0], basis.clone());
        assert_eq!(s.surface_point(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert!((s.enclosed_volume().unwrap() - PI).abs() < 1e-13);
        let s11 = StarSurface::sphere_of_radius(&[0.0, 0.0], 1.1, basis.clone()).unwrap();
        assert!((s11.enclosed_volume().unwrap() - 1.21 * PI).abs() < 1e-12);
        let p = s11.surface_point(&[0.0, 1.0]).unwrap();
        assert!((p[1] - 1.1).abs() < 1e-14);
        // w = 0.05 Y_1: opposite points displaced oppositely
        let mut c = vec![0.0; basis.len()];
        c[1] = 0.05;
        let s1 = StarSurface::new(&[0.0, 0.0], c, basis.clone()).unwrap();
        let a = s1.surface_point(&[1.0, 0.0]).unwrap();
        let b = s1.surface_point(&[-1.0, 0.0]).unwrap();
        assert!((a[0] - 1.0) > 0.0 && (b[0] + 1.0) > 0.0);
        assert!(((a[0] - 1.0) - (b[0] + 1.0)).abs() < 1e-14);
        assert!(s.star_membership(&[0.0, 0.0]));
        assert!(!s.star_membership(&[1.01, 0.0]));
    }

    #[test]
    fn enclosed_volume_matches_polar_integration() {
        let params = FracParams::new(2, 0.25).unwrap();
        let basis = Arc::new(HarmonicBasis::new(params, 4).unwrap());
        let mut c = vec![0.0; basis.len()];
        c[3] = 0.1; // cos 2θ / √π
        let s = StarSurface::new(&[0.0, 0.0], c, basis).unwrap();
        // dense midpoint polar integration, ½∫ r(θ)² dθ
        let m = 200_000;
        let mut area = 0.0;
        for j in 0..m {
            let t = (j as f64 + 0.5) * 2.0 * PI / m as f64;
            let r = 1.0 + 0.1 * (2.0 * t).cos() / PI.sqrt();
            area += 0.5 * r * r * 2.0 * PI / m as f64;
        }
        assert!((s.enclosed_volume().unwrap() - area).abs() < 1e-8);
    }

    #[test]
    fn membership_brackets_surface_points() {
        let params = FracParams::new(3, 0.25).unwrap();
        let basis = Arc::new(HarmonicBasis::with_nodes(params, 4, 12, 24).unwrap());
        let mut c = vec![0.0; basis.len()];
        c[5] = 0.08;
        c[8] = -0.05;
        let s = StarSurface::new(&[0.2, -0.1, 0.3], c, basis.clone()).unwrap();
        for j in 0..basis.num_nodes() {
            let th = basis.node(j);
            let p = s.surface_point(th).unwrap();
            let scale = |f: f64| -> Vec<f64> { (0..3).map(|i| s.center[i] + f * (p[i] - s.center[i])).collect() };
            assert!(s.star_membership(&scale(1.0 - 1e-6)));
            assert!(!s.star_membership(&scale(1.0 + 1e-6)));
        }
    }
}
