//! Command-line front end: every subcommand is an experiment that writes
//! CSV/JSON artifacts plus `manifest.json` into the output directory.
//!
//! A manifest carries the effective configuration, so
//! `fracperim --config out/manifest.json` repeats the run. Usage errors exit
//! with status 2, numerical failures with 1; both print a JSON error object
//! on stderr.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::domains::{make_dumbbell, Domain, Region};
use crate::error::{Error, Result};
use crate::halfspace::{contact_angle, minimize_halfspace, write_profile_csv, HalfspaceDiagnostics, MinimizeOpts};
use crate::perimeter::{gamma_limit_probe, perimeter_chord, perimeter_grid, perimeter_mc, perimeter_rel};
use crate::perimeter::{ChordSpec, GridSpec, McSpec, PerimeterEstimate, ProbeMethod};
use crate::potential::{find_critical_points, potential, CriticalSearch};
use crate::reduction::{
    default_basis, default_opts, expansion_validate, find_cmc, solve_reduction, sweep, write_sweep_csv, CmcSearch,
    ReductionBundle, SolveMethod,
};
use crate::specfun::{eigenvalue, harmonic_dim, sphere_curvature, FracParams, HarmonicBasis};
use crate::StarSurface;

pub const SCHEMA: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "fracperim", version, about = "Fractional perimeters, nonlocal curvature and small-volume CMC surfaces")]
pub struct Cli {
    /// Experiment config or manifest (JSON) to run instead of a subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Eigenvalues of the linearized curvature operator on the sphere.
    Spectrum(SpectrumArgs),
    /// P_s of a set, optionally relative to an ambient domain.
    Perimeter(PerimeterArgs),
    /// Nonlocal mean curvature on a perturbed sphere.
    Curvature(CurvatureArgs),
    /// V_Ω along a ray and its critical points.
    Potential(PotentialArgs),
    /// Lyapunov–Schmidt reduction at one or more (ε, ξ).
    Reduce(ReduceArgs),
    /// Constant-curvature near-spheres in Ω_ε.
    Locate(LocateArgs),
    /// Volume-constrained minimizer in the half-space.
    Halfspace(HalfspaceArgs),
    /// Small-ε expansion of the relative perimeter of unit balls.
    ValidateExpansion(ExpansionArgs),
    /// (1 − 2s) P_s as s → 1/2.
    ValidateGamma(GammaArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Perimeter(_) => "perimeter",
            Command::Curvature(_) => "curvature",
            Command::Potential(_) => "potential",
            Command::Reduce(_) => "reduce",
            Command::Locate(_) => "locate",
            Command::Halfspace(_) => "halfspace",
            Command::ValidateExpansion(_) => "validate-expansion",
            Command::ValidateGamma(_) => "validate-gamma",
        }
    }
}

/// Defaults of an argument struct, taken from its clap attributes.
fn clap_default<T: Args>() -> T {
    #[derive(Parser)]
    struct Wrap<U: Args> {
        #[command(flatten)]
        inner: U,
    }
    Wrap::<T>::try_parse_from(["fracperim"]).expect("every option has a default").inner
}

macro_rules! clap_defaults {
    ($($t:ty),*) => {
        $(impl Default for $t {
            fn default() -> Self {
                clap_default()
            }
        })*
    };
}

clap_defaults!(
    ParamArgs,
    SpectrumArgs,
    PerimeterArgs,
    CurvatureArgs,
    PotentialArgs,
    ReduceArgs,
    LocateArgs,
    HalfspaceArgs,
    ExpansionArgs,
    GammaArgs
);

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamArgs {
    /// Ambient dimension N (2 or 3).
    #[arg(long = "N", alias = "dim", default_value_t = 2)]
    #[serde(rename = "N")]
    pub dim: usize,
    /// Fractional order s in (0, 1/2).
    #[arg(long, default_value_t = 0.25)]
    pub s: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<FracParams> {
        FracParams::new(self.dim, self.s)
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    /// Largest degree k.
    #[arg(long, default_value_t = 6)]
    pub kmax: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PerimeterArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    /// The set E: JSON file, inline JSON, or one of unit-ball, halfball, dumbbell.
    #[arg(long, default_value = "unit-ball")]
    pub set: String,
    /// Ambient domain Ω for P_s(E, Ω).
    #[arg(long)]
    pub relative_to: Option<String>,
    /// grid, mc or chord.
    #[arg(long, default_value = "grid")]
    pub method: String,
    /// Cell size for the grid estimator.
    #[arg(long, default_value_t = 0.05)]
    pub h: f64,
    #[arg(long, default_value_t = 200_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub rel_tol: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CurvatureArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Harmonic index of the perturbation w = amplitude·Y_index.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = 0.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 4)]
    pub degree: usize,
    /// Ambient domain for the relative curvature.
    #[arg(long)]
    pub domain: Option<String>,
    /// Sphere center (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub center: Vec<f64>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PotentialArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value = "unit-ball")]
    pub domain: String,
    /// Ray direction from the origin (comma separated; default e_1).
    #[arg(long, value_delimiter = ',')]
    pub dir: Vec<f64>,
    /// Number of samples along the ray up to the boundary.
    #[arg(long, default_value_t = 40)]
    pub samples: usize,
    #[arg(long, default_value_t = 16)]
    pub multistart: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReduceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value = "unit-ball")]
    pub domain: String,
    /// Values of ε (comma separated); more than one writes a sweep table.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub eps: Vec<f64>,
    /// Center ξ in Ω_ε coordinates (comma separated; default origin).
    #[arg(long, value_delimiter = ',')]
    pub xi: Vec<f64>,
    /// newton or picard.
    #[arg(long, default_value = "newton")]
    pub method: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LocateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value = "dumbbell")]
    pub domain: String,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = 16)]
    pub multistart: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HalfspaceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    /// Volume m.
    #[arg(long, default_value_t = 1.0)]
    pub volume: f64,
    /// Profile intervals M.
    #[arg(long, default_value_t = 32)]
    pub intervals: usize,
    /// Bound on contact radius and height.
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value = "unit-ball")]
    pub domain: String,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.02")]
    pub eps: Vec<f64>,
    /// Physical points, `;`-separated, coordinates `,`-separated.
    #[arg(long, default_value = "0.3,0")]
    pub points: String,
    #[arg(long, default_value_t = 0.05)]
    pub grad_step: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GammaArgs {
    #[arg(long = "N", alias = "dim", default_value_t = 2)]
    #[serde(rename = "N")]
    pub dim: usize,
    #[arg(long, default_value = "unit-ball")]
    pub set: String,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.35,0.4,0.45,0.48")]
    pub s_list: Vec<f64>,
    /// grid or chord.
    #[arg(long, default_value = "chord")]
    pub method: String,
    #[arg(long, default_value_t = 0.02)]
    pub h: f64,
}

/// A complete, reproducible run description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "schema")]
    pub schema: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(flatten)]
    pub command: Command,
}

fn schema() -> u32 {
    SCHEMA
}
fn default_seed() -> u64 {
    7
}
fn default_out() -> PathBuf {
    PathBuf::from("fracperim-out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub version: String,
    pub workers: usize,
    pub wall_ms: f64,
    pub artifacts: Vec<String>,
}

impl ExperimentConfig {
    /// Parse a config file or a manifest.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let cfg: ExperimentConfig = match v.get("config") {
            Some(inner) if v.get("artifacts").is_some() => serde_json::from_value(inner.clone())?,
            _ => serde_json::from_value(v)?,
        };
        if cfg.schema != SCHEMA {
            return Err(Error::InvalidParameter(format!(
                "unsupported config schema {} (expected {SCHEMA})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }
}

/// Domain from a keyword, inline JSON or a JSON file.
pub fn load_domain(spec: &str, dim: usize) -> Result<Domain> {
    match spec {
        "unit-ball" | "ball" => Ok(Domain::unit_ball(dim)),
        "halfball" => Domain::halfball(dim, 1.0),
        "dumbbell" => make_dumbbell(dim, 1.0, 4.0, 0.3),
        s if s.trim_start().starts_with('{') => Domain::from_json(s),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidParameter(format!("cannot read domain file {path}: {e}")))?;
            Domain::from_json(&text)
        }
    }
    .and_then(|d| {
        if d.dim != dim {
            Err(Error::InvalidParameter(format!("domain has dimension {} but N = {dim}", d.dim)))
        } else {
            Ok(d)
        }
    })
}

/// Inline JSON for the manifest, so reruns do not depend on input files.
fn pin_domain(spec: &mut String, d: &Domain) -> Result<()> {
    *spec = d.to_json()?;
    Ok(())
}

fn parse_point_list(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("bad coordinate '{c}' in point list")))
                })
                .collect()
        })
        .collect()
}

fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.10e}")).collect::<Vec<_>>().join(";")
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        std::fs::write(p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }
}

fn estimate_row(label: &str, params: FracParams, e: &PerimeterEstimate) -> Vec<String> {
    vec![
        label.to_string(),
        e.method.clone(),
        params.dim.to_string(),
        params.s.to_string(),
        format!("{:.6e}", e.resolution),
        fmt(e.value),
        format!("{:.6e}", e.error_bound),
    ]
}

/// Run one experiment; returns the manifest written next to the artifacts.
pub fn run(mut cfg: ExperimentConfig) -> Result<Manifest> {
    let t0 = Instant::now();
    if cfg.schema != SCHEMA {
        return Err(Error::InvalidParameter(format!("unsupported config schema {}", cfg.schema)));
    }
    if cfg.workers == Some(0) {
        return Err(Error::InvalidParameter("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let workers = pool.current_num_threads();
    std::fs::create_dir_all(&cfg.out)?;
    let mut out = Outputs {
        dir: cfg.out.clone(),
        files: Vec::new(),
    };
    let seed = cfg.seed;
    pool.install(|| execute(&mut cfg.command, seed, &mut out))?;
    let manifest = Manifest {
        schema: SCHEMA,
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        workers,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        artifacts: out.files.clone(),
    };
    std::fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

fn execute(cmd: &mut Command, seed: u64, out: &mut Outputs) -> Result<()> {
    match cmd {
        Command::Spectrum(a) => {
            let p = a.params.params()?;
            let mut w = csv::Writer::from_path(out.path("spectrum.csv"))?;
            w.write_record(["k", "multiplicity", "lambda", "linearized"])?;
            let l1 = eigenvalue(p, 1);
            for k in 0..=a.kmax {
                let l = eigenvalue(p, k);
                w.write_record([
                    k.to_string(),
                    harmonic_dim(p.dim, k).to_string(),
                    fmt(l),
                    fmt(2.0 * (l - l1)),
                ])?;
            }
            w.flush()?;
            out.json(
                "spectrum.json",
                &serde_json::json!({"schema": SCHEMA, "N": p.dim, "s": p.s, "sphere_curvature": sphere_curvature(p)}),
            )?;
        }
        Command::Perimeter(a) => {
            let p = a.params.params()?;
            let set = load_domain(&a.set, p.dim)?;
            pin_domain(&mut a.set, &set)?;
            let est = match &a.relative_to {
                Some(o) => {
                    let omega = load_domain(o, p.dim)?;
                    let e = perimeter_rel(&set, &omega, p, &GridSpec::new(a.h))?;
                    a.relative_to = Some(omega.to_json()?);
                    e
                }
                None => match a.method.as_str() {
                    "grid" => perimeter_grid(&set, p, &GridSpec::new(a.h))?,
                    "mc" => perimeter_mc(&set, p, &McSpec::new(a.samples, seed))?,
                    "chord" => perimeter_chord(
                        &set,
                        p,
                        &ChordSpec {
                            rel_tol: a.rel_tol,
                            ..ChordSpec::default()
                        },
                    )?,
                    m => return Err(Error::InvalidParameter(format!("unknown method '{m}' (grid, mc, chord)"))),
                },
            };
            let mut w = csv::Writer::from_path(out.path("perimeter.csv"))?;
            w.write_record(["label", "method", "N", "s", "resolution", "value", "error_bound"])?;
            w.write_record(estimate_row(&set.label(), p, &est))?;
            w.flush()?;
        }
        Command::Curvature(a) => {
            let p = a.params.params()?;
            let basis = Arc::new(HarmonicBasis::new(p, a.degree)?);
            if a.index >= basis.len() {
                return Err(Error::InvalidParameter(format!(
                    "harmonic index {} out of range (basis has {})",
                    a.index,
                    basis.len()
                )));
            }
            let center = if a.center.is_empty() { vec![0.0; p.dim] } else { a.center.clone() };
            // radius r(1 + a·Y_i) = 1 + (r − 1) + r·a·Y_i
            let sphere = StarSurface::sphere_of_radius(&center, a.radius, basis.clone())?;
            let bump = basis.unit_coeffs(a.index, a.radius * a.amplitude);
            let coeffs = sphere.coeffs.iter().zip(&bump).map(|(c, b)| c + b).collect();
            let surface = StarSurface::new(&center, coeffs, basis.clone())?;
            let omega = match &a.domain {
                Some(d) => {
                    let dom = load_domain(d, p.dim)?;
                    a.domain = Some(dom.to_json()?);
                    Some(dom)
                }
                None => None,
            };
            let values = crate::curvature::curvature_profile(&surface, omega.as_ref(), p, &Default::default())?;
            let mut w = csv::Writer::from_path(out.path("curvature.csv"))?;
            let mut head: Vec<String> = (0..p.dim).map(|d| format!("x{d}")).collect();
            head.push("curvature".into());
            w.write_record(&head)?;
            for (j, v) in values.iter().enumerate() {
                let mut row: Vec<String> = basis.node(j).iter().map(|x| format!("{x:.10e}")).collect();
                row.push(fmt(*v));
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        Command::Potential(a) => {
            let p = a.params.params()?;
            let dom = load_domain(&a.domain, p.dim)?;
            pin_domain(&mut a.domain, &dom)?;
            let mut dir = if a.dir.is_empty() {
                let mut e = vec![0.0; p.dim];
                e[0] = 1.0;
                e
            } else {
                a.dir.clone()
            };
            if dir.len() != p.dim {
                return Err(Error::InvalidParameter("ray direction has the wrong dimension".into()));
            }
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::InvalidParameter("ray direction must be nonzero".into()));
            }
            for x in dir.iter_mut() {
                *x /= norm;
            }
            let origin = vec![0.0; p.dim];
            if !dom.contains(&origin) {
                return Err(Error::NotInterior("the ray starts at the origin, which is outside the domain".into()));
            }
            let exit = dom
                .first_exit(&origin, &dir)
                .ok_or_else(|| Error::Domain("the ray never leaves the domain".into()))?;
            let mut w = csv::Writer::from_path(out.path("potential_profile.csv"))?;
            w.write_record(["r", "distance", "potential"])?;
            for i in 0..a.samples {
                let r = exit * i as f64 / a.samples as f64;
                let x: Vec<f64> = dir.iter().map(|d| d * r).collect();
                w.write_record([fmt(r), fmt(dom.boundary_distance(&x)), fmt(potential(&dom, &x, p)?)])?;
            }
            w.flush()?;
            if dom.is_bounded() {
                let search = CriticalSearch {
                    multistart: a.multistart,
                    seed,
                    ..CriticalSearch::default()
                };
                let crit = find_critical_points(&dom, p, &search)?;
                let mut w = csv::Writer::from_path(out.path("critical_points.csv"))?;
                w.write_record(["location", "value", "gradient_norm", "hessian_eigs", "classification"])?;
                for c in &crit {
                    w.write_record([
                        join(&c.location),
                        fmt(c.value),
                        format!("{:.3e}", c.gradient_norm),
                        join(&c.hessian_eigs),
                        c.classification.as_str().to_string(),
                    ])?;
                }
                w.flush()?;
            }
        }
        Command::Reduce(a) => {
            let p = a.params.params()?;
            let dom = load_domain(&a.domain, p.dim)?;
            pin_domain(&mut a.domain, &dom)?;
            let method: SolveMethod = a.method.parse()?;
            let xi = if a.xi.is_empty() { vec![0.0; p.dim] } else { a.xi.clone() };
            let basis = default_basis(p)?;
            let mut opts = default_opts(p);
            opts.method = method;
            if a.eps.is_empty() {
                return Err(Error::InvalidParameter("need at least one ε".into()));
            }
            if a.eps.len() == 1 {
                let sol = solve_reduction(&dom, a.eps[0], &xi, p, &basis, &opts)?;
                out.json("reduction.json", &ReductionBundle::new(&dom, a.eps[0], &sol))?;
            } else {
                let pairs: Vec<(f64, Vec<f64>)> = a.eps.iter().map(|e| (*e, xi.clone())).collect();
                let rows = sweep(&dom, &pairs, p, &basis, &opts)?;
                write_sweep_csv(&out.path("sweep.csv"), &rows)?;
            }
        }
        Command::Locate(a) => {
            let p = a.params.params()?;
            let dom = load_domain(&a.domain, p.dim)?;
            pin_domain(&mut a.domain, &dom)?;
            let basis = default_basis(p)?;
            let opts = default_opts(p);
            let mut search = CmcSearch::default();
            search.critical.multistart = a.multistart;
            search.critical.seed = seed;
            let found = find_cmc(&dom, a.eps, p, &basis, &opts, &search)?;
            let mut w = csv::Writer::from_path(out.path("cmc.csv"))?;
            w.write_record([
                "center",
                "physical_center",
                "classification",
                "seed",
                "seed_classification",
                "c",
                "lambda_norm",
                "phi",
                "residual_curvature",
                "converged",
            ])?;
            for r in &found {
                let phys: Vec<f64> = r.solution.xi.iter().map(|x| x * a.eps).collect();
                w.write_record([
                    join(&r.solution.xi),
                    join(&phys),
                    r.classification.as_str().to_string(),
                    join(&r.seed),
                    r.seed_classification.as_str().to_string(),
                    fmt(r.solution.c),
                    format!("{:.3e}", r.solution.lambda_norm()),
                    r.solution.phi.map(fmt).unwrap_or_default(),
                    format!("{:.3e}", r.solution.residual_curv),
                    r.converged.to_string(),
                ])?;
            }
            w.flush()?;
            out.json("locate.json", &found)?;
        }
        Command::Halfspace(a) => {
            let p = a.params.params()?;
            let opts = MinimizeOpts {
                intervals: a.intervals,
                max_iter: a.max_iter,
                window: a.window,
                ..MinimizeOpts::default()
            };
            let res = minimize_halfspace(a.volume, p, &opts)?;
            write_profile_csv(&out.path("profile.csv"), &res.profile)?;
            let diag = HalfspaceDiagnostics::new(p, &res);
            if contact_angle(&res.profile).is_err() {
                eprintln!("warning: contact angle not resolved on this profile");
            }
            out.json("diagnostics.json", &diag)?;
        }
        Command::ValidateExpansion(a) => {
            let p = a.params.params()?;
            let dom = load_domain(&a.domain, p.dim)?;
            pin_domain(&mut a.domain, &dom)?;
            let points = parse_point_list(&a.points)?;
            let report = expansion_validate(&dom, p, &a.eps, &points, a.grad_step)?;
            let mut w = csv::Writer::from_path(out.path("expansion.csv"))?;
            w.write_record([
                "point",
                "eps",
                "relative_perimeter",
                "potential",
                "remainder",
                "leading_ratio",
                "grad_fd_norm",
                "grad_model_norm",
            ])?;
            let nrm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for sr in &report.series {
                for r in &sr.rows {
                    w.write_record([
                        join(&sr.point),
                        fmt(r.eps),
                        fmt(r.relative_perimeter),
                        fmt(r.potential),
                        fmt(r.remainder),
                        fmt(r.leading_ratio),
                        fmt(nrm(&r.grad_fd)),
                        fmt(nrm(&r.grad_model)),
                    ])?;
                }
            }
            w.flush()?;
            out.json("expansion.json", &report)?;
        }
        Command::ValidateGamma(a) => {
            let set = load_domain(&a.set, a.dim)?;
            pin_domain(&mut a.set, &set)?;
            for s in &a.s_list {
                FracParams::new(a.dim, *s)?;
            }
            let method = match a.method.as_str() {
                "grid" => ProbeMethod::Grid(GridSpec::new(a.h)),
                "chord" => ProbeMethod::Chord(ChordSpec::default()),
                m => return Err(Error::InvalidParameter(format!("unknown method '{m}' (grid, chord)"))),
            };
            let probe = gamma_limit_probe(&set, &a.s_list, &method)?;
            let mut w = csv::Writer::from_path(out.path("gamma.csv"))?;
            w.write_record(["s", "scaled_perimeter", "error_bound"])?;
            for r in &probe.rows {
                w.write_record([r.s.to_string(), fmt(r.scaled), format!("{:.6e}", r.error_bound)])?;
            }
            w.flush()?;
            out.json("gamma.json", &probe)?;
        }
    }
    Ok(())
}

/// Machine-readable error for stderr.
pub fn error_json(kind: &str, message: &str, code: i32) -> String {
    serde_json::json!({"schema": SCHEMA, "error": {"kind": kind, "message": message, "exit_code": code}}).to_string()
}

/// Parse argv, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.render().to_string();
            eprintln!("{}", error_json("usage", msg.trim(), 2));
            return 2;
        }
    };
    let cfg = match build_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string(), 2));
            return 2;
        }
    };
    match run(cfg) {
        Ok(m) => {
            let mut so = std::io::stdout().lock();
            let _ = writeln!(so, "{}", Path::new(&m.config.out).join("manifest.json").display());
            0
        }
        Err(e) => {
            let code = if e.is_usage() { 2 } else { 1 };
            eprintln!("{}", error_json(e.kind(), &e.to_string(), code));
            code
        }
    }
}

fn build_config(cli: Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, cli.command) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(command)) => ExperimentConfig {
            schema: SCHEMA,
            seed: default_seed(),
            workers: None,
            out: default_out(),
            command,
        },
        (Some(_), Some(_)) => {
            return Err(Error::InvalidParameter("give either --config or a subcommand, not both".into()))
        }
        (None, None) => return Err(Error::InvalidParameter("missing subcommand (try --help)".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_come_from_clap() {
        let a = HalfspaceArgs::default();
        assert_eq!(a.intervals, 32);
        assert_eq!(a.params.dim, 2);
        assert_eq!(ExpansionArgs::default().eps, vec![0.2, 0.1, 0.05, 0.02]);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig {
            schema: SCHEMA,
            seed: 3,
            workers: Some(1),
            out: PathBuf::from("x"),
            command: Command::Spectrum(SpectrumArgs {
                params: ParamArgs { dim: 3, s: 0.1 },
                kmax: 4,
            }),
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        // a sparse hand-written config fills in defaults
        let sparse = r#"{"command": "halfspace", "args": {"volume": 2.0}}"#;
        match ExperimentConfig::from_json(sparse).unwrap().command {
            Command::Halfspace(h) => {
                assert_eq!(h.volume, 2.0);
                assert_eq!(h.intervals, 32);
            }
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn bad_schema_is_rejected() {
        let text = r#"{"schema": 9, "command": "spectrum", "args": {}}"#;
        assert!(ExperimentConfig::from_json(text).unwrap_err().is_usage());
    }

    #[test]
    fn point_lists_parse() {
        assert_eq!(parse_point_list("0.3,0;1,2").unwrap(), vec![vec![0.3, 0.0], vec![1.0, 2.0]]);
        assert!(parse_point_list("0.3,x").is_err());
    }
}
