//! JSON experiment specs, the command runner and its artifacts.
//!
//! A spec names one command and its configuration:
//!
//! ```json
//! {
//!   "seed": 7,
//!   "experiment": {
//!     "command": "pressure",
//!     "layout": { "sizes": [1, 1], "cutoff": 2.5 },
//!     "h": "0.1*x[1,1]*x[2,1] + 0.1*x[2,1]*x[1,1]",
//!     "marginals": ["bernoulli:1", "semicircle:2"],
//!     "dims": [2, 4, 8]
//!   }
//! }
//! ```
//!
//! Every run writes `report.json`, the command's CSV traces and
//! `manifest.json` into the output directory. Reports carry the config hash,
//! the seed and the tolerances used; they contain no timestamps.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::gibbs::{log_partition, run_chain, GibbsSettings, Hamiltonian};
use crate::moments::{empirical_orbital_state, free_product, moment_distance, Alphabet};
use crate::ncpoly::{liberation_gradient, parse};
use crate::pressure::{
    eta_estimate, finite_n_property_suite, pressure_estimate, pressure_relation_check, OptimizerSettings,
    SharedSamples,
};
use crate::randmat::{haar_unitary, quantile_microstate};
use crate::sdsolver::{liberation_check, pushforward_x, sd_solve, SdProblem};
use crate::stats::{child_seed, mean};
use crate::{CMatrix, Error, FamilyLayout, MomentTable, PolyF64, Result, SpectralMeasure};

/// Exit code of a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code for invalid specs and inputs.
pub const EXIT_INVALID: i32 = 2;
/// Exit code for numeric non-convergence; partial artifacts are written.
pub const EXIT_NONCONVERGED: i32 = 3;
/// Exit code for I/O and other failures.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub experiment: Command,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Pressure(PressureSpec),
    Eta(EtaSpec),
    Gibbs(GibbsSpec),
    Sd(SdSpec),
    Freeness(FreenessSpec),
    Liberation(SdSpec),
    PropertySuite(PropertySuiteSpec),
    RelationCheck(RelationSpec),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Pressure(_) => "pressure",
            Command::Eta(_) => "eta",
            Command::Gibbs(_) => "gibbs",
            Command::Sd(_) => "sd",
            Command::Freeness(_) => "freeness",
            Command::Liberation(_) => "liberation",
            Command::PropertySuite(_) => "property-suite",
            Command::RelationCheck(_) => "relation-check",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    /// Number of variables in each family.
    pub sizes: Vec<usize>,
    pub cutoff: f64,
}

/// Distribution of one family: a measure spec (`semicircle:2`,
/// `bernoulli:1`, `arcsine:a,b`, `atomic:w@p,...`) for single-variable
/// families, or one spec per variable.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Marginal {
    Single(String),
    PerVariable(Vec<String>),
}

impl Marginal {
    fn specs(&self) -> Vec<&str> {
        match self {
            Marginal::Single(s) => vec![s.as_str()],
            Marginal::PerVariable(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

/// Marginal of one `z` family for the SD solver: a measure spec or a
/// moment-table file over the `(u, z)` alphabet.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tau0Spec {
    Measure(String),
    File { file: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureSpec {
    pub layout: LayoutSpec,
    pub h: String,
    pub marginals: Vec<Marginal>,
    pub dims: Vec<usize>,
    #[serde(default)]
    pub settings: GibbsSettings,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSpec {
    pub layout: LayoutSpec,
    pub marginals: Vec<Marginal>,
    pub dim: usize,
    pub basis_degree: usize,
    #[serde(default = "default_samples")]
    pub samples_per_family: usize,
    /// Moment table over `x`; the free product of the marginals if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
}

fn default_samples() -> usize {
    24
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Orbital,
    Matrix,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSpec {
    pub layout: LayoutSpec,
    pub h: String,
    #[serde(default = "default_ensemble")]
    pub ensemble: EnsembleKind,
    /// Required for the orbital ensemble.
    #[serde(default)]
    pub marginals: Vec<Marginal>,
    pub dim: usize,
    #[serde(default)]
    pub settings: GibbsSettings,
    #[serde(default = "default_record_degree")]
    pub record_degree: usize,
    #[serde(default)]
    pub log_partition: bool,
}

fn default_ensemble() -> EnsembleKind {
    EnsembleKind::Orbital
}

fn default_record_degree() -> usize {
    2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdSpec {
    pub layout: LayoutSpec,
    pub h: String,
    pub tau0: Vec<Tau0Spec>,
    #[serde(default = "default_sd_degree")]
    pub degree: usize,
    #[serde(default = "default_sd_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_sd_iterations")]
    pub max_iter: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_closure_depth")]
    pub closure_depth: usize,
    /// Degree of the reported push-forward to the `x` alphabet.
    #[serde(default = "default_pushforward")]
    pub pushforward_degree: usize,
    /// Length of the `x` test words of the liberation check.
    #[serde(default = "default_liberation_degree")]
    pub liberation_degree: usize,
}

fn default_sd_degree() -> usize {
    8
}
fn default_sd_tolerance() -> f64 {
    1e-10
}
fn default_sd_iterations() -> usize {
    200
}
fn default_damping() -> f64 {
    0.5
}
fn default_closure_depth() -> usize {
    4
}
fn default_pushforward() -> usize {
    4
}
fn default_liberation_degree() -> usize {
    3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreenessSpec {
    pub layout: LayoutSpec,
    pub marginals: Vec<String>,
    pub dim: usize,
    #[serde(default = "default_conjugations")]
    pub conjugations: usize,
    #[serde(default = "default_freeness_degree")]
    pub degree: usize,
}

fn default_conjugations() -> usize {
    20
}
fn default_freeness_degree() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertySuiteSpec {
    pub layout: LayoutSpec,
    pub marginals: Vec<Marginal>,
    pub dim: usize,
    #[serde(default = "default_suite_samples")]
    pub samples_per_family: usize,
    pub h1: String,
    pub h2: String,
    #[serde(default = "default_split")]
    pub split: usize,
}

fn default_suite_samples() -> usize {
    8
}
fn default_split() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub layout: LayoutSpec,
    pub h: String,
    pub dim: usize,
    #[serde(default)]
    pub settings: GibbsSettings,
}

/// Tolerances written into every report.
pub const PROPERTY_TOLERANCE: f64 = 1e-9;
pub const RELATION_SIGMAS: f64 = 3.0;
pub const LIBERATION_FACTOR: f64 = 10.0;
/// Freeness bound is `FREENESS_CONSTANT / N`.
pub const FREENESS_CONSTANT: f64 = 10.0;

pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read spec {}: {e}", path.display())))?;
    parse_spec(&text)
}

/// SHA-256 of the canonical JSON form of the spec, output directory excluded.
pub fn config_hash(spec: &ExperimentSpec) -> String {
    let canonical = ExperimentSpec { output: None, ..spec.clone() };
    let bytes = serde_json::to_vec(&canonical).expect("spec serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Poly(_) | Error::InvalidArgument(_) | Error::Dimension(_) | Error::Json(_) => EXIT_INVALID,
        Error::NonConvergence(_) | Error::Numerical(_) => EXIT_NONCONVERGED,
        Error::Io(_) => EXIT_FAILURE,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub message: String,
}

/// Dry-run validation result.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub command: String,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.ok).map(|c| format!("{}: {}", c.name, c.message)).collect()
    }
}

struct Checker {
    checks: Vec<Check>,
}

impl Checker {
    fn record<T>(&mut self, name: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => {
                self.checks.push(Check { name: name.into(), ok: true, message: "ok".into() });
                Some(v)
            }
            Err(e) => {
                self.checks.push(Check { name: name.into(), ok: false, message: e.to_string() });
                None
            }
        }
    }

    fn layout(&mut self, l: &LayoutSpec) -> Option<Arc<FamilyLayout>> {
        self.record("layout", build_layout(l))
    }

    fn poly(&mut self, name: &str, text: &str, layout: &Arc<FamilyLayout>) -> Option<PolyF64> {
        let p = self.record(name, parse_poly(text, layout))?;
        self.record(&format!("{name} self-adjoint"), check_self_adjoint(&p))?;
        Some(p)
    }

    fn marginals(&mut self, marginals: &[Marginal], layout: &Arc<FamilyLayout>) {
        if marginals.len() != layout.n() {
            self.record::<()>(
                "marginals",
                Err(Error::dim(format!("{} marginals for {} families", marginals.len(), layout.n()))),
            );
            return;
        }
        for (i, m) in marginals.iter().enumerate() {
            let specs = m.specs();
            if specs.len() != layout.r(i) {
                self.record::<()>(
                    &format!("marginal {}", i + 1),
                    Err(Error::dim(format!("{} measures for {} variables", specs.len(), layout.r(i)))),
                );
                continue;
            }
            for s in specs {
                self.measure(&format!("marginal {}", i + 1), s, layout.cutoff());
            }
        }
    }

    fn measure(&mut self, name: &str, spec: &str, cutoff: f64) {
        if let Some(mu) = self.record(name, SpectralMeasure::parse(spec)) {
            let b = mu.support_bound();
            self.record(
                &format!("{name} realizable"),
                if b <= cutoff {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("support bound {b} of '{spec}' exceeds the cutoff {cutoff}")))
                },
            );
        }
    }

    fn positive(&mut self, name: &str, v: usize) {
        self.record(name, if v > 0 { Ok(()) } else { Err(Error::invalid("must be positive")) });
    }

    fn file(&mut self, name: &str, path: &Path) {
        self.record(
            name,
            if path.is_file() {
                Ok(())
            } else {
                Err(Error::invalid(format!("file {} does not exist", path.display())))
            },
        );
    }
}

fn build_layout(l: &LayoutSpec) -> Result<Arc<FamilyLayout>> {
    Ok(Arc::new(FamilyLayout::new(l.sizes.clone(), l.cutoff)?))
}

fn parse_poly(text: &str, layout: &Arc<FamilyLayout>) -> Result<PolyF64> {
    let p: PolyF64 = parse(text, layout)?;
    if !p.is_x_alphabet() {
        return Err(Error::invalid(format!("'{text}' must be written in x letters")));
    }
    Ok(p)
}

fn check_self_adjoint(p: &PolyF64) -> Result<()> {
    for (w, c) in p.terms() {
        if p.coeff(&w.adjoint()) != c.conj() {
            return Err(Error::invalid(format!(
                "not self-adjoint: the coefficient of {} is not the conjugate of that of {w}",
                w.adjoint()
            )));
        }
    }
    Ok(())
}

/// Grammar, layout bounds, self-adjointness, marginal realizability and
/// file existence; no computation.
pub fn verify(spec: &ExperimentSpec) -> VerifyReport {
    let mut c = Checker { checks: Vec::new() };
    match &spec.experiment {
        Command::Pressure(s) => {
            if let Some(l) = c.layout(&s.layout) {
                c.poly("h", &s.h, &l);
                c.marginals(&s.marginals, &l);
            }
            c.record("dims", if s.dims.is_empty() || s.dims.contains(&0) {
                Err(Error::invalid("dims must be a nonempty list of positive sizes"))
            } else {
                Ok(())
            });
        }
        Command::Eta(s) => {
            if let Some(l) = c.layout(&s.layout) {
                c.marginals(&s.marginals, &l);
                if s.target.is_none() && l.sizes().iter().any(|&r| r != 1) {
                    c.record::<()>("target", Err(Error::invalid("the free target needs single-variable families")));
                }
            }
            if let Some(t) = &s.target {
                c.file("target", t);
            }
            c.positive("dim", s.dim);
            c.positive("samples_per_family", s.samples_per_family);
        }
        Command::Gibbs(s) => {
            if let Some(l) = c.layout(&s.layout) {
                c.poly("h", &s.h, &l);
                if s.ensemble == EnsembleKind::Orbital {
                    c.marginals(&s.marginals, &l);
                }
            }
            c.positive("dim", s.dim);
        }
        Command::Sd(s) | Command::Liberation(s) => {
            if let Some(l) = c.layout(&s.layout) {
                c.poly("h", &s.h, &l);
                if s.tau0.len() != l.n() {
                    c.record::<()>("tau0", Err(Error::dim(format!("{} marginals for {} families", s.tau0.len(), l.n()))));
                }
                for (i, t) in s.tau0.iter().enumerate() {
                    let name = format!("tau0 {}", i + 1);
                    match t {
                        Tau0Spec::Measure(m) => {
                            if i < l.n() && l.r(i) != 1 {
                                c.record::<()>(&name, Err(Error::invalid("measure marginals need single-variable families")));
                            }
                            c.measure(&name, m, l.cutoff());
                        }
                        Tau0Spec::File { file } => c.file(&name, file),
                    }
                }
            }
        }
        Command::Freeness(s) => {
            if let Some(l) = c.layout(&s.layout) {
                let m: Vec<Marginal> = s.marginals.iter().cloned().map(Marginal::Single).collect();
                c.marginals(&m, &l);
            }
            c.positive("dim", s.dim);
            c.positive("conjugations", s.conjugations);
        }
        Command::PropertySuite(s) => {
            if let Some(l) = c.layout(&s.layout) {
                c.poly("h1", &s.h1, &l);
                c.poly("h2", &s.h2, &l);
                c.marginals(&s.marginals, &l);
            }
            c.positive("dim", s.dim);
            c.positive("samples_per_family", s.samples_per_family);
        }
        Command::RelationCheck(s) => {
            if let Some(l) = c.layout(&s.layout) {
                c.poly("h", &s.h, &l);
            }
            c.positive("dim", s.dim);
        }
    }
    VerifyReport { ok: c.checks.iter().all(|k| k.ok), command: spec.experiment.name().into(), checks: c.checks }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NonConverged,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::NonConverged => EXIT_NONCONVERGED,
        }
    }
}

/// Result of a run: the report written to `report.json` and the artifact paths.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: Status,
    pub report: Value,
    pub files: Vec<PathBuf>,
}

struct Output {
    status: Status,
    tolerances: Value,
    result: Value,
    csv: Vec<(String, String)>,
    extra: Vec<(String, Value)>,
}

impl Output {
    fn new(result: Value) -> Self {
        Output { status: Status::Ok, tolerances: json!({}), result, csv: Vec::new(), extra: Vec::new() }
    }
}

/// Validates, runs and writes the artifacts into `out`. `threads` sizes the
/// worker pool (all logical cores if `None`); results do not depend on it.
pub fn run(spec: &ExperimentSpec, out: &Path, threads: Option<usize>) -> Result<RunOutcome> {
    let v = verify(spec);
    if !v.ok {
        return Err(Error::invalid(v.failures().join("; ")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build the worker pool: {e}")))?;
    let output = pool.install(|| execute(spec))?;
    write_artifacts(spec, out, threads, output)
}

fn write_artifacts(spec: &ExperimentSpec, out: &Path, threads: Option<usize>, o: Output) -> Result<RunOutcome> {
    std::fs::create_dir_all(out)?;
    let hash = config_hash(spec);
    let report = json!({
        "command": spec.experiment.name(),
        "config_hash": hash,
        "seed": spec.seed,
        "status": o.status,
        "tolerances": o.tolerances,
        "result": o.result,
    });
    let mut files: Vec<(String, Vec<u8>)> = vec![("report.json".into(), pretty(&report)?)];
    for (name, v) in &o.extra {
        files.push((name.clone(), pretty(v)?));
    }
    for (name, text) in o.csv {
        files.push((name, text.into_bytes()));
    }
    let mut paths = Vec::new();
    let mut listing = Vec::new();
    for (name, bytes) in &files {
        let p = out.join(name);
        std::fs::write(&p, bytes)?;
        listing.push(json!({ "name": name, "sha256": hex::encode(Sha256::digest(bytes)) }));
        paths.push(p);
    }
    let manifest = json!({
        "config_hash": hash,
        "seed": spec.seed,
        "threads": threads,
        "versions": { "orbital-core": env!("CARGO_PKG_VERSION") },
        "files": listing,
    });
    let p = out.join("manifest.json");
    std::fs::write(&p, pretty(&manifest)?)?;
    paths.push(p);
    Ok(RunOutcome { status: o.status, report, files: paths })
}

fn pretty(v: &Value) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn measures(specs: &[&str]) -> Result<Vec<SpectralMeasure>> {
    specs.iter().map(|s| SpectralMeasure::parse(s)).collect()
}

/// Quantile microstates `[family][variable]` at size `n`.
fn microstates(marginals: &[Marginal], n: usize) -> Result<Vec<Vec<CMatrix>>> {
    marginals
        .iter()
        .map(|m| measures(&m.specs())?.iter().map(|mu| quantile_microstate(mu, n)).collect())
        .collect()
}

fn single_measures(marginals: &[Marginal]) -> Result<Vec<SpectralMeasure>> {
    marginals
        .iter()
        .map(|m| match m {
            Marginal::Single(s) => SpectralMeasure::parse(s),
            Marginal::PerVariable(v) if v.len() == 1 => SpectralMeasure::parse(&v[0]),
            Marginal::PerVariable(_) => Err(Error::invalid("expected single-variable families")),
        })
        .collect()
}

fn free_target(layout: &Arc<FamilyLayout>, mus: &[SpectralMeasure], m: usize) -> Result<MomentTable> {
    let marg = mus
        .iter()
        .enumerate()
        .map(|(i, mu)| MomentTable::from_measure(layout, Alphabet::X, i, mu, m))
        .collect::<Result<Vec<_>>>()?;
    free_product(&marg, m)
}

fn execute(spec: &ExperimentSpec) -> Result<Output> {
    let seed = spec.seed;
    match &spec.experiment {
        Command::Pressure(s) => {
            let layout = build_layout(&s.layout)?;
            let h = parse_poly(&s.h, &layout)?;
            let micro = s.dims.iter().map(|&n| microstates(&s.marginals, n)).collect::<Result<Vec<_>>>()?;
            let est = pressure_estimate(&Hamiltonian::Single(h), &micro, &s.settings.with_seed(seed), "quantile")?;
            let mut csv = String::from("n,log_z,stderr,normalized,normalized_stderr\n");
            for p in &est.points {
                csv.push_str(&format!("{},{:e},{:e},{:e},{:e}\n", p.n, p.log_z, p.stderr, p.normalized, p.normalized_stderr));
            }
            let mut o = Output::new(serde_json::to_value(&est)?);
            o.csv.push(("pressure.csv".into(), csv));
            Ok(o)
        }
        Command::Eta(s) => {
            let layout = build_layout(&s.layout)?;
            let target = match &s.target {
                Some(path) => MomentTable::from_json(&serde_json::from_str(&std::fs::read_to_string(path)?)?, &layout)?,
                None => free_target(&layout, &single_measures(&s.marginals)?, s.basis_degree)?,
            };
            let micro = microstates(&s.marginals, s.dim)?;
            let samples = SharedSamples::draw(&layout, &micro, s.samples_per_family, seed)?;
            let est = eta_estimate(&target, &samples, s.basis_degree, &s.optimizer)?;
            let mut csv = String::from("run,best_value\n");
            for (k, v) in est.trace.iter().enumerate() {
                csv.push_str(&format!("{k},{v:e}\n"));
            }
            let mut o = Output::new(serde_json::to_value(&est)?);
            o.tolerances = json!({ "optimizer": s.optimizer });
            if !est.converged && est.divergence.is_none() {
                o.status = Status::NonConverged;
            }
            o.csv.push(("eta_trace.csv".into(), csv));
            Ok(o)
        }
        Command::Gibbs(s) => {
            let layout = build_layout(&s.layout)?;
            let h = Hamiltonian::Single(parse_poly(&s.h, &layout)?);
            let settings = s.settings.with_seed(seed);
            let mut config = match s.ensemble {
                EnsembleKind::Orbital => settings.orbital(h, microstates(&s.marginals, s.dim)?),
                EnsembleKind::Matrix => settings.matrix(h, s.dim, layout.cutoff()),
            };
            config.record_degree = Some(s.record_degree);
            let lz = if s.log_partition { Some(log_partition(&config, settings.method)?) } else { None };
            let chain = run_chain(config)?;
            let (table, errs) = chain.mean_tracial_state(s.record_degree)?;
            let moments: Vec<Value> = errs
                .iter()
                .map(|(w, e)| {
                    let v = table.value(w)?;
                    Ok(json!({ "word": w.to_string(), "re": v.re, "im": v.im, "stderr": e }))
                })
                .collect::<Result<_>>()?;
            let r = chain.records();
            let mut csv = String::from("sweep,energy,acceptance\n");
            for k in 0..r.sweeps.len() {
                csv.push_str(&format!("{},{:e},{:e}\n", r.sweeps[k], r.energies[k], r.acceptance[k]));
            }
            let mut o = Output::new(json!({
                "ensemble": s.ensemble,
                "dim": s.dim,
                "acceptance_rate": chain.acceptance_rate(),
                "final_step": chain.step_size(),
                "mean_energy": mean(&r.energies),
                "mean_tracial_state": moments,
                "log_partition": lz,
            }));
            o.tolerances = json!({ "settings": settings });
            o.csv.push(("energy.csv".into(), csv));
            Ok(o)
        }
        Command::Sd(s) => run_sd(s, false),
        Command::Liberation(s) => run_sd(s, true),
        Command::Freeness(s) => {
            let layout = build_layout(&s.layout)?;
            let mus = measures(&s.marginals.iter().map(String::as_str).collect::<Vec<_>>())?;
            let micro: Vec<Vec<CMatrix>> =
                mus.iter().map(|mu| Ok(vec![quantile_microstate(mu, s.dim)?])).collect::<Result<_>>()?;
            let target = free_target(&layout, &mus, s.degree)?;
            let mut distances = Vec::with_capacity(s.conjugations);
            for k in 0..s.conjugations {
                let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, &[k as u64]));
                let us = (0..layout.n()).map(|_| haar_unitary::<f64, _>(s.dim, &mut rng)).collect::<Result<Vec<_>>>()?;
                let state = empirical_orbital_state(&layout, &us, &micro, s.degree)?;
                distances.push(moment_distance(&state, &target, s.degree)?);
            }
            let average = mean(&distances);
            let bound = FREENESS_CONSTANT / s.dim as f64;
            let mut csv = String::from("conjugation,distance\n");
            for (k, d) in distances.iter().enumerate() {
                csv.push_str(&format!("{k},{d:e}\n"));
            }
            let mut o = Output::new(json!({
                "dim": s.dim,
                "degree": s.degree,
                "distances": distances,
                "average": average,
                "bound": bound,
                "pass": average <= bound,
            }));
            o.tolerances = json!({ "freeness_bound": format!("{FREENESS_CONSTANT}/N") });
            o.csv.push(("freeness.csv".into(), csv));
            Ok(o)
        }
        Command::PropertySuite(s) => {
            let layout = build_layout(&s.layout)?;
            let h1 = parse_poly(&s.h1, &layout)?;
            let h2 = parse_poly(&s.h2, &layout)?;
            let micro = microstates(&s.marginals, s.dim)?;
            let samples = SharedSamples::draw(&layout, &micro, s.samples_per_family, seed)?;
            let rep = finite_n_property_suite(&samples, &h1, &h2, s.split)?;
            let pass = rep.max_violation <= PROPERTY_TOLERANCE;
            let mut o = Output::new(json!({ "report": rep, "pass": pass }));
            o.tolerances = json!({ "property": PROPERTY_TOLERANCE });
            Ok(o)
        }
        Command::RelationCheck(s) => {
            let layout = build_layout(&s.layout)?;
            let h = parse_poly(&s.h, &layout)?;
            let rep = pressure_relation_check(&h, s.dim, &s.settings.with_seed(seed))?;
            let pass = rep.margin >= -RELATION_SIGMAS * rep.stderr;
            let mut o = Output::new(json!({ "report": rep, "pass": pass }));
            o.tolerances = json!({ "sigmas": RELATION_SIGMAS, "settings": s.settings.with_seed(seed) });
            Ok(o)
        }
    }
}

fn run_sd(s: &SdSpec, liberation: bool) -> Result<Output> {
    let layout = build_layout(&s.layout)?;
    let h = parse_poly(&s.h, &layout)?;
    let tau0 = s
        .tau0
        .iter()
        .enumerate()
        .map(|(i, t)| match t {
            Tau0Spec::Measure(m) => MomentTable::from_measure(
                &layout,
                Alphabet::UZ,
                i,
                &SpectralMeasure::parse(m)?,
                crate::sdsolver::MEASURE_TABLE_DEGREE,
            ),
            Tau0Spec::File { file } => {
                MomentTable::from_json(&serde_json::from_str(&std::fs::read_to_string(file)?)?, &layout)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut problem = SdProblem::new(h.clone(), tau0, s.degree);
    problem.tolerance = s.tolerance;
    problem.max_iter = s.max_iter;
    problem.damping = s.damping;
    problem.closure_depth = s.closure_depth;
    let mut sol = sd_solve(&problem)?;
    let push = pushforward_x(&mut sol, s.pushforward_degree)?;
    let mut result = json!({
        "converged": sol.report.converged,
        "iterations": sol.report.iterations,
        "residual": sol.report.residual,
        "unknowns": sol.report.unknowns,
        "closure_nodes": sol.report.closure_nodes,
        "contraction_ratios": sol.report.contraction_ratios,
        "warnings": sol.report.warnings,
        "pushforward": push.to_json(),
    });
    let mut tolerances = json!({
        "residual": s.tolerance,
        "damping": s.damping,
        "closure_depth": s.closure_depth,
    });
    if liberation {
        let deviation = liberation_check(&mut sol, &h, s.liberation_degree)?;
        let bound = LIBERATION_FACTOR * s.tolerance;
        let gradients = (0..layout.n())
            .map(|i| Ok(liberation_gradient(i, &h)?.to_string()))
            .collect::<Result<Vec<_>>>()?;
        result["liberation"] = json!({
            "degree": s.liberation_degree,
            "gradients": gradients,
            "deviation": deviation,
            "bound": bound,
            "pass": deviation <= bound,
        });
        tolerances["liberation"] = json!(bound);
    }
    let mut o = Output::new(result);
    o.tolerances = tolerances;
    if !sol.report.converged {
        o.status = Status::NonConverged;
    }
    o.csv.push(("convergence.csv".into(), sol.report.to_csv()));
    o.extra.push(("sd_table.json".into(), sol.table.to_json()));
    Ok(o)
}
