//! Finite-N orbital free pressure, its Legendre transform, the double
//! pressure, the penalty polynomial and the pressure relation between the
//! matrix and orbital ensembles.

use std::cell::Cell;
use std::sync::Arc;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gibbs::{self, log_partition, word_trace, GibbsSettings, Hamiltonian};
use crate::moments::{chi_single, microstate_check, trace_classes, MomentTable};
use crate::ncpoly::{norm_bound, same_layout, FamilyLayout, Word};
use crate::randmat::{self, quantile_microstate, MatrixTuple};
use crate::stats::{child_seed, linear_fit, log_mean_exp, LinearFit};
use crate::{CMatrix, Error, PolyF64, Result, SpectralMeasure, TensorPolyF64, C64};

/// `sum |c| R^(weight)` over the terms (both legs for tensors).
pub fn hamiltonian_norm_bound(h: &Hamiltonian, cutoff: f64) -> f64 {
    match h {
        Hamiltonian::Single(p) => norm_bound(p, cutoff),
        Hamiltonian::Double(t) => t
            .terms()
            .map(|(a, b, c)| c.norm() * cutoff.powi((a.weight() + b.weight()) as i32))
            .sum(),
    }
}

fn describe(h: &Hamiltonian) -> String {
    match h {
        Hamiltonian::Single(p) => p.to_string(),
        Hamiltonian::Double(t) => t.to_string(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PressurePoint {
    pub n: usize,
    pub log_z: f64,
    pub stderr: f64,
    /// `log Z / N^2`.
    pub normalized: f64,
    pub normalized_stderr: f64,
}

/// Per-N normalized log-partition values with an affine-in-`1/N` fit.
#[derive(Clone, Debug, Serialize)]
pub struct PressureEstimate {
    pub h: String,
    pub source: String,
    pub points: Vec<PressurePoint>,
    /// Fit of `log Z / N^2 = a + b / N`; `a` is a trend, not a limit.
    pub extrapolation: Option<LinearFit>,
    pub norm_bound: f64,
}

impl PressureEstimate {
    /// All normalized values lie in `[-bound, bound]` up to `slack` standard errors.
    pub fn within_range(&self, slack: f64) -> bool {
        self.points
            .iter()
            .all(|p| p.normalized.abs() <= self.norm_bound + slack * p.normalized_stderr + 1e-12)
    }
}

/// Orbital pressure trajectory: for each entry of `microstates` (one tuple
/// per matrix size), `(1/N^2) log int exp(-N^2 beta tr h(V Xi V*)) dV`.
pub fn pressure_estimate(
    h: &Hamiltonian,
    microstates: &[Vec<Vec<CMatrix>>],
    settings: &GibbsSettings,
    source: &str,
) -> Result<PressureEstimate> {
    if microstates.is_empty() {
        return Err(Error::invalid("no matrix sizes given"));
    }
    let points = microstates
        .par_iter()
        .map(|micro| {
            let n = micro.first().and_then(|f| f.first()).map(|m| m.nrows()).unwrap_or(0);
            let config = settings.with_seed(child_seed(settings.seed, &[n as u64])).orbital(h.clone(), micro.clone());
            let lz = log_partition(&config, settings.method)?;
            let n2 = (n * n) as f64;
            Ok(PressurePoint {
                n,
                log_z: lz.value,
                stderr: lz.stderr,
                normalized: lz.value / n2,
                normalized_stderr: lz.stderr / n2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| 1.0 / p.n as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.normalized).collect();
    Ok(PressureEstimate {
        h: describe(h),
        source: source.to_string(),
        extrapolation: linear_fit(&x, &y),
        norm_bound: settings.beta * hamiltonian_norm_bound(h, h.layout().cutoff()),
        points,
    })
}

/// Pressure trajectory of a double-trace test function.
pub fn double_pressure(
    h2: &TensorPolyF64,
    microstates: &[Vec<Vec<CMatrix>>],
    settings: &GibbsSettings,
    source: &str,
) -> Result<PressureEstimate> {
    pressure_estimate(&Hamiltonian::Double(h2.clone()), microstates, settings, source)
}

/// Penalty tensor
/// `(beta / delta^2) sum_{1 <= |w| <= m} (w - tau(w)) (x) (w - tau(w))*`
/// over all `x` words `w` of the layout.
pub fn penalty_poly(target: &MomentTable<f64>, m: usize, beta: f64, delta: f64) -> Result<TensorPolyF64> {
    if !(delta > 0.0) || beta < 0.0 {
        return Err(Error::invalid("penalty needs beta >= 0 and delta > 0"));
    }
    if target.degree() < m {
        return Err(Error::invalid("target degree below m"));
    }
    let layout = target.layout();
    let letters = layout.x_letters();
    let s = C64::new(beta / (delta * delta), 0.0);
    let mut terms = Vec::new();
    let mut words = vec![Word::unit()];
    for _ in 0..m {
        words = words
            .iter()
            .flat_map(|w| letters.iter().map(move |&g| w.mul(&Word::letter(g))))
            .collect();
        for w in &words {
            let t = target.value(w)?;
            let ws = w.adjoint();
            terms.push((w.clone(), ws.clone(), s));
            terms.push((w.clone(), Word::unit(), -s * t.conj()));
            terms.push((Word::unit(), ws, -s * t));
            terms.push((Word::unit(), Word::unit(), s * t.norm_sqr()));
        }
    }
    Ok(TensorPolyF64::from_terms(layout, terms)?)
}

/// Common random numbers for finite-N pressure comparisons: per family a
/// list of `K` Haar conjugates of the microstates; samples are all `K^n`
/// combinations, so the empirical measure is a product over families.
#[derive(Clone, Debug)]
pub struct SharedSamples {
    layout: Arc<FamilyLayout>,
    dim: usize,
    /// `[family][sample][slot]`.
    conjugated: Vec<Vec<Vec<CMatrix>>>,
}

impl SharedSamples {
    pub fn draw(
        layout: &Arc<FamilyLayout>,
        microstates: &[Vec<CMatrix>],
        per_family: usize,
        seed: u64,
    ) -> Result<Self> {
        let tuple = MatrixTuple::new(layout, microstates.to_vec(), None)?;
        if per_family == 0 {
            return Err(Error::invalid("at least one sample per family is required"));
        }
        let dim = tuple.dim();
        let conjugated = microstates
            .iter()
            .enumerate()
            .map(|(i, fam)| {
                let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, &[i as u64]));
                (0..per_family)
                    .map(|_| {
                        let v = randmat::haar_unitary::<f64, _>(dim, &mut rng)?;
                        Ok(fam.iter().map(|x| randmat::conjugate(&v, x)).collect())
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SharedSamples { layout: layout.clone(), dim, conjugated })
    }

    pub fn layout(&self) -> &Arc<FamilyLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.conjugated.iter().map(|f| f.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tuple(&self, mut k: usize) -> Vec<Vec<CMatrix>> {
        self.conjugated
            .iter()
            .map(|f| {
                let j = k % f.len();
                k /= f.len();
                f[j].clone()
            })
            .collect()
    }

    /// `tr_N(w)` for every sample (rows) and word (columns).
    pub fn word_traces(&self, words: &[Word]) -> Vec<Vec<C64>> {
        (0..self.len())
            .into_par_iter()
            .map(|k| {
                let t = self.tuple(k);
                words.iter().map(|w| word_trace(&t, w)).collect()
            })
            .collect()
    }

    /// `Re tr_N(h)` for every sample.
    pub fn trace_values(&self, h: &PolyF64) -> Result<Vec<f64>> {
        check_poly(h, &self.layout)?;
        let terms: Vec<(&Word, &C64)> = h.terms().collect();
        let words: Vec<Word> = terms.iter().map(|(w, _)| (*w).clone()).collect();
        Ok(self
            .word_traces(&words)
            .into_iter()
            .map(|row| row.iter().zip(&terms).map(|(t, (_, c))| (*c * t).re).sum())
            .collect())
    }

    /// Empirical normalized pressure `(1/N^2) log mean exp(-N^2 tr h)`.
    pub fn pressure(&self, h: &PolyF64) -> Result<f64> {
        Ok(self.pressure_of_traces(&self.trace_values(h)?))
    }

    fn pressure_of_traces(&self, traces: &[f64]) -> f64 {
        let n2 = (self.dim * self.dim) as f64;
        let e: Vec<f64> = traces.iter().map(|t| -n2 * t).collect();
        log_mean_exp(&e) / n2
    }
}

fn check_poly(h: &PolyF64, layout: &Arc<FamilyLayout>) -> Result<()> {
    if !same_layout(h.layout(), layout) {
        return Err(Error::dim("polynomial layout differs from the samples"));
    }
    if !h.is_x_alphabet() {
        return Err(Error::invalid("pressure test functions must be over the x alphabet"));
    }
    if !h.is_self_adjoint() {
        return Err(Error::invalid(format!("test function {h} is not self-adjoint")));
    }
    Ok(())
}

/// Violations of the finite-N pressure properties on one shared sample set;
/// each entry is 0 when the relation holds exactly.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyReport {
    pub n: usize,
    pub samples: usize,
    /// `max(0, |p(h1) - p(h2)| - ||h1 - h2||_R)`.
    pub lipschitz: f64,
    /// `max(0, p(h1 + h2^2) - p(h1))`.
    pub monotonicity: f64,
    /// `max(0, p((h1 + h2)/2) - (p(h1) + p(h2))/2)`.
    pub convexity: f64,
    /// `|p(a + b) - p(a) - p(b)|` for `a`, `b` supported on disjoint family groups.
    pub additivity: f64,
    /// `|p(h1 + c) - p(h1) + c|`.
    pub shift: f64,
    pub max_violation: f64,
}

/// Lipschitz, monotonicity, convexity, additivity and shift relations of the
/// empirical pressure. For additivity, `a` keeps the terms of `h1` in
/// families `< split` and `b` the terms of `h2` in families `>= split`.
pub fn finite_n_property_suite(
    samples: &SharedSamples,
    h1: &PolyF64,
    h2: &PolyF64,
    split: usize,
) -> Result<PropertyReport> {
    check_poly(h1, samples.layout())?;
    check_poly(h2, samples.layout())?;
    let p = |h: &PolyF64| samples.pressure(h);
    let (p1, p2) = (p(h1)?, p(h2)?);

    let bound = norm_bound(&(h1 - h2), samples.layout().cutoff());
    let lipschitz = ((p1 - p2).abs() - bound).max(0.0);

    let monotonicity = (p(&(h1 + &(h2 * h2)))? - p1).max(0.0);

    let half = C64::new(0.5, 0.0);
    let mid = &h1.scale(&half) + &h2.scale(&half);
    let convexity = (p(&mid)? - 0.5 * (p1 + p2)).max(0.0);

    let in_group = |w: &Word, low: bool| w.letters().iter().all(|g| (g.family() < split) == low);
    let a = h1.map_terms(|w, c| in_group(w, true).then(|| (w.clone(), *c)));
    let b = h2.map_terms(|w, c| in_group(w, false).then(|| (w.clone(), *c)));
    let additivity = (p(&(&a + &b))? - p(&a)? - p(&b)?).abs();

    let c = 0.37;
    let shifted = h1 + &PolyF64::constant(samples.layout(), C64::new(c, 0.0));
    let shift = (p(&shifted)? - p1 + c).abs();

    let max_violation = [lipschitz, monotonicity, convexity, additivity, shift].into_iter().fold(0.0, f64::max);
    Ok(PropertyReport {
        n: samples.dim(),
        samples: samples.len(),
        lipschitz,
        monotonicity,
        convexity,
        additivity,
        shift,
        max_violation,
    })
}

/// Self-adjoint basis of `x` polynomials of degree `1..=d`: for each trace
/// class `w`, `(w + w*)/2`, and `i(w - w*)/2` when `w*` is not in the class
/// of `w` (otherwise its trace vanishes identically).
pub fn self_adjoint_basis(layout: &Arc<FamilyLayout>, d: usize) -> Vec<PolyF64> {
    let mut out = Vec::new();
    let half = C64::new(0.5, 0.0);
    let ihalf = C64::new(0.0, 0.5);
    for w in trace_classes(&layout.x_letters(), d) {
        if w.is_unit() {
            continue;
        }
        let ws = w.adjoint();
        let re = PolyF64::from_terms(layout, [(w.clone(), half), (ws.clone(), half)]).unwrap();
        out.push(re);
        if ws.trace_class().0 != w {
            out.push(PolyF64::from_terms(layout, [(w.clone(), ihalf), (ws, -ihalf)]).unwrap());
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    pub initial_step: f64,
    /// Stop a run when the simplex value spread falls below this.
    pub tolerance: f64,
    pub restarts: usize,
    /// Largest ray scale `2^k` probed for divergence.
    pub ray_exponent: i32,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings { budget: 200, initial_step: 0.5, tolerance: 1e-10, restarts: 3, ray_exponent: 30 }
    }
}

/// Witness ray along which the objective decreases without bound.
#[derive(Clone, Debug, Serialize)]
pub struct Divergence {
    pub witness: String,
    /// Asymptotic slope of the objective along the ray.
    pub slope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EtaEstimate {
    pub n: usize,
    pub samples: usize,
    pub basis: Vec<String>,
    /// Best value of `tau(h_c) + p(h_c)` found.
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub evaluations: usize,
    /// Best value after each optimizer run.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub divergence: Option<Divergence>,
}

struct EtaObjective<'a> {
    target: &'a [f64],
    traces: &'a [Vec<f64>],
    n2: f64,
    calls: Cell<usize>,
}

impl EtaObjective<'_> {
    fn value(&self, c: &[f64]) -> f64 {
        self.calls.set(self.calls.get() + 1);
        let lin: f64 = c.iter().zip(self.target).map(|(a, b)| a * b).sum();
        let e: Vec<f64> = self
            .traces
            .iter()
            .map(|row| -self.n2 * row.iter().zip(c).map(|(t, a)| t * a).sum::<f64>())
            .collect();
        lin + log_mean_exp(&e) / self.n2
    }
}

impl CostFunction for &EtaObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, c: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.value(c))
    }
}

/// Legendre-transform estimate `inf_c tau(h_c) + p(h_c)` over the
/// self-adjoint basis of degree `<= d`, with the empirical pressure `p` on
/// shared samples (convex in `c`). Every basis ray is probed for unbounded
/// decrease first.
pub fn eta_estimate(
    target: &MomentTable<f64>,
    samples: &SharedSamples,
    d: usize,
    opts: &OptimizerSettings,
) -> Result<EtaEstimate> {
    if !same_layout(target.layout(), samples.layout()) {
        return Err(Error::dim("target layout differs from the samples"));
    }
    if target.degree() < d {
        return Err(Error::invalid("target degree below the basis degree"));
    }
    let basis = self_adjoint_basis(samples.layout(), d);
    let tvals: Vec<f64> = basis.iter().map(|p| target.apply(p).map(|v| v.re)).collect::<Result<_>>()?;
    let words: Vec<Word> = trace_classes(&samples.layout().x_letters(), d);
    let raw = samples.word_traces(&words);
    let traces: Vec<Vec<f64>> = raw
        .iter()
        .map(|row| {
            basis
                .iter()
                .map(|p| {
                    p.terms()
                        .map(|(w, c)| {
                            let (rep, conj) = w.trace_class();
                            let k = words.binary_search(&rep).expect("basis word outside the class list");
                            let t = if conj { row[k].conj() } else { row[k] };
                            (c * t).re
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let n2 = (samples.dim() * samples.dim()) as f64;
    let obj = EtaObjective { target: &tvals, traces: &traces, n2, calls: Cell::new(0) };
    let dim = basis.len();

    let mut best_c = vec![0.0; dim];
    let mut best = obj.value(&best_c);

    let mut divergence: Option<Divergence> = None;
    for b in 0..dim {
        for sign in [1.0, -1.0] {
            let ray = |a: f64| {
                let mut c = vec![0.0; dim];
                c[b] = sign * a;
                obj.value(&c)
            };
            let k = opts.ray_exponent;
            let (hi, lo) = (2f64.powi(k), 2f64.powi(k - 1));
            let slope = (ray(hi) - ray(lo)) / (hi - lo);
            if slope < -1e-6 && divergence.as_ref().is_none_or(|d| slope < d.slope) {
                let witness = basis[b].scale(&C64::new(sign, 0.0)).to_string();
                divergence = Some(Divergence { witness, slope });
            }
        }
    }

    let mut trace = Vec::new();
    let mut converged = dim == 0;
    if dim > 0 && divergence.is_none() {
        let mut step = opts.initial_step;
        for _ in 0..=opts.restarts {
            let used = obj.calls.get();
            if used >= opts.budget {
                break;
            }
            let mut simplex = vec![best_c.clone()];
            for b in 0..dim {
                let mut v = best_c.clone();
                v[b] += step;
                simplex.push(v);
            }
            let solver = NelderMead::new(simplex)
                .with_sd_tolerance(opts.tolerance)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            let iters = (opts.budget - used) as u64;
            let res = Executor::new(&obj, solver)
                .configure(|s| s.max_iters(iters))
                .run()
                .map_err(|e| Error::Numerical(e.to_string()))?;
            let st = res.state();
            if let Some(c) = &st.best_param {
                if st.best_cost < best {
                    best = st.best_cost;
                    best_c = c.clone();
                }
            }
            trace.push(best);
            converged = matches!(
                st.termination_status,
                argmin::core::TerminationStatus::Terminated(argmin::core::TerminationReason::SolverConverged)
            );
            step *= 0.5;
        }
    }
    Ok(EtaEstimate {
        n: samples.dim(),
        samples: samples.len(),
        basis: basis.iter().map(|p| p.to_string()).collect(),
        value: best,
        minimizer: best_c,
        evaluations: obj.calls.get(),
        trace,
        converged,
        divergence,
    })
}

/// Both sides of the equilibrium relation `eta(tau) = tau(h) + p(h)` at one
/// matrix size, plus the occupancy trajectory of the Gibbs chains.
#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumReport {
    pub eta: EtaEstimate,
    pub tau_h: f64,
    pub pressure: f64,
    /// `eta - (tau(h) + p(h))`, `<= 0` by construction of the infimum.
    pub gap: f64,
    /// `(N, occupancy fraction, log(fraction) / N^2)`.
    pub occupancy: Vec<(usize, f64, f64)>,
    /// Slope of `log(fraction)/N^2` against `N`.
    pub occupancy_slope: Option<f64>,
}

/// Occupancy parameters of the equilibrium check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OccupancySettings {
    pub m: usize,
    pub delta: f64,
}

pub fn equilibrium_check(
    target: &MomentTable<f64>,
    h: &PolyF64,
    samples: &SharedSamples,
    d: usize,
    opts: &OptimizerSettings,
    microstates: &[Vec<Vec<CMatrix>>],
    gibbs_settings: &GibbsSettings,
    occupancy: &OccupancySettings,
) -> Result<EquilibriumReport> {
    let eta = eta_estimate(target, samples, d, opts)?;
    let tau_h = target.apply(h)?.re;
    let pressure = samples.pressure(h)?;
    let occ = microstates
        .par_iter()
        .map(|micro| {
            let n = micro.first().and_then(|f| f.first()).map(|m| m.nrows()).unwrap_or(0);
            let mut config = gibbs_settings
                .with_seed(child_seed(gibbs_settings.seed, &[n as u64]))
                .orbital(Hamiltonian::Single(h.clone()), micro.clone());
            config.record_degree = Some(occupancy.m);
            let chain = gibbs::run_chain(config)?;
            let o = chain.occupancy(target, occupancy.m, occupancy.delta)?;
            Ok((n, o.fraction, o.log_per_n2))
        })
        .collect::<Result<Vec<_>>>()?;
    let finite: Vec<&(usize, f64, f64)> = occ.iter().filter(|o| o.2.is_finite()).collect();
    let slope = linear_fit(
        &finite.iter().map(|o| o.0 as f64).collect::<Vec<_>>(),
        &finite.iter().map(|o| o.2).collect::<Vec<_>>(),
    )
    .map(|f| f.slope);
    Ok(EquilibriumReport {
        gap: eta.value - (tau_h + pressure),
        eta,
        tau_h,
        pressure,
        occupancy: occ,
        occupancy_slope: slope,
    })
}

/// Largest single-variable free entropy on `[-R, R]` (arcsine law).
pub fn chi_max(cutoff: f64) -> f64 {
    (cutoff / 2.0).ln() + 0.75 + 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Finite-N comparison of the matrix pressure with the orbital pressure plus
/// the free entropies of the Gibbs marginals.
#[derive(Clone, Debug, Serialize)]
pub struct RelationReport {
    pub n: usize,
    /// `log(Z^h / Z^0)` of the matrix ensemble.
    pub matrix_log_ratio: f64,
    pub matrix_stderr: f64,
    /// `n chi_max(R) + log(Z^h / Z^0) / N^2`.
    pub matrix_pressure: f64,
    /// Orbital pressure with quantile microstates of the Gibbs marginals.
    pub orbital_pressure: f64,
    pub orbital_stderr: f64,
    pub chi: Vec<f64>,
    /// `matrix_pressure - orbital_pressure - sum chi`.
    pub margin: f64,
    /// Combined Monte Carlo standard error of the margin.
    pub stderr: f64,
}

/// Matrix-ensemble side uses the limiting log-volume `n chi_max(R)` of the
/// `h = 0` reference in place of its finite-N value.
pub fn pressure_relation_check(h: &PolyF64, n: usize, settings: &GibbsSettings) -> Result<RelationReport> {
    let layout = h.layout().clone();
    if layout.sizes().iter().any(|&r| r != 1) {
        return Err(Error::invalid("the pressure relation needs single-variable families"));
    }
    let cutoff = layout.cutoff();
    let ham = Hamiltonian::Single(h.clone());
    let n2 = (n * n) as f64;

    let matrix = settings.matrix(ham.clone(), n, cutoff);
    let ratio = log_partition(&matrix, settings.method)?;

    let mut sampler = settings.with_seed(child_seed(settings.seed, &[1])).matrix(ham.clone(), n, cutoff);
    sampler.record_spectra = true;
    let chain = gibbs::run_chain(sampler)?;
    let marginals = chain
        .records()
        .spectra
        .iter()
        .map(|s| SpectralMeasure::empirical(s.clone()))
        .collect::<Result<Vec<_>>>()?;
    let chi: Vec<f64> = marginals.iter().map(chi_single).collect();

    let micro = marginals
        .iter()
        .map(|mu| Ok(vec![quantile_microstate(mu, n)?]))
        .collect::<Result<Vec<_>>>()?;
    let orbital = settings.with_seed(child_seed(settings.seed, &[2])).orbital(ham, micro);
    let orb = log_partition(&orbital, settings.method)?;

    let matrix_pressure = layout.n() as f64 * chi_max(cutoff) + ratio.value / n2;
    let orbital_pressure = orb.value / n2;
    let margin = matrix_pressure - orbital_pressure - chi.iter().sum::<f64>();
    Ok(RelationReport {
        n,
        matrix_log_ratio: ratio.value,
        matrix_stderr: ratio.stderr,
        matrix_pressure,
        orbital_pressure,
        orbital_stderr: orb.stderr / n2,
        chi,
        margin,
        stderr: ratio.stderr.hypot(orb.stderr) / n2,
    })
}

/// Sup of the `N = 1` pressure `-h(xi)` over scalar tuples from `grid^k`
/// lying in the microstate set of `target`; `-inf` when the set is empty.
pub fn grid_sup_pressure(
    h: &PolyF64,
    target: &MomentTable<f64>,
    m: usize,
    delta: f64,
    grid: &[f64],
) -> Result<f64> {
    let layout = h.layout().clone();
    let vars = layout.total();
    let count = grid.len().checked_pow(vars as u32).ok_or_else(|| Error::invalid("grid too large"))?;
    let mut best = f64::NEG_INFINITY;
    for mut k in 0..count {
        let families: Vec<Vec<CMatrix>> = layout
            .sizes()
            .iter()
            .map(|&r| {
                (0..r)
                    .map(|_| {
                        let v = grid[k % grid.len()];
                        k /= grid.len();
                        CMatrix::from_element(1, 1, Complex::new(v, 0.0))
                    })
                    .collect()
            })
            .collect();
        let tuple = MatrixTuple::new(&layout, families, None)?;
        if microstate_check(&tuple, target, m, delta)? {
            best = best.max(-gibbs::Hamiltonian::Single(h.clone()).trace_value(&tuple)?);
        }
    }
    Ok(best)
}
