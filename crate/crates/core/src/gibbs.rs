//! Metropolis samplers for the orbital Gibbs micro-ensemble on `U(N)^n` and
//! the matrix Gibbs ensemble on norm-bounded Hermitian tuples, with
//! log-partition estimators and occupancy statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::moments::{trace_classes, traces_by_prefix, Alphabet, MomentTable};
use crate::ncpoly::{same_layout, FamilyLayout, Word};
use crate::randmat::{self, trace_n, trace_of_product, CMat, MatrixTuple};
use crate::stats::{batch_stderr, child_seed, effective_sample_size, log_mean_exp, mean};
use crate::{CMatrix, Error, PolyF64, Result, TensorPolyF64, C64};

/// Test function of the ensemble: a single-trace polynomial, energy
/// `N^2 tr_N(h)`, or a double-trace tensor, energy `N^2 (tr_N (x) tr_N)(h)`.
#[derive(Clone, Debug)]
pub enum Hamiltonian {
    Single(PolyF64),
    Double(TensorPolyF64),
}

impl Hamiltonian {
    pub fn layout(&self) -> &Arc<FamilyLayout> {
        match self {
            Hamiltonian::Single(p) => p.layout(),
            Hamiltonian::Double(t) => t.layout(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Hamiltonian::Single(p) => p.is_zero(),
            Hamiltonian::Double(t) => t.is_zero(),
        }
    }

    pub fn is_self_adjoint(&self) -> bool {
        match self {
            Hamiltonian::Single(p) => p.is_self_adjoint(),
            Hamiltonian::Double(t) => approx_eq_tensor(t, &t.adjoint()),
        }
    }

    /// Every word (every tensor leg) involves a single family, so the trace
    /// is invariant under independent conjugation of the families.
    pub fn is_conjugation_invariant(&self) -> bool {
        let single = |w: &Word| w.letters().windows(2).all(|p| p[0].family() == p[1].family());
        match self {
            Hamiltonian::Single(p) => p.terms().all(|(w, _)| single(w)),
            Hamiltonian::Double(t) => t.terms().all(|(a, b, _)| single(a) && single(b)),
        }
    }

    fn check_alphabet(&self) -> Result<()> {
        let ok = match self {
            Hamiltonian::Single(p) => p.terms().all(|(w, _)| !w.has_unitary()),
            Hamiltonian::Double(t) => t.terms().all(|(a, b, _)| !a.has_unitary() && !b.has_unitary()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("Gibbs test functions must not contain unitary letters"))
        }
    }

    /// `tr_N(h)` or `(tr_N (x) tr_N)(h)` on a tuple, real part; the imaginary
    /// part must vanish to 1e-9.
    pub fn trace_value(&self, tuple: &MatrixTuple<f64>) -> Result<f64> {
        let v = match self {
            Hamiltonian::Single(p) => randmat::trace_evaluate(p, tuple)?,
            Hamiltonian::Double(t) => randmat::double_trace_evaluate(t, tuple)?,
        };
        real_part(v)
    }
}

fn approx_eq_tensor(a: &TensorPolyF64, b: &TensorPolyF64) -> bool {
    let keys: BTreeSet<(Word, Word)> = a
        .terms()
        .chain(b.terms())
        .map(|(x, y, _)| (x.clone(), y.clone()))
        .collect();
    let scale = 1.0 + a.terms().map(|(_, _, c)| c.norm()).fold(0.0, f64::max);
    keys.iter().all(|(x, y)| (a.coeff(x, y) - b.coeff(x, y)).norm() <= 1e-12 * scale)
}

fn real_part(v: C64) -> Result<f64> {
    if v.im.abs() > 1e-9 * (1.0 + v.re.abs()) {
        return Err(Error::Numerical(format!("trace of a self-adjoint test function has imaginary part {}", v.im)));
    }
    Ok(v.re)
}

/// Which ensemble is sampled.
#[derive(Clone, Debug)]
pub enum Ensemble {
    /// Unitaries `V_i`, Haar reference measure, tuple `(V_i Xi_i V_i*)`.
    Orbital { microstates: Vec<Vec<CMatrix>> },
    /// Hermitian tuples with `||A_ij|| <= cutoff`, Lebesgue reference measure.
    Matrix { cutoff: f64 },
}

#[derive(Clone, Debug)]
pub struct GibbsConfig {
    pub ensemble: Ensemble,
    /// Matrix size `N`.
    pub dim: usize,
    pub h: Hamiltonian,
    /// Inverse-temperature scale multiplying `h`, in `[0, 1]`.
    pub beta: f64,
    /// Initial proposal size.
    pub step: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Adapt the step towards 30-50% acceptance during burn-in.
    pub autotune: bool,
    /// Record empirical `x`-moments up to this degree at every kept sweep.
    pub record_degree: Option<usize>,
    /// Record the spectra of the tuple at every kept sweep.
    pub record_spectra: bool,
}

impl GibbsConfig {
    pub fn orbital(h: Hamiltonian, microstates: Vec<Vec<CMatrix>>) -> Self {
        let dim = microstates.first().and_then(|f| f.first()).map(|m| m.nrows()).unwrap_or(0);
        GibbsConfig {
            ensemble: Ensemble::Orbital { microstates },
            dim,
            h,
            beta: 1.0,
            step: 0.5,
            sweeps: 2000,
            burn_in: 200,
            thin: 1,
            seed: 0,
            autotune: true,
            record_degree: None,
            record_spectra: false,
        }
    }

    pub fn matrix(h: Hamiltonian, dim: usize, cutoff: f64) -> Self {
        GibbsConfig {
            ensemble: Ensemble::Matrix { cutoff },
            dim,
            h,
            beta: 1.0,
            step: 0.5,
            sweeps: 2000,
            burn_in: 200,
            thin: 1,
            seed: 0,
            autotune: true,
            record_degree: None,
            record_spectra: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("step size must be positive"));
        }
        if self.sweeps <= self.burn_in {
            return Err(Error::invalid("sweeps must exceed burn-in"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thinning must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid("beta must lie in [0, 1]"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        if !self.h.is_self_adjoint() {
            return Err(Error::invalid("test function must be self-adjoint"));
        }
        self.h.check_alphabet()?;
        let layout = self.h.layout();
        if layout.n() > 64 {
            return Err(Error::invalid("at most 64 families are supported"));
        }
        match &self.ensemble {
            Ensemble::Orbital { microstates } => {
                if microstates.len() != layout.n() {
                    return Err(Error::dim("one microstate family per layout family is required"));
                }
                for (i, fam) in microstates.iter().enumerate() {
                    if fam.len() != layout.r(i) {
                        return Err(Error::dim(format!("family {} has the wrong number of microstates", i + 1)));
                    }
                    if fam.iter().any(|m| m.nrows() != self.dim || m.ncols() != self.dim) {
                        return Err(Error::dim("microstate of the wrong size"));
                    }
                }
            }
            Ensemble::Matrix { cutoff } => {
                if !(*cutoff > 0.0) {
                    return Err(Error::invalid("cutoff must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Sampler settings shared by the estimators built on top of the chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsSettings {
    pub beta: f64,
    pub step: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub autotune: bool,
    pub method: LogZMethod,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        GibbsSettings {
            beta: 1.0,
            step: 0.5,
            sweeps: 2000,
            burn_in: 200,
            thin: 1,
            seed: 0,
            autotune: true,
            method: LogZMethod::thermodynamic(),
        }
    }
}

impl GibbsSettings {
    fn apply(&self, mut c: GibbsConfig) -> GibbsConfig {
        c.beta = self.beta;
        c.step = self.step;
        c.sweeps = self.sweeps;
        c.burn_in = self.burn_in;
        c.thin = self.thin;
        c.seed = self.seed;
        c.autotune = self.autotune;
        c
    }

    pub fn orbital(&self, h: Hamiltonian, microstates: Vec<Vec<CMatrix>>) -> GibbsConfig {
        self.apply(GibbsConfig::orbital(h, microstates))
    }

    pub fn matrix(&self, h: Hamiltonian, dim: usize, cutoff: f64) -> GibbsConfig {
        self.apply(GibbsConfig::matrix(h, dim, cutoff))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GibbsSettings { seed, ..self.clone() }
    }
}

/// Distinct words of the test function with cached traces.
#[derive(Clone, Debug)]
struct TraceCache {
    words: Vec<Word>,
    families: Vec<u64>,
    values: Vec<C64>,
    single: Vec<(usize, C64)>,
    double: Vec<(usize, usize, C64)>,
}

impl TraceCache {
    fn new(h: &Hamiltonian) -> Self {
        let mut set = BTreeSet::new();
        match h {
            Hamiltonian::Single(p) => set.extend(p.terms().map(|(w, _)| w.clone())),
            Hamiltonian::Double(t) => {
                for (a, b, _) in t.terms() {
                    set.insert(a.clone());
                    set.insert(b.clone());
                }
            }
        }
        let words: Vec<Word> = set.into_iter().collect();
        let index = |w: &Word| words.binary_search(w).unwrap();
        let (single, double) = match h {
            Hamiltonian::Single(p) => (p.terms().map(|(w, c)| (index(w), *c)).collect(), Vec::new()),
            Hamiltonian::Double(t) => {
                (Vec::new(), t.terms().map(|(a, b, c)| (index(a), index(b), *c)).collect())
            }
        };
        let families = words
            .iter()
            .map(|w| w.letters().iter().fold(0u64, |m, g| m | (1u64 << g.family())))
            .collect();
        let values = vec![C64::new(0.0, 0.0); words.len()];
        TraceCache { words, families, values, single, double }
    }

    fn refresh(&mut self, mats: &[Vec<CMatrix>], family: Option<usize>) {
        for k in 0..self.words.len() {
            if let Some(i) = family {
                if self.families[k] & (1u64 << i) == 0 {
                    continue;
                }
            }
            self.values[k] = word_trace(mats, &self.words[k]);
        }
    }

    fn trace_value(&self) -> Result<f64> {
        let mut v = C64::new(0.0, 0.0);
        for &(k, c) in &self.single {
            v += c * self.values[k];
        }
        for &(a, b, c) in &self.double {
            v += c * self.values[a] * self.values[b];
        }
        real_part(v)
    }
}

pub(crate) fn word_trace(mats: &[Vec<CMatrix>], w: &Word) -> C64 {
    let s = w.letters();
    let get = |k: usize| {
        let g = s[k];
        &mats[g.family()][g.slot().expect("self-adjoint letter")]
    };
    match s.len() {
        0 => C64::new(1.0, 0.0),
        1 => trace_n(get(0)),
        n => {
            let mut acc = get(0).clone();
            for k in 1..n - 1 {
                acc = &acc * get(k);
            }
            trace_of_product(&acc, get(n - 1))
        }
    }
}

/// Recorded post-burn-in statistics.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ChainRecords {
    /// Sweep index of each record.
    pub sweeps: Vec<usize>,
    /// Unscaled energy `N^2 tr_N(h)` (or the double-trace analogue).
    pub energies: Vec<f64>,
    /// Running acceptance rate at each record.
    pub acceptance: Vec<f64>,
    /// Class representatives of the recorded moments.
    #[serde(skip)]
    pub moment_words: Vec<Word>,
    /// Moment vectors, one per record, aligned with `moment_words`.
    #[serde(skip)]
    pub moments: Vec<Vec<C64>>,
    /// Per family, pooled eigenvalues of the first variable.
    pub spectra: Vec<Vec<f64>>,
}

/// State and accumulators of one Metropolis chain.
pub struct GibbsChain {
    config: GibbsConfig,
    rng: ChaCha8Rng,
    unitaries: Vec<CMatrix>,
    effective: Vec<Vec<CMatrix>>,
    cache: TraceCache,
    energy: f64,
    step: f64,
    sweeps_done: usize,
    proposed: u64,
    accepted: u64,
    window: (u64, u64),
    records: ChainRecords,
}

const TUNE_EVERY: usize = 25;
const REUNITARIZE_EVERY: usize = 100;

impl GibbsChain {
    pub fn new(config: GibbsConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layout = config.h.layout().clone();
        let n = config.dim;
        let (unitaries, effective): (Vec<CMatrix>, Vec<Vec<CMatrix>>) = match &config.ensemble {
            Ensemble::Orbital { microstates } => {
                let us = (0..layout.n())
                    .map(|_| randmat::haar_unitary::<f64, _>(n, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let eff = microstates
                    .iter()
                    .zip(&us)
                    .map(|(fam, v)| fam.iter().map(|x| randmat::conjugate(v, x)).collect())
                    .collect();
                (us, eff)
            }
            Ensemble::Matrix { .. } => {
                let eff = layout.sizes().iter().map(|&r| vec![CMat::<f64>::zeros(n, n); r]).collect();
                (Vec::new(), eff)
            }
        };
        let mut cache = TraceCache::new(&config.h);
        cache.refresh(&effective, None);
        let energy = scale(n) * cache.trace_value()?;
        let mut records = ChainRecords::default();
        if let Some(m) = config.record_degree {
            records.moment_words = trace_classes(&layout.x_letters(), m);
        }
        if config.record_spectra {
            records.spectra = vec![Vec::new(); layout.n()];
        }
        Ok(GibbsChain {
            step: config.step,
            config,
            rng,
            unitaries,
            effective,
            cache,
            energy,
            sweeps_done: 0,
            proposed: 0,
            accepted: 0,
            window: (0, 0),
            records,
        })
    }

    pub fn config(&self) -> &GibbsConfig {
        &self.config
    }

    /// Current unscaled energy `N^2 tr_N(h)`.
    pub fn raw_energy(&self) -> f64 {
        self.energy
    }

    /// Current energy `N^2 beta tr_N(h)`.
    pub fn energy(&self) -> f64 {
        self.config.beta * self.energy
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn unitaries(&self) -> &[CMatrix] {
        &self.unitaries
    }

    /// Current effective tuple: conjugated microstates or the Hermitian state.
    pub fn tuple(&self) -> Result<MatrixTuple<f64>> {
        MatrixTuple::new_unchecked_norm(self.config.h.layout(), self.effective.clone(), None)
    }

    /// Acceptance rate over the post-burn-in sweeps.
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn records(&self) -> &ChainRecords {
        &self.records
    }

    fn metropolis(&mut self, new_energy: f64) -> bool {
        let delta = self.config.beta * (new_energy - self.energy);
        delta <= 0.0 || self.rng.random::<f64>().ln() < -delta
    }

    /// One sweep: one proposal per family (orbital) or per variable (matrix).
    pub fn step(&mut self) -> Result<()> {
        let layout = self.config.h.layout().clone();
        let n = self.config.dim;
        let mut acc = 0u64;
        let mut prop = 0u64;
        match &self.config.ensemble {
            Ensemble::Orbital { microstates } => {
                let microstates = microstates.clone();
                for i in 0..layout.n() {
                    let h = randmat::gue::<f64, _>(n, &mut self.rng)?;
                    let w = randmat::expi_hermitian(&h, self.step)?;
                    let v_new = &self.unitaries[i] * w;
                    let new_fam: Vec<CMatrix> =
                        microstates[i].iter().map(|x| randmat::conjugate(&v_new, x)).collect();
                    let old_fam = std::mem::replace(&mut self.effective[i], new_fam);
                    let old_vals = self.cache.values.clone();
                    self.cache.refresh(&self.effective, Some(i));
                    let e_new = scale(n) * self.cache.trace_value()?;
                    prop += 1;
                    if self.metropolis(e_new) {
                        acc += 1;
                        self.unitaries[i] = v_new;
                        self.energy = e_new;
                    } else {
                        self.effective[i] = old_fam;
                        self.cache.values = old_vals;
                    }
                }
            }
            Ensemble::Matrix { cutoff } => {
                let cutoff = *cutoff;
                for i in 0..layout.n() {
                    for j in 0..layout.r(i) {
                        let h = randmat::gue::<f64, _>(n, &mut self.rng)?;
                        let proposal = &self.effective[i][j] + h * C64::new(self.step, 0.0);
                        prop += 1;
                        // proposals leaving the ball are rejected (the target density vanishes there)
                        if randmat::hermitian_norm(&proposal)? > cutoff {
                            continue;
                        }
                        let old = std::mem::replace(&mut self.effective[i][j], proposal);
                        let old_vals = self.cache.values.clone();
                        self.cache.refresh(&self.effective, Some(i));
                        let e_new = scale(n) * self.cache.trace_value()?;
                        if self.metropolis(e_new) {
                            acc += 1;
                            self.energy = e_new;
                        } else {
                            self.effective[i][j] = old;
                            self.cache.values = old_vals;
                        }
                    }
                }
            }
        }
        self.sweeps_done += 1;
        if self.sweeps_done > self.config.burn_in {
            self.accepted += acc;
            self.proposed += prop;
        } else {
            self.window.0 += acc;
            self.window.1 += prop;
            if self.config.autotune && self.sweeps_done % TUNE_EVERY == 0 {
                let rate = self.window.0 as f64 / self.window.1.max(1) as f64;
                if rate < 0.3 {
                    self.step *= 0.7;
                } else if rate > 0.5 {
                    self.step = (self.step * 1.4).min(max_step(&self.config));
                }
                self.window = (0, 0);
            }
        }
        if matches!(self.config.ensemble, Ensemble::Orbital { .. }) && self.sweeps_done % REUNITARIZE_EVERY == 0 {
            self.reunitarize()?;
        }
        Ok(())
    }

    fn reunitarize(&mut self) -> Result<()> {
        let Ensemble::Orbital { microstates } = &self.config.ensemble else { return Ok(()) };
        for (i, v) in self.unitaries.iter_mut().enumerate() {
            let qr = v.clone().qr();
            let r = qr.r();
            let mut q = qr.q();
            for j in 0..q.ncols() {
                let d = r[(j, j)];
                let phase = d / d.norm();
                for k in 0..q.nrows() {
                    q[(k, j)] *= phase;
                }
            }
            *v = q;
            self.effective[i] = microstates[i].iter().map(|x| randmat::conjugate(v, x)).collect();
        }
        self.cache.refresh(&self.effective, None);
        self.energy = scale(self.config.dim) * self.cache.trace_value()?;
        Ok(())
    }

    fn record(&mut self) -> Result<()> {
        self.records.sweeps.push(self.sweeps_done);
        self.records.energies.push(self.energy);
        self.records.acceptance.push(self.acceptance_rate());
        if !self.records.moment_words.is_empty() {
            let tuple = self.tuple()?;
            self.records.moments.push(traces_by_prefix(&tuple, &self.records.moment_words)?);
        }
        if self.config.record_spectra {
            for (i, fam) in self.effective.iter().enumerate() {
                self.records.spectra[i].extend(randmat::hermitian_eigenvalues(&fam[0])?);
            }
        }
        Ok(())
    }

    /// Runs the remaining sweeps, recording after burn-in every `thin` sweeps.
    pub fn run(&mut self) -> Result<()> {
        while self.sweeps_done < self.config.sweeps {
            self.step()?;
            let s = self.sweeps_done;
            if s > self.config.burn_in && (s - self.config.burn_in) % self.config.thin == 0 {
                self.record()?;
            }
        }
        Ok(())
    }

    /// Post-burn-in average of the empirical states with batch-means
    /// standard errors per word (real and imaginary parts combined).
    pub fn mean_tracial_state(&self, m: usize) -> Result<(MomentTable<f64>, BTreeMap<Word, f64>)> {
        let rd = self.config.record_degree.unwrap_or(0);
        if m > rd || self.records.moments.is_empty() {
            return Err(Error::invalid(format!("chain recorded moments up to degree {rd}, {m} requested")));
        }
        let layout = self.config.h.layout();
        let mut table = MomentTable::new(layout, Alphabet::X, m);
        let mut errs = BTreeMap::new();
        for (k, w) in self.records.moment_words.iter().enumerate() {
            if w.len() > m {
                continue;
            }
            let re: Vec<f64> = self.records.moments.iter().map(|v| v[k].re).collect();
            let im: Vec<f64> = self.records.moments.iter().map(|v| v[k].im).collect();
            table.set(w, Complex::new(mean(&re), mean(&im)))?;
            errs.insert(w.clone(), batch_stderr(&re).hypot(batch_stderr(&im)));
        }
        Ok((table, errs))
    }

    /// Fraction of recorded samples whose empirical `x`-state is within
    /// `delta` of `target` on all words of length `<= m`.
    pub fn occupancy(&self, target: &MomentTable<f64>, m: usize, delta: f64) -> Result<Occupancy> {
        let rd = self.config.record_degree.unwrap_or(0);
        if m > rd || self.records.moments.is_empty() {
            return Err(Error::invalid(format!("chain recorded moments up to degree {rd}, {m} requested")));
        }
        if target.degree() < m || !same_layout(target.layout(), self.config.h.layout()) {
            return Err(Error::invalid("target does not cover the requested degree/layout"));
        }
        let idx: Vec<(usize, C64)> = self
            .records
            .moment_words
            .iter()
            .enumerate()
            .filter(|(_, w)| w.len() <= m)
            .map(|(k, w)| target.value(w).map(|t| (k, t)))
            .collect::<Result<_>>()?;
        let hits = self
            .records
            .moments
            .iter()
            .filter(|v| idx.iter().all(|&(k, t)| (v[k] - t).norm() < delta))
            .count();
        let fraction = hits as f64 / self.records.moments.len() as f64;
        Ok(Occupancy::new(fraction, self.config.dim))
    }
}

fn scale(n: usize) -> f64 {
    (n * n) as f64
}

fn max_step(config: &GibbsConfig) -> f64 {
    match config.ensemble {
        Ensemble::Orbital { .. } => std::f64::consts::PI,
        Ensemble::Matrix { cutoff } => 2.0 * cutoff,
    }
}

/// Occupancy fraction and its normalised logarithm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Occupancy {
    pub fraction: f64,
    /// `log(fraction) / N^2`, `-inf` when no sample qualifies.
    pub log_per_n2: f64,
}

impl Occupancy {
    fn new(fraction: f64, n: usize) -> Self {
        let log_per_n2 = if fraction > 0.0 { fraction.ln() / scale(n) } else { f64::NEG_INFINITY };
        Occupancy { fraction, log_per_n2 }
    }
}

/// Log-partition estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogZMethod {
    /// `log mean exp(-beta E)` over reference samples (Haar for the orbital
    /// ensemble, the `beta = 0` chain for the matrix ensemble).
    Direct,
    /// `-int_0^beta E_b[N^2 tr h] db` by the trapezoidal rule on an
    /// equally spaced grid.
    Thermodynamic { grid: usize },
}

impl LogZMethod {
    pub fn thermodynamic() -> Self {
        LogZMethod::Thermodynamic { grid: 11 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    pub beta: f64,
    pub mean_energy: f64,
    pub stderr: f64,
    pub acceptance: f64,
    pub step: f64,
    /// Energy trace of the chain at this grid point.
    #[serde(skip)]
    pub records: ChainRecords,
}

/// Estimate of `log Z` (orbital) or `log(Z^h / Z^0)` (matrix ensemble).
#[derive(Clone, Debug, Serialize)]
pub struct LogPartition {
    pub value: f64,
    pub stderr: f64,
    pub method: LogZMethod,
    pub grid: Vec<GridPoint>,
    pub effective_sample_size: Option<f64>,
}

/// Minimum fraction of effective samples the direct estimator accepts.
pub const DIRECT_MIN_ESS_FRACTION: f64 = 0.05;

pub fn log_partition(config: &GibbsConfig, method: LogZMethod) -> Result<LogPartition> {
    config.validate()?;
    let exact = |value| LogPartition { value, stderr: 0.0, method, grid: Vec::new(), effective_sample_size: None };
    if config.h.is_zero() || config.beta == 0.0 {
        return Ok(exact(0.0));
    }
    if let Ensemble::Orbital { microstates } = &config.ensemble {
        if config.dim == 1 || config.h.is_conjugation_invariant() {
            // the integrand does not depend on the unitaries
            let tuple = MatrixTuple::new_unchecked_norm(config.h.layout(), microstates.clone(), None)?;
            return Ok(exact(-energy(&tuple, config)?));
        }
    }
    match method {
        LogZMethod::Direct => direct(config),
        LogZMethod::Thermodynamic { grid } => thermodynamic(config, grid),
    }
}

fn direct(config: &GibbsConfig) -> Result<LogPartition> {
    let samples = config.sweeps - config.burn_in;
    let energies: Vec<f64> = match &config.ensemble {
        Ensemble::Orbital { microstates } => {
            let layout = config.h.layout().clone();
            (0..samples)
                .into_par_iter()
                .map(|k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(config.seed, &[k as u64]));
                    let mut eff = Vec::with_capacity(layout.n());
                    for fam in microstates {
                        let v = randmat::haar_unitary::<f64, _>(config.dim, &mut rng)?;
                        eff.push(fam.iter().map(|x| randmat::conjugate(&v, x)).collect::<Vec<_>>());
                    }
                    let mut cache = TraceCache::new(&config.h);
                    cache.refresh(&eff, None);
                    Ok(scale(config.dim) * cache.trace_value()?)
                })
                .collect::<Result<Vec<_>>>()?
        }
        Ensemble::Matrix { .. } => {
            let mut reference = config.clone();
            reference.beta = 0.0;
            let mut chain = GibbsChain::new(reference)?;
            chain.run()?;
            chain.records.energies.clone()
        }
    };
    let logw: Vec<f64> = energies.iter().map(|e| -config.beta * e).collect();
    let ess = effective_sample_size(&logw);
    if ess < DIRECT_MIN_ESS_FRACTION * logw.len() as f64 {
        return Err(Error::Numerical(format!(
            "direct estimator unreliable: effective sample size {ess:.1} of {}",
            logw.len()
        )));
    }
    let value = log_mean_exp(&logw);
    let w: Vec<f64> = logw.iter().map(|l| (l - value).exp()).collect();
    let stderr = match config.ensemble {
        Ensemble::Orbital { .. } => (crate::stats::variance(&w) / w.len() as f64).sqrt(),
        Ensemble::Matrix { .. } => batch_stderr(&w),
    };
    Ok(LogPartition {
        value,
        stderr,
        method: LogZMethod::Direct,
        grid: Vec::new(),
        effective_sample_size: Some(ess),
    })
}

fn thermodynamic(config: &GibbsConfig, grid: usize) -> Result<LogPartition> {
    if grid < 2 {
        return Err(Error::invalid("thermodynamic integration needs at least two grid points"));
    }
    let betas: Vec<f64> = (0..grid).map(|k| config.beta * k as f64 / (grid - 1) as f64).collect();
    let points = betas
        .par_iter()
        .enumerate()
        .map(|(k, &beta)| {
            let mut c = config.clone();
            c.beta = beta;
            c.seed = child_seed(config.seed, &[0x7e5, k as u64]);
            let mut chain = GibbsChain::new(c)?;
            chain.run()?;
            let e = &chain.records.energies;
            Ok(GridPoint {
                beta,
                mean_energy: mean(e),
                stderr: batch_stderr(e),
                acceptance: chain.acceptance_rate(),
                step: chain.step,
                records: chain.records.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let db = config.beta / (grid - 1) as f64;
    let (mut value, mut var) = (0.0, 0.0);
    for (k, p) in points.iter().enumerate() {
        let w = if k == 0 || k == grid - 1 { 0.5 * db } else { db };
        value -= w * p.mean_energy;
        var += w * w * p.stderr * p.stderr;
    }
    Ok(LogPartition {
        value,
        stderr: var.sqrt(),
        method: LogZMethod::Thermodynamic { grid },
        grid: points,
        effective_sample_size: None,
    })
}

/// Runs a chain to completion.
pub fn run_chain(config: GibbsConfig) -> Result<GibbsChain> {
    let mut chain = GibbsChain::new(config)?;
    chain.run()?;
    Ok(chain)
}

/// Energy `N^2 beta Re tr_N(h)` of a tuple under a configuration.
pub fn energy(tuple: &MatrixTuple<f64>, config: &GibbsConfig) -> Result<f64> {
    Ok(scale(tuple.dim()) * config.beta * config.h.trace_value(tuple)?)
}

/// Chain checkpoint: configuration hash, RNG position, current matrices and
/// accumulators.
pub fn checkpoint(chain: &GibbsChain, config_hash: &str) -> serde_json::Value {
    let mat = |m: &CMatrix| -> Vec<[f64; 2]> { m.iter().map(|z| [z.re, z.im]).collect() };
    serde_json::json!({
        "config_hash": config_hash,
        "rng": {
            "seed": hex::encode(chain.rng.get_seed()),
            "stream": chain.rng.get_stream(),
            "word_pos": chain.rng.get_word_pos().to_string(),
        },
        "sweeps_done": chain.sweeps_done,
        "step": chain.step,
        "accepted": chain.accepted,
        "proposed": chain.proposed,
        "unitaries": chain.unitaries.iter().map(mat).collect::<Vec<_>>(),
        "state": chain.effective.iter().map(|f| f.iter().map(mat).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "records": chain.records,
    })
}
