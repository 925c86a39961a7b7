//! Truncated Schwinger-Dyson fixed-point solver over the `(u, z)` alphabet.
//!
//! The unknowns are the traces of the balanced trace classes of length
//! `<= D` that contain a unitary letter. Words without unitary letters are
//! fixed to the free product of the `z` marginals; words whose `u[i]` and
//! `u'[i]` counts differ for some family vanish, since `h(u z u')` is invariant
//! under `u[i] -> e^(i theta) u[i]` and so is the solution.
//!
//! Each class is rotated to end in a unitary letter `u[i]`; the equation
//! with that test word isolates its trace against shorter products and the
//! `t`-terms `tau((D_i h) q)`. Words longer than `D` appearing in the
//! `t`-terms are expanded by the same equation down to a fixed closure depth,
//! below which the free-Haar value is used. The expansion is compiled once
//! into an expression graph and re-evaluated every sweep.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::moments::{reduced_words, trace_classes, Alphabet, FreeProduct, MarginalState};
use crate::ncpoly::{cyclic_gradient, liberation_gradient, same_layout, substitute_word, substitute_x, Coeff, FamilyLayout, Generator, Word};
use crate::{Error, MomentTable, PolyF64, Result, SpectralMeasure, C64};

/// Degree of the marginal tables built by [`SdProblem::from_measures`].
pub const MEASURE_TABLE_DEGREE: usize = 128;

#[derive(Clone, Debug)]
pub struct SdProblem {
    /// Self-adjoint potential over the `x` alphabet.
    pub h: PolyF64,
    /// Per-family marginals: `tau0[i]` holds the `z` words of family `i`.
    pub tau0: Vec<MomentTable>,
    /// Truncation degree `D`.
    pub degree: usize,
    /// Weight of the new value in each update; 1 is plain Picard iteration.
    pub damping: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    /// Levels of equation expansion for words longer than `D`.
    pub closure_depth: usize,
    /// Coefficients of `h` above this size produce a warning.
    pub smallness: f64,
}

impl SdProblem {
    pub fn new(h: PolyF64, tau0: Vec<MomentTable>, degree: usize) -> Self {
        SdProblem {
            h,
            tau0,
            degree,
            damping: 0.5,
            max_iter: 200,
            tolerance: 1e-10,
            closure_depth: 4,
            smallness: 0.05,
        }
    }

    /// Single-variable families with the given spectral distributions.
    pub fn from_measures(h: PolyF64, measures: &[SpectralMeasure], degree: usize) -> Result<Self> {
        let layout = h.layout().clone();
        if measures.len() != layout.n() {
            return Err(Error::dim(format!("{} measures for {} families", measures.len(), layout.n())));
        }
        let tau0 = measures
            .iter()
            .enumerate()
            .map(|(i, mu)| MomentTable::from_measure(&layout, Alphabet::UZ, i, mu, MEASURE_TABLE_DEGREE))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(h, tau0, degree))
    }

    pub fn layout(&self) -> &Arc<FamilyLayout> {
        self.h.layout()
    }

    /// Largest coefficient modulus of `h`.
    pub fn coupling(&self) -> f64 {
        self.h.terms().map(|(_, c)| c.to_c64().norm()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let layout = self.layout();
        if !self.h.is_x_alphabet() {
            return Err(Error::invalid("h must be written in x letters"));
        }
        if !self.h.is_self_adjoint() {
            return Err(Error::invalid("h must be self-adjoint"));
        }
        if self.tau0.len() != layout.n() {
            return Err(Error::dim(format!("{} marginals for {} families", self.tau0.len(), layout.n())));
        }
        for t in &self.tau0 {
            if !same_layout(t.layout(), layout) {
                return Err(Error::dim("marginal over a different layout"));
            }
            if t.alphabet() != Alphabet::UZ {
                return Err(Error::invalid("marginals must be written in z letters"));
            }
        }
        let need = substitute_x(&self.h)?.degree() + 2;
        if self.degree < need {
            return Err(Error::invalid(format!("degree {} below deg(h~) + 2 = {need}", self.degree)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid("damping must lie in (0, 1]"));
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            return Err(Error::invalid("tolerance and iteration cap must be positive"));
        }
        if self.closure_depth > 16 {
            return Err(Error::invalid("closure depth above 16"));
        }
        Ok(())
    }

    fn gradients(&self) -> Result<Vec<Vec<(Word, C64)>>> {
        let rotated = substitute_x(&self.h)?;
        (0..self.layout().n())
            .map(|i| {
                let g = cyclic_gradient(i, &rotated)?;
                Ok(g.terms().map(|(w, c)| (w.clone(), c.to_c64())).filter(|(_, c)| *c != C64::new(0.0, 0.0)).collect())
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub max_delta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<IterationRecord>,
    /// Ratios of successive `max_delta` values.
    pub contraction_ratios: Vec<f64>,
    pub unknowns: usize,
    pub closure_nodes: usize,
    pub warnings: Vec<String>,
}

impl SdReport {
    /// `iteration,residual,max_delta` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,residual,max_delta\n");
        for r in &self.history {
            s.push_str(&format!("{},{:e},{:e}\n", r.iteration, r.residual, r.max_delta));
        }
        s
    }
}

/// Solver output: the truncated table plus the compiled expansion used to
/// evaluate longer words consistently with it.
pub struct SdSolution {
    pub table: MomentTable,
    pub report: SdReport,
    engine: Engine,
}

impl SdSolution {
    /// `tau_h(w)` for any `(u, z)` word; words beyond the table degree are
    /// expanded through the equation to the closure depth.
    pub fn value(&mut self, w: &Word) -> Result<C64> {
        if w.trace_class().0.len() <= self.table.degree() {
            return self.table.value(w);
        }
        let start = self.engine.nodes.len();
        let r = self.engine.reference(w, self.engine.depth)?;
        self.engine.evaluate_new(start);
        Ok(self.engine.get(r))
    }

    pub fn closure_depth(&self) -> usize {
        self.engine.depth
    }
}

#[derive(Clone, Copy, Debug)]
enum Ref {
    Zero,
    One,
    Node(u32, bool),
}

#[derive(Debug, Default)]
struct Rule {
    products: Vec<(Ref, Ref, f64)>,
    linear: Vec<(Ref, C64)>,
}

const ZONLY: u8 = u8::MAX;
const TABLE: u8 = u8::MAX - 1;

struct Node {
    word: Word,
    tag: u8,
    rule: Option<Rule>,
}

struct Engine {
    layout: Arc<FamilyLayout>,
    degree: usize,
    depth: usize,
    grads: Vec<Vec<(Word, C64)>>,
    nodes: Vec<Node>,
    values: Vec<C64>,
    index: HashMap<(Word, u8), u32>,
    marginals: FreeProduct<f64>,
    haar: FreeProduct<f64>,
}

fn balanced(w: &Word, n: usize) -> bool {
    let mut net = vec![0i32; n];
    for g in w.letters() {
        match g {
            Generator::U(_) => net[g.family()] += 1,
            Generator::UStar(_) => net[g.family()] -= 1,
            _ => {}
        }
    }
    net.iter().all(|&k| k == 0)
}

/// Lexicographically least rotation of a cyclically reduced word that ends
/// in some `u[i]`.
fn solving_rotation(rep: &Word) -> Word {
    let s = rep.letters();
    (0..s.len())
        .filter(|&k| matches!(s[(k + s.len() - 1) % s.len()], Generator::U(_)))
        .map(|k| rep.rotate(k))
        .min()
        .expect("balanced word with a unitary letter contains some u[i]")
}

/// Terms `(a, b, sign)` of the unitary derivation `d_i` applied to `p`.
fn derivation_terms(i: usize, p: &Word) -> Vec<(Word, Word, f64)> {
    let s = p.letters();
    let mut out = Vec::new();
    for (k, &g) in s.iter().enumerate() {
        if !g.is_unitary() || g.family() != i {
            continue;
        }
        if matches!(g, Generator::U(_)) {
            out.push((p.slice(0, k + 1), p.slice(k + 1, s.len()), 1.0));
        } else {
            out.push((p.slice(0, k), p.slice(k, s.len()), -1.0));
        }
    }
    out
}

impl Engine {
    fn new(problem: &SdProblem) -> Result<Self> {
        let fams: Vec<Arc<dyn MarginalState<f64>>> =
            problem.tau0.iter().map(|t| Arc::new(t.clone()) as Arc<dyn MarginalState<f64>>).collect();
        Ok(Engine {
            layout: problem.layout().clone(),
            degree: problem.degree,
            depth: problem.closure_depth,
            grads: problem.gradients()?,
            nodes: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
            marginals: FreeProduct::new(fams, None),
            haar: FreeProduct::with_haar(&problem.tau0),
        })
    }

    fn n(&self) -> usize {
        self.grads.len()
    }

    fn push(&mut self, word: Word, tag: u8, value: C64) -> u32 {
        let id = self.nodes.len() as u32;
        self.index.insert((word.clone(), tag), id);
        self.nodes.push(Node { word, tag, rule: None });
        self.values.push(value);
        id
    }

    fn get(&self, r: Ref) -> C64 {
        match r {
            Ref::Zero => C64::new(0.0, 0.0),
            Ref::One => C64::new(1.0, 0.0),
            Ref::Node(k, conj) => {
                let v = self.values[k as usize];
                if conj {
                    v.conj()
                } else {
                    v
                }
            }
        }
    }

    fn eval_rule(&self, rule: &Rule) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(a, b, s) in &rule.products {
            acc += self.get(a) * self.get(b) * s;
        }
        for &(r, c) in &rule.linear {
            acc += self.get(r) * c;
        }
        acc
    }

    /// Creates one table node per unknown class, initialised at the free-Haar
    /// state, compiles their rules and returns them shortest first.
    fn build_table(&mut self) -> Result<Vec<u32>> {
        let n = self.n();
        let mut ids = Vec::new();
        for rep in trace_classes(&self.layout.uz_letters(), self.degree) {
            if rep.is_unit() || !rep.has_unitary() || !balanced(&rep, n) {
                continue;
            }
            let v = self.haar.eval(&rep)?;
            ids.push(self.push(rep, TABLE, v));
        }
        for &id in &ids {
            let rep = self.nodes[id as usize].word.clone();
            let rule = self.rule(&rep, self.depth, self.depth)?;
            self.nodes[id as usize].rule = Some(rule);
        }
        ids.sort_by_key(|&id| self.nodes[id as usize].word.len());
        Ok(ids)
    }

    /// The equation for the class `rep`: products at expansion depth
    /// `product_depth`, `t`-terms at `linear_depth`.
    fn rule(&mut self, rep: &Word, product_depth: usize, linear_depth: usize) -> Result<Rule> {
        let q = solving_rotation(rep);
        let s = q.letters();
        let last = s.len() - 1;
        let i = s[last].family();
        let mut rule = Rule::default();
        for (a, b, sign) in derivation_terms(i, &q) {
            if a.len() == s.len() {
                continue;
            }
            let ra = self.reference(&a, product_depth)?;
            if matches!(ra, Ref::Zero) {
                continue;
            }
            let rb = self.reference(&b, product_depth)?;
            if matches!(rb, Ref::Zero) {
                continue;
            }
            rule.products.push((ra, rb, -sign));
        }
        for k in 0..self.grads[i].len() {
            let (g, c) = self.grads[i][k].clone();
            let r = self.reference(&g.mul(&q), linear_depth)?;
            if !matches!(r, Ref::Zero) {
                rule.linear.push((r, c));
            }
        }
        Ok(rule)
    }

    /// Node for `tau(w)`, expanding words beyond the table degree to the
    /// given depth.
    fn reference(&mut self, w: &Word, depth: usize) -> Result<Ref> {
        let (rep, conj) = w.trace_class();
        if rep.is_unit() {
            return Ok(Ref::One);
        }
        if !rep.has_unitary() {
            let key = (rep, ZONLY);
            let id = match self.index.get(&key) {
                Some(&id) => id,
                None => {
                    let v = self.marginals.eval(&key.0)?;
                    self.push(key.0, ZONLY, v)
                }
            };
            return Ok(Ref::Node(id, conj));
        }
        if !balanced(&rep, self.n()) {
            return Ok(Ref::Zero);
        }
        if rep.len() <= self.degree {
            let id = *self
                .index
                .get(&(rep, TABLE))
                .ok_or_else(|| Error::Numerical("table class missing from the solver".into()))?;
            return Ok(Ref::Node(id, conj));
        }
        let tag = depth as u8;
        if let Some(&id) = self.index.get(&(rep.clone(), tag)) {
            return Ok(Ref::Node(id, conj));
        }
        if depth == 0 {
            let v = self.haar.eval(&rep)?;
            let id = self.push(rep, 0, v);
            return Ok(Ref::Node(id, conj));
        }
        let id = self.push(rep.clone(), tag, C64::new(0.0, 0.0));
        let rule = self.rule(&rep, depth, depth - 1)?;
        self.nodes[id as usize].rule = Some(rule);
        Ok(Ref::Node(id, conj))
    }

    fn is_expansion(&self, id: u32) -> bool {
        let node = &self.nodes[id as usize];
        node.tag != TABLE && node.rule.is_some()
    }

    /// Expansion nodes in dependency order.
    fn expansion_order(&self, from: usize) -> Vec<u32> {
        let mut ids: Vec<u32> = (from as u32..self.nodes.len() as u32).filter(|&k| self.is_expansion(k)).collect();
        ids.sort_by_key(|&k| (self.nodes[k as usize].tag, self.nodes[k as usize].word.len()));
        ids
    }

    fn evaluate(&mut self, order: &[u32]) {
        for &k in order {
            let v = self.eval_rule(self.nodes[k as usize].rule.as_ref().expect("expansion node has a rule"));
            self.values[k as usize] = v;
        }
    }

    fn evaluate_new(&mut self, from: usize) {
        let order = self.expansion_order(from);
        self.evaluate(&order);
    }
}

/// The fixed `z` part of any `(u, z)` table of the problem: free product of
/// the marginals on `z` words, zero on unbalanced words.
fn base_table(problem: &SdProblem, marginals: &mut FreeProduct<f64>) -> Result<MomentTable> {
    let layout = problem.layout();
    let n = layout.n();
    let mut table = MomentTable::new(layout, Alphabet::UZ, problem.degree);
    for rep in trace_classes(&layout.uz_letters(), problem.degree) {
        if rep.is_unit() {
            continue;
        }
        if !rep.has_unitary() {
            table.set(&rep, marginals.eval(&rep)?)?;
        } else if !balanced(&rep, n) {
            table.set(&rep, C64::new(0.0, 0.0))?;
        }
    }
    Ok(table)
}

/// Max over families `i` and reduced test words `p` with
/// `|p| + deg(D_i h) <= D` of `|(tau (x) tau) d_i(p) - tau((D_i h) p)|`, and
/// over `z` classes of the deviation from the free product of the marginals.
pub fn sd_residual(table: &MomentTable, problem: &SdProblem) -> Result<f64> {
    problem.validate()?;
    if !same_layout(table.layout(), problem.layout()) || table.alphabet() != Alphabet::UZ {
        return Err(Error::dim("table must be a (u, z) table over the problem layout"));
    }
    if table.degree() < problem.degree {
        return Err(Error::invalid(format!("table degree {} below D = {}", table.degree(), problem.degree)));
    }
    let grads = problem.gradients()?;
    let tests = TestWords::new(problem.layout(), &grads, problem.degree);
    let eq = equation_residual(table, &grads, &tests)?;
    let fams: Vec<Arc<dyn MarginalState<f64>>> =
        problem.tau0.iter().map(|t| Arc::new(t.clone()) as Arc<dyn MarginalState<f64>>).collect();
    let mut fp = FreeProduct::new(fams, None);
    let letters: Vec<Generator> = problem.layout().z_letters();
    let mut marg: f64 = 0.0;
    for w in trace_classes(&letters, problem.degree) {
        marg = marg.max((table.value(&w)? - fp.eval(&w)?).norm());
    }
    Ok(eq.max(marg))
}

/// `(tau (x) tau) d_i(p) - tau((D_i h) p)` for a single test word.
pub fn sd_equation(table: &MomentTable, problem: &SdProblem, i: usize, p: &Word) -> Result<C64> {
    let grads = problem.gradients()?;
    let g = grads.get(i).ok_or_else(|| Error::invalid(format!("family {} out of range", i + 1)))?;
    equation_value(table, g, i, p)
}

fn equation_value(table: &MomentTable, grad: &[(Word, C64)], i: usize, p: &Word) -> Result<C64> {
    let mut lhs = C64::new(0.0, 0.0);
    for (a, b, s) in derivation_terms(i, p) {
        lhs += table.value(&a)? * table.value(&b)? * s;
    }
    for (g, c) in grad {
        lhs -= table.value(&g.mul(p))? * c;
    }
    Ok(lhs)
}

struct TestWords {
    per_family: Vec<Vec<Word>>,
}

impl TestWords {
    fn new(layout: &FamilyLayout, grads: &[Vec<(Word, C64)>], degree: usize) -> Self {
        let letters = layout.uz_letters();
        let per_family = grads
            .iter()
            .map(|g| {
                let dg = g.iter().map(|(w, _)| w.len()).max().unwrap_or(0);
                if dg > degree {
                    Vec::new()
                } else {
                    reduced_words(&letters, degree - dg)
                }
            })
            .collect();
        TestWords { per_family }
    }
}

fn equation_residual(table: &MomentTable, grads: &[Vec<(Word, C64)>], tests: &TestWords) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, words) in tests.per_family.iter().enumerate() {
        let r = words
            .par_iter()
            .map(|p| equation_value(table, &grads[i], i, p).map(|v| v.norm()))
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Damped Gauss-Seidel iteration of the compiled equations, sweeping the
/// unknowns shortest first.
pub fn sd_solve(problem: &SdProblem) -> Result<SdSolution> {
    problem.validate()?;
    let mut warnings = Vec::new();
    let t = problem.coupling();
    if t > problem.smallness {
        warnings.push(format!(
            "largest coefficient {t} exceeds the smallness threshold {}; the fixed point may not be unique",
            problem.smallness
        ));
    }
    let mut engine = Engine::new(problem)?;
    let mut table = base_table(problem, &mut engine.marginals)?;
    let unknowns = engine.build_table()?;
    let expansion = engine.expansion_order(0);
    let tests = TestWords::new(problem.layout(), &engine.grads, problem.degree);

    let mut history = Vec::new();
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for iteration in 1..=problem.max_iter {
        engine.evaluate(&expansion);
        let mut max_delta: f64 = 0.0;
        for &k in &unknowns {
            let new = engine.eval_rule(engine.nodes[k as usize].rule.as_ref().expect("table node has a rule"));
            let old = engine.values[k as usize];
            let step = (new - old) * problem.damping;
            engine.values[k as usize] = old + step;
            max_delta = max_delta.max(step.norm());
        }
        for &k in &unknowns {
            table.set(&engine.nodes[k as usize].word, engine.values[k as usize])?;
        }
        residual = equation_residual(&table, &engine.grads, &tests)?;
        history.push(IterationRecord { iteration, residual, max_delta });
        if !residual.is_finite() || !max_delta.is_finite() {
            break;
        }
        if residual <= problem.tolerance && max_delta <= problem.tolerance {
            converged = true;
            break;
        }
    }
    engine.evaluate(&expansion);
    let contraction_ratios = history
        .windows(2)
        .filter(|w| w[0].max_delta > 0.0)
        .map(|w| w[1].max_delta / w[0].max_delta)
        .collect();
    let report = SdReport {
        converged,
        iterations: history.len(),
        residual,
        history,
        contraction_ratios,
        unknowns: unknowns.len(),
        closure_nodes: expansion.len(),
        warnings,
    };
    Ok(SdSolution { table, report, engine })
}

/// `tau^h(w) = tau_h(w(u z u'))` on the `x` words of length `<= m`.
pub fn pushforward_x(solution: &mut SdSolution, m: usize) -> Result<MomentTable> {
    let layout = solution.table.layout().clone();
    let mut out = MomentTable::new(&layout, Alphabet::X, m);
    for w in trace_classes(&layout.x_letters(), m) {
        if w.is_unit() {
            continue;
        }
        let v = solution.value(&substitute_word(&w))?;
        out.set(&w, v)?;
    }
    Ok(out)
}

/// Max over families `i` and `x` words `w` of length `<= m` of
/// `|tau(j_i w) - (tau (x) tau) delta_i(w)|`, with `j_i` the liberation
/// gradient of `h` and everything evaluated through `u z u'`.
pub fn liberation_check(solution: &mut SdSolution, h: &PolyF64, m: usize) -> Result<f64> {
    let layout = solution.table.layout().clone();
    if !same_layout(h.layout(), &layout) {
        return Err(Error::dim("h and the solution use different layouts"));
    }
    let words = reduced_words(&layout.x_letters(), m);
    let mut worst: f64 = 0.0;
    for i in 0..layout.n() {
        let j = liberation_gradient(i, h)?;
        for w in &words {
            let uw = substitute_word(w);
            let mut lhs = C64::new(0.0, 0.0);
            for (g, c) in j.terms() {
                lhs += solution.value(&g.mul(&uw))? * c.to_c64();
            }
            let mut rhs = C64::new(0.0, 0.0);
            for (a, b, c) in liberation_terms(i, w) {
                rhs += solution.value(&substitute_word(&a))? * solution.value(&substitute_word(&b))? * c;
            }
            worst = worst.max((lhs - rhs).norm());
        }
    }
    Ok(worst)
}

/// `delta_i(w)` for an `x` word: the unitary derivation of `w(u z u')`
/// sandwiched by `-(1 (x) u[i]) (.) (u'[i] (x) 1)`, rewritten in `x` letters.
fn liberation_terms(i: usize, w: &Word) -> Vec<(Word, Word, f64)> {
    let (u, us) = (Word::letter(Generator::u(i)), Word::letter(Generator::ustar(i)));
    derivation_terms(i, &substitute_word(w))
        .into_iter()
        .map(|(a, b, s)| {
            let a = unsubstitute_x(&a.mul(&us));
            let b = unsubstitute_x(&u.mul(&b));
            (a, b, -s)
        })
        .collect()
}

fn unsubstitute_x(w: &Word) -> Word {
    crate::ncpoly::unsubstitute_word(w).expect("derivation legs of a substituted word stay in its image")
}
