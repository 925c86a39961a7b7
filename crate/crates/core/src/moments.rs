//! Truncated tracial states, empirical states, microstate membership, free
//! products, free cumulants and single-variable free entropy.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::ComplexField;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::ncpoly::{same_layout, Coeff, FamilyLayout, Generator, NCPoly, Word};
use crate::randmat::{gauss_legendre_unit, trace_of_product, CMat, MatrixTuple, SpectralMeasure};
use crate::{Error, Result, Scalar};

/// Which letters a table is written in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    /// `x[i,j]` letters only.
    X,
    /// `z[i,j]`, `u[i]`, `u'[i]` letters.
    UZ,
}

impl Alphabet {
    pub fn letters(self, layout: &FamilyLayout) -> Vec<Generator> {
        match self {
            Alphabet::X => layout.x_letters(),
            Alphabet::UZ => layout.uz_letters(),
        }
    }

    pub fn admits(self, g: Generator) -> bool {
        match self {
            Alphabet::X => g.is_x(),
            Alphabet::UZ => !g.is_x(),
        }
    }
}

/// Truncated tracial state: values on all reduced words whose cyclic
/// reduction has length at most `degree`.
///
/// Values are stored once per trace class (rotations of `w` and of `w*`),
/// keyed by the class representative of [`Word::trace_class`], so traciality
/// and `tau(w*) = conj(tau(w))` hold by construction.
#[derive(Clone, Debug)]
pub struct MomentTable<T: Scalar> {
    layout: Arc<FamilyLayout>,
    alphabet: Alphabet,
    degree: usize,
    values: BTreeMap<Word, Complex<T>>,
}

impl<T: Scalar> PartialEq for MomentTable<T> {
    fn eq(&self, other: &Self) -> bool {
        same_layout(&self.layout, &other.layout)
            && self.alphabet == other.alphabet
            && self.degree == other.degree
            && self.values == other.values
    }
}

fn one<T: Scalar>() -> Complex<T> {
    Complex::new(T::one(), T::zero())
}

fn zero<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// All reduced words of length `<= m` over `letters`, shortest first.
pub fn reduced_words(letters: &[Generator], m: usize) -> Vec<Word> {
    let mut out = vec![Word::unit()];
    let mut frontier: Vec<Vec<Generator>> = vec![Vec::new()];
    for _ in 0..m {
        let mut next = Vec::new();
        for w in &frontier {
            for &g in letters {
                if w.last().is_some_and(|l| l.cancels(g)) {
                    continue;
                }
                let mut v = w.clone();
                v.push(g);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned().map(Word::from_reduced));
        frontier = next;
    }
    out
}

/// Representatives of all trace classes of length `<= m`, sorted.
pub fn trace_classes(letters: &[Generator], m: usize) -> Vec<Word> {
    let set: BTreeSet<Word> = reduced_words(letters, m).iter().map(|w| w.trace_class().0).collect();
    set.into_iter().collect()
}

impl<T: Scalar> MomentTable<T> {
    /// Table holding only `tau(1) = 1`.
    pub fn new(layout: &Arc<FamilyLayout>, alphabet: Alphabet, degree: usize) -> Self {
        let mut values = BTreeMap::new();
        values.insert(Word::unit(), one());
        MomentTable { layout: layout.clone(), alphabet, degree, values }
    }

    pub fn layout(&self) -> &Arc<FamilyLayout> {
        &self.layout
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Stored class representatives and their values.
    pub fn entries(&self) -> impl Iterator<Item = (&Word, &Complex<T>)> {
        self.values.iter()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `tau(w)` if the class of `w` is stored.
    pub fn get(&self, w: &Word) -> Option<Complex<T>> {
        let (rep, conj) = w.trace_class();
        let v = self.values.get(&rep)?;
        Some(if conj { v.conj() } else { *v })
    }

    /// `tau(w)`, failing if the class is not stored.
    pub fn value(&self, w: &Word) -> Result<Complex<T>> {
        self.get(w).ok_or_else(|| {
            Error::invalid(format!("word {w} not in moment table of degree {}", self.degree))
        })
    }

    /// Sets `tau(w) = v` for the whole trace class of `w`.
    pub fn set(&mut self, w: &Word, v: Complex<T>) -> Result<()> {
        for &g in w.letters() {
            self.layout.check(g)?;
            if !self.alphabet.admits(g) {
                return Err(Error::invalid(format!("letter {g} not in the table's alphabet")));
            }
        }
        let (rep, conj) = w.trace_class();
        if rep.len() > self.degree {
            return Err(Error::invalid(format!("word {w} exceeds table degree {}", self.degree)));
        }
        if rep.is_unit() {
            return Ok(());
        }
        self.values.insert(rep, if conj { v.conj() } else { v });
        Ok(())
    }

    /// Representatives of every class up to the table degree.
    pub fn classes(&self) -> Vec<Word> {
        trace_classes(&self.alphabet.letters(&self.layout), self.degree)
    }

    /// Checks the unit value, completeness, reality on self-adjoint classes
    /// and the moment bound `|tau(w)| <= R^(weight)`.
    pub fn validate(&self, tol: T) -> Result<()> {
        if (self.values.get(&Word::unit()).copied().unwrap_or_else(zero) - one::<T>()).modulus() > tol {
            return Err(Error::invalid("tau(1) != 1"));
        }
        let r = T::lit(self.layout.cutoff());
        for w in self.classes() {
            let v = self.value(&w)?;
            if w.adjoint().trace_class().0 == w && v.im.abs() > tol {
                return Err(Error::invalid(format!("tau({w}) should be real, got {v}")));
            }
            let bound = r.powi(w.weight() as i32);
            if v.modulus() > bound * (T::one() + tol) + tol {
                return Err(Error::invalid(format!("|tau({w})| = {} exceeds {bound}", v.modulus())));
            }
        }
        Ok(())
    }

    /// Restriction to words of length `<= m`.
    pub fn truncate(&self, m: usize) -> Self {
        let mut out = self.clone();
        out.degree = m.min(self.degree);
        out.values.retain(|w, _| w.len() <= out.degree);
        out
    }

    /// The state applied to a polynomial, `sum_w c_w tau(w)`.
    pub fn apply<C: Coeff>(&self, p: &NCPoly<C>) -> Result<Complex<T>> {
        let mut acc = zero::<T>();
        for (w, c) in p.terms() {
            let c = c.to_c64();
            acc += Complex::new(T::lit(c.re), T::lit(c.im)) * self.value(w)?;
        }
        Ok(acc)
    }

    /// Single-variable family `i` (with `r(i) = 1`) distributed as `mu`:
    /// `tau(x[i,1]^k) = moment_k(mu)`.
    pub fn from_measure(
        layout: &Arc<FamilyLayout>,
        alphabet: Alphabet,
        family: usize,
        mu: &SpectralMeasure<T>,
        m: usize,
    ) -> Result<Self> {
        if family >= layout.n() || layout.r(family) != 1 {
            return Err(Error::invalid("from_measure needs a single-variable family"));
        }
        let g = match alphabet {
            Alphabet::X => Generator::x(family, 0),
            Alphabet::UZ => Generator::z(family, 0),
        };
        let mut t = Self::new(layout, alphabet, m);
        for k in 1..=m {
            t.set(&Word::new(std::iter::repeat_n(g, k)), Complex::new(mu.moment(k), T::zero()))?;
        }
        Ok(t)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let values: BTreeMap<String, [f64; 2]> = self
            .values
            .iter()
            .map(|(w, v)| (w.to_string(), [v.re.to_f64_lossy(), v.im.to_f64_lossy()]))
            .collect();
        serde_json::json!({
            "meta": {
                "layout": self.layout.sizes(),
                "m": self.degree,
                "R": self.layout.cutoff(),
                "alphabet": self.alphabet,
            },
            "values": values,
        })
    }

    /// Inverse of [`MomentTable::to_json`]; word keys use the polynomial
    /// grammar restricted to products.
    pub fn from_json(v: &serde_json::Value, layout: &Arc<FamilyLayout>) -> Result<Self> {
        let meta = v.get("meta").ok_or_else(|| Error::invalid("moment table lacks 'meta'"))?;
        let m = meta.get("m").and_then(|m| m.as_u64()).ok_or_else(|| Error::invalid("meta.m"))?;
        let alphabet: Alphabet = serde_json::from_value(
            meta.get("alphabet").cloned().ok_or_else(|| Error::invalid("meta.alphabet"))?,
        )?;
        let mut t = Self::new(layout, alphabet, m as usize);
        let values = v
            .get("values")
            .and_then(|x| x.as_object())
            .ok_or_else(|| Error::invalid("moment table lacks 'values'"))?;
        for (k, val) in values {
            let p: crate::PolyF64 = crate::ncpoly::parse(k, layout)?;
            let (w, _) = p
                .terms()
                .next()
                .filter(|_| p.num_terms() == 1)
                .ok_or_else(|| Error::invalid(format!("'{k}' is not a single word")))?;
            let pair: [f64; 2] = serde_json::from_value(val.clone())?;
            t.set(w, Complex::new(T::lit(pair[0]), T::lit(pair[1])))?;
        }
        Ok(t)
    }
}

/// Table of `tr_N` over all classes of length `<= m` for the tuple's
/// self-adjoint slots (`x` alphabet) or slots plus unitaries (`uz`).
pub fn empirical_state_in<T: Scalar>(
    tuple: &MatrixTuple<T>,
    alphabet: Alphabet,
    m: usize,
) -> Result<MomentTable<T>> {
    if m == 0 {
        return Err(Error::invalid("moment degree must be at least 1"));
    }
    let layout = tuple.layout();
    let letters = alphabet.letters(layout);
    let classes = trace_classes(&letters, m);
    let mut table = MomentTable::new(layout, alphabet, m);
    let values = traces_by_prefix(tuple, &classes)?;
    for (w, v) in classes.iter().zip(values) {
        table.set(w, v)?;
    }
    Ok(table)
}

/// `tr_N` of each word, sharing prefix products between consecutive words
/// in the given order (sorted input maximises sharing).
pub fn traces_by_prefix<T: Scalar>(tuple: &MatrixTuple<T>, words: &[Word]) -> Result<Vec<Complex<T>>> {
    let mut stack: Vec<(Generator, CMat<T>)> = Vec::new();
    let mut out = Vec::with_capacity(words.len());
    let letter = |g: Generator| -> Result<CMat<T>> {
        let m = tuple.letter(g)?;
        Ok(if matches!(g, Generator::UStar(_)) { m.adjoint() } else { m.clone() })
    };
    for w in words {
        let s = w.letters();
        if s.is_empty() {
            out.push(one());
            continue;
        }
        let common = stack.iter().zip(s).take_while(|((g, _), h)| g == *h).count();
        stack.truncate(common.min(s.len() - 1));
        while stack.len() < s.len() - 1 {
            let g = s[stack.len()];
            let next = match stack.last() {
                None => letter(g)?,
                Some((_, prev)) => prev * letter(g)?,
            };
            stack.push((g, next));
        }
        let last = letter(s[s.len() - 1])?;
        out.push(match stack.last() {
            None => crate::randmat::trace_n(&last),
            Some((_, prev)) => trace_of_product(prev, &last),
        });
    }
    Ok(out)
}

/// Empirical tracial state `w -> tr_N(w(A))` on `x` words of length `<= m`.
pub fn empirical_state<T: Scalar>(tuple: &MatrixTuple<T>, m: usize) -> Result<MomentTable<T>> {
    empirical_state_in(tuple, Alphabet::X, m)
}

/// Empirical orbital state `w -> tr_N(w((V_i Xi_i V_i*)))` on `x` words.
pub fn empirical_orbital_state<T: Scalar>(
    layout: &Arc<FamilyLayout>,
    unitaries: &[CMat<T>],
    microstates: &[Vec<CMat<T>>],
    m: usize,
) -> Result<MomentTable<T>> {
    let tuple = MatrixTuple::new_unchecked_norm(layout, microstates.to_vec(), Some(unitaries.to_vec()))?;
    empirical_state(&tuple.conjugated()?, m)
}

/// `max |t1(w) - t2(w)|` over classes of length `<= m`.
pub fn moment_distance<T: Scalar>(t1: &MomentTable<T>, t2: &MomentTable<T>, m: usize) -> Result<T> {
    if !same_layout(t1.layout(), t2.layout()) || t1.alphabet() != t2.alphabet() {
        return Err(Error::dim("moment tables over different layouts"));
    }
    if m > t1.degree() || m > t2.degree() {
        return Err(Error::invalid("distance degree exceeds table degree"));
    }
    let mut d = T::zero();
    for w in trace_classes(&t1.alphabet().letters(t1.layout()), m) {
        d = d.max((t1.value(&w)? - t2.value(&w)?).modulus());
    }
    Ok(d)
}

/// Membership in the microstate set: every word of length `<= m` deviates
/// from `target` by less than `delta`.
pub fn microstate_check<T: Scalar>(
    tuple: &MatrixTuple<T>,
    target: &MomentTable<T>,
    m: usize,
    delta: T,
) -> Result<bool> {
    if target.degree() < m {
        return Err(Error::invalid("target degree below m"));
    }
    let emp = empirical_state(tuple, m)?;
    Ok(moment_distance(&emp, target, m)? < delta)
}

/// Orbital membership: the conjugated tuple `(V_i Xi_i V_i*)` lies in the
/// microstate set of the joint target.
pub fn orbital_microstate_check<T: Scalar>(
    layout: &Arc<FamilyLayout>,
    unitaries: &[CMat<T>],
    microstates: &[Vec<CMat<T>>],
    target: &MomentTable<T>,
    m: usize,
    delta: T,
) -> Result<bool> {
    if target.degree() < m {
        return Err(Error::invalid("target degree below m"));
    }
    let emp = empirical_orbital_state(layout, unitaries, microstates, m)?;
    Ok(moment_distance(&emp, target, m)? < delta)
}

/// Pointwise affine combination of tables.
pub fn mixture<T: Scalar>(tables: &[MomentTable<T>], weights: &[T]) -> Result<MomentTable<T>> {
    let first = tables.first().ok_or_else(|| Error::invalid("mixture of no tables"))?;
    if tables.len() != weights.len() {
        return Err(Error::invalid("one weight per table is required"));
    }
    if weights.iter().any(|&w| w < T::zero()) {
        return Err(Error::invalid("negative mixture weight"));
    }
    let total = weights.iter().fold(T::zero(), |s, &w| s + w);
    if (total - T::one()).abs() > T::lit(1e-9).max(T::eps() * T::lit(16.0)) {
        return Err(Error::invalid("mixture weights must sum to 1"));
    }
    for t in tables {
        if !same_layout(t.layout(), first.layout()) || t.alphabet() != first.alphabet() || t.degree() != first.degree() {
            return Err(Error::dim("mixture of tables with different shapes"));
        }
    }
    let mut out = MomentTable::new(first.layout(), first.alphabet(), first.degree());
    for w in first.classes() {
        let mut v = zero::<T>();
        for (t, &wt) in tables.iter().zip(weights) {
            v += t.value(&w)? * wt;
        }
        out.set(&w, v)?;
    }
    Ok(out)
}

/// A state on the letters of one free component.
pub trait MarginalState<T: Scalar>: Send + Sync {
    fn moment(&self, w: &Word) -> Result<Complex<T>>;
}

impl<T: Scalar> MarginalState<T> for MomentTable<T> {
    fn moment(&self, w: &Word) -> Result<Complex<T>> {
        self.value(w)
    }
}

/// Haar unitary: `tau(u^k) = [k = 0]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct HaarUnitary;

impl<T: Scalar> MarginalState<T> for HaarUnitary {
    fn moment(&self, w: &Word) -> Result<Complex<T>> {
        let net: i64 = w
            .letters()
            .iter()
            .map(|g| match g {
                Generator::U(_) => 1,
                Generator::UStar(_) => -1,
                _ => 0,
            })
            .sum();
        Ok(if net == 0 { one() } else { zero() })
    }
}

/// Evaluator of the free product of per-component states.
///
/// Letters of family `i` (`x` or `z`) belong to component `i`; the unitary
/// letters of family `i` belong to component `n + i`. Mixed words are
/// expanded by the centering recursion: an alternating product of centered
/// elements has trace zero.
pub struct FreeProduct<T: Scalar> {
    n: usize,
    components: Vec<Option<Arc<dyn MarginalState<T>>>>,
    memo: HashMap<Word, Complex<T>>,
}

impl<T: Scalar> FreeProduct<T> {
    /// `families[i]` is the state of family `i`; `unitaries[i]` (optional)
    /// the state of `u[i]`.
    pub fn new(
        families: Vec<Arc<dyn MarginalState<T>>>,
        unitaries: Option<Vec<Arc<dyn MarginalState<T>>>>,
    ) -> Self {
        let n = families.len();
        let mut components: Vec<Option<Arc<dyn MarginalState<T>>>> = families.into_iter().map(Some).collect();
        match unitaries {
            Some(us) => components.extend(us.into_iter().map(Some)),
            None => components.extend((0..n).map(|_| None)),
        }
        FreeProduct { n, components, memo: HashMap::new() }
    }

    /// Free product of the given family tables with independent Haar
    /// unitaries, one per family.
    pub fn with_haar(families: &[MomentTable<T>]) -> Self {
        let fams = families.iter().map(|t| Arc::new(t.clone()) as Arc<dyn MarginalState<T>>).collect();
        let n = families.len();
        let us = (0..n).map(|_| Arc::new(HaarUnitary) as Arc<dyn MarginalState<T>>).collect();
        Self::new(fams, Some(us))
    }

    fn component(&self, g: Generator) -> usize {
        if g.is_unitary() {
            self.n + g.family()
        } else {
            g.family()
        }
    }

    fn marginal(&self, comp: usize, w: &Word) -> Result<Complex<T>> {
        match self.components.get(comp).and_then(|c| c.as_ref()) {
            Some(c) => c.moment(w),
            None => Err(Error::invalid(format!("no state given for the component of {w}"))),
        }
    }

    /// `tau(w)` in the free product state.
    pub fn eval(&mut self, w: &Word) -> Result<Complex<T>> {
        let (rep, conj) = w.trace_class();
        let v = self.eval_class(rep)?;
        Ok(if conj { v.conj() } else { v })
    }

    fn eval_class(&mut self, rep: Word) -> Result<Complex<T>> {
        if rep.is_unit() {
            return Ok(one());
        }
        if let Some(v) = self.memo.get(&rep) {
            return Ok(*v);
        }
        let s = rep.letters();
        // rotate so that the word does not start inside a block
        let c0 = self.component(s[0]);
        let start = if self.component(s[s.len() - 1]) == c0 {
            match s.iter().position(|&g| self.component(g) != c0) {
                None => {
                    let v = self.marginal(c0, &rep)?;
                    self.memo.insert(rep, v);
                    return Ok(v);
                }
                Some(k) => k,
            }
        } else {
            0
        };
        let rotated = rep.rotate(start);
        let mut blocks: Vec<Word> = Vec::new();
        let mut means: Vec<Complex<T>> = Vec::new();
        let r = rotated.letters();
        let mut a = 0;
        while a < r.len() {
            let c = self.component(r[a]);
            let mut b = a + 1;
            while b < r.len() && self.component(r[b]) == c {
                b += 1;
            }
            let block = rotated.slice(a, b);
            means.push(self.marginal(c, &block)?);
            blocks.push(block);
            a = b;
        }
        let free: Vec<usize> = (0..blocks.len()).filter(|&j| means[j] != zero()).collect();
        let forced: Vec<bool> = (0..blocks.len()).map(|j| means[j] == zero()).collect();
        let mut total = zero::<T>();
        // S = forced blocks plus a subset of the free ones, S != everything
        for mask in 0u64..(1u64 << free.len()) {
            if mask == (1u64 << free.len()) - 1 {
                continue;
            }
            let mut coef = one::<T>();
            let mut in_s = forced.clone();
            for (bit, &j) in free.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    in_s[j] = true;
                } else {
                    coef *= -means[j];
                }
            }
            let word = Word::new(
                blocks
                    .iter()
                    .zip(&in_s)
                    .filter(|(_, &keep)| keep)
                    .flat_map(|(b, _)| b.letters().iter().copied()),
            );
            total += coef * self.eval(&word)?;
        }
        let v = -total;
        self.memo.insert(rep, v);
        Ok(v)
    }
}

/// Free product of per-family marginal tables on `x` words up to `m`.
///
/// `marginals[i]` must be a table over the joint layout holding the words of
/// family `i` up to degree `m`.
pub fn free_product<T: Scalar>(marginals: &[MomentTable<T>], m: usize) -> Result<MomentTable<T>> {
    let first = marginals.first().ok_or_else(|| Error::invalid("free product of no families"))?;
    let layout = first.layout().clone();
    if marginals.len() != layout.n() {
        return Err(Error::dim("one marginal per family is required"));
    }
    for t in marginals {
        if t.degree() < m {
            return Err(Error::invalid(format!("marginal degree {} below {m}", t.degree())));
        }
        if !same_layout(t.layout(), &layout) {
            return Err(Error::dim("marginals over different layouts"));
        }
    }
    let alphabet = first.alphabet();
    let fams = marginals.iter().map(|t| Arc::new(t.clone()) as Arc<dyn MarginalState<T>>).collect();
    let mut fp = FreeProduct::new(fams, None);
    let mut out = MomentTable::new(&layout, alphabet, m);
    let letters: Vec<Generator> = alphabet.letters(&layout).into_iter().filter(|g| !g.is_unitary()).collect();
    for w in trace_classes(&letters, m) {
        out.set(&w, fp.eval(&w)?)?;
    }
    Ok(out)
}

/// Free cumulants `kappa_1..kappa_m` of a single-variable moment sequence
/// `moments[k] = tau(x^k)` (with `moments[0] = 1`).
///
/// Uses `m_n = sum_s kappa_s [z^(n-s)] M(z)^s` with `M(z) = sum_k m_k z^k`.
pub fn free_cumulants<T: Scalar>(moments: &[T]) -> Vec<T> {
    let m = moments.len().saturating_sub(1);
    let mut kappa = vec![T::zero(); m + 1];
    // powers[s][r] = [z^r] M(z)^s
    let mut powers: Vec<Vec<T>> = vec![unit_series(m)];
    for n in 1..=m {
        let mut s_sum = T::zero();
        for s in 1..n {
            ensure_power(&mut powers, moments, s, m);
            s_sum += kappa[s] * powers[s][n - s];
        }
        kappa[n] = moments[n] - s_sum;
    }
    kappa.remove(0);
    kappa
}

/// Inverse of [`free_cumulants`]: moments `1, m_1, .., m_k` from cumulants.
pub fn moments_from_cumulants<T: Scalar>(kappa: &[T]) -> Vec<T> {
    let m = kappa.len();
    let mut moments = vec![T::zero(); m + 1];
    moments[0] = T::one();
    let mut powers: Vec<Vec<T>> = vec![unit_series(m)];
    for n in 1..=m {
        let mut v = kappa[n - 1];
        for s in 1..n {
            // [z^(n-s)] M^s only needs moments of order < n
            powers.truncate(1);
            ensure_power(&mut powers, &moments, s, m);
            v += kappa[s - 1] * powers[s][n - s];
        }
        moments[n] = v;
    }
    moments
}

fn unit_series<T: Scalar>(m: usize) -> Vec<T> {
    let mut v = vec![T::zero(); m + 1];
    v[0] = T::one();
    v
}

fn ensure_power<T: Scalar>(powers: &mut Vec<Vec<T>>, moments: &[T], s: usize, m: usize) {
    while powers.len() <= s {
        let prev = powers.last().unwrap();
        let mut next = vec![T::zero(); m + 1];
        for (i, &a) in prev.iter().enumerate() {
            if a == T::zero() {
                continue;
            }
            for (j, &b) in moments.iter().enumerate().take(m + 1 - i) {
                next[i + j] += a * b;
            }
        }
        powers.push(next);
    }
}

/// Single-variable free entropy
/// `chi(mu) = iint log|s - t| dmu dmu + 3/4 + log(2 pi)/2`.
///
/// The log-energy is integrated in quantile coordinates,
/// `iint log|Q(p) - Q(q)| dp dq = -3/2 + iint log S(p, q) dp dq` with
/// `S(p, q) = (Q(p) - Q(q))/(p - q)`, using Gauss-Legendre panels graded
/// towards the endpoints. Laws with atoms give `-inf`.
pub fn chi_single<T: Scalar>(mu: &SpectralMeasure<T>) -> f64 {
    if mu.has_atoms() {
        return f64::NEG_INFINITY;
    }
    let log_energy = log_energy(|p| mu.quantile(T::lit(p)).to_f64_lossy());
    log_energy + 0.75 + 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn log_energy(q: impl Fn(f64) -> f64) -> f64 {
    let panels = graded_panels(24);
    let nodes = |order: usize| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (x, w) = gauss_legendre_unit(order);
        let mut ps = Vec::new();
        let mut ws = Vec::new();
        for win in panels.windows(2) {
            let (a, b) = (win[0], win[1]);
            for (xi, wi) in x.iter().zip(&w) {
                ps.push(a + (b - a) * xi);
                ws.push((b - a) * wi);
            }
        }
        let qs = ps.iter().map(|&p| q(p)).collect();
        (ps, ws, qs)
    };
    // distinct orders keep the two node sets disjoint
    let (p1, w1, q1) = nodes(16);
    let (p2, w2, q2) = nodes(17);
    let mut total = 0.0;
    for i in 0..p1.len() {
        let mut row = 0.0;
        for j in 0..p2.len() {
            let s = (q1[i] - q2[j]) / (p1[i] - p2[j]);
            row += w2[j] * if s > 0.0 { s.ln() } else { f64::NEG_INFINITY };
        }
        total += w1[i] * row;
    }
    total - 1.5
}

fn graded_panels(levels: i32) -> Vec<f64> {
    let mut left: Vec<f64> = (1..=levels).rev().map(|k| 0.5f64.powi(k + 1)).collect();
    left.insert(0, 0.0);
    left.push(0.5);
    let mut out = left.clone();
    for &x in left.iter().rev().skip(1) {
        out.push(1.0 - x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_panels_cover_unit_interval() {
        let p = graded_panels(5);
        assert_eq!(p[0], 0.0);
        assert_eq!(*p.last().unwrap(), 1.0);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cumulant_roundtrip_on_semicircle() {
        let m = [1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 5.0];
        let k = free_cumulants(&m);
        assert_eq!(k.len(), 6);
        for (i, &v) in k.iter().enumerate() {
            let expect = if i == 1 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-14, "kappa_{} = {v}", i + 1);
        }
        let back = moments_from_cumulants(&k);
        for (a, b) in back.iter().zip(&m) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn reduced_word_count() {
        let layout = FamilyLayout::singletons(1, 1.0).unwrap();
        // letters z, u, u': length-2 reduced words = 9 - 2
        let ws = reduced_words(&layout.uz_letters(), 2);
        assert_eq!(ws.iter().filter(|w| w.len() == 2).count(), 7);
    }
}
