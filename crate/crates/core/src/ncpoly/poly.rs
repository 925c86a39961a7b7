use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use super::{Coeff, FamilyLayout, Generator, PolyError, Word};

/// Finite linear combination of reduced words.
#[derive(Clone, Debug)]
pub struct NCPoly<C> {
    layout: Arc<FamilyLayout>,
    terms: BTreeMap<Word, C>,
}

impl<C: Coeff> PartialEq for NCPoly<C> {
    fn eq(&self, other: &Self) -> bool {
        same_layout(&self.layout, &other.layout) && self.terms == other.terms
    }
}

pub(crate) fn same_layout(a: &Arc<FamilyLayout>, b: &Arc<FamilyLayout>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl<C: Coeff> NCPoly<C> {
    pub fn zero(layout: &Arc<FamilyLayout>) -> Self {
        NCPoly { layout: layout.clone(), terms: BTreeMap::new() }
    }

    pub fn one(layout: &Arc<FamilyLayout>) -> Self {
        Self::constant(layout, C::one())
    }

    pub fn constant(layout: &Arc<FamilyLayout>, c: C) -> Self {
        let mut p = Self::zero(layout);
        p.add_term(Word::unit(), c);
        p
    }

    pub fn generator(layout: &Arc<FamilyLayout>, g: Generator) -> Result<Self, PolyError> {
        layout.check(g)?;
        Ok(Self::from_word_unchecked(layout, Word::letter(g)))
    }

    pub fn x(layout: &Arc<FamilyLayout>, i: usize, j: usize) -> Result<Self, PolyError> {
        Self::generator(layout, Generator::x(i, j))
    }

    pub fn z(layout: &Arc<FamilyLayout>, i: usize, j: usize) -> Result<Self, PolyError> {
        Self::generator(layout, Generator::z(i, j))
    }

    pub fn u(layout: &Arc<FamilyLayout>, i: usize) -> Result<Self, PolyError> {
        Self::generator(layout, Generator::u(i))
    }

    pub fn ustar(layout: &Arc<FamilyLayout>, i: usize) -> Result<Self, PolyError> {
        Self::generator(layout, Generator::ustar(i))
    }

    pub fn from_word(layout: &Arc<FamilyLayout>, w: Word) -> Result<Self, PolyError> {
        for &g in w.letters() {
            layout.check(g)?;
        }
        Ok(Self::from_word_unchecked(layout, w))
    }

    pub(crate) fn from_word_unchecked(layout: &Arc<FamilyLayout>, w: Word) -> Self {
        let mut p = Self::zero(layout);
        p.terms.insert(w, C::one());
        p
    }

    pub fn from_terms(
        layout: &Arc<FamilyLayout>,
        terms: impl IntoIterator<Item = (Word, C)>,
    ) -> Result<Self, PolyError> {
        let mut p = Self::zero(layout);
        for (w, c) in terms {
            for &g in w.letters() {
                layout.check(g)?;
            }
            p.add_term(w, c);
        }
        Ok(p)
    }

    pub fn layout(&self) -> &Arc<FamilyLayout> {
        &self.layout
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &C)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, w: &Word) -> C {
        self.terms.get(w).cloned().unwrap_or_else(C::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximal word length; 0 for constants and for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::len).max().unwrap_or(0)
    }

    /// Accumulates `c * w`, dropping the entry if it cancels.
    pub(crate) fn add_term(&mut self, w: Word, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(w) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = e.get().clone() + c;
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    fn check_layout(&self, other: &Self) -> Result<(), PolyError> {
        if same_layout(&self.layout, &other.layout) {
            Ok(())
        } else {
            Err(PolyError::LayoutMismatch)
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_layout(other)?;
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_layout(other)?;
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), -c.clone());
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_layout(other)?;
        let mut out = Self::zero(&self.layout);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                out.add_term(a.mul(b), ca.clone() * cb.clone());
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::zero(&self.layout);
        for (w, a) in &self.terms {
            out.add_term(w.clone(), a.clone() * c.clone());
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::one(&self.layout);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Conjugate-linear anti-multiplicative involution.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(&self.layout);
        for (w, c) in &self.terms {
            out.add_term(w.adjoint(), c.conj());
        }
        out
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.terms.iter().all(|(w, c)| self.coeff(&w.adjoint()) == c.conj())
    }

    /// True if no `u`, `u'` or `z` letters occur.
    pub fn is_x_alphabet(&self) -> bool {
        self.letters().all(|g| g.is_x())
    }

    /// True if no `x` letters occur.
    pub fn is_uz_alphabet(&self) -> bool {
        self.letters().all(|g| !g.is_x())
    }

    fn letters(&self) -> impl Iterator<Item = Generator> + '_ {
        self.terms.keys().flat_map(|w| w.letters().iter().copied())
    }

    /// Applies `f` to every term, accumulating the resulting polynomials.
    pub fn map_terms<D: Coeff>(&self, mut f: impl FnMut(&Word, &C) -> Option<(Word, D)>) -> NCPoly<D> {
        let mut out = NCPoly::<D>::zero(&self.layout);
        for (w, c) in &self.terms {
            if let Some((w2, d)) = f(w, c) {
                out.add_term(w2, d);
            }
        }
        out
    }

    /// Converts coefficients through `Complex<f64>`.
    pub fn to_numeric<D: Coeff>(&self) -> NCPoly<D> {
        self.map_terms(|w, c| Some((w.clone(), D::from_c64(c.to_c64()))))
    }

    /// Self-adjoint part `(p + p*)/2`.
    pub fn hermitian_part(&self) -> Self {
        let half = C::from_c64(num_complex::Complex::new(0.5, 0.0));
        (self + &self.adjoint()).scale(&half)
    }
}

impl<'a, C: Coeff> Add<&'a NCPoly<C>> for &'a NCPoly<C> {
    type Output = NCPoly<C>;
    fn add(self, rhs: &'a NCPoly<C>) -> NCPoly<C> {
        self.try_add(rhs).expect("polynomials with different layouts")
    }
}

impl<'a, C: Coeff> Sub<&'a NCPoly<C>> for &'a NCPoly<C> {
    type Output = NCPoly<C>;
    fn sub(self, rhs: &'a NCPoly<C>) -> NCPoly<C> {
        self.try_sub(rhs).expect("polynomials with different layouts")
    }
}

impl<'a, C: Coeff> Mul<&'a NCPoly<C>> for &'a NCPoly<C> {
    type Output = NCPoly<C>;
    fn mul(self, rhs: &'a NCPoly<C>) -> NCPoly<C> {
        self.try_mul(rhs).expect("polynomials with different layouts")
    }
}

impl<C: Coeff> Add for NCPoly<C> {
    type Output = NCPoly<C>;
    fn add(self, rhs: NCPoly<C>) -> NCPoly<C> {
        &self + &rhs
    }
}

impl<C: Coeff> Sub for NCPoly<C> {
    type Output = NCPoly<C>;
    fn sub(self, rhs: NCPoly<C>) -> NCPoly<C> {
        &self - &rhs
    }
}

impl<C: Coeff> Mul for NCPoly<C> {
    type Output = NCPoly<C>;
    fn mul(self, rhs: NCPoly<C>) -> NCPoly<C> {
        &self * &rhs
    }
}

impl<C: Coeff> Neg for &NCPoly<C> {
    type Output = NCPoly<C>;
    fn neg(self) -> NCPoly<C> {
        self.scale(&-C::one())
    }
}

impl<C: Coeff> Neg for NCPoly<C> {
    type Output = NCPoly<C>;
    fn neg(self) -> NCPoly<C> {
        -&self
    }
}
