use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use super::poly::same_layout;
use super::{Coeff, FamilyLayout, NCPoly, PolyError, Word};

/// Element `sum_k c_k a_k (x) b_k` of the algebraic tensor square, stored as a
/// map from word pairs to coefficients.
///
/// Multiplication is componentwise: `(a (x) b)(c (x) d) = ac (x) bd`.
#[derive(Clone, Debug)]
pub struct TensorNCPoly<C> {
    layout: Arc<FamilyLayout>,
    terms: BTreeMap<(Word, Word), C>,
}

impl<C: Coeff> PartialEq for TensorNCPoly<C> {
    fn eq(&self, other: &Self) -> bool {
        same_layout(&self.layout, &other.layout) && self.terms == other.terms
    }
}

impl<C: Coeff> TensorNCPoly<C> {
    pub fn zero(layout: &Arc<FamilyLayout>) -> Self {
        TensorNCPoly { layout: layout.clone(), terms: BTreeMap::new() }
    }

    /// Elementary tensor `a (x) b`.
    pub fn tensor(a: &NCPoly<C>, b: &NCPoly<C>) -> Result<Self, PolyError> {
        if !same_layout(a.layout(), b.layout()) {
            return Err(PolyError::LayoutMismatch);
        }
        let mut out = Self::zero(a.layout());
        for (wa, ca) in a.terms() {
            for (wb, cb) in b.terms() {
                out.add_term(wa.clone(), wb.clone(), ca.clone() * cb.clone());
            }
        }
        Ok(out)
    }

    pub fn from_terms(
        layout: &Arc<FamilyLayout>,
        terms: impl IntoIterator<Item = (Word, Word, C)>,
    ) -> Result<Self, PolyError> {
        let mut out = Self::zero(layout);
        for (a, b, c) in terms {
            for &g in a.letters().iter().chain(b.letters()) {
                layout.check(g)?;
            }
            out.add_term(a, b, c);
        }
        Ok(out)
    }

    pub fn layout(&self) -> &Arc<FamilyLayout> {
        &self.layout
    }

    pub(crate) fn add_term(&mut self, a: Word, b: Word, c: C) {
        if c.is_zero() {
            return;
        }
        let key = (a, b);
        let next = match self.terms.get(&key) {
            Some(old) => old.clone() + c,
            None => c,
        };
        if next.is_zero() {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, next);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Word, &C)> {
        self.terms.iter().map(|((a, b), c)| (a, b, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, a: &Word, b: &Word) -> C {
        self.terms.get(&(a.clone(), b.clone())).cloned().unwrap_or_else(C::zero)
    }

    /// Canonical decomposition `sum_a a (x) q_a`, grouped by the left word.
    pub fn pairs(&self) -> Vec<(NCPoly<C>, NCPoly<C>)> {
        let mut out: Vec<(NCPoly<C>, NCPoly<C>)> = Vec::new();
        let mut current: Option<(Word, NCPoly<C>)> = None;
        for ((a, b), c) in &self.terms {
            match &mut current {
                Some((wa, q)) if wa == a => q.add_term(b.clone(), c.clone()),
                _ => {
                    if let Some((wa, q)) = current.take() {
                        out.push((NCPoly::from_word_unchecked(&self.layout, wa), q));
                    }
                    let mut q = NCPoly::zero(&self.layout);
                    q.add_term(b.clone(), c.clone());
                    current = Some((a.clone(), q));
                }
            }
        }
        if let Some((wa, q)) = current {
            out.push((NCPoly::from_word_unchecked(&self.layout, wa), q));
        }
        out
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
        for ((a, b), c) in &other.terms {
            out.add_term(a.clone(), b.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.try_add(&-other)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_layout(other)?;
        let mut out = Self::zero(&self.layout);
        for ((a, b), c) in &self.terms {
            for ((a2, b2), c2) in &other.terms {
                out.add_term(a.mul(a2), b.mul(b2), c.clone() * c2.clone());
            }
        }
        Ok(out)
    }

    /// `(p (x) 1) * self`.
    pub fn left_mul(&self, p: &NCPoly<C>) -> Result<Self, PolyError> {
        Self::tensor(p, &NCPoly::one(&self.layout))?.try_mul(self)
    }

    /// `self * (1 (x) q)`.
    pub fn right_mul(&self, q: &NCPoly<C>) -> Result<Self, PolyError> {
        self.try_mul(&Self::tensor(&NCPoly::one(&self.layout), q)?)
    }

    pub fn scale(&self, s: &C) -> Self {
        let mut out = Self::zero(&self.layout);
        for ((a, b), c) in &self.terms {
            out.add_term(a.clone(), b.clone(), c.clone() * s.clone());
        }
        out
    }

    /// `(a (x) b)* = a* (x) b*`.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(&self.layout);
        for ((a, b), c) in &self.terms {
            out.add_term(a.adjoint(), b.adjoint(), c.conj());
        }
        out
    }

    /// Maps both legs through `f`, which must be linear on words.
    pub fn map_legs<D: Coeff>(
        &self,
        mut f: impl FnMut(&Word) -> Result<NCPoly<D>, PolyError>,
        conv: impl Fn(&C) -> D,
    ) -> Result<TensorNCPoly<D>, PolyError> {
        let mut out = TensorNCPoly::<D>::zero(&self.layout);
        for ((a, b), c) in &self.terms {
            let pa = f(a)?;
            let pb = f(b)?;
            let c = conv(c);
            for (wa, ca) in pa.terms() {
                for (wb, cb) in pb.terms() {
                    out.add_term(wa.clone(), wb.clone(), c.clone() * ca.clone() * cb.clone());
                }
            }
        }
        Ok(out)
    }

    pub fn to_numeric<D: Coeff>(&self) -> TensorNCPoly<D> {
        let mut out = TensorNCPoly::<D>::zero(&self.layout);
        for ((a, b), c) in &self.terms {
            out.add_term(a.clone(), b.clone(), D::from_c64(c.to_c64()));
        }
        out
    }

    /// Maximal `len(a) + len(b)` over the stored terms.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|(a, b)| a.len() + b.len()).max().unwrap_or(0)
    }
}

impl<C: Coeff> std::fmt::Display for TensorNCPoly<C> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let pairs = self.pairs();
        if pairs.is_empty() {
            return write!(f, "0");
        }
        for (k, (a, b)) in pairs.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{a} (x) ({b})")?;
        }
        Ok(())
    }
}

impl<'a, C: Coeff> Add<&'a TensorNCPoly<C>> for &'a TensorNCPoly<C> {
    type Output = TensorNCPoly<C>;
    fn add(self, rhs: &'a TensorNCPoly<C>) -> TensorNCPoly<C> {
        self.try_add(rhs).expect("tensor polynomials with different layouts")
    }
}

impl<'a, C: Coeff> Sub<&'a TensorNCPoly<C>> for &'a TensorNCPoly<C> {
    type Output = TensorNCPoly<C>;
    fn sub(self, rhs: &'a TensorNCPoly<C>) -> TensorNCPoly<C> {
        self.try_sub(rhs).expect("tensor polynomials with different layouts")
    }
}

impl<'a, C: Coeff> Mul<&'a TensorNCPoly<C>> for &'a TensorNCPoly<C> {
    type Output = TensorNCPoly<C>;
    fn mul(self, rhs: &'a TensorNCPoly<C>) -> TensorNCPoly<C> {
        self.try_mul(rhs).expect("tensor polynomials with different layouts")
    }
}

impl<C: Coeff> Neg for &TensorNCPoly<C> {
    type Output = TensorNCPoly<C>;
    fn neg(self) -> TensorNCPoly<C> {
        self.scale(&-C::one())
    }
}
