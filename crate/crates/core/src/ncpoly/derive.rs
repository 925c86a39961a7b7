use super::{Coeff, Generator, NCPoly, PolyError, TensorNCPoly, Word};

/// Which derivation to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Derivation {
    /// `d_i u_j = [i=j] u_i (x) 1`, `d_i u_j' = -[i=j] 1 (x) u_i'`, zero on `z`.
    /// Acts on the `(u, z)` alphabet.
    Unitary(usize),
    /// Free difference quotient in `x[i,j]`: `a x[i,j] b` contributes `a (x) b`.
    DifferenceQuotient(usize, usize),
    /// Liberation derivation of family `i` on the `x` alphabet, obtained by
    /// rotating `x[i,j] = u[i] z[i,j] u'[i]`, differentiating in `u[i]` and
    /// sandwiching with `-(1 (x) u[i]) (.) (u'[i] (x) 1)`.
    Liberation(usize),
}

pub fn derive<C: Coeff>(mode: Derivation, p: &NCPoly<C>) -> Result<TensorNCPoly<C>, PolyError> {
    let layout = p.layout();
    match mode {
        Derivation::Unitary(i) => {
            check_family(p, i)?;
            if !p.is_uz_alphabet() {
                return Err(PolyError::Alphabet(
                    "the unitary derivation acts on u/z polynomials; substitute x first".into(),
                ));
            }
            let mut out = TensorNCPoly::zero(layout);
            for (w, c) in p.terms() {
                unitary_word(i, w, c, &mut out);
            }
            Ok(out)
        }
        Derivation::DifferenceQuotient(i, j) => {
            layout.check(Generator::x(i, j))?;
            if !p.is_x_alphabet() {
                return Err(PolyError::Alphabet("the difference quotient acts on x polynomials".into()));
            }
            let target = Generator::x(i, j);
            let mut out = TensorNCPoly::zero(layout);
            for (w, c) in p.terms() {
                for (k, &g) in w.letters().iter().enumerate() {
                    if g == target {
                        out.add_term(w.slice(0, k), w.slice(k + 1, w.len()), c.clone());
                    }
                }
            }
            Ok(out)
        }
        Derivation::Liberation(i) => {
            check_family(p, i)?;
            if !p.is_x_alphabet() {
                return Err(PolyError::Alphabet("the liberation derivation acts on x polynomials".into()));
            }
            let rotated = substitute_x(p)?;
            let d = derive(Derivation::Unitary(i), &rotated)?;
            let (u, us) = (Word::letter(Generator::u(i)), Word::letter(Generator::ustar(i)));
            let mut sandwiched = TensorNCPoly::zero(layout);
            for (a, b, c) in d.terms() {
                sandwiched.add_term(a.mul(&us), u.mul(b), -c.clone());
            }
            sandwiched.map_legs(
                |w| {
                    let x = unsubstitute_word(w).ok_or_else(|| {
                        PolyError::NotExpressible(format!("{w} is not in the image of x -> u z u'"))
                    })?;
                    Ok(NCPoly::from_word_unchecked(layout, x))
                },
                |c| c.clone(),
            )
        }
    }
}

fn check_family<C: Coeff>(p: &NCPoly<C>, i: usize) -> Result<(), PolyError> {
    if i >= p.layout().n() {
        return Err(PolyError::IndexOutOfBounds(format!(
            "family {} exceeds n = {}",
            i + 1,
            p.layout().n()
        )));
    }
    Ok(())
}

fn unitary_word<C: Coeff>(i: usize, w: &Word, c: &C, out: &mut TensorNCPoly<C>) {
    let s = w.letters();
    for (k, &g) in s.iter().enumerate() {
        match g {
            Generator::U(f) if f as usize == i => {
                out.add_term(w.slice(0, k + 1), w.slice(k + 1, s.len()), c.clone());
            }
            Generator::UStar(f) if f as usize == i => {
                out.add_term(w.slice(0, k), w.slice(k, s.len()), -c.clone());
            }
            _ => {}
        }
    }
}

/// Contraction `a (x) b -> b a`.
pub fn theta<C: Coeff>(t: &TensorNCPoly<C>) -> NCPoly<C> {
    let mut out = NCPoly::zero(t.layout());
    for (a, b, c) in t.terms() {
        out.add_term(b.mul(a), c.clone());
    }
    out
}

/// Contraction `sum_k a_k (x) b_k -> sum_k b_k a_k`; the same map as
/// [`theta`], applied to the output of the liberation derivation.
pub fn theta_bar<C: Coeff>(t: &TensorNCPoly<C>) -> NCPoly<C> {
    theta(t)
}

/// Cyclic gradient `D_i = theta . d_i` of a `(u, z)` polynomial.
pub fn cyclic_gradient<C: Coeff>(i: usize, h: &NCPoly<C>) -> Result<NCPoly<C>, PolyError> {
    Ok(theta(&derive(Derivation::Unitary(i), h)?))
}

/// The *-homomorphism `x[i,j] -> u[i] z[i,j] u'[i]`.
pub fn substitute_x<C: Coeff>(p: &NCPoly<C>) -> Result<NCPoly<C>, PolyError> {
    if !p.is_x_alphabet() {
        return Err(PolyError::Alphabet("substitution expects an x polynomial".into()));
    }
    Ok(p.map_terms(|w, c| Some((substitute_word(w), c.clone()))))
}

pub(crate) fn substitute_word(w: &Word) -> Word {
    Word::new(w.letters().iter().flat_map(|&g| match g {
        Generator::X(i, j) => [Generator::U(i), Generator::Z(i, j), Generator::UStar(i)],
        _ => unreachable!("x alphabet checked by caller"),
    }))
}

/// Inverse of [`substitute_word`] on its image; `None` for other words.
///
/// A reduced `(u, z)` word lies in the image iff it has the block form
/// `u[a] Z_1 u'[a] u[b] Z_2 u'[b] ...` with consecutive families distinct and
/// every `Z_k` a nonempty run of `z` letters of its block's family.
pub fn unsubstitute_word(w: &Word) -> Option<Word> {
    let s = w.letters();
    let mut out = Vec::with_capacity(s.len());
    let mut k = 0;
    while k < s.len() {
        let Generator::U(f) = s[k] else { return None };
        k += 1;
        let start = k;
        while k < s.len() {
            match s[k] {
                Generator::Z(i, j) if i == f => out.push(Generator::X(i, j)),
                _ => break,
            }
            k += 1;
        }
        if k == start || k == s.len() || s[k] != Generator::UStar(f) {
            return None;
        }
        k += 1;
    }
    Some(Word::from_reduced(out))
}

/// Rewrites a `(u, z)` polynomial in the image of [`substitute_x`] back in
/// `x` letters.
pub fn unsubstitute<C: Coeff>(p: &NCPoly<C>) -> Result<NCPoly<C>, PolyError> {
    let mut err = None;
    let out = p.map_terms(|w, c| match unsubstitute_word(w) {
        Some(x) => Some((x, c.clone())),
        None => {
            err.get_or_insert_with(|| {
                PolyError::NotExpressible(format!("{w} is not in the image of x -> u z u'"))
            });
            None
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// `-u[i] (D_i h~) u'[i]` where `h~` is `h` rotated into the `(u, z)` alphabet.
///
/// Cross-checked against `theta_bar` of the liberation derivation of `h`; a
/// disagreement is reported as an error.
pub fn liberation_gradient<C: Coeff>(i: usize, h: &NCPoly<C>) -> Result<NCPoly<C>, PolyError> {
    if !h.is_self_adjoint() {
        return Err(PolyError::NotSelfAdjoint);
    }
    let rotated = substitute_x(h)?;
    let d = cyclic_gradient(i, &rotated)?;
    let u = Word::letter(Generator::u(i));
    let us = Word::letter(Generator::ustar(i));
    let j = d.map_terms(|w, c| Some((u.mul(w).mul(&us), -c.clone())));
    let via_liberation = substitute_x(&theta_bar(&derive(Derivation::Liberation(i), h)?))?;
    if j != via_liberation {
        return Err(PolyError::IdentityViolated(format!(
            "liberation gradient mismatch in family {}",
            i + 1
        )));
    }
    Ok(j)
}

/// `sum_w |c_w| R^(number of x/z letters in w)`, an upper bound for the
/// universal C*-norm under the cutoff `R`.
pub fn norm_bound<C: Coeff>(p: &NCPoly<C>, cutoff: f64) -> f64 {
    p.terms().map(|(w, c)| c.modulus() * cutoff.powi(w.weight() as i32)).sum()
}
