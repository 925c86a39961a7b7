use std::fmt;

use serde::{Deserialize, Serialize};

/// A letter of the alphabet. Indices are 0-based; the text format is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Generator {
    /// Self-adjoint variable `x[i,j]`.
    X(u16, u16),
    /// Self-adjoint variable `z[i,j]` (the unrotated copy of `x[i,j]`).
    Z(u16, u16),
    /// Unitary `u[i]`.
    U(u16),
    /// Adjoint `u'[i]` of the unitary `u[i]`.
    UStar(u16),
}

impl Generator {
    pub fn x(i: usize, j: usize) -> Self {
        Generator::X(i as u16, j as u16)
    }

    pub fn z(i: usize, j: usize) -> Self {
        Generator::Z(i as u16, j as u16)
    }

    pub fn u(i: usize) -> Self {
        Generator::U(i as u16)
    }

    pub fn ustar(i: usize) -> Self {
        Generator::UStar(i as u16)
    }

    pub fn adjoint(self) -> Self {
        match self {
            Generator::U(i) => Generator::UStar(i),
            Generator::UStar(i) => Generator::U(i),
            g => g,
        }
    }

    pub fn family(self) -> usize {
        match self {
            Generator::X(i, _) | Generator::Z(i, _) | Generator::U(i) | Generator::UStar(i) => {
                i as usize
            }
        }
    }

    /// Slot index within the family for `x`/`z` letters.
    pub fn slot(self) -> Option<usize> {
        match self {
            Generator::X(_, j) | Generator::Z(_, j) => Some(j as usize),
            _ => None,
        }
    }

    pub fn is_unitary(self) -> bool {
        matches!(self, Generator::U(_) | Generator::UStar(_))
    }

    pub fn is_x(self) -> bool {
        matches!(self, Generator::X(..))
    }

    pub fn is_z(self) -> bool {
        matches!(self, Generator::Z(..))
    }

    /// True if `self` followed by `other` reduces to the unit.
    pub fn cancels(self, other: Generator) -> bool {
        matches!(
            (self, other),
            (Generator::U(a), Generator::UStar(b)) | (Generator::UStar(a), Generator::U(b)) if a == b
        )
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Generator::X(i, j) => write!(f, "x[{},{}]", i + 1, j + 1),
            Generator::Z(i, j) => write!(f, "z[{},{}]", i + 1, j + 1),
            Generator::U(i) => write!(f, "u[{}]", i + 1),
            Generator::UStar(i) => write!(f, "u'[{}]", i + 1),
        }
    }
}

/// A word in reduced normal form: no adjacent `u[i] u'[i]` or `u'[i] u[i]`.
///
/// The empty word is the unit.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Word(Vec<Generator>);

impl Word {
    pub fn unit() -> Self {
        Word(Vec::new())
    }

    /// Reduces an arbitrary letter sequence.
    pub fn new(letters: impl IntoIterator<Item = Generator>) -> Self {
        let mut out: Vec<Generator> = Vec::new();
        for g in letters {
            push_reduced(&mut out, g);
        }
        Word(out)
    }

    pub fn letter(g: Generator) -> Self {
        Word(vec![g])
    }

    /// Wraps letters already known to be reduced.
    pub(crate) fn from_reduced(letters: Vec<Generator>) -> Self {
        debug_assert!(letters.windows(2).all(|w| !w[0].cancels(w[1])));
        Word(letters)
    }

    pub fn letters(&self) -> &[Generator] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mul(&self, other: &Word) -> Word {
        let mut out = self.0.clone();
        out.reserve(other.0.len());
        for &g in &other.0 {
            push_reduced(&mut out, g);
        }
        Word(out)
    }

    pub fn adjoint(&self) -> Word {
        Word(self.0.iter().rev().map(|g| g.adjoint()).collect())
    }

    /// Number of self-adjoint (`x`/`z`) letters.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|g| !g.is_unitary()).count()
    }

    pub fn has_unitary(&self) -> bool {
        self.0.iter().any(|g| g.is_unitary())
    }

    pub fn has_x(&self) -> bool {
        self.0.iter().any(|g| g.is_x())
    }

    /// Removes cancelling pairs across the cyclic boundary. The result is a
    /// representative of the same trace class.
    pub fn cyclic_reduce(&self) -> Word {
        let s = &self.0;
        let (mut a, mut b) = (0usize, s.len());
        while b >= a + 2 && s[b - 1].cancels(s[a]) {
            a += 1;
            b -= 1;
        }
        Word(s[a..b].to_vec())
    }

    /// Rotation starting at position `k`. Requires a cyclically reduced word
    /// for the result to be reduced.
    pub fn rotate(&self, k: usize) -> Word {
        let n = self.0.len();
        if n == 0 {
            return Word::unit();
        }
        let k = k % n;
        let mut v = Vec::with_capacity(n);
        v.extend_from_slice(&self.0[k..]);
        v.extend_from_slice(&self.0[..k]);
        Word(v)
    }

    /// Subword `[a, b)`; subwords of reduced words are reduced.
    pub fn slice(&self, a: usize, b: usize) -> Word {
        Word(self.0[a..b].to_vec())
    }

    /// Canonical representative of the trace class of `self` under cyclic
    /// rotation and adjoint: the lexicographically least rotation of the
    /// cyclic reduction of `w` or `w*`. The flag is `true` when the
    /// representative comes from `w*`, in which case `tau(w) = conj(tau(rep))`.
    pub fn trace_class(&self) -> (Word, bool) {
        let w = self.cyclic_reduce();
        let a = least_rotation(&w.0);
        let ws = w.adjoint();
        let b = least_rotation(&ws.0);
        if b < a {
            (Word(b), true)
        } else {
            (Word(a), false)
        }
    }
}

fn push_reduced(out: &mut Vec<Generator>, g: Generator) {
    if let Some(&last) = out.last() {
        if last.cancels(g) {
            out.pop();
            return;
        }
    }
    out.push(g);
}

pub(crate) fn least_rotation(s: &[Generator]) -> Vec<Generator> {
    let n = s.len();
    if n == 0 {
        return Vec::new();
    }
    let mut best = 0usize;
    for k in 1..n {
        let better = (0..n)
            .map(|t| s[(k + t) % n].cmp(&s[(best + t) % n]))
            .find(|o| o.is_ne())
            .map(|o| o.is_lt())
            .unwrap_or(false);
        if better {
            best = k;
        }
    }
    let mut v = Vec::with_capacity(n);
    v.extend_from_slice(&s[best..]);
    v.extend_from_slice(&s[..best]);
    v
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (k, g) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_relations_reduce() {
        let w = Word::new([Generator::u(0), Generator::z(0, 0), Generator::ustar(0), Generator::u(0)]);
        assert_eq!(w.letters(), &[Generator::u(0), Generator::z(0, 0)]);
        let e = Word::new([Generator::u(1), Generator::u(1), Generator::ustar(1), Generator::ustar(1)]);
        assert!(e.is_unit());
        // different families never cancel
        let k = Word::new([Generator::u(0), Generator::ustar(1)]);
        assert_eq!(k.len(), 2);
    }

    #[test]
    fn cyclic_reduction_and_class() {
        let w = Word::new([Generator::u(0), Generator::z(0, 0), Generator::ustar(0)]);
        assert_eq!(w.cyclic_reduce().letters(), &[Generator::z(0, 0)]);
        let a = Word::new([Generator::z(0, 0), Generator::u(1)]);
        let b = Word::new([Generator::u(1), Generator::z(0, 0)]);
        assert_eq!(a.trace_class(), b.trace_class());
        let (rep, conj) = Word::new([Generator::ustar(1), Generator::z(0, 0)]).trace_class();
        assert!(conj);
        assert_eq!(rep, a.trace_class().0);
    }
}
