use std::fmt;
use std::sync::Arc;

use super::{Coeff, FamilyLayout, Generator, NCPoly, PolyError};

/// Parses the text form of a polynomial.
///
/// ```text
/// poly   := term (('+'|'-') term)*        (a leading sign is allowed)
/// term   := factor ('*' factor)*
/// factor := atom ['^' int]
/// atom   := 'x[' i ',' j ']' | 'z[' i ',' j ']' | 'u[' i ']' | "u'[" i ']'
///         | '(' poly ')' | coeff
/// coeff  := decimal | '(' decimal ('+'|'-') decimal 'i' ')'
/// ```
///
/// Indices are 1-based. Decimals may also be written as fractions `p/q`,
/// which is how exact non-terminating coefficients are printed.
pub fn parse<C: Coeff>(text: &str, layout: &Arc<FamilyLayout>) -> Result<NCPoly<C>, PolyError> {
    let mut p = Parser { s: text.as_bytes(), pos: 0, layout };
    let poly = p.poly()?;
    p.ws();
    if p.pos != p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(poly)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    layout: &'a Arc<FamilyLayout>,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> PolyError {
        PolyError::Syntax { pos: self.pos, msg: msg.to_string() }
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), PolyError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn poly<C: Coeff>(&mut self) -> Result<NCPoly<C>, PolyError> {
        let mut acc = NCPoly::zero(self.layout);
        let mut negate = false;
        if self.eat(b'-') {
            negate = true;
        } else {
            self.eat(b'+');
        }
        loop {
            let t = self.term()?;
            acc = if negate { &acc - &t } else { &acc + &t };
            if self.eat(b'+') {
                negate = false;
            } else if self.eat(b'-') {
                negate = true;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term<C: Coeff>(&mut self) -> Result<NCPoly<C>, PolyError> {
        let mut acc = self.factor()?;
        while self.eat(b'*') {
            let f = self.factor()?;
            acc = &acc * &f;
        }
        Ok(acc)
    }

    fn factor<C: Coeff>(&mut self) -> Result<NCPoly<C>, PolyError> {
        let a = self.atom()?;
        if self.eat(b'^') {
            let start = self.pos;
            let k = self.digits();
            if k.is_empty() {
                self.pos = start;
                return Err(self.err("expected exponent"));
            }
            let k: u32 = k.parse().map_err(|_| self.err("exponent too large"))?;
            return Ok(a.pow(k));
        }
        Ok(a)
    }

    fn digits(&mut self) -> String {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.s[start..self.pos]).into_owned()
    }

    fn index(&mut self, bound_kind: &str) -> Result<u16, PolyError> {
        let start = self.pos;
        let d = self.digits();
        if d.is_empty() {
            return Err(self.err(&format!("expected {bound_kind} index")));
        }
        match d.parse::<u32>() {
            Ok(v) if v >= 1 && v <= u16::MAX as u32 => Ok((v - 1) as u16),
            _ => {
                self.pos = start;
                Err(PolyError::IndexOutOfBounds(format!(
                    "{bound_kind} index {d} at position {start} (indices are 1-based)"
                )))
            }
        }
    }

    fn decimal(&mut self) -> Option<String> {
        self.ws();
        let start = self.pos;
        let mut seen_digit = false;
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            if c.is_ascii_digit() {
                seen_digit = true;
            } else if !(c == b'.' || (c == b'/' && seen_digit)) {
                break;
            }
            self.pos += 1;
        }
        if !seen_digit {
            self.pos = start;
            return None;
        }
        Some(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
    }

    fn generator(&mut self, g: Generator, at: usize) -> Result<Generator, PolyError> {
        self.layout.check(g).map_err(|e| match e {
            PolyError::IndexOutOfBounds(m) => {
                PolyError::IndexOutOfBounds(format!("{m} at position {at}"))
            }
            other => other,
        })?;
        Ok(g)
    }

    fn atom<C: Coeff>(&mut self) -> Result<NCPoly<C>, PolyError> {
        let at = {
            self.ws();
            self.pos
        };
        match self.peek() {
            Some(c @ (b'x' | b'z')) => {
                self.pos += 1;
                self.expect(b'[')?;
                let i = self.index("family")?;
                self.expect(b',')?;
                let j = self.index("variable")?;
                self.expect(b']')?;
                let g = if c == b'x' { Generator::X(i, j) } else { Generator::Z(i, j) };
                let g = self.generator(g, at)?;
                Ok(NCPoly::generator(self.layout, g)?)
            }
            Some(b'u') => {
                self.pos += 1;
                let star = self.s.get(self.pos) == Some(&b'\'');
                if star {
                    self.pos += 1;
                }
                self.expect(b'[')?;
                let i = self.index("family")?;
                self.expect(b']')?;
                let g = if star { Generator::UStar(i) } else { Generator::U(i) };
                let g = self.generator(g, at)?;
                Ok(NCPoly::generator(self.layout, g)?)
            }
            Some(b'(') => {
                if let Some(c) = self.try_complex::<C>()? {
                    return Ok(NCPoly::constant(self.layout, c));
                }
                self.pos += 1;
                let p = self.poly()?;
                self.expect(b')')?;
                Ok(p)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let d = self.decimal().ok_or_else(|| self.err("expected number"))?;
                let c = C::from_decimal(&d, "0").ok_or_else(|| {
                    PolyError::Syntax { pos: at, msg: format!("malformed number '{d}'") }
                })?;
                Ok(NCPoly::constant(self.layout, c))
            }
            Some(_) => Err(self.err("expected a generator, number or '('")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    /// `(a+bi)` / `(a-bi)`; restores the position and returns `None` if the
    /// parenthesis does not open a complex literal.
    fn try_complex<C: Coeff>(&mut self) -> Result<Option<C>, PolyError> {
        let start = self.pos;
        let res = (|| {
            if !self.eat(b'(') {
                return None;
            }
            let re_neg = if self.eat(b'-') {
                true
            } else {
                self.eat(b'+');
                false
            };
            let re = self.decimal()?;
            let im_neg = if self.eat(b'-') {
                true
            } else if self.eat(b'+') {
                false
            } else {
                return None;
            };
            let im = self.decimal()?;
            if !self.eat(b'i') || !self.eat(b')') {
                return None;
            }
            let sgn = |neg: bool, v: String| if neg { format!("-{v}") } else { v };
            Some((sgn(re_neg, re), sgn(im_neg, im)))
        })();
        match res {
            Some((re, im)) => match C::from_decimal(&re, &im) {
                Some(c) => Ok(Some(c)),
                None => Err(PolyError::Syntax { pos: start, msg: "malformed complex literal".into() }),
            },
            None => {
                self.pos = start;
                Ok(None)
            }
        }
    }
}

impl<C: Coeff> fmt::Display for NCPoly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (k, (w, c)) in self.terms().enumerate() {
            let (lead, body) = match c.real_sign() {
                Some(pos) => {
                    let mag = C::fmt_real(c);
                    let sign = if pos { "+" } else { "-" };
                    (sign, if mag == "1" && !w.is_unit() { String::new() } else { mag })
                }
                None => {
                    let (re, im) = c.parts();
                    let re_s = match re.real_sign() {
                        Some(false) => format!("-{}", C::fmt_real(&re)),
                        _ => C::fmt_real(&re),
                    };
                    let im_sign = if im.real_sign() == Some(false) { '-' } else { '+' };
                    ("+", format!("({re_s}{im_sign}{}i)", C::fmt_real(&im)))
                }
            };
            match (k, lead) {
                (0, "-") => write!(f, "-")?,
                (0, _) => {}
                (_, s) => write!(f, " {s} ")?,
            }
            match (body.is_empty(), w.is_unit()) {
                (true, _) => write!(f, "{w}")?,
                (false, true) => write!(f, "{body}")?,
                (false, false) => write!(f, "{body}*{w}")?,
            }
        }
        Ok(())
    }
}
