use serde::{Deserialize, Serialize};

use super::{Generator, PolyError};

/// Shape of the variable families: `n` families, family `i` holding `r[i]`
/// self-adjoint variables, all bounded in norm by `cutoff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyLayout {
    r: Vec<usize>,
    cutoff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    secondary_cutoff: Option<f64>,
}

impl FamilyLayout {
    pub fn new(r: Vec<usize>, cutoff: f64) -> Result<Self, PolyError> {
        Self::with_secondary(r, cutoff, None)
    }

    pub fn with_secondary(
        r: Vec<usize>,
        cutoff: f64,
        secondary_cutoff: Option<f64>,
    ) -> Result<Self, PolyError> {
        if r.is_empty() {
            return Err(PolyError::Layout("at least one family is required".into()));
        }
        if r.iter().any(|&k| k == 0) {
            return Err(PolyError::Layout("every family needs at least one variable".into()));
        }
        if r.len() > u16::MAX as usize || r.iter().any(|&k| k > u16::MAX as usize) {
            return Err(PolyError::Layout("layout too large".into()));
        }
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(PolyError::Layout(format!("cutoff must be positive, got {cutoff}")));
        }
        if let Some(s) = secondary_cutoff {
            if !(s > 0.0 && s.is_finite()) {
                return Err(PolyError::Layout(format!("secondary cutoff must be positive, got {s}")));
            }
        }
        Ok(FamilyLayout { r, cutoff, secondary_cutoff })
    }

    /// `n` families with one variable each.
    pub fn singletons(n: usize, cutoff: f64) -> Result<Self, PolyError> {
        Self::new(vec![1; n], cutoff)
    }

    pub fn n(&self) -> usize {
        self.r.len()
    }

    pub fn r(&self, i: usize) -> usize {
        self.r[i]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.r
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn secondary_cutoff(&self) -> Option<f64> {
        self.secondary_cutoff
    }

    /// Total number of self-adjoint variables.
    pub fn total(&self) -> usize {
        self.r.iter().sum()
    }

    pub fn check(&self, g: Generator) -> Result<(), PolyError> {
        let i = g.family();
        if i >= self.n() {
            return Err(PolyError::IndexOutOfBounds(format!(
                "{g}: family {} exceeds n = {}",
                i + 1,
                self.n()
            )));
        }
        if let Some(j) = g.slot() {
            if j >= self.r[i] {
                return Err(PolyError::IndexOutOfBounds(format!(
                    "{g}: variable {} exceeds r({}) = {}",
                    j + 1,
                    i + 1,
                    self.r[i]
                )));
            }
        }
        Ok(())
    }

    /// All `x` letters, family-major.
    pub fn x_letters(&self) -> Vec<Generator> {
        self.self_adjoint_letters(Generator::x)
    }

    /// All `z` letters, family-major.
    pub fn z_letters(&self) -> Vec<Generator> {
        self.self_adjoint_letters(Generator::z)
    }

    /// All `z`, `u`, `u'` letters.
    pub fn uz_letters(&self) -> Vec<Generator> {
        let mut v = self.z_letters();
        for i in 0..self.n() {
            v.push(Generator::u(i));
            v.push(Generator::ustar(i));
        }
        v
    }

    fn self_adjoint_letters(&self, make: fn(usize, usize) -> Generator) -> Vec<Generator> {
        self.r
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| (0..k).map(move |j| make(i, j)))
            .collect()
    }
}
