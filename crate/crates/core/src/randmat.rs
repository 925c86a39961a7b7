//! Dense complex matrix numerics: Haar and GUE sampling, quantile
//! microstates, spectral clipping and evaluation of polynomials on tuples.

use std::sync::Arc;

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ncpoly::{Coeff, FamilyLayout, Generator, NCPoly, TensorNCPoly, Word};
use crate::{Error, Result, Scalar};

/// Dense complex matrix.
pub type CMat<T> = DMatrix<Complex<T>>;

fn c<T: Scalar>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// Tolerance used for Hermiticity and unitarity checks at precision `T`.
pub fn check_tol<T: Scalar>(base: f64) -> T {
    T::lit(base.max(1e4 * T::eps().to_f64_lossy()))
}

/// Haar-distributed unitary via QR of a complex Ginibre matrix, with the
/// diagonal phases of the triangular factor divided out.
pub fn haar_unitary<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CMat<T>> {
    if n == 0 {
        return Err(Error::invalid("matrix dimension must be positive"));
    }
    let g = CMat::<T>::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(T::lit(re), T::lit(im))
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let m = d.modulus();
        let phase = if m > T::zero() { d / c(m, T::zero()) } else { Complex::new(T::one(), T::zero()) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}

/// GUE matrix normalised so that `tr_N(G^2) -> 1`: diagonal entries
/// `N(0, 1/N)`, off-diagonal real and imaginary parts `N(0, 1/(2N))`.
pub fn gue<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CMat<T>> {
    if n == 0 {
        return Err(Error::invalid("matrix dimension must be positive"));
    }
    let nf = n as f64;
    let sd_diag = (1.0 / nf).sqrt();
    let sd_off = (0.5 / nf).sqrt();
    let mut g = CMat::<T>::zeros(n, n);
    for i in 0..n {
        let d: f64 = rng.sample(StandardNormal);
        g[(i, i)] = c(T::lit(d * sd_diag), T::zero());
        for j in (i + 1)..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = c(T::lit(re * sd_off), T::lit(im * sd_off));
            g[(i, j)] = z;
            g[(j, i)] = z.conj();
        }
    }
    Ok(g)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen<T: Scalar>(a: &CMat<T>) -> Result<(Vec<T>, CMat<T>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim("eigendecomposition of a non-square matrix"));
    }
    let eig = SymmetricEigen::try_new(a.clone(), T::eps() * T::lit(4.0), 10_000)
        .ok_or_else(|| Error::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    let mut idx: Vec<usize> = (0..a.nrows()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMat::<T>::from_fn(a.nrows(), a.nrows(), |r, k| eig.eigenvectors[(r, idx[k])]);
    Ok((vals, vecs))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues<T: Scalar>(a: &CMat<T>) -> Result<Vec<T>> {
    Ok(hermitian_eigen(a)?.0)
}

/// `U diag(f(lambda)) U*` for Hermitian `a = U diag(lambda) U*`.
pub fn hermitian_function<T: Scalar>(
    a: &CMat<T>,
    f: impl Fn(T) -> Complex<T>,
) -> Result<CMat<T>> {
    let (vals, u) = hermitian_eigen(a)?;
    let mut scaled = u.clone();
    for (k, &l) in vals.iter().enumerate() {
        let fk = f(l);
        for r in 0..u.nrows() {
            scaled[(r, k)] *= fk;
        }
    }
    Ok(&scaled * u.adjoint())
}

/// `exp(i eps H)` for Hermitian `H`.
pub fn expi_hermitian<T: Scalar>(h: &CMat<T>, eps: T) -> Result<CMat<T>> {
    hermitian_function(h, |l| {
        let t = eps * l;
        c(t.cos(), t.sin())
    })
}

/// Operator norm of a Hermitian matrix.
pub fn hermitian_norm<T: Scalar>(a: &CMat<T>) -> Result<T> {
    let v = hermitian_eigenvalues(a)?;
    Ok(v.iter().fold(T::zero(), |m, x| m.max(x.abs())))
}

/// Applies `f_S(t) = S * clamp(t / S, -1, 1)` to the spectrum.
pub fn spectral_clip<T: Scalar>(a: &CMat<T>, s: T) -> Result<CMat<T>> {
    if s <= T::zero() {
        return Err(Error::invalid("clip level must be positive"));
    }
    hermitian_function(a, |l| c(l.max(-s).min(s), T::zero()))
}

/// Largest entry of `|A - A*|`.
pub fn hermiticity_defect<T: Scalar>(a: &CMat<T>) -> T {
    let d = a - a.adjoint();
    d.iter().fold(T::zero(), |m, z| m.max(z.modulus()))
}

/// Frobenius norm of `V*V - I`.
pub fn unitarity_defect<T: Scalar>(v: &CMat<T>) -> T {
    let n = v.nrows();
    (v.adjoint() * v - CMat::<T>::identity(n, n)).norm()
}

/// Normalised trace `tr_N`.
pub fn trace_n<T: Scalar>(a: &CMat<T>) -> Complex<T> {
    a.trace() / c(T::from_usize(a.nrows()).unwrap(), T::zero())
}

/// `tr_N(A B)` without forming the product.
pub fn trace_of_product<T: Scalar>(a: &CMat<T>, b: &CMat<T>) -> Complex<T> {
    let n = a.nrows();
    let mut s = Complex::new(T::zero(), T::zero());
    for j in 0..n {
        for i in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s / c(T::from_usize(n).unwrap(), T::zero())
}

/// Probability measure on the real line, described through its quantile
/// function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpectralMeasure<T> {
    /// Semicircle law of the given radius (variance `radius^2 / 4`).
    Semicircle { radius: T },
    /// `(delta_{-a} + delta_{a}) / 2`.
    Bernoulli { a: T },
    /// Arcsine law on `[a, b]`.
    Arcsine { a: T, b: T },
    /// Finitely many atoms `(point, weight)`, sorted by point.
    Atomic(Vec<(T, T)>),
    /// Law of a sample whose quantile function interpolates linearly through
    /// the knots `(p, value)`. Tied sample values share one knot at the mean of
    /// their positions `k / (m - 1)`; the extreme knots sit at `p = 0` and `1`,
    /// so the law is absolutely continuous unless the sample is constant.
    Empirical { values: Vec<T>, knots: Vec<T> },
}

impl<T: Scalar> SpectralMeasure<T> {
    /// Parses `semicircle:r`, `bernoulli:a`, `arcsine:a,b` and
    /// `atomic:w1@p1,w2@p2,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, args) = spec
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("measure spec '{spec}' lacks ':'")))?;
        let num = |s: &str| -> Result<T> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(T::lit)
                .ok_or_else(|| Error::invalid(format!("bad number '{s}' in measure spec '{spec}'")))
        };
        let m = match kind.trim() {
            "semicircle" => SpectralMeasure::Semicircle { radius: num(args)? },
            "bernoulli" => SpectralMeasure::Bernoulli { a: num(args)? },
            "arcsine" => {
                let (a, b) = args
                    .split_once(',')
                    .ok_or_else(|| Error::invalid("arcsine needs 'a,b'"))?;
                SpectralMeasure::Arcsine { a: num(a)?, b: num(b)? }
            }
            "atomic" => {
                let mut atoms = Vec::new();
                for part in args.split(',') {
                    let (w, p) = part
                        .split_once('@')
                        .ok_or_else(|| Error::invalid(format!("atom '{part}' must be weight@point")))?;
                    atoms.push((num(p)?, num(w)?));
                }
                Self::atomic(atoms)?
            }
            other => return Err(Error::invalid(format!("unknown measure kind '{other}'"))),
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds an atomic measure; weights must be nonnegative and sum to 1.
    pub fn atomic(mut atoms: Vec<(T, T)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("atomic measure needs at least one atom"));
        }
        if atoms.iter().any(|&(_, w)| w < T::zero()) {
            return Err(Error::invalid("negative atom weight"));
        }
        let total = atoms.iter().fold(T::zero(), |s, &(_, w)| s + w);
        if (total - T::one()).abs() > T::lit(1e-9).max(T::eps() * T::lit(16.0)) {
            return Err(Error::invalid(format!("atom weights sum to {total}, not 1")));
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(SpectralMeasure::Atomic(atoms))
    }

    pub fn empirical(mut sample: Vec<T>) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::invalid("empirical measure needs a nonempty sample"));
        }
        if sample.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite sample value"));
        }
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = sample.len();
        let scale = T::from_usize(m.saturating_sub(1).max(1)).unwrap();
        let mut values: Vec<T> = Vec::new();
        let mut knots: Vec<T> = Vec::new();
        let mut k = 0;
        while k < m {
            let start = k;
            while k < m && sample[k] == sample[start] {
                k += 1;
            }
            let mean_pos = T::from_usize(start + k - 1).unwrap() * T::lit(0.5) / scale;
            values.push(sample[start]);
            knots.push(mean_pos);
        }
        knots[0] = T::zero();
        if values.len() > 1 {
            *knots.last_mut().unwrap() = T::one();
        }
        Ok(SpectralMeasure::Empirical { values, knots })
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpectralMeasure::Semicircle { radius } if *radius <= T::zero() => {
                Err(Error::invalid("semicircle radius must be positive"))
            }
            SpectralMeasure::Bernoulli { a } if *a < T::zero() => {
                Err(Error::invalid("bernoulli parameter must be nonnegative"))
            }
            SpectralMeasure::Arcsine { a, b } if !(a < b) => {
                Err(Error::invalid("arcsine needs a < b"))
            }
            _ => Ok(()),
        }
    }

    /// Smallest `R` with support in `[-R, R]`.
    pub fn support_bound(&self) -> T {
        match self {
            SpectralMeasure::Semicircle { radius } => *radius,
            SpectralMeasure::Bernoulli { a } => a.abs(),
            SpectralMeasure::Arcsine { a, b } => a.abs().max(b.abs()),
            SpectralMeasure::Atomic(atoms) => {
                atoms.iter().fold(T::zero(), |m, &(p, w)| if w > T::zero() { m.max(p.abs()) } else { m })
            }
            SpectralMeasure::Empirical { values, .. } => values[0].abs().max(values[values.len() - 1].abs()),
        }
    }

    /// Left-continuous quantile `inf{x : F(x) >= p}` for `p` in `[0, 1]`.
    pub fn quantile(&self, p: T) -> T {
        let p = p.max(T::zero()).min(T::one());
        let half = T::lit(0.5);
        match self {
            SpectralMeasure::Semicircle { radius } => *radius * semicircle_unit_quantile(p),
            SpectralMeasure::Bernoulli { a } => {
                if p <= half {
                    -*a
                } else {
                    *a
                }
            }
            SpectralMeasure::Arcsine { a, b } => {
                let s = (T::pi() * p * half).sin();
                *a + (*b - *a) * s * s
            }
            SpectralMeasure::Atomic(atoms) => {
                let mut cum = T::zero();
                for &(x, w) in atoms {
                    cum += w;
                    if w > T::zero() && cum >= p - T::eps() * T::lit(8.0) {
                        return x;
                    }
                }
                atoms.iter().rev().find(|a| a.1 > T::zero()).map(|a| a.0).unwrap()
            }
            SpectralMeasure::Empirical { values, knots } => {
                let m = values.len();
                if m == 1 {
                    return values[0];
                }
                let k = knots.partition_point(|&q| q <= p).clamp(1, m - 1) - 1;
                let frac = (p - knots[k]) / (knots[k + 1] - knots[k]);
                values[k] + (values[k + 1] - values[k]) * frac
            }
        }
    }

    /// `k`-th moment.
    pub fn moment(&self, k: usize) -> T {
        match self {
            SpectralMeasure::Semicircle { radius } => {
                if k % 2 == 1 {
                    T::zero()
                } else {
                    let h = k / 2;
                    T::lit(catalan(h)) * (*radius * T::lit(0.5)).powi(k as i32)
                }
            }
            SpectralMeasure::Bernoulli { a } => {
                if k % 2 == 1 {
                    T::zero()
                } else {
                    a.powi(k as i32)
                }
            }
            SpectralMeasure::Arcsine { a, b } => {
                // x = m + c y with y arcsine on [-1, 1]: E y^{2j} = binom(2j, j) / 4^j.
                let m = (*a + *b) * T::lit(0.5);
                let cc = (*b - *a) * T::lit(0.5);
                let mut s = T::zero();
                for j in (0..=k).step_by(2) {
                    let ey = T::lit(binom(j, j / 2) / 4f64.powi((j / 2) as i32));
                    s += T::lit(binom(k, j)) * m.powi((k - j) as i32) * cc.powi(j as i32) * ey;
                }
                s
            }
            SpectralMeasure::Atomic(atoms) => {
                atoms.iter().fold(T::zero(), |s, &(x, w)| s + w * x.powi(k as i32))
            }
            SpectralMeasure::Empirical { values, knots } => {
                // exact integral of the piecewise-linear quantile raised to k
                let m = values.len();
                if m == 1 {
                    return values[0].powi(k as i32);
                }
                let (nodes, weights) = gauss_legendre_unit(k / 2 + 1);
                let mut total = T::zero();
                for i in 0..m - 1 {
                    let mut seg = T::zero();
                    for (t, w) in nodes.iter().zip(&weights) {
                        let x = values[i] + (values[i + 1] - values[i]) * T::lit(*t);
                        seg += T::lit(*w) * x.powi(k as i32);
                    }
                    total += seg * (knots[i + 1] - knots[i]);
                }
                total
            }
        }
    }

    /// True if the law has an atom (hence infinite negative free entropy).
    pub fn has_atoms(&self) -> bool {
        match self {
            SpectralMeasure::Atomic(_) | SpectralMeasure::Bernoulli { .. } => true,
            SpectralMeasure::Empirical { values, .. } => values.len() == 1,
            _ => false,
        }
    }
}

fn semicircle_unit_quantile<T: Scalar>(p: T) -> T {
    // CDF of the semicircle on [-1, 1]: F(y) = 1/2 + (y sqrt(1-y^2) + asin y)/pi.
    let pf = p.to_f64_lossy();
    if pf <= 0.0 {
        return -T::one();
    }
    if pf >= 1.0 {
        return T::one();
    }
    let f = |y: f64| 0.5 + (y * (1.0 - y * y).max(0.0).sqrt() + y.asin()) / std::f64::consts::PI;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < pf {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    T::lit(0.5 * (lo + hi))
}

pub(crate) fn catalan(k: usize) -> f64 {
    binom(2 * k, k) / (k as f64 + 1.0)
}

pub(crate) fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0f64;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub(crate) fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(1);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Diagonal microstate with entries `quantile((k - 1/2) / N)`, `k = 1..N`.
pub fn quantile_microstate<T: Scalar>(mu: &SpectralMeasure<T>, n: usize) -> Result<CMat<T>> {
    if n == 0 {
        return Err(Error::invalid("matrix dimension must be positive"));
    }
    let nf = T::from_usize(n).unwrap();
    let mut m = CMat::<T>::zeros(n, n);
    for k in 0..n {
        let p = (T::from_usize(k).unwrap() + T::lit(0.5)) / nf;
        let q = mu.quantile(p);
        if !q.is_finite() {
            return Err(Error::Numerical("unbounded quantile".into()));
        }
        m[(k, k)] = c(q, T::zero());
    }
    Ok(m)
}

/// Family-indexed tuple of `N x N` matrices: per family the self-adjoint
/// variables, and optionally one unitary per family.
///
/// Both `x[i,j]` and `z[i,j]` letters read the self-adjoint slot `(i, j)`;
/// `u[i]` reads the unitary of family `i`.
#[derive(Clone, Debug)]
pub struct MatrixTuple<T: Scalar> {
    layout: Arc<FamilyLayout>,
    dim: usize,
    self_adjoint: Vec<Vec<CMat<T>>>,
    unitaries: Option<Vec<CMat<T>>>,
}

impl<T: Scalar> MatrixTuple<T> {
    /// Validates shapes, Hermiticity, unitarity and the norm cutoff.
    pub fn new(
        layout: &Arc<FamilyLayout>,
        self_adjoint: Vec<Vec<CMat<T>>>,
        unitaries: Option<Vec<CMat<T>>>,
    ) -> Result<Self> {
        let t = Self::new_unchecked_norm(layout, self_adjoint, unitaries)?;
        let cutoff = T::lit(layout.cutoff());
        for fam in &t.self_adjoint {
            for a in fam {
                let nrm = hermitian_norm(a)?;
                if nrm > cutoff * (T::one() + check_tol::<T>(1e-12)) {
                    return Err(Error::invalid(format!(
                        "self-adjoint entry has norm {nrm} > cutoff {cutoff}"
                    )));
                }
            }
        }
        Ok(t)
    }

    /// As [`MatrixTuple::new`] without the norm check (useful for clipping
    /// experiments and for unbounded ensembles).
    pub fn new_unchecked_norm(
        layout: &Arc<FamilyLayout>,
        self_adjoint: Vec<Vec<CMat<T>>>,
        unitaries: Option<Vec<CMat<T>>>,
    ) -> Result<Self> {
        if self_adjoint.len() != layout.n() {
            return Err(Error::dim(format!(
                "{} families supplied, layout has {}",
                self_adjoint.len(),
                layout.n()
            )));
        }
        let dim = self_adjoint
            .first()
            .and_then(|f| f.first())
            .map(|m| m.nrows())
            .ok_or_else(|| Error::dim("empty family"))?;
        if dim == 0 {
            return Err(Error::dim("matrix dimension must be positive"));
        }
        let htol = check_tol::<T>(1e-12);
        for (i, fam) in self_adjoint.iter().enumerate() {
            if fam.len() != layout.r(i) {
                return Err(Error::dim(format!(
                    "family {} has {} matrices, layout expects {}",
                    i + 1,
                    fam.len(),
                    layout.r(i)
                )));
            }
            for a in fam {
                if a.nrows() != dim || a.ncols() != dim {
                    return Err(Error::dim("matrices of different sizes"));
                }
                let scale = T::one() + a.iter().fold(T::zero(), |m, z| m.max(z.modulus()));
                if hermiticity_defect(a) > htol * scale {
                    return Err(Error::invalid(format!("family {} entry is not Hermitian", i + 1)));
                }
            }
        }
        if let Some(us) = &unitaries {
            if us.len() != layout.n() {
                return Err(Error::dim("one unitary per family is required"));
            }
            let utol = check_tol::<T>(1e-10);
            for v in us {
                if v.nrows() != dim || v.ncols() != dim {
                    return Err(Error::dim("unitary of the wrong size"));
                }
                if unitarity_defect(v) > utol {
                    return Err(Error::invalid("matrix is not unitary"));
                }
            }
        }
        Ok(MatrixTuple { layout: layout.clone(), dim, self_adjoint, unitaries })
    }

    pub fn layout(&self) -> &Arc<FamilyLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn self_adjoint(&self, i: usize, j: usize) -> &CMat<T> {
        &self.self_adjoint[i][j]
    }

    pub fn families(&self) -> &[Vec<CMat<T>>] {
        &self.self_adjoint
    }

    pub fn unitaries(&self) -> Option<&[CMat<T>]> {
        self.unitaries.as_deref()
    }

    /// Tuple `(V_i A_ij V_i*)` with the unitaries consumed.
    pub fn conjugated(&self) -> Result<MatrixTuple<T>> {
        let us = self.unitaries.as_ref().ok_or_else(|| Error::invalid("tuple has no unitaries"))?;
        let fams = self
            .self_adjoint
            .iter()
            .zip(us)
            .map(|(fam, v)| fam.iter().map(|a| conjugate(v, a)).collect())
            .collect();
        Ok(MatrixTuple { layout: self.layout.clone(), dim: self.dim, self_adjoint: fams, unitaries: None })
    }

    pub fn letter(&self, g: Generator) -> Result<&CMat<T>> {
        self.layout.check(g)?;
        match g {
            Generator::X(i, j) | Generator::Z(i, j) => Ok(&self.self_adjoint[i as usize][j as usize]),
            Generator::U(i) | Generator::UStar(i) => {
                let us = self.unitaries.as_ref().ok_or_else(|| {
                    Error::invalid(format!("letter {g} needs a unitary slot, tuple has none"))
                })?;
                Ok(&us[i as usize])
            }
        }
    }

    fn letter_matrix(&self, g: Generator) -> Result<CMat<T>> {
        let m = self.letter(g)?;
        Ok(if matches!(g, Generator::UStar(_)) { m.adjoint() } else { m.clone() })
    }

    /// Matrix of a word.
    pub fn word_matrix(&self, w: &Word) -> Result<CMat<T>> {
        let mut acc: Option<CMat<T>> = None;
        for &g in w.letters() {
            let m = self.letter_matrix(g)?;
            acc = Some(match acc {
                None => m,
                Some(a) => a * m,
            });
        }
        Ok(acc.unwrap_or_else(|| CMat::<T>::identity(self.dim, self.dim)))
    }

    /// `tr_N` of a word.
    pub fn word_trace(&self, w: &Word) -> Result<Complex<T>> {
        let s = w.letters();
        match s.len() {
            0 => Ok(c(T::one(), T::zero())),
            1 => Ok(trace_n(&self.letter_matrix(s[0])?)),
            k => {
                let left = self.word_matrix(&Word::from_reduced(s[..k - 1].to_vec()))?;
                Ok(trace_of_product(&left, &self.letter_matrix(s[k - 1])?))
            }
        }
    }

    fn check_poly_layout(&self, layout: &Arc<FamilyLayout>) -> Result<()> {
        if crate::ncpoly::same_layout(layout, &self.layout) {
            Ok(())
        } else {
            Err(Error::dim("polynomial and tuple have different layouts"))
        }
    }
}

fn check_alphabet<C: Coeff>(p: &NCPoly<C>) -> Result<()> {
    let has_x = p.terms().any(|(w, _)| w.has_x());
    let has_z = p.terms().any(|(w, _)| w.letters().iter().any(|g| g.is_z()));
    if has_x && has_z {
        return Err(Error::invalid("polynomial mixes x and z letters"));
    }
    Ok(())
}

/// `V A V*`.
pub fn conjugate<T: Scalar>(v: &CMat<T>, a: &CMat<T>) -> CMat<T> {
    v * a * v.adjoint()
}

fn coeff_to<T: Scalar, C: Coeff>(cf: &C) -> Complex<T> {
    let z = cf.to_c64();
    c(T::lit(z.re), T::lit(z.im))
}

/// `p(tuple)`.
pub fn evaluate<T: Scalar, C: Coeff>(p: &NCPoly<C>, tuple: &MatrixTuple<T>) -> Result<CMat<T>> {
    tuple.check_poly_layout(p.layout())?;
    check_alphabet(p)?;
    let n = tuple.dim();
    let mut out = CMat::<T>::zeros(n, n);
    for (w, cf) in p.terms() {
        out += tuple.word_matrix(w)? * coeff_to::<T, C>(cf);
    }
    Ok(out)
}

/// `tr_N(p(tuple))`.
pub fn trace_evaluate<T: Scalar, C: Coeff>(p: &NCPoly<C>, tuple: &MatrixTuple<T>) -> Result<Complex<T>> {
    tuple.check_poly_layout(p.layout())?;
    check_alphabet(p)?;
    let mut s = c(T::zero(), T::zero());
    for (w, cf) in p.terms() {
        s += tuple.word_trace(w)? * coeff_to::<T, C>(cf);
    }
    Ok(s)
}

/// `sum_k tr_N(a_k(tuple)) tr_N(b_k(tuple))`.
pub fn double_trace_evaluate<T: Scalar, C: Coeff>(
    t: &TensorNCPoly<C>,
    tuple: &MatrixTuple<T>,
) -> Result<Complex<T>> {
    tuple.check_poly_layout(t.layout())?;
    let mut cache = std::collections::HashMap::<Word, Complex<T>>::new();
    let mut s = c(T::zero(), T::zero());
    for (a, b, cf) in t.terms() {
        let mut tr = |w: &Word| -> Result<Complex<T>> {
            if let Some(v) = cache.get(w) {
                return Ok(*v);
            }
            let v = tuple.word_trace(w)?;
            cache.insert(w.clone(), v);
            Ok(v)
        };
        let (ta, tb) = (tr(a)?, tr(b)?);
        s += ta * tb * coeff_to::<T, C>(cf);
    }
    Ok(s)
}

#[derive(Serialize, Deserialize)]
struct MatrixFile {
    n: usize,
    #[serde(rename = "N")]
    dim: usize,
    families: Vec<Vec<Vec<[f64; 2]>>>,
}

/// Reads self-adjoint microstates from the JSON envelope
/// `{"n": .., "N": .., "families": [[matrix, ..], ..]}` where each matrix is a
/// column-major list of `[re, im]` pairs.
pub fn read_matrix_file(text: &str, layout: &Arc<FamilyLayout>) -> Result<MatrixTuple<f64>> {
    let f: MatrixFile = serde_json::from_str(text)?;
    if f.n != layout.n() || f.families.len() != f.n {
        return Err(Error::dim(format!(
            "matrix file declares n = {} with {} families, layout has n = {}",
            f.n,
            f.families.len(),
            layout.n()
        )));
    }
    let nn = f.dim * f.dim;
    let mut fams = Vec::with_capacity(f.n);
    for fam in f.families {
        let mut mats = Vec::with_capacity(fam.len());
        for entries in fam {
            if entries.len() != nn {
                return Err(Error::dim(format!("matrix has {} entries, expected {nn}", entries.len())));
            }
            mats.push(CMat::<f64>::from_iterator(
                f.dim,
                f.dim,
                entries.into_iter().map(|[re, im]| Complex::new(re, im)),
            ));
        }
        fams.push(mats);
    }
    MatrixTuple::new(layout, fams, None)
}

/// Writes the self-adjoint part of a tuple in the format of [`read_matrix_file`].
pub fn write_matrix_file(tuple: &MatrixTuple<f64>) -> Result<String> {
    let f = MatrixFile {
        n: tuple.layout().n(),
        dim: tuple.dim(),
        families: tuple
            .families()
            .iter()
            .map(|fam| fam.iter().map(|m| m.iter().map(|z| [z.re, z.im]).collect()).collect())
            .collect(),
    };
    Ok(serde_json::to_string(&f)?)
}
