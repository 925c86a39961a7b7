//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use orbital_core::experiment;
use orbital_core::gibbs::{log_partition, run_chain, GibbsConfig, GibbsSettings, Hamiltonian, LogZMethod};
use orbital_core::moments::{
    empirical_orbital_state, free_product, moment_distance, trace_classes, Alphabet, FreeProduct,
};
use orbital_core::ncpoly::{
    cyclic_gradient, derive, parse, substitute_x, theta_bar, Derivation, FamilyLayout, Generator, Word,
};
use orbital_core::pressure::{
    double_pressure, eta_estimate, finite_n_property_suite, penalty_poly, pressure_estimate,
    pressure_relation_check, OptimizerSettings, SharedSamples,
};
use orbital_core::randmat::{haar_unitary, hermitian_eigenvalues, quantile_microstate, trace_evaluate};
use orbital_core::sdsolver::{liberation_check, pushforward_x, sd_residual, sd_solve, SdProblem, SdSolution};
use orbital_core::{
    CMatrix, Coeff, ExactComplex, MatrixTuple, MomentTable, Poly, PolyF64, SpectralMeasure, TensorPoly, C64,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("symbolic identities", symbolic_suite),
        ("zero and single-family pressure", exact_pressures),
        ("finite-N property suite", property_suite),
        ("partition function oracles", partition_oracles),
        ("asymptotic freeness", asymptotic_freeness),
        ("eta estimator", eta_sanity),
        ("Schwinger-Dyson solver", sd_solver),
        ("liberation identity", liberation),
        ("pressure relation margin", relation_margin),
        ("penalty double pressure", penalty_pressure),
        ("reproducibility", reproducibility),
    ];
    // ACCEPTANCE_ONLY=7,9 runs a subset
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|k| k.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(k + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(f) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name}: {detail} [{:.1}s]", k + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn singletons(n: usize, r: f64) -> Arc<FamilyLayout> {
    Arc::new(FamilyLayout::singletons(n, r).unwrap())
}

fn poly(text: &str, l: &Arc<FamilyLayout>) -> PolyF64 {
    parse(text, l).unwrap()
}

fn measure(s: &str) -> SpectralMeasure {
    SpectralMeasure::parse(s).unwrap()
}

fn micro(specs: &[&str], n: usize) -> Vec<Vec<CMatrix>> {
    specs.iter().map(|s| vec![quantile_microstate(&measure(s), n).unwrap()]).collect()
}

fn diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| C64::new(v, 0.0))))
}

fn free_target(l: &Arc<FamilyLayout>, specs: &[&str], m: usize) -> MomentTable {
    let marg: Vec<MomentTable> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| MomentTable::from_measure(l, Alphabet::X, i, &measure(s), m).unwrap())
        .collect();
    free_product(&marg, m).unwrap()
}

// ---------- 1 ----------

fn exact_poly(rng: &mut ChaCha8Rng, l: &Arc<FamilyLayout>, letters: &[Generator], max_deg: usize) -> Poly {
    let terms = rng.random_range(1..=4);
    Poly::from_terms(
        l,
        (0..terms).map(|_| {
            let len = rng.random_range(0..=max_deg);
            let word = Word::new((0..len).map(|_| *letters.choose(rng).unwrap()));
            (word, ExactComplex::from_i64(rng.random_range(-3..=3), rng.random_range(-2..=2)))
        }),
    )
    .unwrap()
}

/// `delta_i(x) = x (x) 1 - 1 (x) x` on family-`i` letters, extended as a derivation.
fn liberation_derivation(i: usize, q: &Poly) -> TensorPoly {
    let l = q.layout();
    let mut out = TensorPoly::zero(l);
    for (word, coef) in q.terms() {
        let s = word.letters();
        for k in (0..s.len()).filter(|&k| s[k].family() == i) {
            let a = Word::new(s[..k].iter().copied());
            let b = Word::new(s[k + 1..].iter().copied());
            let x = Word::letter(s[k]);
            let left = TensorPoly::from_terms(l, [(a.mul(&x), b.clone(), coef.clone())]).unwrap();
            let right = TensorPoly::from_terms(l, [(a, x.mul(&b), -coef.clone())]).unwrap();
            out = &(&out + &left) + &right;
        }
    }
    out
}

fn random_reduction(mut s: Vec<Generator>, rng: &mut ChaCha8Rng) -> Vec<Generator> {
    loop {
        let spots: Vec<usize> = (0..s.len().saturating_sub(1)).filter(|&k| s[k].cancels(s[k + 1])).collect();
        match spots.choose(rng) {
            None => return s,
            Some(&k) => {
                s.drain(k..k + 2);
            }
        }
    }
}

fn symbolic_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let l = Arc::new(FamilyLayout::new(vec![1, 2], 1.0).unwrap());
    let xs = l.x_letters();
    let uz = l.uz_letters();
    let cases = 600;
    let mut failures = Vec::new();
    for case in 0..cases {
        let a = exact_poly(&mut rng, &l, &xs, 2);
        let b = exact_poly(&mut rng, &l, &xs, 2);
        let ua = exact_poly(&mut rng, &l, &uz, 2);
        let ub = exact_poly(&mut rng, &l, &uz, 2);
        let mut fail = |what: &str| failures.push(format!("case {case}: {what}"));

        if a.adjoint().adjoint() != a || ua.adjoint().adjoint() != ua {
            fail("involution");
        }
        if (&a * &b).adjoint() != &b.adjoint() * &a.adjoint() || (&ua * &ub).adjoint() != &ub.adjoint() * &ua.adjoint()
        {
            fail("anti-multiplicativity");
        }
        let x_modes = [Derivation::DifferenceQuotient(1, 1), Derivation::Liberation(0), Derivation::Liberation(1)];
        for (p, q, modes) in [(&a, &b, x_modes.to_vec()), (&ua, &ub, vec![Derivation::Unitary(0), Derivation::Unitary(1)])]
        {
            for mode in modes {
                let lhs = derive(mode, &(p * q)).unwrap();
                let rhs =
                    &derive(mode, p).unwrap().right_mul(q).unwrap() + &derive(mode, q).unwrap().left_mul(p).unwrap();
                if lhs != rhs {
                    fail(&format!("Leibniz {mode:?}"));
                }
            }
        }

        let len = rng.random_range(0..24);
        let letters: Vec<Generator> = (0..len).map(|_| *uz.choose(&mut rng).unwrap()).collect();
        if Word::new(letters.iter().copied()).letters() != &random_reduction(letters, &mut rng)[..] {
            fail("normal form");
        }

        // -u_i (D_i h~) u_i* against the contracted liberation derivation, degree <= 4
        let h = &a * &b;
        let h = &h + &h.adjoint();
        let rotated = substitute_x(&h).unwrap();
        for i in 0..2 {
            let (u, us) = (Word::letter(Generator::u(i)), Word::letter(Generator::ustar(i)));
            let lhs = cyclic_gradient(i, &rotated).unwrap().map_terms(|w, c| Some((u.mul(w).mul(&us), -c.clone())));
            let rhs = substitute_x(&theta_bar(&liberation_derivation(i, &h))).unwrap();
            if lhs != rhs {
                fail(&format!("gradient identity, family {}", i + 1));
            }
        }
    }
    let ok = failures.is_empty();
    (ok, if ok { format!("{cases} random cases, all identities exact") } else { failures[..failures.len().min(3)].join("; ") })
}

// ---------- 2 ----------

fn exact_pressures() -> Outcome {
    let l = singletons(2, 2.0);
    let settings = GibbsSettings { sweeps: 400, burn_in: 100, seed: 2, ..GibbsSettings::default() };
    let ms: Vec<_> = [1, 2, 4, 8, 16].iter().map(|&n| micro(&["semicircle:2", "bernoulli:1"], n)).collect();
    let zero = pressure_estimate(&Hamiltonian::Single(PolyF64::zero(&l)), &ms, &settings, "q").unwrap();
    let zero_ok = zero.points.iter().all(|p| p.normalized == 0.0);

    let h = poly("x[1,1]^3 + (-0.5)*x[1,1] + 2*x[2,1]^2 + (0.3)*x[2,1]", &l);
    let est = pressure_estimate(&Hamiltonian::Single(h.clone()), &ms, &settings, "q").unwrap();
    let mut worst = 0.0f64;
    for (p, m) in est.points.iter().zip(&ms) {
        let exact = -trace_evaluate(&h, &MatrixTuple::new(&l, m.clone(), None).unwrap()).unwrap().re;
        worst = worst.max((p.normalized - exact).abs());
    }
    (zero_ok && worst <= 1e-12, format!("zero test function exact: {zero_ok}; single-family max error {worst:.1e} (tol 1e-12)"))
}

// ---------- 3 ----------

fn random_x_poly(l: &Arc<FamilyLayout>, rng: &mut ChaCha8Rng, degree: usize) -> PolyF64 {
    let letters = l.x_letters();
    let terms: Vec<(Word, C64)> = (0..5)
        .map(|_| {
            let len = rng.random_range(0..=degree);
            let w = Word::new((0..len).map(|_| letters[rng.random_range(0..letters.len())]));
            (w, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        })
        .collect();
    PolyF64::from_terms(l, terms).unwrap().hermitian_part()
}

fn property_suite() -> Outcome {
    let l = singletons(2, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut runs = 0;
    for n in [2usize, 8] {
        let samples = SharedSamples::draw(&l, &micro(&["semicircle:2", "bernoulli:1"], n), 16, 31).unwrap();
        for _ in 0..20 {
            let h1 = random_x_poly(&l, &mut rng, 3);
            let h2 = random_x_poly(&l, &mut rng, 2);
            worst = worst.max(finite_n_property_suite(&samples, &h1, &h2, 1).unwrap().max_violation);
            runs += 1;
        }
    }
    (worst <= 1e-9, format!("{runs} pairs at N in {{2, 8}}, max violation {worst:.1e} (tol 1e-9)"))
}

// ---------- 4 ----------

/// `log int_{U(2)} exp(-4 tr_2 h(X, V Y V*)) dV` by quadrature in Euler angles
/// `V = [[e^{ia} cos s, e^{ib} sin s], [-e^{-ib} sin s, e^{-ia} cos s]]` with
/// Haar density `2 sin s cos s` on `s in [0, pi/2]`; the global phase drops out.
fn u2_quadrature(h: &PolyF64, x: &CMatrix, y: &CMatrix) -> f64 {
    let l = h.layout();
    let (ns, na) = (400, 6);
    let mut z = 0.0;
    for k in 0..ns {
        let s = (k as f64 + 0.5) / ns as f64 * std::f64::consts::FRAC_PI_2;
        let weight = 2.0 * s.sin() * s.cos() * std::f64::consts::FRAC_PI_2 / ns as f64;
        let mut inner = 0.0;
        for ia in 0..na {
            for ib in 0..na {
                let a = 2.0 * std::f64::consts::PI * ia as f64 / na as f64;
                let b = 2.0 * std::f64::consts::PI * ib as f64 / na as f64;
                let v = CMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        C64::from_polar(s.cos(), a),
                        C64::from_polar(s.sin(), b),
                        -C64::from_polar(s.sin(), -b),
                        C64::from_polar(s.cos(), -a),
                    ],
                );
                let t = MatrixTuple::new(l, vec![vec![x.clone()], vec![&v * y * v.adjoint()]], None).unwrap();
                inner += (-4.0 * trace_evaluate(h, &t).unwrap().re).exp();
            }
        }
        z += weight * inner / (na * na) as f64;
    }
    z.ln()
}

fn partition_oracles() -> Outcome {
    let l = singletons(2, 2.0);
    let t = 0.9;
    let h = poly(&format!("({})*x[1,1]*x[2,1] + ({})*x[2,1]*x[1,1]", t / 2.0, t / 2.0), &l);

    let (x1, x2) = (1.3, -0.6);
    let mut c1 = GibbsConfig::orbital(Hamiltonian::Single(h.clone()), vec![vec![diag(&[x1])], vec![diag(&[x2])]]);
    c1.sweeps = 200;
    c1.burn_in = 20;
    let exact1 = -t * x1 * x2;
    let d1 = log_partition(&c1, LogZMethod::Direct).unwrap().value;
    let t1 = log_partition(&c1, LogZMethod::Thermodynamic { grid: 11 }).unwrap().value;
    let n1_err = (d1 - exact1).abs().max((t1 - exact1).abs());

    let (x, y) = (diag(&[1.5, -0.5]), diag(&[1.0, 0.2]));
    let oracle = u2_quadrature(&h, &x, &y);
    let mut c2 = GibbsConfig::orbital(Hamiltonian::Single(h), vec![vec![x], vec![y]]);
    c2.sweeps = 22_000;
    c2.burn_in = 2_000;
    c2.seed = 404;
    let ti = log_partition(&c2, LogZMethod::Thermodynamic { grid: 21 }).unwrap();
    let rel = (ti.value - oracle).abs() / oracle.abs();
    (
        n1_err <= 1e-12 && rel <= 0.01,
        format!(
            "N=1 error {n1_err:.1e} (tol 1e-12); N=2 thermodynamic {:.5} +- {:.1e} vs quadrature {oracle:.5}, relative {rel:.2e} (tol 1e-2)",
            ti.value, ti.stderr
        ),
    )
}

// ---------- 5 ----------

fn asymptotic_freeness() -> Outcome {
    let n = 100;
    let l = singletons(2, 2.0);
    let specs = ["bernoulli:1", "semicircle:2"];
    let xi = micro(&specs, n);
    let target = free_target(&l, &specs, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let reps = 20;
    let mut total = 0.0;
    for _ in 0..reps {
        let v: Vec<CMatrix> = (0..2).map(|_| haar_unitary::<f64, _>(n, &mut rng).unwrap()).collect();
        let emp = empirical_orbital_state(&l, &v, &xi, 4).unwrap();
        total += moment_distance(&emp, &target, 4).unwrap();
    }
    let avg = total / reps as f64;
    let bound = 10.0 / n as f64;
    (avg <= bound, format!("N={n}, {reps} conjugations, mean distance {avg:.4} (bound {bound})"))
}

// ---------- 6 ----------

fn eta_sanity() -> Outcome {
    let l = singletons(2, 2.0);
    let specs = ["bernoulli:1", "semicircle:2"];
    let mut ok = true;
    let mut notes = Vec::new();
    for (n, seed) in [(16, 61), (64, 62)] {
        let ms = micro(&specs, n);
        let t = MatrixTuple::new(&l, ms.clone(), None).unwrap();
        // free product of the microstates' own marginals
        let marg: Vec<MomentTable> = (0..2)
            .map(|i| {
                let mut m = MomentTable::new(&l, Alphabet::X, 3);
                for k in 1..=3 {
                    let w = Word::new(std::iter::repeat_n(Generator::x(i, 0), k));
                    m.set(&w, t.word_trace(&w).unwrap()).unwrap();
                }
                m
            })
            .collect();
        let target = free_product(&marg, 3).unwrap();
        let samples = SharedSamples::draw(&l, &ms, 24, seed).unwrap();
        let est = eta_estimate(&target, &samples, 3, &OptimizerSettings::default()).unwrap();
        let good = est.divergence.is_none() && (-0.05..=0.0).contains(&est.value);
        ok &= good;
        notes.push(format!("N={n} value {:.4}", est.value));
    }

    let ms = micro(&specs, 8);
    let samples = SharedSamples::draw(&l, &ms, 8, 63).unwrap();
    let mut target = free_target(&l, &specs, 2);
    let x2 = Word::new([Generator::x(1, 0), Generator::x(1, 0)]);
    target.set(&x2, C64::new(1.5, 0.0)).unwrap();
    let est = eta_estimate(&target, &samples, 2, &OptimizerSettings::default()).unwrap();
    match &est.divergence {
        Some(d) => notes.push(format!("mismatched marginal diverges along {} (slope {:.3})", d.witness, d.slope)),
        None => {
            ok = false;
            notes.push("mismatched marginal: no divergence detected".into());
        }
    }
    (ok, notes.join("; ") + " (range [-0.05, 0])")
}

// ---------- 7, 8 ----------

fn coupling(t: f64, l: &Arc<FamilyLayout>) -> PolyF64 {
    poly(&format!("({t})*x[1,1]*x[2,1] + ({t})*x[2,1]*x[1,1]"), l)
}

fn small_coupling_solution(t: f64) -> (SdProblem, SdSolution) {
    let l = singletons(2, 3.5);
    let p = SdProblem::from_measures(coupling(t, &l), &[measure("bernoulli:1"), measure("semicircle:2")], 8).unwrap();
    let s = sd_solve(&p).unwrap();
    (p, s)
}

fn sd_solver() -> Outcome {
    let l = singletons(2, 3.5);
    let mut notes = Vec::new();

    let p0 = SdProblem::from_measures(
        PolyF64::zero(&l),
        &[measure("atomic:0.5@0,0.5@2"), measure("atomic:0.25@1,0.75@3")],
        8,
    )
    .unwrap();
    let s0 = sd_solve(&p0).unwrap();
    let mut haar = FreeProduct::with_haar(&p0.tau0);
    let mut dev0 = 0.0f64;
    for w in s0.table.classes() {
        if !w.is_unit() {
            dev0 = dev0.max((s0.table.value(&w).unwrap() - haar.eval(&w).unwrap()).norm());
        }
    }
    let free_ok = dev0 <= 1e-12;
    notes.push(format!("t=0 deviation {dev0:.1e} (tol 1e-12)"));

    let mut conv_ok = true;
    for t in [0.01, -0.01] {
        let (p, s) = small_coupling_solution(t);
        let r = sd_residual(&s.table, &p).unwrap();
        conv_ok &= s.report.converged && s.report.iterations <= 200 && r <= 1e-10;
        notes.push(format!("t={t}: {} iterations, residual {r:.1e}", s.report.iterations));
    }

    // Gibbs comparison; tau_0 is the spectral law of the microstates
    let n = 64;
    let ms = micro(&["bernoulli:1", "semicircle:2"], n);
    let laws: Vec<SpectralMeasure> = ms
        .iter()
        .map(|f| {
            let ev = hermitian_eigenvalues(&f[0]).unwrap();
            SpectralMeasure::atomic(ev.into_iter().map(|x| (x, 1.0 / n as f64)).collect()).unwrap()
        })
        .collect();
    let h = coupling(0.01, &l);
    let mut p = SdProblem::from_measures(h.clone(), &laws, 8).unwrap();
    let mut s = sd_solve(&p).unwrap();
    let px = pushforward_x(&mut s, 4).unwrap();
    // truncation error bar of the SD side: change against a shallower closure
    p.closure_depth = 2;
    let coarse = pushforward_x(&mut sd_solve(&p).unwrap(), 4).unwrap();
    let mut c = GibbsConfig::orbital(Hamiltonian::Single(h), ms);
    c.sweeps = 2000;
    c.burn_in = 200;
    c.record_degree = Some(4);
    c.seed = 20_261_018;
    let chain = run_chain(c).unwrap();
    let (mean, se) = chain.mean_tracial_state(4).unwrap();
    let mut worst: Option<(f64, String)> = None;
    let mut words = 0;
    for w in trace_classes(&l.x_letters(), 4) {
        if w.is_unit() {
            continue;
        }
        words += 1;
        let d = (mean.value(&w).unwrap() - px.value(&w).unwrap()).norm();
        let e = se.get(&w).copied().unwrap_or(0.0);
        let trunc = (px.value(&w).unwrap() - coarse.value(&w).unwrap()).norm();
        // words fixed by the marginals differ only by round-off of the repeated conjugations
        let roundoff = 1e-12 * px.value(&w).unwrap().norm().max(1.0);
        let excess = d - 3.0 * e - trunc - roundoff;
        if worst.as_ref().is_none_or(|(x, _)| excess > *x) {
            worst = Some((excess, format!("{w}: |diff| {d:.2e}, stderr {e:.2e}, sd truncation {trunc:.1e}")));
        }
    }
    let (excess, at) = worst.unwrap();
    let gibbs_ok = excess <= 0.0;
    notes.push(format!("Gibbs N={n} on {words} words, tightest {at} (bound 3 stderr + sd truncation + 1e-12 relative)"));
    (free_ok && conv_ok && gibbs_ok, notes.join("; "))
}

fn liberation() -> Outcome {
    let l = singletons(2, 3.5);
    let (p, mut s) = small_coupling_solution(0.01);
    let dev = liberation_check(&mut s, &coupling(0.01, &l), 3).unwrap();
    let bound = 10.0 * p.tolerance;
    (dev <= bound, format!("max deviation {dev:.1e} on x-words of degree <= 3 (bound {bound:.0e})"))
}

// ---------- 9 ----------

fn relation_margin() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst = (f64::INFINITY, String::new());
    let mut count = 0;
    for (families, n) in [(1usize, 2usize), (1, 8), (1, 16), (2, 2), (2, 4), (2, 8), (2, 16)] {
        let l = singletons(families, 1.5);
        // the tuned step shrinks like N^-3/2 near the hard edge, so relaxation takes ~N^3 sweeps
        let sweeps = (12 * n * n * n).max(3000);
        let settings = GibbsSettings { sweeps, burn_in: sweeps / 6, ..GibbsSettings::default() };
        for _ in 0..2 {
            let h = random_x_poly(&l, &mut rng, 2).scale(&C64::new(0.5, 0.0));
            let r = pressure_relation_check(&h, n, &settings.with_seed(rng.random())).unwrap();
            // margin + 3 stderr, the slack left by the bound
            let slack = r.margin + 3.0 * r.stderr;
            if slack < worst.0 {
                worst = (slack, format!("n={families} N={n} margin {:.3e} stderr {:.1e}", r.margin, r.stderr));
            }
            count += 1;
        }
    }
    (worst.0 >= 0.0, format!("{count} cases at N <= 16, tightest {} (bound margin >= -3 stderr)", worst.1))
}

// ---------- 10 ----------

fn penalty_pressure() -> Outcome {
    let l = singletons(2, 2.0);
    let specs = ["bernoulli:1", "semicircle:2"];
    let beta = 1.0;
    let penalty = penalty_poly(&free_target(&l, &specs, 2), 2, beta, 0.5).unwrap();
    let ms: Vec<_> = [8, 16, 32].iter().map(|&n| micro(&specs, n)).collect();
    let settings = GibbsSettings { sweeps: 3000, burn_in: 500, seed: 10, ..GibbsSettings::default() };
    let est = double_pressure(&penalty, &ms, &settings, "quantile").unwrap();
    let pts = &est.points;
    let bounded = pts.iter().all(|p| p.normalized >= -beta - p.normalized_stderr);
    let monotone = pts.windows(2).all(|w| {
        w[1].normalized >= w[0].normalized - w[0].normalized_stderr.hypot(w[1].normalized_stderr)
    });
    let values: Vec<String> = pts.iter().map(|p| format!("N={} {:.2e}", p.n, p.normalized)).collect();
    (bounded && monotone, format!("{} (>= -{beta}, non-decreasing: {monotone})", values.join(", ")))
}

// ---------- 11 ----------

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("orbital-acceptance-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn dir_bytes(d: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(d)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn reproducibility() -> Outcome {
    let specs = [
        r#"{"seed": 11, "experiment": {"command": "pressure", "layout": {"sizes": [1, 1], "cutoff": 2.5},
            "h": "0.2*x[1,1]*x[2,1] + 0.2*x[2,1]*x[1,1]", "marginals": ["bernoulli:1", "semicircle:2"],
            "dims": [2, 4], "settings": {"sweeps": 300, "burn_in": 50}}}"#,
        r#"{"seed": 12, "experiment": {"command": "gibbs", "layout": {"sizes": [1, 1], "cutoff": 2.5},
            "h": "0.2*x[1,1]*x[2,1] + 0.2*x[2,1]*x[1,1]", "marginals": ["bernoulli:1", "semicircle:2"],
            "dim": 4, "settings": {"sweeps": 300, "burn_in": 50}}}"#,
        r#"{"seed": 13, "experiment": {"command": "sd", "layout": {"sizes": [1, 1], "cutoff": 3.5},
            "h": "0.01*x[1,1]*x[2,1] + 0.01*x[2,1]*x[1,1]", "tau0": ["bernoulli:1", "semicircle:2"],
            "degree": 8, "closure_depth": 1}}"#,
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (k, text) in specs.iter().enumerate() {
        let spec = experiment::parse_spec(text).unwrap();
        let (a, b) = (scratch(&format!("{k}a")), scratch(&format!("{k}b")));
        experiment::run(&spec, &a, Some(2)).unwrap();
        experiment::run(&spec, &b, Some(2)).unwrap();
        let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
        let same = fa == fb;
        ok &= same;
        notes.push(format!("{} {} files identical: {same}", spec.experiment.name(), fa.len()));
        let _ = std::fs::remove_dir_all(&a);
        let _ = std::fs::remove_dir_all(&b);
    }
    (ok, notes.join("; "))
}
