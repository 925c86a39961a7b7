use std::sync::{Arc, Mutex, OnceLock};

use orbital_core::moments::{free_product, Alphabet, FreeProduct};
use orbital_core::ncpoly::parse;
use orbital_core::sdsolver::{liberation_check, pushforward_x, sd_equation, sd_residual, sd_solve, SdProblem, SdSolution};
use orbital_core::{FamilyLayout, Generator, MomentTable, PolyF64, SpectralMeasure, Word, C64};
use proptest::prelude::*;

fn layout() -> Arc<FamilyLayout> {
    Arc::new(FamilyLayout::singletons(2, 3.5).unwrap())
}

fn coupling(t: f64, l: &Arc<FamilyLayout>) -> PolyF64 {
    parse(&format!("({t})*x[1,1]*x[2,1] + ({t})*x[2,1]*x[1,1]"), l).unwrap()
}

fn measures(specs: [&str; 2]) -> [SpectralMeasure; 2] {
    specs.map(|s| SpectralMeasure::parse(s).unwrap())
}

fn centered() -> [SpectralMeasure; 2] {
    measures(["bernoulli:1", "semicircle:2"])
}

fn shifted() -> [SpectralMeasure; 2] {
    measures(["atomic:0.5@0,0.5@2", "atomic:0.25@1,0.75@3"])
}

fn word(text: &str, l: &Arc<FamilyLayout>) -> Word {
    let p: PolyF64 = parse(text, l).unwrap();
    let (w, _) = p.terms().next().unwrap();
    w.clone()
}

fn u(i: usize) -> Word {
    Word::letter(Generator::u(i))
}

/// The `t = 0.01`, `D = 8` solution with centered marginals, shared across tests.
fn small_t() -> &'static Mutex<SdSolution> {
    static SOL: OnceLock<Mutex<SdSolution>> = OnceLock::new();
    SOL.get_or_init(|| {
        let l = layout();
        let p = SdProblem::from_measures(coupling(0.01, &l), &centered(), 8).unwrap();
        Mutex::new(sd_solve(&p).unwrap())
    })
}

fn free_haar_table(p: &SdProblem) -> MomentTable {
    let mut fp = FreeProduct::with_haar(&p.tau0);
    let mut t = MomentTable::new(p.layout(), Alphabet::UZ, p.degree);
    for w in t.classes() {
        if !w.is_unit() {
            t.set(&w, fp.eval(&w).unwrap()).unwrap();
        }
    }
    t
}

#[test]
fn zero_coupling_reproduces_free_haar() {
    let l = layout();
    let p = SdProblem::from_measures(PolyF64::zero(&l), &shifted(), 6).unwrap();
    let mut s = sd_solve(&p).unwrap();
    assert!(s.report.converged);
    let oracle = free_haar_table(&p);
    for w in oracle.classes() {
        let d = (s.table.value(&w).unwrap() - oracle.value(&w).unwrap()).norm();
        assert!(d <= 1e-12, "{w}: {d}");
    }
    assert!(sd_residual(&oracle, &p).unwrap() <= 1e-12);

    // hand values: a = z1 with moments 1, 2; b = z2 with moments 2.5, 7
    let (a1, a2, b1, b2) = (1.0, 2.0, 2.5, 7.0);
    let v = |s: &mut SdSolution, t: &str| s.value(&word(t, &l)).unwrap();
    assert!((v(&mut s, "u[1]*z[1,1]*u'[1]*z[2,1]") - a1 * b1).norm() < 1e-12);
    assert!(v(&mut s, "u[1]*u[2]*u'[1]*u'[2]").norm() < 1e-12);
    let abab = a2 * b1 * b1 + a1 * a1 * b2 - a1 * a1 * b1 * b1;
    let x = word("x[1,1]*x[2,1]*x[1,1]*x[2,1]", &l);
    let px = pushforward_x(&mut s, 4).unwrap();
    assert!((px.value(&x).unwrap() - abab).norm() < 1e-12);
}

#[test]
fn zero_coupling_pushforward_is_the_free_product() {
    let l = layout();
    let mu = shifted();
    let p = SdProblem::from_measures(PolyF64::zero(&l), &mu, 6).unwrap();
    let mut s = sd_solve(&p).unwrap();
    let px = pushforward_x(&mut s, 4).unwrap();
    let marg: Vec<MomentTable> =
        (0..2).map(|i| MomentTable::from_measure(&l, Alphabet::X, i, &mu[i], 4).unwrap()).collect();
    let fp = free_product(&marg, 4).unwrap();
    for w in fp.classes() {
        let d = (px.value(&w).unwrap() - fp.value(&w).unwrap()).norm();
        assert!(d <= 1e-12, "{w}: {d}");
    }
    assert_eq!(px.value(&Word::unit()).unwrap(), C64::new(1.0, 0.0));
}

#[test]
fn powers_of_a_unitary_are_forced_to_vanish() {
    let l = layout();
    let p = SdProblem::from_measures(PolyF64::zero(&l), &centered(), 8).unwrap();
    let mut zero = MomentTable::new(&l, Alphabet::UZ, 8);
    for w in zero.classes() {
        if !w.is_unit() {
            zero.set(&w, C64::new(0.0, 0.0)).unwrap();
        }
    }
    let mut uk = Word::unit();
    for _ in 0..8 {
        uk = uk.mul(&u(0));
        assert_eq!(sd_equation(&zero, &p, 0, &uk).unwrap().norm(), 0.0);
    }
    let m1 = C64::new(0.3, -0.1);
    zero.set(&u(0), m1).unwrap();
    assert!((sd_equation(&zero, &p, 0, &u(0)).unwrap().norm() - m1.norm()).abs() < 1e-15);
}

#[test]
fn perturbed_moments_are_detected() {
    let l = layout();
    let p = SdProblem::from_measures(PolyF64::zero(&l), &centered(), 6).unwrap();
    let mut t = free_haar_table(&p);
    let w = word("u[1]*u[2]*u'[1]*u'[2]", &l);
    t.set(&w, t.value(&w).unwrap() + 0.1).unwrap();
    assert!(sd_residual(&t, &p).unwrap() >= 0.1 - 1e-12);

    let sol = small_t().lock().unwrap();
    let p = SdProblem::from_measures(coupling(0.01, &l), &centered(), 8).unwrap();
    let mut t = sol.table.clone();
    let z = word("z[1,1]^2", &l);
    t.set(&z, t.value(&z).unwrap() + 0.1).unwrap();
    assert!(sd_residual(&t, &p).unwrap() >= 0.1 * (1.0 - 0.05));
}

#[test]
fn small_coupling_converges() {
    let l = layout();
    let p = SdProblem::from_measures(coupling(0.01, &l), &centered(), 8).unwrap();
    let sol = small_t().lock().unwrap();
    let r = &sol.report;
    assert!(r.converged && r.iterations <= 200, "{r:?}");
    assert!(r.residual <= 1e-10);
    assert!(sd_residual(&sol.table, &p).unwrap() <= 1e-10);
    sol.table.validate(1e-10).unwrap();
    assert!(r.contraction_ratios.iter().all(|&q| q < 1.0), "{:?}", r.contraction_ratios);
    assert!(r.warnings.is_empty());
    assert!(r.to_csv().lines().count() == r.iterations + 1);
}

#[test]
fn coupling_sign_and_first_order() {
    // tau_h(x1 x2) = -2 t m2(z1) m2(z2) + O(t^2) with m2 = 1 for both marginals
    let l = layout();
    let mut sol = small_t().lock().unwrap();
    let px = pushforward_x(&mut sol, 4).unwrap();
    let v = px.value(&word("x[1,1]*x[2,1]", &l)).unwrap();
    assert!(v.re < 0.0 && v.im.abs() < 1e-14);
    assert!((v.re + 0.02).abs() < 1e-3, "{v}");
}

#[test]
fn pushforward_keeps_the_marginals() {
    let mut sol = small_t().lock().unwrap();
    let px = pushforward_x(&mut sol, 4).unwrap();
    let mu = centered();
    for (i, m) in mu.iter().enumerate() {
        for k in 1..=4 {
            let w = Word::new(std::iter::repeat_n(Generator::x(i, 0), k));
            assert!((px.value(&w).unwrap() - m.moment(k)).norm() < 1e-12, "{w}");
        }
    }
    assert_eq!(px.value(&Word::unit()).unwrap(), C64::new(1.0, 0.0));
}

#[test]
fn liberation_identity_holds_on_the_solution() {
    let l = layout();
    let h = coupling(0.01, &l);
    let mut sol = small_t().lock().unwrap();
    let dev = liberation_check(&mut sol, &h, 3).unwrap();
    assert!(dev <= 1e-9, "{dev}");
    let j = orbital_core::ncpoly::liberation_gradient(0, &h).unwrap();
    let mut tj = C64::new(0.0, 0.0);
    for (w, c) in j.terms() {
        tj += sol.value(w).unwrap() * *c;
    }
    assert!(tj.norm() <= 1e-9);
}

#[test]
fn liberation_check_is_trivial_without_coupling() {
    let l = layout();
    let p = SdProblem::from_measures(PolyF64::zero(&l), &centered(), 4).unwrap();
    let mut s = sd_solve(&p).unwrap();
    assert_eq!(liberation_check(&mut s, &p.h, 3).unwrap(), 0.0);
}

#[test]
fn invalid_problems_are_rejected() {
    let l = layout();
    let mu = centered();
    assert!(SdProblem::from_measures(coupling(0.01, &l), &mu, 7).unwrap().validate().is_err());
    let skew: PolyF64 = parse("0.01*x[1,1]*x[2,1]", &l).unwrap();
    assert!(sd_solve(&SdProblem::from_measures(skew, &mu, 8).unwrap()).is_err());
    let mut p = SdProblem::from_measures(coupling(0.01, &l), &mu, 8).unwrap();
    p.damping = 0.0;
    assert!(p.validate().is_err());
    assert!(SdProblem::from_measures(coupling(0.01, &l), &mu[..1], 8).is_err());
}

#[test]
fn large_coupling_warns() {
    let l = layout();
    let mut p = SdProblem::from_measures(coupling(0.2, &l), &centered(), 8).unwrap();
    p.closure_depth = 0;
    p.max_iter = 3;
    let s = sd_solve(&p).unwrap();
    assert_eq!(s.report.warnings.len(), 1);
    assert_eq!(s.report.iterations, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn solutions_are_tracial_states_with_fixed_marginals(t in -0.01f64..0.01) {
        let l = layout();
        let mut p = SdProblem::from_measures(coupling(t, &l), &centered(), 8).unwrap();
        p.closure_depth = 1;
        let mut s = sd_solve(&p).unwrap();
        prop_assert!(s.report.converged);
        s.table.validate(1e-10).unwrap();
        prop_assert!(sd_residual(&s.table, &p).unwrap() <= 1e-10);
        let px = pushforward_x(&mut s, 2).unwrap();
        let x12 = px.value(&word("x[1,1]*x[2,1]", &l)).unwrap();
        prop_assert!(x12.re * t <= 0.0);
        prop_assert!((px.value(&word("x[2,1]^2", &l)).unwrap().re - 1.0).abs() < 1e-12);
    }
}
