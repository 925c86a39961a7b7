use std::sync::Arc;

use orbital_core::gibbs::{GibbsSettings, Hamiltonian, LogZMethod};
use orbital_core::moments::{free_product, Alphabet};
use orbital_core::ncpoly::parse;
use orbital_core::pressure::{
    double_pressure, eta_estimate, finite_n_property_suite, grid_sup_pressure, penalty_poly,
    pressure_estimate, pressure_relation_check, OptimizerSettings, SharedSamples,
};
use orbital_core::randmat::{double_trace_evaluate, gue, haar_unitary, quantile_microstate, spectral_clip, MatrixTuple};
use orbital_core::{CMatrix, FamilyLayout, Generator, MomentTable, PolyF64, SpectralMeasure, TensorPolyF64, Word, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn layout(n: usize, r: f64) -> Arc<FamilyLayout> {
    Arc::new(FamilyLayout::singletons(n, r).unwrap())
}

fn poly(text: &str, l: &Arc<FamilyLayout>) -> PolyF64 {
    parse(text, l).unwrap()
}

fn micro(specs: &[&str], n: usize) -> Vec<Vec<CMatrix>> {
    specs
        .iter()
        .map(|s| vec![quantile_microstate(&SpectralMeasure::parse(s).unwrap(), n).unwrap()])
        .collect()
}

fn fast_settings() -> GibbsSettings {
    GibbsSettings { sweeps: 1500, burn_in: 300, seed: 4, ..GibbsSettings::default() }
}

fn random_poly(l: &Arc<FamilyLayout>, rng: &mut impl Rng, degree: usize) -> PolyF64 {
    let letters = l.x_letters();
    let mut terms = Vec::new();
    for _ in 0..5 {
        let len = rng.random_range(0..=degree);
        let w = Word::new((0..len).map(|_| letters[rng.random_range(0..letters.len())]));
        terms.push((w, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
    }
    PolyF64::from_terms(l, terms).unwrap().hermitian_part()
}

#[test]
fn zero_test_function_has_zero_pressure_at_every_n() {
    let l = layout(2, 2.0);
    let ms: Vec<_> = [2, 4, 8].iter().map(|&n| micro(&["semicircle:2", "bernoulli:1"], n)).collect();
    let est = pressure_estimate(&Hamiltonian::Single(PolyF64::zero(&l)), &ms, &fast_settings(), "quantile").unwrap();
    assert!(est.points.iter().all(|p| p.normalized == 0.0 && p.stderr == 0.0));
}

#[test]
fn single_family_test_function_is_exact() {
    let l = layout(2, 2.0);
    let h = poly("x[1,1]*x[1,1]*x[1,1] - 0.5*x[1,1] + 2*x[2,1]*x[2,1]", &l);
    let ms: Vec<_> = [3, 8].iter().map(|&n| micro(&["semicircle:2", "arcsine:-1,2"], n)).collect();
    let est = pressure_estimate(&Hamiltonian::Single(h.clone()), &ms, &fast_settings(), "quantile").unwrap();
    for (p, m) in est.points.iter().zip(&ms) {
        let t = MatrixTuple::new(&l, m.clone(), None).unwrap();
        let exact = -orbital_core::randmat::trace_evaluate(&h, &t).unwrap().re;
        assert!((p.normalized - exact).abs() < 1e-12, "{} vs {exact}", p.normalized);
    }
    assert!(est.within_range(0.0));
}

#[test]
fn one_by_one_two_family_closed_form() {
    let l = layout(2, 2.0);
    let t = 0.8;
    let ms = vec![vec![
        vec![CMatrix::from_element(1, 1, C64::new(1.5, 0.0))],
        vec![CMatrix::from_element(1, 1, C64::new(-0.5, 0.0))],
    ]];
    let h = poly("0.4*x[1,1]*x[2,1] + 0.4*x[2,1]*x[1,1]", &l);
    let est = pressure_estimate(&Hamiltonian::Single(h), &ms, &fast_settings(), "scalars").unwrap();
    assert!((est.points[0].log_z - (-t * 1.5 * -0.5)).abs() < 1e-15);
}

#[test]
fn constant_shift_moves_pressure_by_the_constant() {
    let l = layout(2, 2.0);
    let h = poly("0.05*x[1,1]*x[2,1] + 0.05*x[2,1]*x[1,1]", &l);
    let c = 0.25;
    let hc = &h + &PolyF64::constant(&l, C64::new(c, 0.0));
    let ms: Vec<_> = [2, 4].iter().map(|&n| micro(&["semicircle:2", "bernoulli:1"], n)).collect();
    for method in [LogZMethod::Direct, LogZMethod::thermodynamic()] {
        let s = GibbsSettings { method, ..fast_settings() };
        let a = pressure_estimate(&Hamiltonian::Single(h.clone()), &ms, &s, "q").unwrap();
        let b = pressure_estimate(&Hamiltonian::Single(hc.clone()), &ms, &s, "q").unwrap();
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert!((pb.normalized - (pa.normalized - c)).abs() < 1e-9, "{method:?}");
        }
    }
}

#[test]
fn property_suite_holds_on_shared_samples() {
    let l = layout(2, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for &n in &[2usize, 8] {
        let ms = micro(&["semicircle:2", "bernoulli:1"], n);
        let samples = SharedSamples::draw(&l, &ms, 12, 99).unwrap();
        for _ in 0..10 {
            let h1 = random_poly(&l, &mut rng, 3);
            let h2 = random_poly(&l, &mut rng, 2);
            let r = finite_n_property_suite(&samples, &h1, &h2, 1).unwrap();
            assert!(r.max_violation <= 1e-9, "N={n}: {r:?}");
        }
    }
}

#[test]
fn additivity_is_an_equality_for_disjoint_families() {
    // direct check of the factorisation on a 3-family layout split 1 | 2
    let l = layout(3, 2.0);
    let ms = micro(&["semicircle:2", "bernoulli:1", "arcsine:-2,2"], 4);
    let samples = SharedSamples::draw(&l, &ms, 6, 3).unwrap();
    let a = poly("x[1,1]*x[1,1]", &l);
    let b = poly("0.7*x[2,1]*x[3,1] + 0.7*x[3,1]*x[2,1]", &l);
    let lhs = samples.pressure(&(&a + &b)).unwrap();
    let rhs = samples.pressure(&a).unwrap() + samples.pressure(&b).unwrap();
    assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
}

fn semicircle_free_target(l: &Arc<FamilyLayout>, m: usize) -> MomentTable {
    let bern = SpectralMeasure::parse("bernoulli:1").unwrap();
    let semi = SpectralMeasure::parse("semicircle:2").unwrap();
    free_product(
        &[
            MomentTable::from_measure(l, Alphabet::X, 0, &bern, m).unwrap(),
            MomentTable::from_measure(l, Alphabet::X, 1, &semi, m).unwrap(),
        ],
        m,
    )
    .unwrap()
}

#[test]
fn penalty_single_variable_example() {
    let l = layout(1, 1.0);
    let mut target = MomentTable::new(&l, Alphabet::X, 1);
    target.set(&Word::letter(Generator::x(0, 0)), C64::new(0.0, 0.0)).unwrap();
    let p = penalty_poly(&target, 1, 1.0, 1.0).unwrap();
    let x = poly("x[1,1]", &l);
    assert_eq!(p, TensorPolyF64::tensor(&x, &x).unwrap());
}

#[test]
fn penalty_vanishes_on_target_and_is_nonnegative() {
    let l = layout(2, 2.0);
    let target = semicircle_free_target(&l, 2);
    let p = penalty_poly(&target, 2, 0.7, 0.5).unwrap();
    let mut pairing = C64::new(0.0, 0.0);
    for (a, b, c) in p.terms() {
        pairing += c * target.value(a).unwrap() * target.value(b).unwrap();
    }
    assert!(pairing.norm() < 1e-12, "{pairing}");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let fams = (0..2).map(|_| vec![spectral_clip(&gue::<f64, _>(4, &mut rng).unwrap(), 2.0).unwrap()]).collect();
        let t = MatrixTuple::new(&l, fams, None).unwrap();
        let v = double_trace_evaluate(&p, &t).unwrap();
        assert!(v.re >= -1e-12 && v.im.abs() < 1e-12, "{v}");
    }
}

#[test]
fn double_pressure_of_unit_and_of_single_leg() {
    let l = layout(2, 2.0);
    let ms: Vec<_> = [2, 4].iter().map(|&n| micro(&["semicircle:2", "bernoulli:1"], n)).collect();
    let one = PolyF64::one(&l);
    let s = fast_settings();
    let unit = double_pressure(&TensorPolyF64::tensor(&one, &one).unwrap(), &ms, &s, "q").unwrap();
    assert!(unit.points.iter().all(|p| (p.normalized + 1.0).abs() < 1e-12));
    let h = poly("0.3*x[1,1]*x[2,1] + 0.3*x[2,1]*x[1,1]", &l);
    let single = pressure_estimate(&Hamiltonian::Single(h.clone()), &ms, &s, "q").unwrap();
    let double = double_pressure(&TensorPolyF64::tensor(&h, &one).unwrap(), &ms, &s, "q").unwrap();
    for (a, b) in single.points.iter().zip(&double.points) {
        assert!((a.normalized - b.normalized).abs() < 1e-9);
    }
}

#[test]
fn eta_with_empty_basis_is_zero() {
    let l = layout(2, 2.0);
    let ms = micro(&["bernoulli:1", "semicircle:2"], 4);
    let samples = SharedSamples::draw(&l, &ms, 4, 1).unwrap();
    let est = eta_estimate(&semicircle_free_target(&l, 2), &samples, 0, &OptimizerSettings::default()).unwrap();
    assert_eq!(est.value, 0.0);
    assert!(est.basis.is_empty());
}

#[test]
fn eta_of_mismatched_marginal_diverges() {
    let l = layout(2, 2.0);
    let ms = micro(&["bernoulli:1", "semicircle:2"], 4);
    let samples = SharedSamples::draw(&l, &ms, 4, 1).unwrap();
    let mut target = semicircle_free_target(&l, 2);
    let x2 = Word::new([Generator::x(1, 0), Generator::x(1, 0)]);
    target.set(&x2, C64::new(1.5, 0.0)).unwrap();
    let est = eta_estimate(&target, &samples, 2, &OptimizerSettings::default()).unwrap();
    let div = est.divergence.expect("divergence not detected");
    assert!(div.witness.contains("x[2,1]*x[2,1]"), "{}", div.witness);
    // slope is tau(p) - tr p(Xi) along the ray -p
    let m2 = MatrixTuple::new(&l, ms, None).unwrap().word_trace(&x2).unwrap().re;
    assert!((div.slope - (m2 - 1.5)).abs() < 1e-6, "{} vs {}", div.slope, m2 - 1.5);
}

#[test]
fn eta_of_free_target_is_small_and_nonpositive() {
    let l = layout(2, 2.0);
    let n = 32;
    let ms = micro(&["bernoulli:1", "semicircle:2"], n);
    // marginals of the target equal those of the microstates
    let t = MatrixTuple::new(&l, ms.clone(), None).unwrap();
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
    let samples = SharedSamples::draw(&l, &ms, 24, 8).unwrap();
    let est = eta_estimate(&target, &samples, 3, &OptimizerSettings::default()).unwrap();
    assert!(est.divergence.is_none(), "{:?}", est.divergence);
    assert!((-0.05..=0.0).contains(&est.value), "{}", est.value);
    assert!(est.evaluations <= 200 + 4 * 31 * est.basis.len() + 1);
}

#[test]
fn microstate_sup_pressure_is_monotone_in_the_target_neighbourhood() {
    let l = layout(2, 1.0);
    let h = poly("x[1,1]*x[1,1] + 0.5*x[1,1]*x[2,1] + 0.5*x[2,1]*x[1,1] - x[2,1]", &l);
    let target = semicircle_free_target(&Arc::new(FamilyLayout::singletons(2, 1.0).unwrap()), 3);
    let target = MomentTable::from_json(&target.to_json(), &l).unwrap();
    let grid: Vec<f64> = (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect();
    let mut prev = f64::INFINITY;
    for &delta in &[2.0, 1.5, 1.0, 0.8, 0.5] {
        let v = grid_sup_pressure(&h, &target, 2, delta, &grid).unwrap();
        assert!(v <= prev);
        prev = v;
    }
    let mut prev = f64::INFINITY;
    for m in 1..=3 {
        let v = grid_sup_pressure(&h, &target, m, 1.5, &grid).unwrap();
        assert!(v <= prev);
        prev = v;
    }
}

#[test]
fn pressure_relation_at_zero_is_nonnegative() {
    let l = layout(2, 1.5);
    let s = GibbsSettings { sweeps: 2000, burn_in: 400, seed: 17, ..GibbsSettings::default() };
    let r = pressure_relation_check(&PolyF64::zero(&l), 4, &s).unwrap();
    assert_eq!(r.matrix_log_ratio, 0.0);
    assert!(r.margin >= -1e-3, "{r:?}");
}

#[test]
fn shared_samples_are_seed_determined() {
    let l = layout(2, 2.0);
    let ms = micro(&["bernoulli:1", "semicircle:2"], 3);
    let h = poly("x[1,1]*x[2,1]*x[1,1]*x[2,1] + x[2,1]*x[1,1]*x[2,1]*x[1,1]", &l);
    let a = SharedSamples::draw(&l, &ms, 5, 7).unwrap().pressure(&h).unwrap();
    let b = SharedSamples::draw(&l, &ms, 5, 7).unwrap().pressure(&h).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    let _ = haar_unitary::<f64, _>(2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
}
