mod common;

use proptest::prelude::*;
use qmarkov::channels::factor_out_identity;
use qmarkov::linalg::{
    eigh, hermitian_defect, max_abs_diff, partial_trace, permute_subsystems, tensor, trace, weyl_basis, CMatrix,
};
use qmarkov::markov::{
    is_markov, markov_reduced_channel, random_block_dims, random_markov_decomposition, recover_structure, CMI_TOL,
};
use qmarkov::random::{derive_seed, ginibre, random_cptp, random_density, random_haar_unitary, rng_from_seed};
use qmarkov::scenarios::random_localized_channel;
use qmarkov::states::{conditional_mutual_information, mutual_information, von_neumann_entropy};
use qmarkov::SpaceLayout;
use rand::Rng;

fn layout(spec: &[(&str, usize)]) -> SpaceLayout {
    SpaceLayout::new(spec.iter().copied()).unwrap()
}

fn three(da: usize, db: usize, de: usize) -> SpaceLayout {
    layout(&[("A", da), ("B", db), ("E", de)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partial_trace_keeps_trace_and_composes(seed: u64, da in 1usize..4, db in 1usize..4, de in 1usize..4) {
        let l = three(da, db, de);
        let m = ginibre(l.total_dim(), l.total_dim(), &mut rng_from_seed(seed));
        let (ab, lab) = partial_trace(&m, &l, &["A", "B"]).unwrap();
        prop_assert!((trace(&ab) - trace(&m)).norm() < 1e-12);
        let (a_two, _) = partial_trace(&ab, &lab, &["A"]).unwrap();
        let (a_one, _) = partial_trace(&m, &l, &["A"]).unwrap();
        prop_assert!(max_abs_diff(&a_two, &a_one) < 1e-12);
    }

    #[test]
    fn tensor_is_associative(seed: u64, d1 in 1usize..4, d2 in 1usize..4, d3 in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let (x, y, z) = (ginibre(d1, d1, &mut rng), ginibre(d2, d2, &mut rng), ginibre(d3, d3, &mut rng));
        prop_assert!(max_abs_diff(&tensor(&tensor(&x, &y), &z), &tensor(&x, &tensor(&y, &z))) < 1e-12);
    }

    #[test]
    fn weyl_expansion_reconstructs(seed: u64, d in 1usize..6) {
        let m = ginibre(d, d, &mut rng_from_seed(seed));
        let basis = weyl_basis(d).unwrap();
        let back = basis.reconstruct(&basis.coefficients(&m));
        prop_assert!(max_abs_diff(&back, &m) < 1e-10);
    }

    #[test]
    fn permutation_preserves_spectrum(seed: u64, da in 1usize..4, db in 1usize..4, de in 1usize..3) {
        let l = three(da, db, de);
        let rho = random_density(&l, l.total_dim(), &mut rng_from_seed(seed)).unwrap();
        let (p, pl) = permute_subsystems(rho.matrix(), &l, &["E", "A", "B"]).unwrap();
        prop_assert_eq!(pl.labels(), vec!["E", "A", "B"]);
        prop_assert!((trace(&p) - trace(rho.matrix())).norm() < 1e-10);
        prop_assert!(hermitian_defect(&p) < 1e-10);
        let (x, y) = (eigh(&p).unwrap().values, eigh(rho.matrix()).unwrap().values);
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn entropy_within_bounds(seed: u64, d in 1usize..7, rank_frac in 0.0f64..1.0) {
        let l = layout(&[("S", d)]);
        let rank = 1 + ((d - 1) as f64 * rank_frac) as usize;
        let rho = random_density(&l, rank, &mut rng_from_seed(seed)).unwrap();
        let s = von_neumann_entropy(&rho);
        prop_assert!(s >= -1e-9 && s <= (d as f64).log2() + 1e-9);
        prop_assert!((s - common::entropy(rho.matrix())).abs() < 1e-9);
    }

    #[test]
    fn channels_preserve_trace_and_positivity(seed: u64, din in 1usize..4, dout in 1usize..5, k in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let k = k.max(din.div_ceil(dout));
        let ch = random_cptp(&layout(&[("X", din)]), &layout(&[("Y", dout)]), k, &mut rng).unwrap();
        prop_assert!(ch.completeness_residual() < 1e-10);
        let rho = random_density(&layout(&[("X", din)]), din, &mut rng).unwrap();
        let out = ch.apply(&rho).unwrap();
        prop_assert!((trace(out.matrix()).re - 1.0).abs() < 1e-10);
        prop_assert!(out.eigenvalues().iter().all(|&x| x >= -1e-9));
    }

    #[test]
    fn lift_commutes_with_tracing_spectators(seed: u64, da in 1usize..4, db in 1usize..3, de in 1usize..3) {
        let mut rng = rng_from_seed(seed);
        let ra = random_density(&layout(&[("A", da)]), da, &mut rng).unwrap();
        let rbe = random_density(&layout(&[("B", db), ("E", de)]), db * de, &mut rng).unwrap();
        let be = layout(&[("B", db), ("E", de)]);
        let ch = random_cptp(&be, &layout(&[("B'", 2 * db), ("E", de)]), 2, &mut rng).unwrap();
        let rho = ra.tensor(&rbe).unwrap();
        let full = ch.lift_localized(rho.layout()).unwrap().apply(&rho).unwrap();
        let local = ch.apply(&rbe).unwrap();
        let traced = full.marginal(&["B'", "E"]).unwrap();
        prop_assert!(max_abs_diff(traced.matrix(), local.matrix()) < 1e-10);
        prop_assert!(max_abs_diff(full.marginal(&["A"]).unwrap().matrix(), ra.matrix()) < 1e-10);
    }

    #[test]
    fn markov_states_recover_and_reduce(seed: u64) {
        let mut rng = rng_from_seed(seed);
        let dims = random_block_dims(2, 2, &mut rng);
        let a = layout(&[("A", 2)]);
        let e = layout(&[("E", 2)]);
        let d = random_markov_decomposition(&a, "B", &e, &dims, &mut rng).unwrap();
        let rho = d.assemble().unwrap();
        let back = recover_structure(&rho, &["A"], &["B"], &["E"]).unwrap().assemble().unwrap();
        prop_assert!(back.trace_distance(&rho).unwrap() <= 1e-7);
        let be = d.b_layout().concat(d.e_layout()).unwrap();
        let grow = rng.random_bool(0.5);
        let (ch, env) = random_localized_channel(&be, grow, &mut rng).unwrap();
        let env: Vec<&str> = env.iter().map(String::as_str).collect();
        let (eps, check) = markov_reduced_channel(&d, &ch, &env).unwrap();
        prop_assert!(check <= 1e-8);
        prop_assert!(eps.completeness_residual() <= 1e-9);
    }
}

#[test]
fn identity_factor_is_recovered_exactly() {
    let mut rng = rng_from_seed(81);
    for t in 0..200 {
        let (da, db) = (1 + t % 3, 1 + (t / 3) % 3);
        let m = ginibre(db, db, &mut rng);
        let x = tensor(&CMatrix::identity(da, da), &m);
        let f = factor_out_identity(&x, da).unwrap();
        assert!(f.residual <= 1e-12, "{}", f.residual);
        assert!(max_abs_diff(&f.candidate, &m) <= 1e-12);
    }
}

#[test]
fn subadditivity_and_strong_subadditivity() {
    for t in 0..500 {
        let mut rng = rng_from_seed(derive_seed(82, t));
        let (da, db, de) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=2));
        let l = three(da, db, de);
        let rank = rng.random_range(1..=l.total_dim());
        let rho = random_density(&l, rank, &mut rng).unwrap();
        let ab = rho.marginal(&["A", "B"]).unwrap();
        assert!(mutual_information(&ab, &["A"], &["B"]).unwrap() >= -1e-9);
        assert!(conditional_mutual_information(&rho, &["A"], &["E"], &["B"]).unwrap() >= -1e-9);
    }
}

#[test]
fn mutual_information_never_grows_under_local_channels() {
    for t in 0..500 {
        let mut rng = rng_from_seed(derive_seed(83, t));
        let (da, db) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let ab = layout(&[("A", da), ("B", db)]);
        let rho = random_density(&ab, rng.random_range(1..=da * db), &mut rng).unwrap();
        let dout = rng.random_range(1..=2 * db);
        let k = rng.random_range(1..=3).max(db.div_ceil(dout));
        let ch = random_cptp(&layout(&[("B", db)]), &layout(&[("B", dout)]), k, &mut rng).unwrap();
        let out = ch.lift_localized(&ab).unwrap().apply(&rho).unwrap();
        let before = mutual_information(&rho, &["A"], &["B"]).unwrap();
        let after = mutual_information(&out, &["A"], &["B"]).unwrap();
        assert!(after <= before + 1e-9, "{after} > {before}");
    }
}

#[test]
fn generators_are_reproducible() {
    let l = three(2, 2, 2);
    let a = random_density(&l, 3, &mut rng_from_seed(5)).unwrap();
    let b = random_density(&l, 3, &mut rng_from_seed(5)).unwrap();
    assert_eq!(a.matrix(), b.matrix());
    let u = random_haar_unitary(3, &mut rng_from_seed(6)).unwrap();
    assert_eq!(u, random_haar_unitary(3, &mut rng_from_seed(6)).unwrap());
    assert!(max_abs_diff(&(u.adjoint() * &u), &CMatrix::identity(3, 3)) < 1e-10);
}

#[test]
fn markov_check_agrees_with_oracle_on_random_states() {
    for t in 0..30 {
        let mut rng = rng_from_seed(derive_seed(84, t));
        let l = three(2, 2, 2);
        let rho = random_density(&l, rng.random_range(1..=8), &mut rng).unwrap();
        let v = is_markov(&rho, &["A"], &["B"], &["E"], CMI_TOL).unwrap();
        assert!((v.cmi - common::cmi3(rho.matrix(), &[2, 2, 2])).abs() < 1e-9);
    }
}
