mod common;

use dsos_cbf::affinegram::{
    dd_linear_constraints, dominance_margins, dsos_decomposition, fresh_dsos_poly, fresh_free_poly,
    gram_expansion, is_diagonally_dominant, AffinePolynomial, DecisionAllocator,
};
use dsos_cbf::polyring::{monomial_basis, Monomial, Polynomial};
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn fixed_poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::array::uniform2(0u32..=2), -3i32..=3), 0..6).prop_map(|terms| {
        Polynomial::from_terms(2, terms.into_iter().map(|(e, c)| (Monomial::new(&e).unwrap(), c as f64))).unwrap()
    })
}

proptest! {
    #[test]
    fn mul_fixed_commutes_with_instantiation(p in fixed_poly(), z in prop::collection::vec(-3i32..=3, 6)) {
        let mut alloc = DecisionAllocator::new();
        let free = fresh_free_poly(&mut alloc, "c", 2, 2).unwrap();
        let z: Vec<f64> = z.into_iter().map(f64::from).collect();
        let lhs = free.mul_fixed(&p).unwrap().instantiate(&z);
        let rhs = free.instantiate(&z).try_mul(&p).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn coefficient_system_vanishes_only_at_the_zero_polynomial(z in prop::collection::vec(-3i32..=3, 6)) {
        let mut alloc = DecisionAllocator::new();
        let free = fresh_free_poly(&mut alloc, "c", 2, 2).unwrap();
        let z: Vec<f64> = z.into_iter().map(f64::from).collect();
        let all_zero = free.coefficient_system().iter().all(|e| e.evaluate(&z) == 0.0);
        prop_assert_eq!(all_zero, free.instantiate(&z).is_zero());
    }

    #[test]
    fn dsos_expansion_is_the_quadratic_form(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let (n, d) = [(1, 2), (2, 1), (2, 2), (3, 1)][rng.gen_range(0..4)];
        let mut alloc = DecisionAllocator::new();
        let s = fresh_dsos_poly(&mut alloc, "s", n, d).unwrap();
        let k = s.dim();
        let m = random_symmetric(&mut rng, k);
        let mut z = vec![0.0; alloc.len()];
        for i in 0..k {
            for j in i..k {
                z[s.gram.index(i, j)] = m[i][j];
            }
        }
        let exps: Vec<Vec<u32>> = s.basis.iter().map(|b| b.exponents().iter().map(|&e| e as u32).collect()).collect();
        let diff = max_difference(&coefficient_map(&s.expansion.instantiate(&z)), &quadratic_form(&m, &exps));
        prop_assert!(diff <= 1e-12, "difference {}", diff);
        let direct = gram_expansion(&m, &s.basis, n).unwrap();
        prop_assert!(max_difference(&coefficient_map(&direct), &quadratic_form(&m, &exps)) <= 1e-12);
    }

    /// With `tau = |Q|` the DD rows reduce to the definition.
    #[test]
    fn dd_rows_at_absolute_bound(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let k = rng.gen_range(1..=5);
        let mut alloc = DecisionAllocator::new();
        let s = fresh_dsos_poly(&mut alloc, "s", 1, k as u32 - 1).unwrap();
        let m = random_symmetric(&mut rng, k);
        let mut z = vec![0.0; alloc.len()];
        for i in 0..k {
            for j in i..k {
                z[s.gram.index(i, j)] = m[i][j];
                z[s.bound.index(i, j)] = m[i][j].abs();
            }
        }
        let rows_ok = dd_linear_constraints(&s).iter().all(|r| r.evaluate(&z) <= 1e-12);
        prop_assert_eq!(rows_ok, oracle_dd(&m, 1e-12));
        prop_assert_eq!(is_diagonally_dominant(&m, 1e-12).unwrap(), oracle_dd(&m, 1e-12));
    }

    #[test]
    fn margins_match_definition(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let k = rng.gen_range(1..=6);
        let m = random_symmetric(&mut rng, k);
        let margins = dominance_margins(&m).unwrap();
        for i in 0..k {
            let off: f64 = (0..k).filter(|&j| j != i).map(|j| m[i][j].abs()).sum();
            prop_assert!((margins[i] - (m[i][i] - off)).abs() <= 1e-12);
        }
    }

    #[test]
    fn decomposition_weights_are_nonnegative(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let k = rng.gen_range(1..=6);
        let tight = rng.gen_bool(0.5);
        let m = random_dd(&mut rng, k, tight);
        let terms = dsos_decomposition(&m, 1e-12).unwrap();
        prop_assert!(terms.iter().all(|t| t.weight >= 0.0));
    }
}

#[test]
fn decomposition_rejects_non_dominant() {
    let m = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
    assert!(dsos_decomposition(&m, 1e-9).is_err());
}

#[test]
fn allocator_blocks_are_contiguous() {
    let mut alloc = DecisionAllocator::new();
    fresh_free_poly(&mut alloc, "p", 2, 1).unwrap();
    fresh_dsos_poly(&mut alloc, "s", 2, 1).unwrap();
    let blocks = alloc.blocks();
    let names: Vec<&str> = blocks.iter().map(|b| b.name.as_str()).collect();
    assert_eq!(names, ["p", "s.Q", "s.tau"]);
    assert_eq!(blocks.iter().map(|b| b.len).collect::<Vec<_>>(), [3, 6, 6]);
    for w in blocks.windows(2) {
        assert_eq!(w[0].range().end, w[1].start);
    }
    assert_eq!(alloc.len(), 15);
}

#[test]
fn add_fixed_moves_into_constants() {
    let mut p = AffinePolynomial::zero(1);
    let q = Polynomial::from_terms(1, [(Monomial::new(&[2]).unwrap(), 3.0)]).unwrap();
    p.add_fixed(&q, -1.0).unwrap();
    let rows = p.coefficient_rows();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].1.constant, -3.0);
    assert_eq!(monomial_basis(1, 2).len(), 3);
}
