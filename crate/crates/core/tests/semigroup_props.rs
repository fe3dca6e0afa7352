use momentarb::semigroup::{count_basis, elements_up_to, evaluate};
use momentarb::{canonicalize, enumerate_semigroup, GeneratorSet, PayoffGenerator, SemigroupElement};
use proptest::prelude::*;

fn generators(strikes: &[(f64, f64, f64)]) -> GeneratorSet {
    let mut gens = vec![PayoffGenerator::asset(0, "x1"), PayoffGenerator::asset(1, "x2")];
    for (i, (a, b, k)) in strikes.iter().enumerate() {
        gens.push(PayoffGenerator::abs_linear(vec![*a, *b], *k, format!("g{i}")).unwrap());
    }
    GeneratorSet::new(gens).unwrap()
}

fn strike_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.2f64..2.0, -2.0f64..2.0, -1.0f64..1.0), 1..=2)
}

proptest! {
    #[test]
    fn canonical_form_matches_raw_product(
        strikes in strike_strategy(),
        exps in prop::collection::vec(0u32..4, 4),
        x in prop::collection::vec(0.0f64..1.5, 2),
    ) {
        let gens = generators(&strikes);
        let raw = SemigroupElement::from_exponents(exps[..gens.len()].to_vec());
        let exp = canonicalize(&raw, &gens).unwrap();
        let direct = evaluate(&raw, &gens, &x);
        let reduced = exp.evaluate(&gens, &x);
        prop_assert!((direct - reduced).abs() <= 1e-9 * (1.0 + direct.abs()), "{direct} vs {reduced}");
        for (e, _) in exp.elements(&gens) {
            prop_assert!(e.is_canonical(&gens));
        }
    }

    #[test]
    fn canonicalization_is_idempotent_on_canonical_elements(strikes in strike_strategy(), d in 1usize..4) {
        let gens = generators(&strikes);
        for e in elements_up_to(&gens, d) {
            let exp = canonicalize(&e, &gens).unwrap();
            let elems = exp.elements(&gens);
            prop_assert_eq!(elems.len(), 1);
            prop_assert_eq!(&elems[0].0, &e);
            prop_assert_eq!(elems[0].1, 1.0);
        }
    }

    #[test]
    fn enumeration_is_sorted_and_graded(strikes in strike_strategy(), d in 1usize..4) {
        let gens = generators(&strikes);
        let all = enumerate_semigroup(&gens, 2 * d).unwrap();
        prop_assert!(all.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(all.windows(2).all(|w| w[0].degree() <= w[1].degree()));
        prop_assert_eq!(&all[0], &gens.identity());
        prop_assert!(all.iter().all(|e| e.is_canonical(&gens) && e.degree() as usize <= 2 * d));
    }
}

#[test]
fn pure_asset_enumeration_matches_binomial_count() {
    for n in 1..=3 {
        for d in 0..=4 {
            let gens = GeneratorSet::assets(n);
            assert_eq!(elements_up_to(&gens, d).len() as u128, count_basis(n, d).unwrap());
        }
    }
}

#[test]
fn odd_truncation_is_rejected() {
    assert!(enumerate_semigroup(&GeneratorSet::assets(1), 3).is_err());
}

#[test]
fn squared_straddle_reduces_to_polynomial() {
    // |x1 - 0.5|^2 = x1^2 - x1 + 0.25
    let gens = GeneratorSet::new(vec![
        PayoffGenerator::asset(0, "x1"),
        PayoffGenerator::straddle(0, 1, 0.5).unwrap(),
    ])
    .unwrap();
    let exp = canonicalize(&SemigroupElement::from_exponents(vec![0, 2]), &gens).unwrap();
    assert!(exp.residual.is_empty());
    assert_eq!(exp.terms, vec![(vec![0], 0.25), (vec![1], -1.0), (vec![2], 1.0)]);
}
