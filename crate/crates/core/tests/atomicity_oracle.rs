mod support;

use auditreg_core::checker::atomicity::{check_register, shrink};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use support::histories::random_history;
use support::linearize::linearizable;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4000))]

    #[test]
    fn predicates_agree_with_search(seed in any::<u64>()) {
        let h = random_history(&mut ChaCha20Rng::seed_from_u64(seed), 6);
        prop_assert_eq!(check_register(&h).is_ok(), linearizable(&h), "{:?}", h);
    }

    #[test]
    fn shrunk_witness_still_fails(seed in any::<u64>()) {
        let h = random_history(&mut ChaCha20Rng::seed_from_u64(seed), 6);
        if check_register(&h).is_err() {
            let s = shrink(&h);
            prop_assert!(check_register(&s).is_err());
            prop_assert!(!linearizable(&s));
            prop_assert!(s.reads.len() <= h.reads.len() && s.writes.len() <= h.writes.len());
        }
    }
}

#[test]
fn both_outcomes_are_generated() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (mut ok, mut bad) = (0, 0);
    for _ in 0..2000 {
        if linearizable(&random_history(&mut rng, 6)) {
            ok += 1;
        } else {
            bad += 1;
        }
    }
    assert!(ok > 200 && bad > 200, "ok {ok} bad {bad}");
}
