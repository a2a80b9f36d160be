mod common;

use common::{brute_force_full_match, random_matrix, rng};
use proptest::prelude::*;
use rand::Rng;
use studypop::matching::{full_match, MatchingError};

#[test]
fn flow_matches_partition_enumeration_on_small_instances() {
    let mut r = rng(17);
    for _ in 0..30 {
        let nt = r.gen_range(1..=3);
        let nc = r.gen_range(1..=3);
        let dm = random_matrix(&mut r, nt, nc, 0.2);
        for kt in 1..=3 {
            for kc in 1..=3 {
                let oracle = brute_force_full_match(&dm, kt, kc);
                match full_match(&dm, None, kt, kc) {
                    Ok(fm) => {
                        fm.stratification.validate().unwrap();
                        assert_eq!(Some(fm.stratification.objective(&dm)), oracle, "{nt}x{nc} caps {kt}:{kc}");
                        assert_eq!(fm.stratification.matched_units(), nt + nc);
                    }
                    Err(MatchingError::Infeasible { .. }) => assert_eq!(oracle, None),
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn objective_never_increases_with_looser_caps(seed in 0u64..10_000, nt in 1usize..6, nc in 1usize..6) {
        let mut r = rng(seed);
        let dm = random_matrix(&mut r, nt, nc, 0.0);
        let mut last = f64::INFINITY;
        for k in 1..=6 {
            if let Ok(fm) = full_match(&dm, None, k, k) {
                let obj = fm.stratification.objective(&dm);
                prop_assert!(obj <= last + 1e-9);
                last = obj;
            }
        }
        // With caps at least the arm sizes, every instance is feasible.
        prop_assert!(full_match(&dm, None, nt.max(1), nc.max(1)).is_ok());
    }
}
