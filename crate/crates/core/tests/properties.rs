mod common;

use proptest::prelude::*;

proptest! {
    #[test]
    fn tree_matches_linear_scan(input in common::tree_input()) {
        common::tree_matches_linear_scan(input)?;
    }

    #[test]
    fn empirical_weights_match_brute_force(input in common::record_sets()) {
        common::empirical_weights_match_brute_force(input)?;
    }

    #[test]
    fn grid_weights_match_brute_force(input in common::grid_input()) {
        common::grid_weights_match_brute_force(input)?;
    }

    #[test]
    fn sweep_matches_brute_force(input in common::sweep_input()) {
        common::sweep_matches_brute_force(input)?;
    }

    #[test]
    fn mc_weights_are_a_distribution(input in common::mc_input()) {
        common::mc_weights_are_a_distribution(input)?;
    }

    #[test]
    fn metric_scaling_keeps_the_argmin(input in common::scaling_input()) {
        common::metric_scaling_keeps_the_argmin(input)?;
    }

    #[test]
    fn power_of_two_scaling_keeps_ties(input in common::tie_input()) {
        common::power_of_two_scaling_keeps_ties(input)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn seeded_runs_repeat(input in common::seed_input()) {
        common::seeded_runs_repeat(input)?;
    }
}

#[test]
fn rate_runs_repeat_and_are_independent_of_the_run_count() {
    common::rate_runs_repeat().unwrap();
}
