mod common;

use proptest::prelude::*;
use tkobench_core::epidemic::{DiseaseSpec, Dynamics, Model, State};
use tkobench_core::knockout::{run_knockouts, tko_field};
use tkobench_core::oracle::{brute_knockout_magnitudes, brute_run_marginals, brute_simulate, brute_tko_field};

fn model(sis: bool) -> Model {
    if sis {
        Model::SIS
    } else {
        Model::SIR
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fast_path_matches_brute_force(
        n in 2usize..=8,
        horizon in 1usize..=12,
        mask in any::<u64>(),
        seed in any::<u64>(),
        sis in any::<bool>(),
        high_beta in any::<bool>(),
    ) {
        let sk = common::random_skeleton(n, horizon, mask, seed);
        let disease = DiseaseSpec::new(model(sis), if high_beta { 0.7 } else { 0.3 });
        let dynamics = Dynamics::new(&sk, disease).unwrap();
        for initial in 0..n {
            let traj = dynamics.run(initial, None).unwrap();
            let states = brute_simulate(&sk, disease, initial, None);
            for (t, row) in states.iter().enumerate() {
                for (i, &s) in row.iter().enumerate() {
                    prop_assert_eq!(traj.state(i, t), s);
                }
            }
            let run = run_knockouts(&dynamics, initial).unwrap();
            prop_assert_eq!(&run.knockout_magnitude, &brute_knockout_magnitudes(&sk, disease, initial));
            prop_assert_eq!(&run.marginals, &brute_run_marginals(&sk, disease, initial));
        }
        let field = tko_field(&sk, disease).unwrap();
        prop_assert_eq!(field.scores, brute_tko_field(&sk, disease));
    }

    #[test]
    fn knockout_runs_match_brute_force(
        n in 2usize..=8,
        horizon in 1usize..=12,
        mask in any::<u64>(),
        seed in any::<u64>(),
        sis in any::<bool>(),
        agent in 0usize..8,
        time in 0usize..12,
    ) {
        let (agent, time) = (agent % n, time % horizon);
        let sk = common::random_skeleton(n, horizon, mask, seed);
        let disease = DiseaseSpec::new(model(sis), 0.5);
        let ko = tkobench_core::KnockoutSpec { agent, time };
        let traj = Dynamics::new(&sk, disease).unwrap().run(0, Some(ko)).unwrap();
        let states = brute_simulate(&sk, disease, 0, Some(ko));
        for (t, row) in states.iter().enumerate() {
            for (i, &s) in row.iter().enumerate() {
                prop_assert_eq!(traj.state(i, t), s);
                if i == agent && t >= time {
                    prop_assert_eq!(s, State::Removed);
                }
            }
        }
    }
}
