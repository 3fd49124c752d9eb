mod common;

use proptest::prelude::*;
use tkobench_core::analysis::{pearson, spearman, top_k_overlap};
use tkobench_core::epidemic::{simulate, DiseaseSpec, Dynamics, KnockoutSpec, Model, State};
use tkobench_core::graphgen::{generate_scale_free, BaseNetwork, Graph};
use tkobench_core::knockout::{node_marginal, tko_field};
use tkobench_core::oracle::{brute_magnitude, brute_simulate};
use tkobench_core::skeleton::{build_skeleton, build_skeleton_from_draws, DrawTables};

fn is_sir_row(row: &str) -> bool {
    let mut phase = 0;
    for c in row.chars() {
        let p = match c {
            'S' => 0,
            'I' => 1,
            'R' => 2,
            'X' => 3,
            _ => return false,
        };
        if p < phase {
            return false;
        }
        phase = p;
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn knockout_preserves_prefix(
        n in 2usize..=10, horizon in 1usize..=15, mask in any::<u64>(), seed in any::<u64>(),
        sis in any::<bool>(), agent in 0usize..10, time in 0usize..15,
    ) {
        let (agent, time) = (agent % n, time % horizon);
        let sk = common::random_skeleton(n, horizon, mask, seed);
        let disease = DiseaseSpec::new(if sis { Model::SIS } else { Model::SIR }, 0.6);
        let base = simulate(&sk, disease, 0, None).unwrap();
        let ko = simulate(&sk, disease, 0, Some(KnockoutSpec { agent, time })).unwrap();
        for i in 0..n {
            for t in 0..time {
                prop_assert_eq!(base.state(i, t), ko.state(i, t));
            }
        }
    }

    #[test]
    fn sir_rows_follow_grammar(
        n in 2usize..=10, horizon in 1usize..=15, mask in any::<u64>(), seed in any::<u64>(),
        agent in 0usize..10, time in 0usize..15, initial in 0usize..10,
    ) {
        let sk = common::random_skeleton(n, horizon, mask, seed);
        let disease = DiseaseSpec::new(Model::SIR, 0.8);
        let ko = KnockoutSpec { agent: agent % n, time: time % horizon };
        let web = simulate(&sk, disease, initial % n, Some(ko)).unwrap();
        for i in 0..n {
            prop_assert!(is_sir_row(&web.row_string(i)), "{}", web.row_string(i));
        }
    }

    #[test]
    fn removing_a_passive_agent_is_delayed_removal(
        n in 2usize..=8, horizon in 2usize..=12, mask in any::<u64>(), seed in any::<u64>(),
        sis in any::<bool>(), agent in 0usize..8, time in 0usize..12,
    ) {
        let (agent, time) = (agent % n, time % horizon);
        let sk = common::random_skeleton(n, horizon, mask, seed);
        let disease = DiseaseSpec::new(if sis { Model::SIS } else { Model::SIR }, 0.7);
        let base = brute_simulate(&sk, disease, 0, None);
        prop_assume!(base[time][agent] != State::I);
        let knocked = brute_magnitude(&brute_simulate(&sk, disease, 0, Some(KnockoutSpec { agent, time })));
        match (time..horizon).find(|&t| base[t][agent] == State::I) {
            Some(next) => {
                let later = brute_simulate(&sk, disease, 0, Some(KnockoutSpec { agent, time: next }));
                prop_assert_eq!(knocked, brute_magnitude(&later));
            }
            None => prop_assert_eq!(knocked, brute_magnitude(&base)),
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms(xs in prop::collection::vec(-1e3f64..1e3, 3..40), seed in any::<u64>()) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * 0.5 + ((i as u64 ^ seed) % 17) as f64).collect();
        let Ok(r) = spearman(&xs, &ys) else { return Ok(()); };
        let fx: Vec<f64> = xs.iter().map(|x| (x / 100.0).exp()).collect();
        let fy: Vec<f64> = ys.iter().map(|y| y * 3.0 - 7.0).collect();
        prop_assert!((spearman(&fx, &fy).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn pearson_is_symmetric_and_bounded(xs in prop::collection::vec(-1e3f64..1e3, 2..40), ys in prop::collection::vec(-1e3f64..1e3, 2..40)) {
        let m = xs.len().min(ys.len());
        let (xs, ys) = (&xs[..m], &ys[..m]);
        if let Ok(r) = pearson(xs, ys) {
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert_eq!(r, pearson(ys, xs).unwrap());
        }
    }

    #[test]
    fn top_k_overlap_is_a_fraction(xs in prop::collection::vec(0f64..1.0, 10..40), ys in prop::collection::vec(0f64..1.0, 10..40)) {
        let m = xs.len().min(ys.len());
        let v = top_k_overlap(&xs[..m], &ys[..m], 10).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(top_k_overlap(&xs[..m], &xs[..m], 10).unwrap(), 1.0);
    }
}

#[test]
fn seed_knockout_scores_one() {
    for seed in 0..20 {
        let sk = build_skeleton(generate_scale_free(30, 2, seed).unwrap(), 30, seed);
        let disease = DiseaseSpec::new(Model::SIS, 0.3);
        for a in 0..30 {
            let web = simulate(&sk, disease, a, None).unwrap();
            let m = node_marginal(&sk, disease, a, (a, 0), &web).unwrap();
            assert_eq!(m.proportional, 1.0);
        }
    }
}

#[test]
fn negative_tko_witness() {
    let sk = common::negative_tko_fixture();
    let disease = DiseaseSpec::new(Model::SIR, 0.5);
    let base = simulate(&sk, disease, 0, None).unwrap();
    assert_eq!(base.magnitude(), 21);
    let m = node_marginal(&sk, disease, 0, (1, 1), &base).unwrap();
    assert!((m.proportional - (1.0 - 23.0 / 21.0)).abs() < 1e-15);
    let brute = brute_simulate(&sk, disease, 0, Some(KnockoutSpec { agent: 1, time: 1 }));
    assert_eq!(brute_magnitude(&brute), 23);
}

#[test]
fn path_fixture_hand_trace() {
    let sk = common::path_fixture(4);
    let disease = DiseaseSpec::new(Model::SIR, 1.0);
    let base = simulate(&sk, disease, 0, None).unwrap();
    assert_eq!(base.magnitude(), 9);
    let m = node_marginal(&sk, disease, 0, (1, 1), &base).unwrap();
    assert!((m.proportional - 5.0 / 9.0).abs() < 1e-12);
    assert!((m.delta_fraction - (0.75 - 4.0 / 9.0)).abs() < 1e-12);
}

fn permuted_skeleton(n: usize, horizon: usize, mask: u64, seed: u64, perm: &[usize]) -> (tkobench_core::Skeleton, tkobench_core::Skeleton) {
    let g = common::graph_from_mask(n, mask);
    let orig = build_skeleton(BaseNetwork::explicit(g.clone()), horizon, seed);
    let pg = Graph::from_edges(n, g.edges().iter().map(|&(u, v)| (perm[u as usize], perm[v as usize]))).unwrap();
    let mut tables = DrawTables::constant(&pg, horizon, 1.0, 1.0, 1.0);
    for t in 0..horizon {
        for &(u, v) in g.edges() {
            let (u, v) = (u as usize, v as usize);
            for (i, j) in [(u, v), (v, u)] {
                tables.set_activation(&pg, perm[i], perm[j], t, orig.activation_draw(i, j, t).unwrap());
                tables.set_transmission(&pg, perm[i], perm[j], t, orig.transmission_draw(i, j, t).unwrap());
            }
        }
        for i in 0..n {
            tables.set_recovery(&pg, perm[i], t, orig.recovery_draw(i, t).unwrap());
        }
    }
    let permuted = build_skeleton_from_draws(BaseNetwork::explicit(pg), horizon, tables).unwrap();
    (orig, permuted)
}

#[test]
fn tko_field_is_permutation_equivariant() {
    let (n, horizon) = (9, 14);
    let perm = [4, 7, 0, 8, 2, 6, 1, 3, 5];
    for seed in 0..10u64 {
        let mask = 0x9e37_79b9_7f4a_7c15u64.rotate_left(seed as u32);
        let (orig, permuted) = permuted_skeleton(n, horizon, mask, seed, &perm);
        for model in [Model::SIR, Model::SIS] {
            let disease = DiseaseSpec::new(model, 0.6);
            let a = tko_field(&orig, disease).unwrap();
            let b = tko_field(&permuted, disease).unwrap();
            for i in 0..n {
                for t in 0..horizon {
                    let (x, y) = (a.get(i, t), b.get(perm[i], t));
                    assert!((x.proportional - y.proportional).abs() < 1e-12);
                    assert!((x.delta_fraction - y.delta_fraction).abs() < 1e-12);
                }
                assert_eq!(a.initial_magnitudes[i], b.initial_magnitudes[perm[i]]);
            }
        }
    }
}

#[test]
fn tko_field_is_independent_of_pool_size() {
    let sk = build_skeleton(generate_scale_free(60, 3, 5).unwrap(), 40, 17);
    let disease = DiseaseSpec::new(Model::SIS, 0.2);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| tko_field(&sk, disease).unwrap())
    };
    let one = run(1);
    for threads in [2, 4, 8] {
        assert_eq!(one, run(threads));
    }
}

#[test]
fn skeleton_draws_are_uniform() {
    let sk = build_skeleton(generate_scale_free(100, 3, 1).unwrap(), 1000, 42);
    let g = sk.graph();
    let mut sum = 0.0;
    let mut count = 0usize;
    'outer: for t in 0..1000 {
        for i in 0..100 {
            sum += sk.recovery_draw(i, t).unwrap();
            for &j in g.neighbors(i) {
                sum += sk.activation_draw(i, j as usize, t).unwrap();
                sum += sk.transmission_draw(i, j as usize, t).unwrap();
                count += 2;
            }
            count += 1;
            if count >= 1_000_000 {
                break 'outer;
            }
        }
    }
    assert!(count >= 1_000_000);
    let mean = sum / count as f64;
    assert!((0.498..=0.502).contains(&mean), "{mean}");
}

#[test]
fn activation_frequency_matches_contact_probability() {
    // K4 is 3-regular, so each arc has contact probability 1/3.
    let g = Graph::from_edges(4, (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j)))).unwrap();
    let sk = build_skeleton(BaseNetwork::explicit(g), 20_000, 3);
    let mut hits = 0usize;
    for t in 0..20_000 {
        if sk.is_activated(0, 1, t).unwrap() {
            hits += 1;
        }
    }
    let f = hits as f64 / 20_000.0;
    assert!((0.32..=0.347).contains(&f), "{f}");
}

#[test]
fn mean_infectious_duration_is_fifteen() {
    let disease = DiseaseSpec::new(Model::SIR, 0.0);
    let mut durations = Vec::new();
    for seed in 0..60u64 {
        let sk = build_skeleton(generate_scale_free(200, 2, seed).unwrap(), 400, seed);
        let dynamics = Dynamics::new(&sk, disease).unwrap();
        for a in 0..200 {
            let traj = dynamics.run(a, None).unwrap();
            if traj.state(a, 399) == State::R {
                durations.push(traj.magnitude() as f64);
            }
        }
    }
    assert!(durations.len() >= 10_000);
    let mean = durations.iter().sum::<f64>() / durations.len() as f64;
    assert!((mean - 15.0).abs() <= 0.5, "{mean}");
}
