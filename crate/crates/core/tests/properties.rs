use approx::assert_relative_eq;
use proptest::prelude::*;

use phylocons::divergences::{hellinger_sq, kl, leaf_distribution};
use phylocons::experiments::{parse_results_csv, results_csv, ResultRow};
use phylocons::io::{
    decode_event_log, encode_event_log, read_matrix, to_newick, tree_from_json, tree_to_json, unrooted_from_newick,
    write_atomic, write_matrix,
};
use phylocons::likelihood::{all_patterns, site_likelihood, RootedView};
use phylocons::mutation::{extend_ranked_sites, simulate_sites, MutationModel};
use phylocons::priors::Prior;
use phylocons::seed;
use phylocons::stats;
use phylocons::trees::{
    canonical_topology, extend_kingman, extend_uniform, restrict_uniform, CanonicalMode, LeafChoice, RankedTree, Tree,
};

fn prior_strategy() -> impl Strategy<Value = Prior> {
    prop_oneof![
        (2usize..9).prop_map(|n| Prior::kingman(n).unwrap()),
        (4usize..9, 0.2f64..4.0).prop_map(|(n, l)| Prior::uniform(n, l).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn restrict_undoes_extend(prior in prior_strategy(), s in any::<u64>()) {
        let mut rng = seed::rng_from(&[s]);
        match prior.sample(&mut rng) {
            Tree::Ranked(t) => {
                let ext = extend_kingman(&t, &mut rng);
                prop_assert_eq!(ext.restrict(t.n_leaves()).unwrap(), t);
            }
            Tree::Unrooted(t) => {
                let ext = extend_uniform(&t, 1.0, &mut rng).unwrap();
                prop_assert_eq!(restrict_uniform(&ext, LeafChoice::Newest, &mut rng).unwrap(), t);
            }
        }
    }

    #[test]
    fn sidecar_round_trip_is_exact(prior in prior_strategy(), s in any::<u64>()) {
        let t = prior.sample(&mut seed::rng_from(&[s]));
        prop_assert_eq!(tree_from_json(&tree_to_json(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn newick_preserves_topology(n in 4usize..9, s in any::<u64>()) {
        let t = Prior::uniform(n, 1.0).unwrap().sample(&mut seed::rng_from(&[s]));
        let back = Tree::Unrooted(unrooted_from_newick(&to_newick(&t), Some(t.labels())).unwrap());
        prop_assert_eq!(
            canonical_topology(&back, CanonicalMode::Unrooted).unwrap(),
            canonical_topology(&t, CanonicalMode::Unrooted).unwrap()
        );
    }

    #[test]
    fn transition_rows_are_distributions(mu in 0.01f64..5.0, t in 0.0f64..20.0) {
        for model in [MutationModel::binary_symmetric(mu).unwrap(), MutationModel::jukes_cantor(mu).unwrap()] {
            let p = model.transition_matrix(t).unwrap();
            for row in p.row_iter() {
                assert_relative_eq!(row.sum(), 1.0, epsilon = 1e-12);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
        // Binary closed form: P(change) = (1 - e^{-2 mu t}) / 2.
        let p = MutationModel::binary_symmetric(mu).unwrap().transition_matrix(t).unwrap();
        assert_relative_eq!(p[(0, 1)], 0.5 * (1.0 - (-2.0 * mu * t).exp()), epsilon = 1e-13);
    }

    #[test]
    fn pattern_tables_sum_to_one(prior in prior_strategy(), s in any::<u64>(), mu in 0.05f64..2.0) {
        prop_assume!(prior.n() <= 6);
        let t = prior.sample(&mut seed::rng_from(&[s]));
        let model = MutationModel::binary_symmetric(mu).unwrap();
        let view = RootedView::from_tree(&t);
        let total: f64 = all_patterns(t.n_leaves(), 2).map(|p| site_likelihood(&view, &model, &p).unwrap()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn divergences_are_ordered(n in 2usize..5, a in any::<u64>(), b in any::<u64>(), mu in 0.05f64..1.0) {
        let prior = Prior::kingman(n).unwrap();
        let model = MutationModel::binary_symmetric(mu).unwrap();
        let p = leaf_distribution(&prior.sample(&mut seed::rng_from(&[a])), &model).unwrap();
        let q = leaf_distribution(&prior.sample(&mut seed::rng_from(&[b])), &model).unwrap();
        let k = kl(&p, &q).unwrap();
        let h = hellinger_sq(&p, &q).unwrap();
        prop_assert!(k >= 0.0 && h >= 0.0 && h <= k + 1e-15);
    }

    #[test]
    fn simulated_data_is_prefix_coherent(prior in prior_strategy(), s in any::<u64>(), k in 1usize..60, extra in 1usize..40) {
        let t = prior.sample(&mut seed::rng_from(&[s]));
        let model = MutationModel::binary_symmetric(0.3).unwrap();
        let small = simulate_sites(&t, &model, k, s).unwrap();
        let large = simulate_sites(&t, &model, k + extra, s).unwrap();
        let cut = large.prefix(k).unwrap();
        for leaf in 0..t.n_leaves() {
            prop_assert_eq!(small.row(leaf), cut.row(leaf));
        }
    }

    #[test]
    fn event_log_and_matrix_round_trip(prior in prior_strategy(), s in any::<u64>(), k in 1usize..50) {
        let t = prior.sample(&mut seed::rng_from(&[s]));
        let model = MutationModel::jukes_cantor(0.4).unwrap();
        let data = simulate_sites(&t, &model, k, s).unwrap();
        let log = data.event_log().unwrap();
        prop_assert_eq!(&decode_event_log(&encode_event_log(log)).unwrap(), log);
        let text = write_matrix(&data, model.alleles()).unwrap();
        let (back, names) = read_matrix(&text, None).unwrap();
        prop_assert_eq!(names.as_slice(), model.alleles());
        for leaf in 0..t.n_leaves() {
            prop_assert_eq!(back.row(leaf), data.row(leaf));
        }
    }

    #[test]
    fn results_csv_round_trips(support in 0.0f64..=1.0, ess in 0.0f64..1e6, mu in 1e-3f64..10.0, seed_value in any::<u64>()) {
        let row = ResultRow {
            prior: "uniform".into(),
            n: 6,
            mu,
            k: 100,
            replicate: 3,
            posterior_support: support,
            acceptance_rate: 0.25,
            ess,
            seed: seed_value,
            wall_time_s: 1.5,
            error: None,
        };
        prop_assert_eq!(parse_results_csv(&results_csv(std::slice::from_ref(&row))).unwrap(), vec![row]);
    }
}

#[test]
fn new_leaf_allele_follows_transition_probability() {
    // Two-leaf base tree; split leaf 0 with added time t. The new leaf and
    // leaf 0 evolve independently for t from the old leaf-0 state, so they
    // differ with probability 2 p (1 - p), p = (1 - e^{-2 mu t}) / 2.
    let (mu, t, k) = (0.7, 0.4, 10_000);
    let model = MutationModel::binary_symmetric(mu).unwrap();
    let base = RankedTree::new(RankedTree::integer_labels(2), vec![(0, 1)], vec![0.8]).unwrap();
    let data = simulate_sites(&Tree::Ranked(base.clone()), &model, k, 41).unwrap();
    let (_, ext) = extend_ranked_sites(&data, &base, 0, t, &model, 42).unwrap();
    let differ = (0..k).filter(|&s| ext.allele(0, s) != ext.allele(2, s)).count() as u64;
    let p = 0.5 * (1.0 - (-2.0 * mu * t).exp());
    let q = 2.0 * p * (1.0 - p);
    let test = stats::chi_square(&[differ, k as u64 - differ], &[q, 1.0 - q]).unwrap();
    assert!(test.p_value > 0.001, "{} of {k} differ, expected fraction {q}", differ);
}

#[test]
fn atomic_write_replaces_contents() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.txt");
    write_atomic(&path, b"first").unwrap();
    write_atomic(&path, b"second").unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"second");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn ess_of_independent_draws_is_near_length() {
    let mut rng = seed::rng_from(&[5]);
    let xs: Vec<f64> = (0..5000).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
    let e = stats::ess(&xs);
    assert!(e > 3500.0 && e <= 5000.0 * 1.2, "{e}");
}
