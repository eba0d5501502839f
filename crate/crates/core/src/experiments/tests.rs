use super::*;

fn tiny(prior: PriorFamily) -> GridSpec {
    GridSpec {
        prior,
        n_values: vec![4, 5],
        mu_values: vec![0.2],
        k_values: vec![1, 10, 50],
        replicates: 2,
        master_seed: 99,
        chain: ChainTemplate { iterations: 2000, burn_in: 500, thin: 10, ..ChainTemplate::default() },
        n_start: 4,
    }
}

fn row(k: usize, replicate: usize, support: f64) -> ResultRow {
    ResultRow {
        prior: "kingman".into(),
        n: 4,
        mu: 0.1,
        k,
        replicate,
        posterior_support: support,
        acceptance_rate: 0.3,
        ess: 100.0,
        seed: 1,
        wall_time_s: 0.5,
        error: None,
    }
}

#[test]
fn desk_grid_has_400_cells() {
    assert_eq!(GridSpec::desk(PriorFamily::Kingman, 1).cell_count(), 400);
}

#[test]
fn grid_is_deterministic_and_ordered() {
    let spec = tiny(PriorFamily::Kingman);
    let a = run_grid(&spec, 2).unwrap();
    let b = run_grid(&spec, 1).unwrap();
    let strip = |rows: &[ResultRow]| {
        rows.iter().map(|r| (r.n, r.k, r.replicate, r.posterior_support.to_bits(), r.seed)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.len(), spec.cell_count());
    assert!(a.iter().all(|r| r.error.is_none() && (0.0..=1.0).contains(&r.posterior_support)));
}

#[test]
fn data_prefixes_and_coupling() {
    let spec = tiny(PriorFamily::Uniform { lambda: 1.0 });
    let trees = true_trees(&spec).unwrap();
    let model = MutationModel::binary_symmetric(0.2).unwrap();
    let data = coupled_data(&spec, &trees, &model, 0.2, 1).unwrap();
    assert_eq!(data.len(), 2);
    let small = data[1].prefix(10).unwrap();
    for leaf in 0..5 {
        assert_eq!(small.row(leaf), &data[1].row(leaf)[..10]);
    }
    let back = crate::mutation::project_sites(&data[1], &trees[1], &trees[0], &model).unwrap();
    assert_eq!(back, data[0]);
}

#[test]
fn aggregate_and_crossings() {
    let rows = vec![row(1, 0, 0.1), row(1, 1, 0.3), row(10, 0, 0.7), row(10, 1, 0.9)];
    let curves = aggregate(&rows).unwrap();
    assert_eq!(curves.len(), 1);
    assert!((curves[0].points[0].mean - 0.2).abs() < 1e-15);
    let c = threshold_crossing(&curves[0], 0.5);
    assert_eq!((c.k_below, c.k_above), (Some(1), Some(10)));

    let single = aggregate(&[row(5, 0, 0.42)]).unwrap();
    assert_eq!(single[0].points[0].mean, 0.42);

    let ones = aggregate(&[row(1, 0, 1.0), row(10, 0, 1.0)]).unwrap();
    let c = threshold_crossing(&ones[0], 0.5);
    assert_eq!((c.k_below, c.k_above), (None, Some(1)));

    let flat = aggregate(&[row(1, 0, 0.1), row(10, 0, 0.1)]).unwrap();
    assert!(!threshold_crossing(&flat[0], 0.5).crossed());
    assert!(aggregate(&[]).is_err());
}

#[test]
fn results_round_trip() {
    let mut rows = vec![row(1, 0, 0.25), row(10, 0, 1.0 / 3.0)];
    rows[1].error = Some("boom".into());
    rows[1].posterior_support = f64::NAN;
    let s = results_csv(&rows);
    assert!(s.starts_with("prior,n,mu,k,replicate,posterior_support,acceptance_rate,ess,seed,wall_time_s\n"));
    let back = parse_results_csv(&s).unwrap();
    assert_eq!(back[0], rows[0]);
    assert!(back[1].error.is_some());
    assert!(parse_results_csv("a,b\n").is_err());
}

#[test]
fn invalid_specs() {
    let mut s = tiny(PriorFamily::Kingman);
    s.k_values = vec![10, 1];
    assert!(s.validate().is_err());
    let mut s = tiny(PriorFamily::Kingman);
    s.n_values = vec![3];
    assert!(s.validate().is_err());
    let mut s = tiny(PriorFamily::Kingman);
    s.replicates = 0;
    assert!(s.validate().is_err());
}

#[test]
fn spec_json_defaults() {
    let s: GridSpec = serde_json::from_str(
        r#"{"prior":{"kind":"uniform"},"n_values":[4],"mu_values":[0.1],"k_values":[1,10],"replicates":1,"master_seed":3}"#,
    )
    .unwrap();
    assert_eq!(s.prior, PriorFamily::Uniform { lambda: 1.0 });
    assert_eq!(s.chain, ChainTemplate::default());
    assert_eq!(s.n_start, 4);
}

#[test]
fn shipped_desk_specs_match() {
    let k: GridSpec = serde_json::from_str(include_str!("../../../../schemas/desk_kingman.json")).unwrap();
    assert_eq!(k, GridSpec::desk(PriorFamily::Kingman, 20_261_016));
    let u: GridSpec = serde_json::from_str(include_str!("../../../../schemas/desk_uniform.json")).unwrap();
    assert_eq!(u, GridSpec::desk(PriorFamily::Uniform { lambda: 1.0 }, 20_261_016));
    assert!(serde_json::from_str::<GridSpec>(r#"{"prior":{"kind":"kingman"},"n_values":[4],"mu_values":[0.1],"k_values":[1],"replicates":1,"master_seed":1,"typo":2}"#).is_err());
}
