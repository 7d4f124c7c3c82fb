use gridts::baseline::{clusters_to_rules, gk_cluster, grabs_merge, merge_sweep, GkConfig, SweepSpec};
use gridts::data::{generate_synthetic, split, zscore_apply, zscore_fit, Dataset, SplitSpec, SyntheticSpec};
use gridts::engine::{enumerate_rules, RuleBase};
use gridts::partition::{build_grid, FuzzyPartition, GaussianMF, GridSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn standardized_blob(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..4.0), rng.random::<f64>().powi(2)]).collect();
    let y = rows.iter().map(|r| r[0] * 0.5 - r[1] + rng.random_range(-0.1..0.1)).collect();
    let data = Dataset::from_rows(vec!["a".into(), "b".into()], "y", &rows, y).unwrap();
    zscore_apply(&data, &zscore_fit(&data).unwrap()).unwrap()
}

fn skewed_problem(seed: u64) -> (Dataset, Dataset) {
    let parts = ["a", "b", "c"]
        .iter()
        .map(|f| build_grid(*f, (0.0, 1.0), &GridSpec::default()).unwrap())
        .collect();
    let rb = enumerate_rules(parts).unwrap();
    let theta: Vec<f64> = (0..rb.n_rules() * 4).map(|i| ((i * 7 % 5) as f64 - 2.0) / 2.0).collect();
    let rb = gridts::estimate::unpack_consequents(&theta, &rb).unwrap();
    let data = generate_synthetic(
        &rb,
        &SyntheticSpec {
            n: 300,
            skew: 3.0,
            noise_std: 0.05,
            seed,
            ..SyntheticSpec::default()
        },
    )
    .unwrap();
    let (train, val) = split(&data, &SplitSpec { train_fraction: 0.75, seed }).unwrap();
    let stats = zscore_fit(&train).unwrap();
    (zscore_apply(&train, &stats).unwrap(), zscore_apply(&val, &stats).unwrap())
}

#[test]
fn gk_objective_and_rows_on_skewed_data() {
    let (train, _) = skewed_problem(1);
    let res = gk_cluster(
        &train.joined(),
        &GkConfig {
            n_clusters: 8,
            seed: 2,
            ..GkConfig::default()
        },
    )
    .unwrap();
    for h in &res.history {
        assert!(h.max_row_deviation <= 1e-10);
    }
    for w in res.history.windows(2) {
        assert!(w[1].objective <= w[0].objective + 1e-9 * w[0].objective.abs().max(1.0));
    }
    for i in 0..res.n_clusters() {
        assert!((res.scaled_covariance(i).determinant() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn single_cluster_projects_to_unit_moments() {
    let data = standardized_blob(400, 3);
    // Two identical clusters from a symmetric start behave like a single one.
    let res = gk_cluster(
        &data.joined(),
        &GkConfig {
            n_clusters: 2,
            fuzzifier: 40.0,
            seed: 1,
            ..GkConfig::default()
        },
    )
    .unwrap();
    let rb = clusters_to_rules(&res, &data).unwrap();
    assert_eq!(rb.n_rules(), 2);
    for p in rb.partitions() {
        let s = &p.sets()[0];
        assert!(s.mu.abs() < 0.1, "{}", s.mu);
        assert!((s.sigma - 1.0).abs() < 0.1, "{}", s.sigma);
    }
}

#[test]
fn cluster_rules_are_one_per_cluster() {
    let (train, _) = skewed_problem(4);
    let res = gk_cluster(
        &train.joined(),
        &GkConfig {
            n_clusters: 18,
            seed: 4,
            ..GkConfig::default()
        },
    )
    .unwrap();
    let rb = clusters_to_rules(&res, &train).unwrap();
    assert_eq!(rb.n_rules(), 18);
    assert!(!rb.is_grid());
    for (i, r) in rb.rules().iter().enumerate() {
        assert_eq!(r.antecedent, vec![i; 3]);
    }
    assert_eq!(gridts::metrics::parameter_count(&rb), 180);
}

fn cluster_base(train: &Dataset, seed: u64) -> RuleBase {
    let res = gk_cluster(
        &train.joined(),
        &GkConfig {
            n_clusters: 12,
            seed,
            ..GkConfig::default()
        },
    )
    .unwrap();
    clusters_to_rules(&res, train).unwrap()
}

#[test]
fn merge_is_idempotent() {
    let (train, _) = skewed_problem(5);
    let rb = cluster_base(&train, 5);
    for t in [0.2, 0.5, 0.65, 0.9] {
        let once = grabs_merge(&rb, t, train.inputs()).unwrap();
        let twice = grabs_merge(&once.rule_base, t, train.inputs()).unwrap();
        assert_eq!(twice.dropped_sets, 0);
        assert_eq!(twice.collapsed_rules, 0);
        assert_eq!(twice.rule_base, once.rule_base);
    }
}

#[test]
fn merge_threshold_boundaries() {
    let (train, _) = skewed_problem(6);
    let rb = cluster_base(&train, 6);
    let none = grabs_merge(&rb, 1.0, train.inputs()).unwrap();
    assert_eq!(none.dropped_sets, 0);
    assert_eq!(none.rule_base, rb);

    let all = grabs_merge(&rb, 1e-12, train.inputs()).unwrap();
    let expected: usize = rb.partitions().iter().map(|p| p.len() - 1).sum();
    assert_eq!(all.dropped_sets, expected);
    assert_eq!(all.rule_base.n_rules(), 1);
    assert!(all.rule_base.partitions().iter().all(|p| p.len() == 1));
}

#[test]
fn duplicate_sets_always_merge() {
    let sets = vec![GaussianMF::new(0.0, 1.0, "c1").unwrap(), GaussianMF::new(0.0, 1.0, "c2").unwrap()];
    let far = vec![GaussianMF::new(-3.0, 0.2, "c1").unwrap(), GaussianMF::new(3.0, 0.2, "c2").unwrap()];
    let parts = vec![
        FuzzyPartition::from_clusters("a", (-4.0, 4.0), sets).unwrap(),
        FuzzyPartition::from_clusters("b", (-4.0, 4.0), far).unwrap(),
    ];
    let rb = RuleBase::new(
        parts,
        vec![
            gridts::Rule::with_zero_consequent(vec![0, 0]),
            gridts::Rule::with_zero_consequent(vec![1, 1]),
        ],
    )
    .unwrap();
    let inputs = DMatrix::from_row_slice(2, 2, &[0.0, -3.0, 0.5, 3.0]);
    let out = grabs_merge(&rb, 1.0, &inputs).unwrap();
    assert_eq!(out.dropped_sets, 1);
    assert_eq!(out.rule_base.partitions()[0].len(), 1);
    assert_eq!(out.rule_base.n_rules(), 2);

    // Make the second feature collide too: identical far sets.
    let same = vec![GaussianMF::new(1.0, 0.5, "c1").unwrap(), GaussianMF::new(1.0, 0.5, "c2").unwrap()];
    let parts = vec![rb.partitions()[0].clone(), FuzzyPartition::from_clusters("b", (-4.0, 4.0), same).unwrap()];
    let rb2 = RuleBase::new(parts, rb.rules().to_vec()).unwrap();
    let out = grabs_merge(&rb2, 0.99, &inputs).unwrap();
    assert_eq!(out.dropped_sets, 2);
    assert_eq!(out.collapsed_rules, 1);
    assert_eq!(out.rule_base.n_rules(), 1);
}

#[test]
fn grid_merge_keeps_sets_ordered() {
    let parts = vec![build_grid("a", (0.0, 1.0), &GridSpec { n_sets: 5, overlap: 0.1, labels: None }).unwrap()];
    let rb = enumerate_rules(parts).unwrap();
    let inputs = DMatrix::from_fn(50, 1, |i, _| i as f64 / 49.0);
    let out = grabs_merge(&rb, 0.005, &inputs).unwrap();
    out.rule_base.validate().unwrap();
    assert!(out.dropped_sets >= 1);
}

#[test]
fn sweep_dropped_sets_non_increasing() {
    let (train, val) = skewed_problem(7);
    let spec = SweepSpec {
        start: 0.1,
        end: 0.9,
        step: 0.2,
        repeats: 2,
    };
    let cfg = GkConfig {
        n_clusters: 10,
        seed: 7,
        ..GkConfig::default()
    };
    let rows = merge_sweep(&train, &val, &cfg, &spec, 1.0).unwrap();
    assert_eq!(rows.len(), 5 * 2);
    assert_eq!(rows, merge_sweep(&train, &val, &cfg, &spec, 1.0).unwrap());
    for repeat in 0..2 {
        let dropped: Vec<usize> = rows
            .iter()
            .filter(|r| r.repeat == repeat)
            .map(|r| r.dropped_sets.unwrap())
            .collect();
        assert!(dropped.windows(2).all(|w| w[1] <= w[0]), "{dropped:?}");
    }
    assert!(rows.windows(2).all(|w| w[0].threshold <= w[1].threshold));
}
