use gridts::data::{generate_synthetic, zscore_apply, zscore_fit, SyntheticSpec};
use gridts::engine::{enumerate_rules, RuleBase};
use gridts::estimate::fit_consequents;
use gridts::metrics::mae;
use gridts::partition::{build_grid, GridSpec};

fn planted(universe: (f64, f64)) -> RuleBase {
    let parts = ["a", "b", "c"]
        .iter()
        .map(|f| build_grid(*f, universe, &GridSpec::default()).unwrap())
        .collect();
    let mut rb = enumerate_rules(parts).unwrap();
    let theta: Vec<f64> = (0..rb.n_rules() * 4).map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0).collect();
    rb = gridts::estimate::unpack_consequents(&theta, &rb).unwrap();
    rb
}

#[test]
fn skewed_inputs_follow_truncated_exponential_mean() {
    let truth = planted((0.0, 1.0));
    for skew in [0.5, 2.0, 5.0] {
        let data = generate_synthetic(
            &truth,
            &SyntheticSpec {
                n: 40_000,
                skew,
                seed: 3,
                ..SyntheticSpec::default()
            },
        )
        .unwrap();
        let want = 1.0 / skew - 1.0 / skew.exp_m1();
        for j in 0..3 {
            let col = data.feature_column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            // Standard error is below 0.0015 for every rate used here.
            assert!((mean - want).abs() < 0.006, "skew {skew}: {mean} vs {want}");
            assert!(col.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}

#[test]
fn noise_free_planted_model_is_recovered() {
    let universe = (2.0, 10.0);
    let truth = planted(universe);
    let data = generate_synthetic(
        &truth,
        &SyntheticSpec {
            n: 600,
            seed: 8,
            ..SyntheticSpec::default()
        },
    )
    .unwrap();
    let stats = zscore_fit(&data).unwrap();
    let z = zscore_apply(&data, &stats).unwrap();
    // The same grid, expressed in normalized coordinates.
    let parts = (0..3)
        .map(|j| {
            let lo = stats.normalize_value(j, universe.0);
            let hi = stats.normalize_value(j, universe.1);
            build_grid(["a", "b", "c"][j], (lo, hi), &GridSpec::default()).unwrap()
        })
        .collect();
    let rb = enumerate_rules(parts).unwrap();
    let fitted = fit_consequents(&rb, &z, 1e-9).unwrap();
    let pred: Vec<f64> = (0..z.n_rows()).map(|i| fitted.evaluate(&z.row(i))).collect();
    assert!(mae(&pred, z.target()).unwrap() < 1e-4);
}

#[test]
fn synthetic_is_deterministic() {
    let truth = planted((0.0, 1.0));
    let spec = SyntheticSpec {
        n: 50,
        skew: 2.0,
        noise_std: 0.1,
        seed: 4,
        ..SyntheticSpec::default()
    };
    assert_eq!(generate_synthetic(&truth, &spec).unwrap(), generate_synthetic(&truth, &spec).unwrap());
}
