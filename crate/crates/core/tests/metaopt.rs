mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{is_monotone, quadratic_search, quadratic_spec};
use xmlc::metaopt::{propose, run_search, ParamDef, ParamSpec, SearchConfig, Transform};

#[test]
fn quadratic_optimum_found_in_most_runs() {
    let mut hits = 0;
    for seed in 0..100 {
        let state = quadratic_search(seed, 1);
        assert!(is_monotone(&state.best_trace), "seed {seed}");
        assert_eq!(state.best_trace.len(), 41);
        assert_eq!(state.history.len(), 1 + 40 * 8);
        if (state.best_params[0] - 3.0).abs() < 0.1 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits} of 100 runs reached the optimum");
}

#[test]
fn worker_count_does_not_change_the_search() {
    for seed in [0, 5, 9] {
        assert_eq!(quadratic_search(seed, 1), quadratic_search(seed, 4));
    }
}

#[test]
fn zero_iterations_return_the_initial_point() {
    let cfg = SearchConfig {
        outer_iterations: 0,
        ..SearchConfig::default()
    };
    let state = run_search(|p: &[f64]| Ok::<_, String>(p[0]), &quadratic_spec(), &cfg).unwrap();
    assert_eq!(state.best_params, vec![8.0]);
    assert_eq!(state.best_trace, vec![8.0]);
}

#[test]
fn failing_objective_never_becomes_best() {
    let cfg = SearchConfig {
        outer_iterations: 5,
        ..SearchConfig::default()
    };
    let state = run_search(
        |p: &[f64]| if p[0] < 8.0 { Err("bad region") } else { Ok(p[0]) },
        &quadratic_spec(),
        &cfg,
    )
    .unwrap();
    assert!(state.best_params[0] >= 8.0);
    assert!(state.history.iter().any(|(_, s)| *s == f64::NEG_INFINITY));
}

#[test]
fn proposal_mean_matches_center() {
    let sigma = 0.7;
    let spec = ParamSpec::new(vec![ParamDef::new("x", -100.0, 100.0, Transform::Linear, 2.0, sigma)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10_000;
    let mean = (0..n).map(|_| propose(&spec, &[2.0], &mut rng)[0]).sum::<f64>() / n as f64;
    assert!((mean - 2.0).abs() <= 3.0 * sigma / (n as f64).sqrt());
}

#[test]
fn transformed_proposals_stay_in_their_domain() {
    let spec = ParamSpec::new(vec![
        ParamDef::new("mu", 1e-3, 1e4, Transform::Log, 10.0, 2.0),
        ParamDef::new("lambda", 0.0, 1.0, Transform::Logit, 0.9, 3.0),
        ParamDef::new("fixed", 0.0, 1.0, Transform::Linear, 0.25, 0.0).frozen(),
    ])
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..2000 {
        let p = propose(&spec, &[10.0, 0.9, 0.25], &mut rng);
        assert!(p[0] > 0.0 && p[0] <= 1e4);
        assert!((0.0..=1.0).contains(&p[1]));
        assert_eq!(p[2], 0.25);
    }
}

#[test]
fn parameter_files_round_trip() {
    let spec = ParamSpec::new(vec![
        ParamDef::new("jm_lambda", 0.5, 0.9999, Transform::Logit, 0.98, 0.5),
        ParamDef::new("prior_scale", 0.0, 2.0, Transform::Linear, 1.0, 0.2).frozen(),
    ])
    .unwrap();
    let text = spec.to_text();
    assert_eq!(ParamSpec::parse(&text, "mem").unwrap(), spec);
    assert!(ParamSpec::parse("x 0 1 linear 2 0.1 false\n", "mem").is_err());
}
