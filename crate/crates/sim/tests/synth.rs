use std::collections::BTreeMap;

use localscore_core::market::{Priority, TieBreakerId};
use localscore_core::{group_types, run_da, verify_stability};
use localscore_sim::dist::ks_statistic;
use localscore_sim::synth::MAX_LIST;
use localscore_sim::{generate, missing_strata, Error, SynthConfig, SynthTruth, TieBreakerDist};

#[test]
fn empty_market() {
    let (m, truth) = generate(&SynthConfig::mixed(0, 5, 0.5, 1)).unwrap();
    assert!(m.applicants.is_empty());
    assert_eq!(m.schools.len(), 5);
    assert!(truth.ability.is_empty() && truth.unobserved.is_empty());
}

#[test]
fn same_seed_same_market() {
    let config = SynthConfig::mixed(800, 20, 0.4, 9);
    let (a, ta) = generate(&config).unwrap();
    let (b, tb) = generate(&config).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&ta).unwrap(), serde_json::to_string(&tb).unwrap());
    let (c, _) = generate(&SynthConfig { seed: 10, ..config }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn same_market_on_one_thread() {
    let config = SynthConfig::mixed(500, 12, 0.5, 4);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let single = pool.install(|| generate(&config).unwrap());
    assert_eq!(single, generate(&config).unwrap());
}

#[test]
fn lists_respect_cap_and_market_is_valid() {
    let mut config = SynthConfig::mixed(2000, 40, 0.4, 2);
    config.ineligible_rate = 0.05;
    let (m, _) = generate(&config).unwrap();
    assert!(m.validate().is_clean());
    assert!(m.applicants.iter().all(|a| (1..=MAX_LIST).contains(&a.kind.preferences.len())));
    let out = run_da(&m).unwrap();
    assert!(verify_stability(&m, &out).unwrap().is_empty());
    assert!(m.applicants.iter().all(|a| a.outcomes.contains_key("Y") && a.enrollment.contains_key("C_A")));
}

#[test]
fn type_pool_limits_distinct_types() {
    let mut config = SynthConfig::mixed(3000, 10, 0.5, 5);
    config.type_pool = Some(25);
    let (m, _) = generate(&config).unwrap();
    assert!(group_types(&m).len() <= 25);
}

#[test]
fn tie_breakers_follow_their_distributions() {
    let mut config = SynthConfig::mixed(20_000, 6, 0.0, 6);
    config.max_list = 3;
    // two screened schools on their own tie-breakers
    config.schools[0].tie_breaker = 2;
    config.schools[1].tie_breaker = 3;
    config.screened = [
        (TieBreakerId(2), localscore_sim::synth::ability_dists()),
        (TieBreakerId(3), vec![TieBreakerDist::Beta { a: 2.0, b: 5.0 }]),
    ]
    .into();
    let (m, truth) = generate(&config).unwrap();
    let mut samples: BTreeMap<(TieBreakerId, usize), Vec<f64>> = BTreeMap::new();
    for a in &m.applicants {
        let class = truth.ability_class[&a.id];
        for (&v, &x) in &a.tie_breakers {
            let class = if v == TieBreakerId(2) { class } else { 0 };
            samples.entry((v, class)).or_default().push(x);
        }
    }
    assert_eq!(samples.len(), 1 + 3 + 1);
    for ((v, class), xs) in &samples {
        let dist = match config.screened.get(v) {
            Some(list) => list[(*class).min(list.len() - 1)].clone(),
            None => TieBreakerDist::Uniform,
        };
        let d = ks_statistic(xs, |x| dist.cdf(x));
        let bound = 1.36 / (xs.len() as f64).sqrt();
        assert!(d < bound, "tb {v} class {class}: {d} >= {bound} (n = {})", xs.len());
    }
}

#[test]
fn rich_support_fills_every_stratum() {
    let mut config = SynthConfig::mixed(400, 30, 0.5, 8);
    config.priority_weights = vec![0.1, 0.3, 0.6];
    let (plain, _) = generate(&config).unwrap();
    assert!(!missing_strata(&plain).is_empty());
    config.rich_support = true;
    let (m, _) = generate(&config).unwrap();
    assert!(missing_strata(&m).is_empty());
    assert!(m.validate().is_clean());
    for a in &m.applicants {
        assert!(a.kind.preferences.len() <= config.max_list);
        for s in &a.kind.preferences {
            assert!(matches!(a.kind.priority_at(*s), Some(Priority::Level(_))));
        }
    }
}

#[test]
fn rich_support_needs_enough_applicants() {
    let mut config = SynthConfig::mixed(10, 8, 0.5, 1);
    config.rich_support = true;
    assert!(matches!(generate(&config), Err(Error::Config(_))));
}

#[test]
fn bad_configs_are_rejected() {
    let base = SynthConfig::mixed(10, 8, 0.5, 1);
    let mut c = base.clone();
    c.max_list = 13;
    assert!(generate(&c).is_err());
    let mut c = base.clone();
    c.min_list = 5;
    c.max_list = 4;
    assert!(generate(&c).is_err());
    let mut c = base.clone();
    c.screened.insert(TieBreakerId(1), vec![TieBreakerDist::Uniform]);
    assert!(generate(&c).is_err());
    let mut c = base;
    c.ability_cuts = vec![0.5, 0.0];
    assert!(generate(&c).is_err());
}

#[test]
fn truth_sidecar_round_trips() {
    let (_, truth) = generate(&SynthConfig::mixed(300, 8, 0.5, 3)).unwrap();
    let json = serde_json::to_string_pretty(&truth).unwrap();
    let back: SynthTruth = serde_json::from_str(&json).unwrap();
    assert_eq!(back, truth);
    assert_eq!(back.beta, 0.25);
}

#[test]
fn config_round_trips() {
    let config = SynthConfig::mixed(300, 8, 0.5, 3);
    let json = serde_json::to_string(&config).unwrap();
    assert_eq!(serde_json::from_str::<SynthConfig>(&json).unwrap(), config);
}
