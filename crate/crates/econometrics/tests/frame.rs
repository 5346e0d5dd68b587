use localscore_core::market::{Applicant, ApplicantType, Capacity, Market, Priority, School, SchoolId, TieBreakerId};
use localscore_core::{estimate_local_score, run_da, BandwidthSpec};
use localscore_econometrics::{estimate, rv_controls, EstimationFrame, FrameSpec};
use localscore_sim::{generate, SynthConfig};

fn kind(prefs: &[u32]) -> ApplicantType {
    ApplicantType {
        preferences: prefs.iter().map(|&s| SchoolId(s)).collect(),
        priorities: prefs.iter().map(|&s| (SchoolId(s), Priority::Level(1))).collect(),
    }
}

/// School 2 screens on tie-breaker 2 with five seats; school 1 is an
/// undersubscribed lottery school.
fn screened_market() -> Market<f64> {
    let mut m = Market::new(1, 1);
    m.schools.push(School::new(1, Capacity::Seats(100), 1).with_tag("ungraded"));
    m.schools.push(School::new(2, Capacity::Seats(5), 2).with_tag("GradeA"));
    let mut values: Vec<f64> = (0..12).map(|k| 0.40 + 0.02 * k as f64).collect();
    values.push(0.49);
    for (i, r) in values.into_iter().enumerate() {
        let mut a = Applicant::new(i as u32 + 1, kind(&[2, 1]));
        a.tie_breakers.insert(TieBreakerId(1), 0.5);
        a.tie_breakers.insert(TieBreakerId(2), r);
        m.applicants.push(a);
    }
    let mut a = Applicant::new(14, kind(&[1]));
    a.tie_breakers.insert(TieBreakerId(1), 0.3);
    m.applicants.push(a);
    m
}

#[test]
fn running_variable_columns() {
    let m = screened_market();
    let out = run_da(&m).unwrap();
    let tau = out.cutoffs[&SchoolId(2)].tau;
    assert_eq!(tau, m.applicants[4].tie_breakers[&TieBreakerId(2)]);
    let table = estimate_local_score(&m, &out, &BandwidthSpec::Uniform(0.1)).unwrap();
    assert_eq!(table.delta(SchoolId(2)), 0.1);
    let rv = rv_controls(&m, &out, &table).unwrap();
    assert_eq!(rv.names, vec!["a_2", "k_2", "slope_2", "kink_2"]);
    let row = |i: usize| -> Vec<f64> { rv.columns.iter().map(|c| c[i]).collect() };
    // not ranking the school
    assert_eq!(row(13), vec![0.0; 4]);
    // at the cutoff
    assert_eq!(row(4), vec![1.0, 1.0, 0.0, 0.0]);
    // just above it
    let r = row(12);
    assert_eq!(&r[..2], &[1.0, 1.0]);
    assert!((r[2] - 0.01).abs() < 1e-12 && (r[3] - 0.01).abs() < 1e-12);
    // just below: slope only
    let r = row(3);
    assert!((r[2] + 0.02).abs() < 1e-12 && r[3] == 0.0);
    // outside the window
    assert_eq!(row(11), vec![1.0, 0.0, 0.0, 0.0]);
}

fn synth(seed: u64) -> (Market<f64>, localscore_core::MatchOutcome, localscore_core::ScoreTable) {
    let mut config = SynthConfig::mixed(3000, 15, 0.5, seed);
    config.outcome.missing_rate = 0.1;
    let (market, _) = generate(&config).unwrap();
    let out = run_da(&market).unwrap();
    let table = estimate_local_score(&market, &out, &BandwidthSpec::Uniform(0.05)).unwrap();
    (market, out, table)
}

#[test]
fn score_dummies_partition_the_sample() {
    let (market, out, table) = synth(1);
    let spec = FrameSpec::new(&["GradeA", "ungraded"]);
    let frame = EstimationFrame::build(&market, &out, &table, &spec).unwrap();
    assert!(frame.no_risk > 0 && !frame.is_empty());
    assert_eq!(frame.len() + frame.no_risk, market.applicants.len());
    for sector in ["GradeA", "ungraded"] {
        let prefix = format!("d_{sector}(");
        let cols: Vec<&Vec<f64>> = frame
            .controls
            .names
            .iter()
            .zip(&frame.controls.columns)
            .filter(|(n, _)| n.starts_with(&prefix))
            .map(|(_, c)| c)
            .collect();
        for r in 0..frame.len() {
            assert_eq!(cols.iter().map(|c| c[r]).sum::<f64>(), 1.0);
        }
    }
    // every sample row has risk in some family
    for r in 0..frame.len() {
        assert!(frame.scores.iter().any(|s| s[r] > 0.0 && s[r] < 1.0));
    }
}

#[test]
fn applicants_without_risk_do_not_move_the_estimate() {
    let (market, out, table) = synth(2);
    let mut spec = FrameSpec::new(&["GradeA"]);
    spec.rv_controls = false;
    let risk = EstimationFrame::build(&market, &out, &table, &spec).unwrap();
    spec.keep_all = true;
    let all = EstimationFrame::build(&market, &out, &table, &spec).unwrap();
    assert!(all.len() > risk.len());
    let c = vec!["C_A".to_string()];
    let a = estimate(&risk, &market, "Y", &c).unwrap().iv.coefficients[0].estimate;
    let b = estimate(&all, &market, "Y", &c).unwrap().iv.coefficients[0].estimate;
    assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} {b}");
}

#[test]
fn cohorts_and_attrition() {
    let (mut market, out, table) = synth(3);
    for a in market.applicants.iter_mut() {
        a.covariates.insert("cohort".into(), (a.id.0 % 3) as f64);
    }
    let mut spec = FrameSpec::new(&["GradeA"]);
    spec.cohort = Some("cohort".into());
    spec.covariates = vec!["baseline".into()];
    let frame = EstimationFrame::build(&market, &out, &table, &spec).unwrap();
    assert!(frame.controls.names.iter().any(|n| n.ends_with(":cohort(2)")));
    assert!(frame.controls.names.contains(&"cohort(1)".to_string()));
    assert!(!frame.controls.names.contains(&"cohort(0)".to_string()));
    let report = estimate(&frame, &market, "Y", &["C_A".to_string()]).unwrap();
    let att = &report.attrition;
    assert_eq!(att.assigned.0 + att.unassigned.0, frame.len());
    assert_eq!(report.iv.n, att.assigned.1 + att.unassigned.1);
    assert!(att.assigned.1 < att.assigned.0);
    let (p1, p0) = att.follow_up_rates();
    assert!((p1 - 0.9).abs() < 0.1 && (p0 - 0.9).abs() < 0.1);
    assert!(report.iv.dropped.iter().all(|d| frame.controls.names.contains(d)));
}

#[test]
fn unknown_names_are_errors() {
    let (market, out, table) = synth(4);
    assert!(EstimationFrame::build(&market, &out, &table, &FrameSpec::new(&["Nope"])).is_err());
    let frame = EstimationFrame::build(&market, &out, &table, &FrameSpec::new(&["GradeA"])).unwrap();
    assert!(estimate(&frame, &market, "nope", &["C_A".to_string()]).is_err());
}
