use std::collections::BTreeMap;

use localscore::files::{read_match, write_match};
use localscore::{read_market, read_scores, write_market, write_scores, Error, ReadOptions, ScoreLine};
use localscore_core::market::{Applicant, ApplicantType, Capacity, Priority, School};
use localscore_core::{estimate_local_score, run_da, ApplicantId, BandwidthSpec, Class, Market, SchoolId, TieBreakerId};
use proptest::prelude::*;

fn market_strategy() -> impl Strategy<Value = Market> {
    let school = (1u32..4, prop_oneof![(0u32..20).prop_map(Capacity::Seats), (0.0f64..1.0).prop_map(Capacity::Fraction)],
        proptest::collection::btree_set("[a-zA-Z ,\"]{1,6}", 0..3));
    let applicant = (
        proptest::collection::vec((0u32..6, prop_oneof![Just(Priority::Ineligible), (1u32..4).prop_map(Priority::Level)]), 0..5),
        proptest::collection::btree_map(1u32..4, 1e-9f64..=1.0, 0..3),
        proptest::option::of(-1e6f64..1e6),
        proptest::option::of(any::<f64>().prop_filter("finite", |x| x.is_finite())),
        proptest::option::of(0.0f64..1.0),
    );
    (
        proptest::collection::vec(school, 1..6),
        proptest::collection::vec(applicant, 0..20),
        0u32..3,
        1u32..4,
    )
        .prop_map(|(schools, applicants, u, k)| {
            let mut m = Market::new(u, k);
            for (s, (tb, cap, tags)) in schools.into_iter().enumerate() {
                let mut school = School::new(s as u32 + 1, cap, tb);
                school.tags = tags;
                m.schools.push(school);
            }
            let count = m.schools.len() as u32;
            for (i, (list, tbs, x, y, enrolled)) in applicants.into_iter().enumerate() {
                let mut kind = ApplicantType::default();
                for (s, p) in list {
                    let s = SchoolId(s % count + 1);
                    if !kind.preferences.contains(&s) {
                        kind.preferences.push(s);
                    }
                    kind.priorities.insert(s, p);
                }
                let mut a = Applicant::new(10 * i as u32 + 3, kind);
                a.tie_breakers = tbs.into_iter().map(|(v, r)| (TieBreakerId(v), r)).collect();
                if let Some(x) = x {
                    a.covariates.insert("baseline".into(), x);
                }
                if let Some(y) = y {
                    a.outcomes.insert("Y".into(), y);
                }
                if let Some(c) = enrolled {
                    a.enrollment.insert("C_A".into(), c);
                }
                m.applicants.push(a);
            }
            m
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn market_round_trip(market in market_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        write_market(dir.path(), &market).unwrap();
        let back = read_market(dir.path(), &ReadOptions::default()).unwrap();
        prop_assert_eq!(back, market);
    }

    #[test]
    fn score_lines_round_trip(psi in proptest::collection::vec(0.0f64..=1.0, 1..30), mid in 0.0f64..1.0) {
        let lines: Vec<ScoreLine> = psi
            .iter()
            .enumerate()
            .map(|(k, &p)| ScoreLine {
                applicant: ApplicantId(k as u32 / 3),
                school: SchoolId(k as u32 % 3 + 1),
                class: [Class::Never, Class::Always, Class::Conditional][k % 3],
                psi: p,
                m: k as u32 % 4,
                sigma: 0.5f64.powi(k as i32 % 4),
                lambda: 1.0 - mid,
                mids: if k % 2 == 0 { vec![] } else { vec![(TieBreakerId(1), mid), (TieBreakerId(7), p)] },
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        write_scores(&path, &lines).unwrap();
        prop_assert_eq!(read_scores(&path).unwrap(), lines);
    }
}

#[test]
fn match_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Market::new(1, 2);
    m.schools = vec![School::new(1, Capacity::Seats(2), 1), School::new(2, Capacity::Seats(5), 2)];
    for i in 0..6u32 {
        let kind = ApplicantType {
            preferences: vec![SchoolId(1), SchoolId(2)],
            priorities: [(SchoolId(1), Priority::Level(1 + i % 2)), (SchoolId(2), Priority::Level(1))].into(),
        };
        let mut a = Applicant::new(i, kind);
        a.tie_breakers = [(TieBreakerId(1), (i as f64 + 1.0) / 7.0), (TieBreakerId(2), 0.1 * (i + 1) as f64)].into();
        m.applicants.push(a);
    }
    let out = run_da(&m).unwrap();
    write_match(dir.path(), &out).unwrap();
    assert_eq!(read_match(dir.path()).unwrap(), out);

    let table = estimate_local_score(&m, &out, &BandwidthSpec::Uniform(0.05)).unwrap();
    let lines: Vec<ScoreLine> = table.rows.iter().map(ScoreLine::from).collect();
    write_scores(&dir.path().join("s.csv"), &lines).unwrap();
    assert_eq!(read_scores(&dir.path().join("s.csv")).unwrap(), lines);
}

fn write(dir: &std::path::Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn small_market(dir: &std::path::Path) {
    write(dir, "schema.json", r#"{"lottery_count": 1, "max_priority": 2, "columns": {"x": "covariate"}}"#);
    write(dir, "schools.csv", "school_id,capacity,tiebreaker_id,tags\n1,1,1,\"a;b\"\n2,0.5,2,\n");
    write(dir, "applicants.csv", "applicant_id,x\n1,0.5\n2,\n");
    write(dir, "preferences.csv", "applicant_id,rank,school_id\n1,2,1\n1,1,2\n2,1,1\n");
    write(dir, "priorities.csv", "applicant_id,school_id,priority\n1,1,1\n1,2,inf\n2,1,2\n");
    write(dir, "tiebreakers.csv", "applicant_id,tiebreaker_id,value\n1,1,30\n2,1,10\n1,2,7\n");
}

#[test]
fn reads_hand_written_market() {
    let dir = tempfile::tempdir().unwrap();
    small_market(dir.path());
    let m = read_market(dir.path(), &ReadOptions { scale: true, sectors: None }).unwrap();
    assert_eq!(m.schools[0].tags.iter().cloned().collect::<Vec<_>>(), vec!["a", "b"]);
    assert_eq!(m.schools[1].capacity, Capacity::Fraction(0.5));
    let a = &m.applicants[0];
    assert_eq!(a.kind.preferences, vec![SchoolId(2), SchoolId(1)]);
    assert_eq!(a.kind.priorities[&SchoolId(2)], Priority::Ineligible);
    // raw ranks 30 and 10 on tie-breaker 1 scale to 21/21 and 1/21
    assert_eq!(a.tie_breakers[&TieBreakerId(1)], 1.0);
    assert_eq!(m.applicants[1].tie_breakers[&TieBreakerId(1)], 1.0 / 21.0);
    assert_eq!(a.tie_breakers[&TieBreakerId(2)], 1.0);
    assert_eq!(m.applicants[1].covariates, BTreeMap::new());

    let sectors = dir.path().join("sectors.csv");
    write(dir.path(), "sectors.csv", "school_id,tag\n2,GradeA\n");
    let m = read_market(dir.path(), &ReadOptions { scale: true, sectors: Some(sectors) }).unwrap();
    assert!(m.schools[1].tags.contains("GradeA"));
}

fn format_error(dir: &std::path::Path) -> (String, Option<u64>) {
    match read_market(dir, &ReadOptions::default()) {
        Err(Error::Format { path, line, .. }) => (path.file_name().unwrap().to_string_lossy().into_owned(), line),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn malformed_files_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    small_market(dir.path());
    write(dir.path(), "tiebreakers.csv", "applicant_id,tiebreaker_id,value\n1,1,0.3\n2,1,abc\n");
    assert_eq!(format_error(dir.path()), ("tiebreakers.csv".into(), Some(3)));

    small_market(dir.path());
    write(dir.path(), "preferences.csv", "applicant_id,rank,school_id\n1,1,1\n1,3,2\n");
    assert_eq!(format_error(dir.path()).0, "preferences.csv");

    small_market(dir.path());
    write(dir.path(), "applicants.csv", "applicant_id,x,y\n1,0.5,1\n");
    assert_eq!(format_error(dir.path()), ("applicants.csv".into(), Some(1)));

    small_market(dir.path());
    write(dir.path(), "priorities.csv", "applicant_id,school_id,priority\n9,1,1\n");
    assert_eq!(format_error(dir.path()), ("priorities.csv".into(), Some(2)));

    small_market(dir.path());
    write(dir.path(), "schools.csv", "school_id,capacity,tiebreaker_id,tags\n1,1,1,\n1,2,1,\n");
    assert_eq!(format_error(dir.path()), ("schools.csv".into(), Some(3)));

    small_market(dir.path());
    write(dir.path(), "tiebreakers.csv", "applicant_id,value\n1,0.3\n");
    assert_eq!(format_error(dir.path()), ("tiebreakers.csv".into(), Some(1)));
}
