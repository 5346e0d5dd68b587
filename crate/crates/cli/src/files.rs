//! CSV and JSON file formats.
//!
//! A market directory holds `schema.json`, `schools.csv`, `applicants.csv`,
//! `preferences.csv`, `priorities.csv` and `tiebreakers.csv`. Floats are
//! written in the shortest representation that parses back to the same
//! value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use localscore_core::da::{Admitted, Cutoff};
use localscore_core::market::{Applicant, ApplicantType, Capacity, Priority, School};
use localscore_core::score::{BandwidthInfo, BandwidthSource, ScoreRow};
use localscore_core::{scale_raw_tiebreaker, ApplicantId, Class, Market, MatchOutcome, SchoolId, TieBreakerId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "schema.json";
pub const SCHOOLS: &str = "schools.csv";
pub const APPLICANTS: &str = "applicants.csv";
pub const PREFERENCES: &str = "preferences.csv";
pub const PRIORITIES: &str = "priorities.csv";
pub const TIEBREAKERS: &str = "tiebreakers.csv";
pub const MARKET_FILES: [&str; 6] = [SCHEMA, SCHOOLS, APPLICANTS, PREFERENCES, PRIORITIES, TIEBREAKERS];

/// Shortest round-trip decimal form of `x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// What an `applicants.csv` column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Covariate,
    Outcome,
    Enrollment,
}

/// Sidecar describing the market constants and the applicant columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub lottery_count: u32,
    pub max_priority: u32,
    #[serde(default)]
    pub columns: BTreeMap<String, Role>,
}

#[derive(Debug, Clone, Default)]
pub struct ReadOptions {
    /// Tie-breaker values are raw integer ranks, scaled per tie-breaker.
    pub scale: bool,
    /// CSV of `school_id, tag` rows adding sector labels.
    pub sectors: Option<PathBuf>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, Some(e.line() as u64), e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, None, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Rows {
    path: PathBuf,
    reader: csv::Reader<File>,
    headers: csv::StringRecord,
}

struct Row<'a> {
    path: &'a Path,
    record: &'a csv::StringRecord,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    Error::format(path, line, e.to_string())
}

impl Rows {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().from_reader(file);
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        Ok(Rows { path: path.to_path_buf(), reader, headers })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(&self.path, Some(1), format!("missing column `{name}`")))
    }

    fn for_each(mut self, mut f: impl FnMut(&Row) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(true) => f(&Row { path: &self.path, record: &record })?,
                Ok(false) => return Ok(()),
                Err(e) => return Err(csv_error(&self.path, e)),
            }
        }
    }
}

impl Row<'_> {
    fn line(&self) -> Option<u64> {
        self.record.position().map(|p| p.line())
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::format(self.path, self.line(), message)
    }

    fn str(&self, col: usize) -> &str {
        self.record.get(col).unwrap_or("")
    }

    fn parse<T: FromStr>(&self, col: usize, what: &str) -> Result<T> {
        let s = self.str(col);
        s.trim().parse().map_err(|_| self.err(format!("invalid {what} {s:?}")))
    }

    fn optional_f64(&self, col: usize, what: &str) -> Result<Option<f64>> {
        if self.str(col).trim().is_empty() {
            Ok(None)
        } else {
            self.parse(col, what).map(Some)
        }
    }
}

struct Out {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl Out {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut out = Out { path: path.to_path_buf(), writer };
        out.row(header)?;
        Ok(out)
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| csv_error(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn parse_capacity(row: &Row, col: usize) -> Result<Capacity> {
    let s = row.str(col).trim();
    if let Ok(n) = s.parse::<u32>() {
        return Ok(Capacity::Seats(n));
    }
    s.parse::<f64>()
        .map(Capacity::Fraction)
        .map_err(|_| row.err(format!("invalid capacity {s:?}")))
}

fn fmt_capacity(c: &Capacity) -> String {
    match c {
        Capacity::Seats(n) => n.to_string(),
        // Debug output always carries a '.' or an exponent, so it never reads back as seats
        Capacity::Fraction(q) => fmt_f64(*q),
    }
}

fn parse_priority(row: &Row, col: usize) -> Result<Priority> {
    let s = row.str(col).trim();
    if s.eq_ignore_ascii_case("inf") {
        return Ok(Priority::Ineligible);
    }
    s.parse().map(Priority::Level).map_err(|_| row.err(format!("invalid priority {s:?}")))
}

pub fn read_market(dir: &Path, options: &ReadOptions) -> Result<Market> {
    let schema: Schema = read_json(&dir.join(SCHEMA))?;
    let mut market = Market::new(schema.lottery_count, schema.max_priority);

    let rows = Rows::open(&dir.join(SCHOOLS))?;
    let (c_id, c_cap, c_tb, c_tags) = (rows.col("school_id")?, rows.col("capacity")?, rows.col("tiebreaker_id")?, rows.col("tags")?);
    let mut school_at = HashMap::new();
    rows.for_each(|row| {
        let id: u32 = row.parse(c_id, "school id")?;
        let mut school = School::new(id, parse_capacity(row, c_cap)?, row.parse(c_tb, "tie-breaker id")?);
        school.tags = row.str(c_tags).split(';').filter(|t| !t.is_empty()).map(str::to_string).collect();
        if school_at.insert(id, market.schools.len()).is_some() {
            return Err(row.err(format!("duplicate school {id}")));
        }
        market.schools.push(school);
        Ok(())
    })?;

    let rows = Rows::open(&dir.join(APPLICANTS))?;
    let c_id = rows.col("applicant_id")?;
    let path = dir.join(APPLICANTS);
    let mut columns = Vec::new();
    for (k, name) in rows.headers.iter().enumerate() {
        if k == c_id {
            continue;
        }
        let role = schema.columns.get(name).ok_or_else(|| {
            Error::format(&path, Some(1), format!("column `{name}` is not declared in {SCHEMA}"))
        })?;
        columns.push((k, name.to_string(), *role));
    }
    for name in schema.columns.keys() {
        if !columns.iter().any(|c| &c.1 == name) {
            return Err(Error::format(&path, Some(1), format!("declared column `{name}` is missing")));
        }
    }
    let mut applicant_at = HashMap::new();
    rows.for_each(|row| {
        let id: u32 = row.parse(c_id, "applicant id")?;
        let mut a = Applicant::new(id, ApplicantType::default());
        for (k, name, role) in &columns {
            if let Some(x) = row.optional_f64(*k, name)? {
                let slot = match role {
                    Role::Covariate => &mut a.covariates,
                    Role::Outcome => &mut a.outcomes,
                    Role::Enrollment => &mut a.enrollment,
                };
                slot.insert(name.clone(), x);
            }
        }
        if applicant_at.insert(id, market.applicants.len()).is_some() {
            return Err(row.err(format!("duplicate applicant {id}")));
        }
        market.applicants.push(a);
        Ok(())
    })?;
    let find = |row: &Row, col: usize| -> Result<usize> {
        let id: u32 = row.parse(col, "applicant id")?;
        applicant_at.get(&id).copied().ok_or_else(|| row.err(format!("unknown applicant {id}")))
    };

    let path = dir.join(PREFERENCES);
    let rows = Rows::open(&path)?;
    let (c_id, c_rank, c_school) = (rows.col("applicant_id")?, rows.col("rank")?, rows.col("school_id")?);
    let mut lists: Vec<Vec<(u32, SchoolId)>> = vec![Vec::new(); market.applicants.len()];
    rows.for_each(|row| {
        let i = find(row, c_id)?;
        lists[i].push((row.parse(c_rank, "rank")?, SchoolId(row.parse(c_school, "school id")?)));
        Ok(())
    })?;
    for (a, mut list) in market.applicants.iter_mut().zip(lists) {
        list.sort_by_key(|e| e.0);
        if list.iter().enumerate().any(|(k, e)| e.0 as usize != k + 1) {
            return Err(Error::format(&path, None, format!("ranks of applicant {} are not 1..{}", a.id, list.len())));
        }
        a.kind.preferences = list.into_iter().map(|e| e.1).collect();
    }

    let rows = Rows::open(&dir.join(PRIORITIES))?;
    let (c_id, c_school, c_pri) = (rows.col("applicant_id")?, rows.col("school_id")?, rows.col("priority")?);
    rows.for_each(|row| {
        let i = find(row, c_id)?;
        let s = SchoolId(row.parse(c_school, "school id")?);
        let p = parse_priority(row, c_pri)?;
        if market.applicants[i].kind.priorities.insert(s, p).is_some() {
            return Err(row.err(format!("duplicate priority at school {s}")));
        }
        Ok(())
    })?;

    let path = dir.join(TIEBREAKERS);
    let rows = Rows::open(&path)?;
    let (c_id, c_tb, c_value) = (rows.col("applicant_id")?, rows.col("tiebreaker_id")?, rows.col("value")?);
    let mut raw: BTreeMap<TieBreakerId, Vec<(usize, i64)>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    rows.for_each(|row| {
        let i = find(row, c_id)?;
        let v = TieBreakerId(row.parse(c_tb, "tie-breaker id")?);
        if options.scale {
            if !seen.insert((i, v)) {
                return Err(row.err(format!("duplicate value for tie-breaker {v}")));
            }
            raw.entry(v).or_default().push((i, row.parse(c_value, "raw rank")?));
        } else if market.applicants[i].tie_breakers.insert(v, row.parse(c_value, "tie-breaker value")?).is_some() {
            return Err(row.err(format!("duplicate value for tie-breaker {v}")));
        }
        Ok(())
    })?;
    for (v, entries) in raw {
        let values: Vec<i64> = entries.iter().map(|e| e.1).collect();
        for ((i, _), x) in entries.iter().zip(scale_raw_tiebreaker::<f64>(&values)?) {
            market.applicants[*i].tie_breakers.insert(v, x);
        }
    }

    if let Some(path) = &options.sectors {
        for (school, tag) in read_sectors(path)? {
            let k = school_at
                .get(&school.0)
                .ok_or_else(|| Error::format(path, None, format!("unknown school {school}")))?;
            market.schools[*k].tags.insert(tag);
        }
    }
    Ok(market)
}

/// Sector labels as `(school, tag)` rows.
pub fn read_sectors(path: &Path) -> Result<Vec<(SchoolId, String)>> {
    let rows = Rows::open(path)?;
    let (c_school, c_tag) = (rows.col("school_id")?, rows.col("tag")?);
    let mut out = Vec::new();
    rows.for_each(|row| {
        let tag = row.str(c_tag).trim();
        if tag.is_empty() || tag.contains(';') {
            return Err(row.err(format!("invalid tag {tag:?}")));
        }
        out.push((SchoolId(row.parse(c_school, "school id")?), tag.to_string()));
        Ok(())
    })?;
    Ok(out)
}

/// Schema implied by a market's applicant columns.
pub fn schema_of(market: &Market) -> Result<Schema> {
    let mut columns = BTreeMap::new();
    for a in &market.applicants {
        let roles = [(&a.covariates, Role::Covariate), (&a.outcomes, Role::Outcome), (&a.enrollment, Role::Enrollment)];
        for (map, role) in roles {
            for name in map.keys() {
                if *columns.entry(name.clone()).or_insert(role) != role {
                    return Err(Error::Usage(format!("column `{name}` is used with two roles")));
                }
            }
        }
    }
    if columns.contains_key("applicant_id") {
        return Err(Error::Usage("`applicant_id` is reserved".into()));
    }
    Ok(Schema { lottery_count: market.lottery_count, max_priority: market.max_priority, columns })
}

/// Writes the six market files into an existing directory.
pub fn write_market(dir: &Path, market: &Market) -> Result<()> {
    let schema = schema_of(market)?;
    write_json(&dir.join(SCHEMA), &schema)?;

    let mut out = Out::create(&dir.join(SCHOOLS), &["school_id", "capacity", "tiebreaker_id", "tags"])?;
    for s in &market.schools {
        if let Some(t) = s.tags.iter().find(|t| t.is_empty() || t.contains(';')) {
            return Err(Error::Usage(format!("tag {t:?} of school {} cannot be written", s.id)));
        }
        let tags = s.tags.iter().cloned().collect::<Vec<_>>().join(";");
        out.row([s.id.to_string(), fmt_capacity(&s.capacity), s.tie_breaker.to_string(), tags])?;
    }
    out.finish()?;

    let mut header = vec!["applicant_id"];
    header.extend(schema.columns.keys().map(String::as_str));
    let mut out = Out::create(&dir.join(APPLICANTS), &header)?;
    for a in &market.applicants {
        let mut fields = vec![a.id.to_string()];
        for (name, role) in &schema.columns {
            let map = match role {
                Role::Covariate => &a.covariates,
                Role::Outcome => &a.outcomes,
                Role::Enrollment => &a.enrollment,
            };
            fields.push(map.get(name).map(|&x| fmt_f64(x)).unwrap_or_default());
        }
        out.row(fields)?;
    }
    out.finish()?;

    let mut out = Out::create(&dir.join(PREFERENCES), &["applicant_id", "rank", "school_id"])?;
    for a in &market.applicants {
        for (k, s) in a.kind.preferences.iter().enumerate() {
            out.row([a.id.to_string(), (k + 1).to_string(), s.to_string()])?;
        }
    }
    out.finish()?;

    let mut out = Out::create(&dir.join(PRIORITIES), &["applicant_id", "school_id", "priority"])?;
    for a in &market.applicants {
        for (s, p) in &a.kind.priorities {
            out.row([a.id.to_string(), s.to_string(), p.to_string()])?;
        }
    }
    out.finish()?;

    let mut out = Out::create(&dir.join(TIEBREAKERS), &["applicant_id", "tiebreaker_id", "value"])?;
    for a in &market.applicants {
        for (v, x) in &a.tie_breakers {
            out.row([a.id.to_string(), v.to_string(), fmt_f64(*x)])?;
        }
    }
    out.finish()
}

pub const ASSIGNMENTS: &str = "assignments.csv";
pub const CUTOFFS: &str = "cutoffs.csv";

pub fn write_match(dir: &Path, outcome: &MatchOutcome) -> Result<()> {
    let mut out = Out::create(&dir.join(ASSIGNMENTS), &["applicant_id", "school_id"])?;
    for (a, s) in outcome.applicants.iter().zip(&outcome.assignment) {
        out.row([a.to_string(), s.map(|s| s.to_string()).unwrap_or_default()])?;
    }
    out.finish()?;

    let header = [
        "school_id", "seats", "assigned", "slack", "marginal_priority", "tau", "xi",
        "last_applicant", "last_priority", "last_value",
    ];
    let mut out = Out::create(&dir.join(CUTOFFS), &header)?;
    for (s, c) in &outcome.cutoffs {
        let last = c.last_admitted.map(|l| [l.applicant.to_string(), l.priority.to_string(), fmt_f64(l.value)]);
        let [la, lp, lv] = last.unwrap_or_default();
        out.row([
            s.to_string(),
            c.seats.to_string(),
            c.assigned.to_string(),
            u8::from(c.slack).to_string(),
            c.marginal_priority.to_string(),
            fmt_f64(c.tau),
            fmt_f64(c.xi),
            la,
            lp,
            lv,
        ])?;
    }
    out.finish()
}

pub fn read_match(dir: &Path) -> Result<MatchOutcome> {
    let rows = Rows::open(&dir.join(ASSIGNMENTS))?;
    let (c_id, c_school) = (rows.col("applicant_id")?, rows.col("school_id")?);
    let mut applicants = Vec::new();
    let mut assignment = Vec::new();
    rows.for_each(|row| {
        applicants.push(ApplicantId(row.parse(c_id, "applicant id")?));
        let s = row.str(c_school).trim();
        assignment.push(if s.is_empty() { None } else { Some(SchoolId(row.parse(c_school, "school id")?)) });
        Ok(())
    })?;

    let rows = Rows::open(&dir.join(CUTOFFS))?;
    let cols = [
        "school_id", "seats", "assigned", "slack", "marginal_priority", "tau", "xi",
        "last_applicant", "last_priority", "last_value",
    ]
    .map(|name| rows.col(name));
    let [c_id, c_seats, c_assigned, c_slack, c_mp, c_tau, c_xi, c_la, c_lp, c_lv] = cols;
    let (c_id, c_seats, c_assigned, c_slack, c_mp, c_tau, c_xi) = (c_id?, c_seats?, c_assigned?, c_slack?, c_mp?, c_tau?, c_xi?);
    let (c_la, c_lp, c_lv) = (c_la?, c_lp?, c_lv?);
    let mut cutoffs = BTreeMap::new();
    rows.for_each(|row| {
        let last = if row.str(c_la).trim().is_empty() {
            None
        } else {
            Some(Admitted {
                applicant: ApplicantId(row.parse(c_la, "applicant id")?),
                priority: row.parse(c_lp, "priority")?,
                value: row.parse(c_lv, "tie-breaker value")?,
            })
        };
        let slack: u8 = row.parse(c_slack, "slack flag")?;
        let cutoff = Cutoff {
            xi: row.parse(c_xi, "cutoff")?,
            marginal_priority: row.parse(c_mp, "marginal priority")?,
            tau: row.parse(c_tau, "cutoff")?,
            slack: slack != 0,
            seats: row.parse(c_seats, "seat count")?,
            assigned: row.parse(c_assigned, "assigned count")?,
            last_admitted: last,
        };
        let s = SchoolId(row.parse(c_id, "school id")?);
        if cutoffs.insert(s, cutoff).is_some() {
            return Err(row.err(format!("duplicate school {s}")));
        }
        Ok(())
    })?;
    Ok(MatchOutcome { applicants, assignment, cutoffs })
}

/// One row of `scores.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLine {
    pub applicant: ApplicantId,
    pub school: SchoolId,
    pub class: Class,
    pub psi: f64,
    pub m: u32,
    pub sigma: f64,
    pub lambda: f64,
    pub mids: Vec<(TieBreakerId, f64)>,
}

impl From<&ScoreRow<f64>> for ScoreLine {
    fn from(row: &ScoreRow<f64>) -> Self {
        let s = &row.score;
        ScoreLine {
            applicant: row.applicant,
            school: s.school,
            class: s.class,
            psi: s.psi,
            m: s.m,
            sigma: s.sigma,
            lambda: s.lambda,
            mids: s.mids.clone(),
        }
    }
}

fn fmt_mids(mids: &[(TieBreakerId, f64)]) -> String {
    let body: Vec<String> = mids.iter().map(|(v, x)| format!("\"{v}\":{}", fmt_f64(*x))).collect();
    format!("{{{}}}", body.join(","))
}

pub fn write_scores(path: &Path, lines: &[ScoreLine]) -> Result<()> {
    let header = ["applicant_id", "school_id", "t", "psi", "m", "sigma", "lambda", "mid_vs"];
    let mut out = Out::create(path, &header)?;
    for l in lines {
        out.row([
            l.applicant.to_string(),
            l.school.to_string(),
            l.class.to_string(),
            fmt_f64(l.psi),
            l.m.to_string(),
            fmt_f64(l.sigma),
            fmt_f64(l.lambda),
            fmt_mids(&l.mids),
        ])?;
    }
    out.finish()
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreLine>> {
    let rows = Rows::open(path)?;
    let c = ["applicant_id", "school_id", "t", "psi", "m", "sigma", "lambda", "mid_vs"].map(|n| rows.col(n));
    let [ca, cs, ct, cp, cm, csg, cl, cv] = c;
    let (ca, cs, ct, cp, cm, csg, cl, cv) = (ca?, cs?, ct?, cp?, cm?, csg?, cl?, cv?);
    let mut out = Vec::new();
    rows.for_each(|row| {
        let t = row.str(ct).trim();
        let class = t
            .chars()
            .next()
            .filter(|_| t.len() == 1)
            .and_then(Class::from_code)
            .ok_or_else(|| row.err(format!("invalid class {t:?}")))?;
        let raw: BTreeMap<String, f64> =
            serde_json::from_str(row.str(cv)).map_err(|e| row.err(format!("invalid mid_vs: {e}")))?;
        let mids = raw
            .into_iter()
            .map(|(k, x)| k.parse().map(|v| (TieBreakerId(v), x)).map_err(|_| row.err(format!("invalid tie-breaker {k:?}"))))
            .collect::<Result<BTreeMap<_, _>>>()?
            .into_iter()
            .collect();
        out.push(ScoreLine {
            applicant: ApplicantId(row.parse(ca, "applicant id")?),
            school: SchoolId(row.parse(cs, "school id")?),
            class,
            psi: row.parse(cp, "score")?,
            m: row.parse(cm, "m")?,
            sigma: row.parse(csg, "sigma")?,
            lambda: row.parse(cl, "lambda")?,
            mids,
        });
        Ok(())
    })?;
    Ok(out)
}

pub const BANDWIDTHS: &str = "bandwidths.csv";

pub fn write_bandwidths(path: &Path, infos: &BTreeMap<SchoolId, BandwidthInfo<f64>>) -> Result<()> {
    let header = ["school_id", "source", "requested", "delta", "below", "above", "guarded"];
    let mut out = Out::create(path, &header)?;
    for (s, b) in infos {
        let source = match b.source {
            BandwidthSource::Lottery => "lottery",
            BandwidthSource::User => "user",
            BandwidthSource::Rule => "rule",
        };
        out.row([
            s.to_string(),
            source.to_string(),
            fmt_f64(b.requested),
            fmt_f64(b.delta),
            b.below.to_string(),
            b.above.to_string(),
            u8::from(b.guarded).to_string(),
        ])?;
    }
    out.finish()
}

/// Per-school bandwidths from any CSV with `school_id` and `delta` columns.
pub fn read_bandwidths(path: &Path) -> Result<BTreeMap<SchoolId, f64>> {
    let rows = Rows::open(path)?;
    let (cs, cd) = (rows.col("school_id")?, rows.col("delta")?);
    let mut out = BTreeMap::new();
    rows.for_each(|row| {
        let s = SchoolId(row.parse(cs, "school id")?);
        if out.insert(s, row.parse(cd, "bandwidth")?).is_some() {
            return Err(row.err(format!("duplicate school {s}")));
        }
        Ok(())
    })?;
    Ok(out)
}

/// Generic table writer for report outputs.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = Out::create(path, header)?;
    for r in rows {
        out.row(r)?;
    }
    out.finish()
}

/// Distinct tags in label order.
pub fn labels(sectors: &[(SchoolId, String)]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    sectors.iter().filter(|(_, t)| seen.insert(t.clone())).map(|(_, t)| t.clone()).collect()
}
