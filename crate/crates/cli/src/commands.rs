//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use localscore_core::market::ApplicantType;
use localscore_core::{
    da_global_score, estimate_local_score, has_risk, run_da, verify_stability, ApplicantId, BandwidthRule,
    BandwidthSpec, Cdf, Class, Market, MarketIndex, MatchOutcome, SchoolId, ScoreContext, ScoreTable, TieBreakerId,
    UniformCdf,
};
use localscore_econometrics::{assignment_dummy, balance_regression, estimate, EstimationFrame, FrameSpec, OlsFit};
use localscore_sim::{
    comparison_se, convergence_sweep, generate, mc_score, CdfFamily, MarketTemplate, OracleConfig, SweepConfig,
    SynthConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::files::{
    self, fmt_f64, read_bandwidths, read_json, read_market, read_scores, read_sectors, write_bandwidths, write_json,
    write_market, write_match, write_scores, write_table, ReadOptions, ScoreLine, MARKET_FILES,
};
use crate::manifest::{InputFile, RunManifest, Staging};
use crate::report::{score_report, SectorRows};

#[derive(Debug, Parser)]
#[command(name = "localscore", version, about = "Assignment propensity scores from a single realized school match")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct MarketArgs {
    /// Market directory.
    pub dir: PathBuf,
    /// Tie-breaker values are raw integer ranks; scale each tie-breaker into (0, 1].
    #[arg(long)]
    pub scale: bool,
    /// CSV of `school_id,tag` rows with sector labels.
    #[arg(long)]
    pub sectors: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BandwidthArgs {
    /// `default` (rule of thumb), one bandwidth for every screened school,
    /// or a CSV with `school_id,delta` columns.
    #[arg(long, default_value = "default")]
    pub bandwidths: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Html,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub bandwidth: BandwidthArgs,
    /// Large-market scores with uniform tie-breaker distributions instead of
    /// local scores.
    #[arg(long)]
    pub global_uniform: bool,
    #[arg(long, value_enum)]
    pub report: Option<ReportFormat>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long, default_value_t = 10_000)]
    pub draws: u32,
    /// Bandwidth at screened schools (overridden by `bandwidths.csv` next to `--against`).
    #[arg(long, default_value_t = 0.02)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scores to check; computed from the market when absent.
    #[arg(long)]
    pub against: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub min_occupancy: u64,
    /// Cells deviating by more than this many standard errors fail.
    #[arg(long, default_value_t = 3.0)]
    pub z: f64,
    /// Also average each draw's own local scores.
    #[arg(long)]
    pub plug_in: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FrameArgs {
    /// Sector label(s) whose assignment dummies are the instruments; the
    /// first is the sector of interest.
    #[arg(long = "instrument", required = true, value_delimiter = ',')]
    pub instruments: Vec<String>,
    /// Extra exogenous controls.
    #[arg(long, value_delimiter = ',')]
    pub controls: Vec<String>,
    #[arg(long)]
    pub cohort: Option<String>,
    /// Round scores to this granularity before building dummies.
    #[arg(long)]
    pub rounding: Option<f64>,
    /// Keep applicants without score risk.
    #[arg(long)]
    pub keep_all: bool,
    /// Leave out the running-variable controls of screened schools.
    #[arg(long)]
    pub no_rv_controls: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BalanceArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub bandwidth: BandwidthArgs,
    #[command(flatten)]
    pub frame: FrameArgs,
    #[arg(long, required = true, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub bandwidth: BandwidthArgs,
    #[command(flatten)]
    pub frame: FrameArgs,
    #[arg(long)]
    pub outcome: String,
    #[arg(long = "treatment", required = true, value_delimiter = ',')]
    pub treatments: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check a market directory; exits nonzero on any violation.
    Validate {
        #[command(flatten)]
        market: MarketArgs,
    },
    /// Run deferred acceptance and write assignments and cutoffs.
    Match {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a match against the cutoff characterization of stability.
    Verify {
        #[command(flatten)]
        market: MarketArgs,
        /// Output directory of `match`.
        #[arg(long = "match")]
        matched: PathBuf,
    },
    /// Local propensity scores for every applicant and ranked school.
    Score(ScoreArgs),
    /// Monte Carlo assignment frequencies compared with scores.
    Oracle(OracleArgs),
    /// Oracle deviation along a schedule of market sizes and bandwidths.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Covariate balance conditional on scores.
    Balance(BalanceArgs),
    /// OLS, first stages and score-controlled 2SLS.
    Estimate(EstimateArgs),
    /// Generate a synthetic market with planted effects.
    Synth {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat the run recorded in a manifest into a new directory.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs a parsed command; `argv` excludes the program name and is recorded
/// in manifests. Returns the JSON summary printed on success.
pub fn execute(command: Command, argv: &[String]) -> Result<Value> {
    match command {
        Command::Validate { market } => validate(&market),
        Command::Match { market, out } => do_match(&market, &out, argv),
        Command::Verify { market, matched } => verify(&market, &matched),
        Command::Score(args) => score(&args, argv),
        Command::Oracle(args) => oracle(&args, argv),
        Command::Sweep { config, out } => sweep(&config, out.as_deref(), argv),
        Command::Balance(args) => balance(&args, argv),
        Command::Estimate(args) => run_estimate(&args, argv),
        Command::Synth { config, out } => synth(&config, &out, argv),
        Command::Rerun { manifest, out } => rerun(&manifest, &out),
    }
}

struct Loaded {
    market: Market,
    inputs: Vec<InputFile>,
    sectors: Vec<(SchoolId, String)>,
}

fn load(args: &MarketArgs) -> Result<Loaded> {
    let options = ReadOptions { scale: args.scale, sectors: args.sectors.clone() };
    let market = read_market(&args.dir, &options)?;
    let mut inputs =
        MARKET_FILES.iter().map(|f| InputFile::hash(&args.dir.join(f))).collect::<Result<Vec<_>>>()?;
    let sectors = match &args.sectors {
        Some(p) => {
            inputs.push(InputFile::hash(p)?);
            read_sectors(p)?
        }
        None => Vec::new(),
    };
    Ok(Loaded { market, inputs, sectors })
}

fn manifest_for(command: &str, argv: &[String], loaded: &Loaded) -> RunManifest {
    let mut m = RunManifest::new(command, argv);
    m.inputs = loaded.inputs.clone();
    m.sectors = loaded.sectors.iter().map(|(s, t)| (s.0, t.clone())).collect();
    m
}

fn bandwidth_spec(arg: &str, manifest: &mut RunManifest) -> Result<BandwidthSpec<f64>> {
    manifest.bandwidths = Some(arg.to_string());
    if arg == "default" {
        return Ok(BandwidthSpec::Rule(BandwidthRule::default()));
    }
    if let Ok(d) = arg.parse::<f64>() {
        if !(0.0..=1.0).contains(&d) {
            return Err(Error::Usage(format!("bandwidth {d} outside [0, 1]")));
        }
        return Ok(BandwidthSpec::Uniform(d));
    }
    let path = Path::new(arg);
    manifest.inputs.push(InputFile::hash(path)?);
    Ok(BandwidthSpec::PerSchool { values: read_bandwidths(path)?, fallback: BandwidthRule::default() })
}

fn validate(args: &MarketArgs) -> Result<Value> {
    let loaded = load(args)?;
    let report = loaded.market.validate();
    let summary = json!({
        "clean": report.is_clean(),
        "applicants": loaded.market.applicants.len(),
        "schools": loaded.market.schools.len(),
        "violations": report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "warnings": report.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
    });
    if report.is_clean() {
        Ok(summary)
    } else {
        println!("{summary}");
        Err(Error::Invalid(report.violations.len()))
    }
}

fn do_match(args: &MarketArgs, out: &Path, argv: &[String]) -> Result<Value> {
    let loaded = load(args)?;
    let manifest = manifest_for("match", argv, &loaded);
    let staging = Staging::new(out)?;
    let outcome = run_da(&loaded.market)?;
    write_match(staging.dir(), &outcome)?;
    let assigned = outcome.assignment.iter().filter(|s| s.is_some()).count();
    let out = staging.commit(&manifest)?;
    Ok(json!({ "out": out.display().to_string(), "applicants": outcome.applicants.len(), "assigned": assigned }))
}

fn verify(args: &MarketArgs, matched: &Path) -> Result<Value> {
    let loaded = load(args)?;
    let outcome = files::read_match(matched)?;
    let violations = verify_stability(&loaded.market, &outcome)?;
    let summary = json!({
        "stability_violations": violations.len(),
        "violations": violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
    });
    if violations.is_empty() {
        Ok(summary)
    } else {
        println!("{summary}");
        Err(Error::Unstable(violations.len()))
    }
}

/// Large-market scores under uniform tie-breakers, with the same audit
/// columns as the local scores (classification at zero bandwidth).
fn global_uniform_lines(market: &Market, outcome: &MatchOutcome) -> Result<Vec<ScoreLine>> {
    let index = MarketIndex::new(market)?;
    outcome.check_against(&index)?;
    let cutoffs = outcome.cutoff_vec(&index);
    let deltas = vec![0.0; index.school_count()];
    let ctx = ScoreContext::new(&index, &cutoffs, &deltas);
    let screened: BTreeSet<TieBreakerId> =
        index.school_tb.iter().copied().filter(|v| v.0 > index.lottery_count).collect();
    let per_applicant: Vec<Result<Vec<ScoreLine>>> = (0..index.applicant_count())
        .into_par_iter()
        .map_init(
            || (UniformCdf, Vec::new()),
            |(uniform, classes), i| {
                let cdfs: BTreeMap<TieBreakerId, &dyn Cdf<f64>> =
                    screened.iter().map(|&v| (v, uniform as &dyn Cdf<f64>)).collect();
                let kind = &market.applicants[i].kind;
                ctx.classify_applicant(i, classes);
                let audit = ctx.score_type(kind, classes)?;
                let psi = da_global_score(&ctx, kind, &cdfs)?;
                Ok(audit
                    .into_iter()
                    .zip(psi)
                    .map(|(s, (_, p))| ScoreLine {
                        applicant: index.applicant_ids[i],
                        school: s.school,
                        class: s.class,
                        psi: p,
                        m: s.m,
                        sigma: s.sigma,
                        lambda: s.lambda,
                        mids: s.mids,
                    })
                    .collect())
            },
        )
        .collect();
    let mut out = Vec::new();
    for rows in per_applicant {
        out.extend(rows?);
    }
    Ok(out)
}

/// Sector score of every applicant, for each label: the sum of school
/// scores over ranked schools carrying it.
fn sector_rows(market: &Market, lines: &[ScoreLine], labels: &[String]) -> SectorRows {
    let tags: HashMap<SchoolId, &std::collections::BTreeSet<String>> =
        market.schools.iter().map(|s| (s.id, &s.tags)).collect();
    let position: HashMap<ApplicantId, usize> =
        market.applicants.iter().enumerate().map(|(i, a)| (a.id, i)).collect();
    labels
        .iter()
        .map(|label| {
            let mut sums = vec![0.0; market.applicants.len()];
            for l in lines {
                if tags.get(&l.school).is_some_and(|t| t.contains(label)) {
                    sums[position[&l.applicant]] += l.psi;
                }
            }
            (label.clone(), sums)
        })
        .collect()
}

fn score(args: &ScoreArgs, argv: &[String]) -> Result<Value> {
    let loaded = load(&args.market)?;
    let mut manifest = manifest_for("score", argv, &loaded);
    let spec = bandwidth_spec(&args.bandwidth.bandwidths, &mut manifest)?;
    manifest.parameters = json!({ "global_uniform": args.global_uniform });
    let staging = Staging::new(&args.out)?;
    let market = &loaded.market;
    let outcome = run_da(market)?;

    let (lines, table) = if args.global_uniform {
        (global_uniform_lines(market, &outcome)?, None)
    } else {
        let table = estimate_local_score(market, &outcome, &spec)?;
        (table.rows.iter().map(ScoreLine::from).collect(), Some(table))
    };
    write_scores(&staging.path("scores.csv"), &lines)?;
    if let Some(t) = &table {
        write_bandwidths(&staging.path(files::BANDWIDTHS), &t.bandwidths)?;
    }

    let labels = files::labels(&loaded.sectors);
    let sectors = sector_rows(market, &lines, &labels);
    if !labels.is_empty() {
        let mut rows = Vec::new();
        for (label, sums) in &sectors {
            for (a, &psi) in market.applicants.iter().zip(sums) {
                rows.push(vec![a.id.to_string(), label.clone(), fmt_f64(psi), u8::from(has_risk(psi)).to_string()]);
            }
        }
        write_table(&staging.path("sector_scores.csv"), &["applicant_id", "sector", "psi", "risk"], &rows)?;
    }

    let warnings: Vec<String> = table
        .iter()
        .flat_map(|t| &t.warnings)
        .map(|w| match w {
            localscore_core::score::ScoreWarning::DuplicateCutoff { first, second, tau } => {
                format!("schools {first} and {second} share cutoff {}", fmt_f64(*tau))
            }
        })
        .collect();
    let guarded: Vec<u32> = table
        .iter()
        .flat_map(|t| &t.bandwidths)
        .filter(|(_, b)| b.guarded)
        .map(|(s, _)| s.0)
        .collect();
    let summary = json!({
        "applicants": market.applicants.len(),
        "rows": lines.len(),
        "risk_rows": lines.iter().filter(|l| has_risk(l.psi)).count(),
        "sectors": sectors.iter().map(|(k, v)| (k.clone(), v.iter().filter(|&&p| has_risk(p)).count())).collect::<BTreeMap<_, _>>(),
        "guarded_schools": guarded,
        "warnings": warnings,
    });
    write_json(&staging.path("summary.json"), &summary)?;
    if args.report == Some(ReportFormat::Html) {
        let html = score_report(&lines, table.as_ref().map(|t| &t.bandwidths), &sectors);
        let path = staging.path("report.html");
        std::fs::write(&path, html).map_err(|e| Error::io(path, e))?;
    }
    let out = staging.commit(&manifest)?;
    let mut summary = summary;
    summary["out"] = out.display().to_string().into();
    Ok(summary)
}

/// Oracle sidecar written by `synth`: tie-breaker distributions and each
/// applicant's distribution group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateSidecar {
    pub cdfs: CdfFamily,
    pub groups: BTreeMap<ApplicantId, usize>,
}

pub const TEMPLATE: &str = "template.json";

fn template_for(loaded: &Loaded, dir: &Path, manifest: &mut RunManifest) -> Result<MarketTemplate> {
    let path = dir.join(TEMPLATE);
    if !path.exists() {
        return Ok(MarketTemplate::new(loaded.market.clone(), CdfFamily::uniform()));
    }
    manifest.inputs.push(InputFile::hash(&path)?);
    let sidecar: TemplateSidecar = read_json(&path)?;
    let groups = loaded.market.applicants.iter().map(|a| sidecar.groups.get(&a.id).copied()).collect();
    Ok(MarketTemplate { market: loaded.market.clone(), groups, cdfs: sidecar.cdfs })
}

#[derive(Debug, Clone, Default, Serialize)]
struct OracleSummary {
    draws: u32,
    delta: f64,
    seed: u64,
    min_occupancy: u64,
    z: f64,
    /// Distinct (type, classification) cells in the reference scores.
    reference_cells: usize,
    /// Of those, cells the oracle visited at least `min_occupancy` times.
    occupied_cells: usize,
    compared: usize,
    failures: usize,
    failure_rate: f64,
    sup_deviation: f64,
    sup_se: f64,
    max_z: f64,
    plug_in: Option<PlugInSummary>,
}

#[derive(Debug, Clone, Default, Serialize)]
struct PlugInSummary {
    compared: usize,
    failures: usize,
    sup_deviation: f64,
}

fn oracle(args: &OracleArgs, argv: &[String]) -> Result<Value> {
    let loaded = load(&args.market)?;
    let mut manifest = manifest_for("oracle", argv, &loaded);
    manifest.seed = Some(args.seed);
    let template = template_for(&loaded, &args.market.dir, &mut manifest)?;
    let market = &loaded.market;

    let (lines, per_school) = match &args.against {
        Some(path) => {
            manifest.inputs.push(InputFile::hash(path)?);
            let bw = path.with_file_name(files::BANDWIDTHS);
            let per_school = if bw.exists() {
                manifest.inputs.push(InputFile::hash(&bw)?);
                read_bandwidths(&bw)?
            } else {
                BTreeMap::new()
            };
            (read_scores(path)?, per_school)
        }
        None => {
            let outcome = run_da(market)?;
            let table = estimate_local_score(market, &outcome, &BandwidthSpec::Uniform(args.delta))?;
            let per_school = table.bandwidths.iter().map(|(s, b)| (*s, b.delta)).collect();
            (table.rows.iter().map(ScoreLine::from).collect(), per_school)
        }
    };
    manifest.bandwidths = Some(if per_school.is_empty() { fmt_f64(args.delta) } else { "per school".into() });
    manifest.parameters = json!({
        "draws": args.draws, "delta": args.delta, "min_occupancy": args.min_occupancy,
        "z": args.z, "plug_in": args.plug_in,
    });
    let staging = Staging::new(&args.out)?;

    // reference scores per (type, classification)
    let mut by_applicant: BTreeMap<ApplicantId, Vec<&ScoreLine>> = BTreeMap::new();
    for l in &lines {
        by_applicant.entry(l.applicant).or_default().push(l);
    }
    let mut reference: BTreeMap<(&ApplicantType, Vec<Class>), Vec<f64>> = BTreeMap::new();
    for a in &market.applicants {
        let rows = by_applicant.remove(&a.id).unwrap_or_default();
        let schools: Vec<SchoolId> = rows.iter().map(|l| l.school).collect();
        if schools != a.kind.preferences {
            return Err(Error::Usage(format!(
                "scores of applicant {} do not follow the preference list",
                a.id
            )));
        }
        if schools.is_empty() {
            continue;
        }
        let classes = rows.iter().map(|l| l.class).collect();
        reference.entry((&a.kind, classes)).or_insert_with(|| rows.iter().map(|l| l.psi).collect());
    }
    if let Some(id) = by_applicant.keys().next() {
        return Err(Error::Usage(format!("scores mention unknown applicant {id}")));
    }

    let config = OracleConfig {
        draws: args.draws,
        delta: args.delta,
        per_school,
        seed: args.seed,
        condition_on_class: true,
        plug_in: args.plug_in,
    };
    let result = mc_score(&template, &config)?;
    let type_index: BTreeMap<&ApplicantType, usize> = result.types.iter().enumerate().map(|(k, t)| (t, k)).collect();
    let cells: HashMap<(usize, &[Class]), &localscore_sim::OracleCell> =
        result.cells.iter().map(|c| ((c.kind, c.classes.as_slice()), c)).collect();

    let mut summary = OracleSummary {
        draws: args.draws,
        delta: args.delta,
        seed: args.seed,
        min_occupancy: args.min_occupancy,
        z: args.z,
        reference_cells: reference.len(),
        plug_in: args.plug_in.then(PlugInSummary::default),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for ((kind, classes), psi) in &reference {
        let Some(cell) = type_index.get(kind).and_then(|&k| cells.get(&(k, classes.as_slice()))) else {
            continue;
        };
        if cell.occupancy < args.min_occupancy {
            continue;
        }
        summary.occupied_cells += 1;
        let code: String = classes.iter().map(|c| c.code()).collect();
        for (k, &want) in psi.iter().enumerate() {
            let freq = cell.frequency(k);
            let dev = (freq - want).abs();
            let se = comparison_se(freq, want, cell.occupancy);
            let z = if se > 0.0 { dev / se } else if dev > 0.0 { f64::INFINITY } else { 0.0 };
            summary.compared += 1;
            if z > args.z {
                summary.failures += 1;
            }
            summary.max_z = summary.max_z.max(z);
            if dev > summary.sup_deviation {
                summary.sup_deviation = dev;
                summary.sup_se = se;
            }
            let mut row = vec![
                cell.kind.to_string(),
                code.clone(),
                kind.preferences[k].to_string(),
                cell.occupancy.to_string(),
                fmt_f64(freq),
                fmt_f64(want),
                fmt_f64(se),
            ];
            if let Some(p) = summary.plug_in.as_mut() {
                let mean = cell.plug_in_mean(k);
                let pdev = (freq - mean).abs();
                let pse = comparison_se(freq, mean, cell.occupancy);
                p.compared += 1;
                if pdev > args.z * pse && pdev > 0.0 {
                    p.failures += 1;
                }
                p.sup_deviation = p.sup_deviation.max(pdev);
                row.push(fmt_f64(mean));
            }
            rows.push(row);
        }
    }
    summary.failure_rate = if summary.compared == 0 { 0.0 } else { summary.failures as f64 / summary.compared as f64 };
    let mut header = vec!["type", "classes", "school_id", "occupancy", "frequency", "psi", "se"];
    if args.plug_in {
        header.push("plug_in_mean");
    }
    write_table(&staging.path("cells.csv"), &header, &rows)?;
    write_json(&staging.path("oracle.json"), &summary)?;
    let out = staging.commit(&manifest)?;
    let mut value = serde_json::to_value(&summary).map_err(|e| Error::Usage(e.to_string()))?;
    value["out"] = out.display().to_string().into();
    Ok(value)
}

#[derive(Debug, Deserialize)]
struct MixedPreset {
    n: usize,
    programs: usize,
    screened_share: f64,
    seed: u64,
}

/// A full synthetic config, or `{"mixed": {n, programs, screened_share,
/// seed}, ...}` where the remaining keys override fields of the preset.
pub fn synth_config(value: Value, path: &Path) -> Result<SynthConfig> {
    let bad = |e: serde_json::Error| Error::format(path, None, e.to_string());
    let Value::Object(mut map) = value else {
        return Err(Error::format(path, None, "expected a JSON object"));
    };
    let Some(preset) = map.remove("mixed") else {
        return serde_json::from_value(Value::Object(map)).map_err(bad);
    };
    let p: MixedPreset = serde_json::from_value(preset).map_err(bad)?;
    let base = SynthConfig::mixed(p.n, p.programs, p.screened_share, p.seed);
    let mut merged = serde_json::to_value(base).map_err(bad)?;
    for (k, v) in map {
        merged[k] = v;
    }
    serde_json::from_value(merged).map_err(bad)
}

#[derive(Debug, Deserialize)]
struct SweepFile {
    /// Synthetic config with a type pool.
    economy: Value,
    #[serde(default)]
    sizes: Vec<usize>,
    /// Explicit `(N, delta)` steps; defaults to `delta = N^(-1/3)` over `sizes`.
    #[serde(default)]
    schedule: Vec<(usize, f64)>,
    draws: u32,
    seed: u64,
    #[serde(default)]
    min_occupancy: Option<u64>,
}

fn sweep(path: &Path, out: Option<&Path>, argv: &[String]) -> Result<Value> {
    let file: SweepFile = read_json(path)?;
    let economy = synth_config(file.economy, path)?.economy()?;
    let mut config = if file.schedule.is_empty() {
        SweepConfig::cube_root(&file.sizes, file.draws, file.seed)
    } else {
        SweepConfig { schedule: file.schedule, draws: file.draws, seed: file.seed, min_occupancy: 1000 }
    };
    if let Some(m) = file.min_occupancy {
        config.min_occupancy = m;
    }
    let staging = out.map(Staging::new).transpose()?;
    let report = convergence_sweep(&economy, &config)?;
    let mut value = serde_json::to_value(&report).map_err(|e| Error::Usage(e.to_string()))?;
    value["decreasing"] = report.is_decreasing().into();
    if let Some(staging) = staging {
        let mut manifest = RunManifest::new("sweep", argv);
        manifest.inputs.push(InputFile::hash(path)?);
        manifest.seed = Some(config.seed);
        manifest.parameters = serde_json::to_value(&config).map_err(|e| Error::Usage(e.to_string()))?;
        write_json(&staging.path("sweep.json"), &value)?;
        let rows: Vec<Vec<String>> = report
            .steps
            .iter()
            .map(|s| {
                vec![
                    s.n.to_string(),
                    fmt_f64(s.delta),
                    fmt_f64(s.sup_deviation),
                    fmt_f64(s.sup_se),
                    s.compared.to_string(),
                    s.unreachable.to_string(),
                ]
            })
            .collect();
        write_table(
            &staging.path("sweep.csv"),
            &["n", "delta", "sup_deviation", "sup_se", "compared", "unreachable"],
            &rows,
        )?;
        let dir = staging.commit(&manifest)?;
        value["out"] = dir.display().to_string().into();
    }
    Ok(value)
}

struct Fitted {
    loaded: Loaded,
    manifest: RunManifest,
    outcome: MatchOutcome,
    frame: EstimationFrame,
}

fn fit_frame(
    command: &str,
    market_args: &MarketArgs,
    bandwidth: &BandwidthArgs,
    args: &FrameArgs,
    argv: &[String],
) -> Result<Fitted> {
    let loaded = load(market_args)?;
    let mut manifest = manifest_for(command, argv, &loaded);
    let spec = bandwidth_spec(&bandwidth.bandwidths, &mut manifest)?;
    let outcome = run_da(&loaded.market)?;
    let table: ScoreTable = estimate_local_score(&loaded.market, &outcome, &spec)?;
    let frame_spec = FrameSpec {
        sectors: args.instruments.clone(),
        rv_controls: !args.no_rv_controls,
        cohort: args.cohort.clone(),
        covariates: args.controls.clone(),
        rounding: args.rounding,
        keep_all: args.keep_all,
    };
    let frame = EstimationFrame::build(&loaded.market, &outcome, &table, &frame_spec)?;
    manifest.parameters = json!({ "frame": frame_spec });
    Ok(Fitted { loaded, manifest, outcome, frame })
}

fn coefficient_rows(model: &str, fit: &OlsFit, rows: &mut Vec<Vec<String>>) {
    for c in &fit.coefficients {
        rows.push(vec![
            model.to_string(),
            c.name.clone(),
            fmt_f64(c.estimate),
            fmt_f64(c.se_robust),
            fmt_f64(c.se_homoskedastic),
            fit.n.to_string(),
            fit.k.to_string(),
        ]);
    }
}

fn balance(args: &BalanceArgs, argv: &[String]) -> Result<Value> {
    let staging = Staging::new(&args.out)?;
    let mut fitted = fit_frame("balance", &args.market, &args.bandwidth, &args.frame, argv)?;
    fitted.manifest.parameters["covariates"] = json!(args.covariates);
    let market = &fitted.loaded.market;
    let d = assignment_dummy(market, &fitted.outcome, &args.frame.instruments[0])?;
    let table = balance_regression(&fitted.frame, market, &d, &args.covariates)?;
    let z = |c: &localscore_econometrics::Coefficient| c.estimate / c.se_robust;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|b| {
            let (g, r) = (b.gamma(), b.raw_difference());
            vec![
                b.covariate.clone(),
                fmt_f64(g.estimate),
                fmt_f64(g.se_robust),
                fmt_f64(g.se_homoskedastic),
                fmt_f64(z(g)),
                b.controlled.n.to_string(),
                fmt_f64(r.estimate),
                fmt_f64(r.se_robust),
                fmt_f64(z(r)),
                b.raw.n.to_string(),
            ]
        })
        .collect();
    let header = [
        "covariate", "gamma", "se_robust", "se_homoskedastic", "z", "n",
        "raw_difference", "raw_se_robust", "raw_z", "raw_n",
    ];
    write_table(&staging.path("balance.csv"), &header, &rows)?;
    write_json(&staging.path("balance.json"), &table)?;
    let out = staging.commit(&fitted.manifest)?;
    Ok(json!({
        "out": out.display().to_string(),
        "risk_sample": fitted.frame.len(),
        "balance": table.iter().map(|b| json!({
            "covariate": b.covariate, "z": z(b.gamma()), "raw_z": z(b.raw_difference()),
        })).collect::<Vec<_>>(),
    }))
}

fn run_estimate(args: &EstimateArgs, argv: &[String]) -> Result<Value> {
    let staging = Staging::new(&args.out)?;
    let mut fitted = fit_frame("estimate", &args.market, &args.bandwidth, &args.frame, argv)?;
    fitted.manifest.parameters["outcome"] = json!(args.outcome);
    fitted.manifest.parameters["treatments"] = json!(args.treatments);
    let report = estimate(&fitted.frame, &fitted.loaded.market, &args.outcome, &args.treatments)?;

    let mut rows = Vec::new();
    for fs in &report.iv.first_stage {
        coefficient_rows(&format!("first_stage:{}", fs.treatment), &fs.fit, &mut rows);
    }
    let iv_fit = OlsFit {
        coefficients: report.iv.coefficients.clone(),
        n: report.iv.n,
        k: report.iv.k,
        dropped: report.iv.dropped.clone(),
        rss: f64::NAN,
        condition: f64::NAN,
    };
    coefficient_rows("2sls", &iv_fit, &mut rows);
    coefficient_rows("ols_controlled", &report.iv.ols, &mut rows);
    coefficient_rows("ols", &report.benchmark, &mut rows);
    write_table(
        &staging.path("estimates.csv"),
        &["model", "variable", "estimate", "se_robust", "se_homoskedastic", "n", "k"],
        &rows,
    )?;
    let fs_rows: Vec<Vec<String>> = report
        .iv
        .first_stage
        .iter()
        .map(|fs| {
            let weak = report.iv.weak_instruments.contains(&fs.treatment);
            vec![fs.treatment.clone(), fmt_f64(fs.f_statistic), u8::from(weak).to_string()]
        })
        .collect();
    write_table(&staging.path("first_stage.csv"), &["treatment", "f_statistic", "weak"], &fs_rows)?;
    write_json(&staging.path("estimate.json"), &report)?;
    let out = staging.commit(&fitted.manifest)?;
    let coef = |c: &localscore_econometrics::Coefficient| json!({ "name": c.name, "estimate": c.estimate, "se": c.se_robust });
    Ok(json!({
        "out": out.display().to_string(),
        "2sls": report.iv.coefficients.iter().map(coef).collect::<Vec<_>>(),
        "ols": report.benchmark.coefficients.iter().map(coef).collect::<Vec<_>>(),
        "weak_instruments": report.iv.weak_instruments,
    }))
}

fn synth(path: &Path, out: &Path, argv: &[String]) -> Result<Value> {
    let config = synth_config(read_json(path)?, path)?;
    let staging = Staging::new(out)?;
    let (market, truth) = generate(&config)?;
    write_market(staging.dir(), &market)?;
    let template = config.template(market.clone(), &truth)?;
    let sidecar = TemplateSidecar {
        cdfs: template.cdfs,
        groups: market
            .applicants
            .iter()
            .zip(&template.groups)
            .filter_map(|(a, g)| g.map(|g| (a.id, g)))
            .collect(),
    };
    write_json(&staging.path(TEMPLATE), &sidecar)?;
    write_json(&staging.path("truth.json"), &truth)?;
    write_json(&staging.path("config.json"), &config)?;
    let mut manifest = RunManifest::new("synth", argv);
    manifest.inputs.push(InputFile::hash(path)?);
    manifest.seed = Some(config.seed);
    let dir = staging.commit(&manifest)?;
    Ok(json!({
        "out": dir.display().to_string(),
        "applicants": market.applicants.len(),
        "schools": market.schools.len(),
    }))
}

fn rerun(path: &Path, out: &Path) -> Result<Value> {
    let manifest: RunManifest = read_json(path)?;
    if manifest.tool != env!("CARGO_PKG_NAME") {
        return Err(Error::Usage(format!("manifest was written by {}", manifest.tool)));
    }
    let mut argv = manifest.argv.clone();
    argv.push("--out".into());
    argv.push(out.display().to_string());
    let cli = Cli::try_parse_from(std::iter::once("localscore".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| Error::Usage(e.to_string()))?;
    if matches!(cli.command, Command::Rerun { .. }) {
        return Err(Error::Usage("a rerun manifest cannot point at another rerun".into()));
    }
    execute(cli.command, &argv)
}
