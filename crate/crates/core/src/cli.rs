//! Command-line front end.
//!
//! Exit codes: 0 success, 2 validation or configuration error, 3 falsified
//! IV model, 4 I/O failure. Output files are written to a temporary file in
//! the target directory and renamed into place.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde_json::{json, Value};

use crate::bounds::{bounds_profile_with, BalkePearl, BoundsError, BoundsProfile, CrossingPolicy};
use crate::criteria::{
    decisions_for_profile, policy_from_preferences, randomized_worst_regret, ActionChoice,
    Preferences,
};
use crate::diagnostics::{
    envelope_worst_case, named_rule_worst_case, policy_worst_case, theorem1_bound, NamedRule,
};
use crate::ingest::{self, Coding, IngestError, SmoothingSpec};
use crate::model::{ModelError, Policy, PreferenceSpec, Sign, StudyTable};
use crate::oracle::{sharpness_audit_with, validity_audit_with, AuditReport, LatentSampling};
use crate::simulate::{self, implied_study, paradox_dgp, regret_of, DgpSpec, SimError, Strategy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_FALSIFIED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Falsified(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Falsified(_) => EXIT_FALSIFIED,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Falsified(m) | CliError::Io(m) => m,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        match e.root() {
            BoundsError::FalsifiedIvModel { .. } => CliError::Falsified(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Bounds(b) => b.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<crate::criteria::CriteriaError> for CliError {
    fn from(e: crate::criteria::CriteriaError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "pid-engine",
    version,
    about = "Treatment decisions from instrumental-variable bounds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-stratum bounds on both counterfactual means and the contrast.
    Bounds(BoundsArgs),
    /// Apply a decision criterion per stratum and emit the policy.
    Decide(DecideArgs),
    /// Worst-case utility, regret and misclassification of a rule or policy.
    Diagnose(DiagnoseArgs),
    /// Closed-form strategy comparison and seeded unit-level draws.
    Simulate(SimulateArgs),
    /// Estimate a study table from unit records.
    Estimate(EstimateArgs),
    /// Validity and sharpness audits of the closed-form bounds.
    Oracle(OracleArgs),
    /// Switch a baseline policy where the bounds identify the better arm.
    Improve(ImproveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Study JSON document (`-` for stdin).
    #[arg(long, conflicts_with = "records")]
    pub table: Option<PathBuf>,
    /// Unit records CSV (`-` for stdin).
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Binary coding of the records file: pm1 or 01.
    #[arg(long, default_value = "pm1")]
    pub coding: String,
    /// Additive smoothing per cell when estimating from records.
    #[arg(long, default_value_t = 0.5)]
    pub pseudo_count: f64,
    /// Collapse crossed bounds to their midpoint instead of failing.
    #[arg(long)]
    pub clamp: bool,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output path; stdout when absent or `-`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Criterion for every stratum, e.g. minimax-regret or hurwicz:0.3.
    #[arg(
        long,
        required_unless_present = "preferences",
        conflicts_with = "preferences"
    )]
    pub criterion: Option<String>,
    /// CSV `stratum,criterion` with one criterion per stratum.
    #[arg(long)]
    pub preferences: Option<PathBuf>,
    /// Action taken on ties: -1 or +1.
    #[arg(long, default_value = "-1", allow_hyphen_values = true)]
    pub tie_break: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Envelope,
    Maximin,
    Minimax,
    Randomized,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Named rule to evaluate.
    #[arg(
        long,
        value_enum,
        required_unless_present = "policy",
        conflicts_with = "policy"
    )]
    pub rule: Option<RuleArg>,
    /// Policy CSV to evaluate.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimModel {
    /// The two-stratum paradox model.
    Paradox,
    /// A model read from a JSON file.
    Dgp { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(subcommand)]
    pub model: SimModel,
    /// Units to draw; 0 gives closed-form output only.
    #[arg(long, default_value_t = 0, global = true)]
    pub n: usize,
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    /// Directory for strategy.csv, summary.json, study.json and records.csv.
    /// Without it the records (n > 0) or the strategy table go to stdout.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value = "pm1", global = true)]
    pub coding: String,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Unit records CSV (`-` for stdin).
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value = "pm1")]
    pub coding: String,
    #[arg(long, default_value_t = 0.5)]
    pub pseudo_count: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuditKind {
    Validity,
    Sharpness,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(value_enum)]
    pub kind: AuditKind,
    #[arg(long)]
    pub samples: u64,
    #[arg(long)]
    pub seed: u64,
    /// Sparse latent laws with at most this many active response types.
    #[arg(long)]
    pub stress: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImproveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Deterministic baseline policy CSV.
    #[arg(long)]
    pub baseline: PathBuf,
}

fn open_input(path: &Path) -> Result<Box<dyn Read>, CliError> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin().lock()));
    }
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(Box::new(BufReader::new(f)))
}

/// Write `bytes` to `path` atomically, or to stdout when `path` is `None` or `-`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        None => write_stdout(bytes),
        Some(p) if p == Path::new("-") => write_stdout(bytes),
        Some(p) => write_atomic(p, bytes),
    }
}

fn write_stdout(bytes: &[u8]) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        w.write_all(bytes)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> Result<(), IngestError>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes(v: &impl serde::Serialize) -> Result<Vec<u8>, CliError> {
    let mut buf = serde_json::to_vec_pretty(v).map_err(|e| CliError::Validation(e.to_string()))?;
    buf.push(b'\n');
    Ok(buf)
}

fn parse_coding(s: &str) -> Result<Coding, CliError> {
    Ok(s.parse::<Coding>()?)
}

fn load_study(input: &InputArgs) -> Result<StudyTable, CliError> {
    match (&input.table, &input.records) {
        (Some(path), None) => Ok(ingest::read_study(open_input(path)?)?),
        (None, Some(path)) => {
            let coding = parse_coding(&input.coding)?;
            let records = ingest::read_records(open_input(path)?, coding)?;
            let smoothing = SmoothingSpec {
                pseudo_count: input.pseudo_count,
            };
            Ok(ingest::estimate_study(&records, smoothing)?)
        }
        _ => Err(CliError::Validation(
            "one of --table or --records is required".into(),
        )),
    }
}

fn load_profile(input: &InputArgs) -> Result<BoundsProfile, CliError> {
    let study = load_study(input)?;
    let crossing = if input.clamp {
        CrossingPolicy::Clamp
    } else {
        CrossingPolicy::Fail
    };
    Ok(bounds_profile_with(&study, &BalkePearl, crossing)?)
}

fn parse_tie(s: &str) -> Result<Sign, CliError> {
    s.parse::<Sign>()
        .map_err(|_| CliError::Validation(format!("invalid tie-break {s:?} (expected -1 or +1)")))
}

fn parse_preference(s: &str) -> Result<PreferenceSpec, CliError> {
    s.parse::<PreferenceSpec>()
        .map_err(|e| CliError::Validation(e.to_string()))
}

fn read_preferences(path: &Path) -> Result<Preferences, CliError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(open_input(path)?);
    let header = rdr.headers().map_err(IngestError::from)?.clone();
    if header.iter().map(str::trim).ne(["stratum", "criterion"]) {
        return Err(CliError::Validation(format!(
            "{}: expected header stratum,criterion",
            path.display()
        )));
    }
    let mut map = IndexMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(IngestError::from)?;
        if rec.len() != 2 {
            return Err(CliError::Validation(format!(
                "{}: malformed row {:?}",
                path.display(),
                rec
            )));
        }
        map.insert(rec[0].trim().into(), parse_preference(rec[1].trim())?);
    }
    Ok(Preferences::PerStratum(map))
}

fn policy_json(policy: &Policy) -> Value {
    match policy {
        Policy::Deterministic(m) => json!({
            "kind": "deterministic",
            "actions": m.iter().map(|(k, a)| (k.to_string(), json!(a.value()))).collect::<serde_json::Map<_, _>>(),
        }),
        Policy::Stochastic(m) => json!({
            "kind": "stochastic",
            "p_plus": m.iter().map(|(k, p)| (k.to_string(), json!(p))).collect::<serde_json::Map<_, _>>(),
        }),
    }
}

fn cmd_bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let profile = load_profile(&args.input)?;
    let bytes = match args.output.format {
        Format::Csv => render(|b| ingest::write_bounds_csv(b, &profile))?,
        Format::Json => json_bytes(&profile)?,
    };
    emit(args.output.out.as_deref(), &bytes)
}

fn cmd_decide(args: &DecideArgs) -> Result<(), CliError> {
    let tie = parse_tie(&args.tie_break)?;
    let prefs = match (&args.criterion, &args.preferences) {
        (Some(c), _) => Preferences::Broadcast(parse_preference(c)?),
        (None, Some(p)) => read_preferences(p)?,
        (None, None) => return Err(CliError::Validation("--criterion is required".into())),
    };
    let profile = load_profile(&args.input)?;
    let decisions = decisions_for_profile(&profile, &prefs, tie)?;
    let mut err = io::stderr().lock();
    for (id, pref, d) in &decisions {
        let shown = match d.choice {
            ActionChoice::Stochastic { p_plus } => {
                format!("p_plus = {}", crate::format::sig9(p_plus))
            }
            ActionChoice::Deterministic(a) => a.to_string(),
            ActionChoice::Tie { action, note } => format!("{action} (tie: {note})"),
        };
        let _ = writeln!(err, "stratum {id}: {pref} -> {shown} [{}]", d.branch);
    }
    let policy = policy_from_preferences(&profile, &prefs, tie)?;
    let bytes = match args.output.format {
        Format::Csv => render(|b| ingest::write_policy_csv(b, &policy))?,
        Format::Json => {
            let rationale: Vec<Value> = decisions
                .iter()
                .map(|(id, pref, d)| {
                    json!({ "stratum": id, "criterion": pref.to_string(), "p_plus": d.choice.p_plus(), "branch": d.branch })
                })
                .collect();
            let mut doc = policy_json(&policy);
            doc["rationale"] = Value::Array(rationale);
            json_bytes(&doc)?
        }
    };
    emit(args.output.out.as_deref(), &bytes)
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<(), CliError> {
    let profile = load_profile(&args.input)?;
    let report = match (args.rule, &args.policy) {
        (Some(RuleArg::Envelope), _) => envelope_worst_case(&profile),
        (Some(RuleArg::Maximin), _) => named_rule_worst_case(NamedRule::Maximin, &profile),
        (Some(RuleArg::Minimax), _) => named_rule_worst_case(NamedRule::Minimax, &profile),
        (Some(RuleArg::Randomized), _) => {
            named_rule_worst_case(NamedRule::RandomizedMinimax, &profile)
        }
        (None, Some(path)) => {
            let policy = ingest::read_policy_csv(open_input(path)?)?;
            policy_worst_case(&policy, &profile)?
        }
        (None, None) => {
            return Err(CliError::Validation(
                "--rule or --policy is required".into(),
            ))
        }
    };
    emit(args.out.as_deref(), &json_bytes(&report)?)
}

fn simulate_summary(
    dgp: &DgpSpec,
    name: &str,
    n: usize,
    seed: u64,
) -> Result<(Value, simulate::StrategyComparison), CliError> {
    let table = simulate::strategy_table(dgp)?;
    let profile = &table.profile;
    let mut regrets = serde_json::Map::new();
    for s in Strategy::ALL {
        let policy = Policy::Deterministic(
            table
                .rows
                .iter()
                .filter(|r| r.strategy == s)
                .map(|r| (r.stratum.clone(), r.action))
                .collect(),
        );
        regrets.insert(s.name().to_owned(), json!(regret_of(dgp, &policy)?));
    }
    let randomized = policy_from_preferences(
        profile,
        &Preferences::Broadcast(PreferenceSpec::RandomizedMinimax),
        Sign::Minus,
    )?;
    regrets.insert(
        "randomized-minimax".into(),
        json!(regret_of(dgp, &randomized)?),
    );
    let per_stratum: Vec<Value> = profile
        .entries()
        .iter()
        .map(|e| {
            let (mu_minus, mu_plus) = simulate::true_arm_means(dgp, &e.stratum).unwrap_or_default();
            json!({
                "stratum": e.stratum,
                "weight": e.weight,
                "bounds": e.bounds,
                "mu_minus": mu_minus,
                "mu_plus": mu_plus,
                "randomized_regret_bound": randomized_worst_regret(e.bounds.cate()),
            })
        })
        .collect();
    let summary = json!({
        "model": name,
        "n": n,
        "seed": seed,
        "strata": per_stratum,
        "pooled_cate": table.pooled_cate,
        "regret": regrets,
        "theorem1_bound": theorem1_bound(profile),
    });
    Ok((summary, table))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let coding = parse_coding(&args.coding)?;
    let (dgp, name) = match &args.model {
        SimModel::Paradox => (paradox_dgp(), "paradox".to_owned()),
        SimModel::Dgp { file } => {
            let dgp: DgpSpec =
                serde_json::from_reader(open_input(file)?).map_err(|e| match e.is_io() {
                    true => io_err(file, e),
                    false => CliError::Validation(format!("{}: {e}", file.display())),
                })?;
            dgp.validate()?;
            (dgp, file.display().to_string())
        }
    };
    let (summary, table) = simulate_summary(&dgp, &name, args.n, args.seed)?;
    let strategy = render(|b| ingest::write_strategy_csv(b, &table))?;
    let records = if args.n > 0 {
        let r = simulate::draw_dataset(&dgp, args.n, args.seed)?;
        Some(render(|b| ingest::write_records(b, &r, coding))?)
    } else {
        None
    };
    match &args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            write_atomic(&dir.join("strategy.csv"), &strategy)?;
            write_atomic(&dir.join("summary.json"), &json_bytes(&summary)?)?;
            let study = implied_study(&dgp)?;
            let study_bytes = render(|b| ingest::write_study(b, &study))?;
            write_atomic(&dir.join("study.json"), &study_bytes)?;
            if let Some(r) = &records {
                write_atomic(&dir.join("records.csv"), r)?;
            }
            Ok(())
        }
        None => write_stdout(records.as_deref().unwrap_or(&strategy)),
    }
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let coding = parse_coding(&args.coding)?;
    let records = ingest::read_records(open_input(&args.records)?, coding)?;
    let study = ingest::estimate_study(
        &records,
        SmoothingSpec {
            pseudo_count: args.pseudo_count,
        },
    )?;
    let bytes = render(|b| ingest::write_study(b, &study))?;
    emit(args.out.as_deref(), &bytes)
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), CliError> {
    let sampling = match args.stress {
        None => LatentSampling::Uniform,
        Some(0) => return Err(CliError::Validation("--stress must be at least 1".into())),
        Some(k) => LatentSampling::Sparse { max_k: k.min(16) },
    };
    let report: AuditReport = match args.kind {
        AuditKind::Validity => validity_audit_with(args.samples, args.seed, sampling),
        AuditKind::Sharpness => sharpness_audit_with(args.samples, args.seed, sampling),
    };
    eprintln!(
        "{:?} audit: {} samples, {} violations",
        args.kind, report.samples, report.violations
    );
    emit(args.out.as_deref(), &json_bytes(&report)?)
}

fn cmd_improve(args: &ImproveArgs) -> Result<(), CliError> {
    let profile = load_profile(&args.input)?;
    let baseline = ingest::read_policy_csv(open_input(&args.baseline)?)?;
    let report = simulate::improve_policy(&baseline, &profile)?;
    eprintln!(
        "{} switches; {} strata with L > 0, {} with U < 0",
        report.switches.len(),
        report.lower_positive,
        report.upper_negative
    );
    let bytes = match args.output.format {
        Format::Csv => render(|b| ingest::write_policy_csv(b, &report.policy()))?,
        Format::Json => json_bytes(&report)?,
    };
    emit(args.output.out.as_deref(), &bytes)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::Decide(a) => cmd_decide(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Improve(a) => cmd_improve(a),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn parse_errors_exit_2() {
        assert_eq!(run(["pid-engine", "bounds", "--bogus"]), EXIT_VALIDATION);
        assert_eq!(
            run(["pid-engine", "decide", "--table", "x.json"]),
            EXIT_VALIDATION
        );
        assert_eq!(run(["pid-engine", "bounds"]), EXIT_VALIDATION);
    }

    #[test]
    fn missing_file_exits_4() {
        assert_eq!(
            run(["pid-engine", "bounds", "--table", "/nonexistent/study.json"]),
            EXIT_IO
        );
    }

    #[test]
    fn tie_parse() {
        assert_eq!(parse_tie("-1").unwrap(), Sign::Minus);
        assert_eq!(parse_tie("+1").unwrap(), Sign::Plus);
        assert!(parse_tie("0").is_err());
    }
}
