//! `epiwatch` command-line front end.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use epiwatch::epi_metrics::{
    rank_states, CaseCrossTabs, CohortFilter, ComorbidityProfile, ComorbiditySubcohort, GroupBy,
    PositivityMode, RankMetric, SeverityCriterion, StratifiedAccumulator, FATALITY_NOTE,
};
use epiwatch::fixtures::{
    generate_epi_fixture, generate_genomic_fixture, preset, write_random_sveerv, EpiSpec,
    GenomicSpec, PresetKind,
};
use epiwatch::genomics::{GenomicTally, StateSummaryAccumulator, VariantCatalog};
use epiwatch::ingest::{
    ingest_gisaid_with, ingest_sveerv, open_shard, plan_shards, sniff_delimiter, validate_report,
    Dialect, IngestError, IngestStats, TextEncoding,
};
use epiwatch::report::{
    render, render_ranking, render_severity_stack, Format, ReportData, TableId,
};
use epiwatch::schema::{PatientRecord, Sex};

#[derive(Parser)]
#[command(
    name = "epiwatch",
    version,
    about = "Surveillance and genomic report tables from open COVID-19 data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an input file and summarise accepted and rejected rows.
    Validate(ValidateArgs),
    /// Case tables and stratum metrics from a SVEERV extract.
    EpiReport(EpiReportArgs),
    /// Variant tables from a GISAID metadata export.
    GenomicReport(GenomicArgs),
    /// Rank states by a metric, highest first.
    Rank(RankArgs),
    /// Per-state fatality against positivity.
    Scatter(EpiArgs),
    /// Per-state mild, moderate and severe shares of positives.
    Severity(EpiArgs),
    /// Write a synthetic input file.
    FixtureGen(FixtureArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Sveerv,
    Gisaid,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Utf8,
    Latin1,
    Auto,
}

impl From<EncodingArg> for TextEncoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Utf8 => TextEncoding::Utf8,
            EncodingArg::Latin1 => TextEncoding::Latin1,
            EncodingArg::Auto => TextEncoding::Auto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SeverityArg {
    IntubationOnly,
    IcuOnly,
    IcuAndIntubation,
    IcuOrIntubation,
}

impl From<SeverityArg> for SeverityCriterion {
    fn from(s: SeverityArg) -> Self {
        match s {
            SeverityArg::IntubationOnly => SeverityCriterion::IntubationOnly,
            SeverityArg::IcuOnly => SeverityCriterion::IcuOnly,
            SeverityArg::IcuAndIntubation => SeverityCriterion::IcuAndIntubation,
            SeverityArg::IcuOrIntubation => SeverityCriterion::IcuOrIntubation,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PositivityArg {
    /// Positives over positives plus every non-positive class.
    AggregateNegative,
    /// Positives over positives plus laboratory negatives.
    StrictLabNegative,
}

impl From<PositivityArg> for PositivityMode {
    fn from(p: PositivityArg) -> Self {
        match p {
            PositivityArg::AggregateNegative => PositivityMode::AggregateNegative,
            PositivityArg::StrictLabNegative => PositivityMode::StrictLabNegative,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Tsv,
    Json,
    Markdown,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Tsv => Format::Tsv,
            FormatArg::Json => Format::Json,
            FormatArg::Markdown => Format::Markdown,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SexArg {
    Female,
    Male,
    Unspecified,
}

impl From<SexArg> for Sex {
    fn from(s: SexArg) -> Self {
        match s {
            SexArg::Female => Sex::Female,
            SexArg::Male => Sex::Male,
            SexArg::Unspecified => Sex::Unspecified,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SubcohortArg {
    HospitalizedPositive,
    DeathsPositive,
    DeathsIcuIntubated,
}

impl From<SubcohortArg> for ComorbiditySubcohort {
    fn from(s: SubcohortArg) -> Self {
        match s {
            SubcohortArg::HospitalizedPositive => ComorbiditySubcohort::HospitalizedPositive,
            SubcohortArg::DeathsPositive => ComorbiditySubcohort::DeathsPositive,
            SubcohortArg::DeathsIcuIntubated => ComorbiditySubcohort::DeathsIcuIntubated,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Fatality,
    Positivity,
    Tgi3,
}

#[derive(Args)]
struct InputArgs {
    /// Input file(s); `-` reads standard input.
    #[arg(long, short, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Field delimiter; sniffed from the header when omitted.
    #[arg(long)]
    delimiter: Option<char>,
    #[arg(long, value_enum, default_value = "auto")]
    encoding: EncodingArg,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "tsv")]
    format: FormatArg,
    /// Write to this file instead of standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CohortArgs {
    /// Keep only speakers of an indigenous language.
    #[arg(long)]
    indigenous_only: bool,
    /// State codes to keep (comma-separated).
    #[arg(long, value_delimiter = ',')]
    state: Vec<u8>,
    /// Municipality codes to keep (comma-separated).
    #[arg(long, value_delimiter = ',')]
    municipality: Vec<u16>,
    #[arg(long, value_enum, value_delimiter = ',')]
    sex: Vec<SexArg>,
    /// First symptom-onset date to keep (YYYY-MM-DD).
    #[arg(long)]
    onset_from: Option<NaiveDate>,
    /// Last symptom-onset date to keep (YYYY-MM-DD).
    #[arg(long)]
    onset_to: Option<NaiveDate>,
}

#[derive(Args)]
struct EpiArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    cohort: CohortArgs,
    #[arg(long, value_enum, default_value = "icu-and-intubation")]
    severity: SeverityArg,
    #[arg(long, value_enum, default_value = "aggregate-negative")]
    positivity: PositivityArg,
    /// Worker threads for sharded ingestion.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..=256))]
    threads: u16,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct EpiReportArgs {
    #[command(flatten)]
    epi: EpiArgs,
    /// Stratification dimensions: state, municipality, sex, age-group.
    #[arg(long, default_value = "")]
    group_by: String,
    /// Table to emit: metrics, t1 to t7 or comorbidity-profile.
    #[arg(long, default_value = "metrics")]
    table: String,
    #[arg(long, value_enum, default_value = "hospitalized-positive")]
    subcohort: SubcohortArg,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    epi: EpiArgs,
    #[arg(long, value_enum, default_value = "fatality")]
    metric: MetricArg,
}

#[derive(Args)]
struct GenomicArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Table to emit: g3-shares, t8 to t13.
    #[arg(long, default_value = "g3-shares")]
    table: String,
    /// Variant label for per-variant tables.
    #[arg(long, default_value = "Delta")]
    variant: String,
    /// States for t10 to t13 (comma-separated names).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "Puebla,Hidalgo,Veracruz,Oaxaca"
    )]
    states: Vec<String>,
    /// Delimited catalog replacing the built-in variant list.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "sveerv")]
    source: Source,
}

#[derive(Args)]
struct FixtureArgs {
    /// Shipped spec: sveerv-national, gisaid-mexico or a table alias.
    #[arg(long, required_unless_present_any = ["spec", "rows"], conflicts_with_all = ["spec", "rows"])]
    preset: Option<String>,
    /// Marginal-totals spec file (TOML).
    #[arg(long, conflicts_with = "rows")]
    spec: Option<PathBuf>,
    /// Unconstrained random SVEERV rows.
    #[arg(long)]
    rows: Option<u64>,
    /// Overrides the seed in the fixture spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Input kind for `--spec`.
    #[arg(long, value_enum, default_value = "sveerv")]
    source: Source,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate(a) => validate(a),
        Command::EpiReport(a) => epi_report(a),
        Command::GenomicReport(a) => genomic_report(a),
        Command::Rank(a) => rank(a),
        Command::Scatter(a) => {
            let reports = state_reports(&a)?;
            let out = render(
                TableId::G4Scatter,
                ReportData::Strata(&reports),
                a.output.format.into(),
            )
            .map_err(|e| Failure::Data(e.into()))?;
            eprintln!("note: {FATALITY_NOTE}");
            emit(a.output.out.as_deref(), &out)
        }
        Command::Severity(a) => {
            let reports = state_reports(&a)?;
            emit(
                a.output.out.as_deref(),
                &render_severity_stack(&reports, a.output.format.into()),
            )
        }
        Command::FixtureGen(a) => fixture_gen(a),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Outcome {
    match out {
        Some(path) => {
            std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn open(path: &Path) -> Outcome<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::with_capacity(64 * 1024, file)))
}

/// Chooses the delimiter from the flag or the first line of the input.
fn dialect(input: &InputArgs, reader: &mut dyn BufRead) -> Outcome<Dialect> {
    let delimiter = match input.delimiter {
        Some(c) if c.is_ascii() => c as u8,
        Some(c) => {
            return Err(usage(format!(
                "delimiter {c:?} is not a single ASCII character"
            )))
        }
        None => {
            let buf = reader.fill_buf()?;
            let end = buf.iter().position(|&b| b == b'\n').unwrap_or(buf.len());
            sniff_delimiter(&buf[..end])
        }
    };
    Ok(Dialect {
        delimiter,
        encoding: input.encoding.into(),
    })
}

fn nonempty<T: Ord + Copy>(v: &[T]) -> Option<BTreeSet<T>> {
    (!v.is_empty()).then(|| v.iter().copied().collect())
}

fn cohort_filter(c: &CohortArgs) -> Outcome<CohortFilter> {
    let onset_date_range = match (c.onset_from, c.onset_to) {
        (Some(from), Some(to)) if from > to => {
            return Err(usage(format!(
                "--onset-from {from} is after --onset-to {to}"
            )))
        }
        (None, None) => None,
        (from, to) => Some((from.unwrap_or(NaiveDate::MIN), to.unwrap_or(NaiveDate::MAX))),
    };
    Ok(CohortFilter {
        indigenous_only: c.indigenous_only,
        states: nonempty(&c.state),
        municipalities: nonempty(&c.municipality),
        sexes: (!c.sex.is_empty()).then(|| c.sex.iter().map(|&s| Sex::from(s)).collect()),
        onset_date_range,
    })
}

/// Everything an epi command may need from one pass over the input.
struct EpiPass {
    strata: StratifiedAccumulator,
    tabs: CaseCrossTabs,
    profile: ComorbidityProfile,
    subcohort: ComorbiditySubcohort,
    filter: CohortFilter,
    stats: IngestStats,
}

impl EpiPass {
    fn new(filter: &CohortFilter, group_by: GroupBy, subcohort: ComorbiditySubcohort) -> Self {
        EpiPass {
            strata: StratifiedAccumulator::new(filter.clone(), group_by),
            tabs: CaseCrossTabs::default(),
            profile: ComorbidityProfile::default(),
            subcohort,
            filter: filter.clone(),
            stats: IngestStats::default(),
        }
    }

    fn push(&mut self, r: &PatientRecord) {
        self.strata.push(r);
        if self.filter.admits(r) {
            self.tabs.push(r);
            self.profile.push(r, self.subcohort);
        }
    }

    fn consume(&mut self, source: impl Read, dialect: Dialect) -> Outcome {
        let mut reader = ingest_sveerv(source, dialect)?;
        // rejected rows are tallied in the reader's stats
        for r in reader.by_ref().flatten() {
            self.push(&r);
        }
        self.stats.merge(&reader.finish()?);
        Ok(())
    }

    fn merge(&mut self, other: EpiPass) {
        self.strata.merge(other.strata);
        self.tabs.merge(&other.tabs);
        self.profile.merge(&other.profile);
        self.stats.merge(&other.stats);
    }
}

fn epi_pass(a: &EpiArgs, group_by: GroupBy, subcohort: ComorbiditySubcohort) -> Outcome<EpiPass> {
    let filter = cohort_filter(&a.cohort)?;
    let threads = usize::from(a.threads);
    let mut pass = EpiPass::new(&filter, group_by, subcohort);
    for path in &a.input.input {
        let mut reader = open(path)?;
        let dialect = dialect(&a.input, &mut reader)?;
        if threads == 1 || path.as_os_str() == "-" {
            pass.consume(reader, dialect)?;
            continue;
        }
        drop(reader);
        let plan =
            plan_shards(path, threads).with_context(|| format!("sharding {}", path.display()))?;
        let parts: Vec<Outcome<EpiPass>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..plan.ranges.len())
                .map(|i| {
                    let (plan, filter) = (&plan, &filter);
                    scope.spawn(move || {
                        let mut part = EpiPass::new(filter, group_by, subcohort);
                        part.consume(open_shard(path, plan, i)?, dialect)?;
                        Ok(part)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        // merged in shard order, so output does not depend on scheduling
        for part in parts {
            pass.merge(part?);
        }
    }
    report_lines(&pass.stats);
    Ok(pass)
}

fn report_lines(stats: &IngestStats) {
    eprintln!(
        "{} rows read, {} rejected",
        stats.rows_read, stats.rows_rejected
    );
}

fn state_reports(
    a: &EpiArgs,
) -> Outcome<BTreeMap<epiwatch::epi_metrics::StratumKey, epiwatch::epi_metrics::MetricsReport>> {
    let pass = epi_pass(a, GroupBy::STATE, ComorbiditySubcohort::default())?;
    Ok(pass.strata.finish(a.severity.into(), a.positivity.into()))
}

fn epi_report(a: EpiReportArgs) -> Outcome {
    let table: TableId = a.table.parse().map_err(usage)?;
    if !(table.is_epi() || matches!(table, TableId::Metrics | TableId::ComorbidityProfile)) {
        return Err(usage(format!("table {table} is not an epi-report table")));
    }
    let group_by: GroupBy = a.group_by.parse().map_err(|e| usage(format!("{e}")))?;
    let e = &a.epi;
    let pass = epi_pass(e, group_by, a.subcohort.into())?;
    let format = e.output.format.into();
    let out = match table {
        TableId::Metrics => {
            let reports = pass.strata.finish(e.severity.into(), e.positivity.into());
            eprintln!("note: {FATALITY_NOTE}");
            render(table, ReportData::Strata(&reports), format)
        }
        TableId::ComorbidityProfile => render(
            table,
            ReportData::Comorbidity {
                profile: &pass.profile,
                subcohort: a.subcohort.into(),
            },
            format,
        ),
        _ => render(table, ReportData::CrossTabs(&pass.tabs), format),
    }
    .map_err(|e| Failure::Data(e.into()))?;
    emit(e.output.out.as_deref(), &out)
}

fn rank(a: RankArgs) -> Outcome {
    let reports = state_reports(&a.epi)?;
    let (metric, name) = match a.metric {
        MetricArg::Fatality => (RankMetric::Fatality, "fatality"),
        MetricArg::Positivity => (RankMetric::Positivity, "positivity"),
        MetricArg::Tgi3 => (RankMetric::Tgi3, "tgi3"),
    };
    if matches!(a.metric, MetricArg::Fatality) {
        eprintln!("note: {FATALITY_NOTE}");
    }
    let ranked = rank_states(&reports, metric);
    emit(
        a.epi.output.out.as_deref(),
        &render_ranking(&ranked, name, a.epi.output.format.into()),
    )
}

fn catalog(path: Option<&Path>) -> Outcome<VariantCatalog> {
    match path {
        None => Ok(VariantCatalog::builtin()),
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            VariantCatalog::from_reader(BufReader::new(file))
                .with_context(|| format!("reading catalog {}", p.display()))
                .map_err(Failure::Data)
        }
    }
}

fn genomic_report(a: GenomicArgs) -> Outcome {
    let table: TableId = a.table.parse().map_err(usage)?;
    if !table.is_genomic() {
        return Err(usage(format!(
            "table {table} is not a genomic-report table"
        )));
    }
    if a.input.delimiter.is_some() {
        return Err(usage(
            "--delimiter is not used for genomic input; the delimiter is sniffed",
        ));
    }
    let catalog = catalog(a.catalog.as_deref())?;
    if catalog.find(&a.variant).is_none() {
        return Err(usage(format!("unknown variant {:?}", a.variant)));
    }
    let mut tally = GenomicTally::default();
    let mut states = StateSummaryAccumulator::new(&catalog, &a.variant, &a.states);
    let mut stats = IngestStats::default();
    for path in &a.input.input {
        let mut reader = ingest_gisaid_with(open(path)?, a.input.encoding.into())?;
        for s in reader.by_ref().flatten() {
            tally.push(&catalog, &s);
            states.push(&catalog, &s);
        }
        stats.merge(&reader.finish()?);
    }
    report_lines(&stats);
    let format = a.output.format.into();
    let out = match table {
        TableId::T10 | TableId::T11 | TableId::T12 | TableId::T13 => {
            render(table, ReportData::States(&states.finish()), format)
        }
        _ => render(
            table,
            ReportData::Genomic {
                tally: &tally,
                catalog: &catalog,
                focus: &a.variant,
            },
            format,
        ),
    }
    .map_err(|e| Failure::Data(e.into()))?;
    emit(a.output.out.as_deref(), &out)
}

fn validate(a: ValidateArgs) -> Outcome {
    let mut stats = IngestStats::default();
    for path in &a.input.input {
        let mut reader = open(path)?;
        let part = match a.source {
            Source::Sveerv => {
                let dialect = dialect(&a.input, &mut reader)?;
                let mut r = ingest_sveerv(reader, dialect)?;
                r.by_ref().for_each(drop);
                r.finish()?
            }
            Source::Gisaid => {
                let mut r = ingest_gisaid_with(reader, a.input.encoding.into())?;
                r.by_ref().for_each(drop);
                r.finish()?
            }
        };
        stats.merge(&part);
    }
    report_lines(&stats);
    emit(None, validate_report(&stats).as_bytes())
}

fn fixture_gen(a: FixtureArgs) -> Outcome {
    if let Some(rows) = a.rows {
        let seed = a.seed.unwrap_or(0);
        return match &a.out {
            Some(path) => {
                let file =
                    File::create(path).with_context(|| format!("creating {}", path.display()))?;
                write_random_sveerv(BufWriter::new(file), rows, seed)?.flush()?;
                Ok(())
            }
            None => {
                write_random_sveerv(BufWriter::new(io::stdout().lock()), rows, seed)?.flush()?;
                Ok(())
            }
        };
    }
    let (kind, text) = match (&a.preset, &a.spec) {
        (Some(name), _) => {
            let (kind, text) = preset(name).map_err(|e| {
                usage(format!(
                    "{e}; available: sveerv-national, gisaid-mexico, table1 to table13"
                ))
            })?;
            (kind, text.to_string())
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let kind = match a.source {
                Source::Sveerv => PresetKind::Epi,
                Source::Gisaid => PresetKind::Genomic,
            };
            (kind, text)
        }
        (None, None) => unreachable!("clap requires one of --preset, --spec, --rows"),
    };
    let bytes = match kind {
        PresetKind::Epi => {
            let mut spec = EpiSpec::from_toml(&text).map_err(|e| anyhow!(e))?;
            spec.seed = a.seed.unwrap_or(spec.seed);
            generate_epi_fixture(&spec).map_err(|e| anyhow!(e))?
        }
        PresetKind::Genomic => {
            let mut spec = GenomicSpec::from_toml(&text).map_err(|e| anyhow!(e))?;
            spec.seed = a.seed.unwrap_or(spec.seed);
            generate_genomic_fixture(&spec).map_err(|e| anyhow!(e))?
        }
    };
    emit(a.out.as_deref(), &bytes)
}
