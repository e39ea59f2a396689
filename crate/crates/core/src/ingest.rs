//! Streaming, validating readers for SVEERV case CSVs and GISAID-style
//! metadata exports.
//!
//! Both readers are iterators over `Result<record, RowError>`: a malformed
//! row is reported and counted but never stops the stream. Fatal problems
//! (missing header columns, I/O failures) surface through
//! [`IngestError`]. Memory use is bounded by the longest row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use csv::{ByteRecord, ReaderBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genomics::{Lineage, LineageError};
use crate::schema::{
    self, CaseClassification, CodedFlag, Comorbidities, Comorbidity, DeathDate, DecodeError,
    PatientRecord, Sex, TreatmentStrategy,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing required column(s): {}", .0.join(", "))]
    MissingRequiredColumn(Vec<String>),
    #[error("input has no header row")]
    EmptyInput,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RowErrorKind {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("empty pango lineage")]
    EmptyLineage,
    #[error("malformed pango lineage {0:?}")]
    MalformedLineage(String),
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("field {0} is not valid UTF-8")]
    Encoding(&'static str),
}

impl RowErrorKind {
    pub fn kind(&self) -> &'static str {
        match self {
            RowErrorKind::Decode(e) => e.kind(),
            RowErrorKind::EmptyLineage => "EmptyLineage",
            RowErrorKind::MalformedLineage(_) => "MalformedLineage",
            RowErrorKind::FieldCount { .. } => "FieldCount",
            RowErrorKind::Encoding(_) => "Encoding",
        }
    }
}

impl From<LineageError> for RowErrorKind {
    fn from(e: LineageError) -> Self {
        match e {
            LineageError::Empty => RowErrorKind::EmptyLineage,
            LineageError::Malformed(s) => RowErrorKind::MalformedLineage(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct RowError {
    pub line: u64,
    pub reason: RowErrorKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows_read: u64,
    pub rows_accepted: u64,
    pub rows_rejected: u64,
    pub rejection_reasons: BTreeMap<String, u64>,
    pub bytes_read: u64,
}

impl IngestStats {
    pub fn merge(&mut self, other: &IngestStats) {
        self.rows_read += other.rows_read;
        self.rows_accepted += other.rows_accepted;
        self.rows_rejected += other.rows_rejected;
        self.bytes_read += other.bytes_read;
        for (k, v) in &other.rejection_reasons {
            *self.rejection_reasons.entry(k.clone()).or_default() += v;
        }
    }

    fn accept(&mut self) {
        self.rows_read += 1;
        self.rows_accepted += 1;
    }

    fn reject(&mut self, reason: &RowErrorKind) {
        self.rows_read += 1;
        self.rows_rejected += 1;
        *self
            .rejection_reasons
            .entry(reason.kind().to_string())
            .or_default() += 1;
    }
}

/// Deterministic plain-text summary of an ingestion run.
pub fn validate_report(stats: &IngestStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "rows read: {}", stats.rows_read);
    let _ = writeln!(out, "accepted: {}", stats.rows_accepted);
    let _ = writeln!(out, "rejected: {}", stats.rows_rejected);
    let _ = writeln!(out, "bytes read: {}", stats.bytes_read);
    if !stats.rejection_reasons.is_empty() {
        let mut reasons: Vec<_> = stats.rejection_reasons.iter().collect();
        // most frequent first, then by name
        reasons.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let _ = writeln!(out, "rejection reasons:");
        for (reason, n) in reasons {
            let _ = writeln!(out, "  {reason} {n}");
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TextEncoding {
    Utf8,
    Latin1,
    /// UTF-8, falling back to Latin-1 for fields that are not valid UTF-8.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dialect {
    pub delimiter: u8,
    pub encoding: TextEncoding,
}

impl Default for Dialect {
    fn default() -> Self {
        Dialect {
            delimiter: b',',
            encoding: TextEncoding::Auto,
        }
    }
}

fn decode_text(
    raw: &[u8],
    encoding: TextEncoding,
    field: &'static str,
) -> Result<String, RowErrorKind> {
    match encoding {
        TextEncoding::Latin1 => Ok(raw.iter().map(|&b| b as char).collect()),
        TextEncoding::Utf8 => std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|_| RowErrorKind::Encoding(field)),
        TextEncoding::Auto => Ok(match std::str::from_utf8(raw) {
            Ok(s) => s.to_owned(),
            Err(_) => raw.iter().map(|&b| b as char).collect(),
        }),
    }
}

struct CountingReader<R> {
    inner: R,
    bytes: u64,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.bytes += n as u64;
        Ok(n)
    }
}

fn normalize_header(raw: &[u8]) -> String {
    let s = String::from_utf8_lossy(raw);
    s.trim_start_matches('\u{feff}')
        .trim()
        .to_ascii_lowercase()
        .replace([' ', '-'], "_")
}

fn find_column(headers: &[String], names: &[&str]) -> Option<usize> {
    names.iter().find_map(|name| {
        let wanted = name.to_ascii_lowercase();
        headers.iter().position(|h| *h == wanted)
    })
}

fn field(rec: &ByteRecord, idx: usize) -> &[u8] {
    rec.get(idx).unwrap_or(b"").trim_ascii()
}

fn parse_int(field_name: &'static str, raw: &[u8]) -> Result<i64, DecodeError> {
    std::str::from_utf8(raw)
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .ok_or_else(|| DecodeError::NotAnInteger {
            field: field_name,
            raw: String::from_utf8_lossy(raw).into_owned(),
        })
}

fn parse_date(field_name: &'static str, raw: &[u8]) -> Result<NaiveDate, DecodeError> {
    let s = std::str::from_utf8(raw).map_err(|_| DecodeError::BadDate {
        field: field_name,
        raw: String::from_utf8_lossy(raw).into_owned(),
    })?;
    schema::parse_iso_date(field_name, s)
}

#[derive(Debug, Clone)]
struct SveervColumns {
    state: usize,
    municipality: usize,
    sex: usize,
    age: usize,
    indigenous: usize,
    patient_type: usize,
    icu: usize,
    intubated: usize,
    death_date: usize,
    classification: usize,
    onset_date: usize,
    comorbidities: [usize; 10],
}

impl SveervColumns {
    fn resolve(headers: &[String]) -> Result<Self, IngestError> {
        let mut missing = Vec::new();
        let mut col = |name: &str| {
            find_column(headers, &[name]).unwrap_or_else(|| {
                missing.push(name.to_string());
                usize::MAX
            })
        };
        let state = col(schema::COL_STATE);
        let municipality = col(schema::COL_MUNICIPALITY);
        let sex = col(schema::COL_SEX);
        let age = col(schema::COL_AGE);
        let indigenous = col(schema::COL_INDIGENOUS_LANGUAGE);
        let patient_type = col(schema::COL_PATIENT_TYPE);
        let icu = col(schema::COL_ICU);
        let intubated = col(schema::COL_INTUBATED);
        let death_date = col(schema::COL_DEATH_DATE);
        let classification = col(schema::COL_CLASSIFICATION);
        let onset_date = col(schema::COL_ONSET_DATE);
        let mut comorbidities = [0usize; 10];
        for (slot, c) in comorbidities.iter_mut().zip(Comorbidity::ALL) {
            *slot = col(c.column());
        }
        if !missing.is_empty() {
            return Err(IngestError::MissingRequiredColumn(missing));
        }
        Ok(SveervColumns {
            state,
            municipality,
            sex,
            age,
            indigenous,
            patient_type,
            icu,
            intubated,
            death_date,
            classification,
            onset_date,
            comorbidities,
        })
    }

    fn decode(&self, rec: &ByteRecord) -> Result<PatientRecord, DecodeError> {
        let state = parse_int(schema::COL_STATE, field(rec, self.state))?;
        if !(1..=32).contains(&state) {
            return Err(DecodeError::OutOfRange {
                field: schema::COL_STATE,
                value: state,
            });
        }
        let municipality = parse_int(schema::COL_MUNICIPALITY, field(rec, self.municipality))?;
        if !(0..=i64::from(u16::MAX)).contains(&municipality) {
            return Err(DecodeError::OutOfRange {
                field: schema::COL_MUNICIPALITY,
                value: municipality,
            });
        }
        let sex = Sex::from_code(parse_int(schema::COL_SEX, field(rec, self.sex))?);
        let age_raw = field(rec, self.age);
        let age_years = if age_raw.is_empty() {
            None
        } else {
            let age = parse_int(schema::COL_AGE, age_raw)?;
            if !(0..=i64::from(schema::MAX_AGE_YEARS)).contains(&age) {
                return Err(DecodeError::OutOfRange {
                    field: schema::COL_AGE,
                    value: age,
                });
            }
            Some(age as u16)
        };
        let flag = |name: &'static str, idx: usize| -> Result<CodedFlag, DecodeError> {
            CodedFlag::from_code(name, parse_int(name, field(rec, idx))?)
        };
        let speaks_indigenous_language = flag(schema::COL_INDIGENOUS_LANGUAGE, self.indigenous)?;
        let treatment = TreatmentStrategy::from_code(parse_int(
            schema::COL_PATIENT_TYPE,
            field(rec, self.patient_type),
        )?)?;
        let icu = flag(schema::COL_ICU, self.icu)?;
        let intubated = flag(schema::COL_INTUBATED, self.intubated)?;
        let death_raw = field(rec, self.death_date);
        let death_date = if death_raw == schema::ALIVE_SENTINEL.as_bytes() {
            DeathDate::Alive
        } else {
            DeathDate::Died(parse_date(schema::COL_DEATH_DATE, death_raw)?)
        };
        let classification = CaseClassification::from_code(parse_int(
            schema::COL_CLASSIFICATION,
            field(rec, self.classification),
        )?)?;
        let mut comorbidities = Comorbidities::default();
        for (c, &idx) in Comorbidity::ALL.iter().zip(&self.comorbidities) {
            comorbidities.set(*c, flag(c.column(), idx)?);
        }
        let onset_raw = field(rec, self.onset_date);
        let symptom_onset_date =
            if onset_raw.is_empty() || onset_raw == schema::ALIVE_SENTINEL.as_bytes() {
                None
            } else {
                Some(parse_date(schema::COL_ONSET_DATE, onset_raw)?)
            };
        Ok(PatientRecord {
            state_code: state as u8,
            municipality_code: municipality as u16,
            sex,
            age_years,
            speaks_indigenous_language,
            treatment,
            icu,
            intubated,
            death_date,
            classification,
            comorbidities,
            symptom_onset_date,
        })
    }
}

/// Shared row loop: owns the csv reader, the reusable row buffer and the stats.
struct RowSource<R> {
    csv: csv::Reader<CountingReader<R>>,
    row: ByteRecord,
    width: usize,
    stats: IngestStats,
    fatal: Option<io::Error>,
    done: bool,
}

impl<R: Read> RowSource<R> {
    fn open(source: R, delimiter: u8) -> Result<(Self, Vec<String>), IngestError> {
        let mut csv = ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .flexible(true)
            .from_reader(CountingReader {
                inner: source,
                bytes: 0,
            });
        let headers = csv.byte_headers().map_err(csv_to_io)?.clone();
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(IngestError::EmptyInput);
        }
        let names: Vec<String> = headers.iter().map(normalize_header).collect();
        Ok((
            RowSource {
                csv,
                row: ByteRecord::new(),
                width: names.len(),
                stats: IngestStats::default(),
                fatal: None,
                done: false,
            },
            names,
        ))
    }

    /// Advances to the next row; `Some(line)` when `self.row` holds it.
    fn advance(&mut self) -> Option<Result<u64, RowError>> {
        if self.done {
            return None;
        }
        loop {
            match self.csv.read_byte_record(&mut self.row) {
                Ok(true) => {
                    let line = self.row.position().map(|p| p.line()).unwrap_or(0);
                    // tolerate blank lines
                    if self.row.len() == 1 && self.row[0].is_empty() {
                        continue;
                    }
                    if self.row.len() != self.width {
                        let reason = RowErrorKind::FieldCount {
                            expected: self.width,
                            found: self.row.len(),
                        };
                        self.stats.reject(&reason);
                        return Some(Err(RowError { line, reason }));
                    }
                    return Some(Ok(line));
                }
                Ok(false) => {
                    self.finish_bytes();
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.fatal = Some(csv_to_io(e));
                    self.finish_bytes();
                    self.done = true;
                    return None;
                }
            }
        }
    }

    fn record_outcome<T>(
        &mut self,
        line: u64,
        outcome: Result<T, RowErrorKind>,
    ) -> Result<T, RowError> {
        match outcome {
            Ok(v) => {
                self.stats.accept();
                Ok(v)
            }
            Err(reason) => {
                self.stats.reject(&reason);
                Err(RowError { line, reason })
            }
        }
    }

    fn finish_bytes(&mut self) {
        self.stats.bytes_read = self.csv.get_ref().bytes;
    }

    fn finish(mut self) -> Result<IngestStats, IngestError> {
        // drain anything the caller did not consume
        while self.advance().is_some() {}
        match self.fatal {
            Some(e) => Err(IngestError::Io(e)),
            None => Ok(self.stats),
        }
    }
}

fn csv_to_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::new(io::ErrorKind::InvalidData, format!("{other:?}")),
    }
}

/// Streaming SVEERV reader. Iterate it, then call [`SveervReader::finish`]
/// for the final stats.
pub struct SveervReader<R> {
    rows: RowSource<R>,
    columns: SveervColumns,
}

impl<R: Read> SveervReader<R> {
    pub fn stats(&self) -> &IngestStats {
        &self.rows.stats
    }

    pub fn finish(self) -> Result<IngestStats, IngestError> {
        self.rows.finish()
    }
}

impl<R: Read> Iterator for SveervReader<R> {
    type Item = Result<PatientRecord, RowError>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = match self.rows.advance()? {
            Ok(line) => line,
            Err(e) => return Some(Err(e)),
        };
        let outcome = self
            .columns
            .decode(&self.rows.row)
            .map_err(RowErrorKind::from);
        Some(self.rows.record_outcome(line, outcome))
    }
}

/// Opens a SVEERV stream. Fails before reading any data row when a
/// required column is absent. Header lookup is case-insensitive.
pub fn ingest_sveerv<R: Read>(source: R, dialect: Dialect) -> Result<SveervReader<R>, IngestError> {
    let (rows, headers) = RowSource::open(source, dialect.delimiter)?;
    let columns = SveervColumns::resolve(&headers)?;
    Ok(SveervReader { rows, columns })
}

/// One genomic-metadata row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub accession: String,
    pub collection_date: Option<NaiveDate>,
    pub state: String,
    pub pango_lineage: Lineage,
    pub gisaid_clade: String,
    pub patient_status: String,
    pub age_years: Option<u16>,
    pub sex: Sex,
    pub vaccine: Option<String>,
}

pub const GISAID_COLUMNS: [&str; 9] = [
    "accession",
    "date",
    "division",
    "pango_lineage",
    "clade",
    "patient_status",
    "age",
    "sex",
    "vaccine",
];

#[derive(Debug, Clone)]
struct GisaidColumns {
    accession: usize,
    date: Option<usize>,
    division: Option<usize>,
    lineage: usize,
    clade: Option<usize>,
    status: Option<usize>,
    age: Option<usize>,
    sex: Option<usize>,
    vaccine: Option<usize>,
}

impl GisaidColumns {
    fn resolve(headers: &[String]) -> Result<Self, IngestError> {
        let accession = find_column(headers, &["accession", "accession_id", "gisaid_epi_isl"]);
        let lineage = find_column(headers, &["pango_lineage", "lineage"]);
        let mut missing = Vec::new();
        if accession.is_none() {
            missing.push("accession".to_string());
        }
        if lineage.is_none() {
            missing.push("pango_lineage".to_string());
        }
        if !missing.is_empty() {
            return Err(IngestError::MissingRequiredColumn(missing));
        }
        Ok(GisaidColumns {
            accession: accession.unwrap(),
            date: find_column(headers, &["date", "collection_date"]),
            division: find_column(headers, &["division", "state"]),
            lineage: lineage.unwrap(),
            clade: find_column(headers, &["clade", "gisaid_clade"]),
            status: find_column(headers, &["patient_status"]),
            age: find_column(headers, &["age", "patient_age"]),
            sex: find_column(headers, &["sex", "gender"]),
            vaccine: find_column(headers, &["vaccine", "vaccination"]),
        })
    }

    fn decode(
        &self,
        rec: &ByteRecord,
        encoding: TextEncoding,
    ) -> Result<SampleRecord, RowErrorKind> {
        let text = |idx: Option<usize>, name: &'static str| -> Result<String, RowErrorKind> {
            match idx {
                Some(i) => decode_text(field(rec, i), encoding, name).map(|s| s.trim().to_string()),
                None => Ok(String::new()),
            }
        };
        let lineage_text = text(Some(self.lineage), "pango_lineage")?;
        let pango_lineage = Lineage::parse(&lineage_text)?;
        let accession = text(Some(self.accession), "accession")?;
        let collection_date = self
            .date
            .and_then(|i| std::str::from_utf8(field(rec, i)).ok())
            .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok());
        let age_text = text(self.age, "age")?;
        // exports carry "45", "45 years", "unknown"
        let digits: String = age_text
            .chars()
            .take_while(|c| c.is_ascii_digit())
            .collect();
        let age_years = digits
            .parse::<u16>()
            .ok()
            .filter(|a| *a <= schema::MAX_AGE_YEARS);
        let vaccine = text(self.vaccine, "vaccine")?;
        Ok(SampleRecord {
            accession,
            collection_date,
            state: text(self.division, "division")?,
            pango_lineage,
            gisaid_clade: text(self.clade, "clade")?,
            patient_status: text(self.status, "patient_status")?,
            age_years,
            sex: Sex::from_text(&text(self.sex, "sex")?),
            vaccine: (!vaccine.is_empty()).then_some(vaccine),
        })
    }
}

pub struct GisaidReader<R> {
    rows: RowSource<io::Chain<io::Cursor<Vec<u8>>, BufReader<R>>>,
    columns: GisaidColumns,
    encoding: TextEncoding,
}

impl<R: Read> GisaidReader<R> {
    pub fn stats(&self) -> &IngestStats {
        &self.rows.stats
    }

    pub fn finish(self) -> Result<IngestStats, IngestError> {
        self.rows.finish()
    }
}

impl<R: Read> Iterator for GisaidReader<R> {
    type Item = Result<SampleRecord, RowError>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = match self.rows.advance()? {
            Ok(line) => line,
            Err(e) => return Some(Err(e)),
        };
        let outcome = self.columns.decode(&self.rows.row, self.encoding);
        Some(self.rows.record_outcome(line, outcome))
    }
}

/// Picks tab when the header line contains one, comma otherwise.
pub fn sniff_delimiter(header_line: &[u8]) -> u8 {
    if header_line.contains(&b'\t') {
        b'\t'
    } else {
        b','
    }
}

/// Opens a GISAID-style metadata stream, sniffing the delimiter from the
/// header line. The header is buffered once and replayed into the parser so
/// every source byte is still read exactly once.
pub fn ingest_gisaid<R: Read>(source: R) -> Result<GisaidReader<R>, IngestError> {
    ingest_gisaid_with(source, TextEncoding::Auto)
}

pub fn ingest_gisaid_with<R: Read>(
    source: R,
    encoding: TextEncoding,
) -> Result<GisaidReader<R>, IngestError> {
    let mut buffered = BufReader::new(source);
    let mut header = Vec::new();
    buffered.read_until(b'\n', &mut header)?;
    if header.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(IngestError::EmptyInput);
    }
    let delimiter = sniff_delimiter(&header);
    let (rows, headers) = RowSource::open(io::Cursor::new(header).chain(buffered), delimiter)?;
    let columns = GisaidColumns::resolve(&headers)?;
    Ok(GisaidReader {
        rows,
        columns,
        encoding,
    })
}

/// Byte ranges of a delimited file split on row boundaries, plus the raw
/// header line to prepend to each shard. Rows must not contain quoted
/// newlines (true of SVEERV exports).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardPlan {
    pub header: Vec<u8>,
    pub ranges: Vec<Range<u64>>,
}

pub fn plan_shards(path: &Path, shards: usize) -> io::Result<ShardPlan> {
    let shards = shards.max(1);
    let mut file = File::open(path)?;
    let len = file.metadata()?.len();
    let mut reader = BufReader::new(&mut file);
    let mut header = Vec::new();
    reader.read_until(b'\n', &mut header)?;
    let body_start = header.len() as u64;
    let body_len = len - body_start;
    let mut cuts = vec![body_start];
    for i in 1..shards as u64 {
        let guess = body_start + body_len * i / shards as u64;
        let prev = *cuts.last().unwrap();
        if guess <= prev {
            continue;
        }
        // move the cut just past the next newline at or after guess - 1
        reader.seek(SeekFrom::Start(guess - 1))?;
        let mut skipped = Vec::new();
        reader.read_until(b'\n', &mut skipped)?;
        let cut = (guess - 1 + skipped.len() as u64).min(len);
        if cut > prev && cut < len {
            cuts.push(cut);
        }
    }
    cuts.push(len);
    cuts.dedup();
    let ranges = cuts.windows(2).map(|w| w[0]..w[1]).collect();
    Ok(ShardPlan { header, ranges })
}

/// A reader over one shard: the header line followed by the shard's rows.
pub fn open_shard(path: &Path, plan: &ShardPlan, index: usize) -> io::Result<impl Read> {
    let range = plan.ranges[index].clone();
    let mut file = File::open(path)?;
    file.seek(SeekFrom::Start(range.start))?;
    Ok(io::Cursor::new(plan.header.clone()).chain(file.take(range.end - range.start)))
}
