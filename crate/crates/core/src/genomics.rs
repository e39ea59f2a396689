//! Variant catalog, Pango lineage matching, patient-status bucketing and
//! the genomic cross-tabs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::epi_metrics::{age_group, AgeGroup};
use crate::ingest::SampleRecord;
use crate::percent::Percentage;
use crate::schema::Sex;
use crate::text::fold;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LineageError {
    #[error("empty lineage")]
    Empty,
    #[error("malformed lineage {0:?}")]
    Malformed(String),
}

/// A dotted Pango lineage name such as `B.1.617.2` or `AY.20`.
///
/// The first segment is an alphabetic prefix (stored uppercase), the rest
/// are decimal numbers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lineage(String);

impl Lineage {
    pub fn parse(text: &str) -> Result<Lineage, LineageError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(LineageError::Empty);
        }
        let malformed = || LineageError::Malformed(text.to_string());
        let mut parts = text.split('.');
        let head = parts.next().ok_or_else(malformed)?;
        if head.is_empty() || !head.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(malformed());
        }
        let mut out = head.to_ascii_uppercase();
        for seg in parts {
            if seg.is_empty() || !seg.chars().all(|c| c.is_ascii_digit()) {
                return Err(malformed());
            }
            out.push('.');
            out.push_str(seg);
        }
        Ok(Lineage(out))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    /// True when `self` equals `ancestor` or descends from it.
    pub fn descends_from(&self, ancestor: &Lineage) -> bool {
        let mut mine = self.segments();
        ancestor.segments().all(|a| mine.next() == Some(a))
    }
}

impl fmt::Display for Lineage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Lineage {
    type Err = LineageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Lineage::parse(s)
    }
}

impl Serialize for Lineage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Lineage {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Lineage::parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("empty pattern")]
    EmptyPattern,
    #[error("malformed pattern segment {0:?}")]
    MalformedSegment(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alternative {
    pub root: Lineage,
    pub include_descendants: bool,
}

/// `+`-separated alternatives; a `.x` suffix includes descendants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PangoPattern {
    alternatives: Vec<Alternative>,
}

impl PangoPattern {
    pub fn parse(text: &str) -> Result<PangoPattern, PatternError> {
        if text.trim().is_empty() {
            return Err(PatternError::EmptyPattern);
        }
        let alternatives = text
            .split('+')
            .map(|alt| {
                let alt = alt.trim();
                let (root, include_descendants) =
                    match alt.strip_suffix(".x").or_else(|| alt.strip_suffix(".X")) {
                        Some(root) => (root, true),
                        None => (alt, false),
                    };
                let root = Lineage::parse(root)
                    .map_err(|_| PatternError::MalformedSegment(alt.to_string()))?;
                Ok(Alternative {
                    root,
                    include_descendants,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PangoPattern { alternatives })
    }

    pub fn alternatives(&self) -> &[Alternative] {
        &self.alternatives
    }

    pub fn matches(&self, lineage: &Lineage) -> bool {
        self.alternatives.iter().any(|a| {
            if a.include_descendants {
                lineage.descends_from(&a.root)
            } else {
                *lineage == a.root
            }
        })
    }
}

impl fmt::Display for PangoPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.alternatives.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{}", a.root)?;
            if a.include_descendants {
                f.write_str(".x")?;
            }
        }
        Ok(())
    }
}

pub fn parse_pattern(text: &str) -> Result<PangoPattern, PatternError> {
    PangoPattern::parse(text)
}

pub fn matches(p: &PangoPattern, lineage: &Lineage) -> bool {
    p.matches(lineage)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VariantCategory {
    #[serde(rename = "VOC")]
    Concern,
    #[serde(rename = "VOI")]
    Interest,
}

impl VariantCategory {
    pub fn code(self) -> &'static str {
        match self {
            VariantCategory::Concern => "VOC",
            VariantCategory::Interest => "VOI",
        }
    }
}

impl FromStr for VariantCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "VOC" => Ok(VariantCategory::Concern),
            "VOI" => Ok(VariantCategory::Interest),
            other => Err(format!("unknown variant category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantDefinition {
    pub who_label: String,
    pub aliases: Vec<String>,
    pub category: VariantCategory,
    pub gisaid_clades: BTreeSet<String>,
    pub pango: PangoPattern,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog is empty")]
    Empty,
    #[error("duplicate WHO label {0:?}")]
    DuplicateLabel(String),
    #[error("catalog line {line}: {reason}")]
    Line { line: u64, reason: String },
    #[error("catalog is missing column {0:?}")]
    MissingColumn(&'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Ordered variant definitions; the first matching pattern wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantCatalog {
    variants: Vec<VariantDefinition>,
}

const BUILTIN: [(&str, &[&str], VariantCategory, &str, &str); 9] = [
    ("Alpha", &[], VariantCategory::Concern, "GRY", "B.1.1.7+Q.x"),
    (
        "Beta",
        &[],
        VariantCategory::Concern,
        "GH/501Y.V2",
        "B.1.351+B.1.351.2+B.1.351.3",
    ),
    (
        "Gamma",
        &[],
        VariantCategory::Concern,
        "GR/501Y.V3",
        "P.1+P.1.x",
    ),
    (
        "Delta",
        &[],
        VariantCategory::Concern,
        "G/478K.V1",
        "B.1.617.2+AY.x",
    ),
    (
        "Eta",
        &[],
        VariantCategory::Interest,
        "G/484K.V3",
        "B.1.525",
    ),
    (
        "Iota",
        &["Jota"],
        VariantCategory::Interest,
        "HG/253G.V1",
        "B.1.526",
    ),
    (
        "Kappa",
        &[],
        VariantCategory::Interest,
        "G/452R.V3",
        "B.1.617.1",
    ),
    (
        "Lambda",
        &[],
        VariantCategory::Interest,
        "GR/452Q.V1",
        "C.37",
    ),
    (
        "Mu",
        &[],
        VariantCategory::Interest,
        "GH",
        "B.1.621+B.1.621.1",
    ),
];

impl VariantCatalog {
    pub fn new(variants: Vec<VariantDefinition>) -> Result<Self, CatalogError> {
        if variants.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut seen = BTreeSet::new();
        for v in &variants {
            if !seen.insert(fold(&v.who_label)) {
                return Err(CatalogError::DuplicateLabel(v.who_label.clone()));
            }
        }
        Ok(VariantCatalog { variants })
    }

    /// The nine WHO-labelled variants, Alpha through Mu.
    pub fn builtin() -> Self {
        let variants = BUILTIN
            .iter()
            .map(
                |(label, aliases, category, clades, pattern)| VariantDefinition {
                    who_label: label.to_string(),
                    aliases: aliases.iter().map(|a| a.to_string()).collect(),
                    category: *category,
                    gisaid_clades: clades.split(';').map(str::to_string).collect(),
                    pango: PangoPattern::parse(pattern).expect("builtin pattern"),
                },
            )
            .collect();
        VariantCatalog { variants }
    }

    /// Reads `who_label, category, clades, pango_pattern` rows (comma or
    /// tab separated, clades split on `;`).
    pub fn from_reader<R: Read>(source: R) -> Result<Self, CatalogError> {
        let mut text = String::new();
        let mut source = source;
        source
            .read_to_string(&mut text)
            .map_err(|e| CatalogError::Csv(e.into()))?;
        let delimiter = if text.lines().next().unwrap_or("").contains('\t') {
            b'\t'
        } else {
            b','
        };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = reader.headers()?.iter().map(fold).collect();
        let col = |name: &'static str| {
            headers
                .iter()
                .position(|h| h.replace(' ', "_") == name)
                .ok_or(CatalogError::MissingColumn(name))
        };
        let (label_i, cat_i, clade_i, pat_i) = (
            col("who_label")?,
            col("category")?,
            col("clades")?,
            col("pango_pattern")?,
        );
        let mut variants = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let field = |i: usize| row.get(i).unwrap_or("");
            let bad = |reason: String| CatalogError::Line { line, reason };
            let category = field(cat_i).parse().map_err(bad)?;
            let pango = PangoPattern::parse(field(pat_i)).map_err(|e| bad(e.to_string()))?;
            variants.push(VariantDefinition {
                who_label: field(label_i).to_string(),
                aliases: Vec::new(),
                category,
                gisaid_clades: field(clade_i)
                    .split(';')
                    .map(str::trim)
                    .filter(|c| !c.is_empty())
                    .map(str::to_string)
                    .collect(),
                pango,
            });
        }
        VariantCatalog::new(variants)
    }

    pub fn variants(&self) -> &[VariantDefinition] {
        &self.variants
    }

    pub fn classify(&self, lineage: &Lineage) -> Option<usize> {
        self.variants.iter().position(|v| v.pango.matches(lineage))
    }

    /// Index of a variant by WHO label or alias, ignoring case and accents.
    pub fn find(&self, label: &str) -> Option<usize> {
        let wanted = fold(label);
        self.variants.iter().position(|v| {
            fold(&v.who_label) == wanted || v.aliases.iter().any(|a| fold(a) == wanted)
        })
    }

    pub fn label(&self, index: usize) -> &str {
        &self.variants[index].who_label
    }
}

/// Outcome of classifying one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification<'a> {
    Variant(&'a VariantDefinition),
    Unclassified,
}

impl Classification<'_> {
    pub fn label(&self) -> &str {
        match self {
            Classification::Variant(v) => &v.who_label,
            Classification::Unclassified => "Unclassified",
        }
    }
}

pub fn classify_sample<'a>(catalog: &'a VariantCatalog, s: &SampleRecord) -> Classification<'a> {
    match catalog.classify(&s.pango_lineage) {
        Some(i) => Classification::Variant(&catalog.variants[i]),
        None => Classification::Unclassified,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusBucket {
    Mild,
    Moderate,
    Severe,
    Unknown,
}

impl StatusBucket {
    pub const ALL: [StatusBucket; 4] = [
        StatusBucket::Mild,
        StatusBucket::Moderate,
        StatusBucket::Severe,
        StatusBucket::Unknown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StatusBucket::Mild => "Mild",
            StatusBucket::Moderate => "Moderate",
            StatusBucket::Severe => "Severe",
            StatusBucket::Unknown => "Unknown",
        }
    }
}

const MILD: &[&str] = &[
    "liberado",
    "released",
    "vivir",
    "vivo",
    "live",
    "alive",
    "atencion ambulatoria en vivo",
    "live outpatient care",
];

const MODERATE: &[&str] = &[
    "ambulatorio",
    "ambulatory",
    "outpatient",
    "moderar",
    "moderate",
    "sintomatico",
    "symptomatic",
];

const SEVERE: &[&str] = &[
    "hospitalizado",
    "hospitalized",
    "hospitalised",
    "fallecido",
    "deceased",
    "fatal",
];

const AMBULATORY_TOKENS: &[&str] = &["ambulatorio", "ambulatory", "outpatient"];
const SYMPTOM_TOKENS: &[&str] = &[
    "asintomatico",
    "sintomatico",
    "asymptomatic",
    "symptomatic",
    "y",
    "and",
];

/// Maps a free-text patient status to a severity bucket.
pub fn bucket_status(status_text: &str) -> StatusBucket {
    let norm = fold(status_text);
    let norm = norm.trim_end_matches('.');
    if MILD.contains(&norm) {
        return StatusBucket::Mild;
    }
    if SEVERE.contains(&norm) {
        return StatusBucket::Severe;
    }
    if MODERATE.contains(&norm) {
        return StatusBucket::Moderate;
    }
    // asymptomatic/symptomatic + ambulatory phrasings in any order
    let tokens: Vec<&str> = norm.split(' ').collect();
    let has_ambulatory = tokens.iter().any(|t| AMBULATORY_TOKENS.contains(t));
    let rest_ok = tokens
        .iter()
        .all(|t| AMBULATORY_TOKENS.contains(t) || SYMPTOM_TOKENS.contains(t));
    if has_ambulatory && rest_ok {
        return StatusBucket::Moderate;
    }
    StatusBucket::Unknown
}

/// Per-variant counts, lineage × clade cross-tab and status buckets,
/// keyed by catalog index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenomicTally {
    pub by_variant: BTreeMap<usize, u64>,
    pub unclassified: u64,
    pub lineage_clade: BTreeMap<(usize, Lineage, String), u64>,
    pub status: BTreeMap<(usize, StatusBucket), u64>,
    /// Verbatim status label × clade.
    pub status_labels: BTreeMap<(usize, String, String), u64>,
}

impl GenomicTally {
    pub fn push(&mut self, catalog: &VariantCatalog, s: &SampleRecord) {
        let Some(i) = catalog.classify(&s.pango_lineage) else {
            self.unclassified += 1;
            return;
        };
        *self.by_variant.entry(i).or_default() += 1;
        *self
            .lineage_clade
            .entry((
                i,
                s.pango_lineage.clone(),
                s.gisaid_clade.trim().to_string(),
            ))
            .or_default() += 1;
        *self
            .status
            .entry((i, bucket_status(&s.patient_status)))
            .or_default() += 1;
        *self
            .status_labels
            .entry((
                i,
                s.patient_status.trim().to_string(),
                s.gisaid_clade.trim().to_string(),
            ))
            .or_default() += 1;
    }

    pub fn merge(&mut self, other: &GenomicTally) {
        for (k, v) in &other.by_variant {
            *self.by_variant.entry(*k).or_default() += v;
        }
        self.unclassified += other.unclassified;
        for (k, v) in &other.lineage_clade {
            *self.lineage_clade.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.status {
            *self.status.entry(*k).or_default() += v;
        }
        for (k, v) in &other.status_labels {
            *self.status_labels.entry(k.clone()).or_default() += v;
        }
    }

    pub fn classified(&self) -> u64 {
        self.by_variant.values().sum()
    }

    pub fn variant_count(&self, index: usize) -> u64 {
        self.by_variant.get(&index).copied().unwrap_or(0)
    }

    pub fn clade_crosstab(&self, index: usize) -> BTreeMap<(Lineage, String), u64> {
        self.lineage_clade
            .iter()
            .filter(|((i, _, _), _)| *i == index)
            .map(|((_, l, c), n)| ((l.clone(), c.clone()), *n))
            .collect()
    }

    pub fn status_buckets(&self, index: usize) -> BTreeMap<StatusBucket, u64> {
        self.status
            .iter()
            .filter(|((i, _), _)| *i == index)
            .map(|((_, b), n)| (*b, *n))
            .collect()
    }
}

pub fn tally<'a, I>(samples: I, catalog: &VariantCatalog) -> GenomicTally
where
    I: IntoIterator<Item = &'a SampleRecord>,
{
    let mut t = GenomicTally::default();
    for s in samples {
        t.push(catalog, s);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VariantShare {
    pub who_label: String,
    pub category: VariantCategory,
    pub count: u64,
    pub pct: Percentage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VariantShares {
    /// Catalog order; variants with no samples are omitted.
    pub shares: Vec<VariantShare>,
    pub classified: u64,
    pub unclassified: u64,
}

impl VariantShares {
    pub fn get(&self, label: &str) -> Option<&VariantShare> {
        self.shares.iter().find(|s| s.who_label == label)
    }
}

pub fn shares_from_tally(t: &GenomicTally, catalog: &VariantCatalog) -> VariantShares {
    let classified = t.classified();
    let shares = t
        .by_variant
        .iter()
        .filter(|(_, n)| **n > 0)
        .map(|(i, n)| VariantShare {
            who_label: catalog.label(*i).to_string(),
            category: catalog.variants[*i].category,
            count: *n,
            pct: Percentage::of(*n, classified).expect("classified > 0"),
        })
        .collect();
    VariantShares {
        shares,
        classified,
        unclassified: t.unclassified,
    }
}

pub fn variant_shares<'a, I>(samples: I, catalog: &VariantCatalog) -> VariantShares
where
    I: IntoIterator<Item = &'a SampleRecord>,
{
    shares_from_tally(&tally(samples, catalog), catalog)
}

/// Lineage × clade counts over samples classified as `who_label`.
pub fn clade_crosstab<'a, I>(
    samples: I,
    catalog: &VariantCatalog,
    who_label: &str,
) -> BTreeMap<(Lineage, String), u64>
where
    I: IntoIterator<Item = &'a SampleRecord>,
{
    let Some(target) = catalog.find(who_label) else {
        return BTreeMap::new();
    };
    let mut out = BTreeMap::new();
    for s in samples {
        if catalog.classify(&s.pango_lineage) == Some(target) {
            *out.entry((s.pango_lineage.clone(), s.gisaid_clade.trim().to_string()))
                .or_default() += 1;
        }
    }
    out
}

/// Folded state name with any "estado de" prefix removed.
pub fn state_key(name: &str) -> String {
    let f = fold(name);
    f.strip_prefix("estado de ")
        .map(str::to_string)
        .unwrap_or(f)
}

fn state_matches(sample_key: &str, wanted_key: &str) -> bool {
    sample_key == wanted_key
        || sample_key
            .strip_prefix(wanted_key)
            .is_some_and(|rest| rest.starts_with(' '))
        || wanted_key
            .strip_prefix(sample_key)
            .is_some_and(|rest| rest.starts_with(' '))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VaccineTally {
    /// Smallest verbatim spelling seen, so shards merge deterministically.
    pub label: String,
    pub count: u64,
}

/// One state's (or the totals row's) tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StateBlock {
    pub total: u64,
    pub clades: BTreeMap<String, u64>,
    pub sex: BTreeMap<Sex, u64>,
    pub vaccines: BTreeMap<String, VaccineTally>,
    pub age_sex: BTreeMap<(Sex, AgeGroup), u64>,
    pub status: BTreeMap<StatusBucket, u64>,
}

impl StateBlock {
    fn push(&mut self, s: &SampleRecord) {
        self.total += 1;
        *self
            .clades
            .entry(s.gisaid_clade.trim().to_string())
            .or_default() += 1;
        *self.sex.entry(s.sex).or_default() += 1;
        if let Some(v) = s
            .vaccine
            .as_deref()
            .map(str::trim)
            .filter(|v| !v.is_empty())
        {
            self.add_vaccine(&fold(v), v, 1);
        }
        *self
            .age_sex
            .entry((s.sex, age_group(s.age_years)))
            .or_default() += 1;
        *self
            .status
            .entry(bucket_status(&s.patient_status))
            .or_default() += 1;
    }

    fn add_vaccine(&mut self, key: &str, label: &str, n: u64) {
        let entry = self
            .vaccines
            .entry(key.to_string())
            .or_insert_with(|| VaccineTally {
                label: label.to_string(),
                count: 0,
            });
        if label < entry.label.as_str() {
            entry.label = label.to_string();
        }
        entry.count += n;
    }

    pub fn merge(&mut self, other: &StateBlock) {
        self.total += other.total;
        for (k, v) in &other.clades {
            *self.clades.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.sex {
            *self.sex.entry(*k).or_default() += v;
        }
        for (k, v) in &other.vaccines {
            self.add_vaccine(k, &v.label, v.count);
        }
        for (k, v) in &other.age_sex {
            *self.age_sex.entry(*k).or_default() += v;
        }
        for (k, v) in &other.status {
            *self.status.entry(*k).or_default() += v;
        }
    }

    pub fn clade(&self, clade: &str) -> u64 {
        self.clades.get(clade).copied().unwrap_or(0)
    }

    pub fn sex_count(&self, sex: Sex) -> u64 {
        self.sex.get(&sex).copied().unwrap_or(0)
    }

    pub fn vaccine(&self, name: &str) -> u64 {
        self.vaccines.get(&fold(name)).map_or(0, |v| v.count)
    }

    pub fn age_sex_count(&self, sex: Sex, group: AgeGroup) -> u64 {
        self.age_sex.get(&(sex, group)).copied().unwrap_or(0)
    }
}

/// Focus-variant tallies for a list of states, in request order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateSummary {
    pub who_label: String,
    pub states: Vec<(String, StateBlock)>,
    pub totals: StateBlock,
}

/// Owned accumulator behind [`state_summary`].
#[derive(Debug, Clone)]
pub struct StateSummaryAccumulator {
    target: Option<usize>,
    who_label: String,
    keys: Vec<String>,
    summary: StateSummary,
}

impl StateSummaryAccumulator {
    pub fn new(catalog: &VariantCatalog, who_label: &str, states: &[String]) -> Self {
        let target = catalog.find(who_label);
        let who_label = target
            .map(|i| catalog.label(i).to_string())
            .unwrap_or_else(|| who_label.to_string());
        StateSummaryAccumulator {
            target,
            who_label: who_label.clone(),
            keys: states.iter().map(|s| state_key(s)).collect(),
            summary: StateSummary {
                who_label,
                states: states
                    .iter()
                    .map(|s| (s.clone(), StateBlock::default()))
                    .collect(),
                totals: StateBlock::default(),
            },
        }
    }

    pub fn push(&mut self, catalog: &VariantCatalog, s: &SampleRecord) {
        if self.target.is_none() || catalog.classify(&s.pango_lineage) != self.target {
            return;
        }
        let key = state_key(&s.state);
        if let Some(pos) = self.keys.iter().position(|k| state_matches(&key, k)) {
            self.summary.states[pos].1.push(s);
            self.summary.totals.push(s);
        }
    }

    pub fn merge(&mut self, other: &StateSummaryAccumulator) {
        debug_assert_eq!(self.keys, other.keys);
        debug_assert_eq!(self.who_label, other.who_label);
        for ((_, mine), (_, theirs)) in self.summary.states.iter_mut().zip(&other.summary.states) {
            mine.merge(theirs);
        }
        self.summary.totals.merge(&other.summary.totals);
    }

    pub fn finish(self) -> StateSummary {
        self.summary
    }
}

pub fn state_summary<'a, I>(
    samples: I,
    catalog: &VariantCatalog,
    who_label: &str,
    states: &[String],
) -> StateSummary
where
    I: IntoIterator<Item = &'a SampleRecord>,
{
    let mut acc = StateSummaryAccumulator::new(catalog, who_label, states);
    for s in samples {
        acc.push(catalog, s);
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(s: &str) -> Lineage {
        Lineage::parse(s).unwrap()
    }

    fn sample(lineage: &str, clade: &str, state: &str) -> SampleRecord {
        SampleRecord {
            accession: "EPI_ISL_1".into(),
            collection_date: None,
            state: state.into(),
            pango_lineage: lin(lineage),
            gisaid_clade: clade.into(),
            patient_status: "Liberado".into(),
            age_years: Some(30),
            sex: Sex::Female,
            vaccine: None,
        }
    }

    #[test]
    fn lineage_grammar() {
        assert_eq!(lin("ay.20").as_str(), "AY.20");
        assert_eq!(lin(" B.1.617.2 ").as_str(), "B.1.617.2");
        assert_eq!(Lineage::parse(""), Err(LineageError::Empty));
        for bad in ["B..1", "1.2", "B.1a", "B.", ".1", "B-1"] {
            assert!(
                matches!(Lineage::parse(bad), Err(LineageError::Malformed(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn pattern_parsing() {
        let p = parse_pattern("B.1.1.7+Q.x").unwrap();
        assert_eq!(
            p.alternatives(),
            &[
                Alternative {
                    root: lin("B.1.1.7"),
                    include_descendants: false
                },
                Alternative {
                    root: lin("Q"),
                    include_descendants: true
                },
            ]
        );
        let p = parse_pattern("C.37").unwrap();
        assert_eq!(p.alternatives().len(), 1);
        assert!(!p.alternatives()[0].include_descendants);
        assert_eq!(parse_pattern(""), Err(PatternError::EmptyPattern));
        assert!(matches!(
            parse_pattern("B.1+ +C.1"),
            Err(PatternError::MalformedSegment(_))
        ));
        assert_eq!(
            parse_pattern("P.1 + P.1.X").unwrap().to_string(),
            "P.1+P.1.x"
        );
    }

    #[test]
    fn pattern_matching() {
        let alpha = parse_pattern("B.1.1.7+Q.x").unwrap();
        assert!(alpha.matches(&lin("Q.3")));
        assert!(alpha.matches(&lin("Q")));
        assert!(!alpha.matches(&lin("B.1.1.7.1")));
        let gamma = parse_pattern("P.1+P.1.x").unwrap();
        assert!(gamma.matches(&lin("P.1.10.2")));
        assert!(!gamma.matches(&lin("P.10")));
        let delta = parse_pattern("B.1.617.2+AY.x").unwrap();
        assert!(!delta.matches(&lin("B.1.351")));
        assert!(!delta.matches(&lin("AYX.1")));
    }

    #[test]
    fn classification() {
        let cat = VariantCatalog::builtin();
        assert_eq!(
            classify_sample(&cat, &sample("AY.20", "GK", "")).label(),
            "Delta"
        );
        assert_eq!(
            classify_sample(&cat, &sample("B.1.621", "GH", "")).label(),
            "Mu"
        );
        assert_eq!(
            classify_sample(&cat, &sample("B.1.1.519", "G", "")),
            Classification::Unclassified
        );
        assert_eq!(cat.find("jota"), cat.find("Iota"));
        assert_eq!(cat.variants().len(), 9);
    }

    #[test]
    fn status_buckets() {
        assert_eq!(bucket_status("Hospitalizado"), StatusBucket::Severe);
        assert_eq!(bucket_status("Liberado"), StatusBucket::Mild);
        assert_eq!(bucket_status("???"), StatusBucket::Unknown);
        assert_eq!(
            bucket_status("Atención ambulatoria en vivo"),
            StatusBucket::Mild
        );
        assert_eq!(
            bucket_status("Asintomático - Ambulatorio"),
            StatusBucket::Moderate
        );
        assert_eq!(
            bucket_status("Sintomático y ambulatorio"),
            StatusBucket::Moderate
        );
        assert_eq!(
            bucket_status("Ambulatorio sintomático"),
            StatusBucket::Moderate
        );
        assert_eq!(bucket_status("  FATAL "), StatusBucket::Severe);
        assert_eq!(bucket_status("Asintomático"), StatusBucket::Unknown);
        assert_eq!(bucket_status(""), StatusBucket::Unknown);
    }

    #[test]
    fn shares_and_crosstab() {
        let cat = VariantCatalog::builtin();
        let empty: Vec<SampleRecord> = Vec::new();
        assert!(variant_shares(&empty, &cat).shares.is_empty());
        assert!(clade_crosstab(&empty, &cat, "Delta").is_empty());

        let samples = vec![
            sample("AY.20", "GK", ""),
            sample("AY.20", "GK", ""),
            sample("B.1.617.2", "G", ""),
            sample("P.1", "GR", ""),
            sample("B.1.1.519", "G", ""),
        ];
        let shares = variant_shares(&samples, &cat);
        assert_eq!(shares.classified, 4);
        assert_eq!(shares.unclassified, 1);
        assert_eq!(shares.get("Delta").unwrap().pct.to_string(), "75.00");
        let ct = clade_crosstab(&samples, &cat, "Delta");
        assert_eq!(ct[&(lin("AY.20"), "GK".to_string())], 2);
        assert_eq!(ct.values().sum::<u64>(), 3);
    }

    #[test]
    fn state_summary_matches_long_names() {
        let cat = VariantCatalog::builtin();
        let mut a = sample("AY.3", "GK", "Veracruz de Ignacio de la Llave");
        a.vaccine = Some("Pfizer ".into());
        let mut b = sample("AY.3", "GK", "veracruz");
        b.vaccine = Some("pfizer".into());
        b.sex = Sex::Male;
        b.age_years = Some(60);
        let c = sample("AY.3", "G", "Estado de Puebla");
        let d = sample("P.1", "GR", "Puebla");
        let e = sample("AY.3", "GK", "Jalisco");
        let states = vec!["Puebla".to_string(), "Veracruz".to_string()];
        let sum = state_summary([&a, &b, &c, &d, &e], &cat, "Delta", &states);
        assert_eq!(sum.totals.total, 3);
        assert_eq!(sum.states[1].1.total, 2);
        assert_eq!(sum.states[1].1.vaccine("PFIZER"), 2);
        assert_eq!(sum.states[1].1.vaccines["pfizer"].label, "Pfizer");
        assert_eq!(
            sum.states[1].1.age_sex_count(Sex::Male, AgeGroup::Y60Plus),
            1
        );
        assert_eq!(sum.states[0].1.clade("G"), 1);
    }

    #[test]
    fn catalog_from_text() {
        let text = "who_label,category,clades,pango_pattern\nDelta,VOC,G;GK,B.1.617.2+AY.x\nMu,VOI,GH,B.1.621+B.1.621.1\n";
        let cat = VariantCatalog::from_reader(text.as_bytes()).unwrap();
        assert_eq!(cat.variants().len(), 2);
        assert_eq!(cat.variants()[0].gisaid_clades.len(), 2);
        let dup = "who_label,category,clades,pango_pattern\nMu,VOI,GH,B.1.621\nmu,VOI,GH,B.1.621\n";
        assert!(matches!(
            VariantCatalog::from_reader(dup.as_bytes()),
            Err(CatalogError::DuplicateLabel(_))
        ));
        let bad = "who_label,category,clades,pango_pattern\nMu,XYZ,GH,B.1.621\n";
        assert!(matches!(
            VariantCatalog::from_reader(bad.as_bytes()),
            Err(CatalogError::Line { .. })
        ));
    }
}
