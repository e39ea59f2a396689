//! Deterministic TSV, JSON and Markdown emitters for the annex tables,
//! stratum metrics and plot-ready series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::epi_metrics::{
    cell, AgeGroup, CaseCrossTabs, ComorbidityProfile, ComorbiditySubcohort, Level, MetricsReport,
    StratumKey, FATALITY_NOTE,
};
use crate::genomics::{
    shares_from_tally, GenomicTally, StateSummary, StatusBucket, VariantCatalog,
};
use crate::percent::Percentage;
use crate::schema::{
    state_name, CaseClassification, CodedFlag, Comorbidity, Sex, TreatmentStrategy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TableId {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
    T10,
    T11,
    T12,
    T13,
    G3Shares,
    G4Scatter,
    G5Stack,
    ComorbidityProfile,
    Metrics,
    Ranking,
}

impl TableId {
    pub const ALL: [TableId; 19] = [
        TableId::T1,
        TableId::T2,
        TableId::T3,
        TableId::T4,
        TableId::T5,
        TableId::T6,
        TableId::T7,
        TableId::T8,
        TableId::T9,
        TableId::T10,
        TableId::T11,
        TableId::T12,
        TableId::T13,
        TableId::G3Shares,
        TableId::G4Scatter,
        TableId::G5Stack,
        TableId::ComorbidityProfile,
        TableId::Metrics,
        TableId::Ranking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableId::T1 => "t1",
            TableId::T2 => "t2",
            TableId::T3 => "t3",
            TableId::T4 => "t4",
            TableId::T5 => "t5",
            TableId::T6 => "t6",
            TableId::T7 => "t7",
            TableId::T8 => "t8",
            TableId::T9 => "t9",
            TableId::T10 => "t10",
            TableId::T11 => "t11",
            TableId::T12 => "t12",
            TableId::T13 => "t13",
            TableId::G3Shares => "g3-shares",
            TableId::G4Scatter => "g4-scatter",
            TableId::G5Stack => "g5-stack",
            TableId::ComorbidityProfile => "comorbidity-profile",
            TableId::Metrics => "metrics",
            TableId::Ranking => "ranking",
        }
    }

    pub fn is_epi(self) -> bool {
        matches!(
            self,
            TableId::T1
                | TableId::T2
                | TableId::T3
                | TableId::T4
                | TableId::T5
                | TableId::T6
                | TableId::T7
        )
    }

    pub fn is_genomic(self) -> bool {
        matches!(
            self,
            TableId::T8
                | TableId::T9
                | TableId::T10
                | TableId::T11
                | TableId::T12
                | TableId::T13
                | TableId::G3Shares
        )
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TableId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase().replace('_', "-");
        let wanted = wanted
            .strip_prefix("table")
            .map(|n| format!("t{n}"))
            .unwrap_or(wanted);
        TableId::ALL
            .into_iter()
            .find(|t| t.name() == wanted || t.name().replace('-', "") == wanted)
            .ok_or_else(|| format!("unknown table {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Format {
    #[default]
    Tsv,
    Json,
    Markdown,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Format::Tsv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cell {
    Text(String),
    Count(u64),
    Pct(Option<Percentage>),
}

impl Cell {
    fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    fn tsv(&self) -> String {
        match self {
            Cell::Text(s) => s.replace(['\t', '\n', '\r'], " "),
            Cell::Count(n) => n.to_string(),
            Cell::Pct(Some(p)) => p.to_string(),
            Cell::Pct(None) => "NA".to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Count(n) => Value::from(*n),
            Cell::Pct(Some(p)) => Value::from(p.rounded()),
            Cell::Pct(None) => Value::Null,
        }
    }
}

/// Rendered-independent table: named columns, rows of cells and
/// free-text trailer notes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub id: TableId,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub trailer: Vec<String>,
}

impl Table {
    fn new(id: TableId, columns: &[&str]) -> Table {
        Table {
            id,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            trailer: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Vec<u8> {
        match format {
            Format::Tsv => self.to_tsv(),
            Format::Json => self.to_json(),
            Format::Markdown => self.to_markdown(),
        }
    }

    fn to_tsv(&self) -> Vec<u8> {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(Cell::tsv).collect::<Vec<_>>().join("\t"));
            out.push('\n');
        }
        for note in &self.trailer {
            out.push_str("# ");
            out.push_str(note);
            out.push('\n');
        }
        out.into_bytes()
    }

    fn to_json(&self) -> Vec<u8> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.clone(), v.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let mut doc = Map::new();
        doc.insert("table".into(), Value::String(self.id.name().into()));
        doc.insert(
            "columns".into(),
            Value::Array(self.columns.iter().cloned().map(Value::String).collect()),
        );
        doc.insert("rows".into(), Value::Array(rows));
        doc.insert(
            "notes".into(),
            Value::Array(self.trailer.iter().cloned().map(Value::String).collect()),
        );
        let mut bytes = serde_json::to_vec_pretty(&Value::Object(doc)).expect("json");
        bytes.push(b'\n');
        bytes
    }

    fn to_markdown(&self) -> Vec<u8> {
        let esc = |s: String| s.replace('|', "\\|");
        let mut out = format!("| {} |\n", self.columns.join(" | "));
        out.push_str(&format!("|{}\n", "---|".repeat(self.columns.len())));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| esc(c.tsv())).collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        if !self.trailer.is_empty() {
            out.push('\n');
            for note in &self.trailer {
                out.push_str(&format!("> {note}\n"));
            }
        }
        out.into_bytes()
    }
}

/// Inputs accepted by [`render`]; each table id takes exactly one shape.
#[derive(Debug, Clone, Copy)]
pub enum ReportData<'a> {
    CrossTabs(&'a CaseCrossTabs),
    Strata(&'a BTreeMap<StratumKey, MetricsReport>),
    Genomic {
        tally: &'a GenomicTally,
        catalog: &'a VariantCatalog,
        focus: &'a str,
    },
    States(&'a StateSummary),
    Comorbidity {
        profile: &'a ComorbidityProfile,
        subcohort: ComorbiditySubcohort,
    },
}

impl ReportData<'_> {
    fn shape(&self) -> &'static str {
        match self {
            ReportData::CrossTabs(_) => "case cross-tabs",
            ReportData::Strata(_) => "stratum metrics",
            ReportData::Genomic { .. } => "genomic tally",
            ReportData::States(_) => "state summary",
            ReportData::Comorbidity { .. } => "comorbidity profile",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("table {table} cannot be built from {got}")]
    ShapeMismatch { table: TableId, got: &'static str },
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
}

pub fn render(id: TableId, data: ReportData<'_>, format: Format) -> Result<Vec<u8>, ReportError> {
    Ok(build_table(id, data)?.render(format))
}

pub fn build_table(id: TableId, data: ReportData<'_>) -> Result<Table, ReportError> {
    let mismatch = || ReportError::ShapeMismatch {
        table: id,
        got: data.shape(),
    };
    match (id, data) {
        (TableId::T1, ReportData::CrossTabs(x)) => Ok(classification_table(
            id,
            &x.classification_by_sex,
            &CaseClassification::ALL,
        )),
        (TableId::T2, ReportData::CrossTabs(x)) => Ok(classification_table(
            id,
            &x.classification_by_sex,
            &CaseClassification::POSITIVE,
        )),
        (TableId::T3, ReportData::CrossTabs(x)) => Ok(treatment_table(x)),
        (TableId::T4, ReportData::CrossTabs(x)) => Ok(state_treatment_table(x)),
        (TableId::T5, ReportData::CrossTabs(x)) => {
            Ok(flag_table(id, "intubated", &x.intubation_by_sex))
        }
        (TableId::T6, ReportData::CrossTabs(x)) => Ok(classification_table(
            id,
            &x.deaths_by_classification_sex,
            &CaseClassification::POSITIVE,
        )),
        (TableId::T7, ReportData::CrossTabs(x)) => Ok(flag_table(id, "icu", &x.deaths_by_icu_sex)),
        (TableId::T8, ReportData::Genomic { tally, catalog, .. }) => {
            Ok(lineage_table(tally, catalog))
        }
        (
            TableId::T9,
            ReportData::Genomic {
                tally,
                catalog,
                focus,
            },
        ) => status_table(tally, catalog, focus),
        (TableId::G3Shares, ReportData::Genomic { tally, catalog, .. }) => {
            Ok(shares_table(tally, catalog))
        }
        (TableId::T10, ReportData::States(s)) => Ok(state_clade_table(s)),
        (TableId::T11, ReportData::States(s)) => Ok(state_sex_table(s)),
        (TableId::T12, ReportData::States(s)) => Ok(state_vaccine_table(s)),
        (TableId::T13, ReportData::States(s)) => Ok(state_age_sex_table(s)),
        (TableId::G4Scatter, ReportData::Strata(r)) => Ok(scatter_table(r)),
        (TableId::G5Stack, ReportData::Strata(r)) => Ok(severity_stack_table(r)),
        (TableId::Metrics, ReportData::Strata(r)) => Ok(metrics_table(r)),
        (TableId::ComorbidityProfile, ReportData::Comorbidity { profile, subcohort }) => {
            Ok(comorbidity_table(profile, subcohort))
        }
        _ => Err(mismatch()),
    }
}

const SEXES: [Sex; 2] = [Sex::Female, Sex::Male];

fn sex_cells<K: Ord>(map: &BTreeMap<K, u64>, key: impl Fn(Sex) -> K) -> Vec<Cell> {
    let f = cell(map, &key(Sex::Female));
    let m = cell(map, &key(Sex::Male));
    let u = cell(map, &key(Sex::Unspecified));
    vec![Cell::Count(f), Cell::Count(m), Cell::Count(f + m + u)]
}

fn classification_table(
    id: TableId,
    map: &BTreeMap<(CaseClassification, Sex), u64>,
    classes: &[CaseClassification],
) -> Table {
    let mut t = Table::new(id, &["classification", "female", "male", "total"]);
    for c in classes {
        let mut row = vec![Cell::text(c.label())];
        row.extend(sex_cells(map, |s| (*c, s)));
        t.push(row);
    }
    let mut row = vec![Cell::text("Total")];
    let filtered: BTreeMap<Sex, u64> = Sex::ALL
        .iter()
        .map(|s| (*s, classes.iter().map(|c| cell(map, &(*c, *s))).sum()))
        .collect();
    row.extend(sex_cells(&filtered, |s| s));
    t.push(row);
    t
}

fn treatment_table(x: &CaseCrossTabs) -> Table {
    let mut t = Table::new(TableId::T3, &["sex", "ambulatory", "hospitalized", "total"]);
    let amb = |s: Sex| cell(&x.treatment_by_sex, &(TreatmentStrategy::Ambulatory, s));
    let hosp = |s: Sex| cell(&x.treatment_by_sex, &(TreatmentStrategy::Hospitalized, s));
    for s in Sex::ALL {
        if s == Sex::Unspecified && amb(s) + hosp(s) == 0 {
            continue;
        }
        t.push(vec![
            Cell::text(s.label()),
            Cell::Count(amb(s)),
            Cell::Count(hosp(s)),
            Cell::Count(amb(s) + hosp(s)),
        ]);
    }
    let (a, h): (u64, u64) = (
        Sex::ALL.iter().map(|s| amb(*s)).sum(),
        Sex::ALL.iter().map(|s| hosp(*s)).sum(),
    );
    t.push(vec![
        Cell::text("Total"),
        Cell::Count(a),
        Cell::Count(h),
        Cell::Count(a + h),
    ]);
    t
}

fn state_treatment_table(x: &CaseCrossTabs) -> Table {
    let mut t = Table::new(
        TableId::T4,
        &[
            "state_code",
            "state",
            "ambulatory",
            "hospitalized",
            "total",
            "hospitalized_share_pct",
        ],
    );
    let states: BTreeSet<u8> = x.treatment_by_state.keys().map(|(s, _)| *s).collect();
    let amb = |s: u8| cell(&x.treatment_by_state, &(s, TreatmentStrategy::Ambulatory));
    let hosp = |s: u8| cell(&x.treatment_by_state, &(s, TreatmentStrategy::Hospitalized));
    let total_amb: u64 = states.iter().map(|s| amb(*s)).sum();
    let total_hosp: u64 = states.iter().map(|s| hosp(*s)).sum();
    for s in &states {
        t.push(vec![
            Cell::Text(s.to_string()),
            Cell::text(state_name(*s).unwrap_or("")),
            Cell::Count(amb(*s)),
            Cell::Count(hosp(*s)),
            Cell::Count(amb(*s) + hosp(*s)),
            Cell::Pct(Percentage::of(hosp(*s), total_hosp)),
        ]);
    }
    t.push(vec![
        Cell::text(""),
        Cell::text("Total"),
        Cell::Count(total_amb),
        Cell::Count(total_hosp),
        Cell::Count(total_amb + total_hosp),
        Cell::Pct(Percentage::of(total_hosp, total_hosp)),
    ]);
    t.trailer
        .push("hospitalized_share_pct = state hospitalized / national hospitalized x 100".into());
    t
}

fn flag_table(id: TableId, first: &str, map: &BTreeMap<(CodedFlag, Sex), u64>) -> Table {
    let mut t = Table::new(id, &[first, "female", "male", "total"]);
    let mut totals: BTreeMap<Sex, u64> = BTreeMap::new();
    for flag in CodedFlag::ALL {
        let present = Sex::ALL.iter().any(|s| cell(map, &(flag, *s)) > 0);
        if !present && flag == CodedFlag::Unspecified {
            continue;
        }
        for s in Sex::ALL {
            *totals.entry(s).or_default() += cell(map, &(flag, s));
        }
        let mut row = vec![Cell::text(flag.label())];
        row.extend(sex_cells(map, |s| (flag, s)));
        t.push(row);
    }
    let mut row = vec![Cell::text("Total")];
    row.extend(sex_cells(&totals, |s| s));
    t.push(row);
    t
}

fn lineage_table(tally: &GenomicTally, catalog: &VariantCatalog) -> Table {
    let mut t = Table::new(
        TableId::T8,
        &["who_label", "pango_lineage", "clade", "count"],
    );
    for ((i, lineage, clade), n) in &tally.lineage_clade {
        t.push(vec![
            Cell::text(catalog.label(*i)),
            Cell::text(lineage.as_str()),
            Cell::text(clade.as_str()),
            Cell::Count(*n),
        ]);
    }
    t.push(vec![
        Cell::text("Total"),
        Cell::text(""),
        Cell::text(""),
        Cell::Count(tally.classified()),
    ]);
    if tally.unclassified > 0 {
        t.trailer.push(format!(
            "{} samples matched no catalog variant",
            tally.unclassified
        ));
    }
    t
}

fn status_table(
    tally: &GenomicTally,
    catalog: &VariantCatalog,
    focus: &str,
) -> Result<Table, ReportError> {
    let index = catalog
        .find(focus)
        .ok_or_else(|| ReportError::UnknownVariant(focus.to_string()))?;
    let mut t = Table::new(
        TableId::T9,
        &["patient_status", "status_bucket", "clade", "count"],
    );
    let mut rows: Vec<(StatusBucket, &str, &str, u64)> = tally
        .status_labels
        .iter()
        .filter(|((i, _, _), _)| *i == index)
        .map(|((_, label, clade), n)| {
            (
                crate::genomics::bucket_status(label),
                label.as_str(),
                clade.as_str(),
                *n,
            )
        })
        .collect();
    rows.sort();
    for (bucket, label, clade, n) in rows {
        t.push(vec![
            Cell::text(label),
            Cell::text(bucket.label()),
            Cell::text(clade),
            Cell::Count(n),
        ]);
    }
    let buckets = tally.status_buckets(index);
    let total = tally.variant_count(index);
    for b in StatusBucket::ALL {
        let n = buckets.get(&b).copied().unwrap_or(0);
        let pct = Percentage::of(n, total).map_or("NA".to_string(), |p| p.to_string());
        t.trailer.push(format!(
            "{} {} {n} ({pct}%)",
            catalog.label(index),
            b.label()
        ));
    }
    Ok(t)
}

fn shares_table(tally: &GenomicTally, catalog: &VariantCatalog) -> Table {
    let mut t = Table::new(
        TableId::G3Shares,
        &["who_label", "category", "count", "share_pct"],
    );
    let shares = shares_from_tally(tally, catalog);
    for s in &shares.shares {
        t.push(vec![
            Cell::text(s.who_label.as_str()),
            Cell::text(s.category.code()),
            Cell::Count(s.count),
            Cell::Pct(Some(s.pct)),
        ]);
    }
    t.trailer.push(format!(
        "classified {}; unclassified {} (excluded from share denominators)",
        shares.classified, shares.unclassified
    ));
    t
}

fn clade_columns(s: &StateSummary) -> Vec<String> {
    s.totals.clades.keys().cloned().collect()
}

fn state_clade_table(s: &StateSummary) -> Table {
    let clades = clade_columns(s);
    let mut cols = vec!["state".to_string()];
    cols.extend(clades.iter().map(|c| format!("clade_{}", c.to_lowercase())));
    cols.push("total".into());
    let mut t = Table {
        id: TableId::T10,
        columns: cols,
        rows: Vec::new(),
        trailer: Vec::new(),
    };
    for (name, block) in s
        .states
        .iter()
        .map(|(n, b)| (n.as_str(), b))
        .chain([("Total", &s.totals)])
    {
        let mut row = vec![Cell::text(name)];
        row.extend(clades.iter().map(|c| Cell::Count(block.clade(c))));
        row.push(Cell::Count(block.total));
        t.push(row);
    }
    if let Some((name, block)) = s.states.iter().max_by_key(|(_, b)| b.total) {
        if let Some(p) = Percentage::of(block.total, s.totals.total) {
            t.trailer
                .push(format!("{name} holds {p}% of the selected-state total"));
        }
    }
    t
}

fn state_sex_table(s: &StateSummary) -> Table {
    let mut t = Table::new(TableId::T11, &["state", "female", "male", "total"]);
    for (name, block) in s
        .states
        .iter()
        .map(|(n, b)| (n.as_str(), b))
        .chain([("Total", &s.totals)])
    {
        t.push(vec![
            Cell::text(name),
            Cell::Count(block.sex_count(Sex::Female)),
            Cell::Count(block.sex_count(Sex::Male)),
            Cell::Count(block.total),
        ]);
    }
    t
}

fn state_vaccine_table(s: &StateSummary) -> Table {
    let vaccines: Vec<(&String, &str)> = s
        .totals
        .vaccines
        .iter()
        .map(|(k, v)| (k, v.label.as_str()))
        .collect();
    let mut cols = vec!["state".to_string()];
    cols.extend(vaccines.iter().map(|(_, label)| label.to_string()));
    cols.push("total".into());
    let mut t = Table {
        id: TableId::T12,
        columns: cols,
        rows: Vec::new(),
        trailer: Vec::new(),
    };
    for (name, block) in s
        .states
        .iter()
        .map(|(n, b)| (n.as_str(), b))
        .chain([("Total", &s.totals)])
    {
        let mut row = vec![Cell::text(name)];
        let counts: Vec<u64> = vaccines
            .iter()
            .map(|(k, _)| block.vaccines.get(*k).map_or(0, |v| v.count))
            .collect();
        row.extend(counts.iter().map(|n| Cell::Count(*n)));
        row.push(Cell::Count(counts.iter().sum()));
        t.push(row);
    }
    t
}

const AGE_BINS: [AgeGroup; 4] = [
    AgeGroup::Y0To20,
    AgeGroup::Y21To40,
    AgeGroup::Y41To59,
    AgeGroup::Y60Plus,
];

fn age_column(group: AgeGroup) -> &'static str {
    match group {
        AgeGroup::Y0To20 => "0_20",
        AgeGroup::Y21To40 => "21_40",
        AgeGroup::Y41To59 => "41_59",
        AgeGroup::Y60Plus => "60_plus",
        AgeGroup::Unknown => "unknown",
    }
}

fn state_age_sex_table(s: &StateSummary) -> Table {
    let mut cols = vec!["state".to_string()];
    for sex in SEXES {
        for g in AGE_BINS {
            cols.push(format!("{}_{}", sex.label().to_lowercase(), age_column(g)));
        }
    }
    cols.push("total".into());
    let mut t = Table {
        id: TableId::T13,
        columns: cols,
        rows: Vec::new(),
        trailer: Vec::new(),
    };
    for (name, block) in s
        .states
        .iter()
        .map(|(n, b)| (n.as_str(), b))
        .chain([("Total", &s.totals)])
    {
        let mut row = vec![Cell::text(name)];
        for sex in SEXES {
            for g in AGE_BINS {
                row.push(Cell::Count(block.age_sex_count(sex, g)));
            }
        }
        row.push(Cell::Count(block.total));
        t.push(row);
    }
    t
}

fn state_rows(
    reports: &BTreeMap<StratumKey, MetricsReport>,
) -> impl Iterator<Item = (u8, &MetricsReport)> {
    reports.iter().filter_map(|(k, r)| {
        let state = *k.state_code.value()?;
        (k.municipality_code == Level::All && k.sex == Level::All && k.age_group == Level::All)
            .then_some((state, r))
    })
}

fn scatter_table(reports: &BTreeMap<StratumKey, MetricsReport>) -> Table {
    let mut t = Table::new(
        TableId::G4Scatter,
        &["state_code", "state", "fatality_pct", "positivity_pct"],
    );
    for (state, r) in state_rows(reports) {
        t.push(vec![
            Cell::Text(state.to_string()),
            Cell::text(state_name(state).unwrap_or("")),
            Cell::Pct(r.fatality_rate_pct),
            Cell::Pct(r.positivity_pct),
        ]);
    }
    t.trailer.push(FATALITY_NOTE.into());
    t
}

fn severity_stack_table(reports: &BTreeMap<StratumKey, MetricsReport>) -> Table {
    let mut t = Table::new(
        TableId::G5Stack,
        &["state_code", "state", "tgi1", "tgi2", "tgi3"],
    );
    for (state, r) in state_rows(reports) {
        match r.severity {
            Some(s) => t.push(vec![
                Cell::Text(state.to_string()),
                Cell::text(state_name(state).unwrap_or("")),
                Cell::Pct(Some(s.tgi1)),
                Cell::Pct(Some(s.tgi2)),
                Cell::Pct(Some(s.tgi3)),
            ]),
            None => t
                .trailer
                .push(format!("state {state} omitted: no positive cases")),
        }
    }
    t
}

/// Per-state mild/moderate/severe shares; states without positives are
/// left out and listed in the trailer.
pub fn render_severity_stack(
    reports: &BTreeMap<StratumKey, MetricsReport>,
    format: Format,
) -> Vec<u8> {
    severity_stack_table(reports).render(format)
}

/// States ordered as given, one row per `(state code, value)` pair.
pub fn render_ranking(ranked: &[(u8, Percentage)], metric: &str, format: Format) -> Vec<u8> {
    let column = format!("{metric}_pct");
    let mut t = Table::new(TableId::Ranking, &["rank", "state_code", "state", &column]);
    for (i, (state, value)) in ranked.iter().enumerate() {
        t.push(vec![
            Cell::Count(i as u64 + 1),
            Cell::Text(state.to_string()),
            Cell::text(state_name(*state).unwrap_or("")),
            Cell::Pct(Some(*value)),
        ]);
    }
    if metric == "fatality" {
        t.trailer.push(FATALITY_NOTE.into());
    }
    t.render(format)
}

fn level_text<T: ToString>(l: &Level<T>) -> String {
    match l {
        Level::Value(v) => v.to_string(),
        Level::All => "all".into(),
    }
}

fn metrics_table(reports: &BTreeMap<StratumKey, MetricsReport>) -> Table {
    let mut t = Table::new(
        TableId::Metrics,
        &[
            "state_code",
            "municipality_code",
            "sex",
            "age_group",
            "total",
            "positive",
            "negative",
            "invalid",
            "not_performed",
            "suspect",
            "ambulatory",
            "hospitalized",
            "icu_and_intubated",
            "deaths",
            "fatality_pct",
            "positivity_pct",
            "tgi1",
            "tgi2",
            "tgi3",
        ],
    );
    for (k, r) in reports {
        let c = &r.counts;
        let sev = r.severity;
        t.push(vec![
            Cell::Text(level_text(&k.state_code)),
            Cell::Text(level_text(&k.municipality_code)),
            Cell::Text(match k.sex {
                Level::Value(s) => s.label().to_lowercase(),
                Level::All => "all".into(),
            }),
            Cell::Text(match k.age_group {
                Level::Value(g) => g.label().into(),
                Level::All => "all".into(),
            }),
            Cell::Count(c.total),
            Cell::Count(c.positive),
            Cell::Count(c.negative),
            Cell::Count(c.invalid),
            Cell::Count(c.not_performed),
            Cell::Count(c.suspect),
            Cell::Count(c.ambulatory_pos),
            Cell::Count(c.hospitalized_pos),
            Cell::Count(c.icu_and_intubated_pos),
            Cell::Count(c.deaths_pos),
            Cell::Pct(r.fatality_rate_pct),
            Cell::Pct(r.positivity_pct),
            Cell::Pct(sev.map(|s| s.tgi1)),
            Cell::Pct(sev.map(|s| s.tgi2)),
            Cell::Pct(sev.map(|s| s.tgi3)),
        ]);
    }
    t.trailer.push(FATALITY_NOTE.into());
    t
}

fn comorbidity_table(profile: &ComorbidityProfile, subcohort: ComorbiditySubcohort) -> Table {
    let mut cols = vec!["comorbidity"];
    cols.extend(AgeGroup::ALL.iter().map(|g| age_column(*g)));
    cols.push("total");
    let mut t = Table::new(TableId::ComorbidityProfile, &cols);
    for c in Comorbidity::ALL {
        let counts: Vec<u64> = AgeGroup::ALL.iter().map(|g| profile.get(c, *g)).collect();
        let mut row = vec![Cell::text(c.name())];
        row.extend(counts.iter().map(|n| Cell::Count(*n)));
        row.push(Cell::Count(counts.iter().sum()));
        t.push(row);
    }
    let name = match subcohort {
        ComorbiditySubcohort::HospitalizedPositive => "hospitalized positives",
        ComorbiditySubcohort::DeathsPositive => "deaths among positives",
        ComorbiditySubcohort::DeathsIcuIntubated => "deaths among ICU and intubated positives",
    };
    t.trailer.push(format!("subcohort: {name}"));
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epi_metrics::{CaseCounts, PositivityMode, SeverityCriterion};

    fn t1_tabs() -> CaseCrossTabs {
        let mut x = CaseCrossTabs::default();
        let rows: [(u64, u64); 7] = [
            (570, 589),
            (29, 62),
            (9316, 10728),
            (34, 38),
            (260, 246),
            (2746, 2602),
            (17067, 14452),
        ];
        for (c, (f, m)) in CaseClassification::ALL.iter().zip(rows) {
            x.classification_by_sex.insert((*c, Sex::Female), f);
            x.classification_by_sex.insert((*c, Sex::Male), m);
        }
        x
    }

    #[test]
    fn t1_totals_row() {
        let out = String::from_utf8(
            render(TableId::T1, ReportData::CrossTabs(&t1_tabs()), Format::Tsv).unwrap(),
        )
        .unwrap();
        assert!(out.starts_with("classification\tfemale\tmale\ttotal\n"));
        assert!(out.contains("\nTotal\t30022\t28717\t58739\n"), "{out}");
        let t2 = String::from_utf8(
            render(TableId::T2, ReportData::CrossTabs(&t1_tabs()), Format::Tsv).unwrap(),
        )
        .unwrap();
        assert!(t2.contains("\nTotal\t9915\t11379\t21294\n"));
    }

    #[test]
    fn shape_mismatch() {
        let reports = BTreeMap::new();
        assert!(matches!(
            render(TableId::T1, ReportData::Strata(&reports), Format::Tsv),
            Err(ReportError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn empty_strata_give_header_only() {
        let reports = BTreeMap::new();
        let out = String::from_utf8(
            render(
                TableId::G4Scatter,
                ReportData::Strata(&reports),
                Format::Tsv,
            )
            .unwrap(),
        )
        .unwrap();
        let body: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(
            body,
            vec!["state_code\tstate\tfatality_pct\tpositivity_pct"]
        );
    }

    fn state(code: u8, counts: CaseCounts) -> (StratumKey, MetricsReport) {
        (
            StratumKey {
                state_code: Level::Value(code),
                ..StratumKey::NATIONAL
            },
            MetricsReport::from_counts(
                counts,
                SeverityCriterion::default(),
                PositivityMode::default(),
            ),
        )
    }

    #[test]
    fn severity_stack_rows() {
        let puebla = CaseCounts {
            total: 1000,
            positive: 1000,
            ambulatory_pos: 300,
            hospitalized_pos: 700,
            icu_pos: 522,
            intubated_pos: 522,
            icu_and_intubated_pos: 522,
            ..Default::default()
        };
        let reports: BTreeMap<_, _> = [
            state(21, puebla),
            state(4, puebla),
            state(9, CaseCounts::zero()),
        ]
        .into();
        let out = String::from_utf8(render_severity_stack(&reports, Format::Tsv)).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[1], "4\tCampeche\t30.00\t17.80\t52.20");
        assert!(lines[2].starts_with("21\tPuebla\t"));
        assert_eq!(lines[3], "# state 9 omitted: no positive cases");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn json_uses_nulls_and_round_trips() {
        let reports: BTreeMap<_, _> = [state(9, CaseCounts::zero())].into();
        let out = render(
            TableId::G4Scatter,
            ReportData::Strata(&reports),
            Format::Json,
        )
        .unwrap();
        let v: Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(v["rows"][0]["fatality_pct"], Value::Null);
        assert_eq!(v["rows"][0]["state_code"], "9");
        let again = render(
            TableId::G4Scatter,
            ReportData::Strata(&reports),
            Format::Json,
        )
        .unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn table_ids_parse() {
        assert_eq!("table8".parse::<TableId>().unwrap(), TableId::T8);
        assert_eq!("T13".parse::<TableId>().unwrap(), TableId::T13);
        assert_eq!("g4_scatter".parse::<TableId>().unwrap(), TableId::G4Scatter);
        assert_eq!(
            "comorbidity-profile".parse::<TableId>().unwrap(),
            TableId::ComorbidityProfile
        );
        assert!("t99".parse::<TableId>().is_err());
    }

    #[test]
    fn markdown_layout() {
        let out = String::from_utf8(
            render(
                TableId::T1,
                ReportData::CrossTabs(&t1_tabs()),
                Format::Markdown,
            )
            .unwrap(),
        )
        .unwrap();
        assert!(out.starts_with("| classification | female | male | total |\n|---|---|---|---|\n"));
        assert!(out.contains("| Total | 30022 | 28717 | 58739 |"));
    }

    #[test]
    fn ranking_rows_keep_order() {
        let ranked = [
            (20, Percentage::of(1, 3).unwrap()),
            (4, Percentage::of(1, 4).unwrap()),
        ];
        let out = String::from_utf8(render_ranking(&ranked, "positivity", Format::Tsv)).unwrap();
        assert_eq!(
            out,
            "rank\tstate_code\tstate\tpositivity_pct\n1\t20\tOaxaca\t33.33\n2\t4\tCampeche\t25.00\n"
        );
        let out = String::from_utf8(render_ranking(&ranked, "fatality", Format::Tsv)).unwrap();
        assert!(out.ends_with(&format!("# {FATALITY_NOTE}\n")));
    }
}
