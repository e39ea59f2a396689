//! Cohort filtering, single-pass stratified accumulation and the indicator
//! formulas: fatality rate, positivity index and the three-level severity
//! typology.
//!
//! Every accumulator here is a commutative monoid under `merge`, so a file
//! can be split into shards, accumulated independently and combined with
//! results identical to a single pass.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::percent::Percentage;
use crate::schema::{
    CaseClassification, CodedFlag, Comorbidity, PatientRecord, Sex, TreatmentStrategy,
};

/// Emitted next to every fatality figure.
pub const FATALITY_NOTE: &str = "fatality_pct = deaths among confirmed positives / confirmed positives x 100; \
published summaries quoting 13.5% nationally do not follow from the published counts (3321 / 21294 = 15.60%)";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CohortFilter {
    pub indigenous_only: bool,
    pub states: Option<BTreeSet<u8>>,
    pub municipalities: Option<BTreeSet<u16>>,
    pub sexes: Option<BTreeSet<Sex>>,
    /// Inclusive onset-date window; records without an onset date are excluded when set.
    pub onset_date_range: Option<(NaiveDate, NaiveDate)>,
}

impl CohortFilter {
    pub fn indigenous() -> Self {
        CohortFilter {
            indigenous_only: true,
            ..Default::default()
        }
    }

    pub fn admits(&self, r: &PatientRecord) -> bool {
        if self.indigenous_only && r.speaks_indigenous_language != CodedFlag::Yes {
            return false;
        }
        if let Some(states) = &self.states {
            if !states.contains(&r.state_code) {
                return false;
            }
        }
        if let Some(m) = &self.municipalities {
            if !m.contains(&r.municipality_code) {
                return false;
            }
        }
        if let Some(sexes) = &self.sexes {
            if !sexes.contains(&r.sex) {
                return false;
            }
        }
        if let Some((start, end)) = self.onset_date_range {
            match r.symptom_onset_date {
                Some(d) if d >= start && d <= end => {}
                _ => return false,
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    #[serde(rename = "0-20")]
    Y0To20,
    #[serde(rename = "21-40")]
    Y21To40,
    #[serde(rename = "41-59")]
    Y41To59,
    #[serde(rename = "60+")]
    Y60Plus,
    #[serde(rename = "unknown")]
    Unknown,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 5] = [
        AgeGroup::Y0To20,
        AgeGroup::Y21To40,
        AgeGroup::Y41To59,
        AgeGroup::Y60Plus,
        AgeGroup::Unknown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AgeGroup::Y0To20 => "0-20",
            AgeGroup::Y21To40 => "21-40",
            AgeGroup::Y41To59 => "41-59",
            AgeGroup::Y60Plus => "60+",
            AgeGroup::Unknown => "unknown",
        }
    }

    /// Inclusive age bounds of the bin.
    pub fn bounds(self) -> Option<(u16, u16)> {
        match self {
            AgeGroup::Y0To20 => Some((0, 20)),
            AgeGroup::Y21To40 => Some((21, 40)),
            AgeGroup::Y41To59 => Some((41, 59)),
            AgeGroup::Y60Plus => Some((60, u16::MAX)),
            AgeGroup::Unknown => None,
        }
    }
}

/// Bins: [0,20], [21,40], [41,59], [60,∞). Age 60 belongs to the open bin.
pub fn age_group(age: Option<u16>) -> AgeGroup {
    match age {
        None => AgeGroup::Unknown,
        Some(0..=20) => AgeGroup::Y0To20,
        Some(21..=40) => AgeGroup::Y21To40,
        Some(41..=59) => AgeGroup::Y41To59,
        Some(_) => AgeGroup::Y60Plus,
    }
}

/// A stratum coordinate; `All` aggregates over the dimension.
/// `All` orders after every value so national rows sort last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level<T> {
    Value(T),
    All,
}

impl<T> Level<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Level::Value(v) => Some(v),
            Level::All => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub state_code: Level<u8>,
    pub municipality_code: Level<u16>,
    pub sex: Level<Sex>,
    pub age_group: Level<AgeGroup>,
}

impl StratumKey {
    pub const NATIONAL: StratumKey = StratumKey {
        state_code: Level::All,
        municipality_code: Level::All,
        sex: Level::All,
        age_group: Level::All,
    };

    pub fn is_national(&self) -> bool {
        *self == Self::NATIONAL
    }
}

/// Stratification dimensions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupBy {
    pub state: bool,
    pub municipality: bool,
    pub sex: bool,
    pub age_group: bool,
}

impl GroupBy {
    pub const NONE: GroupBy = GroupBy {
        state: false,
        municipality: false,
        sex: false,
        age_group: false,
    };

    pub const STATE: GroupBy = GroupBy {
        state: true,
        municipality: false,
        sex: false,
        age_group: false,
    };

    pub fn key_for(&self, r: &PatientRecord) -> StratumKey {
        StratumKey {
            state_code: if self.state {
                Level::Value(r.state_code)
            } else {
                Level::All
            },
            municipality_code: if self.municipality {
                Level::Value(r.municipality_code)
            } else {
                Level::All
            },
            sex: if self.sex {
                Level::Value(r.sex)
            } else {
                Level::All
            },
            age_group: if self.age_group {
                Level::Value(age_group(r.age_years))
            } else {
                Level::All
            },
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == GroupBy::NONE
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown group-by dimension {0:?} (expected state, municipality, sex, age-group)")]
pub struct UnknownDimension(pub String);

impl FromStr for GroupBy {
    type Err = UnknownDimension;

    /// Comma-separated list, e.g. `state,sex`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut g = GroupBy::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().replace('_', "-").as_str() {
                "state" => g.state = true,
                "municipality" => g.municipality = true,
                "sex" => g.sex = true,
                "age-group" | "age" => g.age_group = true,
                _ => return Err(UnknownDimension(part.to_string())),
            }
        }
        Ok(g)
    }
}

/// Tallies for one stratum.
///
/// ICU and intubation are counted among hospitalized positives only, with
/// a flag counting when it is `Yes`; not-applicable, ignored and
/// unspecified count as not severe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaseCounts {
    pub total: u64,
    pub positive: u64,
    pub negative: u64,
    pub invalid: u64,
    pub not_performed: u64,
    pub suspect: u64,
    pub ambulatory_pos: u64,
    pub hospitalized_pos: u64,
    pub icu_pos: u64,
    pub intubated_pos: u64,
    pub icu_and_intubated_pos: u64,
    pub deaths_pos: u64,
    pub deaths_icu_intubated_pos: u64,
}

impl CaseCounts {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn add_record(&mut self, r: &PatientRecord) {
        self.total += 1;
        match r.classification {
            CaseClassification::ConfirmedByEpidemiologicalAssociation
            | CaseClassification::ConfirmedByAdjudicationCommittee
            | CaseClassification::ConfirmedSarsCov2 => self.positive += 1,
            CaseClassification::InvalidByLaboratory => self.invalid += 1,
            CaseClassification::NotPerformedByLaboratory => self.not_performed += 1,
            CaseClassification::Suspect => self.suspect += 1,
            CaseClassification::NegativeSarsCov2 => self.negative += 1,
        }
        if !r.is_positive() {
            return;
        }
        let mut severe_death = false;
        match r.treatment {
            TreatmentStrategy::Ambulatory => self.ambulatory_pos += 1,
            TreatmentStrategy::Hospitalized => {
                self.hospitalized_pos += 1;
                let icu = r.icu.is_yes();
                let intubated = r.intubated.is_yes();
                self.icu_pos += u64::from(icu);
                self.intubated_pos += u64::from(intubated);
                self.icu_and_intubated_pos += u64::from(icu && intubated);
                severe_death = icu && intubated;
            }
        }
        if r.is_dead() {
            self.deaths_pos += 1;
            self.deaths_icu_intubated_pos += u64::from(severe_death);
        }
    }

    pub fn merge(&self, other: &CaseCounts) -> CaseCounts {
        *self + *other
    }

    /// Sum of the five classification tallies.
    pub fn classified_total(&self) -> u64 {
        self.positive + self.negative + self.invalid + self.not_performed + self.suspect
    }
}

impl Add for CaseCounts {
    type Output = CaseCounts;

    fn add(mut self, rhs: CaseCounts) -> CaseCounts {
        self += rhs;
        self
    }
}

impl AddAssign for CaseCounts {
    fn add_assign(&mut self, rhs: CaseCounts) {
        self.total += rhs.total;
        self.positive += rhs.positive;
        self.negative += rhs.negative;
        self.invalid += rhs.invalid;
        self.not_performed += rhs.not_performed;
        self.suspect += rhs.suspect;
        self.ambulatory_pos += rhs.ambulatory_pos;
        self.hospitalized_pos += rhs.hospitalized_pos;
        self.icu_pos += rhs.icu_pos;
        self.intubated_pos += rhs.intubated_pos;
        self.icu_and_intubated_pos += rhs.icu_and_intubated_pos;
        self.deaths_pos += rhs.deaths_pos;
        self.deaths_icu_intubated_pos += rhs.deaths_icu_intubated_pos;
    }
}

pub fn accumulate(mut acc: CaseCounts, r: &PatientRecord) -> CaseCounts {
    acc.add_record(r);
    acc
}

pub fn merge(a: &CaseCounts, b: &CaseCounts) -> CaseCounts {
    a.merge(b)
}

pub fn fatality_rate(c: &CaseCounts) -> Option<Percentage> {
    Percentage::of(c.deaths_pos, c.positive)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositivityMode {
    /// Denominator is every registered case: the negative side aggregates
    /// invalid, not performed, suspect and lab-negative.
    #[default]
    AggregateNegative,
    /// Denominator is positives plus lab-negatives only.
    StrictLabNegative,
}

pub fn positivity_index(c: &CaseCounts, mode: PositivityMode) -> Option<Percentage> {
    match mode {
        PositivityMode::AggregateNegative => Percentage::of(c.positive, c.total),
        PositivityMode::StrictLabNegative => Percentage::of(c.positive, c.positive + c.negative),
    }
}

/// Which hospitalized positives count as severe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeverityCriterion {
    IntubationOnly,
    IcuOnly,
    #[default]
    IcuAndIntubation,
    IcuOrIntubation,
}

impl SeverityCriterion {
    pub fn severe_count(self, c: &CaseCounts) -> u64 {
        match self {
            SeverityCriterion::IntubationOnly => c.intubated_pos,
            SeverityCriterion::IcuOnly => c.icu_pos,
            SeverityCriterion::IcuAndIntubation => c.icu_and_intubated_pos,
            SeverityCriterion::IcuOrIntubation => {
                c.icu_pos + c.intubated_pos - c.icu_and_intubated_pos
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeverityRates {
    pub tgi1: Percentage,
    pub tgi2: Percentage,
    pub tgi3: Percentage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("severity rates are undefined for a cohort with no positive cases")]
    UndefinedForEmptyCohort,
}

/// Mild (ambulatory), moderate (hospitalized, not severe) and severe shares
/// of confirmed positives.
pub fn severity_rates(
    c: &CaseCounts,
    crit: SeverityCriterion,
) -> Result<SeverityRates, MetricsError> {
    if c.positive == 0 {
        return Err(MetricsError::UndefinedForEmptyCohort);
    }
    let severe = crit.severe_count(c);
    let pct = |n| Percentage::of(n, c.positive).expect("positive > 0");
    Ok(SeverityRates {
        tgi1: pct(c.ambulatory_pos),
        tgi2: pct(c.hospitalized_pos - severe),
        tgi3: pct(severe),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricsReport {
    pub fatality_rate_pct: Option<Percentage>,
    pub positivity_pct: Option<Percentage>,
    pub severity: Option<SeverityRates>,
    pub counts: CaseCounts,
}

impl MetricsReport {
    pub fn from_counts(counts: CaseCounts, crit: SeverityCriterion, mode: PositivityMode) -> Self {
        MetricsReport {
            fatality_rate_pct: fatality_rate(&counts),
            positivity_pct: positivity_index(&counts, mode),
            severity: severity_rates(&counts, crit).ok(),
            counts,
        }
    }
}

/// Owned per-shard accumulator for [`stratified_report`].
#[derive(Debug, Clone)]
pub struct StratifiedAccumulator {
    filter: CohortFilter,
    group_by: GroupBy,
    national: CaseCounts,
    strata: BTreeMap<StratumKey, CaseCounts>,
}

impl StratifiedAccumulator {
    pub fn new(filter: CohortFilter, group_by: GroupBy) -> Self {
        StratifiedAccumulator {
            filter,
            group_by,
            national: CaseCounts::zero(),
            strata: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, r: &PatientRecord) {
        if !self.filter.admits(r) {
            return;
        }
        self.national.add_record(r);
        if !self.group_by.is_empty() {
            self.strata
                .entry(self.group_by.key_for(r))
                .or_default()
                .add_record(r);
        }
    }

    pub fn merge(&mut self, other: StratifiedAccumulator) {
        self.national += other.national;
        for (k, v) in other.strata {
            *self.strata.entry(k).or_default() += v;
        }
    }

    pub fn national(&self) -> &CaseCounts {
        &self.national
    }

    /// Leaf strata plus the national stratum.
    pub fn counts(&self) -> BTreeMap<StratumKey, CaseCounts> {
        let mut out = self.strata.clone();
        out.insert(StratumKey::NATIONAL, self.national);
        out
    }

    pub fn finish(
        &self,
        crit: SeverityCriterion,
        mode: PositivityMode,
    ) -> BTreeMap<StratumKey, MetricsReport> {
        self.counts()
            .into_iter()
            .map(|(k, c)| (k, MetricsReport::from_counts(c, crit, mode)))
            .collect()
    }
}

pub fn stratified_report<'a, I>(
    records: I,
    filter: &CohortFilter,
    group_by: GroupBy,
    crit: SeverityCriterion,
    mode: PositivityMode,
) -> BTreeMap<StratumKey, MetricsReport>
where
    I: IntoIterator<Item = &'a PatientRecord>,
{
    let mut acc = StratifiedAccumulator::new(filter.clone(), group_by);
    for r in records {
        acc.push(r);
    }
    acc.finish(crit, mode)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComorbiditySubcohort {
    #[default]
    HospitalizedPositive,
    DeathsPositive,
    DeathsIcuIntubated,
}

impl ComorbiditySubcohort {
    pub fn contains(self, r: &PatientRecord) -> bool {
        if !r.is_positive() {
            return false;
        }
        match self {
            ComorbiditySubcohort::HospitalizedPositive => {
                r.treatment == TreatmentStrategy::Hospitalized
            }
            ComorbiditySubcohort::DeathsPositive => r.is_dead(),
            ComorbiditySubcohort::DeathsIcuIntubated => {
                r.is_dead()
                    && r.treatment == TreatmentStrategy::Hospitalized
                    && r.icu.is_yes()
                    && r.intubated.is_yes()
            }
        }
    }
}

/// Comorbidity × age-group counts over one subcohort.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComorbidityProfile {
    pub cells: BTreeMap<(Comorbidity, AgeGroup), u64>,
}

impl ComorbidityProfile {
    pub fn push(&mut self, r: &PatientRecord, subcohort: ComorbiditySubcohort) {
        if !subcohort.contains(r) {
            return;
        }
        let group = age_group(r.age_years);
        for (c, flag) in r.comorbidities.iter() {
            if flag.is_yes() {
                *self.cells.entry((c, group)).or_default() += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &ComorbidityProfile) {
        for (k, v) in &other.cells {
            *self.cells.entry(*k).or_default() += v;
        }
    }

    pub fn get(&self, c: Comorbidity, g: AgeGroup) -> u64 {
        self.cells.get(&(c, g)).copied().unwrap_or(0)
    }
}

pub fn comorbidity_profile<'a, I>(
    records: I,
    filter: &CohortFilter,
    subcohort: ComorbiditySubcohort,
) -> ComorbidityProfile
where
    I: IntoIterator<Item = &'a PatientRecord>,
{
    let mut profile = ComorbidityProfile::default();
    for r in records.into_iter().filter(|r| filter.admits(r)) {
        profile.push(r, subcohort);
    }
    profile
}

/// Sex-split cross-tabs behind the national annex tables: classification,
/// treatment, per-state treatment, intubation and death breakdowns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CaseCrossTabs {
    pub classification_by_sex: BTreeMap<(CaseClassification, Sex), u64>,
    pub treatment_by_sex: BTreeMap<(TreatmentStrategy, Sex), u64>,
    pub treatment_by_state: BTreeMap<(u8, TreatmentStrategy), u64>,
    pub intubation_by_sex: BTreeMap<(CodedFlag, Sex), u64>,
    pub deaths_by_classification_sex: BTreeMap<(CaseClassification, Sex), u64>,
    pub deaths_by_icu_sex: BTreeMap<(CodedFlag, Sex), u64>,
}

fn bump<K: Ord>(map: &mut BTreeMap<K, u64>, key: K) {
    *map.entry(key).or_default() += 1;
}

fn merge_map<K: Ord + Clone>(into: &mut BTreeMap<K, u64>, from: &BTreeMap<K, u64>) {
    for (k, v) in from {
        *into.entry(k.clone()).or_default() += v;
    }
}

impl CaseCrossTabs {
    pub fn push(&mut self, r: &PatientRecord) {
        bump(&mut self.classification_by_sex, (r.classification, r.sex));
        if !r.is_positive() {
            return;
        }
        bump(&mut self.treatment_by_sex, (r.treatment, r.sex));
        bump(&mut self.treatment_by_state, (r.state_code, r.treatment));
        bump(&mut self.intubation_by_sex, (r.intubated, r.sex));
        if r.is_dead() {
            bump(
                &mut self.deaths_by_classification_sex,
                (r.classification, r.sex),
            );
            bump(&mut self.deaths_by_icu_sex, (r.icu, r.sex));
        }
    }

    pub fn merge(&mut self, other: &CaseCrossTabs) {
        merge_map(
            &mut self.classification_by_sex,
            &other.classification_by_sex,
        );
        merge_map(&mut self.treatment_by_sex, &other.treatment_by_sex);
        merge_map(&mut self.treatment_by_state, &other.treatment_by_state);
        merge_map(&mut self.intubation_by_sex, &other.intubation_by_sex);
        merge_map(
            &mut self.deaths_by_classification_sex,
            &other.deaths_by_classification_sex,
        );
        merge_map(&mut self.deaths_by_icu_sex, &other.deaths_by_icu_sex);
    }
}

pub fn cell<K: Ord>(map: &BTreeMap<K, u64>, key: &K) -> u64 {
    map.get(key).copied().unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RankMetric {
    Fatality,
    Positivity,
    Tgi3,
}

impl FromStr for RankMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fatality" => Ok(RankMetric::Fatality),
            "positivity" => Ok(RankMetric::Positivity),
            "tgi3" | "severity" => Ok(RankMetric::Tgi3),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// State-level strata (state set, every other dimension `All`) ordered by
/// the metric descending, ties by ascending state code. Undefined values
/// are left out.
pub fn rank_states(
    reports: &BTreeMap<StratumKey, MetricsReport>,
    metric: RankMetric,
) -> Vec<(u8, Percentage)> {
    let mut ranked: Vec<(u8, Percentage)> = reports
        .iter()
        .filter_map(|(k, rep)| {
            let state = *k.state_code.value()?;
            if k.municipality_code != Level::All || k.sex != Level::All || k.age_group != Level::All
            {
                return None;
            }
            let value = match metric {
                RankMetric::Fatality => rep.fatality_rate_pct,
                RankMetric::Positivity => rep.positivity_pct,
                RankMetric::Tgi3 => rep.severity.map(|s| s.tgi3),
            }?;
            Some((state, value))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Comorbidities, DeathDate};

    fn rec(classification: CaseClassification) -> PatientRecord {
        PatientRecord {
            state_code: 31,
            municipality_code: 50,
            sex: Sex::Male,
            age_years: Some(45),
            speaks_indigenous_language: CodedFlag::Yes,
            treatment: TreatmentStrategy::Ambulatory,
            icu: CodedFlag::NotApplicable,
            intubated: CodedFlag::NotApplicable,
            death_date: DeathDate::Alive,
            classification,
            comorbidities: Comorbidities::default(),
            symptom_onset_date: None,
        }
    }

    fn died() -> DeathDate {
        DeathDate::Died(NaiveDate::from_ymd_opt(2021, 2, 3).unwrap())
    }

    #[test]
    fn age_bins() {
        assert_eq!(age_group(Some(21)), AgeGroup::Y21To40);
        assert_eq!(age_group(Some(60)), AgeGroup::Y60Plus);
        assert_eq!(age_group(Some(0)), AgeGroup::Y0To20);
        assert_eq!(age_group(Some(20)), AgeGroup::Y0To20);
        assert_eq!(age_group(Some(40)), AgeGroup::Y21To40);
        assert_eq!(age_group(Some(41)), AgeGroup::Y41To59);
        assert_eq!(age_group(Some(59)), AgeGroup::Y41To59);
        assert_eq!(age_group(None), AgeGroup::Unknown);
    }

    #[test]
    fn accumulate_examples() {
        let c = accumulate(
            CaseCounts::zero(),
            &rec(CaseClassification::ConfirmedSarsCov2),
        );
        assert_eq!(
            c,
            CaseCounts {
                total: 1,
                positive: 1,
                ambulatory_pos: 1,
                ..Default::default()
            }
        );
        let c = accumulate(CaseCounts::zero(), &rec(CaseClassification::Suspect));
        assert_eq!(
            c,
            CaseCounts {
                total: 1,
                suspect: 1,
                ..Default::default()
            }
        );
    }

    #[test]
    fn severe_hospitalized_death() {
        let mut r = rec(CaseClassification::ConfirmedByAdjudicationCommittee);
        r.treatment = TreatmentStrategy::Hospitalized;
        r.icu = CodedFlag::Yes;
        r.intubated = CodedFlag::Yes;
        r.death_date = died();
        let c = accumulate(CaseCounts::zero(), &r);
        assert_eq!(c.hospitalized_pos, 1);
        assert_eq!(c.icu_and_intubated_pos, 1);
        assert_eq!(c.deaths_pos, 1);
        assert_eq!(c.deaths_icu_intubated_pos, 1);
        // ignored/NA flags never count as severe
        r.icu = CodedFlag::Ignored;
        r.intubated = CodedFlag::NotApplicable;
        let c = accumulate(CaseCounts::zero(), &r);
        assert_eq!(c.icu_pos + c.intubated_pos, 0);
        assert_eq!(c.deaths_icu_intubated_pos, 0);
    }

    #[test]
    fn negative_deaths_are_not_counted() {
        let mut r = rec(CaseClassification::NegativeSarsCov2);
        r.death_date = died();
        let c = accumulate(CaseCounts::zero(), &r);
        assert_eq!(c.deaths_pos, 0);
        assert_eq!(c.negative, 1);
    }

    #[test]
    fn fatality_examples() {
        let c = CaseCounts {
            positive: 21294,
            deaths_pos: 3321,
            ..Default::default()
        };
        let tl = fatality_rate(&c).unwrap();
        assert!((tl.value() - 15.595942).abs() < 1e-6);
        assert_eq!(tl.to_string(), "15.60");
        let c = CaseCounts {
            positive: 100,
            ..Default::default()
        };
        assert_eq!(fatality_rate(&c).unwrap().value(), 0.0);
        assert!(fatality_rate(&CaseCounts::zero()).is_none());
    }

    #[test]
    fn positivity_examples() {
        let national = CaseCounts {
            total: 58739,
            positive: 21294,
            negative: 31519,
            invalid: 72,
            not_performed: 506,
            suspect: 5348,
            ..Default::default()
        };
        let ip = positivity_index(&national, PositivityMode::AggregateNegative).unwrap();
        assert_eq!(ip.to_string(), "36.25");
        let strict = positivity_index(&national, PositivityMode::StrictLabNegative).unwrap();
        assert_eq!(strict.to_string(), "40.32");
        let zero = CaseCounts {
            total: 10,
            negative: 10,
            ..Default::default()
        };
        assert_eq!(
            positivity_index(&zero, PositivityMode::AggregateNegative)
                .unwrap()
                .value(),
            0.0
        );
        assert!(positivity_index(&CaseCounts::zero(), PositivityMode::StrictLabNegative).is_none());
    }

    #[test]
    fn severity_examples() {
        let all_amb = CaseCounts {
            total: 4,
            positive: 4,
            ambulatory_pos: 4,
            ..Default::default()
        };
        let r = severity_rates(&all_amb, SeverityCriterion::IcuAndIntubation).unwrap();
        assert_eq!(
            (r.tgi1.value(), r.tgi2.value(), r.tgi3.value()),
            (100.0, 0.0, 0.0)
        );

        let national = CaseCounts {
            positive: 21294,
            ambulatory_pos: 14761,
            hospitalized_pos: 6533,
            intubated_pos: 777,
            icu_pos: 777,
            icu_and_intubated_pos: 777,
            ..Default::default()
        };
        let r = severity_rates(&national, SeverityCriterion::IcuAndIntubation).unwrap();
        assert_eq!(r.tgi1.to_string(), "69.32");
        assert_eq!(r.tgi2.to_string(), "27.03");
        assert_eq!(r.tgi3.to_string(), "3.65");
        assert!((r.tgi1.value() + r.tgi2.value() + r.tgi3.value() - 100.0).abs() < 1e-9);

        assert_eq!(
            severity_rates(&CaseCounts::zero(), SeverityCriterion::IcuOnly),
            Err(MetricsError::UndefinedForEmptyCohort)
        );
    }

    #[test]
    fn severity_criteria_pick_the_right_tally() {
        let c = CaseCounts {
            icu_pos: 5,
            intubated_pos: 7,
            icu_and_intubated_pos: 3,
            ..Default::default()
        };
        assert_eq!(SeverityCriterion::IcuOnly.severe_count(&c), 5);
        assert_eq!(SeverityCriterion::IntubationOnly.severe_count(&c), 7);
        assert_eq!(SeverityCriterion::IcuAndIntubation.severe_count(&c), 3);
        assert_eq!(SeverityCriterion::IcuOrIntubation.severe_count(&c), 9);
    }

    #[test]
    fn empty_stream_gives_national_only() {
        let out = stratified_report(
            std::iter::empty(),
            &CohortFilter::default(),
            GroupBy::STATE,
            SeverityCriterion::default(),
            PositivityMode::default(),
        );
        assert_eq!(out.len(), 1);
        let national = &out[&StratumKey::NATIONAL];
        assert_eq!(national.counts, CaseCounts::zero());
        assert!(national.fatality_rate_pct.is_none());
        assert!(national.severity.is_none());
    }

    #[test]
    fn filter_restricts_cohort() {
        let mut a = rec(CaseClassification::ConfirmedSarsCov2);
        let mut b = a.clone();
        b.speaks_indigenous_language = CodedFlag::No;
        a.symptom_onset_date = NaiveDate::from_ymd_opt(2021, 1, 10);
        let filter = CohortFilter::indigenous();
        assert!(filter.admits(&a));
        assert!(!filter.admits(&b));
        let window = CohortFilter {
            onset_date_range: Some((
                NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(),
                NaiveDate::from_ymd_opt(2021, 1, 10).unwrap(),
            )),
            ..Default::default()
        };
        assert!(window.admits(&a));
        assert!(!window.admits(&b));
        let states = CohortFilter {
            states: Some([20].into()),
            ..Default::default()
        };
        assert!(!states.admits(&a));
    }

    #[test]
    fn comorbidity_examples() {
        let none: Vec<PatientRecord> = Vec::new();
        let p = comorbidity_profile(
            &none,
            &CohortFilter::default(),
            ComorbiditySubcohort::HospitalizedPositive,
        );
        assert!(p.cells.is_empty());

        let mut r = rec(CaseClassification::ConfirmedSarsCov2);
        r.treatment = TreatmentStrategy::Hospitalized;
        r.comorbidities.set(Comorbidity::Diabetes, CodedFlag::Yes);
        let p = comorbidity_profile(
            [&r],
            &CohortFilter::default(),
            ComorbiditySubcohort::HospitalizedPositive,
        );
        assert_eq!(p.cells.len(), 1);
        assert_eq!(p.get(Comorbidity::Diabetes, AgeGroup::Y41To59), 1);
        let p = comorbidity_profile(
            [&r],
            &CohortFilter::default(),
            ComorbiditySubcohort::DeathsPositive,
        );
        assert!(p.cells.is_empty());
    }

    fn report_with(positive: u64, deaths: u64) -> MetricsReport {
        MetricsReport::from_counts(
            CaseCounts {
                total: positive,
                positive,
                ambulatory_pos: positive,
                deaths_pos: deaths,
                ..Default::default()
            },
            SeverityCriterion::default(),
            PositivityMode::default(),
        )
    }

    fn state_key(s: u8) -> StratumKey {
        StratumKey {
            state_code: Level::Value(s),
            ..StratumKey::NATIONAL
        }
    }

    #[test]
    fn ranking() {
        let mut reports = BTreeMap::new();
        reports.insert(state_key(21), report_with(1000, 305));
        let ranked = rank_states(&reports, RankMetric::Fatality);
        assert_eq!(ranked.len(), 1);

        reports.insert(state_key(4), report_with(1000, 251));
        let ranked = rank_states(&reports, RankMetric::Fatality);
        assert_eq!(ranked[0].0, 21);
        assert_eq!(ranked[0].1.to_string(), "30.50");

        reports.insert(state_key(2), report_with(1000, 251));
        let ranked = rank_states(&reports, RankMetric::Fatality);
        assert_eq!(
            ranked.iter().map(|r| r.0).collect::<Vec<_>>(),
            vec![21, 2, 4]
        );

        // national and undefined strata are skipped
        reports.insert(StratumKey::NATIONAL, report_with(3000, 807));
        reports.insert(state_key(9), report_with(0, 0));
        assert_eq!(rank_states(&reports, RankMetric::Fatality).len(), 3);
    }

    #[test]
    fn group_by_parsing() {
        let g: GroupBy = "state, sex".parse().unwrap();
        assert!(g.state && g.sex && !g.municipality && !g.age_group);
        assert!("age-group".parse::<GroupBy>().unwrap().age_group);
        assert!("county".parse::<GroupBy>().is_err());
        assert!("".parse::<GroupBy>().unwrap().is_empty());
    }

    #[test]
    fn national_sorts_last() {
        assert!(state_key(32) < StratumKey::NATIONAL);
    }
}
