//! Seeded synthetic data whose aggregates equal configured marginal
//! tables, plus a brute-force oracle used by the property tests.
//!
//! Marginal specs are TOML. Two presets ship with the crate:
//! `sveerv-national` (annex tables 1 to 7) and `gisaid-mexico`
//! (tables 8 to 13).

use std::collections::BTreeMap;
use std::io::{self, Write};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::epi_metrics::{AgeGroup, CaseCounts};
use crate::genomics::{Lineage, VariantCatalog};
use crate::schema::{
    CaseClassification, CodedFlag, Comorbidities, Comorbidity, DeathDate, PatientRecord, Sex,
    TreatmentStrategy, ALIVE_SENTINEL,
};

pub const SVEERV_NATIONAL: &str = include_str!("../presets/sveerv_national.toml");
pub const GISAID_MEXICO: &str = include_str!("../presets/gisaid_mexico.toml");

/// Column order of generated SVEERV files.
pub const SVEERV_HEADER: [&str; 23] = [
    "FECHA_ACTUALIZACION",
    "ID_REGISTRO",
    "SEXO",
    "ENTIDAD_RES",
    "MUNICIPIO_RES",
    "TIPO_PACIENTE",
    "FECHA_SINTOMAS",
    "FECHA_DEF",
    "INTUBADO",
    "NEUMONIA",
    "EDAD",
    "HABLA_LENGUA_INDIG",
    "DIABETES",
    "EPOC",
    "ASMA",
    "INMUSUPR",
    "HIPERTENSION",
    "CARDIOVASCULAR",
    "OBESIDAD",
    "RENAL_CRONICA",
    "TABAQUISMO",
    "CLASIFICACION_FINAL",
    "UCI",
];

pub const GISAID_HEADER: [&str; 10] = [
    "virus_name",
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

const SNAPSHOT_DATE: &str = "2021-09-03";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("inconsistent marginals: {}", .0.join("; "))]
    InconsistentMarginals(Vec<String>),
    #[error("marginal `{needs}` requires `{missing}`")]
    MissingMarginal {
        needs: &'static str,
        missing: &'static str,
    },
    #[error("invalid marginal value: {0}")]
    InvalidValue(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("malformed spec: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    Epi,
    Genomic,
}

/// Resolves a preset name or annex-table alias to its TOML text.
pub fn preset(name: &str) -> Result<(PresetKind, &'static str), FixtureError> {
    let n: String = name
        .trim()
        .to_ascii_lowercase()
        .chars()
        .filter(|c| !matches!(c, '-' | '_' | ' '))
        .collect();
    match n.as_str() {
        "sveervnational" | "table1" | "table2" | "table3" | "table4" | "table5" | "table6"
        | "table7" => Ok((PresetKind::Epi, SVEERV_NATIONAL)),
        "gisaidmexico" | "table8" | "table9" | "table10" | "table11" | "table12" | "table13" => {
            Ok((PresetKind::Genomic, GISAID_MEXICO))
        }
        _ => Err(FixtureError::UnknownPreset(name.to_string())),
    }
}

pub const PRESET_NAMES: [&str; 2] = ["sveerv-national", "gisaid-mexico"];

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SexCounts {
    #[serde(default)]
    pub female: u64,
    #[serde(default)]
    pub male: u64,
    #[serde(default)]
    pub unspecified: u64,
}

impl SexCounts {
    pub fn get(&self, sex: Sex) -> u64 {
        match sex {
            Sex::Female => self.female,
            Sex::Male => self.male,
            Sex::Unspecified => self.unspecified,
        }
    }

    pub fn total(&self) -> u64 {
        self.female + self.male + self.unspecified
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRow {
    /// `CLASIFICACION_FINAL` code, 1 to 7.
    pub class: u8,
    #[serde(default)]
    pub female: u64,
    #[serde(default)]
    pub male: u64,
    #[serde(default)]
    pub unspecified: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentRow {
    pub strategy: TreatmentStrategy,
    #[serde(default)]
    pub female: u64,
    #[serde(default)]
    pub male: u64,
    #[serde(default)]
    pub unspecified: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateTreatmentRow {
    pub state: u8,
    #[serde(default)]
    pub ambulatory: u64,
    #[serde(default)]
    pub hospitalized: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagRow {
    pub flag: CodedFlag,
    #[serde(default)]
    pub female: u64,
    #[serde(default)]
    pub male: u64,
    #[serde(default)]
    pub unspecified: u64,
}

macro_rules! sex_counts {
    ($t:ty) => {
        impl $t {
            pub fn counts(&self) -> SexCounts {
                SexCounts {
                    female: self.female,
                    male: self.male,
                    unspecified: self.unspecified,
                }
            }
        }
    };
}

sex_counts!(ClassRow);
sex_counts!(TreatmentRow);
sex_counts!(FlagRow);

/// Marginals for a SVEERV fixture. Positives are the three confirmed
/// classifications; treatment, state, intubation and death tables
/// constrain positives only. ICU equals intubation for every positive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpiSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub indigenous_only: bool,
    #[serde(default)]
    pub classification: Vec<ClassRow>,
    #[serde(default)]
    pub sex_totals: Option<SexCounts>,
    #[serde(default)]
    pub treatment: Vec<TreatmentRow>,
    #[serde(default)]
    pub treatment_by_state: Vec<StateTreatmentRow>,
    #[serde(default)]
    pub intubation: Vec<FlagRow>,
    #[serde(default)]
    pub deaths_by_classification: Vec<ClassRow>,
    #[serde(default)]
    pub deaths_by_icu: Vec<FlagRow>,
}

impl EpiSpec {
    pub fn from_toml(text: &str) -> Result<Self, FixtureError> {
        Ok(toml::from_str(text)?)
    }
}

fn class_of(code: u8) -> Result<CaseClassification, FixtureError> {
    CaseClassification::from_code(i64::from(code))
        .map_err(|_| FixtureError::InvalidValue(format!("classification code {code}")))
}

/// Per-sex tallies derived from an epi fixture spec, checked for consistency.
struct EpiPlan {
    classes: BTreeMap<(CaseClassification, Sex), u64>,
    treatment: Option<BTreeMap<(TreatmentStrategy, Sex), u64>>,
    states: Option<Vec<(u8, u64, u64)>>,
    intubation: Option<BTreeMap<(CodedFlag, Sex), u64>>,
    deaths_by_class: Option<BTreeMap<(CaseClassification, Sex), u64>>,
    deaths_by_icu: Option<BTreeMap<(CodedFlag, Sex), u64>>,
}

fn tally<K: Ord + Copy>(rows: impl Iterator<Item = (K, SexCounts)>) -> BTreeMap<(K, Sex), u64> {
    let mut out = BTreeMap::new();
    for (k, c) in rows {
        for s in Sex::ALL {
            *out.entry((k, s)).or_default() += c.get(s);
        }
    }
    out
}

fn get<K: Ord>(m: &BTreeMap<K, u64>, k: K) -> u64 {
    m.get(&k).copied().unwrap_or(0)
}

fn check_sum(problems: &mut Vec<String>, what: &str, got: u64, want: u64, against: &str) {
    if got != want {
        problems.push(format!("{what} sum to {got} but {against} sum to {want}"));
    }
}

impl EpiPlan {
    fn build(spec: &EpiSpec) -> Result<EpiPlan, FixtureError> {
        let rows = |v: &[ClassRow]| -> Result<Vec<(CaseClassification, SexCounts)>, FixtureError> {
            v.iter()
                .map(|r| Ok((class_of(r.class)?, r.counts())))
                .collect()
        };
        let classes = tally(rows(&spec.classification)?.into_iter());
        let positives = |s: Sex| -> u64 {
            CaseClassification::POSITIVE
                .iter()
                .map(|c| get(&classes, (*c, s)))
                .sum()
        };
        let mut problems = Vec::new();

        if let Some(totals) = &spec.sex_totals {
            for s in Sex::ALL {
                let by_class: u64 = CaseClassification::ALL
                    .iter()
                    .map(|c| get(&classes, (*c, s)))
                    .sum();
                check_sum(
                    &mut problems,
                    &format!("sex_totals.{}", s.label().to_lowercase()),
                    totals.get(s),
                    by_class,
                    "classification rows",
                );
            }
        }

        let treatment = (!spec.treatment.is_empty())
            .then(|| tally(spec.treatment.iter().map(|r| (r.strategy, r.counts()))));
        if let Some(t) = &treatment {
            for s in Sex::ALL {
                let sum: u64 = TreatmentStrategy::ALL.iter().map(|k| get(t, (*k, s))).sum();
                check_sum(
                    &mut problems,
                    &format!("treatment ({})", s.label().to_lowercase()),
                    sum,
                    positives(s),
                    "positive classifications",
                );
            }
        }

        let states = if spec.treatment_by_state.is_empty() {
            None
        } else {
            let Some(t) = &treatment else {
                return Err(FixtureError::MissingMarginal {
                    needs: "treatment_by_state",
                    missing: "treatment",
                });
            };
            let mut rows = Vec::new();
            for r in &spec.treatment_by_state {
                if !(1..=32).contains(&r.state) {
                    return Err(FixtureError::InvalidValue(format!(
                        "state code {}",
                        r.state
                    )));
                }
                rows.push((r.state, r.ambulatory, r.hospitalized));
            }
            for (k, idx) in [
                (TreatmentStrategy::Ambulatory, 1),
                (TreatmentStrategy::Hospitalized, 2),
            ] {
                let by_state: u64 = rows.iter().map(|r| if idx == 1 { r.1 } else { r.2 }).sum();
                let by_sex: u64 = Sex::ALL.iter().map(|s| get(t, (k, *s))).sum();
                check_sum(
                    &mut problems,
                    &format!("treatment_by_state {}", k.label().to_lowercase()),
                    by_state,
                    by_sex,
                    "treatment rows",
                );
            }
            Some(rows)
        };

        let intubation = if spec.intubation.is_empty() {
            None
        } else {
            let Some(t) = &treatment else {
                return Err(FixtureError::MissingMarginal {
                    needs: "intubation",
                    missing: "treatment",
                });
            };
            let m = tally(spec.intubation.iter().map(|r| (r.flag, r.counts())));
            for s in Sex::ALL {
                let sum: u64 = CodedFlag::ALL.iter().map(|f| get(&m, (*f, s))).sum();
                check_sum(
                    &mut problems,
                    &format!("intubation ({})", s.label().to_lowercase()),
                    sum,
                    positives(s),
                    "positive classifications",
                );
                let na = get(&m, (CodedFlag::NotApplicable, s));
                let amb = get(t, (TreatmentStrategy::Ambulatory, s));
                if na < amb {
                    problems.push(format!(
                        "intubation not_applicable ({}) is {na}, fewer than the {amb} ambulatory positives",
                        s.label().to_lowercase()
                    ));
                }
            }
            Some(m)
        };

        let deaths_by_class = if spec.deaths_by_classification.is_empty() {
            None
        } else {
            let m = tally(rows(&spec.deaths_by_classification)?.into_iter());
            for ((c, s), n) in &m {
                if *n > 0 && !c.is_positive() {
                    problems.push(format!(
                        "deaths recorded for non-positive class {}",
                        c.code()
                    ));
                }
                if *n > get(&classes, (*c, *s)) {
                    problems.push(format!(
                        "deaths for class {} ({}) exceed its {} cases",
                        c.code(),
                        s.label().to_lowercase(),
                        get(&classes, (*c, *s))
                    ));
                }
            }
            Some(m)
        };

        let deaths_by_icu = if spec.deaths_by_icu.is_empty() {
            None
        } else {
            let Some(flags) = &intubation else {
                return Err(FixtureError::MissingMarginal {
                    needs: "deaths_by_icu",
                    missing: "intubation",
                });
            };
            let m = tally(spec.deaths_by_icu.iter().map(|r| (r.flag, r.counts())));
            for ((f, s), n) in &m {
                if *n > get(flags, (*f, *s)) {
                    problems.push(format!(
                        "deaths_by_icu {:?} ({}) is {n}, more than the {} positives with that flag",
                        f,
                        s.label().to_lowercase(),
                        get(flags, (*f, *s))
                    ));
                }
            }
            if let Some(dc) = &deaths_by_class {
                for s in Sex::ALL {
                    let a: u64 = CodedFlag::ALL.iter().map(|f| get(&m, (*f, s))).sum();
                    let b: u64 = CaseClassification::ALL
                        .iter()
                        .map(|c| get(dc, (*c, s)))
                        .sum();
                    check_sum(
                        &mut problems,
                        &format!("deaths_by_icu ({})", s.label().to_lowercase()),
                        a,
                        b,
                        "deaths_by_classification",
                    );
                }
            }
            Some(m)
        };

        if !problems.is_empty() {
            return Err(FixtureError::InconsistentMarginals(problems));
        }
        Ok(EpiPlan {
            classes,
            treatment,
            states,
            intubation,
            deaths_by_class,
            deaths_by_icu,
        })
    }
}

fn expand<T: Copy>(items: impl IntoIterator<Item = (T, u64)>) -> Vec<T> {
    let mut out = Vec::new();
    for (item, n) in items {
        out.extend(std::iter::repeat_n(item, n as usize));
    }
    out
}

fn window() -> (NaiveDate, i64) {
    let start = NaiveDate::from_ymd_opt(2020, 4, 1).expect("date");
    let end = NaiveDate::from_ymd_opt(2021, 9, 30).expect("date");
    (start, (end - start).num_days())
}

fn random_onset(rng: &mut ChaCha8Rng) -> NaiveDate {
    let (start, span) = window();
    start + Duration::days(rng.gen_range(0..=span))
}

fn random_comorbidities(rng: &mut ChaCha8Rng) -> Comorbidities {
    let mut c = Comorbidities::default();
    for k in Comorbidity::ALL {
        let roll: f64 = rng.gen();
        let flag = if roll < 0.12 {
            CodedFlag::Yes
        } else if roll < 0.13 {
            CodedFlag::Ignored
        } else {
            CodedFlag::No
        };
        c.set(k, flag);
    }
    c
}

fn base_record(
    rng: &mut ChaCha8Rng,
    sex: Sex,
    classification: CaseClassification,
    indigenous: CodedFlag,
) -> PatientRecord {
    PatientRecord {
        state_code: rng.gen_range(1..=32),
        municipality_code: rng.gen_range(1..=120),
        sex,
        age_years: Some(rng.gen_range(0..=95)),
        speaks_indigenous_language: indigenous,
        treatment: TreatmentStrategy::Ambulatory,
        icu: CodedFlag::NotApplicable,
        intubated: CodedFlag::NotApplicable,
        death_date: DeathDate::Alive,
        classification,
        comorbidities: random_comorbidities(rng),
        symptom_onset_date: Some(random_onset(rng)),
    }
}

fn died_after(rng: &mut ChaCha8Rng, onset: Option<NaiveDate>) -> DeathDate {
    let base = onset.unwrap_or_else(|| random_onset(rng));
    DeathDate::Died(base + Duration::days(rng.gen_range(1..=30)))
}

fn random_hospital_flag(rng: &mut ChaCha8Rng) -> CodedFlag {
    match rng.gen_range(0..100) {
        0..=11 => CodedFlag::Yes,
        12..=97 => CodedFlag::No,
        _ => CodedFlag::Ignored,
    }
}

/// Builds the record multiset for an epi spec, shuffled by its seed.
pub fn generate_epi_records(spec: &EpiSpec) -> Result<Vec<PatientRecord>, FixtureError> {
    let plan = EpiPlan::build(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let indigenous = if spec.indigenous_only {
        CodedFlag::Yes
    } else {
        CodedFlag::No
    };
    let mut records = Vec::new();

    for sex in Sex::ALL {
        let n_pos: u64 = CaseClassification::POSITIVE
            .iter()
            .map(|c| get(&plan.classes, (*c, sex)))
            .sum();
        let start = records.len();
        for _ in 0..n_pos {
            records.push(base_record(
                &mut rng,
                sex,
                CaseClassification::ConfirmedSarsCov2,
                indigenous,
            ));
        }
        let slots = &mut records[start..];

        // treatment: hospitalized first, then ambulatory
        let n_hosp = match &plan.treatment {
            Some(t) => get(t, (TreatmentStrategy::Hospitalized, sex)) as usize,
            None => slots.iter().filter(|_| rng.gen_bool(0.3)).count(),
        };
        for (i, r) in slots.iter_mut().enumerate() {
            r.treatment = if i < n_hosp {
                TreatmentStrategy::Hospitalized
            } else {
                TreatmentStrategy::Ambulatory
            };
        }

        // hospitalized slots take every flag but the ambulatory NA quota
        match &plan.intubation {
            Some(m) => {
                let n_amb = slots.len() - n_hosp;
                let mut flags = expand(CodedFlag::ALL.iter().map(|f| {
                    let mut n = get(m, (*f, sex));
                    if *f == CodedFlag::NotApplicable {
                        n -= n_amb as u64;
                    }
                    (*f, n)
                }));
                flags.shuffle(&mut rng);
                for (r, f) in slots[..n_hosp].iter_mut().zip(flags) {
                    r.intubated = f;
                }
            }
            None => {
                for r in slots[..n_hosp].iter_mut() {
                    r.intubated = random_hospital_flag(&mut rng);
                }
            }
        }
        for r in slots.iter_mut() {
            r.icu = r.intubated;
        }

        // deaths
        let mut dead = vec![false; slots.len()];
        match (&plan.deaths_by_icu, &plan.deaths_by_class) {
            (Some(m), _) => {
                for f in CodedFlag::ALL {
                    let mut idx: Vec<usize> =
                        (0..slots.len()).filter(|i| slots[*i].icu == f).collect();
                    idx.shuffle(&mut rng);
                    for i in idx.into_iter().take(get(m, (f, sex)) as usize) {
                        dead[i] = true;
                    }
                }
            }
            (None, Some(m)) => {
                let n: u64 = CaseClassification::POSITIVE
                    .iter()
                    .map(|c| get(m, (*c, sex)))
                    .sum();
                let mut idx: Vec<usize> = (0..slots.len()).collect();
                idx.shuffle(&mut rng);
                for i in idx.into_iter().take(n as usize) {
                    dead[i] = true;
                }
            }
            (None, None) => {
                for d in dead.iter_mut() {
                    *d = rng.gen_bool(0.1);
                }
            }
        }
        for (r, d) in slots.iter_mut().zip(&dead) {
            if *d {
                r.death_date = died_after(&mut rng, r.symptom_onset_date);
            }
        }

        // classes: death quotas first, then the remainder
        let class_total = |c: CaseClassification| get(&plan.classes, (c, sex));
        let (mut dead_classes, mut alive_classes) = match &plan.deaths_by_class {
            Some(m) => (
                expand(
                    CaseClassification::POSITIVE
                        .iter()
                        .map(|c| (*c, get(m, (*c, sex)))),
                ),
                expand(
                    CaseClassification::POSITIVE
                        .iter()
                        .map(|c| (*c, class_total(*c) - get(m, (*c, sex)))),
                ),
            ),
            None => (
                Vec::new(),
                expand(
                    CaseClassification::POSITIVE
                        .iter()
                        .map(|c| (*c, class_total(*c))),
                ),
            ),
        };
        dead_classes.shuffle(&mut rng);
        alive_classes.shuffle(&mut rng);
        let mut dead_iter = dead_classes.into_iter();
        let mut all_iter = alive_classes.into_iter();
        for (r, d) in slots.iter_mut().zip(&dead) {
            let c = if *d && plan.deaths_by_class.is_some() {
                dead_iter.next()
            } else {
                all_iter.next()
            };
            r.classification = c.expect("class quota matches positives");
        }

        // non-positive classifications
        for c in CaseClassification::ALL.iter().filter(|c| !c.is_positive()) {
            for _ in 0..class_total(*c) {
                let mut r = base_record(&mut rng, sex, *c, indigenous);
                if rng.gen_bool(0.2) {
                    r.treatment = TreatmentStrategy::Hospitalized;
                    r.intubated = random_hospital_flag(&mut rng);
                    r.icu = r.intubated;
                }
                if rng.gen_bool(0.02) {
                    r.death_date = died_after(&mut rng, r.symptom_onset_date);
                }
                records.push(r);
            }
        }
    }

    if let Some(states) = &plan.states {
        for (strategy, pick) in [
            (TreatmentStrategy::Ambulatory, 1usize),
            (TreatmentStrategy::Hospitalized, 2usize),
        ] {
            let mut codes = expand(
                states
                    .iter()
                    .map(|r| (r.0, if pick == 1 { r.1 } else { r.2 })),
            );
            codes.shuffle(&mut rng);
            let targets = records
                .iter_mut()
                .filter(|r| r.is_positive() && r.treatment == strategy);
            for (r, code) in targets.zip(codes) {
                r.state_code = code;
            }
        }
    }

    records.shuffle(&mut rng);
    Ok(records)
}

/// SVEERV CSV bytes for an epi spec.
pub fn generate_epi_fixture(spec: &EpiSpec) -> Result<Vec<u8>, FixtureError> {
    let records = generate_epi_records(spec)?;
    let mut out = Vec::new();
    write_sveerv(&mut out, &records)?;
    Ok(out)
}

/// Streaming SVEERV CSV writer.
pub struct SveervWriter<W: Write> {
    inner: csv::Writer<W>,
    next_id: u64,
}

impl<W: Write> SveervWriter<W> {
    pub fn new(sink: W) -> io::Result<Self> {
        let mut inner = csv::WriterBuilder::new().from_writer(sink);
        inner.write_record(SVEERV_HEADER).map_err(io::Error::from)?;
        Ok(SveervWriter { inner, next_id: 0 })
    }

    pub fn write(&mut self, r: &PatientRecord) -> io::Result<()> {
        self.next_id += 1;
        let flag = |f: CodedFlag| f.code().to_string();
        let c = |k: Comorbidity| flag(r.comorbidities.get(k));
        let row: [String; 23] = [
            SNAPSHOT_DATE.to_string(),
            format!("z{:07x}", self.next_id),
            r.sex.code().to_string(),
            format!("{:02}", r.state_code),
            format!("{:03}", r.municipality_code),
            r.treatment.code().to_string(),
            r.symptom_onset_date
                .map(|d| d.to_string())
                .unwrap_or_default(),
            match r.death_date {
                DeathDate::Alive => ALIVE_SENTINEL.to_string(),
                DeathDate::Died(d) => d.to_string(),
            },
            flag(r.intubated),
            c(Comorbidity::Pneumonia),
            r.age_years.map(|a| a.to_string()).unwrap_or_default(),
            flag(r.speaks_indigenous_language),
            c(Comorbidity::Diabetes),
            c(Comorbidity::Copd),
            c(Comorbidity::Asthma),
            c(Comorbidity::Immunosuppression),
            c(Comorbidity::Hypertension),
            c(Comorbidity::Cardiovascular),
            c(Comorbidity::Obesity),
            c(Comorbidity::ChronicRenal),
            c(Comorbidity::Smoking),
            r.classification.code().to_string(),
            flag(r.icu),
        ];
        self.inner.write_record(&row).map_err(io::Error::from)
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

pub fn write_sveerv<W: Write>(sink: W, records: &[PatientRecord]) -> io::Result<W> {
    let mut w = SveervWriter::new(sink)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

fn random_flag(rng: &mut ChaCha8Rng) -> CodedFlag {
    CodedFlag::ALL[rng.gen_range(0..CodedFlag::ALL.len())]
}

/// One unconstrained record covering every code domain.
pub fn random_record(rng: &mut ChaCha8Rng) -> PatientRecord {
    let sex = match rng.gen_range(0..20) {
        0 => Sex::Unspecified,
        n if n % 2 == 0 => Sex::Female,
        _ => Sex::Male,
    };
    let classification = CaseClassification::ALL[rng.gen_range(0..7)];
    let indigenous = if rng.gen_bool(0.7) {
        CodedFlag::Yes
    } else {
        random_flag(rng)
    };
    let mut r = base_record(rng, sex, classification, indigenous);
    if rng.gen_bool(0.05) {
        r.age_years = None;
    }
    if rng.gen_bool(0.05) {
        r.symptom_onset_date = None;
    }
    if rng.gen_bool(0.35) {
        r.treatment = TreatmentStrategy::Hospitalized;
        r.icu = random_flag(rng);
        r.intubated = if rng.gen_bool(0.5) {
            r.icu
        } else {
            random_flag(rng)
        };
    }
    if rng.gen_bool(0.12) {
        r.death_date = died_after(rng, r.symptom_onset_date);
    }
    r
}

pub fn random_records(n: usize, seed: u64) -> Vec<PatientRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_record(&mut rng)).collect()
}

/// Streams `rows` random records to `sink` without holding them.
pub fn write_random_sveerv<W: Write>(sink: W, rows: u64, seed: u64) -> io::Result<W> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = SveervWriter::new(sink)?;
    for _ in 0..rows {
        w.write(&random_record(&mut rng))?;
    }
    w.finish()
}

/// Naive reference results for a record list.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub counts: CaseCounts,
    pub fatality_pct: Option<f64>,
    pub positivity_aggregate_pct: Option<f64>,
    pub positivity_strict_pct: Option<f64>,
    /// Mild, moderate and severe shares with ICU-and-intubation as the
    /// severity criterion.
    pub tgi_pct: Option<[f64; 3]>,
}

/// Recounts every tally with its own full scan over `records`.
pub fn oracle_aggregate(records: &[PatientRecord]) -> OracleResult {
    let count =
        |pred: &dyn Fn(&PatientRecord) -> bool| records.iter().filter(|r| pred(r)).count() as u64;
    let pos = |r: &PatientRecord| matches!(r.classification.code(), 1..=3);
    let hosp = |r: &PatientRecord| pos(r) && r.treatment == TreatmentStrategy::Hospitalized;
    let dead = |r: &PatientRecord| !matches!(r.death_date, DeathDate::Alive);
    let severe =
        |r: &PatientRecord| hosp(r) && r.icu == CodedFlag::Yes && r.intubated == CodedFlag::Yes;
    let counts = CaseCounts {
        total: records.len() as u64,
        positive: count(&pos),
        negative: count(&|r| r.classification.code() == 7),
        invalid: count(&|r| r.classification.code() == 4),
        not_performed: count(&|r| r.classification.code() == 5),
        suspect: count(&|r| r.classification.code() == 6),
        ambulatory_pos: count(&|r| pos(r) && r.treatment == TreatmentStrategy::Ambulatory),
        hospitalized_pos: count(&hosp),
        icu_pos: count(&|r| hosp(r) && r.icu == CodedFlag::Yes),
        intubated_pos: count(&|r| hosp(r) && r.intubated == CodedFlag::Yes),
        icu_and_intubated_pos: count(&severe),
        deaths_pos: count(&|r| pos(r) && dead(r)),
        deaths_icu_intubated_pos: count(&|r| severe(r) && dead(r)),
    };
    let pct = |n: u64, d: u64| (d > 0).then(|| 100.0 * n as f64 / d as f64);
    let c = &counts;
    OracleResult {
        fatality_pct: pct(c.deaths_pos, c.positive),
        positivity_aggregate_pct: pct(c.positive, c.total),
        positivity_strict_pct: pct(c.positive, c.positive + c.negative),
        tgi_pct: (c.positive > 0).then(|| {
            let p = c.positive as f64;
            [
                100.0 * c.ambulatory_pos as f64 / p,
                100.0 * (c.hospitalized_pos - c.icu_and_intubated_pos) as f64 / p,
                100.0 * c.icu_and_intubated_pos as f64 / p,
            ]
        }),
        counts,
    }
}

/// Marginals for a genomic-metadata fixture.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenomicSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lineages: Vec<LineageRow>,
    #[serde(default)]
    pub focus: Option<FocusSpec>,
}

impl GenomicSpec {
    pub fn from_toml(text: &str) -> Result<Self, FixtureError> {
        Ok(toml::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineageRow {
    pub lineage: String,
    pub clade: String,
    pub count: u64,
}

/// Cells constraining the samples of one variant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocusSpec {
    pub variant: String,
    #[serde(default)]
    pub status: Vec<StatusRow>,
    #[serde(default)]
    pub state_clade: Vec<StateCladeRow>,
    #[serde(default)]
    pub state_sex: Vec<StateSexRow>,
    #[serde(default)]
    pub state_sex_age: Vec<StateSexAgeRow>,
    #[serde(default)]
    pub state_vaccine: Vec<StateVaccineRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatusRow {
    pub label: String,
    pub clade: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateCladeRow {
    pub state: String,
    pub clade: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSexRow {
    pub state: String,
    pub sex: Sex,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSexAgeRow {
    pub state: String,
    pub sex: Sex,
    pub age_group: AgeGroup,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateVaccineRow {
    pub state: String,
    pub vaccine: String,
    pub count: u64,
}

/// One generated metadata row before serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Sample {
    lineage: Lineage,
    clade: String,
    status: String,
    state: String,
    sex: Sex,
    age: Option<u16>,
    vaccine: Option<String>,
}

const FILLER_STATUS: [&str; 4] = ["Liberado", "Ambulatorio", "Hospitalizado", "Fallecido"];

fn random_age_in(rng: &mut ChaCha8Rng, group: AgeGroup) -> Option<u16> {
    let (lo, hi) = group.bounds()?;
    Some(rng.gen_range(lo..=hi.min(95)))
}

fn filler_states(selected: &[String]) -> Vec<&'static str> {
    let names = filler_candidates(selected);
    if names.is_empty() {
        vec!["Desconocido"]
    } else {
        names
    }
}

fn filler_candidates(selected: &[String]) -> Vec<&'static str> {
    let keys: Vec<String> = selected
        .iter()
        .map(|s| crate::genomics::state_key(s))
        .collect();
    (1..=32u8)
        .filter_map(crate::schema::state_name)
        .filter(|name| {
            let k = crate::genomics::state_key(name);
            !keys.iter().any(|s| {
                k == *s || k.starts_with(&format!("{s} ")) || s.starts_with(&format!("{k} "))
            })
        })
        .collect()
}

fn generate_samples(spec: &GenomicSpec) -> Result<Vec<Sample>, FixtureError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let catalog = VariantCatalog::builtin();
    let mut samples = Vec::new();
    for row in &spec.lineages {
        let lineage =
            Lineage::parse(&row.lineage).map_err(|e| FixtureError::InvalidValue(format!("{e}")))?;
        for _ in 0..row.count {
            samples.push(Sample {
                lineage: lineage.clone(),
                clade: row.clade.clone(),
                status: FILLER_STATUS[rng.gen_range(0..FILLER_STATUS.len())].to_string(),
                state: String::new(),
                sex: if rng.gen_bool(0.5) {
                    Sex::Female
                } else {
                    Sex::Male
                },
                age: Some(rng.gen_range(0..=95)),
                vaccine: None,
            });
        }
    }

    let mut selected: Vec<String> = Vec::new();
    let mut problems = Vec::new();
    if let Some(focus) = &spec.focus {
        let target = catalog.find(&focus.variant).ok_or_else(|| {
            FixtureError::InvalidValue(format!("unknown variant {:?}", focus.variant))
        })?;
        let mut by_clade: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            if catalog.classify(&s.lineage) == Some(target) {
                by_clade.entry(s.clade.clone()).or_default().push(i);
            }
        }
        for idx in by_clade.values_mut() {
            idx.shuffle(&mut rng);
        }

        if !focus.status.is_empty() {
            let mut quota: BTreeMap<&str, Vec<(&str, u64)>> = BTreeMap::new();
            for r in &focus.status {
                quota
                    .entry(r.clade.as_str())
                    .or_default()
                    .push((r.label.as_str(), r.count));
            }
            let clades: std::collections::BTreeSet<&str> = quota
                .keys()
                .copied()
                .chain(by_clade.keys().map(String::as_str))
                .collect();
            for clade in clades {
                let want: u64 = quota.get(clade).map_or(0, |v| v.iter().map(|x| x.1).sum());
                let have = by_clade.get(clade).map_or(0, |v| v.len() as u64);
                if want != have {
                    problems.push(format!(
                        "status rows for clade {clade} sum to {want} but lineage rows give {have} {} samples",
                        focus.variant
                    ));
                    continue;
                }
                let labels = expand(quota.get(clade).cloned().unwrap_or_default());
                for (i, label) in by_clade[clade].iter().zip(labels) {
                    samples[*i].status = label.to_string();
                }
            }
        }

        // state placement per clade
        let mut order: Vec<String> = Vec::new();
        let mut per_state: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut cursor: BTreeMap<String, usize> = BTreeMap::new();
        for r in &focus.state_clade {
            if !order.contains(&r.state) {
                order.push(r.state.clone());
            }
            let pool = by_clade.get(&r.clade).map(Vec::as_slice).unwrap_or(&[]);
            let at = cursor.entry(r.clade.clone()).or_default();
            let end = *at + r.count as usize;
            if end > pool.len() {
                problems.push(format!(
                    "state_clade rows for clade {} need {end} samples but only {} exist",
                    r.clade,
                    pool.len()
                ));
                continue;
            }
            per_state
                .entry(r.state.clone())
                .or_default()
                .extend(&pool[*at..end]);
            *at = end;
        }
        selected = order.clone();
        let fillers = filler_states(&selected);
        for (clade, idx) in &by_clade {
            let used = cursor.get(clade).copied().unwrap_or(0);
            for i in idx.iter().skip(used) {
                samples[*i].state = fillers[rng.gen_range(0..fillers.len())].to_string();
            }
        }

        let mut sex_age: BTreeMap<&str, Vec<(Sex, AgeGroup)>> = BTreeMap::new();
        for r in &focus.state_sex_age {
            sex_age
                .entry(r.state.as_str())
                .or_default()
                .extend(std::iter::repeat_n((r.sex, r.age_group), r.count as usize));
        }
        for (state, idx) in per_state.iter_mut() {
            idx.shuffle(&mut rng);
            for i in idx.iter() {
                samples[*i].state = state.clone();
            }
            if let Some(cells) = sex_age.get(state.as_str()) {
                if cells.len() != idx.len() {
                    problems.push(format!(
                        "state_sex_age rows for {state} sum to {} but state_clade rows give {}",
                        cells.len(),
                        idx.len()
                    ));
                } else {
                    for (i, (sex, group)) in idx.iter().zip(cells) {
                        samples[*i].sex = *sex;
                        samples[*i].age = random_age_in(&mut rng, *group);
                    }
                }
            }
            let vaccines = expand(
                focus
                    .state_vaccine
                    .iter()
                    .filter(|r| r.state == *state)
                    .map(|r| (r.vaccine.as_str(), r.count)),
            );
            if vaccines.len() > idx.len() {
                problems.push(format!(
                    "state_vaccine rows for {state} sum to {} but the state has {} samples",
                    vaccines.len(),
                    idx.len()
                ));
            } else {
                let mut slots = idx.clone();
                slots.shuffle(&mut rng);
                for (i, v) in slots.iter().zip(vaccines) {
                    samples[*i].vaccine = Some(v.to_string());
                }
            }
        }
        for state in sex_age.keys() {
            if !per_state.contains_key(*state) {
                problems.push(format!(
                    "state_sex_age names {state} which has no state_clade rows"
                ));
            }
        }
        for r in &focus.state_vaccine {
            if !per_state.contains_key(&r.state) && r.count > 0 {
                problems.push(format!(
                    "state_vaccine names {} which has no state_clade rows",
                    r.state
                ));
            }
        }
        for r in &focus.state_sex {
            let got: u64 = focus
                .state_sex_age
                .iter()
                .filter(|c| c.state == r.state && c.sex == r.sex)
                .map(|c| c.count)
                .sum();
            if got != r.count {
                problems.push(format!(
                    "state_sex {} {} is {} but state_sex_age rows sum to {got}",
                    r.state,
                    r.sex.label().to_lowercase(),
                    r.count
                ));
            }
        }
    }
    if !problems.is_empty() {
        return Err(FixtureError::InconsistentMarginals(problems));
    }

    let fillers = filler_states(&selected);
    for s in samples.iter_mut().filter(|s| s.state.is_empty()) {
        s.state = fillers[rng.gen_range(0..fillers.len())].to_string();
    }
    samples.shuffle(&mut rng);
    Ok(samples)
}

/// Tab-separated genomic metadata for a spec.
pub fn generate_genomic_fixture(spec: &GenomicSpec) -> Result<Vec<u8>, FixtureError> {
    let samples = generate_samples(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    let start = NaiveDate::from_ymd_opt(2020, 4, 1).expect("date");
    let span = (NaiveDate::from_ymd_opt(2021, 9, 3).expect("date") - start).num_days();
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(Vec::new());
    w.write_record(GISAID_HEADER).map_err(io::Error::from)?;
    for (n, s) in samples.iter().enumerate() {
        let date = start + Duration::days(rng.gen_range(0..=span));
        let row = [
            format!("hCoV-19/Mexico/MX-{:06}/{}", n + 1, date.format("%Y")),
            format!("EPI_ISL_{}", 1_000_000 + n),
            date.to_string(),
            s.state.clone(),
            s.lineage.as_str().to_string(),
            s.clade.clone(),
            s.status.clone(),
            s.age.map(|a| a.to_string()).unwrap_or_default(),
            s.sex.label().to_string(),
            s.vaccine.clone().unwrap_or_default(),
        ];
        w.write_record(&row).map_err(io::Error::from)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}
