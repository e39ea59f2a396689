//! SVEERV data dictionary: coded-value domains, sentinels and the decoded
//! record every other module consumes.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Raw value of `FECHA_DEF` for patients not recorded as deceased.
pub const ALIVE_SENTINEL: &str = "9999-99-99";

/// Upper guard on decoded ages.
pub const MAX_AGE_YEARS: u16 = 130;

pub const COL_STATE: &str = "ENTIDAD_RES";
pub const COL_MUNICIPALITY: &str = "MUNICIPIO_RES";
pub const COL_SEX: &str = "SEXO";
pub const COL_AGE: &str = "EDAD";
pub const COL_INDIGENOUS_LANGUAGE: &str = "HABLA_LENGUA_INDIG";
pub const COL_PATIENT_TYPE: &str = "TIPO_PACIENTE";
pub const COL_ICU: &str = "UCI";
pub const COL_INTUBATED: &str = "INTUBADO";
pub const COL_DEATH_DATE: &str = "FECHA_DEF";
pub const COL_CLASSIFICATION: &str = "CLASIFICACION_FINAL";
pub const COL_ONSET_DATE: &str = "FECHA_SINTOMAS";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unknown code {code} for {field}")]
    UnknownCode { field: &'static str, code: i64 },
    #[error("{field}: expected an integer, got {raw:?}")]
    NotAnInteger { field: &'static str, raw: String },
    #[error("{field}: value {value} out of range")]
    OutOfRange { field: &'static str, value: i64 },
    #[error("{field}: invalid date {raw:?}")]
    BadDate { field: &'static str, raw: String },
}

impl DecodeError {
    /// Short reason key used in rejection tallies.
    pub fn kind(&self) -> &'static str {
        match self {
            DecodeError::UnknownCode { .. } => "UnknownCode",
            DecodeError::NotAnInteger { .. } => "NotAnInteger",
            DecodeError::OutOfRange { .. } => "OutOfRange",
            DecodeError::BadDate { .. } => "BadDate",
        }
    }
}

/// Final case classification (`CLASIFICACION_FINAL`), codes 1–7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseClassification {
    ConfirmedByEpidemiologicalAssociation,
    ConfirmedByAdjudicationCommittee,
    ConfirmedSarsCov2,
    InvalidByLaboratory,
    NotPerformedByLaboratory,
    Suspect,
    NegativeSarsCov2,
}

impl CaseClassification {
    pub const ALL: [CaseClassification; 7] = [
        CaseClassification::ConfirmedByEpidemiologicalAssociation,
        CaseClassification::ConfirmedByAdjudicationCommittee,
        CaseClassification::ConfirmedSarsCov2,
        CaseClassification::InvalidByLaboratory,
        CaseClassification::NotPerformedByLaboratory,
        CaseClassification::Suspect,
        CaseClassification::NegativeSarsCov2,
    ];

    pub const POSITIVE: [CaseClassification; 3] = [
        CaseClassification::ConfirmedByEpidemiologicalAssociation,
        CaseClassification::ConfirmedByAdjudicationCommittee,
        CaseClassification::ConfirmedSarsCov2,
    ];

    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: i64) -> Result<Self, DecodeError> {
        match code {
            1..=7 => Ok(Self::ALL[(code - 1) as usize]),
            _ => Err(DecodeError::UnknownCode {
                field: COL_CLASSIFICATION,
                code,
            }),
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(
            self,
            CaseClassification::ConfirmedByEpidemiologicalAssociation
                | CaseClassification::ConfirmedByAdjudicationCommittee
                | CaseClassification::ConfirmedSarsCov2
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            CaseClassification::ConfirmedByEpidemiologicalAssociation => {
                "Confirmed by epidemiological association"
            }
            CaseClassification::ConfirmedByAdjudicationCommittee => {
                "Confirmed by adjudication committee"
            }
            CaseClassification::ConfirmedSarsCov2 => "Confirmed SARS-CoV-2",
            CaseClassification::InvalidByLaboratory => "Invalid by laboratory",
            CaseClassification::NotPerformedByLaboratory => "Not performed by laboratory",
            CaseClassification::Suspect => "Suspect",
            CaseClassification::NegativeSarsCov2 => "Negative SARS-CoV-2",
        }
    }
}

pub fn decode_classification(code: i64) -> Result<CaseClassification, DecodeError> {
    CaseClassification::from_code(code)
}

pub fn is_positive(c: CaseClassification) -> bool {
    c.is_positive()
}

/// Yes/no flag with the dictionary's "not applicable", "ignored" and
/// "unspecified" codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodedFlag {
    Yes,
    No,
    NotApplicable,
    Ignored,
    Unspecified,
}

impl CodedFlag {
    pub const ALL: [CodedFlag; 5] = [
        CodedFlag::Yes,
        CodedFlag::No,
        CodedFlag::NotApplicable,
        CodedFlag::Ignored,
        CodedFlag::Unspecified,
    ];

    pub fn code(self) -> u8 {
        match self {
            CodedFlag::Yes => 1,
            CodedFlag::No => 2,
            CodedFlag::NotApplicable => 97,
            CodedFlag::Ignored => 98,
            CodedFlag::Unspecified => 99,
        }
    }

    pub fn from_code(field: &'static str, code: i64) -> Result<Self, DecodeError> {
        match code {
            1 => Ok(CodedFlag::Yes),
            2 => Ok(CodedFlag::No),
            97 => Ok(CodedFlag::NotApplicable),
            98 => Ok(CodedFlag::Ignored),
            99 => Ok(CodedFlag::Unspecified),
            _ => Err(DecodeError::UnknownCode { field, code }),
        }
    }

    pub fn is_yes(self) -> bool {
        self == CodedFlag::Yes
    }

    pub fn label(self) -> &'static str {
        match self {
            CodedFlag::Yes => "Yes",
            CodedFlag::No => "No",
            CodedFlag::NotApplicable => "Not applicable",
            CodedFlag::Ignored => "Ignored",
            CodedFlag::Unspecified => "Unspecified",
        }
    }
}

pub fn decode_flag(code: i64) -> Result<CodedFlag, DecodeError> {
    CodedFlag::from_code("flag", code)
}

/// Care path from `TIPO_PACIENTE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentStrategy {
    Ambulatory,
    Hospitalized,
}

impl TreatmentStrategy {
    pub const ALL: [TreatmentStrategy; 2] = [
        TreatmentStrategy::Ambulatory,
        TreatmentStrategy::Hospitalized,
    ];

    pub fn code(self) -> u8 {
        match self {
            TreatmentStrategy::Ambulatory => 1,
            TreatmentStrategy::Hospitalized => 2,
        }
    }

    pub fn from_code(code: i64) -> Result<Self, DecodeError> {
        match code {
            1 => Ok(TreatmentStrategy::Ambulatory),
            2 => Ok(TreatmentStrategy::Hospitalized),
            _ => Err(DecodeError::UnknownCode {
                field: COL_PATIENT_TYPE,
                code,
            }),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TreatmentStrategy::Ambulatory => "Ambulatory",
            TreatmentStrategy::Hospitalized => "Hospitalized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
    Unspecified,
}

impl Sex {
    pub const ALL: [Sex; 3] = [Sex::Female, Sex::Male, Sex::Unspecified];

    /// SVEERV codes: 1 female, 2 male; anything else is unresolved.
    pub fn from_code(code: i64) -> Self {
        match code {
            1 => Sex::Female,
            2 => Sex::Male,
            _ => Sex::Unspecified,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Sex::Female => 1,
            Sex::Male => 2,
            Sex::Unspecified => 99,
        }
    }

    /// Lenient parse for free-text metadata ("Female", "hombre", "M", ...).
    pub fn from_text(text: &str) -> Self {
        match text.trim().to_lowercase().as_str() {
            "female" | "f" | "femenino" | "mujer" | "woman" => Sex::Female,
            "male" | "m" | "masculino" | "hombre" | "man" => Sex::Male,
            _ => Sex::Unspecified,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sex::Female => "Female",
            Sex::Male => "Male",
            Sex::Unspecified => "Unspecified",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `FECHA_DEF`: either the alive sentinel or a calendar date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeathDate {
    Alive,
    Died(NaiveDate),
}

impl DeathDate {
    pub fn parse(raw: &str) -> Result<Self, DecodeError> {
        let raw = raw.trim();
        if raw == ALIVE_SENTINEL {
            return Ok(DeathDate::Alive);
        }
        parse_iso_date(COL_DEATH_DATE, raw).map(DeathDate::Died)
    }

    pub fn is_dead(self) -> bool {
        matches!(self, DeathDate::Died(_))
    }
}

impl fmt::Display for DeathDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeathDate::Alive => f.write_str(ALIVE_SENTINEL),
            DeathDate::Died(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

pub fn parse_iso_date(field: &'static str, raw: &str) -> Result<NaiveDate, DecodeError> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").map_err(|_| DecodeError::BadDate {
        field,
        raw: raw.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comorbidity {
    Diabetes,
    Copd,
    Asthma,
    Immunosuppression,
    Hypertension,
    Cardiovascular,
    Obesity,
    ChronicRenal,
    Smoking,
    Pneumonia,
}

impl Comorbidity {
    pub const ALL: [Comorbidity; 10] = [
        Comorbidity::Diabetes,
        Comorbidity::Copd,
        Comorbidity::Asthma,
        Comorbidity::Immunosuppression,
        Comorbidity::Hypertension,
        Comorbidity::Cardiovascular,
        Comorbidity::Obesity,
        Comorbidity::ChronicRenal,
        Comorbidity::Smoking,
        Comorbidity::Pneumonia,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Comorbidity::Diabetes => "DIABETES",
            Comorbidity::Copd => "EPOC",
            Comorbidity::Asthma => "ASMA",
            Comorbidity::Immunosuppression => "INMUSUPR",
            Comorbidity::Hypertension => "HIPERTENSION",
            Comorbidity::Cardiovascular => "CARDIOVASCULAR",
            Comorbidity::Obesity => "OBESIDAD",
            Comorbidity::ChronicRenal => "RENAL_CRONICA",
            Comorbidity::Smoking => "TABAQUISMO",
            Comorbidity::Pneumonia => "NEUMONIA",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Comorbidity::Diabetes => "diabetes",
            Comorbidity::Copd => "copd",
            Comorbidity::Asthma => "asthma",
            Comorbidity::Immunosuppression => "immunosuppression",
            Comorbidity::Hypertension => "hypertension",
            Comorbidity::Cardiovascular => "cardiovascular",
            Comorbidity::Obesity => "obesity",
            Comorbidity::ChronicRenal => "chronic_renal",
            Comorbidity::Smoking => "smoking",
            Comorbidity::Pneumonia => "pneumonia",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// One flag per [`Comorbidity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Comorbidities([CodedFlag; 10]);

impl Default for Comorbidities {
    fn default() -> Self {
        Comorbidities([CodedFlag::No; 10])
    }
}

impl Comorbidities {
    pub fn get(&self, c: Comorbidity) -> CodedFlag {
        self.0[c.index()]
    }

    pub fn set(&mut self, c: Comorbidity, flag: CodedFlag) {
        self.0[c.index()] = flag;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Comorbidity, CodedFlag)> + '_ {
        Comorbidity::ALL.iter().map(move |&c| (c, self.get(c)))
    }
}

/// One decoded SVEERV row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatientRecord {
    pub state_code: u8,
    pub municipality_code: u16,
    pub sex: Sex,
    pub age_years: Option<u16>,
    pub speaks_indigenous_language: CodedFlag,
    pub treatment: TreatmentStrategy,
    pub icu: CodedFlag,
    pub intubated: CodedFlag,
    pub death_date: DeathDate,
    pub classification: CaseClassification,
    pub comorbidities: Comorbidities,
    pub symptom_onset_date: Option<NaiveDate>,
}

impl PatientRecord {
    pub fn is_positive(&self) -> bool {
        self.classification.is_positive()
    }

    pub fn is_dead(&self) -> bool {
        self.death_date.is_dead()
    }
}

/// Laboratory sample situation for the suspect-case typology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabSample {
    Taken,
    Invalid,
    NotTaken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SuspectType {
    Type1ConfirmedByAssociation,
    Type2ConfirmedByRuling,
    Type3ConfirmedByLab,
}

/// Assigns the suspect-case confirmation path.
///
/// Type 1: positive epidemiological contact and no valid sample. Type 2: a
/// death with no valid sample. Type 3: a valid sample that came back
/// positive. When a record qualifies for both Type 1 and Type 2 the
/// association path wins, matching the listing order of the rule.
pub fn suspect_type(
    record: &PatientRecord,
    lab_sample: LabSample,
    epi_association: bool,
) -> Option<SuspectType> {
    let in_scope = record.classification == CaseClassification::Suspect || record.is_positive();
    if !in_scope {
        return None;
    }
    let no_valid_sample = matches!(lab_sample, LabSample::NotTaken | LabSample::Invalid);
    if no_valid_sample && epi_association {
        Some(SuspectType::Type1ConfirmedByAssociation)
    } else if no_valid_sample && record.is_dead() {
        Some(SuspectType::Type2ConfirmedByRuling)
    } else if lab_sample == LabSample::Taken && record.is_positive() {
        Some(SuspectType::Type3ConfirmedByLab)
    } else {
        None
    }
}

const STATE_NAMES: [&str; 32] = [
    "Aguascalientes",
    "Baja California",
    "Baja California Sur",
    "Campeche",
    "Coahuila de Zaragoza",
    "Colima",
    "Chiapas",
    "Chihuahua",
    "Ciudad de México",
    "Durango",
    "Guanajuato",
    "Guerrero",
    "Hidalgo",
    "Jalisco",
    "México",
    "Michoacán de Ocampo",
    "Morelos",
    "Nayarit",
    "Nuevo León",
    "Oaxaca",
    "Puebla",
    "Querétaro",
    "Quintana Roo",
    "San Luis Potosí",
    "Sinaloa",
    "Sonora",
    "Tabasco",
    "Tamaulipas",
    "Tlaxcala",
    "Veracruz de Ignacio de la Llave",
    "Yucatán",
    "Zacatecas",
];

/// INEGI federal-entity name for codes 1–32.
pub fn state_name(code: u8) -> Option<&'static str> {
    STATE_NAMES.get((code as usize).checked_sub(1)?).copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_codes() {
        assert_eq!(
            decode_classification(3),
            Ok(CaseClassification::ConfirmedSarsCov2)
        );
        assert_eq!(
            decode_classification(7),
            Ok(CaseClassification::NegativeSarsCov2)
        );
        assert!(matches!(
            decode_classification(0),
            Err(DecodeError::UnknownCode { code: 0, .. })
        ));
        assert!(decode_classification(8).is_err());
        for c in CaseClassification::ALL {
            assert_eq!(decode_classification(c.code() as i64), Ok(c));
        }
    }

    #[test]
    fn positive_subset() {
        assert!(is_positive(
            CaseClassification::ConfirmedByAdjudicationCommittee
        ));
        assert!(!is_positive(CaseClassification::Suspect));
        assert!(!is_positive(CaseClassification::NegativeSarsCov2));
        let positives: Vec<_> = CaseClassification::ALL
            .into_iter()
            .filter(|c| c.is_positive())
            .collect();
        assert_eq!(positives, CaseClassification::POSITIVE.to_vec());
    }

    #[test]
    fn flag_codes() {
        assert_eq!(decode_flag(1), Ok(CodedFlag::Yes));
        assert_eq!(decode_flag(97), Ok(CodedFlag::NotApplicable));
        assert!(decode_flag(3).is_err());
        assert!(decode_flag(0).is_err());
        for f in CodedFlag::ALL {
            assert_eq!(decode_flag(f.code() as i64), Ok(f));
        }
    }

    #[test]
    fn treatment_codes() {
        assert_eq!(
            TreatmentStrategy::from_code(1),
            Ok(TreatmentStrategy::Ambulatory)
        );
        assert_eq!(
            TreatmentStrategy::from_code(2),
            Ok(TreatmentStrategy::Hospitalized)
        );
        assert!(TreatmentStrategy::from_code(99).is_err());
    }

    #[test]
    fn death_sentinel() {
        assert_eq!(DeathDate::parse("9999-99-99"), Ok(DeathDate::Alive));
        assert_eq!(
            DeathDate::parse("2021-03-04"),
            Ok(DeathDate::Died(
                NaiveDate::from_ymd_opt(2021, 3, 4).unwrap()
            ))
        );
        assert!(DeathDate::parse("9999-99-98").is_err());
        assert_eq!(DeathDate::Alive.to_string(), ALIVE_SENTINEL);
    }

    #[test]
    fn sex_codes() {
        assert_eq!(Sex::from_code(1), Sex::Female);
        assert_eq!(Sex::from_code(2), Sex::Male);
        assert_eq!(Sex::from_code(99), Sex::Unspecified);
        assert_eq!(Sex::from_text(" Hombre "), Sex::Male);
        assert_eq!(Sex::from_text("unknown"), Sex::Unspecified);
    }

    fn record(classification: CaseClassification, death: DeathDate) -> PatientRecord {
        PatientRecord {
            state_code: 30,
            municipality_code: 1,
            sex: Sex::Female,
            age_years: Some(40),
            speaks_indigenous_language: CodedFlag::Yes,
            treatment: TreatmentStrategy::Ambulatory,
            icu: CodedFlag::NotApplicable,
            intubated: CodedFlag::NotApplicable,
            death_date: death,
            classification,
            comorbidities: Comorbidities::default(),
            symptom_onset_date: None,
        }
    }

    #[test]
    fn suspect_typology() {
        let died = DeathDate::Died(NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
        let alive_suspect = record(CaseClassification::Suspect, DeathDate::Alive);
        assert_eq!(
            suspect_type(&alive_suspect, LabSample::Invalid, true),
            Some(SuspectType::Type1ConfirmedByAssociation)
        );
        let dead_suspect = record(CaseClassification::Suspect, died);
        assert_eq!(
            suspect_type(&dead_suspect, LabSample::NotTaken, false),
            Some(SuspectType::Type2ConfirmedByRuling)
        );
        let lab_positive = record(CaseClassification::ConfirmedSarsCov2, DeathDate::Alive);
        assert_eq!(
            suspect_type(&lab_positive, LabSample::Taken, false),
            Some(SuspectType::Type3ConfirmedByLab)
        );
        assert_eq!(
            suspect_type(&alive_suspect, LabSample::NotTaken, false),
            None
        );
        // pending result on a suspect
        assert_eq!(suspect_type(&alive_suspect, LabSample::Taken, true), None);
        let negative = record(CaseClassification::NegativeSarsCov2, died);
        assert_eq!(suspect_type(&negative, LabSample::NotTaken, true), None);
    }

    #[test]
    fn state_names() {
        assert_eq!(state_name(31), Some("Yucatán"));
        assert_eq!(state_name(20), Some("Oaxaca"));
        assert_eq!(state_name(0), None);
        assert_eq!(state_name(33), None);
    }
}
