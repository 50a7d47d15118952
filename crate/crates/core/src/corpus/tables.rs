use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One annotated respiratory cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleAnnotation {
    pub start_s: f64,
    pub end_s: f64,
    pub crackle: bool,
    pub wheeze: bool,
}

fn parse_flag(tok: &str, line: usize) -> Result<bool> {
    match tok {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::MalformedRow { line, reason: format!("flag `{other}` is not 0 or 1") }),
    }
}

/// Parses `start end crackle wheeze` rows (any whitespace). Blank lines are
/// skipped; line numbers in errors are 1-based.
pub fn parse_annotations(text: &str) -> Result<Vec<CycleAnnotation>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 4 {
            return Err(Error::MalformedRow { line, reason: format!("expected 4 fields, found {}", toks.len()) });
        }
        let num = |t: &str| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MalformedRow { line, reason: format!("`{t}` is not a number") })
        };
        let start_s = num(toks[0])?;
        let end_s = num(toks[1])?;
        if start_s < 0.0 || end_s <= start_s {
            return Err(Error::MalformedRow { line, reason: format!("bad cycle bounds {start_s}..{end_s}") });
        }
        out.push(CycleAnnotation {
            start_s,
            end_s,
            crackle: parse_flag(toks[2], line)?,
            wheeze: parse_flag(toks[3], line)?,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(out)
}

/// Tokens of an ICBHI recording file name,
/// e.g. `101_1b1_Al_sc_Meditron.wav`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingName {
    pub patient_id: u32,
    pub recording_index: String,
    pub chest_location: String,
    pub acquisition_mode: String,
    pub equipment: String,
}

pub fn parse_filename(name: &str) -> Result<RecordingName> {
    let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
    let stem = match base.rfind('.') {
        Some(dot) if dot > 0 => &base[..dot],
        _ => base,
    };
    let toks: Vec<&str> = stem.split('_').collect();
    if toks.len() != 5 {
        return Err(Error::BadTokenCount { name: name.to_string(), found: toks.len() });
    }
    let patient_id = toks[0]
        .parse::<u32>()
        .map_err(|_| Error::InvalidRecord(format!("patient id `{}` in `{name}` is not an integer", toks[0])))?;
    Ok(RecordingName {
        patient_id,
        recording_index: toks[1].to_string(),
        chest_location: toks[2].to_string(),
        acquisition_mode: toks[3].to_string(),
        equipment: toks[4].to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    Female = 0,
    Male = 1,
}

impl Gender {
    pub fn code(self) -> f64 {
        self as u8 as f64
    }

    fn parse(tok: &str) -> Option<Self> {
        match tok.trim().to_ascii_uppercase().as_str() {
            "F" | "FEMALE" | "0" => Some(Gender::Female),
            "M" | "MALE" | "1" => Some(Gender::Male),
            _ => None,
        }
    }
}

/// A validated demographic record usable by the risk subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemographicRecord {
    pub patient_id: u32,
    pub age_years: f64,
    pub gender: Gender,
    pub bmi_kg_m2: f64,
}

impl DemographicRecord {
    pub fn new(patient_id: u32, age_years: f64, gender: Gender, bmi_kg_m2: f64) -> Result<Self> {
        if !(0.0..=130.0).contains(&age_years) {
            return Err(Error::InvalidRecord(format!("patient {patient_id}: age {age_years} outside [0, 130]")));
        }
        if !(bmi_kg_m2 > 5.0 && bmi_kg_m2 < 100.0) {
            return Err(Error::InvalidRecord(format!("patient {patient_id}: BMI {bmi_kg_m2} outside (5, 100)")));
        }
        Ok(Self { patient_id, age_years, gender, bmi_kg_m2 })
    }

    /// `(age, gender code, BMI)`, the risk classifiers' feature vector.
    pub fn features(&self) -> [f64; 3] {
        [self.age_years, self.gender.code(), self.bmi_kg_m2]
    }
}

/// A raw row of the demographics table; any field may be missing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemographicRow {
    pub patient_id: u32,
    pub age_years: Option<f64>,
    pub gender: Option<Gender>,
    pub adult_bmi: Option<f64>,
    pub child_weight_kg: Option<f64>,
    pub child_height_cm: Option<f64>,
}

impl DemographicRow {
    /// Adult BMI when present, otherwise weight / (height/100)^2 from the
    /// child columns.
    pub fn bmi(&self) -> Option<f64> {
        self.adult_bmi.or_else(|| match (self.child_weight_kg, self.child_height_cm) {
            (Some(w), Some(h)) if h > 0.0 => {
                let m = h / 100.0;
                Some(w / (m * m))
            }
            _ => None,
        })
    }

    pub fn to_record(&self) -> Result<DemographicRecord> {
        let id = self.patient_id;
        let age = self.age_years.ok_or_else(|| Error::InvalidRecord(format!("patient {id}: missing age")))?;
        let gender = self.gender.ok_or_else(|| Error::InvalidRecord(format!("patient {id}: missing sex")))?;
        let bmi = self.bmi().ok_or_else(|| Error::InvalidRecord(format!("patient {id}: no derivable BMI")))?;
        DemographicRecord::new(id, age, gender, bmi)
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

fn opt_num(tok: Option<&&str>, line: usize) -> Result<Option<f64>> {
    match tok.map(|t| t.trim()) {
        None | Some("") => Ok(None),
        Some(t) if t.eq_ignore_ascii_case("NA") || t.eq_ignore_ascii_case("nan") => Ok(None),
        Some(t) => t
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::MalformedRow { line, reason: format!("`{t}` is not a number") }),
    }
}

#[derive(Clone, Copy)]
struct DemoColumns {
    id: usize,
    age: usize,
    sex: usize,
    bmi: usize,
    weight: usize,
    height: usize,
}

// ICBHI demographic_info.txt order: id, age, sex, adult BMI, child weight, child height.
const ICBHI_COLUMNS: DemoColumns = DemoColumns { id: 0, age: 1, sex: 2, bmi: 3, weight: 4, height: 5 };

fn header_columns(fields: &[&str]) -> Option<DemoColumns> {
    let find = |keys: &[&str]| {
        fields.iter().position(|f| {
            let f = f.to_ascii_lowercase();
            keys.iter().any(|k| f.contains(k))
        })
    };
    Some(DemoColumns {
        id: find(&["id", "patient"])?,
        age: find(&["age"])?,
        sex: find(&["sex", "gender"])?,
        bmi: find(&["bmi"])?,
        weight: find(&["weight"])?,
        height: find(&["height"])?,
    })
}

/// Parses the six-column demographics table. A header row, when present,
/// selects the column order by name; otherwise the ICBHI order is assumed,
/// with age and sex swapped if the sex token is found in the second column.
/// Empty or `NA` fields become `None`.
pub fn parse_demographics(text: &str) -> Result<Vec<DemographicRow>> {
    let mut rows = Vec::new();
    let mut cols: Option<DemoColumns> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields = split_fields(raw);
        if cols.is_none() && rows.is_empty() && fields[0].trim().parse::<u32>().is_err() {
            cols = Some(header_columns(&fields).ok_or_else(|| Error::MalformedRow {
                line,
                reason: "unrecognized demographics header".into(),
            })?);
            continue;
        }
        let mut c = cols.unwrap_or(ICBHI_COLUMNS);
        if cols.is_none() && fields.get(1).and_then(|t| Gender::parse(t)).is_some()
            && fields.get(2).map(|t| t.parse::<f64>().is_ok()).unwrap_or(false)
            && !matches!(fields.get(1).map(|t| t.trim()), Some("0") | Some("1"))
        {
            c.age = 2;
            c.sex = 1;
        }
        let patient_id = fields[c.id]
            .trim()
            .parse::<u32>()
            .map_err(|_| Error::MalformedRow { line, reason: format!("patient id `{}` is not an integer", fields[c.id]) })?;
        let gender = match fields.get(c.sex).map(|t| t.trim()) {
            None | Some("") => None,
            Some(t) if t.eq_ignore_ascii_case("NA") => None,
            Some(t) => Some(
                Gender::parse(t)
                    .ok_or_else(|| Error::MalformedRow { line, reason: format!("unknown sex `{t}`") })?,
            ),
        };
        rows.push(DemographicRow {
            patient_id,
            age_years: opt_num(fields.get(c.age), line)?,
            gender,
            adult_bmi: opt_num(fields.get(c.bmi), line)?,
            child_weight_kg: opt_num(fields.get(c.weight), line)?,
            child_height_cm: opt_num(fields.get(c.height), line)?,
        });
    }
    Ok(rows)
}

/// Parses `patient_id,diagnosis` rows (comma, tab or whitespace separated;
/// header optional). Diagnosis names are returned verbatim.
pub fn parse_diagnoses(text: &str) -> Result<Vec<(u32, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields = split_fields(raw);
        if fields.len() < 2 {
            return Err(Error::MalformedRow { line, reason: "expected `patient_id,diagnosis`".into() });
        }
        match fields[0].trim().parse::<u32>() {
            Ok(id) => out.push((id, fields[1].trim().to_string())),
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(_) => {
                return Err(Error::MalformedRow { line, reason: format!("patient id `{}` is not an integer", fields[0]) })
            }
        }
    }
    Ok(out)
}
