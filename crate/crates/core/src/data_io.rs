//! Student and school files: loading, tuition rounding, imputation of missing
//! choices, and conversion to shares and micro data.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{MicroData, Observation};
use crate::model::{school_index, EnrollmentShares, VoucherSchool, GOV, NONPART};
use crate::money::Money;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchoolKind {
    Gov,
    PrivateNonparticipating,
    PrivateParticipating,
}

impl SchoolKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "gov" => Some(SchoolKind::Gov),
            "private_nonparticipating" => Some(SchoolKind::PrivateNonparticipating),
            "private_participating" => Some(SchoolKind::PrivateParticipating),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SchoolKind::Gov => "gov",
            SchoolKind::PrivateNonparticipating => "private_nonparticipating",
            SchoolKind::PrivateParticipating => "private_participating",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchoolRecord {
    pub school_id: String,
    pub kind: SchoolKind,
    pub tuition: Option<Money>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub student_id: String,
    pub voucher: bool,
    pub school_id: Option<String>,
    pub weight: f64,
}

const MISSING: [&str; 4] = ["", "MISSING", "NA", "."];

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn columns(headers: &csv::StringRecord, required: &[&str], optional: &[&str]) -> Result<HashMap<String, usize>> {
    let map: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
    for r in required {
        if !map.contains_key(*r) {
            return Err(parse_err(1, format!("missing column `{r}`")));
        }
    }
    for h in map.keys() {
        if !required.contains(&h.as_str()) && !optional.contains(&h.as_str()) {
            log::warn!("ignoring unknown column `{h}`");
        }
    }
    Ok(map)
}

fn records<R: Read>(reader: R) -> Result<(csv::StringRecord, Vec<(u64, csv::StringRecord)>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let mut out = Vec::new();
    for r in rdr.records() {
        let r = r.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = r.position().map_or(0, |p| p.line());
        out.push((line, r));
    }
    Ok((headers, out))
}

pub fn read_schools<R: Read>(reader: R) -> Result<Vec<SchoolRecord>> {
    let (headers, rows) = records(reader)?;
    let col = columns(&headers, &["school_id", "kind"], &["tuition"])?;
    let mut out = Vec::with_capacity(rows.len());
    let mut seen = HashMap::new();
    for (line, r) in rows {
        let id = r[col["school_id"]].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty school_id"));
        }
        if let Some(prev) = seen.insert(id.clone(), line) {
            return Err(parse_err(line, format!("school `{id}` already defined on line {prev}")));
        }
        let kind_s = r[col["kind"]].trim();
        let kind = SchoolKind::parse(kind_s).ok_or_else(|| parse_err(line, format!("unknown school kind `{kind_s}`")))?;
        let tuition = match col.get("tuition").map(|&i| r[i].trim()) {
            None => None,
            Some(t) if MISSING.contains(&t) => None,
            Some(t) => {
                let v: f64 = t.parse().map_err(|_| parse_err(line, format!("tuition `{t}` is not a number")))?;
                let m = Money::from_dollars(v).ok_or_else(|| parse_err(line, format!("tuition `{t}` out of range")))?;
                if m.is_negative() {
                    return Err(parse_err(line, "negative tuition"));
                }
                Some(m)
            }
        };
        if kind == SchoolKind::PrivateParticipating && tuition.is_none() {
            return Err(parse_err(line, format!("participating school `{id}` has no tuition")));
        }
        out.push(SchoolRecord { school_id: id, kind, tuition });
    }
    Ok(out)
}

pub fn read_students<R: Read>(reader: R) -> Result<Vec<StudentRecord>> {
    let (headers, rows) = records(reader)?;
    let col = columns(&headers, &["student_id", "voucher", "school_id"], &["weight"])?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        let voucher = match r[col["voucher"]].trim() {
            "0" => false,
            "1" => true,
            v => return Err(parse_err(line, format!("voucher must be 0 or 1, got `{v}`"))),
        };
        let sid = r[col["school_id"]].trim();
        let school_id = (!MISSING.contains(&sid)).then(|| sid.to_string());
        let weight = match col.get("weight").map(|&i| r[i].trim()) {
            None | Some("") => 1.0,
            Some(w) => w.parse::<f64>().map_err(|_| parse_err(line, format!("weight `{w}` is not a number")))?,
        };
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(parse_err(line, format!("weight {weight} must be finite and nonnegative")));
        }
        out.push(StudentRecord { student_id: r[col["student_id"]].trim().to_string(), voucher, school_id, weight });
    }
    Ok(out)
}

/// Tuitions rounded half-up to `step`; a zero step leaves them unchanged.
pub fn round_tuition(schools: &[SchoolRecord], step: Money) -> Vec<SchoolRecord> {
    schools
        .iter()
        .map(|s| SchoolRecord { tuition: s.tuition.map(|t| t.round_half_up(step)), ..s.clone() })
        .collect()
}

/// Students mapped to demand indices; `None` marks a missing choice.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub voucher_schools: Vec<VoucherSchool>,
    pub students: Vec<(bool, Option<usize>, f64)>,
}

/// Joins students to schools. Participating schools become the voucher
/// schools sorted by tuition; with `pool_equal_tuition` schools of equal
/// tuition share one index.
pub fn build_dataset(students: &[StudentRecord], schools: &[SchoolRecord], pool_equal_tuition: bool) -> Result<Dataset> {
    let mut part: Vec<&SchoolRecord> = schools.iter().filter(|s| s.kind == SchoolKind::PrivateParticipating).collect();
    part.sort_by(|a, b| a.tuition.cmp(&b.tuition).then_with(|| a.school_id.cmp(&b.school_id)));
    let mut voucher_schools: Vec<VoucherSchool> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for s in part {
        let t = s.tuition.expect("checked on load");
        let j = match voucher_schools.last_mut() {
            Some(last) if pool_equal_tuition && last.tuition == t => {
                last.id.push('+');
                last.id.push_str(&s.school_id);
                voucher_schools.len() - 1
            }
            _ => {
                voucher_schools.push(VoucherSchool { id: s.school_id.clone(), tuition: t });
                voucher_schools.len() - 1
            }
        };
        index.insert(&s.school_id, school_index(j));
    }
    for s in schools {
        match s.kind {
            SchoolKind::Gov => {
                index.insert(&s.school_id, GOV);
            }
            SchoolKind::PrivateNonparticipating => {
                index.insert(&s.school_id, NONPART);
            }
            SchoolKind::PrivateParticipating => {}
        }
    }
    let mut out = Vec::with_capacity(students.len());
    for (i, st) in students.iter().enumerate() {
        let choice = match &st.school_id {
            None => None,
            Some(id) => Some(*index.get(id.as_str()).ok_or_else(|| {
                parse_err(i as u64 + 2, format!("student `{}` attends unknown school `{id}`", st.student_id))
            })?),
        };
        out.push((st.voucher, choice, st.weight));
    }
    Ok(Dataset { voucher_schools, students: out })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputationRate {
    #[default]
    PerArm,
    Pooled,
}

/// Splits every missing choice between g and n at the observed relative rate.
/// Rows of one student share a group id.
pub fn impute_missing(data: &Dataset, rate: ImputationRate) -> Result<MicroData> {
    let mut gn = [[0.0f64; 2]; 2];
    let mut missing = [false; 2];
    for &(z, c, w) in &data.students {
        match c {
            Some(GOV) => gn[z as usize][0] += w,
            Some(NONPART) => gn[z as usize][1] += w,
            None => missing[z as usize] = true,
            _ => {}
        }
    }
    let ratio = |z: usize| -> Result<f64> {
        let (g, n) = match rate {
            ImputationRate::PerArm => (gn[z][0], gn[z][1]),
            ImputationRate::Pooled => (gn[0][0] + gn[1][0], gn[0][1] + gn[1][1]),
        };
        if g + n > 0.0 {
            Ok(g / (g + n))
        } else {
            Err(Error::ImputationUndefined { arm: z as u8 })
        }
    };
    let mut r = [f64::NAN; 2];
    for z in 0..2 {
        if missing[z] {
            r[z] = ratio(z)?;
        }
    }
    let mut obs = Vec::with_capacity(data.students.len());
    for (i, &(z, c, w)) in data.students.iter().enumerate() {
        match c {
            Some(j) => obs.push(Observation { group: i, voucher: z, choice: j, weight: w }),
            None => {
                let rg = r[z as usize];
                obs.push(Observation { group: i, voucher: z, choice: GOV, weight: w * rg });
                obs.push(Observation { group: i, voucher: z, choice: NONPART, weight: w - w * rg });
            }
        }
    }
    MicroData::new(data.voucher_schools.len() + 2, obs)
}

/// Weighted shares per arm.
pub fn shares(data: &MicroData) -> Result<EnrollmentShares> {
    data.shares(true)
}

pub fn load(
    students: &Path,
    schools: &Path,
    rounding: Money,
    pool_equal_tuition: bool,
) -> Result<Dataset> {
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())));
    let sc = round_tuition(&read_schools(open(schools)?)?, rounding);
    let st = read_students(open(students)?)?;
    build_dataset(&st, &sc, pool_equal_tuition)
}

pub fn write_students<W: Write>(out: W, rows: &[StudentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["student_id", "voucher", "school_id", "weight"]).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.student_id.as_str(),
            if r.voucher { "1" } else { "0" },
            r.school_id.as_deref().unwrap_or("MISSING"),
            &r.weight.to_string(),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_schools<W: Write>(out: W, rows: &[SchoolRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["school_id", "kind", "tuition"]).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        let t = r.tuition.map(|t| t.to_string()).unwrap_or_default();
        w.write_record([r.school_id.as_str(), r.kind.as_str(), &t]).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
