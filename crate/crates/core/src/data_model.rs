//! Growth stages, the 16-step metaclass scale, ground observations and
//! per-field variable series.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Principal cotton growth stage, in phenological order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Root establishment
    #[serde(rename = "RE")]
    RootEstablishment = 1,
    /// Leaf development
    #[serde(rename = "LD")]
    LeafDevelopment = 2,
    /// Squaring
    #[serde(rename = "S")]
    Squaring = 3,
    /// Flowering
    #[serde(rename = "F")]
    Flowering = 4,
    /// Boll development
    #[serde(rename = "BD")]
    BollDevelopment = 5,
    /// Boll opening
    #[serde(rename = "BO")]
    BollOpening = 6,
}

impl Stage {
    pub const COUNT: usize = 6;

    pub const ALL: [Stage; 6] = [
        Stage::RootEstablishment,
        Stage::LeafDevelopment,
        Stage::Squaring,
        Stage::Flowering,
        Stage::BollDevelopment,
        Stage::BollOpening,
    ];

    /// 1-based position on the ordinal scale.
    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(ordinal: u8) -> Option<Stage> {
        match ordinal {
            1..=6 => Some(Stage::ALL[usize::from(ordinal) - 1]),
            _ => None,
        }
    }

    /// 0-based position, for indexing arrays of length six.
    pub fn position(self) -> usize {
        usize::from(self.ordinal()) - 1
    }

    pub fn token(self) -> &'static str {
        match self {
            Stage::RootEstablishment => "RE",
            Stage::LeafDevelopment => "LD",
            Stage::Squaring => "S",
            Stage::Flowering => "F",
            Stage::BollDevelopment => "BD",
            Stage::BollOpening => "BO",
        }
    }

    pub fn is_adjacent(self, other: Stage) -> bool {
        self.ordinal().abs_diff(other.ordinal()) == 1
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "RE" => Ok(Stage::RootEstablishment),
            "LD" => Ok(Stage::LeafDevelopment),
            "S" => Ok(Stage::Squaring),
            "F" => Ok(Stage::Flowering),
            "BD" => Ok(Stage::BollDevelopment),
            "BO" => Ok(Stage::BollOpening),
            other => Err(Error::UnknownStage(other.to_string())),
        }
    }
}

/// A one- or two-label growth descriptor: the prevailing stage plus an
/// optional co-occurring stage that must be its ordinal neighbour.
///
/// The 16 valid metaclasses are ordered as
/// `RE, (RE,LD), (LD,RE), LD, (LD,S), (S,LD), S, ..., (BO,BD), BO`
/// and indexed 1..=16 in that order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Metaclass {
    primary: Stage,
    secondary: Option<Stage>,
}

impl Metaclass {
    pub const COUNT: usize = 16;

    /// Builds a metaclass, rejecting secondary stages that are not adjacent
    /// to the primary one.
    pub fn new(primary: Stage, secondary: Option<Stage>) -> Result<Self> {
        if let Some(sec) = secondary {
            if !primary.is_adjacent(sec) {
                return Err(Error::Validation(format!(
                    "secondary stage {sec} is not adjacent to primary stage {primary}"
                )));
            }
        }
        Ok(Metaclass { primary, secondary })
    }

    pub fn unit(primary: Stage) -> Self {
        Metaclass {
            primary,
            secondary: None,
        }
    }

    pub fn primary(self) -> Stage {
        self.primary
    }

    pub fn secondary(self) -> Option<Stage> {
        self.secondary
    }

    /// 1-based position on the metaclass scale.
    pub fn index(self) -> usize {
        let p = usize::from(self.primary.ordinal());
        match self.secondary {
            None => 3 * p - 2,
            Some(s) if s > self.primary => 3 * p - 1,
            Some(_) => 3 * p - 3,
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if !(1..=Self::COUNT).contains(&index) {
            return Err(Error::Validation(format!("metaclass index {index} outside 1..=16")));
        }
        // index = 3p - 2 + offset, offset in {-1, 0, +1}
        let p = (index + 3) / 3;
        let primary = Stage::from_ordinal(p as u8).expect("p in 1..=6");
        let secondary = match (index + 3) % 3 {
            1 => None,
            2 => Stage::from_ordinal(p as u8 + 1),
            _ => Stage::from_ordinal(p as u8 - 1),
        };
        Ok(Metaclass { primary, secondary })
    }

    /// All metaclasses in scale order.
    pub fn all() -> impl Iterator<Item = Metaclass> {
        (1..=Self::COUNT).map(|i| Metaclass::from_index(i).expect("valid index"))
    }

    /// Distance on the metaclass scale.
    pub fn displacement(self, other: Metaclass) -> usize {
        self.index().abs_diff(other.index())
    }
}

impl fmt::Display for Metaclass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.secondary {
            Some(s) => write!(f, "({}, {})", self.primary, s),
            None => write!(f, "({}, -)", self.primary),
        }
    }
}

/// One field visit from the ground campaign.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundObservation {
    pub field_id: String,
    pub visit_date: NaiveDate,
    pub primary_stage: Stage,
    pub primary_pct: u8,
    pub secondary_stage: Option<Stage>,
    pub secondary_pct: Option<u8>,
    pub sowing_date: NaiveDate,
    pub harvest_date: NaiveDate,
}

impl GroundObservation {
    pub fn validate(&self) -> Result<()> {
        if self.primary_pct > 100 || self.secondary_pct.is_some_and(|p| p > 100) {
            return Err(Error::Validation("prevalence above 100%".into()));
        }
        if self.secondary_stage.is_some() != self.secondary_pct.is_some() {
            return Err(Error::Validation(
                "secondary stage and secondary prevalence must be given together".into(),
            ));
        }
        if let Some(sec) = self.secondary_pct {
            if sec > self.primary_pct {
                return Err(Error::Validation(format!(
                    "secondary prevalence {sec}% exceeds primary prevalence {}%",
                    self.primary_pct
                )));
            }
        }
        if self.sowing_date > self.harvest_date {
            return Err(Error::Validation("sowing date after harvest date".into()));
        }
        if self.visit_date < self.sowing_date || self.visit_date > self.harvest_date {
            return Err(Error::Validation(format!(
                "visit {} outside season [{}, {}]",
                self.visit_date, self.sowing_date, self.harvest_date
            )));
        }
        Ok(())
    }

    pub fn visit_doy(&self) -> u32 {
        self.visit_date.ordinal()
    }

    /// The observation as a metaclass. Prevalence percentages are not used.
    pub fn metaclass(&self) -> Result<Metaclass> {
        Metaclass::new(self.primary_stage, self.secondary_stage)
    }
}

pub const GROUND_OBSERVATION_HEADER: [&str; 8] = [
    "field_id",
    "visit_date",
    "primary_stage",
    "primary_pct",
    "secondary_stage",
    "secondary_pct",
    "sowing_date",
    "harvest_date",
];

pub fn parse_ground_observations(path: impl AsRef<Path>) -> Result<Vec<GroundObservation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ground_observations(file)
}

pub fn read_ground_observations<R: Read>(reader: R) -> Result<Vec<GroundObservation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        row: 1,
        message: e.to_string(),
    })?;
    if headers.iter().ne(GROUND_OBSERVATION_HEADER.iter().copied()) {
        return Err(Error::Parse {
            row: 1,
            message: format!("expected header `{}`", GROUND_OBSERVATION_HEADER.join(",")),
        });
    }

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse { row, message };
        if record.len() != GROUND_OBSERVATION_HEADER.len() {
            return Err(parse_err(format!(
                "expected {} columns, found {}",
                GROUND_OBSERVATION_HEADER.len(),
                record.len()
            )));
        }
        let date = |i: usize| {
            NaiveDate::parse_from_str(&record[i], "%Y-%m-%d")
                .map_err(|e| parse_err(format!("{}: {e}", GROUND_OBSERVATION_HEADER[i])))
        };
        let pct = |i: usize| {
            record[i]
                .parse::<u8>()
                .map_err(|e| parse_err(format!("{}: {e}", GROUND_OBSERVATION_HEADER[i])))
        };
        let obs = GroundObservation {
            field_id: record[0].to_string(),
            visit_date: date(1)?,
            primary_stage: record[2].parse()?,
            primary_pct: pct(3)?,
            secondary_stage: match &record[4] {
                "" => None,
                tok => Some(tok.parse()?),
            },
            secondary_pct: match &record[5] {
                "" => None,
                _ => Some(pct(5)?),
            },
            sowing_date: date(6)?,
            harvest_date: date(7)?,
        };
        obs.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(obs);
    }
    Ok(out)
}

pub fn write_ground_observations<W: Write>(writer: W, observations: &[GroundObservation]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
    wtr.write_record(GROUND_OBSERVATION_HEADER).map_err(csv_err)?;
    for o in observations {
        let date = |d: NaiveDate| d.format("%Y-%m-%d").to_string();
        wtr.write_record([
            o.field_id.clone(),
            date(o.visit_date),
            o.primary_stage.token().to_string(),
            o.primary_pct.to_string(),
            o.secondary_stage.map(|s| s.token().to_string()).unwrap_or_default(),
            o.secondary_pct.map(|p| p.to_string()).unwrap_or_default(),
            date(o.sowing_date),
            date(o.harvest_date),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Nearest acquisition to a visit day: `(acquisition doy, |difference| in days)`.
/// Ties go to the earlier acquisition.
pub fn match_observation_to_acquisition(visit_doy: u32, acquisitions: &[u32]) -> Result<(u32, u32)> {
    acquisitions
        .iter()
        .map(|&a| (a, a.abs_diff(visit_doy)))
        .min_by(|x, y| x.1.cmp(&y.1).then(x.0.cmp(&y.0)))
        .ok_or_else(|| Error::InsufficientData("no acquisitions to match against".into()))
}

/// Day-of-year for a calendar date, leap years included.
pub fn day_of_year(date: NaiveDate) -> u32 {
    date.ordinal()
}

/// Row key of the element space: one field at one acquisition.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ElementKey {
    pub field_id: String,
    pub doy: u32,
}

impl ElementKey {
    pub fn new(field_id: impl Into<String>, doy: u32) -> Self {
        ElementKey {
            field_id: field_id.into(),
            doy,
        }
    }
}

/// Per-field sequence of named variable vectors, one per acquisition day.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSeries<T> {
    field_id: String,
    variables: Vec<String>,
    doys: Vec<u32>,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> FieldSeries<T> {
    pub fn new(field_id: impl Into<String>, variables: Vec<String>) -> Self {
        FieldSeries {
            field_id: field_id.into(),
            variables,
            doys: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Appends an acquisition. Days must be strictly increasing and the value
    /// vector must match the variable list.
    pub fn push(&mut self, doy: u32, values: Vec<T>) -> Result<()> {
        if values.len() != self.variables.len() {
            return Err(Error::Validation(format!(
                "field {}: {} values for {} variables",
                self.field_id,
                values.len(),
                self.variables.len()
            )));
        }
        if self.doys.last().is_some_and(|&last| doy <= last) {
            return Err(Error::Validation(format!(
                "field {}: day {doy} does not follow {}",
                self.field_id,
                self.doys.last().unwrap()
            )));
        }
        self.doys.push(doy);
        self.rows.push(values);
        Ok(())
    }

    pub fn field_id(&self) -> &str {
        &self.field_id
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn doys(&self) -> &[u32] {
        &self.doys
    }

    pub fn len(&self) -> usize {
        self.doys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doys.is_empty()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn value(&self, row: usize, variable: usize) -> T {
        self.rows[row][variable]
    }

    pub fn column(&self, name: &str) -> Option<Vec<T>> {
        let idx = self.variable_index(name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Keeps only acquisitions on or before `doy`.
    pub fn truncated(&self, doy: u32) -> Self {
        let n = self.doys.partition_point(|&d| d <= doy);
        FieldSeries {
            field_id: self.field_id.clone(),
            variables: self.variables.clone(),
            doys: self.doys[..n].to_vec(),
            rows: self.rows[..n].to_vec(),
        }
    }
}
