//! Predictor variables: Sentinel-2 vegetation indices, their cumulative
//! integrals, accumulated weather/soil aggregates and the day-of-year
//! encoding, plus assembly of the standardized element space.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data_model::{ElementKey, FieldSeries};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_START_DOY: u32 = 100;
pub const DEFAULT_BASE_TEMPERATURE: f64 = 15.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureCategory {
    Time,
    Vi,
    ViIntegral,
    AccumulatedWeather,
}

/// Vegetation indices computed from Sentinel-2 band reflectances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vi {
    Ndvi,
    Ndwi,
    Ndmi,
    Psri,
    Savi,
    Evi,
    VariGreen,
    Gari,
    Sipi,
    Wdrvi,
    Gvmi,
}

impl Vi {
    pub const ALL: [Vi; 11] = [
        Vi::Ndvi,
        Vi::Ndwi,
        Vi::Ndmi,
        Vi::Psri,
        Vi::Savi,
        Vi::Evi,
        Vi::VariGreen,
        Vi::Gari,
        Vi::Sipi,
        Vi::Wdrvi,
        Vi::Gvmi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Vi::Ndvi => "NDVI",
            Vi::Ndwi => "NDWI",
            Vi::Ndmi => "NDMI",
            Vi::Psri => "PSRI",
            Vi::Savi => "SAVI",
            Vi::Evi => "EVI",
            Vi::VariGreen => "VARIgreen",
            Vi::Gari => "GARI",
            Vi::Sipi => "SIPI",
            Vi::Wdrvi => "WDRVI",
            Vi::Gvmi => "GVMI",
        }
    }

    /// Evaluates the index. Missing bands, a zero denominator or a
    /// non-finite result give `None`; those values are gap-filled later.
    pub fn compute<T: Scalar>(self, b: &BandValues<T>) -> Option<T> {
        let l = T::lit;
        let ratio = |num: T, den: T| {
            if den == T::zero() {
                None
            } else {
                Some(num / den)
            }
        };
        let v = match self {
            Vi::Ndvi => {
                let (b08, b04) = (b.b08?, b.b04?);
                ratio(b08 - b04, b08 + b04)
            }
            Vi::Ndwi => {
                let (b03, b08) = (b.b03?, b.b08?);
                ratio(b03 - b08, b08 + b03)
            }
            Vi::Ndmi => {
                let (b08, b11) = (b.b08?, b.b11?);
                ratio(b08 - b11, b08 + b11)
            }
            Vi::Psri => {
                let (b04, b02, b06) = (b.b04?, b.b02?, b.b06?);
                ratio(b04 - b02, b06)
            }
            Vi::Savi => {
                let (b08, b04) = (b.b08?, b.b04?);
                ratio(b08 - b04, b08 + b04 + l(0.428)).map(|r| r * l(1.428))
            }
            Vi::Evi => {
                let (b08, b04, b02) = (b.b08?, b.b04?, b.b02?);
                ratio(l(2.5) * (b08 - b04), (b08 + l(6.0) * b04 - l(7.5) * b02) + T::one())
            }
            Vi::VariGreen => {
                let (b03, b04, b02) = (b.b03?, b.b04?, b.b02?);
                ratio(b03 - b04, b03 + b04 - b02)
            }
            Vi::Gari => {
                let (b08, b03, b02, b04) = (b.b08?, b.b03?, b.b02?, b.b04?);
                ratio(b08 - (b03 - (b02 - b04)), b08 - (b03 + (b02 - b04)))
            }
            Vi::Sipi => {
                let (b08, b02, b04) = (b.b08?, b.b02?, b.b04?);
                ratio(b08 - b02, b08 - b04)
            }
            Vi::Wdrvi => {
                let (b08, b04) = (b.b08?, b.b04?);
                ratio(l(0.2) * b08 - b04, l(0.2) * b08 + b04)
            }
            Vi::Gvmi => {
                let (b08, b12) = (b.b08?, b.b12?);
                let (nir, swir) = (b08 + l(0.1), b12 + l(0.02));
                ratio(nir - swir, nir + swir)
            }
        }?;
        v.is_finite().then_some(v)
    }
}

/// Daily weather/soil variables that are accumulated from the season start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WeatherAggregate {
    Gdd,
    Precip,
    RadMax,
    SoilTmax,
    SoilTmin,
    SurfTmax,
    SurfTmin,
    SoilMoistMin,
    SoilMoistMax,
}

impl WeatherAggregate {
    pub const ALL: [WeatherAggregate; 9] = [
        WeatherAggregate::Gdd,
        WeatherAggregate::Precip,
        WeatherAggregate::RadMax,
        WeatherAggregate::SoilTmax,
        WeatherAggregate::SoilTmin,
        WeatherAggregate::SurfTmax,
        WeatherAggregate::SurfTmin,
        WeatherAggregate::SoilMoistMin,
        WeatherAggregate::SoilMoistMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WeatherAggregate::Gdd => "acc_gdd",
            WeatherAggregate::Precip => "acc_precip",
            WeatherAggregate::RadMax => "acc_rad_max",
            WeatherAggregate::SoilTmax => "acc_soil_tmax",
            WeatherAggregate::SoilTmin => "acc_soil_tmin",
            WeatherAggregate::SurfTmax => "acc_surf_tmax",
            WeatherAggregate::SurfTmin => "acc_surf_tmin",
            WeatherAggregate::SoilMoistMin => "acc_soil_moist_min",
            WeatherAggregate::SoilMoistMax => "acc_soil_moist_max",
        }
    }

    fn daily<T: Scalar>(self, w: &WeatherRecord<T>, cfg: &FeatureConfig<T>) -> Result<T> {
        Ok(match self {
            WeatherAggregate::Gdd => gdd(w.tmax2m, w.tmin2m, cfg.base_temperature, cfg.gdd)?,
            WeatherAggregate::Precip => w.precip,
            WeatherAggregate::RadMax => w.rad_max,
            WeatherAggregate::SoilTmax => w.soil_tmax,
            WeatherAggregate::SoilTmin => w.soil_tmin,
            WeatherAggregate::SurfTmax => w.surf_tmax,
            WeatherAggregate::SurfTmin => w.surf_tmin,
            WeatherAggregate::SoilMoistMin => w.soil_moist_min,
            WeatherAggregate::SoilMoistMax => w.soil_moist_max,
        })
    }
}

/// A named predictor. The derived ordering is the canonical column order of
/// an element space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FeatureName {
    SinDoy,
    CosDoy,
    Vi(Vi),
    Integral(Vi),
    Accumulated(WeatherAggregate),
}

impl FeatureName {
    /// Time encodings present in every feature set.
    pub const FORCED: [FeatureName; 2] = [FeatureName::SinDoy, FeatureName::CosDoy];

    /// Every feature the crate knows how to compute.
    pub fn vocabulary() -> Vec<FeatureName> {
        let mut v = FeatureName::FORCED.to_vec();
        v.extend(Vi::ALL.map(FeatureName::Vi));
        v.extend(Vi::ALL.map(FeatureName::Integral));
        v.extend(WeatherAggregate::ALL.map(FeatureName::Accumulated));
        v
    }

    /// The 32-feature search pool: the vocabulary without
    /// `acc_soil_moist_max`.
    pub fn candidate_pool() -> Vec<FeatureName> {
        FeatureName::vocabulary()
            .into_iter()
            .filter(|f| *f != FeatureName::Accumulated(WeatherAggregate::SoilMoistMax))
            .collect()
    }

    pub fn category(self) -> FeatureCategory {
        match self {
            FeatureName::SinDoy | FeatureName::CosDoy => FeatureCategory::Time,
            FeatureName::Vi(_) => FeatureCategory::Vi,
            FeatureName::Integral(_) => FeatureCategory::ViIntegral,
            FeatureName::Accumulated(_) => FeatureCategory::AccumulatedWeather,
        }
    }

    pub fn is_forced(self) -> bool {
        FeatureName::FORCED.contains(&self)
    }

    pub fn name(self) -> String {
        match self {
            FeatureName::SinDoy => "sin_doy".into(),
            FeatureName::CosDoy => "cos_doy".into(),
            FeatureName::Vi(vi) => vi.name().into(),
            FeatureName::Integral(vi) => format!("int_{}", vi.name()),
            FeatureName::Accumulated(w) => w.name().into(),
        }
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for FeatureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        FeatureName::vocabulary()
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFeature(s.to_string()))
    }
}

impl From<FeatureName> for String {
    fn from(f: FeatureName) -> String {
        f.name()
    }
}

impl TryFrom<String> for FeatureName {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Canonical feature set: the forced time encodings plus `selected`,
/// deduplicated and in canonical order.
pub fn canonical_feature_set(selected: &[FeatureName]) -> Vec<FeatureName> {
    let mut set: Vec<FeatureName> = FeatureName::FORCED.iter().chain(selected).copied().collect();
    set.sort();
    set.dedup();
    set
}

pub fn feature_set_key(features: &[FeatureName]) -> String {
    features.iter().map(|f| f.name()).collect::<Vec<_>>().join("|")
}

/// Mean band reflectances of a field at one acquisition; `None` where the
/// value is missing (clouds).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BandValues<T> {
    pub b02: Option<T>,
    pub b03: Option<T>,
    pub b04: Option<T>,
    pub b06: Option<T>,
    pub b08: Option<T>,
    pub b11: Option<T>,
    pub b12: Option<T>,
}

impl<T: Scalar> BandValues<T> {
    pub fn complete(b02: T, b03: T, b04: T, b06: T, b08: T, b11: T, b12: T) -> Self {
        BandValues {
            b02: Some(b02),
            b03: Some(b03),
            b04: Some(b04),
            b06: Some(b06),
            b08: Some(b08),
            b11: Some(b11),
            b12: Some(b12),
        }
    }
}

/// All eleven indices, in [`Vi::ALL`] order.
pub fn compute_vi<T: Scalar>(bands: &BandValues<T>) -> [Option<T>; 11] {
    Vi::ALL.map(|vi| vi.compute(bands))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GddConvention {
    /// `(tmax + tmin) / 2 - tbase`
    #[default]
    Mean,
    /// `(tmax - tmin) / 2 - tbase`, the half-range form
    Paper,
}

impl FromStr for GddConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(GddConvention::Mean),
            "paper" => Ok(GddConvention::Paper),
            other => Err(Error::Validation(format!(
                "unknown GDD convention `{other}` (expected mean or paper)"
            ))),
        }
    }
}

/// Daily growing degree days, clamped at zero.
pub fn gdd<T: Scalar>(tmax: T, tmin: T, tbase: T, convention: GddConvention) -> Result<T> {
    if !(tmax.is_finite() && tmin.is_finite()) {
        return Err(Error::Validation("non-finite temperature".into()));
    }
    if tmax < tmin {
        return Err(Error::Validation(format!("tmax {tmax} below tmin {tmin}")));
    }
    let two = T::lit(2.0);
    let raw = match convention {
        GddConvention::Mean => (tmax + tmin) / two - tbase,
        GddConvention::Paper => (tmax - tmin) / two - tbase,
    };
    Ok(raw.max(T::zero()))
}

/// Linear interpolation over day-of-year for interior gaps, nearest valid
/// value at the edges.
pub fn gap_fill<T: Scalar>(doys: &[u32], values: &[Option<T>]) -> Result<Vec<T>> {
    assert_eq!(doys.len(), values.len(), "doys and values differ in length");
    let valid: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    if valid.is_empty() {
        return Err(Error::InsufficientData("series has no valid values".into()));
    }
    let at = |i: usize| values[i].expect("valid index");
    let mut out = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            out.push(*v);
            continue;
        }
        // first valid position after i
        let pos = valid.partition_point(|&j| j < i);
        let filled = if pos == 0 {
            at(valid[0])
        } else if pos == valid.len() {
            at(valid[pos - 1])
        } else {
            let (lo, hi) = (valid[pos - 1], valid[pos]);
            let (x0, x1) = (T::lit(f64::from(doys[lo])), T::lit(f64::from(doys[hi])));
            let x = T::lit(f64::from(doys[i]));
            at(lo) + (at(hi) - at(lo)) * (x - x0) / (x1 - x0)
        };
        out.push(filled);
    }
    Ok(out)
}

/// Running trapezoidal integral over day-of-year starting at `start_doy`.
/// Points before the start are zero; a segment straddling the start is
/// clipped at the linearly interpolated start value.
pub fn cumulative_integral<T: Scalar>(doys: &[u32], values: &[T], start_doy: u32) -> Vec<T> {
    assert_eq!(doys.len(), values.len(), "doys and values differ in length");
    let half = T::lit(0.5);
    let start = T::lit(f64::from(start_doy));
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(doys.len());
    for i in 0..doys.len() {
        if i > 0 && doys[i] > start_doy {
            let (x0, x1) = (T::lit(f64::from(doys[i - 1])), T::lit(f64::from(doys[i])));
            let (y0, y1) = (values[i - 1], values[i]);
            let (a, ya) = if doys[i - 1] < start_doy {
                (start, y0 + (y1 - y0) * (start - x0) / (x1 - x0))
            } else {
                (x0, y0)
            };
            acc += half * (ya + y1) * (x1 - a);
        }
        out.push(acc);
    }
    out
}

/// Running sum of daily values from `start_doy` inclusive. Days before the
/// start contribute nothing; missing days contribute nothing.
pub fn accumulate_weather<T: Scalar>(doys: &[u32], values: &[T], start_doy: u32) -> Vec<T> {
    assert_eq!(doys.len(), values.len(), "doys and values differ in length");
    let mut acc = T::zero();
    let mut prev: Option<u32> = None;
    let mut out = Vec::with_capacity(doys.len());
    for (&d, &v) in doys.iter().zip(values) {
        if d >= start_doy {
            if let Some(p) = prev.filter(|&p| p >= start_doy && d > p + 1) {
                log::warn!("daily series has a gap between day {p} and day {d}; missing days count as zero");
            }
            acc += v;
        }
        prev = Some(d);
        out.push(acc);
    }
    out
}

/// Value of a running series at `doy`: the entry of the latest day on or
/// before `doy`, or zero if there is none.
pub fn value_at<T: Scalar>(doys: &[u32], running: &[T], doy: u32) -> T {
    let n = doys.partition_point(|&d| d <= doy);
    if n == 0 {
        T::zero()
    } else {
        running[n - 1]
    }
}

pub fn doy_angle<T: Scalar>(doy: T) -> T {
    T::lit(2.0 * std::f64::consts::PI) * doy / T::lit(365.25)
}

/// `(sin, cos)` of the day-of-year angle `2*pi*doy/365.25`.
pub fn doy_encode<T: Scalar>(doy: u32) -> Result<(T, T)> {
    if !(1..=366).contains(&doy) {
        return Err(Error::Validation(format!("day of year {doy} outside 1..=366")));
    }
    let a = doy_angle(T::lit(f64::from(doy)));
    Ok((a.sin(), a.cos()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SatelliteRecord<T> {
    pub field_id: String,
    pub doy: u32,
    pub bands: BandValues<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeatherRecord<T> {
    pub field_id: String,
    pub doy: u32,
    pub tmax2m: T,
    pub tmin2m: T,
    pub surf_tmax: T,
    pub surf_tmin: T,
    pub soil_tmax: T,
    pub soil_tmin: T,
    pub soil_moist_min: T,
    pub soil_moist_max: T,
    pub precip: T,
    pub rad_max: T,
}

pub const SATELLITE_HEADER: [&str; 9] = ["field_id", "doy", "B02", "B03", "B04", "B06", "B08", "B11", "B12"];

pub const WEATHER_HEADER: [&str; 12] = [
    "field_id",
    "doy",
    "tmax2m",
    "tmin2m",
    "surf_tmax",
    "surf_tmin",
    "soil_tmax",
    "soil_tmin",
    "soil_moist_min",
    "soil_moist_max",
    "precip",
    "rad_max",
];

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::Parse {
        row: 1,
        message: e.to_string(),
    })?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            row: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

fn records<R: Read>(reader: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, header)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} columns, found {}", header.len(), rec.len()),
            });
        }
        out.push((row, rec));
    }
    Ok(out)
}

fn parse_real<T: Scalar>(row: u64, column: &str, s: &str) -> Result<T> {
    let v: f64 = s.parse().map_err(|e| Error::Parse {
        row,
        message: format!("{column}: {e}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            message: format!("{column}: non-finite value"),
        });
    }
    Ok(T::lit(v))
}

fn parse_doy(row: u64, s: &str) -> Result<u32> {
    let d: u32 = s.parse().map_err(|e| Error::Parse {
        row,
        message: format!("doy: {e}"),
    })?;
    if !(1..=366).contains(&d) {
        return Err(Error::Parse {
            row,
            message: format!("doy {d} outside 1..=366"),
        });
    }
    Ok(d)
}

pub fn read_satellite_csv<T: Scalar, R: Read>(reader: R) -> Result<Vec<SatelliteRecord<T>>> {
    records(reader, &SATELLITE_HEADER)?
        .into_iter()
        .map(|(row, rec)| {
            let band = |i: usize| -> Result<Option<T>> {
                match &rec[i] {
                    "" => Ok(None),
                    s => parse_real(row, SATELLITE_HEADER[i], s).map(Some),
                }
            };
            Ok(SatelliteRecord {
                field_id: rec[0].to_string(),
                doy: parse_doy(row, &rec[1])?,
                bands: BandValues {
                    b02: band(2)?,
                    b03: band(3)?,
                    b04: band(4)?,
                    b06: band(5)?,
                    b08: band(6)?,
                    b11: band(7)?,
                    b12: band(8)?,
                },
            })
        })
        .collect()
}

pub fn read_weather_csv<T: Scalar, R: Read>(reader: R) -> Result<Vec<WeatherRecord<T>>> {
    records(reader, &WEATHER_HEADER)?
        .into_iter()
        .map(|(row, rec)| {
            let v = |i: usize| parse_real::<T>(row, WEATHER_HEADER[i], &rec[i]);
            Ok(WeatherRecord {
                field_id: rec[0].to_string(),
                doy: parse_doy(row, &rec[1])?,
                tmax2m: v(2)?,
                tmin2m: v(3)?,
                surf_tmax: v(4)?,
                surf_tmin: v(5)?,
                soil_tmax: v(6)?,
                soil_tmin: v(7)?,
                soil_moist_min: v(8)?,
                soil_moist_max: v(9)?,
                precip: v(10)?,
                rad_max: v(11)?,
            })
        })
        .collect()
}

pub fn write_satellite_csv<T: Scalar, W: Write>(writer: W, records: &[SatelliteRecord<T>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
    wtr.write_record(SATELLITE_HEADER).map_err(csv_err)?;
    for r in records {
        let b = &r.bands;
        let mut row = vec![r.field_id.clone(), r.doy.to_string()];
        row.extend(
            [b.b02, b.b03, b.b04, b.b06, b.b08, b.b11, b.b12]
                .iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
        );
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn write_weather_csv<T: Scalar, W: Write>(writer: W, records: &[WeatherRecord<T>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
    wtr.write_record(WEATHER_HEADER).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.field_id.clone(), r.doy.to_string()];
        row.extend(
            [
                r.tmax2m,
                r.tmin2m,
                r.surf_tmax,
                r.surf_tmin,
                r.soil_tmax,
                r.soil_tmin,
                r.soil_moist_min,
                r.soil_moist_max,
                r.precip,
                r.rad_max,
            ]
            .iter()
            .map(|x| x.to_string()),
        );
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn load_satellite_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<SatelliteRecord<T>>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_satellite_csv(f)
}

pub fn load_weather_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<WeatherRecord<T>>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_weather_csv(f)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureConfig<T> {
    /// First day of accumulation and of the season window.
    pub start_doy: u32,
    /// Last acquisition day kept in the element space.
    pub end_doy: u32,
    pub base_temperature: T,
    pub gdd: GddConvention,
}

impl<T: Scalar> Default for FeatureConfig<T> {
    fn default() -> Self {
        FeatureConfig {
            start_doy: DEFAULT_START_DOY,
            end_doy: 366,
            base_temperature: T::lit(DEFAULT_BASE_TEMPERATURE),
            gdd: GddConvention::Mean,
        }
    }
}

/// How the optical part of a row may look at the rest of the season.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Availability {
    /// The whole season is known (training year).
    AfterSeason,
    /// Each row only sees acquisitions on or before its own day.
    WithinSeason,
}

/// Computes every available feature for one field at each acquisition
/// inside the season window.
///
/// Satellite records drive the rows. Vegetation-index columns appear when
/// satellite records exist, accumulated weather columns when weather records
/// exist for the field.
pub fn build_field_series<T: Scalar>(
    field_id: &str,
    satellite: &[SatelliteRecord<T>],
    weather: &[WeatherRecord<T>],
    cfg: &FeatureConfig<T>,
    availability: Availability,
) -> Result<FieldSeries<T>> {
    if cfg.start_doy >= cfg.end_doy {
        return Err(Error::Validation(format!(
            "season start {} not before end {}",
            cfg.start_doy, cfg.end_doy
        )));
    }
    let mut sat: Vec<&SatelliteRecord<T>> = satellite.iter().filter(|r| r.field_id == field_id).collect();
    sat.sort_by_key(|r| r.doy);
    if sat.windows(2).any(|w| w[0].doy == w[1].doy) {
        return Err(Error::Validation(format!(
            "field {field_id}: duplicate satellite acquisition day"
        )));
    }
    let mut wx: Vec<&WeatherRecord<T>> = weather.iter().filter(|r| r.field_id == field_id).collect();
    wx.sort_by_key(|r| r.doy);
    if wx.windows(2).any(|w| w[0].doy == w[1].doy) {
        return Err(Error::Validation(format!("field {field_id}: duplicate weather day")));
    }

    let acq_doys: Vec<u32> = sat.iter().map(|r| r.doy).collect();
    let raw_vi: Vec<[Option<T>; 11]> = sat.iter().map(|r| compute_vi(&r.bands)).collect();

    let mut variables: Vec<FeatureName> = FeatureName::FORCED.to_vec();
    if !sat.is_empty() {
        variables.extend(Vi::ALL.map(FeatureName::Vi));
        variables.extend(Vi::ALL.map(FeatureName::Integral));
    }
    if !wx.is_empty() {
        variables.extend(WeatherAggregate::ALL.map(FeatureName::Accumulated));
    }

    // Accumulations are prefix sums, so sampling them at a day is causal.
    let wx_doys: Vec<u32> = wx.iter().map(|r| r.doy).collect();
    let mut accumulated = Vec::new();
    for agg in WeatherAggregate::ALL {
        if wx.is_empty() {
            break;
        }
        let daily = wx
            .iter()
            .map(|r| agg.daily(r, cfg))
            .collect::<Result<Vec<T>>>()
            .map_err(|e| Error::Validation(format!("field {field_id}: {e}")))?;
        accumulated.push(accumulate_weather(&wx_doys, &daily, cfg.start_doy));
    }

    // Optical features: [vi values..., integrals...] per acquisition.
    let optical_over = |upto: usize| -> Result<Option<Vec<Vec<T>>>> {
        let doys = &acq_doys[..upto];
        let mut filled_cols = Vec::with_capacity(11);
        for (v, vi) in Vi::ALL.iter().enumerate() {
            let col: Vec<Option<T>> = raw_vi[..upto].iter().map(|r| r[v]).collect();
            match gap_fill(doys, &col) {
                Ok(c) => filled_cols.push(c),
                Err(_) if availability == Availability::WithinSeason => return Ok(None),
                Err(_) => {
                    return Err(Error::InsufficientData(format!(
                        "field {field_id}: {} has no valid acquisition",
                        vi.name()
                    )))
                }
            }
        }
        let integrals: Vec<Vec<T>> = filled_cols
            .iter()
            .map(|c| cumulative_integral(doys, c, cfg.start_doy))
            .collect();
        Ok(Some(
            (0..upto)
                .map(|i| {
                    filled_cols
                        .iter()
                        .map(|c| c[i])
                        .chain(integrals.iter().map(|c| c[i]))
                        .collect()
                })
                .collect(),
        ))
    };

    let full = match availability {
        Availability::AfterSeason if !sat.is_empty() => optical_over(sat.len())?,
        _ => None,
    };

    let mut series = FieldSeries::new(field_id, variables.iter().map(|f| f.name()).collect());
    for (i, &doy) in acq_doys.iter().enumerate() {
        if doy < cfg.start_doy || doy > cfg.end_doy {
            continue;
        }
        let optical = match availability {
            Availability::AfterSeason => full.as_ref().map(|rows| rows[i].clone()),
            Availability::WithinSeason => match optical_over(i + 1)? {
                Some(rows) => rows.into_iter().last(),
                None => {
                    log::debug!("field {field_id}: no valid optical data up to day {doy}, row skipped");
                    continue;
                }
            },
        };
        let (s, c) = doy_encode::<T>(doy)?;
        let mut row = vec![s, c];
        if let Some(opt) = optical {
            row.extend(opt);
        }
        row.extend(accumulated.iter().map(|acc| value_at(&wx_doys, acc, doy)));
        series.push(doy, row)?;
    }
    Ok(series)
}

/// Builds series for every field that has satellite records, ordered by field id.
pub fn build_all_field_series<T: Scalar>(
    satellite: &[SatelliteRecord<T>],
    weather: &[WeatherRecord<T>],
    cfg: &FeatureConfig<T>,
    availability: Availability,
) -> Result<Vec<FieldSeries<T>>> {
    let mut ids: Vec<&str> = satellite.iter().map(|r| r.field_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| build_field_series(id, satellite, weather, cfg, availability))
        .collect()
}

/// Per-column z-score statistics fitted on the training element space.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer<T> {
    pub features: Vec<FeatureName>,
    pub means: Vec<T>,
    pub scales: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Population mean and standard deviation per column. Constant columns
    /// get unit scale.
    pub fn fit(features: &[FeatureName], raw: &Array2<T>) -> Self {
        let n = T::from_usize_lossy(raw.nrows().max(1));
        let mut means = Vec::with_capacity(raw.ncols());
        let mut scales = Vec::with_capacity(raw.ncols());
        for col in raw.columns() {
            let mean = col.iter().copied().sum::<T>() / n;
            let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
            let sd = var.sqrt();
            means.push(mean);
            scales.push(if sd > T::zero() && sd.is_finite() { sd } else { T::one() });
        }
        Standardizer {
            features: features.to_vec(),
            means,
            scales,
        }
    }

    pub fn transform(&self, raw: &Array2<T>) -> Array2<T> {
        let mut out = raw.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.scales[j]);
            col.mapv_inplace(|x| (x - m) / s);
        }
        out
    }
}

/// `K x E` matrix of standardized feature vectors, one row per field and
/// acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementSpace<T> {
    pub keys: Vec<ElementKey>,
    pub features: Vec<FeatureName>,
    pub data: Array2<T>,
    pub standardizer: Standardizer<T>,
}

impl<T: Scalar> ElementSpace<T> {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Rows grouped by field, each group ordered by day.
    pub fn rows_by_field(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (k, key) in self.keys.iter().enumerate() {
            map.entry(key.field_id.as_str()).or_default().push(k);
        }
        for rows in map.values_mut() {
            rows.sort_by_key(|&k| self.keys[k].doy);
        }
        map
    }
}

fn gather_raw<T: Scalar>(fields: &[FieldSeries<T>], features: &[FeatureName]) -> Result<(Vec<ElementKey>, Array2<T>)> {
    let mut order: Vec<&FieldSeries<T>> = fields.iter().collect();
    order.sort_by(|a, b| a.field_id().cmp(b.field_id()));
    let k: usize = order.iter().map(|f| f.len()).sum();
    let mut data = Array2::zeros((k, features.len()));
    let mut keys = Vec::with_capacity(k);
    let mut row = 0;
    for field in order {
        let cols = features
            .iter()
            .map(|f| {
                field.variable_index(&f.name()).ok_or_else(|| Error::MissingVariable {
                    field_id: field.field_id().to_string(),
                    feature: f.name(),
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        for (i, &doy) in field.doys().iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                let v = field.value(i, c);
                if !v.is_finite() {
                    return Err(Error::NonFinite { row, column: j });
                }
                data[[row, j]] = v;
            }
            keys.push(ElementKey::new(field.field_id(), doy));
            row += 1;
        }
    }
    Ok((keys, data))
}

/// Assembles the training element space for `selected` (plus the forced
/// time encodings) and fits the standardization on it.
pub fn assemble_element_space<T: Scalar>(
    fields: &[FieldSeries<T>],
    selected: &[FeatureName],
) -> Result<ElementSpace<T>> {
    let features = canonical_feature_set(selected);
    let (keys, raw) = gather_raw(fields, &features)?;
    let standardizer = Standardizer::fit(&features, &raw);
    let data = standardizer.transform(&raw);
    Ok(ElementSpace {
        keys,
        features,
        data,
        standardizer,
    })
}

/// Assembles an inference element space standardized with stored training
/// statistics.
pub fn assemble_with_standardizer<T: Scalar>(
    fields: &[FieldSeries<T>],
    standardizer: &Standardizer<T>,
) -> Result<ElementSpace<T>> {
    let features = standardizer.features.clone();
    let (keys, raw) = gather_raw(fields, &features)?;
    let data = standardizer.transform(&raw);
    Ok(ElementSpace {
        keys,
        features,
        data,
        standardizer: standardizer.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bands(b02: f64, b03: f64, b04: f64, b06: f64, b08: f64, b11: f64, b12: f64) -> BandValues<f64> {
        BandValues::complete(b02, b03, b04, b06, b08, b11, b12)
    }

    #[test]
    fn pool_has_32_features() {
        let pool = FeatureName::candidate_pool();
        assert_eq!(pool.len(), 32);
        let count = |c| pool.iter().filter(|f| f.category() == c).count();
        assert_eq!(count(FeatureCategory::Time), 2);
        assert_eq!(count(FeatureCategory::Vi), 11);
        assert_eq!(count(FeatureCategory::ViIntegral), 11);
        assert_eq!(count(FeatureCategory::AccumulatedWeather), 8);
        assert_eq!(FeatureName::vocabulary().len(), 33);
    }

    #[test]
    fn feature_names_round_trip() {
        for f in FeatureName::vocabulary() {
            assert_eq!(f.name().parse::<FeatureName>().unwrap(), f);
        }
        assert_eq!(
            "int_GVMI".parse::<FeatureName>().unwrap(),
            FeatureName::Integral(Vi::Gvmi)
        );
        assert!("int_FOO".parse::<FeatureName>().is_err());
        let json = serde_json::to_string(&FeatureName::Accumulated(WeatherAggregate::Gdd)).unwrap();
        assert_eq!(json, "\"acc_gdd\"");
    }

    #[test]
    fn vi_formulas() {
        let b = BandValues {
            b08: Some(0.5),
            b04: Some(0.1),
            ..Default::default()
        };
        assert_abs_diff_eq!(Vi::Ndvi.compute(&b).unwrap(), 0.4 / 0.6, epsilon = 1e-12);
        let b = BandValues {
            b08: Some(0.3),
            b04: Some(0.3),
            ..Default::default()
        };
        assert_eq!(Vi::Ndvi.compute(&b), Some(0.0));
        let b = BandValues {
            b04: Some(0.3),
            b02: Some(0.1),
            b06: Some(0.4),
            ..Default::default()
        };
        assert_abs_diff_eq!(Vi::Psri.compute(&b).unwrap(), 0.5, epsilon = 1e-12);

        let b = bands(0.05, 0.08, 0.06, 0.2, 0.4, 0.25, 0.15);
        let v = compute_vi(&b).map(Option::unwrap);
        assert_abs_diff_eq!(v[1], (0.08 - 0.4) / (0.4 + 0.08), epsilon = 1e-12);
        assert_abs_diff_eq!(v[2], (0.4 - 0.25) / (0.4 + 0.25), epsilon = 1e-12);
        assert_abs_diff_eq!(v[4], (0.34 / (0.46 + 0.428)) * 1.428, epsilon = 1e-12);
        assert_abs_diff_eq!(v[5], 2.5 * 0.34 / ((0.4 + 0.36 - 0.375) + 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(v[6], 0.02 / (0.08 + 0.06 - 0.05), epsilon = 1e-12);
        assert_abs_diff_eq!(
            v[7],
            (0.4 - (0.08 - (-0.01))) / (0.4 - (0.08 + (-0.01))),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(v[8], 0.35 / 0.34, epsilon = 1e-12);
        assert_abs_diff_eq!(v[9], (0.08 - 0.06) / (0.08 + 0.06), epsilon = 1e-12);
        assert_abs_diff_eq!(v[10], (0.5 - 0.17) / (0.5 + 0.17), epsilon = 1e-12);
    }

    #[test]
    fn zero_denominator_and_missing_band_give_none() {
        let b = BandValues {
            b08: Some(0.0),
            b04: Some(0.0),
            ..Default::default()
        };
        assert_eq!(Vi::Ndvi.compute(&b), None);
        let b = BandValues {
            b04: Some(0.3),
            b02: Some(0.1),
            b06: Some(0.0),
            ..Default::default()
        };
        assert_eq!(Vi::Psri.compute(&b), None);
        assert_eq!(Vi::Gvmi.compute(&BandValues::<f64>::default()), None);
    }

    #[test]
    fn gdd_cases() {
        let g = |a, b| gdd(a, b, 15.6, GddConvention::Mean).unwrap();
        assert_abs_diff_eq!(g(30.0, 20.0), 9.4, epsilon = 1e-12);
        assert_eq!(g(16.0, 10.0), 0.0);
        assert_eq!(g(15.6, 15.6), 0.0);
        assert!(gdd(10.0, 20.0, 15.6, GddConvention::Mean).is_err());
        // half-range form: (40 - 0)/2 - 15.6
        assert_abs_diff_eq!(
            gdd(40.0, 0.0, 15.6, GddConvention::Paper).unwrap(),
            4.4,
            epsilon = 1e-12
        );
        assert_eq!(gdd(30.0, 20.0, 15.6, GddConvention::Paper).unwrap(), 0.0);
    }

    #[test]
    fn gap_fill_cases() {
        let d = [100, 105, 110];
        assert_eq!(
            gap_fill(&d, &[Some(1.0), None, Some(3.0)]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        assert_eq!(
            gap_fill(&d, &[Some(1.0), Some(5.0), Some(3.0)]).unwrap(),
            vec![1.0, 5.0, 3.0]
        );
        assert_eq!(gap_fill(&[100, 105], &[None, Some(2.0)]).unwrap(), vec![2.0, 2.0]);
        assert_eq!(gap_fill(&d, &[Some(4.0), None, None]).unwrap(), vec![4.0, 4.0, 4.0]);
        // irregular spacing interpolates on day, not on position
        let v = gap_fill(&[100, 101, 110], &[Some(0.0), None, Some(10.0)]).unwrap();
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-12);
        let v = gap_fill(&[1, 2, 3, 4, 5, 6], &[None, Some(1.0), None, None, Some(4.0), None]).unwrap();
        assert_eq!(v, vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert!(gap_fill::<f64>(&d, &[None, None, None]).is_err());
    }

    #[test]
    fn cumulative_integral_cases() {
        let d = [100, 105, 110];
        assert_eq!(cumulative_integral(&d, &[0.5, 0.5, 0.5], 100), vec![0.0, 2.5, 5.0]);
        assert_eq!(cumulative_integral(&[120], &[0.7], 100), vec![0.0]);
        let ramp = cumulative_integral(&[100, 110], &[0.0, 1.0], 100);
        assert_abs_diff_eq!(ramp[1], 5.0, epsilon = 1e-12);
        // before the start contributes nothing; straddling segment is clipped
        let v = cumulative_integral(&[90, 95, 105], &[1.0, 1.0, 1.0], 100);
        assert_eq!(v, vec![0.0, 0.0, 5.0]);
        let v = cumulative_integral(&[90, 110], &[0.0, 2.0], 100);
        assert_abs_diff_eq!(v[1], 0.5 * (1.0 + 2.0) * 10.0, epsilon = 1e-12);
    }

    #[test]
    fn accumulate_weather_cases() {
        let acc = accumulate_weather(&[100, 101], &[9.4, 9.4], 100);
        assert_abs_diff_eq!(acc[1], 18.8, epsilon = 1e-12);
        assert_eq!(
            accumulate_weather(&[100, 101, 102, 103], &[0.0, 5.0, 0.0, 12.0], 100),
            vec![0.0, 5.0, 5.0, 17.0]
        );
        let acc = accumulate_weather(&[98, 99, 101], &[3.0, 3.0, 2.0], 100);
        assert_eq!(acc, vec![0.0, 0.0, 2.0]);
        assert_eq!(value_at(&[98, 99, 101], &acc, 100), 0.0);
        assert_eq!(value_at(&[98, 99, 101], &acc, 150), 2.0);
        assert_eq!(value_at(&[98, 99, 101], &acc, 50), 0.0);
    }

    #[test]
    fn doy_encoding() {
        let (s, c): (f64, f64) = (doy_angle(0.0f64).sin(), doy_angle(0.0f64).cos());
        assert_eq!((s, c), (0.0, 1.0));
        let (s, c) = doy_encode::<f64>(91).unwrap();
        assert!((s - 1.0).abs() < 0.02 && c.abs() < 0.02);
        let (s, c) = doy_encode::<f64>(365).unwrap();
        assert!(s.abs() < 0.02 && (c - 1.0).abs() < 0.02);
        assert!(doy_encode::<f64>(0).is_err());
        assert!(doy_encode::<f64>(367).is_err());
    }

    fn toy_fields() -> Vec<FieldSeries<f64>> {
        let vars: Vec<String> = [
            "sin_doy", "cos_doy", "NDVI", "int_NDVI", "acc_gdd", "EVI", "SIPI", "GVMI", "PSRI",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        ["b", "a"]
            .iter()
            .enumerate()
            .map(|(fi, id)| {
                let mut s = FieldSeries::new(*id, vars.clone());
                for (j, doy) in [120u32, 150, 180].iter().enumerate() {
                    let (sn, cs) = doy_encode::<f64>(*doy).unwrap();
                    let x = (fi * 3 + j) as f64;
                    s.push(
                        *doy,
                        vec![
                            sn,
                            cs,
                            0.1 * x,
                            x * x,
                            10.0 * x,
                            0.3 - 0.02 * x,
                            1.0 + x.sin(),
                            0.5 * x,
                            -x,
                        ],
                    )
                    .unwrap();
                }
                s
            })
            .collect()
    }

    #[test]
    fn element_space_shape_and_standardization() {
        let fields = toy_fields();
        let sel: Vec<FeatureName> = ["NDVI", "int_NDVI", "acc_gdd", "EVI", "SIPI", "GVMI"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let space = assemble_element_space(&fields, &sel).unwrap();
        assert_eq!(space.data.dim(), (6, 8));
        assert_eq!(space.keys[0], ElementKey::new("a", 120));
        assert_eq!(space.keys[3], ElementKey::new("b", 120));
        for col in space.data.columns() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-9);
        }
        // reuse the stored statistics instead of refitting
        let again = assemble_with_standardizer(&fields, &space.standardizer).unwrap();
        assert_eq!(again.data, space.data);
        let half: Vec<_> = fields.iter().map(|f| f.truncated(150)).collect();
        let partial = assemble_with_standardizer(&half, &space.standardizer).unwrap();
        assert_eq!(partial.data.row(0), space.data.row(0));
        let refit = assemble_element_space(&half, &sel).unwrap();
        assert_ne!(refit.data.row(0), space.data.row(0));
    }

    #[test]
    fn missing_variable_is_descriptive() {
        let fields = toy_fields();
        let err = assemble_element_space(&fields, &["acc_precip".parse().unwrap()]).unwrap_err();
        assert!(err.to_string().contains("acc_precip"), "{err}");
    }

    fn sat(doy: u32, nir: Option<f64>) -> SatelliteRecord<f64> {
        SatelliteRecord {
            field_id: "f".into(),
            doy,
            bands: BandValues {
                b08: nir,
                ..bands(0.05, 0.08, 0.06, 0.2, 0.0, 0.25, 0.15)
            },
        }
    }

    fn wx(doy: u32) -> WeatherRecord<f64> {
        WeatherRecord {
            field_id: "f".into(),
            doy,
            tmax2m: 30.0,
            tmin2m: 20.0,
            surf_tmax: 35.0,
            surf_tmin: 15.0,
            soil_tmax: 28.0,
            soil_tmin: 18.0,
            soil_moist_min: 0.2,
            soil_moist_max: 0.3,
            precip: 1.0,
            rad_max: 800.0,
        }
    }

    #[test]
    fn field_series_from_raw_records() {
        let s = vec![
            sat(95, Some(0.3)),
            sat(100, Some(0.3)),
            sat(105, None),
            sat(110, Some(0.5)),
        ];
        let w: Vec<_> = (90..=110).map(wx).collect();
        let cfg = FeatureConfig::default();
        let fs = build_field_series("f", &s, &w, &cfg, Availability::AfterSeason).unwrap();
        assert_eq!(fs.doys(), &[100, 105, 110]);
        assert_eq!(fs.variables().len(), 33);
        let agdd = fs.column("acc_gdd").unwrap();
        assert_abs_diff_eq!(agdd[0], 9.4, epsilon = 1e-9);
        assert_abs_diff_eq!(agdd[2], 9.4 * 11.0, epsilon = 1e-9);
        // the cloudy day is interpolated after the season, extended within it
        let ndvi_after = fs.column("NDVI").unwrap();
        let within = build_field_series("f", &s, &w, &cfg, Availability::WithinSeason).unwrap();
        let ndvi_within = within.column("NDVI").unwrap();
        let ndvi = |nir: f64| (nir - 0.06) / (nir + 0.06);
        assert_abs_diff_eq!(ndvi_after[1], 0.5 * (ndvi(0.3) + ndvi(0.5)), epsilon = 1e-12);
        assert_abs_diff_eq!(ndvi_within[1], ndvi(0.3), epsilon = 1e-12);
        assert_eq!(ndvi_after[2], ndvi_within[2]);
    }

    #[test]
    fn within_season_rows_ignore_later_data() {
        let s = vec![
            sat(100, None),
            sat(105, Some(0.3)),
            sat(110, Some(0.4)),
            sat(115, None),
            sat(120, Some(0.6)),
        ];
        let w: Vec<_> = (100..=120).map(wx).collect();
        let cfg = FeatureConfig::default();
        let full = build_field_series("f", &s, &w, &cfg, Availability::WithinSeason).unwrap();
        // the first acquisition has no valid optical data yet
        assert_eq!(full.doys(), &[105, 110, 115, 120]);
        for cut in [105, 110, 115] {
            let s_cut: Vec<_> = s.iter().filter(|r| r.doy <= cut).cloned().collect();
            let w_cut: Vec<_> = w.iter().filter(|r| r.doy <= cut).cloned().collect();
            let part = build_field_series("f", &s_cut, &w_cut, &cfg, Availability::WithinSeason).unwrap();
            assert_eq!(part, full.truncated(cut));
        }
    }

    #[test]
    fn csv_readers() {
        let sat_csv =
            "field_id,doy,B02,B03,B04,B06,B08,B11,B12\nf1,100,0.05,0.08,0.06,0.2,0.4,0.25,0.15\nf1,105,,,,,,,\n";
        let recs = read_satellite_csv::<f64, _>(sat_csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].bands, BandValues::default());
        let bad = "field_id,doy,B02,B03,B04,B06,B08,B11,B12\nf1,xx,0.05,0.08,0.06,0.2,0.4,0.25,0.15\n";
        assert!(matches!(
            read_satellite_csv::<f64, _>(bad.as_bytes()),
            Err(Error::Parse { row: 2, .. })
        ));
        let wx_csv = "field_id,doy,tmax2m,tmin2m,surf_tmax,surf_tmin,soil_tmax,soil_tmin,soil_moist_min,soil_moist_max,precip,rad_max\nf1,100,30,20,35,15,28,18,0.2,0.3,1,800\n";
        let w = read_weather_csv::<f32, _>(wx_csv.as_bytes()).unwrap();
        assert_eq!(w[0].tmax2m, 30.0f32);
    }

    #[test]
    fn csv_writers_round_trip() {
        let sat_csv =
            "field_id,doy,B02,B03,B04,B06,B08,B11,B12\nf1,100,0.05,0.08,0.06,0.2,0.4,0.25,0.15\nf1,105,,,,0.1,,,\n";
        let recs = read_satellite_csv::<f64, _>(sat_csv.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_satellite_csv(&mut buf, &recs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), sat_csv);
        let wx = vec![WeatherRecord {
            field_id: "f1".to_string(),
            doy: 101,
            tmax2m: 0.1 + 0.2,
            tmin2m: 1.0 / 3.0,
            surf_tmax: 35.0,
            surf_tmin: 15.0,
            soil_tmax: 28.0,
            soil_tmin: 18.0,
            soil_moist_min: 0.2,
            soil_moist_max: 0.3,
            precip: 0.0,
            rad_max: 812.5,
        }];
        let mut buf = Vec::new();
        write_weather_csv(&mut buf, &wx).unwrap();
        assert_eq!(read_weather_csv::<f64, _>(&buf[..]).unwrap(), wx);
    }

    proptest! {
        #[test]
        fn normalized_differences_bounded(b in prop::array::uniform7(0.0f64..1.0)) {
            let bv = BandValues::complete(b[0], b[1], b[2], b[3], b[4], b[5], b[6]);
            for vi in [Vi::Ndvi, Vi::Ndwi, Vi::Ndmi, Vi::Wdrvi, Vi::Gvmi] {
                if let Some(v) = vi.compute(&bv) {
                    prop_assert!((-1.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn accumulations_monotone(vals in prop::collection::vec(0.0f64..10.0, 1..40), start in 90u32..110) {
            let doys: Vec<u32> = (0..vals.len() as u32).map(|i| 95 + 3 * i).collect();
            for w in cumulative_integral(&doys, &vals, start).windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            for w in accumulate_weather(&doys, &vals, start).windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }

        #[test]
        fn gap_fill_is_finite_and_keeps_valid(vals in prop::collection::vec(prop::option::of(-1.0f64..1.0), 1..30)) {
            prop_assume!(vals.iter().any(Option::is_some));
            let doys: Vec<u32> = (0..vals.len() as u32).map(|i| 100 + 5 * i).collect();
            let filled = gap_fill(&doys, &vals).unwrap();
            for (f, v) in filled.iter().zip(&vals) {
                prop_assert!(f.is_finite());
                if let Some(v) = v { prop_assert_eq!(f, v); }
            }
        }
    }
}
