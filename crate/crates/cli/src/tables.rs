//! CSV files written and read by the pipeline besides the input tables.

use std::io::{Read, Write};

use cotton_phenology::data_model::write_ground_observations;
use cotton_phenology::features::{write_satellite_csv, write_weather_csv};
use cotton_phenology::metrics::{DisplacementReport, ObservationMatch};
use cotton_phenology::{ElementKey, Error, Metaclass, RankedPrediction64, Result, Stage};

use crate::synth::SynthDataset;

pub const PREDICTION_HEADER: [&str; 12] = [
    "field_id",
    "doy",
    "primary",
    "secondary",
    "metaclass_index",
    "w1",
    "w2",
    "w3",
    "w4",
    "w5",
    "w6",
    "ranking",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv write: {e}"))
}

/// One row per element. `w1..w6` are the membership weights in ranked
/// order and `ranking` lists the matching stages separated by `>`.
pub fn write_predictions<W: Write>(writer: W, predictions: &[RankedPrediction64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTION_HEADER).map_err(csv_err)?;
    for p in predictions {
        let m = p.metaclass;
        let mut row = vec![
            p.key.field_id.clone(),
            p.key.doy.to_string(),
            m.primary().token().to_string(),
            m.secondary().map(|s| s.token().to_string()).unwrap_or_default(),
            m.index().to_string(),
        ];
        row.extend(p.weights.iter().map(|x| x.to_string()));
        row.push(p.ranking.iter().map(|s| s.token()).collect::<Vec<_>>().join(">"));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))
}

fn parse_error(row: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        message: message.into(),
    }
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<RankedPrediction64>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = r.headers().map_err(|e| parse_error(1, e.to_string()))?;
    if header.iter().ne(PREDICTION_HEADER.iter().copied()) {
        return Err(parse_error(
            1,
            format!("expected header `{}`", PREDICTION_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_error(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let row = rec.position().map_or(0, |p| p.line());
        let doy: u32 = rec[1]
            .parse()
            .map_err(|_| parse_error(row, format!("bad doy {:?}", &rec[1])))?;
        let primary: Stage = rec[2].parse()?;
        let secondary = match &rec[3] {
            "" => None,
            s => Some(s.parse::<Stage>()?),
        };
        let metaclass = Metaclass::new(primary, secondary)?;
        let index: usize = rec[4].parse().map_err(|_| parse_error(row, "bad metaclass index"))?;
        if index != metaclass.index() {
            return Err(parse_error(
                row,
                format!("metaclass index {index} disagrees with {metaclass}"),
            ));
        }
        let mut weights = [0.0; 6];
        for (i, w) in weights.iter_mut().enumerate() {
            *w = rec[5 + i]
                .parse()
                .map_err(|_| parse_error(row, format!("bad weight w{}", i + 1)))?;
        }
        let stages = rec[11].split('>').map(str::parse).collect::<Result<Vec<Stage>>>()?;
        let ranking: [Stage; 6] = stages
            .try_into()
            .map_err(|_| parse_error(row, "ranking must list six stages"))?;
        if ranking[0] != primary {
            return Err(parse_error(row, "ranking does not start with the primary stage"));
        }
        out.push(RankedPrediction64 {
            key: ElementKey::new(&rec[0], doy),
            ranking,
            weights,
            metaclass,
        });
    }
    out.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}

pub fn write_displacement_csv<W: Write>(writer: W, report: &DisplacementReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metaclass_index", "metaclass", "support", "mean_displacement"])
        .map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.index.to_string(),
            r.metaclass.clone(),
            r.support.to_string(),
            r.mean_displacement.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<displacement>", e))
}

pub fn write_matches_csv<W: Write>(writer: W, matches: &[ObservationMatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["field_id", "visit_doy", "prediction_doy", "day_gap"])
        .map_err(csv_err)?;
    for m in matches {
        w.write_record([
            m.field_id.clone(),
            m.visit_doy.to_string(),
            m.prediction_doy.to_string(),
            m.day_gap.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<matches>", e))
}

/// File names used by `synth`.
pub const SYNTH_FILES: [&str; 5] = [
    "satellite.csv",
    "weather.csv",
    "ground_truth.csv",
    "true_stages.csv",
    "seasons.csv",
];

pub fn write_synth_dataset(dir: &std::path::Path, data: &SynthDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        std::fs::File::create(&path)
            .map(std::io::BufWriter::new)
            .map_err(|e| Error::io(path, e))
    };
    write_satellite_csv(create(SYNTH_FILES[0])?, &data.satellite)?;
    write_weather_csv(create(SYNTH_FILES[1])?, &data.weather)?;
    write_ground_observations(create(SYNTH_FILES[2])?, &data.observations)?;

    let mut w = csv::Writer::from_writer(create(SYNTH_FILES[3])?);
    w.write_record(["field_id", "doy", "stage"]).map_err(csv_err)?;
    for (field, doy, stage) in data.true_stages() {
        w.write_record([field, doy.to_string(), stage.token().to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(dir.join(SYNTH_FILES[3]), e))?;

    let mut w = csv::Writer::from_writer(create(SYNTH_FILES[4])?);
    w.write_record(["field_id", "sowing", "LD", "S", "F", "BD", "BO", "harvest"])
        .map_err(csv_err)?;
    for s in &data.seasons {
        let mut row = vec![s.field_id.clone()];
        row.extend(s.boundaries.iter().map(u32::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(dir.join(SYNTH_FILES[4]), e))
}
