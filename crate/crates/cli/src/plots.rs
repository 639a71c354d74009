//! Raster figures for the `report` command. Each PNG is accompanied by a CSV
//! holding the plotted values, since the images carry no text.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use cotton_phenology::features::{SatelliteRecord, Vi};
use cotton_phenology::metrics::PrincipalConfusion;
use cotton_phenology::{Error, RankedPrediction64, Result, Stage};

const WIDTH: u32 = 800;
const HEIGHT: u32 = 400;
const MARGIN: u32 = 40;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([0, 0, 0]);

/// One colour per stage, RE through BO.
const STAGE_COLOURS: [Rgb<u8>; 6] = [
    Rgb([140, 86, 75]),
    Rgb([44, 160, 44]),
    Rgb([188, 189, 34]),
    Rgb([227, 119, 194]),
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
];

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new() -> Self {
        let mut c = Canvas {
            img: RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND),
        };
        c.line((MARGIN, HEIGHT - MARGIN), (WIDTH - MARGIN, HEIGHT - MARGIN), AXIS);
        c.line((MARGIN, MARGIN), (MARGIN, HEIGHT - MARGIN), AXIS);
        c
    }

    /// Maps a point from data units to pixel coordinates.
    fn to_pixel(x: f64, y: f64, x_range: (f64, f64), y_range: (f64, f64)) -> (u32, u32) {
        let span = |r: (f64, f64)| if r.1 > r.0 { r.1 - r.0 } else { 1.0 };
        let fx = ((x - x_range.0) / span(x_range)).clamp(0.0, 1.0);
        let fy = ((y - y_range.0) / span(y_range)).clamp(0.0, 1.0);
        let px = MARGIN as f64 + fx * f64::from(WIDTH - 2 * MARGIN);
        let py = f64::from(HEIGHT - MARGIN) - fy * f64::from(HEIGHT - 2 * MARGIN);
        (px.round() as u32, py.round() as u32)
    }

    fn line(&mut self, from: (u32, u32), to: (u32, u32), colour: Rgb<u8>) {
        let (mut x0, mut y0) = (i64::from(from.0), i64::from(from.1));
        let (x1, y1) = (i64::from(to.0), i64::from(to.1));
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            if (0..i64::from(WIDTH)).contains(&x0) && (0..i64::from(HEIGHT)).contains(&y0) {
                self.img.put_pixel(x0 as u32, y0 as u32, colour);
            }
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    fn polyline(&mut self, points: &[(f64, f64)], x_range: (f64, f64), y_range: (f64, f64), colour: Rgb<u8>) {
        let px: Vec<(u32, u32)> = points
            .iter()
            .map(|&(x, y)| Self::to_pixel(x, y, x_range, y_range))
            .collect();
        for w in px.windows(2) {
            self.line(w[0], w[1], colour);
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        self.img
            .save(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::Validation(format!("csv write: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// NDVI over the season, one curve per field.
pub fn vi_curves(dir: &Path, records: &[SatelliteRecord<f64>]) -> Result<Vec<PathBuf>> {
    let mut curves: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        if let Some(v) = Vi::Ndvi.compute(&r.bands) {
            curves
                .entry(r.field_id.as_str())
                .or_default()
                .push((f64::from(r.doy), v));
        }
    }
    for points in curves.values_mut() {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let all = || curves.values().flatten();
    let x_range = range(all().map(|p| p.0));
    let y_range = range(all().map(|p| p.1));
    let mut canvas = Canvas::new();
    for (i, points) in curves.values().enumerate() {
        canvas.polyline(points, x_range, y_range, STAGE_COLOURS[i % STAGE_COLOURS.len()]);
    }
    let png = dir.join("vi_curves.png");
    let csv = dir.join("vi_curves.csv");
    canvas.save(&png)?;
    write_rows(
        &csv,
        &["field_id", "doy", "ndvi"],
        curves.iter().flat_map(|(f, pts)| {
            pts.iter()
                .map(move |(d, v)| vec![f.to_string(), d.to_string(), v.to_string()])
        }),
    )?;
    Ok(vec![png, csv])
}

/// Stage memberships over time. The PNG shows the first field; the CSV
/// covers every field.
pub fn membership_timelines(dir: &Path, predictions: &[RankedPrediction64]) -> Result<Vec<PathBuf>> {
    let stage_weight =
        |p: &RankedPrediction64, s: Stage| p.ranking.iter().position(|&r| r == s).map_or(0.0, |i| p.weights[i]);
    let mut canvas = Canvas::new();
    if let Some(first) = predictions.first() {
        let field: Vec<&RankedPrediction64> = predictions
            .iter()
            .filter(|p| p.key.field_id == first.key.field_id)
            .collect();
        let x_range = range(field.iter().map(|p| f64::from(p.key.doy)));
        for (s, colour) in Stage::ALL.iter().zip(STAGE_COLOURS) {
            let points: Vec<(f64, f64)> = field
                .iter()
                .map(|p| (f64::from(p.key.doy), stage_weight(p, *s)))
                .collect();
            canvas.polyline(&points, x_range, (0.0, 1.0), colour);
        }
    }
    let png = dir.join("membership_timeline.png");
    let csv = dir.join("membership_timeline.csv");
    canvas.save(&png)?;
    let mut header = vec!["field_id", "doy"];
    header.extend(Stage::ALL.iter().map(|s| s.token()));
    write_rows(
        &csv,
        &header,
        predictions.iter().map(|p| {
            let mut row = vec![p.key.field_id.clone(), p.key.doy.to_string()];
            row.extend(Stage::ALL.iter().map(|&s| stage_weight(p, s).to_string()));
            row
        }),
    )?;
    Ok(vec![png, csv])
}

/// Row-normalized principal-stage confusion; darker cells hold a larger
/// share of the row.
pub fn confusion_heatmap(dir: &Path, confusion: &PrincipalConfusion) -> Result<Vec<PathBuf>> {
    const CELL: u32 = 60;
    let mut img = RgbImage::from_pixel(CELL * 6, CELL * 6, BACKGROUND);
    for (i, row) in confusion.counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (j, &c) in row.iter().enumerate() {
            let share = if total == 0 { 0.0 } else { c as f64 / total as f64 };
            let shade = (255.0 * (1.0 - share)).round() as u8;
            for y in 0..CELL - 1 {
                for x in 0..CELL - 1 {
                    img.put_pixel(j as u32 * CELL + x, i as u32 * CELL + y, Rgb([shade, shade, 255]));
                }
            }
        }
    }
    let png = dir.join("confusion.png");
    let csv = dir.join("confusion.csv");
    img.save(&png)
        .map_err(|e| Error::io(&png, std::io::Error::other(e.to_string())))?;
    let mut header = vec!["truth"];
    header.extend(Stage::ALL.iter().map(|s| s.token()));
    write_rows(
        &csv,
        &header,
        confusion.counts.iter().zip(Stage::ALL).map(|(row, s)| {
            let mut r = vec![s.token().to_string()];
            r.extend(row.iter().map(u64::to_string));
            r
        }),
    )?;
    Ok(vec![png, csv])
}
