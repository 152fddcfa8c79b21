use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mdp::GridLayout;

const CELL: usize = 24;
const LOW: [f64; 3] = [68.0, 1.0, 84.0];
const HIGH: [f64; 3] = [253.0, 231.0, 37.0];

fn color(t: f64) -> String {
    let c: Vec<u8> = (0..3).map(|i| (LOW[i] + t * (HIGH[i] - LOW[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Writes `<stem>.csv` with `x,y,value` rows and `<stem>.svg`.
///
/// Colours follow a linear scale between the smallest and largest value;
/// walls are left blank. Returns the two paths.
pub fn emit_heatmap(values: &[f64], layout: &GridLayout, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    if values.len() != layout.coords.len() {
        return Err(Error::Shape(format!(
            "{} values for a map with {} states",
            values.len(),
            layout.coords.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("heatmap values must be finite".into()));
    }
    let csv_path = stem.with_extension("csv");
    let svg_path = stem.with_extension("svg");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["x", "y", "value"])?;
    for (&(row, col), v) in layout.coords.iter().zip(values) {
        w.write_record([col.to_string(), row.to_string(), v.to_string()])?;
    }
    w.flush()?;

    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (width, height) = (layout.width * CELL, layout.height * CELL);
    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    )
    .expect("writing to a string");
    for (&(row, col), &v) in layout.coords.iter().zip(values) {
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\"><title>{v}</title></rect>",
            col * CELL,
            row * CELL,
            color(t)
        )
        .expect("writing to a string");
    }
    svg.push_str("</svg>\n");
    std::fs::write(&svg_path, svg)?;
    Ok((csv_path, svg_path))
}

/// Reads back the `x,y,value` CSV in state order.
pub fn read_heatmap_csv(path: &Path, layout: &GridLayout) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = vec![f64::NAN; layout.coords.len()];
    for record in r.deserialize::<(usize, usize, f64)>() {
        let (x, y, v) = record?;
        let s = layout
            .state_at(y, x)
            .ok_or_else(|| Error::Shape(format!("no state at column {x}, row {y}")))?;
        out[s] = v;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::Shape("heatmap CSV misses states".into()));
    }
    Ok(out)
}
