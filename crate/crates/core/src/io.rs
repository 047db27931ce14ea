//! Plain CSV tables with a `#` provenance line and unit-tagged headers.

use std::path::Path;

use crate::design::ResolutionPoint;
use crate::error::{Error, Result};
use crate::kinetics::BindingPoint;
use crate::spectral::{PixelGrid, Sensorgram, SpectrumFrame};

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// A table being assembled for output.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            comments: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(mut self, line: impl Into<String>) -> Self {
        self.comments.push(line.into());
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// A parsed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn parse_table(text: &str, origin: &str) -> Result<NumericTable> {
    let mut comments = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match &header {
            None => header = Some(cells.iter().map(|s| s.to_string()).collect()),
            Some(h) => {
                if cells.len() != h.len() {
                    return Err(Error::data(format!(
                        "{origin}:{}: expected {} columns, found {}",
                        lineno + 1,
                        h.len(),
                        cells.len()
                    )));
                }
                let row = cells
                    .iter()
                    .map(|c| {
                        c.parse::<f64>()
                            .map_err(|_| Error::data(format!("{origin}:{}: `{c}` is not a number", lineno + 1)))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(row);
            }
        }
    }
    let header = header.ok_or_else(|| Error::data(format!("{origin}: no header row")))?;
    Ok(NumericTable { comments, header, rows })
}

pub fn read_table(path: &Path) -> Result<NumericTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, &path.display().to_string())
}

fn expect_header(t: &NumericTable, expected: &[&str], origin: &str) -> Result<()> {
    if t.header.len() != expected.len() || t.header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::data(format!(
            "{origin}: header `{}` does not match expected `{}`",
            t.header.join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

pub const SENSORGRAM_HEADER: [&str; 2] = ["time_s", "shift_nm"];

pub fn sensorgram_table(sg: &Sensorgram) -> CsvTable {
    let mut t = CsvTable::new(SENSORGRAM_HEADER);
    for s in sg.samples() {
        t.push(vec![fmt_f64(s.time), fmt_f64(s.shift)]);
    }
    t
}

pub fn sensorgram_from_table(t: &NumericTable, origin: &str) -> Result<Sensorgram> {
    expect_header(t, &SENSORGRAM_HEADER, origin)?;
    Sensorgram::from_pairs(t.rows.iter().map(|r| (r[0], r[1])))
        .map_err(|e| Error::data(format!("{origin}: {e}")))
}

pub const FRAME_HEADER: [&str; 2] = ["wavelength_nm", "counts"];
const RAW_MARK: &str = "dark_subtracted=false";
const SUB_MARK: &str = "dark_subtracted=true";

fn dark_mark(dark_subtracted: bool) -> &'static str {
    if dark_subtracted {
        SUB_MARK
    } else {
        RAW_MARK
    }
}

fn read_dark_mark(comments: &[String]) -> bool {
    // Frames without a mark are taken to be raw detector output.
    !comments.iter().any(|c| c.contains(RAW_MARK)) && comments.iter().any(|c| c.contains(SUB_MARK))
}

fn check_wavelengths(values: impl Iterator<Item = f64>, grid: &PixelGrid, origin: &str) -> Result<()> {
    let mut n = 0;
    for (i, l) in values.enumerate() {
        if i >= grid.pixel_count || (l - grid.wavelength(i)).abs() > 1e-6 * grid.lambda_step.abs().max(1.0) {
            return Err(Error::data(format!(
                "{origin}: wavelength column does not match the configured pixel grid at pixel {i}"
            )));
        }
        n += 1;
    }
    if n != grid.pixel_count {
        return Err(Error::data(format!(
            "{origin}: {n} pixels, grid has {}",
            grid.pixel_count
        )));
    }
    Ok(())
}

pub fn frame_table(frame: &SpectrumFrame, grid: &PixelGrid) -> CsvTable {
    let mut t = CsvTable::new(FRAME_HEADER).comment(dark_mark(frame.dark_subtracted));
    for (l, c) in grid.wavelengths().zip(&frame.counts) {
        t.push(vec![fmt_f64(l), fmt_f64(*c)]);
    }
    t
}

pub fn frame_from_table(t: &NumericTable, grid: &PixelGrid, origin: &str) -> Result<SpectrumFrame> {
    expect_header(t, &FRAME_HEADER, origin)?;
    check_wavelengths(t.rows.iter().map(|r| r[0]), grid, origin)?;
    Ok(SpectrumFrame::new(
        t.rows.iter().map(|r| r[1]).collect(),
        read_dark_mark(&t.comments),
    ))
}

/// Frames as rows: `time_s` then one column per pixel wavelength.
pub fn frame_stack_table(frames: &[SpectrumFrame], grid: &PixelGrid) -> CsvTable {
    let dark = frames.first().map(|f| f.dark_subtracted).unwrap_or(true);
    let header = std::iter::once("time_s".to_string()).chain(grid.wavelengths().map(fmt_f64));
    let mut t = CsvTable::new(header).comment(dark_mark(dark));
    for (i, f) in frames.iter().enumerate() {
        let mut row = Vec::with_capacity(f.counts.len() + 1);
        row.push(fmt_f64(f.timestamp.unwrap_or(i as f64)));
        row.extend(f.counts.iter().map(|c| fmt_f64(*c)));
        t.push(row);
    }
    t
}

pub fn is_frame_stack(t: &NumericTable) -> bool {
    t.header.first().map(String::as_str) == Some("time_s") && t.header.len() > 2
}

pub fn frame_stack_from_table(t: &NumericTable, grid: &PixelGrid, origin: &str) -> Result<Vec<SpectrumFrame>> {
    if !is_frame_stack(t) {
        return Err(Error::data(format!("{origin}: not a frame stack")));
    }
    let wl = t.header[1..]
        .iter()
        .map(|h| {
            h.parse::<f64>()
                .map_err(|_| Error::data(format!("{origin}: column `{h}` is not a wavelength")))
        })
        .collect::<Result<Vec<f64>>>()?;
    check_wavelengths(wl.into_iter(), grid, origin)?;
    let dark = read_dark_mark(&t.comments);
    Ok(t.rows
        .iter()
        .map(|r| SpectrumFrame::new(r[1..].to_vec(), dark).with_timestamp(r[0]))
        .collect())
}

/// Concentration units accepted in binding-curve headers, with their
/// factor to g/mL.
const CONCENTRATION_UNITS: [(&str, f64); 4] = [
    ("concentration_g_per_mL", 1.0),
    ("concentration_mg_per_mL", 1e-3),
    ("concentration_ug_per_mL", 1e-6),
    ("concentration_ng_per_mL", 1e-9),
];

pub const BINDING_HEADER: [&str; 2] = ["concentration_g_per_mL", "response_nm"];

/// Binding points with concentrations converted to g/mL.
pub fn binding_from_table(t: &NumericTable, origin: &str) -> Result<Vec<BindingPoint>> {
    if t.header.len() != 2 || t.header[1] != "response_nm" {
        return Err(Error::data(format!(
            "{origin}: expected header `concentration_<unit>,response_nm`, found `{}`",
            t.header.join(",")
        )));
    }
    let factor = CONCENTRATION_UNITS
        .iter()
        .find(|(name, _)| *name == t.header[0])
        .map(|(_, f)| *f)
        .ok_or_else(|| {
            Error::data(format!(
                "{origin}: unknown concentration unit `{}`; use one of g_per_mL, mg_per_mL, ug_per_mL, ng_per_mL",
                t.header[0]
            ))
        })?;
    Ok(t.rows
        .iter()
        .map(|r| BindingPoint::new(r[0] * factor, r[1]))
        .collect())
}

pub fn binding_table(points: &[BindingPoint]) -> CsvTable {
    let mut t = CsvTable::new(BINDING_HEADER);
    for p in points {
        t.push(vec![fmt_f64(p.concentration), fmt_f64(p.response)]);
    }
    t
}

pub const RESOLUTION_INPUT_HEADER: [&str; 2] = ["N", "r_RIU"];

pub fn resolution_from_table(t: &NumericTable, origin: &str) -> Result<Vec<ResolutionPoint>> {
    expect_header(t, &RESOLUTION_INPUT_HEADER, origin)?;
    t.rows
        .iter()
        .map(|r| {
            if !(r[0] >= 1.0 && r[0].fract() == 0.0 && r[0] <= u64::MAX as f64) {
                return Err(Error::data(format!("{origin}: N = {} is not a positive integer", r[0])));
            }
            Ok(ResolutionPoint { n: r[0] as u64, r: r[1] })
        })
        .collect()
}
