//! Field export as CSV or legacy-VTK structured points.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fmt_sci;
use crate::evaluation::ResidualReport;
use crate::netcore::Point;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Vtk,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "vtk" => Ok(ExportFormat::Vtk),
            other => Err(Error::InvalidArgument(format!("unknown export format {other:?}"))),
        }
    }
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Vtk => "vtk",
        }
    }
}

/// Named channels on a regular `nx x ny` grid, stored with x varying
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldExport {
    pub nx: usize,
    pub ny: usize,
    pub origin: Point,
    pub spacing: [f64; 2],
    pub points: Vec<Point>,
    pub channels: Vec<(String, Vec<f64>)>,
}

impl FieldExport {
    pub fn new(
        nx: usize,
        ny: usize,
        origin: Point,
        spacing: [f64; 2],
        channels: Vec<(String, Vec<f64>)>,
    ) -> Result<Self> {
        let n = nx * ny;
        if let Some((name, v)) = channels.iter().find(|(_, v)| v.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "channel {name} has {} values for a {nx}x{ny} grid",
                v.len()
            )));
        }
        let mut points = Vec::with_capacity(n);
        for j in 0..ny {
            for i in 0..nx {
                points.push([origin[0] + i as f64 * spacing[0], origin[1] + j as f64 * spacing[1]]);
            }
        }
        Ok(FieldExport {
            nx,
            ny,
            origin,
            spacing,
            points,
            channels,
        })
    }

    /// Reorders a report (x outermost) into export order.
    pub fn from_report(report: &ResidualReport) -> Result<Self> {
        let n = report.n_side;
        let p0 = report.points[0];
        let h = if n > 1 { report.points[1][1] - p0[1] } else { 1.0 };
        let channels = report
            .channels()
            .into_iter()
            .map(|(name, v)| {
                let mut out = Vec::with_capacity(v.len());
                for j in 0..n {
                    for i in 0..n {
                        out.push(v[i * n + j]);
                    }
                }
                (name.to_string(), out)
            })
            .collect();
        Self::new(n, n, p0, [h, h], channels)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y");
        for (name, _) in &self.channels {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (k, p) in self.points.iter().enumerate() {
            s.push_str(&fmt_sci(p[0]));
            s.push(',');
            s.push_str(&fmt_sci(p[1]));
            for (_, v) in &self.channels {
                s.push(',');
                s.push_str(&fmt_sci(v[k]));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_vtk(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0");
        let _ = writeln!(s, "microelast fields");
        let _ = writeln!(s, "ASCII");
        let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
        let _ = writeln!(s, "DIMENSIONS {} {} 1", self.nx, self.ny);
        let _ = writeln!(s, "ORIGIN {} {} 0", fmt_sci(self.origin[0]), fmt_sci(self.origin[1]));
        let _ = writeln!(s, "SPACING {} {} 1", fmt_sci(self.spacing[0]), fmt_sci(self.spacing[1]));
        let _ = writeln!(s, "POINT_DATA {}", self.nx * self.ny);
        for (name, v) in &self.channels {
            let _ = writeln!(s, "SCALARS {name} double 1");
            let _ = writeln!(s, "LOOKUP_TABLE default");
            for row in v.chunks(self.nx.max(1)) {
                let line: Vec<String> = row.iter().map(|&x| fmt_sci(x)).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        s
    }

    pub fn write(&self, path: &Path, format: ExportFormat) -> Result<()> {
        let body = match format {
            ExportFormat::Csv => self.to_csv(),
            ExportFormat::Vtk => self.to_vtk(),
        };
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Header names and rows of a numeric CSV file written by this module.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("CSV row {}: {e}", k + 1)))?;
        if row.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "CSV row {} has {} fields, header has {}",
                k + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
