//! VTU frames and the CSV diagnostics log.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::amr::CellFlag;
use crate::bathymetry::Bathymetry;
use crate::mesh::Triangulation;
use crate::reconstruction::StateField;

pub const CSV_HEADER: &str = "t,mass,max_dev,min_h,active_cells,wall_s";

/// One row of the diagnostics log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub t: f64,
    pub mass: f64,
    pub max_dev: f64,
    pub min_h: f64,
    pub active_cells: usize,
    pub wall_s: f64,
}

impl FrameRow {
    pub fn csv(&self) -> String {
        format!(
            "{:?},{:?},{:?},{:?},{},{:.6}",
            self.t, self.mass, self.max_dev, self.min_h, self.active_cells, self.wall_s
        )
    }

    pub fn parse_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return None;
        }
        Some(FrameRow {
            t: f[0].parse().ok()?,
            mass: f[1].parse().ok()?,
            max_dev: f[2].parse().ok()?,
            min_h: f[3].parse().ok()?,
            active_cells: f[4].parse().ok()?,
            wall_s: f[5].parse().ok()?,
        })
    }
}

pub struct CsvLog {
    out: BufWriter<File>,
}

impl CsvLog {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{CSV_HEADER}")?;
        Ok(CsvLog { out })
    }

    pub fn append(&mut self, row: &FrameRow) -> io::Result<()> {
        writeln!(self.out, "{}", row.csv())?;
        self.out.flush()
    }
}

/// Data of one frame. Optional fields are written as zeros when absent.
pub struct Frame<'a> {
    pub tri: &'a Triangulation,
    pub bathy: &'a Bathymetry,
    pub state: &'a StateField,
    pub levels: &'a [u32],
    pub vertex_error: Option<&'a [f64]>,
    pub cell_error: Option<&'a [f64]>,
    pub flags: Option<&'a [CellFlag]>,
    pub t: f64,
}

fn data_array<T: std::fmt::Display>(
    s: &mut String,
    ty: &str,
    name: &str,
    comps: usize,
    vals: impl Iterator<Item = T>,
) {
    let _ = write!(s, "        <DataArray type=\"{ty}\" Name=\"{name}\"");
    if comps > 1 {
        let _ = write!(s, " NumberOfComponents=\"{comps}\"");
    }
    s.push_str(" format=\"ascii\">\n          ");
    for (i, v) in vals.enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s.push_str("\n        </DataArray>\n");
}

/// ASCII XML unstructured grid.
pub fn format_vtu(f: &Frame) -> String {
    let tri = f.tri;
    let nc = tri.num_cells();
    let mut s = String::with_capacity(200 * nc + 1024);
    s.push_str("<?xml version=\"1.0\"?>\n");
    s.push_str("<VTKFile type=\"UnstructuredGrid\" version=\"0.1\" byte_order=\"LittleEndian\">\n");
    s.push_str("  <UnstructuredGrid>\n");
    let _ = writeln!(s, "    <FieldData>\n      <DataArray type=\"Float64\" Name=\"TIME\" NumberOfTuples=\"1\" format=\"ascii\">{:?}</DataArray>\n    </FieldData>", f.t);
    let _ = writeln!(
        s,
        "    <Piece NumberOfPoints=\"{}\" NumberOfCells=\"{}\">",
        tri.num_vertices(),
        nc
    );

    s.push_str("      <PointData>\n");
    data_array(
        &mut s,
        "Float64",
        "B",
        1,
        f.bathy.vertex_values.iter().map(|x| format!("{x:?}")),
    );
    match f.vertex_error {
        Some(e) => data_array(
            &mut s,
            "Float64",
            "E",
            1,
            e.iter().map(|x| format!("{x:?}")),
        ),
        None => data_array(
            &mut s,
            "Float64",
            "E",
            1,
            (0..tri.num_vertices()).map(|_| "0"),
        ),
    }
    s.push_str("      </PointData>\n");

    s.push_str("      <CellData>\n");
    let h: Vec<f64> = (0..nc)
        .map(|j| f.state.u[j][0] - f.bathy.cell_mean[j])
        .collect();
    data_array(
        &mut s,
        "Float64",
        "w",
        1,
        f.state.u.iter().map(|u| format!("{:?}", u[0])),
    );
    data_array(
        &mut s,
        "Float64",
        "h",
        1,
        h.iter().map(|x| format!("{x:?}")),
    );
    data_array(
        &mut s,
        "Float64",
        "hu",
        1,
        f.state.u.iter().map(|u| format!("{:?}", u[1])),
    );
    data_array(
        &mut s,
        "Float64",
        "hv",
        1,
        f.state.u.iter().map(|u| format!("{:?}", u[2])),
    );
    data_array(
        &mut s,
        "Float64",
        "B",
        1,
        f.bathy.cell_mean.iter().map(|x| format!("{x:?}")),
    );
    data_array(&mut s, "Int32", "level", 1, f.levels.iter());
    match f.cell_error {
        Some(e) => data_array(
            &mut s,
            "Float64",
            "e",
            1,
            e.iter().map(|x| format!("{x:?}")),
        ),
        None => data_array(&mut s, "Float64", "e", 1, (0..nc).map(|_| "0")),
    }
    match f.flags {
        Some(fl) => data_array(&mut s, "Int8", "flag", 1, fl.iter().map(|x| x.code())),
        None => data_array(&mut s, "Int8", "flag", 1, (0..nc).map(|_| 0)),
    }
    s.push_str("      </CellData>\n");

    s.push_str("      <Points>\n");
    data_array(
        &mut s,
        "Float64",
        "Points",
        3,
        tri.vertices
            .iter()
            .map(|v| format!("{:?} {:?} 0", v.x, v.y)),
    );
    s.push_str("      </Points>\n");

    s.push_str("      <Cells>\n");
    data_array(
        &mut s,
        "Int64",
        "connectivity",
        1,
        tri.cells
            .iter()
            .map(|c| format!("{} {} {}", c.vertices[0], c.vertices[1], c.vertices[2])),
    );
    data_array(&mut s, "Int64", "offsets", 1, (1..=nc).map(|i| 3 * i));
    data_array(&mut s, "UInt8", "types", 1, (0..nc).map(|_| 5));
    s.push_str("      </Cells>\n");
    s.push_str("    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n");
    s
}

pub fn write_vtu(path: impl AsRef<Path>, f: &Frame) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(format_vtu(f).as_bytes())?;
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{uniform_mesh, BoundaryTag, Rect, SideTags};

    #[test]
    fn csv_round_trip() {
        let r = FrameRow {
            t: 0.1,
            mass: 2.0 / 3.0,
            max_dev: 1e-15,
            min_h: 0.0,
            active_cells: 12,
            wall_s: 0.5,
        };
        assert_eq!(FrameRow::parse_csv(&r.csv()).unwrap(), r);
        assert!(FrameRow::parse_csv("1,2,3").is_none());
    }

    #[test]
    fn vtu_counts() {
        let t = uniform_mesh(
            &Rect::new(0.0, 1.0, 0.0, 1.0),
            2,
            2,
            &SideTags::all(BoundaryTag::Wall),
        )
        .unwrap();
        let b = Bathymetry::from_function(&t, |x, _| x).unwrap();
        let u = StateField::new(vec![[1.0, 0.0, 0.0]; t.num_cells()], 0);
        let levels = vec![0; t.num_cells()];
        let s = format_vtu(&Frame {
            tri: &t,
            bathy: &b,
            state: &u,
            levels: &levels,
            vertex_error: None,
            cell_error: None,
            flags: None,
            t: 0.0,
        });
        assert!(s.contains("NumberOfPoints=\"9\" NumberOfCells=\"8\""));
        assert_eq!(s.matches("<DataArray").count(), 15);
    }
}
