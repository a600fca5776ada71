//! ASCII PLY export/import for pointclouds and grid surfaces.
//!
//! Coordinates are written with nine significant digits (`{:.8e}`), which
//! round-trips any `f32` value exactly and keeps files viewer-friendly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{PointCloud, SurfaceGrid};

fn write_header(w: &mut impl Write, n_vertices: usize, n_faces: usize, path: &Path) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    writeln!(w, "ply").map_err(io_err)?;
    writeln!(w, "format ascii 1.0").map_err(io_err)?;
    writeln!(w, "element vertex {n_vertices}").map_err(io_err)?;
    writeln!(w, "property float x").map_err(io_err)?;
    writeln!(w, "property float y").map_err(io_err)?;
    writeln!(w, "property float z").map_err(io_err)?;
    if n_faces > 0 {
        writeln!(w, "element face {n_faces}").map_err(io_err)?;
        writeln!(w, "property list uchar int vertex_indices").map_err(io_err)?;
    }
    writeln!(w, "end_header").map_err(io_err)?;
    Ok(())
}

fn write_vertices(w: &mut impl Write, points: &[[f64; 3]], path: &Path) -> Result<()> {
    for p in points {
        writeln!(w, "{:.8e} {:.8e} {:.8e}", p[0], p[1], p[2]).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Writes a vertex-only ASCII PLY.
pub fn write_pointcloud_ply(path: impl AsRef<Path>, pc: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_header(&mut w, pc.len(), 0, path)?;
    write_vertices(&mut w, &pc.points, path)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the fitted surface as a triangle mesh: grid nodes as vertices
/// (row-major) and two triangles per grid cell.
pub fn write_surface_ply(path: impl AsRef<Path>, grid: &SurfaceGrid) -> Result<()> {
    let path = path.as_ref();
    let (gx, gy) = grid.dims();
    let n_faces = 2 * (gx - 1) * (gy - 1);
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_header(&mut w, gx * gy, n_faces, path)?;
    write_vertices(&mut w, &grid.to_pointcloud().points, path)?;
    for iy in 0..gy - 1 {
        for ix in 0..gx - 1 {
            let a = iy * gx + ix;
            let b = a + 1;
            let c = a + gx + 1;
            let d = a + gx;
            writeln!(w, "3 {a} {b} {c}").map_err(|e| Error::io(path, e))?;
            writeln!(w, "3 {a} {c} {d}").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn malformed(detail: impl Into<String>) -> Error {
    Error::MalformedFile {
        format: "PLY",
        detail: detail.into(),
    }
}

/// Reads the vertex positions of an ASCII PLY (faces, if any, are ignored).
/// Requires the first three vertex properties to be x, y, z.
pub fn read_ply_vertices(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut lines = reader.lines();

    let mut next_line = |what: &str| -> Result<String> {
        match lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::io(path, e)),
            None => Err(malformed(format!("file ended before {what}"))),
        }
    };

    if next_line("magic")?.trim() != "ply" {
        return Err(malformed("missing 'ply' magic line"));
    }
    if next_line("format")?.trim() != "format ascii 1.0" {
        return Err(malformed("only 'format ascii 1.0' is supported"));
    }

    let mut n_vertices: Option<usize> = None;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    loop {
        let line = next_line("end_header")?;
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        if line.starts_with("comment") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("element ") {
            let mut it = rest.split_whitespace();
            let name = it.next().ok_or_else(|| malformed("bare 'element' line"))?;
            let count: usize = it
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| malformed(format!("bad element count in '{line}'")))?;
            in_vertex_element = name == "vertex";
            if in_vertex_element {
                if n_vertices.is_some() {
                    return Err(malformed("duplicate vertex element"));
                }
                n_vertices = Some(count);
            }
        } else if let Some(rest) = line.strip_prefix("property ") {
            if in_vertex_element {
                let name = rest
                    .split_whitespace()
                    .last()
                    .ok_or_else(|| malformed("bare 'property' line"))?;
                vertex_props.push(name.to_string());
            }
        }
    }

    let n_vertices = n_vertices.ok_or_else(|| malformed("no vertex element declared"))?;
    if vertex_props.len() < 3 || vertex_props[..3] != ["x", "y", "z"] {
        return Err(malformed(format!(
            "vertex properties must start with x, y, z; got {vertex_props:?}"
        )));
    }

    let mut points = Vec::with_capacity(n_vertices);
    for i in 0..n_vertices {
        let line = next_line("vertex data")?;
        let mut it = line.split_whitespace();
        let mut p = [0.0f64; 3];
        for coord in &mut p {
            *coord = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| malformed(format!("vertex {i}: bad coordinate in '{line}'")))?;
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}
