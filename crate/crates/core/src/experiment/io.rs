//! OFF meshes and point cloud files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::{Point3, PointCloud, TriangleMesh};

#[derive(Debug, Error)]
pub enum OffError {
    #[error("line {line}: expected OFF header, found {found:?}")]
    Header { line: usize, found: String },
    #[error("line {line}: bad element counts {found:?}")]
    Counts { line: usize, found: String },
    #[error("line {line}: bad vertex {found:?}")]
    Vertex { line: usize, found: String },
    #[error("line {line}: bad face {found:?}")]
    Face { line: usize, found: String },
    #[error("line {line}: vertex index {index} out of range for {count} vertices")]
    Index { line: usize, index: usize, count: usize },
    #[error("unexpected end of file after line {line}: {missing}")]
    Truncated { line: usize, missing: &'static str },
    #[error("mesh has no triangles with positive area")]
    Degenerate,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CloudIoError {
    #[error("line {line}: expected three finite coordinates, found {found:?}")]
    Parse { line: usize, found: String },
    #[error("unsupported cloud format {0:?} (expected xyz or ply)")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Meaningful lines of an OFF file with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_numbers<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    s.split_whitespace().map(|t| t.parse().ok()).collect()
}

/// Parses an OFF mesh. Polygons with more than three vertices are fan
/// triangulated. The counts may share the header line (`OFF490 518 0`).
pub fn parse_off(text: &str) -> Result<TriangleMesh, OffError> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(OffError::Truncated {
        line: 0,
        missing: "header",
    })?;
    let rest = header.strip_prefix("OFF").ok_or_else(|| OffError::Header {
        line: hline,
        found: header.to_string(),
    })?;
    let (cline, counts) = if rest.trim().is_empty() {
        lines.next().ok_or(OffError::Truncated {
            line: hline,
            missing: "element counts",
        })?
    } else {
        (hline, rest.trim())
    };
    let counts: Vec<usize> = parse_numbers(counts).filter(|c: &Vec<usize>| c.len() >= 2).ok_or_else(|| OffError::Counts {
        line: cline,
        found: counts.to_string(),
    })?;
    let (nv, nf) = (counts[0], counts[1]);
    let mut last = cline;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or(OffError::Truncated { line: last, missing: "vertices" })?;
        last = line;
        let v: Vec<f64> = parse_numbers(l)
            .filter(|v: &Vec<f64>| v.len() >= 3 && v[..3].iter().all(|x| x.is_finite()))
            .ok_or_else(|| OffError::Vertex {
                line,
                found: l.to_string(),
            })?;
        vertices.push(Point3::new(v[0], v[1], v[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines.next().ok_or(OffError::Truncated { line: last, missing: "faces" })?;
        last = line;
        let bad = || OffError::Face {
            line,
            found: l.to_string(),
        };
        let f: Vec<usize> = parse_numbers(l).ok_or_else(bad)?;
        let k = *f.first().ok_or_else(bad)?;
        if k < 3 || f.len() < k + 1 {
            return Err(bad());
        }
        let idx = &f[1..=k];
        if let Some(&index) = idx.iter().find(|&&i| i >= nv) {
            return Err(OffError::Index { line, index, count: nv });
        }
        for j in 1..k - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    let mesh = TriangleMesh::from_indexed(&vertices, &faces);
    if mesh.is_empty() {
        return Err(OffError::Degenerate);
    }
    Ok(mesh)
}

pub fn load_off(path: impl AsRef<Path>) -> Result<TriangleMesh, OffError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_off(&text)
}

/// One `x y z` line per point.
pub fn write_xyz<W: Write>(cloud: &PointCloud, mut w: W) -> std::io::Result<()> {
    for p in cloud.iter() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    w.flush()
}

/// ASCII PLY with vertices only.
pub fn write_ply<W: Write>(cloud: &PointCloud, mut w: W) -> std::io::Result<()> {
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z\nend_header")?;
    write_xyz(cloud, w)
}

/// Reads whitespace separated `x y z` rows, ignoring blank lines, `#`
/// comments and any columns after the third.
pub fn read_xyz<R: BufRead>(r: R) -> Result<PointCloud, CloudIoError> {
    let mut points = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let l = line.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let v: Option<Vec<f64>> = l.split_whitespace().take(3).map(|t| t.parse().ok()).collect();
        match v {
            Some(v) if v.len() == 3 && v.iter().all(|x| x.is_finite()) => points.push(Point3::new(v[0], v[1], v[2])),
            _ => {
                return Err(CloudIoError::Parse {
                    line: i + 1,
                    found: l.to_string(),
                })
            }
        }
    }
    Ok(PointCloud::new(points))
}

pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointCloud, CloudIoError> {
    read_xyz(BufReader::new(File::open(path)?))
}

/// Writes `cloud` as xyz or ply, chosen by the file extension.
pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), CloudIoError> {
    let path = path.as_ref();
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "xyz" | "txt" => Ok(write_xyz(cloud, BufWriter::new(File::create(path)?))?),
        "ply" => Ok(write_ply(cloud, BufWriter::new(File::create(path)?))?),
        _ => Err(CloudIoError::Format(ext)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA: &str = "OFF\n# tetrahedron\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

    #[test]
    fn parses_tetrahedron_and_quads() {
        let m = parse_off(TETRA).unwrap();
        assert_eq!(m.len(), 4);
        assert!((m.area() - (1.5 + 3f64.sqrt() / 2.0)).abs() < 1e-12);
        let quad = parse_off("OFF4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").unwrap();
        assert_eq!(quad.len(), 2);
        assert!((quad.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_cube_quads_become_twelve_triangles() {
        let cube = "OFF\n8 6 12\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n\
                    4 0 3 2 1\n4 4 5 6 7\n4 0 1 5 4\n4 1 2 6 5\n4 2 3 7 6\n4 3 0 4 7\n";
        let m = parse_off(cube).unwrap();
        assert_eq!(m.len(), 12);
        assert!((m.area() - 6.0).abs() < 1e-12);
        assert!(matches!(parse_off("OFX\n8 6 12\n"), Err(OffError::Header { line: 1, .. })));
        let bad = cube.replace("4 3 0 4 7", "4 3 0 4 99");
        assert!(matches!(parse_off(&bad), Err(OffError::Index { line: 16, index: 99, count: 8 })));
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(parse_off("PLY\n"), Err(OffError::Header { line: 1, .. })));
        assert!(matches!(parse_off("OFF\nfour 4 0\n"), Err(OffError::Counts { line: 2, .. })));
        assert!(matches!(parse_off("OFF\n1 1 0\n0 0 x\n"), Err(OffError::Vertex { line: 3, .. })));
        assert!(matches!(
            parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"),
            Err(OffError::Index { line: 6, index: 7, count: 3 })
        ));
        assert!(matches!(parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n2 0 1\n"), Err(OffError::Face { line: 6, .. })));
        assert!(matches!(parse_off("OFF\n3 1 0\n0 0 0\n"), Err(OffError::Truncated { line: 3, .. })));
        assert!(matches!(parse_off(""), Err(OffError::Truncated { .. })));
        assert!(matches!(
            parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n2 0 0\n3 0 1 2\n"),
            Err(OffError::Degenerate)
        ));
    }

    #[test]
    fn xyz_round_trip_and_ply() {
        let c = PointCloud::new(vec![Point3::new(0.1, -2.5, 3.0), Point3::new(1e-17, 0.3333333333333333, -0.0)]);
        let mut buf = Vec::new();
        write_xyz(&c, &mut buf).unwrap();
        assert_eq!(read_xyz(&buf[..]).unwrap(), c);
        let mut ply = Vec::new();
        write_ply(&c, &mut ply).unwrap();
        let text = String::from_utf8(ply).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 2\n"));
        assert!(matches!(read_xyz(&b"1 2\n"[..]), Err(CloudIoError::Parse { line: 1, .. })));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.xyz");
        save_cloud(&c, &p).unwrap();
        assert_eq!(load_xyz(&p).unwrap(), c);
        assert!(matches!(save_cloud(&c, dir.path().join("c.obj")), Err(CloudIoError::Format(_))));
        let empty = PointCloud::new(vec![]);
        save_cloud(&empty, dir.path().join("e.ply")).unwrap();
        save_cloud(&empty, dir.path().join("e.xyz")).unwrap();
        assert!(load_xyz(dir.path().join("e.xyz")).unwrap().is_empty());
        let text = std::fs::read_to_string(dir.path().join("e.ply")).unwrap();
        assert!(text.contains("element vertex 0\n") && text.ends_with("end_header\n"));
    }
}
