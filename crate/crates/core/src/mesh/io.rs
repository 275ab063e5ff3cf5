//! Mesh readers and writers: a plain custom text format and legacy ASCII VTK
//! unstructured grids with point-data scalars.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{MeshError, SimplicialMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    LegacyVtk,
    CustomText,
}

impl MeshFormat {
    /// `.vtk` files are VTK, anything else is the custom text format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("vtk") => MeshFormat::LegacyVtk,
            _ => MeshFormat::CustomText,
        }
    }
}

impl FromStr for MeshFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "legacy-vtk-ascii" | "vtk" => Ok(MeshFormat::LegacyVtk),
            "custom-text" | "text" => Ok(MeshFormat::CustomText),
            other => Err(format!("unknown mesh format `{other}`")),
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<SimplicialMesh, MeshError> {
    let text = read(path)?;
    match format {
        MeshFormat::CustomText => parse_custom_text(&text, path),
        MeshFormat::LegacyVtk => parse_vtk(&text, path).map(|(m, _)| m),
    }
}

/// Named `POINT_DATA` scalar arrays.
pub type PointData = Vec<(String, Vec<f64>)>;

/// Reads a VTK file and its `POINT_DATA` scalar arrays.
pub fn load_vtk_with_fields(
    path: &Path,
) -> Result<(SimplicialMesh, PointData), MeshError> {
    parse_vtk(&read(path)?, path)
}

fn read(path: &Path) -> Result<String, MeshError> {
    std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank, non-comment lines paired with their 1-based line number.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_tok<T: FromStr>(path: &Path, line: usize, tok: &str, what: &str) -> Result<T, MeshError> {
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {what} from `{tok}`")))
}

/// Attaches the file location to a validation error; cell errors get the
/// line of the offending cell.
fn locate(path: &Path, err: MeshError, cell_lines: &[usize]) -> MeshError {
    let line = match &err {
        MeshError::InvalidIndex { cell, .. }
        | MeshError::DegenerateCell { cell, .. }
        | MeshError::WrongArity { cell, .. } => cell_lines.get(*cell).copied(),
        _ => None,
    };
    MeshError::Invalid {
        path: path.to_path_buf(),
        line,
        source: Box::new(err),
    }
}

/// Parses the custom format: header `dim nv nc`, `nv` coordinate lines of
/// one to three values, then `nc` lines of `dim + 1` zero-based vertex
/// indices. Blank lines and `#` comments are ignored.
pub fn parse_custom_text(text: &str, path: &Path) -> Result<SimplicialMesh, MeshError> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 {
        return Err(parse_err(path, hl, "header must be `dim nv nc`"));
    }
    let dim: usize = parse_tok(path, hl, h[0], "dimension")?;
    let nv: usize = parse_tok(path, hl, h[1], "vertex count")?;
    let nc: usize = parse_tok(path, hl, h[2], "cell count")?;
    if !(1..=3).contains(&dim) {
        return Err(parse_err(path, hl, format!("dimension {dim} is not 1, 2 or 3")));
    }
    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("missing coordinates of vertex {k}")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.is_empty() || toks.len() > 3 {
            return Err(parse_err(path, ln, "expected one to three coordinates"));
        }
        let mut p = [0.0; 3];
        for (x, t) in p.iter_mut().zip(&toks) {
            *x = parse_tok(path, ln, t, "coordinate")?;
        }
        vertices.push(p);
    }
    let mut cells = Vec::with_capacity(nc * (dim + 1));
    let mut cell_lines = Vec::with_capacity(nc);
    for k in 0..nc {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("missing cell {k}")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != dim + 1 {
            return Err(parse_err(
                path,
                ln,
                format!("cell has {} indices, expected {}", toks.len(), dim + 1),
            ));
        }
        for t in toks {
            cells.push(parse_tok(path, ln, t, "vertex index")?);
        }
        cell_lines.push(ln);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(path, ln, "unexpected trailing content"));
    }
    SimplicialMesh::from_flat(dim, vertices, cells, None).map_err(|e| locate(path, e, &cell_lines))
}

pub fn write_custom_text(mesh: &SimplicialMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", mesh.dim(), mesh.num_vertices(), mesh.num_cells());
    for p in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    for cell in mesh.cells() {
        let idx: Vec<String> = cell.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", idx.join(" "));
    }
    out
}

fn vtk_cell_type(dim: usize) -> u32 {
    match dim {
        1 => 3,
        2 => 5,
        _ => 10,
    }
}

/// Token stream over a VTK file that remembers the line of each token.
struct Tokens<'a> {
    toks: Vec<(usize, &'a str)>,
    pos: usize,
    path: PathBuf,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), MeshError> {
        let t = self.toks.get(self.pos).copied().ok_or_else(|| {
            let line = self.toks.last().map_or(1, |t| t.0);
            parse_err(&self.path, line, format!("unexpected end of file, expected {what}"))
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn parse<T: FromStr>(&mut self, what: &str) -> Result<T, MeshError> {
        let (ln, t) = self.next(what)?;
        parse_tok(&self.path, ln, t, what)
    }

    fn expect(&mut self, keyword: &str) -> Result<usize, MeshError> {
        let (ln, t) = self.next(keyword)?;
        if t.eq_ignore_ascii_case(keyword) {
            Ok(ln)
        } else {
            Err(parse_err(&self.path, ln, format!("expected `{keyword}`, found `{t}`")))
        }
    }
}

fn parse_vtk(
    text: &str,
    path: &Path,
) -> Result<(SimplicialMesh, PointData), MeshError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < 4 || !lines[0].starts_with("# vtk DataFile") {
        return Err(parse_err(path, 1, "missing `# vtk DataFile` header"));
    }
    if !lines[2].trim().eq_ignore_ascii_case("ASCII") {
        return Err(parse_err(path, 3, "only ASCII legacy VTK is supported"));
    }
    let toks = lines
        .iter()
        .enumerate()
        .skip(3)
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
        .collect();
    let mut t = Tokens {
        toks,
        pos: 0,
        path: path.to_path_buf(),
    };
    t.expect("DATASET")?;
    let (ln, kind) = t.next("dataset type")?;
    if !kind.eq_ignore_ascii_case("UNSTRUCTURED_GRID") {
        return Err(parse_err(path, ln, format!("unsupported dataset `{kind}`")));
    }
    t.expect("POINTS")?;
    let nv: usize = t.parse("point count")?;
    t.next("point data type")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        vertices.push([t.parse("coordinate")?, t.parse("coordinate")?, t.parse("coordinate")?]);
    }
    t.expect("CELLS")?;
    let nc: usize = t.parse("cell count")?;
    let _size: usize = t.parse("cell list size")?;
    let mut raw_cells = Vec::with_capacity(nc);
    let mut cell_lines = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, _) = t.toks.get(t.pos).copied().unwrap_or((0, ""));
        let n: usize = t.parse("cell vertex count")?;
        let mut cell = Vec::with_capacity(n);
        for _ in 0..n {
            cell.push(t.parse::<usize>("vertex index")?);
        }
        raw_cells.push(cell);
        cell_lines.push(ln);
    }
    t.expect("CELL_TYPES")?;
    let ntypes: usize = t.parse("cell type count")?;
    if ntypes != nc {
        return Err(parse_err(path, t.toks[t.pos - 1].0, "CELL_TYPES count differs from CELLS"));
    }
    let mut dim = None;
    for _ in 0..nc {
        let (ln, tok) = t.next("cell type")?;
        let d = match tok {
            "3" => 1,
            "5" => 2,
            "10" => 3,
            other => return Err(parse_err(path, ln, format!("unsupported cell type {other}"))),
        };
        if *dim.get_or_insert(d) != d {
            return Err(parse_err(path, ln, "mixed cell types are not supported"));
        }
    }
    let dim = dim.ok_or_else(|| parse_err(path, 1, "mesh has no cells"))?;
    let mut fields = Vec::new();
    if t.pos < t.toks.len() {
        t.expect("POINT_DATA")?;
        let n: usize = t.parse("point data count")?;
        if n != nv {
            return Err(parse_err(path, t.toks[t.pos - 1].0, "POINT_DATA count differs from POINTS"));
        }
        while t.pos < t.toks.len() {
            let ln = t.expect("SCALARS")?;
            let name = t.next("array name")?.1.to_string();
            t.next("array data type")?;
            // Optional component count before LOOKUP_TABLE.
            if let Some((_, tok)) = t.toks.get(t.pos) {
                if !tok.eq_ignore_ascii_case("LOOKUP_TABLE") {
                    let comps: usize = t.parse("component count")?;
                    if comps != 1 {
                        return Err(parse_err(path, ln, "only single-component scalars are supported"));
                    }
                }
            }
            t.expect("LOOKUP_TABLE")?;
            t.next("lookup table name")?;
            let mut values = Vec::with_capacity(nv);
            for _ in 0..nv {
                values.push(t.parse::<f64>("scalar value")?);
            }
            fields.push((name, values));
        }
    }
    let mesh = SimplicialMesh::new(dim, vertices, raw_cells, None)
        .map_err(|e| locate(path, e, &cell_lines))?;
    Ok((mesh, fields))
}

/// Legacy ASCII VTK text of `mesh` with the given point-data scalars.
/// Coordinates use the shortest representation that reads back exactly.
pub fn write_vtk(mesh: &SimplicialMesh, fields: &[(&str, &[f64])]) -> String {
    let npc = mesh.dim() + 1;
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\nactivation\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.num_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    let _ = writeln!(out, "CELLS {} {}", mesh.num_cells(), mesh.num_cells() * (npc + 1));
    for cell in mesh.cells() {
        let idx: Vec<String> = cell.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{npc} {}", idx.join(" "));
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.num_cells());
    let ty = vtk_cell_type(mesh.dim());
    for _ in 0..mesh.num_cells() {
        let _ = writeln!(out, "{ty}");
    }
    if !fields.is_empty() {
        let _ = writeln!(out, "POINT_DATA {}", mesh.num_vertices());
        for (name, values) in fields {
            let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in values.iter() {
                let _ = writeln!(out, "{v}");
            }
        }
    }
    out
}

pub fn save(path: &Path, contents: &str) -> Result<(), MeshError> {
    std::fs::write(path, contents).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}
