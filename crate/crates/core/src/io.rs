//! File formats.
//!
//! Binary dataset (`CSF1`), little-endian:
//!
//! ```text
//! "CSF1" | n: u64 | d: u32 | n*d f64 values, row-major
//! ```
//!
//! Binary coreset (`CSW1`): the dataset layout under magic `CSW1`, followed by
//! `m: u64 | m f64 weights`, where `m` must equal `n`.
//!
//! Spread-reduction map (`CSR1`):
//!
//! ```text
//! "CSR1" | n: u64 | d: u32 | r: f64 | g: f64 | cell_side: f64 | grid_seed: u64
//!        | d f64 shift | boxes: u64 | boxes*d i64 cells | boxes*d f64 translations
//!        | n u32 box ids
//! ```
//!
//! CSV datasets hold one point per row; a first row that does not parse as numbers is
//! treated as a header. Coreset CSVs have `d + 1` columns, the last being the weight.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{PointSet, WeightedPointSet};
use crate::quadtree::{CellId, GridConfig};
use crate::spread::SpreadReductionMap;

const DATASET_MAGIC: &[u8; 4] = b"CSF1";
const CORESET_MAGIC: &[u8; 4] = b"CSW1";
const MAP_MAGIC: &[u8; 4] = b"CSR1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    /// `.csv` (any case) is CSV, anything else binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Format> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "binary" | "bin" => Ok(Format::Binary),
            _ => Err(Error::invalid(format!("unknown format `{s}` (expected csv or binary)"))),
        }
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::parse(
                self.path,
                format!(
                    "truncated file: needed {len} bytes for {what} at offset {}, {} left",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| Error::parse(self.path, format!("{what} = {v} does not fit in memory")))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = count.checked_mul(8).ok_or_else(|| Error::parse(self.path, format!("{what}: length overflow")))?;
        let start = self.pos;
        let raw = self.take(bytes, what)?;
        let mut out = Vec::with_capacity(count);
        for (i, c) in raw.chunks_exact(8).enumerate() {
            let x = f64::from_le_bytes(c.try_into().unwrap());
            if !x.is_finite() {
                return Err(Error::parse(self.path, format!("{what}: non-finite value at offset {}", start + 8 * i)));
            }
            out.push(x);
        }
        Ok(out)
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != want {
            return Err(Error::parse(
                self.path,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(got), String::from_utf8_lossy(want)),
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::parse(
                self.path,
                format!("{} trailing bytes at offset {}", self.bytes.len() - self.pos, self.pos),
            ));
        }
        Ok(())
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path).and_then(|f| BufReader::new(f).read_to_end(&mut buf)).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn put_points(out: &mut Vec<u8>, magic: &[u8; 4], p: &PointSet) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&(p.n() as u64).to_le_bytes());
    out.extend_from_slice(&(p.d() as u32).to_le_bytes());
    for x in p.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn get_points(c: &mut Cursor<'_>, magic: &[u8; 4]) -> Result<PointSet> {
    c.magic(magic)?;
    let n = c.len("n")?;
    let d = c.u32("d")? as usize;
    if n == 0 || d == 0 {
        return Err(Error::parse(c.path, format!("empty dataset (n={n}, d={d})")));
    }
    let values = c.f64s(n.checked_mul(d).ok_or_else(|| Error::parse(c.path, "n*d overflows"))?, "coordinates")?;
    PointSet::new(d, values).map_err(|e| Error::parse(c.path, e.to_string()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn parse_row(path: &Path, line: usize, record: &csv::StringRecord) -> Option<Result<Vec<f64>>> {
    let mut row = Vec::with_capacity(record.len());
    for field in record.iter() {
        match field.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => row.push(x),
            Ok(_) => return Some(Err(Error::parse(path, format!("row {line}: non-finite value `{field}`")))),
            Err(_) => return None,
        }
    }
    Some(Ok(row))
}

/// Reads numeric CSV rows; returns the flat values and the column count.
fn read_csv(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::parse(path, format!("row {line}: {e}")))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = match parse_row(path, line, &rec) {
            Some(r) => r?,
            None if i == 0 => continue,
            None => {
                return Err(Error::parse(
                    path,
                    format!("row {line}: not a number in `{}`", rec.iter().collect::<Vec<_>>().join(",")),
                ))
            }
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(
                    path,
                    format!("row {line}: ragged row with {} columns, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    match width {
        Some(w) if rows > 0 => Ok((values, rows, w)),
        _ => Err(Error::parse(path, "no data rows")),
    }
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let wrap = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        // `{:?}` prints the shortest representation that parses back to the same value
        w.write_record(row.iter().map(|x| format!("{x:?}"))).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn coordinate_header(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

pub fn load_dataset(path: &Path, format: Format) -> Result<PointSet> {
    match format {
        Format::Binary => {
            let bytes = read_all(path)?;
            let mut c = Cursor { path, bytes: &bytes, pos: 0 };
            let p = get_points(&mut c, DATASET_MAGIC)?;
            c.finish()?;
            Ok(p)
        }
        Format::Csv => {
            let (values, _, d) = read_csv(path)?;
            PointSet::new(d, values).map_err(|e| Error::parse(path, e.to_string()))
        }
    }
}

pub fn write_dataset(data: &PointSet, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Binary => {
            let mut out = Vec::with_capacity(16 + 8 * data.as_slice().len());
            put_points(&mut out, DATASET_MAGIC, data);
            write_bytes(path, &out)
        }
        Format::Csv => write_csv(path, &coordinate_header(data.d()), data.rows().map(<[f64]>::to_vec)),
    }
}

pub fn save_coreset(coreset: &WeightedPointSet, path: &Path, format: Format) -> Result<()> {
    let p = coreset.points();
    match format {
        Format::Binary => {
            let mut out = Vec::with_capacity(24 + 8 * (p.as_slice().len() + p.n()));
            put_points(&mut out, CORESET_MAGIC, p);
            out.extend_from_slice(&(coreset.len() as u64).to_le_bytes());
            for w in coreset.weights() {
                out.extend_from_slice(&w.to_le_bytes());
            }
            write_bytes(path, &out)
        }
        Format::Csv => {
            let mut header = coordinate_header(p.d());
            header.push("weight".into());
            let rows = p.rows().zip(coreset.weights()).map(|(r, w)| {
                let mut v = r.to_vec();
                v.push(*w);
                v
            });
            write_csv(path, &header, rows)
        }
    }
}

pub fn load_coreset(path: &Path, format: Format) -> Result<WeightedPointSet> {
    let (points, weights) = match format {
        Format::Binary => {
            let bytes = read_all(path)?;
            let mut c = Cursor { path, bytes: &bytes, pos: 0 };
            let points = get_points(&mut c, CORESET_MAGIC)?;
            let m = c.len("weight count")?;
            if m != points.n() {
                return Err(Error::parse(path, format!("weights block has length {m}, expected m = {}", points.n())));
            }
            let weights = c.f64s(m, "weights")?;
            c.finish()?;
            (points, weights)
        }
        Format::Csv => {
            let (values, n, cols) = read_csv(path)?;
            if cols < 2 {
                return Err(Error::parse(path, "a coreset CSV needs d + 1 >= 2 columns"));
            }
            let d = cols - 1;
            let mut coords = Vec::with_capacity(n * d);
            let mut weights = Vec::with_capacity(n);
            for row in values.chunks_exact(cols) {
                coords.extend_from_slice(&row[..d]);
                weights.push(row[d]);
            }
            (PointSet::new(d, coords).map_err(|e| Error::parse(path, e.to_string()))?, weights)
        }
    };
    WeightedPointSet::new(points, weights).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn save_spread_map(map: &SpreadReductionMap, path: &Path) -> Result<()> {
    let d = map.d;
    let mut out = Vec::new();
    out.extend_from_slice(MAP_MAGIC);
    out.extend_from_slice(&(map.box_of_point.len() as u64).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for x in [map.r, map.g, map.grid.cell_side] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&map.grid.seed.to_le_bytes());
    for x in &map.grid.shift {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&(map.boxes.len() as u64).to_le_bytes());
    for cell in &map.boxes {
        for c in &cell.0 {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for t in &map.box_translation {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for b in &map.box_of_point {
        out.extend_from_slice(&b.to_le_bytes());
    }
    write_bytes(path, &out)
}

pub fn load_spread_map(path: &Path) -> Result<SpreadReductionMap> {
    let bytes = read_all(path)?;
    let mut c = Cursor { path, bytes: &bytes, pos: 0 };
    c.magic(MAP_MAGIC)?;
    let n = c.len("n")?;
    let d = c.u32("d")? as usize;
    let r = c.f64("r")?;
    let g = c.f64("g")?;
    let cell_side = c.f64("cell side")?;
    let seed = c.u64("grid seed")?;
    let shift = c.f64s(d, "shift")?;
    let boxes = c.len("box count")?;
    let mut cells = Vec::with_capacity(boxes);
    for _ in 0..boxes {
        let mut cell = Vec::with_capacity(d);
        for _ in 0..d {
            cell.push(c.u64("cell")? as i64);
        }
        cells.push(CellId(cell));
    }
    let box_translation = c.f64s(boxes * d, "translations")?;
    let mut box_of_point = Vec::with_capacity(n);
    for _ in 0..n {
        let b = c.u32("box id")?;
        if b as usize >= boxes {
            return Err(Error::parse(path, format!("box id {b} out of range ({boxes} boxes) at offset {}", c.pos - 4)));
        }
        box_of_point.push(b);
    }
    c.finish()?;
    Ok(SpreadReductionMap {
        d,
        r,
        grid: GridConfig { cell_side, shift, seed },
        boxes: cells,
        box_of_point,
        box_translation,
        g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn csv_small_and_header() {
        let t = dir();
        let a = t.path().join("a.csv");
        fs::write(&a, "0,0\n3,4").unwrap();
        let p = load_dataset(&a, Format::Csv).unwrap();
        assert_eq!((p.n(), p.d()), (2, 2));
        assert_eq!(p.row(1), &[3.0, 4.0]);
        let b = t.path().join("b.csv");
        fs::write(&b, "x,y\n0,0\n3,4\n").unwrap();
        assert_eq!(load_dataset(&b, Format::Csv).unwrap(), p);
    }

    #[test]
    fn csv_errors_name_the_row() {
        let t = dir();
        let a = t.path().join("a.csv");
        fs::write(&a, "0,0\n1,2,3\n").unwrap();
        let e = load_dataset(&a, Format::Csv).unwrap_err().to_string();
        assert!(e.contains("row 2") && e.contains("ragged"), "{e}");
        fs::write(&a, "0,0\n1,inf\n").unwrap();
        assert!(load_dataset(&a, Format::Csv).unwrap_err().to_string().contains("row 2"));
        fs::write(&a, "0,0\n1,abc\n").unwrap();
        assert!(load_dataset(&a, Format::Csv).unwrap_err().is_data_error());
    }

    #[test]
    fn binary_dataset_round_trip_is_bitwise() {
        let t = dir();
        let path = t.path().join("p.csf");
        let p = PointSet::new(3, vec![0.1, -2.5, 1e300, 4.0, 5e-324, -0.0]).unwrap();
        write_dataset(&p, &path, Format::Binary).unwrap();
        let q = load_dataset(&path, Format::Binary).unwrap();
        let bits = |s: &PointSet| s.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"CSF1");
        assert_eq!(bytes.len(), 4 + 8 + 4 + 6 * 8);
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let t = dir();
        let path = t.path().join("p.csf");
        let p = PointSet::new(2, vec![1.0; 8]).unwrap();
        write_dataset(&p, &path, Format::Binary).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let e = load_dataset(&path, Format::Binary).unwrap_err().to_string();
        assert!(e.contains("truncated") && e.contains("offset"), "{e}");
    }

    #[test]
    fn coreset_round_trips() {
        let t = dir();
        let c = WeightedPointSet::new(PointSet::new(2, vec![1.0, 2.0, 3.0, 4.5]).unwrap(), vec![0.3, 7.25]).unwrap();
        let bin = t.path().join("c.csw");
        save_coreset(&c, &bin, Format::Binary).unwrap();
        assert_eq!(load_coreset(&bin, Format::Binary).unwrap(), c);
        let csv = t.path().join("c.csv");
        save_coreset(&c, &csv, Format::Csv).unwrap();
        let text = fs::read_to_string(&csv).unwrap();
        assert!(text.lines().all(|l| l.split(',').count() == 3));
        assert_eq!(load_coreset(&csv, Format::Csv).unwrap(), c);
    }

    #[test]
    fn weight_length_mismatch_is_named() {
        let t = dir();
        let c = WeightedPointSet::new(PointSet::new(1, vec![1.0, 2.0, 3.0]).unwrap(), vec![1.0; 3]).unwrap();
        let path = t.path().join("c.csw");
        save_coreset(&c, &path, Format::Binary).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let at = 4 + 8 + 4 + 3 * 8;
        bytes[at..at + 8].copy_from_slice(&2u64.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        let e = load_coreset(&path, Format::Binary).unwrap_err().to_string();
        assert!(e.contains("length 2") && e.contains("m = 3"), "{e}");
    }

    #[test]
    fn spread_map_round_trip() {
        let p = PointSet::new(1, vec![0.25, 0.5, 10.25, 10.75]).unwrap();
        let grid = GridConfig { cell_side: 1.0, shift: vec![0.0], seed: 3 };
        let (_, map) = crate::spread::reduce_diameter_on_grid(&p, &grid);
        let t = dir();
        let path = t.path().join("m.csr");
        save_spread_map(&map, &path).unwrap();
        assert_eq!(load_spread_map(&path).unwrap(), map);
    }
}
