//! Landmark annotation parsers. Each returns a complete set or an error
//! naming the offending line; nothing partial is ever returned.

use crate::error::{Error, Result};
use crate::shape_model::{Frame, LandmarkSet, Point};

/// iBUG `.pts`:
///
/// ```text
/// version: 1
/// n_points: 68
/// {
/// x y
/// ...
/// }
/// ```
pub fn parse_pts(text: &str) -> Result<LandmarkSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let loc = |n: usize| format!("line {n}");

    let (n, line) = lines.next().ok_or_else(|| Error::parse("line 1", "empty file"))?;
    match line.split_once(':') {
        Some((key, _)) if key.trim() == "version" => {}
        _ => return Err(Error::parse(loc(n), format!("expected `version: ...`, found {line:?}"))),
    }
    let (n, line) = lines.next().ok_or_else(|| Error::parse(loc(n + 1), "missing n_points header"))?;
    let declared: usize = match line.split_once(':') {
        Some((key, value)) if key.trim() == "n_points" => value
            .trim()
            .parse()
            .map_err(|_| Error::parse(loc(n), format!("invalid point count {:?}", value.trim())))?,
        _ => return Err(Error::parse(loc(n), format!("expected `n_points: N`, found {line:?}"))),
    };
    let (n, line) = lines.next().ok_or_else(|| Error::parse(loc(n + 1), "missing `{`"))?;
    if line != "{" {
        return Err(Error::parse(loc(n), format!("expected `{{`, found {line:?}")));
    }
    let mut points = Vec::with_capacity(declared);
    let mut closed = false;
    let mut last = n;
    for (n, line) in lines.by_ref() {
        last = n;
        if line == "}" {
            closed = true;
            break;
        }
        let coords: Vec<&str> = line.split_whitespace().collect();
        if coords.len() != 2 {
            return Err(Error::parse(loc(n), format!("expected `x y`, found {line:?}")));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(loc(n), format!("non-numeric coordinate {s:?}")))
        };
        points.push(Point::new(num(coords[0])?, num(coords[1])?));
    }
    if !closed {
        return Err(Error::parse(loc(last + 1), "missing closing `}`"));
    }
    if let Some((n, line)) = lines.next() {
        return Err(Error::parse(loc(n), format!("unexpected content after `}}`: {line:?}")));
    }
    if points.len() != declared {
        return Err(Error::parse(
            loc(last),
            format!("count mismatch: header declares {declared} points, found {}", points.len()),
        ));
    }
    LandmarkSet::new(points, Frame::Original).map_err(|e| Error::parse("points", e.to_string()))
}

pub fn write_pts(set: &LandmarkSet) -> String {
    let mut s = format!("version: 1\nn_points: {}\n{{\n", set.len());
    for p in &set.points {
        s.push_str(&format!("{} {}\n", p.x, p.y));
    }
    s.push_str("}\n");
    s
}

/// Kaggle cat annotation: a point count followed by that many `x y` pairs,
/// all whitespace separated on one line.
pub fn parse_cat(text: &str) -> Result<LandmarkSet> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let first = tokens.first().ok_or_else(|| Error::parse("token 1", "empty file"))?;
    let count: usize = first
        .parse()
        .map_err(|_| Error::parse("token 1", format!("invalid point count {first:?}")))?;
    if tokens.len() != 1 + 2 * count {
        return Err(Error::parse(
            "line 1",
            format!("count mismatch: {count} points need {} numbers, found {}", 2 * count, tokens.len() - 1),
        ));
    }
    let values = tokens[1..]
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(format!("token {}", i + 2), format!("non-numeric coordinate {t:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let points = values.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect();
    LandmarkSet::new(points, Frame::Original).map_err(|e| Error::parse("points", e.to_string()))
}

/// Generic landmark CSV: a header row `<id_column>,x0,y0,x1,y1,...` and one
/// row per landmark set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub id_column: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema { id_column: "id".into() }
    }
}

pub fn parse_csv_landmarks(text: &str, schema: &CsvSchema) -> Result<Vec<(String, LandmarkSet)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse("line 1", e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    if &headers[0] != schema.id_column.as_str() {
        return Err(Error::parse(
            "line 1",
            format!("first column must be {:?}, found {:?}", schema.id_column, &headers[0]),
        ));
    }
    let coords = headers.len() - 1;
    if coords == 0 || coords % 2 != 0 {
        return Err(Error::parse("line 1", format!("expected x/y column pairs, found {coords} coordinate columns")));
    }
    for (i, h) in headers.iter().skip(1).enumerate() {
        let expected = format!("{}{}", if i % 2 == 0 { 'x' } else { 'y' }, i / 2);
        if h != expected {
            return Err(Error::parse("line 1", format!("column {} must be {expected:?}, found {h:?}", i + 2)));
        }
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let values = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(format!("line {line}"), format!("non-numeric coordinate {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        // Row width is fixed by the header; the three-point corpus minimum is
        // enforced when a shape model is built.
        out.push((record[0].to_string(), LandmarkSet::from_flat(&values, Frame::Original)));
    }
    Ok(out)
}

/// Inverse of [`parse_csv_landmarks`]; coordinates use the shortest
/// representation that parses back to the same value.
pub fn write_csv_landmarks(rows: &[(String, LandmarkSet)], schema: &CsvSchema) -> Result<String> {
    let num_points = rows.first().map(|(_, s)| s.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![schema.id_column.clone()];
    for i in 0..num_points {
        header.push(format!("x{i}"));
        header.push(format!("y{i}"));
    }
    let csv_err = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (id, set) in rows {
        if set.len() != num_points {
            return Err(Error::CorpusConsistency(format!("row {id} has {} points, expected {num_points}", set.len())));
        }
        let mut rec = vec![id.clone()];
        rec.extend(set.to_flat().iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
