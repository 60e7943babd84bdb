//! Dataset manifest: one entry per line,
//!
//! ```text
//! # comment
//! <split> <image path> <annotation>
//! ```
//!
//! `split` is `train` or `test`. Paths are relative to the manifest's
//! directory. The annotation is a `.pts` or `.cat` file, or `file.csv#id`
//! naming one row of a landmark CSV.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::crop::{crop_and_resize, CropOptions};
use super::image::load_image;
use super::parse::{parse_cat, parse_csv_landmarks, parse_pts, CsvSchema};
use super::Sample;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::shape_model::LandmarkSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Annotation {
    Pts(PathBuf),
    Cat(PathBuf),
    CsvRow { path: PathBuf, id: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: Split,
    pub image: PathBuf,
    pub annotation: Annotation,
}

impl ManifestEntry {
    pub fn id(&self) -> String {
        match &self.annotation {
            Annotation::CsvRow { id, .. } => id.clone(),
            _ => self
                .image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

fn parse_annotation(spec: &str, base: &Path) -> std::result::Result<Annotation, String> {
    if let Some((path, id)) = spec.split_once('#') {
        if !path.ends_with(".csv") {
            return Err(format!("row selector `#` is only valid for .csv files: {spec:?}"));
        }
        return Ok(Annotation::CsvRow {
            path: base.join(path),
            id: id.to_string(),
        });
    }
    if spec.ends_with(".pts") {
        Ok(Annotation::Pts(base.join(spec)))
    } else if spec.ends_with(".cat") {
        Ok(Annotation::Cat(base.join(spec)))
    } else {
        Err(format!("unknown annotation format {spec:?}"))
    }
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Manifest> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let loc = format!("line {}", i + 1);
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(loc, format!("expected `<split> <image> <annotation>`, found {trimmed:?}")));
        }
        let split = fields[0].parse::<Split>().map_err(|e| Error::parse(loc.clone(), e))?;
        let annotation = parse_annotation(fields[2], base).map_err(|e| Error::parse(loc.clone(), e))?;
        entries.push(ManifestEntry {
            split,
            image: base.join(fields[1]),
            annotation,
        });
    }
    Ok(Manifest { entries })
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base)
}

/// Renders entries with paths relative to `base`.
pub fn write_manifest(manifest: &Manifest, base: &Path) -> String {
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned();
    let mut out = String::from("# split image annotation\n");
    for e in &manifest.entries {
        let ann = match &e.annotation {
            Annotation::Pts(p) | Annotation::Cat(p) => rel(p),
            Annotation::CsvRow { path, id } => format!("{}#{id}", rel(path)),
        };
        out.push_str(&format!("{} {} {}\n", e.split.as_str(), rel(&e.image), ann));
    }
    out
}

/// Caches parsed CSV files so each is read once.
#[derive(Default)]
pub struct AnnotationReader {
    csv: HashMap<PathBuf, HashMap<String, LandmarkSet>>,
    schema: CsvSchema,
}

impl AnnotationReader {
    pub fn read(&mut self, ann: &Annotation) -> Result<LandmarkSet> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let located = |p: &Path, e: Error| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}:{location}", p.display()),
                message,
            },
            other => other,
        };
        match ann {
            Annotation::Pts(p) => parse_pts(&read(p)?).map_err(|e| located(p, e)),
            Annotation::Cat(p) => parse_cat(&read(p)?).map_err(|e| located(p, e)),
            Annotation::CsvRow { path, id } => {
                if !self.csv.contains_key(path) {
                    let rows = parse_csv_landmarks(&read(path)?, &self.schema).map_err(|e| located(path, e))?;
                    self.csv.insert(path.clone(), rows.into_iter().collect());
                }
                self.csv[path]
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::parse(path.display().to_string(), format!("no row with id {id:?}")))
            }
        }
    }
}

/// Reads every annotation of `split` (original frame), in manifest order.
pub fn load_annotations(manifest: &Manifest, split: Split) -> Result<Vec<(ManifestEntry, LandmarkSet)>> {
    let mut reader = AnnotationReader::default();
    let out: Vec<_> = manifest
        .split(split)
        .map(|e| Ok((e.clone(), reader.read(&e.annotation)?)))
        .collect::<Result<_>>()?;
    if let Some(first) = out.first() {
        let n = first.1.len();
        if let Some((e, s)) = out.iter().find(|(_, s)| s.len() != n) {
            return Err(Error::CorpusConsistency(format!(
                "{} has {} landmarks, {} has {n}",
                e.id(),
                s.len(),
                first.0.id()
            )));
        }
    }
    Ok(out)
}

/// Loads, crops and resizes every sample of `split`.
pub fn load_samples(manifest: &Manifest, split: Split, channels: usize, opts: &CropOptions, exec: Exec) -> Result<Vec<Sample>> {
    let annotated = load_annotations(manifest, split)?;
    exec.map(annotated.len(), |i| {
        let (entry, landmarks) = &annotated[i];
        let image = load_image(&entry.image, channels)?;
        let id = entry.id();
        let (image, landmarks, crop) = crop_and_resize(&id, &image, landmarks, opts)?;
        Ok(Sample {
            id,
            image,
            landmarks,
            crop,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_relative_to_base() {
        let text = "# header\ntrain img/a.png ann/a.pts\n\n test img/b.jpg lm.csv#b \ntrain c.png c.cat\n";
        let m = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.entries[0].image, PathBuf::from("/data/img/a.png"));
        assert_eq!(
            m.entries[1].annotation,
            Annotation::CsvRow {
                path: PathBuf::from("/data/lm.csv"),
                id: "b".into()
            }
        );
        assert_eq!(m.split(Split::Train).count(), 2);
        assert_eq!(m.entries[1].id(), "b");
        assert_eq!(m.entries[0].id(), "a");
        let again = parse_manifest(&write_manifest(&m, Path::new("/data")), Path::new("/data")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(parse_manifest("valid a.png a.pts", Path::new(".")).is_err());
        assert!(parse_manifest("train a.png", Path::new(".")).is_err());
        assert!(parse_manifest("train a.png a.txt", Path::new(".")).is_err());
        assert!(parse_manifest("train a.png a.pts#3", Path::new(".")).is_err());
    }
}
