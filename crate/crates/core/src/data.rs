//! Dataset schema, manifest ingestion and class balancing.
//!
//! A manifest is one CSV file with the header
//! `id,image,amd,od_mask,fovea_x,fovea_y,drusen_mask,exudate_mask,hemorrhage_mask,scar_mask,other_mask`.
//! An empty cell means the annotation is absent. Relative paths resolve against the
//! manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{load_mask, load_rgb, Mask};

pub const MANIFEST_HEADER: [&str; 11] = [
    "id",
    "image",
    "amd",
    "od_mask",
    "fovea_x",
    "fovea_y",
    "drusen_mask",
    "exudate_mask",
    "hemorrhage_mask",
    "scar_mask",
    "other_mask",
];

/// Fovea location in pixels: `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoveaCoordinate {
    pub x: f64,
    pub y: f64,
}

impl FoveaCoordinate {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "fovea coordinate ({x}, {y}) must be finite and non-negative"
            )));
        }
        Ok(Self { x, y })
    }

    pub fn distance(&self, other: &FoveaCoordinate) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn within(&self, height: usize, width: usize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x < width as f64 && self.y < height as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesionKind {
    Drusen,
    Exudate,
    Hemorrhage,
    Scar,
    Other,
}

impl LesionKind {
    pub const ALL: [LesionKind; 5] = [
        LesionKind::Drusen,
        LesionKind::Exudate,
        LesionKind::Hemorrhage,
        LesionKind::Scar,
        LesionKind::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LesionKind::Drusen => "drusen",
            LesionKind::Exudate => "exudate",
            LesionKind::Hemorrhage => "hemorrhage",
            LesionKind::Scar => "scar",
            LesionKind::Other => "other",
        }
    }

    fn column(self) -> usize {
        6 + self as usize
    }
}

impl fmt::Display for LesionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LesionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LesionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown lesion kind `{s}`")))
    }
}

/// A pipeline task: AMD classification or one of the map-producing tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    Classify,
    Od,
    Fovea,
    Lesion(LesionKind),
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Classify => f.write_str("classify"),
            Task::Od => f.write_str("od"),
            Task::Fovea => f.write_str("fovea"),
            Task::Lesion(k) => write!(f, "lesion:{k}"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(Task::Classify),
            "od" => Ok(Task::Od),
            "fovea" => Ok(Task::Fovea),
            _ => match s.strip_prefix("lesion:") {
                Some(k) => Ok(Task::Lesion(k.parse()?)),
                None => Err(Error::InvalidArgument(format!(
                    "unknown task `{s}` (expected classify, od, fovea or lesion:<kind>)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for Task {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One manifest row. Paths are stored as written in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub amd: Option<bool>,
    pub od_mask: Option<PathBuf>,
    pub fovea: Option<FoveaCoordinate>,
    pub lesion_masks: BTreeMap<LesionKind, PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub amd: usize,
    pub non_amd: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub split: Split,
    /// Directory relative paths resolve against.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, split: Split, root: impl Into<PathBuf>) -> Self {
        Self {
            entries,
            split,
            root: root.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut counts = ClassCounts::default();
        for e in &self.entries {
            match e.amd {
                Some(true) => counts.amd += 1,
                Some(false) => counts.non_amd += 1,
                None => counts.unlabeled += 1,
            }
        }
        counts
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Reads the image and every present annotation for one entry.
    pub fn load_sample(&self, entry: &ManifestEntry) -> Result<FundusSample> {
        let image = load_rgb(&self.resolve(&entry.image))?;
        let od_mask = match &entry.od_mask {
            Some(p) => Some(load_mask(&self.resolve(p))?),
            None => None,
        };
        let lesion_masks = if entry.lesion_masks.is_empty() {
            None
        } else {
            let mut masks = BTreeMap::new();
            for (kind, p) in &entry.lesion_masks {
                masks.insert(*kind, load_mask(&self.resolve(p))?);
            }
            Some(masks)
        };
        FundusSample::new(
            base_id(&entry.id).to_string(),
            image,
            entry.amd,
            od_mask,
            entry.fovea,
            lesion_masks,
        )
    }
}

/// Strips the replica suffix added by [`oversample`].
pub fn base_id(id: &str) -> &str {
    id.split_once(REPLICA_SEPARATOR).map_or(id, |(base, _)| base)
}

const REPLICA_SEPARATOR: char = '@';

/// One fundus image and its annotations. Validated on construction.
#[derive(Debug, Clone)]
pub struct FundusSample {
    pub id: String,
    pub image: RgbImage,
    pub amd_label: Option<bool>,
    pub od_mask: Option<Mask>,
    pub fovea: Option<FoveaCoordinate>,
    pub lesion_masks: Option<BTreeMap<LesionKind, Mask>>,
}

impl FundusSample {
    pub fn new(
        id: String,
        image: RgbImage,
        amd_label: Option<bool>,
        od_mask: Option<Mask>,
        fovea: Option<FoveaCoordinate>,
        lesion_masks: Option<BTreeMap<LesionKind, Mask>>,
    ) -> Result<Self> {
        let (h, w) = (image.height() as usize, image.width() as usize);
        let check = |m: &Mask| {
            if m.dim() != (h, w) {
                Err(Error::shape(&[h, w], &[m.dim().0, m.dim().1]))
            } else {
                Ok(())
            }
        };
        if let Some(m) = &od_mask {
            check(m)?;
        }
        for m in lesion_masks.iter().flat_map(|l| l.values()) {
            check(m)?;
        }
        if let Some(f) = fovea {
            if !f.within(h, w) {
                return Err(Error::InvalidArgument(format!(
                    "sample `{id}`: fovea ({}, {}) outside {w}x{h} frame",
                    f.x, f.y
                )));
            }
        }
        Ok(Self {
            id,
            image,
            amd_label,
            od_mask,
            fovea,
            lesion_masks,
        })
    }

    pub fn height(&self) -> usize {
        self.image.height() as usize
    }

    pub fn width(&self) -> usize {
        self.image.width() as usize
    }
}

fn opt_cell(s: &str) -> Option<&str> {
    let s = s.trim();
    (!s.is_empty()).then_some(s)
}

/// Loads and validates a manifest: ids unique, every referenced file present.
pub fn load_manifest(path: &Path, split: Split) -> Result<DatasetManifest> {
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(bad(
            1,
            format!("header must be `{}`", MANIFEST_HEADER.join(",")),
        ));
    }

    let manifest_root = root.clone();
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| bad(line, e.to_string()))?;
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(bad(line, "empty id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let image = opt_cell(&record[1])
            .map(PathBuf::from)
            .ok_or_else(|| bad(line, "empty image path".into()))?;
        let amd = match opt_cell(&record[2]) {
            None => None,
            Some("0") => Some(false),
            Some("1") => Some(true),
            Some(other) => return Err(bad(line, format!("amd must be 0, 1 or empty, got `{other}`"))),
        };
        let od_mask = opt_cell(&record[3]).map(PathBuf::from);
        let fovea = match (opt_cell(&record[4]), opt_cell(&record[5])) {
            (None, None) => None,
            (Some(x), Some(y)) => {
                let parse = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| bad(line, format!("bad fovea coordinate `{s}`")))
                };
                Some(
                    FoveaCoordinate::new(parse(x)?, parse(y)?)
                        .map_err(|e| bad(line, e.to_string()))?,
                )
            }
            _ => return Err(bad(line, "fovea_x and fovea_y must both be set or both empty".into())),
        };
        let mut lesion_masks = BTreeMap::new();
        for kind in LesionKind::ALL {
            if let Some(p) = opt_cell(&record[kind.column()]) {
                lesion_masks.insert(kind, PathBuf::from(p));
            }
        }
        let entry = ManifestEntry {
            id,
            image,
            amd,
            od_mask,
            fovea,
            lesion_masks,
        };
        let referenced = std::iter::once(&entry.image)
            .chain(entry.od_mask.iter())
            .chain(entry.lesion_masks.values());
        for p in referenced {
            let full = if p.is_absolute() {
                p.clone()
            } else {
                manifest_root.join(p)
            };
            if !full.is_file() {
                return Err(Error::MissingFile {
                    id: entry.id.clone(),
                    path: full,
                });
            }
        }
        entries.push(entry);
    }
    Ok(DatasetManifest {
        entries,
        split,
        root,
    })
}

/// Writes a manifest in the format read by [`load_manifest`].
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let to_io = |e: csv::Error| Error::io(path, e.into());
    writer.write_record(MANIFEST_HEADER).map_err(to_io)?;
    let p = |o: Option<&PathBuf>| o.map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
    for e in &manifest.entries {
        let mut row = vec![
            e.id.clone(),
            e.image.to_string_lossy().into_owned(),
            e.amd.map(|a| if a { "1" } else { "0" }.to_string()).unwrap_or_default(),
            p(e.od_mask.as_ref()),
            e.fovea.map(|f| f.x.to_string()).unwrap_or_default(),
            e.fovea.map(|f| f.y.to_string()).unwrap_or_default(),
        ];
        for kind in LesionKind::ALL {
            row.push(p(e.lesion_masks.get(&kind)));
        }
        writer.write_record(&row).map_err(to_io)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Duplicates minority-class rows until `minority / majority >= target_ratio`.
///
/// Replicas are appended after the originals, cycling through the minority rows in
/// manifest order, and get ids of the form `{id}@{k}` with `k` the replica index.
pub fn oversample(manifest: &DatasetManifest, target_ratio: f64) -> Result<DatasetManifest> {
    if !(target_ratio > 0.0 && target_ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target ratio must be positive, got {target_ratio}"
        )));
    }
    let counts = manifest.class_counts();
    if counts.amd == 0 || counts.non_amd == 0 {
        return Err(Error::SingleClass);
    }
    let minority_label = counts.amd <= counts.non_amd;
    let (minority, majority) = if minority_label {
        (counts.amd, counts.non_amd)
    } else {
        (counts.non_amd, counts.amd)
    };
    let wanted = (target_ratio * majority as f64 - 1e-9).ceil().max(0.0) as usize;
    let extra = wanted.saturating_sub(minority);

    let pool: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| e.amd == Some(minority_label))
        .collect();
    let mut out = manifest.clone();
    for k in 0..extra {
        let src = pool[k % pool.len()];
        let mut replica = src.clone();
        replica.id = format!("{}{REPLICA_SEPARATOR}{}", src.id, k / pool.len() + 1);
        out.entries.push(replica);
    }
    Ok(out)
}
