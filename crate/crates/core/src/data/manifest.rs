//! Tab-separated dataset manifests.
//!
//! One entry per line:
//! `image_path<TAB>mask_path_or_dash<TAB>subject_id<TAB>eye<TAB>phase<TAB>sensor`.
//! Lines starting with `#` are comments and blank lines are skipped. Relative
//! paths are resolved against the manifest's own directory on load and
//! written relative to the destination directory on save.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{IrisImage, Sample, SegmentationMask};
use crate::error::{Result, SegError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Eye {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    PreSurgery,
    PostSurgery,
    Healthy,
}

impl Eye {
    pub fn as_str(self) -> &'static str {
        match self {
            Eye::Left => "left",
            Eye::Right => "right",
        }
    }
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::PreSurgery, Phase::PostSurgery, Phase::Healthy];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreSurgery => "pre_surgery",
            Phase::PostSurgery => "post_surgery",
            Phase::Healthy => "healthy",
        }
    }
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Eye {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "left" => Ok(Eye::Left),
            "right" => Ok(Eye::Right),
            other => Err(format!("unknown eye '{other}' (expected left|right)")),
        }
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown phase '{s}' (expected pre_surgery|post_surgery|healthy)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub subject_id: String,
    pub eye: Eye,
    pub phase: Phase,
    pub sensor: String,
}

impl ManifestEntry {
    /// File stem of the image, used as the sample identifier.
    pub fn id(&self) -> String {
        self.image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn load(&self) -> Result<Sample> {
        let image = IrisImage::load_png(&self.image_path)?;
        let mask = self.mask_path.as_deref().map(SegmentationMask::load_png).transpose()?;
        Sample::new(
            self.id(),
            image,
            mask,
            self.subject_id.clone(),
            self.eye,
            self.phase,
            self.sensor.clone(),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Builds a manifest, enforcing unique image paths and non-empty subject ids.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.subject_id.is_empty() {
                return Err(SegError::Invalid(format!(
                    "entry {} has an empty subject id",
                    e.image_path.display()
                )));
            }
            if !seen.insert(&e.image_path) {
                return Err(SegError::DuplicateImagePath(e.image_path.display().to_string()));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.subject_id.as_str()).collect()
    }

    pub fn load_samples(&self) -> Result<Vec<Sample>> {
        self.entries.iter().map(ManifestEntry::load).collect()
    }

    /// Writes the manifest, expressing paths relative to the file's directory.
    pub fn write(&self, path: &Path) -> Result<()> {
        let base = absolute(path.parent().unwrap_or(Path::new(".")))?;
        let rel = |p: &Path| -> Result<String> {
            let abs = absolute(p)?;
            let r = pathdiff::diff_paths(&abs, &base).unwrap_or(abs);
            Ok(r.to_string_lossy().replace('\\', "/"))
        };
        let mut out = String::from("# image\tmask\tsubject\teye\tphase\tsensor\n");
        for e in &self.entries {
            let mask = match &e.mask_path {
                Some(m) => rel(m)?,
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                rel(&e.image_path)?,
                mask,
                e.subject_id,
                e.eye,
                e.phase,
                e.sensor
            ));
        }
        fs::write(path, out).map_err(|e| SegError::io(path, e))
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| SegError::io(p, e))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| SegError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let line_err = |line: usize, message: String| SegError::ManifestLine {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(line_err(
                line_no,
                format!("expected 6 tab-separated fields, got {}", fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(line_err(line_no, "empty image path".into()));
        }
        if fields[2].is_empty() {
            return Err(line_err(line_no, "empty subject id".into()));
        }
        let eye = fields[3].parse().map_err(|m| line_err(line_no, m))?;
        let phase = fields[4].parse().map_err(|m| line_err(line_no, m))?;
        let mask_path = match fields[1] {
            "-" | "" => None,
            m => Some(base.join(m)),
        };
        entries.push(ManifestEntry {
            image_path: base.join(fields[0]),
            mask_path,
            subject_id: fields[2].to_string(),
            eye,
            phase,
            sensor: fields[5].to_string(),
        });
    }
    DatasetManifest::new(entries)
}

/// Subject-disjoint split: subjects are shuffled with `seed` and the first
/// `round(train_fraction × subjects)` go to the training side, clamped so
/// neither side is empty. Entries keep their input order.
pub fn split_by_subject(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SegError::Invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut subjects: Vec<&str> = manifest.subjects().into_iter().collect();
    if subjects.len() < 2 {
        return Err(SegError::Invalid(format!(
            "a subject-disjoint split needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    let n_train = ((train_fraction * subjects.len() as f64).round() as usize).clamp(1, subjects.len() - 1);
    let train_subjects: HashSet<&str> = subjects[..n_train].iter().copied().collect();
    let (train, test): (Vec<_>, Vec<_>) = manifest
        .entries
        .iter()
        .cloned()
        .partition(|e| train_subjects.contains(e.subject_id.as_str()));
    Ok((DatasetManifest { entries: train }, DatasetManifest { entries: test }))
}
