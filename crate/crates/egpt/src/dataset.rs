//! On-disk dataset directories.
//!
//! ```text
//! meta.json          format tag, seed, sizes, generator config, snapshot list
//! profiles.csv       one row per user
//! snapshot_01.json   adjacency as '0'/'1' row strings, history, engagement, posts
//! ```
//!
//! Everything is text and written in a fixed order, so two runs with the
//! same config and seed produce byte-identical directories.

use std::fs;
use std::path::{Path, PathBuf};

use egpt_core::features::FeatureLayout;
use egpt_core::synthgen::{
    Adjacency, CategoryDistribution, Dataset, EngagementProfile, GeneratorConfig, Gender, Occupation, TemporalSnapshot,
    UserProfile,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DATASET_FORMAT: &str = "egpt-dataset/1";
pub const META_FILE: &str = "meta.json";
pub const PROFILES_FILE: &str = "profiles.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Generated,
    /// Rolled out by a model; snapshots carry their own decoded profiles.
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub format: String,
    pub kind: DatasetKind,
    pub seed: u64,
    pub users: usize,
    pub steps: usize,
    pub layout: FeatureLayout,
    pub config: GeneratorConfig,
    pub snapshots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRecord {
    user_id: usize,
    age: u8,
    gender: String,
    occupation: String,
    location: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotDoc {
    pub format: String,
    pub step: usize,
    pub adjacency: Vec<String>,
    pub history: Vec<CategoryDistribution>,
    pub engagement: Vec<EngagementProfile>,
    pub posts: Vec<u8>,
    /// Present only when this step's profiles differ from `profiles.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<Vec<UserProfile>>,
}

pub fn snapshot_file_name(step: usize) -> String {
    format!("snapshot_{step:02}.json")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory documents serialize");
    s.push('\n');
    s
}

pub(crate) fn check_format(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(CliError::format(path, format!("unsupported format `{found}`, expected `{expected}`")));
    }
    Ok(())
}

impl SnapshotDoc {
    pub fn from_snapshot(s: &TemporalSnapshot, users: &[UserProfile]) -> Self {
        SnapshotDoc {
            format: DATASET_FORMAT.to_string(),
            step: s.step,
            adjacency: (0..s.adjacency.len()).map(|i| s.adjacency.row_bits(i)).collect(),
            history: s.history.clone(),
            engagement: s.engagement.clone(),
            posts: s.posts.clone(),
            profiles: (s.profiles != users).then(|| s.profiles.clone()),
        }
    }

    pub fn into_snapshot(self, path: &Path, users: &[UserProfile]) -> Result<TemporalSnapshot> {
        check_format(path, &self.format, DATASET_FORMAT)?;
        let bad = |reason: String| CliError::format(path, reason);
        let rows = self
            .adjacency
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(bad(format!("adjacency row {i} contains `{other}`"))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let adjacency = Adjacency::from_bits(&rows).map_err(|e| bad(e.to_string()))?;
        // Deserialization bypasses the distribution constructor; re-check sums here.
        for d in self.history.iter().chain(self.engagement.iter().flat_map(|e| e.parts())) {
            CategoryDistribution::new(*d.weights()).map_err(|e| bad(e.to_string()))?;
        }
        let snapshot = TemporalSnapshot {
            step: self.step,
            adjacency,
            profiles: self.profiles.unwrap_or_else(|| users.to_vec()),
            history: self.history,
            engagement: self.engagement,
            posts: self.posts,
        };
        snapshot.validate().map_err(|e| bad(e.to_string()))?;
        Ok(snapshot)
    }
}

fn profile_record(p: &UserProfile, locations: &[String]) -> ProfileRecord {
    ProfileRecord {
        user_id: p.user_id,
        age: p.age,
        gender: p.gender.label().to_string(),
        occupation: p.occupation.label().to_string(),
        location: locations[usize::from(p.location)].clone(),
    }
}

fn profile_from_record(r: ProfileRecord, locations: &[String], path: &Path) -> Result<UserProfile> {
    let bad = |what: &str, value: &str| CliError::format(path, format!("user {}: unknown {what} `{value}`", r.user_id));
    let profile = UserProfile {
        user_id: r.user_id,
        age: r.age,
        gender: Gender::from_label(&r.gender).ok_or_else(|| bad("gender", &r.gender))?,
        occupation: Occupation::from_label(&r.occupation).ok_or_else(|| bad("occupation", &r.occupation))?,
        location: locations
            .iter()
            .position(|l| *l == r.location)
            .ok_or_else(|| bad("location", &r.location))? as u8,
    };
    profile.validate().map_err(|e| CliError::format(path, e.to_string()))?;
    Ok(profile)
}

fn write_profiles(path: &Path, users: &[UserProfile], locations: &[String]) -> Result<()> {
    let csv_err = |e: csv::Error| CliError::format(path, e);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for p in users {
        w.serialize(profile_record(p, locations)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_profiles(path: &Path, locations: &[String]) -> Result<Vec<UserProfile>> {
    let csv_err = |e: csv::Error| CliError::format(path, e);
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut users = Vec::new();
    for (i, rec) in r.deserialize::<ProfileRecord>().enumerate() {
        let p = profile_from_record(rec.map_err(csv_err)?, locations, path)?;
        if p.user_id != i {
            return Err(CliError::format(path, format!("row {i} has user_id {}", p.user_id)));
        }
        users.push(p);
    }
    Ok(users)
}

fn write_dir(dir: &Path, dataset: &Dataset, kind: DatasetKind) -> Result<()> {
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut snapshots: Vec<&TemporalSnapshot> = dataset.snapshots.iter().collect();
    snapshots.sort_by_key(|s| s.step);
    let meta = Meta {
        format: DATASET_FORMAT.to_string(),
        kind,
        seed: dataset.seed,
        users: dataset.user_count(),
        steps: dataset.steps(),
        layout: FeatureLayout::new(dataset.user_count()),
        config: dataset.config.clone(),
        snapshots: snapshots.iter().map(|s| snapshot_file_name(s.step)).collect(),
    };
    write_text(&dir.join(META_FILE), &to_json(&meta))?;
    write_profiles(&dir.join(PROFILES_FILE), &dataset.users, &dataset.config.locations)?;
    for (s, name) in snapshots.iter().zip(&meta.snapshots) {
        write_text(&dir.join(name), &to_json(&SnapshotDoc::from_snapshot(s, &dataset.users)))?;
    }
    Ok(())
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    write_dir(dir, dataset, DatasetKind::Generated)
}

/// Writes rolled-out snapshots as a dataset directory of their own.
pub fn write_prediction(dir: &Path, source: &Dataset, predicted: Vec<TemporalSnapshot>) -> Result<()> {
    let out = Dataset {
        config: source.config.clone(),
        seed: source.seed,
        users: source.users.clone(),
        snapshots: predicted,
    };
    write_dir(dir, &out, DatasetKind::Predicted)
}

pub fn read_meta(dir: &Path) -> Result<Meta> {
    let path = dir.join(META_FILE);
    let meta: Meta = serde_json::from_str(&read_text(&path)?).map_err(|e| CliError::format(&path, e))?;
    check_format(&path, &meta.format, DATASET_FORMAT)?;
    meta.config.validate().map_err(|e| CliError::format(&path, e))?;
    if meta.snapshots.len() != meta.steps || meta.layout != FeatureLayout::new(meta.users) {
        return Err(CliError::format(&path, "step count or layout disagrees with the header"));
    }
    Ok(meta)
}

/// Reads one snapshot file; `users` fills in profiles the file leaves out.
pub fn read_snapshot(path: &Path, users: &[UserProfile]) -> Result<TemporalSnapshot> {
    let doc: SnapshotDoc = serde_json::from_str(&read_text(path)?).map_err(|e| CliError::format(path, e))?;
    doc.into_snapshot(path, users)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(CliError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let meta = read_meta(dir)?;
    let users = read_profiles(&dir.join(PROFILES_FILE), &meta.config.locations)?;
    if users.len() != meta.users {
        return Err(CliError::format(dir.join(PROFILES_FILE), format!("{} users, header says {}", users.len(), meta.users)));
    }
    let snapshots = meta
        .snapshots
        .iter()
        .map(|name| read_snapshot(&dir.join(name), &users))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset {
        config: meta.config,
        seed: meta.seed,
        users,
        snapshots,
    };
    dataset.validate().map_err(|e| CliError::format(dir, e))?;
    Ok(dataset)
}

/// Files a dataset directory consists of, in write order.
pub fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let meta = read_meta(dir)?;
    let mut files = vec![dir.join(META_FILE), dir.join(PROFILES_FILE)];
    files.extend(meta.snapshots.iter().map(|n| dir.join(n)));
    Ok(files)
}
