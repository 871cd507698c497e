//! The JSON manifest document and bag loading driven by it.
//!
//! Schema:
//!
//! ```json
//! {
//!   "layout": {"names": ["g0", "g1"], "dims": [16, 24]},
//!   "num_classes": 3,
//!   "entries": [{"id": "...", "path": "bags/....gmbg", "label": 0, "split": "train"}]
//! }
//! ```
//!
//! Entry paths are relative to the manifest's directory. Unknown keys are
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use gasmil_core::{FeatureBag, GroupLayout, Manifest, ManifestEntry, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::bagfile;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutDoc {
    pub names: Vec<String>,
    pub dims: Vec<usize>,
}

impl LayoutDoc {
    pub fn from_layout(layout: &GroupLayout) -> Self {
        LayoutDoc {
            names: layout.group_names().to_vec(),
            dims: layout.group_dims().to_vec(),
        }
    }

    pub fn to_layout(&self) -> Result<GroupLayout> {
        Ok(GroupLayout::new(self.names.clone(), self.dims.clone())?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    id: String,
    path: String,
    label: usize,
    split: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    layout: LayoutDoc,
    num_classes: usize,
    entries: Vec<EntryDoc>,
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let doc: ManifestDoc =
        serde_json::from_str(&text).map_err(|e| CliError::malformed(path, e.to_string()))?;
    let layout = doc.layout.to_layout()?;
    let entries = doc
        .entries
        .into_iter()
        .map(|e| {
            Ok(ManifestEntry {
                id: e.id,
                path: e.path,
                label: e.label,
                split: Split::parse(&e.split)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        layout,
        num_classes: doc.num_classes,
        entries,
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    manifest.validate()?;
    let doc = ManifestDoc {
        layout: LayoutDoc::from_layout(&manifest.layout),
        num_classes: manifest.num_classes,
        entries: manifest
            .entries
            .iter()
            .map(|e| EntryDoc {
                id: e.id.clone(),
                path: e.path.clone(),
                label: e.label,
                split: e.split.as_str().to_string(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::malformed(path, e.to_string()))?;
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    fs::write(path, text).map_err(CliError::io(path))
}

/// Directory bag paths are resolved against.
pub fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Loads every bag tagged with `split`, in manifest order, verifying that
/// file contents agree with the manifest entry.
pub fn load_split_bags(
    manifest_path: &Path,
    manifest: &Manifest,
    split: Split,
) -> Result<Vec<FeatureBag>> {
    let base = base_dir(manifest_path);
    let entries: Vec<&ManifestEntry> = manifest.entries_in(split).collect();
    entries
        .par_iter()
        .map(|entry| {
            let path = base.join(&entry.path);
            let bag = bagfile::read_bag(&path, &manifest.layout)?;
            if bag.bag_id != entry.id || bag.label != entry.label {
                return Err(CliError::malformed(
                    &path,
                    format!(
                        "bag file carries id `{}` label {}, manifest says `{}` label {}",
                        bag.bag_id, bag.label, entry.id, entry.label
                    ),
                ));
            }
            Ok(bag)
        })
        .collect()
}
