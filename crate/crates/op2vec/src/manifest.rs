//! Dataset manifests: the family list (which fixes class order) and the
//! sample files belonging to each family.
//!
//! ```toml
//! families = ["adload", "bho"]
//!
//! [[samples]]
//! family = "adload"
//! path = "adload/0001.opcodes"
//! ```
//!
//! Relative sample paths are resolved against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const SAMPLE_EXTENSION: &str = "opcodes";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub family: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub families: Vec<String>,
    #[serde(default)]
    pub samples: Vec<SampleEntry>,
}

impl Manifest {
    /// Reads a TOML manifest, or scans `<family>/*.opcodes` when given a directory.
    pub fn load(path: &Path) -> AppResult<Self> {
        if path.is_dir() {
            return Self::scan(path);
        }
        let mut manifest: Manifest = crate::io::read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut manifest.samples {
            if s.path.is_relative() {
                s.path = base.join(&s.path);
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    /// Builds a manifest from a `<family>/<sample>.opcodes` tree. Families and
    /// samples are taken in lexicographic order.
    pub fn scan(root: &Path) -> AppResult<Self> {
        let mut families = Vec::new();
        let mut samples = Vec::new();
        for dir in sorted_entries(root)? {
            if !dir.is_dir() {
                continue;
            }
            let name = dir.file_name().and_then(|n| n.to_str()).map(str::to_owned);
            let Some(family) = name else { continue };
            let files: Vec<PathBuf> = sorted_entries(&dir)?
                .into_iter()
                .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == SAMPLE_EXTENSION))
                .collect();
            if files.is_empty() {
                continue;
            }
            samples.extend(files.into_iter().map(|path| SampleEntry { family: family.clone(), path }));
            families.push(family);
        }
        let manifest = Manifest { families, samples };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> AppResult<()> {
        if self.samples.is_empty() {
            return Err(AppError::data("manifest lists no samples"));
        }
        for (i, f) in self.families.iter().enumerate() {
            if self.families[..i].contains(f) {
                return Err(AppError::data(format!("family {f:?} listed twice")));
            }
        }
        if let Some(s) = self.samples.iter().find(|s| self.family_index(&s.family).is_none()) {
            return Err(AppError::data(format!(
                "sample {} belongs to unlisted family {:?}",
                s.path.display(),
                s.family
            )));
        }
        Ok(())
    }

    pub fn family_index(&self, family: &str) -> Option<usize> {
        self.families.iter().position(|f| f == family)
    }

    pub fn family_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.families.len()];
        for s in &self.samples {
            if let Some(i) = self.family_index(&s.family) {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Writes the manifest with sample paths relative to `path`'s directory where possible.
    pub fn save(&self, path: &Path) -> AppResult<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        let relative = Manifest {
            families: self.families.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| SampleEntry {
                    family: s.family.clone(),
                    path: s.path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| s.path.clone()),
                })
                .collect(),
        };
        crate::io::write_toml(path, &relative)
    }
}

fn sorted_entries(dir: &Path) -> AppResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| AppError::io(dir, e))? {
        out.push(entry.map_err(|e| AppError::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}
