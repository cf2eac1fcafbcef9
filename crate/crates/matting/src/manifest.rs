//! Dataset manifest: one tab-separated record per line,
//! `image_path<TAB>matte_path<TAB>prompt_id<TAB>class_name`.
//! Paths are stored relative to the manifest's directory.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub image_path: String,
    pub matte_path: String,
    pub prompt_id: usize,
    pub class_name: String,
}

#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.image_path, r.matte_path, r.prompt_id, r.class_name
            ));
        }
        std::fs::write(path, out).map_err(zippo_core::Error::from)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path).map_err(zippo_core::Error::from)?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::invalid(format!(
                    "{}:{}: expected 4 tab-separated fields, got {}",
                    path.display(),
                    lineno + 1,
                    fields.len()
                )));
            }
            let prompt_id = fields[2].parse::<usize>().map_err(|_| {
                Error::invalid(format!(
                    "{}:{}: bad prompt id {:?}",
                    path.display(),
                    lineno + 1,
                    fields[2]
                ))
            })?;
            records.push(ManifestRecord {
                image_path: fields[0].to_string(),
                matte_path: fields[1].to_string(),
                prompt_id,
                class_name: fields[3].to_string(),
            });
        }
        Ok(DatasetManifest { records })
    }

    /// Resolve a record's paths against the manifest location.
    pub fn resolve(&self, manifest_path: &Path, record: &ManifestRecord) -> (PathBuf, PathBuf) {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        (base.join(&record.image_path), base.join(&record.matte_path))
    }
}
