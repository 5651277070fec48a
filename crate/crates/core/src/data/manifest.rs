//! Paired SDR/HDR file lists: UTF-8, one `sdr_path<TAB>hdr_path` per line,
//! `#` lines ignored. Relative paths resolve against the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::png::{load_png16, load_png8};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sdr: PathBuf,
    pub hdr: PathBuf,
}

impl ManifestEntry {
    /// File stem of the SDR image, used as the row name in reports.
    pub fn name(&self) -> String {
        self.sdr
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub role: Role,
}

/// Decoded full-resolution pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub name: String,
    pub sdr: Tensor,
    pub hdr: Tensor,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, role: Role) -> Self {
        DatasetManifest { entries, role }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (sdr, hdr) = line.split_once('\t').ok_or_else(|| Error::Manifest {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "expected two tab-separated paths".into(),
            })?;
            if hdr.contains('\t') || sdr.is_empty() || hdr.is_empty() {
                return Err(Error::Manifest {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: "expected exactly two non-empty tab-separated paths".into(),
                });
            }
            entries.push(ManifestEntry {
                sdr: base.join(sdr),
                hdr: base.join(hdr),
            });
        }
        Ok(DatasetManifest {
            entries,
            role: Role::Train,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}", e.sdr.display(), e.hdr.display());
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Decode every pair and check matching spatial sizes.
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            load_pair(e)?;
        }
        Ok(())
    }

    pub fn load_pairs(&self) -> Result<Vec<ImagePair>> {
        self.entries.iter().map(load_pair).collect()
    }
}

pub fn load_pair(entry: &ManifestEntry) -> Result<ImagePair> {
    let sdr = load_png8(&entry.sdr)?;
    let hdr = load_png16(&entry.hdr)?;
    let (a, b) = (sdr.shape(), hdr.shape());
    if (a.h, a.w) != (b.h, b.w) {
        return Err(Error::Image {
            path: entry.hdr.clone(),
            message: format!(
                "size {}x{} does not match SDR partner {}x{}",
                b.w, b.h, a.w, a.h
            ),
        });
    }
    Ok(ImagePair {
        name: entry.name(),
        sdr,
        hdr,
    })
}

/// Result of pairing two directories by file stem.
#[derive(Debug, Default)]
pub struct Pairing {
    pub manifest: Vec<ManifestEntry>,
    /// Stems present on only one side.
    pub unpaired: Vec<String>,
}

/// Pairs `.png` files with identical stems across the two directories,
/// sorted by stem.
pub fn pair_directories(sdr_dir: &Path, hdr_dir: &Path) -> Result<Pairing> {
    let list = |dir: &Path| -> Result<Vec<(String, PathBuf)>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let is_png = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if path.is_file() && is_png {
                let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
                out.push((stem, path));
            }
        }
        out.sort();
        Ok(out)
    };
    let sdr = list(sdr_dir)?;
    let hdr = list(hdr_dir)?;
    let mut pairing = Pairing::default();
    for (stem, path) in &sdr {
        match hdr.iter().find(|(s, _)| s == stem) {
            Some((_, h)) => pairing.manifest.push(ManifestEntry {
                sdr: path.clone(),
                hdr: h.clone(),
            }),
            None => pairing.unpaired.push(stem.clone()),
        }
    }
    for (stem, _) in &hdr {
        if !sdr.iter().any(|(s, _)| s == stem) {
            pairing.unpaired.push(stem.clone());
        }
    }
    pairing.unpaired.sort();
    Ok(pairing)
}
