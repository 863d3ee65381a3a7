use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use reliqa::imagecore::{load_png, GrayMode};
use reliqa::masks::load_label_map;
use reliqa::{ImageBuffer, MaskSet};

use crate::Invalid;

pub fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        return Err(Invalid(format!("{what} {} is not a directory", path.display())).into());
    }
    Ok(())
}

/// Refuses to write into an existing non-empty directory unless `force`.
/// Nothing is deleted; files are overwritten in place.
pub fn prepare_out_dir(path: &Path, force: bool) -> Result<()> {
    if path.exists() {
        if !path.is_dir() {
            return Err(Invalid(format!("output {} exists and is not a directory", path.display())).into());
        }
        let non_empty = fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Invalid(format!("refusing to overwrite {} (pass --force)", path.display())).into());
        }
    }
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn prepare_out_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Invalid(format!("refusing to overwrite {} (pass --force)", path.display())).into());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// PNG files directly under `dir`, sorted by name.
pub fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Invalid(format!("no PNG files in {}", dir.display())).into());
    }
    Ok(files)
}

/// A reference image with its optional label map and source file.
pub struct Reference {
    pub path: PathBuf,
    pub image: ImageBuffer,
    pub labels: Option<MaskSet>,
}

/// Loads every PNG in `images` as RGB. With `labels`, each image needs a
/// label PNG of the same file name there.
pub fn load_references(images: &Path, labels: Option<&Path>) -> Result<Vec<Reference>> {
    require_dir(images, "image directory")?;
    if let Some(l) = labels {
        require_dir(l, "label directory")?;
    }
    png_files(images)?
        .into_iter()
        .map(|path| {
            let image = load_png(&path, GrayMode::ExpandToRgb)?;
            let labels = match labels {
                Some(dir) => {
                    let name = path.file_name().expect("listed files have names");
                    let lp = dir.join(name);
                    if !lp.is_file() {
                        return Err(Invalid(format!("no label map {} for {}", lp.display(), path.display())).into());
                    }
                    let m = load_label_map(&lp)?;
                    if (m.height(), m.width()) != (image.height(), image.width()) {
                        return Err(Invalid(format!("label map {} does not match its image size", lp.display())).into());
                    }
                    Some(m)
                }
                None => None,
            };
            Ok(Reference { path, image, labels })
        })
        .collect()
}
