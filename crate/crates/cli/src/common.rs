//! Shared plumbing for the subcommands: config echoes, CSV artifacts,
//! snapshot streams and image-directory handling.

use microkappa_core::correlation;
use microkappa_core::error::{Error, Result};
use microkappa_core::microgen::{self, ClassSpec};
use microkappa_core::MicrostructureImage;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Writes the resolved configuration next to the artifacts and returns its
/// hash; every artifact of the run carries this hash.
pub fn echo_config<T: Serialize>(dir: &Path, config: &T) -> Result<String> {
    let hash = microkappa_core::hash::config_hash(config);
    let echo = serde_json::json!({
        "config_hash": hash,
        "config": config,
    });
    let text = serde_json::to_string_pretty(&echo)
        .map_err(|e| Error::InvalidFormat(format!("config echo: {e}")))?;
    std::fs::write(dir.join("config.json"), text + "\n")?;
    Ok(hash)
}

/// CSV artifact with a leading config-hash comment. Rows are written as-is;
/// fields must already be formatted.
pub fn write_csv(
    path: &Path,
    config_hash: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Loads a class spec from JSON.
pub fn load_class_spec(path: &Path) -> Result<ClassSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let spec: ClassSpec = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

/// Infinite stream of shifted 2-point snapshots of freshly generated
/// microstructures, sample `start_index + k` of the class under `seed`.
pub fn snapshot_stream(
    class: ClassSpec,
    seed: u64,
    start_index: u64,
) -> impl Iterator<Item = Result<Vec<f64>>> {
    (start_index..).map(move |index| {
        let spec = class.instantiate(seed, index);
        let img = microgen::generate(&spec)?;
        Ok(correlation::snapshot(&img)?.into_values())
    })
}

/// One entry of the image manifest written by `generate`.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ImageEntry {
    pub index: u64,
    pub path: String,
    pub seed: u64,
    pub target_vf: f64,
    pub achieved_vf: f64,
    pub overlap: f64,
    pub morphology: String,
    pub config_hash: String,
}

pub const IMAGE_MANIFEST: &str = "images.jsonl";

pub fn write_image_manifest(dir: &Path, entries: &[ImageEntry]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(IMAGE_MANIFEST))?);
    for e in entries {
        let line = serde_json::to_string(e)
            .map_err(|err| Error::InvalidFormat(format!("image manifest: {err}")))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Images of a directory: from its manifest when present, otherwise all
/// `.txt`/`.pgm` files in name order (with zero seeds).
pub fn list_images(dir: &Path) -> Result<Vec<(PathBuf, u64)>> {
    let manifest = dir.join(IMAGE_MANIFEST);
    if manifest.exists() {
        let text = std::fs::read_to_string(&manifest)?;
        let mut out = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ImageEntry = serde_json::from_str(line).map_err(|e| {
                Error::InvalidFormat(format!("{} line {}: {e}", manifest.display(), ln + 1))
            })?;
            out.push((dir.join(&entry.path), entry.seed));
        }
        return Ok(out);
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("txt") | Some("pgm")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no images found in {}",
            dir.display()
        )));
    }
    Ok(paths.into_iter().map(|p| (p, 0)).collect())
}

pub fn load_image(path: &Path) -> Result<MicrostructureImage> {
    MicrostructureImage::read_path(path)
}
