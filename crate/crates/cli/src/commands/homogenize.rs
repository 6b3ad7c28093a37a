use crate::common;
use microkappa_core::correlation;
use microkappa_core::dataset::{write_manifest, DatasetRecord, SidecarWriter};
use microkappa_core::error::{Error, Result};
use microkappa_core::homogenize::{
    effective_conductivity, to_voigt, FaceRule, PhaseLaw, SolveOptions,
};
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Label an image directory with effective conductivities.
#[derive(Debug, clap::Args, Serialize)]
pub struct HomogenizeArgs {
    /// Directory of images (uses its manifest when present).
    #[arg(long, value_name = "DIR")]
    pub r#in: PathBuf,
    /// Matrix conductivity.
    #[arg(long, default_value_t = 1.0)]
    pub kappa_a: f64,
    /// Material contrast; inclusions get kappa_a / contrast.
    #[arg(long, default_value_t = 5.0)]
    pub contrast: f64,
    /// Relative equilibrium residual.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 5_000)]
    pub max_iter: usize,
    /// Face averaging rule: harmonic or geometric.
    #[arg(long, default_value = "harmonic")]
    pub face_rule: String,
    /// Output manifest (line-delimited JSON records).
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the binary snapshot sidecar.
    #[arg(long, default_value_t = false)]
    pub no_snapshots: bool,
    /// Dump each 2-point field as rescaled PGM and raw f64 grid here.
    #[arg(long)]
    pub dump_2pcf: Option<PathBuf>,
}

pub fn sidecar_path(manifest: &Path) -> PathBuf {
    let mut s = manifest.as_os_str().to_owned();
    s.push(".snaps");
    PathBuf::from(s)
}

pub fn run(args: &HomogenizeArgs, quiet: bool) -> Result<()> {
    let face_rule = match args.face_rule.as_str() {
        "harmonic" => FaceRule::Harmonic,
        "geometric" => FaceRule::Geometric,
        other => {
            return Err(Error::InvalidSpec(format!(
                "face rule {other:?} (expected harmonic or geometric)"
            )))
        }
    };
    let law = PhaseLaw::new(args.kappa_a, args.contrast)?;
    let opts = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        face_rule,
    };
    let hash = microkappa_core::hash::config_hash(&serde_json::json!({
        "command": "homogenize",
        "args": args,
    }));
    let images = common::list_images(&args.r#in)?;
    if let Some(dir) = &args.dump_2pcf {
        std::fs::create_dir_all(dir)?;
    }

    let manifest_dir = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
    let results: Vec<(DatasetRecord, Vec<f64>)> = images
        .par_iter()
        .map(|(path, seed)| -> Result<(DatasetRecord, Vec<f64>)> {
            let img = common::load_image(path)?;
            let field = correlation::two_point(
                &img,
                (correlation::Phase::B, correlation::Phase::B),
            )?;
            if let Some(dir) = &args.dump_2pcf {
                let stem = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("image");
                let pgm = std::fs::File::create(dir.join(format!("{stem}.c2.pgm")))?;
                field.write_pgm_rescaled(std::io::BufWriter::new(pgm))?;
                let bin = std::fs::File::create(dir.join(format!("{stem}.c2.f64")))?;
                field.write_f64_binary(std::io::BufWriter::new(bin))?;
            }
            let snapshot = correlation::shift_snapshot(&field);
            let (tensor, report) = effective_conductivity(&img, &law, &opts)?;

            // Bounds sanity on every labelled sample.
            let f_b = img.volume_fraction();
            let (lo, hi) = tensor.eigenvalues();
            let reuss = law.harmonic_mean(f_b);
            let voigt = law.arithmetic_mean(f_b);
            let slack = 1e-6 * law.kappa_a;
            if lo < reuss - slack || hi > voigt + slack {
                return Err(Error::NonFiniteField(format!(
                    "label outside mixture bounds: eigenvalues ({lo}, {hi}) vs [{reuss}, {voigt}] for {}",
                    path.display()
                )));
            }

            let rel_path = path
                .strip_prefix(&manifest_dir)
                .map(|p| p.to_string_lossy().into_owned())
                .unwrap_or_else(|_| path.to_string_lossy().into_owned());
            let record = DatasetRecord {
                image_path: rel_path,
                f_b,
                resolution: img.resolution(),
                contrast: args.contrast,
                kappa_voigt: to_voigt(&tensor).0,
                solver_residual: report.residuals[0].max(report.residuals[1]),
                seed: *seed,
                config_hash: hash.clone(),
            };
            Ok((record, snapshot.into_values()))
        })
        .collect::<Result<_>>()?;

    let records: Vec<DatasetRecord> = results.iter().map(|(r, _)| r.clone()).collect();
    write_manifest(&args.out, &records)?;
    if !args.no_snapshots {
        let dim = results.first().map_or(0, |(_, s)| s.len());
        let mut writer =
            SidecarWriter::create(&sidecar_path(&args.out), dim, results.len() as u64)?;
        for (_, snapshot) in &results {
            writer.append(snapshot)?;
        }
        writer.finish(results.len() as u64)?;
    }
    if !quiet {
        eprintln!(
            "homogenize: labelled {} samples into {}",
            records.len(),
            args.out.display()
        );
    }
    Ok(())
}
