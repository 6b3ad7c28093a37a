use crate::common::{self, ImageEntry};
use microkappa_core::error::Result;
use microkappa_core::microgen::{self, Morphology};
use rayon::prelude::*;
use serde::Serialize;
use std::path::PathBuf;

/// Generate microstructure images from a class spec.
#[derive(Debug, clap::Args, Serialize)]
pub struct GenerateArgs {
    /// Class spec JSON (morphology, resolution, parameter ranges).
    #[arg(long)]
    pub spec: PathBuf,
    /// Master seed; sample k uses sub-stream k.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of images to generate.
    #[arg(long)]
    pub count: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write binary PGM next to each text image.
    #[arg(long, default_value_t = false)]
    pub pgm: bool,
    /// First sample index (later batches of the same seed stay disjoint).
    #[arg(long, default_value_t = 0)]
    pub start_index: u64,
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    command: &'static str,
    args: &'a GenerateArgs,
    class: &'a microkappa_core::microgen::ClassSpec,
}

pub fn run(args: &GenerateArgs, quiet: bool) -> Result<()> {
    let class = common::load_class_spec(&args.spec)?;
    std::fs::create_dir_all(&args.out)?;
    let hash = common::echo_config(
        &args.out,
        &ResolvedConfig {
            command: "generate",
            args,
            class: &class,
        },
    )?;

    let entries: Vec<ImageEntry> = (0..args.count)
        .into_par_iter()
        .map(|k| -> Result<ImageEntry> {
            let index = args.start_index + k;
            let spec = class.instantiate(args.seed, index);
            let img = microgen::generate(&spec)?;
            let name = format!("img_{index:06}.txt");
            let file = std::fs::File::create(args.out.join(&name))?;
            img.write_text(std::io::BufWriter::new(file))?;
            if args.pgm {
                let pgm_name = format!("img_{index:06}.pgm");
                let file = std::fs::File::create(args.out.join(pgm_name))?;
                img.write_pgm(std::io::BufWriter::new(file))?;
            }
            Ok(ImageEntry {
                index,
                path: name,
                seed: spec.seed,
                target_vf: spec.target_vf,
                achieved_vf: img.volume_fraction(),
                overlap: spec.overlap,
                morphology: match spec.morphology {
                    Morphology::Circle => "circle".into(),
                    Morphology::Rectangle => "rectangle".into(),
                    Morphology::Mixed => "mixed".into(),
                },
                config_hash: hash.clone(),
            })
        })
        .collect::<Result<_>>()?;

    common::write_image_manifest(&args.out, &entries)?;
    if !quiet {
        eprintln!(
            "generate: wrote {} images to {}",
            entries.len(),
            args.out.display()
        );
    }
    Ok(())
}
