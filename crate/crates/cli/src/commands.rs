use std::io::Write;
use std::path::Path;

use clap::Args;
use scr_core::analysis::{self, write_csv};
use scr_core::container::OVERHEAD_BYTES;
use scr_core::mask::selection_stats;
use scr_core::pipeline::{decode_bytes, encode_traced, EncodeOptions};
use scr_core::reference::{reference_model, reference_weights, synthetic_corpus, ReferenceConfig};
use scr_core::{psnr, Image, MaskMode, ScrBitstream};

use crate::io::{create, load_image, load_weights, read, save_image, write};
use crate::CliError;

#[derive(Args, Debug)]
pub struct SyntheticArgs {
    /// Number of synthetic images when no --image is given.
    #[arg(long, default_value_t = 6)]
    synthetic: usize,
    /// Side length of the synthetic images.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    corpus_seed: u64,
}

fn corpus(images: &[std::path::PathBuf], synthetic: &SyntheticArgs) -> Result<Vec<Image>, CliError> {
    if images.is_empty() {
        if synthetic.synthetic == 0 || synthetic.size == 0 {
            return Err(CliError::Usage("empty corpus".into()));
        }
        return Ok(synthetic_corpus(
            synthetic.corpus_seed,
            synthetic.synthetic,
            synthetic.size,
            synthetic.size,
        ));
    }
    images.iter().map(|p| load_image(p)).collect()
}

pub fn encode(
    input: &Path,
    weights: &Path,
    quality: f64,
    mask_mode: MaskMode,
    zero_mean: bool,
    output: &Path,
) -> Result<(), CliError> {
    let w = load_weights(weights)?;
    let img = load_image(input)?;
    let opts = EncodeOptions::new(quality)
        .with_mask_mode(mask_mode)
        .with_zero_mean(zero_mean);
    let trace = encode_traced(&img, &w, &opts)?;
    let bytes = trace.bitstream.write()?;
    write(output, &bytes)?;
    println!(
        "{} bytes, {:.4} bpp, q {}, selected {}/{} ({:.2}%)",
        bytes.len(),
        (bytes.len() * 8) as f64 / img.pixel_count() as f64,
        trace.quality.value(),
        trace.mask.popcount(),
        trace.mask.shape().len(),
        100.0 * selection_stats(&trace.mask)
    );
    Ok(())
}

pub fn decode(input: &Path, weights: &Path, output: &Path, reference: Option<&Path>) -> Result<(), CliError> {
    let w = load_weights(weights)?;
    let bytes = read(input)?;
    let trace = decode_bytes(&bytes, &w)?;
    save_image(output, &trace.image)?;
    let t = trace.timing;
    println!(
        "{}x{}, {:.4} bpp, {} latent symbols",
        trace.image.width(),
        trace.image.height(),
        (bytes.len() * 8) as f64 / trace.image.pixel_count() as f64,
        trace.y_symbols_decoded
    );
    println!(
        "decode {:.2?}: hyper_net {:.2?}, mask_gen {:.2?}, entropy_decode {:.2?}, reshape {:.2?}, decoder_net {:.2?}",
        t.total(),
        t.hyper_net,
        t.mask_gen,
        t.entropy_decode,
        t.reshape,
        t.decoder_net
    );
    if let Some(path) = reference {
        println!("psnr {:.3} dB", psnr(&load_image(path)?, &trace.image)?);
    }
    Ok(())
}

pub fn bench(
    weights: &Path,
    images: &[std::path::PathBuf],
    synthetic: &SyntheticArgs,
    quality: &[f64],
    repetitions: usize,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let w = load_weights(weights)?;
    let rows = analysis::bench_decode(&corpus(images, synthetic)?, &w, quality, repetitions)?;
    match output {
        Some(path) => write_csv(create(path)?, &rows)?,
        None => write_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

pub fn analyze(
    weights: &Path,
    images: &[std::path::PathBuf],
    synthetic: &SyntheticArgs,
    out_dir: &Path,
) -> Result<(), CliError> {
    let w = load_weights(weights)?;
    let a = analysis::analyze(&corpus(images, synthetic)?, &w)?;
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    write_csv(create(&out_dir.join("rates.csv"))?, &a.rates)?;
    write_csv(create(&out_dir.join("reuse.csv"))?, &a.reuse)?;
    write_csv(create(&out_dir.join("correlation.csv"))?, &a.correlations)?;
    write_csv(create(&out_dir.join("manifest.csv"))?, &a.manifest_rows())?;
    println!("{}", a.manifest);
    Ok(())
}

pub fn inspect(file: &Path) -> Result<(), CliError> {
    let bytes = read(file)?;
    let bs = ScrBitstream::read(&bytes)?;
    let h = &bs.header;
    let pixels = usize::from(h.width) * usize::from(h.height);
    let mut out = std::io::stdout().lock();
    let lines = [
        format!("size        {} bytes", bytes.len()),
        format!("image       {}x{}", h.width, h.height),
        format!("quality     {} (raw {:#06x})", h.quality(), h.quality_fixed),
        format!("mask mode   {}", h.mask_mode),
        format!("zero mean   {}", h.zero_mean),
        format!(
            "latent      {}x{}x{}",
            h.latent.channels, h.latent.height, h.latent.width
        ),
        format!("hyper       {}x{}x{}", h.hyper.channels, h.hyper.height, h.hyper.width),
        format!("model id    {}", h.model_id),
        format!("z stream    {} bytes", bs.z_stream.bytes().len()),
        format!("y stream    {} bytes", bs.y_stream.bytes().len()),
        format!("overhead    {OVERHEAD_BYTES} bytes"),
        format!("bpp         {:.4}", (bytes.len() * 8) as f64 / pixels as f64),
    ];
    for line in lines {
        writeln!(out, "{line}").map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        })?;
    }
    Ok(())
}

pub fn reference(output: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let w = match seed {
        Some(seed) => reference_weights(&ReferenceConfig {
            seed,
            ..ReferenceConfig::default()
        })?,
        None => reference_model(),
    };
    write(output, &w.to_bytes())?;
    println!("{} ({} parameters)", w.id(), w.manifest().total());
    Ok(())
}
