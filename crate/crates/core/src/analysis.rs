//! Decode-time benchmarking and selection analytics over a corpus.

use std::io::Write;

use serde::Serialize;

use crate::error::{Result, ScrError};
use crate::image::Image;
use crate::mask::{reuse_ratio, selection_stats, MaskMode};
use crate::pipeline::{decode_bytes, encode_traced, round_trip_report, DecodeTiming, EncodeOptions};
use crate::tensor::BinaryMask;
use crate::weights::{ParameterManifest, WeightContainer};

pub const MIN_REPETITIONS: usize = 10;

/// Which mask a benchmark row was decoded with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchRun {
    Selective,
    /// All-ones mask on the same latents.
    FullMask,
}

/// Mean per-image decode time at one quality level, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub q: f64,
    pub run: BenchRun,
    pub repetitions: usize,
    pub images: usize,
    pub selection_ratio: f64,
    /// Latent symbols decoded per image.
    pub symbols: f64,
    pub total_mean: f64,
    pub total_std: f64,
    pub hyper_net: f64,
    pub mask_gen: f64,
    pub entropy_decode: f64,
    pub reshape: f64,
    pub decoder_net: f64,
}

#[derive(Default)]
struct Accumulator {
    totals: Vec<f64>,
    stages: [f64; 5],
}

impl Accumulator {
    fn push(&mut self, t: &DecodeTiming, images: usize) {
        let n = images as f64;
        self.totals.push(t.total().as_secs_f64() / n);
        let parts = [t.hyper_net, t.mask_gen, t.entropy_decode, t.reshape, t.decoder_net];
        for (acc, d) in self.stages.iter_mut().zip(parts) {
            *acc += d.as_secs_f64() / n;
        }
    }

    fn row(&self, q: f64, run: BenchRun, images: usize, ratio: f64, symbols: f64) -> BenchRow {
        let reps = self.totals.len() as f64;
        let (mean, std) = mean_std(&self.totals);
        let s = self.stages.map(|v| v / reps);
        BenchRow {
            q,
            run,
            repetitions: self.totals.len(),
            images,
            selection_ratio: ratio,
            symbols,
            total_mean: mean,
            total_std: std,
            hyper_net: s[0],
            mask_gen: s[1],
            entropy_decode: s[2],
            reshape: s[3],
            decoder_net: s[4],
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn add(acc: &mut DecodeTiming, t: &DecodeTiming) {
    acc.hyper_net += t.hyper_net;
    acc.mask_gen += t.mask_gen;
    acc.entropy_decode += t.entropy_decode;
    acc.reshape += t.reshape;
    acc.decoder_net += t.decoder_net;
}

/// Times decoding of every image at every `q`, next to a control that
/// decodes the same latents under an all-ones mask.
///
/// Runs on a single worker thread. One extra warm-up repetition is run
/// first and discarded; selective and control decodes alternate within each
/// repetition.
pub fn bench_decode(
    corpus: &[Image],
    weights: &WeightContainer,
    q_list: &[f64],
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    if repetitions < MIN_REPETITIONS {
        return Err(ScrError::InvalidValue(format!(
            "at least {MIN_REPETITIONS} repetitions required, got {repetitions}"
        )));
    }
    if corpus.is_empty() {
        return Err(ScrError::InvalidValue("empty corpus".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| ScrError::InvalidValue(e.to_string()))?;
    pool.install(|| {
        let mut rows = Vec::with_capacity(2 * q_list.len());
        for &q in q_list {
            let mut streams = Vec::with_capacity(corpus.len());
            let (mut ratio, mut symbols, mut full_symbols) = (0.0, 0.0, 0.0);
            for img in corpus {
                let sel = encode_traced(img, weights, &EncodeOptions::new(q))?;
                let full = encode_traced(img, weights, &EncodeOptions::new(q).with_mask_mode(MaskMode::Full))?;
                ratio += selection_stats(&sel.mask);
                symbols += sel.mask.popcount() as f64;
                full_symbols += full.mask.popcount() as f64;
                streams.push((sel.bitstream.write()?, full.bitstream.write()?));
            }
            let n = corpus.len();
            let (mut sel_acc, mut full_acc) = (Accumulator::default(), Accumulator::default());
            for rep in 0..=repetitions {
                let (mut ts, mut tf) = (DecodeTiming::default(), DecodeTiming::default());
                for (sel, full) in &streams {
                    add(&mut ts, &decode_bytes(sel, weights)?.timing);
                    add(&mut tf, &decode_bytes(full, weights)?.timing);
                }
                if rep > 0 {
                    sel_acc.push(&ts, n);
                    full_acc.push(&tf, n);
                }
            }
            rows.push(sel_acc.row(q, BenchRun::Selective, n, ratio / n as f64, symbols / n as f64));
            rows.push(full_acc.row(q, BenchRun::FullMask, n, 1.0, full_symbols / n as f64));
        }
        Ok(rows)
    })
}

/// Rate, selection and quality of one image at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub image: usize,
    pub q: f64,
    pub bpp: f64,
    pub selection_ratio: f64,
    pub psnr: f64,
    pub bits_y: u64,
    pub bits_z: u64,
}

/// Corpus-mean share of the elements selected at `q_lo` that remain
/// selected at `q_hi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReuseRow {
    pub q_lo: f64,
    pub q_hi: f64,
    pub reuse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub image: usize,
    /// Pearson correlation of selection ratio against bpp across levels.
    pub ratio_bpp_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestRow {
    pub section: String,
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub rates: Vec<RateRow>,
    pub reuse: Vec<ReuseRow>,
    pub correlations: Vec<CorrelationRow>,
    pub manifest: ParameterManifest,
}

impl Analysis {
    pub fn manifest_rows(&self) -> Vec<ManifestRow> {
        self.manifest
            .sections
            .iter()
            .map(|(s, n)| ManifestRow {
                section: s.clone(),
                parameters: *n,
            })
            .collect()
    }
}

/// Pearson correlation; `None` when either series is constant or the
/// lengths differ.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Encodes and decodes every image at every integer level and collects
/// rate, selection, reuse and parameter statistics.
pub fn analyze(corpus: &[Image], weights: &WeightContainer) -> Result<Analysis> {
    let levels: Vec<f64> = (1..=weights.n_levels()).map(|q| q as f64).collect();
    let mut rates = Vec::new();
    let mut masks: Vec<Vec<BinaryMask>> = Vec::with_capacity(corpus.len());
    let mut correlations = Vec::new();
    for (i, img) in corpus.iter().enumerate() {
        let mut per_q = Vec::with_capacity(levels.len());
        let (mut ratios, mut bpps) = (Vec::new(), Vec::new());
        for &q in &levels {
            let (report, decoded) = round_trip_report(img, weights, &EncodeOptions::new(q))?;
            ratios.push(report.selection_ratio);
            bpps.push(report.bpp);
            rates.push(RateRow {
                image: i,
                q,
                bpp: report.bpp,
                selection_ratio: report.selection_ratio,
                psnr: report.psnr.unwrap_or(f64::NAN),
                bits_y: report.bits_y,
                bits_z: report.bits_z,
            });
            per_q.push(decoded.mask);
        }
        correlations.push(CorrelationRow {
            image: i,
            ratio_bpp_r: pearson(&ratios, &bpps).unwrap_or(f64::NAN),
        });
        masks.push(per_q);
    }
    let mut reuse = Vec::new();
    for lo in 0..levels.len() {
        for hi in lo..levels.len() {
            let mut sum = 0.0;
            for per_q in &masks {
                sum += reuse_ratio(&per_q[lo], &per_q[hi])?;
            }
            reuse.push(ReuseRow {
                q_lo: levels[lo],
                q_hi: levels[hi],
                reuse: if masks.is_empty() {
                    1.0
                } else {
                    sum / masks.len() as f64
                },
            });
        }
    }
    Ok(Analysis {
        rates,
        reuse,
        correlations,
        manifest: weights.manifest(),
    })
}

/// Writes `rows` as CSV with a header line.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| ScrError::Output(e.to_string()))?;
    }
    w.flush().map_err(|e| ScrError::Output(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_known_values() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0; 4]), None);
        // numpy.corrcoef([1,2,3,4],[1,3,2,5])[0,1]
        assert!((pearson(&x, &[1.0, 3.0, 2.0, 5.0]).unwrap() - 0.8315218406202999).abs() < 1e-12);
    }

    #[test]
    fn csv_has_header() {
        let rows = [ReuseRow {
            q_lo: 1.0,
            q_hi: 2.0,
            reuse: 0.5,
        }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "q_lo,q_hi,reuse\n1.0,2.0,0.5\n");
    }

    #[test]
    fn bench_rejects_few_repetitions() {
        let w = crate::reference::reference_model();
        let img = crate::reference::synthetic_image(0, 32, 32);
        assert!(bench_decode(&[img], &w, &[1.0], 3).is_err());
    }
}
