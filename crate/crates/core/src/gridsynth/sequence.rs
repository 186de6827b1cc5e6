use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::RgbImage;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{render_cell, Glyph};
use super::{sample_spec_with_retries, GenError, BLOCK_RANGE, GENERATOR_VERSION};
use crate::icon_store::{sample_icon, IconAsset, IconManifest};
use crate::perturb::PerturbationSpec;
use crate::rng;

/// Allowed image counts per sequence.
pub const SEQUENCE_LEN_RANGE: (usize, usize) = (8, 15);
/// Upper bound of the anomaly count drawn per sequence (zero is allowed).
pub const MAX_SEQUENCE_ANOMALIES: usize = 2;
/// First global stream index of sequence stimuli, above every grid split.
pub const SEQUENCE_OFFSET: u64 = 3_000_000;

/// Metadata of a sequence stimulus: `n` separate cell images of which the
/// ones at `odd_indices` (1-based, ascending) carry the perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub icon_id: String,
    pub n: usize,
    pub block_px: u32,
    pub odd_indices: Vec<usize>,
    pub spec: PerturbationSpec,
    pub seed_index: u64,
    pub generator_version: String,
    pub image_paths: Vec<String>,
}

impl SequenceRecord {
    /// Renders the `n` images from metadata alone.
    pub fn render(&self, glyph: &Glyph) -> Result<Vec<RgbImage>, GenError> {
        let (base_fill, odd_fill) = self.spec.display_fills();
        let base = render_cell(glyph, self.block_px, base_fill, None)?;
        let odd = render_cell(glyph, self.block_px, odd_fill, Some(&self.spec))?;
        Ok((1..=self.n)
            .map(|i| {
                if self.odd_indices.contains(&i) {
                    odd.clone()
                } else {
                    base.clone()
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct SequenceStimulus {
    pub record: SequenceRecord,
    pub images: Vec<RgbImage>,
}

/// Samples sequence metadata. All anomalous positions share one perturbation
/// so the distractors keep a single base appearance.
pub fn sample_sequence<R: Rng + ?Sized>(
    rng: &mut R,
    icon: &IconAsset,
    k: usize,
    n: usize,
    anomaly_count: usize,
) -> Result<SequenceRecord, GenError> {
    if !(SEQUENCE_LEN_RANGE.0..=SEQUENCE_LEN_RANGE.1).contains(&n) {
        return Err(GenError::InvalidSequence(format!(
            "length {n} outside {}..={}",
            SEQUENCE_LEN_RANGE.0, SEQUENCE_LEN_RANGE.1
        )));
    }
    if anomaly_count > n {
        return Err(GenError::InvalidSequence(format!(
            "{anomaly_count} anomalies requested for {n} images"
        )));
    }
    let block_px = rng.random_range(BLOCK_RANGE.0..=BLOCK_RANGE.1);
    let mut odd_indices: Vec<usize> = index::sample(rng, n, anomaly_count)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    odd_indices.sort_unstable();
    let spec = sample_spec_with_retries(rng, k, None)?;
    Ok(SequenceRecord {
        id: String::new(),
        icon_id: icon.id.clone(),
        n,
        block_px,
        odd_indices,
        spec,
        seed_index: 0,
        generator_version: GENERATOR_VERSION.to_string(),
        image_paths: Vec::new(),
    })
}

/// Samples and renders a sequence stimulus.
pub fn render_sequence<R: Rng + ?Sized>(
    rng: &mut R,
    icon: &IconAsset,
    k: usize,
    n: usize,
    anomaly_count: usize,
) -> Result<SequenceStimulus, GenError> {
    let record = sample_sequence(rng, icon, k, n, anomaly_count)?;
    let images = record.render(&Glyph::new(icon)?)?;
    Ok(SequenceStimulus { record, images })
}

/// Regenerates sequence `local` from the master seed: icon, length in
/// [`SEQUENCE_LEN_RANGE`], 0 to [`MAX_SEQUENCE_ANOMALIES`] anomalies and a
/// uniform attribute count in 1..=4.
pub fn regenerate_sequence(master_seed: u64, pool: &IconManifest, local: usize) -> Result<SequenceRecord, GenError> {
    let seed_index = SEQUENCE_OFFSET + local as u64;
    let mut rng = rng::stream(master_seed, seed_index);
    let icon = sample_icon(pool, &mut rng)?;
    let n = rng.random_range(SEQUENCE_LEN_RANGE.0..=SEQUENCE_LEN_RANGE.1);
    let anomalies = rng.random_range(0..=MAX_SEQUENCE_ANOMALIES);
    let k = rng.random_range(1..=4);
    let mut record = sample_sequence(&mut rng, icon, k, n, anomalies)?;
    record.id = format!("seq-{local:05}");
    record.seed_index = seed_index;
    record.image_paths = (1..=n).map(|i| format!("images/{}_{i}.png", record.id)).collect();
    Ok(record)
}

pub fn build_sequences(master_seed: u64, pool: &IconManifest, count: usize) -> Result<Vec<SequenceRecord>, GenError> {
    (0..count)
        .into_par_iter()
        .map(|i| regenerate_sequence(master_seed, pool, i))
        .collect()
}

/// Renders every sequence into `dir/images/` and writes `dir/sequences.jsonl`.
pub fn write_sequences(dir: &Path, records: &[SequenceRecord], pool: &IconManifest) -> Result<(), GenError> {
    fs::create_dir_all(dir.join("images"))?;
    let mut glyphs: HashMap<&str, Glyph> = HashMap::new();
    for r in records {
        if !glyphs.contains_key(r.icon_id.as_str()) {
            let icon = pool
                .get(&r.icon_id)
                .ok_or_else(|| GenError::UnknownIcon(r.icon_id.clone()))?;
            glyphs.insert(&r.icon_id, Glyph::new(icon)?);
        }
    }
    records.par_iter().try_for_each(|r| -> Result<(), GenError> {
        for (img, path) in r.render(&glyphs[r.icon_id.as_str()])?.iter().zip(&r.image_paths) {
            img.save_with_format(dir.join(path), image::ImageFormat::Png)?;
        }
        Ok(())
    })?;
    let mut w = BufWriter::new(fs::File::create(dir.join("sequences.jsonl"))?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| GenError::Metadata(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sequences(path: &Path) -> Result<Vec<SequenceRecord>, GenError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| GenError::Metadata(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icon_store::{synthetic, IconSource};

    #[test]
    fn regenerated_sequences_are_stable_and_in_range() {
        let pool = synthetic::manifest("glyph", 10, 2, IconSource::TestValCollection);
        let a = build_sequences(4, &pool, 30).unwrap();
        let b = build_sequences(4, &pool, 30).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!((SEQUENCE_LEN_RANGE.0..=SEQUENCE_LEN_RANGE.1).contains(&r.n));
            assert!(r.odd_indices.len() <= MAX_SEQUENCE_ANOMALIES);
            assert!(r.odd_indices.windows(2).all(|w| w[0] < w[1]));
            assert!(r.odd_indices.iter().all(|k| (1..=r.n).contains(k)));
            assert_eq!(r.image_paths.len(), r.n);
            assert!(r.image_paths[0].ends_with(&format!("{}_1.png", r.id)));
        }
        assert!(a.iter().any(|r| r.odd_indices.is_empty()));
        assert!(a.iter().any(|r| r.odd_indices.len() == 2));
    }

    #[test]
    fn written_sequences_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pool = synthetic::manifest("glyph", 4, 2, IconSource::TestValCollection);
        let records = build_sequences(9, &pool, 3).unwrap();
        write_sequences(dir.path(), &records, &pool).unwrap();
        assert_eq!(read_sequences(&dir.path().join("sequences.jsonl")).unwrap(), records);
        for r in &records {
            let imgs: Vec<_> = r
                .image_paths
                .iter()
                .map(|p| image::open(dir.path().join(p)).unwrap().to_rgb8())
                .collect();
            let base = (1..=r.n).find(|k| !r.odd_indices.contains(k)).unwrap();
            for (i, img) in imgs.iter().enumerate() {
                assert_eq!(*img == imgs[base - 1], !r.odd_indices.contains(&(i + 1)));
            }
        }
    }
}
