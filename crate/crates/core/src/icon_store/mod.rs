//! Icon ingestion, normalization, manifests and deterministic sampling.

mod normalize;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use normalize::{glyph_radius, normalize_svg, parse_outlines, polygon, Outline, PADDING, UNIT_VIEWBOX};

/// Icons required per category in the test/validation collection.
pub const CURATED_PER_CATEGORY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IconSource {
    /// Curated icons reserved for the test and validation splits.
    TestValCollection,
    /// Bulk icons used only for training.
    TrainCollection,
}

impl FromStr for IconSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "testval" | "testvalcollection" | "curated" => Ok(Self::TestValCollection),
            "train" | "traincollection" | "training" => Ok(Self::TrainCollection),
            _ => Err(format!("unknown icon source `{s}` (expected testval or train)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Artificial,
    Natural,
    Symbolic,
    Uncategorized,
}

impl Category {
    pub const CURATED: [Category; 3] = [Category::Artificial, Category::Natural, Category::Symbolic];

    pub fn name(self) -> &'static str {
        match self {
            Category::Artificial => "Artificial",
            Category::Natural => "Natural",
            Category::Symbolic => "Symbolic",
            Category::Uncategorized => "Uncategorized",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Category::Artificial,
            Category::Natural,
            Category::Symbolic,
            Category::Uncategorized,
        ]
        .into_iter()
        .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// A normalized vector glyph. `document` is an SVG whose viewbox is the unit
/// square ([`UNIT_VIEWBOX`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IconAsset {
    pub id: String,
    pub source: IconSource,
    pub category: Category,
    pub document: String,
}

impl IconAsset {
    /// Normalizes `bytes` and wraps them as an asset.
    pub fn from_svg(
        id: impl Into<String>,
        source: IconSource,
        category: Category,
        bytes: &[u8],
    ) -> Result<Self, String> {
        let document = normalize_svg(bytes)?;
        Ok(Self {
            id: id.into(),
            source,
            category,
            document: String::from_utf8(document).map_err(|e| e.to_string())?,
        })
    }

    /// Filled outlines of the glyph in unit-square coordinates.
    pub fn outlines(&self) -> Result<Vec<Outline>, String> {
        parse_outlines(self.document.as_bytes())
    }
}

#[derive(Debug, Error)]
pub enum IconError {
    #[error("directory {0} contains no files")]
    EmptyDirectory(PathBuf),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("test/validation collection needs {expected} icons per category, found {found:?}")]
    CategoryCountViolation {
        expected: usize,
        found: BTreeMap<Category, usize>,
    },
    #[error("duplicate icon id `{0}`")]
    DuplicateId(String),
    #[error("curated icon `{0}` has no semantic category")]
    Uncategorized(String),
    #[error("manifest checksum mismatch: footer says {stored}, content hashes to {computed}")]
    ChecksumMismatch { stored: String, computed: String },
    #[error("malformed manifest line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("category table line {line}: {reason}")]
    CategoryTable { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A file that could not be turned into an asset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseFailure {
    pub file: PathBuf,
    pub reason: String,
}

/// Ordered icon collection with a checksum over ids, order and categories.
#[derive(Debug, Clone, PartialEq)]
pub struct IconManifest {
    assets: Vec<IconAsset>,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct Footer {
    checksum: String,
    total: usize,
    categories: BTreeMap<Category, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ManifestLine {
    Footer { footer: Footer },
    Asset(IconAsset),
}

fn checksum_of(assets: &[IconAsset]) -> String {
    let mut h = Sha256::new();
    for a in assets {
        h.update(a.id.as_bytes());
        h.update(b"\t");
        h.update(a.category.name().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

impl IconManifest {
    /// Builds a manifest keeping the given order. Ids must be unique.
    pub fn new(assets: Vec<IconAsset>) -> Result<Self, IconError> {
        let mut seen = std::collections::HashSet::new();
        for a in &assets {
            if !seen.insert(a.id.as_str()) {
                return Err(IconError::DuplicateId(a.id.clone()));
            }
        }
        let checksum = checksum_of(&assets);
        Ok(Self { assets, checksum })
    }

    pub fn assets(&self) -> &[IconAsset] {
        &self.assets
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn get(&self, id: &str) -> Option<&IconAsset> {
        self.assets.iter().find(|a| a.id == id)
    }

    pub fn category_counts(&self) -> BTreeMap<Category, usize> {
        let mut counts = BTreeMap::new();
        for a in &self.assets {
            *counts.entry(a.category).or_insert(0) += 1;
        }
        counts
    }

    /// Checks the curated-collection cardinality: every asset categorized
    /// and exactly `per_category` per category.
    pub fn check_curated(&self, per_category: usize) -> Result<(), IconError> {
        if let Some(a) = self.assets.iter().find(|a| a.category == Category::Uncategorized) {
            return Err(IconError::Uncategorized(a.id.clone()));
        }
        let counts = self.category_counts();
        let ok = Category::CURATED
            .iter()
            .all(|c| counts.get(c).copied().unwrap_or(0) == per_category);
        if !ok {
            return Err(IconError::CategoryCountViolation {
                expected: per_category,
                found: counts,
            });
        }
        Ok(())
    }

    /// Writes one JSON asset per line followed by a checksum footer line.
    pub fn write(&self, path: &Path) -> Result<(), IconError> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for a in &self.assets {
            serde_json::to_writer(&mut w, a).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        let footer = ManifestLine::Footer {
            footer: Footer {
                checksum: self.checksum.clone(),
                total: self.assets.len(),
                categories: self.category_counts(),
            },
        };
        serde_json::to_writer(&mut w, &footer).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Reads a manifest written by [`IconManifest::write`], verifying the footer.
    pub fn read(path: &Path) -> Result<Self, IconError> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut assets = Vec::new();
        let mut footer = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ManifestLine = serde_json::from_str(&line).map_err(|e| IconError::Malformed {
                line: i + 1,
                reason: e.to_string(),
            })?;
            match parsed {
                ManifestLine::Asset(a) => assets.push(a),
                ManifestLine::Footer { footer: f } => footer = Some(f),
            }
        }
        let manifest = Self::new(assets)?;
        let footer = footer.ok_or(IconError::Malformed {
            line: 0,
            reason: "missing checksum footer".into(),
        })?;
        if footer.checksum != manifest.checksum {
            return Err(IconError::ChecksumMismatch {
                stored: footer.checksum,
                computed: manifest.checksum,
            });
        }
        Ok(manifest)
    }
}

/// Icon id to semantic category.
pub type CategoryMap = HashMap<String, Category>;

/// Reads a two-column (id, category) table, comma or tab delimited. A header
/// row whose second column is not a category name is skipped.
pub fn read_category_map(path: &Path) -> Result<CategoryMap, IconError> {
    let text = fs::read_to_string(path)?;
    let delimiter = if text.lines().next().is_some_and(|l| l.contains('\t')) {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut map = CategoryMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| IconError::CategoryTable {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if row.len() < 2 {
            return Err(IconError::CategoryTable {
                line: i + 1,
                reason: "expected two columns".into(),
            });
        }
        match row[1].parse::<Category>() {
            Ok(c) => {
                map.insert(row[0].to_string(), c);
            }
            Err(_) if i == 0 => continue,
            Err(reason) => return Err(IconError::CategoryTable { line: i + 1, reason }),
        }
    }
    Ok(map)
}

/// Outcome of ingesting a directory: the manifest plus every file that was
/// rejected.
#[derive(Debug)]
pub struct IngestReport {
    pub manifest: IconManifest,
    pub failures: Vec<ParseFailure>,
}

fn is_svg(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("svg"))
}

/// Ingests every file of `dir` (non-recursive). Assets are keyed by file stem
/// and sorted by id. Curated collections must come out at exactly 100 icons
/// in each of the three categories.
pub fn ingest_dir(
    dir: &Path,
    source: IconSource,
    category_map: Option<&CategoryMap>,
) -> Result<IngestReport, IconError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .filter(|p| {
            !p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('.'))
        })
        .collect();
    if files.is_empty() {
        return Err(IconError::EmptyDirectory(dir.to_path_buf()));
    }
    files.sort();

    let parsed: Vec<Result<IconAsset, ParseFailure>> = files
        .par_iter()
        .map(|file| {
            let fail = |reason: String| ParseFailure {
                file: file.clone(),
                reason,
            };
            if !is_svg(file) {
                return Err(fail("not an .svg document".into()));
            }
            let id = file
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| fail("file name is not valid UTF-8".into()))?
                .to_string();
            let bytes = fs::read(file).map_err(|e| fail(e.to_string()))?;
            let category = category_map
                .and_then(|m| m.get(&id).copied())
                .unwrap_or(Category::Uncategorized);
            IconAsset::from_svg(id, source, category, &bytes).map_err(fail)
        })
        .collect();

    let mut assets = Vec::new();
    let mut failures = Vec::new();
    for r in parsed {
        match r {
            Ok(a) => assets.push(a),
            Err(f) => failures.push(f),
        }
    }
    assets.sort_by(|a, b| a.id.cmp(&b.id));
    let manifest = IconManifest::new(assets)?;
    if source == IconSource::TestValCollection {
        match manifest.check_curated(CURATED_PER_CATEGORY) {
            Ok(()) => {}
            Err(IconError::Uncategorized(_)) => {
                return Err(IconError::CategoryCountViolation {
                    expected: CURATED_PER_CATEGORY,
                    found: manifest.category_counts(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(IngestReport { manifest, failures })
}

/// Uniform draw over the manifest's assets.
pub fn sample_icon<'a, R: Rng + ?Sized>(manifest: &'a IconManifest, rng: &mut R) -> Result<&'a IconAsset, IconError> {
    if manifest.is_empty() {
        return Err(IconError::EmptyManifest);
    }
    Ok(&manifest.assets[rng.random_range(0..manifest.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn asset(id: &str, category: Category) -> IconAsset {
        IconAsset::from_svg(
            id,
            IconSource::TrainCollection,
            category,
            synthetic::icon_svg(7).as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn checksum_tracks_id_order_and_category() {
        let a = IconManifest::new(vec![asset("a", Category::Natural), asset("b", Category::Symbolic)]).unwrap();
        let reordered = IconManifest::new(vec![asset("b", Category::Symbolic), asset("a", Category::Natural)]).unwrap();
        let recategorized =
            IconManifest::new(vec![asset("a", Category::Artificial), asset("b", Category::Symbolic)]).unwrap();
        let renamed = IconManifest::new(vec![asset("a", Category::Natural), asset("c", Category::Symbolic)]).unwrap();
        let same = IconManifest::new(vec![asset("a", Category::Natural), asset("b", Category::Symbolic)]).unwrap();
        assert_eq!(a.checksum(), same.checksum());
        for other in [&reordered, &recategorized, &renamed] {
            assert_ne!(a.checksum(), other.checksum());
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = IconManifest::new(vec![asset("a", Category::Natural), asset("a", Category::Natural)]);
        assert!(matches!(err, Err(IconError::DuplicateId(_))));
    }

    #[test]
    fn sample_from_singleton_and_empty() {
        let one = IconManifest::new(vec![asset("only", Category::Natural)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_icon(&one, &mut rng).unwrap().id, "only");
        let empty = IconManifest::new(vec![]).unwrap();
        assert!(matches!(sample_icon(&empty, &mut rng), Err(IconError::EmptyManifest)));
    }

    #[test]
    fn sample_is_determined_by_stream() {
        let m = IconManifest::new((0..50).map(|i| asset(&format!("i{i:02}"), Category::Natural)).collect()).unwrap();
        let a = sample_icon(&m, &mut ChaCha8Rng::seed_from_u64(11)).unwrap().id.clone();
        let b = sample_icon(&m, &mut ChaCha8Rng::seed_from_u64(11)).unwrap().id.clone();
        assert_eq!(a, b);
    }

    #[test]
    fn parses_source_and_category_names() {
        assert_eq!("testval".parse::<IconSource>().unwrap(), IconSource::TestValCollection);
        assert_eq!("train".parse::<IconSource>().unwrap(), IconSource::TrainCollection);
        assert_eq!("natural".parse::<Category>().unwrap(), Category::Natural);
        assert!("plant".parse::<Category>().is_err());
    }
}
