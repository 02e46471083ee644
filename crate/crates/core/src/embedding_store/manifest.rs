//! JSON dataset manifest.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding_store::{
    format_word_vectors, load_word_vectors, read_tensor, write_tensor, Dataset, ImageRecord, Pair,
    Split,
};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FEATURE_DIR: &str = "features";
const WORDS_FILE: &str = "word_vectors.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub attributes: Vec<String>,
    pub objects: Vec<String>,
    pub pairs: Vec<[String; 2]>,
    pub images: Vec<ManifestImage>,
    /// Relative paths resolve against the manifest's directory.
    pub word_vectors: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestImage {
    pub id: String,
    pub attribute: String,
    pub object: String,
    pub feature_file: String,
    pub split: Split,
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Loads a dataset from a manifest file, or from a directory containing
/// `manifest.json`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let path = manifest_path(path);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));

    let attr_ix: HashMap<&str, usize> = manifest
        .attributes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let obj_ix: HashMap<&str, usize> = manifest
        .objects
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let resolve = |record: &str, attr: &str, obj: &str| -> Result<Pair> {
        let a = attr_ix
            .get(attr)
            .ok_or_else(|| Error::load(record, format!("unknown attribute {attr:?}")))?;
        let o = obj_ix
            .get(obj)
            .ok_or_else(|| Error::load(record, format!("unknown object {obj:?}")))?;
        Ok(Pair { attr: *a, obj: *o })
    };

    let pairs = manifest
        .pairs
        .iter()
        .map(|[a, o]| resolve(&format!("pair [{a:?}, {o:?}]"), a, o))
        .collect::<Result<Vec<_>>>()?;

    let words = load_word_vectors(
        &base.join(&manifest.word_vectors),
        &manifest.attributes,
        &manifest.objects,
    )?;

    let mut images = Vec::with_capacity(manifest.images.len());
    for m in &manifest.images {
        let record = format!("image {:?}", m.id);
        let pair = resolve(&record, &m.attribute, &m.object)?;
        let feature_path = base.join(&m.feature_file);
        if !feature_path.is_file() {
            return Err(Error::load(
                record,
                format!("missing feature file {}", feature_path.display()),
            ));
        }
        let feature = read_tensor(&feature_path).map_err(|e| Error::load(record, e.to_string()))?;
        images.push(ImageRecord {
            id: m.id.clone(),
            attr: pair.attr,
            obj: pair.obj,
            split: m.split,
            feature,
        });
    }

    Dataset::new(manifest.attributes, manifest.objects, pairs, words, images)
}

/// Writes `manifest.json`, `word_vectors.txt`, and one tensor file per image
/// under `features/` in `dir`.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let feature_dir = dir.join(FEATURE_DIR);
    std::fs::create_dir_all(&feature_dir).map_err(|e| Error::io(&feature_dir, e))?;

    let vocab = dataset.vocab();
    let mut images = Vec::with_capacity(dataset.images().len());
    for img in dataset.images() {
        if img.id.contains(['/', '\\']) || img.id.starts_with('.') {
            return Err(Error::load(
                format!("image {:?}", img.id),
                "id is not usable as a file name",
            ));
        }
        let rel = format!("{FEATURE_DIR}/{}.czt", img.id);
        write_tensor(&dir.join(&rel), &img.feature)?;
        images.push(ManifestImage {
            id: img.id.clone(),
            attribute: vocab.attributes()[img.attr].clone(),
            object: vocab.objects()[img.obj].clone(),
            feature_file: rel,
            split: img.split,
        });
    }

    let words_path = dir.join(WORDS_FILE);
    let text = format_word_vectors(vocab.attributes(), vocab.objects(), dataset.words());
    std::fs::write(&words_path, text).map_err(|e| Error::io(&words_path, e))?;

    let manifest = Manifest {
        attributes: vocab.attributes().to_vec(),
        objects: vocab.objects().to_vec(),
        pairs: vocab
            .pairs()
            .iter()
            .map(|p| [vocab.attributes()[p.attr].clone(), vocab.objects()[p.obj].clone()])
            .collect(),
        images,
        word_vectors: WORDS_FILE.to_string(),
    };
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}
