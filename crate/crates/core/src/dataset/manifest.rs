use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor_file::{read_tensor_file, write_tensor_file};
use super::{ProductRecord, ReviewRecord, MAX_LABEL};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub d_t: usize,
    pub d_roi: usize,
    pub products: Vec<ProductEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductEntry {
    pub product_id: String,
    pub text_file: PathBuf,
    pub image_file: PathBuf,
    pub reviews: Vec<ReviewEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub review_id: String,
    pub text_file: PathBuf,
    pub image_file: PathBuf,
    /// Signed so that negative labels are reported rather than failing to parse.
    pub label: i64,
}

/// Reads a manifest and every feature file it references.
///
/// Relative feature paths resolve against the manifest's directory. Products
/// come back in manifest order.
pub fn load_manifest(path: &Path) -> Result<(Manifest, Vec<ProductRecord>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::load(path, format!("invalid manifest: {e}")))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::load(
            path,
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    if manifest.products.is_empty() {
        return Err(Error::load(path, "manifest has no products"));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen_products = HashSet::new();
    let mut seen_reviews = HashSet::new();
    let mut records = Vec::with_capacity(manifest.products.len());

    for p in &manifest.products {
        if !seen_products.insert(p.product_id.as_str()) {
            return Err(Error::load(
                path,
                format!("duplicate product_id `{}`", p.product_id),
            ));
        }
        if p.reviews.is_empty() {
            return Err(Error::load(
                path,
                format!("product `{}` has no reviews", p.product_id),
            ));
        }
        let what = format!("product `{}`", p.product_id);
        let text = load_matrix(base, &p.text_file, manifest.d_t, &what, "text")?;
        let image = load_matrix(base, &p.image_file, manifest.d_roi, &what, "image")?;
        let mut reviews = Vec::with_capacity(p.reviews.len());
        for r in &p.reviews {
            if !seen_reviews.insert(r.review_id.as_str()) {
                return Err(Error::load(
                    path,
                    format!("duplicate review_id `{}`", r.review_id),
                ));
            }
            if !(0..=MAX_LABEL as i64).contains(&r.label) {
                return Err(Error::load(
                    path,
                    format!(
                        "review `{}` has label {} outside 0..={MAX_LABEL}",
                        r.review_id, r.label
                    ),
                ));
            }
            let what = format!("review `{}`", r.review_id);
            reviews.push(ReviewRecord {
                review_id: r.review_id.clone(),
                text_features: load_matrix(base, &r.text_file, manifest.d_t, &what, "text")?,
                image_features: load_matrix(base, &r.image_file, manifest.d_roi, &what, "image")?,
                label: r.label as u8,
            });
        }
        records.push(ProductRecord {
            product_id: p.product_id.clone(),
            text_features: text,
            image_features: image,
            reviews,
        });
    }
    Ok((manifest, records))
}

fn load_matrix(base: &Path, rel: &Path, cols: usize, owner: &str, kind: &str) -> Result<Tensor> {
    let path = base.join(rel);
    if !path.exists() {
        return Err(Error::load(
            &path,
            format!("{kind} feature file for {owner} is missing"),
        ));
    }
    let t = read_tensor_file(&path)?;
    match t.dims() {
        [_, c] if *c == cols => Ok(t),
        dims => Err(Error::load(
            &path,
            format!("{kind} features of {owner} have dims {dims:?}, expected [_, {cols}]"),
        )),
    }
}

/// Writes feature files under `dir/features/` and a manifest at
/// `dir/manifest.json`, returning the manifest path.
pub fn write_dataset(dir: &Path, products: &[ProductRecord]) -> Result<PathBuf> {
    let first = products
        .first()
        .ok_or_else(|| Error::contract("cannot write an empty dataset"))?;
    let d_t = first.text_features.cols();
    let d_roi = first.image_features.cols();
    let features = dir.join("features");
    fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;

    let mut entries = Vec::with_capacity(products.len());
    for p in products {
        let text_file = PathBuf::from("features").join(format!("{}.text.mmt", p.product_id));
        let image_file = PathBuf::from("features").join(format!("{}.image.mmt", p.product_id));
        write_tensor_file(&dir.join(&text_file), &p.text_features)?;
        write_tensor_file(&dir.join(&image_file), &p.image_features)?;
        let mut reviews = Vec::with_capacity(p.reviews.len());
        for r in &p.reviews {
            let text_file = PathBuf::from("features").join(format!("{}.text.mmt", r.review_id));
            let image_file = PathBuf::from("features").join(format!("{}.image.mmt", r.review_id));
            write_tensor_file(&dir.join(&text_file), &r.text_features)?;
            write_tensor_file(&dir.join(&image_file), &r.image_features)?;
            reviews.push(ReviewEntry {
                review_id: r.review_id.clone(),
                text_file,
                image_file,
                label: r.label as i64,
            });
        }
        entries.push(ProductEntry {
            product_id: p.product_id.clone(),
            text_file,
            image_file,
            reviews,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        d_t,
        d_roi,
        products: entries,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
