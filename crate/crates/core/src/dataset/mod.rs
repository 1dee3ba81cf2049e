//! Feature ingestion, list-wise batching and synthetic corpora.

mod manifest;
mod synthetic;
pub mod tensor_file;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use manifest::{
    load_manifest, write_dataset, Manifest, ProductEntry, ReviewEntry, MANIFEST_VERSION,
};
pub use synthetic::{make_synthetic, make_synthetic_splits, SyntheticSpec, SyntheticSplits};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Highest helpfulness label.
pub const MAX_LABEL: u8 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ReviewRecord {
    pub review_id: String,
    /// Review text tokens, `(|T|+1) × d_t`.
    pub text_features: Tensor,
    /// Review RoI features, `m_r × d_roi`.
    pub image_features: Tensor,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductRecord {
    pub product_id: String,
    /// Product description tokens, `(|D|+1) × d_t`.
    pub text_features: Tensor,
    /// Product RoI features, `m_p × d_roi`.
    pub image_features: Tensor,
    pub reviews: Vec<ReviewRecord>,
}

/// Reviews of a single product processed together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub product: usize,
    pub reviews: Vec<usize>,
}

/// Splits every product's reviews into chunks of at most `batch_size`.
///
/// Without a seed the order follows the records. With a seed, reviews are
/// shuffled within each product and the resulting batches are shuffled.
pub fn batch_by_product(
    records: &[ProductRecord],
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(Error::Config(format!(
            "batch_size must be >= 2, got {batch_size}"
        )));
    }
    let mut rng = shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut batches = Vec::new();
    for (p, product) in records.iter().enumerate() {
        let mut order: Vec<usize> = (0..product.reviews.len()).collect();
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        for chunk in order.chunks(batch_size) {
            batches.push(Batch {
                product: p,
                reviews: chunk.to_vec(),
            });
        }
    }
    if let Some(rng) = rng.as_mut() {
        batches.shuffle(rng);
    }
    Ok(batches)
}
