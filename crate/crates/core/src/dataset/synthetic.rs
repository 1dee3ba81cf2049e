//! Synthetic product/review corpora with a planted helpfulness signal.
//!
//! Every review copies its product's feature rows through a fixed orthogonal
//! mixing matrix and adds Gaussian noise whose standard deviation shrinks as
//! the latent helpfulness grows: `σ = (4 − h)/4 · noise`. Helpful reviews
//! therefore align more closely with their product.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ProductRecord, ReviewRecord, MAX_LABEL};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Seed of the mixing matrices. Independent of the dataset seed so that
/// separately generated splits share one signal.
const MIXING_SEED: u64 = 0x6d69_7869_6e67;
const MIXING_SPREAD: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_products: usize,
    pub reviews_per_product: usize,
    pub d_t: usize,
    pub d_roi: usize,
    pub seed: u64,
    /// Noise scale `s_noise`.
    pub noise: f64,
    pub product_text_rows: usize,
    pub review_text_rows: usize,
    pub image_rows: usize,
    /// Prefix for generated product and review ids.
    pub id_prefix: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_products: 4,
            reviews_per_product: 8,
            d_t: 16,
            d_roi: 16,
            seed: 7,
            noise: 0.1,
            product_text_rows: 4,
            review_text_rows: 3,
            image_rows: 2,
            id_prefix: String::new(),
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let counts = [
            ("n_products", self.n_products),
            ("reviews_per_product", self.reviews_per_product),
            ("d_t", self.d_t),
            ("d_roi", self.d_roi),
            ("product_text_rows", self.product_text_rows),
            ("review_text_rows", self.review_text_rows),
            ("image_rows", self.image_rows),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!(
                    "synthetic {name} must be at least 1"
                )));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!(
                "synthetic noise {} must be >= 0",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Three disjoint synthetic corpora drawn with derived seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSplits {
    pub train: Vec<ProductRecord>,
    pub dev: Vec<ProductRecord>,
    pub test: Vec<ProductRecord>,
}

pub fn make_synthetic_splits(spec: &SyntheticSpec) -> Result<SyntheticSplits> {
    let split = |name: &str, salt: u64| {
        make_synthetic(&SyntheticSpec {
            seed: spec
                .seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(salt),
            id_prefix: format!("{}{name}-", spec.id_prefix),
            ..spec.clone()
        })
    };
    Ok(SyntheticSplits {
        train: make_synthetic(&SyntheticSpec {
            id_prefix: format!("{}train-", spec.id_prefix),
            ..spec.clone()
        })?,
        dev: split("dev", 1)?,
        test: split("test", 2)?,
    })
}

/// Generates `n_products` products with `reviews_per_product` labelled
/// reviews each. A pure function of `spec`.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Vec<ProductRecord>> {
    spec.validate()?;
    let text_mix = orthogonal_matrix(spec.d_t, MIXING_SEED);
    let image_mix = orthogonal_matrix(spec.d_roi, MIXING_SEED ^ 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut products = Vec::with_capacity(spec.n_products);
    for p in 0..spec.n_products {
        let product_id = format!("{}p{p:03}", spec.id_prefix);
        let text = gaussian_matrix(&mut rng, spec.product_text_rows, spec.d_t, 1.0);
        let image = gaussian_matrix(&mut rng, spec.image_rows, spec.d_roi, 1.0);
        let text_aligned = text.matmul(&text_mix)?;
        let image_aligned = image.matmul(&image_mix)?;

        let mut reviews = Vec::with_capacity(spec.reviews_per_product);
        for r in 0..spec.reviews_per_product {
            let h: u8 = rng.random_range(0..=MAX_LABEL);
            let sigma = f64::from(MAX_LABEL - h) / f64::from(MAX_LABEL) * spec.noise;
            let review_text = noisy_copy(&mut rng, &text_aligned, spec.review_text_rows, sigma);
            let review_image = noisy_copy(&mut rng, &image_aligned, spec.image_rows, sigma);
            reviews.push(ReviewRecord {
                review_id: format!("{product_id}-r{r:02}"),
                text_features: review_text,
                image_features: review_image,
                label: h,
            });
        }
        products.push(ProductRecord {
            product_id,
            text_features: text,
            image_features: image,
            reviews,
        });
    }
    Ok(products)
}

/// Values are rounded through `f32` so that the generated corpus survives a
/// trip through the on-disk format unchanged.
fn to_f32_precision(t: Tensor) -> Tensor {
    t.map(|v| v as f32 as f64)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| std * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect::<Vec<f64>>();
    to_f32_precision(Tensor::matrix(rows, cols, data).expect("positive dims"))
}

/// `rows` rows cycling through `source`, each perturbed by N(0, σ²).
fn noisy_copy(rng: &mut ChaCha8Rng, source: &Tensor, rows: usize, sigma: f64) -> Tensor {
    let cols = source.cols();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for &v in source.row(i % source.rows()) {
            let eps: f64 = StandardNormal.sample(rng);
            data.push(v + sigma * eps);
        }
    }
    to_f32_precision(Tensor::matrix(rows, cols, data).expect("positive dims"))
}

/// Orthogonal matrix near the identity: Gram-Schmidt on `I + MIXING_SPREAD·G`
/// with Gaussian `G`. Mixed rows stay recognisably aligned with their source.
fn orthogonal_matrix(d: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let i = basis.len();
        let mut v: Vec<f64> = (0..d)
            .map(|j| {
                let g: f64 = StandardNormal.sample(&mut rng);
                f64::from(u8::from(i == j)) + MIXING_SPREAD * g
            })
            .collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Tensor::from_rows(&basis)
}
