//! MAP and NDCG@N over per-product review rankings.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::ProductRecord;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub review_id: String,
    pub score: f64,
    pub label: u8,
}

/// Reviews ordered by descending score, ties broken by ascending review id.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn new(mut entries: Vec<RankedEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::contract("ranked list needs at least one entry"));
        }
        if let Some(e) = entries.iter().find(|e| e.score.is_nan()) {
            return Err(Error::contract(format!(
                "review `{}` has a NaN score",
                e.review_id
            )));
        }
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.review_id.cmp(&b.review_id))
        });
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn labels(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.label).collect()
    }
}

/// Mean of precision@k over the positions of relevant entries
/// (`label >= threshold`); 0 when nothing is relevant.
pub fn average_precision(list: &RankedList, threshold: u8) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, e) in list.entries.iter().enumerate() {
        if e.label >= threshold {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

fn dcg(labels: impl Iterator<Item = u8>, n: usize) -> f64 {
    labels
        .take(n)
        .enumerate()
        .map(|(k, l)| (2f64.powi(i32::from(l)) - 1.0) / ((k + 2) as f64).log2())
        .sum()
}

/// Graded NDCG with gain `2^label − 1` and discount `log2(k + 1)`.
/// Defined as 1 when the ideal DCG is 0.
pub fn ndcg_at(list: &RankedList, n: usize) -> f64 {
    let labels = list.labels();
    let mut ideal = labels.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter(), n);
    if idcg == 0.0 {
        return 1.0;
    }
    dcg(labels.into_iter(), n) / idcg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Minimum label counted as relevant for MAP.
    pub relevance_threshold: u8,
    pub ndcg_cutoffs: Vec<usize>,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            relevance_threshold: 3,
            ndcg_cutoffs: vec![3, 5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductMetrics {
    pub product_id: String,
    pub average_precision: f64,
    pub ndcg: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map_score: f64,
    pub ndcg: BTreeMap<usize, f64>,
    pub per_product: Vec<ProductMetrics>,
}

impl EvalReport {
    pub fn ndcg_at(&self, n: usize) -> Option<f64> {
        self.ndcg.get(&n).copied()
    }

    /// Fixed-width `MAP / N@3 / N@5` table, values in percent.
    pub fn table(&self, title: &str) -> String {
        let mut out = String::new();
        let mut header = format!("{:<24}{:>8}", "", "MAP");
        let mut row = format!("{:<24}{:>8.1}", title, 100.0 * self.map_score);
        for (n, v) in &self.ndcg {
            let _ = write!(header, "{:>8}", format!("N@{n}"));
            let _ = write!(row, "{:>8.1}", 100.0 * v);
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{row}");
        out
    }

    /// Unweighted mean of several reports (e.g. over seeds).
    pub fn mean(reports: &[EvalReport]) -> Option<EvalReport> {
        let first = reports.first()?;
        let k = reports.len() as f64;
        let map_score = reports.iter().map(|r| r.map_score).sum::<f64>() / k;
        let ndcg = first
            .ndcg
            .keys()
            .map(|&n| {
                (
                    n,
                    reports.iter().filter_map(|r| r.ndcg_at(n)).sum::<f64>() / k,
                )
            })
            .collect();
        Some(EvalReport {
            map_score,
            ndcg,
            per_product: Vec::new(),
        })
    }
}

/// Ranks every product's reviews by predicted score and averages the
/// metrics over products in input order.
pub fn evaluate(
    products: &[ProductRecord],
    predictions: &HashMap<String, f64>,
    options: &MetricOptions,
) -> Result<EvalReport> {
    if products.is_empty() {
        return Err(Error::contract("nothing to evaluate"));
    }
    let mut per_product = Vec::with_capacity(products.len());
    for p in products {
        let mut entries = Vec::with_capacity(p.reviews.len());
        for r in &p.reviews {
            let score = *predictions.get(&r.review_id).ok_or_else(|| {
                Error::contract(format!("missing prediction for review `{}`", r.review_id))
            })?;
            entries.push(RankedEntry {
                review_id: r.review_id.clone(),
                score,
                label: r.label,
            });
        }
        let list = RankedList::new(entries)?;
        per_product.push(ProductMetrics {
            product_id: p.product_id.clone(),
            average_precision: average_precision(&list, options.relevance_threshold),
            ndcg: options
                .ndcg_cutoffs
                .iter()
                .map(|&n| (n, ndcg_at(&list, n)))
                .collect(),
        });
    }
    let k = per_product.len() as f64;
    let map_score = per_product.iter().map(|m| m.average_precision).sum::<f64>() / k;
    let ndcg = options
        .ndcg_cutoffs
        .iter()
        .map(|&n| (n, per_product.iter().map(|m| m.ndcg[&n]).sum::<f64>() / k))
        .collect();
    Ok(EvalReport {
        map_score,
        ndcg,
        per_product,
    })
}
