#![allow(dead_code)]

use mmss::blocks::{Bound, ParamSet};
use mmss::model::ModelParams;
use mmss::numerics::{Graph, NodeId};
use mmss::Result;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for relative error. Central differences at h = 1e-5
/// carry roughly 1e-10 of absolute noise on O(1) losses, so relative error
/// is only meaningful above this magnitude.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub trait HasParams: Clone {
    fn store(&self) -> &ParamSet;
    fn store_mut(&mut self) -> &mut ParamSet;
}

impl HasParams for ModelParams {
    fn store(&self) -> &ParamSet {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamSet {
        &mut self.store
    }
}

impl HasParams for ParamSet {
    fn store(&self) -> &ParamSet {
        self
    }
    fn store_mut(&mut self) -> &mut ParamSet {
        self
    }
}

#[derive(Debug)]
pub struct GradReport {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
}

/// Compares backprop gradients of every parameter entry against central
/// differences of the scalar built by `loss`.
pub fn check_gradients<T: HasParams>(
    model: &T,
    loss: impl Fn(&T, &mut Graph, &Bound) -> Result<NodeId>,
) -> GradReport {
    let mut g = Graph::new();
    let bound = model.store().bind(&mut g);
    let root = loss(model, &mut g, &bound).unwrap();
    g.backward(root).unwrap();
    let analytic: Vec<_> = bound.nodes().iter().map(|&n| g.grad_or_zeros(n)).collect();

    let eval = |m: &T| {
        let mut g = Graph::new();
        let bound = m.store().bind_frozen(&mut g);
        let root = loss(m, &mut g, &bound).unwrap();
        g.value(root).item()
    };
    let mut probe = model.clone();
    let mut report = GradReport {
        max_rel: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let ids: Vec<_> = model.store().ids().collect();
    for (p, id) in ids.into_iter().enumerate() {
        for j in 0..model.store().get(id).numel() {
            let orig = model.store().get(id).data()[j];
            probe.store_mut().get_mut(id).data_mut()[j] = orig + FD_STEP;
            let up = eval(&probe);
            probe.store_mut().get_mut(id).data_mut()[j] = orig - FD_STEP;
            let down = eval(&probe);
            probe.store_mut().get_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let e = rel_err(analytic[p].data()[j], numeric);
            report.checked += 1;
            if e > report.max_rel {
                report.max_rel = e;
                report.worst = format!(
                    "{}[{j}] analytic {:e} numeric {:e}",
                    model.store().name(id),
                    analytic[p].data()[j],
                    numeric
                );
            }
        }
    }
    report
}

/// Dense row-major matrix helpers for oracles.
pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum())
                .collect()
        })
        .collect()
}

pub fn to_rows(t: &mmss::numerics::Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// Independent reimplementation of the ranking metrics. Ordering uses a
/// selection pass over (score desc, id asc); gains are recomputed from the
/// label histogram for the ideal list.
pub struct OracleMetrics {
    pub ap: f64,
    pub ndcg3: f64,
    pub ndcg5: f64,
}

pub fn oracle_metrics(items: &[(String, f64, u8)], threshold: u8) -> OracleMetrics {
    let mut left: Vec<&(String, f64, u8)> = items.iter().collect();
    let mut order = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let (a, b) = (left[i], left[best]);
            if a.1 > b.1 || (a.1 == b.1 && a.0 < b.0) {
                best = i;
            }
        }
        order.push(left.remove(best).2);
    }

    let relevant_total = order.iter().filter(|&&l| l >= threshold).count();
    let mut ap = 0.0;
    if relevant_total > 0 {
        for k in 0..order.len() {
            if order[k] >= threshold {
                let hits_to_k = order[..=k].iter().filter(|&&l| l >= threshold).count();
                ap += hits_to_k as f64 / (k + 1) as f64;
            }
        }
        ap /= relevant_total as f64;
    }

    let mut histogram = [0usize; 5];
    for &l in &order {
        histogram[l as usize] += 1;
    }
    let mut ideal = Vec::new();
    for label in (0..5u8).rev() {
        for _ in 0..histogram[label as usize] {
            ideal.push(label);
        }
    }
    let dcg = |labels: &[u8], n: usize| -> f64 {
        let mut s = 0.0;
        for (k, &l) in labels.iter().enumerate() {
            if k >= n {
                break;
            }
            let position = (k + 1) as f64;
            s += ((1u32 << l) as f64 - 1.0) / (position + 1.0).ln() * std::f64::consts::LN_2;
        }
        s
    };
    let ndcg = |n: usize| {
        let ideal_dcg = dcg(&ideal, n);
        if ideal_dcg == 0.0 {
            1.0
        } else {
            dcg(&order, n) / ideal_dcg
        }
    };
    OracleMetrics {
        ap,
        ndcg3: ndcg(3),
        ndcg5: ndcg(5),
    }
}
