use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::InteractionKind;

/// One pseudo-label as it stood at the end of an epoch's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub review_id: String,
    pub subtask: InteractionKind,
    pub value: f64,
    pub epoch: u32,
}

/// Per-review, per-subtask pseudo-labels smoothed across epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelStore {
    epoch: u32,
    current: BTreeMap<(String, InteractionKind), f64>,
    history: Vec<LabelRecord>,
}

impl Default for PseudoLabelStore {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    epoch: u32,
    records: Vec<LabelRecord>,
}

impl PseudoLabelStore {
    pub fn new() -> Self {
        Self {
            epoch: 1,
            current: BTreeMap::new(),
            history: Vec::new(),
        }
    }

    /// 1-based epoch index `i`.
    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    /// Weight of the fresh estimate, `2 / (i + 1)`.
    pub fn beta(&self) -> f64 {
        2.0 / (f64::from(self.epoch) + 1.0)
    }

    pub fn get(&self, review_id: &str, subtask: InteractionKind) -> Option<f64> {
        self.current.get(&(review_id.to_owned(), subtask)).copied()
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    /// Every update in the order it happened.
    pub fn history(&self) -> &[LabelRecord] {
        &self.history
    }

    /// Blends `raw_target` into the stored label and returns the new value.
    ///
    /// In epoch 1, and for a review seen for the first time, the label is
    /// initialized to the gold score `y_g` and `raw_target` is ignored.
    pub fn ewma_update(
        &mut self,
        review_id: &str,
        subtask: InteractionKind,
        raw_target: f64,
        y_g: f64,
    ) -> Result<f64> {
        if subtask == InteractionKind::Global {
            return Err(Error::contract("pseudo-labels exist only for subtasks"));
        }
        let key = (review_id.to_owned(), subtask);
        let value = match self.current.get(&key) {
            Some(&prev) if self.epoch > 1 => {
                let beta = self.beta();
                beta * raw_target + (1.0 - beta) * prev
            }
            _ => y_g,
        };
        self.current.insert(key, value);
        self.history.push(LabelRecord {
            review_id: review_id.to_owned(),
            subtask,
            value,
            epoch: self.epoch,
        });
        Ok(value)
    }

    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&StoreFile {
            epoch: self.epoch,
            records: self.history.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StoreFile = serde_json::from_str(text)?;
        if file.epoch == 0 {
            return Err(Error::contract("pseudo-label epoch must be >= 1"));
        }
        let mut current = BTreeMap::new();
        for r in &file.records {
            current.insert((r.review_id.clone(), r.subtask), r.value);
        }
        Ok(Self {
            epoch: file.epoch,
            current,
            history: file.records,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const S: InteractionKind = InteractionKind::PtRv;

    #[test]
    fn first_epoch_returns_gold() {
        let mut st = PseudoLabelStore::new();
        assert_eq!(st.ewma_update("r1", S, 17.0, 3.0).unwrap(), 3.0);
        assert_eq!(st.get("r1", S), Some(3.0));
    }

    #[test]
    fn second_epoch_blends_two_thirds() {
        let mut st = PseudoLabelStore::new();
        st.ewma_update("r1", S, 0.0, 3.0).unwrap();
        st.advance_epoch();
        assert!((st.beta() - 2.0 / 3.0).abs() < 1e-15);
        let v = st.ewma_update("r1", S, 5.0, 3.0).unwrap();
        assert!((v - 13.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unseen_review_later_starts_from_gold() {
        let mut st = PseudoLabelStore::new();
        st.advance_epoch();
        st.advance_epoch();
        assert_eq!(st.ewma_update("late", S, 9.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn global_task_rejected() {
        let mut st = PseudoLabelStore::new();
        assert!(st
            .ewma_update("r", InteractionKind::Global, 1.0, 1.0)
            .is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut st = PseudoLabelStore::new();
        st.ewma_update("a", S, 0.0, 2.0).unwrap();
        st.ewma_update("b", InteractionKind::RtRv, 0.0, 4.0)
            .unwrap();
        st.advance_epoch();
        st.ewma_update("a", S, 0.1 + 0.2, 2.0).unwrap();
        let back = PseudoLabelStore::from_json(&st.to_json().unwrap()).unwrap();
        assert_eq!(back, st);
    }

    proptest! {
        #[test]
        fn update_is_convex_combination(
            prev in -10.0f64..10.0, raw in -10.0f64..10.0, epoch in 2u32..50,
        ) {
            let mut st = PseudoLabelStore::new();
            st.ewma_update("r", S, 0.0, prev).unwrap();
            for _ in 1..epoch { st.advance_epoch(); }
            let v = st.ewma_update("r", S, raw, prev).unwrap();
            prop_assert!(v >= prev.min(raw) - 1e-12 && v <= prev.max(raw) + 1e-12);
        }
    }
}
