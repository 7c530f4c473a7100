//! Long-term memory of reflections carried across episodes of one scenario.

use crate::types::Reflection;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MEMORY_BUDGET: usize = 12;

/// Ordered reflection store with a per-entry budget.
///
/// Values are immutable: [`LongTermMemory::record_reflections`] returns a new
/// memory rather than mutating in place.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongTermMemory {
    reflections: Vec<Reflection>,
    budget: usize,
}

impl Default for LongTermMemory {
    fn default() -> Self {
        Self::new(DEFAULT_MEMORY_BUDGET)
    }
}

impl LongTermMemory {
    pub fn new(budget: usize) -> Self {
        LongTermMemory {
            reflections: Vec::new(),
            budget: budget.max(1),
        }
    }

    pub fn reflections(&self) -> &[Reflection] {
        &self.reflections
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.reflections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reflections.is_empty()
    }

    /// Append `new` and evict whole oldest-episode groups until the memory fits
    /// its budget. If the newest group alone is larger than the budget, its
    /// trailing entries are kept.
    pub fn record_reflections(&self, new: &[Reflection]) -> LongTermMemory {
        let mut reflections: Vec<Reflection> = self.reflections.iter().chain(new).cloned().collect();
        while reflections.len() > self.budget {
            let oldest = reflections.iter().map(|r| r.source_episode).min().expect("non-empty");
            let newest = reflections.iter().map(|r| r.source_episode).max().expect("non-empty");
            if oldest == newest {
                let excess = reflections.len() - self.budget;
                reflections.drain(..excess);
                break;
            }
            reflections.retain(|r| r.source_episode != oldest);
        }
        LongTermMemory {
            reflections,
            budget: self.budget,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ReflectionLevel;
    use proptest::prelude::*;

    fn refl(ep: u32, i: usize) -> Reflection {
        Reflection {
            level: ReflectionLevel::Low,
            goal_text: Some(format!("goal {i}")),
            body: format!("lesson {ep}.{i}"),
            source_episode: ep,
            source_scenario: "s".into(),
        }
    }

    #[test]
    fn append_under_budget() {
        let m = LongTermMemory::new(12);
        let new: Vec<_> = (0..3).map(|i| refl(1, i)).collect();
        let m = m.record_reflections(&new);
        assert_eq!(m.len(), 3);
        assert_eq!(m.reflections(), &new[..]);
    }

    #[test]
    fn whole_episode_eviction() {
        let ep1: Vec<_> = (0..10).map(|i| refl(1, i)).collect();
        let ep2: Vec<_> = (0..4).map(|i| refl(2, i)).collect();
        let m = LongTermMemory::new(12).record_reflections(&ep1);
        assert_eq!(m.len(), 10);
        let m = m.record_reflections(&ep2);
        assert_eq!(m.reflections(), &ep2[..]);
    }

    #[test]
    fn oversized_single_group_keeps_tail() {
        let ep: Vec<_> = (0..5).map(|i| refl(3, i)).collect();
        let m = LongTermMemory::new(3).record_reflections(&ep);
        assert_eq!(m.reflections(), &ep[2..]);
    }

    #[test]
    fn recording_is_non_destructive() {
        let m = LongTermMemory::new(4);
        let _ = m.record_reflections(&[refl(1, 0)]);
        assert!(m.is_empty());
    }

    proptest! {
        #[test]
        fn survivors_keep_relative_order(groups in proptest::collection::vec(0usize..6, 1..8), budget in 1usize..10) {
            let mut m = LongTermMemory::new(budget);
            let mut all = Vec::new();
            for (ep, n) in groups.iter().enumerate() {
                let batch: Vec<_> = (0..*n).map(|i| refl(ep as u32 + 1, i)).collect();
                all.extend(batch.clone());
                m = m.record_reflections(&batch);
                prop_assert!(m.len() <= budget);
            }
            // Survivors form a subsequence of everything ever recorded.
            let mut it = all.iter();
            for r in m.reflections() {
                prop_assert!(it.any(|x| x == r));
            }
        }
    }
}
