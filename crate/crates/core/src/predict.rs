//! Next-state reasoning over transition tensors.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::StateIndex;
use crate::tensor::TransitionTensor;

/// Conditional frequency: `P(s | prefix) = count(prefix, s) / Σ count(prefix, ·)`.
/// Empty when the prefix was never seen.
pub fn next_state_distribution(
    tensor: &TransitionTensor,
    prefix: &[StateIndex],
) -> Result<BTreeMap<StateIndex, f64>> {
    let cont = tensor.continuations(prefix)?;
    let total: u64 = cont.iter().map(|&(_, c)| c).sum();
    Ok(cont
        .into_iter()
        .map(|(s, c)| (s, c as f64 / total as f64))
        .collect())
}

/// Most likely next state, ties to the lowest index, if its probability
/// reaches `threshold`.
pub fn predict(
    tensor: &TransitionTensor,
    prefix: &[StateIndex],
    threshold: f64,
) -> Result<Option<(StateIndex, f64)>> {
    check_threshold(threshold)?;
    Ok(argmax(&next_state_distribution(tensor, prefix)?).filter(|&(_, p)| p >= threshold))
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    Ok(())
}

fn argmax(dist: &BTreeMap<StateIndex, f64>) -> Option<(StateIndex, f64)> {
    // BTreeMap iterates in index order, so strict > keeps the lowest on ties
    dist.iter().fold(None, |best, (&s, &p)| match best {
        Some((_, bp)) if bp >= p => best,
        _ => Some((s, p)),
    })
}

/// A reasoning function: turns continuation counts into a distribution.
pub trait Reasoner: Send + Sync {
    fn name(&self) -> &'static str;

    fn distribution(
        &self,
        tensor: &TransitionTensor,
        prefix: &[StateIndex],
    ) -> Result<BTreeMap<StateIndex, f64>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConditionalFrequency;

impl Reasoner for ConditionalFrequency {
    fn name(&self) -> &'static str {
        "conditional-frequency"
    }

    fn distribution(
        &self,
        tensor: &TransitionTensor,
        prefix: &[StateIndex],
    ) -> Result<BTreeMap<StateIndex, f64>> {
        next_state_distribution(tensor, prefix)
    }
}

/// Additive (Laplace when `alpha` is 1) smoothing over every known state.
/// Still empty for an unseen prefix.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveSmoothing {
    pub alpha: f64,
}

impl Reasoner for AdditiveSmoothing {
    fn name(&self) -> &'static str {
        "additive-smoothing"
    }

    fn distribution(
        &self,
        tensor: &TransitionTensor,
        prefix: &[StateIndex],
    ) -> Result<BTreeMap<StateIndex, f64>> {
        let cont = tensor.continuations(prefix)?;
        if cont.is_empty() {
            return Ok(BTreeMap::new());
        }
        let total: u64 = cont.iter().map(|&(_, c)| c).sum();
        let m = tensor.dimension() as f64;
        let denom = total as f64 + self.alpha * m;
        let mut out: BTreeMap<StateIndex, f64> = (0..tensor.dimension() as u32)
            .map(|s| (StateIndex(s), self.alpha / denom))
            .collect();
        for (s, c) in cont {
            out.insert(s, (c as f64 + self.alpha) / denom);
        }
        Ok(out)
    }
}

/// A reasoning function paired with its threshold.
pub struct Predictor {
    reasoner: Box<dyn Reasoner>,
    threshold: f64,
}

impl std::fmt::Debug for Predictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Predictor")
            .field("reasoner", &self.reasoner.name())
            .field("threshold", &self.threshold)
            .finish()
    }
}

impl Predictor {
    pub fn new(reasoner: Box<dyn Reasoner>, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        Ok(Self {
            reasoner,
            threshold,
        })
    }

    pub fn conditional(threshold: f64) -> Result<Self> {
        Self::new(Box::new(ConditionalFrequency), threshold)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn reasoner_name(&self) -> &'static str {
        self.reasoner.name()
    }

    pub fn distribution(
        &self,
        tensor: &TransitionTensor,
        prefix: &[StateIndex],
    ) -> Result<BTreeMap<StateIndex, f64>> {
        self.reasoner.distribution(tensor, prefix)
    }

    pub fn predict(
        &self,
        tensor: &TransitionTensor,
        prefix: &[StateIndex],
    ) -> Result<Option<(StateIndex, f64)>> {
        Ok(argmax(&self.distribution(tensor, prefix)?).filter(|&(_, p)| p >= self.threshold))
    }
}
