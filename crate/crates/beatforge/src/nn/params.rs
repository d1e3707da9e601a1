//! Named parameter registry shared by optimizers and checkpoints.

use std::collections::HashSet;

use super::scalar::Real;
use super::tensor::Tensor;

/// Ordered collection of named trainable tensors. Registration order is the
/// model's construction order, which makes optimizer state and checkpoint
/// layout deterministic.
#[derive(Clone, Default)]
pub struct ParamSet<T: Real = f32> {
    items: Vec<(String, Tensor<T>)>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self { items: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) {
        let name = name.into();
        assert!(
            t.needs_grad(),
            "parameter {name} must be created with requires_grad"
        );
        assert!(
            self.get(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.items.push((name, t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.items.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor<T>)> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total scalar count, counting shared tensors once.
    pub fn param_count(&self) -> usize {
        let mut seen = HashSet::new();
        self.items
            .iter()
            .filter(|(_, t)| seen.insert(t.node_id()))
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn zero_grads(&self) {
        for (_, t) in &self.items {
            t.zero_grad();
        }
    }

    /// Largest absolute gradient entry over all parameters; None if no
    /// parameter has a gradient yet.
    pub fn max_abs_grad(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (_, t) in &self.items {
            if let Some(g) = t.grad() {
                for v in g {
                    let a = v.to_f64().abs();
                    best = Some(best.map_or(a, |b: f64| b.max(a)));
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_dedupes_shared_tensors() {
        let t = Tensor::<f32>::zeros(&[4, 5]).requires_grad();
        let mut ps = ParamSet::new();
        ps.push("a", t.clone());
        ps.push("b", t.clone());
        assert_eq!(ps.len(), 2);
        assert_eq!(ps.param_count(), 20);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_rejected() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::<f32>::zeros(&[1]).requires_grad());
        ps.push("w", Tensor::<f32>::zeros(&[1]).requires_grad());
    }

    #[test]
    #[should_panic(expected = "requires_grad")]
    fn non_grad_tensor_rejected() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::<f32>::zeros(&[1]));
    }
}
