use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::tensor::{fnv1a64, Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

/// A named tensor owned by a model. Non-trainable entries hold buffers such
/// as batch-norm running statistics; they are checkpointed but never updated
/// by the optimizer and do not count toward the parameter total.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    pub trainable: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    index: BTreeMap<String, ParamId>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(invalid(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value,
            grad: None,
            trainable,
        });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of trainable scalar parameters.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Adds `grad` into the accumulated gradient of `id`.
    pub fn accumulate_grad(&mut self, id: ParamId, grad: &Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if grad.shape() != p.value.shape() {
            return Err(Error::shape(
                "accumulate_grad",
                format!("{}: grad {:?} vs value {:?}", p.name, grad.shape(), p.value.shape()),
            ));
        }
        match &mut p.grad {
            Some(g) => {
                for (a, &b) in g.data_mut().iter_mut().zip(grad.data()) {
                    *a = *a + b;
                }
            }
            None => p.grad = Some(grad.clone()),
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Order-sensitive fingerprint of every name and value bit pattern whose
    /// name starts with `prefix`.
    pub fn fingerprint(&self, prefix: &str) -> u64 {
        let bytes = self
            .params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .flat_map(|p| {
                p.name
                    .bytes()
                    .chain(p.value.to_le_bytes())
                    .collect::<Vec<_>>()
            });
        fnv1a64(bytes)
    }

    /// Copies every value from `other` whose name exists here with an equal
    /// shape; returns how many were copied.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<usize> {
        let mut copied = 0;
        for p in other.iter() {
            if let Some(id) = self.id(&p.name) {
                let dst = &mut self.params[id.0];
                if dst.value.shape() != p.value.shape() {
                    return Err(Error::Checkpoint(format!(
                        "{}: stored shape {:?} does not match model shape {:?}",
                        p.name,
                        p.value.shape(),
                        dst.value.shape()
                    )));
                }
                dst.value = p.value.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }
}

/// Plain SGD: `w ← w − lr·grad`, then gradients are cleared.
pub fn sgd_step<T: Element>(store: &mut ParamStore<T>, lr: f64) -> Result<()> {
    if lr <= 0.0 || !lr.is_finite() {
        return Err(invalid(format!("learning rate must be positive, got {lr}")));
    }
    let lr = T::from_f64(lr);
    for p in store.iter_mut() {
        if let (true, Some(g)) = (p.trainable, p.grad.take()) {
            for (w, &d) in p.value.data_mut().iter_mut().zip(g.data()) {
                *w = *w - lr * d;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(w: f64) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(w), true).unwrap();
        (s, id)
    }

    #[test]
    fn zero_grad_leaves_weights() {
        let (mut s, id) = store_with(1.5);
        s.accumulate_grad(id, &Tensor::scalar(0.0)).unwrap();
        sgd_step(&mut s, 0.1).unwrap();
        assert_eq!(s.value(id).item(), 1.5);
    }

    #[test]
    fn single_step_arithmetic() {
        let (mut s, id) = store_with(1.0);
        s.accumulate_grad(id, &Tensor::scalar(2.0)).unwrap();
        sgd_step(&mut s, 0.1).unwrap();
        assert!((s.value(id).item() - 0.8).abs() < 1e-15);
        assert!(s.get(id).grad.is_none());
    }

    #[test]
    fn quadratic_recurrence_matches_closed_form() {
        // f(w) = w²/2 so grad = w and w_n = (1 - lr)^n w_0.
        let (mut s, id) = store_with(1.0);
        for n in 1..=50 {
            let w = s.value(id).clone();
            s.accumulate_grad(id, &w).unwrap();
            sgd_step(&mut s, 0.1).unwrap();
            let expected = 0.9f64.powi(n);
            assert!((s.value(id).item() - expected).abs() < 1e-12, "step {n}");
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut s, _) = store_with(1.0);
        assert!(s.add("w", Tensor::scalar(0.0), true).is_err());
    }

    #[test]
    fn buffers_are_not_updated_or_counted() {
        let mut s = ParamStore::<f32>::new();
        let b = s.add("running", Tensor::scalar(3.0), false).unwrap();
        s.accumulate_grad(b, &Tensor::scalar(1.0)).unwrap();
        sgd_step(&mut s, 1.0).unwrap();
        assert_eq!(s.value(b).item(), 3.0);
        assert_eq!(s.trainable_count(), 0);
    }
}
