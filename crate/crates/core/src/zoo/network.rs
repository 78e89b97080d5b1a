use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerKind, ModelSpec};
use crate::autodiff::{BnMode, Graph, ParamId, ParamStore, Var, BN_EPS, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug)]
struct BnIds {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Empty,
    Weighted { w: ParamId, b: ParamId, bn: Option<BnIds> },
}

/// Outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub features: Var,
    pub logits: Var,
}

/// A model instantiated from a [`ModelSpec`], owning its parameters.
#[derive(Clone, Debug)]
pub struct Network<T: Element> {
    spec: ModelSpec,
    store: ParamStore<T>,
    slots: Vec<Slot>,
}

impl<T: Element> Network<T> {
    /// Builds the model with Xavier-uniform weights, zero biases and
    /// identity batch norm. Initial values are drawn in f64 so every element
    /// type starts from the same point.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let ins = spec.input_shapes(spec.default_resolution)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut slots = Vec::with_capacity(spec.layers.len());
        for (layer, inp) in spec.layers.iter().zip(&ins) {
            let (shape, fan_in, fan_out, width) = match layer.kind {
                LayerKind::Conv { c_out, k, .. } => (vec![c_out, inp[0], k, k], inp[0] * k * k, c_out * k * k, c_out),
                LayerKind::Linear { d_out } => (vec![d_out, inp[0]], inp[0], d_out, d_out),
                _ => {
                    slots.push(Slot::Empty);
                    continue;
                }
            };
            let name = format!("{}.{}", spec.prefix, layer.name);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Tensor::from_fn(&shape, |_| T::from_f64(rng.random_range(-limit..limit)))?;
            let w = store.add(format!("{name}.weight"), w, true)?;
            let b = store.add(format!("{name}.bias"), Tensor::zeros(&[width])?, true)?;
            let bn = if layer.batch_norm {
                Some(BnIds {
                    gamma: store.add(format!("{name}.bn.gamma"), Tensor::full(&[width], T::one())?, true)?,
                    beta: store.add(format!("{name}.bn.beta"), Tensor::zeros(&[width])?, true)?,
                    mean: store.add(format!("{name}.bn.running_mean"), Tensor::zeros(&[width])?, false)?,
                    var: store.add(format!("{name}.bn.running_var"), Tensor::full(&[width], T::one())?, false)?,
                })
            } else {
                None
            };
            slots.push(Slot::Weighted { w, b, bn });
        }
        Ok(Self { spec, store, slots })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn param_count(&self) -> usize {
        self.store.trainable_count()
    }

    pub fn fingerprint(&self) -> u64 {
        self.store.fingerprint("")
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim().expect("validated at construction")
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim().expect("validated at construction")
    }

    /// Forward pass. In training mode batch norm uses batch statistics and
    /// updates the running buffers; otherwise it reads them.
    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, train: bool) -> Result<Forward> {
        let mut updates = Vec::new();
        let out = self.run(g, x, train.then_some(&mut updates))?;
        for (id, value) in updates {
            self.store.get_mut(id).value = value;
        }
        Ok(out)
    }

    /// Forward pass that never touches the running buffers.
    pub fn forward_frozen(&self, g: &mut Graph<T>, x: Var) -> Result<Forward> {
        self.run(g, x, None)
    }

    fn run(&self, g: &mut Graph<T>, x: Var, mut train: Option<&mut Vec<(ParamId, Tensor<T>)>>) -> Result<Forward> {
        let expect = match self.spec.input {
            super::InputKind::Image { channels } => g.value(x).rank() == 4 && g.value(x).shape()[1] == channels,
            super::InputKind::Vector { dim } => g.value(x).rank() == 2 && g.value(x).shape()[1] == dim,
        };
        if !expect {
            return Err(Error::shape(
                "network forward",
                format!("{} got input {:?}, expected {:?}", self.spec.prefix, g.value(x).shape(), self.spec.input),
            ));
        }
        let mut outs: Vec<Var> = Vec::with_capacity(self.spec.layers.len());
        let mut cur = x;
        for (layer, slot) in self.spec.layers.iter().zip(&self.slots) {
            let mut y = match (layer.kind, slot) {
                (LayerKind::Conv { stride, pad, .. }, Slot::Weighted { w, b, .. }) => {
                    let (w, b) = (g.param(&self.store, *w), g.param(&self.store, *b));
                    g.conv2d(cur, w, b, stride, pad)?
                }
                (LayerKind::Linear { .. }, Slot::Weighted { w, b, .. }) => {
                    let (w, b) = (g.param(&self.store, *w), g.param(&self.store, *b));
                    g.linear(cur, w, b)?
                }
                (LayerKind::MaxPool { k, stride }, _) => g.maxpool2d(cur, k, stride)?,
                (LayerKind::GlobalAvgPool, _) => g.global_avg_pool(cur)?,
                (LayerKind::Flatten, _) => g.flatten(cur)?,
                _ => unreachable!("slots follow the spec"),
            };
            if let Slot::Weighted { bn: Some(bn), .. } = slot {
                let (gamma, beta) = (g.param(&self.store, bn.gamma), g.param(&self.store, bn.beta));
                y = match train.as_deref_mut() {
                    Some(updates) => {
                        let mut mean = self.store.value(bn.mean).clone();
                        let mut var = self.store.value(bn.var).clone();
                        let mode = BnMode::Train {
                            running_mean: mean.data_mut(),
                            running_var: var.data_mut(),
                            momentum: BN_MOMENTUM,
                        };
                        let y = g.batchnorm(y, gamma, beta, mode, BN_EPS)?;
                        updates.push((bn.mean, mean));
                        updates.push((bn.var, var));
                        y
                    }
                    None => {
                        let mode = BnMode::Infer {
                            running_mean: self.store.value(bn.mean).data(),
                            running_var: self.store.value(bn.var).data(),
                        };
                        g.batchnorm(y, gamma, beta, mode, BN_EPS)?
                    }
                };
            }
            if let Some(j) = layer.skip_from {
                y = g.add(y, outs[j])?;
            }
            if layer.relu {
                y = g.relu(y)?;
            }
            outs.push(y);
            cur = y;
        }
        Ok(Forward {
            features: outs[self.spec.feature_layer],
            logits: cur,
        })
    }

    /// Inference over `x` in chunks of `batch`; returns (features, logits).
    pub fn infer(&self, x: &Tensor<T>, batch: usize) -> Result<(Tensor<T>, Tensor<T>)> {
        let n = x.shape().first().copied().unwrap_or(0);
        let mut feats = Vec::new();
        let mut logits = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + batch.max(1)).min(n);
            let chunk = x.select_rows(&(start..end).collect::<Vec<_>>())?;
            let mut g = Graph::inference();
            let xv = g.input(chunk);
            let out = self.forward_frozen(&mut g, xv)?;
            feats.push(g.value(out.features).clone());
            logits.push(g.value(out.logits).clone());
            start = end;
        }
        if feats.is_empty() {
            return Err(crate::error::invalid("inference on an empty batch"));
        }
        Ok((
            Tensor::concat_rows(&feats.iter().collect::<Vec<_>>())?,
            Tensor::concat_rows(&logits.iter().collect::<Vec<_>>())?,
        ))
    }

    /// Same model with every tensor converted to `U`.
    pub fn cast<U: Element>(&self) -> Network<U> {
        let mut store = ParamStore::new();
        for p in self.store.iter() {
            store.add(p.name.clone(), p.value.cast(), p.trainable).expect("names already unique");
        }
        Network {
            spec: self.spec.clone(),
            store,
            slots: self.slots.clone(),
        }
    }
}
