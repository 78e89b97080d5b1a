use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// `channels × res × res` images; the resolution is chosen per forward.
    Image { channels: usize },
    /// Flat feature vectors.
    Vector { dim: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv { c_out: usize, k: usize, stride: usize, pad: usize },
    MaxPool { k: usize, stride: usize },
    GlobalAvgPool,
    Flatten,
    Linear { d_out: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub batch_norm: bool,
    pub relu: bool,
    /// Index of an earlier layer whose output is added to this layer's
    /// normalized pre-activation.
    pub skip_from: Option<usize>,
}

impl LayerSpec {
    pub fn conv(name: &str, c_out: usize, k: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Conv { c_out, k, stride: 1, pad: k / 2 },
            batch_norm: true,
            relu: true,
            skip_from: None,
        }
    }

    pub fn pool() -> Self {
        Self::plain("pool", LayerKind::MaxPool { k: 2, stride: 2 })
    }

    pub fn gap() -> Self {
        Self::plain("gap", LayerKind::GlobalAvgPool)
    }

    pub fn flatten() -> Self {
        Self::plain("flatten", LayerKind::Flatten)
    }

    pub fn linear(name: &str, d_out: usize, relu: bool) -> Self {
        Self {
            relu,
            ..Self::plain(name, LayerKind::Linear { d_out })
        }
    }

    pub fn with_skip(mut self, from: usize) -> Self {
        self.skip_from = Some(from);
        self
    }

    fn plain(name: &str, kind: LayerKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            batch_norm: false,
            relu: false,
            skip_from: None,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::Conv { .. } | LayerKind::Linear { .. })
    }
}

/// Declarative layer list. The output of `feature_layer` is the model's
/// feature embedding; the output of the last layer is its logits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub prefix: String,
    pub input: InputKind,
    pub layers: Vec<LayerSpec>,
    pub feature_layer: usize,
    /// Resolution used when the layer shapes depend on the input size.
    pub default_resolution: usize,
}

impl ModelSpec {
    /// Per-layer output shapes (without the batch axis) at resolution `res`.
    /// Rejects inconsistent specs, including skip connections between
    /// tensors of different shape.
    pub fn shapes(&self, res: usize) -> Result<Vec<Vec<usize>>> {
        let mut cur = match self.input {
            InputKind::Image { channels } => vec![channels, res, res],
            InputKind::Vector { dim } => vec![dim],
        };
        let mut out: Vec<Vec<usize>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let err = |detail: String| Error::shape("model spec", format!("layer {i} ({}): {detail}", layer.name));
            cur = match layer.kind {
                LayerKind::Conv { c_out, k, stride, pad } => {
                    let [_, h, w] = image(&cur).ok_or_else(|| err(format!("conv needs an image, got {cur:?}")))?;
                    if k != 1 && k != 3 {
                        return Err(err(format!("kernel {k} unsupported")));
                    }
                    if h + 2 * pad < k || w + 2 * pad < k || stride == 0 {
                        return Err(err(format!("{h}x{w} too small for kernel {k}")));
                    }
                    vec![c_out, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1]
                }
                LayerKind::MaxPool { k, stride } => {
                    let [c, h, w] = image(&cur).ok_or_else(|| err(format!("pool needs an image, got {cur:?}")))?;
                    if h < k || w < k || (h - k) % stride != 0 || (w - k) % stride != 0 {
                        return Err(err(format!("{h}x{w} not divisible by pool {k}/{stride}")));
                    }
                    vec![c, (h - k) / stride + 1, (w - k) / stride + 1]
                }
                LayerKind::GlobalAvgPool => {
                    let [c, _, _] = image(&cur).ok_or_else(|| err(format!("gap needs an image, got {cur:?}")))?;
                    vec![c]
                }
                LayerKind::Flatten => vec![cur.iter().product()],
                LayerKind::Linear { d_out } => {
                    if cur.len() != 1 {
                        return Err(err(format!("linear needs a vector, got {cur:?}")));
                    }
                    vec![d_out]
                }
            };
            if let Some(j) = layer.skip_from {
                if j >= i {
                    return Err(err(format!("skip source {j} does not precede it")));
                }
                if out[j] != cur {
                    return Err(err(format!("skip from {j} has shape {:?}, expected {cur:?}", out[j])));
                }
            }
            out.push(cur.clone());
        }
        if self.feature_layer >= self.layers.len() {
            return Err(Error::shape("model spec", "feature layer out of range"));
        }
        Ok(out)
    }

    /// Input width of every layer at resolution `res` (channels for convs,
    /// features for linears).
    pub fn input_shapes(&self, res: usize) -> Result<Vec<Vec<usize>>> {
        let outs = self.shapes(res)?;
        let first = match self.input {
            InputKind::Image { channels } => vec![channels, res, res],
            InputKind::Vector { dim } => vec![dim],
        };
        Ok(std::iter::once(first).chain(outs.iter().take(outs.len() - 1).cloned()).collect())
    }

    /// Trainable parameter count, batch-norm affine terms included.
    pub fn param_count(&self) -> Result<usize> {
        let ins = self.input_shapes(self.default_resolution)?;
        Ok(self
            .layers
            .iter()
            .zip(&ins)
            .map(|(l, inp)| match l.kind {
                LayerKind::Conv { c_out, k, .. } => {
                    inp[0] * k * k * c_out + c_out + if l.batch_norm { 2 * c_out } else { 0 }
                }
                LayerKind::Linear { d_out } => inp[0] * d_out + d_out + if l.batch_norm { 2 * d_out } else { 0 },
                _ => 0,
            })
            .sum())
    }

    pub fn feature_dim(&self) -> Result<usize> {
        Ok(self.shapes(self.default_resolution)?[self.feature_layer].iter().product())
    }

    pub fn output_dim(&self) -> Result<usize> {
        Ok(self.shapes(self.default_resolution)?.last().map(|s| s.iter().product()).unwrap_or(0))
    }

    pub fn conv_count(&self) -> usize {
        self.count(|k| matches!(k, LayerKind::Conv { .. }))
    }

    pub fn pool_count(&self) -> usize {
        self.count(|k| matches!(k, LayerKind::MaxPool { .. }))
    }

    pub fn linear_count(&self) -> usize {
        self.count(|k| matches!(k, LayerKind::Linear { .. }))
    }

    pub fn skip_count(&self) -> usize {
        self.layers.iter().filter(|l| l.skip_from.is_some()).count()
    }

    fn count(&self, f: impl Fn(&LayerKind) -> bool) -> usize {
        self.layers.iter().filter(|l| f(&l.kind)).count()
    }
}

fn image(shape: &[usize]) -> Option<[usize; 3]> {
    match *shape {
        [c, h, w] => Some([c, h, w]),
        _ => None,
    }
}
