//! Layer layouts, weight banks, forward inference and reverse-mode gradients for
//! every architecture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bicubic;
use super::spec::{Arch, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::{self, grad, ConvWeights, PadMode, Padding, Scalar, Shape, Tensor};

/// Declared shape of one learnable parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamShape {
    Filters([usize; 4]),
    Vector(usize),
}

impl ParamShape {
    pub fn numel(&self) -> usize {
        match self {
            ParamShape::Filters(d) => d.iter().product(),
            ParamShape::Vector(n) => *n,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            ParamShape::Filters(d) => d.to_vec(),
            ParamShape::Vector(n) => vec![*n],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: ParamShape,
    init: Init,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Init {
    /// Uniform in ±sqrt(1 / fan_in).
    FanIn(usize),
    Constant(u32),
    Bicubic,
}

#[derive(Clone, Debug, PartialEq)]
enum Stage {
    Pad(Padding, PadMode),
    Conv {
        weight: usize,
        bias: Option<usize>,
        pad: usize,
    },
    ConvTransposed {
        weight: usize,
        bias: Option<usize>,
        stride: usize,
    },
    Tanh,
    Prelu {
        slope: usize,
    },
    Shuffle(usize),
}

#[derive(Copy, Clone, Debug, PartialEq)]
enum Head {
    Identity,
    Max,
    TemplateMatching(usize),
    Transformer(usize),
}

/// The ordered stages and parameters implied by a [`ModelSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    params: Vec<ParamSpec>,
    stages: Vec<Stage>,
    head: Head,
}

struct Builder {
    params: Vec<ParamSpec>,
    stages: Vec<Stage>,
}

impl Builder {
    fn param(&mut self, name: String, shape: ParamShape, init: Init) -> usize {
        self.params.push(ParamSpec { name, shape, init });
        self.params.len() - 1
    }

    fn conv(&mut self, name: &str, out: usize, inp: usize, k: usize, bias: bool) {
        let fan_in = inp * k * k;
        let weight = self.param(
            format!("{name}.weight"),
            ParamShape::Filters([out, inp, k, k]),
            Init::FanIn(fan_in),
        );
        let bias = bias.then(|| {
            self.param(format!("{name}.bias"), ParamShape::Vector(out), Init::FanIn(fan_in))
        });
        self.stages.push(Stage::Conv {
            weight,
            bias,
            pad: (k - 1) / 2,
        });
    }

    fn prelu(&mut self, name: &str, channels: usize) {
        let slope = self.param(
            format!("{name}.slope"),
            ParamShape::Vector(channels),
            Init::Constant(0.25f32.to_bits()),
        );
        self.stages.push(Stage::Prelu { slope });
    }
}

impl Layout {
    pub fn for_spec(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let s = spec.scale;
        let s2 = s * s;
        let mut b = Builder {
            params: Vec::new(),
            stages: Vec::new(),
        };
        let head = match spec.arch {
            Arch::Bicubic => {
                let weight = b.param(
                    "filter.weight".into(),
                    ParamShape::Filters([s2, 1, bicubic::PHASE_TAPS, bicubic::PHASE_TAPS]),
                    Init::Bicubic,
                );
                b.stages.push(Stage::Pad(bicubic::upscale_padding(), PadMode::Symmetric));
                b.stages.push(Stage::Conv {
                    weight,
                    bias: None,
                    pad: 0,
                });
                b.stages.push(Stage::Shuffle(s));
                Head::Identity
            }
            Arch::EsrMax | Arch::EsrTm | Arch::EsrTr => {
                let k = spec.kernel.unwrap_or(1);
                let c = spec.candidates_or_one();
                b.conv("filter", spec.arch.head_groups() * c * s2, 1, k, false);
                b.stages.push(Stage::Shuffle(s));
                match spec.arch {
                    Arch::EsrMax => Head::Max,
                    Arch::EsrTm => Head::TemplateMatching(c),
                    _ => Head::Transformer(c),
                }
            }
            Arch::EsrCnn | Arch::Espcn => {
                let d = spec.features.unwrap_or(0);
                let hidden = spec.hidden.unwrap_or(1);
                if d > 0 {
                    b.conv("conv1", d, 1, 5, true);
                    b.stages.push(Stage::Tanh);
                    b.conv("conv2", hidden, d, 3, true);
                } else {
                    b.conv("conv2", hidden, 1, 3, true);
                }
                b.stages.push(Stage::Tanh);
                if spec.arch == Arch::EsrCnn {
                    let c = spec.candidates_or_one();
                    b.conv("filter", 2 * c * s2, hidden, 3, false);
                    b.stages.push(Stage::Shuffle(s));
                    Head::TemplateMatching(c)
                } else {
                    b.conv("conv3", s2, hidden, 3, true);
                    b.stages.push(Stage::Shuffle(s));
                    Head::Identity
                }
            }
            Arch::Fsrcnn => {
                let d = spec.features.unwrap_or(1);
                let hidden = spec.hidden.unwrap_or(1);
                b.conv("feature", d, 1, 5, true);
                b.prelu("feature", d);
                b.conv("shrink", hidden, d, 1, true);
                b.prelu("shrink", hidden);
                for m in 0..spec.mapping.unwrap_or(0) {
                    let name = format!("map{}", m + 1);
                    b.conv(&name, hidden, hidden, 3, true);
                    b.prelu(&name, hidden);
                }
                b.conv("expand", d, hidden, 1, true);
                b.prelu("expand", d);
                let fan_in = d * 81;
                let weight = b.param(
                    "deconv.weight".into(),
                    ParamShape::Filters([1, d, 9, 9]),
                    Init::FanIn(fan_in),
                );
                let bias = b.param("deconv.bias".into(), ParamShape::Vector(1), Init::FanIn(fan_in));
                b.stages.push(Stage::ConvTransposed {
                    weight,
                    bias: Some(bias),
                    stride: s,
                });
                Head::Identity
            }
        };
        Ok(Layout {
            params: b.params,
            stages: b.stages,
            head,
        })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.shape.numel()).sum()
    }
}

/// Exact number of learnable values of a model.
pub fn param_count(spec: &ModelSpec) -> Result<usize> {
    Ok(Layout::for_spec(spec)?.param_count())
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamValue<T = f32> {
    Filters(ConvWeights<T>),
    Vector(Vec<T>),
}

impl<T: Scalar> ParamValue<T> {
    pub fn values(&self) -> &[T] {
        match self {
            ParamValue::Filters(w) => w.data(),
            ParamValue::Vector(v) => v,
        }
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        match self {
            ParamValue::Filters(w) => w.data_mut(),
            ParamValue::Vector(v) => v,
        }
    }

    fn shape(&self) -> ParamShape {
        match self {
            ParamValue::Filters(w) => ParamShape::Filters(w.dims()),
            ParamValue::Vector(v) => ParamShape::Vector(v.len()),
        }
    }

    fn from_values(shape: &ParamShape, data: Vec<T>) -> Result<Self> {
        match shape {
            ParamShape::Filters([o, i, h, w]) => {
                Ok(ParamValue::Filters(ConvWeights::new(*o, *i, *h, *w, data)?))
            }
            ParamShape::Vector(n) => {
                if data.len() != *n {
                    return Err(Error::shape(format!("vector of {n} got {} values", data.len())));
                }
                Ok(ParamValue::Vector(data))
            }
        }
    }

    fn cast<U: Scalar>(&self) -> ParamValue<U> {
        match self {
            ParamValue::Filters(w) => ParamValue::Filters(w.cast()),
            ParamValue::Vector(v) => ParamValue::Vector(v.iter().map(|x| U::of(x.as_f64())).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub value: ParamValue<T>,
}

/// Named parameters of one model, in layout order. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBank<T = f32> {
    spec: ModelSpec,
    layout: Layout,
    params: Vec<Param<T>>,
}

impl<T: Scalar> WeightBank<T> {
    /// Builds a bank from `(name, shape, values)` entries, checking them against the layout.
    pub fn from_values(spec: ModelSpec, entries: Vec<(String, Vec<usize>, Vec<T>)>) -> Result<Self> {
        let layout = Layout::for_spec(&spec)?;
        if entries.len() != layout.params.len() {
            return Err(Error::Weights(format!(
                "{spec} has {} tensors, got {}",
                layout.params.len(),
                entries.len()
            )));
        }
        let mut params = Vec::with_capacity(entries.len());
        for ((name, dims, data), want) in entries.into_iter().zip(&layout.params) {
            if name != want.name || dims != want.shape.dims() {
                return Err(Error::Weights(format!(
                    "{spec}: expected `{}` {:?}, got `{name}` {dims:?}",
                    want.name,
                    want.shape.dims()
                )));
            }
            let value = ParamValue::from_values(&want.shape, data)
                .map_err(|e| Error::Weights(format!("{spec}: `{name}`: {e}")))?;
            params.push(Param { name, value });
        }
        Ok(WeightBank {
            spec,
            layout,
            params,
        })
    }

    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        let layout = Layout::for_spec(spec)?;
        let params = layout
            .params
            .iter()
            .map(|p| Param {
                name: p.name.clone(),
                value: ParamValue::from_values(&p.shape, vec![T::zero(); p.shape.numel()])
                    .expect("layout shapes are consistent"),
            })
            .collect();
        Ok(WeightBank {
            spec: *spec,
            layout,
            params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.values().len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.params {
            p.value.values_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> WeightBank<U> {
        WeightBank {
            spec: self.spec,
            layout: self.layout.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
        }
    }

    /// All values flattened in layout order.
    pub fn flatten(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.value.values().iter().copied()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.values().iter().all(|v| v.is_finite()))
    }

    fn filters(&self, idx: usize) -> &ConvWeights<T> {
        match &self.params[idx].value {
            ParamValue::Filters(w) => w,
            ParamValue::Vector(_) => unreachable!("layout assigns filters here"),
        }
    }

    fn vector(&self, idx: usize) -> &[T] {
        self.params[idx].value.values()
    }

    fn check_input(&self, y: &Tensor<T>) -> Result<()> {
        if y.shape().c != 1 {
            return Err(Error::shape(format!(
                "models take single-channel input, got {}",
                y.shape()
            )));
        }
        Ok(())
    }

    /// Upscales a single-channel batch to (n, 1, s·h, s·w).
    pub fn forward(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(y)?;
        let mut x = y.clone();
        for stage in &self.layout.stages {
            x = self.apply(stage, &x)?;
        }
        self.apply_head(&x)
    }

    /// Upscales pixel values in [0, 255]. Models are trained on [0, 1] inputs, so
    /// the input is normalised and the output rescaled.
    pub fn upscale(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let k = T::of(255.0);
        Ok(self.forward(&y.map(|v| v / k))?.map(|v| v * k))
    }

    /// Forward pass keeping every intermediate needed by [`Self::backward`].
    pub fn forward_trace(&self, y: &Tensor<T>) -> Result<Trace<T>> {
        self.check_input(y)?;
        let mut activations = Vec::with_capacity(self.layout.stages.len() + 1);
        activations.push(y.clone());
        for stage in &self.layout.stages {
            let next = self.apply(stage, activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        let output = self.apply_head(activations.last().expect("non-empty"))?;
        Ok(Trace {
            activations,
            output,
        })
    }

    fn apply(&self, stage: &Stage, x: &Tensor<T>) -> Result<Tensor<T>> {
        match *stage {
            Stage::Pad(pad, mode) => tensor::pad2d(x, pad, mode),
            Stage::Conv { weight, bias, pad } => {
                let out = tensor::conv2d(x, self.filters(weight), 1, pad)?;
                match bias {
                    Some(b) => tensor::add_channel_bias(&out, self.vector(b)),
                    None => Ok(out),
                }
            }
            Stage::ConvTransposed {
                weight,
                bias,
                stride,
            } => {
                let out = tensor::conv2d_transposed(x, self.filters(weight), stride)?;
                match bias {
                    Some(b) => tensor::add_channel_bias(&out, self.vector(b)),
                    None => Ok(out),
                }
            }
            Stage::Tanh => Ok(tensor::tanh_map(x)),
            Stage::Prelu { slope } => tensor::prelu_map(x, self.vector(slope)),
            Stage::Shuffle(s) => tensor::pixel_shuffle(x, s),
        }
    }

    fn apply_head(&self, f: &Tensor<T>) -> Result<Tensor<T>> {
        match self.layout.head {
            Head::Identity => Ok(f.clone()),
            Head::Max => tensor::channel_max(f),
            Head::TemplateMatching(c) => {
                let matching = f.channels(0, c)?;
                let value = f.channels(c, 2 * c)?;
                tensor::weighted_channel_sum(&value, &tensor::softmax_channels(&matching)?)
            }
            Head::Transformer(c) => {
                let query = f.channels(0, c)?;
                let key = f.channels(c, 2 * c)?;
                let value = f.channels(2 * c, 3 * c)?;
                let logits = tensor::hadamard(&query, &key)?;
                tensor::weighted_channel_sum(&value, &tensor::softmax_channels(&logits)?)
            }
        }
    }

    /// Gradients of `sum(upstream ⊙ output)` with respect to every parameter.
    /// Also returns the gradient with respect to the model input.
    pub fn backward(&self, trace: &Trace<T>, upstream: &Tensor<T>) -> Result<(WeightBank<T>, Tensor<T>)> {
        if upstream.shape() != trace.output.shape() {
            return Err(Error::shape(format!(
                "upstream gradient {} does not match output {}",
                upstream.shape(),
                trace.output.shape()
            )));
        }
        let mut grads = self.zeros_like();
        let f = trace.activations.last().expect("non-empty");
        let mut g = self.head_backward(f, upstream)?;
        for (i, stage) in self.layout.stages.iter().enumerate().rev() {
            let x = &trace.activations[i];
            let out = &trace.activations[i + 1];
            g = match *stage {
                Stage::Pad(pad, mode) => grad::pad2d_backward(&g, x.shape(), pad, mode)?,
                Stage::Conv { weight, bias, pad } => {
                    if let Some(b) = bias {
                        grads.set_values(b, grad::bias_backward(&g));
                    }
                    let (gx, gw) = grad::conv2d_backward(x, self.filters(weight), 1, pad, &g)?;
                    grads.set_values(weight, gw.into_data());
                    gx
                }
                Stage::ConvTransposed {
                    weight,
                    bias,
                    stride,
                } => {
                    if let Some(b) = bias {
                        grads.set_values(b, grad::bias_backward(&g));
                    }
                    let (gx, gw) = grad::conv2d_transposed_backward(x, self.filters(weight), stride, &g)?;
                    grads.set_values(weight, gw.into_data());
                    gx
                }
                Stage::Tanh => grad::tanh_backward(out, &g)?,
                Stage::Prelu { slope } => {
                    let (gx, gs) = grad::prelu_backward(x, self.vector(slope), &g)?;
                    grads.set_values(slope, gs);
                    gx
                }
                Stage::Shuffle(s) => grad::pixel_shuffle_backward(&g, s)?,
            };
        }
        Ok((grads, g))
    }

    fn head_backward(&self, f: &Tensor<T>, g: &Tensor<T>) -> Result<Tensor<T>> {
        match self.layout.head {
            Head::Identity => Ok(g.clone()),
            Head::Max => grad::channel_max_backward(f, g),
            Head::TemplateMatching(c) => {
                let matching = f.channels(0, c)?;
                let value = f.channels(c, 2 * c)?;
                let (gv, gm) = grad::softmax_weighted_sum_backward(&value, &matching, g)?;
                Tensor::concat_channels(&[&gm, &gv])
            }
            Head::Transformer(c) => {
                let query = f.channels(0, c)?;
                let key = f.channels(c, 2 * c)?;
                let value = f.channels(2 * c, 3 * c)?;
                let logits = tensor::hadamard(&query, &key)?;
                let (gv, gl) = grad::softmax_weighted_sum_backward(&value, &logits, g)?;
                let gq = tensor::hadamard(&gl, &key)?;
                let gk = tensor::hadamard(&gl, &query)?;
                Tensor::concat_channels(&[&gq, &gk, &gv])
            }
        }
    }

    fn set_values(&mut self, idx: usize, values: Vec<T>) {
        let slot = self.params[idx].value.values_mut();
        debug_assert_eq!(slot.len(), values.len());
        slot.copy_from_slice(&values);
    }

    /// Flat values of every parameter, in layout order.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.params.iter_mut().map(|p| p.value.values_mut())
    }

    pub fn values(&self) -> impl Iterator<Item = &[T]> {
        self.params.iter().map(|p| p.value.values())
    }

    pub(crate) fn same_layout(&self, other: &WeightBank<T>) -> bool {
        self.spec == other.spec
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct Trace<T = f32> {
    activations: Vec<Tensor<T>>,
    pub output: Tensor<T>,
}

/// Input of the model head: the pixel-shuffled channels, ordered matching (or
/// query, key) first and values last.
pub fn head_candidates<T: Scalar>(bank: &WeightBank<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    let trace = bank.forward_trace(y)?;
    Ok(trace.activations.last().expect("non-empty").clone())
}

/// Deterministic initialisation: uniform in ±sqrt(1/fan_in), one ChaCha stream
/// per parameter index. Bicubic gets its interpolation filters.
pub fn init_weights(spec: &ModelSpec, seed: u64) -> Result<WeightBank<f32>> {
    let layout = Layout::for_spec(spec)?;
    let entries = layout
        .params
        .iter()
        .enumerate()
        .map(|(idx, p)| {
            let n = p.shape.numel();
            let data = match p.init {
                Init::FanIn(fan_in) => {
                    let bound = (1.0 / fan_in.max(1) as f64).sqrt() as f32;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(idx as u64);
                    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
                }
                Init::Constant(bits) => vec![f32::from_bits(bits); n],
                Init::Bicubic => bicubic::efficient_filters::<f32>(spec.scale).into_data(),
            };
            (p.name.clone(), p.shape.dims(), data)
        })
        .collect();
    WeightBank::from_values(*spec, entries)
}

/// Fixed bicubic upscaler for `scale`.
pub fn bicubic_bank(scale: usize) -> Result<WeightBank<f32>> {
    init_weights(&ModelSpec::bicubic(scale), 0)
}

/// Shape of the input gradient or output for a given input shape.
pub fn output_shape(spec: &ModelSpec, input: Shape) -> Shape {
    Shape::new(input.n, 1, input.h * spec.scale, input.w * spec.scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts_from_shape_arithmetic() {
        let max = ModelSpec::single_layer(Arch::EsrMax, 2, 3, 1);
        assert_eq!(param_count(&max).unwrap(), 36);
        let tm = ModelSpec::single_layer(Arch::EsrTm, 2, 3, 4);
        assert_eq!(param_count(&tm).unwrap(), 288);
        let tr = ModelSpec::single_layer(Arch::EsrTr, 3, 5, 2);
        assert_eq!(param_count(&tr).unwrap(), 1350);
        // 1→D 5×5 + bias, D→S 3×3 + bias, S→s² 3×3 + bias
        let espcn = ModelSpec::espcn(2, 64, 32);
        assert_eq!(
            param_count(&espcn).unwrap(),
            64 * 25 + 64 + 32 * 64 * 9 + 32 + 4 * 32 * 9 + 4
        );
        let espcn0 = ModelSpec::espcn(2, 0, 3);
        assert_eq!(param_count(&espcn0).unwrap(), 3 * 9 + 3 + 4 * 3 * 9 + 4);
        let fsrcnn = ModelSpec::fsrcnn(2, 6, 3, 1);
        assert_eq!(
            param_count(&fsrcnn).unwrap(),
            (6 * 25 + 6 + 6) + (3 * 6 + 3 + 3) + (3 * 3 * 9 + 3 + 3) + (6 * 3 + 6 + 6) + (6 * 81 + 1)
        );
        let cnn = ModelSpec::esr_cnn(2, 2, 1, 3);
        assert_eq!(param_count(&cnn).unwrap(), 25 + 1 + 3 * 9 + 3 + 2 * 2 * 4 * 3 * 9);
        assert_eq!(param_count(&ModelSpec::bicubic(2)).unwrap(), 4 * 25);
    }

    #[test]
    fn init_is_seeded() {
        let spec = ModelSpec::single_layer(Arch::EsrTm, 2, 3, 4);
        let a = init_weights(&spec, 7).unwrap();
        let b = init_weights(&spec, 7).unwrap();
        let c = init_weights(&spec, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.num_values(), param_count(&spec).unwrap());
        let bound = (1.0f32 / 9.0).sqrt();
        assert!(a.flatten().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn rejects_non_single_channel_input() {
        let bank = bicubic_bank(2).unwrap();
        let y = Tensor::<f32>::zeros(Shape::new(1, 3, 4, 4));
        assert!(matches!(bank.forward(&y), Err(Error::Shape(_))));
    }

    #[test]
    fn bank_rejects_wrong_entries() {
        let spec = ModelSpec::single_layer(Arch::EsrTm, 2, 3, 4);
        let err = WeightBank::<f32>::from_values(spec, vec![]).unwrap_err();
        assert!(matches!(err, Error::Weights(_)));
        let err = WeightBank::<f32>::from_values(
            spec,
            vec![("filter.weight".into(), vec![32, 1, 3, 3], vec![0.0; 287])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Weights(_)));
    }
}
