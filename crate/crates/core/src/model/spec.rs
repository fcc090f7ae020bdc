//! Declarative layer graphs.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    /// `[batch, channels, h, w]`; the batch extent is nominal, any batch
    /// size with matching `[channels, h, w]` is accepted.
    Data { shape: [usize; 4] },
    /// `[batch, 1]`
    Label { shape: [usize; 2] },
    /// Valid padding, stride 1.
    Conv { kernel: (usize, usize), num_filters: usize },
    /// Max pooling.
    Pool { kernel: (usize, usize), stride: (usize, usize) },
    Linear { num_outputs: usize },
    Relu,
    /// Inputs: `[logits, label]`.
    SoftmaxWithLoss,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub inputs: Vec<String>,
    pub kind: LayerKind,
}

fn names(inputs: &[&str]) -> Vec<String> {
    inputs.iter().map(|s| (*s).to_owned()).collect()
}

impl LayerSpec {
    pub fn data(name: &str, shape: [usize; 4]) -> Self {
        Self { name: name.to_owned(), inputs: Vec::new(), kind: LayerKind::Data { shape } }
    }

    pub fn label(name: &str, batch: usize) -> Self {
        Self {
            name: name.to_owned(),
            inputs: Vec::new(),
            kind: LayerKind::Label { shape: [batch, 1] },
        }
    }

    pub fn conv(name: &str, inputs: &[&str], kernel: (usize, usize), num_filters: usize) -> Self {
        Self {
            name: name.to_owned(),
            inputs: names(inputs),
            kind: LayerKind::Conv { kernel, num_filters },
        }
    }

    pub fn max_pool(
        name: &str,
        inputs: &[&str],
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Self {
        Self {
            name: name.to_owned(),
            inputs: names(inputs),
            kind: LayerKind::Pool { kernel, stride },
        }
    }

    pub fn linear(name: &str, inputs: &[&str], num_outputs: usize) -> Self {
        Self {
            name: name.to_owned(),
            inputs: names(inputs),
            kind: LayerKind::Linear { num_outputs },
        }
    }

    pub fn relu(name: &str, inputs: &[&str]) -> Self {
        Self { name: name.to_owned(), inputs: names(inputs), kind: LayerKind::Relu }
    }

    pub fn softmax_with_loss(name: &str, logits: &str, label: &str) -> Self {
        Self {
            name: name.to_owned(),
            inputs: names(&[logits, label]),
            kind: LayerKind::SoftmaxWithLoss,
        }
    }

    fn expected_inputs(&self) -> usize {
        match self.kind {
            LayerKind::Data { .. } | LayerKind::Label { .. } => 0,
            LayerKind::SoftmaxWithLoss => 2,
            _ => 1,
        }
    }
}

/// Per-example shape of a layer's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Blob {
    Image { channels: usize, h: usize, w: usize },
    Flat(usize),
    Labels,
    Loss,
}

impl Blob {
    pub fn size(&self) -> usize {
        match *self {
            Blob::Image { channels, h, w } => channels * h * w,
            Blob::Flat(n) => n,
            Blob::Labels | Blob::Loss => 1,
        }
    }
}

/// A validated layer graph: unique names, inputs declared before use,
/// exactly one data, label and loss layer, and consistent shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetParams {
    layers: Vec<LayerSpec>,
    blobs: Vec<Blob>,
    inputs: Vec<Vec<usize>>,
}

impl NetParams {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let graph = |msg: String| Error::Graph(msg);
        let mut blobs: Vec<Blob> = Vec::with_capacity(layers.len());
        let mut inputs: Vec<Vec<usize>> = Vec::with_capacity(layers.len());
        let (mut n_data, mut n_label, mut n_loss) = (0, 0, 0);

        for (i, layer) in layers.iter().enumerate() {
            if layers[..i].iter().any(|l| l.name == layer.name) {
                return Err(graph(format!("duplicate layer name {:?}", layer.name)));
            }
            if layer.inputs.len() != layer.expected_inputs() {
                return Err(graph(format!(
                    "layer {:?} takes {} input(s), got {}",
                    layer.name,
                    layer.expected_inputs(),
                    layer.inputs.len()
                )));
            }
            let mut idx = Vec::with_capacity(layer.inputs.len());
            for input in &layer.inputs {
                match layers[..i].iter().position(|l| &l.name == input) {
                    Some(j) => idx.push(j),
                    None if layers[i..].iter().any(|l| &l.name == input) => {
                        return Err(graph(format!(
                            "layer {:?} uses {:?} before it is declared",
                            layer.name, input
                        )))
                    }
                    None => {
                        return Err(graph(format!(
                            "layer {:?} references unknown layer {:?}",
                            layer.name, input
                        )))
                    }
                }
            }
            let src = |k: usize| blobs[idx[k]];
            let blob = match layer.kind {
                LayerKind::Data { shape } => {
                    n_data += 1;
                    if shape.iter().any(|&d| d == 0) {
                        return Err(graph(format!("data layer {:?} has a zero extent", layer.name)));
                    }
                    Blob::Image { channels: shape[1], h: shape[2], w: shape[3] }
                }
                LayerKind::Label { shape } => {
                    n_label += 1;
                    if shape[1] != 1 || shape[0] == 0 {
                        return Err(graph(format!("label layer {:?} must be [batch, 1]", layer.name)));
                    }
                    Blob::Labels
                }
                LayerKind::Conv { kernel: (kh, kw), num_filters } => match src(0) {
                    Blob::Image { h, w, .. }
                        if kh >= 1 && kw >= 1 && kh <= h && kw <= w && num_filters >= 1 =>
                    {
                        Blob::Image { channels: num_filters, h: h - kh + 1, w: w - kw + 1 }
                    }
                    other => {
                        return Err(graph(format!(
                            "conv {:?}: kernel {kh}x{kw} x{num_filters} does not fit input {other:?}",
                            layer.name
                        )))
                    }
                },
                LayerKind::Pool { kernel: (kh, kw), stride: (sh, sw) } => match src(0) {
                    Blob::Image { channels, h, w }
                        if kh >= 1 && kw >= 1 && sh >= 1 && sw >= 1 && kh <= h && kw <= w =>
                    {
                        Blob::Image { channels, h: (h - kh) / sh + 1, w: (w - kw) / sw + 1 }
                    }
                    other => {
                        return Err(graph(format!(
                            "pool {:?}: kernel {kh}x{kw} stride {sh}x{sw} does not fit input {other:?}",
                            layer.name
                        )))
                    }
                },
                LayerKind::Linear { num_outputs } => match src(0) {
                    Blob::Image { .. } | Blob::Flat(_) if num_outputs >= 1 => Blob::Flat(num_outputs),
                    other => {
                        return Err(graph(format!("linear {:?}: bad input {other:?}", layer.name)))
                    }
                },
                LayerKind::Relu => match src(0) {
                    b @ (Blob::Image { .. } | Blob::Flat(_)) => b,
                    other => {
                        return Err(graph(format!("relu {:?}: bad input {other:?}", layer.name)))
                    }
                },
                LayerKind::SoftmaxWithLoss => {
                    n_loss += 1;
                    match (src(0), src(1)) {
                        (Blob::Flat(c), Blob::Labels) if c >= 1 => Blob::Loss,
                        (a, b) => {
                            return Err(graph(format!(
                                "loss {:?} needs [logits, label], got {a:?}, {b:?}",
                                layer.name
                            )))
                        }
                    }
                }
            };
            if matches!(layer.kind, LayerKind::Data { .. } | LayerKind::Label { .. }) {
                // fine: sources
            } else if idx.iter().any(|&j| blobs[j] == Blob::Loss) {
                return Err(graph(format!("layer {:?} consumes the loss", layer.name)));
            }
            blobs.push(blob);
            inputs.push(idx);
        }
        for (count, what) in [(n_data, "data"), (n_label, "label"), (n_loss, "softmax-loss")] {
            if count != 1 {
                return Err(graph(format!("expected exactly one {what} layer, found {count}")));
            }
        }
        Ok(Self { layers, blobs, inputs })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn blob(&self, layer: usize) -> Blob {
        self.blobs[layer]
    }

    pub(crate) fn input_indices(&self, layer: usize) -> &[usize] {
        &self.inputs[layer]
    }

    pub(crate) fn data_index(&self) -> usize {
        self.position(|k| matches!(k, LayerKind::Data { .. }))
    }

    pub(crate) fn label_index(&self) -> usize {
        self.position(|k| matches!(k, LayerKind::Label { .. }))
    }

    pub(crate) fn loss_index(&self) -> usize {
        self.position(|k| matches!(k, LayerKind::SoftmaxWithLoss))
    }

    fn position(&self, pred: impl Fn(&LayerKind) -> bool) -> usize {
        self.layers.iter().position(|l| pred(&l.kind)).expect("validated graph")
    }

    /// `[channels, h, w]` expected by the data layer.
    pub fn input_dims(&self) -> [usize; 3] {
        match self.layers[self.data_index()].kind {
            LayerKind::Data { shape } => [shape[1], shape[2], shape[3]],
            _ => unreachable!(),
        }
    }

    pub fn num_classes(&self) -> usize {
        let logits = self.inputs[self.loss_index()][0];
        self.blobs[logits].size()
    }

    /// Parameter shapes per layer, in layer order: `[kernel, bias]` for conv
    /// and linear layers, nothing for the rest.
    pub fn weight_shapes(&self) -> Vec<(String, Vec<Vec<usize>>)> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let shapes = match l.kind {
                    LayerKind::Conv { kernel: (kh, kw), num_filters } => {
                        let c = match self.blobs[self.inputs[i][0]] {
                            Blob::Image { channels, .. } => channels,
                            _ => unreachable!(),
                        };
                        vec![vec![num_filters, c, kh, kw], vec![num_filters]]
                    }
                    LayerKind::Linear { num_outputs } => {
                        let fan_in = self.blobs[self.inputs[i][0]].size();
                        vec![vec![num_outputs, fan_in], vec![num_outputs]]
                    }
                    _ => Vec::new(),
                };
                (l.name.clone(), shapes)
            })
            .collect()
    }

    /// The LeNet graph: conv(5x5) → maxpool(2) → conv(5x5) → maxpool(2) →
    /// linear → ReLU → linear → softmax loss.
    pub fn lenet(
        batch: usize,
        input: [usize; 3],
        filters: (usize, usize),
        hidden: usize,
        num_classes: usize,
    ) -> Result<Self> {
        Self::new(vec![
            LayerSpec::data("data", [batch, input[0], input[1], input[2]]),
            LayerSpec::label("label", batch),
            LayerSpec::conv("conv1", &["data"], (5, 5), filters.0),
            LayerSpec::max_pool("pool1", &["conv1"], (2, 2), (2, 2)),
            LayerSpec::conv("conv2", &["pool1"], (5, 5), filters.1),
            LayerSpec::max_pool("pool2", &["conv2"], (2, 2), (2, 2)),
            LayerSpec::linear("ip1", &["pool2"], hidden),
            LayerSpec::relu("relu1", &["ip1"]),
            LayerSpec::linear("ip2", &["relu1"], num_classes),
            LayerSpec::softmax_with_loss("loss", "ip2", "label"),
        ])
    }

    /// `lenet-small`: the LeNet graph with 8 and 16 filters and 64 hidden units.
    pub fn lenet_small(batch: usize, input: [usize; 3], num_classes: usize) -> Result<Self> {
        Self::lenet(batch, input, (8, 16), 64, num_classes)
    }

    /// `mlp`: linear → ReLU → linear → softmax loss.
    pub fn mlp(batch: usize, input: [usize; 3], hidden: usize, num_classes: usize) -> Result<Self> {
        Self::new(vec![
            LayerSpec::data("data", [batch, input[0], input[1], input[2]]),
            LayerSpec::label("label", batch),
            LayerSpec::linear("ip1", &["data"], hidden),
            LayerSpec::relu("relu1", &["ip1"]),
            LayerSpec::linear("ip2", &["relu1"], num_classes),
            LayerSpec::softmax_with_loss("loss", "ip2", "label"),
        ])
    }
}

/// Text form used by config files, one layer per line:
///
/// ```text
/// data name=data shape=100,1,28,28
/// label name=label shape=100,1
/// conv name=conv1 inputs=data kernel=5,5 filters=20
/// pool name=pool1 inputs=conv1 kernel=2,2 stride=2,2
/// linear name=ip1 inputs=pool2 outputs=500
/// relu name=relu1 inputs=ip1
/// softmax-loss name=loss inputs=ip2,label
/// ```
impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |msg: String| Error::LayerSyntax(format!("{s:?}: {msg}"));
        let mut words = s.split_whitespace();
        let kind = words.next().ok_or_else(|| err("empty".into()))?;
        let mut name = None;
        let mut inputs = Vec::new();
        let mut shape: Option<Vec<usize>> = None;
        let mut kernel: Option<Vec<usize>> = None;
        let mut stride: Option<Vec<usize>> = None;
        let mut count: Option<usize> = None;
        for word in words {
            let (key, value) = word
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {word:?}")))?;
            let ints = || -> Result<Vec<usize>> {
                value
                    .split(',')
                    .map(|v| v.trim().parse::<usize>().map_err(|_| err(format!("bad integer list {value:?}"))))
                    .collect()
            };
            match key {
                "name" => name = Some(value.to_string()),
                "inputs" => inputs = value.split(',').map(|v| v.trim().to_string()).collect(),
                "shape" => shape = Some(ints()?),
                "kernel" => kernel = Some(ints()?),
                "stride" => stride = Some(ints()?),
                "filters" | "outputs" => {
                    count = Some(value.parse().map_err(|_| err(format!("bad count {value:?}")))?)
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        let name = name.ok_or_else(|| err("missing name=".into()))?;
        let pair = |v: Option<Vec<usize>>, what: &str| -> Result<(usize, usize)> {
            match v.as_deref() {
                Some([a]) => Ok((*a, *a)),
                Some([a, b]) => Ok((*a, *b)),
                _ => Err(err(format!("{what} must be N or N,M"))),
            }
        };
        let need_count = |c: Option<usize>| c.ok_or_else(|| err("missing filters=/outputs=".into()));
        let kind = match kind {
            "data" => match shape.as_deref() {
                Some(&[n, c, h, w]) => LayerKind::Data { shape: [n, c, h, w] },
                _ => return Err(err("data shape must be batch,channels,h,w".into())),
            },
            "label" => match shape.as_deref() {
                Some(&[n, 1]) => LayerKind::Label { shape: [n, 1] },
                _ => return Err(err("label shape must be batch,1".into())),
            },
            "conv" => LayerKind::Conv { kernel: pair(kernel, "kernel")?, num_filters: need_count(count)? },
            "pool" => {
                let kernel = pair(kernel, "kernel")?;
                let stride = if stride.is_some() { pair(stride, "stride")? } else { kernel };
                LayerKind::Pool { kernel, stride }
            }
            "linear" => LayerKind::Linear { num_outputs: need_count(count)? },
            "relu" => LayerKind::Relu,
            "softmax-loss" => LayerKind::SoftmaxWithLoss,
            other => return Err(err(format!("unknown layer kind {other:?}"))),
        };
        Ok(Self { name, inputs, kind })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            LayerKind::Data { .. } => "data",
            LayerKind::Label { .. } => "label",
            LayerKind::Conv { .. } => "conv",
            LayerKind::Pool { .. } => "pool",
            LayerKind::Linear { .. } => "linear",
            LayerKind::Relu => "relu",
            LayerKind::SoftmaxWithLoss => "softmax-loss",
        };
        write!(f, "{kind} name={}", self.name)?;
        if !self.inputs.is_empty() {
            write!(f, " inputs={}", self.inputs.join(","))?;
        }
        match self.kind {
            LayerKind::Data { shape: [n, c, h, w] } => write!(f, " shape={n},{c},{h},{w}"),
            LayerKind::Label { shape: [n, one] } => write!(f, " shape={n},{one}"),
            LayerKind::Conv { kernel: (kh, kw), num_filters } => {
                write!(f, " kernel={kh},{kw} filters={num_filters}")
            }
            LayerKind::Pool { kernel: (kh, kw), stride: (sh, sw) } => {
                write!(f, " kernel={kh},{kw} stride={sh},{sw}")
            }
            LayerKind::Linear { num_outputs } => write!(f, " outputs={num_outputs}"),
            LayerKind::Relu | LayerKind::SoftmaxWithLoss => Ok(()),
        }
    }
}
