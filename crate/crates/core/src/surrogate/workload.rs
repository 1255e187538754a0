//! Layer-level descriptors of the DNN workloads the surrogate understands.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Linear,
    /// Activation-by-activation products (QK^T, AV), mapped onto digital CIM.
    Attention,
}

/// One weight-stationary matrix-vector workload.
///
/// `weight_rows x weight_cols` is the stationary matrix (per head for attention),
/// `activations` the number of input vectors streamed through it per inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub kind: LayerKind,
    pub weight_rows: u64,
    pub weight_cols: u64,
    pub ops: u64,
    pub activations: u64,
}

impl LayerDesc {
    pub fn new(kind: LayerKind, weight_rows: u64, weight_cols: u64, activations: u64) -> Self {
        Self {
            kind,
            weight_rows,
            weight_cols,
            // one multiply plus one add per MAC
            ops: 2 * weight_rows * weight_cols * activations,
            activations,
        }
    }

    fn conv(k: u64, cin: u64, cout: u64, out_hw: u64) -> Self {
        Self::new(LayerKind::Conv, k * k * cin, cout, out_hw * out_hw)
    }

    fn linear(cin: u64, cout: u64, vectors: u64) -> Self {
        Self::new(LayerKind::Linear, cin, cout, vectors)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub layers: Vec<LayerDesc>,
    pub uses_dcim: bool,
    #[serde(default = "eight")]
    pub input_bits: u32,
    #[serde(default = "eight")]
    pub weight_bits: u32,
}

fn eight() -> u32 {
    8
}

impl Workload {
    pub fn new(name: impl Into<String>, layers: Vec<LayerDesc>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("workload needs at least one layer"));
        }
        if layers
            .iter()
            .any(|l| l.weight_rows == 0 || l.weight_cols == 0 || l.ops == 0 || l.activations == 0)
        {
            return Err(Error::config("layer counts must be positive"));
        }
        let uses_dcim = layers.iter().any(|l| l.kind == LayerKind::Attention);
        Ok(Self {
            name: name.into(),
            layers,
            uses_dcim,
            input_bits: 8,
            weight_bits: 8,
        })
    }

    pub fn with_precision(mut self, input_bits: u32, weight_bits: u32) -> Self {
        self.input_bits = input_bits;
        self.weight_bits = weight_bits;
        self
    }

    pub fn total_ops(&self) -> u64 {
        self.layers.iter().map(|l| l.ops).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dataset {
    Cifar10,
    Cifar100,
    ImageNet,
}

impl Dataset {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "cifar10" => Some(Dataset::Cifar10),
            "cifar100" => Some(Dataset::Cifar100),
            "imagenet" => Some(Dataset::ImageNet),
            _ => None,
        }
    }

    fn classes(self) -> u64 {
        match self {
            Dataset::Cifar10 => 10,
            Dataset::Cifar100 => 100,
            Dataset::ImageNet => 1000,
        }
    }
}

/// ResNet-50 at 224x224.
pub fn resnet50() -> Workload {
    let mut layers = vec![LayerDesc::conv(7, 3, 64, 112)];
    let stages = [(3, 64, 256, 56), (4, 128, 512, 28), (6, 256, 1024, 14), (3, 512, 2048, 7)];
    let mut cin = 64;
    for (blocks, mid, out, hw) in stages {
        for b in 0..blocks {
            layers.push(LayerDesc::conv(1, cin, mid, hw));
            layers.push(LayerDesc::conv(3, mid, mid, hw));
            layers.push(LayerDesc::conv(1, mid, out, hw));
            if b == 0 {
                layers.push(LayerDesc::conv(1, cin, out, hw));
            }
            cin = out;
        }
    }
    layers.push(LayerDesc::linear(2048, 1000, 1));
    Workload::new("ResNet-50", layers).expect("static workload")
}

fn resnet18_layers(dataset: Dataset) -> Vec<LayerDesc> {
    let (mut layers, base_hw) = match dataset {
        Dataset::ImageNet => (vec![LayerDesc::conv(7, 3, 64, 112)], 56),
        _ => (vec![LayerDesc::conv(3, 3, 64, 32)], 32),
    };
    let mut cin = 64;
    for (i, width) in [64u64, 128, 256, 512].into_iter().enumerate() {
        let hw = base_hw >> i;
        for b in 0..2 {
            layers.push(LayerDesc::conv(3, cin, width, hw));
            layers.push(LayerDesc::conv(3, width, width, hw));
            if b == 0 && cin != width {
                layers.push(LayerDesc::conv(1, cin, width, hw));
            }
            cin = width;
        }
    }
    layers.push(LayerDesc::linear(512, dataset.classes(), 1));
    layers
}

/// ResNet-18; CIFAR inputs use the 3x3 stem at 32x32.
pub fn resnet18(dataset: Dataset) -> Workload {
    Workload::new("ResNet-18", resnet18_layers(dataset)).expect("static workload")
}

/// The 8-layer VGG used with 32x32 inputs.
pub fn vgg8(dataset: Dataset) -> Workload {
    let layers = vec![
        LayerDesc::conv(3, 3, 128, 32),
        LayerDesc::conv(3, 128, 128, 32),
        LayerDesc::conv(3, 128, 256, 16),
        LayerDesc::conv(3, 256, 256, 16),
        LayerDesc::conv(3, 256, 512, 8),
        LayerDesc::conv(3, 512, 512, 8),
        LayerDesc::linear(8192, 1024, 1),
        LayerDesc::linear(1024, dataset.classes(), 1),
    ];
    Workload::new("VGG8", layers).expect("static workload")
}

fn transformer_block(layers: &mut Vec<LayerDesc>, dim: u64, heads: u64, tokens: u64, attn_len: u64) {
    let head_dim = dim / heads;
    layers.push(LayerDesc::linear(dim, 3 * dim, tokens));
    // QK^T: keys are the stationary operand, one query vector per token and head
    layers.push(LayerDesc::new(LayerKind::Attention, head_dim, attn_len, tokens * heads));
    // AV: values stationary
    layers.push(LayerDesc::new(LayerKind::Attention, attn_len, head_dim, tokens * heads));
    layers.push(LayerDesc::linear(dim, dim, tokens));
    layers.push(LayerDesc::linear(dim, 4 * dim, tokens));
    layers.push(LayerDesc::linear(4 * dim, dim, tokens));
}

/// Swin Transformer Tiny, 7x7 windows, 224x224 input.
pub fn swin_t() -> Workload {
    let mut layers = vec![LayerDesc::conv(4, 3, 96, 56)];
    let dims = [96u64, 192, 384, 768];
    let depths = [2, 2, 6, 2];
    let heads = [3u64, 6, 12, 24];
    for s in 0..4 {
        let hw = 56u64 >> s;
        let tokens = hw * hw;
        for _ in 0..depths[s] {
            transformer_block(&mut layers, dims[s], heads[s], tokens, 49);
        }
        if s < 3 {
            // patch merging
            layers.push(LayerDesc::linear(4 * dims[s], 2 * dims[s], tokens / 4));
        }
    }
    layers.push(LayerDesc::linear(768, 1000, 1));
    Workload::new("Swin-T", layers).expect("static workload")
}

/// ViT-Base/16 at 224x224 (196 patches plus the class token).
pub fn vit_b() -> Workload {
    let mut layers = vec![LayerDesc::conv(16, 3, 768, 14)];
    for _ in 0..12 {
        transformer_block(&mut layers, 768, 12, 197, 197);
    }
    layers.push(LayerDesc::linear(768, 1000, 1));
    Workload::new("ViT-B", layers).expect("static workload")
}

/// Canonical model names accepted by [`by_name`].
pub const MODELS: [&str; 5] = ["VGG8", "ResNet-18", "ResNet-50", "Swin-T", "ViT-B"];

/// Builds a workload from a model name and dataset name.
pub fn by_name(model: &str, dataset: &str) -> Result<Workload> {
    let ds = Dataset::parse(dataset)
        .ok_or_else(|| Error::config(format!("unknown dataset `{dataset}`")))?;
    let key = model.to_ascii_lowercase().replace(['-', '_', ' '], "");
    let w = match key.as_str() {
        "vgg8" => vgg8(ds),
        "resnet18" => resnet18(ds),
        "resnet50" => resnet50(),
        "swint" => swin_t(),
        "vitb" => vit_b(),
        _ => return Err(Error::config(format!("unknown model `{model}`"))),
    };
    if matches!(key.as_str(), "resnet50" | "swint" | "vitb") && ds != Dataset::ImageNet {
        return Err(Error::config(format!("{model} is only modeled on ImageNet")));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resnet50_op_count_is_about_eight_gops() {
        let w = resnet50();
        assert!(!w.uses_dcim);
        let gops = w.total_ops() as f64 / 1e9;
        assert!((7.0..9.0).contains(&gops), "{gops}");
    }

    #[test]
    fn transformers_use_dcim() {
        assert!(swin_t().uses_dcim);
        assert!(vit_b().uses_dcim);
        let gops = vit_b().total_ops() as f64 / 1e9;
        assert!((30.0..40.0).contains(&gops), "{gops}");
    }

    #[test]
    fn rejects_degenerate_workloads() {
        assert!(Workload::new("x", vec![]).is_err());
        let bad = LayerDesc { kind: LayerKind::Linear, weight_rows: 0, weight_cols: 1, ops: 1, activations: 1 };
        assert!(Workload::new("x", vec![bad]).is_err());
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!(by_name("resnet-50", "ImageNet").unwrap().name, "ResNet-50");
        assert_eq!(by_name("VGG8", "cifar-10").unwrap().layers.last().unwrap().weight_cols, 10);
        assert!(by_name("Swin-T", "CIFAR-10").is_err());
        assert!(by_name("AlexNet", "ImageNet").is_err());
    }
}
