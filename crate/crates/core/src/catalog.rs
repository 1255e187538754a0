//! Shipped design-space schemas and the workloads they belong to.

use crate::design_space::DesignSpace;
use crate::error::{Error, Result};
use crate::surrogate::workload::{self, Workload};

pub const RESNET50_SCHEMA: &str = include_str!("../data/schemas/resnet50_22nm.json");
pub const SWINT_SCHEMA: &str = include_str!("../data/schemas/swint_22nm.json");
pub const VITB_SCHEMA: &str = include_str!("../data/schemas/vitb_22nm.json");

/// Models with a shipped optimization space.
pub const OPTIMIZABLE_MODELS: [&str; 3] = ["ResNet-50", "Swin-T", "ViT-B"];

pub fn resnet50_space() -> DesignSpace {
    DesignSpace::from_json(RESNET50_SCHEMA).expect("shipped schema is valid")
}

pub fn swint_space() -> DesignSpace {
    DesignSpace::from_json(SWINT_SCHEMA).expect("shipped schema is valid")
}

pub fn vitb_space() -> DesignSpace {
    DesignSpace::from_json(VITB_SCHEMA).expect("shipped schema is valid")
}

fn key(model: &str) -> String {
    model.to_ascii_lowercase().replace(['-', '_', ' '], "")
}

/// Optimization space and workload for a model name.
pub fn model_space(model: &str) -> Result<(DesignSpace, Workload)> {
    match key(model).as_str() {
        "resnet50" => Ok((resnet50_space(), workload::resnet50())),
        "swint" => Ok((swint_space(), workload::swin_t())),
        "vitb" => Ok((vitb_space(), workload::vit_b())),
        _ => Err(Error::config(format!("no design space shipped for model `{model}`"))),
    }
}

/// Schema file name for a model, as written in dataset manifests.
pub fn schema_file(model: &str) -> Result<&'static str> {
    match key(model).as_str() {
        "resnet50" => Ok("resnet50_22nm.json"),
        "swint" => Ok("swint_22nm.json"),
        "vitb" => Ok("vitb_22nm.json"),
        _ => Err(Error::config(format!("no design space shipped for model `{model}`"))),
    }
}

/// Resolves a schema file name (or path ending in one) to the model it describes.
pub fn model_for_schema(file: &str) -> Option<&'static str> {
    let name = std::path::Path::new(file).file_name()?.to_str()?;
    match name {
        "resnet50_22nm.json" => Some("ResNet-50"),
        "swint_22nm.json" => Some("Swin-T"),
        "vitb_22nm.json" => Some("ViT-B"),
        _ => None,
    }
}
