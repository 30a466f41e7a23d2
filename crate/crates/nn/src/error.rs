use tsa_core::container::ContainerError;

use crate::descriptor::DescriptorError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("{what}: expected {expected}, found {found}")]
    Shape { what: &'static str, expected: usize, found: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    Label { label: u32, n_classes: usize },
    #[error("non-finite gradient in {layer}")]
    NonFiniteGradient { layer: String },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("AUC needs both classes present in the split")]
    SingleClass,
    #[error("weights file: {0}")]
    Weights(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
}
