//! Core of layerlab: the layered document model, the PDF processing pipeline,
//! the predictor framework and the built-in predictors.

pub mod builtin;
pub mod doc;
pub mod pipeline;
pub mod predict;
pub mod render;
