//! Verification of nutrient declarations and allergen prediction for
//! packaged-food product data.

pub mod cli;
pub mod ingest;
pub mod learners;
pub mod metrics;
pub mod model;
pub mod multilabel;
pub mod report;
pub mod rules;
pub mod text;
