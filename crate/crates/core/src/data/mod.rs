//! Dataset files, the synthetic benchmark and prompt templates.

mod dataset;
mod synthetic;
mod templates;

pub use dataset::{load_dataset, load_ground_truth, truth_path, DatasetManifest, EmbeddingDataset};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
pub use templates::{
    apply_rotation, build_template_set, ingest_templates, parse_templates, template_rotation, Givens,
    TemplateSet, PLACEHOLDER,
};
