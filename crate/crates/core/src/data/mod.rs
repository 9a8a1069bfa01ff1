//! Raw tabular data, the binary feature space derived from it, and the
//! plumbing around both: CSV ingestion, splitting and synthetic data.

mod binary;
mod discretize;
mod predicate;
mod raw;
mod split;
pub mod synthetic;

pub use binary::BinaryDataset;
pub use discretize::{
    fit_discretizer, quantile_cuts, transform, transform_with_report, DataConfig, DiscretizationSpec,
    GroupSpec, Strategy, TransformReport, VariableBinning, VariableConfig,
};
pub use predicate::{Predicate, RowView};
pub use raw::{Column, ColumnData, ColumnKind, RawDataset, RawRow, Schema};
pub use split::{split, split_indices};
