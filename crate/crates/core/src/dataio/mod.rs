//! Panel ingestion, target construction, recursive standardization and
//! expanding-window splits.

mod dataset;
mod month;
mod panel;
mod split;
mod transform;

pub use dataset::{build_dataset, standardize, Scaler, Standardized, SupervisedDataset};
pub use month::{Month, ParseMonthError};
pub use panel::{load_panel, parse_panel, PanelFormat, SeriesPanel};
pub use split::{expanding_windows, Segment, SplitSpec, Window};
pub use transform::{build_target, DatedSeries, PredictorTransform, TargetSpec, TargetTransform};
