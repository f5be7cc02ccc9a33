//! Feature-quality measurements: proxy A-distance between domains, bottleneck
//! feature dumps, and per-epoch accuracy/loss curves.

pub mod a_distance;
pub mod curves;
pub mod features;

pub use a_distance::{a_distance, ADistanceResult, SplitSpec};
pub use curves::{
    accuracy_csv, accuracy_svg, compare_plr, curve_report, losses_csv, losses_svg, plr_report,
    CurveFiles, PlrComparison,
};
pub use features::{export_features, FeatureDump, FeatureFormat, FEATURE_FORMAT};
