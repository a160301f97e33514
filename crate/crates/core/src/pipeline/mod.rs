//! Landmark analysis of dated cohort CSVs: loading, dataset construction,
//! the mechanism test, model comparison and stratified survival curves.

mod dataset;
mod export;
mod km;
mod load;
mod report;
mod schema;

pub use dataset::{build_analysis_dataset, AnalysisData, ExclusionReport};
pub use export::{default_origin, export_dated_cohort};
pub use km::{km_by_offset_bins, vaccination_time_zero, KmStrata, TimeZero, KM_CSV_HEADER};
pub use load::{load_cohort, load_cohort_from_reader, parse_date, RawCohort, RawRecord, RowError, DATE_FORMAT};
pub use report::{
    dual_model_comparison, format_hr, format_p, mechanism_test, sensitivity_label, CovariateResult,
    DualModelRow, DualModelTable, MechanismOptions, MechanismReport, SensitivityReport, DUAL_CSV_HEADER,
    OFFSET_LABEL,
};
pub use schema::{
    AnalysisConfig, AnalysisWindow, CohortSchema, CovariateKind, CovariateSpec, DEFAULT_SENSITIVITY_CAP_DAYS,
};
