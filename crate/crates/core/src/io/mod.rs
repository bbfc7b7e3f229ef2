//! File formats: panel CSV, result JSON, experiment CSV and SVG charts.

mod csv;
mod json;
mod svg;

pub use self::csv::{
    load_panel_csv, read_panel_csv, write_panel_csv, write_panel_csv_to, write_report_csv, write_report_csv_to,
    REPORT_HEADER,
};
pub use self::json::{
    read_results_json, results_json_string, write_results_json, CoefficientRow, DidPayload, ExperimentPayload,
    ExperimentRowOut, PdPayload, ResultBody, ResultDocument, SeedInfo, SCHEMA_VERSION,
};
pub use self::svg::{power_chart_svg, render_power_chart, Curve};
