//! File formats: model files, policies, results.

mod model_file;
mod policy_file;
mod results;

pub use model_file::{parse_model, parse_model_str, serialize_model, write_model};
pub use policy_file::{read_policy, write_policy, PolicyFile};
pub use results::{
    results_csv_string, write_results_csv, write_results_file, write_summary, Summary, CSV_HEADER,
};
