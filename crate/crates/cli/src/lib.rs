//! Library side of the `drmech` command: scenario files, run manifests,
//! results tables and figures.

pub mod figures;
pub mod manifest;
pub mod results;
pub mod run;
pub mod scenario_file;
