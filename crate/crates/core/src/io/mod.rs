//! File formats: TOML model descriptions and filter configurations, and
//! the CSV tables exchanged between commands.

mod filter_file;
mod model_file;
mod tables;

pub use filter_file::{load_filter_config, parse_filter_config, CovarianceSpec, FilterFile, DEFAULT_P0, DEFAULT_Q_TAU};
pub use model_file::{load_model, parse_model, ModelFile};
pub use tables::{
    estimate_headers, measurement_headers, orientation_headers, read_estimates, read_measurements, read_orientations,
    read_truth, truth_headers, write_estimates, write_measurements, write_orientations, write_truth, NumericTable,
};

use std::path::Path;

use crate::error::{Error, Result};

/// Deserializes a TOML document; type errors carry the dotted key path.
pub(crate) fn from_toml<T: serde::de::DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    let parse = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let de = toml::Deserializer::parse(text).map_err(|e| parse(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        if at == "." {
            parse(e.into_inner().to_string())
        } else {
            parse(format!("{at}: {}", e.into_inner()))
        }
    })
}
