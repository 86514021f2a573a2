use super::Dataset;
use crate::emulator::EmulatorModel;
use crate::error::{Result, SageError};

/// Name of the parameter column that carries emulated values of `target`.
pub fn augmented_column_name(target: &str) -> String {
    format!("{target}_emu")
}

/// Appends one parameter column per easy target, filled with the matching
/// provider's predictions on each row.
///
/// True target values never enter the new columns, so training and
/// deployment see the same kind of input.
pub fn augment_with_outputs(ds: &Dataset, easy: &[String], providers: &[EmulatorModel]) -> Result<Dataset> {
    if easy.len() != providers.len() {
        return Err(SageError::input(format!(
            "{} easy targets but {} provider models",
            easy.len(),
            providers.len()
        )));
    }
    let mut names = Vec::with_capacity(easy.len());
    let mut columns = Vec::with_capacity(easy.len());
    for (target, model) in easy.iter().zip(providers) {
        if model.target() != target {
            return Err(SageError::input(format!(
                "provider for '{target}' was trained on target '{}'",
                model.target()
            )));
        }
        if model.is_augmented() {
            return Err(SageError::input(format!(
                "provider for '{target}' is itself augmented; providers must use parameters only"
            )));
        }
        names.push(augmented_column_name(target));
        columns.push(model.predict(ds)?.values);
    }
    ds.with_extra_params(names, columns)
}
