// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dataset loading for every command that reads `--data`.
//!
//! Accepted inputs: an activation container, an IDX image file, or a
//! directory holding one `*images-idx3*` file and optionally one
//! `*labels-idx1*` file.

use std::path::{Path, PathBuf};

use sparsedict_core::data::{
    decode_activation_matrix, is_activation_container, load_mnist_idx, load_mnist_images, stratified_indices,
    Dataset, Source,
};

use crate::error::{CliError, CliResult};

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn find_in(dir: &Path, needle: &str) -> CliResult<Option<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut hits: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.contains(needle)))
        .collect();
    hits.sort();
    match hits.len() {
        0 => Ok(None),
        1 => Ok(hits.pop()),
        _ => Err(CliError::Validation(format!(
            "{}: several files match {needle:?}; pass the file directly",
            dir.display()
        ))),
    }
}

/// Loads `data`, keeping at most `limit` rows. With labels the kept rows are
/// stratified by class, otherwise they are the first `limit` rows.
pub fn load(data: &Path, labels: Option<&Path>, limit: Option<usize>) -> CliResult<Dataset> {
    let (images, labels) = if data.is_dir() {
        let images = find_in(data, "images-idx3")?.ok_or_else(|| {
            CliError::Io(format!("{}: no *images-idx3* file in directory", data.display()))
        })?;
        let labels = match labels {
            Some(l) => Some(l.to_path_buf()),
            None => find_in(data, "labels-idx1")?,
        };
        (images, labels)
    } else {
        (data.to_path_buf(), labels.map(Path::to_path_buf))
    };

    let bytes = read(&images)?;
    let name = images.display().to_string();
    let (dataset, labels) = if is_activation_container(&bytes) {
        if labels.is_some() {
            return Err(CliError::Validation("--labels only applies to IDX image data".to_string()));
        }
        let x = decode_activation_matrix(&bytes, &name)?;
        (Dataset::new(x, Source::Activations)?, None)
    } else if let Some(lpath) = labels {
        let (ds, labels) = load_mnist_idx(&images, &lpath)?;
        (ds, Some(labels))
    } else {
        (load_mnist_images(&images)?, None)
    };

    match limit {
        None => Ok(dataset),
        Some(0) => Err(CliError::Validation("--limit must be ≥ 1".to_string())),
        Some(l) if l >= dataset.n() => Ok(dataset),
        Some(l) => {
            let idx = match labels {
                Some(labels) => stratified_indices(&labels, l),
                None => (0..l).collect(),
            };
            Ok(dataset.subset(&idx)?)
        }
    }
}
