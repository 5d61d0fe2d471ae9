//! Import hook for the public high-density recording release.
//!
//! The release layout is not yet mapped onto the dataset directory format. A directory that
//! already contains a converted `manifest.json` is loaded as-is; anything else is reported
//! as unsupported so callers can skip gracefully.

use std::path::Path;

use super::dataset::{load_dataset, Dataset, MANIFEST_FILE};
use crate::error::{Error, Result};

/// Environment variable naming a local copy of the release.
pub const RELEASE_DIR_ENV: &str = "HDBCI_RELEASE_DIR";

pub fn import_release(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    if path.join(MANIFEST_FILE).is_file() {
        return load_dataset(path);
    }
    // TODO: map the release's per-subject files once a local copy is available to inspect.
    Err(Error::Unsupported(format!(
        "{} is not a converted dataset directory; the release layout has no adapter yet",
        path.display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_archive_fails_gracefully() {
        let err = import_release(Path::new("/nonexistent/hdbci/release")).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }

    #[test]
    fn unconverted_directory_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(import_release(dir.path()), Err(Error::Unsupported(_))));
    }
}
