//! Dataset ingestion, spike encoding and target construction.

pub mod cache;
pub mod encode;
pub mod idx;
pub mod nmnist;
pub mod synthetic;

pub use cache::{read_cache, write_cache, CacheWriter, CachedSample};
pub use encode::{make_targets, poisson_encode, poisson_steps};
pub use idx::{load_idx, save_idx, IdxArray, StaticImage};
pub use nmnist::{list_nmnist_dir, load_nmnist, nmnist_to_steps, nmnist_to_trains, Event, EventSample};
pub use synthetic::prototype_images;

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Reads a whole file, transparently inflating a `.gz` suffix. When `path`
/// does not exist but `path.gz` does, the compressed file is used.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let gz_sibling = {
        let mut s = path.as_os_str().to_owned();
        s.push(".gz");
        std::path::PathBuf::from(s)
    };
    let (actual, compressed) = if path.exists() {
        (path.to_path_buf(), path.extension().is_some_and(|e| e == "gz"))
    } else if gz_sibling.exists() {
        (gz_sibling, true)
    } else {
        return Err(Error::data(format!("{}: no such file", path.display())));
    };
    let file = File::open(&actual).map_err(|e| Error::data(format!("{}: {e}", actual.display())))?;
    let mut buf = Vec::new();
    let res = if compressed {
        flate2::read::GzDecoder::new(file).read_to_end(&mut buf)
    } else {
        std::io::BufReader::new(file).read_to_end(&mut buf)
    };
    res.map_err(|e| Error::data(format!("{}: {e}", actual.display())))?;
    Ok(buf)
}
