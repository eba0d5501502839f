//! Serialization: Newick and NEXUS trees, exact JSON tree sidecars, the text
//! site matrix, and the binary event log.

mod events;
mod matrix;
mod newick;
mod nexus;
mod sidecar;

pub use events::{decode_event_log, encode_event_log};
pub use matrix::{read_matrix, write_matrix};
pub use newick::{parse_newick, ranked_from_newick, to_newick, unrooted_from_newick, NewickNode};
pub use nexus::{read_nexus_trees, write_nexus_characters, write_nexus_trees};
pub use sidecar::{tree_from_json, tree_to_json, TreeRecord};

use std::path::Path;

use crate::error::Result;

/// Write `contents` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
