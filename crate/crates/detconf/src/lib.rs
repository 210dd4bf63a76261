//! File formats, dataset manifests and the `detconf` command-line surface.
//!
//! The algorithmic core lives in `detconf-core`; this crate owns everything
//! that touches the filesystem:
//!
//! * [`manifest`] — the JSON dataset manifest tying image ids to
//!   probability maps and ground-truth polygon files,
//! * [`pmap`] — the `PMAP` binary float-map format (plus 8-bit PGM input),
//! * [`polygons`] — the JSON polygon document for predictions and ground
//!   truth,
//! * [`tables`] — CSV reading/writing with embedded comment headers,
//! * [`model_file`] — forest model persistence,
//! * [`settings`] — config-file loading and flag precedence,
//! * [`commands`] — the subcommand implementations.
//!
//! Every output file embeds the tool version, a digest of the effective
//! configuration and the seed (when one is involved) in `#` comment lines;
//! reruns with identical inputs are byte-identical.

pub mod commands;
pub mod header;
pub mod manifest;
pub mod model_file;
pub mod pmap;
pub mod polygons;
pub mod settings;
pub mod tables;

/// Version stamped into every output header.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
