//! File formats: binary tag streams, JSON configs and manifests, CSV tables.

pub mod config;
pub mod manifest;
pub mod table;
pub mod tagfile;

pub use config::{RunConfig, Resolved};
pub use manifest::{FileDigest, Manifest};
pub use tagfile::{read_tags, write_tags, TagReader, TagWriter};
