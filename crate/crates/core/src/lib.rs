//! Image-collection cartography: ingest a collection, describe every image,
//! lay the collection out in 2D, tile it for zoomable viewing, and drive the
//! view with gestures classified from pose keypoints.

pub mod atlas;
pub mod demo;
pub mod embed;
pub mod error;
pub mod gesture;
pub mod imageops;
pub mod ingest;
pub mod layout;
pub mod pipeline;

pub use embed::EmbeddingMatrix;
pub use error::{Error, Result};
pub use ingest::CollectionObject;
pub use layout::{KnnGraph, Layout2D, LayoutConfig};
