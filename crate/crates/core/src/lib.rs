//! Body-area-network fusion: R-R and GPS ingestion, clock alignment, HRV,
//! co-location and movement detection, and group activity segmentation,
//! wired together over an in-process topic bus.

pub mod activity;
pub mod bus;
pub mod geo;
pub mod hrv;
pub mod ingest;
pub mod pipeline;
pub mod config;
pub mod record;
pub mod scenario;
pub mod storage;
pub mod timesync;

pub use record::{Payload, Record, RecordKind, TimeInterval, Timestamp};
