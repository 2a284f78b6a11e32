//! Obstacle loading, frame statistics and image snapshots.

mod obj;
mod snapshot;
mod stats;

pub use obj::{load_obj, parse_obj, write_obj, ObjError, ObjSummary};
pub use snapshot::{render_snapshot, snapshot_png, Camera, SnapshotError};
pub use stats::{read_stats_csv, write_stats_csv, Backend, FrameStats, StatsError, CSV_HEADER};
