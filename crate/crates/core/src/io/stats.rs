use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

pub const CSV_HEADER: &str = "frame,wall_ms,fps,nodes,springs,obstacle_triangles,collision_hits,backend";

/// Wall-clock floor so that `fps = 1000 / wall_ms` stays finite.
const MIN_WALL_MS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Cpu,
    Gpu,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Cpu => "cpu",
            Backend::Gpu => "gpu",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpu" => Ok(Backend::Cpu),
            "gpu" => Ok(Backend::Gpu),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

/// One simulated frame: timing plus the problem size it ran at.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStats {
    pub frame: u64,
    pub wall_ms: f64,
    pub fps: f64,
    pub nodes: usize,
    pub springs: usize,
    pub obstacle_triangles: usize,
    pub collision_hits: u64,
    pub backend: Backend,
}

impl FrameStats {
    pub fn new(
        frame: u64,
        elapsed: Duration,
        backend: Backend,
        nodes: usize,
        springs: usize,
        obstacle_triangles: usize,
        collision_hits: u64,
    ) -> Self {
        let wall_ms = (elapsed.as_secs_f64() * 1e3).max(MIN_WALL_MS);
        Self {
            frame,
            wall_ms,
            fps: 1000.0 / wall_ms,
            nodes,
            springs,
            obstacle_triangles,
            collision_hits,
            backend,
        }
    }

    fn record(&self) -> [String; 8] {
        [
            self.frame.to_string(),
            format!("{:.6}", self.wall_ms),
            format!("{:.3}", self.fps),
            self.nodes.to_string(),
            self.springs.to_string(),
            self.obstacle_triangles.to_string(),
            self.collision_hits.to_string(),
            self.backend.to_string(),
        ]
    }
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("no frames to write")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
}

/// Writes one row per frame under [`CSV_HEADER`]. Floats use fixed decimal
/// places (`wall_ms` 6, `fps` 3) so output does not depend on locale or on
/// shortest-representation formatting.
pub fn write_stats_csv(stats: &[FrameStats], path: impl AsRef<Path>) -> Result<(), StatsError> {
    if stats.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(CSV_HEADER.split(','))?;
    for s in stats {
        writer.write_record(s.record())?;
    }
    writer.flush()?;
    Ok(())
}

/// Strict parser for files produced by [`write_stats_csv`].
pub fn read_stats_csv(path: impl AsRef<Path>) -> Result<Vec<FrameStats>, StatsError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(StatsError::Schema {
            line: 1,
            message: format!("unexpected header `{}`", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| record.get(k).unwrap_or("");
        fn parse<T: FromStr>(line: u64, name: &str, text: &str) -> Result<T, StatsError> {
            text.parse().map_err(|_| StatsError::Schema {
                line,
                message: format!("bad {name} `{text}`"),
            })
        }
        if record.len() != 8 {
            return Err(StatsError::Schema {
                line,
                message: format!("expected 8 fields, got {}", record.len()),
            });
        }
        out.push(FrameStats {
            frame: parse(line, "frame", field(0))?,
            wall_ms: parse(line, "wall_ms", field(1))?,
            fps: parse(line, "fps", field(2))?,
            nodes: parse(line, "nodes", field(3))?,
            springs: parse(line, "springs", field(4))?,
            obstacle_triangles: parse(line, "obstacle_triangles", field(5))?,
            collision_hits: parse(line, "collision_hits", field(6))?,
            backend: field(7).parse().map_err(|message| StatsError::Schema { line, message })?,
        });
    }
    Ok(out)
}
