use thiserror::Error;

/// Errors produced anywhere in the heatmap-to-angle pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate segment: endpoints coincide")]
    DegenerateSegment,

    #[error("angle {0} deg is outside [0, 90]")]
    AngleOutOfRange(f64),

    #[error("bad magic: expected \"HVAH\"")]
    BadMagic,

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("bad dimensions: width={width} height={height} channels={channels} scale={scale}")]
    BadDimensions {
        width: u32,
        height: u32,
        channels: u32,
        scale: u32,
    },

    #[error("value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },

    #[error("truncated stream")]
    TruncatedStream,

    #[error("channel {channel} out of range ({channels} channels)")]
    ChannelOutOfRange { channel: usize, channels: usize },

    #[error("too few points{}: found {found}, need {required}", channel_suffix(.channel))]
    TooFewPoints {
        channel: Option<usize>,
        found: usize,
        required: usize,
    },

    #[error("degenerate point set: all points coincide")]
    DegeneratePoints,

    #[error("empty set")]
    EmptySet,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("unpaired files: {}", .0.join(", "))]
    UnpairedFiles(Vec<String>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn channel_suffix(channel: &Option<usize>) -> String {
    channel
        .map(|c| format!(", channel {c}"))
        .unwrap_or_default()
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
