//! Multi-channel probability grids and the HVAH file format.
//!
//! HVAH layout (all integers little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `b"HVAH"`                |
//! | 4      | 1    | version, always 1              |
//! | 5      | 4    | width (u32)                    |
//! | 9      | 4    | height (u32)                   |
//! | 13     | 4    | channels (u32)                 |
//! | 17     | 4    | scale (u32)                    |
//! | 21     | 4·n  | f32 values, channel-major      |
//!
//! The payload holds `channels * height * width` values: all of channel 0
//! row by row, then channel 1, and so on.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HVAH";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 21;

/// Channel-major grid of probabilities in `[0, 1]`.
///
/// `scale` is the number of original-image pixels per cell along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: u32,
    height: u32,
    channels: u32,
    scale: u32,
    values: Vec<f32>,
}

fn check_dims(width: u32, height: u32, channels: u32, scale: u32) -> Result<usize> {
    let bad = || Error::BadDimensions {
        width,
        height,
        channels,
        scale,
    };
    if width == 0 || height == 0 || channels == 0 || scale == 0 {
        return Err(bad());
    }
    (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels as usize))
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(bad)
}

fn check_values(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(Error::ValueOutOfRange {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

impl Heatmap {
    /// All-zero heatmap.
    pub fn zeros(width: u32, height: u32, channels: u32, scale: u32) -> Result<Self> {
        let len = check_dims(width, height, channels, scale)?;
        Ok(Self {
            width,
            height,
            channels,
            scale,
            values: vec![0.0; len],
        })
    }

    pub fn from_values(
        width: u32,
        height: u32,
        channels: u32,
        scale: u32,
        values: Vec<f32>,
    ) -> Result<Self> {
        let len = check_dims(width, height, channels, scale)?;
        if values.len() != len {
            return Err(Error::BadDimensions {
                width,
                height,
                channels,
                scale,
            });
        }
        check_values(&values)?;
        Ok(Self {
            width,
            height,
            channels,
            scale,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height as usize && col < self.width as usize);
        channel * self.plane_len() + row * self.width as usize + col
    }

    pub fn check_channel(&self, channel: usize) -> Result<()> {
        if channel >= self.channels as usize {
            return Err(Error::ChannelOutOfRange {
                channel,
                channels: self.channels as usize,
            });
        }
        Ok(())
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.values[self.index(channel, row, col)]
    }

    /// Sets one cell, clamping into `[0, 1]` (NaN becomes 0).
    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f32) {
        let i = self.index(channel, row, col);
        self.values[i] = if value.is_nan() {
            0.0
        } else {
            value.clamp(0.0, 1.0)
        };
    }

    /// Row-major view of one channel.
    pub fn channel(&self, channel: usize) -> Result<&[f32]> {
        self.check_channel(channel)?;
        let n = self.plane_len();
        Ok(&self.values[channel * n..(channel + 1) * n])
    }

    pub(crate) fn channel_mut(&mut self, channel: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.values[channel * n..(channel + 1) * n]
    }

    /// Number of cells in `channel` whose value is strictly above `threshold`.
    pub fn count_above(&self, channel: usize, threshold: f32) -> Result<usize> {
        Ok(self
            .channel(channel)?
            .iter()
            .filter(|&&v| v > threshold)
            .count())
    }
}

pub fn read_hvah<R: Read>(mut reader: R) -> Result<Heatmap> {
    let mut header = [0u8; HEADER_LEN];
    read_exact_or_truncated(&mut reader, &mut header[..4])?;
    if &header[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    read_exact_or_truncated(&mut reader, &mut header[4..])?;
    if header[4] != VERSION {
        return Err(Error::UnsupportedVersion(header[4]));
    }
    let field = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap());
    let (width, height, channels, scale) = (field(5), field(9), field(13), field(17));
    let len = check_dims(width, height, channels, scale)?;

    // Read through `take` so a lying header cannot force a huge allocation
    // before the payload is known to exist.
    let mut payload = Vec::new();
    reader.take(len as u64 * 4).read_to_end(&mut payload)?;
    if payload.len() != len * 4 {
        return Err(Error::TruncatedStream);
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    check_values(&values)?;
    Ok(Heatmap {
        width,
        height,
        channels,
        scale,
        values,
    })
}

fn read_exact_or_truncated<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<()> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::TruncatedStream,
        _ => Error::Io(e),
    })
}

pub fn write_hvah<W: Write>(h: &Heatmap, mut writer: W) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + h.values.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    for v in [h.width, h.height, h.channels, h.scale] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &h.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&buf)?;
    writer.flush()?;
    Ok(())
}

/// Writes one channel as a binary PGM (P5, maxval 255).
///
/// Each value maps to `round(v * 255)`, rounding half away from zero.
pub fn export_pgm<W: Write>(h: &Heatmap, channel: usize, mut writer: W) -> Result<()> {
    let plane = h.channel(channel)?;
    let mut buf = format!("P5\n{} {}\n255\n", h.width, h.height).into_bytes();
    buf.extend(plane.iter().map(|&v| pgm_byte(v)));
    writer.write_all(&buf)?;
    writer.flush()?;
    Ok(())
}

fn pgm_byte(v: f32) -> u8 {
    (f64::from(v) * 255.0).round().clamp(0.0, 255.0) as u8
}
