//! Audio file I/O and the canonical in-memory representation.
//!
//! Everything downstream works on mono 44.1 kHz buffers. The reader accepts
//! RIFF/WAVE files holding PCM-16, PCM-24, PCM-32 or IEEE-float-32 samples,
//! downmixes multi-channel material by arithmetic mean, and scales integer
//! samples into [-1, 1]. The writer always emits PCM-16 mono.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

/// Canonical sample rate of the whole pipeline.
pub const CANONICAL_RATE: u32 = 44_100;

/// Mono audio signal with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Largest absolute sample value (0 for an empty buffer).
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &s| m.max(s.abs()))
    }
}

#[derive(Debug, Error)]
pub enum WavError {
    #[error("malformed wav at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("unsupported wav encoding at byte {offset}: {what}")]
    Unsupported { offset: usize, what: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(offset: usize, reason: impl Into<String>) -> WavError {
    WavError::Malformed {
        offset,
        reason: reason.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WavError> {
        if self.pos + n > self.bytes.len() {
            return Err(malformed(
                self.pos,
                format!(
                    "need {n} bytes, only {} remain",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, WavError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WavError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

struct Format {
    code: u16,
    channels: usize,
    sample_rate: u32,
    bits: u16,
}

/// Read a RIFF/WAVE file and normalize it to a mono buffer.
///
/// Integer samples are divided by the type's maximum positive magnitude
/// (32767 for PCM-16 and so on); multi-channel frames are averaged.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, WavError> {
    let bytes = fs::read(path)?;
    decode_wav(&bytes)
}

/// Decode an in-memory RIFF/WAVE image. See [`read_wav`].
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"RIFF" {
        return Err(malformed(0, "missing RIFF magic"));
    }
    let _riff_size = r.u32()?;
    if r.take(4)? != b"WAVE" {
        return Err(malformed(8, "missing WAVE form type"));
    }

    let mut format: Option<Format> = None;
    loop {
        if r.pos == bytes.len() {
            return Err(malformed(r.pos, "no data chunk found"));
        }
        let chunk_offset = r.pos;
        let id: [u8; 4] = r.take(4)?.try_into().unwrap();
        let size = r.u32()? as usize;
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed(chunk_offset, "fmt chunk shorter than 16 bytes"));
                }
                let body_start = r.pos;
                let code = r.u16()?;
                let channels = r.u16()? as usize;
                let sample_rate = r.u32()?;
                let _byte_rate = r.u32()?;
                let _block_align = r.u16()?;
                let bits = r.u16()?;
                r.pos = body_start + size + (size & 1);
                if channels == 0 {
                    return Err(malformed(body_start + 2, "zero channels"));
                }
                if sample_rate == 0 {
                    return Err(malformed(body_start + 4, "zero sample rate"));
                }
                format = Some(Format {
                    code,
                    channels,
                    sample_rate,
                    bits,
                });
            }
            b"data" => {
                let fmt = format.ok_or_else(|| {
                    malformed(chunk_offset, "data chunk appears before fmt chunk")
                })?;
                if r.pos + size > bytes.len() {
                    return Err(malformed(
                        chunk_offset,
                        format!(
                            "data chunk declares {size} bytes but only {} remain",
                            bytes.len() - r.pos
                        ),
                    ));
                }
                let data = &bytes[r.pos..r.pos + size];
                return decode_samples(&fmt, data, chunk_offset);
            }
            _ => {
                // Skip unknown chunks (LIST, fact, ...), honoring word alignment.
                let skip = size + (size & 1);
                r.take(skip)?;
            }
        }
    }
}

fn decode_samples(fmt: &Format, data: &[u8], chunk_offset: usize) -> Result<AudioBuffer, WavError> {
    let bytes_per_sample = match (fmt.code, fmt.bits) {
        (1, 16) => 2,
        (1, 24) => 3,
        (1, 32) => 4,
        (3, 32) => 4,
        _ => {
            return Err(WavError::Unsupported {
                offset: chunk_offset,
                what: format!(
                    "format code {} with {} bits per sample (PCM 16/24/32 and float 32 supported)",
                    fmt.code, fmt.bits
                ),
            })
        }
    };
    let frame_bytes = bytes_per_sample * fmt.channels;
    if data.len() % frame_bytes != 0 {
        return Err(malformed(
            chunk_offset,
            format!(
                "data length {} is not a multiple of the {frame_bytes}-byte frame",
                data.len()
            ),
        ));
    }
    let n_frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames);
    let inv_channels = 1.0 / fmt.channels as f64;
    for frame in 0..n_frames {
        let mut acc = 0.0;
        for ch in 0..fmt.channels {
            let at = frame * frame_bytes + ch * bytes_per_sample;
            let v = match (fmt.code, fmt.bits) {
                (1, 16) => {
                    i16::from_le_bytes(data[at..at + 2].try_into().unwrap()) as f64 / 32767.0
                }
                (1, 24) => {
                    let raw = (data[at] as i32)
                        | ((data[at + 1] as i32) << 8)
                        | ((data[at + 2] as i8 as i32) << 16);
                    raw as f64 / 8_388_607.0
                }
                (1, 32) => {
                    i32::from_le_bytes(data[at..at + 4].try_into().unwrap()) as f64
                        / 2_147_483_647.0
                }
                (3, 32) => f32::from_le_bytes(data[at..at + 4].try_into().unwrap()) as f64,
                _ => unreachable!(),
            };
            acc += v;
        }
        samples.push((acc * inv_channels).clamp(-1.0, 1.0));
    }
    Ok(AudioBuffer::new(samples, fmt.sample_rate))
}

/// Write a buffer as a PCM-16 mono WAV file.
///
/// Samples are clamped to [-1, 1] and quantized symmetrically by 2^15 - 1,
/// so a read-back deviates from the original by at most one quantization
/// step (2^-15) for in-range input.
pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), WavError> {
    let mut out = Vec::with_capacity(44 + buffer.samples.len() * 2);
    let data_len = (buffer.samples.len() * 2) as u32;
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&buffer.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &buffer.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Resample to the canonical 44.1 kHz rate with a windowed-sinc kernel.
///
/// Buffers already at 44.1 kHz are returned unchanged. Output length is
/// `round(len * 44100 / rate)`, preserving duration within one sample.
pub fn resample_to_44100(buffer: AudioBuffer) -> AudioBuffer {
    if buffer.sample_rate == CANONICAL_RATE {
        return buffer;
    }
    let src_rate = buffer.sample_rate as f64;
    let dst_rate = CANONICAL_RATE as f64;
    let out_len = (buffer.samples.len() as f64 * dst_rate / src_rate).round() as usize;
    // Cutoff in cycles per source sample; lowered when decimating.
    let cutoff = 0.5 * (dst_rate / src_rate).min(1.0);
    let half_width = (16.0 / cutoff).ceil() as isize;
    let src = &buffer.samples;
    let n = src.len() as isize;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let center = i as f64 * src_rate / dst_rate;
        let lo = (center.floor() as isize - half_width).max(0);
        let hi = (center.floor() as isize + half_width + 1).min(n);
        let mut acc = 0.0;
        for j in lo..hi {
            let u = center - j as f64;
            acc += src[j as usize] * sinc_kernel(u, cutoff, half_width as f64);
        }
        out.push(acc);
    }
    AudioBuffer::new(out, CANONICAL_RATE)
}

fn sinc_kernel(u: f64, cutoff: f64, half_width: f64) -> f64 {
    let x = 2.0 * cutoff * u;
    let sinc = if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    };
    // Hann taper over the kernel support.
    let taper = 0.5 * (1.0 + (std::f64::consts::PI * u / half_width).cos());
    2.0 * cutoff * sinc * taper
}
