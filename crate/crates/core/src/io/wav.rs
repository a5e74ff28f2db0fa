//! Minimal RIFF/WAVE PCM reader and writer.
//!
//! Reads 16/24/32-bit integer PCM into floats in [-1, 1]; writes 16-bit PCM.

use crate::error::{Error, Result};
use crate::signal::TimeSeries;
use std::io::{Read, Write};
use std::path::Path;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("wav truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
}

/// Decode a PCM WAV file. Returns a [`TimeSeries`] with one channel per
/// interleaved channel and `start_time_ms = 0`.
pub fn read_wav(path: &Path) -> Result<TimeSeries> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let mut c = Cursor { buf: &raw, pos: 0 };
    if c.bytes(4)? != b"RIFF" {
        return Err(Error::Format(format!("{}: not a RIFF file", path.display())));
    }
    let _riff_len = c.u32()?;
    if c.bytes(4)? != b"WAVE" {
        return Err(Error::Format(format!("{}: not a WAVE file", path.display())));
    }

    let mut format: Option<(u16, u16, u32, u16)> = None; // tag, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while c.pos + 8 <= raw.len() {
        let id: [u8; 4] = c.bytes(4)?.try_into().unwrap();
        let len = c.u32()? as usize;
        match &id {
            b"fmt " => {
                let tag = c.u16()?;
                let channels = c.u16()?;
                let rate = c.u32()?;
                let _byte_rate = c.u32()?;
                let _block_align = c.u16()?;
                let bits = c.u16()?;
                format = Some((tag, channels, rate, bits));
                // Skip any fmt extension.
                if len > 16 {
                    c.bytes(len - 16)?;
                }
            }
            b"data" => {
                data = Some(c.bytes(len)?);
            }
            _ => {
                c.bytes(len + (len & 1))?;
            }
        }
    }

    let (tag, channels, rate, bits) =
        format.ok_or_else(|| Error::Format(format!("{}: missing fmt chunk", path.display())))?;
    let data = data.ok_or_else(|| Error::Format(format!("{}: missing data chunk", path.display())))?;
    if tag != 1 {
        return Err(Error::Format(format!(
            "{}: unsupported wav format tag {tag} (integer PCM only)",
            path.display()
        )));
    }
    if !matches!(bits, 16 | 24 | 32) {
        return Err(Error::Format(format!("{}: unsupported bit depth {bits}", path.display())));
    }
    if channels == 0 {
        return Err(Error::Format(format!("{}: zero channels", path.display())));
    }

    let bytes_per = bits as usize / 8;
    let frame = bytes_per * channels as usize;
    let n = data.len() / frame;
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(n); channels as usize];
    for f in 0..n {
        for ch in 0..channels as usize {
            let off = f * frame + ch * bytes_per;
            let v = match bits {
                16 => i16::from_le_bytes(data[off..off + 2].try_into().unwrap()) as f64 / 32768.0,
                24 => {
                    let b = &data[off..off + 3];
                    let raw = (b[0] as i32) | ((b[1] as i32) << 8) | ((b[2] as i8 as i32) << 16);
                    raw as f64 / 8_388_608.0
                }
                32 => {
                    i32::from_le_bytes(data[off..off + 4].try_into().unwrap()) as f64
                        / 2_147_483_648.0
                }
                _ => unreachable!(),
            };
            out[ch].push(v);
        }
    }
    TimeSeries::new(out, rate as f64, 0)
}

/// Write 16-bit PCM. Values are clamped into [-1, 1] before quantization.
pub fn write_wav(path: &Path, x: &TimeSeries) -> Result<()> {
    let channels = x.num_channels() as u16;
    let rate = x.sample_rate_hz().round() as u32;
    let n = x.len();
    let data_len = (n * channels as usize * 2) as u32;

    let mut buf = Vec::with_capacity(44 + data_len as usize);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_len).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // integer PCM
    buf.extend_from_slice(&channels.to_le_bytes());
    buf.extend_from_slice(&rate.to_le_bytes());
    buf.extend_from_slice(&(rate * channels as u32 * 2).to_le_bytes());
    buf.extend_from_slice(&(channels * 2).to_le_bytes());
    buf.extend_from_slice(&16u16.to_le_bytes());
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_len.to_le_bytes());
    for f in 0..n {
        for ch in 0..channels as usize {
            let v = x.channel(ch)[f].clamp(-1.0, 1.0);
            // Same 1/32768 scale as the decoder, saturating at +1.0.
            let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            buf.extend_from_slice(&q.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}
