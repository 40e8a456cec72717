//! PNG and binary PPM/PGM codecs plus bilinear resampling.
//!
//! Byte `v` decodes to `v / 255`; encoding uses `floor(value·255 + 0.5)`.
//! Alpha channels are rejected on load rather than dropped.

use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{Image, Planar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncodedFormat {
    Png,
    /// Binary netpbm: P6 for RGB, P5 for grayscale.
    Ppm,
}

impl EncodedFormat {
    /// Guesses the format from a file extension (`png`, `ppm`, `pgm`, `pnm`).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "png" => Some(EncodedFormat::Png),
            "ppm" | "pgm" | "pnm" => Some(EncodedFormat::Ppm),
            _ => None,
        }
    }
}

impl fmt::Display for EncodedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncodedFormat::Png => "png",
            EncodedFormat::Ppm => "ppm",
        })
    }
}

impl FromStr for EncodedFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "png" => Ok(EncodedFormat::Png),
            "ppm" | "pgm" => Ok(EncodedFormat::Ppm),
            other => Err(Error::invalid(
                "format",
                format!("unknown format {other:?}"),
            )),
        }
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// Decodes PNG, P6 or P5 bytes, detected from the leading magic.
pub fn load(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else {
        Err(Error::Unsupported(
            "not a PNG or binary PPM/PGM file".to_string(),
        ))
    }
}

pub fn load_path(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load(&bytes)
}

/// Encodes `img`; every sample must already lie in `[0, 1]`.
pub fn save(img: &Image, fmt: EncodedFormat) -> Result<Vec<u8>> {
    let interleaved = quantize(img)?;
    match fmt {
        EncodedFormat::Png => encode_png(img, &interleaved),
        EncodedFormat::Ppm => {
            let magic = if img.channels() == 3 { "P6" } else { "P5" };
            let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
            out.extend_from_slice(&interleaved);
            Ok(out)
        }
    }
}

#[inline]
pub fn to_byte(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor() as u8
}

fn quantize(img: &Image) -> Result<Vec<u8>> {
    let (w, h, c) = img.dims();
    for ch in 0..c {
        if let Some((index, &value)) = img
            .plane(ch)
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfRange {
                value,
                channel: ch,
                index,
            });
        }
    }
    let mut out = Vec::with_capacity(w * h * c);
    for i in 0..w * h {
        for ch in 0..c {
            out.push(to_byte(img.plane(ch)[i]));
        }
    }
    Ok(out)
}

fn from_interleaved(w: usize, h: usize, c: usize, data: &[u8]) -> Result<Image> {
    let mut planes = vec![Vec::with_capacity(w * h); c];
    for px in data.chunks_exact(c).take(w * h) {
        for (plane, &b) in planes.iter_mut().zip(px) {
            plane.push(f64::from(b) / 255.0);
        }
    }
    Image::from_planes(w, h, planes)
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    // palette -> RGB, low-bit gray -> 8-bit, tRNS -> alpha (rejected below)
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Malformed(format!("png: {e}")))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(Error::Unsupported(format!(
            "png bit depth {depth:?}; only 8-bit images are supported"
        )));
    }
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        png::ColorType::GrayscaleAlpha | png::ColorType::Rgba => return Err(Error::AlphaChannel),
        png::ColorType::Indexed => {
            return Err(Error::Unsupported("unexpanded palette png".to_string()))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Unsupported("png too large".to_string()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Malformed(format!("png: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let row = w * channels;
    // rows may be padded to line_size
    let data: Vec<u8> = buf
        .chunks(info.line_size)
        .take(h)
        .flat_map(|line| &line[..row])
        .copied()
        .collect();
    from_interleaved(w, h, channels, &data)
}

fn encode_png(img: &Image, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(if img.channels() == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        encoder.set_depth(png::BitDepth::Eight);
        let err = |e: png::EncodingError| Error::Malformed(format!("png encode: {e}"));
        let mut writer = encoder.write_header().map_err(err)?;
        writer.write_image_data(data).map_err(err)?;
        writer.finish().map_err(err)?;
    }
    Ok(out)
}

/// Header tokens are separated by whitespace and `#` comments; exactly one
/// whitespace byte follows the maxval.
fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut pos = 2;
    let mut next_token = |name: &str| -> Result<usize> {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed(format!("pnm header: bad {name}")))
    };
    let w = next_token("width")?;
    let h = next_token("height")?;
    let maxval = next_token("maxval")?;
    if maxval != 255 {
        return Err(Error::Unsupported(format!(
            "pnm maxval {maxval}; only 255 is supported"
        )));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Malformed(
            "pnm header: missing separator".to_string(),
        ));
    }
    let data = &bytes[pos + 1..];
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Malformed("pnm dimensions overflow".to_string()))?;
    if data.len() < need {
        return Err(Error::Malformed(format!(
            "pnm data truncated: {} of {need} bytes",
            data.len()
        )));
    }
    from_interleaved(w, h, channels, &data[..need])
}

/// Center-aligned bilinear resampling with edge clamping.
///
/// Returns a clone when the size is unchanged. Output samples never leave the
/// range of the input.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(
            "dimensions",
            format!("cannot resize to {width}x{height}"),
        ));
    }
    let (sw, sh, c) = img.dims();
    if (sw, sh) == (width, height) {
        return Ok(img.clone());
    }
    let xs = sample_positions(sw, width);
    let ys = sample_positions(sh, height);
    let planes = (0..c)
        .map(|ch| {
            let p = img.plane(ch);
            let mut out = Vec::with_capacity(width * height);
            for &(y0, y1, ty) in &ys {
                for &(x0, x1, tx) in &xs {
                    let top = lerp(p[y0 * sw + x0], p[y0 * sw + x1], tx);
                    let bottom = lerp(p[y1 * sw + x0], p[y1 * sw + x1], tx);
                    out.push(lerp(top, bottom, ty));
                }
            }
            out
        })
        .collect();
    Image::from_planes(width, height, planes)
}

fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (a + (b - a) * t).clamp(a.min(b), a.max(b))
}
