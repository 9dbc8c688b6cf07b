//! 8-bit image I/O: PNG (gray/RGB), binary PGM (P5) and PPM (P6).

use std::io::Cursor;

use super::image::ImageBuffer;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("unrecognized image format")]
    UnknownFormat,
    #[error("unsupported image: {0}")]
    Unsupported(String),
    #[error("truncated image stream: expected {expected} bytes of pixel data, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("png: {0}")]
    Png(String),
}

/// Samples map as `v / 255`.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer, CodecError> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_netpbm(bytes)
    } else {
        Err(CodecError::UnknownFormat)
    }
}

#[inline]
fn encode_sample(v: f32) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn from_bytes(height: usize, width: usize, channels: usize, raw: &[u8]) -> ImageBuffer {
    ImageBuffer::from_clamped(
        height,
        width,
        channels,
        raw.iter().map(|&b| b as f32 / 255.0).collect(),
    )
}

/// Binary PGM for one channel, PPM for three. Samples round half up.
pub fn encode_image(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| encode_sample(v)));
    out
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| CodecError::Png(e.to_string()))?;
        let raw: Vec<u8> = img.data().iter().map(|&v| encode_sample(v)).collect();
        writer
            .write_image_data(&raw)
            .map_err(|e| CodecError::Png(e.to_string()))?;
    }
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<ImageBuffer, CodecError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(png_err)?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(CodecError::Unsupported(format!("bit depth {:?}", info.bit_depth)));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(CodecError::Unsupported(format!("color type {other:?}"))),
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| CodecError::Unsupported("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let expected = width * height * channels;
    if frame.buffer_size() < expected {
        return Err(CodecError::Truncated {
            expected,
            found: frame.buffer_size(),
        });
    }
    Ok(from_bytes(height, width, channels, &buf[..expected]))
}

fn png_err(e: png::DecodingError) -> CodecError {
    match e {
        png::DecodingError::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            CodecError::Truncated { expected: 0, found: 0 }
        }
        other => CodecError::Png(other.to_string()),
    }
}

fn decode_netpbm(bytes: &[u8]) -> Result<ImageBuffer, CodecError> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(CodecError::Header("unexpected end of header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(CodecError::Header(format!("expected a number at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CodecError::Header("number out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(CodecError::Unsupported(format!("maxval {maxval} (only 8-bit is supported)")));
    }
    if width == 0 || height == 0 {
        return Err(CodecError::Header("zero dimension".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(CodecError::Header("missing separator before raster".into()));
    }
    pos += 1;
    let expected = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(CodecError::Truncated {
            expected,
            found: raster.len(),
        });
    }
    Ok(from_bytes(height, width, channels, &raster[..expected]))
}
