//! Binary PPM (P6, 8-bit RGB) and 16-bit PGM (P5, millimetre depth) I/O.

use std::fs;
use std::path::Path;

use drnet_tensor::{Real, Tensor};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("maxval mismatch: expected {expected}, found {found}")]
    Maxval { expected: u32, found: u32 },
    #[error("expected a single-image tensor with {expected} channels, got shape {shape}")]
    Shape { expected: usize, shape: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Depth stored per PGM unit (millimetres).
pub const DEPTH_SCALE: Real = 1000.0;

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    offset: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(ImageError::Header(format!("expected magic {}", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
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
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Header("expected a decimal number".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| ImageError::Header("number out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(ImageError::Header("missing whitespace after maxval".into()));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(ImageError::Header("zero image dimension".into()));
    }
    Ok(Header { width: width as usize, height: height as usize, maxval, offset: pos + 1 })
}

fn payload<'a>(bytes: &'a [u8], header: &Header, bytes_per_pixel: usize) -> Result<&'a [u8], ImageError> {
    let expected = header.width * header.height * bytes_per_pixel;
    let found = bytes.len() - header.offset;
    if found < expected {
        return Err(ImageError::Truncated { expected, found });
    }
    Ok(&bytes[header.offset..header.offset + expected])
}

fn check_single(t: &Tensor, channels: usize) -> Result<(), ImageError> {
    let s = t.shape();
    if s.n != 1 || s.c != channels {
        return Err(ImageError::Shape { expected: channels, shape: s.to_string() });
    }
    Ok(())
}

/// `round(v * 255)` clamped to [0, 255].
pub fn quantize_u8(v: Real) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn encode_ppm(rgb: &Tensor) -> Result<Vec<u8>, ImageError> {
    check_single(rgb, 3)?;
    let s = rgb.shape();
    let plane = s.h * s.w;
    let data = rgb.data();
    let mut out = format!("P6\n{} {}\n255\n", s.w, s.h).into_bytes();
    out.reserve(plane * 3);
    for p in 0..plane {
        for c in 0..3 {
            out.push(quantize_u8(data[c * plane + p]));
        }
    }
    Ok(out)
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor, ImageError> {
    let header = parse_header(bytes, b"P6")?;
    if header.maxval != 255 {
        return Err(ImageError::Maxval { expected: 255, found: header.maxval });
    }
    let raw = payload(bytes, &header, 3)?;
    let plane = header.width * header.height;
    let mut data = vec![0.0; 3 * plane];
    for (p, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + p] = px[c] as Real / 255.0;
        }
    }
    Ok(Tensor::from_vec((1, 3, header.height, header.width), data).expect("length matches"))
}

/// Depth in metres -> `round(m * 1000)` clamped to u16.
pub fn quantize_depth(m: Real) -> u16 {
    (m * DEPTH_SCALE).round().clamp(0.0, u16::MAX as Real) as u16
}

pub fn encode_pgm16(depth: &Tensor) -> Result<Vec<u8>, ImageError> {
    check_single(depth, 1)?;
    let s = depth.shape();
    let mut out = format!("P5\n{} {}\n65535\n", s.w, s.h).into_bytes();
    out.reserve(s.h * s.w * 2);
    for &v in depth.data() {
        out.extend_from_slice(&quantize_depth(v).to_be_bytes());
    }
    Ok(out)
}

pub fn decode_pgm16(bytes: &[u8]) -> Result<Tensor, ImageError> {
    let header = parse_header(bytes, b"P5")?;
    if header.maxval != 65535 {
        return Err(ImageError::Maxval { expected: 65535, found: header.maxval });
    }
    let raw = payload(bytes, &header, 2)?;
    let data = raw.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as Real / DEPTH_SCALE).collect();
    Ok(Tensor::from_vec((1, 1, header.height, header.width), data).expect("length matches"))
}

pub fn save_ppm(path: impl AsRef<Path>, rgb: &Tensor) -> Result<(), ImageError> {
    Ok(fs::write(path, encode_ppm(rgb)?)?)
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<Tensor, ImageError> {
    decode_ppm(&fs::read(path)?)
}

pub fn save_pgm16(path: impl AsRef<Path>, depth: &Tensor) -> Result<(), ImageError> {
    Ok(fs::write(path, encode_pgm16(depth)?)?)
}

pub fn load_pgm16(path: impl AsRef<Path>) -> Result<Tensor, ImageError> {
    decode_pgm16(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_millimetres() {
        let d = Tensor::from_vec((1, 1, 1, 2), vec![1.234, 0.5]).unwrap();
        let bytes = encode_pgm16(&d).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[0x04, 0xD2, 0x01, 0xF4]);
        let back = decode_pgm16(&bytes).unwrap();
        assert_eq!(back.data(), &[1.234, 0.5]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 51]);
        let t = decode_ppm(&bytes).unwrap();
        assert_eq!(t.data(), &[1.0, 0.0, 0.2]);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n"), Err(ImageError::Header(_))));
        assert!(matches!(decode_ppm(b"P6\n1 x\n255\n"), Err(ImageError::Header(_))));
        assert!(matches!(decode_ppm(b"P6\n2 1\n255\n\x01\x02\x03"), Err(ImageError::Truncated { expected: 6, found: 3 })));
        assert!(matches!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(ImageError::Maxval { .. })));
        assert!(matches!(decode_pgm16(b"P5\n1 1\n255\n\0"), Err(ImageError::Maxval { expected: 65535, found: 255 })));
    }

    #[test]
    fn wrong_tensor_shape() {
        assert!(matches!(encode_ppm(&Tensor::zeros((1, 1, 2, 2))), Err(ImageError::Shape { .. })));
        assert!(matches!(encode_pgm16(&Tensor::zeros((2, 1, 2, 2))), Err(ImageError::Shape { .. })));
    }
}
