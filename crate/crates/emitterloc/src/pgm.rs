//! Binary PGM (P5) reading and writing.
//!
//! Only the binary variant is accepted, with maxval up to 65535. Samples
//! above 255 are stored big-endian 16-bit per the PGM specification.
//! Round-trips are bit-exact for any in-range integer image.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Load a binary P5 PGM file. Sample values become counts unchanged.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path.as_ref())?;
    decode_pgm(&bytes)
}

/// Decode a binary P5 PGM from memory.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cursor = 0usize;

    let magic = read_token(bytes, &mut cursor)
        .ok_or_else(|| Error::Format("missing PGM magic number".into()))?;
    if magic != b"P5" {
        return Err(Error::Format(format!(
            "expected binary PGM magic P5, got {:?}",
            String::from_utf8_lossy(magic)
        )));
    }

    let width = read_header_number(bytes, &mut cursor, "width")?;
    let height = read_header_number(bytes, &mut cursor, "height")?;
    let maxval = read_header_number(bytes, &mut cursor, "maxval")?;
    if maxval > 65535 {
        return Err(Error::Unsupported(format!(
            "maxval {maxval} exceeds 16-bit samples"
        )));
    }
    if maxval == 0 {
        return Err(Error::Format("maxval must be at least 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "degenerate image dimensions {width}x{height}"
        )));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(cursor) {
        Some(b) if b.is_ascii_whitespace() => cursor += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }

    let n = width * height;
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let payload = &bytes[cursor..];
    if payload.len() < n * bytes_per_sample {
        return Err(Error::Format(format!(
            "truncated payload: expected {} bytes, found {}",
            n * bytes_per_sample,
            payload.len()
        )));
    }

    let mut counts = Vec::with_capacity(n);
    if bytes_per_sample == 2 {
        for chunk in payload[..n * 2].chunks_exact(2) {
            counts.push(u16::from_be_bytes([chunk[0], chunk[1]]) as f64);
        }
    } else {
        counts.extend(payload[..n].iter().map(|&b| b as f64));
    }
    Image::from_counts(width, height, counts)
}

/// Write an image as binary P5 with maxval 65535 (big-endian samples).
///
/// Counts are rounded to nearest. With `clamp` set, out-of-range values
/// saturate at 0 / 65535; otherwise they raise [`Error::Range`].
pub fn save_pgm(image: &Image, path: impl AsRef<Path>, clamp: bool) -> Result<()> {
    let bytes = encode_pgm(image, clamp)?;
    fs::write(path.as_ref(), bytes)?;
    Ok(())
}

/// Encode as binary P5 in memory; see [`save_pgm`].
pub fn encode_pgm(image: &Image, clamp: bool) -> Result<Vec<u8>> {
    let header = format!("P5\n{} {}\n65535\n", image.width(), image.height());
    let mut out = Vec::with_capacity(header.len() + image.counts().len() * 2);
    out.extend_from_slice(header.as_bytes());
    for &c in image.counts() {
        let rounded = c.round();
        let sample = if (0.0..=65535.0).contains(&rounded) {
            rounded as u16
        } else if clamp {
            if rounded < 0.0 {
                0
            } else {
                65535
            }
        } else {
            return Err(Error::Range(format!(
                "count {c} not representable in [0, 65535] and clamping is disabled"
            )));
        };
        out.extend_from_slice(&sample.to_be_bytes());
    }
    Ok(out)
}

/// Skip whitespace and `#` comments, then return the next header token.
fn read_token<'a>(bytes: &'a [u8], cursor: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    if *cursor >= bytes.len() {
        return None;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    Some(&bytes[start..*cursor])
}

fn read_header_number(bytes: &[u8], cursor: &mut usize, what: &str) -> Result<usize> {
    let token =
        read_token(bytes, cursor).ok_or_else(|| Error::Format(format!("missing {what}")))?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| {
            Error::Format(format!(
                "invalid {what}: {:?}",
                String::from_utf8_lossy(token)
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_tiny_8bit_file() {
        let bytes = b"P5\n2 2\n255\n\x00\x01\x02\x03";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.height(), 2);
        assert_eq!(img.counts(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn decodes_16bit_big_endian() {
        let bytes = b"P5\n1 2\n65535\n\x01\x00\x00\xff";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(img.counts(), &[256.0, 255.0]);
    }

    #[test]
    fn rejects_ascii_variant() {
        let err = decode_pgm(b"P2\n2 2\n255\n0 1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn rejects_truncated_payload() {
        let err = decode_pgm(b"P5\n2 2\n255\n\x00\x01").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn rejects_oversized_maxval() {
        let err = decode_pgm(b"P5\n1 1\n70000\n\x00\x00\x00").unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn skips_header_comments() {
        let bytes = b"P5\n# a comment\n2 1\n# another\n255\n\x07\x09";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(img.counts(), &[7.0, 9.0]);
    }

    #[test]
    fn zero_image_encodes_zero_samples() {
        let img = Image::zeros(4, 4).unwrap();
        let bytes = encode_pgm(&img, false).unwrap();
        let payload = &bytes[bytes.len() - 32..];
        assert!(payload.iter().all(|&b| b == 0));
    }

    #[test]
    fn clamps_when_enabled_errors_when_not() {
        let img = Image::from_counts(1, 1, vec![70000.0]).unwrap();
        let bytes = encode_pgm(&img, true).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[0xff, 0xff]);
        assert!(matches!(encode_pgm(&img, false), Err(Error::Range(_))));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let counts: Vec<f64> = (0..64 * 64).map(|i| ((i * 977) % 65536) as f64).collect();
        let img = Image::from_counts(64, 64, counts).unwrap();
        let bytes = encode_pgm(&img, false).unwrap();
        let back = decode_pgm(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(encode_pgm(&back, false).unwrap(), bytes);
    }
}
