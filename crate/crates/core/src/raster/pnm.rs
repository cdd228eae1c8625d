//! Binary PGM (P5) and PPM (P6) with maxval 255.

use std::fs;
use std::io;
use std::path::Path;

use super::Raster;
use crate::error::{Error, Result};

pub fn read_image(path: impl AsRef<Path>) -> Result<Raster> {
    let bytes = fs::read(path.as_ref())?;
    decode_pnm(&bytes)
}

pub fn write_image(r: &Raster, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), encode_pnm(r))?;
    Ok(())
}

/// Quantizes with round-half-up: `floor(v * 255 + 0.5)`.
#[inline]
fn quantize(v: f32) -> u8 {
    ((v as f64) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode_pnm(r: &Raster) -> Vec<u8> {
    let magic = if r.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", r.width(), r.height()).into_bytes();
    out.extend(r.data().iter().map(|&v| quantize(v)));
    out
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::Format("missing P5/P6 magic".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // At least one whitespace byte separates fields; comments run to end of line.
        let start = pos;
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while !matches!(bytes.get(pos), Some(b'\n') | None) {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("header ends early".into())),
            }
        }
        if pos == start {
            return Err(Error::Format(
                "header fields must be whitespace separated".into(),
            ));
        }
        let digits_start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == digits_start {
            return Err(Error::Format("expected a decimal header field".into()));
        }
        let text = std::str::from_utf8(&bytes[digits_start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::Format(format!("header field {text} out of range")))?;
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::Format(
                "maxval must be followed by one whitespace byte".into(),
            ))
        }
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "maxval {maxval} unsupported (only 255)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("zero image dimension".into()));
    }
    Ok(Header {
        channels,
        width,
        height,
        payload_start: pos,
    })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Raster> {
    let header = parse_header(bytes)?;
    let n = header
        .width
        .checked_mul(header.height)
        .and_then(|v| v.checked_mul(header.channels))
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let payload = &bytes[header.payload_start..];
    if payload.len() < n {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            format!("payload has {} of {} bytes", payload.len(), n),
        )));
    }
    let data = payload[..n].iter().map(|&b| b as f32 / 255.0).collect();
    Raster::new(header.width, header.height, header.channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_endpoints() {
        let r = decode_pnm(b"P5\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!((r.width(), r.height(), r.channels()), (2, 1, 1));
        assert_eq!(r.data(), &[0.0, 1.0]);
        let c = decode_pnm(b"P6 1 1 255 \xff\x00\x00").unwrap();
        assert_eq!(c.channels(), 3);
        assert_eq!(c.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let r = decode_pnm(b"P5\n# made by hand\n1 1\n255\n\x80").unwrap();
        assert_eq!(r.data(), &[128.0 / 255.0]);
    }

    #[test]
    fn quantization_rounds_half_up() {
        let r = Raster::new(1, 1, 1, vec![0.5]).unwrap();
        let bytes = encode_pnm(&r);
        assert_eq!(*bytes.last().unwrap(), 128);
        let z = Raster::filled(3, 2, 3, 0.0).unwrap();
        let bytes = encode_pnm(&z);
        assert!(bytes[bytes.len() - 18..].iter().all(|&b| b == 0));
    }

    #[test]
    fn malformed_and_truncated() {
        assert!(matches!(
            decode_pnm(b"P3\n1 1\n255\n0"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            decode_pnm(b"P5\n1 1\n65535\n\0\0"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            decode_pnm(b"P5\n1 x\n255\n\0"),
            Err(Error::Format(_))
        ));
        assert!(matches!(decode_pnm(b"P5\n1 1"), Err(Error::Format(_))));
        assert!(matches!(
            decode_pnm(b"P5\n2 2\n255\n\0\0\0"),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let r = Raster::filled(1, 1, 1, 0.0).unwrap();
        let err = write_image(&r, "/nonexistent-dir/x/y.pgm").unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    proptest! {
        #[test]
        fn file_bytes_round_trip(w in 1usize..12, h in 1usize..12, rgb in any::<bool>(), seed in any::<u64>()) {
            let c = if rgb { 3 } else { 1 };
            let mut state = seed;
            let payload: Vec<u8> = (0..w * h * c).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 56) as u8
            }).collect();
            let mut file = format!("P{}\n{} {}\n255\n", if rgb { 6 } else { 5 }, w, h).into_bytes();
            file.extend(&payload);
            let r = decode_pnm(&file).unwrap();
            prop_assert_eq!(encode_pnm(&r), file);
        }

        #[test]
        fn raster_round_trip_within_quantization(w in 1usize..10, h in 1usize..10, vals in proptest::collection::vec(0f32..=1.0, 300)) {
            let data = vals[..w * h].to_vec();
            let r = Raster::new(w, h, 1, data).unwrap();
            let back = decode_pnm(&encode_pnm(&r)).unwrap();
            for (a, b) in r.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }
}
