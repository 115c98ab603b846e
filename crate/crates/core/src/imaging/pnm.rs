//! Binary PPM (P6) and PGM (P5) with maxval 255.

use std::fs;
use std::path::Path;

use super::ImageU8;
use crate::error::{Error, Result};

pub fn write_ppm(path: &Path, img: &ImageU8) -> Result<()> {
    let mut buf = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    buf.extend_from_slice(img.data());
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[u8]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::InvalidArgument(format!(
            "{width}x{height} grey image needs {} values, got {}",
            width * height,
            values.len()
        )));
    }
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend_from_slice(values);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<ImageU8> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (width, height, body) = parse(&bytes, b"P6").map_err(|reason| Error::Format {
        kind: "ppm",
        path: path.to_owned(),
        reason,
    })?;
    ImageU8::new(height, width, body.to_vec())
}

/// Returns `(width, height, values)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (width, height, body) = parse(&bytes, b"P5").map_err(|reason| Error::Format {
        kind: "pgm",
        path: path.to_owned(),
        reason,
    })?;
    Ok((width, height, body.to_vec()))
}

fn parse<'a>(bytes: &'a [u8], magic: &[u8]) -> std::result::Result<(usize, usize, &'a [u8]), String> {
    if !bytes.starts_with(magic) {
        return Err(format!("expected magic {}", String::from_utf8_lossy(magic)));
    }
    let mut pos = magic.len();
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| "bad header number".to_string())?;
    }
    if fields[2] != 255 {
        return Err(format!("unsupported maxval {}", fields[2]));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = if magic == b"P6" { 3 } else { 1 };
    let need = fields[0] * fields[1] * channels;
    let body = bytes.get(pos..pos + need).ok_or_else(|| "truncated raster".to_string())?;
    Ok((fields[0], fields[1], body))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        let img = ImageU8::from_fn(2, 3, |y, x| [y as u8, x as u8, 9]);
        write_ppm(&path, &img).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(read_ppm(&path).unwrap(), img);
    }

    #[test]
    fn pgm_round_trip_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        fs::write(&path, b"P5\n# heat\n2 2\n255\n\x00\x10\x20\xff").unwrap();
        assert_eq!(read_pgm(&path).unwrap(), (2, 2, vec![0, 16, 32, 255]));
        write_pgm(&path, 2, 1, &[1, 2]).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), (2, 1, vec![1, 2]));
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        fs::write(&path, b"P5\n1 1\n255\n\x00").unwrap();
        assert!(matches!(read_ppm(&path), Err(Error::Format { .. })));
    }
}
