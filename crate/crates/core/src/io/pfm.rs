//! Single-channel PFM (`Pf`). Written little-endian (negative scale);
//! both byte orders are read. Rows are stored bottom-up. Values are f32,
//! so depths survive a round trip exactly only when they are
//! f32-representable.

use std::path::Path;

use super::{atomic_write, read_file, FormatError};
use crate::error::Result;
use crate::geometry::Camera;
use crate::render::DepthMap;

/// Row-major (top row first) single-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

pub fn encode_pfm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height, "PFM payload size");
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    for row in (0..height).rev() {
        for v in &values[row * width..(row + 1) * width] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> std::result::Result<(&'a str, usize), FormatError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(FormatError::Truncated {
            offset: start,
            needed: 1,
            available: 0,
        });
    }
    let tok = std::str::from_utf8(&bytes[start..*pos]).map_err(|_| FormatError::BadHeader {
        offset: start,
        msg: "header is not ASCII".into(),
    })?;
    Ok((tok, start))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PfmImage> {
    if bytes.len() < 2 || &bytes[..2] != b"Pf" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(FormatError::BadMagic {
            expected: "Pf".into(),
            found,
        }
        .into());
    }
    let mut pos = 2;
    let mut number = |what: &str| -> std::result::Result<(String, usize), FormatError> {
        let (tok, at) = header_token(bytes, &mut pos)?;
        let _ = what;
        Ok((tok.to_string(), at))
    };
    let (w, w_at) = number("width")?;
    let (h, h_at) = number("height")?;
    let (s, s_at) = number("scale")?;
    let parse_dim = |tok: &str, at: usize| -> std::result::Result<usize, FormatError> {
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(FormatError::BadHeader {
                offset: at,
                msg: format!("invalid dimension {tok:?}"),
            }),
        }
    };
    let width = parse_dim(&w, w_at)?;
    let height = parse_dim(&h, h_at)?;
    let scale: f64 = s.parse().ok().filter(|v: &f64| v.is_finite() && *v != 0.0).ok_or_else(|| FormatError::BadHeader {
        offset: s_at,
        msg: format!("invalid scale {s:?}"),
    })?;
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(FormatError::Truncated {
            offset: pos,
            needed: 1,
            available: bytes.len().saturating_sub(pos),
        }
        .into());
    }
    pos += 1;
    let n = width.checked_mul(height).and_then(|n| n.checked_mul(4)).ok_or_else(|| FormatError::BadHeader {
        offset: w_at,
        msg: "image size overflows".into(),
    })?;
    let available = bytes.len() - pos;
    if available < n {
        return Err(FormatError::Truncated {
            offset: pos,
            needed: n,
            available,
        }
        .into());
    }
    if available > n {
        return Err(FormatError::TrailingData {
            offset: pos + n,
            count: available - n,
        }
        .into());
    }
    let little = scale < 0.0;
    let mut data = vec![0.0f32; width * height];
    for (k, chunk) in bytes[pos..].chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().expect("4 bytes");
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, col) = (k / width, k % width);
        data[(height - 1 - file_row) * width + col] = v;
    }
    Ok(PfmImage { width, height, data })
}

pub fn save_depth_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    atomic_write(path, &encode_pfm(depth.width(), depth.height(), depth.values()))
}

/// Loads a depth map; the image size must match `camera`.
pub fn load_depth_pfm(path: &Path, camera: &Camera) -> Result<DepthMap> {
    let img = decode_pfm(&read_file(path)?)?;
    if (img.width, img.height) != (camera.width(), camera.height()) {
        return Err(FormatError::BadHeader {
            offset: 3,
            msg: format!(
                "{}x{} image does not match the {}x{} camera",
                img.width,
                img.height,
                camera.width(),
                camera.height()
            ),
        }
        .into());
    }
    DepthMap::new(*camera, img.data.iter().map(|&v| v as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn hand_built_two_by_two() {
        // Top row (1, 2), bottom row (3, 0). The file stores the bottom row first.
        let mut fixture = b"Pf\n2 2\n-1.0\n".to_vec();
        for v in [3.0f32, 0.0, 1.0, 2.0] {
            fixture.extend_from_slice(&v.to_le_bytes());
        }
        let img = decode_pfm(&fixture).unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(img.data, vec![1.0, 2.0, 3.0, 0.0]);
        assert_eq!(encode_pfm(2, 2, &[1.0, 2.0, 3.0, 0.0]), fixture);
    }

    #[test]
    fn big_endian_files_are_read() {
        let mut fixture = b"Pf\n1 2\n1.0\n".to_vec();
        for v in [5.0f32, 7.5] {
            fixture.extend_from_slice(&v.to_be_bytes());
        }
        assert_eq!(decode_pfm(&fixture).unwrap().data, vec![7.5, 5.0]);
    }

    #[test]
    fn depth_round_trip() {
        let cam = Camera::default_with_resolution(8, 6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        let constant = DepthMap::new(cam, vec![2.5; 48]).unwrap();
        save_depth_pfm(&p, &constant).unwrap();
        assert_eq!(load_depth_pfm(&p, &cam).unwrap(), constant);
        let mut vals: Vec<f64> = (0..48).map(|i| (i as f32 * 0.173 + 0.5) as f64).collect();
        vals[3] = 0.0;
        vals[40] = 0.0;
        let holes = DepthMap::new(cam, vals).unwrap();
        save_depth_pfm(&p, &holes).unwrap();
        let back = load_depth_pfm(&p, &cam).unwrap();
        assert_eq!(back, holes);
        assert_eq!(back.values()[40], 0.0);
        let other = Camera::default_with_resolution(4, 3).unwrap();
        assert!(load_depth_pfm(&p, &other).is_err());
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(decode_pfm(b"PF\n1 1\n-1.0\n0000"), Err(Error::Format(FormatError::BadMagic { .. }))));
        assert!(matches!(decode_pfm(b"Pf\n0 1\n-1.0\n"), Err(Error::Format(FormatError::BadHeader { offset: 3, .. }))));
        assert!(matches!(decode_pfm(b"Pf\n2 2\n-1.0\n0000"), Err(Error::Format(FormatError::Truncated { offset: 12, .. }))));
        assert!(matches!(decode_pfm(b"Pf\n1 1\n-1.0\n00000"), Err(Error::Format(FormatError::TrailingData { .. }))));
        assert!(matches!(decode_pfm(b"Pf\n1 1\nx\n0000"), Err(Error::Format(FormatError::BadHeader { .. }))));
    }
}
