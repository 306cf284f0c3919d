//! FVOX binary voxel grids.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `FVOX`                            |
//! | 4      | 4    | u32 version (1)                         |
//! | 8      | 12   | u32 nx, ny, nz                          |
//! | 20     | 4    | u32 frame tag (0 canonical, 1 scene)    |
//! | 24     | 48   | f64 min x, y, z, max x, y, z            |
//! | 72     | 4 n  | f32 occupancy, x fastest, then y, z     |

use std::path::Path;

use super::{atomic_write, read_file, FormatError};
use crate::error::Result;
use crate::geometry::Vec3;
use crate::voxel::{Extent, Frame, GridSpec, VoxelGrid};

pub const FVOX_MAGIC: &[u8; 4] = b"FVOX";
pub const FVOX_VERSION: u32 = 1;
pub const FVOX_HEADER_LEN: usize = 72;

pub fn encode_fvox(grid: &VoxelGrid) -> Vec<u8> {
    let spec = grid.spec();
    let mut out = Vec::with_capacity(FVOX_HEADER_LEN + 4 * spec.cell_count());
    out.extend_from_slice(FVOX_MAGIC);
    out.extend_from_slice(&FVOX_VERSION.to_le_bytes());
    for d in spec.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let tag: u32 = match spec.frame() {
        Frame::Canonical => 0,
        Frame::Scene => 1,
    };
    out.extend_from_slice(&tag.to_le_bytes());
    let e = spec.extent();
    for v in e.min.iter().chain(e.max.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> std::result::Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_fvox(bytes: &[u8]) -> Result<VoxelGrid> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| FormatError::BadMagic {
        expected: "FVOX".into(),
        found: String::from_utf8_lossy(bytes).into_owned(),
    })?;
    if magic != FVOX_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "FVOX".into(),
            found: String::from_utf8_lossy(magic).into_owned(),
        }
        .into());
    }
    let version = r.u32()?;
    if version != FVOX_VERSION {
        return Err(FormatError::UnsupportedVersion {
            what: "FVOX",
            found: version.to_string(),
            location: "byte 4".into(),
        }
        .into());
    }
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    if dims.contains(&0) {
        return Err(FormatError::BadHeader {
            offset: 8,
            msg: format!("zero dimension in {dims:?}"),
        }
        .into());
    }
    let frame = match r.u32()? {
        0 => Frame::Canonical,
        1 => Frame::Scene,
        t => {
            return Err(FormatError::BadHeader {
                offset: 20,
                msg: format!("unknown frame tag {t}"),
            }
            .into())
        }
    };
    let mut e = [0.0; 6];
    for v in &mut e {
        *v = r.f64()?;
    }
    let bad_header = |offset: usize| move |err: crate::Error| FormatError::BadHeader { offset, msg: err.to_string() };
    let extent = Extent::new(Vec3::new(e[0], e[1], e[2]), Vec3::new(e[3], e[4], e[5])).map_err(bad_header(24))?;
    let spec = GridSpec::new(frame, dims, extent).map_err(bad_header(8))?;
    let n = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| FormatError::BadHeader {
            offset: 8,
            msg: "grid size overflows".into(),
        })?;
    let payload = r.take(n)?;
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingData {
            offset: r.pos,
            count: bytes.len() - r.pos,
        }
        .into());
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    VoxelGrid::new(spec, data).map_err(|e| {
        FormatError::BadHeader {
            offset: FVOX_HEADER_LEN,
            msg: e.to_string(),
        }
        .into()
    })
}

pub fn save_fvox(path: &Path, grid: &VoxelGrid) -> Result<()> {
    atomic_write(path, &encode_fvox(grid))
}

pub fn load_fvox(path: &Path) -> Result<VoxelGrid> {
    decode_fvox(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(seed: u64) -> VoxelGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VoxelGrid::from_fn(GridSpec::canonical(), |_, _, _| rng.random_range(0.0f32..=1.0)).unwrap()
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let g = random_grid(1);
        let bytes = encode_fvox(&g);
        assert_eq!(bytes.len(), FVOX_HEADER_LEN + 4 * 32 * 32 * 32);
        let back = decode_fvox(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(encode_fvox(&back), bytes);

        let scene = VoxelGrid::zeros(GridSpec::scene_default());
        assert_eq!(decode_fvox(&encode_fvox(&scene)).unwrap(), scene);
    }

    #[test]
    fn header_fields_at_fixed_offsets() {
        let bytes = encode_fvox(&VoxelGrid::zeros(GridSpec::scene_default()));
        assert_eq!(&bytes[0..4], b"FVOX");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 32);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), -2.56);
        assert_eq!(f64::from_le_bytes(bytes[64..72].try_into().unwrap()), 5.12);
    }

    #[test]
    fn rejects_corruption() {
        let good = encode_fvox(&random_grid(2));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_fvox(&bad), Err(Error::Format(FormatError::BadMagic { .. }))));
        let mut bad = good.clone();
        bad[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode_fvox(&bad), Err(Error::Format(FormatError::BadHeader { offset: 8, .. }))));
        let mut bad = good.clone();
        bad[8..12].copy_from_slice(&31u32.to_le_bytes());
        assert!(matches!(decode_fvox(&bad), Err(Error::Format(FormatError::BadHeader { .. }))));
        assert!(matches!(
            decode_fvox(&good[..100]),
            Err(Error::Format(FormatError::Truncated { offset: 72, .. }))
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_fvox(&long), Err(Error::Format(FormatError::TrailingData { .. }))));
        let mut bad = good;
        bad[4] = 9;
        assert!(matches!(decode_fvox(&bad), Err(Error::Format(FormatError::UnsupportedVersion { .. }))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.fvox");
        let g = random_grid(3);
        save_fvox(&p, &g).unwrap();
        assert_eq!(load_fvox(&p).unwrap(), g);
        assert!(matches!(load_fvox(&dir.path().join("missing.fvox")), Err(Error::Io { .. })));
    }
}
