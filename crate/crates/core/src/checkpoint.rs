//! Binary checkpoints.
//!
//! A 56-byte little-endian header followed by seven row-major `f64` planes
//! `u_x, u_y, d_1, d_2, d_3, theta, p`:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 4 | magic `NLC2` |
//! | 4  | 4 | format version (u32) |
//! | 8  | 4 | nx (u32) |
//! | 12 | 4 | ny (u32) |
//! | 16 | 1 | mode (0 relaxed, 1 constrained) |
//! | 17 | 7 | reserved, zero |
//! | 24 | 8 | t |
//! | 32 | 8 | M |
//! | 40 | 8 | N |
//! | 48 | 8 | theta_floor |

use std::io::Write;
use std::path::Path;

use crate::dynamics::{DirectorMode, State};
use crate::error::{Error, Result};
use crate::grid::{DirectorField, ScalarField, TorusGrid, VectorField};

pub const MAGIC: [u8; 4] = *b"NLC2";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 56;
const PLANES: usize = 7;

/// Run metadata stored alongside the fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub mode: DirectorMode,
    pub cutoff: f64,
    pub regularization: f64,
    pub theta_floor: f64,
}

/// Serializes `state` into the checkpoint byte layout.
pub fn encode(state: &State, meta: &CheckpointMeta) -> Vec<u8> {
    let g = state.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + PLANES * 8 * g.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.nx() as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny() as u32).to_le_bytes());
    out.push(match meta.mode {
        DirectorMode::Relaxed => 0,
        DirectorMode::Constrained => 1,
    });
    out.extend_from_slice(&[0u8; 7]);
    for v in [state.t, meta.cutoff, meta.regularization, meta.theta_floor] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for plane in planes(state) {
        for v in plane.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn planes(state: &State) -> [&ScalarField; PLANES] {
    [
        &state.u.x,
        &state.u.y,
        &state.d.c[0],
        &state.d.c[1],
        &state.d.c[2],
        &state.theta,
        &state.p,
    ]
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses checkpoint bytes; `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(State, CheckpointMeta)> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}, expected \"NLC2\"", &bytes[..4])));
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let (nx, ny) = (u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize);
    let grid = TorusGrid::new(nx, ny).map_err(|e| bad(format!("invalid grid in header: {e}")))?;
    let mode = match bytes[16] {
        0 => DirectorMode::Relaxed,
        1 => DirectorMode::Constrained,
        m => return Err(bad(format!("unknown director mode byte {m}"))),
    };
    let meta = CheckpointMeta {
        mode,
        cutoff: f64_at(bytes, 32),
        regularization: f64_at(bytes, 40),
        theta_floor: f64_at(bytes, 48),
    };
    let t = f64_at(bytes, 24);
    let expected = HEADER_LEN + PLANES * 8 * grid.len();
    if bytes.len() != expected {
        return Err(bad(format!(
            "header declares {nx}x{ny} grid ({expected} bytes) but the file has {} bytes",
            bytes.len()
        )));
    }
    let plane = |k: usize| -> ScalarField {
        let start = HEADER_LEN + k * 8 * grid.len();
        let data = (0..grid.len()).map(|i| f64_at(bytes, start + 8 * i)).collect();
        ScalarField::from_values(grid, data).expect("length checked")
    };
    let state = State {
        u: VectorField::new(plane(0), plane(1)),
        d: DirectorField::new([plane(2), plane(3), plane(4)]),
        theta: plane(5),
        p: plane(6),
        t,
    };
    Ok((state, meta))
}

/// Writes through a temporary sibling file, so a failed write never leaves
/// a partial checkpoint under `path`.
pub fn write_checkpoint(state: &State, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = encode(state, meta);
    let tmp = path.with_extension("nlc2.tmp");
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn read_checkpoint(path: &Path) -> Result<(State, CheckpointMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(nx: usize, ny: usize, seed: u64) -> State {
        let g = TorusGrid::new(nx, ny).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = || ScalarField::from_values(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        State {
            u: VectorField::new(f(), f()),
            d: DirectorField::new([f(), f(), f()]),
            theta: f(),
            p: f(),
            t: 0.125,
        }
    }

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            mode: DirectorMode::Constrained,
            cutoff: f64::INFINITY,
            regularization: 100.0,
            theta_floor: 0.5,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.nlc2");
        let s = random_state(16, 8, 3);
        write_checkpoint(&s, &meta(), &path).unwrap();
        let (r, m) = read_checkpoint(&path).unwrap();
        assert_eq!(m, meta());
        assert_eq!(r.t.to_bits(), s.t.to_bits());
        for (a, b) in planes(&s).iter().zip(planes(&r)) {
            assert!(a
                .values()
                .iter()
                .zip(b.values())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(
            std::fs::metadata(&path).unwrap().len() as usize,
            HEADER_LEN + 7 * 8 * 128
        );
    }

    #[test]
    fn truncated_and_corrupt_files_rejected() {
        let p = Path::new("x.nlc2");
        let bytes = encode(&random_state(8, 8, 1), &meta());
        let e = decode(&bytes[..bytes.len() - 8], p).unwrap_err().to_string();
        assert!(e.contains("8x8") && e.contains("bytes"), "{e}");
        assert!(decode(&bytes[..20], p)
            .unwrap_err()
            .to_string()
            .contains("truncated header"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad, p).unwrap_err().to_string().contains("magic"));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(decode(&v2, p).unwrap_err().to_string().contains("version 2"));
        let mut dims = bytes;
        dims[8] = 16;
        let e = decode(&dims, p).unwrap_err().to_string();
        assert!(e.contains("16x8"), "{e}");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_checkpoint(Path::new("/nonexistent/dir/c.nlc2")),
            Err(Error::Io { .. })
        ));
    }
}
