//! Basis container: a `besa/1 <manifest bytes>` header line, a JSON
//! manifest, then the raw payload blobs in manifest order.
//!
//! Blobs: template vertices (`V×3` f64), faces (`F×3` u32), pose basis
//! (`n×3V` f64, row-major) and shape basis (`m×3V` f64). Every number is
//! little-endian; each blob carries a SHA-256 checksum.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::latent::Basis;
use crate::mesh::{Point3, TriMesh};

pub const FORMAT_VERSION: &str = "besa/1";

const BLOB_NAMES: [&str; 4] = ["template_vertices", "faces", "pose_basis", "shape_basis"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    /// Byte offset from the start of the payload section.
    pub offset: u64,
    pub length: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub vertex_count: usize,
    pub face_count: usize,
    pub pose_count: usize,
    pub shape_count: usize,
    pub blobs: Vec<BlobEntry>,
}

fn f64_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode_basis(basis: &Basis) -> Result<Vec<u8>> {
    let t = basis.template();
    let vertices = f64_bytes(t.vertices().iter().flat_map(|p| [p.x, p.y, p.z]));
    let faces: Vec<u8> = t
        .faces()
        .iter()
        .flatten()
        .map(|&i| u32::try_from(i).map(u32::to_le_bytes))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Container("vertex index exceeds u32".into()))?
        .concat();
    // Columns of the 3V×d matrix are contiguous, so its storage is the row-major d×3V layout.
    let rows = 3 * basis.vertex_count();
    let data = basis.matrix().as_slice();
    let (pose, shape) = data.split_at(basis.pose_count() * rows);
    let blobs = [vertices, faces, f64_bytes(pose.iter().copied()), f64_bytes(shape.iter().copied())];

    let mut offset = 0u64;
    let entries = BLOB_NAMES
        .iter()
        .zip(&blobs)
        .map(|(name, b)| {
            let e = BlobEntry {
                name: name.to_string(),
                offset,
                length: b.len() as u64,
                sha256: checksum(b),
            };
            offset += b.len() as u64;
            e
        })
        .collect();
    let manifest = Manifest {
        format: FORMAT_VERSION.into(),
        vertex_count: t.vertex_count(),
        face_count: t.face_count(),
        pose_count: basis.pose_count(),
        shape_count: basis.shape_count(),
        blobs: entries,
    };
    let text = serde_json::to_vec_pretty(&manifest)?;
    let mut out = format!("{FORMAT_VERSION} {}\n", text.len()).into_bytes();
    out.extend_from_slice(&text);
    for b in &blobs {
        out.extend_from_slice(b);
    }
    Ok(out)
}

fn read_f64(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect()
}

/// Parses the header line and manifest; returns the manifest and the payload section.
pub fn read_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Container("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Container("header is not UTF-8".into()))?;
    let (version, len) = header
        .split_once(' ')
        .ok_or_else(|| Error::Container(format!("malformed header {header:?}")))?;
    if version != FORMAT_VERSION {
        return Err(Error::Container(format!("unsupported format {version:?}")));
    }
    let len: usize = len
        .parse()
        .map_err(|_| Error::Container(format!("malformed manifest length {len:?}")))?;
    let rest = &bytes[newline + 1..];
    if rest.len() < len {
        return Err(Error::Container("truncated manifest".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&rest[..len])?;
    if manifest.format != FORMAT_VERSION {
        return Err(Error::Container(format!("manifest format {:?}", manifest.format)));
    }
    Ok((manifest, &rest[len..]))
}

pub fn decode_basis(bytes: &[u8]) -> Result<Basis> {
    let (m, payload) = read_manifest(bytes)?;
    let v3 = 3 * m.vertex_count;
    let expected = [8 * v3, 12 * m.face_count, 8 * m.pose_count * v3, 8 * m.shape_count * v3];
    if m.blobs.len() != BLOB_NAMES.len() {
        return Err(Error::Container(format!("expected {} blobs, found {}", BLOB_NAMES.len(), m.blobs.len())));
    }
    let mut blobs = Vec::with_capacity(4);
    for ((entry, name), size) in m.blobs.iter().zip(BLOB_NAMES).zip(expected) {
        if entry.name != name {
            return Err(Error::Container(format!("expected blob {name:?}, found {:?}", entry.name)));
        }
        if entry.length as usize != size {
            return Err(Error::Container(format!(
                "blob {name} has {} bytes, counts imply {size}",
                entry.length
            )));
        }
        let start = entry.offset as usize;
        let blob = payload
            .get(start..start + size)
            .ok_or_else(|| Error::Container(format!("blob {name} runs past the end of the file")))?;
        if checksum(blob) != entry.sha256 {
            return Err(Error::Container(format!("checksum mismatch in blob {name}")));
        }
        blobs.push(blob);
    }
    let coords = read_f64(blobs[0]);
    let vertices = coords.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
    let faces = blobs[1]
        .chunks_exact(12)
        .map(|c| {
            let idx = |k: usize| u32::from_le_bytes(c[4 * k..4 * k + 4].try_into().expect("4 bytes")) as usize;
            [idx(0), idx(1), idx(2)]
        })
        .collect();
    let template = TriMesh::new(vertices, faces)?;
    let mut data = read_f64(blobs[2]);
    data.extend(read_f64(blobs[3]));
    let matrix = DMatrix::from_vec(v3, m.pose_count + m.shape_count, data);
    Basis::from_matrix(template, matrix, m.pose_count)
}

pub fn write_basis(path: &Path, basis: &Basis) -> Result<()> {
    std::fs::write(path, encode_basis(basis)?).map_err(|e| Error::io(path, e))
}

pub fn read_basis(path: &Path) -> Result<Basis> {
    decode_basis(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::icosphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis() -> Basis {
        let t = icosphere(1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mat = DMatrix::from_fn(3 * t.vertex_count(), 5, |_, _| rng.random_range(-1.0..1.0));
        Basis::from_matrix(t, mat, 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let b = basis();
        let bytes = encode_basis(&b).unwrap();
        assert!(bytes.starts_with(b"besa/1 "));
        let back = decode_basis(&bytes).unwrap();
        assert_eq!(back.pose_count(), 3);
        let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.matrix()), bits(b.matrix()));
        assert_eq!(back.template().faces(), b.template().faces());
        assert_eq!(back.template().vertices(), b.template().vertices());
        assert_eq!(encode_basis(&back).unwrap(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.besa");
        let b = basis();
        write_basis(&path, &b).unwrap();
        assert_eq!(read_basis(&path).unwrap().matrix(), b.matrix());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_basis(&basis()).unwrap();
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 1;
        assert!(matches!(decode_basis(&flipped), Err(Error::Container(_))));
        assert!(decode_basis(&bytes[..bytes.len() - 8]).is_err());
        let mut versioned = bytes.clone();
        versioned[5] = b'2';
        assert!(decode_basis(&versioned).is_err());
        assert!(decode_basis(b"no newline").is_err());
    }

    #[test]
    fn manifest_counts() {
        let b = basis();
        let bytes = encode_basis(&b).unwrap();
        let (m, payload) = read_manifest(&bytes).unwrap();
        assert_eq!((m.vertex_count, m.face_count, m.pose_count, m.shape_count), (42, 80, 3, 2));
        assert_eq!(payload.len() as u64, m.blobs.iter().map(|e| e.length).sum::<u64>());
    }
}
