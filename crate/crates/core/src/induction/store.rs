//! Binary embedding-space files with a JSON sidecar.
//!
//! Layout (little endian): 8-byte magic `CLXEMB\0\0`, `u32` format version,
//! `u32` dim, `u32` users, `u32` years, `u32` vocabulary size, the platform
//! label, the years as `i32`, user ids, vocabulary words, then user vectors
//! and per-year word vectors as `f32`. Strings are a `u32` byte length
//! followed by UTF-8.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EmbeddingSpace, InductionConfig, InductionError};
use crate::digest::sha256_file;

const MAGIC: &[u8; 8] = b"CLXEMB\0\0";
pub const SPACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSidecar {
    pub format_version: u32,
    pub platform: String,
    pub dim: usize,
    pub n_users: usize,
    pub n_words: usize,
    pub years: Vec<i32>,
    pub config: InductionConfig,
    pub corpus_sha256: String,
    pub space_sha256: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> Result<String, InductionError> {
    let len = get_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| InductionError::Format(e.to_string()))
}

fn get_f32s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

/// Writes `path` and `path.json`; returns the sidecar.
pub fn write_space(path: &Path, space: &EmbeddingSpace, config: &InductionConfig, corpus_sha256: &str) -> Result<SpaceSidecar, InductionError> {
    {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        put_u32(&mut w, SPACE_FORMAT_VERSION)?;
        put_u32(&mut w, space.dim as u32)?;
        put_u32(&mut w, space.users.len() as u32)?;
        put_u32(&mut w, space.years.len() as u32)?;
        put_u32(&mut w, space.vocabulary.len() as u32)?;
        put_str(&mut w, &space.platform)?;
        for y in &space.years {
            w.write_all(&y.to_le_bytes())?;
        }
        for s in space.users.iter().chain(&space.vocabulary) {
            put_str(&mut w, s)?;
        }
        for v in space.raw_user_vectors().iter().chain(space.raw_word_vectors()) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
    }
    let sidecar = SpaceSidecar {
        format_version: SPACE_FORMAT_VERSION,
        platform: space.platform.clone(),
        dim: space.dim,
        n_users: space.users.len(),
        n_words: space.vocabulary.len(),
        years: space.years.clone(),
        config: config.clone(),
        corpus_sha256: corpus_sha256.to_string(),
        space_sha256: sha256_file(path)?,
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| InductionError::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(sidecar)
}

/// Reads a space file; when a sidecar exists its digest must match.
pub fn read_space(path: &Path) -> Result<(EmbeddingSpace, Option<SpaceSidecar>), InductionError> {
    let sidecar = match std::fs::read_to_string(sidecar_path(path)) {
        Ok(text) => {
            let s: SpaceSidecar = serde_json::from_str(&text).map_err(|e| InductionError::Format(e.to_string()))?;
            let actual = sha256_file(path)?;
            if actual != s.space_sha256 {
                return Err(InductionError::Format(format!("digest mismatch for {}", path.display())));
            }
            Some(s)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(InductionError::Format("not an embedding-space file".into()));
    }
    let version = get_u32(&mut r)?;
    if version != SPACE_FORMAT_VERSION {
        return Err(InductionError::Format(format!("unsupported format version {version}")));
    }
    let dim = get_u32(&mut r)? as usize;
    let n_users = get_u32(&mut r)? as usize;
    let n_years = get_u32(&mut r)? as usize;
    let n_words = get_u32(&mut r)? as usize;
    let platform = get_str(&mut r)?;
    let mut years = Vec::with_capacity(n_years);
    for _ in 0..n_years {
        years.push(get_u32(&mut r)? as i32);
    }
    let users = (0..n_users).map(|_| get_str(&mut r)).collect::<Result<Vec<_>, _>>()?;
    let vocabulary = (0..n_words).map(|_| get_str(&mut r)).collect::<Result<Vec<_>, _>>()?;
    let user_vectors = get_f32s(&mut r, n_users * dim)?;
    let word_vectors = get_f32s(&mut r, n_years * n_words * dim)?;
    let space = EmbeddingSpace::new(platform, dim, users, vocabulary, years, user_vectors, word_vectors)?;
    Ok((space, sidecar))
}
