use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{IndexError, JoinIndex, Result};
use crate::tablecore::Corpus;

const MAGIC: &[u8; 8] = b"TLIFTIDX";
pub const INDEX_FORMAT_VERSION: u32 = 1;

/// Writes the corpus and its index behind a magic/version header.
pub fn save_index(path: &Path, corpus: &Corpus, index: &JoinIndex) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&INDEX_FORMAT_VERSION.to_le_bytes())?;
    bincode::serialize_into(&mut w, &(corpus, index))
        .map_err(|e| IndexError::Format(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<(Corpus, JoinIndex)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(IndexError::Format("not an index file".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let found = u32::from_le_bytes(version);
    if found != INDEX_FORMAT_VERSION {
        return Err(IndexError::Version {
            found,
            expected: INDEX_FORMAT_VERSION,
        });
    }
    bincode::deserialize_from(r).map_err(|e| IndexError::Format(e.to_string()))
}
