//! Append-only candidate database: one JSON object per line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::Candidate;

pub struct CandidateDb {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CandidateDb {
    /// Creates (or truncates) the database file.
    pub fn create(path: impl AsRef<Path>) -> io::Result<CandidateDb> {
        let path = path.as_ref().to_path_buf();
        let out = BufWriter::new(File::create(&path)?);
        Ok(CandidateDb { path, out })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one row and flushes it, so an interrupted search keeps every
    /// evaluated candidate.
    pub fn append(&mut self, c: &Candidate) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, c)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> io::Result<Vec<Candidate>> {
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
            })?;
            rows.push(row);
        }
        Ok(rows)
    }
}
