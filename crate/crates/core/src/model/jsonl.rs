use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Lines, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use super::{FieldError, Record};

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed {kind} record: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        kind: &'static str,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: invalid {kind} record: {error}")]
    Invalid {
        path: PathBuf,
        line: usize,
        kind: &'static str,
        error: FieldError,
    },
}

impl RecordError {
    pub fn line(&self) -> Option<usize> {
        match self {
            RecordError::Io { .. } => None,
            RecordError::Malformed { line, .. } | RecordError::Invalid { line, .. } => Some(*line),
        }
    }

    /// The offending field for invariant violations.
    pub fn field(&self) -> Option<&str> {
        match self {
            RecordError::Invalid { error, .. } => Some(&error.field),
            _ => None,
        }
    }
}

/// Lazily yields validated records from a JSONL file. Blank lines are skipped.
pub struct RecordReader<T> {
    path: PathBuf,
    lines: Lines<BufReader<File>>,
    line: usize,
    _kind: PhantomData<fn() -> T>,
}

impl<T: Record> Iterator for RecordReader<T> {
    type Item = Result<T, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(text) => text,
                Err(source) => {
                    return Some(Err(RecordError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            let line = self.line;
            let record = serde_json::from_str::<T>(&text).map_err(|source| RecordError::Malformed {
                path: self.path.clone(),
                line,
                kind: T::KIND,
                source,
            });
            return Some(record.and_then(|r| {
                r.validate().map(|_| r).map_err(|error| RecordError::Invalid {
                    path: self.path.clone(),
                    line,
                    kind: T::KIND,
                    error,
                })
            }));
        }
    }
}

pub fn read_records<T: Record>(path: impl AsRef<Path>) -> Result<RecordReader<T>, RecordError> {
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|source| RecordError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(RecordReader {
        path,
        lines: BufReader::new(file).lines(),
        line: 0,
        _kind: PhantomData,
    })
}

/// Serializes a record as one JSON line with lexicographically ordered keys.
pub fn to_canonical_line<T: Record>(record: &T) -> Result<String, serde_json::Error> {
    // `Value` objects are BTreeMap-backed, which yields sorted keys.
    let value = serde_json::to_value(record)?;
    serde_json::to_string(&value)
}

/// Streaming single-writer output file.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
    count: usize,
}

impl JsonlWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, RecordError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|source| RecordError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(JsonlWriter {
            path,
            out: BufWriter::new(file),
            count: 0,
        })
    }

    pub fn append<T: Record>(&mut self, record: &T) -> Result<(), RecordError> {
        let line = to_canonical_line(record).map_err(|e| RecordError::Io {
            path: self.path.clone(),
            source: io::Error::new(io::ErrorKind::InvalidData, e),
        })?;
        writeln!(self.out, "{line}").map_err(|source| RecordError::Io {
            path: self.path.clone(),
            source,
        })?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn flush(&mut self) -> Result<(), RecordError> {
        self.out.flush().map_err(|source| RecordError::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn finish(mut self) -> Result<usize, RecordError> {
        self.flush()?;
        Ok(self.count)
    }
}

pub fn write_records<'a, T, I>(path: impl AsRef<Path>, records: I) -> Result<usize, RecordError>
where
    T: Record + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut writer = JsonlWriter::create(path)?;
    for record in records {
        writer.append(record)?;
    }
    writer.finish()
}
