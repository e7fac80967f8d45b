//! Time-tag files.
//!
//! Both formats start with one JSON header line. The binary format follows
//! it with 9-byte records: channel code (`u8`) and timestamp in picoseconds
//! (`u64`, little endian). The CSV debug format prefixes the header with
//! `# ` and has one `channel,timestamp_ps` row per tag.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Channel, ExperimentConfig, SourceMode, TimeTag};

pub const FORMAT_NAME: &str = "timebin-tags";
pub const FORMAT_VERSION: u32 = 1;
pub const RECORD_BYTES: usize = 9;
const CSV_COLUMNS: &str = "channel,timestamp_ps";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagFormat {
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagFileHeader {
    pub format: String,
    pub version: u32,
    pub encoding: TagFormat,
    pub mode: Option<SourceMode>,
    pub config: Option<ExperimentConfig>,
}

impl TagFileHeader {
    pub fn new(encoding: TagFormat, mode: Option<SourceMode>, config: Option<ExperimentConfig>) -> Self {
        Self {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            encoding,
            mode,
            config,
        }
    }
}

#[derive(Debug, Error)]
pub enum TagIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("corrupt data at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
}

impl TagIoError {
    pub fn offset(&self) -> Option<u64> {
        match self {
            TagIoError::Corrupt { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}

pub struct TagWriter<W: Write> {
    out: BufWriter<W>,
    encoding: TagFormat,
    written: u64,
}

impl TagWriter<File> {
    pub fn create(path: &Path, header: &TagFileHeader) -> Result<Self, TagIoError> {
        Self::new(File::create(path)?, header)
    }
}

impl<W: Write> TagWriter<W> {
    pub fn new(inner: W, header: &TagFileHeader) -> Result<Self, TagIoError> {
        let mut out = BufWriter::with_capacity(1 << 20, inner);
        let json = serde_json::to_string(header).map_err(|e| TagIoError::Header(e.to_string()))?;
        match header.encoding {
            TagFormat::Binary => writeln!(out, "{json}")?,
            TagFormat::Csv => write!(out, "# {json}\n{CSV_COLUMNS}\n")?,
        }
        Ok(Self {
            out,
            encoding: header.encoding,
            written: 0,
        })
    }

    #[inline]
    pub fn write(&mut self, tag: TimeTag) -> Result<(), TagIoError> {
        match self.encoding {
            TagFormat::Binary => {
                let mut rec = [0u8; RECORD_BYTES];
                rec[0] = tag.channel.code();
                rec[1..].copy_from_slice(&tag.timestamp_ps.to_le_bytes());
                self.out.write_all(&rec)?;
            }
            TagFormat::Csv => writeln!(self.out, "{},{}", tag.channel.code(), tag.timestamp_ps)?,
        }
        self.written += 1;
        Ok(())
    }

    pub fn write_all<I: IntoIterator<Item = TimeTag>>(&mut self, tags: I) -> Result<(), TagIoError> {
        tags.into_iter().try_for_each(|t| self.write(t))
    }

    /// Flushes and returns the number of tags written.
    pub fn finish(mut self) -> Result<u64, TagIoError> {
        self.out.flush()?;
        Ok(self.written)
    }
}

/// Streaming reader for either format, detected from the first byte.
pub struct TagReader<R: BufRead> {
    input: R,
    header: TagFileHeader,
    offset: u64,
    line: String,
    done: bool,
}

impl TagReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, TagIoError> {
        Self::new(BufReader::with_capacity(1 << 20, File::open(path)?))
    }
}

impl<R: BufRead> TagReader<R> {
    pub fn new(mut input: R) -> Result<Self, TagIoError> {
        let mut first = String::new();
        let n = read_line(&mut input, &mut first)?;
        let trimmed = first.trim_end_matches(['\n', '\r']);
        let (json, csv) = match trimmed.strip_prefix("# ") {
            Some(rest) => (rest, true),
            None => (trimmed, false),
        };
        let header: TagFileHeader =
            serde_json::from_str(json).map_err(|e| TagIoError::Header(format!("{e}")))?;
        if header.format != FORMAT_NAME {
            return Err(TagIoError::Header(format!("unknown format `{}`", header.format)));
        }
        if header.version != FORMAT_VERSION {
            return Err(TagIoError::Header(format!("unsupported version {}", header.version)));
        }
        let expected = if csv { TagFormat::Csv } else { TagFormat::Binary };
        if header.encoding != expected {
            return Err(TagIoError::Header("encoding does not match file layout".into()));
        }
        let mut offset = n as u64;
        if csv {
            let mut cols = String::new();
            let m = read_line(&mut input, &mut cols)?;
            if cols.trim_end() != CSV_COLUMNS {
                return Err(TagIoError::Corrupt {
                    offset,
                    reason: format!("expected column line `{CSV_COLUMNS}`"),
                });
            }
            offset += m as u64;
        }
        Ok(Self {
            input,
            header,
            offset,
            line: String::new(),
            done: false,
        })
    }

    pub fn header(&self) -> &TagFileHeader {
        &self.header
    }

    /// Byte offset of the next unread record.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn next_binary(&mut self) -> Result<Option<TimeTag>, TagIoError> {
        let mut rec = [0u8; RECORD_BYTES];
        let mut got = 0;
        while got < RECORD_BYTES {
            match self.input.read(&mut rec[got..]) {
                Ok(0) => break,
                Ok(k) => got += k,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        if got == 0 {
            return Ok(None);
        }
        let at = self.offset;
        if got < RECORD_BYTES {
            return Err(TagIoError::Corrupt {
                offset: at,
                reason: format!("truncated record ({got} of {RECORD_BYTES} bytes)"),
            });
        }
        let channel = Channel::from_code(rec[0]).ok_or_else(|| TagIoError::Corrupt {
            offset: at,
            reason: format!("unknown channel code {}", rec[0]),
        })?;
        let ts = u64::from_le_bytes(rec[1..].try_into().expect("8 bytes"));
        self.offset += RECORD_BYTES as u64;
        Ok(Some(TimeTag::new(channel, ts)))
    }

    fn next_csv(&mut self) -> Result<Option<TimeTag>, TagIoError> {
        loop {
            self.line.clear();
            let at = self.offset;
            let n = read_line(&mut self.input, &mut self.line)?;
            if n == 0 {
                return Ok(None);
            }
            self.offset += n as u64;
            let row = self.line.trim();
            if row.is_empty() {
                continue;
            }
            let corrupt = |reason: String| TagIoError::Corrupt { offset: at, reason };
            let (c, t) = row
                .split_once(',')
                .ok_or_else(|| corrupt(format!("expected `channel,timestamp_ps`, got `{row}`")))?;
            let code: u8 = c.trim().parse().map_err(|_| corrupt(format!("bad channel `{c}`")))?;
            let channel =
                Channel::from_code(code).ok_or_else(|| corrupt(format!("unknown channel code {code}")))?;
            let ts: u64 = t.trim().parse().map_err(|_| corrupt(format!("bad timestamp `{t}`")))?;
            return Ok(Some(TimeTag::new(channel, ts)));
        }
    }
}

fn read_line<R: BufRead>(input: &mut R, buf: &mut String) -> Result<usize, TagIoError> {
    input.read_line(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::InvalidData {
            TagIoError::Header("header is not valid UTF-8".into())
        } else {
            e.into()
        }
    })
}

impl<R: BufRead> Iterator for TagReader<R> {
    type Item = Result<TimeTag, TagIoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let r = match self.header.encoding {
            TagFormat::Binary => self.next_binary(),
            TagFormat::Csv => self.next_csv(),
        };
        match r {
            Ok(Some(t)) => Some(Ok(t)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn tags() -> Vec<TimeTag> {
        vec![
            TimeTag::new(Channel::Trigger, 0),
            TimeTag::new(Channel::Signal, 1_003),
            TimeTag::new(Channel::Idler, 4_001),
            TimeTag::new(Channel::Trigger, 13_123),
            TimeTag::new(Channel::Trigger, u64::MAX),
        ]
    }

    fn write(encoding: TagFormat) -> Vec<u8> {
        let header = TagFileHeader::new(encoding, Some(SourceMode::TimeBin), Some(ExperimentConfig::default()));
        let mut w = TagWriter::new(Vec::new(), &header).unwrap();
        w.write_all(tags()).unwrap();
        assert_eq!(w.written, 5);
        w.out.into_inner().unwrap()
    }

    #[test]
    fn roundtrip_both_formats() {
        for enc in [TagFormat::Binary, TagFormat::Csv] {
            let bytes = write(enc);
            let r = TagReader::new(Cursor::new(bytes)).unwrap();
            assert_eq!(r.header().config, Some(ExperimentConfig::default()));
            let back: Vec<TimeTag> = r.map(|t| t.unwrap()).collect();
            assert_eq!(back, tags());
        }
    }

    #[test]
    fn truncated_record_reports_offset() {
        let mut bytes = write(TagFormat::Binary);
        let header_len = bytes.iter().position(|&b| b == b'\n').unwrap() as u64 + 1;
        bytes.truncate(bytes.len() - 4);
        let err = TagReader::new(Cursor::new(bytes))
            .unwrap()
            .find_map(|r| r.err())
            .unwrap();
        assert_eq!(err.offset(), Some(header_len + 4 * RECORD_BYTES as u64));
    }

    #[test]
    fn bad_channel_reports_offset() {
        let mut bytes = write(TagFormat::Binary);
        let header_len = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
        bytes[header_len + RECORD_BYTES] = 7;
        let err = TagReader::new(Cursor::new(bytes))
            .unwrap()
            .find_map(|r| r.err())
            .unwrap();
        assert_eq!(err.offset(), Some((header_len + RECORD_BYTES) as u64));
    }

    #[test]
    fn csv_errors_point_at_line_start() {
        let bytes = write(TagFormat::Csv);
        let text = String::from_utf8(bytes).unwrap().replace("1,1003", "1,x");
        let at = text.find("1,x").unwrap() as u64;
        let err = TagReader::new(Cursor::new(text.into_bytes()))
            .unwrap()
            .find_map(|r| r.err())
            .unwrap();
        assert_eq!(err.offset(), Some(at));
    }

    #[test]
    fn garbage_header_rejected() {
        assert!(matches!(
            TagReader::new(Cursor::new(b"hello\n".to_vec())),
            Err(TagIoError::Header(_))
        ));
        let other = br#"{"format":"other","version":1,"encoding":"binary","mode":null,"config":null}"#;
        assert!(TagReader::new(Cursor::new(other.to_vec())).is_err());
    }
}
