//! Memory-reference trace records and the text trace file format.
//!
//! One record per line: `<pid> <I|R|W> <hex vaddr> [icount]`, whitespace
//! separated. Lines starting with `#` are comments. `icount` defaults to 1
//! and counts instructions retired since the previous record.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::addr::{Pid, VirtAddr};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    InstrFetch,
    Read,
    Write,
}

impl AccessKind {
    pub fn letter(self) -> char {
        match self {
            AccessKind::InstrFetch => 'I',
            AccessKind::Read => 'R',
            AccessKind::Write => 'W',
        }
    }

    pub fn is_write(self) -> bool {
        matches!(self, AccessKind::Write)
    }
}

/// One memory reference of a traced process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub pid: Pid,
    pub op: AccessKind,
    pub vaddr: VirtAddr,
    pub icount: u64,
}

fn parse_line(path: &str, lineno: usize, line: &str) -> Result<Option<TraceRecord>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let err = |msg: String| SimError::TraceParse {
        path: path.to_string(),
        line: lineno,
        msg,
    };
    let mut fields = trimmed.split_whitespace();
    let pid_s = fields.next().ok_or_else(|| err("missing pid".into()))?;
    let op_s = fields.next().ok_or_else(|| err("missing operation".into()))?;
    let va_s = fields.next().ok_or_else(|| err("missing address".into()))?;
    let icount_s = fields.next();
    if fields.next().is_some() {
        return Err(err("trailing fields".into()));
    }

    let pid: u32 = pid_s
        .parse()
        .map_err(|_| err(format!("invalid pid '{pid_s}'")))?;
    let op = match op_s {
        "I" => AccessKind::InstrFetch,
        "R" => AccessKind::Read,
        "W" => AccessKind::Write,
        other => return Err(err(format!("invalid operation '{other}'"))),
    };
    let va_digits = va_s
        .strip_prefix("0x")
        .or_else(|| va_s.strip_prefix("0X"))
        .unwrap_or(va_s);
    let raw = u64::from_str_radix(va_digits, 16)
        .map_err(|_| err(format!("invalid hex address '{va_s}'")))?;
    let icount = match icount_s {
        Some(s) => s
            .parse::<u64>()
            .map_err(|_| err(format!("invalid icount '{s}'")))?,
        None => 1,
    };
    if icount == 0 {
        return Err(err("icount must be >= 1".into()));
    }
    Ok(Some(TraceRecord {
        pid: Pid(pid),
        op,
        vaddr: VirtAddr::new(raw),
        icount,
    }))
}

/// Parses trace text from any reader. `path` is used in diagnostics only.
pub fn parse_trace<R: Read>(path: &str, reader: R) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if let Some(rec) = parse_line(path, i + 1, &line)? {
            records.push(rec);
        }
    }
    Ok(records)
}

pub fn read_trace<P: AsRef<Path>>(path: P) -> Result<Vec<TraceRecord>> {
    let display = path.as_ref().display().to_string();
    let file = std::fs::File::open(path.as_ref())?;
    parse_trace(&display, file)
}

pub fn format_record(rec: &TraceRecord) -> String {
    if rec.icount == 1 {
        format!("{} {} {:#x}", rec.pid, rec.op.letter(), rec.vaddr.value())
    } else {
        format!(
            "{} {} {:#x} {}",
            rec.pid,
            rec.op.letter(),
            rec.vaddr.value(),
            rec.icount
        )
    }
}

pub fn write_trace<P: AsRef<Path>>(path: P, records: &[TraceRecord]) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(file);
    for rec in records {
        writeln!(w, "{}", format_record(rec))?;
    }
    w.flush()?;
    Ok(())
}

/// Canonical fingerprint of a record sequence, used by `compare` to verify
/// two reports describe the same trace.
pub fn trace_fingerprint(records: &[TraceRecord]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for rec in records {
        hasher.update(rec.pid.0.to_le_bytes());
        hasher.update([rec.op.letter() as u8]);
        hasher.update(rec.vaddr.value().to_le_bytes());
        hasher.update(rec.icount.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
