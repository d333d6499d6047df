//! Sample-file ingestion and export.
//!
//! Two formats carry recorded streams:
//!
//! * **Headerless CSV** — one sample per line, `dim` decimal fields.
//! * **Binary** — a 16-byte header (magic `OJAS`, little-endian `u32`
//!   dimension, `u32` reserved, 4 zero pad bytes) followed by row-major
//!   little-endian `f64` samples.
//!
//! Files are loaded whole before a run starts, so every malformed row is
//! reported with its position and a failed run never leaves a half-consumed
//! file behind. Loaded rows are shared across repetitions without copying.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use oja_core::stream::SampleSource;

use crate::config::FileFormat;
use crate::error::HarnessError;

/// Magic bytes opening a binary sample file.
pub const BINARY_MAGIC: &[u8; 4] = b"OJAS";
/// Bytes before the first sample in a binary file.
pub const BINARY_HEADER_LEN: usize = 16;

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Ingest(msg.into())
}

/// Load every sample in `path`. `Auto` sniffs the magic bytes: files
/// opening with `OJAS` are binary, anything else is CSV.
pub fn load_samples(
    path: &Path,
    dim: usize,
    format: FileFormat,
) -> Result<Vec<Vec<f64>>, HarnessError> {
    if dim == 0 {
        return Err(bad("sample dimension must be positive"));
    }
    let bytes = fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let format = match format {
        FileFormat::Auto => {
            if bytes.len() >= 4 && &bytes[..4] == BINARY_MAGIC {
                FileFormat::Binary
            } else {
                FileFormat::Csv
            }
        }
        other => other,
    };
    match format {
        FileFormat::Binary => parse_binary(&bytes, dim),
        FileFormat::Csv => parse_csv(&bytes, dim),
        FileFormat::Auto => unreachable!("auto resolved above"),
    }
}

fn parse_binary(bytes: &[u8], dim: usize) -> Result<Vec<Vec<f64>>, HarnessError> {
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(bad(format!(
            "binary header is {BINARY_HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(bad("bad magic: not a binary sample file"));
    }
    let header_dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    // bytes[8..12] are reserved and bytes[12..16] are padding; both are
    // ignored on read so old files stay loadable if they gain meaning.
    if header_dim != dim {
        return Err(bad(format!(
            "file records dimension {header_dim}, config says {dim}"
        )));
    }
    let payload = &bytes[BINARY_HEADER_LEN..];
    let row_len = 8 * dim;
    if !payload.len().is_multiple_of(row_len) {
        return Err(bad(format!(
            "payload of {} bytes is not a whole number of {row_len}-byte rows",
            payload.len()
        )));
    }
    let mut rows = Vec::with_capacity(payload.len() / row_len);
    for (r, chunk) in payload.chunks_exact(row_len).enumerate() {
        let mut row = Vec::with_capacity(dim);
        for c in chunk.chunks_exact(8) {
            let v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(bad(format!("non-finite value {v} in row {}", r + 1)));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_csv(bytes: &[u8], dim: usize) -> Result<Vec<Vec<f64>>, HarnessError> {
    let text = std::str::from_utf8(bytes).map_err(|e| bad(format!("not UTF-8: {e}")))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(dim);
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| bad(format!("line {line_no}: {field:?}: {e}")))?;
            if !v.is_finite() {
                return Err(bad(format!("line {line_no}: non-finite value {v}")));
            }
            row.push(v);
        }
        if row.len() != dim {
            return Err(bad(format!(
                "line {line_no}: {} fields, expected {dim}",
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// A single-pass source over loaded rows, shared between repetitions.
pub struct SharedSource {
    rows: Arc<Vec<Vec<f64>>>,
    dim: usize,
    next: usize,
}

impl SharedSource {
    pub fn new(rows: Arc<Vec<Vec<f64>>>, dim: usize) -> Self {
        SharedSource { rows, dim, next: 0 }
    }
}

impl SampleSource for SharedSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn next_sample(&mut self, out: &mut [f64]) -> bool {
        match self.rows.get(self.next) {
            Some(row) => {
                out.copy_from_slice(row);
                self.next += 1;
                true
            }
            None => false,
        }
    }
}

/// Write rows to `path` in the binary format.
pub fn export_binary<'a, I>(path: &Path, dim: usize, rows: I) -> Result<u64, HarnessError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut file = fs::File::create(path)?;
    let mut header = [0u8; BINARY_HEADER_LEN];
    header[..4].copy_from_slice(BINARY_MAGIC);
    header[4..8].copy_from_slice(&(dim as u32).to_le_bytes());
    file.write_all(&header)?;
    let mut written = 0u64;
    let mut buf = Vec::with_capacity(8 * dim);
    for row in rows {
        if row.len() != dim {
            return Err(bad(format!(
                "row {} has {} values, expected {dim}",
                written + 1,
                row.len()
            )));
        }
        buf.clear();
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        file.write_all(&buf)?;
        written += 1;
    }
    file.flush()?;
    Ok(written)
}

/// Draw `n` samples from `source` and export them in the binary format,
/// so a synthetic stream can be replayed through the ingestion path.
pub fn export_from_source(
    path: &Path,
    source: &mut dyn SampleSource,
    n: u64,
) -> Result<(), HarnessError> {
    let dim = source.dim();
    let mut x = vec![0.0; dim];
    let mut file = fs::File::create(path)?;
    let mut header = [0u8; BINARY_HEADER_LEN];
    header[..4].copy_from_slice(BINARY_MAGIC);
    header[4..8].copy_from_slice(&(dim as u32).to_le_bytes());
    file.write_all(&header)?;
    for got in 0..n {
        if !source.next_sample(&mut x) {
            return Err(bad(format!("source ended after {got} of {n} samples")));
        }
        let mut buf = Vec::with_capacity(8 * dim);
        for v in &x {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        file.write_all(&buf)?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use oja_core::samplers::{CovSpec, Family, SampleStream};

    #[test]
    fn three_csv_rows_of_dimension_two_load_as_three_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, "1.0,2.0\n3.0,4.0\n5.5,-6.5\n").unwrap();
        let rows = load_samples(&path, 2, FileFormat::Auto).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.5, -6.5]]);
    }

    #[test]
    fn width_and_value_problems_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, "1.0,2.0\n1.0,2.0,3.0\n").unwrap();
        let err = load_samples(&path, 2, FileFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("line 2"), "got {err}");
        assert!(err.to_string().contains("3 fields"), "got {err}");

        fs::write(&path, "1.0,2.0\n\n1.0,inf\n").unwrap();
        let err = load_samples(&path, 2, FileFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("line 3"), "got {err}");
        assert!(err.to_string().contains("non-finite"), "got {err}");

        fs::write(&path, "1.0,oops\n").unwrap();
        let err = load_samples(&path, 2, FileFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("line 1"), "got {err}");
    }

    #[test]
    fn binary_files_round_trip_and_validate_their_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let rows = [
            vec![1.0, -2.0, 0.25],
            vec![1e-300, 3.5, 7.0],
            vec![-0.0, 2.0_f64.powi(60), 1.0 / 3.0],
        ];
        let n = export_binary(&path, 3, rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(n, 3);
        let back = load_samples(&path, 3, FileFormat::Auto).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }

        // Dimension disagreement is caught by the header.
        let err = load_samples(&path, 2, FileFormat::Binary).unwrap_err();
        assert!(err.to_string().contains("dimension 3"), "got {err}");

        // A truncated payload is rejected.
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        let err = load_samples(&path, 3, FileFormat::Binary).unwrap_err();
        assert!(err.to_string().contains("whole number"), "got {err}");

        // A wrong magic is rejected when binary is demanded...
        fs::write(&path, b"NOPE____________payload").unwrap();
        let err = load_samples(&path, 3, FileFormat::Binary).unwrap_err();
        assert!(err.to_string().contains("magic"), "got {err}");
        // ...and auto-detected files without the magic fall back to CSV.
        let err = load_samples(&path, 3, FileFormat::Auto).unwrap_err();
        assert!(err.to_string().contains("line 1"), "got {err}");
    }

    #[test]
    fn exported_streams_reload_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.bin");
        let spec = CovSpec::new(vec![3.0, 1.0, 0.5], 1, Family::Gaussian, Some(5)).unwrap();
        let mut src = SampleStream::new(spec.clone(), 11);
        export_from_source(&path, &mut src, 40).unwrap();

        let rows = load_samples(&path, 3, FileFormat::Auto).unwrap();
        assert_eq!(rows.len(), 40);
        let mut fresh = SampleStream::new(spec, 11);
        let mut x = vec![0.0; 3];
        for row in &rows {
            assert!(fresh.next_sample(&mut x));
            for (a, b) in row.iter().zip(&x) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn shared_sources_are_single_pass_and_independent() {
        let rows = Arc::new(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let mut a = SharedSource::new(rows.clone(), 2);
        let mut b = SharedSource::new(rows, 2);
        let mut x = vec![0.0; 2];
        assert!(a.next_sample(&mut x));
        assert_eq!(x, [1.0, 2.0]);
        assert!(a.next_sample(&mut x));
        assert!(!a.next_sample(&mut x), "two rows only");
        // The second source is unaffected by the first one's cursor.
        assert!(b.next_sample(&mut x));
        assert_eq!(x, [1.0, 2.0]);
    }
}
