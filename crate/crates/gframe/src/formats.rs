//! Text and binary formats: the "mtx-simple" matrix format, binary PGM
//! images, and small CSV helpers.
//!
//! mtx-simple: first line `rows cols field` with field ∈ {real, complex},
//! then one line per row with space-separated entries. Complex entries are
//! written `a+bi` / `a-bi`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::validate_finite;
use crate::scalar::{Field, Scalar};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("empty input")]
    Empty,
    #[error("bad header line {0:?}")]
    BadHeader(String),
    #[error("field mismatch: file says {file}, expected {expected}")]
    FieldMismatch { file: Field, expected: Field },
    #[error("row {row}: expected {expected} entries, found {found}")]
    BadRowLength {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} rows, found {found}")]
    BadRowCount { expected: usize, found: usize },
    #[error("cannot parse scalar {0:?}")]
    BadScalar(String),
    #[error("non-finite entry")]
    NonFinite,
    #[error("missing key {0:?}")]
    MissingKey(String),
    #[error("bad value for {key}: {detail}")]
    BadValue { key: String, detail: String },
    #[error("unknown kind {0:?}")]
    UnknownKind(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
    #[error("bad pgm: {0}")]
    BadPgm(String),
}

fn format_f64(x: f64) -> String {
    // Shortest round-trip representation; keeps files byte-stable.
    format!("{x}")
}

/// Render one scalar in mtx-simple syntax.
pub fn format_scalar<K: Scalar>(v: K) -> String {
    let z = v.to_c64();
    match K::FIELD {
        Field::Real => format_f64(z.re),
        Field::Complex => {
            if z.im < 0.0 || (z.im == 0.0 && z.im.is_sign_negative()) {
                format!("{}-{}i", format_f64(z.re), format_f64(-z.im))
            } else {
                format!("{}+{}i", format_f64(z.re), format_f64(z.im))
            }
        }
    }
}

/// Parse one scalar; accepts `a`, `a+bi`, and `a-bi`.
pub fn parse_scalar<K: Scalar>(token: &str) -> Result<K, FormatError> {
    let t = token.trim();
    if t.is_empty() {
        return Err(FormatError::BadScalar(token.to_string()));
    }
    let bad = || FormatError::BadScalar(token.to_string());
    let z = if let Some(body) = t.strip_suffix(['i', 'I']) {
        // locate the sign splitting real and imaginary parts
        let bytes = body.as_bytes();
        let mut split = None;
        for i in (1..bytes.len()).rev() {
            let c = bytes[i] as char;
            if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
                split = Some(i);
                break;
            }
        }
        let i = split.ok_or_else(bad)?;
        let re: f64 = body[..i].parse().map_err(|_| bad())?;
        let sign = if bytes[i] as char == '-' { -1.0 } else { 1.0 };
        let im: f64 = body[i + 1..].parse().map_err(|_| bad())?;
        Complex64::new(re, sign * im)
    } else {
        Complex64::new(t.parse().map_err(|_| bad())?, 0.0)
    };
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(FormatError::NonFinite);
    }
    if K::FIELD == Field::Real && z.im != 0.0 {
        return Err(FormatError::BadScalar(token.to_string()));
    }
    Ok(K::from_c64(z))
}

/// Render a matrix in mtx-simple.
pub fn write_matrix<K: Scalar>(m: &DMatrix<K>) -> String {
    let mut out = format!("{} {} {}\n", m.nrows(), m.ncols(), K::FIELD.name());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_scalar(m[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Field tag of an mtx-simple document without committing to a scalar type.
pub fn peek_field(text: &str) -> Result<Field, FormatError> {
    let first = text.lines().next().ok_or(FormatError::Empty)?;
    let parts: Vec<&str> = first.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(FormatError::BadHeader(first.to_string()));
    }
    Field::parse(parts[2]).ok_or_else(|| FormatError::BadHeader(first.to_string()))
}

/// Parse an mtx-simple document into a typed matrix.
pub fn parse_matrix<K: Scalar>(text: &str) -> Result<DMatrix<K>, FormatError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or(FormatError::Empty)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(FormatError::BadHeader(header.to_string()));
    }
    let rows: usize = parts[0]
        .parse()
        .map_err(|_| FormatError::BadHeader(header.to_string()))?;
    let cols: usize = parts[1]
        .parse()
        .map_err(|_| FormatError::BadHeader(header.to_string()))?;
    let field = Field::parse(parts[2]).ok_or_else(|| FormatError::BadHeader(header.to_string()))?;
    if field != K::FIELD {
        return Err(FormatError::FieldMismatch {
            file: field,
            expected: K::FIELD,
        });
    }
    let mut entries: Vec<K> = Vec::with_capacity(rows * cols);
    let mut found_rows = 0;
    for (i, line) in lines.enumerate() {
        if i >= rows {
            return Err(FormatError::BadRowCount {
                expected: rows,
                found: i + 1,
            });
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != cols {
            return Err(FormatError::BadRowLength {
                row: i,
                expected: cols,
                found: tokens.len(),
            });
        }
        for tok in tokens {
            entries.push(parse_scalar::<K>(tok)?);
        }
        found_rows += 1;
    }
    if found_rows != rows {
        return Err(FormatError::BadRowCount {
            expected: rows,
            found: found_rows,
        });
    }
    let m = DMatrix::from_row_slice(rows, cols, &entries);
    validate_finite(&m)?;
    Ok(m)
}

/// Vectors are stored as d×1 matrices.
pub fn write_vector<K: Scalar>(v: &DVector<K>) -> String {
    write_matrix(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn parse_vector<K: Scalar>(text: &str) -> Result<DVector<K>, FormatError> {
    let m = parse_matrix::<K>(text)?;
    if m.ncols() != 1 {
        return Err(FormatError::BadValue {
            key: "vector".into(),
            detail: format!("expected a single column, found {}", m.ncols()),
        });
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}

/// One mtx-simple row line (entries only, no header). Used inside gframe-json
/// payloads.
pub fn format_row<K: Scalar>(row: &[K]) -> String {
    row.iter()
        .map(|&v| format_scalar(v))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_row<K: Scalar>(line: &str) -> Result<Vec<K>, FormatError> {
    line.split_whitespace().map(parse_scalar::<K>).collect()
}

/// 8-bit binary (P5) grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, FormatError> {
        if pixels.len() != width * height {
            return Err(FormatError::BadPgm(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Result<Self, FormatError> {
        let pixels = values
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        Pgm::new(width, height, pixels)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(data: &[u8]) -> Result<Self, FormatError> {
        let bad = |msg: &str| FormatError::BadPgm(msg.to_string());
        let mut pos = 0;
        let mut token = |data: &[u8]| -> Result<String, FormatError> {
            // skip whitespace and comments
            loop {
                while pos < data.len() && data[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < data.len() && data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(FormatError::BadPgm("truncated header".into()));
            }
            Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
        };
        if token(data)? != "P5" {
            return Err(bad("not a P5 pgm"));
        }
        let width: usize = token(data)?.parse().map_err(|_| bad("bad width"))?;
        let height: usize = token(data)?.parse().map_err(|_| bad("bad height"))?;
        let maxval: usize = token(data)?.parse().map_err(|_| bad("bad maxval"))?;
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit pgm supported"));
        }
        pos += 1; // single whitespace after maxval
        if data.len() < pos + width * height {
            return Err(bad("truncated pixel data"));
        }
        Pgm::new(width, height, data[pos..pos + width * height].to_vec())
    }
}

/// Write CSV rows with a header; all values formatted shortest-round-trip.
pub fn csv_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
