//! UCR text format: one series per line, `label<delim>v1<delim>...<delim>vm`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::DataError;
use crate::scalar::Scalar;
use crate::series::{Dataset, TimeSeries};

/// Field separator of a UCR file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Comma,
    Tab,
    /// Any run of spaces or tabs.
    Whitespace,
}

impl Delimiter {
    /// Comma if any line has one, else tab, else whitespace.
    pub fn detect(text: &str) -> Self {
        if text.contains(',') {
            Delimiter::Comma
        } else if text.contains('\t') {
            Delimiter::Tab
        } else {
            Delimiter::Whitespace
        }
    }

    fn split<'a>(self, line: &'a str) -> Box<dyn Iterator<Item = &'a str> + 'a> {
        match self {
            Delimiter::Comma => Box::new(line.split(',').map(str::trim)),
            Delimiter::Tab => Box::new(line.split('\t').map(str::trim)),
            Delimiter::Whitespace => Box::new(line.split_whitespace()),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Delimiter::Comma => ",",
            Delimiter::Tab => "\t",
            Delimiter::Whitespace => " ",
        }
    }
}

impl FromStr for Delimiter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "comma" | "," => Ok(Delimiter::Comma),
            "tab" | "\t" | "\\t" => Ok(Delimiter::Tab),
            "whitespace" | "space" | " " => Ok(Delimiter::Whitespace),
            other => Err(format!(
                "unknown delimiter {other:?} (expected comma, tab or whitespace)"
            )),
        }
    }
}

impl fmt::Display for Delimiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Delimiter::Comma => "comma",
            Delimiter::Tab => "tab",
            Delimiter::Whitespace => "whitespace",
        };
        f.write_str(name)
    }
}

/// Load a UCR file, auto-detecting the delimiter unless one is given.
/// The dataset is named after the file stem.
pub fn load_ucr<T: Scalar>(path: impl AsRef<Path>, delimiter: Option<Delimiter>) -> Result<Dataset<T>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_ucr(&text, &name, delimiter)
}

/// Parse UCR text. Blank lines are skipped; line numbers in errors are 1-based
/// and count every physical line, columns count fields with the label as 1.
pub fn parse_ucr<T: Scalar>(text: &str, name: &str, delimiter: Option<Delimiter>) -> Result<Dataset<T>, DataError> {
    let delim = delimiter.unwrap_or_else(|| Delimiter::detect(text));
    let mut labels = Vec::new();
    let mut series = Vec::new();
    let mut expected: Option<usize> = None;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = delim.split(line);
        let label = fields.next().unwrap_or_default();
        if label.is_empty() {
            return Err(DataError::BadRow {
                line: line_no,
                reason: "missing class label".into(),
            });
        }
        let mut values = Vec::new();
        for (col, tok) in fields.enumerate() {
            let v = tok.parse::<T>().map_err(|_| DataError::BadNumber {
                line: line_no,
                column: col + 2,
                token: tok.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::BadNumber {
                    line: line_no,
                    column: col + 2,
                    token: tok.to_string(),
                });
            }
            values.push(v);
        }
        match expected {
            None => expected = Some(values.len()),
            Some(m) if m != values.len() => {
                return Err(DataError::RaggedRow {
                    line: line_no,
                    expected: m,
                    found: values.len(),
                })
            }
            Some(_) => {}
        }
        let ts = TimeSeries::new(values).map_err(|e| DataError::BadRow {
            line: line_no,
            reason: e.to_string(),
        })?;
        labels.push(label.to_string());
        series.push(ts);
    }

    if series.is_empty() {
        return Err(DataError::Empty);
    }
    Dataset::new(name, series, Some(labels))
}

/// Render a dataset in UCR format. Unlabelled datasets get the label `0`.
pub fn to_ucr_string<T: Scalar>(ds: &Dataset<T>, delimiter: Delimiter) -> String {
    let sep = delimiter.as_str();
    let mut out = String::new();
    for (i, s) in ds.series().iter().enumerate() {
        let label = ds.labels().map(|l| l[i].as_str()).unwrap_or("0");
        out.push_str(label);
        for v in s.values() {
            out.push_str(sep);
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_ucr<T: Scalar>(ds: &Dataset<T>, path: impl AsRef<Path>, delimiter: Delimiter) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(to_ucr_string(ds, delimiter).as_bytes()).map_err(io_err)
}
