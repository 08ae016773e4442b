use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Month;
use crate::error::{Error, Result};

/// On-disk layout of a predictor panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PanelFormat {
    /// FRED-MD style: header of mnemonics, then a row of transform codes.
    FredmdCsv,
    /// Header of mnemonics followed directly by data rows. A transform-code
    /// row is still picked up if present.
    PlainCsv,
}

/// Dated matrix of monthly series. Missing observations are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    dates: Vec<Month>,
    names: Vec<String>,
    // row-major, dates.len() x names.len()
    values: Vec<Option<f64>>,
    transform_codes: Option<Vec<i32>>,
}

impl SeriesPanel {
    pub fn new(
        dates: Vec<Month>,
        names: Vec<String>,
        values: Vec<Option<f64>>,
        transform_codes: Option<Vec<i32>>,
    ) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::Structure("no series columns".into()));
        }
        if dates.is_empty() {
            return Err(Error::Structure("no observations".into()));
        }
        if values.len() != dates.len() * k {
            return Err(Error::Dimension {
                expected: dates.len() * k,
                found: values.len(),
            });
        }
        if let Some(codes) = &transform_codes {
            if codes.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    found: codes.len(),
                });
            }
        }
        for pair in dates.windows(2) {
            if pair[1].months_since(pair[0]) != 1 {
                return Err(Error::Structure(format!(
                    "dates must be consecutive months, found {} followed by {}",
                    pair[0], pair[1]
                )));
            }
        }
        for (j, name) in names.iter().enumerate() {
            if !(0..dates.len()).any(|t| values[t * k + j].is_some()) {
                return Err(Error::Structure(format!("column {name:?} has no observations")));
            }
        }
        if let Some(v) = values.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("panel value {v}")));
        }
        Ok(Self {
            dates,
            names,
            values,
            transform_codes,
        })
    }

    pub fn dates(&self) -> &[Month] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn transform_codes(&self) -> Option<&[i32]> {
        self.transform_codes.as_deref()
    }

    pub fn num_series(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn first_date(&self) -> Month {
        self.dates[0]
    }

    pub fn last_date(&self) -> Month {
        self.dates[self.dates.len() - 1]
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.names.len() + col]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownSeries(name.to_string()))
    }

    pub fn column(&self, col: usize) -> Vec<Option<f64>> {
        (0..self.len()).map(|t| self.get(t, col)).collect()
    }

    pub fn row_of(&self, date: Month) -> Option<usize> {
        let offset = date.months_since(self.first_date());
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    /// Number of missing cells per column.
    pub fn missing_counts(&self) -> Vec<usize> {
        (0..self.num_series())
            .map(|j| (0..self.len()).filter(|&t| self.get(t, j).is_none()).count())
            .collect()
    }

    /// Restricts the panel to dates in `[start, end]`.
    pub fn slice(&self, start: Option<Month>, end: Option<Month>) -> Result<Self> {
        let lo = start.map_or(0, |s| s.months_since(self.first_date()).max(0) as usize);
        let hi = end.map_or(self.len(), |e| {
            (e.months_since(self.first_date()) + 1).clamp(0, self.len() as i32) as usize
        });
        if lo >= hi {
            return Err(Error::Structure("date slice selects no observations".into()));
        }
        let k = self.num_series();
        Self::new(
            self.dates[lo..hi].to_vec(),
            self.names.clone(),
            self.values[lo * k..hi * k].to_vec(),
            self.transform_codes.clone(),
        )
    }

    /// Keeps only the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<Vec<_>>>()?;
        let values = (0..self.len())
            .flat_map(|t| idx.iter().map(move |&j| (t, j)))
            .map(|(t, j)| self.get(t, j))
            .collect();
        let codes = self
            .transform_codes
            .as_ref()
            .map(|c| idx.iter().map(|&j| c[j]).collect());
        Self::new(self.dates.clone(), names.to_vec(), values, codes)
    }
}

fn is_missing_token(s: &str) -> bool {
    matches!(s, "" | "NA" | "NaN" | "nan" | "." | "#N/A")
}

/// Reads a monthly panel from CSV. The first column holds dates; the header
/// row holds series mnemonics.
pub fn load_panel(path: impl AsRef<Path>, format: PanelFormat) -> Result<SeriesPanel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_panel(&text, format).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        Error::EmptyFile { .. } => Error::EmptyFile {
            path: path.to_path_buf(),
        },
        other => other,
    })
}

/// Parses panel CSV text. Row numbers in errors are 1-based file lines.
pub fn parse_panel(text: &str, format: PanelFormat) -> Result<SeriesPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|source| Error::Csv {
            path: Default::default(),
            source,
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        // trailing separator-only lines are common in exported spreadsheets
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push((line, rec));
    }
    let mut rows = records.into_iter();
    let (_, header) = rows.next().ok_or(Error::EmptyFile {
        path: Default::default(),
    })?;
    let width = header.len();
    if width < 2 {
        return Err(Error::Structure("header needs a date column and at least one series".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut rows = rows.peekable();
    let mut transform_codes = None;
    if let Some((line, rec)) = rows.peek() {
        let first = rec.get(0).unwrap_or("");
        if first.parse::<Month>().is_err() {
            let (line, rec) = (*line, rec.clone());
            rows.next();
            check_width(line, &rec, width)?;
            let codes = rec
                .iter()
                .skip(1)
                .zip(&names)
                .map(|(cell, name)| {
                    cell.parse::<f64>()
                        .ok()
                        .filter(|c| c.fract() == 0.0)
                        .map(|c| c as i32)
                        .ok_or_else(|| Error::ValueParse {
                            row: line,
                            column: name.clone(),
                            value: cell.to_string(),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            transform_codes = Some(codes);
        }
    }
    if format == PanelFormat::FredmdCsv && transform_codes.is_none() {
        return Err(Error::Structure("fredmd-csv requires a transform-code row after the header".into()));
    }

    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rows {
        check_width(line, &rec, width)?;
        let cell = rec.get(0).unwrap_or("");
        let date = cell.parse::<Month>().map_err(|_| Error::DateParse {
            row: line,
            value: cell.to_string(),
        })?;
        dates.push(date);
        for (cell, name) in rec.iter().skip(1).zip(&names) {
            if is_missing_token(cell) {
                values.push(None);
            } else {
                let v = cell.parse::<f64>().map_err(|_| Error::ValueParse {
                    row: line,
                    column: name.clone(),
                    value: cell.to_string(),
                })?;
                values.push(if v.is_nan() { None } else { Some(v) });
            }
        }
    }
    if dates.is_empty() {
        return Err(Error::EmptyFile {
            path: Default::default(),
        });
    }
    SeriesPanel::new(dates, names, values, transform_codes)
}

fn check_width(line: usize, rec: &csv::StringRecord, width: usize) -> Result<()> {
    if rec.len() != width {
        return Err(Error::RaggedRow {
            row: line,
            expected: width,
            found: rec.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_csv_three_columns() {
        let text = "date,A,B,C\n2000-01,1,2,3\n2000-02,4,5,6\n2000-03,7,8,9\n2000-04,1,1,1\n";
        let p = parse_panel(text, PanelFormat::PlainCsv).unwrap();
        assert_eq!(p.num_series(), 3);
        assert_eq!(p.len(), 4);
        assert_eq!(p.get(1, 2), Some(6.0));
        assert!(p.transform_codes().is_none());
    }

    #[test]
    fn fredmd_codes_row_is_not_data() {
        // Five file rows: header, codes, three dated observations.
        let text = "sasdate,RPI,UNRATE\nTransform:,5,2\n1/1/1959,2437.296,6.0\n2/1/1959,2446.902,5.9\n3/1/1959,2462.689,5.6\n";
        let p = parse_panel(text, PanelFormat::FredmdCsv).unwrap();
        assert_eq!(p.transform_codes(), Some(&[5, 2][..]));
        assert_eq!(p.len(), 3);
        assert_eq!(p.first_date().to_string(), "1959-01");
        assert_eq!(p.get(0, 0), Some(2437.296));
        assert_eq!(p.get(2, 1), Some(5.6));
    }

    #[test]
    fn blank_cell_is_missing() {
        let text = "date,A,B\n2000-01,1,\n2000-02,2,3\n";
        let p = parse_panel(text, PanelFormat::PlainCsv).unwrap();
        assert_eq!(p.get(0, 1), None);
        assert_eq!(p.missing_counts(), vec![0, 1]);
    }

    #[test]
    fn bad_date_names_row() {
        let text = "date,A\n2000-01,1\n2000-0x,2\n";
        match parse_panel(text, PanelFormat::PlainCsv) {
            Err(Error::DateParse { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_row_rejected() {
        let text = "date,A,B\n2000-01,1,2\n2000-02,3\n";
        assert!(matches!(
            parse_panel(text, PanelFormat::PlainCsv),
            Err(Error::RaggedRow { row: 3, expected: 3, found: 2 })
        ));
    }

    #[test]
    fn empty_file_rejected() {
        assert!(matches!(parse_panel("", PanelFormat::PlainCsv), Err(Error::EmptyFile { .. })));
        assert!(matches!(parse_panel("date,A\n", PanelFormat::PlainCsv), Err(Error::EmptyFile { .. })));
    }

    #[test]
    fn gaps_and_empty_columns_rejected() {
        let gap = "date,A\n2000-01,1\n2000-03,2\n";
        assert!(matches!(parse_panel(gap, PanelFormat::PlainCsv), Err(Error::Structure(_))));
        let empty_col = "date,A,B\n2000-01,1,\n2000-02,2,\n";
        assert!(matches!(parse_panel(empty_col, PanelFormat::PlainCsv), Err(Error::Structure(_))));
    }

    #[test]
    fn fredmd_without_codes_rejected() {
        let text = "date,A\n2000-01,1\n";
        assert!(parse_panel(text, PanelFormat::FredmdCsv).is_err());
    }

    #[test]
    fn slice_and_select() {
        let text = "date,A,B\n2000-01,1,2\n2000-02,3,4\n2000-03,5,6\n";
        let p = parse_panel(text, PanelFormat::PlainCsv).unwrap();
        let s = p.slice(Some("2000-02".parse().unwrap()), None).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(0, 0), Some(3.0));
        let c = p.select_columns(&["B".to_string()]).unwrap();
        assert_eq!(c.column(0), vec![Some(2.0), Some(4.0), Some(6.0)]);
    }
}
