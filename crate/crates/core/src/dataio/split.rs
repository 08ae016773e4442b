use serde::{Deserialize, Serialize};

use super::{Month, SupervisedDataset};
use crate::error::{Error, Result};

/// Out-of-sample split, defined on the forecast date `T + h`.
///
/// Validation covers targets dated in `(t1, t2]`, test covers `(t2, t3]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub t1: Month,
    pub t2: Month,
    pub t3: Month,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    InSample,
    Validation,
    Test,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::InSample => "insample",
            Segment::Validation => "validation",
            Segment::Test => "test",
        }
    }
}

impl std::fmt::Display for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Segment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "insample" => Ok(Segment::InSample),
            "validation" => Ok(Segment::Validation),
            "test" => Ok(Segment::Test),
            other => Err(format!("unknown segment {other:?}")),
        }
    }
}

impl SplitSpec {
    /// Checks ordering and that every boundary lies inside `[first, last]`.
    pub fn validate(&self, first: Month, last: Month) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Split("horizon must be positive".into()));
        }
        if self.t1 == self.t2 {
            return Err(Error::Split(format!("T1 = T2 = {} leaves an empty validation segment", self.t1)));
        }
        if !(self.t1 < self.t2 && self.t2 < self.t3) {
            return Err(Error::Split(format!(
                "need T1 < T2 < T3, got {} / {} / {}",
                self.t1, self.t2, self.t3
            )));
        }
        for (name, d) in [("T1", self.t1), ("T2", self.t2), ("T3", self.t3)] {
            if d < first || d > last {
                return Err(Error::Split(format!("{name} = {d} outside the data range {first}..{last}")));
            }
        }
        if self.t1.months_since(first) < self.horizon as i32 {
            return Err(Error::Split(format!(
                "T1 = {} leaves no training observation for horizon {}",
                self.t1, self.horizon
            )));
        }
        Ok(())
    }

    pub fn segment_of(&self, target_date: Month) -> Segment {
        if target_date <= self.t1 {
            Segment::InSample
        } else if target_date <= self.t2 {
            Segment::Validation
        } else {
            Segment::Test
        }
    }
}

/// One step of the expanding-window recursion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    /// Forecast origin `T`; training uses targets dated `<= T`.
    pub origin: Month,
    pub origin_row: usize,
    pub target_date: Month,
    pub segment: Segment,
}

/// Expanding windows whose forecast date runs from `t1 + h` through `t3`.
pub fn expanding_windows(dataset: &SupervisedDataset, split: &SplitSpec) -> Result<Vec<Window>> {
    if split.horizon != dataset.horizon() {
        return Err(Error::Split(format!(
            "split horizon {} differs from dataset horizon {}",
            split.horizon,
            dataset.horizon()
        )));
    }
    let first = dataset.dates()[0];
    let last_target = (0..dataset.len())
        .rev()
        .find(|&r| dataset.target(r).is_some())
        .map(|r| dataset.target_date(r))
        .ok_or(Error::Empty("observed targets"))?;
    split.validate(first, last_target)?;
    let h = split.horizon as i32;
    let mut windows = Vec::new();
    let mut origin = split.t1;
    while origin.add_months(h) <= split.t3 {
        let origin_row = dataset
            .row_of(origin)
            .ok_or_else(|| Error::Split(format!("origin {origin} not in dataset")))?;
        let target_date = origin.add_months(h);
        windows.push(Window {
            origin,
            origin_row,
            target_date,
            segment: split.segment_of(target_date),
        });
        origin = origin.add_months(1);
    }
    if dataset.training_rows(split.t1).is_empty() {
        return Err(Error::Split(format!("no observed target on or before T1 = {}", split.t1)));
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn month(s: &str) -> Month {
        s.parse().unwrap()
    }

    fn dataset(start: &str, end: &str, h: usize) -> SupervisedDataset {
        let s = month(start);
        let n = month(end).months_since(s) as usize + 1 - h;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        SupervisedDataset::from_dense(s, vec!["x".into()], &rows, &y, h).unwrap()
    }

    #[test]
    fn monthly_baseline_split() {
        let d = dataset("1960-02", "2024-01", 1);
        let split = SplitSpec {
            t1: month("1980-01"),
            t2: month("2000-01"),
            t3: month("2024-01"),
            horizon: 1,
        };
        let w = expanding_windows(&d, &split).unwrap();
        assert_eq!(w[0].origin, month("1980-01"));
        assert_eq!(w[0].target_date, month("1980-02"));
        let val: Vec<_> = w.iter().filter(|w| w.segment == Segment::Validation).collect();
        assert_eq!(val.last().unwrap().target_date, month("2000-01"));
        assert_eq!(w.last().unwrap().target_date, month("2024-01"));
        assert!(w.iter().all(|w| w.segment != Segment::InSample));
        // training sample grows by one each step
        let counts: Vec<usize> = w.iter().map(|w| d.training_rows(w.origin).len()).collect();
        assert!(counts.windows(2).all(|c| c[1] == c[0] + 1));
    }

    #[test]
    fn annual_horizon_last_origin() {
        let d = dataset("1960-02", "2024-12", 12);
        let split = SplitSpec {
            t1: month("1980-01"),
            t2: month("2000-01"),
            t3: month("2024-12"),
            horizon: 12,
        };
        let w = expanding_windows(&d, &split).unwrap();
        assert_eq!(w[0].target_date, month("1981-01"));
        assert_eq!(w.last().unwrap().origin, month("2023-12"));
    }

    #[test]
    fn degenerate_splits_rejected() {
        let d = dataset("1960-02", "2024-01", 1);
        let mut split = SplitSpec {
            t1: month("1980-01"),
            t2: month("1980-01"),
            t3: month("2024-01"),
            horizon: 1,
        };
        assert!(matches!(expanding_windows(&d, &split), Err(Error::Split(_))));
        split.t2 = month("2000-01");
        split.t3 = month("2024-12");
        assert!(matches!(expanding_windows(&d, &split), Err(Error::Split(_))));
    }
}
