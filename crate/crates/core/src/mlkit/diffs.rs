use serde::{Deserialize, Serialize};

use super::{MlError, Predictions, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffFlag {
    /// Wrong before, right after.
    Fixed,
    /// Right before, wrong after.
    Broken,
    BothWrongChanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordDiff {
    pub row: usize,
    pub before: String,
    pub after: String,
    pub truth: String,
    pub flag: DiffFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffFilter {
    #[default]
    All,
    Fixed,
    Broken,
}

impl DiffFilter {
    pub fn keeps(self, d: &RecordDiff) -> bool {
        match self {
            DiffFilter::All => true,
            DiffFilter::Fixed => d.flag == DiffFlag::Fixed,
            DiffFilter::Broken => d.flag == DiffFlag::Broken,
        }
    }
}

impl std::str::FromStr for DiffFilter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Self::All),
            "fixed" => Ok(Self::Fixed),
            "broken" => Ok(Self::Broken),
            other => Err(format!("unknown diff filter '{other}'")),
        }
    }
}

/// Rows whose prediction changed between two runs, classification only.
pub fn record_diffs(
    before: &Predictions,
    after: &Predictions,
    truth: &[String],
) -> Result<Vec<RecordDiff>> {
    let (Predictions::Classification(b), Predictions::Classification(a)) = (before, after) else {
        return Err(MlError::UnsupportedTask);
    };
    if b.len() != a.len() {
        return Err(MlError::LengthMismatch(b.len(), a.len()));
    }
    if b.len() != truth.len() {
        return Err(MlError::LengthMismatch(b.len(), truth.len()));
    }
    Ok((0..b.len())
        .filter(|&i| b[i] != a[i])
        .map(|i| {
            let flag = if a[i] == truth[i] {
                DiffFlag::Fixed
            } else if b[i] == truth[i] {
                DiffFlag::Broken
            } else {
                DiffFlag::BothWrongChanged
            };
            RecordDiff {
                row: i,
                before: b[i].clone(),
                after: a[i].clone(),
                truth: truth[i].clone(),
                flag,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cls(v: &[&str]) -> Predictions {
        Predictions::Classification(v.iter().map(|s| s.to_string()).collect())
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_predictions_have_no_diff() {
        assert!(
            record_diffs(&cls(&["A", "B"]), &cls(&["A", "B"]), &strings(&["A", "A"]))
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn fixed_broken_and_both_wrong() {
        let d = record_diffs(
            &cls(&["A", "B", "C", "A"]),
            &cls(&["B", "B", "A", "C"]),
            &strings(&["B", "B", "C", "B"]),
        )
        .unwrap();
        let flags: Vec<(usize, DiffFlag)> = d.iter().map(|d| (d.row, d.flag)).collect();
        assert_eq!(
            flags,
            vec![
                (0, DiffFlag::Fixed),
                (2, DiffFlag::Broken),
                (3, DiffFlag::BothWrongChanged)
            ]
        );
        assert_eq!(d.iter().filter(|x| DiffFilter::Fixed.keeps(x)).count(), 1);
    }

    #[test]
    fn regression_and_length_errors() {
        let r = Predictions::Regression(vec![1.0]);
        assert!(matches!(
            record_diffs(&r, &r, &strings(&["1"])),
            Err(MlError::UnsupportedTask)
        ));
        assert!(matches!(
            record_diffs(&cls(&["A"]), &cls(&["A", "B"]), &strings(&["A"])),
            Err(MlError::LengthMismatch(1, 2))
        ));
    }
}
