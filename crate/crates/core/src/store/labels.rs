use std::path::Path;

use crate::error::{Error, Result};

/// One class index per image row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                num_classes,
            });
        }
        Ok(LabelVector {
            labels,
            num_classes,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Parses a label file: one non-negative class index per line. Blank lines
/// and lines starting with `#` are ignored.
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let label = line.parse::<usize>().map_err(|e| Error::Labels {
            line: i + 1,
            message: format!("{line:?}: {e}"),
        })?;
        out.push(label);
    }
    Ok(out)
}

/// Reads a label file. When `num_classes` is `None` it is taken as the
/// largest label plus one.
pub fn read_labels(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels = parse_labels(&text)?;
    if labels.is_empty() {
        return Err(Error::Labels {
            line: 0,
            message: "no labels".into(),
        });
    }
    let n = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    LabelVector::new(labels, n)
}
