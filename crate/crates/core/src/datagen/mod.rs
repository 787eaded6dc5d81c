//! Datasets, synthetic piecewise targets and CSV ingestion.

mod csvio;
mod synthetic;

pub use csvio::{load_csv, read_dataset_csv, read_inputs_csv, write_dataset_csv, ColumnSpec, SplitSpec};
pub use synthetic::{generate, generate_with_projection, synth_target, Projection, Subpattern, SyntheticSpec};

use crate::error::{PcnnError, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Input rows paired with target rows, with optional part labels and a
/// train/test tag per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    targets: Matrix,
    part_labels: Option<Vec<usize>>,
    split: Vec<Split>,
}

impl Dataset {
    /// All rows start in the training split.
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(PcnnError::DimensionMismatch(format!(
                "{} input rows vs {} target rows",
                inputs.rows(),
                targets.rows()
            )));
        }
        let n = inputs.rows();
        Ok(Dataset {
            inputs,
            targets,
            part_labels: None,
            split: vec![Split::Train; n],
        })
    }

    pub fn with_part_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(PcnnError::DimensionMismatch(format!(
                "{} part labels for {} rows",
                labels.len(),
                self.len()
            )));
        }
        self.part_labels = Some(labels);
        Ok(self)
    }

    pub fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.len() {
            return Err(PcnnError::DimensionMismatch(format!(
                "{} split tags for {} rows",
                split.len(),
                self.len()
            )));
        }
        self.split = split;
        Ok(self)
    }

    /// Marks the last `k` rows as test, preserving order.
    pub fn split_last(self, k: usize) -> Result<Self> {
        let n = self.len();
        if k > n {
            return Err(PcnnError::InvalidArgument(format!(
                "cannot hold out {k} of {n} rows"
            )));
        }
        let split = (0..n)
            .map(|i| if i >= n - k { Split::Test } else { Split::Train })
            .collect();
        self.with_split(split)
    }

    /// Marks `round(fraction * n)` uniformly chosen rows as test.
    pub fn split_random(self, fraction: f64, rng: &mut Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(PcnnError::InvalidArgument(format!(
                "test fraction must lie in [0, 1], got {fraction}"
            )));
        }
        let n = self.len();
        let k = (fraction * n as f64).round() as usize;
        let perm = rng.permutation(n);
        let mut split = vec![Split::Train; n];
        for &i in &perm[..k] {
            split[i] = Split::Test;
        }
        self.with_split(split)
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn part_labels(&self) -> Option<&[usize]> {
        self.part_labels.as_deref()
    }

    pub fn split_tags(&self) -> &[Split] {
        &self.split
    }

    pub fn indices_of(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    /// Rows at `idx`, in order, keeping labels and split tags.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            targets: self.targets.select_rows(idx),
            part_labels: self
                .part_labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            split: idx.iter().map(|&i| self.split[i]).collect(),
        }
    }

    pub fn train(&self) -> Dataset {
        self.subset(&self.indices_of(Split::Train))
    }

    pub fn test(&self) -> Dataset {
        self.subset(&self.indices_of(Split::Test))
    }

    /// Number of distinct part labels (`max + 1`), if labels are present.
    pub fn label_count(&self) -> Option<usize> {
        self.part_labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }
}
