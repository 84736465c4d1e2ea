//! Trial datasets: sequences of `(u, s)` records collected under one regime.

use std::collections::BTreeSet;

use crate::error::{check_len, Error, Result};
use crate::model::{Sample, TrialId};

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Control input (target joint angles, rad).
    pub u: Vec<f64>,
    /// Sensor state: embedding followed by joint torques.
    pub s: Vec<f64>,
}

/// All records of one trial. The label is free-form metadata (for example
/// `E1-B0`) and is never read by training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    pub id: TrialId,
    pub label: String,
    pub records: Vec<Record>,
}

impl TrialDataset {
    pub fn new(id: TrialId, label: impl Into<String>, records: Vec<Record>) -> Result<Self> {
        let t = Self {
            id,
            label: label.into(),
            records,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.records.first().ok_or(Error::Empty("trial"))?;
        for r in &self.records {
            check_len("trial control input", first.u.len(), r.u.len())?;
            check_len("trial sensor state", first.s.len(), r.s.len())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_u(&self) -> usize {
        self.records.first().map_or(0, |r| r.u.len())
    }

    pub fn n_s(&self) -> usize {
        self.records.first().map_or(0, |r| r.s.len())
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample<'_>> {
        self.records.iter().map(move |r| Sample {
            u: &r.u,
            s: &r.s,
            trial: self.id,
        })
    }

    /// Consecutive sub-trials of `size` records (the last may be shorter).
    pub fn chunks(&self, size: usize) -> Vec<TrialDataset> {
        self.records
            .chunks(size.max(1))
            .map(|c| TrialDataset {
                id: self.id,
                label: self.label.clone(),
                records: c.to_vec(),
            })
            .collect()
    }
}

/// The trials a model is trained on, one parametric bias each.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub trials: Vec<TrialDataset>,
}

impl TrainingSet {
    pub fn new(trials: Vec<TrialDataset>) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let mut seen = BTreeSet::new();
        for t in &trials {
            t.validate()?;
            if !seen.insert(t.id) {
                return Err(Error::InvalidConfig(format!("duplicate trial id {}", t.id)));
            }
            check_len("trial control input", trials[0].n_u(), t.n_u())?;
            check_len("trial sensor state", trials[0].n_s(), t.n_s())?;
        }
        Ok(Self { trials })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn record_count(&self) -> usize {
        self.trials.iter().map(TrialDataset::len).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = (&[f64], &[f64])> + Clone {
        self.trials
            .iter()
            .flat_map(|t| t.records.iter().map(|r| (r.u.as_slice(), r.s.as_slice())))
    }

    pub fn trial(&self, id: TrialId) -> Option<&TrialDataset> {
        self.trials.iter().find(|t| t.id == id)
    }

    pub fn by_label(&self, label: &str) -> Option<&TrialDataset> {
        self.trials.iter().find(|t| t.label == label)
    }
}
