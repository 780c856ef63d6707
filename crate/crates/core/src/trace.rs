//! Per-iteration training log.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub values: Vec<f64>,
}

/// Rows of named metrics keyed by iteration (or communication round).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundTrace {
    pub columns: Vec<String>,
    pub rows: Vec<TraceRow>,
    /// Loss of the initial state, before the first iteration.
    pub initial_loss: Option<f64>,
}

impl RoundTrace {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            initial_loss: None,
        }
    }

    pub fn push(&mut self, iter: usize, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(TraceRow { iter, values });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r.values[j]).collect())
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        let j = self.column_index(name)?;
        self.rows.last().map(|r| r.values[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_lookup() {
        let mut t = RoundTrace::new(&["loss", "sigma"]);
        t.push(1, alloc::vec![3.0, 0.5]);
        t.push(2, alloc::vec![2.0, 0.4]);
        assert_eq!(t.column("sigma").unwrap(), alloc::vec![0.5, 0.4]);
        assert_eq!(t.last("loss"), Some(2.0));
        assert!(t.column("nope").is_none());
    }
}
