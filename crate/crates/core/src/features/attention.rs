//! Attentional flow and entropy over index sets of a single attention matrix.

use crate::error::{CoreError, Result};
use crate::index::IndexSet;
use crate::model_io::AttnView;

/// Read access to one `rows x cols` attention matrix (row = attending token).
pub trait AttentionMatrix {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn weight(&self, row: usize, col: usize) -> f64;
}

impl AttentionMatrix for AttnView<'_> {
    fn rows(&self) -> usize {
        AttnView::rows(self)
    }

    fn cols(&self) -> usize {
        AttnView::cols(self)
    }

    fn weight(&self, row: usize, col: usize) -> f64 {
        self.get(row, col)
    }
}

/// Owned row-major matrix, mostly for tests and synthetic inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        DenseMatrix::new(rows.len(), cols, rows.concat())
    }
}

impl AttentionMatrix for DenseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn weight(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

/// Every row spreads its mass evenly over all `cols` positions.
#[derive(Debug, Clone, Copy)]
pub struct UniformMatrix {
    rows: usize,
    cols: usize,
}

impl UniformMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        UniformMatrix { rows, cols }
    }
}

impl AttentionMatrix for UniformMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn weight(&self, _row: usize, _col: usize) -> f64 {
        1.0 / self.cols as f64
    }
}

fn check_bounds<A: AttentionMatrix + ?Sized>(a: &A, from: &IndexSet, to: &IndexSet) -> Result<()> {
    if from.max().is_some_and(|r| r >= a.rows()) {
        return Err(CoreError::Domain(format!(
            "row set {from} outside a matrix with {} rows",
            a.rows()
        )));
    }
    if to.max().is_some_and(|c| c >= a.cols()) {
        return Err(CoreError::Domain(format!(
            "column set {to} outside a matrix with {} columns",
            a.cols()
        )));
    }
    Ok(())
}

/// Total attention mass sent from rows `from` to columns `to` (0-based).
pub fn flow<A: AttentionMatrix + ?Sized>(a: &A, from: &IndexSet, to: &IndexSet) -> Result<f64> {
    check_bounds(a, from, to)?;
    let mut total = 0.0;
    for k in from.iter() {
        for l in to.iter() {
            total += a.weight(k, l);
        }
    }
    Ok(total)
}

/// Sum over rows `from` of the Shannon entropy (nats) of each row restricted
/// to `to` and renormalized; rows with no mass on `to` contribute 0.
pub fn attn_entropy<A: AttentionMatrix + ?Sized>(a: &A, from: &IndexSet, to: &IndexSet) -> Result<f64> {
    check_bounds(a, from, to)?;
    let mut total = 0.0;
    for k in from.iter() {
        let mass: f64 = to.iter().map(|l| a.weight(k, l)).sum();
        if mass <= 0.0 {
            continue;
        }
        for l in to.iter() {
            let p = a.weight(k, l) / mass;
            if p > 0.0 {
                total -= p * p.ln();
            }
        }
    }
    Ok(total)
}

/// Ratio of a raw feature to its uniform-attention value; 0 when the
/// uniform value is 0.
pub fn normalize_feature(raw: f64, dummy: f64) -> f64 {
    if dummy == 0.0 {
        0.0
    } else {
        raw / dummy
    }
}
